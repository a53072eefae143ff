//! Steady states, propagation under e^{Lτ} and quantum-regression traces.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{DenseMatrix, OperatorMatrix, C64, ONE, ZERO};
use crate::model::Superoperator;

/// Solver settings for [`steady_state_with`].
#[derive(Clone, Debug)]
pub struct SteadyStateOptions {
    /// The residual must stay below `residual_factor * ‖L‖₁`.
    pub residual_factor: f64,
    /// Smallest eigenvalue tolerated before the state is declared unphysical.
    pub positivity_floor: f64,
    /// Re-solve with the trace constraint on a different row and compare.
    pub verify_uniqueness: bool,
    pub uniqueness_tolerance: f64,
    pub refinement_steps: usize,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions {
            residual_factor: 1e-10,
            positivity_floor: -1e-9,
            verify_uniqueness: false,
            uniqueness_tolerance: 1e-9,
            refinement_steps: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub rho: DenseMatrix,
    /// ‖L[ρ]‖ (Euclidean norm of the vectorized residual).
    pub residual: f64,
    pub trace_error: f64,
    /// max |ρ − ρ†| before symmetrization.
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

impl SteadyState {
    pub fn expect(&self, op: &OperatorMatrix) -> C64 {
        op.trace_with(&self.rho)
    }
}

pub fn steady_state(l: &Superoperator) -> Result<SteadyState> {
    steady_state_with(l, &SteadyStateOptions::default())
}

/// Solves L[ρ] = 0 with Tr ρ = 1 by sparse LU, replacing one row of L by the
/// trace functional.
pub fn steady_state_with(l: &Superoperator, opts: &SteadyStateOptions) -> Result<SteadyState> {
    let d = l.hilbert_dim();
    let norm = l.norm_one();
    let mut x = constrained_solve(l, 0, opts.refinement_steps)?;
    if opts.verify_uniqueness {
        let other = constrained_solve(l, d * d - 1, opts.refinement_steps)?;
        let diff = x.iter().zip(&other).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if diff > opts.uniqueness_tolerance {
            return Err(Error::DegenerateKernel {
                detail: format!("steady states from two constraint rows differ by {diff:e}"),
            });
        }
    }
    let trace: C64 = (0..d).map(|i| x[i + d * i]).sum();
    if !(trace.norm() > 0.0) {
        return Err(Error::DegenerateKernel {
            detail: "solution has zero trace".into(),
        });
    }
    x.iter_mut().for_each(|v| *v /= trace);
    let mut rho = DenseMatrix::from_column_stacked(d, x)?;
    let hermiticity = rho.hermiticity_defect();
    rho.hermitize();
    let residual = vector_norm(&l.apply(rho.as_slice()));
    let tolerance = opts.residual_factor * norm;
    if !residual.is_finite() {
        return Err(Error::DegenerateKernel {
            detail: "non-finite steady state".into(),
        });
    }
    if residual > tolerance {
        return Err(Error::SolverNonConvergence { residual, tolerance });
    }
    let trace_error = (rho.trace() - ONE).norm();
    let min_eigenvalue = rho.hermitian_eigenvalues()[0];
    if min_eigenvalue < opts.positivity_floor {
        return Err(Error::NotPositive { min_eigenvalue });
    }
    Ok(SteadyState {
        rho,
        residual,
        trace_error,
        hermiticity,
        min_eigenvalue,
    })
}

fn constrained_solve(l: &Superoperator, row: usize, refinement: usize) -> Result<Vec<C64>> {
    let d = l.hilbert_dim();
    let n = d * d;
    let mut triplets: Vec<Triplet<usize, usize, C64>> = l
        .matrix()
        .triplets()
        .filter(|&(r, _, _)| r != row)
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    triplets.extend((0..d).map(|i| Triplet::new(row, i + d * i, ONE)));
    let mat = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &triplets).map_err(|e| {
        Error::DegenerateKernel {
            detail: format!("sparse assembly failed: {e:?}"),
        }
    })?;
    let lu = mat.sp_lu().map_err(|e| Error::DegenerateKernel {
        detail: format!("LU factorization failed: {e:?}"),
    })?;
    let mut rhs = faer::Col::<C64>::zeros(n);
    rhs[row] = ONE;
    let mut sol = lu.solve(&rhs);
    for _ in 0..refinement {
        let ax = &mat * &sol;
        let r = &rhs - &ax;
        sol += lu.solve(&r);
    }
    let out: Vec<C64> = (0..n).map(|i| sol[i]).collect();
    if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::DegenerateKernel {
            detail: "LU solve produced non-finite entries; the kernel is not one-dimensional".into(),
        });
    }
    Ok(out)
}

fn vector_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Tolerances for the adaptive Dormand–Prince integrator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropagationOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 5_000_000,
        }
    }
}

/// Checks that a τ grid is non-empty, finite, non-negative and sorted.
pub fn validate_tau_grid(tau: &[f64]) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::InvalidGrid("tau grid is empty".into()));
    }
    if tau.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidGrid("tau values must be finite and non-negative".into()));
    }
    if tau.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidGrid("tau grid must be sorted".into()));
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau. The generator is autonomous, so the nodes c_i
// are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Several vectorized operators advanced together with shared steps, so
/// linear relations between them survive the integration exactly.
struct Block {
    len: usize,
    count: usize,
    data: Vec<C64>,
}

impl Block {
    fn zeros(len: usize, count: usize) -> Self {
        Block {
            len,
            count,
            data: vec![ZERO; len * count],
        }
    }

    fn member(&self, k: usize) -> &[C64] {
        &self.data[k * self.len..(k + 1) * self.len]
    }

    fn apply(&self, l: &Superoperator, out: &mut Block) {
        for k in 0..self.count {
            let (src, dst) = (k * self.len, (k + 1) * self.len);
            l.apply_into(&self.data[src..dst], &mut out.data[src..dst]);
        }
    }
}

/// Advances each vector of `block` under dX/dτ = L X and calls `observe`
/// with the grid index and the current vectors at every grid point.
///
/// The first grid point may be 0, in which case the inputs are observed
/// unchanged.
pub fn propagate_observed<F>(
    l: &Superoperator,
    block: Vec<Vec<C64>>,
    tau_grid: &[f64],
    opts: &PropagationOptions,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(usize, &[&[C64]]) -> Result<()>,
{
    validate_tau_grid(tau_grid)?;
    let n = l.dim();
    if let Some(bad) = block.iter().find(|v| v.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.len(),
        });
    }
    let count = block.len();
    let mut y = Block::zeros(n, count);
    for (k, v) in block.into_iter().enumerate() {
        y.data[k * n..(k + 1) * n].copy_from_slice(&v);
    }
    let emit = |y: &Block, idx: usize, observe: &mut F| -> Result<()> {
        let views: Vec<&[C64]> = (0..y.count).map(|k| y.member(k)).collect();
        observe(idx, &views)
    };

    let mut k: Vec<Block> = (0..7).map(|_| Block::zeros(n, count)).collect();
    let mut stage = Block::zeros(n, count);
    let mut y_new = Block::zeros(n, count);
    y.apply(l, &mut k[0]);

    let mut t = 0.0;
    let mut h = initial_step(&y, &k[0], l, opts);
    let mut err_old: f64 = 1e-4;
    let mut steps = 0usize;
    let mut rejected_last = false;

    for (idx, &target) in tau_grid.iter().enumerate() {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::Integrator {
                    tau: t,
                    step: h,
                    detail: format!("step budget of {} exhausted", opts.max_steps),
                });
            }
            let remaining = target - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { h };
            if !(step > t.abs() * f64::EPSILON * 4.0) && !last {
                return Err(Error::Integrator {
                    tau: t,
                    step,
                    detail: "step size underflow".into(),
                });
            }

            combine(&mut stage, &y, step, &[(A21, &k[0])]);
            stage.apply(l, &mut k[1]);
            combine(&mut stage, &y, step, &[(A31, &k[0]), (A32, &k[1])]);
            stage.apply(l, &mut k[2]);
            combine(&mut stage, &y, step, &[(A41, &k[0]), (A42, &k[1]), (A43, &k[2])]);
            stage.apply(l, &mut k[3]);
            combine(&mut stage, &y, step, &[(A51, &k[0]), (A52, &k[1]), (A53, &k[2]), (A54, &k[3])]);
            stage.apply(l, &mut k[4]);
            combine(
                &mut stage,
                &y,
                step,
                &[(A61, &k[0]), (A62, &k[1]), (A63, &k[2]), (A64, &k[3]), (A65, &k[4])],
            );
            stage.apply(l, &mut k[5]);
            combine(
                &mut y_new,
                &y,
                step,
                &[(B1, &k[0]), (B3, &k[2]), (B4, &k[3]), (B5, &k[4]), (B6, &k[5])],
            );
            y_new.apply(l, &mut k[6]);
            steps += 1;

            let err = error_norm(&y, &y_new, &k, step, opts);
            if !err.is_finite() {
                return Err(Error::Integrator {
                    tau: t,
                    step,
                    detail: "non-finite state".into(),
                });
            }
            // Hairer's PI step-size controller.
            let beta = 0.04;
            let fac11 = err.powf(0.2 - beta * 0.75);
            if err <= 1.0 {
                let mut fac = fac11 / err_old.powf(beta);
                fac = (fac / 0.9).clamp(0.1, 5.0);
                let mut h_next = step / fac;
                if rejected_last {
                    h_next = h_next.min(step);
                }
                err_old = err.max(1e-4);
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                rejected_last = false;
                // A step shortened to land on the grid says nothing about the
                // stable size; keep the larger of the two.
                h = if last { h_next.max(h) } else { h_next };
            } else {
                h = step / (fac11 / 0.9).min(5.0);
                rejected_last = true;
            }
        }
        emit(&y, idx, &mut observe)?;
    }
    Ok(())
}

fn combine(out: &mut Block, y: &Block, h: f64, terms: &[(f64, &Block)]) {
    let n = out.data.len();
    for i in 0..n {
        let mut acc = ZERO;
        for (c, kb) in terms {
            acc += kb.data[i] * *c;
        }
        out.data[i] = y.data[i] + acc * h;
    }
}

fn error_norm(y: &Block, y_new: &Block, k: &[Block], h: f64, opts: &PropagationOptions) -> f64 {
    let n = y.data.len();
    let mut sum = 0.0;
    for i in 0..n {
        let e = (k[0].data[i] * E1
            + k[2].data[i] * E3
            + k[3].data[i] * E4
            + k[4].data[i] * E5
            + k[5].data[i] * E6
            + k[6].data[i] * E7)
            * h;
        let scale = opts.atol + opts.rtol * y.data[i].norm().max(y_new.data[i].norm());
        sum += (e.norm() / scale).powi(2);
    }
    (sum / n.max(1) as f64).sqrt()
}

fn initial_step(y: &Block, f0: &Block, l: &Superoperator, opts: &PropagationOptions) -> f64 {
    let n = y.data.len().max(1) as f64;
    let scaled = |v: &Block| -> f64 {
        (v.data
            .iter()
            .zip(&y.data)
            .map(|(a, b)| (a.norm() / (opts.atol + opts.rtol * b.norm())).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = scaled(y);
    let d1 = scaled(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut y1 = Block::zeros(y.len, y.count);
    combine(&mut y1, y, h0, &[(1.0, f0)]);
    let mut f1 = Block::zeros(y.len, y.count);
    y1.apply(l, &mut f1);
    let mut diff = Block::zeros(y.len, y.count);
    for i in 0..diff.data.len() {
        diff.data[i] = f1.data[i] - f0.data[i];
    }
    let d2 = scaled(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

/// e^{Lτ_k} X for every grid point.
pub fn propagate_action(
    l: &Superoperator,
    x: &DenseMatrix,
    tau_grid: &[f64],
    opts: &PropagationOptions,
) -> Result<Vec<DenseMatrix>> {
    let d = l.hilbert_dim();
    if x.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.dim(),
        });
    }
    let mut out = Vec::with_capacity(tau_grid.len());
    propagate_observed(l, vec![x.as_slice().to_vec()], tau_grid, opts, |_, ys| {
        out.push(DenseMatrix::from_column_stacked(d, ys[0].to_vec())?);
        Ok(())
    })?;
    Ok(out)
}

/// Samples of Tr{M e^{Lτ} X}.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTrace {
    pub tau_grid: Vec<f64>,
    pub values: Vec<C64>,
}

pub fn regression_trace(
    l: &Superoperator,
    m: &OperatorMatrix,
    x: &DenseMatrix,
    tau_grid: &[f64],
    opts: &PropagationOptions,
) -> Result<RegressionTrace> {
    let mut traces = regression_traces(l, std::slice::from_ref(x), &[(0, m)], tau_grid, opts)?;
    Ok(RegressionTrace {
        tau_grid: tau_grid.to_vec(),
        values: traces.remove(0),
    })
}

/// Propagates every operator in `xs` together and records Tr{M e^{Lτ} X_k}
/// for each `(k, M)` pair in `observables`.
pub fn regression_traces(
    l: &Superoperator,
    xs: &[DenseMatrix],
    observables: &[(usize, &OperatorMatrix)],
    tau_grid: &[f64],
    opts: &PropagationOptions,
) -> Result<Vec<Vec<C64>>> {
    let d = l.hilbert_dim();
    for x in xs {
        if x.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.dim(),
            });
        }
    }
    for (k, m) in observables {
        if *k >= xs.len() || m.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.dim(),
            });
        }
    }
    let mut out = vec![Vec::with_capacity(tau_grid.len()); observables.len()];
    let block = xs.iter().map(|x| x.as_slice().to_vec()).collect();
    propagate_observed(l, block, tau_grid, opts, |_, ys| {
        for (slot, (k, m)) in out.iter_mut().zip(observables) {
            slot.push(m.trace_with_vec(ys[*k]));
        }
        Ok(())
    })?;
    Ok(out)
}

/// Evenly spaced grid of `count` points on [0, t_max].
pub fn linear_grid(t_max: f64, count: usize) -> Result<Vec<f64>> {
    linspace(0.0, t_max, count)
}

pub fn linspace(start: f64, stop: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::InvalidGrid(format!("cannot build {count} points on [{start}, {stop}]")));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { stop } else { start + step * i as f64 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::ModeSpace;
    use crate::model::{build_liouvillian, CavityFrame, SystemModel, SystemParams};

    fn small_model(g: f64, pump: f64) -> SystemModel {
        let p = SystemParams {
            g,
            omega_pump: pump,
            delta: 0.02,
            ..Default::default()
        };
        SystemModel::new(p, ModeSpace::new(vec![4, 3]).unwrap(), vec![], CavityFrame::Fock).unwrap()
    }

    #[test]
    fn vacuum_steady_state() {
        let p = SystemParams {
            g: 0.0,
            omega_pump: 0.0,
            temperature: Some(0.0),
            ..Default::default()
        };
        let l = build_liouvillian(&p, &ModeSpace::new(vec![4, 3]).unwrap(), &[]).unwrap();
        let ss = steady_state(&l).unwrap();
        let mut vac = DenseMatrix::zeros(12);
        *vac.get_mut(0, 0) = ONE;
        assert!(ss.rho.max_abs_diff(&vac) < 1e-12);
    }

    #[test]
    fn steady_state_invariants() {
        let model = small_model(5e-3, 0.05);
        let l = model.liouvillian();
        let opts = SteadyStateOptions {
            verify_uniqueness: true,
            ..Default::default()
        };
        let ss = steady_state_with(&l, &opts).unwrap();
        assert!(ss.trace_error < 1e-12);
        assert!(ss.hermiticity < 1e-12);
        assert!(ss.min_eigenvalue > -1e-9);
        assert!(ss.residual < 1e-10 * l.norm_one());
    }

    #[test]
    fn zero_tau_returns_input() {
        let model = small_model(5e-3, 0.05);
        let l = model.liouvillian();
        let x = DenseMatrix::from_fn(12, |i, j| C64::new(i as f64, -(j as f64)));
        let out = propagate_action(&l, &x, &[0.0], &PropagationOptions::default()).unwrap();
        assert_eq!(out, vec![x]);
    }

    #[test]
    fn grid_validation() {
        assert!(validate_tau_grid(&[]).is_err());
        assert!(validate_tau_grid(&[0.0, -1.0]).is_err());
        assert!(validate_tau_grid(&[1.0, 0.5]).is_err());
        assert!(validate_tau_grid(&[0.0, 0.0, 1.0]).is_ok());
        assert_eq!(linspace(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(linspace(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn stationarity_and_trace_conservation() {
        let model = small_model(5e-3, 0.05);
        let l = model.liouvillian();
        let ss = steady_state(&l).unwrap();
        let grid = linear_grid(200.0, 5).unwrap();
        let opts = PropagationOptions::default();
        for (k, rho) in propagate_action(&l, &ss.rho, &grid, &opts).unwrap().iter().enumerate() {
            assert!(rho.max_abs_diff(&ss.rho) < 1e-8, "point {k}");
        }
        let x = DenseMatrix::from_fn(12, |i, j| C64::new(((i + 2 * j) % 5) as f64 * 0.1, (i as f64 - j as f64) * 0.05));
        let tr = x.trace();
        for y in propagate_action(&l, &x, &grid, &opts).unwrap() {
            assert!((y.trace() - tr).norm() < 1e-10);
        }
    }

    #[test]
    fn identity_observable_gives_constant_trace() {
        let model = small_model(5e-3, 0.05);
        let l = model.liouvillian();
        let ss = steady_state(&l).unwrap();
        let grid = linear_grid(100.0, 11).unwrap();
        let opts = PropagationOptions::default();
        let id = OperatorMatrix::identity(12);
        let tr = regression_trace(&l, &id, &ss.rho, &grid, &opts).unwrap();
        assert!(tr.values.iter().all(|v| (v - ONE).norm() < 1e-10));
        let n = model.cavity_number();
        let n_ss = ss.expect(&n);
        let tr = regression_trace(&l, &n, &ss.rho, &grid, &opts).unwrap();
        assert!(tr.values.iter().all(|v| (v - n_ss).norm() < 1e-9));
    }

    #[test]
    fn semigroup_property() {
        let model = small_model(5e-3, 0.05);
        let l = model.liouvillian();
        let x = DenseMatrix::from_fn(12, |i, j| if i == j { C64::new(1.0 / 12.0, 0.0) } else { C64::new(0.01, 0.02 * (i as f64 - j as f64)) });
        let opts = PropagationOptions::default();
        let (t1, t2) = (7.5, 31.0);
        let direct = propagate_action(&l, &x, &[t1 + t2], &opts).unwrap().remove(0);
        let first = propagate_action(&l, &x, &[t1], &opts).unwrap().remove(0);
        let chained = propagate_action(&l, &first, &[t2], &opts).unwrap().remove(0);
        assert!(direct.max_abs_diff(&chained) < 1e-7);
    }
}
