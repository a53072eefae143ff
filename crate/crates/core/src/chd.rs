//! Conditional-homodyne (intensity-field) correlations.
//!
//! Quadratures follow a_φ = (a e^{−iφ} + a† e^{iφ})/2, so ⟨a_φ⟩ = Re(e^{−iφ}⟨a⟩).
//! All correlations are built from a handful of regression traces of two
//! propagated operators, Y₁ = a ρ a† and Y₂ = δa ρ, which are shared across
//! phases, branches and the emission spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{DenseMatrix, OperatorMatrix, C64};
use crate::model::Superoperator;
use crate::solver::{regression_traces, validate_tau_grid, PropagationOptions};

/// Residues above this abort the computation: they point at a convention bug.
pub const IMAGINARY_ABORT: f64 = 1e-8;
/// Relative guard on ⟨a_φ⟩ against √⟨n⟩.
pub const MEAN_FIELD_GUARD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTrace {
    pub tau_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub branch: Branch,
    pub phi: f64,
    /// ⟨a†a⟩·⟨a_φ⟩ used as the denominator.
    pub normalization: f64,
    /// Largest discarded imaginary part.
    pub max_imaginary: f64,
}

impl CorrelationTrace {
    /// Value at the first grid point, normally τ = 0.
    pub fn first(&self) -> f64 {
        self.values[0]
    }
}

/// The field mode a correlation is measured on, with its steady state and
/// generator.
#[derive(Clone, Copy)]
pub struct FieldState<'a> {
    pub liouvillian: &'a Superoperator,
    pub rho: &'a DenseMatrix,
    pub field: &'a OperatorMatrix,
}

impl<'a> FieldState<'a> {
    pub fn new(liouvillian: &'a Superoperator, rho: &'a DenseMatrix, field: &'a OperatorMatrix) -> Result<Self> {
        let d = liouvillian.hilbert_dim();
        for found in [rho.dim(), field.dim()] {
            if found != d {
                return Err(Error::DimensionMismatch { expected: d, found });
            }
        }
        Ok(FieldState {
            liouvillian,
            rho,
            field,
        })
    }

    pub fn mean(&self) -> C64 {
        self.field.trace_with(self.rho)
    }

    pub fn number(&self) -> f64 {
        self.field.adjoint().matmul(self.field).trace_with(self.rho).re
    }

    /// ⟨a⟩, ⟨n⟩ and the checked denominator ⟨n⟩⟨a_φ⟩.
    fn normalization(&self, phi: f64) -> Result<(C64, f64, f64)> {
        let alpha = self.mean();
        let n = self.number();
        let quad = (phase(-phi) * alpha).re;
        let threshold = MEAN_FIELD_GUARD * n.max(0.0).sqrt();
        if !(quad.abs() > threshold) {
            return Err(Error::VanishingDenominator {
                quantity: "<a_phi>_ss",
                value: quad.abs(),
                threshold,
            });
        }
        Ok((alpha, n, n * quad))
    }
}

pub(crate) fn phase(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

/// Regression traces shared by every CHD quantity.
#[derive(Clone, Debug)]
pub struct RawTraces {
    pub tau_grid: Vec<f64>,
    pub alpha: C64,
    pub n_mean: f64,
    /// Tr{a Y₁(τ)} and Tr{a† Y₁(τ)}.
    pub p: Vec<C64>,
    pub p_dag: Vec<C64>,
    /// Tr{n Y₂(τ)}, Tr{a† Y₂(τ)} and Tr{a Y₂(τ)}.
    pub n_y2: Vec<C64>,
    pub c_y2: Vec<C64>,
    pub e_y2: Vec<C64>,
    /// Tr{a Y₃(τ)}, Tr{a† Y₃(τ)} and Tr{Y₃(τ)} with Y₃ = δa ρ δa†, when requested.
    pub third: Option<[Vec<C64>; 3]>,
}

/// Propagates Y₁, Y₂ (and Y₃ when `with_third`) once and records every trace.
pub fn raw_traces(
    state: &FieldState,
    tau_grid: &[f64],
    with_third: bool,
    opts: &PropagationOptions,
) -> Result<RawTraces> {
    validate_tau_grid(tau_grid)?;
    let a = state.field;
    let ad = a.adjoint();
    let n_op = ad.matmul(a);
    let d = state.rho.dim();
    let alpha = state.mean();
    let n_mean = n_op.trace_with(state.rho).re;
    let id = OperatorMatrix::identity(d);
    let delta_a = a.add_scaled(&id, -alpha);

    let y1 = ad.dense_mul(&a.mul_dense(state.rho));
    let y2 = delta_a.mul_dense(state.rho);
    let mut xs = vec![y1, y2];
    let mut observables: Vec<(usize, &OperatorMatrix)> = vec![(0, a), (0, &ad), (1, &n_op), (1, &ad), (1, a)];
    if with_third {
        let y3 = delta_a.adjoint().dense_mul(&xs[1]);
        xs.push(y3);
        observables.extend([(2, a), (2, &ad), (2, &id)]);
    }
    let mut traces = regression_traces(state.liouvillian, &xs, &observables, tau_grid, opts)?.into_iter();
    let mut next = || traces.next().expect("one trace per observable");
    let (p, p_dag, n_y2, c_y2, e_y2) = (next(), next(), next(), next(), next());
    let third = if with_third { Some([next(), next(), next()]) } else { None };
    Ok(RawTraces {
        tau_grid: tau_grid.to_vec(),
        alpha,
        n_mean,
        p,
        p_dag,
        n_y2,
        c_y2,
        e_y2,
        third,
    })
}

/// Every CHD trace at one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChdTraces {
    pub positive: CorrelationTrace,
    pub negative: CorrelationTrace,
    pub h2: CorrelationTrace,
    pub h3: CorrelationTrace,
    pub hn: CorrelationTrace,
    /// h3 evaluated directly from δa ρ δa†, when requested.
    pub h3_direct: Option<CorrelationTrace>,
}

impl RawTraces {
    /// Evaluates all CHD traces at quadrature phase `phi`.
    pub fn evaluate(&self, state: &FieldState, phi: f64) -> Result<ChdTraces> {
        let (alpha, n_mean, norm) = state.normalization(phi)?;
        let (em, ep) = (phase(-phi), phase(phi));
        let len = self.tau_grid.len();
        let mut pos = Vec::with_capacity(len);
        let mut h2 = Vec::with_capacity(len);
        let mut h3 = Vec::with_capacity(len);
        let mut neg = Vec::with_capacity(len);
        let mut hn = Vec::with_capacity(len);
        let mut residue: f64 = 0.0;
        for k in 0..len {
            let full = (em * self.p[k] + ep * self.p_dag[k]) * 0.5 / norm;
            let im = full.im.abs();
            if im > IMAGINARY_ABORT {
                return Err(Error::ImaginaryResidue {
                    quantity: "h_positive",
                    residue: im,
                    tau: self.tau_grid[k],
                    bound: IMAGINARY_ABORT,
                });
            }
            residue = residue.max(im);
            let second = 2.0 * (alpha * (em * self.c_y2[k].conj() + ep * self.e_y2[k].conj()) * 0.5).re / norm;
            pos.push(full.re);
            h2.push(second);
            h3.push(full.re - 1.0 - second);
            let fluct = (em * self.n_y2[k]).re / norm;
            hn.push(fluct);
            neg.push((em * (self.n_y2[k] + alpha * n_mean)).re / norm);
        }
        let trace = |values: Vec<f64>, branch: Branch, max_imaginary: f64| CorrelationTrace {
            tau_grid: self.tau_grid.clone(),
            values,
            branch,
            phi,
            normalization: norm,
            max_imaginary,
        };
        let h3_direct = match &self.third {
            None => None,
            Some([ta, tad, tid]) => {
                let quad = (em * alpha).re;
                let mut values = Vec::with_capacity(len);
                let mut res: f64 = 0.0;
                for k in 0..len {
                    let v = ((em * ta[k] + ep * tad[k]) * 0.5 - tid[k] * quad) / norm;
                    res = res.max(v.im.abs());
                    values.push(v.re);
                }
                Some(trace(values, Branch::Positive, res))
            }
        };
        Ok(ChdTraces {
            positive: trace(pos, Branch::Positive, residue),
            negative: trace(neg, Branch::Negative, 0.0),
            h2: trace(h2, Branch::Positive, residue),
            h3: trace(h3, Branch::Positive, residue),
            hn: trace(hn, Branch::Negative, 0.0),
            h3_direct,
        })
    }

    /// Stationary fluctuation correlation ⟨δa†(τ) δa(0)⟩.
    pub fn emission_correlation(&self) -> &[C64] {
        &self.c_y2
    }
}

/// All CHD traces at phase `phi` from a single propagation.
pub fn chd_traces(state: &FieldState, phi: f64, tau_grid: &[f64], opts: &PropagationOptions) -> Result<ChdTraces> {
    state.normalization(phi)?;
    raw_traces(state, tau_grid, false, opts)?.evaluate(state, phi)
}

/// Positive-delay branch: photon detected first, field measured after τ.
pub fn h_positive(state: &FieldState, phi: f64, tau_grid: &[f64], opts: &PropagationOptions) -> Result<CorrelationTrace> {
    Ok(chd_traces(state, phi, tau_grid, opts)?.positive)
}

/// Negative-delay branch, sampled on |τ|.
pub fn h_negative(state: &FieldState, phi: f64, tau_grid: &[f64], opts: &PropagationOptions) -> Result<CorrelationTrace> {
    Ok(chd_traces(state, phi, tau_grid, opts)?.negative)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HComponents {
    pub h2: CorrelationTrace,
    pub h3: CorrelationTrace,
    pub hn: CorrelationTrace,
}

pub fn h_components(state: &FieldState, phi: f64, tau_grid: &[f64], opts: &PropagationOptions) -> Result<HComponents> {
    let t = chd_traces(state, phi, tau_grid, opts)?;
    Ok(HComponents {
        h2: t.h2,
        h3: t.h3,
        hn: t.hn,
    })
}

/// Third-order term from its own propagation of δa ρ δa†.
pub fn h3_direct(state: &FieldState, phi: f64, tau_grid: &[f64], opts: &PropagationOptions) -> Result<CorrelationTrace> {
    state.normalization(phi)?;
    let raw = raw_traces(state, tau_grid, true, opts)?;
    Ok(raw.evaluate(state, phi)?.h3_direct.expect("third-order traces requested"))
}

/// Steady-state moments of the field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub a: [f64; 2],
    pub n: f64,
    pub a2: [f64; 2],
    pub adag_n: [f64; 2],
    pub n_a: [f64; 2],
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn complex(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

impl Moments {
    pub fn from_state(rho: &DenseMatrix, a: &OperatorMatrix) -> Self {
        let ad = a.adjoint();
        let n = ad.matmul(a);
        Moments {
            a: pair(a.trace_with(rho)),
            n: n.trace_with(rho).re,
            a2: pair(a.matmul(a).trace_with(rho)),
            adag_n: pair(ad.matmul(&n).trace_with(rho)),
            n_a: pair(n.matmul(a).trace_with(rho)),
        }
    }

    pub fn alpha(&self) -> C64 {
        complex(self.a)
    }

    /// ⟨δa†δa⟩.
    pub fn fluctuation_number(&self) -> f64 {
        self.n - self.alpha().norm_sqr()
    }

    /// ⟨δa†²⟩.
    pub fn fluctuation_adag2(&self) -> C64 {
        (complex(self.a2) - self.alpha() * self.alpha()).conj()
    }

    /// ⟨δa†²δa⟩.
    pub fn fluctuation_adag2_a(&self) -> C64 {
        let alpha = self.alpha();
        let ac = alpha.conj();
        let adag2 = complex(self.a2).conj();
        complex(self.adag_n) - ac * 2.0 * self.n - alpha * (adag2 - ac * ac * 2.0)
    }

    /// ⟨δn δa⟩ = ⟨na⟩ − ⟨n⟩⟨a⟩.
    pub fn number_field_covariance(&self) -> C64 {
        complex(self.n_a) - self.alpha() * self.n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub phi: f64,
    /// Normally ordered quadrature variance V_φ.
    pub variance_phi: f64,
    pub h2: f64,
    pub h3: f64,
    pub hn: f64,
    pub moments: Moments,
}

/// Zero-delay noise terms from the steady-state moments.
pub fn noise_summary(rho: &DenseMatrix, a: &OperatorMatrix, phi: f64) -> Result<NoiseSummary> {
    if rho.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: rho.dim(),
        });
    }
    let m = Moments::from_state(rho, a);
    Ok(noise_from_moments(&m, phi))
}

pub fn noise_from_moments(m: &Moments, phi: f64) -> NoiseSummary {
    let alpha = m.alpha();
    let (em, ep) = (phase(-phi), phase(phi));
    // ⟨δa† δa_φ⟩ = (e^{−iφ}⟨δa†δa⟩ + e^{iφ}⟨δa†²⟩)/2
    let cross = (em * m.fluctuation_number() + ep * m.fluctuation_adag2()) * 0.5;
    NoiseSummary {
        phi,
        variance_phi: (ep * cross).re,
        h2: 2.0 * (alpha * cross).re,
        h3: (ep * m.fluctuation_adag2_a()).re,
        hn: (em * m.number_field_covariance()).re,
        moments: *m,
    }
}

/// Where a CHD trace breaks the classical bounds 0 ≤ h − 1 ≤ 1 and
/// |h(τ) − 1| ≤ |h(0) − 1|.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    /// τ intervals (first and last grid point of each run) with h − 1 < 0.
    pub lower_violations: Vec<(f64, f64)>,
    /// τ intervals with h − 1 > 1.
    pub upper_violations: Vec<(f64, f64)>,
    /// τ intervals with |h(τ) − 1| > |h(0) − 1|.
    pub tau_zero_violations: Vec<(f64, f64)>,
    /// h − 1 at the point of largest |h − 1|.
    pub max_excursion: f64,
    pub tau_zero_bound_violated: bool,
}

impl InequalityReport {
    pub fn is_classical(&self) -> bool {
        self.lower_violations.is_empty() && self.upper_violations.is_empty() && !self.tau_zero_bound_violated
    }
}

pub const DEFAULT_INEQUALITY_TOLERANCE: f64 = 1e-9;

pub fn inequality_check(trace: &CorrelationTrace) -> InequalityReport {
    inequality_check_with(trace, None, DEFAULT_INEQUALITY_TOLERANCE)
}

/// Checks the classical bounds. `h0` overrides the zero-delay value when the
/// grid does not start at τ = 0; `tolerance` absorbs rounding noise.
pub fn inequality_check_with(trace: &CorrelationTrace, h0: Option<f64>, tolerance: f64) -> InequalityReport {
    let mut report = InequalityReport::default();
    if trace.values.is_empty() {
        return report;
    }
    let zero = match h0 {
        Some(v) => v,
        None => trace.values[0],
    };
    let zero_dev = (zero - 1.0).abs();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut second = Vec::new();
    for &h in &trace.values {
        let dev = h - 1.0;
        if dev.abs() > report.max_excursion.abs() {
            report.max_excursion = dev;
        }
        lower.push(dev < -tolerance);
        upper.push(dev > 1.0 + tolerance);
        second.push(dev.abs() > zero_dev + tolerance);
    }
    report.lower_violations = runs(&trace.tau_grid, &lower);
    report.upper_violations = runs(&trace.tau_grid, &upper);
    report.tau_zero_violations = runs(&trace.tau_grid, &second);
    report.tau_zero_bound_violated = !report.tau_zero_violations.is_empty() || zero_dev > 1.0 + tolerance;
    report
}

/// Whether a zero-delay value lies outside 0 ≤ h − 1 ≤ 1.
pub fn zero_delay_violation(h0: f64, tolerance: f64) -> bool {
    h0 - 1.0 < -tolerance || h0 - 1.0 > 1.0 + tolerance
}

fn runs(grid: &[f64], flags: &[bool]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (k, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((grid[s], grid[k - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((grid[s], grid[flags.len() - 1]));
    }
    out
}

/// ⟨a†a†aa⟩ / ⟨a†a⟩².
pub fn g2_zero(rho: &DenseMatrix, a: &OperatorMatrix) -> Result<f64> {
    let ad = a.adjoint();
    let n = ad.matmul(a).trace_with(rho).re;
    if !(n > 1e-300) {
        return Err(Error::VanishingDenominator {
            quantity: "<a^dag a>_ss",
            value: n,
            threshold: 1e-300,
        });
    }
    let num = ad.matmul(&ad).matmul(a).matmul(a).trace_with(rho).re;
    Ok(num / (n * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{ladder_operator, ONE, ZERO};

    fn trace(values: Vec<f64>) -> CorrelationTrace {
        CorrelationTrace {
            tau_grid: (0..values.len()).map(|k| k as f64).collect(),
            values,
            branch: Branch::Positive,
            phi: 0.0,
            normalization: 1.0,
            max_imaginary: 0.0,
        }
    }

    /// Density matrix of a pure state given by amplitudes.
    fn pure(amps: &[C64]) -> DenseMatrix {
        DenseMatrix::from_fn(amps.len(), |i, j| amps[i] * amps[j].conj())
    }

    fn coherent(alpha: C64, dim: usize) -> Vec<C64> {
        let mut amps = vec![ZERO; dim];
        let mut fact = 1.0;
        for (k, amp) in amps.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *amp = (-alpha.norm_sqr() / 2.0).exp() * alpha.powu(k as u32) / fact.sqrt();
        }
        amps
    }

    #[test]
    fn constant_trace_is_classical() {
        let r = inequality_check(&trace(vec![1.0; 5]));
        assert!(r.is_classical());
        assert_eq!(r, InequalityReport::default());
    }

    #[test]
    fn dip_below_one_is_flagged() {
        let r = inequality_check(&trace(vec![1.1, 1.0, 0.8, 1.0]));
        assert_eq!(r.lower_violations, vec![(2.0, 2.0)]);
        assert!((r.max_excursion + 0.2).abs() < 1e-12);
        assert!(!r.is_classical());
    }

    #[test]
    fn growth_beyond_zero_delay_is_flagged() {
        let r = inequality_check(&trace(vec![1.2, 1.3, 1.5, 1.5, 1.1]));
        assert!(r.lower_violations.is_empty());
        assert!(r.upper_violations.is_empty());
        assert_eq!(r.tau_zero_violations, vec![(1.0, 3.0)]);
        assert!(r.tau_zero_bound_violated);
    }

    #[test]
    fn upper_bound_is_flagged() {
        let r = inequality_check(&trace(vec![2.5, 1.0]));
        assert_eq!(r.upper_violations, vec![(0.0, 0.0)]);
        assert!(r.tau_zero_bound_violated);
        assert!(zero_delay_violation(2.5, 1e-9));
        assert!(zero_delay_violation(0.7, 1e-9));
        assert!(!zero_delay_violation(1.4, 1e-9));
    }

    #[test]
    fn g2_of_reference_states() {
        let dim = 40;
        let a = ladder_operator(dim).unwrap();
        let coh = pure(&coherent(C64::new(1.2, 0.3), dim));
        assert!((g2_zero(&coh, &a).unwrap() - 1.0).abs() < 1e-10);

        let nbar: f64 = 0.7;
        let thermal = DenseMatrix::from_fn(dim, |i, j| {
            if i == j {
                C64::new(nbar.powi(i as i32) / (1.0 + nbar).powi(i as i32 + 1), 0.0)
            } else {
                ZERO
            }
        });
        assert!((g2_zero(&thermal, &a).unwrap() - 2.0).abs() < 1e-9);

        let mut fock1 = vec![ZERO; dim];
        fock1[1] = ONE;
        assert_eq!(g2_zero(&pure(&fock1), &a).unwrap(), 0.0);

        let mut vac = vec![ZERO; dim];
        vac[0] = ONE;
        assert!(g2_zero(&pure(&vac), &a).is_err());
    }

    #[test]
    fn coherent_noise_vanishes() {
        let dim = 40;
        let a = ladder_operator(dim).unwrap();
        let rho = pure(&coherent(C64::new(0.9, -0.4), dim));
        for phi in [0.0, 0.7, std::f64::consts::FRAC_PI_2] {
            let s = noise_summary(&rho, &a, phi).unwrap();
            for v in [s.variance_phi, s.h2, s.h3, s.hn] {
                assert!(v.abs() < 1e-10, "{s:?}");
            }
        }
    }

    #[test]
    fn moment_route_matches_direct_fluctuation_traces() {
        let dim = 6;
        let a = ladder_operator(dim).unwrap();
        let w = DenseMatrix::from_fn(dim, |i, j| {
            C64::new(0.5f64.powi((i + j) as i32) + 0.1, 0.07 * (i as f64 - 2.0 * j as f64))
        });
        // W W† / Tr is a generic full-rank mixed state.
        let prod = OperatorMatrix::from_dense(&w).mul_dense(&w.adjoint());
        let rho = prod.scale(ONE / prod.trace());

        let alpha = a.trace_with(&rho);
        let id = OperatorMatrix::identity(dim);
        let da = a.add_scaled(&id, -alpha);
        let dad = da.adjoint();
        for phi in [0.0, 0.4, 2.0] {
            let s = noise_summary(&rho, &a, phi).unwrap();
            let da_phi = da.scale(phase(-phi)).add_scaled(&dad, phase(phi)).scale_real(0.5);
            let cross = dad.matmul(&da_phi).trace_with(&rho);
            let h3 = dad.matmul(&da_phi).matmul(&da).trace_with(&rho);
            let n = a.adjoint().matmul(&a);
            let dn = n.add_scaled(&id, -n.trace_with(&rho));
            let hn = (phase(-phi) * dn.matmul(&da).trace_with(&rho)).re;
            assert!((s.variance_phi - (phase(phi) * cross).re).abs() < 1e-12);
            assert!((s.h2 - 2.0 * (alpha * cross).re).abs() < 1e-12);
            assert!((s.h3 - h3.re).abs() < 1e-12 && h3.im.abs() < 1e-12);
            assert!((s.hn - hn).abs() < 1e-12);
            assert!((s.hn - s.h2 - s.h3).abs() < 1e-12);
        }
    }
}
