//! Acceptance suite. Every test prints one `PASS`/`FAIL` line followed by
//! the individual checks, then asserts that all of them hold.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ramanchd::chd::{
    g2_zero, inequality_check, noise_summary, raw_traces, zero_delay_violation, ChdTraces, FieldState,
    DEFAULT_INEQUALITY_TOLERANCE,
};
use ramanchd::config::{parse_key_values, resolve, ScenarioConfig};
use ramanchd::fock::{DenseMatrix, ModeSpace, C64};
use ramanchd::model::{CavityFrame, SystemModel, SystemParams};
use ramanchd::runner::{compute_scenario, converge_truncation, run_scenario, RunOptions};
use ramanchd::solver::{linear_grid, linspace, propagate_action, steady_state, PropagationOptions, SteadyState};
use ramanchd::spectra::{chd_spectra, emission_spectrum, find_peaks, Spectrum, SpectrumKind};

struct Check {
    label: String,
    ok: bool,
    detail: String,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
    notes: Vec<String>,
}

impl Criterion {
    fn check(&mut self, label: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            label: label.into(),
            ok,
            detail: detail.into(),
        });
    }

    /// Context printed with the checks but never failing the criterion.
    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    fn finish(self, id: u32, title: &str) {
        // The raw stderr handle bypasses libtest output capture.
        let ok = self.checks.iter().all(|c| c.ok);
        let mut out = std::io::stderr().lock();
        let _ = writeln!(out, "{} [{id:>2}] {title}", if ok { "PASS" } else { "FAIL" });
        for c in &self.checks {
            let _ = writeln!(out, "       {} {}: {}", if c.ok { "ok  " } else { "FAIL" }, c.label, c.detail);
        }
        for n in &self.notes {
            let _ = writeln!(out, "       info {n}");
        }
        drop(out);
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.ok).map(|c| c.label.as_str()).collect();
        assert!(failed.is_empty(), "criterion {id} ({title}) failed: {failed:?}");
    }
}

fn model(params: &SystemParams, dims: [usize; 2], frame: CavityFrame) -> SystemModel {
    SystemModel::new(params.clone(), ModeSpace::new(dims.to_vec()).unwrap(), vec![], frame).unwrap()
}

fn solve(m: &SystemModel) -> (ramanchd::model::Superoperator, SteadyState) {
    let l = m.liouvillian();
    let ss = steady_state(&l).unwrap();
    (l, ss)
}

fn default_grid() -> Vec<f64> {
    linear_grid(20.0 / SystemParams::default().gamma_m, 2000).unwrap()
}

fn config(text: &str) -> ScenarioConfig {
    resolve(parse_key_values(text).unwrap(), None).unwrap()
}

fn chd_at(params: &SystemParams, dims: [usize; 2], grid: &[f64]) -> (ChdTraces, f64, SystemModel, SteadyState) {
    let m = model(params, dims, CavityFrame::mean_field(params));
    let (l, ss) = solve(&m);
    let state = FieldState::new(&l, &ss.rho, m.cavity_op()).unwrap();
    let traces = raw_traces(&state, grid, false, &PropagationOptions::default())
        .unwrap()
        .evaluate(&state, params.phi)
        .unwrap();
    let n = state.number();
    (traces, n, m, ss)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn coherent_cavity_oracle() {
    let params = SystemParams {
        g: 0.0,
        delta: 0.0,
        omega_pump: 0.15,
        kappa: 0.25,
        phi: 0.0,
        ..Default::default()
    };
    let m = model(&params, [24, 4], CavityFrame::Fock);
    let (l, ss) = solve(&m);
    let a = m.cavity_op();
    let mut c = Criterion::default();

    let alpha = ss.expect(a);
    let err = (alpha - C64::new(1.2, 0.0)).norm();
    c.check("<a> = 1.2", err < 1e-3, format!("<a> = {alpha:.9}, |error| = {err:.2e} (tol 1e-3)"));

    let g2 = g2_zero(&ss.rho, a).unwrap();
    c.check("g2(0) = 1", (g2 - 1.0).abs() < 1e-3, format!("g2(0) = {g2:.9} (tol 1e-3)"));

    for phi in [0.0, FRAC_PI_2] {
        let v = noise_summary(&ss.rho, a, phi).unwrap().variance_phi;
        c.check(format!("V_phi = 0 at phi = {phi:.4}"), v.abs() < 1e-6, format!("V = {v:.3e} (tol 1e-6)"));
    }

    // ⟨a_{π/2}⟩ vanishes for a real amplitude, so h is only defined at φ = 0.
    let state = FieldState::new(&l, &ss.rho, a).unwrap();
    let grid = default_grid();
    let traces = raw_traces(&state, &grid, false, &PropagationOptions::default())
        .unwrap()
        .evaluate(&state, 0.0)
        .unwrap();
    let dev_pos = traces.positive.values.iter().map(|h| (h - 1.0).abs()).fold(0.0, f64::max);
    let dev_neg = traces.negative.values.iter().map(|h| (h - 1.0).abs()).fold(0.0, f64::max);
    c.check(
        "h_0(tau) = 1 on the default grid",
        dev_pos < 1e-3 && dev_neg < 1e-3,
        format!("max |h - 1|: positive {dev_pos:.2e}, negative {dev_neg:.2e} (tol 1e-3)"),
    );
    c.finish(1, "coherent-cavity oracle");
}

#[test]
fn thermal_phonon_oracle() {
    let params = SystemParams {
        g: 0.0,
        omega_m: 0.1,
        temperature: Some(300.0),
        ..Default::default()
    };
    let nb = 10;
    let m = model(&params, [4, nb], CavityFrame::mean_field(&params));
    let (_, ss) = solve(&m);
    let mut c = Criterion::default();

    let occupation = ss.expect(&m.vibration_number()).re;
    c.check(
        "<b^dag b> = 0.021339",
        (occupation - 0.021339).abs() < 1e-4,
        format!("<b^dag b> = {occupation:.12} (tol 1e-4)"),
    );

    let n_th = params.thermal_phonons().unwrap();
    let expected = n_th / (n_th + 1.0);
    let na = 4;
    let pops: Vec<f64> = (0..nb)
        .map(|ib| (0..na).map(|ia| ss.rho.get(ia * nb + ib, ia * nb + ib).re).sum())
        .collect();
    let worst = (0..nb - 2)
        .map(|n| ((pops[n + 1] / pops[n]) / expected - 1.0).abs())
        .fold(0.0, f64::max);
    c.check(
        "Boltzmann ratios",
        worst < 1e-6,
        format!("max relative deviation of p(n+1)/p(n) for n < {}: {worst:.2e} (tol 1e-6)", nb - 2),
    );
    c.finish(2, "thermal-phonon oracle");
}

fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let raw = DenseMatrix::from_fn(d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let mut h = raw.add_scaled(&raw.adjoint(), C64::new(1.0, 0.0));
    h = h.scale(C64::new(0.5, 0.0));
    h
}

fn to_nalgebra(l: &ramanchd::model::Superoperator) -> DMatrix<C64> {
    let n = l.dim();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for (r, col, v) in l.matrix().triplets() {
        m[(r, col)] = v;
    }
    m
}

#[test]
fn liouvillian_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut c = Criterion::default();
    let (mut worst_trace, mut worst_herm, mut worst_res) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let params = SystemParams {
            omega_m: rng.random_range(0.05..0.2),
            delta: rng.random_range(-0.2..0.2),
            g: rng.random_range(0.0..0.01),
            omega_pump: rng.random_range(0.0..0.2),
            kappa: rng.random_range(0.1..0.4),
            gamma_m: rng.random_range(5e-4..5e-3),
            temperature: Some(rng.random_range(0.0..600.0)),
            phi: rng.random_range(0.0..PI),
            ..Default::default()
        };
        let dims = [rng.random_range(3..7usize), rng.random_range(2..6usize)];
        let m = model(&params, dims, CavityFrame::mean_field(&params));
        let l = m.liouvillian();
        let d = m.dim();
        let rho = random_hermitian(d, &mut rng);
        let norm = rho.frobenius_norm();
        let out = DenseMatrix::from_column_stacked(d, l.apply(rho.as_slice())).unwrap();
        worst_trace = worst_trace.max(out.trace().norm() / norm);
        worst_herm = worst_herm.max(out.hermiticity_defect() / norm);
        let ss = steady_state(&l).unwrap();
        worst_res = worst_res.max(ss.residual / l.norm_one());
    }
    c.check("trace annihilation", worst_trace < 1e-12, format!("max |Tr L[rho]|/|rho| = {worst_trace:.2e} (tol 1e-12)"));
    c.check("Hermiticity preservation", worst_herm < 1e-12, format!("max |L[rho] - L[rho]^dag|/|rho| = {worst_herm:.2e} (tol 1e-12)"));
    c.check("steady-state residual", worst_res < 1e-10, format!("max |L rho_ss|/|L| = {worst_res:.2e} (tol 1e-10)"));

    let params = SystemParams::default();
    let m = model(&params, [3, 2], CavityFrame::Fock);
    let l = m.liouvillian();
    let dense = to_nalgebra(&l);
    let x = random_hermitian(m.dim(), &mut rng);
    let taus = [0.0, 0.5, 3.0, 20.0, 150.0];
    let props = propagate_action(&l, &x, &taus, &PropagationOptions::default()).unwrap();
    let xv = nalgebra::DVector::from_column_slice(x.as_slice());
    let mut worst = 0.0f64;
    for (tau, got) in taus.iter().zip(&props) {
        let exact = (&dense * C64::new(*tau, 0.0)).exp() * &xv;
        for (a, b) in got.as_slice().iter().zip(exact.iter()) {
            worst = worst.max((a - b).norm());
        }
    }
    c.check("propagation vs dense exponential", worst < 1e-8, format!("max entry error {worst:.2e} (tol 1e-8)"));

    let fm = faer::Mat::<C64>::from_fn(l.dim(), l.dim(), |i, j| dense[(i, j)]);
    let eig = fm.eigenvalues().unwrap();
    let abscissa = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    c.check("spectral abscissa", abscissa <= 1e-10, format!("max Re(lambda) = {abscissa:.2e} (tol 1e-10)"));
    c.finish(3, "Liouvillian structural suite");
}

fn peak_near(peaks: &[ramanchd::spectra::Peak], centre: f64, window: f64) -> Option<ramanchd::spectra::Peak> {
    peaks
        .iter()
        .filter(|p| (p.omega - centre).abs() <= window)
        .max_by(|a, b| a.height.total_cmp(&b.height))
        .copied()
}

#[test]
fn emission_sidebands() {
    let mut c = Criterion::default();
    let omega = linspace(-0.2, 0.2, 2001).unwrap();
    let grid = default_grid();
    let mut heights = Vec::new();
    for g in [1e-3, 3e-3, 5e-3] {
        let params = SystemParams {
            g,
            delta: 0.0,
            omega_pump: 1e-2f64.sqrt(),
            ..Default::default()
        };
        let m = model(&params, [6, 8], CavityFrame::mean_field(&params));
        let (l, ss) = solve(&m);
        let state = FieldState::new(&l, &ss.rho, m.cavity_op()).unwrap();
        let raw = raw_traces(&state, &grid, false, &PropagationOptions::default()).unwrap();
        let spectrum = emission_spectrum(&raw, &omega).unwrap();
        let peaks = find_peaks(&spectrum, 1e-3);
        let gm = params.gamma_m;
        let low = peak_near(&peaks, -params.omega_m, gm);
        let high = peak_near(&peaks, params.omega_m, gm);
        let tag = format!("g = {:.0} meV", g * 1e3);
        c.check(
            format!("{tag}: two peaks within gamma_m of -/+omega_m"),
            peaks.len() == 2 && low.is_some() && high.is_some(),
            format!("peaks at {:?}", peaks.iter().map(|p| p.omega).collect::<Vec<_>>()),
        );
        if let (Some(lo), Some(hi)) = (low, high) {
            let (big, small) = if lo.height >= hi.height { (lo, hi) } else { (hi, lo) };
            let ratio = big.height / small.height;
            c.check(
                format!("{tag}: Stokes/anti-Stokes ratio in [20, 100]"),
                (20.0..=100.0).contains(&ratio),
                format!(
                    "ratio {ratio:.2}, Stokes at {:+.5} eV, phonons {:.4}",
                    big.omega,
                    ss.expect(&m.vibration_number()).re
                ),
            );
            heights.push((lo.height, hi.height));
        }
    }
    let increasing = heights.len() == 3 && heights.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1);
    c.check("peak heights grow with g", increasing, format!("heights {heights:.4?}"));
    c.finish(4, "emission sidebands");
}

fn chd_default() -> (SystemParams, [usize; 2]) {
    let params = SystemParams::default();
    let spec = config("scenario = chd-time").truncation;
    let rec = converge_truncation(&params, &spec, spec.tolerance).unwrap();
    (params, [rec.chosen.n_cavity, rec.chosen.n_vibration])
}

#[test]
fn chd_nonclassicality_and_asymmetry() {
    let (params, dims) = chd_default();
    let grid = default_grid();
    let (traces, _, _, _) = chd_at(&params, dims, &grid);
    let mut c = Criterion::default();
    let report = inequality_check(&traces.positive);
    let window_end = 30.0 / params.omega_m;
    let hit = report
        .lower_violations
        .iter()
        .find(|(start, end)| *end > 0.0 && *start <= window_end);
    let min_h = traces.positive.values.iter().cloned().fold(f64::INFINITY, f64::min);
    c.check(
        "lower-bound violation on omega_m tau in (0, 30]",
        hit.is_some(),
        format!("first interval {hit:?}, min h = {min_h:.4}"),
    );
    let asym = max_abs_diff(&traces.positive.values, &traces.negative.values);
    let excursion = traces.positive.values.iter().map(|h| (h - 1.0).abs()).fold(0.0, f64::max);
    c.check(
        "branch asymmetry",
        asym > 0.1 * excursion,
        format!("max |h_pos - h_neg| = {asym:.4} vs 0.1 max |h_pos - 1| = {:.4}", 0.1 * excursion),
    );
    c.finish(5, "CHD non-classicality and asymmetry");
}

#[test]
fn decomposition_identities() {
    let base = SystemParams::default();
    let sets = [
        base.clone(),
        SystemParams { phi: 0.0, ..base.clone() },
        SystemParams { delta: 0.05, phi: 0.3, ..base.clone() },
        SystemParams { delta: -0.1, g: 3e-3, ..base.clone() },
        SystemParams { omega_pump: 0.05, phi: 1.0, ..base.clone() },
    ];
    let grid = linear_grid(3000.0, 301).unwrap();
    let mut c = Criterion::default();
    let (mut sum_err, mut cont_err, mut noise_err) = (0.0f64, 0.0f64, 0.0f64);
    for p in &sets {
        let (t, _, m, ss) = chd_at(p, [6, 8], &grid);
        for k in 0..grid.len() {
            let err = (t.positive.values[k] - (1.0 + t.h2.values[k] + t.h3.values[k])).abs();
            sum_err = sum_err.max(err);
        }
        cont_err = cont_err.max((t.positive.values[0] - t.negative.values[0]).abs());
        for phi in [0.0, FRAC_PI_2, p.phi] {
            let n = noise_summary(&ss.rho, m.cavity_op(), phi).unwrap();
            noise_err = noise_err.max((n.hn - n.h2 - n.h3).abs());
        }
    }
    c.check("h_pos = 1 + h2 + h3", sum_err < 1e-9, format!("max error {sum_err:.2e} over {} sets (tol 1e-9)", sets.len()));
    c.check("h_neg(0) = h_pos(0)", cont_err < 1e-10, format!("max error {cont_err:.2e} (tol 1e-10)"));
    c.check("Hn = H2 + H3", noise_err < 1e-10, format!("max error {noise_err:.2e} (tol 1e-10)"));
    c.finish(6, "decomposition identities");
}

#[test]
fn chd_spectral_identities() {
    let (params, dims) = chd_default();
    let grid = default_grid();
    let (t, n_ss, _, _) = chd_at(&params, dims, &grid);
    let omega = linspace(-2.0 * params.omega_m, 2.0 * params.omega_m, 2001).unwrap();
    let spectra = chd_spectra(&t.positive, &t.negative, &t.h2, &t.h3, params.kappa, n_ss, &omega).unwrap();
    let by_kind = |k: SpectrumKind| -> &Spectrum { spectra.iter().find(|s| s.kind == k).unwrap() };
    let flux = spectra[0].flux.unwrap();
    let mut c = Criterion::default();
    for (kind, h0) in [
        (SpectrumKind::Chd2, t.h2.first()),
        (SpectrumKind::Chd3, t.h3.first()),
        (SpectrumKind::ChdNeg, t.hn.first()),
    ] {
        let integral = by_kind(kind).integral();
        let target = 4.0 * PI * flux * h0;
        let rel = (integral - target).abs() / target.abs();
        c.check(
            format!("integral of {} = 4 pi F h(0)", kind.label()),
            rel < 0.01,
            format!("integral {integral:.6e}, target {target:.6e}, relative error {rel:.3e} (tol 1e-2)"),
        );
    }
    let step = grid[1] - grid[0];
    let band = linspace(-PI / step, PI / step, 8001).unwrap();
    let wide = chd_spectra(&t.positive, &t.negative, &t.h2, &t.h3, params.kappa, n_ss, &band).unwrap();
    for s in &wide[1..] {
        let h0 = match s.kind {
            SpectrumKind::Chd2 => t.h2.first(),
            SpectrumKind::Chd3 => t.h3.first(),
            _ => t.hn.first(),
        };
        c.note(format!(
            "{} over the sampled band |omega| <= pi/dtau = {:.3} eV: integral {:.6e} vs {:.6e}",
            s.kind.label(),
            PI / step,
            s.integral(),
            4.0 * PI * flux * h0
        ));
    }
    let pos = by_kind(SpectrumKind::ChdPos);
    for centre in [-params.omega_m, params.omega_m] {
        let near = omega
            .iter()
            .zip(&pos.values)
            .filter(|(w, _)| (*w - centre).abs() <= 0.1 * params.omega_m)
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min);
        c.check(format!("S_pos negative near {centre:+.2} eV"), near < 0.0, format!("min S_pos = {near:.4e}"));
    }
    let ratio = by_kind(SpectrumKind::Chd3).peak_abs() / by_kind(SpectrumKind::Chd2).peak_abs();
    c.check("peak|S3| < 0.1 peak|S2|", ratio < 0.1, format!("ratio {ratio:.3e}"));
    c.finish(7, "CHD spectral identities");
}

#[test]
fn noise_sweep_features() {
    let run = |start: f64, stop: f64, count: usize, extra: &str| {
        let cfg = config(&format!(
            "scenario = noise-sweep\nsweep.parameter = delta\nsweep.start = {start}\nsweep.stop = {stop}\nsweep.count = {count}\n{extra}"
        ));
        compute_scenario(&cfg, &RunOptions::default()).unwrap().tables.remove(0)
    };
    let wide = run(-0.15, 0.15, 31, "");
    let near_m = run(0.08, 0.12, 9, "");
    let below = run(-0.045, -0.005, 9, "truncation.n_vibration = 10");
    let col = |t: &ramanchd::output::Table, name: &str| t.column(name).unwrap();
    let mut c = Criterion::default();

    let v = col(&near_m, "V_pi2");
    let at = col(&near_m, "delta_eV");
    let best = v.iter().zip(&at).min_by(|a, b| a.0.total_cmp(b.0)).unwrap();
    c.check(
        "V_pi/2 < 0 within 0.2 omega_m of omega_m",
        *best.0 < 0.0,
        format!("min V_pi/2 = {:.3e} at delta = {:.3} eV", best.0, best.1),
    );
    let v0 = col(&below, "V_0");
    let at = col(&below, "delta_eV");
    let best = v0.iter().zip(&at).min_by(|a, b| a.0.total_cmp(b.0)).unwrap();
    c.check(
        "V_0 < 0 somewhere in (-0.5 omega_m, 0)",
        *best.0 < 0.0,
        format!("min V_0 = {:.3e} at delta = {:.3} eV", best.0, best.1),
    );
    let max_abs = |cols: [&str; 2]| {
        cols.iter()
            .flat_map(|c| col(&wide, c))
            .map(f64::abs)
            .fold(0.0, f64::max)
    };
    let h2 = max_abs(["H2_0", "H2_pi2"]);
    let h3 = max_abs(["H3_0", "H3_pi2"]);
    c.check("max|H3| <= 0.1 max|H2|", h3 <= 0.1 * h2, format!("max|H3| = {h3:.3e}, max|H2| = {h2:.3e}"));
    c.finish(8, "noise sweep");
}

#[test]
fn sensor_suite() {
    let base = "scenario = filtered-sweep\nsweep.parameter = delta\nsweep.start = -0.1\nsweep.stop = 0.1\nsweep.count = 9\n";
    let full = config(base);
    let half = config(&format!("{base}sensors.epsilon = 5e-6\n"));
    let out = compute_scenario(&full, &RunOptions::default()).unwrap();
    let out_half = compute_scenario(&half, &RunOptions::default()).unwrap();
    let (t, th) = (&out.tables[0], &out_half.tables[0]);
    let mut c = Criterion::default();

    let ba = out.summary["back_action"]["relative_change"].as_f64().unwrap();
    c.check("back-action", ba < 1e-3, format!("relative change of <a^dag a> = {ba:.2e} (tol 1e-3)"));

    let mut worst = 0.0f64;
    for name in ["h_SaS", "h_aSS"] {
        for (a, b) in t.column(name).unwrap().iter().zip(th.column(name).unwrap()) {
            worst = worst.max(((a - b) / a).abs());
        }
    }
    c.check("epsilon halving", worst < 0.01, format!("max relative change {worst:.2e} (tol 1e-2)"));

    let deltas = t.column("delta_eV").unwrap();
    let violations: Vec<(f64, f64)> = t
        .column("h_aSS")
        .unwrap()
        .into_iter()
        .zip(deltas)
        .filter(|(h, _)| zero_delay_violation(*h, DEFAULT_INEQUALITY_TOLERANCE))
        .map(|(h, d)| (d, h))
        .collect();
    c.check(
        "aS/S column violates a classical bound",
        !violations.is_empty(),
        format!("(delta, h) violating: {violations:.4?}"),
    );
    c.finish(9, "sensor suite");
}

#[test]
fn rerun_determinism() {
    let cfg = config(
        "scenario = chd-time\ngrid.tau_max = 2000\ngrid.tau_points = 201\ntruncation.converge = false\nsweep.parameter = delta\nsweep.start = -0.05\nsweep.stop = 0.05\nsweep.count = 3",
    );
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &std::path::Path, threads| {
        let opts = RunOptions {
            out_dir: Some(dir.to_path_buf()),
            threads: Some(threads),
            ..Default::default()
        };
        run_scenario(&cfg, &opts).unwrap()
    };
    let ra = run(a.path(), 1);
    let rb = run(b.path(), 3);
    let mut c = Criterion::default();
    let mut identical = true;
    for ((pa, ha), (pb, hb)) in ra.files.iter().zip(&rb.files) {
        let same = std::fs::read(pa).unwrap() == std::fs::read(pb).unwrap();
        identical &= same && ha == hb;
    }
    c.check(
        "byte-identical tables",
        identical && ra.files.len() == rb.files.len(),
        format!("{} files compared", ra.files.len()),
    );
    let manifest = |d: &std::path::Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap()
    };
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    c.check("manifest checksums", ma["files"] == mb["files"], format!("{}", ma["files"]));
    c.finish(10, "determinism");
}
