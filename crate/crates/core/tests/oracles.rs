use ramanchd::chd::{raw_traces, FieldState};
use ramanchd::config::{parse_key_values, resolve, FrameKind, TruncationSpec};
use ramanchd::fock::{ModeSpace, C64};
use ramanchd::model::{kappa_from_quality, thermal_occupation, CavityFrame, SystemModel, SystemParams};
use ramanchd::runner::converge_truncation;
use ramanchd::sensors::{filtered_zero_delay, FilteredSetup};
use ramanchd::solver::{linear_grid, linspace, propagate_action, steady_state, PropagationOptions};
use ramanchd::spectra::{emission_spectrum, trapezoid};

fn model(params: &SystemParams, dims: [usize; 2], frame: CavityFrame) -> SystemModel {
    SystemModel::new(params.clone(), ModeSpace::new(dims.to_vec()).unwrap(), vec![], frame).unwrap()
}

fn reduced_cavity(rho: &ramanchd::fock::DenseMatrix, na: usize, nb: usize) -> Vec<Vec<C64>> {
    let mut out = vec![vec![C64::new(0.0, 0.0); na]; na];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..nb).map(|b| rho.get(i * nb + b, j * nb + b)).sum();
        }
    }
    out
}

fn coherent(alpha: C64, n: usize) -> Vec<C64> {
    let mut amp = vec![C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0)];
    for k in 1..n {
        let prev = amp[k - 1];
        amp.push(prev * alpha / (k as f64).sqrt());
    }
    amp
}

#[test]
fn uncoupled_cavity_is_coherent() {
    let params = SystemParams {
        g: 0.0,
        delta: 0.04,
        ..Default::default()
    };
    let (na, nb) = (24, 3);
    let m = model(&params, [na, nb], CavityFrame::Fock);
    let ss = steady_state(&m.liouvillian()).unwrap();
    let rho_a = reduced_cavity(&ss.rho, na, nb);
    let psi = coherent(params.bare_cavity_amplitude(), na);
    let mut fidelity = C64::new(0.0, 0.0);
    for i in 0..na {
        for j in 0..na {
            fidelity += psi[i].conj() * rho_a[i][j] * psi[j];
        }
    }
    assert!(fidelity.re > 1.0 - 1e-6, "fidelity {fidelity}");
}

#[test]
fn default_steady_state_is_accurate() {
    let params = SystemParams::default();
    for frame in [CavityFrame::mean_field(&params), CavityFrame::Fock] {
        let dims = if frame == CavityFrame::Fock { [14, 8] } else { [6, 8] };
        let m = model(&params, dims, frame);
        let l = m.liouvillian();
        let ss = steady_state(&l).unwrap();
        assert!(ss.residual < 1e-10 * l.norm_one(), "{frame:?}: residual {}", ss.residual);
        assert!(ss.trace_error < 1e-12);
        assert!(ss.min_eigenvalue > -1e-10);
        let n = ss.expect(&m.cavity_number()).re;
        assert!((n - 1.4375).abs() < 2e-3, "{frame:?}: <n> = {n}");
    }
}

#[test]
fn stationary_state_does_not_move() {
    let params = SystemParams::default();
    let m = model(&params, [4, 4], CavityFrame::mean_field(&params));
    let l = m.liouvillian();
    let ss = steady_state(&l).unwrap();
    let taus = [0.0, 10.0, 1000.0, 10000.0];
    for out in propagate_action(&l, &ss.rho, &taus, &PropagationOptions::default()).unwrap() {
        assert!(out.max_abs_diff(&ss.rho) < 1e-8);
    }
}

#[test]
fn thermal_occupation_and_quality_factor() {
    let n = thermal_occupation(0.1, 300.0).unwrap();
    assert!((n - 0.0213425026).abs() < 1e-9);
    assert_eq!(thermal_occupation(0.1, 0.0).unwrap(), 0.0);
    assert!((kappa_from_quality(2.5, 10.0).unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn direct_third_order_term_agrees() {
    let params = SystemParams {
        delta: 0.05,
        phi: 0.7,
        ..Default::default()
    };
    let m = model(&params, [6, 6], CavityFrame::mean_field(&params));
    let l = m.liouvillian();
    let ss = steady_state(&l).unwrap();
    let state = FieldState::new(&l, &ss.rho, m.cavity_op()).unwrap();
    let grid = linear_grid(500.0, 51).unwrap();
    let traces = raw_traces(&state, &grid, true, &PropagationOptions::default())
        .unwrap()
        .evaluate(&state, params.phi)
        .unwrap();
    let direct = traces.h3_direct.expect("requested");
    for (a, b) in traces.h3.values.iter().zip(&direct.values) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn coherent_light_has_no_inelastic_spectrum() {
    let params = SystemParams {
        g: 0.0,
        ..Default::default()
    };
    let m = model(&params, [4, 3], CavityFrame::mean_field(&params));
    let l = m.liouvillian();
    let ss = steady_state(&l).unwrap();
    let state = FieldState::new(&l, &ss.rho, m.cavity_op()).unwrap();
    let grid = linear_grid(200.0, 401).unwrap();
    let raw = raw_traces(&state, &grid, false, &PropagationOptions::default()).unwrap();
    let s = emission_spectrum(&raw, &linspace(-0.2, 0.2, 41).unwrap()).unwrap();
    assert!(s.peak_abs() < 1e-12, "{}", s.peak_abs());
}

fn sensor_params() -> SystemParams {
    SystemParams {
        omega_pump: 0.03,
        phi: 0.0,
        ..Default::default()
    }
}

#[test]
fn sensor_population_scales_with_coupling_squared() {
    let params = sensor_params();
    let eps = 1e-4 * params.omega_m;
    let full = filtered_zero_delay(&params, &FilteredSetup::sidebands(&params, eps, 4, 4), 0.0).unwrap();
    let half = filtered_zero_delay(&params, &FilteredSetup::sidebands(&params, eps / 2.0, 4, 4), 0.0).unwrap();
    for (a, b) in [(full.population1, half.population1), (full.population2, half.population2)] {
        assert!((a / b / 4.0 - 1.0).abs() < 0.05, "ratio {}", a / b);
    }
}

#[test]
fn coherent_light_gives_unit_filtered_correlation() {
    let params = SystemParams {
        g: 0.0,
        ..sensor_params()
    };
    let setup = FilteredSetup::sidebands(&params, 1e-4 * params.omega_m, 4, 3);
    let z = filtered_zero_delay(&params, &setup, 0.0).unwrap();
    assert!((z.h_12 - 1.0).abs() < 1e-6, "{}", z.h_12);
    assert!((z.h_21 - 1.0).abs() < 1e-6, "{}", z.h_21);
}

fn truncation(n_cavity: usize, n_vibration: usize) -> TruncationSpec {
    let mut spec = resolve(parse_key_values("scenario = chd-time").unwrap(), None).unwrap().truncation;
    spec.n_cavity = n_cavity;
    spec.n_vibration = n_vibration;
    spec
}

#[test]
fn undriven_system_converges_immediately() {
    let params = SystemParams {
        omega_pump: 0.0,
        ..Default::default()
    };
    let spec = truncation(4, 4);
    let rec = converge_truncation(&params, &spec, spec.tolerance).unwrap();
    assert_eq!((rec.chosen.n_cavity, rec.chosen.n_vibration), (4, 4));
}

#[test]
fn tiny_start_is_enlarged() {
    let params = SystemParams::default();
    let spec = truncation(2, 8);
    let rec = converge_truncation(&params, &spec, spec.tolerance).unwrap();
    assert!(rec.chosen.n_cavity > 2, "{}", rec.chosen);
    assert!(rec.changes.last().unwrap() < &spec.tolerance);
}

#[test]
fn coherent_drive_converges_within_limits() {
    let params = SystemParams {
        g: 0.0,
        ..Default::default()
    };
    let spec = truncation(6, 8);
    assert_eq!(spec.frame, FrameKind::Displaced);
    let rec = converge_truncation(&params, &spec, spec.tolerance).unwrap();
    assert!(rec.chosen.n_cavity <= 24, "{}", rec.chosen);
}

#[test]
fn trapezoid_is_exact_for_linear_functions() {
    let x = [0.0, 0.3, 1.1, 2.0];
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
    assert!((trapezoid(&x, &y) - 4.0).abs() < 1e-14);
}
