//! Scenario execution: truncation control, parameter sweeps and output files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chd::{inequality_check, noise_summary, raw_traces, FieldState, InequalityReport, Moments, MEAN_FIELD_GUARD};
use crate::config::{FrameKind, OutputFormat, Scenario, ScenarioConfig, SweepParameter, TruncationSpec};
use crate::error::{Error, Result};
use crate::fock::ModeSpace;
use crate::model::{CavityFrame, SensorParams, SystemModel, SystemParams};
use crate::output::{write_file, Table};
use crate::sensors::{back_action, filtered_zero_delay, FilteredSetup};
use crate::solver::{linear_grid, linspace, steady_state, PropagationOptions, SteadyState};
use crate::spectra::{chd_spectra, emission_spectrum, find_peaks, sidebands, Spectrum};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "RAMANCHD_OUT_DIR";

/// Cavity and vibration cutoffs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub n_cavity: usize,
    pub n_vibration: usize,
}

impl std::fmt::Display for Truncation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.n_cavity, self.n_vibration)
    }
}

/// Observables watched while raising the truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub truncation: Truncation,
    pub cavity_photons: f64,
    pub phonons: f64,
    /// h_φ(0); absent when ⟨a_φ⟩ vanishes.
    pub h_zero: Option<f64>,
    pub variance_phi: f64,
    pub fluctuation_number: f64,
}

/// Outcome of the truncation schedule at one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub steps: Vec<Observables>,
    /// Largest relative change between consecutive steps, per step.
    pub changes: Vec<f64>,
    pub chosen: Truncation,
    pub tolerance: f64,
}

fn model_for(params: &SystemParams, frame: FrameKind, t: Truncation) -> Result<SystemModel> {
    let frame = match frame {
        FrameKind::Fock => CavityFrame::Fock,
        FrameKind::Displaced => CavityFrame::mean_field(params),
    };
    SystemModel::new(params.clone(), ModeSpace::new(vec![t.n_cavity, t.n_vibration])?, vec![], frame)
}

fn zero_delay_h(m: &Moments, phi: f64) -> Option<f64> {
    let em = num_complex::Complex64::from_polar(1.0, -phi);
    let quad = (em * m.alpha()).re;
    if !(quad.abs() > MEAN_FIELD_GUARD * m.n.max(0.0).sqrt()) {
        return None;
    }
    let na = num_complex::Complex64::new(m.n_a[0], m.n_a[1]);
    Some((em * na).re / (m.n * quad))
}

pub fn observables(params: &SystemParams, frame: FrameKind, t: Truncation) -> Result<Observables> {
    let model = model_for(params, frame, t)?;
    let ss = steady_state(&model.liouvillian())?;
    let noise = noise_summary(&ss.rho, model.cavity_op(), params.phi)?;
    Ok(Observables {
        truncation: t,
        cavity_photons: noise.moments.n,
        phonons: ss.expect(&model.vibration_number()).re,
        h_zero: zero_delay_h(&noise.moments, params.phi),
        variance_phi: noise.variance_phi,
        fluctuation_number: noise.moments.fluctuation_number(),
    })
}

const CHANGE_FLOOR: f64 = 1e-12;

fn relative(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(CHANGE_FLOOR)
}

/// Largest relative change between two truncations. V_φ is measured against
/// the fluctuation number, which keeps near-coherent states from amplifying
/// round-off.
pub fn max_relative_change(a: &Observables, b: &Observables) -> f64 {
    let mut out = relative(a.cavity_photons, b.cavity_photons, a.cavity_photons.abs().max(b.cavity_photons.abs()));
    out = out.max(relative(a.phonons, b.phonons, a.phonons.abs().max(b.phonons.abs())));
    if let (Some(x), Some(y)) = (a.h_zero, b.h_zero) {
        out = out.max(relative(x, y, x.abs().max(y.abs())));
    }
    let v_scale = a
        .variance_phi
        .abs()
        .max(b.variance_phi.abs())
        .max(a.fluctuation_number.abs())
        .max(b.fluctuation_number.abs());
    out.max(relative(a.variance_phi, b.variance_phi, v_scale))
}

/// Raises (N_a, N_b) in steps of (4, 2) until the watched observables move by
/// less than `tolerance`, returning the smaller truncation of the final pair.
pub fn converge_truncation(params: &SystemParams, spec: &TruncationSpec, tolerance: f64) -> Result<ConvergenceRecord> {
    let mut cur = Truncation {
        n_cavity: spec.n_cavity,
        n_vibration: spec.n_vibration,
    };
    let mut steps = vec![observables(params, spec.frame, cur)?];
    let mut changes = Vec::new();
    loop {
        let next = Truncation {
            n_cavity: cur.n_cavity + 4,
            n_vibration: cur.n_vibration + 2,
        };
        if next.n_cavity > spec.max_cavity
            || next.n_vibration > spec.max_vibration
            || next.n_cavity * next.n_vibration > spec.max_hilbert_dim
        {
            let last = steps.len() - 1;
            let detail = match last {
                0 => format!("cannot refine beyond ({}, {})", cur.n_cavity, cur.n_vibration),
                _ => format!(
                    "change {:e} > {:e} between {} and {}: {} vs {}",
                    changes[last - 1],
                    tolerance,
                    steps[last - 1].truncation,
                    steps[last].truncation,
                    serde_json::to_string(&steps[last - 1])?,
                    serde_json::to_string(&steps[last])?,
                ),
            };
            return Err(Error::Convergence { detail });
        }
        let obs = observables(params, spec.frame, next)?;
        let change = max_relative_change(steps.last().expect("nonempty"), &obs);
        steps.push(obs);
        changes.push(change);
        if change < tolerance {
            return Ok(ConvergenceRecord {
                steps,
                changes,
                chosen: cur,
                tolerance,
            });
        }
        cur = next;
    }
}

/// Options that come from the command line rather than the config file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub threads: Option<usize>,
    pub tolerance: Option<f64>,
}

/// Command-line directory, then the environment override, then the config.
pub fn resolve_out_dir(cli: Option<&Path>, config: &ScenarioConfig) -> Result<PathBuf> {
    if let Some(p) = cli {
        return Ok(p.to_path_buf());
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|p| !p.is_empty()) {
        return Ok(PathBuf::from(p));
    }
    config
        .output
        .dir
        .clone()
        .ok_or_else(|| Error::config("output.dir", format!("no output directory (use --out, {OUT_DIR_ENV} or output.dir)")))
}

/// Computed tables and metadata for one scenario.
#[derive(Clone, Debug)]
pub struct ScenarioOutput {
    pub tables: Vec<Table>,
    pub summary: Value,
    pub truncation: Truncation,
    pub convergence: Vec<(f64, ConvergenceRecord)>,
}

/// Files written by [`run_scenario`].
#[derive(Clone, Debug)]
pub struct RunReport {
    pub output: ScenarioOutput,
    pub out_dir: PathBuf,
    pub files: Vec<(PathBuf, String)>,
    pub wall_time: f64,
}

struct Point {
    value: Option<f64>,
    params: SystemParams,
}

fn sweep_points(config: &ScenarioConfig) -> Vec<Point> {
    match &config.sweep {
        None => vec![Point {
            value: None,
            params: config.params.clone(),
        }],
        Some(s) => s
            .values()
            .into_iter()
            .map(|v| {
                let mut params = config.params.clone();
                s.parameter.apply(&mut params, v);
                Point { value: Some(v), params }
            })
            .collect(),
    }
}

fn point_error(config: &ScenarioConfig, value: Option<f64>, e: Error) -> Error {
    match (value, &config.sweep) {
        (Some(v), Some(s)) => Error::SweepPoint {
            parameter: s.parameter.name().to_string(),
            value: v,
            source: Box::new(e),
        },
        _ => e,
    }
}

/// Truncation used for every point: the configured one, or the largest
/// converged truncation among the first, middle and last sweep points.
fn choose_truncation(config: &ScenarioConfig, points: &[Point], tolerance: f64) -> Result<(Truncation, Vec<(f64, ConvergenceRecord)>)> {
    let t = &config.truncation;
    let base = Truncation {
        n_cavity: t.n_cavity,
        n_vibration: t.n_vibration,
    };
    if !t.converge {
        return Ok((base, Vec::new()));
    }
    let mut picks = vec![0, points.len() / 2, points.len() - 1];
    picks.dedup();
    let mut records = Vec::new();
    let mut chosen = base;
    for k in picks {
        let p = &points[k];
        let rec = converge_truncation(&p.params, t, tolerance).map_err(|e| point_error(config, p.value, e))?;
        chosen.n_cavity = chosen.n_cavity.max(rec.chosen.n_cavity);
        chosen.n_vibration = chosen.n_vibration.max(rec.chosen.n_vibration);
        records.push((p.value.unwrap_or(f64::NAN), rec));
    }
    let dim = chosen.n_cavity * chosen.n_vibration * if config.scenario.uses_sensors() { 4 } else { 1 };
    if dim > t.max_hilbert_dim {
        return Err(Error::Convergence {
            detail: format!(
                "converged truncation ({}, {}) needs Hilbert dimension {dim} > {}",
                chosen.n_cavity, chosen.n_vibration, t.max_hilbert_dim
            ),
        });
    }
    Ok((chosen, records))
}

const NEGATIVE_BRANCH_NOTE: &str = "negative-delay branch (field first, photon after |tau|) is listed at tau < 0";
const CONVENTION_NOTE: &str = "units: energies and rates in eV, delays in hbar/eV; a_phi = (a e^{-i phi} + a^dag e^{i phi})/2";
const VECTORIZATION_NOTE: &str = "vectorization: column stacking; cavity mode is the leftmost tensor factor";

fn header(table: &mut Table, config: &ScenarioConfig, t: Truncation) {
    table.comment(format!("scenario: {}", config.scenario));
    table.comment(CONVENTION_NOTE);
    table.comment(VECTORIZATION_NOTE);
    let frame = match config.truncation.frame {
        FrameKind::Fock => "Fock basis".to_string(),
        FrameKind::Displaced => "cavity displaced by its bare mean field".to_string(),
    };
    table.comment(format!("truncation: n_cavity = {}, n_vibration = {} ({frame})", t.n_cavity, t.n_vibration));
}

fn prefix_columns(config: &ScenarioConfig, always: bool) -> (Vec<String>, SweepParameter) {
    let axis = config.sweep.as_ref().map(|s| s.parameter).unwrap_or(SweepParameter::Delta);
    if config.sweep.is_none() && !always {
        return (Vec::new(), axis);
    }
    let mut cols = vec![axis.column().to_string()];
    if axis == SweepParameter::Delta {
        cols.push("delta_over_omega_m".into());
    }
    (cols, axis)
}

fn prefix_values(value: Option<f64>, params: &SystemParams, cols: &[String], axis: SweepParameter) -> Vec<f64> {
    if cols.is_empty() {
        return Vec::new();
    }
    let v = value.unwrap_or(params.delta);
    let mut out = vec![v];
    if axis == SweepParameter::Delta {
        out.push(v / params.omega_m);
    }
    out
}

fn make_table(name: &str, prefix: &[String], columns: &[&str]) -> Table {
    let mut all: Vec<&str> = prefix.iter().map(String::as_str).collect();
    all.extend_from_slice(columns);
    Table::new(name, &all)
}

fn propagation() -> PropagationOptions {
    PropagationOptions::default()
}

struct Solved {
    model: SystemModel,
    liouvillian: crate::model::Superoperator,
    ss: SteadyState,
}

fn solve(params: &SystemParams, config: &ScenarioConfig, t: Truncation) -> Result<Solved> {
    let model = model_for(params, config.truncation.frame, t)?;
    let liouvillian = model.liouvillian();
    let ss = steady_state(&liouvillian)?;
    Ok(Solved { model, liouvillian, ss })
}

fn state_summary(s: &Solved) -> Value {
    let alpha = s.ss.expect(s.model.cavity_op());
    json!({
        "alpha": [alpha.re, alpha.im],
        "cavity_photons": s.ss.expect(&s.model.cavity_number()).re,
        "phonons": s.ss.expect(&s.model.vibration_number()).re,
        "residual": s.ss.residual,
        "min_eigenvalue": s.ss.min_eigenvalue,
    })
}

fn inequality_json(r: &InequalityReport) -> Value {
    json!({
        "classical": r.is_classical(),
        "lower_violations": r.lower_violations.len(),
        "upper_violations": r.upper_violations.len(),
        "tau_zero_violations": r.tau_zero_violations.len(),
        "tau_zero_bound_violated": r.tau_zero_bound_violated,
        "max_excursion": r.max_excursion,
    })
}

type PointRows = (Vec<Vec<Vec<f64>>>, Value);

fn emission_point(config: &ScenarioConfig, p: &SystemParams, t: Truncation, prefix: &[f64]) -> Result<PointRows> {
    let s = solve(p, config, t)?;
    let state = FieldState::new(&s.liouvillian, &s.ss.rho, s.model.cavity_op())?;
    let g = &config.grids;
    let tau = linear_grid(g.tau_max, g.tau_points)?;
    let omega = linspace(g.omega_min, g.omega_max, g.omega_points)?;
    let raw = raw_traces(&state, &tau, false, &propagation())?;
    let mut spectrum = emission_spectrum(&raw, &omega)?;
    if config.output.normalize_emission && spectrum.peak_abs() > 0.0 {
        spectrum = spectrum.max_normalized();
    }
    let peaks = find_peaks(&spectrum, 1e-3);
    let bands = sidebands(&peaks, p.omega_m, 0.5 * p.omega_m);
    let rows = spectrum_rows(prefix, &[&spectrum]);
    let summary = json!({
        "state": state_summary(&s),
        "peaks": peaks,
        "sidebands": bands.map(|b| json!({
            "stokes": b.stokes,
            "anti_stokes": b.anti_stokes,
            "ratio": b.ratio(),
        })),
    });
    Ok((vec![rows], summary))
}

fn spectrum_rows(prefix: &[f64], spectra: &[&Spectrum]) -> Vec<Vec<f64>> {
    let omega = &spectra[0].omega_grid;
    (0..omega.len())
        .map(|k| {
            let mut row = prefix.to_vec();
            row.push(omega[k]);
            row.extend(spectra.iter().map(|s| s.values[k]));
            row
        })
        .collect()
}

fn chd_point(config: &ScenarioConfig, p: &SystemParams, t: Truncation, prefix: &[f64], spectra: bool) -> Result<PointRows> {
    let s = solve(p, config, t)?;
    let state = FieldState::new(&s.liouvillian, &s.ss.rho, s.model.cavity_op())?;
    let g = &config.grids;
    let tau = linear_grid(g.tau_max, g.tau_points)?;
    let traces = raw_traces(&state, &tau, false, &propagation())?.evaluate(&state, p.phi)?;
    let mut summary = json!({
        "state": state_summary(&s),
        "phi": p.phi,
        "h_zero": traces.positive.first(),
        "normalization": traces.positive.normalization,
        "max_imaginary": traces.positive.max_imaginary,
        "inequality_positive": inequality_json(&inequality_check(&traces.positive)),
        "inequality_negative": inequality_json(&inequality_check(&traces.negative)),
    });
    if !spectra {
        let mut time = Vec::with_capacity(2 * tau.len() - 1);
        for k in (1..tau.len()).rev() {
            let mut row = prefix.to_vec();
            row.extend([-tau[k], traces.negative.values[k]]);
            time.push(row);
        }
        for (t, h) in tau.iter().zip(&traces.positive.values) {
            let mut row = prefix.to_vec();
            row.extend([*t, *h]);
            time.push(row);
        }
        let components = (0..tau.len())
            .map(|k| {
                let mut row = prefix.to_vec();
                row.extend([tau[k], traces.h2.values[k], traces.h3.values[k], traces.hn.values[k]]);
                row
            })
            .collect();
        return Ok((vec![time, components], summary));
    }
    let omega = linspace(g.omega_min, g.omega_max, g.omega_points)?;
    let n_ss = state.number();
    let specs = chd_spectra(&traces.positive, &traces.negative, &traces.h2, &traces.h3, p.kappa, n_ss, &omega)?;
    let refs: Vec<&Spectrum> = specs.iter().collect();
    let flux = specs[0].flux.unwrap_or(0.0);
    let expected = |h0: f64| 4.0 * flux * std::f64::consts::PI * h0;
    let zero = [
        traces.positive.first() - 1.0,
        traces.negative.first() - 1.0,
        traces.h2.first(),
        traces.h3.first(),
    ];
    let integrals: Vec<Value> = specs
        .iter()
        .zip(zero)
        .map(|(s, h0)| {
            json!({
                "kind": s.kind.label(),
                "integral": s.integral(),
                "full_band_value": expected(h0),
                "min": s.min_value(),
                "peak_abs": s.peak_abs(),
            })
        })
        .collect();
    summary["flux"] = json!(flux);
    summary["spectra"] = Value::Array(integrals);
    Ok((vec![spectrum_rows(prefix, &refs)], summary))
}

fn noise_point(config: &ScenarioConfig, p: &SystemParams, t: Truncation, prefix: &[f64]) -> Result<PointRows> {
    let s = solve(p, config, t)?;
    let a = s.model.cavity_op();
    let n0 = noise_summary(&s.ss.rho, a, 0.0)?;
    let n1 = noise_summary(&s.ss.rho, a, std::f64::consts::FRAC_PI_2)?;
    let mut row = prefix.to_vec();
    row.extend([
        n0.variance_phi,
        n1.variance_phi,
        n0.h2,
        n1.h2,
        n0.h3,
        n1.h3,
        n0.hn,
        n1.hn,
        n0.moments.n,
    ]);
    Ok((vec![vec![row]], json!({ "state": state_summary(&s) })))
}

fn sensor_setup(config: &ScenarioConfig, t: Truncation) -> FilteredSetup {
    let sc = &config.sensors;
    let sensor = |omega: f64| SensorParams {
        omega,
        gamma: sc.gamma,
        epsilon: sc.epsilon,
    };
    let mut setup = FilteredSetup::new(sensor(sc.omega1), sensor(sc.omega2), t.n_cavity, t.n_vibration);
    setup.margin = sc.margin;
    setup
}

fn filtered_point(config: &ScenarioConfig, p: &SystemParams, t: Truncation, prefix: &[f64]) -> Result<PointRows> {
    let setup = sensor_setup(config, t);
    let z = filtered_zero_delay(p, &setup, p.phi)?;
    let mut row = prefix.to_vec();
    row.extend([z.h_12, z.h_21, z.population1, z.population2, z.cavity_photons]);
    Ok((vec![vec![row]], json!({ "zero_delay": z })))
}

fn table_layout(config: &ScenarioConfig) -> (Vec<Table>, bool) {
    match config.scenario {
        Scenario::EmissionSpectrum => {
            let (p, _) = prefix_columns(config, false);
            let mut t = make_table("emission_spectrum", &p, &["omega_eV", "S_emission"]);
            t.comment("S(omega) = Re int_0^inf e^{-i omega tau} <da^dag(tau) da(0)> dtau, omega relative to the pump");
            (vec![t], false)
        }
        Scenario::ChdTime => {
            let (p, _) = prefix_columns(config, false);
            let mut time = make_table("chd_time", &p, &["tau", "h"]);
            time.comment(NEGATIVE_BRANCH_NOTE);
            let mut comp = make_table("chd_components", &p, &["tau", "h2", "h3", "hn"]);
            comp.comment("h2, h3: positive branch at tau; hn: negative branch at -tau");
            (vec![time, comp], false)
        }
        Scenario::ChdSpectrum => {
            let (p, _) = prefix_columns(config, false);
            let mut t = make_table("chd_spectrum", &p, &["omega_eV", "S_pos", "S_neg", "S2", "S3"]);
            t.comment("S(omega) = 4 F int_0^inf [h(tau) - 1] cos(omega tau) dtau with F = 2 kappa <a^dag a>");
            (vec![t], false)
        }
        Scenario::NoiseSweep => {
            let (p, _) = prefix_columns(config, true);
            let t = make_table(
                "noise_sweep",
                &p,
                &["V_0", "V_pi2", "H2_0", "H2_pi2", "H3_0", "H3_pi2", "Hn_0", "Hn_pi2", "n_mean"],
            );
            (vec![t], true)
        }
        Scenario::FilteredSweep => {
            let (p, _) = prefix_columns(config, true);
            let mut t = make_table(
                "filtered_sweep",
                &p,
                &["h_SaS", "h_aSS", "population1", "population2", "n_mean"],
            );
            t.comment(format!(
                "sensor 1 at {} eV, sensor 2 at {} eV (rotating frame), gamma = {} eV, epsilon = {} eV",
                config.sensors.omega1, config.sensors.omega2, config.sensors.gamma, config.sensors.epsilon
            ));
            t.comment("h_SaS: intensity on sensor 1, quadrature on sensor 2; h_aSS: the swapped assignment");
            (vec![t], true)
        }
        Scenario::ConvergenceReport => (Vec::new(), false),
    }
}

fn convergence_table(config: &ScenarioConfig, records: &[(f64, ConvergenceRecord)]) -> Table {
    let (p, _) = prefix_columns(config, false);
    let mut t = make_table(
        "convergence",
        &p,
        &["n_cavity", "n_vibration", "cavity_photons", "phonons", "h_zero", "V_phi", "change_to_next"],
    );
    t.comment(format!("tolerance: {}", records.first().map(|r| r.1.tolerance).unwrap_or(config.truncation.tolerance)));
    for (value, rec) in records {
        let prefix = if p.is_empty() { Vec::new() } else { prefix_values(Some(*value), &config.params, &p, config.sweep.as_ref().map(|s| s.parameter).unwrap_or(SweepParameter::Delta)) };
        for (k, s) in rec.steps.iter().enumerate() {
            let mut row = prefix.clone();
            row.extend([
                s.truncation.n_cavity as f64,
                s.truncation.n_vibration as f64,
                s.cavity_photons,
                s.phonons,
                s.h_zero.unwrap_or(f64::NAN),
                s.variance_phi,
                rec.changes.get(k).copied().unwrap_or(f64::NAN),
            ]);
            t.push(row);
        }
    }
    t
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs a scenario without touching the filesystem.
pub fn compute_scenario(config: &ScenarioConfig, opts: &RunOptions) -> Result<ScenarioOutput> {
    with_pool(opts.threads, || compute_inner(config, opts))?
}

fn compute_inner(config: &ScenarioConfig, opts: &RunOptions) -> Result<ScenarioOutput> {
    let tolerance = opts.tolerance.unwrap_or(config.truncation.tolerance);
    if !(tolerance > 0.0) {
        return Err(Error::config("tolerance", "must be positive"));
    }
    let points = sweep_points(config);

    if config.scenario == Scenario::ConvergenceReport {
        let mut picks = vec![0, points.len() / 2, points.len() - 1];
        picks.dedup();
        let mut records = Vec::new();
        for k in picks {
            let p = &points[k];
            let rec = converge_truncation(&p.params, &config.truncation, tolerance).map_err(|e| point_error(config, p.value, e))?;
            records.push((p.value.unwrap_or(f64::NAN), rec));
        }
        let mut chosen = Truncation {
            n_cavity: config.truncation.n_cavity,
            n_vibration: config.truncation.n_vibration,
        };
        for (_, r) in &records {
            chosen.n_cavity = chosen.n_cavity.max(r.chosen.n_cavity);
            chosen.n_vibration = chosen.n_vibration.max(r.chosen.n_vibration);
        }
        let mut table = convergence_table(config, &records);
        let mut hdr = Table::new("", &[]);
        header(&mut hdr, config, chosen);
        hdr.comments.append(&mut table.comments);
        table.comments = hdr.comments;
        return Ok(ScenarioOutput {
            tables: vec![table],
            summary: json!({ "scenario": config.scenario, "chosen": chosen }),
            truncation: chosen,
            convergence: records,
        });
    }

    let (truncation, convergence) = choose_truncation(config, &points, tolerance)?;
    let (mut tables, always_prefix) = table_layout(config);
    let (prefix_cols, axis) = prefix_columns(config, always_prefix);

    let results: Vec<Result<PointRows>> = points
        .par_iter()
        .map(|pt| {
            let prefix = prefix_values(pt.value, &pt.params, &prefix_cols, axis);
            let t = truncation;
            let r = match config.scenario {
                Scenario::EmissionSpectrum => emission_point(config, &pt.params, t, &prefix),
                Scenario::ChdTime => chd_point(config, &pt.params, t, &prefix, false),
                Scenario::ChdSpectrum => chd_point(config, &pt.params, t, &prefix, true),
                Scenario::NoiseSweep => noise_point(config, &pt.params, t, &prefix),
                Scenario::FilteredSweep => filtered_point(config, &pt.params, t, &prefix),
                Scenario::ConvergenceReport => unreachable!("handled above"),
            };
            r.map_err(|e| point_error(config, pt.value, e))
        })
        .collect();

    let mut point_summaries = Vec::with_capacity(points.len());
    for (pt, r) in points.iter().zip(results) {
        let (rows, summary) = r?;
        for (table, rows) in tables.iter_mut().zip(rows) {
            for row in rows {
                table.push(row);
            }
        }
        point_summaries.push(json!({ "value": pt.value, "summary": summary }));
    }
    for t in &mut tables {
        let mut hdr = Table::new("", &[]);
        header(&mut hdr, config, truncation);
        hdr.comments.extend(std::mem::take(&mut t.comments));
        t.comments = hdr.comments;
    }

    let mut summary = json!({
        "scenario": config.scenario,
        "truncation": truncation,
        "sweep": config.sweep,
        "points": point_summaries,
    });
    if config.scenario == Scenario::FilteredSweep {
        let mid = &points[points.len() / 2];
        let setup = sensor_setup(config, truncation);
        let ba = back_action(&mid.params, &setup).map_err(|e| point_error(config, mid.value, e))?;
        summary["back_action"] = json!({ "value": mid.value, "relative_change": ba });
    }
    Ok(ScenarioOutput {
        tables,
        summary,
        truncation,
        convergence,
    })
}

/// Runs a scenario and writes its tables, `summary.json` and `manifest.json`.
pub fn run_scenario(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    let out_dir = resolve_out_dir(opts.out_dir.as_deref(), config)?;
    let format = opts.format.unwrap_or(config.output.format);
    let output = compute_scenario(config, opts)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let mut files = Vec::new();
    for t in &output.tables {
        files.push(write_file(&out_dir, &t.file_name(format), &t.render(format)?)?);
    }
    let mut summary = serde_json::to_string_pretty(&output.summary)?;
    summary.push('\n');
    files.push(write_file(&out_dir, "summary.json", &summary)?);

    let wall_time = start.elapsed().as_secs_f64();
    let checksums: serde_json::Map<String, Value> = files
        .iter()
        .map(|(p, h)| (p.file_name().unwrap_or_default().to_string_lossy().into_owned(), json!(h)))
        .collect();
    let convergence: Vec<Value> = output
        .convergence
        .iter()
        .map(|(v, r)| json!({ "value": if v.is_nan() { Value::Null } else { json!(v) }, "record": r }))
        .collect();
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": config.scenario,
        "config": config,
        "format": format,
        "threads": opts.threads,
        "truncation": output.truncation,
        "convergence": convergence,
        "wall_time_seconds": wall_time,
        "files": checksums,
    });
    let mut manifest = serde_json::to_string_pretty(&manifest)?;
    manifest.push('\n');
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(RunReport {
        output,
        out_dir,
        files,
        wall_time,
    })
}
