//! Scenario configuration: a flat `key = value` file with dotted section keys,
//! or the equivalent JSON document.
//!
//! ```text
//! scenario = noise-sweep
//! params.g = 5e-3
//! params.omega_pump = 0.15
//! sweep.parameter = delta
//! sweep.start = -0.15
//! sweep.stop = 0.15
//! sweep.count = 31
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{kappa_from_quality, SystemParams, DEFAULT_SENSOR_MARGIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    EmissionSpectrum,
    ChdTime,
    ChdSpectrum,
    NoiseSweep,
    FilteredSweep,
    ConvergenceReport,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::EmissionSpectrum,
        Scenario::ChdTime,
        Scenario::ChdSpectrum,
        Scenario::NoiseSweep,
        Scenario::FilteredSweep,
        Scenario::ConvergenceReport,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::EmissionSpectrum => "emission-spectrum",
            Scenario::ChdTime => "chd-time",
            Scenario::ChdSpectrum => "chd-spectrum",
            Scenario::NoiseSweep => "noise-sweep",
            Scenario::FilteredSweep => "filtered-sweep",
            Scenario::ConvergenceReport => "convergence-report",
        }
    }

    pub fn uses_sensors(&self) -> bool {
        matches!(self, Scenario::FilteredSweep)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::config("scenario", format!("unknown scenario `{s}`")))
    }
}

/// Parameters a sweep may vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Delta,
    G,
    OmegaPump,
    Kappa,
    GammaM,
    OmegaM,
    Temperature,
    Phi,
}

impl SweepParameter {
    const ALL: [SweepParameter; 8] = [
        SweepParameter::Delta,
        SweepParameter::G,
        SweepParameter::OmegaPump,
        SweepParameter::Kappa,
        SweepParameter::GammaM,
        SweepParameter::OmegaM,
        SweepParameter::Temperature,
        SweepParameter::Phi,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Delta => "delta",
            SweepParameter::G => "g",
            SweepParameter::OmegaPump => "omega_pump",
            SweepParameter::Kappa => "kappa",
            SweepParameter::GammaM => "gamma_m",
            SweepParameter::OmegaM => "omega_m",
            SweepParameter::Temperature => "temperature",
            SweepParameter::Phi => "phi",
        }
    }

    /// Column header including units.
    pub fn column(&self) -> &'static str {
        match self {
            SweepParameter::Delta => "delta_eV",
            SweepParameter::G => "g_eV",
            SweepParameter::OmegaPump => "omega_pump_eV",
            SweepParameter::Kappa => "kappa_eV",
            SweepParameter::GammaM => "gamma_m_eV",
            SweepParameter::OmegaM => "omega_m_eV",
            SweepParameter::Temperature => "temperature_K",
            SweepParameter::Phi => "phi_rad",
        }
    }

    pub fn apply(&self, params: &mut SystemParams, value: f64) {
        match self {
            SweepParameter::Delta => params.delta = value,
            SweepParameter::G => params.g = value,
            SweepParameter::OmegaPump => params.omega_pump = value,
            SweepParameter::Kappa => params.kappa = value,
            SweepParameter::GammaM => params.gamma_m = value,
            SweepParameter::OmegaM => params.omega_m = value,
            SweepParameter::Temperature => {
                params.temperature = Some(value);
                params.n_th = None;
            }
            SweepParameter::Phi => params.phi = value,
        }
    }
}

impl FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SweepParameter::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("sweep.parameter", format!("`{s}` is not a numeric sweep parameter")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let m = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| match i {
                0 => self.start,
                i if i + 1 == self.count => self.stop,
                i => {
                    let k = i as f64;
                    ((m - k) * self.start + k * self.stop) / m
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Largest delay in ħ/eV.
    pub tau_max: f64,
    pub tau_points: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Fock,
    Displaced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub n_cavity: usize,
    pub n_vibration: usize,
    pub tolerance: f64,
    pub frame: FrameKind,
    /// Run the convergence schedule before computing.
    pub converge: bool,
    pub max_cavity: usize,
    pub max_vibration: usize,
    /// Largest Hilbert-space dimension (all modes) the schedule may reach.
    pub max_hilbert_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub epsilon: f64,
    pub gamma: f64,
    /// Intensity-port sensor frequency (rotating frame).
    pub omega1: f64,
    /// Quadrature-port sensor frequency (rotating frame).
    pub omega2: f64,
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::config("output.format", format!("expected csv or json, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub format: OutputFormat,
    /// Scale the emission spectrum to unit maximum.
    pub normalize_emission: bool,
}

/// Fully resolved scenario configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub params: SystemParams,
    pub sweep: Option<SweepSpec>,
    pub grids: GridSpec,
    pub truncation: TruncationSpec,
    pub sensors: SensorSpec,
    pub output: OutputSpec,
}

/// Flat map of dotted keys to raw string values.
pub type RawConfig = BTreeMap<String, String>;

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
pub fn parse_key_values(text: &str) -> Result<RawConfig> {
    let mut out = RawConfig::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(format!("line {}", lineno + 1), "expected `key = value`"));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::config(format!("line {}", lineno + 1), "empty key"));
        }
        let value = value.trim().trim_matches('"').to_string();
        if out.insert(key.to_string(), value).is_some() {
            return Err(Error::config(key, "duplicate key"));
        }
    }
    Ok(out)
}

/// Flattens a JSON object into dotted keys.
pub fn parse_json(text: &str) -> Result<RawConfig> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let mut out = RawConfig::new();
    flatten("", &value, &mut out)?;
    Ok(out)
}

fn flatten(prefix: &str, value: &serde_json::Value, out: &mut RawConfig) -> Result<()> {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out)?;
            }
        }
        Value::Null => {}
        Value::Bool(b) => {
            out.insert(prefix.to_string(), b.to_string());
        }
        Value::Number(n) => {
            out.insert(prefix.to_string(), n.to_string());
        }
        Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        Value::Array(_) => return Err(Error::config(prefix, "arrays are not supported")),
    }
    if prefix.is_empty() && !value.is_object() {
        return Err(Error::config("<root>", "expected a JSON object"));
    }
    Ok(())
}

/// Reads a config file; `.json` files (or text starting with `{`) are JSON.
pub fn load_raw(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    if is_json {
        parse_json(&text)
    } else {
        parse_key_values(&text)
    }
}

struct Reader {
    raw: RawConfig,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.raw.remove(key)
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => {
                let x: f64 = v.parse().map_err(|_| Error::config(key, format!("`{v}` is not a number")))?;
                if !x.is_finite() {
                    return Err(Error::config(key, "must be finite"));
                }
                Ok(Some(x))
            }
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(key, format!("`{v}` is not a non-negative integer"))),
        }
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => match v.as_str() {
                "true" | "yes" | "1" => Ok(Some(true)),
                "false" | "no" | "0" => Ok(Some(false)),
                _ => Err(Error::config(key, format!("`{v}` is not a boolean"))),
            },
        }
    }
}

/// Builds a resolved configuration, filling defaults and validating every
/// field. `scenario` overrides (and must agree with) a `scenario` key.
pub fn resolve(raw: RawConfig, scenario: Option<Scenario>) -> Result<ScenarioConfig> {
    let mut r = Reader { raw };
    let declared = r.take("scenario").map(|s| s.parse::<Scenario>()).transpose()?;
    let scenario = match (scenario, declared) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::config("scenario", format!("command line asks for {a} but the config declares {b}")))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(Error::config("scenario", "missing")),
    };

    let mut params = SystemParams::default();
    if scenario.uses_sensors() {
        params.phi = 0.0;
    }
    macro_rules! set {
        ($key:literal, $field:expr) => {
            if let Some(v) = r.f64($key)? {
                $field = v;
            }
        };
    }
    set!("params.omega_m", params.omega_m);
    if scenario.uses_sensors() {
        params.omega_pump = 0.3 * params.omega_m;
    }
    set!("params.delta", params.delta);
    set!("params.g", params.g);
    set!("params.omega_pump", params.omega_pump);
    if let Some(sq) = r.f64("params.omega_pump_squared")? {
        if sq < 0.0 {
            return Err(Error::config("params.omega_pump_squared", "must be non-negative"));
        }
        params.omega_pump = sq.sqrt();
    }
    set!("params.gamma_m", params.gamma_m);
    set!("params.omega_c", params.omega_c);
    set!("params.kappa", params.kappa);
    if let Some(q) = r.f64("params.quality")? {
        params.kappa = kappa_from_quality(params.omega_c, q).map_err(|_| Error::config("params.quality", "must be positive"))?;
    }
    set!("params.phi", params.phi);
    let temperature = r.f64("params.temperature")?;
    let n_th = r.f64("params.n_th")?;
    match (temperature, n_th) {
        (Some(t), n) => {
            params.temperature = Some(t);
            params.n_th = n;
        }
        (None, Some(n)) => {
            params.temperature = None;
            params.n_th = Some(n);
        }
        (None, None) => {}
    }
    params.validate().map_err(|e| match e {
        Error::InvalidParameter { field, reason } => Error::config(format!("params.{field}"), reason),
        other => other,
    })?;

    let sweep = match r.take("sweep.parameter") {
        None => {
            for key in ["sweep.start", "sweep.stop", "sweep.count"] {
                if r.raw.contains_key(key) {
                    return Err(Error::config(key, "given without sweep.parameter"));
                }
            }
            None
        }
        Some(name) => {
            let parameter: SweepParameter = name.parse()?;
            let start = r.f64("sweep.start")?.ok_or_else(|| Error::config("sweep.start", "missing"))?;
            let count = r.usize("sweep.count")?.unwrap_or(1);
            let stop = r.f64("sweep.stop")?.unwrap_or(start);
            if count == 0 {
                return Err(Error::config("sweep.count", "must be at least 1"));
            }
            if count > 1 && stop <= start {
                return Err(Error::config("sweep.stop", "must exceed sweep.start"));
            }
            Some(SweepSpec {
                parameter,
                start,
                stop,
                count,
            })
        }
    };

    let grids = GridSpec {
        tau_max: r.f64("grid.tau_max")?.unwrap_or(20.0 / params.gamma_m),
        tau_points: r.usize("grid.tau_points")?.unwrap_or(2000),
        omega_min: r.f64("grid.omega_min")?.unwrap_or(-2.0 * params.omega_m),
        omega_max: r.f64("grid.omega_max")?.unwrap_or(2.0 * params.omega_m),
        omega_points: r.usize("grid.omega_points")?.unwrap_or(2001),
    };
    if !(grids.tau_max > 0.0) {
        return Err(Error::config("grid.tau_max", "must be positive"));
    }
    if grids.tau_points < 2 {
        return Err(Error::config("grid.tau_points", "need at least 2 points"));
    }
    if !(grids.omega_max > grids.omega_min) {
        return Err(Error::config("grid.omega_max", "must exceed grid.omega_min"));
    }
    if grids.omega_points < 2 {
        return Err(Error::config("grid.omega_points", "need at least 2 points"));
    }

    let (default_na, default_nb) = if scenario.uses_sensors() { (4, 4) } else { (6, 8) };
    let frame = match r.take("truncation.frame").as_deref() {
        None | Some("displaced") => FrameKind::Displaced,
        Some("fock") => FrameKind::Fock,
        Some(other) => return Err(Error::config("truncation.frame", format!("expected fock or displaced, got `{other}`"))),
    };
    let truncation = TruncationSpec {
        n_cavity: r.usize("truncation.n_cavity")?.unwrap_or(default_na),
        n_vibration: r.usize("truncation.n_vibration")?.unwrap_or(default_nb),
        tolerance: r.f64("truncation.tolerance")?.unwrap_or(1e-3),
        frame,
        converge: r.bool("truncation.converge")?.unwrap_or(true),
        max_cavity: r.usize("truncation.max_cavity")?.unwrap_or(48),
        max_vibration: r.usize("truncation.max_vibration")?.unwrap_or(24),
        max_hilbert_dim: r.usize("truncation.max_hilbert_dim")?.unwrap_or(128),
    };
    for (key, v) in [("truncation.n_cavity", truncation.n_cavity), ("truncation.n_vibration", truncation.n_vibration)] {
        if v < 2 {
            return Err(Error::config(key, "must be at least 2"));
        }
    }
    if !(truncation.tolerance > 0.0) {
        return Err(Error::config("truncation.tolerance", "must be positive"));
    }

    let sensors = SensorSpec {
        epsilon: r.f64("sensors.epsilon")?.unwrap_or(1e-4 * params.omega_m),
        gamma: r.f64("sensors.gamma")?.unwrap_or(params.gamma_m),
        omega1: r.f64("sensors.omega1")?.unwrap_or(-params.omega_m),
        omega2: r.f64("sensors.omega2")?.unwrap_or(params.omega_m),
        margin: r.f64("sensors.margin")?.unwrap_or(DEFAULT_SENSOR_MARGIN),
    };
    for (key, v) in [("sensors.epsilon", sensors.epsilon), ("sensors.gamma", sensors.gamma), ("sensors.margin", sensors.margin)] {
        if !(v > 0.0) {
            return Err(Error::config(key, "must be positive"));
        }
    }

    let output = OutputSpec {
        dir: r.take("output.dir").map(PathBuf::from),
        format: r.take("output.format").map(|s| s.parse()).transpose()?.unwrap_or(OutputFormat::Csv),
        normalize_emission: r.bool("output.normalize")?.unwrap_or(false),
    };

    if let Some(key) = r.raw.keys().next() {
        return Err(Error::config(key.clone(), "unknown key"));
    }
    Ok(ScenarioConfig {
        scenario,
        params,
        sweep,
        grids,
        truncation,
        sensors,
        output,
    })
}

pub fn load(path: &Path, scenario: Option<Scenario>) -> Result<ScenarioConfig> {
    resolve(load_raw(path)?, scenario)
}
