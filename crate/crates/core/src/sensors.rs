//! Frequency-filtered intensity-field correlations from two weakly coupled
//! two-level sensors.
//!
//! The quadrature sensor uses ς_φ = (ς e^{iφ} + ς† e^{−iφ})/2, the opposite
//! phase sign to the cavity quadrature; φ is applied per port as given.

use serde::{Deserialize, Serialize};

use crate::chd::{phase, Branch, CorrelationTrace, MEAN_FIELD_GUARD};
use crate::error::{Error, Result};
use crate::fock::{ModeSpace, OperatorMatrix};
use crate::model::{CavityFrame, SensorParams, SystemModel, SystemParams, DEFAULT_SENSOR_MARGIN};
use crate::solver::{regression_traces, steady_state, PropagationOptions, SteadyState};

/// Result of the weak-coupling admissibility test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SensorCheck {
    Ok { bound: f64 },
    Rejected { bound: f64, limit: f64 },
}

impl SensorCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, SensorCheck::Ok { .. })
    }
}

/// Accepts a sensor iff ε ≤ 0.1·√(Γ γ_q / 2).
pub fn validate_sensors(cfg: &SensorParams, gamma_q: f64) -> SensorCheck {
    validate_sensors_with_margin(cfg, gamma_q, DEFAULT_SENSOR_MARGIN)
}

pub fn validate_sensors_with_margin(cfg: &SensorParams, gamma_q: f64, margin: f64) -> SensorCheck {
    let adm = cfg.admissibility(gamma_q, margin);
    if adm.admissible {
        SensorCheck::Ok { bound: adm.bound }
    } else {
        SensorCheck::Rejected {
            bound: adm.bound,
            limit: adm.limit,
        }
    }
}

/// Two sensors attached to a truncated cavity-vibration system. Sensor 1 is
/// the intensity port and sensor 2 the quadrature port; the zero-delay
/// routine also evaluates the swapped assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilteredSetup {
    pub sensor1: SensorParams,
    pub sensor2: SensorParams,
    pub n_cavity: usize,
    pub n_vibration: usize,
    pub margin: f64,
}

impl FilteredSetup {
    pub fn new(sensor1: SensorParams, sensor2: SensorParams, n_cavity: usize, n_vibration: usize) -> Self {
        FilteredSetup {
            sensor1,
            sensor2,
            n_cavity,
            n_vibration,
            margin: DEFAULT_SENSOR_MARGIN,
        }
    }

    /// Sensors at ∓ω_m with linewidth γ_m and coupling `epsilon`.
    pub fn sidebands(params: &SystemParams, epsilon: f64, n_cavity: usize, n_vibration: usize) -> Self {
        let sensor = |omega: f64| SensorParams {
            omega,
            gamma: params.gamma_m,
            epsilon,
        };
        FilteredSetup::new(sensor(-params.omega_m), sensor(params.omega_m), n_cavity, n_vibration)
    }

    pub fn space(&self) -> Result<ModeSpace> {
        ModeSpace::with_sensors(self.n_cavity, self.n_vibration, 2)
    }

    /// Same setup with both couplings multiplied by `factor`.
    pub fn scaled_coupling(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.sensor1.epsilon *= factor;
        out.sensor2.epsilon *= factor;
        out
    }

    pub fn validate(&self, gamma_q: f64) -> Result<()> {
        for (index, s) in [&self.sensor1, &self.sensor2].into_iter().enumerate() {
            if let SensorCheck::Rejected { bound, limit } = validate_sensors_with_margin(s, gamma_q, self.margin) {
                return Err(Error::SensorRejected {
                    index,
                    coupling: s.epsilon,
                    limit,
                    bound,
                });
            }
        }
        Ok(())
    }

    /// Model with the cavity displaced by its bare mean field.
    pub fn model(&self, params: &SystemParams) -> Result<SystemModel> {
        self.validate(params.gamma_m)?;
        SystemModel::with_sensor_margin(
            params.clone(),
            self.space()?,
            vec![self.sensor1.clone(), self.sensor2.clone()],
            CavityFrame::mean_field(params),
            self.margin,
        )
    }
}

/// Zero-delay filtered correlations with both port assignments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroDelayPair {
    pub phi: f64,
    /// Intensity on sensor 1, quadrature on sensor 2.
    pub h_12: f64,
    /// Intensity on sensor 2, quadrature on sensor 1.
    pub h_21: f64,
    pub population1: f64,
    pub population2: f64,
    pub cavity_photons: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FilteredOutput {
    Trace(CorrelationTrace),
    ZeroDelay(ZeroDelayPair),
}

/// ς_φ = (ς e^{iφ} + ς† e^{−iφ})/2.
fn sensor_quadrature(sigma: &OperatorMatrix, phi: f64) -> OperatorMatrix {
    sigma
        .scale(phase(phi))
        .add_scaled(&sigma.adjoint(), phase(-phi))
        .scale_real(0.5)
}

fn checked_mean(q: f64, population: f64) -> Result<()> {
    let threshold = MEAN_FIELD_GUARD * population.max(0.0).sqrt();
    if !(q.abs() > threshold) {
        return Err(Error::VanishingDenominator {
            quantity: "<sigma_phi;2>_ss",
            value: q.abs(),
            threshold,
        });
    }
    Ok(())
}

/// ⟨ς_i†ς_i ς_{φ;j}⟩ / (⟨ς_i†ς_i⟩⟨ς_{φ;j}⟩) at equal times.
fn zero_delay(model: &SystemModel, ss: &SteadyState, intensity: usize, quadrature: usize, phi: f64) -> Result<f64> {
    let s = model.sensor_op(intensity);
    let n = s.adjoint().matmul(s);
    let q = sensor_quadrature(model.sensor_op(quadrature), phi);
    let pop = ss.expect(&n).re;
    let qm = ss.expect(&q).re;
    let qn = model.sensor_op(quadrature);
    checked_mean(qm, ss.expect(&qn.adjoint().matmul(qn)).re)?;
    if !(pop > 0.0) {
        return Err(Error::VanishingDenominator {
            quantity: "<sigma^dag sigma>_ss",
            value: pop,
            threshold: 0.0,
        });
    }
    let joint = ss.expect(&n.matmul(&q)).re;
    Ok(joint / (pop * qm))
}

/// Zero-delay values for both port assignments from one steady state.
pub fn filtered_zero_delay(params: &SystemParams, setup: &FilteredSetup, phi: f64) -> Result<ZeroDelayPair> {
    let model = setup.model(params)?;
    let ss = steady_state(&model.liouvillian())?;
    zero_delay_from_state(&model, &ss, phi)
}

pub fn zero_delay_from_state(model: &SystemModel, ss: &SteadyState, phi: f64) -> Result<ZeroDelayPair> {
    let pop = |i: usize| {
        let s = model.sensor_op(i);
        ss.expect(&s.adjoint().matmul(s)).re
    };
    Ok(ZeroDelayPair {
        phi,
        h_12: zero_delay(model, ss, 0, 1, phi)?,
        h_21: zero_delay(model, ss, 1, 0, phi)?,
        population1: pop(0),
        population2: pop(1),
        cavity_photons: ss.expect(&model.cavity_number()).re,
    })
}

/// h_φ(ω₁, ω₂, τ) for τ ≥ 0: intensity on sensor 1 at time 0, quadrature of
/// sensor 2 at time τ.
pub fn filtered_trace(
    params: &SystemParams,
    setup: &FilteredSetup,
    phi: f64,
    tau_grid: &[f64],
    opts: &PropagationOptions,
) -> Result<CorrelationTrace> {
    let model = setup.model(params)?;
    let l = model.liouvillian();
    let ss = steady_state(&l)?;
    let s1 = model.sensor_op(0);
    let s2 = model.sensor_op(1);
    let pop = ss.expect(&s1.adjoint().matmul(s1)).re;
    let q = sensor_quadrature(s2, phi);
    let qm = ss.expect(&q).re;
    checked_mean(qm, ss.expect(&s2.adjoint().matmul(s2)).re)?;
    let norm = pop * qm;
    let y = s1.adjoint().dense_mul(&s1.mul_dense(&ss.rho));
    let s2d = s2.adjoint();
    let traces = regression_traces(&l, &[y], &[(0, s2), (0, &s2d)], tau_grid, opts)?;
    let (ep, em) = (phase(phi), phase(-phi));
    let mut values = Vec::with_capacity(tau_grid.len());
    let mut residue: f64 = 0.0;
    for (t, td) in traces[0].iter().zip(&traces[1]) {
        let v = (ep * t + em * td) * 0.5 / norm;
        residue = residue.max(v.im.abs());
        values.push(v.re);
    }
    Ok(CorrelationTrace {
        tau_grid: tau_grid.to_vec(),
        values,
        branch: Branch::Positive,
        phi,
        normalization: norm,
        max_imaginary: residue,
    })
}

/// Time trace or zero-delay pair, depending on `zero_delay_only`.
pub fn filtered_correlation(
    params: &SystemParams,
    setup: &FilteredSetup,
    phi: f64,
    tau_grid: &[f64],
    zero_delay_only: bool,
    opts: &PropagationOptions,
) -> Result<FilteredOutput> {
    if zero_delay_only {
        Ok(FilteredOutput::ZeroDelay(filtered_zero_delay(params, setup, phi)?))
    } else {
        Ok(FilteredOutput::Trace(filtered_trace(params, setup, phi, tau_grid, opts)?))
    }
}

/// Relative change of ⟨a†a⟩ caused by attaching the sensors.
pub fn back_action(params: &SystemParams, setup: &FilteredSetup) -> Result<f64> {
    let with = setup.model(params)?;
    let ss_with = steady_state(&with.liouvillian())?;
    let bare = SystemModel::new(
        params.clone(),
        ModeSpace::new(vec![setup.n_cavity, setup.n_vibration])?,
        vec![],
        CavityFrame::mean_field(params),
    )?;
    let ss_bare = steady_state(&bare.liouvillian())?;
    let n_with = ss_with.expect(&with.cavity_number()).re;
    let n_bare = ss_bare.expect(&bare.cavity_number()).re;
    Ok((n_with - n_bare).abs() / n_bare.abs())
}
