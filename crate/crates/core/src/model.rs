//! Physical parameters, the rotating-frame Hamiltonian and the Lindblad
//! generator in vectorized (column-stacked) form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{embed_operator, ladder_operator, ModeSpace, OperatorMatrix, C64, ONE};

/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV: f64 = 8.617333262e-5;

/// Default factor between a sensor coupling and its weak-coupling scale.
pub const DEFAULT_SENSOR_MARGIN: f64 = 0.1;

/// Mean thermal occupation (e^{ω/k_B T} − 1)^{-1} of a bosonic mode.
pub fn thermal_occupation(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::param("omega", format!("must be positive, got {omega}")));
    }
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::param("temperature", format!("must be non-negative, got {temperature}")));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (omega / (BOLTZMANN_EV * temperature)).exp_m1())
}

/// Cavity linewidth κ = ω_c / Q.
pub fn kappa_from_quality(omega_c: f64, quality: f64) -> Result<f64> {
    if !(omega_c > 0.0) || !(quality > 0.0) {
        return Err(Error::param("quality", "cavity energy and Q must be positive"));
    }
    Ok(omega_c / quality)
}

/// Physical parameters in eV (temperature in K).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_m: f64,
    pub delta: f64,
    pub g: f64,
    pub omega_pump: f64,
    pub kappa: f64,
    pub gamma_m: f64,
    pub temperature: Option<f64>,
    pub n_th: Option<f64>,
    pub omega_c: f64,
    /// Homodyne quadrature phase in radians.
    pub phi: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            omega_m: 0.1,
            delta: 0.0,
            g: 5e-3,
            omega_pump: 0.15,
            kappa: 0.25,
            gamma_m: 1e-3,
            temperature: Some(300.0),
            n_th: None,
            omega_c: 2.5,
            phi: std::f64::consts::FRAC_PI_2,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("omega_m", self.omega_m),
            ("delta", self.delta),
            ("g", self.g),
            ("omega_pump", self.omega_pump),
            ("kappa", self.kappa),
            ("gamma_m", self.gamma_m),
            ("omega_c", self.omega_c),
            ("phi", self.phi),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(Error::param(field, "must be finite"));
            }
        }
        for (field, v) in [("omega_m", self.omega_m), ("kappa", self.kappa), ("gamma_m", self.gamma_m)] {
            if v <= 0.0 {
                return Err(Error::param(field, format!("must be positive, got {v}")));
            }
        }
        if let Some(t) = self.temperature {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::param("temperature", format!("must be non-negative, got {t}")));
            }
        }
        if let Some(n) = self.n_th {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(Error::param("n_th", format!("must be non-negative, got {n}")));
            }
        }
        match (self.temperature, self.n_th) {
            (None, None) => Err(Error::param("temperature", "either temperature or n_th is required")),
            (Some(t), Some(n)) => {
                let expected = thermal_occupation(self.omega_m, t)?;
                let scale = expected.abs().max(n.abs()).max(f64::MIN_POSITIVE);
                if (expected - n).abs() > 1e-10 * scale {
                    Err(Error::param(
                        "n_th",
                        format!("{n} is inconsistent with temperature {t} K (expected {expected})"),
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Thermal phonon occupation, taken from `n_th` when given.
    pub fn thermal_phonons(&self) -> Result<f64> {
        match (self.n_th, self.temperature) {
            (Some(n), _) => Ok(n),
            (None, Some(t)) => thermal_occupation(self.omega_m, t),
            (None, None) => Err(Error::param("temperature", "either temperature or n_th is required")),
        }
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_c / self.kappa
    }

    /// Mean field Ω/(iΔ + κ/2) of the bare driven cavity.
    pub fn bare_cavity_amplitude(&self) -> C64 {
        C64::new(self.omega_pump, 0.0) / C64::new(self.kappa / 2.0, self.delta)
    }
}

/// A two-level sensor: transition energy in the rotating frame, linewidth and
/// coupling to the cavity field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub omega: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

/// Outcome of the weak-coupling test for one sensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorAdmissibility {
    /// √(Γ γ_q / 2).
    pub bound: f64,
    /// `margin * bound`, the largest accepted coupling.
    pub limit: f64,
    pub admissible: bool,
}

impl SensorParams {
    pub fn admissibility(&self, gamma_q: f64, margin: f64) -> SensorAdmissibility {
        let bound = (self.gamma * gamma_q / 2.0).sqrt();
        let limit = margin * bound;
        SensorAdmissibility {
            bound,
            limit,
            admissible: self.epsilon > 0.0 && self.gamma > 0.0 && self.epsilon <= limit,
        }
    }

    fn check(&self, index: usize, gamma_q: f64, margin: f64) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::param(format!("sensor{}.gamma", index + 1), "must be positive"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::param(format!("sensor{}.epsilon", index + 1), "must be positive"));
        }
        if !self.omega.is_finite() {
            return Err(Error::param(format!("sensor{}.omega", index + 1), "must be finite"));
        }
        let adm = self.admissibility(gamma_q, margin);
        if !adm.admissible {
            return Err(Error::SensorRejected {
                index,
                coupling: self.epsilon,
                limit: adm.limit,
                bound: adm.bound,
            });
        }
        Ok(())
    }
}

/// Basis in which the cavity is represented.
///
/// In the displaced frame the truncated ladder operator describes fluctuations
/// around a fixed amplitude β and the physical field is `a + β`, so a strongly
/// driven cavity needs far fewer levels. The physics is identical; only the
/// truncation error changes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CavityFrame {
    Fock,
    Displaced { re: f64, im: f64 },
}

impl CavityFrame {
    pub fn displaced(beta: C64) -> Self {
        CavityFrame::Displaced { re: beta.re, im: beta.im }
    }

    /// Displacement centred on the bare-cavity mean field.
    pub fn mean_field(params: &SystemParams) -> Self {
        CavityFrame::displaced(params.bare_cavity_amplitude())
    }

    pub fn beta(&self) -> C64 {
        match *self {
            CavityFrame::Fock => C64::new(0.0, 0.0),
            CavityFrame::Displaced { re, im } => C64::new(re, im),
        }
    }
}

/// Tag for the vectorization used by [`Superoperator`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vectorization {
    /// vec(X)[i + D·j] = X[i, j], so vec(AXB) = (Bᵀ ⊗ A) vec(X).
    ColumnStacking,
}

/// Linear map on vectorized D×D operators, stored as a sparse D²×D² matrix.
#[derive(Clone, Debug)]
pub struct Superoperator {
    hilbert_dim: usize,
    matrix: OperatorMatrix,
    convention: Vectorization,
}

impl Superoperator {
    /// Liouvillian of the Hamiltonian `h` with dissipators `Σ rate·L_O`.
    pub fn lindblad(h: &OperatorMatrix, dissipators: &[(f64, OperatorMatrix)]) -> Self {
        let d = h.dim();
        let id = OperatorMatrix::identity(d);
        let mut k = h.scale(C64::new(0.0, -1.0));
        for (rate, op) in dissipators {
            k = k.add_scaled(&op.adjoint().matmul(op), C64::new(-rate, 0.0));
        }
        let mut l = id.kron(&k).add_scaled(&k.conj().kron(&id), ONE);
        for (rate, op) in dissipators {
            l = l.add_scaled(&op.conj().kron(op), C64::new(2.0 * rate, 0.0));
        }
        Superoperator {
            hilbert_dim: d,
            matrix: l,
            convention: Vectorization::ColumnStacking,
        }
    }

    /// Hilbert-space dimension D.
    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    /// Side length D².
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    pub fn convention(&self) -> Vectorization {
        self.convention
    }

    pub fn norm_one(&self) -> f64 {
        self.matrix.norm_one()
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        self.matrix.apply_vec(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        self.matrix.apply_vec(x, y);
    }
}

/// Fully specified model: parameters, truncation, sensors and cavity frame.
#[derive(Clone, Debug)]
pub struct SystemModel {
    params: SystemParams,
    space: ModeSpace,
    sensors: Vec<SensorParams>,
    frame: CavityFrame,
    n_th: f64,
    cavity: OperatorMatrix,
    vibration: OperatorMatrix,
    sensor_ops: Vec<OperatorMatrix>,
}

impl SystemModel {
    pub fn new(
        params: SystemParams,
        space: ModeSpace,
        sensors: Vec<SensorParams>,
        frame: CavityFrame,
    ) -> Result<Self> {
        Self::with_sensor_margin(params, space, sensors, frame, DEFAULT_SENSOR_MARGIN)
    }

    pub fn with_sensor_margin(
        params: SystemParams,
        space: ModeSpace,
        sensors: Vec<SensorParams>,
        frame: CavityFrame,
        margin: f64,
    ) -> Result<Self> {
        params.validate()?;
        let n_th = params.thermal_phonons()?;
        if space.modes() < 2 {
            return Err(Error::DimensionMismatch {
                expected: 2 + sensors.len(),
                found: space.modes(),
            });
        }
        if space.sensor_count() != sensors.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 + sensors.len(),
                found: space.modes(),
            });
        }
        for (i, &dim) in space.dims()[2..].iter().enumerate() {
            if dim != 2 {
                return Err(Error::param(format!("sensor{}", i + 1), format!("slot dimension must be 2, got {dim}")));
            }
        }
        for (i, s) in sensors.iter().enumerate() {
            s.check(i, params.gamma_m, margin)?;
        }
        let dims = space.dims();
        let d = space.total_dim();
        let beta = frame.beta();
        let cavity = embed_operator(&ladder_operator(dims[0])?, 0, &space)?
            .add_scaled(&OperatorMatrix::identity(d), beta);
        let vibration = embed_operator(&ladder_operator(dims[1])?, 1, &space)?;
        let sigma = ladder_operator(2)?;
        let sensor_ops = (0..sensors.len())
            .map(|i| embed_operator(&sigma, 2 + i, &space))
            .collect::<Result<Vec<_>>>()?;
        Ok(SystemModel {
            params,
            space,
            sensors,
            frame,
            n_th,
            cavity,
            vibration,
            sensor_ops,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn sensors(&self) -> &[SensorParams] {
        &self.sensors
    }

    pub fn frame(&self) -> CavityFrame {
        self.frame
    }

    pub fn n_th(&self) -> f64 {
        self.n_th
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    /// Physical cavity annihilation operator (includes the frame displacement).
    pub fn cavity_op(&self) -> &OperatorMatrix {
        &self.cavity
    }

    pub fn vibration_op(&self) -> &OperatorMatrix {
        &self.vibration
    }

    pub fn sensor_op(&self, index: usize) -> &OperatorMatrix {
        &self.sensor_ops[index]
    }

    pub fn cavity_number(&self) -> OperatorMatrix {
        self.cavity.adjoint().matmul(&self.cavity)
    }

    pub fn vibration_number(&self) -> OperatorMatrix {
        self.vibration.adjoint().matmul(&self.vibration)
    }

    pub fn hamiltonian(&self) -> OperatorMatrix {
        let p = &self.params;
        let a = &self.cavity;
        let ad = a.adjoint();
        let b = &self.vibration;
        let bd = b.adjoint();
        let n_a = ad.matmul(a);
        let mut h = bd.matmul(b).scale_real(p.omega_m);
        h = h.add_scaled(&n_a, C64::new(p.delta, 0.0));
        h = h.add_scaled(&n_a.matmul(&(&bd + b)), C64::new(-p.g, 0.0));
        h = h.add_scaled(&(&ad - a), C64::new(0.0, p.omega_pump));
        for (s, sigma) in self.sensors.iter().zip(&self.sensor_ops) {
            let sd = sigma.adjoint();
            h = h.add_scaled(&sd.matmul(sigma), C64::new(s.omega, 0.0));
            let exchange = &a.matmul(&sd) + &ad.matmul(sigma);
            h = h.add_scaled(&exchange, C64::new(s.epsilon, 0.0));
        }
        // Summation order leaves rounding-level asymmetry; make it exact.
        h.add_scaled(&h.adjoint(), ONE).scale_real(0.5)
    }

    /// Collapse operators with their prefactors r in r·L_O[ρ].
    pub fn dissipators(&self) -> Vec<(f64, OperatorMatrix)> {
        let p = &self.params;
        let mut out = vec![(p.kappa / 2.0, self.cavity.clone())];
        out.push(((self.n_th + 1.0) * p.gamma_m / 2.0, self.vibration.clone()));
        if self.n_th > 0.0 {
            out.push((self.n_th * p.gamma_m / 2.0, self.vibration.adjoint()));
        }
        for (s, sigma) in self.sensors.iter().zip(&self.sensor_ops) {
            out.push((s.gamma / 2.0, sigma.clone()));
        }
        out
    }

    pub fn liouvillian(&self) -> Superoperator {
        Superoperator::lindblad(&self.hamiltonian(), &self.dissipators())
    }
}

/// Rotating-frame Hamiltonian in the plain Fock basis.
pub fn build_hamiltonian(params: &SystemParams, space: &ModeSpace, sensors: &[SensorParams]) -> Result<OperatorMatrix> {
    Ok(SystemModel::new(params.clone(), space.clone(), sensors.to_vec(), CavityFrame::Fock)?.hamiltonian())
}

/// Lindblad generator in the plain Fock basis.
pub fn build_liouvillian(params: &SystemParams, space: &ModeSpace, sensors: &[SensorParams]) -> Result<Superoperator> {
    Ok(SystemModel::new(params.clone(), space.clone(), sensors.to_vec(), CavityFrame::Fock)?.liouvillian())
}
