//! Emission spectrum and Fourier-cosine CHD spectra.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chd::{Branch, CorrelationTrace, RawTraces};
use crate::error::{Error, Result};
use crate::fock::C64;

/// Relative size the stationary correlation may keep at the cutoff.
pub const EMISSION_CUTOFF: f64 = 1e-4;
/// Absolute size |h − 1| may keep at the cutoff.
pub const CHD_CUTOFF: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Emission,
    ChdPos,
    ChdNeg,
    Chd2,
    Chd3,
}

impl SpectrumKind {
    pub fn label(&self) -> &'static str {
        match self {
            SpectrumKind::Emission => "emission",
            SpectrumKind::ChdPos => "chd_pos",
            SpectrumKind::ChdNeg => "chd_neg",
            SpectrumKind::Chd2 => "chd_2",
            SpectrumKind::Chd3 => "chd_3",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub omega_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
    /// Photon flux F = 2κ⟨a†a⟩ for CHD spectra.
    pub flux: Option<f64>,
}

impl Spectrum {
    /// Trapezoid integral over ω.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.omega_grid, &self.values)
    }

    pub fn peak_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Copy scaled so the largest |value| is 1.
    pub fn max_normalized(&self) -> Spectrum {
        let peak = self.peak_abs();
        let mut out = self.clone();
        if peak > 0.0 {
            out.values.iter_mut().for_each(|v| *v /= peak);
        }
        out
    }
}

/// Trapezoid rule on an arbitrary sorted grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Trapezoid weights for a sorted grid.
fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = 0.5 * (x[k + 1] - x[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

/// ∫ f(τ) cos(ωτ) dτ over the τ grid by the trapezoid rule, for every ω.
pub fn cosine_transform(tau: &[f64], f: &[f64], omega: &[f64]) -> Vec<f64> {
    let w = trapezoid_weights(tau);
    let wf: Vec<f64> = w.iter().zip(f).map(|(a, b)| a * b).collect();
    omega
        .par_iter()
        .map(|&om| tau.iter().zip(&wf).map(|(t, v)| v * (om * t).cos()).sum())
        .collect()
}

/// Re ∫ e^{−iωτ} C(τ) dτ over the τ grid by the trapezoid rule.
pub fn fourier_real(tau: &[f64], c: &[C64], omega: &[f64]) -> Vec<f64> {
    let w = trapezoid_weights(tau);
    let wc: Vec<C64> = w.iter().zip(c).map(|(a, b)| b * *a).collect();
    omega
        .par_iter()
        .map(|&om| {
            tau.iter()
                .zip(&wc)
                .map(|(t, v)| {
                    let (s, co) = (om * t).sin_cos();
                    v.re * co + v.im * s
                })
                .sum()
        })
        .collect()
}

fn check_grid(omega: &[f64]) -> Result<()> {
    if omega.is_empty() {
        return Err(Error::InvalidGrid("omega grid is empty".into()));
    }
    if omega.iter().any(|w| !w.is_finite()) || omega.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidGrid("omega grid must be finite and sorted".into()));
    }
    Ok(())
}

/// Inelastic emission spectrum from ⟨δa†(τ)δa(0)⟩ (arbitrary units, unit
/// proportionality constant).
pub fn emission_spectrum(raw: &RawTraces, omega_grid: &[f64]) -> Result<Spectrum> {
    check_grid(omega_grid)?;
    let c = raw.emission_correlation();
    let start = c[0].norm();
    let tail = c[c.len() - 1].norm();
    let bound = (EMISSION_CUTOFF * start).max(1e-14);
    if tail > bound {
        return Err(Error::CutoffNotDecayed {
            quantity: "<da^dag(tau) da(0)>",
            tail,
            bound,
        });
    }
    Ok(Spectrum {
        omega_grid: omega_grid.to_vec(),
        values: fourier_real(&raw.tau_grid, c, omega_grid),
        kind: SpectrumKind::Emission,
        flux: None,
    })
}

/// Photon flux into the correlator, F = 2κ⟨a†a⟩.
pub fn photon_flux(kappa: f64, n_ss: f64) -> f64 {
    2.0 * kappa * n_ss
}

/// Fourier-cosine spectra 4F∫[·]cos(ωτ)dτ of the CHD traces, in the order
/// S(τ≥0), S(τ≤0), S⁽²⁾, S⁽³⁾.
pub fn chd_spectra(
    pos: &CorrelationTrace,
    neg: &CorrelationTrace,
    h2: &CorrelationTrace,
    h3: &CorrelationTrace,
    kappa: f64,
    n_ss: f64,
    omega_grid: &[f64],
) -> Result<Vec<Spectrum>> {
    check_grid(omega_grid)?;
    if neg.branch != Branch::Negative || pos.branch != Branch::Positive {
        return Err(Error::InvalidGrid("positive and negative traces swapped".into()));
    }
    let flux = photon_flux(kappa, n_ss);
    let inputs = [
        (pos, SpectrumKind::ChdPos, 1.0, "h_positive - 1"),
        (neg, SpectrumKind::ChdNeg, 1.0, "h_negative - 1"),
        (h2, SpectrumKind::Chd2, 0.0, "h2"),
        (h3, SpectrumKind::Chd3, 0.0, "h3"),
    ];
    inputs
        .iter()
        .map(|&(trace, kind, offset, quantity)| {
            let fluct: Vec<f64> = trace.values.iter().map(|v| v - offset).collect();
            let tail = fluct.last().map(|v| v.abs()).unwrap_or(0.0);
            if tail > CHD_CUTOFF {
                return Err(Error::CutoffNotDecayed {
                    quantity,
                    tail,
                    bound: CHD_CUTOFF,
                });
            }
            let values = cosine_transform(&trace.tau_grid, &fluct, omega_grid)
                .into_iter()
                .map(|v| 4.0 * flux * v)
                .collect();
            Ok(Spectrum {
                omega_grid: omega_grid.to_vec(),
                values,
                kind,
                flux: Some(flux),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    /// Parabolically refined position.
    pub omega: f64,
    pub height: f64,
    pub prominence: f64,
}

/// Interior local maxima whose prominence exceeds `min_prominence` times the
/// largest value.
pub fn find_peaks(spectrum: &Spectrum, min_prominence: f64) -> Vec<Peak> {
    let y = &spectrum.values;
    let x = &spectrum.omega_grid;
    let n = y.len();
    let top = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut peaks = Vec::new();
    for k in 1..n.saturating_sub(1) {
        if !(y[k] > y[k - 1] && y[k] >= y[k + 1]) {
            continue;
        }
        // Prominence: height above the higher of the two lowest points
        // reached before climbing to something taller on either side.
        let mut left_min = y[k];
        for j in (0..k).rev() {
            if y[j] > y[k] {
                break;
            }
            left_min = left_min.min(y[j]);
        }
        let mut right_min = y[k];
        for &v in &y[k + 1..] {
            if v > y[k] {
                break;
            }
            right_min = right_min.min(v);
        }
        let prominence = y[k] - left_min.max(right_min);
        if prominence < min_prominence * top {
            continue;
        }
        let (y0, y1, y2) = (y[k - 1], y[k], y[k + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        let shift = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
        let h = 0.5 * (x[k + 1] - x[k - 1]);
        peaks.push(Peak {
            index: k,
            omega: x[k] + shift.clamp(-1.0, 1.0) * h,
            height: y1,
            prominence,
        });
    }
    peaks
}

/// The two sideband peaks, larger first (reported as Stokes).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidebands {
    pub stokes: Peak,
    pub anti_stokes: Peak,
}

impl Sidebands {
    pub fn ratio(&self) -> f64 {
        self.stokes.height / self.anti_stokes.height
    }
}

/// Picks the tallest peak near each of ±ω_m and labels the larger one Stokes.
pub fn sidebands(peaks: &[Peak], omega_m: f64, window: f64) -> Option<Sidebands> {
    let best = |centre: f64| {
        peaks
            .iter()
            .filter(|p| (p.omega - centre).abs() <= window)
            .max_by(|a, b| a.height.total_cmp(&b.height))
            .copied()
    };
    let (lo, hi) = (best(-omega_m)?, best(omega_m)?);
    let (stokes, anti_stokes) = if lo.height >= hi.height { (lo, hi) } else { (hi, lo) };
    Some(Sidebands { stokes, anti_stokes })
}
