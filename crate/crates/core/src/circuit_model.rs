//! Closed-form circuit relations: SQUID-loaded filter tuning, couplings,
//! linewidths, dispersive shifts, decoherence rates and the coupler flux map.
//!
//! Inputs and outputs are ordinary frequencies in Hz. Evaluation happens in
//! angular units internally.

use crate::device_config::{CouplerParams, FilterParams};
use crate::units::{angular, ordinary, FLUX_QUANTUM};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Default dispersive-regime guard: every transition detuning must exceed
/// this multiple of g.
pub const DISPERSIVE_GUARD: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("SQUID inductance undefined: both critical currents are zero")]
    UndefinedInductance,
    #[error("invalid input `{name}`: {reason}")]
    InvalidInput { name: &'static str, reason: String },
    #[error("dispersive regime violated for {transition}: |detuning| {detuning:.4e} Hz < {threshold:.4e} Hz")]
    DispersiveRegime {
        transition: &'static str,
        detuning: f64,
        threshold: f64,
    },
    #[error("qubit and resonator are degenerate")]
    Degenerate,
    #[error("least-squares fit is degenerate: {0}")]
    DegenerateFit(String),
    #[error("frequency {freq:.6e} Hz outside reachable band [{min:.6e}, {max:.6e}] Hz")]
    OutOfBand { freq: f64, min: f64, max: f64 },
}

/// Flux through a SQUID loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Flux {
    Webers(f64),
    /// Φ/Φ0.
    Quanta(f64),
}

impl Flux {
    pub fn quanta(self) -> f64 {
        match self {
            Flux::Webers(phi) => phi / FLUX_QUANTUM,
            Flux::Quanta(q) => q,
        }
    }
}

pub fn squid_inductance(flux: Flux, ic1: f64, ic2: f64) -> Result<f64, CircuitError> {
    if ic1 < 0.0 || ic2 < 0.0 {
        return Err(CircuitError::InvalidInput {
            name: "critical current",
            reason: "must be nonnegative".into(),
        });
    }
    if ic1 == 0.0 && ic2 == 0.0 {
        return Err(CircuitError::UndefinedInductance);
    }
    let c = (PI * flux.quanta()).cos();
    let ic = ((ic1 - ic2).powi(2) + 4.0 * ic1 * ic2 * c * c).sqrt();
    if ic == 0.0 {
        return Err(CircuitError::UndefinedInductance);
    }
    Ok(FLUX_QUANTUM / (2.0 * PI * ic))
}

/// Length of the half-wave line implied by its bare frequency.
pub fn line_length(p: &FilterParams) -> f64 {
    PI / (angular(p.omega0_bare) * (p.lu * p.cu).sqrt())
}

/// Passband frequency for an explicit SQUID inductance.
pub fn filter_frequency_for_inductance(ls: f64, p: &FilterParams) -> f64 {
    let line_inductance = p.lu * line_length(p);
    ordinary(angular(p.omega0_bare) / (1.0 + ls / line_inductance))
}

pub fn filter_frequency(flux: Flux, p: &FilterParams) -> Result<f64, CircuitError> {
    let ls = squid_inductance(flux, p.ic1, p.ic2)?;
    Ok(filter_frequency_for_inductance(ls, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterTuningCurve {
    pub flux_quanta: Vec<f64>,
    pub frequencies: Vec<f64>,
}

impl FilterTuningCurve {
    pub fn min(&self) -> f64 {
        self.frequencies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.frequencies.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn filter_tuning_curve(p: &FilterParams, flux_quanta: &[f64]) -> Result<FilterTuningCurve, CircuitError> {
    let frequencies = flux_quanta
        .iter()
        .map(|&q| filter_frequency(Flux::Quanta(q), p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FilterTuningCurve {
        flux_quanta: flux_quanta.to_vec(),
        frequencies,
    })
}

/// Resonator linewidth inherited through the filter.
pub fn effective_linewidth(g_rf: f64, delta_fr: f64, kappa_f: f64) -> f64 {
    let (g, d, k) = (angular(g_rf), angular(delta_fr), angular(kappa_f));
    ordinary((4.0 * g * g / k) / (1.0 + (2.0 * d / k).powi(2)))
}

pub fn coupling_from_capacitance(c_ab: f64, omega_a: f64, omega_b: f64, c_a: f64, c_b: f64) -> f64 {
    let (wa, wb) = (angular(omega_a), angular(omega_b));
    ordinary(0.5 * c_ab * (wa * wb / (c_a * c_b)).sqrt())
}

/// Loaded quality factor of the filter output port.
pub fn filter_quality_factor(c_out: f64, c_f_out: f64, omega_f: f64, z0: f64) -> f64 {
    c_f_out / (angular(omega_f) * z0 * c_out * c_out)
}

pub fn filter_linewidth(c_out: f64, c_f_out: f64, omega_f: f64, z0: f64) -> f64 {
    let w = angular(omega_f);
    ordinary(w / (c_f_out / (w * z0 * c_out * c_out)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceFit {
    /// Capacitance from half the slope of Im Y11 against angular frequency.
    pub capacitance: f64,
    /// Zero crossing, Hz.
    pub omega0: f64,
    /// Root-mean-square residual of the line fit, S.
    pub residual_rms: f64,
    /// One-sigma standard error of `capacitance`.
    pub capacitance_std_err: f64,
}

/// Fits Im Y11 = 2C(ω − ω0) to `(frequency Hz, Im Y11 S)` samples.
pub fn capacitance_from_admittance(samples: &[(f64, f64)]) -> Result<AdmittanceFit, CircuitError> {
    if samples.len() < 2 {
        return Err(CircuitError::DegenerateFit("need at least two samples".into()));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| angular(s.0)).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    if sxx <= f64::EPSILON * mean_x * mean_x * n {
        return Err(CircuitError::DegenerateFit("all frequencies are equal".into()));
    }
    let sxy: f64 = xs
        .iter()
        .zip(samples)
        .map(|(x, s)| (x - mean_x) * (s.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    if slope == 0.0 {
        return Err(CircuitError::DegenerateFit("zero slope".into()));
    }
    let ss_res: f64 = xs
        .iter()
        .zip(samples)
        .map(|(x, s)| (s.1 - (slope * x + intercept)).powi(2))
        .sum();
    let dof = (n - 2.0).max(1.0);
    let slope_se = (ss_res / dof / sxx).sqrt();
    Ok(AdmittanceFit {
        capacitance: slope / 2.0,
        omega0: ordinary(-intercept / slope),
        residual_rms: (ss_res / n).sqrt(),
        capacitance_std_err: slope_se / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersiveShifts {
    pub chi01: f64,
    pub chi12: f64,
    pub chi23: f64,
    /// Resonator pull between qubit states 1 and 0.
    pub two_chi: f64,
    /// Resonator pull between qubit states 2 and 0.
    pub two_chi_prime: f64,
}

pub fn dispersive_shifts(g_qr: f64, omega_q: f64, alpha: f64, omega_r: f64) -> Result<DispersiveShifts, CircuitError> {
    dispersive_shifts_with_guard(g_qr, omega_q, alpha, omega_r, DISPERSIVE_GUARD)
}

pub fn dispersive_shifts_with_guard(
    g_qr: f64,
    omega_q: f64,
    alpha: f64,
    omega_r: f64,
    guard: f64,
) -> Result<DispersiveShifts, CircuitError> {
    let g = angular(g_qr);
    let (wq, a, wr) = (angular(omega_q), angular(alpha), angular(omega_r));
    let threshold = guard * g.abs();
    let transitions = [("0->1", wq - wr), ("1->2", wq + a - wr), ("2->3", wq + 2.0 * a - wr)];
    for (transition, d) in transitions {
        if d.abs() < threshold || d == 0.0 {
            return Err(CircuitError::DispersiveRegime {
                transition,
                detuning: ordinary(d),
                threshold: ordinary(threshold),
            });
        }
    }
    let chi01 = ordinary(g * g / transitions[0].1);
    let chi12 = ordinary(2.0 * g * g / transitions[1].1);
    let chi23 = ordinary(3.0 * g * g / transitions[2].1);
    Ok(DispersiveShifts {
        chi01,
        chi12,
        chi23,
        two_chi: 2.0 * chi01 - chi12,
        two_chi_prime: chi01 + chi12 - chi23,
    })
}

/// Qubit-resonator coupling that produces a resonator pull of magnitude
/// `two_chi` (2χ scales as g²).
pub fn coupling_for_dispersive_shift(two_chi: f64, omega_q: f64, alpha: f64, omega_r: f64) -> Result<f64, CircuitError> {
    if two_chi <= 0.0 {
        return Err(CircuitError::InvalidInput {
            name: "two_chi",
            reason: "target magnitude must be positive".into(),
        });
    }
    let unit = dispersive_shifts_with_guard(1.0, omega_q, alpha, omega_r, 0.0)?;
    if unit.two_chi == 0.0 {
        return Err(CircuitError::InvalidInput {
            name: "alpha",
            reason: "zero anharmonicity gives no dispersive pull".into(),
        });
    }
    let g = (two_chi / unit.two_chi.abs()).sqrt();
    dispersive_shifts(g, omega_q, alpha, omega_r)?;
    Ok(g)
}

/// Purcell decay rate of the qubit through resonator and filter.
pub fn purcell_rate(g_qr: f64, g_fr: f64, kappa_f: f64, omega_f: f64, omega_q: f64, omega_r: f64) -> Result<f64, CircuitError> {
    if omega_r == omega_q {
        return Err(CircuitError::Degenerate);
    }
    let ratio = (g_qr / (omega_r - omega_q)).powi(2);
    Ok(effective_linewidth(g_fr, omega_f - omega_q, kappa_f) * ratio)
}

/// Dephasing from residual photon shot noise in the resonator.
pub fn photon_noise_dephasing(kappa_eff: f64, two_chi: f64, n_noise: f64) -> f64 {
    let (k, c) = (angular(kappa_eff), angular(two_chi));
    if k == 0.0 && c == 0.0 {
        return 0.0;
    }
    ordinary(k * c * c / (k * k + c * c) * n_noise)
}

pub fn kerr_shift(n_photons: f64, alpha_f: f64) -> f64 {
    -alpha_f * n_photons
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

/// Coupler frequency at Z amplitude `z`.
pub fn coupler_frequency_from_z(z: f64, p: &CouplerParams) -> f64 {
    let phi = p.flux_map_k * z + p.flux_map_b;
    let (s, c) = phi.sin_cos();
    let d = p.asymmetry;
    (8.0 * p.ej * p.ec * (c * c + d * d * s * s).sqrt()).sqrt() - p.ec
}

/// Lower and upper reachable coupler frequencies.
pub fn coupler_band(p: &CouplerParams) -> (f64, f64) {
    let fmax = (8.0 * p.ej * p.ec).sqrt() - p.ec;
    let fmin = (8.0 * p.ej * p.ec * p.asymmetry).sqrt() - p.ec;
    (fmin, fmax)
}

/// Inverse flux map on the chosen branch.
pub fn coupler_z_from_frequency(freq: f64, p: &CouplerParams, branch: Branch) -> Result<f64, CircuitError> {
    let (fmin, fmax) = coupler_band(p);
    let slack = 1e-12 * fmax;
    if !freq.is_finite() || freq < fmin - slack || freq > fmax + slack {
        return Err(CircuitError::OutOfBand { freq, min: fmin, max: fmax });
    }
    let d2 = p.asymmetry * p.asymmetry;
    let r = (freq + p.ec).powi(4) / (8.0 * p.ej * p.ec).powi(2);
    let arg = ((r - 1.0) / (d2 - 1.0)).clamp(0.0, 1.0);
    let phi = arg.sqrt().asin();
    let signed = match branch {
        Branch::Plus => phi,
        Branch::Minus => -phi,
    };
    Ok((signed - p.flux_map_b) / p.flux_map_k)
}

/// Locates the local maxima of Γ_φ(Δ_fr) on `[-span, span]` by a grid scan
/// refined with golden-section search. Returns `(Δ_fr, Γ_φ)` pairs in Hz.
pub fn dephasing_peaks(g_rf: f64, kappa_f: f64, two_chi: f64, n_noise: f64, span: f64, grid: usize) -> Vec<(f64, f64)> {
    let rate = |d: f64| photon_noise_dephasing(effective_linewidth(g_rf, d, kappa_f), two_chi, n_noise);
    let grid = grid.max(5);
    let step = 2.0 * span / (grid - 1) as f64;
    let xs: Vec<f64> = (0..grid).map(|i| -span + step * i as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| rate(x)).collect();
    let mut peaks = Vec::new();
    for i in 1..grid - 1 {
        if ys[i] > ys[i - 1] && ys[i] >= ys[i + 1] {
            let x = golden_section_max(&rate, xs[i - 1], xs[i + 1], 1e-9 * span.max(1.0));
            peaks.push((x, rate(x)));
        }
    }
    peaks
}

pub(crate) fn golden_section_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
