//! Control waveform synthesis.
//!
//! Binary waveform layout (all little-endian): `t0: f64`, `dt: f64`,
//! `len: u64`, `channel: u64` (see [`Channel::code`]), then `len` samples as
//! `f64`.

use crate::circuit_model::{coupler_z_from_frequency, coupler_frequency_from_z, Branch, CircuitError};
use crate::device_config::CouplerParams;
use crate::units::{angular, ordinary};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

/// Default AWG sample interval.
pub const DEFAULT_DT: f64 = 0.1e-9;
/// Full width at half maximum over standard deviation for a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("invalid waveform: {0}")]
    Invalid(String),
    #[error("adiabatic trajectory leaves its domain at t = {time:.4e} s")]
    TrajectoryDomain { time: f64 },
    #[error("kernel FWHM {fwhm:.3e} s is under-resolved at dt = {dt:.3e} s")]
    UnderResolvedKernel { fwhm: f64, dt: f64 },
    #[error("sample {index}: {source}")]
    Compile {
        index: usize,
        #[source]
        source: CircuitError,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed waveform data: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    CouplerZ,
    FilterZ,
    ReadoutDrive,
    QubitXy,
    /// Coupler frequency in Hz, the uncompiled form of `CouplerZ`.
    CouplerFreq,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::CouplerZ,
        Channel::FilterZ,
        Channel::ReadoutDrive,
        Channel::QubitXy,
        Channel::CouplerFreq,
    ];

    pub fn code(self) -> u64 {
        match self {
            Channel::CouplerZ => 0,
            Channel::FilterZ => 1,
            Channel::ReadoutDrive => 2,
            Channel::QubitXy => 3,
            Channel::CouplerFreq => 4,
        }
    }

    pub fn from_code(code: u64) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::CouplerZ => "coupler_z",
            Channel::FilterZ => "filter_z",
            Channel::ReadoutDrive => "readout_drive",
            Channel::QubitXy => "qubit_xy",
            Channel::CouplerFreq => "coupler_freq",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub channel: Channel,
}

impl Waveform {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, channel: Channel) -> Result<Self, PulseError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PulseError::Invalid(format!("dt must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(PulseError::Invalid("t0 must be finite".into()));
        }
        if values.is_empty() {
            return Err(PulseError::Invalid("waveform needs at least one sample".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PulseError::Invalid(format!("sample {i} is not finite")));
        }
        Ok(Waveform { t0, dt, values, channel })
    }

    pub fn constant(value: f64, duration: f64, dt: f64, channel: Channel) -> Result<Self, PulseError> {
        Waveform::new(0.0, dt, vec![value; sample_count(duration, dt)?], channel)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.len() - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Piecewise-linear value at `t`, holding the end values outside the grid.
    pub fn value_at(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        if x <= 0.0 {
            return self.values[0];
        }
        let last = self.len() - 1;
        if x >= last as f64 {
            return self.values[last];
        }
        let i = x.floor() as usize;
        let frac = x - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Waveform {
        Waveform {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn with_channel(mut self, channel: Channel) -> Waveform {
        self.channel = channel;
        self
    }

    pub fn shifted(mut self, t0: f64) -> Waveform {
        self.t0 = t0;
        self
    }

    /// Joins waveforms on a common grid. The first sample of each later
    /// piece is placed one `dt` after the previous piece ends.
    pub fn concat(pieces: &[Waveform]) -> Result<Waveform, PulseError> {
        let first = pieces
            .first()
            .ok_or_else(|| PulseError::Invalid("nothing to concatenate".into()))?;
        let mut values = Vec::new();
        for p in pieces {
            if ((p.dt - first.dt) / first.dt).abs() > 1e-12 {
                return Err(PulseError::Invalid("pieces use different sample intervals".into()));
            }
            if p.channel != first.channel {
                return Err(PulseError::Invalid("pieces use different channels".into()));
            }
            values.extend_from_slice(&p.values);
        }
        Waveform::new(first.t0, first.dt, values, first.channel)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), PulseError> {
        writeln!(w, "t,{}", self.channel.name())?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:e},{:e}", self.time(i), v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<Waveform, PulseError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| PulseError::Format("empty file".into()))?;
        let name = header
            .strip_prefix("t,")
            .ok_or_else(|| PulseError::Format("header must start with `t,`".into()))?;
        let channel = Channel::ALL
            .into_iter()
            .find(|c| c.name() == name.trim())
            .ok_or_else(|| PulseError::Format(format!("unknown channel {name:?}")))?;
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| PulseError::Format(format!("line {}: expected two columns", n + 2)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| PulseError::Format(format!("line {}: bad number {s:?}", n + 2)))
            };
            ts.push(parse(t)?);
            vs.push(parse(v)?);
        }
        if ts.is_empty() {
            return Err(PulseError::Format("no samples".into()));
        }
        let dt = if ts.len() > 1 { (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64 } else { DEFAULT_DT };
        Waveform::new(ts[0], dt, vs, channel)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), PulseError> {
        w.write_all(&self.t0.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.channel.code().to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Waveform, PulseError> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8], PulseError> {
            r.read_exact(&mut word)
                .map_err(|e| PulseError::Format(format!("truncated data: {e}")))?;
            Ok(word)
        };
        let t0 = f64::from_le_bytes(next(&mut r)?);
        let dt = f64::from_le_bytes(next(&mut r)?);
        let len = u64::from_le_bytes(next(&mut r)?) as usize;
        let code = u64::from_le_bytes(next(&mut r)?);
        let channel = Channel::from_code(code)
            .ok_or_else(|| PulseError::Format(format!("unknown channel code {code}")))?;
        let mut values = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            values.push(f64::from_le_bytes(next(&mut r)?));
        }
        Waveform::new(t0, dt, values, channel)
    }
}

/// Number of samples covering `[0, duration]` inclusive.
pub fn sample_count(duration: f64, dt: f64) -> Result<usize, PulseError> {
    if !(duration > 0.0) || !(dt > 0.0) {
        return Err(PulseError::Invalid(format!(
            "duration ({duration}) and dt ({dt}) must be positive"
        )));
    }
    Ok((duration / dt).round() as usize + 1)
}

pub fn square_pulse(amplitude: f64, duration: f64, dt: f64, channel: Channel) -> Result<Waveform, PulseError> {
    Waveform::constant(amplitude, duration, dt, channel)
}

/// Linear ramp `start + slope·t`; `slope` is per second.
pub fn ramp_pulse(start: f64, slope: f64, duration: f64, dt: f64, channel: Channel) -> Result<Waveform, PulseError> {
    let n = sample_count(duration, dt)?;
    let values = (0..n).map(|i| start + slope * dt * i as f64).collect();
    Waveform::new(0.0, dt, values, channel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticSpec {
    /// Detuning from `f_center` at t = 0, Hz.
    pub f0: f64,
    /// Detuning from `f_center` at t = tau, Hz.
    pub f_tau: f64,
    pub tau: f64,
    /// Shaping coupling parameter, Hz.
    pub g: f64,
    pub f_center: f64,
    #[serde(default)]
    pub two_photon: bool,
    /// Anticrossing offset for the two-photon variant, Hz.
    #[serde(default)]
    pub omega_c: f64,
}

impl AdiabaticSpec {
    /// Spec sweeping the coupler from `start` to `end` (absolute, Hz).
    pub fn between(start: f64, end: f64, tau: f64, g: f64, f_center: f64) -> Self {
        AdiabaticSpec {
            f0: start - f_center,
            f_tau: end - f_center,
            tau,
            g,
            f_center,
            two_photon: false,
            omega_c: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        let finite = [self.f0, self.f_tau, self.tau, self.g, self.f_center, self.omega_c]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(PulseError::Invalid("adiabatic spec has non-finite fields".into()));
        }
        if !(self.tau > 0.0) {
            return Err(PulseError::Invalid("tau must be positive".into()));
        }
        if !(self.g > 0.0) {
            return Err(PulseError::Invalid("g must be positive".into()));
        }
        if self.f0 == self.f_tau {
            return Err(PulseError::Invalid("start and end detunings coincide".into()));
        }
        Ok(())
    }

    /// Coupling and detuning offset after the two-photon substitution, angular.
    fn effective(&self) -> (f64, f64) {
        if self.two_photon {
            (angular(self.g) * 2f64.sqrt(), angular(self.omega_c))
        } else {
            (angular(self.g), 0.0)
        }
    }

    /// Detuning Δ(t) in Hz from the closed-form trajectory.
    pub fn detuning_at(&self, t: f64) -> Result<f64, PulseError> {
        let (beta, delta) = adiabatic_coefficients(self)?;
        let (g, offset) = self.effective();
        trajectory(beta, delta, g, t)
            .map(|d| ordinary(d + offset))
            .ok_or(PulseError::TrajectoryDomain { time: t })
    }
}

fn trajectory(beta: f64, delta: f64, g: f64, t: f64) -> Option<f64> {
    let u = beta * g * t + delta;
    let arg = (1.0 - 4.0 * u) * (1.0 + 4.0 * u);
    if arg > 0.0 {
        Some(-8.0 * g * u / arg.sqrt())
    } else {
        None
    }
}

/// Closed-form shape coefficients (β, δ) of the adiabatic trajectory.
pub fn adiabatic_coefficients(spec: &AdiabaticSpec) -> Result<(f64, f64), PulseError> {
    spec.validate()?;
    let (g, offset) = spec.effective();
    let w0 = angular(spec.f0) - offset;
    let wt = angular(spec.f_tau) - offset;
    let delta = -w0 / (16.0 * w0 * w0 + 64.0 * g * g).sqrt();
    let s = wt * wt + 4.0 * g * g;
    let beta = (-4.0 * delta * s - wt * s.sqrt()) / (4.0 * g * spec.tau * s);
    Ok((beta, delta))
}

/// Samples Δ(t) (Hz, `CouplerFreq`-style detuning) on `n_samples` points
/// spanning `[0, tau]`.
pub fn adiabatic_detuning_waveform(spec: &AdiabaticSpec, n_samples: usize) -> Result<Waveform, PulseError> {
    if n_samples < 2 {
        return Err(PulseError::Invalid("need at least two samples".into()));
    }
    let (beta, delta) = adiabatic_coefficients(spec)?;
    let (g, offset) = spec.effective();
    let dt = spec.tau / (n_samples - 1) as f64;
    let mut values = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let t = if i == n_samples - 1 { spec.tau } else { dt * i as f64 };
        let d = trajectory(beta, delta, g, t).ok_or(PulseError::TrajectoryDomain { time: t })?;
        values.push(ordinary(d + offset));
    }
    Waveform::new(0.0, dt, values, Channel::CouplerFreq)
}

/// Right-hand side of the shaping ODE, |dΔ/dt| in rad/s² given Δ in Hz.
pub fn adiabatic_rate(spec: &AdiabaticSpec, detuning: f64) -> Result<f64, PulseError> {
    let (beta, _) = adiabatic_coefficients(spec)?;
    let (g, offset) = spec.effective();
    let d = angular(detuning) - offset;
    Ok(beta.abs() * (d * d + 4.0 * g * g).powf(1.5) / g)
}

/// Unit-DC-gain Gaussian kernel sampled at `dt`, truncated at ±4σ.
pub fn gaussian_kernel(fwhm: f64, dt: f64) -> Result<Vec<f64>, PulseError> {
    if !(fwhm > 0.0) || fwhm < 2.0 * dt {
        return Err(PulseError::UnderResolvedKernel { fwhm, dt });
    }
    let sigma = fwhm / FWHM_PER_SIGMA;
    let half = (4.0 * sigma / dt).ceil() as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|j| {
            let t = j as f64 * dt;
            (-t * t / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

/// Convolution with a Gaussian of the given FWHM; the waveform is extended by
/// its boundary values on both sides.
pub fn gaussian_convolve(w: &Waveform, fwhm: f64) -> Result<Waveform, PulseError> {
    let kernel = gaussian_kernel(fwhm, w.dt)?;
    let half = (kernel.len() / 2) as isize;
    let n = w.len() as isize;
    let values = (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, k)| {
                    let idx = (i + j as isize - half).clamp(0, n - 1);
                    k * w.values[idx as usize]
                })
                .sum()
        })
        .collect();
    Waveform::new(w.t0, w.dt, values, w.channel)
}

/// Readout envelope: an edge-smoothed square plus a ring-up Gaussian
/// confined to the first `ring_len`.
pub fn ringup_readout_envelope(
    total_len: f64,
    ring_len: f64,
    ring_amp: f64,
    flat_amp: f64,
    dt: f64,
) -> Result<Waveform, PulseError> {
    if ring_len > total_len {
        return Err(PulseError::Invalid("ring-up longer than the readout pulse".into()));
    }
    if ring_len < 0.0 {
        return Err(PulseError::Invalid("ring-up length must be nonnegative".into()));
    }
    let n = sample_count(total_len, dt)?;
    let edge_sigma = 10e-9 / FWHM_PER_SIGMA;
    let ring_sigma = 75e-9 / FWHM_PER_SIGMA;
    let centre = 0.5 * ring_len;
    let s2 = std::f64::consts::SQRT_2;
    let values = (0..n)
        .map(|i| {
            let t = dt * i as f64;
            let flat = 0.5 * flat_amp * (libm::erf(t / (s2 * edge_sigma)) - libm::erf((t - total_len) / (s2 * edge_sigma)));
            let ring = if t <= ring_len {
                ring_amp * (-(t - centre).powi(2) / (2.0 * ring_sigma * ring_sigma)).exp()
            } else {
                0.0
            };
            flat + ring
        })
        .collect();
    Waveform::new(0.0, dt, values, Channel::ReadoutDrive)
}

/// Maps a detuning waveform around `f_center` to coupler Z amplitudes.
pub fn compile_detuning_to_z(w: &Waveform, f_center: f64, p: &CouplerParams, branch: Branch) -> Result<Waveform, PulseError> {
    let values = w
        .values
        .iter()
        .enumerate()
        .map(|(index, d)| {
            coupler_z_from_frequency(f_center + d, p, branch).map_err(|source| PulseError::Compile { index, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Waveform::new(w.t0, w.dt, values, Channel::CouplerZ)
}

/// Maps absolute coupler frequencies (Hz) to Z amplitudes.
pub fn compile_frequency_to_z(w: &Waveform, p: &CouplerParams, branch: Branch) -> Result<Waveform, PulseError> {
    compile_detuning_to_z(w, 0.0, p, branch)
}

/// Maps Z amplitudes back to absolute coupler frequencies (Hz).
pub fn z_to_frequency(w: &Waveform, p: &CouplerParams) -> Waveform {
    Waveform {
        t0: w.t0,
        dt: w.dt,
        values: w.values.iter().map(|&z| coupler_frequency_from_z(z, p)).collect(),
        channel: Channel::CouplerFreq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{GHZ, MHZ, NS};
    use approx::assert_relative_eq;

    fn reference_spec() -> AdiabaticSpec {
        AdiabaticSpec::between(4.0 * GHZ, 5.5 * GHZ, 30.0 * NS, 0.605 * MHZ, 4.86 * GHZ)
    }

    fn smooth_spec() -> AdiabaticSpec {
        AdiabaticSpec::between(4.7 * GHZ, 5.0 * GHZ, 60.0 * NS, 60.0 * MHZ, 4.86 * GHZ)
    }

    fn coupler() -> CouplerParams {
        CouplerParams::from_max_frequency("C", 8.6 * GHZ, 330.0 * MHZ, 0.2297, 0.71406, 0.0)
    }

    #[test]
    fn delta_bound_and_limits() {
        for g in [1e3, 1e6, 1e8, 1e10] {
            let mut s = reference_spec();
            s.g = g;
            let (_, d) = adiabatic_coefficients(&s).unwrap();
            assert!(d.abs() < 0.25);
        }
        let mut s = reference_spec();
        s.g = 1e15;
        assert!(adiabatic_coefficients(&s).unwrap().1.abs() < 1e-5);
    }

    #[test]
    fn symmetric_sweep_crosses_centre_at_midpoint() {
        let s = AdiabaticSpec::between(4.5 * GHZ, 5.22 * GHZ, 40.0 * NS, 20.0 * MHZ, 4.86 * GHZ);
        let (beta, delta) = adiabatic_coefficients(&s).unwrap();
        let expected = -2.0 * delta / (angular(s.g) * s.tau);
        assert_relative_eq!(beta, expected, max_relative = 1e-6);
        assert!(s.detuning_at(s.tau / 2.0).unwrap().abs() < 1e-6 * s.f0.abs());
    }

    #[test]
    fn boundary_values_are_exact() {
        for s in [reference_spec(), smooth_spec()] {
            let w = adiabatic_detuning_waveform(&s, 301).unwrap();
            assert_relative_eq!(w.values[0], s.f0, max_relative = 1e-9);
            assert_relative_eq!(*w.values.last().unwrap(), s.f_tau, max_relative = 1e-9);
        }
    }

    #[test]
    fn reference_trajectory_is_monotone_with_one_zero_crossing() {
        let w = adiabatic_detuning_waveform(&reference_spec(), 301).unwrap();
        assert!(w.values.windows(2).all(|p| p[1] > p[0]));
        let crossings = w.values.windows(2).filter(|p| p[0] < 0.0 && p[1] >= 0.0).count();
        assert_eq!(crossings, 1);
    }

    #[test]
    fn smooth_trajectory_satisfies_shaping_ode() {
        let s = smooth_spec();
        let n = (s.tau / DEFAULT_DT).round() as usize + 1;
        let w = adiabatic_detuning_waveform(&s, n).unwrap();
        for i in 1..n - 1 {
            let fd = angular(w.values[i + 1] - w.values[i - 1]) / (2.0 * w.dt);
            let rhs = adiabatic_rate(&s, w.values[i]).unwrap();
            assert!((fd.abs() - rhs).abs() <= 1e-3 * rhs, "sample {i}: {fd} vs {rhs}");
        }
    }

    #[test]
    fn two_photon_boundaries_include_offset() {
        let mut s = AdiabaticSpec::between(4.0 * GHZ, 5.5 * GHZ, 30.0 * NS, 20.0 * MHZ, 4.86 * GHZ);
        s.two_photon = true;
        s.omega_c = 330.0 * MHZ;
        let w = adiabatic_detuning_waveform(&s, 301).unwrap();
        assert_relative_eq!(w.values[0], s.f0, max_relative = 1e-9);
        assert_relative_eq!(*w.values.last().unwrap(), s.f_tau, max_relative = 1e-9);
    }

    #[test]
    fn square_and_ramp_examples() {
        let sq = square_pulse(1.916, 4.5 * NS, DEFAULT_DT, Channel::CouplerZ).unwrap();
        assert!(sq.values.iter().all(|&v| v == 1.916));
        let r = ramp_pulse(1.209, -0.00016 / NS, 170.0 * NS, DEFAULT_DT, Channel::CouplerZ).unwrap();
        assert_relative_eq!(*r.values.last().unwrap(), 1.209 - 0.0272, max_relative = 1e-12);
        let flat = ramp_pulse(1.916, 0.0, 4.5 * NS, DEFAULT_DT, Channel::CouplerZ).unwrap();
        assert_eq!(flat, sq);
    }

    #[test]
    fn convolution_examples() {
        let c = Waveform::constant(0.37, 50.0 * NS, DEFAULT_DT, Channel::CouplerZ).unwrap();
        let out = gaussian_convolve(&c, 1.56 * NS).unwrap();
        assert!(out.values.iter().all(|v| (v - 0.37).abs() < 1e-12));
        let mut impulse = vec![0.0; 201];
        impulse[100] = 1.0;
        let w = Waveform::new(0.0, DEFAULT_DT, impulse, Channel::CouplerZ).unwrap();
        let out = gaussian_convolve(&w, 1.56 * NS).unwrap();
        let k = gaussian_kernel(1.56 * NS, DEFAULT_DT).unwrap();
        let half = k.len() / 2;
        for (j, kv) in k.iter().enumerate() {
            assert_relative_eq!(out.values[100 + j - half], *kv, max_relative = 1e-12);
        }
        let peak = out.values[100];
        let sigma = 1.56 * NS / FWHM_PER_SIGMA;
        let t = 8.0 * DEFAULT_DT;
        assert_relative_eq!(out.values[108] / peak, (-t * t / (2.0 * sigma * sigma)).exp(), max_relative = 1e-9);
        let at_half_width = (-(0.78 * NS).powi(2) / (2.0 * sigma * sigma)).exp();
        assert_relative_eq!(at_half_width, 0.5, max_relative = 1e-3);
        assert!(matches!(gaussian_convolve(&w, 0.15 * NS), Err(PulseError::UnderResolvedKernel { .. })));
    }

    #[test]
    fn kernel_bandwidth_is_about_400_mhz() {
        let k = gaussian_kernel(1.56 * NS, DEFAULT_DT).unwrap();
        let mag = |f: f64| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in k.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * f * DEFAULT_DT * j as f64;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            (re * re + im * im).sqrt()
        };
        let target = 0.5f64.sqrt();
        let (mut lo, mut hi) = (0.0, 2.0 * GHZ);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mag(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let two_sided = 2.0 * lo;
        assert!((two_sided / MHZ - 400.0).abs() < 10.0, "{two_sided}");
    }

    #[test]
    fn ringup_examples() {
        let dt = 1.0 * NS;
        let plain = ringup_readout_envelope(1077.0 * NS, 65.0 * NS, 0.0, 0.4, dt).unwrap();
        let ring = ringup_readout_envelope(1077.0 * NS, 65.0 * NS, 0.6, 0.4, dt).unwrap();
        let argmax = ring
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(ring.time(argmax) <= 65.0 * NS);
        assert!((plain.value_at(500.0 * NS) - 0.4).abs() < 1e-12);
        let area = |w: &Waveform| w.values.iter().sum::<f64>();
        let mut last = area(&plain);
        for amp in [0.1, 0.2, 0.4, 0.8] {
            let a = area(&ringup_readout_envelope(1077.0 * NS, 65.0 * NS, amp, 0.4, dt).unwrap());
            assert!(a > last);
            last = a;
        }
    }

    #[test]
    fn compile_examples() {
        let p = coupler();
        let zero = Waveform::constant(0.0, 10.0 * NS, DEFAULT_DT, Channel::CouplerFreq).unwrap();
        let z = compile_detuning_to_z(&zero, 4.86 * GHZ, &p, Branch::Plus).unwrap();
        let z0 = coupler_z_from_frequency(4.86 * GHZ, &p, Branch::Plus).unwrap();
        assert!(z.values.iter().all(|&v| v == z0));

        let spec = reference_spec();
        let w = adiabatic_detuning_waveform(&spec, 301).unwrap();
        let z = compile_detuning_to_z(&w, spec.f_center, &p, Branch::Plus).unwrap();
        let back = z_to_frequency(&z, &p);
        for (b, d) in back.values.iter().zip(&w.values) {
            assert_relative_eq!(*b, spec.f_center + d, max_relative = 1e-9);
        }

        let mut bad = zero.values.clone();
        bad[7] = 4.0 * GHZ;
        bad[9] = 5.0 * GHZ;
        let bad = Waveform::new(0.0, DEFAULT_DT, bad, Channel::CouplerFreq).unwrap();
        match compile_detuning_to_z(&bad, 4.86 * GHZ, &p, Branch::Plus) {
            Err(PulseError::Compile { index, .. }) => assert_eq!(index, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn io_round_trips() {
        let w = ramp_pulse(1.209, -0.00016 / NS, 17.0 * NS, DEFAULT_DT, Channel::CouplerZ).unwrap();
        let mut buf = Vec::new();
        w.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 8 * w.len());
        assert_eq!(Waveform::read_binary(buf.as_slice()).unwrap(), w);
        let mut csv = Vec::new();
        w.write_csv(&mut csv).unwrap();
        let back = Waveform::read_csv(csv.as_slice()).unwrap();
        assert_eq!(back.values, w.values);
        assert_relative_eq!(back.dt, w.dt, max_relative = 1e-12);
        assert!(Waveform::read_binary(&buf[..20]).is_err());
    }

    #[test]
    fn value_at_interpolates_and_holds() {
        let w = Waveform::new(1.0, 0.5, vec![0.0, 1.0, 3.0], Channel::QubitXy).unwrap();
        assert_eq!(w.value_at(0.0), 0.0);
        assert_eq!(w.value_at(1.25), 0.5);
        assert_eq!(w.value_at(1.75), 2.0);
        assert_eq!(w.value_at(10.0), 3.0);
    }
}
