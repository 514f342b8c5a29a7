//! Qubit reset through a tunable coupler and a lossy filter: waveform
//! assembly, cycle and round orchestration, parameter scans, and the
//! shared-filter multi-coupler case.
//!
//! The coupler frequency is always handed to the solver as a
//! [`Channel::CouplerFreq`] waveform. Stages defined in Z amplitude go
//! through the coupler flux map first.

use crate::circuit_model::{coupler_band, coupler_frequency_from_z, Branch};
use crate::device_config::{CouplerParams, DeviceConfig};
use crate::dynamics::{
    apply_unitary, basis_state, evolve, linear_grid, pure_state, transition_rotation, ComplexMatrix, Controls,
    DynamicsError, EvolveOptions, FrequencySource, QuantumSystem, Subsystem,
};
use crate::pulse_lib::{
    adiabatic_detuning_waveform, compile_frequency_to_z, gaussian_convolve, z_to_frequency, AdiabaticSpec, Channel,
    PulseError, Waveform,
};
use crate::units::{GHZ, MHZ, NS};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResetError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error("invalid reset setup: {0}")]
    Invalid(String),
    #[error("unknown scenario `{name}`; available: {}", known.join(", "))]
    UnknownScenario { name: String, known: Vec<String> },
}

/// Qubit, tunable coupler and fixed-frequency lossy filter in a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetDevice {
    pub qubit_freq: f64,
    /// Signed, negative for a transmon.
    pub qubit_anharmonicity: f64,
    pub qubit_levels: usize,
    pub coupler: CouplerParams,
    pub coupler_levels: usize,
    pub filter_freq: f64,
    pub filter_kappa: f64,
    /// Signed Kerr coefficient of the filter mode.
    pub filter_anharmonicity: f64,
    pub filter_levels: usize,
    pub g_qc: f64,
    pub g_cf: f64,
}

impl ResetDevice {
    /// Reference device: Q6-like qubit, coupler with an 8.6 GHz upper sweet
    /// spot, filter parked at 7.0 GHz.
    pub fn reference() -> Self {
        ResetDevice {
            qubit_freq: 4.835 * GHZ,
            qubit_anharmonicity: -187.4 * MHZ,
            qubit_levels: 3,
            coupler: reference_coupler(),
            coupler_levels: 3,
            filter_freq: 7.0 * GHZ,
            filter_kappa: 150.0 * MHZ,
            filter_anharmonicity: -4.47 * MHZ,
            filter_levels: 4,
            // Full qubit–coupler swap in 4.5 ns on resonance.
            g_qc: 1.0 / (4.0 * 4.5 * NS),
            g_cf: 20.0 * MHZ,
        }
    }

    /// Builds a device from a loaded configuration. Couplings come from the
    /// topology edges; the filter is parked at `filter_freq`.
    pub fn from_config(
        cfg: &DeviceConfig,
        qubit: &str,
        coupler: &str,
        filter: &str,
        filter_freq: f64,
    ) -> Result<Self, ResetError> {
        let q = cfg
            .qubit(qubit)
            .ok_or_else(|| ResetError::Invalid(format!("no qubit `{qubit}`")))?;
        let c = cfg
            .coupler(coupler)
            .ok_or_else(|| ResetError::Invalid(format!("no coupler `{coupler}`")))?;
        let f = cfg
            .filter(filter)
            .ok_or_else(|| ResetError::Invalid(format!("no filter `{filter}`")))?;
        let g_qc = cfg
            .edge_coupling(qubit, coupler)
            .ok_or_else(|| ResetError::Invalid(format!("no coupling between `{qubit}` and `{coupler}`")))?;
        let g_cf = cfg
            .edge_coupling(coupler, filter)
            .ok_or_else(|| ResetError::Invalid(format!("no coupling between `{coupler}` and `{filter}`")))?;
        let reference = Self::reference();
        Ok(ResetDevice {
            qubit_freq: q.freq_idle,
            qubit_anharmonicity: q.anharmonicity,
            coupler: c.clone(),
            filter_freq,
            filter_kappa: f.kappa,
            filter_anharmonicity: -f.anharmonicity,
            g_qc,
            g_cf,
            ..reference
        })
    }

    pub fn validate(&self) -> Result<(), ResetError> {
        if self.qubit_levels < 2 || self.coupler_levels < 2 || self.filter_levels < 2 {
            return Err(ResetError::Invalid("every mode needs at least two levels".into()));
        }
        if !(self.filter_kappa >= 0.0) || !(self.g_qc >= 0.0) || !(self.g_cf >= 0.0) {
            return Err(ResetError::Invalid("rates and couplings must be nonnegative".into()));
        }
        Ok(())
    }

    /// Subsystems in the order qubit, coupler, filter.
    pub fn system(&self) -> QuantumSystem {
        QuantumSystem::new(vec![
            Subsystem {
                label: "qubit".into(),
                levels: self.qubit_levels,
                frequency: FrequencySource::Fixed(self.qubit_freq),
                anharmonicity: self.qubit_anharmonicity,
            },
            Subsystem {
                label: "coupler".into(),
                levels: self.coupler_levels,
                frequency: FrequencySource::Control(Channel::CouplerFreq),
                anharmonicity: self.coupler.anharmonicity,
            },
            Subsystem {
                label: "filter".into(),
                levels: self.filter_levels,
                frequency: FrequencySource::Fixed(self.filter_freq),
                anharmonicity: self.filter_anharmonicity,
            },
        ])
        .with_coupling(0, 1, self.g_qc)
        .with_coupling(1, 2, self.g_cf)
        .with_collapse(2, self.filter_kappa)
    }
}

/// Coupler with an 8.6 GHz maximum, E_C = 330 MHz, and a flux map that
/// puts Z = 1.209 at 7.0 GHz.
pub fn reference_coupler() -> CouplerParams {
    CouplerParams::from_max_frequency("C", 8.6 * GHZ, 330.0 * MHZ, 0.2297, 0.71406, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum QcStage {
    /// Coupler held at `frequency` (Hz).
    Square { frequency: f64, duration: f64 },
    /// Coupler follows `f_center + Δ(t)`.
    Adiabatic(AdiabaticSpec),
}

impl QcStage {
    pub fn duration(&self) -> f64 {
        match self {
            QcStage::Square { duration, .. } => *duration,
            QcStage::Adiabatic(spec) => spec.tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum CfStage {
    /// Coupler held at `frequency` (Hz).
    Square { frequency: f64, duration: f64 },
    /// Coupler Z amplitude `z_start + slope·t`, slope per second.
    Ramp { z_start: f64, slope: f64, duration: f64 },
}

impl CfStage {
    pub fn duration(&self) -> f64 {
        match self {
            CfStage::Square { duration, .. } | CfStage::Ramp { duration, .. } => *duration,
        }
    }

    pub fn with_duration(self, d: f64) -> Self {
        match self {
            CfStage::Square { frequency, .. } => CfStage::Square { frequency, duration: d },
            CfStage::Ramp { z_start, slope, .. } => CfStage::Ramp { z_start, slope, duration: d },
        }
    }
}

/// One reset cycle: `pre_time` at the operating point, the qubit–coupler
/// stage, the coupler–filter stage, then `post_time` back at the operating
/// point. Cycles repeat `repetitions` times back to back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetProtocol {
    pub qc_stage: QcStage,
    pub cf_stage: CfStage,
    /// Interval between preparation rounds.
    pub pad_time: f64,
    pub pre_time: f64,
    pub post_time: f64,
    /// Coupler idle frequency, Hz.
    pub operating_point: f64,
    pub repetitions: usize,
    /// Waveform sample interval.
    pub dt: f64,
    /// Gaussian smoothing applied to the compiled Z waveform, FWHM in s.
    #[serde(default)]
    pub kernel_fwhm: Option<f64>,
}

impl ResetProtocol {
    pub fn validate(&self) -> Result<(), ResetError> {
        if !(self.qc_stage.duration() > 0.0) || !(self.cf_stage.duration() > 0.0) {
            return Err(ResetError::Invalid("stage durations must be positive".into()));
        }
        if self.pre_time < 0.0 || self.post_time < 0.0 || self.pad_time < 0.0 {
            return Err(ResetError::Invalid("idle times must be nonnegative".into()));
        }
        if self.repetitions == 0 {
            return Err(ResetError::Invalid("need at least one cycle".into()));
        }
        if !(self.dt > 0.0) {
            return Err(ResetError::Invalid("dt must be positive".into()));
        }
        if let QcStage::Adiabatic(spec) = &self.qc_stage {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn cycle_duration(&self) -> f64 {
        self.pre_time + self.qc_stage.duration() + self.cf_stage.duration() + self.post_time
    }

    pub fn with_cf_duration(mut self, d: f64) -> Self {
        self.cf_stage = self.cf_stage.with_duration(d);
        self
    }
}

/// Initial qubit preparation: R01(π·a01) followed by R12(π·a12).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prep {
    pub a01: f64,
    pub a12: f64,
}

impl Prep {
    pub const GROUND: Prep = Prep { a01: 0.0, a12: 0.0 };
    pub const ONE: Prep = Prep { a01: 1.0, a12: 0.0 };
    pub const TWO: Prep = Prep { a01: 1.0, a12: 1.0 };

    /// π01 followed by a fractional π12 of amplitude `a`.
    pub fn unconditional(a: f64) -> Self {
        Prep { a01: 1.0, a12: a }
    }

    /// Rotation applied in the dressed basis whose columns are `dressed`.
    fn apply(&self, sys: &QuantumSystem, dressed: &ComplexMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
        let levels = sys.subsystems[0].levels;
        let r = transition_rotation(levels, 1, PI * self.a12) * transition_rotation(levels, 0, PI * self.a01);
        apply_unitary(rho, &(dressed * sys.embed(0, &r) * dressed.adjoint()))
    }
}

/// Coupler frequency over one cycle, sampled at `k·dt` for `k` in
/// `0..round(cycle/dt)`.
fn cycle_samples(device: &ResetDevice, p: &ResetProtocol) -> Result<Vec<f64>, ResetError> {
    let qc = p.qc_stage.duration();
    let cf = p.cf_stage.duration();
    let edges = [p.pre_time, p.pre_time + qc, p.pre_time + qc + cf];
    let n = (p.cycle_duration() / p.dt).round() as usize;
    let adiabatic = match &p.qc_stage {
        QcStage::Adiabatic(spec) => {
            let m = ((spec.tau / p.dt).round() as usize).max(1) + 1;
            Some((spec.f_center, adiabatic_detuning_waveform(spec, m)?))
        }
        QcStage::Square { .. } => None,
    };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * p.dt;
        // Snap to the grid so sample times on a boundary land in the later stage.
        let eps = 1e-9 * p.dt;
        let f = if t + eps < edges[0] {
            p.operating_point
        } else if t + eps < edges[1] {
            match (&p.qc_stage, &adiabatic) {
                (QcStage::Square { frequency, .. }, _) => *frequency,
                (QcStage::Adiabatic(_), Some((fc, w))) => fc + w.value_at(t - edges[0]),
                _ => unreachable!(),
            }
        } else if t + eps < edges[2] {
            match p.cf_stage {
                CfStage::Square { frequency, .. } => frequency,
                CfStage::Ramp { z_start, slope, .. } => {
                    coupler_frequency_from_z(z_start + slope * (t - edges[1]), &device.coupler)
                }
            }
        } else {
            p.operating_point
        };
        out.push(f);
    }
    Ok(out)
}

/// Coupler frequency waveform for `cycles` consecutive cycles, ending with
/// one extra sample at the operating point. Smoothing, when requested, acts
/// on the Z amplitudes.
pub fn reset_waveform(device: &ResetDevice, p: &ResetProtocol, cycles: usize) -> Result<Waveform, ResetError> {
    p.validate()?;
    let one = cycle_samples(device, p)?;
    let mut values = Vec::with_capacity(one.len() * cycles + 1);
    for _ in 0..cycles {
        values.extend_from_slice(&one);
    }
    values.push(p.operating_point);
    let w = Waveform::new(0.0, p.dt, values, Channel::CouplerFreq)?;
    match p.kernel_fwhm {
        Some(fwhm) if fwhm > 0.0 => {
            let z = compile_frequency_to_z(&w, &device.coupler, Branch::Plus)?;
            Ok(z_to_frequency(&gaussian_convolve(&z, fwhm)?, &device.coupler))
        }
        _ => Ok(w),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResetOutcome {
    /// Qubit ground-state probability at the end of every cycle.
    pub cycle_p0: Vec<f64>,
    /// 1 − P0 of the qubit after the last cycle.
    pub residual: f64,
    /// Excited-state probability of the coupler after the last cycle.
    pub coupler_residual: f64,
    pub times: Vec<f64>,
    /// Bare-basis excitation probabilities along the run.
    pub qubit_excited: Vec<f64>,
    pub coupler_excited: Vec<f64>,
    pub filter_excited: Vec<f64>,
    pub trace_error: f64,
    pub hermiticity_error: f64,
}

/// Evolution options used by every reset simulation.
pub fn reset_evolve_options() -> EvolveOptions {
    EvolveOptions { rtol: 1e-8, atol: 1e-10, ..EvolveOptions::default() }
}

/// Eigenvectors of the idle Hamiltonian, column `i` being the eigenstate
/// that overlaps most with bare basis state `i`.
pub fn dressed_basis(sys: &QuantumSystem, freqs: &[f64]) -> Result<ComplexMatrix, ResetError> {
    let frame = freqs.iter().sum::<f64>() / freqs.len() as f64;
    let h = sys.hamiltonian(freqs, frame)?;
    let eig = h.symmetric_eigen();
    let d = sys.dim();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(d * d);
    for k in 0..d {
        for i in 0..d {
            pairs.push((eig.eigenvectors[(i, k)].norm_sqr(), i, k));
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut v = ComplexMatrix::zeros(d, d);
    let (mut row_used, mut col_used) = (vec![false; d], vec![false; d]);
    for (_, i, k) in pairs {
        if !row_used[i] && !col_used[k] {
            row_used[i] = true;
            col_used[k] = true;
            // Fix the phase so the dominant bare component is real positive.
            let c = eig.eigenvectors[(i, k)];
            let phase = if c.norm() > 0.0 { c.conj() / c.norm() } else { Complex64::new(1.0, 0.0) };
            v.set_column(i, &(eig.eigenvectors.column(k) * phase));
        }
    }
    Ok(v)
}

/// Probability that the qubit is in its dressed ground manifold.
fn dressed_qubit_p0(sys: &QuantumSystem, v: &ComplexMatrix, rho: &ComplexMatrix) -> f64 {
    let r = v.adjoint() * rho * v;
    (0..sys.dim()).filter(|&i| sys.level(0, i) == 0).map(|i| r[(i, i)].re).sum()
}

fn idle_frequencies(device: &ResetDevice, p: &ResetProtocol) -> [f64; 3] {
    [device.qubit_freq, p.operating_point, device.filter_freq]
}

/// Runs `cycles` reset cycles from `rho`. Preparation and readout both act
/// on dressed states of the idle point.
fn run_cycles(
    device: &ResetDevice,
    p: &ResetProtocol,
    rho: &ComplexMatrix,
    cycles: usize,
) -> Result<(ResetOutcome, ComplexMatrix), ResetError> {
    device.validate()?;
    let sys = device.system();
    let v = dressed_basis(&sys, &idle_frequencies(device, p))?;
    let w = reset_waveform(device, p, 1)?;
    let period = w.t_end();
    let grid = linear_grid(0.0, period, (period / (0.5 * NS)).round() as usize + 1);
    let mut controls = Controls::new();
    controls.insert(Channel::CouplerFreq, w);
    let mut state = rho.clone();
    let mut out = ResetOutcome {
        cycle_p0: Vec::with_capacity(cycles),
        residual: 0.0,
        coupler_residual: 0.0,
        times: Vec::new(),
        qubit_excited: Vec::new(),
        coupler_excited: Vec::new(),
        filter_excited: Vec::new(),
        trace_error: 0.0,
        hermiticity_error: 0.0,
    };
    for c in 0..cycles {
        let r = evolve(&sys, &controls, &state, &grid, &reset_evolve_options())?;
        let skip = usize::from(c > 0);
        out.times.extend(r.times[skip..].iter().map(|t| t + c as f64 * period));
        out.qubit_excited.extend(r.qubit_p0[skip..].iter().map(|p| 1.0 - p));
        out.coupler_excited.extend_from_slice(&r.populations[1][skip..]);
        out.filter_excited.extend_from_slice(&r.populations[2][skip..]);
        out.trace_error = out.trace_error.max(r.trace_error);
        out.hermiticity_error = out.hermiticity_error.max(r.hermiticity_error);
        out.coupler_residual = *r.populations[1].last().unwrap();
        state = r.final_state.expect("evolve returns the final state");
        out.cycle_p0.push(dressed_qubit_p0(&sys, &v, &state));
    }
    out.residual = 1.0 - out.cycle_p0.last().unwrap();
    Ok((out, state))
}

fn prepare(device: &ResetDevice, p: &ResetProtocol, prep: Prep, rho: &ComplexMatrix) -> Result<ComplexMatrix, ResetError> {
    let sys = device.system();
    let v = dressed_basis(&sys, &idle_frequencies(device, p))?;
    Ok(prep.apply(&sys, &v, rho))
}

/// Prepares the qubit from the ground state and runs `protocol.repetitions`
/// reset cycles.
pub fn simulate_reset_cycle(device: &ResetDevice, protocol: &ResetProtocol, initial: Prep) -> Result<ResetOutcome, ResetError> {
    let sys = device.system();
    let rho = prepare(device, protocol, initial, &basis_state(&sys, &[0, 0, 0]))?;
    Ok(run_cycles(device, protocol, &rho, protocol.repetitions)?.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub amplitudes: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub worst_amplitude: f64,
}

/// Residual after π01 + A·π12 preparation for each `A`.
pub fn unconditional_sweep(device: &ResetDevice, protocol: &ResetProtocol, a_grid: &[f64]) -> Result<SweepResult, ResetError> {
    if a_grid.is_empty() || a_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(ResetError::Invalid("amplitudes must lie in [0, 1]".into()));
    }
    let residuals = a_grid
        .par_iter()
        .map(|&a| simulate_reset_cycle(device, protocol, Prep::unconditional(a)).map(|o| o.residual))
        .collect::<Result<Vec<_>, _>>()?;
    let (worst, max) = residuals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc });
    Ok(SweepResult {
        amplitudes: a_grid.to_vec(),
        residuals,
        max_residual: max,
        worst_amplitude: a_grid[worst],
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundSeries {
    /// Residual after the last cycle of each round.
    pub residuals: Vec<f64>,
    /// `[round][cycle]` qubit residual.
    pub per_cycle: Vec<Vec<f64>>,
    pub coupler_residuals: Vec<f64>,
}

/// `rounds` repetitions of prepare-then-reset with `cycles` reset cycles per
/// round. With `carry` the full state passes unchanged from one round to the
/// next (no relaxation during the pad); without it every round starts from
/// the ground state.
pub fn repeated_prepare_reset(
    device: &ResetDevice,
    protocol: &ResetProtocol,
    initial: Prep,
    rounds: usize,
    cycles: usize,
    carry: bool,
) -> Result<RoundSeries, ResetError> {
    if rounds == 0 || cycles == 0 {
        return Err(ResetError::Invalid("rounds and cycles must be at least 1".into()));
    }
    let sys = device.system();
    let ground = basis_state(&sys, &[0, 0, 0]);
    let outcomes: Vec<ResetOutcome> = if carry {
        let mut rho = ground;
        let mut out = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let (o, next) = run_cycles(device, protocol, &prepare(device, protocol, initial, &rho)?, cycles)?;
            rho = next;
            out.push(o);
        }
        out
    } else {
        (0..rounds)
            .into_par_iter()
            .map(|_| run_cycles(device, protocol, &prepare(device, protocol, initial, &ground)?, cycles).map(|x| x.0))
            .collect::<Result<_, _>>()?
    };
    Ok(RoundSeries {
        residuals: outcomes.iter().map(|o| o.residual).collect(),
        per_cycle: outcomes.iter().map(|o| o.cycle_p0.iter().map(|p| 1.0 - p).collect()).collect(),
        coupler_residuals: outcomes.iter().map(|o| o.coupler_residual).collect(),
    })
}

/// Residual after `template.repetitions` cycles for each coupler–filter
/// stage duration. Use at least two cycles: the coupler's leftover only
/// reaches the qubit in the next qubit–coupler stage.
pub fn swap_duration_scan(
    device: &ResetDevice,
    template: &ResetProtocol,
    initial: Prep,
    cf_durations: &[f64],
) -> Result<Vec<(f64, f64)>, ResetError> {
    if cf_durations.iter().any(|d| !(*d > 0.0)) {
        return Err(ResetError::Invalid("durations must be positive".into()));
    }
    cf_durations
        .par_iter()
        .map(|&d| simulate_reset_cycle(device, &template.with_cf_duration(d), initial).map(|o| (d, o.residual)))
        .collect()
}

/// Residual versus smoothing-kernel FWHM with the coupler idling at
/// `operating_point`. A FWHM of zero means no smoothing.
pub fn lzs_robustness(
    device: &ResetDevice,
    protocol: &ResetProtocol,
    initial: Prep,
    fwhms: &[f64],
    operating_point: f64,
) -> Result<Vec<(f64, f64)>, ResetError> {
    let (lo, hi) = coupler_band(&device.coupler);
    if operating_point < lo || operating_point > hi * (1.0 + 1e-12) {
        return Err(ResetError::Invalid(format!(
            "operating point {operating_point:e} Hz outside the coupler band"
        )));
    }
    fwhms
        .par_iter()
        .map(|&fwhm| {
            let p = ResetProtocol {
                operating_point,
                kernel_fwhm: (fwhm > 0.0).then_some(fwhm),
                ..*protocol
            };
            simulate_reset_cycle(device, &p, initial).map(|o| (fwhm, o.residual))
        })
        .collect()
}

/// Identical couplers sharing one lossy filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiCouplerSpec {
    /// Coupler detunings from the filter, Hz.
    pub detunings: Vec<f64>,
    pub g_cf: f64,
    pub kappa_f: f64,
    pub filter_freq: f64,
    pub filter_levels: usize,
    pub filter_anharmonicity: f64,
    pub coupler_levels: usize,
    pub coupler_anharmonicity: f64,
}

impl MultiCouplerSpec {
    pub fn new(detunings: Vec<f64>, g_cf: f64, kappa_f: f64) -> Self {
        MultiCouplerSpec {
            detunings,
            g_cf,
            kappa_f,
            filter_freq: 7.01367 * GHZ,
            filter_levels: 3,
            filter_anharmonicity: -4.47 * MHZ,
            coupler_levels: 2,
            coupler_anharmonicity: -330.0 * MHZ,
        }
    }

    pub fn system(&self) -> QuantumSystem {
        let n = self.detunings.len();
        let mut subs: Vec<Subsystem> = self
            .detunings
            .iter()
            .enumerate()
            .map(|(i, d)| Subsystem {
                label: format!("c{}", i + 1),
                levels: self.coupler_levels,
                frequency: FrequencySource::Fixed(self.filter_freq + d),
                anharmonicity: self.coupler_anharmonicity,
            })
            .collect();
        subs.push(Subsystem {
            label: "filter".into(),
            levels: self.filter_levels,
            frequency: FrequencySource::Fixed(self.filter_freq),
            anharmonicity: self.filter_anharmonicity,
        });
        let mut sys = QuantumSystem::new(subs);
        sys.frame_frequency = Some(self.filter_freq);
        for i in 0..n {
            sys = sys.with_coupling(i, n, self.g_cf);
        }
        sys.with_collapse(n, self.kappa_f)
    }
}

/// Starting state of the couplers; the filter starts empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplerInit {
    /// Product of coupler levels.
    Basis(Vec<usize>),
    /// Superposition of coupler level tuples with (re, im) amplitudes.
    Superposition(Vec<(Vec<usize>, f64, f64)>),
}

impl CouplerInit {
    pub fn all_excited(n: usize) -> Self {
        CouplerInit::Basis(vec![1; n])
    }

    /// (|10⟩ − |01⟩)/√2 on the first two couplers.
    pub fn antisymmetric_pair(n: usize) -> Self {
        let mut a = vec![0; n];
        let mut b = vec![0; n];
        a[0] = 1;
        b[1] = 1;
        CouplerInit::Superposition(vec![(a, 1.0, 0.0), (b, -1.0, 0.0)])
    }

    fn state(&self, sys: &QuantumSystem) -> Result<ComplexMatrix, ResetError> {
        let n = sys.subsystems.len() - 1;
        let full = |levels: &[usize]| -> Result<Vec<usize>, ResetError> {
            if levels.len() != n || levels.iter().zip(&sys.subsystems).any(|(l, s)| *l >= s.levels) {
                return Err(ResetError::Invalid(format!("bad coupler levels {levels:?}")));
            }
            Ok(levels.iter().copied().chain([0]).collect())
        };
        match self {
            CouplerInit::Basis(levels) => Ok(basis_state(sys, &full(levels)?)),
            CouplerInit::Superposition(terms) => {
                let mut psi = vec![Complex64::new(0.0, 0.0); sys.dim()];
                for (levels, re, im) in terms {
                    psi[sys.basis_index(&full(levels)?)] += Complex64::new(*re, *im);
                }
                if psi.iter().all(|a| a.norm() == 0.0) {
                    return Err(ResetError::Invalid("superposition has zero norm".into()));
                }
                Ok(pure_state(&psi))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub start: f64,
    pub level: f64,
}

/// Stalled decay: over the final quarter of the trace the value stays above
/// `floor` and never moves faster than `max_rate` (per second).
pub fn detect_plateau(times: &[f64], values: &[f64], floor: f64, max_rate: f64) -> Option<Plateau> {
    let n = times.len();
    if n < 4 {
        return None;
    }
    let start = n - n / 4 - 1;
    let stalled = (start..n - 1).all(|i| {
        let rate = (values[i + 1] - values[i]) / (times[i + 1] - times[i]);
        rate.abs() < max_rate && values[i] > floor
    });
    (stalled && values[n - 1] > floor).then(|| Plateau { start: times[start], level: values[n - 1] })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiCouplerOutcome {
    pub times: Vec<f64>,
    /// `[coupler][sample]` excited-state probability.
    pub per_coupler: Vec<Vec<f64>>,
    /// Total coupler excitation number.
    pub total: Vec<f64>,
    /// Largest per-coupler excitation at the end of the run.
    pub residual: f64,
    pub plateau: Option<Plateau>,
    pub trace_error: f64,
    pub hermiticity_error: f64,
}

impl MultiCouplerOutcome {
    /// First sample time after which every coupler stays below `level`.
    pub fn time_below(&self, level: f64) -> Option<f64> {
        let n = self.times.len();
        let above = |k: usize| self.per_coupler.iter().any(|p| p[k] >= level);
        if above(n - 1) {
            return None;
        }
        let last_above = (0..n).rev().find(|&k| above(k));
        Some(match last_above {
            Some(k) => self.times[k + 1],
            None => self.times[0],
        })
    }
}

/// Evolves the couplers and filter for `duration`, sampled every
/// `sample_dt`.
pub fn multi_coupler_reset(
    spec: &MultiCouplerSpec,
    initial: &CouplerInit,
    duration: f64,
    sample_dt: f64,
) -> Result<MultiCouplerOutcome, ResetError> {
    if spec.detunings.is_empty() {
        return Err(ResetError::Invalid("need at least one coupler".into()));
    }
    let sys = spec.system();
    sys.validate()?;
    let rho = initial.state(&sys)?;
    let grid = linear_grid(0.0, duration, (duration / sample_dt).round() as usize + 1);
    let r = evolve(&sys, &Controls::new(), &rho, &grid, &reset_evolve_options())?;
    let n = spec.detunings.len();
    let per_coupler: Vec<Vec<f64>> = r.populations[..n].to_vec();
    let total: Vec<f64> = (0..grid.len()).map(|k| r.occupations[..n].iter().map(|o| o[k]).sum()).collect();
    let residual = per_coupler.iter().map(|p| *p.last().unwrap()).fold(0.0, f64::max);
    let plateau = detect_plateau(&grid, &total, 0.01, 1e5);
    Ok(MultiCouplerOutcome {
        times: grid,
        per_coupler,
        total,
        residual,
        plateau,
        trace_error: r.trace_error,
        hermiticity_error: r.hermiticity_error,
    })
}

/// What a named scenario runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    Cycle { initial: Prep },
    Sweep { amplitudes: Vec<f64> },
    Repeated { initial: Prep, rounds: usize, cycles: usize, carry: bool },
    DurationScan { initial: Prep, cf_durations: Vec<f64> },
    Lzs { initial: Prep, fwhms: Vec<f64>, operating_point: f64 },
    MultiCoupler { spec: MultiCouplerSpec, initial: CouplerInit, duration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetScenario {
    pub name: String,
    pub description: String,
    pub device: ResetDevice,
    pub protocol: ResetProtocol,
    #[serde(flatten)]
    pub kind: ScenarioKind,
}

impl ResetScenario {
    pub fn from_json(text: &str) -> Result<Self, ResetError> {
        serde_json::from_str(text).map_err(|e| ResetError::Invalid(format!("scenario file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Square qubit–coupler swap at the qubit frequency for 4.5 ns, then 70 ns
/// parked on the filter.
pub fn square_protocol(device: &ResetDevice) -> ResetProtocol {
    ResetProtocol {
        qc_stage: QcStage::Square { frequency: device.qubit_freq, duration: 4.5 * NS },
        cf_stage: CfStage::Square { frequency: device.filter_freq, duration: 70.0 * NS },
        pad_time: 700.0 * NS,
        pre_time: 2.0 * NS,
        post_time: 2.0 * NS,
        operating_point: 4.0 * GHZ,
        repetitions: 1,
        dt: 0.1 * NS,
        kernel_fwhm: None,
    }
}

/// Coupler–filter ramp from Z = 1.209 with slope −1.6e-4 per ns.
pub fn standard_ramp(duration: f64) -> CfStage {
    CfStage::Ramp { z_start: 1.209, slope: -0.00016 / NS, duration }
}

/// 30 ns shaped sweep 4.0 → 5.5 GHz around 4.86 GHz with shaping
/// coupling `g`, then the 170 ns ramp.
pub fn adiabatic_protocol(g: f64) -> ResetProtocol {
    ResetProtocol {
        qc_stage: QcStage::Adiabatic(AdiabaticSpec::between(4.0 * GHZ, 5.5 * GHZ, 30.0 * NS, g, 4.86 * GHZ)),
        cf_stage: standard_ramp(170.0 * NS),
        pad_time: 700.0 * NS,
        pre_time: 2.0 * NS,
        post_time: 2.0 * NS,
        operating_point: 4.0 * GHZ,
        repetitions: 1,
        dt: 0.1 * NS,
        kernel_fwhm: None,
    }
}

/// Shaping coupling used by the working adiabatic variant.
pub const ROBUST_SHAPING_G: f64 = 80.0 * MHZ;
/// Shaping coupling quoted for the measured device.
pub const NOMINAL_SHAPING_G: f64 = 0.605 * MHZ;

pub const UNCONDITIONAL_AMPLITUDES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const LZS_FWHMS: [f64; 4] = [0.0, 0.78 * NS, 1.56 * NS, 3.12 * NS];
/// Detunings of three couplers from the shared filter.
pub const SPREAD_DETUNINGS: [f64; 3] = [0.0, -25.89 * MHZ, 26.74 * MHZ];

/// Named scenarios shipped with the library.
pub fn scenario_library() -> Vec<ResetScenario> {
    let device = ResetDevice::reference();
    let square = square_protocol(&device);
    let nominal = adiabatic_protocol(NOMINAL_SHAPING_G);
    let robust = adiabatic_protocol(ROBUST_SHAPING_G);
    let short_cf = ResetProtocol { cf_stage: standard_ramp(70.0 * NS), ..robust };
    let two_cycles = ResetProtocol { repetitions: 2, ..square };
    let upper = coupler_band(&device.coupler).1;
    let mc = |detunings: Vec<f64>| MultiCouplerSpec::new(detunings, 20.0 * MHZ, 140.0 * MHZ);
    let mk = |name: &str, description: &str, protocol: ResetProtocol, kind: ScenarioKind| ResetScenario {
        name: name.into(),
        description: description.into(),
        device: device.clone(),
        protocol,
        kind,
    };
    vec![
        mk("paper-square", "|1> reset with square swaps, 4.5 ns + 70 ns", square, ScenarioKind::Cycle { initial: Prep::ONE }),
        mk(
            "paper-adiabatic",
            "unconditional reset, shaped 30 ns sweep with g = 0.605 MHz, 170 ns ramp; worst case over A",
            nominal,
            ScenarioKind::Sweep { amplitudes: UNCONDITIONAL_AMPLITUDES.to_vec() },
        ),
        mk(
            "adiabatic-robust",
            "unconditional reset, shaped 30 ns sweep with g = 80 MHz, 170 ns ramp; worst case over A",
            robust,
            ScenarioKind::Sweep { amplitudes: UNCONDITIONAL_AMPLITUDES.to_vec() },
        ),
        mk(
            "accumulation",
            "20 rounds of |1> preparation and one reset cycle with a 70 ns ramp, state carried between rounds",
            short_cf,
            ScenarioKind::Repeated { initial: Prep::ONE, rounds: 20, cycles: 1, carry: true },
        ),
        mk(
            "duration-scan",
            "residual after two square cycles versus coupler-filter swap length",
            two_cycles,
            ScenarioKind::DurationScan {
                initial: Prep::ONE,
                cf_durations: (0..5).map(|i| (50.0 + 50.0 * i as f64) * NS).collect(),
            },
        ),
        mk(
            "lzs-below",
            "|1> reset versus Z smoothing, coupler idling below the qubit",
            robust,
            ScenarioKind::Lzs { initial: Prep::ONE, fwhms: LZS_FWHMS.to_vec(), operating_point: 4.0 * GHZ },
        ),
        mk(
            "lzs-above",
            "|1> reset versus Z smoothing, coupler idling at its upper sweet spot",
            robust,
            ScenarioKind::Lzs { initial: Prep::ONE, fwhms: LZS_FWHMS.to_vec(), operating_point: upper },
        ),
        mk(
            "multi-coupler-dark",
            "two identical resonant couplers in the antisymmetric state",
            square,
            ScenarioKind::MultiCoupler {
                spec: mc(vec![0.0, 0.0]),
                initial: CouplerInit::antisymmetric_pair(2),
                duration: 1000.0 * NS,
            },
        ),
        mk(
            "multi-coupler-spread",
            "three detuned couplers, all excited",
            square,
            ScenarioKind::MultiCoupler {
                spec: mc(SPREAD_DETUNINGS.to_vec()),
                initial: CouplerInit::all_excited(3),
                duration: 500.0 * NS,
            },
        ),
    ]
}

pub fn scenario(name: &str) -> Result<ResetScenario, ResetError> {
    let lib = scenario_library();
    let known = lib.iter().map(|s| s.name.clone()).collect();
    lib.into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ResetError::UnknownScenario { name: name.into(), known })
}

/// Tabular scenario result. `residual` is the headline number: the final
/// residual for single runs, the worst case for sweeps and scans.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub residual: f64,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn run_scenario(s: &ResetScenario) -> Result<ScenarioReport, ResetError> {
    let (columns, rows, residual): (Vec<&str>, Vec<Vec<f64>>, f64) = match &s.kind {
        ScenarioKind::Cycle { initial } => {
            let o = simulate_reset_cycle(&s.device, &s.protocol, *initial)?;
            let rows = (0..o.times.len())
                .map(|k| vec![o.times[k], o.qubit_excited[k], o.coupler_excited[k], o.filter_excited[k]])
                .collect();
            (vec!["t", "qubit_excited", "coupler_excited", "filter_excited"], rows, o.residual)
        }
        ScenarioKind::Sweep { amplitudes } => {
            let r = unconditional_sweep(&s.device, &s.protocol, amplitudes)?;
            let rows = r.amplitudes.iter().zip(&r.residuals).map(|(a, v)| vec![*a, *v]).collect();
            (vec!["amplitude", "residual"], rows, r.max_residual)
        }
        ScenarioKind::Repeated { initial, rounds, cycles, carry } => {
            let r = repeated_prepare_reset(&s.device, &s.protocol, *initial, *rounds, *cycles, *carry)?;
            let rows = r
                .residuals
                .iter()
                .zip(&r.coupler_residuals)
                .enumerate()
                .map(|(i, (q, c))| vec![(i + 1) as f64, *q, *c])
                .collect();
            (vec!["round", "residual", "coupler_residual"], rows, *r.residuals.last().unwrap())
        }
        ScenarioKind::DurationScan { initial, cf_durations } => {
            let r = swap_duration_scan(&s.device, &s.protocol, *initial, cf_durations)?;
            let worst = r.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
            (vec!["cf_duration", "residual"], r.iter().map(|(d, v)| vec![*d, *v]).collect(), worst)
        }
        ScenarioKind::Lzs { initial, fwhms, operating_point } => {
            let r = lzs_robustness(&s.device, &s.protocol, *initial, fwhms, *operating_point)?;
            let worst = r.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
            (vec!["fwhm", "residual"], r.iter().map(|(f, v)| vec![*f, *v]).collect(), worst)
        }
        ScenarioKind::MultiCoupler { spec, initial, duration } => {
            let o = multi_coupler_reset(spec, initial, *duration, 1.0 * NS)?;
            let rows = (0..o.times.len())
                .map(|k| {
                    let mut row = vec![o.times[k]];
                    row.extend(o.per_coupler.iter().map(|p| p[k]));
                    row
                })
                .collect();
            let names: Vec<String> = (1..=spec.detunings.len()).map(|i| format!("c{i}_excited")).collect();
            let columns = std::iter::once("t".to_string()).chain(names).collect();
            return Ok(ScenarioReport { name: s.name.clone(), residual: o.residual, columns, rows });
        }
    };
    Ok(ScenarioReport {
        name: s.name.clone(),
        residual,
        columns: columns.into_iter().map(String::from).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_square() -> (ResetDevice, ResetProtocol) {
        let d = ResetDevice { filter_levels: 3, ..ResetDevice::reference() };
        let p = square_protocol(&d);
        (d, p)
    }

    #[test]
    fn reference_flux_map_hits_filter() {
        let d = ResetDevice::reference();
        let f = coupler_frequency_from_z(1.209, &d.coupler);
        assert!((f - 7.0 * GHZ).abs() < 5.0 * MHZ, "{f}");
        assert!((d.g_qc - 55.555_555e6).abs() < 1.0);
    }

    #[test]
    fn waveform_layout() {
        let (d, p) = quick_square();
        let w = reset_waveform(&d, &p, 2).unwrap();
        let per = (p.cycle_duration() / p.dt).round() as usize;
        assert_eq!(w.len(), 2 * per + 1);
        assert_eq!(w.values[0], 4.0 * GHZ);
        assert_eq!(w.values[20], d.qubit_freq);
        assert_eq!(w.values[20 + 44], d.qubit_freq);
        assert_eq!(w.values[20 + 45], d.filter_freq);
        assert_eq!(w.values[per - 1], 4.0 * GHZ);
        assert_eq!(w.values[per + 20], d.qubit_freq);
    }

    #[test]
    fn smoothing_limits() {
        let d = ResetDevice::reference();
        let p = adiabatic_protocol(ROBUST_SHAPING_G);
        let raw = reset_waveform(&d, &p, 1).unwrap();
        let narrow = reset_waveform(&d, &ResetProtocol { kernel_fwhm: Some(0.2 * NS), ..p }, 1).unwrap();
        let wide = reset_waveform(&d, &ResetProtocol { kernel_fwhm: Some(3.0 * NS), ..p }, 1).unwrap();
        let dev = |w: &Waveform| w.values.iter().zip(&raw.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev(&narrow) < dev(&wide));
        assert!(wide.values.iter().all(|f| *f <= 8.6 * GHZ * (1.0 + 1e-12)));
    }

    #[test]
    fn ground_state_needs_no_reset() {
        let (d, p) = quick_square();
        let o = simulate_reset_cycle(&d, &p, Prep::GROUND).unwrap();
        assert!(o.residual <= 1e-6, "{}", o.residual);
    }

    #[test]
    fn square_reset_empties_qubit() {
        let (d, p) = quick_square();
        let o = simulate_reset_cycle(&d, &p, Prep::ONE).unwrap();
        assert!(o.residual < 0.01, "{}", o.residual);
        assert!(o.trace_error < 1e-6 && o.hermiticity_error < 1e-9);
    }

    #[test]
    fn no_carry_rounds_are_identical() {
        let (d, p) = quick_square();
        let r = repeated_prepare_reset(&d, &p, Prep::ONE, 3, 1, false).unwrap();
        assert!(r.residuals.windows(2).all(|w| w[0].to_bits() == w[1].to_bits()));
    }

    #[test]
    fn cf_stage_is_monotone() {
        // Coupler starts excited on the filter with the qubit far away:
        // total excitation only decreases.
        let d = ResetDevice { filter_levels: 3, ..ResetDevice::reference() };
        let sys = d.system();
        let rho = basis_state(&sys, &[0, 1, 0]);
        let mut controls = Controls::new();
        controls.insert(Channel::CouplerFreq, Waveform::constant(d.filter_freq, 100.0 * NS, 1.0 * NS, Channel::CouplerFreq).unwrap());
        let grid = linear_grid(0.0, 100.0 * NS, 201);
        let r = evolve(&sys, &controls, &rho, &grid, &reset_evolve_options()).unwrap();
        let total: Vec<f64> = (0..grid.len()).map(|k| r.occupations[0][k] + r.occupations[1][k]).collect();
        assert!(total.windows(2).all(|w| w[1] <= w[0] + 1e-8));
    }

    #[test]
    fn plateau_detection() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 1e-8).collect();
        let decaying: Vec<f64> = t.iter().map(|x| (-x / 1e-7).exp()).collect();
        let stuck: Vec<f64> = t.iter().map(|x| 0.5 + 0.5 * (-x / 1e-8).exp()).collect();
        assert!(detect_plateau(&t, &decaying, 0.01, 1e5).is_none());
        let p = detect_plateau(&t, &stuck, 0.01, 1e5).unwrap();
        assert!((p.level - 0.5).abs() < 1e-6);
    }

    #[test]
    fn scenario_json_round_trip() {
        for s in scenario_library() {
            let back = ResetScenario::from_json(&s.to_json()).unwrap();
            assert_eq!(back, s);
        }
        match scenario("nope") {
            Err(ResetError::UnknownScenario { known, .. }) => assert!(known.contains(&"paper-square".to_string())),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_inputs() {
        let (d, p) = quick_square();
        assert!(unconditional_sweep(&d, &p, &[1.5]).is_err());
        assert!(repeated_prepare_reset(&d, &p, Prep::ONE, 0, 1, true).is_err());
        let bad = ResetProtocol { repetitions: 0, ..p };
        assert!(simulate_reset_cycle(&d, &bad, Prep::ONE).is_err());
        let big = MultiCouplerSpec { coupler_levels: 10, filter_levels: 10, ..MultiCouplerSpec::new(vec![0.0; 3], 20e6, 140e6) };
        assert!(matches!(
            multi_coupler_reset(&big, &CouplerInit::all_excited(3), 1e-8, 1e-9),
            Err(ResetError::Dynamics(DynamicsError::DimensionCap { .. }))
        ));
    }

    #[test]
    fn zero_amplitude_is_plain_one_reset() {
        let (d, p) = quick_square();
        let sweep = unconditional_sweep(&d, &p, &[0.0]).unwrap();
        let direct = simulate_reset_cycle(&d, &p, Prep::ONE).unwrap();
        assert_eq!(sweep.residuals[0].to_bits(), direct.residual.to_bits());
    }

    #[test]
    fn narrowest_kernel_matches_unfiltered() {
        let d = ResetDevice { filter_levels: 3, ..ResetDevice::reference() };
        // The kernel cannot be narrower than 2·dt, so approach the limit on
        // a fine grid.
        let p = ResetProtocol { dt: 0.01 * NS, ..adiabatic_protocol(ROBUST_SHAPING_G) };
        let r = lzs_robustness(&d, &p, Prep::ONE, &[0.0, 2.0 * p.dt], 4.0 * GHZ).unwrap();
        assert!((r[0].1 - r[1].1).abs() < 1e-4, "{r:?}");
        let plain = simulate_reset_cycle(&d, &p, Prep::ONE).unwrap();
        assert_eq!(plain.residual.to_bits(), r[0].1.to_bits());
    }

    #[test]
    fn vanishing_swap_returns_the_excitation() {
        // Two cycles with almost no coupler–filter time: the second swap
        // hands the excitation back to the qubit.
        let (d, p) = quick_square();
        let p = ResetProtocol { repetitions: 2, ..p }.with_cf_duration(0.1 * NS);
        let o = simulate_reset_cycle(&d, &p, Prep::ONE).unwrap();
        assert!(o.residual > 0.9, "{}", o.residual);
    }

    #[test]
    fn dressed_basis_is_unitary_and_ordered() {
        let d = ResetDevice::reference();
        let sys = d.system();
        let v = dressed_basis(&sys, &[d.qubit_freq, 4.0 * GHZ, d.filter_freq]).unwrap();
        let id = ComplexMatrix::identity(sys.dim(), sys.dim());
        assert!((v.adjoint() * &v - id).norm() < 1e-10);
        for i in 0..sys.dim() {
            assert!(v[(i, i)].re > 0.5, "state {i} weight {}", v[(i, i)]);
        }
    }

    #[test]
    fn shared_filter_speeds_up_identical_couplers() {
        let times: Vec<f64> = (1..=3)
            .map(|n| {
                let spec = MultiCouplerSpec::new(vec![0.0; n], 20.0 * MHZ, 140.0 * MHZ);
                multi_coupler_reset(&spec, &CouplerInit::all_excited(n), 300.0 * NS, 0.5 * NS)
                    .unwrap()
                    .time_below(0.01)
                    .unwrap()
            })
            .collect();
        assert!(times[1] < times[0] && times[2] < times[1], "{times:?}");
    }

    #[test]
    fn antisymmetric_pair_is_trapped() {
        let spec = MultiCouplerSpec::new(vec![0.0, 0.0], 20.0 * MHZ, 140.0 * MHZ);
        let o = multi_coupler_reset(&spec, &CouplerInit::antisymmetric_pair(2), 1000.0 * NS, 2.0 * NS).unwrap();
        assert!(o.plateau.is_some());
        assert!(o.residual > 0.1);
        assert!(o.time_below(0.01).is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_device(g_cf: f64, kappa: f64) -> ResetDevice {
            ResetDevice {
                qubit_levels: 2,
                coupler_levels: 2,
                filter_levels: 2,
                g_cf,
                filter_kappa: kappa,
                ..ResetDevice::reference()
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]

            #[test]
            fn ground_state_is_left_alone(
                f_qc in 4.2e9..5.5e9f64,
                qc in 2e-9..10e-9f64,
                cf in 10e-9..80e-9f64,
                op in 4.0e9..8.6e9f64,
            ) {
                let d = small_device(20e6, 150e6);
                let p = ResetProtocol {
                    qc_stage: QcStage::Square { frequency: f_qc, duration: qc },
                    cf_stage: CfStage::Square { frequency: d.filter_freq, duration: cf },
                    operating_point: op,
                    ..square_protocol(&d)
                };
                let o = simulate_reset_cycle(&d, &p, Prep::GROUND).unwrap();
                prop_assert!(o.residual.abs() <= 1e-6);
                for v in o.qubit_excited.iter().chain(&o.coupler_excited).chain(&o.filter_excited) {
                    prop_assert!((-1e-6..=1.0 + 1e-6).contains(v));
                }
            }

            #[test]
            fn overdamped_swap_never_gains(g in 5e6..30e6f64, ratio in 4.5..12.0f64, levels in 2usize..4) {
                let d = ResetDevice { filter_levels: levels, ..small_device(g, ratio * g) };
                let sys = d.system();
                let rho = basis_state(&sys, &[0, 1, 0]);
                let mut controls = Controls::new();
                controls.insert(
                    Channel::CouplerFreq,
                    Waveform::constant(d.filter_freq, 100.0 * NS, 1.0 * NS, Channel::CouplerFreq).unwrap(),
                );
                let grid = linear_grid(0.0, 100.0 * NS, 101);
                let r = evolve(&sys, &controls, &rho, &grid, &reset_evolve_options()).unwrap();
                let kept: Vec<f64> = (0..grid.len()).map(|k| r.occupations[0][k] + r.occupations[1][k]).collect();
                prop_assert!(kept.windows(2).all(|w| w[1] <= w[0] + 1e-7));
            }
        }
    }
}
