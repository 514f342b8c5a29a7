//! Composite Kerr-oscillator systems and their Lindblad dynamics.
//!
//! Energies inside matrices are angular (rad/s, ħ = 1); every public
//! frequency, coupling and decay rate is an ordinary frequency in Hz and is
//! multiplied by 2π internally. A collapse rate `κ` in Hz means a dissipator
//! `2πκ·D[a]`.
//!
//! Basis ordering follows the subsystem list: the first subsystem is the most
//! significant digit of the composite index.

mod integrator;
mod liouvillian;

pub use integrator::{StepFailure, StepStats, Tolerances};
pub use liouvillian::{build_liouvillian, dark_modes, eigen_decomposition, unvec, vec_column, DarkMode, Eigen};

use crate::circuit_model::coupler_frequency_from_z;
use crate::device_config::CouplerParams;
use crate::pulse_lib::{Channel, Waveform};
use crate::units::angular;
use integrator::Dopri5;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

pub type ComplexMatrix = DMatrix<Complex64>;
pub type Controls = BTreeMap<Channel, Waveform>;

pub const DEFAULT_MAX_DIM: usize = 4096;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("total dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("missing control waveform for channel {0}")]
    MissingControl(&'static str),
    #[error("invalid initial state: {0}")]
    InvalidState(String),
    #[error("integration failed at t = {time:.6e} s: {reason}")]
    Integration { time: f64, reason: String },
    #[error("eigen-solver did not converge")]
    EigenNonConvergence,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Where a subsystem's transition frequency comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FrequencySource {
    Fixed(f64),
    /// Waveform values are absolute frequencies in Hz.
    Control(Channel),
    /// Waveform values are Z amplitudes mapped through the coupler flux map.
    Flux { channel: Channel, coupler: CouplerParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subsystem {
    pub label: String,
    pub levels: usize,
    pub frequency: FrequencySource,
    /// Signed Kerr coefficient: level n sits at n·ω + α·n(n−1)/2.
    pub anharmonicity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub a: usize,
    pub b: usize,
    /// Exchange strength g in g(a†b + ab†), Hz.
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collapse {
    pub subsystem: usize,
    /// κ/2π for the lowering-operator channel, Hz.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumSystem {
    pub subsystems: Vec<Subsystem>,
    pub couplings: Vec<Coupling>,
    pub collapse: Vec<Collapse>,
    /// Rotating-frame frequency; `None` picks the mean initial subsystem frequency.
    pub frame_frequency: Option<f64>,
    pub max_dim: usize,
}

impl QuantumSystem {
    pub fn new(subsystems: Vec<Subsystem>) -> Self {
        QuantumSystem {
            subsystems,
            couplings: Vec::new(),
            collapse: Vec::new(),
            frame_frequency: None,
            max_dim: DEFAULT_MAX_DIM,
        }
    }

    pub fn with_coupling(mut self, a: usize, b: usize, g: f64) -> Self {
        self.couplings.push(Coupling { a, b, g });
        self
    }

    pub fn with_collapse(mut self, subsystem: usize, rate: f64) -> Self {
        self.collapse.push(Collapse { subsystem, rate });
        self
    }

    pub fn dim(&self) -> usize {
        self.subsystems.iter().map(|s| s.levels).product()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.subsystems.iter().position(|s| s.label == label)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.subsystems.is_empty() {
            return Err(DynamicsError::InvalidSystem("no subsystems".into()));
        }
        let mut dim: usize = 1;
        for s in &self.subsystems {
            if s.levels == 0 {
                return Err(DynamicsError::InvalidSystem(format!("{} has no levels", s.label)));
            }
            dim = dim.saturating_mul(s.levels);
        }
        if dim > self.max_dim {
            return Err(DynamicsError::DimensionCap { dim, cap: self.max_dim });
        }
        let n = self.subsystems.len();
        for c in &self.couplings {
            if c.a >= n || c.b >= n || c.a == c.b {
                return Err(DynamicsError::InvalidSystem(format!("bad coupling {}-{}", c.a, c.b)));
            }
        }
        for c in &self.collapse {
            if c.subsystem >= n || c.rate < 0.0 {
                return Err(DynamicsError::InvalidSystem(format!("bad collapse channel on {}", c.subsystem)));
            }
        }
        Ok(())
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.subsystems.len()];
        for s in (0..self.subsystems.len().saturating_sub(1)).rev() {
            strides[s] = strides[s + 1] * self.subsystems[s + 1].levels;
        }
        strides
    }

    /// Level of subsystem `s` in composite basis state `i`.
    pub fn level(&self, s: usize, i: usize) -> usize {
        (i / self.strides()[s]) % self.subsystems[s].levels
    }

    /// Occupation table `[subsystem][basis index]`.
    pub fn occupations(&self) -> Vec<Vec<usize>> {
        let d = self.dim();
        let strides = self.strides();
        self.subsystems
            .iter()
            .enumerate()
            .map(|(s, sub)| (0..d).map(|i| (i / strides[s]) % sub.levels).collect())
            .collect()
    }

    /// Composite basis index for per-subsystem levels.
    pub fn basis_index(&self, levels: &[usize]) -> usize {
        levels.iter().zip(self.strides()).map(|(l, s)| l * s).sum()
    }

    /// Lowering operator of subsystem `s` on the full space.
    pub fn lowering(&self, s: usize) -> ComplexMatrix {
        let d = self.dim();
        let stride = self.strides()[s];
        let occ = self.occupations();
        let mut a = ComplexMatrix::zeros(d, d);
        for i in 0..d {
            let n = occ[s][i];
            if n > 0 {
                a[(i - stride, i)] = Complex64::new((n as f64).sqrt(), 0.0);
            }
        }
        a
    }

    pub fn number(&self, s: usize) -> ComplexMatrix {
        let occ = self.occupations();
        ComplexMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            occ[s].iter().map(|&n| Complex64::new(n as f64, 0.0)),
        ))
    }

    /// Embeds a `levels × levels` operator acting on subsystem `s`.
    pub fn embed(&self, s: usize, op: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::identity(1, 1);
        for (k, sub) in self.subsystems.iter().enumerate() {
            let factor = if k == s { op.clone() } else { ComplexMatrix::identity(sub.levels, sub.levels) };
            out = out.kronecker(&factor);
        }
        out
    }

    /// Subsystem frequencies (Hz) at time `t`.
    pub fn frequencies_at(&self, controls: &Controls, t: f64) -> Result<Vec<f64>, DynamicsError> {
        self.subsystems
            .iter()
            .map(|s| match &s.frequency {
                FrequencySource::Fixed(f) => Ok(*f),
                FrequencySource::Control(ch) => controls
                    .get(ch)
                    .map(|w| w.value_at(t))
                    .ok_or(DynamicsError::MissingControl(ch.name())),
                FrequencySource::Flux { channel, coupler } => controls
                    .get(channel)
                    .map(|w| coupler_frequency_from_z(w.value_at(t), coupler))
                    .ok_or(DynamicsError::MissingControl(channel.name())),
            })
            .collect()
    }

    pub fn resolve_frame(&self, controls: &Controls, t0: f64) -> Result<f64, DynamicsError> {
        match self.frame_frequency {
            Some(f) => Ok(f),
            None => {
                let f = self.frequencies_at(controls, t0)?;
                Ok(f.iter().sum::<f64>() / f.len() as f64)
            }
        }
    }

    /// Dense Hamiltonian (rad/s) for absolute subsystem frequencies `freqs`
    /// (Hz) in a frame rotating at `frame` (Hz).
    pub fn hamiltonian(&self, freqs: &[f64], frame: f64) -> Result<ComplexMatrix, DynamicsError> {
        self.validate()?;
        if freqs.len() != self.subsystems.len() {
            return Err(DynamicsError::DimensionMismatch(format!(
                "{} frequencies for {} subsystems",
                freqs.len(),
                self.subsystems.len()
            )));
        }
        let d = self.dim();
        let ops = SparseOps::new(self);
        let diag = ops.diagonal(freqs, frame);
        let mut h = ComplexMatrix::zeros(d, d);
        for i in 0..d {
            h[(i, i)] = Complex64::new(diag[i], 0.0);
        }
        for &(i, k, v) in &ops.offdiag {
            h[(i, k)] += Complex64::new(v, 0.0);
        }
        Ok(h)
    }

    /// Collapse operators scaled for [`build_liouvillian`] (rates in Hz).
    pub fn collapse_operators(&self) -> Vec<(ComplexMatrix, f64)> {
        self.collapse.iter().map(|c| (self.lowering(c.subsystem), c.rate)).collect()
    }
}

/// Builds the composite Hamiltonian with `freqs` given as absolute
/// subsystem frequencies (Hz), in the laboratory frame.
pub fn build_composite_hamiltonian(sys: &QuantumSystem, freqs: &[f64]) -> Result<ComplexMatrix, DynamicsError> {
    sys.hamiltonian(freqs, 0.0)
}

/// Single-excitation qubit–coupler block in {|0q1c⟩, |1q0c⟩}, rad/s.
pub fn build_qc_hamiltonian_1ex(delta: f64, g: f64) -> ComplexMatrix {
    let (d, g) = (angular(delta), angular(g));
    ComplexMatrix::from_row_slice(2, 2, &[c(d / 2.0), c(g), c(g), c(-d / 2.0)])
}

/// Two-excitation qubit–coupler block in {|0q2c⟩, |1q1c⟩, |2q0c⟩}, rad/s.
pub fn build_qc_hamiltonian_2ex(delta: f64, g: f64, ec_q: f64, ec_c: f64) -> ComplexMatrix {
    let (d, g) = (angular(delta), angular(g) * 2f64.sqrt());
    let (eq, ec) = (angular(ec_q), angular(ec_c));
    ComplexMatrix::from_row_slice(
        3,
        3,
        &[c(d - ec), c(g), ZERO, c(g), ZERO, c(g), ZERO, c(g), c(-d - eq)],
    )
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Precomputed sparse structure of H and the dissipators.
struct SparseOps {
    dim: usize,
    occ: Vec<Vec<f64>>,
    kerr: Vec<f64>,
    /// Entries (row, col, value) of the exchange terms, rad/s.
    offdiag: Vec<(usize, usize, f64)>,
    /// Per-channel jump maps: (source, target, amplitude) and angular rate.
    jumps: Vec<(Vec<(usize, usize, f64)>, f64)>,
    /// Σ_c γ_c n_c(i), the anticommutator diagonal.
    decay: Vec<f64>,
}

impl SparseOps {
    fn new(sys: &QuantumSystem) -> Self {
        let d = sys.dim();
        let occ_u = sys.occupations();
        let strides = sys.strides();
        let occ: Vec<Vec<f64>> = occ_u.iter().map(|o| o.iter().map(|&n| n as f64).collect()).collect();
        let kerr = (0..d)
            .map(|i| {
                sys.subsystems
                    .iter()
                    .enumerate()
                    .map(|(s, sub)| {
                        let n = occ[s][i];
                        angular(sub.anharmonicity) * 0.5 * n * (n - 1.0)
                    })
                    .sum()
            })
            .collect();
        let mut offdiag = Vec::new();
        for cp in &sys.couplings {
            let g = angular(cp.g);
            // a†_a b_b: raises a, lowers b.
            for i in 0..d {
                let na = occ_u[cp.a][i];
                let nb = occ_u[cp.b][i];
                if nb > 0 && na + 1 < sys.subsystems[cp.a].levels {
                    let j = i + strides[cp.a] - strides[cp.b];
                    let v = g * ((na + 1) as f64).sqrt() * (nb as f64).sqrt();
                    offdiag.push((j, i, v));
                    offdiag.push((i, j, v));
                }
            }
        }
        offdiag.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let mut jumps = Vec::new();
        let mut decay = vec![0.0; d];
        for ch in &sys.collapse {
            let gamma = angular(ch.rate);
            let mut map = Vec::new();
            for i in 0..d {
                let n = occ_u[ch.subsystem][i];
                if n > 0 {
                    map.push((i, i - strides[ch.subsystem], (n as f64).sqrt()));
                    decay[i] += gamma * n as f64;
                }
            }
            if gamma > 0.0 {
                jumps.push((map, gamma));
            }
        }
        SparseOps { dim: d, occ, kerr, offdiag, jumps, decay }
    }

    fn diagonal(&self, freqs: &[f64], frame: f64) -> Vec<f64> {
        let mut diag = self.kerr.clone();
        for (s, f) in freqs.iter().enumerate() {
            let w = angular(f - frame);
            if w != 0.0 {
                for (dv, n) in diag.iter_mut().zip(&self.occ[s]) {
                    *dv += w * n;
                }
            }
        }
        diag
    }

    /// Gershgorin-style bound on the spectral radius of the generator for
    /// the given Hamiltonian diagonal.
    fn spectral_bound(&self, diag: &[f64]) -> f64 {
        let (lo, hi) = diag.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let mut row = vec![0.0f64; self.dim];
        for &(i, _, v) in &self.offdiag {
            row[i] += v.abs();
        }
        let exchange = row.iter().fold(0.0f64, |a, &b| a.max(b));
        let decay = self.decay.iter().fold(0.0f64, |a, &b| a.max(b));
        (hi - lo) + 2.0 * exchange + 2.0 * decay
    }

    /// dρ/dt for row-major ρ.
    fn apply(&self, diag: &[f64], rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        for i in 0..d {
            let row = i * d;
            for j in 0..d {
                let coeff = Complex64::new(-0.5 * (self.decay[i] + self.decay[j]), diag[j] - diag[i]);
                out[row + j] = coeff * rho[row + j];
            }
        }
        // -i H ρ + i ρ H over the exchange entries.
        for &(i, k, v) in &self.offdiag {
            let (ri, rk) = (i * d, k * d);
            for j in 0..d {
                let hr = rho[rk + j];
                out[ri + j] += Complex64::new(hr.im * v, -hr.re * v);
                let rh = rho[j * d + i];
                out[j * d + k] += Complex64::new(-rh.im * v, rh.re * v);
            }
        }
        for (map, gamma) in &self.jumps {
            for &(si, ti, ai) in map {
                for &(sj, tj, aj) in map {
                    out[ti * d + tj] += rho[si * d + sj] * (gamma * ai * aj);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Largest integrator step, s.
    pub h_max: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 50_000_000,
            h_max: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    /// `[subsystem][sample]` probability of leaving the ground level.
    pub populations: Vec<Vec<f64>>,
    /// `[subsystem][sample]` mean excitation number.
    pub occupations: Vec<Vec<f64>>,
    /// Ground-level probability of the subsystem labelled `qubit`
    /// (subsystem 0 when there is none).
    pub qubit_p0: Vec<f64>,
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub frame_frequency: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    #[serde(skip)]
    pub final_state: Option<ComplexMatrix>,
}

impl EvolutionResult {
    pub fn population(&self, label: &str) -> Option<&[f64]> {
        self.labels.iter().position(|l| l == label).map(|i| self.populations[i].as_slice())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for l in &self.labels {
            write!(w, ",p_{l}")?;
        }
        for l in &self.labels {
            write!(w, ",n_{l}")?;
        }
        writeln!(w, ",qubit_p0")?;
        for (k, t) in self.times.iter().enumerate() {
            write!(w, "{t:e}")?;
            for p in &self.populations {
                write!(w, ",{:e}", p[k])?;
            }
            for n in &self.occupations {
                write!(w, ",{:e}", n[k])?;
            }
            writeln!(w, ",{:e}", self.qubit_p0[k])?;
        }
        Ok(())
    }

    /// Scalar metadata (frame, diagnostics, step counts) as JSON.
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "labels": self.labels,
            "samples": self.times.len(),
            "t_start": self.times.first(),
            "t_end": self.times.last(),
            "frame_frequency_hz": self.frame_frequency,
            "trace_error": self.trace_error,
            "hermiticity_error": self.hermiticity_error,
            "accepted_steps": self.accepted_steps,
            "rejected_steps": self.rejected_steps,
        })
    }
}

/// Density matrix of a product of subsystem levels.
pub fn basis_state(sys: &QuantumSystem, levels: &[usize]) -> ComplexMatrix {
    let d = sys.dim();
    let i = sys.basis_index(levels);
    let mut rho = ComplexMatrix::zeros(d, d);
    rho[(i, i)] = Complex64::new(1.0, 0.0);
    rho
}

/// Projector onto a normalized pure state.
pub fn pure_state(psi: &[Complex64]) -> ComplexMatrix {
    let n: f64 = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let v = nalgebra::DVector::from_iterator(psi.len(), psi.iter().map(|a| a / n));
    &v * v.adjoint()
}

/// Accepts states carried over from a previous run: trace and positivity
/// are checked to 1e-6, Hermiticity to 1e-9.
pub fn validate_density_matrix(rho: &ComplexMatrix, dim: usize) -> Result<(), DynamicsError> {
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(DynamicsError::InvalidState(format!(
            "expected {dim}×{dim}, got {}×{}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DynamicsError::InvalidState("non-finite entries".into()));
    }
    let herm = hermiticity_error(rho);
    if herm > 1e-9 {
        return Err(DynamicsError::InvalidState(format!("not Hermitian ({herm:.2e})")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-6 || tr.im.abs() > 1e-6 {
        return Err(DynamicsError::InvalidState(format!("trace {tr} differs from 1")));
    }
    let sym = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-6 {
        return Err(DynamicsError::InvalidState(format!("negative eigenvalue {min:.3e}")));
    }
    Ok(())
}

pub fn hermiticity_error(rho: &ComplexMatrix) -> f64 {
    let d = rho.nrows();
    let mut e: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            e = e.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
        }
    }
    e
}

fn to_row_major(rho: &ComplexMatrix) -> Vec<Complex64> {
    let d = rho.nrows();
    let mut v = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            v.push(rho[(i, j)]);
        }
    }
    v
}

fn from_row_major(v: &[Complex64], d: usize) -> ComplexMatrix {
    ComplexMatrix::from_row_slice(d, d, v)
}

/// Lindblad right-hand side for row-major `rho` at time `t`.
pub struct LindbladRhs<'a> {
    sys: &'a QuantumSystem,
    controls: &'a Controls,
    ops: SparseOps,
    frame: f64,
}

impl<'a> LindbladRhs<'a> {
    pub fn new(sys: &'a QuantumSystem, controls: &'a Controls, frame: f64) -> Result<Self, DynamicsError> {
        sys.validate()?;
        sys.frequencies_at(controls, 0.0)?;
        Ok(LindbladRhs { sys, controls, ops: SparseOps::new(sys), frame })
    }

    pub fn eval(&self, t: f64, rho: &[Complex64], out: &mut [Complex64]) {
        let freqs = self
            .sys
            .frequencies_at(self.controls, t)
            .expect("controls checked at construction");
        let diag = self.ops.diagonal(&freqs, self.frame);
        self.ops.apply(&diag, rho, out);
    }

    /// Evaluates on a dense matrix (testing convenience).
    pub fn eval_matrix(&self, t: f64, rho: &ComplexMatrix) -> ComplexMatrix {
        let d = rho.nrows();
        let v = to_row_major(rho);
        let mut out = vec![ZERO; d * d];
        self.eval(t, &v, &mut out);
        from_row_major(&out, d)
    }
}

fn control_knots(sys: &QuantumSystem, controls: &Controls, t0: f64, t1: f64) -> Vec<f64> {
    let mut knots = Vec::new();
    for s in &sys.subsystems {
        let ch = match &s.frequency {
            FrequencySource::Fixed(_) => continue,
            FrequencySource::Control(ch) => ch,
            FrequencySource::Flux { channel, .. } => channel,
        };
        if let Some(w) = controls.get(ch) {
            if w.values.windows(2).all(|p| p[0] == p[1]) {
                continue;
            }
            for i in 0..w.len() {
                let t = w.time(i);
                if t > t0 && t < t1 {
                    knots.push(t);
                }
            }
        }
    }
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    knots
}

/// Fraction of the imaginary-axis stability limit (≈3.3) of the
/// Dormand–Prince pair used for the step cap.
const STABLE_STEP_RADIUS: f64 = 2.8;

/// Integrates the master equation from `t_grid[0]`, sampling observables at
/// every entry of `t_grid` (sorted ascending).
pub fn evolve(
    sys: &QuantumSystem,
    controls: &Controls,
    rho0: &ComplexMatrix,
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionResult, DynamicsError> {
    sys.validate()?;
    let d = sys.dim();
    validate_density_matrix(rho0, d)?;
    if t_grid.is_empty() {
        return Err(DynamicsError::InvalidSystem("empty time grid".into()));
    }
    if t_grid.windows(2).any(|p| p[1] < p[0]) {
        return Err(DynamicsError::InvalidSystem("time grid must be ascending".into()));
    }
    let t0 = t_grid[0];
    let frame = sys.resolve_frame(controls, t0)?;
    let rhs = LindbladRhs::new(sys, controls, frame)?;
    let t_end = *t_grid.last().unwrap();
    let knots = control_knots(sys, controls, t0, t_end);
    // Cap the step inside the explicit method's stability region. Modes that
    // carry no amplitude never show up in the error estimate and would
    // otherwise grow out of roundoff.
    let mut bound: f64 = 0.0;
    for &t in knots.iter().chain([t0, t_end].iter()) {
        let freqs = sys.frequencies_at(controls, t)?;
        bound = bound.max(rhs.ops.spectral_bound(&rhs.ops.diagonal(&freqs, frame)));
    }
    let h_stable = if bound > 0.0 { STABLE_STEP_RADIUS / bound } else { f64::INFINITY };
    let tol = Tolerances {
        rtol: opts.rtol,
        atol: opts.atol,
        max_steps: opts.max_steps,
        h_max: opts.h_max.min(h_stable),
        ..Tolerances::default()
    };
    let occ = sys.occupations();
    let ns = sys.subsystems.len();
    let qubit = sys.index_of("qubit").unwrap_or(0);
    let mut populations = vec![Vec::with_capacity(t_grid.len()); ns];
    let mut occupations = vec![Vec::with_capacity(t_grid.len()); ns];
    let mut qubit_p0 = Vec::with_capacity(t_grid.len());
    let mut trace_error: f64 = 0.0;
    let mut herm_error: f64 = 0.0;
    let mut y = to_row_major(rho0);
    let mut solver = Dopri5::new(d * d, tol, |t, rho, out| rhs.eval(t, rho, out));
    solver
        .integrate(t0, &mut y, t_grid, &knots, |_, _, rho| {
            let mut tr = ZERO;
            let mut pe = vec![0.0; ns];
            let mut nn = vec![0.0; ns];
            let mut q0 = 0.0;
            for i in 0..d {
                let p = rho[i * d + i];
                tr += p;
                for s in 0..ns {
                    let n = occ[s][i];
                    if n > 0 {
                        pe[s] += p.re;
                        nn[s] += p.re * n as f64;
                    } else if s == qubit {
                        q0 += p.re;
                    }
                }
                for j in i + 1..d {
                    herm_error = herm_error.max((rho[i * d + j] - rho[j * d + i].conj()).norm());
                }
            }
            trace_error = trace_error.max((tr - Complex64::new(1.0, 0.0)).norm());
            for s in 0..ns {
                populations[s].push(pe[s]);
                occupations[s].push(nn[s]);
            }
            qubit_p0.push(q0);
        })
        .map_err(|f| match f {
            StepFailure::Underflow { time } => DynamicsError::Integration { time, reason: "step size underflow".into() },
            StepFailure::TooManySteps { time } => DynamicsError::Integration { time, reason: "step budget exhausted".into() },
            StepFailure::NonFinite { time } => DynamicsError::Integration { time, reason: "non-finite state".into() },
        })?;
    let stats = solver.stats;
    drop(solver);
    Ok(EvolutionResult {
        labels: sys.subsystems.iter().map(|s| s.label.clone()).collect(),
        times: t_grid.to_vec(),
        populations,
        occupations,
        qubit_p0,
        trace_error,
        hermiticity_error: herm_error,
        frame_frequency: frame,
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
        final_state: Some(from_row_major(&y, d)),
    })
}

/// Evenly spaced grid of `n` points over `[t0, t1]`.
pub fn linear_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![t0];
    }
    let dt = (t1 - t0) / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { t1 } else { t0 + dt * i as f64 }).collect()
}

/// ρ → UρU†.
pub fn apply_unitary(rho: &ComplexMatrix, u: &ComplexMatrix) -> ComplexMatrix {
    u * rho * u.adjoint()
}

/// Rotation by `angle` about x in the {|lower⟩, |lower+1⟩} subspace of a
/// `levels`-level system.
pub fn transition_rotation(levels: usize, lower: usize, angle: f64) -> ComplexMatrix {
    let mut u = ComplexMatrix::identity(levels, levels);
    if lower + 1 < levels {
        let (s, c) = (angle / 2.0).sin_cos();
        u[(lower, lower)] = Complex64::new(c, 0.0);
        u[(lower + 1, lower + 1)] = Complex64::new(c, 0.0);
        u[(lower, lower + 1)] = Complex64::new(0.0, -s);
        u[(lower + 1, lower)] = Complex64::new(0.0, -s);
    }
    u
}

#[cfg(test)]
mod tests;
