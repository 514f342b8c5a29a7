//! Dispersive readout figures of merit: SNR, Gaussian discrimination of IQ
//! clouds, threshold placement under relaxation, and error budgets.

use crate::circuit_model::golden_section_max;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReadoutError {
    #[error("invalid IQ cloud: {0}")]
    InvalidCloud(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("threshold optimum sits on the search bracket edge")]
    BracketExhausted,
}

/// Diagonal-covariance Gaussian blob of single-shot IQ points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqCloud {
    pub mean: [f64; 2],
    pub sigma: [f64; 2],
    pub weight: f64,
}

impl IqCloud {
    pub fn new(mean: [f64; 2], sigma: [f64; 2]) -> Result<Self, ReadoutError> {
        let c = IqCloud { mean, sigma, weight: 1.0 };
        c.validate()?;
        Ok(c)
    }

    pub fn isotropic(i: f64, q: f64, sigma: f64) -> Result<Self, ReadoutError> {
        Self::new([i, q], [sigma, sigma])
    }

    pub fn validate(&self) -> Result<(), ReadoutError> {
        if !self.mean.iter().all(|m| m.is_finite()) {
            return Err(ReadoutError::InvalidCloud("non-finite mean".into()));
        }
        if !self.sigma.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(ReadoutError::InvalidCloud(format!("sigmas must be positive, got {:?}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(ReadoutError::InvalidCloud(format!("weight {} outside [0, 1]", self.weight)));
        }
        Ok(())
    }

    /// Mean and standard deviation of the projection onto unit vector `n`.
    fn project(&self, n: [f64; 2]) -> (f64, f64) {
        let mu = n[0] * self.mean[0] + n[1] * self.mean[1];
        let var = (n[0] * self.sigma[0]).powi(2) + (n[1] * self.sigma[1]).powi(2);
        (mu, var.sqrt())
    }
}

/// Unit vector from `c0` to `c1`, or `None` for coincident means.
fn axis(c0: &IqCloud, c1: &IqCloud) -> Option<[f64; 2]> {
    let d = [c1.mean[0] - c0.mean[0], c1.mean[1] - c0.mean[1]];
    let len = d[0].hypot(d[1]);
    (len > 0.0).then(|| [d[0] / len, d[1] / len])
}

/// 2|m0 − m1| / (σ0 + σ1), with σ taken along the inter-mean axis.
pub fn snr(c0: &IqCloud, c1: &IqCloud) -> Result<f64, ReadoutError> {
    c0.validate()?;
    c1.validate()?;
    let Some(n) = axis(c0, c1) else {
        return Ok(0.0);
    };
    let (m0, s0) = c0.project(n);
    let (m1, s1) = c1.project(n);
    Ok(2.0 * (m1 - m0).abs() / (s0 + s1))
}

/// |sin 2θ| = χκ / (χ² + κ²/4).
pub fn sin_2theta(chi: f64, kappa: f64) -> f64 {
    let den = chi * chi + kappa * kappa / 4.0;
    if den == 0.0 {
        0.0
    } else {
        (chi * kappa / den).abs()
    }
}

/// Relative SNR √(η κ n̄ t)·|sin 2θ|.
pub fn snr_scaling(kappa: f64, chi: f64, n_bar: f64, eta: f64, t: f64) -> f64 {
    (eta * kappa * n_bar * t).max(0.0).sqrt() * sin_2theta(chi, kappa)
}

/// Measurement-induced dephasing per photon, 2χ·|sin 2θ| (Hz).
pub fn measurement_dephasing_per_photon(two_chi: f64, kappa: f64) -> f64 {
    two_chi * sin_2theta(two_chi / 2.0, kappa)
}

/// Probability of decay during a measurement of length `tau_m`.
pub fn relaxation_error(tau_m: f64, t1: f64) -> Result<f64, ReadoutError> {
    if !(t1 > 0.0) || tau_m < 0.0 {
        return Err(ReadoutError::InvalidInput(format!("tau_m = {tau_m}, T1 = {t1}")));
    }
    Ok(-(-tau_m / t1).exp_m1())
}

/// Straight discrimination line: a shot `x` is assigned |1⟩ when
/// `normal · x > offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl Threshold {
    /// Line perpendicular to the inter-mean axis at fraction `position` of the
    /// way from `c0` to `c1` (0.5 is the perpendicular bisector).
    pub fn perpendicular(c0: &IqCloud, c1: &IqCloud, position: f64) -> Result<Self, ReadoutError> {
        let n = axis(c0, c1).ok_or_else(|| ReadoutError::InvalidInput("clouds share a mean".into()))?;
        let (m0, _) = c0.project(n);
        let (m1, _) = c1.project(n);
        Ok(Threshold { normal: n, offset: m0 + position * (m1 - m0) })
    }

    /// Position of this line along the inter-mean axis as a fraction of the
    /// distance from `c0` to `c1`.
    pub fn fraction(&self, c0: &IqCloud, c1: &IqCloud) -> f64 {
        let (m0, _) = c0.project(self.normal);
        let (m1, _) = c1.project(self.normal);
        (self.offset - m0) / (m1 - m0)
    }

    fn prob_one(&self, c: &IqCloud) -> f64 {
        let (mu, s) = c.project(self.normal);
        if self.offset == f64::INFINITY {
            return 0.0;
        }
        if self.offset == f64::NEG_INFINITY {
            return 1.0;
        }
        0.5 * libm::erfc((self.offset - mu) / (s * std::f64::consts::SQRT_2))
    }
}

/// Per-state misclassification `(P(1|0), P(0|1))` from the Gaussian tails.
pub fn separation_error(c0: &IqCloud, c1: &IqCloud, threshold: &Threshold) -> Result<(f64, f64), ReadoutError> {
    c0.validate()?;
    c1.validate()?;
    Ok((threshold.prob_one(c0), 1.0 - threshold.prob_one(c1)))
}

/// Relaxation-distorted |1⟩ distribution: with probability `eps_t1` a shot
/// lands in a copy of the |1⟩ cloud displaced `decay_position` of the way
/// toward the |0⟩ mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationModel {
    pub eps_t1: f64,
    pub decay_position: f64,
}

impl RelaxationModel {
    pub fn new(eps_t1: f64) -> Self {
        RelaxationModel { eps_t1, decay_position: 0.5 }
    }

    pub fn none() -> Self {
        Self::new(0.0)
    }

    fn decayed_cloud(&self, c0: &IqCloud, c1: &IqCloud) -> IqCloud {
        let p = self.decay_position;
        IqCloud {
            mean: [
                c1.mean[0] + p * (c0.mean[0] - c1.mean[0]),
                c1.mean[1] + p * (c0.mean[1] - c1.mean[1]),
            ],
            ..*c1
        }
    }

    /// P(assigned 1 | prepared 1) under the mixture.
    fn state1_fidelity(&self, c0: &IqCloud, c1: &IqCloud, th: &Threshold) -> f64 {
        let decayed = self.decayed_cloud(c0, c1);
        (1.0 - self.eps_t1) * th.prob_one(c1) + self.eps_t1 * th.prob_one(&decayed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: Threshold,
    pub fidelity: f64,
    pub state0_fidelity: f64,
    pub state1_fidelity: f64,
}

/// Places the threshold along the inter-mean axis to maximise the average
/// assignment fidelity under `model`.
pub fn optimize_threshold(c0: &IqCloud, c1: &IqCloud, model: &RelaxationModel) -> Result<ThresholdChoice, ReadoutError> {
    c0.validate()?;
    c1.validate()?;
    if !(0.0..=1.0).contains(&model.eps_t1) {
        return Err(ReadoutError::InvalidInput(format!("eps_t1 = {}", model.eps_t1)));
    }
    let n = axis(c0, c1).ok_or_else(|| ReadoutError::InvalidInput("clouds share a mean".into()))?;
    let (m0, s0) = c0.project(n);
    let (m1, s1) = c1.project(n);
    let fid = |offset: f64| {
        let th = Threshold { normal: n, offset };
        0.5 * ((1.0 - th.prob_one(c0)) + model.state1_fidelity(c0, c1, &th))
    };
    let lo = m0 - 8.0 * s0;
    let hi = m1 + 8.0 * s1;
    let grid = 2001;
    let step = (hi - lo) / (grid - 1) as f64;
    let (best, _) = (0..grid)
        .map(|i| lo + step * i as f64)
        .map(|x| (x, fid(x)))
        .fold((lo, f64::NEG_INFINITY), |acc, (x, f)| if f > acc.1 { (x, f) } else { acc });
    if best <= lo || best >= hi {
        return Err(ReadoutError::BracketExhausted);
    }
    let offset = golden_section_max(&fid, (best - step).max(lo), (best + step).min(hi), 1e-12 * (hi - lo));
    let threshold = Threshold { normal: n, offset };
    let state0_fidelity = 1.0 - threshold.prob_one(c0);
    let state1_fidelity = model.state1_fidelity(c0, c1, &threshold);
    Ok(ThresholdChoice {
        threshold,
        fidelity: 0.5 * (state0_fidelity + state1_fidelity),
        state0_fidelity,
        state1_fidelity,
    })
}

/// Which pair of levels is being discriminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadoutMode {
    ZeroOne,
    /// |0⟩ versus |2⟩: relaxation goes through |1⟩, so the |1⟩ relaxation
    /// error only bounds it from above.
    ZeroTwo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub mode: ReadoutMode,
    pub readout_fidelity: f64,
    pub state0_fidelity: f64,
    pub state1_fidelity: f64,
    pub separation_error: f64,
    /// Whatever infidelity the overlap does not explain.
    pub state_error: f64,
    pub relaxation_bound: f64,
}

impl ErrorBudget {
    pub fn from_state_fidelities(
        state0_fidelity: f64,
        state1_fidelity: f64,
        separation_error: f64,
        relaxation_bound: f64,
        mode: ReadoutMode,
    ) -> Self {
        let readout_fidelity = (state0_fidelity + state1_fidelity) / 2.0;
        ErrorBudget {
            mode,
            readout_fidelity,
            state0_fidelity,
            state1_fidelity,
            separation_error,
            state_error: (1.0 - readout_fidelity - separation_error).max(0.0),
            relaxation_bound,
        }
    }

    pub fn relaxation_is_upper_bound(&self) -> bool {
        self.mode == ReadoutMode::ZeroTwo
    }
}

/// Composes overlap, preparation and relaxation into assignment fidelities.
/// `prep_error` is the probability that the intended state was not
/// prepared; such shots are taken to sit in the other cloud.
pub fn error_budget(
    c0: &IqCloud,
    c1: &IqCloud,
    threshold: &Threshold,
    tau_m: f64,
    t1: f64,
    prep_error: f64,
    mode: ReadoutMode,
) -> Result<ErrorBudget, ReadoutError> {
    if !(0.0..=1.0).contains(&prep_error) {
        return Err(ReadoutError::InvalidInput(format!("prep_error = {prep_error}")));
    }
    let (eps0, eps1) = separation_error(c0, c1, threshold)?;
    let eps_t1 = relaxation_error(tau_m, t1)?;
    let p00 = (1.0 - prep_error) * (1.0 - eps0) + prep_error * eps1;
    let survive = (1.0 - prep_error) * (1.0 - eps_t1);
    let p11 = survive * (1.0 - eps1) + (1.0 - survive) * eps0;
    Ok(ErrorBudget::from_state_fidelities(p00, p11, (eps0 + eps1) / 2.0, eps_t1, mode))
}

fn pct(x: f64) -> String {
    format!("{:.3}%", 100.0 * x)
}

/// Aligned plain-text table with one column per labelled budget.
pub fn render_table(columns: &[(&str, &ErrorBudget)]) -> String {
    let rows: [(&str, Box<dyn Fn(&ErrorBudget) -> String>); 6] = [
        ("readout fidelity", Box::new(|b| pct(b.readout_fidelity))),
        ("state |0> fidelity", Box::new(|b| pct(b.state0_fidelity))),
        ("state |1> fidelity", Box::new(|b| pct(b.state1_fidelity))),
        ("separation error", Box::new(|b| pct(b.separation_error))),
        ("state error", Box::new(|b| pct(b.state_error))),
        (
            "energy relaxation",
            Box::new(|b| {
                let prefix = if b.relaxation_is_upper_bound() { "<=" } else { "" };
                format!("{prefix}{}", pct(b.relaxation_bound))
            }),
        ),
    ];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, f)| columns.iter().map(|(_, b)| f(b)).collect())
        .collect();
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(j, (h, _))| cells.iter().map(|r| r[j].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:label_w$}", "");
    for (j, (h, _)) in columns.iter().enumerate() {
        let _ = write!(out, "  {:>w$}", h, w = col_w[j]);
    }
    out.push('\n');
    for (r, (label, _)) in rows.iter().enumerate() {
        let _ = write!(out, "{label:label_w$}");
        for (j, cell) in cells[r].iter().enumerate() {
            let _ = write!(out, "  {:>w$}", cell, w = col_w[j]);
        }
        out.push('\n');
    }
    out
}
