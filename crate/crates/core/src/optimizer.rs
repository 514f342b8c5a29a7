//! Black-box maximization over box-bounded parameter spaces: Cartesian grid
//! scans, alternating two-axis scans, and a tree-structured Parzen
//! estimator (TPE) sampler, plus synthetic benchmark surfaces.
//!
//! Objectives return `Err` on failure. Failed points score −∞ and keep the
//! message in the trial metadata.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("state file: {0}")]
    State(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl Axis {
    pub fn linear(name: &str, lower: f64, upper: f64) -> Self {
        Axis { name: name.into(), lower, upper, scale: Scale::Linear }
    }

    pub fn log(name: &str, lower: f64, upper: f64) -> Self {
        Axis { name: name.into(), lower, upper, scale: Scale::Log }
    }

    fn internal_bounds(&self) -> (f64, f64) {
        (self.to_internal(self.lower), self.to_internal(self.upper))
    }

    fn to_internal(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Linear => x,
            Scale::Log => x.ln(),
        }
    }

    fn from_internal(&self, u: f64) -> f64 {
        let x = match self.scale {
            Scale::Linear => u,
            Scale::Log => u.exp(),
        };
        x.clamp(self.lower, self.upper)
    }

    /// `n` evenly spaced points (in the axis scale), endpoints exact.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = self.internal_bounds();
        (0..n)
            .map(|k| match k {
                0 => self.lower,
                _ if k == n - 1 => self.upper,
                _ => self.from_internal(lo + (hi - lo) * k as f64 / (n - 1) as f64),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub axes: Vec<Axis>,
    pub seed: u64,
}

impl ParameterSpace {
    pub fn new(axes: Vec<Axis>, seed: u64) -> Result<Self, OptimizerError> {
        let s = ParameterSpace { axes, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ParameterSpace { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.axes.is_empty() {
            return Err(OptimizerError::InvalidSpace("no axes".into()));
        }
        for a in &self.axes {
            if !(a.lower.is_finite() && a.upper.is_finite() && a.lower < a.upper) {
                return Err(OptimizerError::InvalidSpace(format!("axis `{}` needs finite lower < upper", a.name)));
            }
            if a.scale == Scale::Log && a.lower <= 0.0 {
                return Err(OptimizerError::InvalidSpace(format!("log axis `{}` must be positive", a.name)));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims() && x.iter().zip(&self.axes).all(|(v, a)| *v >= a.lower && *v <= a.upper)
    }

    /// Midpoint of every axis in its own scale.
    pub fn center(&self) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| {
                let (lo, hi) = a.internal_bounds();
                a.from_internal(0.5 * (lo + hi))
            })
            .collect()
    }

    fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| {
                let (lo, hi) = a.internal_bounds();
                a.from_internal(rng.random_range(lo..=hi))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub point: Vec<f64>,
    /// −∞ for failed evaluations.
    #[serde(with = "objective_repr")]
    pub objective: f64,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Trial {
    pub fn failed(&self) -> bool {
        self.metadata.contains_key("error")
    }
}

/// JSON has no infinities; failed objectives are stored as null.
mod objective_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Wraps an objective that cannot fail.
pub fn infallible<F: Fn(&[f64]) -> f64 + Sync>(f: F) -> impl Fn(&[f64]) -> Result<f64, String> + Sync {
    move |x| Ok(f(x))
}

fn evaluate<F>(objective: &F, index: usize, point: Vec<f64>, phase: &str) -> Trial
where
    F: Fn(&[f64]) -> Result<f64, String> + Sync,
{
    let mut metadata = BTreeMap::new();
    metadata.insert("phase".to_string(), phase.to_string());
    let value = match objective(&point) {
        Ok(v) if v.is_finite() => v,
        Ok(v) => {
            metadata.insert("error".into(), format!("non-finite objective {v}"));
            f64::NEG_INFINITY
        }
        Err(e) => {
            metadata.insert("error".into(), e);
            f64::NEG_INFINITY
        }
    };
    Trial { index, point, objective: value, metadata }
}

/// Index of the best trial; the earliest wins ties.
fn best_index(trials: &[Trial]) -> Option<usize> {
    trials
        .iter()
        .enumerate()
        .fold(None, |acc: Option<usize>, (i, t)| match acc {
            Some(j) if trials[j].objective >= t.objective => Some(j),
            _ => Some(i),
        })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanResult {
    /// Cartesian order, last axis fastest.
    pub trials: Vec<Trial>,
    pub shape: Vec<usize>,
    pub best: usize,
    pub failures: usize,
}

impl ScanResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }
}

/// Evaluates every point of the Cartesian grid with `resolution[i]` points
/// on axis `i`. Evaluations run in parallel; results keep grid order.
pub fn grid_scan<F>(objective: &F, space: &ParameterSpace, resolution: &[usize]) -> Result<ScanResult, OptimizerError>
where
    F: Fn(&[f64]) -> Result<f64, String> + Sync,
{
    space.validate()?;
    if resolution.len() != space.dims() || resolution.iter().any(|&r| r < 2) {
        return Err(OptimizerError::InvalidSetting("need at least 2 grid points per axis".into()));
    }
    let grids: Vec<Vec<f64>> = space.axes.iter().zip(resolution).map(|(a, &r)| a.grid(r)).collect();
    let total: usize = resolution.iter().product();
    let trials: Vec<Trial> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut point = vec![0.0; grids.len()];
            for ax in (0..grids.len()).rev() {
                point[ax] = grids[ax][rem % resolution[ax]];
                rem /= resolution[ax];
            }
            evaluate(objective, flat, point, "grid")
        })
        .collect();
    let failures = trials.iter().filter(|t| t.failed()).count();
    let best = best_index(&trials).expect("grid is not empty");
    Ok(ScanResult { trials, shape: resolution.to_vec(), best, failures })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlternatingResult {
    pub best: Trial,
    /// Best objective after each round.
    pub round_best: Vec<f64>,
    pub evaluations: usize,
    pub history: Vec<Trial>,
}

/// Repeated two-axis grid scans over the pairs in `schedule`, holding the
/// other axes at the incumbent. A scan replaces the incumbent only when it
/// finds a strictly better point.
pub fn alternating_scan<F>(
    objective: &F,
    space: &ParameterSpace,
    schedule: &[(usize, usize)],
    resolution: usize,
    rounds: usize,
    start: Option<&[f64]>,
) -> Result<AlternatingResult, OptimizerError>
where
    F: Fn(&[f64]) -> Result<f64, String> + Sync,
{
    space.validate()?;
    let d = space.dims();
    if resolution < 2 || rounds == 0 {
        return Err(OptimizerError::InvalidSetting("need resolution ≥ 2 and at least one round".into()));
    }
    if schedule.iter().any(|&(a, b)| a == b || a >= d || b >= d) {
        return Err(OptimizerError::InvalidSetting("schedule pairs must name two distinct axes".into()));
    }
    if (0..d).any(|ax| !schedule.iter().any(|&(a, b)| a == ax || b == ax)) {
        return Err(OptimizerError::InvalidSetting("schedule does not cover every axis".into()));
    }
    let start = match start {
        Some(s) if space.contains(s) => s.to_vec(),
        Some(_) => return Err(OptimizerError::InvalidSetting("start point outside the space".into())),
        None => space.center(),
    };
    let mut history = vec![evaluate(objective, 0, start, "start")];
    let mut best = history[0].clone();
    let mut round_best = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        for &(a, b) in schedule {
            let (ga, gb) = (space.axes[a].grid(resolution), space.axes[b].grid(resolution));
            let base = best.point.clone();
            let offset = history.len();
            let batch: Vec<Trial> = (0..resolution * resolution)
                .into_par_iter()
                .map(|k| {
                    let mut p = base.clone();
                    p[a] = ga[k / resolution];
                    p[b] = gb[k % resolution];
                    evaluate(objective, offset + k, p, "alternating")
                })
                .collect();
            if let Some(i) = best_index(&batch) {
                if batch[i].objective > best.objective {
                    best = batch[i].clone();
                }
            }
            history.extend(batch);
        }
        round_best.push(best.objective);
    }
    Ok(AlternatingResult { best, round_best, evaluations: history.len(), history })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub n_trials: usize,
    /// Fraction of the history treated as good.
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
}

impl TpeConfig {
    pub fn new(n_trials: usize) -> Self {
        TpeConfig { n_trials, gamma: 0.25, n_startup: 10, n_candidates: 24 }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.n_trials < 10 {
            return Err(OptimizerError::InvalidSetting("need at least 10 trials".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(OptimizerError::InvalidSetting("gamma must lie in (0, 1)".into()));
        }
        if self.n_candidates == 0 {
            return Err(OptimizerError::InvalidSetting("need at least one candidate".into()));
        }
        Ok(())
    }
}

/// Everything needed to continue a TPE run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeState {
    pub space: ParameterSpace,
    pub config: TpeConfig,
    pub history: Vec<Trial>,
}

impl TpeState {
    pub fn new(space: ParameterSpace, config: TpeConfig) -> Result<Self, OptimizerError> {
        space.validate()?;
        config.validate()?;
        Ok(TpeState { space, config, history: Vec::new() })
    }

    pub fn best(&self) -> Option<&Trial> {
        best_index(&self.history).map(|i| &self.history[i])
    }

    pub fn is_done(&self) -> bool {
        self.history.len() >= self.config.n_trials
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), OptimizerError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OptimizerError> {
        let s: TpeState = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        s.space.validate()?;
        s.config.validate()?;
        Ok(s)
    }

    /// Proposes and evaluates the next trial.
    pub fn step<F>(&mut self, objective: &F)
    where
        F: Fn(&[f64]) -> Result<f64, String> + Sync,
    {
        let index = self.history.len();
        let mut rng = trial_rng(self.space.seed, index);
        let (point, phase) = if index < self.config.n_startup {
            (self.space.sample_uniform(&mut rng), "startup")
        } else {
            (self.propose(&mut rng), "model")
        };
        self.history.push(evaluate(objective, index, point, phase));
    }

    fn propose(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.history.len();
        let mut order: Vec<usize> = (0..n).collect();
        // Stable sort: ties keep submission order.
        order.sort_by(|&a, &b| self.history[b].objective.partial_cmp(&self.history[a].objective).unwrap());
        let n_good = ((self.config.gamma * n as f64).ceil() as usize).clamp(1, n - 1);
        let models: Vec<(Parzen, Parzen)> = self
            .space
            .axes
            .iter()
            .enumerate()
            .map(|(ax, axis)| {
                let values = |ids: &[usize]| -> Vec<f64> {
                    ids.iter().map(|&i| axis.to_internal(self.history[i].point[ax])).collect()
                };
                let (lo, hi) = axis.internal_bounds();
                (Parzen::fit(&values(&order[..n_good]), lo, hi), Parzen::fit(&values(&order[n_good..]), lo, hi))
            })
            .collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..self.config.n_candidates {
            let u: Vec<f64> = models.iter().map(|(good, _)| good.sample(rng)).collect();
            let score: f64 = models
                .iter()
                .zip(&u)
                .map(|((good, bad), &x)| good.density(x).ln() - bad.density(x).ln())
                .sum();
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, u));
            }
        }
        let (_, u) = best.expect("at least one candidate");
        self.space.axes.iter().zip(u).map(|(a, v)| a.from_internal(v)).collect()
    }
}

/// Independent stream per trial index so a resumed run draws the same
/// numbers as an uninterrupted one.
fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One-dimensional Parzen estimator on [lo, hi]: Gaussians truncated to the
/// interval plus a uniform prior component.
#[derive(Debug, Clone)]
struct Parzen {
    centers: Vec<f64>,
    sigma: f64,
    lo: f64,
    hi: f64,
    prior_weight: f64,
}

impl Parzen {
    fn fit(obs: &[f64], lo: f64, hi: f64) -> Self {
        let n = obs.len();
        let width = hi - lo;
        let sigma = if n >= 2 {
            let mean = obs.iter().sum::<f64>() / n as f64;
            let var = obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.06 * var.sqrt() * (n as f64).powf(-0.2)
        } else {
            0.25 * width
        };
        Parzen {
            centers: obs.to_vec(),
            // Floor shrinks with the sample count so early models stay broad.
            sigma: sigma.clamp(width / (n as f64 + 1.0).min(100.0), width),
            lo,
            hi,
            prior_weight: 1.0 / (n as f64 + 1.0),
        }
    }

    fn mass(&self, mu: f64) -> f64 {
        let z = |x: f64| (x - mu) / (self.sigma * std::f64::consts::SQRT_2);
        0.5 * (libm::erf(z(self.hi)) - libm::erf(z(self.lo)))
    }

    fn density(&self, x: f64) -> f64 {
        let prior = self.prior_weight / (self.hi - self.lo);
        if self.centers.is_empty() {
            return 1.0 / (self.hi - self.lo);
        }
        let w = (1.0 - self.prior_weight) / self.centers.len() as f64;
        let norm = 1.0 / (self.sigma * (2.0 * std::f64::consts::PI).sqrt());
        let kde: f64 = self
            .centers
            .iter()
            .map(|&mu| {
                let z = (x - mu) / self.sigma;
                norm * (-0.5 * z * z).exp() / self.mass(mu)
            })
            .sum();
        prior + w * kde
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.centers.is_empty() || rng.random::<f64>() < self.prior_weight {
            return rng.random_range(self.lo..=self.hi);
        }
        let mu = self.centers[rng.random_range(0..self.centers.len())];
        for _ in 0..64 {
            let z: f64 = StandardNormal.sample(rng);
            let x = mu + self.sigma * z;
            if x >= self.lo && x <= self.hi {
                return x;
            }
        }
        mu.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best: Trial,
    pub history: Vec<Trial>,
}

/// Runs a TPE search from scratch with the space's seed.
pub fn tpe_optimize<F>(objective: &F, space: &ParameterSpace, config: TpeConfig) -> Result<OptimizationResult, OptimizerError>
where
    F: Fn(&[f64]) -> Result<f64, String> + Sync,
{
    tpe_resume(objective, TpeState::new(space.clone(), config)?)
}

/// Continues a TPE run until `config.n_trials` trials exist.
pub fn tpe_resume<F>(objective: &F, mut state: TpeState) -> Result<OptimizationResult, OptimizerError>
where
    F: Fn(&[f64]) -> Result<f64, String> + Sync,
{
    state.space.validate()?;
    state.config.validate()?;
    while !state.is_done() {
        state.step(objective);
    }
    let best = state.best().expect("history is not empty").clone();
    Ok(OptimizationResult { best, history: state.history })
}

/// Uniform random sampling with the same per-trial streams as the TPE
/// startup phase.
pub fn random_search<F>(objective: &F, space: &ParameterSpace, n_trials: usize) -> Result<OptimizationResult, OptimizerError>
where
    F: Fn(&[f64]) -> Result<f64, String> + Sync,
{
    space.validate()?;
    if n_trials == 0 {
        return Err(OptimizerError::InvalidSetting("need at least one trial".into()));
    }
    let history: Vec<Trial> = (0..n_trials)
        .map(|i| evaluate(objective, i, space.sample_uniform(&mut trial_rng(space.seed, i)), "random"))
        .collect();
    let best = history[best_index(&history).unwrap()].clone();
    Ok(OptimizationResult { best, history })
}

/// CSV with columns `index,objective,<axis names>,phase,error`.
pub fn write_history_csv<W: Write>(mut w: W, space: &ParameterSpace, history: &[Trial]) -> std::io::Result<()> {
    let names: Vec<&str> = space.axes.iter().map(|a| a.name.as_str()).collect();
    writeln!(w, "index,objective,{},phase,error", names.join(","))?;
    for t in history {
        let point: Vec<String> = t.point.iter().map(|v| format!("{v:e}")).collect();
        let error = t.metadata.get("error").map(|e| e.replace([',', '\n'], " ")).unwrap_or_default();
        let phase = t.metadata.get("phase").map(String::as_str).unwrap_or("");
        let obj = if t.objective.is_finite() { format!("{:e}", t.objective) } else { "-inf".into() };
        writeln!(w, "{},{},{},{},{}", t.index, obj, point.join(","), phase, error)?;
    }
    Ok(())
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `wins + losses` fair coin flips.
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let ln_choose = |k: usize| libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0);
    (wins..=n).map(|k| (ln_choose(k) - n as f64 * std::f64::consts::LN_2).exp()).sum::<f64>().min(1.0)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Synthetic objectives shaped like fidelity landscapes.
pub mod benchmarks {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
    #[serde(rename_all = "snake_case")]
    pub enum Benchmark {
        Quadratic,
        Bimodal,
        Correlated,
    }

    pub const ALL: [Benchmark; 3] = [Benchmark::Quadratic, Benchmark::Bimodal, Benchmark::Correlated];

    pub const QUADRATIC_PEAK: f64 = 1.3;
    /// Peak locations and heights of the two basins.
    pub const BIMODAL_PEAKS: [([f64; 2], f64); 2] = [([0.25, 0.3], 0.99), ([0.75, 0.7], 0.97)];
    pub const BIMODAL_WIDTH: f64 = 0.1;
    pub const CORRELATED_PEAK: [f64; 3] = [0.62, 0.41, 0.55];

    impl Benchmark {
        pub fn name(self) -> &'static str {
            match self {
                Benchmark::Quadratic => "quadratic",
                Benchmark::Bimodal => "bimodal",
                Benchmark::Correlated => "correlated",
            }
        }

        pub fn space(self, seed: u64) -> ParameterSpace {
            let axes = match self {
                Benchmark::Quadratic => vec![Axis::linear("x", -5.0, 5.0)],
                Benchmark::Bimodal => vec![Axis::linear("x", 0.0, 1.0), Axis::linear("y", 0.0, 1.0)],
                Benchmark::Correlated => {
                    vec![Axis::linear("x", 0.0, 1.0), Axis::linear("y", 0.0, 1.0), Axis::linear("z", 0.0, 1.0)]
                }
            };
            ParameterSpace { axes, seed }
        }

        pub fn optimum(self) -> f64 {
            match self {
                Benchmark::Quadratic => 1.0,
                Benchmark::Bimodal => BIMODAL_PEAKS[0].1,
                Benchmark::Correlated => 0.99,
            }
        }

        pub fn evaluate(self, x: &[f64]) -> f64 {
            match self {
                Benchmark::Quadratic => quadratic(x),
                Benchmark::Bimodal => bimodal(x),
                Benchmark::Correlated => correlated(x),
            }
        }
    }

    /// 1 − (x − x*)²/25.
    pub fn quadratic(x: &[f64]) -> f64 {
        1.0 - (x[0] - QUADRATIC_PEAK).powi(2) / 25.0
    }

    /// Two Gaussian basins of unequal height.
    pub fn bimodal(x: &[f64]) -> f64 {
        BIMODAL_PEAKS
            .iter()
            .map(|(c, h)| {
                let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                h * (-r2 / (2.0 * BIMODAL_WIDTH * BIMODAL_WIDTH)).exp()
            })
            .sum()
    }

    /// Which basin of [`bimodal`] a point belongs to.
    pub fn bimodal_basin(x: &[f64]) -> usize {
        let d = |c: [f64; 2]| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
        usize::from(d(BIMODAL_PEAKS[1].0) < d(BIMODAL_PEAKS[0].0))
    }

    /// Gaussian ridge with strongly coupled axes.
    pub fn correlated(x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(CORRELATED_PEAK).map(|(a, b)| a - b).collect();
        let a = [[8.0, 5.0, 2.0], [5.0, 8.0, 4.0], [2.0, 4.0, 6.0]];
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += d[i] * a[i][j] * d[j];
            }
        }
        0.99 * (-q).exp()
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct Comparison {
        pub benchmark: Benchmark,
        pub tpe_best: Vec<f64>,
        pub random_best: Vec<f64>,
        pub wins: usize,
        pub losses: usize,
        pub p_value: f64,
        pub median_tpe: f64,
        pub median_random: f64,
    }

    /// TPE against uniform random sampling over `seeds`, paired by seed.
    pub fn compare_with_random(bench: Benchmark, seeds: std::ops::Range<u64>, n_trials: usize) -> Result<Comparison, OptimizerError> {
        let f = infallible(move |x: &[f64]| bench.evaluate(x));
        let pairs: Vec<(f64, f64)> = seeds
            .into_par_iter()
            .map(|seed| {
                let space = bench.space(seed);
                let t = tpe_optimize(&f, &space, TpeConfig::new(n_trials))?;
                let r = random_search(&f, &space, n_trials)?;
                Ok((t.best.objective, r.best.objective))
            })
            .collect::<Result<_, OptimizerError>>()?;
        let wins = pairs.iter().filter(|(t, r)| t > r).count();
        let losses = pairs.iter().filter(|(t, r)| t < r).count();
        let tpe_best: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let random_best: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        Ok(Comparison {
            benchmark: bench,
            median_tpe: median(&tpe_best),
            median_random: median(&random_best),
            p_value: sign_test_p(wins, losses),
            tpe_best,
            random_best,
            wins,
            losses,
        })
    }

    /// Per seed, the best objective found inside each basin of [`bimodal`].
    pub fn bimodal_basin_bests(seeds: std::ops::Range<u64>, n_trials: usize) -> Result<Vec<[f64; 2]>, OptimizerError> {
        let f = infallible(bimodal);
        seeds
            .into_par_iter()
            .map(|seed| {
                let r = tpe_optimize(&f, &Benchmark::Bimodal.space(seed), TpeConfig::new(n_trials))?;
                let mut best = [f64::NEG_INFINITY; 2];
                for t in &r.history {
                    let b = bimodal_basin(&t.point);
                    best[b] = best[b].max(t.objective);
                }
                Ok(best)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::benchmarks::*;
    use super::*;
    use crate::circuit_model::{effective_linewidth, photon_noise_dephasing};
    use crate::units::MHZ;

    fn quad_space() -> ParameterSpace {
        Benchmark::Quadratic.space(7)
    }

    #[test]
    fn grid_finds_quadratic_peak_within_a_cell() {
        let r = grid_scan(&infallible(quadratic), &quad_space(), &[41]).unwrap();
        let cell = 10.0 / 40.0;
        assert!((r.best_trial().point[0] - QUADRATIC_PEAK).abs() <= cell);
        assert_eq!(r.trials.len(), 41);
        assert_eq!(r.trials[0].point[0], -5.0);
        assert_eq!(r.trials[40].point[0], 5.0);
    }

    #[test]
    fn grid_scan_is_repeatable_and_ordered() {
        let space = Benchmark::Bimodal.space(0);
        let f = infallible(bimodal);
        let a = grid_scan(&f, &space, &[5, 7]).unwrap();
        let b = grid_scan(&f, &space, &[5, 7]).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.trials[1].point, vec![0.0, 1.0 / 6.0]);
        assert_eq!(a.trials[7].point, vec![0.25, 0.0]);
    }

    #[test]
    fn grid_records_failures() {
        let f = |x: &[f64]| if x[0] > 0.0 { Err("out of model".to_string()) } else { Ok(-x[0].abs()) };
        let r = grid_scan(&f, &quad_space(), &[11]).unwrap();
        assert_eq!(r.failures, 5);
        assert_eq!(r.best_trial().point[0], 0.0);
        assert!(r.trials[10].objective == f64::NEG_INFINITY && r.trials[10].failed());
    }

    #[test]
    fn dephasing_surface_peaks_at_matched_linewidth() {
        // Γφ(Δ, n̄) peaks where κ_eff(Δ) = 2χ, at the largest n̄.
        let (g, kf, two_chi) = (20.0 * MHZ, 150.0 * MHZ, 1.4 * MHZ);
        let space = ParameterSpace::new(
            vec![Axis::linear("detuning", 0.0, 400.0 * MHZ), Axis::linear("n_noise", 0.01, 0.1)],
            0,
        )
        .unwrap();
        let f = infallible(|x: &[f64]| photon_noise_dephasing(effective_linewidth(g, x[0], kf), two_chi, x[1]));
        let r = grid_scan(&f, &space, &[401, 5]).unwrap();
        let best = r.best_trial();
        // κ_eff = 2χ solved in closed form.
        let k0 = 4.0 * g * g / kf;
        let root = 0.5 * kf * (k0 / two_chi - 1.0).sqrt();
        assert!((best.point[0] - root).abs() <= 1.0 * MHZ, "{} vs {root}", best.point[0]);
        assert_eq!(best.point[1], 0.1);
    }

    #[test]
    fn separable_objective_converges_in_one_round() {
        let space = Benchmark::Correlated.space(0);
        let f = infallible(|x: &[f64]| -((x[0] - 0.2).powi(2) + (x[1] - 0.6).powi(2) + (x[2] - 0.8).powi(2)));
        let r = alternating_scan(&f, &space, &[(0, 1), (1, 2)], 11, 1, None).unwrap();
        assert!(r.best.objective.abs() < 1e-12, "{:?}", r.best);
    }

    #[test]
    fn alternating_needs_full_schedule() {
        let space = Benchmark::Correlated.space(0);
        let f = infallible(correlated);
        assert!(alternating_scan(&f, &space, &[(0, 1)], 5, 1, None).is_err());
        assert!(alternating_scan(&f, &space, &[(0, 0), (1, 2)], 5, 1, None).is_err());
    }

    #[test]
    fn tpe_is_deterministic() {
        let f = infallible(bimodal);
        let space = Benchmark::Bimodal.space(42);
        let a = tpe_optimize(&f, &space, TpeConfig::new(40)).unwrap();
        let b = tpe_optimize(&f, &space, TpeConfig::new(40)).unwrap();
        assert_eq!(a.history, b.history);
        let c = tpe_optimize(&f, &space.with_seed(43), TpeConfig::new(40)).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn resumed_run_matches_uninterrupted() {
        let f = infallible(correlated);
        let space = Benchmark::Correlated.space(5);
        let full = tpe_optimize(&f, &space, TpeConfig::new(30)).unwrap();
        let mut state = TpeState::new(space.clone(), TpeConfig::new(30)).unwrap();
        for _ in 0..17 {
            state.step(&f);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        state.save(&path).unwrap();
        let resumed = tpe_resume(&f, TpeState::load(&path).unwrap()).unwrap();
        assert_eq!(resumed.history, full.history);
    }

    #[test]
    fn failed_trials_survive_the_state_file() {
        let f = |x: &[f64]| if x[0] > 4.0 { Err("boom".to_string()) } else { Ok(quadratic(x)) };
        let r = tpe_optimize(&f, &quad_space(), TpeConfig::new(40)).unwrap();
        let state = TpeState { space: quad_space(), config: TpeConfig::new(40), history: r.history.clone() };
        let back: TpeState = serde_json::from_str(&serde_json::to_string(&state).unwrap()).unwrap();
        assert_eq!(back.history.len(), 40);
        for (a, b) in back.history.iter().zip(&r.history) {
            assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        }
    }

    #[test]
    fn invalid_settings() {
        let f = infallible(quadratic);
        assert!(tpe_optimize(&f, &quad_space(), TpeConfig::new(5)).is_err());
        assert!(tpe_optimize(&f, &quad_space(), TpeConfig { gamma: 1.0, ..TpeConfig::new(20) }).is_err());
        assert!(ParameterSpace::new(vec![Axis::linear("x", 1.0, 1.0)], 0).is_err());
        assert!(ParameterSpace::new(vec![Axis::log("x", 0.0, 1.0)], 0).is_err());
        assert!(grid_scan(&f, &quad_space(), &[1]).is_err());
    }

    #[test]
    fn history_csv_layout() {
        let f = infallible(bimodal);
        let space = Benchmark::Bimodal.space(1);
        let r = tpe_optimize(&f, &space, TpeConfig::new(12)).unwrap();
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &space, &r.history).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,objective,x,y,phase,error");
        assert_eq!(lines.len(), 13);
        assert!(lines[1].contains(",startup,"));
        assert!(lines[12].contains(",model,"));
    }

    #[test]
    fn sign_test_values() {
        // Binomial tail oracle by direct summation.
        let tail = |w: u32, n: u32| -> f64 {
            (w..=n)
                .map(|k| {
                    let c: f64 = (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product();
                    c / 2f64.powi(n as i32)
                })
                .sum()
        };
        for (w, l) in [(60, 40), (55, 45), (10, 0), (3, 7)] {
            assert!((sign_test_p(w, l) - tail(w as u32, (w + l) as u32)).abs() < 1e-12);
        }
        assert_eq!(sign_test_p(0, 0), 1.0);
    }

    #[test]
    fn log_axis_grid() {
        let a = Axis::log("kappa", 1e6, 1e8);
        let g = a.grid(3);
        assert_eq!(g[0], 1e6);
        assert_eq!(g[2], 1e8);
        assert!((g[1] - 1e7).abs() < 1e-3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn samplers_stay_in_bounds(
                seed in 0u64..1000,
                lo in -10.0..0.0f64,
                width in 1e-3..20.0f64,
                log_lo in 1e-3..10.0f64,
                decades in 0.1..6.0f64,
            ) {
                let space = ParameterSpace::new(
                    vec![Axis::linear("a", lo, lo + width), Axis::log("b", log_lo, log_lo * 10f64.powf(decades))],
                    seed,
                ).unwrap();
                // Peak pinned near a corner to push proposals against the bounds.
                let f = infallible(|x: &[f64]| -(x[0] - lo).abs() - x[1].ln().abs());
                let t = tpe_optimize(&f, &space, TpeConfig::new(30)).unwrap();
                let r = random_search(&f, &space, 30).unwrap();
                let g = grid_scan(&f, &space, &[4, 4]).unwrap();
                let a = alternating_scan(&f, &space, &[(0, 1)], 4, 2, None).unwrap();
                for trial in t.history.iter().chain(&r.history).chain(&g.trials).chain(&a.history) {
                    prop_assert!(space.contains(&trial.point), "{:?}", trial.point);
                }
            }

            #[test]
            fn alternating_best_never_drops(seed in 0u64..500, rounds in 1usize..4) {
                let space = Benchmark::Correlated.space(seed);
                let mut rng = trial_rng(seed, 0);
                let start = space.sample_uniform(&mut rng);
                let f = infallible(|x: &[f64]| correlated(x) + 0.05 * (13.0 * x[0]).sin() * (11.0 * x[2]).cos());
                let r = alternating_scan(&f, &space, &[(0, 1), (1, 2), (0, 2)], 6, rounds, Some(&start)).unwrap();
                prop_assert!(r.round_best.windows(2).all(|w| w[1] >= w[0]));
                prop_assert!(r.round_best[0] >= r.history[0].objective);
            }
        }
    }
}
