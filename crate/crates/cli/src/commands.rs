use crate::output::{check_assertions, OutputDir, RunManifest};
use crate::*;
use purcell_lab::circuit_model::*;
use purcell_lab::device_config::{load_device_config, DeviceConfig, FilterParams, QubitParams, ResonatorParams};
use purcell_lab::dynamics::{build_liouvillian, eigen_decomposition, FrequencySource};
use purcell_lab::optimizer::benchmarks::Benchmark;
use purcell_lab::optimizer::*;
use purcell_lab::readout_sim::*;
use purcell_lab::reset_sim::*;
use purcell_lab::units::{capacitance_from_charging_energy, ordinary, MHZ};
use serde_json::{json, Map, Value};

const DEFAULT_G_RF: f64 = 20.0 * MHZ;
const DEFAULT_KAPPA_F: f64 = 150.0 * MHZ;
const DEFAULT_TWO_CHI: f64 = 1.4 * MHZ;

fn sim(e: impl std::fmt::Display) -> CliError {
    CliError::Simulation(e.to_string())
}

fn reset_err(e: ResetError) -> CliError {
    match e {
        ResetError::Invalid(_) | ResetError::UnknownScenario { .. } => CliError::Config(e.to_string()),
        ResetError::Dynamics(_) | ResetError::Pulse(_) => CliError::Simulation(e.to_string()),
    }
}

fn opt_err(e: OptimizerError) -> CliError {
    match e {
        OptimizerError::InvalidSpace(_) | OptimizerError::InvalidSetting(_) => CliError::Usage(e.to_string()),
        OptimizerError::Io(_) | OptimizerError::State(_) => CliError::Config(e.to_string()),
    }
}

struct Ctx<'a> {
    cfg: Option<&'a DeviceConfig>,
}

impl<'a> Ctx<'a> {
    fn require(&self, what: &str) -> Result<&'a DeviceConfig, CliError> {
        self.cfg
            .ok_or_else(|| CliError::Config(format!("{what} needs a device config (--config or PURCELL_LAB_CONFIG)")))
    }
}

/// Element with the requested id, or the first one when no id is given.
fn pick<'a, T>(items: &'a [T], id: Option<&str>, kind: &str, id_of: impl Fn(&T) -> &str) -> Result<&'a T, CliError> {
    match id {
        Some(id) => items
            .iter()
            .find(|x| id_of(x) == id)
            .ok_or_else(|| CliError::Config(format!("no {kind} `{id}` in config"))),
        None => items.first().ok_or_else(|| CliError::Config(format!("config has no {kind}"))),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Result<Vec<f64>, CliError> {
    if n < 2 {
        return Err(CliError::Usage("need at least two points".into()));
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Reset(a) = &cli.command {
        if a.list {
            for s in scenario_library() {
                println!("{:<22} {}", s.name, s.description);
            }
            return Ok(());
        }
    }
    let loaded = match &cli.config {
        Some(p) => Some(load_device_config(p).map_err(|e| CliError::Config(e.to_string()))?),
        None => None,
    };
    let ctx = Ctx { cfg: loaded.as_ref() };
    let mut out = OutputDir::new(&cli.out);
    let result = match &cli.command {
        Command::FilterTune(a) => filter_tune(&ctx, a, &mut out),
        Command::KappaScan(a) => kappa_scan(&ctx, a, &mut out),
        Command::DephasingScan(a) => dephasing_scan(&ctx, a, &mut out),
        Command::ReadoutBudget(a) => readout_budget(&ctx, a, &mut out),
        Command::Reset(a) => reset(&ctx, a, &mut out),
        Command::MultiCoupler(a) => multi_coupler(a, &mut out),
        Command::Optimize(a) => optimize(a, cli.seed, &mut out),
        Command::Formula(f) => formula(&ctx, f, &mut out),
    }
    .and_then(|summary| out.write_json("summary.json", &summary).map(|_| summary))
    .and_then(|summary| {
        let asserts = match &cli.command {
            Command::Reset(a) => a.asserts.as_slice(),
            Command::MultiCoupler(a) => a.asserts.as_slice(),
            _ => &[],
        };
        check_assertions(&summary, asserts)
    });
    if result.is_err() && out.is_empty() {
        return result;
    }
    let status = match &result {
        Ok(_) => "ok".to_string(),
        Err(e) => e.to_string(),
    };
    out.finish(RunManifest {
        command: cli.command.name().to_string(),
        config_path: cli.config.as_ref().map(|p| p.display().to_string()),
        overrides: cli.command.overrides(),
        seed: cli.seed,
        output_dir: cli.out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        status,
        outputs: Vec::new(),
    })?;
    result
}

fn filter_tune(ctx: &Ctx, a: &FilterTuneArgs, out: &mut OutputDir) -> Result<Map<String, Value>, CliError> {
    let cfg = ctx.require("filter-tune")?;
    let filter = pick(&cfg.filters, a.filter.as_deref(), "filter", |f| &f.id)?;
    let flux = linspace(a.flux_min, a.flux_max, a.points)?;
    let curve = filter_tuning_curve(filter, &flux).map_err(sim)?;
    let rows: Vec<Vec<f64>> = curve.flux_quanta.iter().zip(&curve.frequencies).map(|(x, f)| vec![*x, *f]).collect();
    out.write_csv("filter_tune.csv", &["flux_quanta", "frequency_hz"], &rows)?;
    println!("filter {}: {:.6} - {:.6} GHz", filter.id, curve.min() / 1e9, curve.max() / 1e9);
    Ok(object(json!({
        "filter": filter.id,
        "min_hz": curve.min(),
        "max_hz": curve.max(),
        "points": rows.len(),
    })))
}

struct Link<'a> {
    g_rf: f64,
    kappa_f: f64,
    resonator: Option<&'a ResonatorParams>,
    filter: Option<&'a FilterParams>,
}

fn link<'a>(ctx: &Ctx<'a>, a: &LinkArgs) -> Result<Link<'a>, CliError> {
    let resonator = match ctx.cfg {
        Some(cfg) if a.resonator.is_some() || !cfg.resonators.is_empty() => {
            Some(pick(&cfg.resonators, a.resonator.as_deref(), "resonator", |r| &r.id)?)
        }
        None if a.resonator.is_some() => return Err(ctx.require("--resonator").unwrap_err()),
        _ => None,
    };
    let filter = match (ctx.cfg, resonator.and_then(|r| r.filter.as_deref())) {
        (Some(cfg), Some(id)) => cfg.filter(id),
        (Some(cfg), None) => cfg.filters.first(),
        _ => None,
    };
    Ok(Link {
        g_rf: a.g_rf.or(resonator.and_then(|r| r.g_rf)).unwrap_or(DEFAULT_G_RF),
        kappa_f: a.kappa_f.or(filter.map(|f| f.kappa)).unwrap_or(DEFAULT_KAPPA_F),
        resonator,
        filter,
    })
}

fn kappa_scan(ctx: &Ctx, a: &KappaScanArgs, out: &mut OutputDir) -> Result<Map<String, Value>, CliError> {
    let l = link(ctx, &a.link)?;
    let rows: Vec<Vec<f64>> = if a.flux {
        let (Some(res), Some(filt)) = (l.resonator, l.filter) else {
            return Err(CliError::Config("--flux needs a config with a resonator and a filter".into()));
        };
        let mut rows = Vec::with_capacity(a.points);
        for x in linspace(0.0, 1.0, a.points)? {
            let f = filter_frequency(Flux::Quanta(x), filt).map_err(sim)?;
            let d = f - res.freq_bare;
            rows.push(vec![x, f, d, effective_linewidth(l.g_rf, d, l.kappa_f)]);
        }
        out.write_csv("kappa_scan.csv", &["flux_quanta", "filter_hz", "detuning_hz", "kappa_eff_hz"], &rows)?;
        rows
    } else {
        let rows: Vec<Vec<f64>> = linspace(-a.span, a.span, a.points)?
            .into_iter()
            .map(|d| vec![d, effective_linewidth(l.g_rf, d, l.kappa_f)])
            .collect();
        out.write_csv("kappa_scan.csv", &["detuning_hz", "kappa_eff_hz"], &rows)?;
        rows
    };
    let k: Vec<f64> = rows.iter().map(|r| *r.last().unwrap()).collect();
    let max = k.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = k.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("kappa_eff between {:.4} and {:.4} MHz", min / MHZ, max / MHZ);
    Ok(object(json!({
        "g_rf_hz": l.g_rf,
        "kappa_f_hz": l.kappa_f,
        "kappa_eff_min_hz": min,
        "kappa_eff_max_hz": max,
    })))
}

fn qubit_resonator_shift(cfg: &DeviceConfig, res: &ResonatorParams) -> Result<Option<f64>, CliError> {
    let Some(q) = res.qubit.as_deref().and_then(|id| cfg.qubit(id)) else { return Ok(None) };
    let g = res.g_qr.unwrap_or_else(|| {
        coupling_from_capacitance(res.c_qr, q.freq_idle, res.freq_bare, capacitance_from_charging_energy(q.ec), res.c_r)
    });
    let s = dispersive_shifts(g, q.freq_idle, q.anharmonicity, res.freq_bare).map_err(sim)?;
    Ok(Some(s.two_chi.abs()))
}

fn dephasing_scan(ctx: &Ctx, a: &DephasingScanArgs, out: &mut OutputDir) -> Result<Map<String, Value>, CliError> {
    let l = link(ctx, &a.link)?;
    let from_cfg = match (ctx.cfg, l.resonator) {
        (Some(cfg), Some(r)) if a.two_chi.is_none() => qubit_resonator_shift(cfg, r)?,
        _ => None,
    };
    let two_chi = a.two_chi.or(from_cfg).unwrap_or(DEFAULT_TWO_CHI);
    let rows: Vec<Vec<f64>> = linspace(-a.span, a.span, a.points)?
        .into_iter()
        .map(|d| {
            let k = effective_linewidth(l.g_rf, d, l.kappa_f);
            vec![d, k, photon_noise_dephasing(k, two_chi, a.n_noise)]
        })
        .collect();
    out.write_csv("dephasing_scan.csv", &["detuning_hz", "kappa_eff_hz", "gamma_phi_hz"], &rows)?;
    let peaks = dephasing_peaks(l.g_rf, l.kappa_f, two_chi, a.n_noise, a.span, a.points);
    for (d, g) in &peaks {
        println!("peak at {:+.4} MHz: {:.6e} Hz", d / MHZ, g);
    }
    Ok(object(json!({
        "two_chi_hz": two_chi,
        "n_noise": a.n_noise,
        "peak_count": peaks.len(),
        "peaks": peaks.iter().map(|(d, g)| json!({"detuning_hz": d, "gamma_phi_hz": g})).collect::<Vec<_>>(),
        "peak_value_expected_hz": two_chi / 2.0 * a.n_noise,
    })))
}

fn parse_cloud(s: &str) -> Result<IqCloud, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("cloud {s:?} must be I,Q,sigma")))?;
    if v.len() != 3 {
        return Err(CliError::Usage(format!("cloud {s:?} must be I,Q,sigma")));
    }
    IqCloud::isotropic(v[0], v[1], v[2]).map_err(|e| CliError::Usage(e.to_string()))
}

fn readout_budget(ctx: &Ctx, a: &ReadoutBudgetArgs, out: &mut OutputDir) -> Result<Map<String, Value>, CliError> {
    let t1 = match a.t1 {
        Some(t) => t,
        None => {
            let cfg = ctx.require("readout-budget without --t1")?;
            pick::<QubitParams>(&cfg.qubits, a.qubit.as_deref(), "qubit", |q| &q.id)?.t1
        }
    };
    let mode = match a.mode {
        ModeArg::ZeroOne => ReadoutMode::ZeroOne,
        ModeArg::ZeroTwo => ReadoutMode::ZeroTwo,
    };
    let usage = |e: ReadoutError| CliError::Usage(e.to_string());
    let eps_t1 = relaxation_error(a.tau_m, t1).map_err(usage)?;
    let budget = match (&a.cloud0, &a.cloud1, a.state0_fidelity, a.state1_fidelity) {
        (Some(c0), Some(c1), None, None) => {
            let (c0, c1) = (parse_cloud(c0)?, parse_cloud(c1)?);
            let th = optimize_threshold(&c0, &c1, &RelaxationModel::new(eps_t1)).map_err(sim)?;
            error_budget(&c0, &c1, &th.threshold, a.tau_m, t1, a.prep_error, mode).map_err(usage)?
        }
        (None, None, Some(f0), Some(f1)) => {
            if ![f0, f1, a.separation_error].iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(CliError::Usage("fidelities and separation error must lie in [0, 1]".into()));
            }
            ErrorBudget::from_state_fidelities(f0, f1, a.separation_error, eps_t1, mode)
        }
        _ => {
            return Err(CliError::Usage(
                "give either --cloud0 and --cloud1, or --state0-fidelity and --state1-fidelity".into(),
            ))
        }
    };
    out.write_json("budget.json", &budget)?;
    print!("{}", render_table(&[("budget", &budget)]));
    Ok(object(serde_json::to_value(budget).map_err(|e| CliError::Io(e.to_string()))?))
}

fn reset(ctx: &Ctx, a: &ResetArgs, out: &mut OutputDir) -> Result<Map<String, Value>, CliError> {
    let mut s = match (&a.scenario, &a.scenario_file) {
        (Some(name), None) => scenario(name).map_err(reset_err)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            ResetScenario::from_json(&text).map_err(reset_err)?
        }
        _ => return Err(CliError::Usage("give --scenario <name> or --scenario-file <path> (see --list)".into())),
    };
    if let Some(q) = &a.qubit {
        let cfg = ctx.require("reset --qubit")?;
        let (c, f) = (a.coupler.as_deref().unwrap_or_default(), a.filter.as_deref().unwrap_or_default());
        s.device = ResetDevice::from_config(cfg, q, c, f, s.device.filter_freq).map_err(reset_err)?;
    }
    s.device.validate().map_err(reset_err)?;
    s.protocol.validate().map_err(reset_err)?;
    out.write_with("scenario.json", |w| {
        use std::io::Write;
        writeln!(w, "{}", s.to_json())
    })?;
    let report = run_scenario(&s).map_err(reset_err)?;
    let header: Vec<&str> = report.columns.iter().map(String::as_str).collect();
    out.write_csv("reset.csv", &header, &report.rows)?;
    println!("{}: residual {:.4}%", s.name, 100.0 * report.residual);
    Ok(object(json!({
        "scenario": s.name,
        "residual": report.residual,
        "rows": report.rows.len(),
    })))
}

fn coupler_init(spec: &str, n: usize) -> Result<CouplerInit, CliError> {
    match spec {
        "all" => Ok(CouplerInit::all_excited(n)),
        "dark" if n >= 2 => Ok(CouplerInit::antisymmetric_pair(n)),
        "dark" => Err(CliError::Usage("the dark pair needs at least two couplers".into())),
        bits if bits.len() == n && bits.chars().all(|c| c == '0' || c == '1') => {
            Ok(CouplerInit::Basis(bits.chars().map(|c| (c == '1') as usize).collect()))
        }
        _ => Err(CliError::Usage(format!("--init must be all, dark or a {n}-digit bit string"))),
    }
}

fn multi_coupler(a: &MultiCouplerArgs, out: &mut OutputDir) -> Result<Map<String, Value>, CliError> {
    let spec = MultiCouplerSpec::new(a.detunings.clone(), a.g_cf, a.kappa_f);
    let init = coupler_init(&a.init, spec.detunings.len())?;
    if !(a.duration > 0.0 && a.sample_dt > 0.0) {
        return Err(CliError::Usage("duration and sample spacing must be positive".into()));
    }
    let o = multi_coupler_reset(&spec, &init, a.duration, a.sample_dt).map_err(reset_err)?;
    let n = spec.detunings.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("c{i}_excited")));
    header.push("total".into());
    let rows: Vec<Vec<f64>> = (0..o.times.len())
        .map(|k| {
            let mut row = vec![o.times[k]];
            row.extend(o.per_coupler.iter().map(|p| p[k]));
            row.push(o.total[k]);
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv("multi_coupler.csv", &header, &rows)?;
    if a.spectrum {
        let sys = spec.system();
        let freqs: Vec<f64> = sys
            .subsystems
            .iter()
            .map(|s| match s.frequency {
                FrequencySource::Fixed(f) => f,
                _ => spec.filter_freq,
            })
            .collect();
        let h = sys.hamiltonian(&freqs, spec.filter_freq).map_err(sim)?;
        let l = build_liouvillian(&h, &sys.collapse_operators()).map_err(sim)?;
        let mut values = eigen_decomposition(&l).map_err(sim)?.values;
        values.sort_by(|x, y| x.re.abs().total_cmp(&y.re.abs()).then(x.im.total_cmp(&y.im)));
        let slow: Vec<Value> = values
            .iter()
            .take(12)
            .map(|v| json!({"decay_hz": -ordinary(v.re), "frequency_hz": ordinary(v.im)}))
            .collect();
        out.write_json("spectrum.json", &slow)?;
    }
    let below = o.time_below(0.01);
    println!("largest coupler excitation at the end: {:.4}%", 100.0 * o.residual);
    Ok(object(json!({
        "residual": o.residual,
        "final_total": o.total.last(),
        "time_below_1pct": below,
        "plateau_level": o.plateau.map(|p| p.level),
        "trace_error": o.trace_error,
        "hermiticity_error": o.hermiticity_error,
    })))
}

fn optimize(a: &OptimizeArgs, seed: u64, out: &mut OutputDir) -> Result<Map<String, Value>, CliError> {
    let bench = match a.benchmark {
        BenchArg::Quadratic => Benchmark::Quadratic,
        BenchArg::Bimodal => Benchmark::Bimodal,
        BenchArg::Correlated => Benchmark::Correlated,
    };
    let objective = infallible(move |x: &[f64]| bench.evaluate(x));
    let space = bench.space(seed);
    let (best, history, state) = match a.method {
        MethodArg::Tpe => {
            let mut state = match &a.resume {
                Some(p) => TpeState::load(p).map_err(opt_err)?,
                None => TpeState::new(space.clone(), TpeConfig { gamma: a.gamma, ..TpeConfig::new(a.trials) })
                    .map_err(opt_err)?,
            };
            state.config.n_trials = state.config.n_trials.max(a.trials);
            let r = tpe_resume(&objective, state.clone()).map_err(opt_err)?;
            state.history = r.history.clone();
            (r.best, r.history, Some(state))
        }
        MethodArg::Random => {
            let r = random_search(&objective, &space, a.trials).map_err(opt_err)?;
            (r.best, r.history, None)
        }
        MethodArg::Grid => {
            let r = grid_scan(&objective, &space, &vec![a.resolution; space.dims()]).map_err(opt_err)?;
            (r.best_trial().clone(), r.trials, None)
        }
        MethodArg::Alternating => {
            let d = space.dims();
            let schedule: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
            if schedule.is_empty() {
                return Err(CliError::Usage("alternating scans need at least two axes".into()));
            }
            let r = alternating_scan(&objective, &space, &schedule, a.resolution, a.rounds, None).map_err(opt_err)?;
            (r.best, r.history, None)
        }
    };
    let space = state.as_ref().map(|s| s.space.clone()).unwrap_or(space);
    out.write_with("history.csv", |w| write_history_csv(w, &space, &history))?;
    if let Some(s) = &state {
        out.write_json("state.json", s)?;
    }
    out.write_json("best.json", &best)?;
    println!("best objective {:.6} at {:?} after {} evaluations", best.objective, best.point, history.len());
    Ok(object(json!({
        "benchmark": bench.name(),
        "best_objective": best.objective,
        "best_point": best.point,
        "evaluations": history.len(),
        "optimum": bench.optimum(),
    })))
}

fn formula(ctx: &Ctx, f: &FormulaCmd, out: &mut OutputDir) -> Result<Map<String, Value>, CliError> {
    let value = match f {
        FormulaCmd::KappaEff { g_rf, detuning, kappa_f } => {
            json!({"kappa_eff_hz": effective_linewidth(*g_rf, *detuning, *kappa_f)})
        }
        FormulaCmd::Dispersive { g_qr, qubit_freq, anharmonicity, resonator_freq } => {
            let s = dispersive_shifts(*g_qr, *qubit_freq, *anharmonicity, *resonator_freq).map_err(sim)?;
            serde_json::to_value(s).map_err(|e| CliError::Io(e.to_string()))?
        }
        FormulaCmd::CouplingForShift { two_chi, qubit_freq, anharmonicity, resonator_freq } => {
            let g = coupling_for_dispersive_shift(*two_chi, *qubit_freq, *anharmonicity, *resonator_freq).map_err(sim)?;
            json!({"g_qr_hz": g})
        }
        FormulaCmd::Purcell { g_qr, g_rf, kappa_f, filter_freq, qubit_freq, resonator_freq } => {
            let rate = purcell_rate(*g_qr, *g_rf, *kappa_f, *filter_freq, *qubit_freq, *resonator_freq).map_err(sim)?;
            json!({"purcell_rate_hz": rate, "t1_limit_s": 1.0 / (2.0 * std::f64::consts::PI * rate)})
        }
        FormulaCmd::RelaxationError { tau_m, t1 } => {
            json!({"relaxation_error": relaxation_error(*tau_m, *t1).map_err(|e| CliError::Usage(e.to_string()))?})
        }
        FormulaCmd::CouplerFrequency { z, coupler } => {
            let cfg = ctx.require("formula coupler-frequency")?;
            let c = pick(&cfg.couplers, coupler.as_deref(), "coupler", |c| &c.id)?;
            json!({"coupler": c.id, "frequency_hz": coupler_frequency_from_z(*z, c)})
        }
    };
    out.write_json("formula.json", &value)?;
    println!("{}", serde_json::to_string_pretty(&value).map_err(|e| CliError::Io(e.to_string()))?);
    Ok(object(value))
}
