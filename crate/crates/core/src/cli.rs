//! Command-line front end: `simulate`, `fit`, `forecast`, `bench` and
//! `liu-west`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::output::{FINAL_STATES, MANIFEST};
use crate::io::{
    aggregate, load_incidence, read_final_states, read_manifest, write_results, ExperimentConfig,
    Manifest, RunArtifacts,
};
use crate::liuwest::liu_west_filter;
use crate::model::{example, simulate_epidemic, SimulatedEpidemic};
use crate::products::{
    coverage, forecast, marginal_state_posterior, metrics, ForecastOptions, MarginalOptions,
    Quantity, StatePosterior,
};
use crate::smc2::{self, Engine, ParamSummary, Smc2Output};
use crate::stochastic::{purpose, RngStream};

#[derive(Parser, Debug)]
#[command(name = "esmc2", version, about = "Sequential Bayesian inference for stochastic SEIR models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a synthetic epidemic and its observed counts.
    Simulate(SimulateArgs),
    /// Fit the model with SMC² and write posterior summaries and state bands.
    Fit(RunArgs),
    /// Posterior-predictive forecast from a finished fit.
    Forecast(ForecastArgs),
    /// Fit with both inner filters on the same data and seed and compare.
    Bench(RunArgs),
    /// Joint state-parameter filtering with the Liu–West filter.
    LiuWest(RunArgs),
}

/// Flags shared by every run; each maps onto a config key.
#[derive(Args, Debug, Default, Clone)]
pub struct Common {
    /// key = value experiment file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rerun with the configuration echoed in a manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Override any config key, e.g. `--set prior.phi=uniform(0,0.1)`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub example: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub obs: Option<String>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Incidence CSV; the example is simulated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub engine: Option<String>,
    #[arg(long)]
    pub ntheta: Option<usize>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub moves: Option<usize>,
    #[arg(long)]
    pub ess_threshold: Option<f64>,
    #[arg(long)]
    pub proposal_scale: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub likelihood: Option<String>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub aggregate_weekly: bool,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Piecewise-linear transmission rate `t:beta,t:beta,...` replacing the
    /// example's schedule.
    #[arg(long)]
    pub schedule: Option<String>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct ForecastArgs {
    /// Output directory of a finished `fit`.
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Keep the random walk on log beta instead of freezing beta.
    #[arg(long)]
    pub diffusive_beta: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to `forecast/` inside the fit directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn config_from(common: &Common, extra: Vec<(&str, String)>) -> Result<ExperimentConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(path) = &common.manifest {
        pairs.extend(read_manifest(path)?.config);
    }
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let base = ExperimentConfig::parse(&text, &path.display().to_string())?;
            pairs.splice(0..0, base.to_pairs());
            ExperimentConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?
        }
        None => ExperimentConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?,
    };
    let mut flags: Vec<(&str, String)> = Vec::new();
    if let Some(v) = &common.example {
        if *v != cfg.example {
            // A different example swaps model, prior and initial state.
            let keep: Vec<(String, String)> = cfg
                .to_pairs()
                .into_iter()
                .filter(|(k, _)| !is_example_key(k))
                .collect();
            cfg = ExperimentConfig::for_example(v)?;
            for (k, val) in &keep {
                cfg.set(k, val)?;
            }
        }
    }
    if let Some(v) = common.seed {
        flags.push(("seed", v.to_string()));
    }
    if let Some(v) = &common.out {
        flags.push(("out", v.display().to_string()));
    }
    if let Some(v) = &common.obs {
        flags.push(("obs", v.clone()));
    }
    if let Some(v) = common.rho {
        flags.push(("rho", v.to_string()));
    }
    if let Some(v) = common.days {
        flags.push(("days", v.to_string()));
    }
    if let Some(v) = common.threads {
        flags.push(("threads", v.to_string()));
    }
    flags.extend(extra);
    for (k, v) in flags {
        cfg.set(k, &v)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn is_example_key(k: &str) -> bool {
    k == "example"
        || k.starts_with("prior")
        || k.starts_with("fixed.")
        || k.starts_with("init.")
        || matches!(k, "population" | "rho" | "obs" | "dt" | "substeps")
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut extra: Vec<(&str, String)> = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                extra.push((k, v));
            }
        };
        push("data", self.data.as_ref().map(|p| p.display().to_string()));
        push("engine", self.engine.clone());
        push("ntheta", self.ntheta.map(|v| v.to_string()));
        push("nx", self.nx.map(|v| v.to_string()));
        push("moves", self.moves.map(|v| v.to_string()));
        push("ess_threshold", self.ess_threshold.map(|v| v.to_string()));
        push("proposal_scale", self.proposal_scale.map(|v| v.to_string()));
        push("eta", self.eta.map(|v| v.to_string()));
        push("likelihood", self.likelihood.clone());
        push("draws", self.draws.map(|v| v.to_string()));
        push("delta", self.delta.map(|v| v.to_string()));
        push("horizon", self.horizon.map(|v| v.to_string()));
        if self.aggregate_weekly {
            extra.push(("aggregate_weekly", "true".into()));
        }
        config_from(&self.common, extra)
    }
}

/// Piecewise-linear interpolation through `t:beta` knots, flat outside.
fn parse_schedule(spec: &str) -> Result<Vec<(f64, f64)>> {
    let mut knots: Vec<(f64, f64)> = spec
        .split(',')
        .map(|kv| {
            let (t, b) = kv
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("schedule knot '{kv}' is not t:beta")))?;
            let t: f64 = t.trim().parse().map_err(|_| Error::Config(format!("bad time in '{kv}'")))?;
            let b: f64 = b.trim().parse().map_err(|_| Error::Config(format!("bad rate in '{kv}'")))?;
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("transmission rate must be non-negative in '{kv}'")));
            }
            Ok((t, b))
        })
        .collect::<Result<_>>()?;
    knots.sort_by(|a, b| a.0.total_cmp(&b.0));
    if knots.is_empty() {
        return Err(Error::Config("empty schedule".into()));
    }
    Ok(knots)
}

fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    let k = knots.partition_point(|(x, _)| *x <= t);
    if k == 0 {
        return knots[0].1;
    }
    if k == knots.len() {
        return knots[k - 1].1;
    }
    let ((t0, b0), (t1, b1)) = (knots[k - 1], knots[k]);
    b0 + (b1 - b0) * (t - t0) / (t1 - t0)
}

/// The example's epidemic under the configured observation model, with the
/// configured `phi` as the true overdispersion.
pub fn simulate_config(cfg: &ExperimentConfig, knots: Option<&[(f64, f64)]>) -> Result<SimulatedEpidemic> {
    let ex = example(&cfg.example)?;
    let days = cfg.days.unwrap_or(ex.days);
    let mut truth = ex.truth;
    truth.phi = cfg.problem.prior.fixed.phi;
    let mut init = ex.init_state;
    let schedule: Box<dyn Fn(f64) -> f64> = match knots {
        Some(k) => {
            let k = k.to_vec();
            Box::new(move |t| interpolate(&k, t))
        }
        None => Box::new(ex.schedule),
    };
    truth.beta0 = schedule(0.0).max(f64::MIN_POSITIVE);
    init.log_beta = truth.beta0.ln();
    let mut rng = RngStream::new(cfg.seed).child(purpose::SIMULATE).rng();
    simulate_epidemic(&cfg.problem.cfg, &truth, &init, &*schedule, days, &mut rng)
}

/// Observation series for a run: the data file, or the simulated example.
pub fn observations(cfg: &mut ExperimentConfig) -> Result<(Vec<f64>, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut obs = match &cfg.data {
        Some(path) => {
            let mut series = load_incidence(path)?;
            if cfg.aggregate_weekly {
                let (weekly, dropped) = aggregate(&series, 7)?;
                if dropped > 0 {
                    warnings.push(format!("dropped {dropped} trailing days that do not fill a week"));
                }
                series = weekly;
            }
            series.counts
        }
        None => {
            if cfg.aggregate_weekly {
                return Err(Error::Config("weekly aggregation needs a data file".into()));
            }
            let days = cfg.days;
            cfg.days = None;
            let sim = simulate_config(cfg, None);
            cfg.days = days;
            sim?.observations
        }
    };
    if let Some(d) = cfg.days {
        if d > obs.len() {
            return Err(Error::Config(format!("days = {d} but only {} observations", obs.len())));
        }
        obs.truncate(d);
    }
    Ok((obs, warnings))
}

/// Weekly data is fitted with the reporting interval stretched to a week and
/// the Euler sub-step kept at its daily length.
pub fn effective_config(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    if c.aggregate_weekly {
        c.problem.cfg.dt *= 7.0;
        c.problem.cfg.n_substeps *= 7;
    }
    c
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    Ok(pool.install(f))
}

fn out_dir(cfg: &ExperimentConfig, command: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(format!("esmc2-{command}")))
}

fn base_manifest(command: &str, cfg: &ExperimentConfig) -> Manifest {
    Manifest {
        command: command.to_string(),
        status: "complete".to_string(),
        seed: cfg.seed,
        config: cfg.to_pairs(),
        ..Default::default()
    }
}

fn format_params(out: &mut String, params: &[ParamSummary]) {
    writeln!(out, "{:<8} {:>10} {:>10} {:>10} {:>10}", "param", "mean", "sd", "q2.5", "q97.5").unwrap();
    for p in params {
        writeln!(
            out,
            "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            p.param.name(),
            p.mean,
            p.sd,
            p.quantiles[0],
            p.quantiles[4]
        )
        .unwrap();
    }
}

/// Everything a completed fit produces.
pub struct FitResult {
    pub output: Smc2Output,
    pub posterior: StatePosterior,
    pub mae: f64,
    pub rmse: f64,
    pub coverage95: f64,
}

/// Runs the sampler and the state products for `cfg` on `obs`.
pub fn fit_products(
    cfg: &ExperimentConfig,
    obs: &[f64],
) -> std::result::Result<FitResult, Box<smc2::Smc2Abort>> {
    let output = smc2::run(obs, &cfg.problem, &cfg.smc2, cfg.seed)?;
    let fail = |e: Error, output: &Smc2Output| {
        Box::new(smc2::Smc2Abort {
            error: e,
            history: output.history.clone(),
            diagnostics: output.diagnostics.clone(),
        })
    };
    let thetas: Vec<_> = output.particles.iter().map(|p| p.theta).collect();
    let log_w: Vec<_> = output.particles.iter().map(|p| p.log_weight).collect();
    let opts = MarginalOptions {
        draws: cfg.draws,
        n_x: cfg.smc2.n_x,
        engine: cfg.smc2.engine,
        enkf: cfg.smc2.enkf,
    };
    let posterior = marginal_state_posterior(obs, &cfg.problem, &thetas, &log_w, &opts, cfg.seed)
        .map_err(|e| fail(e, &output))?;
    let incidence = posterior.series(Quantity::Incidence);
    let mean: Vec<f64> = incidence.iter().map(|b| b.mean).collect();
    let lo: Vec<f64> = incidence.iter().map(|b| b.lower[3]).collect();
    let hi: Vec<f64> = incidence.iter().map(|b| b.upper[3]).collect();
    let m = metrics(&mean, obs).map_err(|e| fail(e, &output))?;
    let cov = coverage(&lo, &hi, obs).map_err(|e| fail(e, &output))?;
    Ok(FitResult {
        output,
        posterior,
        mae: m.mae,
        rmse: m.rmse,
        coverage95: cov,
    })
}

fn cmd_fit(args: &RunArgs, stdout: &mut String) -> Result<()> {
    let mut cfg = args.config()?;
    let (obs, mut warnings) = observations(&mut cfg)?;
    let run_cfg = effective_config(&cfg);
    let dir = out_dir(&cfg, "fit");
    let mut manifest = base_manifest("fit", &cfg);
    let outcome = with_pool(cfg.threads, || fit_products(&run_cfg, &obs))?;
    match outcome {
        Ok(fit) => {
            warnings.extend(fit.posterior.warnings.iter().cloned());
            manifest.warnings = warnings;
            manifest.diagnostics = Some(fit.output.diagnostics.clone());
            manifest.metrics.insert("incidence_mae".into(), fit.mae);
            manifest.metrics.insert("incidence_rmse".into(), fit.rmse);
            manifest.metrics.insert("incidence_coverage95".into(), fit.coverage95);
            let samples: Vec<_> = fit.output.particles.iter().map(|p| (p.theta, p.log_weight)).collect();
            write_results(
                &dir,
                RunArtifacts {
                    history: &fit.output.history,
                    bands: Some(&fit.posterior),
                    samples: &samples,
                    forecast: None,
                    manifest,
                },
            )?;
            let d = &fit.output.diagnostics;
            writeln!(
                stdout,
                "{} engine, {} observations, {:.2} s, {} rejuvenations",
                cfg.smc2.engine,
                obs.len(),
                d.total_seconds,
                d.rejuvenation_times().len()
            )
            .unwrap();
            if let Some(last) = fit.output.history.last() {
                format_params(stdout, &last.params);
            }
            writeln!(
                stdout,
                "incidence MAE {:.3}  RMSE {:.3}  95% coverage {:.3}",
                fit.mae, fit.rmse, fit.coverage95
            )
            .unwrap();
            writeln!(stdout, "results in {}", dir.display()).unwrap();
            Ok(())
        }
        Err(abort) => {
            manifest.status = "aborted".into();
            manifest.error = Some(abort.error.to_string());
            manifest.warnings = warnings;
            manifest.diagnostics = Some(abort.diagnostics.clone());
            write_results(
                &dir,
                RunArtifacts {
                    history: &abort.history,
                    manifest,
                    ..Default::default()
                },
            )?;
            Err(abort.error)
        }
    }
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut String) -> Result<()> {
    let cfg = config_from(&args.common, Vec::new())?;
    let knots = args.schedule.as_deref().map(parse_schedule).transpose()?;
    let sim = simulate_config(&cfg, knots.as_deref())?;
    let mut table = String::from("t,S,E,I,R,Z,beta,count\n");
    for (t, x) in sim.states.iter().enumerate() {
        let y = if t == 0 { String::new() } else { sim.observations[t - 1].to_string() };
        writeln!(table, "{t},{},{},{},{},{},{},{y}", x.s, x.e, x.i, x.r, x.z, x.beta()).unwrap();
    }
    let mut counts = String::from("t,count\n");
    for (t, y) in sim.observations.iter().enumerate() {
        writeln!(counts, "{},{y}", t + 1).unwrap();
    }
    match &cfg.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            for (name, body) in [("simulation.csv", &table), ("observations.csv", &counts)] {
                let p = dir.join(name);
                fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            }
            let mut manifest = base_manifest("simulate", &cfg);
            if let Some(s) = &args.schedule {
                manifest.warnings.push(format!("custom schedule {s}"));
            }
            write_results(dir, RunArtifacts { manifest, ..Default::default() })?;
            writeln!(stdout, "{} days simulated into {}", sim.observations.len(), dir.display()).unwrap();
        }
        None => stdout.push_str(&counts),
    }
    Ok(())
}

fn cmd_forecast(args: &ForecastArgs, stdout: &mut String) -> Result<()> {
    let manifest = read_manifest(&args.from.join(MANIFEST))?;
    let mut cfg = ExperimentConfig::from_pairs(manifest.config.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.diffusive_beta |= args.diffusive_beta;
    let start = read_final_states(&args.from.join(FINAL_STATES))?;
    let run_cfg = effective_config(&cfg);
    let opts = ForecastOptions {
        horizon: cfg.horizon,
        diffusive_beta: cfg.diffusive_beta,
    };
    let fan = with_pool(cfg.threads, || forecast(&start, &run_cfg.problem.cfg, &opts, cfg.seed))??;
    let dir = args.out.clone().unwrap_or_else(|| args.from.join("forecast"));
    let mut m = base_manifest("forecast", &cfg);
    m.warnings.push(format!("forecast from {}", args.from.display()));
    write_results(
        &dir,
        RunArtifacts {
            forecast: Some(&fan),
            manifest: Manifest {
                config: cfg.to_pairs(),
                ..m
            },
            ..Default::default()
        },
    )?;
    writeln!(stdout, "{:>7} {:>10} {:>10} {:>10}", "horizon", "median", "q2.5", "q97.5").unwrap();
    for (h, b) in fan.horizons.iter().zip(&fan.observations) {
        writeln!(stdout, "{h:>7} {:>10} {:>10} {:>10}", b.median, b.lower[3], b.upper[3]).unwrap();
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    engine: String,
    seconds: f64,
    mae: f64,
    rmse: f64,
    coverage95: f64,
    rejuvenations: usize,
    mean_acceptance: Option<f64>,
    params: Vec<ParamSummary>,
}

fn cmd_bench(args: &RunArgs, stdout: &mut String) -> Result<()> {
    let mut cfg = args.config()?;
    let (obs, _) = observations(&mut cfg)?;
    let dir = out_dir(&cfg, "bench");
    let mut rows = Vec::new();
    for engine in [Engine::Enkf, Engine::Bpf] {
        let mut c = effective_config(&cfg);
        c.smc2.engine = engine;
        let fit = with_pool(cfg.threads, || fit_products(&c, &obs))?.map_err(|a| a.error)?;
        let d = &fit.output.diagnostics;
        rows.push(BenchRow {
            engine: engine.name().to_string(),
            seconds: d.total_seconds,
            mae: fit.mae,
            rmse: fit.rmse,
            coverage95: fit.coverage95,
            rejuvenations: d.rejuvenation_times().len(),
            mean_acceptance: d.mean_acceptance(),
            params: fit.output.history.last().map(|s| s.params.clone()).unwrap_or_default(),
        });
    }
    let ratio = rows[1].seconds / rows[0].seconds;
    writeln!(
        stdout,
        "{:<6} {:>9} {:>8} {:>8} {:>6}  posterior mean (sd)",
        "engine", "seconds", "MAE", "RMSE", "rejuv"
    )
    .unwrap();
    for r in &rows {
        let params: Vec<String> = r
            .params
            .iter()
            .map(|p| format!("{} {:.4} ({:.4})", p.param, p.mean, p.sd))
            .collect();
        writeln!(
            stdout,
            "{:<6} {:>9.2} {:>8.3} {:>8.3} {:>6}  {}",
            r.engine,
            r.seconds,
            r.mae,
            r.rmse,
            r.rejuvenations,
            params.join(", ")
        )
        .unwrap();
    }
    writeln!(stdout, "wall-clock ratio bpf/enkf: {ratio:.2}").unwrap();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("bench.json");
    let body = serde_json::json!({ "config": cfg.to_pairs(), "rows": rows, "ratio": ratio });
    fs::write(&path, serde_json::to_string_pretty(&body).expect("plain data") + "\n")
        .map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn cmd_liu_west(args: &RunArgs, stdout: &mut String) -> Result<()> {
    let mut cfg = args.config()?;
    let (obs, warnings) = observations(&mut cfg)?;
    let run_cfg = effective_config(&cfg);
    let out = with_pool(cfg.threads, || {
        liu_west_filter(&obs, &run_cfg.problem, cfg.smc2.n_x, cfg.delta, cfg.seed)
    })??;
    let dir = out_dir(&cfg, "liu-west");
    let mut manifest = base_manifest("liu-west", &cfg);
    manifest.warnings = warnings;
    let samples: Vec<_> = out
        .particles
        .iter()
        .map(|p| (p.theta, p.log_weight))
        .collect();
    write_results(
        &dir,
        RunArtifacts {
            history: &out.history,
            samples: &samples,
            manifest,
            ..Default::default()
        },
    )?;
    if let Some(last) = out.history.last() {
        format_params(stdout, &last.params);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliOutcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the command line `argv` (program name first).
pub fn run_cli<I, T>(argv: I) -> CliOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let (code, text) = (e.exit_code(), e.render().to_string());
            return if e.use_stderr() {
                CliOutcome { code, stdout: String::new(), stderr: text }
            } else {
                CliOutcome { code, stdout: text, stderr: String::new() }
            };
        }
    };
    let mut stdout = String::new();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &mut stdout),
        Command::Fit(a) => cmd_fit(a, &mut stdout),
        Command::Forecast(a) => cmd_forecast(a, &mut stdout),
        Command::Bench(a) => cmd_bench(a, &mut stdout),
        Command::LiuWest(a) => cmd_liu_west(a, &mut stdout),
    };
    let (code, stderr) = match result {
        Ok(()) => (0, String::new()),
        Err(e) => (1, format!("error: {e}\n")),
    };
    CliOutcome { code, stdout, stderr }
}
