//! Pipeline commands behind the `mmahc` binary.
//!
//! Every command reads one [`RunConfig`] and works inside its output
//! directory:
//!
//! ```text
//! out/
//!   traces/       run_000.csv …, manifest.json
//!   models/       predictors/, policy.json
//!   reports/      predictor_report.json, reward_curve.csv
//!   sim/          per-run tick KPIs, event logs, traffic dumps
//!   compare/      summary.csv, runs.csv, plot_<kpi>.csv
//! ```

use clap::{Parser, Subcommand};
use mmahc_core::config::RunConfig;
use mmahc_core::controllers::ControllerKind;
use mmahc_core::mobility::{read_traces_csv, write_traces_csv};
use mmahc_core::ppo::{train::write_reward_curve, train_policy, PolicyCheckpoint, TrainResult};
use mmahc_core::predictors::dataset::measure_traces;
use mmahc_core::predictors::{train_and_evaluate, PredictorBundle, PredictorReport};
use mmahc_core::sim::output::{write_events, write_plot_data, write_run_records, write_summary, write_tick_rows};
use mmahc_core::sim::{
    aggregate_runs, generate_population, run_campaign, run_seed, training_seed, KpiRecord, KpiSummary, RappSource,
    SimModels, SimPolicyEnv, Simulation, UtilityWeights, HEADLINE_KPIS, KPI_NAMES,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CONFIG_ENV: &str = "MMAHC_CONFIG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("missing artifact: {0}")]
    Missing(String),
    #[error(transparent)]
    Runtime(#[from] mmahc_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 validation, 2 missing artifact, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Missing(_) => 2,
            Self::Runtime(_) | Self::Io { .. } => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io<T>(r: std::io::Result<T>, context: impl FnOnce() -> String) -> CliResult<T> {
    r.map_err(|source| CliError::Io {
        context: context(),
        source,
    })
}

fn validation(e: mmahc_core::Error) -> CliError {
    CliError::Validation(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "mmahc", version, about = "Mobility-aware handover control: traces, predictors, policy, campaigns")]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when absent.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated controllers (a3, load_balance, ml_assisted, ahc).
    #[arg(long, global = true, value_delimiter = ',')]
    pub controllers: Option<Vec<String>>,
    /// Campaign runs per controller.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Campaign worker threads (default: available processors).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Config override as a dot path, e.g. `--set sim.n_ues=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the training trace corpus and its manifest.
    GenerateTraces,
    /// Train and evaluate the mode classifier and both forests.
    TrainPredictors,
    /// Train the PPO ranker against the simulator.
    TrainPolicy,
    /// Run one scenario per controller and write per-tick KPIs and events.
    Simulate {
        /// Campaign run index whose scenario to replay.
        #[arg(long, default_value_t = 0)]
        run: usize,
        /// Also dump every A1/E2 message as JSON lines.
        #[arg(long)]
        traffic: bool,
    },
    /// Multi-seed campaign with per-KPI means and 95% CIs.
    Compare,
    /// Print the resolved configuration.
    ShowConfig,
}

/// Config file (or defaults), then `--set` overrides, then the dedicated flags.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let base = match &cli.config {
        Some(p) if !p.is_file() => return Err(CliError::Missing(format!("config file {}", p.display()))),
        Some(p) => RunConfig::load(p).map_err(validation)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(&cli.overrides).map_err(validation)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(list) = &cli.controllers {
        cfg.campaign.controllers = list
            .iter()
            .map(|s| s.parse::<ControllerKind>())
            .collect::<mmahc_core::Result<_>>()
            .map_err(validation)?;
    }
    if let Some(r) = cli.runs {
        cfg.campaign.n_runs = r;
    }
    cfg.validate().map_err(validation)?;
    Ok(cfg)
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Artifact locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            root: cfg.out_dir.clone(),
        }
    }
    pub fn traces(&self) -> PathBuf {
        self.root.join("traces")
    }
    pub fn manifest(&self) -> PathBuf {
        self.traces().join("manifest.json")
    }
    pub fn predictors(&self) -> PathBuf {
        self.root.join("models").join("predictors")
    }
    pub fn policy(&self) -> PathBuf {
        self.root.join("models").join("policy.json")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn sim(&self) -> PathBuf {
        self.root.join("sim")
    }
    pub fn compare(&self) -> PathBuf {
        self.root.join("compare")
    }
}

fn create_dir(p: &Path) -> CliResult<()> {
    io(fs::create_dir_all(p), || format!("cannot create {}", p.display()))
}

fn create_file(p: &Path) -> CliResult<BufWriter<File>> {
    io(File::create(p), || format!("cannot write {}", p.display())).map(BufWriter::new)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub run: usize,
    pub seed: u64,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub n_ues: usize,
    pub n_ticks: usize,
    pub tick_s: f64,
    pub runs: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn cmd_generate_traces(cfg: &RunConfig) -> CliResult<TraceManifest> {
    let layout = Layout::new(cfg);
    let dir = layout.traces();
    create_dir(&dir)?;
    let mut runs = Vec::with_capacity(cfg.training.n_trace_runs);
    for run in 0..cfg.training.n_trace_runs {
        let seed = training_seed(cfg.seed, run);
        let traces = generate_population(&cfg.sim, seed)?;
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &traces)?;
        let file = format!("run_{run:03}.csv");
        let path = dir.join(&file);
        io(fs::write(&path, &buf), || format!("cannot write {}", path.display()))?;
        log::info!("wrote {}", path.display());
        runs.push(ManifestEntry {
            run,
            seed,
            file,
            sha256: sha256_hex(&buf),
        });
    }
    let manifest = TraceManifest {
        n_ues: cfg.sim.n_ues,
        n_ticks: cfg.sim.n_ticks,
        tick_s: cfg.sim.mobility.tick_s,
        runs,
    };
    let mut w = create_file(&layout.manifest())?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(mmahc_core::Error::from)?;
    io(writeln!(w).and_then(|_| w.flush()), || "cannot write manifest".into())?;
    Ok(manifest)
}

pub fn load_manifest(cfg: &RunConfig) -> CliResult<TraceManifest> {
    let path = Layout::new(cfg).manifest();
    let text = fs::read_to_string(&path)
        .map_err(|_| CliError::Missing(format!("trace manifest {} (run generate-traces)", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn cmd_train_predictors(cfg: &RunConfig) -> CliResult<PredictorReport> {
    let layout = Layout::new(cfg);
    let manifest = load_manifest(cfg)?;
    let topology = cfg.sim.topology.build()?;
    let mut traces = Vec::new();
    let mut measured = Vec::new();
    for e in &manifest.runs {
        let path = layout.traces().join(&e.file);
        let bytes = fs::read(&path).map_err(|_| CliError::Missing(format!("trace file {}", path.display())))?;
        if sha256_hex(&bytes) != e.sha256 {
            return Err(CliError::Validation(format!("{} does not match its manifest hash", path.display())));
        }
        let run_traces = read_traces_csv(bytes.as_slice())?;
        let offset = traces.len();
        measured.extend(measure_traces(&topology, &run_traces, e.seed, cfg.sim.topology.decorrelation_m));
        traces.extend(run_traces.into_iter().map(|mut t| {
            t.ue_id += offset;
            t
        }));
    }
    if traces.is_empty() {
        return Err(CliError::Missing("traces listed in the manifest".into()));
    }
    let (bundle, report) = train_and_evaluate(&traces, &measured, &cfg.predictors, cfg.seed)?;
    bundle.save(&layout.predictors())?;
    create_dir(&layout.reports())?;
    let mut w = create_file(&layout.reports().join("predictor_report.json"))?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(mmahc_core::Error::from)?;
    io(w.flush(), || "cannot write predictor report".into())?;
    Ok(report)
}

pub fn load_predictors(cfg: &RunConfig) -> CliResult<PredictorBundle> {
    let dir = Layout::new(cfg).predictors();
    if !PredictorBundle::exists(&dir) {
        return Err(CliError::Missing(format!(
            "predictor checkpoints in {} (run train-predictors)",
            dir.display()
        )));
    }
    Ok(PredictorBundle::load(&dir)?)
}

pub fn load_policy(cfg: &RunConfig) -> CliResult<PolicyCheckpoint> {
    let path = Layout::new(cfg).policy();
    if !path.is_file() {
        return Err(CliError::Missing(format!("policy checkpoint {} (run train-policy)", path.display())));
    }
    Ok(PolicyCheckpoint::load(&path)?)
}

pub fn cmd_train_policy(cfg: &RunConfig) -> CliResult<TrainResult> {
    let layout = Layout::new(cfg);
    let bundle = load_predictors(cfg)?;
    let mut sim = cfg.sim.clone();
    sim.n_ues = cfg.training.policy_ues;
    let weights = UtilityWeights::from_ppo(&cfg.ppo);
    let mut env = SimPolicyEnv::new(&sim, &bundle, weights, cfg.seed, cfg.training.scenario_pool)?;
    let result = train_policy(
        &mut env,
        &cfg.ppo,
        cfg.training.policy_episodes,
        cfg.training.horizon,
        cfg.seed,
    )?;
    create_dir(&layout.reports())?;
    create_dir(layout.policy().parent().expect("policy path has a parent"))?;
    PolicyCheckpoint {
        format_version: mmahc_core::ppo::policy::POLICY_FORMAT_VERSION,
        config: cfg.ppo.clone(),
        policy: result.policy.clone(),
    }
    .save(&layout.policy())?;
    write_reward_curve(create_file(&layout.reports().join("reward_curve.csv"))?, &result.curve)?;
    Ok(result)
}

/// Checkpoints the given controllers need, loaded up front so that every
/// missing artifact is reported at once.
pub struct LoadedModels {
    pub predictors: Option<PredictorBundle>,
    pub policy: Option<PolicyCheckpoint>,
}

impl LoadedModels {
    pub fn for_controllers(cfg: &RunConfig, controllers: &[ControllerKind]) -> CliResult<Self> {
        let need_pred = controllers.iter().any(|c| c.needs_predictors());
        let need_policy = controllers.iter().any(|c| c.needs_policy());
        let mut missing = Vec::new();
        let predictors = if need_pred {
            load_predictors(cfg).map_err(|e| missing.push(e)).ok()
        } else {
            None
        };
        let policy = if need_policy {
            load_policy(cfg).map_err(|e| missing.push(e)).ok()
        } else {
            None
        };
        if !missing.is_empty() {
            if missing.iter().all(|e| matches!(e, CliError::Missing(_))) {
                let list: Vec<String> = missing.iter().map(|e| e.to_string()).collect();
                return Err(CliError::Missing(list.join("; ")));
            }
            return Err(missing.remove(0));
        }
        Ok(Self { predictors, policy })
    }

    pub fn sim_models(&self) -> SimModels<'_> {
        SimModels {
            predictors: self.predictors.as_ref(),
            policy: self.policy.as_ref().map(|p| &p.policy),
        }
    }
}

pub fn cmd_simulate(cfg: &RunConfig, run: usize, traffic: bool) -> CliResult<Vec<KpiRecord>> {
    let layout = Layout::new(cfg);
    let controllers = &cfg.campaign.controllers;
    let models = LoadedModels::for_controllers(cfg, controllers)?;
    create_dir(&layout.sim())?;
    let seed = run_seed(cfg.seed, run);
    let weights = UtilityWeights::from_ppo(&cfg.ppo);
    let mut out = Vec::new();
    for &c in controllers {
        let stem = format!("{c}_run{run:03}");
        let mut sim = Simulation::new(&cfg.sim, c, seed, models.sim_models(), RappSource::None, weights)?;
        if traffic {
            let w = create_file(&layout.sim().join(format!("{stem}_traffic.jsonl")))?;
            sim.set_traffic_dump(Box::new(w));
        }
        let res = sim.finish()?;
        write_tick_rows(create_file(&layout.sim().join(format!("{stem}_ticks.csv")))?, &res.rows)?;
        write_events(create_file(&layout.sim().join(format!("{stem}_events.csv")))?, &res.events)?;
        let mut w = create_file(&layout.sim().join(format!("{stem}_kpi.json")))?;
        serde_json::to_writer_pretty(&mut w, &res.kpi).map_err(mmahc_core::Error::from)?;
        io(w.flush(), || "cannot write KPI record".into())?;
        out.push(res.kpi);
    }
    Ok(out)
}

pub fn cmd_compare(cfg: &RunConfig, workers: usize) -> CliResult<(Vec<KpiRecord>, KpiSummary)> {
    let layout = Layout::new(cfg);
    let controllers = &cfg.campaign.controllers;
    let models = LoadedModels::for_controllers(cfg, controllers)?;
    if workers == 0 {
        return Err(CliError::Validation("--workers must be >= 1".into()));
    }
    if cfg.campaign.n_runs < 2 {
        return Err(CliError::Validation("confidence intervals need campaign.n_runs >= 2".into()));
    }
    let weights = UtilityWeights::from_ppo(&cfg.ppo);
    let records = run_campaign(
        &cfg.sim,
        controllers,
        cfg.campaign.n_runs,
        cfg.seed,
        models.sim_models(),
        weights,
        workers,
    )?;
    let summary = aggregate_runs(&records)?;
    let dir = layout.compare();
    create_dir(&dir)?;
    write_summary(create_file(&dir.join("summary.csv"))?, &summary, cfg.seed, &HEADLINE_KPIS)?;
    write_summary(create_file(&dir.join("summary_all.csv"))?, &summary, cfg.seed, &[])?;
    write_run_records(create_file(&dir.join("runs.csv"))?, &records)?;
    for kpi in KPI_NAMES {
        write_plot_data(create_file(&dir.join(format!("plot_{kpi}.csv")))?, &summary, kpi)?;
    }
    Ok((records, summary))
}

fn print_predictor_report(r: &PredictorReport) {
    use mmahc_core::mobility::MobilityMode;
    println!("train traces {}, test traces {}", r.n_train_traces, r.n_test_traces);
    println!("mode classification accuracy {:.4}", r.classification.accuracy);
    println!("{:<10} {:>9} {:>9} {:>9} {:>8}", "mode", "precision", "recall", "f1", "support");
    for (m, s) in MobilityMode::ALL.iter().zip(&r.classification.per_class) {
        println!(
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            m.label(),
            s.precision,
            s.recall,
            s.f1,
            s.support
        );
    }
    println!("confusion (rows true, cols predicted):");
    for row in &r.classification.confusion {
        println!("  {}", row.iter().map(|v| format!("{v:>6}")).collect::<String>());
    }
    let fmt_r = |v: &[Option<f64>]| {
        v.iter()
            .map(|p| p.map_or("n/a".to_string(), |p| format!("{p:.4}")))
            .collect::<Vec<_>>()
            .join(", ")
    };
    println!(
        "trajectory RMSE {:.3} m (persistence {:.3} m), MAE x/y {:.3}/{:.3} m, pearson x/y {}",
        r.trajectory.rmse,
        r.persistence.rmse,
        r.trajectory.mae_per_dim[0],
        r.trajectory.mae_per_dim[1],
        fmt_r(&r.trajectory.pearson_per_dim)
    );
    println!("RSRP RMSE {:.3} dB, mean bias {:+.3} dB", r.rsrp.rmse, r.rsrp.mean_bias);
}

fn print_summary(s: &KpiSummary) {
    println!("{:<14} {:<22} {:>12} {:>12}", "controller", "kpi", "mean", "ci95");
    for r in &s.rows {
        println!(
            "{:<14} {:<22} {:>12.4} {:>12.4}",
            r.controller.label(),
            r.kpi,
            r.ci.mean,
            r.ci.ci_half_width
        );
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::GenerateTraces => {
            let m = cmd_generate_traces(&cfg)?;
            println!("wrote {} trace files to {}", m.runs.len(), Layout::new(&cfg).traces().display());
        }
        Command::TrainPredictors => print_predictor_report(&cmd_train_predictors(&cfg)?),
        Command::TrainPolicy => {
            let r = cmd_train_policy(&cfg)?;
            if let (Some(first), Some(last)) = (r.curve.first(), r.curve.last()) {
                println!(
                    "{} episodes: mean reward {:.3} -> {:.3}",
                    r.curve.len(),
                    first.mean_reward,
                    last.mean_reward
                );
            }
            println!("policy saved to {}", Layout::new(&cfg).policy().display());
        }
        Command::Simulate { run, traffic } => {
            for k in cmd_simulate(&cfg, run, traffic)? {
                println!(
                    "{:<14} seed {} throughput {:.3} Mbps, HO rate {:.5}, ping-pong {:.2}%",
                    k.controller.label(),
                    k.seed,
                    k.mean_throughput_mbps,
                    k.ho_rate,
                    k.pingpong_pct
                );
            }
        }
        Command::Compare => {
            let (_, s) = cmd_compare(&cfg, cli.workers.unwrap_or_else(default_workers))?;
            print_summary(&s);
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()?),
    }
    Ok(())
}
