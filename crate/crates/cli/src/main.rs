use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use ccf_core::complexity::{benettin_lambda_oracle, score_trajectory, Regime};
use ccf_core::config::{ExperimentConfig, RealDataConfig};
use ccf_core::curriculum::Mode;
use ccf_core::dynamics::SystemSpec;
use ccf_core::evaluation::{
    eq1_horizon, held_out_lorenz, read_results_csv, run_noise_experiment, run_rq2, summarize, train_for_ordering,
    write_results_csv, EvalSet, HeldOut, ResultRow,
};
use ccf_core::library::{
    build_entries, finetune_subset, load_real_series, manifest_digest, read_library, read_manifest, split_series,
    write_library, LibraryEntry, SeriesStats, TRAJECTORY_MAGIC,
};
use ccf_core::model::{finetune, load_checkpoint, save_checkpoint, ModelState, CHECKPOINT_MAGIC};
use ccf_core::{Error, Result};

const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Parser)]
#[command(name = "ccf", version, about = "Complexity-ordered curricula for chaotic forecasting")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON)
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides `output`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Library directory; overrides `library`
    #[arg(long)]
    library: Option<PathBuf>,
    /// Comma-separated seed list; overrides `seeds`
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Curriculum for single-model training; overrides `ordering`
    #[arg(long)]
    ordering: Option<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate every sweep job and write a scored library to --out
    Generate(Common),
    /// Recompute complexity scores of a library
    Score(Common),
    /// Train one model on the library
    Train(Common),
    /// Evaluate a checkpoint on the held-out set (and real data if configured)
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run an experiment
    #[command(subcommand)]
    Experiment(Experiment),
    /// Aggregate results CSVs into mean ± 95% CI tables
    Report {
        /// Results CSV; repeatable
        #[arg(long = "results", required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Experiment {
    /// Train under every ordering and seed, scoring held-out VPH-10 per epoch
    Rq2(Common),
    /// Degradation of VPH-10 under input noise
    Noise {
        #[command(flatten)]
        common: Common,
        /// Score these checkpoints instead of training; repeatable
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
    },
}

#[derive(Serialize, Default)]
struct RunManifest {
    command: String,
    status: String,
    config_digest: Option<String>,
    library_digest: Option<String>,
    seeds: Vec<u64>,
    versions: BTreeMap<&'static str, String>,
    outputs: Vec<String>,
    failures: Vec<String>,
    config: Option<ExperimentConfig>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("ccf", env!("CARGO_PKG_VERSION").to_string());
        versions.insert("ccf-core", ccf_core::VERSION.to_string());
        versions.insert("trajectory_format", String::from_utf8_lossy(TRAJECTORY_MAGIC).into_owned());
        versions.insert("checkpoint_format", String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned());
        RunManifest {
            command: command.to_string(),
            versions,
            ..Default::default()
        }
    }

    fn with_config(&mut self, cfg: &ExperimentConfig) {
        self.config_digest = Some(ccf_core::library::sha256_hex(cfg.to_json().as_bytes()));
        self.seeds = cfg.seeds.clone();
        self.config = Some(cfg.clone());
    }
}

struct Run {
    out: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn output(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn load_library(&mut self, cfg: &ExperimentConfig) -> Result<Vec<LibraryEntry>> {
        let entries = read_library(&cfg.library)?;
        let records: Vec<_> = entries.iter().map(|e| e.record.clone()).collect();
        self.manifest.library_digest = Some(manifest_digest(&records));
        Ok(entries)
    }

    fn finish(&self, status: &str) -> Result<()> {
        let mut manifest = serde_json::to_value(&self.manifest).expect("manifest serializes");
        manifest["status"] = status.into();
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(self.out.join(RUN_MANIFEST), text + "\n")?;
        Ok(())
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(lib) = &common.library {
        cfg.library = lib.clone();
    }
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(o) = common.ordering {
        cfg.ordering = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn held_out(cfg: &ExperimentConfig, window: usize) -> Result<HeldOut> {
    held_out_lorenz(&cfg.held_out.seeds, window, &cfg.eval)
}

fn generate(run: &mut Run, cfg: &ExperimentConfig) -> Result<()> {
    let jobs = cfg.jobs()?;
    if jobs.is_empty() {
        return Err(Error::Config {
            path: "sweeps".into(),
            message: "no generation jobs".into(),
        });
    }
    let (mut entries, failures) = build_entries(&jobs, &cfg.embedding, cfg.weights);
    for (job, err) in &failures {
        run.manifest.failures.push(format!("{} seed {}: {err}", job.spec, job.seed));
    }
    if entries.is_empty() {
        return Err(Error::Generation {
            spec: "all sweeps".into(),
            step: 0,
            reason: "every job failed".into(),
        });
    }
    let digest = write_library(&mut entries, &run.out)?;
    run.manifest.library_digest = Some(digest);
    run.manifest.outputs.push(ccf_core::library::MANIFEST_FILE.into());
    for e in &entries {
        run.manifest.outputs.push(e.record.file.clone());
    }
    println!(
        "wrote {} trajectories ({} failed) to {}",
        entries.len(),
        failures.len(),
        run.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    id: &'a str,
    family: String,
    lambda_max: f64,
    dimension: usize,
    composite: f64,
    regime: Regime,
}

fn score(run: &mut Run, cfg: &ExperimentConfig) -> Result<()> {
    run.load_library(cfg)?;
    let records = read_manifest(&cfg.library)?;
    let entries = read_library(&cfg.library)?;
    let scores: Vec<_> = entries
        .par_iter()
        .map(|e| score_trajectory(&e.trajectory(), &cfg.embedding, cfg.weights))
        .collect();
    let path = run.output("scores.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    for (r, s) in records.iter().zip(&scores) {
        w.serialize(ScoreRow {
            id: &r.id,
            family: r.spec.family.to_string(),
            lambda_max: s.lambda_max,
            dimension: s.dimension,
            composite: s.composite,
            regime: Regime::from_lambda(s.lambda_max),
        })
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush()?;
    println!("scored {} records", records.len());
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Load {
        file: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn train_cmd(run: &mut Run, cfg: &ExperimentConfig) -> Result<()> {
    let library = run.load_library(cfg)?;
    let held = held_out(cfg, cfg.model.window_len)?;
    let seed = cfg.seeds[0];
    let (state, rows) = train_for_ordering(&library, &held, &cfg.rq2(), cfg.ordering, seed)?;
    let rows: Vec<ResultRow> = rows
        .into_iter()
        .map(|r| ResultRow {
            experiment: "train".into(),
            ..r
        })
        .collect();
    save_checkpoint(&state, &run.output("model.ckpt"))?;
    write_results_csv(&run.output("training_log.csv"), &rows)?;
    if let Some(last) = rows.last() {
        println!("{} seed {seed}: final VPH-10 {:.2}", cfg.ordering, last.vph10);
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: String,
    vph10: f64,
    nmse: f64,
    truncated_rollouts: usize,
    one_step_error: f64,
    lambda_max_oracle: f64,
    eq1_horizon_steps: Option<f64>,
    real: Option<RealReport>,
}

#[derive(Serialize)]
struct RealReport {
    series: String,
    skipped_rows: usize,
    vph10_before: f64,
    vph10_after: f64,
    nmse_after: f64,
}

fn eval_real(state: &ModelState, cfg: &ExperimentConfig, real: &RealDataConfig) -> Result<RealReport> {
    let series = load_real_series(&real.path, &real.column)?;
    let (train, test) = split_series(&series.values, real.train_frac)?;
    let stats = SeriesStats::fit(&train)?;
    let (train, test) = (stats.apply(&train), stats.apply(&test));
    let window = state.config.window_len;
    let set = EvalSet::from_scalar(&test, window, &cfg.eval)?;
    let before = set.evaluate(state, &cfg.eval)?;
    let subset = finetune_subset(&train, real.finetune_frac, cfg.seeds[0])?;
    let mut tuned = state.clone();
    finetune(&mut tuned, &subset, &cfg.training)?;
    let after = set.evaluate(&tuned, &cfg.eval)?;
    Ok(RealReport {
        series: series.name,
        skipped_rows: series.skipped_rows.len(),
        vph10_before: before.vph10,
        vph10_after: after.vph10,
        nmse_after: after.nmse,
    })
}

fn eval_cmd(run: &mut Run, cfg: &ExperimentConfig, checkpoint: &Path) -> Result<()> {
    let state = load_checkpoint(checkpoint)?;
    let held = held_out(cfg, state.config.window_len)?;
    let summary = held.set.evaluate(&state, &cfg.eval)?;
    let eps = held.set.one_step_error(&state)?;
    let spec = SystemSpec::lorenz63(10.0, 28.0, 8.0 / 3.0)?;
    let lambda = benettin_lambda_oracle(&spec, &[1.0, 1.0, 1.0], 1000.0, 0.01)?;
    let dt = spec.default_integrator().dt_effective();
    let eq1 = match eq1_horizon(lambda * dt, eps, cfg.eval.vph_threshold_frac) {
        Ok(h) if !h.zero_horizon => Some(h.t_valid),
        Ok(_) => Some(0.0),
        Err(_) => None,
    };
    let real = cfg.real.as_ref().map(|r| eval_real(&state, cfg, r)).transpose()?;
    let report = EvalReport {
        checkpoint: checkpoint.display().to_string(),
        vph10: summary.vph10,
        nmse: summary.nmse,
        truncated_rollouts: summary.truncated,
        one_step_error: eps,
        lambda_max_oracle: lambda,
        eq1_horizon_steps: eq1,
        real,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(run.output("eval.json"), text.clone() + "\n")?;
    println!("{text}");
    Ok(())
}

fn rq2_cmd(run: &mut Run, cfg: &ExperimentConfig) -> Result<()> {
    let library = run.load_library(cfg)?;
    let held = held_out(cfg, cfg.model.window_len)?;
    let rows = run_rq2(&library, &held, &cfg.rq2())?;
    write_results_csv(&run.output("rq2_results.csv"), &rows)?;
    print_summary(&rows);
    Ok(())
}

fn noise_cmd(run: &mut Run, cfg: &ExperimentConfig, checkpoints: &[PathBuf]) -> Result<()> {
    let models: Vec<(String, u64, usize, ModelState)> = if checkpoints.is_empty() {
        let library = run.load_library(cfg)?;
        let held = held_out(cfg, cfg.model.window_len)?;
        let rq2 = cfg.rq2();
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let (state, _) = train_for_ordering(&library, &held, &rq2, cfg.ordering, seed)?;
                Ok((cfg.ordering.name().to_string(), seed, rq2.training.epochs.saturating_sub(1), state))
            })
            .collect::<Result<_>>()?
    } else {
        checkpoints
            .iter()
            .enumerate()
            .map(|(i, p)| Ok(("checkpoint".to_string(), i as u64, 0, load_checkpoint(p)?)))
            .collect::<Result<_>>()?
    };
    let window = models[0].3.config.window_len;
    let held = held_out(cfg, window)?;
    let rows = run_noise_experiment(&models, &held, &cfg.eval, &cfg.noise)?;
    write_results_csv(&run.output("noise_results.csv"), &rows)?;
    print_summary(&rows);
    Ok(())
}

fn print_summary(rows: &[ResultRow]) {
    for s in summarize(rows) {
        println!(
            "{:<6} {:<11} σ={:<5} VPH-10 {:7.2} ± {:5.2}  NMSE {:.4} ± {:.4}  (n={})",
            s.experiment, s.ordering, s.sigma_noise, s.vph10_mean, s.vph10_ci95, s.nmse_mean, s.nmse_ci95, s.n
        );
    }
}

fn report_cmd(run: &mut Run, results: &[PathBuf]) -> Result<()> {
    let mut rows = Vec::new();
    for p in results {
        rows.extend(read_results_csv(p)?);
    }
    let summary = summarize(&rows);
    let path = run.output("report.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    for s in &summary {
        w.serialize(s).map_err(|e| csv_error(&path, e))?;
    }
    w.flush()?;
    print_summary(&rows);
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    let (name, common) = match &command {
        Command::Generate(c) => ("generate", Some(c)),
        Command::Score(c) => ("score", Some(c)),
        Command::Train(c) => ("train", Some(c)),
        Command::Eval { common, .. } => ("eval", Some(common)),
        Command::Experiment(Experiment::Rq2(c)) => ("experiment rq2", Some(c)),
        Command::Experiment(Experiment::Noise { common, .. }) => ("experiment noise", Some(common)),
        Command::Report { .. } => ("report", None),
    };
    let cfg = common.map(load_config).transpose()?;
    let out = match (&command, &cfg) {
        (Command::Report { out, .. }, _) => out.clone(),
        (_, Some(cfg)) => cfg.output.clone(),
        _ => unreachable!(),
    };
    fs::create_dir_all(&out)?;
    let mut run = Run {
        out,
        manifest: RunManifest::new(name),
    };
    if let Some(cfg) = &cfg {
        run.manifest.with_config(cfg);
    }

    let result = match (&command, &cfg) {
        (Command::Generate(_), Some(cfg)) => generate(&mut run, cfg),
        (Command::Score(_), Some(cfg)) => score(&mut run, cfg),
        (Command::Train(_), Some(cfg)) => train_cmd(&mut run, cfg),
        (Command::Eval { checkpoint, .. }, Some(cfg)) => eval_cmd(&mut run, cfg, checkpoint),
        (Command::Experiment(Experiment::Rq2(_)), Some(cfg)) => rq2_cmd(&mut run, cfg),
        (Command::Experiment(Experiment::Noise { checkpoint, .. }), Some(cfg)) => noise_cmd(&mut run, cfg, checkpoint),
        (Command::Report { results, .. }, _) => report_cmd(&mut run, results),
        _ => unreachable!(),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error: {e}"),
    };
    run.finish(&status)?;
    result
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("CCF_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Argument(format!("CCF_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match configure_threads().and_then(|()| execute(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
