//! Command-line front end: demo collection, training, evaluation,
//! matched-seed comparisons, the three sweep tables, gradient verification,
//! and a fast self-test.
//!
//! Relative output paths are resolved against the `IMLAB_OUT` environment
//! variable when it is set.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use imlab::active::{run_active_learning, run_dart, run_rand_on_policy, ActiveLearningConfig};
use imlab::control::{run_episode, ControllerConfig, ControllerKind};
use imlab::envs::{sample_instances, EnvKind};
use imlab::error::Result;
use imlab::failure::{evaluate_failure_prediction, FailureMonitorConfig};
use imlab::harness::{
    compare, comparison_csv, derive_seed, experiment_metrics_csv, gamma_csv, imagination_csv,
    resolve_output_path, run_experiment, sweep_gamma, sweep_imagination, sweep_uthr, uthr_csv,
    write_text, ExperimentConfig, ExperimentReport, Method, SeedOutcome, PURPOSE_PLAN,
    PURPOSE_TEST,
};
use imlab::models::{DatasetFile, ModelBundle, TrainConfig};
use imlab::numkit::{gradcheck_suite, Rng};
use imlab::uncertainty::{calibrate_threshold, DEFAULT_ROLLOUT_STEPS};

#[derive(Parser)]
#[command(
    name = "imlab",
    version,
    about = "Imitation-learning lab: uncertainty-triggered demonstration requests, \
             hybrid control, and failure prediction on 2D manipulation tasks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Collect demonstrations with one of the four methods (the takeover
    /// methods train models as a side effect; save them with --bundle).
    Collect(CollectArgs),
    /// Train policy, dynamics, and reconstruction models from a dataset.
    Train(TrainArgs),
    /// Evaluate a trained bundle on freshly sampled test tasks.
    Eval(EvalArgs),
    /// Run a full multi-seed experiment from a config file.
    Experiment(ExperimentArgs),
    /// Compare two experiment reports seed by seed.
    Compare(CompareArgs),
    /// Mean test successes across active-demo ratios.
    SweepGamma(SweepGammaArgs),
    /// Active vs passive success counts across threshold multipliers.
    SweepUthr(SweepUthrArgs),
    /// Failure-prediction quality across imagination horizons.
    SweepImagination(SweepImaginationArgs),
    /// Finite-difference verification of the network gradients.
    Gradcheck(GradcheckArgs),
    /// Fast end-to-end property checks; nonzero exit on any failure.
    Selftest,
}

#[derive(Args)]
struct CollectArgs {
    /// point_reach or push_block.
    #[arg(long)]
    env: EnvKind,
    /// passive, active, rand_on_policy, or dart.
    #[arg(long)]
    method: Method,
    /// Total demonstration budget.
    #[arg(long, default_value_t = 40)]
    n: usize,
    /// Fraction of the budget collected via takeovers (active methods).
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Takeover demos between retrainings.
    #[arg(long, default_value_t = 5)]
    retrain_every: usize,
    /// Trigger threshold as a multiple of the mean training energy.
    #[arg(long, default_value_t = 1.5)]
    u_thr_mult: f64,
    /// Imagination horizon of the trigger check.
    #[arg(long, default_value_t = DEFAULT_ROLLOUT_STEPS)]
    rollout_steps: usize,
    /// Executed-action noise for dart.
    #[arg(long, default_value_t = 0.01)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset destination (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Also save the models trained during collection.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Also save the per-demo collection log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset produced by collect (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Bundle destination (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained bundle (JSON).
    #[arg(long)]
    bundle: PathBuf,
    /// bc_only or hybrid.
    #[arg(long, default_value = "bc_only")]
    controller: ControllerKind,
    /// Number of test tasks.
    #[arg(long, default_value_t = 50)]
    m: usize,
    /// Master seed; test tasks and planner noise match an experiment run
    /// with this master seed at seed index 0.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plan weight for the hybrid controller.
    #[arg(long)]
    beta: Option<f64>,
    /// Run the twin-run failure evaluation too (needs --data to calibrate).
    #[arg(long, default_value_t = false)]
    monitor: bool,
    /// Monitor imagination horizon.
    #[arg(long)]
    rollout_steps: Option<usize>,
    /// Monitor threshold multiplier.
    #[arg(long, default_value_t = 1.5)]
    u_thr_mult: f64,
    /// Training dataset for threshold calibration.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Save per-episode results (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (TOML); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    controller: Option<ControllerKind>,
    #[arg(long)]
    n_seeds: Option<u64>,
    #[arg(long)]
    test_set_size: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Override the total demonstration budget.
    #[arg(long)]
    n_total: Option<usize>,
    /// Override the active-demo ratio.
    #[arg(long)]
    gamma: Option<f64>,
    /// Report destination; overrides the config's output_path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-seed metrics table (CSV).
    #[arg(long)]
    metrics_csv: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    report_a: PathBuf,
    report_b: PathBuf,
    /// Write the per-seed table (CSV).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepGammaArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ratios to sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    gammas: Vec<f64>,
    /// CSV destination (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepUthrArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Threshold multipliers to sweep (each > 1).
    #[arg(long, value_delimiter = ',', required = true)]
    mults: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepImaginationArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Imagination horizons to sweep (0 scores the current state only).
    #[arg(long, value_delimiter = ',', required = true)]
    steps: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Collect(a) => cmd_collect(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Experiment(a) => cmd_experiment(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::SweepGamma(a) => cmd_sweep_gamma(a),
        Cmd::SweepUthr(a) => cmd_sweep_uthr(a),
        Cmd::SweepImagination(a) => cmd_sweep_imagination(a),
        Cmd::Gradcheck(a) => cmd_gradcheck(a),
        Cmd::Selftest => return cmd_selftest(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_collect(a: CollectArgs) -> Result<ExitCode> {
    let cfg = ActiveLearningConfig {
        n_total: a.n,
        active_ratio: match a.method {
            Method::Active | Method::RandOnPolicy => a.gamma,
            Method::Passive | Method::Dart => 0.0,
        },
        retrain_every: a.retrain_every,
        u_thr_mult: a.u_thr_mult,
        rollout_steps: a.rollout_steps,
        seed: a.seed,
        train: TrainConfig::default(),
    };
    let (bundle, dataset, log) = match a.method {
        Method::Active | Method::Passive => run_active_learning(a.env, &cfg)?,
        Method::RandOnPolicy => run_rand_on_policy(a.env, &cfg)?,
        Method::Dart => run_dart(a.env, &cfg, a.noise_std)?,
    };

    let out = resolve_output_path(&a.out);
    ensure_parent(&out)?;
    DatasetFile::save(&dataset, &out)?;
    println!(
        "collected {} demos ({} transitions) on {} via {}; dataset -> {}",
        dataset.trajectories.len(),
        dataset.n_transitions(),
        a.env,
        a.method,
        out.display()
    );
    if !log.records.is_empty() {
        println!(
            "takeover demos: {} (thresholds per round: {:?})",
            log.records.len(),
            log.round_thresholds
        );
    }
    if let Some(path) = a.bundle {
        let path = resolve_output_path(&path);
        ensure_parent(&path)?;
        bundle.save(&path)?;
        println!("models -> {}", path.display());
    }
    if let Some(path) = a.log {
        write_text(&path, &serde_json::to_string_pretty(&log)?)?;
        println!("collection log -> {}", resolve_output_path(&path).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let dataset = DatasetFile::load(&a.data)?;
    let mut cfg = TrainConfig::default();
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let bundle = ModelBundle::train(&dataset, &cfg)?;
    let out = resolve_output_path(&a.out);
    ensure_parent(&out)?;
    bundle.save(&out)?;
    println!(
        "trained on {} demos ({} transitions, {}); bundle -> {}",
        dataset.trajectories.len(),
        dataset.n_transitions(),
        dataset.env,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let bundle = ModelBundle::load(&a.bundle)?;
    let env = bundle.env;

    let mut ctrl = ControllerConfig::default();
    if let Some(beta) = a.beta {
        ctrl.beta = beta;
    }
    ctrl.planner.seed = derive_seed(a.seed, 0, PURPOSE_PLAN);
    ctrl.validate()?;

    let mut test_rng = Rng::new(derive_seed(a.seed, 0, PURPOSE_TEST));
    let instances = sample_instances(&mut test_rng, a.m, env);

    let mut episodes = Vec::with_capacity(instances.len());
    for inst in &instances {
        episodes.push(run_episode(env, inst, a.controller, &bundle, &ctrl, None)?);
    }
    let successes = episodes.iter().filter(|e| e.success).count();
    let mean_steps =
        episodes.iter().map(|e| e.steps as f64).sum::<f64>() / episodes.len().max(1) as f64;
    println!(
        "{} with {}: {successes}/{} successes, mean {mean_steps:.1} steps",
        env, a.controller, a.m
    );

    if a.monitor {
        let data = a.data.as_ref().ok_or_else(|| {
            imlab::error::Error::InvalidConfig(
                "--monitor needs --data for threshold calibration".into(),
            )
        })?;
        let dataset = DatasetFile::load(data)?;
        let threshold = calibrate_threshold(&bundle.dae, &dataset, a.u_thr_mult)?;
        let monitor = FailureMonitorConfig {
            threshold,
            rollout_steps: a.rollout_steps.unwrap_or(DEFAULT_ROLLOUT_STEPS),
            enabled: true,
        };
        let report = evaluate_failure_prediction(
            env,
            &instances,
            &bundle,
            a.controller,
            &ctrl,
            &[monitor],
        )?
        .pop()
        .expect("one report per config");
        println!(
            "failure prediction at {} imagined steps: precision {:.3}, recall {:.3}, f1 {:.3}, \
             mean trigger step {:.1} ({} tp, {} fp, {} fn, {} tn)",
            report.rollout_steps,
            report.precision,
            report.recall,
            report.f1,
            report.mean_steps_to_predict,
            report.true_positives,
            report.false_positives,
            report.false_negatives,
            report.true_negatives,
        );
    }

    if let Some(path) = a.out {
        write_text(&path, &serde_json::to_string_pretty(&episodes)?)?;
        println!("episodes -> {}", resolve_output_path(&path).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn load_or_default_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn cmd_experiment(a: ExperimentArgs) -> Result<ExitCode> {
    let mut cfg = load_or_default_config(&a.config)?;
    if let Some(v) = a.env {
        cfg.env = v;
    }
    if let Some(v) = a.method {
        cfg.method = v;
    }
    if let Some(v) = a.controller {
        cfg.controller = v;
    }
    if let Some(v) = a.n_seeds {
        cfg.n_seeds = v;
    }
    if let Some(v) = a.test_set_size {
        cfg.test_set_size = v;
    }
    if let Some(v) = a.master_seed {
        cfg.master_seed = v;
    }
    if let Some(v) = a.n_total {
        cfg.active.n_total = v;
    }
    if let Some(v) = a.gamma {
        cfg.active.active_ratio = v;
    }
    if let Some(v) = a.out {
        cfg.output_path = Some(v);
    }

    let report = run_experiment(&cfg)?;
    print_experiment_summary(&report);
    if let Some(path) = &cfg.output_path {
        println!("report -> {}", resolve_output_path(path).display());
    }
    if let Some(path) = a.metrics_csv {
        write_text(&path, &experiment_metrics_csv(&report))?;
        println!("metrics -> {}", resolve_output_path(&path).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn print_experiment_summary(report: &ExperimentReport) {
    let cfg = &report.config;
    println!(
        "{} / {} / {}: {} seeds x {} test tasks",
        cfg.env, cfg.method, cfg.controller, cfg.n_seeds, cfg.test_set_size
    );
    let mut completed = Vec::new();
    for s in &report.seeds {
        match &s.outcome {
            SeedOutcome::Completed(m) => {
                completed.push(m.successes);
                let failure = m
                    .failure
                    .as_ref()
                    .map(|f| format!(", f1 {:.3}", f.f1))
                    .unwrap_or_default();
                println!(
                    "  seed {}: {}/{} successes{failure}",
                    s.seed_index, m.successes, cfg.test_set_size
                );
            }
            SeedOutcome::Failed { diagnostic } => {
                println!("  seed {}: FAILED ({diagnostic})", s.seed_index);
            }
        }
    }
    if !completed.is_empty() {
        let mean = completed.iter().sum::<usize>() as f64 / completed.len() as f64;
        println!(
            "mean successes {mean:.2} over {} completed seeds ({} failed)",
            completed.len(),
            report.seeds.len() - completed.len()
        );
    }
}

fn cmd_compare(a: CompareArgs) -> Result<ExitCode> {
    let ra = ExperimentReport::load(&a.report_a)?;
    let rb = ExperimentReport::load(&a.report_b)?;
    let table = compare(&ra, &rb)?;
    println!("A = {}, B = {}", table.label_a, table.label_b);
    for row in &table.per_seed {
        let mark = match row.outcome {
            imlab::harness::CompareOutcome::WinA => "A",
            imlab::harness::CompareOutcome::WinB => "B",
            imlab::harness::CompareOutcome::Tie => "tie",
        };
        println!(
            "  seed {}: {} vs {} -> {mark}",
            row.seed_index, row.successes_a, row.successes_b
        );
    }
    println!(
        "A wins {} ({:.0}%), B wins {} ({:.0}%), ties {}",
        table.wins_a, table.win_pct_a, table.wins_b, table.win_pct_b, table.ties
    );
    if let Some(path) = a.csv {
        write_text(&path, &comparison_csv(&table))?;
        println!("table -> {}", resolve_output_path(&path).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn emit_csv(csv: &str, out: Option<&Path>) -> Result<()> {
    print!("{csv}");
    if let Some(path) = out {
        write_text(path, csv)?;
        println!("csv -> {}", resolve_output_path(path).display());
    }
    Ok(())
}

fn cmd_sweep_gamma(a: SweepGammaArgs) -> Result<ExitCode> {
    let base = load_or_default_config(&a.config)?;
    let sweep = sweep_gamma(&base, &a.gammas)?;
    emit_csv(&gamma_csv(&sweep), a.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep_uthr(a: SweepUthrArgs) -> Result<ExitCode> {
    let base = load_or_default_config(&a.config)?;
    let sweep = sweep_uthr(&base, &a.mults)?;
    emit_csv(&uthr_csv(&sweep), a.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep_imagination(a: SweepImaginationArgs) -> Result<ExitCode> {
    let base = load_or_default_config(&a.config)?;
    let sweep = sweep_imagination(&base, &a.steps)?;
    emit_csv(&imagination_csv(&sweep), a.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let worst = gradcheck_suite(a.trials, a.seed)?;
    println!(
        "worst gradient discrepancy over {} random architectures: {worst:.3e}",
        a.trials
    );
    if worst < 1e-4 {
        println!("PASS (tolerance 1e-4)");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAIL (tolerance 1e-4)");
        Ok(ExitCode::FAILURE)
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

mod selftest;

fn cmd_selftest() -> ExitCode {
    selftest::run_all()
}
