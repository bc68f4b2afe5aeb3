//! Experiment orchestration: seeded configs, the four collection methods
//! behind one runner, matched-seed comparisons, parameter sweeps, and
//! byte-stable CSV output.
//!
//! Seed scheme: a config carries one `master_seed`; every random stream is
//! `Rng::from_parts(master_seed, &[seed_index, purpose]).next_u64()` with a
//! fixed purpose tag per use (collection, test set, planner). Methods only
//! ever consume their own collection stream, so adding or reordering methods
//! never perturbs another method's data, and every method at a given seed
//! index is evaluated on the same test instances.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::{
    run_active_learning, run_dart, run_rand_on_policy, ActiveLearningConfig, CollectionLog,
};
use crate::control::{run_episode, ControllerConfig, ControllerKind, EpisodeResult};
use crate::envs::{sample_instances, EnvKind, TaskInstance};
use crate::error::{Error, Result};
use crate::failure::{evaluate_failure_prediction, FailureMonitorConfig, FailureReport};
use crate::models::{DemoDataset, ModelBundle};
use crate::numkit::Rng;
use crate::uncertainty::{calibrate_threshold, CalibratedThreshold, DEFAULT_ROLLOUT_STEPS};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the directory that relative output paths are
/// resolved against. Absolute paths are used as-is.
pub const OUTPUT_ROOT_ENV: &str = "IMLAB_OUT";

/// Purpose tags for per-seed stream derivation. See the module docs.
pub const PURPOSE_COLLECT: u64 = 0x51;
pub const PURPOSE_TEST: u64 = 0x52;
pub const PURPOSE_PLAN: u64 = 0x53;

/// One stream seed for (experiment seed index, purpose).
pub fn derive_seed(master_seed: u64, seed_index: u64, purpose: u64) -> u64 {
    Rng::from_parts(master_seed, &[seed_index, purpose]).next_u64()
}

/// Resolves a report/CSV path against the `IMLAB_OUT` root if it is relative.
pub fn resolve_output_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(path),
        None => path.to_path_buf(),
    }
}

/// Writes text to `path` (resolved via [`resolve_output_path`]), creating
/// parent directories. Returns the path actually written.
pub fn write_text(path: &Path, content: &str) -> Result<PathBuf> {
    let resolved = resolve_output_path(path);
    if let Some(parent) = resolved.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&resolved, content)?;
    Ok(resolved)
}

/// Data-collection method under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// All demos from freshly sampled tasks (the PL baseline).
    Passive,
    /// Uncertainty-triggered expert takeovers (AL).
    Active,
    /// Takeovers at a uniformly random step.
    RandOnPolicy,
    /// Noise-injected expert demos.
    Dart,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Passive => "passive",
            Method::Active => "active",
            Method::RandOnPolicy => "rand_on_policy",
            Method::Dart => "dart",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "passive" | "pl" => Ok(Method::Passive),
            "active" | "al" => Ok(Method::Active),
            "rand_on_policy" | "rand-on-policy" => Ok(Method::RandOnPolicy),
            "dart" => Ok(Method::Dart),
            other => Err(Error::InvalidConfig(format!(
                "unknown method '{other}' (expected passive, active, rand_on_policy, or dart)"
            ))),
        }
    }
}

/// Config-file view of the failure monitor. The calibrated threshold is data
/// dependent, so it is derived per seed from the trained DAE and the
/// config's `u_thr_mult`; only the structural knobs live here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorSettings {
    /// Run the twin-run failure evaluation alongside the plain evaluation.
    pub enabled: bool,
    /// Imagination horizon of the monitor (0 scores the current state only).
    pub rollout_steps: usize,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            rollout_steps: DEFAULT_ROLLOUT_STEPS,
        }
    }
}

/// Everything one experiment needs: a complete round of data collection,
/// training, and testing is reproducible from this struct alone (plus the
/// tool version).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub env: EnvKind,
    pub method: Method,
    pub controller: ControllerKind,
    pub active: ActiveLearningConfig,
    pub control: ControllerConfig,
    pub monitor: MonitorSettings,
    /// Executed-action noise for the DART method; ignored elsewhere.
    pub dart_noise_std: f64,
    /// Test instances per seed (M).
    pub test_set_size: usize,
    pub n_seeds: u64,
    pub master_seed: u64,
    /// Where `run_experiment` persists the report; skipped when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            env: EnvKind::PushBlock,
            method: Method::Active,
            controller: ControllerKind::BcOnly,
            active: ActiveLearningConfig::default(),
            control: ControllerConfig::default(),
            monitor: MonitorSettings::default(),
            dart_noise_std: 0.01,
            test_set_size: 50,
            n_seeds: 10,
            master_seed: 0,
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                expected: CONFIG_SCHEMA_VERSION,
            });
        }
        if self.controller == ControllerKind::Expert {
            return Err(Error::InvalidConfig(
                "experiments evaluate learned controllers (bc_only or hybrid), not the expert"
                    .into(),
            ));
        }
        if self.test_set_size == 0 {
            return Err(Error::InvalidConfig("test_set_size must be >= 1".into()));
        }
        if self.n_seeds == 0 {
            return Err(Error::InvalidConfig("n_seeds must be >= 1".into()));
        }
        if !self.dart_noise_std.is_finite() || self.dart_noise_std < 0.0 {
            return Err(Error::InvalidConfig(
                "dart_noise_std must be finite and >= 0".into(),
            ));
        }
        self.active.validate()?;
        self.control.validate()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &toml::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything measured for one completed seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub successes: usize,
    pub episodes: Vec<EpisodeResult>,
    pub collection: CollectionLog,
    pub threshold: CalibratedThreshold,
    /// Twin-run failure evaluation at the configured monitor settings; only
    /// present when the monitor is enabled.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<FailureReport>,
}

impl SeedMetrics {
    /// Mean episode length over the test set.
    pub fn mean_steps(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(|e| e.steps as f64).sum::<f64>() / self.episodes.len() as f64
    }

    /// Mean per-step energy over every state visited during evaluation.
    pub fn mean_energy(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for e in &self.episodes {
            for &u in &e.uncertainty_trace {
                sum += u;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Per-seed result: either full metrics or the error that aborted the seed.
/// One failing seed never takes down its siblings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedOutcome {
    Completed(SeedMetrics),
    Failed { diagnostic: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed_index: u64,
    pub collection_seed: u64,
    pub planner_seed: u64,
    pub test_seed: u64,
    /// Order-sensitive hash of the test instances; `compare` requires it to
    /// match per seed so wins are attributed on identical tasks.
    pub test_fingerprint: u64,
    pub outcome: SeedOutcome,
}

impl SeedRecord {
    pub fn successes(&self) -> Option<usize> {
        match &self.outcome {
            SeedOutcome::Completed(m) => Some(m.successes),
            SeedOutcome::Failed { .. } => None,
        }
    }
}

/// Full artifact of one experiment; the config echo plus tool version
/// reproduce every number in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedRecord>,
}

impl ExperimentReport {
    pub fn save(&self, path: &Path) -> Result<PathBuf> {
        write_text(path, &serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let report: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: report.schema_version,
                expected: REPORT_SCHEMA_VERSION,
            });
        }
        for s in &report.seeds {
            if let Some(n) = s.successes() {
                if n > report.config.test_set_size {
                    return Err(Error::ReportMismatch(format!(
                        "seed {} reports {} successes on {} test instances",
                        s.seed_index, n, report.config.test_set_size
                    )));
                }
            }
        }
        Ok(report)
    }
}

/// FNV-1a over the exact bit patterns of every instance coordinate, in order.
pub fn fingerprint_instances(instances: &[TaskInstance]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: [u8; 8]| {
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for inst in instances {
        for v in inst.start.iter().chain(inst.goal.iter()) {
            eat(v.to_bits().to_le_bytes());
        }
    }
    h
}

/// Trained models plus the fixed evaluation context for one seed.
struct SeedSetup {
    bundle: ModelBundle,
    #[allow(dead_code)]
    dataset: DemoDataset,
    collection: CollectionLog,
    threshold: CalibratedThreshold,
    ctrl: ControllerConfig,
    instances: Vec<TaskInstance>,
}

fn prepare_seed(cfg: &ExperimentConfig, seed_index: u64) -> Result<SeedSetup> {
    let collection_seed = derive_seed(cfg.master_seed, seed_index, PURPOSE_COLLECT);
    let planner_seed = derive_seed(cfg.master_seed, seed_index, PURPOSE_PLAN);
    let test_seed = derive_seed(cfg.master_seed, seed_index, PURPOSE_TEST);

    let mut al = cfg.active.clone();
    al.seed = collection_seed;
    let (bundle, dataset, collection) = match cfg.method {
        Method::Active => run_active_learning(cfg.env, &al)?,
        Method::RandOnPolicy => run_rand_on_policy(cfg.env, &al)?,
        Method::Passive => {
            // The whole budget collected passively, whatever ratio the
            // config carries for the other methods.
            al.active_ratio = 0.0;
            run_active_learning(cfg.env, &al)?
        }
        Method::Dart => {
            al.active_ratio = 0.0;
            run_dart(cfg.env, &al, cfg.dart_noise_std)?
        }
    };

    // Recomputed on the final dataset/DAE; for active runs this equals the
    // last round's recalibration.
    let threshold = calibrate_threshold(&bundle.dae, &dataset, cfg.active.u_thr_mult)?;

    let mut ctrl = cfg.control.clone();
    ctrl.planner.seed = planner_seed;

    let mut test_rng = Rng::new(test_seed);
    let instances = sample_instances(&mut test_rng, cfg.test_set_size, cfg.env);

    Ok(SeedSetup {
        bundle,
        dataset,
        collection,
        threshold,
        ctrl,
        instances,
    })
}

fn run_seed_metrics(cfg: &ExperimentConfig, setup: SeedSetup) -> Result<SeedMetrics> {
    let mut episodes = Vec::with_capacity(setup.instances.len());
    for inst in &setup.instances {
        episodes.push(run_episode(
            cfg.env,
            inst,
            cfg.controller,
            &setup.bundle,
            &setup.ctrl,
            None,
        )?);
    }
    let successes = episodes.iter().filter(|e| e.success).count();

    let failure = if cfg.monitor.enabled {
        let monitor = FailureMonitorConfig {
            threshold: setup.threshold,
            rollout_steps: cfg.monitor.rollout_steps,
            enabled: true,
        };
        let mut reports = evaluate_failure_prediction(
            cfg.env,
            &setup.instances,
            &setup.bundle,
            cfg.controller,
            &setup.ctrl,
            &[monitor],
        )?;
        reports.pop()
    } else {
        None
    };

    Ok(SeedMetrics {
        successes,
        episodes,
        collection: setup.collection,
        threshold: setup.threshold,
        failure,
    })
}

fn run_seed(cfg: &ExperimentConfig, seed_index: u64) -> SeedRecord {
    let collection_seed = derive_seed(cfg.master_seed, seed_index, PURPOSE_COLLECT);
    let planner_seed = derive_seed(cfg.master_seed, seed_index, PURPOSE_PLAN);
    let test_seed = derive_seed(cfg.master_seed, seed_index, PURPOSE_TEST);
    // The fingerprint is computable even when the seed later fails.
    let mut test_rng = Rng::new(test_seed);
    let instances = sample_instances(&mut test_rng, cfg.test_set_size, cfg.env);
    let test_fingerprint = fingerprint_instances(&instances);

    let outcome = match prepare_seed(cfg, seed_index).and_then(|s| run_seed_metrics(cfg, s)) {
        Ok(metrics) => SeedOutcome::Completed(metrics),
        Err(e) => SeedOutcome::Failed {
            diagnostic: e.to_string(),
        },
    };

    SeedRecord {
        seed_index,
        collection_seed,
        planner_seed,
        test_seed,
        test_fingerprint,
        outcome,
    }
}

/// Runs every seed of an experiment (collection, training, evaluation) and
/// persists the report when the config names an output path. A module error
/// aborts only the seed it hit; the diagnostic lands in that seed's record.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let seeds = (0..cfg.n_seeds).map(|i| run_seed(cfg, i)).collect();
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seeds,
    };
    if let Some(path) = &cfg.output_path {
        report.save(path)?;
    }
    Ok(report)
}

fn csv_field(s: &str) -> String {
    s.replace(['\n', '\r'], " ").replace(',', ";")
}

/// Canonical per-seed metrics table. Fixed header, `\n` line endings, floats
/// through Rust's shortest-roundtrip formatter: byte-stable across platforms
/// and reruns of the same config.
pub fn experiment_metrics_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("seed,successes,test_set_size,mean_steps,mean_energy,error\n");
    for s in &report.seeds {
        match &s.outcome {
            SeedOutcome::Completed(m) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},",
                    s.seed_index,
                    m.successes,
                    report.config.test_set_size,
                    m.mean_steps(),
                    m.mean_energy()
                );
            }
            SeedOutcome::Failed { diagnostic } => {
                let _ = writeln!(
                    out,
                    "{},,{},,,{}",
                    s.seed_index,
                    report.config.test_set_size,
                    csv_field(diagnostic)
                );
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareOutcome {
    WinA,
    WinB,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed_index: u64,
    pub successes_a: usize,
    pub successes_b: usize,
    pub outcome: CompareOutcome,
}

/// Head-to-head result on matched seeds and test sets. Win percentages are
/// over non-tied seeds (both 0 when every seed ties); ties get their own
/// column since a two-way split does not define them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub label_a: String,
    pub label_b: String,
    pub per_seed: Vec<SeedComparison>,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    pub win_pct_a: f64,
    pub win_pct_b: f64,
}

/// Attributes each matched seed to whichever report completed more test
/// instances. Rejects reports whose seeds, environments, test sizes, or
/// per-seed test fingerprints differ, and any seed that did not complete.
pub fn compare(a: &ExperimentReport, b: &ExperimentReport) -> Result<ComparisonTable> {
    if a.config.env != b.config.env {
        return Err(Error::ReportMismatch(format!(
            "environments differ: {} vs {}",
            a.config.env, b.config.env
        )));
    }
    if a.config.test_set_size != b.config.test_set_size {
        return Err(Error::ReportMismatch(format!(
            "test set sizes differ: {} vs {}",
            a.config.test_set_size, b.config.test_set_size
        )));
    }
    if a.seeds.len() != b.seeds.len() {
        return Err(Error::ReportMismatch(format!(
            "seed counts differ: {} vs {}",
            a.seeds.len(),
            b.seeds.len()
        )));
    }

    let mut per_seed = Vec::with_capacity(a.seeds.len());
    let (mut wins_a, mut wins_b, mut ties) = (0, 0, 0);
    for (sa, sb) in a.seeds.iter().zip(&b.seeds) {
        if sa.seed_index != sb.seed_index {
            return Err(Error::ReportMismatch(format!(
                "seed indices differ: {} vs {}",
                sa.seed_index, sb.seed_index
            )));
        }
        if sa.test_fingerprint != sb.test_fingerprint {
            return Err(Error::ReportMismatch(format!(
                "test sets differ at seed {}",
                sa.seed_index
            )));
        }
        let (na, nb) = match (sa.successes(), sb.successes()) {
            (Some(na), Some(nb)) => (na, nb),
            _ => {
                return Err(Error::ReportMismatch(format!(
                    "seed {} did not complete in both reports",
                    sa.seed_index
                )))
            }
        };
        let outcome = match na.cmp(&nb) {
            std::cmp::Ordering::Greater => {
                wins_a += 1;
                CompareOutcome::WinA
            }
            std::cmp::Ordering::Less => {
                wins_b += 1;
                CompareOutcome::WinB
            }
            std::cmp::Ordering::Equal => {
                ties += 1;
                CompareOutcome::Tie
            }
        };
        per_seed.push(SeedComparison {
            seed_index: sa.seed_index,
            successes_a: na,
            successes_b: nb,
            outcome,
        });
    }

    let contested = wins_a + wins_b;
    let (win_pct_a, win_pct_b) = if contested == 0 {
        (0.0, 0.0)
    } else {
        (
            100.0 * wins_a as f64 / contested as f64,
            100.0 * wins_b as f64 / contested as f64,
        )
    };

    Ok(ComparisonTable {
        label_a: format!("{}@{}", a.config.method, a.config.env),
        label_b: format!("{}@{}", b.config.method, b.config.env),
        per_seed,
        wins_a,
        wins_b,
        ties,
        win_pct_a,
        win_pct_b,
    })
}

pub fn comparison_csv(table: &ComparisonTable) -> String {
    let mut out = String::from("seed,successes_a,successes_b,outcome\n");
    for row in &table.per_seed {
        let o = match row.outcome {
            CompareOutcome::WinA => "win_a",
            CompareOutcome::WinB => "win_b",
            CompareOutcome::Tie => "tie",
        };
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.seed_index, row.successes_a, row.successes_b, o
        );
    }
    out
}

/// Per-seed success counts aggregated for one sweep setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// Successes of each completed seed, in seed order.
    pub per_seed_successes: Vec<usize>,
    pub n_failed: usize,
    pub total_successes: usize,
    /// Mean over completed seeds; 0 when every seed failed.
    pub mean_successes: f64,
}

impl SweepCell {
    fn from_report(report: &ExperimentReport) -> Self {
        let per_seed: Vec<usize> = report.seeds.iter().filter_map(|s| s.successes()).collect();
        let n_failed = report.seeds.len() - per_seed.len();
        let total: usize = per_seed.iter().sum();
        let mean = if per_seed.is_empty() {
            0.0
        } else {
            total as f64 / per_seed.len() as f64
        };
        SweepCell {
            per_seed_successes: per_seed,
            n_failed,
            total_successes: total,
            mean_successes: mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub cell: SweepCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSweepReport {
    pub rows: Vec<GammaRow>,
}

/// Matched-seed active-learning runs across demonstration ratios. Every
/// entry must satisfy the budget-split invariants against the base config's
/// total; the first offender rejects the call.
pub fn sweep_gamma(base: &ExperimentConfig, gammas: &[f64]) -> Result<GammaSweepReport> {
    if gammas.is_empty() {
        return Err(Error::InvalidConfig("gamma sweep needs at least one ratio".into()));
    }
    let mut configs = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let mut cfg = base.clone();
        cfg.method = Method::Active;
        cfg.active.active_ratio = g;
        cfg.output_path = None;
        cfg.validate().map_err(|e| {
            Error::InvalidConfig(format!("gamma {g} is invalid for this budget: {e}"))
        })?;
        configs.push(cfg);
    }
    let mut rows = Vec::with_capacity(configs.len());
    for (cfg, &g) in configs.iter().zip(gammas) {
        let report = run_experiment(cfg)?;
        rows.push(GammaRow {
            gamma: g,
            cell: SweepCell::from_report(&report),
        });
    }
    Ok(GammaSweepReport { rows })
}

pub fn gamma_csv(report: &GammaSweepReport) -> String {
    let mut out = String::from("gamma,mean_successes\n");
    for row in &report.rows {
        let _ = writeln!(out, "{},{}", row.gamma, row.cell.mean_successes);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UthrRow {
    pub u_thr_mult: f64,
    pub cell: SweepCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UthrSweepReport {
    /// Passive-learning control on the same seeds and test sets.
    pub passive: SweepCell,
    pub active: Vec<UthrRow>,
}

/// Matched-seed active runs at each threshold multiplier plus one passive
/// control. Duplicate multipliers are collapsed (first occurrence wins) with
/// a warning on stderr.
pub fn sweep_uthr(base: &ExperimentConfig, mults: &[f64]) -> Result<UthrSweepReport> {
    if mults.is_empty() {
        return Err(Error::InvalidConfig(
            "u_thr sweep needs at least one multiplier".into(),
        ));
    }
    let mut unique: Vec<f64> = Vec::with_capacity(mults.len());
    for &m in mults {
        if !(m > 1.0) || !m.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "u_thr multiplier must be finite and > 1, got {m}"
            )));
        }
        if unique.contains(&m) {
            eprintln!("warning: duplicate u_thr multiplier {m} ignored");
        } else {
            unique.push(m);
        }
    }

    let mut passive_cfg = base.clone();
    passive_cfg.method = Method::Passive;
    passive_cfg.output_path = None;
    passive_cfg.validate()?;
    let passive = SweepCell::from_report(&run_experiment(&passive_cfg)?);

    let mut active = Vec::with_capacity(unique.len());
    for &m in &unique {
        let mut cfg = base.clone();
        cfg.method = Method::Active;
        cfg.active.u_thr_mult = m;
        cfg.output_path = None;
        cfg.validate()?;
        let report = run_experiment(&cfg)?;
        active.push(UthrRow {
            u_thr_mult: m,
            cell: SweepCell::from_report(&report),
        });
    }
    Ok(UthrSweepReport { passive, active })
}

pub fn uthr_csv(report: &UthrSweepReport) -> String {
    let mut out = String::from("method,u_thr_mult,total_successes,mean_successes\n");
    let _ = writeln!(
        out,
        "passive,,{},{}",
        report.passive.total_successes, report.passive.mean_successes
    );
    for row in &report.active {
        let _ = writeln!(
            out,
            "active,{},{},{}",
            row.u_thr_mult, row.cell.total_successes, row.cell.mean_successes
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImaginationRow {
    pub rollout_steps: usize,
    /// Mean F1 over completed seeds.
    pub mean_f1: f64,
    /// Mean trigger step among true positives, averaged over seeds that had
    /// any; 0 when none did.
    pub mean_steps_to_predict: f64,
    pub reports: Vec<FailureReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImaginationSweepReport {
    pub rows: Vec<ImaginationRow>,
    pub n_failed_seeds: usize,
}

/// Failure-prediction quality versus imagination horizon: per seed, collect
/// and train once, then run the twin-run protocol at every horizon on the
/// same test set.
pub fn sweep_imagination(
    base: &ExperimentConfig,
    steps: &[usize],
) -> Result<ImaginationSweepReport> {
    if steps.is_empty() {
        return Err(Error::InvalidConfig(
            "imagination sweep needs at least one horizon".into(),
        ));
    }
    base.validate()?;

    let mut per_step_reports: Vec<Vec<FailureReport>> = vec![Vec::new(); steps.len()];
    let mut n_failed_seeds = 0;
    for seed_index in 0..base.n_seeds {
        let setup = match prepare_seed(base, seed_index) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("warning: seed {seed_index} failed: {e}");
                n_failed_seeds += 1;
                continue;
            }
        };
        let sweep: Vec<FailureMonitorConfig> = steps
            .iter()
            .map(|&s| FailureMonitorConfig {
                threshold: setup.threshold,
                rollout_steps: s,
                enabled: true,
            })
            .collect();
        let reports = evaluate_failure_prediction(
            base.env,
            &setup.instances,
            &setup.bundle,
            base.controller,
            &setup.ctrl,
            &sweep,
        )?;
        for (slot, report) in per_step_reports.iter_mut().zip(reports) {
            slot.push(report);
        }
    }

    let rows = steps
        .iter()
        .zip(per_step_reports)
        .map(|(&s, reports)| {
            let mean_f1 = if reports.is_empty() {
                0.0
            } else {
                reports.iter().map(|r| r.f1).sum::<f64>() / reports.len() as f64
            };
            let with_tp: Vec<f64> = reports
                .iter()
                .filter(|r| r.true_positives > 0)
                .map(|r| r.mean_steps_to_predict)
                .collect();
            let mean_steps = if with_tp.is_empty() {
                0.0
            } else {
                with_tp.iter().sum::<f64>() / with_tp.len() as f64
            };
            ImaginationRow {
                rollout_steps: s,
                mean_f1,
                mean_steps_to_predict: mean_steps,
                reports,
            }
        })
        .collect();

    Ok(ImaginationSweepReport {
        rows,
        n_failed_seeds,
    })
}

pub fn imagination_csv(report: &ImaginationSweepReport) -> String {
    let mut out = String::from("rollout_steps,f1,mean_steps_to_predict\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            row.rollout_steps, row.mean_f1, row.mean_steps_to_predict
        );
    }
    out
}
