//! Unsupervised failure prediction: stop execution when imagined-rollout
//! uncertainty crosses the calibrated threshold, and measure how well those
//! stops predict real failures.
//!
//! Ground truth comes from a twin run: every instance is executed once with
//! the monitor armed (to get the trigger step) and once to completion with it
//! disarmed (to see whether the episode actually fails). The monitor has no
//! side effects before its stop decision and episodes are deterministic, so
//! the two runs share a prefix and the protocol is exact.
//!
//! A supervised baseline classifier, trained on states labeled with their
//! episode's outcome, is evaluated with the same protocol for comparison.

use serde::{Deserialize, Serialize};

use crate::control::{run_episode, ControllerConfig, ControllerKind, EpisodeResult, StopReason};
use crate::envs::{EnvKind, TaskInstance};
use crate::error::{Error, Result};
use crate::models::{dae_error, train_mlp, ModelBundle, TrainConfig, Trajectory};
use crate::numkit::{mlp_forward, mlp_spec, MlpParams, Rng};
use crate::uncertainty::{unc_rollout, CalibratedThreshold};

const CLASSIFIER_STREAM: u64 = 0x14;

/// Settings for the execution monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureMonitorConfig {
    pub threshold: CalibratedThreshold,
    /// Imagination steps per check; 0 means score the current state's energy
    /// alone, which decides identically to a 1-step rollout.
    pub rollout_steps: usize,
    /// Disarmed monitors still record their decision values but never stop.
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonitorDecision {
    Continue { uncertainty: f64 },
    Stop { uncertainty: f64 },
}

/// The monitor's decision value at `state`: current-state energy for
/// `rollout_steps == 0`, otherwise the imagined-rollout mean.
pub fn monitor_value(state: &[f64], models: &ModelBundle, cfg: &FailureMonitorConfig) -> Result<f64> {
    if cfg.rollout_steps == 0 {
        dae_error(&models.dae, state)
    } else {
        Ok(unc_rollout(
            state,
            &models.policy,
            &models.dynamics,
            &models.dae,
            cfg.rollout_steps,
        )?
        .value)
    }
}

/// One monitor check. Stops iff the decision value exceeds the threshold.
pub fn monitor_step(
    state: &[f64],
    models: &ModelBundle,
    cfg: &FailureMonitorConfig,
) -> Result<MonitorDecision> {
    if !cfg.enabled {
        return Err(Error::InvalidConfig(
            "monitor_step called with a disarmed monitor".into(),
        ));
    }
    let uncertainty = monitor_value(state, models, cfg)?;
    Ok(if uncertainty > cfg.threshold.threshold {
        MonitorDecision::Stop { uncertainty }
    } else {
        MonitorDecision::Continue { uncertainty }
    })
}

/// Prediction vs reality for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub predicted_failure: bool,
    /// Step at which the armed monitor fired; present iff `predicted_failure`.
    pub trigger_step: Option<usize>,
    /// Whether the disarmed twin run failed (step limit without success).
    pub actual_failure: bool,
}

/// Aggregate failure-prediction quality for one monitor configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    /// Monitor configuration this report belongs to.
    pub rollout_steps: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean trigger step over true positives; 0 when there are none.
    pub mean_steps_to_predict: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub outcomes: Vec<PredictionOutcome>,
}

/// Confusion-matrix arithmetic over per-instance outcomes. Ratios with an
/// empty denominator are reported as zero.
pub fn summarize_outcomes(rollout_steps: usize, outcomes: Vec<PredictionOutcome>) -> FailureReport {
    let mut tp = 0;
    let mut fp = 0;
    let mut fng = 0;
    let mut tn = 0;
    let mut trigger_sum = 0.0;
    for o in &outcomes {
        debug_assert_eq!(o.trigger_step.is_some(), o.predicted_failure);
        match (o.predicted_failure, o.actual_failure) {
            (true, true) => {
                tp += 1;
                trigger_sum += o.trigger_step.unwrap_or(0) as f64;
            }
            (true, false) => fp += 1,
            (false, true) => fng += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fng);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let mean_steps_to_predict = if tp == 0 { 0.0 } else { trigger_sum / tp as f64 };
    FailureReport {
        rollout_steps,
        precision,
        recall,
        f1,
        mean_steps_to_predict,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fng,
        true_negatives: tn,
        outcomes,
    }
}

fn outcome_from_twins(monitored: &EpisodeResult, unmonitored: &EpisodeResult) -> PredictionOutcome {
    PredictionOutcome {
        predicted_failure: monitored.stop_reason == StopReason::MonitorStop,
        trigger_step: monitored.trigger_step(),
        actual_failure: !unmonitored.success,
    }
}

/// Twin-run evaluation of a sweep of monitor configurations on a fixed test
/// set: one `FailureReport` per configuration, instances in input order.
pub fn evaluate_failure_prediction(
    kind: EnvKind,
    instances: &[TaskInstance],
    models: &ModelBundle,
    controller: ControllerKind,
    ctrl_cfg: &ControllerConfig,
    cfg_sweep: &[FailureMonitorConfig],
) -> Result<Vec<FailureReport>> {
    if instances.is_empty() {
        return Err(Error::InvalidConfig(
            "failure evaluation needs a non-empty test set".into(),
        ));
    }
    let mut reports = Vec::with_capacity(cfg_sweep.len());
    for cfg in cfg_sweep {
        let armed = FailureMonitorConfig {
            enabled: true,
            ..cfg.clone()
        };
        let disarmed = FailureMonitorConfig {
            enabled: false,
            ..cfg.clone()
        };
        let mut outcomes = Vec::with_capacity(instances.len());
        for inst in instances {
            let monitored = run_episode(kind, inst, controller, models, ctrl_cfg, Some(&armed))?;
            let unmonitored =
                run_episode(kind, inst, controller, models, ctrl_cfg, Some(&disarmed))?;
            outcomes.push(outcome_from_twins(&monitored, &unmonitored));
        }
        reports.push(summarize_outcomes(cfg.rollout_steps, outcomes));
    }
    Ok(reports)
}

/// Per-state binary failure classifier: small regression network fit by least
/// squares to 0/1 outcome labels, scored with a clamp to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureClassifier {
    pub params: MlpParams,
    pub obs_mean: Vec<f64>,
    pub obs_std: Vec<f64>,
}

/// Predicted failure probability for one state.
pub fn classifier_score(clf: &FailureClassifier, obs: &[f64]) -> Result<f64> {
    let x: Vec<f64> = obs
        .iter()
        .zip(&clf.obs_mean)
        .zip(&clf.obs_std)
        .map(|((o, m), s)| (o - m) / s)
        .collect();
    let y = mlp_forward(&clf.params, &x)?;
    Ok(y[0].clamp(0.0, 1.0))
}

/// Trains the supervised baseline: every state of a rollout inherits the
/// rollout's outcome label (1 = failure). Uses the policy network size from
/// `cfg` since both map single states to a small output.
pub fn train_supervised_baseline(
    rollouts: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<FailureClassifier> {
    cfg.validate()?;
    let n_fail = rollouts.iter().filter(|t| !t.success).count();
    if n_fail == 0 || n_fail == rollouts.len() {
        return Err(Error::Training(
            "supervised failure baseline needs both successful and failing rollouts".into(),
        ));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for t in rollouts {
        let label = if t.success { 0.0 } else { 1.0 };
        for obs in &t.observations {
            inputs.push(obs.clone());
            targets.push(vec![label]);
        }
    }
    let dim = inputs[0].len();
    let n = inputs.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in &inputs {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; dim];
    for x in &inputs {
        for ((s, v), m) in std.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in &mut std {
        *s = s.sqrt().max(crate::models::STD_FLOOR);
    }
    let norm_inputs: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| {
            x.iter()
                .zip(&mean)
                .zip(&std)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();

    let mut rng = Rng::from_parts(cfg.seed, &[CLASSIFIER_STREAM]);
    let spec = mlp_spec(dim, 1, cfg.policy_width, cfg.policy_depth);
    let init = MlpParams::glorot(spec, &mut rng)?;
    let (params, _) = train_mlp(&norm_inputs, &targets, init, cfg, &mut rng, None)?;
    Ok(FailureClassifier {
        params,
        obs_mean: mean,
        obs_std: std,
    })
}

/// Evaluates the supervised classifier with the monitor protocol: an episode
/// is predicted to fail at the first monitored state whose score exceeds
/// `prob_threshold`. Replayed over the unmonitored episode's states, which is
/// exact because the classifier is pure and episodes are deterministic.
pub fn evaluate_supervised_baseline(
    kind: EnvKind,
    instances: &[TaskInstance],
    models: &ModelBundle,
    clf: &FailureClassifier,
    prob_threshold: f64,
    controller: ControllerKind,
    ctrl_cfg: &ControllerConfig,
) -> Result<FailureReport> {
    if instances.is_empty() {
        return Err(Error::InvalidConfig(
            "failure evaluation needs a non-empty test set".into(),
        ));
    }
    let mut outcomes = Vec::with_capacity(instances.len());
    for inst in instances {
        let episode = run_episode(kind, inst, controller, models, ctrl_cfg, None)?;
        // The armed monitor checks exactly the states actions were taken
        // from, never the terminal state.
        let mut trigger_step = None;
        for (i, obs) in episode.observations[..episode.steps].iter().enumerate() {
            if classifier_score(clf, obs)? > prob_threshold {
                trigger_step = Some(i);
                break;
            }
        }
        outcomes.push(PredictionOutcome {
            predicted_failure: trigger_step.is_some(),
            trigger_step,
            actual_failure: !episode.success,
        });
    }
    Ok(summarize_outcomes(0, outcomes))
}
