//! Imagination-rollout uncertainty and threshold calibration.
//!
//! A rollout chains the learned policy and dynamics forward from a state for
//! a fixed number of imagined steps and averages the reconstruction energy of
//! the visited states, the start state included. With a single step this
//! degenerates to the plain reconstruction energy of the current state.
//! Imagined states are deliberately not clamped to the arena: imagination
//! that walks off the map produces huge energies, which is exactly the
//! out-of-distribution signal we want.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    dae_error, policy_action, predict_next, DaeModel, DemoDataset, DynamicsModel, PolicyModel,
};

/// Default imagination horizon. Sweeps typically cover 1..=10.
pub const DEFAULT_ROLLOUT_STEPS: usize = 10;

/// Mean reconstruction energy over an imagined rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEstimate {
    /// Mean of `per_step_errors`; `+inf` when the rollout diverged.
    pub value: f64,
    pub steps_used: usize,
    /// One reconstruction energy per imagined state, start state first.
    pub per_step_errors: Vec<f64>,
    /// The imagined trajectory left finite range. The estimate saturates to
    /// `+inf`, which downstream consumers read as maximal uncertainty.
    pub diverged: bool,
}

/// Stop threshold derived from the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedThreshold {
    /// Mean reconstruction energy over all training observations.
    pub err_train: f64,
    pub u_thr_mult: f64,
    /// `u_thr_mult * err_train`.
    pub threshold: f64,
    /// True when `err_train` is exactly zero, e.g. an identity reconstruction
    /// network. The threshold is then zero and carries no signal; callers
    /// should surface a warning instead of trusting it.
    pub degenerate: bool,
}

/// Maps a non-finite model evaluation to `None` so the rollout can saturate
/// instead of erroring; real errors (shape mismatches) still propagate.
pub(crate) fn divergence_as_none<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NonFinite(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Imagined-rollout uncertainty of `state` under the three learned models.
///
/// Loop: score the current state's reconstruction energy, ask the policy for
/// an action, step the dynamics model, repeat `steps` times, return the mean.
/// The final imagined state is never scored, so its action and transition are
/// skipped. If any imagined quantity stops being finite the estimate
/// saturates to `+inf` and is flagged as diverged.
pub fn unc_rollout(
    state: &[f64],
    policy: &PolicyModel,
    dynamics: &DynamicsModel,
    dae: &DaeModel,
    steps: usize,
) -> Result<UncertaintyEstimate> {
    if steps == 0 {
        return Err(Error::InvalidConfig(
            "imagination rollout needs at least one step".into(),
        ));
    }
    let mut per_step_errors = Vec::with_capacity(steps);
    let mut s = state.to_vec();
    let mut diverged = false;
    for i in 0..steps {
        match divergence_as_none(dae_error(dae, &s))? {
            Some(e) if e.is_finite() => per_step_errors.push(e),
            _ => {
                diverged = true;
                break;
            }
        }
        if i + 1 == steps {
            break;
        }
        let action = match divergence_as_none(policy_action(policy, &s))? {
            Some(a) => a,
            None => {
                diverged = true;
                break;
            }
        };
        s = match divergence_as_none(predict_next(dynamics, &s, &action))? {
            Some(next) if next.iter().all(|v| v.is_finite()) => next,
            _ => {
                diverged = true;
                break;
            }
        };
    }
    if diverged {
        per_step_errors.resize(steps, f64::INFINITY);
    }
    let value = if diverged {
        f64::INFINITY
    } else {
        per_step_errors.iter().sum::<f64>() / steps as f64
    };
    Ok(UncertaintyEstimate {
        value,
        steps_used: steps,
        per_step_errors,
        diverged,
    })
}

/// Calibrates the stop threshold as a multiple of the mean training-set
/// reconstruction energy.
pub fn calibrate_threshold(
    dae: &DaeModel,
    dataset: &DemoDataset,
    u_thr_mult: f64,
) -> Result<CalibratedThreshold> {
    if !(u_thr_mult > 1.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold multiplier must exceed 1, got {u_thr_mult}"
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for obs in dataset.all_observations() {
        sum += dae_error(dae, obs)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let err_train = sum / count as f64;
    Ok(CalibratedThreshold {
        err_train,
        u_thr_mult,
        threshold: u_thr_mult * err_train,
        degenerate: err_train == 0.0,
    })
}
