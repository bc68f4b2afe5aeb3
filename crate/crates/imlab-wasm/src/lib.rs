//! Browser bindings for the lab: train a small model bundle in the page,
//! roll episodes with the expert, the cloned policy, or the hybrid
//! controller, and inspect the reconstruction-energy landscape that drives
//! demonstration requests.
//!
//! Everything returns JSON strings so the page needs no generated TypeScript.
//! Build with `wasm-pack build crates/imlab-wasm --target web` (needs the
//! `wasm32-unknown-unknown` std component); `www/index.html` loads the
//! emitted module directly. The crate also compiles natively so its logic is
//! covered by the workspace test run.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use imlab::active::collect_passive;
use imlab::control::{run_episode, ControllerConfig, ControllerKind};
use imlab::envs::{reset, sample_instance, EnvKind, TaskInstance};
use imlab::models::{dae_error, policy_action, predict_next, ModelBundle, TrainConfig};
use imlab::numkit::Rng;
use imlab::uncertainty::{calibrate_threshold, unc_rollout, CalibratedThreshold};

// Stream tags for the demo page, disjoint from the tags used by training,
// planning, and the experiment harness.
const DEMO_COLLECT_STREAM: u64 = 0x61;
const DEMO_EPISODE_STREAM: u64 = 0x62;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsValue> {
    serde_json::to_string(value).map_err(js_err)
}

/// Agent position, and the block position where the environment has one.
fn split_obs(kind: EnvKind, obs: &[f64]) -> ([f64; 2], Option<[f64; 2]>) {
    let agent = [obs[0], obs[1]];
    let block = match kind {
        EnvKind::PointReach => None,
        EnvKind::PushBlock => Some([obs[2], obs[3]]),
    };
    (agent, block)
}

#[derive(Serialize)]
struct RolloutPayload {
    env: String,
    controller: String,
    success: bool,
    steps: usize,
    stop_reason: String,
    goal: [f64; 2],
    agent_path: Vec<[f64; 2]>,
    block_path: Option<Vec<[f64; 2]>>,
    /// Reconstruction energy of each state an action was taken from.
    uncertainty: Vec<f64>,
    threshold: f64,
}

#[derive(Serialize)]
struct GridPayload {
    res: usize,
    /// Row-major, x fastest; row `j` holds agent y = (j + 0.5) / res.
    values: Vec<f64>,
    min: f64,
    max: f64,
    threshold: f64,
    err_train: f64,
    /// Agent positions visited by the training demos, for overlay.
    demo_points: Vec<[f64; 2]>,
    goal: [f64; 2],
    block: Option<[f64; 2]>,
}

#[derive(Serialize)]
struct ImaginePayload {
    value: f64,
    threshold: f64,
    triggered: bool,
    diverged: bool,
    energies: Vec<f64>,
    agent_path: Vec<[f64; 2]>,
    block_path: Option<Vec<[f64; 2]>>,
}

/// A trained model bundle plus the fixed context the page draws against.
#[wasm_bindgen]
pub struct DemoLab {
    kind: EnvKind,
    bundle: ModelBundle,
    threshold: CalibratedThreshold,
    /// Instance whose block/goal configuration anchors the energy grid and
    /// imagination probes.
    reference: TaskInstance,
    demo_points: Vec<[f64; 2]>,
}

#[wasm_bindgen]
impl DemoLab {
    /// Collects `n_demos` scripted demonstrations and trains the policy,
    /// dynamics, and reconstruction networks on them. Sized for an
    /// interactive page rather than the full experiment defaults.
    pub fn train(env: &str, n_demos: usize, seed: u64) -> Result<DemoLab, JsValue> {
        let kind: EnvKind = env.parse().map_err(js_err)?;
        let n = n_demos.clamp(2, 60);
        let mut rng = Rng::from_parts(seed, &[DEMO_COLLECT_STREAM]);
        let dataset = collect_passive(kind, n, &mut rng).map_err(js_err)?;
        let cfg = TrainConfig {
            epochs: 160,
            policy_width: 24,
            dynamics_width: 12,
            seed,
            ..TrainConfig::default()
        };
        let bundle = ModelBundle::train(&dataset, &cfg).map_err(js_err)?;
        let threshold = calibrate_threshold(&bundle.dae, &dataset, 1.5).map_err(js_err)?;
        let reference = sample_instance(&mut rng, kind);
        let demo_points = dataset
            .all_observations()
            .step_by(3)
            .map(|obs| [obs[0], obs[1]])
            .collect();
        Ok(DemoLab {
            kind,
            bundle,
            threshold,
            reference,
            demo_points,
        })
    }

    /// Runs one closed-loop episode on a freshly sampled instance.
    /// `controller` is `expert`, `bc_only`, or `hybrid`.
    pub fn rollout(&self, controller: &str, seed: u64) -> Result<String, JsValue> {
        let kind_ctrl: ControllerKind = controller.parse().map_err(js_err)?;
        let mut rng = Rng::from_parts(seed, &[DEMO_EPISODE_STREAM]);
        let instance = sample_instance(&mut rng, self.kind);
        let mut ctrl = ControllerConfig::default();
        ctrl.planner.seed = seed;
        let ep = run_episode(self.kind, &instance, kind_ctrl, &self.bundle, &ctrl, None)
            .map_err(js_err)?;
        let mut agent_path = Vec::with_capacity(ep.observations.len());
        let mut block_path = Vec::new();
        for obs in &ep.observations {
            let (agent, block) = split_obs(self.kind, obs);
            agent_path.push(agent);
            if let Some(b) = block {
                block_path.push(b);
            }
        }
        to_json(&RolloutPayload {
            env: self.kind.to_string(),
            controller: kind_ctrl.to_string(),
            success: ep.success,
            steps: ep.steps,
            stop_reason: format!("{:?}", ep.stop_reason),
            goal: instance.goal,
            agent_path,
            block_path: (self.kind == EnvKind::PushBlock).then_some(block_path),
            uncertainty: ep.uncertainty_trace,
            threshold: self.threshold.threshold,
        })
    }

    /// Reconstruction energy over a `res` x `res` grid of agent positions,
    /// with the block and goal pinned to the reference instance.
    pub fn energy_grid(&self, res: usize) -> Result<String, JsValue> {
        let res = res.clamp(8, 160);
        let (_, mut obs) = reset(self.kind, &self.reference).map_err(js_err)?;
        let (_, block) = split_obs(self.kind, &obs);
        let mut values = Vec::with_capacity(res * res);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for j in 0..res {
            for i in 0..res {
                obs[0] = (i as f64 + 0.5) / res as f64;
                obs[1] = (j as f64 + 0.5) / res as f64;
                let e = dae_error(&self.bundle.dae, &obs).map_err(js_err)?;
                min = min.min(e);
                max = max.max(e);
                values.push(e);
            }
        }
        to_json(&GridPayload {
            res,
            values,
            min,
            max,
            threshold: self.threshold.threshold,
            err_train: self.threshold.err_train,
            demo_points: self.demo_points.clone(),
            goal: self.reference.goal,
            block,
        })
    }

    /// Imagination rollout from an agent position on the reference instance:
    /// chains the cloned policy through the learned dynamics and reports the
    /// reconstruction energy of every imagined state.
    pub fn imagine(&self, x: f64, y: f64, steps: usize) -> Result<String, JsValue> {
        let steps = steps.clamp(1, 60);
        let (_, mut obs) = reset(self.kind, &self.reference).map_err(js_err)?;
        obs[0] = x;
        obs[1] = y;
        let est = unc_rollout(
            &obs,
            &self.bundle.policy,
            &self.bundle.dynamics,
            &self.bundle.dae,
            steps,
        )
        .map_err(js_err)?;

        // Re-walk the imagined trajectory to expose the states themselves;
        // the estimate only carries their energies.
        let mut agent_path = Vec::with_capacity(steps);
        let mut block_path = Vec::new();
        let mut s = obs;
        for _ in 0..est.per_step_errors.len() {
            let (agent, block) = split_obs(self.kind, &s);
            agent_path.push(agent);
            if let Some(b) = block {
                block_path.push(b);
            }
            let Ok(a) = policy_action(&self.bundle.policy, &s) else {
                break;
            };
            match predict_next(&self.bundle.dynamics, &s, &a) {
                Ok(next) if next.iter().all(|v| v.is_finite()) => s = next,
                _ => break,
            }
        }
        to_json(&ImaginePayload {
            value: est.value,
            threshold: self.threshold.threshold,
            triggered: est.value > self.threshold.threshold,
            diverged: est.diverged,
            energies: est.per_step_errors,
            agent_path,
            block_path: (self.kind == EnvKind::PushBlock).then_some(block_path),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_rollout_and_grid_round_trip() {
        let lab = DemoLab::train("point_reach", 8, 0).unwrap();
        let ep: serde_json::Value =
            serde_json::from_str(&lab.rollout("expert", 1).unwrap()).unwrap();
        assert_eq!(ep["controller"], "expert");
        assert_eq!(ep["success"], true);
        assert!(ep["block_path"].is_null());

        let grid: serde_json::Value =
            serde_json::from_str(&lab.energy_grid(4).unwrap()).unwrap();
        assert_eq!(grid["res"], 8, "resolution clamps up to the minimum");
        assert_eq!(grid["values"].as_array().unwrap().len(), 64);
        assert!(grid["threshold"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn imagine_reports_one_energy_per_step() {
        let lab = DemoLab::train("push_block", 6, 3).unwrap();
        let im: serde_json::Value =
            serde_json::from_str(&lab.imagine(0.5, 0.5, 7).unwrap()).unwrap();
        assert_eq!(im["energies"].as_array().unwrap().len(), 7);
        assert_eq!(
            im["agent_path"].as_array().unwrap().len(),
            im["block_path"].as_array().unwrap().len()
        );
        assert!(im["value"].as_f64().is_some());
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(DemoLab::train("maze", 8, 0).is_err());
        let lab = DemoLab::train("point_reach", 4, 0).unwrap();
        assert!(lab.rollout("teleport", 0).is_err());
    }
}
