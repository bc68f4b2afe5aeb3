//! Analytic 2D manipulation environments with scripted expert controllers.
//!
//! Two tasks on the unit arena `[0,1]^2`:
//!
//! - `PointReach`: drive the agent point to a goal position.
//! - `PushBlock`: push a block to a goal position. The agent moves a block
//!   only while within a contact radius, and only by the component of its
//!   displacement pointing at the block, so pushing requires approaching from
//!   the side opposite the goal. The scripted expert therefore follows a
//!   narrow state manifold (orbit to the pushing side, then push), which is
//!   what makes off-manifold policy drift observable.
//!
//! Dynamics are closed-form and deterministic: `step` is a pure function, and
//! replaying a recorded action sequence reproduces a trajectory exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Rng;

/// Flat observation vector. PointReach packs `(agent, goal)` (dim 4),
/// PushBlock packs `(agent, block, goal)` (dim 6).
pub type Observation = Vec<f64>;

/// 2D velocity command; each component is clamped to `[-A_MAX, A_MAX]` on
/// application.
pub type Action = [f64; 2];

pub const A_MAX: f64 = 0.05;
pub const CONTACT_RADIUS: f64 = 0.05;
pub const REACH_SUCCESS_RADIUS: f64 = 0.03;
pub const PUSH_SUCCESS_RADIUS: f64 = 0.05;
pub const DEFAULT_MAX_STEPS: usize = 120;

// Scripted PushBlock expert geometry.
const STANDOFF: f64 = 0.045;
const PUSH_ENGAGE_DIST: f64 = 0.07;
const PUSH_ALIGN_COS: f64 = 0.9;
const ORBIT_RADIUS: f64 = 0.085;
const ORBIT_BAND: f64 = 0.01;
const SAFE_CLEARANCE: f64 = 0.08;
const MAX_ORBIT_STEP: f64 = 0.5;
const ANGLE_TOL: f64 = 0.2;
const PUSH_THROUGH: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointReach,
    PushBlock,
}

impl EnvKind {
    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::PointReach => 4,
            EnvKind::PushBlock => 6,
        }
    }

    pub const ACTION_DIM: usize = 2;

    /// Length of the environment-specific start vector in a [`TaskInstance`].
    pub fn start_dim(self) -> usize {
        match self {
            EnvKind::PointReach => 2,
            EnvKind::PushBlock => 4,
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvKind::PointReach => write!(f, "point_reach"),
            EnvKind::PushBlock => write!(f, "push_block"),
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point_reach" | "point-reach" => Ok(EnvKind::PointReach),
            "push_block" | "push-block" => Ok(EnvKind::PushBlock),
            other => Err(Error::InvalidConfig(format!(
                "unknown environment '{other}' (expected point_reach or push_block)"
            ))),
        }
    }
}

/// One task configuration: start positions plus goal.
///
/// `start` is `[agent]` for PointReach and `[agent, block]` for PushBlock,
/// flattened. The task-defining separation (agent-goal, or block-goal) must be
/// at least 0.2 so every instance is non-trivial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub start: Vec<f64>,
    pub goal: [f64; 2],
}

pub const MIN_TASK_SEPARATION: f64 = 0.2;

fn in_arena(p: &[f64]) -> bool {
    p.iter().all(|&x| (0.0..=1.0).contains(&x))
}

impl TaskInstance {
    pub fn validate(&self, kind: EnvKind) -> Result<()> {
        if self.start.len() != kind.start_dim() {
            return Err(Error::InvalidInstance(format!(
                "start vector has length {}, expected {}",
                self.start.len(),
                kind.start_dim()
            )));
        }
        if !in_arena(&self.start) || !in_arena(&self.goal) {
            return Err(Error::InvalidInstance(
                "start and goal must lie inside the unit arena".into(),
            ));
        }
        let mover = match kind {
            EnvKind::PointReach => [self.start[0], self.start[1]],
            EnvKind::PushBlock => [self.start[2], self.start[3]],
        };
        if dist(mover, self.goal) < MIN_TASK_SEPARATION {
            return Err(Error::InvalidInstance(format!(
                "task separation {} below minimum {}",
                dist(mover, self.goal),
                MIN_TASK_SEPARATION
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub kind: EnvKind,
    pub agent: [f64; 2],
    pub block: Option<[f64; 2]>,
    pub goal: [f64; 2],
    pub step_count: usize,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub done: bool,
    pub success: bool,
}

#[inline]
fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[inline]
fn clamp01(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
}

/// Clamps each action component to the actuator box.
#[inline]
pub fn clamp_action(a: Action) -> Action {
    [a[0].clamp(-A_MAX, A_MAX), a[1].clamp(-A_MAX, A_MAX)]
}

impl EnvState {
    pub fn observation(&self) -> Observation {
        let mut obs = Vec::with_capacity(self.kind.obs_dim());
        obs.extend_from_slice(&self.agent);
        if let Some(b) = self.block {
            obs.extend_from_slice(&b);
        }
        obs.extend_from_slice(&self.goal);
        obs
    }

    pub fn is_success(&self) -> bool {
        match self.kind {
            EnvKind::PointReach => dist(self.agent, self.goal) < REACH_SUCCESS_RADIUS,
            EnvKind::PushBlock => {
                dist(self.block.expect("push_block state has a block"), self.goal)
                    < PUSH_SUCCESS_RADIUS
            }
        }
    }
}

/// Builds the start state for an instance. Fails on invalid instances.
pub fn reset(kind: EnvKind, instance: &TaskInstance) -> Result<(EnvState, Observation)> {
    reset_with_limit(kind, instance, DEFAULT_MAX_STEPS)
}

pub fn reset_with_limit(
    kind: EnvKind,
    instance: &TaskInstance,
    max_steps: usize,
) -> Result<(EnvState, Observation)> {
    instance.validate(kind)?;
    let state = EnvState {
        kind,
        agent: [instance.start[0], instance.start[1]],
        block: match kind {
            EnvKind::PointReach => None,
            EnvKind::PushBlock => Some([instance.start[2], instance.start[3]]),
        },
        goal: instance.goal,
        step_count: 0,
        max_steps,
    };
    let obs = state.observation();
    Ok((state, obs))
}

/// Applies one clamped action. Pure: the input state is not mutated.
///
/// PushBlock contact rule: when the agent starts the step within
/// `CONTACT_RADIUS` of the block, the block translates along the
/// agent-to-block direction by the (non-negative) projection of the agent's
/// displacement onto that direction. Tangential motion slides around the
/// block without moving it.
pub fn step(state: &EnvState, action: Action) -> (EnvState, StepResult) {
    let mut next = state.clone();
    let a = clamp_action(action);
    let old_agent = next.agent;
    next.agent = clamp01([old_agent[0] + a[0], old_agent[1] + a[1]]);

    if let Some(block) = next.block {
        let to_block = [block[0] - old_agent[0], block[1] - old_agent[1]];
        let d = (to_block[0].powi(2) + to_block[1].powi(2)).sqrt();
        if d <= CONTACT_RADIUS {
            let disp = [next.agent[0] - old_agent[0], next.agent[1] - old_agent[1]];
            let u = if d > 1e-9 {
                [to_block[0] / d, to_block[1] / d]
            } else {
                // Agent coincides with the block: push along the motion itself.
                let n = (disp[0].powi(2) + disp[1].powi(2)).sqrt();
                if n > 1e-12 {
                    [disp[0] / n, disp[1] / n]
                } else {
                    [0.0, 0.0]
                }
            };
            let push = (disp[0] * u[0] + disp[1] * u[1]).max(0.0);
            if push > 0.0 {
                next.block = Some(clamp01([block[0] + push * u[0], block[1] + push * u[1]]));
            }
        }
    }

    next.step_count += 1;
    let success = next.is_success();
    let done = success || next.step_count >= next.max_steps;
    let observation = next.observation();
    (
        next,
        StepResult {
            observation,
            done,
            success,
        },
    )
}

fn wrap_angle(mut a: f64) -> f64 {
    while a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    while a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Action that moves from `from` toward `to`, capped at `A_MAX` in norm so
/// the direction is preserved (a per-axis clamp would skew diagonal motion).
fn steer(from: [f64; 2], to: [f64; 2]) -> Action {
    let d = [to[0] - from[0], to[1] - from[1]];
    let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if n > A_MAX {
        [d[0] * A_MAX / n, d[1] * A_MAX / n]
    } else {
        d
    }
}

/// Minimum distance from point `p` to the segment `a..b`.
fn point_segment_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 < 1e-18 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Scripted expert controller. Deterministic, memoryless.
///
/// PointReach is a unit-gain proportional controller toward the goal.
/// PushBlock has two implicit phases: navigate (orbit) to the stand point on
/// the side of the block opposite the goal, then drive through the block
/// toward the goal.
pub fn expert_action(state: &EnvState) -> Action {
    match state.kind {
        EnvKind::PointReach => clamp_action([
            state.goal[0] - state.agent[0],
            state.goal[1] - state.agent[1],
        ]),
        EnvKind::PushBlock => {
            let block = state.block.expect("push_block state has a block");
            let to_goal = [state.goal[0] - block[0], state.goal[1] - block[1]];
            let d_goal = (to_goal[0].powi(2) + to_goal[1].powi(2)).sqrt();
            if d_goal < PUSH_SUCCESS_RADIUS * 0.5 {
                return [0.0, 0.0];
            }
            let push_dir = [to_goal[0] / d_goal, to_goal[1] / d_goal];

            let v = [state.agent[0] - block[0], state.agent[1] - block[1]];
            let d_ab = (v[0].powi(2) + v[1].powi(2)).sqrt();
            let aligned = if d_ab > 1e-9 {
                (-v[0] / d_ab) * push_dir[0] + (-v[1] / d_ab) * push_dir[1]
            } else {
                1.0
            };
            if d_ab <= PUSH_ENGAGE_DIST && aligned >= PUSH_ALIGN_COS {
                // In pushing position: drive at a point just past the block
                // center so the action never degenerates to zero when the
                // agent catches up with the block. The contact rule advances
                // the block along the agent-to-block direction, which is the
                // goal direction here.
                let target = [
                    block[0] + push_dir[0] * PUSH_THROUGH,
                    block[1] + push_dir[1] * PUSH_THROUGH,
                ];
                return steer(state.agent, target);
            }

            let stand = [
                block[0] - push_dir[0] * STANDOFF,
                block[1] - push_dir[1] * STANDOFF,
            ];
            let ang = if d_ab > 1e-9 { v[1].atan2(v[0]) } else { 0.0 };
            let target_ang = (-push_dir[1]).atan2(-push_dir[0]);
            let angle_err = wrap_angle(ang - target_ang);
            if angle_err.abs() > ANGLE_TOL {
                if d_ab <= ORBIT_RADIUS + ORBIT_BAND {
                    // Wrong side of the block: walk along the circle of
                    // radius ORBIT_RADIUS toward the stand point's angle.
                    // The chord of a MAX_ORBIT_STEP arc stays clear of the
                    // contact radius, so orbiting never disturbs the block.
                    let dth = (-angle_err).clamp(-MAX_ORBIT_STEP, MAX_ORBIT_STEP);
                    let p = [
                        block[0] + ORBIT_RADIUS * (ang + dth).cos(),
                        block[1] + ORBIT_RADIUS * (ang + dth).sin(),
                    ];
                    return steer(state.agent, p);
                }
                if point_segment_dist(block, state.agent, stand) < SAFE_CLEARANCE {
                    // Direct route would shove the block; join the orbit
                    // circle radially first.
                    let p = [
                        block[0] + ORBIT_RADIUS * ang.cos(),
                        block[1] + ORBIT_RADIUS * ang.sin(),
                    ];
                    return steer(state.agent, p);
                }
            }
            steer(state.agent, stand)
        }
    }
}

/// Samples task instances uniformly, respecting instance invariants.
/// Rejection sampling keeps margins from the walls so the scripted expert's
/// stand point stays reachable.
pub fn sample_instances(rng: &mut Rng, n: usize, kind: EnvKind) -> Vec<TaskInstance> {
    (0..n).map(|_| sample_instance(rng, kind)).collect()
}

pub fn sample_instance(rng: &mut Rng, kind: EnvKind) -> TaskInstance {
    match kind {
        EnvKind::PointReach => loop {
            let agent = [rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)];
            let goal = [rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)];
            if dist(agent, goal) >= MIN_TASK_SEPARATION {
                return TaskInstance {
                    start: agent.to_vec(),
                    goal,
                };
            }
        },
        EnvKind::PushBlock => loop {
            let block = [rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)];
            let goal = [rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)];
            if dist(block, goal) < MIN_TASK_SEPARATION {
                continue;
            }
            let agent = loop {
                let a = [rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)];
                if dist(a, block) >= 0.12 {
                    break a;
                }
            };
            return TaskInstance {
                start: vec![agent[0], agent[1], block[0], block[1]],
                goal,
            };
        },
    }
}

/// Runs the scripted expert from an arbitrary state until done, with a fresh
/// step budget. Returns observations (length = actions + 1), the actions
/// taken, and the success flag.
pub fn rollout_expert_from(mut state: EnvState) -> (Vec<Observation>, Vec<Action>, bool) {
    state.step_count = 0;
    state.max_steps = DEFAULT_MAX_STEPS;
    let mut observations = vec![state.observation()];
    let mut actions = Vec::new();
    let mut success = state.is_success();
    while !success && state.step_count < state.max_steps {
        let a = expert_action(&state);
        let (next, res) = step(&state, a);
        actions.push(a);
        observations.push(res.observation);
        success = res.success;
        state = next;
    }
    (observations, actions, success)
}

/// Expert rollout from a task instance.
pub fn rollout_expert(
    kind: EnvKind,
    instance: &TaskInstance,
) -> Result<(Vec<Observation>, Vec<Action>, bool)> {
    let (state, _) = reset(kind, instance)?;
    Ok(rollout_expert_from(state))
}
