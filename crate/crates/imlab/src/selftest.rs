//! Fast end-to-end property checks behind `imlab selftest`. Each check is an
//! acceptance-style assertion that runs in well under a minute total; any
//! failure flips the exit code.

use std::process::ExitCode;

use imlab::control::{
    plan_min_uncertainty, run_episode, ControllerConfig, ControllerKind, PlanOptimizer,
    PlannerConfig,
};
use imlab::envs::{sample_instance, EnvKind};
use imlab::error::Result;
use imlab::harness::{
    compare, experiment_metrics_csv, run_experiment, ExperimentConfig, Method,
};
use imlab::models::{
    dae_error, DaeModel, DynamicsModel, NormStats, PolicyModel, TrainConfig,
};
use imlab::numkit::{gradcheck_suite, mlp_spec, MlpParams, Rng};
use imlab::uncertainty::{calibrate_threshold, unc_rollout};

fn identity_norm(obs_dim: usize, act_dim: usize) -> NormStats {
    NormStats {
        obs_mean: vec![0.0; obs_dim],
        obs_std: vec![1.0; obs_dim],
        act_mean: vec![0.0; act_dim],
        act_std: vec![1.0; act_dim],
        delta_mean: vec![0.0; obs_dim],
        delta_std: vec![1.0; obs_dim],
    }
}

/// Untrained but well-formed PointReach models (4-dim obs, 2-dim actions).
fn random_models(seed: u64) -> Result<(PolicyModel, DynamicsModel, DaeModel)> {
    let mut rng = Rng::new(seed);
    let norm = identity_norm(4, 2);
    let policy = PolicyModel {
        params: MlpParams::glorot(mlp_spec(4, 2, 8, 1), &mut rng)?,
        norm: norm.clone(),
    };
    let dynamics = DynamicsModel {
        params: MlpParams::glorot(mlp_spec(6, 4, 8, 1), &mut rng)?,
        norm: norm.clone(),
    };
    let dae = DaeModel {
        params: MlpParams::glorot(mlp_spec(4, 4, 6, 1), &mut rng)?,
        norm,
        noise_sigma: 0.1,
    };
    Ok((policy, dynamics, dae))
}

fn check_gradients() -> Result<()> {
    let worst = gradcheck_suite(5, 0)?;
    if worst >= 1e-4 {
        return Err(imlab::error::Error::Training(format!(
            "gradient discrepancy {worst:.3e} exceeds 1e-4"
        )));
    }
    Ok(())
}

fn check_rollout_identities() -> Result<()> {
    let (policy, dynamics, dae) = random_models(1)?;
    let state = [0.3, 0.7, 0.6, 0.2];

    let single = unc_rollout(&state, &policy, &dynamics, &dae, 1)?;
    let direct = dae_error(&dae, &state)?;
    if single.value != direct {
        return Err(imlab::error::Error::Training(
            "single-step rollout differs from direct energy".into(),
        ));
    }

    // Zero dynamics freeze the imagined state, so every step scores the
    // same energy.
    let frozen = DynamicsModel {
        params: MlpParams::zeros(mlp_spec(6, 4, 8, 1))?,
        norm: identity_norm(4, 2),
    };
    let est = unc_rollout(&state, &policy, &frozen, &dae, 7)?;
    if est.per_step_errors.iter().any(|&e| e != direct) {
        return Err(imlab::error::Error::Training(
            "frozen-imagination rollout scored a drifting state".into(),
        ));
    }
    if (est.value - direct).abs() > 1e-12 * direct.abs() {
        return Err(imlab::error::Error::Training(
            "frozen-imagination mean deviates from the per-step energy".into(),
        ));
    }
    Ok(())
}

fn check_planner_refinement() -> Result<()> {
    let (policy, dynamics, dae) = random_models(2)?;
    let state = [0.4, 0.4, 0.8, 0.3];
    let cfg = PlannerConfig {
        optimizer: PlanOptimizer::Cem,
        n_candidates: 32,
        cem_iters: 4,
        seed: 5,
        ..PlannerConfig::default()
    };
    let plan = plan_min_uncertainty(&state, &policy, &dynamics, &dae, &cfg, 1)?;
    if plan.actions.len() != cfg.horizon {
        return Err(imlab::error::Error::Training(
            "plan length differs from horizon".into(),
        ));
    }
    if plan.iteration_best.windows(2).any(|w| w[1] > w[0]) {
        return Err(imlab::error::Error::Training(
            "refinement round regressed the best objective".into(),
        ));
    }
    if plan.terminal_uncertainty != *plan.iteration_best.last().unwrap() {
        return Err(imlab::error::Error::Training(
            "reported objective is not the last round's best".into(),
        ));
    }
    Ok(())
}

fn check_beta_zero_reduction() -> Result<()> {
    let (policy, dynamics, dae) = random_models(3)?;
    let bundle = imlab::models::ModelBundle {
        schema_version: imlab::models::MODEL_SCHEMA_VERSION,
        env: EnvKind::PointReach,
        policy,
        dynamics,
        dae,
        train_cfg: TrainConfig::default(),
    };
    let instance = sample_instance(&mut Rng::new(9), EnvKind::PointReach);
    let ctrl = ControllerConfig {
        beta: 0.0,
        ..ControllerConfig::default()
    };
    let bc = run_episode(
        EnvKind::PointReach,
        &instance,
        ControllerKind::BcOnly,
        &bundle,
        &ctrl,
        None,
    )?;
    let hybrid = run_episode(
        EnvKind::PointReach,
        &instance,
        ControllerKind::Hybrid,
        &bundle,
        &ctrl,
        None,
    )?;
    if bc != hybrid {
        return Err(imlab::error::Error::Training(
            "beta=0 hybrid episode differs from plain policy episode".into(),
        ));
    }
    Ok(())
}

fn check_threshold_arithmetic() -> Result<()> {
    let mut rng = Rng::new(4);
    let dataset = imlab::active::collect_passive(EnvKind::PointReach, 2, &mut rng)?;
    let (_, _, mut dae) = random_models(4)?;
    dae.norm = imlab::models::fit_norm(&dataset)?;

    let a = calibrate_threshold(&dae, &dataset, 1.5)?;
    let b = calibrate_threshold(&dae, &dataset, 3.0)?;
    if a.threshold != a.err_train * a.u_thr_mult {
        return Err(imlab::error::Error::Training(
            "threshold is not err_train times the multiplier".into(),
        ));
    }
    if b.threshold != 2.0 * a.threshold || b.err_train != a.err_train {
        return Err(imlab::error::Error::Training(
            "doubling the multiplier did not exactly double the threshold".into(),
        ));
    }
    if a.degenerate {
        return Err(imlab::error::Error::Training(
            "random reconstruction flagged as degenerate".into(),
        ));
    }
    Ok(())
}

fn check_experiment_reproducibility() -> Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.env = EnvKind::PointReach;
    cfg.method = Method::Passive;
    cfg.n_seeds = 1;
    cfg.test_set_size = 2;
    cfg.active.n_total = 2;
    cfg.active.retrain_every = 1;
    cfg.active.train = TrainConfig {
        epochs: 40,
        ..TrainConfig::default()
    };

    let a = run_experiment(&cfg)?;
    let b = run_experiment(&cfg)?;
    if experiment_metrics_csv(&a) != experiment_metrics_csv(&b) {
        return Err(imlab::error::Error::Training(
            "identical configs produced different metrics".into(),
        ));
    }
    let table = compare(&a, &b)?;
    if table.ties != a.seeds.len() || table.wins_a + table.wins_b != 0 {
        return Err(imlab::error::Error::Training(
            "self-comparison is not all ties".into(),
        ));
    }
    Ok(())
}

pub fn run_all() -> ExitCode {
    let checks: [(&str, fn() -> Result<()>); 6] = [
        ("gradients match finite differences", check_gradients),
        ("imagination rollout identities", check_rollout_identities),
        ("planner refinement is monotone", check_planner_refinement),
        ("beta=0 hybrid reduces to the policy", check_beta_zero_reduction),
        ("threshold calibration arithmetic", check_threshold_arithmetic),
        ("experiment rerun is byte-identical", check_experiment_reproducibility),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("ok   {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if failed == 0 {
        println!("selftest: all {} checks passed", checks.len());
        ExitCode::SUCCESS
    } else {
        println!("selftest: {failed} of {} checks failed", checks.len());
        ExitCode::FAILURE
    }
}
