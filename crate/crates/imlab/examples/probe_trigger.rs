//! Scratch probe: weight-decay sweep against the success-count spread across
//! train seeds at fixed data.

use imlab::active::collect_passive;
use imlab::control::{run_episode, ControllerConfig, ControllerKind};
use imlab::envs::{sample_instances, EnvKind};
use imlab::models::{ModelBundle, TrainConfig};
use imlab::numkit::Rng;

fn main() {
    let kind = EnvKind::PushBlock;
    let mut test_rng = Rng::from_parts(7, &[0x9b]);
    let test = sample_instances(&mut test_rng, 50, kind);
    let ctrl = ControllerConfig::default();

    for data_seed in 0..3u64 {
        let mut rng = Rng::from_parts(data_seed, &[0x99]);
        let ds = collect_passive(kind, 40, &mut rng).unwrap();
        for wd in [0.0, 0.003, 0.01, 0.03, 0.1] {
            let mut counts = Vec::new();
            for train_seed in 0..6u64 {
                let cfg = TrainConfig {
                    weight_decay: wd,
                    seed: train_seed,
                    ..TrainConfig::default()
                };
                let bundle = ModelBundle::train(&ds, &cfg).unwrap();
                let n = test
                    .iter()
                    .filter(|inst| {
                        run_episode(kind, inst, ControllerKind::BcOnly, &bundle, &ctrl, None)
                            .unwrap()
                            .success
                    })
                    .count();
                counts.push(n);
            }
            let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
            let var = counts
                .iter()
                .map(|&c| (c as f64 - mean).powi(2))
                .sum::<f64>()
                / (counts.len() - 1) as f64;
            println!(
                "data {data_seed} wd {wd:>5}: counts {counts:?} mean {mean:.1} sd {:.2}",
                var.sqrt()
            );
        }
        println!();
    }
}
