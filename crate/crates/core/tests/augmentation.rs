//! One augmentation round on a small seed set should not make raw
//! predictions worse on targets neither model has seen.

use cddgeo::atlas::{AtlasConfig, CostateAtlas};
use cddgeo::geodesic::{GeodesicFlow, JumpSchedule, Penalty, Target};
use cddgeo::noise::NoiseParams;
use cddgeo::surrogate::{
    admit, atlas_records, augment, fit, generate_targets, predict_costate, AugmentConfig, Mlp,
    TrainConfig,
};
use cddgeo::synthesis::SynthesisOptions;

fn mean_raw_infidelity(model: &Mlp, flow: &GeodesicFlow, targets: &[[f64; 3]]) -> f64 {
    targets
        .iter()
        .map(|&u| {
            flow.infidelity(
                &predict_costate(model, u),
                Penalty::SubRiemannian,
                &Target::from_axis(u),
            )
            .unwrap_or(1.0)
        })
        .sum::<f64>()
        / targets.len() as f64
}

#[test]
fn one_round_on_200_points_does_not_raise_mean_raw_infidelity() {
    let p = NoiseParams::default();
    let opts = SynthesisOptions {
        schedule: JumpSchedule {
            q_in: 10.0,
            q_max: 500.0,
            n_it: 30,
        },
        restarts: 0,
        ..SynthesisOptions::default()
    };
    let flow = GeodesicFlow::new(&p, opts.grid_n).unwrap();
    let atlas_cfg = AtlasConfig {
        rays: 17,
        shells: 16,
        ..AtlasConfig::default()
    };
    let atlas = CostateAtlas::build(&flow, &opts, &atlas_cfg).unwrap();
    let aug = AugmentConfig::default();
    let seed_set = admit(
        atlas_records(&atlas, &generate_targets(200, 41), &p, &opts, 1).unwrap(),
        aug.threshold,
    );
    assert!(seed_set.len() >= 190, "{} seed rows", seed_set.len());
    let fresh = generate_targets(100, 99);

    let seeds = [1u64, 2, 3];
    let (mut before, mut after) = (0.0, 0.0);
    for &s in &seeds {
        let cfg = TrainConfig {
            seed: s,
            ..TrainConfig::default()
        };
        let model = fit(&seed_set, &[], &cfg).unwrap().0;
        let mut grown = seed_set.clone();
        let round = AugmentConfig {
            max_rounds: 1,
            target_size: usize::MAX,
            seed: 100 + s,
            ..aug.clone()
        };
        let (augmented, _) =
            augment(&model, &mut grown, &p, opts.grid_n, &round, &cfg, 1, |_| Ok(())).unwrap();
        let (b, a) = (
            mean_raw_infidelity(&model, &flow, &fresh),
            mean_raw_infidelity(&augmented, &flow, &fresh),
        );
        eprintln!("seed {s}: {} rows, mean raw infidelity {b:.4} -> {a:.4}", grown.len());
        before += b;
        after += a;
    }
    let n = seeds.len() as f64;
    eprintln!("average {:.4} -> {:.4}", before / n, after / n);
    assert!(after <= before);
}
