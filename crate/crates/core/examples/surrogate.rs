//! Small end-to-end surrogate run: sample a dataset from the costate atlas,
//! train, histogram the raw predictions, augment once.
//!
//! cargo run --release --example surrogate -- [n_targets] [jobs]

use cddgeo::config::RunConfig;
use cddgeo::geodesic::GeodesicFlow;
use cddgeo::surrogate::{
    admit, augment, evaluate_histogram, fit, generate_targets, records_by, split_train_test,
    HISTOGRAM_EDGES,
};

fn main() -> cddgeo::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args
        .next()
        .map_or(Ok(120), |s| s.parse())
        .map_err(|e| cddgeo::Error::InvalidArgument(format!("{e}")))?;
    let jobs: usize = args
        .next()
        .map_or(Ok(1), |s| s.parse())
        .map_err(|e| cddgeo::Error::InvalidArgument(format!("{e}")))?;
    let cfg = RunConfig::default();

    let targets = generate_targets(n, cfg.seed);
    let records = admit(
        records_by(
            cfg.dataset.method,
            &cfg.atlas,
            &targets,
            &cfg.noise,
            &cfg.dataset_options(),
            jobs,
        )?,
        cfg.augment.threshold,
    );
    let (train_set, test_set) = split_train_test(&records, cfg.dataset.test_fraction, cfg.seed);
    println!(
        "{} admitted of {n}: {} train, {} test",
        records.len(),
        train_set.len(),
        test_set.len()
    );

    let train_cfg = cfg.train_config();
    let (model, rep) = fit(&train_set, &test_set, &train_cfg)?;
    println!(
        "loss after {} epochs: train {:.4}, val {:.4}",
        rep.train_loss.len(),
        rep.train_loss.last().unwrap(),
        rep.val_loss.last().unwrap()
    );

    let flow = GeodesicFlow::new(&cfg.noise, cfg.grid_n)?;
    print!(
        "{}",
        evaluate_histogram(&model, &test_set, &flow, &HISTOGRAM_EDGES).csv()
    );

    let mut grown = train_set;
    let aug = cddgeo::surrogate::AugmentConfig {
        batch: 20,
        max_rounds: 1,
        ..cfg.augment_config()
    };
    let (model, rounds) = augment(
        &model,
        &mut grown,
        &cfg.noise,
        cfg.grid_n,
        &aug,
        &train_cfg,
        jobs,
        |_| Ok(()),
    )?;
    for r in &rounds {
        println!(
            "augmentation: {}/{} admitted, mean raw infidelity {:.3e}, {} rows",
            r.admitted, r.proposed, r.mean_raw_infidelity, r.dataset_size
        );
    }
    print!(
        "{}",
        evaluate_histogram(&model, &test_set, &flow, &HISTOGRAM_EDGES).csv()
    );
    Ok(())
}
