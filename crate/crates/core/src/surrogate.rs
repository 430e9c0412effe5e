//! Regression MLP from target axis-angle vectors `u ∈ ℝ³` to costates
//! `Λ₀ ∈ ℝ⁶`, with the dataset tooling around it.
//!
//! Outputs are standardised per component with statistics frozen at model
//! creation; losses are reported in those standardised units.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algebra::GammaVector;
use crate::atlas::{AtlasConfig, CostateAtlas};
use crate::error::{Error, Result};
use crate::geodesic::{shoot_homotopy, GeodesicFlow, Penalty, Target};
use crate::noise::NoiseParams;
use crate::synthesis::{synthesize, SynthesisOptions};

pub const INPUT_DIM: usize = 3;
pub const OUTPUT_DIM: usize = 6;
const MODEL_FORMAT: &str = "cddgeo-mlp";
const MODEL_VERSION: u32 = 1;

/// One training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub u: [f64; 3],
    pub lambda: [f64; 6],
    pub infidelity: f64,
    pub q_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub l2: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256; 5],
            dropout: 0.3,
            l2: 0.002,
            lr: 1e-3,
            batch: 32,
            epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![INPUT_DIM];
        s.extend(&self.hidden);
        s.push(OUTPUT_DIM);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout)
            || self.l2 < 0.0
            || !(self.lr > 0.0)
            || self.batch == 0
            || self.hidden.contains(&0)
        {
            return Err(Error::InvalidArgument(format!(
                "bad training configuration {self:?}"
            )));
        }
        Ok(())
    }
}

/// Fully connected network, ReLU on hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub shape: Vec<usize>,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub out_mean: Vec<f64>,
    pub out_scale: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    shape: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    out_mean: Vec<f64>,
    out_scale: Vec<f64>,
}

struct Grads {
    w: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
}

fn relu(m: &mut DMatrix<f64>) {
    m.iter_mut().for_each(|x| *x = x.max(0.0));
}

impl Mlp {
    /// He-normal weights, zero biases, identity output scaling.
    pub fn new(shape: &[usize], seed: u64) -> Result<Self> {
        if shape.len() < 2 || shape.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer shape {shape:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in shape.windows(2) {
            let std = (2.0 / w[0] as f64).sqrt();
            weights.push(DMatrix::from_fn(w[1], w[0], |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                std * z
            }));
            biases.push(DVector::zeros(w[1]));
        }
        let n_out = *shape.last().expect("non-empty");
        Ok(Self {
            shape: shape.to_vec(),
            weights,
            biases,
            out_mean: vec![0.0; n_out],
            out_scale: vec![1.0; n_out],
        })
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Freezes per-component output statistics from `ys` (columns).
    fn set_scaling(&mut self, ys: &DMatrix<f64>) {
        for i in 0..ys.nrows() {
            let row = ys.row(i);
            let mean = row.mean();
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            self.out_mean[i] = mean;
            self.out_scale[i] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
    }

    fn standardize(&self, ys: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(ys.nrows(), ys.ncols(), |i, j| {
            (ys[(i, j)] - self.out_mean[i]) / self.out_scale[i]
        })
    }

    /// Standardised outputs for a batch of column inputs. `masks` are
    /// inverted-dropout multipliers per hidden layer.
    fn forward(&self, x: &DMatrix<f64>, masks: Option<&[DMatrix<f64>]>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * acts.last().expect("input");
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                relu(&mut z);
                if let Some(m) = masks {
                    z.component_mul_assign(&m[l]);
                }
            }
            acts.push(z);
        }
        acts
    }

    fn l2_penalty(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_squared()).sum()
    }

    /// `mean((ŷ − y)²) + l2·Σw²` and its gradient.
    fn loss_and_grad(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        masks: Option<&[DMatrix<f64>]>,
        l2: f64,
    ) -> (f64, Grads) {
        let acts = self.forward(x, masks);
        let out = acts.last().expect("output");
        let diff = out - y;
        let count = diff.len() as f64;
        let loss = diff.norm_squared() / count + l2 * self.l2_penalty();
        let mut delta = diff * (2.0 / count);
        let n = self.weights.len();
        let mut gw = vec![DMatrix::zeros(0, 0); n];
        let mut gb = vec![DVector::zeros(0); n];
        for l in (0..n).rev() {
            gw[l] = &delta * acts[l].transpose() + &self.weights[l] * (2.0 * l2);
            gb[l] = delta.column_sum();
            if l > 0 {
                let mut back = self.weights[l].transpose() * &delta;
                // acts[l] already carries the ReLU and the dropout factor.
                let a = &acts[l];
                for ((d, &av), i) in back.iter_mut().zip(a.iter()).zip(0..) {
                    let keep = match masks {
                        Some(m) => m[l - 1].as_slice()[i],
                        None => 1.0,
                    };
                    *d = if av > 0.0 { *d * keep } else { 0.0 };
                }
                delta = back;
            }
        }
        (loss, Grads { w: gw, b: gb })
    }

    /// Training objective with dropout off, and its gradient flattened layer
    /// by layer as weights (column-major) followed by biases.
    pub fn objective(&self, records: &[DatasetRecord], l2: f64) -> (f64, Vec<f64>) {
        let (x, y) = batch_matrices(records, &(0..records.len()).collect::<Vec<_>>());
        let (loss, g) = self.loss_and_grad(&x, &self.standardize(&y), None, l2);
        let flat =
            g.w.iter()
                .zip(&g.b)
                .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
                .collect();
        (loss, flat)
    }

    /// Data MSE in standardised units, dropout off.
    pub fn mse(&self, records: &[DatasetRecord]) -> f64 {
        if records.is_empty() {
            return f64::NAN;
        }
        let (x, y) = batch_matrices(records, &(0..records.len()).collect::<Vec<_>>());
        let out = self.forward(&x, None).pop().expect("output");
        (out - self.standardize(&y)).norm_squared() / (y.len() as f64)
    }

    /// Forward pass for one input in physical units.
    pub fn predict(&self, input: &[f64]) -> Vec<f64> {
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        let out = self.forward(&x, None).pop().expect("output");
        out.iter()
            .enumerate()
            .map(|(i, v)| v * self.out_scale[i] + self.out_mean[i])
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            shape: self.shape.clone(),
            weights: self.weights.iter().map(|w| w.as_slice().to_vec()).collect(),
            biases: self.biases.iter().map(|b| b.as_slice().to_vec()).collect(),
            out_mean: self.out_mean.clone(),
            out_scale: self.out_scale.clone(),
        };
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    /// Loads a model; a header or payload that disagrees with `expected`
    /// (or with itself) is a [`Error::ShapeMismatch`].
    pub fn load(path: &Path, expected: Option<&[usize]>) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::Schema(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        if let Some(e) = expected {
            if e != file.shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: e.to_vec(),
                    found: file.shape,
                });
            }
        }
        let shape = file.shape;
        let layers = shape.len().saturating_sub(1);
        let found: Vec<usize> = file.weights.iter().map(Vec::len).collect();
        let want: Vec<usize> = shape.windows(2).map(|w| w[0] * w[1]).collect();
        let n_out = shape.last().copied().unwrap_or(0);
        if found != want
            || file.biases.len() != layers
            || file
                .biases
                .iter()
                .zip(shape.iter().skip(1))
                .any(|(b, &n)| b.len() != n)
            || file.out_mean.len() != n_out
            || file.out_scale.len() != n_out
        {
            return Err(Error::ShapeMismatch {
                expected: want,
                found,
            });
        }
        let weights = file
            .weights
            .iter()
            .zip(shape.windows(2))
            .map(|(w, s)| DMatrix::from_column_slice(s[1], s[0], w))
            .collect();
        let biases = file
            .biases
            .iter()
            .map(|b| DVector::from_column_slice(b))
            .collect();
        Ok(Self {
            shape,
            weights,
            biases,
            out_mean: file.out_mean,
            out_scale: file.out_scale,
        })
    }
}

fn batch_matrices(records: &[DatasetRecord], idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = DMatrix::from_fn(INPUT_DIM, idx.len(), |i, j| records[idx[j]].u[i]);
    let y = DMatrix::from_fn(OUTPUT_DIM, idx.len(), |i, j| records[idx[j]].lambda[i]);
    (x, y)
}

struct Adam {
    mw: Vec<DMatrix<f64>>,
    vw: Vec<DMatrix<f64>>,
    mb: Vec<DVector<f64>>,
    vb: Vec<DVector<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(m: &Mlp) -> Self {
        let zw = || {
            m.weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect::<Vec<_>>()
        };
        let zb = || {
            m.biases
                .iter()
                .map(|b| DVector::zeros(b.len()))
                .collect::<Vec<_>>()
        };
        Self {
            mw: zw(),
            vw: zw(),
            mb: zb(),
            vb: zb(),
            t: 0,
        }
    }

    fn step(&mut self, m: &mut Mlp, g: &Grads, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let upd = |p: &mut [f64], g: &[f64], mo: &mut [f64], ve: &mut [f64]| {
            for i in 0..p.len() {
                mo[i] = Self::B1 * mo[i] + (1.0 - Self::B1) * g[i];
                ve[i] = Self::B2 * ve[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr * (mo[i] / c1) / ((ve[i] / c2).sqrt() + Self::EPS);
            }
        };
        for l in 0..m.weights.len() {
            upd(
                m.weights[l].as_mut_slice(),
                g.w[l].as_slice(),
                self.mw[l].as_mut_slice(),
                self.vw[l].as_mut_slice(),
            );
            upd(
                m.biases[l].as_mut_slice(),
                g.b[l].as_slice(),
                self.mb[l].as_mut_slice(),
                self.vb[l].as_mut_slice(),
            );
        }
    }
}

/// Per-epoch data MSE (standardised units, dropout off).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Continues training `model` in place. On a non-finite loss the model is
/// restored to the last finite epoch and [`Error::Diverged`] is returned.
pub fn train(
    model: &mut Mlp,
    train_set: &[DatasetRecord],
    val_set: &[DatasetRecord],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a11_u64);
    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport::default();
    let mut checkpoint = model.clone();
    let keep = 1.0 - cfg.dropout;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let (x, y) = batch_matrices(train_set, chunk);
            let y = model.standardize(&y);
            let masks: Option<Vec<DMatrix<f64>>> = (cfg.dropout > 0.0).then(|| {
                model.shape[1..model.shape.len() - 1]
                    .iter()
                    .map(|&w| {
                        DMatrix::from_fn(w, chunk.len(), |_, _| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect()
            });
            let (_, g) = model.loss_and_grad(&x, &y, masks.as_deref(), cfg.l2);
            adam.step(model, &g, cfg.lr);
        }
        let tl = model.mse(train_set);
        if !tl.is_finite()
            || model
                .weights
                .iter()
                .any(|w| w.iter().any(|v| !v.is_finite()))
        {
            *model = checkpoint;
            return Err(Error::Diverged { epoch });
        }
        report.train_loss.push(tl);
        if !val_set.is_empty() {
            report.val_loss.push(model.mse(val_set));
        }
        checkpoint.clone_from(model);
    }
    Ok(report)
}

/// Fresh model with output statistics from `train_set`, then [`train`].
pub fn fit(
    train_set: &[DatasetRecord],
    val_set: &[DatasetRecord],
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut model = Mlp::new(&cfg.shape(), cfg.seed)?;
    let (_, y) = batch_matrices(train_set, &(0..train_set.len()).collect::<Vec<_>>());
    model.set_scaling(&y);
    let report = train(&mut model, train_set, val_set, cfg)?;
    Ok((model, report))
}

/// Seeded partition of `0..n` into `k` disjoint folds covering every index.
pub fn fold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= k <= n (k = {k}, n = {n})"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, j) in idx.into_iter().enumerate() {
        folds[i % k].push(j);
    }
    Ok(folds)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<Vec<usize>>,
    pub reports: Vec<TrainReport>,
    pub mean_train: Vec<f64>,
    pub mean_val: Vec<f64>,
}

fn mean_curve(curves: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let curves: Vec<Vec<f64>> = curves.collect();
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|e| curves.iter().map(|c| c[e]).sum::<f64>() / curves.len() as f64)
        .collect()
}

pub fn kfold_crossval(
    records: &[DatasetRecord],
    k: usize,
    cfg: &TrainConfig,
) -> Result<CrossValReport> {
    let folds = fold_partition(records.len(), k, cfg.seed)?;
    let mut reports = Vec::with_capacity(k);
    for (f, held) in folds.iter().enumerate() {
        let mut is_held = vec![false; records.len()];
        held.iter().for_each(|&i| is_held[i] = true);
        let tr: Vec<DatasetRecord> = records
            .iter()
            .zip(&is_held)
            .filter(|(_, h)| !**h)
            .map(|(r, _)| r.clone())
            .collect();
        let va: Vec<DatasetRecord> = held.iter().map(|&i| records[i].clone()).collect();
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(f as u64 + 1),
            ..cfg.clone()
        };
        let (_, rep) = fit(&tr, &va, &fold_cfg)?;
        reports.push(rep);
    }
    let mean_train = mean_curve(reports.iter().map(|r| r.train_loss.clone()));
    let mean_val = mean_curve(reports.iter().map(|r| r.val_loss.clone()));
    Ok(CrossValReport {
        folds,
        reports,
        mean_train,
        mean_val,
    })
}

/// First epoch (1-based) after which the best loss never improves by more
/// than the relative margin `rel` during the remaining run, provided at
/// least `window` epochs follow it.
pub fn plateau_epoch(curve: &[f64], window: usize, rel: f64) -> Option<usize> {
    let n = curve.len();
    let mut suffix_min = vec![f64::INFINITY; n + 1];
    for i in (0..n).rev() {
        suffix_min[i] = suffix_min[i + 1].min(curve[i]);
    }
    let mut best = f64::INFINITY;
    for e in 0..n {
        best = best.min(curve[e]);
        if n - e - 1 >= window && suffix_min[e + 1] >= best * (1.0 - rel) {
            return Some(e + 1);
        }
    }
    None
}

/// `n` vectors `θ û` with `û` uniform on the sphere and `θ` uniform in `[0, π]`.
pub fn generate_targets(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let g: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if norm > 1e-12 {
                let theta = rng.random_range(0.0..=std::f64::consts::PI);
                break g.map(|x| theta * x / norm);
            }
        })
        .collect()
}

/// Seeded split with `test_fraction` of the rows held out.
pub fn split_train_test(
    records: &[DatasetRecord],
    test_fraction: f64,
    seed: u64,
) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((records.len() as f64) * test_fraction).round() as usize;
    let test = idx[..n_test].iter().map(|&i| records[i].clone()).collect();
    let train = idx[n_test..].iter().map(|&i| records[i].clone()).collect();
    (train, test)
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    jobs: usize,
    f: impl Fn(usize, &T) -> R + Sync,
) -> Vec<R> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// How dataset costates are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RecordMethod {
    /// Sample one lowest-energy field built by continuation.
    #[default]
    Atlas,
    /// Independent homotopy per target.
    Homotopy,
}

impl std::str::FromStr for RecordMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "atlas" => Ok(Self::Atlas),
            "homotopy" => Ok(Self::Homotopy),
            other => Err(Error::InvalidArgument(format!(
                "unknown record method '{other}' (expected atlas or homotopy)"
            ))),
        }
    }
}

fn homotopy_record(
    i: usize,
    u: [f64; 3],
    p: &NoiseParams,
    opts: &SynthesisOptions,
) -> Option<DatasetRecord> {
    match synthesize(&Target::from_axis(u), p, None, None, opts) {
        Ok(s) => Some(DatasetRecord {
            u,
            lambda: s.solution.costate0.0,
            infidelity: s.solution.infidelity,
            q_max: s.q_reached,
        }),
        Err(e) => {
            log::warn!("target {i} {u:?} failed: {e}");
            None
        }
    }
}

/// Solves each target independently with the homotopy, without restarts.
/// Failed solves are logged and dropped.
pub fn generate_records(
    targets: &[[f64; 3]],
    p: &NoiseParams,
    opts: &SynthesisOptions,
    jobs: usize,
) -> Vec<DatasetRecord> {
    let opts = SynthesisOptions {
        restarts: 0,
        ..*opts
    };
    parallel_map(targets, jobs, |i, u| homotopy_record(i, *u, p, &opts))
        .into_iter()
        .flatten()
        .collect()
}

/// Samples `atlas` at each target; targets it cannot reach fall back to the
/// homotopy.
pub fn atlas_records(
    atlas: &CostateAtlas,
    targets: &[[f64; 3]],
    p: &NoiseParams,
    opts: &SynthesisOptions,
    jobs: usize,
) -> Result<Vec<DatasetRecord>> {
    let opts = SynthesisOptions {
        restarts: 0,
        ..*opts
    };
    let flow = GeodesicFlow::new(p, opts.grid_n)?;
    let recs = parallel_map(targets, jobs, |i, u| {
        let Some(lam) = atlas.solve(&flow, *u) else {
            log::debug!("target {i} {u:?} outside the atlas, using the homotopy");
            return homotopy_record(i, *u, p, &opts);
        };
        let infidelity = flow
            .infidelity(&lam, Penalty::SubRiemannian, &Target::from_axis(*u))
            .unwrap_or(1.0);
        Some(DatasetRecord {
            u: *u,
            lambda: lam.0,
            infidelity,
            q_max: opts.schedule.q_max,
        })
    });
    Ok(recs.into_iter().flatten().collect())
}

/// Builds the atlas when `method` needs it, then solves every target.
pub fn records_by(
    method: RecordMethod,
    atlas: &AtlasConfig,
    targets: &[[f64; 3]],
    p: &NoiseParams,
    opts: &SynthesisOptions,
    jobs: usize,
) -> Result<Vec<DatasetRecord>> {
    match method {
        RecordMethod::Homotopy => Ok(generate_records(targets, p, opts, jobs)),
        RecordMethod::Atlas => {
            let flow = GeodesicFlow::new(p, opts.grid_n)?;
            let built = CostateAtlas::build(
                &flow,
                &SynthesisOptions {
                    restarts: 0,
                    ..*opts
                },
                atlas,
            )?;
            log::info!(
                "atlas covers {} of {} nodes",
                built.coverage(),
                built.nodes.len()
            );
            atlas_records(&built, targets, p, opts, jobs)
        }
    }
}

/// Rows with `infidelity < threshold`.
pub fn admit(records: Vec<DatasetRecord>, threshold: f64) -> Vec<DatasetRecord> {
    records
        .into_iter()
        .filter(|r| r.infidelity < threshold)
        .collect()
}

pub fn predict_costate(model: &Mlp, u: [f64; 3]) -> GammaVector {
    GammaVector::from_slice(&model.predict(&u)).expect("six outputs")
}

/// Sub-Riemannian infidelity of the raw prediction (1 if propagation fails).
pub fn prediction_infidelity(flow: &GeodesicFlow, model: &Mlp, u: [f64; 3]) -> f64 {
    flow.infidelity(
        &predict_costate(model, u),
        Penalty::SubRiemannian,
        &Target::from_axis(u),
    )
    .unwrap_or(1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin `i` is `[edges[i], edges[i+1])`; the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub fractions: Vec<f64>,
    pub infidelities: Vec<f64>,
}

impl Histogram {
    /// Values below the first edge are counted in the first bin.
    pub fn from_values(values: Vec<f64>, edges: &[f64]) -> Self {
        let nb = edges.len() - 1;
        let mut counts = vec![0; nb];
        for &v in &values {
            let bin = edges[1..].iter().position(|&e| v < e).unwrap_or(nb - 1);
            counts[bin] += 1;
        }
        let total = values.len().max(1) as f64;
        Self {
            edges: edges.to_vec(),
            fractions: counts.iter().map(|&c| c as f64 / total).collect(),
            counts,
            infidelities: values,
        }
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("lo,hi,count,fraction\n");
        for i in 0..self.counts.len() {
            s += &format!(
                "{:e},{:e},{},{}\n",
                self.edges[i],
                self.edges[i + 1],
                self.counts[i],
                self.fractions[i]
            );
        }
        s
    }
}

/// Default bins: `[1e-4, 1e-1)` and `[1e-1, 1]`.
pub const HISTOGRAM_EDGES: [f64; 3] = [1e-4, 1e-1, 1.0];

pub fn evaluate_histogram(
    model: &Mlp,
    records: &[DatasetRecord],
    flow: &GeodesicFlow,
    edges: &[f64],
) -> Histogram {
    Histogram::from_values(
        records
            .iter()
            .map(|r| prediction_infidelity(flow, model, r.u))
            .collect(),
        edges,
    )
}

/// Prediction-vs-actual pairs per record.
pub fn prediction_pairs(model: &Mlp, records: &[DatasetRecord]) -> Vec<([f64; 6], [f64; 6])> {
    records
        .iter()
        .map(|r| (predict_costate(model, r.u).0, r.lambda))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub batch: usize,
    pub threshold: f64,
    /// Stop once the dataset has this many rows.
    pub target_size: usize,
    pub max_rounds: usize,
    /// Residual-homotopy steps when refining a prediction.
    pub homotopy_steps: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            batch: 100,
            threshold: 5e-3,
            target_size: 6000,
            max_rounds: 1,
            homotopy_steps: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentRound {
    pub proposed: usize,
    pub admitted: usize,
    pub mean_raw_infidelity: f64,
    pub dataset_size: usize,
}

/// Predict, refine by residual homotopy from the prediction, admit,
/// retrain; repeated until `target_size` or `max_rounds`. `on_admit` sees every admitted row (for append-only
/// persistence). Returns the retrained model and the per-round log.
pub fn augment(
    model: &Mlp,
    dataset: &mut Vec<DatasetRecord>,
    p: &NoiseParams,
    grid_n: usize,
    aug: &AugmentConfig,
    train_cfg: &TrainConfig,
    jobs: usize,
    mut on_admit: impl FnMut(&DatasetRecord) -> Result<()>,
) -> Result<(Mlp, Vec<AugmentRound>)> {
    let flow = GeodesicFlow::new(p, grid_n)?;
    let mut model = model.clone();
    let mut rounds = Vec::new();
    for round in 0..aug.max_rounds {
        if dataset.len() >= aug.target_size {
            break;
        }
        let targets = generate_targets(
            aug.batch,
            aug.seed
                .wrapping_add(round as u64)
                .wrapping_mul(0x9e37_79b9),
        );
        let results = parallel_map(&targets, jobs, |i, &u| {
            let seed = predict_costate(&model, u);
            let target = Target::from_axis(u);
            let raw = flow
                .infidelity(&seed, Penalty::SubRiemannian, &target)
                .unwrap_or(1.0);
            match shoot_homotopy(
                &flow,
                &seed,
                &target,
                Penalty::SubRiemannian,
                aug.homotopy_steps,
            ) {
                Ok(r) => (
                    raw,
                    Some(DatasetRecord {
                        u,
                        lambda: r.costate.0,
                        infidelity: r.infidelity,
                        q_max: f64::INFINITY,
                    }),
                ),
                Err(e) => {
                    log::warn!("augmentation target {i} {u:?} skipped: {e}");
                    (raw, None)
                }
            }
        });
        let mean_raw = results.iter().map(|r| r.0).sum::<f64>() / results.len().max(1) as f64;
        let mut admitted = 0;
        for rec in results.into_iter().filter_map(|r| r.1) {
            if rec.infidelity < aug.threshold {
                on_admit(&rec)?;
                dataset.push(rec);
                admitted += 1;
            }
        }
        let cfg = TrainConfig {
            seed: train_cfg.seed.wrapping_add(round as u64 + 1),
            ..train_cfg.clone()
        };
        model = fit(dataset, &[], &cfg)?.0;
        rounds.push(AugmentRound {
            proposed: aug.batch,
            admitted,
            mean_raw_infidelity: mean_raw,
            dataset_size: dataset.len(),
        });
        log::info!(
            "augmentation round {round}: admitted {admitted}/{}, dataset {}",
            aug.batch,
            dataset.len()
        );
    }
    Ok((model, rounds))
}

/// Reads JSON lines, skipping blank and corrupt lines. Returns the rows and
/// the number skipped.
pub fn read_dataset(path: &Path) -> Result<(Vec<DatasetRecord>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DatasetRecord>(&line) {
            Ok(r) if r.u.iter().chain(&r.lambda).all(|x| x.is_finite()) => out.push(r),
            _ => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Appends rows, creating the file if needed.
pub fn append_records(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut w = BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?,
    );
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_records(n: usize, seed: u64) -> Vec<DatasetRecord> {
        generate_targets(n, seed)
            .into_iter()
            .map(|u| {
                let lambda = [
                    u[0],
                    u[1],
                    u[2],
                    u[0] * u[1],
                    (u[2]).sin(),
                    -2.0 - u[0] * u[0],
                ];
                DatasetRecord {
                    u,
                    lambda,
                    infidelity: 0.0,
                    q_max: 2000.0,
                }
            })
            .collect()
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut m = Mlp::new(&[3, 4, 6], 11).unwrap();
        // Shift biases so no ReLU sits at its kink.
        m.biases[0] = DVector::from_vec(vec![0.31, -0.17, 0.23, 0.41]);
        let recs = toy_records(5, 3);
        let (x, y) = batch_matrices(&recs, &[0, 1, 2, 3, 4]);
        let l2 = 0.002;
        let (_, g) = m.loss_and_grad(&x, &y, None, l2);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for l in 0..m.weights.len() {
            for i in 0..m.weights[l].len() {
                let mut mp = m.clone();
                mp.weights[l].as_mut_slice()[i] += h;
                let mut mm = m.clone();
                mm.weights[l].as_mut_slice()[i] -= h;
                let fd = (mp.loss_and_grad(&x, &y, None, l2).0
                    - mm.loss_and_grad(&x, &y, None, l2).0)
                    / (2.0 * h);
                let a = g.w[l].as_slice()[i];
                worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(1e-6));
            }
            for i in 0..m.biases[l].len() {
                let mut mp = m.clone();
                mp.biases[l][i] += h;
                let mut mm = m.clone();
                mm.biases[l][i] -= h;
                let fd = (mp.loss_and_grad(&x, &y, None, l2).0
                    - mm.loss_and_grad(&x, &y, None, l2).0)
                    / (2.0 * h);
                let a = g.b[l][i];
                worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(1e-6));
            }
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn dropout_gradient_matches_masked_finite_differences() {
        let m = Mlp::new(&[3, 5, 5, 6], 2).unwrap();
        let recs = toy_records(4, 9);
        let (x, y) = batch_matrices(&recs, &[0, 1, 2, 3]);
        let masks = vec![
            DMatrix::from_fn(5, 4, |i, j| if (i + j) % 3 == 0 { 0.0 } else { 1.0 / 0.7 }),
            DMatrix::from_fn(5, 4, |i, j| if (i * j) % 4 == 1 { 0.0 } else { 1.0 / 0.7 }),
        ];
        let (_, g) = m.loss_and_grad(&x, &y, Some(&masks), 0.0);
        let h = 1e-6;
        for i in 0..m.weights[1].len() {
            let mut mp = m.clone();
            mp.weights[1].as_mut_slice()[i] += h;
            let mut mm = m.clone();
            mm.weights[1].as_mut_slice()[i] -= h;
            let fd = (mp.loss_and_grad(&x, &y, Some(&masks), 0.0).0
                - mm.loss_and_grad(&x, &y, Some(&masks), 0.0).0)
                / (2.0 * h);
            let a = g.w[1].as_slice()[i];
            assert!((a - fd).abs() < 1e-6 * (1.0 + a.abs()), "{a} vs {fd}");
        }
    }

    #[test]
    fn memorises_a_single_record() {
        let recs = toy_records(1, 5);
        let cfg = TrainConfig {
            hidden: vec![16; 2],
            dropout: 0.0,
            epochs: 2000,
            ..Default::default()
        };
        let (m, rep) = fit(&recs, &[], &cfg).unwrap();
        assert!(*rep.train_loss.last().unwrap() < 1e-4);
        let pred = m.predict(&recs[0].u);
        assert!(pred
            .iter()
            .zip(&recs[0].lambda)
            .all(|(a, b)| (a - b).abs() < 1e-2));
    }

    #[test]
    fn training_reduces_loss_and_l2_costs_fit() {
        let recs = toy_records(200, 1);
        let cfg = TrainConfig {
            hidden: vec![32; 3],
            epochs: 40,
            ..Default::default()
        };
        let (_, with) = fit(&recs, &[], &cfg).unwrap();
        assert!(with.train_loss.last().unwrap() < &with.train_loss[0]);
        let (_, without) = fit(&recs, &[], &TrainConfig { l2: 0.0, ..cfg }).unwrap();
        assert!(without.train_loss.last().unwrap() < with.train_loss.last().unwrap());
    }

    #[test]
    fn inference_is_deterministic() {
        let m = Mlp::new(&TrainConfig::default().shape(), 4).unwrap();
        let u = [0.3, -0.2, 1.1];
        assert_eq!(m.predict(&u), m.predict(&u));
    }

    #[test]
    fn folds_are_a_disjoint_cover() {
        let folds = fold_partition(103, 4, 8).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() >= 25));
        let loo = fold_partition(5, 5, 0).unwrap();
        assert!(loo.iter().all(|f| f.len() == 1));
        assert!(fold_partition(3, 4, 0).is_err());
        assert!(fold_partition(10, 1, 0).is_err());
    }

    #[test]
    fn leave_one_out_runs() {
        let recs = toy_records(4, 2);
        let cfg = TrainConfig {
            hidden: vec![8],
            epochs: 3,
            ..Default::default()
        };
        let cv = kfold_crossval(&recs, 4, &cfg).unwrap();
        assert_eq!(cv.reports.len(), 4);
        assert_eq!(cv.mean_val.len(), 3);
    }

    #[test]
    fn targets_cover_the_sphere() {
        let t = generate_targets(10_000, 1);
        assert!(t
            .iter()
            .all(|u| (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()
                <= std::f64::consts::PI + 1e-12));
        for k in 0..3 {
            let mean = t
                .iter()
                .map(|u| {
                    let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                    if n > 0.0 {
                        u[k] / n
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                / t.len() as f64;
            assert!(mean.abs() < 0.03, "{mean}");
        }
        assert_eq!(generate_targets(1, 42), generate_targets(1, 42));
    }

    #[test]
    fn plateau_detection() {
        let curve: Vec<f64> = (0..300)
            .map(|e| {
                if e < 100 {
                    1.0 / (1.0 + e as f64)
                } else {
                    0.0099
                }
            })
            .collect();
        let e = plateau_epoch(&curve, 50, 0.01).unwrap();
        assert!((95..=101).contains(&e), "{e}");
        let falling: Vec<f64> = (0..100).map(|e| 1.0 / (1.0 + e as f64)).collect();
        assert_eq!(plateau_epoch(&falling, 50, 0.01), None);
    }

    #[test]
    fn histogram_clamps_low_values() {
        let h = Histogram::from_values(vec![1e-9, 5e-3, 0.2, 0.9, 1.0], &HISTOGRAM_EDGES);
        assert_eq!(h.counts, vec![2, 3]);
        assert!((h.fractions[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn admission_filter_is_total() {
        let mut recs = toy_records(10, 3);
        for (i, r) in recs.iter_mut().enumerate() {
            r.infidelity = i as f64 * 1e-3;
        }
        let kept = admit(recs.clone(), 5e-3);
        assert_eq!(kept.len(), 5);
        assert!(kept.iter().all(|r| r.infidelity < 5e-3));
        assert_eq!(admit(recs, f64::INFINITY).len(), 10);
    }

    #[test]
    fn model_and_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mlp::new(&[3, 7, 6], 1).unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(Mlp::load(&path, Some(&[3, 7, 6])).unwrap(), m);
        assert!(matches!(
            Mlp::load(&path, Some(&[3, 8, 6])),
            Err(Error::ShapeMismatch { .. })
        ));

        let ds = dir.path().join("d.jsonl");
        let recs = toy_records(3, 4);
        append_records(&ds, &recs[..2]).unwrap();
        std::fs::OpenOptions::new()
            .append(true)
            .open(&ds)
            .unwrap()
            .write_all(b"{not json}\n")
            .unwrap();
        append_records(&ds, &recs[2..]).unwrap();
        let (back, skipped) = read_dataset(&ds).unwrap();
        assert_eq!(back, recs);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<usize> = (0..50).collect();
        assert_eq!(
            parallel_map(&v, 4, |_, x| x * 2),
            v.iter().map(|x| x * 2).collect::<Vec<_>>()
        );
    }
}
