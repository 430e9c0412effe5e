//! Command-line front end. The binary only forwards to [`run`].
//!
//! Exit codes: 0 success, 1 runtime failure, 2 tolerance miss, 3 input error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::algebra::C64;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::ControlField;
use crate::geodesic::{SolutionDocument, Target};
use crate::simulator::{plus_state, pure_state, trajectory_csv, trivial_hamiltonian};
use crate::surrogate::{
    admit, append_records, augment, evaluate_histogram, fit, generate_targets, kfold_crossval,
    plateau_epoch, prediction_pairs, read_dataset, records_by, split_train_test, DatasetRecord,
    Mlp, HISTOGRAM_EDGES,
};
use crate::synthesis::{
    compare_evolutions, design_target, synthesize, Comparison, Gate, NoiseModel, Protection,
    Synthesis,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "cddgeo",
    version,
    about = "Energy-optimal dynamical decoupling of single-qubit gates"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for batch commands.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the optimal control of a gate.
    Synthesize {
        #[arg(long, conflicts_with = "u")]
        gate: Option<String>,
        /// Axis-angle vector "a,b,c" with U = exp(-i u.sigma).
        #[arg(long, allow_hyphen_values = true)]
        u: Option<String>,
        /// dephasing | ampdamp
        #[arg(long, default_value = "dephasing")]
        noise: String,
        /// Surrogate model used to seed the solver.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Simulate a solution against the trivial and noise-only baselines.
    Simulate {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value = "dephasing")]
        noise: String,
        /// trivial | none
        #[arg(long, default_value = "trivial")]
        baseline: String,
        /// Initial state amplitudes "c0,c1" (real); default |+>.
        #[arg(long, allow_hyphen_values = true)]
        state: Option<String>,
        /// Also write Bloch trajectories in the Schrödinger picture.
        #[arg(long)]
        schrodinger: bool,
    },
    /// Solve random targets with the reduced schedule and write a JSON-lines dataset.
    Generate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train the surrogate on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Also run k-fold cross-validation with the configured k.
        #[arg(long)]
        kfold: bool,
    },
    /// Grow a dataset with refined surrogate predictions and retrain.
    Augment {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Histogram of raw-prediction infidelities.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Energy table for the library gates.
    CompareEnergy {
        /// Comma-separated gate names; default all four.
        #[arg(long)]
        gates: Option<String>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_)
                | Error::Schema(_)
                | Error::ShapeMismatch { .. }
                | Error::Io(_)
                | Error::Json(_) => EXIT_INPUT,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Error::InvalidArgument(format!("cannot read {}: {io}", p.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j.max(1);
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synthesize {
            gate,
            u,
            noise,
            model,
        } => cmd_synthesize(&cfg, gate.as_deref(), u.as_deref(), noise, model.as_deref()),
        Command::Simulate {
            solution,
            noise,
            baseline,
            state,
            schrodinger,
        } => cmd_simulate(
            &cfg,
            solution,
            noise,
            baseline,
            state.as_deref(),
            *schrodinger,
        ),
        Command::Generate { dataset, n } => cmd_generate(&cfg, dataset, *n),
        Command::Train {
            dataset,
            model,
            kfold,
        } => cmd_train(&cfg, dataset, model, *kfold),
        Command::Augment { dataset, model } => cmd_augment(&cfg, dataset, model),
        Command::Eval { dataset, model } => cmd_eval(&cfg, dataset, model),
        Command::CompareEnergy { gates } => cmd_compare_energy(&cfg, gates.as_deref()),
    }
}

fn parse_floats<const N: usize>(s: &str, what: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("{what}: {e}")))?;
    v.try_into().map_err(|_| {
        Error::InvalidArgument(format!("{what}: expected {N} comma-separated numbers"))
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// CSV with columns `t,wx,wy,wz`.
pub fn control_csv(f: &ControlField) -> String {
    let mut s = String::from("t,wx,wy,wz\n");
    for k in 0..f.len() {
        s += &format!("{},{},{},{}\n", f.t[k], f.wx[k], f.wy[k], f.wz[k]);
    }
    s
}

fn gate_label(gate: Option<&str>, u: Option<&str>) -> Result<(String, [f64; 3])> {
    match (gate, u) {
        (Some(g), _) => {
            let g: Gate = g.parse()?;
            Ok((g.name().to_string(), g.axis()))
        }
        (None, Some(u)) => Ok(("custom".to_string(), parse_floats::<3>(u, "--u")?)),
        (None, None) => Err(Error::InvalidArgument(
            "one of --gate or --u is required".into(),
        )),
    }
}

/// Runs the synthesis pipeline for a gate under `model` using `cfg`.
pub fn synthesize_for(
    cfg: &RunConfig,
    u: [f64; 3],
    model: NoiseModel,
    surrogate: Option<&Mlp>,
) -> Result<Synthesis> {
    let target = design_target(u, model)?;
    let seed = surrogate.map(|m| crate::surrogate::predict_costate(m, target.u));
    let protection =
        (cfg.synthesis.min_fidelity > 0.0 && cfg.noise.eta > 0.0).then_some(Protection {
            model,
            min_fidelity: cfg.synthesis.min_fidelity,
            omega0: cfg.ampdamp.omega0,
        });
    synthesize(
        &target,
        &cfg.noise,
        seed,
        protection.as_ref(),
        &cfg.synthesis_options(),
    )
}

fn cmd_synthesize(
    cfg: &RunConfig,
    gate: Option<&str>,
    u: Option<&str>,
    noise: &str,
    model: Option<&Path>,
) -> Result<i32> {
    let (name, u) = gate_label(gate, u)?;
    let model_kind: NoiseModel = noise.parse()?;
    let surrogate = model.map(|p| Mlp::load(p, None)).transpose()?;
    let s = synthesize_for(cfg, u, model_kind, surrogate.as_ref())?;
    let doc = s.solution.to_document(s.q_reached, &cfg.noise);
    let stem = format!("{name}_{noise}");
    write_json(&cfg.out_dir.join(format!("solution_{stem}.json")), &doc)?;
    std::fs::write(
        cfg.out_dir.join(format!("control_{stem}.csv")),
        control_csv(&doc.control),
    )?;
    write_json(
        &cfg.out_dir.join(format!("synthesis_{stem}.json")),
        &json!({
            "gate": name,
            "u": u,
            "noise_model": model_kind,
            "design_u": doc.u,
            "infidelity": doc.infidelity,
            "energy": doc.energy,
            "q_reached": s.q_reached,
            "converged": s.converged,
            "protected": s.protected,
            "protection": s.protection,
            "candidates": s.candidates,
            "history": s.history,
        }),
    )?;
    println!(
        "{name}: infidelity {:.3e}, energy {:.4}, protected {}",
        doc.infidelity, doc.energy, s.protected
    );
    Ok(if doc.infidelity <= cfg.tolerances.final_tol {
        EXIT_OK
    } else {
        EXIT_TOLERANCE
    })
}

fn comparison_summary(c: &Comparison) -> serde_json::Value {
    let evs: Vec<serde_json::Value> = c
        .evolutions()
        .map(|e| {
            json!({
                "label": e.label,
                "final_fidelity": e.final_fidelity(),
                "final_avg_fidelity": e.final_avg_fidelity(),
                "final_purity": crate::simulator::bloch_point(e.trajectory.last()).purity,
                "energy": e.energy(),
            })
        })
        .collect();
    json!({ "evolutions": evs })
}

fn bloch_csv(traj: &crate::simulator::DensityTrajectory) -> String {
    let mut s = String::from("t,x,y,z,purity\n");
    for (t, b) in traj.t.iter().zip(crate::simulator::bloch_export(traj)) {
        s += &format!("{t},{},{},{},{}\n", b.x, b.y, b.z, b.purity);
    }
    s
}

fn cmd_simulate(
    cfg: &RunConfig,
    solution: &Path,
    noise: &str,
    baseline: &str,
    state: Option<&str>,
    schrodinger: bool,
) -> Result<i32> {
    let model: NoiseModel = noise.parse()?;
    let with_trivial = match baseline {
        "trivial" => true,
        "none" => false,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown baseline '{other}' (expected trivial or none)"
            )))
        }
    };
    let text = std::fs::read_to_string(solution)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", solution.display())))?;
    let doc = SolutionDocument::from_json(&text)?;
    let p = doc.noise.unwrap_or(cfg.noise);
    let rho0 = match state {
        Some(s) => {
            let [a, b] = parse_floats::<2>(s, "--state")?;
            pure_state(C64::from(a), C64::from(b))
        }
        None => plus_state(),
    };
    let c = compare_evolutions(
        &doc.control,
        doc.u,
        &p,
        model,
        cfg.ampdamp.omega0,
        &rho0,
        with_trivial,
    )?;
    let stem = solution
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("solution")
        .trim_start_matches("solution_")
        .to_string();
    for e in c.evolutions() {
        std::fs::write(
            cfg.out_dir
                .join(format!("trajectory_{stem}_{}.csv", e.label)),
            trajectory_csv(&e.trajectory, &rho0)?,
        )?;
        let mut avg = String::from("t,F_avg\n");
        for (t, f) in e.trajectory.t.iter().zip(&e.avg_fidelity) {
            avg += &format!("{t},{f}\n");
        }
        std::fs::write(
            cfg.out_dir
                .join(format!("avg_fidelity_{stem}_{}.csv", e.label)),
            avg,
        )?;
        if schrodinger {
            std::fs::write(
                cfg.out_dir
                    .join(format!("bloch_schrodinger_{stem}_{}.csv", e.label)),
                bloch_csv(&e.schrodinger()?),
            )?;
        }
    }
    let mut summary = comparison_summary(&c);
    summary["solution"] = json!(solution.display().to_string());
    summary["noise_model"] = json!(model);
    summary["noise"] = json!(p);
    summary["geodesic_infidelity"] = json!(doc.infidelity);
    write_json(&cfg.out_dir.join(format!("summary_{stem}.json")), &summary)?;
    for e in c.evolutions() {
        println!(
            "{:<10} F(tau) {:.6}  avg {:.6}  energy {:.4}",
            e.label,
            e.final_fidelity(),
            e.final_avg_fidelity(),
            e.energy()
        );
    }
    Ok(EXIT_OK)
}

fn cmd_generate(cfg: &RunConfig, dataset: &Path, n: Option<usize>) -> Result<i32> {
    let n = n.unwrap_or(cfg.dataset.n_targets);
    let targets = generate_targets(n, cfg.seed);
    let recs = records_by(
        cfg.dataset.method,
        &cfg.atlas,
        &targets,
        &cfg.noise,
        &cfg.dataset_options(),
        cfg.jobs,
    )?;
    let kept = admit(recs, cfg.augment.threshold);
    append_records(dataset, &kept)?;
    println!(
        "{} of {n} targets admitted to {}",
        kept.len(),
        dataset.display()
    );
    Ok(EXIT_OK)
}

fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let (recs, skipped) = read_dataset(path).map_err(|e| match e {
        Error::Io(io) => Error::InvalidArgument(format!("cannot read {}: {io}", path.display())),
        other => other,
    })?;
    if skipped > 0 {
        eprintln!("skipped {skipped} corrupt lines in {}", path.display());
    }
    if recs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} holds no usable records",
            path.display()
        )));
    }
    Ok(recs)
}

fn pairs_csv(model: &Mlp, recs: &[DatasetRecord]) -> String {
    let mut s = String::from("component,predicted,actual\n");
    for (pred, actual) in prediction_pairs(model, recs) {
        for k in 0..6 {
            s += &format!("{},{},{}\n", k + 1, pred[k], actual[k]);
        }
    }
    s
}

fn cmd_train(cfg: &RunConfig, dataset: &Path, model_path: &Path, kfold: bool) -> Result<i32> {
    let recs = admit(load_dataset(dataset)?, cfg.augment.threshold);
    let (train_set, test_set) = split_train_test(&recs, cfg.dataset.test_fraction, cfg.seed);
    let tc = cfg.train_config();
    let (model, report) = fit(&train_set, &test_set, &tc)?;
    model.save(model_path)?;
    let flow = crate::geodesic::GeodesicFlow::new(&cfg.noise, cfg.grid_n)?;
    let h_train = evaluate_histogram(&model, &train_set, &flow, &HISTOGRAM_EDGES);
    let h_test = evaluate_histogram(&model, &test_set, &flow, &HISTOGRAM_EDGES);
    std::fs::write(cfg.out_dir.join("histogram_train.csv"), h_train.csv())?;
    std::fs::write(cfg.out_dir.join("histogram_test.csv"), h_test.csv())?;
    std::fs::write(
        cfg.out_dir.join("pairs_test.csv"),
        pairs_csv(&model, &test_set),
    )?;
    let cv = if kfold {
        Some(kfold_crossval(&train_set, cfg.dataset.kfold, &tc)?)
    } else {
        None
    };
    write_json(
        &cfg.out_dir.join("train_metrics.json"),
        &json!({
            "records": recs.len(),
            "train": train_set.len(),
            "test": test_set.len(),
            "train_loss": report.train_loss,
            "val_loss": report.val_loss,
            "val_plateau_epoch": plateau_epoch(&report.val_loss, 50, 0.01),
            "histogram_train": h_train.fractions,
            "histogram_test": h_test.fractions,
            "kfold": cv.as_ref().map(|c| json!({"k": c.folds.len(), "mean_train": c.mean_train, "mean_val": c.mean_val})),
        }),
    )?;
    println!(
        "trained on {} rows; lowest-bin fraction train {:.3}, test {:.3}",
        train_set.len(),
        h_train.fractions[0],
        h_test.fractions.first().copied().unwrap_or(f64::NAN)
    );
    Ok(EXIT_OK)
}

fn cmd_augment(cfg: &RunConfig, dataset: &Path, model_path: &Path) -> Result<i32> {
    let mut recs = load_dataset(dataset)?;
    let model = Mlp::load(model_path, Some(&cfg.surrogate.shape()))?;
    let before = recs.len();
    let (new_model, rounds) = augment(
        &model,
        &mut recs,
        &cfg.noise,
        cfg.grid_n,
        &cfg.augment_config(),
        &cfg.train_config(),
        cfg.jobs,
        |r| append_records(dataset, std::slice::from_ref(r)),
    )?;
    new_model.save(model_path)?;
    write_json(
        &cfg.out_dir.join("augment_metrics.json"),
        &json!({ "before": before, "after": recs.len(), "rounds": rounds }),
    )?;
    println!("dataset grew from {before} to {} rows", recs.len());
    Ok(EXIT_OK)
}

fn cmd_eval(cfg: &RunConfig, dataset: &Path, model_path: &Path) -> Result<i32> {
    let recs = load_dataset(dataset)?;
    let model = Mlp::load(model_path, Some(&cfg.surrogate.shape()))?;
    let flow = crate::geodesic::GeodesicFlow::new(&cfg.noise, cfg.grid_n)?;
    let h = evaluate_histogram(&model, &recs, &flow, &HISTOGRAM_EDGES);
    std::fs::write(cfg.out_dir.join("histogram_eval.csv"), h.csv())?;
    std::fs::write(cfg.out_dir.join("pairs_eval.csv"), pairs_csv(&model, &recs))?;
    let pairs = prediction_pairs(&model, &recs);
    let negative_l6 = pairs.iter().filter(|(p, _)| p[5] < 0.0).count() as f64 / pairs.len() as f64;
    write_json(
        &cfg.out_dir.join("eval_metrics.json"),
        &json!({ "records": recs.len(), "mse": model.mse(&recs), "histogram": h.fractions, "edges": h.edges, "lambda6_negative_fraction": negative_l6 }),
    )?;
    println!(
        "lowest-bin fraction {:.3} over {} rows",
        h.fractions[0],
        recs.len()
    );
    Ok(EXIT_OK)
}

fn cmd_compare_energy(cfg: &RunConfig, gates: Option<&str>) -> Result<i32> {
    let gates: Vec<Gate> = match gates {
        Some(list) => list
            .split(',')
            .map(|g| g.trim().parse())
            .collect::<Result<_>>()?,
        None => Gate::ALL.to_vec(),
    };
    let mut rows = Vec::new();
    let mut all_ok = true;
    for g in gates {
        let path = cfg
            .out_dir
            .join(format!("solution_{}_dephasing.json", g.name()));
        let doc = match std::fs::read_to_string(&path) {
            Ok(text) => SolutionDocument::from_json(&text)?,
            Err(_) => {
                let s = synthesize_for(cfg, g.axis(), NoiseModel::Dephasing, None)?;
                let doc = s.solution.to_document(s.q_reached, &cfg.noise);
                write_json(&path, &doc)?;
                doc
            }
        };
        all_ok &= doc.infidelity <= cfg.tolerances.final_tol;
        let triv = trivial_hamiltonian(
            &Target::from_axis(g.axis()).matrix(),
            doc.grid_n,
            cfg.noise.tau,
        )?;
        rows.push(json!({
            "gate": g.name(),
            "oc_energy": doc.control.energy_cost(),
            "trivial_energy": triv.energy_cost(),
            "gcdd_energy": "not computed",
            "infidelity": doc.infidelity,
        }));
        println!(
            "{:<9} OC {:>9.4}  trivial {:>7.4}",
            g.name(),
            doc.control.energy_cost(),
            triv.energy_cost()
        );
    }
    write_json(
        &cfg.out_dir.join("energy_table.json"),
        &json!({ "units": "hbar/tau", "rows": rows }),
    )?;
    Ok(if all_ok { EXIT_OK } else { EXIT_TOLERANCE })
}
