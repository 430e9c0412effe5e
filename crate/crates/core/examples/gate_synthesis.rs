//! Protected fields for the four library gates, written as solution
//! documents plus an energy summary.
//!
//! cargo run --release --example gate_synthesis -- [out_dir]

use cddgeo::noise::NoiseParams;
use cddgeo::simulator::trivial_hamiltonian;
use cddgeo::synthesis::{
    design_target, synthesize, Gate, NoiseModel, Protection, SynthesisOptions,
};

fn main() -> cddgeo::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&out)?;
    let p = NoiseParams::default();
    let protection = Protection {
        model: NoiseModel::Dephasing,
        min_fidelity: 0.99,
        omega0: None,
    };
    for g in Gate::ALL {
        let target = design_target(g.axis(), NoiseModel::Dephasing)?;
        let s = synthesize(
            &target,
            &p,
            None,
            Some(&protection),
            &SynthesisOptions::default(),
        )?;
        let doc = s.solution.to_document(s.q_reached, &p);
        let path = out.join(format!("solution_{}_dephasing.json", g.name()));
        std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
        let triv = trivial_hamiltonian(&g.matrix(), doc.grid_n, p.tau)?.energy_cost();
        println!(
            "{:<9} infidelity {:.2e}  energy {:>7.3} (trivial {:.3})  worst six-state F {:.4}  {} candidates -> {}",
            g.name(),
            doc.infidelity,
            doc.energy,
            triv,
            s.protection.map_or(f64::NAN, |p| p.worst),
            s.candidates.len(),
            path.display()
        );
    }
    Ok(())
}
