//! Optimal field against the trivial Hamiltonian and free decay for one
//! gate, with the fidelity trajectories as CSV.
//!
//! cargo run --release --example gate_comparison -- [hadamard|x|t|identity]

use cddgeo::noise::NoiseParams;
use cddgeo::simulator::{plus_state, trajectory_csv};
use cddgeo::synthesis::{
    compare_evolutions, design_target, synthesize, Gate, NoiseModel, Protection, SynthesisOptions,
};

fn main() -> cddgeo::Result<()> {
    let gate: Gate = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "hadamard".into())
        .parse()?;
    let p = NoiseParams::default();
    let target = design_target(gate.axis(), NoiseModel::Dephasing)?;
    let protection = Protection {
        model: NoiseModel::Dephasing,
        min_fidelity: 0.99,
        omega0: None,
    };
    let s = synthesize(
        &target,
        &p,
        None,
        Some(&protection),
        &SynthesisOptions::default(),
    )?;
    let rho0 = plus_state();
    let c = compare_evolutions(
        &s.solution.control,
        target.u,
        &p,
        NoiseModel::Dephasing,
        None,
        &rho0,
        true,
    )?;
    for e in c.evolutions() {
        println!(
            "{:<10} F(tau) {:.5}  six-state average {:.5}  energy {:.3}",
            e.label,
            e.final_fidelity(),
            e.final_avg_fidelity(),
            e.energy()
        );
        std::fs::write(
            format!("{}_{}.csv", gate.name(), e.label),
            trajectory_csv(&e.trajectory, &rho0)?,
        )?;
    }
    Ok(())
}
