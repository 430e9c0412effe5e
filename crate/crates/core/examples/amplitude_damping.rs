//! Reusing dephasing-optimal fields against Jaynes–Cummings decay: solve
//! the conjugated target, permute the fields, simulate.
//!
//! cargo run --release --example amplitude_damping

use cddgeo::ampdamp::rwa_check;
use cddgeo::noise::NoiseParams;
use cddgeo::simulator::plus_state;
use cddgeo::synthesis::{
    compare_evolutions, design_target, synthesize, Gate, NoiseModel, Protection, SynthesisOptions,
};

fn main() -> cddgeo::Result<()> {
    let p = NoiseParams::default();
    println!("{}", rwa_check(p.omega_c, &p).message);
    let protection = Protection {
        model: NoiseModel::Ampdamp,
        min_fidelity: 0.99,
        omega0: None,
    };
    for g in Gate::ALL {
        let target = design_target(g.axis(), NoiseModel::Ampdamp)?;
        let s = synthesize(
            &target,
            &p,
            None,
            Some(&protection),
            &SynthesisOptions::default(),
        )?;
        let c = compare_evolutions(
            &s.solution.control,
            target.u,
            &p,
            NoiseModel::Ampdamp,
            None,
            &plus_state(),
            true,
        )?;
        let triv = c
            .trivial
            .as_ref()
            .map_or(f64::NAN, |e| e.final_avg_fidelity());
        println!(
            "{:<9} design u {:>7.4?}  avg F: permuted {:.4}, trivial {:.4}, zero control {:.4}",
            g.name(),
            target.u,
            c.optimal.final_avg_fidelity(),
            triv,
            c.noise_only.final_avg_fidelity()
        );
    }
    Ok(())
}
