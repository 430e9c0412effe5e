//! Penalty homotopy on a generic target, printing every stage.
//!
//! cargo run --release --example worked_example

use cddgeo::geodesic::{q_jump, GeodesicFlow, JumpOptions, JumpSchedule, Target};
use cddgeo::noise::NoiseParams;

fn main() -> cddgeo::Result<()> {
    let p = NoiseParams::default();
    let flow = GeodesicFlow::new(&p, 1000)?;
    let target = Target::from_axis([0.307485, 0.346931, -2.78627]);
    let schedule = JumpSchedule::default();
    let rep = q_jump(&flow, &target, None, &schedule, &JumpOptions::default())?;
    for r in &rep.history {
        println!(
            "q = {:>9.3}  infidelity {:.3e}  halvings {}",
            r.q, r.infidelity, r.halvings
        );
    }
    println!("last finite stage: {:.3e}", rep.finite_infidelity);
    println!(
        "q -> inf: infidelity {:.3e}, energy {:.4}",
        rep.solution.infidelity,
        rep.solution.energy()
    );
    println!("costate {:?}", rep.solution.costate0.0);
    Ok(())
}
