//! Builds the lowest-energy costate atlas on a coarse grid and prints the
//! energy field over the reduced half-disk, then solves a few targets off
//! the grid.
//!
//! cargo run --release --example costate_atlas

use cddgeo::atlas::{AtlasConfig, CostateAtlas};
use cddgeo::geodesic::{GeodesicFlow, JumpSchedule, Penalty, Target};
use cddgeo::noise::NoiseParams;
use cddgeo::synthesis::SynthesisOptions;

fn main() -> cddgeo::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let p = NoiseParams::default();
    let opts = SynthesisOptions {
        schedule: JumpSchedule {
            q_in: 10.0,
            q_max: 500.0,
            n_it: 30,
        },
        restarts: 0,
        ..Default::default()
    };
    let flow = GeodesicFlow::new(&p, opts.grid_n)?;
    let cfg = AtlasConfig {
        rays: 17,
        shells: 16,
        ..AtlasConfig::default()
    };
    let atlas = CostateAtlas::build(&flow, &opts, &cfg)?;
    println!("coverage {}/{}", atlas.coverage(), atlas.nodes.len());

    println!("energy by shell (rows, |u| up to pi/2) and ray (columns, +z to -z):");
    for shell in (2..=cfg.shells).step_by(2) {
        let row: Vec<String> = (0..cfg.rays)
            .step_by(2)
            .map(|ray| {
                atlas.nodes[1 + (shell - 1) * cfg.rays + ray]
                    .map_or("    -".into(), |n| format!("{:5.1}", n.energy))
            })
            .collect();
        println!(
            "{:.2} {}",
            std::f64::consts::FRAC_PI_2 * shell as f64 / cfg.shells as f64,
            row.join(" ")
        );
    }

    for u in [[0.3, -0.2, 0.5], [1.2, 0.9, -0.4], [-0.5, 2.4, 0.3]] {
        match atlas.solve(&flow, u) {
            Some(l) => {
                let sol = flow.solve(&l, Penalty::SubRiemannian, &Target::from_axis(u))?;
                println!(
                    "u = {u:?}: infidelity {:.1e}, energy {:.3}",
                    sol.infidelity,
                    sol.energy()
                );
            }
            None => println!("u = {u:?}: not reachable from the atlas"),
        }
    }
    Ok(())
}
