//! Prints the default run configuration as TOML, or validates a file.
//!
//! cargo run --example run_config [-- path/to/run.toml]

use cddgeo::config::RunConfig;

fn main() -> cddgeo::Result<()> {
    match std::env::args().nth(1) {
        Some(path) => {
            let cfg = RunConfig::load(std::path::Path::new(&path))?;
            println!(
                "{path}: ok (seed {}, grid_n {}, eta {})",
                cfg.seed, cfg.grid_n, cfg.noise.eta
            );
        }
        None => print!("{}", RunConfig::default().to_toml()),
    }
    Ok(())
}
