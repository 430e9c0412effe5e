//! Cross-checks of the effective and TCL2 equations in their limits.
//!
//! cargo run --example reduced_equations

use cddgeo::noise::NoiseParams;
use cddgeo::simulator::appendix_equivalence_checks;

fn main() -> cddgeo::Result<()> {
    let r = appendix_equivalence_checks(&NoiseParams::default(), 1000)?;
    println!(
        "constant S, effective vs summed rate: {:.2e} ({})",
        r.a_max_diff,
        if r.a_pass { "ok" } else { "FAIL" }
    );
    println!(
        "slow bath, vs lambda0 kernel: master {:.2e}, effective {:.2e} ({})",
        r.b_master_vs_kernel,
        r.b_effective_vs_kernel,
        if r.b_pass { "ok" } else { "FAIL" }
    );
    Ok(())
}
