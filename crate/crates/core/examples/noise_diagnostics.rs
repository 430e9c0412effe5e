//! Coherence decay, purification coupling and bath correlation for the
//! default Ohmic bath.
//!
//! cargo run --example noise_diagnostics

use cddgeo::noise::{correlation_ratio, h_of_t, lambda0, mu, NoiseParams};

fn main() {
    let p = NoiseParams::default();
    println!(
        "eta = {}, omega_c = {:.6}, omega_T = {:.6}",
        p.eta,
        p.omega_c,
        p.thermal()
    );
    println!(
        "lambda0 = {:.6}, h(0) = {:.6}",
        lambda0(&p),
        h_of_t(0.0, &p)
    );
    println!("{:>6} {:>10} {:>10}", "t", "mu", "h");
    for k in 0..=10 {
        let t = k as f64 / 10.0 * p.tau;
        println!("{t:>6.2} {:>10.6} {:>10.6}", mu(t, &p), h_of_t(t, &p));
    }

    println!("\n|C(t)/C(0)| at t = 1/omega_c and t_c = 2 pi/omega_c");
    for ratio in [1e-3, 0.1, 1.0, 10.0, 1e3] {
        let q = NoiseParams::new(1.0, p.omega_c, Some(ratio * p.omega_c));
        println!(
            "omega_T/omega_c = {ratio:>7}: {:.4}  {:.4}",
            correlation_ratio(1.0 / p.omega_c, &q),
            correlation_ratio(q.correlation_time(), &q)
        );
    }
}
