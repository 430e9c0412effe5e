//! Complex log-gamma, digamma and trigamma for `Re z > 0`.
//!
//! Log-gamma uses the Lanczos approximation (g = 7, nine coefficients).
//! Digamma and trigamma recur upward until `Re z > 10` and then switch to
//! their asymptotic Bernoulli series.

use num_complex::Complex64;
use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// ln Γ(z). The imaginary part is continuous along paths with `Re z > 0`
/// but is not reduced to a particular branch.
pub fn log_gamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        // Γ(z)Γ(1−z) = π / sin(πz)
        let s = (z * PI).sin();
        return Complex64::from(PI).ln() - s.ln() - log_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = Complex64::from(LANCZOS_COEF[0]);
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        x += *c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// Real-argument convenience wrapper for ln Γ(x), x > 0.
pub fn log_gamma_real(x: f64) -> f64 {
    log_gamma(Complex64::from(x)).re
}

/// ψ(z) = d/dz ln Γ(z).
pub fn digamma(z: Complex64) -> Complex64 {
    let mut z = z;
    let mut acc = Complex64::from(0.0);
    while z.re < ASYMPTOTIC_THRESHOLD {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // ln z − 1/(2z) − Σ B₂ₖ / (2k z²ᵏ)
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    acc + z.ln() - 0.5 * inv - series
}

/// ψ⁽¹⁾(z) = d²/dz² ln Γ(z).
pub fn trigamma(z: Complex64) -> Complex64 {
    let mut z = z;
    let mut acc = Complex64::from(0.0);
    while z.re < ASYMPTOTIC_THRESHOLD {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // 1/z + 1/(2z²) + Σ B₂ₖ / z²ᵏ⁺¹
    let series = inv
        * inv2
        * (1.0 / 6.0
            - inv2
                * (1.0 / 30.0
                    - inv2
                        * (1.0 / 42.0
                            - inv2
                                * (1.0 / 30.0
                                    - inv2
                                        * (5.0 / 66.0
                                            - inv2 * (691.0 / 2_730.0 - inv2 * 7.0 / 6.0))))));
    acc + inv + 0.5 * inv2 + series
}
