//! Ohmic dephasing bath: coherence factor μ(t), the purification coupling
//! h(t), the correlation kernel 𝒞(t) and the drift Hamiltonian of the
//! purified two-qubit model.
//!
//! Natural units throughout: ħ = 1 and the gate time τ = 1, so frequencies
//! are in 1/τ and energies in ħ/τ.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::algebra::{kron, sigma_z, Mat4, C64};
use crate::error::{Error, Result};
use crate::special::{digamma, log_gamma, log_gamma_real, trigamma};

/// Bath parameters for the Ohmic spectral density `J(ω) = ηω e^{−ω/ω_c}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Dimensionless coupling strength η ≥ 0.
    pub eta: f64,
    /// Cutoff frequency ω_c > 0.
    pub omega_c: f64,
    /// Thermal frequency ω_T = k_B T / ħ ≥ 0.
    #[serde(default)]
    pub omega_t: Option<f64>,
    /// Gate duration.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1.0
}

impl Default for NoiseParams {
    /// η = 0.34 and ω_c = π/(5τ), with ω_T defaulted to ω_c.
    fn default() -> Self {
        Self::new(0.34, PI / 5.0, None)
    }
}

impl NoiseParams {
    /// `omega_t = None` selects ω_T = ω_c.
    pub fn new(eta: f64, omega_c: f64, omega_t: Option<f64>) -> Self {
        Self {
            eta,
            omega_c,
            omega_t,
            tau: 1.0,
        }
    }

    pub fn noiseless() -> Self {
        Self::new(0.0, PI / 5.0, None)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_c > 0.0) || !self.omega_c.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "omega_c must be > 0, got {}",
                self.omega_c
            )));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "eta must be >= 0, got {}",
                self.eta
            )));
        }
        if !(self.thermal() >= 0.0) || !self.thermal().is_finite() {
            return Err(Error::InvalidArgument(format!(
                "omega_t must be >= 0, got {}",
                self.thermal()
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// ω_T, resolving the default.
    pub fn thermal(&self) -> f64 {
        self.omega_t.unwrap_or(self.omega_c)
    }

    /// Bath correlation time `t_c = 2π/ω_c`.
    pub fn correlation_time(&self) -> f64 {
        2.0 * PI / self.omega_c
    }

    fn ratio(&self) -> f64 {
        self.thermal() / self.omega_c
    }
}

/// ln μ(t).
pub fn ln_mu(t: f64, p: &NoiseParams) -> f64 {
    if p.eta == 0.0 || t == 0.0 {
        return 0.0;
    }
    let a = p.ratio();
    let b = p.thermal();
    let wt = p.omega_c * t;
    let thermal = if b > 0.0 {
        4.0 * (log_gamma(Complex64::new(1.0 + a, b * t)).re - log_gamma_real(1.0 + a))
    } else {
        0.0
    };
    2.0 * p.eta * (thermal - wt.mul_add(wt, 1.0).ln())
}

/// Coherence factor of the uncontrolled dephasing channel, μ(0) = 1.
pub fn mu(t: f64, p: &NoiseParams) -> f64 {
    ln_mu(t, p).exp()
}

/// d ln μ / dt.
pub fn d_ln_mu(t: f64, p: &NoiseParams) -> f64 {
    if p.eta == 0.0 || t == 0.0 {
        return 0.0;
    }
    let a = p.ratio();
    let b = p.thermal();
    let wc2 = p.omega_c * p.omega_c;
    let thermal = if b > 0.0 {
        // d/dt 4 Re lnΓ(1 + a + ibt) = 4b Re(i ψ(1 + a + ibt))
        4.0 * b * (Complex64::i() * digamma(Complex64::new(1.0 + a, b * t))).re
    } else {
        0.0
    };
    2.0 * p.eta * (thermal - 2.0 * wc2 * t / (1.0 + wc2 * t * t))
}

pub fn mu_dot(t: f64, p: &NoiseParams) -> f64 {
    mu(t, p) * d_ln_mu(t, p)
}

/// λ₀ = η ω_c² + 2η ω_T² ψ⁽¹⁾(1 + ω_T/ω_c), equal to 𝒞(0)/ħ².
pub fn lambda0(p: &NoiseParams) -> f64 {
    let b = p.thermal();
    let thermal = if b > 0.0 {
        2.0 * p.eta * b * b * trigamma(Complex64::from(1.0 + p.ratio())).re
    } else {
        0.0
    };
    p.eta * p.omega_c * p.omega_c + thermal
}

/// Below this time the 0/0 limit `h(0) = −√λ₀` is used.
const H_LIMIT_CUTOFF: f64 = 1e-9;

/// Purification coupling `h(t) = μ̇ / (2√(1 − μ²))`.
///
/// h is negative for t > 0 since μ decays; the t → 0 limit is −√λ₀.
pub fn h_of_t(t: f64, p: &NoiseParams) -> f64 {
    if p.eta == 0.0 {
        return 0.0;
    }
    if t.abs() < H_LIMIT_CUTOFF {
        return -lambda0(p).sqrt();
    }
    let l = ln_mu(t, p);
    let one_minus_mu2 = -(2.0 * l).exp_m1();
    if one_minus_mu2 <= 0.0 {
        return 0.0;
    }
    l.exp() * d_ln_mu(t, p) / (2.0 * one_minus_mu2.sqrt())
}

/// Bath correlation 𝒞(t) = Tr_B[B(t)B(0)ρ_B] for the Ohmic density.
pub fn correlation(t: f64, p: &NoiseParams) -> Complex64 {
    let a = p.ratio();
    let wt = Complex64::new(1.0, p.omega_c * t);
    let vacuum = 1.0 / (wt * wt);
    let thermal = if a > 0.0 {
        2.0 * a * a * trigamma(Complex64::new(1.0 + a, -p.thermal() * t)).re
    } else {
        0.0
    };
    (vacuum + thermal) * (p.eta * p.omega_c * p.omega_c)
}

/// |𝒞(t)/𝒞(0)|, the decay diagnostic used to pick the correlation time.
pub fn correlation_ratio(t: f64, p: &NoiseParams) -> f64 {
    let unit = NoiseParams { eta: 1.0, ..*p };
    (correlation(t, &unit) / correlation(0.0, &unit)).norm()
}

/// `H_D(t) = −h(t) σ_z ⊗ σ_z`.
pub fn drift_hamiltonian(t: f64, p: &NoiseParams) -> Mat4 {
    kron(&sigma_z(), &sigma_z()) * C64::from(-h_of_t(t, p))
}

/// Uniform grid on `[0, τ]` with `n` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub tau: f64,
}

impl Grid {
    pub fn new(n: usize, tau: f64) -> Result<Self> {
        if n == 0 || !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid needs n > 0 and tau > 0 (n={n}, tau={tau})"
            )));
        }
        Ok(Self { n, tau })
    }

    pub fn dt(&self) -> f64 {
        self.tau / self.n as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.tau * k as f64 / self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.time(k)).collect()
    }
}

/// A scalar function sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct ScalarTrace {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarTrace {
    pub fn sample(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.times().into_iter().map(f).collect();
        Self { grid, values }
    }

    /// Linear interpolation, clamped to the grid ends.
    pub fn at(&self, t: f64) -> f64 {
        let x = (t / self.grid.dt()).clamp(0.0, self.grid.n as f64);
        let k = (x.floor() as usize).min(self.grid.n - 1);
        let w = x - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }
}

/// h(t) tabulated on the half-step grid of an `n`-step integrator, so RK4
/// stages read their midpoints without interpolation.
#[derive(Debug, Clone)]
pub struct DriftTable {
    half: ScalarTrace,
}

impl DriftTable {
    pub fn new(p: &NoiseParams, n: usize) -> Result<Self> {
        p.validate()?;
        let grid = Grid::new(2 * n, p.tau)?;
        Ok(Self {
            half: ScalarTrace::sample(grid, |t| h_of_t(t, p)),
        })
    }

    pub fn steps(&self) -> usize {
        self.half.grid.n / 2
    }

    /// h at half-step index `j` (time `j·dt/2`).
    #[inline]
    pub fn h_half(&self, j: usize) -> f64 {
        self.half.values[j]
    }

    pub fn h_at(&self, t: f64) -> f64 {
        self.half.at(t)
    }

    pub fn trace(&self) -> &ScalarTrace {
        &self.half
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig4() -> NoiseParams {
        NoiseParams::default()
    }

    #[test]
    fn mu_trivial_cases() {
        assert_eq!(mu(0.0, &fig4()), 1.0);
        let quiet = NoiseParams::noiseless();
        for t in [0.1, 0.5, 1.0] {
            assert_eq!(mu(t, &quiet), 1.0);
            assert_eq!(mu_dot(t, &quiet), 0.0);
            assert_eq!(h_of_t(t, &quiet), 0.0);
        }
        assert_eq!(mu_dot(0.0, &fig4()), 0.0);
        assert_eq!(lambda0(&quiet), 0.0);
    }

    #[test]
    fn mu_monotone_on_gate_window() {
        let p = fig4();
        let mut prev = 1.0;
        for k in 1..=200 {
            let m = mu(k as f64 / 200.0, &p);
            assert!(m <= prev && m > 0.0);
            prev = m;
        }
    }

    #[test]
    fn zero_temperature_lambda0() {
        let p = NoiseParams::new(0.2, 1.3, Some(0.0));
        assert!((lambda0(&p) - 0.2 * 1.3 * 1.3).abs() < 1e-15);
    }

    #[test]
    fn lambda0_is_correlation_at_origin() {
        for p in [
            fig4(),
            NoiseParams::new(0.1, 2.0, Some(7.0)),
            NoiseParams::new(0.5, 0.3, Some(0.0)),
        ] {
            let c0 = correlation(0.0, &p);
            assert!(c0.im.abs() < 1e-15);
            assert!((lambda0(&p) - c0.re).abs() < 1e-12 * c0.re.max(1.0));
        }
    }

    #[test]
    fn h_limit_at_origin() {
        let p = fig4();
        let h0 = h_of_t(0.0, &p);
        assert!(h0 < 0.0);
        assert!((h0 * h0 - lambda0(&p)).abs() < 1e-6 * lambda0(&p));
        let near = h_of_t(1e-5, &p);
        assert!((near - h0).abs() < 1e-4 * h0.abs());
    }

    #[test]
    fn drift_matrix() {
        let p = fig4();
        let d0 = drift_hamiltonian(0.0, &p);
        let zz = kron(&sigma_z(), &sigma_z());
        let expect = zz * C64::from(lambda0(&p).sqrt());
        assert!((d0 - expect).norm() < 1e-14);
        assert_eq!(
            drift_hamiltonian(0.4, &NoiseParams::noiseless()),
            Mat4::zeros()
        );
    }

    #[test]
    fn scalar_trace_interpolates() {
        let tr = ScalarTrace::sample(Grid::new(10, 1.0).unwrap(), |t| 3.0 * t + 1.0);
        assert!((tr.at(0.37) - 2.11).abs() < 1e-14);
        assert_eq!(tr.at(2.0), 4.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(NoiseParams::new(0.1, 0.0, None).validate().is_err());
        assert!(NoiseParams::new(-0.1, 1.0, None).validate().is_err());
        assert!(NoiseParams::new(0.1, 1.0, Some(-1.0)).validate().is_err());
    }
}
