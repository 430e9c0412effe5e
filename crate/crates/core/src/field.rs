//! Sampled single-qubit control fields `H_c(t) = ħ(ω_x σ_x + ω_y σ_y + ω_z σ_z)`.

use serde::{Deserialize, Serialize};

use crate::algebra::{paulis, Mat2, C64};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    pub t: Vec<f64>,
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
    pub wz: Vec<f64>,
}

impl ControlField {
    /// Constant field `ω` on an `n`-step uniform grid over `[0, tau]`.
    pub fn constant(omega: [f64; 3], n: usize, tau: f64) -> Self {
        let t: Vec<f64> = (0..=n).map(|k| tau * k as f64 / n as f64).collect();
        let m = t.len();
        Self {
            t,
            wx: vec![omega[0]; m],
            wy: vec![omega[1]; m],
            wz: vec![omega[2]; m],
        }
    }

    pub fn zeros(n: usize, tau: f64) -> Self {
        Self::constant([0.0; 3], n, tau)
    }

    pub fn from_fn(n: usize, tau: f64, f: impl Fn(f64) -> [f64; 3]) -> Self {
        let t: Vec<f64> = (0..=n).map(|k| tau * k as f64 / n as f64).collect();
        let vals: Vec<[f64; 3]> = t.iter().map(|&s| f(s)).collect();
        Self {
            wx: vals.iter().map(|v| v[0]).collect(),
            wy: vals.iter().map(|v| v[1]).collect(),
            wz: vals.iter().map(|v| v[2]).collect(),
            t,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Number of grid steps.
    pub fn steps(&self) -> usize {
        self.t.len().saturating_sub(1)
    }

    pub fn duration(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0) - self.t.first().copied().unwrap_or(0.0)
    }

    pub fn dt(&self) -> f64 {
        self.duration() / self.steps() as f64
    }

    /// Checks equal lengths, at least one step, and a uniform increasing grid.
    pub fn validate(&self) -> Result<()> {
        let m = self.t.len();
        if m < 2 || self.wx.len() != m || self.wy.len() != m || self.wz.len() != m {
            return Err(Error::Schema(format!(
                "control arrays must share the grid length (t={}, wx={}, wy={}, wz={})",
                m,
                self.wx.len(),
                self.wy.len(),
                self.wz.len()
            )));
        }
        let dt = self.dt();
        if !(dt > 0.0) {
            return Err(Error::Schema("control grid must be increasing".into()));
        }
        for w in self.t.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::Schema("control grid must be uniform".into()));
            }
        }
        Ok(())
    }

    pub fn omega(&self, k: usize) -> [f64; 3] {
        [self.wx[k], self.wy[k], self.wz[k]]
    }

    /// Linear interpolation in time, clamped to the grid ends.
    pub fn omega_at(&self, t: f64) -> [f64; 3] {
        let n = self.steps();
        let x = ((t - self.t[0]) / self.dt()).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n - 1);
        let w = x - k as f64;
        let a = self.omega(k);
        let b = self.omega(k + 1);
        [
            a[0] + w * (b[0] - a[0]),
            a[1] + w * (b[1] - a[1]),
            a[2] + w * (b[2] - a[2]),
        ]
    }

    /// Linear resampling onto an `n`-step uniform grid over the same span.
    pub fn resample(&self, n: usize) -> Self {
        let t0 = self.t[0];
        let d = self.duration();
        let mut out = Self::from_fn(n, d, |s| self.omega_at(t0 + s));
        for t in out.t.iter_mut() {
            *t += t0;
        }
        out
    }

    pub fn hamiltonian_at(&self, t: f64) -> Mat2 {
        let w = self.omega_at(t);
        let [sx, sy, sz] = paulis();
        sx * C64::from(w[0]) + sy * C64::from(w[1]) + sz * C64::from(w[2])
    }

    /// `½∫ Tr_norm[H(t)²] dt = ½∫(ω_x² + ω_y² + ω_z²) dt` by the trapezoid rule,
    /// in units of ħ/τ.
    pub fn energy_cost(&self) -> f64 {
        let sq: Vec<f64> = (0..self.len())
            .map(|k| self.wx[k] * self.wx[k] + self.wy[k] * self.wy[k] + self.wz[k] * self.wz[k])
            .collect();
        let integral: f64 = self
            .t
            .windows(2)
            .zip(sq.windows(2))
            .map(|(t, s)| 0.5 * (t[1] - t[0]) * (s[0] + s[1]))
            .sum();
        0.5 * integral
    }

    /// Instantaneous energy density `½(ω_x² + ω_y² + ω_z²)`.
    pub fn energy_density(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| 0.5 * (self.wx[k].powi(2) + self.wy[k].powi(2) + self.wz[k].powi(2)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_of_simple_fields() {
        assert_eq!(ControlField::zeros(100, 1.0).energy_cost(), 0.0);
        let f = ControlField::constant([1.0, 0.0, 0.0], 100, 1.0);
        assert!((f.energy_cost() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn interpolation_is_linear() {
        let f = ControlField::from_fn(10, 1.0, |t| [t, 2.0 * t, -t]);
        let w = f.omega_at(0.33);
        assert!((w[0] - 0.33).abs() < 1e-14 && (w[1] - 0.66).abs() < 1e-14);
    }

    #[test]
    fn resampling_keeps_linear_fields() {
        let f = ControlField::from_fn(10, 1.0, |t| [1.0 - t, 0.5, 3.0 * t]);
        let g = f.resample(40);
        assert_eq!(g.steps(), 40);
        assert!((g.omega_at(0.37)[2] - 1.11).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_ragged_arrays() {
        let mut f = ControlField::zeros(10, 1.0);
        f.wy.pop();
        assert!(f.validate().is_err());
        let mut g = ControlField::zeros(10, 1.0);
        g.t[3] += 0.01;
        assert!(g.validate().is_err());
    }
}
