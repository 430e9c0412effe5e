//! Reuse of dephasing-optimal controls against amplitude damping.
//!
//! After the rotating-wave approximation the Jaynes–Cummings coupling acts
//! as `σ_x B(t)`. Relabelling the axes cyclically maps it onto the σ_z
//! dephasing problem, so a dephasing solution for the conjugated target
//! `U_cor† U U_cor` protects the gate `U` once its fields are permuted.

use serde::{Deserialize, Serialize};

use crate::algebra::{pauli_coords, paulis, sigma_x, sigma_y, sigma_z, Mat2, C64};
use crate::field::ControlField;
use crate::noise::NoiseParams;

/// Qubit gap ω₀ and the fixed cyclic axis map x → z, y → x, z → y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisMap {
    pub omega0: f64,
}

impl AxisMap {
    pub fn permute(&self, field: &ControlField) -> ControlField {
        permute_fields(field, self.omega0)
    }
}

/// `f_x = ω_z`, `f_y = ω_x`, `f_z = ω_y − ω₀`.
pub fn permute_fields(field: &ControlField, omega0: f64) -> ControlField {
    ControlField {
        t: field.t.clone(),
        wx: field.wz.clone(),
        wy: field.wx.clone(),
        wz: field.wy.iter().map(|w| w - omega0).collect(),
    }
}

/// Inverse of [`permute_fields`].
pub fn unpermute_fields(f: &ControlField, omega0: f64) -> ControlField {
    ControlField {
        t: f.t.clone(),
        wx: f.wy.clone(),
        wy: f.wz.iter().map(|w| w + omega0).collect(),
        wz: f.wx.clone(),
    }
}

/// `U_cor = C₂C₁` with `C₁ = (Z − X)/√2` and `C₂ = (Y − Z)/√2`.
pub fn correction_operator() -> Mat2 {
    let r = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    let c1 = (sigma_z() - sigma_x()) * r;
    let c2 = (sigma_y() - sigma_z()) * r;
    c2 * c1
}

/// `R† U R`.
pub fn conjugate_target(u: &Mat2, r: &Mat2) -> Mat2 {
    r.adjoint() * u * r
}

/// Components of `R (ω·σ) R†`: fields designed against σ_z noise, rotated
/// to protect against the coupling `R σ_z R†`.
pub fn rotate_fields(field: &ControlField, r: &Mat2) -> ControlField {
    let [sx, sy, sz] = paulis();
    let cols = [sx, sy, sz].map(|s| pauli_coords(&(r * s * r.adjoint())));
    let mut out = field.clone();
    for k in 0..field.len() {
        let w = field.omega(k);
        let v: [f64; 3] =
            std::array::from_fn(|i| cols[0][i] * w[0] + cols[1][i] * w[1] + cols[2][i] * w[2]);
        out.wx[k] = v[0];
        out.wy[k] = v[1];
        out.wz[k] = v[2];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwaReport {
    pub ratio: f64,
    pub valid: bool,
    pub message: String,
}

/// Accepts `ω₀/ω_c ∈ [0.5, 2]`.
pub fn rwa_check(omega0: f64, p: &NoiseParams) -> RwaReport {
    let ratio = omega0 / p.omega_c;
    let valid = ratio.is_finite() && (0.5..=2.0).contains(&ratio);
    let message = if valid {
        format!("omega0/omega_c = {ratio:.3}: rotating-wave approximation applies")
    } else if omega0 <= 0.0 {
        format!("omega0 = {omega0}: no qubit gap, rotating-wave approximation undefined")
    } else {
        format!("omega0/omega_c = {ratio:.3} outside [0.5, 2]: counter-rotating terms are not negligible")
    };
    RwaReport {
        ratio,
        valid,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{identity2, max_abs_diff};

    #[test]
    fn correction_cycles_axes() {
        let u = correction_operator();
        assert!(max_abs_diff(&(u.adjoint() * u), &identity2()) < 1e-15);
        assert!(max_abs_diff(&(u.adjoint() * sigma_x() * u), &sigma_z()) < 1e-14);
        assert!(max_abs_diff(&(u.adjoint() * sigma_y() * u), &sigma_x()) < 1e-14);
        assert!(max_abs_diff(&(u.adjoint() * sigma_z() * u), &sigma_y()) < 1e-14);
        let cube = u * u * u;
        let phase = cube[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-14);
        assert!(max_abs_diff(&cube, &(identity2() * phase)) < 1e-14);
    }

    #[test]
    fn conjugated_coefficients_permute() {
        let (a, b, c, d) = (0.5, 0.5, -0.5, 0.5);
        let i = C64::i();
        let u = identity2() * C64::from(a)
            + (sigma_x() * C64::from(b) + sigma_y() * C64::from(c) + sigma_z() * C64::from(d)) * i;
        let expected = identity2() * C64::from(a)
            + (sigma_z() * C64::from(b) + sigma_x() * C64::from(c) + sigma_y() * C64::from(d)) * i;
        assert!(max_abs_diff(&conjugate_target(&u, &correction_operator()), &expected) < 1e-14);
        assert!(
            max_abs_diff(
                &conjugate_target(&identity2(), &correction_operator()),
                &identity2()
            ) < 1e-15
        );
        let x = conjugate_target(&sigma_x(), &correction_operator());
        assert!(max_abs_diff(&x, &sigma_z()) < 1e-14);
    }

    #[test]
    fn permutation_examples() {
        let z = permute_fields(&ControlField::zeros(4, 1.0), 1.0);
        assert!(z.wx.iter().chain(&z.wy).all(|w| *w == 0.0) && z.wz.iter().all(|w| *w == -1.0));
        let f = permute_fields(&ControlField::constant([1.0, 2.0, 3.0], 4, 1.0), 0.5);
        assert_eq!(f.omega(2), [3.0, 1.0, 1.5]);
        let back = unpermute_fields(&f, 0.5);
        assert_eq!(back.omega(1), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn rotation_matches_permutation() {
        let f = ControlField::from_fn(20, 1.0, |t| [t, 1.0 - 2.0 * t, 0.3 + t * t]);
        let rotated = rotate_fields(&f, &correction_operator());
        let permuted = permute_fields(&f, 0.0);
        for k in 0..f.len() {
            for i in 0..3 {
                assert!((rotated.omega(k)[i] - permuted.omega(k)[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn energy_shift_identity() {
        let w0 = 0.7;
        let f = ControlField::from_fn(200, 1.0, |t| [t.sin(), 1.0 - t, 0.2]);
        let g = permute_fields(&f, w0);
        let shift: Vec<f64> = f.wy.iter().map(|wy| w0 * w0 - 2.0 * w0 * wy).collect();
        let integral: f64 =
            f.t.windows(2)
                .zip(shift.windows(2))
                .map(|(t, s)| 0.5 * (t[1] - t[0]) * (s[0] + s[1]))
                .sum();
        assert!((g.energy_cost() - f.energy_cost() - 0.5 * integral).abs() < 1e-12);
    }

    #[test]
    fn rwa_band() {
        let p = NoiseParams::default();
        assert!(rwa_check(p.omega_c, &p).valid);
        assert!(!rwa_check(100.0 * p.omega_c, &p).valid);
        assert!(!rwa_check(0.0, &p).valid);
    }
}
