//! Unit-quaternion form of SU(2) and the block picture of the reachable
//! group.
//!
//! span(Γ) is closed under commutators and, because σ_z on the ancilla is
//! diagonal, splits into two commuting su(2) copies: on the ancilla-up
//! block an element Σ αₖ σₖ⊗I + βₖ σₖ⊗σ_z acts as (α+β)·σ and on the
//! ancilla-down block as (α−β)·σ. The reachable group is therefore
//! SU(2)×SU(2) and every propagation in the solver hot path runs on a pair
//! of quaternions instead of dense 4×4 matrices.

use serde::{Deserialize, Serialize};

use crate::algebra::{GammaVector, Mat2, Mat4, C64};

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// `w·I − i(x σ_x + y σ_y + z σ_z)`; unitary iff `w² + x² + y² + z² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Su2 {
    pub w: f64,
    pub v: Vec3,
}

impl Su2 {
    pub const IDENTITY: Su2 = Su2 {
        w: 1.0,
        v: [0.0; 3],
    };

    /// `exp(−i u·σ)`.
    pub fn exp_axis(u: &Vec3) -> Self {
        let theta = dot3(u, u).sqrt();
        let (s, c) = theta.sin_cos();
        let sinc = if theta > 1e-300 { s / theta } else { 1.0 };
        Su2 {
            w: c,
            v: scale3(u, sinc),
        }
    }

    #[inline]
    pub fn mul(&self, o: &Su2) -> Su2 {
        // Hamilton product: the units −iσₖ multiply like quaternion units.
        let w = self.w * o.w - dot3(&self.v, &o.v);
        let c = cross3(&self.v, &o.v);
        Su2 {
            w,
            v: [
                self.w * o.v[0] + o.w * self.v[0] + c[0],
                self.w * o.v[1] + o.w * self.v[1] + c[1],
                self.w * o.v[2] + o.w * self.v[2] + c[2],
            ],
        }
    }

    /// `(0, g) · self`, i.e. the derivative `−i(g·σ) U`.
    #[inline]
    pub fn left_pure(&self, g: &Vec3) -> Su2 {
        let c = cross3(g, &self.v);
        Su2 {
            w: -dot3(g, &self.v),
            v: [
                g[0] * self.w + c[0],
                g[1] * self.w + c[1],
                g[2] * self.w + c[2],
            ],
        }
    }

    pub fn adjoint(&self) -> Su2 {
        Su2 {
            w: self.w,
            v: scale3(&self.v, -1.0),
        }
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.w * self.w + dot3(&self.v, &self.v)
    }

    /// Nearest unitary (polar factor), which for this form is normalisation.
    #[inline]
    pub fn normalized(&self) -> Su2 {
        let n = self.norm_sq().sqrt();
        Su2 {
            w: self.w / n,
            v: scale3(&self.v, 1.0 / n),
        }
    }

    /// Vector `r` with `U (v·σ) U† = r·σ`. Exact for non-normalised `U`
    /// as well, where it scales by `|U|²`.
    #[inline]
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let r = &self.v;
        let c = cross3(r, v);
        let s = self.w * self.w - dot3(r, r);
        let d = 2.0 * dot3(r, v);
        let w2 = 2.0 * self.w;
        [
            s * v[0] + d * r[0] + w2 * c[0],
            s * v[1] + d * r[1] + w2 * c[1],
            s * v[2] + d * r[2] + w2 * c[2],
        ]
    }

    /// `Tr(A† B) / 2`, which is real for this form.
    #[inline]
    pub fn overlap(&self, o: &Su2) -> f64 {
        self.w * o.w + dot3(&self.v, &o.v)
    }

    #[inline]
    pub fn axpy(&self, s: f64, o: &Su2) -> Su2 {
        Su2 {
            w: self.w + s * o.w,
            v: add3(&self.v, &scale3(&o.v, s)),
        }
    }

    pub fn to_mat2(&self) -> Mat2 {
        let Su2 { w, v: [x, y, z] } = *self;
        Mat2::new(
            C64::new(w, -z),
            C64::new(-y, -x),
            C64::new(y, -x),
            C64::new(w, z),
        )
    }

    /// Inverse of [`Su2::to_mat2`]; only meaningful for SU(2) inputs.
    pub fn from_mat2(m: &Mat2) -> Su2 {
        Su2 {
            w: 0.5 * (m[(0, 0)] + m[(1, 1)]).re,
            v: [
                -0.5 * (m[(0, 1)] + m[(1, 0)]).im,
                0.5 * (m[(1, 0)] - m[(0, 1)]).re,
                0.5 * (m[(1, 1)] - m[(0, 0)]).im,
            ],
        }
    }
}

/// Element of the reachable group as its two ancilla blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockUnitary {
    pub up: Su2,
    pub down: Su2,
}

impl BlockUnitary {
    pub const IDENTITY: BlockUnitary = BlockUnitary {
        up: Su2::IDENTITY,
        down: Su2::IDENTITY,
    };

    /// `U ⊗ I`.
    pub fn lift(u: Su2) -> Self {
        Self { up: u, down: u }
    }

    pub fn to_mat4(&self) -> Mat4 {
        let blocks = [self.up.to_mat2(), self.down.to_mat2()];
        Mat4::from_fn(|r, c| {
            let (a, b) = (r % 2, c % 2);
            if a == b {
                blocks[a][(r / 2, c / 2)]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `Tr_norm(self† other)`, real in this representation.
    pub fn overlap(&self, o: &BlockUnitary) -> f64 {
        0.5 * (self.up.overlap(&o.up) + self.down.overlap(&o.down))
    }

    /// `1 − |Tr_norm(self† other)|`.
    pub fn infidelity(&self, o: &BlockUnitary) -> f64 {
        (1.0 - self.overlap(o).abs()).clamp(0.0, 1.0)
    }

    pub fn unitarity_defect(&self) -> f64 {
        (self.up.norm_sq() - 1.0)
            .abs()
            .max((self.down.norm_sq() - 1.0).abs())
    }

    pub fn mul(&self, o: &BlockUnitary) -> BlockUnitary {
        BlockUnitary {
            up: self.up.mul(&o.up),
            down: self.down.mul(&o.down),
        }
    }

    pub fn adjoint(&self) -> BlockUnitary {
        BlockUnitary {
            up: self.up.adjoint(),
            down: self.down.adjoint(),
        }
    }

    /// Γ coordinates of `U (Σ λₖ γₖ) U†`.
    pub fn conjugate(&self, l: &GammaVector) -> GammaVector {
        let (up, down) = split(l);
        join(&self.up.rotate(&up), &self.down.rotate(&down))
    }
}

/// Γ coordinates → (ancilla-up, ancilla-down) Pauli vectors.
#[inline]
pub fn split(l: &GammaVector) -> (Vec3, Vec3) {
    let a = [l[0], l[1], l[2]];
    let b = [l[3], l[4], l[5]];
    (add3(&a, &b), sub3(&a, &b))
}

/// Inverse of [`split`].
#[inline]
pub fn join(up: &Vec3, down: &Vec3) -> GammaVector {
    let a = scale3(&add3(up, down), 0.5);
    let b = scale3(&sub3(up, down), 0.5);
    GammaVector([a[0], a[1], a[2], b[0], b[1], b[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{gamma_embed, gamma_project, lift_target, max_abs_diff, target_from_axis};

    #[test]
    fn matches_dense_target() {
        let u = [0.307485, 0.346931, -2.78627];
        let q = Su2::exp_axis(&u);
        assert!(max_abs_diff(&q.to_mat2(), &target_from_axis(u)) < 1e-14);
        let back = Su2::from_mat2(&q.to_mat2());
        assert!((back.w - q.w).abs() < 1e-15);
        let lifted = BlockUnitary::lift(q).to_mat4();
        assert!(max_abs_diff(&lifted, &lift_target(&target_from_axis(u))) < 1e-14);
    }

    #[test]
    fn product_matches_matrix_product() {
        let a = Su2::exp_axis(&[0.3, -1.2, 0.4]);
        let b = Su2::exp_axis(&[-0.7, 0.1, 2.2]);
        assert!(max_abs_diff(&a.mul(&b).to_mat2(), &(a.to_mat2() * b.to_mat2())) < 1e-14);
    }

    #[test]
    fn block_conjugation_matches_dense() {
        let u = BlockUnitary {
            up: Su2::exp_axis(&[0.3, -1.2, 0.4]),
            down: Su2::exp_axis(&[1.1, 0.5, -0.2]),
        };
        let l = GammaVector([0.4, -1.0, 2.0, 0.3, 0.9, -1.7]);
        let m = u.to_mat4();
        let dense = gamma_project(&(m * gamma_embed(&l) * m.adjoint()));
        let fast = u.conjugate(&l);
        for k in 0..6 {
            assert!((dense[k] - fast[k]).abs() < 1e-13);
        }
    }
}
