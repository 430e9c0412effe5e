//! Dense 2×2 / 4×4 complex linear algebra for the purified qubit⊗ancilla
//! space.
//!
//! Tensor ordering is (system qubit) ⊗ (auxiliary qubit) with the product
//! basis |00⟩, |01⟩, |10⟩, |11⟩. Every module in the crate uses this order.
//!
//! The six-dimensional reachable sub-algebra is spanned by
//! γ₁..₃ = σ₁..₃ ⊗ I (the controllable distribution) and
//! γ₄..₆ = σ₁..₃ ⊗ σ_z (the penalised directions). The basis is orthonormal
//! under the normalised trace, `Tr_norm(I) = 1`.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::{DMatrix, SMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = SMatrix<C64, 2, 2>;
pub type Mat4 = SMatrix<C64, 4, 4>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Eigenphases closer than this to ±π are treated as sitting on the branch cut.
pub const BRANCH_CUT_GUARD: f64 = 1e-10;

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

pub fn sigma_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// The three Pauli matrices in (x, y, z) order.
pub fn paulis() -> [Mat2; 3] {
    [sigma_x(), sigma_y(), sigma_z()]
}

/// Kronecker product `a ⊗ b` with `a` acting on the system qubit.
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// `Tr(M) / dim`.
pub fn trace_norm<const D: usize>(m: &SMatrix<C64, D, D>) -> C64 {
    m.trace() / D as f64
}

/// Real 6-vector of coordinates in the Γ basis.
///
/// Costates Λ(0) and penalised control Hamiltonians are stored in this form.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GammaVector(pub [f64; 6]);

impl GammaVector {
    pub const ZERO: GammaVector = GammaVector([0.0; 6]);

    pub fn new(v: [f64; 6]) -> Self {
        Self(v)
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        let arr: [f64; 6] = v.try_into().ok()?;
        Some(Self(arr))
    }

    /// Distribution part (λ₁, λ₂, λ₃).
    pub fn delta_part(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    /// Penalised part (λ₄, λ₅, λ₆).
    pub fn penalty_part(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|x| x * s))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Index<usize> for GammaVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for GammaVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for GammaVector {
    type Output = GammaVector;
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        for k in 0..6 {
            out.0[k] += rhs.0[k];
        }
        out
    }
}

impl Sub for GammaVector {
    type Output = GammaVector;
    fn sub(self, rhs: Self) -> Self {
        let mut out = self;
        for k in 0..6 {
            out.0[k] -= rhs.0[k];
        }
        out
    }
}

impl Mul<f64> for GammaVector {
    type Output = GammaVector;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

/// γ₁..γ₆ as explicit 4×4 matrices.
pub fn gamma_basis() -> [Mat4; 6] {
    let [sx, sy, sz] = paulis();
    let id = identity2();
    [
        kron(&sx, &id),
        kron(&sy, &id),
        kron(&sz, &id),
        kron(&sx, &sz),
        kron(&sy, &sz),
        kron(&sz, &sz),
    ]
}

/// Σₖ λₖ γₖ.
pub fn gamma_embed(lambda: &GammaVector) -> Mat4 {
    let basis = gamma_basis();
    let mut m = Mat4::zeros();
    for (l, g) in lambda.0.iter().zip(basis.iter()) {
        m += g * C64::from(*l);
    }
    // Symmetrise so the result is Hermitian to the last bit.
    (m + m.adjoint()) * C64::from(0.5)
}

/// λₖ = Re Tr_norm(M γₖ). Components of `M` outside span(Γ) are discarded.
pub fn gamma_project(m: &Mat4) -> GammaVector {
    let basis = gamma_basis();
    let mut out = [0.0; 6];
    for (k, g) in basis.iter().enumerate() {
        out[k] = trace_norm(&(m * g)).re;
    }
    GammaVector(out)
}

/// Projector onto the distribution Δ = {σₖ ⊗ I}.
pub fn apply_p(m: &Mat4) -> Mat4 {
    gamma_embed(&project_p(&gamma_project(m)))
}

/// Projector onto Γ \ Δ = {σₖ ⊗ σ_z}.
pub fn apply_q(m: &Mat4) -> Mat4 {
    gamma_embed(&project_q(&gamma_project(m)))
}

pub fn project_p(l: &GammaVector) -> GammaVector {
    GammaVector([l[0], l[1], l[2], 0.0, 0.0, 0.0])
}

pub fn project_q(l: &GammaVector) -> GammaVector {
    GammaVector([0.0, 0.0, 0.0, l[3], l[4], l[5]])
}

fn check_penalty(q: f64) -> Result<()> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidPenalty(q));
    }
    Ok(())
}

/// `F_q = P + Q/q` in Γ coordinates.
pub fn fq_coords(l: &GammaVector, q: f64) -> Result<GammaVector> {
    check_penalty(q)?;
    let s = 1.0 / q;
    Ok(GammaVector([
        l[0],
        l[1],
        l[2],
        l[3] * s,
        l[4] * s,
        l[5] * s,
    ]))
}

/// `F_q⁻¹ = P + q Q` in Γ coordinates.
pub fn fq_inverse_coords(l: &GammaVector, q: f64) -> Result<GammaVector> {
    check_penalty(q)?;
    Ok(GammaVector([
        l[0],
        l[1],
        l[2],
        l[3] * q,
        l[4] * q,
        l[5] * q,
    ]))
}

pub fn apply_fq(m: &Mat4, q: f64) -> Result<Mat4> {
    Ok(gamma_embed(&fq_coords(&gamma_project(m), q)?))
}

pub fn apply_fq_inverse(m: &Mat4, q: f64) -> Result<Mat4> {
    Ok(gamma_embed(&fq_inverse_coords(&gamma_project(m), q)?))
}

fn to_dynamic<const D: usize>(m: &SMatrix<C64, D, D>) -> DMatrix<C64> {
    DMatrix::from_fn(D, D, |r, c| m[(r, c)])
}

/// Eigendecomposition of a Hermitian matrix: real eigenvalues and the
/// unitary whose columns are the eigenvectors.
pub fn eigh<const D: usize>(h: &SMatrix<C64, D, D>) -> (Vec<f64>, SMatrix<C64, D, D>) {
    // Symmetrise first so round-off in the caller cannot leak an
    // anti-Hermitian part into the solver.
    let sym = (h + h.adjoint()) * C64::from(0.5);
    let eig = to_dynamic(&sym).symmetric_eigen();
    let vals = eig.eigenvalues.iter().copied().collect();
    let vecs = SMatrix::<C64, D, D>::from_fn(|r, c| eig.eigenvectors[(r, c)]);
    (vals, vecs)
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_map<const D: usize>(
    h: &SMatrix<C64, D, D>,
    f: impl Fn(f64) -> C64,
) -> SMatrix<C64, D, D> {
    let (vals, vecs) = eigh(h);
    let diag = SMatrix::<C64, D, D>::from_fn(|r, c| if r == c { f(vals[r]) } else { ZERO });
    vecs * diag * vecs.adjoint()
}

/// Exponential of a skew-Hermitian matrix `A`, computed as `exp(i·(−iA))`
/// through the spectrum of the Hermitian `−iA`.
pub fn mat_exp<const D: usize>(a: &SMatrix<C64, D, D>) -> SMatrix<C64, D, D> {
    let h = a * (-I);
    hermitian_map(&h, |x| C64::from_polar(1.0, x))
}

/// `exp(−i H t)` for Hermitian `H`.
pub fn expm_hermitian<const D: usize>(h: &SMatrix<C64, D, D>, t: f64) -> SMatrix<C64, D, D> {
    hermitian_map(h, |x| C64::from_polar(1.0, -x * t))
}

/// Principal logarithm of a unitary matrix, returned as a skew-Hermitian
/// matrix with eigenvalues `iφ`, `φ ∈ (−π, π)`.
///
/// Fails when any eigenphase lies within [`BRANCH_CUT_GUARD`] of ±π.
pub fn mat_log<const D: usize>(u: &SMatrix<C64, D, D>) -> Result<SMatrix<C64, D, D>> {
    // A unitary is normal, so its Hermitian and anti-Hermitian parts commute
    // and share an eigenbasis. Diagonalising a real combination of the two
    // avoids a non-Hermitian eigensolver; an accidental degeneracy of the
    // combination is caught by the reconstruction check and retried.
    let herm = (u + u.adjoint()) * C64::from(0.5);
    let anti = (u - u.adjoint()) * C64::new(0.0, -0.5);
    for mix_coef in [0.516_939_7, 1.913_294_1, -0.377_215_3] {
        let mix = herm + anti * C64::from(mix_coef);
        let (_, vecs) = eigh(&mix);
        let d = vecs.adjoint() * u * vecs;
        let mut logs = SMatrix::<C64, D, D>::zeros();
        for k in 0..D {
            let phase = d[(k, k)].arg();
            if std::f64::consts::PI - phase.abs() < BRANCH_CUT_GUARD {
                return Err(Error::BranchCut { phase });
            }
            logs[(k, k)] = C64::new(0.0, phase);
        }
        let out = vecs * logs * vecs.adjoint();
        let out = (out - out.adjoint()) * C64::from(0.5);
        if max_abs_diff(&mat_exp(&out), u) < 1e-9 {
            return Ok(out);
        }
    }
    Err(Error::Numerical(
        "unitary logarithm failed to reproduce its argument".into(),
    ))
}

/// `1 − |Tr_norm(U₁† U₂)|`.
pub fn infidelity<const D: usize>(u1: &SMatrix<C64, D, D>, u2: &SMatrix<C64, D, D>) -> f64 {
    let overlap = trace_norm(&(u1.adjoint() * u2)).norm();
    (1.0 - overlap).clamp(0.0, 1.0)
}

/// Square root of a positive semidefinite matrix.
pub fn sqrtm_psd<const D: usize>(m: &SMatrix<C64, D, D>) -> Result<SMatrix<C64, D, D>> {
    let (vals, _) = eigh(m);
    if let Some(&bad) = vals.iter().find(|&&v| v < -1e-10) {
        return Err(Error::NotPositive(bad));
    }
    Ok(hermitian_map(m, |x| C64::from(x.max(0.0).sqrt())))
}

/// Uhlmann–Jozsa fidelity `[Tr √(√ρ σ √ρ)]²` with the conventional trace.
pub fn uj_fidelity<const D: usize>(
    rho: &SMatrix<C64, D, D>,
    sigma: &SMatrix<C64, D, D>,
) -> Result<f64> {
    let sr = sqrtm_psd(rho)?;
    sqrtm_psd(sigma)?;
    let inner = sr * sigma * sr;
    // The inner product is PSD up to round-off; clip tiny negative modes.
    let (vals, _) = eigh(&inner);
    let tr: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((tr * tr).clamp(0.0, 1.0))
}

/// `exp(−i u·σ) = I cos θ − i û·σ sin θ`, θ = |u|.
pub fn target_from_axis(u: [f64; 3]) -> Mat2 {
    let theta = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let (s, c) = theta.sin_cos();
    let sinc = if theta > 1e-300 { s / theta } else { 1.0 };
    let [sx, sy, sz] = paulis();
    let gen = sx * C64::from(u[0]) + sy * C64::from(u[1]) + sz * C64::from(u[2]);
    identity2() * C64::from(c) - gen * C64::new(0.0, sinc)
}

/// Target lifted to the purified space, `U ⊗ I`.
pub fn lift_target(u: &Mat2) -> Mat4 {
    kron(u, &identity2())
}

/// Coordinates `h` of a traceless Hermitian 2×2 matrix `h·σ`.
pub fn pauli_coords(m: &Mat2) -> [f64; 3] {
    paulis().map(|s| trace_norm(&(m * s)).re)
}

/// Deviation of `U†U` from the identity, max-abs entry.
pub fn unitarity_defect<const D: usize>(u: &SMatrix<C64, D, D>) -> f64 {
    let e = u.adjoint() * u - SMatrix::<C64, D, D>::identity();
    e.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry-wise modulus of `a − b`.
pub fn max_abs_diff<const D: usize>(a: &SMatrix<C64, D, D>, b: &SMatrix<C64, D, D>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &Mat4, b: &Mat4, tol: f64) -> bool {
        max_abs_diff(a, b) < tol
    }

    #[test]
    fn embed_zero_and_basis() {
        assert_eq!(gamma_embed(&GammaVector::ZERO), Mat4::zeros());
        let m = gamma_embed(&GammaVector([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]));
        let expect = Mat4::from_diagonal(&nalgebra::Vector4::new(ONE, ONE, -ONE, -ONE));
        assert_eq!(m, expect);
    }

    #[test]
    fn project_basis_elements() {
        let zz = kron(&sigma_z(), &sigma_z());
        assert_eq!(
            gamma_project(&zz),
            GammaVector([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        );
        assert_eq!(gamma_project(&Mat4::identity()), GammaVector::ZERO);
        for (j, g) in gamma_basis().iter().enumerate() {
            let p = gamma_project(g);
            for k in 0..6 {
                assert_eq!(p[k], if j == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn worked_example_costate_round_trip() {
        let l = GammaVector([10.5288, 0.3828, 0.5578, 5.3081, -24.2970, -44.0307]);
        let back = gamma_project(&gamma_embed(&l));
        for k in 0..6 {
            assert!((back[k] - l[k]).abs() < 1e-13);
        }
        let m = gamma_embed(&l);
        assert_eq!(m, m.adjoint());
        assert!(m.trace().norm() < 1e-13);
    }

    #[test]
    fn projectors_on_members() {
        let xi = kron(&sigma_x(), &identity2());
        assert!(close(&apply_p(&xi), &xi, 1e-15));
        assert!(close(&apply_q(&xi), &Mat4::zeros(), 1e-15));
        let zz = kron(&sigma_z(), &sigma_z());
        assert!(close(&apply_p(&zz), &Mat4::zeros(), 1e-15));
        assert!(close(&apply_q(&zz), &zz, 1e-15));
    }

    #[test]
    fn fq_unit_and_scalar() {
        let m = gamma_embed(&GammaVector([0.3, -1.0, 2.0, 0.5, 0.1, -0.7]));
        assert!(close(&apply_fq(&m, 1.0).unwrap(), &m, 1e-14));
        let zz = kron(&sigma_z(), &sigma_z());
        assert!(close(
            &apply_fq(&zz, 10.0).unwrap(),
            &(zz * C64::from(0.1)),
            1e-15
        ));
        assert!(matches!(apply_fq(&zz, 0.0), Err(Error::InvalidPenalty(_))));
        assert!(matches!(
            apply_fq_inverse(&zz, -2.0),
            Err(Error::InvalidPenalty(_))
        ));
    }

    #[test]
    fn fq_tends_to_p() {
        let m = gamma_embed(&GammaVector([0.3, -1.0, 2.0, 0.5, 0.1, -0.7]));
        let far = apply_fq(&m, 1e12).unwrap();
        assert!(close(&far, &apply_p(&m), 1e-11));
    }

    #[test]
    fn exp_identities() {
        assert!(close(&mat_exp(&Mat4::zeros()), &Mat4::identity(), 1e-15));
        let xi = kron(&sigma_x(), &identity2());
        let u = mat_exp(&(xi * C64::new(0.0, -PI / 2.0)));
        assert!(close(&u, &(xi * (-I)), 1e-14));
    }

    #[test]
    fn log_branch_cut_is_an_error() {
        let minus = -Mat4::identity();
        assert!(matches!(mat_log(&minus), Err(Error::BranchCut { .. })));
    }

    #[test]
    fn infidelity_basics() {
        let u = lift_target(&target_from_axis([0.3, -0.2, 1.1]));
        assert!(infidelity(&u, &u) < 1e-15);
        let phased = u * C64::from_polar(1.0, 0.77);
        assert!(infidelity(&u, &phased) < 1e-14);
        let xi = kron(&sigma_x(), &identity2());
        assert!((infidelity(&Mat4::identity(), &xi) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uj_fidelity_pure_states() {
        let p0 = Mat2::new(ONE, ZERO, ZERO, ZERO);
        let p1 = Mat2::new(ZERO, ZERO, ZERO, ONE);
        assert!((uj_fidelity(&p0, &p0).unwrap() - 1.0).abs() < 1e-12);
        assert!(uj_fidelity(&p0, &p1).unwrap().abs() < 1e-12);
        let bad = Mat2::new(C64::from(1.5), ZERO, ZERO, C64::from(-0.5));
        assert!(matches!(uj_fidelity(&bad, &p0), Err(Error::NotPositive(_))));
    }

    #[test]
    fn axis_targets() {
        assert!(max_abs_diff(&target_from_axis([0.0; 3]), &identity2()) < 1e-15);
        let x = target_from_axis([PI / 2.0, 0.0, 0.0]);
        assert!(max_abs_diff(&x, &(sigma_x() * (-I))) < 1e-15);
        let u = target_from_axis([0.307485, 0.346931, -2.78627]);
        assert!(unitarity_defect(&u) < 1e-15);
        let theta = (0.307485_f64.powi(2) + 0.346931_f64.powi(2) + 2.78627_f64.powi(2)).sqrt();
        assert!((u.trace().re - 2.0 * theta.cos()).abs() < 1e-14);
    }
}
