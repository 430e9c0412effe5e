//! Open-system verification of control fields.
//!
//! All density matrices are in the interaction picture with respect to the
//! control, `ρ_I = U_S† ρ U_S`, so a perfectly protected gate keeps
//! `ρ_I(τ) = ρ(0)`. The coupling operator `A` enters through its toggling
//! frame form `S(t) = U_S(t)† A U_S(t)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{eigh, mat_log, pauli_coords, paulis, sigma_x, sigma_z, Mat2, C64};
use crate::error::{Error, Result};
use crate::field::ControlField;
use crate::noise::{correlation, h_of_t, lambda0, mu, mu_dot, Grid, NoiseParams};
use crate::su2::Su2;

/// Trace drift beyond this aborts a solve.
pub const TRACE_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory {
    pub t: Vec<f64>,
    pub rho: Vec<Mat2>,
}

impl DensityTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last(&self) -> &Mat2 {
        self.rho.last().expect("non-empty trajectory")
    }

    /// Largest trace distance to `other` over the shared grid.
    pub fn max_trace_distance(&self, other: &DensityTrajectory) -> f64 {
        self.rho
            .iter()
            .zip(&other.rho)
            .map(|(a, b)| trace_distance(a, b))
            .fold(0.0, f64::max)
    }

    /// Schrödinger-picture copy, `U_S ρ_I U_S†`.
    pub fn to_schrodinger(&self, us: &[Mat2]) -> DensityTrajectory {
        let rho = self
            .rho
            .iter()
            .zip(us)
            .map(|(r, u)| u * r * u.adjoint())
            .collect();
        DensityTrajectory {
            t: self.t.clone(),
            rho,
        }
    }
}

/// `½ Tr|a − b|`.
pub fn trace_distance(a: &Mat2, b: &Mat2) -> f64 {
    let (vals, _) = eigh(&(a - b));
    0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()
}

/// `|ψ⟩⟨ψ|` for amplitudes `(c₀, c₁)`.
pub fn pure_state(c0: C64, c1: C64) -> Mat2 {
    let n = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
    let (c0, c1) = (c0 / n, c1 / n);
    Mat2::new(
        c0 * c0.conj(),
        c0 * c1.conj(),
        c1 * c0.conj(),
        c1 * c1.conj(),
    )
}

/// `(|0⟩ + |1⟩)/√2`.
pub fn plus_state() -> Mat2 {
    pure_state(C64::from(1.0), C64::from(1.0))
}

/// Eigenstates of σ_x, σ_y, σ_z, positive eigenvalue first.
pub fn six_states() -> [Mat2; 6] {
    let one = C64::from(1.0);
    let i = C64::i();
    [
        pure_state(one, one),
        pure_state(one, -one),
        pure_state(one, i),
        pure_state(one, -i),
        pure_state(one, C64::from(0.0)),
        pure_state(C64::from(0.0), one),
    ]
}

fn check_density(rho: &Mat2) -> Result<()> {
    if (rho.trace().re - 1.0).abs() > 1e-9 || (rho - rho.adjoint()).iter().any(|z| z.norm() > 1e-12)
    {
        return Err(Error::InvalidArgument(
            "rho0 must be Hermitian with unit trace".into(),
        ));
    }
    let (vals, _) = eigh(rho);
    if let Some(&v) = vals.iter().find(|&&v| v < -1e-10) {
        return Err(Error::NotPositive(v));
    }
    Ok(())
}

fn hermitize(m: &Mat2) -> Mat2 {
    (m + m.adjoint()) * C64::from(0.5)
}

fn finish_step(rho: &Mat2, step: usize) -> Result<Mat2> {
    let r = hermitize(rho);
    let drift = (r.trace().re - 1.0).abs();
    if drift > TRACE_GUARD || !r.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        log::warn!("trace drift {drift:.2e} at step {step}");
        return Err(Error::TraceDrift(drift));
    }
    Ok(r)
}

/// `U_S(t)` on the field grid from `i dU_S/dt = H_c(t) U_S` (RK4 with the
/// midpoint field interpolated, renormalised every step).
pub fn schrodinger_us(field: &ControlField) -> Result<Vec<Mat2>> {
    Ok(schrodinger_su2(field)?.iter().map(Su2::to_mat2).collect())
}

fn schrodinger_su2(field: &ControlField) -> Result<Vec<Su2>> {
    field.validate()?;
    let n = field.steps();
    let dt = field.dt();
    let om = |k: usize| field.omega(k);
    let mut u = Su2::IDENTITY;
    let mut out = Vec::with_capacity(n + 1);
    out.push(u);
    for k in 0..n {
        let (w0, w1) = (om(k), om(k + 1));
        let wm = [
            0.5 * (w0[0] + w1[0]),
            0.5 * (w0[1] + w1[1]),
            0.5 * (w0[2] + w1[2]),
        ];
        let k1 = u.left_pure(&w0);
        let k2 = u.axpy(0.5 * dt, &k1).left_pure(&wm);
        let k3 = u.axpy(0.5 * dt, &k2).left_pure(&wm);
        let k4 = u.axpy(dt, &k3).left_pure(&w1);
        let next = u
            .axpy(dt / 6.0, &k1)
            .axpy(dt / 3.0, &k2)
            .axpy(dt / 3.0, &k3)
            .axpy(dt / 6.0, &k4);
        let defect = (next.norm_sq() - 1.0).abs();
        if !(defect <= 1e-8) {
            return Err(Error::UnitarityBlowup { defect, step: k });
        }
        u = next.normalized();
        out.push(u);
    }
    Ok(out)
}

/// `S(t) = U_S† A U_S` on the grid.
pub fn toggling_frame(us: &[Mat2], coupling: &Mat2) -> Vec<Mat2> {
    us.iter().map(|u| u.adjoint() * coupling * u).collect()
}

/// Second-order time-convolutionless equation for coupling `A`:
///
/// `dρ/dt = −∫₀ᵗ dt′ {𝒞(t−t′)[S(t)S(t′)ρ(t) − S(t′)ρ(t)S(t)] + h.c.}`.
///
/// The memory integral `M(t) = ∫₀ᵗ 𝒞(t−t′)S(t′)dt′` is a trapezoid sum over
/// the stored history; the outer stepper is Heun's method.
pub fn solve_master(
    field: &ControlField,
    p: &NoiseParams,
    rho0: &Mat2,
    coupling: &Mat2,
) -> Result<DensityTrajectory> {
    p.validate()?;
    check_density(rho0)?;
    let us = schrodinger_us(field)?;
    let s = toggling_frame(&us, coupling);
    let n = field.steps();
    let dt = field.dt();
    let lags: Vec<Complex64> = (0..=n).map(|k| correlation(k as f64 * dt, p)).collect();
    let memory = |j: usize| -> Mat2 {
        if j == 0 {
            return Mat2::zeros();
        }
        let mut m = s[0] * (lags[j] * 0.5) + s[j] * (lags[0] * 0.5);
        for k in 1..j {
            m += s[k] * lags[j - k];
        }
        m * C64::from(dt)
    };
    let rhs = |sj: &Mat2, m: &Mat2, r: &Mat2| -> Mat2 {
        let md = m.adjoint();
        -(sj * m * r - m * r * sj + r * md * sj - sj * r * md)
    };
    let mut rho = *rho0;
    let mut out = vec![rho];
    let mut m_now = memory(0);
    for j in 0..n {
        let m_next = memory(j + 1);
        let f0 = rhs(&s[j], &m_now, &rho);
        let pred = rho + f0 * C64::from(dt);
        let f1 = rhs(&s[j + 1], &m_next, &pred);
        rho = finish_step(&(rho + (f0 + f1) * C64::from(0.5 * dt)), j)?;
        out.push(rho);
        m_now = m_next;
    }
    Ok(DensityTrajectory {
        t: field.t.clone(),
        rho: out,
    })
}

/// [`solve_master`] with the dephasing coupling σ_z.
pub fn solve_master_dephasing(
    field: &ControlField,
    p: &NoiseParams,
    rho0: &Mat2,
) -> Result<DensityTrajectory> {
    solve_master(field, p, rho0, &sigma_z())
}

/// Reduced dynamics of the purified model,
/// `dρ/dt = −h(t)∫₀ᵗ h(t′)[S(t), [S(t′), ρ(t′)]] dt′`, integrated as the
/// pair `K′ = h[S, ρ]`, `ρ′ = −h[S, K]` with Heun's method.
pub fn solve_effective_master(
    field: &ControlField,
    p: &NoiseParams,
    rho0: &Mat2,
) -> Result<DensityTrajectory> {
    p.validate()?;
    check_density(rho0)?;
    let us = schrodinger_us(field)?;
    let s = toggling_frame(&us, &sigma_z());
    let n = field.steps();
    let dt = field.dt();
    let h: Vec<f64> = field.t.iter().map(|&t| h_of_t(t - field.t[0], p)).collect();
    let comm = |a: &Mat2, b: &Mat2| a * b - b * a;
    let f = |j: usize, r: &Mat2, k: &Mat2| -> (Mat2, Mat2) {
        let hj = C64::from(h[j]);
        (-comm(&s[j], k) * hj, comm(&s[j], r) * hj)
    };
    let mut rho = *rho0;
    let mut kk = Mat2::zeros();
    let mut out = vec![rho];
    let c = C64::from(dt);
    for j in 0..n {
        let (dr0, dk0) = f(j, &rho, &kk);
        let (dr1, dk1) = f(j + 1, &(rho + dr0 * c), &(kk + dk0 * c));
        rho = finish_step(&(rho + (dr0 + dr1) * (c * 0.5)), j)?;
        kk += (dk0 + dk1) * (c * 0.5);
        out.push(rho);
    }
    Ok(DensityTrajectory {
        t: field.t.clone(),
        rho: out,
    })
}

/// Closed form without control: populations fixed, coherence scaled by μ(t).
pub fn exact_no_control(p: &NoiseParams, rho0: &Mat2, grid: &Grid) -> Result<DensityTrajectory> {
    p.validate()?;
    check_density(rho0)?;
    let t = grid.times();
    let rho = t
        .iter()
        .map(|&s| {
            let m = mu(s, p);
            let mut r = *rho0;
            r[(0, 1)] *= m;
            r[(1, 0)] *= m;
            r
        })
        .collect();
    Ok(DensityTrajectory { t, rho })
}

/// Amplitude damping after the rotating-wave approximation: coupling σ_x
/// and `H_c^eff = f·σ + ω₀σ_z`.
pub fn solve_jc_amplitude_damping(
    f: &ControlField,
    p: &NoiseParams,
    omega0: f64,
    rho0: &Mat2,
) -> Result<DensityTrajectory> {
    let report = crate::ampdamp::rwa_check(omega0, p);
    if !report.valid {
        log::warn!("{}", report.message);
    }
    let mut eff = f.clone();
    for w in eff.wz.iter_mut() {
        *w += omega0;
    }
    solve_master(&eff, p, rho0, &sigma_x())
}

/// `F(t) = Tr[ρ(0) ρ(t)]` for a pure `ρ(0)`.
pub fn fidelity_t(traj: &DensityTrajectory, rho0: &Mat2) -> Result<Vec<f64>> {
    let purity = (rho0 * rho0).trace().re;
    if purity < 1.0 - 1e-9 {
        return Err(Error::MixedState(purity));
    }
    Ok(traj.rho.iter().map(|r| (rho0 * r).trace().re).collect())
}

/// Mean of [`fidelity_t`] over the six Pauli eigenstates, each evolved by
/// `solver` independently.
pub fn avg_fidelity_t(solver: impl Fn(&Mat2) -> Result<DensityTrajectory>) -> Result<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    for s in six_states() {
        let f = fidelity_t(&solver(&s)?, &s)?;
        match acc.as_mut() {
            None => acc = Some(f),
            Some(a) => a.iter_mut().zip(&f).for_each(|(x, y)| *x += y),
        }
    }
    Ok(acc
        .expect("six states")
        .into_iter()
        .map(|x| x / 6.0)
        .collect())
}

/// Constant field `H = i log(U)/τ` that generates `target` without noise.
pub fn trivial_hamiltonian(target: &Mat2, n: usize, tau: f64) -> Result<ControlField> {
    let det = target.determinant();
    let su = target * C64::from_polar(1.0, -0.5 * det.arg());
    let h = pauli_coords(&(mat_log(&su)? * C64::new(0.0, 1.0 / tau)));
    Ok(ControlField::constant(h, n, tau))
}

pub fn energy_cost(field: &ControlField) -> f64 {
    field.energy_cost()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub purity: f64,
}

pub fn bloch_point(rho: &Mat2) -> BlochPoint {
    let [x, y, z] = paulis().map(|s| (rho * s).trace().re);
    BlochPoint {
        x,
        y,
        z,
        purity: (rho * rho).trace().re,
    }
}

pub fn bloch_export(traj: &DensityTrajectory) -> Vec<BlochPoint> {
    traj.rho.iter().map(bloch_point).collect()
}

/// CSV with columns `t,F,x,y,z,purity`.
pub fn trajectory_csv(traj: &DensityTrajectory, rho0: &Mat2) -> Result<String> {
    let f = fidelity_t(traj, rho0)?;
    let mut s = String::from("t,F,x,y,z,purity\n");
    for ((t, fi), b) in traj.t.iter().zip(&f).zip(bloch_export(traj)) {
        s += &format!("{t},{fi},{},{},{},{}\n", b.x, b.y, b.z, b.purity);
    }
    Ok(s)
}

/// Cross-checks between the reduced equations in their limiting regimes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppendixReport {
    /// Constant S: effective equation vs the summed `(μ̇/2μ)[ρ − SρS]` form.
    pub a_max_diff: f64,
    /// Slow bath: TCL2 vs the λ₀-kernel equation (trace distance).
    pub b_master_vs_kernel: f64,
    /// Slow bath: effective equation vs the λ₀-kernel equation.
    pub b_effective_vs_kernel: f64,
    pub a_pass: bool,
    pub b_pass: bool,
}

/// `dρ/dt = (μ̇/2μ)[ρ − SρS]` for `S = σ_z`.
pub fn solve_summed_constant_s(
    p: &NoiseParams,
    rho0: &Mat2,
    n: usize,
) -> Result<DensityTrajectory> {
    let grid = Grid::new(n, p.tau)?;
    let dt = grid.dt();
    let sz = sigma_z();
    let rate = |t: f64| {
        if t == 0.0 {
            0.0
        } else {
            mu_dot(t, p) / (2.0 * mu(t, p))
        }
    };
    let f = |t: f64, r: &Mat2| (r - sz * r * sz) * C64::from(rate(t));
    let mut rho = *rho0;
    let mut out = vec![rho];
    for j in 0..n {
        let t = grid.time(j);
        let k0 = f(t, &rho);
        let k1 = f(t + dt, &(rho + k0 * C64::from(dt)));
        rho = finish_step(&(rho + (k0 + k1) * C64::from(0.5 * dt)), j)?;
        out.push(rho);
    }
    Ok(DensityTrajectory {
        t: grid.times(),
        rho: out,
    })
}

/// `dρ/dt = −λ₀[S(t), [∫₀ᵗ S(t′)dt′, ρ(t)]]`, the short-memory limit.
pub fn solve_lambda0_kernel(
    field: &ControlField,
    p: &NoiseParams,
    rho0: &Mat2,
) -> Result<DensityTrajectory> {
    check_density(rho0)?;
    let s = toggling_frame(&schrodinger_us(field)?, &sigma_z());
    let n = field.steps();
    let dt = field.dt();
    let l0 = C64::from(lambda0(p));
    let comm = |a: &Mat2, b: &Mat2| a * b - b * a;
    let mut integral = Mat2::zeros();
    let mut rho = *rho0;
    let mut out = vec![rho];
    for j in 0..n {
        let next_integral = integral + (s[j] + s[j + 1]) * C64::from(0.5 * dt);
        let k0 = -comm(&s[j], &comm(&integral, &rho)) * l0;
        let pred = rho + k0 * C64::from(dt);
        let k1 = -comm(&s[j + 1], &comm(&next_integral, &pred)) * l0;
        rho = finish_step(&(rho + (k0 + k1) * C64::from(0.5 * dt)), j)?;
        integral = next_integral;
        out.push(rho);
    }
    Ok(DensityTrajectory {
        t: field.t.clone(),
        rho: out,
    })
}

pub fn appendix_equivalence_checks(p: &NoiseParams, n: usize) -> Result<AppendixReport> {
    let rho0 = plus_state();
    let quiet = ControlField::zeros(n, p.tau);
    let eff = solve_effective_master(&quiet, p, &rho0)?;
    let summed = solve_summed_constant_s(p, &rho0, n)?;
    let a_max_diff = eff
        .rho
        .iter()
        .zip(&summed.rho)
        .map(|(a, b)| (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);

    let slow = NoiseParams {
        omega_c: 0.01 / p.tau,
        ..*p
    };
    let field = ControlField::from_fn(n, p.tau, |t| {
        let w = std::f64::consts::PI * t / p.tau;
        [0.5 * w.sin(), 0.3 * w.cos(), 0.2]
    });
    let kernel = solve_lambda0_kernel(&field, &slow, &rho0)?;
    let master = solve_master_dephasing(&field, &slow, &rho0)?;
    let effective = solve_effective_master(&field, &slow, &rho0)?;
    let b_master_vs_kernel = master.max_trace_distance(&kernel);
    let b_effective_vs_kernel = effective.max_trace_distance(&kernel);
    Ok(AppendixReport {
        a_max_diff,
        b_master_vs_kernel,
        b_effective_vs_kernel,
        a_pass: a_max_diff <= 1e-4,
        b_pass: b_master_vs_kernel <= 1e-3 && b_effective_vs_kernel <= 1e-3,
    })
}
