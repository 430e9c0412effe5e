//! Boundary-value solver for the penalised and sub-Riemannian geodesic
//! flows on the reachable group.
//!
//! The flow is `i dU/dt = {H_D(t) + F[U Λ₀ U†]} U`, `U(0) = I`, where `F` is
//! either `F_q = P + Q/q` or the projector `P`. Propagation runs in the
//! SU(2)×SU(2) block form of [`crate::su2`]; [`dense_endpoint`] integrates
//! the same equation with 4×4 matrices and is kept as a cross-check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{
    apply_fq, apply_p, gamma_embed, mat_log, pauli_coords, target_from_axis, GammaVector, Mat2,
    Mat4, C64,
};
use crate::error::{Error, Result};
use crate::field::ControlField;
use crate::noise::{drift_hamiltonian, h_of_t, DriftTable, NoiseParams};
use crate::optim::{minimize, MinimizeOptions, StopReason};
use crate::su2::{add3, join, scale3, split, sub3, BlockUnitary, Su2, Vec3};

/// Largest pre-correction unitarity drift tolerated in one step.
pub const UNITARITY_GUARD: f64 = 1e-8;

pub const DEFAULT_STEPS: usize = 1000;

/// Penalty on the `σₖ⊗σ_z` directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Finite(f64),
    /// The q → ∞ limit.
    SubRiemannian,
}

impl Penalty {
    fn inv_q(&self) -> Result<f64> {
        match *self {
            Penalty::Finite(q) if q > 0.0 && q.is_finite() => Ok(1.0 / q),
            Penalty::Finite(q) => Err(Error::InvalidPenalty(q)),
            Penalty::SubRiemannian => Ok(0.0),
        }
    }

    pub fn q(&self) -> f64 {
        match *self {
            Penalty::Finite(q) => q,
            Penalty::SubRiemannian => f64::INFINITY,
        }
    }
}

/// Single-qubit gate given by its axis-angle vector, `U = exp(−i u·σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub u: [f64; 3],
}

impl Target {
    pub fn from_axis(u: [f64; 3]) -> Self {
        Self { u }
    }

    /// Axis-angle form of an arbitrary 2×2 unitary, dropping its global
    /// phase and picking the representative with rotation angle ≤ π/2.
    pub fn from_unitary(m: &Mat2) -> Result<Self> {
        let det = m.determinant();
        if (det.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument("target is not unitary".into()));
        }
        let su = m * C64::from_polar(1.0, -0.5 * det.arg());
        let mut q = Su2::from_mat2(&su);
        if q.w < 0.0 {
            q = Su2 {
                w: -q.w,
                v: scale3(&q.v, -1.0),
            };
        }
        let s = crate::su2::dot3(&q.v, &q.v).sqrt();
        let theta = s.atan2(q.w);
        let u = if s > 1e-300 {
            scale3(&q.v, theta / s)
        } else {
            [0.0; 3]
        };
        Ok(Self { u })
    }

    pub fn su2(&self) -> Su2 {
        Su2::exp_axis(&self.u)
    }

    pub fn matrix(&self) -> Mat2 {
        target_from_axis(self.u)
    }

    pub fn block(&self) -> BlockUnitary {
        BlockUnitary::lift(self.su2())
    }
}

/// The geodesic flow for one noise setting and grid.
#[derive(Debug, Clone)]
pub struct GeodesicFlow {
    params: NoiseParams,
    table: DriftTable,
}

impl GeodesicFlow {
    pub fn new(params: &NoiseParams, n_steps: usize) -> Result<Self> {
        if n_steps < 100 {
            return Err(Error::InvalidArgument(format!(
                "n_steps must be >= 100, got {n_steps}"
            )));
        }
        Ok(Self {
            params: *params,
            table: DriftTable::new(params, n_steps)?,
        })
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }

    pub fn steps(&self) -> usize {
        self.table.steps()
    }

    pub fn dt(&self) -> f64 {
        self.params.tau / self.steps() as f64
    }

    pub fn endpoint(&self, costate: &GammaVector, pen: Penalty) -> Result<BlockUnitary> {
        self.run(costate, pen, None)
    }

    /// `U(t)` at every grid node, `steps() + 1` entries.
    pub fn trajectory(&self, costate: &GammaVector, pen: Penalty) -> Result<Vec<BlockUnitary>> {
        let mut out = Vec::with_capacity(self.steps() + 1);
        self.run(costate, pen, Some(&mut out))?;
        Ok(out)
    }

    pub fn infidelity(&self, costate: &GammaVector, pen: Penalty, target: &Target) -> Result<f64> {
        Ok(self.endpoint(costate, pen)?.infidelity(&target.block()))
    }

    fn run(
        &self,
        costate: &GammaVector,
        pen: Penalty,
        mut record: Option<&mut Vec<BlockUnitary>>,
    ) -> Result<BlockUnitary> {
        let inv_q = pen.inv_q()?;
        if !costate.is_finite() {
            return Err(Error::Numerical("non-finite costate".into()));
        }
        let (l_up, l_down) = split(costate);
        let n = self.steps();
        let dt = self.dt();
        let mut u = BlockUnitary::IDENTITY;
        if let Some(r) = record.as_deref_mut() {
            r.push(u);
        }
        let deriv = |y: &BlockUnitary, h: f64| -> BlockUnitary {
            let r0 = y.up.rotate(&l_up);
            let r1 = y.down.rotate(&l_down);
            let a = scale3(&add3(&r0, &r1), 0.5);
            let mut b = scale3(&sub3(&r0, &r1), 0.5 * inv_q);
            b[2] -= h;
            BlockUnitary {
                up: y.up.left_pure(&add3(&a, &b)),
                down: y.down.left_pure(&sub3(&a, &b)),
            }
        };
        let axpy = |y: &BlockUnitary, s: f64, k: &BlockUnitary| BlockUnitary {
            up: y.up.axpy(s, &k.up),
            down: y.down.axpy(s, &k.down),
        };
        for step in 0..n {
            let h0 = self.table.h_half(2 * step);
            let hm = self.table.h_half(2 * step + 1);
            let h1 = self.table.h_half(2 * step + 2);
            let k1 = deriv(&u, h0);
            let k2 = deriv(&axpy(&u, 0.5 * dt, &k1), hm);
            let k3 = deriv(&axpy(&u, 0.5 * dt, &k2), hm);
            let k4 = deriv(&axpy(&u, dt, &k3), h1);
            let mut next = u;
            next = axpy(&next, dt / 6.0, &k1);
            next = axpy(&next, dt / 3.0, &k2);
            next = axpy(&next, dt / 3.0, &k3);
            next = axpy(&next, dt / 6.0, &k4);
            let defect = next.unitarity_defect();
            if !(defect <= UNITARITY_GUARD) {
                return Err(Error::UnitarityBlowup { defect, step });
            }
            u = BlockUnitary {
                up: next.up.normalized(),
                down: next.down.normalized(),
            };
            if let Some(r) = record.as_deref_mut() {
                r.push(u);
            }
        }
        Ok(u)
    }

    /// Propagates and packages the result against `target`.
    pub fn solve(
        &self,
        costate: &GammaVector,
        pen: Penalty,
        target: &Target,
    ) -> Result<GeodesicSolution> {
        let trajectory = self.trajectory(costate, pen)?;
        let infidelity = trajectory
            .last()
            .expect("non-empty trajectory")
            .infidelity(&target.block());
        let control = control_from_trajectory(costate, &trajectory, self.params.tau);
        Ok(GeodesicSolution {
            target: *target,
            costate0: *costate,
            penalty: pen,
            trajectory,
            infidelity,
            control,
        })
    }
}

/// Result of one propagation.
#[derive(Debug, Clone)]
pub struct GeodesicSolution {
    pub target: Target,
    pub costate0: GammaVector,
    pub penalty: Penalty,
    pub trajectory: Vec<BlockUnitary>,
    pub infidelity: f64,
    pub control: ControlField,
}

impl GeodesicSolution {
    pub fn energy(&self) -> f64 {
        self.control.energy_cost()
    }

    pub fn to_document(&self, q_max: f64, noise: &NoiseParams) -> SolutionDocument {
        SolutionDocument {
            u: self.target.u,
            lambda0: self.costate0.0,
            q_max,
            sub_riemannian: self.penalty == Penalty::SubRiemannian,
            infidelity: self.infidelity,
            grid_n: self.control.steps(),
            energy: self.energy(),
            noise: Some(*noise),
            control: self.control.clone(),
        }
    }
}

/// On-disk form of a solved gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub u: [f64; 3],
    pub lambda0: [f64; 6],
    /// Largest finite penalty visited.
    pub q_max: f64,
    /// Whether `lambda0` belongs to the q → ∞ flow.
    #[serde(default)]
    pub sub_riemannian: bool,
    pub infidelity: f64,
    pub grid_n: usize,
    #[serde(default)]
    pub energy: f64,
    #[serde(default)]
    pub noise: Option<NoiseParams>,
    pub control: ControlField,
}

impl SolutionDocument {
    pub fn validate(&self) -> Result<()> {
        self.control.validate()?;
        if self.control.steps() != self.grid_n {
            return Err(Error::Schema(format!(
                "grid_n = {} but control has {} steps",
                self.grid_n,
                self.control.steps()
            )));
        }
        if !self
            .lambda0
            .iter()
            .chain(self.u.iter())
            .all(|x| x.is_finite())
        {
            return Err(Error::Schema("non-finite u or lambda0".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s).map_err(|e| Error::Schema(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }
}

/// `ω(t)`: the Δ components of `U(t) Λ₀ U(t)†`.
pub fn control_from_trajectory(
    costate: &GammaVector,
    traj: &[BlockUnitary],
    tau: f64,
) -> ControlField {
    let n = traj.len() - 1;
    let (l_up, l_down) = split(costate);
    let mut f = ControlField::zeros(n, tau);
    for (k, u) in traj.iter().enumerate() {
        let a = scale3(&add3(&u.up.rotate(&l_up), &u.down.rotate(&l_down)), 0.5);
        f.wx[k] = a[0];
        f.wy[k] = a[1];
        f.wz[k] = a[2];
    }
    f
}

pub fn extract_control(sol: &GeodesicSolution, tau: f64) -> ControlField {
    control_from_trajectory(&sol.costate0, &sol.trajectory, tau)
}

pub fn propagate_q(
    costate0: &GammaVector,
    q: f64,
    p: &NoiseParams,
    n_steps: usize,
    target: &Target,
) -> Result<GeodesicSolution> {
    GeodesicFlow::new(p, n_steps)?.solve(costate0, Penalty::Finite(q), target)
}

pub fn propagate_sub(
    costate0: &GammaVector,
    p: &NoiseParams,
    n_steps: usize,
    target: &Target,
) -> Result<GeodesicSolution> {
    GeodesicFlow::new(p, n_steps)?.solve(costate0, Penalty::SubRiemannian, target)
}

/// Dense 4×4 RK4 integration of the same flow, with polar re-unitarisation
/// through a Newton–Schulz correction. Slow; used to validate the block form.
pub fn dense_endpoint(
    costate: &GammaVector,
    pen: Penalty,
    p: &NoiseParams,
    n_steps: usize,
) -> Result<Mat4> {
    let inv_q = pen.inv_q()?;
    let lam = gamma_embed(costate);
    let dt = p.tau / n_steps as f64;
    let gen = |u: &Mat4, t: f64| -> Result<Mat4> {
        let l = u * lam * u.adjoint();
        let f = if inv_q == 0.0 {
            apply_p(&l)
        } else {
            apply_fq(&l, 1.0 / inv_q)?
        };
        Ok((drift_hamiltonian(t, p) + f) * u * C64::new(0.0, -1.0))
    };
    let mut u = Mat4::identity();
    for step in 0..n_steps {
        let t = step as f64 * dt;
        let c = C64::from(dt);
        let k1 = gen(&u, t)?;
        let k2 = gen(&(u + k1 * (c * 0.5)), t + 0.5 * dt)?;
        let k3 = gen(&(u + k2 * (c * 0.5)), t + 0.5 * dt)?;
        let k4 = gen(&(u + k3 * c), t + dt)?;
        let next = u + (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * (c / 6.0);
        let defect = crate::algebra::unitarity_defect(&next);
        if !(defect <= UNITARITY_GUARD) {
            return Err(Error::UnitarityBlowup { defect, step });
        }
        u = next;
        for _ in 0..2 {
            u = u * (Mat4::identity() * C64::from(1.5) - u.adjoint() * u * C64::from(0.5));
        }
    }
    Ok(u)
}

/// Naive costate: the target's generator on Δ plus a `σ_z⊗σ_z` component
/// that cancels the drift at `t = 0`.
pub fn initial_guess(target: &Mat2, q: f64, p: &NoiseParams) -> Result<GammaVector> {
    if !(q > 0.0) {
        return Err(Error::InvalidPenalty(q));
    }
    let det = target.determinant();
    let su = target * C64::from_polar(1.0, -0.5 * det.arg());
    let log = mat_log(&su)?;
    // log = −i H τ
    let h = pauli_coords(&(log * C64::new(0.0, 1.0 / p.tau)));
    let drift = if p.eta == 0.0 {
        0.0
    } else {
        q * h_of_t(0.0, p)
    };
    Ok(GammaVector([h[0], h[1], h[2], 0.0, 0.0, drift]))
}

/// [`initial_guess`] from the axis-angle form, bypassing the matrix log
/// (and its branch cut) since the generator is known.
pub fn initial_guess_axis(target: &Target, q: f64, p: &NoiseParams) -> Result<GammaVector> {
    if !(q > 0.0) {
        return Err(Error::InvalidPenalty(q));
    }
    let u = scale3(&target.u, 1.0 / p.tau);
    let drift = if p.eta == 0.0 {
        0.0
    } else {
        q * h_of_t(0.0, p)
    };
    Ok(GammaVector([u[0], u[1], u[2], 0.0, 0.0, drift]))
}

#[derive(Debug, Clone)]
pub struct Refined {
    pub costate: GammaVector,
    pub infidelity: f64,
    pub evals: usize,
    pub reason: StopReason,
}

/// Local minimisation of the endpoint infidelity over ℝ⁶.
pub fn minimize_infidelity(
    flow: &GeodesicFlow,
    seed: &GammaVector,
    target: &Target,
    pen: Penalty,
    tol: f64,
    max_evals: usize,
) -> Result<Refined> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be > 0, got {tol}"
        )));
    }
    let tb = target.block();
    let f0 = flow.endpoint(seed, pen)?.infidelity(&tb);
    let objective = |x: &[f64]| -> f64 {
        let l = GammaVector::from_slice(x).expect("six components");
        match flow.endpoint(&l, pen) {
            Ok(u) => u.infidelity(&tb),
            Err(_) => f64::INFINITY,
        }
    };
    let opts = MinimizeOptions {
        f_target: tol,
        max_evals,
        ..Default::default()
    };
    let r = minimize(objective, seed.as_slice(), &opts);
    if r.reason == StopReason::Stagnation {
        log::debug!("minimiser stagnated at infidelity {:.3e}", r.f);
    }
    if r.f <= f0 {
        Ok(Refined {
            costate: GammaVector::from_slice(&r.x).expect("six"),
            infidelity: r.f,
            evals: r.evals,
            reason: r.reason,
        })
    } else {
        Ok(Refined {
            costate: *seed,
            infidelity: f0,
            evals: r.evals,
            reason: r.reason,
        })
    }
}

/// Principal log of a phase-aligned block error, as a Γ vector.
pub fn shooting_residual(u_end: &BlockUnitary, target: &Target) -> Result<GammaVector> {
    let t = target.su2().adjoint();
    let e_up = t.mul(&u_end.up);
    let e_down = t.mul(&u_end.down);
    // Global phase of the 4×4 error is ±1; choose the sign closest to I.
    let s = if e_up.w + e_down.w < 0.0 { -1.0 } else { 1.0 };
    let log = |e: &Su2| -> Result<Vec3> {
        let w = s * e.w;
        let v = scale3(&e.v, s);
        let sn = crate::su2::dot3(&v, &v).sqrt();
        let theta = sn.atan2(w);
        if std::f64::consts::PI - theta < crate::algebra::BRANCH_CUT_GUARD {
            return Err(Error::BranchCut { phase: theta });
        }
        Ok(if sn > 1e-300 {
            scale3(&v, theta / sn)
        } else {
            v
        })
    };
    Ok(join(&log(&e_up)?, &log(&e_down)?))
}

#[derive(Debug, Clone)]
pub struct ShootOutcome {
    pub costate: GammaVector,
    pub infidelity: f64,
    pub iterations: usize,
    /// Endpoint propagations spent.
    pub evals: usize,
    /// No step reduced the infidelity; `costate` is the input.
    pub diverged: bool,
}

/// Damped Newton iteration on [`shooting_residual`] with a forward-difference
/// Jacobian. Steps are accepted only if the infidelity decreases.
pub fn shoot_newton(
    flow: &GeodesicFlow,
    costate: &GammaVector,
    target: &Target,
    pen: Penalty,
    max_iter: usize,
) -> Result<ShootOutcome> {
    let tb = target.block();
    let mut lam = *costate;
    let mut u = flow.endpoint(&lam, pen)?;
    let mut inf = u.infidelity(&tb);
    let start = inf;
    let mut iterations = 0;
    let mut evals = 1;
    for _ in 0..max_iter {
        let r = match shooting_residual(&u, target) {
            Ok(r) => r,
            Err(_) => break,
        };
        if r.norm() < 1e-12 {
            break;
        }
        iterations += 1;
        evals += 6;
        let Ok(jac) = residual_jacobian(flow, &lam, &r, target, pen) else {
            return Ok(finish(lam, inf, iterations, evals, start, costate));
        };
        let rhs = DVector::from_column_slice(r.as_slice());
        let delta = match jac.clone().lu().solve(&rhs) {
            Some(d) if d.iter().all(|x| x.is_finite()) => d,
            _ => match jac.svd(true, true).solve(&rhs, 1e-10) {
                Ok(d) => d,
                Err(_) => break,
            },
        };
        let mut accepted = false;
        let mut step = 1.0;
        for _ in 0..6 {
            let mut trial = lam;
            for i in 0..6 {
                trial[i] -= step * delta[i];
            }
            evals += 1;
            if let Ok(ut) = flow.endpoint(&trial, pen) {
                let it = ut.infidelity(&tb);
                if it < inf {
                    lam = trial;
                    u = ut;
                    inf = it;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted || inf == 0.0 {
            break;
        }
    }
    Ok(finish(lam, inf, iterations, evals, start, costate))
}

fn finish(
    lam: GammaVector,
    inf: f64,
    iterations: usize,
    evals: usize,
    start: f64,
    input: &GammaVector,
) -> ShootOutcome {
    if inf < start {
        ShootOutcome {
            costate: lam,
            infidelity: inf,
            iterations,
            evals,
            diverged: false,
        }
    } else {
        ShootOutcome {
            costate: *input,
            infidelity: start,
            iterations,
            evals,
            diverged: true,
        }
    }
}

/// Forward-difference Jacobian of [`shooting_residual`] at `lam`, given the
/// residual `r` there.
fn residual_jacobian(
    flow: &GeodesicFlow,
    lam: &GammaVector,
    r: &GammaVector,
    target: &Target,
    pen: Penalty,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::<f64>::zeros(6, 6);
    for j in 0..6 {
        let eps = 1e-6 * lam[j].abs().max(1.0);
        let mut lp = *lam;
        lp[j] += eps;
        let rp = shooting_residual(&flow.endpoint(&lp, pen)?, target)?;
        for i in 0..6 {
            jac[(i, j)] = (rp[i] - r[i]) / eps;
        }
    }
    Ok(jac)
}

/// Residual homotopy: tracks the root of `F(λ) = (1 − s)·F(λ₀)` from `s = 0`
/// to `1` in `steps` equal steps, then polishes with [`shoot_newton`].
/// Follows the solution connected to the seed instead of jumping to
/// whichever basin a damped step lands in. Fails if a step stalls.
pub fn shoot_homotopy(
    flow: &GeodesicFlow,
    costate: &GammaVector,
    target: &Target,
    pen: Penalty,
    steps: usize,
) -> Result<ShootOutcome> {
    const CORRECTOR_ITERS: usize = 10;
    let residual = |l: &GammaVector| {
        flow.endpoint(l, pen)
            .and_then(|u| shooting_residual(&u, target))
    };
    let r0 = residual(costate)?;
    let mut lam = *costate;
    let mut evals = 1;
    let mut iterations = 0;
    for k in 1..=steps.max(1) {
        let keep = 1.0 - k as f64 / steps.max(1) as f64;
        let mut converged = false;
        for _ in 0..CORRECTOR_ITERS {
            let r = residual(&lam)?;
            evals += 1;
            let g = DVector::from_fn(6, |i, _| r[i] - keep * r0[i]);
            if g.norm() < 1e-9 {
                converged = true;
                break;
            }
            iterations += 1;
            evals += 6;
            let d = residual_jacobian(flow, &lam, &r, target, pen)?
                .lu()
                .solve(&g)
                .filter(|d| d.iter().all(|x| x.is_finite()))
                .ok_or_else(|| Error::Numerical("singular shooting Jacobian".into()))?;
            for i in 0..6 {
                lam[i] -= d[i];
            }
        }
        if !converged {
            return Err(Error::Numerical(format!(
                "residual homotopy stalled at s = {:.2}",
                1.0 - keep
            )));
        }
    }
    let mut out = shoot_newton(flow, &lam, target, pen, 8)?;
    out.iterations += iterations;
    out.evals += evals;
    out.diverged = false;
    Ok(out)
}

/// Multiplicative penalty schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JumpSchedule {
    pub q_in: f64,
    pub q_max: f64,
    pub n_it: usize,
}

impl Default for JumpSchedule {
    fn default() -> Self {
        Self {
            q_in: 10.0,
            q_max: 2000.0,
            n_it: 100,
        }
    }
}

impl JumpSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_in > 0.0)
            || !(self.q_max > self.q_in)
            || !self.q_max.is_finite()
            || self.n_it == 0
        {
            return Err(Error::InvalidArgument(format!(
                "schedule needs 0 < q_in < q_max and n_it > 0 (q_in={}, q_max={}, n_it={})",
                self.q_in, self.q_max, self.n_it
            )));
        }
        Ok(())
    }

    /// χ with `factor = 10^χ`.
    pub fn chi(&self) -> f64 {
        (self.q_max / self.q_in).log10() / self.n_it as f64
    }

    pub fn factor(&self) -> f64 {
        10f64.powf(self.chi())
    }

    /// Nominal penalty sequence `q_in·factorᵏ`, `k = 0..=n_it`.
    pub fn sequence(&self) -> Vec<f64> {
        let f = self.factor();
        (0..=self.n_it)
            .map(|k| {
                if k == self.n_it {
                    self.q_max
                } else {
                    self.q_in * f.powi(k as i32)
                }
            })
            .collect()
    }
}

/// Tolerances and budgets for [`q_jump`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JumpOptions {
    /// Acceptance tolerance while the penalty is finite.
    pub tol: f64,
    /// Acceptance tolerance for the final q → ∞ pass.
    pub final_tol: f64,
    pub max_evals: usize,
    pub newton_iters: usize,
    pub max_halvings: usize,
}

impl Default for JumpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            final_tol: 5e-3,
            max_evals: 3000,
            newton_iters: 8,
            max_halvings: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub q: f64,
    pub infidelity: f64,
    pub halvings: usize,
}

#[derive(Debug, Clone)]
pub struct JumpReport {
    /// q → ∞ solution.
    pub solution: GeodesicSolution,
    /// Last finite-penalty costate and its infidelity.
    pub finite_costate: GammaVector,
    pub finite_infidelity: f64,
    pub q_reached: f64,
    pub history: Vec<JumpRecord>,
    /// Final infidelity within `final_tol`.
    pub converged: bool,
}

/// Seeds at or below this infidelity are shot with Newton before any
/// minimisation.
const WARM_START: f64 = 1e-2;

/// Minimise, then shoot when still above `tol`. Warm seeds go to Newton
/// first and skip the minimiser if that already lands inside `tol`.
pub fn refine(
    flow: &GeodesicFlow,
    seed: &GammaVector,
    target: &Target,
    pen: Penalty,
    tol: f64,
    opts: &JumpOptions,
) -> Result<Refined> {
    let mut seed = *seed;
    if flow.infidelity(&seed, pen, target)? <= WARM_START {
        let s = shoot_newton(flow, &seed, target, pen, opts.newton_iters)?;
        if s.infidelity <= tol {
            return Ok(Refined {
                costate: s.costate,
                infidelity: s.infidelity,
                evals: s.evals,
                reason: StopReason::Target,
            });
        }
        seed = s.costate;
    }
    let seed = &seed;
    let mut r = minimize_infidelity(flow, seed, target, pen, tol, opts.max_evals)?;
    if r.infidelity > tol {
        let s = shoot_newton(flow, &r.costate, target, pen, opts.newton_iters)?;
        if !s.diverged {
            r.costate = s.costate;
            r.infidelity = s.infidelity;
        }
    }
    Ok(r)
}

/// Homotopy in the penalty from `q_in` to `q_max`, then the q → ∞ pass.
/// Never fails on poor convergence; see [`JumpReport::converged`].
pub fn q_jump(
    flow: &GeodesicFlow,
    target: &Target,
    seed: Option<GammaVector>,
    schedule: &JumpSchedule,
    opts: &JumpOptions,
) -> Result<JumpReport> {
    schedule.validate()?;
    let p = *flow.params();
    let mut q = schedule.q_in;
    let start = match seed {
        Some(s) => s,
        None => initial_guess_axis(target, q, &p)?,
    };
    let first = refine(flow, &start, target, Penalty::Finite(q), opts.tol, opts)?;
    let mut lam = first.costate;
    let mut inf = first.infidelity;
    let mut history = vec![JumpRecord {
        q,
        infidelity: inf,
        halvings: 0,
    }];
    let chi0 = schedule.chi();

    while q < schedule.q_max * (1.0 - 1e-12) {
        let mut chi = chi0;
        let mut best: Option<(f64, Refined, usize)> = None;
        for halving in 0..=opts.max_halvings {
            let q_new = (q * 10f64.powf(chi)).min(schedule.q_max);
            let r = refine(flow, &lam, target, Penalty::Finite(q_new), opts.tol, opts)?;
            let ok = r.infidelity <= opts.tol;
            let better = best
                .as_ref()
                .map_or(true, |b| r.infidelity < b.1.infidelity);
            if ok || better {
                best = Some((q_new, r, halving));
            }
            if ok {
                break;
            }
            chi *= 0.5;
        }
        let (q_new, r, halvings) = best.expect("at least one attempt");
        if r.infidelity > opts.tol {
            log::debug!(
                "jump to q = {q_new:.4} accepted at infidelity {:.3e}",
                r.infidelity
            );
        }
        q = q_new;
        lam = r.costate;
        inf = r.infidelity;
        history.push(JumpRecord {
            q,
            infidelity: inf,
            halvings,
        });
    }

    let last = refine(
        flow,
        &lam,
        target,
        Penalty::SubRiemannian,
        opts.final_tol,
        opts,
    )?;
    // Polish with Newton even when already inside tolerance.
    let polished = shoot_newton(
        flow,
        &last.costate,
        target,
        Penalty::SubRiemannian,
        opts.newton_iters,
    )?;
    let final_costate = if polished.diverged {
        last.costate
    } else {
        polished.costate
    };
    let solution = flow.solve(&final_costate, Penalty::SubRiemannian, target)?;
    let converged = solution.infidelity <= opts.final_tol;
    Ok(JumpReport {
        solution,
        finite_costate: lam,
        finite_infidelity: inf,
        q_reached: q,
        history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{infidelity, lift_target, max_abs_diff, sigma_x};

    const WORKED_U: [f64; 3] = [0.307485, 0.346931, -2.78627];

    #[test]
    fn zero_costate_without_noise_is_identity() {
        let flow = GeodesicFlow::new(&NoiseParams::noiseless(), 200).unwrap();
        let traj = flow
            .trajectory(&GammaVector::ZERO, Penalty::Finite(10.0))
            .unwrap();
        assert!(traj
            .iter()
            .all(|u| (u.overlap(&BlockUnitary::IDENTITY) - 1.0).abs() < 1e-14));
    }

    #[test]
    fn single_axis_costate_is_rabi_rotation() {
        let c = 0.83;
        let l = GammaVector([c, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let flow = GeodesicFlow::new(&NoiseParams::noiseless(), 300).unwrap();
        let expected = crate::algebra::expm_hermitian(&lift_target(&sigma_x()), c);
        for pen in [
            Penalty::Finite(3.0),
            Penalty::Finite(2000.0),
            Penalty::SubRiemannian,
        ] {
            let u = flow.endpoint(&l, pen).unwrap();
            let d = max_abs_diff(&u.to_mat4(), &expected);
            assert!(d < 1e-10, "{pen:?}: {d}");
        }
        let sol = flow
            .solve(
                &l,
                Penalty::SubRiemannian,
                &Target::from_axis([c, 0.0, 0.0]),
            )
            .unwrap();
        assert!(sol.infidelity < 1e-12);
        assert!(sol.control.wx.iter().all(|w| (w - c).abs() < 1e-12));
        assert!(sol
            .control
            .wy
            .iter()
            .chain(&sol.control.wz)
            .all(|w| w.abs() < 1e-12));
    }

    #[test]
    fn block_matches_dense_integration() {
        let p = NoiseParams::default();
        let l = GammaVector([1.2, -0.4, 0.9, 2.0, -1.5, -4.0]);
        let flow = GeodesicFlow::new(&p, 400).unwrap();
        for pen in [Penalty::Finite(7.0), Penalty::SubRiemannian] {
            let fast = flow.endpoint(&l, pen).unwrap().to_mat4();
            let dense = dense_endpoint(&l, pen, &p, 400).unwrap();
            assert!(max_abs_diff(&fast, &dense) < 1e-9, "{pen:?}");
        }
    }

    #[test]
    fn costate_norm_is_conserved() {
        let p = NoiseParams::default();
        let l = GammaVector([1.2, -0.4, 0.9, 2.0, -1.5, -4.0]);
        let flow = GeodesicFlow::new(&p, 500).unwrap();
        for u in flow.trajectory(&l, Penalty::Finite(20.0)).unwrap() {
            assert!((u.conjugate(&l).norm() - l.norm()).abs() < 1e-8);
            assert!(u.unitarity_defect() < 1e-10);
        }
    }

    #[test]
    fn step_halving_barely_moves_endpoint() {
        let p = NoiseParams::default();
        let l = GammaVector([10.5288, 0.3828, 0.5578, 5.3081, -24.2970, -44.0307]);
        let t = Target::from_axis(WORKED_U);
        let a = GeodesicFlow::new(&p, 1000)
            .unwrap()
            .infidelity(&l, Penalty::SubRiemannian, &t)
            .unwrap();
        let b = GeodesicFlow::new(&p, 2000)
            .unwrap()
            .infidelity(&l, Penalty::SubRiemannian, &t)
            .unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn too_few_steps_rejected() {
        assert!(GeodesicFlow::new(&NoiseParams::default(), 50).is_err());
        let flow = GeodesicFlow::new(&NoiseParams::default(), 100).unwrap();
        assert!(matches!(
            flow.endpoint(&GammaVector::ZERO, Penalty::Finite(-1.0)),
            Err(Error::InvalidPenalty(_))
        ));
    }

    #[test]
    fn coarse_grid_with_huge_costate_reports_blowup() {
        let flow = GeodesicFlow::new(&NoiseParams::default(), 100).unwrap();
        let l = GammaVector([400.0, 0.0, 300.0, 0.0, 200.0, 0.0]);
        assert!(matches!(
            flow.endpoint(&l, Penalty::Finite(1.0)),
            Err(Error::UnitarityBlowup { .. })
        ));
    }

    #[test]
    fn initial_guess_shapes() {
        let p = NoiseParams::default();
        let h0 = h_of_t(0.0, &p);
        let g = initial_guess(&target_from_axis(WORKED_U), 10.0, &p).unwrap();
        for k in 0..3 {
            assert!((g[k] - WORKED_U[k]).abs() < 1e-9, "{g:?}");
        }
        assert_eq!((g[3], g[4]), (0.0, 0.0));
        assert!((g[5] - 10.0 * h0).abs() < 1e-12);
        let id = initial_guess(&Mat2::identity(), 10.0, &p).unwrap();
        assert!(id.delta_part().iter().all(|x| x.abs() < 1e-12));
        let quiet =
            initial_guess(&target_from_axis(WORKED_U), 10.0, &NoiseParams::noiseless()).unwrap();
        assert_eq!(quiet[5], 0.0);
        let axis = initial_guess_axis(&Target::from_axis(WORKED_U), 10.0, &p).unwrap();
        assert!((axis - g).norm() < 1e-9);
    }

    #[test]
    fn target_from_unitary_drops_phase() {
        let m = target_from_axis(WORKED_U) * C64::from_polar(1.0, 0.7);
        let t = Target::from_unitary(&m).unwrap();
        assert!(infidelity(&t.matrix(), &m) < 1e-12);
        assert!(crate::su2::dot3(&t.u, &t.u).sqrt() <= std::f64::consts::FRAC_PI_2 + 1e-12);
    }

    #[test]
    fn residual_vanishes_with_infidelity() {
        let t = Target::from_axis(WORKED_U);
        let exact = t.block();
        assert!(shooting_residual(&exact, &t).unwrap().norm() < 1e-12);
        let flipped = BlockUnitary {
            up: Su2 {
                w: -exact.up.w,
                v: scale3(&exact.up.v, -1.0),
            },
            down: Su2 {
                w: -exact.down.w,
                v: scale3(&exact.down.v, -1.0),
            },
        };
        assert!(shooting_residual(&flipped, &t).unwrap().norm() < 1e-12);
        let near = BlockUnitary {
            up: exact.up.mul(&Su2::exp_axis(&[1e-3, 0.0, 0.0])),
            down: exact.down,
        };
        assert!(shooting_residual(&near, &t).unwrap().norm() > 1e-4);
    }

    #[test]
    fn newton_converges_on_single_axis_target() {
        let flow = GeodesicFlow::new(&NoiseParams::noiseless(), 200).unwrap();
        let t = Target::from_axis([0.0, 0.9, 0.0]);
        let seed = GammaVector([0.05, 0.8, -0.05, 0.1, 0.0, 0.0]);
        let m = minimize_infidelity(&flow, &seed, &t, Penalty::Finite(10.0), 1e-4, 4000).unwrap();
        assert!(m.infidelity <= 1e-4);
        let s = shoot_newton(&flow, &m.costate, &t, Penalty::Finite(10.0), 10).unwrap();
        assert!(s.infidelity < 1e-5, "{}", s.infidelity);
    }

    #[test]
    fn homotopy_lands_on_the_seed_branch() {
        let flow = GeodesicFlow::new(&NoiseParams::default(), 200).unwrap();
        let a = Target::from_axis([0.6, 0.0, 0.3]);
        let rep = q_jump(
            &flow,
            &a,
            None,
            &JumpSchedule {
                q_in: 10.0,
                q_max: 500.0,
                n_it: 30,
            },
            &JumpOptions::default(),
        )
        .unwrap();
        let solved = shoot_newton(
            &flow,
            &rep.solution.costate0,
            &a,
            Penalty::SubRiemannian,
            12,
        )
        .unwrap();
        assert!(solved.infidelity < 1e-10, "{}", solved.infidelity);
        let b = Target::from_axis([0.62, 0.02, 0.3]);
        let s = shoot_homotopy(&flow, &solved.costate, &b, Penalty::SubRiemannian, 10).unwrap();
        assert!(s.infidelity < 1e-10, "{}", s.infidelity);
        assert!(
            (s.costate - solved.costate).norm() < 1.0,
            "{:?} vs {:?}",
            s.costate,
            solved.costate
        );
    }

    #[test]
    fn minimize_never_worse_and_exact_seed_unchanged() {
        let flow = GeodesicFlow::new(&NoiseParams::noiseless(), 200).unwrap();
        let t = Target::from_axis([0.7, 0.0, 0.0]);
        let seed = GammaVector([0.7, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let r = minimize_infidelity(&flow, &seed, &t, Penalty::Finite(10.0), 1e-10, 500).unwrap();
        assert!((r.costate - seed).norm() < 1e-10);
    }

    #[test]
    fn identity_without_noise_is_trivial() {
        let flow = GeodesicFlow::new(&NoiseParams::noiseless(), 200).unwrap();
        let sched = JumpSchedule {
            q_in: 10.0,
            q_max: 100.0,
            n_it: 5,
        };
        let rep = q_jump(
            &flow,
            &Target::from_axis([0.0; 3]),
            None,
            &sched,
            &JumpOptions::default(),
        )
        .unwrap();
        assert!(rep.history.iter().all(|h| h.infidelity == 0.0));
        assert!(rep.solution.infidelity < 1e-12);
        assert_eq!(rep.solution.energy(), 0.0);
    }

    #[test]
    fn schedule_is_increasing() {
        let s = JumpSchedule::default();
        assert!(s.factor() > 1.0);
        let seq = s.sequence();
        assert!(seq.windows(2).all(|w| w[1] > w[0]));
        assert!((seq.last().unwrap() - 2000.0).abs() < 1e-9);
        assert!(JumpSchedule {
            q_in: 10.0,
            q_max: 5.0,
            n_it: 3
        }
        .validate()
        .is_err());
    }

    #[test]
    fn document_round_trip() {
        let flow = GeodesicFlow::new(&NoiseParams::default(), 100).unwrap();
        let t = Target::from_axis(WORKED_U);
        let sol = flow
            .solve(
                &initial_guess_axis(&t, 10.0, flow.params()).unwrap(),
                Penalty::Finite(10.0),
                &t,
            )
            .unwrap();
        let doc = sol.to_document(10.0, flow.params());
        let s = serde_json::to_string(&doc).unwrap();
        assert_eq!(SolutionDocument::from_json(&s).unwrap(), doc);
        let mut bad = doc.clone();
        bad.control.wx.pop();
        assert!(SolutionDocument::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
    }

    #[test]
    fn dense_rejects_bad_penalty() {
        assert!(dense_endpoint(
            &GammaVector::ZERO,
            Penalty::Finite(0.0),
            &NoiseParams::default(),
            100
        )
        .is_err());
    }
}
