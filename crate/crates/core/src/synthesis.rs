//! Gate synthesis: penalty homotopy, seeded restarts of the q → ∞ problem,
//! and selection among exact geodesics by simulated protection.
//!
//! Exact sub-Riemannian solutions for a target come in discrete energy
//! levels. The purified model treats them all as perfectly protected, but
//! under the second-order master equation the lowest levels can fall short,
//! so when a [`Protection`] requirement is given the cheapest candidate that
//! meets it wins.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{target_from_axis, GammaVector, Mat2};
use crate::ampdamp::{conjugate_target, correction_operator, permute_fields};
use crate::error::{Error, Result};
use crate::field::ControlField;
use crate::geodesic::{
    q_jump, refine, shoot_newton, GeodesicFlow, GeodesicSolution, JumpOptions, JumpRecord,
    JumpSchedule, Penalty, Target,
};
use crate::noise::NoiseParams;
use crate::simulator::{
    avg_fidelity_t, fidelity_t, schrodinger_us, six_states, solve_jc_amplitude_damping,
    solve_master_dephasing, trivial_hamiltonian, DensityTrajectory,
};

/// The four library gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    Hadamard,
    X,
    T,
    Identity,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Hadamard, Gate::X, Gate::T, Gate::Identity];

    /// Axis-angle vector with `exp(−i u·σ)` equal to the gate up to phase.
    pub fn axis(&self) -> [f64; 3] {
        use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
        match self {
            Gate::Hadamard => [PI / (2.0 * SQRT_2), 0.0, PI / (2.0 * SQRT_2)],
            Gate::X => [FRAC_PI_2, 0.0, 0.0],
            // exp(−iπσ_z/8) ∝ diag(1, e^{iπ/4}).
            Gate::T => [0.0, 0.0, PI / 8.0],
            Gate::Identity => [0.0; 3],
        }
    }

    pub fn target(&self) -> Target {
        Target::from_axis(self.axis())
    }

    /// Conventional matrix form.
    pub fn matrix(&self) -> Mat2 {
        use crate::algebra::{identity2, sigma_x, sigma_z, C64};
        match self {
            Gate::Hadamard => (sigma_x() + sigma_z()) * C64::from(std::f64::consts::FRAC_1_SQRT_2),
            Gate::X => sigma_x(),
            Gate::T => Mat2::new(
                C64::from(1.0),
                C64::from(0.0),
                C64::from(0.0),
                C64::from_polar(1.0, std::f64::consts::FRAC_PI_4),
            ),
            Gate::Identity => identity2(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::Hadamard => "hadamard",
            Gate::X => "x",
            Gate::T => "t",
            Gate::Identity => "identity",
        }
    }
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "h" | "hadamard" => Ok(Gate::Hadamard),
            "x" => Ok(Gate::X),
            "t" => Ok(Gate::T),
            "i" | "id" | "identity" => Ok(Gate::Identity),
            other => Err(Error::InvalidArgument(format!(
                "unknown gate '{other}' (expected hadamard, x, t or identity)"
            ))),
        }
    }
}

/// Which bath a field has to withstand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    #[default]
    Dephasing,
    /// Jaynes–Cummings coupling after the rotating-wave approximation,
    /// handled through the cyclic axis map.
    Ampdamp,
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dephasing" => Ok(NoiseModel::Dephasing),
            "ampdamp" | "amplitude-damping" => Ok(NoiseModel::Ampdamp),
            other => Err(Error::InvalidArgument(format!(
                "unknown noise model '{other}' (expected dephasing or ampdamp)"
            ))),
        }
    }
}

/// Six-state fidelities at `t = τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtectionScore {
    pub average: f64,
    pub worst: f64,
}

/// Simulated protection requirement used to choose among candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protection {
    pub model: NoiseModel,
    /// Smallest acceptable worst-case six-state fidelity.
    pub min_fidelity: f64,
    /// Qubit gap for [`NoiseModel::Ampdamp`]; ignored otherwise.
    pub omega0: Option<f64>,
}

impl Protection {
    fn omega0(&self, p: &NoiseParams) -> f64 {
        self.omega0.unwrap_or(p.omega_c)
    }

    /// Field actually applied for a dephasing-optimal `control`.
    pub fn applied_field(&self, control: &ControlField, p: &NoiseParams) -> ControlField {
        match self.model {
            NoiseModel::Dephasing => control.clone(),
            NoiseModel::Ampdamp => permute_fields(control, self.omega0(p)),
        }
    }

    pub fn score(&self, control: &ControlField, p: &NoiseParams) -> Result<ProtectionScore> {
        let f = self.applied_field(control, p);
        let mut sum = 0.0;
        let mut worst = f64::INFINITY;
        for rho0 in six_states() {
            let traj = match self.model {
                NoiseModel::Dephasing => solve_master_dephasing(&f, p, &rho0)?,
                NoiseModel::Ampdamp => solve_jc_amplitude_damping(&f, p, self.omega0(p), &rho0)?,
            };
            let fid = *fidelity_t(&traj, &rho0)?.last().expect("non-empty");
            sum += fid;
            worst = worst.min(fid);
        }
        Ok(ProtectionScore {
            average: sum / 6.0,
            worst,
        })
    }
}

/// Dephasing problem whose solution protects `gate` under `model`.
pub fn design_target(u: [f64; 3], model: NoiseModel) -> Result<Target> {
    match model {
        NoiseModel::Dephasing => Ok(Target::from_axis(u)),
        NoiseModel::Ampdamp => Target::from_unitary(&conjugate_target(
            &target_from_axis(u),
            &correction_operator(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub grid_n: usize,
    pub schedule: JumpSchedule,
    pub jump: JumpOptions,
    /// Random sub-Riemannian restarts. Used when the homotopy misses the
    /// target or when a protection requirement is set.
    pub restarts: usize,
    /// Largest component magnitude of a restart costate.
    pub restart_scale: f64,
    pub seed: u64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            grid_n: crate::geodesic::DEFAULT_STEPS,
            schedule: JumpSchedule::default(),
            jump: JumpOptions::default(),
            restarts: 24,
            restart_scale: 16.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Homotopy,
    Restart,
}

/// An exact (within `final_tol`) q → ∞ solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub costate: GammaVector,
    pub infidelity: f64,
    pub energy: f64,
    pub origin: Origin,
    pub protection: Option<ProtectionScore>,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub solution: GeodesicSolution,
    pub q_reached: f64,
    pub history: Vec<JumpRecord>,
    /// Sorted by energy.
    pub candidates: Vec<Candidate>,
    pub protection: Option<ProtectionScore>,
    /// Geodesic infidelity within `final_tol`.
    pub converged: bool,
    /// Protection requirement met (true when none was asked for).
    pub protected: bool,
}

fn push_unique(cands: &mut Vec<Candidate>, c: Candidate) {
    if !cands
        .iter()
        .any(|o| (o.energy - c.energy).abs() <= 1e-3 * o.energy.max(1e-9))
    {
        cands.push(c);
    }
}

/// Random restarts of the q → ∞ problem, returning the exact solutions found.
pub fn restart_candidates(
    flow: &GeodesicFlow,
    target: &Target,
    opts: &SynthesisOptions,
) -> Vec<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::new();
    let tight = (opts.jump.final_tol * 1e-3).max(1e-9);
    for i in 0..opts.restarts {
        // Mixed scales reach different energy levels.
        let scale = opts.restart_scale / (1 << (i % 3)) as f64;
        let mut l = GammaVector::ZERO;
        for k in 0..6 {
            l[k] = scale * rng.random_range(-1.0..1.0);
        }
        let Ok(r) = refine(flow, &l, target, Penalty::SubRiemannian, tight, &opts.jump) else {
            continue;
        };
        let (costate, inf) = match shoot_newton(
            flow,
            &r.costate,
            target,
            Penalty::SubRiemannian,
            opts.jump.newton_iters,
        ) {
            Ok(s) if !s.diverged => (s.costate, s.infidelity),
            _ => (r.costate, r.infidelity),
        };
        if inf > opts.jump.final_tol {
            continue;
        }
        let Ok(sol) = flow.solve(&costate, Penalty::SubRiemannian, target) else {
            continue;
        };
        log::debug!(
            "restart {i}: energy {:.4}, infidelity {:.2e}",
            sol.energy(),
            inf
        );
        push_unique(
            &mut out,
            Candidate {
                costate,
                infidelity: inf,
                energy: sol.energy(),
                origin: Origin::Restart,
                protection: None,
            },
        );
    }
    out
}

/// Full pipeline for one target.
///
/// Without `protection` the homotopy result is returned as soon as it
/// converges. With it, all candidates are ranked by energy and simulated in
/// that order until one reaches `min_fidelity`; if none does, the best
/// protected one is returned with `protected = false`.
pub fn synthesize(
    target: &Target,
    p: &NoiseParams,
    seed: Option<GammaVector>,
    protection: Option<&Protection>,
    opts: &SynthesisOptions,
) -> Result<Synthesis> {
    p.validate()?;
    let flow = GeodesicFlow::new(p, opts.grid_n)?;
    let report = q_jump(&flow, target, seed, &opts.schedule, &opts.jump)?;
    log::info!(
        "homotopy reached q = {:.1}, final infidelity {:.3e}",
        report.q_reached,
        report.solution.infidelity
    );
    if protection.is_none() && report.converged {
        return Ok(Synthesis {
            candidates: vec![Candidate {
                costate: report.solution.costate0,
                infidelity: report.solution.infidelity,
                energy: report.solution.energy(),
                origin: Origin::Homotopy,
                protection: None,
            }],
            solution: report.solution,
            q_reached: report.q_reached,
            history: report.history,
            protection: None,
            converged: true,
            protected: true,
        });
    }

    let mut cands = Vec::new();
    if report.converged {
        let s = &report.solution;
        cands.push(Candidate {
            costate: s.costate0,
            infidelity: s.infidelity,
            energy: s.energy(),
            origin: Origin::Homotopy,
            protection: None,
        });
    }
    for c in restart_candidates(&flow, target, opts) {
        push_unique(&mut cands, c);
    }
    cands.sort_by(|a, b| a.energy.total_cmp(&b.energy));

    if cands.is_empty() {
        log::warn!("no exact solution found; returning the homotopy result");
        return Ok(Synthesis {
            solution: report.solution,
            q_reached: report.q_reached,
            history: report.history,
            candidates: cands,
            protection: None,
            converged: false,
            protected: false,
        });
    }

    let mut chosen = 0;
    let mut protected = protection.is_none();
    let mut score = None;
    if let Some(req) = protection {
        let mut best: Option<(usize, ProtectionScore)> = None;
        for (i, c) in cands.iter_mut().enumerate() {
            let sol = flow.solve(&c.costate, Penalty::SubRiemannian, target)?;
            let s = match req.score(&sol.control, p) {
                Ok(s) => s,
                Err(e) => {
                    log::debug!("candidate at energy {:.3} not simulated: {e}", c.energy);
                    continue;
                }
            };
            c.protection = Some(s);
            log::info!(
                "candidate energy {:.4}: worst fidelity {:.5}, average {:.5}",
                c.energy,
                s.worst,
                s.average
            );
            if best.map_or(true, |(_, b)| s.worst > b.worst) {
                best = Some((i, s));
            }
            if s.worst >= req.min_fidelity {
                best = Some((i, s));
                protected = true;
                break;
            }
        }
        if let Some((i, s)) = best {
            chosen = i;
            score = Some(s);
        }
    }

    let solution = flow.solve(&cands[chosen].costate, Penalty::SubRiemannian, target)?;
    Ok(Synthesis {
        solution,
        q_reached: report.q_reached,
        history: report.history,
        candidates: cands,
        protection: score,
        converged: true,
        protected,
    })
}

/// One simulated evolution of a gate comparison.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub label: &'static str,
    /// Field as applied to the qubit.
    pub field: ControlField,
    pub trajectory: DensityTrajectory,
    /// `Tr[ρ(0)ρ(t)]` for the chosen initial state.
    pub fidelity: Vec<f64>,
    /// Six-state average.
    pub avg_fidelity: Vec<f64>,
    /// Qubit gap added to `σ_z` in the generator (0 for dephasing).
    pub gap: f64,
}

impl Evolution {
    pub fn final_fidelity(&self) -> f64 {
        *self.fidelity.last().expect("non-empty")
    }

    pub fn final_avg_fidelity(&self) -> f64 {
        *self.avg_fidelity.last().expect("non-empty")
    }

    pub fn energy(&self) -> f64 {
        self.field.energy_cost()
    }

    /// The trajectory rotated out of the interaction picture.
    pub fn schrodinger(&self) -> Result<DensityTrajectory> {
        let mut h = self.field.clone();
        h.wz.iter_mut().for_each(|w| *w += self.gap);
        Ok(self.trajectory.to_schrodinger(&schrodinger_us(&h)?))
    }
}

/// Optimal, trivial and noise-only evolutions for a solved design target.
#[derive(Debug, Clone)]
pub struct Comparison {
    /// Gate actually implemented on the qubit.
    pub gate: Mat2,
    pub optimal: Evolution,
    pub trivial: Option<Evolution>,
    pub noise_only: Evolution,
}

impl Comparison {
    pub fn evolutions(&self) -> impl Iterator<Item = &Evolution> {
        std::iter::once(&self.optimal)
            .chain(self.trivial.as_ref())
            .chain(std::iter::once(&self.noise_only))
    }
}

/// Gate protected by a field designed for `design_u` under `model`.
pub fn implemented_gate(design_u: [f64; 3], model: NoiseModel) -> Mat2 {
    let u = target_from_axis(design_u);
    match model {
        NoiseModel::Dephasing => u,
        NoiseModel::Ampdamp => {
            let r = correction_operator();
            r * u * r.adjoint()
        }
    }
}

/// Runs the three evolutions. `control` is the dephasing-optimal field for
/// `design_u`; under [`NoiseModel::Ampdamp`] it is permuted first and the
/// baselines are expressed in the same frame (`H_eff = f + ω₀σ_z`).
pub fn compare_evolutions(
    control: &ControlField,
    design_u: [f64; 3],
    p: &NoiseParams,
    model: NoiseModel,
    omega0: Option<f64>,
    rho0: &Mat2,
    with_trivial: bool,
) -> Result<Comparison> {
    let req = Protection {
        model,
        min_fidelity: 0.0,
        omega0,
    };
    let w0 = omega0.unwrap_or(p.omega_c);
    let gate = implemented_gate(design_u, model);
    let n = control.steps();
    let tau = control.duration();
    let solve = |f: &ControlField, rho: &Mat2| -> Result<DensityTrajectory> {
        match model {
            NoiseModel::Dephasing => solve_master_dephasing(f, p, rho),
            NoiseModel::Ampdamp => solve_jc_amplitude_damping(f, p, w0, rho),
        }
    };
    let shift = |f: ControlField| -> ControlField {
        match model {
            NoiseModel::Dephasing => f,
            NoiseModel::Ampdamp => ControlField {
                wz: f.wz.iter().map(|w| w - w0).collect(),
                ..f
            },
        }
    };
    let run = |label: &'static str, field: ControlField| -> Result<Evolution> {
        let trajectory = solve(&field, rho0)?;
        let fidelity = fidelity_t(&trajectory, rho0)?;
        let avg_fidelity = avg_fidelity_t(|r| solve(&field, r))?;
        let gap = if model == NoiseModel::Ampdamp {
            w0
        } else {
            0.0
        };
        Ok(Evolution {
            label,
            field,
            trajectory,
            fidelity,
            avg_fidelity,
            gap,
        })
    };
    let optimal = run("optimal", req.applied_field(control, p))?;
    let trivial = if with_trivial {
        Some(run("trivial", shift(trivial_hamiltonian(&gate, n, tau)?))?)
    } else {
        None
    };
    let noise_only = run("noise-only", shift(ControlField::zeros(n, tau)))?;
    Ok(Comparison {
        gate,
        optimal,
        trivial,
        noise_only,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::infidelity;

    #[test]
    fn library_axes_reproduce_gates() {
        for g in Gate::ALL {
            let u = target_from_axis(g.axis());
            assert!(infidelity(&u, &g.matrix()) < 1e-12, "{g:?}");
            assert_eq!(g.name().parse::<Gate>().unwrap(), g);
        }
        assert!("cnot".parse::<Gate>().is_err());
    }

    #[test]
    fn ampdamp_design_target_is_conjugated() {
        let t = design_target(Gate::X.axis(), NoiseModel::Ampdamp).unwrap();
        // U_cor† X U_cor = Z.
        assert!(infidelity(&t.matrix(), &crate::algebra::sigma_z()) < 1e-12);
        let id = design_target([0.0; 3], NoiseModel::Ampdamp).unwrap();
        assert!(id.u.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn noiseless_identity_needs_no_field() {
        let opts = SynthesisOptions {
            schedule: JumpSchedule {
                q_in: 10.0,
                q_max: 100.0,
                n_it: 5,
            },
            grid_n: 200,
            ..Default::default()
        };
        let s = synthesize(
            &Gate::Identity.target(),
            &NoiseParams::noiseless(),
            None,
            None,
            &opts,
        )
        .unwrap();
        assert!(s.converged && s.protected);
        assert!(s.solution.infidelity < 1e-10);
        assert!(s.solution.energy() < 1e-20);
    }

    #[test]
    fn noiseless_protection_is_perfect() {
        let opts = SynthesisOptions {
            schedule: JumpSchedule {
                q_in: 10.0,
                q_max: 100.0,
                n_it: 5,
            },
            grid_n: 200,
            ..Default::default()
        };
        let req = Protection {
            model: NoiseModel::Dephasing,
            min_fidelity: 0.999,
            omega0: None,
        };
        let s = synthesize(
            &Gate::X.target(),
            &NoiseParams::noiseless(),
            None,
            Some(&req),
            &opts,
        )
        .unwrap();
        assert!(s.protected);
        let score = s.protection.unwrap();
        assert!((score.worst - 1.0).abs() < 1e-9);
        // Cheapest exact X rotation: constant π/2 field, energy π²/8.
        assert!(
            (s.solution.energy() - std::f64::consts::PI.powi(2) / 8.0).abs() < 1e-6,
            "{}",
            s.solution.energy()
        );
    }

    #[test]
    fn t_gate_trivial_equals_noise_only() {
        let p = NoiseParams::default();
        let zero = ControlField::zeros(300, 1.0);
        let c = compare_evolutions(
            &zero,
            Gate::T.axis(),
            &p,
            NoiseModel::Dephasing,
            None,
            &crate::simulator::plus_state(),
            true,
        )
        .unwrap();
        let triv = c.trivial.as_ref().unwrap();
        assert!(triv.trajectory.max_trace_distance(&c.noise_only.trajectory) < 1e-12);
        assert!(triv.energy() > 0.0);
    }

    #[test]
    fn ampdamp_gate_is_recovered() {
        let g = implemented_gate(
            design_target(Gate::Hadamard.axis(), NoiseModel::Ampdamp)
                .unwrap()
                .u,
            NoiseModel::Ampdamp,
        );
        assert!(infidelity(&g, &Gate::Hadamard.matrix()) < 1e-12);
    }

    #[test]
    fn schrodinger_export_applies_the_gate() {
        let p = NoiseParams::noiseless();
        let rho0 = crate::simulator::pure_state(
            crate::algebra::C64::from(1.0),
            crate::algebra::C64::from(0.0),
        );
        for model in [NoiseModel::Dephasing, NoiseModel::Ampdamp] {
            let design = design_target(Gate::X.axis(), model).unwrap();
            let zero = ControlField::zeros(400, 1.0);
            let c = compare_evolutions(&zero, design.u, &p, model, Some(0.7), &rho0, true).unwrap();
            let last = *c.trivial.as_ref().unwrap().schrodinger().unwrap().last();
            let ideal = Gate::X.matrix() * rho0 * Gate::X.matrix().adjoint();
            assert!(
                crate::simulator::trace_distance(&last, &ideal) < 1e-9,
                "{model:?}"
            );
        }
    }
}
