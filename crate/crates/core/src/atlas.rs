//! Lowest-energy costate field over all single-qubit targets.
//!
//! Dephasing is invariant under rotations about z, so a target rotated by φ
//! about z has the costate with both transverse pairs (λ₁, λ₂) and (λ₄, λ₅)
//! rotated by φ. Together with `u ≡ (π − θ)(−û)` this reduces every target
//! to the half-disk `u_y = 0, u_x ≥ 0, |u| ≤ π/2`. A polar grid on the
//! half-disk is flood-filled from a few homotopy anchors by Newton
//! continuation, and each node keeps the cheapest costate any anchor's
//! family reached.
//!
//! Costates are not unique, and independent homotopy solves of nearby
//! targets often land on unrelated branches. Sampling one continuous field
//! instead gives the surrogate a learnable map.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::algebra::GammaVector;
use crate::error::{Error, Result};
use crate::geodesic::{shoot_newton, GeodesicFlow, Penalty, Target};
use crate::synthesis::{synthesize, SynthesisOptions};

/// Infidelity every continuation step must reach.
const STEP_TOL: f64 = 1e-8;
const NEWTON_ITERS: usize = 12;
/// Nearest nodes tried before giving up on a target.
const TRIES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtlasConfig {
    /// Rays in the polar angle ψ ∈ [0, π] from +z.
    pub rays: usize,
    /// Shells in θ ∈ (0, π/2].
    pub shells: usize,
    /// Largest continuation step in `|Δu|`; halved on failure.
    pub step: f64,
    /// Anchor nodes as (θ/(π/2), ψ/π) fractions.
    pub anchors: Vec<[f64; 2]>,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self {
            rays: 33,
            shells: 32,
            step: 0.05,
            anchors: vec![
                [1.0 / 16.0, 0.5],
                [1.0, 0.5],
                [1.0, 0.25],
                [1.0, 0.75],
                [0.625, 0.25],
                [0.625, 0.75],
            ],
        }
    }
}

impl AtlasConfig {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = self
            .anchors
            .iter()
            .all(|a| a.iter().all(|f| (0.0..=1.0).contains(f)));
        if self.rays < 2
            || self.shells < 1
            || !(self.step > 0.0)
            || self.anchors.is_empty()
            || !frac_ok
        {
            return Err(Error::InvalidArgument(format!("bad atlas config {self:?}")));
        }
        Ok(())
    }
}

/// Reduced form of a target: the equivalent representative with `|u| ≤ π/2`
/// rotated about z onto `u_y = 0, u_x ≥ 0`, and the rotation angle undoing it.
pub fn canonicalize(u: [f64; 3]) -> ([f64; 3], f64) {
    let th = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let v = if th > FRAC_PI_2 {
        u.map(|x| -x * (PI - th) / th)
    } else {
        u
    };
    ([v[0].hypot(v[1]), 0.0, v[2]], v[1].atan2(v[0]))
}

/// Rotates the transverse costate pairs by `phi` about z.
pub fn rotate_costate(l: &GammaVector, phi: f64) -> GammaVector {
    let (s, c) = phi.sin_cos();
    let l = l.0;
    GammaVector([
        c * l[0] - s * l[1],
        s * l[0] + c * l[1],
        l[2],
        c * l[3] - s * l[4],
        s * l[3] + c * l[4],
        l[5],
    ])
}

/// Natural-parameter continuation of an exact costate from target `from` to
/// `to` along the straight segment, with adaptive steps.
pub fn continue_costate(
    flow: &GeodesicFlow,
    from: [f64; 3],
    costate: &GammaVector,
    to: [f64; 3],
    step: f64,
) -> Option<GammaVector> {
    let dist = (0..3)
        .map(|i| (to[i] - from[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut lam = *costate;
    if dist == 0.0 {
        return Some(lam);
    }
    let (mut s, mut h) = (0.0, step);
    while s < 1.0 {
        let next = (s + h / dist).min(1.0);
        let u = std::array::from_fn(|i| from[i] + next * (to[i] - from[i]));
        match shoot_newton(
            flow,
            &lam,
            &Target::from_axis(u),
            Penalty::SubRiemannian,
            NEWTON_ITERS,
        ) {
            Ok(o) if o.infidelity < STEP_TOL => {
                lam = o.costate;
                s = next;
                h = (1.5 * h).min(step);
            }
            _ => {
                h *= 0.5;
                if h < step / 64.0 {
                    return None;
                }
            }
        }
    }
    Some(lam)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AtlasNode {
    pub costate: GammaVector,
    pub energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostateAtlas {
    pub config: AtlasConfig,
    /// Node 0 is the identity; then shell-major, ray-minor.
    pub nodes: Vec<Option<AtlasNode>>,
}

impl CostateAtlas {
    fn index(&self, shell: usize, ray: usize) -> usize {
        if shell == 0 {
            0
        } else {
            1 + (shell - 1) * self.config.rays + ray
        }
    }

    fn shell_ray(&self, i: usize) -> (usize, usize) {
        if i == 0 {
            (0, 0)
        } else {
            (1 + (i - 1) / self.config.rays, (i - 1) % self.config.rays)
        }
    }

    /// Canonical target at node `i`.
    pub fn node_target(&self, i: usize) -> [f64; 3] {
        let (j, k) = self.shell_ray(i);
        let th = FRAC_PI_2 * j as f64 / self.config.shells as f64;
        let psi = PI * k as f64 / (self.config.rays - 1) as f64;
        [th * psi.sin(), 0.0, th * psi.cos()]
    }

    fn neighbours(&self, i: usize) -> Vec<usize> {
        let rays = self.config.rays;
        if i == 0 {
            return (0..rays).map(|k| self.index(1, k)).collect();
        }
        let (j, k) = self.shell_ray(i);
        let mut v = vec![self.index(j - 1, k)];
        if j < self.config.shells {
            v.push(self.index(j + 1, k));
        }
        if k > 0 {
            v.push(self.index(j, k - 1));
        }
        if k + 1 < rays {
            v.push(self.index(j, k + 1));
        }
        v
    }

    /// Solves each anchor by homotopy, floods the grid from it, and keeps
    /// the lowest energy per node. Anchors the homotopy misses are skipped.
    pub fn build(
        flow: &GeodesicFlow,
        opts: &SynthesisOptions,
        config: &AtlasConfig,
    ) -> Result<Self> {
        config.validate()?;
        let n = 1 + config.shells * config.rays;
        let mut atlas = Self {
            config: config.clone(),
            nodes: vec![None; n],
        };
        let mut used = 0;
        for a in &config.anchors {
            let shell = (a[0] * config.shells as f64).round() as usize;
            let ray = (a[1] * (config.rays - 1) as f64).round() as usize;
            let start = atlas.index(shell, ray);
            let u = atlas.node_target(start);
            let s = synthesize(&Target::from_axis(u), flow.params(), None, None, opts)?;
            let polished = shoot_newton(
                flow,
                &s.solution.costate0,
                &Target::from_axis(u),
                Penalty::SubRiemannian,
                2 * NEWTON_ITERS,
            )?;
            if polished.infidelity >= STEP_TOL {
                log::info!(
                    "atlas anchor {u:?} skipped at infidelity {:.1e}",
                    polished.infidelity
                );
                continue;
            }
            used += 1;
            let family = atlas.flood(flow, start, polished.costate);
            let mut improved = 0;
            for (i, lam) in family.iter().enumerate() {
                let Some(lam) = lam else { continue };
                let energy = flow
                    .solve(
                        lam,
                        Penalty::SubRiemannian,
                        &Target::from_axis(atlas.node_target(i)),
                    )?
                    .energy();
                if atlas.nodes[i].is_none_or(|b| energy < b.energy - 1e-9) {
                    atlas.nodes[i] = Some(AtlasNode {
                        costate: *lam,
                        energy,
                    });
                    improved += 1;
                }
            }
            log::info!(
                "atlas anchor {u:?}: energy {:.3}, lowest at {improved} nodes",
                s.solution.energy()
            );
        }
        if used == 0 {
            return Err(Error::Numerical("no atlas anchor converged".into()));
        }
        Ok(atlas)
    }

    fn flood(
        &self,
        flow: &GeodesicFlow,
        start: usize,
        costate: GammaVector,
    ) -> Vec<Option<GammaVector>> {
        let mut family = vec![None; self.nodes.len()];
        family[start] = Some(costate);
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let from = family[i].expect("queued nodes are solved");
            for nb in self.neighbours(i) {
                if family[nb].is_some() {
                    continue;
                }
                if let Some(l) = continue_costate(
                    flow,
                    self.node_target(i),
                    &from,
                    self.node_target(nb),
                    self.config.step,
                ) {
                    family[nb] = Some(l);
                    queue.push_back(nb);
                }
            }
        }
        family
    }

    pub fn coverage(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_some()).count()
    }

    /// Costate for an arbitrary target by continuation from the nearest
    /// solved nodes. `None` when every attempt stalls.
    pub fn solve(&self, flow: &GeodesicFlow, u: [f64; 3]) -> Option<GammaVector> {
        let (uc, phi) = canonicalize(u);
        let mut near: Vec<(f64, usize)> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_some())
            .map(|i| {
                let w = self.node_target(i);
                ((w[0] - uc[0]).powi(2) + (w[2] - uc[2]).powi(2), i)
            })
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        near.iter().take(TRIES).find_map(|&(_, i)| {
            let node = self.nodes[i].expect("filtered");
            continue_costate(
                flow,
                self.node_target(i),
                &node.costate,
                uc,
                self.config.step,
            )
            .map(|l| rotate_costate(&l, phi))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{infidelity, target_from_axis};
    use crate::noise::NoiseParams;

    #[test]
    fn canonical_form_names_the_same_gate() {
        for u in [
            [0.3, -0.4, 0.2],
            [-1.0, 2.0, 1.5],
            [0.0, 0.0, -2.9],
            [1e-3, 0.0, 0.0],
        ] {
            let (c, phi) = canonicalize(u);
            assert!(c[1] == 0.0 && c[0] >= 0.0);
            assert!((c[0] * c[0] + c[2] * c[2]).sqrt() <= FRAC_PI_2 + 1e-12);
            let back = [c[0] * phi.cos(), c[0] * phi.sin(), c[2]];
            assert!(infidelity(&target_from_axis(back), &target_from_axis(u)) < 1e-12);
        }
    }

    #[test]
    fn rotated_costates_solve_rotated_targets() {
        let flow = GeodesicFlow::new(&NoiseParams::default(), 400).unwrap();
        let u = [0.7, 0.0, 0.4];
        let s = synthesize(
            &Target::from_axis(u),
            flow.params(),
            None,
            None,
            &SynthesisOptions {
                grid_n: 400,
                restarts: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let base = flow
            .infidelity(
                &s.solution.costate0,
                Penalty::SubRiemannian,
                &Target::from_axis(u),
            )
            .unwrap();
        for phi in [0.4, 2.0, -2.8] {
            let (sn, cs) = f64::sin_cos(phi);
            let ur = [cs * u[0], sn * u[0], u[2]];
            let l = rotate_costate(&s.solution.costate0, phi);
            let inf = flow
                .infidelity(&l, Penalty::SubRiemannian, &Target::from_axis(ur))
                .unwrap();
            assert!((inf - base).abs() < 1e-9, "{phi}: {inf} vs {base}");
        }
    }

    #[test]
    fn continuation_tracks_a_branch() {
        let flow = GeodesicFlow::new(&NoiseParams::default(), 400).unwrap();
        let from = [0.5, 0.0, 0.3];
        let opts = SynthesisOptions {
            grid_n: 400,
            restarts: 0,
            ..Default::default()
        };
        let s = synthesize(&Target::from_axis(from), flow.params(), None, None, &opts).unwrap();
        let to = [0.6, 0.0, 0.25];
        let l =
            continue_costate(&flow, from, &s.solution.costate0, to, 0.05).expect("short segment");
        assert!(
            flow.infidelity(&l, Penalty::SubRiemannian, &Target::from_axis(to))
                .unwrap()
                < STEP_TOL
        );
    }
}
