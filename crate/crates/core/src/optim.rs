//! Small dense local minimisers: BFGS with central-difference gradients and
//! a Nelder–Mead simplex used as fallback.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Stop as soon as the objective is at or below this value.
    pub f_target: f64,
    pub max_evals: usize,
    /// Improvements smaller than this count as stagnation.
    pub stagnation_delta: f64,
    /// Iterations without a meaningful improvement before giving up.
    pub stagnation_iters: usize,
    /// Central-difference step.
    pub fd_step: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            f_target: 0.0,
            max_evals: 4000,
            stagnation_delta: 1e-12,
            stagnation_iters: 50,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Target,
    MaxEvals,
    Stagnation,
    Converged,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub reason: StopReason,
}

struct Counted<F> {
    f: F,
    evals: usize,
    best_x: Vec<f64>,
    best_f: f64,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        let v = if v.is_finite() { v } else { f64::INFINITY };
        if v < self.best_f {
            self.best_f = v;
            self.best_x = x.to_vec();
        }
        v
    }
}

fn gradient<F: FnMut(&[f64]) -> f64>(obj: &mut Counted<F>, x: &[f64], h: f64) -> DVector<f64> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut xp = x.to_vec();
    for i in 0..n {
        let step = h * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let fp = obj.eval(&xp);
        xp[i] = x[i] - step;
        let fm = obj.eval(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    g
}

/// Quasi-Newton minimisation. Falls back to Nelder–Mead when the line
/// search cannot make progress. The returned point is never worse than `x0`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    opts: &MinimizeOptions,
) -> MinimizeResult {
    let n = x0.len();
    let mut obj = Counted {
        f,
        evals: 0,
        best_x: x0.to_vec(),
        best_f: f64::INFINITY,
    };
    let mut x = DVector::from_column_slice(x0);
    let mut fx = obj.eval(x0);
    if fx <= opts.f_target {
        return MinimizeResult {
            x: x0.to_vec(),
            f: fx,
            evals: obj.evals,
            reason: StopReason::Target,
        };
    }
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut g = gradient(&mut obj, x.as_slice(), opts.fd_step);
    let mut last_improvement = fx;
    let mut stale = 0usize;
    let mut reason = StopReason::MaxEvals;
    let mut use_simplex = false;

    while obj.evals < opts.max_evals {
        if g.norm() < 1e-14 {
            reason = StopReason::Converged;
            break;
        }
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        // Backtracking Armijo search.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = &x + &dir * step;
            let ft = obj.eval(trial.as_slice());
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            use_simplex = true;
            break;
        };
        let gn = gradient(&mut obj, xn.as_slice(), opts.fd_step);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let a = &eye - &s * y.transpose() * rho;
            let b = &eye - &y * s.transpose() * rho;
            hinv = &a * &hinv * &b + &s * s.transpose() * rho;
        }
        x = xn;
        fx = fnew;
        g = gn;
        if fx <= opts.f_target {
            reason = StopReason::Target;
            break;
        }
        if last_improvement - fx > opts.stagnation_delta {
            last_improvement = fx;
            stale = 0;
        } else {
            stale += 1;
            if stale >= opts.stagnation_iters {
                reason = StopReason::Stagnation;
                break;
            }
        }
    }

    if use_simplex && obj.evals < opts.max_evals {
        let start = obj.best_x.clone();
        let budget = opts.max_evals - obj.evals;
        reason = nelder_mead_inner(&mut obj, &start, budget, opts);
    }
    MinimizeResult {
        x: obj.best_x.clone(),
        f: obj.best_f,
        evals: obj.evals,
        reason,
    }
}

/// Standalone Nelder–Mead.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    opts: &MinimizeOptions,
) -> MinimizeResult {
    let mut obj = Counted {
        f,
        evals: 0,
        best_x: x0.to_vec(),
        best_f: f64::INFINITY,
    };
    let reason = nelder_mead_inner(&mut obj, x0, opts.max_evals, opts);
    MinimizeResult {
        x: obj.best_x.clone(),
        f: obj.best_f,
        evals: obj.evals,
        reason,
    }
}

fn nelder_mead_inner<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<F>,
    x0: &[f64],
    budget: usize,
    opts: &MinimizeOptions,
) -> StopReason {
    let n = x0.len();
    let limit = obj.evals + budget;
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = obj.eval(x0);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += 0.05 * x0[i].abs().max(0.1);
        let fp = obj.eval(&p);
        simplex.push((p, fp));
    }
    let mut last_best = f64::INFINITY;
    let mut stale = 0usize;
    while obj.evals < limit {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        if best <= opts.f_target {
            return StopReason::Target;
        }
        if last_best - best > opts.stagnation_delta {
            last_best = best;
            stale = 0;
        } else {
            stale += 1;
            if stale >= opts.stagnation_iters * (n + 1) {
                return StopReason::Stagnation;
            }
        }
        let mut centroid = vec![0.0; n];
        for (p, _) in simplex.iter().take(n) {
            for i in 0..n {
                centroid[i] += p[i] / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|i| centroid[i] + t * (worst.0[i] - centroid[i]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = obj.eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = obj.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(-0.5);
                let fc = obj.eval(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = obj.eval(&xc);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = (0..n)
                        .map(|i| x_best[i] + 0.5 * (item.0[i] - x_best[i]))
                        .collect();
                    let fp = obj.eval(&p);
                    *item = (p, fp);
                }
            }
        }
    }
    StopReason::MaxEvals
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (0..x.len() - 1)
            .map(|i| 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2))
            .sum()
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let opts = MinimizeOptions {
            max_evals: 20_000,
            ..Default::default()
        };
        let r = minimize(rosenbrock, &[-1.2, 1.0, -0.5, 0.8, 0.3, 1.1], &opts);
        assert!(r.f < 1e-8, "{:?}", r);
    }

    #[test]
    fn simplex_solves_quadratic() {
        let opts = MinimizeOptions {
            max_evals: 20_000,
            f_target: 1e-12,
            ..Default::default()
        };
        let r = nelder_mead(
            |x| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2))
                    .sum()
            },
            &[0.0; 6],
            &opts,
        );
        assert!(r.f < 1e-10, "{:?}", r);
    }

    #[test]
    fn never_worse_than_start() {
        let r = minimize(|x| (x[0] - 2.0).abs(), &[2.0], &MinimizeOptions::default());
        assert_eq!(r.x, vec![2.0]);
        assert_eq!(r.reason, StopReason::Target);
    }
}
