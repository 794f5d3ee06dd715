//! Dense BFGS with backtracking line search, extended with orthant-wise
//! steps for coordinates carrying an L1 weight.
//!
//! With all weights zero this is plain BFGS. With positive weights it
//! minimizes `f(x) + sum w_i |x_i|` the orthant-wise way: a pseudo-gradient
//! replaces the gradient, search directions are sign-aligned with it, and
//! trial points are projected back onto the current orthant so that weighted
//! coordinates reach exact zeros.

use nalgebra::{DMatrix, DVector};

/// Smooth part of the problem.
pub(crate) trait Smooth {
    /// Objective value, or the size of the admissibility violation.
    fn value(&self, x: &[f64]) -> Result<f64, f64>;
    fn value_gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone)]
pub(crate) struct Settings {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Objective charged at an inadmissible trial point is
    /// `f(current) + barrier_scale * violation`.
    pub barrier_scale: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const MAX_TRIAL_STEP: f64 = 1.0;

fn pseudo_gradient(x: &[f64], g: &[f64], w: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(w)
        .map(|((&xi, &gi), &wi)| {
            if wi == 0.0 {
                gi
            } else if xi > 0.0 {
                gi + wi
            } else if xi < 0.0 {
                gi - wi
            } else if gi + wi < 0.0 {
                gi + wi
            } else if gi - wi > 0.0 {
                gi - wi
            } else {
                0.0
            }
        })
        .collect()
}

fn l1(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a.abs() * b).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn minimize<P: Smooth>(
    problem: &P,
    x0: Vec<f64>,
    weights: &[f64],
    settings: &Settings,
) -> Option<Outcome> {
    let n = x0.len();
    let (mut f, mut g) = problem.value_gradient(&x0)?;
    let mut x = x0;
    let mut pg = pseudo_gradient(&x, &g, weights);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        let pg_norm = inf_norm(&pg);
        if pg_norm <= settings.gradient_tolerance {
            return Some(Outcome {
                x,
                gradient_norm: pg_norm,
                iterations,
                converged: true,
            });
        }
        iterations += 1;

        let pgv = DVector::from_column_slice(&pg);
        let mut d: Vec<f64> = (-(&h * &pgv)).iter().copied().collect();
        for ((di, &pi), &wi) in d.iter_mut().zip(&pg).zip(weights) {
            // keep weighted coordinates moving against the pseudo-gradient
            if wi > 0.0 && *di * pi >= 0.0 {
                *di = 0.0;
            }
        }
        let mut slope: f64 = d.iter().zip(&pg).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            h.fill_with_identity();
            fresh = true;
            d = pg.iter().map(|v| -v).collect();
            slope = -pg.iter().map(|v| v * v).sum::<f64>();
        }

        let orthant: Vec<f64> = x
            .iter()
            .zip(&pg)
            .map(|(&xi, &pi)| if xi != 0.0 { xi.signum() } else { -pi.signum() })
            .collect();
        let total = f + l1(&x, weights);

        let d_norm = inf_norm(&d);
        let mut step = if fresh {
            (0.1 / d_norm).min(1.0)
        } else {
            (MAX_TRIAL_STEP / d_norm).min(1.0)
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x
                .iter()
                .zip(&d)
                .zip(weights)
                .zip(&orthant)
                .map(|(((&xi, &di), &wi), &oi)| {
                    let v = xi + step * di;
                    if wi > 0.0 && v * oi <= 0.0 {
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            let decrease: f64 = trial
                .iter()
                .zip(&x)
                .zip(&pg)
                .map(|((t, xi), p)| (t - xi) * p)
                .sum();
            let total_t = match problem.value(&trial) {
                Ok(ft) if ft.is_finite() => ft + l1(&trial, weights),
                Ok(_) => total + settings.barrier_scale,
                Err(violation) => total + settings.barrier_scale * violation.max(1e-8),
            };
            if total_t <= total + ARMIJO * decrease {
                accepted = Some(trial);
                break;
            }
            let denom = 2.0 * (total_t - total - step * slope);
            let interp = if denom > 0.0 {
                -slope * step * step / denom
            } else {
                0.5 * step
            };
            step = interp.clamp(0.1 * step, 0.5 * step);
        }

        let Some(x_new) = accepted else {
            if fresh {
                return Some(Outcome {
                    x,
                    gradient_norm: pg_norm,
                    iterations,
                    converged: false,
                });
            }
            h.fill_with_identity();
            fresh = true;
            continue;
        };

        let Some((f_new, g_new)) = problem.value_gradient(&x_new) else {
            h.fill_with_identity();
            fresh = true;
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        if sy > 1e-12 * (ss * yy).sqrt() && sy > 0.0 {
            if fresh {
                h.fill_with_identity();
                h *= sy / yy;
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        }

        let stalled = f_new >= f && inf_norm(&s) < 1e-14 * inf_norm(&x).max(1.0);
        let was_fresh = fresh;
        x = x_new;
        f = f_new;
        g = g_new;
        pg = pseudo_gradient(&x, &g, weights);
        if stalled {
            if was_fresh {
                break;
            }
            h.fill_with_identity();
            fresh = true;
        }
    }

    let gradient_norm = inf_norm(&pg);
    Some(Outcome {
        x,
        gradient_norm,
        iterations,
        converged: gradient_norm <= settings.gradient_tolerance,
    })
}

/// `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update(h: &mut DMatrix<f64>, s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let yv = DVector::from_column_slice(y);
    let hy = &*h * &yv;
    let yhy = yv.dot(&hy);
    let coef = rho * rho * yhy + rho;
    for j in 0..n {
        for i in 0..n {
            h[(i, j)] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Smooth for Rosenbrock {
        fn value(&self, x: &[f64]) -> Result<f64, f64> {
            Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        }
        fn value_gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
            let g0 = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            let g1 = 200.0 * (x[1] - x[0] * x[0]);
            Some((self.value(x).ok()?, vec![g0, g1]))
        }
    }

    /// Quadratic `0.5 |x - c|^2` defined only for `x[0] > -0.5`.
    struct Fenced(Vec<f64>);

    impl Smooth for Fenced {
        fn value(&self, x: &[f64]) -> Result<f64, f64> {
            if x[0] > -0.5 {
                Ok(0.5 * x.iter().zip(&self.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            } else {
                Err(-0.5 - x[0])
            }
        }
        fn value_gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
            let g = x.iter().zip(&self.0).map(|(a, b)| a - b).collect();
            Some((self.value(x).ok()?, g))
        }
    }

    fn settings() -> Settings {
        Settings {
            max_iterations: 5000,
            gradient_tolerance: 1e-8,
            barrier_scale: 1e3,
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let out = minimize(&Rosenbrock, vec![-1.2, 1.0], &[0.0, 0.0], &settings()).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lasso_soft_thresholds_exactly() {
        // argmin 0.5 (x - c)^2 + w |x| = sign(c) max(|c| - w, 0)
        let c = vec![0.3, -0.05, 2.0, -1.0];
        let w = vec![0.1, 0.1, 0.0, 0.1];
        let out = minimize(&Fenced(c), vec![0.0; 4], &w, &settings()).unwrap();
        assert!(out.converged);
        let expected = [0.2, 0.0, 2.0, -0.9];
        for (a, b) in out.x.iter().zip(expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert_eq!(out.x[1], 0.0);
    }

    #[test]
    fn retreats_from_inadmissible_region() {
        let out = minimize(&Fenced(vec![-3.0, 1.0]), vec![0.0, 0.0], &[0.0, 0.0], &settings()).unwrap();
        assert!(out.x[0] > -0.5);
        assert!(!out.converged || out.x[0] > -0.5);
    }
}
