//! Nonlinear conjugate gradient (Polak–Ribière+) with Armijo backtracking.
//!
//! The driver works on the objective and gradient normalized by their values
//! at the start of a stage (J/J₀ and g/‖g₀‖), so the first trial step of 1 is
//! well-scaled regardless of the physical units of the misfit. Model updates
//! are clamped to configured bounds. A failed line search rejects the step
//! and restarts from steepest descent.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearchConfig {
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Multiplicative backtracking factor in (0, 1).
    pub shrink: f64,
    pub max_backtracks: usize,
    /// First trial step on the normalized problem.
    pub initial_step: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 20,
            initial_step: 1.0,
        }
    }
}

/// Optimizer memory carried across iterations within one stage.
#[derive(Debug, Clone, Default)]
pub struct NcgMemory {
    prev_grad: Option<Vec<f64>>,
    prev_dir: Option<Vec<f64>>,
    last_step: Option<f64>,
}

impl NcgMemory {
    /// Forget previous gradient/direction (stage boundary).
    pub fn reset(&mut self) {
        *self = NcgMemory::default();
    }
}

/// PR+ coefficient β = max(0, ⟨g, g−g_prev⟩ / ⟨g_prev, g_prev⟩).
pub fn pr_plus_beta(grad: &[f64], prev_grad: &[f64]) -> f64 {
    let num: f64 = grad
        .iter()
        .zip(prev_grad)
        .map(|(g, gp)| g * (g - gp))
        .sum();
    let den: f64 = prev_grad.iter().map(|g| g * g).sum();
    if den > 0.0 {
        (num / den).max(0.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub step: f64,
    pub objective: f64,
    /// Step fell back to steepest descent after a failed conjugate step.
    pub reset_to_steepest: bool,
    pub evaluations: usize,
}

/// One NCG iteration on the normalized problem.
///
/// `x` is updated in place when a step is accepted. `objective` and `grad`
/// are the raw values at `x`; `j0`/`g0` are the stage normalizers;
/// `eval` returns the raw objective at a trial point; `clamp` projects a
/// trial model onto bounds.
#[allow(clippy::too_many_arguments)]
pub fn ncg_step(
    x: &mut Vec<f64>,
    objective: f64,
    grad: &[f64],
    j0: f64,
    g0: f64,
    memory: &mut NcgMemory,
    cfg: &LineSearchConfig,
    mut eval: impl FnMut(&[f64]) -> f64,
    clamp: impl Fn(&mut Vec<f64>),
) -> StepOutcome {
    let n = x.len();
    let gn: Vec<f64> = grad.iter().map(|g| g / g0).collect();
    let j_now = objective / j0;

    let beta = match &memory.prev_grad {
        Some(pg) => pr_plus_beta(&gn, pg),
        None => 0.0,
    };
    let mut dir: Vec<f64> = match (&memory.prev_dir, beta > 0.0) {
        (Some(pd), true) => (0..n).map(|i| -gn[i] + beta * pd[i]).collect(),
        _ => gn.iter().map(|g| -g).collect(),
    };

    let mut evaluations = 0;
    let mut reset = false;
    loop {
        // directional derivative of the normalized objective J/J₀ along dir
        // (the direction itself is scaled by 1/g₀; the two normalizers differ)
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum::<f64>() / j0;
        if slope >= 0.0 {
            if reset {
                // steepest descent is non-descent only at a stationary point
                memory.reset();
                return StepOutcome {
                    accepted: false,
                    step: 0.0,
                    objective,
                    reset_to_steepest: true,
                    evaluations,
                };
            }
            dir = gn.iter().map(|g| -g).collect();
            reset = true;
            continue;
        }

        let mut alpha = match memory.last_step {
            Some(s) => (2.0 * s).min(cfg.initial_step),
            None => cfg.initial_step,
        };
        let mut probe = |alpha: f64, evaluations: &mut usize| -> (Vec<f64>, f64) {
            let mut trial: Vec<f64> = (0..n).map(|i| x[i] + alpha * dir[i]).collect();
            clamp(&mut trial);
            let j_trial = eval(&trial) / j0;
            *evaluations += 1;
            (trial, j_trial)
        };
        // minimizer of the parabola through (0, j_now) with slope `slope`
        // and the point (a, ja); exact for quadratic objectives
        let interp = |a: f64, ja: f64| -> Option<f64> {
            let denom = ja - j_now - slope * a;
            if denom > 0.0 {
                Some(-0.5 * slope * a * a / denom)
            } else {
                None
            }
        };
        let mut accepted: Option<(Vec<f64>, f64, f64)> = None;
        for bt in 0..cfg.max_backtracks {
            let (trial, j_trial) = probe(alpha, &mut evaluations);
            if j_trial.is_finite() && j_trial <= j_now + cfg.c1 * alpha * slope {
                accepted = Some((trial, j_trial, alpha));
                // one interpolation refinement on a first-try success
                if bt == 0 {
                    if let Some(aq) = interp(alpha, j_trial) {
                        let aq = aq.clamp(0.05 * alpha, 10.0 * alpha);
                        if (aq / alpha - 1.0).abs() > 1e-9 {
                            let (t2, j2) = probe(aq, &mut evaluations);
                            if j2.is_finite()
                                && j2 < j_trial
                                && j2 <= j_now + cfg.c1 * aq * slope
                            {
                                accepted = Some((t2, j2, aq));
                            }
                        }
                    }
                }
                break;
            }
            // failed trial: next step from the parabola, clamped to a
            // conventional backtracking window
            alpha = match interp(alpha, j_trial) {
                Some(aq) if j_trial.is_finite() => {
                    aq.clamp(0.1 * alpha, cfg.shrink * alpha)
                }
                _ => cfg.shrink * alpha,
            };
        }
        if let Some((trial, j_trial, a)) = accepted {
            *x = trial;
            memory.prev_grad = Some(gn);
            memory.prev_dir = Some(dir);
            memory.last_step = Some(a);
            return StepOutcome {
                accepted: true,
                step: a,
                objective: j_trial * j0,
                reset_to_steepest: reset,
                evaluations,
            };
        }
        if reset {
            memory.reset();
            return StepOutcome {
                accepted: false,
                step: 0.0,
                objective,
                reset_to_steepest: true,
                evaluations,
            };
        }
        // conjugate direction exhausted the backtracks: retry steepest
        dir = gn.iter().map(|g| -g).collect();
        memory.last_step = None;
        reset = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pr_plus_zero_when_gradient_unchanged() {
        let g = vec![0.4, -0.3];
        assert_eq!(pr_plus_beta(&g, &g), 0.0);
    }

    #[test]
    fn pr_plus_clips_negative() {
        // g opposite to prev makes the numerator strongly positive; flip sign
        let g = vec![1.0, 0.0];
        let gp = vec![3.0, 0.0];
        // num = 1*(1-3) = -2 -> clipped
        assert_eq!(pr_plus_beta(&g, &gp), 0.0);
    }

    #[test]
    fn first_trial_is_unit_step_along_normalized_steepest_descent() {
        let x0 = vec![3.0, -4.0];
        let g = x0.clone();
        let g0 = (g.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let j0 = 0.5 * g0 * g0;
        let mut x = x0.clone();
        let mut mem = NcgMemory::default();
        let trials = std::cell::RefCell::new(Vec::new());
        let out = ncg_step(
            &mut x,
            j0,
            &g,
            j0,
            g0,
            &mut mem,
            &LineSearchConfig::default(),
            |t| {
                trials.borrow_mut().push(t.to_vec());
                0.5 * t.iter().map(|v| v * v).sum::<f64>()
            },
            |_| {},
        );
        assert!(out.accepted);
        let first = &trials.borrow()[0];
        for i in 0..2 {
            assert!((first[i] - (x0[i] - g[i] / g0)).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_two_vars_converges_fast() {
        // f(x) = 0.5 (4 x0^2 + x1^2) - (x0 + 2 x1)
        let f = |x: &[f64]| 0.5 * (4.0 * x[0] * x[0] + x[1] * x[1]) - x[0] - 2.0 * x[1];
        let grad = |x: &[f64]| vec![4.0 * x[0] - 1.0, x[1] - 2.0];
        let minimizer = [0.25, 2.0];

        let mut x = vec![0.0, 0.0];
        let g_init = grad(&x);
        let g0 = g_init.iter().map(|v| v * v).sum::<f64>().sqrt();
        let j0 = (f(&x) - f(&minimizer)).abs(); // positive shift for normalization
        let fmin = f(&minimizer);
        let shifted = move |x: &[f64]| f(x) - fmin;
        let mut mem = NcgMemory::default();
        let cfg = LineSearchConfig::default();
        for _ in 0..10 {
            let j = shifted(&x);
            let g = grad(&x);
            if g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-10 {
                break;
            }
            ncg_step(&mut x, j, &g, j0, g0, &mut mem, &cfg, shifted, |_| {});
        }
        assert!((x[0] - minimizer[0]).abs() < 1e-8, "x0 = {}", x[0]);
        assert!((x[1] - minimizer[1]).abs() < 1e-8, "x1 = {}", x[1]);
    }

    #[test]
    fn clamping_keeps_bounds() {
        let f = |x: &[f64]| (x[0] - 10.0) * (x[0] - 10.0);
        let mut x = vec![0.0];
        let mut mem = NcgMemory::default();
        let cfg = LineSearchConfig::default();
        for _ in 0..20 {
            let j = f(&x);
            let g = vec![2.0 * (x[0] - 10.0)];
            ncg_step(&mut x, j, &g, 100.0, 20.0, &mut mem, &cfg, f, |t| {
                t[0] = t[0].clamp(-1.0, 2.0)
            });
        }
        assert!((x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_under_armijo() {
        let f = |x: &[f64]| {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2) // Rosenbrock
        };
        let grad = |x: &[f64]| {
            vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ]
        };
        let mut x = vec![-1.2, 1.0];
        let j0 = f(&x);
        let g0 = grad(&x).iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut mem = NcgMemory::default();
        let cfg = LineSearchConfig::default();
        let mut last = j0;
        for _ in 0..50 {
            let j = f(&x);
            assert!(j <= last * (1.0 + 1e-12), "objective increased");
            last = j;
            let g = grad(&x);
            ncg_step(&mut x, j, &g, j0, g0, &mut mem, &cfg, f, |_| {});
        }
        assert!(last < 0.05 * j0);
    }
}
