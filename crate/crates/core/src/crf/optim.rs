//! Limited-memory quasi-Newton minimization with optional L1 penalty
//! (orthant-wise L-BFGS, OWL-QN).
//!
//! The caller supplies the smooth part `f(x)` and its gradient; the penalty
//! `c1 * |x|_1` is handled here through the pseudo-gradient, a sign-constrained
//! search direction and projection of every trial point onto the current
//! orthant. With `c1 == 0` this reduces to plain L-BFGS with a backtracking
//! Armijo line search.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub trait Objective {
    /// Writes the gradient of the smooth part into `grad` and returns its value.
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self(x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwlqnParams {
    pub c1: f64,
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `(F_prev - F) / max(|F|, 1)` falls below this.
    pub tolerance: f64,
    /// Stop when `|pg| / max(|x|, 1)` falls below this.
    pub gradient_tolerance: f64,
    pub max_linesearch: usize,
}

impl Default for OwlqnParams {
    fn default() -> Self {
        OwlqnParams {
            c1: 0.0,
            memory: 10,
            max_iterations: 100,
            tolerance: 1e-6,
            gradient_tolerance: 1e-5,
            max_linesearch: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    ObjectiveConverged,
    GradientConverged,
    /// No step along the search direction decreased the objective.
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    /// Penalized objective after the step.
    pub objective: f64,
    pub step: f64,
    pub evaluations: usize,
    pub active: usize,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

fn pseudo_gradient(x: &[f64], g: &[f64], c1: f64, out: &mut [f64]) {
    if c1 == 0.0 {
        out.copy_from_slice(g);
        return;
    }
    for i in 0..x.len() {
        out[i] = if x[i] < 0.0 || (x[i] == 0.0 && g[i] - c1 > 0.0) {
            g[i] - c1
        } else if x[i] > 0.0 || g[i] + c1 < 0.0 {
            g[i] + c1
        } else {
            0.0
        };
    }
}

struct History {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    memory: usize,
}

impl History {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= 1e-12 * norm(&s) * norm(&y) || sy <= 0.0 {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, sy));
    }

    /// `d = -H * v` via the two-loop recursion.
    fn direction(&self, v: &[f64], d: &mut [f64]) {
        for (di, vi) in d.iter_mut().zip(v) {
            *di = -vi;
        }
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, sy) in self.pairs.iter().rev() {
            let a = dot(s, d) / sy;
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((_, y, sy)) = self.pairs.back() {
            let gamma = sy / dot(y, y);
            for di in d.iter_mut() {
                *di *= gamma;
            }
        }
        for ((s, y, sy), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = dot(y, d) / sy;
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
    }
}

/// Minimizes `f(x) + c1 * |x|_1` starting from `x0`.
pub fn minimize<O, C>(
    objective: &mut O,
    x0: Vec<f64>,
    params: &OwlqnParams,
    mut on_iteration: C,
) -> Result<Minimum>
where
    O: Objective + ?Sized,
    C: FnMut(&IterationReport),
{
    if params.c1 < 0.0 || params.memory == 0 || params.max_iterations == 0 {
        return Err(Error::Config(format!(
            "invalid optimizer parameters {params:?}"
        )));
    }
    let n = x0.len();
    let c1 = params.c1;
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut evaluations = 1;
    let mut fx = objective.evaluate(&x, &mut g)? + c1 * l1(&x);
    if !fx.is_finite() {
        return Err(Error::Diverged(format!("initial objective is {fx}")));
    }

    let mut pg = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut history = History {
        pairs: VecDeque::with_capacity(params.memory),
        memory: params.memory,
    };

    let mut iteration = 0;
    let reason = loop {
        pseudo_gradient(&x, &g, c1, &mut pg);
        let pg_norm = norm(&pg);
        if pg_norm / norm(&x).max(1.0) < params.gradient_tolerance {
            break StopReason::GradientConverged;
        }
        if iteration == params.max_iterations {
            break StopReason::MaxIterations;
        }

        history.direction(&pg, &mut d);
        if c1 > 0.0 {
            for (di, pgi) in d.iter_mut().zip(&pg) {
                if *di * pgi >= 0.0 {
                    *di = 0.0;
                }
            }
        }
        let mut slope = dot(&d, &pg);
        if slope >= 0.0 {
            // Curvature pairs no longer describe a descent direction.
            history.pairs.clear();
            for (di, pgi) in d.iter_mut().zip(&pg) {
                *di = -pgi;
            }
            slope = -pg_norm * pg_norm;
        }

        // orthant of the step: sign of x, or of the descent direction at zero
        let orthant: Vec<f64> = x
            .iter()
            .zip(&pg)
            .map(|(&xi, &pgi)| {
                if xi != 0.0 {
                    xi.signum()
                } else {
                    -pgi.signum()
                }
            })
            .collect();

        let mut step = if history.pairs.is_empty() {
            1.0 / norm(&d)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..params.max_linesearch {
            for i in 0..n {
                let v = x[i] + step * d[i];
                x_new[i] = if c1 > 0.0 && v * orthant[i] <= 0.0 {
                    0.0
                } else {
                    v
                };
            }
            evaluations += 1;
            let f_new = objective.evaluate(&x_new, &mut g_new)? + c1 * l1(&x_new);
            let decrease: f64 = if c1 > 0.0 {
                pg.iter()
                    .zip(x_new.iter().zip(&x))
                    .map(|(p, (a, b))| p * (a - b))
                    .sum()
            } else {
                step * slope
            };
            if f_new.is_finite() && f_new <= fx + 1e-4 * decrease {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            break StopReason::LineSearchFailed;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        history.push(s, y);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        let f_prev = fx;
        fx = f_new;
        iteration += 1;

        on_iteration(&IterationReport {
            iteration,
            objective: fx,
            step,
            evaluations,
            active: x.iter().filter(|v| **v != 0.0).count(),
        });

        if (f_prev - fx) / fx.abs().max(1.0) < params.tolerance {
            break StopReason::ObjectiveConverged;
        }
    };

    Ok(Minimum {
        x,
        objective: fx,
        iterations: iteration,
        evaluations,
        reason,
    })
}
