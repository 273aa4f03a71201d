//! Optimizers over the unconstrained capture vector `[α, β, ln s, t]`.

use nalgebra::{DMatrix, DVector};

use super::fit::{CaptureConfig, Method, StopReason};
use super::losses::{pack_state, CaptureProblem};
use super::CaptureState;
use crate::autodiff::{Tape, Tensor};
use crate::embedding::PoseCoefficients;
use crate::error::{Error, Result};
use crate::kinematics::{CameraParams, ShapeVector, SHAPE_LIMIT};

pub(super) struct Objective<'a> {
    pub problem: CaptureProblem<'a>,
    pub k: usize,
    pub shape_dim: usize,
}

struct Point {
    u: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    /// Jacobian of the predicted keypoints over visible coordinates, row-major.
    jac: Vec<f64>,
    rows: usize,
    /// Masked residual `observed − predicted` over the Jacobian rows.
    resid: Vec<f64>,
    data: f64,
}

impl Objective<'_> {
    fn scale_index(&self) -> usize {
        self.k + self.shape_dim
    }

    fn dim(&self) -> usize {
        self.k + self.shape_dim + 3
    }

    fn eval(&self, u: &[f64], with_jacobian: bool) -> Result<Point> {
        let si = self.scale_index();
        let mut packed = u.to_vec();
        packed[si] = u[si].exp();
        let s = packed[si];
        let mut tape = Tape::new();
        let leaf = tape.leaf(Tensor::vector(packed));
        let graph = self.problem.build(&mut tape, leaf)?;
        let f = tape.value(graph.total).item();
        let data = tape.value(graph.data).item();
        let mut g = tape.backward(graph.total)?.get(leaf).into_data();
        g[si] *= s;

        let mut jac = Vec::new();
        let mut rows = 0;
        let mut resid = Vec::new();
        if with_jacobian && f.is_finite() {
            let predicted = tape.value(graph.predicted);
            let shape = predicted.shape().to_vec();
            for (i, vis) in self.problem.frame.visibility.iter().enumerate() {
                if !vis.is_visible() {
                    continue;
                }
                for c in 0..2 {
                    resid.push(self.problem.frame.keypoints[i][c] - predicted.data()[2 * i + c]);
                    let mut seed = Tensor::zeros(&shape);
                    seed.data_mut()[2 * i + c] = 1.0;
                    let mut row = tape.vjp(graph.predicted, seed)?.get(leaf).into_data();
                    row[si] *= s;
                    jac.extend(row);
                    rows += 1;
                }
            }
        }
        Ok(Point {
            u: u.to_vec(),
            f,
            g,
            jac,
            rows,
            resid,
            data,
        })
    }

    /// Adds the Hessian of `‖W ∘ (ᾱ − α)‖` to the pose block of `h`.
    fn add_prior_curvature(&self, h: &mut DMatrix<f64>, u: &[f64]) {
        let space = self.problem.space;
        let w2: Vec<f64> = space.prior_weights().iter().map(|w| w * w).collect();
        let mean = space.coefficient_mean();
        let q: Vec<f64> = (0..self.k).map(|i| w2[i] * (mean[i] - u[i])).collect();
        let p2: f64 = (0..self.k).map(|i| q[i] * (mean[i] - u[i])).sum();
        if !(p2 > 0.0) {
            return;
        }
        let p = p2.sqrt();
        for i in 0..self.k {
            h[(i, i)] += w2[i] / p;
            for j in 0..self.k {
                h[(i, j)] -= q[i] * q[j] / (p2 * p);
            }
        }
    }

    pub fn to_unconstrained(&self, state: &CaptureState) -> Vec<f64> {
        let mut u = pack_state(state).into_data();
        u[self.scale_index()] = state.cam.s.ln();
        u
    }

    pub fn to_state(&self, u: &[f64], submotion: &str) -> CaptureState {
        let (k, sd) = (self.k, self.shape_dim);
        CaptureState {
            alpha: PoseCoefficients(u[..k].to_vec()),
            beta: ShapeVector(u[k..k + sd].to_vec()),
            cam: CameraParams {
                s: u[k + sd].exp(),
                t: [u[k + sd + 1], u[k + sd + 2]],
            },
            submotion: submotion.to_string(),
        }
    }

    fn step_sizes(&self, config: &CaptureConfig) -> Vec<f64> {
        let mut lr = vec![config.lr_alpha; self.k];
        lr.extend(std::iter::repeat(config.lr_beta).take(self.shape_dim));
        lr.push(config.lr_log_scale);
        lr.extend([config.lr_translation; 2]);
        lr
    }

    /// Shape coordinates at a bound whose descent direction leaves the box.
    fn active_bounds(&self, u: &[f64], g: &[f64]) -> Vec<usize> {
        (self.k..self.k + self.shape_dim)
            .filter(|&i| {
                (u[i] >= SHAPE_LIMIT && g[i] < 0.0) || (u[i] <= -SHAPE_LIMIT && g[i] > 0.0)
            })
            .collect()
    }

    fn clamp(&self, u: &mut [f64]) {
        for b in &mut u[self.k..self.k + self.shape_dim] {
            *b = b.clamp(-SHAPE_LIMIT, SHAPE_LIMIT);
        }
    }
}

pub(super) struct Run {
    pub u: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub trace: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The last accepted step lowered the loss by less than `tol` relative.
fn stalled(trace: &[f64], tol: f64) -> bool {
    match trace {
        [.., a, b] => a - b <= tol * a.abs(),
        _ => false,
    }
}

/// A decrease smaller than the rounding error of the loss itself is noise.
fn improves(trial: f64, current: f64) -> bool {
    trial < current - 8.0 * f64::EPSILON * current.abs()
}

pub(super) fn minimize(obj: &Objective, u0: Vec<f64>, config: &CaptureConfig) -> Result<Run> {
    let mut u0 = u0;
    obj.clamp(&mut u0);
    let with_jacobian = config.method == Method::GaussNewton;
    let start = obj.eval(&u0, with_jacobian)?;
    if !start.f.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    match config.method {
        Method::Adam => adam(obj, start, config),
        Method::GaussNewton => gauss_newton(obj, start, config),
    }
}

/// Adam directions with a persistent step scale: halved on every rejected trial and
/// grown after each accepted one.
fn adam(obj: &Objective, start: Point, config: &CaptureConfig) -> Result<Run> {
    let lr = obj.step_sizes(config);
    let n = lr.len();
    let mut p = start;
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut scale: f64 = 1.0;
    let mut iterations = 0;
    let mut evaluations = 1;
    let mut trace = vec![p.f];
    let stop = 'outer: loop {
        if norm(&p.g) < config.grad_tol {
            break StopReason::GradientNorm;
        }
        if stalled(&trace, config.loss_tol) {
            break StopReason::LossStalled;
        }
        if iterations >= config.max_iterations {
            break StopReason::MaxIterations;
        }
        let step = (iterations + 1) as i32;
        let c1 = 1.0 - config.beta1.powi(step);
        let c2 = 1.0 - config.beta2.powi(step);
        let mut dir: Vec<f64> = (0..n)
            .map(|i| {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * p.g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * p.g[i] * p.g[i];
                lr[i] * (m[i] / c1) / ((v[i] / c2).sqrt() + config.epsilon)
            })
            .collect();
        let mut restarted = false;
        loop {
            if scale < config.min_step_scale {
                break 'outer StopReason::StepCollapse;
            }
            if evaluations >= config.max_evaluations {
                break 'outer StopReason::MaxEvaluations;
            }
            let mut trial: Vec<f64> = p.u.iter().zip(&dir).map(|(x, d)| x - scale * d).collect();
            obj.clamp(&mut trial);
            let t = obj.eval(&trial, false)?;
            evaluations += 1;
            if t.f.is_nan() {
                return Err(Error::Diverged {
                    iteration: iterations,
                });
            }
            if improves(t.f, p.f) {
                p = t;
                iterations += 1;
                trace.push(p.f);
                scale = (scale * config.step_growth).min(1.0);
                break;
            }
            scale *= 0.5;
            if !restarted {
                // Momentum can point uphill; retry along the preconditioned gradient,
                // which is always a descent direction.
                restarted = true;
                for i in 0..n {
                    m[i] = c1 * p.g[i];
                    dir[i] = lr[i] * p.g[i] / ((v[i] / c2).sqrt() + config.epsilon);
                }
            }
        }
    };
    Ok(Run {
        grad_norm: norm(&p.g),
        u: p.u,
        iterations,
        evaluations,
        stop,
        trace,
    })
}

/// Damped Gauss-Newton steps `(H + μ diag H) d = −∇L`.
///
/// `H` is the Hessian of `λ_data ‖r‖` with the keypoint residual `r` linearized
/// through its Jacobian `J`, `(λ_data / ‖r‖)(JᵀJ − ĝĝᵀ)` with `ĝ = Jᵀr / ‖r‖`, plus
/// the exact Hessian of the prior norm. A norm has no curvature along its own
/// gradient, which `JᵀJ` alone would overstate. The damping `μ` adapts per trial:
/// shrunk after an accepted step, grown after a rejected one.
fn gauss_newton(obj: &Objective, start: Point, config: &CaptureConfig) -> Result<Run> {
    let n = obj.dim();
    let mut p = start;
    let mut mu = config.initial_damping;
    let mut iterations = 0;
    let mut evaluations = 1;
    let mut trace = vec![p.f];
    let weight = obj.problem.weights.data;
    let stop = 'outer: loop {
        if norm(&p.g) < config.grad_tol {
            break StopReason::GradientNorm;
        }
        if stalled(&trace, config.loss_tol) {
            break StopReason::LossStalled;
        }
        if iterations >= config.max_iterations {
            break StopReason::MaxIterations;
        }
        let jac = DMatrix::from_row_slice(p.rows, n, &p.jac);
        let r = DVector::from_column_slice(&p.resid);
        let rn = p.data.max(1e-300);
        let jt = jac.transpose();
        let gr = &jt * &r / rn;
        let mut h = &jt * &jac - &gr * gr.transpose();
        h *= weight / rn;
        obj.add_prior_curvature(&mut h, &p.u);
        let floor = 1e-12 * (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max) + 1e-300;
        let mut grad = DVector::from_column_slice(&p.g);
        // shape coordinates held at a bound by a gradient pointing outward stay put
        for i in obj.active_bounds(&p.u, &p.g) {
            h.row_mut(i).fill(0.0);
            h.column_mut(i).fill(0.0);
            h[(i, i)] = 1.0;
            grad[i] = 0.0;
        }
        loop {
            if mu > config.max_damping {
                break 'outer StopReason::StepCollapse;
            }
            if evaluations >= config.max_evaluations {
                break 'outer StopReason::MaxEvaluations;
            }
            let mut a = h.clone();
            for i in 0..n {
                a[(i, i)] += mu * h[(i, i)].max(floor);
            }
            let Some(chol) = a.cholesky() else {
                mu *= config.damping_increase;
                continue;
            };
            let d = chol.solve(&grad);
            let mut trial: Vec<f64> = p.u.iter().zip(d.iter()).map(|(x, d)| x - d).collect();
            obj.clamp(&mut trial);
            let t = obj.eval(&trial, true)?;
            evaluations += 1;
            if t.f.is_nan() {
                return Err(Error::Diverged {
                    iteration: iterations,
                });
            }
            if improves(t.f, p.f) {
                p = t;
                iterations += 1;
                trace.push(p.f);
                mu = (mu / config.damping_decrease).max(config.min_damping);
                break;
            }
            mu *= config.damping_increase;
        }
    };
    Ok(Run {
        grad_norm: norm(&p.g),
        u: p.u,
        iterations,
        evaluations,
        stop,
        trace,
    })
}
