//! Central finite-difference verification of reverse-mode gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Outcome of comparing an analytic gradient against central differences.
///
/// The per-coordinate error is `|a - n| / max(|a|, |n|, 1)`: relative for
/// gradient entries above one in magnitude, absolute below.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub errors: Vec<f64>,
    pub max_error: f64,
    /// Coordinates whose error is at or above the tolerance.
    pub failing: Vec<usize>,
    /// Set when `f` was non-finite; `Some(None)` means at `x` itself,
    /// `Some(Some(i))` at a perturbation of coordinate `i`.
    pub non_finite: Option<Option<usize>>,
    pub passed: bool,
}

impl GradCheckReport {
    fn non_finite(n: usize, at: Option<usize>) -> Self {
        GradCheckReport {
            analytic: vec![f64::NAN; n],
            numeric: vec![f64::NAN; n],
            errors: vec![f64::INFINITY; n],
            max_error: f64::INFINITY,
            failing: at.into_iter().collect(),
            non_finite: Some(at),
            passed: false,
        }
    }
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

/// Compares a supplied analytic gradient of `f` at `x` with central differences.
pub fn compare_gradients(
    f: impl Fn(&Tensor) -> f64,
    analytic: &Tensor,
    x: &Tensor,
    step: f64,
    tol: f64,
) -> GradCheckReport {
    let n = x.len();
    if !f(x).is_finite() {
        return GradCheckReport::non_finite(n, None);
    }
    let mut probe = x.clone();
    let mut numeric = Vec::with_capacity(n);
    for i in 0..n {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return GradCheckReport::non_finite(n, Some(i));
        }
        numeric.push((plus - minus) / (2.0 * step));
    }
    let analytic = analytic.data().to_vec();
    let errors: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &m)| {
            if a.is_finite() {
                relative_error(a, m)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let failing: Vec<usize> = errors
        .iter()
        .enumerate()
        .filter(|(_, &e)| e >= tol)
        .map(|(i, _)| i)
        .collect();
    let max_error = errors.iter().cloned().fold(0.0, f64::max);
    GradCheckReport {
        analytic,
        numeric,
        errors,
        max_error,
        passed: failing.is_empty(),
        failing,
        non_finite: None,
    }
}

/// Evaluates a tape-built scalar function at `x`.
pub fn evaluate<F>(f: &F, x: &Tensor) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&mut tape, xv)?;
    Ok(tape.value(out).item())
}

/// Reverse-mode value and gradient of a tape-built scalar function at `x`.
pub fn value_and_grad<F>(f: &F, x: &Tensor) -> Result<(f64, Tensor)>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&mut tape, xv)?;
    let grads = tape.backward(out)?;
    Ok((tape.value(out).item(), grads.get(xv)))
}

/// Checks the reverse-mode gradient of `f` at `x` against central differences
/// with the given `step`; passes iff every coordinate error is below `tol`.
pub fn check_gradient<F>(f: F, x: &Tensor, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let (value, analytic) = value_and_grad(&f, x)?;
    if !value.is_finite() {
        return Ok(GradCheckReport::non_finite(x.len(), None));
    }
    let eval = |p: &Tensor| evaluate(&f, p).unwrap_or(f64::NAN);
    Ok(compare_gradients(eval, &analytic, x, step, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn squared_norm(tape: &mut Tape, x: Var) -> Result<Var> {
        let sq = tape.square(x);
        Ok(tape.sum(sq))
    }

    #[test]
    fn squared_norm_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::vector((0..10).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let report = check_gradient(squared_norm, &x, 1e-6, 1e-4).unwrap();
        assert!(report.passed, "{report:?}");
        for (a, xi) in report.analytic.iter().zip(x.data()) {
            assert!((a - 2.0 * xi).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_bug_is_caught_and_located() {
        let x = Tensor::vector(vec![0.5, -1.5, 2.0, 3.0]);
        // backward rule for square with its sign flipped on coordinates 1 and 3
        let buggy = Tensor::vector(
            x.data()
                .iter()
                .enumerate()
                .map(|(i, v)| if i % 2 == 1 { -2.0 * v } else { 2.0 * v })
                .collect(),
        );
        let f = |t: &Tensor| t.data().iter().map(|v| v * v).sum::<f64>();
        let report = compare_gradients(f, &buggy, &x, 1e-6, 1e-4);
        assert!(!report.passed);
        assert_eq!(report.failing, vec![1, 3]);
    }

    #[test]
    fn constant_function_passes() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let report = check_gradient(
            |tape, _x| Ok(tape.constant(Tensor::scalar(4.2))),
            &x,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(report.passed);
        assert_eq!(report.max_error, 0.0);
    }

    #[test]
    fn non_finite_is_reported_with_coordinate() {
        // log(x) is finite at x but not at x - step for the coordinate sitting at step/2
        let x = Tensor::vector(vec![1.0, 5e-7]);
        let report = check_gradient(
            |tape, x| {
                let l = tape.log(x);
                Ok(tape.sum(l))
            },
            &x,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(!report.passed);
        assert_eq!(report.non_finite, Some(Some(1)));
    }
}
