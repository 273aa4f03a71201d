use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Weight of the action-label term in the combined parsing loss.
pub const LAMBDA_ACTION: f64 = 2.0;

/// Added inside the logarithm so an underflowed probability gives a large finite
/// loss; it is below the resolution of any probability above 1e-284.
const LOG_FLOOR: f64 = 1e-300;

fn check_index(what: &str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::IndexOutOfRange {
            what: what.to_string(),
            index,
            len,
        });
    }
    Ok(())
}

/// `−log p[gt]` of a probability vector on the tape.
pub fn nll_on_tape(tape: &mut Tape, probs: Var, gt: usize) -> Result<Var> {
    let len = tape.shape(probs)[0];
    check_index("class", gt, len)?;
    let p = tape.slice(probs, 0, gt, gt + 1)?;
    let floor = tape.constant(Tensor::scalar(LOG_FLOOR));
    let p = tape.add(p, floor)?;
    let l = tape.log(p);
    let s = tape.sum(l);
    Ok(tape.scale(s, -1.0))
}

/// `Σ_c −log pred_c[gt_c]` over attributes.
pub fn loss_attr_on_tape(tape: &mut Tape, probs: &[Var], gt: &[usize]) -> Result<Var> {
    if probs.len() != gt.len() || probs.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            got: gt.len(),
        });
    }
    let mut total: Option<Var> = None;
    for (p, &g) in probs.iter().zip(gt) {
        let l = nll_on_tape(tape, *p, g)?;
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l)?,
        });
    }
    Ok(total.unwrap())
}

/// `L_attr + λ_A L_task`.
pub fn loss_apm_on_tape(tape: &mut Tape, attr: Var, task: Var) -> Result<Var> {
    let weighted = tape.scale(task, LAMBDA_ACTION);
    tape.add(attr, weighted)
}

fn nll(p: &[f64], gt: usize) -> Result<f64> {
    check_index("class", gt, p.len())?;
    Ok(-(p[gt] + LOG_FLOOR).ln())
}

/// Attribute cross-entropy of plain probability vectors.
pub fn loss_attr(pred: &[Vec<f64>], gt: &[usize]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            expected: pred.len(),
            got: gt.len(),
        });
    }
    pred.iter().zip(gt).map(|(p, &g)| nll(p, g)).sum()
}

/// Action-label cross-entropy.
pub fn loss_task(pred_action: &[f64], gt: usize) -> Result<f64> {
    nll(pred_action, gt)
}

pub fn loss_apm(attr: f64, task: f64) -> f64 {
    attr + LAMBDA_ACTION * task
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradient;

    #[test]
    fn hand_computed_values() {
        assert!(
            (loss_attr(&[vec![0.25, 0.25, 0.5]], &[2]).unwrap() - 0.5f64.ln().abs()).abs() < 1e-15
        );
        assert_eq!(
            loss_attr(&[vec![0.0, 1.0], vec![1.0, 0.0, 0.0]], &[1, 0]).unwrap(),
            0.0
        );
        let uniform = vec![vec![0.2; 5], vec![0.25; 4]];
        let l = loss_attr(&uniform, &[3, 1]).unwrap();
        assert!((l - (5f64.ln() + 4f64.ln())).abs() < 1e-12);
        assert_eq!(loss_apm(1.0, 0.5), 2.0);
        assert_eq!(loss_apm(0.0, 0.0), 0.0);
        assert!(loss_task(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn task_gradient_at_logits_is_pred_minus_onehot() {
        let logits = Tensor::vector(vec![0.3, -1.2, 2.0, 0.1]);
        let f = |tape: &mut Tape, x: Var| {
            let p = tape.softmax(x);
            nll_on_tape(tape, p, 1)
        };
        let (_, g) = crate::autodiff::value_and_grad(&f, &logits).unwrap();
        let p = crate::autodiff::kernels::softmax_rows(logits.data(), 4);
        for i in 0..4 {
            let expected = p[i] - if i == 1 { 1.0 } else { 0.0 };
            assert!((g.data()[i] - expected).abs() < 1e-12);
        }
        assert!(check_gradient(f, &logits, 1e-6, 1e-4).unwrap().passed);
    }
}
