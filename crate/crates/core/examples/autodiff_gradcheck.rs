//! Builds a small two-layer network on the tape, backpropagates, and compares the
//! gradient with central finite differences.

use actionscope::autodiff::{check_gradient, Tape, Tensor, Var};

fn main() -> anyhow::Result<()> {
    let w1 = Tensor::new(
        vec![3, 4],
        (0..12).map(|i| (i as f64 * 0.37).sin()).collect(),
    )?;
    let w2 = Tensor::new(
        vec![4, 2],
        (0..8).map(|i| (i as f64 * 0.91).cos()).collect(),
    )?;
    let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7])?;

    let f = |tape: &mut Tape, x: Var| {
        let a = tape.constant(w1.clone());
        let b = tape.constant(w2.clone());
        let h = tape.matmul(x, a)?;
        let h = tape.relu(h);
        let o = tape.matmul(h, b)?;
        let p = tape.softmax(o);
        let l = tape.log(p);
        let s = tape.sum(l);
        Ok(tape.scale(s, -1.0))
    };

    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let loss = f(&mut tape, leaf)?;
    let grads = tape.backward(loss)?;
    println!("loss = {:.6}", tape.value(loss).item());
    println!("dloss/dx = {:?}", grads.get(leaf).data());

    let report = check_gradient(f, &x, 1e-6, 1e-4)?;
    println!(
        "finite-difference check: passed={} max error {:.2e}",
        report.passed, report.max_error
    );
    Ok(())
}
