//! Checks tape gradients of a small two-layer network against central
//! differences.

use dforge::tensor::{Tape, Tensor};
use dforge::Result;

fn loss(w1: &Tensor, w2: &Tensor, x: &Tensor, tape: &mut Tape) -> Result<dforge::tensor::Var> {
    let x = tape.leaf(x);
    let w1 = tape.param("w1", w1);
    let w2 = tape.param("w2", w2);
    let h = tape.matmul(&x, &w1)?;
    let h = tape.gelu(&h);
    let logits = tape.matmul(&h, &w2)?;
    tape.cross_entropy_rows(&logits, &[2, 0, 1])
}

fn main() -> Result<()> {
    let x = Tensor::new(&[3, 4], (0..12).map(|i| (i as f64 * 0.7).sin()).collect())?;
    let w1 = Tensor::new(&[4, 5], (0..20).map(|i| (i as f64 * 1.3).cos() * 0.5).collect())?.with_requires_grad(true);
    let mut w2 = Tensor::new(&[5, 3], (0..15).map(|i| (i as f64 * 0.4).sin() * 0.5).collect())?.with_requires_grad(true);

    let mut tape = Tape::new();
    let l = loss(&w1, &w2, &x, &mut tape)?;
    println!("loss = {:.6}", l.item());
    let grads = tape.backward(&l)?;
    let analytic = grads.param("w2").expect("w2 is a parameter").to_vec();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = w2.data()[i];
        w2.data_mut()[i] = orig + h;
        let up = loss(&w1, &w2, &x, &mut Tape::no_grad())?.item();
        w2.data_mut()[i] = orig - h;
        let down = loss(&w1, &w2, &x, &mut Tape::no_grad())?.item();
        w2.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / (a.abs().max(numeric.abs()) + 1e-6);
        worst = worst.max(rel);
    }
    println!("w2: {} entries, max relative error {worst:.2e}", w2.numel());
    Ok(())
}
