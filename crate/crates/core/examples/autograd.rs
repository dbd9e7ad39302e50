//! Reverse-mode autodiff and Adam on a two-layer regression problem.
//!
//! cargo run --example autograd

use anyhow::Result;
use bcm::tensor::{zero_grads, AdamState, Tensor};

fn main() -> Result<()> {
    // y = 2·x0 − x1 on a few points.
    let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, -1.0]])?;
    let y = Tensor::new(&[4, 1], vec![2.0, -1.0, 1.0, 5.0])?;

    let w1 = Tensor::parameter(&[2, 8], (0..16).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect())?;
    let b1 = Tensor::parameter(&[8], vec![0.0; 8])?;
    let w2 = Tensor::parameter(&[8, 1], (0..8).map(|i| ((i * 5 % 7) as f64 - 3.0) / 10.0).collect())?;
    let params = [w1.clone(), b1.clone(), w2.clone()];
    let mut adam = AdamState::new(&params, 0.05);

    for step in 0..=300 {
        zero_grads(&params);
        let hidden = x.matmul(&w1)?.add_bias(&b1)?.tanh();
        let err = hidden.matmul(&w2)?.sub(&y)?;
        let loss = err.mul(&err)?.mean();
        loss.backward()?;
        adam.step(&params)?;
        if step % 50 == 0 {
            println!("step {step:3}  loss {:.6}", loss.item());
        }
    }
    println!("dL/dw2 after the last step: {:?}", w2.grad().unwrap_or_default());
    Ok(())
}
