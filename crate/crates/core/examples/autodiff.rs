//! Tape-based reverse-mode autodiff in isolation: record a few ops, run the
//! backward pass, and verify the analytic gradients against central finite
//! differences.
//!
//! Run with: cargo run --example autodiff

use svae::{grad_check, Result, Tape, Tensor};

fn main() -> Result<()> {
    // f(w, x) = sum(tanh(W x))
    let w = Tensor::matrix(2, 3, vec![0.4, -0.2, 0.1, 0.3, 0.8, -0.5])?;
    let x = Tensor::vector(vec![1.0, -2.0, 0.5]);

    let mut tape = Tape::new();
    let w_id = tape.leaf(w.clone());
    let x_id = tape.leaf(x.clone());
    let wx = tape.matvec(w_id, x_id)?;
    let t = tape.tanh(wx);
    let y = tape.sum(t);
    println!("f(w, x)        = {:.6}", tape.value(y)?);

    tape.backward(y)?;
    println!("df/dx          = {:?}", tape.grad(x_id).unwrap());
    println!("df/dw (row 0)  = {:?}", &tape.grad(w_id).unwrap()[..3]);

    // the same program, checked against central differences
    let err = grad_check(
        |tape, ids| {
            let wx = tape.matvec(ids[0], ids[1])?;
            let t = tape.tanh(wx);
            Ok(tape.sum(t))
        },
        &[w, x],
        1e-5,
    )?;
    println!("max rel error vs finite differences: {err:.3e}");

    // softmax sums to one and handles huge logits without overflow
    let mut tape = Tape::new();
    let logits = tape.leaf(Tensor::vector(vec![1000.0, 2.0, -5.0]));
    let s = tape.softmax(logits)?;
    println!("softmax([1000, 2, -5]) = {:?}", tape.data(s));
    Ok(())
}
