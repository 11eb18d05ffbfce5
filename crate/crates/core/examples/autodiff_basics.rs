//! Record a small computation on the tape, differentiate it, and compare
//! against central differences.
//!
//! cargo run --release --example autodiff_basics

use fscn::gradcheck::{check_inputs, GradCheckConfig};
use fscn::{Graph, Tensor};

fn main() -> fscn::Result<()> {
    // f(x, w) = mean(softplus(x @ w))
    let x = Tensor::from_fn(&[2, 3], |i| i as f64 * 0.3 - 0.5);
    let w = Tensor::from_fn(&[3, 2], |i| 0.2 - i as f64 * 0.15);

    let mut g = Graph::new();
    let xv = g.variable(x.clone());
    let wv = g.variable(w.clone());
    let y = g.matmul(xv, wv)?;
    let y = g.softplus(y);
    let loss = g.mean(y);
    let grads = g.backward(loss)?;
    println!("loss   = {:.6}", g.value(loss).item()?);
    println!("dL/dx  = {:?}", grads.get(xv).expect("x is a variable").data());
    println!("dL/dw  = {:?}", grads.get(wv).expect("w is a variable").data());

    let report = check_inputs(
        "softplus(x @ w)",
        &[x, w],
        |g, v| {
            let y = g.matmul(v[0], v[1])?;
            let y = g.softplus(y);
            Ok(g.mean(y))
        },
        &GradCheckConfig::default(),
    )?;
    println!("{report}");
    Ok(())
}
