//! Reverse-mode differentiation of a small expression, checked against
//! central differences.
//!
//! ```text
//! cargo run --release --example autodiff
//! ```

use edgegat::tensor::{Axis, Graph, Tensor};

/// `sum(tanh(x W) * x W)`
fn loss(x: &Tensor<f64>, w: &Tensor<f64>) -> edgegat::Result<f64> {
    let g = Graph::new();
    let xw = g.constant(x.clone()).matmul(g.constant(w.clone()))?;
    Ok(xw.tanh().mul(xw)?.sum(Axis::All).item())
}

fn main() -> edgegat::Result<()> {
    let x = Tensor::from_f64(3, 2, &[0.5, -1.0, 0.25, 2.0, -0.75, 0.1])?;
    let w = Tensor::from_f64(2, 2, &[0.3, -0.2, 0.8, 0.05])?;

    let g = Graph::new();
    let wv = g.variable(w.clone());
    let xw = g.constant(x.clone()).matmul(wv)?;
    let l = xw.tanh().mul(xw)?.sum(Axis::All);
    let grads = g.backward(l)?;
    let analytic = grads.wrt(wv).expect("w takes part in the loss");

    let h = 1e-6;
    println!("loss {:.6}", l.item());
    for r in 0..2 {
        for c in 0..2 {
            let (mut up, mut down) = (w.clone(), w.clone());
            up.set(r, c, w.get(r, c) + h);
            down.set(r, c, w.get(r, c) - h);
            let numeric = (loss(&x, &up)? - loss(&x, &down)?) / (2.0 * h);
            println!(
                "dL/dw[{r}][{c}] analytic {:+.8} numeric {:+.8}",
                analytic.get(r, c),
                numeric
            );
        }
    }
    Ok(())
}
