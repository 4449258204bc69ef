//! Reverse-mode gradients, second derivatives and a finite-difference check.

use dco_meta::autodiff::{backward, finite_difference_check, Graph, Tensor};
use dco_meta::{Array, Result};

fn main() -> Result<()> {
    let graph = Graph::new();
    let x = graph.leaf(Array::vector(vec![1.0, -2.0, 0.5]));
    let a = Tensor::constant(Array::from_rows(&[vec![2.0, 0.0, 1.0], vec![0.0, 1.0, -1.0]])?);
    let b = Tensor::constant(Array::vector(vec![1.0, 0.0]));

    // ||A x - b||^2
    let loss = a.matvec(&x)?.sub(&b)?.square()?.sum()?;
    let grad = backward(&loss, &[&x], false)?.remove(0);
    println!("loss = {}", loss.item());
    println!("grad = {:?}", grad.data());

    // Gradient of the gradient norm needs the first backward pass on the graph.
    let g = backward(&loss, &[&x], true)?.remove(0);
    let gnorm = g.square()?.sum()?;
    let hvp = backward(&gnorm, &[&x], false)?.remove(0);
    println!("d||grad||^2/dx = {:?}", hvp.data());

    let s = graph.leaf(Array::scalar(1.5));
    let cube = s.mul(&s)?.mul(&s)?;
    let d1 = backward(&cube, &[&s], true)?.remove(0);
    let d2 = backward(&d1, &[&s], false)?.remove(0);
    println!("d2/ds2 s^3 at 1.5 = {} (exact 9)", d2.item());

    let err = finite_difference_check(|t| t.tanh()?.mul(t)?.sum(), &Array::vector(vec![0.3, -1.2, 2.0]), 1e-6)?;
    println!("finite-difference error = {err:.2e}");
    Ok(())
}
