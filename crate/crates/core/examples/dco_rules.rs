//! The three convex update rules: closed form vs quadratic-program solve,
//! and their reduction to gradient descent and momentum.

use dco_meta::autodiff::Tensor;
use dco_meta::baselines::{momentum_step, sgd_step};
use dco_meta::dco::{
    dcog_step, dcogd_step, dcom_step, rule_step, BoundParams, DcoParams, RuleKind, SolvePath,
};
use dco_meta::{Array, Result};

fn main() -> Result<()> {
    let theta = Array::vector(vec![1.0, -1.0, 0.5]);
    let g = Array::vector(vec![0.4, 0.2, -0.8]);
    let (tt, tg) = (Tensor::constant(theta.clone()), Tensor::constant(g.clone()));

    let lambda = Tensor::constant(Array::vector(vec![1.0, 2.0, 0.5]));
    println!("dcog  -> {:?}", dcog_step(&tt, &tg, &lambda)?.data());

    let b = Tensor::constant(Array::from_rows(&[
        vec![0.5, 0.1, 0.0],
        vec![0.1, 0.5, 0.0],
        vec![0.0, 0.0, 1.0],
    ])?);
    println!("dcogd -> {:?}", dcogd_step(&tt, &tg, &b)?.data());

    let m = Tensor::constant(Array::full(vec![3], 0.3));
    let s = Tensor::constant(Array::zeros(vec![3]));
    let (next, s_next) = dcom_step(&tt, &s, &tg, &lambda, &m)?;
    println!("dcom  -> {:?}, history {:?}", next.data(), s_next.data());

    // Solving the quadratic program directly lands on the same point.
    for (kind, tensors) in [
        (RuleKind::Dcog, vec![lambda.clone()]),
        (RuleKind::Dcogd, vec![b.clone()]),
        (RuleKind::Dcom, vec![lambda.clone(), m.clone()]),
    ] {
        let bound = BoundParams { kind, tensors: &tensors };
        let (closed, _) = rule_step(&bound, &tt, Some(&s), &tg, SolvePath::ClosedForm)?;
        let (qp, _) = rule_step(&bound, &tt, Some(&s), &tg, SolvePath::Qp)?;
        let diff = closed.data().iter().zip(qp.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{:5} closed form vs QP: max diff {diff:.1e}", kind.name());
    }

    // Constant Lambda is gradient descent with rate 1/Lambda^2.
    let params = DcoParams::Dcog { lambda: Array::full(vec![3], 2.0) };
    let DcoParams::Dcog { lambda: l } = &params else { unreachable!() };
    let a = dcog_step(&tt, &tg, &Tensor::constant(l.clone()))?.to_array();
    println!("dcog(2) == sgd(0.25): {}", a == sgd_step(&theta, &g, 0.25)?);

    let (mom, _) = momentum_step(&theta, &Array::zeros(vec![3]), &g, 0.25, 0.7)?;
    let m3 = Tensor::constant(Array::full(vec![3], 0.3));
    let (d, _) = dcom_step(&tt, &s, &tg, &Tensor::constant(l.clone()), &m3)?;
    println!("dcom(2, 0.3) == momentum(0.25, 0.7): {:?} vs {:?}", d.data(), mom.data());
    Ok(())
}
