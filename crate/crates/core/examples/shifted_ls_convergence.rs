//! Gradient-descent meta-training of the full-matrix rule on a shifted
//! least-squares family, tracking the distance to the closed-form optimum.
//!
//! Usage: shifted_ls_convergence [k_max] [seed]

use dco_meta::linalg;
use dco_meta::tasks::make_shifted_family;
use dco_meta::theorem::{closed_form_bstar, run_on_family, span_condition};
use dco_meta::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let k_max: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(2000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let family = make_shifted_family(5, 8, seed)?;
    let span = span_condition(&family);
    println!("offset rank {} of {}", span.rank, span.dim);
    println!("cond(X^T X) = {:.1}", linalg::condition_number(&linalg::gram(&family.x)));
    println!("||B*||_F = {:.3}", closed_form_bstar(&family.x)?.norm2());

    let report = run_on_family(&family, None, k_max)?;
    println!("eta = {:e}", report.eta);
    for k in (0..=k_max).step_by((k_max / 10).max(1)) {
        println!("k {k:6}  gap {:.3e}  ||B-B*||_F {:.3e}", report.target_gap[k], report.b_frobenius_gap[k]);
    }
    if let Some(rate) = &report.rate {
        println!("fitted rate 1 - exp(slope) = {:.3e} over {} points", rate.epsilon_hat, rate.points);
    }
    Ok(())
}
