//! Minibatch meta-updates on a shifted least-squares family.

use dco_meta::baselines::{BaselineConfig, BaselineKind};
use dco_meta::dco::{DcoParams, RuleKind, StepOptions};
use dco_meta::meta::{meta_step_minibatch, MetaConfig, MetaRunState};
use dco_meta::tasks::make_shifted_family;
use dco_meta::theorem::l_total;
use dco_meta::{rng, Array, Result};

fn main() -> Result<()> {
    let family = make_shifted_family(4, 12, 5)?;
    let tasks = family.tasks();
    let config = MetaConfig {
        rule: RuleKind::Dcogd,
        meta_opt: BaselineConfig::new(BaselineKind::Adam, 1e-3),
        step: StepOptions::raw(),
        ..MetaConfig::default()
    };
    let mut state = MetaRunState::new(
        DcoParams::Dcogd { b: Array::zeros(vec![4, 4]) },
        config.meta_opt.clone(),
        &tasks,
    );
    for k in 0..=400u64 {
        let params = meta_step_minibatch(&tasks, &mut state, &config, 4, rng::derive(9, k))?;
        if k % 50 == 0 {
            let DcoParams::Dcogd { b } = &params else { unreachable!() };
            println!("step {k:3}: full-batch l_total {:.4}", l_total(&family, b)?);
        }
    }
    Ok(())
}
