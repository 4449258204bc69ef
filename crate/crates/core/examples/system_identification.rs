//! Beverton-Holt system identification with a 1-5-5-1 network.

use dco_meta::harness::{run_figure_experiment, Experiment, RunConfig};
use dco_meta::tasks::{beverton_holt, sample_sysid_task_with, SysIdConfig};
use dco_meta::Result;

fn main() -> Result<()> {
    let (task, system) = sample_sysid_task_with(&SysIdConfig::default(), 0, 42)?;
    println!("sample system R0={:.3} K={:.3}, {} parameters", system.r0, system.k, task.dim());
    println!("f(5) = {:.4}", beverton_holt(system.r0, system.k, 5.0)?);

    let config = RunConfig {
        eval_tasks: Some(20),
        ..RunConfig::for_experiment(Experiment::Sysid)
    };
    let report = run_figure_experiment(&config)?;
    for s in &report.series {
        println!("{:8} {:.4} -> {:.4}", s.optimizer, s.mean[0], s.mean.last().unwrap());
    }
    Ok(())
}
