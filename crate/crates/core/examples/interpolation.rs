//! Smooth function interpolation with a 1-10-10-1 network.

use dco_meta::harness::{run_figure_experiment, Experiment, RunConfig};
use dco_meta::tasks::{sample_interp_task_with, smooth_target, InterpConfig};
use dco_meta::Result;

fn main() -> Result<()> {
    let (task, f) = sample_interp_task_with(&InterpConfig::default(), 0, 3)?;
    println!("target a={:.3} b={:.3} c={:.3}, {} parameters", f.a, f.b, f.c, task.dim());
    for x in [-4.0, 0.0, 4.0] {
        println!("  f({x}) = {:.4}", smooth_target(f.a, f.b, f.c, x));
    }

    let report = run_figure_experiment(&RunConfig::for_experiment(Experiment::Interp))?;
    for s in &report.series {
        println!("{:8} {:.4} -> {:.4}", s.optimizer, s.mean[0], s.mean.last().unwrap());
    }
    Ok(())
}
