//! Meta-train the three rules on random least-squares tasks and compare
//! them with tuned baselines on fresh tasks. Writes curves.csv and
//! curves.svg to the directory given as the first argument (default
//! `out/ls`).

use std::path::PathBuf;

use dco_meta::harness::{run_figure_experiment, write_report_dir, Experiment, RunConfig};
use dco_meta::tasks::LsConfig;
use dco_meta::Result;

fn main() -> Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/ls".into()));
    let config = RunConfig {
        ls: LsConfig { dim: 20, ..LsConfig::default() },
        tasks: Some(100),
        ..RunConfig::for_experiment(Experiment::Ls)
    };
    let report = run_figure_experiment(&config)?;
    for ck in &report.checkpoints {
        println!("{:5} l_total {:.4} -> {:.4}", ck.rule.name(), ck.history[0], ck.history.last().unwrap());
    }
    for s in &report.series {
        println!("{:8} iter 5 {:.4}  iter 30 {:.4}", s.optimizer, s.mean[5], s.mean.last().unwrap());
    }
    write_report_dir(&config, &report, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
