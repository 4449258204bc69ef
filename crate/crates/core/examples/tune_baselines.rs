//! Learning-rate grid search for SGD, Adam and RMSProp on random
//! least-squares tasks.

use dco_meta::baselines::{tune_learning_rate, tune_rows_csv, BaselineConfig, BaselineKind, DEFAULT_GRID};
use dco_meta::tasks::{sample_ls_task_with, LsConfig};
use dco_meta::{rng, Result};

fn main() -> Result<()> {
    let cfg = LsConfig { dim: 10, ..LsConfig::default() };
    let tasks: Vec<_> = (0..20).map(|i| sample_ls_task_with(&cfg, i, rng::derive(7, i as u64))).collect();
    let mut rows = Vec::new();
    for kind in [BaselineKind::Sgd, BaselineKind::Adam, BaselineKind::Rmsprop] {
        let tuned = tune_learning_rate(&BaselineConfig::new(kind, 1e-3), &tasks, &DEFAULT_GRID, 30)?;
        println!(
            "{:8} best lr {:<7} loss {:.4} -> {:.4}",
            kind.name(),
            tuned.best_lr,
            tuned.curve[0],
            tuned.curve.last().unwrap()
        );
        rows.extend(tuned.rows);
    }
    print!("{}", tune_rows_csv(&rows));
    Ok(())
}
