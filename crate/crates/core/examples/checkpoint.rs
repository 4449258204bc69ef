//! Meta-train, checkpoint, reload, and keep training from the saved state.

use dco_meta::dco::{init_dco_params, RuleKind};
use dco_meta::harness::{load_checkpoint, save_checkpoint, Checkpoint};
use dco_meta::meta::{evaluate_dco, meta_train_from, MetaConfig};
use dco_meta::tasks::{sample_ls_task_with, LsConfig};
use dco_meta::{rng, Result};

fn main() -> Result<()> {
    let cfg = LsConfig { dim: 8, ..LsConfig::default() };
    let tasks: Vec<_> = (0..10).map(|i| sample_ls_task_with(&cfg, i, rng::derive(1, i as u64))).collect();
    let meta = MetaConfig { rule: RuleKind::Dcom, meta_epochs: 5, ..MetaConfig::default() };

    let state = meta_train_from(&tasks, &meta, init_dco_params(RuleKind::Dcom, 8, 1.0)?, |k, l| {
        println!("epoch {k}: l_total {l:.4}");
    })?;
    let dir = std::env::temp_dir().join("dco-meta-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("dcom.json");
    save_checkpoint(&Checkpoint::new(state.params.clone(), meta.clone(), 1, state.history), &path)?;

    let loaded = load_checkpoint(&path)?;
    assert_eq!(loaded.params, state.params);
    println!("reloaded {} after {} epochs from {}", loaded.rule.name(), loaded.epochs, path.display());

    let more = meta_train_from(&tasks, &loaded.meta, loaded.params, |_, _| {})?;
    let curves = evaluate_dco(&more.params, &meta.step, &tasks, 10)?;
    println!("mean loss after 10 steps: {:.4}", curves.mean.last().unwrap());
    Ok(())
}
