//! The inner-loop update-rule interface shared by baselines and frozen DCO
//! rules, and the curve runner used for evaluation and tuning.

use crate::array::Array;
use crate::autodiff::{backward, Graph, Tensor};
use crate::error::{Error, Result};
use crate::tasks::Task;

/// Maps `(theta, state, g)` to `(theta', state')` with the state held inside.
pub trait UpdateRule {
    fn label(&self) -> String;

    /// Clears per-task state before a new run of dimension `dim`.
    fn reset(&mut self, dim: usize);

    fn step(&mut self, theta: &Array, grad: &Array) -> Result<Array>;
}

/// Training-loss value and gradient at `theta`.
pub fn loss_and_grad(task: &Task, theta: &Array) -> Result<(f64, Array)> {
    let graph = Graph::new();
    let leaf = graph.leaf(theta.clone());
    let loss = task.train_loss(&leaf)?;
    let grad = backward(&loss, &[&leaf], false)?.remove(0);
    Ok((loss.item(), grad.to_array()))
}

pub fn val_loss(task: &Task, theta: &Array) -> Result<f64> {
    Ok(task.val_loss(&Tensor::constant(theta.clone()))?.item())
}

/// Validation loss after each of `budget` steps from the task's initial
/// point; `budget + 1` entries including iteration 0.
pub fn run_curve(rule: &mut dyn UpdateRule, task: &Task, budget: usize) -> Result<Vec<f64>> {
    rule.reset(task.dim());
    let mut theta = task.init.clone();
    let mut curve = Vec::with_capacity(budget + 1);
    curve.push(val_loss(task, &theta)?);
    for t in 0..budget {
        let (_, grad) = loss_and_grad(task, &theta)?;
        if !grad.is_finite() {
            return Err(Error::Divergence(format!(
                "{}: non-finite gradient at iteration {t}",
                rule.label()
            )));
        }
        theta = rule.step(&theta, &grad)?;
        let v = val_loss(task, &theta)?;
        if !v.is_finite() {
            return Err(Error::Divergence(format!(
                "{}: non-finite validation loss at iteration {}",
                rule.label(),
                t + 1
            )));
        }
        curve.push(v);
    }
    Ok(curve)
}

/// Pointwise mean and standard error across curves of equal length.
pub fn mean_and_stderr(curves: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = curves.len() as f64;
    let len = curves.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for k in 0..len {
        let m = curves.iter().map(|c| c[k]).sum::<f64>() / n;
        mean[k] = m;
        if curves.len() > 1 {
            let var = curves.iter().map(|c| (c[k] - m).powi(2)).sum::<f64>() / (n - 1.0);
            stderr[k] = (var / n).sqrt();
        }
    }
    (mean, stderr)
}
