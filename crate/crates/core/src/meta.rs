//! Meta-training: unroll the inner loop on a graph, average the validation
//! loss over tasks, and step the rule's meta-parameters.
//!
//! Each task gets its own graph holding the meta-parameters as leaves, so
//! per-task unrolls are independent. Their gradients are reduced in task
//! index order, which keeps runs bit-reproducible.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::autodiff::{backward, Graph, Tensor};
use crate::baselines::{BaselineConfig, BaselineKind, BaselineState};
use crate::dco::{
    init_dco_params, initial_state, normalize_gradient, rule_step, BoundParams, DcoParams, FrozenDco,
    RuleKind, StepOptions,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::rule::{mean_and_stderr, run_curve, UpdateRule};
use crate::tasks::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaConfig {
    /// Inner horizon `T`.
    pub inner_steps: usize,
    /// Meta epochs `M`.
    pub meta_epochs: usize,
    pub rule: RuleKind,
    /// Initial rule mimics gradient descent with this rate.
    pub mimic_lr: f64,
    pub meta_opt: BaselineConfig,
    /// Tasks per meta-update; `None` uses all of them.
    pub minibatch: Option<usize>,
    /// Redraw each task's initial parameters every epoch.
    pub reinit_inner: bool,
    /// Standard deviation used when redrawing least-squares initial points.
    pub reinit_std: f64,
    pub step: StepOptions,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            inner_steps: 1,
            meta_epochs: 20,
            rule: RuleKind::Dcogd,
            mimic_lr: 1.0,
            meta_opt: BaselineConfig::new(BaselineKind::Rmsprop, 1e-2),
            minibatch: None,
            reinit_inner: false,
            reinit_std: 1.0,
            step: StepOptions::default(),
            seed: 0,
        }
    }
}

impl MetaConfig {
    /// Checks the invariants that do not depend on the task set.
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(Error::Config("inner_steps must be at least 1".into()));
        }
        if self.meta_epochs == 0 {
            return Err(Error::Config("meta_epochs must be at least 1".into()));
        }
        if self.minibatch == Some(0) {
            return Err(Error::Config("minibatch must be at least 1".into()));
        }
        if !(self.mimic_lr > 0.0) {
            return Err(Error::Config("mimic_lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MetaRunState {
    pub params: DcoParams,
    pub meta_opt: BaselineState,
    /// `l_total` of each completed epoch, evaluated before that epoch's update.
    pub history: Vec<f64>,
    /// Current initial parameters per task.
    pub inits: Vec<Array>,
}

impl MetaRunState {
    pub fn new(params: DcoParams, meta_opt: BaselineConfig, tasks: &[Task]) -> Self {
        Self {
            params,
            meta_opt: BaselineState::new(meta_opt),
            history: Vec::new(),
            inits: tasks.iter().map(|t| t.init.clone()).collect(),
        }
    }

    pub fn epochs(&self) -> usize {
        self.history.len()
    }
}

pub struct Unroll {
    pub theta: Tensor,
    pub state: Option<Tensor>,
    /// Training loss at each of the `T` pre-step iterates.
    pub train_losses: Vec<f64>,
}

/// Runs `steps` rule applications from `theta1` with every inner gradient
/// recorded, so the result is differentiable with respect to `params`.
pub fn inner_unroll(
    graph: &Graph,
    task: &Task,
    params: &BoundParams<'_>,
    theta1: &Array,
    s1: Option<&Tensor>,
    steps: usize,
    options: &StepOptions,
) -> Result<Unroll> {
    if steps == 0 {
        return Err(Error::InvalidArgument("inner horizon must be at least 1".into()));
    }
    let mut theta = graph.leaf(theta1.clone());
    let mut state = s1.cloned();
    let mut losses = Vec::with_capacity(steps);
    for t in 1..=steps {
        let loss = task.train_loss(&theta)?;
        if !loss.item().is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite training loss at inner step {t} of task {}",
                task.id
            )));
        }
        losses.push(loss.item());
        let g = backward(&loss, &[&theta], true)?.remove(0);
        let g = if options.normalize {
            normalize_gradient(&g, options.detach_norm)?
        } else {
            g
        };
        if t == 1 && state.is_none() {
            state = initial_state(params.kind, options.momentum_init, &g);
        }
        let (next, s) = rule_step(params, &theta, state.as_ref(), &g, options.solve)?;
        theta = next;
        state = s;
    }
    Ok(Unroll {
        theta,
        state,
        train_losses: losses,
    })
}

/// Validation loss after the unroll and its gradient with respect to each
/// meta-parameter array.
pub fn task_hypergradient(
    task: &Task,
    params: &DcoParams,
    theta1: &Array,
    steps: usize,
    options: &StepOptions,
) -> Result<(f64, Vec<Array>)> {
    let graph = Graph::new();
    let leaves: Vec<Tensor> = params.arrays().into_iter().map(|a| graph.leaf(a.clone())).collect();
    let bound = BoundParams {
        kind: params.kind(),
        tensors: &leaves,
    };
    let unroll = inner_unroll(&graph, task, &bound, theta1, None, steps, options)?;
    let val = task.val_loss(&unroll.theta)?;
    let refs: Vec<&Tensor> = leaves.iter().collect();
    let grads = backward(&val, &refs, false)?;
    Ok((val.item(), grads.into_iter().map(|g| g.to_array()).collect()))
}

/// `l_total` over the selected tasks and its gradient, reduced in index order.
pub fn meta_objective(
    tasks: &[Task],
    indices: &[usize],
    inits: &[Array],
    params: &DcoParams,
    steps: usize,
    options: &StepOptions,
) -> Result<(f64, Array)> {
    let n = indices.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; params.num_params()];
    for &i in indices {
        let (val, grads) = task_hypergradient(&tasks[i], params, &inits[i], steps, options)?;
        total += val / n;
        for (acc, g) in grad.iter_mut().zip(grads.iter().flat_map(|a| a.data().iter())) {
            *acc += g / n;
        }
    }
    Ok((total, Array::vector(grad)))
}

/// One meta-update on the tasks at `indices`; returns that batch's `l_total`.
pub fn meta_update(
    tasks: &[Task],
    indices: &[usize],
    state: &mut MetaRunState,
    config: &MetaConfig,
) -> Result<f64> {
    let (total, grad) = meta_objective(
        tasks,
        indices,
        &state.inits,
        &state.params,
        config.inner_steps,
        &config.step,
    )?;
    if !total.is_finite() || !grad.is_finite() {
        return Err(Error::Divergence(format!(
            "l_total non-finite at meta epoch {}",
            state.history.len()
        )));
    }
    let flat = state.meta_opt.apply(&state.params.flatten(), &grad)?;
    state.params = state.params.unflatten(&flat)?;
    state.history.push(total);
    Ok(total)
}

/// `k` distinct task indices drawn uniformly, in increasing order.
pub fn sample_minibatch(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "minibatch size {k} outside 1..={n}"
        )));
    }
    let mut idx = index::sample(&mut rng::stream(seed, 0), n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// One meta-update on a random minibatch of `k` tasks.
pub fn meta_step_minibatch(
    tasks: &[Task],
    state: &mut MetaRunState,
    config: &MetaConfig,
    k: usize,
    seed: u64,
) -> Result<DcoParams> {
    let idx = sample_minibatch(tasks.len(), k, seed)?;
    meta_update(tasks, &idx, state, config)?;
    Ok(state.params.clone())
}

/// Meta-trains from the rule's gradient-descent-mimicking initialization.
pub fn meta_train(tasks: &[Task], config: &MetaConfig) -> Result<MetaRunState> {
    let p = tasks
        .first()
        .ok_or_else(|| Error::InvalidArgument("meta-training needs at least one task".into()))?
        .dim();
    let params = init_dco_params(config.rule, p, config.mimic_lr)?;
    meta_train_from(tasks, config, params, |_, _| {})
}

/// Meta-trains from explicit initial parameters, calling `on_epoch(k, l_total)`
/// after each epoch.
pub fn meta_train_from(
    tasks: &[Task],
    config: &MetaConfig,
    params: DcoParams,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<MetaRunState> {
    if config.inner_steps == 0 {
        return Err(Error::Config("inner_steps must be at least 1".into()));
    }
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("meta-training needs at least one task".into()));
    }
    if let Some(k) = config.minibatch {
        if k == 0 || k > tasks.len() {
            return Err(Error::Config(format!(
                "minibatch size {k} outside 1..={}",
                tasks.len()
            )));
        }
    }
    if let Some(t) = tasks.iter().find(|t| t.dim() != params.dim()) {
        return Err(Error::Shape {
            op: "meta-train",
            shapes: vec![vec![t.dim()], vec![params.dim()]],
        });
    }
    let mut state = MetaRunState::new(params, config.meta_opt.clone(), tasks);
    let all: Vec<usize> = (0..tasks.len()).collect();
    for epoch in 0..config.meta_epochs {
        if config.reinit_inner && epoch > 0 {
            for (i, task) in tasks.iter().enumerate() {
                let seed = rng::derive(config.seed, (epoch * tasks.len() + i) as u64);
                state.inits[i] = task.sample_init(seed, config.reinit_std);
            }
        }
        let total = match config.minibatch {
            Some(k) if k < tasks.len() => {
                let idx = sample_minibatch(tasks.len(), k, rng::derive(config.seed, 1_000_000 + epoch as u64))?;
                meta_update(tasks, &idx, &mut state, config)?
            }
            _ => meta_update(tasks, &all, &mut state, config)?,
        };
        on_epoch(epoch, total);
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalCurves {
    pub label: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub per_task: Vec<Vec<f64>>,
}

/// Runs `rule` for `budget` steps on every task with nothing recorded.
pub fn evaluate(rule: &mut dyn UpdateRule, tasks: &[Task], budget: usize) -> Result<EvalCurves> {
    if budget == 0 {
        return Err(Error::InvalidArgument("evaluation budget must be at least 1".into()));
    }
    let per_task = tasks
        .iter()
        .map(|t| run_curve(rule, t, budget))
        .collect::<Result<Vec<_>>>()?;
    let (mean, stderr) = mean_and_stderr(&per_task);
    Ok(EvalCurves {
        label: rule.label(),
        mean,
        stderr,
        per_task,
    })
}

/// [`evaluate`] for a DCO rule with frozen meta-parameters.
pub fn evaluate_dco(
    params: &DcoParams,
    options: &StepOptions,
    tasks: &[Task],
    budget: usize,
) -> Result<EvalCurves> {
    evaluate(&mut FrozenDco::new(params.clone(), *options), tasks, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dco::{dcogd_step, MomentumInit, SolvePath};
    use crate::rule::{loss_and_grad, val_loss};
    use crate::tasks::{make_shifted_family, sample_ls_task, LsConfig, sample_ls_task_with};

    fn gd_meta(lr: f64) -> BaselineConfig {
        BaselineConfig::new(BaselineKind::Sgd, lr)
    }

    #[test]
    fn one_step_identity_b() {
        let task = sample_ls_task_with(&LsConfig { dim: 4, init_std: 1.0 }, 0, 3);
        let graph = Graph::new();
        let b = graph.leaf(Array::eye(4));
        let bound = BoundParams { kind: RuleKind::Dcogd, tensors: std::slice::from_ref(&b) };
        let out = inner_unroll(&graph, &task, &bound, &task.init, None, 1, &StepOptions::default()).unwrap();
        let (_, g) = loss_and_grad(&task, &task.init).unwrap();
        let n = g.norm2();
        for i in 0..4 {
            assert!((out.theta.data()[i] - (task.init.data()[i] - g.data()[i] / n)).abs() < 1e-14);
        }
    }

    #[test]
    fn two_step_unroll_matches_manual() {
        let task = sample_ls_task_with(&LsConfig { dim: 3, init_std: 1.0 }, 0, 5);
        let lambda = Array::vector(vec![1.5, 2.0, 0.8]);
        let m = Array::vector(vec![0.3, 0.9, 0.5]);
        let graph = Graph::new();
        let leaves = [graph.leaf(lambda.clone()), graph.leaf(m.clone())];
        let bound = BoundParams { kind: RuleKind::Dcom, tensors: &leaves };
        let out = inner_unroll(&graph, &task, &bound, &task.init, None, 2, &StepOptions::default()).unwrap();
        // Manual: normalized gradients, zero initial history.
        let mut theta = task.init.data().to_vec();
        let mut s = vec![0.0; 3];
        for _ in 0..2 {
            let (_, g) = loss_and_grad(&task, &Array::vector(theta.clone())).unwrap();
            let n = g.norm2();
            for j in 0..3 {
                let gh = g.data()[j] / n;
                s[j] = m.data()[j] * gh + (1.0 - m.data()[j]) * s[j];
                theta[j] -= s[j] / (lambda.data()[j] * lambda.data()[j]);
            }
        }
        for j in 0..3 {
            assert!((out.theta.data()[j] - theta[j]).abs() < 1e-12);
        }
        assert_eq!(out.train_losses.len(), 2);
    }

    #[test]
    fn optimal_start_stays_put() {
        let fam = make_shifted_family(3, 3, 2).unwrap();
        let mut task = fam.tasks().remove(0);
        task.init = fam.optimum(0);
        let (_, g) = loss_and_grad(&task, &task.init).unwrap();
        assert!(g.norm2() < 1e-10);
        let graph = Graph::new();
        let b = graph.leaf(Array::eye(3));
        let bound = BoundParams { kind: RuleKind::Dcogd, tensors: std::slice::from_ref(&b) };
        let out = inner_unroll(&graph, &task, &bound, &task.init, None, 3, &StepOptions::raw()).unwrap();
        for j in 0..3 {
            assert!((out.theta.data()[j] - task.init.data()[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_epochs_leave_params_unchanged() {
        let tasks: Vec<Task> = (0..3).map(|i| sample_ls_task(3, i)).collect();
        let config = MetaConfig { meta_epochs: 0, ..MetaConfig::default() };
        let init = init_dco_params(RuleKind::Dcog, 3, 0.1).unwrap();
        let state = meta_train_from(&tasks, &config, init.clone(), |_, _| {}).unwrap();
        assert!(state.history.is_empty());
        assert_eq!(state.params, init);
    }

    #[test]
    fn shifted_family_loss_decreases_under_gd() {
        let fam = make_shifted_family(3, 5, 4).unwrap();
        let tasks = fam.tasks();
        let config = MetaConfig {
            meta_epochs: 40,
            rule: RuleKind::Dcogd,
            mimic_lr: 0.01,
            meta_opt: gd_meta(1e-4),
            step: StepOptions::raw(),
            ..MetaConfig::default()
        };
        let state = meta_train(&tasks, &config).unwrap();
        assert!(state.history.windows(2).all(|w| w[1] < w[0]), "{:?}", state.history);
    }

    fn fd_hypergradient(tasks: &[Task], params: &DcoParams, steps: usize, opts: &StepOptions, h: f64) -> Array {
        let idx: Vec<usize> = (0..tasks.len()).collect();
        let inits: Vec<Array> = tasks.iter().map(|t| t.init.clone()).collect();
        let flat = params.flatten();
        let f = |v: &Array| {
            let p = params.unflatten(v).unwrap();
            idx.iter()
                .map(|&i| {
                    // Forward-only unroll with frozen parameters.
                    let mut rule = FrozenDco::new(p.clone(), *opts);
                    rule.reset(tasks[i].dim());
                    let mut theta = inits[i].clone();
                    for _ in 0..steps {
                        let (_, g) = loss_and_grad(&tasks[i], &theta).unwrap();
                        theta = rule.step(&theta, &g).unwrap();
                    }
                    val_loss(&tasks[i], &theta).unwrap()
                })
                .sum::<f64>()
                / idx.len() as f64
        };
        Array::vector(
            (0..flat.len())
                .map(|j| {
                    let mut a = flat.clone();
                    let mut b = flat.clone();
                    a.data_mut()[j] += h;
                    b.data_mut()[j] -= h;
                    (f(&a) - f(&b)) / (2.0 * h)
                })
                .collect(),
        )
    }

    #[test]
    fn hypergradient_matches_finite_differences() {
        let fam = make_shifted_family(3, 4, 8).unwrap();
        let tasks = fam.tasks();
        let idx: Vec<usize> = (0..tasks.len()).collect();
        let inits: Vec<Array> = tasks.iter().map(|t| t.init.clone()).collect();
        for kind in RuleKind::ALL {
            for opts in [StepOptions::raw(), StepOptions::default()] {
                let params = init_dco_params(kind, 3, 0.02).unwrap();
                for steps in 1..=3 {
                    let (_, grad) = meta_objective(&tasks, &idx, &inits, &params, steps, &opts).unwrap();
                    let fd = fd_hypergradient(&tasks, &params, steps, &opts, 1e-6);
                    for (a, n) in grad.data().iter().zip(fd.data()) {
                        assert!(
                            (a - n).abs() <= 1e-5 * a.abs().max(n.abs()).max(1.0),
                            "{kind:?} T={steps}: {a} vs {n}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn solve_paths_give_same_hypergradient() {
        let tasks: Vec<Task> = (0..2).map(|i| sample_ls_task_with(&LsConfig { dim: 3, init_std: 1.0 }, i, i as u64)).collect();
        let idx = [0, 1];
        let inits: Vec<Array> = tasks.iter().map(|t| t.init.clone()).collect();
        for kind in RuleKind::ALL {
            let params = init_dco_params(kind, 3, 0.1).unwrap();
            let closed = StepOptions { momentum_init: MomentumInit::Zero, ..StepOptions::default() };
            let qp = StepOptions { solve: SolvePath::Qp, ..closed };
            let (la, ga) = meta_objective(&tasks, &idx, &inits, &params, 2, &closed).unwrap();
            let (lb, gb) = meta_objective(&tasks, &idx, &inits, &params, 2, &qp).unwrap();
            assert!((la - lb).abs() < 1e-10);
            for (a, b) in ga.data().iter().zip(gb.data()) {
                assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn full_minibatch_equals_full_batch() {
        let tasks: Vec<Task> = (0..4).map(|i| sample_ls_task_with(&LsConfig { dim: 3, init_std: 1.0 }, i, 10 + i as u64)).collect();
        let config = MetaConfig { rule: RuleKind::Dcog, mimic_lr: 0.1, meta_epochs: 1, ..MetaConfig::default() };
        let full = meta_train(&tasks, &config).unwrap();
        let mut state = MetaRunState::new(init_dco_params(RuleKind::Dcog, 3, 0.1).unwrap(), config.meta_opt.clone(), &tasks);
        let params = meta_step_minibatch(&tasks, &mut state, &config, 4, 99).unwrap();
        assert_eq!(params, full.params);
        assert_eq!(state.history, full.history);

        let mut again = MetaRunState::new(init_dco_params(RuleKind::Dcog, 3, 0.1).unwrap(), config.meta_opt.clone(), &tasks);
        let mut other = again.clone();
        assert_eq!(
            meta_step_minibatch(&tasks, &mut again, &config, 2, 5).unwrap(),
            meta_step_minibatch(&tasks, &mut other, &config, 2, 5).unwrap()
        );
        assert!(meta_step_minibatch(&tasks, &mut other, &config, 5, 5).is_err());
        assert!(meta_step_minibatch(&tasks, &mut other, &config, 0, 5).is_err());
    }

    #[test]
    fn singleton_gradients_average_to_full() {
        let tasks: Vec<Task> = (0..4).map(|i| sample_ls_task_with(&LsConfig { dim: 3, init_std: 1.0 }, i, 20 + i as u64)).collect();
        let inits: Vec<Array> = tasks.iter().map(|t| t.init.clone()).collect();
        let params = init_dco_params(RuleKind::Dcom, 3, 0.1).unwrap();
        let opts = StepOptions::default();
        let (_, full) = meta_objective(&tasks, &[0, 1, 2, 3], &inits, &params, 1, &opts).unwrap();
        let mut avg = vec![0.0; full.len()];
        for i in 0..4 {
            let (_, g) = meta_objective(&tasks, &[i], &inits, &params, 1, &opts).unwrap();
            avg.iter_mut().zip(g.data()).for_each(|(a, g)| *a += g / 4.0);
        }
        for (a, b) in avg.iter().zip(full.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn meta_train_is_bit_reproducible() {
        let tasks: Vec<Task> = (0..5).map(|i| sample_ls_task_with(&LsConfig { dim: 4, init_std: 1.0 }, i, i as u64)).collect();
        let config = MetaConfig {
            rule: RuleKind::Dcom,
            meta_epochs: 4,
            mimic_lr: 0.1,
            minibatch: Some(3),
            reinit_inner: true,
            seed: 17,
            ..MetaConfig::default()
        };
        let a = meta_train(&tasks, &config).unwrap();
        let b = meta_train(&tasks, &config).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.history), bits(&b.history));
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn history_is_recorded_before_update() {
        let tasks: Vec<Task> = (0..3).map(|i| sample_ls_task_with(&LsConfig { dim: 3, init_std: 1.0 }, i, i as u64)).collect();
        let config = MetaConfig { rule: RuleKind::Dcogd, mimic_lr: 0.05, meta_epochs: 3, ..MetaConfig::default() };
        let params0 = init_dco_params(RuleKind::Dcogd, 3, 0.05).unwrap();
        let inits: Vec<Array> = tasks.iter().map(|t| t.init.clone()).collect();
        let (l0, _) = meta_objective(&tasks, &[0, 1, 2], &inits, &params0, 1, &config.step).unwrap();
        let state = meta_train(&tasks, &config).unwrap();
        assert_eq!(state.history[0], l0);
        assert_eq!(state.history.len(), 3);
    }

    #[test]
    fn evaluate_contract() {
        let tasks: Vec<Task> = (0..3).map(|i| sample_ls_task_with(&LsConfig { dim: 4, init_std: 1.0 }, i, i as u64)).collect();
        let params = init_dco_params(RuleKind::Dcogd, 4, 1.0).unwrap();
        let curves = evaluate_dco(&params, &StepOptions::default(), &tasks, 7).unwrap();
        assert_eq!(curves.mean.len(), 8);
        assert_eq!(curves.per_task.len(), 3);
        // Identity B is normalized gradient descent with unit step.
        let task = &tasks[1];
        let mut theta = task.init.clone();
        for k in 1..=7 {
            let (_, g) = loss_and_grad(task, &theta).unwrap();
            let n = g.norm2();
            theta = dcogd_step(&Tensor::constant(theta), &Tensor::constant(g.map(|v| v / n)), &Tensor::constant(Array::eye(4)))
                .unwrap()
                .to_array();
            assert!((curves.per_task[1][k] - val_loss(task, &theta).unwrap()).abs() < 1e-10);
        }
        assert!(evaluate_dco(&params, &StepOptions::default(), &tasks, 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MetaConfig::default().validate().is_ok());
        assert!(MetaConfig { inner_steps: 0, ..MetaConfig::default() }.validate().is_err());
        assert!(MetaConfig { minibatch: Some(0), ..MetaConfig::default() }.validate().is_err());
        let tasks: Vec<Task> = (0..2).map(|i| sample_ls_task(3, i)).collect();
        let bad = MetaConfig { minibatch: Some(3), ..MetaConfig::default() };
        assert!(meta_train(&tasks, &bad).is_err());
    }
}
