//! Classical first-order update rules and learning-rate tuning.
//!
//! These work on plain [`Array`]s and never touch a graph, which is what the
//! meta-level optimizer needs.

use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::error::{ensure_finite, Error, Result};
use crate::rule::{mean_and_stderr, run_curve, UpdateRule};
use crate::tasks::Task;

pub const DEFAULT_GRID: [f64; 8] = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Sgd,
    Momentum,
    Adam,
    Rmsprop,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Sgd => "sgd",
            BaselineKind::Momentum => "momentum",
            BaselineKind::Adam => "adam",
            BaselineKind::Rmsprop => "rmsprop",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" | "gd" => Ok(Self::Sgd),
            "momentum" => Ok(Self::Momentum),
            "adam" => Ok(Self::Adam),
            "rmsprop" => Ok(Self::Rmsprop),
            other => Err(Error::InvalidArgument(format!("unknown baseline `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub lr: f64,
    /// Momentum averaging.
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// RMSProp smoothing.
    pub alpha: f64,
    pub eps: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            kind: BaselineKind::Sgd,
            lr: 1e-2,
            beta: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            alpha: 0.99,
            eps: 1e-8,
        }
    }
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            ..Self::default()
        }
    }
}

/// `theta - lr g`, the minimizer of `g^T theta + 1/(2 lr) ||theta - theta_t||^2`.
pub fn sgd_step(theta: &Array, g: &Array, lr: f64) -> Result<Array> {
    ensure_finite(g.data(), || "sgd gradient".into())?;
    if lr <= 0.0 {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
    }
    theta.zip_map(g, |t, d| t - lr * d)
}

/// `s' = beta s + (1 - beta) g`, `theta' = theta - lr s'`.
pub fn momentum_step(theta: &Array, s: &Array, g: &Array, lr: f64, beta: f64) -> Result<(Array, Array)> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta must lie in [0, 1], got {beta}")));
    }
    ensure_finite(g.data(), || "momentum gradient".into())?;
    // Written as s + (1 - beta)(g - s) so a constant gradient is an exact
    // fixed point.
    let s_next = if beta == 0.0 {
        g.clone()
    } else {
        s.zip_map(g, |s, g| s + (1.0 - beta) * (g - s))?
    };
    let theta_next = theta.zip_map(&s_next, |t, s| t - lr * s)?;
    Ok((theta_next, s_next))
}

/// Per-run state of a baseline rule.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineState {
    pub config: BaselineConfig,
    /// Momentum history or Adam first moment.
    pub first: Option<Array>,
    /// Adam / RMSProp second moment.
    pub second: Option<Array>,
    pub steps: u64,
}

impl BaselineState {
    pub fn new(config: BaselineConfig) -> Self {
        Self {
            config,
            first: None,
            second: None,
            steps: 0,
        }
    }

    fn ensure_moments(&mut self, n: usize) {
        let shape = vec![n];
        if self.second.as_ref().is_none_or(|a| a.len() != n) {
            self.first = Some(Array::zeros(shape.clone()));
            self.second = Some(Array::zeros(shape));
        }
    }

    /// Bias-corrected Adam step.
    pub fn adam_step(&mut self, theta: &Array, g: &Array) -> Result<Array> {
        ensure_finite(g.data(), || "adam gradient".into())?;
        ensure_finite(theta.data(), || "adam parameters".into())?;
        let c = self.config.clone();
        self.ensure_moments(g.len());
        self.steps += 1;
        let m = self.first.as_mut().unwrap();
        let v = self.second.as_mut().unwrap();
        let t = self.steps as i32;
        let (bc1, bc2) = (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t));
        let mut out = theta.data().to_vec();
        for i in 0..out.len() {
            let gi = g.data()[i];
            let mi = c.beta1 * m.data()[i] + (1.0 - c.beta1) * gi;
            let vi = c.beta2 * v.data()[i] + (1.0 - c.beta2) * gi * gi;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            out[i] -= c.lr * (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
        }
        Array::new(theta.shape().to_vec(), out)
    }

    /// Running-mean-square RMSProp step (no centering, no momentum).
    pub fn rmsprop_step(&mut self, theta: &Array, g: &Array) -> Result<Array> {
        ensure_finite(g.data(), || "rmsprop gradient".into())?;
        ensure_finite(theta.data(), || "rmsprop parameters".into())?;
        let c = self.config.clone();
        self.ensure_moments(g.len());
        self.steps += 1;
        let v = self.second.as_mut().unwrap();
        let mut out = theta.data().to_vec();
        for i in 0..out.len() {
            let gi = g.data()[i];
            let vi = c.alpha * v.data()[i] + (1.0 - c.alpha) * gi * gi;
            v.data_mut()[i] = vi;
            out[i] -= c.lr * gi / (vi.sqrt() + c.eps);
        }
        Array::new(theta.shape().to_vec(), out)
    }

    /// Dispatches on the configured rule. Momentum starts its history at the
    /// first gradient.
    pub fn apply(&mut self, theta: &Array, g: &Array) -> Result<Array> {
        if theta.len() != g.len() {
            return Err(Error::Shape {
                op: self.config.kind.name(),
                shapes: vec![theta.shape().to_vec(), g.shape().to_vec()],
            });
        }
        match self.config.kind {
            BaselineKind::Sgd => {
                self.steps += 1;
                sgd_step(theta, g, self.config.lr)
            }
            BaselineKind::Momentum => {
                let s = self.first.take().unwrap_or_else(|| g.clone());
                let (next, s) = momentum_step(theta, &s, g, self.config.lr, self.config.beta)?;
                self.first = Some(s);
                self.steps += 1;
                Ok(next)
            }
            BaselineKind::Adam => self.adam_step(theta, g),
            BaselineKind::Rmsprop => self.rmsprop_step(theta, g),
        }
    }
}

impl UpdateRule for BaselineState {
    fn label(&self) -> String {
        self.config.kind.name().to_string()
    }

    fn reset(&mut self, _dim: usize) {
        self.first = None;
        self.second = None;
        self.steps = 0;
    }

    fn step(&mut self, theta: &Array, grad: &Array) -> Result<Array> {
        self.apply(theta, grad)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub rule: String,
    pub lr: f64,
    /// Mean final validation loss; infinite when the run diverged.
    pub final_val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub best_lr: f64,
    /// Mean validation curve at the best learning rate.
    pub curve: Vec<f64>,
    pub stderr: Vec<f64>,
    pub rows: Vec<TuneRow>,
}

/// Grid search over learning rates by mean final validation loss.
pub fn tune_learning_rate(
    base: &BaselineConfig,
    tasks: &[Task],
    grid: &[f64],
    budget: usize,
) -> Result<TuneResult> {
    if grid.is_empty() || tasks.is_empty() {
        return Err(Error::InvalidArgument("tuning needs a non-empty grid and task set".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64, Vec<f64>, Vec<f64>)> = None;
    for &lr in grid {
        let mut state = BaselineState::new(BaselineConfig { lr, ..base.clone() });
        let curves: Result<Vec<Vec<f64>>> = tasks
            .iter()
            .map(|t| run_curve(&mut state, t, budget))
            .collect();
        let (final_loss, mean, stderr) = match curves {
            Ok(c) => {
                let (mean, stderr) = mean_and_stderr(&c);
                (*mean.last().unwrap(), mean, stderr)
            }
            Err(Error::Divergence(_)) | Err(Error::NonFinite(_)) => (f64::INFINITY, vec![], vec![]),
            Err(e) => return Err(e),
        };
        let final_loss = if final_loss.is_finite() { final_loss } else { f64::INFINITY };
        rows.push(TuneRow {
            rule: base.kind.name().to_string(),
            lr,
            final_val_loss: final_loss,
        });
        if final_loss.is_finite() && best.as_ref().is_none_or(|b| final_loss < b.1) {
            best = Some((lr, final_loss, mean, stderr));
        }
    }
    match best {
        Some((best_lr, _, curve, stderr)) => Ok(TuneResult {
            best_lr,
            curve,
            stderr,
            rows,
        }),
        None => Err(Error::Divergence(format!(
            "{} diverged for every learning rate in {grid:?}",
            base.kind.name()
        ))),
    }
}

/// CSV rows `rule,lr,final_val_loss` with a header.
pub fn tune_rows_csv(rows: &[TuneRow]) -> String {
    let mut out = String::from("rule,lr,final_val_loss\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.rule, r.lr, r.final_val_loss));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Problem;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Array {
        Array::vector(x.to_vec())
    }

    #[test]
    fn sgd_examples() {
        assert_eq!(sgd_step(&v(&[1.0, 1.0]), &v(&[1.0, -1.0]), 0.1).unwrap(), v(&[0.9, 1.1]));
        assert_eq!(sgd_step(&v(&[3.0]), &v(&[0.0]), 0.5).unwrap(), v(&[3.0]));
        assert!(sgd_step(&v(&[1.0]), &v(&[f64::NAN]), 0.1).is_err());
    }

    #[test]
    fn sgd_is_argmin_of_linearized_objective() {
        // min_x g^T x + (lambda/2)||x - x_t||^2 by Newton on the dense
        // quadratic: Hessian lambda I, gradient at x_t is g.
        let theta = v(&[0.4, -1.3, 2.2]);
        let g = v(&[1.5, 0.2, -0.7]);
        for lr in [0.01, 0.3, 2.0] {
            let lambda = 1.0 / lr;
            let h = crate::linalg::to_matrix(&Array::eye(3)) * lambda;
            let rhs = crate::linalg::to_matrix(&Array::matrix(3, 1, g.data().to_vec()).unwrap());
            let dx = h.lu().solve(&rhs).unwrap();
            let oracle: Vec<f64> = (0..3).map(|i| theta.data()[i] - dx[i]).collect();
            let got = sgd_step(&theta, &g, lr).unwrap();
            for i in 0..3 {
                assert!((got.data()[i] - oracle[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn momentum_examples() {
        let theta = v(&[1.0, -2.0]);
        let g = v(&[0.5, 0.25]);
        let s = v(&[3.0, -1.0]);
        let (t0, s0) = momentum_step(&theta, &s, &g, 0.1, 0.0).unwrap();
        assert_eq!(s0, g);
        assert_eq!(t0, sgd_step(&theta, &g, 0.1).unwrap());
        let (t1, s1) = momentum_step(&theta, &s, &g, 0.1, 1.0).unwrap();
        assert_eq!(s1, s);
        assert_eq!(t1, sgd_step(&theta, &s, 0.1).unwrap());
        assert!(momentum_step(&theta, &s, &g, 0.1, 1.5).is_err());
    }

    #[test]
    fn momentum_two_step_trace() {
        let (lr, beta) = (0.1, 0.9);
        let mut st = BaselineState::new(BaselineConfig {
            beta,
            ..BaselineConfig::new(BaselineKind::Momentum, lr)
        });
        let g1 = v(&[1.0]);
        let g2 = v(&[-2.0]);
        let th1 = st.apply(&v(&[0.0]), &g1).unwrap();
        let th2 = st.apply(&th1, &g2).unwrap();
        // s1 = g1; s2 = 0.9 g1 + 0.1 g1 = g1; s3 = 0.9 s2 + 0.1 g2.
        let s2 = 1.0;
        let s3 = 0.9 * s2 + 0.1 * -2.0;
        assert!((th1.data()[0] + lr * s2).abs() < 1e-15);
        assert!((th2.data()[0] - (-lr * s2 - lr * s3)).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut st = BaselineState::new(BaselineConfig::new(BaselineKind::Adam, 0.1));
        let out = st.apply(&v(&[2.0]), &v(&[1.0])).unwrap();
        assert!((out.data()[0] - (2.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(st.steps, 1);
    }

    #[test]
    fn rmsprop_zero_gradient_no_move() {
        let mut st = BaselineState::new(BaselineConfig::new(BaselineKind::Rmsprop, 0.1));
        assert_eq!(st.apply(&v(&[2.0, -1.0]), &v(&[0.0, 0.0])).unwrap(), v(&[2.0, -1.0]));
        assert!(st.apply(&v(&[1.0]), &v(&[f64::INFINITY])).is_err());
    }

    /// Second, scalar-at-a-time implementation of the published recursions.
    fn reference_trace(kind: BaselineKind, grads: &[[f64; 2]], lr: f64) -> Vec<[f64; 2]> {
        let (b1, b2, alpha, eps) = (0.9f64, 0.999f64, 0.99f64, 1e-8);
        let mut theta = [0.5, -0.25];
        let mut m = [0.0; 2];
        let mut s = [0.0; 2];
        let mut out = vec![];
        for (t, g) in grads.iter().enumerate() {
            for i in 0..2 {
                match kind {
                    BaselineKind::Adam => {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        s[i] = b2 * s[i] + (1.0 - b2) * g[i] * g[i];
                        let mh = m[i] / (1.0 - b1.powi(t as i32 + 1));
                        let vh = s[i] / (1.0 - b2.powi(t as i32 + 1));
                        theta[i] -= lr * mh / (vh.sqrt() + eps);
                    }
                    BaselineKind::Rmsprop => {
                        s[i] = alpha * s[i] + (1.0 - alpha) * g[i] * g[i];
                        theta[i] -= lr * g[i] / (s[i].sqrt() + eps);
                    }
                    _ => unreachable!(),
                }
            }
            out.push(theta);
        }
        out
    }

    #[test]
    fn five_step_traces_match_reference() {
        let grads = [[1.0, -0.5], [0.3, 0.8], [-2.0, 0.1], [0.0, -0.4], [0.7, 0.7]];
        for kind in [BaselineKind::Adam, BaselineKind::Rmsprop] {
            let expect = reference_trace(kind, &grads, 0.05);
            let mut st = BaselineState::new(BaselineConfig::new(kind, 0.05));
            let mut theta = v(&[0.5, -0.25]);
            for (g, e) in grads.iter().zip(&expect) {
                theta = st.apply(&theta, &v(g)).unwrap();
                assert!((theta.data()[0] - e[0]).abs() < 1e-14);
                assert!((theta.data()[1] - e[1]).abs() < 1e-14);
            }
        }
    }

    fn quadratic_task() -> Task {
        Task {
            id: 0,
            seed: 0,
            problem: Problem::LeastSquares {
                x: Array::eye(1),
                y: v(&[0.0]),
            },
            init: v(&[1.0]),
        }
    }

    #[test]
    fn tuning_picks_contracting_rate() {
        let tasks = [quadratic_task()];
        let base = BaselineConfig::new(BaselineKind::Sgd, 1.0);
        let res = tune_learning_rate(&base, &tasks, &[0.1, 1.5], 20).unwrap();
        assert_eq!(res.best_lr, 0.1);
        assert_eq!(res.curve.len(), 21);
        let single = tune_learning_rate(&base, &tasks, &[0.3], 5).unwrap();
        assert_eq!(single.best_lr, 0.3);
        let again = tune_learning_rate(&base, &tasks, &[0.1, 1.5], 20).unwrap();
        assert_eq!(again, res);
        assert!(tune_rows_csv(&res.rows).starts_with("rule,lr,final_val_loss\nsgd,0.1,"));
    }

    #[test]
    fn tuning_reports_total_divergence() {
        let tasks = [quadratic_task()];
        let base = BaselineConfig::new(BaselineKind::Sgd, 1.0);
        let err = tune_learning_rate(&base, &tasks, &[1e200], 3).unwrap_err();
        assert!(err.to_string().contains("1e200"), "{err}");
    }

    proptest! {
        #[test]
        fn momentum_fixed_point(g in prop::collection::vec(-3.0f64..3.0, 3), beta in 0.0f64..=1.0, steps in 1usize..20) {
            let g = Array::vector(g);
            let mut s = g.clone();
            let mut theta = Array::zeros(vec![3]);
            for _ in 0..steps {
                let (t, s2) = momentum_step(&theta, &s, &g, 0.01, beta).unwrap();
                theta = t;
                s = s2;
            }
            prop_assert_eq!(s, g);
        }
    }
}
