//! Task distributions and their losses.
//!
//! A [`Task`] owns its data, an initial parameter vector, and knows how to
//! evaluate training and validation losses for a flat parameter tensor.

use std::path::Path;

use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{Activation, Architecture};
use crate::rng::{self, Rng};

/// Condition number of `X^T X` above which a shifted family is resampled.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    /// `||X theta - y||^2`, used for both training and validation.
    LeastSquares { x: Array, y: Array },
    /// Mean-squared error of a network on separate train/validation sets.
    Regression {
        arch: Architecture,
        train_x: Array,
        train_y: Array,
        val_x: Array,
        val_y: Array,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub seed: u64,
    pub problem: Problem,
    /// Initial inner-loop parameters.
    pub init: Array,
}

impl Task {
    /// Length of the parameter vector.
    pub fn dim(&self) -> usize {
        self.init.len()
    }

    pub fn train_loss(&self, theta: &Tensor) -> Result<Tensor> {
        match &self.problem {
            Problem::LeastSquares { x, y } => least_squares_loss(x, y, theta),
            Problem::Regression {
                arch,
                train_x,
                train_y,
                ..
            } => mse(
                &arch.forward(theta, &Tensor::constant(train_x.clone()))?,
                &Tensor::constant(train_y.clone()),
            ),
        }
    }

    pub fn val_loss(&self, theta: &Tensor) -> Result<Tensor> {
        match &self.problem {
            Problem::LeastSquares { x, y } => least_squares_loss(x, y, theta),
            Problem::Regression {
                arch, val_x, val_y, ..
            } => mse(
                &arch.forward(theta, &Tensor::constant(val_x.clone()))?,
                &Tensor::constant(val_y.clone()),
            ),
        }
    }

    /// Fresh initial parameters drawn the same way as at construction.
    pub fn sample_init(&self, seed: u64, init_std: f64) -> Array {
        match &self.problem {
            Problem::LeastSquares { .. } => gaussian_vector(&mut rng::stream(seed, 1), self.dim(), init_std),
            Problem::Regression { arch, .. } => arch.init_params(seed),
        }
    }
}

/// `||X theta - y||_2^2` on the graph.
pub fn least_squares_loss(x: &Array, y: &Array, theta: &Tensor) -> Result<Tensor> {
    Tensor::constant(x.clone())
        .matvec(theta)?
        .sub(&Tensor::constant(y.clone()))?
        .square()?
        .sum()
}

/// Mean of squared differences.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.shape() != target.shape() || pred.numel() == 0 {
        return Err(Error::Shape {
            op: "mse",
            shapes: vec![pred.shape().to_vec(), target.shape().to_vec()],
        });
    }
    pred.sub(target)?.square()?.mean()
}

fn gaussian_vector(r: &mut Rng, n: usize, std: f64) -> Array {
    if std == 0.0 {
        return Array::zeros(vec![n]);
    }
    let d = Normal::new(0.0, std).unwrap();
    Array::vector((0..n).map(|_| d.sample(r)).collect())
}

fn gaussian_matrix(r: &mut Rng, rows: usize, cols: usize) -> Array {
    let d = Normal::new(0.0, 1.0).unwrap();
    Array::matrix(rows, cols, (0..rows * cols).map(|_| d.sample(r)).collect()).unwrap()
}

fn uniform(r: &mut Rng, lo: f64, hi: f64) -> f64 {
    Uniform::new(lo, hi).unwrap().sample(r)
}

/// Random least-squares problem with square standard-normal `X` and `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsConfig {
    pub dim: usize,
    /// Standard deviation of the initial parameters (0 gives the origin).
    pub init_std: f64,
}

impl Default for LsConfig {
    fn default() -> Self {
        Self {
            dim: 20,
            init_std: 0.0,
        }
    }
}

pub fn sample_ls_task(dim: usize, seed: u64) -> Task {
    sample_ls_task_with(
        &LsConfig {
            dim,
            ..LsConfig::default()
        },
        0,
        seed,
    )
}

pub fn sample_ls_task_with(cfg: &LsConfig, id: usize, seed: u64) -> Task {
    let mut r = rng::stream(seed, 0);
    let x = gaussian_matrix(&mut r, cfg.dim, cfg.dim);
    let y = gaussian_vector(&mut r, cfg.dim, 1.0);
    let init = gaussian_vector(&mut rng::stream(seed, 1), cfg.dim, cfg.init_std);
    Task {
        id,
        seed,
        problem: Problem::LeastSquares { x, y },
        init,
    }
}

/// Tasks sharing `X` and `y` whose targets are shifted by `X Delta_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedLsFamily {
    pub x: Array,
    pub y: Array,
    pub deltas: Vec<Array>,
    pub inits: Vec<Array>,
    /// Unshifted least-squares solution `(X^T X)^{-1} X^T y`.
    pub theta_prime: Array,
    /// Common minimal loss.
    pub l_star: f64,
    pub seed: u64,
}

impl ShiftedLsFamily {
    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    /// Shifted target `y + X Delta`.
    pub fn target(&self, delta: &Array) -> Array {
        let shift = self.x.matvec(delta.data()).expect("delta shape");
        Array::vector(self.y.data().iter().zip(shift).map(|(a, b)| a + b).collect())
    }

    pub fn task_from(&self, id: usize, delta: &Array, init: &Array) -> Task {
        Task {
            id,
            seed: self.seed,
            problem: Problem::LeastSquares {
                x: self.x.clone(),
                y: self.target(delta),
            },
            init: init.clone(),
        }
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.deltas
            .iter()
            .zip(&self.inits)
            .enumerate()
            .map(|(i, (d, t))| self.task_from(i, d, t))
            .collect()
    }

    /// Minimizer of task `i`.
    pub fn optimum(&self, i: usize) -> Array {
        self.theta_prime
            .zip_map(&self.deltas[i], |a, b| a + b)
            .unwrap()
    }

    /// Offsets `theta_i^(1) - Delta_i - theta'`, one row per task.
    pub fn offsets(&self) -> Array {
        let p = self.dim();
        let mut data = Vec::with_capacity(self.len() * p);
        for (d, t) in self.deltas.iter().zip(&self.inits) {
            for j in 0..p {
                data.push(t.data()[j] - d.data()[j] - self.theta_prime.data()[j]);
            }
        }
        Array::matrix(self.len(), p, data).unwrap()
    }

    /// A task from the same family with a fresh shift and initial point.
    pub fn sample_target(&self, seed: u64) -> (Array, Array) {
        let mut r = rng::stream(seed, 7);
        let delta = gaussian_vector(&mut r, self.dim(), 1.0);
        let init = gaussian_vector(&mut r, self.dim(), 1.0);
        (delta, init)
    }
}

pub fn make_shifted_family(p: usize, n_tasks: usize, seed: u64) -> Result<ShiftedLsFamily> {
    make_shifted_family_rect(p, p, n_tasks, seed)
}

/// Shifted family with an `n_rows x p` feature matrix (`n_rows >= p`).
pub fn make_shifted_family_rect(
    n_rows: usize,
    p: usize,
    n_tasks: usize,
    seed: u64,
) -> Result<ShiftedLsFamily> {
    if p == 0 || n_rows < p {
        return Err(Error::InvalidArgument(format!(
            "need n_rows >= p >= 1, got n_rows={n_rows}, p={p}"
        )));
    }
    if n_tasks < p {
        return Err(Error::InvalidArgument(format!(
            "n_tasks ({n_tasks}) must be at least p ({p})"
        )));
    }
    let mut r = rng::stream(seed, 0);
    let mut condition = f64::INFINITY;
    for _ in 0..100 {
        let x = gaussian_matrix(&mut r, n_rows, p);
        let y = gaussian_vector(&mut r, n_rows, 1.0);
        let gram = linalg::gram(&x);
        condition = linalg::condition_number(&gram);
        if condition > MAX_GRAM_CONDITION {
            continue;
        }
        let xty = x.transpose()?.matvec(y.data())?;
        let theta_prime = linalg::solve(&gram, &Array::matrix(p, 1, xty)?)?.reshaped(vec![p])?;
        let residual: Vec<f64> = x
            .matvec(theta_prime.data())?
            .iter()
            .zip(y.data())
            .map(|(a, b)| a - b)
            .collect();
        let l_star = residual.iter().map(|v| v * v).sum();
        let deltas = (0..n_tasks).map(|_| gaussian_vector(&mut r, p, 1.0)).collect();
        let inits = (0..n_tasks).map(|_| gaussian_vector(&mut r, p, 1.0)).collect();
        return Ok(ShiftedLsFamily {
            x,
            y,
            deltas,
            inits,
            theta_prime,
            l_star,
            seed,
        });
    }
    Err(Error::Singular { condition })
}

/// One Beverton-Holt generation, `R0 n / (K + n)`.
pub fn beverton_holt(r0: f64, k: f64, n: f64) -> Result<f64> {
    let denom = k + n;
    if denom == 0.0 {
        return Err(Error::InvalidArgument("K + n = 0".into()));
    }
    Ok(r0 * n / denom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SysIdConfig {
    pub n_train: usize,
    pub n_val: usize,
    /// Standard deviation of the additive disturbance on training targets.
    pub noise_std: f64,
    /// Also perturb validation targets.
    pub noisy_validation: bool,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
}

impl Default for SysIdConfig {
    fn default() -> Self {
        Self {
            n_train: 500,
            n_val: 100,
            noise_std: 0.1,
            noisy_validation: false,
            layer_dims: vec![1, 5, 5, 1],
            activation: Activation::Tanh,
        }
    }
}

/// Parameters drawn for one system-identification task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BevertonHolt {
    pub r0: f64,
    pub k: f64,
}

pub fn sample_sysid_task(seed: u64) -> Result<Task> {
    sample_sysid_task_with(&SysIdConfig::default(), 0, seed).map(|(t, _)| t)
}

pub fn sample_sysid_task_with(cfg: &SysIdConfig, id: usize, seed: u64) -> Result<(Task, BevertonHolt)> {
    let mut r = rng::stream(seed, 0);
    let sys = BevertonHolt {
        r0: uniform(&mut r, 1.0, 2.0),
        k: uniform(&mut r, 1.0, 2.0),
    };
    let noise = if cfg.noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.noise_std).unwrap())
    } else {
        None
    };
    let mut draw = |count: usize, noisy: bool| -> Result<(Array, Array)> {
        let mut xs = Vec::with_capacity(count);
        let mut ys = Vec::with_capacity(count);
        for _ in 0..count {
            let n = uniform(&mut r, 0.0, 10.0);
            let d = match (&noise, noisy) {
                (Some(dist), true) => dist.sample(&mut r),
                _ => 0.0,
            };
            xs.push(n);
            ys.push(beverton_holt(sys.r0, sys.k, n)? + d);
        }
        Ok((Array::matrix(count, 1, xs)?, Array::matrix(count, 1, ys)?))
    };
    let (train_x, train_y) = draw(cfg.n_train, true)?;
    let (val_x, val_y) = draw(cfg.n_val, cfg.noisy_validation)?;
    let arch = Architecture::new(cfg.layer_dims.clone(), cfg.activation)?;
    let init = arch.init_params(rng::derive(seed, 1));
    Ok((
        Task {
            id,
            seed,
            problem: Problem::Regression {
                arch,
                train_x,
                train_y,
                val_x,
                val_y,
            },
            init,
        },
        sys,
    ))
}

/// `a cos(b x) exp(-c |x|)`.
pub fn smooth_target(a: f64, b: f64, c: f64, x: f64) -> f64 {
    a * (b * x).cos() * (-c * x.abs()).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpConfig {
    pub n_train: usize,
    pub n_val: usize,
    /// Inputs are drawn uniformly from `[-input_range, input_range)`.
    pub input_range: f64,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self {
            n_train: 500,
            n_val: 100,
            input_range: 5.0,
            layer_dims: vec![1, 10, 10, 1],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothFunction {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn sample_interp_task(seed: u64) -> Result<Task> {
    sample_interp_task_with(&InterpConfig::default(), 0, seed).map(|(t, _)| t)
}

pub fn sample_interp_task_with(cfg: &InterpConfig, id: usize, seed: u64) -> Result<(Task, SmoothFunction)> {
    let mut r = rng::stream(seed, 0);
    let f = SmoothFunction {
        a: uniform(&mut r, 0.0, 1.0),
        b: uniform(&mut r, 0.0, 1.0),
        c: uniform(&mut r, 0.0, 1.0),
    };
    let mut draw = |count: usize| -> Result<(Array, Array)> {
        let xs: Vec<f64> = (0..count)
            .map(|_| uniform(&mut r, -cfg.input_range, cfg.input_range))
            .collect();
        let ys = xs.iter().map(|&x| smooth_target(f.a, f.b, f.c, x)).collect();
        Ok((Array::matrix(count, 1, xs)?, Array::matrix(count, 1, ys)?))
    };
    let (train_x, train_y) = draw(cfg.n_train)?;
    let (val_x, val_y) = draw(cfg.n_val)?;
    let arch = Architecture::new(cfg.layer_dims.clone(), cfg.activation)?;
    let init = arch.init_params(rng::derive(seed, 1));
    Ok((
        Task {
            id,
            seed,
            problem: Problem::Regression {
                arch,
                train_x,
                train_y,
                val_x,
                val_y,
            },
            init,
        },
        f,
    ))
}

/// Tasks written to disk for reproducibility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDataset {
    pub experiment: String,
    pub seed: u64,
    pub hyperparameters: serde_json::Value,
    pub tasks: Vec<Task>,
}

impl TaskDataset {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{backward, Graph};

    #[test]
    fn ls_loss_at_exact_solution_is_zero() {
        let task = sample_ls_task(6, 3);
        let Problem::LeastSquares { x, y } = &task.problem else { unreachable!() };
        let theta = linalg::solve(x, &Array::matrix(6, 1, y.data().to_vec()).unwrap())
            .unwrap()
            .reshaped(vec![6])
            .unwrap();
        assert!(task.train_loss(&Tensor::constant(theta)).unwrap().item() < 1e-8);
        let at_zero = task.train_loss(&Tensor::constant(Array::zeros(vec![6]))).unwrap().item();
        let y2: f64 = y.data().iter().map(|v| v * v).sum();
        assert!((at_zero - y2).abs() < 1e-12);
    }

    #[test]
    fn ls_loss_matches_explicit_sum() {
        let task = sample_ls_task(4, 7);
        let Problem::LeastSquares { x, y } = &task.problem else { unreachable!() };
        let theta = [0.3, -1.2, 0.8, 2.0];
        let mut expect = 0.0;
        for i in 0..4 {
            let r: f64 = (0..4).map(|j| x.get2(i, j) * theta[j]).sum::<f64>() - y.data()[i];
            expect += r * r;
        }
        let got = task.val_loss(&Tensor::vector(theta.to_vec())).unwrap().item();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn tasks_are_seed_deterministic() {
        assert_eq!(sample_ls_task(5, 42), sample_ls_task(5, 42));
        assert_ne!(sample_ls_task(5, 42), sample_ls_task(5, 43));
        assert_eq!(sample_sysid_task(1).unwrap(), sample_sysid_task(1).unwrap());
        assert_eq!(sample_interp_task(1).unwrap(), sample_interp_task(1).unwrap());
        assert_eq!(make_shifted_family(3, 4, 9).unwrap(), make_shifted_family(3, 4, 9).unwrap());
    }

    #[test]
    fn shifted_family_floor_and_stationarity() {
        for (rows, seed) in [(4, 1u64), (9, 2)] {
            let fam = make_shifted_family_rect(rows, 4, 6, seed).unwrap();
            if rows == 4 {
                assert!(fam.l_star.abs() < 1e-8);
            } else {
                assert!(fam.l_star > 0.0);
            }
            for (i, task) in fam.tasks().iter().enumerate() {
                let g = Graph::new();
                let th = g.leaf(fam.optimum(i));
                let loss = task.train_loss(&th).unwrap();
                assert!((loss.item() - fam.l_star).abs() < 1e-10);
                let grad = backward(&loss, &[&th], false).unwrap().remove(0);
                assert!(grad.value().norm2() < 1e-8);
            }
        }
    }

    #[test]
    fn shifted_family_offsets_span() {
        let fam = make_shifted_family(5, 5, 11).unwrap();
        assert_eq!(linalg::rank(&fam.offsets(), 1e-10), 5);
        assert!(make_shifted_family(5, 4, 11).is_err());
    }

    #[test]
    fn beverton_holt_examples() {
        assert_eq!(beverton_holt(2.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(beverton_holt(1.7, 1.3, 0.0).unwrap(), 0.0);
        assert!((beverton_holt(1.5, 1.2, 3.4).unwrap() - 1.5 * 3.4 / 4.6).abs() < 1e-15);
        assert!(beverton_holt(1.0, -2.0, 2.0).is_err());
        // Training target with disturbance d = 0.05.
        assert!((beverton_holt(2.0, 1.0, 1.0).unwrap() + 0.05 - 1.05).abs() < 1e-15);
    }

    #[test]
    fn sysid_sizes_and_noiseless_fit() {
        let cfg = SysIdConfig {
            noise_std: 0.0,
            ..SysIdConfig::default()
        };
        let (task, sys) = sample_sysid_task_with(&cfg, 0, 5).unwrap();
        let Problem::Regression { train_x, train_y, val_x, val_y, .. } = &task.problem else {
            unreachable!()
        };
        assert_eq!((train_x.rows(), val_x.rows()), (500, 100));
        assert!((1.0..2.0).contains(&sys.r0) && (1.0..2.0).contains(&sys.k));
        for (x, y) in train_x.data().iter().zip(train_y.data()).chain(val_x.data().iter().zip(val_y.data())) {
            assert!((0.0..10.0).contains(x));
            assert_eq!(beverton_holt(sys.r0, sys.k, *x).unwrap(), *y);
        }
        assert_eq!(task.dim(), 46);
    }

    #[test]
    fn sysid_validation_noiseless_by_default() {
        let (task, sys) = sample_sysid_task_with(&SysIdConfig::default(), 0, 8).unwrap();
        let Problem::Regression { train_x, train_y, val_x, val_y, .. } = &task.problem else {
            unreachable!()
        };
        let resid = |xs: &Array, ys: &Array| -> f64 {
            xs.data()
                .iter()
                .zip(ys.data())
                .map(|(x, y)| (beverton_holt(sys.r0, sys.k, *x).unwrap() - y).powi(2))
                .sum::<f64>()
                / xs.len() as f64
        };
        assert_eq!(resid(val_x, val_y), 0.0);
        let train_var = resid(train_x, train_y);
        assert!((0.005..0.02).contains(&train_var), "{train_var}");
    }

    #[test]
    fn smooth_target_examples() {
        assert_eq!(smooth_target(0.37, 0.9, 0.2, 0.0), 0.37);
        assert!((smooth_target(1.0, 0.0, 1.0, 2.0) - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(smooth_target(0.0, 0.5, 0.5, 1.3), 0.0);
        let (task, _) = sample_interp_task_with(&InterpConfig::default(), 0, 2).unwrap();
        assert_eq!(task.dim(), 141);
    }

    #[test]
    fn mse_examples() {
        let t = Tensor::vector(vec![0.4, -2.0]);
        assert_eq!(mse(&t, &t).unwrap().item(), 0.0);
        let v = mse(&Tensor::vector(vec![1.0, 2.0]), &Tensor::vector(vec![0.0, 0.0])).unwrap();
        assert_eq!(v.item(), 2.5);
        assert!(mse(&t, &Tensor::vector(vec![1.0])).is_err());
        let g = Graph::new();
        let pred = g.leaf(Array::vector(vec![1.0, -0.5, 3.0]));
        let target = Tensor::vector(vec![0.5, 0.5, 0.0]);
        let grad = backward(&mse(&pred, &target).unwrap(), &[&pred], false).unwrap().remove(0);
        for i in 0..3 {
            let expect = 2.0 * (pred.data()[i] - target.data()[i]) / 3.0;
            assert!((grad.data()[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn dataset_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.json");
        let ds = TaskDataset {
            experiment: "ls".into(),
            seed: 4,
            hyperparameters: serde_json::json!({"dim": 3}),
            tasks: vec![sample_ls_task(3, 1), sample_sysid_task(2).unwrap()],
        };
        ds.save(&path).unwrap();
        assert_eq!(TaskDataset::load(&path).unwrap(), ds);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"x\": [\n"));
    }
}
