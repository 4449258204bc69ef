//! Checks of the linear-convergence result for DCOGD on a shifted
//! least-squares family: closed-form optimum, gradient formula, span
//! condition, and a GD meta-training run with a fitted rate.
//!
//! Everything here uses raw inner gradients. The normalized path used by
//! the experiments is not covered by the result.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::autodiff::Tensor;
use crate::baselines::{BaselineConfig, BaselineKind};
use crate::dco::{DcoParams, RuleKind, StepOptions};
use crate::error::{Error, Result};
use crate::linalg;
use crate::meta::{meta_objective, meta_update, MetaConfig, MetaRunState};
use crate::rng;
use crate::tasks::{least_squares_loss, make_shifted_family, ShiftedLsFamily, Task};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Gaps below this are treated as converged and left out of the rate fit.
pub const GAP_FLOOR: f64 = 1e-12;
/// Meta-steps each stability-scan candidate must survive.
pub const SCAN_STEPS: usize = 50;

pub const DEFAULT_ETA_GRID: [f64; 19] = [
    1.0, 5e-1, 2e-1, 1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4, 5e-5, 2e-5, 1e-5,
    5e-6, 2e-6, 1e-6,
];

/// `B* = (X^T X)^{-1} / 2`, from `p` linear solves.
pub fn closed_form_bstar(x: &Array) -> Result<Array> {
    let gram = linalg::gram(x);
    let p = gram.rows();
    let half = Array::eye(p).map(|v| 0.5 * v);
    linalg::solve(&gram, &half)
}

/// `2 X^T X (theta - Delta) - 2 X^T y`.
pub fn shifted_ls_grad(theta: &Array, delta: &Array, x: &Array, y: &Array) -> Result<Array> {
    let diff = theta.zip_map(delta, |a, b| a - b)?;
    let xd = x.matvec(diff.data())?;
    let r: Vec<f64> = xd.iter().zip(y.data()).map(|(a, b)| a - b).collect();
    let g = x.transpose()?.matvec(&r)?;
    Ok(Array::vector(g.into_iter().map(|v| 2.0 * v).collect()))
}

/// Target loss after one raw-gradient step `theta - B g`.
pub fn one_step_target_loss(b: &Array, target: &Task, theta1: &Array) -> Result<f64> {
    let crate::tasks::Problem::LeastSquares { x, y } = &target.problem else {
        return Err(Error::InvalidArgument("target task must be least squares".into()));
    };
    // Shifted targets are y + X Delta, so the plain LS gradient is the formula above.
    let g = shifted_ls_grad(theta1, &Array::zeros(vec![theta1.len()]), x, y)?;
    let bg = b.matvec(g.data())?;
    let theta2 = Array::vector(theta1.data().iter().zip(bg).map(|(t, s)| t - s).collect());
    Ok(least_squares_loss(x, y, &Tensor::constant(theta2))?.item())
}

/// Mean one-step loss over the family's tasks, computed directly.
pub fn l_total(family: &ShiftedLsFamily, b: &Array) -> Result<f64> {
    let mut total = 0.0;
    for task in family.tasks() {
        total += one_step_target_loss(b, &task, &task.init)?;
    }
    Ok(total / family.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanVerdict {
    pub rank: usize,
    pub dim: usize,
    pub passed: bool,
}

/// Numerical rank of the stacked offsets `theta_i^(1) - Delta_i - theta'`.
///
/// The tolerance is relative to the larger of the top singular value and the
/// size of the vectors the offsets are formed from, so cancellation noise in
/// an all-zero offset set does not count as rank.
pub fn span_condition(family: &ShiftedLsFamily) -> SpanVerdict {
    let scale = family
        .inits
        .iter()
        .chain(&family.deltas)
        .chain(std::iter::once(&family.theta_prime))
        .map(Array::norm2)
        .fold(0.0, f64::max);
    span_with_scale(&family.offsets(), family.dim(), scale)
}

pub fn span_of(rows: &Array, dim: usize) -> SpanVerdict {
    span_with_scale(rows, dim, 0.0)
}

fn span_with_scale(rows: &Array, dim: usize, scale: f64) -> SpanVerdict {
    let s = linalg::singular_values(rows);
    let top = s.first().copied().unwrap_or(0.0).max(scale);
    let rank = s.iter().filter(|&&v| top > 0.0 && v > RANK_TOL * top).count();
    SpanVerdict {
        rank,
        dim,
        passed: rank == dim,
    }
}

fn gd_config(eta: f64) -> MetaConfig {
    MetaConfig {
        inner_steps: 1,
        rule: RuleKind::Dcogd,
        meta_opt: BaselineConfig::new(BaselineKind::Sgd, eta),
        step: StepOptions::raw(),
        ..MetaConfig::default()
    }
}

fn initial_b(p: usize) -> DcoParams {
    DcoParams::Dcogd {
        b: Array::zeros(vec![p, p]),
    }
}

/// Largest `eta` in the descending grid for which [`SCAN_STEPS`] GD
/// meta-steps keep `l_total` finite and non-increasing.
pub fn stability_scan(family: &ShiftedLsFamily, grid: &[f64]) -> Result<f64> {
    if grid.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument("eta grid must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eta grid must be strictly descending".into()));
    }
    for &eta in grid {
        if is_stable(family, eta, SCAN_STEPS)? {
            return Ok(eta);
        }
    }
    Err(Error::Divergence(format!(
        "no stable meta step size in grid down to {:e}",
        grid.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Whether `steps` GD meta-steps at `eta` keep `l_total` finite and non-increasing.
pub fn is_stable(family: &ShiftedLsFamily, eta: f64, steps: usize) -> Result<bool> {
    let tasks = family.tasks();
    let all: Vec<usize> = (0..tasks.len()).collect();
    let config = gd_config(eta);
    let mut state = MetaRunState::new(initial_b(family.dim()), config.meta_opt.clone(), &tasks);
    for _ in 0..steps {
        match meta_update(&tasks, &all, &mut state, &config) {
            Ok(_) => {}
            Err(Error::Divergence(_)) => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    let (last, _) = meta_objective(&tasks, &all, &state.inits, &state.params, 1, &config.step)?;
    let mut h = state.history.clone();
    h.push(last);
    Ok(h.iter().all(|v| v.is_finite()) && h.windows(2).all(|w| w[1] <= w[0]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub epsilon_hat: f64,
    pub points: usize,
}

/// OLS of `ln(gap)` on `k` over the last half of the series, skipping gaps
/// at or below [`GAP_FLOOR`]. When the tail has hit the floor, the last half
/// of the above-floor prefix is used instead.
pub fn fit_rate(gaps: &[f64]) -> Option<RateFit> {
    let pick = |lo: usize, hi: usize| -> Vec<(f64, f64)> {
        (lo..hi)
            .filter(|&k| gaps[k] > GAP_FLOOR)
            .map(|k| (k as f64, gaps[k].ln()))
            .collect()
    };
    let mut pts = pick(gaps.len() / 2, gaps.len());
    if pts.len() < 2 {
        let end = gaps.iter().position(|&g| g <= GAP_FLOOR).unwrap_or(gaps.len());
        pts = pick(end / 2, end);
    }
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(RateFit {
        slope,
        intercept: my - slope * mx,
        epsilon_hat: 1.0 - slope.exp(),
        points: pts.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremRunReport {
    pub p: usize,
    pub n_tasks: usize,
    pub seed: u64,
    pub eta: f64,
    pub l_star: f64,
    /// `l_target^(k) - l*` for `k = 0..=k_max`.
    pub target_gap: Vec<f64>,
    /// `||B^(k) - B*||_F` for `k = 0..=k_max`.
    pub b_frobenius_gap: Vec<f64>,
    pub l_total: Vec<f64>,
    pub span: SpanVerdict,
    pub rate: Option<RateFit>,
}

impl TheoremRunReport {
    pub fn final_target_gap(&self) -> f64 {
        *self.target_gap.last().unwrap()
    }

    pub fn final_b_gap(&self) -> f64 {
        *self.b_frobenius_gap.last().unwrap()
    }

    /// `||B - B*||_F` is non-increasing over the second half of the run.
    pub fn b_gap_eventually_decreasing(&self) -> bool {
        let tail = &self.b_frobenius_gap[self.b_frobenius_gap.len() / 2..];
        tail.windows(2).all(|w| w[1] <= w[0]) && tail.first() > tail.last()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "k,target_gap,b_frobenius_gap")?;
        for (k, (t, b)) in self.target_gap.iter().zip(&self.b_frobenius_gap).enumerate() {
            writeln!(out, "{k},{t:e},{b:e}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "p": self.p,
            "n_tasks": self.n_tasks,
            "seed": self.seed,
            "eta": self.eta,
            "k_max": self.target_gap.len() - 1,
            "l_star": self.l_star,
            "epsilon_hat": self.rate.as_ref().map(|r| r.epsilon_hat),
            "slope": self.rate.as_ref().map(|r| r.slope),
            "span_rank": self.span.rank,
            "span_passed": self.span.passed,
            "final_target_gap": self.final_target_gap(),
            "final_b_frobenius_gap": self.final_b_gap(),
            "b_gap_eventually_decreasing": self.b_gap_eventually_decreasing(),
        })
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.summary())?)?;
        Ok(())
    }
}

/// Builds a `p`-dimensional family of `n_tasks` tasks and runs GD
/// meta-training of DCOGD from `B = 0`. `eta = None` picks the step size by
/// [`stability_scan`] over [`DEFAULT_ETA_GRID`].
pub fn run_theorem_experiment(
    p: usize,
    n_tasks: usize,
    eta: Option<f64>,
    k_max: usize,
    seed: u64,
) -> Result<TheoremRunReport> {
    let family = make_shifted_family(p, n_tasks, seed)?;
    run_on_family(&family, eta, k_max)
}

pub fn run_on_family(family: &ShiftedLsFamily, eta: Option<f64>, k_max: usize) -> Result<TheoremRunReport> {
    let span = span_condition(family);
    if !span.passed {
        return Err(Error::SpanCondition {
            rank: span.rank,
            dim: span.dim,
        });
    }
    let eta = match eta {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(Error::InvalidArgument(format!("eta must be positive, got {e}"))),
        None => stability_scan(family, &DEFAULT_ETA_GRID)?,
    };
    let bstar = closed_form_bstar(&family.x)?;
    let (delta, theta1) = family.sample_target(rng::derive(family.seed, 0x7a));
    let target = family.task_from(family.len(), &delta, &theta1);

    let tasks = family.tasks();
    let all: Vec<usize> = (0..tasks.len()).collect();
    let config = gd_config(eta);
    let mut state = MetaRunState::new(initial_b(family.dim()), config.meta_opt.clone(), &tasks);
    let mut target_gap = Vec::with_capacity(k_max + 1);
    let mut b_gap = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let DcoParams::Dcogd { b } = &state.params else { unreachable!() };
        let gap = one_step_target_loss(b, &target, &theta1)? - family.l_star;
        let bf = b.zip_map(&bstar, |a, c| a - c)?.norm2();
        if !gap.is_finite() || !bf.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite iterate at meta step {k}; try a smaller eta than {eta:e}"
            )));
        }
        target_gap.push(gap);
        b_gap.push(bf);
        if k < k_max {
            meta_update(&tasks, &all, &mut state, &config).map_err(|e| match e {
                Error::Divergence(m) => Error::Divergence(format!("{m}; try a smaller eta than {eta:e}")),
                other => other,
            })?;
        }
    }
    // Clamp the square-X floor: l* is zero up to rounding there.
    let abs_gaps: Vec<f64> = target_gap.iter().map(|g| g.max(0.0)).collect();
    let rate = fit_rate(&abs_gaps);
    Ok(TheoremRunReport {
        p: family.dim(),
        n_tasks: family.len(),
        seed: family.seed,
        eta,
        l_star: family.l_star,
        target_gap,
        b_frobenius_gap: b_gap,
        l_total: state.history,
        span,
        rate,
    })
}

/// `l_total(t B1 + (1-t) B2)` and `t l_total(B1) + (1-t) l_total(B2)`.
pub fn convexity_witness(family: &ShiftedLsFamily, b1: &Array, b2: &Array, t: f64) -> Result<(f64, f64)> {
    let mix = b1.zip_map(b2, |a, b| t * a + (1.0 - t) * b)?;
    Ok((l_total(family, &mix)?, t * l_total(family, b1)? + (1.0 - t) * l_total(family, b2)?))
}

/// Central second difference of `l_total` at `b` along `v`. Exact for the
/// quadratic objective up to rounding.
pub fn directional_curvature(family: &ShiftedLsFamily, b: &Array, v: &Array, h: f64) -> Result<f64> {
    let plus = b.zip_map(v, |a, d| a + h * d)?;
    let minus = b.zip_map(v, |a, d| a - h * d)?;
    Ok((l_total(family, &plus)? - 2.0 * l_total(family, b)? + l_total(family, &minus)?) / (h * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::loss_and_grad;
    use crate::tasks::make_shifted_family_rect;

    #[test]
    fn bstar_examples() {
        let b = closed_form_bstar(&Array::eye(2)).unwrap();
        assert_eq!(b, Array::eye(2).map(|v| 0.5 * v));
        let b = closed_form_bstar(&Array::eye(3).map(|v| 2.0 * v)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.125 } else { 0.0 };
                assert!((b.get2(i, j) - want).abs() < 1e-15);
            }
        }
        let fam = make_shifted_family(4, 4, 3).unwrap();
        let b = closed_form_bstar(&fam.x).unwrap();
        let two_g = linalg::gram(&fam.x).map(|v| 2.0 * v);
        let prod = b.matmul(&two_g).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get2(i, j) - want).abs() < 1e-10);
            }
        }
        let singular = Array::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(closed_form_bstar(&singular), Err(Error::Singular { .. })));
    }

    #[test]
    fn gradient_formula_examples() {
        let fam = make_shifted_family(4, 4, 11).unwrap();
        let opt = fam.optimum(2);
        let g = shifted_ls_grad(&opt, &fam.deltas[2], &fam.x, &fam.y).unwrap();
        assert!(g.norm2() < 1e-9);

        let theta = Array::vector(vec![1.0, -2.0, 0.5]);
        let g = shifted_ls_grad(&theta, &Array::zeros(vec![3]), &Array::eye(3), &Array::zeros(vec![3])).unwrap();
        assert_eq!(g.data(), &[2.0, -4.0, 1.0]);

        let task = &fam.tasks()[1];
        let (_, auto) = loss_and_grad(task, &task.init).unwrap();
        let formula = shifted_ls_grad(&task.init, &fam.deltas[1], &fam.x, &fam.y).unwrap();
        for (a, b) in auto.data().iter().zip(formula.data()) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn one_step_loss_examples() {
        let fam = make_shifted_family_rect(6, 3, 3, 5).unwrap();
        let bstar = closed_form_bstar(&fam.x).unwrap();
        let (delta, init) = fam.sample_target(1);
        let target = fam.task_from(9, &delta, &init);
        let l = one_step_target_loss(&bstar, &target, &init).unwrap();
        assert!((l - fam.l_star).abs() <= 1e-8 * fam.l_star);

        let zero = one_step_target_loss(&Array::zeros(vec![3, 3]), &target, &init).unwrap();
        let (l1, g) = loss_and_grad(&target, &init).unwrap();
        assert!((zero - l1).abs() <= 1e-12 * l1);

        let b = Array::from_rows(&[vec![0.1, 0.0, 0.02], vec![0.0, 0.05, 0.0], vec![0.01, 0.0, 0.07]]).unwrap();
        let step = b.matvec(g.data()).unwrap();
        let theta2 = Array::vector(init.data().iter().zip(step).map(|(t, s)| t - s).collect());
        let manual = crate::rule::val_loss(&target, &theta2).unwrap();
        assert!((one_step_target_loss(&b, &target, &init).unwrap() - manual).abs() <= 1e-12 * manual);
    }

    #[test]
    fn span_examples() {
        let basis = Array::eye(4);
        assert_eq!(span_of(&basis, 4), SpanVerdict { rank: 4, dim: 4, passed: true });

        let mut fam = make_shifted_family(3, 3, 2).unwrap();
        fam.inits = (0..3).map(|i| fam.optimum(i)).collect();
        let v = span_condition(&fam);
        assert_eq!((v.rank, v.passed), (0, false));
        assert!(matches!(run_on_family(&fam, Some(1e-3), 5), Err(Error::SpanCondition { .. })));

        assert!(span_condition(&make_shifted_family(5, 5, 9).unwrap()).passed);
    }

    #[test]
    fn rate_fit_recovers_geometric_decay() {
        let gaps: Vec<f64> = (0..100).map(|k| 3.0 * 0.9f64.powi(k)).collect();
        let fit = fit_rate(&gaps).unwrap();
        assert!((fit.epsilon_hat - 0.1).abs() < 1e-12);
        assert_eq!(fit.points, 50);
        // Tail at the floor falls back to the above-floor prefix.
        let mut gaps: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k)).collect();
        gaps.extend(std::iter::repeat_n(0.0, 100));
        let fit = fit_rate(&gaps).unwrap();
        assert!((fit.epsilon_hat - 0.5).abs() < 1e-12);
        assert!(fit_rate(&[0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn convexity_and_curvature_witnesses() {
        let fam = make_shifted_family(3, 4, 21).unwrap();
        let mut r = rng::stream(5, 0);
        use rand_distr::{Distribution, StandardNormal};
        let mut rand_b = || {
            Array::matrix(3, 3, (0..9).map(|_| { let z: f64 = StandardNormal.sample(&mut r); 0.1 * z }).collect::<Vec<f64>>()).unwrap()
        };
        for _ in 0..10 {
            let (b1, b2) = (rand_b(), rand_b());
            let (lhs, rhs) = convexity_witness(&fam, &b1, &b2, 0.3).unwrap();
            assert!(lhs <= rhs + 1e-10);
            let v = rand_b();
            assert!(directional_curvature(&fam, &b1, &v, 1e-2).unwrap() > 0.0);
        }
    }

    #[test]
    fn bstar_gives_one_step_optimality_on_fresh_targets() {
        let fam = make_shifted_family(4, 5, 8).unwrap();
        let bstar = closed_form_bstar(&fam.x).unwrap();
        let params = DcoParams::Dcogd { b: bstar };
        for s in 0..5 {
            let (d, t) = fam.sample_target(100 + s);
            let task = fam.task_from(0, &d, &t);
            let curves = crate::meta::evaluate_dco(&params, &StepOptions::raw(), &[task], 1).unwrap();
            assert!((curves.mean[1] - fam.l_star).abs() < 1e-8);
        }
    }

    #[test]
    fn scan_returns_stable_eta() {
        let fam = make_shifted_family(3, 4, 1).unwrap();
        let eta = stability_scan(&fam, &DEFAULT_ETA_GRID).unwrap();
        assert!(is_stable(&fam, eta / 3.0, SCAN_STEPS).unwrap());
        assert!(stability_scan(&fam, &[1e-3, 0.0]).is_err());
        assert!(stability_scan(&fam, &[1e-3, 1e-2]).is_err());
    }

    #[test]
    fn short_run_shrinks_gap() {
        let r = run_theorem_experiment(3, 4, None, 200, 1).unwrap();
        assert_eq!(r.target_gap.len(), 201);
        assert_eq!(r.b_frobenius_gap.len(), 201);
        assert!(r.final_b_gap() < r.b_frobenius_gap[0]);
        assert!(r.final_target_gap() < r.target_gap[0]);
        let dir = tempfile::tempdir().unwrap();
        r.write_csv(&dir.path().join("t.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text.lines().count(), 202);
        assert!(text.starts_with("k,target_gap,b_frobenius_gap\n"));
    }
}
