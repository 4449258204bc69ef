//! Update rules defined as unconstrained quadratic programs.
//!
//! Each rule's next iterate is the minimizer of a strictly convex quadratic
//! in `theta`:
//!
//! * DCOG:  `g^T theta + 1/2 ||lambda * (theta - theta_t)||^2`
//! * DCOGD: `(B g)^T theta + 1/2 ||theta - theta_t||^2`
//! * DCOM:  `s'^T theta + 1/2 ||lambda * (theta - theta_t)||^2` with
//!   `s' = m * g + (1 - m) * s`
//!
//! Every rule can be evaluated either through its closed form or through
//! [`qp_step`], which assembles and solves the stationarity system. Both are
//! built from recorded tensor ops, so meta-parameters living on a graph
//! receive exact gradients through either path.

use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::autodiff::Tensor;
use crate::error::{ensure_finite, Error, Result};
use crate::rule::UpdateRule;

/// Minimum magnitude of a diagonal scaling entry.
pub const LAMBDA_FLOOR: f64 = 1e-6;

/// Gradients with norm at or below this are passed through unnormalized.
pub const NORMALIZE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Dcog,
    Dcogd,
    Dcom,
}

impl RuleKind {
    pub const ALL: [RuleKind; 3] = [RuleKind::Dcog, RuleKind::Dcogd, RuleKind::Dcom];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Dcog => "dcog",
            RuleKind::Dcogd => "dcogd",
            RuleKind::Dcom => "dcom",
        }
    }
}

impl std::str::FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dcog" => Ok(Self::Dcog),
            "dcogd" => Ok(Self::Dcogd),
            "dcom" => Ok(Self::Dcom),
            other => Err(Error::InvalidArgument(format!("unknown rule `{other}`"))),
        }
    }
}

/// Meta-parameters of one rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum DcoParams {
    Dcog { lambda: Array },
    Dcogd { b: Array },
    Dcom { lambda: Array, m: Array },
}

impl DcoParams {
    pub fn kind(&self) -> RuleKind {
        match self {
            DcoParams::Dcog { .. } => RuleKind::Dcog,
            DcoParams::Dcogd { .. } => RuleKind::Dcogd,
            DcoParams::Dcom { .. } => RuleKind::Dcom,
        }
    }

    /// Parameter dimension `p` the rule acts on.
    pub fn dim(&self) -> usize {
        match self {
            DcoParams::Dcog { lambda } | DcoParams::Dcom { lambda, .. } => lambda.len(),
            DcoParams::Dcogd { b } => b.rows(),
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        match self {
            DcoParams::Dcog { .. } => &["lambda"],
            DcoParams::Dcogd { .. } => &["b"],
            DcoParams::Dcom { .. } => &["lambda", "m"],
        }
    }

    pub fn arrays(&self) -> Vec<&Array> {
        match self {
            DcoParams::Dcog { lambda } => vec![lambda],
            DcoParams::Dcogd { b } => vec![b],
            DcoParams::Dcom { lambda, m } => vec![lambda, m],
        }
    }

    /// Rebuilds parameters of the same kind from arrays in [`Self::arrays`] order.
    pub fn with_arrays(&self, mut arrays: Vec<Array>) -> Result<Self> {
        let expected = self.arrays();
        if arrays.len() != expected.len()
            || arrays.iter().zip(&expected).any(|(a, e)| a.shape() != e.shape())
        {
            return Err(Error::Shape {
                op: "dco-params",
                shapes: arrays.iter().map(|a| a.shape().to_vec()).collect(),
            });
        }
        Ok(match self {
            DcoParams::Dcog { .. } => DcoParams::Dcog {
                lambda: arrays.remove(0),
            },
            DcoParams::Dcogd { .. } => DcoParams::Dcogd { b: arrays.remove(0) },
            DcoParams::Dcom { .. } => {
                let lambda = arrays.remove(0);
                DcoParams::Dcom {
                    lambda,
                    m: arrays.remove(0),
                }
            }
        })
    }

    pub fn flatten(&self) -> Array {
        Array::vector(self.arrays().iter().flat_map(|a| a.data().iter().copied()).collect())
    }

    pub fn unflatten(&self, v: &Array) -> Result<Self> {
        let total: usize = self.arrays().iter().map(|a| a.len()).sum();
        if v.len() != total {
            return Err(Error::Shape {
                op: "dco-params",
                shapes: vec![v.shape().to_vec(), vec![total]],
            });
        }
        let mut offset = 0;
        let arrays = self
            .arrays()
            .iter()
            .map(|a| {
                let part = Array::new(a.shape().to_vec(), v.data()[offset..offset + a.len()].to_vec());
                offset += a.len();
                part
            })
            .collect::<Result<Vec<_>>>()?;
        self.with_arrays(arrays)
    }

    pub fn num_params(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }
}

/// Initial meta-parameters mimicking gradient descent with rate `mimic_lr`.
pub fn init_dco_params(kind: RuleKind, p: usize, mimic_lr: f64) -> Result<DcoParams> {
    if mimic_lr <= 0.0 || !mimic_lr.is_finite() {
        return Err(Error::InvalidArgument(format!("mimic_lr must be positive, got {mimic_lr}")));
    }
    let lambda = || Array::full(vec![p], 1.0 / mimic_lr.sqrt());
    Ok(match kind {
        RuleKind::Dcog => DcoParams::Dcog { lambda: lambda() },
        RuleKind::Dcogd => {
            let mut b = Array::eye(p);
            b.data_mut().iter_mut().for_each(|v| *v *= mimic_lr);
            DcoParams::Dcogd { b }
        }
        RuleKind::Dcom => DcoParams::Dcom {
            lambda: lambda(),
            m: Array::full(vec![p], 0.5),
        },
    })
}

/// Which evaluation of the quadratic program a step uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolvePath {
    #[default]
    ClosedForm,
    Qp,
}

/// Initial DCOM momentum history.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumInit {
    #[default]
    Zero,
    FirstGradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepOptions {
    /// Rescale inner gradients to unit l2 norm before the step.
    pub normalize: bool,
    /// Treat the norm as a constant when differentiating.
    pub detach_norm: bool,
    pub solve: SolvePath,
    pub momentum_init: MomentumInit,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            normalize: true,
            detach_norm: false,
            solve: SolvePath::ClosedForm,
            momentum_init: MomentumInit::Zero,
        }
    }
}

impl StepOptions {
    pub fn raw() -> Self {
        Self {
            normalize: false,
            ..Self::default()
        }
    }
}

/// `g / ||g||_2`, or `g` itself when the norm is at most [`NORMALIZE_EPS`].
pub fn normalize_gradient(g: &Tensor, detach_norm: bool) -> Result<Tensor> {
    ensure_finite(g.data(), || "inner gradient".into())?;
    let norm = g.value().norm2();
    if norm <= NORMALIZE_EPS {
        return Ok(g.clone());
    }
    if detach_norm {
        g.scale(1.0 / norm)
    } else {
        g.div(&g.l2_norm()?)
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.numel() != b.numel() {
        return Err(Error::Shape {
            op,
            shapes: vec![a.shape().to_vec(), b.shape().to_vec()],
        });
    }
    Ok(())
}

/// `theta - g / lambda^2` with `|lambda|` floored.
pub fn dcog_step(theta: &Tensor, g: &Tensor, lambda: &Tensor) -> Result<Tensor> {
    check_same("dcog", theta, g)?;
    check_same("dcog", theta, lambda)?;
    let rate = lambda.floor_magnitude(LAMBDA_FLOOR)?.square()?;
    theta.sub(&g.div(&rate)?)
}

/// `theta - B g`.
pub fn dcogd_step(theta: &Tensor, g: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same("dcogd", theta, g)?;
    let p = theta.numel();
    if b.shape() != [p, p] {
        return Err(Error::Shape {
            op: "dcogd",
            shapes: vec![b.shape().to_vec(), vec![p, p]],
        });
    }
    theta.sub(&b.matvec(g)?)
}

/// `s' = m * g + (1 - m) * s`, then a DCOG step along `s'`.
pub fn dcom_step(
    theta: &Tensor,
    s: &Tensor,
    g: &Tensor,
    lambda: &Tensor,
    m: &Tensor,
) -> Result<(Tensor, Tensor)> {
    check_same("dcom", theta, g)?;
    check_same("dcom", theta, s)?;
    check_same("dcom", theta, m)?;
    let s_next = dcom_history(s, g, m)?;
    Ok((dcog_step(theta, &s_next, lambda)?, s_next))
}

fn dcom_history(s: &Tensor, g: &Tensor, m: &Tensor) -> Result<Tensor> {
    m.mul(g)?.add(&m.neg()?.shift(1.0)?.mul(s)?)
}

/// Minimizer of `c^T theta + 1/2 ||d * (theta - theta_t)||^2`, found by
/// forming the diagonal stationarity system `diag(d^2) theta = d^2 * theta_t - c`
/// and solving it.
pub fn qp_step(theta: &Tensor, c: &Tensor, d: &Tensor) -> Result<Tensor> {
    check_same("qp", theta, c)?;
    check_same("qp", theta, d)?;
    if let Some(bad) = d.data().iter().find(|v| v.abs() < LAMBDA_FLOOR) {
        return Err(Error::InvalidArgument(format!(
            "qp: diagonal entry {bad:e} below floor {LAMBDA_FLOOR:e}"
        )));
    }
    let hessian = d.square()?;
    let rhs = hessian.mul(theta)?.sub(c)?;
    rhs.div(&hessian)
}

/// Parameters bound as tensors (graph leaves during meta-training).
pub struct BoundParams<'a> {
    pub kind: RuleKind,
    pub tensors: &'a [Tensor],
}

/// One rule application on an already preprocessed gradient.
pub fn rule_step(
    params: &BoundParams<'_>,
    theta: &Tensor,
    state: Option<&Tensor>,
    g: &Tensor,
    solve: SolvePath,
) -> Result<(Tensor, Option<Tensor>)> {
    let t = params.tensors;
    match (params.kind, solve) {
        (RuleKind::Dcog, SolvePath::ClosedForm) => Ok((dcog_step(theta, g, &t[0])?, None)),
        (RuleKind::Dcog, SolvePath::Qp) => {
            let d = t[0].floor_magnitude(LAMBDA_FLOOR)?;
            Ok((qp_step(theta, g, &d)?, None))
        }
        (RuleKind::Dcogd, SolvePath::ClosedForm) => Ok((dcogd_step(theta, g, &t[0])?, None)),
        (RuleKind::Dcogd, SolvePath::Qp) => {
            let ones = Tensor::constant(Array::ones(theta.shape().to_vec()));
            let c = t[0].matvec(g)?.reshape(theta.shape().to_vec())?;
            Ok((qp_step(theta, &c, &ones)?, None))
        }
        (RuleKind::Dcom, path) => {
            let zeros;
            let s = match state {
                Some(s) => s,
                None => {
                    zeros = Tensor::constant(Array::zeros(theta.shape().to_vec()));
                    &zeros
                }
            };
            match path {
                SolvePath::ClosedForm => {
                    let (next, s) = dcom_step(theta, s, g, &t[0], &t[1])?;
                    Ok((next, Some(s)))
                }
                SolvePath::Qp => {
                    check_same("dcom", theta, s)?;
                    let s_next = dcom_history(s, g, &t[1])?;
                    let d = t[0].floor_magnitude(LAMBDA_FLOOR)?;
                    Ok((qp_step(theta, &s_next, &d)?, Some(s_next)))
                }
            }
        }
    }
}

/// Initial optimizer state for a run whose first gradient is `g1`.
pub fn initial_state(kind: RuleKind, init: MomentumInit, g1: &Tensor) -> Option<Tensor> {
    match (kind, init) {
        (RuleKind::Dcom, MomentumInit::Zero) => {
            Some(Tensor::constant(Array::zeros(g1.shape().to_vec())))
        }
        (RuleKind::Dcom, MomentumInit::FirstGradient) => Some(g1.clone()),
        _ => None,
    }
}

/// A DCO rule with fixed meta-parameters, usable as an ordinary optimizer.
#[derive(Clone, Debug)]
pub struct FrozenDco {
    pub params: DcoParams,
    pub options: StepOptions,
    state: Option<Array>,
}

impl FrozenDco {
    pub fn new(params: DcoParams, options: StepOptions) -> Self {
        Self {
            params,
            options,
            state: None,
        }
    }
}

impl UpdateRule for FrozenDco {
    fn label(&self) -> String {
        self.params.kind().name().to_string()
    }

    fn reset(&mut self, _dim: usize) {
        self.state = None;
    }

    fn step(&mut self, theta: &Array, grad: &Array) -> Result<Array> {
        let tensors: Vec<Tensor> = self
            .params
            .arrays()
            .into_iter()
            .map(|a| Tensor::constant(a.clone()))
            .collect();
        let bound = BoundParams {
            kind: self.params.kind(),
            tensors: &tensors,
        };
        let g = Tensor::constant(grad.clone());
        let g = if self.options.normalize {
            normalize_gradient(&g, true)?
        } else {
            ensure_finite(grad.data(), || "inner gradient".into())?;
            g
        };
        let state = match self.state.take() {
            Some(s) => Some(Tensor::constant(s)),
            None => initial_state(bound.kind, self.options.momentum_init, &g),
        };
        let (next, s) = rule_step(
            &bound,
            &Tensor::constant(theta.clone()),
            state.as_ref(),
            &g,
            self.options.solve,
        )?;
        self.state = s.map(|s| s.to_array());
        Ok(next.to_array())
    }
}
