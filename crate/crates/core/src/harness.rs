//! Run configuration, checkpoints, report emission and the command-line
//! entry point.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{tune_learning_rate, tune_rows_csv, BaselineConfig, BaselineKind, TuneRow, DEFAULT_GRID};
use crate::dco::{init_dco_params, DcoParams, RuleKind};
use crate::error::{Error, Result};
use crate::meta::{evaluate_dco, meta_train_from, MetaConfig};
use crate::models::Architecture;
use crate::rng;
use crate::tasks::{
    sample_interp_task_with, sample_ls_task_with, sample_sysid_task_with, InterpConfig, LsConfig, SysIdConfig,
    Task,
};
use crate::theorem::{run_theorem_experiment, TheoremRunReport};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Ls,
    Sysid,
    Interp,
    Theorem,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Ls => "ls",
            Experiment::Sysid => "sysid",
            Experiment::Interp => "interp",
            Experiment::Theorem => "theorem",
        }
    }

    pub fn default_train_tasks(self) -> usize {
        match self {
            Experiment::Ls => 100,
            Experiment::Sysid | Experiment::Interp => 20,
            Experiment::Theorem => 8,
        }
    }

    pub fn default_eval_tasks(self) -> usize {
        match self {
            Experiment::Ls | Experiment::Sysid => 100,
            Experiment::Interp => 10,
            Experiment::Theorem => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoremConfig {
    pub p: usize,
    pub n_tasks: usize,
    pub k_max: usize,
    /// Fixed meta step size; scanned when absent.
    pub eta: Option<f64>,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            p: 5,
            n_tasks: 8,
            k_max: 2000,
            eta: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Meta-training tasks; experiment default when absent.
    pub tasks: Option<usize>,
    /// Fresh evaluation tasks; experiment default when absent.
    pub eval_tasks: Option<usize>,
    pub eval_budget: usize,
    /// DCO rules to meta-train; experiment default when absent.
    pub rules: Option<Vec<RuleKind>>,
    pub baselines: Vec<BaselineKind>,
    pub grid: Vec<f64>,
    pub paper_scale: bool,
    pub ls: LsConfig,
    pub sysid: SysIdConfig,
    pub interp: InterpConfig,
    pub meta: MetaConfig,
    pub theorem: TheoremConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Ls,
            seed: 0,
            tasks: None,
            eval_tasks: None,
            eval_budget: 30,
            rules: None,
            baselines: vec![BaselineKind::Sgd, BaselineKind::Adam, BaselineKind::Rmsprop],
            grid: DEFAULT_GRID.to_vec(),
            paper_scale: false,
            ls: LsConfig::default(),
            sysid: SysIdConfig::default(),
            interp: InterpConfig::default(),
            meta: MetaConfig::default(),
            theorem: TheoremConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn for_experiment(experiment: Experiment) -> Self {
        Self {
            experiment,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn train_tasks(&self) -> usize {
        match (self.tasks, self.paper_scale) {
            (Some(n), _) => n,
            (None, true) if self.experiment != Experiment::Theorem => 100,
            (None, _) => self.experiment.default_train_tasks(),
        }
    }

    pub fn eval_task_count(&self) -> usize {
        self.eval_tasks.unwrap_or(self.experiment.default_eval_tasks())
    }

    /// Rules to meta-train. The full-matrix rule is left out of the
    /// interpolation experiment unless running at paper scale.
    pub fn rule_list(&self) -> Vec<RuleKind> {
        match &self.rules {
            Some(r) => r.clone(),
            None if self.experiment == Experiment::Interp && !self.paper_scale => {
                vec![RuleKind::Dcog, RuleKind::Dcom]
            }
            None => RuleKind::ALL.to_vec(),
        }
    }

    pub fn ls_dim(&self) -> usize {
        if self.paper_scale { 100 } else { self.ls.dim }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.meta.validate()?;
        if self.tasks == Some(0) {
            return bad("tasks must be at least 1".into());
        }
        if self.eval_tasks == Some(0) {
            return bad("eval_tasks must be at least 1".into());
        }
        if self.eval_budget == 0 {
            return bad("eval_budget must be at least 1".into());
        }
        if self.grid.is_empty() || self.grid.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return bad("grid must be a non-empty list of positive learning rates".into());
        }
        if let Some(k) = self.meta.minibatch {
            if k > self.train_tasks() {
                return bad(format!("minibatch {k} exceeds task count {}", self.train_tasks()));
            }
        }
        if matches!(&self.rules, Some(r) if r.is_empty()) {
            return bad("rules must not be empty".into());
        }
        match self.experiment {
            Experiment::Ls if self.ls_dim() == 0 => bad("ls.dim must be at least 1".into()),
            Experiment::Sysid => Architecture::new(self.sysid.layer_dims.clone(), self.sysid.activation)
                .map(|_| ())
                .map_err(|e| Error::Config(format!("sysid: {e}"))),
            Experiment::Interp => Architecture::new(self.interp.layer_dims.clone(), self.interp.activation)
                .map(|_| ())
                .map_err(|e| Error::Config(format!("interp: {e}"))),
            Experiment::Theorem => {
                let t = &self.theorem;
                if t.p == 0 || t.n_tasks < t.p {
                    bad(format!("theorem needs n_tasks >= p >= 1, got p={}, n_tasks={}", t.p, t.n_tasks))
                } else if matches!(t.eta, Some(e) if !(e > 0.0)) {
                    bad("theorem.eta must be positive".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, stream: u64, count: usize) -> Result<Vec<Task>> {
        let base = rng::derive(self.seed, stream);
        let ls = LsConfig {
            dim: self.ls_dim(),
            ..self.ls.clone()
        };
        (0..count)
            .map(|i| {
                let seed = rng::derive(base, i as u64);
                Ok(match self.experiment {
                    Experiment::Ls => sample_ls_task_with(&ls, i, seed),
                    Experiment::Sysid => sample_sysid_task_with(&self.sysid, i, seed)?.0,
                    Experiment::Interp => sample_interp_task_with(&self.interp, i, seed)?.0,
                    Experiment::Theorem => {
                        return Err(Error::Config("theorem runs do not sample task sets".into()));
                    }
                })
            })
            .collect()
    }

    pub fn training_tasks(&self) -> Result<Vec<Task>> {
        self.sample(1, self.train_tasks())
    }

    pub fn evaluation_tasks(&self) -> Result<Vec<Task>> {
        self.sample(2, self.eval_task_count())
    }

    pub fn meta_config(&self, rule: RuleKind) -> MetaConfig {
        MetaConfig {
            rule,
            seed: rng::derive(self.seed, 3),
            ..self.meta.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub rule: RuleKind,
    pub params: DcoParams,
    pub meta: MetaConfig,
    pub seed: u64,
    pub epochs: usize,
    pub history: Vec<f64>,
}

impl Checkpoint {
    pub fn new(params: DcoParams, meta: MetaConfig, seed: u64, history: Vec<f64>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            rule: params.kind(),
            params,
            meta,
            seed,
            epochs: history.len(),
            history,
        }
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(checkpoint)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
        field: "<document>".into(),
        reason: e.to_string(),
    })?;
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
        Some(v) => {
            return Err(Error::Checkpoint {
                field: "version".into(),
                reason: format!("expected {CHECKPOINT_VERSION}, found {v}"),
            })
        }
        None => {
            return Err(Error::Checkpoint {
                field: "version".into(),
                reason: "missing or not an integer".into(),
            })
        }
    }
    for field in ["rule", "params", "meta", "seed", "epochs", "history"] {
        if value.get(field).is_none() {
            return Err(Error::Checkpoint {
                field: field.into(),
                reason: "missing".into(),
            });
        }
    }
    let ck: Checkpoint = serde_json::from_value(value).map_err(|e| Error::Checkpoint {
        field: "<document>".into(),
        reason: e.to_string(),
    })?;
    if ck.params.kind() != ck.rule {
        return Err(Error::Checkpoint {
            field: "rule".into(),
            reason: format!("tag {} disagrees with params {}", ck.rule.name(), ck.params.kind().name()),
        });
    }
    ck.params.with_arrays(ck.params.arrays().into_iter().cloned().collect()).map_err(|e| {
        Error::Checkpoint {
            field: "params".into(),
            reason: e.to_string(),
        }
    })?;
    if ck.epochs != ck.history.len() {
        return Err(Error::Checkpoint {
            field: "epochs".into(),
            reason: format!("{} epochs but {} history entries", ck.epochs, ck.history.len()),
        });
    }
    Ok(ck)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub optimizer: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Tuned learning rate for baselines.
    pub lr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub series: Vec<Series>,
    pub checkpoints: Vec<Checkpoint>,
    pub tuning: Vec<TuneRow>,
}

impl ExperimentReport {
    pub fn get(&self, optimizer: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.optimizer == optimizer)
    }

    /// Baseline series with the lowest final loss.
    pub fn best_baseline(&self) -> Option<&Series> {
        self.series
            .iter()
            .filter(|s| s.lr.is_some())
            .min_by(|a, b| a.mean.last().unwrap().total_cmp(b.mean.last().unwrap()))
    }
}

/// Append-only run log in the output directory.
pub struct RunLog {
    file: Option<fs::File>,
}

impl RunLog {
    pub fn open(dir: Option<&Path>) -> Result<Self> {
        let file = match dir {
            Some(d) => Some(fs::OpenOptions::new().create(true).append(true).open(d.join("run.log"))?),
            None => None,
        };
        Ok(Self { file })
    }

    pub fn line(&mut self, msg: &str) {
        if let Some(f) = &mut self.file {
            let _ = writeln!(f, "{msg}");
        }
    }
}

pub fn meta_train_rule(config: &RunConfig, rule: RuleKind, tasks: &[Task], log: &mut RunLog) -> Result<Checkpoint> {
    let meta = config.meta_config(rule);
    let p = tasks
        .first()
        .ok_or_else(|| Error::Config("no training tasks".into()))?
        .dim();
    let init = init_dco_params(rule, p, meta.mimic_lr)?;
    log.line(&format!("meta-train {} p={p} tasks={} epochs={}", rule.name(), tasks.len(), meta.meta_epochs));
    let state = meta_train_from(tasks, &meta, init, |k, l| {
        log.line(&format!("  {} epoch {k} l_total {l:e}", rule.name()));
    })?;
    Ok(Checkpoint::new(state.params, meta, config.seed, state.history))
}

pub fn tune_baselines(
    config: &RunConfig,
    tasks: &[Task],
    log: &mut RunLog,
) -> Result<(Vec<Series>, Vec<TuneRow>)> {
    let mut series = Vec::new();
    let mut rows = Vec::new();
    for &kind in &config.baselines {
        let tuned = tune_learning_rate(&BaselineConfig::new(kind, config.grid[0]), tasks, &config.grid, config.eval_budget)?;
        log.line(&format!(
            "tuned {} lr={} final={:e}",
            kind.name(),
            tuned.best_lr,
            tuned.curve.last().unwrap()
        ));
        rows.extend(tuned.rows);
        series.push(Series {
            optimizer: kind.name().to_string(),
            mean: tuned.curve,
            stderr: tuned.stderr,
            lr: Some(tuned.best_lr),
        });
    }
    Ok((series, rows))
}

pub fn evaluate_checkpoints(
    config: &RunConfig,
    checkpoints: &[Checkpoint],
    tasks: &[Task],
    log: &mut RunLog,
) -> Result<Vec<Series>> {
    checkpoints
        .iter()
        .map(|ck| {
            let curves = evaluate_dco(&ck.params, &ck.meta.step, tasks, config.eval_budget)?;
            log.line(&format!("eval {} final={:e}", ck.rule.name(), curves.mean.last().unwrap()));
            Ok(Series {
                optimizer: ck.rule.name().to_string(),
                mean: curves.mean,
                stderr: curves.stderr,
                lr: None,
            })
        })
        .collect()
}

/// Meta-trains every configured rule, tunes the baselines on the fresh
/// evaluation tasks, and evaluates everything for the configured budget.
pub fn run_figure_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    run_figure_experiment_logged(config, &mut RunLog { file: None })
}

pub fn run_figure_experiment_logged(config: &RunConfig, log: &mut RunLog) -> Result<ExperimentReport> {
    config.validate()?;
    if config.experiment == Experiment::Theorem {
        return Err(Error::Config("use the theorem subcommand for theorem runs".into()));
    }
    let train = config.training_tasks()?;
    let eval = config.evaluation_tasks()?;
    let checkpoints = config
        .rule_list()
        .into_iter()
        .map(|r| meta_train_rule(config, r, &train, log))
        .collect::<Result<Vec<_>>>()?;
    let mut series = evaluate_checkpoints(config, &checkpoints, &eval, log)?;
    let (baselines, tuning) = tune_baselines(config, &eval, log)?;
    series.extend(baselines);
    Ok(ExperimentReport {
        experiment: config.experiment.name().to_string(),
        series,
        checkpoints,
        tuning,
    })
}

pub fn curves_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("experiment,optimizer,iteration,mean_val_loss,stderr_val_loss\n");
    for s in &report.series {
        for (k, (m, e)) in s.mean.iter().zip(&s.stderr).enumerate() {
            let _ = writeln!(out, "{},{},{k},{m:?},{e:?}", report.experiment, s.optimizer);
        }
    }
    out
}

pub fn emit_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    if report.series.is_empty() {
        return Err(Error::InvalidArgument("report has no series".into()));
    }
    fs::write(path, curves_csv(report))?;
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Log-scale line chart of the mean curves.
pub fn curves_svg(report: &ExperimentReport) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 30.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let positive = report
        .series
        .iter()
        .flat_map(|s| s.mean.iter().copied())
        .filter(|v| *v > 0.0 && v.is_finite());
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo.log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0)) } else { (0.0, 1.0) };
    let n = report.series.iter().map(|s| s.mean.len()).max().unwrap_or(1).max(2) - 1;
    let sx = |k: usize| left + pw * k as f64 / n as f64;
    let sy = |v: f64| {
        let l = if v > 0.0 { v.log10().clamp(lo, hi) } else { lo };
        top + ph * (hi - l) / (hi - lo)
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, report.experiment);
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for e in (lo as i64)..=(hi as i64) {
        let y = sy(10f64.powi(e as i32));
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">1e{e}</text>"#, left - 6.0, y + 4.0);
    }
    let step = (n / 6).max(1);
    for k in (0..=n).step_by(step) {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{k}</text>"#, sx(k), top + ph + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">iteration</text>"#, left + pw / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">mean validation loss</text>"#, top + ph / 2.0, top + ph / 2.0);
    for (i, series) in report.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = series
            .mean
            .iter()
            .enumerate()
            .map(|(k, &v)| format!("{:.2},{:.2}", sx(k), sy(v)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, series.optimizer);
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg(report: &ExperimentReport, path: &Path) -> Result<()> {
    if report.series.is_empty() {
        return Err(Error::InvalidArgument("report has no series".into()));
    }
    fs::write(path, curves_svg(report))?;
    Ok(())
}

/// Writes config echo, checkpoints, curves, chart and tuning table.
pub fn write_report_dir(config: &RunConfig, report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
    for ck in &report.checkpoints {
        save_checkpoint(ck, &dir.join(format!("checkpoint_{}.json", ck.rule.name())))?;
        fs::write(dir.join(format!("history_{}.csv", ck.rule.name())), history_csv(&ck.history))?;
    }
    if !report.series.is_empty() {
        emit_csv(report, &dir.join("curves.csv"))?;
        emit_svg(report, &dir.join("curves.svg"))?;
    }
    if !report.tuning.is_empty() {
        fs::write(dir.join("tuning.csv"), tune_rows_csv(&report.tuning))?;
    }
    Ok(())
}

fn history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,l_total\n");
    for (k, v) in history.iter().enumerate() {
        let _ = writeln!(out, "{k},{v:?}");
    }
    out
}

pub fn write_theorem_dir(report: &TheoremRunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    report.write_csv(&dir.join("theorem.csv"))?;
    report.write_summary(&dir.join("theorem.json"))
}

#[derive(Parser, Debug)]
#[command(name = "dco-meta", about = "Meta-trained convex update rules: training, evaluation and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Meta-train DCO rules and write checkpoints.
    MetaTrain(RunArgs),
    /// Evaluate checkpoints from the output directory against tuned baselines.
    Eval(RunArgs),
    /// Tune baseline learning rates on evaluation tasks.
    TuneBaseline(RunArgs),
    /// Run the shifted least-squares convergence check.
    Theorem(TheoremArgs),
    /// Meta-train, tune and evaluate, then write curves and chart.
    Report(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    #[arg(long)]
    rule: Option<RuleKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    meta_epochs: Option<usize>,
    #[arg(long)]
    inner_steps: Option<usize>,
    #[arg(long)]
    eval_budget: Option<usize>,
    #[arg(long)]
    eval_tasks: Option<usize>,
    /// Least-squares dimension.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    paper_scale: bool,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TheoremArgs {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n_tasks: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Meta step size; scanned when omitted.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => match self.experiment {
                Some(_) => RunConfig::default(),
                None => return Err(Error::Config("--experiment or --config is required".into())),
            },
        };
        if let Some(e) = self.experiment {
            c.experiment = e;
        }
        if let Some(r) = self.rule {
            c.rules = Some(vec![r]);
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.tasks.is_some() {
            c.tasks = self.tasks;
        }
        if let Some(m) = self.meta_epochs {
            c.meta.meta_epochs = m;
        }
        if let Some(t) = self.inner_steps {
            c.meta.inner_steps = t;
        }
        if let Some(b) = self.eval_budget {
            c.eval_budget = b;
        }
        if self.eval_tasks.is_some() {
            c.eval_tasks = self.eval_tasks;
        }
        if let Some(p) = self.p {
            c.ls.dim = p;
        }
        c.paper_scale |= self.paper_scale;
        if c.experiment == Experiment::Theorem {
            return Err(Error::Config("use the theorem subcommand for theorem runs".into()));
        }
        c.validate()?;
        Ok(c)
    }
}

impl TheoremArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::for_experiment(Experiment::Theorem),
        };
        c.experiment = Experiment::Theorem;
        if let Some(p) = self.p {
            c.theorem.p = p;
        }
        if let Some(n) = self.n_tasks {
            c.theorem.n_tasks = n;
        }
        if let Some(k) = self.k_max {
            c.theorem.k_max = k;
        }
        if self.eta.is_some() {
            c.theorem.eta = self.eta;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

fn checkpoint_paths(dir: &Path, rules: &[RuleKind]) -> Vec<PathBuf> {
    rules.iter().map(|r| dir.join(format!("checkpoint_{}.json", r.name()))).collect()
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::MetaTrain(args) => {
            let config = args.resolve()?;
            fs::create_dir_all(&args.out)?;
            let mut log = RunLog::open(Some(&args.out))?;
            let train = config.training_tasks()?;
            let checkpoints = config
                .rule_list()
                .into_iter()
                .map(|r| meta_train_rule(&config, r, &train, &mut log))
                .collect::<Result<Vec<_>>>()?;
            let report = ExperimentReport {
                experiment: config.experiment.name().into(),
                series: Vec::new(),
                checkpoints,
                tuning: Vec::new(),
            };
            write_report_dir(&config, &report, &args.out)
        }
        Command::Eval(args) => {
            let config = args.resolve()?;
            let checkpoints = checkpoint_paths(&args.out, &config.rule_list())
                .iter()
                .map(|p| load_checkpoint(p))
                .collect::<Result<Vec<_>>>()?;
            let mut log = RunLog::open(Some(&args.out))?;
            let eval = config.evaluation_tasks()?;
            let mut series = evaluate_checkpoints(&config, &checkpoints, &eval, &mut log)?;
            let (baselines, tuning) = tune_baselines(&config, &eval, &mut log)?;
            series.extend(baselines);
            let report = ExperimentReport {
                experiment: config.experiment.name().into(),
                series,
                checkpoints: Vec::new(),
                tuning,
            };
            write_report_dir(&config, &report, &args.out)
        }
        Command::TuneBaseline(args) => {
            let config = args.resolve()?;
            fs::create_dir_all(&args.out)?;
            let mut log = RunLog::open(Some(&args.out))?;
            let eval = config.evaluation_tasks()?;
            let (series, tuning) = tune_baselines(&config, &eval, &mut log)?;
            let report = ExperimentReport {
                experiment: config.experiment.name().into(),
                series,
                checkpoints: Vec::new(),
                tuning,
            };
            write_report_dir(&config, &report, &args.out)
        }
        Command::Report(args) => {
            let config = args.resolve()?;
            fs::create_dir_all(&args.out)?;
            let mut log = RunLog::open(Some(&args.out))?;
            let report = run_figure_experiment_logged(&config, &mut log)?;
            write_report_dir(&config, &report, &args.out)
        }
        Command::Theorem(args) => {
            let config = args.resolve()?;
            let t = &config.theorem;
            let report = run_theorem_experiment(t.p, t.n_tasks, t.eta, t.k_max, config.seed)?;
            fs::create_dir_all(&args.out)?;
            fs::write(args.out.join("config.json"), serde_json::to_string_pretty(&config)?)?;
            write_theorem_dir(&report, &args.out)
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 2 for invalid configuration or usage,
/// 3 on divergence, 1 otherwise.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::SpanCondition { .. } => 2,
        Error::Divergence(_) => 3,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(experiment: Experiment) -> RunConfig {
        RunConfig {
            experiment,
            tasks: Some(3),
            eval_tasks: Some(2),
            eval_budget: 4,
            grid: vec![1e-3, 1e-2],
            ls: LsConfig { dim: 4, init_std: 0.0 },
            sysid: SysIdConfig { n_train: 20, n_val: 10, ..SysIdConfig::default() },
            interp: InterpConfig { n_train: 20, n_val: 10, ..InterpConfig::default() },
            meta: MetaConfig { meta_epochs: 2, ..MetaConfig::default() },
            ..RunConfig::default()
        }
    }

    #[test]
    fn eval_task_defaults() {
        assert_eq!(RunConfig::for_experiment(Experiment::Ls).eval_task_count(), 100);
        assert_eq!(RunConfig::for_experiment(Experiment::Sysid).eval_task_count(), 100);
        assert_eq!(RunConfig::for_experiment(Experiment::Interp).eval_task_count(), 10);
        assert_eq!(RunConfig::for_experiment(Experiment::Interp).rule_list(), vec![RuleKind::Dcog, RuleKind::Dcom]);
        let full = RunConfig { paper_scale: true, ..RunConfig::for_experiment(Experiment::Interp) };
        assert_eq!(full.rule_list(), RuleKind::ALL.to_vec());
        assert_eq!(full.train_tasks(), 100);
        assert_eq!(RunConfig { paper_scale: true, ..RunConfig::default() }.ls_dim(), 100);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        assert!(matches!(RunConfig::from_json(r#"{"experiment":"ls","bogus":1}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"experiment":"ls","meta":{"inner_steps":0}}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"experiment":"theorem","theorem":{"p":5,"n_tasks":3}}"#), Err(Error::Config(_))));
        let c = RunConfig::from_json(r#"{"experiment":"sysid","seed":4}"#).unwrap();
        assert_eq!(c.seed, 4);
        let echo = serde_json::to_string(&tiny(Experiment::Interp)).unwrap();
        assert_eq!(RunConfig::from_json(&echo).unwrap(), tiny(Experiment::Interp));
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut params = init_dco_params(RuleKind::Dcogd, 46, 1.0).unwrap();
        if let DcoParams::Dcogd { b } = &mut params {
            b.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v += (i as f64).sin() * 1e-3 + 1.0 / 3.0);
        }
        let ck = Checkpoint::new(params, MetaConfig::default(), 9, vec![0.1, 1.0 / 7.0]);
        save_checkpoint(&ck, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);

        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint { .. })));

        fs::write(&path, text.replacen("\"version\": 1", "\"version\": 99", 1)).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint { field, .. }) => assert_eq!(field, "version"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fresh_dcog_checkpoint_has_constant_lambda() {
        let ck = Checkpoint::new(init_dco_params(RuleKind::Dcog, 5, 0.25).unwrap(), MetaConfig::default(), 0, vec![]);
        let DcoParams::Dcog { lambda } = &ck.params else { panic!() };
        assert!(lambda.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn csv_shape_and_svg_determinism() {
        let report = ExperimentReport {
            experiment: "ls".into(),
            series: (0..2)
                .map(|i| Series {
                    optimizer: format!("opt{i}"),
                    mean: (0..31).map(|k| 1.0 / (k as f64 + 1.0 + i as f64)).collect(),
                    stderr: vec![0.01; 31],
                    lr: None,
                })
                .collect(),
            checkpoints: vec![],
            tuning: vec![],
        };
        let csv = curves_csv(&report);
        assert_eq!(csv.lines().count(), 63);
        assert_eq!(csv.lines().next().unwrap(), "experiment,optimizer,iteration,mean_val_loss,stderr_val_loss");
        assert_eq!(curves_svg(&report), curves_svg(&report));
        assert!(curves_svg(&report).contains("opt1"));
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_csv(&report, &dir.path().join("missing/x.csv")).is_err());
    }

    #[test]
    fn tiny_pipelines_run() {
        for e in [Experiment::Ls, Experiment::Sysid, Experiment::Interp] {
            let report = run_figure_experiment(&tiny(e)).unwrap();
            let n = if e == Experiment::Interp { 2 } else { 3 };
            assert_eq!(report.series.len(), n + 3);
            assert!(report.series.iter().all(|s| s.mean.len() == 5 && s.mean.iter().all(|v| v.is_finite())));
        }
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(cli_main(["dco-meta", "meta-train", "--out", out]), 2);
        assert_eq!(cli_main(["dco-meta", "meta-train", "--experiment", "ls"]), 2);
        assert_eq!(cli_main(["dco-meta", "bogus"]), 2);
        assert_eq!(cli_main(["dco-meta", "meta-train", "--experiment", "ls", "--inner-steps", "0", "--out", out]), 2);
        assert_eq!(cli_main(["dco-meta", "theorem", "--p", "4", "--n-tasks", "2", "--out", out]), 2);
        assert_eq!(cli_main(["dco-meta", "theorem", "--p", "3", "--n-tasks", "3", "--k-max", "50", "--eta", "1e6", "--out", out]), 3);
        assert_eq!(exit_code(&Error::Divergence("x".into())), 3);
    }
}
