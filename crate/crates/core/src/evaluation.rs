//! Nested cross-validation, metrics, and report tables.
//!
//! Each repeat draws an outer stratified fold plan. For every outer fold an
//! inner stratified plan over the outer-training subjects scores every grid
//! point by mean inner balanced accuracy; the winner is refit on the whole
//! outer-training set and scores the outer-test fold. Out-of-fold scores are
//! pooled per repeat into one [`MetricSet`].

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::{mix, KernelError, KernelMatrix};
use crate::seeds::derive_seed;
use crate::svm::{fit_dual, train, SvmError, SvmModel, TrainConfig};

pub use crate::svm::Class;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("class {class:?} has {count} members, fewer than the {k} folds")]
    TooFewPerClass { class: Class, count: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("truth labels contain a single class")]
    SingleClassTruth,
    #[error("empty input")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Fold index per subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles each class with a seeded generator, lists negatives then
/// positives, and deals the list round-robin into `k` folds.
pub fn stratified_kfold(labels: &[Class], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(EvalError::InvalidFoldCount(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in [Class::Negative, Class::Positive] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(EvalError::TooFewPerClass {
                class,
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignment,
        seed,
    })
}

/// Inner plan over the outer-training subjects of one outer fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerPlan {
    /// Global subject indices, in the order the inner plan refers to them.
    pub train: Vec<usize>,
    pub plan: FoldPlan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedPlan {
    pub outer: FoldPlan,
    pub inner: Vec<InnerPlan>,
}

/// Seed of the inner plan for one outer fold.
pub fn inner_seed(outer_seed: u64, fold: usize) -> u64 {
    derive_seed(outer_seed, fold as u64)
}

/// The fold structure used by [`nested_cv`] for one repeat.
pub fn nested_plan(labels: &[Class], n_outer: usize, n_inner: usize, seed: u64) -> Result<NestedPlan> {
    let outer = stratified_kfold(labels, n_outer, seed)?;
    let inner = (0..n_outer)
        .map(|f| {
            let train = outer.train_indices(f);
            let sub: Vec<Class> = train.iter().map(|&i| labels[i]).collect();
            let plan = stratified_kfold(&sub, n_inner, inner_seed(seed, f))?;
            Ok(InnerPlan { train, plan })
        })
        .collect::<Result<_>>()?;
    Ok(NestedPlan { outer, inner })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSet {
    pub auc: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 5] = ["AUC", "Bal acc", "Sens", "Spec", "Acc"];

    /// Values in [`Self::NAMES`] order.
    pub fn values(&self) -> [f64; 5] {
        [
            self.auc,
            self.balanced_accuracy,
            self.sensitivity,
            self.specificity,
            self.accuracy,
        ]
    }

    fn from_values(v: [f64; 5]) -> Self {
        MetricSet {
            auc: v[0],
            balanced_accuracy: v[1],
            sensitivity: v[2],
            specificity: v[3],
            accuracy: v[4],
        }
    }
}

/// Mann-Whitney statistic with ties counted one half, as an exact ratio of
/// integer half-pair counts.
pub fn auc(scores: &[f64], truth: &[Class]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(EvalError::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let n_pos = truth.iter().filter(|&&c| c == Class::Positive).count() as u64;
    let n_neg = truth.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassTruth);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut half_units: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let (mut pos, mut neg) = (0u64, 0u64);
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            match truth[order[end]] {
                Class::Positive => pos += 1,
                Class::Negative => neg += 1,
            }
            end += 1;
        }
        half_units += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        start = end;
    }
    Ok(half_units as f64 / (2 * n_pos * n_neg) as f64)
}

pub fn compute_metrics(scores: &[f64], predicted: &[Class], truth: &[Class]) -> Result<MetricSet> {
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if predicted.len() != truth.len() {
        return Err(EvalError::Shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let auc = auc(scores, truth)?;
    let (mut tp, mut tn, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (p, t) in predicted.iter().zip(truth) {
        match (p, t) {
            (Class::Positive, Class::Positive) => tp += 1,
            (Class::Negative, Class::Negative) => tn += 1,
            (Class::Positive, Class::Negative) => fp += 1,
            (Class::Negative, Class::Positive) => fneg += 1,
        }
    }
    let sensitivity = tp as f64 / (tp + fneg) as f64;
    let specificity = tn as f64 / (tn + fp) as f64;
    Ok(MetricSet {
        auc,
        accuracy: (tp + tn) as f64 / truth.len() as f64,
        balanced_accuracy: (sensitivity + specificity) / 2.0,
        sensitivity,
        specificity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: MetricSet,
    pub sd: MetricSet,
}

/// Mean and sample standard deviation per metric. Values are summed in
/// sorted order so the result does not depend on repeat order.
pub fn aggregate(runs: &[MetricSet]) -> Result<Summary> {
    if runs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = runs.len() as f64;
    let mut mean = [0.0; 5];
    let mut sd = [0.0; 5];
    for m in 0..5 {
        let mut v: Vec<f64> = runs.iter().map(|r| r.values()[m]).collect();
        v.sort_by(f64::total_cmp);
        let mu = v.iter().sum::<f64>() / n;
        mean[m] = mu;
        if runs.len() > 1 {
            let mut dev: Vec<f64> = v.iter().map(|x| (x - mu) * (x - mu)).collect();
            dev.sort_by(f64::total_cmp);
            sd[m] = (dev.iter().sum::<f64>() / (n - 1.0)).sqrt();
        }
    }
    Ok(Summary {
        mean: MetricSet::from_values(mean),
        sd: MetricSet::from_values(sd),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub c_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub beta_values: Vec<f64>,
}

fn check_axis(name: &str, v: &[f64], range: impl Fn(f64) -> bool) -> Result<()> {
    if v.is_empty() {
        return Err(EvalError::Grid(format!("{name} is empty")));
    }
    if v.iter().any(|&x| !range(x)) {
        return Err(EvalError::Grid(format!("{name} has a value out of range")));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::Grid(format!("{name} is not strictly ascending")));
    }
    Ok(())
}

impl HyperGrid {
    pub fn new(c_values: Vec<f64>, alpha_values: Vec<f64>, beta_values: Vec<f64>) -> Result<Self> {
        check_axis("C", &c_values, |c| c > 0.0 && c.is_finite())?;
        check_axis("alpha", &alpha_values, |a| (0.0..=1.0).contains(&a))?;
        check_axis("beta", &beta_values, |b| b >= 0.0 && b.is_finite())?;
        Ok(HyperGrid {
            c_values,
            alpha_values,
            beta_values,
        })
    }
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            c_values: (-6..=2).map(|e| 10f64.powi(e)).collect(),
            alpha_values: (0..=10).map(|i| i as f64 / 10.0).collect(),
            beta_values: vec![0.0, 0.5, 1.0, 2.0, 4.0],
        }
    }
}

/// One kernel per diffusion time; a single fixed kernel has no time.
#[derive(Debug, Clone)]
pub struct KernelFamily {
    pub betas: Vec<Option<f64>>,
    pub kernels: Vec<KernelMatrix>,
}

impl KernelFamily {
    pub fn fixed(kernel: KernelMatrix) -> Self {
        KernelFamily {
            betas: vec![None],
            kernels: vec![kernel],
        }
    }

    pub fn regularized(kernels: Vec<(f64, KernelMatrix)>) -> Self {
        let (betas, kernels) = kernels.into_iter().map(|(b, k)| (Some(b), k)).unzip();
        KernelFamily { betas, kernels }
    }
}

/// A single kernel family, or two families combined as
/// `alpha * first + (1 - alpha) * second` at matching diffusion times.
#[derive(Debug, Clone)]
pub enum KernelInputs {
    Single(KernelFamily),
    Combined(KernelFamily, KernelFamily),
}

impl KernelInputs {
    fn families(&self) -> Vec<&KernelFamily> {
        match self {
            KernelInputs::Single(f) => vec![f],
            KernelInputs::Combined(a, b) => vec![a, b],
        }
    }

    fn subjects(&self) -> &[String] {
        self.families()[0].kernels[0].subjects()
    }

    fn validate(&self) -> Result<()> {
        let fams = self.families();
        let betas = &fams[0].betas;
        for f in &fams {
            if f.kernels.is_empty() || f.kernels.len() != f.betas.len() {
                return Err(EvalError::Shape("kernel family is empty or misaligned".into()));
            }
            if &f.betas != betas {
                return Err(EvalError::Shape("combined families use different betas".into()));
            }
            for k in &f.kernels {
                if k.subjects() != self.subjects() {
                    return Err(EvalError::Kernel(KernelError::SubjectMismatch));
                }
            }
        }
        Ok(())
    }

    fn block(&self, beta: usize, alpha: Option<f64>, rows: &[usize], cols: &[usize]) -> Vec<f64> {
        match (self, alpha) {
            (KernelInputs::Single(f), _) => f.kernels[beta].block(rows, cols),
            (KernelInputs::Combined(a, b), Some(alpha)) => {
                let (ka, kb) = (&a.kernels[beta], &b.kernels[beta]);
                let mut out = Vec::with_capacity(rows.len() * cols.len());
                for &r in rows {
                    let (ra, rb) = (ka.row(r), kb.row(r));
                    out.extend(cols.iter().map(|&c| mix(alpha, ra[c], rb[c])));
                }
                out
            }
            (KernelInputs::Combined(..), None) => unreachable!("combined kernels need alpha"),
        }
    }

    /// The kernel matrix of a grid point over the full cohort.
    pub fn kernel(&self, beta: usize, alpha: Option<f64>) -> KernelMatrix {
        let all: Vec<usize> = (0..self.subjects().len()).collect();
        KernelMatrix::new(self.subjects().to_vec(), self.block(beta, alpha, &all, &all))
            .expect("mixing preserves symmetry")
    }
}

/// One point of the searched grid. `beta_index` refers to the families'
/// diffusion times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub c: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub beta_index: usize,
}

/// Candidates in tie-breaking order: ascending C, then alpha, then beta.
pub fn candidates(inputs: &KernelInputs, grid: &HyperGrid) -> Vec<Candidate> {
    let alphas: Vec<Option<f64>> = match inputs {
        KernelInputs::Single(_) => vec![None],
        KernelInputs::Combined(..) => grid.alpha_values.iter().map(|&a| Some(a)).collect(),
    };
    let fam = inputs.families()[0];
    let mut betas: Vec<(usize, Option<f64>)> = fam.betas.iter().copied().enumerate().collect();
    betas.sort_by(|a, b| a.1.unwrap_or(0.0).total_cmp(&b.1.unwrap_or(0.0)));
    let mut out = Vec::new();
    for &c in &grid.c_values {
        for &alpha in &alphas {
            for &(beta_index, beta) in &betas {
                out.push(Candidate {
                    c,
                    alpha,
                    beta,
                    beta_index,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub n_outer: usize,
    pub n_inner: usize,
    pub repeats: usize,
    pub base_seed: u64,
    /// Solver settings; `c` is replaced by each grid value.
    pub train: TrainConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            n_outer: 10,
            n_inner: 10,
            repeats: 10,
            base_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub selected: Candidate,
    pub inner_balanced_accuracy: f64,
    pub model: SvmModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub metrics: MetricSet,
    /// Out-of-fold score per subject.
    pub scores: Vec<f64>,
    pub predicted: Vec<Class>,
    pub folds: Vec<FoldResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub subjects: Vec<String>,
    pub truth: Vec<Class>,
    pub repeats: Vec<RepeatResult>,
    pub summary: Summary,
}

fn select_labels(labels: &[Class], idx: &[usize]) -> Vec<Class> {
    idx.iter().map(|&i| labels[i]).collect()
}

/// Mean balanced accuracy of one candidate over the inner folds.
fn inner_score(
    inputs: &KernelInputs,
    labels: &[Class],
    inner: &InnerPlan,
    cand: &Candidate,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..inner.plan.k {
        let tr: Vec<usize> = inner.plan.train_indices(f).iter().map(|&i| inner.train[i]).collect();
        let te: Vec<usize> = inner.plan.test_indices(f).iter().map(|&i| inner.train[i]).collect();
        let y_tr = select_labels(labels, &tr);
        let y_te = select_labels(labels, &te);
        let cfg = TrainConfig { c: cand.c, ..*cfg };
        let fit = fit_dual(&inputs.block(cand.beta_index, cand.alpha, &tr, &tr), &y_tr, &cfg)?;
        let scores = fit.scores(&y_tr, &inputs.block(cand.beta_index, cand.alpha, &te, &tr));
        let predicted: Vec<Class> = scores.iter().map(|&s| Class::from_score(s)).collect();
        total += compute_metrics(&scores, &predicted, &y_te)?.balanced_accuracy;
    }
    Ok(total / inner.plan.k as f64)
}

fn outer_fold(
    inputs: &KernelInputs,
    labels: &[Class],
    plan: &NestedPlan,
    fold: usize,
    grid: &[Candidate],
    cfg: &TrainConfig,
) -> Result<(FoldResult, Vec<f64>)> {
    let inner = &plan.inner[fold];
    let inner_scores: Vec<f64> = grid
        .par_iter()
        .map(|cand| inner_score(inputs, labels, inner, cand, cfg))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &s) in inner_scores.iter().enumerate() {
        if s > inner_scores[best] {
            best = i;
        }
    }
    let cand = grid[best];
    let tr = &inner.train;
    let te = plan.outer.test_indices(fold);
    let y_tr = select_labels(labels, tr);
    let kernel = inputs.kernel(cand.beta_index, cand.alpha).submatrix(tr);
    let model = train(&kernel, &y_tr, &TrainConfig { c: cand.c, ..*cfg })?;
    let fit_scores = {
        let cross = inputs.block(cand.beta_index, cand.alpha, &te, tr);
        crate::svm::decision_scores(&model, &cross)?
    };
    Ok((
        FoldResult {
            fold,
            test_indices: te,
            selected: cand,
            inner_balanced_accuracy: inner_scores[best],
            model,
        },
        fit_scores,
    ))
}

pub fn nested_cv(
    inputs: &KernelInputs,
    labels: &[Class],
    grid: &HyperGrid,
    cfg: &CvConfig,
) -> Result<EvaluationReport> {
    inputs.validate()?;
    let subjects = inputs.subjects().to_vec();
    if labels.len() != subjects.len() {
        return Err(EvalError::Shape(format!(
            "{} labels for {} subjects",
            labels.len(),
            subjects.len()
        )));
    }
    if cfg.repeats == 0 {
        return Err(EvalError::EmptyInput);
    }
    let cands = candidates(inputs, grid);
    let plans: Vec<NestedPlan> = (0..cfg.repeats)
        .map(|r| nested_plan(labels, cfg.n_outer, cfg.n_inner, cfg.base_seed.wrapping_add(r as u64)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.n_outer).map(move |f| (r, f)))
        .collect();
    let results: Vec<(FoldResult, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(r, f)| outer_fold(inputs, labels, &plans[r], f, &cands, &cfg.train))
        .collect::<Result<_>>()?;

    let mut results = results.into_iter();
    let mut repeats = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let mut scores = vec![0.0; labels.len()];
        let mut folds = Vec::with_capacity(cfg.n_outer);
        for _ in 0..cfg.n_outer {
            let (fold, fold_scores) = results.next().expect("one result per job");
            for (&i, &s) in fold.test_indices.iter().zip(&fold_scores) {
                scores[i] = s;
            }
            folds.push(fold);
        }
        let predicted: Vec<Class> = scores.iter().map(|&s| Class::from_score(s)).collect();
        let metrics = compute_metrics(&scores, &predicted, labels)?;
        repeats.push(RepeatResult {
            repeat: r,
            seed: plans[r].outer.seed,
            metrics,
            scores,
            predicted,
            folds,
        });
    }
    let summary = aggregate(&repeats.iter().map(|r| r.metrics).collect::<Vec<_>>())?;
    Ok(EvaluationReport {
        subjects,
        truth: labels.to_vec(),
        repeats,
        summary,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| x.to_string())
}

pub const SUMMARY_HEADER: &str = "Image type\tClassifier\tTask\tAUC\tBal acc\tSens\tSpec\tAcc\tAUC_sd\tBal acc_sd\tSens_sd\tSpec_sd\tAcc_sd";

/// Header plus one row of mean metrics followed by their standard deviations.
pub fn summary_tsv(image_type: &str, classifier: &str, task: &str, summary: &Summary) -> String {
    let mut out = String::new();
    writeln!(out, "{SUMMARY_HEADER}").unwrap();
    write!(out, "{image_type}\t{classifier}\t{task}").unwrap();
    for v in summary.mean.values().iter().chain(summary.sd.values().iter()) {
        write!(out, "\t{v:.4}").unwrap();
    }
    out.push('\n');
    out
}

/// `participant_id, repeat, score, predicted, truth` per subject and repeat.
pub fn predictions_tsv(report: &EvaluationReport) -> String {
    let mut out = String::from("participant_id\trepeat\tscore\tpredicted\ttruth\n");
    for rep in &report.repeats {
        for (i, id) in report.subjects.iter().enumerate() {
            writeln!(
                out,
                "{id}\t{}\t{}\t{}\t{}",
                rep.repeat,
                rep.scores[i],
                rep.predicted[i].as_int(),
                report.truth[i].as_int()
            )
            .unwrap();
        }
    }
    out
}

/// Selected grid point per repeat and outer fold.
pub fn hyperparameters_tsv(report: &EvaluationReport) -> String {
    let mut out = String::from("repeat\tfold\tC\talpha\tbeta\tinner_bal_acc\n");
    for rep in &report.repeats {
        for f in &rep.folds {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                rep.repeat,
                f.fold,
                f.selected.c,
                opt(f.selected.alpha),
                opt(f.selected.beta),
                f.inner_balanced_accuracy
            )
            .unwrap();
        }
    }
    out
}

/// Per-repeat metric rows.
pub fn repeats_tsv(report: &EvaluationReport) -> String {
    let mut out = String::from("repeat\tseed");
    for n in MetricSet::NAMES {
        write!(out, "\t{n}").unwrap();
    }
    out.push('\n');
    for rep in &report.repeats {
        write!(out, "{}\t{}", rep.repeat, rep.seed).unwrap();
        for v in rep.metrics.values() {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    out
}
