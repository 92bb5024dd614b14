//! L2-regularized multinomial logistic regression over document embeddings,
//! soft class distributions and classification metrics.

mod metrics;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{evaluate, ClassMetrics, ClassificationReport};
pub use model::{load_model, save_model};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no training rows")]
    Empty,
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("row {row} has dimension {got}, expected {expected}")]
    Dimension { row: usize, expected: usize, got: usize },
    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("need at least as many rows ({rows}) as classes ({classes})")]
    TooFewRows { rows: usize, classes: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidParams(String),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("optimizer did not converge after {iterations} iterations (gradient inf-norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("model file: {0}")]
    Model(String),
}

pub type Result<T, E = ClassifyError> = std::result::Result<T, E>;

/// Per-dimension affine map to zero mean and unit variance; constant columns keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        for r in rows {
            for (m, x) in means.iter_mut().zip(r) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in vars.iter_mut().zip(r).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        let stds = vars
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { means, stds }
    }

    pub fn identity(d: usize) -> Self {
        Self { means: vec![0.0; d], stds: vec![1.0; d] }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.means).zip(&self.stds).map(|((x, m), s)| (x - m) / s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// Backtracking could not find a decreasing step; the iterate is stationary to machine precision.
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub termination: Termination,
    pub grad_inf_norm: f64,
    pub objective: f64,
    /// Objective after each accepted step, starting with the initial value.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Only used when `shuffle` is on.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shuffle: bool,
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Turn non-convergence into an error instead of a recorded status.
    #[serde(default)]
    pub strict: bool,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    5000
}
fn default_true() -> bool {
    true
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            seed: 0,
            shuffle: false,
            standardize: true,
            strict: false,
        }
    }
}

/// What the model was trained on; informational.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainedOn {
    pub provider_id: String,
    pub context_budget: usize,
    pub label_level: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxClassifier {
    pub classes: Vec<String>,
    pub dimension: usize,
    /// `classes.len() x (dimension + 1)`, row-major; the last column is the bias.
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub standardizer: Standardizer,
    pub trained_on: TrainedOn,
    pub fit: FitSummary,
}

/// Standardized training problem in flat form.
pub struct Problem<'a> {
    /// `n x d`, row-major.
    pub x: &'a [f64],
    pub y: &'a [usize],
    pub n: usize,
    pub d: usize,
    pub n_classes: usize,
    pub lambda: f64,
}

impl Problem<'_> {
    fn logits(&self, w: &[f64], row: &[f64], out: &mut [f64]) {
        let stride = self.d + 1;
        for (c, z) in out.iter_mut().enumerate() {
            let wc = &w[c * stride..(c + 1) * stride];
            *z = wc[self.d] + wc[..self.d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        let stride = self.d + 1;
        let sq: f64 = (0..self.n_classes)
            .map(|c| w[c * stride..c * stride + self.d].iter().map(|v| v * v).sum::<f64>())
            .sum();
        0.5 * self.lambda * sq
    }

    /// Mean cross-entropy plus `lambda / 2 * ||W without bias||^2`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let mut z = vec![0.0; self.n_classes];
        let mut loss = 0.0;
        for i in 0..self.n {
            self.logits(w, &self.x[i * self.d..(i + 1) * self.d], &mut z);
            loss += log_sum_exp(&z) - z[self.y[i]];
        }
        loss / self.n as f64 + self.penalty(w)
    }

    pub fn objective_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let stride = self.d + 1;
        let mut grad = vec![0.0; w.len()];
        let mut z = vec![0.0; self.n_classes];
        let mut loss = 0.0;
        for i in 0..self.n {
            let row = &self.x[i * self.d..(i + 1) * self.d];
            self.logits(w, row, &mut z);
            let lse = log_sum_exp(&z);
            loss += lse - z[self.y[i]];
            for c in 0..self.n_classes {
                let r = (z[c] - lse).exp() - f64::from(u8::from(c == self.y[i]));
                let g = &mut grad[c * stride..(c + 1) * stride];
                for (gj, xj) in g[..self.d].iter_mut().zip(row) {
                    *gj += r * xj;
                }
                g[self.d] += r;
            }
        }
        let n = self.n as f64;
        for c in 0..self.n_classes {
            for j in 0..stride {
                let k = c * stride + j;
                grad[k] /= n;
                if j < self.d {
                    grad[k] += self.lambda * w[k];
                }
            }
        }
        (loss / n + self.penalty(w), grad)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Diagonal curvature bound per weight: the softmax Hessian is dominated by
/// `0.5 * E[x_j^2]` (Boehning's bound), plus `lambda` on penalized entries.
fn diagonal_preconditioner(problem: &Problem<'_>) -> Vec<f64> {
    let stride = problem.d + 1;
    let mut second_moment = vec![0.0; problem.d];
    for i in 0..problem.n {
        for (m, x) in second_moment.iter_mut().zip(&problem.x[i * problem.d..(i + 1) * problem.d]) {
            *m += x * x;
        }
    }
    let n = problem.n as f64;
    let mut h = vec![0.0; problem.n_classes * stride];
    for c in 0..problem.n_classes {
        for j in 0..problem.d {
            h[c * stride + j] = (0.5 * second_moment[j] / n).max(1e-12) + problem.lambda;
        }
        h[c * stride + problem.d] = 0.5;
    }
    h
}

/// Full-batch diagonally preconditioned gradient descent with Armijo
/// backtracking, starting from zero weights.
fn minimize(problem: &Problem<'_>, options: &FitOptions) -> (Vec<f64>, FitSummary) {
    let precond = diagonal_preconditioner(problem);
    let mut w = vec![0.0; problem.n_classes * (problem.d + 1)];
    let (mut f, mut g) = problem.objective_and_gradient(&w);
    let mut trace = vec![f];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let mut candidate = vec![0.0; w.len()];
    let mut direction = vec![0.0; w.len()];
    loop {
        let g_inf = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if g_inf <= options.tol {
            termination = Termination::Converged;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }
        for ((d, gi), h) in direction.iter_mut().zip(&g).zip(&precond) {
            *d = gi / h;
        }
        let decrease: f64 = g.iter().zip(&direction).map(|(a, b)| a * b).sum();
        let accepted = loop {
            for ((c, wi), di) in candidate.iter_mut().zip(&w).zip(&direction) {
                *c = wi - step * di;
            }
            let f_new = problem.objective(&candidate);
            if f_new <= f - 1e-4 * step * decrease {
                break true;
            }
            step *= 0.5;
            if step < 1e-20 {
                break false;
            }
        };
        if !accepted {
            termination = Termination::LineSearchStalled;
            break;
        }
        std::mem::swap(&mut w, &mut candidate);
        let (f_new, g_new) = problem.objective_and_gradient(&w);
        f = f_new;
        g = g_new;
        trace.push(f);
        iterations += 1;
        step = (step * 2.0).min(1.0);
    }
    let grad_inf_norm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (w, FitSummary { iterations, termination, grad_inf_norm, objective: f, objective_trace: trace })
}

/// Fits the classifier. Classes are the sorted distinct labels.
pub fn fit(rows: &[Vec<f64>], labels: &[String], options: &FitOptions) -> Result<SoftmaxClassifier> {
    if rows.is_empty() {
        return Err(ClassifyError::Empty);
    }
    if rows.len() != labels.len() {
        return Err(ClassifyError::LengthMismatch { rows: rows.len(), labels: labels.len() });
    }
    if !(options.lambda >= 0.0 && options.lambda.is_finite()) {
        return Err(ClassifyError::InvalidParams(format!("lambda must be >= 0, got {}", options.lambda)));
    }
    if !(options.tol > 0.0) {
        return Err(ClassifyError::InvalidParams("tol must be positive".into()));
    }
    let d = rows[0].len();
    for (row, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(ClassifyError::Dimension { row, expected: d, got: r.len() });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ClassifyError::NonFinite);
        }
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ClassifyError::TooFewClasses(classes.len()));
    }
    if rows.len() < classes.len() {
        return Err(ClassifyError::TooFewRows { rows: rows.len(), classes: classes.len() });
    }

    let standardizer = if options.standardize { Standardizer::fit(rows) } else { Standardizer::identity(d) };
    let mut order: Vec<usize> = (0..rows.len()).collect();
    if options.shuffle {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(options.seed));
    }
    let mut x = Vec::with_capacity(rows.len() * d);
    let mut y = Vec::with_capacity(rows.len());
    for &i in &order {
        x.extend(standardizer.apply(&rows[i]));
        y.push(classes.binary_search(&labels[i]).expect("label is a class"));
    }
    let problem = Problem { x: &x, y: &y, n: rows.len(), d, n_classes: classes.len(), lambda: options.lambda };
    let (weights, summary) = minimize(&problem, options);
    if summary.termination != Termination::Converged {
        log::warn!(
            "logistic regression stopped without converging: {:?} after {} iterations, gradient inf-norm {:e}",
            summary.termination,
            summary.iterations,
            summary.grad_inf_norm
        );
        if options.strict {
            return Err(ClassifyError::NotConverged {
                iterations: summary.iterations,
                grad_norm: summary.grad_inf_norm,
            });
        }
    }
    Ok(SoftmaxClassifier {
        classes,
        dimension: d,
        weights,
        lambda: options.lambda,
        standardizer,
        trained_on: TrainedOn::default(),
        fit: summary,
    })
}

impl SoftmaxClassifier {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Raw class scores for `x` (after standardization).
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dimension {
            return Err(ClassifyError::Dimension { row: 0, expected: self.dimension, got: x.len() });
        }
        let xs = self.standardizer.apply(x);
        let stride = self.dimension + 1;
        Ok((0..self.n_classes())
            .map(|c| {
                let w = &self.weights[c * stride..(c + 1) * stride];
                w[self.dimension] + w[..self.dimension].iter().zip(&xs).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Most probable class; ties go to the earlier class.
    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let p = self.predict_proba(x)?;
        Ok(&self.classes[argmax(&p)])
    }

    /// Classes with their probabilities, most probable first (ties in class order).
    pub fn soft_distribution(&self, x: &[f64]) -> Result<Vec<(String, f64)>> {
        let p = self.predict_proba(x)?;
        let mut ranked: Vec<(String, f64)> = self.classes.iter().cloned().zip(p).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(ranked)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// [`SoftmaxClassifier::soft_distribution`] as a free function.
pub fn soft_sector_distribution(model: &SoftmaxClassifier, embedding: &[f64]) -> Result<Vec<(String, f64)>> {
    model.soft_distribution(embedding)
}
