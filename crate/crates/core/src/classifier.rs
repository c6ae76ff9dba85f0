//! Linear soft-margin SVM and the six classification metrics used as
//! objectives.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{check_label, class_counts, Label, CLASS_1, CLASS_2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    /// Box constraint C.
    pub c: f64,
    /// Relative duality gap at which training stops.
    pub tolerance: f64,
    /// Cap on coordinate passes, as a multiple of the instance count.
    pub passes_per_instance: usize,
    /// Seeds the coordinate visiting order.
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tolerance: 1e-3,
            passes_per_instance: 10,
            seed: 0x5eed_5e4d,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("svm c={} must be positive", self.c)));
        }
        if !(self.tolerance > 0.0) || self.passes_per_instance == 0 {
            return Err(Error::Config(
                "svm tolerance and passes_per_instance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `sign(w . x + b)`; non-negative scores map to class 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    weights: Vec<f64>,
    bias: f64,
    c: f64,
}

/// Diagnostics from one training run, in the solver's standardized space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub passes: usize,
    pub primal: f64,
    pub dual: f64,
    pub converged: bool,
}

impl LinearSvmModel {
    pub fn from_parts(weights: Vec<f64>, bias: f64, c: f64) -> Result<Self> {
        if weights
            .iter()
            .chain(std::iter::once(&bias))
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("svm parameters".into()));
        }
        Ok(LinearSvmModel { weights, bias, c })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn decision_value(&self, x: ArrayView1<'_, f64>) -> f64 {
        x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() + self.bias
    }

    pub fn predict_one(&self, x: ArrayView1<'_, f64>) -> Label {
        if self.decision_value(x) >= 0.0 {
            CLASS_1
        } else {
            CLASS_2
        }
    }
}

fn sign_of(label: Label) -> f64 {
    if label == CLASS_1 {
        1.0
    } else {
        -1.0
    }
}

/// Trains on `features` (N x d) with labels in {1, 2}.
///
/// Features are standardized with the training mean and deviation, the bias
/// enters as a constant extra feature, and the hinge-loss dual is solved by
/// coordinate ascent in a seeded random order. Columns without spread carry
/// no information and get zero weight. The returned model is folded back to
/// the original feature scale.
pub fn train_svm(
    features: ArrayView2<'_, f64>,
    labels: &[Label],
    params: &SvmParams,
) -> Result<LinearSvmModel> {
    train_svm_with_report(features, labels, params).map(|(m, _)| m)
}

pub fn train_svm_with_report(
    features: ArrayView2<'_, f64>,
    labels: &[Label],
    params: &SvmParams,
) -> Result<(LinearSvmModel, SolverReport)> {
    params.validate()?;
    let (n, dim) = features.dim();
    if dim == 0 {
        return Err(Error::dim("features have zero columns"));
    }
    if labels.len() != n {
        return Err(Error::dim(format!("{n} rows but {} labels", labels.len())));
    }
    for &l in labels {
        check_label(l)?;
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svm training features".into()));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }

    let mean = features.mean_axis(Axis(0)).expect("n > 0");
    let mut active = Vec::new();
    let mut scale = vec![0.0; dim];
    for j in 0..dim {
        let col = features.column(j);
        let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd > 1e-12 * mean[j].abs().max(1.0) {
            active.push(j);
            scale[j] = sd;
        }
    }
    let y: Vec<f64> = labels.iter().map(|&l| sign_of(l)).collect();

    if active.is_empty() {
        // Only the bias is left: minimize b^2/2 + C * sum hinge(y_i b).
        let b = (params.c * (pos as f64 - neg as f64)).clamp(-1.0, 1.0);
        let primal =
            0.5 * b * b + params.c * y.iter().map(|yi| (1.0 - yi * b).max(0.0)).sum::<f64>();
        let model = LinearSvmModel::from_parts(vec![0.0; dim], b, params.c)?;
        let report = SolverReport {
            passes: 0,
            primal,
            dual: primal,
            converged: true,
        };
        return Ok((model, report));
    }

    // Standardized design with the bias column last.
    let k = active.len();
    let mut z = Array2::zeros((n, k + 1));
    for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
        for (a, &j) in active.iter().enumerate() {
            row[a] = (features[[i, j]] - mean[j]) / scale[j];
        }
        row[k] = 1.0;
    }
    let (w, report) = dual_coordinate_ascent(&z, &y, params);

    let mut weights = vec![0.0; dim];
    let mut bias = w[k];
    for (a, &j) in active.iter().enumerate() {
        weights[j] = w[a] / scale[j];
        bias -= w[a] * mean[j] / scale[j];
    }
    Ok((LinearSvmModel::from_parts(weights, bias, params.c)?, report))
}

fn primal_dual(z: &Array2<f64>, y: &[f64], w: &[f64], alpha: &[f64], c: f64) -> (f64, f64) {
    let norm2: f64 = w.iter().map(|v| v * v).sum();
    let hinge: f64 = z
        .axis_iter(Axis(0))
        .zip(y)
        .map(|(row, yi)| {
            let m = yi * row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            (1.0 - m).max(0.0)
        })
        .sum();
    let primal = 0.5 * norm2 + c * hinge;
    let dual = alpha.iter().sum::<f64>() - 0.5 * norm2;
    (primal, dual)
}

fn dual_coordinate_ascent(
    z: &Array2<f64>,
    y: &[f64],
    params: &SvmParams,
) -> (Vec<f64>, SolverReport) {
    let (n, k) = z.dim();
    let c = params.c;
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; k];
    let qii: Vec<f64> = z
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let max_passes = params.passes_per_instance * n;

    let mut report = SolverReport {
        passes: 0,
        primal: f64::INFINITY,
        dual: 0.0,
        converged: false,
    };
    for pass in 1..=max_passes {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = z.row(i);
            let g = y[i] * row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            if pg.abs() > 1e-14 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                w.iter_mut().zip(row).for_each(|(wj, zj)| *wj += step * zj);
            }
        }
        let (primal, dual) = primal_dual(z, y, &w, &alpha, c);
        report = SolverReport {
            passes: pass,
            primal,
            dual,
            converged: false,
        };
        if primal - dual <= params.tolerance * primal.abs() {
            report.converged = true;
            break;
        }
    }
    (w, report)
}

/// Labels for every row; ties go to class 1.
pub fn predict(model: &LinearSvmModel, features: ArrayView2<'_, f64>) -> Result<Vec<Label>> {
    if features.ncols() != model.weights.len() {
        return Err(Error::dim(format!(
            "model expects {} features, got {}",
            model.weights.len(),
            features.ncols()
        )));
    }
    Ok(features
        .axis_iter(Axis(0))
        .map(|row| model.predict_one(row))
        .collect())
}

/// Binary confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

pub fn confusion(truth: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::dim(format!(
            "{} true labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no labels to compare".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        check_label(t)?;
        check_label(p)?;
        match (t == CLASS_1, p == CLASS_1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// `[recall, precision, accuracy, f1, specificity, kappa]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsVector(pub [f64; 6]);

impl MetricsVector {
    pub const NAMES: [&'static str; 6] = [
        "recall",
        "precision",
        "accuracy",
        "f1",
        "specificity",
        "kappa",
    ];

    pub fn recall(&self) -> f64 {
        self.0[0]
    }
    pub fn precision(&self) -> f64 {
        self.0[1]
    }
    pub fn accuracy(&self) -> f64 {
        self.0[2]
    }
    pub fn f1(&self) -> f64 {
        self.0[3]
    }
    pub fn specificity(&self) -> f64 {
        self.0[4]
    }
    pub fn kappa(&self) -> f64 {
        self.0[5]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Six metrics from a confusion matrix. Any 0/0 ratio evaluates to 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsVector> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    let (tp, fn_, fp, tn) = (cm.tp as f64, cm.fn_ as f64, cm.fp as f64, cm.tn as f64);
    let n = total as f64;
    let recall = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let accuracy = (tp + tn) / n;
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    let specificity = ratio(tn, tn + fp);
    let chance = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n);
    let kappa = ratio(accuracy - chance, 1.0 - chance);
    Ok(MetricsVector([
        recall,
        precision,
        accuracy,
        f1,
        specificity,
        kappa,
    ]))
}

/// Confusion + metrics for a prediction run.
pub fn evaluate_predictions(truth: &[Label], predicted: &[Label]) -> Result<MetricsVector> {
    metrics(&confusion(truth, predicted)?)
}
