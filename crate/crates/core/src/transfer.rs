//! Projection-based transfer: the six-objective fitness of a projection
//! matrix and the learn / train / test flow around it.

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::classifier::{evaluate_predictions, predict, train_svm, MetricsVector, SvmParams};
use crate::data::{reshape_row_major, FeatureMatrix, Label, WeightMatrix};
use crate::error::{Error, Result};
use crate::maoo::{self, MaooConfig, StopReason, TraceRow};

/// `features (N x D) . W^T (D x d) -> N x d`.
pub fn project(features: ArrayView2<'_, f64>, w: &WeightMatrix) -> Result<Array2<f64>> {
    if features.ncols() != w.original_dim() {
        return Err(Error::dim(format!(
            "features have D={} but W is {}x{}",
            features.ncols(),
            w.projected_dim(),
            w.original_dim()
        )));
    }
    Ok(features.dot(&w.entries().t()))
}

pub fn project_set(features: &FeatureMatrix, w: &WeightMatrix) -> Result<FeatureMatrix> {
    FeatureMatrix::new(
        project(features.data().view(), w)?,
        features.labels().to_vec(),
    )
}

#[derive(Debug, Clone)]
pub struct TransferProblem {
    pub validation_source: FeatureMatrix,
    pub validation_target: FeatureMatrix,
    /// Projected dimension d.
    pub d: usize,
    pub svm: SvmParams,
    pub maoo: MaooConfig,
}

impl TransferProblem {
    /// Validates shapes and sets the optimizer dimension to `d * D`.
    pub fn new(
        validation_source: FeatureMatrix,
        validation_target: FeatureMatrix,
        d: usize,
        svm: SvmParams,
        mut maoo: MaooConfig,
    ) -> Result<Self> {
        if validation_source.dim() != validation_target.dim() {
            return Err(Error::dim(format!(
                "validation-source D={} vs validation-target D={}",
                validation_source.dim(),
                validation_target.dim()
            )));
        }
        if d == 0 {
            return Err(Error::Config(
                "projected dimension d must be positive".into(),
            ));
        }
        for (set, name) in [
            (&validation_source, "validation-source"),
            (&validation_target, "validation-target"),
        ] {
            let (a, b) = set.class_counts();
            if a == 0 || b == 0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} set must contain both classes"
                )));
            }
        }
        if maoo.ideal.len() != MetricsVector::NAMES.len() {
            return Err(Error::Config(format!(
                "transfer uses {} objectives but the ideal vector has {}",
                MetricsVector::NAMES.len(),
                maoo.ideal.len()
            )));
        }
        svm.validate()?;
        maoo.dimension = d * validation_source.dim();
        maoo.validate()?;
        Ok(TransferProblem {
            validation_source,
            validation_target,
            d,
            svm,
            maoo,
        })
    }

    pub fn original_dim(&self) -> usize {
        self.validation_source.dim()
    }

    /// Decision-vector length n = d * D.
    pub fn n(&self) -> usize {
        self.d * self.original_dim()
    }
}

/// Metrics of a source-trained, target-tested classifier in the space
/// projected by the row-major decoding of `x`.
pub fn fitness(x: &[f64], problem: &TransferProblem) -> Result<MetricsVector> {
    let w = reshape_row_major(x, problem.d, problem.original_dim())?;
    let src = project(problem.validation_source.data().view(), &w)?;
    let model = train_svm(src.view(), problem.validation_source.labels(), &problem.svm)?;
    let tar = project(problem.validation_target.data().view(), &w)?;
    let predicted = predict(&model, tar.view())?;
    evaluate_predictions(problem.validation_target.labels(), &predicted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontPoint {
    pub metrics: MetricsVector,
    pub idist: f64,
}

#[derive(Debug, Clone)]
pub struct LearnedProjection {
    pub weights: WeightMatrix,
    pub metrics: MetricsVector,
    pub idist: f64,
    pub trace: Vec<TraceRow>,
    /// Objective vectors of the favour non-dominated set the choice came from.
    pub front: Vec<FrontPoint>,
    pub stop_reason: StopReason,
    pub evaluations: usize,
    pub elapsed: Duration,
}

fn metrics_from(f: &[f64]) -> MetricsVector {
    let mut m = [0.0; 6];
    m.copy_from_slice(f);
    MetricsVector(m)
}

/// Evolves W on the validation sets and decides on one projection.
pub fn learn_projection(problem: &TransferProblem) -> Result<LearnedProjection> {
    let started = Instant::now();
    let objective = |x: &[f64]| fitness(x, problem).map(|m| m.0.to_vec());
    let outcome = maoo::run(&problem.maoo, &objective)?;
    let decision = maoo::decide_outcome(&outcome)?;
    let weights = reshape_row_major(&decision.chosen.x, problem.d, problem.original_dim())?;
    let front = decision
        .front
        .iter()
        .map(|c| FrontPoint {
            metrics: metrics_from(&c.f),
            idist: c.idist,
        })
        .collect();
    Ok(LearnedProjection {
        weights,
        metrics: metrics_from(&decision.chosen.f),
        idist: decision.chosen.idist,
        trace: outcome.trace,
        front,
        stop_reason: outcome.stop_reason,
        evaluations: outcome.evaluations,
        elapsed: started.elapsed(),
    })
}

/// Result of the final train-set / test-set evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: MetricsVector,
    pub predictions: Vec<Label>,
    /// Test features in the space the classifier saw (projected or raw).
    pub test_space: Array2<f64>,
    /// Mean projection + prediction time per test instance.
    pub latency_per_instance: Duration,
}

/// Trains on the projected train set and scores the projected test set.
pub fn train_and_test(
    w: &WeightMatrix,
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    svm: &SvmParams,
) -> Result<Evaluation> {
    if train.dim() != test.dim() {
        return Err(Error::dim(format!(
            "train D={} vs test D={}",
            train.dim(),
            test.dim()
        )));
    }
    let projected_train = project(train.data().view(), w)?;
    let model = train_svm(projected_train.view(), train.labels(), svm)?;
    let started = Instant::now();
    let projected_test = project(test.data().view(), w)?;
    let predictions = predict(&model, projected_test.view())?;
    let latency = started.elapsed() / test.rows() as u32;
    Ok(Evaluation {
        metrics: evaluate_predictions(test.labels(), &predictions)?,
        predictions,
        test_space: projected_test,
        latency_per_instance: latency,
    })
}

/// Same flow without a projection: the classifier sees raw features.
pub fn train_and_test_raw(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    svm: &SvmParams,
) -> Result<Evaluation> {
    if train.dim() != test.dim() {
        return Err(Error::dim(format!(
            "train D={} vs test D={}",
            train.dim(),
            test.dim()
        )));
    }
    let model = train_svm(train.data().view(), train.labels(), svm)?;
    let started = Instant::now();
    let predictions = predict(&model, test.data().view())?;
    let latency = started.elapsed() / test.rows() as u32;
    Ok(Evaluation {
        metrics: evaluate_predictions(test.labels(), &predictions)?,
        predictions,
        test_space: test.data().clone(),
        latency_per_instance: latency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_examples() {
        let j = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let w = WeightMatrix::new(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(
            project(j.view(), &w).unwrap(),
            array![[1.0, 2.0], [4.0, 5.0]]
        );

        let eye = WeightMatrix::new(Array2::eye(3)).unwrap();
        assert_eq!(project(j.view(), &eye).unwrap(), j);

        let zero = WeightMatrix::new(Array2::zeros((2, 3))).unwrap();
        assert!(project(j.view(), &zero).unwrap().iter().all(|&v| v == 0.0));

        let wrong = WeightMatrix::new(Array2::zeros((2, 4))).unwrap();
        assert!(project(j.view(), &wrong).is_err());
    }

    #[test]
    fn projection_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut rand_mat = |r, c| Array2::from_shape_fn((r, c), |_| rng.random_range(-2.0..2.0));
        let (j1, j2) = (rand_mat(5, 4), rand_mat(5, 4));
        let (w1, w2) = (rand_mat(3, 4), rand_mat(3, 4));
        let wm = |m: &Array2<f64>| WeightMatrix::new(m.clone()).unwrap();
        let lhs = project((&j1 + &j2).view(), &wm(&w1)).unwrap();
        let rhs = project(j1.view(), &wm(&w1)).unwrap() + project(j2.view(), &wm(&w1)).unwrap();
        let lhs2 = project(j1.view(), &wm(&(&w1 + &w2))).unwrap();
        let rhs2 = project(j1.view(), &wm(&w1)).unwrap() + project(j1.view(), &wm(&w2)).unwrap();
        for (a, b) in lhs
            .iter()
            .zip(rhs.iter())
            .chain(lhs2.iter().zip(rhs2.iter()))
        {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    fn toy_problem() -> TransferProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut set = |n: usize, class1_share: usize| {
            let labels: Vec<Label> = (0..n)
                .map(|i| if i < class1_share { 1 } else { 2 })
                .collect();
            let data = Array2::from_shape_fn((n, 4), |(i, j)| {
                let s = if labels[i] == 1 { 1.0 } else { -1.0 };
                rng.random_range(-0.5..0.5) + if j == 0 { 2.0 * s } else { 0.0 }
            });
            FeatureMatrix::new(data, labels).unwrap()
        };
        let src = set(40, 20);
        let tar = set(30, 12);
        TransferProblem::new(src, tar, 2, SvmParams::default(), MaooConfig::default()).unwrap()
    }

    #[test]
    fn problem_sets_dimension() {
        let p = toy_problem();
        assert_eq!(p.n(), 8);
        assert_eq!(p.maoo.dimension, 8);
    }

    #[test]
    fn zero_projection_predicts_class_one() {
        let p = toy_problem();
        let m = fitness(&vec![0.0; p.n()], &p).unwrap();
        // Balanced source => bias 0 => every tie goes to class 1.
        assert_eq!(m.accuracy(), 12.0 / 30.0);
        assert_eq!(m.recall(), 1.0);
        assert_eq!(m.specificity(), 0.0);
    }

    #[test]
    fn fitness_deterministic_and_in_range() {
        let p = toy_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x: Vec<f64> = (0..p.n()).map(|_| rng.random()).collect();
            let a = fitness(&x, &p).unwrap();
            assert_eq!(a, fitness(&x, &p).unwrap());
            assert!(a.0[..5].iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((-1.0..=1.0).contains(&a.kappa()));
        }
        assert!(fitness(&[0.5; 3], &p).is_err());
    }

    #[test]
    fn identity_like_projection_on_separable_train_equals_test() {
        let p = toy_problem();
        let w = WeightMatrix::new(array![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]).unwrap();
        let e = train_and_test(
            &w,
            &p.validation_source,
            &p.validation_source,
            &SvmParams::default(),
        )
        .unwrap();
        assert_eq!(e.metrics.accuracy(), 1.0);
        assert_eq!(e.predictions.len(), p.validation_source.rows());
    }
}
