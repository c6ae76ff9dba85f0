//! Value types shared by the pipeline stages, plus the hold-out split.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class identifier as stored in datasets: 1 (right hand) or 2 (right foot).
pub type Label = u8;

pub const CLASS_1: Label = 1;
pub const CLASS_2: Label = 2;

pub(crate) fn check_label(label: Label) -> Result<()> {
    if label == CLASS_1 || label == CLASS_2 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "label {label} is not 1 or 2"
        )))
    }
}

/// Multichannel epochs (samples x channels) with one label per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    trials: Vec<Array2<f64>>,
    labels: Vec<Label>,
    channel_names: Vec<String>,
    sample_rate_hz: f64,
}

impl TrialSet {
    pub fn new(
        trials: Vec<Array2<f64>>,
        labels: Vec<Label>,
        channel_names: Vec<String>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::InvalidArgument("trial set is empty".into()));
        }
        if trials.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} trials but {} labels",
                trials.len(),
                labels.len()
            )));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample rate {sample_rate_hz} must be positive"
            )));
        }
        let shape = trials[0].dim();
        if shape.1 != channel_names.len() {
            return Err(Error::dim(format!(
                "trials have {} channels but {} names were given",
                shape.1,
                channel_names.len()
            )));
        }
        if let Some((i, t)) = trials.iter().enumerate().find(|(_, t)| t.dim() != shape) {
            return Err(Error::dim(format!(
                "trial {i} is {:?}, expected {:?}",
                t.dim(),
                shape
            )));
        }
        for &l in &labels {
            check_label(l)?;
        }
        if !labels.contains(&CLASS_1) || !labels.contains(&CLASS_2) {
            return Err(Error::SingleClass);
        }
        Ok(TrialSet {
            trials,
            labels,
            channel_names,
            sample_rate_hz,
        })
    }

    pub fn trials(&self) -> &[Array2<f64>] {
        &self.trials
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// (samples, channels) of every trial.
    pub fn geometry(&self) -> (usize, usize) {
        self.trials[0].dim()
    }
}

/// N x D feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
    labels: Vec<Label>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>, labels: Vec<Label>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature matrix must be non-empty, got {n}x{d}"
            )));
        }
        if labels.len() != n {
            return Err(Error::dim(format!("{n} rows but {} labels", labels.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        for &l in &labels {
            check_label(l)?;
        }
        Ok(FeatureMatrix { data, labels })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Number of rows labelled (class 1, class 2).
    pub fn class_counts(&self) -> (usize, usize) {
        class_counts(&self.labels)
    }

    pub fn select(&self, rows: &[usize]) -> Result<FeatureMatrix> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.rows()) {
            return Err(Error::dim(format!(
                "row {bad} out of range for {} rows",
                self.rows()
            )));
        }
        let data = self.data.select(Axis(0), rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        FeatureMatrix::new(data, labels)
    }
}

pub(crate) fn class_counts(labels: &[Label]) -> (usize, usize) {
    labels.iter().fold(
        (0, 0),
        |(a, b), &l| {
            if l == CLASS_1 {
                (a + 1, b)
            } else {
                (a, b + 1)
            }
        },
    )
}

/// Hold-out proportions and seeds for splitting a source/target pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Share of the source set used for the validation-source set (0.75).
    pub validation_source_fraction: f64,
    /// Share of the target set used for the validation-target set (0.25).
    pub validation_target_fraction: f64,
    pub source_seed: u64,
    pub target_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            validation_source_fraction: 0.75,
            validation_target_fraction: 0.25,
            source_seed: 0,
            target_seed: 1,
        }
    }
}

/// The four sets produced by the hold-out protocol.
#[derive(Debug, Clone)]
pub struct HoldoutSets {
    pub validation_source: FeatureMatrix,
    pub train: FeatureMatrix,
    pub validation_target: FeatureMatrix,
    pub test: FeatureMatrix,
}

/// Stratified random partition of row indices into (selected, rest).
///
/// `fraction` of the rows go into the first part; per-class counts are
/// allocated by largest remainder so the total is `round(fraction * N)` and
/// each class is within one instance of its proportional share. Both index
/// lists are returned in ascending order.
pub fn partition_indices(
    labels: &[Label],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} must lie in (0, 1)"
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty set".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        check_label(l)?;
        by_class[(l - 1) as usize].push(i);
    }

    let total = (fraction * labels.len() as f64).round() as usize;
    let ideal: Vec<f64> = by_class.iter().map(|c| fraction * c.len() as f64).collect();
    let mut take: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..by_class.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = take.iter().sum();
    for &c in order.iter().cycle().take(2 * order.len()) {
        if assigned >= total {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            assigned += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::with_capacity(total);
    let mut rest = Vec::with_capacity(labels.len() - total);
    for (members, &k) in by_class.iter_mut().zip(&take) {
        members.shuffle(&mut rng);
        first.extend_from_slice(&members[..k]);
        rest.extend_from_slice(&members[k..]);
    }
    first.sort_unstable();
    rest.sort_unstable();
    Ok((first, rest))
}

fn require_two_per_class(set: &FeatureMatrix, name: &str) -> Result<()> {
    let (a, b) = set.class_counts();
    if a < 2 || b < 2 {
        return Err(Error::InvalidArgument(format!(
            "{name} has {a}/{b} instances per class; at least 2 of each are needed"
        )));
    }
    Ok(())
}

/// Splits source into (validation-source, train) and target into
/// (validation-target, test).
pub fn holdout_split(
    source: &FeatureMatrix,
    target: &FeatureMatrix,
    spec: &SplitSpec,
) -> Result<HoldoutSets> {
    if source.dim() != target.dim() {
        return Err(Error::dim(format!(
            "source has D={} but target has D={}",
            source.dim(),
            target.dim()
        )));
    }
    let (vs, tr) = partition_indices(
        source.labels(),
        spec.validation_source_fraction,
        spec.source_seed,
    )?;
    let (vt, te) = partition_indices(
        target.labels(),
        spec.validation_target_fraction,
        spec.target_seed,
    )?;
    if vs.is_empty() || tr.is_empty() || vt.is_empty() || te.is_empty() {
        return Err(Error::InvalidArgument(
            "split produced an empty subset".into(),
        ));
    }
    let sets = HoldoutSets {
        validation_source: source.select(&vs)?,
        train: source.select(&tr)?,
        validation_target: target.select(&vt)?,
        test: target.select(&te)?,
    };
    require_two_per_class(&sets.validation_source, "validation-source set")?;
    require_two_per_class(&sets.train, "train set")?;
    Ok(sets)
}

/// Same-subject protocol: one small subset serves as validation-source,
/// train and validation-target; the remainder is the test set.
pub fn same_subject_split(
    features: &FeatureMatrix,
    fraction: f64,
    seed: u64,
) -> Result<HoldoutSets> {
    let (small, rest) = partition_indices(features.labels(), fraction, seed)?;
    if small.is_empty() || rest.is_empty() {
        return Err(Error::InvalidArgument(
            "split produced an empty subset".into(),
        ));
    }
    let subset = features.select(&small)?;
    require_two_per_class(&subset, "train set")?;
    Ok(HoldoutSets {
        validation_source: subset.clone(),
        train: subset.clone(),
        validation_target: subset,
        test: features.select(&rest)?,
    })
}

/// d x D projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(Array2<f64>);

impl WeightMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("weight matrix is empty".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight matrix".into()));
        }
        Ok(WeightMatrix(entries))
    }

    /// Projected dimension d.
    pub fn projected_dim(&self) -> usize {
        self.0.nrows()
    }

    /// Original dimension D.
    pub fn original_dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }

    /// Flattens back to the row-major decision vector.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }
}

/// Reads a length d*D vector as a d x D matrix, row-major.
pub fn reshape_row_major(x: &[f64], d: usize, original_dim: usize) -> Result<WeightMatrix> {
    if d == 0 || original_dim == 0 || x.len() != d * original_dim {
        return Err(Error::dim(format!(
            "vector of length {} cannot form a {d}x{original_dim} matrix",
            x.len()
        )));
    }
    let entries = Array2::from_shape_vec((d, original_dim), x.to_vec())
        .map_err(|e| Error::dim(e.to_string()))?;
    WeightMatrix::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn balanced(n_per_class: usize, dim: usize) -> FeatureMatrix {
        let n = 2 * n_per_class;
        let data = Array2::from_shape_fn((n, dim), |(i, j)| (i * dim + j) as f64);
        let labels = (0..n).map(|i| if i % 2 == 0 { 1 } else { 2 }).collect();
        FeatureMatrix::new(data, labels).unwrap()
    }

    #[test]
    fn reference_proportions() {
        let src = balanced(140, 3);
        let tar = balanced(140, 3);
        let sets = holdout_split(&src, &tar, &SplitSpec::default()).unwrap();
        assert_eq!(sets.validation_source.rows(), 210);
        assert_eq!(sets.train.rows(), 70);
        assert_eq!(sets.validation_target.rows(), 70);
        assert_eq!(sets.test.rows(), 210);
        assert_eq!(sets.train.class_counts(), (35, 35));
    }

    #[test]
    fn split_is_seeded() {
        let labels: Vec<Label> = (0..280).map(|i| 1 + (i % 2) as u8).collect();
        let a = partition_indices(&labels, 0.75, 9).unwrap();
        let b = partition_indices(&labels, 0.75, 9).unwrap();
        let c = partition_indices(&labels, 0.75, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let labels = vec![1, 2, 1, 2];
        assert!(partition_indices(&labels, 0.0, 0).is_err());
        assert!(partition_indices(&labels, 1.0, 0).is_err());
        assert!(partition_indices(&labels, -0.5, 0).is_err());
    }

    #[test]
    fn split_rejects_starved_training_set() {
        // 3 per class: a 0.75 validation-source share leaves 1 + 1 for training.
        let src = balanced(3, 2);
        let tar = balanced(10, 2);
        let err = holdout_split(&src, &tar, &SplitSpec::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn unbalanced_classes_keep_proportions() {
        let labels: Vec<Label> = (0..101).map(|i| if i < 71 { 1 } else { 2 }).collect();
        let (first, _) = partition_indices(&labels, 0.25, 3).unwrap();
        assert_eq!(first.len(), 25);
        let c1 = first.iter().filter(|&&i| labels[i] == 1).count() as f64;
        assert!((c1 - 71.0 * 0.25).abs() <= 1.0);
    }

    #[test]
    fn reshape_examples() {
        let w = reshape_row_major(&[1., 2., 3., 4., 5., 6.], 2, 3).unwrap();
        assert_eq!(w.entries(), &array![[1., 2., 3.], [4., 5., 6.]]);
        let single = reshape_row_major(&[7., 8., 9.], 1, 3).unwrap();
        assert_eq!(single.entries(), &array![[7., 8., 9.]]);
        assert!(reshape_row_major(&[1., 2., 3.], 2, 2).is_err());
    }

    #[test]
    fn trial_set_invariants() {
        let t = Array2::<f64>::zeros((4, 2));
        let names = vec!["C3".to_string(), "C4".to_string()];
        assert!(
            TrialSet::new(vec![t.clone(), t.clone()], vec![1, 2], names.clone(), 100.0).is_ok()
        );
        assert!(matches!(
            TrialSet::new(vec![t.clone(), t.clone()], vec![1, 1], names.clone(), 100.0),
            Err(Error::SingleClass)
        ));
        assert!(TrialSet::new(
            vec![t.clone(), Array2::zeros((5, 2))],
            vec![1, 2],
            names.clone(),
            100.0
        )
        .is_err());
        assert!(TrialSet::new(vec![t.clone(), t], vec![1, 3], names, 100.0).is_err());
    }

    proptest! {
        #[test]
        fn reshape_flatten_roundtrip(d in 1usize..6, cols in 1usize..12, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..d * cols).map(|_| rng.random::<f64>()).collect();
            let w = reshape_row_major(&x, d, cols).unwrap();
            for i in 0..d {
                for j in 0..cols {
                    prop_assert_eq!(w.entries()[[i, j]], x[i * cols + j]);
                }
            }
            prop_assert_eq!(w.to_row_major(), x);
        }

        #[test]
        fn split_is_a_partition(n in 4usize..120, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let labels: Vec<Label> = (0..n).map(|i| if (i * 7) % 3 == 0 { 1 } else { 2 }).collect();
            let (a, b) = partition_indices(&labels, frac, seed).unwrap();
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(a.len(), (frac * n as f64).round() as usize);
        }
    }
}
