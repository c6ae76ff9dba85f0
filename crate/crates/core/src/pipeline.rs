//! Experiment orchestration: preprocess -> featurize -> split ->
//! learn projection -> train/test, repeated over subject pairs and seeds,
//! with all results written to a bundle directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::classifier::MetricsVector;
use crate::config::{Config, Mode};
use crate::data::{holdout_split, same_subject_split, FeatureMatrix, HoldoutSets, TrialSet};
use crate::dsp::small_laplacian;
use crate::error::{DataError, Error, Result};
use crate::features::featurize_set;
use crate::io::{self, Payload, Recording};
use crate::maoo::StopReason;
use crate::synth::{generate_features, generate_recordings, SynthMode};
use crate::transfer::{
    learn_projection, train_and_test, train_and_test_raw, Evaluation, TransferProblem,
};

/// A subject's features, ready for splitting.
#[derive(Debug, Clone)]
pub struct Subject {
    pub name: String,
    pub features: FeatureMatrix,
}

fn select_channels(x: &Array2<f64>, names: &[String], wanted: &[String]) -> Result<Array2<f64>> {
    let idx = wanted
        .iter()
        .map(|w| {
            names
                .iter()
                .position(|n| n == w)
                .ok_or_else(|| Error::MissingChannel(w.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(x.select(Axis(1), &idx))
}

/// Band-pass every channel, apply the small Laplacian (or plain channel
/// selection), then cut epochs. Continuous records are filtered before
/// slicing.
pub fn preprocess(rec: &Recording, cfg: &Config) -> Result<TrialSet> {
    let dsp = &cfg.dsp;
    if rec.epoch_samples != dsp.epoch_samples {
        return Err(DataError::Geometry {
            context: format!("subject {}", rec.subject),
            expected: format!("{} samples per epoch", dsp.epoch_samples),
            found: format!("{} samples per epoch", rec.epoch_samples),
        }
        .into());
    }
    if rec.sample_rate_hz != cfg.welch.sample_rate_hz {
        return Err(DataError::Geometry {
            context: format!("subject {}", rec.subject),
            expected: format!("{} Hz", cfg.welch.sample_rate_hz),
            found: format!("{} Hz", rec.sample_rate_hz),
        }
        .into());
    }
    let filter = dsp.filter()?;
    let map = dsp.neighbor_map()?;
    let condition = |x: &Array2<f64>| -> Result<Array2<f64>> {
        let filtered = if dsp.bandpass {
            filter.apply_columns(x.view())?
        } else {
            x.clone()
        };
        if dsp.laplacian {
            small_laplacian(filtered.view(), &rec.channel_names, &map, &dsp.channels)
        } else {
            select_channels(&filtered, &rec.channel_names, &dsp.channels)
        }
    };
    let (trials, labels) = match &rec.payload {
        Payload::Continuous {
            data,
            onsets,
            labels,
        } => {
            let conditioned = condition(data)?;
            (
                crate::dsp::epoch_slice(conditioned.view(), onsets, rec.epoch_samples)?,
                labels.clone(),
            )
        }
        Payload::Epochs { trials, labels } => (
            trials.iter().map(condition).collect::<Result<Vec<_>>>()?,
            labels.clone(),
        ),
    };
    TrialSet::new(trials, labels, dsp.channels.clone(), rec.sample_rate_hz)
}

pub fn featurize_recording(rec: &Recording, cfg: &Config) -> Result<FeatureMatrix> {
    featurize_set(&preprocess(rec, cfg)?, &cfg.welch, &cfg.bands()?)
}

/// Channels a synthetic recording needs: every channel the Laplacian reads.
pub fn montage(cfg: &Config) -> Result<Vec<String>> {
    let mut chans = cfg.dsp.neighbor_map()?.required_channels();
    for c in &cfg.dsp.channels {
        if !chans.contains(c) {
            chans.push(c.clone());
        }
    }
    Ok(chans)
}

/// Subjects from the configured manifests, or the synthetic pair named
/// `source` and `target`.
pub fn load_subjects(cfg: &Config) -> Result<Vec<Subject>> {
    if cfg.experiment.subjects.is_empty() {
        let (s, t) = match cfg.synthetic.mode {
            SynthMode::Features => generate_features(&cfg.synthetic)?,
            SynthMode::Signal => {
                let (s, t) = generate_recordings(&cfg.synthetic, &montage(cfg)?)?;
                (featurize_recording(&s, cfg)?, featurize_recording(&t, cfg)?)
            }
        };
        return Ok(vec![
            Subject {
                name: "source".into(),
                features: s,
            },
            Subject {
                name: "target".into(),
                features: t,
            },
        ]);
    }
    cfg.experiment
        .subjects
        .iter()
        .map(|s| {
            let rec = io::load_recording(&s.manifest)?;
            info!("{}: {} trials", s.name, rec.labels().len());
            Ok(Subject {
                name: s.name.clone(),
                features: featurize_recording(&rec, cfg)?,
            })
        })
        .collect()
}

/// Ordered (source, target) index pairs to run.
pub fn plan_pairs(cfg: &Config, subjects: &[Subject]) -> Result<Vec<(usize, usize)>> {
    let index = |name: &str| {
        subjects
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::Config(format!("unknown subject {name}")))
    };
    let synthetic = cfg.experiment.subjects.is_empty();
    let mut pairs: Vec<(usize, usize)> = if !cfg.experiment.pairs.is_empty() {
        cfg.experiment
            .pairs
            .iter()
            .map(|[s, t]| Ok((index(s)?, index(t)?)))
            .collect::<Result<_>>()?
    } else if cfg.experiment.mode == Mode::SameSubject {
        (0..subjects.len()).map(|i| (i, i)).collect()
    } else if synthetic {
        vec![(0, 1)]
    } else {
        (0..subjects.len())
            .flat_map(|s| (0..subjects.len()).map(move |t| (s, t)))
            .collect()
    };
    if cfg.experiment.mode == Mode::SameSubject {
        pairs.retain(|(s, t)| s == t);
    }
    if pairs.is_empty() {
        return Err(Error::Config("no subject pairs to run".into()));
    }
    Ok(pairs)
}

/// SplitMix64 finalizer, used to derive independent seeds from a root.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(root), |acc, &t| mix(acc ^ mix(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    WithTl,
    WithoutTl,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::WithTl => "with_tl",
            Method::WithoutTl => "without_tl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub source: String,
    pub target: String,
    pub repeat: usize,
    pub method: Method,
    /// Projected dimension; absent for the raw-feature baseline.
    pub d: Option<usize>,
    pub metrics: MetricsVector,
    pub idist: Option<f64>,
    pub generations: Option<usize>,
    pub evaluations: Option<usize>,
    pub stop_reason: Option<StopReason>,
    pub test_size: usize,
    /// Optimizer wall time (with projection) or SVM fit time (baseline).
    pub train_seconds: f64,
    pub test_latency_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub source: String,
    pub target: String,
    pub repeat: usize,
    pub cause: String,
}

/// Contents of `bundle.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleInfo {
    pub config_hash: String,
    pub mode: Mode,
    pub d: usize,
    pub repeats: usize,
    pub pairs: Vec<[String; 2]>,
    pub planned_runs: usize,
    pub completed_runs: usize,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub info: BundleInfo,
    pub records: Vec<RunRecord>,
}

fn pair_dir(out: &Path, source: &str, target: &str, repeat: usize) -> PathBuf {
    out.join("runs")
        .join(format!("{source}_{target}"))
        .join(format!("r{repeat}"))
}

fn split_for(
    cfg: &Config,
    subjects: &[Subject],
    (s, t): (usize, usize),
    repeat: usize,
) -> Result<HoldoutSets> {
    let root = cfg.experiment.seed;
    let tag = [s as u64, t as u64, repeat as u64];
    let src_seed = derive_seed(root, &[tag[0], tag[1], tag[2], 0]);
    let tar_seed = derive_seed(root, &[tag[0], tag[1], tag[2], 1]);
    if s == t {
        same_subject_split(
            &subjects[s].features,
            cfg.experiment.same_subject_fraction,
            src_seed,
        )
    } else {
        holdout_split(
            &subjects[s].features,
            &subjects[t].features,
            &cfg.split_spec(src_seed, tar_seed),
        )
    }
}

fn record(
    subjects: &[Subject],
    (s, t): (usize, usize),
    repeat: usize,
    method: Method,
    eval: &Evaluation,
    test_size: usize,
) -> RunRecord {
    RunRecord {
        source: subjects[s].name.clone(),
        target: subjects[t].name.clone(),
        repeat,
        method,
        d: None,
        metrics: eval.metrics,
        idist: None,
        generations: None,
        evaluations: None,
        stop_reason: None,
        test_size,
        train_seconds: 0.0,
        test_latency_seconds: eval.latency_per_instance.as_secs_f64(),
    }
}

/// One repeat of one pair; writes its per-run artifacts under `out`.
fn run_one(
    cfg: &Config,
    subjects: &[Subject],
    pair: (usize, usize),
    repeat: usize,
    d: usize,
    out: &Path,
) -> Result<Vec<RunRecord>> {
    let sets = split_for(cfg, subjects, pair, repeat)?;
    let dir = pair_dir(out, &subjects[pair.0].name, &subjects[pair.1].name, repeat);
    fs::create_dir_all(&dir)?;
    let mut records = Vec::new();

    if cfg.experiment.mode != Mode::Baseline {
        let mut maoo = cfg.maoo.clone();
        maoo.seed = derive_seed(
            cfg.maoo.seed ^ cfg.experiment.seed,
            &[pair.0 as u64, pair.1 as u64, repeat as u64, d as u64],
        );
        let problem = TransferProblem::new(
            sets.validation_source.clone(),
            sets.validation_target.clone(),
            d,
            cfg.svm,
            maoo,
        )?;
        let learned = learn_projection(&problem)?;
        let eval = train_and_test(&learned.weights, &sets.train, &sets.test, &cfg.svm)?;
        io::write_trace(&dir.join("trace.csv"), &learned.trace)?;
        io::write_front(&dir.join("front.csv"), &learned.front)?;
        io::write_weights(&dir.join("weights.csv"), &learned.weights)?;
        io::write_scatter(
            &dir.join("scatter.csv"),
            &eval.test_space,
            sets.test.labels(),
            &eval.predictions,
        )?;
        let mut r = record(
            subjects,
            pair,
            repeat,
            Method::WithTl,
            &eval,
            sets.test.rows(),
        );
        r.d = Some(d);
        r.idist = Some(learned.idist);
        r.generations = learned.trace.last().map(|t| t.generation);
        r.evaluations = Some(learned.evaluations);
        r.stop_reason = Some(learned.stop_reason);
        r.train_seconds = learned.elapsed.as_secs_f64();
        records.push(r);
    }

    let started = Instant::now();
    let eval = train_and_test_raw(&sets.train, &sets.test, &cfg.svm)?;
    let elapsed = started.elapsed().as_secs_f64();
    io::write_scatter(
        &dir.join("scatter_without_tl.csv"),
        &eval.test_space,
        sets.test.labels(),
        &eval.predictions,
    )?;
    let mut r = record(
        subjects,
        pair,
        repeat,
        Method::WithoutTl,
        &eval,
        sets.test.rows(),
    );
    r.train_seconds =
        (elapsed - eval.latency_per_instance.as_secs_f64() * sets.test.rows() as f64).max(0.0);
    records.push(r);
    Ok(records)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), T::to_string)
}

fn stop_name(s: &Option<StopReason>) -> String {
    match s {
        Some(StopReason::MaxGenerations) => "max_generations".into(),
        Some(StopReason::Stalled) => "stalled".into(),
        None => String::new(),
    }
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    w.write_record(header)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for row in rows {
        w.write_record(&row)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub const METRICS_HEADER: [&str; 15] = [
    "source",
    "target",
    "repeat",
    "method",
    "d",
    "recall",
    "precision",
    "accuracy",
    "f1",
    "specificity",
    "kappa",
    "idist",
    "generations",
    "evaluations",
    "stop_reason",
];

/// Deterministic per-run metrics (no timings, so reruns compare bitwise).
pub fn write_metrics_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    write_csv(
        path,
        &METRICS_HEADER,
        records.iter().map(|r| {
            let mut row = vec![
                r.source.clone(),
                r.target.clone(),
                r.repeat.to_string(),
                r.method.as_str().to_string(),
                opt(&r.d),
            ];
            row.extend(r.metrics.as_slice().iter().map(|v| v.to_string()));
            row.push(opt(&r.idist));
            row.push(opt(&r.generations));
            row.push(opt(&r.evaluations));
            row.push(stop_name(&r.stop_reason));
            row
        }),
    )
}

fn write_timing_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    write_csv(
        path,
        &[
            "source",
            "target",
            "repeat",
            "method",
            "d",
            "train_seconds",
            "test_latency_seconds",
        ],
        records.iter().map(|r| {
            vec![
                r.source.clone(),
                r.target.clone(),
                r.repeat.to_string(),
                r.method.as_str().to_string(),
                opt(&r.d),
                r.train_seconds.to_string(),
                r.test_latency_seconds.to_string(),
            ]
        }),
    )
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per (pair, method): run count plus mean/std of every metric.
fn write_summary_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut header = vec!["source", "target", "method", "runs"];
    let cols: Vec<String> = MetricsVector::NAMES
        .iter()
        .flat_map(|n| [format!("mean_{n}"), format!("std_{n}")])
        .collect();
    header.extend(cols.iter().map(String::as_str));
    let mut groups: Vec<(&str, &str, Method)> = Vec::new();
    for r in records {
        let key = (r.source.as_str(), r.target.as_str(), r.method);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    write_csv(
        path,
        &header,
        groups.into_iter().map(|(s, t, m)| {
            let members: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.source == s && r.target == t && r.method == m)
                .collect();
            let mut row = vec![
                s.to_string(),
                t.to_string(),
                m.as_str().to_string(),
                members.len().to_string(),
            ];
            for k in 0..MetricsVector::NAMES.len() {
                let v: Vec<f64> = members.iter().map(|r| r.metrics.0[k]).collect();
                let (mean, sd) = mean_std(&v);
                row.push(mean.to_string());
                row.push(sd.to_string());
            }
            row
        }),
    )
}

fn run_grid(
    cfg: &Config,
    subjects: &[Subject],
    pairs: &[(usize, usize)],
    d: usize,
    out: &Path,
) -> (Vec<RunRecord>, Vec<Failure>) {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &pair in pairs {
        for repeat in 0..cfg.experiment.repeats {
            let (s, t) = (&subjects[pair.0].name, &subjects[pair.1].name);
            info!("{s} -> {t}, repeat {repeat}, d = {d}");
            match run_one(cfg, subjects, pair, repeat, d, out) {
                Ok(r) => records.extend(r),
                Err(e) => {
                    warn!("{s} -> {t}, repeat {repeat} failed: {e}");
                    failures.push(Failure {
                        source: s.clone(),
                        target: t.clone(),
                        repeat,
                        cause: e.to_string(),
                    });
                }
            }
        }
    }
    (records, failures)
}

fn bundle_info(
    cfg: &Config,
    subjects: &[Subject],
    pairs: &[(usize, usize)],
    failures: Vec<Failure>,
) -> BundleInfo {
    let planned = pairs.len() * cfg.experiment.repeats;
    BundleInfo {
        config_hash: cfg.hash(),
        mode: cfg.experiment.mode,
        d: cfg.experiment.d,
        repeats: cfg.experiment.repeats,
        pairs: pairs
            .iter()
            .map(|&(s, t)| [subjects[s].name.clone(), subjects[t].name.clone()])
            .collect(),
        planned_runs: planned,
        completed_runs: planned - failures.len(),
        failures,
    }
}

fn write_bundle_json(dir: &Path, info: &BundleInfo) -> Result<()> {
    let text =
        serde_json::to_string_pretty(info).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    fs::write(dir.join("bundle.json"), text + "\n")?;
    Ok(())
}

/// Runs the configured protocol on already-featurized subjects.
pub fn run_on_subjects(cfg: &Config, subjects: &[Subject], out: &Path) -> Result<Bundle> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    let pairs = plan_pairs(cfg, subjects)?;
    let (records, failures) = run_grid(cfg, subjects, &pairs, cfg.experiment.d, out);
    let info = bundle_info(cfg, subjects, &pairs, failures);
    write_metrics_csv(&out.join("metrics.csv"), &records)?;
    write_timing_csv(&out.join("timing.csv"), &records)?;
    write_summary_csv(&out.join("summary.csv"), &records)?;
    write_bundle_json(out, &info)?;
    Ok(Bundle {
        dir: out.to_path_buf(),
        info,
        records,
    })
}

/// Loads the configured subjects and runs the protocol.
pub fn run_experiment(cfg: &Config, out: &Path) -> Result<Bundle> {
    cfg.validate()?;
    let subjects = load_subjects(cfg)?;
    run_on_subjects(cfg, &subjects, out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_train_seconds: f64,
}

/// Learns projections for every d in the sweep; one summary row per d.
pub fn run_d_sweep(cfg: &Config, subjects: &[Subject], out: &Path) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut cfg = cfg.clone();
    if cfg.experiment.mode == Mode::Baseline {
        cfg.experiment.mode = Mode::Transfer;
    }
    let pairs = plan_pairs(&cfg, subjects)?;
    let mut rows = Vec::new();
    let mut all = Vec::new();
    let mut failures = Vec::new();
    for &d in &cfg.experiment.d_sweep {
        let dir = out.join(format!("d{d}"));
        let (records, f) = run_grid(&cfg, subjects, &pairs, d, &dir);
        failures.extend(f);
        let with: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.method == Method::WithTl)
            .collect();
        let acc: Vec<f64> = with.iter().map(|r| r.metrics.accuracy()).collect();
        let secs: Vec<f64> = with.iter().map(|r| r.train_seconds).collect();
        let (mean, sd) = mean_std(&acc);
        rows.push(SweepRow {
            d,
            runs: with.len(),
            mean_accuracy: mean,
            std_accuracy: sd,
            mean_train_seconds: mean_std(&secs).0,
        });
        all.extend(records);
    }
    write_csv(
        &out.join("sweep_d.csv"),
        &[
            "d",
            "runs",
            "mean_accuracy",
            "std_accuracy",
            "mean_train_seconds",
        ],
        rows.iter().map(|r| {
            vec![
                r.d.to_string(),
                r.runs.to_string(),
                r.mean_accuracy.to_string(),
                r.std_accuracy.to_string(),
                r.mean_train_seconds.to_string(),
            ]
        }),
    )?;
    write_metrics_csv(&out.join("metrics.csv"), &all)?;
    if !failures.is_empty() {
        let text = serde_json::to_string_pretty(&failures)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        fs::write(out.join("failures.json"), text + "\n")?;
    }
    Ok(rows)
}
