//! Dataset manifests, CSV payloads and the CSV artifacts written by the
//! experiment runner.
//!
//! A manifest is a JSON document next to its CSV payloads. Trials either
//! point into one continuous recording (`onset`) or at their own CSV
//! (`file`). Payload CSVs hold one row per sample and one column per
//! channel, with the channel names as header.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classifier::MetricsVector;
use crate::data::{FeatureMatrix, Label, TrialSet, WeightMatrix, CLASS_1, CLASS_2};
use crate::dsp::epoch_slice;
use crate::error::{DataError, Error, Result};
use crate::maoo::TraceRow;
use crate::transfer::FrontPoint;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    /// Per-trial CSV, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// First sample of the trial in the continuous recording.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onset: Option<usize>,
    pub label: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub subject: String,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    pub epoch_samples: usize,
    /// Continuous recording CSV, required when trials use `onset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<String>,
    pub trials: Vec<TrialEntry>,
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Continuous {
        data: Array2<f64>,
        onsets: Vec<usize>,
        labels: Vec<Label>,
    },
    Epochs {
        trials: Vec<Array2<f64>>,
        labels: Vec<Label>,
    },
}

/// A subject's raw data before preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject: String,
    pub channel_names: Vec<String>,
    pub sample_rate_hz: f64,
    pub epoch_samples: usize,
    pub payload: Payload,
}

impl Recording {
    pub fn labels(&self) -> &[Label] {
        match &self.payload {
            Payload::Continuous { labels, .. } | Payload::Epochs { labels, .. } => labels,
        }
    }

    /// Raw epochs, sliced from the continuous record if necessary.
    pub fn to_trial_set(&self) -> Result<TrialSet> {
        let (trials, labels) = match &self.payload {
            Payload::Continuous {
                data,
                onsets,
                labels,
            } => (
                epoch_slice(data.view(), onsets, self.epoch_samples)?,
                labels.clone(),
            ),
            Payload::Epochs { trials, labels } => (trials.clone(), labels.clone()),
        };
        TrialSet::new(
            trials,
            labels,
            self.channel_names.clone(),
            self.sample_rate_hz,
        )
    }
}

fn parse_err(context: impl Into<String>, message: impl ToString) -> Error {
    DataError::Parse {
        context: context.into(),
        message: message.to_string(),
    }
    .into()
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(DataError::MissingFile {
            path: path.to_path_buf(),
        }
        .into())
    }
}

fn label_from(raw: i64, context: &str) -> Result<Label> {
    match raw {
        1 => Ok(CLASS_1),
        2 => Ok(CLASS_2),
        _ => Err(DataError::UnknownLabel {
            label: raw,
            context: context.to_string(),
        }
        .into()),
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    require_file(path)?;
    let text = fs::read_to_string(path)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| parse_err(path.display().to_string(), e))?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(parse_err(
            path.display().to_string(),
            format!("unsupported format_version {}", manifest.format_version),
        ));
    }
    Ok(manifest)
}

/// Reads a samples x channels CSV whose header must equal `channels`.
pub fn read_matrix_csv(path: &Path, channels: &[String]) -> Result<Array2<f64>> {
    require_file(path)?;
    let ctx = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(&ctx, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(&ctx, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != channels {
        return Err(DataError::Geometry {
            context: ctx,
            expected: format!("channels {channels:?}"),
            found: format!("channels {header:?}"),
        }
        .into());
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(&ctx, e))?;
        if record.len() != channels.len() {
            return Err(DataError::Geometry {
                context: format!("{ctx} row {}", rows + 1),
                expected: format!("{} columns", channels.len()),
                found: format!("{} columns", record.len()),
            }
            .into());
        }
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("{ctx} row {}", rows + 1), e))?;
            values.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, channels.len()), values).map_err(|e| parse_err(ctx, e))
}

/// Loads a manifest and its payloads without any preprocessing.
pub fn load_recording(manifest_path: &Path) -> Result<Recording> {
    let m = read_manifest(manifest_path)?;
    let ctx = manifest_path.display().to_string();
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    if m.trials.is_empty() {
        return Err(DataError::Empty(format!("{ctx} lists no trials")).into());
    }
    if m.channel_names.is_empty() || m.epoch_samples == 0 {
        return Err(parse_err(
            &ctx,
            "channel_names and epoch_samples must be non-empty",
        ));
    }
    let labels = m
        .trials
        .iter()
        .enumerate()
        .map(|(i, t)| label_from(t.label, &format!("{ctx} trial {i}")))
        .collect::<Result<Vec<_>>>()?;

    let payload = if let Some(cont) = &m.continuous {
        let data = read_matrix_csv(&base.join(cont), &m.channel_names)?;
        let onsets = m
            .trials
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let onset = t
                    .onset
                    .ok_or_else(|| parse_err(&ctx, format!("trial {i} has no onset")))?;
                if onset + m.epoch_samples > data.nrows() {
                    return Err(DataError::Geometry {
                        context: format!("{ctx} trial {i}"),
                        expected: format!("onset + {} <= {}", m.epoch_samples, data.nrows()),
                        found: format!("onset {onset}"),
                    }
                    .into());
                }
                Ok(onset)
            })
            .collect::<Result<Vec<_>>>()?;
        Payload::Continuous {
            data,
            onsets,
            labels,
        }
    } else {
        let trials = m
            .trials
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let file = t
                    .file
                    .as_ref()
                    .ok_or_else(|| parse_err(&ctx, format!("trial {i} has no file")))?;
                let path = base.join(file);
                let x = read_matrix_csv(&path, &m.channel_names)?;
                if x.nrows() != m.epoch_samples {
                    return Err(DataError::Geometry {
                        context: path.display().to_string(),
                        expected: format!("{} samples", m.epoch_samples),
                        found: format!("{} samples", x.nrows()),
                    }
                    .into());
                }
                Ok(x)
            })
            .collect::<Result<Vec<_>>>()?;
        Payload::Epochs { trials, labels }
    };
    Ok(Recording {
        subject: m.subject,
        channel_names: m.channel_names,
        sample_rate_hz: m.sample_rate_hz,
        epoch_samples: m.epoch_samples,
        payload,
    })
}

/// Manifest -> raw epochs.
pub fn load_dataset(manifest_path: &Path) -> Result<TrialSet> {
    load_recording(manifest_path)?.to_trial_set()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

/// `{}` formatting of f64 is the shortest string that parses back to the
/// same value, so written matrices reload bitwise.
fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_matrix_csv(path: &Path, header: &[String], data: &Array2<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_io)?;
    for row in data.rows() {
        w.write_record(row.iter().map(|&v| fmt(v)))
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a recording as manifest + CSV payloads into `dir` and returns the
/// manifest path.
pub fn save_recording(rec: &Recording, dir: &Path, provenance: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (continuous, trials) = match &rec.payload {
        Payload::Continuous {
            data,
            onsets,
            labels,
        } => {
            let name = "continuous.csv".to_string();
            write_matrix_csv(&dir.join(&name), &rec.channel_names, data)?;
            let entries = onsets
                .iter()
                .zip(labels)
                .map(|(&onset, &label)| TrialEntry {
                    file: None,
                    onset: Some(onset),
                    label: label as i64,
                })
                .collect();
            (Some(name), entries)
        }
        Payload::Epochs { trials, labels } => {
            let mut entries = Vec::with_capacity(trials.len());
            for (i, (t, &label)) in trials.iter().zip(labels).enumerate() {
                let name = format!("trial_{i:04}.csv");
                write_matrix_csv(&dir.join(&name), &rec.channel_names, t)?;
                entries.push(TrialEntry {
                    file: Some(name),
                    onset: None,
                    label: label as i64,
                });
            }
            (None, entries)
        }
    };
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        subject: rec.subject.clone(),
        sample_rate_hz: rec.sample_rate_hz,
        channel_names: rec.channel_names.clone(),
        epoch_samples: rec.epoch_samples,
        continuous,
        trials,
        provenance: provenance.to_string(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Saves epochs as per-trial CSVs.
pub fn save_trial_set(
    set: &TrialSet,
    subject: &str,
    dir: &Path,
    provenance: &str,
) -> Result<PathBuf> {
    let rec = Recording {
        subject: subject.to_string(),
        channel_names: set.channel_names().to_vec(),
        sample_rate_hz: set.sample_rate_hz(),
        epoch_samples: set.geometry().0,
        payload: Payload::Epochs {
            trials: set.trials().to_vec(),
            labels: set.labels().to_vec(),
        },
    };
    save_recording(&rec, dir, provenance)
}

/// `label,f0,f1,...` with one row per instance.
pub fn write_features(path: &Path, fm: &FeatureMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..fm.dim()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(csv_io)?;
    for (row, &label) in fm.data().rows().into_iter().zip(fm.labels()) {
        let mut rec = vec![label.to_string()];
        rec.extend(row.iter().map(|&v| fmt(v)));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    require_file(path)?;
    let ctx = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(&ctx, e))?;
    let dim = reader.headers().map_err(|e| parse_err(&ctx, e))?.len();
    if dim < 2 {
        return Err(parse_err(
            &ctx,
            "expected a label column and at least one feature",
        ));
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(&ctx, e))?;
        let row_ctx = format!("{ctx} row {}", i + 1);
        let raw: i64 = record[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(&row_ctx, e))?;
        labels.push(label_from(raw, &row_ctx)?);
        for field in record.iter().skip(1) {
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(&row_ctx, e))?,
            );
        }
    }
    if labels.is_empty() {
        return Err(DataError::Empty(ctx).into());
    }
    let data =
        Array2::from_shape_vec((labels.len(), dim - 1), values).map_err(|e| parse_err(&ctx, e))?;
    FeatureMatrix::new(data, labels)
}

/// Two header lines `d,<d>` and `D,<D>`, then the d rows of W.
pub fn write_weights(path: &Path, w: &WeightMatrix) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = format!("d,{}\nD,{}\n", w.projected_dim(), w.original_dim());
    for row in w.entries().rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<WeightMatrix> {
    require_file(path)?;
    let ctx = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<usize> {
        let line = lines
            .next()
            .ok_or_else(|| parse_err(&ctx, "truncated header"))?;
        match line.split_once(',') {
            Some((k, v)) if k.trim() == key => v.trim().parse().map_err(|e| parse_err(&ctx, e)),
            _ => Err(parse_err(
                &ctx,
                format!("expected `{key},<n>`, got `{line}`"),
            )),
        }
    };
    let d = header("d")?;
    let big_d = header("D")?;
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .flat_map(|l| l.split(','))
        .map(|v| v.trim().parse::<f64>().map_err(|e| parse_err(&ctx, e)))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != d * big_d {
        return Err(DataError::Geometry {
            context: ctx,
            expected: format!("{d} x {big_d} entries"),
            found: format!("{} entries", values.len()),
        }
        .into());
    }
    WeightMatrix::new(Array2::from_shape_vec((d, big_d), values).map_err(|e| parse_err(&ctx, e))?)
}

fn metric_header() -> Vec<String> {
    MetricsVector::NAMES.iter().map(|s| s.to_string()).collect()
}

/// Six metric columns plus `idist`, one row per front member.
pub fn write_front(path: &Path, front: &[FrontPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = metric_header();
    header.push("idist".into());
    w.write_record(&header).map_err(csv_io)?;
    for p in front {
        let mut rec: Vec<String> = p.metrics.as_slice().iter().map(|&v| fmt(v)).collect();
        rec.push(fmt(p.idist));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Per generation: minimum idist (population and incl. archive) and the
/// per-objective population maxima.
pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec![
        "generation".to_string(),
        "min_idist".into(),
        "best_idist".into(),
    ];
    header.extend(MetricsVector::NAMES.iter().map(|n| format!("max_{n}")));
    header.push("restarted".into());
    w.write_record(&header).map_err(csv_io)?;
    for row in trace {
        let mut rec = vec![
            row.generation.to_string(),
            fmt(row.min_idist),
            fmt(row.best_idist),
        ];
        rec.extend(row.objective_max.iter().map(|&v| fmt(v)));
        rec.push(row.restarted.map_or(String::new(), |i| i.to_string()));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Test instances in the classifier's space with true and predicted labels.
pub fn write_scatter(
    path: &Path,
    space: &Array2<f64>,
    truth: &[Label],
    predicted: &[Label],
) -> Result<()> {
    if space.nrows() != truth.len() || truth.len() != predicted.len() {
        return Err(Error::dim(format!(
            "scatter: {} points, {} labels, {} predictions",
            space.nrows(),
            truth.len(),
            predicted.len()
        )));
    }
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (0..space.ncols()).map(|j| format!("x{j}")).collect();
    header.push("true_label".into());
    header.push("predicted_label".into());
    w.write_record(&header).map_err(csv_io)?;
    for ((row, t), p) in space.rows().into_iter().zip(truth).zip(predicted) {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        rec.push(t.to_string());
        rec.push(p.to_string());
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}
