//! Seeded synthetic source/target subjects.
//!
//! Each class forms a compact cloud; the target subject is the source
//! distribution rotated in a 2-D informative plane and shifted. In feature
//! mode the clouds live directly in a D-dim feature space; in signal mode
//! the class difference is carried by rhythm amplitudes on two channels of
//! a continuous recording.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Label, CLASS_1, CLASS_2};
use crate::error::{Error, Result};
use crate::io::{Payload, Recording};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    #[default]
    Features,
    Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSynth {
    pub dim: usize,
    /// Distance between the class means along the first informative axis.
    pub separation: f64,
    /// Per-axis standard deviation in the two informative dimensions.
    pub informative_sd: f64,
    /// Per-axis standard deviation everywhere else.
    pub nuisance_sd: f64,
}

impl Default for FeatureSynth {
    fn default() -> Self {
        FeatureSynth {
            dim: 98,
            separation: 4.0,
            informative_sd: 0.5,
            nuisance_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSynth {
    pub sample_rate_hz: f64,
    pub epoch_samples: usize,
    /// Rest samples between consecutive epochs.
    pub gap_samples: usize,
    pub mu_hz: f64,
    pub beta_hz: f64,
    /// Rhythm amplitudes; class 1 is (high, low) on the effect channels and
    /// class 2 (low, high) in the source subject.
    pub amp_high: f64,
    pub amp_low: f64,
    pub noise_sd: f64,
    /// Background shared by all channels (removed by the Laplacian).
    pub common_mode_sd: f64,
    pub effect_channels: [String; 2],
}

impl Default for SignalSynth {
    fn default() -> Self {
        SignalSynth {
            sample_rate_hz: 100.0,
            epoch_samples: 350,
            gap_samples: 150,
            mu_hz: 10.0,
            beta_hz: 20.0,
            amp_high: 3.0,
            amp_low: 1.0,
            noise_sd: 1.0,
            common_mode_sd: 2.0,
            effect_channels: ["C3".into(), "C4".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub mode: SynthMode,
    pub seed: u64,
    pub trials_per_class: usize,
    /// Source -> target rotation in the informative plane, degrees.
    pub rotation_deg: f64,
    /// Target shift: added to every feature (feature mode) or to both
    /// effect-channel amplitudes (signal mode).
    pub translation: f64,
    pub features: FeatureSynth,
    pub signal: SignalSynth,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            mode: SynthMode::Features,
            seed: 7,
            trials_per_class: 140,
            rotation_deg: 90.0,
            translation: 0.0,
            features: FeatureSynth::default(),
            signal: SignalSynth::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic: {m}")));
        if self.trials_per_class < 2 {
            return bad("trials_per_class must be at least 2");
        }
        if !self.rotation_deg.is_finite() || !self.translation.is_finite() {
            return bad("rotation and translation must be finite");
        }
        let f = &self.features;
        if f.dim < 2 {
            return bad("feature dim must be at least 2");
        }
        if !(f.informative_sd > 0.0 && f.nuisance_sd > 0.0) || !f.separation.is_finite() {
            return bad("standard deviations must be positive");
        }
        let s = &self.signal;
        if !(s.sample_rate_hz > 0.0) || s.epoch_samples == 0 {
            return bad("sample rate and epoch length must be positive");
        }
        if !(s.noise_sd > 0.0) || s.common_mode_sd < 0.0 || s.amp_low < 0.0 || s.amp_high < 0.0 {
            return bad("signal amplitudes must be non-negative and noise positive");
        }
        if s.effect_channels[0] == s.effect_channels[1] {
            return bad("effect channels must differ");
        }
        Ok(())
    }
}

/// Alternating class order 1, 2, 1, 2, ...
fn labels_for(trials_per_class: usize) -> Vec<Label> {
    (0..2 * trials_per_class)
        .map(|i| if i % 2 == 0 { CLASS_1 } else { CLASS_2 })
        .collect()
}

fn rotate(x: f64, y: f64, deg: f64) -> (f64, f64) {
    let (s, c) = deg.to_radians().sin_cos();
    (c * x - s * y, s * x + c * y)
}

fn class_sign(label: Label) -> f64 {
    if label == CLASS_1 {
        1.0
    } else {
        -1.0
    }
}

fn draw_features(
    spec: &SynthSpec,
    rotation_deg: f64,
    translation: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureMatrix> {
    let f = &spec.features;
    let informative =
        Normal::new(0.0, f.informative_sd).map_err(|e| Error::Config(e.to_string()))?;
    let nuisance = Normal::new(0.0, f.nuisance_sd).map_err(|e| Error::Config(e.to_string()))?;
    let labels = labels_for(spec.trials_per_class);
    let mut data = Array2::zeros((labels.len(), f.dim));
    for (i, &label) in labels.iter().enumerate() {
        let x0 = class_sign(label) * f.separation / 2.0 + informative.sample(rng);
        let x1 = informative.sample(rng);
        let (r0, r1) = rotate(x0, x1, rotation_deg);
        data[[i, 0]] = r0 + translation;
        data[[i, 1]] = r1 + translation;
        for j in 2..f.dim {
            data[[i, j]] = nuisance.sample(rng) + translation;
        }
    }
    FeatureMatrix::new(data, labels)
}

/// Independent RNG streams for the two subjects.
fn subject_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut src = ChaCha8Rng::seed_from_u64(seed);
    src.set_stream(0);
    let mut tar = ChaCha8Rng::seed_from_u64(seed);
    tar.set_stream(1);
    (src, tar)
}

/// Source and target feature matrices.
pub fn generate_features(spec: &SynthSpec) -> Result<(FeatureMatrix, FeatureMatrix)> {
    spec.validate()?;
    let (mut src_rng, mut tar_rng) = subject_rngs(spec.seed);
    let source = draw_features(spec, 0.0, 0.0, &mut src_rng)?;
    let target = draw_features(spec, spec.rotation_deg, spec.translation, &mut tar_rng)?;
    Ok((source, target))
}

/// Effect-channel amplitudes for a class, after rotating about the centroid
/// of the two class patterns and shifting.
fn amplitudes(s: &SignalSynth, label: Label, rotation_deg: f64, translation: f64) -> (f64, f64) {
    let centre = 0.5 * (s.amp_high + s.amp_low);
    let half = 0.5 * (s.amp_high - s.amp_low) * class_sign(label);
    let (a, b) = rotate(half, -half, rotation_deg);
    (
        (centre + a + translation).max(0.0),
        (centre + b + translation).max(0.0),
    )
}

fn draw_recording(
    spec: &SynthSpec,
    subject: &str,
    channel_names: &[String],
    rotation_deg: f64,
    translation: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Recording> {
    let s = &spec.signal;
    let effect: Vec<usize> = s
        .effect_channels
        .iter()
        .map(|name| {
            channel_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::MissingChannel(name.clone()))
        })
        .collect::<Result<_>>()?;
    let labels = labels_for(spec.trials_per_class);
    let stride = s.epoch_samples + s.gap_samples;
    let total = s.gap_samples + labels.len() * stride;
    let noise = Normal::new(0.0, s.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let common = Normal::new(0.0, s.common_mode_sd.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut data = Array2::zeros((total, channel_names.len()));
    for mut row in data.rows_mut() {
        let shared = if s.common_mode_sd > 0.0 {
            common.sample(rng)
        } else {
            0.0
        };
        for v in row.iter_mut() {
            *v = shared + noise.sample(rng);
        }
    }
    let tau = std::f64::consts::TAU;
    let mut onsets = Vec::with_capacity(labels.len());
    for (k, &label) in labels.iter().enumerate() {
        let onset = s.gap_samples + k * stride;
        onsets.push(onset);
        let (amp_a, amp_b) = amplitudes(s, label, rotation_deg, translation);
        for (&ch, amp) in effect.iter().zip([amp_a, amp_b]) {
            let mu_phase = rng.random_range(0.0..tau);
            let beta_phase = rng.random_range(0.0..tau);
            for t in 0..s.epoch_samples {
                let time = t as f64 / s.sample_rate_hz;
                data[[onset + t, ch]] += amp * (tau * s.mu_hz * time + mu_phase).sin()
                    + 0.5 * amp * (tau * s.beta_hz * time + beta_phase).sin();
            }
        }
    }
    Ok(Recording {
        subject: subject.to_string(),
        channel_names: channel_names.to_vec(),
        sample_rate_hz: s.sample_rate_hz,
        epoch_samples: s.epoch_samples,
        payload: Payload::Continuous {
            data,
            onsets,
            labels,
        },
    })
}

/// Source and target continuous recordings over `channel_names`, which must
/// include both effect channels.
pub fn generate_recordings(
    spec: &SynthSpec,
    channel_names: &[String],
) -> Result<(Recording, Recording)> {
    spec.validate()?;
    let (mut src_rng, mut tar_rng) = subject_rngs(spec.seed);
    let source = draw_recording(spec, "source", channel_names, 0.0, 0.0, &mut src_rng)?;
    let target = draw_recording(
        spec,
        "target",
        channel_names,
        spec.rotation_deg,
        spec.translation,
        &mut tar_rng,
    )?;
    Ok((source, target))
}
