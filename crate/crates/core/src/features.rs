//! Welch log-PSD features over the mu and central-beta bands.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, TrialSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Symmetric Hamming, `0.54 - 0.46 cos(2 pi n / (N - 1))`.
    #[default]
    Hamming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelchConfig {
    pub window_length: usize,
    pub overlap_fraction: f64,
    pub window_kind: WindowKind,
    /// Segments are zero-padded to this length so bins fall on whole hertz.
    pub fft_length: usize,
    pub sample_rate_hz: f64,
    pub log_floor: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig {
            window_length: 50,
            overlap_fraction: 0.5,
            window_kind: WindowKind::Hamming,
            fft_length: 100,
            sample_rate_hz: 100.0,
            log_floor: 1e-12,
        }
    }
}

impl WelchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_length < 2 {
            return Err(Error::Config(
                "welch window_length must be at least 2".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::Config(format!(
                "welch overlap_fraction {} must lie in [0, 1)",
                self.overlap_fraction
            )));
        }
        if self.fft_length < self.window_length {
            return Err(Error::Config(format!(
                "fft_length {} shorter than window_length {}",
                self.fft_length, self.window_length
            )));
        }
        if !(self.sample_rate_hz > 0.0) || !(self.log_floor > 0.0) {
            return Err(Error::Config(
                "sample_rate_hz and log_floor must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Hop between segment starts.
    pub fn step(&self) -> usize {
        let overlap = (self.overlap_fraction * self.window_length as f64).round() as usize;
        (self.window_length - overlap).max(1)
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate_hz / self.fft_length as f64
    }

    pub fn segment_count(&self, len: usize) -> usize {
        if len < self.window_length {
            0
        } else {
            (len - self.window_length) / self.step() + 1
        }
    }
}

/// Whole-hertz frequencies kept as features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandSpec(Vec<u32>);

impl Default for BandSpec {
    /// mu (8-12 Hz) and central beta (16-24 Hz): 14 frequencies.
    fn default() -> Self {
        BandSpec((8..=12).chain(16..=24).collect())
    }
}

impl BandSpec {
    pub fn new(frequencies: Vec<u32>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::Config("band list is empty".into()));
        }
        Ok(BandSpec(frequencies))
    }

    pub fn frequencies(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// FFT bin index for each frequency; errors if one is not on a bin centre.
    pub fn bins(&self, cfg: &WelchConfig) -> Result<Vec<usize>> {
        let width = cfg.bin_width_hz();
        let nyquist_bin = cfg.fft_length / 2;
        self.0
            .iter()
            .map(|&f| {
                let pos = f as f64 / width;
                let bin = pos.round();
                if (pos - bin).abs() > 1e-9 || bin as usize > nyquist_bin {
                    Err(Error::Config(format!(
                        "{f} Hz is not an FFT bin centre for fft_length {} at {} Hz",
                        cfg.fft_length, cfg.sample_rate_hz
                    )))
                } else {
                    Ok(bin as usize)
                }
            })
            .collect()
    }
}

/// Reusable Welch estimator: the window and FFT plan are built once.
pub struct WelchEstimator {
    cfg: WelchConfig,
    window: Vec<f64>,
    window_energy: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for WelchEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WelchEstimator")
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl WelchEstimator {
    pub fn new(cfg: &WelchConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.window_length;
        let window: Vec<f64> = match cfg.window_kind {
            WindowKind::Hamming => (0..n)
                .map(|i| {
                    0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
                })
                .collect(),
        };
        let window_energy = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_length);
        Ok(WelchEstimator {
            cfg: cfg.clone(),
            window,
            window_energy,
            fft,
        })
    }

    pub fn config(&self) -> &WelchConfig {
        &self.cfg
    }

    /// One-sided PSD with `fft_length / 2 + 1` bins (units^2 / Hz).
    pub fn psd(&self, signal: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.cfg;
        if signal.len() < cfg.window_length {
            return Err(Error::InvalidArgument(format!(
                "epoch of {} samples is shorter than the {}-sample window",
                signal.len(),
                cfg.window_length
            )));
        }
        let nfft = cfg.fft_length;
        let half = nfft / 2;
        let segments = cfg.segment_count(signal.len());
        let mut acc = vec![0.0; half + 1];
        let mut buf = vec![Complex::new(0.0, 0.0); nfft];
        for k in 0..segments {
            let start = k * cfg.step();
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, (&x, &w)) in signal[start..start + cfg.window_length]
                .iter()
                .zip(&self.window)
                .enumerate()
            {
                buf[i].re = x * w;
            }
            self.fft.process(&mut buf);
            for (a, c) in acc.iter_mut().zip(&buf) {
                *a += c.norm_sqr();
            }
        }
        let scale = 1.0 / (cfg.sample_rate_hz * self.window_energy * segments as f64);
        for (bin, a) in acc.iter_mut().enumerate() {
            let doubled = bin != 0 && !(nfft.is_multiple_of(2) && bin == half);
            *a *= if doubled { 2.0 * scale } else { scale };
        }
        Ok(acc)
    }
}

/// Welch PSD of one channel epoch.
pub fn welch_psd(channel_epoch: &[f64], cfg: &WelchConfig) -> Result<Vec<f64>> {
    WelchEstimator::new(cfg)?.psd(channel_epoch)
}

/// Band-limited log10 PSD features of one (samples x channels) trial,
/// laid out channel-major: all band frequencies of channel 0, then channel 1...
#[derive(Debug)]
pub struct FeatureExtractor {
    welch: WelchEstimator,
    bins: Vec<usize>,
    expected_geometry: Option<(usize, usize)>,
}

impl FeatureExtractor {
    pub fn new(cfg: &WelchConfig, bands: &BandSpec) -> Result<Self> {
        let welch = WelchEstimator::new(cfg)?;
        let bins = bands.bins(cfg)?;
        Ok(FeatureExtractor {
            welch,
            bins,
            expected_geometry: None,
        })
    }

    /// Require every trial to be exactly `samples x channels`.
    pub fn with_geometry(mut self, samples: usize, channels: usize) -> Self {
        self.expected_geometry = Some((samples, channels));
        self
    }

    pub fn feature_len(&self, channels: usize) -> usize {
        channels * self.bins.len()
    }

    pub fn extract(&self, trial: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if let Some(expected) = self.expected_geometry {
            if trial.dim() != expected {
                return Err(Error::dim(format!(
                    "trial is {:?}, expected {:?}",
                    trial.dim(),
                    expected
                )));
            }
        }
        if trial.ncols() == 0 {
            return Err(Error::dim("trial has no channels"));
        }
        let floor = self.welch.config().log_floor;
        let mut out = Vec::with_capacity(self.feature_len(trial.ncols()));
        for col in trial.axis_iter(Axis(1)) {
            let psd = self.welch.psd(&col.to_vec())?;
            out.extend(self.bins.iter().map(|&b| psd[b].max(floor).log10()));
        }
        Ok(out)
    }
}

pub fn extract_features(
    trial: ArrayView2<'_, f64>,
    cfg: &WelchConfig,
    bands: &BandSpec,
) -> Result<Vec<f64>> {
    FeatureExtractor::new(cfg, bands)?.extract(trial)
}

/// One feature row per trial; labels carried through.
pub fn featurize_set(
    trials: &TrialSet,
    cfg: &WelchConfig,
    bands: &BandSpec,
) -> Result<FeatureMatrix> {
    let (samples, channels) = trials.geometry();
    let extractor = FeatureExtractor::new(cfg, bands)?.with_geometry(samples, channels);
    let width = extractor.feature_len(channels);
    let mut data = Array2::zeros((trials.len(), width));
    for (mut row, trial) in data.axis_iter_mut(Axis(0)).zip(trials.trials()) {
        let feats = extractor.extract(trial.view())?;
        row.iter_mut().zip(feats).for_each(|(r, v)| *r = v);
    }
    FeatureMatrix::new(data, trials.labels().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn sine(freq: f64, len: usize, fs: f64) -> Vec<f64> {
        (0..len)
            .map(|i| (2.0 * PI * freq * i as f64 / fs).sin())
            .collect()
    }

    /// Direct O(N^2) DFT periodogram average over the same segments.
    fn dft_oracle(x: &[f64], cfg: &WelchConfig) -> Vec<f64> {
        let n = cfg.window_length;
        let w: Vec<f64> = (0..n)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
            .collect();
        let u: f64 = w.iter().map(|v| v * v).sum();
        let nfft = cfg.fft_length;
        let segs = (x.len() - n) / cfg.step() + 1;
        let mut out = vec![0.0; nfft / 2 + 1];
        for s in 0..segs {
            let seg = &x[s * cfg.step()..s * cfg.step() + n];
            for (k, o) in out.iter_mut().enumerate() {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, (&v, &wt)) in seg.iter().zip(&w).enumerate() {
                    let ang = -2.0 * PI * (k * t) as f64 / nfft as f64;
                    re += v * wt * ang.cos();
                    im += v * wt * ang.sin();
                }
                let scale = if k == 0 || k == nfft / 2 { 1.0 } else { 2.0 };
                *o += scale * (re * re + im * im) / (cfg.sample_rate_hz * u);
            }
        }
        out.iter().map(|v| v / segs as f64).collect()
    }

    #[test]
    fn reference_geometry_has_13_segments() {
        let cfg = WelchConfig::default();
        assert_eq!(cfg.segment_count(350), 13);
        assert_eq!(cfg.step(), 25);
    }

    #[test]
    fn zero_epoch_gives_zero_psd() {
        let psd = welch_psd(&[0.0; 350], &WelchConfig::default()).unwrap();
        assert_eq!(psd.len(), 51);
        assert!(psd.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ten_hz_peak_matches_dft_oracle() {
        let cfg = WelchConfig::default();
        let x = sine(10.0, 350, 100.0);
        let psd = welch_psd(&x, &cfg).unwrap();
        let oracle = dft_oracle(&x, &cfg);
        for (a, b) in psd.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-12));
        }
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        assert_eq!(argmax(&oracle), 10);
        assert_eq!(argmax(&psd), 10);
    }

    #[test]
    fn short_epoch_rejected() {
        assert!(welch_psd(&[1.0; 49], &WelchConfig::default()).is_err());
    }

    #[test]
    fn scale_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..350).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = 3.7;
        let y: Vec<f64> = x.iter().map(|v| a * v).collect();
        let cfg = WelchConfig::default();
        let px = welch_psd(&x, &cfg).unwrap();
        let py = welch_psd(&y, &cfg).unwrap();
        for (p, q) in px.iter().zip(&py) {
            assert!((q - a * a * p).abs() <= 1e-9 * q.abs().max(1e-300));
        }
    }

    #[test]
    fn parseval_normalization() {
        let cfg = WelchConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
            let psd = welch_psd(&x, &cfg).unwrap();
            let total: f64 = psd.iter().sum::<f64>() * cfg.bin_width_hz();
            let power = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
            assert!((total / power - 1.0).abs() < 0.05, "{total} vs {power}");
        }
    }

    #[test]
    fn white_noise_is_flat() {
        let cfg = WelchConfig::default();
        let est = WelchEstimator::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut mean = vec![0.0; 51];
        for _ in 0..1000 {
            let x: Vec<f64> = (0..350).map(|_| StandardNormal.sample(&mut rng)).collect();
            for (m, p) in mean.iter_mut().zip(est.psd(&x).unwrap()) {
                *m += p / 1000.0;
            }
        }
        let band = &mean[1..50];
        let avg = band.iter().sum::<f64>() / band.len() as f64;
        assert!(band.iter().all(|v| (v / avg - 1.0).abs() <= 0.15));
    }

    #[test]
    fn band_spec_bins() {
        let bands = BandSpec::default();
        assert_eq!(bands.len(), 14);
        let bins = bands.bins(&WelchConfig::default()).unwrap();
        assert_eq!(bins[0], 8);
        assert_eq!(*bins.last().unwrap(), 24);
        // 50-point transform spaces bins 2 Hz apart; 9 Hz is unreachable.
        let coarse = WelchConfig {
            fft_length: 50,
            ..WelchConfig::default()
        };
        assert!(bands.bins(&coarse).is_err());
    }

    #[test]
    fn feature_layout_and_floor() {
        let cfg = WelchConfig::default();
        let bands = BandSpec::default();
        let zero = Array2::zeros((350, 7));
        let f = extract_features(zero.view(), &cfg, &bands).unwrap();
        assert_eq!(f.len(), 98);
        assert!(f.iter().all(|&v| v == (1e-12f64).log10()));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trial = Array2::from_shape_fn((350, 7), |_| StandardNormal.sample(&mut rng));
        let mut swapped = trial.clone();
        for t in 0..350 {
            swapped.swap([t, 1], [t, 4]);
        }
        let a = extract_features(trial.view(), &cfg, &bands).unwrap();
        let b = extract_features(swapped.view(), &cfg, &bands).unwrap();
        assert_eq!(&a[14..28], &b[56..70]);
        assert_eq!(&a[56..70], &b[14..28]);
        assert_eq!(&a[0..14], &b[0..14]);
        assert_eq!(a, extract_features(trial.view(), &cfg, &bands).unwrap());
    }

    #[test]
    fn featurize_carries_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let trials: Vec<Array2<f64>> = (0..6)
            .map(|_| Array2::from_shape_fn((350, 7), |_| StandardNormal.sample(&mut rng)))
            .collect();
        let labels = vec![2, 1, 1, 2, 2, 1];
        let names = ["F3", "F4", "C3", "Cz", "C4", "P3", "P4"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let set = TrialSet::new(trials, labels.clone(), names, 100.0).unwrap();
        let fm = featurize_set(&set, &WelchConfig::default(), &BandSpec::default()).unwrap();
        assert_eq!((fm.rows(), fm.dim()), (6, 98));
        assert_eq!(fm.labels(), &labels[..]);
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let ex = FeatureExtractor::new(&WelchConfig::default(), &BandSpec::default())
            .unwrap()
            .with_geometry(350, 7);
        assert!(ex.extract(Array2::zeros((349, 7)).view()).is_err());
    }
}
