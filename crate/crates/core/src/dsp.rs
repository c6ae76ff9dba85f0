//! Temporal (biquad cascade band-pass) and spatial (small Laplacian)
//! conditioning of multichannel EEG, plus epoch slicing.

use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const fn new(b0: f64, b1: f64, b2: f64, a1: f64, a2: f64) -> Self {
        Biquad { b0, b1, b2, a1, a2 }
    }

    /// Both poles of `z^2 + a1 z + a2` strictly inside the unit circle
    /// (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    fn is_finite(&self) -> bool {
        [self.b0, self.b1, self.b2, self.a1, self.a2]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// What a coefficient set was designed for. Informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDesign {
    /// Elliptic prototype order; a band-pass cascade has twice this order.
    pub prototype_order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub passband_ripple_db: f64,
    pub stopband_attenuation_db: f64,
    pub sample_rate_hz: f64,
}

/// Elliptic band-pass, prototype order 6 (12th-order cascade of 6 sections),
/// 8-25 Hz at 100 Hz. Designed for 0.98 dB ripple and 50.2 dB attenuation so
/// the 1 dB / 50 dB contract holds with a little slack after rounding.
const REFERENCE_SECTIONS: [Biquad; 6] = [
    Biquad::new(
        0.01683255773210082,
        0.025941574939303932,
        0.016832557732100822,
        -0.6581786555088682,
        0.681076412120665,
    ),
    Biquad::new(
        1.0,
        -1.9661210603968002,
        1.0000000000000004,
        -1.2956923636735653,
        0.7557259284861032,
    ),
    Biquad::new(
        1.0,
        0.5281722829697267,
        0.9999999999999998,
        -0.18195643261658917,
        0.8421082993041062,
    ),
    Biquad::new(
        1.0,
        -1.8521583292374517,
        1.0000000000000002,
        -1.628789652677406,
        0.9134998719891599,
    ),
    Biquad::new(
        1.0,
        0.2548371993112288,
        1.0,
        -0.001491434940405754,
        0.9609477607473668,
    ),
    Biquad::new(
        1.0,
        -1.8058170540440999,
        0.9999999999999999,
        -1.7355974607737001,
        0.980981558064385,
    ),
];

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Biquad>,
    design: Option<FilterDesign>,
}

impl SosFilter {
    pub fn new(sections: Vec<Biquad>, design: Option<FilterDesign>) -> Result<Self> {
        if sections.is_empty() {
            return Err(Error::InvalidArgument("filter has no sections".into()));
        }
        for (i, s) in sections.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("filter section {i}")));
            }
            if !s.is_stable() {
                return Err(Error::UnstableFilter(format!(
                    "section {i} has a1={}, a2={}",
                    s.a1, s.a2
                )));
            }
        }
        Ok(SosFilter { sections, design })
    }

    /// The shipped 8-25 Hz elliptic band-pass for 100 Hz data.
    pub fn reference_bandpass() -> Self {
        SosFilter {
            sections: REFERENCE_SECTIONS.to_vec(),
            design: Some(FilterDesign {
                prototype_order: 6,
                low_hz: 8.0,
                high_hz: 25.0,
                passband_ripple_db: 1.0,
                stopband_attenuation_db: 50.0,
                sample_rate_hz: 100.0,
            }),
        }
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn design(&self) -> Option<&FilterDesign> {
        self.design.as_ref()
    }

    pub fn cascade_order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Causal single pass, zero initial state (transposed direct form II).
    pub fn apply(&self, signal: &[f64]) -> Result<Vec<f64>> {
        if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("input sample {i}")));
        }
        let mut out = signal.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in out.iter_mut() {
                let x = *v;
                let y = s.b0 * x + z1;
                z1 = s.b1 * x - s.a1 * y + z2;
                z2 = s.b2 * x - s.a2 * y;
                *v = y;
            }
        }
        Ok(out)
    }

    /// Filters every column of a samples x channels matrix independently.
    pub fn apply_columns(&self, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(data.raw_dim());
        for (c, col) in data.axis_iter(Axis(1)).enumerate() {
            let filtered = self.apply(&col.to_vec())?;
            out.column_mut(c)
                .iter_mut()
                .zip(filtered)
                .for_each(|(o, v)| *o = v);
        }
        Ok(out)
    }
}

/// Single-channel band-pass.
pub fn apply_bandpass(filter: &SosFilter, signal: &[f64]) -> Result<Vec<f64>> {
    filter.apply(signal)
}

/// Channel name -> its four nearest neighbours.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborMap(BTreeMap<String, [String; 4]>);

impl NeighborMap {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (ch, ns) in entries {
            let ns: [String; 4] = ns.try_into().map_err(|v: Vec<String>| {
                Error::InvalidArgument(format!(
                    "channel {ch} lists {} neighbours, expected 4",
                    v.len()
                ))
            })?;
            if ns.contains(&ch) {
                return Err(Error::InvalidArgument(format!(
                    "channel {ch} lists itself as a neighbour"
                )));
            }
            map.insert(ch, ns);
        }
        Ok(NeighborMap(map))
    }

    /// Neighbours for F3, F4, C3, Cz, C4, P3 and P4 on the extended 10/20
    /// montage, as shipped in the default configuration.
    pub fn reference() -> Self {
        crate::config::Config::default()
            .dsp
            .neighbor_map()
            .expect("shipped neighbour map is valid")
    }

    pub fn neighbors(&self, channel: &str) -> Option<&[String; 4]> {
        self.0.get(channel)
    }

    pub fn channels(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Every channel name the map refers to, targets and neighbours.
    pub fn required_channels(&self) -> Vec<String> {
        let mut all: Vec<String> = self
            .0
            .iter()
            .flat_map(|(k, v)| std::iter::once(k.clone()).chain(v.iter().cloned()))
            .collect();
        all.sort();
        all.dedup();
        all
    }
}

fn channel_index(names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::MissingChannel(name.to_string()))
}

/// `out[t][c] = in[t][c] - mean of in[t][n]` over the four neighbours of each
/// target channel. Neighbours need not be among the targets.
pub fn small_laplacian(
    trial: ArrayView2<'_, f64>,
    channel_names: &[String],
    map: &NeighborMap,
    targets: &[String],
) -> Result<Array2<f64>> {
    if trial.ncols() != channel_names.len() {
        return Err(Error::dim(format!(
            "{} columns but {} channel names",
            trial.ncols(),
            channel_names.len()
        )));
    }
    let mut out = Array2::zeros((trial.nrows(), targets.len()));
    for (k, target) in targets.iter().enumerate() {
        let centre = channel_index(channel_names, target)?;
        let neighbors = map
            .neighbors(target)
            .ok_or_else(|| Error::InvalidArgument(format!("no neighbours defined for {target}")))?;
        let idx = neighbors
            .iter()
            .map(|n| channel_index(channel_names, n))
            .collect::<Result<Vec<_>>>()?;
        for (t, row) in trial.axis_iter(Axis(0)).enumerate() {
            let mean = idx.iter().map(|&j| row[j]).sum::<f64>() / 4.0;
            out[[t, k]] = row[centre] - mean;
        }
    }
    Ok(out)
}

/// Cuts `length`-sample epochs starting at each onset.
pub fn epoch_slice(
    continuous: ArrayView2<'_, f64>,
    onsets: &[usize],
    length: usize,
) -> Result<Vec<Array2<f64>>> {
    if length == 0 {
        return Err(Error::InvalidArgument(
            "epoch length must be positive".into(),
        ));
    }
    onsets
        .iter()
        .map(|&onset| {
            if onset + length > continuous.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "epoch [{onset}, {}) exceeds record of {} samples",
                    onset + length,
                    continuous.nrows()
                )));
            }
            Ok(continuous.slice(s![onset..onset + length, ..]).to_owned())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn star_map() -> NeighborMap {
        let mut m = BTreeMap::new();
        m.insert("C3".to_string(), names(&["A", "B", "C", "D"]));
        NeighborMap::new(m).unwrap()
    }

    #[test]
    fn reference_filter_is_stable() {
        let f = SosFilter::reference_bandpass();
        assert_eq!(f.cascade_order(), 12);
        assert!(SosFilter::new(f.sections().to_vec(), None).is_ok());
    }

    #[test]
    fn unstable_section_rejected() {
        let bad = Biquad::new(1.0, 0.0, 0.0, -2.1, 1.2);
        assert!(matches!(
            SosFilter::new(vec![bad], None),
            Err(Error::UnstableFilter(_))
        ));
    }

    #[test]
    fn zero_in_zero_out() {
        let f = SosFilter::reference_bandpass();
        let y = f.apply(&[0.0; 64]).unwrap();
        assert_eq!(y.len(), 64);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_sample_rejected() {
        let f = SosFilter::reference_bandpass();
        assert!(matches!(
            f.apply(&[0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn filtering_is_linear() {
        let f = SosFilter::reference_bandpass();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (2.5, -0.75);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let fx = f.apply(&x).unwrap();
        let fy = f.apply(&y).unwrap();
        let fm = f.apply(&mix).unwrap();
        let scale = fm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..500 {
            let expect = a * fx[i] + b * fy[i];
            assert!((fm[i] - expect).abs() <= 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn laplacian_hand_example() {
        let trial = array![[5.0, 1.0, 2.0, 3.0, 4.0]];
        let ch = names(&["C3", "A", "B", "C", "D"]);
        let out = small_laplacian(trial.view(), &ch, &star_map(), &names(&["C3"])).unwrap();
        assert_eq!(out, array![[2.5]]);
    }

    #[test]
    fn laplacian_rejects_common_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let common: Vec<f64> = (0..20).map(|_| rng.random()).collect();
        let trial = Array2::from_shape_fn((20, 5), |(t, _)| common[t]);
        let ch = names(&["C3", "A", "B", "C", "D"]);
        let out = small_laplacian(trial.view(), &ch, &star_map(), &names(&["C3"])).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-15));

        let zero = Array2::zeros((20, 5));
        let out = small_laplacian(zero.view(), &ch, &star_map(), &names(&["C3"])).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_offset_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trial = Array2::from_shape_fn((30, 5), |_| rng.random_range(-3.0..3.0));
        let shifted = trial.mapv(|v| v + 17.25);
        let ch = names(&["C3", "A", "B", "C", "D"]);
        let a = small_laplacian(trial.view(), &ch, &star_map(), &names(&["C3"])).unwrap();
        let b = small_laplacian(shifted.view(), &ch, &star_map(), &names(&["C3"])).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_missing_neighbor() {
        let trial = Array2::zeros((3, 4));
        let ch = names(&["C3", "A", "B", "C"]);
        let err = small_laplacian(trial.view(), &ch, &star_map(), &names(&["C3"])).unwrap_err();
        assert!(matches!(err, Error::MissingChannel(n) if n == "D"));
    }

    #[test]
    fn neighbor_count_enforced() {
        let mut m = BTreeMap::new();
        m.insert("C3".to_string(), names(&["A", "B", "C"]));
        assert!(NeighborMap::new(m).is_err());
        let mut m = BTreeMap::new();
        m.insert("C3".to_string(), names(&["A", "B", "C", "C3"]));
        assert!(NeighborMap::new(m).is_err());
    }

    #[test]
    fn reference_neighbors_cover_selected_channels() {
        let map = NeighborMap::reference();
        for ch in ["F3", "F4", "C3", "Cz", "C4", "P3", "P4"] {
            assert!(map.neighbors(ch).is_some(), "{ch}");
        }
    }

    #[test]
    fn epoch_slicing() {
        let record = Array2::from_shape_fn((1000, 2), |(t, c)| (t * 2 + c) as f64);
        let e = epoch_slice(record.view(), &[0], 350).unwrap();
        assert_eq!(e[0].dim(), (350, 2));
        assert_eq!(e[0][[0, 0]], 0.0);
        assert_eq!(e[0][[349, 1]], 699.0);
        let onsets: Vec<usize> = (0..280).map(|i| i % 600).collect();
        assert_eq!(epoch_slice(record.view(), &onsets, 350).unwrap().len(), 280);
        assert!(epoch_slice(record.view(), &[700], 350).is_err());
    }
}
