//! The structured configuration file.
//!
//! Defaults live in `config/default.toml`, embedded at build time. A user
//! file is merged onto them table by table, so it only needs the keys it
//! changes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::SvmParams;
use crate::data::SplitSpec;
use crate::dsp::{Biquad, NeighborMap, SosFilter};
use crate::error::{DataError, Error, Result};
use crate::features::{BandSpec, WelchConfig};
use crate::maoo::MaooConfig;
use crate::synth::SynthSpec;

const DEFAULT_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DspSection {
    pub bandpass: bool,
    pub laplacian: bool,
    pub channels: Vec<String>,
    pub epoch_samples: usize,
    pub neighbors: BTreeMap<String, Vec<String>>,
    /// Replaces the shipped band-pass cascade when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sections: Option<Vec<Biquad>>,
}

impl DspSection {
    pub fn neighbor_map(&self) -> Result<NeighborMap> {
        NeighborMap::new(self.neighbors.clone())
    }

    pub fn filter(&self) -> Result<SosFilter> {
        match &self.sections {
            Some(s) => SosFilter::new(s.clone(), None),
            None => Ok(SosFilter::reference_bandpass()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsSection {
    pub frequencies_hz: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Learn a projection per pair and also run the no-projection baseline.
    #[default]
    Transfer,
    /// Only the no-projection baseline.
    Baseline,
    /// Only source = target pairs, with the small-subset protocol.
    SameSubject,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transfer" => Ok(Mode::Transfer),
            "baseline" => Ok(Mode::Baseline),
            "same-subject" => Ok(Mode::SameSubject),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (transfer, baseline, same-subject)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectSource {
    pub name: String,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: Mode,
    /// Projected dimension.
    pub d: usize,
    pub repeats: usize,
    /// Root of the split seeds; each pair and repeat derives its own.
    pub seed: u64,
    pub validation_source_fraction: f64,
    pub validation_target_fraction: f64,
    /// Share of a subject used as the small training subset when source and
    /// target coincide.
    pub same_subject_fraction: f64,
    pub d_sweep: Vec<usize>,
    pub subjects: Vec<SubjectSource>,
    pub pairs: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub dsp: DspSection,
    pub welch: WelchConfig,
    pub bands: BandsSection,
    pub maoo: MaooConfig,
    pub svm: SvmParams,
    pub experiment: ExperimentSection,
    pub synthetic: SynthSpec,
}

impl Default for Config {
    fn default() -> Self {
        toml::from_str(DEFAULT_TOML).expect("embedded default configuration parses")
    }
}

/// Recursively overlays `over` onto `base`; tables merge, everything else
/// is replaced.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl Config {
    /// Parses a (possibly partial) TOML document over the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut base: toml::Value =
            toml::from_str(DEFAULT_TOML).expect("embedded default configuration parses");
        let user: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, user);
        let cfg: Config = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(DataError::MissingFile {
                path: path.to_path_buf(),
            }
            .into());
        }
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        // Manifest paths are relative to the config file.
        if let Some(dir) = path.parent() {
            for s in &mut cfg.experiment.subjects {
                if s.manifest.is_relative() {
                    s.manifest = dir.join(&s.manifest);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.welch.validate()?;
        self.bands()?.bins(&self.welch)?;
        self.svm.validate()?;
        self.synthetic.validate()?;
        self.dsp.filter()?;
        let map = self.dsp.neighbor_map()?;
        if self.dsp.channels.is_empty() || self.dsp.epoch_samples == 0 {
            return bad("dsp.channels and dsp.epoch_samples must be non-empty".into());
        }
        if self.dsp.laplacian {
            if let Some(c) = self
                .dsp
                .channels
                .iter()
                .find(|c| map.neighbors(c).is_none())
            {
                return bad(format!("dsp.neighbors has no entry for channel {c}"));
            }
        }
        let e = &self.experiment;
        if e.d == 0 || e.repeats == 0 {
            return bad("experiment.d and experiment.repeats must be positive".into());
        }
        for (name, f) in [
            ("validation_source_fraction", e.validation_source_fraction),
            ("validation_target_fraction", e.validation_target_fraction),
            ("same_subject_fraction", e.same_subject_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("experiment.{name} = {f} must lie in (0, 1)"));
            }
        }
        if e.d_sweep.contains(&0) {
            return bad("experiment.d_sweep entries must be positive".into());
        }
        let mut sweep_cfg = self.maoo.clone();
        sweep_cfg.dimension = 1;
        sweep_cfg.validate()?;
        if self.maoo.ideal.len() != 6 {
            return bad("maoo.ideal must have six entries, one per metric".into());
        }
        let names: Vec<&str> = e.subjects.iter().map(|s| s.name.as_str()).collect();
        for pair in &e.pairs {
            for n in pair {
                let known = if names.is_empty() {
                    n == "source" || n == "target"
                } else {
                    names.contains(&n.as_str())
                };
                if !known {
                    return bad(format!("experiment.pairs refers to unknown subject {n}"));
                }
            }
        }
        Ok(())
    }

    pub fn bands(&self) -> Result<BandSpec> {
        BandSpec::new(self.bands.frequencies_hz.clone())
    }

    pub fn split_spec(&self, source_seed: u64, target_seed: u64) -> SplitSpec {
        SplitSpec {
            validation_source_fraction: self.experiment.validation_source_fraction,
            validation_target_fraction: self.experiment.validation_target_fraction,
            source_seed,
            target_seed,
        }
    }

    /// SHA-256 of the canonical JSON form (fixed field order, sorted maps).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_defaults_match_code_defaults() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!(c.welch, WelchConfig::default());
        assert_eq!(c.maoo, MaooConfig::default());
        assert_eq!(c.svm, SvmParams::default());
        assert_eq!(c.synthetic, SynthSpec::default());
        assert_eq!(c.bands().unwrap(), BandSpec::default());
        assert_eq!(c.dsp.channels.len(), 7);
        assert_eq!(c.dsp.filter().unwrap(), SosFilter::reference_bandpass());
        assert_eq!(c.experiment.d, 2);
        assert_eq!(c.experiment.d_sweep, vec![2, 10, 50, 100, 300, 500]);
    }

    #[test]
    fn partial_file_overrides_only_given_keys() {
        let c = Config::from_toml_str("[maoo]\npopulation_size = 40\n[experiment]\nrepeats = 3\n")
            .unwrap();
        assert_eq!(c.maoo.population_size, 40);
        assert_eq!(c.maoo.max_generations, 2000);
        assert_eq!(c.experiment.repeats, 3);
        assert_eq!(c.dsp, Config::default().dsp);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            Config::from_toml_str("[maoo]\nbogus = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(Config::from_toml_str("[experiment]\nd = 0\n").is_err());
        assert!(Config::from_toml_str("[experiment]\nmode = \"sideways\"\n").is_err());
        assert!(Config::from_toml_str("[bands]\nfrequencies_hz = [300]\n").is_err());
        assert!(Config::from_toml_str("[dsp.neighbors]\nC3 = [\"A\", \"B\"]\n").is_err());
        assert!(Config::from_toml_str("not toml ===").is_err());
        assert!(
            Config::from_toml_str("[experiment]\npairs = [[\"source\", \"nobody\"]]\n").is_err()
        );
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.maoo.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn serialized_config_reloads() {
        let a = Config::default();
        let b = Config::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mode_names() {
        assert_eq!("same-subject".parse::<Mode>().unwrap(), Mode::SameSubject);
        assert!("x".parse::<Mode>().is_err());
    }
}
