//! Declarative run configuration.
//!
//! One JSON file drives every stage; flags override individual fields. The
//! config hash (computed with the parallelism knob blanked) is embedded in
//! every artifact so stages from different configurations cannot mix.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::split::{MITBIH_DS1, MITBIH_DS2};
use crate::ingest::{split::mitbih_all_records, BeatClass};
use crate::model::TrainConfig;
use crate::routing::AggMode;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Dataset name; `mitbih` enables the shipped record lists and splits.
    pub name: String,
    /// Directory holding `<record>.hea/.dat/.atr`.
    pub dir: PathBuf,
    #[serde(default)]
    pub records: Option<Vec<String>>,
    #[serde(default)]
    pub ds1: Option<Vec<String>>,
    #[serde(default)]
    pub ds2: Option<Vec<String>>,
    /// Base URL for `fetch`.
    #[serde(default)]
    pub base_url: Option<String>,
    /// `sha256  filename` manifest used by `fetch`.
    #[serde(default)]
    pub checksum_manifest: Option<PathBuf>,
    /// Analysis channel (0 = first signal, lead MLII on MIT-BIH).
    #[serde(default)]
    pub analysis_channel: usize,
    /// Generation recipe for `synth`; defaults to the bundled mini-dataset.
    #[serde(default)]
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub ratio: (u32, u32),
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { ratio: (9, 1) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    pub targets: BTreeMap<BeatClass, f64>,
    pub offsets: Vec<f64>,
}

impl Default for AugmentSection {
    fn default() -> Self {
        AugmentSection {
            targets: crate::augment::default_targets(),
            offsets: crate::augment::DEFAULT_OFFSETS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorSource {
    /// Classifier anchors come from the peak detector, labeled by matching
    /// against the annotations (the deployed configuration).
    Detected,
    /// Classifier anchors are the annotated beats (ablation).
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub tolerance_ms: f64,
    pub anchor_source: AnchorSource,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            tolerance_ms: 30.0,
            anchor_source: AnchorSource::Detected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            l2: d.l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingSection {
    pub mode: AggMode,
}

impl Default for RoutingSection {
    fn default() -> Self {
        RoutingSection {
            mode: AggMode::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct StressSection {
    /// Upper bound on perturbed segments (0 = all eligible).
    pub max_segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub features: FeatureSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub routing: RoutingSection,
    #[serde(default)]
    pub stress: StressSection,
    pub out_dir: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Structural validation with field-level diagnostics.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| {
            Err(Error::Validation(format!("config field `{field}`: {msg}")))
        };
        if self.dataset.name.is_empty() {
            return fail("dataset.name", "must not be empty".into());
        }
        if self.records()?.is_empty() {
            return fail("dataset.records", "no records configured".into());
        }
        if self.split.ratio.0 == 0 || self.split.ratio.1 == 0 {
            return fail(
                "split.ratio",
                format!("parts must be positive, got {:?}", self.split.ratio),
            );
        }
        for (&class, &ratio) in &self.augment.targets {
            if ratio <= 0.0 {
                return fail(
                    "augment.targets",
                    format!("{class} target {ratio} must be positive"),
                );
            }
        }
        for &f in &self.augment.offsets {
            if !(0.0 < f && f < 1.0) {
                return fail("augment.offsets", format!("offset {f} outside (0, 1)"));
            }
        }
        if self.detector.tolerance_ms <= 0.0 {
            return fail("detector.tolerance_ms", "must be positive".into());
        }
        if self.train.epochs == 0 {
            return fail("train.epochs", "must be positive".into());
        }
        if self.train.learning_rate <= 0.0 {
            return fail("train.learning_rate", "must be positive".into());
        }
        if self.train.l2 < 0.0 {
            return fail("train.l2", "must be nonnegative".into());
        }
        if self.out_dir.as_os_str().is_empty() {
            return fail("out_dir", "must not be empty".into());
        }
        let ds1 = self.ds1_subjects()?;
        let ds2 = self.ds2_subjects()?;
        if let Some(s) = ds1.iter().find(|s| ds2.contains(s)) {
            return fail("dataset.ds1/ds2", format!("subject {s} assigned to both"));
        }
        Ok(())
    }

    /// Record list, defaulting to the full MIT-BIH set for `mitbih`.
    pub fn records(&self) -> Result<Vec<String>> {
        match (&self.dataset.records, self.dataset.name.as_str()) {
            (Some(r), _) => Ok(r.clone()),
            (None, "mitbih") => Ok(mitbih_all_records()),
            (None, name) => Err(Error::Validation(format!(
                "config field `dataset.records`: required for dataset `{name}`"
            ))),
        }
    }

    pub fn ds1_subjects(&self) -> Result<Vec<String>> {
        match (&self.dataset.ds1, self.dataset.name.as_str()) {
            (Some(r), _) => Ok(r.clone()),
            (None, "mitbih") => Ok(MITBIH_DS1.iter().map(|s| s.to_string()).collect()),
            (None, name) => Err(Error::Validation(format!(
                "config field `dataset.ds1`: required for dataset `{name}`"
            ))),
        }
    }

    pub fn ds2_subjects(&self) -> Result<Vec<String>> {
        match (&self.dataset.ds2, self.dataset.name.as_str()) {
            (Some(r), _) => Ok(r.clone()),
            (None, "mitbih") => Ok(MITBIH_DS2.iter().map(|s| s.to_string()).collect()),
            (None, name) => Err(Error::Validation(format!(
                "config field `dataset.ds2`: required for dataset `{name}`"
            ))),
        }
    }

    /// Effective dataset directory. A relative `dataset.dir` is rooted at
    /// `$RHYTHMKIT_CACHE` when that variable is set, so one cached copy of
    /// the database can serve many run configs.
    pub fn data_dir(&self) -> PathBuf {
        match std::env::var_os("RHYTHMKIT_CACHE") {
            Some(root) if self.dataset.dir.is_relative() => {
                PathBuf::from(root).join(&self.dataset.dir)
            }
            _ => self.dataset.dir.clone(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            l2: self.train.l2,
            seed: self.seed,
        }
    }

    /// Hash of the effective configuration. The `jobs` knob only changes
    /// parallelism, never outputs, so it is blanked before hashing.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.jobs = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
