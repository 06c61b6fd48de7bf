//! Stage orchestration over content-hashed artifacts.
//!
//! Stages run independently and communicate only through files in the run
//! directory, each stamped with the config hash and its input hashes, so
//! any stage can be rerun reproducibly and `report` can refuse to mix
//! artifacts from different configurations.

pub mod artifact;
pub mod config;
pub mod stages;

pub use config::{AnchorSource, RunConfig};
pub use stages::{
    run_augment, run_detect, run_evaluate, run_features, run_fetch, run_ingest, run_report,
    run_stress, run_sweep, run_synth, ClassCounts, DetectorReport, EvalReport, FeatureRow,
    RuntimeFlags, StressRunReport,
};

use crate::error::Result;

/// The pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fetch,
    Ingest,
    Augment,
    Detect,
    Features,
    Train,
    Sweep,
    Evaluate,
    Stress,
    Report,
    Synth,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Fetch => "fetch",
            Stage::Ingest => "ingest",
            Stage::Augment => "augment",
            Stage::Detect => "detect",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Sweep => "sweep",
            Stage::Evaluate => "evaluate",
            Stage::Stress => "stress",
            Stage::Report => "report",
            Stage::Synth => "synth",
        }
    }
}

/// Runs one stage against a validated configuration.
pub fn run_stage(stage: Stage, config: &RunConfig, flags: &RuntimeFlags) -> Result<()> {
    config.validate()?;
    match stage {
        Stage::Fetch => stages::run_fetch(config, flags),
        Stage::Ingest => stages::run_ingest(config),
        Stage::Augment => stages::run_augment(config),
        Stage::Detect => stages::run_detect(config),
        Stage::Features => stages::run_features(config),
        Stage::Train => stages::run_train(config),
        Stage::Sweep => stages::run_sweep(config),
        Stage::Evaluate => stages::run_evaluate(config, flags),
        Stage::Stress => stages::run_stress(config),
        Stage::Report => stages::run_report(config),
        Stage::Synth => stages::run_synth(config),
    }
}
