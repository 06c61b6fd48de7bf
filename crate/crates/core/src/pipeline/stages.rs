//! The pipeline stages.
//!
//! Every stage reads versioned artifacts from the run directory, does its
//! work (parallelized over segments where it helps), and writes its outputs
//! atomically together with a meta record for the hash chain.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_plan, dedup, plan_augmentation, BeatRef};
use crate::error::{Error, Result};
use crate::evalx::{
    compute_metrics, confidence_profile, confusion_rows, stress_mask, stress_mislocalize,
    stress_report, ClassMetrics, Perturbation, StressOutcome, MISLOCALIZE_RANGE,
};
use crate::features::{segment_features, BeatFeatures, FULL_DIMS};
use crate::ingest::fetch::{fetch_dataset, sha256_file, ChecksumManifest};
use crate::ingest::{
    build_split, class_counts, cut_segments, read_record, AamiClass, BeatClass, Segment,
    SegmentOrigin, SplitManifest,
};
use crate::model::{grad_check, predict, train, ClassifierParams, Posterior, Tier};
use crate::peaks::{align_labels, detect_rpeaks, match_peaks, PeakSet};
use crate::pipeline::artifact::{finish_stage, load_meta, require_artifact, write_atomic};
use crate::pipeline::config::{AnchorSource, RunConfig};
use crate::routing::{
    route, routing_report, segment_confidence, sweep_threshold, AggMode, RoutedPrediction,
    RoutingReport, SweepSegment, ThresholdArtifact,
};
use crate::synth::{demo_config, gen_synthetic};

/// Runtime flags that are not part of the configuration (and therefore not
/// part of the config hash).
#[derive(Debug, Clone, Default)]
pub struct RuntimeFlags {
    pub offline: bool,
    /// Threshold override for ablations; recorded in the evaluation report.
    pub tau_override: Option<f64>,
}

const SEGMENTS_FILE: &str = "segments.jsonl";
const COUNTS_FILE: &str = "class_counts.json";
const SPLIT_FILE: &str = "split.json";
const AUGMENTED_FILE: &str = "augmented.jsonl";
const PLAN_FILE: &str = "augment_plan.json";
const PEAKS_FILE: &str = "peaks.jsonl";
const DETECTOR_REPORT_FILE: &str = "detector_report.json";
const FEATURES_FILE: &str = "features.csv";
const FEATURE_LINES_FILE: &str = "features.txt";
const MODEL_MINIMAL_FILE: &str = "model_minimal.json";
const MODEL_RICH_FILE: &str = "model_rich.json";
const TRAIN_REPORT_FILE: &str = "train_report.json";
const THRESHOLD_FILE: &str = "threshold.json";
const METRICS_FILE: &str = "metrics.json";
const ROUTED_FILE: &str = "routed.jsonl";
const PROFILE_FILE: &str = "confidence_profile.csv";
const STRESS_CSV_FILE: &str = "stress.csv";
const STRESS_JSON_FILE: &str = "stress.json";
const CHECKSUMS_FILE: &str = "checksums.txt";

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        _ => f(),
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    BufReader::new(file)
        .lines()
        .map(|line| Ok(serde_json::from_str(&line?)?))
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Per-class beat totals written by ingest; Q is counted here and nowhere
/// downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub records: usize,
    pub total_beats: u64,
    pub n: u64,
    pub s: u64,
    pub v: u64,
    pub f: u64,
    pub q: u64,
}

impl ClassCounts {
    fn from_map(records: usize, map: &BTreeMap<AamiClass, u64>) -> ClassCounts {
        let get = |c: AamiClass| map.get(&c).copied().unwrap_or(0);
        ClassCounts {
            records,
            total_beats: map.values().sum(),
            n: get(AamiClass::N),
            s: get(AamiClass::S),
            v: get(AamiClass::V),
            f: get(AamiClass::F),
            q: get(AamiClass::Q),
        }
    }
}

/// `synth`: generate the configured (or bundled demo) dataset into the
/// dataset directory.
pub fn run_synth(config: &RunConfig) -> Result<()> {
    let synth_config = config
        .dataset
        .synth
        .clone()
        .unwrap_or_else(|| demo_config(config.seed));
    let data_dir = config.data_dir();
    gen_synthetic(&synth_config, &data_dir)?;
    let hash = config.hash();
    fs::create_dir_all(&config.out_dir)?;
    let mut inputs = BTreeMap::new();
    inputs.insert(
        "manifest.json".into(),
        sha256_file(&data_dir.join("manifest.json"))?,
    );
    finish_stage(&config.out_dir, "synth", &hash, inputs, &[])?;
    Ok(())
}

/// `fetch`: download (or verify cached) record files with checksums.
pub fn run_fetch(config: &RunConfig, flags: &RuntimeFlags) -> Result<()> {
    let base_url = config
        .dataset
        .base_url
        .clone()
        .unwrap_or_else(|| "https://physionet.org/files/mitdb/1.0.0".to_string());
    let mut names = Vec::new();
    for record in config.records()? {
        for ext in ["hea", "dat", "atr"] {
            names.push(format!("{record}.{ext}"));
        }
    }
    let manifest_path = config
        .dataset
        .checksum_manifest
        .clone()
        .unwrap_or_else(|| config.out_dir.join(CHECKSUMS_FILE));
    let mut manifest = if manifest_path.exists() {
        ChecksumManifest::load(&manifest_path)?
    } else {
        ChecksumManifest::default()
    };
    fetch_dataset(
        &base_url,
        &names,
        &config.data_dir(),
        &mut manifest,
        flags.offline,
    )?;
    fs::create_dir_all(&config.out_dir)?;
    write_atomic(&manifest_path, manifest.to_text().as_bytes())?;
    finish_stage(
        &config.out_dir,
        "fetch",
        &config.hash(),
        BTreeMap::new(),
        &[],
    )?;
    Ok(())
}

/// Stages that re-read the raw record files must see exactly the bytes
/// ingest saw, or their outputs would silently disagree with the segment
/// artifacts.
fn verify_raw_inputs(config: &RunConfig) -> Result<()> {
    let ingest_meta = load_meta(&config.out_dir, "ingest")?;
    let current = record_file_hashes(config)?;
    if current != ingest_meta.inputs {
        return Err(Error::HashMismatch(
            "raw record files changed since ingest ran".into(),
        ));
    }
    Ok(())
}

fn record_file_hashes(config: &RunConfig) -> Result<BTreeMap<String, String>> {
    let mut hashes = BTreeMap::new();
    for record in config.records()? {
        for ext in ["hea", "dat", "atr"] {
            let path = config.data_dir().join(format!("{record}.{ext}"));
            if path.exists() {
                hashes.insert(format!("{record}.{ext}"), sha256_file(&path)?);
            }
        }
    }
    Ok(hashes)
}

/// `ingest`: parse every record, cut the base segment grid, count classes,
/// and build the subject-disjoint split manifest.
pub fn run_ingest(config: &RunConfig) -> Result<()> {
    let hash = config.hash();
    let records = config.records()?;
    let mut segments: Vec<Segment> = Vec::new();
    let mut count_map: BTreeMap<AamiClass, u64> = BTreeMap::new();
    for name in &records {
        // One record in memory at a time; full signals are re-read by the
        // stages that need them.
        let record = read_record(&config.data_dir(), name)?;
        segments.extend(cut_segments(&record)?);
        for (class, n) in class_counts(std::slice::from_ref(&record)) {
            *count_map.entry(class).or_insert(0) += n;
        }
    }
    let counts = ClassCounts::from_map(records.len(), &count_map);

    let ds1: std::collections::BTreeSet<String> = config.ds1_subjects()?.into_iter().collect();
    let ds2: std::collections::BTreeSet<String> = config.ds2_subjects()?.into_iter().collect();
    let split_subjects: Vec<String> = records
        .iter()
        .filter(|r| ds1.contains(*r) || ds2.contains(*r))
        .cloned()
        .collect();
    let split = build_split(&split_subjects, &ds1, &ds2, config.split.ratio, config.seed)?;

    fs::create_dir_all(&config.out_dir)?;
    write_atomic(&config.out_dir.join(SEGMENTS_FILE), &to_jsonl(&segments)?)?;
    write_atomic(
        &config.out_dir.join(COUNTS_FILE),
        &serde_json::to_vec_pretty(&counts)?,
    )?;
    write_atomic(
        &config.out_dir.join(SPLIT_FILE),
        &serde_json::to_vec_pretty(&split)?,
    )?;
    finish_stage(
        &config.out_dir,
        "ingest",
        &hash,
        record_file_hashes(config)?,
        &[SEGMENTS_FILE, COUNTS_FILE, SPLIT_FILE],
    )?;
    Ok(())
}

fn load_split(out_dir: &Path, hash: &str) -> Result<(SplitManifest, String)> {
    let (path, file_hash) = require_artifact(out_dir, "ingest", SPLIT_FILE, hash)?;
    Ok((serde_json::from_slice(&fs::read(path)?)?, file_hash))
}

fn load_segments(out_dir: &Path, hash: &str) -> Result<(Vec<Segment>, String)> {
    let (path, file_hash) = require_artifact(out_dir, "ingest", SEGMENTS_FILE, hash)?;
    Ok((read_jsonl(&path)?, file_hash))
}

fn load_augmented(out_dir: &Path, hash: &str) -> Result<(Vec<Segment>, String)> {
    let (path, file_hash) = require_artifact(out_dir, "augment", AUGMENTED_FILE, hash)?;
    Ok((read_jsonl(&path)?, file_hash))
}

/// `augment`: plan and cut re-anchored minority-class windows for the
/// optimization split d1 only, deduplicated against the base grid.
pub fn run_augment(config: &RunConfig) -> Result<()> {
    let hash = config.hash();
    verify_raw_inputs(config)?;
    let (split, split_hash) = load_split(&config.out_dir, &hash)?;
    let (segments, segments_hash) = load_segments(&config.out_dir, &hash)?;

    let d1_segments: Vec<&Segment> = segments
        .iter()
        .filter(|s| split.d1_subjects.contains(&s.record_ref))
        .collect();
    let mut counts: BTreeMap<AamiClass, u64> = BTreeMap::new();
    let mut beats = Vec::new();
    for seg in &d1_segments {
        for (&anchor, &label) in seg.anchors.iter().zip(&seg.labels) {
            *counts.entry(label.into()).or_insert(0) += 1;
            if label != BeatClass::N {
                beats.push(BeatRef {
                    record: seg.record_ref.clone(),
                    sample: seg.start_sample + anchor,
                    class: label,
                });
            }
        }
    }
    let plan = plan_augmentation(
        &counts,
        &beats,
        &config.augment.targets,
        &config.augment.offsets,
    )?;
    for assignment in &plan.assignments {
        if !split.d1_subjects.contains(&assignment.beat.record) {
            return Err(Error::Validation(format!(
                "augmentation assignment leaked subject {}",
                assignment.beat.record
            )));
        }
    }

    // Load only the records the plan touches.
    let mut needed: Vec<&String> = plan.assignments.iter().map(|a| &a.beat.record).collect();
    needed.sort();
    needed.dedup();
    let mut records = BTreeMap::new();
    for name in needed {
        records.insert(name.clone(), read_record(&config.data_dir(), name)?);
    }
    let candidates = apply_plan(&records, &plan)?;

    // Base-grid windows win ties; only genuinely new windows are kept.
    let mut combined: Vec<Segment> = segments.clone();
    combined.extend(candidates);
    let augmented: Vec<Segment> = dedup(combined)
        .into_iter()
        .filter(|s| s.origin == SegmentOrigin::Augmented)
        .collect();

    write_atomic(&config.out_dir.join(AUGMENTED_FILE), &to_jsonl(&augmented)?)?;
    write_atomic(
        &config.out_dir.join(PLAN_FILE),
        &serde_json::to_vec_pretty(&plan)?,
    )?;
    let mut inputs = BTreeMap::new();
    inputs.insert(SPLIT_FILE.into(), split_hash);
    inputs.insert(SEGMENTS_FILE.into(), segments_hash);
    finish_stage(
        &config.out_dir,
        "augment",
        &hash,
        inputs,
        &[AUGMENTED_FILE, PLAN_FILE],
    )?;
    Ok(())
}

/// One segment's detected peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPeaks {
    pub record: String,
    pub start: usize,
    pub origin: SegmentOrigin,
    pub detected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTotals {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub tolerance_ms: f64,
    pub per_record: BTreeMap<String, DetectionTotals>,
    pub total: DetectionTotals,
}

fn totals_from(tp: usize, fp: usize, fn_: usize) -> DetectionTotals {
    let denominator = 2 * tp + fp + fn_;
    DetectionTotals {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        f1: if denominator == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denominator as f64
        },
    }
}

fn group_by_record(segments: &[Segment]) -> BTreeMap<&str, Vec<&Segment>> {
    let mut map: BTreeMap<&str, Vec<&Segment>> = BTreeMap::new();
    for seg in segments {
        map.entry(seg.record_ref.as_str()).or_default().push(seg);
    }
    map
}

/// `detect`: run the peak detector over every segment (base and augmented)
/// and score it against the annotated anchors on the base grid.
pub fn run_detect(config: &RunConfig) -> Result<()> {
    let hash = config.hash();
    verify_raw_inputs(config)?;
    let (segments, segments_hash) = load_segments(&config.out_dir, &hash)?;
    let (augmented, augmented_hash) = load_augmented(&config.out_dir, &hash)?;

    let mut all: Vec<Segment> = segments;
    all.extend(augmented);
    let by_record = group_by_record(&all);

    let mut peak_lines: Vec<SegmentPeaks> = Vec::with_capacity(all.len());
    let mut per_record: BTreeMap<String, DetectionTotals> = BTreeMap::new();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);

    for (record_name, segs) in by_record {
        let record = read_record(&config.data_dir(), record_name)?;
        let channel = record.channel(config.dataset.analysis_channel)?;
        let fs = record.sampling_rate_hz;
        let detected: Vec<(SegmentPeaks, Option<(usize, usize, usize)>)> =
            with_pool(config.jobs, || {
                segs.par_iter()
                    .map(|seg| {
                        let slice =
                            &channel[seg.start_sample..seg.start_sample + seg.length_samples];
                        let peaks = detect_rpeaks(slice, fs)?;
                        let counts = if seg.origin == SegmentOrigin::BaseGrid {
                            let annotated = PeakSet::from_anchors(seg.anchors.clone())?;
                            let report =
                                match_peaks(&peaks, &annotated, config.detector.tolerance_ms, fs);
                            Some((
                                report.true_positives,
                                report.false_positives,
                                report.false_negatives,
                            ))
                        } else {
                            None
                        };
                        Ok((
                            SegmentPeaks {
                                record: seg.record_ref.clone(),
                                start: seg.start_sample,
                                origin: seg.origin,
                                detected: peaks.positions().to_vec(),
                            },
                            counts,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
        let (mut rtp, mut rfp, mut rfn) = (0usize, 0usize, 0usize);
        for (line, counts) in detected {
            if let Some((t, f, n)) = counts {
                rtp += t;
                rfp += f;
                rfn += n;
            }
            peak_lines.push(line);
        }
        per_record.insert(record_name.to_string(), totals_from(rtp, rfp, rfn));
        tp += rtp;
        fp += rfp;
        fn_ += rfn;
    }

    let report = DetectorReport {
        tolerance_ms: config.detector.tolerance_ms,
        per_record,
        total: totals_from(tp, fp, fn_),
    };
    write_atomic(&config.out_dir.join(PEAKS_FILE), &to_jsonl(&peak_lines)?)?;
    write_atomic(
        &config.out_dir.join(DETECTOR_REPORT_FILE),
        &serde_json::to_vec_pretty(&report)?,
    )?;
    let mut inputs = BTreeMap::new();
    inputs.insert(SEGMENTS_FILE.into(), segments_hash);
    inputs.insert(AUGMENTED_FILE.into(), augmented_hash);
    finish_stage(
        &config.out_dir,
        "detect",
        &hash,
        inputs,
        &[PEAKS_FILE, DETECTOR_REPORT_FILE],
    )?;
    Ok(())
}

/// One labeled beat row of the feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub subject: String,
    pub start: usize,
    pub origin: SegmentOrigin,
    pub anchor: usize,
    pub label: BeatClass,
    pub features: Vec<f64>,
}

pub const FEATURE_CSV_HEADER: &str = "subject,start,origin,anchor,label,rr_pre,rr_next,rr_local,rr_global,nrr_pre,nrr_next,nrr_local,nrr_global,amp,hos_s1,hos_s2,hos_s3,hos_s4,hos_s5,hos_k1,hos_k2,hos_k3,hos_k4,hos_k5,morph_1,morph_2,morph_3,morph_4";

impl FeatureRow {
    fn origin_tag(origin: SegmentOrigin) -> &'static str {
        match origin {
            SegmentOrigin::BaseGrid => "base",
            SegmentOrigin::Augmented => "augmented",
        }
    }

    fn to_csv(&self) -> String {
        let mut line = format!(
            "{},{},{},{},{}",
            self.subject,
            self.start,
            Self::origin_tag(self.origin),
            self.anchor,
            self.label
        );
        for v in &self.features {
            line.push(',');
            line.push_str(&format!("{v}"));
        }
        line
    }

    fn parse_csv(line: &str) -> Result<FeatureRow> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 + FULL_DIMS {
            return Err(Error::Validation(format!(
                "feature row has {} fields, expected {}",
                fields.len(),
                5 + FULL_DIMS
            )));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Validation(format!("bad integer `{s}` in feature row")))
        };
        let origin = match fields[2] {
            "base" => SegmentOrigin::BaseGrid,
            "augmented" => SegmentOrigin::Augmented,
            other => return Err(Error::Validation(format!("bad origin `{other}`"))),
        };
        let features = fields[5..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Validation(format!("bad float `{s}` in feature row")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(FeatureRow {
            subject: fields[0].to_string(),
            start: parse_usize(fields[1])?,
            origin,
            anchor: parse_usize(fields[3])?,
            label: BeatClass::from_name(fields[4])?,
            features,
        })
    }
}

pub fn read_feature_rows(path: &Path) -> Result<Vec<FeatureRow>> {
    let file = fs::File::open(path)?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != FEATURE_CSV_HEADER {
                return Err(Error::Validation("unexpected feature CSV header".into()));
            }
            continue;
        }
        rows.push(FeatureRow::parse_csv(&line)?);
    }
    Ok(rows)
}

/// `features`: compute the 23-vector per beat. With the default `detected`
/// anchor source, anchors come from the peak detector and labels from
/// matching against the annotations; unmatched detections produce no rows.
pub fn run_features(config: &RunConfig) -> Result<()> {
    let hash = config.hash();
    verify_raw_inputs(config)?;
    let (segments, segments_hash) = load_segments(&config.out_dir, &hash)?;
    let (augmented, augmented_hash) = load_augmented(&config.out_dir, &hash)?;
    let (peaks_path, peaks_hash) = require_artifact(&config.out_dir, "detect", PEAKS_FILE, &hash)?;
    let peak_lines: Vec<SegmentPeaks> = read_jsonl(&peaks_path)?;
    let mut peaks_by_key: BTreeMap<(String, usize), &SegmentPeaks> = BTreeMap::new();
    for line in &peak_lines {
        peaks_by_key.insert((line.record.clone(), line.start), line);
    }

    let mut all: Vec<Segment> = segments;
    all.extend(augmented);
    let by_record = group_by_record(&all);

    let mut csv = String::from(FEATURE_CSV_HEADER);
    csv.push('\n');
    let mut transcript = String::new();

    for (record_name, segs) in by_record {
        let record = read_record(&config.data_dir(), record_name)?;
        let channel = record.channel(config.dataset.analysis_channel)?;
        let fs = record.sampling_rate_hz;

        let results: Vec<(usize, Vec<(usize, BeatClass, BeatFeatures<f64>)>)> =
            with_pool(config.jobs, || {
                segs.par_iter()
                    .map(|seg| {
                        let slice =
                            &channel[seg.start_sample..seg.start_sample + seg.length_samples];
                        let (anchors, labels): (Vec<usize>, Vec<Option<BeatClass>>) =
                            match config.detector.anchor_source {
                                AnchorSource::Annotated => (
                                    seg.anchors.clone(),
                                    seg.labels.iter().map(|&l| Some(l)).collect(),
                                ),
                                AnchorSource::Detected => {
                                    let line = peaks_by_key
                                        .get(&(seg.record_ref.clone(), seg.start_sample))
                                        .ok_or_else(|| Error::MissingArtifact {
                                            stage: "detect".into(),
                                            path: config.out_dir.join(PEAKS_FILE),
                                        })?;
                                    let detected = PeakSet::from_anchors(line.detected.clone())?;
                                    let annotated = PeakSet::from_anchors(seg.anchors.clone())?;
                                    let labels = align_labels(
                                        &detected,
                                        &annotated,
                                        &seg.labels,
                                        config.detector.tolerance_ms,
                                        fs,
                                    )?;
                                    (line.detected.clone(), labels)
                                }
                            };
                        let features = segment_features(slice, &anchors, fs)?;
                        let rows: Vec<(usize, BeatClass, BeatFeatures<f64>)> = anchors
                            .iter()
                            .zip(labels)
                            .zip(features)
                            .filter_map(|((&anchor, label), feats)| {
                                label.map(|l| (anchor, l, feats))
                            })
                            .collect();
                        Ok((seg.start_sample, rows))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;

        for (seg, (start, rows)) in segs.iter().zip(results) {
            transcript.push_str(&format!(
                "> {} {} {}\n",
                record_name,
                start,
                FeatureRow::origin_tag(seg.origin)
            ));
            for (anchor, label, feats) in rows {
                transcript.push_str(&feats.to_line(anchor));
                transcript.push('\n');
                let row = FeatureRow {
                    subject: record_name.to_string(),
                    start,
                    origin: seg.origin,
                    anchor,
                    label,
                    features: feats.to_vec(),
                };
                csv.push_str(&row.to_csv());
                csv.push('\n');
            }
        }
    }

    write_atomic(&config.out_dir.join(FEATURES_FILE), csv.as_bytes())?;
    write_atomic(
        &config.out_dir.join(FEATURE_LINES_FILE),
        transcript.as_bytes(),
    )?;
    let mut inputs = BTreeMap::new();
    inputs.insert(SEGMENTS_FILE.into(), segments_hash);
    inputs.insert(AUGMENTED_FILE.into(), augmented_hash);
    inputs.insert(PEAKS_FILE.into(), peaks_hash);
    finish_stage(
        &config.out_dir,
        "features",
        &hash,
        inputs,
        &[FEATURES_FILE, FEATURE_LINES_FILE],
    )?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub rows_used: usize,
    pub minimal_loss_trace: Vec<f64>,
    pub rich_loss_trace: Vec<f64>,
    pub grad_check_minimal: f64,
    pub grad_check_rich: f64,
}

/// `train`: fit both tiers on the d1 rows (base plus augmented) and gate
/// the gradients against central differences.
pub fn run_train(config: &RunConfig) -> Result<()> {
    let hash = config.hash();
    let (split, split_hash) = load_split(&config.out_dir, &hash)?;
    let (features_path, features_hash) =
        require_artifact(&config.out_dir, "features", FEATURES_FILE, &hash)?;
    let rows = read_feature_rows(&features_path)?;

    let d1_rows: Vec<&FeatureRow> = rows
        .iter()
        .filter(|r| split.d1_subjects.contains(&r.subject))
        .collect();
    if d1_rows.is_empty() {
        return Err(Error::Validation("no training rows in the d1 split".into()));
    }
    let matrix: Vec<Vec<f64>> = d1_rows.iter().map(|r| r.features.clone()).collect();
    let labels: Vec<BeatClass> = d1_rows.iter().map(|r| r.label).collect();

    let train_config = config.train_config();
    let minimal = train(&matrix, &labels, Tier::Minimal, train_config)?;
    let rich = train(&matrix, &labels, Tier::Rich, train_config)?;

    let probe = matrix.len().min(16);
    let report = TrainReport {
        rows_used: matrix.len(),
        minimal_loss_trace: minimal.loss_trace.clone(),
        rich_loss_trace: rich.loss_trace.clone(),
        grad_check_minimal: grad_check(&minimal, &matrix[..probe], &labels[..probe])?,
        grad_check_rich: grad_check(&rich, &matrix[..probe], &labels[..probe])?,
    };

    write_atomic(
        &config.out_dir.join(MODEL_MINIMAL_FILE),
        &serde_json::to_vec_pretty(&minimal)?,
    )?;
    write_atomic(
        &config.out_dir.join(MODEL_RICH_FILE),
        &serde_json::to_vec_pretty(&rich)?,
    )?;
    write_atomic(
        &config.out_dir.join(TRAIN_REPORT_FILE),
        &serde_json::to_vec_pretty(&report)?,
    )?;
    let mut inputs = BTreeMap::new();
    inputs.insert(SPLIT_FILE.into(), split_hash);
    inputs.insert(FEATURES_FILE.into(), features_hash);
    finish_stage(
        &config.out_dir,
        "train",
        &hash,
        inputs,
        &[MODEL_MINIMAL_FILE, MODEL_RICH_FILE, TRAIN_REPORT_FILE],
    )?;
    Ok(())
}

fn load_model(out_dir: &Path, file: &str, hash: &str) -> Result<(ClassifierParams<f64>, String)> {
    let (path, file_hash) = require_artifact(out_dir, "train", file, hash)?;
    Ok((serde_json::from_slice(&fs::read(path)?)?, file_hash))
}

/// Beats of one segment with everything both tiers need.
struct SegmentEval {
    subject: String,
    start: usize,
    truths: Vec<BeatClass>,
    anchors: Vec<usize>,
    minimal_posteriors: Vec<Posterior<f64>>,
    rich_posteriors: Vec<Posterior<f64>>,
}

fn evaluate_segments(
    rows: &[FeatureRow],
    subjects: &std::collections::BTreeSet<String>,
    minimal: &ClassifierParams<f64>,
    rich: &ClassifierParams<f64>,
) -> Result<Vec<SegmentEval>> {
    let mut grouped: BTreeMap<(String, usize), Vec<&FeatureRow>> = BTreeMap::new();
    for row in rows {
        if subjects.contains(&row.subject) && row.origin == SegmentOrigin::BaseGrid {
            grouped
                .entry((row.subject.clone(), row.start))
                .or_default()
                .push(row);
        }
    }
    grouped
        .into_iter()
        .map(|((subject, start), rows)| {
            let minimal_posteriors = rows
                .iter()
                .map(|r| predict(minimal, &r.features))
                .collect::<Result<Vec<_>>>()?;
            let rich_posteriors = rows
                .iter()
                .map(|r| predict(rich, &r.features))
                .collect::<Result<Vec<_>>>()?;
            Ok(SegmentEval {
                subject,
                start,
                truths: rows.iter().map(|r| r.label).collect(),
                anchors: rows.iter().map(|r| r.anchor).collect(),
                minimal_posteriors,
                rich_posteriors,
            })
        })
        .collect()
}

/// `sweep`: induce the confidence threshold on the d2 split.
pub fn run_sweep(config: &RunConfig) -> Result<()> {
    let hash = config.hash();
    let (split, split_hash) = load_split(&config.out_dir, &hash)?;
    let (features_path, features_hash) =
        require_artifact(&config.out_dir, "features", FEATURES_FILE, &hash)?;
    let (minimal, minimal_hash) = load_model(&config.out_dir, MODEL_MINIMAL_FILE, &hash)?;
    let (rich, rich_hash) = load_model(&config.out_dir, MODEL_RICH_FILE, &hash)?;
    let rows = read_feature_rows(&features_path)?;

    let evals = evaluate_segments(&rows, &split.d2_subjects, &minimal, &rich)?;
    let mode = config.routing.mode;
    let sweep_segments: Vec<SweepSegment> = evals
        .iter()
        .filter(|e| !e.truths.is_empty())
        .map(|e| {
            Ok(SweepSegment {
                subject: e.subject.clone(),
                confidence: segment_confidence(&e.minimal_posteriors, mode)?.aggregate,
                minimal: e.minimal_posteriors.iter().map(Posterior::argmax).collect(),
                rich: e.rich_posteriors.iter().map(Posterior::argmax).collect(),
                truths: e.truths.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let d2: Vec<String> = split.d2_subjects.iter().cloned().collect();
    let ds2: Vec<String> = split.ds2_subjects.iter().cloned().collect();
    let artifact = sweep_threshold(&config.dataset.name, &sweep_segments, mode, &d2, &ds2)?;

    write_atomic(
        &config.out_dir.join(THRESHOLD_FILE),
        &serde_json::to_vec_pretty(&artifact)?,
    )?;
    let mut inputs = BTreeMap::new();
    inputs.insert(SPLIT_FILE.into(), split_hash);
    inputs.insert(FEATURES_FILE.into(), features_hash);
    inputs.insert(MODEL_MINIMAL_FILE.into(), minimal_hash);
    inputs.insert(MODEL_RICH_FILE.into(), rich_hash);
    finish_stage(&config.out_dir, "sweep", &hash, inputs, &[THRESHOLD_FILE])?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub tau: f64,
    pub tau_source: String,
    pub mode: AggMode,
    pub segments: usize,
    pub beats: usize,
    pub routed: ClassMetrics,
    pub minimal: ClassMetrics,
    pub rich: ClassMetrics,
    pub routing: RoutingReport,
}

fn confusion_csv(metrics: &ClassMetrics) -> String {
    let norm = confusion_rows(metrics);
    let mut out = String::from("truth,N,S,V,F,support\n");
    for (t, class) in BeatClass::ALL.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{}\n",
            class,
            norm.rows[t][0],
            norm.rows[t][1],
            norm.rows[t][2],
            norm.rows[t][3],
            metrics.support[t]
        ));
    }
    out
}

fn posterior_csv(evals: &[SegmentEval], tier: Tier) -> String {
    let mut out = String::from("subject,segment,anchor,p_N,p_S,p_V,p_F,pred,true\n");
    for e in evals {
        let posteriors = match tier {
            Tier::Minimal => &e.minimal_posteriors,
            Tier::Rich => &e.rich_posteriors,
        };
        for ((p, &anchor), &truth) in posteriors.iter().zip(&e.anchors).zip(&e.truths) {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                e.subject,
                e.start,
                anchor,
                p.probs[0],
                p.probs[1],
                p.probs[2],
                p.probs[3],
                p.argmax(),
                truth
            ));
        }
    }
    out
}

/// `evaluate`: route every test segment with the induced (or overridden)
/// threshold and report routed and pure-branch metrics, the routing cost,
/// the confidence profile, and the posterior dumps.
pub fn run_evaluate(config: &RunConfig, flags: &RuntimeFlags) -> Result<()> {
    let hash = config.hash();
    let (split, split_hash) = load_split(&config.out_dir, &hash)?;
    let (features_path, features_hash) =
        require_artifact(&config.out_dir, "features", FEATURES_FILE, &hash)?;
    let (minimal, minimal_hash) = load_model(&config.out_dir, MODEL_MINIMAL_FILE, &hash)?;
    let (rich, rich_hash) = load_model(&config.out_dir, MODEL_RICH_FILE, &hash)?;

    let mut inputs = BTreeMap::new();
    inputs.insert(SPLIT_FILE.into(), split_hash);
    inputs.insert(FEATURES_FILE.into(), features_hash);
    inputs.insert(MODEL_MINIMAL_FILE.into(), minimal_hash);
    inputs.insert(MODEL_RICH_FILE.into(), rich_hash);

    let (tau, tau_source) = match flags.tau_override {
        Some(t) => (t, "override".to_string()),
        None => {
            let (path, threshold_hash) =
                require_artifact(&config.out_dir, "sweep", THRESHOLD_FILE, &hash)?;
            let artifact: ThresholdArtifact = serde_json::from_slice(&fs::read(path)?)?;
            inputs.insert(THRESHOLD_FILE.into(), threshold_hash);
            (artifact.tau, "sweep".to_string())
        }
    };

    let rows = read_feature_rows(&features_path)?;
    let evals = evaluate_segments(&rows, &split.ds2_subjects, &minimal, &rich)?;
    let mode = config.routing.mode;

    let mut routed_lines: Vec<RoutedPrediction<f64>> = Vec::new();
    let mut routed_preds = Vec::new();
    let mut minimal_preds = Vec::new();
    let mut rich_preds = Vec::new();
    let mut truths = Vec::new();
    let mut truths_by_segment = Vec::new();
    let mut profile_segments = Vec::new();

    for e in evals.iter().filter(|e| !e.truths.is_empty()) {
        let rich_posteriors = e.rich_posteriors.clone();
        let routed = route(
            &format!("{}:{}", e.subject, e.start),
            &e.minimal_posteriors,
            tau,
            mode,
            move || Ok(rich_posteriors),
        )?;
        routed_preds.extend(routed.labels.iter().copied());
        minimal_preds.extend(e.minimal_posteriors.iter().map(Posterior::argmax));
        rich_preds.extend(e.rich_posteriors.iter().map(Posterior::argmax));
        truths.extend(e.truths.iter().copied());
        truths_by_segment.push(e.truths.clone());
        profile_segments.push(SweepSegment {
            subject: e.subject.clone(),
            confidence: routed.confidence.aggregate,
            minimal: e.minimal_posteriors.iter().map(Posterior::argmax).collect(),
            rich: e.rich_posteriors.iter().map(Posterior::argmax).collect(),
            truths: e.truths.clone(),
        });
        routed_lines.push(routed);
    }
    if truths.is_empty() {
        return Err(Error::Validation(
            "no evaluable beats in the test split".into(),
        ));
    }

    let report = EvalReport {
        dataset: config.dataset.name.clone(),
        tau,
        tau_source,
        mode,
        segments: routed_lines.len(),
        beats: truths.len(),
        routed: compute_metrics(&routed_preds, &truths)?,
        minimal: compute_metrics(&minimal_preds, &truths)?,
        rich: compute_metrics(&rich_preds, &truths)?,
        routing: routing_report(&routed_lines, &truths_by_segment)?,
    };
    let profile = confidence_profile(&profile_segments)?;
    let mut profile_csv = String::from("lo,hi,count,minimal_f1,rich_f1\n");
    for bin in &profile {
        profile_csv.push_str(&format!(
            "{:.3},{:.3},{},{},{}\n",
            bin.lo,
            bin.hi,
            bin.count,
            bin.minimal_f1
                .map(|v| format!("{v:.6}"))
                .unwrap_or_default(),
            bin.rich_f1.map(|v| format!("{v:.6}")).unwrap_or_default(),
        ));
    }

    write_atomic(
        &config.out_dir.join(METRICS_FILE),
        &serde_json::to_vec_pretty(&report)?,
    )?;
    write_atomic(&config.out_dir.join(ROUTED_FILE), &to_jsonl(&routed_lines)?)?;
    write_atomic(&config.out_dir.join(PROFILE_FILE), profile_csv.as_bytes())?;
    write_atomic(
        &config.out_dir.join("confusion_routed.csv"),
        confusion_csv(&report.routed).as_bytes(),
    )?;
    write_atomic(
        &config.out_dir.join("confusion_minimal.csv"),
        confusion_csv(&report.minimal).as_bytes(),
    )?;
    write_atomic(
        &config.out_dir.join("confusion_rich.csv"),
        confusion_csv(&report.rich).as_bytes(),
    )?;
    write_atomic(
        &config.out_dir.join("posteriors_minimal.csv"),
        posterior_csv(&evals, Tier::Minimal).as_bytes(),
    )?;
    write_atomic(
        &config.out_dir.join("posteriors_rich.csv"),
        posterior_csv(&evals, Tier::Rich).as_bytes(),
    )?;
    finish_stage(
        &config.out_dir,
        "evaluate",
        &hash,
        inputs,
        &[
            METRICS_FILE,
            ROUTED_FILE,
            PROFILE_FILE,
            "confusion_routed.csv",
            "confusion_minimal.csv",
            "confusion_rich.csv",
            "posteriors_minimal.csv",
            "posteriors_rich.csv",
        ],
    )?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressRunReport {
    pub seed: u64,
    pub segments_perturbed: usize,
    pub mislocalize_skipped: usize,
    pub outcomes: Vec<StressOutcome>,
}

struct LabelPools {
    clean_interfered: Vec<(BeatClass, BeatClass)>,
    stress_interfered: Vec<(BeatClass, BeatClass)>,
    clean_rest: Vec<(BeatClass, BeatClass)>,
    stress_rest: Vec<(BeatClass, BeatClass)>,
}

impl LabelPools {
    fn new() -> Self {
        LabelPools {
            clean_interfered: Vec::new(),
            stress_interfered: Vec::new(),
            clean_rest: Vec::new(),
            stress_rest: Vec::new(),
        }
    }

    fn deltas(&self, interfered: bool) -> Result<(Option<[f64; 4]>, [f64; 4])> {
        let metrics = |pairs: &[(BeatClass, BeatClass)]| -> Result<ClassMetrics> {
            let preds: Vec<BeatClass> = pairs.iter().map(|&(p, _)| p).collect();
            let truths: Vec<BeatClass> = pairs.iter().map(|&(_, t)| t).collect();
            compute_metrics(&preds, &truths)
        };
        let non_interfered =
            stress_report(&metrics(&self.clean_rest)?, &metrics(&self.stress_rest)?);
        let interfered_delta = if interfered {
            Some(stress_report(
                &metrics(&self.clean_interfered)?,
                &metrics(&self.stress_interfered)?,
            ))
        } else {
            None
        };
        Ok((interfered_delta, non_interfered))
    }
}

/// `stress`: perturb one randomly chosen beat per test segment (masking and
/// mislocalization) and measure the per-class F1 drop for interfered and
/// non-interfered beats, rerunning the full routed pipeline on the
/// perturbed anchors.
pub fn run_stress(config: &RunConfig) -> Result<()> {
    let hash = config.hash();
    verify_raw_inputs(config)?;
    let (split, split_hash) = load_split(&config.out_dir, &hash)?;
    let (segments, segments_hash) = load_segments(&config.out_dir, &hash)?;
    let (minimal, minimal_hash) = load_model(&config.out_dir, MODEL_MINIMAL_FILE, &hash)?;
    let (rich, rich_hash) = load_model(&config.out_dir, MODEL_RICH_FILE, &hash)?;
    let (threshold_path, threshold_hash) =
        require_artifact(&config.out_dir, "sweep", THRESHOLD_FILE, &hash)?;
    let threshold: ThresholdArtifact = serde_json::from_slice(&fs::read(threshold_path)?)?;

    let mut eligible: Vec<&Segment> = segments
        .iter()
        .filter(|s| {
            split.ds2_subjects.contains(&s.record_ref)
                && s.origin == SegmentOrigin::BaseGrid
                && !s.anchors.is_empty()
        })
        .collect();
    if config.stress.max_segments > 0 {
        eligible.truncate(config.stress.max_segments);
    }
    if eligible.is_empty() {
        return Err(Error::Validation(
            "no eligible test segments for the stress run".into(),
        ));
    }

    let mode = config.routing.mode;
    let tau = threshold.tau;
    // Routed predictions for a segment's anchor set; anchors are the true
    // (possibly perturbed) peak positions here.
    let predict_segment = |signal: &[f64], seg: &Segment, fs: u32| -> Result<Vec<BeatClass>> {
        if seg.anchors.is_empty() {
            return Ok(Vec::new());
        }
        let features = segment_features(signal, &seg.anchors, fs)?;
        let minimal_posteriors: Vec<Posterior<f64>> = features
            .iter()
            .map(|f| predict(&minimal, &f.to_vec()))
            .collect::<Result<_>>()?;
        let rich_ref = &rich;
        let features_ref = &features;
        let routed = route("stress", &minimal_posteriors, tau, mode, move || {
            features_ref
                .iter()
                .map(|f| predict(rich_ref, &f.to_vec()))
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(routed.labels)
    };

    let stress_seed = config.seed.wrapping_add(0x5752);
    let mut rng = ChaCha8Rng::seed_from_u64(stress_seed);
    let mut mask_pools = LabelPools::new();
    let mut misloc_pools = LabelPools::new();
    let mut skipped = 0usize;
    let mut last_offset = 0i32;

    let eligible_owned: Vec<Segment> = eligible.iter().map(|s| (*s).clone()).collect();
    let by_record = group_by_record(&eligible_owned);
    for (record_name, segs) in by_record {
        let record = read_record(&config.data_dir(), record_name)?;
        let channel = record.channel(config.dataset.analysis_channel)?;
        let fs = record.sampling_rate_hz;
        for seg in segs {
            let slice = &channel[seg.start_sample..seg.start_sample + seg.length_samples];
            let clean_preds = predict_segment(slice, seg, fs)?;
            let beat = rng.gen_range(0..seg.anchors.len());

            // Masking: the perturbed beat disappears from the targets.
            let masked = stress_mask(seg, beat)?;
            let masked_preds = predict_segment(slice, &masked, fs)?;
            for (i, (&truth, &clean)) in seg.labels.iter().zip(&clean_preds).enumerate() {
                if i == beat {
                    continue;
                }
                let masked_idx = if i < beat { i } else { i - 1 };
                mask_pools.clean_rest.push((clean, truth));
                mask_pools
                    .stress_rest
                    .push((masked_preds[masked_idx], truth));
            }

            // Mislocalization: shift left or right by 6..=30 samples.
            let magnitude = rng.gen_range(*MISLOCALIZE_RANGE.start()..=*MISLOCALIZE_RANGE.end());
            let offset = if rng.gen_bool(0.5) {
                magnitude
            } else {
                -magnitude
            };
            last_offset = offset;
            match stress_mislocalize(seg, beat, offset)? {
                None => skipped += 1,
                Some(shifted) => {
                    let shifted_preds = predict_segment(slice, &shifted, fs)?;
                    for (i, (&truth, &clean)) in seg.labels.iter().zip(&clean_preds).enumerate() {
                        if i == beat {
                            misloc_pools.clean_interfered.push((clean, truth));
                            misloc_pools
                                .stress_interfered
                                .push((shifted_preds[i], truth));
                        } else {
                            misloc_pools.clean_rest.push((clean, truth));
                            misloc_pools.stress_rest.push((shifted_preds[i], truth));
                        }
                    }
                }
            }
        }
    }

    let (mask_interfered, mask_rest) = mask_pools.deltas(false)?;
    let (misloc_interfered, misloc_rest) = misloc_pools.deltas(true)?;
    let outcomes = vec![
        StressOutcome {
            perturbation: Perturbation::Mask,
            interfered_delta_f1: mask_interfered,
            non_interfered_delta_f1: mask_rest,
        },
        StressOutcome {
            perturbation: Perturbation::Mislocalize {
                offset_samples: last_offset,
            },
            interfered_delta_f1: misloc_interfered,
            non_interfered_delta_f1: misloc_rest,
        },
    ];

    let mut csv = String::from(
        "label,mask_interfered,mask_non_interfered,mislocalize_interfered,mislocalize_non_interfered\n",
    );
    for (i, class) in BeatClass::ALL.iter().enumerate() {
        csv.push_str(&format!(
            "{},--,{:.4},{:.4},{:.4}\n",
            class,
            mask_rest[i],
            misloc_interfered.map(|d| d[i]).unwrap_or(0.0),
            misloc_rest[i]
        ));
    }
    let report = StressRunReport {
        seed: stress_seed,
        segments_perturbed: eligible.len(),
        mislocalize_skipped: skipped,
        outcomes,
    };

    write_atomic(&config.out_dir.join(STRESS_CSV_FILE), csv.as_bytes())?;
    write_atomic(
        &config.out_dir.join(STRESS_JSON_FILE),
        &serde_json::to_vec_pretty(&report)?,
    )?;
    let mut inputs = BTreeMap::new();
    inputs.insert(SPLIT_FILE.into(), split_hash);
    inputs.insert(SEGMENTS_FILE.into(), segments_hash);
    inputs.insert(MODEL_MINIMAL_FILE.into(), minimal_hash);
    inputs.insert(MODEL_RICH_FILE.into(), rich_hash);
    inputs.insert(THRESHOLD_FILE.into(), threshold_hash);
    finish_stage(
        &config.out_dir,
        "stress",
        &hash,
        inputs,
        &[STRESS_CSV_FILE, STRESS_JSON_FILE],
    )?;
    Ok(())
}

/// `report`: verify the artifact hash chain end to end and render the final
/// tables plus a plain-text summary.
pub fn run_report(config: &RunConfig) -> Result<()> {
    let hash = config.hash();

    // Every stage meta in the run directory must carry the same config hash.
    for entry in fs::read_dir(&config.out_dir)? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(stage) = name.strip_suffix(".meta.json") {
            let meta = load_meta(&config.out_dir, stage)?;
            if meta.config_hash != hash {
                return Err(Error::HashMismatch(format!(
                    "stage `{stage}` ran under config {}, current config is {}",
                    crate::pipeline::artifact::short(&meta.config_hash),
                    crate::pipeline::artifact::short(&hash)
                )));
            }
        }
    }

    let (metrics_path, metrics_hash) =
        require_artifact(&config.out_dir, "evaluate", METRICS_FILE, &hash)?;
    let eval: EvalReport = serde_json::from_slice(&fs::read(metrics_path)?)?;
    let (threshold_path, threshold_hash) =
        require_artifact(&config.out_dir, "sweep", THRESHOLD_FILE, &hash)?;
    let threshold: ThresholdArtifact = serde_json::from_slice(&fs::read(threshold_path)?)?;
    let (detector_path, detector_hash) =
        require_artifact(&config.out_dir, "detect", DETECTOR_REPORT_FILE, &hash)?;
    let detector: DetectorReport = serde_json::from_slice(&fs::read(detector_path)?)?;
    let (stress_path, stress_hash) =
        require_artifact(&config.out_dir, "stress", STRESS_CSV_FILE, &hash)?;
    let stress_csv = fs::read_to_string(&stress_path)?;

    let report_dir = config.out_dir.join("report");
    fs::create_dir_all(&report_dir)?;

    let mut metrics_csv = String::from("variant,micro_f1,macro_f1,f1_N,f1_S,f1_V,f1_F\n");
    for (name, m) in [
        ("routed", &eval.routed),
        ("minimal", &eval.minimal),
        ("rich", &eval.rich),
    ] {
        metrics_csv.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            name, m.micro_f1, m.macro_f1, m.f1[0], m.f1[1], m.f1[2], m.f1[3]
        ));
    }
    let routing_csv = format!(
        "tau,mode,avg_tool_calls,rich_fraction,minimal_micro_f1,rich_micro_f1\n{:.6},{:?},{:.4},{:.4},{},{}\n",
        eval.tau,
        eval.mode,
        eval.routing.avg_tool_calls,
        eval.routing.rich_fraction,
        eval.routing.minimal_micro_f1.map(|v| format!("{v:.4}")).unwrap_or_default(),
        eval.routing.rich_micro_f1.map(|v| format!("{v:.4}")).unwrap_or_default(),
    );

    let mut summary = String::new();
    summary.push_str(&format!(
        "run summary ({} / config {})\n",
        eval.dataset,
        crate::pipeline::artifact::short(&hash)
    ));
    summary.push_str(&format!(
        "threshold: tau = {:.6} ({}) mode = {:?}, induced on {:?}\n",
        eval.tau, eval.tau_source, eval.mode, threshold.induced_on
    ));
    summary.push_str(&format!(
        "detector: F1 = {:.4} at {} ms tolerance ({} TP / {} FP / {} FN)\n",
        detector.total.f1,
        detector.tolerance_ms,
        detector.total.true_positives,
        detector.total.false_positives,
        detector.total.false_negatives
    ));
    summary.push_str(&format!(
        "segments: {}  beats: {}  rich fraction: {:.3}  avg tool calls: {:.2}\n\n",
        eval.segments, eval.beats, eval.routing.rich_fraction, eval.routing.avg_tool_calls
    ));
    summary.push_str("variant   micro-F1  macro-F1\n");
    for (name, m) in [
        ("routed ", &eval.routed),
        ("minimal", &eval.minimal),
        ("rich   ", &eval.rich),
    ] {
        summary.push_str(&format!(
            "{name}   {:.4}    {:.4}\n",
            m.micro_f1, m.macro_f1
        ));
    }
    summary.push_str("\nstress (delta F1, positive = degradation):\n");
    summary.push_str(&stress_csv);

    write_atomic(&report_dir.join("summary.txt"), summary.as_bytes())?;
    write_atomic(&report_dir.join("metrics.csv"), metrics_csv.as_bytes())?;
    write_atomic(&report_dir.join("routing.csv"), routing_csv.as_bytes())?;
    write_atomic(&report_dir.join("stress.csv"), stress_csv.as_bytes())?;

    let mut inputs = BTreeMap::new();
    inputs.insert(METRICS_FILE.into(), metrics_hash);
    inputs.insert(THRESHOLD_FILE.into(), threshold_hash);
    inputs.insert(DETECTOR_REPORT_FILE.into(), detector_hash);
    inputs.insert(STRESS_CSV_FILE.into(), stress_hash);
    finish_stage(
        &config.out_dir,
        "report",
        &hash,
        inputs,
        &[
            "report/summary.txt",
            "report/metrics.csv",
            "report/routing.csv",
            "report/stress.csv",
        ],
    )?;
    Ok(())
}
