//! Shift-based re-anchoring augmentation.
//!
//! Minority-class beats are oversampled by cutting extra 10-second windows
//! that place the beat's R peak at predefined fractional offsets along the
//! segment axis. Rarer classes consume a longer prefix of the offset ladder
//! so each class approaches its target abundance relative to N; classes at
//! or above target are left alone. Candidate windows are clipped to record
//! boundaries and deduplicated against the base grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::segment::beats_in_window;
use crate::ingest::{segment_len, AamiClass, BeatClass, Record, Segment, SegmentOrigin};

/// Default target abundances relative to the N count.
pub fn default_targets() -> BTreeMap<BeatClass, f64> {
    BTreeMap::from([
        (BeatClass::S, 0.10),
        (BeatClass::V, 0.10),
        (BeatClass::F, 0.05),
    ])
}

/// Default fractional offset ladder.
pub const DEFAULT_OFFSETS: [f64; 5] = [0.2, 0.35, 0.5, 0.65, 0.8];

/// One augmentable beat of the training split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatRef {
    pub record: String,
    pub sample: usize,
    pub class: BeatClass,
}

/// One planned window: this beat re-anchored at this fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub beat: BeatRef,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub targets: BTreeMap<BeatClass, f64>,
    pub offsets: Vec<f64>,
    pub assignments: Vec<Assignment>,
}

impl AugmentPlan {
    pub fn assignments_for(&self, class: BeatClass) -> usize {
        self.assignments
            .iter()
            .filter(|a| a.beat.class == class)
            .count()
    }
}

/// Plans the augmentation from training-split class counts.
///
/// Per class: deficit = round(ratio * n_N) - n_c; each beat receives
/// floor(deficit / n_c) ladder offsets and the first (deficit mod n_c)
/// beats one more, capped at the ladder length. The plan is deterministic:
/// beats are processed in (record, sample) order.
pub fn plan_augmentation(
    class_counts: &BTreeMap<AamiClass, u64>,
    beats: &[BeatRef],
    targets: &BTreeMap<BeatClass, f64>,
    offsets: &[f64],
) -> Result<AugmentPlan> {
    for (&class, &ratio) in targets {
        if ratio <= 0.0 {
            return Err(Error::Validation(format!(
                "target ratio for {class} must be positive, got {ratio}"
            )));
        }
    }
    for &f in offsets {
        if !(0.0 < f && f < 1.0) {
            return Err(Error::Validation(format!("offset {f} outside (0, 1)")));
        }
    }
    if beats.iter().any(|b| b.class == BeatClass::N) {
        return Err(Error::Validation(
            "augmentation assigns non-N beats only".into(),
        ));
    }

    let n_normal = *class_counts.get(&AamiClass::N).unwrap_or(&0);
    let mut by_class: BTreeMap<BeatClass, Vec<&BeatRef>> = BTreeMap::new();
    for beat in beats {
        by_class.entry(beat.class).or_default().push(beat);
    }

    let mut assignments = Vec::new();
    for (&class, &ratio) in targets {
        let Some(class_beats) = by_class.get_mut(&class) else {
            continue;
        };
        class_beats.sort_by(|a, b| (&a.record, a.sample).cmp(&(&b.record, b.sample)));
        let n_c = class_beats.len() as i64;
        let target = (ratio * n_normal as f64).round() as i64;
        let deficit = target - n_c;
        if deficit <= 0 {
            continue;
        }
        let per_beat = (deficit / n_c) as usize;
        let remainder = (deficit % n_c) as usize;
        for (i, beat) in class_beats.iter().enumerate() {
            let n_offsets = (per_beat + usize::from(i < remainder)).min(offsets.len());
            for &fraction in &offsets[..n_offsets] {
                assignments.push(Assignment {
                    beat: (*beat).clone(),
                    fraction,
                });
            }
        }
    }

    Ok(AugmentPlan {
        targets: targets.clone(),
        offsets: offsets.to_vec(),
        assignments,
    })
}

/// Cuts a new window that places `beat_sample` at `fraction` of the segment
/// axis, clipped to record boundaries. Anchors and labels are recomputed
/// from the record's annotations over the new window, so co-occurring beats
/// are included. Returns `None` when the record is shorter than one window.
pub fn reanchor(record: &Record, beat_sample: usize, fraction: f64) -> Result<Option<Segment>> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::Validation(format!(
            "fraction {fraction} outside (0, 1)"
        )));
    }
    let len = segment_len(record.sampling_rate_hz);
    let n = record.n_samples();
    if n < len {
        return Ok(None);
    }
    if beat_sample >= n {
        return Err(Error::Validation(format!(
            "beat sample {beat_sample} outside record of {n}"
        )));
    }
    let offset = ((fraction * len as f64).round() as usize).min(len - 1);
    let start = (beat_sample as i64 - offset as i64).clamp(0, (n - len) as i64) as usize;

    let (anchors, labels) = beats_in_window(record, start, len)?;
    let segment = Segment {
        record_ref: record.subject_id.clone(),
        start_sample: start,
        length_samples: len,
        anchors,
        labels,
        origin: SegmentOrigin::Augmented,
    };
    segment.validate()?;
    Ok(Some(segment))
}

/// Removes duplicate (record, start) windows. Base-grid segments always win
/// ties; otherwise the first occurrence is kept and order is preserved.
pub fn dedup(segments: Vec<Segment>) -> Vec<Segment> {
    let mut index: BTreeMap<(String, usize), usize> = BTreeMap::new();
    let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
    for seg in segments {
        let key = (seg.record_ref.clone(), seg.start_sample);
        match index.get(&key) {
            None => {
                index.insert(key, out.len());
                out.push(seg);
            }
            Some(&slot) => {
                if out[slot].origin == SegmentOrigin::Augmented
                    && seg.origin == SegmentOrigin::BaseGrid
                {
                    out[slot] = seg;
                }
            }
        }
    }
    out
}

/// Executes a plan against parsed records, dropping impossible windows.
pub fn apply_plan(records: &BTreeMap<String, Record>, plan: &AugmentPlan) -> Result<Vec<Segment>> {
    let mut out = Vec::with_capacity(plan.assignments.len());
    for assignment in &plan.assignments {
        let record = records.get(&assignment.beat.record).ok_or_else(|| {
            Error::Validation(format!(
                "plan references unknown record {}",
                assignment.beat.record
            ))
        })?;
        if let Some(segment) = reanchor(record, assignment.beat.sample, assignment.fraction)? {
            out.push(segment);
        }
    }
    Ok(out)
}
