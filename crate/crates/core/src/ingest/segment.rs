//! Fixed-duration context windows cut on the non-overlapping base grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::aami::{map_aami, BeatClass};
use crate::ingest::Record;

/// Context duration in seconds shared by every segment.
pub const SEGMENT_SECONDS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentOrigin {
    BaseGrid,
    Augmented,
}

/// One 10-second window of a record: a sample range plus the beat anchors
/// and true labels inside it. Q-class and non-beat annotations never appear
/// here. The signal itself stays in the owning [`Record`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub record_ref: String,
    pub start_sample: usize,
    pub length_samples: usize,
    pub anchors: Vec<usize>,
    pub labels: Vec<BeatClass>,
    pub origin: SegmentOrigin,
}

impl Segment {
    /// Checks the structural invariants: anchors strictly increasing,
    /// in-range, and aligned one-to-one with labels.
    pub fn validate(&self) -> Result<()> {
        if self.anchors.len() != self.labels.len() {
            return Err(Error::Validation(format!(
                "segment {}@{}: {} anchors vs {} labels",
                self.record_ref,
                self.start_sample,
                self.anchors.len(),
                self.labels.len()
            )));
        }
        for (i, &a) in self.anchors.iter().enumerate() {
            if a >= self.length_samples {
                return Err(Error::Validation(format!(
                    "segment {}@{}: anchor {a} outside window of {}",
                    self.record_ref, self.start_sample, self.length_samples
                )));
            }
            if i > 0 && a <= self.anchors[i - 1] {
                return Err(Error::Validation(format!(
                    "segment {}@{}: anchors not strictly increasing at {i}",
                    self.record_ref, self.start_sample
                )));
            }
        }
        Ok(())
    }
}

/// Number of samples in one segment at the given rate.
pub fn segment_len(sampling_rate_hz: u32) -> usize {
    (SEGMENT_SECONDS * sampling_rate_hz) as usize
}

/// Collects the classifiable beats of `record` in `[start, start+len)` as
/// segment-relative (anchor, label) pairs. Q and non-beat annotations are
/// dropped, not relabeled.
pub(crate) fn beats_in_window(
    record: &Record,
    start: usize,
    len: usize,
) -> Result<(Vec<usize>, Vec<BeatClass>)> {
    let mut anchors = Vec::new();
    let mut labels = Vec::new();
    for ann in &record.annotations {
        if ann.sample < start {
            continue;
        }
        if ann.sample >= start + len {
            break;
        }
        let Some(aami) = map_aami(ann.symbol) else {
            continue;
        };
        let Ok(label) = BeatClass::try_from(aami) else {
            continue; // Q excluded
        };
        let rel = ann.sample - start;
        if anchors.last() == Some(&rel) {
            return Err(Error::Validation(format!(
                "record {}: two beats at sample {}",
                record.subject_id, ann.sample
            )));
        }
        anchors.push(rel);
        labels.push(label);
    }
    Ok((anchors, labels))
}

/// Cuts the non-overlapping base grid: segment k covers samples
/// `[k*L, (k+1)*L)` with `L = 10 s * f_d`. A trailing partial window is
/// dropped.
pub fn cut_segments(record: &Record) -> Result<Vec<Segment>> {
    let len = segment_len(record.sampling_rate_hz);
    if len == 0 {
        return Err(Error::Validation("segment length is zero".into()));
    }
    let n_segments = record.n_samples() / len;
    let mut out = Vec::with_capacity(n_segments);
    for k in 0..n_segments {
        let start = k * len;
        let (anchors, labels) = beats_in_window(record, start, len)?;
        let seg = Segment {
            record_ref: record.subject_id.clone(),
            start_sample: start,
            length_samples: len,
            anchors,
            labels,
            origin: SegmentOrigin::BaseGrid,
        };
        seg.validate()?;
        out.push(seg);
    }
    Ok(out)
}
