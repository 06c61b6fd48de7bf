//! R-peak detection and tolerance-based matching against annotations.

pub mod pan_tompkins;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BeatClass;

pub use pan_tompkins::{detect_rpeaks, MIN_RATE_HZ};

/// Default peak-matching tolerance in milliseconds.
pub const MATCH_TOLERANCE_MS: f64 = 30.0;

/// Strictly increasing segment-relative peak positions with a minimum
/// spacing of one refractory period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakSet {
    positions: Vec<usize>,
    min_spacing: usize,
}

impl PeakSet {
    pub fn new(positions: Vec<usize>, min_spacing: usize) -> Result<PeakSet> {
        for pair in positions.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Validation(
                    "peak positions not strictly increasing".into(),
                ));
            }
            if pair[1] - pair[0] < min_spacing {
                return Err(Error::Validation(format!(
                    "peaks {} and {} closer than the {}-sample refractory",
                    pair[0], pair[1], min_spacing
                )));
            }
        }
        Ok(PeakSet {
            positions,
            min_spacing,
        })
    }

    /// Peaks known to be well-separated (e.g. annotated anchors); spacing is
    /// validated only for strict ordering.
    pub fn from_anchors(positions: Vec<usize>) -> Result<PeakSet> {
        PeakSet::new(positions, 1)
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Whitespace-separated sample list, the serialization the pipeline
    /// writes for detected peaks.
    pub fn to_line(&self) -> String {
        self.positions
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_line(line: &str) -> Result<PeakSet> {
        let positions = line
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::Validation(format!("bad peak position `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        PeakSet::from_anchors(positions)
    }
}

/// One-to-one matching outcome between detected and annotated peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub f1: f64,
    /// (detected index, annotated index) pairs.
    pub matched: Vec<(usize, usize)>,
}

fn tolerance_samples(tolerance_ms: f64, sampling_rate_hz: u32) -> i64 {
    ((tolerance_ms / 1000.0) * sampling_rate_hz as f64).floor() as i64
}

/// Greedy nearest-neighbor one-to-one matching within the tolerance, ties
/// broken toward the earlier annotated peak.
pub fn match_peaks(
    detected: &PeakSet,
    annotated: &PeakSet,
    tolerance_ms: f64,
    sampling_rate_hz: u32,
) -> MatchReport {
    let tol = tolerance_samples(tolerance_ms, sampling_rate_hz);
    let det = detected.positions();
    let ann = annotated.positions();

    // All candidate pairs within tolerance, closest first.
    let mut pairs: Vec<(i64, usize, usize)> = Vec::new();
    for (di, &d) in det.iter().enumerate() {
        let start = ann.partition_point(|&a| (a as i64) < d as i64 - tol);
        for (off, &a) in ann[start..].iter().enumerate() {
            let dist = (a as i64 - d as i64).abs();
            if (a as i64) > d as i64 + tol {
                break;
            }
            pairs.push((dist, start + off, di));
        }
    }
    pairs.sort_unstable_by_key(|&(dist, ai, di)| (dist, ai, di));

    let mut det_used = vec![false; det.len()];
    let mut ann_used = vec![false; ann.len()];
    let mut matched = Vec::new();
    for (_, ai, di) in pairs {
        if !det_used[di] && !ann_used[ai] {
            det_used[di] = true;
            ann_used[ai] = true;
            matched.push((di, ai));
        }
    }
    matched.sort_unstable();

    let tp = matched.len();
    let fp = det.len() - tp;
    let fn_ = ann.len() - tp;
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    MatchReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        f1,
        matched,
    }
}

/// Labels each detected peak with its matched annotated beat's class, or
/// `None` for a spurious detection. Unmatched detections are excluded from
/// training and counted as false positives by [`match_peaks`].
pub fn align_labels(
    detected: &PeakSet,
    annotated: &PeakSet,
    labels: &[BeatClass],
    tolerance_ms: f64,
    sampling_rate_hz: u32,
) -> Result<Vec<Option<BeatClass>>> {
    if annotated.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: annotated.len(),
            got: labels.len(),
        });
    }
    let report = match_peaks(detected, annotated, tolerance_ms, sampling_rate_hz);
    let mut out = vec![None; detected.len()];
    for (di, ai) in report.matched {
        out[di] = Some(labels[ai]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn peaks(p: &[usize]) -> PeakSet {
        PeakSet::from_anchors(p.to_vec()).unwrap()
    }

    #[test]
    fn identical_sets_match_perfectly() {
        let a = peaks(&[100, 500, 900]);
        let r = match_peaks(&a, &a, 30.0, 360);
        assert_eq!(
            (r.true_positives, r.false_positives, r.false_negatives),
            (3, 0, 0)
        );
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn shift_beyond_tolerance_unmatches_everything() {
        let tol = 10; // floor(0.030 * 360)
        let ann = peaks(&[100, 500, 900]);
        let det = peaks(&[100 + tol + 1, 500 + tol + 1, 900 + tol + 1]);
        let r = match_peaks(&det, &ann, 30.0, 360);
        assert_eq!(r.true_positives, 0);
        assert_eq!(r.false_positives, 3);
        assert_eq!(r.false_negatives, 3);

        let det_at_tol = peaks(&[100 + tol, 500 + tol, 900 + tol]);
        assert_eq!(match_peaks(&det_at_tol, &ann, 30.0, 360).true_positives, 3);
    }

    #[test]
    fn spurious_detection_is_a_false_positive() {
        let ann = peaks(&[100, 500, 900]);
        let det = peaks(&[100, 300, 500, 900]);
        let r = match_peaks(&det, &ann, 30.0, 360);
        assert_eq!(
            (r.true_positives, r.false_positives, r.false_negatives),
            (3, 1, 0)
        );
    }

    #[test]
    fn ties_go_to_the_earlier_annotated_peak() {
        // One detection equidistant from two annotations.
        let ann = peaks(&[95, 105]);
        let det = peaks(&[100]);
        let r = match_peaks(&det, &ann, 30.0, 360);
        assert_eq!(r.matched, vec![(0, 0)]);
    }

    #[test]
    fn align_inherits_labels_and_marks_spurious() {
        let ann = peaks(&[100, 500]);
        let labels = vec![BeatClass::N, BeatClass::V];
        let det = peaks(&[102, 300, 498]);
        let aligned = align_labels(&det, &ann, &labels, 30.0, 360).unwrap();
        assert_eq!(aligned, vec![Some(BeatClass::N), None, Some(BeatClass::V)]);
    }

    #[test]
    fn missed_beat_label_appears_nowhere() {
        let ann = peaks(&[100, 500]);
        let labels = vec![BeatClass::N, BeatClass::V];
        let det = peaks(&[100]);
        let aligned = align_labels(&det, &ann, &labels, 30.0, 360).unwrap();
        assert_eq!(aligned, vec![Some(BeatClass::N)]);
    }

    #[test]
    fn peak_set_rejects_refractory_violations() {
        assert!(PeakSet::new(vec![100, 120], 72).is_err());
        assert!(PeakSet::new(vec![100, 200], 72).is_ok());
    }

    #[test]
    fn line_serialization_round_trips() {
        let p = peaks(&[77, 370, 663]);
        assert_eq!(p.to_line(), "77 370 663");
        assert_eq!(
            PeakSet::parse_line("77 370 663").unwrap().positions(),
            p.positions()
        );
    }

    proptest! {
        /// Swapping detected/annotated swaps FP and FN but preserves TP.
        #[test]
        fn tp_is_symmetric(
            a in prop::collection::btree_set(0usize..5000, 0..40),
            b in prop::collection::btree_set(0usize..5000, 0..40),
        ) {
            let pa = peaks(&a.iter().copied().collect::<Vec<_>>());
            let pb = peaks(&b.iter().copied().collect::<Vec<_>>());
            let ab = match_peaks(&pa, &pb, 30.0, 360);
            let ba = match_peaks(&pb, &pa, 30.0, 360);
            prop_assert_eq!(ab.true_positives, ba.true_positives);
            prop_assert_eq!(ab.false_positives, ba.false_negatives);
            prop_assert_eq!(ab.false_negatives, ba.false_positives);
        }
    }
}
