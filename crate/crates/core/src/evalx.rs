//! Metrics, confusion matrices, confidence profiling, and the
//! peak-perturbation stress protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BeatClass, Segment};
use crate::routing::SweepSegment;

const N_CLASSES: usize = 4;

/// One-vs-rest precision/recall/F1 per class plus the aggregates.
///
/// `micro_f1` equals plain accuracy on this closed four-class problem;
/// `macro_f1` averages F1 over the classes present in the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// Rows = truth, columns = prediction, class order (N, S, V, F).
    pub confusion: [[u64; 4]; 4],
    pub support: [u64; 4],
    pub precision: [f64; 4],
    pub recall: [f64; 4],
    pub f1: [f64; 4],
    pub macro_f1: f64,
    pub micro_f1: f64,
}

pub fn compute_metrics(preds: &[BeatClass], truths: &[BeatClass]) -> Result<ClassMetrics> {
    if preds.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            got: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Validation("metrics over zero beats".into()));
    }
    let mut confusion = [[0u64; 4]; 4];
    for (&p, &t) in preds.iter().zip(truths) {
        confusion[t.index()][p.index()] += 1;
    }
    Ok(metrics_from_confusion(confusion))
}

/// Builds the derived metrics from raw confusion counts. Associative merges
/// of per-shard confusion matrices can feed this directly.
pub fn metrics_from_confusion(confusion: [[u64; 4]; 4]) -> ClassMetrics {
    let mut support = [0u64; 4];
    let mut predicted = [0u64; 4];
    let mut correct = 0u64;
    let mut total = 0u64;
    for t in 0..N_CLASSES {
        for p in 0..N_CLASSES {
            support[t] += confusion[t][p];
            predicted[p] += confusion[t][p];
            total += confusion[t][p];
            if t == p {
                correct += confusion[t][p];
            }
        }
    }
    let mut precision = [0.0; 4];
    let mut recall = [0.0; 4];
    let mut f1 = [0.0; 4];
    for c in 0..N_CLASSES {
        let tp = confusion[c][c] as f64;
        precision[c] = if predicted[c] > 0 {
            tp / predicted[c] as f64
        } else {
            0.0
        };
        recall[c] = if support[c] > 0 {
            tp / support[c] as f64
        } else {
            0.0
        };
        f1[c] = if precision[c] + recall[c] > 0.0 {
            2.0 * precision[c] * recall[c] / (precision[c] + recall[c])
        } else {
            0.0
        };
    }
    let present: Vec<usize> = (0..N_CLASSES).filter(|&c| support[c] > 0).collect();
    let macro_f1 = present.iter().map(|&c| f1[c]).sum::<f64>() / present.len().max(1) as f64;
    let micro_f1 = correct as f64 / total.max(1) as f64;
    ClassMetrics {
        confusion,
        support,
        precision,
        recall,
        f1,
        macro_f1,
        micro_f1,
    }
}

/// Row-normalized confusion matrix; rows without support are flagged and
/// left at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedConfusion {
    pub rows: [[f64; 4]; 4],
    pub empty_rows: [bool; 4],
}

pub fn confusion_rows(metrics: &ClassMetrics) -> NormalizedConfusion {
    let mut rows = [[0.0; 4]; 4];
    let mut empty_rows = [false; 4];
    for t in 0..N_CLASSES {
        if metrics.support[t] == 0 {
            empty_rows[t] = true;
            continue;
        }
        for p in 0..N_CLASSES {
            rows[t][p] = metrics.confusion[t][p] as f64 / metrics.support[t] as f64;
        }
    }
    NormalizedConfusion { rows, empty_rows }
}

/// One confidence bin with per-branch beat-level micro-F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub minimal_f1: Option<f64>,
    pub rich_f1: Option<f64>,
}

/// Fixed bin edges: ten wide bins below 0.98, ten fine bins above, where
/// segment confidences concentrate.
pub fn profile_bin_edges() -> Vec<f64> {
    let mut edges: Vec<f64> = (0..10).map(|i| i as f64 * 0.098).collect();
    edges.extend((0..=10).map(|i| 0.98 + i as f64 * 0.002));
    edges
}

/// Bins segments by confidence and reports each branch's micro-F1 per bin.
/// Empty bins are reported with count 0.
pub fn confidence_profile(segments: &[SweepSegment]) -> Result<Vec<ProfileBin>> {
    if segments.is_empty() {
        return Err(Error::Validation(
            "confidence profile over zero segments".into(),
        ));
    }
    let edges = profile_bin_edges();
    let n_bins = edges.len() - 1;
    let mut acc = vec![(0usize, 0usize, 0usize, 0usize); n_bins]; // (min_ok, rich_ok, beats, segments)
    for seg in segments {
        let c = seg.confidence;
        let bin = match edges.windows(2).position(|w| c >= w[0] && c < w[1]) {
            Some(b) => b,
            None => n_bins - 1, // confidence of exactly 1.0
        };
        let slot = &mut acc[bin];
        slot.0 += seg
            .minimal
            .iter()
            .zip(&seg.truths)
            .filter(|(p, t)| p == t)
            .count();
        slot.1 += seg
            .rich
            .iter()
            .zip(&seg.truths)
            .filter(|(p, t)| p == t)
            .count();
        slot.2 += seg.truths.len();
        slot.3 += 1;
    }
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(b, (min_ok, rich_ok, beats, count))| ProfileBin {
            lo: edges[b],
            hi: edges[b + 1],
            count,
            minimal_f1: (beats > 0).then(|| min_ok as f64 / beats as f64),
            rich_f1: (beats > 0).then(|| rich_ok as f64 / beats as f64),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    Mask,
    Mislocalize { offset_samples: i32 },
}

/// Valid mislocalization magnitudes in samples.
pub const MISLOCALIZE_RANGE: std::ops::RangeInclusive<i32> = 6..=30;

/// Removes one true anchor. The masked beat is excluded from scoring as a
/// prediction target; downstream features must be recomputed over the
/// remaining anchors.
pub fn stress_mask(segment: &Segment, beat_index: usize) -> Result<Segment> {
    if beat_index >= segment.anchors.len() {
        return Err(Error::Validation(format!(
            "beat {beat_index} out of range for {} anchors",
            segment.anchors.len()
        )));
    }
    let mut out = segment.clone();
    out.anchors.remove(beat_index);
    out.labels.remove(beat_index);
    Ok(out)
}

/// Shifts one anchor left or right by 6..=30 samples. Offsets outside that
/// domain are a validation error; a shift that would leave the window or
/// break anchor ordering is skipped and reported as `None`.
pub fn stress_mislocalize(
    segment: &Segment,
    beat_index: usize,
    offset_samples: i32,
) -> Result<Option<Segment>> {
    if !MISLOCALIZE_RANGE.contains(&offset_samples.abs()) {
        return Err(Error::Validation(format!(
            "mislocalization offset {offset_samples} outside +/-[6, 30]"
        )));
    }
    if beat_index >= segment.anchors.len() {
        return Err(Error::Validation(format!(
            "beat {beat_index} out of range for {} anchors",
            segment.anchors.len()
        )));
    }
    let shifted = segment.anchors[beat_index] as i64 + i64::from(offset_samples);
    if shifted < 0 || shifted >= segment.length_samples as i64 {
        return Ok(None);
    }
    let shifted = shifted as usize;
    if beat_index > 0 && shifted <= segment.anchors[beat_index - 1] {
        return Ok(None);
    }
    if beat_index + 1 < segment.anchors.len() && shifted >= segment.anchors[beat_index + 1] {
        return Ok(None);
    }
    let mut out = segment.clone();
    out.anchors[beat_index] = shifted;
    Ok(Some(out))
}

/// Per-class F1 drop, positive = degradation. Both metric sets must cover
/// the same beat population partition.
pub fn stress_report(clean: &ClassMetrics, stressed: &ClassMetrics) -> [f64; 4] {
    let mut delta = [0.0; 4];
    for c in 0..N_CLASSES {
        delta[c] = clean.f1[c] - stressed.f1[c];
    }
    delta
}

/// Stress outcome for one perturbation kind: interfered beats are the
/// perturbed ones (absent for masking, where the beat is removed from the
/// prediction targets), non-interfered are all other beats of the perturbed
/// segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressOutcome {
    pub perturbation: Perturbation,
    pub interfered_delta_f1: Option<[f64; 4]>,
    pub non_interfered_delta_f1: [f64; 4],
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::rr_quadruple;
    use crate::ingest::SegmentOrigin;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use BeatClass::{F, N, S, V};

    #[test]
    fn perfect_predictions_score_one() {
        let labels = vec![N, S, V, F, N];
        let m = compute_metrics(&labels, &labels).unwrap();
        assert_eq!(m.micro_f1, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.f1, [1.0; 4]);
    }

    #[test]
    fn two_class_toy_matches_the_hand_computed_oracle() {
        let truths = vec![N, N, V, V];
        let preds = vec![N, V, V, V];
        let m = compute_metrics(&preds, &truths).unwrap();
        assert_relative_eq!(m.micro_f1, 0.75);
        assert_relative_eq!(m.f1[N.index()], 2.0 / 3.0);
        assert_relative_eq!(m.f1[V.index()], 0.8);
        assert_relative_eq!(m.macro_f1, 11.0 / 15.0);
    }

    #[test]
    fn macro_skips_classes_absent_from_the_truth() {
        // F absent from truths and preds: macro averages over 3 classes.
        let truths = vec![N, S, V, N];
        let preds = vec![N, S, N, N];
        let m = compute_metrics(&preds, &truths).unwrap();
        let expected = (m.f1[N.index()] + m.f1[S.index()] + m.f1[V.index()]) / 3.0;
        assert_relative_eq!(m.macro_f1, expected);
    }

    #[test]
    fn mismatched_or_empty_inputs_error() {
        assert!(compute_metrics(&[N], &[N, V]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn normalized_rows_sum_to_one_or_are_flagged() {
        let truths = vec![N, N, V, V];
        let preds = vec![N, V, V, V];
        let m = compute_metrics(&preds, &truths).unwrap();
        let norm = confusion_rows(&m);
        assert_eq!(norm.rows[N.index()], [0.5, 0.0, 0.5, 0.0]);
        assert_eq!(norm.rows[V.index()], [0.0, 0.0, 1.0, 0.0]);
        assert!(norm.empty_rows[S.index()]);
        assert!(norm.empty_rows[F.index()]);

        let perfect = compute_metrics(&[N, S, V, F], &[N, S, V, F]).unwrap();
        let rows = confusion_rows(&perfect).rows;
        for c in 0..4 {
            assert_eq!(rows[c][c], 1.0);
            assert_relative_eq!(rows[c].iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }

    fn profile_seg(conf: f64, minimal_ok: bool, rich_ok: bool) -> SweepSegment {
        SweepSegment {
            subject: "s".into(),
            confidence: conf,
            minimal: vec![if minimal_ok { N } else { V }],
            rich: vec![if rich_ok { N } else { V }],
            truths: vec![N],
        }
    }

    #[test]
    fn single_confidence_occupies_one_bin() {
        let segs = vec![profile_seg(1.0, true, true); 5];
        let bins = confidence_profile(&segs).unwrap();
        assert_eq!(bins.len(), 20);
        let occupied: Vec<&ProfileBin> = bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(occupied.len(), 1);
        assert_eq!(occupied[0].count, 5);
        assert_eq!(occupied[0].minimal_f1, Some(1.0));
        let empty = bins.iter().filter(|b| b.count == 0).count();
        assert_eq!(empty, 19);
    }

    #[test]
    fn crossover_fixture_shows_rich_winning_only_below_the_cross() {
        // Rich beats minimal below confidence 0.9, minimal wins above.
        let mut segs = Vec::new();
        for i in 0..9 {
            let c = 0.05 + i as f64 * 0.1;
            segs.push(profile_seg(c, c >= 0.9, c < 0.9));
        }
        let bins = confidence_profile(&segs).unwrap();
        for b in bins.iter().filter(|b| b.count > 0) {
            if b.hi <= 0.9 {
                assert!(b.rich_f1 > b.minimal_f1, "bin [{}, {})", b.lo, b.hi);
            } else if b.lo >= 0.9 {
                assert!(b.minimal_f1 > b.rich_f1, "bin [{}, {})", b.lo, b.hi);
            }
        }
    }

    fn segment(anchors: &[usize], labels: &[BeatClass]) -> Segment {
        Segment {
            record_ref: "r".into(),
            start_sample: 0,
            length_samples: 3600,
            anchors: anchors.to_vec(),
            labels: labels.to_vec(),
            origin: SegmentOrigin::BaseGrid,
        }
    }

    #[test]
    fn masking_the_only_beat_leaves_no_targets() {
        let seg = segment(&[500], &[N]);
        let masked = stress_mask(&seg, 0).unwrap();
        assert!(masked.anchors.is_empty());
        assert!(masked.labels.is_empty());
    }

    #[test]
    fn masking_changes_only_the_rr_neighborhood() {
        let anchors = [300, 600, 900, 1200, 1500, 1800];
        let seg = segment(&anchors, &[N; 6]);
        let masked = stress_mask(&seg, 2).unwrap();
        assert_eq!(masked.anchors, vec![300, 600, 1200, 1500, 1800]);
        // Beat 0 does not reference the masked anchor: unchanged quadruple.
        assert_eq!(
            rr_quadruple(&seg.anchors, 0).unwrap(),
            rr_quadruple(&masked.anchors, 0).unwrap()
        );
        // Beat 1 keeps its pre interval but its next interval doubles.
        let before = rr_quadruple(&seg.anchors, 1).unwrap();
        let after = rr_quadruple(&masked.anchors, 1).unwrap();
        assert_eq!(before[0], after[0]);
        assert_eq!(after[1], 600);
        // The beat after the masked one sees a doubled pre interval.
        assert_eq!(rr_quadruple(&masked.anchors, 2).unwrap()[0], 600);
    }

    #[test]
    fn mislocalize_shifts_the_neighbor_pre_interval() {
        let seg = segment(&[300, 600, 900], &[N, N, N]);
        let shifted = stress_mislocalize(&seg, 1, 6).unwrap().unwrap();
        assert_eq!(shifted.anchors, vec![300, 606, 900]);
        let before = rr_quadruple(&seg.anchors, 2).unwrap()[0];
        let after = rr_quadruple(&shifted.anchors, 2).unwrap()[0];
        assert_eq!(after, before - 6);
    }

    #[test]
    fn zero_and_tiny_offsets_are_outside_the_domain() {
        let seg = segment(&[300, 600], &[N, N]);
        assert!(stress_mislocalize(&seg, 0, 0).is_err());
        assert!(stress_mislocalize(&seg, 0, 5).is_err());
        assert!(stress_mislocalize(&seg, 0, 31).is_err());
        assert!(stress_mislocalize(&seg, 0, -6).unwrap().is_some());
    }

    #[test]
    fn ordering_violations_are_skipped_not_errors() {
        let seg = segment(&[300, 310], &[N, N]);
        assert!(stress_mislocalize(&seg, 0, 15).unwrap().is_none());
        let edge = segment(&[3595], &[N]);
        assert!(stress_mislocalize(&edge, 0, 10).unwrap().is_none());
        assert!(stress_mislocalize(&segment(&[4], &[N]), 0, -6)
            .unwrap()
            .is_none());
    }

    #[test]
    fn stress_deltas_behave() {
        let truths = vec![N, N, V, V, S, S];
        let clean = compute_metrics(&truths, &truths).unwrap();
        assert_eq!(stress_report(&clean, &clean), [0.0; 4]);

        // One flipped V -> N prediction, hand-recomputed.
        let stressed_preds = vec![N, N, N, V, S, S];
        let stressed = compute_metrics(&stressed_preds, &truths).unwrap();
        let delta = stress_report(&clean, &stressed);
        // F1_V drops from 1 to 2/3; F1_N from 1 to 0.8.
        assert_relative_eq!(delta[V.index()], 1.0 - 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(delta[N.index()], 1.0 - 0.8, epsilon = 1e-12);
        assert!(delta.iter().all(|&d| d >= 0.0));
    }

    proptest! {
        /// Micro-F1 is accuracy on the closed label set.
        #[test]
        fn micro_equals_accuracy(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)
        ) {
            let preds: Vec<BeatClass> = pairs.iter().map(|&(p, _)| BeatClass::from_index(p).unwrap()).collect();
            let truths: Vec<BeatClass> = pairs.iter().map(|&(_, t)| BeatClass::from_index(t).unwrap()).collect();
            let m = compute_metrics(&preds, &truths).unwrap();
            let acc = pairs.iter().filter(|&&(p, t)| p == t).count() as f64 / pairs.len() as f64;
            prop_assert!((m.micro_f1 - acc).abs() < 1e-12);
        }

        /// Agreement with an independent one-vs-rest recount.
        #[test]
        fn agrees_with_brute_force_recount(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)
        ) {
            let preds: Vec<BeatClass> = pairs.iter().map(|&(p, _)| BeatClass::from_index(p).unwrap()).collect();
            let truths: Vec<BeatClass> = pairs.iter().map(|&(_, t)| BeatClass::from_index(t).unwrap()).collect();
            let m = compute_metrics(&preds, &truths).unwrap();
            for c in 0..4 {
                let tp = pairs.iter().filter(|&&(p, t)| p == c && t == c).count() as f64;
                let fp = pairs.iter().filter(|&&(p, t)| p == c && t != c).count() as f64;
                let fn_ = pairs.iter().filter(|&&(p, t)| p != c && t == c).count() as f64;
                let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
                let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else { 0.0 };
                prop_assert!((m.f1[c] - f1).abs() < 1e-12);
            }
        }
    }
}
