//! Confidence-gated routing between the minimal and rich evidence tiers.
//!
//! Beat confidence is the largest posterior component; segment confidence
//! aggregates beats by mean (default) or min. The dataset-specific threshold
//! is induced once on the route-induction split d2 and fixed afterwards:
//! segments at or above the threshold keep their minimal predictions,
//! segments below it acquire the rich tier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BeatClass;
use crate::model::Posterior;
use crate::num::Real;

/// Nudges the upper sweep endpoint above every reachable confidence.
const ABOVE_ONE: f64 = 1.0 + 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggMode {
    Mean,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    MinimalOnly,
    RichAcquired,
}

/// Tool-call accounting per branch: the minimal path spends one call on peak
/// detection and one on the confidence gate; the rich path adds the two
/// evidence-producing calls.
pub const CALLS_MINIMAL: u32 = 2;
pub const CALLS_RICH: u32 = 4;

/// Per-beat confidences and their aggregate for one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfidence<F> {
    pub beat_confidences: Vec<F>,
    pub aggregate: F,
    pub mode: AggMode,
}

/// The largest predicted class probability.
pub fn beat_confidence<F: Real>(posterior: &Posterior<F>) -> F {
    posterior.confidence()
}

/// Aggregates per-beat confidences; segments are never empty of beats when
/// routed, so an empty posterior list is an error.
pub fn segment_confidence<F: Real>(
    posteriors: &[Posterior<F>],
    mode: AggMode,
) -> Result<SegmentConfidence<F>> {
    if posteriors.is_empty() {
        return Err(Error::Validation(
            "segment confidence over zero beats".into(),
        ));
    }
    let beat_confidences: Vec<F> = posteriors.iter().map(beat_confidence).collect();
    let aggregate = match mode {
        AggMode::Mean => {
            beat_confidences.iter().copied().sum::<F>()
                / F::from_f64_c(beat_confidences.len() as f64)
        }
        AggMode::Min => beat_confidences.iter().copied().fold(F::infinity(), F::min),
    };
    Ok(SegmentConfidence {
        beat_confidences,
        aggregate,
        mode,
    })
}

/// One d2 segment with both branch predictions, ready for the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSegment {
    pub subject: String,
    pub confidence: f64,
    pub minimal: Vec<BeatClass>,
    pub rich: Vec<BeatClass>,
    pub truths: Vec<BeatClass>,
}

/// The induced threshold artifact, serialized as-is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdArtifact {
    pub dataset: String,
    pub mode: AggMode,
    pub tau: f64,
    pub induced_on: Vec<String>,
    pub micro_f1_at_tau: f64,
}

fn routed_correct(segments: &[SweepSegment], tau: f64) -> (usize, usize, usize) {
    let mut correct = 0;
    let mut total = 0;
    let mut rich_count = 0;
    for seg in segments {
        let preds = if seg.confidence >= tau {
            &seg.minimal
        } else {
            rich_count += 1;
            &seg.rich
        };
        total += seg.truths.len();
        correct += preds
            .iter()
            .zip(&seg.truths)
            .filter(|(p, t)| p == t)
            .count();
    }
    (correct, total, rich_count)
}

/// Sweeps candidate thresholds on the induction split and returns the
/// beat-level micro-F1 maximizer. Candidates are 0, every observed segment
/// confidence, and a value above 1, so both pure branches are always in the
/// running. Ties prefer fewer rich routings, then the larger threshold.
///
/// `d2_subjects`/`ds2_subjects` guard against leakage: every sweep segment
/// must come from d2 and none from the test subjects.
pub fn sweep_threshold(
    dataset: &str,
    segments: &[SweepSegment],
    mode: AggMode,
    d2_subjects: &[String],
    ds2_subjects: &[String],
) -> Result<ThresholdArtifact> {
    if segments.is_empty() {
        return Err(Error::Validation(
            "threshold sweep over an empty induction split".into(),
        ));
    }
    for seg in segments {
        if ds2_subjects.contains(&seg.subject) {
            return Err(Error::Validation(format!(
                "test subject {} leaked into the threshold sweep",
                seg.subject
            )));
        }
        if !d2_subjects.contains(&seg.subject) {
            return Err(Error::Validation(format!(
                "subject {} is not in the route-induction split",
                seg.subject
            )));
        }
        if seg.minimal.len() != seg.truths.len() || seg.rich.len() != seg.truths.len() {
            return Err(Error::Validation(format!(
                "segment from {} is missing branch predictions",
                seg.subject
            )));
        }
    }

    let mut candidates: Vec<f64> = vec![0.0, ABOVE_ONE];
    candidates.extend(segments.iter().map(|s| s.confidence));
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best: Option<(f64, usize, f64)> = None; // (micro, rich, tau)
    for &tau in &candidates {
        let (correct, total, rich_count) = routed_correct(segments, tau);
        let micro = correct as f64 / total as f64;
        let better = match best {
            None => true,
            Some((bm, br, bt)) => {
                micro > bm
                    || (micro == bm && rich_count < br)
                    || (micro == bm && rich_count == br && tau > bt)
            }
        };
        if better {
            best = Some((micro, rich_count, tau));
        }
    }
    let (micro, _, tau) = best.expect("nonempty candidate set");
    Ok(ThresholdArtifact {
        dataset: dataset.to_string(),
        mode,
        tau,
        induced_on: d2_subjects.to_vec(),
        micro_f1_at_tau: micro,
    })
}

/// One routed segment: branch taken, confidences, final labels, and the
/// tool-call count under the standard accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedPrediction<F> {
    pub segment_id: String,
    pub confidence: SegmentConfidence<F>,
    pub branch: Branch,
    pub labels: Vec<BeatClass>,
    pub tool_calls: u32,
}

/// Applies the gate: confidence at or above `tau` keeps the minimal
/// predictions, otherwise `rich_provider` is invoked exactly once for the
/// rich posteriors. The provider is observably lazy.
pub fn route<F: Real>(
    segment_id: &str,
    minimal_posteriors: &[Posterior<F>],
    tau: f64,
    mode: AggMode,
    rich_provider: impl FnOnce() -> Result<Vec<Posterior<F>>>,
) -> Result<RoutedPrediction<F>> {
    let confidence = segment_confidence(minimal_posteriors, mode)?;
    if confidence.aggregate.as_f64() >= tau {
        Ok(RoutedPrediction {
            segment_id: segment_id.to_string(),
            labels: minimal_posteriors.iter().map(Posterior::argmax).collect(),
            confidence,
            branch: Branch::MinimalOnly,
            tool_calls: CALLS_MINIMAL,
        })
    } else {
        let rich = rich_provider()?;
        if rich.len() != minimal_posteriors.len() {
            return Err(Error::DimensionMismatch {
                expected: minimal_posteriors.len(),
                got: rich.len(),
            });
        }
        Ok(RoutedPrediction {
            segment_id: segment_id.to_string(),
            labels: rich.iter().map(Posterior::argmax).collect(),
            confidence,
            branch: Branch::RichAcquired,
            tool_calls: CALLS_RICH,
        })
    }
}

/// Cost and per-branch quality summary over a routed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingReport {
    pub segments: usize,
    pub avg_tool_calls: f64,
    pub rich_fraction: f64,
    /// Beat-level micro-F1 within each branch; None when a branch is empty.
    pub minimal_micro_f1: Option<f64>,
    pub rich_micro_f1: Option<f64>,
}

pub fn routing_report<F: Real>(
    routed: &[RoutedPrediction<F>],
    truths: &[Vec<BeatClass>],
) -> Result<RoutingReport> {
    if routed.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: routed.len(),
            got: truths.len(),
        });
    }
    let mut calls = 0u64;
    let mut rich_segments = 0usize;
    let mut counts = [(0usize, 0usize); 2]; // (correct, total) per branch
    for (r, t) in routed.iter().zip(truths) {
        if r.labels.len() != t.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                got: r.labels.len(),
            });
        }
        calls += u64::from(r.tool_calls);
        let slot = match r.branch {
            Branch::MinimalOnly => 0,
            Branch::RichAcquired => {
                rich_segments += 1;
                1
            }
        };
        counts[slot].0 += r.labels.iter().zip(t).filter(|(p, t)| p == t).count();
        counts[slot].1 += t.len();
    }
    let micro =
        |(correct, total): (usize, usize)| (total > 0).then(|| correct as f64 / total as f64);
    Ok(RoutingReport {
        segments: routed.len(),
        avg_tool_calls: calls as f64 / routed.len().max(1) as f64,
        rich_fraction: rich_segments as f64 / routed.len().max(1) as f64,
        minimal_micro_f1: micro(counts[0]),
        rich_micro_f1: micro(counts[1]),
    })
}
