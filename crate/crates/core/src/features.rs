//! Per-beat rhythm-morphology features.
//!
//! Five groups, 23 dimensions in fixed order:
//! RR (pre, next, local, global) | normalized RR | R amplitude |
//! HOS (5 skewness then 5 kurtosis over equal sub-intervals) |
//! myMorph (distances from the R peak to four landmark extrema).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Beat window length in samples; spans R-250 ms .. R+250 ms.
pub const WINDOW_LEN: usize = 180;
/// Index of the R anchor inside the window.
pub const R_OFFSET: usize = 90;
/// Number of HOS sub-intervals.
const HOS_BLOCKS: usize = 5;
/// Landmark windows for myMorph, half-open, with the extremum kind.
const MORPH_WINDOWS: [(usize, usize, bool); 4] = [
    (0, 40, true),    // max
    (75, 85, false),  // min
    (95, 105, false), // min
    (150, 180, true), // max
];

/// Dimensionality of the full feature vector.
pub const FULL_DIMS: usize = 23;
/// The timing-only prefix (rr + norm_rr) used by the minimal evidence tier.
pub const MINIMAL_DIMS: usize = 8;

/// Fixed-length amplitude window centered on an R anchor, zero-padded where
/// the segment ends inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatWindow<F> {
    pub samples: Vec<F>,
    pub padded_left: bool,
    pub padded_right: bool,
}

impl<F: Real> BeatWindow<F> {
    /// Cuts the window around `anchor`. At 360 Hz this is exactly 90 samples
    /// each side; other rates span the same 500 ms and are linearly
    /// resampled to 180 samples.
    pub fn cut(signal: &[F], anchor: usize, sampling_rate_hz: u32) -> Result<BeatWindow<F>> {
        if anchor >= signal.len() {
            return Err(Error::Validation(format!(
                "anchor {anchor} outside signal of {}",
                signal.len()
            )));
        }
        let half = ((0.25 * sampling_rate_hz as f64).round() as usize).max(1);
        let mut raw = Vec::with_capacity(2 * half);
        let mut padded_left = false;
        let mut padded_right = false;
        for j in 0..2 * half {
            let idx = anchor as i64 - half as i64 + j as i64;
            if idx < 0 {
                padded_left = true;
                raw.push(F::zero());
            } else if idx as usize >= signal.len() {
                padded_right = true;
                raw.push(F::zero());
            } else {
                raw.push(signal[idx as usize]);
            }
        }
        let samples = if raw.len() == WINDOW_LEN {
            raw
        } else {
            resample_linear(&raw, WINDOW_LEN)
        };
        Ok(BeatWindow {
            samples,
            padded_left,
            padded_right,
        })
    }
}

fn resample_linear<F: Real>(src: &[F], n_out: usize) -> Vec<F> {
    let step = src.len() as f64 / n_out as f64;
    (0..n_out)
        .map(|t| {
            let pos = t as f64 * step;
            let i = (pos.floor() as usize).min(src.len() - 1);
            let frac = F::from_f64_c(pos - i as f64);
            let a = src[i];
            let b = src[(i + 1).min(src.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

/// RR quadruple in samples, exact (unrounded) local/global means.
///
/// pre   = distance to the previous anchor; the first beat falls back to its
///         distance from the segment start.
/// next  = distance to the following anchor; the last beat falls back to its
///         own pre value.
/// local = mean of the pre values of beats 0..=k.
/// global= mean of the pre values of beats 0..k; equals local for beat 0.
pub fn rr_quadruple_exact(anchors: &[usize], k: usize) -> Result<[f64; 4]> {
    if anchors.is_empty() {
        return Err(Error::Validation(
            "rr quadruple of an empty anchor set".into(),
        ));
    }
    if k >= anchors.len() {
        return Err(Error::Validation(format!(
            "beat index {k} out of range for {} anchors",
            anchors.len()
        )));
    }
    let pre_of = |i: usize| -> f64 {
        if i == 0 {
            anchors[0] as f64
        } else {
            (anchors[i] - anchors[i - 1]) as f64
        }
    };
    let pre = pre_of(k);
    let next = if k + 1 < anchors.len() {
        (anchors[k + 1] - anchors[k]) as f64
    } else {
        pre
    };
    let local = (0..=k).map(pre_of).sum::<f64>() / (k + 1) as f64;
    let global = if k == 0 {
        local
    } else {
        (0..k).map(pre_of).sum::<f64>() / k as f64
    };
    Ok([pre, next, local, global])
}

/// RR quadruple with local/global rounded to the nearest integer sample.
pub fn rr_quadruple(anchors: &[usize], k: usize) -> Result<[i64; 4]> {
    let exact = rr_quadruple_exact(anchors, k)?;
    Ok(exact.map(|v| v.round() as i64))
}

/// Divides each component by `divisor`.
pub fn normalize_rr(rr: [f64; 4], divisor: f64) -> Result<[f64; 4]> {
    if divisor <= 0.0 {
        return Err(Error::Validation(format!(
            "nonpositive RR divisor {divisor}"
        )));
    }
    Ok(rr.map(|v| v / divisor))
}

/// The default normalization divisor: the segment mean of pre-RR values.
pub fn segment_rr_divisor(anchors: &[usize]) -> Result<f64> {
    if anchors.is_empty() {
        return Err(Error::Validation("divisor of an empty anchor set".into()));
    }
    let sum: f64 = (0..anchors.len())
        .map(|i| rr_quadruple_exact(anchors, i).map(|q| q[0]))
        .sum::<Result<f64>>()?;
    Ok(sum / anchors.len() as f64)
}

/// Signal value at the anchor, in mV.
pub fn r_amplitude<F: Real>(signal: &[F], anchor: usize) -> Result<F> {
    signal
        .get(anchor)
        .copied()
        .ok_or_else(|| Error::Validation(format!("anchor {anchor} outside signal")))
}

/// Population skewness m3 / m2^(3/2); 0 for a constant input.
pub fn skewness<F: Real>(values: &[F]) -> F {
    let (m2, m3, _) = central_moments(values);
    if m2 <= F::zero() {
        F::zero()
    } else {
        m3 / (m2 * m2.sqrt())
    }
}

/// Population kurtosis m4 / m2^2, non-excess (normal -> 3); 0 for a
/// constant input.
pub fn kurtosis<F: Real>(values: &[F]) -> F {
    let (m2, _, m4) = central_moments(values);
    if m2 <= F::zero() {
        F::zero()
    } else {
        m4 / (m2 * m2)
    }
}

fn central_moments<F: Real>(values: &[F]) -> (F, F, F) {
    let n = F::from_f64_c(values.len() as f64);
    let mean = values.iter().copied().sum::<F>() / n;
    let mut m2 = F::zero();
    let mut m3 = F::zero();
    let mut m4 = F::zero();
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 = m2 + d2;
        m3 = m3 + d2 * d;
        m4 = m4 + d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Skewness and kurtosis over five equal sub-intervals of the beat window,
/// laid out as (skew_1..skew_5, kurt_1..kurt_5).
pub fn hos_features<F: Real>(window: &BeatWindow<F>) -> Result<[F; 10]> {
    if window.samples.len() != WINDOW_LEN {
        return Err(Error::DimensionMismatch {
            expected: WINDOW_LEN,
            got: window.samples.len(),
        });
    }
    let block = WINDOW_LEN / HOS_BLOCKS;
    let mut out = [F::zero(); 10];
    for b in 0..HOS_BLOCKS {
        let chunk = &window.samples[b * block..(b + 1) * block];
        out[b] = skewness(chunk);
        out[b + HOS_BLOCKS] = kurtosis(chunk);
    }
    Ok(out)
}

/// Euclidean distances in normalized (sample, amplitude) space between the
/// R peak and the extremum of each landmark window. The time axis is scaled
/// by the window length; amplitudes are min-max normalized over the 180
/// samples, so a pure amplitude shift (or rescale) leaves the distances
/// unchanged and a full-height excursion spans one unit. Extremum ties
/// break to the leftmost index.
pub fn my_morph<F: Real>(window: &BeatWindow<F>) -> Result<[F; 4]> {
    if window.samples.len() != WINDOW_LEN {
        return Err(Error::DimensionMismatch {
            expected: WINDOW_LEN,
            got: window.samples.len(),
        });
    }
    let s = &window.samples;
    let lo = s.iter().copied().fold(F::infinity(), F::min);
    let hi = s.iter().copied().fold(F::neg_infinity(), F::max);
    let span = hi - lo;
    let z = |v: F| {
        if span > F::zero() {
            (v - lo) / span
        } else {
            F::zero()
        }
    };

    let z_r = z(s[R_OFFSET]);
    let mut out = [F::zero(); 4];
    for (slot, &(lo, hi, want_max)) in MORPH_WINDOWS.iter().enumerate() {
        let mut best = lo;
        for i in lo + 1..hi {
            let better = if want_max {
                s[i] > s[best]
            } else {
                s[i] < s[best]
            };
            if better {
                best = i;
            }
        }
        let dt = F::from_f64_c((best as f64 - R_OFFSET as f64) / WINDOW_LEN as f64);
        let dv = z(s[best]) - z_r;
        out[slot] = (dt * dt + dv * dv).sqrt();
    }
    Ok(out)
}

/// The 23-dimensional per-beat feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatFeatures<F> {
    pub rr: [F; 4],
    pub norm_rr: [F; 4],
    pub amp: F,
    pub hos: [F; 10],
    pub my_morph: [F; 4],
}

impl<F: Real> BeatFeatures<F> {
    /// Flattens in the fixed order rr | norm_rr | amp | hos | my_morph.
    pub fn to_vec(&self) -> Vec<F> {
        let mut v = Vec::with_capacity(FULL_DIMS);
        v.extend_from_slice(&self.rr);
        v.extend_from_slice(&self.norm_rr);
        v.push(self.amp);
        v.extend_from_slice(&self.hos);
        v.extend_from_slice(&self.my_morph);
        v
    }

    pub fn from_vec(v: &[F]) -> Result<BeatFeatures<F>> {
        if v.len() != FULL_DIMS {
            return Err(Error::DimensionMismatch {
                expected: FULL_DIMS,
                got: v.len(),
            });
        }
        Ok(BeatFeatures {
            rr: [v[0], v[1], v[2], v[3]],
            norm_rr: [v[4], v[5], v[6], v[7]],
            amp: v[8],
            hos: v[9..19].try_into().expect("hos block"),
            my_morph: [v[19], v[20], v[21], v[22]],
        })
    }

    /// Transcript-style dump line: `[anchor:RR=..;norm_RR=..;amp=..;HOS=[..];myMorph=[..]]`.
    pub fn to_line(&self, anchor: usize) -> String {
        let ints = |vals: &[F]| {
            vals.iter()
                .map(|v| format!("{}", v.as_f64().round() as i64))
                .collect::<Vec<_>>()
                .join(",")
        };
        let fixed = |vals: &[F]| {
            vals.iter()
                .map(|v| format!("{:.4}", v.as_f64()))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "[{anchor}:RR={};norm_RR={};amp={:.4};HOS=[{}];myMorph=[{}]]",
            ints(&self.rr),
            fixed(&self.norm_rr),
            self.amp.as_f64(),
            fixed(&self.hos),
            fixed(&self.my_morph),
        )
    }
}

/// Computes the full vector for beat `k` of a segment given the segment's
/// signal and anchor list; `divisor` is the RR normalization divisor.
pub fn beat_features<F: Real>(
    signal: &[F],
    anchors: &[usize],
    k: usize,
    divisor: f64,
    sampling_rate_hz: u32,
) -> Result<BeatFeatures<F>> {
    let rr_int = rr_quadruple(anchors, k)?;
    let rr_exact = rr_quadruple_exact(anchors, k)?;
    let norm = normalize_rr(rr_exact, divisor)?;
    let window = BeatWindow::cut(signal, anchors[k], sampling_rate_hz)?;
    Ok(BeatFeatures {
        rr: rr_int.map(|v| F::from_f64_c(v as f64)),
        norm_rr: norm.map(F::from_f64_c),
        amp: r_amplitude(signal, anchors[k])?,
        hos: hos_features(&window)?,
        my_morph: my_morph(&window)?,
    })
}

/// All beats of a segment with the default segment-mean divisor.
pub fn segment_features<F: Real>(
    signal: &[F],
    anchors: &[usize],
    sampling_rate_hz: u32,
) -> Result<Vec<BeatFeatures<F>>> {
    if anchors.is_empty() {
        return Ok(Vec::new());
    }
    let divisor = segment_rr_divisor(anchors)?;
    (0..anchors.len())
        .map(|k| beat_features(signal, anchors, k, divisor, sampling_rate_hz))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Anchor list of MIT-BIH record 100, segment 0 (dataset ground truth).
    const REC100_SEG0: [usize; 13] = [
        77, 370, 663, 947, 1231, 1515, 1809, 2045, 2403, 2706, 2998, 3283, 3560,
    ];

    #[test]
    fn rr_quadruples_match_the_reference_segment() {
        assert_eq!(rr_quadruple(&REC100_SEG0, 0).unwrap(), [77, 293, 77, 77]);
        assert_eq!(rr_quadruple(&REC100_SEG0, 1).unwrap(), [293, 293, 185, 77]);
        assert_eq!(rr_quadruple(&REC100_SEG0, 2).unwrap(), [293, 284, 221, 185]);
        assert_eq!(rr_quadruple(&REC100_SEG0, 3).unwrap(), [284, 284, 237, 221]);
    }

    #[test]
    fn last_beat_next_falls_back_to_its_pre() {
        let q = rr_quadruple(&REC100_SEG0, 12).unwrap();
        assert_eq!(q[0], 277);
        assert_eq!(q[1], 277);
    }

    #[test]
    fn empty_anchor_set_is_an_error() {
        assert!(rr_quadruple(&[], 0).is_err());
        assert!(segment_rr_divisor(&[]).is_err());
    }

    #[test]
    fn quadruple_depends_only_on_anchors_up_to_k_plus_one() {
        for k in 0..8 {
            let full = rr_quadruple(&REC100_SEG0, k).unwrap();
            let truncated = rr_quadruple(&REC100_SEG0[..k + 2], k).unwrap();
            assert_eq!(full, truncated, "beat {k}");
        }
    }

    #[test]
    fn normalization_divides_componentwise() {
        assert_eq!(
            normalize_rr([100.0, 200.0, 150.0, 150.0], 100.0).unwrap(),
            [1.0, 2.0, 1.5, 1.5]
        );
        let q = [77.0, 293.0, 77.0, 77.0];
        assert_relative_eq!(normalize_rr(q, 77.0).unwrap()[0], 1.0);
        assert!(normalize_rr(q, 0.0).is_err());
        assert!(normalize_rr(q, -1.0).is_err());
    }

    #[test]
    fn reference_divisor_reproduces_the_known_pre_ratio() {
        // Segment mean of pre values is 3560/13; with the externally implied
        // divisor of ~285.9 the second beat normalizes to ~1.0246.
        let divisor = segment_rr_divisor(&REC100_SEG0).unwrap();
        assert_relative_eq!(divisor, 3560.0 / 13.0, epsilon = 1e-12);
        let norm = normalize_rr(rr_quadruple_exact(&REC100_SEG0, 1).unwrap(), 285.9).unwrap();
        assert_relative_eq!(norm[0], 1.0246, epsilon = 5e-4);
    }

    #[test]
    fn amplitude_reads_the_anchor_sample() {
        let signal = vec![0.0f64; 100];
        assert_eq!(r_amplitude(&signal, 50).unwrap(), 0.0);
        let mut signal = signal;
        signal[77] = 1.16;
        assert_eq!(r_amplitude(&signal, 77).unwrap(), 1.16);
    }

    fn window_from(samples: Vec<f64>) -> BeatWindow<f64> {
        BeatWindow {
            samples,
            padded_left: false,
            padded_right: false,
        }
    }

    #[test]
    fn constant_window_has_all_zero_hos() {
        let w = window_from(vec![3.25; WINDOW_LEN]);
        assert_eq!(hos_features(&w).unwrap(), [0.0; 10]);
    }

    #[test]
    fn moments_match_the_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let block: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
            assert!(skewness(&block).abs() < 0.1);
            assert!((kurtosis(&block) - 3.0).abs() < 0.2);
        }
    }

    #[test]
    fn hos_is_invariant_under_positive_affine_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = window_from((0..WINDOW_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let mapped = window_from(w.samples.iter().map(|v| 2.5 * v + 0.7).collect());
        let a = hos_features(&w).unwrap();
        let b = hos_features(&mapped).unwrap();
        for i in 0..10 {
            assert_relative_eq!(a[i], b[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn morph_is_invariant_under_amplitude_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = window_from((0..WINDOW_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let shifted = window_from(w.samples.iter().map(|v| v + 11.25).collect());
        let a = my_morph(&w).unwrap();
        let b = my_morph(&shifted).unwrap();
        for i in 0..4 {
            assert_relative_eq!(a[i], b[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn morph_of_a_plausible_beat_sits_near_one() {
        // A bump train shaped like a clean beat: distances from R to the
        // landmark extrema stay in the published unit-scale band.
        let mut s = vec![-0.35f64; WINDOW_LEN];
        for i in 0..WINDOW_LEN {
            let d = i as f64 - 90.0;
            s[i] += 1.5 * (-d * d / (2.0 * 4.3f64.powi(2))).exp(); // R
            let dp = i as f64 - 30.0;
            s[i] += 0.15 * (-dp * dp / (2.0 * 8.0f64.powi(2))).exp(); // P
            let dt = i as f64 - 170.0;
            s[i] += 0.3 * (-dt * dt / (2.0 * 12.0f64.powi(2))).exp(); // T
        }
        let d = my_morph(&window_from(s)).unwrap();
        for v in d {
            assert!(
                (0.5..=1.2).contains(&v),
                "distance {v} outside the unit-scale band"
            );
        }
    }

    #[test]
    fn constant_window_distances_use_leftmost_extrema() {
        // Degenerate tie-break: every landmark window picks its first index
        // and the z-scores vanish, leaving pure time offsets from R.
        let w = window_from(vec![1.0; WINDOW_LEN]);
        let d = my_morph(&w).unwrap();
        let expected = [90.0 / 180.0, 15.0 / 180.0, 5.0 / 180.0, 60.0 / 180.0];
        for i in 0..4 {
            assert_relative_eq!(d[i], expected[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn landmarks_level_with_r_leave_time_only_distances() {
        let mut s = vec![0.0f64; WINDOW_LEN];
        s[90] = 5.0;
        s[20] = 5.0; // max of [0, 40)
        for i in 75..85 {
            s[i] = 6.0;
        }
        s[78] = 5.0; // min of [75, 85)
        for i in 95..105 {
            s[i] = 7.0;
        }
        s[100] = 5.0; // min of [95, 105)
        s[165] = 5.0; // max of [150, 180)
        let d = my_morph(&window_from(s)).unwrap();
        let expected = [70.0 / 180.0, 12.0 / 180.0, 10.0 / 180.0, 75.0 / 180.0];
        for i in 0..4 {
            assert_relative_eq!(d[i], expected[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn window_pads_at_segment_edges() {
        let signal = vec![1.0f64; 200];
        let w = BeatWindow::cut(&signal, 10, 360).unwrap();
        assert_eq!(w.samples.len(), WINDOW_LEN);
        assert!(w.padded_left);
        assert!(!w.padded_right);
        assert_eq!(w.samples[0], 0.0);
        assert_eq!(w.samples[90], 1.0);
    }

    #[test]
    fn window_resamples_other_rates_to_180() {
        let signal = vec![0.5f64; 1000];
        let w = BeatWindow::cut(&signal, 500, 250).unwrap();
        assert_eq!(w.samples.len(), WINDOW_LEN);
        assert_relative_eq!(w.samples[90], 0.5);
    }

    #[test]
    fn assemble_round_trips_and_orders_the_minimal_prefix() {
        let f = BeatFeatures {
            rr: [77.0, 293.0, 77.0, 77.0],
            norm_rr: [0.28, 1.07, 0.28, 0.28],
            amp: 1.16,
            hos: [0.1, 0.2, 0.3, 0.4, 0.5, 3.1, 3.2, 3.3, 3.4, 3.5],
            my_morph: [0.9, 1.0, 0.95, 1.02],
        };
        let v = f.to_vec();
        assert_eq!(v.len(), FULL_DIMS);
        assert_eq!(
            &v[..MINIMAL_DIMS],
            &[77.0, 293.0, 77.0, 77.0, 0.28, 1.07, 0.28, 0.28]
        );
        assert_eq!(BeatFeatures::from_vec(&v).unwrap(), f);
        assert!(BeatFeatures::<f64>::from_vec(&v[..22]).is_err());

        // Serialization round-trips losslessly.
        let json = serde_json::to_vec(&f).unwrap();
        let back: BeatFeatures<f64> = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn dump_line_follows_the_transcript_grammar() {
        let f = BeatFeatures {
            rr: [77.0f64, 293.0, 77.0, 77.0],
            norm_rr: [0.2693, 1.0247, 0.2694, 0.2688],
            amp: 1.16,
            hos: [0.0; 10],
            my_morph: [0.941, 1.0038, 0.9457, 1.0186],
        };
        let line = f.to_line(77);
        assert!(line.starts_with("[77:RR=77,293,77,77;norm_RR=0.2693,"));
        assert!(line.contains(";amp=1.1600;HOS=["));
        assert!(line.ends_with("myMorph=[0.9410,1.0038,0.9457,1.0186]]"));
    }

    #[test]
    fn f32_instantiation_matches_f64_loosely() {
        let sig64: Vec<f64> = (0..WINDOW_LEN).map(|i| (i as f64 * 0.11).sin()).collect();
        let sig32: Vec<f32> = sig64.iter().map(|&v| v as f32).collect();
        let h64 = hos_features(&window_from(sig64)).unwrap();
        let h32 = hos_features(&BeatWindow {
            samples: sig32,
            padded_left: false,
            padded_right: false,
        })
        .unwrap();
        for i in 0..10 {
            assert_relative_eq!(h64[i], f64::from(h32[i]), epsilon = 1e-3);
        }
    }
}
