//! Pan-Tompkins QRS detection.
//!
//! The cascade runs at 200 Hz with the classic integer difference equations:
//! band-pass (cascaded low/high-pass), five-point derivative, squaring, and
//! a 150 ms moving-window integral, followed by dual adaptive thresholds
//! with running signal/noise peak estimates, a 200 ms refractory period, and
//! search-back at 1.66x the running RR average. Inputs at other rates are
//! linearly resampled to 200 Hz and detections are mapped back to native
//! samples, where each is refined to the local signal maximum within 40 ms.
//!
//! The input is quantized against its own maximum before filtering, so the
//! integer pipeline sees the same values for `x` and `c * x` (c > 0) and the
//! returned positions are scale-invariant.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::peaks::PeakSet;

const PROC_RATE: f64 = 200.0;
/// 200 ms refractory at the 200 Hz processing rate.
const REFRACTORY_200: usize = 40;
/// 150 ms integration window at 200 Hz.
const MWI_LEN: usize = 30;
/// Quantization scale; keeps the squared/integrated values well inside i64.
const QUANT: f64 = 8192.0;
/// Group delay of the band-pass alone: LP(5) + HP(16) samples at 200 Hz.
const BP_DELAY: usize = 21;
/// How far behind an integrator detection the band-passed QRS energy can
/// sit (band-pass delay + burst width + integration window).
const BP_SEARCH: usize = 45;
/// Refinement half-window: 40 ms around each integrator detection.
const REFINE_MS: f64 = 40.0;

/// Minimum supported input rate.
pub const MIN_RATE_HZ: u32 = 100;

fn resample_to_200<F: Real>(signal: &[F], fs: u32) -> Vec<f64> {
    let src: Vec<f64> = signal.iter().map(|v| v.as_f64()).collect();
    if fs as f64 == PROC_RATE {
        return src;
    }
    let n_out = ((signal.len() as u64 * 200) / fs as u64) as usize;
    let step = fs as f64 / PROC_RATE;
    (0..n_out)
        .map(|t| {
            let pos = t as f64 * step;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let a = src[i.min(src.len() - 1)];
            let b = src[(i + 1).min(src.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

/// Low-pass: y[n] = 2y[n-1] - y[n-2] + x[n] - 2x[n-6] + x[n-12], gain 36.
fn low_pass(x: &[i64]) -> Vec<i64> {
    let at = |v: &[i64], i: isize| if i < 0 { 0 } else { v[i as usize] };
    let mut y = vec![0i64; x.len()];
    for n in 0..x.len() as isize {
        y[n as usize] =
            2 * at(&y, n - 1) - at(&y, n - 2) + at(x, n) - 2 * at(x, n - 6) + at(x, n - 12);
    }
    y
}

/// High-pass scaled by 32:
/// y[n] = y[n-1] - x[n] + 32x[n-16] - 32x[n-17] + x[n-32], gain 32.
fn high_pass(x: &[i64]) -> Vec<i64> {
    let at = |v: &[i64], i: isize| if i < 0 { 0 } else { v[i as usize] };
    let mut y = vec![0i64; x.len()];
    for n in 0..x.len() as isize {
        y[n as usize] =
            at(&y, n - 1) - at(x, n) + 32 * at(x, n - 16) - 32 * at(x, n - 17) + at(x, n - 32);
    }
    y
}

/// Five-point derivative scaled by 8: y[n] = 2x[n] + x[n-1] - x[n-3] - 2x[n-4].
fn derivative(x: &[i64]) -> Vec<i64> {
    let at = |v: &[i64], i: isize| if i < 0 { 0 } else { v[i as usize] };
    (0..x.len() as isize)
        .map(|n| 2 * at(x, n) + at(x, n - 1) - at(x, n - 3) - 2 * at(x, n - 4))
        .collect()
}

fn square_and_integrate(x: &[i64]) -> Vec<i64> {
    let mut out = vec![0i64; x.len()];
    let mut acc: i64 = 0;
    for n in 0..x.len() {
        acc += x[n] * x[n];
        if n >= MWI_LEN {
            acc -= x[n - MWI_LEN] * x[n - MWI_LEN];
        }
        out[n] = acc;
    }
    out
}

/// Local maxima of the integrated signal (first index of any plateau).
fn candidate_peaks(mwi: &[i64]) -> Vec<(usize, i64)> {
    let mut out = Vec::new();
    for i in 1..mwi.len().saturating_sub(1) {
        if mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1] {
            out.push((i, mwi[i]));
        }
    }
    out
}

struct Thresholds {
    spki: f64,
    npki: f64,
}

impl Thresholds {
    fn threshold1(&self) -> f64 {
        self.npki + 0.25 * (self.spki - self.npki)
    }

    fn signal(&mut self, peak: f64) {
        self.spki = 0.125 * peak + 0.875 * self.spki;
    }

    fn signal_searchback(&mut self, peak: f64) {
        self.spki = 0.25 * peak + 0.75 * self.spki;
    }

    fn noise(&mut self, peak: f64) {
        self.npki = 0.125 * peak + 0.875 * self.npki;
    }
}

/// Runs the decision logic over integrator candidates; returns QRS positions
/// at the 200 Hz rate.
fn decide(mwi: &[i64], candidates: &[(usize, i64)]) -> Vec<usize> {
    let learn = mwi.len().min(2 * PROC_RATE as usize);
    let max0 = mwi[..learn].iter().copied().max().unwrap_or(0) as f64;
    let mean0 = mwi[..learn].iter().map(|&v| v as f64).sum::<f64>() / learn.max(1) as f64;
    let mut thr = Thresholds {
        spki: max0 / 3.0,
        npki: mean0 / 2.0,
    };

    let mut qrs: Vec<usize> = Vec::new();
    let mut rr_history: Vec<f64> = Vec::new();
    let mut rejected: Vec<(usize, i64)> = Vec::new();

    let rr_average = |rr: &[f64]| -> f64 {
        if rr.is_empty() {
            PROC_RATE // one-second default until an RR estimate exists
        } else {
            rr.iter().sum::<f64>() / rr.len() as f64
        }
    };

    let accept = |pos: usize, qrs: &mut Vec<usize>, rr_history: &mut Vec<f64>| {
        if let Some(&last) = qrs.last() {
            rr_history.push((pos - last) as f64);
            if rr_history.len() > 8 {
                rr_history.remove(0);
            }
        }
        qrs.push(pos);
    };

    for &(pos, height) in candidates {
        // Search-back: an expected beat was missed if the gap since the last
        // QRS exceeds 1.66x the running RR average.
        if let Some(&last) = qrs.last() {
            if (pos.saturating_sub(last)) as f64 > 1.66 * rr_average(&rr_history) {
                let thr2 = thr.threshold1() / 2.0;
                let found = rejected
                    .iter()
                    .filter(|(p, h)| {
                        *p > last + REFRACTORY_200
                            && *p + REFRACTORY_200 <= pos
                            && (*h as f64) > thr2
                    })
                    .max_by_key(|(_, h)| *h)
                    .copied();
                if let Some((p, h)) = found {
                    thr.signal_searchback(h as f64);
                    accept(p, &mut qrs, &mut rr_history);
                    rejected.retain(|(rp, _)| *rp > p);
                }
            }
        }

        if let Some(&last) = qrs.last() {
            if pos < last + REFRACTORY_200 {
                continue;
            }
        }

        if height as f64 > thr.threshold1() {
            thr.signal(height as f64);
            accept(pos, &mut qrs, &mut rr_history);
            rejected.clear();
        } else {
            thr.noise(height as f64);
            rejected.push((pos, height));
        }
    }

    // Trailing search-back so a final low beat is not dropped at the edge.
    if let Some(&last) = qrs.last() {
        if (mwi.len().saturating_sub(last)) as f64 > 1.66 * rr_average(&rr_history) {
            let thr2 = thr.threshold1() / 2.0;
            if let Some((p, _)) = rejected
                .iter()
                .filter(|(p, h)| *p > last + REFRACTORY_200 && (*h as f64) > thr2)
                .max_by_key(|(_, h)| *h)
                .copied()
            {
                accept(p, &mut qrs, &mut rr_history);
            }
        }
    }

    qrs
}

/// Refines each detection to the local signal extremum within the 40 ms
/// window and enforces the refractory period at the native rate; when two
/// refinements collide, the one with more band-passed energy wins, ties to
/// the earlier.
///
/// The integrator peak of a narrow beat sits on a plateau, so each
/// detection is first anchored to the band-passed energy peak in a trailing
/// window, which only carries the fixed band-pass delay. The band-passed
/// sign there gives the beat's dominant polarity, so a negative QRS refines
/// to its nadir rather than a flank sample.
fn refine<F: Real>(signal: &[F], fs: u32, filtered: &[i64], qrs_200: &[usize]) -> Vec<usize> {
    let half = ((REFINE_MS / 1000.0) * fs as f64).round() as usize;
    let refractory = (0.2 * fs as f64).round() as usize;
    let to_native = fs as f64 / PROC_RATE;

    let mut refined: Vec<(usize, i64)> = qrs_200
        .iter()
        .map(|&p| {
            let lo = p.saturating_sub(BP_SEARCH);
            let hi = (p + 1).min(filtered.len());
            let mut bp_peak = lo;
            for i in lo..hi {
                if filtered[i].abs() > filtered[bp_peak].abs() {
                    bp_peak = i;
                }
            }
            let upright = filtered[bp_peak] >= 0;
            let fid = bp_peak.saturating_sub(BP_DELAY);
            let center = ((fid as f64 * to_native).round() as usize).min(signal.len() - 1);
            let lo = center.saturating_sub(half);
            let hi = (center + half + 1).min(signal.len());
            let mut best = lo;
            for i in lo..hi {
                let better = if upright {
                    signal[i] > signal[best]
                } else {
                    signal[i] < signal[best]
                };
                if better {
                    best = i;
                }
            }
            (best, filtered[bp_peak].abs())
        })
        .collect();
    refined.sort_unstable();

    let mut kept: Vec<(usize, i64)> = Vec::with_capacity(refined.len());
    for (pos, strength) in refined {
        match kept.last() {
            Some(&(prev, prev_strength)) if pos - prev < refractory => {
                if pos != prev && strength > prev_strength {
                    *kept.last_mut().unwrap() = (pos, strength);
                }
            }
            _ => kept.push((pos, strength)),
        }
    }
    kept.into_iter().map(|(pos, _)| pos).collect()
}

/// Detects R peaks in a single-channel mV signal.
///
/// Requires at least one second of samples and a rate of 100 Hz or more.
/// An all-zero signal has no energy and yields an empty set.
pub fn detect_rpeaks<F: Real>(signal: &[F], sampling_rate_hz: u32) -> Result<PeakSet> {
    if sampling_rate_hz < MIN_RATE_HZ {
        return Err(Error::UnsupportedRate(sampling_rate_hz));
    }
    if signal.len() < sampling_rate_hz as usize {
        return Err(Error::Validation(format!(
            "signal too short: {} samples at {} Hz (need one second)",
            signal.len(),
            sampling_rate_hz
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite sample in signal".into()));
    }

    let resampled = resample_to_200(signal, sampling_rate_hz);
    let max_abs = resampled.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max_abs == 0.0 {
        return PeakSet::new(Vec::new(), (0.2 * sampling_rate_hz as f64).round() as usize);
    }
    let scale = QUANT / max_abs;
    let mut quantized: Vec<i64> = resampled
        .iter()
        .map(|&v| (v * scale).round() as i64)
        .collect();
    // Trailing zero pad so a beat near the signal edge still produces a
    // complete integrator response.
    quantized.extend(std::iter::repeat_n(0, MWI_LEN + BP_SEARCH));

    let filtered = high_pass(&low_pass(&quantized));
    let mwi = square_and_integrate(&derivative(&filtered));
    let candidates = candidate_peaks(&mwi);
    let qrs_200 = decide(&mwi, &candidates);
    let positions = refine(signal, sampling_rate_hz, &filtered, &qrs_200);

    PeakSet::new(positions, (0.2 * sampling_rate_hz as f64).round() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_preserve_dc_gain() {
        // Step input: LP settles at 36x, the scaled HP rejects DC.
        let x = vec![10i64; 200];
        let lp = low_pass(&x);
        assert_eq!(lp[100], 360);
        let hp = high_pass(&lp);
        assert_eq!(hp[199], 0);
    }

    #[test]
    fn derivative_of_a_ramp_is_constant() {
        let x: Vec<i64> = (0..100).collect();
        let d = derivative(&x);
        // 2x[n] + x[n-1] - x[n-3] - 2x[n-4] = 2n + (n-1) - (n-3) - 2(n-4) = 10
        assert!(d[10..].iter().all(|&v| v == 10));
    }

    #[test]
    fn rejects_low_rates_and_short_signals() {
        let sig = vec![0.0f64; 500];
        assert!(matches!(
            detect_rpeaks(&sig, 90),
            Err(Error::UnsupportedRate(90))
        ));
        assert!(detect_rpeaks(&sig[..100], 360).is_err());
    }

    #[test]
    fn all_zero_signal_has_no_peaks() {
        let sig = vec![0.0f64; 3600];
        let peaks = detect_rpeaks(&sig, 360).unwrap();
        assert!(peaks.positions().is_empty());
    }

    fn noisy_train(bpm: f64, fs: u32, seed: u64) -> Vec<f64> {
        use rand::SeedableRng;
        let config = crate::synth::SynthRecordConfig {
            id: "t".into(),
            duration_s: 10,
            bpm,
            ectopics: vec![],
        };
        let beats = crate::synth::beat_schedule(&config, fs).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        crate::synth::render_signal(&beats, 10 * fs as usize, fs, 0.02, &mut rng)
    }

    #[test]
    fn positions_are_invariant_under_amplitude_scaling() {
        for (bpm, seed) in [(52.0, 1u64), (75.0, 2), (132.0, 3), (171.0, 4)] {
            let signal = noisy_train(bpm, 360, seed);
            let scaled: Vec<f64> = signal.iter().map(|v| 2.5 * v).collect();
            let base = detect_rpeaks(&signal, 360).unwrap();
            let scaled = detect_rpeaks(&scaled, 360).unwrap();
            assert_eq!(base.positions(), scaled.positions(), "bpm {bpm}");
            assert!(!base.positions().is_empty());
        }
    }

    #[test]
    fn detections_respect_the_refractory_period() {
        for (bpm, seed) in [(60.0, 7u64), (178.0, 8)] {
            let signal = noisy_train(bpm, 360, seed);
            let peaks = detect_rpeaks(&signal, 360).unwrap();
            let refractory = (0.2 * 360.0f64).round() as usize;
            for pair in peaks.positions().windows(2) {
                assert!(pair[1] - pair[0] >= refractory, "bpm {bpm}: {pair:?}");
            }
        }
    }

    #[test]
    fn f32_and_f64_inputs_agree() {
        let signal = noisy_train(66.0, 250, 5);
        let signal32: Vec<f32> = signal.iter().map(|&v| v as f32).collect();
        let p64 = detect_rpeaks(&signal, 250).unwrap();
        let p32 = detect_rpeaks(&signal32, 250).unwrap();
        assert_eq!(p64.positions(), p32.positions());
    }
}
