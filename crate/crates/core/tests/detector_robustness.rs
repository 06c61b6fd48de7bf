//! Detection under realistic signal artifacts: baseline wander, slow
//! amplitude modulation, and inverted QRS polarity.

use rand::SeedableRng;
use rhythmkit_core::peaks::{detect_rpeaks, match_peaks, PeakSet, MATCH_TOLERANCE_MS};
use rhythmkit_core::synth::{beat_schedule, render_signal, SynthRecordConfig};

const FS: u32 = 360;

fn train(bpm: f64, seed: u64) -> (Vec<f64>, PeakSet) {
    let config = SynthRecordConfig {
        id: "x".into(),
        duration_s: 30,
        bpm,
        ectopics: vec![],
    };
    let beats = beat_schedule(&config, FS).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let signal = render_signal(&beats, 30 * FS as usize, FS, 0.03, &mut rng);
    let truth = PeakSet::from_anchors(beats.iter().map(|b| b.sample).collect()).unwrap();
    (signal, truth)
}

#[test]
fn baseline_wander_and_modulation_do_not_break_detection() {
    for trial in 0..12u64 {
        let bpm = 50.0 + 10.0 * trial as f64;
        let (mut signal, truth) = train(bpm, trial);
        for (i, v) in signal.iter_mut().enumerate() {
            let t = i as f64 / FS as f64;
            let wander = 0.4 * (2.0 * std::f64::consts::PI * 0.3 * t).sin();
            let modulation = 1.0 + 0.35 * (2.0 * std::f64::consts::PI * 0.05 * t).sin();
            *v = *v * modulation + wander;
        }
        let detected = detect_rpeaks(&signal, FS).unwrap();
        let report = match_peaks(&detected, &truth, MATCH_TOLERANCE_MS, FS);
        assert_eq!(report.f1, 1.0, "bpm {bpm}: {report:?}");
    }
}

#[test]
fn inverted_qrs_refines_to_the_nadir() {
    let (signal, truth) = train(70.0, 77);
    let inverted: Vec<f64> = signal.iter().map(|v| -v).collect();
    let detected = detect_rpeaks(&inverted, FS).unwrap();
    let report = match_peaks(&detected, &truth, MATCH_TOLERANCE_MS, FS);
    assert_eq!(report.f1, 1.0, "{report:?}");
}

#[test]
fn mixed_polarity_beats_are_each_refined_correctly() {
    // Upright normals with inverted ectopics in one record, like a lead
    // where PVCs flip polarity.
    let config = SynthRecordConfig {
        id: "x".into(),
        duration_s: 30,
        bpm: 72.0,
        ectopics: vec![],
    };
    let beats = beat_schedule(&config, FS).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let mut signal = render_signal(&beats, 30 * FS as usize, FS, 0.01, &mut rng);
    for (k, beat) in beats.iter().enumerate() {
        if k % 4 == 2 {
            let from = beat.sample.saturating_sub(40);
            let to = (beat.sample + 40).min(signal.len());
            for v in &mut signal[from..to] {
                *v = -*v;
            }
        }
    }
    let truth = PeakSet::from_anchors(beats.iter().map(|b| b.sample).collect()).unwrap();
    let detected = detect_rpeaks(&signal, FS).unwrap();
    let report = match_peaks(&detected, &truth, MATCH_TOLERANCE_MS, FS);
    assert_eq!(report.f1, 1.0, "{report:?}");
}
