//! Synthetic miniature datasets in the native file formats.
//!
//! Each record is a train of Gaussian R-wave bumps on a regular grid, with
//! optional injected ectopic beats: premature narrow beats ('A' -> S),
//! premature wide tall beats ('V'), and on-time intermediate beats
//! ('F'). Ground truth (peak positions, labels) is known by construction,
//! so CI can exercise the whole pipeline without the real database.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::annot::{encode_annotations, Annotation};
use crate::ingest::fmt212::encode_fmt212;
use crate::ingest::header::{write_header, Header, SignalSpec};
use crate::ingest::{map_aami, AamiClass};

/// ADC parameters used for all synthetic records.
const ADC_GAIN: f64 = 200.0;
const ADC_ZERO: i32 = 1024;

/// Per-symbol bump shape: (amplitude mV, width sigma in seconds).
fn bump_shape(symbol: char) -> (f64, f64) {
    match symbol {
        'V' => (1.6, 0.035),
        'F' => (1.3, 0.024),
        'A' => (0.95, 0.012),
        _ => (1.0, 0.012),
    }
}

/// An injected ectopic beat: the beat at `beat_index` becomes `symbol` and
/// arrives at `rr_fraction` of the base RR after its predecessor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EctopicSpec {
    pub beat_index: usize,
    pub symbol: char,
    pub rr_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecordConfig {
    pub id: String,
    pub duration_s: u32,
    pub bpm: f64,
    #[serde(default)]
    pub ectopics: Vec<EctopicSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sampling_rate_hz: u32,
    /// Gaussian noise sigma in mV.
    pub noise_mv: f64,
    pub seed: u64,
    pub records: Vec<SynthRecordConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthBeat {
    pub sample: usize,
    pub symbol: char,
}

/// Ground truth for one generated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTruth {
    pub id: String,
    pub beats: Vec<SynthBeat>,
    pub class_counts: BTreeMap<AamiClass, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub sampling_rate_hz: u32,
    pub records: Vec<RecordTruth>,
}

/// Beat positions and symbols on the rhythm grid. The first beat sits half
/// an RR interval in; an ectopic beat moves off the grid while its successor
/// stays on it, producing the compensatory pause.
pub fn beat_schedule(config: &SynthRecordConfig, sampling_rate_hz: u32) -> Result<Vec<SynthBeat>> {
    if !(20.0..=250.0).contains(&config.bpm) {
        return Err(Error::Validation(format!(
            "bpm {} outside [20, 250]",
            config.bpm
        )));
    }
    let fs = sampling_rate_hz as f64;
    let rr = (fs * 60.0 / config.bpm).round() as usize;
    let n_samples = config.duration_s as usize * sampling_rate_hz as usize;
    let margin = (0.15 * fs).round() as usize;

    let mut beats = Vec::new();
    let mut grid = rr / 2;
    let mut index = 0usize;
    while grid + margin <= n_samples {
        let ectopic = config.ectopics.iter().find(|e| e.beat_index == index);
        let beat = match ectopic {
            Some(e) if index > 0 => {
                if !(0.1..1.0).contains(&e.rr_fraction) {
                    return Err(Error::Validation(format!(
                        "rr fraction {} outside [0.1, 1)",
                        e.rr_fraction
                    )));
                }
                let prev = grid - rr;
                SynthBeat {
                    sample: prev + (e.rr_fraction * rr as f64).round() as usize,
                    symbol: e.symbol,
                }
            }
            Some(e) => SynthBeat {
                sample: grid,
                symbol: e.symbol,
            },
            None => SynthBeat {
                sample: grid,
                symbol: 'N',
            },
        };
        beats.push(beat);
        grid += rr;
        index += 1;
    }
    Ok(beats)
}

/// Renders the mV trace for a beat schedule: Gaussian bumps plus seeded
/// white noise.
pub fn render_signal(
    beats: &[SynthBeat],
    n_samples: usize,
    sampling_rate_hz: u32,
    noise_mv: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let fs = sampling_rate_hz as f64;
    let mut signal = vec![0.0f64; n_samples];
    for beat in beats {
        let (amp, sigma_s) = bump_shape(beat.symbol);
        let sigma = sigma_s * fs;
        let reach = (4.0 * sigma).ceil() as i64;
        let c = beat.sample as i64;
        for i in (c - reach).max(0)..(c + reach + 1).min(n_samples as i64) {
            let d = (i - c) as f64;
            signal[i as usize] += amp * (-d * d / (2.0 * sigma * sigma)).exp();
        }
    }
    if noise_mv > 0.0 {
        let normal = Normal::new(0.0, noise_mv).expect("positive sigma");
        for v in &mut signal {
            *v += normal.sample(rng);
        }
    }
    signal
}

fn truth_for(id: &str, beats: Vec<SynthBeat>) -> RecordTruth {
    let mut class_counts = BTreeMap::new();
    for b in &beats {
        if let Some(class) = map_aami(b.symbol) {
            *class_counts.entry(class).or_insert(0) += 1;
        }
    }
    RecordTruth {
        id: id.to_string(),
        beats,
        class_counts,
    }
}

/// Writes `<id>.hea`, `<id>.dat`, `<id>.atr` for one record.
fn write_record(
    dir: &Path,
    config: &SynthRecordConfig,
    sampling_rate_hz: u32,
    noise_mv: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RecordTruth> {
    let beats = beat_schedule(config, sampling_rate_hz)?;
    let n_samples = config.duration_s as usize * sampling_rate_hz as usize;
    let signal = render_signal(&beats, n_samples, sampling_rate_hz, noise_mv, rng);

    let raw: Vec<i32> = signal
        .iter()
        .map(|&mv| ((mv * ADC_GAIN).round() as i32 + ADC_ZERO).clamp(-2048, 2047))
        .collect();
    fs::write(dir.join(format!("{}.dat", config.id)), encode_fmt212(&raw)?)?;

    let header = Header {
        record_name: config.id.clone(),
        n_channels: 1,
        sampling_rate_hz,
        n_samples,
        signals: vec![SignalSpec {
            file_name: format!("{}.dat", config.id),
            format: 212,
            adc_gain: ADC_GAIN,
            adc_resolution: 11,
            adc_zero: ADC_ZERO,
            description: Some("SYN".into()),
        }],
    };
    fs::write(
        dir.join(format!("{}.hea", config.id)),
        write_header(&header),
    )?;

    let annotations: Vec<Annotation> = beats
        .iter()
        .map(|b| Annotation {
            sample: b.sample,
            symbol: b.symbol,
        })
        .collect();
    fs::write(
        dir.join(format!("{}.atr", config.id)),
        encode_annotations(&annotations)?,
    )?;

    Ok(truth_for(&config.id, beats))
}

/// Generates the whole dataset into `dir` and returns the ground truth.
pub fn gen_synthetic(config: &SynthConfig, dir: &Path) -> Result<SynthManifest> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(config.records.len());
    for (i, rec) in config.records.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(i as u64));
        records.push(write_record(
            dir,
            rec,
            config.sampling_rate_hz,
            config.noise_mv,
            &mut rng,
        )?);
    }
    let manifest = SynthManifest {
        sampling_rate_hz: config.sampling_rate_hz,
        records,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// The bundled mini-dataset: eight subjects with varied rates and ectopic
/// patterns, enough to train both tiers and route offline.
pub fn demo_config(seed: u64) -> SynthConfig {
    let mut records = Vec::new();
    for i in 0..8u64 {
        let id = format!("s{:02}", i + 1);
        let bpm = 55.0 + 6.0 * i as f64;
        let mut ectopics = Vec::new();
        // Deterministic ectopic patterns, staggered per record; V beats are
        // slightly less premature than A beats.
        let n_beats = (120.0 * bpm / 60.0) as usize;
        for k in (4 + i as usize % 3..n_beats).step_by(7) {
            ectopics.push(EctopicSpec {
                beat_index: k,
                symbol: 'A',
                rr_fraction: 0.6,
            });
        }
        for k in (6 + i as usize % 5..n_beats).step_by(11) {
            if ectopics.iter().all(|e| e.beat_index != k) {
                ectopics.push(EctopicSpec {
                    beat_index: k,
                    symbol: 'V',
                    rr_fraction: 0.7,
                });
            }
        }
        for k in (9 + i as usize % 7..n_beats).step_by(29) {
            if ectopics.iter().all(|e| e.beat_index != k) {
                ectopics.push(EctopicSpec {
                    beat_index: k,
                    symbol: 'F',
                    rr_fraction: 0.95,
                });
            }
        }
        records.push(SynthRecordConfig {
            id,
            duration_s: 120,
            bpm,
            ectopics,
        });
    }
    SynthConfig {
        sampling_rate_hz: 360,
        noise_mv: 0.02,
        seed,
        records,
    }
}
