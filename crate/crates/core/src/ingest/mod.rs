//! Dataset ingestion: binary parsing, AAMI mapping, segmentation, splits.
//!
//! Parsing is pure per file; distinct records can be parsed concurrently and
//! a parsed [`Record`] is immutable afterwards.

pub mod aami;
pub mod annot;
pub mod fetch;
pub mod fmt212;
pub mod header;
pub mod segment;
pub mod split;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub use aami::{map_aami, AamiClass, BeatClass};
pub use annot::{parse_annotations, Annotation};
pub use fmt212::{decode_fmt212, encode_fmt212};
pub use header::{parse_header, Header};
pub use segment::{cut_segments, segment_len, Segment, SegmentOrigin};
pub use split::{build_split, SplitManifest};

use crate::error::{Error, Result};

/// A subject's full multi-channel recording in millivolts, with its beat
/// annotations. Channel 0 is the default analysis channel (lead MLII on the
/// MIT-BIH records that have it).
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub subject_id: String,
    pub sampling_rate_hz: u32,
    /// Per-channel traces, equal length, already converted to mV.
    pub channels: Vec<Vec<f64>>,
    /// ADC units per mV, per channel.
    pub adc_gain: Vec<f64>,
    pub adc_zero: Vec<i32>,
    pub annotations: Vec<Annotation>,
}

impl Record {
    pub fn n_samples(&self) -> usize {
        self.channels.first().map(Vec::len).unwrap_or(0)
    }

    /// The analysis channel (channel 0 unless overridden in config).
    pub fn channel(&self, index: usize) -> Result<&[f64]> {
        self.channels
            .get(index)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Validation(format!("no channel {index}")))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_samples();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(Error::Validation(format!(
                "record {}: channels have unequal length",
                self.subject_id
            )));
        }
        for pair in self.annotations.windows(2) {
            if pair[1].sample < pair[0].sample {
                return Err(Error::Validation(format!(
                    "record {}: annotations out of order",
                    self.subject_id
                )));
            }
        }
        if let Some(last) = self.annotations.last() {
            if last.sample >= n {
                return Err(Error::Validation(format!(
                    "record {}: annotation at {} beyond {} samples",
                    self.subject_id, last.sample, n
                )));
            }
        }
        Ok(())
    }
}

/// Reads `<name>.hea`, its format-212 signal file, and `<name>.atr` from
/// `dir`, converting raw ADC units to mV via `(raw - adc_zero) / adc_gain`.
pub fn read_record(dir: &Path, name: &str) -> Result<Record> {
    let header_text = fs::read_to_string(dir.join(format!("{name}.hea")))?;
    let header = parse_header(&header_text)?;

    let dat_name = header
        .signals
        .first()
        .map(|s| s.file_name.clone())
        .ok_or_else(|| Error::Validation(format!("record {name} has no signals")))?;
    if header.signals.iter().any(|s| s.file_name != dat_name) {
        return Err(Error::Validation(format!(
            "record {name}: multi-file signal layout is not supported"
        )));
    }
    let bytes = fs::read(dir.join(&dat_name))?;
    let total = header.n_samples * header.n_channels;
    let raw = decode_fmt212(&bytes, total)?;

    let mut channels = vec![Vec::with_capacity(header.n_samples); header.n_channels];
    for (i, &v) in raw.iter().enumerate() {
        let ch = i % header.n_channels;
        let spec = &header.signals[ch];
        channels[ch].push((f64::from(v) - f64::from(spec.adc_zero)) / spec.adc_gain);
    }

    let atr = dir.join(format!("{name}.atr"));
    let annotations = if atr.exists() {
        parse_annotations(&fs::read(atr)?)?
    } else {
        Vec::new()
    };

    let record = Record {
        subject_id: header.record_name.clone(),
        sampling_rate_hz: header.sampling_rate_hz,
        channels,
        adc_gain: header.signals.iter().map(|s| s.adc_gain).collect(),
        adc_zero: header.signals.iter().map(|s| s.adc_zero).collect(),
        annotations,
    };
    record.validate()?;
    Ok(record)
}

/// Beat counts per AAMI class over a set of records (Q included, non-beat
/// annotations excluded).
pub fn class_counts(records: &[Record]) -> BTreeMap<AamiClass, u64> {
    let mut counts = BTreeMap::new();
    for record in records {
        for ann in &record.annotations {
            if let Some(class) = map_aami(ann.symbol) {
                *counts.entry(class).or_insert(0) += 1;
            }
        }
    }
    counts
}

impl Ord for AamiClass {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        fn rank(c: &AamiClass) -> u8 {
            match c {
                AamiClass::N => 0,
                AamiClass::S => 1,
                AamiClass::V => 2,
                AamiClass::F => 3,
                AamiClass::Q => 4,
            }
        }
        rank(self).cmp(&rank(other))
    }
}

impl PartialOrd for AamiClass {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
