//! WFDB header (.hea) text format.
//!
//! Line 1: record name, channel count, sampling rate, sample count.
//! One line per channel: signal file name, format code, ADC gain, ADC
//! resolution, ADC zero, then optional fields (initial value, checksum,
//! block size, description). Comment lines start with `#`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub format: u16,
    /// ADC units per millivolt.
    pub adc_gain: f64,
    pub adc_resolution: u16,
    pub adc_zero: i32,
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub record_name: String,
    pub n_channels: usize,
    pub sampling_rate_hz: u32,
    pub n_samples: usize,
    pub signals: Vec<SignalSpec>,
}

/// The gain token may carry a `(baseline)` suffix and a `/units` suffix,
/// e.g. `200(1024)/mV`; only the leading numeric gain is used here.
fn parse_gain(token: &str) -> Option<f64> {
    let stripped = token.split(['(', '/']).next()?;
    stripped.parse::<f64>().ok()
}

pub fn parse_header(text: &str) -> Result<Header> {
    let ctx = "wfdb header";
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));

    let first = lines
        .next()
        .ok_or_else(|| Error::parse(ctx, 0, "empty header"))?;
    let mut it = first.split_whitespace();
    let record_name = it
        .next()
        .ok_or_else(|| Error::parse(ctx, 0, "missing record name"))?
        // A record name may carry a `/segments` suffix; segmented records
        // are not supported, plain names pass through unchanged.
        .split('/')
        .next()
        .unwrap()
        .to_string();
    let n_channels: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(ctx, 0, "bad channel count"))?;
    let rate: f64 = it
        .next()
        .and_then(|t| t.split('/').next())
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(ctx, 0, "bad sampling rate"))?;
    if rate <= 0.0 || rate.fract() != 0.0 {
        return Err(Error::Validation(format!(
            "sampling rate must be a positive integer, got {rate}"
        )));
    }
    let n_samples: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(ctx, 0, "bad sample count"))?;

    let mut signals = Vec::with_capacity(n_channels);
    for ch in 0..n_channels {
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(ctx, 0, format!("missing signal line {ch}")))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 5 {
            return Err(Error::parse(ctx, 0, format!("short signal line {ch}")));
        }
        let format: u16 = tokens[1]
            .split(['x', ':', '+'])
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(ctx, 0, format!("bad format code on line {ch}")))?;
        if format != 212 {
            return Err(Error::Validation(format!(
                "unsupported signal format {format} (only 212 is supported)"
            )));
        }
        let adc_gain = parse_gain(tokens[2])
            .ok_or_else(|| Error::parse(ctx, 0, format!("bad gain on line {ch}")))?;
        if adc_gain <= 0.0 {
            return Err(Error::Validation(format!("nonpositive gain {adc_gain}")));
        }
        let adc_resolution: u16 = tokens[3]
            .parse()
            .map_err(|_| Error::parse(ctx, 0, format!("bad resolution on line {ch}")))?;
        let adc_zero: i32 = tokens[4]
            .parse()
            .map_err(|_| Error::parse(ctx, 0, format!("bad adc zero on line {ch}")))?;
        let description = if tokens.len() > 8 {
            Some(tokens[8..].join(" "))
        } else {
            None
        };
        signals.push(SignalSpec {
            file_name: tokens[0].to_string(),
            format,
            adc_gain,
            adc_resolution,
            adc_zero,
            description,
        });
    }
    Ok(Header {
        record_name,
        n_channels,
        sampling_rate_hz: rate as u32,
        n_samples,
        signals,
    })
}

pub fn write_header(header: &Header) -> String {
    let mut out = format!(
        "{} {} {} {}\n",
        header.record_name, header.n_channels, header.sampling_rate_hz, header.n_samples
    );
    for s in &header.signals {
        out.push_str(&format!(
            "{} {} {} {} {} 0 0 0{}\n",
            s.file_name,
            s.format,
            s.adc_gain,
            s.adc_resolution,
            s.adc_zero,
            s.description
                .as_deref()
                .map(|d| format!(" {d}"))
                .unwrap_or_default()
        ));
    }
    out
}
