//! WFDB format 212: two 12-bit two's-complement samples packed per 3 bytes.
//!
//! Layout per group: sample A = byte0 | ((byte1 & 0x0F) << 8),
//! sample B = byte2 | ((byte1 & 0xF0) << 4), each sign-extended from bit 11.

use crate::error::{Error, Result};

/// Valid range of a 12-bit two's-complement sample.
pub const SAMPLE_MIN: i32 = -2048;
pub const SAMPLE_MAX: i32 = 2047;

fn sign_extend_12(v: u16) -> i32 {
    if v & 0x800 != 0 {
        (v as i32) - 4096
    } else {
        v as i32
    }
}

/// Decodes exactly `n_samples` values from a format-212 byte stream.
///
/// Samples are returned in stored order; for a two-channel record that is
/// the frame-interleaved order (ch0, ch1, ch0, ch1, ...). A truncated input
/// produces a parse error naming the offset of the incomplete group.
pub fn decode_fmt212(bytes: &[u8], n_samples: usize) -> Result<Vec<i32>> {
    let n_groups = n_samples.div_ceil(2);
    let needed = n_groups * 3;
    if bytes.len() < needed {
        let offset = (bytes.len() / 3) * 3;
        return Err(Error::parse(
            "format-212 signal",
            offset,
            format!(
                "need {needed} bytes for {n_samples} samples, got {}",
                bytes.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(n_samples);
    for g in 0..n_groups {
        let b = &bytes[g * 3..g * 3 + 3];
        let a = u16::from(b[0]) | (u16::from(b[1] & 0x0F) << 8);
        out.push(sign_extend_12(a));
        if out.len() < n_samples {
            let second = u16::from(b[2]) | (u16::from(b[1] & 0xF0) << 4);
            out.push(sign_extend_12(second));
        }
    }
    Ok(out)
}

/// Packs 12-bit samples into format-212 bytes. An odd trailing sample is
/// padded with a zero partner, matching how WFDB writers emit odd-length
/// streams.
pub fn encode_fmt212(samples: &[i32]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(samples.len().div_ceil(2) * 3);
    for pair in samples.chunks(2) {
        let a = pair[0];
        let b = pair.get(1).copied().unwrap_or(0);
        for v in [a, b] {
            if !(SAMPLE_MIN..=SAMPLE_MAX).contains(&v) {
                return Err(Error::Validation(format!(
                    "sample {v} outside the 12-bit range [{SAMPLE_MIN}, {SAMPLE_MAX}]"
                )));
            }
        }
        let ua = (a & 0xFFF) as u16;
        let ub = (b & 0xFFF) as u16;
        out.push((ua & 0xFF) as u8);
        out.push(((ua >> 8) as u8 & 0x0F) | (((ub >> 8) as u8 & 0x0F) << 4));
        out.push((ub & 0xFF) as u8);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_direct_bit_layout() {
        assert_eq!(decode_fmt212(&[0x01, 0x00, 0x02], 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn sign_extends_from_bit_11() {
        assert_eq!(decode_fmt212(&[0xFF, 0x0F, 0x00], 2).unwrap(), vec![-1, 0]);
    }

    #[test]
    fn odd_sample_count_ignores_pad() {
        assert_eq!(decode_fmt212(&[0x07, 0x30, 0x02], 1).unwrap(), vec![7]);
    }

    #[test]
    fn truncated_input_names_the_offset() {
        let err = decode_fmt212(&[0x01, 0x00, 0x02, 0xFF], 4).unwrap_err();
        match err {
            crate::error::Error::Parse { offset, .. } => assert_eq!(offset, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn encode_rejects_out_of_range() {
        assert!(encode_fmt212(&[2048]).is_err());
        assert!(encode_fmt212(&[-2049]).is_err());
        assert!(encode_fmt212(&[2047, -2048]).is_ok());
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(samples in prop::collection::vec(-2048i32..=2047, 0..600)) {
            let encoded = encode_fmt212(&samples).unwrap();
            let decoded = decode_fmt212(&encoded, samples.len()).unwrap();
            prop_assert_eq!(decoded, samples);
        }
    }
}
