//! MIT annotation format reader and writer.
//!
//! The stream is a sequence of 2-byte little-endian words. The top six bits
//! hold the annotation code, the low ten bits the sample delta from the
//! previous annotation. A zero word terminates the stream. Codes 59-63 are
//! pseudo-annotations (SKIP/NUM/SUB/CHN/AUX) that carry payload but are not
//! emitted as events.

use crate::error::{Error, Result};

const CODE_SKIP: u16 = 59;
const CODE_NUM: u16 = 60;
const CODE_SUB: u16 = 61;
const CODE_CHN: u16 = 62;
const CODE_AUX: u16 = 63;
const MAX_DELTA: u64 = 0x3FF;

/// One annotation event: absolute sample index plus the standard mnemonic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub sample: usize,
    pub symbol: char,
}

/// Standard WFDB annotation-code table (codes 1..=41; 15 and 17 are unused).
const SYMBOLS: [(u16, char); 39] = [
    (1, 'N'),
    (2, 'L'),
    (3, 'R'),
    (4, 'a'),
    (5, 'V'),
    (6, 'F'),
    (7, 'J'),
    (8, 'A'),
    (9, 'S'),
    (10, 'E'),
    (11, 'j'),
    (12, '/'),
    (13, 'Q'),
    (14, '~'),
    (16, '|'),
    (18, 's'),
    (19, 'T'),
    (20, '*'),
    (21, 'D'),
    (22, '"'),
    (23, '='),
    (24, 'p'),
    (25, 'B'),
    (26, '^'),
    (27, 't'),
    (28, '+'),
    (29, 'u'),
    (30, '?'),
    (31, '!'),
    (32, '['),
    (33, ']'),
    (34, 'e'),
    (35, 'n'),
    (36, '@'),
    (37, 'x'),
    (38, 'f'),
    (39, '('),
    (40, ')'),
    (41, 'r'),
];

fn symbol_for(code: u16) -> Option<char> {
    SYMBOLS.iter().find(|(c, _)| *c == code).map(|(_, s)| *s)
}

fn code_for(symbol: char) -> Option<u16> {
    SYMBOLS.iter().find(|(_, s)| *s == symbol).map(|(c, _)| *c)
}

/// Parses a full annotation stream into (sample, symbol) events.
///
/// Pseudo-annotations are consumed but never emitted; SKIP intervals extend
/// the delta of the next real annotation. The stream must end with a zero
/// terminator word.
pub fn parse_annotations(bytes: &[u8]) -> Result<Vec<Annotation>> {
    let ctx = "annotation stream";
    if !bytes.len().is_multiple_of(2) {
        return Err(Error::parse(ctx, bytes.len() - 1, "odd byte length"));
    }
    let word_at = |off: usize| -> Result<u16> {
        if off + 2 > bytes.len() {
            return Err(Error::parse(ctx, off, "unterminated stream"));
        }
        Ok(u16::from(bytes[off]) | (u16::from(bytes[off + 1]) << 8))
    };

    let mut out = Vec::new();
    let mut time: i64 = 0;
    let mut pending_skip: i64 = 0;
    let mut off = 0;
    loop {
        let word = word_at(off)?;
        off += 2;
        if word == 0 {
            return Ok(out);
        }
        let code = word >> 10;
        let delta = u64::from(word & MAX_DELTA as u16);
        match code {
            CODE_SKIP => {
                // 32-bit interval: high word first, both little-endian.
                let high = word_at(off)?;
                let low = word_at(off + 2)?;
                off += 4;
                pending_skip += i64::from(((u32::from(high) << 16) | u32::from(low)) as i32);
            }
            CODE_NUM | CODE_SUB | CODE_CHN => {
                // Payload lives in the delta field; nothing to emit.
            }
            CODE_AUX => {
                let mut n = delta as usize;
                if n % 2 == 1 {
                    n += 1; // pad byte
                }
                if off + n > bytes.len() {
                    return Err(Error::parse(ctx, off, "unterminated aux payload"));
                }
                off += n;
            }
            _ => {
                let Some(symbol) = symbol_for(code) else {
                    return Err(Error::parse(
                        ctx,
                        off - 2,
                        format!("unknown annotation code {code}"),
                    ));
                };
                let next = time + delta as i64 + pending_skip;
                pending_skip = 0;
                if next < time {
                    return Err(Error::parse(ctx, off - 2, "annotation time moved backward"));
                }
                time = next;
                out.push(Annotation {
                    sample: usize::try_from(time)
                        .map_err(|_| Error::parse(ctx, off - 2, "negative annotation time"))?,
                    symbol,
                });
            }
        }
    }
}

/// Serializes annotations back to the binary format, emitting SKIP words for
/// deltas that do not fit in ten bits. Input must be sorted by sample.
pub fn encode_annotations(annotations: &[Annotation]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(annotations.len() * 2 + 2);
    let mut prev: u64 = 0;
    for (i, ann) in annotations.iter().enumerate() {
        let sample = ann.sample as u64;
        if sample < prev {
            return Err(Error::Validation(format!(
                "annotations out of order at index {i}"
            )));
        }
        let code = code_for(ann.symbol).ok_or_else(|| {
            Error::Validation(format!("symbol {:?} has no annotation code", ann.symbol))
        })?;
        let mut delta = sample - prev;
        if delta > MAX_DELTA {
            out.extend_from_slice(&(CODE_SKIP << 10).to_le_bytes());
            let interval = delta as u32;
            out.extend_from_slice(&((interval >> 16) as u16).to_le_bytes());
            out.extend_from_slice(&((interval & 0xFFFF) as u16).to_le_bytes());
            delta = 0;
        }
        out.extend_from_slice(&(((code << 10) | delta as u16).to_le_bytes()));
        prev = sample;
    }
    out.extend_from_slice(&0u16.to_le_bytes());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn terminator_alone_yields_empty() {
        assert_eq!(parse_annotations(&[0x00, 0x00]).unwrap(), vec![]);
    }

    #[test]
    fn normal_beat_word() {
        // code 1 (NORMAL), delta 77 -> word 0x044D.
        let word = (1u16 << 10) | 77;
        let mut bytes = word.to_le_bytes().to_vec();
        bytes.extend_from_slice(&[0, 0]);
        assert_eq!(
            parse_annotations(&bytes).unwrap(),
            vec![Annotation {
                sample: 77,
                symbol: 'N'
            }]
        );
    }

    #[test]
    fn missing_terminator_is_unterminated() {
        let word = (1u16 << 10) | 5;
        let err = parse_annotations(&word.to_le_bytes()).unwrap_err();
        assert!(err.to_string().contains("unterminated"));
    }

    #[test]
    fn unknown_code_is_rejected() {
        let word = (45u16 << 10) | 3;
        let mut bytes = word.to_le_bytes().to_vec();
        bytes.extend_from_slice(&[0, 0]);
        assert!(parse_annotations(&bytes).is_err());
    }

    #[test]
    fn skip_extends_the_next_delta() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(CODE_SKIP << 10).to_le_bytes());
        let interval: u32 = 70_000;
        bytes.extend_from_slice(&((interval >> 16) as u16).to_le_bytes());
        bytes.extend_from_slice(&((interval & 0xFFFF) as u16).to_le_bytes());
        bytes.extend_from_slice(&(((5u16 << 10) | 10).to_le_bytes()));
        bytes.extend_from_slice(&[0, 0]);
        assert_eq!(
            parse_annotations(&bytes).unwrap(),
            vec![Annotation {
                sample: 70_010,
                symbol: 'V'
            }]
        );
    }

    #[test]
    fn aux_payload_is_consumed_with_pad() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(((28u16) << 10) | 18).to_le_bytes()); // '+' at 18
        bytes.extend_from_slice(&(((CODE_AUX) << 10) | 3).to_le_bytes());
        bytes.extend_from_slice(b"(N\0\0"); // 3 payload bytes + 1 pad
        bytes.extend_from_slice(&(((1u16) << 10) | 59).to_le_bytes()); // 'N' at 77
        bytes.extend_from_slice(&[0, 0]);
        let anns = parse_annotations(&bytes).unwrap();
        assert_eq!(
            anns,
            vec![
                Annotation {
                    sample: 18,
                    symbol: '+'
                },
                Annotation {
                    sample: 77,
                    symbol: 'N'
                },
            ]
        );
    }

    proptest! {
        #[test]
        fn encode_parse_round_trip(
            deltas in prop::collection::vec(0u64..5000, 0..200),
            syms in prop::collection::vec(prop::sample::select(vec!['N','V','A','F','/','+','~','L']), 200),
        ) {
            let mut sample = 0u64;
            let annotations: Vec<Annotation> = deltas
                .iter()
                .zip(&syms)
                .map(|(d, s)| {
                    sample += d;
                    Annotation { sample: sample as usize, symbol: *s }
                })
                .collect();
            let bytes = encode_annotations(&annotations).unwrap();
            prop_assert_eq!(parse_annotations(&bytes).unwrap(), annotations);
        }
    }
}
