//! AAMI class taxonomy and the annotation-symbol mapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coarse AAMI beat classes, including Q (unknown/unclassifiable).
///
/// Q-class beats are counted during ingest but excluded from segments and
/// from every downstream classification target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AamiClass {
    N,
    S,
    V,
    F,
    Q,
}

/// The closed four-class label set used by the classifiers and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BeatClass {
    N,
    S,
    V,
    F,
}

impl BeatClass {
    /// Fixed global class order.
    pub const ALL: [BeatClass; 4] = [BeatClass::N, BeatClass::S, BeatClass::V, BeatClass::F];

    pub fn index(self) -> usize {
        match self {
            BeatClass::N => 0,
            BeatClass::S => 1,
            BeatClass::V => 2,
            BeatClass::F => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<BeatClass> {
        BeatClass::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BeatClass::N => "N",
            BeatClass::S => "S",
            BeatClass::V => "V",
            BeatClass::F => "F",
        }
    }

    pub fn from_name(s: &str) -> Result<BeatClass> {
        match s {
            "N" => Ok(BeatClass::N),
            "S" => Ok(BeatClass::S),
            "V" => Ok(BeatClass::V),
            "F" => Ok(BeatClass::F),
            other => Err(Error::Validation(format!("unknown beat class `{other}`"))),
        }
    }
}

impl std::fmt::Display for BeatClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<AamiClass> for BeatClass {
    type Error = Error;

    fn try_from(c: AamiClass) -> Result<BeatClass> {
        match c {
            AamiClass::N => Ok(BeatClass::N),
            AamiClass::S => Ok(BeatClass::S),
            AamiClass::V => Ok(BeatClass::V),
            AamiClass::F => Ok(BeatClass::F),
            AamiClass::Q => Err(Error::Validation(
                "class Q is excluded from the classification label set".into(),
            )),
        }
    }
}

impl From<BeatClass> for AamiClass {
    fn from(c: BeatClass) -> AamiClass {
        match c {
            BeatClass::N => AamiClass::N,
            BeatClass::S => AamiClass::S,
            BeatClass::V => AamiClass::V,
            BeatClass::F => AamiClass::F,
        }
    }
}

/// Maps an annotation symbol to its AAMI class, or `None` for non-beat
/// annotations (rhythm changes, noise markers, waveform boundaries, ...).
///
/// Total over all symbols: anything not in one of the five beat groups is
/// a non-beat.
pub fn map_aami(symbol: char) -> Option<AamiClass> {
    match symbol {
        'N' | 'L' | 'R' | 'e' | 'j' => Some(AamiClass::N),
        'A' | 'a' | 'J' | 'S' => Some(AamiClass::S),
        'V' | 'E' => Some(AamiClass::V),
        'F' => Some(AamiClass::F),
        '/' | 'f' | 'Q' => Some(AamiClass::Q),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beat_symbols_map_to_their_groups() {
        assert_eq!(map_aami('V'), Some(AamiClass::V));
        assert_eq!(map_aami('E'), Some(AamiClass::V));
        for s in ['N', 'L', 'R', 'e', 'j'] {
            assert_eq!(map_aami(s), Some(AamiClass::N));
        }
        for s in ['A', 'a', 'J', 'S'] {
            assert_eq!(map_aami(s), Some(AamiClass::S));
        }
        assert_eq!(map_aami('F'), Some(AamiClass::F));
        for s in ['/', 'f', 'Q'] {
            assert_eq!(map_aami(s), Some(AamiClass::Q));
        }
    }

    #[test]
    fn non_beat_symbols_map_to_none() {
        for s in [
            '+', '~', '|', '"', '[', ']', '!', 'x', '(', ')', 'p', 't', 'u', '?', '=',
        ] {
            assert_eq!(map_aami(s), None, "symbol {s:?}");
        }
    }

    #[test]
    fn q_is_rejected_from_the_closed_label_set() {
        assert!(BeatClass::try_from(AamiClass::Q).is_err());
        assert_eq!(BeatClass::try_from(AamiClass::S).unwrap(), BeatClass::S);
    }

    #[test]
    fn class_order_is_stable() {
        assert_eq!(BeatClass::ALL.map(|c| c.index()), [0, 1, 2, 3]);
        assert_eq!(BeatClass::from_index(2), Some(BeatClass::V));
        assert_eq!(BeatClass::from_index(4), None);
    }
}
