//! Subject-disjoint split manifests.
//!
//! The shipped DS1/DS2 record lists follow the standard inter-patient
//! protocol for the MIT-BIH Arrhythmia Database; the four paced records are
//! excluded from both sides. The training side DS1 is further partitioned
//! into an optimization split d1 and a held-out route-induction split d2 at
//! a 9:1 subject ratio.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DS1 (training) records of the standard inter-patient protocol.
pub const MITBIH_DS1: [&str; 22] = [
    "101", "106", "108", "109", "112", "114", "115", "116", "118", "119", "122", "124", "201",
    "203", "205", "207", "208", "209", "215", "220", "223", "230",
];

/// DS2 (test) records: the remaining non-paced records.
pub const MITBIH_DS2: [&str; 22] = [
    "100", "103", "105", "111", "113", "117", "121", "123", "200", "202", "210", "212", "213",
    "214", "219", "221", "222", "228", "231", "232", "233", "234",
];

/// Paced records, excluded from the DS1/DS2 protocol but still ingested for
/// whole-database statistics.
pub const MITBIH_PACED: [&str; 4] = ["102", "104", "107", "217"];

/// All 48 MIT-BIH record names.
pub fn mitbih_all_records() -> Vec<String> {
    let mut all: Vec<String> = MITBIH_DS1
        .iter()
        .chain(MITBIH_DS2.iter())
        .chain(MITBIH_PACED.iter())
        .map(|s| s.to_string())
        .collect();
    all.sort();
    all
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub ds1_subjects: BTreeSet<String>,
    pub ds2_subjects: BTreeSet<String>,
    pub d1_subjects: BTreeSet<String>,
    pub d2_subjects: BTreeSet<String>,
    pub ratio: (u32, u32),
    pub seed: u64,
}

impl SplitManifest {
    /// Subject-disjointness across {d1, d2, ds2} plus d1 ∪ d2 = ds1.
    pub fn validate(&self) -> Result<()> {
        if !self.ds1_subjects.is_disjoint(&self.ds2_subjects) {
            return Err(Error::Validation("ds1 and ds2 overlap".into()));
        }
        if !self.d1_subjects.is_disjoint(&self.d2_subjects) {
            return Err(Error::Validation("d1 and d2 overlap".into()));
        }
        let union: BTreeSet<String> = self.d1_subjects.union(&self.d2_subjects).cloned().collect();
        if union != self.ds1_subjects {
            return Err(Error::Validation("d1 ∪ d2 != ds1".into()));
        }
        for s in &self.ds2_subjects {
            if self.d1_subjects.contains(s) || self.d2_subjects.contains(s) {
                return Err(Error::Validation(format!(
                    "test subject {s} leaked into training"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the split manifest. The ds1/ds2 assignment must cover every
/// subject exactly once; d2 is drawn from ds1 by a seeded shuffle so the
/// same seed always reproduces the same induction split.
pub fn build_split(
    subjects: &[String],
    ds1: &BTreeSet<String>,
    ds2: &BTreeSet<String>,
    ratio: (u32, u32),
    seed: u64,
) -> Result<SplitManifest> {
    if ratio.0 == 0 || ratio.1 == 0 {
        return Err(Error::Validation(
            "split ratio parts must be positive".into(),
        ));
    }
    if let Some(s) = ds1.intersection(ds2).next() {
        return Err(Error::Validation(format!(
            "subject {s} assigned to both ds1 and ds2"
        )));
    }
    for s in subjects {
        if !ds1.contains(s) && !ds2.contains(s) {
            return Err(Error::Validation(format!(
                "subject {s} missing from the assignment"
            )));
        }
    }
    for s in ds1.iter().chain(ds2.iter()) {
        if !subjects.contains(s) {
            return Err(Error::Validation(format!(
                "assigned subject {s} not in the subject list"
            )));
        }
    }

    let mut ordered: Vec<String> = ds1.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ordered.shuffle(&mut rng);

    let total = ratio.0 + ratio.1;
    let n_d2 = (((ordered.len() as u64 * ratio.1 as u64) as f64 / total as f64).round() as usize)
        .clamp(1, ordered.len().saturating_sub(1).max(1));
    let d2: BTreeSet<String> = ordered[ordered.len() - n_d2..].iter().cloned().collect();
    let d1: BTreeSet<String> = ordered[..ordered.len() - n_d2].iter().cloned().collect();

    let manifest = SplitManifest {
        ds1_subjects: ds1.clone(),
        ds2_subjects: ds2.clone(),
        d1_subjects: d1,
        d2_subjects: d2,
        ratio,
        seed,
    };
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets() -> (Vec<String>, BTreeSet<String>, BTreeSet<String>) {
        let ds1: BTreeSet<String> = MITBIH_DS1.iter().map(|s| s.to_string()).collect();
        let ds2: BTreeSet<String> = MITBIH_DS2.iter().map(|s| s.to_string()).collect();
        let subjects: Vec<String> = ds1.iter().chain(ds2.iter()).cloned().collect();
        (subjects, ds1, ds2)
    }

    #[test]
    fn nine_to_one_over_22_subjects() {
        let (subjects, ds1, ds2) = sets();
        let m = build_split(&subjects, &ds1, &ds2, (9, 1), 0).unwrap();
        assert_eq!(m.d1_subjects.len(), 20);
        assert_eq!(m.d2_subjects.len(), 2);
    }

    #[test]
    fn overlapping_assignment_is_rejected() {
        let (subjects, mut ds1, ds2) = sets();
        ds1.insert("100".into()); // also in ds2
        assert!(build_split(&subjects, &ds1, &ds2, (9, 1), 0).is_err());
    }

    #[test]
    fn same_seed_reproduces_the_same_d2() {
        let (subjects, ds1, ds2) = sets();
        let a = build_split(&subjects, &ds1, &ds2, (9, 1), 7).unwrap();
        let b = build_split(&subjects, &ds1, &ds2, (9, 1), 7).unwrap();
        assert_eq!(a, b);
        let c = build_split(&subjects, &ds1, &ds2, (9, 1), 8).unwrap();
        assert_eq!(c.d2_subjects.len(), 2);
    }

    #[test]
    fn record_lists_cover_all_48() {
        assert_eq!(mitbih_all_records().len(), 48);
        let (_subjects, ds1, ds2) = sets();
        assert!(ds1.is_disjoint(&ds2));
    }
}
