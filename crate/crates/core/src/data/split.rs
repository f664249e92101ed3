//! Patient-level split assignment.

use super::{Cohort, DataError, Split, SplitSpec};
use crate::rng::Pcg;
use std::collections::{BTreeMap, BTreeSet};

/// Assign every ECG to Train/Val/Test by patient.
///
/// Patient ids are sorted lexicographically, shuffled with a seeded
/// generator, and allocated by cumulative fractions with floor rounding;
/// the last split absorbs the remainder. Patients listed in
/// `spec.fixed_test` always land in Test, and only Train/Val are
/// reshuffled when the seed changes.
pub fn split_by_patient(
    cohort: &Cohort,
    spec: &SplitSpec,
) -> Result<BTreeMap<String, Split>, DataError> {
    spec.validate()?;

    let mut patients: BTreeSet<&str> = cohort.records.iter().map(|r| r.patient_id.as_str()).collect();
    let mut pinned: Vec<&str> = Vec::new();
    if let Some(fixed) = &spec.fixed_test {
        for p in fixed {
            if !patients.remove(p.as_str()) {
                return Err(DataError::Config(format!(
                    "fixed_test patient {p} not present in cohort"
                )));
            }
            pinned.push(p.as_str());
        }
    }

    let mut free: Vec<&str> = patients.into_iter().collect();
    Pcg::seeded(spec.seed).shuffle(&mut free);

    let (f_train, f_val, _) = spec.fractions;
    let n = free.len();
    let (n_train, n_val) = if spec.fixed_test.is_some() {
        // Test is exactly the pinned set; the rest splits train:val.
        let denom = f_train + f_val;
        let n_train = if denom > 0.0 {
            ((f_train / denom) * n as f64).floor() as usize
        } else {
            0
        };
        (n_train, n - n_train)
    } else {
        let n_train = (f_train * n as f64).floor() as usize;
        let n_val = ((f_train + f_val) * n as f64).floor() as usize - n_train;
        (n_train, n_val)
    };

    let mut assignment: BTreeMap<&str, Split> = BTreeMap::new();
    for (i, p) in free.iter().enumerate() {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        assignment.insert(p, split);
    }
    for p in pinned {
        assignment.insert(p, Split::Test);
    }

    Ok(cohort
        .records
        .iter()
        .map(|r| (r.ecg_id.clone(), assignment[r.patient_id.as_str()]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_record;

    fn cohort_of(n_patients: usize, ecgs_per_patient: usize) -> Cohort {
        let mut records = Vec::new();
        for p in 0..n_patients {
            for e in 0..ecgs_per_patient {
                records.push(test_record(
                    &format!("p{p:04}"),
                    &format!("p{p:04}-e{e}"),
                    100.0,
                    p % 3 == 0,
                    50.0,
                    0.0,
                ));
            }
        }
        Cohort::new(records)
    }

    fn split_counts(map: &BTreeMap<String, Split>) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for s in map.values() {
            match s {
                Split::Train => c.0 += 1,
                Split::Val => c.1 += 1,
                Split::Test => c.2 += 1,
            }
        }
        c
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cohort = cohort_of(100, 1);
        let spec = SplitSpec::new((0.64, 0.16, 0.20), 7);
        let a = split_by_patient(&cohort, &spec).unwrap();
        let b = split_by_patient(&cohort, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(split_counts(&a), (64, 16, 20));
    }

    #[test]
    fn different_seed_reshuffles() {
        let cohort = cohort_of(100, 1);
        let a = split_by_patient(&cohort, &SplitSpec::new((0.64, 0.16, 0.20), 7)).unwrap();
        let b = split_by_patient(&cohort, &SplitSpec::new((0.64, 0.16, 0.20), 8)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn all_ecgs_of_a_patient_share_a_split() {
        let cohort = cohort_of(40, 3);
        let map = split_by_patient(&cohort, &SplitSpec::new((0.64, 0.16, 0.20), 3)).unwrap();
        for p in 0..40 {
            let splits: Vec<Split> = (0..3)
                .map(|e| map[&format!("p{p:04}-e{e}")])
                .collect();
            assert!(splits.iter().all(|&s| s == splits[0]), "patient p{p:04}");
        }
        assert_eq!(map.len(), cohort.len());
    }

    #[test]
    fn fixed_test_pins_exactly_those_patients() {
        let cohort = cohort_of(100, 1);
        let pinned: Vec<String> = (0..50).map(|p| format!("p{p:04}")).collect();
        let mut spec = SplitSpec::new((0.42, 0.08, 0.50), 11);
        spec.fixed_test = Some(pinned.clone());
        let map = split_by_patient(&cohort, &spec).unwrap();
        for p in &pinned {
            assert_eq!(map[&format!("{p}-e0")], Split::Test);
        }
        let (train, val, test) = split_counts(&map);
        assert_eq!(test, 50);
        assert_eq!(train, 42);
        assert_eq!(val, 8);
    }

    #[test]
    fn fixed_test_keeps_test_stable_across_seeds() {
        let cohort = cohort_of(60, 1);
        let pinned: Vec<String> = (0..12).map(|p| format!("p{p:04}")).collect();
        let mut spec = SplitSpec::new((0.64, 0.16, 0.20), 1);
        spec.fixed_test = Some(pinned.clone());
        let a = split_by_patient(&cohort, &spec).unwrap();
        spec.seed = 2;
        let b = split_by_patient(&cohort, &spec).unwrap();
        let test_a: Vec<&String> = a.iter().filter(|(_, s)| **s == Split::Test).map(|(k, _)| k).collect();
        let test_b: Vec<&String> = b.iter().filter(|(_, s)| **s == Split::Test).map(|(k, _)| k).collect();
        assert_eq!(test_a, test_b);
        assert_ne!(a, b, "train/val should reshuffle across seeds");
    }

    #[test]
    fn missing_pinned_patient_is_config_error() {
        let cohort = cohort_of(10, 1);
        let mut spec = SplitSpec::new((0.64, 0.16, 0.20), 1);
        spec.fixed_test = Some(vec!["absent".to_string()]);
        assert!(matches!(
            split_by_patient(&cohort, &spec),
            Err(DataError::Config(_))
        ));
    }

    #[test]
    fn invalid_fractions_are_config_error() {
        let cohort = cohort_of(10, 1);
        assert!(matches!(
            split_by_patient(&cohort, &SplitSpec::new((0.5, 0.5, 0.5), 1)),
            Err(DataError::Config(_))
        ));
    }
}
