use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::labels::{map_label, AnnotationRecord, Label};
use crate::error::{Error, Result};

pub const ALPHA_THRESHOLD: f64 = 0.667;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub alpha: f64,
    /// Units with at least two ratings.
    pub n_units: usize,
    /// Ratings that belong to those units.
    pub n_pairable_values: usize,
    pub pass: bool,
    /// Every pairable rating falls in one category, so expected
    /// disagreement is zero and alpha is reported as 1.
    pub degenerate: bool,
}

/// Nominal Krippendorff's alpha over the five raw labels.
///
/// Records are grouped by `answer_id`. Exact duplicates are collapsed; the
/// same annotator giving one answer two different labels is an error, as is
/// a data set with no unit rated at least twice.
pub fn krippendorff_alpha(records: &[AnnotationRecord]) -> Result<ReliabilityReport> {
    let mut units: BTreeMap<&str, HashMap<&str, Label>> = BTreeMap::new();
    for r in records {
        let unit = units.entry(&r.answer_id).or_default();
        match unit.get(r.annotator_id.as_str()) {
            Some(prev) if *prev != r.label => {
                return Err(Error::ConflictingLabels {
                    answer_id: r.answer_id.clone(),
                    annotator: r.annotator_id.clone(),
                })
            }
            Some(_) => {}
            None => {
                unit.insert(&r.annotator_id, r.label);
            }
        }
    }
    let coded: Vec<Vec<usize>> = units
        .values()
        .map(|u| u.values().map(|l| l.code() as usize - 1).collect())
        .collect();
    alpha_from_units(&coded, Label::ALL.len())
}

/// Alpha on the three mapped verdict categories instead of raw labels.
pub fn krippendorff_alpha_mapped(records: &[AnnotationRecord]) -> Result<ReliabilityReport> {
    let mapped: Vec<AnnotationRecord> = records
        .iter()
        .map(|r| AnnotationRecord {
            label: match map_label(r.label) {
                super::Verdict::Correct => Label::MakesSense,
                super::Verdict::Incorrect => Label::DoesNotMakeSense,
                super::Verdict::Unfamiliar => Label::Unfamiliar,
            },
            ..r.clone()
        })
        .collect();
    krippendorff_alpha(&mapped)
}

/// Nominal alpha from per-unit category indices in `0..n_categories`.
pub fn alpha_from_units(units: &[Vec<usize>], n_categories: usize) -> Result<ReliabilityReport> {
    let mut o = vec![vec![0.0f64; n_categories]; n_categories];
    let mut n_units = 0;
    let mut n_values = 0;
    for unit in units {
        let m = unit.len();
        if m < 2 {
            continue;
        }
        n_units += 1;
        n_values += m;
        let mut counts = vec![0usize; n_categories];
        for &c in unit {
            counts[c] += 1;
        }
        let w = 1.0 / (m as f64 - 1.0);
        for c in 0..n_categories {
            if counts[c] == 0 {
                continue;
            }
            for k in 0..n_categories {
                let pairs = if c == k {
                    counts[c] * (counts[c] - 1)
                } else {
                    counts[c] * counts[k]
                };
                o[c][k] += pairs as f64 * w;
            }
        }
    }
    if n_units == 0 {
        return Err(Error::UndefinedAlpha);
    }

    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..n_categories {
        for k in 0..n_categories {
            if c != k {
                observed += o[c][k];
                expected += n_c[c] * n_c[k];
            }
        }
    }
    let (alpha, degenerate) = if expected == 0.0 {
        tracing::warn!("all pairable ratings share one category; alpha reported as 1");
        (1.0, true)
    } else {
        (1.0 - (n - 1.0) * observed / expected, false)
    };
    Ok(ReliabilityReport {
        alpha,
        n_units,
        n_pairable_values: n_values,
        pass: alpha >= ALPHA_THRESHOLD,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(answer: &str, who: &str, code: u64) -> AnnotationRecord {
        AnnotationRecord {
            answer_id: answer.into(),
            annotator_id: who.into(),
            label: Label::from_code(code).unwrap(),
            timestamp: String::new(),
        }
    }

    #[test]
    fn perfect_agreement_is_one() {
        let recs = vec![rec("a", "x", 1), rec("a", "y", 1), rec("b", "x", 3), rec("b", "y", 3)];
        let r = krippendorff_alpha(&recs).unwrap();
        assert!((r.alpha - 1.0).abs() < 1e-12);
        assert!(r.pass && !r.degenerate);
        assert_eq!((r.n_units, r.n_pairable_values), (2, 4));
    }

    #[test]
    fn single_annotator_is_undefined() {
        let recs = vec![rec("a", "x", 1), rec("b", "x", 3)];
        assert!(matches!(krippendorff_alpha(&recs), Err(Error::UndefinedAlpha)));
    }

    #[test]
    fn one_category_is_degenerate() {
        let recs = vec![rec("a", "x", 2), rec("a", "y", 2), rec("b", "z", 2), rec("b", "x", 2)];
        let r = krippendorff_alpha(&recs).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.alpha, 1.0);
    }

    #[test]
    fn systematic_disagreement_fails_threshold() {
        let recs = vec![rec("a", "x", 1), rec("a", "y", 4), rec("b", "x", 4), rec("b", "y", 1)];
        let r = krippendorff_alpha(&recs).unwrap();
        assert!(r.alpha < 0.0);
        assert!(!r.pass);
    }

    #[test]
    fn known_textbook_value() {
        // Units (a,a), (a,b), (b,b), (b,b): o_ab = o_ba = 1, n_a = 3, n_b = 5, n = 8.
        // alpha = 1 - 7 * 2 / (2 * 15) = 1 - 14/30.
        let units = vec![vec![0, 0], vec![0, 1], vec![1, 1], vec![1, 1]];
        let r = alpha_from_units(&units, 2).unwrap();
        assert!((r.alpha - (1.0 - 14.0 / 30.0)).abs() < 1e-12);
    }

    #[test]
    fn duplicates_collapse_and_conflicts_error() {
        let recs = vec![rec("a", "x", 1), rec("a", "x", 1), rec("a", "y", 1), rec("b", "x", 3), rec("b", "y", 3)];
        assert_eq!(krippendorff_alpha(&recs).unwrap().n_pairable_values, 4);
        let bad = vec![rec("a", "x", 1), rec("a", "x", 2), rec("a", "y", 1)];
        assert!(matches!(krippendorff_alpha(&bad), Err(Error::ConflictingLabels { .. })));
    }

    #[test]
    fn unpaired_units_are_ignored() {
        let recs = vec![rec("a", "x", 1), rec("a", "y", 1), rec("b", "x", 3), rec("c", "x", 4), rec("c", "y", 4)];
        let r = krippendorff_alpha(&recs).unwrap();
        assert_eq!(r.n_units, 2);
        assert_eq!(r.n_pairable_values, 4);
    }

    #[test]
    fn mapped_alpha_merges_synonymous_labels() {
        let recs = vec![rec("a", "x", 1), rec("a", "y", 2), rec("b", "x", 3), rec("b", "y", 4)];
        assert!(krippendorff_alpha(&recs).unwrap().alpha < 1.0);
        assert!((krippendorff_alpha_mapped(&recs).unwrap().alpha - 1.0).abs() < 1e-12);
    }
}
