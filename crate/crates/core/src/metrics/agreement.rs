use std::collections::BTreeMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Per-item category counts with the same number of raters on every item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingMatrix {
    rows: Vec<Vec<usize>>,
    raters: usize,
}

impl RatingMatrix {
    pub fn new(rows: Vec<Vec<usize>>) -> Result<Self, MetricError> {
        if rows.len() < 2 {
            return Err(MetricError::InvalidMatrix(format!("need at least 2 items, got {}", rows.len())));
        }
        let width = rows[0].len();
        if width < 1 {
            return Err(MetricError::InvalidMatrix("no categories".into()));
        }
        let raters: usize = rows[0].iter().sum();
        if raters < 2 {
            return Err(MetricError::InvalidMatrix(format!("need at least 2 raters, got {raters}")));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(MetricError::InvalidMatrix(format!("item {i} has {} categories, expected {width}", row.len())));
            }
            let sum: usize = row.iter().sum();
            if sum != raters {
                return Err(MetricError::InvalidMatrix(format!("item {i} has {sum} ratings, expected {raters}")));
            }
        }
        Ok(Self { rows, raters })
    }

    /// Builds counts from each item's list of category labels. Categories are ordered by `Ord`.
    pub fn from_labels<T: Ord + Clone>(items: &[Vec<T>]) -> Result<Self, MetricError> {
        let mut index: BTreeMap<T, usize> = BTreeMap::new();
        for label in items.iter().flatten() {
            index.entry(label.clone()).or_insert(0);
        }
        for (i, v) in index.values_mut().enumerate() {
            *v = i;
        }
        let width = index.len().max(1);
        let rows = items
            .iter()
            .map(|labels| {
                let mut row = vec![0; width];
                for l in labels {
                    row[index[l]] += 1;
                }
                row
            })
            .collect();
        Self::new(rows)
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn raters(&self) -> usize {
        self.raters
    }

    pub fn items(&self) -> usize {
        self.rows.len()
    }
}

pub fn fleiss_kappa(matrix: &RatingMatrix) -> Result<f64, MetricError> {
    let n = matrix.raters as f64;
    let items = matrix.items() as f64;
    let width = matrix.rows[0].len();

    let mut p_bar = 0.0;
    let mut col = vec![0.0; width];
    for row in &matrix.rows {
        let agree: f64 = row.iter().map(|&c| (c * c) as f64).sum::<f64>() - n;
        p_bar += agree / (n * (n - 1.0));
        for (j, &c) in row.iter().enumerate() {
            col[j] += c as f64;
        }
    }
    p_bar /= items;
    let p_e: f64 = col.iter().map(|c| (c / (items * n)).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(MetricError::DegenerateAgreement);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Unrounded mean of 1..5 ratings.
pub fn aggregate_likert(scores: &[u8]) -> Result<f64, MetricError> {
    if scores.is_empty() {
        return Err(MetricError::NoRatings);
    }
    if let Some(&bad) = scores.iter().find(|s| !(1..=5).contains(*s)) {
        return Err(MetricError::LikertOutOfRange(bad));
    }
    Ok(scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote<T> {
    Winner(T),
    Tie,
}

/// Strict majority. No votes also yields `Tie`.
pub fn majority_vote<T: Eq + Hash + Clone>(votes: &[T]) -> Vote<T> {
    let mut counts: Vec<(&T, usize)> = Vec::new();
    for v in votes {
        match counts.iter_mut().find(|(k, _)| *k == v) {
            Some((_, c)) => *c += 1,
            None => counts.push((v, 1)),
        }
    }
    counts
        .into_iter()
        .find(|&(_, c)| 2 * c > votes.len())
        .map_or(Vote::Tie, |(v, _)| Vote::Winner(v.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Step-by-step Fleiss computation kept deliberately separate from the implementation.
    fn kappa_by_hand(rows: &[Vec<usize>]) -> f64 {
        let items = rows.len() as f64;
        let raters: usize = rows[0].iter().sum();
        let total = items * raters as f64;
        let cats = rows[0].len();
        let mut p_e = 0.0;
        for j in 0..cats {
            let share: f64 = rows.iter().map(|r| r[j] as f64).sum::<f64>() / total;
            p_e += share * share;
        }
        let mut per_item = Vec::new();
        for r in rows {
            let mut pairs = 0usize;
            for &c in r {
                pairs += c * c.saturating_sub(1);
            }
            per_item.push(pairs as f64 / (raters * (raters - 1)) as f64);
        }
        let p_bar = per_item.iter().sum::<f64>() / items;
        (p_bar - p_e) / (1.0 - p_e)
    }

    #[test]
    fn perfect_split_agreement_is_one() {
        let m = RatingMatrix::new(vec![vec![3, 0], vec![3, 0], vec![0, 3], vec![0, 3]]).unwrap();
        assert!((fleiss_kappa(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_category_is_degenerate() {
        let m = RatingMatrix::new(vec![vec![3, 0], vec![3, 0], vec![3, 0]]).unwrap();
        assert!(matches!(fleiss_kappa(&m), Err(MetricError::DegenerateAgreement)));
    }

    #[test]
    fn mixed_rows_match_hand_oracle() {
        let rows = vec![vec![3, 0], vec![2, 1], vec![0, 3], vec![1, 2]];
        let expected = kappa_by_hand(&rows);
        // p = (.5,.5) so chance agreement is .5; mean observed agreement is 2/3
        assert!((expected - 1.0 / 3.0).abs() < 1e-12);
        let m = RatingMatrix::new(rows).unwrap();
        assert!((fleiss_kappa(&m).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn matrix_validation() {
        assert!(RatingMatrix::new(vec![vec![3, 0]]).is_err());
        assert!(RatingMatrix::new(vec![vec![1, 0], vec![0, 1]]).is_err());
        assert!(RatingMatrix::new(vec![vec![2, 1], vec![2, 0]]).is_err());
    }

    #[test]
    fn from_labels_counts() {
        let m = RatingMatrix::from_labels(&[vec!["y", "y", "n"], vec!["n", "n", "n"]]).unwrap();
        assert_eq!(m.rows(), &[vec![1, 2], vec![3, 0]]);
    }

    #[test]
    fn likert_examples() {
        assert_eq!(aggregate_likert(&[4, 4, 4]).unwrap(), 4.0);
        assert_eq!(aggregate_likert(&[3, 4, 5]).unwrap(), 4.0);
        assert!((aggregate_likert(&[1, 2, 2]).unwrap() - 5.0 / 3.0).abs() < 1e-12);
        assert!(matches!(aggregate_likert(&[1, 6]), Err(MetricError::LikertOutOfRange(6))));
        assert!(matches!(aggregate_likert(&[0]), Err(MetricError::LikertOutOfRange(0))));
        assert!(aggregate_likert(&[]).is_err());
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority_vote(&["yes", "yes", "no"]), Vote::Winner("yes"));
        assert_eq!(majority_vote(&["yes", "no"]), Vote::Tie);
        assert_eq!(majority_vote(&["adhered", "violated", "not_relevant"]), Vote::Tie);
        assert_eq!(majority_vote::<&str>(&[]), Vote::Tie);
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
        (2usize..6, 2usize..5, 2usize..8).prop_flat_map(|(raters, cats, items)| {
            proptest::collection::vec(
                proptest::collection::vec(0..cats, raters).prop_map(move |labels| {
                    let mut row = vec![0; cats];
                    for l in labels {
                        row[l] += 1;
                    }
                    row
                }),
                items,
            )
        })
    }

    proptest! {
        #[test]
        fn kappa_matches_hand_oracle(rows in matrix_strategy()) {
            let m = RatingMatrix::new(rows.clone()).unwrap();
            match fleiss_kappa(&m) {
                Ok(k) => prop_assert!((k - kappa_by_hand(&rows)).abs() < 1e-9),
                Err(MetricError::DegenerateAgreement) => {
                    prop_assert!(rows.iter().all(|r| r == &rows[0]) && rows[0].iter().filter(|&&c| c > 0).count() == 1)
                }
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn kappa_invariant_under_category_relabeling(rows in matrix_strategy(), rot in 0usize..4) {
            let m = RatingMatrix::new(rows.clone()).unwrap();
            let permuted: Vec<Vec<usize>> = rows
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    let k = rot % r.len();
                    r.rotate_left(k);
                    r.reverse();
                    r
                })
                .collect();
            let p = RatingMatrix::new(permuted).unwrap();
            match (fleiss_kappa(&m), fleiss_kappa(&p)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "mismatch {other:?}"),
            }
        }

        #[test]
        fn kappa_is_one_iff_unanimous(rows in matrix_strategy()) {
            let m = RatingMatrix::new(rows.clone()).unwrap();
            let unanimous = rows.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1);
            if let Ok(k) = fleiss_kappa(&m) {
                prop_assert_eq!((k - 1.0).abs() < 1e-9, unanimous);
            }
        }

        #[test]
        fn likert_mean_bounded_and_order_free(mut scores in proptest::collection::vec(1u8..=5, 1..10)) {
            let a = aggregate_likert(&scores).unwrap();
            let lo = *scores.iter().min().unwrap() as f64;
            let hi = *scores.iter().max().unwrap() as f64;
            prop_assert!(a >= lo && a <= hi);
            scores.reverse();
            prop_assert!((aggregate_likert(&scores).unwrap() - a).abs() < 1e-12);
        }
    }
}
