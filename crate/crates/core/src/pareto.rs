//! Pareto dominance, non-dominated filtering and front merging.

use serde::Serialize;

use crate::error::{Error, Result};

/// Objective vectors closer than this in every component count as equal.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// `a` dominates `b`: no worse in every component and better in one.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "cannot compare objective vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dominates_unchecked(a, b))
}

fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strict |= x < y;
    }
    strict
}

fn duplicates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DUPLICATE_TOL)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontEntry {
    pub decision: Vec<f64>,
    pub objectives: Vec<f64>,
    /// Index of the run or source that produced the entry.
    pub origin: usize,
}

/// Mutually non-dominated entries without duplicate objective vectors.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ParetoFront {
    entries: Vec<FrontEntry>,
}

impl ParetoFront {
    pub fn entries(&self) -> &[FrontEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<FrontEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of objectives, if the front is non-empty.
    pub fn num_objectives(&self) -> Option<usize> {
        self.entries.first().map(|e| e.objectives.len())
    }

    /// Entries contributed by `origin`.
    pub fn count_from(&self, origin: usize) -> usize {
        self.entries.iter().filter(|e| e.origin == origin).count()
    }
}

/// Entries not dominated by any other input, in input order. Among
/// duplicates the first survives. `O(n²)`.
pub fn non_dominated_filter(points: Vec<FrontEntry>) -> Result<ParetoFront> {
    if let Some(first) = points.first() {
        let k = first.objectives.len();
        if let Some(bad) = points.iter().find(|p| p.objectives.len() != k) {
            return Err(Error::Contract(format!(
                "front mixes {k} and {} objectives",
                bad.objectives.len()
            )));
        }
    }
    let mut keep = vec![false; points.len()];
    for i in 0..points.len() {
        let f = &points[i].objectives;
        let dominated = points
            .iter()
            .enumerate()
            .any(|(j, q)| j != i && dominates_unchecked(&q.objectives, f));
        let repeated = (0..i).any(|k| keep[k] && duplicates(&points[k].objectives, f));
        keep[i] = !dominated && !repeated;
    }
    let entries = points
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();
    Ok(ParetoFront { entries })
}

/// Non-dominated filter over the concatenation of `fronts`.
pub fn merge_fronts(fronts: impl IntoIterator<Item = ParetoFront>) -> Result<ParetoFront> {
    let all: Vec<FrontEntry> = fronts.into_iter().flat_map(|f| f.entries).collect();
    non_dominated_filter(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(points: &[&[f64]]) -> Vec<FrontEntry> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| FrontEntry {
                decision: vec![i as f64],
                objectives: p.to_vec(),
                origin: i,
            })
            .collect()
    }

    fn objectives(front: &ParetoFront) -> Vec<Vec<f64>> {
        front
            .entries()
            .iter()
            .map(|e| e.objectives.clone())
            .collect()
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[1.0, 2.0], &[2.0, 3.0]).unwrap());
        assert!(!dominates(&[1.0, 3.0], &[3.0, 1.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]).unwrap());
        assert!(dominates(&[1.0, 2.0], &[1.0, 3.0]).unwrap());
        assert!(dominates(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn filter_example() {
        let f = non_dominated_filter(entries(&[&[1.0, 2.0], &[2.0, 1.0], &[2.0, 2.0]])).unwrap();
        assert_eq!(objectives(&f), vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(non_dominated_filter(Vec::new()).unwrap().is_empty());
    }

    #[test]
    fn duplicates_keep_first() {
        let f = non_dominated_filter(entries(&[&[1.0, 2.0], &[1.0 + 1e-13, 2.0], &[1.0, 2.0]]))
            .unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.entries()[0].origin, 0);
    }

    #[test]
    fn merge_prefers_dominating_front() {
        let a = non_dominated_filter(entries(&[&[2.0, 3.0], &[3.0, 2.0]])).unwrap();
        let b = non_dominated_filter(entries(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap();
        assert_eq!(
            objectives(&merge_fronts([a.clone(), b.clone()]).unwrap()),
            objectives(&b)
        );
        let c = non_dominated_filter(entries(&[&[0.0, 5.0]])).unwrap();
        assert_eq!(merge_fronts([b, c]).unwrap().len(), 3);
        let wide = non_dominated_filter(entries(&[&[0.0, 0.0, 0.0]])).unwrap();
        assert!(merge_fronts([a, wide]).is_err());
    }

    use proptest::prelude::*;

    fn point(k: usize) -> impl Strategy<Value = Vec<f64>> {
        // a coarse lattice makes ties and dominance common
        proptest::collection::vec((0..6i32).prop_map(f64::from), k)
    }

    fn brute_force(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let beaten = points.iter().enumerate().any(|(j, q)| {
                j != i
                    && q.iter().zip(p).all(|(a, b)| a <= b)
                    && q.iter().zip(p).any(|(a, b)| a < b)
            });
            if !beaten && !out.contains(p) {
                out.push(p.clone());
            }
        }
        out
    }

    fn owned(points: &[Vec<f64>]) -> Vec<FrontEntry> {
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        entries(&refs)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100_000))]

        #[test]
        fn dominance_is_a_strict_order(a in point(3), b in point(3), c in point(3)) {
            prop_assert!(!dominates(&a, &a).unwrap());
            if dominates(&a, &b).unwrap() {
                prop_assert!(!dominates(&b, &a).unwrap());
                if dominates(&b, &c).unwrap() {
                    prop_assert!(dominates(&a, &c).unwrap());
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn filter_matches_brute_force(points in proptest::collection::vec(point(3), 0..80)) {
            let front = non_dominated_filter(owned(&points)).unwrap();
            prop_assert_eq!(objectives(&front), brute_force(&points));
        }

        #[test]
        fn filter_is_idempotent(points in proptest::collection::vec(point(2), 0..60)) {
            let once = non_dominated_filter(owned(&points)).unwrap();
            let twice = non_dominated_filter(once.clone().into_entries()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn merging_ignores_partition(points in proptest::collection::vec(point(3), 0..60), cut in 0usize..60) {
            let all = owned(&points);
            let cut = cut.min(all.len());
            let whole = non_dominated_filter(all.clone()).unwrap();
            let left = non_dominated_filter(all[..cut].to_vec()).unwrap();
            let right = non_dominated_filter(all[cut..].to_vec()).unwrap();
            let merged = merge_fronts([left.clone(), right.clone()]).unwrap();
            prop_assert_eq!(&merged, &whole);
            let mut a = objectives(&merge_fronts([right, left]).unwrap());
            let mut b = objectives(&whole);
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}
