//! Tags, clouds, and the measures defined on them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::cube::{Coord, Cuboid};
use crate::scalar::{Real, Scalar};

/// Soft cap on how many tags a displayed cloud should hold.
pub const DEFAULT_MAX_TAGS: usize = 150;

/// Separator between attribute values in a k-tag term.
pub const TERM_SEPARATOR: &str = "–";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tag<S> {
    pub term: String,
    pub coords: Coord,
    pub weight: S,
}

impl<S> Tag<S> {
    pub fn new(coords: Coord, weight: S) -> Self {
        Self { term: coords.values().join(TERM_SEPARATOR), coords, weight }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagCloud<S> {
    tags: Vec<Tag<S>>,
    source_dims: Vec<String>,
    approximate: bool,
}

impl<S: Scalar> TagCloud<S> {
    /// Builds a cloud from explicit tags. Duplicate coordinates keep the first.
    pub fn new(source_dims: Vec<String>, tags: Vec<Tag<S>>) -> Self {
        let mut seen = BTreeSet::new();
        let tags = tags.into_iter().filter(|t| seen.insert(t.coords.clone())).collect();
        Self { tags, source_dims, approximate: false }
    }

    /// One-dimensional cloud from `(value, weight)` pairs.
    pub fn from_pairs<T: Into<String>>(dim: &str, pairs: impl IntoIterator<Item = (T, S)>) -> Self {
        Self::new(vec![dim.to_owned()], pairs.into_iter().map(|(v, w)| Tag::new(Coord::new([v]), w)).collect())
    }

    pub fn with_approximate(mut self, approximate: bool) -> Self {
        self.approximate = approximate;
        self
    }

    pub fn weight_of(&self, coords: &Coord) -> Option<S> {
        self.tags.iter().find(|t| &t.coords == coords).map(|t| t.weight)
    }

    pub fn weights(&self) -> Vec<S> {
        self.tags.iter().map(|t| t.weight).collect()
    }

    pub fn coord_set(&self) -> BTreeSet<&Coord> {
        self.tags.iter().map(|t| &t.coords).collect()
    }
}

impl<S> TagCloud<S> {
    pub fn tags(&self) -> &[Tag<S>] {
        &self.tags
    }

    pub fn into_tags(self) -> Vec<Tag<S>> {
        self.tags
    }

    pub fn source_dims(&self) -> &[String] {
        &self.source_dims
    }

    pub fn is_approximate(&self) -> bool {
        self.approximate
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Ranking used everywhere: heavier first, then smaller coordinates.
pub fn rank_order<S: Scalar>(a: (&Coord, S), b: (&Coord, S)) -> Ordering {
    b.1.cmp_total(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Selects the `k` heaviest `(coord, weight)` pairs in rank order.
/// Negative weights cannot be tags and are skipped.
pub fn top_k_pairs<S: Scalar>(pairs: impl IntoIterator<Item = (Coord, S)>, k: usize) -> Vec<(Coord, S)> {
    let mut all: Vec<(Coord, S)> = pairs.into_iter().filter(|(_, w)| *w >= S::zero()).collect();
    let cmp = |a: &(Coord, S), b: &(Coord, S)| rank_order((&a.0, a.1), (&b.0, b.1));
    if k == 0 {
        return Vec::new();
    }
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    all
}

/// The `k` heaviest cells of a cuboid as a cloud, heaviest first.
pub fn top_k<S: Scalar>(cuboid: &Cuboid<S>, k: usize) -> TagCloud<S> {
    let pairs = cuboid.cells().iter().map(|(c, cell)| (c.clone(), cell.value()));
    cloud_from_ranked(cuboid.dims(), top_k_pairs(pairs, k))
}

pub(crate) fn cloud_from_ranked<S: Scalar>(dims: Vec<String>, ranked: Vec<(Coord, S)>) -> TagCloud<S> {
    TagCloud { tags: ranked.into_iter().map(|(c, w)| Tag::new(c, w)).collect(), source_dims: dims, approximate: false }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CloudError {
    #[error("every tag has zero weight")]
    AllZeroWeights,
    #[error("relative entropy needs at least two tags")]
    SingletonCloud,
    #[error("cloud is empty")]
    EmptyCloud,
    #[error("font sizes must satisfy 0 < min <= max")]
    InvalidFontRange,
}

/// Shannon entropy of the normalized weights, natural log, `0 ln 0 = 0`.
pub fn entropy<S: Real>(cloud: &TagCloud<S>) -> Result<S, CloudError> {
    let total = cloud.tags.iter().fold(S::zero(), |acc, t| acc + t.weight);
    if total <= S::zero() {
        return Err(CloudError::AllZeroWeights);
    }
    let h = cloud
        .tags
        .iter()
        .filter(|t| t.weight > S::zero())
        .map(|t| {
            let p = t.weight / total;
            -p * p.ln()
        })
        .fold(S::zero(), |acc, x| acc + x);
    Ok(h.max(S::zero()))
}

/// Entropy divided by the log of the number of tags, in `[0, 1]`.
pub fn relative_entropy<S: Real>(cloud: &TagCloud<S>) -> Result<S, CloudError> {
    if cloud.len() < 2 {
        return Err(CloudError::SingletonCloud);
    }
    let h = entropy(cloud)?;
    let n = S::from_index(cloud.len());
    Ok((h / n.ln()).min(S::one()))
}

fn false_index<S: Scalar>(inside: &TagCloud<S>, other: &TagCloud<S>) -> Result<S, CloudError> {
    if inside.is_empty() {
        return Err(CloudError::EmptyCloud);
    }
    let others = other.coord_set();
    let max_all = inside.tags.iter().map(|t| t.weight).fold(S::zero(), S::max_of);
    let max_false =
        inside.tags.iter().filter(|t| !others.contains(&t.coords)).map(|t| t.weight).reduce(S::max_of);
    match max_false {
        None => Ok(S::zero()),
        Some(_) if max_all <= S::zero() => Err(CloudError::AllZeroWeights),
        Some(w) => Ok(w / max_all),
    }
}

/// Heaviest tag of `approx` missing from `exact`, relative to the heaviest
/// tag of `approx`. Weights come from `approx`; membership is by coordinates.
pub fn false_positive_index<S: Scalar>(approx: &TagCloud<S>, exact: &TagCloud<S>) -> Result<S, CloudError> {
    false_index(approx, exact)
}

/// Heaviest tag of `exact` missing from `approx`, relative to the heaviest
/// tag of `exact`. Weights come from `exact`.
pub fn false_negative_index<S: Scalar>(approx: &TagCloud<S>, exact: &TagCloud<S>) -> Result<S, CloudError> {
    false_index(exact, approx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    WeightDesc,
    TermAsc,
}

pub fn sort_tags<S: Scalar>(cloud: &TagCloud<S>, key: SortKey) -> TagCloud<S> {
    let mut tags = cloud.tags.clone();
    match key {
        SortKey::WeightDesc => tags.sort_by(|a, b| b.weight.cmp_total(&a.weight)),
        SortKey::TermAsc => tags.sort_by(|a, b| a.term.cmp(&b.term)),
    }
    TagCloud { tags, ..cloud.clone() }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PruneMode<S> {
    RemoveCoords(BTreeSet<Coord>),
    KeepTop(usize),
    MinWeight(S),
}

/// Drops tags according to `mode`; survivors keep their current order.
pub fn prune<S: Scalar>(cloud: &TagCloud<S>, mode: &PruneMode<S>) -> TagCloud<S> {
    let tags = match mode {
        PruneMode::RemoveCoords(set) => cloud.tags.iter().filter(|t| !set.contains(&t.coords)).cloned().collect(),
        PruneMode::MinWeight(w) => cloud.tags.iter().filter(|t| t.weight >= *w).cloned().collect(),
        PruneMode::KeepTop(n) => {
            let mut ranked: Vec<&Tag<S>> = cloud.tags.iter().collect();
            ranked.sort_by(|a, b| rank_order((&a.coords, a.weight), (&b.coords, b.weight)));
            let keep: BTreeSet<&Coord> = ranked.into_iter().take(*n).map(|t| &t.coords).collect();
            cloud.tags.iter().filter(|t| keep.contains(&t.coords)).cloned().collect()
        }
    };
    TagCloud { tags, ..cloud.clone() }
}

/// Maps weights linearly from `[w_min, w_max]` onto `[min_size, max_size]`.
/// A cloud of equal weights gets the midpoint size everywhere.
pub fn font_scale<S: Scalar>(cloud: &TagCloud<S>, min_size: S, max_size: S) -> Result<Vec<(Tag<S>, S)>, CloudError> {
    if !(min_size > S::zero() && min_size <= max_size) {
        return Err(CloudError::InvalidFontRange);
    }
    let Some(first) = cloud.tags.first() else {
        return Ok(Vec::new());
    };
    let (lo, hi) = cloud.tags.iter().fold((first.weight, first.weight), |(lo, hi), t| (lo.min_of(t.weight), hi.max_of(t.weight)));
    let two = S::one() + S::one();
    Ok(cloud
        .tags
        .iter()
        .map(|t| {
            let size = if hi == lo {
                (min_size + max_size) / two
            } else {
                min_size + (max_size - min_size) * (t.weight - lo) / (hi - lo)
            };
            (t.clone(), size)
        })
        .collect())
}

/// Weights keyed by coordinates, for comparisons in tests and reports.
pub fn weight_map<S: Scalar>(cloud: &TagCloud<S>) -> BTreeMap<Coord, S> {
    cloud.tags.iter().map(|t| (t.coords.clone(), t.weight)).collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::cube::{build_cuboid, Aggregator};
    use crate::fixtures::table2_csv;
    use crate::scalar::Rational;
    use crate::table::{define_schema, ingest_csv, FactTable, IngestOptions};

    fn by_city() -> Cuboid<f64> {
        let t: FactTable<f64> = ingest_csv(table2_csv().as_bytes(), &IngestOptions::default()).unwrap();
        let s = define_schema(&t, &["location".to_string()], &["profit".to_string()]).unwrap();
        build_cuboid(&Arc::new(t), &Arc::new(s), &["location".to_string()], &Aggregator::Count).unwrap()
    }

    fn terms<S>(c: &TagCloud<S>) -> Vec<&str> {
        c.tags().iter().map(|t| t.term.as_str()).collect()
    }

    fn cloud(pairs: &[(&str, f64)]) -> TagCloud<f64> {
        TagCloud::from_pairs("d", pairs.iter().copied())
    }

    fn rcloud(pairs: &[(&str, i64)]) -> TagCloud<Rational> {
        TagCloud::from_pairs("location", pairs.iter().map(|(k, v)| (*k, Rational::from_integer(*v))))
    }

    #[test]
    fn top_k_table2() {
        let c = by_city();
        let top = top_k(&c, 3);
        assert_eq!(terms(&top), ["Paris", "Montreal", "New York"]);
        assert_eq!(top.weights(), [3.0, 2.0, 2.0]);
        assert_eq!(top_k(&c, 50).len(), 7);
        assert!(top_k(&c, 0).is_empty());
    }

    #[test]
    fn top_k_ties_are_lexicographic() {
        let pairs = vec![(Coord::new(["c"]), 1.0), (Coord::new(["a"]), 1.0), (Coord::new(["b"]), 1.0)];
        let top = top_k_pairs(pairs, 2);
        assert_eq!(top.iter().map(|p| p.0.values()[0].as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn negative_weights_are_not_tags() {
        let pairs = vec![(Coord::new(["a"]), -1.0), (Coord::new(["b"]), 0.0)];
        assert_eq!(top_k_pairs(pairs, 5).len(), 1);
    }

    #[test]
    fn k_tag_terms_use_en_dash() {
        let t = Tag::new(Coord::new(["Canada", "March"]), 1.0);
        assert_eq!(t.term, "Canada–March");
    }

    #[test]
    fn entropy_values() {
        let uniform = cloud(&[("a", 2.0), ("b", 2.0), ("c", 2.0), ("d", 2.0)]);
        assert!((entropy(&uniform).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&cloud(&[("a", 5.0)])).unwrap(), 0.0);
        assert!((entropy(&cloud(&[("a", 3.0), ("b", 1.0)])).unwrap() - 0.5623).abs() < 1e-4);
        assert_eq!(entropy(&cloud(&[("a", 0.0)])), Err(CloudError::AllZeroWeights));
        assert_eq!(entropy(&cloud(&[])), Err(CloudError::AllZeroWeights));
        // zero-weight tags contribute nothing
        let with_zero = cloud(&[("a", 3.0), ("b", 1.0), ("c", 0.0)]);
        assert_eq!(entropy(&with_zero).unwrap(), entropy(&cloud(&[("a", 3.0), ("b", 1.0)])).unwrap());
    }

    #[test]
    fn relative_entropy_values() {
        assert!((relative_entropy(&cloud(&[("a", 1.0), ("b", 1.0), ("c", 1.0)])).unwrap() - 1.0).abs() < 1e-12);
        assert!((relative_entropy(&cloud(&[("a", 3.0), ("b", 1.0)])).unwrap() - 0.8113).abs() < 1e-4);
        let dominant = cloud(&[("a", 1e6), ("b", 1.0), ("c", 1.0), ("d", 1.0)]);
        assert!(relative_entropy(&dominant).unwrap() < 0.01);
        assert_eq!(relative_entropy(&cloud(&[("a", 1.0)])), Err(CloudError::SingletonCloud));
    }

    #[test]
    fn quality_indexes_are_exact() {
        let a = rcloud(&[("Paris", 3), ("Montreal", 2), ("Quebec", 1)]);
        let e = rcloud(&[("Paris", 3), ("Montreal", 2), ("New York", 2)]);
        assert_eq!(false_positive_index(&a, &e), Ok(Rational::new(1, 3)));
        assert_eq!(false_negative_index(&a, &e), Ok(Rational::new(2, 3)));
        assert_eq!(false_positive_index(&e, &e), Ok(Rational::from_integer(0)));
        assert_eq!(false_negative_index(&e, &e), Ok(Rational::from_integer(0)));
        let disjoint = rcloud(&[("Lyon", 1)]);
        assert_eq!(false_positive_index(&disjoint, &e), Ok(Rational::from_integer(1)));
        assert_eq!(false_negative_index(&disjoint, &e), Ok(Rational::from_integer(1)));
        assert_eq!(false_positive_index(&rcloud(&[]), &e), Err(CloudError::EmptyCloud));
        assert_eq!(false_negative_index(&rcloud(&[]), &e), Ok(Rational::from_integer(1)));
        assert_eq!(false_negative_index(&e, &rcloud(&[])), Err(CloudError::EmptyCloud));
    }

    #[test]
    fn sorting() {
        let c = cloud(&[("b", 1.0), ("a", 2.0)]);
        assert_eq!(terms(&sort_tags(&c, SortKey::TermAsc)), ["a", "b"]);
        assert_eq!(terms(&sort_tags(&c, SortKey::WeightDesc)), ["a", "b"]);
        let sorted = sort_tags(&c, SortKey::WeightDesc);
        assert_eq!(sort_tags(&sorted, SortKey::WeightDesc), sorted);
        // stable on equal weights
        let ties = cloud(&[("z", 1.0), ("y", 1.0), ("x", 2.0)]);
        assert_eq!(terms(&sort_tags(&ties, SortKey::WeightDesc)), ["x", "z", "y"]);
    }

    #[test]
    fn pruning() {
        let c = cloud(&[("Paris", 3.0), ("Montreal", 2.0), ("Quebec", 1.0)]);
        assert!(prune(&c, &PruneMode::KeepTop(0)).is_empty());
        assert_eq!(terms(&prune(&c, &PruneMode::MinWeight(2.0))), ["Paris", "Montreal"]);
        assert_eq!(prune(&c, &PruneMode::RemoveCoords(BTreeSet::new())), c);
        let gone = prune(&c, &PruneMode::RemoveCoords(BTreeSet::from([Coord::new(["Montreal"])])));
        assert_eq!(terms(&gone), ["Paris", "Quebec"]);
        let ties = cloud(&[("c", 1.0), ("b", 1.0), ("a", 1.0)]);
        assert_eq!(terms(&prune(&ties, &PruneMode::KeepTop(2))), ["b", "a"]);
    }

    #[test]
    fn font_scaling() {
        let sizes = |c: &TagCloud<f64>, lo, hi| font_scale(c, lo, hi).unwrap().into_iter().map(|p| p.1).collect::<Vec<_>>();
        assert_eq!(sizes(&cloud(&[("a", 1.0), ("b", 3.0)]), 1.0, 3.0), [1.0, 3.0]);
        assert_eq!(sizes(&cloud(&[("a", 4.0), ("b", 4.0)]), 1.0, 3.0), [2.0, 2.0]);
        assert_eq!(sizes(&cloud(&[("a", 1.0), ("b", 2.0), ("c", 3.0)]), 1.0, 3.0), [1.0, 2.0, 3.0]);
        assert_eq!(font_scale(&cloud(&[("a", 1.0)]), 3.0, 1.0), Err(CloudError::InvalidFontRange));
        assert_eq!(font_scale(&cloud(&[("a", 1.0)]), 0.0, 1.0), Err(CloudError::InvalidFontRange));
    }
}
