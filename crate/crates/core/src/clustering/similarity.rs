//! Tag feature vectors and the similarity measures between them.
//!
//! A tag's vector is its subcuboid: the cuboid over tag dimensions plus the
//! user's clustering dimensions, sliced at the tag's coordinates. Vectors of
//! different tags are aligned on the union of their keys, missing entries
//! counting as zero.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{aggregate_facts, check_aggregator, resolve_levels, Aggregator, Cell, Coord, CubeError};
use crate::iceberg::{resolve_filters, FilterSpec, IcebergCuboid, QueryError};
use crate::scalar::{Real, Scalar};
use crate::table::{FactTable, Schema};
use crate::tagcloud::Tag;

#[derive(Debug, Clone, PartialEq)]
pub struct TagVector<S> {
    pub coords: Coord,
    pub entries: BTreeMap<Coord, S>,
}

impl<S: Scalar> TagVector<S> {
    pub fn new(coords: Coord, entries: BTreeMap<Coord, S>) -> Self {
        Self { coords, entries }
    }

    /// Keys holding a nonzero value.
    pub fn support(&self) -> BTreeSet<&Coord> {
        self.entries.iter().filter(|(_, v)| !v.is_zero()).map(|(k, _)| k).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|v| v.is_zero())
    }

    fn squared_norm(&self) -> S {
        self.entries.values().fold(S::zero(), |acc, v| acc + *v * *v)
    }

    fn dot(&self, other: &TagVector<S>) -> S {
        let (small, large) =
            if self.entries.len() <= other.entries.len() { (self, other) } else { (other, self) };
        small
            .entries
            .iter()
            .filter_map(|(k, v)| large.entries.get(k).map(|w| *v * *w))
            .fold(S::zero(), |acc, x| acc + x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    Cosine,
    Tanimoto,
    Jaccard,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("similarity undefined for a zero vector")]
    ZeroVector,
    #[error("both vectors have empty support")]
    BothEmpty,
    #[error("clustering dimension `{0}` is also a tag dimension")]
    OverlappingDims(String),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("similarity matrix is malformed: {0}")]
    Malformed(String),
}

impl From<CubeError> for SimilarityError {
    fn from(e: CubeError) -> Self {
        SimilarityError::Query(e.into())
    }
}

pub fn cosine<S: Real>(u: &TagVector<S>, v: &TagVector<S>) -> Result<S, SimilarityError> {
    let (nu, nv) = (u.squared_norm(), v.squared_norm());
    if nu.is_zero() || nv.is_zero() {
        return Err(SimilarityError::ZeroVector);
    }
    let c = u.dot(v) / (nu * nv).sqrt();
    Ok(c.max(-S::one()).min(S::one()))
}

/// `u.v / (|u|^2 + |v|^2 - u.v)`. Exact for rational scalars.
pub fn tanimoto<S: Scalar>(u: &TagVector<S>, v: &TagVector<S>) -> Result<S, SimilarityError> {
    let (nu, nv) = (u.squared_norm(), v.squared_norm());
    if nu.is_zero() || nv.is_zero() {
        return Err(SimilarityError::ZeroVector);
    }
    let dot = u.dot(v);
    Ok(dot / (nu + nv - dot))
}

/// `|supp u ∩ supp v| / |supp u ∪ supp v|`.
pub fn jaccard<S: Scalar>(u: &TagVector<S>, v: &TagVector<S>) -> Result<S, SimilarityError> {
    let (su, sv) = (u.support(), v.support());
    let union = su.union(&sv).count();
    if union == 0 {
        return Err(SimilarityError::BothEmpty);
    }
    Ok(S::from_index(su.intersection(&sv).count()) / S::from_index(union))
}

pub fn similarity<S: Real>(kind: SimilarityKind, u: &TagVector<S>, v: &TagVector<S>) -> Result<S, SimilarityError> {
    match kind {
        SimilarityKind::Cosine => cosine(u, v),
        SimilarityKind::Tanimoto => tanimoto(u, v),
        SimilarityKind::Jaccard => jaccard(u, v),
    }
}

/// Where subcuboids are read from.
#[derive(Debug, Clone, Copy)]
pub enum VectorSource<'a, S> {
    /// Every fact, exactly.
    Facts { table: &'a FactTable<S>, schema: &'a Schema, aggregator: &'a Aggregator },
    /// The retained cells of an iceberg.
    Iceberg(&'a IcebergCuboid<S>),
}

/// Builds one vector per entry of `tags` (coordinates over `tag_dims`).
/// Tags with no matching cells get an empty vector.
pub fn tag_vectors<S: Scalar>(
    source: VectorSource<'_, S>,
    tag_dims: &[String],
    clustering_dims: &[String],
    filters: &[FilterSpec],
    tags: &[Coord],
) -> Result<Vec<TagVector<S>>, SimilarityError> {
    if let Some(d) = clustering_dims.iter().find(|d| tag_dims.contains(d)) {
        return Err(SimilarityError::OverlappingDims(d.clone()));
    }
    let dims: Vec<String> = tag_dims.iter().chain(clustering_dims).cloned().collect();
    let schema = match source {
        VectorSource::Facts { schema, .. } => schema,
        VectorSource::Iceberg(ice) => ice.schema().as_ref(),
    };
    let levels = resolve_levels(schema, &dims)?;
    let filters = resolve_filters(schema, filters, &dims)?;
    let cells: BTreeMap<Coord, Cell<S>> = match source {
        VectorSource::Facts { table, schema, aggregator } => {
            check_aggregator(schema, aggregator)?;
            aggregate_facts(table, &levels, &filters, aggregator)?
        }
        VectorSource::Iceberg(ice) => ice.regroup(&levels, &filters)?,
    };

    let split = tag_dims.len();
    let mut by_tag: BTreeMap<&[String], BTreeMap<Coord, S>> = BTreeMap::new();
    for (coord, cell) in &cells {
        let (tag_part, rest) = coord.values().split_at(split);
        by_tag.entry(tag_part).or_default().insert(Coord(rest.to_vec()), cell.value());
    }
    Ok(tags
        .iter()
        .map(|t| TagVector { coords: t.clone(), entries: by_tag.get(t.values()).cloned().unwrap_or_default() })
        .collect())
}

/// Vector of a single tag computed from every fact.
pub fn tag_vector<S: Scalar>(
    table: &FactTable<S>,
    schema: &Schema,
    tag: &Coord,
    tag_dims: &[String],
    clustering_dims: &[String],
    aggregator: &Aggregator,
) -> Result<TagVector<S>, SimilarityError> {
    let source = VectorSource::Facts { table, schema, aggregator };
    let mut v = tag_vectors(source, tag_dims, clustering_dims, &[], std::slice::from_ref(tag))?;
    Ok(v.pop().expect("one vector per tag"))
}

/// Symmetric matrix of pairwise tag similarities with a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<S> {
    tags: Vec<Tag<S>>,
    values: Vec<S>,
    kind: Option<SimilarityKind>,
}

impl<S: Scalar> SimilarityMatrix<S> {
    /// Wraps explicit row-major values. Checks shape, symmetry, the unit
    /// diagonal and the `[-1, 1]` range.
    pub fn from_values(tags: Vec<Tag<S>>, values: Vec<S>) -> Result<Self, SimilarityError> {
        let n = tags.len();
        if values.len() != n * n {
            return Err(SimilarityError::Malformed(format!("expected {} values, got {}", n * n, values.len())));
        }
        let one = S::one();
        for i in 0..n {
            if values[i * n + i] != one {
                return Err(SimilarityError::Malformed(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if v != values[j * n + i] {
                    return Err(SimilarityError::Malformed(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
                if v > one || v < S::zero() - one {
                    return Err(SimilarityError::Malformed(format!("entry ({i},{j}) outside [-1, 1]")));
                }
            }
        }
        Ok(Self { tags, values, kind: None })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Tag<S>] {
        &self.tags
    }

    pub fn kind(&self) -> Option<SimilarityKind> {
        self.kind
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.values[i * self.tags.len() + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        let n = self.tags.len();
        &self.values[i * n..(i + 1) * n]
    }
}

/// Pairwise similarities of aligned `(tag, vector)` lists. A zero vector is
/// similar only to itself.
pub fn matrix_from_vectors<S: Real>(
    tags: Vec<Tag<S>>,
    vectors: &[TagVector<S>],
    kind: SimilarityKind,
) -> SimilarityMatrix<S> {
    let n = tags.len();
    assert_eq!(n, vectors.len(), "one vector per tag");
    let mut values = vec![S::zero(); n * n];
    for i in 0..n {
        values[i * n + i] = S::one();
        for j in (i + 1)..n {
            let s = similarity(kind, &vectors[i], &vectors[j]).unwrap_or_else(|_| S::zero());
            values[i * n + j] = s;
            values[j * n + i] = s;
        }
    }
    SimilarityMatrix { tags, values, kind: Some(kind) }
}

/// Similarity matrix of the tags of a cloud over `tag_dims`.
pub fn similarity_matrix<S: Real>(
    source: VectorSource<'_, S>,
    tags: &[Tag<S>],
    tag_dims: &[String],
    clustering_dims: &[String],
    filters: &[FilterSpec],
    kind: SimilarityKind,
) -> Result<SimilarityMatrix<S>, SimilarityError> {
    let coords: Vec<Coord> = tags.iter().map(|t| t.coords.clone()).collect();
    let vectors = tag_vectors(source, tag_dims, clustering_dims, filters, &coords)?;
    Ok(matrix_from_vectors(tags.to_vec(), &vectors, kind))
}
