//! Linear arrangement of tags.
//!
//! Tags are sent to the browser as a list in which neighbours should be
//! similar. The cost of an order is `Σ_{p<q} w(p,q)·|pos(p) − pos(q)|`;
//! minimizing it is NP-complete, so the engine ships greedy chaining (NN),
//! two Monte Carlo refinements (pairwise exchange and block rotation), and an
//! exhaustive search used as an oracle on tiny inputs.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::similarity::SimilarityMatrix;
use crate::scalar::Scalar;
use crate::tagcloud::Tag;

/// Largest input accepted by [`brute_force_order`].
pub const BRUTE_FORCE_MAX: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("order covers {order} tags but the matrix has {matrix}")]
    PermutationMismatch { order: usize, matrix: usize },
    #[error("not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("exhaustive search is limited to {BRUTE_FORCE_MAX} tags, got {0}")]
    TooLarge(usize),
}

/// Tag indices in display order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayoutOrder {
    sequence: Vec<usize>,
}

impl LayoutOrder {
    pub fn new(sequence: Vec<usize>) -> Result<Self, LayoutError> {
        let n = sequence.len();
        let mut seen = vec![false; n];
        for &i in &sequence {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(LayoutError::NotAPermutation(n));
            }
        }
        Ok(Self { sequence })
    }

    pub fn identity(n: usize) -> Self {
        Self { sequence: (0..n).collect() }
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// `positions()[tag] = index of tag in the list`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.sequence.len()];
        for (p, &t) in self.sequence.iter().enumerate() {
            pos[t] = p;
        }
        pos
    }

    pub fn reversed(&self) -> Self {
        Self { sequence: self.sequence.iter().rev().copied().collect() }
    }
}

fn check<S>(order: &LayoutOrder, m: &SimilarityMatrix<S>) -> Result<(), LayoutError>
where
    S: Scalar,
{
    if order.len() != m.len() {
        return Err(LayoutError::PermutationMismatch { order: order.len(), matrix: m.len() });
    }
    Ok(())
}

fn sequence_cost<S: Scalar>(seq: &[usize], m: &SimilarityMatrix<S>) -> S {
    let mut cost = S::zero();
    for p in 0..seq.len() {
        for q in (p + 1)..seq.len() {
            cost = cost + m.get(seq[p], seq[q]) * S::from_index(q - p);
        }
    }
    cost
}

/// Sum over unordered pairs of similarity times index distance.
pub fn mla_cost<S: Scalar>(order: &LayoutOrder, m: &SimilarityMatrix<S>) -> Result<S, LayoutError> {
    check(order, m)?;
    Ok(sequence_cost(&order.sequence, m))
}

/// Fraction of `baseline`'s cost removed by `improved`; 0 when the baseline
/// costs nothing.
pub fn mla_gain<S: Scalar>(baseline: S, improved: S) -> S {
    if baseline <= S::zero() {
        S::zero()
    } else {
        (baseline - improved) / baseline
    }
}

/// How the greedy chain picks its first tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NnStart {
    /// The heaviest tag, ties to the smallest coordinates.
    #[default]
    Heaviest,
    /// A tag drawn uniformly with this seed.
    Seeded(u64),
    /// An explicit tag index.
    Index(usize),
}

fn start_index<S: Scalar>(tags: &[Tag<S>], start: NnStart) -> usize {
    let n = tags.len();
    match start {
        NnStart::Index(i) => i.min(n - 1),
        NnStart::Seeded(seed) => ChaCha8Rng::seed_from_u64(seed).random_range(0..n),
        NnStart::Heaviest => (0..n)
            .min_by(|&a, &b| tags[b].weight.cmp_total(&tags[a].weight).then_with(|| tags[a].coords.cmp(&tags[b].coords)))
            .expect("non-empty"),
    }
}

/// Greedy chain: repeatedly append the remaining tag most similar to the
/// last one. Similarity ties go to the smaller coordinates.
pub fn nn_order<S: Scalar>(m: &SimilarityMatrix<S>, start: NnStart) -> LayoutOrder {
    nn_order_counted(m, start).0
}

/// [`nn_order`] plus the number of similarity lookups it performed.
pub fn nn_order_counted<S: Scalar>(m: &SimilarityMatrix<S>, start: NnStart) -> (LayoutOrder, u64) {
    let n = m.len();
    if n == 0 {
        return (LayoutOrder::identity(0), 0);
    }
    let tags = m.tags();
    let mut lookups = 0u64;
    let mut remaining: Vec<usize> = (0..n).collect();
    remaining.sort_by(|&a, &b| tags[a].coords.cmp(&tags[b].coords));
    let first = start_index(tags, start);
    remaining.retain(|&i| i != first);
    let mut sequence = Vec::with_capacity(n);
    sequence.push(first);
    while !remaining.is_empty() {
        let last = *sequence.last().expect("non-empty");
        let row = m.row(last);
        // `remaining` is sorted by coordinates, so the first maximum wins ties.
        let mut best = 0;
        for (slot, &cand) in remaining.iter().enumerate() {
            lookups += 1;
            if slot > 0 && row[cand].cmp_total(&row[remaining[best]]) == Ordering::Greater {
                best = slot;
            }
        }
        sequence.push(remaining.remove(best));
    }
    (LayoutOrder { sequence }, lookups)
}

fn accepts<S: Scalar>(delta: S, cost: S) -> bool {
    let scale = cost.abs_value().max_of(S::one());
    delta < S::zero() - S::tolerance() * scale
}

/// Pairwise-exchange Monte Carlo: `exchanges` proposals, each swapping two
/// uniformly drawn positions and kept only when it lowers the cost.
pub fn pwmc_order<S: Scalar>(
    start: &LayoutOrder,
    m: &SimilarityMatrix<S>,
    exchanges: usize,
    seed: u64,
) -> Result<LayoutOrder, LayoutError> {
    check(start, m)?;
    let n = m.len();
    let mut seq = start.sequence.clone();
    if n < 2 {
        return Ok(LayoutOrder { sequence: seq });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cost = sequence_cost(&seq, m);
    for _ in 0..exchanges {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let (a, b) = (seq[i], seq[j]);
        let (row_a, row_b) = (m.row(a), m.row(b));
        let mut delta = S::zero();
        for (p, &t) in seq.iter().enumerate() {
            if p == i || p == j {
                continue;
            }
            // a moves from i to j and b from j to i
            let shift = S::from_index(p.abs_diff(j)) - S::from_index(p.abs_diff(i));
            delta = delta + (row_a[t] - row_b[t]) * shift;
        }
        if accepts(delta, cost) {
            seq.swap(i, j);
            cost = cost + delta;
        }
    }
    Ok(LayoutOrder { sequence: seq })
}

/// Block Monte Carlo: `iterations` proposals, each cutting the list at a
/// uniform position and exchanging the two blocks, kept only when it lowers
/// the cost.
pub fn mc_order<S: Scalar>(
    start: &LayoutOrder,
    m: &SimilarityMatrix<S>,
    iterations: usize,
    seed: u64,
) -> Result<LayoutOrder, LayoutError> {
    check(start, m)?;
    let n = m.len();
    let mut seq = start.sequence.clone();
    if n < 2 {
        return Ok(LayoutOrder { sequence: seq });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cost = sequence_cost(&seq, m);
    let len = S::from_index(n);
    let two = S::one() + S::one();
    for _ in 0..iterations {
        let cut = rng.random_range(1..n);
        // Only pairs straddling the cut change distance: q - p becomes p + n - q.
        let mut delta = S::zero();
        for p in 0..cut {
            let row = m.row(seq[p]);
            for q in cut..n {
                let change = two * S::from_index(p) + len - two * S::from_index(q);
                delta = delta + row[seq[q]] * change;
            }
        }
        if accepts(delta, cost) {
            seq.rotate_left(cut);
            cost = cost + delta;
        }
    }
    Ok(LayoutOrder { sequence: seq })
}

/// Exhaustive minimum over all orders, skipping mirror images (reversal
/// keeps the cost). Ties go to the lexicographically first sequence.
pub fn brute_force_order<S: Scalar>(m: &SimilarityMatrix<S>) -> Result<LayoutOrder, LayoutError> {
    let n = m.len();
    if n > BRUTE_FORCE_MAX {
        return Err(LayoutError::TooLarge(n));
    }
    let mut seq: Vec<usize> = (0..n).collect();
    let mut best = seq.clone();
    let mut best_cost = sequence_cost(&seq, m);
    while next_permutation(&mut seq) {
        if n >= 2 && seq[0] > seq[n - 1] {
            continue;
        }
        let c = sequence_cost(&seq, m);
        if c < best_cost {
            best_cost = c;
            best.clone_from(&seq);
        }
    }
    Ok(LayoutOrder { sequence: best })
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// One element of the ordered list sent to clients.
#[derive(Debug, Clone, PartialEq)]
pub enum HintItem<T> {
    Tag(T),
    /// The neighbours must stay close.
    Glued,
    /// The neighbours may be swapped. Part of the grammar; never emitted.
    Permutable,
}

impl<T> HintItem<T> {
    pub fn as_tag(&self) -> Option<&T> {
        match self {
            HintItem::Tag(t) => Some(t),
            _ => None,
        }
    }
}

/// Lists tags in `order`, inserting a GLUED token between neighbours whose
/// similarity is at least `glue_threshold`.
pub fn emit_hints<S: Scalar>(
    order: &LayoutOrder,
    m: &SimilarityMatrix<S>,
    glue_threshold: S,
) -> Result<Vec<HintItem<Tag<S>>>, LayoutError> {
    check(order, m)?;
    let mut out = Vec::with_capacity(order.len() * 2);
    for (p, &t) in order.sequence.iter().enumerate() {
        if p > 0 && m.get(order.sequence[p - 1], t) >= glue_threshold {
            out.push(HintItem::Glued);
        }
        out.push(HintItem::Tag(m.tags()[t].clone()));
    }
    Ok(out)
}
