//! Random fact tables and naive reference implementations used as oracles.
//!
//! Nothing here calls into the engine's aggregation code: group-bys are a
//! linear scan of the rows against a linear list of keys, and the metric
//! formulas are evaluated directly.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_rational::Ratio;
use rand::Rng;
use tagcube::{define_schema, ingest_csv, Coord, FactTable, IngestOptions, Rational, Scalar, Schema};

/// Row-oriented table with integer measures. `m0` may be negative, `m1`
/// never is.
#[derive(Debug, Clone)]
pub struct RandomTable {
    pub dims: Vec<String>,
    pub measures: [String; 2],
    pub cardinalities: Vec<usize>,
    pub rows: Vec<(Vec<String>, [i64; 2])>,
    /// Per dimension, child value to parent value.
    pub parents: Vec<BTreeMap<String, String>>,
    pub parent_names: Vec<String>,
}

pub fn parent_name(dim: &str) -> String {
    format!("{dim}_parent")
}

pub fn value_name(dim: usize, value: usize) -> String {
    format!("d{dim}v{value}")
}

impl RandomTable {
    pub fn generate<R: Rng>(rng: &mut R, max_rows: usize, max_dims: usize, max_card: usize) -> Self {
        let n_dims = rng.random_range(1..=max_dims);
        let n_rows = rng.random_range(1..=max_rows);
        let dims: Vec<String> = (0..n_dims).map(|d| format!("d{d}")).collect();
        let cardinalities: Vec<usize> = (0..n_dims).map(|_| rng.random_range(1..=max_card)).collect();
        let rows = (0..n_rows)
            .map(|_| {
                let coords = cardinalities
                    .iter()
                    .enumerate()
                    .map(|(d, &c)| value_name(d, rng.random_range(0..c)))
                    .collect();
                (coords, [rng.random_range(-50..=100), rng.random_range(0..=100)])
            })
            .collect();
        let parents = cardinalities
            .iter()
            .enumerate()
            .map(|(d, &c)| {
                let groups = rng.random_range(1..=c);
                (0..c).map(|v| (value_name(d, v), format!("d{d}p{}", v % groups))).collect()
            })
            .collect();
        let parent_names = dims.iter().map(|d| parent_name(d)).collect();
        Self { dims, measures: ["m0".into(), "m1".into()], cardinalities, rows, parents, parent_names }
    }

    /// The sales fixture, parsed by hand, with cities mapped to countries.
    pub fn table2() -> Self {
        let mut lines = tagcube::fixtures::table2_csv().lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let rows: Vec<(Vec<String>, [i64; 2])> = lines
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[..4].iter().map(|s| s.to_string()).collect(), [f[4].parse().unwrap(), f[5].parse().unwrap()])
            })
            .collect();
        let mut parents = vec![BTreeMap::new(); 4];
        parents[0] = tagcube::fixtures::city_country_mapping();
        for (d, p) in parents.iter_mut().enumerate().skip(1) {
            *p = rows.iter().map(|r| (r.0[d].clone(), r.0[d].clone())).collect();
        }
        Self {
            dims: header[..4].iter().map(|s| s.to_string()).collect(),
            measures: [header[4].to_owned(), header[5].to_owned()],
            cardinalities: (0..4).map(|d| rows.iter().map(|r| &r.0[d]).collect::<BTreeSet<_>>().len()).collect(),
            rows,
            parents,
            parent_names: ["Country", "time_parent", "salesman_parent", "product_parent"].map(String::from).to_vec(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.dims.join(",");
        out.push_str(&format!(",{},{}\n", self.measures[0], self.measures[1]));
        for (coords, m) in &self.rows {
            out.push_str(&coords.join(","));
            out.push_str(&format!(",{},{}\n", m[0], m[1]));
        }
        out
    }

    /// Ingests through CSV and attaches one hierarchy per dimension.
    pub fn load<S: Scalar>(&self) -> (Arc<FactTable<S>>, Arc<Schema>) {
        let table: FactTable<S> = ingest_csv(self.to_csv().as_bytes(), &IngestOptions::default()).expect("ingest");
        let mut schema =
            define_schema(&table, &self.dims, &self.measures).expect("schema");
        for (d, dim) in self.dims.iter().enumerate() {
            // Only values that occur need covering.
            let present: BTreeSet<&String> = self.rows.iter().map(|r| &r.0[d]).collect();
            let mapping = self.parents[d]
                .iter()
                .filter(|(k, _)| present.contains(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            schema = schema.attach_hierarchy(&table, dim, &self.parent_names[d], mapping).expect("hierarchy");
        }
        (Arc::new(table), Arc::new(schema))
    }

    pub fn dim_index(&self, name: &str) -> usize {
        self.dims.iter().position(|d| d == name).expect("known dim")
    }

    /// Distinct values of a dimension that occur in the rows, sorted.
    pub fn present_values(&self, d: usize) -> Vec<String> {
        let set: BTreeSet<&String> = self.rows.iter().map(|r| &r.0[d]).collect();
        set.into_iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleAgg {
    Count,
    Sum(usize),
    Average(usize),
    Min(usize),
    Max(usize),
}

impl OracleAgg {
    pub fn all() -> Vec<OracleAgg> {
        let mut v = vec![OracleAgg::Count];
        for m in 0..2 {
            v.extend([OracleAgg::Sum(m), OracleAgg::Average(m), OracleAgg::Min(m), OracleAgg::Max(m)]);
        }
        v
    }

    pub fn engine(self, t: &RandomTable) -> tagcube::Aggregator {
        let name = |m: usize| t.measures[m].clone();
        match self {
            OracleAgg::Count => tagcube::Aggregator::Count,
            OracleAgg::Sum(m) => tagcube::Aggregator::Sum(name(m)),
            OracleAgg::Average(m) => tagcube::Aggregator::Average(name(m)),
            OracleAgg::Min(m) => tagcube::Aggregator::Min(name(m)),
            OracleAgg::Max(m) => tagcube::Aggregator::Max(name(m)),
        }
    }
}

/// A grouping key component: a dimension, optionally mapped to its parent.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub dim: usize,
    pub rolled: bool,
}

impl Key {
    pub fn base(dim: usize) -> Self {
        Key { dim, rolled: false }
    }

    pub fn parent(dim: usize) -> Self {
        Key { dim, rolled: true }
    }
}

/// Row predicate: the (possibly rolled) value of `key` must be in `values`.
#[derive(Debug, Clone)]
pub struct Pred {
    pub key: Key,
    pub values: BTreeSet<String>,
}

fn key_value(t: &RandomTable, row: &[String], key: Key) -> String {
    let v = &row[key.dim];
    if key.rolled {
        t.parents[key.dim][v].clone()
    } else {
        v.clone()
    }
}

/// Nested-loop group-by with exact rational results.
pub fn group_by(t: &RandomTable, keys: &[Key], preds: &[Pred], agg: OracleAgg) -> BTreeMap<Vec<String>, Rational> {
    let mut groups: Vec<(Vec<String>, Vec<i64>)> = Vec::new();
    for (row, m) in &t.rows {
        if !preds.iter().all(|p| p.values.contains(&key_value(t, row, p.key))) {
            continue;
        }
        let k: Vec<String> = keys.iter().map(|&key| key_value(t, row, key)).collect();
        let measure = match agg {
            OracleAgg::Count => 1,
            OracleAgg::Sum(i) | OracleAgg::Average(i) | OracleAgg::Min(i) | OracleAgg::Max(i) => m[i],
        };
        let mut found = false;
        for g in groups.iter_mut() {
            if g.0 == k {
                g.1.push(measure);
                found = true;
                break;
            }
        }
        if !found {
            groups.push((k, vec![measure]));
        }
    }
    groups
        .into_iter()
        .map(|(k, ms)| {
            let v = match agg {
                OracleAgg::Count => Ratio::from_integer(ms.len() as i64),
                OracleAgg::Sum(_) => Ratio::from_integer(ms.iter().sum()),
                OracleAgg::Average(_) => Ratio::new(ms.iter().sum(), ms.len() as i64),
                OracleAgg::Min(_) => Ratio::from_integer(*ms.iter().min().unwrap()),
                OracleAgg::Max(_) => Ratio::from_integer(*ms.iter().max().unwrap()),
            };
            (k, v)
        })
        .collect()
}

/// Engine cell values keyed by plain vectors, for comparison with [`group_by`].
pub fn engine_values(values: BTreeMap<Coord, Rational>) -> BTreeMap<Vec<String>, Rational> {
    values.into_iter().map(|(c, v)| (c.0, v)).collect()
}

/// Reference top-k: sort by weight descending then coordinates ascending.
pub fn top_k(cells: &BTreeMap<Vec<String>, Rational>, k: usize) -> Vec<(Vec<String>, Rational)> {
    let mut v: Vec<(Vec<String>, Rational)> =
        cells.iter().filter(|(_, w)| **w >= Ratio::from_integer(0)).map(|(c, w)| (c.clone(), *w)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

pub fn entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    -weights.iter().filter(|&&w| w > 0.0).map(|&w| (w / total) * (w / total).ln()).sum::<f64>()
}

/// Heaviest weight in `a` whose key is absent from `b`, over the heaviest in `a`.
pub fn false_index(a: &[(Vec<String>, Rational)], b: &[(Vec<String>, Rational)]) -> Rational {
    let max = a.iter().map(|x| x.1).max().unwrap();
    let missing = a.iter().filter(|x| !b.iter().any(|y| y.0 == x.0)).map(|x| x.1).max();
    missing.map_or(Ratio::from_integer(0), |w| w / max)
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}

/// Minimum arrangement cost over every permutation.
pub fn brute_force_cost(w: &[Vec<f64>]) -> f64 {
    fn go(w: &[Vec<f64>], seq: &mut Vec<usize>, used: &mut [bool], best: &mut f64) {
        let n = w.len();
        if seq.len() == n {
            let mut c = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    c += w[seq[p]][seq[q]] * (q - p) as f64;
                }
            }
            *best = best.min(c);
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                seq.push(i);
                go(w, seq, used, best);
                seq.pop();
                used[i] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(w, &mut Vec::new(), &mut vec![false; w.len()], &mut best);
    best
}

fn as_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn compare<S: Scalar>(
    what: &str,
    engine: BTreeMap<Coord, S>,
    oracle: &BTreeMap<Vec<String>, Rational>,
    conv: impl Fn(Rational) -> S,
) -> Result<(), String> {
    let expected: BTreeMap<Coord, S> = oracle.iter().map(|(k, v)| (Coord(k.clone()), conv(*v))).collect();
    if engine == expected {
        Ok(())
    } else {
        Err(format!("{what}: engine {engine:?} != oracle {expected:?}"))
    }
}

fn pick<'a, R: Rng, T>(rng: &mut R, v: &'a [T]) -> &'a T {
    &v[rng.random_range(0..v.len())]
}

/// Runs build, slice, dice, roll-up and drill-down for every aggregator on
/// random arguments and compares each result with the oracle. Returns the
/// number of comparisons made.
pub fn check_operations<S: Scalar, R: Rng>(
    t: &RandomTable,
    rng: &mut R,
    conv: impl Fn(Rational) -> S + Copy,
) -> Result<usize, String> {
    use tagcube::{build_cuboid, dice, drilldown, rollup, slice};

    let (table, schema) = t.load::<S>();
    let mut checks = 0;
    for agg in OracleAgg::all() {
        let engine_agg = agg.engine(t);
        let mut order: Vec<usize> = (0..t.dims.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        order.truncate(rng.random_range(1..=t.dims.len()));
        let names: Vec<String> = order.iter().map(|&d| t.dims[d].clone()).collect();
        let keys: Vec<Key> = order.iter().map(|&d| Key::base(d)).collect();
        let ctx = |op: &str| format!("{op} {agg:?} over {names:?}");

        let cuboid = build_cuboid(&table, &schema, &names, &engine_agg).map_err(|e| format!("{e}"))?;
        compare(&ctx("build"), cuboid.values(), &group_by(t, &keys, &[], agg), conv)?;
        checks += 1;

        // slice on a present or absent value
        let pos = rng.random_range(0..order.len());
        let d = order[pos];
        let value = if rng.random_bool(0.8) { pick(rng, &t.present_values(d)).clone() } else { "absent".to_owned() };
        let sliced = slice(&cuboid, &t.dims[d], &value).map_err(|e| format!("{e}"))?;
        let mut rest = keys.clone();
        rest.remove(pos);
        let pred = Pred { key: Key::base(d), values: BTreeSet::from([value.clone()]) };
        compare(&ctx(&format!("slice {}={value}", t.dims[d])), sliced.values(), &group_by(t, &rest, &[pred], agg), conv)?;
        checks += 1;

        // dice on a random subset
        let pos = rng.random_range(0..order.len());
        let d = order[pos];
        let mut values: BTreeSet<String> =
            t.present_values(d).into_iter().filter(|_| rng.random_bool(0.5)).collect();
        if values.is_empty() || rng.random_bool(0.1) {
            values.insert("absent".to_owned());
        }
        let diced = dice(&cuboid, &t.dims[d], &values).map_err(|e| format!("{e}"))?;
        let dice_pred = Pred { key: Key::base(d), values: values.clone() };
        compare(&ctx("dice"), diced.values(), &group_by(t, &keys, std::slice::from_ref(&dice_pred), agg), conv)?;
        checks += 1;

        // roll-up of the plain cuboid and of the diced one, then back down
        let pos = rng.random_range(0..order.len());
        let d = order[pos];
        let h = schema.hierarchy_for(&t.dims[d], &t.parent_names[d]).expect("attached").clone();
        let mut rolled_keys = keys.clone();
        rolled_keys[pos] = Key::parent(d);
        let rolled = rollup(&cuboid, &t.dims[d], &h).map_err(|e| format!("{e}"))?;
        compare(&ctx("rollup"), rolled.values(), &group_by(t, &rolled_keys, &[], agg), conv)?;
        let down = drilldown(&rolled, &t.parent_names[d], &h).map_err(|e| format!("{e}"))?;
        compare(&ctx("drilldown"), down.values(), &group_by(t, &keys, &[], agg), conv)?;
        let rolled_diced = rollup(&diced, &t.dims[d], &h).map_err(|e| format!("{e}"))?;
        compare(
            &ctx("rollup after dice"),
            rolled_diced.values(),
            &group_by(t, &rolled_keys, std::slice::from_ref(&dice_pred), agg),
            conv,
        )?;
        let down_diced = drilldown(&rolled_diced, &t.parent_names[d], &h).map_err(|e| format!("{e}"))?;
        compare(&ctx("drilldown after dice"), down_diced.values(), &group_by(t, &keys, &[dice_pred], agg), conv)?;
        checks += 4;

        // grouping directly by the parent level
        let mut level_names = names.clone();
        level_names[pos] = t.parent_names[d].clone();
        let direct = build_cuboid(&table, &schema, &level_names, &engine_agg).map_err(|e| format!("{e}"))?;
        compare(&ctx("build at parent level"), direct.values(), &group_by(t, &rolled_keys, &[], agg), conv)?;
        checks += 1;
    }
    Ok(checks)
}

pub fn exact(r: Rational) -> Rational {
    r
}

pub fn to_f64(r: Rational) -> f64 {
    as_f64(r)
}

/// A random top-k query over the table's base dimensions and hierarchy
/// levels, with up to two filters.
pub fn random_query<R: Rng>(t: &RandomTable, rng: &mut R) -> tagcube::CloudQuery {
    use tagcube::{CloudQuery, FilterSpec};

    let n = t.dims.len();
    let mut group = Vec::new();
    let mut grouped_dims = Vec::new();
    for d in 0..n {
        if rng.random_bool(0.5) {
            group.push(if rng.random_bool(0.3) { t.parent_names[d].clone() } else { t.dims[d].clone() });
            grouped_dims.push(d);
        }
    }
    if group.is_empty() {
        let d = rng.random_range(0..n);
        group.push(t.dims[d].clone());
        grouped_dims.push(d);
    }
    let mut q = CloudQuery::group_by(group.clone(), rng.random_range(1..=20));
    for _ in 0..rng.random_range(0..=2) {
        let d = rng.random_range(0..n);
        let present = t.present_values(d);
        if !group.contains(&t.dims[d]) && rng.random_bool(0.5) {
            q = q.with_filter(FilterSpec::slice(&t.dims[d], &present[rng.random_range(0..present.len())]));
        } else if rng.random_bool(0.3) {
            let parents: BTreeSet<&String> = present.iter().map(|v| &t.parents[d][v]).collect();
            let values: Vec<&String> = parents.into_iter().filter(|_| rng.random_bool(0.5)).collect();
            let values = if values.is_empty() { vec![&t.parents[d][&present[0]]] } else { values };
            q = q.with_filter(FilterSpec::dice(&t.parent_names[d], values.into_iter().cloned()));
        } else {
            let values: Vec<String> = present.into_iter().filter(|_| rng.random_bool(0.5)).chain(["absent".to_owned()]).collect();
            q = q.with_filter(FilterSpec::dice(&t.dims[d], values));
        }
    }
    q
}

/// Symmetric matrix with uniform off-diagonal entries in `[0, 1)`, returned
/// both as an engine matrix and as plain rows.
#[allow(clippy::needless_range_loop)]
pub fn random_matrix<R: Rng>(rng: &mut R, n: usize) -> (tagcube::SimilarityMatrix<f64>, Vec<Vec<f64>>) {
    let mut w = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rng.random();
            w[i][j] = v;
            w[j][i] = v;
        }
    }
    let tags = (0..n).map(|i| tagcube::Tag::new(Coord::new([format!("t{i:03}")]), (n - i) as f64)).collect();
    let m = tagcube::SimilarityMatrix::from_values(tags, w.concat()).expect("valid matrix");
    (m, w)
}

/// Arrangement cost evaluated directly from plain rows.
pub fn arrangement_cost(w: &[Vec<f64>], seq: &[usize]) -> f64 {
    let mut c = 0.0;
    for p in 0..seq.len() {
        for q in p + 1..seq.len() {
            c += w[seq[p]][seq[q]] * (q - p) as f64;
        }
    }
    c
}
