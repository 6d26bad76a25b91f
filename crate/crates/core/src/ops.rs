//! TensorLog operators: one 0/1 adjacency matrix per predicate plus the
//! identity, stored row-major, and the vector-times-operator products used by
//! path counting, the indicators and the model.
//!
//! Operator index 0 is the identity; predicate `p` lives at index `p + 1`.

use std::fmt;

use crate::kg::{KnowledgeGraph, Triple};

/// Compressed sparse rows of a 0/1 matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Csr {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Csr {
    fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in pairs {
            rows[i].push(j);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            indices.extend(r);
            offsets.push(indices.len());
        }
        Csr { offsets, indices }
    }

    #[inline]
    fn row(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// A TensorLog operator `M_p` (or the identity).
#[derive(Clone, Debug)]
pub struct Operator {
    /// `None` for the identity.
    predicate: Option<usize>,
    rows: Csr,
    cols: Csr,
}

impl Operator {
    pub fn identity(n: usize) -> Self {
        let rows = Csr::from_pairs(n, (0..n).map(|i| (i, i)));
        Operator {
            predicate: None,
            cols: rows.clone(),
            rows,
        }
    }

    pub fn from_edges(n: usize, predicate: usize, edges: &[(usize, usize)]) -> Self {
        Operator {
            predicate: Some(predicate),
            rows: Csr::from_pairs(n, edges.iter().copied()),
            cols: Csr::from_pairs(n, edges.iter().map(|&(i, j)| (j, i))),
        }
    }

    pub fn predicate(&self) -> Option<usize> {
        self.predicate
    }

    pub fn is_identity(&self) -> bool {
        self.predicate.is_none()
    }

    pub fn dim(&self) -> usize {
        self.rows.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.rows.indices.len()
    }

    /// Column indices set in row `i`, ascending.
    pub fn row(&self, i: usize) -> &[usize] {
        self.rows.row(i)
    }

    /// Row indices set in column `j`, ascending.
    pub fn column(&self, j: usize) -> &[usize] {
        self.cols.row(j)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    /// `stateᵀ · M`.
    pub fn propagate(&self, state: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.accumulate(state, 1.0, &mut out);
        out
    }

    /// `out += weight · stateᵀ · M`, skipping zero entries of `state`.
    pub fn accumulate(&self, state: &[f64], weight: f64, out: &mut [f64]) {
        debug_assert_eq!(state.len(), self.dim());
        if self.is_identity() {
            for (o, &s) in out.iter_mut().zip(state) {
                *o += weight * s;
            }
            return;
        }
        for (i, &s) in state.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let w = weight * s;
            for &j in self.rows.row(i) {
                out[j] += w;
            }
        }
    }

    /// `out += weight · M · grad` (the adjoint of [`Operator::accumulate`]).
    pub fn accumulate_transpose(&self, grad: &[f64], weight: f64, out: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.dim());
        if self.is_identity() {
            for (o, &g) in out.iter_mut().zip(grad) {
                *o += weight * g;
            }
            return;
        }
        for (j, &g) in grad.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let w = weight * g;
            for &i in self.cols.row(j) {
                out[i] += w;
            }
        }
    }

    /// `leftᵀ · M · right`, skipping zero entries of `left`.
    pub fn bilinear(&self, left: &[f64], right: &[f64]) -> f64 {
        if self.is_identity() {
            return left.iter().zip(right).map(|(a, b)| a * b).sum();
        }
        let mut acc = 0.0;
        for (i, &l) in left.iter().enumerate() {
            if l == 0.0 {
                continue;
            }
            let row: f64 = self.rows.row(i).iter().map(|&j| right[j]).sum();
            acc += l * row;
        }
        acc
    }

    /// Sparse product `self · other` with path multiplicities.
    pub fn product(&self, other: &Operator) -> CountMatrix {
        let n = self.dim();
        let mut stepper = FrontierStepper::new(n);
        let rows = (0..n)
            .map(|i| {
                let frontier: Frontier = self.row(i).iter().map(|&z| (z, 1u64)).collect();
                stepper.step(&frontier, other, None)
            })
            .collect();
        CountMatrix { rows }
    }
}

/// All operators of a graph: identity at index 0, then one per predicate.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    ops: Vec<Operator>,
}

impl OperatorSet {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn num_entities(&self) -> usize {
        self.ops[0].dim()
    }

    pub fn num_predicates(&self) -> usize {
        self.ops.len() - 1
    }

    pub fn identity(&self) -> &Operator {
        &self.ops[0]
    }

    /// Operator by operator index (0 = identity).
    pub fn get(&self, k: usize) -> &Operator {
        &self.ops[k]
    }

    /// Operator of predicate `p`.
    pub fn predicate(&self, p: usize) -> &Operator {
        &self.ops[p + 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Operator> {
        self.ops.iter()
    }

    /// Total nonzeros over predicate operators (`|G|`).
    pub fn total_nnz(&self) -> usize {
        self.ops[1..].iter().map(Operator::nnz).sum()
    }
}

/// Builds the identity plus one operator per predicate.
pub fn build_operators(kg: &KnowledgeGraph) -> OperatorSet {
    let n = kg.num_entities();
    let mut ops = Vec::with_capacity(kg.num_predicates() + 1);
    ops.push(Operator::identity(n));
    for p in 0..kg.num_predicates() {
        ops.push(Operator::from_edges(n, p, kg.edges(p)));
    }
    OperatorSet { ops }
}

/// One-hot state vector `v_i`.
pub fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Multi-hot target vector `v_T`.
pub fn multi_hot(n: usize, set: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &i in set {
        v[i] = 1.0;
    }
    v
}

/// Sparse integer matrix, row-major, rows sorted by column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountMatrix {
    rows: Vec<Vec<(usize, u64)>>,
}

impl CountMatrix {
    pub fn get(&self, i: usize, j: usize) -> u64 {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |&(c, _)| c).map(|k| row[k].1).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[(usize, u64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> Vec<Vec<u64>> {
        let n = self.rows.len();
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0; n];
                for &(j, c) in r {
                    d[j] = c;
                }
                d
            })
            .collect()
    }
}

/// An ordered list of predicate indices, e.g. `sisterOf ∧ sonOf`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RulePattern {
    pub hops: Vec<usize>,
}

impl RulePattern {
    pub fn new(hops: Vec<usize>) -> Self {
        RulePattern { hops }
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    /// Renders the pattern with predicate names, joined by ` ∧ `.
    pub fn display<'a>(&'a self, kg: &'a KnowledgeGraph) -> PatternDisplay<'a> {
        PatternDisplay {
            pattern: self,
            names: kg.predicates().iter().map(String::as_str).collect(),
        }
    }

    pub fn display_with<'a>(&'a self, names: &[&'a str]) -> PatternDisplay<'a> {
        PatternDisplay {
            pattern: self,
            names: names.to_vec(),
        }
    }
}

pub struct PatternDisplay<'a> {
    pattern: &'a RulePattern,
    names: Vec<&'a str>,
}

impl fmt::Display for PatternDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &p) in self.pattern.hops.iter().enumerate() {
            if i > 0 {
                f.write_str(" ∧ ")?;
            }
            f.write_str(self.names[p])?;
        }
        Ok(())
    }
}

/// Sparse frontier of path counts, sorted by entity.
pub type Frontier = Vec<(usize, u64)>;

/// Reusable scratch space for propagating integer path counts.
pub struct FrontierStepper {
    acc: Vec<u64>,
    touched: Vec<usize>,
}

impl FrontierStepper {
    pub fn new(n: usize) -> Self {
        FrontierStepper {
            acc: vec![0; n],
            touched: Vec::new(),
        }
    }

    /// `frontierᵀ · M`, never traversing `excluded = (from, to)` when that
    /// edge belongs to `op`.
    pub fn step(&mut self, frontier: &[(usize, u64)], op: &Operator, excluded: Option<(usize, usize)>) -> Frontier {
        for &(i, c) in frontier {
            for &j in op.row(i) {
                if excluded == Some((i, j)) {
                    continue;
                }
                if self.acc[j] == 0 {
                    self.touched.push(j);
                }
                self.acc[j] += c;
            }
        }
        self.touched.sort_unstable();
        let out = self.touched.iter().map(|&j| (j, self.acc[j])).collect();
        for &j in &self.touched {
            self.acc[j] = 0;
        }
        self.touched.clear();
        out
    }
}

/// Reads entity `t` from a sorted frontier.
pub fn frontier_count(frontier: &[(usize, u64)], t: usize) -> u64 {
    frontier
        .binary_search_by_key(&t, |&(e, _)| e)
        .map(|k| frontier[k].1)
        .unwrap_or(0)
}

/// Number of distinct paths `h → … → t` whose i-th edge carries
/// `pattern.hops[i]`. With `excluded`, paths using that exact labeled edge
/// are not counted.
pub fn count_paths(ops: &OperatorSet, h: usize, pattern: &RulePattern, t: usize, excluded: Option<Triple>) -> u64 {
    let mut stepper = FrontierStepper::new(ops.num_entities());
    let mut frontier: Frontier = vec![(h, 1)];
    for &p in &pattern.hops {
        let skip = excluded.filter(|e| e.relation == p).map(|e| (e.head, e.tail));
        frontier = stepper.step(&frontier, ops.predicate(p), skip);
        if frontier.is_empty() {
            return 0;
        }
    }
    frontier_count(&frontier, t)
}

/// All patterns with lengths in `min_len..=max_len` over `num_predicates`
/// predicates: shorter first, lexicographic within a length.
pub fn enumerate_patterns(num_predicates: usize, min_len: usize, max_len: usize) -> impl Iterator<Item = RulePattern> {
    (min_len..=max_len).flat_map(move |len| PatternOdometer::new(num_predicates, len))
}

struct PatternOdometer {
    base: usize,
    current: Option<Vec<usize>>,
}

impl PatternOdometer {
    fn new(base: usize, len: usize) -> Self {
        let current = if base == 0 && len > 0 { None } else { Some(vec![0; len]) };
        PatternOdometer { base, current }
    }
}

impl Iterator for PatternOdometer {
    type Item = RulePattern;

    fn next(&mut self) -> Option<RulePattern> {
        let cur = self.current.take()?;
        let mut next = cur.clone();
        let mut carry = true;
        for d in next.iter_mut().rev() {
            *d += 1;
            if *d < self.base {
                carry = false;
                break;
            }
            *d = 0;
        }
        if !carry {
            self.current = Some(next);
        }
        Some(RulePattern::new(cur))
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;

    fn toy() -> KnowledgeGraph {
        KnowledgeGraph::from_named([
            ("z1", "sisterOf", "z2"),
            ("z1", "sisterOf", "z4"),
            ("z2", "sisterOf", "z1"),
            ("z2", "sisterOf", "z4"),
            ("z1", "daughterOf", "x1"),
            ("z2", "daughterOf", "x1"),
            ("z4", "daughterOf", "x2"),
        ])
    }

    #[test]
    fn identity_is_exact() {
        let ops = build_operators(&toy());
        let id = ops.identity();
        assert!(id.is_identity());
        assert_eq!(id.nnz(), ops.num_entities());
        let s: Vec<f64> = (0..ops.num_entities()).map(|i| i as f64 * 0.5).collect();
        assert_eq!(id.propagate(&s), s);
    }

    #[test]
    fn nnz_matches_predicate_count() {
        let kg = toy();
        let ops = build_operators(&kg);
        for p in 0..kg.num_predicates() {
            assert_eq!(ops.predicate(p).nnz(), kg.predicate_count(p));
        }
        assert_eq!(ops.total_nnz(), kg.len());
    }

    #[test]
    fn empty_predicate_gives_zero_operator() {
        let kg = toy();
        let mut preds = kg.predicates().clone();
        preds.insert("unused".into());
        let kg = KnowledgeGraph::new(kg.entities().clone(), preds, kg.triples().to_vec()).unwrap();
        let ops = build_operators(&kg);
        let p = kg.predicate_index("unused").unwrap();
        assert_eq!(ops.predicate(p).nnz(), 0);
        let pat = RulePattern::new(vec![p, 0]);
        for h in 0..kg.num_entities() {
            for t in 0..kg.num_entities() {
                assert_eq!(count_paths(&ops, h, &pat, t, None), 0);
            }
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let ops = build_operators(&toy());
        let z = vec![0.0; ops.num_entities()];
        for op in ops.iter() {
            assert!(op.propagate(&z).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let ops = build_operators(&toy());
        let n = ops.num_entities();
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.3 + 0.1).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 - 2.0).powi(2)).collect();
        for op in ops.iter() {
            let xm = op.propagate(&x);
            let mut my = vec![0.0; n];
            op.accumulate_transpose(&y, 1.0, &mut my);
            let lhs: f64 = xm.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&my).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
            assert!((op.bilinear(&x, &y) - lhs).abs() < 1e-12);
        }
    }

    #[test]
    fn pattern_counts() {
        assert_eq!(enumerate_patterns(2, 2, 2).count(), 4);
        assert_eq!(enumerate_patterns(12, 2, 2).count(), 144);
        let all: Vec<_> = enumerate_patterns(3, 2, 3).collect();
        assert_eq!(all.len(), 36);
        let unique: HashSet<_> = all.iter().cloned().collect();
        assert_eq!(unique.len(), 36);
        assert_eq!(all[0].hops, [0, 0]);
        assert_eq!(all[1].hops, [0, 1]);
        assert_eq!(all[9].hops, [0, 0, 0]);
        assert_eq!(all[35].hops, [2, 2, 2]);
        assert_eq!(enumerate_patterns(0, 2, 2).count(), 0);
    }

    #[test]
    fn excluded_edge_is_skipped() {
        let kg = KnowledgeGraph::from_named([("h", "q", "t"), ("t", "p", "t")]);
        let ops = build_operators(&kg);
        let (h, t) = (0, 1);
        let pat = RulePattern::new(vec![0, 1]);
        assert_eq!(count_paths(&ops, h, &pat, t, None), 1);
        assert_eq!(count_paths(&ops, h, &pat, t, Some(Triple::new(h, 0, t))), 0);
        // exclusion of an edge under a different label has no effect
        assert_eq!(count_paths(&ops, h, &pat, t, Some(Triple::new(h, 1, t))), 1);
    }

    fn random_kg(seed: u64, n: usize, p: usize, density: f64) -> KnowledgeGraph {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ents: indexmap::IndexSet<String> = (0..n).map(|i| format!("e{i}")).collect();
        let preds: indexmap::IndexSet<String> = (0..p).map(|i| format!("p{i}")).collect();
        let mut triples = Vec::new();
        for h in 0..n {
            for r in 0..p {
                for t in 0..n {
                    if rng.gen_bool(density) {
                        triples.push(Triple::new(h, r, t));
                    }
                }
            }
        }
        KnowledgeGraph::new(ents, preds, triples).unwrap()
    }

    /// Enumerates every entity sequence `h = z0, z1, …, zl = t`.
    fn dfs_count(kg: &KnowledgeGraph, h: usize, hops: &[usize], t: usize, excl: Option<Triple>) -> u64 {
        if hops.is_empty() {
            return (h == t) as u64;
        }
        (0..kg.num_entities())
            .filter(|&z| {
                let e = Triple::new(h, hops[0], z);
                kg.contains(&e) && Some(e) != excl
            })
            .map(|z| dfs_count(kg, z, &hops[1..], t, excl))
            .sum()
    }

    #[test]
    fn count_paths_matches_dfs() {
        for seed in 0..6 {
            let kg = random_kg(seed, 8, 3, 0.15);
            let ops = build_operators(&kg);
            for pat in enumerate_patterns(3, 1, 3) {
                for h in 0..8 {
                    for t in 0..8 {
                        assert_eq!(
                            count_paths(&ops, h, &pat, t, None),
                            dfs_count(&kg, h, &pat.hops, t, None)
                        );
                    }
                }
            }
            for &e in kg.triples().iter().take(5) {
                for pat in enumerate_patterns(3, 2, 3) {
                    assert_eq!(
                        count_paths(&ops, e.head, &pat, e.tail, Some(e)),
                        dfs_count(&kg, e.head, &pat.hops, e.tail, Some(e))
                    );
                }
            }
        }
    }

    #[test]
    fn chain_product_matches_counts() {
        let kg = random_kg(42, 10, 2, 0.2);
        let ops = build_operators(&kg);
        let prod = ops.predicate(0).product(ops.predicate(1));
        for h in 0..10 {
            for t in 0..10 {
                let pat = RulePattern::new(vec![0, 1]);
                assert_eq!(prod.get(h, t), count_paths(&ops, h, &pat, t, None));
            }
        }
    }

    proptest! {
        #[test]
        fn chain_is_associative_and_non_negative(
            seed in 0u64..500,
            state in proptest::collection::vec(0.0f64..5.0, 7),
        ) {
            let kg = random_kg(seed, 7, 3, 0.2);
            let ops = build_operators(&kg);
            let (a, b) = (ops.predicate(0), ops.predicate(2));
            // (vᵀ A) B
            let left = b.propagate(&a.propagate(&state));
            // vᵀ (A B)
            let ab = a.product(b);
            let mut right = vec![0.0; 7];
            for (i, &s) in state.iter().enumerate() {
                for &(j, c) in ab.row(i) {
                    right[j] += s * c as f64;
                }
            }
            for (l, r) in left.iter().zip(&right) {
                prop_assert!((l - r).abs() < 1e-9);
                prop_assert!(*l >= 0.0);
            }
        }

        #[test]
        fn count_paths_equals_operator_product(seed in 0u64..200, len in 1usize..=4) {
            let kg = random_kg(seed, 6, 2, 0.25);
            let ops = build_operators(&kg);
            let hops: Vec<usize> = (0..len).map(|i| ((seed as usize) >> i) & 1).collect();
            let pat = RulePattern::new(hops.clone());
            for h in 0..6 {
                let mut v = one_hot(6, h);
                for &p in &hops {
                    v = ops.predicate(p).propagate(&v);
                }
                for (t, &x) in v.iter().enumerate() {
                    prop_assert_eq!(x as u64, count_paths(&ops, h, &pat, t, None));
                }
            }
        }
    }
}
