//! Reasoning saturation (macro γ, micro δ, comprehensive η) and bifurcation.
//!
//! Saturations are computed per triple `(h, q, t)` of `G(q)` by walking the
//! tree of pattern prefixes from `h` with sparse frontiers and reading the path
//! count at `t` at every node of depth ≥ 2. One walk yields the counts of every
//! pattern in `ℍ^L`, so a full report costs one walk per triple.
//!
//! By default the triple's own edge is never traversed while counting its
//! paths ([`DirectEdge::Exclude`]); [`DirectEdge::Include`] counts it like any
//! other edge.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg::{Direction, KnowledgeGraph, Triple};
use crate::ops::{build_operators, frontier_count, Frontier, FrontierStepper, OperatorSet, RulePattern};

/// Whether the triple being explained may be used by its own paths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DirectEdge {
    #[default]
    Exclude,
    Include,
}

impl DirectEdge {
    pub fn as_str(self) -> &'static str {
        match self {
            DirectEdge::Exclude => "exclude",
            DirectEdge::Include => "include",
        }
    }
}

impl FromStr for DirectEdge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude" => Ok(DirectEdge::Exclude),
            "include" => Ok(DirectEdge::Include),
            other => Err(Error::InvalidArgument(format!(
                "direct-edge must be `exclude` or `include`, got `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaturationRecord {
    pub pattern: RulePattern,
    pub predicate: usize,
    pub gamma: f64,
    pub delta: f64,
    pub eta: f64,
}

/// `η = γ · δ`.
pub fn comprehensive_saturation(gamma: f64, delta: f64) -> f64 {
    gamma * delta
}

/// Number of patterns of each length `2..=max_len` and the offset of each
/// length block in the enumeration order of [`crate::ops::enumerate_patterns`].
struct PatternIndex {
    base: usize,
    max_len: usize,
    offsets: Vec<usize>,
    total: usize,
}

impl PatternIndex {
    fn new(base: usize, max_len: usize) -> Self {
        let mut offsets = vec![0; max_len + 1];
        let mut total = 0;
        for (l, off) in offsets.iter_mut().enumerate().skip(2) {
            *off = total;
            total += base.pow(l as u32);
        }
        PatternIndex {
            base,
            max_len,
            offsets,
            total,
        }
    }

    fn index_of(&self, hops: &[usize]) -> usize {
        let mut idx = 0;
        for &h in hops {
            idx = idx * self.base + h;
        }
        self.offsets[hops.len()] + idx
    }

    fn pattern(&self, mut idx: usize) -> RulePattern {
        let mut len = 2;
        while len < self.max_len && idx >= self.offsets[len + 1] {
            len += 1;
        }
        idx -= self.offsets[len];
        let mut hops = vec![0; len];
        for h in hops.iter_mut().rev() {
            *h = idx % self.base;
            idx /= self.base;
        }
        RulePattern::new(hops)
    }
}

/// Saturation computations over one graph.
pub struct Saturation<'a> {
    kg: &'a KnowledgeGraph,
    ops: OperatorSet,
    direct_edge: DirectEdge,
}

impl<'a> Saturation<'a> {
    pub fn new(kg: &'a KnowledgeGraph, direct_edge: DirectEdge) -> Self {
        Saturation {
            kg,
            ops: build_operators(kg),
            direct_edge,
        }
    }

    pub fn direct_edge(&self) -> DirectEdge {
        self.direct_edge
    }

    fn triples_of(&self, q: usize) -> Result<Vec<Triple>> {
        if q >= self.kg.num_predicates() {
            return Err(Error::InvalidArgument(format!("no predicate with index {q}")));
        }
        let edges = self.kg.edges(q);
        if edges.is_empty() {
            return Err(Error::EmptySubgraph(self.kg.predicate_name(q).to_string()));
        }
        Ok(edges.iter().map(|&(h, t)| Triple::new(h, q, t)).collect())
    }

    fn exclusion(&self, tri: Triple) -> Option<Triple> {
        match self.direct_edge {
            DirectEdge::Exclude => Some(tri),
            DirectEdge::Include => None,
        }
    }

    fn step(&self, stepper: &mut FrontierStepper, frontier: &Frontier, p: usize, excl: Option<Triple>) -> Frontier {
        let skip = excl.filter(|e| e.relation == p).map(|e| (e.head, e.tail));
        stepper.step(frontier, self.ops.predicate(p), skip)
    }

    fn pattern_count(&self, stepper: &mut FrontierStepper, tri: Triple, pattern: &RulePattern) -> u64 {
        let excl = self.exclusion(tri);
        let mut frontier: Frontier = vec![(tri.head, 1)];
        for &p in &pattern.hops {
            frontier = self.step(stepper, &frontier, p, excl);
            if frontier.is_empty() {
                return 0;
            }
        }
        frontier_count(&frontier, tri.tail)
    }

    /// Path counts of every pattern of length `2..=max_len` from `h` to `t`,
    /// written into `counts` (indexed like `PatternIndex`). Returns the total.
    fn all_counts(&self, stepper: &mut FrontierStepper, tri: Triple, index: &PatternIndex, counts: &mut [u64]) -> u64 {
        counts.iter_mut().for_each(|c| *c = 0);
        let excl = self.exclusion(tri);
        let mut total = 0;
        let mut hops = Vec::with_capacity(index.max_len);
        let start: Frontier = vec![(tri.head, 1)];
        self.walk(stepper, &start, &mut hops, tri, excl, index, counts, &mut total);
        total
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        stepper: &mut FrontierStepper,
        frontier: &Frontier,
        hops: &mut Vec<usize>,
        tri: Triple,
        excl: Option<Triple>,
        index: &PatternIndex,
        counts: &mut [u64],
        total: &mut u64,
    ) {
        for p in 0..index.base {
            let next = self.step(stepper, frontier, p, excl);
            if next.is_empty() {
                continue;
            }
            hops.push(p);
            if hops.len() >= 2 {
                let c = frontier_count(&next, tri.tail);
                if c > 0 {
                    counts[index.index_of(hops)] = c;
                    *total += c;
                }
            }
            if hops.len() < index.max_len {
                self.walk(stepper, &next, hops, tri, excl, index, counts, total);
            }
            hops.pop();
        }
    }

    /// Fraction of `G(q)` triples connected by at least one path of `pattern`.
    pub fn macro_saturation(&self, pattern: &RulePattern, q: usize) -> Result<f64> {
        let triples = self.triples_of(q)?;
        let n = self.kg.num_entities();
        let hits: usize = triples
            .par_iter()
            .map_init(
                || FrontierStepper::new(n),
                |st, &tri| (self.pattern_count(st, tri, pattern) > 0) as usize,
            )
            .sum();
        Ok(hits as f64 / triples.len() as f64)
    }

    /// Mean over `G(q)` of the share of `h → t` paths (over all patterns of
    /// length `2..=max_len`) that follow `pattern`. Triples with no path at all
    /// contribute 0.
    pub fn micro_saturation(&self, pattern: &RulePattern, q: usize, max_len: usize) -> Result<f64> {
        if pattern.len() > max_len || pattern.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "pattern length {} outside 2..={max_len}",
                pattern.len()
            )));
        }
        let triples = self.triples_of(q)?;
        let n = self.kg.num_entities();
        let shares: Vec<f64> = triples
            .par_iter()
            .map_init(
                || FrontierStepper::new(n),
                |st, &tri| {
                    let mine = self.pattern_count(st, tri, pattern);
                    if mine == 0 {
                        return 0.0;
                    }
                    let total = self.total_paths(st, tri, max_len);
                    mine as f64 / total as f64
                },
            )
            .collect();
        Ok(shares.iter().sum::<f64>() / triples.len() as f64)
    }

    /// All `h → t` paths with lengths `2..=max_len`, over every predicate.
    fn total_paths(&self, stepper: &mut FrontierStepper, tri: Triple, max_len: usize) -> u64 {
        let excl = self.exclusion(tri);
        let mut frontier: Frontier = vec![(tri.head, 1)];
        let mut total = 0;
        for len in 1..=max_len {
            let mut merged: Vec<(usize, u64)> = Vec::new();
            for p in 0..self.kg.num_predicates() {
                merged.extend(self.step(stepper, &frontier, p, excl));
            }
            merged.sort_unstable_by_key(|&(e, _)| e);
            let mut next: Frontier = Vec::with_capacity(merged.len());
            for (e, c) in merged {
                match next.last_mut() {
                    Some((le, lc)) if *le == e => *lc += c,
                    _ => next.push((e, c)),
                }
            }
            frontier = next;
            if len >= 2 {
                total += frontier_count(&frontier, tri.tail);
            }
            if frontier.is_empty() {
                break;
            }
        }
        total
    }

    /// γ, δ and η of every pattern in `ℍ^max_len` for predicate `q`, in
    /// enumeration order.
    pub fn predicate_saturations(&self, q: usize, max_len: usize) -> Result<Vec<SaturationRecord>> {
        if max_len < 2 {
            return Err(Error::InvalidArgument("max rule length must be at least 2".into()));
        }
        let triples = self.triples_of(q)?;
        let index = PatternIndex::new(self.kg.num_predicates(), max_len);
        let n = self.kg.num_entities();

        // Fixed-size chunks reduced in order keep the floating-point sums
        // independent of the thread schedule.
        let partials: Vec<(Vec<u64>, Vec<f64>)> = triples
            .par_chunks(64)
            .map(|chunk| {
                let mut stepper = FrontierStepper::new(n);
                let mut counts = vec![0u64; index.total];
                let mut hits = vec![0u64; index.total];
                let mut shares = vec![0f64; index.total];
                for &tri in chunk {
                    let total = self.all_counts(&mut stepper, tri, &index, &mut counts);
                    if total == 0 {
                        continue;
                    }
                    for (k, &c) in counts.iter().enumerate() {
                        if c > 0 {
                            hits[k] += 1;
                            shares[k] += c as f64 / total as f64;
                        }
                    }
                }
                (hits, shares)
            })
            .collect();

        let mut hits = vec![0u64; index.total];
        let mut shares = vec![0f64; index.total];
        for (h, s) in partials {
            for k in 0..index.total {
                hits[k] += h[k];
                shares[k] += s[k];
            }
        }
        let nq = triples.len() as f64;
        Ok((0..index.total)
            .map(|k| {
                let gamma = hits[k] as f64 / nq;
                let delta = shares[k] / nq;
                SaturationRecord {
                    pattern: index.pattern(k),
                    predicate: q,
                    gamma,
                    delta,
                    eta: comprehensive_saturation(gamma, delta),
                }
            })
            .collect())
    }

    /// Top `top_n` patterns per predicate by η (ties: γ, then pattern order).
    /// Patterns that never connect a triple are left out.
    pub fn report(&self, max_len: usize, top_n: usize) -> Result<SaturationReport> {
        let mut groups = Vec::new();
        let mut warnings = Vec::new();
        for q in 0..self.kg.num_predicates() {
            let mut records = match self.predicate_saturations(q, max_len) {
                Ok(r) => r,
                Err(Error::EmptySubgraph(name)) => {
                    warnings.push(format!("skipped `{name}`: empty subgraph"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            records.retain(|r| r.gamma > 0.0);
            if records.is_empty() {
                warnings.push(format!(
                    "no pattern of length 2..={max_len} connects any `{}` triple",
                    self.kg.predicate_name(q)
                ));
                continue;
            }
            records.sort_by(|a, b| {
                b.eta
                    .total_cmp(&a.eta)
                    .then(b.gamma.total_cmp(&a.gamma))
                    .then(a.pattern.cmp(&b.pattern))
            });
            records.truncate(top_n);
            groups.push(PredicateSaturations { predicate: q, records });
        }
        Ok(SaturationReport {
            max_len,
            direct_edge: self.direct_edge,
            groups,
            warnings,
        })
    }
}

/// γ for a single `(pattern, q)` pair.
pub fn macro_saturation(kg: &KnowledgeGraph, pattern: &RulePattern, q: usize, direct_edge: DirectEdge) -> Result<f64> {
    Saturation::new(kg, direct_edge).macro_saturation(pattern, q)
}

/// δ for a single `(pattern, q)` pair.
pub fn micro_saturation(
    kg: &KnowledgeGraph,
    pattern: &RulePattern,
    q: usize,
    max_len: usize,
    direct_edge: DirectEdge,
) -> Result<f64> {
    Saturation::new(kg, direct_edge).micro_saturation(pattern, q, max_len)
}

/// Full saturation report, see [`Saturation::report`].
pub fn saturation_report(
    kg: &KnowledgeGraph,
    max_len: usize,
    top_n: usize,
    direct_edge: DirectEdge,
) -> Result<SaturationReport> {
    Saturation::new(kg, direct_edge).report(max_len, top_n)
}

/// Rough work estimate `|P|^(L+1) · |G|` for a full saturation report.
pub fn saturation_cost(kg: &KnowledgeGraph, max_len: usize) -> f64 {
    (kg.num_predicates() as f64).powi(max_len as i32 + 1) * kg.len() as f64
}

#[derive(Clone, Debug)]
pub struct PredicateSaturations {
    pub predicate: usize,
    pub records: Vec<SaturationRecord>,
}

#[derive(Clone, Debug)]
pub struct SaturationReport {
    pub max_len: usize,
    pub direct_edge: DirectEdge,
    pub groups: Vec<PredicateSaturations>,
    pub warnings: Vec<String>,
}

impl SaturationReport {
    pub fn records(&self) -> impl Iterator<Item = &SaturationRecord> {
        self.groups.iter().flat_map(|g| g.records.iter())
    }

    pub fn group(&self, q: usize) -> Option<&PredicateSaturations> {
        self.groups.iter().find(|g| g.predicate == q)
    }

    /// `pattern  predicate  gamma  delta  eta`, full precision.
    pub fn to_tsv(&self, kg: &KnowledgeGraph) -> String {
        let mut out = String::from("pattern\tpredicate\tgamma\tdelta\teta\n");
        for r in self.records() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.pattern.display(kg),
                kg.predicate_name(r.predicate),
                r.gamma,
                r.delta,
                r.eta
            );
        }
        out
    }

    /// Aligned table grouped by predicate, values at two decimals.
    pub fn to_table(&self, kg: &KnowledgeGraph) -> String {
        let rows: Vec<[String; 5]> = self
            .groups
            .iter()
            .flat_map(|g| {
                g.records.iter().enumerate().map(move |(i, r)| {
                    [
                        r.pattern.display(kg).to_string(),
                        if i == 0 {
                            kg.predicate_name(g.predicate).to_string()
                        } else {
                            String::new()
                        },
                        format!("{:.2}", r.gamma),
                        format!("{:.2}", r.delta),
                        format!("{:.2}", r.eta),
                    ]
                })
            })
            .collect();
        let header = ["Rule", "Predicate", "gamma", "delta", "eta"];
        let mut widths = header.map(|h| h.chars().count());
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: [&str; 5]| {
            format!(
                "{:>w0$}  =>  {:<w1$}  {:>w2$}  {:>w3$}  {:>w4$}\n",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                cells[4],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3],
                w4 = widths[4]
            )
        };
        let mut out = format!(
            "# saturation, max rule length {}, direct edge {}\n",
            self.max_len,
            self.direct_edge.as_str()
        );
        out.push_str(&line(header));
        let mut last_pred = None;
        for (r, g) in rows.iter().zip(
            self.groups
                .iter()
                .flat_map(|g| g.records.iter().map(move |_| g.predicate)),
        ) {
            if last_pred.is_some() && last_pred != Some(g) {
                out.push('\n');
            }
            last_pred = Some(g);
            out.push_str(&line([&r[0], &r[1], &r[2], &r[3], &r[4]]));
        }
        for w in &self.warnings {
            let _ = writeln!(out, "# warning: {w}");
        }
        out
    }
}

/// Proportions of heads (forward) or tails (backward) of `G(q)` with degree
/// at least `λ`, for `λ = 1..=λ_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct BifurcationRecord {
    pub predicate: usize,
    pub direction: Direction,
    /// `proportions[λ - 1]`.
    pub proportions: Vec<f64>,
}

impl BifurcationRecord {
    /// Proportion at `λ` (1-based); 0 past the recorded range.
    pub fn at(&self, lambda: usize) -> f64 {
        assert!(lambda >= 1, "lambda is 1-based");
        self.proportions.get(lambda - 1).copied().unwrap_or(0.0)
    }

    pub fn lambda_max(&self) -> usize {
        self.proportions.len()
    }
}

pub fn bifurcation(
    kg: &KnowledgeGraph,
    q: usize,
    direction: Direction,
    lambda_max: usize,
) -> Result<BifurcationRecord> {
    if kg.predicate_count(q) == 0 {
        return Err(Error::EmptySubgraph(kg.predicate_name(q).to_string()));
    }
    let degrees = kg.degree_table(q, direction);
    let vertices = degrees.len() as f64;
    let proportions = (1..=lambda_max)
        .map(|lambda| degrees.values().filter(|&&d| d >= lambda).count() as f64 / vertices)
        .collect();
    Ok(BifurcationRecord {
        predicate: q,
        direction,
        proportions,
    })
}

/// `predicate  direction  lambda  proportion` rows.
pub fn bifurcation_tsv(kg: &KnowledgeGraph, records: &[BifurcationRecord]) -> String {
    let mut out = String::from("predicate\tdirection\tlambda\tproportion\n");
    for r in records {
        for (i, p) in r.proportions.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                kg.predicate_name(r.predicate),
                r.direction.as_str(),
                i + 1,
                p
            );
        }
    }
    out
}

/// Percent table, one row per record, columns `λ = 2..=λ_max`.
pub fn bifurcation_table(kg: &KnowledgeGraph, records: &[BifurcationRecord]) -> String {
    let lambda_max = records.iter().map(|r| r.lambda_max()).max().unwrap_or(1);
    let name_w = records
        .iter()
        .map(|r| kg.predicate_name(r.predicate).chars().count())
        .max()
        .unwrap_or(9)
        .max(9);
    let mut out = format!("{:<name_w$}  {:<9}", "predicate", "direction");
    for l in 2..=lambda_max {
        let _ = write!(out, "  {:>5}", format!("l={l}"));
    }
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{:<name_w$}  {:<9}",
            kg.predicate_name(r.predicate),
            r.direction.as_str()
        );
        for l in 2..=lambda_max {
            let _ = write!(out, "  {:>5.0}", 100.0 * r.at(l));
        }
        out.push('\n');
    }
    out
}

/// Uniform sample of `target` triples without replacement. Vocabularies are
/// kept from the parent graph.
pub fn sample_subgraph(kg: &KnowledgeGraph, seed: u64, target: usize) -> Result<KnowledgeGraph> {
    if target > kg.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {target} of {} triples",
            kg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, kg.len(), target).into_vec();
    picked.sort_unstable();
    kg.with_triples(picked.into_iter().map(|i| kg.triples()[i]))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;
    use crate::ops::enumerate_patterns;

    fn toy() -> KnowledgeGraph {
        KnowledgeGraph::from_named([
            ("z1", "daughterOf", "x1"),
            ("z2", "daughterOf", "x1"),
            ("z4", "daughterOf", "x2"),
            ("z1", "sisterOf", "z2"),
        ])
    }

    fn chain() -> KnowledgeGraph {
        KnowledgeGraph::from_named([("h", "p1", "z"), ("z", "p2", "t"), ("h", "q", "t")])
    }

    #[test]
    fn toy_bifurcation() {
        let kg = toy();
        let q = kg.predicate_index("daughterOf").unwrap();
        let bw = bifurcation(&kg, q, Direction::Backward, 3).unwrap();
        let fw = bifurcation(&kg, q, Direction::Forward, 3).unwrap();
        assert_eq!(bw.at(1), 1.0);
        assert_eq!(bw.at(2), 0.5);
        assert_eq!(fw.at(2), 0.0);
        assert_eq!(fw.at(1), 1.0);
    }

    #[test]
    fn empty_subgraph_is_an_error() {
        let mut kg = chain();
        let mut preds = kg.predicates().clone();
        preds.insert("empty".into());
        kg = KnowledgeGraph::new(kg.entities().clone(), preds, kg.triples().to_vec()).unwrap();
        let q = kg.predicate_index("empty").unwrap();
        let pat = RulePattern::new(vec![0, 1]);
        assert!(matches!(
            macro_saturation(&kg, &pat, q, DirectEdge::Exclude),
            Err(Error::EmptySubgraph(_))
        ));
        assert!(matches!(
            micro_saturation(&kg, &pat, q, 2, DirectEdge::Exclude),
            Err(Error::EmptySubgraph(_))
        ));
        assert!(matches!(
            bifurcation(&kg, q, Direction::Forward, 3),
            Err(Error::EmptySubgraph(_))
        ));
        let report = saturation_report(&kg, 2, 3, DirectEdge::Exclude).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("empty")));
    }

    #[test]
    fn three_node_chain() {
        let kg = chain();
        let q = kg.predicate_index("q").unwrap();
        let pat = RulePattern::new(vec![
            kg.predicate_index("p1").unwrap(),
            kg.predicate_index("p2").unwrap(),
        ]);
        for conv in [DirectEdge::Exclude, DirectEdge::Include] {
            assert_eq!(macro_saturation(&kg, &pat, q, conv).unwrap(), 1.0);
            assert_eq!(micro_saturation(&kg, &pat, q, 2, conv).unwrap(), 1.0);
        }
        let none = RulePattern::new(vec![q, q]);
        assert_eq!(micro_saturation(&kg, &none, q, 2, DirectEdge::Exclude).unwrap(), 0.0);
    }

    #[test]
    fn single_predicate_without_paths_gives_empty_report() {
        let kg = KnowledgeGraph::from_named([("a", "r", "b"), ("c", "r", "d")]);
        let report = saturation_report(&kg, 2, 5, DirectEdge::Exclude).unwrap();
        assert!(report.groups.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn comprehensive_is_product() {
        assert!((comprehensive_saturation(0.47, 0.35) - 0.1645).abs() < 1e-12);
        assert_eq!(comprehensive_saturation(1.0, 0.34), 0.34);
        assert_eq!(comprehensive_saturation(0.7, 0.0), 0.0);
    }

    #[test]
    fn sampling() {
        let kg = KnowledgeGraph::from_named(
            (0..40)
                .map(|i| {
                    (
                        ["a", "b", "c", "d", "e"][i % 5],
                        ["p", "q"][i % 2],
                        ["f", "g", "h", "i"][i % 4],
                    )
                })
                .collect::<Vec<_>>(),
        );
        let all = sample_subgraph(&kg, 3, kg.len()).unwrap();
        assert_eq!(all.triples(), kg.triples());
        let a = sample_subgraph(&kg, 9, 7).unwrap();
        let b = sample_subgraph(&kg, 9, 7).unwrap();
        assert_eq!(a.triples(), b.triples());
        assert_eq!(a.len(), 7);
        assert!(a.triples().iter().all(|t| kg.contains(t)));
        assert_eq!(a.num_entities(), kg.num_entities());
        assert!(sample_subgraph(&kg, 1, kg.len() + 1).is_err());
    }

    #[test]
    fn pattern_index_round_trip() {
        let idx = PatternIndex::new(3, 3);
        let all: Vec<_> = enumerate_patterns(3, 2, 3).collect();
        assert_eq!(idx.total, all.len());
        for (k, p) in all.iter().enumerate() {
            assert_eq!(idx.index_of(&p.hops), k);
            assert_eq!(&idx.pattern(k), p);
        }
    }

    fn random_kg(seed: u64, n: usize, p: usize, density: f64) -> KnowledgeGraph {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
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

    fn dfs(kg: &KnowledgeGraph, h: usize, hops: &[usize], t: usize, excl: Option<Triple>) -> u64 {
        if hops.is_empty() {
            return (h == t) as u64;
        }
        (0..kg.num_entities())
            .filter(|&z| {
                let e = Triple::new(h, hops[0], z);
                kg.contains(&e) && Some(e) != excl
            })
            .map(|z| dfs(kg, z, &hops[1..], t, excl))
            .sum()
    }

    /// γ and δ straight from the definitions, with DFS path counts.
    fn oracle(kg: &KnowledgeGraph, q: usize, max_len: usize, conv: DirectEdge) -> Vec<(RulePattern, f64, f64)> {
        let pats: Vec<_> = enumerate_patterns(kg.num_predicates(), 2, max_len).collect();
        let tris: Vec<Triple> = kg.edges(q).iter().map(|&(h, t)| Triple::new(h, q, t)).collect();
        let n = tris.len() as f64;
        pats.iter()
            .map(|p| {
                let mut g = 0.0;
                let mut d = 0.0;
                for &tri in &tris {
                    let excl = (conv == DirectEdge::Exclude).then_some(tri);
                    let mine = dfs(kg, tri.head, &p.hops, tri.tail, excl);
                    let total: u64 = pats.iter().map(|o| dfs(kg, tri.head, &o.hops, tri.tail, excl)).sum();
                    if mine > 0 {
                        g += 1.0;
                        d += mine as f64 / total as f64;
                    }
                }
                (p.clone(), g / n, d / n)
            })
            .collect()
    }

    #[test]
    fn frontier_saturations_match_dfs_oracle() {
        for seed in 0..8 {
            let kg = random_kg(seed, 7, 3, 0.12);
            for conv in [DirectEdge::Exclude, DirectEdge::Include] {
                let sat = Saturation::new(&kg, conv);
                for q in 0..3 {
                    if kg.predicate_count(q) == 0 {
                        continue;
                    }
                    let max_len = if seed % 2 == 0 { 2 } else { 3 };
                    let got = sat.predicate_saturations(q, max_len).unwrap();
                    let want = oracle(&kg, q, max_len, conv);
                    assert_eq!(got.len(), want.len());
                    for (r, (p, g, d)) in got.iter().zip(&want) {
                        assert_eq!(&r.pattern, p);
                        assert_eq!(r.gamma, *g);
                        assert!((r.delta - d).abs() < 1e-12, "{} vs {}", r.delta, d);
                        let single_g = sat.macro_saturation(p, q).unwrap();
                        let single_d = sat.micro_saturation(p, q, max_len).unwrap();
                        assert_eq!(single_g, *g);
                        assert!((single_d - d).abs() < 1e-12);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn micro_shares_sum_to_one_and_bounds_hold(seed in 0u64..300) {
            let kg = random_kg(seed, 6, 2, 0.2);
            let sat = Saturation::new(&kg, DirectEdge::Exclude);
            let index = PatternIndex::new(2, 2);
            let mut counts = vec![0; index.total];
            let mut stepper = FrontierStepper::new(6);
            for &tri in kg.triples() {
                let total = sat.all_counts(&mut stepper, tri, &index, &mut counts);
                if total > 0 {
                    let s: f64 = counts.iter().map(|&c| c as f64 / total as f64).sum();
                    prop_assert!((s - 1.0).abs() < 1e-12);
                }
            }
            for q in 0..2 {
                if kg.predicate_count(q) == 0 { continue; }
                for r in sat.predicate_saturations(q, 2).unwrap() {
                    prop_assert!((0.0..=1.0).contains(&r.gamma));
                    prop_assert!((0.0..=1.0).contains(&r.delta));
                    prop_assert!(r.eta <= r.gamma.min(r.delta) + 1e-15);
                    prop_assert_eq!(r.eta, r.gamma * r.delta);
                }
                for dir in [Direction::Forward, Direction::Backward] {
                    let b = bifurcation(&kg, q, dir, 6).unwrap();
                    prop_assert_eq!(b.at(1), 1.0);
                    for l in 1..6 {
                        prop_assert!(b.at(l + 1) <= b.at(l));
                    }
                }
            }
        }
    }

    #[test]
    fn report_is_deterministic_and_sorted() {
        let kg = random_kg(11, 9, 3, 0.15);
        let a = saturation_report(&kg, 2, 4, DirectEdge::Exclude).unwrap();
        let b = saturation_report(&kg, 2, 4, DirectEdge::Exclude).unwrap();
        assert_eq!(a.to_tsv(&kg), b.to_tsv(&kg));
        for g in &a.groups {
            assert!(g.records.len() <= 4);
            for w in g.records.windows(2) {
                assert!(w[0].eta >= w[1].eta);
            }
        }
        let preds: HashSet<_> = a.groups.iter().map(|g| g.predicate).collect();
        assert_eq!(preds.len(), a.groups.len());
        assert!(a.to_table(&kg).contains("=>"));
    }
}
