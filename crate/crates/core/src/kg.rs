//! Triple files, vocabularies, per-predicate subgraphs and multi-target queries.
//!
//! A dataset is three TAB-separated files (`head<TAB>relation<TAB>tail`, one
//! triple per line). Entities and predicates get integer indices in order of
//! first appearance across train, valid and test, so two loads of the same
//! files always produce the same indices.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::{IndexMap, IndexSet};

use crate::error::{Error, Result};

/// A `(head, relation, tail)` triple over vocabulary indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple { head, relation, tail }
    }
}

/// Reasoning direction for degrees and bifurcation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Heads, counted by how many tails they reach (`fw-degree`).
    Forward,
    /// Tails, counted by how many heads reach them (`bw-degree`).
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// An immutable knowledge graph: vocabularies, the deduplicated triple list and
/// the per-predicate edge lists `G(p)`.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: IndexSet<String>,
    predicates: IndexSet<String>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    per_predicate: Vec<Vec<(usize, usize)>>,
}

impl KnowledgeGraph {
    /// Builds a graph from vocabularies and triples. Duplicates are dropped
    /// (first occurrence wins); out-of-range indices are rejected.
    pub fn new(
        entities: IndexSet<String>,
        predicates: IndexSet<String>,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self> {
        let mut triple_set = HashSet::new();
        let mut kept = Vec::new();
        let mut per_predicate = vec![Vec::new(); predicates.len()];
        for t in triples {
            if t.head >= entities.len() || t.tail >= entities.len() {
                return Err(Error::InvalidArgument(format!(
                    "entity index out of range in {t:?} (|E| = {})",
                    entities.len()
                )));
            }
            if t.relation >= predicates.len() {
                return Err(Error::InvalidArgument(format!(
                    "predicate index out of range in {t:?} (|P| = {})",
                    predicates.len()
                )));
            }
            if triple_set.insert(t) {
                per_predicate[t.relation].push((t.head, t.tail));
                kept.push(t);
            }
        }
        Ok(KnowledgeGraph {
            entities,
            predicates,
            triples: kept,
            triple_set,
            per_predicate,
        })
    }

    /// Convenience constructor from string triples; vocabularies follow
    /// first appearance (head, then tail for entities).
    pub fn from_named<'a>(triples: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Self {
        let mut entities = IndexSet::new();
        let mut predicates = IndexSet::new();
        let mut out = Vec::new();
        for (h, r, t) in triples {
            let (hi, _) = entities.insert_full(h.to_string());
            let (ri, _) = predicates.insert_full(r.to_string());
            let (ti, _) = entities.insert_full(t.to_string());
            out.push(Triple::new(hi, ri, ti));
        }
        KnowledgeGraph::new(entities, predicates, out).expect("indices come from the vocabularies")
    }

    /// A graph with the same vocabularies but only the given triples.
    pub fn with_triples(&self, triples: impl IntoIterator<Item = Triple>) -> Result<Self> {
        KnowledgeGraph::new(self.entities.clone(), self.predicates.clone(), triples)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_predicates(&self) -> usize {
        self.predicates.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    /// Edge list of `G(q)` as `(head, tail)` pairs, in insertion order.
    pub fn edges(&self, q: usize) -> &[(usize, usize)] {
        &self.per_predicate[q]
    }

    /// `n^q`, the number of triples with predicate `q`.
    pub fn predicate_count(&self, q: usize) -> usize {
        self.per_predicate[q].len()
    }

    pub fn entity_name(&self, i: usize) -> &str {
        &self.entities[i]
    }

    pub fn predicate_name(&self, i: usize) -> &str {
        &self.predicates[i]
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.get_index_of(name)
    }

    pub fn predicate_index(&self, name: &str) -> Option<usize> {
        self.predicates.get_index_of(name)
    }

    pub fn entities(&self) -> &IndexSet<String> {
        &self.entities
    }

    pub fn predicates(&self) -> &IndexSet<String> {
        &self.predicates
    }

    /// Number of distinct tails `u` with `(v, q, u)` in the graph.
    pub fn fw_degree(&self, q: usize, v: usize) -> usize {
        self.per_predicate[q].iter().filter(|&&(h, _)| h == v).count()
    }

    /// Number of distinct heads `u` with `(u, q, v)` in the graph.
    pub fn bw_degree(&self, q: usize, v: usize) -> usize {
        self.per_predicate[q].iter().filter(|&&(_, t)| t == v).count()
    }

    /// Degree of every vertex of `G(q)` in the given direction, keyed by entity
    /// in first-appearance order.
    pub fn degree_table(&self, q: usize, direction: Direction) -> IndexMap<usize, usize> {
        let mut table = IndexMap::new();
        for &(h, t) in &self.per_predicate[q] {
            let v = match direction {
                Direction::Forward => h,
                Direction::Backward => t,
            };
            *table.entry(v).or_insert(0) += 1;
        }
        table
    }

    /// Serializes the triples in the on-disk TAB format.
    pub fn to_triple_text(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.entities[t.head], self.predicates[t.relation], self.entities[t.tail]
            );
        }
        out
    }

    /// Adds `inv_<p>` predicates holding every edge reversed.
    pub fn with_inverse_relations(&self) -> Self {
        let mut predicates = self.predicates.clone();
        let base = predicates.len();
        for i in 0..base {
            predicates.insert(format!("inv_{}", self.predicates[i]));
        }
        let reversed = self
            .triples
            .iter()
            .map(|t| Triple::new(t.tail, t.relation + base, t.head));
        let all: Vec<Triple> = self.triples.iter().copied().chain(reversed).collect();
        KnowledgeGraph::new(self.entities.clone(), predicates, all).expect("inverse indices are in range")
    }
}

/// Which splits are folded into the reasoning graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphSource {
    pub train: bool,
    pub valid: bool,
    pub test: bool,
}

impl Default for GraphSource {
    fn default() -> Self {
        GraphSource {
            train: true,
            valid: true,
            test: true,
        }
    }
}

impl GraphSource {
    pub fn train_only() -> Self {
        GraphSource {
            train: true,
            valid: false,
            test: false,
        }
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if self.train {
            parts.push("train");
        }
        if self.valid {
            parts.push("valid");
        }
        if self.test {
            parts.push("test");
        }
        parts.join("+")
    }
}

#[derive(Clone, Debug)]
pub struct DatasetSplits {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub graph_source: GraphSource,
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub graph_source: GraphSource,
    /// Adds reversed `inv_<p>` edges to the reasoning graph. Off by default.
    pub inverse_relations: bool,
}

/// Per-split bookkeeping from [`load_dataset`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadSummary {
    pub entities: usize,
    pub predicates: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub graph_triples: usize,
    /// Lines repeating a triple already seen in the same split.
    pub duplicates: usize,
    /// Triples already present in an earlier split, dropped from the later one.
    pub cross_split_duplicates: usize,
}

impl LoadSummary {
    pub fn to_kv_text(&self) -> String {
        format!(
            "entities = {}\npredicates = {}\ntrain_triples = {}\nvalid_triples = {}\ntest_triples = {}\ngraph_triples = {}\nduplicates = {}\ncross_split_duplicates = {}\n",
            self.entities,
            self.predicates,
            self.train,
            self.valid,
            self.test,
            self.graph_triples,
            self.duplicates,
            self.cross_split_duplicates
        )
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub kg: KnowledgeGraph,
    pub splits: DatasetSplits,
    pub summary: LoadSummary,
}

fn read_triples(path: &Path) -> Result<Vec<(String, String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                found: fields.len(),
            });
        }
        out.push((fields[0].to_string(), fields[1].to_string(), fields[2].to_string()));
    }
    Ok(out)
}

/// Loads the three split files and builds the reasoning graph.
pub fn load_dataset(
    train_path: impl AsRef<Path>,
    valid_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<Dataset> {
    let raw = [
        read_triples(train_path.as_ref())?,
        read_triples(valid_path.as_ref())?,
        read_triples(test_path.as_ref())?,
    ];
    if raw[0].is_empty() {
        return Err(Error::EmptyTrainSplit);
    }

    let mut entities = IndexSet::new();
    let mut predicates = IndexSet::new();
    let mut seen: HashSet<Triple> = HashSet::new();
    let mut summary = LoadSummary::default();
    let mut splits: [Vec<Triple>; 3] = Default::default();

    for (split, lines) in raw.iter().enumerate() {
        let mut local: HashSet<Triple> = HashSet::new();
        for (h, r, t) in lines {
            let (hi, _) = entities.insert_full(h.clone());
            let (ri, _) = predicates.insert_full(r.clone());
            let (ti, _) = entities.insert_full(t.clone());
            let triple = Triple::new(hi, ri, ti);
            if !local.insert(triple) {
                summary.duplicates += 1;
            } else if !seen.insert(triple) {
                summary.cross_split_duplicates += 1;
            } else {
                splits[split].push(triple);
            }
        }
    }

    let [train, valid, test] = splits;
    let source = options.graph_source;
    let mut graph_triples = Vec::new();
    if source.train {
        graph_triples.extend_from_slice(&train);
    }
    if source.valid {
        graph_triples.extend_from_slice(&valid);
    }
    if source.test {
        graph_triples.extend_from_slice(&test);
    }
    let mut kg = KnowledgeGraph::new(entities, predicates, graph_triples)?;
    if options.inverse_relations {
        kg = kg.with_inverse_relations();
    }

    summary.entities = kg.num_entities();
    summary.predicates = kg.num_predicates();
    summary.train = train.len();
    summary.valid = valid.len();
    summary.test = test.len();
    summary.graph_triples = kg.len();

    Ok(Dataset {
        kg,
        splits: DatasetSplits {
            train,
            valid,
            test,
            graph_source: source,
        },
        summary,
    })
}

/// Paths of `train.txt`, `valid.txt` and `test.txt` inside a dataset directory.
pub fn split_paths(dir: impl AsRef<Path>) -> [PathBuf; 3] {
    let dir = dir.as_ref();
    ["train.txt", "valid.txt", "test.txt"].map(|f| dir.join(f))
}

/// Loads `train.txt`, `valid.txt` and `test.txt` from a directory.
pub fn load_dataset_dir(dir: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset> {
    let [train, valid, test] = split_paths(dir);
    load_dataset(train, valid, test, options)
}

/// `(h, q, T)`: one head and predicate with every tail answering it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiTargetQuery {
    pub head: usize,
    pub query: usize,
    pub targets: Vec<usize>,
}

/// Groups a split into one query per distinct `(head, predicate)` pair, in
/// first-appearance order. Repeated triples contribute their tail once.
pub fn group_queries(split: &[Triple]) -> Vec<MultiTargetQuery> {
    let mut groups: IndexMap<(usize, usize), IndexSet<usize>> = IndexMap::new();
    for t in split {
        groups.entry((t.head, t.relation)).or_default().insert(t.tail);
    }
    groups
        .into_iter()
        .map(|((head, query), tails)| MultiTargetQuery {
            head,
            query,
            targets: tails.into_iter().collect(),
        })
        .collect()
}
