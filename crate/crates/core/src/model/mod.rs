//! The multi-target rule learner: rank-`R` BiLSTM attention over the `|P| + 1`
//! operators, the corrected score recurrence, the logit loss with its analytic
//! gradient, rule extraction and checkpoints.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::MultiTargetQuery;
use crate::ops::OperatorSet;

mod attention;
mod checkpoint;
mod rules;
mod score;

pub use attention::{attention_backward, attention_forward, AttentionCache, AttentionTensor};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use rules::{
    extract_rules, extract_rules_from_attention, rules_table, rules_tsv, ExtractedRule, DEFAULT_ENUMERATION_BUDGET,
};
pub use score::{
    loss, loss_gradient, neural_lp_score, score_excluding, score_query, score_query_with_gradient, QueryGradient,
    ScoreResult,
};

/// How the direct-edge injection of the correction recurrence reads `u_{l-1}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonMode {
    /// Mass sitting at the head, `u_{l-1}[h]`, moved to `t` by the edge.
    #[default]
    Corrected,
    /// `u_{l-1}[t]`, the formula as printed.
    Literal,
}

impl EpsilonMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EpsilonMode::Corrected => "corrected",
            EpsilonMode::Literal => "literal",
        }
    }
}

impl FromStr for EpsilonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrected" => Ok(EpsilonMode::Corrected),
            "literal" => Ok(EpsilonMode::Literal),
            other => Err(Error::InvalidArgument(format!(
                "epsilon-mode must be `corrected` or `literal`, got `{other}`"
            ))),
        }
    }
}

/// Per-rank normalization of the corrected score vector to unit length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    L2,
    #[default]
    L1,
    None,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::L2 => "l2",
            Normalization::L1 => "l1",
            Normalization::None => "none",
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Normalization::L2),
            "l1" => Ok(Normalization::L1),
            "none" | "off" => Ok(Normalization::None),
            other => Err(Error::InvalidArgument(format!(
                "normalization must be `l2`, `l1` or `none`, got `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub epsilon_mode: EpsilonMode,
    pub normalization: Normalization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub num_predicates: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub rank: usize,
    pub max_len: usize,
}

impl ModelShape {
    /// Attention width: identity plus one slot per predicate.
    pub fn num_operators(&self) -> usize {
        self.num_predicates + 1
    }

    fn validate(&self) -> Result<()> {
        if self.num_predicates == 0
            || self.embed_dim == 0
            || self.hidden_dim == 0
            || self.rank == 0
            || self.max_len == 0
        {
            return Err(Error::Shape(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            name,
            shape,
            data: vec![0.0; len],
        }
    }
}

/// Which direction of a bidirectional cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellDirection {
    Forward = 0,
    Backward = 1,
}

/// Weights of one LSTM direction, gates stacked `i, f, g, o`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct CellIndex {
    pub w_x: usize,
    pub w_h: usize,
    pub bias: usize,
}

/// Every trainable tensor, in a fixed order:
/// query embeddings, then for each rank the forward and backward cell
/// (`w_x`, `w_h`, `bias`), then the shared projection weight and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    shape: ModelShape,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        let (p, de, dh) = (shape.num_predicates, shape.embed_dim, shape.hidden_dim);
        let mut tensors = vec![Tensor::zeros("query_embeddings".into(), vec![p, de])];
        for r in 0..shape.rank {
            for dir in ["fw", "bw"] {
                tensors.push(Tensor::zeros(format!("cell{r}.{dir}.w_x"), vec![4 * dh, de]));
                tensors.push(Tensor::zeros(format!("cell{r}.{dir}.w_h"), vec![4 * dh, dh]));
                tensors.push(Tensor::zeros(format!("cell{r}.{dir}.bias"), vec![4 * dh]));
            }
        }
        tensors.push(Tensor::zeros("projection.w".into(), vec![p + 1, 2 * dh]));
        tensors.push(Tensor::zeros("projection.b".into(), vec![p + 1]));
        Ok(ModelParams { shape, tensors })
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero biases except forget gates at 1.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dh = shape.hidden_dim;
        let mut fill = |t: &mut Tensor, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for x in t.data.iter_mut() {
                *x = dist.sample(&mut rng);
            }
        };
        let n = params.tensors.len();
        for (k, t) in params.tensors.iter_mut().enumerate() {
            if k == 0 {
                fill(t, shape.embed_dim);
            } else if k == n - 1 {
                // projection bias stays zero
            } else if k == n - 2 {
                fill(t, 2 * dh);
            } else if t.name.ends_with("bias") {
                t.data[dh..2 * dh].iter_mut().for_each(|b| *b = 1.0);
            } else {
                fill(t, dh);
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            shape: self.shape,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub(crate) fn cell(&self, rank: usize, dir: CellDirection) -> CellIndex {
        let base = 1 + (rank * 2 + dir as usize) * 3;
        CellIndex {
            w_x: base,
            w_h: base + 1,
            bias: base + 2,
        }
    }

    pub(crate) fn embeddings(&self) -> usize {
        0
    }

    pub(crate) fn projection_w(&self) -> usize {
        self.tensors.len() - 2
    }

    pub(crate) fn projection_b(&self) -> usize {
        self.tensors.len() - 1
    }

    pub(crate) fn data(&self, k: usize) -> &[f64] {
        &self.tensors[k].data
    }

    pub(crate) fn data_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.tensors[k].data
    }

    /// `self += other · scale`, shapes must match.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn from_parts(shape: ModelShape, tensors: Vec<Tensor>) -> Result<Self> {
        let reference = Self::zeros(shape)?;
        if reference.tensors.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, found {}",
                reference.tensors.len(),
                tensors.len()
            )));
        }
        for (want, got) in reference.tensors.iter().zip(&tensors) {
            if want.name != got.name || want.shape != got.shape || got.data.len() != want.data.len() {
                return Err(Error::Shape(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
        }
        Ok(ModelParams { shape, tensors })
    }
}

impl fmt::Display for ModelShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "|P|={} d_e={} d_h={} R={} L={}",
            self.num_predicates, self.embed_dim, self.hidden_dim, self.rank, self.max_len
        )
    }
}

/// Loss of one query and its gradient with respect to every parameter.
pub fn backward(
    ops: &OperatorSet,
    params: &ModelParams,
    query: &MultiTargetQuery,
    opts: ScoreOptions,
) -> Result<(ScoreResult, ModelParams)> {
    let (attn, cache) = attention_forward(params, query.query);
    let g = score_query_with_gradient(ops, &attn, query, opts)?;
    let mut grads = params.zeros_like();
    attention_backward(params, &cache, &g.attention, &mut grads);
    Ok((g.result, grads))
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> ModelShape {
        ModelShape {
            num_predicates: 3,
            embed_dim: 4,
            hidden_dim: 5,
            rank: 2,
            max_len: 2,
        }
    }

    #[test]
    fn layout() {
        let p = ModelParams::init(shape(), 1).unwrap();
        assert_eq!(p.tensors().len(), 1 + 2 * 2 * 3 + 2);
        let c = p.cell(1, CellDirection::Backward);
        assert_eq!(p.tensors()[c.w_x].name, "cell1.bw.w_x");
        assert_eq!(p.tensors()[c.bias].data[5..10], [1.0; 5]);
        assert_eq!(p.tensors()[c.bias].data[..5], [0.0; 5]);
        assert_eq!(p.tensors()[p.projection_w()].shape, [4, 10]);
        assert!(p.data(p.projection_b()).iter().all(|&b| b == 0.0));
        assert!(p.is_finite());
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(
            ModelParams::init(shape(), 7).unwrap(),
            ModelParams::init(shape(), 7).unwrap()
        );
        assert_ne!(
            ModelParams::init(shape(), 7).unwrap(),
            ModelParams::init(shape(), 8).unwrap()
        );
    }

    #[test]
    fn from_parts_checks_shapes() {
        let p = ModelParams::init(shape(), 1).unwrap();
        let mut t = p.tensors().to_vec();
        t[0].shape = vec![4, 3];
        assert!(ModelParams::from_parts(shape(), t).is_err());
        assert!(ModelParams::from_parts(shape(), p.tensors().to_vec()).is_ok());
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        use crate::kg::KnowledgeGraph;
        use crate::ops::build_operators;

        let kg = KnowledgeGraph::from_named([
            ("a", "p", "b"),
            ("b", "r", "c"),
            ("a", "q", "c"),
            ("a", "q", "d"),
            ("d", "p", "c"),
            ("c", "r", "a"),
        ]);
        let ops = build_operators(&kg);
        let shape = ModelShape {
            num_predicates: 3,
            embed_dim: 3,
            hidden_dim: 3,
            rank: 2,
            max_len: 2,
        };
        let params = ModelParams::init(shape, 11).unwrap();
        let query = MultiTargetQuery {
            head: kg.entity_index("a").unwrap(),
            query: kg.predicate_index("q").unwrap(),
            targets: vec![kg.entity_index("c").unwrap(), kg.entity_index("d").unwrap()],
        };
        let opts = ScoreOptions::default();
        let (_, grads) = backward(&ops, &params, &query, opts).unwrap();
        let f = |p: &ModelParams| {
            let (a, _) = attention_forward(p, query.query);
            score_query(&ops, &a, &query, opts).unwrap().loss
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (ti, t) in params.tensors().iter().enumerate() {
            for k in 0..t.data.len() {
                let mut plus = params.clone();
                plus.tensors_mut()[ti].data[k] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[ti].data[k] -= h;
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                let an = grads.tensors()[ti].data[k];
                if ti == 0 && k / 3 != query.query {
                    assert_eq!(an, 0.0, "unused embedding row must get no gradient");
                }
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                worst = worst.max(rel);
                assert!(rel < 1e-4, "{}[{k}]: fd {fd} analytic {an}", t.name);
            }
        }
        assert!(worst < 1e-4);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
