//! Mini-batch Adam training with early stopping on validation MRR, and the
//! link-prediction protocol: for each `(h, q, t)` every entity except `h` is
//! scored with the edge `(h, q, t)` cut from propagation, and `t` is ranked with
//! ties sharing the mean rank.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::indicators::BifurcationRecord;
use crate::kg::{group_queries, KnowledgeGraph, MultiTargetQuery, Triple};
use crate::model::{
    attention_backward, attention_forward, score_excluding, score_query_with_gradient, AttentionTensor, ModelParams,
    ModelShape, ScoreOptions,
};
use crate::ops::OperatorSet;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_len: usize,
    pub rank: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub options: ScoreOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_len: 2,
            rank: 3,
            embed_dim: 128,
            hidden_dim: 128,
            batch_size: 128,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 10,
            patience: 3,
            seed: 0,
            options: ScoreOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_len", self.max_len),
            ("rank", self.rank),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1), eps > 0".into()));
        }
        Ok(())
    }

    pub fn shape(&self, num_predicates: usize) -> ModelShape {
        ModelShape {
            num_predicates,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            rank: self.rank,
            max_len: self.max_len,
        }
    }

    /// Hyperparameters as sorted key/value pairs, for manifests and
    /// checkpoints.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        [
            ("max_rule_len", self.max_len.to_string()),
            ("rank", self.rank.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("adam_beta1", self.beta1.to_string()),
            ("adam_beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("epsilon_mode", self.options.epsilon_mode.as_str().to_string()),
            ("normalization", self.options.normalization.as_str().to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Set one hyperparameter by its `to_map` key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
        }
        match key.trim() {
            "max_rule_len" => self.max_len = parse(key, value)?,
            "rank" => self.rank = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "adam_beta1" => self.beta1 = parse(key, value)?,
            "adam_beta2" => self.beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "epsilon_mode" => self.options.epsilon_mode = value.trim().parse()?,
            "normalization" => self.options.normalization = value.trim().parse()?,
            other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn from_config(params: &ModelParams, cfg: &TrainConfig) -> Self {
        Self::new(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2) = (self.beta1, self.beta2);
        let tensors = params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().iter_mut().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_mrr: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch, ties going to the lower
    /// training loss (the last epoch without a validation split).
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_valid_mrr: Option<f64>,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    /// `epoch  train_loss  valid_mrr` lines.
    pub fn log_text(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tvalid_mrr\n");
        for e in &self.log {
            let mrr = e.valid_mrr.map(|m| m.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{}\t{}\t{}", e.epoch, e.train_loss, mrr);
        }
        out
    }
}

/// Mean loss of one batch; gradients are added to `grads` already divided by
/// the batch size.
fn batch_step(
    ops: &OperatorSet,
    params: &ModelParams,
    batch: &[&MultiTargetQuery],
    opts: ScoreOptions,
    grads: &mut ModelParams,
) -> Result<f64> {
    let mut preds: Vec<usize> = batch.iter().map(|q| q.query).collect();
    preds.sort_unstable();
    preds.dedup();
    let attn: Vec<_> = preds.par_iter().map(|&q| attention_forward(params, q)).collect();
    let slot = |q: usize| preds.binary_search(&q).expect("predicate in batch");

    let per_query: Vec<Result<(f64, AttentionTensor)>> = batch
        .par_iter()
        .map(|query| {
            let g = score_query_with_gradient(ops, &attn[slot(query.query)].0, query, opts)?;
            Ok((g.result.loss, g.attention))
        })
        .collect();

    let scale = 1.0 / batch.len() as f64;
    let shape = params.shape();
    let mut g_attn: Vec<AttentionTensor> = preds
        .iter()
        .map(|_| AttentionTensor::zeros(shape.rank, shape.max_len, shape.num_operators()))
        .collect();
    let mut total = 0.0;
    for (query, res) in batch.iter().zip(per_query) {
        let (loss, g) = res?;
        total += loss;
        g_attn[slot(query.query)].add_assign(&g);
    }
    for (g, (_, cache)) in g_attn.iter_mut().zip(&attn) {
        *g = AttentionTensor::from_fn(g.rank(), g.max_len(), g.width(), |r, l, k| g.get(r, l, k) * scale);
        attention_backward(params, cache, g, grads);
    }
    Ok(total * scale)
}

/// Trains on `train` queries over the graph behind `ops`; `valid` drives early
/// stopping.
pub fn train(
    ops: &OperatorSet,
    train: &[Triple],
    valid: &[Triple],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    let shape = config.shape(ops.num_predicates());
    let mut params = ModelParams::init(shape, config.seed)?;
    let mut adam = Adam::from_config(&params, config);
    let queries = group_queries(train);
    let mut order: Vec<usize> = (0..queries.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05ee_d0fb_a7c4);

    let mut best = (params.clone(), 0usize, None::<f64>, f64::INFINITY);
    let mut since_best = 0;
    let mut log = Vec::new();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&MultiTargetQuery> = chunk.iter().map(|&i| &queries[i]).collect();
            let mut grads = params.zeros_like();
            let loss = match batch_step(ops, &params, &batch, config.options, &mut grads) {
                Ok(l) if l.is_finite() => l,
                Ok(l) => {
                    return Err(Error::Diverged {
                        epoch,
                        batch: b,
                        loss: l,
                    })
                }
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Diverged {
                        epoch,
                        batch: b,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            if !grads.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            adam.update(&mut params, &grads);
            epoch_loss += loss * batch.len() as f64;
        }
        let train_loss = epoch_loss / queries.len() as f64;
        let valid_mrr = if valid.is_empty() {
            None
        } else {
            Some(evaluate(ops, &params, config.options, valid, &[1])?.mrr())
        };
        let entry = EpochLog {
            epoch,
            train_loss,
            valid_mrr,
        };
        on_epoch(&entry);
        log.push(entry);
        // equal validation MRR counts as progress only with a lower loss
        let improved = match (valid_mrr, best.2) {
            (Some(m), Some(b)) => m > b || (m == b && train_loss < best.3),
            _ => true,
        };
        if improved {
            best = (params.clone(), epoch, valid_mrr, train_loss);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best.0,
        best_epoch: best.1,
        best_valid_mrr: best.2,
        log,
    })
}

/// Rank of a score among candidates, ties sharing the mean position.
pub fn tie_rank(answer: f64, others: impl IntoIterator<Item = f64>) -> f64 {
    let (mut greater, mut ties) = (0usize, 0usize);
    for s in others {
        if s > answer {
            greater += 1;
        } else if s == answer {
            ties += 1;
        }
    }
    1.0 + greater as f64 + ties as f64 / 2.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub count: usize,
    pub mrr: f64,
    /// `(k, fraction)`, ascending `k`.
    pub hits: Vec<(usize, f64)>,
}

impl Metrics {
    fn from_ranks(ranks: &[f64], ks: &[usize]) -> Self {
        let n = ranks.len().max(1) as f64;
        Metrics {
            count: ranks.len(),
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            hits: ks
                .iter()
                .map(|&k| (k, ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / n))
                .collect(),
        }
    }

    pub fn hit(&self, k: usize) -> Option<f64> {
        self.hits.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub overall: Metrics,
    pub per_predicate: BTreeMap<usize, Metrics>,
    /// Rank of each evaluated triple, in input order.
    pub ranks: Vec<f64>,
}

impl EvalReport {
    pub fn mrr(&self) -> f64 {
        self.overall.mrr
    }

    pub fn num_queries(&self) -> usize {
        self.overall.count
    }

    /// One row for all queries and one per predicate.
    pub fn to_tsv(&self, kg: &KnowledgeGraph) -> String {
        let mut out = String::from("scope\tqueries\tmrr");
        for (k, _) in &self.overall.hits {
            let _ = write!(out, "\thit@{k}");
        }
        out.push('\n');
        let mut row = |name: &str, m: &Metrics| {
            let _ = write!(out, "{name}\t{}\t{}", m.count, m.mrr);
            for (_, v) in &m.hits {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        };
        row("all", &self.overall);
        for (&q, m) in &self.per_predicate {
            row(kg.predicate_name(q), m);
        }
        out
    }

    /// `key = value` summary.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "num_queries = {}", self.overall.count);
        let _ = writeln!(out, "mrr = {}", self.overall.mrr);
        for (k, v) in &self.overall.hits {
            let _ = writeln!(out, "hit@{k} = {v}");
        }
        out.push_str("tie_rule = mean rank among ties\n");
        out.push_str("candidates = all entities except the head\n");
        out.push_str("direct_edge = removed\n");
        out
    }
}

/// Link-prediction metrics for `triples`.
pub fn evaluate(
    ops: &OperatorSet,
    params: &ModelParams,
    opts: ScoreOptions,
    triples: &[Triple],
    ks: &[usize],
) -> Result<EvalReport> {
    if params.shape().num_predicates != ops.num_predicates() {
        return Err(Error::Shape(format!(
            "model has {} predicates, graph has {}",
            params.shape().num_predicates,
            ops.num_predicates()
        )));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut preds: Vec<usize> = triples.iter().map(|t| t.relation).collect();
    preds.sort_unstable();
    preds.dedup();
    let attn: Vec<AttentionTensor> = preds.par_iter().map(|&q| attention_forward(params, q).0).collect();
    let ranks: Vec<f64> = triples
        .par_iter()
        .map(|tri| {
            let a = &attn[preds.binary_search(&tri.relation).unwrap()];
            let s = score_excluding(ops, a, tri.head, tri.relation, Some(tri.tail), opts.normalization)?;
            let others = s
                .iter()
                .enumerate()
                .filter(|&(e, _)| e != tri.head && e != tri.tail)
                .map(|(_, &v)| v);
            Ok(tie_rank(s[tri.tail], others))
        })
        .collect::<Result<_>>()?;

    let mut by_pred: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (tri, &r) in triples.iter().zip(&ranks) {
        by_pred.entry(tri.relation).or_default().push(r);
    }
    Ok(EvalReport {
        overall: Metrics::from_ranks(&ranks, &ks),
        per_predicate: by_pred
            .into_iter()
            .map(|(q, r)| (q, Metrics::from_ranks(&r, &ks)))
            .collect(),
        ranks,
    })
}

/// Largest Hit@k reachable when each head with `d` answers can place at most
/// `min(d, k)` of them in the top `k`: `Σ_d p_d · min(d, k) / d` with
/// `p_d = bifur(d) − bifur(d + 1)`. Heads with degree ≥ `λ_max` are counted at
/// `λ_max`, which keeps the result an upper bound.
pub fn hit_upper_bound(record: &BifurcationRecord, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let lm = record.lambda_max();
    if lm < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "bifurcation curve stops at lambda = {lm}, need at least {}",
            k + 1
        )));
    }
    for l in 1..lm {
        if record.at(l + 1) > record.at(l) {
            return Err(Error::InconsistentCurve(l + 1));
        }
    }
    let mut bound = 0.0;
    for d in 1..=lm {
        let p = if d < lm {
            record.at(d) - record.at(d + 1)
        } else {
            record.at(d)
        };
        bound += p * d.min(k) as f64 / d as f64;
    }
    Ok(bound)
}
