//! Score recurrence, loss and the reverse pass down to the attention weights.
//!
//! Per rank `r` with `A_l = Σ_k a_k^l M_k`:
//!
//! ```text
//! u_0 = e_h                u_l = u_{l-1} A_l
//! ε_0 = 0                  ε_l = ε_{l-1} A_l + a_q^l · β_l · e_t
//! c   = u_L − Σ_t ε_L^{(t)}[t] · e_t
//! ```
//!
//! with one `ε^{(t)}` per target whose direct edge `(h, q, t)` is in the graph.
//! `β_l = u_{l-1}[h]` in [`EpsilonMode::Corrected`]; [`EpsilonMode::Literal`]
//! reads `u_{l-1}[t]` for `l ≥ 2`. Each `c` is normalized and the ranks summed.

use crate::error::{Error, Result};
use crate::kg::MultiTargetQuery;
use crate::ops::OperatorSet;

use super::{sigmoid, AttentionTensor, EpsilonMode, Normalization, ScoreOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreResult {
    /// Normalized, rank-summed prediction `s`.
    pub prediction: Vec<f64>,
    /// `(t, Σ_r ε_L^{(t)}[t])` for each target with a direct edge, before
    /// normalization.
    pub corrections: Vec<(usize, f64)>,
    pub loss: f64,
}

/// Score plus the loss gradient with respect to the attention weights.
#[derive(Clone, Debug)]
pub struct QueryGradient {
    pub result: ScoreResult,
    pub attention: AttentionTensor,
}

fn check_shapes(ops: &OperatorSet, attn: &AttentionTensor, head: usize, q: usize) -> Result<()> {
    if attn.width() != ops.len() {
        return Err(Error::Shape(format!(
            "attention has {} operators, graph has {}",
            attn.width(),
            ops.len()
        )));
    }
    if head >= ops.num_entities() || q >= ops.num_predicates() {
        return Err(Error::Shape(format!("query ({head}, {q}) outside the graph")));
    }
    Ok(())
}

/// `out = state · Σ_k w_k M_k`.
fn mix(ops: &OperatorSet, weights: &[f64], state: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; state.len()];
    for (k, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            ops.get(k).accumulate(state, w, &mut out);
        }
    }
    out
}

/// `out = Σ_k w_k M_k · grad`.
fn mix_transpose(ops: &OperatorSet, weights: &[f64], grad: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grad.len()];
    for (k, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            ops.get(k).accumulate_transpose(grad, w, &mut out);
        }
    }
    out
}

struct TargetTrace {
    target: usize,
    /// `ε_0 ..= ε_L`.
    eps: Vec<Vec<f64>>,
    /// `β_1 ..= β_L`.
    beta: Vec<f64>,
}

struct RankTrace {
    u: Vec<Vec<f64>>,
    targets: Vec<TargetTrace>,
    norm: f64,
    s: Vec<f64>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn norm_of(c: &[f64], mode: Normalization) -> f64 {
    let n = match mode {
        Normalization::L2 => c.iter().map(|x| x * x).sum::<f64>().sqrt(),
        Normalization::L1 => c.iter().map(|x| x.abs()).sum(),
        Normalization::None => 1.0,
    };
    if n > 0.0 {
        n
    } else {
        1.0
    }
}

fn rank_forward(
    ops: &OperatorSet,
    attn: &AttentionTensor,
    r: usize,
    query: &MultiTargetQuery,
    opts: ScoreOptions,
) -> RankTrace {
    let n = ops.num_entities();
    let len = attn.max_len();
    let h = query.head;
    let qk = query.query + 1;
    let mut u = Vec::with_capacity(len + 1);
    let mut u0 = vec![0.0; n];
    u0[h] = 1.0;
    u.push(u0);
    for l in 0..len {
        let next = mix(ops, attn.slice(r, l), &u[l]);
        u.push(next);
    }
    let q_op = ops.get(qk);
    let targets: Vec<TargetTrace> = query
        .targets
        .iter()
        .filter(|&&t| q_op.get(h, t))
        .map(|&t| {
            let mut eps = vec![vec![0.0; n]];
            let mut beta = Vec::with_capacity(len);
            for l in 0..len {
                let b = match opts.epsilon_mode {
                    EpsilonMode::Literal if l > 0 => u[l][t],
                    _ => u[l][h],
                };
                let mut next = if l == 0 {
                    vec![0.0; n]
                } else {
                    mix(ops, attn.slice(r, l), &eps[l])
                };
                next[t] += attn.get(r, l, qk) * b;
                beta.push(b);
                eps.push(next);
            }
            TargetTrace { target: t, eps, beta }
        })
        .collect();
    let mut c = u[len].clone();
    for tr in &targets {
        c[tr.target] -= tr.eps[len][tr.target];
    }
    let norm = norm_of(&c, opts.normalization);
    let s = c.iter().map(|x| x / norm).collect();
    RankTrace { u, targets, norm, s }
}

/// Gradient of one rank's `s` with respect to its attention slices, added to
/// `g_attn`.
#[allow(clippy::too_many_arguments)]
fn rank_backward(
    ops: &OperatorSet,
    attn: &AttentionTensor,
    r: usize,
    query: &MultiTargetQuery,
    opts: ScoreOptions,
    trace: &RankTrace,
    g_s: &[f64],
    g_attn: &mut AttentionTensor,
) {
    let len = attn.max_len();
    let n = g_s.len();
    let h = query.head;
    let qk = query.query + 1;
    let g_c: Vec<f64> = match opts.normalization {
        Normalization::None => g_s.to_vec(),
        Normalization::L2 => {
            let dot: f64 = trace.s.iter().zip(g_s).map(|(a, b)| a * b).sum();
            g_s.iter()
                .zip(&trace.s)
                .map(|(g, s)| (g - s * dot) / trace.norm)
                .collect()
        }
        Normalization::L1 => {
            let dot: f64 = trace.s.iter().zip(g_s).map(|(a, b)| a * b).sum();
            g_s.iter()
                .zip(&trace.s)
                .map(|(g, s)| (g - sign(*s) * dot) / trace.norm)
                .collect()
        }
    };

    // Gradient reaching u_{l} through the β terms, indexed by l.
    let mut g_u_extra = vec![vec![0.0; n]; len];
    for tr in &trace.targets {
        let t = tr.target;
        let mut eta = vec![0.0; n];
        eta[t] = -g_c[t];
        for l in (0..len).rev() {
            let a = attn.slice(r, l);
            let slot = g_attn.slice_mut(r, l);
            if l > 0 {
                for (k, g) in slot.iter_mut().enumerate() {
                    *g += ops.get(k).bilinear(&tr.eps[l], &eta);
                }
            }
            slot[qk] += tr.beta[l] * eta[t];
            let g_beta = a[qk] * eta[t];
            match opts.epsilon_mode {
                EpsilonMode::Literal if l > 0 => g_u_extra[l][t] += g_beta,
                _ => g_u_extra[l][h] += g_beta,
            }
            if l == 0 {
                break;
            }
            eta = mix_transpose(ops, a, &eta);
        }
    }

    let mut g = g_c;
    for l in (0..len).rev() {
        let a = attn.slice(r, l);
        let slot = g_attn.slice_mut(r, l);
        for (k, ga) in slot.iter_mut().enumerate() {
            *ga += ops.get(k).bilinear(&trace.u[l], &g);
        }
        if l == 0 {
            break;
        }
        g = mix_transpose(ops, a, &g);
        for (x, e) in g.iter_mut().zip(&g_u_extra[l]) {
            *x += e;
        }
    }
}

fn forward_all(
    ops: &OperatorSet,
    attn: &AttentionTensor,
    query: &MultiTargetQuery,
    opts: ScoreOptions,
) -> Result<(Vec<RankTrace>, ScoreResult, Vec<f64>)> {
    check_shapes(ops, attn, query.head, query.query)?;
    if let Some(&t) = query.targets.iter().find(|&&t| t >= ops.num_entities()) {
        return Err(Error::Shape(format!("target {t} outside the graph")));
    }
    let n = ops.num_entities();
    let traces: Vec<RankTrace> = (0..attn.rank())
        .map(|r| rank_forward(ops, attn, r, query, opts))
        .collect();
    let mut prediction = vec![0.0; n];
    for tr in &traces {
        for (p, s) in prediction.iter_mut().zip(&tr.s) {
            *p += s;
        }
    }
    let corrections = traces
        .first()
        .map(|first| {
            first
                .targets
                .iter()
                .enumerate()
                .map(|(i, tt)| {
                    let sum = traces
                        .iter()
                        .map(|tr| tr.targets[i].eps[attn.max_len()][tt.target])
                        .sum();
                    (tt.target, sum)
                })
                .collect()
        })
        .unwrap_or_default();
    let mut target = vec![0.0; n];
    for &t in &query.targets {
        target[t] = 1.0;
    }
    let loss = loss(&prediction, &target)?;
    Ok((
        traces,
        ScoreResult {
            prediction,
            corrections,
            loss,
        },
        target,
    ))
}

/// Scores `query` against every entity.
pub fn score_query(
    ops: &OperatorSet,
    attn: &AttentionTensor,
    query: &MultiTargetQuery,
    opts: ScoreOptions,
) -> Result<ScoreResult> {
    forward_all(ops, attn, query, opts).map(|(_, r, _)| r)
}

/// [`score_query`] plus `∂loss/∂attention`.
pub fn score_query_with_gradient(
    ops: &OperatorSet,
    attn: &AttentionTensor,
    query: &MultiTargetQuery,
    opts: ScoreOptions,
) -> Result<QueryGradient> {
    let (traces, result, target) = forward_all(ops, attn, query, opts)?;
    let g_s = loss_gradient(&result.prediction, &target);
    let mut g_attn = AttentionTensor::zeros(attn.rank(), attn.max_len(), attn.width());
    for (r, tr) in traces.iter().enumerate() {
        rank_backward(ops, attn, r, query, opts, tr, &g_s, &mut g_attn);
    }
    Ok(QueryGradient {
        result,
        attention: g_attn,
    })
}

/// Uncorrected chain score `Σ_r (e_h Π_l A_l)[t]`, no normalization.
pub fn neural_lp_score(ops: &OperatorSet, attn: &AttentionTensor, head: usize, tail: usize) -> f64 {
    let n = ops.num_entities();
    (0..attn.rank())
        .map(|r| {
            let mut u = vec![0.0; n];
            u[head] = 1.0;
            for l in 0..attn.max_len() {
                u = mix(ops, attn.slice(r, l), &u);
            }
            u[tail]
        })
        .sum()
}

/// Scores of every entity for `(head, q, ?)` with the edge `(head, q, excluded)`
/// removed from propagation, normalized per rank and summed.
pub fn score_excluding(
    ops: &OperatorSet,
    attn: &AttentionTensor,
    head: usize,
    q: usize,
    excluded: Option<usize>,
    normalization: Normalization,
) -> Result<Vec<f64>> {
    check_shapes(ops, attn, head, q)?;
    let n = ops.num_entities();
    let qk = q + 1;
    let cut = excluded.filter(|&t| t < n && ops.get(qk).get(head, t));
    let mut out = vec![0.0; n];
    for r in 0..attn.rank() {
        let mut u = vec![0.0; n];
        u[head] = 1.0;
        for l in 0..attn.max_len() {
            let mut next = mix(ops, attn.slice(r, l), &u);
            if let Some(t) = cut {
                next[t] -= attn.get(r, l, qk) * u[head];
            }
            u = next;
        }
        let norm = norm_of(&u, normalization);
        for (o, x) in out.iter_mut().zip(&u) {
            *o += x / norm;
        }
    }
    Ok(out)
}

/// Stabilized logit loss `Σ max(s,0) − v·s + ln(1 + e^{−|s|})`.
pub fn loss(s: &[f64], v: &[f64]) -> Result<f64> {
    if s.len() != v.len() {
        return Err(Error::Shape(format!("prediction {} vs target {}", s.len(), v.len())));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("prediction"));
    }
    Ok(s.iter()
        .zip(v)
        .map(|(&s, &v)| s.max(0.0) - v * s + (-s.abs()).exp().ln_1p())
        .sum())
}

/// `∂loss/∂s = σ(s) − v`.
pub fn loss_gradient(s: &[f64], v: &[f64]) -> Vec<f64> {
    s.iter().zip(v).map(|(&s, &v)| sigmoid(s) - v).collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::kg::{KnowledgeGraph, Triple};
    use crate::ops::build_operators;

    fn toy() -> KnowledgeGraph {
        KnowledgeGraph::from_named([
            ("z1", "sisterOf", "z2"),
            ("z2", "sisterOf", "z1"),
            ("z1", "daughterOf", "x1"),
            ("z2", "daughterOf", "x1"),
            ("z4", "daughterOf", "x2"),
            ("z2", "sisterOf", "z4"),
        ])
    }

    fn raw() -> ScoreOptions {
        ScoreOptions {
            epsilon_mode: EpsilonMode::Corrected,
            normalization: Normalization::None,
        }
    }

    fn query(kg: &KnowledgeGraph, h: &str, q: &str, ts: &[&str]) -> MultiTargetQuery {
        MultiTargetQuery {
            head: kg.entity_index(h).unwrap(),
            query: kg.predicate_index(q).unwrap(),
            targets: ts.iter().map(|t| kg.entity_index(t).unwrap()).collect(),
        }
    }

    #[test]
    fn chain_through_sister_scores_one() {
        let kg = toy();
        let ops = build_operators(&kg);
        let sis = kg.predicate_index("sisterOf").unwrap() + 1;
        let dau = kg.predicate_index("daughterOf").unwrap() + 1;
        let attn = AttentionTensor::one_hot(ops.len(), &[sis, dau]);
        let qy = query(&kg, "z1", "daughterOf", &["x1"]);
        let res = score_query(&ops, &attn, &qy, raw()).unwrap();
        let x1 = kg.entity_index("x1").unwrap();
        assert_eq!(res.prediction[x1], 1.0);
        assert_eq!(neural_lp_score(&ops, &attn, qy.head, x1), 1.0);
    }

    #[test]
    fn direct_edge_is_cancelled() {
        let kg = toy();
        let ops = build_operators(&kg);
        let dau = kg.predicate_index("daughterOf").unwrap() + 1;
        let attn = AttentionTensor::one_hot(ops.len(), &[dau, 0]);
        let qy = query(&kg, "z1", "daughterOf", &["x1"]);
        let x1 = kg.entity_index("x1").unwrap();
        let res = score_query(&ops, &attn, &qy, raw()).unwrap();
        assert_eq!(res.prediction[x1], 0.0);
        assert_eq!(res.corrections, vec![(x1, 1.0)]);
        assert_eq!(neural_lp_score(&ops, &attn, qy.head, x1), 1.0);
        let excl = score_excluding(&ops, &attn, qy.head, qy.query, Some(x1), Normalization::None).unwrap();
        assert_eq!(excl[x1], 0.0);
    }

    #[test]
    fn all_identity_returns_head() {
        let kg = toy();
        let ops = build_operators(&kg);
        let attn = AttentionTensor::one_hot(ops.len(), &[0, 0]);
        let qy = query(&kg, "z1", "sisterOf", &["z2"]);
        let res = score_query(&ops, &attn, &qy, raw()).unwrap();
        let mut want = vec![0.0; kg.num_entities()];
        want[qy.head] = 1.0;
        assert_eq!(res.prediction, want);
        assert!(res.corrections.iter().all(|&(_, e)| e == 0.0));
        let z4 = kg.entity_index("z4").unwrap();
        assert_eq!(neural_lp_score(&ops, &attn, z4, z4), 1.0);
        assert_eq!(neural_lp_score(&ops, &attn, z4, qy.head), 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let kg = toy();
        let ops = build_operators(&kg);
        let attn = AttentionTensor::one_hot(2, &[0, 1]);
        let qy = query(&kg, "z1", "sisterOf", &["z2"]);
        assert!(matches!(score_query(&ops, &attn, &qy, raw()), Err(Error::Shape(_))));
    }

    #[test]
    fn loss_examples() {
        assert!((loss(&[0.0; 6], &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap() - 6.0 * 2f64.ln()).abs() < 1e-12);
        let l = loss(&[20.0], &[1.0]).unwrap();
        let want = (-20f64).exp().ln_1p();
        assert!((l - want).abs() < 1e-20 && (l - 2.06e-9).abs() < 1e-11);
        assert_eq!(loss_gradient(&[0.0, 0.0], &[1.0, 0.0]), vec![-0.5, 0.5]);
        assert!(loss(&[1e4, -1e4], &[0.0, 1.0]).unwrap().is_finite());
        assert!(matches!(loss(&[f64::NAN], &[0.0]), Err(Error::NonFinite(_))));
    }

    proptest! {
        #[test]
        fn loss_matches_naive_form(s in proptest::collection::vec(-20.0f64..20.0, 1..20), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = s.iter().map(|_| rng.gen_range(0..2) as f64).collect();
            let naive: f64 = s.iter().zip(&v).map(|(&s, &v)| {
                let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
                -(v * sig(s).ln() + (1.0 - v) * sig(-s).ln())
            }).sum();
            prop_assert!((loss(&s, &v).unwrap() - naive).abs() < 1e-9);
            prop_assert!(loss(&s, &v).unwrap() >= 0.0);
        }
    }

    fn random_case(seed: u64) -> (KnowledgeGraph, AttentionTensor, MultiTargetQuery) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(3..=6);
        let p = rng.gen_range(1..=3);
        let ents: indexmap::IndexSet<String> = (0..n).map(|i| format!("e{i}")).collect();
        let preds: indexmap::IndexSet<String> = (0..p).map(|i| format!("p{i}")).collect();
        let mut triples = vec![];
        for h in 0..n {
            for r in 0..p {
                for t in 0..n {
                    if rng.gen_bool(0.3) {
                        triples.push(Triple::new(h, r, t));
                    }
                }
            }
        }
        let q = rng.gen_range(0..p);
        let h = rng.gen_range(0..n);
        let mut targets: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
        if targets.is_empty() {
            targets.push(rng.gen_range(0..n));
        }
        for &t in &targets {
            if rng.gen_bool(0.7) {
                triples.push(Triple::new(h, q, t));
            }
        }
        let kg = KnowledgeGraph::new(ents, preds, triples).unwrap();
        let rank = rng.gen_range(1..=2);
        let len = rng.gen_range(1..=3);
        let draws: Vec<f64> = (0..rank * len * (p + 1)).map(|_| rng.gen_range(0.0..1.0)).collect();
        let raw = AttentionTensor::from_fn(rank, len, p + 1, |r, l, k| draws[(r * len + l) * (p + 1) + k]);
        let attn = AttentionTensor::from_fn(rank, len, p + 1, |r, l, k| {
            raw.get(r, l, k) / raw.slice(r, l).iter().sum::<f64>()
        });
        (
            kg,
            attn,
            MultiTargetQuery {
                head: h,
                query: q,
                targets,
            },
        )
    }

    #[test]
    fn attention_gradient_matches_finite_differences() {
        for seed in 0..60 {
            let (kg, attn, qy) = random_case(seed);
            let ops = build_operators(&kg);
            for mode in [EpsilonMode::Corrected, EpsilonMode::Literal] {
                for norm in [Normalization::None, Normalization::L2, Normalization::L1] {
                    let opts = ScoreOptions {
                        epsilon_mode: mode,
                        normalization: norm,
                    };
                    let g = score_query_with_gradient(&ops, &attn, &qy, opts).unwrap();
                    let h = 1e-6;
                    for r in 0..attn.rank() {
                        for l in 0..attn.max_len() {
                            for k in 0..attn.width() {
                                let bump = |d: f64| {
                                    let mut a = attn.clone();
                                    a.slice_mut(r, l)[k] += d;
                                    score_query(&ops, &a, &qy, opts).unwrap().loss
                                };
                                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                                let an = g.attention.get(r, l, k);
                                assert!(
                                    (fd - an).abs() <= 1e-6 + 1e-5 * fd.abs(),
                                    "seed {seed} {mode:?} {norm:?} ({r},{l},{k}): fd {fd} analytic {an}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}
