//! Scoring one multi-target query with hand-set attention, next to the plain
//! chained-product score that lets a target explain itself through its own
//! edge.
//!
//! ```text
//! cargo run --example score_multi_target
//! ```

use mplr::kg::{KnowledgeGraph, MultiTargetQuery};
use mplr::model::{neural_lp_score, score_query, AttentionTensor, Normalization, ScoreOptions};
use mplr::ops::build_operators;

fn main() -> mplr::Result<()> {
    let kg = KnowledgeGraph::from_named([
        ("z1", "sisterOf", "z2"),
        ("z2", "sisterOf", "z1"),
        ("z1", "sisterOf", "z4"),
        ("z2", "sisterOf", "z4"),
        ("z1", "daughterOf", "x1"),
        ("z2", "daughterOf", "x1"),
        ("z4", "daughterOf", "x2"),
    ]);
    let ops = build_operators(&kg);
    let sister = kg.predicate_index("sisterOf").unwrap();
    let e = |n: &str| kg.entity_index(n).unwrap();

    // operator 0 is the identity; predicate p is operator p + 1
    let attn = AttentionTensor::from_fn(1, 2, kg.num_predicates() + 1, |_, l, k| match (l, k) {
        (0, k) if k == sister + 1 => 1.0,
        (1, 0) => 0.5,
        (1, k) if k == sister + 1 => 0.5,
        _ => 0.0,
    });
    let query = MultiTargetQuery {
        head: e("z1"),
        query: sister,
        targets: vec![e("z2"), e("z4")],
    };
    let opts = ScoreOptions {
        normalization: Normalization::None,
        ..ScoreOptions::default()
    };
    let result = score_query(&ops, &attn, &query, opts)?;

    println!("query (z1, sisterOf, {{z2, z4}}), hop 1 = sisterOf, hop 2 = 0.5 identity + 0.5 sisterOf");
    println!("{:>6}  {:>9}  {:>12}", "entity", "corrected", "uncorrected");
    for t in 0..kg.num_entities() {
        println!(
            "{:>6}  {:>9.3}  {:>12.3}",
            kg.entity_name(t),
            result.prediction[t],
            neural_lp_score(&ops, &attn, e("z1"), t)
        );
    }
    for (t, eps) in &result.corrections {
        println!("correction removed from {}: {eps:.3}", kg.entity_name(*t));
    }
    println!("loss = {:.4}", result.loss);
    Ok(())
}
