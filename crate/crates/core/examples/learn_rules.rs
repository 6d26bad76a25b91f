//! Learns a planted two-hop rule on a synthetic graph, prints the ranked rules
//! and round-trips the model through a checkpoint file.
//!
//! ```text
//! cargo run --release --example learn_rules
//! ```

use std::collections::BTreeMap;

use mplr::kg::{KnowledgeGraph, Triple};
use mplr::model::{extract_rules, load_checkpoint, rules_table, save_checkpoint, Checkpoint};
use mplr::ops::build_operators;
use mplr::train::{evaluate, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // grandparentOf(x, y) <- parentOf(x, z), parentOf(z, y), on 8 lineages
    // of 8 generations
    let mut named = Vec::new();
    for line in 0..8 {
        for g in 0..8 {
            if g + 1 < 8 {
                named.push((format!("l{line}g{g}"), "parentOf", format!("l{line}g{}", g + 1)));
            }
            if g + 2 < 8 {
                named.push((format!("l{line}g{g}"), "grandparentOf", format!("l{line}g{}", g + 2)));
            }
        }
    }
    let kg = KnowledgeGraph::from_named(named.iter().map(|(h, p, t)| (h.as_str(), *p, t.as_str())));
    let gp = kg.predicate_index("grandparentOf").unwrap();
    let facts: Vec<Triple> = kg.triples().iter().copied().filter(|t| t.relation == gp).collect();
    let (valid, train_split): (Vec<Triple>, Vec<Triple>) = facts.iter().partition(|t| t.head % 5 == 0);
    let mut train_split = train_split;
    train_split.extend(kg.triples().iter().copied().filter(|t| t.relation != gp));

    let config = TrainConfig {
        embed_dim: 16,
        hidden_dim: 16,
        rank: 2,
        learning_rate: 0.02,
        max_epochs: 60,
        patience: 60,
        ..TrainConfig::default()
    };
    let ops = build_operators(&kg);
    let outcome = train(&ops, &train_split, &valid, &config, |e| {
        if e.epoch % 10 == 0 {
            println!(
                "epoch {:>3}  loss {:.4}  valid mrr {:.3}",
                e.epoch,
                e.train_loss,
                e.valid_mrr.unwrap_or(0.0)
            );
        }
    })?;
    let report = evaluate(&ops, &outcome.params, config.options, &valid, &[1, 3])?;
    println!(
        "valid mrr {:.3}, hit@1 {:.3}\n",
        report.mrr(),
        report.overall.hit(1).unwrap_or(0.0)
    );

    let mut rules = Vec::new();
    for q in 0..kg.num_predicates() {
        rules.extend(extract_rules(&outcome.params, q, 3)?);
    }
    print!("{}", rules_table(&kg, &rules));

    let path = std::env::temp_dir().join("learn_rules_example.ckpt");
    let ckpt = Checkpoint {
        params: outcome.params,
        seed: config.seed,
        options: config.options,
        hyperparameters: config.to_map().into_iter().collect::<BTreeMap<_, _>>(),
        predicates: kg.predicates().iter().cloned().collect(),
    };
    save_checkpoint(&path, &ckpt)?;
    let back = load_checkpoint(&path)?;
    println!("\ncheckpoint {} reloads identically: {}", path.display(), back == ckpt);
    std::fs::remove_file(&path)?;
    Ok(())
}
