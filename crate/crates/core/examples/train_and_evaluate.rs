//! Train on a dataset directory and report link-prediction metrics.
//!
//! ```text
//! cargo run --release --example train_and_evaluate -- data/umls [key=value ...]
//! ```
//!
//! Keys are the training hyperparameter names, e.g. `max_epochs=30 seed=1
//! normalization=l1 learning_rate=0.005`.

use std::env;
use std::time::Instant;

use mplr::kg::{load_dataset_dir, LoadOptions};
use mplr::model::extract_rules;
use mplr::ops::build_operators;
use mplr::train::{evaluate, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = env::args().skip(1).collect();
    let dir = args.first().map(String::as_str).unwrap_or("data/umls");
    let mut config = TrainConfig::default();
    for arg in args.iter().skip(1) {
        let (key, value) = arg
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{arg}`"))?;
        config.set(key, value)?;
    }

    let data = load_dataset_dir(dir, &LoadOptions::default())?;
    print!("{}", data.summary.to_kv_text());
    let ops = build_operators(&data.kg);

    let start = Instant::now();
    let outcome = train(&ops, &data.splits.train, &data.splits.valid, &config, |e| {
        println!(
            "epoch {:>3}  loss {:.5}  valid mrr {:.4}  ({:.0?})",
            e.epoch,
            e.train_loss,
            e.valid_mrr.unwrap_or(f64::NAN),
            start.elapsed()
        );
    })?;
    println!("best epoch {}", outcome.best_epoch);

    let report = evaluate(&ops, &outcome.params, config.options, &data.splits.test, &[1, 3, 10])?;
    print!("{}", report.to_kv_text());

    let q = report
        .per_predicate
        .iter()
        .max_by_key(|(_, m)| m.count)
        .map(|(&q, _)| q)
        .unwrap_or(0);
    println!("top rules for {}:", data.kg.predicate_name(q));
    for rule in extract_rules(&outcome.params, q, 5)? {
        println!("  {:.4}  {}", rule.confidence, rule.pattern.display(&data.kg));
    }
    Ok(())
}
