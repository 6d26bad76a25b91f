//! Saturations on uniform triple samples of growing size, to see how far a
//! sample drifts from the full-graph values of one predicate.
//!
//! ```text
//! cargo run --release --example sampled_saturation -- data/umls isa
//! ```

use std::env;

use mplr::indicators::{sample_subgraph, DirectEdge, Saturation};
use mplr::kg::{load_dataset_dir, LoadOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = env::args().skip(1).collect();
    let dir = args.first().map(String::as_str).unwrap_or("data/umls");
    let data = load_dataset_dir(dir, &LoadOptions::default())?;
    let kg = &data.kg;
    let q = match args.get(1) {
        Some(name) => kg
            .predicate_index(name)
            .ok_or_else(|| format!("unknown predicate `{name}`"))?,
        None => (0..kg.num_predicates())
            .max_by_key(|&q| kg.predicate_count(q))
            .unwrap_or(0),
    };

    let full = Saturation::new(kg, DirectEdge::Exclude).report(2, 3)?;
    let Some(group) = full.group(q) else {
        return Err(format!("`{}` has no explaining pattern", kg.predicate_name(q)).into());
    };
    println!("predicate {}", kg.predicate_name(q));
    for size in [kg.len() / 8, kg.len() / 4, kg.len() / 2, kg.len()] {
        let sample = sample_subgraph(kg, 1, size)?;
        let sat = Saturation::new(&sample, DirectEdge::Exclude);
        println!("{size} triples:");
        for rec in &group.records {
            if sample.predicate_count(q) == 0 {
                println!("  (no {} triples sampled)", kg.predicate_name(q));
                break;
            }
            let gamma = sat.macro_saturation(&rec.pattern, q)?;
            let delta = sat.micro_saturation(&rec.pattern, q, 2)?;
            println!(
                "  {:<40} gamma {:.2} (full {:.2})  delta {:.2} (full {:.2})",
                rec.pattern.display(kg).to_string(),
                gamma,
                rec.gamma,
                delta,
                rec.delta
            );
        }
    }
    Ok(())
}
