//! Forward/backward bifurcation curves and the Hit@k ceilings they imply for
//! the test split.
//!
//! ```text
//! cargo run --release --example bifurcation_bounds -- data/umls [lambda_max]
//! ```

use std::env;

use mplr::indicators::{bifurcation, bifurcation_table};
use mplr::kg::{load_dataset_dir, Direction, LoadOptions};
use mplr::train::hit_upper_bound;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = env::args().skip(1).collect();
    let dir = args.first().map(String::as_str).unwrap_or("data/umls");
    let lambda_max: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let data = load_dataset_dir(dir, &LoadOptions::default())?;
    let kg = &data.kg;

    let mut records = Vec::new();
    for q in (0..kg.num_predicates()).filter(|&q| kg.predicate_count(q) > 0) {
        records.push(bifurcation(kg, q, Direction::Forward, lambda_max)?);
    }
    println!("whole graph, forward (%):");
    print!("{}", bifurcation_table(kg, &records));

    let test = kg.with_triples(data.splits.test.iter().copied())?;
    println!("\ntest split ceilings:");
    println!("{:<24} {:>6} {:>6} {:>6}", "predicate", "hit@1", "hit@3", "hit@10");
    for q in (0..test.num_predicates()).filter(|&q| test.predicate_count(q) > 0) {
        let rec = bifurcation(&test, q, Direction::Forward, 11)?;
        println!(
            "{:<24} {:>6.3} {:>6.3} {:>6.3}",
            kg.predicate_name(q),
            hit_upper_bound(&rec, 1)?,
            hit_upper_bound(&rec, 3)?,
            hit_upper_bound(&rec, 10)?
        );
    }
    Ok(())
}
