//! Saturation table for every predicate of a dataset directory.
//!
//! ```text
//! cargo run --release --example saturation_report -- data/umls [max_len] [top_n] [exclude|include]
//! ```

use std::env;

use mplr::indicators::{saturation_cost, saturation_report, DirectEdge};
use mplr::kg::{load_dataset_dir, LoadOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = env::args().skip(1).collect();
    let dir = args.first().map(String::as_str).unwrap_or("data/umls");
    let max_len: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(2);
    let top_n: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let direct_edge: DirectEdge = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or_default();

    let data = load_dataset_dir(dir, &LoadOptions::default())?;
    eprintln!(
        "{} triples, {} predicates, cost estimate {:.2e}",
        data.kg.len(),
        data.kg.num_predicates(),
        saturation_cost(&data.kg, max_len)
    );
    let report = saturation_report(&data.kg, max_len, top_n, direct_edge)?;
    print!("{}", report.to_table(&data.kg));
    Ok(())
}
