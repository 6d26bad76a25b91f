//! Rule application as sparse matrix products on a six-person family graph.
//!
//! ```text
//! cargo run --example tensorlog_worked_example
//! ```

use indexmap::IndexSet;
use mplr::kg::{KnowledgeGraph, Triple};
use mplr::ops::{build_operators, count_paths, one_hot, RulePattern};

fn main() -> mplr::Result<()> {
    let entities: IndexSet<String> = ["x1", "x2", "z1", "z2", "z3", "z4"].map(String::from).into();
    let predicates: IndexSet<String> = ["sisterOf", "daughterOf"].map(String::from).into();
    let e = |n: &str| entities.get_index_of(n).unwrap();
    let sister = [
        ("z1", "z2"),
        ("z1", "z4"),
        ("z2", "z1"),
        ("z2", "z4"),
        ("z4", "z1"),
        ("z4", "z4"),
    ];
    let daughter = [("z1", "x1"), ("z2", "x1"), ("z4", "x2")];
    let triples: Vec<Triple> = sister
        .iter()
        .map(|&(h, t)| Triple::new(e(h), 0, e(t)))
        .chain(daughter.iter().map(|&(h, t)| Triple::new(e(h), 1, e(t))))
        .collect();
    let kg = KnowledgeGraph::new(entities.clone(), predicates, triples)?;
    let ops = build_operators(&kg);

    println!("M_sisterOf · M_daughterOf:");
    print!("{:>4}", "");
    for name in &entities {
        print!("{name:>4}");
    }
    println!();
    for (i, row) in ops.predicate(0).product(ops.predicate(1)).to_dense().iter().enumerate() {
        print!("{:>4}", kg.entity_name(i));
        for c in row {
            print!("{c:>4}");
        }
        println!();
    }

    let s = ops
        .predicate(1)
        .propagate(&ops.predicate(0).propagate(&one_hot(6, e("z1"))));
    println!("\nv_z1 · M_sisterOf · M_daughterOf · v_x1 = {}", s[e("x1")]);

    let rule = RulePattern::new(vec![0, 1]);
    println!("paths from z1 following {}:", rule.display(&kg));
    for t in 0..kg.num_entities() {
        let n = count_paths(&ops, e("z1"), &rule, t, None);
        if n > 0 {
            println!("  {} -> {n}", kg.entity_name(t));
        }
    }
    Ok(())
}
