//! Rule extraction: every hop sequence over the `|P| + 1` operators gets the
//! confidence `Σ_r Π_l a[r][l][k_l]`; identity hops are dropped and sequences
//! that collapse to the same rule are merged by summation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::ops::RulePattern;

use super::{attention_forward, AttentionTensor, ModelParams};

/// Largest number of hop sequences enumerated before giving up.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1 << 24;

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedRule {
    pub predicate: usize,
    pub pattern: RulePattern,
    pub confidence: f64,
}

pub fn extract_rules_from_attention(
    attn: &AttentionTensor,
    predicate: usize,
    top_n: usize,
    budget: u128,
) -> Result<Vec<ExtractedRule>> {
    let width = attn.width();
    let len = attn.max_len();
    let needed = (width as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    if needed > budget {
        return Err(Error::EnumerationBudget { needed, budget });
    }
    let mut merged: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut seq = vec![0usize; len];
    loop {
        let conf: f64 = (0..attn.rank())
            .map(|r| seq.iter().enumerate().map(|(l, &k)| attn.get(r, l, k)).product::<f64>())
            .sum();
        let hops: Vec<usize> = seq.iter().filter(|&&k| k != 0).map(|&k| k - 1).collect();
        if !hops.is_empty() {
            *merged.entry(hops).or_insert(0.0) += conf;
        }
        // odometer, last hop fastest
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(finish(merged, predicate, top_n));
            }
            pos -= 1;
            seq[pos] += 1;
            if seq[pos] < width {
                break;
            }
            seq[pos] = 0;
        }
    }
}

fn finish(merged: BTreeMap<Vec<usize>, f64>, predicate: usize, top_n: usize) -> Vec<ExtractedRule> {
    let mut rules: Vec<ExtractedRule> = merged
        .into_iter()
        .filter(|&(_, c)| c > 0.0)
        .map(|(hops, confidence)| ExtractedRule {
            predicate,
            pattern: RulePattern::new(hops),
            confidence,
        })
        .collect();
    rules.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.pattern.cmp(&b.pattern))
    });
    rules.truncate(top_n);
    rules
}

/// Top `top_n` rules for query predicate `q`.
pub fn extract_rules(params: &ModelParams, q: usize, top_n: usize) -> Result<Vec<ExtractedRule>> {
    let (attn, _) = attention_forward(params, q);
    extract_rules_from_attention(&attn, q, top_n, DEFAULT_ENUMERATION_BUDGET)
}

/// `predicate  rank  confidence  rule` rows, full precision.
pub fn rules_tsv(kg: &KnowledgeGraph, rules: &[ExtractedRule]) -> String {
    let mut out = String::from("predicate\trank\tconfidence\trule\n");
    let mut rank = 0;
    let mut last = None;
    for r in rules {
        if last != Some(r.predicate) {
            rank = 0;
            last = Some(r.predicate);
        }
        rank += 1;
        let _ = writeln!(
            out,
            "{}\t{rank}\t{}\t{}",
            kg.predicate_name(r.predicate),
            r.confidence,
            r.pattern.display(kg)
        );
    }
    out
}

/// Aligned `confidence  body  =>  head` table, one block per predicate.
pub fn rules_table(kg: &KnowledgeGraph, rules: &[ExtractedRule]) -> String {
    let body_w = rules
        .iter()
        .map(|r| r.pattern.display(kg).to_string().chars().count())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let mut last = None;
    for r in rules {
        if last.is_some() && last != Some(r.predicate) {
            out.push('\n');
        }
        last = Some(r.predicate);
        let _ = writeln!(
            out,
            "{:.4}  {:>body_w$}  =>  {}",
            r.confidence,
            r.pattern.display(kg).to_string(),
            kg.predicate_name(r.predicate)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_gives_a_single_rule() {
        let attn = AttentionTensor::one_hot(4, &[1, 3]);
        let rules = extract_rules_from_attention(&attn, 0, 10, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].pattern.hops, [0, 2]);
        assert_eq!(rules[0].confidence, 1.0);
    }

    #[test]
    fn identity_hops_collapse() {
        // operators: 0 identity, 1 sisterOf, 2 sonOf
        let attn = AttentionTensor::from_fn(1, 2, 3, |_, l, k| match (l, k) {
            (0, 1) => 0.6,
            (0, 0) => 0.4,
            (1, 2) => 1.0,
            _ => 0.0,
        });
        let rules = extract_rules_from_attention(&attn, 0, 10, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let got: Vec<_> = rules.iter().map(|r| (r.pattern.hops.clone(), r.confidence)).collect();
        assert_eq!(got, vec![(vec![0, 1], 0.6), (vec![1], 0.4)]);
    }

    #[test]
    fn merged_confidences_sum_over_ranks_and_sequences() {
        let attn = AttentionTensor::from_fn(2, 2, 3, |r, l, k| [[0.2, 0.5, 0.3], [0.1, 0.6, 0.3]][(r + l) % 2][k]);
        let rules = extract_rules_from_attention(&attn, 0, 100, DEFAULT_ENUMERATION_BUDGET).unwrap();
        // everything except the all-identity sequence
        let total: f64 = rules.iter().map(|r| r.confidence).sum();
        let empty = 0.2 * 0.1 + 0.1 * 0.2;
        assert!((total - (2.0 - empty)).abs() < 1e-12);
        // rule [0] = (id, p0) + (p0, id)
        let r0 = rules.iter().find(|r| r.pattern.hops == [0]).unwrap();
        assert!((r0.confidence - (0.2 * 0.6 + 0.5 * 0.1 + 0.1 * 0.5 + 0.6 * 0.2)).abs() < 1e-12);
        for w in rules.windows(2) {
            assert!(w[0].confidence >= w[1].confidence);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let attn = AttentionTensor::zeros(1, 3, 10);
        assert!(matches!(
            extract_rules_from_attention(&attn, 0, 5, 999),
            Err(Error::EnumerationBudget {
                needed: 1000,
                budget: 999
            })
        ));
    }
}
