//! Scoring: exact match (Addition), object-set macro accuracy (Entity
//! Tracking), Levenshtein similarity (Sudoku), plus difficulty-axis
//! aggregation. All text comparisons go through `normalize`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::TaskKind;
use crate::textcodec::normalize;

/// Per-instance evaluation row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub id: String,
    pub kind: TaskKind,
    pub score: f64,
    /// Generated tokens before the first EOS.
    pub semantic: usize,
    /// EOS tokens in the generation region.
    pub eos: usize,
}

pub fn exact_match(pred: &str, reference: &str) -> bool {
    normalize(pred) == normalize(reference)
}

/// Parse an object list: "the key and the plant" -> {key, plant};
/// "nothing" (or empty) -> {}.
pub fn parse_object_set(text: &str) -> BTreeSet<String> {
    let norm = normalize(text).to_lowercase();
    let trimmed = norm.trim();
    if trimmed.is_empty() || trimmed == "nothing" {
        return BTreeSet::new();
    }
    trimmed
        .split(" and ")
        .map(|part| part.trim().strip_prefix("the ").unwrap_or(part.trim()).to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Fraction of the union of predicted and reference objects that appears in
/// both sets; 1.0 when both are empty ("nothing" answered correctly).
pub fn object_macro_accuracy(pred: &str, reference: &str) -> f64 {
    let a = parse_object_set(pred);
    let b = parse_object_set(reference);
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Character-level edit distance over the normalized forms.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// 1 - d / max(|a|, |b|) on normalized text; 1.0 for two empty strings.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let a = normalize(a);
    let b = normalize(b);
    let la = a.chars().count();
    let lb = b.chars().count();
    let max = la.max(lb);
    if max == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / max as f64
}

/// Task-appropriate score in [0, 1].
pub fn score(kind: TaskKind, pred: &str, reference: &str) -> f64 {
    match kind {
        TaskKind::Addition => {
            if exact_match(pred, reference) {
                1.0
            } else {
                0.0
            }
        }
        TaskKind::EntityTracking => object_macro_accuracy(pred, reference),
        TaskKind::Sudoku => levenshtein_similarity(pred, reference),
    }
}

/// Mean score per difficulty-axis value, sorted by value.
pub fn difficulty_table(rows: &[(u32, f64)]) -> Vec<(u32, f64, usize)> {
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for &(v, s) in rows {
        let e = acc.entry(v).or_insert((0.0, 0));
        e.0 += s;
        e.1 += 1;
    }
    acc.into_iter().map(|(v, (sum, n))| (v, sum / n as f64, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_is_spacing_insensitive() {
        assert!(exact_match("94", " 94 "));
        assert!(exact_match("1234/4321/2143/3412", "1234 / 4321/2143/3412"));
        assert!(!exact_match("94", "95"));
    }

    #[test]
    fn object_sets_parse() {
        let s = parse_object_set("the key and the plant");
        assert_eq!(s, ["key", "plant"].iter().map(|x| x.to_string()).collect());
        assert!(parse_object_set("nothing").is_empty());
        assert!(parse_object_set("").is_empty());
        assert_eq!(parse_object_set("the key").len(), 1);
    }

    #[test]
    fn macro_accuracy_uses_union() {
        assert_eq!(object_macro_accuracy("the key and the plant", "the key and the plant"), 1.0);
        // one of two correct, one spurious: |∩|=1, |∪|=3
        let v = object_macro_accuracy("the key and the ball", "the key and the plant");
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(object_macro_accuracy("nothing", "nothing"), 1.0);
        assert_eq!(object_macro_accuracy("the key", "nothing"), 0.0);
        // order-insensitive
        assert_eq!(
            object_macro_accuracy("the plant and the key", "the key and the plant"),
            1.0
        );
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("abc", "abc"), 0);
    }

    #[test]
    fn similarity_range_and_edges() {
        assert_eq!(levenshtein_similarity("", ""), 1.0);
        assert_eq!(levenshtein_similarity("abcd", "abcd"), 1.0);
        assert_eq!(levenshtein_similarity("aaaa", "bbbb"), 0.0);
        let v = levenshtein_similarity("1234/4321", "1234/4322");
        assert!((v - (1.0 - 1.0 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn score_dispatch() {
        use crate::corpus::TaskKind::*;
        assert_eq!(score(Addition, "94", "94"), 1.0);
        assert_eq!(score(Addition, "95", "94"), 0.0);
        assert_eq!(score(EntityTracking, "nothing", "nothing"), 1.0);
        assert!(score(Sudoku, "1234/4321/2143/3412", "1234/4321/2143/3412") == 1.0);
    }

    #[test]
    fn difficulty_table_aggregates() {
        let rows = vec![(2, 1.0), (2, 0.0), (3, 1.0)];
        assert_eq!(difficulty_table(&rows), vec![(2, 0.5, 2), (3, 1.0, 1)]);
    }
}
