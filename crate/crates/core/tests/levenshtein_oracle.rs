//! Levenshtein distance checked against an independent recursive oracle:
//! exhaustively for all short pairs, and by property testing up to length 8.

use std::collections::HashMap;

use eoslab_core::evalmetrics::{levenshtein, levenshtein_similarity};
use proptest::prelude::*;

/// Plain recursive definition with memoization; deliberately different in
/// structure from the iterative DP under test.
fn oracle(a: &[u8], b: &[u8]) -> usize {
    fn rec(a: &[u8], b: &[u8], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        let key = (a.len(), b.len());
        if let Some(&d) = memo.get(&key) {
            return d;
        }
        let cost = usize::from(a[a.len() - 1] != b[b.len() - 1]);
        let d = (rec(&a[..a.len() - 1], &b[..b.len() - 1], memo) + cost)
            .min(rec(&a[..a.len() - 1], b, memo) + 1)
            .min(rec(a, &b[..b.len() - 1], memo) + 1);
        memo.insert(key, d);
        d
    }
    rec(a, b, &mut HashMap::new())
}

fn all_strings(alphabet: &[u8], max_len: usize) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<u8>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn exhaustive_short_pairs_match_oracle() {
    let strings = all_strings(b"abc", 4);
    for a in &strings {
        for b in &strings {
            let sa = std::str::from_utf8(a).unwrap();
            let sb = std::str::from_utf8(b).unwrap();
            assert_eq!(
                levenshtein(sa, sb),
                oracle(a, b),
                "a={sa:?} b={sb:?}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_pairs_match_oracle(a in "[abc]{0,8}", b in "[abc]{0,8}") {
        prop_assert_eq!(levenshtein(&a, &b), oracle(a.as_bytes(), b.as_bytes()));
    }

    #[test]
    fn metric_axioms(a in "[abc]{0,8}", b in "[abc]{0,8}", c in "[abc]{0,8}") {
        let dab = levenshtein(&a, &b);
        prop_assert_eq!(dab, levenshtein(&b, &a));
        prop_assert_eq!(levenshtein(&a, &a), 0);
        // triangle inequality
        prop_assert!(dab <= levenshtein(&a, &c) + levenshtein(&c, &b));
        // bounded by the longer string
        prop_assert!(dab <= a.len().max(b.len()));
    }

    #[test]
    fn similarity_in_unit_interval(a in "[abc]{0,8}", b in "[abc]{0,8}") {
        let s = levenshtein_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        if a == b {
            prop_assert_eq!(s, 1.0);
        }
    }
}
