use std::collections::HashMap;

/// Levenshtein distance over Unicode scalar values with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut curr = vec![0; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        curr[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let substitution = prev[j] + usize::from(lc != sc);
            curr[j + 1] = substitution.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[short.len()]
}

/// Text dissimilarity in `[0, 1]` between a query and a result string.
pub trait TextEmbedder: Send + Sync {
    fn distance(&self, a: &str, b: &str) -> f64;
}

/// Cosine distance between character-trigram count vectors.
///
/// Strings shorter than three characters count as a single gram.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrigramEmbedder;

fn trigram_counts(s: &str) -> HashMap<&str, u64> {
    let bounds: Vec<usize> = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len())).collect();
    let n_chars = bounds.len() - 1;
    let mut counts = HashMap::new();
    if n_chars == 0 {
        return counts;
    }
    if n_chars < 3 {
        counts.insert(s, 1);
        return counts;
    }
    for w in 0..=n_chars - 3 {
        *counts.entry(&s[bounds[w]..bounds[w + 3]]).or_insert(0) += 1;
    }
    counts
}

impl TextEmbedder for TrigramEmbedder {
    fn distance(&self, a: &str, b: &str) -> f64 {
        let (ca, cb) = (trigram_counts(a), trigram_counts(b));
        match (ca.is_empty(), cb.is_empty()) {
            (true, true) => return 0.0,
            (true, false) | (false, true) => return 1.0,
            _ => {}
        }
        let dot: u64 = ca.iter().map(|(g, x)| x * cb.get(g).copied().unwrap_or(0)).sum();
        let na: u64 = ca.values().map(|x| x * x).sum();
        let nb: u64 = cb.values().map(|x| x * x).sum();
        let cosine = dot as f64 / ((na as f64) * (nb as f64)).sqrt();
        (1.0 - cosine).clamp(0.0, 1.0)
    }
}

pub fn embedding_distance(a: &str, b: &str) -> f64 {
    TrigramEmbedder.distance(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn edit_distance_examples() {
        assert_eq!(edit_distance("abc", "abc"), 0);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("flaw", "lawn"), 2);
        assert_eq!(edit_distance("straße", "strasse"), 2);
    }

    #[test]
    fn embedding_distance_examples() {
        assert_eq!(embedding_distance("search term", "search term"), 0.0);
        assert_eq!(embedding_distance("aaaa", "bbbb"), 1.0);
        // {abc, bcd} vs {abc, bce}: cosine 1/2
        assert!((embedding_distance("abcd", "abce") - 0.5).abs() < 1e-15);
        assert_eq!(embedding_distance("", ""), 0.0);
        assert_eq!(embedding_distance("", "abc"), 1.0);
        assert_eq!(embedding_distance("ab", "ab"), 0.0);
    }

    proptest! {
        #[test]
        fn edit_distance_is_a_metric(a in "[ab]{0,7}", b in "[ab]{0,7}", c in "[ab]{0,7}") {
            let ab = edit_distance(&a, &b);
            prop_assert_eq!(ab, edit_distance(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
        }

        #[test]
        fn embedding_distance_in_unit_interval(a in "[a-c ]{0,12}", b in "[a-c ]{0,12}") {
            let d = embedding_distance(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, embedding_distance(&b, &a));
        }
    }
}
