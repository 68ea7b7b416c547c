//! Tokenization and ROUGE-L.
//!
//! All text metrics share one tokenizer: lowercase, punctuation replaced by
//! spaces, split on whitespace. The rule is deliberately simple so scores
//! are reproducible anywhere; swapping in a smarter tokenizer would change
//! every number downstream.

/// Lowercases, maps every non-alphanumeric character to a space, and splits
/// on whitespace. Empty and all-punctuation strings tokenize to nothing.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// ROUGE-L: longest-common-subsequence F1 between hypothesis and reference
/// token sequences. Returns 0 when either side is empty or nothing matches.
pub fn rouge_l(hyp: &str, reference: &str) -> f64 {
    let h = tokenize(hyp);
    let r = tokenize(reference);
    if h.is_empty() || r.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&h, &r) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / h.len() as f64;
    let recall = lcs / r.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Classic two-row LCS dynamic program.
fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for token_a in a {
        for (j, token_b) in b.iter().enumerate() {
            curr[j + 1] = if token_a == token_b {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}
