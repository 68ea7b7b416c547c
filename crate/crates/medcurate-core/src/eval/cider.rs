//! CIDEr: consensus-based caption scoring over TF-IDF weighted n-grams.
//!
//! For n = 1..4, every hypothesis and reference becomes a TF-IDF vector
//! over its n-grams; document frequency is counted per image (an n-gram
//! appearing in any of an image's references counts that image once), and
//! idf = ln(images) - ln(max(1, df)). The per-image score is the cosine
//! similarity against each reference, averaged over references, averaged
//! over the four n levels, times 10. The corpus score is the mean over
//! images, so it lives on a 0-10 scale.
//!
//! Two variants:
//!
//! - `Plain`: pure cosine (the original formulation). Default.
//! - `D`: hypothesis term counts are clipped to the reference's and the
//!   per-n similarity is damped by a Gaussian penalty on the token-length
//!   difference (sigma = 6), which punishes degenerate long or repetitive
//!   hypotheses.
//!
//! A single-image corpus would make every idf ln(1) = 0 and score 0 even
//! for a perfect hypothesis, so the corpus-size term is floored at 2
//! documents; from 2 images up the computation is canonical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::text::tokenize;

const MAX_N: usize = 4;
const SIGMA: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CiderVariant {
    #[default]
    Plain,
    D,
}

/// One hypothesis with its reference set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiderPair {
    pub hypothesis: String,
    pub references: Vec<String>,
}

/// N-gram counts for one n level. Keys are tokens joined with `\x1f` so
/// they stay cheap to hash and order.
type Counts = BTreeMap<String, usize>;

fn ngram_counts(tokens: &[String]) -> [Counts; MAX_N] {
    let mut levels: [Counts; MAX_N] = Default::default();
    for n in 1..=MAX_N {
        if tokens.len() < n {
            break;
        }
        let level = &mut levels[n - 1];
        for window in tokens.windows(n) {
            *level.entry(window.join("\x1f")).or_insert(0) += 1;
        }
    }
    levels
}

struct TfIdfVector {
    weights: [BTreeMap<String, f64>; MAX_N],
    norms: [f64; MAX_N],
    length: usize,
}

fn vectorize(counts: &[Counts; MAX_N], length: usize, df: &[Counts; MAX_N], log_docs: f64) -> TfIdfVector {
    let mut weights: [BTreeMap<String, f64>; MAX_N] = Default::default();
    let mut norms = [0.0; MAX_N];
    for n in 0..MAX_N {
        for (gram, &tf) in &counts[n] {
            let doc_freq = df[n].get(gram).copied().unwrap_or(0).max(1) as f64;
            let idf = log_docs - doc_freq.ln();
            let w = tf as f64 * idf;
            norms[n] += w * w;
            weights[n].insert(gram.clone(), w);
        }
        norms[n] = norms[n].sqrt();
    }
    TfIdfVector { weights, norms, length }
}

fn similarity(hyp: &TfIdfVector, reference: &TfIdfVector, variant: CiderVariant) -> [f64; MAX_N] {
    let mut values = [0.0; MAX_N];
    for (n, value) in values.iter_mut().enumerate() {
        let mut dot = 0.0;
        for (gram, &wh) in &hyp.weights[n] {
            let Some(&wr) = reference.weights[n].get(gram) else { continue };
            let wh = match variant {
                CiderVariant::Plain => wh,
                // Clip the hypothesis count's contribution at the
                // reference's, so repeating a matched n-gram stops paying.
                CiderVariant::D => wh.min(wr),
            };
            dot += wh * wr;
        }
        if hyp.norms[n] > 0.0 && reference.norms[n] > 0.0 {
            *value = dot / (hyp.norms[n] * reference.norms[n]);
        }
        if variant == CiderVariant::D {
            let delta = hyp.length as f64 - reference.length as f64;
            *value *= (-delta * delta / (2.0 * SIGMA * SIGMA)).exp();
        }
    }
    values
}

/// Per-image raw CIDEr scores (0-10 scale), in input order.
pub fn cider_per_pair(pairs: &[CiderPair], variant: CiderVariant) -> Vec<f64> {
    if pairs.is_empty() {
        return Vec::new();
    }

    let tokenized: Vec<(Vec<String>, Vec<Vec<String>>)> = pairs
        .iter()
        .map(|p| {
            (
                tokenize(&p.hypothesis),
                p.references.iter().map(|r| tokenize(r)).collect(),
            )
        })
        .collect();

    // Document frequency: each image counts once per n-gram appearing in
    // any of its references.
    let mut df: [Counts; MAX_N] = Default::default();
    for (_, refs) in &tokenized {
        let mut seen: [Counts; MAX_N] = Default::default();
        for tokens in refs {
            let counts = ngram_counts(tokens);
            for n in 0..MAX_N {
                for gram in counts[n].keys() {
                    seen[n].entry(gram.clone()).or_insert(0);
                }
            }
        }
        for n in 0..MAX_N {
            for gram in seen[n].keys() {
                *df[n].entry(gram.clone()).or_insert(0) += 1;
            }
        }
    }
    let log_docs = (pairs.len().max(2) as f64).ln();

    tokenized
        .iter()
        .map(|(hyp_tokens, ref_tokens)| {
            let hyp_counts = ngram_counts(hyp_tokens);
            let hyp_vec = vectorize(&hyp_counts, hyp_tokens.len(), &df, log_docs);
            let mut level_sums = [0.0; MAX_N];
            for tokens in ref_tokens {
                let counts = ngram_counts(tokens);
                let ref_vec = vectorize(&counts, tokens.len(), &df, log_docs);
                let values = similarity(&hyp_vec, &ref_vec, variant);
                for n in 0..MAX_N {
                    level_sums[n] += values[n];
                }
            }
            let refs = ref_tokens.len().max(1) as f64;
            let mean_over_levels: f64 =
                level_sums.iter().map(|s| s / refs).sum::<f64>() / MAX_N as f64;
            mean_over_levels * 10.0
        })
        .collect()
}

/// Corpus-level raw CIDEr: mean of the per-image scores, 0-10 scale.
pub fn cider(pairs: &[CiderPair], variant: CiderVariant) -> f64 {
    let scores = cider_per_pair(pairs, variant);
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}
