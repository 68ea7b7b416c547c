//! Option-letter extraction from free-form model output.
//!
//! Generations rarely consist of a bare letter; they assert answers in
//! prose ("the answer is C", "I would pick (B)"). Extraction runs two
//! passes:
//!
//! 1. Explicit assertions: the last phrase of the form
//!    `answer/option/choice/choose/select/pick [is] [:] <letter>`.
//! 2. Bare letters: the last standalone uppercase A-E, where standalone
//!    means both neighbors are non-alphanumeric. Three look-alikes are
//!    skipped: the article (`A small lesion`), abbreviations (`E. coli`),
//!    and letters trailing a capitalized word (`Vitamin D`, `Hepatitis B`),
//!    which read as compound terms rather than answer assertions.
//!
//! If neither pass finds a letter there is no answer to score and the
//! accuracy reward is 0.

use std::sync::LazyLock;

use regex::Regex;

static EXPLICIT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:answer|option|choice|choose|chose|select|selected|pick|picked|correct)\b\s*(?:is|was)?\s*:?\s*\(?([A-Ea-e])\b\)?")
        .expect("valid regex")
});

/// Finds the asserted option letter in `generation`, uppercased.
pub fn extract_option_letter(generation: &str) -> Option<char> {
    if let Some(captures) = EXPLICIT.captures_iter(generation).last() {
        let letter = captures[1].chars().next().unwrap();
        return Some(letter.to_ascii_uppercase());
    }
    last_standalone_letter(generation)
}

fn last_standalone_letter(text: &str) -> Option<char> {
    let bytes = text.as_bytes();
    let mut found = None;
    for (i, &b) in bytes.iter().enumerate() {
        if !(b'A'..=b'E').contains(&b) {
            continue;
        }
        let before_ok = i == 0 || !bytes[i - 1].is_ascii_alphanumeric();
        let after_ok = i + 1 == bytes.len() || !bytes[i + 1].is_ascii_alphanumeric();
        if !before_ok || !after_ok {
            continue;
        }
        if reads_as_article(bytes, i)
            || reads_as_abbreviation(bytes, i)
            || follows_capitalized_word(bytes, i)
        {
            continue;
        }
        found = Some(b as char);
    }
    found
}

/// `A small lesion` uses A as an article: capital A directly followed by
/// whitespace and a lowercase word.
fn reads_as_article(bytes: &[u8], i: usize) -> bool {
    if bytes[i] != b'A' {
        return false;
    }
    let mut j = i + 1;
    if j >= bytes.len() || !bytes[j].is_ascii_whitespace() {
        return false;
    }
    while j < bytes.len() && bytes[j].is_ascii_whitespace() {
        j += 1;
    }
    j < bytes.len() && bytes[j].is_ascii_lowercase()
}

/// `Vitamin D`, `Hepatitis B`: a capitalized word directly before the
/// letter (only whitespace between) makes a compound term. Punctuation in
/// between (`here: B`, `wrong. D`) breaks the pairing and the letter
/// counts.
fn follows_capitalized_word(bytes: &[u8], i: usize) -> bool {
    let mut j = i;
    if j == 0 || !bytes[j - 1].is_ascii_whitespace() {
        return false;
    }
    while j > 0 && bytes[j - 1].is_ascii_whitespace() {
        j -= 1;
    }
    let end = j;
    while j > 0 && bytes[j - 1].is_ascii_alphabetic() {
        j -= 1;
    }
    let word = &bytes[j..end];
    word.len() >= 2 && word[0].is_ascii_uppercase()
}

/// `E. coli` style abbreviation: letter, period, whitespace, lowercase word.
fn reads_as_abbreviation(bytes: &[u8], i: usize) -> bool {
    let mut j = i + 1;
    if j >= bytes.len() || bytes[j] != b'.' {
        return false;
    }
    j += 1;
    if j >= bytes.len() || !bytes[j].is_ascii_whitespace() {
        return false;
    }
    while j < bytes.len() && bytes[j].is_ascii_whitespace() {
        j += 1;
    }
    j < bytes.len() && bytes[j].is_ascii_lowercase()
}

/// 1.0 when the letter extracted from `generation` equals `gold_letter`
/// (case-insensitive), else 0.0. No extractable letter scores 0.
pub fn match_option(generation: &str, gold_letter: char) -> f64 {
    let gold = gold_letter.to_ascii_uppercase();
    match extract_option_letter(generation) {
        Some(letter) if letter == gold => 1.0,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_assertion_wins_over_earlier_letters() {
        assert_eq!(extract_option_letter("B is wrong; the answer is C"), Some('C'));
        assert_eq!(extract_option_letter("The answer is B."), Some('B'));
    }

    #[test]
    fn bare_letter_fallback_takes_the_last() {
        assert_eq!(extract_option_letter("Maybe B... no, D"), Some('D'));
        assert_eq!(extract_option_letter("(C)"), Some('C'));
    }

    #[test]
    fn article_and_abbreviation_are_not_answers() {
        assert_eq!(extract_option_letter("A small nodule is seen."), None);
        assert_eq!(extract_option_letter("Culture grew E. coli today."), None);
        assert_eq!(extract_option_letter("I am not sure."), None);
    }

    #[test]
    fn compound_terms_are_not_answers() {
        assert_eq!(extract_option_letter("Vitamin D deficiency explains this."), None);
        assert_eq!(extract_option_letter("Consistent with Hepatitis B."), None);
        // Punctuation breaks the compound reading.
        assert_eq!(extract_option_letter("The mass is hyperechoic. B."), Some('B'));
    }

    #[test]
    fn match_option_is_case_insensitive() {
        assert_eq!(match_option("answer: c", 'C'), 1.0);
        assert_eq!(match_option("answer: c", 'c'), 1.0);
        assert_eq!(match_option("answer: c", 'B'), 0.0);
        assert_eq!(match_option("", 'A'), 0.0);
    }
}
