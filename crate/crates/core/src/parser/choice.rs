use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use super::{is_refusal, ParseConfig, Parsed};
use crate::util::{normalize, word_occurrences};

static LEADING_LETTER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^\s*(?:(?i:option|choice)\s+)?(?:\(([A-Z])\)|\[([A-Z])\]|\*\*([A-Z])\*\*|([A-Z])(?:[.):]|\s*$))",
    )
    .unwrap()
});

static ANSWER_IS_LETTER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i:answer(?:\s+is)?|correct\s+option\s+is|option)\s*:?\s*(?:\(([A-Z])\)|\[([A-Z])\]|\*\*([A-Z])\*\*|([A-Z])(?:[.):,]|\s|$))",
    )
    .unwrap()
});

const STOPWORDS: &[&str] = &[
    "the", "and", "with", "from", "into", "that", "this", "there", "their", "frame", "criterion",
    "yes", "not",
];

fn letter(caps: &regex::Captures<'_>, n: usize) -> Option<usize> {
    let c = (1..=4).find_map(|i| caps.get(i))?.as_str().chars().next()?;
    let idx = (c as u8).checked_sub(b'A')? as usize;
    (idx < n).then_some(idx)
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 4 && !STOPWORDS.contains(w))
        .map(str::to_string)
        .collect()
}

/// Resolves a multiple-choice response to an option index.
///
/// Order: option letter at the start or after "answer is"; the unique option
/// whose full text occurs in the response; the unique option whose
/// distinctive words occur in the response.
pub fn parse_choice(response: &str, options: &[String], config: &ParseConfig) -> Parsed<usize> {
    if is_refusal(response, config) {
        return Parsed::Refused;
    }
    let n = options.len();
    if n < 2 {
        return Parsed::ParseFailed;
    }
    if let Some(idx) = LEADING_LETTER.captures(response).and_then(|c| letter(&c, n)) {
        return Parsed::Value(idx);
    }
    if let Some(idx) = ANSWER_IS_LETTER
        .captures_iter(response)
        .find_map(|c| letter(&c, n))
    {
        return Parsed::Value(idx);
    }

    let text = normalize(response, true, true);
    let norm: Vec<String> = options.iter().map(|o| normalize(o, true, true)).collect();
    let matched: Vec<usize> = (0..n)
        .filter(|&i| !norm[i].is_empty() && !word_occurrences(&text, &norm[i]).is_empty())
        .collect();
    let outer: Vec<usize> = matched
        .iter()
        .copied()
        .filter(|&i| {
            !matched
                .iter()
                .any(|&j| j != i && norm[j].len() > norm[i].len() && norm[j].contains(&norm[i]))
        })
        .collect();
    match outer.as_slice() {
        [one] => return Parsed::Value(*one),
        [] => {}
        _ => return Parsed::ParseFailed,
    }

    let option_words: Vec<BTreeSet<String>> = norm.iter().map(|o| words(o)).collect();
    let response_words = words(&text);
    let hits: Vec<usize> = (0..n)
        .filter(|&i| {
            option_words[i].iter().any(|w| {
                response_words.contains(w)
                    && option_words
                        .iter()
                        .enumerate()
                        .all(|(j, other)| j == i || !other.contains(w))
            })
        })
        .collect();
    match hits.as_slice() {
        [one] => Parsed::Value(*one),
        _ => Parsed::ParseFailed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn phases() -> Vec<String> {
        opts(&[
            "Preparation",
            "Gallbladder dissection",
            "Calot triangle dissection",
            "Cleaning and coagulation",
        ])
    }

    #[test]
    fn bare_letter() {
        let cfg = ParseConfig::default();
        assert_eq!(parse_choice("B", &phases(), &cfg), Parsed::Value(1));
        assert_eq!(parse_choice("  D.", &phases(), &cfg), Parsed::Value(3));
        assert_eq!(parse_choice("(A) Preparation", &phases(), &cfg), Parsed::Value(0));
        assert_eq!(parse_choice("E", &phases(), &cfg), Parsed::ParseFailed);
    }

    #[test]
    fn rule_order_fixture() {
        // Letter rule outranks the text rule: the text also names option A.
        let cfg = ParseConfig::default();
        let cases = [
            ("The answer is (C) calot triangle dissection.", Parsed::Value(2)),
            ("The answer is C, not Preparation.", Parsed::Value(2)),
            ("I think it is calot triangle dissection.", Parsed::Value(2)),
            ("This looks like gallbladder dissection to me", Parsed::Value(1)),
            ("Clearly the triangle of calot", Parsed::Value(2)),
            ("coagulation", Parsed::Value(3)),
            ("A grasper holds the tissue", Parsed::ParseFailed),
        ];
        for (text, want) in cases {
            assert_eq!(parse_choice(text, &phases(), &cfg), want, "{text}");
        }
    }

    #[test]
    fn two_option_texts_is_ambiguous() {
        let cfg = ParseConfig::default();
        assert_eq!(
            parse_choice("Preparation or cleaning and coagulation", &phases(), &cfg),
            Parsed::ParseFailed
        );
    }

    #[test]
    fn nested_option_prefers_longer() {
        let cfg = ParseConfig::default();
        let o = opts(&["dissection", "Calot triangle dissection"]);
        assert_eq!(parse_choice("calot triangle dissection", &o, &cfg), Parsed::Value(1));
    }

    #[test]
    fn refusal_first() {
        let cfg = ParseConfig::default();
        assert_eq!(
            parse_choice("A. I'm sorry, but I cannot assist with that.", &phases(), &cfg),
            Parsed::Refused
        );
    }
}
