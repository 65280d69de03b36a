use std::sync::LazyLock;

use regex::Regex;

use super::{is_refusal, ParseConfig, Parsed};
use crate::datamodel::CvsVector;
use crate::util::{normalize, word_occurrences};

static NUMBERED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(?:criterion|criteria|c)\s*#?\s*([1-3])\b").unwrap());

static CLAUSE_SPLIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[.;!?\n]|,\s*(?:but|while|whereas|and)\s|\bbut\b|\bwhereas\b").unwrap());

static POLAR_TOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(not achieved|not met|yes|no|true|false|achieved|met|satisfied|unmet)\b").unwrap()
});

const NEGATIVE: &[&str] = &[
    "no", "not", "unmet", "false", "absent", "missing", "cannot", "isn't", "aren't", "none",
    "neither", "nor", "incomplete", "insufficient", "unclear", "fails", "failed",
];

const POSITIVE: &[&str] = &[
    "yes", "achieved", "met", "satisfied", "true", "present", "fulfilled", "exposed", "cleared",
    "seen", "visible", "identified", "separated", "dissected", "clear", "complete", "done",
];

/// Phrases naming each criterion in prose.
const NAMED: [&[&str]; 3] = [
    &["two structures", "two tubular structures", "only two structures"],
    &["hepatocystic triangle", "cystohepatic triangle", "calot's triangle", "calot triangle"],
    &["cystic plate", "lower third"],
];

fn polarity(window: &str) -> Option<bool> {
    let has = |list: &[&str]| list.iter().any(|w| !word_occurrences(window, w).is_empty());
    if has(NEGATIVE) {
        Some(false)
    } else if has(POSITIVE) {
        Some(true)
    } else {
        None
    }
}

type Slots = [Option<bool>; 3];

/// Merges a finding; conflicting findings poison the parse.
fn put(slots: &mut Slots, idx: usize, value: bool) -> bool {
    match slots[idx] {
        Some(v) if v != value => false,
        _ => {
            slots[idx] = Some(value);
            true
        }
    }
}

fn numbered(text: &str, slots: &mut Slots) -> Option<bool> {
    let mentions: Vec<(usize, usize, usize)> = NUMBERED
        .captures_iter(text)
        .map(|c| {
            let m = c.get(0).unwrap();
            (m.start(), m.end(), c[1].parse::<usize>().unwrap() - 1)
        })
        .collect();
    let mut any = false;
    for (i, &(_, end, idx)) in mentions.iter().enumerate() {
        let limit = mentions.get(i + 1).map_or(text.len(), |m| m.0);
        let window = &text[end..limit];
        let window = CLAUSE_SPLIT
            .find(window)
            .filter(|m| m.start() > 0)
            .map_or(window, |m| &window[..m.start()]);
        if let Some(v) = polarity(window) {
            any = true;
            if !put(slots, idx, v) {
                return None;
            }
        }
    }
    Some(any)
}

fn named(text: &str, slots: &mut Slots) -> bool {
    let mut clauses = Vec::new();
    let mut last = 0;
    for m in CLAUSE_SPLIT.find_iter(text) {
        clauses.push(&text[last..m.start()]);
        last = m.end();
    }
    clauses.push(&text[last..]);
    for clause in clauses {
        if NUMBERED.is_match(clause) {
            continue;
        }
        for (idx, names) in NAMED.iter().enumerate() {
            if names.iter().any(|n| !word_occurrences(clause, n).is_empty()) {
                if let Some(v) = polarity(clause) {
                    if !put(slots, idx, v) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn global(text: &str) -> Option<bool> {
    let all_true = [
        "all three criteria are",
        "all criteria are",
        "all three cvs criteria are",
        "all three criteria have been",
        "all criteria have been",
    ];
    let all_true_hit = all_true.iter().any(|p| {
        text.find(p)
            .map(|i| {
                let rest = &text[i + p.len()..];
                let rest = rest.split(['.', ';']).next().unwrap_or("");
                polarity(rest) == Some(true)
            })
            .unwrap_or(false)
    });
    let none_hit = ["none of the criteria", "none of the three criteria", "no criteria are"]
        .iter()
        .any(|p| text.contains(p));
    match (all_true_hit, none_hit) {
        (true, false) => Some(true),
        (false, true) => Some(false),
        _ => None,
    }
}

/// Reads the three critical-view-of-safety criteria from a response.
///
/// Sources, merged: numbered mentions (`criterion 2: no`), named criteria
/// with negation detection, a bare positional list (`yes, no, yes`) and
/// global statements (`all three criteria are met`). Contradictions or a
/// missing criterion give `ParseFailed`.
pub fn parse_cvs(response: &str, config: &ParseConfig) -> Parsed<CvsVector> {
    if is_refusal(response, config) {
        return Parsed::Refused;
    }
    let text = normalize(response, true, true);
    let mut slots: Slots = [None; 3];
    let Some(any_numbered) = numbered(&text, &mut slots) else {
        return Parsed::ParseFailed;
    };
    if !named(&text, &mut slots) {
        return Parsed::ParseFailed;
    }
    if !any_numbered && slots.iter().all(Option::is_none) {
        let tokens: Vec<bool> = POLAR_TOKEN
            .find_iter(&text)
            .map(|m| !matches!(m.as_str(), "no" | "false" | "not achieved" | "not met" | "unmet"))
            .collect();
        if tokens.len() == 3 {
            for (i, v) in tokens.into_iter().enumerate() {
                slots[i] = Some(v);
            }
        }
    }
    if let Some(v) = global(&text) {
        for i in 0..3 {
            if !put(&mut slots, i, v) {
                return Parsed::ParseFailed;
            }
        }
    }
    match slots {
        [Some(a), Some(b), Some(c)] => Parsed::Value(CvsVector::new(a, b, c)),
        _ => Parsed::ParseFailed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Parsed<CvsVector> {
        parse_cvs(text, &ParseConfig::default())
    }

    fn v(a: bool, b: bool, c: bool) -> Parsed<CvsVector> {
        Parsed::Value(CvsVector::new(a, b, c))
    }

    #[test]
    fn numbered_form() {
        assert_eq!(
            parse("Criterion 1: yes. Criterion 2: no. Criterion 3: yes."),
            v(true, false, true)
        );
        assert_eq!(
            parse("C1 is met, C2 is not met and C3 is achieved"),
            v(true, false, true)
        );
    }

    #[test]
    fn global_statements() {
        // Pattern table oracle: "all three criteria are" + positive verb.
        assert_eq!(parse("All three criteria are satisfied."), v(true, true, true));
        assert_eq!(parse("None of the criteria are met."), v(false, false, false));
    }

    #[test]
    fn partial_prose_fails() {
        assert_eq!(parse("the cystic plate is exposed"), Parsed::ParseFailed);
    }

    #[test]
    fn named_criteria() {
        assert_eq!(
            parse("Two structures are seen; the hepatocystic triangle is not cleared; the cystic plate is exposed."),
            v(true, false, true)
        );
    }

    #[test]
    fn positional_list() {
        assert_eq!(parse("yes, no, yes"), v(true, false, true));
        assert_eq!(parse("yes, no"), Parsed::ParseFailed);
    }

    #[test]
    fn contradiction_fails() {
        assert_eq!(
            parse("Criterion 1: yes. Criterion 1: no. Criterion 2: yes. Criterion 3: yes."),
            Parsed::ParseFailed
        );
    }
}
