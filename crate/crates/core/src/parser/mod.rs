//! Turns raw model responses into structured answers.
//!
//! Every entry point checks refusal patterns before anything else.

mod boxes;
mod choice;
mod cvs;
mod triplet;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{GridCell, Label, ParseStatus, TaskKind, TaskVocabularies};
use crate::error::{Error, Result};
use crate::pipeline::Lexicon;
use crate::util::{normalize, word_occurrences};

pub use boxes::{parse_bboxes, BoxParse};
pub use choice::parse_choice;
pub use cvs::parse_cvs;
pub use triplet::parse_triplet;

const DEFAULT_REFUSALS: &str = include_str!("../../data/refusals.txt");

/// Outcome of a structured parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Parsed<T> {
    Value(T),
    ParseFailed,
    Refused,
}

impl<T> Parsed<T> {
    pub fn status(&self) -> ParseStatus {
        match self {
            Parsed::Value(_) => ParseStatus::Parsed,
            Parsed::ParseFailed => ParseStatus::ParseFailed,
            Parsed::Refused => ParseStatus::Refused,
        }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Parsed::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_value(self) -> Option<T> {
        match self {
            Parsed::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Parsed<U> {
        match self {
            Parsed::Value(v) => Parsed::Value(f(v)),
            Parsed::ParseFailed => Parsed::ParseFailed,
            Parsed::Refused => Parsed::Refused,
        }
    }
}

/// Verdict of open-vocabulary keyword scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordVerdict {
    Correct,
    Incorrect,
    Refused,
}

#[derive(Debug, Clone)]
pub struct ParseConfig {
    pub fold_case: bool,
    pub collapse_ws: bool,
    pub refusal_patterns: Vec<String>,
    pub vocab: TaskVocabularies,
    /// Aliases accepted when matching vocabulary terms (triplet parsing).
    pub lexicon: Lexicon,
}

impl Default for ParseConfig {
    fn default() -> Self {
        ParseConfig {
            fold_case: true,
            collapse_ws: true,
            refusal_patterns: parse_patterns(DEFAULT_REFUSALS),
            vocab: TaskVocabularies::builtin(),
            lexicon: Lexicon::builtin(),
        }
    }
}

fn parse_patterns(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| normalize(l, true, true))
        .collect()
}

impl ParseConfig {
    /// Replaces the refusal patterns with those of a line-delimited file.
    pub fn with_refusal_file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let patterns = parse_patterns(&text);
        if patterns.is_empty() {
            return Err(Error::Config(format!("{}: no refusal patterns", path.display())));
        }
        self.refusal_patterns = patterns;
        Ok(self)
    }

    pub fn with_vocab(mut self, vocab: TaskVocabularies) -> Self {
        self.vocab = vocab;
        self
    }

    pub fn norm(&self, text: &str) -> String {
        normalize(text, self.fold_case, self.collapse_ws)
    }
}

pub fn is_refusal(response: &str, config: &ParseConfig) -> bool {
    let text = normalize(response, true, true);
    config.refusal_patterns.iter().any(|p| text.contains(p.as_str()))
}

/// Correct iff some keyword is a contiguous substring of the response after
/// normalization. No stemming, no synonyms.
pub fn match_keyword(response: &str, keywords: &[String], config: &ParseConfig) -> KeywordVerdict {
    if is_refusal(response, config) {
        return KeywordVerdict::Refused;
    }
    let text = config.norm(response);
    let hit = keywords
        .iter()
        .map(|k| config.norm(k))
        .any(|k| !k.is_empty() && text.contains(&k));
    if hit {
        KeywordVerdict::Correct
    } else {
        KeywordVerdict::Incorrect
    }
}

/// Unique vocabulary term of a class task, longest match first.
pub fn parse_class(response: &str, terms: &[String], config: &ParseConfig) -> Parsed<String> {
    if is_refusal(response, config) {
        return Parsed::Refused;
    }
    let text = normalize(response, true, true);
    let candidates: Vec<(String, &String)> = terms
        .iter()
        .map(|t| (normalize(t, true, true), t))
        .collect();
    match longest_unique(&text, &candidates) {
        Some(t) => Parsed::Value(t.clone()),
        None => Parsed::ParseFailed,
    }
}

/// Longest-match scan: occurrences covered by a longer matching phrase are
/// discarded; succeeds when exactly one distinct value remains.
pub(crate) fn longest_unique<'a, T: PartialEq>(text: &str, phrases: &[(String, &'a T)]) -> Option<&'a T> {
    let mut spans: Vec<(usize, usize, &T)> = Vec::new();
    for (phrase, value) in phrases {
        for (s, e) in word_occurrences(text, phrase) {
            spans.push((s, e, *value));
        }
    }
    spans.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, usize, &T)> = Vec::new();
    for span in spans {
        if kept.iter().all(|k| span.1 <= k.0 || span.0 >= k.1) {
            kept.push(span);
        }
    }
    let first = kept.first()?.2;
    kept.iter().all(|k| k.2 == first).then_some(first)
}

pub fn parse_grid(response: &str, config: &ParseConfig) -> Parsed<GridCell> {
    if is_refusal(response, config) {
        return Parsed::Refused;
    }
    let text = normalize(response, true, true);
    let mut found: Vec<GridCell> = Vec::new();
    for cell in GridCell::ALL {
        let hit = !word_occurrences(&text, cell.as_str()).is_empty()
            || (cell == GridCell::Center && !word_occurrences(&text, "centre").is_empty());
        if hit {
            found.push(cell);
        }
    }
    match found.as_slice() {
        [one] => Parsed::Value(*one),
        _ => Parsed::ParseFailed,
    }
}

/// Parses a free-text response into the label shape of `task`.
pub fn parse_label(task: TaskKind, response: &str, config: &ParseConfig) -> Parsed<Label> {
    use crate::datamodel::LabelShape;
    match task.label_shape() {
        LabelShape::Class => parse_class(response, config.vocab.for_task(task), config).map(Label::Class),
        LabelShape::Grid => parse_grid(response, config).map(Label::Grid),
        LabelShape::Triplet => parse_triplet(response, &config.vocab.triplet, config).map(Label::Triplet),
        LabelShape::Cvs => parse_cvs(response, config).map(Label::Cvs),
        LabelShape::Boxes => {
            let parsed = parse_bboxes(response, config);
            if parsed.refused {
                Parsed::Refused
            } else if parsed.boxes.is_empty() {
                Parsed::ParseFailed
            } else {
                Parsed::Value(Label::Boxes(parsed.boxes))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw(k: &str) -> Vec<String> {
        vec![k.to_string()]
    }

    #[test]
    fn keyword_substring_after_normalization() {
        let cfg = ParseConfig::default();
        let phrase = "development of the plane between the prostate and rectum";
        assert_eq!(
            match_keyword(&format!("The current step is {phrase}, clearly."), &kw(phrase), &cfg),
            KeywordVerdict::Correct
        );
        assert_eq!(match_keyword(phrase, &kw(phrase), &cfg), KeywordVerdict::Correct);
        assert_eq!(
            match_keyword("DEVELOPMENT of the   plane between the prostate and rectum", &kw(phrase), &cfg),
            KeywordVerdict::Correct
        );
    }

    #[test]
    fn synonyms_are_incorrect() {
        let cfg = ParseConfig::default();
        assert_eq!(
            match_keyword("hepatocystic triangle", &kw("cystohepatic triangle"), &cfg),
            KeywordVerdict::Incorrect
        );
    }

    #[test]
    fn refusal_wins() {
        let cfg = ParseConfig::default();
        assert_eq!(
            match_keyword("I'm sorry, but I cannot assist with that. Preparation", &kw("Preparation"), &cfg),
            KeywordVerdict::Refused
        );
        assert!(!cfg.refusal_patterns.is_empty());
    }

    #[test]
    fn class_longest_match() {
        let cfg = ParseConfig::default();
        let terms: Vec<String> = ["Gallbladder dissection", "Gallbladder retraction", "Preparation"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            parse_class("This is gallbladder dissection.", &terms, &cfg),
            Parsed::Value("Gallbladder dissection".into())
        );
        assert_eq!(
            parse_class("Preparation or gallbladder retraction", &terms, &cfg),
            Parsed::ParseFailed
        );
    }

    #[test]
    fn grid_words() {
        let cfg = ParseConfig::default();
        assert_eq!(parse_grid("It is on the left.", &cfg), Parsed::Value(GridCell::Left));
        assert_eq!(parse_grid("centre of the frame", &cfg), Parsed::Value(GridCell::Center));
        assert_eq!(parse_grid("left or right", &cfg), Parsed::ParseFailed);
    }
}
