//! Label lexicon and the label-refinement stage.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use crate::datamodel::{Label, SampleRecord};
use crate::error::{Error, Result};
use crate::util::norm_key;

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.tsv");

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    raw: String,
    replacement: String,
    note: String,
}

/// Raw-label to canonical-term mapping plus ambiguous-label replacements.
///
/// Text format, tab separated, `#` comments:
///
/// ```text
/// map        <raw>   <canonical>   [note]
/// ambiguous  <raw>   <sentence>    [note]
/// canonical  <term>                [note]
/// ```
///
/// Lookups are case-insensitive after whitespace collapsing and
/// typographic-quote folding.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    mapped: BTreeMap<String, Entry>,
    ambiguous: BTreeMap<String, Entry>,
    canonical: BTreeSet<String>,
}

/// Result of looking a raw label up in the lexicon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexiconHit<'a> {
    Mapped(&'a str),
    Ambiguous(&'a str),
    Canonical,
    Unknown,
}

impl Lexicon {
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_LEXICON, "builtin lexicon").expect("builtin lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, what: &str) -> Result<Self> {
        let mut lex = Lexicon::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let bad = |message: &str| Error::Format {
                what: what.to_string(),
                line: idx + 1,
                message: message.to_string(),
            };
            match cols[0] {
                "map" | "ambiguous" => {
                    if cols.len() < 3 || cols[1].is_empty() {
                        return Err(bad("expected `kind<TAB>raw<TAB>replacement[<TAB>note]`"));
                    }
                    if cols[2].is_empty() {
                        return Err(Error::Lexicon(format!(
                            "empty replacement for `{}` ({what}:{})",
                            cols[1],
                            idx + 1
                        )));
                    }
                    let entry = Entry {
                        raw: cols[1].to_string(),
                        replacement: cols[2].to_string(),
                        note: cols.get(3).map(|s| s.to_string()).unwrap_or_default(),
                    };
                    let key = norm_key(cols[1]);
                    let target = if cols[0] == "map" {
                        &mut lex.mapped
                    } else {
                        &mut lex.ambiguous
                    };
                    if let Some(prev) = target.get(&key) {
                        if norm_key(&prev.replacement) != norm_key(&entry.replacement) {
                            return Err(Error::Lexicon(format!(
                                "`{}` maps to both `{}` and `{}`",
                                entry.raw, prev.replacement, entry.replacement
                            )));
                        }
                    }
                    if cols[0] == "map" {
                        lex.canonical.insert(norm_key(&entry.replacement));
                    }
                    target.insert(key, entry);
                }
                "canonical" => {
                    if cols.len() < 2 || cols[1].is_empty() {
                        return Err(bad("expected `canonical<TAB>term`"));
                    }
                    lex.canonical.insert(norm_key(cols[1]));
                }
                other => return Err(bad(&format!("unknown entry kind `{other}`"))),
            }
        }
        lex.check()?;
        Ok(lex)
    }

    /// Functional mapping, no cycles, no label both mapped and ambiguous.
    fn check(&self) -> Result<()> {
        for (key, entry) in &self.mapped {
            if self.ambiguous.contains_key(key) {
                return Err(Error::Lexicon(format!(
                    "`{}` is listed as both mapped and ambiguous",
                    entry.raw
                )));
            }
            let target = norm_key(&entry.replacement);
            if let Some(next) = self.mapped.get(&target) {
                if norm_key(&next.replacement) != target {
                    return Err(Error::Lexicon(format!(
                        "canonical term `{}` is itself remapped to `{}`",
                        entry.replacement, next.replacement
                    )));
                }
            }
        }
        for key in self.ambiguous.keys() {
            if self.canonical.contains(key) {
                return Err(Error::Lexicon(format!(
                    "ambiguous label `{key}` is also declared canonical"
                )));
            }
        }
        Ok(())
    }

    /// Declares additional canonical terms (e.g. a task vocabulary).
    pub fn with_canonical_terms<'a, I: IntoIterator<Item = &'a str>>(mut self, terms: I) -> Self {
        for t in terms {
            let key = norm_key(t);
            if !self.ambiguous.contains_key(&key) {
                self.canonical.insert(key);
            }
        }
        self
    }

    pub fn lookup(&self, raw: &str) -> LexiconHit<'_> {
        let key = norm_key(raw);
        if let Some(e) = self.mapped.get(&key) {
            if norm_key(&e.replacement) == key {
                return LexiconHit::Canonical;
            }
            return LexiconHit::Mapped(&e.replacement);
        }
        if let Some(e) = self.ambiguous.get(&key) {
            return LexiconHit::Ambiguous(&e.replacement);
        }
        if self.canonical.contains(&key) {
            return LexiconHit::Canonical;
        }
        LexiconHit::Unknown
    }

    /// `(raw surface form, canonical term)` pairs of the `map` entries.
    pub fn aliases(&self) -> impl Iterator<Item = (&str, &str)> {
        self.mapped
            .values()
            .map(|e| (e.raw.as_str(), e.replacement.as_str()))
    }

    /// Provenance note recorded for a raw label, if any.
    pub fn note(&self, raw: &str) -> Option<&str> {
        let key = norm_key(raw);
        self.mapped
            .get(&key)
            .or_else(|| self.ambiguous.get(&key))
            .map(|e| e.note.as_str())
            .filter(|n| !n.is_empty())
    }

    pub fn len(&self) -> usize {
        self.mapped.len() + self.ambiguous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Substitution {
    pub from: String,
    pub to: String,
    pub ambiguous: bool,
    pub count: usize,
}

/// What the refinement stage changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RefinementReport {
    pub records: usize,
    pub substitutions: Vec<Substitution>,
    pub unmapped: BTreeMap<String, usize>,
}

impl RefinementReport {
    pub fn total_substitutions(&self) -> usize {
        self.substitutions.iter().map(|s| s.count).sum()
    }
}

#[derive(Default)]
struct Tally {
    subs: BTreeMap<(String, String, bool), usize>,
    unmapped: BTreeMap<String, usize>,
}

impl Tally {
    fn refine(&mut self, lexicon: &Lexicon, value: &mut String) {
        match lexicon.lookup(value) {
            LexiconHit::Mapped(to) | LexiconHit::Ambiguous(to) => {
                let ambiguous = matches!(lexicon.lookup(value), LexiconHit::Ambiguous(_));
                *self
                    .subs
                    .entry((value.clone(), to.to_string(), ambiguous))
                    .or_default() += 1;
                *value = to.to_string();
            }
            LexiconHit::Canonical => {}
            LexiconHit::Unknown => *self.unmapped.entry(value.clone()).or_default() += 1,
        }
    }
}

/// Replaces every raw label by its canonical form and every ambiguous label
/// by its replacement sentence. Record count and order are unchanged.
pub fn refine_labels(records: &[SampleRecord], lexicon: &Lexicon) -> (Vec<SampleRecord>, RefinementReport) {
    let mut tally = Tally::default();
    let refined = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            for label in r.labels.values_mut() {
                match label {
                    Label::Class(c) => tally.refine(lexicon, c),
                    Label::Triplet(t) => {
                        tally.refine(lexicon, &mut t.instrument);
                        tally.refine(lexicon, &mut t.verb);
                        tally.refine(lexicon, &mut t.target);
                    }
                    Label::Boxes(boxes) => {
                        for b in boxes.iter_mut() {
                            if let Some(l) = b.label.as_mut() {
                                tally.refine(lexicon, l);
                            }
                        }
                    }
                    Label::Grid(_) | Label::Cvs(_) => {}
                }
            }
            r
        })
        .collect();
    let report = RefinementReport {
        records: records.len(),
        substitutions: tally
            .subs
            .into_iter()
            .map(|((from, to, ambiguous), count)| Substitution {
                from,
                to,
                ambiguous,
                count,
            })
            .collect(),
        unmapped: tally.unmapped,
    };
    (refined, report)
}
