use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;

use super::{is_refusal, ParseConfig};
use crate::datamodel::BoundingBox;

const NUM: &str = r"(-?\d+(?:\.\d+)?)";

static BRACKETED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"\[\s*{NUM}\s*,\s*{NUM}\s*,\s*{NUM}\s*,\s*{NUM}\s*\]")).unwrap()
});

static POINT_PAIR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"\(\s*{NUM}\s*,\s*{NUM}\s*\)\s*(?:,|-|to|and)?\s*\(\s*{NUM}\s*,\s*{NUM}\s*\)"
    ))
    .unwrap()
});

/// Four bare numbers directly after a word.
static LABELED_BARE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"[A-Za-z][A-Za-z\-]*:?\s+{NUM}\s+{NUM}\s+{NUM}\s+{NUM}\b")).unwrap()
});

/// Words trimmed from both ends of the text preceding a box before it is
/// used as the class label.
const FILLER: &[&str] = &[
    "a", "an", "the", "at", "and", "is", "are", "located", "lies", "in", "on", "of", "with",
    "box", "bounding", "coordinates", "position", "its", "it", "there", "found", "within",
    "occupies", "answer", "visible", "tissue", "instrument", "region", "area",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoxParse {
    pub boxes: Vec<BoundingBox>,
    /// One message per dropped quadruple.
    pub diagnostics: Vec<String>,
    pub refused: bool,
}

fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

fn noun_phrase(segment: &str) -> Option<String> {
    let cleaned: String = segment
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '\'' { c } else { ' ' })
        .collect();
    let words: Vec<&str> = cleaned.split_whitespace().collect();
    let is_filler = |w: &&str| FILLER.contains(&w.to_lowercase().as_str());
    let end = words.iter().rposition(|w| !is_filler(w))? + 1;
    // the phrase is the trailing run of non-filler words before the box
    let start = words[..end]
        .iter()
        .rposition(is_filler)
        .map_or(0, |i| i + 1);
    let phrase = words[start..end].join(" ");
    let has_letter = phrase.chars().any(char::is_alphabetic);
    (has_letter && !phrase.is_empty()).then_some(phrase)
}

/// Extracts every coordinate quadruple in `[x1, y1, x2, y2]`,
/// `(x1, y1), (x2, y2)` or `label x1 y1 x2 y2` form. Coordinates are
/// rounded half-up; quadruples with negative values or `x1 >= x2` /
/// `y1 >= y2` are dropped. The words before a box become its label.
pub fn parse_bboxes(response: &str, config: &ParseConfig) -> BoxParse {
    if is_refusal(response, config) {
        return BoxParse {
            refused: true,
            ..Default::default()
        };
    }
    let mut found: Vec<(usize, usize, [f64; 4], bool)> = Vec::new();
    for (re, bare) in [(&*BRACKETED, false), (&*POINT_PAIR, false), (&*LABELED_BARE, true)] {
        for caps in re.captures_iter(response) {
            let whole = caps.get(0).unwrap();
            let mut v = [0.0; 4];
            for (i, slot) in v.iter_mut().enumerate() {
                *slot = caps[i + 1].parse().unwrap_or(f64::NAN);
            }
            let start = if bare {
                caps.get(1).map_or(whole.start(), |m| m.start())
            } else {
                whole.start()
            };
            found.push((start, whole.end(), v, bare));
        }
    }
    found.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut kept: Vec<(usize, usize, [f64; 4])> = Vec::new();
    for (s, e, v, _) in found {
        if kept.last().map_or(true, |k| s >= k.1) {
            kept.push((s, e, v));
        }
    }

    let mut out = BoxParse::default();
    let mut prev_end = 0;
    for (s, e, v) in kept {
        let segment = &response[prev_end..s];
        prev_end = e;
        let [x1, y1, x2, y2] = v.map(round_half_up);
        if [x1, y1, x2, y2].iter().any(|c| !c.is_finite() || *c < 0.0) {
            out.diagnostics
                .push(format!("dropped {:?}: negative or non-numeric coordinate", v));
            continue;
        }
        if x1 >= x2 || y1 >= y2 {
            out.diagnostics
                .push(format!("dropped {:?}: expected x1 < x2 and y1 < y2", v));
            continue;
        }
        let mut b = BoundingBox::new(x1, y1, x2, y2);
        b.label = noun_phrase(segment);
        out.boxes.push(b);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> BoxParse {
        parse_bboxes(text, &ParseConfig::default())
    }

    #[test]
    fn bracketed() {
        let p = parse("[100, 50, 300, 400]");
        assert_eq!(p.boxes, vec![BoundingBox::new(100.0, 50.0, 300.0, 400.0)]);
    }

    #[test]
    fn two_labeled_boxes() {
        let p = parse("grasper at (10,20),(110,220) and scissors at [5, 5, 50, 60]");
        assert_eq!(
            p.boxes,
            vec![
                BoundingBox::new(10.0, 20.0, 110.0, 220.0).with_label("grasper"),
                BoundingBox::new(5.0, 5.0, 50.0, 60.0).with_label("scissors"),
            ]
        );
    }

    #[test]
    fn bare_numbers_after_label() {
        let p = parse("hook 12.4 30.5 99.5 120");
        assert_eq!(p.boxes, vec![BoundingBox::new(12.0, 31.0, 100.0, 120.0).with_label("hook")]);
        assert!(parse("12 30 99 120").boxes.is_empty());
    }

    #[test]
    fn invalid_boxes_dropped_with_diagnostics() {
        let p = parse("[300, 10, 100, 50] and [1, 2, 3, 4]");
        assert_eq!(p.boxes.len(), 1);
        assert_eq!(p.diagnostics.len(), 1);
    }

    #[test]
    fn refusal_flagged() {
        let p = parse("Sorry, I cannot assist with that request");
        assert!(p.refused);
        assert!(p.boxes.is_empty());
    }

    #[test]
    fn sentence_answers_drop_generic_nouns() {
        let p = parse("The instrument is at [10, 20, 30, 40].");
        assert_eq!(p.boxes[0].label, None);
        let p = parse("Prograsp forceps [10, 20, 30, 40]; large needle driver [50, 60, 70, 80]");
        assert_eq!(p.boxes[0].label.as_deref(), Some("Prograsp forceps"));
        assert_eq!(p.boxes[1].label.as_deref(), Some("large needle driver"));
    }
}
