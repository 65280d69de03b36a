use super::{is_refusal, longest_unique, ParseConfig, Parsed};
use crate::datamodel::{Triplet, TripletVocab};
use crate::util::{norm_key, normalize};

/// Matchable phrases of one component: its vocabulary terms plus every
/// lexicon alias that maps onto one of them.
fn phrases<'a>(terms: &'a [String], config: &ParseConfig) -> Vec<(String, &'a String)> {
    let mut out: Vec<(String, &String)> = terms.iter().map(|t| (norm_key(t), t)).collect();
    for (raw, canonical) in config.lexicon.aliases() {
        let key = norm_key(canonical);
        if let Some(term) = terms.iter().find(|t| norm_key(t) == key) {
            out.push((norm_key(raw), term));
        }
    }
    out
}

/// Finds exactly one vocabulary member per component by longest-match scan.
/// A component with zero or several distinct members fails the parse.
pub fn parse_triplet(response: &str, vocab: &TripletVocab, config: &ParseConfig) -> Parsed<Triplet> {
    if is_refusal(response, config) {
        return Parsed::Refused;
    }
    let text = normalize(response, true, true);
    let mut parts: Vec<String> = Vec::with_capacity(3);
    for idx in 0..3 {
        let candidates = phrases(vocab.component(idx), config);
        match longest_unique(&text, &candidates) {
            Some(term) => parts.push(term.clone()),
            None => return Parsed::ParseFailed,
        }
    }
    let target = parts.pop().unwrap();
    let verb = parts.pop().unwrap();
    let instrument = parts.pop().unwrap();
    Parsed::Value(Triplet::new(instrument, verb, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::TaskVocabularies;

    fn parse(text: &str) -> Parsed<Triplet> {
        let cfg = ParseConfig::default();
        let vocab = TaskVocabularies::builtin().triplet;
        parse_triplet(text, &vocab, &cfg)
    }

    #[test]
    fn comma_form() {
        assert_eq!(
            parse("grasper, retract, gallbladder"),
            Parsed::Value(Triplet::new("grasper", "retract", "gallbladder"))
        );
    }

    #[test]
    fn two_instruments_fail() {
        assert_eq!(
            parse("the grasper is retracting the gallbladder while the hook dissects"),
            Parsed::ParseFailed
        );
    }

    #[test]
    fn longest_match_sentence() {
        // Oracle: over the shipped vocabulary, `clipper` is the only
        // instrument, `clip` the only whole-word verb (not inside
        // `clipper`), and `cystic duct` the only target.
        assert_eq!(
            parse("The instrument clipper is used to clip the cystic duct"),
            Parsed::Value(Triplet::new("clipper", "clip", "cystic duct"))
        );
    }

    #[test]
    fn inflections_map_through_lexicon() {
        assert_eq!(
            parse("The hook is dissecting the gallbladder."),
            Parsed::Value(Triplet::new("hook", "dissect", "gallbladder"))
        );
    }

    #[test]
    fn missing_component_fails() {
        assert_eq!(parse("a grasper"), Parsed::ParseFailed);
    }
}
