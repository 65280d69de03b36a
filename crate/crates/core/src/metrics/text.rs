use std::collections::{BTreeMap, HashMap};

use rust_stemmers::{Algorithm, Stemmer};

use super::{keys, MetricReport};
use crate::error::{Error, Result};
use crate::util::mean;

/// Lowercase, punctuation to spaces, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    for w in tokens.windows(n) {
        *out.entry(w).or_default() += 1;
    }
    out
}

const BLEU_EPS: f64 = 1e-9;

/// Sentence BLEU with uniform weights up to order `min(4, |candidate|)`.
/// An order without any clipped match uses `1e-9` as its numerator.
fn bleu4(cand: &[String], refr: &[String]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let max_n = cand.len().min(4);
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let c = ngram_counts(cand, n);
        let r = ngram_counts(refr, n);
        let total: usize = c.values().sum();
        let clipped: usize = c
            .iter()
            .map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0)))
            .sum();
        let num = if clipped == 0 { BLEU_EPS } else { clipped as f64 };
        log_sum += (num / total as f64).ln();
    }
    let bp = if cand.len() > refr.len() {
        1.0
    } else {
        (1.0 - refr.len() as f64 / cand.len() as f64).exp()
    };
    bp * (log_sum / max_n as f64).exp()
}

fn rouge1(cand: &[String], refr: &[String]) -> f64 {
    let c = ngram_counts(cand, 1);
    let overlap: usize = ngram_counts(refr, 1)
        .iter()
        .map(|(g, k)| (*k).min(c.get(g).copied().unwrap_or(0)))
        .sum();
    overlap as f64 / refr.len() as f64
}

/// METEOR parameters. Synonym matching is off unless a table is supplied.
#[derive(Debug, Clone)]
pub struct MeteorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Word to synonym-group id; words sharing an id match in the third
    /// stage.
    pub synonyms: Option<BTreeMap<String, usize>>,
}

impl Default for MeteorConfig {
    fn default() -> Self {
        MeteorConfig {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
            synonyms: None,
        }
    }
}

impl MeteorConfig {
    /// Synonym file: one group of tab- or comma-separated words per line.
    pub fn with_synonyms(mut self, text: &str) -> Self {
        let mut table = BTreeMap::new();
        for (gid, line) in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).enumerate() {
            for w in line.split(['\t', ',']).map(|w| w.trim().to_lowercase()).filter(|w| !w.is_empty()) {
                table.insert(w, gid);
            }
        }
        self.synonyms = Some(table);
        self
    }
}

fn meteor(cand: &[String], refr: &[String], cfg: &MeteorConfig, stemmer: &Stemmer) -> f64 {
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let mut cand_used = vec![false; cand.len()];
    let mut ref_used = vec![false; refr.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let stems_c: Vec<String> = cand.iter().map(|w| stemmer.stem(w).into_owned()).collect();
    let stems_r: Vec<String> = refr.iter().map(|w| stemmer.stem(w).into_owned()).collect();
    let syn = |w: &str| cfg.synonyms.as_ref().and_then(|t| t.get(w).copied());
    let stages: [&dyn Fn(usize, usize) -> bool; 3] = [
        &|i, j| cand[i] == refr[j],
        &|i, j| stems_c[i] == stems_r[j],
        &|i, j| matches!((syn(&cand[i]), syn(&refr[j])), (Some(a), Some(b)) if a == b),
    ];
    let stage_count = if cfg.synonyms.is_some() { 3 } else { 2 };
    for matches in stages.iter().take(stage_count) {
        for i in 0..cand.len() {
            if cand_used[i] {
                continue;
            }
            if let Some(j) = (0..refr.len()).find(|&j| !ref_used[j] && matches(i, j)) {
                cand_used[i] = true;
                ref_used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    pairs.sort_unstable();
    let chunks = 1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / refr.len() as f64;
    let fmean = p * r / (cfg.alpha * p + (1.0 - cfg.alpha) * r);
    let frag = if m > 1 {
        (chunks - 1) as f64 / (m - 1) as f64
    } else {
        0.0
    };
    fmean * (1.0 - cfg.gamma * frag.powf(cfg.beta))
}

/// BLEU-4, METEOR and ROUGE-1 of one candidate against one reference.
pub fn text_overlap(candidate: &str, reference: &str, cfg: &MeteorConfig) -> Result<MetricReport> {
    text_overlap_corpus(&[(candidate.to_string(), reference.to_string())], cfg)
}

/// Mean of per-pair scores.
pub fn text_overlap_corpus(pairs: &[(String, String)], cfg: &MeteorConfig) -> Result<MetricReport> {
    let stemmer = Stemmer::create(Algorithm::English);
    let mut b = Vec::with_capacity(pairs.len());
    let mut m = Vec::with_capacity(pairs.len());
    let mut r = Vec::with_capacity(pairs.len());
    for (cand, refr) in pairs {
        let rt = tokenize(refr);
        if rt.is_empty() {
            return Err(Error::EmptyReference);
        }
        let ct = tokenize(cand);
        b.push(bleu4(&ct, &rt));
        m.push(meteor(&ct, &rt, cfg, &stemmer));
        r.push(rouge1(&ct, &rt));
    }
    let mut report = MetricReport::new(pairs.len());
    report.set(keys::BLEU4, 100.0 * mean(b));
    report.set(keys::METEOR, 100.0 * mean(m));
    report.set(keys::ROUGE1, 100.0 * mean(r));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(c: &str, r: &str) -> (f64, f64, f64) {
        let rep = text_overlap(c, r, &MeteorConfig::default()).unwrap();
        (
            rep.get("bleu4").unwrap(),
            rep.get("meteor").unwrap(),
            rep.get("rouge1").unwrap(),
        )
    }

    #[test]
    fn identical_is_perfect() {
        for s in ["Preparation", "the grasper retracts the gallbladder", "a b a b a b"] {
            let (b, m, r) = scores(s, s);
            assert!((b - 100.0).abs() < 1e-9, "{s}: {b}");
            assert!((m - 100.0).abs() < 1e-9, "{s}: {m}");
            assert!((r - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn disjoint_is_zero() {
        let (b, m, r) = scores("alpha beta gamma", "delta epsilon zeta");
        assert!(b < 1e-6);
        assert_eq!(m, 0.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn rouge_hand_count() {
        // overlap: the, grasper, retracts, tissue = 4 of 6 reference tokens
        let (_, _, r) = scores("the grasper retracts tissue", "the grasper retracts the gallbladder tissue");
        assert!((r - 400.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn bleu_hand_count() {
        // cand 4 tokens, ref 6. p1 = 4/4, p2 = 2/3 (the grasper, grasper
        // retracts), p3 = 1/2, p4 = eps/1. bp = exp(1 - 6/4).
        let (b, _, _) = scores("the grasper retracts tissue", "the grasper retracts the gallbladder tissue");
        let want = (1.0f64 - 1.5).exp() * (1.0f64 * (2.0 / 3.0) * 0.5 * 1e-9).powf(0.25);
        assert!((b / 100.0 - want).abs() < 1e-12, "{b} vs {want}");
    }

    #[test]
    fn short_answers_score_above_zero() {
        let (b, _, _) = scores("gallbladder", "the gallbladder dissection");
        assert!(b > 0.0);
    }

    #[test]
    fn meteor_stems_and_fragments() {
        // "retracting" and "retracts" share the stem "retract".
        let (_, m, _) = scores("grasper retracting", "grasper retracts");
        assert!((m - 100.0).abs() < 1e-9);
        // reversed order: 2 matches in 2 chunks, frag = 1, penalty 0.5
        let (_, m, _) = scores("b a", "a b");
        assert!((m - 50.0).abs() < 1e-9);
    }

    #[test]
    fn synonyms_only_when_enabled() {
        let plain = MeteorConfig::default();
        let syn = MeteorConfig::default().with_synonyms("forceps,grasper\n");
        let a = text_overlap("forceps", "grasper", &plain).unwrap().get("meteor").unwrap();
        let b = text_overlap("forceps", "grasper", &syn).unwrap().get("meteor").unwrap();
        assert_eq!(a, 0.0);
        assert!((b - 100.0).abs() < 1e-9);
    }

    #[test]
    fn empty_reference_errors() {
        assert!(matches!(
            text_overlap("x", " ... ", &MeteorConfig::default()),
            Err(Error::EmptyReference)
        ));
    }
}
