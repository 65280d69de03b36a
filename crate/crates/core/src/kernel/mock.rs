use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    BoundingBox, Conversation, CvsVector, GridCell, Label, TaskVocabularies, Triplet, Turn,
};
use crate::pipeline::option_letter;
use crate::util::{norm_key, sub_seed};

/// Text emitted by a refusing mock.
pub const REFUSAL_TEXT: &str = "I'm sorry, but I cannot assist with analyzing this surgical image.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockBehavior {
    /// Always the ground truth.
    Oracle,
    /// Ground truth when the seeded draw for the turn falls below `p`,
    /// otherwise a wrong answer that still parses.
    Planted { p: f64, seed: u64 },
    /// Refuses when the seeded draw falls below `rate`, otherwise oracle.
    Refuser { rate: f64, seed: u64 },
}

fn draw(conversation_id: &str, turn: usize, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, &format!("{conversation_id}/{turn}")))
}

/// Whether `Planted { p, seed }` answers this turn correctly. The first
/// `f64` of the turn's stream decides; the rest picks the wrong answer.
pub fn planted_correct(conversation_id: &str, turn: usize, p: f64, seed: u64) -> bool {
    draw(conversation_id, turn, seed).gen::<f64>() < p
}

/// Deterministic stand-in for a vision-language model.
#[derive(Debug, Clone)]
pub struct MockModel {
    pub behavior: MockBehavior,
    pub vocab: TaskVocabularies,
}

impl MockModel {
    pub fn new(behavior: MockBehavior) -> Self {
        MockModel {
            behavior,
            vocab: TaskVocabularies::builtin(),
        }
    }

    pub fn with_vocab(mut self, vocab: TaskVocabularies) -> Self {
        self.vocab = vocab;
        self
    }

    /// Response to turn `turn` of the conversation; earlier turns are
    /// context only.
    pub fn respond(&self, conversation: &Conversation, turn: usize) -> String {
        let t = &conversation.turns[turn];
        let id = &conversation.conversation_id;
        match self.behavior {
            MockBehavior::Oracle => oracle(t),
            MockBehavior::Planted { p, seed } => {
                let mut rng = draw(id, turn, seed);
                if rng.gen::<f64>() < p {
                    oracle(t)
                } else {
                    self.wrong(t, &mut rng)
                }
            }
            MockBehavior::Refuser { rate, seed } => {
                if draw(id, turn, seed).gen::<f64>() < rate {
                    REFUSAL_TEXT.to_string()
                } else {
                    oracle(t)
                }
            }
        }
    }

    fn wrong(&self, t: &Turn, rng: &mut ChaCha8Rng) -> String {
        if let Some(options) = &t.options {
            let correct = t.correct_option();
            let others: Vec<usize> = (0..options.len()).filter(|i| Some(*i) != correct).collect();
            return match others.choose(rng) {
                Some(i) => option_letter(*i).to_string(),
                None => "None of the options.".to_string(),
            };
        }
        let keys: Vec<String> = t.keywords.iter().map(|k| norm_key(k)).collect();
        let clean = |text: &str| {
            let n = norm_key(text);
            !keys.iter().any(|k| !k.is_empty() && n.contains(k.as_str()))
        };
        let label = match &t.target {
            Label::Class(c) => {
                let pool: Vec<&String> = self
                    .vocab
                    .for_task(t.task)
                    .iter()
                    .filter(|v| norm_key(v) != norm_key(c) && clean(v))
                    .collect();
                pool.choose(rng).map(|v| Label::Class((*v).clone()))
            }
            Label::Grid(g) => {
                let pool: Vec<GridCell> = GridCell::ALL
                    .into_iter()
                    .filter(|x| x != g && clean(x.as_str()))
                    .collect();
                pool.choose(rng).map(|x| Label::Grid(*x))
            }
            Label::Triplet(tr) => {
                let verbs: Vec<&String> = self
                    .vocab
                    .triplet
                    .verbs
                    .iter()
                    .filter(|v| norm_key(v) != norm_key(&tr.verb))
                    .collect();
                verbs
                    .choose(rng)
                    .map(|v| Label::Triplet(Triplet::new(&tr.instrument, v.as_str(), &tr.target)))
            }
            Label::Cvs(c) => {
                let [a, b, d] = c.as_array();
                Some(Label::Cvs(CvsVector::new(!a, !b, !d)))
            }
            Label::Boxes(boxes) => Some(Label::Boxes(displaced(boxes))),
        };
        match label {
            Some(l) => l.render(),
            None => "I am not certain what is shown.".to_string(),
        }
    }
}

/// Copies of the boxes moved right of every ground-truth box, so none
/// overlaps any ground truth.
fn displaced(boxes: &[BoundingBox]) -> Vec<BoundingBox> {
    let right = boxes.iter().map(|b| b.x2).fold(0.0, f64::max);
    boxes
        .iter()
        .map(|b| {
            let dx = right - b.x1 + 1.0;
            BoundingBox {
                x1: b.x1 + dx,
                x2: b.x2 + dx,
                ..b.clone()
            }
        })
        .collect()
}

fn oracle(t: &Turn) -> String {
    match (&t.options, t.correct_option()) {
        (Some(_), Some(i)) => option_letter(i).to_string(),
        _ => t.answer.clone(),
    }
}

/// Response of a mock with the builtin vocabulary to the last turn.
pub fn mock_generate(conversation: &Conversation, behavior: MockBehavior) -> String {
    let last = conversation.turns.len().saturating_sub(1);
    MockModel::new(behavior).respond(conversation, last)
}
