//! Conversation expansion: phrasing, multiple-choice options, multi-turn
//! grouping and task interleaving.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::explain::ExplainedRecord;
use super::templates::{PromptTemplate, PromptTemplateSet};
use crate::datamodel::{
    BoundingBox, Conversation, CvsVector, GridCell, Label, Protocol, SampleRecord, TaskKind,
    TaskVocabularies, TripletVocab, Turn, Triplet,
};
use crate::error::{Error, Result};
use crate::util::{norm_key, sub_seed};

/// Maximum number of options shown in a multiple-choice turn.
pub const MAX_OPTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMode {
    SingleTurn,
    MultiTurn,
    Mixed,
}

impl std::str::FromStr for ExpansionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "single_turn" | "single" => Ok(ExpansionMode::SingleTurn),
            "multi_turn" | "multi" => Ok(ExpansionMode::MultiTurn),
            "mixed" => Ok(ExpansionMode::Mixed),
            other => Err(format!("unknown expansion mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpandOptions {
    pub mode: ExpansionMode,
    pub seed: u64,
    /// Longest allowed run of consecutive conversations of one task kind.
    pub interleave_k: usize,
    /// Share of records expanded as multi-turn in mixed mode.
    pub mixed_ratio: f64,
    /// Share of conversations phrased as multiple choice.
    pub mcq_ratio: f64,
    pub max_turns: usize,
    /// Label vocabularies that supply multiple-choice distractors, on top of
    /// the labels seen in the corpus.
    pub vocab: TaskVocabularies,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        ExpandOptions {
            mode: ExpansionMode::Mixed,
            seed: 0,
            interleave_k: 8,
            mixed_ratio: 0.5,
            mcq_ratio: 0.0,
            max_turns: 6,
            vocab: TaskVocabularies::builtin(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub records: usize,
    pub conversations: usize,
    pub turns: usize,
    pub multi_turn_conversations: usize,
    pub mcq_conversations: usize,
    /// Multiple-choice conversations demoted to open vocabulary because some
    /// turn had no distractor.
    pub mcq_fallbacks: usize,
    pub turns_per_task: BTreeMap<TaskKind, usize>,
    /// Template index to use count, per task.
    pub template_usage: BTreeMap<TaskKind, BTreeMap<usize, usize>>,
    /// Runs longer than `interleave_k` that could not be avoided.
    pub interleave_violations: usize,
    pub longest_run: usize,
}

impl ExpansionReport {
    pub fn distinct_templates(&self, task: TaskKind) -> usize {
        self.template_usage.get(&task).map_or(0, BTreeMap::len)
    }
}

/// Candidate answers for multiple-choice distractors.
#[derive(Debug, Clone, Default)]
pub struct OptionPool {
    classes: BTreeMap<TaskKind, Vec<String>>,
    triplet: TripletVocab,
    observed_triplets: Vec<Triplet>,
}

impl OptionPool {
    pub fn new(vocab: &TaskVocabularies, records: &[SampleRecord]) -> Self {
        let mut classes: BTreeMap<TaskKind, BTreeSet<String>> = BTreeMap::new();
        for (task, terms) in &vocab.tasks {
            if task.label_shape() == crate::datamodel::LabelShape::Class {
                classes.entry(*task).or_default().extend(terms.iter().cloned());
            }
        }
        let mut observed_triplets = BTreeSet::new();
        for r in records {
            for (task, label) in &r.labels {
                match label {
                    Label::Class(c) => {
                        classes.entry(*task).or_default().insert(c.clone());
                    }
                    Label::Triplet(t) => {
                        observed_triplets.insert((t.instrument.clone(), t.verb.clone(), t.target.clone()));
                    }
                    _ => {}
                }
            }
        }
        OptionPool {
            classes: classes
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            triplet: vocab.triplet.clone(),
            observed_triplets: observed_triplets
                .into_iter()
                .map(|(i, v, t)| Triplet::new(i, v, t))
                .collect(),
        }
    }

    /// Up to `n` distinct distractor renderings, none equal to the answer.
    pub fn distractors<R: Rng>(
        &self,
        task: TaskKind,
        label: &Label,
        extent: Option<(f64, f64)>,
        n: usize,
        rng: &mut R,
    ) -> Vec<String> {
        let answer = norm_key(&label.render());
        let mut seen: BTreeSet<String> = BTreeSet::from([answer]);
        let mut out = Vec::new();
        let mut push = |text: String, out: &mut Vec<String>| {
            if out.len() < n && seen.insert(norm_key(&text)) {
                out.push(text);
            }
        };
        match label {
            Label::Class(_) => {
                let pool = self.classes.get(&task).map(Vec::as_slice).unwrap_or(&[]);
                let mut candidates: Vec<&String> = pool.iter().collect();
                candidates.shuffle(rng);
                for c in candidates {
                    push(c.clone(), &mut out);
                }
            }
            Label::Grid(g) => {
                let mut cells: Vec<GridCell> = GridCell::ALL.into_iter().filter(|c| c != g).collect();
                cells.shuffle(rng);
                for c in cells {
                    push(c.as_str().to_string(), &mut out);
                }
            }
            Label::Cvs(v) => {
                let mut combos: Vec<CvsVector> = (0..8u8)
                    .map(|bits| CvsVector::new(bits & 1 != 0, bits & 2 != 0, bits & 4 != 0))
                    .filter(|c| c != v)
                    .collect();
                combos.shuffle(rng);
                for c in combos {
                    push(c.to_string(), &mut out);
                }
            }
            Label::Triplet(_) => {
                if self.triplet.is_empty() {
                    let mut obs: Vec<&Triplet> = self.observed_triplets.iter().collect();
                    obs.shuffle(rng);
                    for t in obs {
                        push(t.to_string(), &mut out);
                    }
                } else {
                    for _ in 0..64 {
                        if out.len() >= n {
                            break;
                        }
                        let pick = |idx: usize, rng: &mut R| {
                            self.triplet.component(idx).choose(rng).cloned().unwrap_or_default()
                        };
                        let t = Triplet::new(pick(0, rng), pick(1, rng), pick(2, rng));
                        push(t.to_string(), &mut out);
                    }
                }
            }
            Label::Boxes(boxes) => {
                for _ in 0..32 {
                    if out.len() >= n || boxes.is_empty() {
                        break;
                    }
                    let moved: Vec<BoundingBox> =
                        boxes.iter().map(|b| translate_box(b, extent, rng)).collect();
                    push(Label::Boxes(moved).render(), &mut out);
                }
            }
        }
        out
    }
}

/// Shifts a box by a random offset of 0.5 to 1.5 box sizes per axis, kept
/// inside the image when its extent is known.
fn translate_box<R: Rng>(b: &BoundingBox, extent: Option<(f64, f64)>, rng: &mut R) -> BoundingBox {
    let (w, h) = (b.x2 - b.x1, b.y2 - b.y1);
    let mut shift = |size: f64, lo: f64, hi: f64| {
        let mag = (size * rng.gen_range(0.5..1.5)).round().max(1.0);
        let signed = if rng.gen_bool(0.5) { mag } else { -mag };
        let moved = lo + signed;
        let max_lo = hi - size;
        if moved < 0.0 || moved > max_lo {
            let flipped = lo - signed;
            flipped.clamp(0.0, max_lo.max(0.0))
        } else {
            moved
        }
    };
    let (ew, eh) = extent.unwrap_or((f64::MAX / 4.0, f64::MAX / 4.0));
    let x1 = shift(w, b.x1, ew);
    let y1 = shift(h, b.y1, eh);
    BoundingBox {
        x1,
        y1,
        x2: x1 + w,
        y2: y1 + h,
        label: b.label.clone(),
    }
}

/// Option letter for an index: A, B, C, ...
pub fn option_letter(idx: usize) -> char {
    (b'A' + idx as u8) as char
}

/// Multiple-choice prompt listing lettered options.
pub fn mcq_prompt(question: &str, options: &[String]) -> String {
    let mut out = format!("{question}\nOptions:\n");
    for (i, o) in options.iter().enumerate() {
        out.push_str(&format!("{}. {o}\n", option_letter(i)));
    }
    out.push_str("Answer with the letter of the correct option.");
    out
}

fn tidy(text: String) -> String {
    let mut t = text;
    while t.contains("..") {
        t = t.replace("..", ".");
    }
    t
}

/// Builds an open-vocabulary turn.
pub fn ov_turn(
    record: &SampleRecord,
    task: TaskKind,
    template: &PromptTemplate,
    answer_text: &str,
    statements: &[&str],
) -> Turn {
    let label = &record.labels[&task];
    let mut answer = template.answer_for(answer_text, &record.surgery_type);
    for s in statements {
        answer.push(' ');
        answer.push_str(s);
    }
    Turn {
        prompt: template.question_for(&record.surgery_type),
        answer: tidy(answer),
        keywords: label.keywords(),
        task,
        options: None,
        target: label.clone(),
    }
}

/// Builds a multiple-choice turn, or `None` when no distractor exists.
pub fn mcq_turn<R: Rng>(
    record: &SampleRecord,
    task: TaskKind,
    template: &PromptTemplate,
    pool: &OptionPool,
    rng: &mut R,
) -> Option<Turn> {
    let label = &record.labels[&task];
    let extent = record.image_extent.map(|e| (e.width, e.height));
    let distractors = pool.distractors(task, label, extent, MAX_OPTIONS - 1, rng);
    if distractors.is_empty() {
        return None;
    }
    let answer = label.render();
    let mut options = distractors;
    let at = rng.gen_range(0..=options.len());
    options.insert(at, answer.clone());
    Some(Turn {
        prompt: mcq_prompt(&template.question_for(&record.surgery_type), &options),
        answer,
        keywords: label.keywords(),
        task,
        options: Some(options),
        target: label.clone(),
    })
}

struct RecordOutput {
    conversations: Vec<Conversation>,
    usage: Vec<(TaskKind, usize)>,
    fallbacks: usize,
}

fn expand_record(
    item: &ExplainedRecord,
    set: &PromptTemplateSet,
    options: &ExpandOptions,
    pool: &OptionPool,
) -> Result<RecordOutput> {
    let record = &item.record;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(options.seed ^ set.seed.rotate_left(17), &record.sample_id));
    let tasks: Vec<TaskKind> = record.labels.keys().copied().collect();
    let multi = match options.mode {
        ExpansionMode::SingleTurn => false,
        ExpansionMode::MultiTurn => true,
        ExpansionMode::Mixed => rng.gen_bool(options.mixed_ratio.clamp(0.0, 1.0)),
    } && tasks.len() > 1;
    let groups: Vec<Vec<TaskKind>> = if multi {
        tasks.chunks(options.max_turns.max(1)).map(<[TaskKind]>::to_vec).collect()
    } else {
        tasks.iter().map(|t| vec![*t]).collect()
    };
    let mut out = RecordOutput {
        conversations: Vec::new(),
        usage: Vec::new(),
        fallbacks: 0,
    };
    for (n, group) in groups.into_iter().enumerate() {
        let want_mcq = rng.gen_bool(options.mcq_ratio.clamp(0.0, 1.0));
        let mut picks = Vec::with_capacity(group.len());
        for task in &group {
            let templates = set.for_task(*task)?;
            let idx = rng.gen_range(0..templates.len());
            picks.push((*task, idx, &templates[idx]));
        }
        let mut turns = Vec::new();
        let mut protocol = Protocol::Ov;
        if want_mcq {
            let mcq: Option<Vec<Turn>> = picks
                .iter()
                .map(|(task, _, t)| mcq_turn(record, *task, t, pool, &mut rng))
                .collect();
            match mcq {
                Some(t) => {
                    turns = t;
                    protocol = Protocol::Mcq;
                }
                None => out.fallbacks += 1,
            }
        }
        if protocol == Protocol::Ov {
            turns = picks
                .iter()
                .map(|(task, _, t)| {
                    let statements: Vec<&str> = item
                        .statements
                        .iter()
                        .filter(|s| s.second == *task)
                        .map(|s| s.text.as_str())
                        .collect();
                    let answer = item
                        .answers
                        .get(task)
                        .cloned()
                        .unwrap_or_else(|| record.labels[task].render());
                    ov_turn(record, *task, t, &answer, &statements)
                })
                .collect();
        }
        out.usage.extend(picks.iter().map(|(task, idx, _)| (*task, *idx)));
        out.conversations.push(Conversation {
            conversation_id: format!("{}#{n}", record.sample_id),
            sample_id: record.sample_id.clone(),
            protocol,
            turns,
        });
    }
    Ok(out)
}

/// Expands explained records into conversations.
///
/// Every labeled task of a record appears in at least one conversation.
/// Multi-turn conversations follow hierarchy order and hold at most
/// `max_turns` turns. Output order interleaves task kinds so that no more
/// than `interleave_k` consecutive conversations share one kind whenever
/// that is achievable.
pub fn expand_conversations(
    records: &[ExplainedRecord],
    set: &PromptTemplateSet,
    options: &ExpandOptions,
) -> Result<(Vec<Conversation>, ExpansionReport)> {
    let plain: Vec<SampleRecord> = records.iter().map(|r| r.record.clone()).collect();
    let pool = OptionPool::new(&options.vocab, &plain);
    let outputs: Vec<RecordOutput> = records
        .par_iter()
        .map(|r| expand_record(r, set, options, &pool))
        .collect::<Result<_>>()?;

    let mut report = ExpansionReport {
        records: records.len(),
        ..Default::default()
    };
    let mut all = Vec::new();
    for o in outputs {
        report.mcq_fallbacks += o.fallbacks;
        for (task, idx) in o.usage {
            *report
                .template_usage
                .entry(task)
                .or_default()
                .entry(idx)
                .or_default() += 1;
        }
        all.extend(o.conversations);
    }
    for c in &all {
        report.turns += c.turns.len();
        if c.turns.len() > 1 {
            report.multi_turn_conversations += 1;
        }
        if c.protocol == Protocol::Mcq {
            report.mcq_conversations += 1;
        }
        for t in &c.turns {
            *report.turns_per_task.entry(t.task).or_default() += 1;
        }
    }
    let (ordered, violations) = interleave(all, options.interleave_k.max(1));
    report.conversations = ordered.len();
    report.interleave_violations = violations;
    report.longest_run = longest_run(&ordered);
    Ok((ordered, report))
}

/// Longest run of consecutive single-kind conversations of the same kind.
pub fn longest_run(conversations: &[Conversation]) -> usize {
    let mut best = 0;
    let mut run = 0;
    let mut last: Option<TaskKind> = None;
    for c in conversations {
        match c.task_kind() {
            Some(k) if Some(k) == last => run += 1,
            Some(k) => {
                last = Some(k);
                run = 1;
            }
            None => {
                last = None;
                run = 0;
            }
        }
        best = best.max(run);
    }
    best
}

/// Greedy interleaving: repeatedly take from the queue with the most
/// remaining conversations, skipping the current kind once its run reached
/// `k`. Mixed-kind conversations form their own queue and break runs.
fn interleave(conversations: Vec<Conversation>, k: usize) -> (Vec<Conversation>, usize) {
    let mut queues: BTreeMap<Option<TaskKind>, VecDeque<Conversation>> = BTreeMap::new();
    for c in conversations {
        queues.entry(c.task_kind()).or_default().push_back(c);
    }
    let total: usize = queues.values().map(VecDeque::len).sum();
    let mut out = Vec::with_capacity(total);
    let mut last: Option<TaskKind> = None;
    let mut run = 0usize;
    let mut violations = 0;
    while out.len() < total {
        let blocked = |key: &Option<TaskKind>| key.is_some() && *key == last && run >= k;
        let choose = |allow_blocked: bool| {
            queues
                .iter()
                .filter(|(key, q)| !q.is_empty() && (allow_blocked || !blocked(key)))
                .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
                .map(|(key, _)| *key)
        };
        let key = match choose(false) {
            Some(key) => key,
            None => {
                violations += 1;
                choose(true).expect("a non-empty queue remains")
            }
        };
        let c = queues
            .get_mut(&key)
            .and_then(VecDeque::pop_front)
            .expect("chosen queue is non-empty");
        match key {
            Some(kind) if Some(kind) == last => run += 1,
            Some(kind) => {
                last = Some(kind);
                run = 1;
            }
            None => {
                last = None;
                run = 0;
            }
        }
        out.push(c);
    }
    (out, violations)
}

/// Single-turn evaluation conversation for one task of a record, phrased
/// with the task's first template.
pub fn evaluation_conversation(
    record: &SampleRecord,
    task: TaskKind,
    protocol: Protocol,
    set: &PromptTemplateSet,
    pool: &OptionPool,
    seed: u64,
) -> Result<Conversation> {
    let template = &set.for_task(task)?[0];
    let turn = match protocol {
        Protocol::Ov => ov_turn(record, task, template, &record.labels[&task].render(), &[]),
        Protocol::Mcq => {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &record.sample_id));
            mcq_turn(record, task, template, pool, &mut rng).ok_or_else(|| {
                Error::Config(format!(
                    "no multiple-choice distractors for {task} in `{}`",
                    record.sample_id
                ))
            })?
        }
    };
    Ok(Conversation {
        conversation_id: format!("{}:{}", record.sample_id, task.as_str()),
        sample_id: record.sample_id.clone(),
        protocol,
        turns: vec![turn],
    })
}
