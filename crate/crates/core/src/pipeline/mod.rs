//! Corpus construction: refine labels, enrich with cross-task statements,
//! explain answers, expand into conversations.

mod build;
mod correlate;
mod expand;
mod explain;
mod import;
mod lexicon;
mod templates;

pub use build::{
    build_dataset, report_path, run_build, BuildOutput, BuildReport, PipelineConfig,
    RecordLengths, Resources, StageReport, STAGES,
};
pub use correlate::{
    builtin_rules, enrich_correlations, load_rules, parse_rules, CorrelationRule, EnrichedRecord,
    EnrichmentReport, Statement,
};
pub use expand::{
    evaluation_conversation, expand_conversations, longest_run, mcq_prompt, option_letter,
    ExpandOptions, ExpansionMode, ExpansionReport, OptionPool, MAX_OPTIONS,
};
pub use explain::{
    builtin_explanations, generate_explanations, load_explanations, parse_explanations,
    ExplainedRecord, ExplanationReport, ExplanationTemplate,
};
pub use import::{import_cholec80, import_endoscapes, import_sar_rarp, ImportFormat};
pub use lexicon::{refine_labels, Lexicon, LexiconHit, RefinementReport, Substitution};
pub use templates::{PromptTemplate, PromptTemplateSet, ANSWER_SLOT, SURGERY_SLOT, TEMPLATE_BOUNDS};
