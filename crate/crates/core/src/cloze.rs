//! Cloze prompts for rule predictions and the reciprocal-rank rule score.
//!
//! A prediction `r(s, o)` is verbalized with the relation's template, the
//! subject label substituted for `{X}` and the object left as `[MASK]`. A
//! [`Scorer`] answers each prompt with the 1-based rank of the object's token
//! among its top-n candidates, and [`mu2`] folds a rule's ranks into a single
//! score.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kg::{KnowledgeGraph, Triple};
use crate::rules::Prediction;
use crate::{Error, Result};

/// Subject placeholder in templates.
pub const SUBJECT_SLOT: &str = "{X}";
/// Masked object token in templates and prompts.
pub const MASK: &str = "[MASK]";

/// A validated prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template(String);

impl Template {
    /// Accepts templates with exactly one `{X}` followed later by exactly one
    /// `[MASK]`; the subject is verbalized, the object is masked.
    pub fn parse(relation: &str, text: &str) -> Result<Self> {
        let invalid = |reason| Error::InvalidTemplate { relation: relation.to_string(), reason };
        match text.matches(SUBJECT_SLOT).count() {
            0 => return Err(invalid("missing {X} subject slot")),
            1 => {}
            _ => return Err(invalid("more than one {X} subject slot")),
        }
        match text.matches(MASK).count() {
            0 => return Err(invalid("missing [MASK] object slot")),
            1 => {}
            _ => return Err(invalid("more than one [MASK] object slot")),
        }
        if text.find(MASK) < text.find(SUBJECT_SLOT) {
            return Err(invalid("[MASK] precedes {X}; templates must mask the object, not the subject"));
        }
        Ok(Self(text.to_string()))
    }

    /// Template text.
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Substitutes the subject label.
    pub fn fill(&self, subject_label: &str) -> String {
        self.0.replacen(SUBJECT_SLOT, subject_label, 1)
    }
}

/// Relation name to template.
#[derive(Debug, Clone, Default)]
pub struct TemplateMap(BTreeMap<String, Template>);

impl TemplateMap {
    /// Empty map.
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates and registers a template; duplicates are rejected.
    pub fn insert(&mut self, relation: &str, text: &str) -> Result<()> {
        let template = Template::parse(relation, text)?;
        if self.0.contains_key(relation) {
            return Err(Error::DuplicateTemplate(relation.to_string()));
        }
        self.0.insert(relation.to_string(), template);
        Ok(())
    }

    /// Template for a relation name.
    pub fn get(&self, relation: &str) -> Option<&Template> {
        self.0.get(relation)
    }

    /// Number of templates.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// True when no templates are registered.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One masked query for the scorer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClozeQuery {
    /// Stable id, `subject|relation|object` by entity and relation names. Equal
    /// facts produced by different rules share one id.
    pub query_id: String,
    /// Prompt with exactly one `[MASK]`.
    pub prompt: String,
    /// Object surface form the scorer should look for.
    pub target_label: String,
    /// The fact that was verbalized.
    pub fact: Triple,
}

/// Scorer verdict for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankResult {
    /// Id of the answered query.
    pub query_id: String,
    /// 1-based rank of the target among the filtered top-n candidates.
    pub rank: Option<u32>,
    /// Filtered candidates, best first, at most top-n.
    pub top_tokens: Vec<String>,
    /// The scorer reported the target could not be mapped to a single token.
    pub unmappable: bool,
}

/// Verbalizes `pred` with the template of its relation.
pub fn build_prompt(kg: &KnowledgeGraph, templates: &TemplateMap, pred: &Prediction) -> Result<ClozeQuery> {
    let v = kg.vocab();
    let fact = pred.fact;
    let relation = v.relation_name(fact.relation);
    let template = templates.get(relation).ok_or_else(|| Error::MissingTemplate(relation.to_string()))?;
    Ok(ClozeQuery {
        query_id: format!("{}|{}|{}", v.entity_name(fact.subject), relation, v.entity_name(fact.object)),
        prompt: template.fill(v.entity_label(fact.subject)),
        target_label: v.entity_label(fact.object).to_string(),
        fact,
    })
}

/// Failure talking to a scorer.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScorerError {
    /// Worth retrying: connection failure, timeout, server-side error.
    #[error("transient scorer failure: {0}")]
    Transient(String),
    /// The scorer answered, but not per the protocol.
    #[error("scorer protocol violation: {0}")]
    Protocol(String),
}

/// Anything that can rank cloze targets. Implementations answer one batch at a
/// time and must return one result per query, in query order.
pub trait Scorer: Send + Sync {
    /// Scores a batch against the top `top_n` candidates.
    fn score(&self, queries: &[ClozeQuery], top_n: usize) -> Result<Vec<RankResult>, ScorerError>;
}

/// Case-insensitive 1-based position of `target` in `tokens`.
pub fn rank_of(tokens: &[String], target: &str) -> Option<u32> {
    let target = target.to_lowercase();
    tokens.iter().position(|t| t.to_lowercase() == target).map(|i| i as u32 + 1)
}

/// Deterministic scorer answering prompts from a fixed table of ranked
/// candidates. Unknown prompts get no candidates.
#[derive(Debug, Clone, Default)]
pub struct FixtureScorer {
    answers: BTreeMap<String, Vec<String>>,
}

impl FixtureScorer {
    /// Empty fixture.
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the ranked candidates for a prompt.
    pub fn insert(&mut self, prompt: &str, tokens: Vec<String>) -> Result<()> {
        if self.answers.contains_key(prompt) {
            return Err(Error::DuplicateFixturePrompt(prompt.to_string()));
        }
        self.answers.insert(prompt.to_string(), tokens);
        Ok(())
    }

    /// Number of prompts.
    pub fn len(&self) -> usize {
        self.answers.len()
    }

    /// True when empty.
    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl Scorer for FixtureScorer {
    fn score(&self, queries: &[ClozeQuery], top_n: usize) -> Result<Vec<RankResult>, ScorerError> {
        Ok(queries
            .iter()
            .map(|q| {
                let top_tokens: Vec<String> = self
                    .answers
                    .get(&q.prompt)
                    .map(|t| t.iter().take(top_n).cloned().collect())
                    .unwrap_or_default();
                RankResult {
                    query_id: q.query_id.clone(),
                    rank: rank_of(&top_tokens, &q.target_label),
                    top_tokens,
                    unmappable: false,
                }
            })
            .collect())
    }
}

/// Mean reciprocal rank over a rule's scored predictions; misses count as 0 and
/// an empty list scores 0.
pub fn mu2(ranks: &[Option<u32>]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    let total: f64 = ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / f64::from(r.max(1)))).sum();
    total / ranks.len() as f64
}

/// Caps `preds` at `cap` by seeded sampling without replacement; survivors
/// keep their original order. The stream is keyed by `seed` and `key` (the
/// rule id) so rules sample independently.
pub fn sample_predictions(preds: Vec<Prediction>, cap: Option<usize>, seed: u64, key: &str) -> Vec<Prediction> {
    let Some(cap) = cap else { return preds };
    if preds.len() <= cap {
        return preds;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(key.as_bytes()));
    let mut keep = index::sample(&mut rng, preds.len(), cap).into_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| preds[i]).collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}
