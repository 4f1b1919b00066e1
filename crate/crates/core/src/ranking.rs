//! Hybrid rule scoring, deterministic ranking and closed-world precision.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::kg::KnowledgeGraph;
use crate::rules::{apply_rule, Prediction, Rule, RuleStats};
use crate::{Error, Result};

/// Which statistical confidence plays the descriptive part of the score.
///
/// Variants are declared in the lexicographic order of their names, which is
/// the row order of emitted tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mu1Kind {
    /// PCA confidence.
    PcaConfidence,
    /// Standard confidence.
    StandardConfidence,
}

impl Mu1Kind {
    /// Both kinds, in table order.
    pub const ALL: [Mu1Kind; 2] = [Mu1Kind::PcaConfidence, Mu1Kind::StandardConfidence];

    /// Wire name.
    pub fn as_str(self) -> &'static str {
        match self {
            Mu1Kind::PcaConfidence => "pca_confidence",
            Mu1Kind::StandardConfidence => "standard_confidence",
        }
    }

    /// The matching ratio of `stats`.
    pub fn select(self, stats: &RuleStats) -> f64 {
        match self {
            Mu1Kind::PcaConfidence => stats.pca_conf,
            Mu1Kind::StandardConfidence => stats.std_conf,
        }
    }
}

impl fmt::Display for Mu1Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mu1Kind {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s {
            "pca_confidence" | "pca" => Ok(Mu1Kind::PcaConfidence),
            "standard_confidence" | "standard" | "std" => Ok(Mu1Kind::StandardConfidence),
            other => Err(alloc::format!("unknown mu1 kind `{other}`")),
        }
    }
}

/// A rule with both parts of its hybrid score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRule {
    /// Canonical rule id.
    pub rule_id: String,
    /// Support, used to break score ties.
    pub support: u64,
    /// Descriptive score.
    pub mu1: f64,
    /// Which confidence `mu1` holds.
    pub mu1_kind: Mu1Kind,
    /// Language-model score.
    pub mu2: f64,
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::RatioOutOfRange { name, value })
    }
}

/// `(1 - lambda) * mu1 + lambda * mu2`, all arguments in `[0, 1]`.
pub fn hybrid_score(mu1: f64, mu2: f64, lambda: f64) -> Result<f64> {
    check_unit("mu1", mu1)?;
    check_unit("mu2", mu2)?;
    check_unit("lambda", lambda)?;
    Ok((1.0 - lambda) * mu1 + lambda * mu2)
}

/// A rule and its hybrid score at some lambda.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked<'a> {
    /// The rule.
    pub rule: &'a ScoredRule,
    /// Its hybrid score.
    pub score: f64,
}

/// Total order used everywhere rules are ranked: score descending, then
/// support descending, then rule id ascending.
pub fn rank_order(a_score: f64, a: &ScoredRule, b_score: f64, b: &ScoredRule) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then_with(|| b.support.cmp(&a.support))
        .then_with(|| a.rule_id.cmp(&b.rule_id))
}

/// Ranks rules by their hybrid score at `lambda`.
pub fn rank_rules(rules: &[ScoredRule], lambda: f64) -> Result<Vec<Ranked<'_>>> {
    let mut ranked = rules
        .iter()
        .map(|rule| Ok(Ranked { rule, score: hybrid_score(rule.mu1, rule.mu2, lambda)? }))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| rank_order(a.score, a.rule, b.score, b.rule));
    Ok(ranked)
}

/// Novel predictions and how many of them the test graph confirms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrecisionCounts {
    /// Predictions absent from train.
    pub novel: usize,
    /// Novel predictions present in test.
    pub confirmed: usize,
}

impl PrecisionCounts {
    /// `confirmed / novel`, undefined without novel predictions.
    pub fn precision(&self) -> Option<f64> {
        (self.novel > 0).then(|| self.confirmed as f64 / self.novel as f64)
    }
}

/// Counts behind [`pred_prec_rule`]. Novelty is re-checked against `train`.
pub fn precision_counts(train: &KnowledgeGraph, test: &KnowledgeGraph, preds: &[Prediction]) -> PrecisionCounts {
    let mut counts = PrecisionCounts::default();
    for p in preds.iter().filter(|p| !train.contains(&p.fact)) {
        counts.novel += 1;
        if test.contains(&p.fact) {
            counts.confirmed += 1;
        }
    }
    counts
}

/// Closed-world precision of one rule's predictions: the share of predictions
/// outside `train` that `test` contains. `None` when nothing is novel.
pub fn pred_prec_rule(train: &KnowledgeGraph, test: &KnowledgeGraph, preds: &[Prediction]) -> Option<f64> {
    precision_counts(train, test, preds).precision()
}

/// Mean precision over a rule set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionSummary {
    /// Mean of the defined entries.
    pub mean: f64,
    /// Number of defined entries.
    pub counted: usize,
    /// Number of undefined entries left out.
    pub skipped: usize,
}

/// Averages the defined precisions; undefined ones are skipped and counted.
pub fn pred_prec_set(per_rule: &[Option<f64>]) -> Result<PrecisionSummary> {
    let defined: Vec<f64> = per_rule.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::NoDefinedPrecision);
    }
    Ok(PrecisionSummary {
        mean: defined.iter().sum::<f64>() / defined.len() as f64,
        counted: defined.len(),
        skipped: per_rule.len() - defined.len(),
    })
}

/// Lambda and k grids of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridConfig {
    /// Weights of the language-model score.
    pub lambda_grid: Vec<f64>,
    /// Numbers of top rules to evaluate.
    pub k_grid: Vec<usize>,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            lambda_grid: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            k_grid: alloc::vec![5, 10, 20, 50, 100],
        }
    }
}

impl HybridConfig {
    /// Grids must be nonempty, lambdas in `[0, 1]`, k positive.
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::InvalidGrid("lambda"));
        }
        if self.k_grid.is_empty() || self.k_grid.contains(&0) {
            return Err(Error::InvalidGrid("k"));
        }
        Ok(())
    }
}

/// One cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    /// Descriptive score kind.
    pub mu1_kind: Mu1Kind,
    /// Weight of the language-model score.
    pub lambda: f64,
    /// Requested number of top rules.
    pub k: usize,
    /// Mean precision over the top rules with defined precision; 0 when none.
    pub avg_precision: f64,
    /// Top rules whose precision entered the mean.
    pub n_rules: usize,
    /// Top rules left out for lack of novel predictions.
    pub skipped: usize,
}

/// Rows ordered by (kind, lambda, k).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    /// The cells.
    pub rows: Vec<SweepRow>,
}

/// A mined rule with its language-model score, ready for sweeping.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleRecord {
    /// The rule, over the train vocabulary.
    pub rule: Rule,
    /// Statistics on train.
    pub stats: RuleStats,
    /// Mean reciprocal rank of its scored novel predictions.
    pub mu2: f64,
}

/// A rule record with its closed-world precision already computed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedRule {
    /// Canonical rule id.
    pub rule_id: String,
    /// Statistics on train.
    pub stats: RuleStats,
    /// Language-model score.
    pub mu2: f64,
    /// Closed-world precision, if defined.
    pub precision: Option<f64>,
}

impl EvaluatedRule {
    /// Applies `record.rule` to `train` and scores the predictions on `test`.
    pub fn evaluate(train: &KnowledgeGraph, test: &KnowledgeGraph, record: &RuleRecord) -> Self {
        let preds = apply_rule(train, &record.rule);
        Self {
            rule_id: record.rule.id().into(),
            stats: record.stats,
            mu2: record.mu2,
            precision: pred_prec_rule(train, test, &preds),
        }
    }

    /// Projection onto one descriptive score kind.
    pub fn scored(&self, kind: Mu1Kind) -> ScoredRule {
        ScoredRule {
            rule_id: self.rule_id.clone(),
            support: self.stats.support,
            mu1: kind.select(&self.stats),
            mu1_kind: kind,
            mu2: self.mu2,
        }
    }
}

/// Average top-k precision for every (kind, lambda, k) cell.
pub fn sweep(
    records: &[RuleRecord],
    train: &KnowledgeGraph,
    test: &KnowledgeGraph,
    kinds: &[Mu1Kind],
    config: &HybridConfig,
) -> Result<SweepTable> {
    let evaluated: Vec<EvaluatedRule> = records.iter().map(|r| EvaluatedRule::evaluate(train, test, r)).collect();
    sweep_evaluated(&evaluated, kinds, config)
}

/// [`sweep`] over rules whose precision is already known.
pub fn sweep_evaluated(rules: &[EvaluatedRule], kinds: &[Mu1Kind], config: &HybridConfig) -> Result<SweepTable> {
    config.validate()?;
    let mut kinds = kinds.to_vec();
    kinds.sort_unstable();
    kinds.dedup();
    let mut lambdas = config.lambda_grid.clone();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let mut ks = config.k_grid.clone();
    ks.sort_unstable();
    ks.dedup();

    let mut rows = Vec::with_capacity(kinds.len() * lambdas.len() * ks.len());
    for &kind in &kinds {
        let scored: Vec<ScoredRule> = rules.iter().map(|r| r.scored(kind)).collect();
        let precision_of: alloc::collections::BTreeMap<&str, Option<f64>> =
            rules.iter().map(|r| (r.rule_id.as_str(), r.precision)).collect();
        for &lambda in &lambdas {
            let ranked = rank_rules(&scored, lambda)?;
            for &k in &ks {
                let top: Vec<Option<f64>> =
                    ranked.iter().take(k).map(|r| precision_of[r.rule.rule_id.as_str()]).collect();
                let (avg_precision, n_rules, skipped) = match pred_prec_set(&top) {
                    Ok(s) => (s.mean, s.counted, s.skipped),
                    Err(Error::NoDefinedPrecision) => (0.0, 0, top.len()),
                    Err(e) => return Err(e),
                };
                rows.push(SweepRow { mu1_kind: kind, lambda, k, avg_precision, n_rules, skipped });
            }
        }
    }
    Ok(SweepTable { rows })
}
