//! The batch stages: split, mine, score, sweep. Each stage reads the config,
//! recomputes the deterministic train/test graphs, and writes its artifact into
//! the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rulelm_core::cloze::{build_prompt, mu2, sample_predictions, ClozeQuery, Scorer, TemplateMap};
use rulelm_core::kg::{split_train_test, KnowledgeGraph, Split};
use rulelm_core::ranking::{sweep_evaluated, EvaluatedRule, RuleRecord, SweepTable};
use rulelm_core::rules::{apply_rule, mine_body, rule_stats, sort_mined, MinedRule, MiningConfig};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::{self, ScoredRow};
use crate::scorer::{self, BatchOptions};

pub const TRAIN_FILE: &str = "train.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const SPLIT_META_FILE: &str = "split_meta.toml";
pub const RULES_FILE: &str = "rules.tsv";
pub const SCORED_FILE: &str = "scored_rules.tsv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const DETAILS_FILE: &str = "rule_details.tsv";
pub const SKIPPED_FILE: &str = "sweep_skipped.csv";

/// Train and test graphs over one vocabulary.
pub struct Graphs {
    pub train: KnowledgeGraph,
    pub test: KnowledgeGraph,
    /// Present when the train graph came from a seeded split.
    pub split: Option<Split>,
}

/// Loads the full graph and either reads the configured train graph or splits.
pub fn prepare_graphs(config: &PipelineConfig) -> Result<Graphs> {
    let test = io::load_triples(&config.kg_path()?, config.paths.labels.as_deref())?;
    if let Some(train_path) = &config.paths.train {
        let train = io::load_subgraph(train_path, &test)?;
        log::info!("train graph from {}: {} facts", train_path.display(), train.len());
        return Ok(Graphs { train, test, split: None });
    }
    let spec = config.split_spec()?;
    let split = split_train_test(&test, spec);
    log::info!(
        "split ratio {} seed {}: {} train / {} test facts",
        spec.ratio(),
        spec.seed(),
        split.train.len(),
        split.test.len()
    );
    Ok(Graphs { train: split.train.clone(), test, split: Some(split) })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Error::Internal(e.to_string()))
}

/// [`rulelm_core::rules::mine_rules`] fanned out over body relation pairs.
pub fn mine_parallel(kg: &KnowledgeGraph, config: &MiningConfig, jobs: usize) -> Result<Vec<MinedRule>> {
    let relations: Vec<_> = kg.vocab().relation_ids().collect();
    let pairs: Vec<_> = relations.iter().flat_map(|&p| relations.iter().map(move |&q| (p, q))).collect();
    let mut rules: Vec<MinedRule> =
        pool(jobs)?.install(|| pairs.par_iter().flat_map_iter(|&(p, q)| mine_body(kg, p, q, config)).collect());
    sort_mined(&mut rules);
    Ok(rules)
}

fn write_split_outputs(config: &PipelineConfig, split: &Split, out: &Path) -> Result<()> {
    let spec = config.split_spec()?;
    io::write_split_metadata(&out.join(SPLIT_META_FILE), split, spec.ratio(), spec.seed())
}

/// Writes the train and test graphs and the split metadata.
pub fn run_split(config: &PipelineConfig) -> Result<PathBuf> {
    config.validate_graph_inputs()?;
    let started = Instant::now();
    let graphs = prepare_graphs(config)?;
    let out = config.out_dir();
    io::write_triples(&out.join(TRAIN_FILE), &graphs.train)?;
    io::write_triples(&out.join(TEST_FILE), &graphs.test)?;
    if let Some(split) = &graphs.split {
        write_split_outputs(config, split, &out)?;
    }
    log::info!("split stage done in {:.2?}", started.elapsed());
    Ok(out)
}

/// Mines rules on the train graph and writes the rules file.
pub fn run_mine(config: &PipelineConfig) -> Result<PathBuf> {
    config.validate_graph_inputs()?;
    let started = Instant::now();
    let graphs = prepare_graphs(config)?;
    let out = config.out_dir();
    if let Some(split) = &graphs.split {
        write_split_outputs(config, split, &out)?;
    }
    let rules = mine_parallel(&graphs.train, &config.mining_config()?, config.jobs())?;
    let path = out.join(RULES_FILE);
    io::write_rules(&path, &rules)?;
    log::info!("mine stage: {} rules in {:.2?}", rules.len(), started.elapsed());
    Ok(path)
}

/// Queries per rule, plus the deduplicated query list sent to the scorer.
struct QueryPlan {
    per_rule: Vec<Vec<String>>,
    unique: Vec<ClozeQuery>,
    n_predictions: Vec<usize>,
    n_novel: Vec<usize>,
}

fn plan_queries(
    config: &PipelineConfig,
    train: &KnowledgeGraph,
    templates: &TemplateMap,
    rules: &[io::RuleRow],
) -> Result<QueryPlan> {
    let cap = config.scorer.max_predictions_per_rule;
    let seed = config.sample_seed();
    let mut plan = QueryPlan { per_rule: Vec::new(), unique: Vec::new(), n_predictions: Vec::new(), n_novel: Vec::new() };
    let mut seen = BTreeSet::new();
    let mut untemplated = BTreeSet::new();
    for row in rules {
        let preds = apply_rule(train, &row.rule);
        plan.n_predictions.push(preds.len());
        let novel: Vec<_> = preds.into_iter().filter(|p| p.novel).collect();
        plan.n_novel.push(novel.len());
        let mut ids = Vec::new();
        for pred in sample_predictions(novel, cap, seed, row.rule.id()) {
            match build_prompt(train, templates, &pred) {
                Ok(query) => {
                    ids.push(query.query_id.clone());
                    if seen.insert(query.query_id.clone()) {
                        plan.unique.push(query);
                    }
                }
                Err(rulelm_core::Error::MissingTemplate(relation)) if config.scorer.skip_missing_templates => {
                    if untemplated.insert(relation.clone()) {
                        log::warn!("no template for relation `{relation}`; its predictions are not scored");
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        plan.per_rule.push(ids);
    }
    Ok(plan)
}

/// Scores every rule's novel predictions and folds the ranks into `mu2`.
pub fn score_rules(
    config: &PipelineConfig,
    train: &KnowledgeGraph,
    rules: &[io::RuleRow],
    templates: &TemplateMap,
    scorer: &dyn Scorer,
    options: &BatchOptions,
) -> Result<Vec<ScoredRow>> {
    let plan = plan_queries(config, train, templates, rules)?;
    log::info!("scoring {} distinct queries for {} rules", plan.unique.len(), rules.len());
    let results = scorer::score_batch(scorer, &plan.unique, options)?;
    let by_id: BTreeMap<&str, _> = results.iter().map(|r| (r.query_id.as_str(), r)).collect();

    let mut rows = Vec::with_capacity(rules.len());
    for (i, row) in rules.iter().enumerate() {
        let stats = rule_stats(train, &row.rule)?;
        if (stats.support, stats.body_count, stats.pca_body_count) != (row.support, row.body_count, row.pca_body_count) {
            return Err(Error::Config(format!(
                "rule `{}` statistics differ from the train graph; re-run `mine` with this config",
                row.rule.id()
            )));
        }
        let ranks: Vec<Option<u32>> = plan.per_rule[i]
            .iter()
            .map(|id| by_id[id.as_str()])
            .filter(|r| !(config.scorer.exclude_unmappable && r.unmappable))
            .map(|r| r.rank)
            .collect();
        rows.push(ScoredRow {
            rule: row.rule.clone(),
            stats,
            n_predictions: plan.n_predictions[i],
            n_novel: plan.n_novel[i],
            n_scored: ranks.len(),
            mu2: mu2(&ranks),
        });
    }
    Ok(rows)
}

/// Reads the rules file, scores it, and writes the scored-rules file.
pub fn run_score(config: &PipelineConfig, rules_path: Option<&Path>) -> Result<PathBuf> {
    config.validate_scoring_inputs()?;
    let started = Instant::now();
    let out = config.out_dir();
    let rules_path = rules_path.map_or_else(|| out.join(RULES_FILE), Path::to_path_buf);
    let graphs = prepare_graphs(config)?;
    let rules = io::read_rules(&rules_path, &graphs.train)?;
    let templates = io::load_templates(&config.templates_path()?)?;
    let scorer = scorer::open(&config.endpoint()?, config.timeout())?;
    let rows = score_rules(config, &graphs.train, &rules, &templates, scorer.as_ref(), &config.batch_options()?)?;
    let path = out.join(SCORED_FILE);
    io::write_scored(&path, &rows)?;
    log::info!("score stage: {} rules in {:.2?}", rows.len(), started.elapsed());
    Ok(path)
}

/// Closed-world precision of every scored rule.
pub fn evaluate_rules(graphs: &Graphs, rows: &[ScoredRow], jobs: usize) -> Result<Vec<EvaluatedRule>> {
    let records: Vec<RuleRecord> =
        rows.iter().map(|r| RuleRecord { rule: r.rule.clone(), stats: r.stats, mu2: r.mu2 }).collect();
    Ok(pool(jobs)?
        .install(|| records.par_iter().map(|r| EvaluatedRule::evaluate(&graphs.train, &graphs.test, r)).collect()))
}

/// Reads the scored-rules file, sweeps the grids, and writes the CSV table and
/// the per-rule detail file.
pub fn run_sweep(config: &PipelineConfig, scored_path: Option<&Path>) -> Result<PathBuf> {
    config.validate_sweep_inputs()?;
    let started = Instant::now();
    let out = config.out_dir();
    let scored_path = scored_path.map_or_else(|| out.join(SCORED_FILE), Path::to_path_buf);
    let graphs = prepare_graphs(config)?;
    let rows = io::read_scored(&scored_path, &graphs.train)?;
    if rows.is_empty() {
        return Err(Error::Config(format!("{} holds no rules to sweep", scored_path.display())));
    }
    let evaluated = evaluate_rules(&graphs, &rows, config.jobs())?;
    let kinds = config.mu1_kinds()?;
    let hybrid = config.hybrid_config()?;
    let table: SweepTable = sweep_evaluated(&evaluated, &kinds, &hybrid)?;
    let path = out.join(SWEEP_FILE);
    io::emit_table(&table, &path)?;
    io::write_skipped(&out.join(SKIPPED_FILE), &table)?;
    let mut sorted_kinds = kinds.clone();
    sorted_kinds.sort_unstable();
    sorted_kinds.dedup();
    io::write_rule_details(&out.join(DETAILS_FILE), &evaluated, &sorted_kinds, &hybrid.lambda_grid)?;
    log::info!("sweep stage: {} cells in {:.2?}", table.rows.len(), started.elapsed());
    Ok(path)
}

/// mine, score and sweep in sequence.
pub fn run_all(config: &PipelineConfig) -> Result<PathBuf> {
    config.validate_scoring_inputs()?;
    config.validate_sweep_inputs()?;
    let rules = run_mine(config)?;
    let scored = run_score(config, Some(&rules))?;
    run_sweep(config, Some(&scored))
}
