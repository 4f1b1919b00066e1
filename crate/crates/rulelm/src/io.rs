//! Text file formats: triples, labels, templates, scorer fixtures, mined and
//! scored rule tables, split metadata and sweep CSVs.
//!
//! Every input format is UTF-8, one record per line, tab-separated, with blank
//! lines and `#`-prefixed comment lines ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rulelm_core::cloze::{FixtureScorer, TemplateMap};
use rulelm_core::kg::{KnowledgeGraph, KnowledgeGraphBuilder, Split, Triple, SPLIT_GENERATOR};
use rulelm_core::ranking::{EvaluatedRule, Mu1Kind, SweepTable};
use rulelm_core::rules::{MinedRule, Rule, RuleStats};
use serde::Serialize;

use crate::error::{Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Yields `(line_number, fields)` for every record line.
fn records<'a>(text: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

fn expect_fields(path: &Path, line: usize, fields: &[&str], n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(Error::parse(path, line, format!("expected {n} tab-separated fields, found {}", fields.len())));
    }
    if let Some(i) = fields.iter().position(|f| f.is_empty()) {
        return Err(Error::parse(path, line, format!("field {} is empty", i + 1)));
    }
    Ok(())
}

/// Reads `<id>\t<label>` lines.
pub fn load_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = read(path)?;
    let mut labels = BTreeMap::new();
    for (line, fields) in records(&text) {
        expect_fields(path, line, &fields, 2)?;
        labels.insert(fields[0].to_string(), fields[1].to_string());
    }
    Ok(labels)
}

/// Reads a `<subject>\t<relation>\t<object>` file, collapsing duplicates.
/// Names are interned in first-appearance order.
pub fn load_triples(path: &Path, label_path: Option<&Path>) -> Result<KnowledgeGraph> {
    let text = read(path)?;
    let mut builder = KnowledgeGraphBuilder::new();
    for (line, fields) in records(&text) {
        expect_fields(path, line, &fields, 3)?;
        builder.insert(fields[0], fields[1], fields[2]);
    }
    if let Some(label_path) = label_path {
        for (id, label) in load_labels(label_path)? {
            builder.set_label(&id, &label);
        }
    }
    let kg = builder.build();
    log::info!(
        "loaded {}: {} facts, {} relations, {} entities",
        path.display(),
        kg.len(),
        kg.vocab().relation_count(),
        kg.vocab().entity_count()
    );
    Ok(kg)
}

/// Reads a triples file whose facts must all belong to `full`, returning them
/// as a graph over `full`'s vocabulary.
pub fn load_subgraph(path: &Path, full: &KnowledgeGraph) -> Result<KnowledgeGraph> {
    let text = read(path)?;
    let v = full.vocab();
    let mut triples = Vec::new();
    for (line, fields) in records(&text) {
        expect_fields(path, line, &fields, 3)?;
        let lookup = || Some(Triple::new(v.entity(fields[0])?, v.relation(fields[1])?, v.entity(fields[2])?));
        match lookup().filter(|t| full.contains(t)) {
            Some(t) => triples.push(t),
            None => return Err(Error::parse(path, line, "fact is not part of the full graph")),
        }
    }
    Ok(full.with_triples(triples))
}

/// Writes a graph back as triples, in (relation, subject, object) id order.
pub fn write_triples(path: &Path, kg: &KnowledgeGraph) -> Result<()> {
    let v = kg.vocab();
    let mut out = String::new();
    for t in kg.triples() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            v.entity_name(t.subject),
            v.relation_name(t.relation),
            v.entity_name(t.object)
        );
    }
    write(path, &out)
}

/// Reads `<relation>\t<template>` lines.
pub fn load_templates(path: &Path) -> Result<TemplateMap> {
    let text = read(path)?;
    let mut map = TemplateMap::new();
    for (line, fields) in records(&text) {
        expect_fields(path, line, &fields, 2)?;
        map.insert(fields[0], fields[1]).map_err(|e| Error::parse(path, line, e.to_string()))?;
    }
    Ok(map)
}

/// Reads `<prompt>\t<token1>,<token2>,...` lines, best candidate first.
pub fn load_fixture(path: &Path) -> Result<FixtureScorer> {
    let text = read(path)?;
    let mut scorer = FixtureScorer::new();
    for (line, fields) in records(&text) {
        if fields.len() != 2 || fields[0].is_empty() {
            return Err(Error::parse(path, line, "expected `<prompt>\\t<token>,<token>,...`"));
        }
        let tokens = fields[1].split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect();
        scorer.insert(fields[0], tokens).map_err(|e| Error::parse(path, line, e.to_string()))?;
    }
    Ok(scorer)
}

#[derive(Serialize)]
struct SplitMetadata<'a> {
    generator: &'a str,
    rounding: &'a str,
    seed: u64,
    ratio: f64,
    train_facts: usize,
    test_facts: usize,
    removed: BTreeMap<&'a str, usize>,
}

/// Seed, ratio, generator and per-relation removed counts, as TOML.
pub fn write_split_metadata(path: &Path, split: &Split, ratio: f64, seed: u64) -> Result<()> {
    let v = split.test.vocab();
    let meta = SplitMetadata {
        generator: SPLIT_GENERATOR,
        rounding: "floor",
        seed,
        ratio,
        train_facts: split.train.len(),
        test_facts: split.test.len(),
        removed: split.removed.iter().map(|&(r, n)| (v.relation_name(r), n)).collect(),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Internal(e.to_string()))?;
    write(path, &text)
}

/// Column header of mined-rule files.
pub const RULES_HEADER: &str = "rule_id\tsupport\tbody_count\tpca_body_count\tstd_conf\tpca_conf\thead_coverage";

/// One row per rule, ratios with six decimals.
pub fn write_rules(path: &Path, rules: &[MinedRule]) -> Result<()> {
    let mut out = String::from(RULES_HEADER);
    out.push('\n');
    for m in rules {
        let s = &m.stats;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            m.rule.id(),
            s.support,
            s.body_count,
            s.pca_body_count,
            s.std_conf,
            s.pca_conf,
            s.head_coverage
        );
    }
    write(path, &out)
}

/// A mined-rule row as read back: the rule plus the counts written with it.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleRow {
    pub rule: Rule,
    pub support: u64,
    pub body_count: u64,
    pub pca_body_count: u64,
}

fn parse_count(path: &Path, line: usize, field: &str, name: &str) -> Result<u64> {
    field.parse().map_err(|_| Error::parse(path, line, format!("{name} `{field}` is not a count")))
}

fn parse_ratio(path: &Path, line: usize, field: &str, name: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(Error::parse(path, line, format!("{name} `{field}` is not a ratio"))),
    }
}

/// Reads a mined-rule file, resolving relation names against `kg`.
pub fn read_rules(path: &Path, kg: &KnowledgeGraph) -> Result<Vec<RuleRow>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (line, fields) in records(&text) {
        if fields.first() == Some(&"rule_id") {
            continue;
        }
        expect_fields(path, line, &fields, 7)?;
        let rule = Rule::parse(kg.vocab(), fields[0]).map_err(|e| Error::parse(path, line, e.to_string()))?;
        rows.push(RuleRow {
            rule,
            support: parse_count(path, line, fields[1], "support")?,
            body_count: parse_count(path, line, fields[2], "body_count")?,
            pca_body_count: parse_count(path, line, fields[3], "pca_body_count")?,
        });
    }
    Ok(rows)
}

/// Column header of scored-rule files.
pub const SCORED_HEADER: &str = "rule_id\tsupport\tbody_count\tpca_body_count\thead_count\tstd_conf\tpca_conf\thead_coverage\tn_predictions\tn_novel\tn_scored\tmu2";

/// A rule with its statistics and language-model score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRow {
    pub rule: Rule,
    pub stats: RuleStats,
    pub n_predictions: usize,
    pub n_novel: usize,
    pub n_scored: usize,
    pub mu2: f64,
}

/// `mu2` is written in shortest round-trip form so a reload is exact.
pub fn write_scored(path: &Path, rows: &[ScoredRow]) -> Result<()> {
    let mut out = String::from(SCORED_HEADER);
    out.push('\n');
    for r in rows {
        let s = &r.stats;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
            r.rule.id(),
            s.support,
            s.body_count,
            s.pca_body_count,
            s.head_count,
            s.std_conf,
            s.pca_conf,
            s.head_coverage,
            r.n_predictions,
            r.n_novel,
            r.n_scored,
            r.mu2
        );
    }
    write(path, &out)
}

/// Reads a scored-rule file; ratios are re-derived from the exact counts.
pub fn read_scored(path: &Path, kg: &KnowledgeGraph) -> Result<Vec<ScoredRow>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (line, fields) in records(&text) {
        if fields.first() == Some(&"rule_id") {
            continue;
        }
        expect_fields(path, line, &fields, 12)?;
        let rule = Rule::parse(kg.vocab(), fields[0]).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let count = |i: usize, name| parse_count(path, line, fields[i], name);
        let stats = RuleStats::from_counts(
            count(1, "support")?,
            count(2, "body_count")?,
            count(3, "pca_body_count")?,
            count(4, "head_count")?,
        );
        rows.push(ScoredRow {
            rule,
            stats,
            n_predictions: count(8, "n_predictions")? as usize,
            n_novel: count(9, "n_novel")? as usize,
            n_scored: count(10, "n_scored")? as usize,
            mu2: parse_ratio(path, line, fields[11], "mu2")?,
        });
    }
    Ok(rows)
}

/// Column header of sweep tables.
pub const SWEEP_HEADER: &str = "mu1_kind,lambda,k,avg_precision,n_rules";

/// Renders a sweep table as CSV, ratios with six decimals.
pub fn render_table(table: &SweepTable) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in &table.rows {
        let _ = writeln!(out, "{},{:.6},{},{:.6},{}", r.mu1_kind, r.lambda, r.k, r.avg_precision, r.n_rules);
    }
    out
}

/// Writes [`render_table`] to `path`.
pub fn emit_table(table: &SweepTable, path: &Path) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::Internal("refusing to emit an empty sweep table".into()));
    }
    write(path, &render_table(table))
}

/// Rules left out of each cell's average because their precision is undefined.
pub fn write_skipped(path: &Path, table: &SweepTable) -> Result<()> {
    let mut out = String::from("mu1_kind,lambda,k,skipped\n");
    for r in &table.rows {
        let _ = writeln!(out, "{},{:.6},{},{}", r.mu1_kind, r.lambda, r.k, r.skipped);
    }
    write(path, &out)
}

/// Per-rule debugging rows: scores, the hybrid score at every lambda, and
/// precision (`NA` when undefined).
pub fn write_rule_details(path: &Path, rules: &[EvaluatedRule], kinds: &[Mu1Kind], lambdas: &[f64]) -> Result<()> {
    let mut out = String::from("mu1_kind\trule_id\tmu1\tmu2");
    for l in lambdas {
        let _ = write!(out, "\tmu@{l:.6}");
    }
    out.push_str("\tprecision\n");
    for &kind in kinds {
        for r in rules {
            let s = r.scored(kind);
            let _ = write!(out, "{kind}\t{}\t{:.6}\t{:.6}", s.rule_id, s.mu1, s.mu2);
            for &l in lambdas {
                let mu = rulelm_core::ranking::hybrid_score(s.mu1, s.mu2, l)?;
                let _ = write!(out, "\t{mu:.6}");
            }
            match r.precision {
                Some(p) => {
                    let _ = writeln!(out, "\t{p:.6}");
                }
                None => out.push_str("\tNA\n"),
            }
        }
    }
    write(path, &out)
}
