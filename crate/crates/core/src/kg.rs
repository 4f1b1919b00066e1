//! Interned, indexed knowledge graphs and the seeded train/test split.
//!
//! A [`KnowledgeGraph`] is immutable once built. Entity and relation names are
//! interned into dense ids in first-appearance order by a
//! [`KnowledgeGraphBuilder`]; graphs derived from one another (the train half of
//! a split) share the same [`Vocabulary`], so ids stay comparable across them.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Dense id of an interned entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

/// Dense id of an interned relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl EntityId {
    /// Position of the id in the vocabulary.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    /// Position of the id in the vocabulary.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A binary fact `relation(subject, object)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    /// Subject entity.
    pub subject: EntityId,
    /// Relation.
    pub relation: RelationId,
    /// Object entity.
    pub object: EntityId,
}

impl Triple {
    /// Builds a triple.
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        Self { subject, relation, object }
    }
}

#[derive(Debug, Clone, Default)]
struct Interner {
    names: Vec<String>,
    ids: BTreeMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("more than u32::MAX interned names");
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }
}

/// Names and display labels for every entity and relation of a graph family.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    entities: Interner,
    relations: Interner,
    entity_labels: Vec<String>,
}

/// Default surface form for an entity id: underscores become spaces.
pub fn default_label(id: &str) -> String {
    id.replace('_', " ")
}

impl Vocabulary {
    /// Number of interned entities.
    pub fn entity_count(&self) -> usize {
        self.entities.names.len()
    }

    /// Number of interned relations.
    pub fn relation_count(&self) -> usize {
        self.relations.names.len()
    }

    /// Looks up an entity by its identifier string.
    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    /// Looks up a relation by name.
    pub fn relation(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    /// Identifier string of an entity.
    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities.names[id.index()]
    }

    /// Name of a relation.
    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relations.names[id.index()]
    }

    /// Human-readable label of an entity, used when verbalizing prompts.
    pub fn entity_label(&self, id: EntityId) -> &str {
        &self.entity_labels[id.index()]
    }

    /// All relation ids in id order.
    pub fn relation_ids(&self) -> impl ExactSizeIterator<Item = RelationId> + Clone {
        (0..self.relation_count() as u32).map(RelationId)
    }
}

/// Per-relation view: sorted pairs plus subject- and object-keyed adjacency.
#[derive(Debug, Clone, Default)]
struct RelationIndex {
    pairs: Vec<(EntityId, EntityId)>,
    by_subject: BTreeMap<EntityId, Vec<EntityId>>,
    by_object: BTreeMap<EntityId, Vec<EntityId>>,
}

impl RelationIndex {
    /// `pairs` must be sorted and deduplicated.
    fn from_sorted(pairs: Vec<(EntityId, EntityId)>) -> Self {
        let mut by_subject: BTreeMap<EntityId, Vec<EntityId>> = BTreeMap::new();
        let mut by_object: BTreeMap<EntityId, Vec<EntityId>> = BTreeMap::new();
        for &(s, o) in &pairs {
            by_subject.entry(s).or_default().push(o);
            by_object.entry(o).or_default().push(s);
        }
        // subject lists are already sorted because pairs are; object lists are
        // filled in subject order, which is sorted too.
        Self { pairs, by_subject, by_object }
    }
}

/// An immutable, deduplicated set of triples with per-relation join indexes.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    vocab: Arc<Vocabulary>,
    relations: Vec<RelationIndex>,
    len: usize,
}

impl KnowledgeGraph {
    fn from_relation_pairs(vocab: Arc<Vocabulary>, mut per_relation: Vec<Vec<(EntityId, EntityId)>>) -> Self {
        per_relation.resize_with(vocab.relation_count(), Vec::new);
        let mut len = 0;
        let relations = per_relation
            .into_iter()
            .map(|mut pairs| {
                pairs.sort_unstable();
                pairs.dedup();
                len += pairs.len();
                RelationIndex::from_sorted(pairs)
            })
            .collect();
        Self { vocab, relations, len }
    }

    /// Shared vocabulary (names, labels) of this graph.
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Number of distinct triples.
    pub fn len(&self) -> usize {
        self.len
    }

    /// True when the graph holds no triples.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of relations known to the vocabulary, including ones without facts.
    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    /// Membership test.
    pub fn contains(&self, t: &Triple) -> bool {
        self.relations
            .get(t.relation.index())
            .is_some_and(|r| r.pairs.binary_search(&(t.subject, t.object)).is_ok())
    }

    /// All `(subject, object)` pairs of `relation`, sorted.
    pub fn facts_of(&self, relation: RelationId) -> &[(EntityId, EntityId)] {
        self.relations.get(relation.index()).map_or(&[], |r| &r.pairs[..])
    }

    /// Objects `o` with `relation(subject, o)`, sorted.
    pub fn objects(&self, relation: RelationId, subject: EntityId) -> &[EntityId] {
        self.relations
            .get(relation.index())
            .and_then(|r| r.by_subject.get(&subject))
            .map_or(&[], Vec::as_slice)
    }

    /// Subjects `s` with `relation(s, object)`, sorted.
    pub fn subjects(&self, relation: RelationId, object: EntityId) -> &[EntityId] {
        self.relations
            .get(relation.index())
            .and_then(|r| r.by_object.get(&object))
            .map_or(&[], Vec::as_slice)
    }

    /// Subject-keyed adjacency of `relation`, in subject order.
    pub fn subject_groups(&self, relation: RelationId) -> impl Iterator<Item = (EntityId, &[EntityId])> {
        self.relations
            .get(relation.index())
            .into_iter()
            .flat_map(|r| r.by_subject.iter().map(|(s, os)| (*s, os.as_slice())))
    }

    /// True when `subject` has at least one fact of `relation`.
    pub fn has_subject(&self, relation: RelationId, subject: EntityId) -> bool {
        self.relations
            .get(relation.index())
            .is_some_and(|r| r.by_subject.contains_key(&subject))
    }

    /// All triples, ordered by (relation, subject, object).
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.relations.iter().enumerate().flat_map(|(r, idx)| {
            let relation = RelationId(r as u32);
            idx.pairs.iter().map(move |&(s, o)| Triple::new(s, relation, o))
        })
    }

    /// Resolves a relation name or fails with [`Error::UnknownRelation`].
    pub fn relation(&self, name: &str) -> Result<RelationId> {
        self.vocab.relation(name).ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    /// Builds a graph over the same vocabulary from a set of triples. Triples
    /// must only use ids of this vocabulary.
    pub fn with_triples<I: IntoIterator<Item = Triple>>(&self, triples: I) -> Self {
        let mut per_relation = alloc::vec![Vec::new(); self.vocab.relation_count()];
        for t in triples {
            per_relation[t.relation.index()].push((t.subject, t.object));
        }
        Self::from_relation_pairs(Arc::clone(&self.vocab), per_relation)
    }

    /// True when both graphs share one vocabulary instance.
    pub fn shares_vocab(&self, other: &KnowledgeGraph) -> bool {
        Arc::ptr_eq(&self.vocab, &other.vocab)
    }
}

/// Accumulates named triples and optional labels, then freezes them into a
/// [`KnowledgeGraph`].
#[derive(Debug, Default)]
pub struct KnowledgeGraphBuilder {
    vocab: Vocabulary,
    pairs: Vec<Vec<(EntityId, EntityId)>>,
    labels: BTreeMap<String, String>,
}

impl KnowledgeGraphBuilder {
    /// Empty builder.
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `relation(subject, object)`, interning unseen names.
    pub fn insert(&mut self, subject: &str, relation: &str, object: &str) -> Triple {
        let s = EntityId(self.vocab.entities.intern(subject));
        let r = RelationId(self.vocab.relations.intern(relation));
        let o = EntityId(self.vocab.entities.intern(object));
        if self.pairs.len() <= r.index() {
            self.pairs.resize_with(r.index() + 1, Vec::new);
        }
        self.pairs[r.index()].push((s, o));
        Triple::new(s, r, o)
    }

    /// Registers a relation name without adding facts for it.
    pub fn declare_relation(&mut self, relation: &str) -> RelationId {
        RelationId(self.vocab.relations.intern(relation))
    }

    /// Sets the display label of an entity id. Labels for ids that never occur
    /// in a triple are ignored.
    pub fn set_label(&mut self, id: &str, label: &str) {
        self.labels.insert(id.to_string(), label.to_string());
    }

    /// Freezes the graph.
    pub fn build(mut self) -> KnowledgeGraph {
        let labels = &self.labels;
        self.vocab.entity_labels = self
            .vocab
            .entities
            .names
            .iter()
            .map(|id| labels.get(id).cloned().unwrap_or_else(|| default_label(id)))
            .collect();
        KnowledgeGraph::from_relation_pairs(Arc::new(self.vocab), self.pairs)
    }
}

/// Identifier of the generator and sampling routine used by
/// [`split_train_test`]; recorded in split metadata.
pub const SPLIT_GENERATOR: &str = "chacha8-rand0.8-index-sample";

/// How many facts to withhold from each relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    ratio: f64,
    seed: u64,
}

impl SplitSpec {
    /// Validates `ratio` in `[0, 1]`.
    pub fn new(ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::RatioOutOfRange { name: "split ratio", value: ratio });
        }
        Ok(Self { ratio, seed })
    }

    /// Fraction of facts removed per relation.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Generator seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `floor(ratio * n)`. The tiny offset absorbs products such as
    /// `0.29 * 100 = 28.999999999999996`.
    pub fn removed_count(&self, n: usize) -> usize {
        let k = self.ratio * n as f64 + 1e-9;
        (k as usize).min(n)
    }
}

/// Result of [`split_train_test`].
#[derive(Debug, Clone)]
pub struct Split {
    /// The graph with withheld facts removed.
    pub train: KnowledgeGraph,
    /// The original graph.
    pub test: KnowledgeGraph,
    /// Facts removed per relation, in relation id order.
    pub removed: Vec<(RelationId, usize)>,
}

/// Withholds `floor(ratio * n_p)` facts of every relation `p`, chosen uniformly
/// without replacement from the relation's sorted fact list. One generator,
/// seeded from `spec.seed`, is consumed relation by relation in id order.
pub fn split_train_test(kg: &KnowledgeGraph, spec: SplitSpec) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut per_relation = Vec::with_capacity(kg.relation_count());
    let mut removed = Vec::with_capacity(kg.relation_count());
    for relation in kg.vocab().relation_ids() {
        let pairs = kg.facts_of(relation);
        let k = spec.removed_count(pairs.len());
        let mut drop = alloc::vec![false; pairs.len()];
        if k > 0 {
            for i in index::sample(&mut rng, pairs.len(), k) {
                drop[i] = true;
            }
        }
        per_relation.push(
            pairs
                .iter()
                .zip(&drop)
                .filter(|(_, &d)| !d)
                .map(|(p, _)| *p)
                .collect::<Vec<_>>(),
        );
        removed.push((relation, k));
    }
    Split {
        train: KnowledgeGraph::from_relation_pairs(Arc::clone(&kg.vocab), per_relation),
        test: kg.clone(),
        removed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn toy() -> KnowledgeGraph {
        let mut b = KnowledgeGraphBuilder::new();
        b.insert("a", "p", "b");
        b.insert("d", "p", "e");
        b.insert("b", "q", "c");
        b.build()
    }

    fn ten_fact_graph() -> KnowledgeGraph {
        let mut b = KnowledgeGraphBuilder::new();
        for i in 0..10 {
            b.insert(&alloc::format!("s{i}"), "p", &alloc::format!("o{i}"));
        }
        b.build()
    }

    #[test]
    fn duplicates_collapse() {
        let mut b = KnowledgeGraphBuilder::new();
        b.insert("a", "p", "b");
        b.insert("b", "q", "c");
        b.insert("a", "p", "b");
        let kg = b.build();
        assert_eq!(kg.len(), 2);
        assert_eq!(kg.vocab().entity_count(), 3);
        let p = kg.relation("p").unwrap();
        assert_eq!(kg.facts_of(p).len(), 1);
    }

    #[test]
    fn empty_graph() {
        let kg = KnowledgeGraphBuilder::new().build();
        assert!(kg.is_empty());
        assert_eq!(kg.vocab().entity_count(), 0);
        assert_eq!(kg.vocab().relation_count(), 0);
    }

    #[test]
    fn interning_is_first_appearance_order() {
        let kg = toy();
        let v = kg.vocab();
        let names: Vec<_> = (0..v.entity_count() as u32).map(|i| v.entity_name(EntityId(i))).collect();
        assert_eq!(names, ["a", "b", "d", "e", "c"]);
        assert_eq!(v.relation("p"), Some(RelationId(0)));
        assert_eq!(v.relation("q"), Some(RelationId(1)));
    }

    #[test]
    fn facts_of_reads_relation() {
        let kg = toy();
        let v = kg.vocab();
        let e = |n| v.entity(n).unwrap();
        assert_eq!(kg.facts_of(kg.relation("p").unwrap()), &[(e("a"), e("b")), (e("d"), e("e"))]);
    }

    #[test]
    fn relation_without_facts_is_empty() {
        let mut b = KnowledgeGraphBuilder::new();
        b.insert("a", "p", "b");
        let r = b.declare_relation("unused");
        let kg = b.build();
        assert!(kg.facts_of(r).is_empty());
        assert_eq!(kg.relation_count(), 2);
    }

    #[test]
    fn contains_known_and_unknown() {
        let kg = toy();
        let v = kg.vocab();
        let t = Triple::new(v.entity("a").unwrap(), v.relation("p").unwrap(), v.entity("b").unwrap());
        assert!(kg.contains(&t));
        let missing = Triple::new(v.entity("a").unwrap(), v.relation("q").unwrap(), v.entity("b").unwrap());
        assert!(!kg.contains(&missing));
    }

    #[test]
    fn labels_default_to_underscore_free_ids() {
        let mut b = KnowledgeGraphBuilder::new();
        b.insert("new_york", "in", "usa");
        b.set_label("usa", "United States");
        let kg = b.build();
        let v = kg.vocab();
        assert_eq!(v.entity_label(v.entity("new_york").unwrap()), "new york");
        assert_eq!(v.entity_label(v.entity("usa").unwrap()), "United States");
    }

    #[test]
    fn split_removes_floor_of_ratio() {
        let kg = ten_fact_graph();
        let split = split_train_test(&kg, SplitSpec::new(0.2, 7).unwrap());
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.removed, vec![(RelationId(0), 2)]);
        assert_eq!(split.test.len(), 10);
    }

    #[test]
    fn split_with_zero_ratio_is_identity() {
        let kg = ten_fact_graph();
        let split = split_train_test(&kg, SplitSpec::new(0.0, 1).unwrap());
        assert!(split.train.triples().eq(kg.triples()));
        assert!(split.test.triples().eq(kg.triples()));
    }

    #[test]
    fn split_small_relation_keeps_everything() {
        let mut b = KnowledgeGraphBuilder::new();
        for i in 0..4 {
            b.insert(&alloc::format!("s{i}"), "p", "o");
        }
        let split = split_train_test(&b.build(), SplitSpec::new(0.2, 3).unwrap());
        assert_eq!(split.train.len(), 4);
        assert_eq!(split.removed[0].1, 0);
    }

    #[test]
    fn removed_fact_is_absent_from_train_only() {
        let kg = ten_fact_graph();
        let split = split_train_test(&kg, SplitSpec::new(0.2, 11).unwrap());
        let removed: Vec<Triple> = kg.triples().filter(|t| !split.train.contains(t)).collect();
        assert_eq!(removed.len(), 2);
        for t in &removed {
            assert!(!split.train.contains(t));
            assert!(split.test.contains(t));
        }
    }

    #[test]
    fn ratio_must_be_in_unit_interval() {
        assert!(SplitSpec::new(-0.1, 0).is_err());
        assert!(SplitSpec::new(1.5, 0).is_err());
        assert!(SplitSpec::new(f64::NAN, 0).is_err());
        assert!(SplitSpec::new(1.0, 0).is_ok());
    }

    #[test]
    fn removed_count_is_floor() {
        let s = SplitSpec::new(0.2, 0).unwrap();
        assert_eq!(s.removed_count(10), 2);
        assert_eq!(s.removed_count(4), 0);
        assert_eq!(s.removed_count(14), 2);
        assert_eq!(SplitSpec::new(0.29, 0).unwrap().removed_count(100), 29);
        assert_eq!(SplitSpec::new(1.0, 0).unwrap().removed_count(3), 3);
    }

    fn arb_triples() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
        prop::collection::vec((0u8..20, 0u8..5, 0u8..20), 0..200)
    }

    fn build(raw: &[(u8, u8, u8)]) -> KnowledgeGraph {
        let mut b = KnowledgeGraphBuilder::new();
        for (s, r, o) in raw {
            b.insert(&alloc::format!("e{s}"), &alloc::format!("r{r}"), &alloc::format!("e{o}"));
        }
        b.build()
    }

    proptest! {
        #[test]
        fn index_paths_agree_with_linear_scan(raw in arb_triples(), probes in prop::collection::vec((0u8..20, 0u8..5, 0u8..20), 1..50)) {
            let kg = build(&raw);
            let v = kg.vocab();
            let per_relation_total: usize = v.relation_ids().map(|r| kg.facts_of(r).len()).sum();
            prop_assert_eq!(per_relation_total, kg.len());
            prop_assert_eq!(kg.triples().count(), kg.len());
            for (s, r, o) in probes {
                let (sn, rn, on) = (alloc::format!("e{s}"), alloc::format!("r{r}"), alloc::format!("e{o}"));
                let scan = raw.iter().any(|&(a, b, c)| (a, b, c) == (s, r, o));
                let ids = (v.entity(&sn), v.relation(&rn), v.entity(&on));
                let found = match ids {
                    (Some(s), Some(r), Some(o)) => {
                        let t = Triple::new(s, r, o);
                        let by_subject = kg.objects(r, s).binary_search(&o).is_ok();
                        let by_object = kg.subjects(r, o).binary_search(&s).is_ok();
                        prop_assert_eq!(kg.contains(&t), by_subject);
                        prop_assert_eq!(kg.contains(&t), by_object);
                        kg.contains(&t)
                    }
                    _ => false,
                };
                prop_assert_eq!(found, scan);
            }
        }

        #[test]
        fn split_is_deterministic_and_counts_exact(raw in arb_triples(), seed in any::<u64>(), ratio in 0.0f64..=1.0) {
            let kg = build(&raw);
            let spec = SplitSpec::new(ratio, seed).unwrap();
            let a = split_train_test(&kg, spec);
            let b = split_train_test(&kg, spec);
            prop_assert!(a.train.triples().eq(b.train.triples()));
            for r in kg.vocab().relation_ids() {
                let n = kg.facts_of(r).len();
                prop_assert_eq!(a.train.facts_of(r).len(), n - spec.removed_count(n));
            }
            prop_assert!(a.train.triples().all(|t| a.test.contains(&t)));
            prop_assert!(a.test.triples().eq(kg.triples()));
        }
    }
}
