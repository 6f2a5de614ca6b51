//! TF-IDF featurization and the category correlation graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Item};
use crate::error::{Error, Result};
use crate::text::tokenize_words;

/// Sparse vector with entries sorted by term id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
    norm: f64,
}

impl FeatureVector {
    pub fn zero() -> Self {
        FeatureVector::default()
    }

    /// Builds a vector from `(term, weight)` pairs; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut map: BTreeMap<u32, f64> = BTreeMap::new();
        for (t, w) in pairs {
            *map.entry(t).or_insert(0.0) += w;
        }
        Self::from_sorted(map.into_iter().filter(|(_, w)| *w != 0.0).collect())
    }

    fn from_sorted(entries: Vec<(u32, f64)>) -> Self {
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        FeatureVector { entries, norm }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }

    pub fn get(&self, term: u32) -> f64 {
        self.entries
            .binary_search_by_key(&term, |(t, _)| *t)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Dot product against a dense vector indexed by term id.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(t, w)| w * dense.get(t as usize).copied().unwrap_or(0.0))
            .sum()
    }

    /// Adds `scale * self` into a dense accumulator, growing it as needed.
    pub fn add_to_dense(&self, dense: &mut Vec<f64>, scale: f64) {
        for &(t, w) in &self.entries {
            let t = t as usize;
            if t >= dense.len() {
                dense.resize(t + 1, 0.0);
            }
            dense[t] += scale * w;
        }
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn correlation(a: &FeatureVector, b: &FeatureVector) -> f64 {
    if a.is_zero() || b.is_zero() {
        return 0.0;
    }
    (a.dot(b) / (a.norm * b.norm)).clamp(-1.0, 1.0)
}

/// Term dictionary with document frequencies.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    df: Vec<u32>,
    n_docs: usize,
}

impl Vocabulary {
    /// One document per token list; term ids follow lexicographic order.
    pub fn from_documents<S: AsRef<str>>(docs: &[Vec<S>]) -> Self {
        let mut df: BTreeMap<&str, u32> = BTreeMap::new();
        for doc in docs {
            let distinct: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
            for t in distinct {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let mut vocab = Vocabulary {
            n_docs: docs.len(),
            ..Default::default()
        };
        for (i, (term, count)) in df.into_iter().enumerate() {
            vocab.terms.push(term.to_owned());
            vocab.index.insert(term.to_owned(), i as u32);
            vocab.df.push(count);
        }
        vocab
    }

    /// Vocabulary over the corpus' dataset items (title and abstract).
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let docs: Vec<Vec<String>> = corpus
            .items()
            .iter()
            .filter(|i| !i.is_generated())
            .map(item_tokens)
            .collect();
        Self::from_documents(&docs)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn idf(&self, id: u32) -> f64 {
        let df = self.df[id as usize] as f64;
        ((1.0 + self.n_docs as f64) / (1.0 + df)).ln() + 1.0
    }

    /// TF-IDF vector of a token list. Term frequency is normalised by the
    /// full token count, unknown tokens included.
    pub fn tfidf(&self, tokens: &[String]) -> FeatureVector {
        if tokens.is_empty() {
            return FeatureVector::zero();
        }
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for t in tokens {
            if let Some(id) = self.id(t) {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        let len = tokens.len() as f64;
        FeatureVector::from_sorted(
            counts
                .into_iter()
                .map(|(id, c)| (id, c as f64 / len * self.idf(id)))
                .collect(),
        )
    }
}

fn item_tokens(item: &Item) -> Vec<String> {
    let mut tokens = tokenize_words(&item.title);
    tokens.extend(tokenize_words(&item.abstract_text));
    tokens
}

/// Anything that can map an item to a feature vector.
pub trait Embedder: Send + Sync {
    fn embed(&self, item: &Item) -> FeatureVector;
}

/// The default embedder: TF-IDF over title and abstract.
#[derive(Debug, Clone)]
pub struct TfIdf {
    vocab: Vocabulary,
}

impl TfIdf {
    pub fn new(vocab: Vocabulary) -> Self {
        TfIdf { vocab }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        TfIdf::new(Vocabulary::from_corpus(corpus))
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Vectors for every corpus item, in corpus order.
    pub fn embed_corpus(&self, corpus: &Corpus) -> Vec<FeatureVector> {
        corpus.items().iter().map(|i| self.embed(i)).collect()
    }
}

impl Embedder for TfIdf {
    fn embed(&self, item: &Item) -> FeatureVector {
        featurize(item, &self.vocab)
    }
}

pub fn featurize(item: &Item, vocab: &Vocabulary) -> FeatureVector {
    vocab.tfidf(&item_tokens(item))
}

#[derive(Debug, Clone, Default)]
struct Node {
    members: Vec<String>,
    // running sum of member vectors, accumulated in member order
    sum: BTreeMap<u32, f64>,
    vector: FeatureVector,
}

impl Node {
    fn push(&mut self, id: &str, v: &FeatureVector) {
        self.members.push(id.to_owned());
        for &(t, w) in v.entries() {
            *self.sum.entry(t).or_insert(0.0) += w;
        }
    }

    fn refresh(&mut self) {
        if self.members.is_empty() {
            self.vector = FeatureVector::zero();
            return;
        }
        let n = self.members.len() as f64;
        self.vector = FeatureVector::from_sorted(
            self.sum
                .iter()
                .filter(|(_, w)| **w != 0.0)
                .map(|(t, w)| (*t, w / n))
                .collect(),
        );
    }
}

/// Category nodes with mean member vectors and pairwise cosine edges.
#[derive(Debug, Clone, Default)]
pub struct CategoryGraph {
    nodes: BTreeMap<String, Node>,
    // keyed with the lexicographically smaller category first
    edges: BTreeMap<(String, String), f64>,
}

fn edge_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

impl CategoryGraph {
    /// Builds the graph from `(item, vector)` pairs, appending each item to
    /// every category it carries weight in, in the order given.
    pub fn build<'a>(
        categories: impl IntoIterator<Item = String>,
        members: impl IntoIterator<Item = (&'a Item, &'a FeatureVector)>,
    ) -> Result<Self> {
        let mut graph = CategoryGraph {
            nodes: categories.into_iter().map(|c| (c, Node::default())).collect(),
            edges: BTreeMap::new(),
        };
        for (item, v) in members {
            graph.append(item, v)?;
        }
        for node in graph.nodes.values_mut() {
            node.refresh();
        }
        graph.rebuild_edges();
        Ok(graph)
    }

    /// Graph over a corpus' dataset items with precomputed vectors.
    pub fn from_corpus(corpus: &Corpus, vectors: &[FeatureVector]) -> Result<Self> {
        Self::build(corpus.categories(), corpus.items().iter().zip(vectors))
    }

    fn append(&mut self, item: &Item, v: &FeatureVector) -> Result<Vec<String>> {
        let cats: Vec<String> = item.categories().map(str::to_owned).collect();
        if let Some(unknown) = cats.iter().find(|c| !self.nodes.contains_key(*c)) {
            return Err(Error::UnknownCategory(unknown.clone()));
        }
        for c in &cats {
            self.nodes.get_mut(c).expect("checked above").push(&item.id, v);
        }
        Ok(cats)
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, category: &str) -> bool {
        self.nodes.contains_key(category)
    }

    pub fn category_vector(&self, category: &str) -> Result<&FeatureVector> {
        self.nodes
            .get(category)
            .map(|n| &n.vector)
            .ok_or_else(|| Error::UnknownCategory(category.to_owned()))
    }

    pub fn members(&self, category: &str) -> Result<&[String]> {
        self.nodes
            .get(category)
            .map(|n| n.members.as_slice())
            .ok_or_else(|| Error::UnknownCategory(category.to_owned()))
    }

    /// ρ between two categories; 1 on the diagonal for nonzero vectors and
    /// 0 whenever a vector is zero or a category is unknown.
    pub fn rho(&self, a: &str, b: &str) -> f64 {
        if a == b {
            return match self.nodes.get(a) {
                Some(n) if !n.vector.is_zero() => 1.0,
                _ => 0.0,
            };
        }
        self.edges.get(&edge_key(a, b)).copied().unwrap_or(0.0)
    }

    pub fn edges(&self) -> &BTreeMap<(String, String), f64> {
        &self.edges
    }

    /// Recomputes every pairwise edge.
    pub fn rebuild_edges(&mut self) {
        self.edges.clear();
        let live: Vec<(&String, &FeatureVector)> = self
            .nodes
            .iter()
            .filter(|(_, n)| !n.vector.is_zero())
            .map(|(c, n)| (c, &n.vector))
            .collect();
        for (i, (a, va)) in live.iter().enumerate() {
            for (b, vb) in &live[i + 1..] {
                self.edges
                    .insert(((*a).clone(), (*b).clone()), correlation(va, vb));
            }
        }
    }

    fn refresh_incident(&mut self, touched: &BTreeSet<String>) {
        for c in touched {
            self.nodes.get_mut(c).expect("known category").refresh();
        }
        for c in touched {
            let vc = self.nodes[c].vector.clone();
            for (other, node) in &self.nodes {
                if other == c {
                    continue;
                }
                let key = edge_key(c, other);
                if vc.is_zero() || node.vector.is_zero() {
                    self.edges.remove(&key);
                } else {
                    self.edges.insert(key, correlation(&vc, &node.vector));
                }
            }
        }
    }

    /// Appends an accepted item to its categories and refreshes incident
    /// edges.
    pub fn accept_item(&mut self, item: &Item, vector: &FeatureVector) -> Result<()> {
        self.accept_items([(item, vector)])
    }

    /// Batch form of [`accept_item`](Self::accept_item); equivalent to
    /// accepting the items one by one in order.
    pub fn accept_items<'a>(
        &mut self,
        items: impl IntoIterator<Item = (&'a Item, &'a FeatureVector)>,
    ) -> Result<()> {
        let mut touched = BTreeSet::new();
        for (item, v) in items {
            touched.extend(self.append(item, v)?);
        }
        self.refresh_incident(&touched);
        Ok(())
    }

    pub fn export(&self, vocab: &Vocabulary) -> GraphExport {
        GraphExport {
            nodes: self
                .nodes
                .iter()
                .map(|(c, n)| ExportNode {
                    category: c.clone(),
                    vector: n
                        .vector
                        .entries()
                        .iter()
                        .map(|&(t, w)| (vocab.term(t).unwrap_or("?").to_owned(), w))
                        .collect(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|((a, b), rho)| ExportEdge {
                    pair: [a.clone(), b.clone()],
                    rho: *rho,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportNode {
    pub category: String,
    pub vector: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportEdge {
    pub pair: [String; 2],
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub nodes: Vec<ExportNode>,
    pub edges: Vec<ExportEdge>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(pairs: &[(u32, f64)]) -> FeatureVector {
        FeatureVector::from_pairs(pairs.iter().copied())
    }

    fn item(id: &str, cat: &str, title: &str) -> Item {
        Item::dataset(id, cat, format!("{cat}/x"), crate::text::words(title), vec![])
    }

    #[test]
    fn hand_tfidf_on_three_docs() {
        let docs = vec![
            vec!["solar".to_owned(), "cars".to_owned()],
            vec!["cars".to_owned(), "rain".to_owned()],
            vec!["rain".to_owned(), "snow".to_owned()],
        ];
        let vocab = Vocabulary::from_documents(&docs);
        let v = vocab.tfidf(&docs[0]);
        let idf = |df: f64| ((1.0 + 3.0) / (1.0 + df)).ln() + 1.0;
        let solar = vocab.id("solar").unwrap();
        let cars = vocab.id("cars").unwrap();
        assert!((v.get(solar) - 0.5 * idf(1.0)).abs() < 1e-12);
        assert!((v.get(cars) - 0.5 * idf(2.0)).abs() < 1e-12);
        assert_eq!(v.entries().len(), 2);
    }

    #[test]
    fn rarer_terms_weigh_more() {
        let mut docs: Vec<Vec<String>> = (0..9).map(|_| vec!["common".to_owned()]).collect();
        docs.push(vec!["solar".to_owned(), "common".to_owned()]);
        let vocab = Vocabulary::from_documents(&docs);
        let v = vocab.tfidf(&["solar".to_owned(), "common".to_owned()]);
        assert!(v.get(vocab.id("solar").unwrap()) > v.get(vocab.id("common").unwrap()));
    }

    #[test]
    fn unknown_tokens_and_empty_text() {
        let vocab = Vocabulary::from_documents(&[vec!["known".to_owned()]]);
        assert!(vocab.tfidf(&[]).is_zero());
        let v = vocab.tfidf(&["known".to_owned(), "mystery".to_owned()]);
        assert_eq!(v.entries().len(), 1);
        assert!((v.get(0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cosine_examples() {
        let a = fv(&[(0, 1.0), (1, 2.0)]);
        let b = fv(&[(0, 2.0), (1, 1.0)]);
        assert!((correlation(&a, &b) - 0.8).abs() < 1e-12);
        assert!((correlation(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(correlation(&fv(&[(0, 1.0)]), &fv(&[(1, 1.0)])), 0.0);
        assert_eq!(correlation(&a, &FeatureVector::zero()), 0.0);
    }

    #[test]
    fn category_vector_is_member_mean() {
        let items = [item("a", "x", ""), item("b", "x", ""), item("c", "x", "")];
        let vs = [fv(&[(0, 3.0)]), fv(&[(0, 1.0), (1, 3.0)]), fv(&[(1, 6.0)])];
        let g = CategoryGraph::build(["x".to_owned()], items.iter().zip(vs.iter())).unwrap();
        let v = g.category_vector("x").unwrap();
        assert!((v.get(0) - 4.0 / 3.0).abs() < 1e-12);
        assert!((v.get(1) - 3.0).abs() < 1e-12);
        assert!(g.category_vector("nope").is_err());
    }

    #[test]
    fn opposite_members_cancel() {
        let items = [item("a", "x", ""), item("b", "x", "")];
        let vs = [fv(&[(0, 1.0)]), fv(&[(0, -1.0)])];
        let g = CategoryGraph::build(["x".to_owned()], items.iter().zip(vs.iter())).unwrap();
        assert!(g.category_vector("x").unwrap().is_zero());
    }

    #[test]
    fn complete_graph_edge_count() {
        let cats: Vec<String> = (0..17).map(|i| format!("c{i:02}")).collect();
        let items: Vec<Item> = cats.iter().map(|c| item(&format!("i{c}"), c, "")).collect();
        let vs: Vec<FeatureVector> = (0..17).map(|i| fv(&[(i, 1.0), (99, 1.0)])).collect();
        let g = CategoryGraph::build(cats, items.iter().zip(vs.iter())).unwrap();
        assert_eq!(g.edges().len(), 136);
    }

    #[test]
    fn accepting_generated_item_updates_all_its_categories() {
        let items = [item("a", "x", ""), item("b", "y", "")];
        let vs = [fv(&[(0, 1.0)]), fv(&[(1, 1.0)])];
        let mut g = CategoryGraph::build(
            ["x".to_owned(), "y".to_owned()],
            items.iter().zip(vs.iter()),
        )
        .unwrap();
        assert_eq!(g.rho("x", "y"), 0.0);
        let mut gi = item("g", "x", "");
        gi.origin = crate::corpus::Origin::Generated;
        gi.category_weights = BTreeMap::from([("x".into(), 0.5), ("y".into(), 0.5)]);
        g.accept_item(&gi, &fv(&[(0, 1.0), (1, 1.0)])).unwrap();
        assert_eq!(g.members("x").unwrap().len(), 2);
        assert_eq!(g.members("y").unwrap().len(), 2);
        assert!(g.rho("x", "y") > 0.0);
    }

    #[test]
    fn duplicate_acceptance_keeps_vector() {
        let items = [item("a", "x", "")];
        let vs = [fv(&[(0, 0.25), (3, 0.5)])];
        let mut g = CategoryGraph::build(["x".to_owned()], items.iter().zip(vs.iter())).unwrap();
        let before = g.category_vector("x").unwrap().clone();
        g.accept_item(&items[0], &vs[0]).unwrap();
        assert_eq!(g.category_vector("x").unwrap(), &before);
    }

    #[test]
    fn unknown_category_on_accept() {
        let mut g = CategoryGraph::build(["x".to_owned()], std::iter::empty()).unwrap();
        assert!(matches!(
            g.accept_item(&item("a", "zz", ""), &fv(&[(0, 1.0)])),
            Err(Error::UnknownCategory(_))
        ));
    }

    fn arb_vec() -> impl Strategy<Value = FeatureVector> {
        proptest::collection::vec((0u32..12, 0.0f64..3.0), 0..6).prop_map(FeatureVector::from_pairs)
    }

    proptest! {
        #[test]
        fn correlation_symmetric_and_bounded(a in arb_vec(), b in arb_vec()) {
            let ab = correlation(&a, &b);
            prop_assert_eq!(ab, correlation(&b, &a));
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ab));
        }

        #[test]
        fn norm_matches_entries(a in arb_vec()) {
            let n = a.entries().iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            prop_assert!((a.norm() - n).abs() < 1e-9);
        }

        #[test]
        fn incremental_update_equals_rebuild(
            base in proptest::collection::vec((0usize..4, arb_vec()), 1..10),
            extra in proptest::collection::vec((0usize..4, arb_vec()), 1..5),
        ) {
            let cats: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
            let mk = |k: usize, (c, _): &(usize, FeatureVector)| item(&format!("i{k}"), &cats[*c], "");
            let base_items: Vec<Item> = base.iter().enumerate().map(|(k, x)| mk(k, x)).collect();
            let extra_items: Vec<Item> =
                extra.iter().enumerate().map(|(k, x)| mk(k + 100, x)).collect();
            let mut g = CategoryGraph::build(
                cats.clone(),
                base_items.iter().zip(base.iter().map(|(_, v)| v)),
            ).unwrap();
            for (it, (_, v)) in extra_items.iter().zip(&extra) {
                g.accept_item(it, v).unwrap();
            }
            let all_items: Vec<&Item> = base_items.iter().chain(&extra_items).collect();
            let all_vecs: Vec<&FeatureVector> = base.iter().chain(&extra).map(|(_, v)| v).collect();
            let fresh = CategoryGraph::build(cats.clone(), all_items.into_iter().zip(all_vecs)).unwrap();
            prop_assert_eq!(g.edges(), fresh.edges());
            for c in &cats {
                prop_assert_eq!(g.category_vector(c).unwrap(), fresh.category_vector(c).unwrap());
            }
        }
    }
}
