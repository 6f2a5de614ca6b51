//! Item/interaction data model, dataset loaders and synthetic corpora.

mod imdb;
mod mind;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use imdb::load_ratings;
pub use mind::{load_behaviors, write_behaviors};
pub use synth::{synth_corpus, BiasProfile, SynthSpec, UserBias, MIND_CATEGORIES};

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Dataset,
    Generated,
}

/// A recommendable unit: a news article, a movie or a generated text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub category: String,
    pub subcategory: String,
    pub title: Vec<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: Vec<String>,
    /// Share of the item's content attributed to each category; sums to one.
    pub category_weights: BTreeMap<String, f64>,
    pub origin: Origin,
}

impl Item {
    /// A dataset item fully owned by its own category.
    pub fn dataset(
        id: impl Into<String>,
        category: impl Into<String>,
        subcategory: impl Into<String>,
        title: Vec<String>,
        abstract_text: Vec<String>,
    ) -> Self {
        let category = category.into();
        let mut category_weights = BTreeMap::new();
        category_weights.insert(category.clone(), 1.0);
        Item {
            id: id.into(),
            category,
            subcategory: subcategory.into(),
            title,
            abstract_text,
            category_weights,
            origin: Origin::Dataset,
        }
    }

    /// Categories carrying a positive weight.
    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.category_weights
            .iter()
            .filter(|(_, w)| **w > 0.0)
            .map(|(c, _)| c.as_str())
    }

    pub fn is_generated(&self) -> bool {
        self.origin == Origin::Generated
    }

    /// Raw words of title followed by abstract.
    pub fn text_words(&self) -> impl Iterator<Item = &str> {
        self.title
            .iter()
            .chain(self.abstract_text.iter())
            .map(String::as_str)
    }

    fn validate(&self, taxonomy: &BTreeMap<String, BTreeSet<String>>) -> Result<()> {
        let sum: f64 = self.category_weights.values().sum();
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidCorpus(format!(
                "item `{}` category weights sum to {sum}",
                self.id
            )));
        }
        for (c, w) in &self.category_weights {
            if !taxonomy.contains_key(c) {
                return Err(Error::UnknownCategory(c.clone()));
            }
            if !(0.0..=1.0).contains(w) {
                return Err(Error::InvalidCorpus(format!(
                    "item `{}` has weight {w} for `{c}`",
                    self.id
                )));
            }
        }
        if self.origin == Origin::Dataset
            && (self.category_weights.len() != 1
                || self.category_weights.get(&self.category) != Some(&1.0))
        {
            return Err(Error::InvalidCorpus(format!(
                "dataset item `{}` must weigh only its own category",
                self.id
            )));
        }
        Ok(())
    }
}

/// How an interaction's `signal` maps to interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// Binary click, 1 = interested.
    Click,
    /// 0..=5 rating, interested iff strictly above 2.5.
    Rating,
}

pub const RATING_INTEREST_THRESHOLD: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: u64,
    pub signal: f64,
}

impl Interaction {
    pub fn interested(&self, kind: SignalKind) -> bool {
        match kind {
            SignalKind::Click => self.signal >= 1.0,
            SignalKind::Rating => self.signal > RATING_INTEREST_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TaxonomyEntry {
    category: String,
    subcategories: Vec<String>,
}

/// Canonical on-disk layout.
#[derive(Serialize, Deserialize)]
struct CorpusDocument {
    signal: SignalKind,
    items: Vec<Item>,
    interactions: Vec<Interaction>,
    taxonomy: Vec<TaxonomyEntry>,
    users: Vec<String>,
}

/// An immutable, validated collection of items and interactions.
#[derive(Debug, Clone)]
pub struct Corpus {
    items: Vec<Item>,
    interactions: Vec<Interaction>,
    taxonomy: BTreeMap<String, BTreeSet<String>>,
    users: BTreeSet<String>,
    signal: SignalKind,
    item_index: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
            && self.interactions == other.interactions
            && self.taxonomy == other.taxonomy
            && self.users == other.users
            && self.signal == other.signal
    }
}

impl Corpus {
    /// Builds a corpus, deriving users from interactions and checking every
    /// cross-reference.
    pub fn new(
        items: Vec<Item>,
        interactions: Vec<Interaction>,
        taxonomy: BTreeMap<String, BTreeSet<String>>,
        signal: SignalKind,
    ) -> Result<Self> {
        let users = interactions.iter().map(|i| i.user_id.clone()).collect();
        Self::with_users(items, interactions, taxonomy, users, signal)
    }

    fn with_users(
        items: Vec<Item>,
        interactions: Vec<Interaction>,
        taxonomy: BTreeMap<String, BTreeSet<String>>,
        users: BTreeSet<String>,
        signal: SignalKind,
    ) -> Result<Self> {
        let mut item_index = HashMap::with_capacity(items.len());
        for (idx, item) in items.iter().enumerate() {
            if item_index.insert(item.id.clone(), idx).is_some() {
                return Err(Error::InvalidCorpus(format!("duplicate item id `{}`", item.id)));
            }
            let known = taxonomy
                .get(&item.category)
                .is_some_and(|subs| subs.contains(&item.subcategory));
            if !known {
                return Err(Error::InvalidCorpus(format!(
                    "item `{}` has ({}, {}) outside the taxonomy",
                    item.id, item.category, item.subcategory
                )));
            }
            item.validate(&taxonomy)?;
        }
        for inter in &interactions {
            if !item_index.contains_key(&inter.item_id) {
                return Err(Error::InvalidCorpus(format!(
                    "interaction references unknown item `{}`",
                    inter.item_id
                )));
            }
            if !users.contains(&inter.user_id) {
                return Err(Error::UnknownUser(inter.user_id.clone()));
            }
        }
        Ok(Corpus {
            items,
            interactions,
            taxonomy,
            users,
            signal,
            item_index,
        })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn taxonomy(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.taxonomy
    }

    /// Category labels in lexicographic order.
    pub fn categories(&self) -> Vec<String> {
        self.taxonomy.keys().cloned().collect()
    }

    pub fn users(&self) -> &BTreeSet<String> {
        &self.users
    }

    pub fn signal(&self) -> SignalKind {
        self.signal
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.item_index.get(id).map(|&i| &self.items[i])
    }

    pub fn item_position(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    /// Interactions of one user, in timestamp order.
    pub fn user_interactions(&self, user: &str) -> Vec<&Interaction> {
        let mut out: Vec<_> = self
            .interactions
            .iter()
            .filter(|i| i.user_id == user)
            .collect();
        out.sort_by_key(|i| i.timestamp);
        out
    }

    /// Items of one category in corpus order.
    pub fn items_in(&self, category: &str) -> impl Iterator<Item = &Item> {
        let category = category.to_owned();
        self.items.iter().filter(move |i| i.category == category)
    }

    pub fn interested_count(&self) -> usize {
        self.interactions
            .iter()
            .filter(|i| i.interested(self.signal))
            .count()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CorpusDocument {
            signal: self.signal,
            items: self.items.clone(),
            interactions: self.interactions.clone(),
            taxonomy: self
                .taxonomy
                .iter()
                .map(|(c, subs)| TaxonomyEntry {
                    category: c.clone(),
                    subcategories: subs.iter().cloned().collect(),
                })
                .collect(),
            users: self.users.iter().cloned().collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CorpusDocument = serde_json::from_str(text)?;
        let taxonomy = doc
            .taxonomy
            .into_iter()
            .map(|e| (e.category, e.subcategories.into_iter().collect()))
            .collect();
        Self::with_users(
            doc.items,
            doc.interactions,
            taxonomy,
            doc.users.into_iter().collect(),
            doc.signal,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// A record the loaders skipped, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

/// Loader output: the corpus plus the records that were set aside.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub corpus: Corpus,
    pub rejects: Vec<Reject>,
}

/// Maps raw timestamps to dense ordinals by sort order; equal raw keys keep
/// their input order.
pub(crate) fn ordinals<K: Ord + Clone>(keys: &[K]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut out = vec![0; keys.len()];
    for (rank, idx) in order.into_iter().enumerate() {
        out[idx] = rank as u64;
    }
    out
}
