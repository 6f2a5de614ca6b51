//! Baseline recommenders (random, content-based, user-collaborative) and
//! feed assembly with generated items mixed in at weight `w`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefNetwork;
use crate::corpus::{Corpus, Item, Origin};
use crate::error::{Error, Result};
use crate::features::{correlation, FeatureVector};
use crate::nudge::{GeneratorPort, NudgeSession};
use crate::pathfinder::Rescheduler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Rd,
    Cb,
    Uc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Rd,
    Cb,
    Uc,
    RdW,
    CbW,
    UcW,
    Bheisr,
}

impl Model {
    /// Table order: each baseline followed by its mixed variant, then the
    /// generated-only model.
    pub const ALL: [Model; 7] = [
        Model::Rd,
        Model::RdW,
        Model::Cb,
        Model::CbW,
        Model::Uc,
        Model::UcW,
        Model::Bheisr,
    ];

    pub fn baseline(self) -> Baseline {
        match self {
            Model::Rd | Model::RdW | Model::Bheisr => Baseline::Rd,
            Model::Cb | Model::CbW => Baseline::Cb,
            Model::Uc | Model::UcW => Baseline::Uc,
        }
    }

    pub fn with_bheisr(self) -> bool {
        matches!(self, Model::RdW | Model::CbW | Model::UcW | Model::Bheisr)
    }

    /// The mixing weight this model actually uses for a configured `w`.
    pub fn effective_w(self, w: f64) -> f64 {
        match self {
            Model::Bheisr => 1.0,
            m if m.with_bheisr() => w,
            _ => 0.0,
        }
    }

    /// The unmixed model a mixed one is compared against.
    pub fn paired_baseline(self) -> Option<Model> {
        match self {
            Model::RdW => Some(Model::Rd),
            Model::CbW => Some(Model::Cb),
            Model::UcW => Some(Model::Uc),
            _ => None,
        }
    }

    /// Column label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Model::Rd => "RD",
            Model::Cb => "CB",
            Model::Uc => "UC",
            Model::RdW => "RD_wC",
            Model::CbW => "CB_wC",
            Model::UcW => "UC_wC",
            Model::Bheisr => "BHEISR",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Model::Rd => "rd",
            Model::Cb => "cb",
            Model::Uc => "uc",
            Model::RdW => "rd_w",
            Model::CbW => "cb_w",
            Model::UcW => "uc_w",
            Model::Bheisr => "bheisr",
        };
        f.write_str(s)
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "rd" => Model::Rd,
            "cb" => Model::Cb,
            "uc" => Model::Uc,
            "rd_w" | "rd_wc" => Model::RdW,
            "cb_w" | "cb_wc" => Model::CbW,
            "uc_w" | "uc_wc" => Model::UcW,
            "bheisr" => Model::Bheisr,
            other => return Err(Error::InvalidInput(format!("unknown model `{other}`"))),
        })
    }
}

/// Dataset items with their vectors, aligned by position.
#[derive(Clone, Copy)]
pub struct Catalog<'a> {
    pub corpus: &'a Corpus,
    pub vectors: &'a [FeatureVector],
}

impl<'a> Catalog<'a> {
    pub fn new(corpus: &'a Corpus, vectors: &'a [FeatureVector]) -> Result<Self> {
        if corpus.items().len() != vectors.len() {
            return Err(Error::InvalidInput(format!(
                "{} items but {} vectors",
                corpus.items().len(),
                vectors.len()
            )));
        }
        Ok(Catalog { corpus, vectors })
    }

    fn eligible(&self, exclude: &HashSet<&str>) -> Vec<usize> {
        self.corpus
            .items()
            .iter()
            .enumerate()
            .filter(|(_, it)| !it.is_generated() && !exclude.contains(it.id.as_str()))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Uniform sample of `k` eligible items without replacement. The flag is
/// set when fewer than `k` were eligible and all of them are returned.
pub fn rd_candidates<'c, R: Rng + ?Sized>(
    corpus: &'c Corpus,
    exclude: &HashSet<&str>,
    k: usize,
    rng: &mut R,
) -> (Vec<&'c Item>, bool) {
    let eligible: Vec<&Item> = corpus
        .items()
        .iter()
        .filter(|it| !it.is_generated() && !exclude.contains(it.id.as_str()))
        .collect();
    let short = eligible.len() < k;
    let n = k.min(eligible.len());
    let picked = sample(rng, eligible.len(), n).into_iter().map(|i| eligible[i]).collect();
    (picked, short)
}

/// Running sum of a user's accepted-item vectors. Cosine similarity does not
/// care about the scale, so the sum stands in for the mean.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Profile {
    sum: BTreeMap<u32, f64>,
    n: usize,
}

impl Profile {
    pub fn add(&mut self, v: &FeatureVector) {
        for &(t, w) in v.entries() {
            *self.sum.entry(t).or_insert(0.0) += w;
        }
        self.n += 1;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Mean vector of the accepted items.
    pub fn mean(&self) -> FeatureVector {
        if self.n == 0 {
            return FeatureVector::zero();
        }
        let n = self.n as f64;
        FeatureVector::from_pairs(self.sum.iter().map(|(t, w)| (*t, w / n)))
    }
}

/// Cosine between an item and the mean of the accepted history; zero for a
/// cold profile.
pub fn cb_score(item: &FeatureVector, profile: &Profile) -> f64 {
    if profile.is_empty() {
        return 0.0;
    }
    correlation(item, &profile.mean())
}

/// Belief share of an item: `Σ ω_C · B(C) / Σ B`.
pub fn belief_share(item: &Item, beliefs: &BTreeMap<String, f64>) -> f64 {
    let total: f64 = beliefs.values().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let s: f64 = item
        .category_weights
        .iter()
        .map(|(c, w)| w * beliefs.get(c).copied().unwrap_or(0.0))
        .sum();
    (s / total).clamp(0.0, 1.0)
}

/// What the collaborative scorer needs from every user, frozen at the start
/// of a step.
#[derive(Debug, Clone, Default)]
pub struct UcIndex {
    users: BTreeMap<String, UcUser>,
}

#[derive(Debug, Clone, Default)]
struct UcUser {
    /// Click mass per category.
    hist: BTreeMap<String, f64>,
    accepted: HashSet<String>,
}

fn cosine_maps(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl UcIndex {
    pub fn from_networks<'a>(networks: impl IntoIterator<Item = &'a BeliefNetwork>) -> Self {
        let users = networks
            .into_iter()
            .map(|n| {
                let hist = n
                    .categories()
                    .map(|c| (c.to_owned(), n.category_mass(c)))
                    .filter(|(_, m)| *m > 0.0)
                    .collect();
                let accepted = n.accepted().iter().cloned().collect();
                (n.user_id().to_owned(), UcUser { hist, accepted })
            })
            .collect();
        UcIndex { users }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Similarity mass of the other users who accepted each item, keyed by
    /// item id.
    pub fn neighbour_mass(&self, user: &str) -> Result<BTreeMap<&str, f64>> {
        let me = self
            .users
            .get(user)
            .ok_or_else(|| Error::UnknownUser(user.to_owned()))?;
        let mut out: BTreeMap<&str, f64> = BTreeMap::new();
        for (other, u) in &self.users {
            if other == user {
                continue;
            }
            let sim = cosine_maps(&me.hist, &u.hist);
            if sim == 0.0 {
                continue;
            }
            for id in &u.accepted {
                *out.entry(id.as_str()).or_insert(0.0) += sim;
            }
        }
        Ok(out)
    }
}

/// Collaborative score of one item for `user`.
pub fn uc_score(item: &Item, user: &str, index: &UcIndex, beliefs: &BTreeMap<String, f64>) -> Result<f64> {
    if index.len() < 2 {
        return Err(Error::Precondition("collaborative scoring needs two users".into()));
    }
    let mass = index.neighbour_mass(user)?;
    Ok(mass.get(item.id.as_str()).copied().unwrap_or(0.0) * belief_share(item, beliefs))
}

/// One feed slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedEntry {
    pub item: Item,
    /// Baseline score; `None` for generated and randomly sampled items.
    pub score: Option<f64>,
    /// Prompt the item was generated for.
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feed {
    pub items: Vec<FeedEntry>,
    pub original_count: usize,
    pub generated_count: usize,
    pub w: f64,
    pub step: usize,
    /// Fewer eligible baseline items than requested.
    pub short: bool,
}

impl Feed {
    pub fn item_refs(&self) -> Vec<&Item> {
        self.items.iter().map(|e| &e.item).collect()
    }
}

/// Everything about one user the feed builder reads.
pub struct UserView<'a> {
    pub network: &'a BeliefNetwork,
    pub profile: &'a Profile,
}

/// Mixing and size parameters for [`assemble_feed`].
#[derive(Debug, Clone, Copy)]
pub struct FeedSpec {
    pub baseline: Baseline,
    pub with_bheisr: bool,
    pub w: f64,
    pub k: usize,
    pub step: usize,
}

/// Nudge inputs for mixed feeds.
pub struct NudgeInputs<'a> {
    pub session: Option<&'a mut NudgeSession>,
    pub generator: &'a dyn GeneratorPort,
    pub planner: &'a dyn Rescheduler,
    /// Base seed for generated items; item `j` uses `gen_seed + j`.
    pub gen_seed: u64,
}

fn top_scored(scored: &mut [(usize, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

fn baseline_entries<R: Rng + ?Sized>(
    baseline: Baseline,
    n: usize,
    catalog: &Catalog,
    user: &UserView,
    uc: Option<&UcIndex>,
    exclude: &HashSet<&str>,
    rng: &mut R,
) -> Result<(Vec<FeedEntry>, bool)> {
    let items = catalog.corpus.items();
    let random = |rng: &mut R, exclude: &HashSet<&str>, n: usize| {
        let (picked, short) = rd_candidates(catalog.corpus, exclude, n, rng);
        let entries = picked
            .into_iter()
            .map(|it| FeedEntry {
                item: it.clone(),
                score: None,
                prompt: None,
            })
            .collect::<Vec<_>>();
        (entries, short)
    };
    if n == 0 {
        return Ok((Vec::new(), false));
    }
    let mut scored: Vec<(usize, f64)> = match baseline {
        Baseline::Rd => return Ok(random(rng, exclude, n)),
        Baseline::Cb => {
            if user.profile.is_empty() {
                return Ok(random(rng, exclude, n));
            }
            let mean = user.profile.mean();
            let mut dense = Vec::new();
            mean.add_to_dense(&mut dense, 1.0);
            catalog
                .eligible(exclude)
                .into_iter()
                .map(|i| {
                    let v = &catalog.vectors[i];
                    let s = if v.is_zero() {
                        0.0
                    } else {
                        (v.dot_dense(&dense) / (v.norm() * mean.norm())).clamp(-1.0, 1.0)
                    };
                    (i, s)
                })
                .collect()
        }
        Baseline::Uc => {
            let index = uc.ok_or_else(|| Error::Precondition("collaborative feed without an index".into()))?;
            let mass = index.neighbour_mass(user.network.user_id())?;
            let beliefs = user.network.beliefs();
            mass.iter()
                .filter_map(|(id, m)| catalog.corpus.item_position(id).map(|i| (i, *m)))
                .filter(|(i, _)| !items[*i].is_generated() && !exclude.contains(items[*i].id.as_str()))
                .map(|(i, m)| (i, m * belief_share(&items[i], &beliefs)))
                .filter(|(_, s)| *s > 0.0)
                .collect()
        }
    };
    top_scored(&mut scored);
    scored.truncate(n);
    let mut out: Vec<FeedEntry> = scored
        .into_iter()
        .map(|(i, s)| FeedEntry {
            item: items[i].clone(),
            score: Some(s),
            prompt: None,
        })
        .collect();
    let mut short = false;
    if out.len() < n {
        // too few positive collaborative scores: top up at random
        let mut ex = exclude.clone();
        ex.extend(out.iter().map(|e| e.item.id.as_str()));
        let (fill, s) = random(rng, &ex, n - out.len());
        short = s;
        out.extend(fill);
    }
    Ok((out, short))
}

/// Builds one feed: `round(w·k)` generated items cycling over the session's
/// queued prompts, the rest from the baseline. Baseline items come first in
/// score order, then generated items.
#[allow(clippy::too_many_arguments)]
pub fn assemble_feed<R: Rng + ?Sized>(
    spec: FeedSpec,
    catalog: &Catalog,
    user: &UserView,
    uc: Option<&UcIndex>,
    nudge: Option<NudgeInputs>,
    rng: &mut R,
) -> Result<Feed> {
    if spec.k == 0 {
        return Err(Error::InvalidInput("feed size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.w) {
        return Err(Error::InvalidInput(format!("w = {} outside [0, 1]", spec.w)));
    }
    let n_gen = if spec.with_bheisr {
        (spec.w * spec.k as f64).round() as usize
    } else {
        0
    };
    let mut generated = Vec::new();
    if n_gen > 0 {
        if let Some(NudgeInputs {
            session: Some(session),
            generator,
            planner,
            gen_seed,
        }) = nudge
        {
            if session.queue().is_empty() && !session.is_terminal() {
                session.replan(user.network, planner);
            }
            let queued = session.queue().len();
            if queued > 0 {
                for j in 0..n_gen {
                    let gi = session.generate_at(j % queued, generator, gen_seed.wrapping_add(j as u64))?;
                    generated.push(FeedEntry {
                        item: gi.item,
                        score: None,
                        prompt: Some(gi.prompt_key),
                    });
                }
            }
        }
    }
    let exclude: HashSet<&str> = user.network.accepted().iter().map(String::as_str).collect();
    let n_orig = spec.k - generated.len();
    let (mut items, short) = baseline_entries(spec.baseline, n_orig, catalog, user, uc, &exclude, rng)?;
    if items.is_empty() && generated.is_empty() {
        return Err(Error::Precondition("no eligible items for the feed".into()));
    }
    let original_count = items.len();
    let generated_count = generated.len();
    items.extend(generated);
    Ok(Feed {
        items,
        original_count,
        generated_count,
        w: spec.w,
        step: spec.step,
        short,
    })
}

/// One line of the feed log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedLogItem {
    pub id: String,
    pub origin: Origin,
    pub category: String,
}

impl From<&Item> for FeedLogItem {
    fn from(item: &Item) -> Self {
        FeedLogItem {
            id: item.id.clone(),
            origin: item.origin,
            category: item.category.clone(),
        }
    }
}
