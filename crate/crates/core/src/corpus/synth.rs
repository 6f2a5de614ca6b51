//! Seeded synthetic corpora standing in for MIND/IMDB at desk scale.
//!
//! Categories sit on a ring; neighbouring categories share "bridge" words
//! with seeded strengths so the correlation graph has structure. Every user
//! has the same history length: one click in each tail category and the
//! rest spread over a home category. Biased users additionally never click
//! their disinterest category. Interest categories come from the even ring
//! positions and disinterest categories from the odd ones, so no category is
//! both somebody's extreme interest and somebody else's blind spot.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Interaction, Item, SignalKind};
use crate::error::{Error, Result};

/// MIND's seventeen top-level categories, sorted.
pub const MIND_CATEGORIES: [&str; 17] = [
    "autos",
    "entertainment",
    "finance",
    "foodanddrink",
    "health",
    "kids",
    "lifestyle",
    "middleeast",
    "movies",
    "music",
    "news",
    "northamerica",
    "sports",
    "travel",
    "tv",
    "video",
    "weather",
];

const OWN_WORDS: usize = 24;
const SUB_WORDS: usize = 4;
const BRIDGE_WORDS: usize = 6;
const COMMON_WORDS: usize = 10;
const TITLE_LEN: usize = 6;
const ABSTRACT_LEN: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UserBias {
    Balanced,
    Biased {
        interest: String,
        disinterest: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BiasProfile {
    /// Nobody is biased.
    Balanced,
    /// This many users, chosen by seed, get an automatically assigned
    /// interest/disinterest pair.
    Count(usize),
    /// Explicit per-user profile; length must equal the user count.
    PerUser(Vec<UserBias>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_categories: usize,
    pub subcats_per_category: usize,
    pub n_items: usize,
    pub bias_profile: BiasProfile,
    /// Clicks per user; defaults to `10 * (n_categories - 1)` which keeps
    /// the home share at or above 90%.
    pub history_len: Option<usize>,
    pub seed: u64,
}

/// Resolved per-user layout of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub home: String,
    pub disinterest: Option<String>,
}

impl SynthSpec {
    pub fn new(
        n_users: usize,
        n_categories: usize,
        subcats_per_category: usize,
        n_items: usize,
        bias_profile: BiasProfile,
        seed: u64,
    ) -> Self {
        SynthSpec {
            n_users,
            n_categories,
            subcats_per_category,
            n_items,
            bias_profile,
            history_len: None,
            seed,
        }
    }

    /// The bundled MIND-like fixture: 17 categories, 4 subcategories each,
    /// 300 items per category and 20 users of which 6 are biased.
    pub fn mind_like(seed: u64) -> Self {
        SynthSpec::new(20, 17, 4, 17 * 300, BiasProfile::Count(6), seed)
    }

    pub fn history_len(&self) -> usize {
        self.history_len
            .unwrap_or_else(|| (10 * self.n_categories.saturating_sub(1)).max(10))
    }

    pub fn category_names(&self) -> Vec<String> {
        (0..self.n_categories)
            .map(|i| match MIND_CATEGORIES.get(i) {
                Some(name) if self.n_categories <= MIND_CATEGORIES.len() => (*name).to_owned(),
                _ => format!("topic{i:02}"),
            })
            .collect()
    }

    pub fn user_ids(&self) -> Vec<String> {
        (1..=self.n_users).map(|i| format!("U{i:04}")).collect()
    }

    fn biased_count(&self) -> usize {
        match &self.bias_profile {
            BiasProfile::Balanced => 0,
            BiasProfile::Count(n) => *n,
            BiasProfile::PerUser(v) => v.iter().filter(|b| **b != UserBias::Balanced).count(),
        }
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            ("n_users", self.n_users),
            ("n_categories", self.n_categories),
            ("subcats_per_category", self.subcats_per_category),
            ("n_items", self.n_items),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be at least 1")));
            }
        }
        let biased = self.biased_count();
        if biased > 0 && self.n_categories < 3 {
            return Err(Error::InvalidInput(
                "biased users need at least 3 categories".into(),
            ));
        }
        if biased > self.n_users {
            return Err(Error::InvalidInput(format!(
                "{biased} biased users but only {} users",
                self.n_users
            )));
        }
        if let BiasProfile::PerUser(v) = &self.bias_profile {
            if v.len() != self.n_users {
                return Err(Error::InvalidInput(format!(
                    "per-user bias profile has {} entries for {} users",
                    v.len(),
                    self.n_users
                )));
            }
        }
        if self.n_items < self.n_categories * self.subcats_per_category {
            return Err(Error::InvalidInput(
                "need at least one item per subcategory".into(),
            ));
        }
        if self.history_len() < self.n_categories {
            return Err(Error::InvalidInput(
                "history_len must cover one click per category".into(),
            ));
        }
        Ok(())
    }

    /// Resolves who is biased and which home/disinterest categories each
    /// user has. Deterministic given the seed.
    pub fn profiles(&self) -> Result<Vec<UserProfile>> {
        self.validate()?;
        let names = self.category_names();
        let even: Vec<&String> = names.iter().step_by(2).collect();
        let odd: Vec<&String> = names.iter().skip(1).step_by(2).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_b1a5);
        let home_offset = rng.random_range(0..even.len());
        let odd_offset = if odd.is_empty() {
            0
        } else {
            rng.random_range(0..odd.len())
        };

        let biases: Vec<UserBias> = match &self.bias_profile {
            BiasProfile::Balanced => vec![UserBias::Balanced; self.n_users],
            BiasProfile::PerUser(v) => v.clone(),
            BiasProfile::Count(n) => {
                let mut idx: Vec<usize> = (0..self.n_users).collect();
                idx.shuffle(&mut rng);
                let chosen: BTreeSet<usize> = idx.into_iter().take(*n).collect();
                let mut out = Vec::with_capacity(self.n_users);
                let mut j = 0;
                for u in 0..self.n_users {
                    if chosen.contains(&u) {
                        out.push(UserBias::Biased {
                            interest: even[(j + home_offset) % even.len()].clone(),
                            disinterest: odd[(j + odd_offset) % odd.len()].clone(),
                        });
                        j += 1;
                    } else {
                        out.push(UserBias::Balanced);
                    }
                }
                out
            }
        };

        let known: HashSet<&String> = names.iter().collect();
        let biased_total = biases.iter().filter(|b| **b != UserBias::Balanced).count();
        let mut next_home = biased_total;
        let mut profiles = Vec::with_capacity(self.n_users);
        for (user_id, bias) in self.user_ids().into_iter().zip(biases) {
            let profile = match bias {
                UserBias::Balanced => {
                    let home = even[(next_home + home_offset) % even.len()].clone();
                    next_home += 1;
                    UserProfile {
                        user_id,
                        home,
                        disinterest: None,
                    }
                }
                UserBias::Biased {
                    interest,
                    disinterest,
                } => {
                    for c in [&interest, &disinterest] {
                        if !known.contains(c) {
                            return Err(Error::UnknownCategory(c.clone()));
                        }
                    }
                    if interest == disinterest {
                        return Err(Error::InvalidInput(format!(
                            "user {user_id}: interest and disinterest coincide"
                        )));
                    }
                    UserProfile {
                        user_id,
                        home: interest,
                        disinterest: Some(disinterest),
                    }
                }
            };
            profiles.push(profile);
        }
        Ok(profiles)
    }
}

impl FromStr for SynthSpec {
    type Err = Error;

    /// Parses `mind`, `mind:<seed>` or a comma-separated `key=value` list
    /// (`users`, `categories`, `subcats`, `items`, `biased`, `history`,
    /// `seed`). Unspecified keys take the `mind` preset's values.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("mind") {
            let seed = match rest.strip_prefix(':') {
                Some(seed) => seed
                    .parse()
                    .map_err(|_| Error::Config(format!("bad seed in `{s}`")))?,
                None if rest.is_empty() => 2023,
                None => return Err(Error::Config(format!("unknown synth preset `{s}`"))),
            };
            return Ok(SynthSpec::mind_like(seed));
        }
        let mut spec = SynthSpec::mind_like(2023);
        for pair in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{pair}`")))?;
            let value: u64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad number in `{pair}`")))?;
            let v = value as usize;
            match key.trim() {
                "users" => spec.n_users = v,
                "categories" => spec.n_categories = v,
                "subcats" => spec.subcats_per_category = v,
                "items" => spec.n_items = v,
                "biased" => spec.bias_profile = BiasProfile::Count(v),
                "history" => spec.history_len = Some(v),
                "seed" => spec.seed = value,
                other => return Err(Error::Config(format!("unknown synth key `{other}`"))),
            }
        }
        Ok(spec)
    }
}

fn pseudo_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut HashSet<String>) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
        }
        if rng.random_bool(0.5) {
            w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Lexicon {
    own: Vec<Vec<String>>,
    sub: Vec<Vec<Vec<String>>>,
    // bridge[c] is shared by categories c and c+1 (mod n)
    bridge: Vec<Vec<String>>,
    strength: Vec<f64>,
    common: Vec<String>,
}

impl Lexicon {
    fn new(spec: &SynthSpec, names: &[String], rng: &mut ChaCha8Rng) -> Self {
        let n = spec.n_categories;
        let mut taken: HashSet<String> = names.iter().cloned().collect();
        let own = (0..n)
            .map(|_| pseudo_words(rng, OWN_WORDS, &mut taken))
            .collect();
        let sub = (0..n)
            .map(|_| {
                (0..spec.subcats_per_category)
                    .map(|_| pseudo_words(rng, SUB_WORDS, &mut taken))
                    .collect()
            })
            .collect();
        let n_bridges = match n {
            1 => 0,
            2 => 1,
            _ => n,
        };
        let bridge = (0..n_bridges)
            .map(|_| pseudo_words(rng, BRIDGE_WORDS, &mut taken))
            .collect();
        let strength = (0..n_bridges).map(|_| rng.random_range(0.25..1.75)).collect();
        let common = pseudo_words(rng, COMMON_WORDS, &mut taken);
        Lexicon {
            own,
            sub,
            bridge,
            strength,
            common,
        }
    }

    fn bridge_for(&self, c: usize, rng: &mut ChaCha8Rng) -> Option<&Vec<String>> {
        let n = self.own.len();
        match self.bridge.len() {
            0 => None,
            1 => Some(&self.bridge[0]),
            _ => {
                let left = (c + n - 1) % n;
                let (sl, sr) = (self.strength[left], self.strength[c]);
                let pick = if rng.random::<f64>() * (sl + sr) < sl {
                    left
                } else {
                    c
                };
                Some(&self.bridge[pick])
            }
        }
    }

    fn word(&self, name: &str, c: usize, s: usize, rng: &mut ChaCha8Rng) -> String {
        let pick = |pool: &Vec<String>, rng: &mut ChaCha8Rng| pool[rng.random_range(0..pool.len())].clone();
        let roll: f64 = rng.random();
        if roll < 0.05 {
            return name.to_owned();
        }
        if roll < 0.20 {
            return pick(&self.sub[c][s], rng);
        }
        if roll < 0.35 {
            if let Some(pool) = self.bridge_for(c, rng) {
                return pick(pool, rng);
            }
        }
        if roll < 0.45 {
            return pick(&self.common, rng);
        }
        pick(&self.own[c], rng)
    }
}

/// Generates a corpus; identical specs produce identical corpora.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Corpus> {
    let profiles = spec.profiles()?;
    let names = spec.category_names();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lexicon = Lexicon::new(spec, &names, &mut rng);
    let n_cat = spec.n_categories;
    let n_sub = spec.subcats_per_category;

    let sub_label = |c: usize, s: usize| format!("{}/s{}", names[c], s + 1);
    let mut taxonomy: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (c, name) in names.iter().enumerate().take(n_cat) {
        taxonomy.insert(name.clone(), (0..n_sub).map(|s| sub_label(c, s)).collect());
    }

    // pools[c][s] = item indices
    let mut pools = vec![vec![Vec::new(); n_sub]; n_cat];
    let mut items = Vec::with_capacity(spec.n_items);
    for i in 0..spec.n_items {
        let c = i % n_cat;
        let s = (i / n_cat) % n_sub;
        let title = (0..TITLE_LEN)
            .map(|_| lexicon.word(&names[c], c, s, &mut rng))
            .collect();
        let abstract_text = (0..ABSTRACT_LEN)
            .map(|_| lexicon.word(&names[c], c, s, &mut rng))
            .collect();
        pools[c][s].push(i);
        items.push(Item::dataset(
            format!("N{:05}", i + 1),
            names[c].clone(),
            sub_label(c, s),
            title,
            abstract_text,
        ));
    }
    let index: BTreeMap<&String, usize> = names.iter().enumerate().map(|(i, n)| (n, i)).collect();

    let history = spec.history_len();
    let mut interactions = Vec::new();
    let mut clock = 0u64;
    for profile in &profiles {
        let home = index[&profile.home];
        let skip = profile.disinterest.as_ref().map(|d| index[d]);
        let mut clicks: Vec<usize> = Vec::with_capacity(history);
        for c in (0..n_cat).filter(|&c| c != home && Some(c) != skip) {
            let s = rng.random_range(0..n_sub);
            let pool = &pools[c][s];
            clicks.push(pool[rng.random_range(0..pool.len())]);
        }
        let home_clicks = history - clicks.len();
        let mut shuffled: Vec<Vec<usize>> = pools[home]
            .iter()
            .map(|p| {
                let mut p = p.clone();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        for k in 0..home_clicks {
            let s = k % n_sub;
            let pool = &mut shuffled[s];
            clicks.push(pool[(k / n_sub) % pool.len()]);
        }
        clicks.shuffle(&mut rng);
        for item in clicks {
            interactions.push(Interaction {
                user_id: profile.user_id.clone(),
                item_id: items[item].id.clone(),
                timestamp: clock,
                signal: 1.0,
            });
            clock += 1;
        }
    }

    Corpus::new(items, interactions, taxonomy, SignalKind::Click)
}
