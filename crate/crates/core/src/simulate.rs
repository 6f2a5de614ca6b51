//! Closed-loop simulation: a simulated user accepts items with a probability
//! given by their belief share, feeds are rebuilt every step, and the four
//! experiment tables are derived from the run records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefNetwork, BeliefSnapshot, CreditPolicy};
use crate::corpus::{load_behaviors, load_ratings, synth_corpus, Corpus, Item, SynthSpec};
use crate::error::{Error, Result};
use crate::fbdmr::{
    classify_users, diversity_coverage, diversity_coverage_formula, subcategory_frequencies,
    Classification, UserClass,
};
use crate::features::{featurize, CategoryGraph, FeatureVector, TfIdf};
use crate::nudge::{ExternalGenerator, GeneratedItem, GeneratorPort, NudgeSession, TemplateGenerator};
use crate::pathfinder::{GraphPlanner, RejectionLedger, Reschedule, Rescheduler, DEFAULT_THETA};
use crate::recommenders::{
    assemble_feed, belief_share, Catalog, FeedLogItem, FeedSpec, Model, NudgeInputs, Profile,
    UcIndex, UserView,
};

const STREAM_DECIDE: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_GENERATE: u64 = 3;

/// Rejection threshold; `None` never penalises an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Theta(pub Option<u32>);

impl Default for Theta {
    fn default() -> Self {
        Theta(Some(DEFAULT_THETA))
    }
}

impl Theta {
    pub fn ledger(self) -> RejectionLedger {
        match self.0 {
            Some(t) => RejectionLedger::new(t),
            None => RejectionLedger::unbounded(),
        }
    }
}

impl FromStr for Theta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "none" | "unbounded" => Ok(Theta(None)),
            t => t
                .parse::<u32>()
                .map(|v| Theta(Some(v)))
                .map_err(|_| Error::Config(format!("theta must be an integer or `inf`, got `{s}`"))),
        }
    }
}

impl Serialize for Theta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(t) => s.serialize_u32(t),
            None => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Theta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(t) => Ok(Theta(Some(t))),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Run configuration. The TOML config file uses the same flat keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub model: Model,
    pub w: f64,
    pub k: usize,
    pub theta: Theta,
    pub feeds: usize,
    pub seed: u64,
    /// MIND behaviours TSV, IMDB directory, or saved corpus JSON.
    pub dataset: Option<PathBuf>,
    /// Synthetic corpus spec, used when no dataset is given.
    pub synth: Option<String>,
    pub checkpoints: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    /// Target user for single-user experiments.
    pub user: Option<String>,
    pub interest: Option<String>,
    pub disinterest: Option<String>,
    pub w_values: Vec<f64>,
    pub parallel: bool,
    pub credit: CreditPolicy,
    pub generator_url: Option<String>,
    pub generator_timeout_ms: u64,
    pub generator_retries: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            model: Model::CbW,
            w: 0.6,
            k: 10,
            theta: Theta::default(),
            feeds: 10,
            seed: 0,
            dataset: None,
            synth: None,
            checkpoints: None,
            out: None,
            user: None,
            interest: None,
            disinterest: None,
            w_values: vec![0.2, 0.4, 0.6, 0.8],
            parallel: true,
            credit: CreditPolicy::default(),
            generator_url: None,
            generator_timeout_ms: 2000,
            generator_retries: 2,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feeds == 0 {
            return Err(Error::Config("feeds must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::Config(format!("w = {} outside [0, 1]", self.w)));
        }
        if self.theta.0 == Some(0) {
            return Err(Error::Config("theta must be at least 1".into()));
        }
        if let Some(w) = self.w_values.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::Config(format!("w value {w} outside [0, 1]")));
        }
        Ok(())
    }

    /// Steps at which belief snapshots are taken: every feed for short runs,
    /// every tenth feed otherwise. Step 0 is the initial state.
    pub fn checkpoint_steps(&self) -> Vec<usize> {
        if let Some(c) = &self.checkpoints {
            let mut c = c.clone();
            c.sort_unstable();
            c.dedup();
            return c;
        }
        if self.feeds <= 20 {
            (0..=self.feeds).collect()
        } else {
            let mut c: Vec<usize> = (0..=self.feeds).step_by(10).collect();
            if c.last() != Some(&self.feeds) {
                c.push(self.feeds);
            }
            c
        }
    }
}

/// Corpus, features, graph and generator shared by every run.
pub struct Environment {
    pub corpus: Corpus,
    pub tfidf: TfIdf,
    pub vectors: Vec<FeatureVector>,
    pub graph: CategoryGraph,
    pub generator: Box<dyn GeneratorPort>,
}

/// Loads whatever `path` points at: a saved corpus (`.json`), an IMDB
/// directory (`movies.csv` + `ratings.csv`), or a MIND behaviours TSV.
pub fn load_dataset(path: &Path) -> Result<Corpus> {
    if path.is_dir() {
        let report = load_ratings(&path.join("movies.csv"), &path.join("ratings.csv"))?;
        for r in &report.rejects {
            log::warn!("line {}: {}", r.line, r.reason);
        }
        return Ok(report.corpus);
    }
    if path.extension().is_some_and(|e| e == "json") {
        return Corpus::load(path);
    }
    let report = load_behaviors(path)?;
    for r in &report.rejects {
        log::warn!("line {}: {}", r.line, r.reason);
    }
    Ok(report.corpus)
}

impl Environment {
    pub fn from_corpus(corpus: Corpus, config: &SimConfig) -> Result<Self> {
        let tfidf = TfIdf::from_corpus(&corpus);
        let vectors = tfidf.embed_corpus(&corpus);
        let graph = CategoryGraph::from_corpus(&corpus, &vectors)?;
        let vocab = tfidf.vocabulary();
        let template = TemplateGenerator::from_corpus(&corpus, &vectors, |t| vocab.term(t).map(str::to_owned));
        let generator: Box<dyn GeneratorPort> = match &config.generator_url {
            Some(url) => Box::new(ExternalGenerator::new(
                url.clone(),
                Duration::from_millis(config.generator_timeout_ms),
                config.generator_retries,
                template,
            )),
            None => Box::new(template),
        };
        Ok(Environment {
            corpus,
            tfidf,
            vectors,
            graph,
            generator,
        })
    }

    pub fn load(config: &SimConfig) -> Result<Self> {
        let corpus = match (&config.dataset, &config.synth) {
            (Some(path), _) => load_dataset(path)?,
            (None, Some(spec)) => synth_corpus(&spec.parse::<SynthSpec>()?)?,
            (None, None) => synth_corpus(&SynthSpec::mind_like(config.seed))?,
        };
        Self::from_corpus(corpus, config)
    }

    pub fn n_categories(&self) -> usize {
        self.graph.len()
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for one (user, step, stream) cell: run seed, then user, then step.
pub fn stream_seed(seed: u64, user: &str, step: usize, stream: u64) -> u64 {
    let user_seed = splitmix(seed ^ splitmix(fnv1a(user)));
    splitmix(splitmix(user_seed ^ step as u64) ^ stream)
}

pub fn stream_rng(seed: u64, user: &str, step: usize, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, user, step, stream))
}

/// `Σ ω_C · B(C) / Σ B` over the item's categories; zero for a cold user.
pub fn acceptance_probability(item: &Item, network: &BeliefNetwork) -> f64 {
    belief_share(item, &network.beliefs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub item_id: String,
    pub ap: f64,
    pub draw: f64,
    pub accepted: bool,
}

/// Bernoulli decision on one uniform draw from the user's stream.
pub fn decide<R: Rng + ?Sized>(item: &Item, network: &BeliefNetwork, rng: &mut R) -> Decision {
    let ap = acceptance_probability(item, network);
    let draw: f64 = rng.random();
    Decision {
        item_id: item.id.clone(),
        ap,
        draw,
        accepted: draw < ap,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserStep {
    pub user: String,
    pub items: Vec<FeedLogItem>,
    pub generated_count: usize,
    pub decisions: Vec<Decision>,
    /// Distinct categories in the feed over all categories.
    pub coverage: f64,
    /// The subcategory-frequency form of the coverage metric.
    pub coverage_formula: f64,
    /// Share of categories with positive belief mass.
    pub belief_coverage: f64,
    /// Current prompt path, if a nudge session is active.
    pub session: Option<String>,
    pub belief: Option<BeliefSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub users: Vec<UserStep>,
    /// Filter-bubble users after this step's feedback; `None` when the
    /// population is too small to classify.
    pub fb_users: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: Model,
    pub w: f64,
    pub k: usize,
    pub seed: u64,
    pub initial_beliefs: Vec<BeliefSnapshot>,
    pub initial_fb_users: Option<Vec<String>>,
    pub final_fb_users: Option<Vec<String>>,
    pub steps: Vec<StepRecord>,
}

impl RunRecord {
    /// Count of filter-bubble users before the first feed and after each.
    pub fn fb_counts(&self) -> Vec<Option<usize>> {
        std::iter::once(self.initial_fb_users.as_ref().map(Vec::len))
            .chain(self.steps.iter().map(|s| s.fb_users))
            .collect()
    }

    pub fn user_steps<'a>(&'a self, user: &'a str) -> impl Iterator<Item = &'a UserStep> + 'a {
        self.steps
            .iter()
            .filter_map(move |s| s.users.iter().find(|u| u.user == user))
    }

    /// Belief snapshots of `user` keyed by step, including step 0.
    pub fn belief_trajectory(&self, user: &str) -> BTreeMap<usize, &BeliefSnapshot> {
        let mut out = BTreeMap::new();
        if let Some(b) = self.initial_beliefs.iter().find(|b| b.user_id == user) {
            out.insert(0, b);
        }
        for s in &self.steps {
            if let Some(b) = s.users.iter().find(|u| u.user == user).and_then(|u| u.belief.as_ref()) {
                out.insert(s.step, b);
            }
        }
        out
    }

    /// One JSON object per step.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Feed log lines `{step, user, items}`.
    pub fn feed_log(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Line<'a> {
            step: usize,
            user: &'a str,
            items: &'a [FeedLogItem],
        }
        let mut out = String::new();
        for s in &self.steps {
            for u in &s.users {
                out.push_str(&serde_json::to_string(&Line {
                    step: s.step,
                    user: &u.user,
                    items: &u.items,
                })?);
                out.push('\n');
            }
        }
        Ok(out)
    }
}

struct UserState {
    network: BeliefNetwork,
    profile: Profile,
    session: Option<NudgeSession>,
}

struct StepCtx<'a> {
    config: &'a SimConfig,
    env: &'a Environment,
    graph: &'a CategoryGraph,
    uc: Option<&'a UcIndex>,
    classification: Option<&'a Classification>,
    step: usize,
    checkpoint: bool,
}

fn beliefs_of(states: &[UserState]) -> BTreeMap<String, BTreeMap<String, f64>> {
    states
        .iter()
        .map(|s| (s.network.user_id().to_owned(), s.network.beliefs()))
        .collect()
}

fn classify(states: &[UserState], categories: &[String]) -> Result<Option<Classification>> {
    match classify_users(&beliefs_of(states), categories) {
        Ok(c) => Ok(Some(c)),
        Err(Error::Precondition(msg)) => {
            log::debug!("skipping classification: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn user_step(state: &mut UserState, ctx: &StepCtx) -> Result<(UserStep, Vec<Item>)> {
    let cfg = ctx.config;
    let user = state.network.user_id().to_owned();
    let invariant = |message: String| Error::Invariant {
        step: ctx.step,
        user: user.clone(),
        message,
    };
    let classes: Option<&BTreeMap<String, UserClass>> = ctx.classification.and_then(|c| c.classes_of(&user));
    let planner = GraphPlanner {
        graph: ctx.graph,
        classes,
    };
    if cfg.model.with_bheisr()
        && state.session.is_none()
        && ctx.classification.is_some_and(|c| c.is_affected(&user))
    {
        let ledger = cfg.theta.ledger();
        if let Reschedule::Path(p) = planner.reschedule(&state.network, &ledger, None) {
            state.session = Some(NudgeSession::new(user.clone(), p, ledger));
        }
    }

    let catalog = Catalog::new(&ctx.env.corpus, &ctx.env.vectors)?;
    let spec = FeedSpec {
        baseline: cfg.model.baseline(),
        with_bheisr: cfg.model.with_bheisr(),
        w: cfg.model.effective_w(cfg.w),
        k: cfg.k,
        step: ctx.step,
    };
    let mut sample_rng = stream_rng(cfg.seed, &user, ctx.step, STREAM_SAMPLE);
    let feed = {
        let view = UserView {
            network: &state.network,
            profile: &state.profile,
        };
        let nudge = NudgeInputs {
            session: state.session.as_mut(),
            generator: ctx.env.generator.as_ref(),
            planner: &planner,
            gen_seed: stream_seed(cfg.seed, &user, ctx.step, STREAM_GENERATE),
        };
        assemble_feed(spec, &catalog, &view, ctx.uc, Some(nudge), &mut sample_rng)?
    };

    // the user judges the feed as shown, then the feedback is applied in order
    let mut decide_rng = stream_rng(cfg.seed, &user, ctx.step, STREAM_DECIDE);
    let decisions: Vec<Decision> = feed
        .items
        .iter()
        .map(|e| decide(&e.item, &state.network, &mut decide_rng))
        .collect();
    if let Some(d) = decisions.iter().find(|d| !(0.0..=1.0).contains(&d.ap)) {
        return Err(invariant(format!("acceptance probability {} for {}", d.ap, d.item_id)));
    }

    let vocab = ctx.env.tfidf.vocabulary();
    let mut accepted_generated = Vec::new();
    for (entry, d) in feed.items.iter().zip(&decisions) {
        match &entry.prompt {
            None => {
                state.network.update_on_feedback(&entry.item, d.accepted, None)?;
                if d.accepted {
                    let pos = ctx
                        .env
                        .corpus
                        .item_position(&entry.item.id)
                        .ok_or_else(|| invariant(format!("unknown item {}", entry.item.id)))?;
                    state.profile.add(&ctx.env.vectors[pos]);
                }
            }
            Some(prompt) => {
                let gi = GeneratedItem {
                    item: entry.item.clone(),
                    prompt_key: prompt.clone(),
                };
                let session = state
                    .session
                    .as_mut()
                    .ok_or_else(|| invariant("generated item without a session".into()))?;
                let fb = session.feedback(&gi, d.accepted, &mut state.network, &planner, ctx.step)?;
                if let Some(item) = fb.accepted_item {
                    state.profile.add(&featurize(&item, vocab));
                    accepted_generated.push(item);
                }
            }
        }
    }

    if !state.network.is_cold() {
        let total: f64 = state.network.click_probs().values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invariant(format!("click probabilities sum to {total}")));
        }
    }

    let refs = feed.item_refs();
    let coverage = diversity_coverage(&refs, ctx.env.n_categories())?;
    let coverage_formula = diversity_coverage_formula(&subcategory_frequencies(&refs))?;
    let record = UserStep {
        user: user.clone(),
        items: refs.iter().map(|i| FeedLogItem::from(*i)).collect(),
        generated_count: feed.generated_count,
        decisions,
        coverage,
        coverage_formula,
        belief_coverage: state.network.coverage(),
        session: state
            .session
            .as_ref()
            .filter(|s| !s.is_terminal())
            .map(|s| s.path().key()),
        belief: ctx.checkpoint.then(|| state.network.snapshot()),
    };
    Ok((record, accepted_generated))
}

/// Runs `config.feeds` steps for every user in the corpus. Graph updates
/// from accepted generated items are applied between steps in user order,
/// so parallel and sequential runs agree exactly.
pub fn run_loop(env: &Environment, config: &SimConfig) -> Result<RunRecord> {
    config.validate()?;
    let categories = env.corpus.categories();
    let mut states = env
        .corpus
        .users()
        .iter()
        .map(|u| {
            let network = BeliefNetwork::build_from_history(&env.corpus, u)?.with_policy(config.credit);
            let mut profile = Profile::default();
            for id in network.accepted() {
                if let Some(pos) = env.corpus.item_position(id) {
                    profile.add(&env.vectors[pos]);
                }
            }
            Ok(UserState {
                network,
                profile,
                session: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut graph = env.graph.clone();
    let checkpoints = config.checkpoint_steps();
    let initial_beliefs = states.iter().map(|s| s.network.snapshot()).collect();
    let mut classification = classify(&states, &categories)?;
    let initial_fb_users = classification
        .as_ref()
        .map(|c| c.fb_users.iter().cloned().collect());
    let mut steps = Vec::with_capacity(config.feeds);

    for step in 1..=config.feeds {
        let uc = (config.model.baseline() == crate::recommenders::Baseline::Uc)
            .then(|| UcIndex::from_networks(states.iter().map(|s| &s.network)));
        let ctx = StepCtx {
            config,
            env,
            graph: &graph,
            uc: uc.as_ref(),
            classification: classification.as_ref(),
            step,
            checkpoint: checkpoints.contains(&step),
        };
        let results: Vec<Result<(UserStep, Vec<Item>)>> = if config.parallel {
            states.par_iter_mut().map(|s| user_step(s, &ctx)).collect()
        } else {
            states.iter_mut().map(|s| user_step(s, &ctx)).collect()
        };
        let mut users = Vec::with_capacity(results.len());
        let mut accepted = Vec::new();
        for r in results {
            let (u, items) = r?;
            users.push(u);
            accepted.extend(items);
        }
        let vocab = env.tfidf.vocabulary();
        let vectors: Vec<FeatureVector> = accepted.iter().map(|i| featurize(i, vocab)).collect();
        graph.accept_items(accepted.iter().zip(vectors.iter()))?;
        classification = classify(&states, &categories)?;
        steps.push(StepRecord {
            step,
            users,
            fb_users: classification.as_ref().map(|c| c.fb_users.len()),
        });
    }
    Ok(RunRecord {
        model: config.model,
        w: config.w,
        k: config.k,
        seed: config.seed,
        initial_beliefs,
        initial_fb_users,
        final_fb_users: classification.map(|c| c.fb_users.into_iter().collect()),
        steps,
    })
}

/// The configured user, else the first user flagged as a filter-bubble user
/// before any feed, else the first user.
pub fn target_user(env: &Environment, config: &SimConfig) -> Result<String> {
    if let Some(u) = &config.user {
        if !env.corpus.users().contains(u) {
            return Err(Error::UnknownUser(u.clone()));
        }
        return Ok(u.clone());
    }
    let categories = env.corpus.categories();
    let beliefs: BTreeMap<String, BTreeMap<String, f64>> = env
        .corpus
        .users()
        .iter()
        .map(|u| Ok((u.clone(), BeliefNetwork::build_from_history(&env.corpus, u)?.beliefs())))
        .collect::<Result<_>>()?;
    if let Ok(c) = classify_users(&beliefs, &categories) {
        if let Some(u) = c.fb_users.iter().next() {
            return Ok(u.clone());
        }
    }
    env.corpus
        .users()
        .iter()
        .next()
        .cloned()
        .ok_or_else(|| Error::InvalidCorpus("no users".into()))
}

/// Per-feed coverage of the target user under every model.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTable {
    pub user: String,
    pub columns: Vec<(Model, Vec<f64>)>,
    pub formula: Vec<(Model, Vec<f64>)>,
}

impl CoverageTable {
    pub fn column(&self, model: Model) -> Option<&[f64]> {
        self.columns.iter().find(|(m, _)| *m == model).map(|(_, v)| v.as_slice())
    }

    pub fn sum(&self, model: Model) -> Option<f64> {
        self.column(model).map(|v| v.iter().sum())
    }

    /// Relative gain of a mixed model over its baseline, in percent.
    pub fn improvement(&self, model: Model) -> Option<f64> {
        let base = self.sum(model.paired_baseline()?)?;
        let mixed = self.sum(model)?;
        (base > 0.0).then(|| (mixed - base) / base * 100.0)
    }

    fn table(cols: &[(Model, Vec<f64>)], with_summary: Option<&CoverageTable>) -> String {
        let mut out = String::from("feed");
        for (m, _) in cols {
            out.push(',');
            out.push_str(m.label());
        }
        out.push('\n');
        let rows = cols.first().map_or(0, |(_, v)| v.len());
        for r in 0..rows {
            let _ = write!(out, "feed_{}", r + 1);
            for (_, v) in cols {
                let _ = write!(out, ",{:.3}", v[r]);
            }
            out.push('\n');
        }
        out.push_str("sum");
        for (_, v) in cols {
            let _ = write!(out, ",{:.3}", v.iter().sum::<f64>());
        }
        out.push('\n');
        if let Some(t) = with_summary {
            out.push_str("Improv");
            for (m, _) in cols {
                out.push(',');
                if let Some(p) = t.improvement(*m) {
                    let _ = write!(out, "{p:.2}%");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        Self::table(&self.columns, Some(self))
    }

    pub fn formula_csv(&self) -> String {
        Self::table(&self.formula, None)
    }
}

fn with_model(config: &SimConfig, model: Model) -> SimConfig {
    SimConfig {
        model,
        ..config.clone()
    }
}

pub fn experiment_coverage(env: &Environment, config: &SimConfig) -> Result<CoverageTable> {
    experiment_coverage_for(env, config, &Model::ALL)
}

pub fn experiment_coverage_for(env: &Environment, config: &SimConfig, models: &[Model]) -> Result<CoverageTable> {
    let user = target_user(env, config)?;
    let mut columns = Vec::new();
    let mut formula = Vec::new();
    for &m in models {
        let run = run_loop(env, &with_model(config, m))?;
        let steps: Vec<&UserStep> = run.user_steps(&user).collect();
        columns.push((m, steps.iter().map(|s| s.coverage).collect()));
        formula.push((m, steps.iter().map(|s| s.coverage_formula).collect()));
    }
    Ok(CoverageTable { user, columns, formula })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub interest: f64,
    pub disinterest: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub user: String,
    pub interest: String,
    pub disinterest: String,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    /// Long format `step,series,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,series,value\n");
        for p in &self.points {
            let _ = writeln!(out, "{},interest:{},{:.6}", p.step, self.interest, p.interest);
            let _ = writeln!(out, "{},disinterest:{},{:.6}", p.step, self.disinterest, p.disinterest);
        }
        out
    }
}

/// Default interest and disinterest categories of a user: the highest
/// belief, and the lowest among categories flagged extreme-low (falling back
/// to the lowest overall). Ties go to the smaller label.
pub fn default_categories(env: &Environment, user: &str) -> Result<(String, String)> {
    let network = BeliefNetwork::build_from_history(&env.corpus, user)?;
    let beliefs = network.beliefs();
    let pick = |better: fn(f64, f64) -> bool, filter: &dyn Fn(&str) -> bool| {
        beliefs
            .iter()
            .filter(|(c, _)| filter(c))
            .fold(None::<(&String, f64)>, |best, (c, b)| match best {
                Some((_, bb)) if !better(*b, bb) => best,
                _ => Some((c, *b)),
            })
            .map(|(c, _)| c.clone())
    };
    let interest = pick(|a, b| a > b, &|_| true).ok_or_else(|| Error::UnknownUser(user.into()))?;
    let all: BTreeMap<String, BTreeMap<String, f64>> = env
        .corpus
        .users()
        .iter()
        .map(|u| Ok((u.clone(), BeliefNetwork::build_from_history(&env.corpus, u)?.beliefs())))
        .collect::<Result<_>>()?;
    let low: Vec<String> = classify_users(&all, &env.corpus.categories())
        .ok()
        .and_then(|c| c.classes_of(user).cloned())
        .map(|cl| {
            cl.into_iter()
                .filter(|(_, k)| *k == UserClass::ExtremeLow)
                .map(|(c, _)| c)
                .collect()
        })
        .unwrap_or_default();
    let disinterest = pick(|a, b| a < b, &|c| low.iter().any(|l| l == c))
        .or_else(|| pick(|a, b| a < b, &|c| c != interest))
        .ok_or_else(|| Error::UnknownUser(user.into()))?;
    Ok((interest, disinterest))
}

pub fn experiment_belief_trajectory(
    env: &Environment,
    config: &SimConfig,
    interest: Option<&str>,
    disinterest: Option<&str>,
) -> Result<Trajectory> {
    let user = target_user(env, config)?;
    let (di, dd) = default_categories(env, &user)?;
    let interest = interest.map_or(di, str::to_owned);
    let disinterest = disinterest.map_or(dd, str::to_owned);
    for c in [&interest, &disinterest] {
        if !env.graph.contains(c) {
            return Err(Error::UnknownCategory(c.clone()));
        }
    }
    let run = run_loop(env, config)?;
    let points = run
        .belief_trajectory(&user)
        .into_iter()
        .map(|(step, snap)| TrajectoryPoint {
            step,
            interest: snap.belief.get(&interest).copied().unwrap_or(0.0),
            disinterest: snap.belief.get(&disinterest).copied().unwrap_or(0.0),
        })
        .collect();
    Ok(Trajectory {
        user,
        interest,
        disinterest,
        points,
    })
}

/// Filter-bubble user counts per feed (row 0 is before any feed).
#[derive(Debug, Clone, PartialEq)]
pub struct FbCountTable {
    pub columns: Vec<(Model, Vec<Option<usize>>)>,
}

impl FbCountTable {
    pub fn column(&self, model: Model) -> Option<&[Option<usize>]> {
        self.columns.iter().find(|(m, _)| *m == model).map(|(_, v)| v.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feed");
        for (m, _) in &self.columns {
            out.push(',');
            out.push_str(m.label());
        }
        out.push('\n');
        let rows = self.columns.first().map_or(0, |(_, v)| v.len());
        for r in 0..rows {
            let _ = write!(out, "feed_{r}");
            for (_, v) in &self.columns {
                out.push(',');
                if let Some(n) = v[r] {
                    let _ = write!(out, "{n}");
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn experiment_fb_count(env: &Environment, config: &SimConfig, models: &[Model]) -> Result<FbCountTable> {
    let columns = models
        .iter()
        .map(|&m| Ok((m, run_loop(env, &with_model(config, m))?.fb_counts())))
        .collect::<Result<Vec<_>>>()?;
    Ok(FbCountTable { columns })
}

/// Belief coverage of the target user per step for each mixing weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WSweep {
    pub user: String,
    pub series: Vec<(f64, Vec<f64>)>,
}

impl WSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,series,value\n");
        for (w, values) in &self.series {
            for (step, v) in values.iter().enumerate() {
                let _ = writeln!(out, "{step},w={w},{v:.6}");
            }
        }
        out
    }
}

pub fn experiment_w_sweep(env: &Environment, config: &SimConfig, w_values: &[f64]) -> Result<WSweep> {
    let user = target_user(env, config)?;
    let initial = BeliefNetwork::build_from_history(&env.corpus, &user)?.coverage();
    let series = w_values
        .iter()
        .map(|&w| {
            let run = run_loop(env, &SimConfig { w, ..config.clone() })?;
            let values = std::iter::once(initial)
                .chain(run.user_steps(&user).map(|s| s.belief_coverage))
                .collect();
            Ok((w, values))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WSweep { user, series })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs experiment `n` and writes its CSV files under `out`; returns the
/// written paths.
pub fn run_experiment(n: u8, env: &Environment, config: &SimConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let p = out.join(name);
        write_file(&p, &text)?;
        written.push(p);
        Ok(())
    };
    match n {
        1 => {
            let t = experiment_coverage(env, config)?;
            emit("experiment1_coverage.csv", t.to_csv())?;
            emit("experiment1_coverage_formula.csv", t.formula_csv())?;
        }
        2 => {
            let t = experiment_belief_trajectory(env, config, config.interest.as_deref(), config.disinterest.as_deref())?;
            emit("experiment2_beliefs.csv", t.to_csv())?;
        }
        3 => {
            let t = experiment_fb_count(env, config, &Model::ALL)?;
            emit("experiment3_fb_users.csv", t.to_csv())?;
        }
        4 => {
            let t = experiment_w_sweep(env, config, &config.w_values)?;
            emit("experiment4_w_sweep.csv", t.to_csv())?;
        }
        other => return Err(Error::Config(format!("no experiment {other}; expected 1 to 4"))),
    }
    Ok(written)
}

/// Writes a run's step log, feed log and belief checkpoints under `out`.
pub fn write_run(run: &RunRecord, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let run_path = out.join("run.jsonl");
    write_file(&run_path, &run.to_jsonl()?)?;
    written.push(run_path);
    let feed_path = out.join("feeds.jsonl");
    write_file(&feed_path, &run.feed_log()?)?;
    written.push(feed_path);
    let mut beliefs = String::new();
    for b in &run.initial_beliefs {
        beliefs.push_str(&serde_json::to_string(&serde_json::json!({"step": 0, "snapshot": b}))?);
        beliefs.push('\n');
    }
    for s in &run.steps {
        for u in &s.users {
            if let Some(b) = &u.belief {
                beliefs.push_str(&serde_json::to_string(&serde_json::json!({"step": s.step, "snapshot": b}))?);
                beliefs.push('\n');
            }
        }
    }
    let belief_path = out.join("beliefs.jsonl");
    write_file(&belief_path, &beliefs)?;
    written.push(belief_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BiasProfile, Origin};

    fn small_env(seed: u64) -> (Environment, SimConfig) {
        let spec = SynthSpec::new(20, 17, 4, 1700, BiasProfile::Count(6), seed);
        let config = SimConfig {
            seed,
            feeds: 5,
            ..SimConfig::default()
        };
        (Environment::from_corpus(synth_corpus(&spec).unwrap(), &config).unwrap(), config)
    }

    #[test]
    fn ap_examples() {
        let mut n = BeliefNetwork::new("u", ["A", "B", "C"].map(String::from));
        // B = log2(k) · share with k equal subcategories of equal mass
        for (c, subs) in [("A", 4), ("B", 2), ("C", 2)] {
            for s in 0..subs {
                n.add_mass(c, &format!("{c}/{s}"), 1.0).unwrap();
            }
        }
        let b = n.beliefs();
        let total: f64 = b.values().sum();
        let a = Item::dataset("a", "A", "A/0", vec![], vec![]);
        assert!((acceptance_probability(&a, &n) - b["A"] / total).abs() < 1e-12);

        let mut z = BeliefNetwork::new("u", ["A", "B"].map(String::from));
        z.add_mass("A", "A/0", 1.0).unwrap();
        z.add_mass("A", "A/1", 1.0).unwrap();
        let bi = Item::dataset("b", "B", "B/0", vec![], vec![]);
        assert_eq!(acceptance_probability(&bi, &z), 0.0);
        assert_eq!(acceptance_probability(&a, &BeliefNetwork::new("c", ["A".to_string()])), 0.0);

        let mut gi = a.clone();
        gi.origin = Origin::Generated;
        gi.category_weights = [("A".to_string(), 0.5), ("B".to_string(), 0.5)].into();
        let beliefs: BTreeMap<String, f64> = [("A".to_string(), 2.0), ("B".to_string(), 2.0)].into();
        assert!((belief_share(&gi, &beliefs) - 0.5).abs() < 1e-12);
        let beliefs: BTreeMap<String, f64> =
            [("A".to_string(), 2.0), ("B".to_string(), 1.0), ("C".to_string(), 1.0)].into();
        assert!((belief_share(&a, &beliefs) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decide_follows_the_draw() {
        let mut n = BeliefNetwork::new("u", ["A", "B"].map(String::from));
        n.add_mass("A", "A/0", 1.0).unwrap();
        n.add_mass("A", "A/1", 1.0).unwrap();
        let a = Item::dataset("a", "A", "A/0", vec![], vec![]);
        let b = Item::dataset("b", "B", "B/0", vec![], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            assert!(decide(&a, &n, &mut rng).accepted);
            assert!(!decide(&b, &n, &mut rng).accepted);
        }
        // half the belief mass
        n.add_mass("B", "B/0", 1.0).unwrap();
        n.add_mass("B", "B/1", 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hits = (0..10_000).filter(|_| decide(&a, &n, &mut rng).accepted).count();
        assert!((4800..=5200).contains(&hits), "{hits}");
        let d = decide(&a, &n, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(d.accepted, d.draw < d.ap);
    }

    #[test]
    fn streams_are_independent_of_population() {
        assert_eq!(stream_seed(1, "u", 3, 1), stream_seed(1, "u", 3, 1));
        assert_ne!(stream_seed(1, "u", 3, 1), stream_seed(1, "u", 3, 2));
        assert_ne!(stream_seed(1, "u", 3, 1), stream_seed(1, "v", 3, 1));
        assert_ne!(stream_seed(1, "u", 3, 1), stream_seed(2, "u", 3, 1));
    }

    #[test]
    fn config_parsing_and_validation() {
        let c = SimConfig::from_toml("model = \"uc_w\"\nw = 0.4\ntheta = \"inf\"\nfeeds = 30\n").unwrap();
        assert_eq!(c.model, Model::UcW);
        assert_eq!(c.theta, Theta(None));
        assert_eq!(c.checkpoint_steps(), [0, 10, 20, 30]);
        assert!(SimConfig::from_toml("bogus = 1").is_err());
        assert!(SimConfig { w: 1.5, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { feeds: 0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { theta: Theta(Some(0)), ..SimConfig::default() }.validate().is_err());
        assert_eq!(SimConfig::default().checkpoint_steps().len(), 11);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let (env, config) = small_env(3);
        for model in [Model::CbW, Model::UcW, Model::Rd] {
            let par = run_loop(&env, &SimConfig { model, parallel: true, ..config.clone() }).unwrap();
            let seq = run_loop(&env, &SimConfig { model, parallel: false, ..config.clone() }).unwrap();
            assert_eq!(par, seq);
            assert_eq!(par.steps.len(), config.feeds);
        }
    }

    #[test]
    fn w_zero_matches_the_baseline() {
        let (env, config) = small_env(5);
        let cb = run_loop(&env, &SimConfig { model: Model::Cb, ..config.clone() }).unwrap();
        let mixed = run_loop(&env, &SimConfig { model: Model::CbW, w: 0.0, ..config.clone() }).unwrap();
        for (a, b) in cb.steps.iter().zip(&mixed.steps) {
            for (x, y) in a.users.iter().zip(&b.users) {
                assert_eq!(x.items, y.items);
                assert_eq!(x.decisions, y.decisions);
                assert_eq!(x.belief_coverage, y.belief_coverage);
            }
        }
    }

    #[test]
    fn mixed_feeds_carry_generated_items() {
        let (env, config) = small_env(7);
        let run = run_loop(&env, &config).unwrap();
        let fb = run.initial_fb_users.clone().unwrap();
        assert!(!fb.is_empty());
        let first = run.steps[0].users.iter().find(|u| u.user == fb[0]).unwrap();
        assert_eq!(first.generated_count, 6);
        assert!(first.session.is_some());
        for s in &run.steps {
            for u in &s.users {
                assert_eq!(u.items.len(), config.k);
                for d in &u.decisions {
                    assert!((0.0..=1.0).contains(&d.ap));
                }
            }
        }
    }
}
