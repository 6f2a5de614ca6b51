//! Nudge sessions: a queue of prompt paths that is split in half whenever
//! the user turns a generated item down, plus the item generators.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefNetwork;
use crate::corpus::{Corpus, Item, Origin};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::pathfinder::{PromptPath, RejectionLedger, Reschedule, Rescheduler};

const TOP_TERMS: usize = 8;
const SNIPPETS: usize = 2;

/// Literal halving of a node list. Length 2 is terminal (`None`). Odd
/// lengths drop the middle node; a half left with one node borrows its
/// neighbour from the parent (left half extends right, right half extends
/// left).
pub fn split_nodes<T: Clone>(nodes: &[T]) -> Result<Option<(Vec<T>, Vec<T>)>> {
    let len = nodes.len();
    if len < 2 {
        return Err(Error::InvalidInput(format!("cannot split a path of length {len}")));
    }
    if len == 2 {
        return Ok(None);
    }
    let (left, right) = if len % 2 == 1 {
        (0..(len - 1) / 2, len.div_ceil(2)..len)
    } else {
        (0..len / 2, len / 2..len)
    };
    let left = if left.len() == 1 { 0..2 } else { left };
    let right = if right.len() == 1 { len - 2..len } else { right };
    Ok(Some((nodes[left].to_vec(), nodes[right].to_vec())))
}

pub fn binary_split(prompt: &PromptPath) -> Result<Option<(PromptPath, PromptPath)>> {
    match split_nodes(prompt.nodes())? {
        None => Ok(None),
        Some((a, b)) => Ok(Some((PromptPath::new(a)?, PromptPath::new(b)?))),
    }
}

/// A queue seeded from a fresh path: its two halves, or the path itself
/// when it cannot be split.
pub fn initial_queue(path: &PromptPath) -> VecDeque<PromptPath> {
    match binary_split(path).expect("paths have at least two nodes") {
        Some((a, b)) => VecDeque::from([a, b]),
        None => VecDeque::from([path.clone()]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedItem {
    pub item: Item,
    pub prompt_key: String,
}

/// Produces one generated item for a prompt.
pub trait GeneratorPort: Send + Sync {
    fn generate(&self, prompt: &PromptPath, seed: u64) -> Result<GeneratedItem>;
}

fn uniform_weights(nodes: &[String]) -> BTreeMap<String, f64> {
    let w = 1.0 / nodes.len() as f64;
    nodes.iter().map(|c| (c.clone(), w)).collect()
}

fn generated_item(nodes: &[String], seed: u64, title: Vec<String>, abstract_text: Vec<String>) -> GeneratedItem {
    let key = nodes.join(">");
    GeneratedItem {
        item: Item {
            id: format!("G:{key}:{seed:016x}"),
            category: nodes[0].clone(),
            subcategory: format!("{}/generated", nodes[0]),
            title,
            abstract_text,
            category_weights: uniform_weights(nodes),
            origin: Origin::Generated,
        },
        prompt_key: key,
    }
}

/// Deterministic template generator: every prompt category contributes its
/// name and top TF-IDF terms from its exemplar items.
#[derive(Debug, Clone, Default)]
pub struct TemplateGenerator {
    top_terms: BTreeMap<String, Vec<String>>,
    snippets: BTreeMap<String, Vec<String>>,
}

impl TemplateGenerator {
    pub fn new(top_terms: BTreeMap<String, Vec<String>>) -> Self {
        TemplateGenerator {
            top_terms,
            snippets: BTreeMap::new(),
        }
    }

    /// Ranks each category's terms by summed TF-IDF weight over its dataset
    /// items. Category labels themselves are skipped.
    pub fn from_corpus(
        corpus: &Corpus,
        vectors: &[FeatureVector],
        term: impl Fn(u32) -> Option<String>,
    ) -> Self {
        let categories = corpus.categories();
        let mut sums: BTreeMap<&str, BTreeMap<u32, f64>> = BTreeMap::new();
        let mut snippets: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (item, v) in corpus.items().iter().zip(vectors) {
            if item.is_generated() {
                continue;
            }
            let acc = sums.entry(item.category.as_str()).or_default();
            for &(t, w) in v.entries() {
                *acc.entry(t).or_insert(0.0) += w;
            }
            let s = snippets.entry(item.category.clone()).or_default();
            if s.len() < SNIPPETS {
                s.push(item.title.join(" "));
            }
        }
        let names: std::collections::BTreeSet<String> =
            categories.iter().map(|c| c.to_lowercase()).collect();
        let mut top_terms = BTreeMap::new();
        for c in &categories {
            let mut ranked: Vec<(String, f64)> = sums
                .get(c.as_str())
                .into_iter()
                .flatten()
                .filter_map(|(t, w)| term(*t).map(|s| (s, *w)))
                .filter(|(s, _)| !names.contains(s))
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            top_terms.insert(
                c.clone(),
                ranked.into_iter().take(TOP_TERMS).map(|(s, _)| s).collect(),
            );
        }
        TemplateGenerator {
            top_terms,
            snippets,
        }
    }

    pub fn top_terms(&self, category: &str) -> &[String] {
        self.top_terms.get(category).map_or(&[], Vec::as_slice)
    }

    pub fn snippets(&self, category: &str) -> &[String] {
        self.snippets.get(category).map_or(&[], Vec::as_slice)
    }

    /// Generates from raw nodes; fewer than two nodes is an error.
    pub fn generate_nodes(&self, nodes: &[String], seed: u64) -> Result<GeneratedItem> {
        if nodes.len() < 2 {
            return Err(Error::Generator(format!(
                "prompt needs two categories, got {}",
                nodes.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut title = Vec::new();
        let mut abstract_text = Vec::new();
        for c in nodes {
            let terms = self.top_terms(c);
            title.push(c.clone());
            title.extend(terms.first().cloned());
            abstract_text.push(c.clone());
            abstract_text.extend(terms.iter().take(2).cloned());
            let mut rest: Vec<&String> = terms.iter().skip(2).collect();
            rest.shuffle(&mut rng);
            abstract_text.extend(rest.into_iter().take(2).cloned());
        }
        Ok(generated_item(nodes, seed, title, abstract_text))
    }
}

impl GeneratorPort for TemplateGenerator {
    fn generate(&self, prompt: &PromptPath, seed: u64) -> Result<GeneratedItem> {
        self.generate_nodes(prompt.nodes(), seed)
    }
}

#[derive(Debug, Clone, Serialize)]
struct GenerationRequest<'a> {
    prompt_categories: &'a [String],
    exemplar_snippets: Vec<String>,
    max_tokens: u32,
}

#[derive(Debug, Clone, Deserialize)]
struct GenerationResponse {
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
}

/// Posts prompts to an HTTP text-generation endpoint, falling back to the
/// template generator when the endpoint fails.
pub struct ExternalGenerator {
    url: String,
    retries: u32,
    max_tokens: u32,
    agent: ureq::Agent,
    fallback: TemplateGenerator,
    fallbacks: AtomicUsize,
}

impl ExternalGenerator {
    pub fn new(url: impl Into<String>, timeout: Duration, retries: u32, fallback: TemplateGenerator) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        ExternalGenerator {
            url: url.into(),
            retries,
            max_tokens: 128,
            agent,
            fallback,
            fallbacks: AtomicUsize::new(0),
        }
    }

    /// How many generations used the template fallback.
    pub fn fallback_count(&self) -> usize {
        self.fallbacks.load(Ordering::Relaxed)
    }

    fn request(&self, prompt: &PromptPath) -> Result<GenerationResponse> {
        let body = GenerationRequest {
            prompt_categories: prompt.nodes(),
            exemplar_snippets: prompt
                .nodes()
                .iter()
                .flat_map(|c| self.fallback.snippets(c).iter().cloned())
                .collect(),
            max_tokens: self.max_tokens,
        };
        let mut last = String::new();
        for _ in 0..=self.retries {
            let attempt = self
                .agent
                .post(&self.url)
                .send_json(&body)
                .and_then(|mut r| r.body_mut().read_json::<GenerationResponse>());
            match attempt {
                Ok(r) => return Ok(r),
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Generator(last))
    }
}

impl GeneratorPort for ExternalGenerator {
    fn generate(&self, prompt: &PromptPath, seed: u64) -> Result<GeneratedItem> {
        match self.request(prompt) {
            Ok(r) => {
                let words = |s: &str| s.split_whitespace().map(str::to_owned).collect::<Vec<_>>();
                Ok(generated_item(
                    prompt.nodes(),
                    seed,
                    words(&r.title),
                    words(&r.abstract_text),
                ))
            }
            Err(e) => {
                self.fallbacks.fetch_add(1, Ordering::Relaxed);
                log::warn!("generator endpoint {} failed ({e}); using template", self.url);
                self.fallback.generate(prompt, seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Session-local sequence number.
    pub seq: usize,
    /// Feed the item was shown in.
    pub feed: usize,
    pub prompt: String,
    pub item_id: String,
    pub accepted: bool,
}

/// What a feedback call changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Feedback {
    /// Accepted item to be merged into the category graph.
    pub accepted_item: Option<Item>,
    pub rescheduled: bool,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NudgeSession {
    user_id: String,
    path: PromptPath,
    queue: VecDeque<PromptPath>,
    ledger: RejectionLedger,
    history: Vec<HistoryEntry>,
    terminal: bool,
    generations: usize,
}

impl NudgeSession {
    pub fn new(user_id: impl Into<String>, path: PromptPath, ledger: RejectionLedger) -> Self {
        NudgeSession {
            user_id: user_id.into(),
            queue: initial_queue(&path),
            path,
            ledger,
            history: Vec::new(),
            terminal: false,
            generations: 0,
        }
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn path(&self) -> &PromptPath {
        &self.path
    }

    pub fn queue(&self) -> &VecDeque<PromptPath> {
        &self.queue
    }

    pub fn head(&self) -> Option<&PromptPath> {
        self.queue.front()
    }

    pub fn ledger(&self) -> &RejectionLedger {
        &self.ledger
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    /// Number of generated items produced so far.
    pub fn generations(&self) -> usize {
        self.generations
    }

    /// Generates an item for the head prompt without consuming it.
    pub fn run_step(&mut self, generator: &dyn GeneratorPort, seed: u64) -> Result<GeneratedItem> {
        self.generate_at(0, generator, seed)
    }

    /// Generates an item for the queued prompt at `index`.
    pub fn generate_at(
        &mut self,
        index: usize,
        generator: &dyn GeneratorPort,
        seed: u64,
    ) -> Result<GeneratedItem> {
        let prompt = self.queue.get(index).ok_or(Error::EmptyQueue)?;
        let gi = generator.generate(prompt, seed)?;
        if gi.item.category_weights.len() != prompt.len()
            || prompt.nodes().iter().any(|c| !gi.item.category_weights.contains_key(c))
        {
            return Err(Error::Generator(format!(
                "generated item does not span prompt {}",
                prompt.key()
            )));
        }
        self.generations += 1;
        Ok(gi)
    }

    /// Moves a queued prompt to the head; false when it is not queued.
    pub fn promote(&mut self, key: &str) -> bool {
        match self.queue.iter().position(|p| p.key() == key) {
            Some(0) => true,
            Some(i) => {
                let p = self.queue.remove(i).expect("index in range");
                self.queue.push_front(p);
                true
            }
            None => false,
        }
    }

    fn record(&mut self, gi: &GeneratedItem, accepted: bool, feed: usize) {
        self.history.push(HistoryEntry {
            seq: self.history.len(),
            feed,
            prompt: gi.prompt_key.clone(),
            item_id: gi.item.id.clone(),
            accepted,
        });
    }

    /// Replaces the queue with a freshly planned path, or ends the session.
    pub fn replan(&mut self, network: &BeliefNetwork, planner: &dyn Rescheduler) -> bool {
        match planner.reschedule(network, &self.ledger, Some(&self.path)) {
            Reschedule::Path(p) => {
                self.queue = initial_queue(&p);
                self.path = p;
                true
            }
            Reschedule::Terminal => {
                self.queue.clear();
                self.terminal = true;
                false
            }
        }
    }

    /// Applies the user's reaction to the item generated for the head
    /// prompt.
    pub fn apply_feedback(
        &mut self,
        gi: &GeneratedItem,
        accepted: bool,
        network: &mut BeliefNetwork,
        planner: &dyn Rescheduler,
        feed: usize,
    ) -> Result<Feedback> {
        let head = self.queue.front().ok_or(Error::EmptyQueue)?;
        if head.key() != gi.prompt_key {
            return Err(Error::PromptMismatch {
                expected: head.key(),
                got: gi.prompt_key.clone(),
            });
        }
        let prompt = self.queue.pop_front().expect("head checked");
        self.record(gi, accepted, feed);
        let mut out = Feedback::default();
        if accepted {
            network.update_on_feedback(&gi.item, true, None)?;
            out.accepted_item = Some(gi.item.clone());
            return Ok(out);
        }
        network.update_on_feedback(&gi.item, false, Some(&gi.prompt_key))?;
        self.ledger.record_rejection(&prompt);
        match binary_split(&prompt)? {
            Some((a, b)) => {
                self.queue.push_front(b);
                self.queue.push_front(a);
            }
            None => {
                out.rescheduled = true;
                out.terminal = !self.replan(network, planner);
            }
        }
        Ok(out)
    }

    /// Feedback on an item whose prompt has already left the queue: beliefs
    /// and the rejection ledger still learn from it, the queue does not.
    pub fn apply_stale(
        &mut self,
        gi: &GeneratedItem,
        accepted: bool,
        network: &mut BeliefNetwork,
        feed: usize,
    ) -> Result<Feedback> {
        self.record(gi, accepted, feed);
        let mut out = Feedback::default();
        if accepted {
            network.update_on_feedback(&gi.item, true, None)?;
            out.accepted_item = Some(gi.item.clone());
        } else {
            network.update_on_feedback(&gi.item, false, Some(&gi.prompt_key))?;
            let prompt = PromptPath::new(gi.prompt_key.split('>').map(str::to_owned).collect())?;
            self.ledger.record_rejection(&prompt);
        }
        Ok(out)
    }

    /// Routes feedback to the head, a promoted queued prompt, or the stale
    /// path.
    pub fn feedback(
        &mut self,
        gi: &GeneratedItem,
        accepted: bool,
        network: &mut BeliefNetwork,
        planner: &dyn Rescheduler,
        feed: usize,
    ) -> Result<Feedback> {
        if !self.terminal && self.promote(&gi.prompt_key) {
            self.apply_feedback(gi, accepted, network, planner, feed)
        } else {
            self.apply_stale(gi, accepted, network, feed)
        }
    }
}
