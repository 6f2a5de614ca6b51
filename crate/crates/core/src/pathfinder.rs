//! Greedy prompt-path exploration over the category graph.
//!
//! From the current node, every unvisited category `n` is scored as
//! `ρ(current, n) + B(n) · rej_w`, where `rej_w` is −1 on edges the user has
//! rejected more than θ times and +1 otherwise. The best candidate becomes
//! the next node. Ties go to the lexicographically smallest category.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::belief::BeliefNetwork;
use crate::error::{Error, Result};
use crate::features::CategoryGraph;
use crate::fbdmr::UserClass;

pub const DEFAULT_THETA: u32 = 2;

const KEY_SEPARATOR: &str = ">";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PromptPath {
    nodes: Vec<String>,
}

impl PromptPath {
    /// A path of at least two pairwise distinct categories.
    pub fn new(nodes: Vec<String>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "prompt path needs two nodes, got {}",
                nodes.len()
            )));
        }
        let distinct: BTreeSet<&String> = nodes.iter().collect();
        if distinct.len() != nodes.len() {
            return Err(Error::InvalidInput(format!(
                "prompt path repeats a node: {}",
                nodes.join(KEY_SEPARATOR)
            )));
        }
        Ok(PromptPath { nodes })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn source(&self) -> &str {
        &self.nodes[0]
    }

    pub fn target(&self) -> &str {
        self.nodes.last().expect("nonempty")
    }

    pub fn key(&self) -> String {
        self.nodes.join(KEY_SEPARATOR)
    }

    /// Consecutive node pairs.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.nodes
            .windows(2)
            .map(|w| (w[0].as_str(), w[1].as_str()))
    }
}

impl TryFrom<Vec<String>> for PromptPath {
    type Error = Error;
    fn try_from(nodes: Vec<String>) -> Result<Self> {
        PromptPath::new(nodes)
    }
}

impl From<PromptPath> for Vec<String> {
    fn from(p: PromptPath) -> Self {
        p.nodes
    }
}

impl std::fmt::Display for PromptPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.key())
    }
}

fn undirected(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// Rejection counts per prompt and the edges they have penalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionLedger {
    counts: BTreeMap<String, u32>,
    /// `None` means never penalise.
    theta: Option<u32>,
    penalized: BTreeSet<(String, String)>,
}

impl Default for RejectionLedger {
    fn default() -> Self {
        RejectionLedger::new(DEFAULT_THETA)
    }
}

impl RejectionLedger {
    pub fn new(theta: u32) -> Self {
        RejectionLedger {
            counts: BTreeMap::new(),
            theta: Some(theta),
            penalized: BTreeSet::new(),
        }
    }

    /// A ledger with θ = ∞.
    pub fn unbounded() -> Self {
        RejectionLedger {
            theta: None,
            ..RejectionLedger::new(0)
        }
    }

    pub fn theta(&self) -> Option<u32> {
        self.theta
    }

    pub fn count(&self, key: &str) -> u32 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn penalized_edges(&self) -> &BTreeSet<(String, String)> {
        &self.penalized
    }

    pub fn is_penalized(&self, a: &str, b: &str) -> bool {
        self.penalized.contains(&undirected(a, b))
    }

    pub fn rej_w(&self, a: &str, b: &str) -> f64 {
        if self.is_penalized(a, b) {
            -1.0
        } else {
            1.0
        }
    }

    /// Counts one rejection; returns true when this pushed the prompt past θ.
    pub fn record_rejection(&mut self, prompt: &PromptPath) -> bool {
        let count = self.counts.entry(prompt.key()).or_insert(0);
        *count += 1;
        match self.theta {
            Some(theta) if *count > theta => {
                for (a, b) in prompt.edges() {
                    self.penalized.insert(undirected(a, b));
                }
                *count == theta + 1
            }
            _ => false,
        }
    }

    pub fn path_is_penalized(&self, path: &PromptPath) -> bool {
        path.edges().any(|(a, b)| self.is_penalized(a, b))
    }
}

/// Picks the highest-belief extreme-high category as source and the
/// lowest-belief extreme-low category as target.
pub fn select_endpoints(
    network: &BeliefNetwork,
    classes: &BTreeMap<String, UserClass>,
) -> Result<(String, String)> {
    let beliefs = network.beliefs();
    let pick = |class: UserClass, better: fn(f64, f64) -> bool| {
        classes
            .iter()
            .filter(|(_, k)| **k == class)
            .map(|(c, _)| (c, beliefs.get(c).copied().unwrap_or(0.0)))
            // classes iterate lexicographically, so only a strict win replaces
            .fold(None::<(&String, f64)>, |best, (c, b)| match best {
                Some((_, bb)) if !better(b, bb) => best,
                _ => Some((c, b)),
            })
            .map(|(c, _)| c.clone())
    };
    match (
        pick(UserClass::ExtremeHigh, |a, b| a > b),
        pick(UserClass::ExtremeLow, |a, b| a < b),
    ) {
        (Some(s), Some(t)) => Ok((s, t)),
        _ => Err(Error::NotAffected(network.user_id().to_owned())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub category: String,
    pub rho: f64,
    pub belief: f64,
    pub rej_w: f64,
    pub score: f64,
}

/// Scores every unvisited graph category from `current`, in lexicographic
/// order.
pub fn score_candidates(
    graph: &CategoryGraph,
    current: &str,
    network: &BeliefNetwork,
    ledger: &RejectionLedger,
    visited: &BTreeSet<String>,
) -> Vec<Candidate> {
    let beliefs = network.beliefs();
    graph
        .categories()
        .filter(|c| *c != current && !visited.contains(*c))
        .map(|c| {
            let rho = graph.rho(current, c);
            let belief = beliefs.get(c).copied().unwrap_or(0.0);
            let rej_w = ledger.rej_w(current, c);
            Candidate {
                category: c.to_owned(),
                rho,
                belief,
                rej_w,
                score: rho + belief * rej_w,
            }
        })
        .collect()
}

fn best(candidates: &[Candidate]) -> Option<&Candidate> {
    candidates.iter().fold(None, |best: Option<&Candidate>, c| match best {
        Some(b) if b.score >= c.score => best,
        _ => Some(c),
    })
}

/// The next node of a walk.
pub fn next_hop(
    graph: &CategoryGraph,
    current: &str,
    network: &BeliefNetwork,
    ledger: &RejectionLedger,
    visited: &BTreeSet<String>,
) -> Result<String> {
    let candidates = score_candidates(graph, current, network, ledger, visited);
    best(&candidates)
        .map(|c| c.category.clone())
        .ok_or_else(|| Error::NoCandidate(current.to_owned()))
}

/// One hop of an exploration, for audit logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopTrace {
    pub step: usize,
    pub current: String,
    pub candidates: Vec<Candidate>,
    pub chosen: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExploreOptions {
    /// Maximum nodes before the target is force-appended; defaults to the
    /// number of graph categories.
    pub max_len: Option<usize>,
    /// Treat penalised edges as absent instead of down-weighting them.
    pub avoid_penalized: bool,
}

/// Greedy walk from `source` towards `target`.
pub fn explore(
    graph: &CategoryGraph,
    source: &str,
    target: &str,
    network: &BeliefNetwork,
    ledger: &RejectionLedger,
) -> Result<PromptPath> {
    explore_with(graph, source, target, network, ledger, ExploreOptions::default(), None)
}

pub fn explore_with(
    graph: &CategoryGraph,
    source: &str,
    target: &str,
    network: &BeliefNetwork,
    ledger: &RejectionLedger,
    options: ExploreOptions,
    mut trace: Option<&mut Vec<HopTrace>>,
) -> Result<PromptPath> {
    if source == target {
        return Err(Error::InvalidInput(format!(
            "path source and target are both `{source}`"
        )));
    }
    for c in [source, target] {
        if !graph.contains(c) {
            return Err(Error::UnknownCategory(c.to_owned()));
        }
    }
    let max_len = options.max_len.unwrap_or(graph.len()).max(1);
    let mut path = vec![source.to_owned()];
    let mut visited = BTreeSet::from([source.to_owned()]);
    let mut step = 0;
    loop {
        let current = path.last().expect("nonempty").clone();
        if path.len() >= max_len {
            if options.avoid_penalized && ledger.is_penalized(&current, target) {
                return Err(Error::NoCandidate(current));
            }
            path.push(target.to_owned());
            break;
        }
        let mut candidates = score_candidates(graph, &current, network, ledger, &visited);
        if options.avoid_penalized {
            candidates.retain(|c| c.rej_w > 0.0);
        }
        let chosen = best(&candidates)
            .map(|c| c.category.clone())
            .ok_or_else(|| Error::NoCandidate(current.clone()))?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(HopTrace {
                step,
                current: current.clone(),
                candidates,
                chosen: chosen.clone(),
            });
        }
        step += 1;
        visited.insert(chosen.clone());
        path.push(chosen.clone());
        if chosen == target {
            break;
        }
    }
    PromptPath::new(path)
}

/// Outcome of replanning after an exhausted prompt.
#[derive(Debug, Clone, PartialEq)]
pub enum Reschedule {
    Path(PromptPath),
    /// No usable path remains; the session ends.
    Terminal,
}

/// Replans a path on the current graph and ledger. When the plain greedy
/// walk crosses a penalised edge, the walk is retried with penalised edges
/// removed; if that fails the session is terminal.
pub fn reschedule(
    graph: &CategoryGraph,
    network: &BeliefNetwork,
    ledger: &RejectionLedger,
    classes: &BTreeMap<String, UserClass>,
) -> Reschedule {
    match select_endpoints(network, classes) {
        Ok((source, target)) => reschedule_between(graph, network, ledger, &source, &target),
        Err(_) => Reschedule::Terminal,
    }
}

/// [`reschedule`] with fixed endpoints.
pub fn reschedule_between(
    graph: &CategoryGraph,
    network: &BeliefNetwork,
    ledger: &RejectionLedger,
    source: &str,
    target: &str,
) -> Reschedule {
    let Ok(path) = explore(graph, source, target, network, ledger) else {
        return Reschedule::Terminal;
    };
    if !ledger.path_is_penalized(&path) {
        return Reschedule::Path(path);
    }
    let options = ExploreOptions {
        avoid_penalized: true,
        ..Default::default()
    };
    match explore_with(graph, source, target, network, ledger, options, None) {
        Ok(p) => Reschedule::Path(p),
        Err(_) => Reschedule::Terminal,
    }
}

/// Replanning hook used by nudge sessions.
pub trait Rescheduler {
    fn reschedule(
        &self,
        network: &BeliefNetwork,
        ledger: &RejectionLedger,
        previous: Option<&PromptPath>,
    ) -> Reschedule;
}

/// Replans on a category graph using the user's current classes. When the
/// user no longer has both extreme classes, the previous path's endpoints
/// are kept.
pub struct GraphPlanner<'a> {
    pub graph: &'a CategoryGraph,
    pub classes: Option<&'a BTreeMap<String, UserClass>>,
}

impl Rescheduler for GraphPlanner<'_> {
    fn reschedule(
        &self,
        network: &BeliefNetwork,
        ledger: &RejectionLedger,
        previous: Option<&PromptPath>,
    ) -> Reschedule {
        let endpoints = self
            .classes
            .and_then(|cl| select_endpoints(network, cl).ok())
            .or_else(|| previous.map(|p| (p.source().to_owned(), p.target().to_owned())));
        match endpoints {
            Some((s, t)) => reschedule_between(self.graph, network, ledger, &s, &t),
            None => Reschedule::Terminal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Item;
    use crate::features::FeatureVector;
    use proptest::prelude::*;

    pub(crate) fn graph_from(cats: &[&str], vecs: &[Vec<(u32, f64)>]) -> CategoryGraph {
        let items: Vec<Item> = cats
            .iter()
            .map(|c| Item::dataset(format!("i-{c}"), *c, format!("{c}/s"), vec![], vec![]))
            .collect();
        let vs: Vec<FeatureVector> = vecs
            .iter()
            .map(|v| FeatureVector::from_pairs(v.iter().copied()))
            .collect();
        CategoryGraph::build(
            cats.iter().map(|c| (*c).to_owned()),
            items.iter().zip(vs.iter()),
        )
        .unwrap()
    }

    fn net_with(beliefs: &[(&str, &[f64])], cats: &[&str]) -> BeliefNetwork {
        // belief = log2(k) * share for k equal subcategories of equal mass
        let mut n = BeliefNetwork::new("u", cats.iter().map(|c| (*c).to_owned()));
        for (c, masses) in beliefs {
            for (i, m) in masses.iter().enumerate() {
                n.add_mass(c, &format!("{c}/{i}"), *m).unwrap();
            }
        }
        n
    }

    fn classes(pairs: &[(&str, UserClass)]) -> BTreeMap<String, UserClass> {
        pairs.iter().map(|(c, k)| ((*c).to_owned(), *k)).collect()
    }

    #[test]
    fn path_invariants() {
        assert!(PromptPath::new(vec!["a".into()]).is_err());
        assert!(PromptPath::new(vec!["a".into(), "a".into()]).is_err());
        let p = PromptPath::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert_eq!(p.key(), "a>b>c");
        assert_eq!(p.edges().count(), 2);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<PromptPath>(&json).unwrap(), p);
    }

    #[test]
    fn ledger_penalises_past_theta() {
        let p = PromptPath::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let mut l = RejectionLedger::new(2);
        assert!(!l.record_rejection(&p));
        assert!(!l.record_rejection(&p));
        assert!(!l.is_penalized("a", "b"));
        assert!(l.record_rejection(&p));
        assert!(l.is_penalized("b", "a"));
        assert!(l.is_penalized("c", "b"));
        let mut inf = RejectionLedger::unbounded();
        for _ in 0..100 {
            inf.record_rejection(&p);
        }
        assert!(inf.penalized_edges().is_empty());
    }

    #[test]
    fn endpoints_from_classes() {
        let cats = ["autos", "news", "sports"];
        // autos: 2.39 bits, news: low, sports: 1 bit
        let n = net_with(
            &[
                ("autos", &[1.0; 6]),
                ("news", &[1.0]),
                ("sports", &[1.0, 1.0]),
            ],
            &cats,
        );
        let cl = classes(&[
            ("autos", UserClass::ExtremeHigh),
            ("news", UserClass::ExtremeLow),
            ("sports", UserClass::Normal),
        ]);
        assert_eq!(
            select_endpoints(&n, &cl).unwrap(),
            ("autos".to_owned(), "news".to_owned())
        );
        let tie = classes(&[
            ("autos", UserClass::ExtremeHigh),
            ("travel", UserClass::ExtremeLow),
            ("movies", UserClass::ExtremeLow),
        ]);
        assert_eq!(select_endpoints(&n, &tie).unwrap().1, "movies");
        let normal = classes(&[("autos", UserClass::Normal)]);
        assert!(matches!(select_endpoints(&n, &normal), Err(Error::NotAffected(_))));
    }

    /// Graph with ρ(A,B) = 0.9 and ρ(A,C) = 0.1 and equal beliefs in B, C.
    fn eq7_fixture() -> (CategoryGraph, BeliefNetwork) {
        let s = (1.0f64 - 0.81).sqrt();
        let t = (1.0f64 - 0.01).sqrt();
        let g = graph_from(
            &["A", "B", "C"],
            &[vec![(0, 1.0)], vec![(0, 0.9), (1, s)], vec![(0, 0.1), (2, t)]],
        );
        // B and C each get 0.5 bits: two subcategories of 1/4 and 1/4... use
        // direct masses and read the beliefs back.
        let n = net_with(&[("B", &[1.0]), ("C", &[1.0])], &["A", "B", "C"]);
        (g, n)
    }

    #[test]
    fn next_hop_hand_cases() {
        let (g, n) = eq7_fixture();
        assert!((g.rho("A", "B") - 0.9).abs() < 1e-9);
        assert!((g.rho("A", "C") - 0.1).abs() < 1e-9);
        let b = n.belief_degree("B").unwrap();
        assert!((b - 0.5).abs() < 1e-12);
        let visited = BTreeSet::from(["A".to_owned()]);
        let mut ledger = RejectionLedger::new(0);
        assert_eq!(next_hop(&g, "A", &n, &ledger, &visited).unwrap(), "B");
        ledger.record_rejection(&PromptPath::new(vec!["A".into(), "B".into()]).unwrap());
        assert_eq!(next_hop(&g, "A", &n, &ledger, &visited).unwrap(), "C");
        let only_c = BTreeSet::from(["A".to_owned(), "B".to_owned()]);
        assert_eq!(next_hop(&g, "A", &n, &ledger, &only_c).unwrap(), "C");
        let all = BTreeSet::from(["A".to_owned(), "B".to_owned(), "C".to_owned()]);
        assert!(matches!(next_hop(&g, "A", &n, &ledger, &all), Err(Error::NoCandidate(_))));
    }

    #[test]
    fn explore_chain() {
        // S-M strongly tied, M-T strongly tied, S-T weakly
        let g = graph_from(
            &["M", "S", "T"],
            &[vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0)], vec![(1, 1.0), (2, 0.2)]],
        );
        let n = BeliefNetwork::new("u", ["M", "S", "T"].map(String::from));
        let p = explore(&g, "S", "T", &n, &RejectionLedger::default()).unwrap();
        assert_eq!(p.key(), "S>M>T");
        let two = graph_from(&["S", "T"], &[vec![(0, 1.0)], vec![(1, 1.0)]]);
        let n2 = BeliefNetwork::new("u", ["S", "T"].map(String::from));
        assert_eq!(explore(&two, "S", "T", &n2, &RejectionLedger::default()).unwrap().key(), "S>T");
        assert!(explore(&two, "S", "S", &n2, &RejectionLedger::default()).is_err());
    }

    #[test]
    fn truncation_appends_target() {
        let g = graph_from(
            &["a", "b", "c", "d"],
            &[vec![(0, 1.0)], vec![(0, 1.0), (1, 0.1)], vec![(0, 1.0), (2, 0.1)], vec![(3, 1.0)]],
        );
        let n = BeliefNetwork::new("u", ["a", "b", "c", "d"].map(String::from));
        let opts = ExploreOptions {
            max_len: Some(2),
            ..Default::default()
        };
        let p = explore_with(&g, "a", "d", &n, &RejectionLedger::default(), opts, None).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.target(), "d");
    }

    #[test]
    fn reschedule_cases() {
        let two = graph_from(&["S", "T"], &[vec![(0, 1.0)], vec![(0, 1.0), (1, 1.0)]]);
        let n2 = net_with(&[("S", &[1.0, 1.0])], &["S", "T"]);
        let cl2 = classes(&[("S", UserClass::ExtremeHigh), ("T", UserClass::ExtremeLow)]);
        let mut ledger = RejectionLedger::new(0);
        let sole = match reschedule(&two, &n2, &ledger, &cl2) {
            Reschedule::Path(p) => p,
            Reschedule::Terminal => panic!("path expected"),
        };
        assert_eq!(sole.key(), "S>T");
        ledger.record_rejection(&sole);
        assert_eq!(reschedule(&two, &n2, &ledger, &cl2), Reschedule::Terminal);

        // direct S-T edge is the greedy choice until penalised
        let g = graph_from(
            &["M", "N", "S", "T"],
            &[
                vec![(0, 1.0), (1, 1.0)],
                vec![(3, 1.0)],
                vec![(0, 1.0), (2, 2.0)],
                vec![(1, 1.0), (2, 1.0)],
            ],
        );
        let n = net_with(&[("S", &[1.0, 1.0])], &["M", "N", "S", "T"]);
        let cl = classes(&[("S", UserClass::ExtremeHigh), ("T", UserClass::ExtremeLow)]);
        let mut ledger = RejectionLedger::new(0);
        let first = match reschedule(&g, &n, &ledger, &cl) {
            Reschedule::Path(p) => p,
            Reschedule::Terminal => panic!(),
        };
        assert_eq!(first.key(), "S>T");
        assert_eq!(reschedule(&g, &n, &ledger, &cl), Reschedule::Path(first.clone()));
        ledger.record_rejection(&first);
        match reschedule(&g, &n, &ledger, &cl) {
            Reschedule::Path(p) => {
                assert_eq!(p.key(), "S>M>T");
                assert!(!ledger.path_is_penalized(&p));
            }
            Reschedule::Terminal => panic!("alternative exists"),
        }
    }

    fn brute_next(
        g: &CategoryGraph,
        current: &str,
        n: &BeliefNetwork,
        l: &RejectionLedger,
        visited: &BTreeSet<String>,
    ) -> Option<String> {
        let mut best: Option<(String, f64)> = None;
        let mut cats: Vec<&str> = g.categories().collect();
        cats.sort();
        for c in cats {
            if c == current || visited.contains(c) {
                continue;
            }
            let w = if l.is_penalized(current, c) { -1.0 } else { 1.0 };
            let s = g.rho(current, c) + n.belief_degree(c).unwrap() * w;
            if best.as_ref().is_none_or(|(_, bs)| s > *bs) {
                best = Some((c.to_owned(), s));
            }
        }
        best.map(|(c, _)| c)
    }

    proptest! {
        #[test]
        fn next_hop_is_argmax(
            n_nodes in 2usize..8,
            vecs in proptest::collection::vec(proptest::collection::vec((0u32..4, 0u32..3), 1..4), 8),
            masses in proptest::collection::vec(proptest::collection::vec(0u32..3, 1..3), 8),
            pens in proptest::collection::vec((0usize..8, 0usize..8), 0..4),
            nvisited in 0usize..3,
        ) {
            let cats: Vec<String> = (0..n_nodes).map(|i| format!("c{i}")).collect();
            let refs: Vec<&str> = cats.iter().map(String::as_str).collect();
            let vs: Vec<Vec<(u32, f64)>> = vecs[..n_nodes].iter()
                .map(|v| v.iter().map(|(t, w)| (*t, *w as f64)).collect()).collect();
            let g = graph_from(&refs, &vs);
            let mut n = BeliefNetwork::new("u", cats.clone());
            for (c, ms) in cats.iter().zip(&masses) {
                for (i, m) in ms.iter().enumerate() {
                    n.add_mass(c, &format!("{c}/{i}"), *m as f64).unwrap();
                }
            }
            let mut l = RejectionLedger::new(0);
            for (a, b) in pens {
                if a < n_nodes && b < n_nodes && a != b {
                    l.record_rejection(&PromptPath::new(vec![cats[a].clone(), cats[b].clone()]).unwrap());
                }
            }
            let visited: BTreeSet<String> = cats.iter().skip(1).take(nvisited).cloned().collect();
            let got = next_hop(&g, &cats[0], &n, &l, &visited).ok();
            prop_assert_eq!(got, brute_next(&g, &cats[0], &n, &l, &visited));
        }

        #[test]
        fn explore_never_revisits(
            n_nodes in 3usize..8,
            vecs in proptest::collection::vec(proptest::collection::vec((0u32..5, 1u32..3), 1..4), 8),
        ) {
            let cats: Vec<String> = (0..n_nodes).map(|i| format!("c{i}")).collect();
            let refs: Vec<&str> = cats.iter().map(String::as_str).collect();
            let vs: Vec<Vec<(u32, f64)>> = vecs[..n_nodes].iter()
                .map(|v| v.iter().map(|(t, w)| (*t, *w as f64)).collect()).collect();
            let g = graph_from(&refs, &vs);
            let n = BeliefNetwork::new("u", cats.clone());
            let p = explore(&g, &cats[0], &cats[n_nodes - 1], &n, &RejectionLedger::default()).unwrap();
            prop_assert!(p.len() <= n_nodes + 1);
            prop_assert_eq!(p.source(), cats[0].as_str());
            prop_assert_eq!(p.target(), cats[n_nodes - 1].as_str());
            // uniform (zero) beliefs: first hop is the max-ρ neighbour
            let mut best: Option<(&String, f64)> = None;
            for c in &cats[1..] {
                let r = g.rho(&cats[0], c);
                if best.is_none_or(|(_, b)| r > b) { best = Some((c, r)); }
            }
            prop_assert_eq!(&p.nodes()[1], best.unwrap().0);
        }
    }
}
