//! Per-user belief networks: subcategory click mass, globally normalised
//! click probabilities and per-category entropy belief degrees.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Item};
use crate::error::{Error, Result};

/// Where click mass from an accepted generated item is credited.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreditPolicy {
    /// The user's most-clicked subcategory within each spanned category,
    /// falling back to `category/generated` when the category is untouched.
    #[default]
    DominantSubcategory,
    /// Always the synthetic subcategory `category/generated`.
    SyntheticSubcategory,
}

fn plogp(c: f64) -> f64 {
    if c > 0.0 {
        c * c.log2()
    } else {
        0.0
    }
}

/// Entropy of `probs` in bits, with `0 log 0 = 0`.
pub fn entropy(probs: impl IntoIterator<Item = f64>) -> f64 {
    -probs.into_iter().map(plogp).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefNetwork {
    user_id: String,
    // (category, subcategory) -> click mass
    counts: BTreeMap<(String, String), f64>,
    // per category: (mass, sum of c * log2 c)
    stats: BTreeMap<String, (f64, f64)>,
    total: f64,
    accepted: Vec<String>,
    declined_prompts: Vec<String>,
    policy: CreditPolicy,
}

impl BeliefNetwork {
    /// An empty network over the given categories.
    pub fn new(user_id: impl Into<String>, categories: impl IntoIterator<Item = String>) -> Self {
        BeliefNetwork {
            user_id: user_id.into(),
            counts: BTreeMap::new(),
            stats: categories.into_iter().map(|c| (c, (0.0, 0.0))).collect(),
            total: 0.0,
            accepted: Vec::new(),
            declined_prompts: Vec::new(),
            policy: CreditPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: CreditPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Counts the user's interested interactions per subcategory; interested
    /// items also seed the accepted list in timestamp order.
    pub fn build_from_history(corpus: &Corpus, user_id: &str) -> Result<Self> {
        if !corpus.users().contains(user_id) {
            return Err(Error::UnknownUser(user_id.to_owned()));
        }
        let mut net = BeliefNetwork::new(user_id, corpus.categories());
        for inter in corpus.user_interactions(user_id) {
            if !inter.interested(corpus.signal()) {
                continue;
            }
            let item = corpus.item(&inter.item_id).expect("validated corpus");
            net.add_mass(&item.category, &item.subcategory, 1.0)?;
            net.accepted.push(item.id.clone());
        }
        Ok(net)
    }

    /// Adds click mass to one subcategory, keeping the incremental sums.
    pub fn add_mass(&mut self, category: &str, subcategory: &str, mass: f64) -> Result<()> {
        let stat = self
            .stats
            .get_mut(category)
            .ok_or_else(|| Error::UnknownCategory(category.to_owned()))?;
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(Error::InvalidInput(format!("click mass {mass}")));
        }
        let count = self
            .counts
            .entry((category.to_owned(), subcategory.to_owned()))
            .or_insert(0.0);
        let old = *count;
        *count += mass;
        stat.0 += mass;
        stat.1 += plogp(*count) - plogp(old);
        self.total += mass;
        Ok(())
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn policy(&self) -> CreditPolicy {
        self.policy
    }

    pub fn is_cold(&self) -> bool {
        self.total <= 0.0
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.stats.keys().map(String::as_str)
    }

    pub fn click_counts(&self) -> &BTreeMap<(String, String), f64> {
        &self.counts
    }

    pub fn category_mass(&self, category: &str) -> f64 {
        self.stats.get(category).map_or(0.0, |s| s.0)
    }

    /// Click probabilities normalised over all subcategories.
    pub fn click_probs(&self) -> BTreeMap<(String, String), f64> {
        if self.is_cold() {
            return self.counts.keys().map(|k| (k.clone(), 0.0)).collect();
        }
        self.counts
            .iter()
            .map(|(k, c)| (k.clone(), c / self.total))
            .collect()
    }

    pub fn accepted(&self) -> &[String] {
        &self.accepted
    }

    pub fn declined_prompts(&self) -> &[String] {
        &self.declined_prompts
    }

    /// Belief degree of one category from the maintained sums:
    /// `(m log2 N - S) / N`.
    pub fn belief_degree(&self, category: &str) -> Result<f64> {
        let &(mass, s) = self
            .stats
            .get(category)
            .ok_or_else(|| Error::UnknownCategory(category.to_owned()))?;
        if self.is_cold() || mass <= 0.0 {
            return Ok(0.0);
        }
        Ok(((mass * self.total.log2() - s) / self.total).max(0.0))
    }

    /// Belief degrees for every category.
    pub fn beliefs(&self) -> BTreeMap<String, f64> {
        self.stats
            .keys()
            .map(|c| (c.clone(), self.belief_degree(c).expect("known category")))
            .collect()
    }

    pub fn belief_sum(&self) -> f64 {
        self.beliefs().values().sum()
    }

    /// Belief degrees recomputed from raw counts, ignoring the maintained
    /// sums.
    pub fn recompute_beliefs(&self) -> BTreeMap<String, f64> {
        let total: f64 = self.counts.values().sum();
        let mut out: BTreeMap<String, f64> = self.stats.keys().map(|c| (c.clone(), 0.0)).collect();
        if total <= 0.0 {
            return out;
        }
        for ((cat, _), c) in &self.counts {
            *out.get_mut(cat).expect("known category") -= plogp(c / total);
        }
        out
    }

    /// The subcategory credited for click mass in `category` from a
    /// generated item.
    pub fn credit_subcategory(&self, category: &str) -> String {
        let fallback = || format!("{category}/generated");
        match self.policy {
            CreditPolicy::SyntheticSubcategory => fallback(),
            CreditPolicy::DominantSubcategory => self
                .counts
                .iter()
                .filter(|((c, _), m)| c == category && **m > 0.0)
                // max by mass, ties to the lexicographically smallest label
                .fold(None::<(&String, f64)>, |best, ((_, s), m)| match best {
                    Some((_, bm)) if bm >= *m => best,
                    _ => Some((s, *m)),
                })
                .map_or_else(fallback, |(s, _)| s.clone()),
        }
    }

    /// Applies a user's reaction to a presented item.
    pub fn update_on_feedback(
        &mut self,
        item: &Item,
        accepted: bool,
        prompt: Option<&str>,
    ) -> Result<()> {
        if !accepted {
            if let Some(p) = prompt {
                self.declined_prompts.push(p.to_owned());
            }
            return Ok(());
        }
        if item.is_generated() {
            let credits: Vec<(String, String, f64)> = item
                .category_weights
                .iter()
                .filter(|(_, w)| **w > 0.0)
                .map(|(c, w)| (c.clone(), self.credit_subcategory(c), *w))
                .collect();
            for (c, s, w) in credits {
                self.add_mass(&c, &s, w)?;
            }
        } else {
            self.add_mass(&item.category, &item.subcategory, 1.0)?;
        }
        self.accepted.push(item.id.clone());
        Ok(())
    }

    /// Share of positive-mass categories among all categories.
    pub fn coverage(&self) -> f64 {
        if self.stats.is_empty() {
            return 0.0;
        }
        let live = self.stats.values().filter(|s| s.0 > 0.0).count();
        live as f64 / self.stats.len() as f64
    }

    pub fn snapshot(&self) -> BeliefSnapshot {
        let mut probs: BTreeMap<String, f64> = BTreeMap::new();
        for ((_, sub), p) in self.click_probs() {
            *probs.entry(sub).or_insert(0.0) += p;
        }
        BeliefSnapshot {
            user_id: self.user_id.clone(),
            belief: self.beliefs(),
            probs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub user_id: String,
    pub belief: BTreeMap<String, f64>,
    pub probs: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Origin;
    use proptest::prelude::*;

    fn net(cats: &[&str]) -> BeliefNetwork {
        BeliefNetwork::new("u", cats.iter().map(|c| (*c).to_owned()))
    }

    fn gi(weights: &[(&str, f64)]) -> Item {
        let mut it = Item::dataset("g1", weights[0].0, "x", vec![], vec![]);
        it.origin = Origin::Generated;
        it.category_weights = weights.iter().map(|(c, w)| ((*c).to_owned(), *w)).collect();
        it
    }

    #[test]
    fn single_subcategory_has_zero_belief() {
        let mut n = net(&["a", "b"]);
        n.add_mass("a", "a/1", 5.0).unwrap();
        assert_eq!(n.belief_degree("a").unwrap(), 0.0);
        assert_eq!(n.belief_degree("b").unwrap(), 0.0);
        assert!(n.belief_degree("zz").is_err());
    }

    #[test]
    fn two_equal_subcategories_give_one_bit() {
        let mut n = net(&["a"]);
        n.add_mass("a", "a/1", 3.0).unwrap();
        n.add_mass("a", "a/2", 3.0).unwrap();
        assert!((n.belief_degree("a").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn global_normalisation_on_partial_mass() {
        let mut n = net(&["a", "b"]);
        n.add_mass("a", "a/1", 2.0).unwrap();
        n.add_mass("a", "a/2", 3.0).unwrap();
        n.add_mass("b", "b/1", 5.0).unwrap();
        let want = -(0.2f64 * 0.2f64.log2() + 0.3 * 0.3f64.log2());
        assert!((n.belief_degree("a").unwrap() - want).abs() < 1e-12);
        assert!((want - 0.9855).abs() < 1e-4);
    }

    #[test]
    fn accept_dataset_item_renormalises() {
        let mut n = net(&["a"]);
        n.add_mass("a", "s", 1.0).unwrap();
        n.add_mass("a", "t", 1.0).unwrap();
        let item = Item::dataset("i", "a", "s", vec![], vec![]);
        n.update_on_feedback(&item, true, None).unwrap();
        let p = n.click_probs();
        assert!((p[&("a".into(), "s".into())] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(n.accepted(), ["i"]);
    }

    #[test]
    fn rejection_only_records_prompt() {
        let mut n = net(&["a", "b"]);
        n.add_mass("a", "s", 1.0).unwrap();
        let before = n.beliefs();
        n.update_on_feedback(&gi(&[("a", 0.5), ("b", 0.5)]), false, Some("a>b"))
            .unwrap();
        assert_eq!(n.declined_prompts(), ["a>b"]);
        assert_eq!(n.beliefs(), before);
        assert!(n.accepted().is_empty());
    }

    #[test]
    fn generated_credit_policies() {
        let mut n = net(&["a", "b"]);
        n.add_mass("a", "a/2", 2.0).unwrap();
        n.add_mass("a", "a/1", 2.0).unwrap();
        assert_eq!(n.credit_subcategory("a"), "a/1");
        assert_eq!(n.credit_subcategory("b"), "b/generated");
        n.update_on_feedback(&gi(&[("a", 0.5), ("b", 0.5)]), true, None)
            .unwrap();
        assert_eq!(n.click_counts()[&("a".into(), "a/1".into())], 2.5);
        assert_eq!(n.click_counts()[&("b".into(), "b/generated".into())], 0.5);

        let mut s = net(&["a", "b"]).with_policy(CreditPolicy::SyntheticSubcategory);
        s.add_mass("a", "a/1", 1.0).unwrap();
        s.update_on_feedback(&gi(&[("a", 0.5), ("b", 0.5)]), true, None)
            .unwrap();
        assert_eq!(s.click_counts()[&("a".into(), "a/generated".into())], 0.5);
    }

    #[test]
    fn generated_acceptance_matches_brute_force_entropy() {
        let mut n = net(&["a", "b", "c"]);
        n.add_mass("a", "a/1", 3.0).unwrap();
        n.add_mass("c", "c/1", 1.0).unwrap();
        n.update_on_feedback(&gi(&[("a", 0.5), ("b", 0.5)]), true, None)
            .unwrap();
        // counts: a/1 3.5, b/generated 0.5, c/1 1.0 over 5.0
        let b = -(0.1f64 * 0.1f64.log2());
        assert!((n.belief_degree("b").unwrap() - b).abs() < 1e-12);
        let a = -(0.7f64 * 0.7f64.log2());
        assert!((n.belief_degree("a").unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn cold_network() {
        let n = net(&["a"]);
        assert!(n.is_cold());
        assert_eq!(n.belief_sum(), 0.0);
        assert_eq!(n.coverage(), 0.0);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Mass(usize, usize, f64),
        Generated(usize, usize),
    }

    fn arb_op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0usize..4, 0usize..3, 0.1f64..5.0).prop_map(|(c, s, m)| Op::Mass(c, s, m)),
            (0usize..4, 0usize..4).prop_map(|(a, b)| Op::Generated(a, b)),
        ]
    }

    const CATS: [&str; 4] = ["a", "b", "c", "d"];

    fn apply(n: &mut BeliefNetwork, op: &Op) {
        match *op {
            Op::Mass(c, s, m) => n.add_mass(CATS[c], &format!("{}/{s}", CATS[c]), m).unwrap(),
            Op::Generated(a, b) => {
                let w: Vec<(&str, f64)> = if a == b {
                    vec![(CATS[a], 1.0)]
                } else {
                    vec![(CATS[a], 0.5), (CATS[b], 0.5)]
                };
                n.update_on_feedback(&gi(&w), true, None).unwrap();
            }
        }
    }

    proptest! {
        #[test]
        fn incremental_matches_recompute(ops in proptest::collection::vec(arb_op(), 0..40)) {
            let mut n = net(&CATS);
            for op in &ops {
                apply(&mut n, op);
                let fresh = n.recompute_beliefs();
                for (c, b) in n.beliefs() {
                    prop_assert!((b - fresh[&c]).abs() < 1e-9);
                }
                let psum: f64 = n.click_probs().values().sum();
                prop_assert!(n.is_cold() || (psum - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn entropy_bounds(ops in proptest::collection::vec(arb_op(), 1..30)) {
            let mut n = net(&CATS);
            let mut mass = 0.0;
            for op in &ops {
                apply(&mut n, op);
                prop_assert!(n.total_mass() >= mass);
                mass = n.total_mass();
            }
            for (c, b) in n.beliefs() {
                prop_assert!(b >= 0.0);
                let subs = n.click_counts().keys().filter(|(k, _)| *k == c).count();
                if (n.category_mass(&c) - n.total_mass()).abs() < 1e-12 && subs > 0 {
                    prop_assert!(b <= (subs as f64).log2() + 1e-9);
                }
            }
        }

        #[test]
        fn accepting_new_category_adds_mass(c in 0usize..4, s in 0usize..3) {
            let mut n = net(&CATS);
            n.add_mass("a", "a/0", 1.0).unwrap();
            let before = CATS.iter().filter(|k| n.category_mass(k) > 0.0).count();
            let item = Item::dataset("x", CATS[c], format!("{}/{s}", CATS[c]), vec![], vec![]);
            n.update_on_feedback(&item, true, None).unwrap();
            let after = CATS.iter().filter(|k| n.category_mass(k) > 0.0).count();
            prop_assert_eq!(after, before + usize::from(c != 0));
        }
    }
}
