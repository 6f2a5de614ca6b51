//! Filter-bubble detection.
//!
//! Forward reconnaissance looks at what a recommender shows (coverage,
//! duplication, category share trends). Counter reconnaissance looks at the
//! users' belief distributions and flags users whose belief in some category
//! is more than two standard deviations above the mean while another is more
//! than two below.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::corpus::Item;
use crate::error::{Error, Result};

/// Minimum number of warm users for classification.
pub const MIN_USERS: usize = 8;

/// Distinct categories in the feed over the total number of categories.
/// Generated items count every category they carry weight in.
pub fn diversity_coverage(feed: &[&Item], n_categories: usize) -> Result<f64> {
    if feed.is_empty() {
        return Err(Error::InvalidInput("coverage of an empty feed".into()));
    }
    if n_categories == 0 {
        return Err(Error::InvalidInput("no categories".into()));
    }
    let distinct: BTreeSet<&str> = feed.iter().flat_map(|i| i.categories()).collect();
    Ok(distinct.len() as f64 / n_categories as f64)
}

/// The coverage formula taken literally: `(1/N) Σ (1 - f_i / F)` over the
/// subcategories with nonzero frequency.
pub fn diversity_coverage_formula(frequencies: &BTreeMap<String, f64>) -> Result<f64> {
    let nonzero: Vec<f64> = frequencies.values().copied().filter(|f| *f > 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::InvalidInput("all subcategory frequencies are zero".into()));
    }
    let total: f64 = nonzero.iter().sum();
    let n = nonzero.len() as f64;
    Ok(nonzero.iter().map(|f| 1.0 - f / total).sum::<f64>() / n)
}

/// Subcategory frequencies of a feed.
pub fn subcategory_frequencies(feed: &[&Item]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for item in feed {
        *out.entry(item.subcategory.clone()).or_insert(0.0) += 1.0;
    }
    out
}

/// Fraction of ordered item pairs sharing a subcategory.
pub fn diversity_duplicate(feed: &[&Item]) -> Result<f64> {
    let n = feed.len();
    if n < 2 {
        return Err(Error::InvalidInput("duplicate rate needs two items".into()));
    }
    let freq = subcategory_frequencies(feed);
    let same: f64 = freq.values().map(|f| f * (f - 1.0)).sum();
    Ok(same / (n * (n - 1)) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowShare {
    pub window: usize,
    pub shares: BTreeMap<String, f64>,
}

/// Category shares over consecutive, non-overlapping windows of `window`
/// feeds; a trailing partial window is kept. Items contribute their
/// category weights.
pub fn time_evolution_report(feeds: &[Vec<&Item>], window: usize) -> Result<Vec<WindowShare>> {
    if window == 0 || window > feeds.len() {
        return Err(Error::InvalidInput(format!(
            "window {window} for {} feeds",
            feeds.len()
        )));
    }
    let mut out = Vec::new();
    for (w, chunk) in feeds.chunks(window).enumerate() {
        let mut shares: BTreeMap<String, f64> = BTreeMap::new();
        let mut total = 0.0;
        for item in chunk.iter().flatten() {
            for (c, wt) in &item.category_weights {
                *shares.entry(c.clone()).or_insert(0.0) += wt;
                total += wt;
            }
        }
        if total > 0.0 {
            shares.values_mut().for_each(|s| *s /= total);
        }
        out.push(WindowShare { window: w, shares });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    #[serde(rename = "K")]
    pub k: f64,
    pub p: f64,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Asymptotic Kolmogorov survival function; returns 1 when the alternating
/// series has not settled (tiny λ).
fn kolmogorov_p(lambda: f64) -> f64 {
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev_term = 0.0f64;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term <= 1e-3 * prev_term || term <= 1e-8 * sum.abs() {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
        prev_term = term;
    }
    1.0
}

/// One-sample Kolmogorov–Smirnov test against N(mu, sigma²).
pub fn ks_normality(samples: &[f64], mu: f64, sigma: f64) -> Result<KsResult> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut k = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let f = normal_cdf((x - mu) / sigma);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        k = k.max((hi - f).abs()).max((f - lo).abs());
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * k;
    Ok(KsResult {
        k,
        p: kolmogorov_p(lambda),
    })
}

/// Population mean and standard deviation.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mu = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

/// Third standardised moment (population form).
pub fn skewness(samples: &[f64]) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::InvalidInput("skewness needs three samples".into()));
    }
    let (mu, sigma) = mean_std(samples);
    if sigma == 0.0 {
        return Err(Error::InvalidInput("skewness of constant samples".into()));
    }
    let n = samples.len() as f64;
    Ok(samples.iter().map(|x| ((x - mu) / sigma).powi(3)).sum::<f64>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UserClass {
    ExtremeHigh,
    ExtremeLow,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub mu: f64,
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Thresholds {
    /// `low = max(mu - 2 sigma, 0)`, `high = mu + 2 sigma`.
    pub fn from_moments(mu: f64, sigma: f64) -> Self {
        Thresholds {
            mu,
            sigma,
            low: (mu - 2.0 * sigma).max(0.0),
            high: mu + 2.0 * sigma,
        }
    }

    pub fn classify(&self, b: f64) -> UserClass {
        if self.sigma == 0.0 {
            UserClass::Normal
        } else if b > self.high {
            UserClass::ExtremeHigh
        } else if b < self.low {
            UserClass::ExtremeLow
        } else {
            UserClass::Normal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normality {
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub p: Option<f64>,
    pub skewness: Option<f64>,
    pub mu: f64,
    pub sigma: f64,
}

pub type UserClasses = BTreeMap<String, BTreeMap<String, UserClass>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub user_classes: UserClasses,
    pub fb_users: BTreeSet<String>,
    pub thresholds: BTreeMap<String, Thresholds>,
    pub normality: BTreeMap<String, Normality>,
}

impl Classification {
    pub fn is_affected(&self, user: &str) -> bool {
        self.fb_users.contains(user)
    }

    pub fn classes_of(&self, user: &str) -> Option<&BTreeMap<String, UserClass>> {
        self.user_classes.get(user)
    }
}

/// Classifies warm users per category with the two-sigma rule. Users whose
/// beliefs are all zero are left out of both the statistics and the output.
pub fn classify_users(
    beliefs: &BTreeMap<String, BTreeMap<String, f64>>,
    categories: &[String],
) -> Result<Classification> {
    let warm: Vec<(&String, &BTreeMap<String, f64>)> = beliefs
        .iter()
        .filter(|(_, b)| b.values().any(|v| *v != 0.0))
        .collect();
    if warm.len() < MIN_USERS {
        return Err(Error::Precondition(format!(
            "classification needs at least {MIN_USERS} warm users, got {}",
            warm.len()
        )));
    }
    let mut thresholds = BTreeMap::new();
    let mut normality = BTreeMap::new();
    for c in categories {
        let xs: Vec<f64> = warm
            .iter()
            .map(|(_, b)| b.get(c).copied().unwrap_or(0.0))
            .collect();
        let (mu, sigma) = mean_std(&xs);
        let t = Thresholds::from_moments(mu, sigma);
        let ks = (sigma > 0.0).then(|| ks_normality(&xs, mu, sigma).ok()).flatten();
        normality.insert(
            c.clone(),
            Normality {
                k: ks.map(|r| r.k),
                p: ks.map(|r| r.p),
                skewness: skewness(&xs).ok(),
                mu,
                sigma,
            },
        );
        thresholds.insert(c.clone(), t);
    }
    let mut user_classes = BTreeMap::new();
    let mut fb_users = BTreeSet::new();
    for (u, b) in warm {
        let classes: BTreeMap<String, UserClass> = categories
            .iter()
            .map(|c| (c.clone(), thresholds[c].classify(b.get(c).copied().unwrap_or(0.0))))
            .collect();
        let high = classes.values().any(|k| *k == UserClass::ExtremeHigh);
        let low = classes.values().any(|k| *k == UserClass::ExtremeLow);
        if high && low {
            fb_users.insert(u.clone());
        }
        user_classes.insert(u.clone(), classes);
    }
    Ok(Classification {
        user_classes,
        fb_users,
        thresholds,
        normality,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemThresholds {
    pub coverage_max: f64,
    pub trend_min: f64,
}

impl Default for SystemThresholds {
    fn default() -> Self {
        SystemThresholds {
            coverage_max: 0.15,
            trend_min: 0.5,
        }
    }
}

/// Kendall-style trend over a series: (non-decreasing pairs − decreasing
/// pairs) / pairs. A constant series scores 1.
pub fn trend(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += if series[j] >= series[i] { 1 } else { -1 };
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub coverage: Vec<f64>,
    pub coverage_formula: Vec<f64>,
    pub duplicate: Vec<f64>,
    pub category_share_series: Vec<WindowShare>,
    pub normality: BTreeMap<String, Normality>,
    pub user_classes: UserClasses,
    pub fb_users: BTreeSet<String>,
    pub fb_system: bool,
}

impl DetectionReport {
    /// Forward reconnaissance over a feed log plus counter reconnaissance
    /// over a belief population.
    pub fn build(
        feeds: &[Vec<&Item>],
        window: usize,
        classification: Classification,
        n_categories: usize,
        thresholds: SystemThresholds,
    ) -> Result<Self> {
        let coverage = feeds
            .iter()
            .map(|f| diversity_coverage(f, n_categories))
            .collect::<Result<Vec<_>>>()?;
        let coverage_formula = feeds
            .iter()
            .map(|f| diversity_coverage_formula(&subcategory_frequencies(f)))
            .collect::<Result<Vec<_>>>()?;
        let duplicate = feeds
            .iter()
            .map(|f| if f.len() < 2 { Ok(0.0) } else { diversity_duplicate(f) })
            .collect::<Result<Vec<_>>>()?;
        let category_share_series = time_evolution_report(feeds, window)?;
        let mut report = DetectionReport {
            coverage,
            coverage_formula,
            duplicate,
            category_share_series,
            normality: classification.normality,
            user_classes: classification.user_classes,
            fb_users: classification.fb_users,
            fb_system: false,
        };
        report.fb_system = detect_fb_system(&report, thresholds)?;
        Ok(report)
    }
}

/// The category with the largest summed share across windows (ties to the
/// smallest label).
pub fn preferred_category(series: &[WindowShare]) -> Option<String> {
    let mut totals: BTreeMap<&String, f64> = BTreeMap::new();
    for w in series {
        for (c, s) in &w.shares {
            *totals.entry(c).or_insert(0.0) += s;
        }
    }
    totals
        .into_iter()
        .fold(None::<(&String, f64)>, |best, (c, s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((c, s)),
        })
        .map(|(c, _)| c.clone())
}

/// System-side verdict: low mean coverage and a non-decreasing share of
/// the preferred category.
pub fn detect_fb_system(report: &DetectionReport, thresholds: SystemThresholds) -> Result<bool> {
    if report.coverage.len() < 5 {
        return Err(Error::Precondition(format!(
            "system detection needs at least 5 feeds, got {}",
            report.coverage.len()
        )));
    }
    if report.category_share_series.len() < 2 {
        return Err(Error::Precondition(
            "system detection needs at least 2 windows".into(),
        ));
    }
    let mean_dc = report.coverage.iter().sum::<f64>() / report.coverage.len() as f64;
    let Some(pref) = preferred_category(&report.category_share_series) else {
        return Ok(false);
    };
    let series: Vec<f64> = report
        .category_share_series
        .iter()
        .map(|w| w.shares.get(&pref).copied().unwrap_or(0.0))
        .collect();
    Ok(mean_dc < thresholds.coverage_max && trend(&series) >= thresholds.trend_min)
}

/// Per-category belief histogram as CSV rows `category,bin_lo,bin_hi,users`.
pub fn belief_histogram_csv(
    beliefs: &BTreeMap<String, BTreeMap<String, f64>>,
    categories: &[String],
    bin_width: f64,
) -> String {
    let mut out = String::from("category,bin_lo,bin_hi,users\n");
    for c in categories {
        let xs: Vec<f64> = beliefs
            .values()
            .filter(|b| b.values().any(|v| *v != 0.0))
            .map(|b| b.get(c).copied().unwrap_or(0.0))
            .collect();
        let top = xs.iter().copied().fold(0.0, f64::max);
        let bins = ((top / bin_width).floor() as usize) + 1;
        let mut counts = vec![0usize; bins];
        for x in xs {
            counts[((x / bin_width).floor() as usize).min(bins - 1)] += 1;
        }
        for (i, n) in counts.iter().enumerate() {
            let lo = i as f64 * bin_width;
            writeln!(out, "{c},{lo:.3},{:.3},{n}", lo + bin_width).expect("string write");
        }
    }
    out
}
