use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bheisr::belief::BeliefNetwork;
use bheisr::fbdmr::{belief_histogram_csv, classify_users, DetectionReport, SystemThresholds};
use bheisr::pathfinder::{explore_with, select_endpoints, ExploreOptions};
use bheisr::recommenders::Model;
use bheisr::simulate::{
    run_experiment, run_loop, target_user, write_run, Environment, SimConfig, Theta,
};

#[derive(Parser)]
#[command(name = "bheisr", version, about = "Filter-bubble detection and nudge recommendation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset or generate a synthetic corpus and save it as JSON.
    Ingest(Common),
    /// Classify users and audit the diversity of a baseline feed log.
    Detect(Common),
    /// Export the category graph, optionally tracing prompt paths.
    Graph {
        #[command(flatten)]
        common: Common,
        /// Write per-hop path traces for every filter-bubble user.
        #[arg(long)]
        trace_paths: Option<PathBuf>,
    },
    /// Print the feed log of a run as JSON lines.
    Recommend(Common),
    /// Run the closed loop and write step, feed and belief logs.
    Simulate(Common),
    /// Run one of the four experiments and write its CSV tables.
    Experiment {
        /// Experiment number, 1 to 4.
        number: u8,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML config with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// MIND behaviours TSV, IMDB directory, or corpus JSON.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Synthetic corpus, e.g. `mind`, `mind:7` or `users=30,biased=10`.
    #[arg(long)]
    synth: Option<String>,
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Rejection threshold, or `inf`.
    #[arg(long)]
    theta: Option<Theta>,
    #[arg(long)]
    feeds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Target user for single-user experiments.
    #[arg(long)]
    user: Option<String>,
    /// Run users one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
    /// HTTP endpoint for item generation; falls back to templates.
    #[arg(long)]
    generator_url: Option<String>,
}

impl Common {
    fn config(&self) -> Result<SimConfig> {
        let mut c = match &self.config {
            Some(p) => SimConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => SimConfig::default(),
        };
        if self.dataset.is_some() {
            c.dataset = self.dataset.clone();
        }
        if self.synth.is_some() {
            c.synth = self.synth.clone();
        }
        if let Some(m) = self.model {
            c.model = m;
        }
        if let Some(w) = self.w {
            c.w = w;
        }
        if let Some(k) = self.k {
            c.k = k;
        }
        if let Some(t) = self.theta {
            c.theta = t;
        }
        if let Some(f) = self.feeds {
            c.feeds = f;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.out.is_some() {
            c.out = self.out.clone();
        }
        if self.user.is_some() {
            c.user = self.user.clone();
        }
        if self.sequential {
            c.parallel = false;
        }
        if self.generator_url.is_some() {
            c.generator_url = self.generator_url.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn all_beliefs(env: &Environment) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    env.corpus
        .users()
        .iter()
        .map(|u| Ok((u.clone(), BeliefNetwork::build_from_history(&env.corpus, u)?.beliefs())))
        .collect()
}

fn ingest(common: &Common) -> Result<()> {
    let cfg = common.config()?;
    let env = Environment::load(&cfg)?;
    let c = &env.corpus;
    eprintln!(
        "{} users, {} items, {} categories, {} interactions",
        c.users().len(),
        c.items().len(),
        c.categories().len(),
        c.interactions().len()
    );
    emit(cfg.out.as_deref(), &c.to_json()?)
}

fn detect(common: &Common) -> Result<()> {
    let mut cfg = common.config()?;
    if common.model.is_none() {
        cfg.model = Model::Cb;
    }
    if cfg.model.with_bheisr() {
        bail!("detect audits baseline feeds; use --model rd, cb or uc");
    }
    let env = Environment::load(&cfg)?;
    let categories = env.corpus.categories();
    let beliefs = all_beliefs(&env)?;
    let classification = classify_users(&beliefs, &categories)?;
    let user = target_user(&env, &cfg)?;
    let run = run_loop(&env, &cfg)?;
    let items: Vec<Vec<bheisr::corpus::Item>> = run
        .user_steps(&user)
        .map(|s| {
            s.items
                .iter()
                .filter_map(|i| env.corpus.item(&i.id).cloned())
                .collect()
        })
        .collect();
    let feeds: Vec<Vec<&bheisr::corpus::Item>> = items.iter().map(|f| f.iter().collect()).collect();
    let window = (feeds.len() / 2).max(1);
    let report = DetectionReport::build(&feeds, window, classification, categories.len(), SystemThresholds::default());
    let (report, system_note) = match report {
        Ok(r) => (serde_json::to_value(&r)?, None),
        Err(e) => {
            let c = classify_users(&beliefs, &categories)?;
            (
                serde_json::json!({
                    "normality": c.normality,
                    "user_classes": c.user_classes,
                    "fb_users": c.fb_users,
                }),
                Some(e.to_string()),
            )
        }
    };
    let out = serde_json::json!({
        "audited_user": user,
        "model": cfg.model,
        "report": report,
        "system_detection_skipped": system_note,
    });
    if let Some(dir) = &cfg.out {
        emit(Some(&dir.join("detection.json")), &serde_json::to_string_pretty(&out)?)?;
        emit(Some(&dir.join("belief_histogram.csv")), &belief_histogram_csv(&beliefs, &categories, 0.1))?;
        Ok(())
    } else {
        emit(None, &(serde_json::to_string_pretty(&out)? + "\n"))
    }
}

fn graph(common: &Common, trace_paths: Option<&Path>) -> Result<()> {
    let cfg = common.config()?;
    let env = Environment::load(&cfg)?;
    let export = env.graph.export(env.tfidf.vocabulary());
    emit(cfg.out.as_deref(), &(serde_json::to_string_pretty(&export)? + "\n"))?;
    if let Some(path) = trace_paths {
        let categories = env.corpus.categories();
        let classification = classify_users(&all_beliefs(&env)?, &categories)?;
        let mut lines = String::new();
        for user in &classification.fb_users {
            let network = BeliefNetwork::build_from_history(&env.corpus, user)?;
            let classes = classification.classes_of(user).expect("fb users are classified");
            let (source, target) = select_endpoints(&network, classes)?;
            let mut trace = Vec::new();
            explore_with(
                &env.graph,
                &source,
                &target,
                &network,
                &cfg.theta.ledger(),
                ExploreOptions::default(),
                Some(&mut trace),
            )?;
            for hop in trace {
                let mut v = serde_json::to_value(&hop)?;
                v["user"] = serde_json::Value::String(user.clone());
                lines.push_str(&serde_json::to_string(&v)?);
                lines.push('\n');
            }
        }
        emit(Some(path), &lines)?;
    }
    Ok(())
}

fn recommend(common: &Common) -> Result<()> {
    let cfg = common.config()?;
    let env = Environment::load(&cfg)?;
    let run = run_loop(&env, &cfg)?;
    emit(cfg.out.as_deref(), &run.feed_log()?)
}

fn simulate(common: &Common) -> Result<()> {
    let cfg = common.config()?;
    let env = Environment::load(&cfg)?;
    let run = run_loop(&env, &cfg)?;
    let counts: Vec<String> = run
        .fb_counts()
        .iter()
        .map(|c| c.map_or("-".to_string(), |n| n.to_string()))
        .collect();
    eprintln!("filter-bubble users per feed: {}", counts.join(" "));
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    for p in write_run(&run, &out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn experiment(number: u8, common: &Common) -> Result<()> {
    if !(1..=4).contains(&number) {
        bail!("experiment must be 1, 2, 3 or 4");
    }
    let mut cfg = common.config()?;
    if number == 2 && common.feeds.is_none() && common.config.is_none() {
        cfg.feeds = 100;
    }
    let env = Environment::load(&cfg)?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    for p in run_experiment(number, &env, &cfg, &out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Ingest(c) => ingest(c),
        Command::Detect(c) => detect(c),
        Command::Graph { common, trace_paths } => graph(common, trace_paths.as_deref()),
        Command::Recommend(c) => recommend(c),
        Command::Simulate(c) => simulate(c),
        Command::Experiment { number, common } => experiment(*number, common),
    }
}
