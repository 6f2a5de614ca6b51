//! Filter-bubble detection and belief-harmonising nudge recommendation.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] ingests MIND/IMDB-style interaction logs or generates seeded
//!   synthetic corpora.
//! * [`features`] turns item text into TF-IDF vectors and maintains the
//!   category correlation graph.
//! * [`belief`] keeps per-user entropy belief networks.
//! * [`fbdmr`] detects filter bubbles on the system side (feed diversity) and
//!   on the user side (extreme belief degrees).
//! * [`pathfinder`] and [`nudge`] plan prompt paths across the category graph
//!   and turn them into generated items.
//! * [`recommenders`] provides the RD/CB/UC baselines and feed mixing.
//! * [`simulate`] closes the loop with a simulated user and runs the
//!   experiments.

pub mod belief;
pub mod corpus;
pub mod error;
pub mod fbdmr;
pub mod features;
pub mod nudge;
pub mod pathfinder;
pub mod recommenders;
pub mod simulate;
pub mod text;

pub use error::{Error, Result};
