//! IMDB-style ratings: `movies.csv` (id, genres, title, overview) and
//! `ratings.csv` (user_id, movie_id, rating, timestamp).
//!
//! The first listed genre becomes the category; the second, when present,
//! becomes the subcategory `category/genre`, otherwise `category/general`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::{ordinals, Corpus, Interaction, Item, LoadReport, Reject, SignalKind};
use crate::error::{Error, Result};
use crate::text::words;

#[derive(Debug, Deserialize)]
struct MovieRow {
    id: String,
    genres: String,
    title: String,
    #[serde(default)]
    overview: String,
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    user_id: String,
    movie_id: String,
    rating: f64,
    #[serde(default)]
    timestamp: u64,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn taxonomy_labels(genres: &str) -> Option<(String, String)> {
    let mut genres = genres.split('|').map(str::trim).filter(|g| !g.is_empty());
    let category = genres.next()?.to_owned();
    let sub = genres.next().unwrap_or("general");
    Some((category.clone(), format!("{category}/{sub}")))
}

/// Loads an IMDB-style pair of CSV files.
pub fn load_ratings(movies: &Path, ratings: &Path) -> Result<LoadReport> {
    let mut rejects = Vec::new();
    let mut items = Vec::new();
    let mut taxonomy: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut known = HashMap::new();

    let mut rdr = reader(movies)?;
    let headers = rdr.headers()?.clone();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let row: MovieRow = record.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            path: movies.to_owned(),
            line,
            message: e.to_string(),
        })?;
        let Some((category, subcategory)) = taxonomy_labels(&row.genres) else {
            rejects.push(Reject {
                line,
                reason: format!("movies.csv: movie `{}` has no genre", row.id),
            });
            continue;
        };
        taxonomy
            .entry(category.clone())
            .or_default()
            .insert(subcategory.clone());
        known.insert(row.id.clone(), items.len());
        items.push(Item::dataset(
            row.id,
            category,
            subcategory,
            words(&row.title),
            words(&row.overview),
        ));
    }

    // (user, movie) -> (timestamp, file position, rating)
    let mut latest: BTreeMap<(String, String), (u64, usize, f64)> = BTreeMap::new();
    let mut rdr = reader(ratings)?;
    let headers = rdr.headers()?.clone();
    for (pos, record) in rdr.records().enumerate() {
        let record = record?;
        let line = line_of(&record);
        let row: RatingRow = record.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            path: ratings.to_owned(),
            line,
            message: e.to_string(),
        })?;
        if !(0.0..=5.0).contains(&row.rating) {
            rejects.push(Reject {
                line,
                reason: format!("ratings.csv: rating {} outside [0, 5]", row.rating),
            });
            continue;
        }
        if !known.contains_key(&row.movie_id) {
            rejects.push(Reject {
                line,
                reason: format!("ratings.csv: unknown movie `{}`", row.movie_id),
            });
            continue;
        }
        let entry = (row.timestamp, pos, row.rating);
        latest
            .entry((row.user_id, row.movie_id))
            .and_modify(|cur| {
                if (entry.0, entry.1) >= (cur.0, cur.1) {
                    *cur = entry;
                }
            })
            .or_insert(entry);
    }

    let mut kept: Vec<_> = latest.into_iter().collect();
    kept.sort_by_key(|(_, (ts, pos, _))| (*ts, *pos));
    let keys: Vec<(u64, usize)> = kept.iter().map(|(_, (ts, pos, _))| (*ts, *pos)).collect();
    let interactions = kept
        .into_iter()
        .zip(ordinals(&keys))
        .map(|(((user_id, item_id), (_, _, rating)), timestamp)| Interaction {
            user_id,
            item_id,
            timestamp,
            signal: rating,
        })
        .collect();

    let corpus = Corpus::new(items, interactions, taxonomy, SignalKind::Rating)?;
    Ok(LoadReport { corpus, rejects })
}
