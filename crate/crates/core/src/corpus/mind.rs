//! MIND-style behaviour logs: one tab-separated interaction per line,
//! `user_id timestamp category subcategory title abstract click`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use super::{ordinals, Corpus, Interaction, Item, LoadReport, Reject, SignalKind};
use crate::error::{Error, Result};
use crate::text::words;

const FIELDS: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum TimeKey {
    Number(u64),
    // (year, month, day, hour, minute, second)
    Clock([u32; 6]),
    Raw(String),
}

fn time_key(raw: &str) -> TimeKey {
    let raw = raw.trim();
    if let Ok(n) = raw.parse::<u64>() {
        return TimeKey::Number(n);
    }
    parse_clock(raw).map_or_else(|| TimeKey::Raw(raw.to_owned()), TimeKey::Clock)
}

// "11/13/2019 8:36:57 AM"
fn parse_clock(raw: &str) -> Option<[u32; 6]> {
    let mut parts = raw.split_whitespace();
    let date = parts.next()?;
    let time = parts.next()?;
    let meridiem = parts.next();
    let mut d = date.split('/').map(|p| p.parse::<u32>().ok());
    let (month, day, year) = (d.next()??, d.next()??, d.next()??);
    let mut t = time.split(':').map(|p| p.parse::<u32>().ok());
    let (mut hour, minute, second) = (t.next()??, t.next()??, t.next().flatten().unwrap_or(0));
    match meridiem {
        Some("PM") if hour < 12 => hour += 12,
        Some("AM") if hour == 12 => hour = 0,
        _ => {}
    }
    Some([year, month, day, hour, minute, second])
}

struct Row {
    user: String,
    time: TimeKey,
    item: usize,
    click: f64,
}

/// Loads a MIND-style TSV file.
///
/// Structurally malformed lines abort with the offending line number; rows
/// with an empty category or subcategory are collected as rejects.
pub fn load_behaviors(path: &Path) -> Result<LoadReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };

    let mut items: Vec<Item> = Vec::new();
    let mut item_ids: HashMap<(String, String, String, String), usize> = HashMap::new();
    let mut taxonomy: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut rejects = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() || (idx == 0 && line.starts_with("user_id\t")) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != FIELDS {
            return Err(parse_err(
                lineno,
                format!("expected {FIELDS} tab-separated fields, found {}", fields.len()),
            ));
        }
        let [user, ts, category, subcategory, title, abstract_text, click] =
            [0, 1, 2, 3, 4, 5, 6].map(|i| fields[i].trim());
        let click = match click {
            "0" => 0.0,
            "1" => 1.0,
            other => return Err(parse_err(lineno, format!("click must be 0 or 1, found `{other}`"))),
        };
        if user.is_empty() {
            return Err(parse_err(lineno, "empty user id".into()));
        }
        if category.is_empty() {
            rejects.push(Reject {
                line: lineno,
                reason: "empty category".into(),
            });
            continue;
        }
        if subcategory.is_empty() {
            rejects.push(Reject {
                line: lineno,
                reason: "empty subcategory".into(),
            });
            continue;
        }

        let key = (
            category.to_owned(),
            subcategory.to_owned(),
            title.to_owned(),
            abstract_text.to_owned(),
        );
        let item = *item_ids.entry(key).or_insert_with(|| {
            items.push(Item::dataset(
                format!("N{}", items.len() + 1),
                category,
                subcategory,
                words(title),
                words(abstract_text),
            ));
            items.len() - 1
        });
        taxonomy
            .entry(category.to_owned())
            .or_default()
            .insert(subcategory.to_owned());
        rows.push(Row {
            user: user.to_owned(),
            time: time_key(ts),
            item,
            click,
        });
    }

    let keys: Vec<TimeKey> = rows.iter().map(|r| r.time.clone()).collect();
    let interactions = rows
        .into_iter()
        .zip(ordinals(&keys))
        .map(|(row, timestamp)| Interaction {
            user_id: row.user,
            item_id: items[row.item].id.clone(),
            timestamp,
            signal: row.click,
        })
        .collect();
    let corpus = Corpus::new(items, interactions, taxonomy, SignalKind::Click)?;
    Ok(LoadReport { corpus, rejects })
}

/// Writes a click corpus in the same TSV layout (no header, ordinal
/// timestamps).
pub fn write_behaviors(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    let mut inters: Vec<_> = corpus.interactions().iter().collect();
    inters.sort_by_key(|i| i.timestamp);
    for inter in inters {
        let item = corpus
            .item(&inter.item_id)
            .expect("corpus interactions reference known items");
        let click = u8::from(inter.interested(corpus.signal()));
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            inter.user_id,
            inter.timestamp,
            item.category,
            item.subcategory,
            item.title.join(" "),
            item.abstract_text.join(" "),
            click
        )
        .expect("writing to a Vec cannot fail");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
