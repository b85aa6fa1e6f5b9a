//! Tab-separated interactions: `user_id \t item_id \t domain_id \t timestamp`,
//! one row per interaction, optional header row.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::catalog::{Catalog, Dataset, Event, InteractionSequence};
use crate::error::{Error, Result};

const HEADER: [&str; 4] = ["user_id", "item_id", "domain_id", "timestamp"];

/// Loads a TSV file. With a catalog, item and domain ids are interpreted
/// against it; without one, domains are named by their ids (sorted) and items
/// are interned in order of first appearance.
pub fn load_tsv(path: &Path, catalog: Option<&Catalog>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_tsv(file, path, catalog)
}

pub fn read_tsv(input: impl Read, path: &Path, catalog: Option<&Catalog>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(input);
    let err = |line: usize, reason: String| Error::Parse { path: path.to_path_buf(), line, reason };

    let mut rows: Vec<(String, String, String, i64)> = Vec::new();
    let mut lines = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 1;
        let rec = rec.map_err(|e| err(line, e.to_string()))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != 4 {
            return Err(err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        if k == 0 && rec.iter().zip(HEADER).all(|(a, b)| a.trim() == b) {
            continue;
        }
        let ts = rec[3].trim().parse::<i64>().map_err(|e| err(line, format!("timestamp {:?}: {e}", &rec[3])))?;
        rows.push((rec[0].trim().to_string(), rec[1].trim().to_string(), rec[2].trim().to_string(), ts));
        lines.push(line);
    }

    let catalog = match catalog {
        Some(c) => c.clone(),
        None => infer_catalog(&rows),
    };
    let interned: HashMap<(usize, &str), usize> =
        catalog.item_names.iter().enumerate().map(|(i, n)| ((catalog.item_domain[i], n.as_str()), i)).collect();

    let mut order: Vec<String> = Vec::new();
    let mut by_user: HashMap<String, Vec<Event>> = HashMap::new();
    for ((user, item, domain, ts), &line) in rows.iter().zip(&lines) {
        let d = catalog.domain_index(domain).ok_or_else(|| Error::UnknownDomain(domain.clone()))?;
        let id = if catalog.item_names.is_empty() {
            let id: usize = item.parse().map_err(|e| err(line, format!("item {item:?}: {e}")))?;
            if catalog.domain_of(id) != Some(d) {
                return Err(err(line, format!("item {item} is not in domain {domain:?}")));
            }
            id
        } else {
            *interned.get(&(d, item.as_str())).ok_or_else(|| err(line, format!("unknown item {item:?}")))?
        };
        by_user
            .entry(user.clone())
            .or_insert_with(|| {
                order.push(user.clone());
                Vec::new()
            })
            .push(Event { item: id, domain: d, timestamp: *ts });
    }
    let sequences = order
        .into_iter()
        .map(|user| {
            let mut events = by_user.remove(&user).unwrap_or_default();
            events.sort_by_key(|e| e.timestamp);
            InteractionSequence { user, events }
        })
        .collect();
    Ok(Dataset { catalog, sequences })
}

fn infer_catalog(rows: &[(String, String, String, i64)]) -> Catalog {
    let mut names: Vec<String> = rows.iter().map(|r| r.2.clone()).collect();
    names.sort_by(|a, b| match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    });
    names.dedup();
    let mut ids: HashMap<(usize, String), usize> = HashMap::new();
    let mut item_domain = Vec::new();
    let mut item_names = Vec::new();
    for r in rows {
        let d = names.iter().position(|n| *n == r.2).expect("collected");
        ids.entry((d, r.1.clone())).or_insert_with(|| {
            item_domain.push(d);
            item_names.push(r.1.clone());
            item_domain.len() - 1
        });
    }
    Catalog { domain_names: names, item_domain, item_names }
}

pub fn write_tsv(out: impl Write, data: &Dataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').quote_style(csv::QuoteStyle::Never).from_writer(out);
    w.write_record(HEADER)?;
    for s in &data.sequences {
        for e in &s.events {
            w.write_record([
                s.user.clone(),
                data.catalog.item_name(e.item),
                data.catalog.domain_names[e.domain].clone(),
                e.timestamp.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_tsv(path: &Path, data: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_tsv(std::io::BufWriter::new(file), data)
}
