//! JSON-Lines dataset format: one search per line,
//!
//! ```text
//! {"query_id": str, "query": {name: value, ...}, "num_nights": int,
//!  "exchange_rate": float,
//!  "items": [{"item_id": str, "fixed": {name: value}, "scalevariant": {name: value}, "label": 0|1}, ...]}
//! ```
//!
//! Categorical query values are written as integers, numeric ones as floats.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Dataset, FeatureKind, FeatureSchema, ItemRecord, QueryRecord};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireQuery {
    query_id: String,
    query: IndexMap<String, Value>,
    num_nights: u32,
    exchange_rate: f64,
    items: Vec<WireItem>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireItem {
    item_id: String,
    fixed: IndexMap<String, f64>,
    scalevariant: IndexMap<String, f64>,
    label: u8,
}

fn take_named(map: &IndexMap<String, f64>, names: &[String], query_id: &str, group: &str) -> Result<Vec<f64>> {
    if map.len() != names.len() {
        let unknown = map.keys().find(|k| !names.contains(k));
        return Err(Error::Validation {
            query_id: query_id.to_string(),
            rule: match unknown {
                Some(k) => format!("unknown {group} feature `{k}`"),
                None => format!("expected {} {group} features, found {}", names.len(), map.len()),
            },
        });
    }
    names
        .iter()
        .map(|n| {
            map.get(n).copied().ok_or_else(|| Error::Validation {
                query_id: query_id.to_string(),
                rule: format!("missing {group} feature `{n}`"),
            })
        })
        .collect()
}

fn from_wire(wire: WireQuery, schema: &FeatureSchema) -> Result<QueryRecord> {
    let qid = wire.query_id;
    if wire.query.len() != schema.num_query_features() {
        let unknown = wire
            .query
            .keys()
            .find(|k| !schema.query_features.iter().any(|q| &q.name == *k));
        return Err(Error::Validation {
            query_id: qid,
            rule: match unknown {
                Some(k) => format!("unknown query feature `{k}`"),
                None => "wrong number of query features".into(),
            },
        });
    }
    let mut query_values = Vec::with_capacity(schema.num_query_features());
    for feature in &schema.query_features {
        let value = wire.query.get(&feature.name).ok_or_else(|| Error::Validation {
            query_id: qid.clone(),
            rule: format!("missing query feature `{}`", feature.name),
        })?;
        let v = match (&feature.kind, value) {
            (FeatureKind::Categorical { .. }, Value::Number(n)) if n.is_u64() => n.as_u64().unwrap() as f64,
            (FeatureKind::Numeric, Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
            _ => {
                return Err(Error::Validation {
                    query_id: qid,
                    rule: format!("bad value {value} for query feature `{}`", feature.name),
                })
            }
        };
        query_values.push(v);
    }
    let mut items = Vec::with_capacity(wire.items.len());
    for it in wire.items {
        items.push(ItemRecord {
            fixed: take_named(&it.fixed, &schema.item_features_fixed, &qid, "fixed")?,
            scalevariant: take_named(&it.scalevariant, &schema.item_features_scalevariant, &qid, "scale-variant")?,
            item_id: it.item_id,
            label: it.label,
        });
    }
    let record = QueryRecord {
        query_id: qid,
        query_values,
        num_nights: wire.num_nights,
        exchange_rate: wire.exchange_rate,
        items,
    };
    record.validate(schema)?;
    Ok(record)
}

fn to_wire(record: &QueryRecord, schema: &FeatureSchema) -> WireQuery {
    let query = schema
        .query_features
        .iter()
        .zip(&record.query_values)
        .map(|(f, &v)| {
            let value = match f.kind {
                FeatureKind::Categorical { .. } => Value::from(v as u64),
                FeatureKind::Numeric => Value::from(v),
            };
            (f.name.clone(), value)
        })
        .collect();
    let named = |names: &[String], values: &[f64]| names.iter().cloned().zip(values.iter().copied()).collect();
    WireQuery {
        query_id: record.query_id.clone(),
        query,
        num_nights: record.num_nights,
        exchange_rate: record.exchange_rate,
        items: record
            .items
            .iter()
            .map(|i| WireItem {
                item_id: i.item_id.clone(),
                fixed: named(&schema.item_features_fixed, &i.fixed),
                scalevariant: named(&schema.item_features_scalevariant, &i.scalevariant),
                label: i.label,
            })
            .collect(),
    }
}

/// Parses a JSON-Lines dataset, validating every record. Blank lines are skipped.
pub fn read_dataset<R: BufRead>(reader: R, schema: &FeatureSchema) -> Result<Dataset> {
    let mut queries = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireQuery = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        queries.push(from_wire(wire, schema)?);
    }
    Ok(Dataset::new(queries))
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?), schema)
}

pub fn write_dataset<W: Write>(mut writer: W, ds: &Dataset, schema: &FeatureSchema) -> Result<()> {
    for q in &ds.queries {
        serde_json::to_writer(&mut writer, &to_wire(q, schema))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset, schema: &FeatureSchema) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), ds, schema)
}
