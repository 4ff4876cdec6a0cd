//! Loading, validating and sampling commonsense triples.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verbalizer::TemplateRegistry;

/// A relation type. The ten canonical relations are always known; anything
/// else is carried as [`Relation::Other`] and only accepted when a template
/// has been registered for it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    XWant,
    XReact,
    OWant,
    CapableOf,
    Desires,
    HinderedBy,
    IsBefore,
    IsAfter,
    AtLocation,
    HasSubEvent,
    Other(String),
}

impl Relation {
    pub const CANONICAL: [Relation; 10] = [
        Relation::XWant,
        Relation::XReact,
        Relation::OWant,
        Relation::CapableOf,
        Relation::Desires,
        Relation::HinderedBy,
        Relation::IsBefore,
        Relation::IsAfter,
        Relation::AtLocation,
        Relation::HasSubEvent,
    ];

    pub fn name(&self) -> &str {
        match self {
            Relation::XWant => "xWant",
            Relation::XReact => "xReact",
            Relation::OWant => "oWant",
            Relation::CapableOf => "CapableOf",
            Relation::Desires => "Desires",
            Relation::HinderedBy => "HinderedBy",
            Relation::IsBefore => "isBefore",
            Relation::IsAfter => "isAfter",
            Relation::AtLocation => "AtLocation",
            Relation::HasSubEvent => "HasSubEvent",
            Relation::Other(name) => name,
        }
    }

    pub fn is_canonical(&self) -> bool {
        !matches!(self, Relation::Other(_))
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relation {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        Ok(Relation::CANONICAL
            .iter()
            .find(|r| r.name() == s)
            .cloned()
            .unwrap_or_else(|| Relation::Other(s.to_string())))
    }
}

impl Serialize for Relation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Relation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub id: String,
    pub head: String,
    pub relation: Relation,
    #[serde(default)]
    pub tail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleFormat {
    Tsv,
    Jsonl,
}

impl TripleFormat {
    /// Guesses the format from a file extension; anything but `.jsonl`/`.json` is TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => TripleFormat::Jsonl,
            _ => TripleFormat::Tsv,
        }
    }
}

/// A row that could not be turned into a [`Triple`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the source file.
    pub line: usize,
    pub reason: String,
    pub content: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOutcome {
    pub triples: Vec<Triple>,
    pub rejects: Vec<Reject>,
}

#[derive(Deserialize)]
struct JsonRow {
    head: String,
    relation: String,
    #[serde(default)]
    tail: String,
    #[serde(default)]
    id: Option<String>,
}

/// Loads every parseable triple from `path` in file order.
///
/// Bad rows (too few columns, empty head, relation without a registered
/// template, duplicate id) go to the rejects list instead of failing the load.
/// Missing ids become `<relation>:<row-index>` with a 0-based row index.
pub fn load_triples(path: &Path, format: TripleFormat, templates: &TemplateRegistry) -> Result<LoadOutcome> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_triples(&text, format, templates))
}

pub fn parse_triples(text: &str, format: TripleFormat, templates: &TemplateRegistry) -> LoadOutcome {
    let mut out = LoadOutcome::default();
    let mut seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let reject = |reason: String| Reject {
            line: idx + 1,
            reason,
            content: line.to_string(),
        };

        let row = match format {
            TripleFormat::Tsv => {
                let cols: Vec<&str> = line.split('\t').collect();
                if idx == 0 && cols.len() >= 2 && cols[0] == "head" && cols[1] == "relation" {
                    continue;
                }
                if cols.len() < 2 {
                    out.rejects.push(reject(format!("expected at least 2 tab-separated columns, got {}", cols.len())));
                    continue;
                }
                JsonRow {
                    head: cols[0].to_string(),
                    relation: cols[1].to_string(),
                    tail: cols.get(2).map(|s| s.to_string()).unwrap_or_default(),
                    id: None,
                }
            }
            TripleFormat::Jsonl => match serde_json::from_str::<JsonRow>(line) {
                Ok(row) => row,
                Err(e) => {
                    out.rejects.push(reject(format!("malformed json: {e}")));
                    continue;
                }
            },
        };

        let head = row.head.trim();
        if head.is_empty() {
            out.rejects.push(reject("empty head".into()));
            continue;
        }
        let relation: Relation = row.relation.parse().unwrap_or_else(|never| match never {});
        if relation.name().is_empty() {
            out.rejects.push(reject("empty relation".into()));
            continue;
        }
        if !templates.has_relation(&relation) {
            out.rejects.push(reject(format!("no template registered for relation {relation}")));
            continue;
        }
        let id = row.id.unwrap_or_else(|| format!("{relation}:{idx}"));
        if !seen.insert(id.clone()) {
            out.rejects.push(reject(format!("duplicate id {id}")));
            continue;
        }
        out.triples.push(Triple {
            id,
            head: head.to_string(),
            relation,
            tail: row.tail.trim().to_string(),
        });
    }
    out
}

/// Writes the rejects report as JSON lines.
pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<()> {
    crate::jsonl::write_all(path, rejects)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub per_relation_count: usize,
    pub seed: u64,
    /// Relations to draw from; `None` means every relation present in the store.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<Vec<Relation>>,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            per_relation_count: 10,
            seed: 0,
            relations: None,
        }
    }
}

/// Draws `per_relation_count` triples per relation uniformly without
/// replacement. The store is sorted by id before drawing so the result only
/// depends on the store's contents and the seed. Output is ordered by
/// (relation name, id).
pub fn sample_triples(store: &[Triple], spec: &SampleSpec) -> Result<Vec<Triple>> {
    if spec.per_relation_count == 0 {
        return Err(Error::Config("per_relation_count must be at least 1".into()));
    }
    let mut by_relation: BTreeMap<String, Vec<&Triple>> = BTreeMap::new();
    for triple in store {
        by_relation.entry(triple.relation.name().to_string()).or_default().push(triple);
    }
    if let Some(wanted) = &spec.relations {
        let wanted: HashSet<&str> = wanted.iter().map(|r| r.name()).collect();
        for name in &wanted {
            by_relation.entry(name.to_string()).or_default();
        }
        by_relation.retain(|name, _| wanted.contains(name.as_str()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sample = Vec::with_capacity(by_relation.len() * spec.per_relation_count);
    for (relation, mut pool) in by_relation {
        if pool.len() < spec.per_relation_count {
            return Err(Error::InsufficientTriples {
                relation,
                needed: spec.per_relation_count,
                available: pool.len(),
            });
        }
        pool.sort_by(|a, b| a.id.cmp(&b.id));
        pool.dedup_by(|a, b| a.id == b.id);
        if pool.len() < spec.per_relation_count {
            return Err(Error::InsufficientTriples {
                relation,
                needed: spec.per_relation_count,
                available: pool.len(),
            });
        }
        let mut picked: Vec<Triple> = pool
            .choose_multiple(&mut rng, spec.per_relation_count)
            .map(|t| (*t).clone())
            .collect();
        picked.sort_by(|a, b| a.id.cmp(&b.id));
        sample.extend(picked);
    }
    Ok(sample)
}
