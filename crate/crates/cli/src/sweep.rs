//! Parameter grids: every grid point is the base scenario with some
//! fields replaced, addressed by dotted paths such as `traffic.rate`.

use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::report::{self, Status};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub values: Vec<Value>,
}

/// Points are the cartesian product of `axes`, each combined with every
/// entry of `points`. Omitted parts contribute nothing; an entirely empty
/// grid has zero points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    pub axes: Vec<Axis>,
    pub points: Vec<Map<String, Value>>,
}

impl Grid {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow::anyhow!("{}: {}", e.path(), e.inner()))
            .with_context(|| format!("invalid grid {}", path.display()))
    }

    pub fn expand(&self) -> Vec<Map<String, Value>> {
        if self.axes.is_empty() && self.points.is_empty() {
            return Vec::new();
        }
        let mut out = vec![Map::new()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|base| {
                    axis.values.iter().map(move |v| {
                        let mut m = base.clone();
                        m.insert(axis.path.clone(), v.clone());
                        m
                    })
                })
                .collect();
        }
        if !self.points.is_empty() {
            out = out
                .into_iter()
                .flat_map(|base| {
                    self.points.iter().map(move |p| {
                        let mut m = base.clone();
                        m.extend(p.clone());
                        m
                    })
                })
                .collect();
        }
        out
    }
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> anyhow::Result<()> {
    let mut cur = doc;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        let obj = match cur {
            Value::Object(m) => m,
            _ => bail!("{path}: `{key}` is not inside an object"),
        };
        if parts.peek().is_none() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key).or_insert_with(|| Value::Object(Map::new()));
    }
    bail!("empty override path")
}

pub fn apply(base: &Scenario, overrides: &Map<String, Value>) -> anyhow::Result<Scenario> {
    let mut doc = serde_json::to_value(base)?;
    for (path, v) in overrides {
        set_path(&mut doc, path, v.clone())?;
    }
    Scenario::from_json(&doc.to_string())
}

#[derive(Debug, Serialize)]
pub struct IndexEntry {
    pub index: usize,
    pub dir: String,
    pub overrides: Map<String, Value>,
    /// `ok`, `disagreement`, or `failed`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Index {
    pub total: usize,
    pub failed: usize,
    pub entries: Vec<IndexEntry>,
}

fn run_point(
    base: &Scenario,
    overrides: &Map<String, Value>,
    dir: &Path,
) -> anyhow::Result<Status> {
    let scenario = apply(base, overrides)?;
    let report = report::run(&scenario)?;
    report::write(&report, dir)?;
    Ok(report.status)
}

/// Runs every grid point concurrently and writes `index.json`. A failing
/// point is recorded in the index and does not stop the others.
pub fn run(base: &Scenario, grid: &Grid, out: &Path) -> anyhow::Result<Index> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let points = grid.expand();
    let entries: Vec<IndexEntry> = points
        .into_par_iter()
        .enumerate()
        .map(|(index, overrides)| {
            let dir = format!("point-{index:04}");
            let (status, error) = match run_point(base, &overrides, &out.join(&dir)) {
                Ok(Status::Ok) => ("ok".to_string(), None),
                Ok(Status::Disagreement) => ("disagreement".to_string(), None),
                Err(e) => ("failed".to_string(), Some(format!("{e:#}"))),
            };
            IndexEntry {
                index,
                dir,
                overrides,
                status,
                error,
            }
        })
        .collect();
    let index = Index {
        total: entries.len(),
        failed: entries.iter().filter(|e| e.status == "failed").count(),
        entries,
    };
    let f = std::fs::File::create(out.join("index.json"))?;
    serde_json::to_writer_pretty(f, &index)?;
    Ok(index)
}
