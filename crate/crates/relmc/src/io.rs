//! File formats and atomic output writing.
//!
//! Systems are stored as UTF-8 JSON. Nodes are integers: 0 is the
//! source, n+1 the sink, and 1..=n the components. Cut sets serialize
//! as sorted integer arrays. All writes go through a
//! write-temp-then-rename so interrupted runs never leave corrupt
//! outputs. CSV outputs use '.' decimals, ',' separators, LF line
//! endings and a header row.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::generator::GrowthMove;
use crate::system::{CompId, ComponentModel, CutSet, Network, Node, System};

/// On-disk system document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    pub source: u32,
    pub sink: u32,
    pub components: Vec<ComponentModel>,
    /// Edges over integer nodes: source, sink, or component ids.
    pub edges: Vec<(u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutsets: Option<Vec<Vec<CompId>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub move_log: Option<Vec<GrowthMove>>,
}

impl SystemFile {
    pub fn from_system(sys: &System, move_log: Option<Vec<GrowthMove>>) -> Self {
        let n = sys.network.n_components;
        let encode = |node: Node| -> u32 {
            match node {
                Node::Source => 0,
                Node::Sink => n + 1,
                Node::Comp(id) => id,
            }
        };
        SystemFile {
            source: 0,
            sink: n + 1,
            components: sys.components.clone(),
            edges: sys.network.edges.iter().map(|&(a, b)| (encode(a), encode(b))).collect(),
            cutsets: Some(sys.cutsets.iter().map(|c| c.ids().to_vec()).collect()),
            move_log,
        }
    }

    pub fn into_system(self) -> Result<System> {
        let n = self.components.len() as u32;
        if self.source == self.sink {
            return Err(Error::Input("source and sink must differ".into()));
        }
        for term in [self.source, self.sink] {
            if (1..=n).contains(&term) {
                return Err(Error::Input(format!(
                    "terminal node {term} collides with a component id"
                )));
            }
        }
        let decode = |v: u32| -> Result<Node> {
            if v == self.source {
                Ok(Node::Source)
            } else if v == self.sink {
                Ok(Node::Sink)
            } else if v >= 1 && v <= n && v != self.source && v != self.sink {
                Ok(Node::Comp(v))
            } else {
                Err(Error::Input(format!(
                    "edge node {v} is neither a terminal nor a component id in 1..={n}"
                )))
            }
        };
        for (i, c) in self.components.iter().enumerate() {
            if c.id != i as u32 + 1 {
                return Err(Error::Input(format!(
                    "component ids must be 1..=n in order; position {i} has id {}",
                    c.id
                )));
            }
            c.lifetime.validate().map_err(|e| Error::Input(format!("component {}: {e}", c.id)))?;
            if let Some(r) = &c.repair {
                r.validate().map_err(|e| Error::Input(format!("component {} repair: {e}", c.id)))?;
            }
        }
        let edges = self
            .edges
            .iter()
            .map(|&(a, b)| Ok((decode(a)?, decode(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let cutsets = self
            .cutsets
            .unwrap_or_default()
            .into_iter()
            .map(|ids| {
                if ids.is_empty() {
                    return Err(Error::Input("empty cut set in file".into()));
                }
                if ids.iter().any(|&id| id == 0 || id > n) {
                    return Err(Error::Input(format!("cut set {ids:?} out of range")));
                }
                Ok(CutSet::new(ids))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(System {
            network: Network { n_components: n, edges },
            components: self.components,
            cutsets,
        })
    }
}

pub fn load_system(path: &Path) -> Result<System> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let file: SystemFile = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    file.into_system()
}

pub fn save_system(path: &Path, sys: &System, move_log: Option<Vec<GrowthMove>>) -> Result<()> {
    let file = SystemFile::from_system(sys, move_log);
    write_json(path, &file)
}

/// Atomic write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Render a float for CSV: shortest round-trip form, '.' decimal.
pub fn csv_num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

/// Write a CSV with LF endings and a header row, atomically.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Record of one CLI run, written alongside its outputs. Replaying the
/// stored argv with a single worker reproduces the outputs
/// byte-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// The full argument vector after the program name.
    pub argv: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub repairable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PathBuf>,
    /// Growth parameters, recorded for `generate` runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<crate::generator::GrowthConfig>,
    pub workers: usize,
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}
