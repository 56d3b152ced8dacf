//! Scene files.
//!
//! ```text
//! # comments start with '#'
//! mesh obstacles.obj                     # path relative to the scene file
//! mesh wall.obj 1 0 0 0.05 0 1 0 0 0 0 1 0   # optional row-major 3x4 transform
//! start 0.0 0.0 0.0 0.0                  # tendon displacements, meters
//! goal 0.02 0.0 0.01 0.0
//! max_edge 0.01                          # densification, meters (optional)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::mesh::{parse_obj, transform_mesh, EnvironmentMesh, DEFAULT_MAX_EDGE};
use crate::error::{Error, Result};
use crate::gmm::line_offsets;
use crate::mdn::TendonConfig;

#[derive(Debug, Clone)]
pub struct Scene {
    pub env: EnvironmentMesh,
    pub start: Option<TendonConfig>,
    pub goal: Option<TendonConfig>,
}

#[derive(Debug, Clone, PartialEq)]
struct MeshEntry {
    path: PathBuf,
    transform: Option<[f64; 12]>,
}

impl Scene {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses scene text; mesh paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut meshes = Vec::new();
        let mut start = None;
        let mut goal = None;
        let mut max_edge = DEFAULT_MAX_EDGE;
        for (off, raw) in line_offsets(text) {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Parse { offset: off, message: m };
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or("");
            let rest: Vec<&str> = it.collect();
            let reals = |vals: &[&str]| -> Result<Vec<f64>> {
                vals.iter().map(|v| v.parse::<f64>().map_err(|e| err(format!("bad number `{v}`: {e}")))).collect()
            };
            match key {
                "mesh" => {
                    let (file, nums) = rest.split_first().ok_or_else(|| err("mesh needs a path".into()))?;
                    let transform = match nums.len() {
                        0 => None,
                        12 => {
                            let v = reals(nums)?;
                            let mut t = [0.0; 12];
                            t.copy_from_slice(&v);
                            Some(t)
                        }
                        k => return Err(err(format!("transform needs 12 numbers, found {k}"))),
                    };
                    meshes.push(MeshEntry { path: base.join(file), transform });
                }
                "start" => start = Some(TendonConfig(reals(&rest)?)),
                "goal" => goal = Some(TendonConfig(reals(&rest)?)),
                "max_edge" => {
                    let v = reals(&rest)?;
                    max_edge = *v.first().ok_or_else(|| err("max_edge needs a value".into()))?;
                }
                other => return Err(err(format!("unknown scene record `{other}`"))),
            }
        }
        let mut parts = Vec::with_capacity(meshes.len());
        for m in &meshes {
            let text = fs::read_to_string(&m.path)?;
            let (mut v, t) = parse_obj(&text)?;
            if let Some(rows) = &m.transform {
                transform_mesh(&mut v, rows);
            }
            parts.push(EnvironmentMesh::with_max_edge(v, t, max_edge)?);
        }
        let env = EnvironmentMesh::merge(&parts, max_edge)?;
        Ok(Self { env, start, goal })
    }
}
