use std::collections::HashSet;

use petgraph::algo::astar;
use petgraph::graph::{NodeIndex, UnGraph};

use super::{config_in_collision, segment_is_free, Trajectory};
use crate::collision::EnvironmentMesh;
use crate::error::{Error, Result};
use crate::mdn::{MdnParams, TendonConfig};
use crate::rng;
use rand::Rng as _;

#[derive(Debug, Clone, PartialEq)]
pub struct PrmParams {
    pub nodes: usize,
    pub neighbors: usize,
    /// Largest config-space gap between checked states along an edge.
    pub edge_step: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub seed: u64,
}

impl Default for PrmParams {
    fn default() -> Self {
        Self { nodes: 500, neighbors: 10, edge_step: 0.002, d_min: 0.0, d_max: 0.03, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roadmap {
    pub nodes: Vec<TendonConfig>,
    /// `(i, j, length)` with `i < j`, no duplicates.
    pub edges: Vec<(usize, usize, f64)>,
}

impl Roadmap {
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b, _)| {
            if a == i {
                Some(b)
            } else if b == i {
                Some(a)
            } else {
                None
            }
        })
    }

    /// Number of connected components (isolated nodes included).
    pub fn component_count(&self) -> usize {
        let mut g = UnGraph::<(), f64>::new_undirected();
        for _ in &self.nodes {
            g.add_node(());
        }
        for &(a, b, w) in &self.edges {
            g.add_edge(NodeIndex::new(a), NodeIndex::new(b), w);
        }
        petgraph::algo::connected_components(&g)
    }
}

/// Indices of `nodes` sorted by distance to `q`, nearest first, lower
/// index first on ties.
fn by_distance(nodes: &[TendonConfig], q: &TendonConfig) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = nodes.iter().enumerate().map(|(i, n)| (n.distance(q), i)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d
}

/// Samples collision-free nodes and links each to its `neighbors` nearest
/// nodes with edges whose interpolated states all pass the mean check.
pub fn prm_build(env: &EnvironmentMesh, model: &MdnParams, params: &PrmParams) -> Result<Roadmap> {
    if params.nodes < 2 {
        return Err(Error::invalid("a roadmap needs at least two samples"));
    }
    if !(params.edge_step > 0.0) || !(params.d_min < params.d_max) {
        return Err(Error::invalid("edge step must be positive and limits ordered"));
    }
    let mut rng = rng::rng(rng::stage(params.seed, "prm"));
    let mut nodes = Vec::new();
    for _ in 0..params.nodes {
        let c = TendonConfig((0..model.inputs).map(|_| rng.random_range(params.d_min..=params.d_max)).collect());
        if !config_in_collision(model, env, &c)? {
            nodes.push(c);
        }
    }

    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut seen = HashSet::new();
    for i in 0..nodes.len() {
        for &(len, j) in by_distance(&nodes, &nodes[i]).iter().skip(1).take(params.neighbors) {
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                continue;
            }
            if segment_is_free(model, env, &nodes[key.0], &nodes[key.1], params.edge_step)? {
                edges.push((key.0, key.1, len));
            }
        }
    }
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Ok(Roadmap { nodes, edges })
}

/// Shortest config-space path from `start` to `goal` through the roadmap.
/// Start and goal attach to their nearest visible nodes, up to the
/// roadmap's neighbor count, so every path has an intermediate waypoint.
pub fn prm_query(
    roadmap: &Roadmap,
    env: &EnvironmentMesh,
    model: &MdnParams,
    start: &TendonConfig,
    goal: &TendonConfig,
    params: &PrmParams,
) -> Result<Trajectory> {
    for (name, c) in [("start", start), ("goal", goal)] {
        if !c.within(params.d_min, params.d_max) || c.len() != model.inputs {
            return Err(Error::invalid(format!("{name} {c} is outside the displacement limits")));
        }
        if config_in_collision(model, env, c)? {
            return Err(Error::invalid(format!("{name} {c} fails the mean collision check")));
        }
    }

    let n = roadmap.nodes.len();
    let mut g = UnGraph::<(), f64>::new_undirected();
    for _ in 0..n + 2 {
        g.add_node(());
    }
    for &(a, b, w) in &roadmap.edges {
        g.add_edge(NodeIndex::new(a), NodeIndex::new(b), w);
    }
    let (s, t) = (NodeIndex::new(n), NodeIndex::new(n + 1));
    let mut attached = [0usize; 2];
    for (slot, (idx, q)) in [(s, start), (t, goal)].into_iter().enumerate() {
        for (len, j) in by_distance(&roadmap.nodes, q) {
            if attached[slot] >= params.neighbors {
                break;
            }
            if segment_is_free(model, env, q, &roadmap.nodes[j], params.edge_step)? {
                g.add_edge(idx, NodeIndex::new(j), len);
                attached[slot] += 1;
            }
        }
    }
    if attached[0] == 0 {
        return Err(Error::PathNotFound("start cannot reach any roadmap node".into()));
    }
    if attached[1] == 0 {
        return Err(Error::PathNotFound("goal cannot reach any roadmap node".into()));
    }

    let (_, path) = astar(&g, s, |v| v == t, |e| *e.weight(), |_| 0.0)
        .ok_or_else(|| Error::PathNotFound("start and goal lie in different roadmap components".into()))?;
    let waypoints = path
        .into_iter()
        .map(|v| match v.index() {
            i if i == n => start.clone(),
            i if i == n + 1 => goal.clone(),
            i => roadmap.nodes[i].clone(),
        })
        .collect();
    Trajectory::new(waypoints)
}
