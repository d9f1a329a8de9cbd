//! Network topology: node roles, per-node priors, and stochastic links.
//!
//! Topologies are loaded from JSON (or built in code) and resolved into an
//! indexed [`SyncGraph`] whose per-node priors live in the
//! `[1/skew, offset/skew]` coordinates used by the estimators.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SyncError};
use crate::gaussian::ThetaState;

/// Node role in a synchronization run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Master node: its clock defines reference time (exact prior).
    Mn,
    /// Participates in network-wide belief propagation.
    Bp,
    /// Edge node synchronized pairwise against a parent.
    Brf,
}

impl Default for Role {
    fn default() -> Self {
        Role::Bp
    }
}

/// One prior component in clock units. `variance: null` (or absent) means
/// unbounded; `0.0` on both components of a node's prior means exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorComponent {
    pub mean: f64,
    #[serde(default)]
    pub variance: Option<f64>,
}

/// Per-node prior on offset (ns) and skew (ratio).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorCfg {
    pub offset: PriorComponent,
    pub skew: PriorComponent,
}

impl PriorCfg {
    /// Unbounded offset, skew close to 1: the default for ordinary nodes.
    pub fn default_node() -> Self {
        PriorCfg {
            offset: PriorComponent {
                mean: 0.0,
                variance: None,
            },
            skew: PriorComponent {
                mean: 1.0,
                variance: Some(1e-4),
            },
        }
    }

    /// Exact reference prior for the master node.
    pub fn master() -> Self {
        PriorCfg {
            offset: PriorComponent {
                mean: 0.0,
                variance: Some(0.0),
            },
            skew: PriorComponent {
                mean: 1.0,
                variance: Some(0.0),
            },
        }
    }
}

/// Node entry of a topology file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCfg {
    pub id: String,
    #[serde(default)]
    pub role: Role,
    /// Defaults to the exact prior for `mn` nodes and to
    /// [`PriorCfg::default_node`] otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorCfg>,
}

/// Link delay: a fixed value or a uniform sampling range (ns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelaySpec {
    Fixed(f64),
    Range([f64; 2]),
}

/// Edge entry of a topology file. Omitted fields fall back to the
/// scenario's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCfg {
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ns: Option<DelaySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_t_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_r_ns: Option<f64>,
    /// Which endpoint sends the first stamp of each round; defaults to `a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initiator: Option<String>,
}

/// Topology file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeCfg>,
    pub edges: Vec<EdgeCfg>,
}

impl Topology {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SyncError::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The default benchmark network: a seven-node backhaul ring
    /// n1–n2–…–n7–n1 with chords n2–n7 and n4–n7, master n7, and two base
    /// stations bs1 and bs6 hanging off n1 and n6.
    pub fn default_mesh() -> Self {
        let mut nodes: Vec<NodeCfg> = (1..=7)
            .map(|i| NodeCfg {
                id: format!("n{i}"),
                role: if i == 7 { Role::Mn } else { Role::Bp },
                prior: None,
            })
            .collect();
        nodes.push(NodeCfg {
            id: "bs1".into(),
            role: Role::Brf,
            prior: None,
        });
        nodes.push(NodeCfg {
            id: "bs6".into(),
            role: Role::Brf,
            prior: None,
        });
        let pair = |a: &str, b: &str| EdgeCfg {
            a: a.into(),
            b: b.into(),
            delay_ns: None,
            sigma_t_ns: None,
            sigma_r_ns: None,
            initiator: None,
        };
        let edges = vec![
            pair("n1", "n2"),
            pair("n2", "n3"),
            pair("n3", "n4"),
            pair("n4", "n5"),
            pair("n5", "n6"),
            pair("n6", "n7"),
            pair("n7", "n1"),
            pair("n2", "n7"),
            pair("n4", "n7"),
            pair("n1", "bs1"),
            pair("n6", "bs6"),
        ];
        Topology { nodes, edges }
    }
}

/// A resolved edge: node indices plus the link parameters (delay may still
/// be a range; it is sampled per trial).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub delay: DelaySpec,
    pub sigma_t_ns: f64,
    pub sigma_r_ns: f64,
    /// Index of the endpoint that sends the first stamp.
    pub initiator: usize,
}

impl GraphEdge {
    pub fn responder(&self) -> usize {
        if self.initiator == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn peer(&self, node: usize) -> usize {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Resolved prior of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePrior {
    pub state: ThetaState,
    /// Prior mean in `[1/skew, offset/skew]` coordinates, used to anchor
    /// estimate extraction in uninformed directions.
    pub anchor: Vector2<f64>,
}

/// Validated, index-based view of a topology.
#[derive(Debug, Clone)]
pub struct SyncGraph {
    pub ids: Vec<String>,
    pub roles: Vec<Role>,
    pub priors: Vec<NodePrior>,
    pub edges: Vec<GraphEdge>,
    adjacency: Vec<Vec<usize>>,
}

/// Defaults applied to edges that do not specify their own link parameters.
#[derive(Debug, Clone, Copy)]
pub struct LinkDefaults {
    pub delay: DelaySpec,
    pub sigma_t_ns: f64,
    pub sigma_r_ns: f64,
}

impl Default for LinkDefaults {
    fn default() -> Self {
        LinkDefaults {
            delay: DelaySpec::Range([200.0, 300.0]),
            sigma_t_ns: 4.0,
            sigma_r_ns: 4.0,
        }
    }
}

impl SyncGraph {
    pub fn from_topology(topology: &Topology, defaults: &LinkDefaults) -> Result<Self> {
        if topology.nodes.is_empty() {
            return Err(SyncError::Config("topology has no nodes".into()));
        }
        let mut index = HashMap::new();
        for (i, node) in topology.nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(SyncError::Config(format!(
                    "duplicate node id '{}'",
                    node.id
                )));
            }
        }
        let ids: Vec<String> = topology.nodes.iter().map(|n| n.id.clone()).collect();
        let roles: Vec<Role> = topology.nodes.iter().map(|n| n.role).collect();

        let priors = topology
            .nodes
            .iter()
            .map(|n| {
                let cfg = n.prior.unwrap_or(match n.role {
                    Role::Mn => PriorCfg::master(),
                    _ => PriorCfg::default_node(),
                });
                let state = ThetaState::from_clock_prior(
                    cfg.offset.mean,
                    cfg.offset.variance,
                    cfg.skew.mean,
                    cfg.skew.variance,
                )?;
                let anchor = Vector2::new(
                    1.0 / cfg.skew.mean,
                    cfg.offset.mean / cfg.skew.mean,
                );
                Ok(NodePrior { state, anchor })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut edges = Vec::with_capacity(topology.edges.len());
        let mut seen = std::collections::HashSet::new();
        for e in &topology.edges {
            let a = *index
                .get(&e.a)
                .ok_or_else(|| SyncError::Config(format!("edge references unknown node '{}'", e.a)))?;
            let b = *index
                .get(&e.b)
                .ok_or_else(|| SyncError::Config(format!("edge references unknown node '{}'", e.b)))?;
            if a == b {
                return Err(SyncError::Config(format!("self-loop on node '{}'", e.a)));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(SyncError::Config(format!(
                    "duplicate edge between '{}' and '{}'",
                    e.a, e.b
                )));
            }
            let initiator = match &e.initiator {
                None => a,
                Some(id) if *id == e.a => a,
                Some(id) if *id == e.b => b,
                Some(id) => {
                    return Err(SyncError::Config(format!(
                        "edge initiator '{id}' is not an endpoint of {}-{}",
                        e.a, e.b
                    )))
                }
            };
            let delay = e.delay_ns.unwrap_or(defaults.delay);
            match delay {
                DelaySpec::Fixed(d) if d > 0.0 => {}
                DelaySpec::Range([lo, hi]) if lo > 0.0 && hi >= lo => {}
                _ => {
                    return Err(SyncError::Config(format!(
                        "invalid delay specification on edge {}-{}",
                        e.a, e.b
                    )))
                }
            }
            let sigma_t_ns = e.sigma_t_ns.unwrap_or(defaults.sigma_t_ns);
            let sigma_r_ns = e.sigma_r_ns.unwrap_or(defaults.sigma_r_ns);
            if sigma_t_ns < 0.0 || sigma_r_ns < 0.0 {
                return Err(SyncError::Config(format!(
                    "negative stamping noise on edge {}-{}",
                    e.a, e.b
                )));
            }
            edges.push(GraphEdge {
                a,
                b,
                delay,
                sigma_t_ns,
                sigma_r_ns,
                initiator,
            });
        }

        let mut adjacency = vec![Vec::new(); ids.len()];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.a].push(i);
            adjacency[e.b].push(i);
        }

        let graph = SyncGraph {
            ids,
            roles,
            priors,
            edges,
            adjacency,
        };
        if !graph.is_connected() {
            return Err(SyncError::Graph("topology is not connected".into()));
        }
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Indices of edges incident to `node`.
    pub fn edges_of(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn master_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.roles[i] == Role::Mn).collect()
    }

    fn is_connected(&self) -> bool {
        if self.ids.is_empty() {
            return false;
        }
        let mut visited = vec![false; self.len()];
        let mut stack = vec![0usize];
        visited[0] = true;
        while let Some(n) = stack.pop() {
            for &ei in &self.adjacency[n] {
                let peer = self.edges[ei].peer(n);
                if !visited[peer] {
                    visited[peer] = true;
                    stack.push(peer);
                }
            }
        }
        visited.into_iter().all(|v| v)
    }

    /// Connectivity of an induced subset (used to validate role plans).
    pub fn subset_connected(&self, keep: &[bool]) -> bool {
        let count = keep.iter().filter(|&&k| k).count();
        if count == 0 {
            return false;
        }
        let start = keep.iter().position(|&k| k).unwrap();
        let mut visited = vec![false; self.len()];
        let mut stack = vec![start];
        visited[start] = true;
        let mut seen = 1;
        while let Some(n) = stack.pop() {
            for &ei in &self.adjacency[n] {
                let peer = self.edges[ei].peer(n);
                if keep[peer] && !visited[peer] {
                    visited[peer] = true;
                    seen += 1;
                    stack.push(peer);
                }
            }
        }
        seen == count
    }

    /// Induced subgraph on the kept nodes (edges with both endpoints kept).
    /// Returns the subgraph plus, per subgraph node and edge, the original
    /// indices.
    pub fn subgraph(&self, keep: &[bool]) -> Result<(SyncGraph, Vec<usize>, Vec<usize>)> {
        let node_map: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        if node_map.is_empty() {
            return Err(SyncError::Graph("empty subgraph".into()));
        }
        let mut new_index = vec![usize::MAX; self.len()];
        for (new, &orig) in node_map.iter().enumerate() {
            new_index[orig] = new;
        }
        let mut edges = Vec::new();
        let mut edge_map = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            if keep[e.a] && keep[e.b] {
                edges.push(GraphEdge {
                    a: new_index[e.a],
                    b: new_index[e.b],
                    delay: e.delay,
                    sigma_t_ns: e.sigma_t_ns,
                    sigma_r_ns: e.sigma_r_ns,
                    initiator: new_index[e.initiator],
                });
                edge_map.push(i);
            }
        }
        let mut adjacency = vec![Vec::new(); node_map.len()];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.a].push(i);
            adjacency[e.b].push(i);
        }
        let sub = SyncGraph {
            ids: node_map.iter().map(|&i| self.ids[i].clone()).collect(),
            roles: node_map.iter().map(|&i| self.roles[i]).collect(),
            priors: node_map.iter().map(|&i| self.priors[i].clone()).collect(),
            edges,
            adjacency,
        };
        if !sub.is_connected() {
            return Err(SyncError::Graph("subgraph is not connected".into()));
        }
        Ok((sub, node_map, edge_map))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mesh_resolves() {
        let g = SyncGraph::from_topology(&Topology::default_mesh(), &LinkDefaults::default())
            .unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.edges.len(), 11);
        assert_eq!(g.master_nodes(), vec![6]);
        assert_eq!(g.degree(g.node_index("bs1").unwrap()), 1);
        assert_eq!(g.degree(g.node_index("n7").unwrap()), 4);
        assert!(g.priors[6].state.0.is_constraint());
    }

    #[test]
    fn topology_json_round_trip() {
        let t = Topology::default_mesh();
        let json = serde_json::to_string_pretty(&t).unwrap();
        let back: Topology = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn validation_catches_bad_configs() {
        let defaults = LinkDefaults::default();
        let mut t = Topology::default_mesh();
        t.edges[0].b = "nope".into();
        assert!(SyncGraph::from_topology(&t, &defaults).is_err());

        let mut t = Topology::default_mesh();
        t.edges[0].b = t.edges[0].a.clone();
        assert!(SyncGraph::from_topology(&t, &defaults).is_err());

        let mut t = Topology::default_mesh();
        t.edges.push(t.edges[0].clone());
        assert!(SyncGraph::from_topology(&t, &defaults).is_err());

        // Disconnected: drop every edge touching bs1.
        let mut t = Topology::default_mesh();
        t.edges.retain(|e| e.a != "bs1" && e.b != "bs1");
        assert!(matches!(
            SyncGraph::from_topology(&t, &defaults),
            Err(SyncError::Graph(_))
        ));
    }

    #[test]
    fn initiator_resolution() {
        let defaults = LinkDefaults::default();
        let mut t = Topology::default_mesh();
        t.edges[0].initiator = Some("n2".into());
        let g = SyncGraph::from_topology(&t, &defaults).unwrap();
        assert_eq!(g.edges[0].initiator, g.node_index("n2").unwrap());
        assert_eq!(g.edges[0].responder(), g.node_index("n1").unwrap());

        t.edges[0].initiator = Some("bs6".into());
        assert!(SyncGraph::from_topology(&t, &defaults).is_err());
    }

    #[test]
    fn subgraph_keeps_structure() {
        let g = SyncGraph::from_topology(&Topology::default_mesh(), &LinkDefaults::default())
            .unwrap();
        // Keep the backhaul only.
        let keep: Vec<bool> = g.ids.iter().map(|id| !id.starts_with("bs")).collect();
        let (sub, node_map, edge_map) = g.subgraph(&keep).unwrap();
        assert_eq!(sub.len(), 7);
        assert_eq!(sub.edges.len(), 9);
        assert_eq!(node_map.len(), 7);
        assert_eq!(edge_map.len(), 9);
        assert_eq!(sub.master_nodes().len(), 1);
    }
}
