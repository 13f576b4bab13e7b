//! Scenario trees and independent scenario sets.
//!
//! A [`ScenarioTree`] is a rooted tree of day-nodes. Every node carries the
//! data of one day split into `L` hourly posts: post durations, demand,
//! reservoir inflows and programmed availability rates for every unit.
//!
//! Nodes are stored sorted by time step (ties broken by id), so the dual
//! vector of dimension `D = L * |nodes|` is laid out as
//! `offset(node_index, post) = node_index * L + post`. Every module uses
//! this layout for prices and demand vectors.

mod io;
mod synth;
mod validate;

use std::collections::HashMap;

use thiserror::Error;

pub use io::{
    load_scenarios, load_tree, parse_scenarios, parse_tree, save_scenarios, save_tree,
    scenarios_to_string, tree_to_string, NodeRecord, PostRecord, ScenarioFile, ScenarioRecord,
    TreeFile, SCENARIO_FORMAT, TREE_FORMAT,
};
pub use synth::{generate_synthetic, DemandProfile, InflowProfile, SynthConfig};
pub use validate::{validate_tree, Rule, Violation};

/// Probability sums are checked against this absolute tolerance.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Error, Debug)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format tag `{0}`")]
    Format(String),
    #[error("node {node}: {message}")]
    Structure { node: i64, message: String },
    #[error("tree has {} invariant violation(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error("scenario set: {0}")]
    Scenarios(String),
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for ScenarioError {
    fn from(e: serde_json::Error) -> Self {
        ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// One day of the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Identifier as written in the tree file.
    pub id: i64,
    /// Day index `τ(n)`.
    pub time_step: usize,
    /// Index (not id) of the father node; `None` for the root.
    pub father: Option<usize>,
    /// Indices of the son nodes.
    pub sons: Vec<usize>,
    /// Probability `π_n` of being at this node.
    pub prob: f64,
    /// Transition probability `π_T(n)` from the father.
    pub trans_prob: f64,
    /// Hours per post.
    pub durations: Vec<f64>,
    /// Demand per post, MWh.
    pub demand: Vec<f64>,
    /// Natural inflows, `inflows[reservoir][post]`, MWh.
    pub inflows: Vec<Vec<f64>>,
    /// Programmed availability rate per thermal unit.
    pub thermal_programmed: Vec<f64>,
    /// Programmed availability rate per hydro unit.
    pub hydro_programmed: Vec<f64>,
    /// Optional demand standard deviation per post (MWh).
    pub sigma: Option<Vec<f64>>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.sons.is_empty()
    }

    /// Total inflow of the day for one reservoir.
    pub fn day_inflow(&self, reservoir: usize) -> f64 {
        self.inflows[reservoir].iter().sum()
    }
}

/// Header data shared by every node of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeShape {
    pub num_posts: usize,
    pub horizon: usize,
    pub thermal_units: usize,
    pub hydro_units: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    shape: TreeShape,
    nodes: Vec<Node>,
    index_of: HashMap<i64, usize>,
    by_time: Vec<Vec<usize>>,
}

/// Node data as supplied by a file or a generator, before indexing.
#[derive(Debug, Clone)]
pub struct RawNode {
    pub id: i64,
    pub father: Option<i64>,
    pub time_step: usize,
    pub trans_prob: f64,
    pub durations: Vec<f64>,
    pub demand: Vec<f64>,
    pub inflows: Vec<Vec<f64>>,
    pub thermal_programmed: Vec<f64>,
    pub hydro_programmed: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl ScenarioTree {
    /// Builds the tree structure and computes node probabilities.
    ///
    /// Only structural problems (duplicate ids, dangling fathers, wrong
    /// dimensions, several roots, misplaced leaves) are errors here; numeric
    /// invariants are reported by [`validate_tree`].
    pub fn build(shape: TreeShape, raw: Vec<RawNode>) -> Result<Self, ScenarioError> {
        if raw.is_empty() {
            return Err(ScenarioError::Structure {
                node: -1,
                message: "tree has no nodes".into(),
            });
        }
        if shape.num_posts == 0 {
            return Err(ScenarioError::Structure {
                node: -1,
                message: "num_posts must be at least 1".into(),
            });
        }
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by_key(|&i| (raw[i].time_step, raw[i].id));

        let mut index_of = HashMap::with_capacity(raw.len());
        for (pos, &i) in order.iter().enumerate() {
            if index_of.insert(raw[i].id, pos).is_some() {
                return Err(ScenarioError::Structure {
                    node: raw[i].id,
                    message: "duplicate node id".into(),
                });
            }
        }

        let mut nodes = Vec::with_capacity(raw.len());
        let mut root = None;
        for &i in &order {
            let r = &raw[i];
            check_dims(&shape, r)?;
            let father = match r.father {
                None => {
                    if root.is_some() {
                        return Err(ScenarioError::Structure {
                            node: r.id,
                            message: "second root (node without father)".into(),
                        });
                    }
                    root = Some(r.id);
                    None
                }
                Some(f) => {
                    let fi = *index_of.get(&f).ok_or_else(|| ScenarioError::Structure {
                        node: r.id,
                        message: format!("father {f} does not exist"),
                    })?;
                    let ft = raw[order[fi]].time_step;
                    if ft + 1 != r.time_step {
                        return Err(ScenarioError::Structure {
                            node: r.id,
                            message: format!(
                                "time step {} is not father's time step {} plus one",
                                r.time_step, ft
                            ),
                        });
                    }
                    Some(fi)
                }
            };
            nodes.push(Node {
                id: r.id,
                time_step: r.time_step,
                father,
                sons: Vec::new(),
                prob: 0.0,
                trans_prob: r.trans_prob,
                durations: r.durations.clone(),
                demand: r.demand.clone(),
                inflows: r.inflows.clone(),
                thermal_programmed: r.thermal_programmed.clone(),
                hydro_programmed: r.hydro_programmed.clone(),
                sigma: r.sigma.clone(),
            });
        }
        if nodes[0].father.is_some() || nodes[0].time_step != 0 {
            return Err(ScenarioError::Structure {
                node: nodes[0].id,
                message: "the root must be the unique node at time step 0".into(),
            });
        }

        for i in 1..nodes.len() {
            let f = nodes[i].father.expect("non-root nodes have fathers");
            nodes[f].sons.push(i);
        }
        // Fathers precede sons in the sorted order, so one pass suffices.
        for i in 0..nodes.len() {
            nodes[i].prob = match nodes[i].father {
                None => nodes[i].trans_prob,
                Some(f) => nodes[f].prob * nodes[i].trans_prob,
            };
        }

        let mut by_time = vec![Vec::new(); shape.horizon + 1];
        for (i, n) in nodes.iter().enumerate() {
            if n.time_step > shape.horizon {
                return Err(ScenarioError::Structure {
                    node: n.id,
                    message: format!("time step {} beyond horizon {}", n.time_step, shape.horizon),
                });
            }
            if n.is_leaf() != (n.time_step == shape.horizon) {
                return Err(ScenarioError::Structure {
                    node: n.id,
                    message: "leaves must be exactly the nodes at the horizon".into(),
                });
            }
            by_time[n.time_step].push(i);
        }

        Ok(Self {
            shape,
            nodes,
            index_of,
            by_time,
        })
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn num_posts(&self) -> usize {
        self.shape.num_posts
    }

    /// Last time step `T`.
    pub fn horizon(&self) -> usize {
        self.shape.horizon
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Dimension of the multiplier space, `L * |nodes|`.
    pub fn dual_dim(&self) -> usize {
        self.shape.num_posts * self.nodes.len()
    }

    #[inline]
    pub fn offset(&self, node_index: usize, post: usize) -> usize {
        node_index * self.shape.num_posts + post
    }

    pub fn index_of(&self, id: i64) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    /// `F(n)` by node id.
    pub fn father_of(&self, id: i64) -> Option<i64> {
        let i = self.index_of(id)?;
        self.nodes[i].father.map(|f| self.nodes[f].id)
    }

    /// `S(n)` by node id, sorted.
    pub fn sons_of(&self, id: i64) -> Vec<i64> {
        let Some(i) = self.index_of(id) else {
            return Vec::new();
        };
        let mut s: Vec<i64> = self.nodes[i]
            .sons
            .iter()
            .map(|&c| self.nodes[c].id)
            .collect();
        s.sort_unstable();
        s
    }

    /// Node indices at time step `t`.
    pub fn nodes_at(&self, t: usize) -> &[usize] {
        &self.by_time[t]
    }

    pub fn leaves(&self) -> &[usize] {
        &self.by_time[self.shape.horizon]
    }

    /// Demand vector in the canonical layout.
    pub fn demand_vector(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.dual_dim());
        for n in &self.nodes {
            d.extend_from_slice(&n.demand);
        }
        d
    }

    /// Node probability repeated for every post, in the canonical layout.
    pub fn prob_vector(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.dual_dim());
        for n in &self.nodes {
            p.extend(std::iter::repeat_n(n.prob, self.shape.num_posts));
        }
        p
    }

    /// Probability-weighted average of a per-node quantity at time step `t`.
    pub fn expected_at<F>(&self, t: usize, f: F) -> f64
    where
        F: Fn(&Node) -> f64,
    {
        let idx = &self.by_time[t];
        let total: f64 = idx.iter().map(|&i| self.nodes[i].prob).sum();
        if total > 0.0 {
            idx.iter()
                .map(|&i| self.nodes[i].prob * f(&self.nodes[i]))
                .sum::<f64>()
                / total
        } else {
            idx.iter().map(|&i| f(&self.nodes[i])).sum::<f64>() / idx.len() as f64
        }
    }

    /// Root-to-leaf path of node indices ending at `leaf`.
    pub fn path_to(&self, leaf: usize) -> Vec<usize> {
        let mut path = vec![leaf];
        let mut cur = leaf;
        while let Some(f) = self.nodes[cur].father {
            path.push(f);
            cur = f;
        }
        path.reverse();
        path
    }

    pub(crate) fn raw_nodes(&self) -> Vec<RawNode> {
        self.nodes
            .iter()
            .map(|n| RawNode {
                id: n.id,
                father: n.father.map(|f| self.nodes[f].id),
                time_step: n.time_step,
                trans_prob: n.trans_prob,
                durations: n.durations.clone(),
                demand: n.demand.clone(),
                inflows: n.inflows.clone(),
                thermal_programmed: n.thermal_programmed.clone(),
                hydro_programmed: n.hydro_programmed.clone(),
                sigma: n.sigma.clone(),
            })
            .collect()
    }

    /// The single-path tree following the root-to-`leaf` branch, with
    /// every transition probability set to one.
    pub fn path_tree(&self, leaf: usize) -> Result<ScenarioTree, ScenarioError> {
        let raw = self.raw_nodes();
        let path: Vec<RawNode> = self
            .path_to(leaf)
            .into_iter()
            .map(|i| RawNode {
                trans_prob: 1.0,
                ..raw[i].clone()
            })
            .collect();
        ScenarioTree::build(self.shape, path)
    }
}

fn check_dims(shape: &TreeShape, r: &RawNode) -> Result<(), ScenarioError> {
    let bad = |what: &str, got: usize, want: usize| ScenarioError::Structure {
        node: r.id,
        message: format!("{what}: got {got} entries, expected {want}"),
    };
    let l = shape.num_posts;
    if r.durations.len() != l {
        return Err(bad("post durations", r.durations.len(), l));
    }
    if r.demand.len() != l {
        return Err(bad("post demands", r.demand.len(), l));
    }
    if r.inflows.len() != shape.hydro_units {
        return Err(bad("inflow reservoirs", r.inflows.len(), shape.hydro_units));
    }
    for row in &r.inflows {
        if row.len() != l {
            return Err(bad("inflow posts", row.len(), l));
        }
    }
    if r.thermal_programmed.len() != shape.thermal_units {
        return Err(bad(
            "thermal programmed rates",
            r.thermal_programmed.len(),
            shape.thermal_units,
        ));
    }
    if r.hydro_programmed.len() != shape.hydro_units {
        return Err(bad(
            "hydro programmed rates",
            r.hydro_programmed.len(),
            shape.hydro_units,
        ));
    }
    if let Some(s) = &r.sigma {
        if s.len() != l {
            return Err(bad("sigma", s.len(), l));
        }
    }
    Ok(())
}

/// One simulated day of an independent scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDay {
    /// Demand per post, MWh.
    pub demand: Vec<f64>,
    /// `inflows[reservoir][post]`, MWh.
    pub inflows: Vec<Vec<f64>>,
    /// Realized availability rate `τ_f` per thermal unit.
    pub availability: Vec<f64>,
}

/// A full-horizon realization of demand, inflows and thermal outages.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub days: Vec<ScenarioDay>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub num_posts: usize,
    pub thermal_units: usize,
    pub hydro_units: usize,
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    /// Number of days each scenario covers.
    pub fn days(&self) -> usize {
        self.scenarios.first().map_or(0, |s| s.days.len())
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Checks lengths, dimensions, nonnegativity and rate ranges.
    pub fn check(&self) -> Result<(), ScenarioError> {
        let days = self.days();
        for (s, sc) in self.scenarios.iter().enumerate() {
            if sc.days.len() != days {
                return Err(ScenarioError::Scenarios(format!(
                    "scenario {s} has {} days, expected {days}",
                    sc.days.len()
                )));
            }
            for (t, d) in sc.days.iter().enumerate() {
                let here = || format!("scenario {s}, day {t}");
                if d.demand.len() != self.num_posts
                    || d.inflows.len() != self.hydro_units
                    || d.inflows.iter().any(|r| r.len() != self.num_posts)
                    || d.availability.len() != self.thermal_units
                {
                    return Err(ScenarioError::Scenarios(format!(
                        "{}: wrong dimensions",
                        here()
                    )));
                }
                let nonneg = d
                    .demand
                    .iter()
                    .chain(d.inflows.iter().flatten())
                    .all(|v| v.is_finite() && *v >= 0.0);
                if !nonneg {
                    return Err(ScenarioError::Scenarios(format!(
                        "{}: demand and inflows must be finite and >= 0",
                        here()
                    )));
                }
                if d.availability.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return Err(ScenarioError::Scenarios(format!(
                        "{}: availability rates must lie in [0, 1]",
                        here()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn raw(id: i64, father: Option<i64>, t: usize, pt: f64, demand: f64) -> RawNode {
        RawNode {
            id,
            father,
            time_step: t,
            trans_prob: pt,
            durations: vec![8.0],
            demand: vec![demand],
            inflows: vec![],
            thermal_programmed: vec![],
            hydro_programmed: vec![],
            sigma: None,
        }
    }

    pub fn shape1(horizon: usize) -> TreeShape {
        TreeShape {
            num_posts: 1,
            horizon,
            thermal_units: 0,
            hydro_units: 0,
        }
    }

    /// Seven-node tree: 0 -> {1, 2}, 1 -> {3, 6}, 2 -> {4, 5}.
    /// Copy of `tree` sized for `thermal` and `hydro` units, with full
    /// programmed availability and a constant inflow per post.
    pub fn equip(tree: &ScenarioTree, thermal: usize, hydro: usize, inflow: f64) -> ScenarioTree {
        let l = tree.num_posts();
        let mut raw = tree.raw_nodes();
        for n in &mut raw {
            n.thermal_programmed = vec![1.0; thermal];
            n.hydro_programmed = vec![1.0; hydro];
            n.inflows = vec![vec![inflow; l]; hydro];
        }
        let shape = TreeShape {
            thermal_units: thermal,
            hydro_units: hydro,
            ..tree.shape()
        };
        ScenarioTree::build(shape, raw).unwrap()
    }

    pub fn seven_node() -> ScenarioTree {
        let nodes = vec![
            raw(0, None, 0, 1.0, 100.0),
            raw(1, Some(0), 1, 0.5, 110.0),
            raw(2, Some(0), 1, 0.5, 90.0),
            raw(3, Some(1), 2, 0.5, 120.0),
            raw(4, Some(2), 2, 0.5, 80.0),
            raw(5, Some(2), 2, 0.5, 95.0),
            raw(6, Some(1), 2, 0.5, 105.0),
        ];
        ScenarioTree::build(shape1(2), nodes).unwrap()
    }
}
