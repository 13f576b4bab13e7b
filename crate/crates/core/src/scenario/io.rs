//! Tree and scenario file formats.
//!
//! Both files are JSON documents with a `format` tag. Unknown fields are
//! rejected. Files written by [`tree_to_string`] / [`scenarios_to_string`]
//! are canonical: loading and saving one reproduces it byte for byte.
//!
//! Tree file (`hydrovar-tree/1`):
//!
//! ```text
//! {
//!   "format": "hydrovar-tree/1",
//!   "num_posts": L, "horizon": T, "thermal_units": NT, "hydro_units": NH,
//!   "nodes": [
//!     { "id": 0, "father": null, "time_step": 0, "trans_prob": 1.0,
//!       "posts": [ { "duration": 8.0, "demand": 100.0 }, ... L entries ],
//!       "inflows": [ [ L values ], ... NH rows ],
//!       "thermal_programmed": [ NT rates ],
//!       "hydro_programmed": [ NH rates ],
//!       "sigma": [ L values ]            (optional)
//!     }, ...
//!   ]
//! }
//! ```
//!
//! Scenario file (`hydrovar-scenarios/1`): a header and one record per
//! (scenario, day), ordered by scenario then day:
//!
//! ```text
//! { "format": "hydrovar-scenarios/1", "num_posts": L, "days": N,
//!   "thermal_units": NT, "hydro_units": NH, "scenarios": S,
//!   "records": [ { "scenario": 0, "day": 0, "demand": [L],
//!                  "inflows": [[L] x NH], "availability": [NT] }, ... ] }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    validate_tree, RawNode, Scenario, ScenarioDay, ScenarioError, ScenarioSet, ScenarioTree,
    TreeShape,
};

pub const TREE_FORMAT: &str = "hydrovar-tree/1";
pub const SCENARIO_FORMAT: &str = "hydrovar-scenarios/1";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PostRecord {
    pub duration: f64,
    pub demand: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: i64,
    pub father: Option<i64>,
    pub time_step: usize,
    pub trans_prob: f64,
    pub posts: Vec<PostRecord>,
    pub inflows: Vec<Vec<f64>>,
    pub thermal_programmed: Vec<f64>,
    pub hydro_programmed: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TreeFile {
    pub format: String,
    pub num_posts: usize,
    pub horizon: usize,
    pub thermal_units: usize,
    pub hydro_units: usize,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub scenario: usize,
    pub day: usize,
    pub demand: Vec<f64>,
    pub inflows: Vec<Vec<f64>>,
    pub availability: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format: String,
    pub num_posts: usize,
    pub days: usize,
    pub thermal_units: usize,
    pub hydro_units: usize,
    pub scenarios: usize,
    pub records: Vec<ScenarioRecord>,
}

impl TreeFile {
    pub fn from_tree(tree: &ScenarioTree) -> Self {
        let shape = tree.shape();
        let nodes = tree
            .raw_nodes()
            .into_iter()
            .map(|r| NodeRecord {
                id: r.id,
                father: r.father,
                time_step: r.time_step,
                trans_prob: r.trans_prob,
                posts: r
                    .durations
                    .iter()
                    .zip(&r.demand)
                    .map(|(&duration, &demand)| PostRecord { duration, demand })
                    .collect(),
                inflows: r.inflows,
                thermal_programmed: r.thermal_programmed,
                hydro_programmed: r.hydro_programmed,
                sigma: r.sigma,
            })
            .collect();
        Self {
            format: TREE_FORMAT.to_string(),
            num_posts: shape.num_posts,
            horizon: shape.horizon,
            thermal_units: shape.thermal_units,
            hydro_units: shape.hydro_units,
            nodes,
        }
    }

    /// Builds the tree without numeric validation.
    pub fn into_tree(self) -> Result<ScenarioTree, ScenarioError> {
        if self.format != TREE_FORMAT {
            return Err(ScenarioError::Format(self.format));
        }
        let shape = TreeShape {
            num_posts: self.num_posts,
            horizon: self.horizon,
            thermal_units: self.thermal_units,
            hydro_units: self.hydro_units,
        };
        let raw = self
            .nodes
            .into_iter()
            .map(|n| RawNode {
                id: n.id,
                father: n.father,
                time_step: n.time_step,
                trans_prob: n.trans_prob,
                durations: n.posts.iter().map(|p| p.duration).collect(),
                demand: n.posts.iter().map(|p| p.demand).collect(),
                inflows: n.inflows,
                thermal_programmed: n.thermal_programmed,
                hydro_programmed: n.hydro_programmed,
                sigma: n.sigma,
            })
            .collect();
        ScenarioTree::build(shape, raw)
    }
}

/// Parses and validates a tree document.
pub fn parse_tree(text: &str) -> Result<ScenarioTree, ScenarioError> {
    let file: TreeFile = serde_json::from_str(text)?;
    let tree = file.into_tree()?;
    let violations = validate_tree(&tree);
    if violations.is_empty() {
        Ok(tree)
    } else {
        Err(ScenarioError::Invalid(violations))
    }
}

pub fn load_tree(path: impl AsRef<Path>) -> Result<ScenarioTree, ScenarioError> {
    parse_tree(&fs::read_to_string(path)?)
}

pub fn tree_to_string(tree: &ScenarioTree) -> String {
    let mut s = serde_json::to_string_pretty(&TreeFile::from_tree(tree))
        .expect("tree serialization cannot fail");
    s.push('\n');
    s
}

pub fn save_tree(tree: &ScenarioTree, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    fs::write(path, tree_to_string(tree))?;
    Ok(())
}

impl ScenarioFile {
    pub fn from_set(set: &ScenarioSet) -> Self {
        let mut records = Vec::with_capacity(set.len() * set.days());
        for (s, sc) in set.scenarios.iter().enumerate() {
            for (t, d) in sc.days.iter().enumerate() {
                records.push(ScenarioRecord {
                    scenario: s,
                    day: t,
                    demand: d.demand.clone(),
                    inflows: d.inflows.clone(),
                    availability: d.availability.clone(),
                });
            }
        }
        Self {
            format: SCENARIO_FORMAT.to_string(),
            num_posts: set.num_posts,
            days: set.days(),
            thermal_units: set.thermal_units,
            hydro_units: set.hydro_units,
            scenarios: set.len(),
            records,
        }
    }

    pub fn into_set(self) -> Result<ScenarioSet, ScenarioError> {
        if self.format != SCENARIO_FORMAT {
            return Err(ScenarioError::Format(self.format));
        }
        let expected = self.scenarios.checked_mul(self.days);
        if expected != Some(self.records.len()) {
            return Err(ScenarioError::Scenarios(format!(
                "{} records for {} scenarios of {} days",
                self.records.len(),
                self.scenarios,
                self.days
            )));
        }
        let mut scenarios = Vec::with_capacity(self.scenarios);
        let mut it = self.records.into_iter();
        for s in 0..self.scenarios {
            let mut days = Vec::with_capacity(self.days);
            for t in 0..self.days {
                let r = it.next().expect("record count checked");
                if r.scenario != s || r.day != t {
                    return Err(ScenarioError::Scenarios(format!(
                        "record ({}, {}) out of order, expected ({s}, {t})",
                        r.scenario, r.day
                    )));
                }
                days.push(ScenarioDay {
                    demand: r.demand,
                    inflows: r.inflows,
                    availability: r.availability,
                });
            }
            scenarios.push(Scenario { days });
        }
        let set = ScenarioSet {
            num_posts: self.num_posts,
            thermal_units: self.thermal_units,
            hydro_units: self.hydro_units,
            scenarios,
        };
        set.check()?;
        Ok(set)
    }
}

pub fn parse_scenarios(text: &str) -> Result<ScenarioSet, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    file.into_set()
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<ScenarioSet, ScenarioError> {
    parse_scenarios(&fs::read_to_string(path)?)
}

pub fn scenarios_to_string(set: &ScenarioSet) -> String {
    let mut s = serde_json::to_string(&ScenarioFile::from_set(set))
        .expect("scenario serialization cannot fail");
    s.push('\n');
    s
}

pub fn save_scenarios(set: &ScenarioSet, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    fs::write(path, scenarios_to_string(set))?;
    Ok(())
}
