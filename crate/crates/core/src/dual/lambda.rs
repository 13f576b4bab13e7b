//! Text format for price vectors.
//!
//! ```text
//! hydrovar-lambda/1 <nodes> <posts>
//! <node id> <post> <value>
//! ...
//! ```
//!
//! One line per `(node, post)` cell. Blank lines and lines starting with
//! `#` are ignored. The canonical form lists cells in layout order and
//! prints values in shortest round-trip notation.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::scenario::ScenarioTree;

pub const LAMBDA_FORMAT: &str = "hydrovar-lambda/1";

#[derive(Error, Debug)]
pub enum LambdaError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("prices do not fit the tree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parsed contents of a price file, not yet tied to a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTable {
    pub num_nodes: usize,
    pub num_posts: usize,
    pub entries: Vec<(i64, usize, f64)>,
}

fn perr(line: usize, message: impl Into<String>) -> LambdaError {
    LambdaError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_lambda(text: &str) -> Result<LambdaTable, LambdaError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, s)| (i + 1, s.trim()))
        .filter(|(_, s)| !s.is_empty() && !s.starts_with('#'));
    let (hl, header) = lines.next().ok_or_else(|| perr(1, "missing header"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 || h[0] != LAMBDA_FORMAT {
        return Err(perr(
            hl,
            format!("expected `{LAMBDA_FORMAT} <nodes> <posts>`"),
        ));
    }
    let num_nodes: usize = h[1].parse().map_err(|_| perr(hl, "bad node count"))?;
    let num_posts: usize = h[2].parse().map_err(|_| perr(hl, "bad post count"))?;
    let expected = num_nodes
        .checked_mul(num_posts)
        .ok_or_else(|| perr(hl, "dimension overflow"))?;
    let mut entries = Vec::with_capacity(expected.min(1 << 20));
    let mut seen = HashSet::new();
    for (ln, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(perr(ln, "expected `<node> <post> <value>`"));
        }
        let node: i64 = f[0].parse().map_err(|_| perr(ln, "bad node id"))?;
        let post: usize = f[1].parse().map_err(|_| perr(ln, "bad post index"))?;
        let value: f64 = f[2].parse().map_err(|_| perr(ln, "bad value"))?;
        if post >= num_posts {
            return Err(perr(ln, format!("post {post} out of range")));
        }
        if !value.is_finite() {
            return Err(perr(ln, "value must be finite"));
        }
        if !seen.insert((node, post)) {
            return Err(perr(ln, format!("duplicate cell ({node}, {post})")));
        }
        if entries.len() == expected {
            return Err(perr(ln, "more cells than the header declares"));
        }
        entries.push((node, post, value));
    }
    if entries.len() != expected {
        return Err(perr(
            text.lines().count().max(1),
            format!("{} cells, header declares {expected}", entries.len()),
        ));
    }
    Ok(LambdaTable {
        num_nodes,
        num_posts,
        entries,
    })
}

impl LambdaTable {
    /// Prices in the tree's canonical layout.
    pub fn to_vector(&self, tree: &ScenarioTree) -> Result<Vec<f64>, LambdaError> {
        if self.num_nodes != tree.len() || self.num_posts != tree.num_posts() {
            return Err(LambdaError::Mismatch(format!(
                "file has {} nodes x {} posts, tree {} x {}",
                self.num_nodes,
                self.num_posts,
                tree.len(),
                tree.num_posts()
            )));
        }
        let mut out = vec![0.0; tree.dual_dim()];
        for &(id, post, v) in &self.entries {
            let i = tree
                .index_of(id)
                .ok_or_else(|| LambdaError::Mismatch(format!("unknown node {id}")))?;
            out[tree.offset(i, post)] = v;
        }
        Ok(out)
    }
}

pub fn lambda_to_string(tree: &ScenarioTree, lambda: &[f64]) -> String {
    let l = tree.num_posts();
    let mut s = String::with_capacity(lambda.len() * 24);
    let _ = writeln!(s, "{LAMBDA_FORMAT} {} {l}", tree.len());
    for (i, node) in tree.nodes().iter().enumerate() {
        for p in 0..l {
            let _ = writeln!(s, "{} {p} {}", node.id, lambda[tree.offset(i, p)]);
        }
    }
    s
}

pub fn save_lambda(
    tree: &ScenarioTree,
    lambda: &[f64],
    path: impl AsRef<Path>,
) -> Result<(), LambdaError> {
    fs::write(path, lambda_to_string(tree, lambda))?;
    Ok(())
}

pub fn load_lambda(tree: &ScenarioTree, path: impl AsRef<Path>) -> Result<Vec<f64>, LambdaError> {
    parse_lambda(&fs::read_to_string(path)?)?.to_vector(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::seven_node;

    #[test]
    fn round_trip_is_exact() {
        let tree = seven_node();
        let lam: Vec<f64> = (0..tree.dual_dim())
            .map(|i| (i as f64).sqrt() / 3.0 - 0.1)
            .collect();
        let text = lambda_to_string(&tree, &lam);
        let back = parse_lambda(&text).unwrap().to_vector(&tree).unwrap();
        assert_eq!(back, lam);
        assert_eq!(lambda_to_string(&tree, &back), text);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(parse_lambda("").is_err());
        assert!(parse_lambda("hydrovar-lambda/1 1 1\n0 0 nan\n").is_err());
        assert!(parse_lambda("hydrovar-lambda/1 1 1\n0 1 2\n").is_err());
        assert!(parse_lambda("hydrovar-lambda/1 2 1\n0 0 2\n0 0 3\n").is_err());
        assert!(parse_lambda("hydrovar-lambda/1 2 1\n0 0 2\n").is_err());
        let t = parse_lambda("# prices\nhydrovar-lambda/1 1 1\n\n5 0 2.5\n").unwrap();
        assert_eq!(t.entries, vec![(5, 0, 2.5)]);
        assert!(t.to_vector(&seven_node()).is_err());
    }
}
