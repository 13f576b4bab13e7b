//! Bellman value tables built from optimal prices.
//!
//! For a reservoir, on a stock grid and with conditional prices
//! `μ = λ / π_n`:
//!
//! ```text
//! V(x, n) = max_y  R_n(x + a_n − y) + Σ_m π_T(m) V(y, m),
//!           y ∈ [x_min, min(x_max, x + a_n)]
//! ```
//!
//! where `R_n(q)` is the best price of releasing `q` (discharge up to the
//! post bounds, the rest spilled). Leaves carry the terminal value. Values
//! between grid points are linear. EJP contracts use the same recursion on
//! integer day stocks.

use rayon::prelude::*;

use super::SimulateError;
use crate::scenario::ScenarioTree;
use crate::units::{EjpContract, HydroUnit, UnitSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageRef {
    Hydro(usize),
    Ejp(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanTable {
    pub unit: StorageRef,
    pub name: String,
    /// Stock grid, MWh for reservoirs and days for EJP contracts.
    pub grid: Vec<f64>,
    /// `V(x, n)` per node index and grid point.
    pub node_values: Vec<Vec<f64>>,
    /// `V(x, t) = Σ_{n at t} π_n V(x, n)` per time step and grid point.
    pub step_values: Vec<Vec<f64>>,
}

/// Linear interpolation on an increasing grid, clamped at the ends.
pub(crate) fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return values[0];
    }
    if x >= grid[n - 1] {
        return values[n - 1];
    }
    let k = grid.partition_point(|&g| g <= x).clamp(1, n - 1);
    let (x0, x1) = (grid[k - 1], grid[k]);
    values[k - 1] + (values[k] - values[k - 1]) * (x - x0) / (x1 - x0)
}

impl BellmanTable {
    pub fn horizon(&self) -> usize {
        self.step_values.len() - 1
    }

    /// `V(x, t)`.
    pub fn value(&self, t: usize, x: f64) -> f64 {
        interpolate(&self.grid, &self.step_values[t], x)
    }

    /// `V(x, n)`.
    pub fn node_value(&self, node: usize, x: f64) -> f64 {
        interpolate(&self.grid, &self.node_values[node], x)
    }

    /// Segments `(lo, hi, slope)` of `V(·, t)` in increasing stock order.
    pub fn segments(&self, t: usize) -> Vec<(f64, f64, f64)> {
        let v = &self.step_values[t];
        self.grid
            .windows(2)
            .zip(v.windows(2))
            .map(|(g, w)| (g[0], g[1], (w[1] - w[0]) / (g[1] - g[0])))
            .collect()
    }
}

/// Grid of `points` stocks over `[x_min, x_max]`.
pub fn stock_grid(unit: &HydroUnit, points: usize) -> Result<Vec<f64>, SimulateError> {
    let (lo, hi) = (unit.stock_min, unit.stock_max);
    if points == 0 || (points == 1 && hi > lo) {
        return Err(SimulateError::EmptyGrid(unit.name.clone()));
    }
    if hi == lo {
        return Ok(vec![lo]);
    }
    let n = points - 1;
    Ok((0..=n)
        .map(|k| {
            if k == n {
                hi
            } else {
                lo + (hi - lo) * k as f64 / n as f64
            }
        })
        .collect())
}

fn aggregate(tree: &ScenarioTree, node_values: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    (0..=tree.horizon())
        .map(|t| {
            let mut acc = vec![0.0; width];
            for &i in tree.nodes_at(t) {
                let p = tree.node(i).prob;
                for (a, v) in acc.iter_mut().zip(&node_values[i]) {
                    *a += p * v;
                }
            }
            acc
        })
        .collect()
}

/// Continuation `Σ_m π_T(m) V(·, m)` on the grid.
fn continuation(tree: &ScenarioTree, node: usize, values: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut c = vec![0.0; width];
    for &m in &tree.node(node).sons {
        let pt = tree.node(m).trans_prob;
        for (ci, v) in c.iter_mut().zip(&values[m]) {
            *ci += pt * v;
        }
    }
    c
}

/// Release reward: posts with positive price, most expensive first, as
/// `(capacity, price)`; release beyond their total is spilled for nothing.
fn release_offers(
    tree: &ScenarioTree,
    unit: &HydroUnit,
    index: usize,
    lambda: &[f64],
    node: usize,
) -> Vec<(f64, f64)> {
    let n = tree.node(node);
    let l = tree.num_posts();
    let mut offers: Vec<(f64, f64)> = (0..l)
        .filter_map(|p| {
            let price = lambda[node * l + p] / n.prob;
            let cap = unit.discharge_bound(n.hydro_programmed[index], n.durations[p]);
            (price > 0.0 && cap > 0.0).then_some((cap, price))
        })
        .collect();
    offers.sort_by(|a, b| b.1.total_cmp(&a.1));
    offers
}

fn reward(offers: &[(f64, f64)], q: f64) -> f64 {
    let mut left = q;
    let mut r = 0.0;
    for &(cap, price) in offers {
        if left <= 0.0 {
            break;
        }
        let take = cap.min(left);
        r += take * price;
        left -= take;
    }
    r
}

fn hydro_table(
    tree: &ScenarioTree,
    lambda: &[f64],
    unit: &HydroUnit,
    index: usize,
    points: usize,
) -> Result<BellmanTable, SimulateError> {
    let grid = stock_grid(unit, points)?;
    let g = grid.len();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    for t in (0..=tree.horizon()).rev() {
        let layer: Vec<(usize, Vec<f64>)> = tree
            .nodes_at(t)
            .par_iter()
            .map(|&i| {
                let node = tree.node(i);
                if node.is_leaf() {
                    return (
                        i,
                        grid.iter().map(|&x| unit.terminal_value.eval(x)).collect(),
                    );
                }
                let c = continuation(tree, i, &values, g);
                let offers = release_offers(tree, unit, index, lambda, i);
                let inflow = node.day_inflow(index);
                let row = grid
                    .iter()
                    .map(|&x| {
                        let avail = x + inflow;
                        let lo = unit.stock_min;
                        let hi = unit.stock_max.min(avail);
                        let eval = |y: f64| reward(&offers, avail - y) + interpolate(&grid, &c, y);
                        let mut best = eval(lo).max(eval(hi));
                        for &y in &grid {
                            if y > lo && y < hi {
                                best = best.max(eval(y));
                            }
                        }
                        let mut cum = 0.0;
                        for &(cap, _) in &offers {
                            cum += cap;
                            let y = avail - cum;
                            if y > lo && y < hi {
                                best = best.max(eval(y));
                            }
                        }
                        best
                    })
                    .collect();
                (i, row)
            })
            .collect();
        for (i, row) in layer {
            values[i] = row;
        }
    }
    let step_values = aggregate(tree, &values, g);
    Ok(BellmanTable {
        unit: StorageRef::Hydro(index),
        name: unit.name.clone(),
        grid,
        node_values: values,
        step_values,
    })
}

fn ejp_table(
    tree: &ScenarioTree,
    lambda: &[f64],
    contract: &EjpContract,
    index: usize,
) -> BellmanTable {
    let j = contract.days;
    let l = tree.num_posts();
    let width = j + 1;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    for i in (0..tree.len()).rev() {
        let node = tree.node(i);
        if node.is_leaf() {
            values[i] = contract.terminal_value.clone();
            continue;
        }
        let c = continuation(tree, i, &values, width);
        let r: f64 = (0..l)
            .map(|p| node.durations[p] * contract.power * lambda[i * l + p] / node.prob)
            .sum();
        values[i] = (0..=j)
            .map(|s| if s >= 1 { c[s].max(r + c[s - 1]) } else { c[s] })
            .collect();
    }
    let step_values = aggregate(tree, &values, width);
    BellmanTable {
        unit: StorageRef::Ejp(index),
        name: contract.name.clone(),
        grid: (0..=j).map(|s| s as f64).collect(),
        node_values: values,
        step_values,
    }
}

/// Bellman table of one storage unit under prices `λ*`.
pub fn compute_bellman(
    tree: &ScenarioTree,
    lambda: &[f64],
    units: &UnitSet,
    unit: StorageRef,
    grid_points: usize,
) -> Result<BellmanTable, SimulateError> {
    if lambda.len() != tree.dual_dim() {
        return Err(SimulateError::Dimension(format!(
            "{} prices for a tree of dimension {}",
            lambda.len(),
            tree.dual_dim()
        )));
    }
    match unit {
        StorageRef::Hydro(r) => {
            let u = units
                .hydro
                .get(r)
                .ok_or_else(|| SimulateError::Dimension(format!("no reservoir {r}")))?;
            hydro_table(tree, lambda, u, r, grid_points)
        }
        StorageRef::Ejp(e) => {
            let c = units
                .ejp
                .get(e)
                .ok_or_else(|| SimulateError::Dimension(format!("no EJP contract {e}")))?;
            Ok(ejp_table(tree, lambda, c, e))
        }
    }
}

/// Tables of every reservoir and EJP contract, reservoirs first.
pub fn compute_all_bellman(
    tree: &ScenarioTree,
    lambda: &[f64],
    units: &UnitSet,
    grid_points: usize,
) -> Result<Vec<BellmanTable>, SimulateError> {
    let refs: Vec<StorageRef> = (0..units.hydro.len())
        .map(StorageRef::Hydro)
        .chain((0..units.ejp.len()).map(StorageRef::Ejp))
        .collect();
    refs.into_par_iter()
        .map(|r| compute_bellman(tree, lambda, units, r, grid_points))
        .collect()
}
