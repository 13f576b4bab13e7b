//! Partial dual of a reservoir.
//!
//! `θ_H(λ) = −max Σ λ v + Σ_leaves π V_H(x)` over discharges
//! `0 ≤ v ≤ τ_H P_max d`, spills `dev ≥ 0` and stocks in
//! `[x_min, x_max]` linked by `x_n = x_F(n) + Σ_p (a − v − dev)`.
//!
//! The default backend is an exact backward recursion on concave
//! piecewise-linear value functions: the value of releasing `q` at a node
//! is a greedy sort of the post prices, and the node value is the
//! sup-convolution of that reward with the sum of the sons' values.

use crate::lp::{solve_lp, LpError, LpProblem, LpStatus, Relation};
use crate::scenario::ScenarioTree;
use crate::units::HydroUnit;

#[derive(Debug, Clone, PartialEq)]
pub struct HydroResult {
    pub value: f64,
    /// Discharge per offset, MWh.
    pub discharge: Vec<f64>,
    /// Spill per offset, MWh.
    pub spill: Vec<f64>,
    /// Stock at the end of each node.
    pub stock: Vec<f64>,
}

/// Concave piecewise-linear function on `[start, start + Σ len]`, as the
/// value at `start` and segments `(len, slope)` of nonincreasing slope.
#[derive(Debug, Clone, PartialEq)]
struct Concave {
    v0: f64,
    segs: Vec<(f64, f64)>,
}

impl Concave {
    fn push(&mut self, len: f64, slope: f64) {
        if len <= 0.0 {
            return;
        }
        match self.segs.last_mut() {
            Some(last) if last.1 == slope => last.0 += len,
            _ => self.segs.push((len, slope)),
        }
    }

    /// Pointwise sum of two functions on the same domain.
    fn add(&self, other: &Concave) -> Concave {
        let mut out = Concave {
            v0: self.v0 + other.v0,
            segs: Vec::with_capacity(self.segs.len() + other.segs.len()),
        };
        let (mut i, mut j) = (0, 0);
        let (mut ra, mut rb) = (
            self.segs.first().map_or(0.0, |s| s.0),
            other.segs.first().map_or(0.0, |s| s.0),
        );
        while i < self.segs.len() && j < other.segs.len() {
            let step = ra.min(rb);
            out.push(step, self.segs[i].1 + other.segs[j].1);
            ra -= step;
            rb -= step;
            if ra <= 0.0 {
                i += 1;
                ra = self.segs.get(i).map_or(0.0, |s| s.0);
            }
            if rb <= 0.0 {
                j += 1;
                rb = other.segs.get(j).map_or(0.0, |s| s.0);
            }
        }
        out
    }

    /// `scale · f` restricted to `[lo, hi]`, for a piecewise-linear `f`.
    fn from_terminal(unit: &HydroUnit, scale: f64) -> Concave {
        let (lo, hi) = (unit.stock_min, unit.stock_max);
        let f = &unit.terminal_value;
        let mut xs = vec![lo];
        xs.extend(f.points().iter().map(|p| p.0).filter(|&x| x > lo && x < hi));
        xs.push(hi);
        let mut out = Concave {
            v0: scale * f.eval(lo),
            segs: Vec::with_capacity(xs.len()),
        };
        for w in xs.windows(2) {
            let slope = (f.eval(w[1]) - f.eval(w[0])) / (w[1] - w[0]);
            out.push(w[1] - w[0], scale * slope);
        }
        out
    }
}

/// Release reward segments `(vmax, λ, post)`, best price first.
fn release_segments(lambda: &[f64], bounds: &[f64]) -> Vec<(f64, f64, usize)> {
    let mut segs: Vec<(f64, f64, usize)> = lambda
        .iter()
        .zip(bounds)
        .enumerate()
        .filter(|(_, (&l, &b))| l > 0.0 && b > 0.0)
        .map(|(p, (&l, &b))| (b, l, p))
        .collect();
    segs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
    segs
}

/// Walks the sup-convolution of the release reward and the continuation
/// `c` (continuation first on equal slopes), calling `take(length, from)`
/// where `from` is `Some(post)` for a release segment, `Some(L)` for the
/// spill, and `None` for stored water. Stops after `total` units.
fn walk(
    release: &[(f64, f64, usize)],
    spill_post: usize,
    c: &Concave,
    total: f64,
    mut take: impl FnMut(f64, f64, Option<usize>),
) {
    let mut left = total;
    let (mut i, mut j) = (0, 0);
    while left > 0.0 {
        let r = release.get(i).map(|s| (s.0, s.1, Some(s.2)));
        let r = r.unwrap_or((f64::INFINITY, 0.0, Some(spill_post)));
        let use_c = match c.segs.get(j) {
            Some(cs) => cs.1 >= r.1,
            None => false,
        };
        let (len, slope, from) = if use_c {
            let cs = c.segs[j];
            j += 1;
            (cs.0, cs.1, None)
        } else {
            if i < release.len() {
                i += 1;
            }
            r
        };
        let step = len.min(left);
        take(step, slope, from);
        left -= step;
    }
}

fn bounds_at(tree: &ScenarioTree, unit: &HydroUnit, index: usize, node: usize) -> Vec<f64> {
    let n = tree.node(node);
    n.durations
        .iter()
        .map(|&h| unit.discharge_bound(n.hydro_programmed[index], h))
        .collect()
}

/// Exact partial dual by backward recursion on concave functions.
pub fn theta_hydro(
    lambda: &[f64],
    unit: &HydroUnit,
    index: usize,
    tree: &ScenarioTree,
) -> HydroResult {
    let l = tree.num_posts();
    let width = unit.stock_max - unit.stock_min;
    let nn = tree.len();
    // continuation[n]: value of the stock left at the end of node n.
    let mut continuation: Vec<Option<Concave>> = vec![None; nn];
    let mut value_at_start: Vec<Option<Concave>> = vec![None; nn];
    for i in (0..nn).rev() {
        let node = tree.node(i);
        let c = if node.is_leaf() {
            Concave::from_terminal(unit, node.prob)
        } else {
            let mut it = node.sons.iter();
            let first = value_at_start[*it.next().expect("non-leaf")]
                .take()
                .expect("son done");
            it.fold(first, |acc, &s| {
                acc.add(value_at_start[s].as_ref().expect("son done"))
            })
        };
        for &s in &node.sons {
            value_at_start[s] = None;
        }
        let release = release_segments(
            &lambda[i * l..(i + 1) * l],
            &bounds_at(tree, unit, index, i),
        );
        // W(x) = G(x + a) on [x_min, x_max], G the sup-convolution.
        let inflow = node.day_inflow(index);
        let mut w = Concave {
            v0: c.v0,
            segs: Vec::new(),
        };
        let mut pos = 0.0;
        walk(&release, l, &c, inflow + width, |len, slope, _| {
            let skip = (inflow - pos).clamp(0.0, len);
            w.v0 += slope * skip;
            w.push(len - skip, slope);
            pos += len;
        });
        value_at_start[i] = Some(w);
        continuation[i] = Some(c);
    }

    let mut discharge = vec![0.0; tree.dual_dim()];
    let mut spill = vec![0.0; tree.dual_dim()];
    let mut stock = vec![0.0; nn];
    let mut value = 0.0;
    for i in 0..nn {
        let node = tree.node(i);
        let start = node.father.map_or(unit.stock_init, |f| stock[f]);
        let release = release_segments(
            &lambda[i * l..(i + 1) * l],
            &bounds_at(tree, unit, index, i),
        );
        let c = continuation[i].as_ref().expect("filled");
        let mut kept = 0.0;
        walk(
            &release,
            l,
            c,
            start - unit.stock_min + node.day_inflow(index),
            |len, _, from| match from {
                None => kept += len,
                Some(p) if p == l => spill[i * l] += len,
                Some(p) => discharge[i * l + p] += len,
            },
        );
        stock[i] = (unit.stock_min + kept).clamp(unit.stock_min, unit.stock_max);
        for p in 0..l {
            value += lambda[i * l + p] * discharge[i * l + p];
        }
        if node.is_leaf() {
            value += node.prob * unit.terminal_value.eval(stock[i]);
        }
    }
    HydroResult {
        value: -value,
        discharge,
        spill,
        stock,
    }
}

/// The same partial dual solved as a linear program.
pub fn theta_hydro_lp(
    lambda: &[f64],
    unit: &HydroUnit,
    index: usize,
    tree: &ScenarioTree,
) -> Result<HydroResult, LpError> {
    let l = tree.num_posts();
    let mut p = LpProblem::new();
    let mut v = Vec::with_capacity(tree.dual_dim());
    let mut dev = Vec::with_capacity(tree.dual_dim());
    for i in 0..tree.len() {
        let b = bounds_at(tree, unit, index, i);
        for post in 0..l {
            v.push(p.add_var(-lambda[i * l + post], 0.0, b[post]));
            dev.push(p.add_var(0.0, 0.0, f64::INFINITY));
        }
    }
    let x: Vec<usize> = (0..tree.len())
        .map(|_| p.add_var(0.0, unit.stock_min, unit.stock_max))
        .collect();
    for (i, node) in tree.nodes().iter().enumerate() {
        let mut row = vec![(x[i], 1.0)];
        let mut rhs = node.day_inflow(index);
        match node.father {
            Some(f) => row.push((x[f], -1.0)),
            None => rhs += unit.stock_init,
        }
        for post in 0..l {
            row.push((v[i * l + post], 1.0));
            row.push((dev[i * l + post], 1.0));
        }
        p.add_row(row, Relation::Eq, rhs);
        if node.is_leaf() {
            let z = p.add_var(-node.prob, f64::NEG_INFINITY, f64::INFINITY);
            for (a, b) in unit.terminal_value.affine_pieces() {
                p.add_row(vec![(z, 1.0), (x[i], -b)], Relation::Le, a);
            }
        }
    }
    let sol = solve_lp(&p)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(LpError::Infeasible),
        LpStatus::Unbounded => return Err(LpError::Unbounded),
    }
    Ok(HydroResult {
        value: sol.objective,
        discharge: v.iter().map(|&j| sol.x[j]).collect(),
        spill: dev.iter().map(|&j| sol.x[j]).collect(),
        stock: x.iter().map(|&j| sol.x[j]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::{equip, raw, seven_node};
    use crate::scenario::{RawNode, TreeShape};
    use crate::units::fixtures::hydro;
    use crate::units::PiecewiseLinear;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_prices_keep_water() {
        let tree = equip(&seven_node(), 0, 1, 4.0);
        let h = hydro("h", 100.0, 90.0, 10.0, 3.0);
        let r = theta_hydro(&vec![0.0; tree.dual_dim()], &h, 0, &tree);
        assert!(r.discharge.iter().all(|&v| v == 0.0));
        let expect: f64 = tree
            .leaves()
            .iter()
            .map(|&i| tree.node(i).prob * h.terminal_value.eval(100.0))
            .sum();
        assert!((r.value + expect).abs() < 1e-12);
        // Minimal spill: only what exceeds x_max.
        assert!((r.spill.iter().sum::<f64>() - 4.0 * 2.0).abs() < 1e-9);
    }

    #[test]
    fn high_price_single_node_discharges_at_bound() {
        let tree = equip(
            &ScenarioTree::build(
                crate::scenario::fixtures::shape1(0),
                vec![raw(0, None, 0, 1.0, 1.0)],
            )
            .unwrap(),
            0,
            1,
            0.0,
        );
        let h = hydro("h", 1000.0, 500.0, 10.0, 1.0);
        let r = theta_hydro(&[50.0], &h, 0, &tree);
        assert_eq!(r.discharge, vec![80.0]);
        let scarce = hydro("h", 1000.0, 30.0, 10.0, 1.0);
        let r = theta_hydro(&[50.0], &scarce, 0, &tree);
        assert_eq!(r.discharge, vec![30.0]);
    }

    fn two_post_tree(rng: &mut ChaCha8Rng, depth: usize) -> ScenarioTree {
        let mut nodes: Vec<RawNode> = Vec::new();
        let mut layer = vec![0i64];
        let mut next_id = 1;
        let mk = |id, father, t, pt, rng: &mut ChaCha8Rng| RawNode {
            id,
            father,
            time_step: t,
            trans_prob: pt,
            durations: vec![2.0, 3.0],
            demand: vec![1.0, 1.0],
            inflows: vec![vec![
                rng.random_range(0..6) as f64,
                rng.random_range(0..6) as f64,
            ]],
            thermal_programmed: vec![],
            hydro_programmed: vec![1.0],
            sigma: None,
        };
        nodes.push(mk(0, None, 0, 1.0, rng));
        for t in 1..=depth {
            let mut next = Vec::new();
            for &f in &layer {
                for pt in [0.3, 0.7] {
                    nodes.push(mk(next_id, Some(f), t, pt, rng));
                    next.push(next_id);
                    next_id += 1;
                }
            }
            layer = next;
        }
        let shape = TreeShape {
            num_posts: 2,
            horizon: depth,
            thermal_units: 0,
            hydro_units: 1,
        };
        ScenarioTree::build(shape, nodes).unwrap()
    }

    /// Exhaustive DP on an integer stock grid with the release reward
    /// computed by enumerating integer discharges of each post.
    fn grid_dp(lambda: &[f64], unit: &HydroUnit, tree: &ScenarioTree) -> f64 {
        let lo = unit.stock_min as i64;
        let hi = unit.stock_max as i64;
        let l = tree.num_posts();
        let mut w: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
        for i in (0..tree.len()).rev() {
            let node = tree.node(i);
            let a = node.day_inflow(0) as i64;
            let bmax: Vec<i64> = node
                .durations
                .iter()
                .map(|h| (h * unit.p_max) as i64)
                .collect();
            let reward = |q: i64| {
                // Best integer split of q between two posts and spill.
                let mut best = f64::NEG_INFINITY;
                for v0 in 0..=bmax[0].min(q) {
                    for v1 in 0..=bmax[1].min(q - v0) {
                        best = best.max(lambda[i * l] * v0 as f64 + lambda[i * l + 1] * v1 as f64);
                    }
                }
                best
            };
            let mut wi = Vec::new();
            for x in lo..=hi {
                let mut best = f64::NEG_INFINITY;
                for y in lo..=hi {
                    let q = x + a - y;
                    if q < 0 {
                        continue;
                    }
                    let cont = if node.is_leaf() {
                        node.prob * unit.terminal_value.eval(y as f64)
                    } else {
                        node.sons.iter().map(|&s| w[s][(y - lo) as usize]).sum()
                    };
                    best = best.max(reward(q) + cont);
                }
                wi.push(best);
            }
            w[i] = wi;
        }
        -w[0][(unit.stock_init as i64 - lo) as usize]
    }

    #[test]
    fn matches_grid_dp_and_lp() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..8 {
            let tree = two_post_tree(&mut rng, 2);
            let unit = HydroUnit {
                name: "h".into(),
                stock_min: 2.0,
                stock_max: 20.0,
                stock_init: rng.random_range(2..=20) as f64,
                p_max: 2.0,
                terminal_value: PiecewiseLinear::new(vec![
                    (0.0, 0.0),
                    (8.0, 16.0),
                    (14.0, 22.0),
                    (20.0, 24.0),
                ])
                .unwrap(),
            };
            let lambda: Vec<f64> = (0..tree.dual_dim())
                .map(|o| tree.node(o / 2).prob * rng.random_range(-0.5..3.0))
                .collect();
            let r = theta_hydro(&lambda, &unit, 0, &tree);
            let g = grid_dp(&lambda, &unit, &tree);
            let lp = theta_hydro_lp(&lambda, &unit, 0, &tree).unwrap();
            assert!((r.value - g).abs() < 1e-9, "{} vs grid {}", r.value, g);
            assert!(
                (r.value - lp.value).abs() < 1e-9,
                "{} vs lp {}",
                r.value,
                lp.value
            );
            // Flow balance and bounds.
            for (i, n) in tree.nodes().iter().enumerate() {
                let start = n.father.map_or(unit.stock_init, |f| r.stock[f]);
                let out: f64 = (0..2)
                    .map(|p| r.discharge[i * 2 + p] + r.spill[i * 2 + p])
                    .sum();
                assert!((r.stock[i] - (start + n.day_inflow(0) - out)).abs() < 1e-9);
                assert!(r.stock[i] >= unit.stock_min && r.stock[i] <= unit.stock_max);
            }
        }
    }
}
