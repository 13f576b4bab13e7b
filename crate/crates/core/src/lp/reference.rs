//! The full primal linear program on a tree, for tests and small
//! instances. EJP contracts are excluded.

use super::{solve_lp, LpError, LpProblem, LpStatus, Relation};
use crate::scenario::ScenarioTree;
use crate::units::UnitSet;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReferenceOptions {
    /// Price of unserved energy per MWh; `None` forbids shortage.
    pub shortage_price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalReference {
    /// Probability-weighted cost, terminal water values deducted.
    pub cost: f64,
    /// `thermal[unit][offset]`, MWh.
    pub thermal: Vec<Vec<f64>>,
    /// `discharge[reservoir][offset]`, MWh.
    pub discharge: Vec<Vec<f64>>,
    /// `spill[reservoir][offset]`, MWh.
    pub spill: Vec<Vec<f64>>,
    /// `stock[reservoir][node_index]` at the end of each node.
    pub stock: Vec<Vec<f64>>,
    pub shortage: Vec<f64>,
    /// Duals of the demand rows, per offset.
    pub prices: Vec<f64>,
}

/// Minimizes `Σ π_n c u + Σ π_n shortage − Σ_leaves π_n V_H(x)` subject to
/// demand balance per `(node, post)`, thermal bounds
/// `u ≤ availability[ℓ] τ_T P_max d`, hydro flow balance, stock, discharge
/// and spill bounds.
pub fn solve_primal_reference(
    tree: &ScenarioTree,
    units: &UnitSet,
    demand: &[f64],
    availability: &[f64],
    opts: ReferenceOptions,
) -> Result<PrimalReference, LpError> {
    let d_dim = tree.dual_dim();
    let l = tree.num_posts();
    if demand.len() != d_dim {
        return Err(LpError::Dimension(format!(
            "demand has {} entries, expected {d_dim}",
            demand.len()
        )));
    }
    if availability.len() != units.thermal.len() {
        return Err(LpError::Dimension(format!(
            "{} availabilities for {} thermal units",
            availability.len(),
            units.thermal.len()
        )));
    }
    let mut p = LpProblem::new();
    let mut thermal_vars = vec![Vec::with_capacity(d_dim); units.thermal.len()];
    let mut v_vars = vec![Vec::with_capacity(d_dim); units.hydro.len()];
    let mut dev_vars = vec![Vec::with_capacity(d_dim); units.hydro.len()];
    let mut shortage_vars = Vec::new();
    let mut stock_vars = vec![Vec::with_capacity(tree.len()); units.hydro.len()];

    for (i, node) in tree.nodes().iter().enumerate() {
        for post in 0..l {
            let hours = node.durations[post];
            let mut row = Vec::new();
            for (u, unit) in units.thermal.iter().enumerate() {
                let cap = availability[u] * node.thermal_programmed[u] * unit.p_max * hours;
                let var = p.add_var(node.prob * unit.cost, 0.0, cap);
                thermal_vars[u].push(var);
                row.push((var, 1.0));
            }
            for (r, h) in units.hydro.iter().enumerate() {
                let v = p.add_var(0.0, 0.0, h.discharge_bound(node.hydro_programmed[r], hours));
                let dev = p.add_var(0.0, 0.0, f64::INFINITY);
                v_vars[r].push(v);
                dev_vars[r].push(dev);
                row.push((v, 1.0));
            }
            if let Some(price) = opts.shortage_price {
                let s = p.add_var(node.prob * price, 0.0, f64::INFINITY);
                shortage_vars.push(s);
                row.push((s, 1.0));
            }
            p.add_row(row, Relation::Eq, demand[tree.offset(i, post)]);
        }
    }
    let demand_rows = d_dim;

    for (r, h) in units.hydro.iter().enumerate() {
        for _ in 0..tree.len() {
            stock_vars[r].push(p.add_var(0.0, h.stock_min, h.stock_max));
        }
        for (i, node) in tree.nodes().iter().enumerate() {
            // x_n − x_F(n) + Σ_p (v + dev) = Σ_p a.
            let mut row = vec![(stock_vars[r][i], 1.0)];
            let mut rhs = node.day_inflow(r);
            match node.father {
                Some(f) => row.push((stock_vars[r][f], -1.0)),
                None => rhs += h.stock_init,
            }
            for post in 0..l {
                let o = tree.offset(i, post);
                row.push((v_vars[r][o], 1.0));
                row.push((dev_vars[r][o], 1.0));
            }
            p.add_row(row, Relation::Eq, rhs);
            if node.is_leaf() {
                let z = p.add_var(-node.prob, f64::NEG_INFINITY, f64::INFINITY);
                for (a, b) in h.terminal_value.affine_pieces() {
                    p.add_row(vec![(z, 1.0), (stock_vars[r][i], -b)], Relation::Le, a);
                }
            }
        }
    }

    let sol = solve_lp(&p)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Unbounded => return Err(LpError::Unbounded),
        LpStatus::Infeasible => {
            let worst = (0..demand_rows)
                .filter(|&k| sol.infeasibility[k] > 0.0)
                .max_by(|&a, &b| sol.infeasibility[a].total_cmp(&sol.infeasibility[b]));
            return Err(match worst {
                Some(k) => LpError::InfeasibleCell {
                    node: tree.node(k / l).id,
                    post: k % l,
                },
                None => LpError::Infeasible,
            });
        }
    }
    let pick = |vars: &Vec<usize>| vars.iter().map(|&v| sol.x[v]).collect::<Vec<f64>>();
    Ok(PrimalReference {
        cost: sol.objective,
        thermal: thermal_vars.iter().map(pick).collect(),
        discharge: v_vars.iter().map(pick).collect(),
        spill: dev_vars.iter().map(pick).collect(),
        stock: stock_vars.iter().map(pick).collect(),
        shortage: if shortage_vars.is_empty() {
            vec![0.0; d_dim]
        } else {
            pick(&shortage_vars)
        },
        prices: sol.duals[..demand_rows].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::{equip, seven_node};
    use crate::units::fixtures::{hydro, thermal};

    #[test]
    fn single_unit_merit_order() {
        let tree = equip(&seven_node(), 1, 0, 0.0);
        let units = UnitSet {
            thermal: vec![thermal("a", 7.0, 1000.0, 1, 1.0)],
            ..Default::default()
        };
        let d = tree.demand_vector();
        let r = solve_primal_reference(&tree, &units, &d, &[1.0], Default::default()).unwrap();
        let expect: f64 = tree
            .nodes()
            .iter()
            .map(|n| n.prob * 7.0 * n.demand[0])
            .sum();
        assert!((r.cost - expect).abs() < 1e-9 * expect);
        for (i, n) in tree.nodes().iter().enumerate() {
            assert!((r.prices[i] - n.prob * 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_demand_keeps_all_water() {
        let tree = equip(&seven_node(), 0, 1, 4.0);
        let h = hydro("h", 100.0, 90.0, 10.0, 3.0);
        let units = UnitSet {
            hydro: vec![h.clone()],
            ..Default::default()
        };
        let d = vec![0.0; tree.dual_dim()];
        let r = solve_primal_reference(&tree, &units, &d, &[], Default::default()).unwrap();
        let expect: f64 = tree
            .leaves()
            .iter()
            .map(|&i| tree.node(i).prob * h.terminal_value.eval((90.0 + 12.0f64).min(100.0)))
            .sum();
        assert!((r.cost + expect).abs() < 1e-9);
    }

    #[test]
    fn missing_capacity_names_the_cell() {
        let tree = equip(&seven_node(), 1, 0, 0.0);
        let units = UnitSet {
            thermal: vec![thermal("a", 7.0, 1.0, 1, 1.0)],
            ..Default::default()
        };
        let d = tree.demand_vector();
        match solve_primal_reference(&tree, &units, &d, &[1.0], Default::default()) {
            Err(LpError::InfeasibleCell { post: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
        let ok = solve_primal_reference(
            &tree,
            &units,
            &d,
            &[1.0],
            ReferenceOptions {
                shortage_price: Some(100.0),
            },
        )
        .unwrap();
        assert!(ok.shortage.iter().all(|&s| s > 0.0));
    }
}
