use crate::scenario::ScenarioTree;
use crate::units::ThermalUnit;

/// Optimal decision for one `(node, post)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDecision {
    /// `V(u*, λ)`.
    pub value: f64,
    /// Committed energy `u*` (0 or the bound).
    pub committed: f64,
    /// Contribution `(α − κ s) u*` to the demand balance; the negated
    /// partial derivative of `value` in `λ`.
    pub production: f64,
}

/// Minimizes `V(u) = (α g + κ s |g|) u` over `u ∈ [0, bound]` where
/// `g = weighted_cost − λ` and `s = sqrt(α (1 − α) / n)`.
///
/// `u = bound` iff `g < 0` and `α > κ² / (κ² + n)`; ties give `u = 0`.
#[inline]
pub fn thermal_cell(
    weighted_cost: f64,
    lambda: f64,
    alpha: f64,
    groups: usize,
    kappa: f64,
    bound: f64,
) -> CellDecision {
    let gap = weighted_cost - lambda;
    let n = groups as f64;
    let k2 = kappa * kappa;
    if gap < 0.0 && alpha > k2 / (k2 + n) && bound > 0.0 {
        let s = (alpha * (1.0 - alpha) / n).sqrt();
        let penalty = kappa * s;
        CellDecision {
            value: (alpha * gap + penalty * gap.abs()) * bound,
            committed: bound,
            production: (alpha - penalty) * bound,
        }
    } else {
        CellDecision {
            value: 0.0,
            committed: 0.0,
            production: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalResult {
    pub value: f64,
    /// Committed energy per offset.
    pub dispatch: Vec<f64>,
    /// Expected (or risk-adjusted) production per offset.
    pub production: Vec<f64>,
}

fn run(
    lambda: &[f64],
    tree: &ScenarioTree,
    cell: impl Fn(usize, usize, f64) -> CellDecision,
) -> ThermalResult {
    let l = tree.num_posts();
    let mut value = 0.0;
    let mut dispatch = vec![0.0; tree.dual_dim()];
    let mut production = vec![0.0; tree.dual_dim()];
    for i in 0..tree.len() {
        for p in 0..l {
            let o = i * l + p;
            let c = cell(i, p, lambda[o]);
            value += c.value;
            dispatch[o] = c.committed;
            production[o] = c.production;
        }
    }
    ThermalResult {
        value,
        dispatch,
        production,
    }
}

/// Partial dual of a thermal unit with availability rate `forced_rate`
/// applied to the bound: per cell, `u = τ_f τ_T P_max d` if `π c < λ`,
/// else 0, and the value is `Σ (π c − λ) u`.
pub fn theta_thermal(
    lambda: &[f64],
    unit: &ThermalUnit,
    index: usize,
    tree: &ScenarioTree,
    forced_rate: f64,
) -> ThermalResult {
    run(lambda, tree, |i, p, lam| {
        let node = tree.node(i);
        let bound = forced_rate * node.thermal_programmed[index] * unit.p_max * node.durations[p];
        thermal_cell(node.prob * unit.cost, lam, 1.0, 1, 0.0, bound)
    })
}

/// Robust partial dual under random group availability, with bound
/// `τ_T P_max d` and risk factor `kappa`. At `kappa = 0` this is the
/// expected-availability dual.
pub fn theta_thermal_var(
    lambda: &[f64],
    unit: &ThermalUnit,
    index: usize,
    tree: &ScenarioTree,
    kappa: f64,
) -> ThermalResult {
    run(lambda, tree, |i, p, lam| {
        let node = tree.node(i);
        let bound = node.thermal_programmed[index] * unit.p_max * node.durations[p];
        thermal_cell(
            node.prob * unit.cost,
            lam,
            unit.availability,
            unit.groups,
            kappa,
            bound,
        )
    })
}

/// Virtual unserved-energy unit: always available, capacity equal to the
/// cell demand, priced at `price`.
pub fn theta_shortage(
    lambda: &[f64],
    tree: &ScenarioTree,
    demand: &[f64],
    price: f64,
) -> ThermalResult {
    run(lambda, tree, |i, p, lam| {
        let o = tree.offset(i, p);
        thermal_cell(tree.node(i).prob * price, lam, 1.0, 1, 0.0, demand[o])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::{equip, seven_node};
    use crate::units::fixtures::thermal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_prices_dispatch_nothing() {
        let tree = equip(&seven_node(), 1, 0, 0.0);
        let u = thermal("a", 5.0, 10.0, 1, 0.9);
        let r = theta_thermal(&vec![0.0; tree.dual_dim()], &u, 0, &tree, 1.0);
        assert_eq!(r.value, 0.0);
        assert!(r.dispatch.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn profitable_cell_runs_at_bound_and_ties_do_not() {
        let tree = equip(&seven_node(), 1, 0, 0.0);
        let u = thermal("a", 5.0, 10.0, 1, 0.9);
        let mut lam = vec![0.0; tree.dual_dim()];
        lam[0] = 6.0;
        lam[1] = 0.5 * 5.0;
        let r = theta_thermal(&lam, &u, 0, &tree, 1.0);
        assert_eq!(r.dispatch[0], 80.0);
        assert_eq!(r.value, -80.0);
        assert_eq!(r.dispatch[1], 0.0);
    }

    #[test]
    fn zero_kappa_is_expected_availability() {
        let tree = equip(&seven_node(), 1, 0, 0.0);
        let u = thermal("a", 5.0, 10.0, 4, 0.8);
        let lam: Vec<f64> = (0..tree.dual_dim()).map(|i| i as f64).collect();
        let var = theta_thermal_var(&lam, &u, 0, &tree, 0.0);
        let scaled = ThermalUnit {
            cost: 5.0,
            ..u.clone()
        };
        let nominal = theta_thermal(&lam, &scaled, 0, &tree, 1.0);
        assert_eq!(var.dispatch, nominal.dispatch);
        assert!((var.value - 0.8 * nominal.value).abs() < 1e-12 * nominal.value.abs());
    }

    #[test]
    fn threshold_just_below_gives_zero() {
        let (kappa, n) = (1.5f64, 3usize);
        let thr = kappa * kappa / (kappa * kappa + n as f64);
        let below = thermal_cell(1.0, 5.0, thr - 1e-9, n, kappa, 10.0);
        assert_eq!(below.committed, 0.0);
        let above = thermal_cell(1.0, 5.0, thr + 1e-9, n, kappa, 10.0);
        assert_eq!(above.committed, 10.0);
    }

    fn grid_min(gap: f64, alpha: f64, n: usize, kappa: f64, bound: f64) -> f64 {
        let s = (alpha * (1.0 - alpha) / n as f64).sqrt();
        let coef = alpha * gap + kappa * s * gap.abs();
        (0..=100_000)
            .map(|k| coef * bound * k as f64 / 100_000.0)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn closed_form_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let c = rng.random_range(0.0..10.0);
            let lam = rng.random_range(0.0..10.0);
            let alpha = rng.random_range(0.0..1.0);
            let n = rng.random_range(1..30usize);
            let kappa = rng.random_range(0.0..3.0);
            let bound = rng.random_range(0.0..100.0);
            let d = thermal_cell(c, lam, alpha, n, kappa, bound);
            let g = grid_min(c - lam, alpha, n, kappa, bound);
            assert!((d.value - g).abs() <= 1e-9 * g.abs().max(1.0));
        }
    }
}
