//! Value tables from optimal prices, Monte Carlo dispatch over independent
//! scenarios and the resulting statistics.

mod bellman;
mod dispatch;
mod report;
mod stats;

use rayon::prelude::*;
use thiserror::Error;

pub use bellman::{compute_all_bellman, compute_bellman, stock_grid, BellmanTable, StorageRef};
pub use dispatch::{simulate_scenario, Calendar, DispatchResult, SimulationOptions};
pub use report::{write_scenario_report, write_summary, write_trajectories, write_weeks};
pub use stats::{empirical_quantile, reservoir_week_stats, CostReport, ReservoirStats};

use crate::scenario::ScenarioSet;
use crate::units::UnitSet;

#[derive(Error, Debug)]
pub enum SimulateError {
    #[error("empty stock grid for `{0}`")]
    EmptyGrid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bad value tables: {0}")]
    Tables(String),
    #[error("empty sample")]
    EmptySample,
    #[error("quantile level {0} outside (0, 1)")]
    Level(f64),
    #[error("no scenarios to simulate")]
    NoScenarios,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub costs: Vec<f64>,
    /// `final_stocks[scenario][reservoir]`.
    pub final_stocks: Vec<Vec<f64>>,
    /// `stock_paths[scenario][reservoir]`, the stock after every post.
    pub stock_paths: Vec<Vec<Vec<f64>>>,
    /// Unserved energy per scenario, MWh.
    pub unserved: Vec<f64>,
    /// EJP days called per scenario and contract.
    pub ejp_days: Vec<Vec<usize>>,
    pub posts: usize,
}

impl MonteCarloResult {
    pub fn report(&self, label: &str) -> Result<CostReport, SimulateError> {
        CostReport::new(label, &self.costs)
    }

    /// Week statistics of reservoir `r`.
    pub fn reservoir_stats(
        &self,
        units: &UnitSet,
        r: usize,
        week: usize,
        xs: &[usize],
    ) -> ReservoirStats {
        let paths: Vec<Vec<f64>> = self.stock_paths.iter().map(|s| s[r].clone()).collect();
        let u = &units.hydro[r];
        reservoir_week_stats(&paths, self.posts, u.stock_max, u.stock_init, week, xs)
    }
}

/// Simulates every scenario; results are in scenario order whatever the
/// number of workers.
pub fn run_monte_carlo(
    set: &ScenarioSet,
    tables: &[BellmanTable],
    units: &UnitSet,
    calendar: &Calendar,
    options: &SimulationOptions,
) -> Result<MonteCarloResult, SimulateError> {
    if set.is_empty() {
        return Err(SimulateError::NoScenarios);
    }
    let runs: Vec<DispatchResult> = set
        .scenarios
        .par_iter()
        .map(|s| simulate_scenario(s, tables, units, calendar, options))
        .collect::<Result<_, _>>()?;
    Ok(MonteCarloResult {
        costs: runs.iter().map(|r| r.cost).collect(),
        final_stocks: runs.iter().map(DispatchResult::final_stocks).collect(),
        unserved: runs.iter().map(|r| r.unserved.iter().sum()).collect(),
        ejp_days: runs
            .iter()
            .map(|r| {
                units
                    .ejp
                    .iter()
                    .zip(&r.ejp_stock)
                    .map(|(c, s)| c.days - s.last().copied().unwrap_or(c.days))
                    .collect()
            })
            .collect(),
        stock_paths: runs.into_iter().map(|r| r.stock).collect(),
        posts: set.num_posts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{evaluate_dual, DualModel, Method, RunMode};
    use crate::instances::{random_small_instance, random_tree, random_units};
    use crate::lp::{solve_primal_reference, ReferenceOptions};
    use crate::optimizer::{optimize_dual, OptimizerParams};
    use crate::risk::RiskConfig;
    use crate::scenario::{RawNode, Scenario, ScenarioDay, ScenarioTree};
    use crate::units::{AvailabilityModel, HydroUnit, PiecewiseLinear, ThermalUnit};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn thermal(cost: f64, p_max: f64) -> ThermalUnit {
        ThermalUnit {
            name: format!("c{cost}"),
            cost,
            p_max,
            groups: 4,
            availability: 1.0,
            model: AvailabilityModel::stationary(1.0, 0.0, 7),
        }
    }

    fn lake(x0: f64, slope: f64) -> HydroUnit {
        HydroUnit {
            name: "lake".into(),
            stock_min: 0.0,
            stock_max: 100.0,
            stock_init: x0,
            p_max: 5.0,
            terminal_value: PiecewiseLinear::new(vec![(0.0, 0.0), (100.0, 100.0 * slope)]).unwrap(),
        }
    }

    /// Scenario that follows the tree's first path, days `0..T`.
    fn path_scenario(tree: &ScenarioTree, availability: &[f64]) -> Scenario {
        let leaf = tree.leaves()[0];
        let path = tree.path_to(leaf);
        Scenario {
            days: path[..path.len() - 1]
                .iter()
                .map(|&i| {
                    let n = tree.node(i);
                    ScenarioDay {
                        demand: n.demand.clone(),
                        inflows: n.inflows.clone(),
                        availability: availability.to_vec(),
                    }
                })
                .collect(),
        }
    }

    fn tables_for(tree: &ScenarioTree, units: &UnitSet, lambda: &[f64]) -> Vec<BellmanTable> {
        compute_all_bellman(tree, lambda, units, 21).unwrap()
    }

    #[test]
    fn cheapest_unit_serves_everything() {
        let tree = random_tree(3, 5, 2, 2, 1);
        let units = UnitSet {
            thermal: vec![thermal(5.0, 1000.0), thermal(9.0, 1000.0)],
            hydro: vec![lake(30.0, 50.0)],
            ejp: vec![],
        };
        let lam = vec![0.0; tree.dual_dim()];
        let tables = tables_for(&tree, &units, &lam);
        let cal = Calendar::from_tree(&tree);
        let sc = path_scenario(&tree, &[1.0, 1.0]);
        let r =
            simulate_scenario(&sc, &tables, &units, &cal, &SimulationOptions::default()).unwrap();
        let total: f64 = r.demand.iter().sum();
        let inflow: f64 = sc
            .days
            .iter()
            .map(|d| d.inflows[0].iter().sum::<f64>())
            .sum();
        let end = (30.0 + inflow).min(100.0);
        assert!(
            (r.cost - (5.0 * total - units.hydro[0].terminal_value.eval(end))).abs()
                < 1e-9 * total * 5.0
        );
        assert!(r.balance_residual() <= 1e-9 * total);
        assert!(r.thermal[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_demand_fills_reservoir() {
        let tree = random_tree(8, 5, 2, 1, 1);
        let mut raw = tree.raw_nodes();
        for n in &mut raw {
            n.demand = vec![0.0; 2];
            n.inflows = vec![vec![20.0, 15.0]];
        }
        let tree = ScenarioTree::build(tree.shape(), raw).unwrap();
        let units = UnitSet {
            thermal: vec![thermal(5.0, 10.0)],
            hydro: vec![lake(10.0, 3.0)],
            ejp: vec![],
        };
        let lam: Vec<f64> = (0..tree.dual_dim()).map(|k| k as f64).collect();
        let tables = tables_for(&tree, &units, &lam);
        let cal = Calendar::from_tree(&tree);
        let sc = path_scenario(&tree, &[1.0]);
        let r =
            simulate_scenario(&sc, &tables, &units, &cal, &SimulationOptions::default()).unwrap();
        assert!(r.thermal[0]
            .iter()
            .chain(&r.discharge[0])
            .all(|&v| v == 0.0));
        let inflow = 35.0 * sc.days.len() as f64;
        assert_eq!(r.final_stocks()[0], (10.0 + inflow).min(100.0));
        assert_eq!(r.fuel_cost, 0.0);
    }

    #[test]
    fn shortage_fires_when_capacity_is_short() {
        let tree = random_tree(2, 3, 1, 1, 0);
        let units = UnitSet {
            thermal: vec![thermal(7.0, 0.5)],
            hydro: vec![],
            ejp: vec![],
        };
        let cal = Calendar::from_tree(&tree);
        let tables = tables_for(&tree, &units, &vec![0.0; tree.dual_dim()]);
        let sc = path_scenario(&tree, &[0.5]);
        let r =
            simulate_scenario(&sc, &tables, &units, &cal, &SimulationOptions::default()).unwrap();
        let cap = 0.5 * 0.5 * 24.0;
        for (c, &d) in r.demand.iter().enumerate() {
            let prog = cal.thermal_programmed[c][0];
            assert!((r.thermal[0][c] - cap * prog).abs() < 1e-12);
            assert!((r.unserved[c] - (d - cap * prog)).abs() < 1e-9);
        }
        assert!(r.unserved_cost > 0.0);
    }

    #[test]
    fn missing_tables_are_reported() {
        let tree = random_tree(2, 3, 1, 1, 1);
        let units = random_units(2, 1, 1, false);
        let cal = Calendar::from_tree(&tree);
        let sc = path_scenario(&tree, &[1.0]);
        assert!(matches!(
            simulate_scenario(&sc, &[], &units, &cal, &SimulationOptions::default()),
            Err(SimulateError::Tables(_))
        ));
        let set = ScenarioSet {
            num_posts: 1,
            thermal_units: 1,
            hydro_units: 1,
            scenarios: vec![],
        };
        assert!(matches!(
            run_monte_carlo(&set, &[], &units, &cal, &SimulationOptions::default()),
            Err(SimulateError::NoScenarios)
        ));
    }

    /// Path tree whose leaf day has no demand and no inflow, so that a
    /// simulation over days `0..T` covers the whole primal problem.
    fn quiet_leaf_path(seed: u64) -> (ScenarioTree, UnitSet) {
        let (tree, units) = random_small_instance(seed);
        let path = tree.path_tree(tree.leaves()[0]).unwrap();
        let mut raw: Vec<RawNode> = path.raw_nodes();
        let last = raw.iter().map(|n| n.time_step).max().unwrap();
        for n in &mut raw {
            n.thermal_programmed.iter_mut().for_each(|p| *p = 1.0);
            if n.time_step == last {
                n.demand.iter_mut().for_each(|d| *d = 0.0);
                n.inflows
                    .iter_mut()
                    .for_each(|a| a.iter_mut().for_each(|v| *v = 0.0));
            }
        }
        (ScenarioTree::build(path.shape(), raw).unwrap(), units)
    }

    #[test]
    fn simulated_cost_dominates_path_optimum() {
        for seed in 0..12 {
            let (tree, units) = quiet_leaf_path(seed);
            let model = DualModel::new(&tree, &units);
            let mode = RunMode::new(Method::Nominal, RiskConfig::default());
            let alpha: Vec<f64> = units.thermal.iter().map(|u| u.availability).collect();
            let primal = solve_primal_reference(
                &tree,
                &units,
                &tree.demand_vector(),
                &alpha,
                ReferenceOptions {
                    shortage_price: model.shortage_price,
                },
            )
            .unwrap();
            let opt = optimize_dual(&model, &mode, None, &OptimizerParams::default()).unwrap();
            let theta = evaluate_dual(&opt.lambda, &model, &mode).unwrap().value;
            assert!(theta <= primal.cost + 1e-6 * primal.cost.abs().max(1.0));
            let tables = compute_all_bellman(&tree, &opt.lambda, &units, 101).unwrap();
            let cal = Calendar::from_tree(&tree);
            let sc = path_scenario(&tree, &alpha);
            let r = simulate_scenario(&sc, &tables, &units, &cal, &SimulationOptions::default())
                .unwrap();
            assert!(
                r.cost >= theta - 1e-6 * theta.abs().max(1.0),
                "seed {seed}: simulated {} below dual {}",
                r.cost,
                theta
            );
        }
    }

    #[test]
    fn single_scenario_statistics() {
        let tree = random_tree(6, 4, 2, 1, 1);
        let units = random_units(6, 1, 1, true);
        let lam: Vec<f64> = tree.prob_vector().iter().map(|p| 20.0 * p).collect();
        let tables = tables_for(&tree, &units, &lam);
        let cal = Calendar::from_tree(&tree);
        let set = ScenarioSet {
            num_posts: 2,
            thermal_units: 1,
            hydro_units: 1,
            scenarios: vec![path_scenario(&tree, &[0.8])],
        };
        let mc =
            run_monte_carlo(&set, &tables, &units, &cal, &SimulationOptions::default()).unwrap();
        let rep = mc.report("x").unwrap();
        assert_eq!(rep.mean, mc.costs[0]);
        assert_eq!(rep.std_dev, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn dispatch_invariants(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tree = random_tree(seed, 5, 2, 2, 1);
            let units = random_units(seed, 2, 1, true);
            let lam: Vec<f64> = tree
                .prob_vector()
                .iter()
                .map(|p| p * rng.random_range(0.0..80.0))
                .collect();
            let tables = tables_for(&tree, &units, &lam);
            let cal = Calendar::from_tree(&tree);
            let avail: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..=1.0)).collect();
            let sc = path_scenario(&tree, &avail);
            let r = simulate_scenario(&sc, &tables, &units, &cal, &SimulationOptions::default()).unwrap();
            let total: f64 = r.demand.iter().sum();
            prop_assert!(r.balance_residual() <= 1e-9 * total.max(1.0));
            let u = &units.hydro[0];
            prop_assert!(r.stock[0].iter().all(|&x| x >= u.stock_min && x <= u.stock_max));
            let l = 2;
            for (c, &v) in r.discharge[0].iter().enumerate() {
                let bound = u.discharge_bound(cal.hydro_programmed[c / l][0], cal.durations[c / l][c % l]);
                prop_assert!(v <= bound + 1e-9);
            }
            for k in 0..2 {
                for (c, &v) in r.thermal[k].iter().enumerate() {
                    let cap = avail[k] * cal.thermal_programmed[c / l][k] * units.thermal[k].p_max * cal.durations[c / l][c % l];
                    prop_assert!(v <= cap + 1e-9);
                }
            }
            let used = units.ejp[0].days - r.ejp_stock[0].last().copied().unwrap();
            prop_assert!(used <= units.ejp[0].days);
            prop_assert!(r.ejp[0].iter().filter(|&&e| e > 0.0).count() <= used * l);
        }
    }
}
