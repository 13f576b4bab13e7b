use hydrovar::dual::{evaluate_dual, DualModel, Method, RunMode};
use hydrovar::instances::random_small_instance;
use hydrovar::lp::{solve_primal_reference, ReferenceOptions};
use hydrovar::optimizer::{optimize_dual, OptimizerParams};
use hydrovar::risk::RiskConfig;

fn tight() -> OptimizerParams {
    OptimizerParams {
        tolerance: 1e-10,
        max_iterations: 3000,
        ..Default::default()
    }
}

#[test]
fn dual_optimum_matches_primal_lp() {
    for seed in 0..20 {
        let (tree, units) = random_small_instance(seed);
        let model = DualModel::new(&tree, &units);
        let mode = RunMode::new(Method::Nominal, RiskConfig::default());
        let r = optimize_dual(&model, &mode, None, &tight()).unwrap();
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
        let rel = (r.value - primal.cost).abs() / primal.cost.abs().max(1e-12);
        assert!(
            rel <= 1e-4,
            "seed {seed}: dual {} primal {} rel {rel:e}",
            r.value,
            primal.cost
        );
        assert!(r.value <= primal.cost + 1e-7 * primal.cost.abs().max(1.0));
        assert_eq!(r.trace.total_model_violations(), 0, "seed {seed}");
    }
}

#[test]
fn lp_prices_are_dual_optimal() {
    for seed in 0..10 {
        let (tree, units) = random_small_instance(seed);
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
        let e = evaluate_dual(&primal.prices, &model, &mode).unwrap();
        assert!(
            (e.value - primal.cost).abs() <= 1e-7 * primal.cost.abs().max(1.0),
            "seed {seed}: {} vs {}",
            e.value,
            primal.cost
        );
    }
}
