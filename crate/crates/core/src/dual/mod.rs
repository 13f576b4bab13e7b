//! Partial dual functions and the black-box dual oracle.
//!
//! Relaxing the demand constraints `Σ_ℓ u^ℓ = d` with prices `λ` splits the
//! problem by unit:
//! `θ(λ) = λᵀd + Σ_thermal θ_T + θ_shortage + Σ_hydro θ_H + Σ_EJP θ_J`.
//! Costs are weighted by node probability, so `λ` is comparable to
//! `π_n c`. The supergradient is `d − Σ_ℓ P^ℓ(λ)`.
//!
//! The robust variants replace `λᵀd` by the support function of the demand
//! ellipsoid (`VarFa`) and the thermal terms by their per-cell
//! Value-at-Risk under random group availability (`VarBenef`); `Mixt`
//! applies both.

mod ejp;
mod hydro;
mod lambda;
mod thermal;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

pub use ejp::{theta_ejp, EjpResult};
pub use hydro::{theta_hydro, theta_hydro_lp, HydroResult};
pub use lambda::{
    lambda_to_string, load_lambda, parse_lambda, save_lambda, LambdaError, LambdaTable,
    LAMBDA_FORMAT,
};
pub use thermal::{
    thermal_cell, theta_shortage, theta_thermal, theta_thermal_var, CellDecision, ThermalResult,
};

use crate::lp::LpError;
use crate::risk::{ellipsoid_support, CovarianceModel, RiskConfig, RiskError};
use crate::scenario::ScenarioTree;
use crate::units::UnitSet;

/// Prices `λ_{n,p}` in the tree's canonical layout.
pub type Multiplier = Vec<f64>;

#[derive(Error, Debug)]
pub enum DualError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite price at offset {0}")]
    NonFinite(usize),
    #[error("negative risk factor {0}; choose a confidence level of at most 0.5")]
    NegativeKappa(f64),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("hydro LP: {0}")]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Nominal,
    VarFa,
    VarBenef,
    Mixt,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Nominal,
        Method::VarFa,
        Method::VarBenef,
        Method::Mixt,
    ];

    pub fn robust_demand(self) -> bool {
        matches!(self, Method::VarFa | Method::Mixt)
    }

    pub fn robust_thermal(self) -> bool {
        matches!(self, Method::VarBenef | Method::Mixt)
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Nominal => "Nominal",
            Method::VarFa => "VaR_FA",
            Method::VarBenef => "VaR_benef",
            Method::Mixt => "Mixt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Nominal => "nominal",
            Method::VarFa => "var-fa",
            Method::VarBenef => "var-benef",
            Method::Mixt => "mixt",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "nominal" => Ok(Method::Nominal),
            "var-fa" | "varfa" => Ok(Method::VarFa),
            "var-benef" | "varbenef" => Ok(Method::VarBenef),
            "mixt" => Ok(Method::Mixt),
            _ => Err(format!(
                "unknown mode `{s}` (expected nominal, var-fa, var-benef or mixt)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMode {
    pub method: Method,
    pub risk: RiskConfig,
}

/// Risk factors a mode actually uses; 0 when a term is not robustified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeKappas {
    pub demand: Option<f64>,
    pub thermal: f64,
}

impl RunMode {
    pub fn new(method: Method, risk: RiskConfig) -> Self {
        Self { method, risk }
    }

    pub fn kappas(&self) -> Result<ModeKappas, DualError> {
        let demand = if self.method.robust_demand() {
            let k = self.risk.kappa1()?;
            if k < 0.0 {
                return Err(DualError::NegativeKappa(k));
            }
            Some(k)
        } else {
            None
        };
        let thermal = if self.method.robust_thermal() {
            let k = self.risk.kappa2()?;
            if k < 0.0 {
                return Err(DualError::NegativeKappa(k));
            }
            k
        } else {
            0.0
        };
        Ok(ModeKappas { demand, thermal })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HydroBackend {
    /// Exact recursion on concave piecewise-linear functions.
    #[default]
    PiecewiseDp,
    /// Dense simplex; small trees only.
    Lp,
}

/// Everything the oracle needs besides `λ` and the mode.
#[derive(Debug, Clone)]
pub struct DualModel<'a> {
    pub tree: &'a ScenarioTree,
    pub units: &'a UnitSet,
    /// Mean demand `d̄` and covariance used by the demand terms.
    pub covariance: CovarianceModel,
    /// Unserved energy price per MWh; `None` drops the shortage unit.
    pub shortage_price: Option<f64>,
    pub hydro_backend: HydroBackend,
}

impl<'a> DualModel<'a> {
    /// Calibrated diagonal covariance and a shortage price of ten times the
    /// costliest thermal unit.
    pub fn new(tree: &'a ScenarioTree, units: &'a UnitSet) -> Self {
        Self {
            tree,
            units,
            covariance: CovarianceModel::from_tree(tree),
            shortage_price: Some(10.0 * units.max_thermal_cost()),
            hydro_backend: HydroBackend::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.tree.dual_dim()
    }

    pub fn demand(&self) -> &[f64] {
        self.covariance.mean()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualEvaluation {
    /// `θ(λ)`.
    pub value: f64,
    /// `θ_d` or its robust counterpart.
    pub demand_value: f64,
    /// Sum of thermal partial duals.
    pub thermal_value: f64,
    pub shortage_value: f64,
    pub hydro_value: f64,
    pub ejp_value: f64,
    /// Supergradient of `θ` at `λ`.
    pub supergradient: Vec<f64>,
    /// Committed thermal energy `[unit][offset]`.
    pub thermal: Vec<Vec<f64>>,
    pub shortage: Vec<f64>,
    pub hydro: Vec<HydroResult>,
    pub ejp: Vec<EjpResult>,
}

/// `θ_d(λ) = λᵀd` with gradient `d`.
pub fn theta_demand(lambda: &[f64], demand: &[f64]) -> Result<(f64, Vec<f64>), DualError> {
    if lambda.len() != demand.len() {
        return Err(DualError::Dimension(format!(
            "{} prices for {} demands",
            lambda.len(),
            demand.len()
        )));
    }
    Ok((
        lambda.iter().zip(demand).map(|(l, d)| l * d).sum(),
        demand.to_vec(),
    ))
}

/// Support function of the demand ellipsoid.
pub fn theta_demand_robust(
    lambda: &[f64],
    cov: &CovarianceModel,
    kappa: f64,
) -> Result<(f64, Vec<f64>), DualError> {
    if lambda.len() != cov.dim() {
        return Err(DualError::Dimension(format!(
            "{} prices for covariance of dimension {}",
            lambda.len(),
            cov.dim()
        )));
    }
    if kappa < 0.0 {
        return Err(DualError::NegativeKappa(kappa));
    }
    Ok(ellipsoid_support(lambda, cov, kappa))
}

enum Part {
    Thermal(ThermalResult),
    Shortage(ThermalResult),
    Hydro(HydroResult),
    Ejp(EjpResult),
}

/// Evaluates `θ(λ)`, its supergradient and every unit's optimal dispatch.
///
/// Unit subproblems run on the current rayon pool; results are combined
/// in a fixed order, so the output does not depend on the worker count.
pub fn evaluate_dual(
    lambda: &[f64],
    model: &DualModel<'_>,
    mode: &RunMode,
) -> Result<DualEvaluation, DualError> {
    let tree = model.tree;
    let units = model.units;
    let dim = model.dim();
    if lambda.len() != dim {
        return Err(DualError::Dimension(format!(
            "{} prices, expected {dim}",
            lambda.len()
        )));
    }
    if let Some(bad) = lambda.iter().position(|v| !v.is_finite()) {
        return Err(DualError::NonFinite(bad));
    }
    let kappas = mode.kappas()?;
    let (demand_value, demand_grad) = match kappas.demand {
        Some(k) => theta_demand_robust(lambda, &model.covariance, k)?,
        None => theta_demand(lambda, model.demand())?,
    };

    let nt = units.thermal.len();
    let nh = units.hydro.len();
    let ne = units.ejp.len();
    let jobs = nt + 1 + nh + ne;
    let parts: Vec<Result<Part, DualError>> = (0..jobs)
        .into_par_iter()
        .map(|job| {
            if job < nt {
                let u = &units.thermal[job];
                Ok(Part::Thermal(theta_thermal_var(
                    lambda,
                    u,
                    job,
                    tree,
                    kappas.thermal,
                )))
            } else if job == nt {
                Ok(Part::Shortage(match model.shortage_price {
                    Some(price) => theta_shortage(lambda, tree, model.demand(), price),
                    None => ThermalResult {
                        value: 0.0,
                        dispatch: vec![0.0; dim],
                        production: vec![0.0; dim],
                    },
                }))
            } else if job < nt + 1 + nh {
                let r = job - nt - 1;
                let h = &units.hydro[r];
                Ok(Part::Hydro(match model.hydro_backend {
                    HydroBackend::PiecewiseDp => theta_hydro(lambda, h, r, tree),
                    HydroBackend::Lp => theta_hydro_lp(lambda, h, r, tree)?,
                }))
            } else {
                let e = &units.ejp[job - nt - 1 - nh];
                Ok(Part::Ejp(theta_ejp(lambda, e, tree)))
            }
        })
        .collect();

    let mut eval = DualEvaluation {
        value: 0.0,
        demand_value,
        thermal_value: 0.0,
        shortage_value: 0.0,
        hydro_value: 0.0,
        ejp_value: 0.0,
        supergradient: demand_grad,
        thermal: Vec::with_capacity(nt),
        shortage: Vec::new(),
        hydro: Vec::with_capacity(nh),
        ejp: Vec::with_capacity(ne),
    };
    let sub = |g: &mut [f64], p: &[f64]| {
        for (gi, pi) in g.iter_mut().zip(p) {
            *gi -= pi;
        }
    };
    for part in parts {
        match part? {
            Part::Thermal(t) => {
                eval.thermal_value += t.value;
                sub(&mut eval.supergradient, &t.production);
                eval.thermal.push(t.dispatch);
            }
            Part::Shortage(t) => {
                eval.shortage_value = t.value;
                sub(&mut eval.supergradient, &t.production);
                eval.shortage = t.dispatch;
            }
            Part::Hydro(h) => {
                eval.hydro_value += h.value;
                sub(&mut eval.supergradient, &h.discharge);
                eval.hydro.push(h);
            }
            Part::Ejp(e) => {
                eval.ejp_value += e.value;
                sub(&mut eval.supergradient, &e.production);
                eval.ejp.push(e);
            }
        }
    }
    eval.value = eval.demand_value
        + eval.thermal_value
        + eval.shortage_value
        + eval.hydro_value
        + eval.ejp_value;
    Ok(eval)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::risk::KappaMode;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mode(method: Method, eps: f64) -> RunMode {
        RunMode::new(
            method,
            RiskConfig {
                eps1: eps,
                eps2: eps,
                kappa_mode: KappaMode::Gaussian,
            },
        )
    }

    #[test]
    fn demand_term_examples() {
        assert_eq!(theta_demand(&[0.0, 0.0], &[3.0, 4.0]).unwrap().0, 0.0);
        assert_eq!(theta_demand(&[1.0, 2.0], &[0.0, 0.0]).unwrap().0, 0.0);
        assert_eq!(theta_demand(&[1.0, 2.0], &[3.0, 4.0]).unwrap().0, 11.0);
        assert!(theta_demand(&[1.0], &[3.0, 4.0]).is_err());
    }

    #[test]
    fn robust_demand_reductions() {
        let tree = random_tree(1, 3, 2, 1, 0);
        let cov = CovarianceModel::from_tree(&tree);
        let lam: Vec<f64> = (0..tree.dual_dim()).map(|i| 0.1 * i as f64 + 0.5).collect();
        let plain = theta_demand(&lam, cov.mean()).unwrap();
        assert_eq!(theta_demand_robust(&lam, &cov, 0.0).unwrap(), plain);
        let flat = CovarianceModel::diagonal(cov.mean().to_vec(), &vec![0.0; cov.dim()]).unwrap();
        assert_eq!(theta_demand_robust(&lam, &flat, 1.6).unwrap(), plain);
        let pos = CovarianceModel::diagonal(cov.mean().to_vec(), &vec![2.0; cov.dim()]).unwrap();
        assert!(theta_demand_robust(&lam, &pos, 1.6).unwrap().0 < plain.0);
    }

    #[test]
    fn nominal_at_zero_prices_is_units_only() {
        let tree = random_tree(2, 4, 2, 2, 1);
        let units = random_units(2, 2, 1, true);
        let model = DualModel::new(&tree, &units);
        let e = evaluate_dual(
            &vec![0.0; tree.dual_dim()],
            &model,
            &mode(Method::Nominal, 0.05),
        )
        .unwrap();
        assert_eq!(e.demand_value, 0.0);
        assert_eq!(e.thermal_value, 0.0);
        let h = theta_hydro(&vec![0.0; tree.dual_dim()], &units.hydro[0], 0, &tree);
        let j = theta_ejp(&vec![0.0; tree.dual_dim()], &units.ejp[0], &tree);
        assert_eq!(e.value, h.value + j.value);
    }

    #[test]
    fn zero_kappa_modes_equal_nominal() {
        let tree = random_tree(3, 4, 3, 3, 1);
        let units = random_units(3, 3, 1, true);
        let model = DualModel::new(&tree, &units);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lam: Vec<f64> = (0..tree.dual_dim())
            .map(|o| tree.node(o / 3).prob * rng.random_range(0.0..80.0))
            .collect();
        let base = evaluate_dual(&lam, &model, &mode(Method::Nominal, 0.05)).unwrap();
        for m in [Method::VarFa, Method::VarBenef, Method::Mixt] {
            let e = evaluate_dual(&lam, &model, &mode(m, 0.5)).unwrap();
            assert_eq!(e, base, "{m}");
        }
    }

    #[test]
    fn backends_agree() {
        let tree = random_tree(4, 4, 2, 2, 1);
        let units = random_units(4, 2, 1, false);
        let mut model = DualModel::new(&tree, &units);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lam: Vec<f64> = (0..tree.dual_dim())
            .map(|o| tree.node(o / 2).prob * rng.random_range(0.0..80.0))
            .collect();
        let a = evaluate_dual(&lam, &model, &mode(Method::Nominal, 0.05)).unwrap();
        model.hydro_backend = HydroBackend::Lp;
        let b = evaluate_dual(&lam, &model, &mode(Method::Nominal, 0.05)).unwrap();
        assert!((a.value - b.value).abs() < 1e-8 * a.value.abs().max(1.0));
    }

    #[test]
    fn negative_kappa_is_rejected() {
        let tree = random_tree(5, 2, 1, 1, 0);
        let units = random_units(5, 1, 0, false);
        let model = DualModel::new(&tree, &units);
        let r = evaluate_dual(
            &vec![0.0; tree.dual_dim()],
            &model,
            &mode(Method::VarBenef, 0.7),
        );
        assert!(matches!(r, Err(DualError::NegativeKappa(_))));
        let r = evaluate_dual(&[f64::NAN], &model, &mode(Method::Nominal, 0.05));
        assert!(r.is_err());
    }

    #[test]
    fn supergradient_matches_finite_differences() {
        let tree = random_tree(6, 4, 2, 3, 1);
        let units = random_units(6, 3, 1, false);
        let model = DualModel::new(&tree, &units);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for method in Method::ALL {
            let m = mode(method, 0.1);
            let lam: Vec<f64> = (0..tree.dual_dim())
                .map(|o| tree.node(o / 2).prob * rng.random_range(0.0..80.0))
                .collect();
            let e = evaluate_dual(&lam, &model, &m).unwrap();
            for _ in 0..10 {
                let dir: Vec<f64> = (0..lam.len())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                let h = 1e-7;
                let shift = |s: f64| -> Vec<f64> {
                    lam.iter().zip(&dir).map(|(l, d)| l + s * h * d).collect()
                };
                let fp = evaluate_dual(&shift(1.0), &model, &m).unwrap().value;
                let fm = evaluate_dual(&shift(-1.0), &model, &m).unwrap().value;
                let fd = (fp - fm) / (2.0 * h);
                let an: f64 = e.supergradient.iter().zip(&dir).map(|(g, d)| g * d).sum();
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(1.0),
                    "{method}: fd {fd} vs {an}"
                );
            }
        }
    }

    fn arb_lambda(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0f64..90.0, dim)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn concave_with_valid_supergradient(
            a in arb_lambda(64), b in arb_lambda(64), m in 0usize..4,
        ) {
            let tree = random_tree(7, 3, 2, 2, 1);
            let units = random_units(7, 2, 1, true);
            let model = DualModel::new(&tree, &units);
            let md = mode(Method::ALL[m], 0.05);
            let scale = |v: &Vec<f64>| -> Vec<f64> {
                (0..tree.dual_dim()).map(|o| tree.node(o / 2).prob * v[o]).collect()
            };
            let (la, lb) = (scale(&a), scale(&b));
            let ea = evaluate_dual(&la, &model, &md).unwrap();
            let eb = evaluate_dual(&lb, &model, &md).unwrap();
            let mid: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| 0.5 * (x + y)).collect();
            let em = evaluate_dual(&mid, &model, &md).unwrap();
            let slack = 1e-8 * (1.0 + ea.value.abs() + eb.value.abs());
            // EJP makes θ a minimum of affine functions too (finite choice).
            prop_assert!(em.value >= 0.5 * (ea.value + eb.value) - slack);
            let pred: f64 = ea.value + ea.supergradient.iter().zip(lb.iter().zip(&la)).map(|(g, (y, x))| g * (y - x)).sum::<f64>();
            prop_assert!(eb.value <= pred + slack);
        }
    }
}
