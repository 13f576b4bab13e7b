//! Optimize-then-simulate runs over several modes and their report files.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dual::{
    evaluate_dual, save_lambda, DualError, DualModel, HydroBackend, LambdaError, Multiplier,
    RunMode,
};
use crate::optimizer::{optimize_dual, OptimizerError, OptimizerParams, OptimizerResult};
use crate::risk::RiskError;
use crate::scenario::{
    generate_synthetic, load_scenarios, load_tree, ScenarioError, ScenarioSet, ScenarioTree,
    SynthConfig,
};
use crate::simulate::{
    compute_all_bellman, run_monte_carlo, write_scenario_report, write_summary, write_trajectories,
    write_weeks, BellmanTable, Calendar, CostReport, MonteCarloResult, ReservoirStats,
    SimulateError, SimulationOptions,
};
use crate::units::{load_units, UnitSet, UnitsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Input,
    Optimize,
    Bellman,
    Simulate,
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Input => "input",
            Stage::Optimize => "optimize",
            Stage::Bellman => "bellman",
            Stage::Simulate => "simulate",
            Stage::Report => "report",
        }
    }
}

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error("{stage}: {message}", stage = .0.as_str(), message = .1)]
    Invalid(Stage, String),
    #[error("input: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("input: {0}")]
    Units(#[from] UnitsError),
    #[error("input: {0}")]
    Lambda(#[from] LambdaError),
    #[error("config: {0}")]
    Risk(#[from] RiskError),
    #[error("optimize ({mode}): {source}")]
    Optimize {
        mode: String,
        #[source]
        source: OptimizerError,
    },
    #[error("optimize ({mode}): {source}")]
    Dual {
        mode: String,
        #[source]
        source: DualError,
    },
    #[error("{stage} ({mode}): {source}", stage = .stage.as_str())]
    Simulate {
        stage: Stage,
        mode: String,
        #[source]
        source: SimulateError,
    },
    #[error("report: {0}")]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Report(#[from] SimulateError),
    #[error("report: {0}")]
    Trace(#[from] OptimizerError),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Invalid(s, _) => *s,
            PipelineError::Scenario(_) | PipelineError::Units(_) | PipelineError::Lambda(_) => {
                Stage::Input
            }
            PipelineError::Risk(_) => Stage::Config,
            PipelineError::Optimize { .. } | PipelineError::Dual { .. } => Stage::Optimize,
            PipelineError::Simulate { stage, .. } => *stage,
            PipelineError::Io(_) | PipelineError::Report(_) | PipelineError::Trace(_) => {
                Stage::Report
            }
        }
    }

    /// Failures of the numerical stages, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            PipelineError::Dual {
                source: DualError::NegativeKappa(_) | DualError::Risk(_),
                ..
            } => false,
            PipelineError::Optimize {
                source: OptimizerError::Params(_),
                ..
            } => false,
            PipelineError::Simulate {
                source: SimulateError::EmptyGrid(_),
                ..
            } => false,
            _ => matches!(
                self.stage(),
                Stage::Optimize | Stage::Bellman | Stage::Simulate
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Stock grid points per reservoir.
    pub grid_points: usize,
    pub options: SimulationOptions,
    /// Days in a week at a level.
    pub week_days: usize,
    /// Week thresholds X of the reservoir table.
    pub week_list: Vec<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            grid_points: 101,
            options: SimulationOptions::default(),
            week_days: 7,
            week_list: vec![1, 2, 3, 4, 5, 10, 15],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Files {
        tree: PathBuf,
        units: PathBuf,
        scenarios: PathBuf,
    },
    Synthetic {
        config: SynthConfig,
        units: UnitSet,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: InputSource,
    pub modes: Vec<RunMode>,
    pub optimizer: OptimizerParams,
    pub simulation: SimulationConfig,
    pub hydro_backend: HydroBackend,
    /// Rayon workers; `None` uses the global pool.
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(input: InputSource, modes: Vec<RunMode>) -> Self {
        Self {
            input,
            modes,
            optimizer: OptimizerParams::default(),
            simulation: SimulationConfig::default(),
            hydro_backend: HydroBackend::default(),
            workers: None,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.modes.is_empty() {
            return Err(PipelineError::Invalid(
                Stage::Config,
                "at least one mode is required".into(),
            ));
        }
        for m in &self.modes {
            m.risk.validate()?;
        }
        if self.simulation.grid_points < 2 {
            return Err(PipelineError::Invalid(
                Stage::Config,
                "grid must have at least 2 points".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(PipelineError::Invalid(
                Stage::Config,
                "workers must be >= 1".into(),
            ));
        }
        if let InputSource::Files {
            tree,
            units,
            scenarios,
        } = &self.input
        {
            for p in [tree, units, scenarios] {
                if !p.exists() {
                    return Err(PipelineError::Invalid(
                        Stage::Config,
                        format!("{} does not exist", p.display()),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Loaded or generated inputs of a run.
#[derive(Debug, Clone)]
pub struct Instance {
    pub tree: ScenarioTree,
    pub units: UnitSet,
    pub scenarios: ScenarioSet,
}

impl Instance {
    pub fn load(input: &InputSource) -> Result<Self, PipelineError> {
        let inst = match input {
            InputSource::Files {
                tree,
                units,
                scenarios,
            } => Instance {
                tree: load_tree(tree)?,
                units: load_units(units)?,
                scenarios: load_scenarios(scenarios)?,
            },
            InputSource::Synthetic { config, units } => {
                let (tree, scenarios) = generate_synthetic(config, units)?;
                Instance {
                    tree,
                    units: units.clone(),
                    scenarios,
                }
            }
        };
        inst.check()?;
        Ok(inst)
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let shape = self.tree.shape();
        let (nt, nh) = (self.units.thermal.len(), self.units.hydro.len());
        let bad = |m: String| Err(PipelineError::Invalid(Stage::Input, m));
        if shape.thermal_units != nt || shape.hydro_units != nh {
            return bad(format!(
                "tree has {} thermal and {} hydro units, units file {nt} and {nh}",
                shape.thermal_units, shape.hydro_units
            ));
        }
        let s = &self.scenarios;
        if s.thermal_units != nt || s.hydro_units != nh || s.num_posts != shape.num_posts {
            return bad("scenarios do not match the tree and units".into());
        }
        if s.days() > shape.horizon {
            return bad(format!(
                "scenarios cover {} days, tree horizon is {}",
                s.days(),
                shape.horizon
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub label: String,
    pub tables: Vec<BellmanTable>,
    pub monte_carlo: MonteCarloResult,
    pub report: CostReport,
    /// Statistics of the biggest reservoir.
    pub reservoir: Option<ReservoirStats>,
}

#[derive(Debug, Clone)]
pub struct ModeOutcome {
    pub mode: RunMode,
    pub optimum: OptimizerResult,
    /// `θ` at the optimum for this mode.
    pub dual_value: f64,
    pub simulation: SimulationOutcome,
}

impl ModeOutcome {
    pub fn label(&self) -> &str {
        &self.simulation.label
    }
}

/// Method labels, suffixed `_2`, `_3`... on repeats.
pub fn mode_labels(modes: &[RunMode]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in modes {
        let base = m.method.label().to_string();
        let mut label = base.clone();
        let mut k = 2;
        while out.contains(&label) {
            label = format!("{base}_{k}");
            k += 1;
        }
        out.push(label);
    }
    out
}

/// Maximizes the dual of one mode.
pub fn optimize_mode(
    tree: &ScenarioTree,
    units: &UnitSet,
    mode: &RunMode,
    params: &OptimizerParams,
    backend: HydroBackend,
) -> Result<(OptimizerResult, f64), PipelineError> {
    let label = mode.method.label().to_string();
    let mut model = DualModel::new(tree, units);
    model.hydro_backend = backend;
    mode.kappas().map_err(|source| PipelineError::Dual {
        mode: label.clone(),
        source,
    })?;
    let r =
        optimize_dual(&model, mode, None, params).map_err(|source| PipelineError::Optimize {
            mode: label.clone(),
            source,
        })?;
    let v = evaluate_dual(&r.lambda, &model, mode)
        .map_err(|source| PipelineError::Dual {
            mode: label,
            source,
        })?
        .value;
    Ok((r, v))
}

/// Bellman tables and Monte Carlo statistics for given prices.
pub fn simulate_prices(
    inst: &Instance,
    lambda: &Multiplier,
    label: &str,
    cfg: &SimulationConfig,
) -> Result<SimulationOutcome, PipelineError> {
    let err = |stage: Stage| {
        move |source| PipelineError::Simulate {
            stage,
            mode: label.to_string(),
            source,
        }
    };
    if lambda.len() != inst.tree.dual_dim() {
        return Err(PipelineError::Invalid(
            Stage::Input,
            format!(
                "prices have {} entries, tree needs {}",
                lambda.len(),
                inst.tree.dual_dim()
            ),
        ));
    }
    let tables = compute_all_bellman(&inst.tree, lambda, &inst.units, cfg.grid_points)
        .map_err(err(Stage::Bellman))?;
    let calendar = Calendar::from_tree(&inst.tree);
    let monte_carlo = run_monte_carlo(
        &inst.scenarios,
        &tables,
        &inst.units,
        &calendar,
        &cfg.options,
    )
    .map_err(err(Stage::Simulate))?;
    let report = monte_carlo.report(label).map_err(err(Stage::Simulate))?;
    let reservoir = inst
        .units
        .biggest_reservoir()
        .map(|r| monte_carlo.reservoir_stats(&inst.units, r, cfg.week_days, &cfg.week_list));
    Ok(SimulationOutcome {
        label: label.to_string(),
        tables,
        monte_carlo,
        report,
        reservoir,
    })
}

/// Runs every mode in order on an already loaded instance.
pub fn run_instance(inst: &Instance, cfg: &RunConfig) -> Result<Vec<ModeOutcome>, PipelineError> {
    let labels = mode_labels(&cfg.modes);
    let mut out = Vec::with_capacity(cfg.modes.len());
    for (mode, label) in cfg.modes.iter().zip(labels) {
        let (optimum, dual_value) = optimize_mode(
            &inst.tree,
            &inst.units,
            mode,
            &cfg.optimizer,
            cfg.hydro_backend,
        )?;
        let simulation = simulate_prices(inst, &optimum.lambda, &label, &cfg.simulation)?;
        out.push(ModeOutcome {
            mode: *mode,
            optimum,
            dual_value,
            simulation,
        });
    }
    Ok(out)
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn in_pool<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, PipelineError> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| PipelineError::Invalid(Stage::Config, e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Loads the inputs, runs every mode and writes the report files when an
/// output directory is configured.
pub fn run(cfg: &RunConfig) -> Result<(Instance, Vec<ModeOutcome>), PipelineError> {
    cfg.validate()?;
    in_pool(cfg.workers, || {
        let inst = Instance::load(&cfg.input)?;
        let outcomes = run_instance(&inst, cfg)?;
        if let Some(dir) = &cfg.output {
            write_outputs(dir, &inst, &outcomes)?;
        }
        Ok((inst, outcomes))
    })?
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, PipelineError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `summary.csv`, `trajectory.csv`, `weeks.csv` and, per mode,
/// `costs_<label>.csv`, `trace_<label>.csv` and `lambda_<label>.txt`.
pub fn write_outputs(
    dir: &Path,
    inst: &Instance,
    outcomes: &[ModeOutcome],
) -> Result<(), PipelineError> {
    let sims: Vec<SimulationOutcome> = outcomes.iter().map(|o| o.simulation.clone()).collect();
    write_simulation_outputs(dir, inst, &sims)?;
    for o in outcomes {
        write_optimum(dir, &inst.tree, o.label(), &o.optimum)?;
    }
    Ok(())
}

/// Writes `trace_<label>.csv` and `lambda_<label>.txt`.
pub fn write_optimum(
    dir: &Path,
    tree: &ScenarioTree,
    label: &str,
    optimum: &OptimizerResult,
) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    optimum
        .trace
        .write_csv(create(dir, &format!("trace_{label}.csv"))?)?;
    save_lambda(
        tree,
        &optimum.lambda,
        dir.join(format!("lambda_{label}.txt")),
    )?;
    Ok(())
}

/// Writes `summary.csv`, `costs_<label>.csv`, `trajectory.csv` and
/// `weeks.csv`.
pub fn write_simulation_outputs(
    dir: &Path,
    inst: &Instance,
    sims: &[SimulationOutcome],
) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    let reports: Vec<CostReport> = sims.iter().map(|o| o.report.clone()).collect();
    write_summary(create(dir, "summary.csv")?, &reports)?;
    for o in sims {
        write_scenario_report(
            create(dir, &format!("costs_{}.csv", o.label))?,
            &o.monte_carlo,
            &inst.units,
        )?;
    }
    let stats: Vec<(String, ReservoirStats)> = sims
        .iter()
        .filter_map(|o| o.reservoir.clone().map(|r| (o.label.clone(), r)))
        .collect();
    if !stats.is_empty() {
        write_trajectories(create(dir, "trajectory.csv")?, &stats)?;
        write_weeks(create(dir, "weeks.csv")?, &stats)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::Method;
    use crate::instances::tiny_units;
    use crate::risk::RiskConfig;

    fn tiny() -> RunConfig {
        RunConfig::new(
            InputSource::Synthetic {
                config: SynthConfig::tiny(5),
                units: tiny_units(),
            },
            vec![RunMode::new(Method::Nominal, RiskConfig::default())],
        )
    }

    #[test]
    fn tiny_run_writes_reports() {
        let dir = std::env::temp_dir().join(format!("hydrovar-pipeline-{}", std::process::id()));
        let mut cfg = tiny();
        cfg.output = Some(dir.clone());
        let (_, out) = run(&cfg).unwrap();
        assert_eq!(out.len(), 1);
        let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
        let mut lines = summary.lines();
        assert_eq!(lines.next().unwrap(), "method,Mean,St. Dev.,VaR 1%,VaR 5%");
        assert_eq!(lines.next().unwrap().split(',').count(), 5);
        for f in [
            "costs_Nominal.csv",
            "trace_Nominal.csv",
            "lambda_Nominal.txt",
            "trajectory.csv",
            "weeks.csv",
        ] {
            assert!(dir.join(f).exists(), "{f}");
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn config_errors_are_typed() {
        let mut cfg = tiny();
        cfg.modes.clear();
        assert_eq!(run(&cfg).unwrap_err().stage(), Stage::Config);
        let mut cfg = tiny();
        cfg.simulation.grid_points = 1;
        assert!(!run(&cfg).unwrap_err().is_numerical());
        let mut cfg = tiny();
        cfg.input = InputSource::Files {
            tree: "/nonexistent/tree.json".into(),
            units: "/nonexistent/units.json".into(),
            scenarios: "/nonexistent/s.json".into(),
        };
        assert_eq!(run(&cfg).unwrap_err().stage(), Stage::Config);
        let mut cfg = tiny();
        cfg.modes[0].risk.eps1 = 0.0;
        assert_eq!(run(&cfg).unwrap_err().stage(), Stage::Config);
    }

    #[test]
    fn numerical_failures_are_flagged() {
        let opt = |source| PipelineError::Optimize {
            mode: "Nominal".into(),
            source,
        };
        assert!(opt(OptimizerError::NonFinite(3)).is_numerical());
        assert!(!opt(OptimizerError::Params("bad".into())).is_numerical());
        let sim = |stage, source| PipelineError::Simulate {
            stage,
            mode: "Nominal".into(),
            source,
        };
        assert!(sim(Stage::Simulate, SimulateError::NoScenarios).is_numerical());
        assert!(!sim(Stage::Bellman, SimulateError::EmptyGrid("lake".into())).is_numerical());
        assert!(!PipelineError::Invalid(Stage::Input, "x".into()).is_numerical());
    }

    #[test]
    fn labels_are_unique() {
        let m = RunMode::new(Method::Nominal, RiskConfig::default());
        let v = RunMode::new(Method::VarBenef, RiskConfig::default());
        assert_eq!(
            mode_labels(&[m, v, m, m]),
            vec!["Nominal", "VaR_benef", "Nominal_2", "Nominal_3"]
        );
    }
}
