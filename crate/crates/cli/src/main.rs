use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hydrovar::dual::{load_lambda, Method, RunMode};
use hydrovar::instances::Preset;
use hydrovar::optimizer::{Algorithm, OptimizerParams};
use hydrovar::pipeline::{
    in_pool, mode_labels, optimize_mode, run, simulate_prices, write_optimum,
    write_simulation_outputs, InputSource, Instance, PipelineError, RunConfig, SimulationConfig,
    SimulationOutcome, Stage,
};
use hydrovar::risk::{KappaMode, RiskConfig};
use hydrovar::scenario::{
    generate_synthetic, load_scenarios, load_tree, save_scenarios, save_tree, validate_tree,
    ScenarioError,
};
use hydrovar::units::{load_units, save_units};

/// Yearly hydrothermal generation management on scenario trees.
#[derive(Parser, Debug)]
#[command(name = "hydrovar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic tree, scenario set and fleet.
    Generate(GenerateArgs),
    /// Check the tree, units and scenario files.
    Validate(InputArgs),
    /// Maximize the dual of every mode and save the prices.
    Optimize(OptimizeArgs),
    /// Simulate saved prices on the scenario set.
    Simulate(SimulateArgs),
    /// Optimize then simulate every mode.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, env = "HYDROVAR_PRESET", default_value = "tiny")]
    preset: Preset,
    #[arg(long, env = "HYDROVAR_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, env = "HYDROVAR_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InputArgs {
    #[arg(long, env = "HYDROVAR_TREE")]
    tree: Option<PathBuf>,
    #[arg(long, env = "HYDROVAR_UNITS")]
    units: Option<PathBuf>,
    #[arg(long, env = "HYDROVAR_SCENARIOS")]
    scenarios: Option<PathBuf>,
    /// Generate the inputs instead of reading files.
    #[arg(long, env = "HYDROVAR_PRESET", conflicts_with_all = ["tree", "units", "scenarios"])]
    preset: Option<Preset>,
    /// Seed of the generated inputs.
    #[arg(long, env = "HYDROVAR_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct RiskArgs {
    /// nominal, var-fa, var-benef or mixt.
    #[arg(
        long = "mode",
        env = "HYDROVAR_MODE",
        value_delimiter = ',',
        default_value = "nominal"
    )]
    modes: Vec<Method>,
    #[arg(long, env = "HYDROVAR_EPS1", default_value_t = 0.05)]
    eps1: f64,
    #[arg(long, env = "HYDROVAR_EPS2", default_value_t = 0.05)]
    eps2: f64,
    /// gaussian or general.
    #[arg(long, env = "HYDROVAR_KAPPA_MODE", default_value = "gaussian")]
    kappa_mode: KappaMode,
    #[arg(long, env = "HYDROVAR_MAX_ITERATIONS", default_value_t = 400)]
    max_iterations: usize,
    #[arg(long, env = "HYDROVAR_TOLERANCE", default_value_t = 1e-7)]
    tolerance: f64,
    /// Use the subgradient method instead of the bundle method.
    #[arg(long, env = "HYDROVAR_SUBGRADIENT")]
    subgradient: bool,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Stock grid points per reservoir.
    #[arg(long, env = "HYDROVAR_GRID", default_value_t = 101)]
    grid: usize,
    /// Unserved energy price as a multiple of the dearest thermal cost.
    #[arg(long, env = "HYDROVAR_UNSERVED_MULTIPLIER", default_value_t = 10.0)]
    unserved_multiplier: f64,
    /// Do not credit the terminal value of the final stocks.
    #[arg(long, env = "HYDROVAR_NO_TERMINAL_CREDITS")]
    no_terminal_credits: bool,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, env = "HYDROVAR_OUT")]
    out: PathBuf,
    #[arg(long, env = "HYDROVAR_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    risk: RiskArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Price file written by `optimize`; repeatable.
    #[arg(long, env = "HYDROVAR_LAMBDA", value_delimiter = ',', required = true)]
    lambda: Vec<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    risk: RiskArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    common: Common,
}

fn config_error(msg: impl Into<String>) -> PipelineError {
    PipelineError::Invalid(Stage::Config, msg.into())
}

impl InputArgs {
    fn source(&self) -> Result<InputSource, PipelineError> {
        if let Some(p) = self.preset {
            return Ok(InputSource::Synthetic {
                config: p.synth(self.seed),
                units: p.units(),
            });
        }
        match (&self.tree, &self.units, &self.scenarios) {
            (Some(t), Some(u), Some(s)) => Ok(InputSource::Files {
                tree: t.clone(),
                units: u.clone(),
                scenarios: s.clone(),
            }),
            _ => Err(config_error(
                "give --tree, --units and --scenarios, or --preset",
            )),
        }
    }
}

impl RiskArgs {
    fn modes(&self) -> Vec<RunMode> {
        let risk = RiskConfig {
            eps1: self.eps1,
            eps2: self.eps2,
            kappa_mode: self.kappa_mode,
        };
        self.modes.iter().map(|&m| RunMode::new(m, risk)).collect()
    }

    fn optimizer(&self) -> OptimizerParams {
        OptimizerParams {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            algorithm: if self.subgradient {
                Algorithm::Subgradient
            } else {
                Algorithm::ProximalBundle
            },
            ..OptimizerParams::default()
        }
    }
}

impl SimArgs {
    fn config(&self) -> SimulationConfig {
        let mut c = SimulationConfig {
            grid_points: self.grid,
            ..SimulationConfig::default()
        };
        c.options.unserved_multiplier = self.unserved_multiplier;
        c.options.terminal_credits = !self.no_terminal_credits;
        c
    }
}

fn run_config(
    input: &InputArgs,
    risk: &RiskArgs,
    common: &Common,
) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::new(input.source()?, risk.modes());
    cfg.optimizer = risk.optimizer();
    cfg.workers = common.workers;
    cfg.output = Some(common.out.clone());
    Ok(cfg)
}

fn generate(args: &GenerateArgs) -> Result<(), PipelineError> {
    let units = args.preset.units();
    let (tree, set) = generate_synthetic(&args.preset.synth(args.seed), &units)?;
    std::fs::create_dir_all(&args.out)?;
    save_tree(&tree, args.out.join("tree.json"))?;
    save_scenarios(&set, args.out.join("scenarios.json"))?;
    save_units(&units, args.out.join("units.json"))?;
    println!(
        "{}: {} nodes, {} scenarios of {} days",
        args.out.display(),
        tree.len(),
        set.len(),
        set.days()
    );
    Ok(())
}

fn validate(args: &InputArgs) -> Result<(), PipelineError> {
    if args.preset.is_some() {
        Instance::load(&args.source()?)?;
        println!("ok");
        return Ok(());
    }
    let Some(tree_path) = &args.tree else {
        return Err(config_error("--tree is required"));
    };
    let violations = match load_tree(tree_path) {
        Ok(tree) => Ok(validate_tree(&tree)).map(|v| (Some(tree), v)),
        Err(ScenarioError::Invalid(v)) => Ok((None, v)),
        Err(e) => Err(e),
    };
    let (tree, violations) = violations?;
    for v in &violations {
        println!("{v}");
    }
    if !violations.is_empty() {
        return Err(PipelineError::Invalid(
            Stage::Input,
            format!("{} violations in {}", violations.len(), tree_path.display()),
        ));
    }
    let units = args.units.as_ref().map(load_units).transpose()?;
    let scenarios = args.scenarios.as_ref().map(load_scenarios).transpose()?;
    if let (Some(tree), Some(units), Some(scenarios)) = (tree, units, scenarios) {
        Instance {
            tree,
            units,
            scenarios,
        }
        .check()?;
    }
    println!("ok");
    Ok(())
}

fn optimize(args: &OptimizeArgs) -> Result<(), PipelineError> {
    let source = match (args.input.preset, &args.input.tree, &args.input.units) {
        (None, Some(tree), Some(units)) => InputSource::Files {
            tree: tree.clone(),
            units: units.clone(),
            // Scenarios are not used here.
            scenarios: args.input.scenarios.clone().unwrap_or_else(|| tree.clone()),
        },
        _ => args.input.source()?,
    };
    let mut cfg = RunConfig::new(source, args.risk.modes());
    cfg.optimizer = args.risk.optimizer();
    cfg.workers = args.common.workers;
    cfg.validate()?;
    in_pool(cfg.workers, || {
        let (tree, units) = match (&cfg.input, &args.input.tree, &args.input.units) {
            (InputSource::Synthetic { config, units }, _, _) => {
                (generate_synthetic(config, units)?.0, units.clone())
            }
            (_, Some(tree), Some(units)) => (load_tree(tree)?, load_units(units)?),
            _ => return Err(config_error("give --tree and --units, or --preset")),
        };
        let shape = tree.shape();
        if shape.thermal_units != units.thermal.len() || shape.hydro_units != units.hydro.len() {
            return Err(PipelineError::Invalid(
                Stage::Input,
                "tree and units do not match".into(),
            ));
        }
        for (mode, label) in cfg.modes.iter().zip(mode_labels(&cfg.modes)) {
            let (opt, value) =
                optimize_mode(&tree, &units, mode, &cfg.optimizer, cfg.hydro_backend)?;
            write_optimum(&args.common.out, &tree, &label, &opt)?;
            println!(
                "{label}: dual value {value}, {} iterations, converged {}",
                opt.trace.entries.len(),
                opt.converged
            );
        }
        Ok(())
    })?
}

fn lambda_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.strip_prefix("lambda_").unwrap_or(&stem).to_string()
}

fn simulate(args: &SimulateArgs) -> Result<(), PipelineError> {
    let source = args.input.source()?;
    let sim = args.sim.config();
    if sim.grid_points < 2 {
        return Err(config_error("grid must have at least 2 points"));
    }
    if args.common.workers == Some(0) {
        return Err(config_error("workers must be >= 1"));
    }
    in_pool(args.common.workers, || {
        let inst = Instance::load(&source)?;
        let mut outcomes = Vec::new();
        for path in &args.lambda {
            let lambda = load_lambda(&inst.tree, path)?;
            let mut label = lambda_label(path);
            let mut k = 2;
            while outcomes
                .iter()
                .any(|o: &SimulationOutcome| o.label == label)
            {
                label = format!("{}_{k}", lambda_label(path));
                k += 1;
            }
            outcomes.push(simulate_prices(&inst, &lambda, &label, &sim)?);
        }
        write_simulation_outputs(&args.common.out, &inst, &outcomes)?;
        for o in &outcomes {
            print_report(&o.report);
        }
        Ok(())
    })?
}

fn print_report(r: &hydrovar::simulate::CostReport) {
    println!(
        "{}: mean {:.6e}, st. dev. {:.6e}, VaR 1% {:.6e}, VaR 5% {:.6e}",
        r.label, r.mean, r.std_dev, r.var1, r.var5
    );
}

fn run_all(args: &RunArgs) -> Result<(), PipelineError> {
    let mut cfg = run_config(&args.input, &args.risk, &args.common)?;
    cfg.simulation = args.sim.config();
    let (_, outcomes) = run(&cfg)?;
    for o in &outcomes {
        print_report(&o.simulation.report);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Validate(a) => validate(a),
        Command::Optimize(a) => optimize(a),
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run_all(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
