//! Generation units: thermal plants with grouped availability, hydro
//! reservoirs with a terminal water value, and EJP day contracts.
//!
//! Units file (`hydrovar-units/1`, JSON, unknown fields rejected):
//!
//! ```text
//! { "format": "hydrovar-units/1",
//!   "thermal": [ { "name", "cost", "p_max", "groups", "availability",
//!                  "fail_stay", "work_stay", "initial_working",
//!                  "check_interval" } ],
//!   "hydro":   [ { "name", "stock_min", "stock_max", "stock_init", "p_max",
//!                  "terminal_value": [[stock, value], ...] } ],
//!   "ejp":     [ { "name", "days", "power", "terminal_value": [v0, ..., vJ] } ] }
//! ```

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const UNITS_FORMAT: &str = "hydrovar-units/1";

#[derive(Error, Debug)]
pub enum UnitsError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format tag `{0}`")]
    Format(String),
    #[error("unit `{unit}`: {message}")]
    Invalid { unit: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for UnitsError {
    fn from(e: serde_json::Error) -> Self {
        UnitsError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

fn invalid(unit: &str, message: impl Into<String>) -> UnitsError {
    UnitsError::Invalid {
        unit: unit.to_string(),
        message: message.into(),
    }
}

/// Two-state (fail/work) Markov chain followed by every group of a unit,
/// observed at checking dates `t_k = m0 * k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityModel {
    /// `β₁`: probability of staying failed over one checking period.
    pub fail_stay: f64,
    /// `β₂`: probability of staying in work over one checking period.
    pub work_stay: f64,
    /// `p_W`: probability that a group works at the first time step.
    pub initial_working: f64,
    /// `m0`: days between checking dates.
    pub check_interval: usize,
}

impl AvailabilityModel {
    /// A chain started in its stationary law with stationary working
    /// probability `alpha` and lag-one correlation `persistence`.
    pub fn stationary(alpha: f64, persistence: f64, check_interval: usize) -> Self {
        // β₁ + β₂ − 1 = persistence and (1 − β₁) / (2 − β₁ − β₂) = alpha.
        let work_stay = alpha + persistence * (1.0 - alpha);
        let fail_stay = 1.0 - alpha * (1.0 - persistence);
        Self {
            fail_stay,
            work_stay,
            initial_working: alpha,
            check_interval,
        }
    }

    fn check(&self, unit: &str) -> Result<(), UnitsError> {
        for (what, v) in [
            ("fail_stay", self.fail_stay),
            ("work_stay", self.work_stay),
            ("initial_working", self.initial_working),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(unit, format!("{what} = {v} outside [0, 1]")));
            }
        }
        if self.check_interval == 0 {
            return Err(invalid(unit, "check_interval must be >= 1"));
        }
        Ok(())
    }

    /// Index `k` of the checking period containing day `t`.
    pub fn period_of(&self, day: usize) -> usize {
        day / self.check_interval
    }
}

type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Probability `α(t_k)` that a group works in checking period `k`.
///
/// `α(t_0) = p_W`; for `k ≥ 1`, `α = p_F P^k(F, W) + p_W P^k(W, W)` with the
/// transition matrix `P = [[β₁, 1 − β₁], [1 − β₂, β₂]]` (state order F, W).
pub fn availability_probability(model: &AvailabilityModel, k: usize) -> f64 {
    let p_w = model.initial_working;
    if k == 0 {
        return p_w;
    }
    let p = [
        [model.fail_stay, 1.0 - model.fail_stay],
        [1.0 - model.work_stay, model.work_stay],
    ];
    let mut acc: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
    let mut base = p;
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            acc = mat_mul(&acc, &base);
        }
        base = mat_mul(&base, &base);
        e >>= 1;
    }
    ((1.0 - p_w) * acc[0][1] + p_w * acc[1][1]).clamp(0.0, 1.0)
}

/// Draws the availability rate `τ = (# working groups) / n` with every
/// group working independently with probability `alpha`, so that
/// `n τ ~ Binomial(n, alpha)`.
pub fn sample_unavailability_rate<R: Rng + ?Sized>(
    unit: &ThermalUnit,
    alpha: f64,
    rng: &mut R,
) -> f64 {
    let n = unit.groups;
    let working = (0..n).filter(|_| rng.random::<f64>() < alpha).count();
    working as f64 / n as f64
}

/// Whether `Binomial(n, α)` is close enough to a Gaussian:
/// `n α ≥ 10` and `n (1 − α) ≥ 10`.
pub fn gaussian_approximation_ok(groups: usize, alpha: f64) -> bool {
    let n = groups as f64;
    n * alpha >= 10.0 && n * (1.0 - alpha) >= 10.0
}

/// Maximal energy of a thermal unit over one post: `τ_f τ_T P_max d`.
pub fn thermal_energy_bound(
    unit: &ThermalUnit,
    forced_rate: f64,
    programmed_rate: f64,
    hours: f64,
) -> f64 {
    forced_rate * programmed_rate * unit.p_max * hours
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalRecord {
    pub name: String,
    pub cost: f64,
    pub p_max: f64,
    pub groups: usize,
    pub availability: f64,
    pub fail_stay: f64,
    pub work_stay: f64,
    pub initial_working: f64,
    pub check_interval: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalUnit {
    pub name: String,
    /// `c_ℓ`, currency per MWh.
    pub cost: f64,
    /// `P_max`, MW.
    pub p_max: f64,
    /// `n_ℓ`, number of identical groups.
    pub groups: usize,
    /// `α_ℓ`, probability that a group works (used by the optimizer).
    pub availability: f64,
    /// Outage process used to draw scenario availabilities.
    pub model: AvailabilityModel,
}

impl ThermalUnit {
    /// `P̄_max = P_max / n`.
    pub fn group_power(&self) -> f64 {
        self.p_max / self.groups as f64
    }

    /// Standard deviation of the availability rate, `sqrt(α(1−α)/n)`.
    pub fn rate_std(&self) -> f64 {
        let a = self.availability;
        (a * (1.0 - a) / self.groups as f64).sqrt()
    }

    pub fn validate(&self) -> Result<(), UnitsError> {
        let u = &self.name;
        if !(self.cost.is_finite() && self.cost >= 0.0) {
            return Err(invalid(u, "cost must be >= 0"));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(invalid(u, "p_max must be > 0"));
        }
        if self.groups == 0 {
            return Err(invalid(u, "groups must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.availability) {
            return Err(invalid(u, "availability outside [0, 1]"));
        }
        self.model.check(u)
    }

    fn from_record(r: ThermalRecord) -> Self {
        Self {
            name: r.name,
            cost: r.cost,
            p_max: r.p_max,
            groups: r.groups,
            availability: r.availability,
            model: AvailabilityModel {
                fail_stay: r.fail_stay,
                work_stay: r.work_stay,
                initial_working: r.initial_working,
                check_interval: r.check_interval,
            },
        }
    }

    fn to_record(&self) -> ThermalRecord {
        ThermalRecord {
            name: self.name.clone(),
            cost: self.cost,
            p_max: self.p_max,
            groups: self.groups,
            availability: self.availability,
            fail_stay: self.model.fail_stay,
            work_stay: self.model.work_stay,
            initial_working: self.model.initial_working,
            check_interval: self.model.check_interval,
        }
    }
}

/// Piecewise-linear function given by breakpoints, extended linearly
/// beyond the first and last breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, String> {
        if points.is_empty() {
            return Err("at least one breakpoint is required".into());
        }
        if points.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
            return Err("breakpoints must be finite".into());
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err("breakpoint abscissae must be strictly increasing".into());
        }
        Ok(Self { points })
    }

    pub fn constant(v: f64) -> Self {
        Self {
            points: vec![(0.0, v)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Slopes of consecutive segments.
    pub fn slopes(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.slopes().iter().all(|&s| s >= 0.0)
    }

    pub fn is_concave(&self) -> bool {
        self.slopes()
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = &self.points;
        if p.len() == 1 {
            return p[0].1;
        }
        // Segment k covers [p[k], p[k+1]]; the outer segments extend.
        let k = match p.iter().position(|&(bx, _)| bx > x) {
            Some(0) => 0,
            Some(i) => (i - 1).min(p.len() - 2),
            None => p.len() - 2,
        };
        let (x0, v0) = p[k];
        let (x1, v1) = p[k + 1];
        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    }

    /// Affine pieces `(intercept, slope)` whose minimum equals a concave
    /// function on its whole domain.
    pub fn affine_pieces(&self) -> Vec<(f64, f64)> {
        if self.points.len() == 1 {
            return vec![(self.points[0].1, 0.0)];
        }
        self.points
            .windows(2)
            .map(|w| {
                let s = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                (w[0].1 - s * w[0].0, s)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroRecord {
    pub name: String,
    pub stock_min: f64,
    pub stock_max: f64,
    pub stock_init: f64,
    pub p_max: f64,
    pub terminal_value: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydroUnit {
    pub name: String,
    /// `x_min`, MWh.
    pub stock_min: f64,
    /// `x_max`, MWh.
    pub stock_max: f64,
    /// `x_0`, MWh.
    pub stock_init: f64,
    /// Turbine power, MW.
    pub p_max: f64,
    /// `V_H`, value of the stock left at the end of the horizon.
    pub terminal_value: PiecewiseLinear,
}

impl HydroUnit {
    pub fn validate(&self) -> Result<(), UnitsError> {
        let u = &self.name;
        if !(self.stock_min >= 0.0 && self.stock_min < self.stock_max && self.stock_max.is_finite())
        {
            return Err(invalid(u, "need 0 <= stock_min < stock_max"));
        }
        if !(self.stock_min..=self.stock_max).contains(&self.stock_init) {
            return Err(invalid(u, "stock_init outside [stock_min, stock_max]"));
        }
        if !(self.p_max.is_finite() && self.p_max >= 0.0) {
            return Err(invalid(u, "p_max must be >= 0"));
        }
        if !self.terminal_value.is_nondecreasing() {
            return Err(invalid(u, "terminal value slopes must be >= 0"));
        }
        if !self.terminal_value.is_concave() {
            return Err(invalid(u, "terminal value must be concave"));
        }
        Ok(())
    }

    /// Maximal discharge of one post, `τ_H P_max d`.
    pub fn discharge_bound(&self, programmed_rate: f64, hours: f64) -> f64 {
        programmed_rate * self.p_max * hours
    }

    fn from_record(r: HydroRecord) -> Result<Self, UnitsError> {
        let terminal_value =
            PiecewiseLinear::new(r.terminal_value).map_err(|m| invalid(&r.name, m))?;
        Ok(Self {
            name: r.name,
            stock_min: r.stock_min,
            stock_max: r.stock_max,
            stock_init: r.stock_init,
            p_max: r.p_max,
            terminal_value,
        })
    }

    fn to_record(&self) -> HydroRecord {
        HydroRecord {
            name: self.name.clone(),
            stock_min: self.stock_min,
            stock_max: self.stock_max,
            stock_init: self.stock_init,
            p_max: self.p_max,
            terminal_value: self.terminal_value.points().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EjpRecord {
    pub name: String,
    pub days: usize,
    pub power: f64,
    pub terminal_value: Vec<f64>,
}

/// Demand-side contract usable on whole days, at most `days` times.
#[derive(Debug, Clone, PartialEq)]
pub struct EjpContract {
    pub name: String,
    /// `J_ℓ`, day budget.
    pub days: usize,
    /// `P_J`, MW.
    pub power: f64,
    /// `V_J(s)` for `s = 0..=J`.
    pub terminal_value: Vec<f64>,
}

impl EjpContract {
    pub fn validate(&self) -> Result<(), UnitsError> {
        let u = &self.name;
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(invalid(u, "power must be > 0"));
        }
        if self.terminal_value.len() != self.days + 1 {
            return Err(invalid(u, "terminal_value needs days + 1 entries"));
        }
        if self.terminal_value.iter().any(|v| !v.is_finite()) {
            return Err(invalid(u, "terminal values must be finite"));
        }
        if self.terminal_value.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid(u, "terminal value must be nondecreasing"));
        }
        Ok(())
    }

    fn from_record(r: EjpRecord) -> Self {
        Self {
            name: r.name,
            days: r.days,
            power: r.power,
            terminal_value: r.terminal_value,
        }
    }

    fn to_record(&self) -> EjpRecord {
        EjpRecord {
            name: self.name.clone(),
            days: self.days,
            power: self.power,
            terminal_value: self.terminal_value.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsFile {
    pub format: String,
    pub thermal: Vec<ThermalRecord>,
    pub hydro: Vec<HydroRecord>,
    pub ejp: Vec<EjpRecord>,
}

/// The whole generation fleet.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnitSet {
    pub thermal: Vec<ThermalUnit>,
    pub hydro: Vec<HydroUnit>,
    pub ejp: Vec<EjpContract>,
}

impl UnitSet {
    pub fn validate(&self) -> Result<(), UnitsError> {
        self.thermal.iter().try_for_each(ThermalUnit::validate)?;
        self.hydro.iter().try_for_each(HydroUnit::validate)?;
        self.ejp.iter().try_for_each(EjpContract::validate)
    }

    pub fn max_thermal_cost(&self) -> f64 {
        self.thermal.iter().map(|u| u.cost).fold(0.0, f64::max)
    }

    /// Cost of the median thermal unit in merit order.
    pub fn median_thermal_cost(&self) -> f64 {
        let mut c: Vec<f64> = self.thermal.iter().map(|u| u.cost).collect();
        if c.is_empty() {
            return 0.0;
        }
        c.sort_by(f64::total_cmp);
        c[(c.len() - 1) / 2]
    }

    /// Index of the reservoir with the largest maximal stock.
    pub fn biggest_reservoir(&self) -> Option<usize> {
        (0..self.hydro.len())
            .max_by(|&a, &b| self.hydro[a].stock_max.total_cmp(&self.hydro[b].stock_max))
    }

    pub fn without_ejp(&self) -> Self {
        Self {
            ejp: Vec::new(),
            ..self.clone()
        }
    }
}

pub fn parse_units(text: &str) -> Result<UnitSet, UnitsError> {
    let file: UnitsFile = serde_json::from_str(text)?;
    if file.format != UNITS_FORMAT {
        return Err(UnitsError::Format(file.format));
    }
    let units = UnitSet {
        thermal: file
            .thermal
            .into_iter()
            .map(ThermalUnit::from_record)
            .collect(),
        hydro: file
            .hydro
            .into_iter()
            .map(HydroUnit::from_record)
            .collect::<Result<_, _>>()?,
        ejp: file.ejp.into_iter().map(EjpContract::from_record).collect(),
    };
    units.validate()?;
    Ok(units)
}

pub fn load_units(path: impl AsRef<Path>) -> Result<UnitSet, UnitsError> {
    parse_units(&fs::read_to_string(path)?)
}

pub fn units_to_string(units: &UnitSet) -> String {
    let file = UnitsFile {
        format: UNITS_FORMAT.to_string(),
        thermal: units.thermal.iter().map(ThermalUnit::to_record).collect(),
        hydro: units.hydro.iter().map(HydroUnit::to_record).collect(),
        ejp: units.ejp.iter().map(EjpContract::to_record).collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("units serialization cannot fail");
    s.push('\n');
    s
}

pub fn save_units(units: &UnitSet, path: impl AsRef<Path>) -> Result<(), UnitsError> {
    fs::write(path, units_to_string(units))?;
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(p_w: f64, b1: f64, b2: f64) -> AvailabilityModel {
        AvailabilityModel {
            fail_stay: b1,
            work_stay: b2,
            initial_working: p_w,
            check_interval: 7,
        }
    }

    #[test]
    fn absorbing_states() {
        for k in [0, 1, 2, 5, 50] {
            assert_eq!(availability_probability(&model(1.0, 0.3, 1.0), k), 1.0);
            assert_eq!(availability_probability(&model(0.0, 1.0, 0.4), k), 0.0);
        }
    }

    #[test]
    fn two_step_value() {
        let a = availability_probability(&model(1.0, 0.2, 0.9), 2);
        assert!((a - 0.89).abs() < 1e-15);
    }

    #[test]
    fn stationary_chain_is_constant() {
        let m = model(0.3, 0.25, 0.75);
        let a1 = availability_probability(&m, 1);
        for k in 2..40 {
            assert!((availability_probability(&m, k) - a1).abs() < 1e-14);
        }
        let s = AvailabilityModel::stationary(0.85, 0.6, 7);
        for k in 0..40 {
            assert!((availability_probability(&s, k) - 0.85).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = thermal("a", 1.0, 1.0, 1, 1.0);
        let four = thermal("b", 1.0, 1.0, 4, 0.0);
        for _ in 0..1000 {
            assert_eq!(sample_unavailability_rate(&one, 1.0, &mut rng), 1.0);
            assert_eq!(sample_unavailability_rate(&four, 0.0, &mut rng), 0.0);
        }
    }

    #[test]
    fn energy_bounds() {
        let u = thermal("a", 1.0, 100.0, 1, 1.0);
        assert_eq!(thermal_energy_bound(&u, 1.0, 1.0, 8.0), 800.0);
        assert_eq!(thermal_energy_bound(&u, 0.0, 1.0, 8.0), 0.0);
        let big = thermal("b", 1.0, 1000.0, 4, 1.0);
        assert!((thermal_energy_bound(&big, 0.75, 0.8, 8.0) - 4800.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_flag_matches_inequality() {
        assert!(gaussian_approximation_ok(100, 0.5));
        assert!(!gaussian_approximation_ok(20, 0.9));
        assert!(gaussian_approximation_ok(20, 0.5));
        assert!(!gaussian_approximation_ok(19, 0.5));
    }

    #[test]
    fn piecewise_eval_and_extension() {
        let f = PiecewiseLinear::new(vec![(0.0, 0.0), (10.0, 20.0), (20.0, 25.0)]).unwrap();
        assert_eq!(f.eval(5.0), 10.0);
        assert_eq!(f.eval(15.0), 22.5);
        assert_eq!(f.eval(30.0), 30.0);
        assert_eq!(f.eval(-1.0), -2.0);
        assert!(f.is_concave() && f.is_nondecreasing());
        let pieces = f.affine_pieces();
        for x in [0.0, 3.0, 10.0, 17.0, 20.0] {
            let m = pieces
                .iter()
                .map(|(a, b)| a + b * x)
                .fold(f64::INFINITY, f64::min);
            assert!((m - f.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn units_file_round_trip_and_rejections() {
        let set = UnitSet {
            thermal: vec![thermal("coal", 30.0, 500.0, 2, 0.9)],
            hydro: vec![hydro("lake", 1000.0, 500.0, 100.0, 20.0)],
            ejp: vec![EjpContract {
                name: "ejp".into(),
                days: 2,
                power: 50.0,
                terminal_value: vec![0.0, 1.0, 2.0],
            }],
        };
        let text = units_to_string(&set);
        let back = parse_units(&text).unwrap();
        assert_eq!(back, set);
        assert_eq!(units_to_string(&back), text);

        let bad = text.replace("\"groups\": 2", "\"groups\": 0");
        assert!(matches!(parse_units(&bad), Err(UnitsError::Invalid { .. })));
        let unknown = text.replace("\"cost\"", "\"colour\": 3, \"cost\"");
        assert!(matches!(
            parse_units(&unknown),
            Err(UnitsError::Parse { .. })
        ));
    }
}
