//! Synthetic trees and scenario sets.
//!
//! Demand of post `p` on day `t` is
//! `base * season(t) * week(t) * post_factor[p] * (1 + shift) * duration[p]`
//! where `season` is a cosine peaking on `peak_day` and `shift` is the
//! level of the branch. Each time a branching day is crossed every node
//! gets `branching` sons whose shift moves by `-spread..=+spread` in equal
//! steps. Inflows follow the same pattern with their own profile.
//!
//! Independent scenarios keep a persistent position `w ∈ [0, 1]` inside the
//! tree's range of shifts at each day, so their demand and inflows stay
//! inside the tree envelope. Thermal availability rates are drawn per
//! checking period from the units' outage model.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RawNode, Scenario, ScenarioDay, ScenarioError, ScenarioSet, ScenarioTree, TreeShape};
use crate::units::{availability_probability, sample_unavailability_rate, UnitSet};

#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    /// Mean load, MW.
    pub base: f64,
    /// Relative amplitude of the yearly cosine.
    pub seasonal_amplitude: f64,
    /// Day of maximal seasonal load.
    pub peak_day: f64,
    /// Load multiplier per post (length `L`).
    pub post_factors: Vec<f64>,
    /// Load multiplier for days 5 and 6 of each week.
    pub weekend_factor: f64,
    /// Relative level step between sibling branches.
    pub branch_spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InflowProfile {
    /// Mean inflow per reservoir, MW.
    pub mean: Vec<f64>,
    pub seasonal_amplitude: f64,
    /// Day of maximal inflow.
    pub peak_day: f64,
    pub branch_spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Last day `T`; the tree has time steps `0..=T` and scenarios `T` days.
    pub horizon: usize,
    /// Sons per node on branching days.
    pub branching: usize,
    /// Days on which every node branches.
    pub branch_times: Vec<usize>,
    /// Post durations in hours (length `L`).
    pub post_hours: Vec<f64>,
    pub demand: DemandProfile,
    pub inflow: InflowProfile,
    /// Depth of summer thermal maintenance: `τ_T` drops to `1 - depth` at
    /// the opposite of the demand peak.
    pub maintenance_depth: f64,
    /// Shifts demand up by `5% * difficulty` and inflows down by
    /// `25% * difficulty`.
    pub difficulty: f64,
    /// Day-to-day persistence of a scenario's position in the envelope.
    pub persistence: f64,
    pub seed: u64,
    pub scenarios: usize,
}

impl SynthConfig {
    /// A small instance with one reservoir and one post.
    pub fn tiny(seed: u64) -> Self {
        Self {
            horizon: 14,
            branching: 2,
            branch_times: vec![4, 9],
            post_hours: vec![24.0],
            demand: DemandProfile {
                base: 100.0,
                seasonal_amplitude: 0.1,
                peak_day: 7.0,
                post_factors: vec![1.0],
                weekend_factor: 0.9,
                branch_spread: 0.05,
            },
            inflow: InflowProfile {
                mean: vec![10.0],
                seasonal_amplitude: 0.3,
                peak_day: 0.0,
                branch_spread: 0.2,
            },
            maintenance_depth: 0.0,
            difficulty: 0.0,
            persistence: 0.8,
            seed,
            scenarios: 8,
        }
    }

    /// One year, three posts and six binary branchings; about 4.7e3 nodes.
    pub fn paper_like(seed: u64) -> Self {
        Self {
            horizon: 364,
            branching: 2,
            branch_times: vec![60, 120, 180, 240, 300, 340],
            ..Self::desk_benchmark(seed)
        }
    }

    /// The desk-scale benchmark: one year starting in September, three
    /// posts of 4, 8 and 12 hours, two reservoirs and winter branchings.
    pub fn desk_benchmark(seed: u64) -> Self {
        Self {
            horizon: 364,
            branching: 2,
            branch_times: vec![75, 110, 150],
            post_hours: vec![4.0, 8.0, 12.0],
            demand: DemandProfile {
                base: 54_000.0,
                seasonal_amplitude: 0.22,
                peak_day: 140.0,
                post_factors: vec![1.15, 1.05, 0.9],
                weekend_factor: 0.9,
                branch_spread: 0.04,
            },
            inflow: InflowProfile {
                mean: vec![5_600.0, 190.0],
                seasonal_amplitude: 0.8,
                peak_day: 260.0,
                branch_spread: 0.25,
            },
            maintenance_depth: 0.3,
            difficulty: 0.0,
            persistence: 0.97,
            seed,
            scenarios: 120,
        }
    }

    pub fn num_posts(&self) -> usize {
        self.post_hours.len()
    }

    fn check(&self, units: &UnitSet) -> Result<(), ScenarioError> {
        let fail = |m: &str| Err(ScenarioError::Config(m.to_string()));
        if self.horizon < 1 {
            return fail("horizon must be >= 1");
        }
        if self.branching < 1 {
            return fail("branching must be >= 1");
        }
        if self.post_hours.is_empty()
            || self
                .post_hours
                .iter()
                .any(|h| !(h.is_finite() && *h >= 0.0))
        {
            return fail("post_hours must be nonempty and >= 0");
        }
        if self.demand.post_factors.len() != self.num_posts() {
            return fail("demand post_factors must have one entry per post");
        }
        if self.inflow.mean.len() != units.hydro.len() {
            return fail("inflow means must have one entry per reservoir");
        }
        if self
            .branch_times
            .iter()
            .any(|&t| t == 0 || t > self.horizon)
        {
            return fail("branch times must lie in 1..=horizon");
        }
        if !(0.0..=1.0).contains(&self.persistence)
            || !(0.0..=1.0).contains(&self.maintenance_depth)
        {
            return fail("persistence and maintenance_depth must lie in [0, 1]");
        }
        let spread_ok = |s: f64| s.is_finite() && (0.0..1.0).contains(&s);
        if !spread_ok(self.demand.branch_spread) || !spread_ok(self.inflow.branch_spread) {
            return fail("branch spreads must lie in [0, 1)");
        }
        Ok(())
    }

    fn season(day: usize, amplitude: f64, peak: f64) -> f64 {
        1.0 + amplitude * (2.0 * PI * (day as f64 - peak) / 365.0).cos()
    }

    /// Demand per post at relative level `shift`.
    fn demand_at(&self, day: usize, shift: f64) -> Vec<f64> {
        let d = &self.demand;
        let week = if day % 7 >= 5 { d.weekend_factor } else { 1.0 };
        let level = d.base
            * Self::season(day, d.seasonal_amplitude, d.peak_day)
            * week
            * (1.0 + 0.05 * self.difficulty)
            * (1.0 + shift);
        self.post_hours
            .iter()
            .zip(&d.post_factors)
            .map(|(h, f)| (level * f * h).max(0.0))
            .collect()
    }

    fn inflows_at(&self, day: usize, shift: f64) -> Vec<Vec<f64>> {
        let f = &self.inflow;
        let season = Self::season(day, f.seasonal_amplitude, f.peak_day).max(0.0);
        let scale = (1.0 - 0.25 * self.difficulty).max(0.0) * (1.0 + shift).max(0.0);
        f.mean
            .iter()
            .map(|m| {
                self.post_hours
                    .iter()
                    .map(|h| m * season * scale * h)
                    .collect()
            })
            .collect()
    }

    fn programmed(&self, day: usize, units: &UnitSet) -> Vec<f64> {
        // Maintenance in the low-demand half of the year, half the fleet.
        let low = (-(2.0 * PI * (day as f64 - self.demand.peak_day) / 365.0).cos()).max(0.0);
        (0..units.thermal.len())
            .map(|u| {
                if u % 2 == 1 {
                    1.0 - self.maintenance_depth * low
                } else {
                    1.0
                }
            })
            .collect()
    }
}

fn sibling_steps(branching: usize, spread: f64) -> Vec<f64> {
    if branching == 1 {
        return vec![0.0];
    }
    (0..branching)
        .map(|k| spread * (2.0 * k as f64 / (branching - 1) as f64 - 1.0))
        .collect()
}

/// Builds a tree and an independent scenario set from `cfg`.
///
/// Outputs are a pure function of `cfg` and `units`.
pub fn generate_synthetic(
    cfg: &SynthConfig,
    units: &UnitSet,
) -> Result<(ScenarioTree, ScenarioSet), ScenarioError> {
    cfg.check(units)?;
    let shape = TreeShape {
        num_posts: cfg.num_posts(),
        horizon: cfg.horizon,
        thermal_units: units.thermal.len(),
        hydro_units: units.hydro.len(),
    };
    let d_steps = sibling_steps(cfg.branching, cfg.demand.branch_spread);
    let i_steps = sibling_steps(cfg.branching, cfg.inflow.branch_spread);

    // Per node of the current layer: (id, demand shift, inflow shift).
    let mut layer: Vec<(i64, f64, f64)> = vec![(0, 0.0, 0.0)];
    let mut raw = Vec::new();
    let mut ranges = Vec::with_capacity(cfg.horizon + 1);
    let mut next_id = 1i64;
    let make = |id, father, t, pt, ds: f64, is: f64| RawNode {
        id,
        father,
        time_step: t,
        trans_prob: pt,
        durations: cfg.post_hours.clone(),
        demand: cfg.demand_at(t, ds),
        inflows: cfg.inflows_at(t, is),
        thermal_programmed: cfg.programmed(t, units),
        hydro_programmed: vec![1.0; units.hydro.len()],
        sigma: None,
    };
    raw.push(make(0, None, 0, 1.0, 0.0, 0.0));
    ranges.push(((0.0, 0.0), (0.0, 0.0)));
    for t in 1..=cfg.horizon {
        let branching = cfg.branch_times.contains(&t);
        let mut next = Vec::new();
        for &(father, ds, is) in &layer {
            if branching {
                let pt = 1.0 / cfg.branching as f64;
                for k in 0..cfg.branching {
                    let (nd, ni) = (ds + d_steps[k], is + i_steps[k]);
                    raw.push(make(next_id, Some(father), t, pt, nd, ni));
                    next.push((next_id, nd, ni));
                    next_id += 1;
                }
            } else {
                raw.push(make(next_id, Some(father), t, 1.0, ds, is));
                next.push((next_id, ds, is));
                next_id += 1;
            }
        }
        layer = next;
        let span = |f: fn(&(i64, f64, f64)) -> f64| {
            layer
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
        };
        ranges.push((span(|x| x.1), span(|x| x.2)));
    }
    let tree = ScenarioTree::build(shape, raw)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scenarios = (0..cfg.scenarios)
        .map(|_| draw_scenario(cfg, units, &ranges, &mut rng))
        .collect();
    let set = ScenarioSet {
        num_posts: cfg.num_posts(),
        thermal_units: units.thermal.len(),
        hydro_units: units.hydro.len(),
        scenarios,
    };
    set.check()?;
    Ok((tree, set))
}

type Range = (f64, f64);

fn step_position(w: f64, rho: f64, rng: &mut ChaCha8Rng) -> f64 {
    let noise = (rng.random::<f64>() - 0.5) * (1.0 - rho) * 2.0;
    (rho * w + (1.0 - rho) * 0.5 + noise).clamp(0.0, 1.0)
}

fn draw_scenario(
    cfg: &SynthConfig,
    units: &UnitSet,
    ranges: &[(Range, Range)],
    rng: &mut ChaCha8Rng,
) -> Scenario {
    let mut wd = rng.random::<f64>();
    let mut wi = rng.random::<f64>();
    let mut rates: Vec<f64> = vec![1.0; units.thermal.len()];
    let mut period: Vec<Option<usize>> = vec![None; units.thermal.len()];
    let mut days = Vec::with_capacity(cfg.horizon);
    for t in 0..cfg.horizon {
        let ((dlo, dhi), (ilo, ihi)) = ranges[t];
        let demand = cfg.demand_at(t, dlo + wd * (dhi - dlo));
        let inflows = cfg.inflows_at(t, ilo + wi * (ihi - ilo));
        for (u, unit) in units.thermal.iter().enumerate() {
            let k = unit.model.period_of(t);
            if period[u] != Some(k) {
                let alpha = availability_probability(&unit.model, k);
                rates[u] = sample_unavailability_rate(unit, alpha, rng);
                period[u] = Some(k);
            }
        }
        days.push(ScenarioDay {
            demand,
            inflows,
            availability: rates.clone(),
        });
        wd = step_position(wd, cfg.persistence, rng);
        wi = step_position(wi, cfg.persistence, rng);
    }
    Scenario { days }
}
