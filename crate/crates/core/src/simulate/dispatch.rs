//! Merit-order dispatch of one scenario using water values as fuel costs.

use super::bellman::{BellmanTable, StorageRef};
use super::SimulateError;
use crate::scenario::{Scenario, ScenarioTree};
use crate::units::UnitSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    /// Unserved energy price as a multiple of the costliest thermal unit.
    pub unserved_multiplier: f64,
    /// Deduct terminal stock values from scenario costs.
    pub terminal_credits: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            unserved_multiplier: 10.0,
            terminal_credits: true,
        }
    }
}

/// Day-level data the scenarios do not carry: post durations and
/// programmed availability rates, averaged over the tree nodes of each day.
#[derive(Debug, Clone, PartialEq)]
pub struct Calendar {
    pub durations: Vec<Vec<f64>>,
    pub thermal_programmed: Vec<Vec<f64>>,
    pub hydro_programmed: Vec<Vec<f64>>,
}

impl Calendar {
    pub fn from_tree(tree: &ScenarioTree) -> Self {
        let l = tree.num_posts();
        let shape = tree.shape();
        let days = 0..=tree.horizon();
        Self {
            durations: days
                .clone()
                .map(|t| {
                    (0..l)
                        .map(|p| tree.expected_at(t, |n| n.durations[p]))
                        .collect()
                })
                .collect(),
            thermal_programmed: days
                .clone()
                .map(|t| {
                    (0..shape.thermal_units)
                        .map(|u| tree.expected_at(t, |n| n.thermal_programmed[u]))
                        .collect()
                })
                .collect(),
            hydro_programmed: days
                .map(|t| {
                    (0..shape.hydro_units)
                        .map(|r| tree.expected_at(t, |n| n.hydro_programmed[r]))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn days(&self) -> usize {
        self.durations.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    /// Fuel and unserved costs, minus terminal credits when enabled.
    pub cost: f64,
    pub fuel_cost: f64,
    pub unserved_cost: f64,
    pub terminal_credit: f64,
    /// Cells are indexed `day * posts + post`.
    pub demand: Vec<f64>,
    /// `thermal[unit][cell]`, MWh.
    pub thermal: Vec<Vec<f64>>,
    /// `discharge[reservoir][cell]`, MWh.
    pub discharge: Vec<Vec<f64>>,
    pub spill: Vec<Vec<f64>>,
    /// `stock[reservoir][cell]` after the post.
    pub stock: Vec<Vec<f64>>,
    /// Curtailed energy per contract and cell.
    pub ejp: Vec<Vec<f64>>,
    /// Days left per contract at the end of each day.
    pub ejp_stock: Vec<Vec<usize>>,
    pub unserved: Vec<f64>,
}

impl DispatchResult {
    pub fn final_stocks(&self) -> Vec<f64> {
        self.stock
            .iter()
            .map(|s| s.last().copied().unwrap_or(f64::NAN))
            .collect()
    }

    /// Largest `|Σ generation + unserved − demand|` over cells.
    pub fn balance_residual(&self) -> f64 {
        (0..self.demand.len())
            .map(|c| {
                let g: f64 = self.thermal.iter().map(|u| u[c]).sum::<f64>()
                    + self.discharge.iter().map(|u| u[c]).sum::<f64>()
                    + self.ejp.iter().map(|u| u[c]).sum::<f64>()
                    + self.unserved[c];
                (g - self.demand[c]).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy)]
enum Source {
    Thermal(usize),
    Hydro(usize),
    Unserved,
}

struct Offer {
    price: f64,
    rank: usize,
    cap: f64,
    source: Source,
}

struct DayOutcome {
    cost: f64,
    unserved_cost: f64,
    thermal: Vec<Vec<f64>>,
    discharge: Vec<Vec<f64>>,
    spill: Vec<Vec<f64>>,
    stock: Vec<Vec<f64>>,
    unserved: Vec<f64>,
    ejp: Vec<f64>,
    end: Vec<f64>,
}

struct Context<'a> {
    units: &'a UnitSet,
    calendar: &'a Calendar,
    hydro_tables: Vec<&'a BellmanTable>,
    penalty: f64,
}

impl Context<'_> {
    /// Blocks `(capacity, price)` of the water above `xmin`, from the top
    /// of the reservoir down; prices never decrease along the way.
    fn water_blocks(&self, r: usize, t_next: usize, x: f64) -> Vec<(f64, f64)> {
        let u = &self.units.hydro[r];
        let mut blocks = Vec::new();
        if x > u.stock_max {
            blocks.push((x - u.stock_max, 0.0));
        }
        let top = x.min(u.stock_max);
        let mut floor_price = 0.0f64;
        for &(lo, hi, slope) in self.hydro_tables[r].segments(t_next).iter().rev() {
            if lo >= top {
                continue;
            }
            let len = top.min(hi) - lo;
            if len > 0.0 {
                floor_price = floor_price.max(slope);
                blocks.push((len, floor_price));
            }
        }
        blocks
    }

    fn day(&self, day: usize, scenario: &Scenario, start: &[f64], curtail: &[f64]) -> DayOutcome {
        let sd = &scenario.days[day];
        let l = sd.demand.len();
        let nt = self.units.thermal.len();
        let nh = self.units.hydro.len();
        let mut x = start.to_vec();
        let mut out = DayOutcome {
            cost: 0.0,
            unserved_cost: 0.0,
            thermal: vec![vec![0.0; l]; nt],
            discharge: vec![vec![0.0; l]; nh],
            spill: vec![vec![0.0; l]; nh],
            stock: vec![vec![0.0; l]; nh],
            unserved: vec![0.0; l],
            ejp: vec![0.0; l],
            end: Vec::new(),
        };
        for p in 0..l {
            let hours = self.calendar.durations[day][p];
            let mut rem = sd.demand[p];
            let e = curtail[p].min(rem);
            out.ejp[p] = e;
            rem -= e;
            for r in 0..nh {
                x[r] += sd.inflows[r][p];
            }
            let mut offers = Vec::new();
            for (k, u) in self.units.thermal.iter().enumerate() {
                let cap =
                    sd.availability[k] * self.calendar.thermal_programmed[day][k] * u.p_max * hours;
                offers.push(Offer {
                    price: u.cost,
                    rank: offers.len(),
                    cap,
                    source: Source::Thermal(k),
                });
            }
            let mut hydro_cap = Vec::with_capacity(nh);
            for (r, u) in self.units.hydro.iter().enumerate() {
                hydro_cap.push(u.discharge_bound(self.calendar.hydro_programmed[day][r], hours));
                for (cap, price) in self.water_blocks(r, day + 1, x[r]) {
                    offers.push(Offer {
                        price,
                        rank: offers.len(),
                        cap,
                        source: Source::Hydro(r),
                    });
                }
            }
            offers.push(Offer {
                price: self.penalty,
                rank: offers.len(),
                cap: f64::INFINITY,
                source: Source::Unserved,
            });
            offers.sort_by(|a, b| a.price.total_cmp(&b.price).then(a.rank.cmp(&b.rank)));
            for o in &offers {
                if rem <= 0.0 {
                    break;
                }
                match o.source {
                    Source::Thermal(k) => {
                        let take = o.cap.min(rem);
                        out.thermal[k][p] += take;
                        out.cost += take * o.price;
                        rem -= take;
                    }
                    Source::Hydro(r) => {
                        let take = o.cap.min(rem).min(hydro_cap[r]);
                        out.discharge[r][p] += take;
                        hydro_cap[r] -= take;
                        x[r] -= take;
                        rem -= take;
                    }
                    Source::Unserved => {
                        out.unserved[p] = rem;
                        out.unserved_cost += rem * o.price;
                        out.cost += rem * o.price;
                        rem = 0.0;
                    }
                }
            }
            for r in 0..nh {
                let u = &self.units.hydro[r];
                if x[r] > u.stock_max {
                    out.spill[r][p] = x[r] - u.stock_max;
                    x[r] = u.stock_max;
                }
                x[r] = x[r].max(u.stock_min);
                out.stock[r][p] = x[r];
            }
        }
        out.end = x;
        out
    }
}

fn find_table(tables: &[BellmanTable], r: StorageRef) -> Result<&BellmanTable, SimulateError> {
    tables
        .iter()
        .find(|t| t.unit == r)
        .ok_or_else(|| SimulateError::Tables(format!("missing table for {r:?}")))
}

/// Dispatches one scenario day by day and post by post.
///
/// Each post serves its demand by merit order: thermal units at their cost
/// within the realized availability, reservoirs at the slopes of their
/// next-day Bellman values (water above `x_max` at zero), then unserved
/// energy at the penalty price. An EJP day is called when the dispatch
/// saving exceeds the drop of the contract's next-day value.
pub fn simulate_scenario(
    scenario: &Scenario,
    tables: &[BellmanTable],
    units: &UnitSet,
    calendar: &Calendar,
    options: &SimulationOptions,
) -> Result<DispatchResult, SimulateError> {
    let days = scenario.days.len();
    let hydro_tables = (0..units.hydro.len())
        .map(|r| find_table(tables, StorageRef::Hydro(r)))
        .collect::<Result<Vec<_>, _>>()?;
    let ejp_tables = (0..units.ejp.len())
        .map(|e| find_table(tables, StorageRef::Ejp(e)))
        .collect::<Result<Vec<_>, _>>()?;
    if hydro_tables
        .iter()
        .chain(&ejp_tables)
        .any(|t| t.horizon() < days)
        || calendar.days() < days
    {
        return Err(SimulateError::Tables(format!(
            "tables do not cover {days} days"
        )));
    }
    let l = scenario.days.first().map_or(0, |d| d.demand.len());
    let ctx = Context {
        units,
        calendar,
        hydro_tables,
        penalty: options.unserved_multiplier * units.max_thermal_cost(),
    };
    let nt = units.thermal.len();
    let nh = units.hydro.len();
    let ne = units.ejp.len();
    let cells = days * l;
    let mut res = DispatchResult {
        cost: 0.0,
        fuel_cost: 0.0,
        unserved_cost: 0.0,
        terminal_credit: 0.0,
        demand: Vec::with_capacity(cells),
        thermal: vec![Vec::with_capacity(cells); nt],
        discharge: vec![Vec::with_capacity(cells); nh],
        spill: vec![Vec::with_capacity(cells); nh],
        stock: vec![Vec::with_capacity(cells); nh],
        ejp: vec![Vec::with_capacity(cells); ne],
        ejp_stock: vec![Vec::with_capacity(days); ne],
        unserved: Vec::with_capacity(cells),
    };
    let mut x: Vec<f64> = units.hydro.iter().map(|u| u.stock_init).collect();
    let mut s: Vec<usize> = units.ejp.iter().map(|c| c.days).collect();
    let water = |end: &[f64], t: usize| -> f64 {
        end.iter()
            .zip(&ctx.hydro_tables)
            .map(|(&xe, tab)| tab.value(t, xe))
            .sum()
    };

    for day in 0..days {
        let hours = &calendar.durations[day];
        let mut curtail = vec![0.0; l];
        let mut called = vec![false; ne];
        let mut outcome = ctx.day(day, scenario, &x, &curtail);
        for (e, c) in units.ejp.iter().enumerate() {
            if s[e] == 0 {
                continue;
            }
            let mut trial = curtail.clone();
            for p in 0..l {
                trial[p] += c.power * hours[p];
            }
            let with = ctx.day(day, scenario, &x, &trial);
            let saving = (outcome.cost - water(&outcome.end, day + 1))
                - (with.cost - water(&with.end, day + 1));
            let drop = ejp_tables[e].value(day + 1, s[e] as f64)
                - ejp_tables[e].value(day + 1, (s[e] - 1) as f64);
            if saving > drop {
                called[e] = true;
                curtail = trial;
                outcome = with;
            }
        }
        // Attribute curtailed energy to contracts in order.
        let mut left = outcome.ejp.clone();
        for (e, c) in units.ejp.iter().enumerate() {
            for p in 0..l {
                let v = if called[e] {
                    (c.power * hours[p]).min(left[p])
                } else {
                    0.0
                };
                left[p] -= v;
                res.ejp[e].push(v);
            }
            if called[e] {
                s[e] -= 1;
            }
            res.ejp_stock[e].push(s[e]);
        }
        let sd = &scenario.days[day];
        res.demand.extend_from_slice(&sd.demand);
        for k in 0..nt {
            res.thermal[k].extend_from_slice(&outcome.thermal[k]);
        }
        for r in 0..nh {
            res.discharge[r].extend_from_slice(&outcome.discharge[r]);
            res.spill[r].extend_from_slice(&outcome.spill[r]);
            res.stock[r].extend_from_slice(&outcome.stock[r]);
        }
        res.unserved.extend_from_slice(&outcome.unserved);
        res.fuel_cost += outcome.cost - outcome.unserved_cost;
        res.unserved_cost += outcome.unserved_cost;
        x = outcome.end;
    }
    if options.terminal_credits {
        res.terminal_credit = units
            .hydro
            .iter()
            .zip(&x)
            .map(|(u, &xe)| u.terminal_value.eval(xe))
            .sum::<f64>()
            + units
                .ejp
                .iter()
                .zip(&s)
                .map(|(c, &se)| c.terminal_value[se])
                .sum::<f64>();
    }
    res.cost = res.fuel_cost + res.unserved_cost - res.terminal_credit;
    Ok(res)
}
