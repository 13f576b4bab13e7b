//! Ready-made instances: random small trees for cross-checks and the desk
//! benchmark fleet.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::fmt;
use std::str::FromStr;

use crate::scenario::{RawNode, ScenarioTree, SynthConfig, TreeShape};
use crate::units::{
    AvailabilityModel, EjpContract, HydroUnit, PiecewiseLinear, ThermalUnit, UnitSet,
};

/// Random tree of at most `2^levels − 1` nodes with `posts` posts per day.
///
/// Each node has one or two sons; demand lies in 20..120 MWh per post and
/// inflows in 0..15 MWh per post.
pub fn random_tree(
    seed: u64,
    levels: usize,
    posts: usize,
    thermal: usize,
    hydro: usize,
) -> ScenarioTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<RawNode> = Vec::new();
    let mut layer = vec![0i64];
    let mut next_id = 1;
    let mk = |id, father, t, pt, rng: &mut ChaCha8Rng| RawNode {
        id,
        father,
        time_step: t,
        trans_prob: pt,
        durations: vec![24.0 / posts as f64; posts],
        demand: (0..posts).map(|_| rng.random_range(20.0..120.0)).collect(),
        inflows: (0..hydro)
            .map(|_| (0..posts).map(|_| rng.random_range(0.0..15.0)).collect())
            .collect(),
        thermal_programmed: (0..thermal).map(|_| rng.random_range(0.6..1.0)).collect(),
        hydro_programmed: vec![1.0; hydro],
        sigma: None,
    };
    nodes.push(mk(0, None, 0, 1.0, &mut rng));
    for t in 1..levels.max(1) {
        let mut next = Vec::new();
        for &f in &layer {
            let sons = rng.random_range(1..=2usize);
            let p0 = if sons == 1 {
                1.0
            } else {
                rng.random_range(0.2..0.8)
            };
            for k in 0..sons {
                let pt = if k == 0 { p0 } else { 1.0 - p0 };
                nodes.push(mk(next_id, Some(f), t, pt, &mut rng));
                next.push(next_id);
                next_id += 1;
            }
        }
        layer = next;
    }
    let shape = TreeShape {
        num_posts: posts,
        horizon: levels.max(1) - 1,
        thermal_units: thermal,
        hydro_units: hydro,
    };
    ScenarioTree::build(shape, nodes).expect("generated tree is well formed")
}

/// Random fleet; hydro stocks lie in `[0, 200]` MWh with a linear terminal
/// value, the optional EJP contract has 2 days.
pub fn random_units(seed: u64, thermal_n: usize, hydro_n: usize, ejp: bool) -> UnitSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    UnitSet {
        thermal: (0..thermal_n)
            .map(|i| {
                let cost = rng.random_range(5.0..60.0);
                let p_max = rng.random_range(1.0..4.0);
                let groups = rng.random_range(1..20usize);
                let alpha = rng.random_range(0.6..0.98);
                ThermalUnit {
                    name: format!("t{i}"),
                    cost,
                    p_max,
                    groups,
                    availability: alpha,
                    model: AvailabilityModel::stationary(alpha, 0.0, 7),
                }
            })
            .collect(),
        hydro: (0..hydro_n)
            .map(|i| {
                let stock_init = rng.random_range(20.0..150.0);
                let slope = rng.random_range(5.0..40.0);
                HydroUnit {
                    name: format!("h{i}"),
                    stock_min: 0.0,
                    stock_max: 200.0,
                    stock_init,
                    p_max: 2.0,
                    terminal_value: PiecewiseLinear::new(vec![(0.0, 0.0), (200.0, 200.0 * slope)])
                        .expect("two increasing points"),
                }
            })
            .collect(),
        ejp: if ejp {
            vec![EjpContract {
                name: "ejp".into(),
                days: 2,
                power: 0.5,
                terminal_value: vec![0.0, 150.0, 250.0],
            }]
        } else {
            vec![]
        },
    }
}

/// A random instance of at most 31 nodes with 1 to 3 thermal units, one
/// reservoir and no EJP contract.
pub fn random_small_instance(seed: u64) -> (ScenarioTree, UnitSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let levels = rng.random_range(2..=5usize);
    let posts = rng.random_range(1..=3usize);
    let nt = rng.random_range(1..=3usize);
    (
        random_tree(seed, levels, posts, nt, 1),
        random_units(seed, nt, 1, false),
    )
}

/// The desk benchmark fleet: 11 thermal units from 8 to 130 per MWh, a
/// large seasonal reservoir and a small one about 30 times smaller, and a
/// 22-day EJP contract of 2467 MW.
pub fn desk_benchmark_units() -> UnitSet {
    // (cost, p_max MW, groups, availability)
    let fleet: [(f64, f64, usize, f64); 11] = [
        (8.0, 16_800.0, 36, 0.82),
        (9.5, 12_600.0, 30, 0.80),
        (11.0, 11_200.0, 30, 0.80),
        (16.0, 7_280.0, 24, 0.85),
        (22.0, 6_300.0, 27, 0.86),
        (30.0, 5_600.0, 24, 0.88),
        (41.0, 4_900.0, 30, 0.90),
        (55.0, 4_200.0, 36, 0.90),
        (72.0, 3_500.0, 30, 0.92),
        (95.0, 2_800.0, 24, 0.93),
        (130.0, 2_520.0, 36, 0.95),
    ];
    let thermal = fleet
        .iter()
        .enumerate()
        .map(|(i, &(cost, p_max, groups, alpha))| ThermalUnit {
            name: format!("thermal{}", i + 1),
            cost,
            p_max,
            groups,
            availability: alpha,
            model: AvailabilityModel::stationary(alpha, 0.6, 7),
        })
        .collect();
    let big = 12.0e6;
    let small = 0.4e6;
    let hydro = vec![
        HydroUnit {
            name: "lake".into(),
            stock_min: 0.0,
            stock_max: big,
            stock_init: 0.6 * big,
            p_max: 14_000.0,
            terminal_value: PiecewiseLinear::new(vec![
                (0.0, 0.0),
                (0.5 * big, 0.5 * big * 40.0),
                (big, 0.5 * big * 40.0 + 0.5 * big * 20.0),
            ])
            .expect("increasing stocks"),
        },
        HydroUnit {
            name: "pondage".into(),
            stock_min: 0.0,
            stock_max: small,
            stock_init: 0.5 * small,
            p_max: 1_500.0,
            terminal_value: PiecewiseLinear::new(vec![(0.0, 0.0), (small, small * 25.0)])
                .expect("increasing stocks"),
        },
    ];
    let power = 2467.0;
    let day_energy = power * 24.0;
    let ejp = vec![EjpContract {
        name: "ejp".into(),
        days: 22,
        power,
        terminal_value: (0..=22)
            .map(|s| s as f64 * day_energy * 60.0 * (1.0 - s as f64 / 60.0))
            .collect(),
    }];
    UnitSet {
        thermal,
        hydro,
        ejp,
    }
}

/// Fleet matching `SynthConfig::tiny`: three thermal units, one reservoir
/// and a two-day EJP contract.
pub fn tiny_units() -> UnitSet {
    let thermal = [
        (10.0, 60.0, 4, 0.9),
        (20.0, 40.0, 2, 0.85),
        (40.0, 30.0, 3, 0.95),
    ]
    .iter()
    .enumerate()
    .map(|(i, &(cost, p_max, groups, alpha))| ThermalUnit {
        name: format!("t{}", i + 1),
        cost,
        p_max,
        groups,
        availability: alpha,
        model: AvailabilityModel::stationary(alpha, 0.5, 2),
    })
    .collect();
    let hydro = vec![HydroUnit {
        name: "lake".into(),
        stock_min: 0.0,
        stock_max: 2000.0,
        stock_init: 1000.0,
        p_max: 40.0,
        terminal_value: PiecewiseLinear::new(vec![(0.0, 0.0), (2000.0, 30_000.0)])
            .expect("increasing stocks"),
    }];
    let ejp = vec![EjpContract {
        name: "ejp".into(),
        days: 2,
        power: 10.0,
        terminal_value: vec![0.0, 3000.0, 5000.0],
    }];
    UnitSet {
        thermal,
        hydro,
        ejp,
    }
}

/// Named synthetic instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Tiny,
    Desk,
    PaperLike,
}

impl Preset {
    pub fn synth(self, seed: u64) -> SynthConfig {
        match self {
            Preset::Tiny => SynthConfig::tiny(seed),
            Preset::Desk => SynthConfig::desk_benchmark(seed),
            Preset::PaperLike => SynthConfig::paper_like(seed),
        }
    }

    pub fn units(self) -> UnitSet {
        match self {
            Preset::Tiny => tiny_units(),
            Preset::Desk | Preset::PaperLike => desk_benchmark_units(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Tiny => "tiny",
            Preset::Desk => "desk",
            Preset::PaperLike => "paper-like",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "desk" => Ok(Preset::Desk),
            "paper-like" => Ok(Preset::PaperLike),
            _ => Err(format!(
                "unknown preset `{s}` (expected tiny, desk or paper-like)"
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_instances_respect_limits() {
        for seed in 0..50 {
            let (tree, units) = random_small_instance(seed);
            assert!(tree.len() <= 31);
            assert!((1..=3).contains(&units.thermal.len()));
            assert_eq!(units.hydro.len(), 1);
            assert!(units.ejp.is_empty());
            units.validate().unwrap();
        }
    }

    #[test]
    fn benchmark_fleet_is_valid() {
        let u = desk_benchmark_units();
        u.validate().unwrap();
        assert_eq!(u.thermal.len(), 11);
        tiny_units().validate().unwrap();
        let ratio = u.hydro[0].stock_max / u.hydro[1].stock_max;
        assert!((25.0..=35.0).contains(&ratio));
        assert_eq!(u.ejp[0].days, 22);
    }
}
