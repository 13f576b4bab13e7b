use super::SimulateError;

/// Order statistic of rank `⌈q N⌉` (1-based).
pub fn empirical_quantile(sample: &[f64], q: f64) -> Result<f64, SimulateError> {
    if sample.is_empty() {
        return Err(SimulateError::EmptySample);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(SimulateError::Level(q));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    // Guard against q·N landing a hair above an integer.
    let x = q * n as f64;
    let rank = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    } as usize;
    Ok(s[rank.clamp(1, n) - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub label: String,
    pub scenarios: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    /// Quantile of order 0.99.
    pub var1: f64,
    /// Quantile of order 0.95.
    pub var5: f64,
    pub min: f64,
    pub max: f64,
}

impl CostReport {
    pub fn new(label: &str, costs: &[f64]) -> Result<Self, SimulateError> {
        if costs.is_empty() {
            return Err(SimulateError::EmptySample);
        }
        let n = costs.len() as f64;
        let mean = costs.iter().sum::<f64>() / n;
        let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
        Ok(Self {
            label: label.to_string(),
            scenarios: costs.len(),
            mean,
            std_dev: var.sqrt(),
            var1: empirical_quantile(costs, 0.99)?,
            var5: empirical_quantile(costs, 0.95)?,
            min: costs.iter().copied().fold(f64::INFINITY, f64::min),
            max: costs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirStats {
    /// Mean end-of-day stock over scenarios.
    pub mean_trajectory: Vec<f64>,
    /// The X values, in weeks.
    pub weeks: Vec<usize>,
    /// Scenarios with at least X weeks at high level.
    pub high_counts: Vec<usize>,
    /// Scenarios with at least X weeks at low level.
    pub low_counts: Vec<usize>,
}

/// Whole weeks spent in runs of consecutive days whose every post
/// satisfies `cond`: `Σ_runs ⌊run / week⌋`.
fn weeks_at(path: &[f64], posts: usize, week: usize, cond: impl Fn(f64) -> bool) -> usize {
    let mut total = 0;
    let mut run = 0;
    for day in path.chunks(posts) {
        if day.iter().all(|&x| cond(x)) {
            run += 1;
        } else {
            total += run / week;
            run = 0;
        }
    }
    total + run / week
}

/// Week counts at high level (`x ≥ x₀ − 0.05 x_max`) and low level
/// (`x ≤ 0.05 x_max`) for one reservoir.
///
/// `paths[s]` holds the stock after every post of scenario `s`.
pub fn reservoir_week_stats(
    paths: &[Vec<f64>],
    posts: usize,
    x_max: f64,
    x0: f64,
    week: usize,
    xs: &[usize],
) -> ReservoirStats {
    let posts = posts.max(1);
    let week = week.max(1);
    let days = paths.iter().map(|p| p.len() / posts).max().unwrap_or(0);
    let mut mean_trajectory = vec![0.0; days];
    for p in paths {
        for (d, m) in mean_trajectory.iter_mut().enumerate() {
            *m += p[(d + 1) * posts - 1];
        }
    }
    if !paths.is_empty() {
        mean_trajectory
            .iter_mut()
            .for_each(|m| *m /= paths.len() as f64);
    }
    let high: Vec<usize> = paths
        .iter()
        .map(|p| weeks_at(p, posts, week, |x| x >= x0 - 0.05 * x_max))
        .collect();
    let low: Vec<usize> = paths
        .iter()
        .map(|p| weeks_at(p, posts, week, |x| x <= 0.05 * x_max))
        .collect();
    let count = |w: &[usize], x: usize| w.iter().filter(|&&v| v >= x).count();
    ReservoirStats {
        mean_trajectory,
        weeks: xs.to_vec(),
        high_counts: xs.iter().map(|&x| count(&high, x)).collect(),
        low_counts: xs.iter().map(|&x| count(&low, x)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantile_examples() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(empirical_quantile(&s, 0.95).unwrap(), 95.0);
        assert_eq!(empirical_quantile(&s, 0.99).unwrap(), 99.0);
        assert_eq!(empirical_quantile(&s, 0.951).unwrap(), 96.0);
        for q in [0.01, 0.5, 0.99] {
            assert_eq!(empirical_quantile(&[7.0], q).unwrap(), 7.0);
        }
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&s, 1.0).is_err());
        assert!(empirical_quantile(&s, 0.0).is_err());
    }

    /// Independent rank rule: smallest element with at least `q N`
    /// elements less than or equal to it.
    fn oracle(s: &[f64], q: f64) -> f64 {
        let n = s.len() as f64;
        let mut best = f64::INFINITY;
        for &c in s {
            let le = s.iter().filter(|&&v| v <= c).count() as f64;
            if le >= q * n - 1e-9 && c < best {
                best = c;
            }
        }
        best
    }

    #[test]
    fn quantiles_match_rank_oracle_on_456_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(456);
        let s: Vec<f64> = (0..456).map(|_| rng.random_range(4.0e8..6.0e8)).collect();
        for q in [0.95, 0.99, 0.5, 0.1] {
            assert_eq!(empirical_quantile(&s, q).unwrap(), oracle(&s, q));
        }
        let r = CostReport::new("x", &s).unwrap();
        assert!(r.min <= r.var5 && r.var5 <= r.var1 && r.var1 <= r.max);
    }

    #[test]
    fn report_examples() {
        let r = CostReport::new("one", &[5.0]).unwrap();
        assert_eq!((r.mean, r.std_dev), (5.0, 0.0));
        let r = CostReport::new("flat", &[3.0; 40]).unwrap();
        assert_eq!((r.var1, r.var5), (3.0, 3.0));
        let r = CostReport::new("two", &[1.0, 3.0]).unwrap();
        assert_eq!((r.mean, r.std_dev), (2.0, 1.0));
    }

    #[test]
    fn week_stats_examples() {
        let full = vec![vec![10.0; 35 * 2]; 4];
        let s = reservoir_week_stats(&full, 2, 10.0, 10.0, 7, &[1, 5, 6]);
        assert_eq!(s.high_counts, vec![4, 4, 0]);
        assert_eq!(s.low_counts, vec![0, 0, 0]);
        assert_eq!(s.mean_trajectory, vec![10.0; 35]);
        let empty = vec![vec![0.0; 14]; 3];
        let s = reservoir_week_stats(&empty, 1, 10.0, 5.0, 7, &[1, 2, 3]);
        assert_eq!(s.low_counts, vec![3, 3, 0]);
    }

    #[test]
    fn week_stats_hand_tally() {
        // One post per day, x_max 100, x0 80: high ≥ 75, low ≤ 5.
        let mut a = vec![50.0; 30];
        a[0..7].fill(90.0); // one high week
        a[10..24].fill(2.0); // two low weeks
        let mut b = vec![50.0; 30];
        b[0..6].fill(1.0); // 6 low days: no week
        b[7..13].fill(1.0);
        b[15..29].fill(80.0); // two high weeks
        let mut c = vec![3.0; 30]; // four low weeks
        c[2] = 4.0;
        c[29] = 100.0;
        let s = reservoir_week_stats(&[a, b, c], 1, 100.0, 80.0, 7, &[1, 2, 3, 4, 5]);
        assert_eq!(s.high_counts, vec![2, 1, 0, 0, 0]);
        assert_eq!(s.low_counts, vec![2, 2, 1, 1, 0]);
    }

    #[test]
    fn low_post_breaks_a_day() {
        // Two posts per day: the condition must hold at both.
        let mut p = vec![1.0; 28];
        p[9] = 50.0;
        p[19] = 50.0;
        let s = reservoir_week_stats(&[p], 2, 100.0, 100.0, 7, &[1]);
        assert_eq!(s.low_counts, vec![0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn counts_nonincreasing(seed in 0u64..u64::MAX) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let paths: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..120).map(|_| if rng.random_bool(0.8) { 1.0 } else { 95.0 }).collect())
                .collect();
            let xs: Vec<usize> = (1..10).collect();
            let s = reservoir_week_stats(&paths, 2, 100.0, 100.0, 7, &xs);
            prop_assert!(s.low_counts.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(s.high_counts.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(s.low_counts.iter().all(|&c| c <= 20));
        }

        #[test]
        fn quantile_is_a_sample_element(v in proptest::collection::vec(-1e6f64..1e6, 1..300), q in 0.001f64..0.999) {
            let x = empirical_quantile(&v, q).unwrap();
            prop_assert_eq!(x, oracle(&v, q));
        }
    }
}
