use std::fmt;

use super::{ScenarioTree, PROB_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// `Σ_{τ(n)=t} π_n = 1`.
    TimeStepProbability,
    /// `Σ_{m∈S(n)} π_T(m) = 1`.
    SonTransitions,
    /// `π_n` and `π_T(n)` in `[0, 1]`.
    ProbabilityRange,
    DurationNonNegative,
    DemandNonNegative,
    InflowNonNegative,
    RateRange,
    SigmaNonNegative,
}

impl Rule {
    fn text(self) -> &'static str {
        match self {
            Rule::TimeStepProbability => "time-step probability sum ≠ 1",
            Rule::SonTransitions => "transition probabilities of sons sum ≠ 1",
            Rule::ProbabilityRange => "probability outside [0, 1]",
            Rule::DurationNonNegative => "duration ≥ 0",
            Rule::DemandNonNegative => "demand ≥ 0",
            Rule::InflowNonNegative => "inflow ≥ 0",
            Rule::RateRange => "programmed rate in [0, 1]",
            Rule::SigmaNonNegative => "sigma ≥ 0",
        }
    }
}

/// One broken invariant. `node` is the file id, `time_step` is set for
/// per-time-step rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: Option<i64>,
    pub time_step: Option<usize>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.node, self.time_step) {
            (Some(n), _) => write!(f, "node {n}: {} ({})", self.rule.text(), self.detail),
            (None, Some(t)) => write!(f, "time step {t}: {} ({})", self.rule.text(), self.detail),
            (None, None) => write!(f, "{} ({})", self.rule.text(), self.detail),
        }
    }
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

/// Lists every numeric invariant the tree breaks; empty iff it is valid.
pub fn validate_tree(tree: &ScenarioTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |node: Option<i64>, time_step: Option<usize>, rule: Rule, detail: String| {
        out.push(Violation {
            node,
            time_step,
            rule,
            detail,
        })
    };

    for t in 0..=tree.horizon() {
        let idx = tree.nodes_at(t);
        let s: f64 = idx.iter().map(|&i| tree.node(i).prob).sum();
        if !((s - 1.0).abs() <= PROB_TOL) {
            let node = if idx.len() == 1 {
                Some(tree.node(idx[0]).id)
            } else {
                None
            };
            push(
                node,
                Some(t),
                Rule::TimeStepProbability,
                format!("sum is {s}"),
            );
        }
    }

    for n in tree.nodes() {
        let id = Some(n.id);
        if !(0.0..=1.0).contains(&n.trans_prob) || !(0.0..=1.0).contains(&n.prob) {
            push(
                id,
                None,
                Rule::ProbabilityRange,
                format!("π_T = {}, π = {}", n.trans_prob, n.prob),
            );
        }
        if !n.is_leaf() {
            let s: f64 = n.sons.iter().map(|&c| tree.node(c).trans_prob).sum();
            if !((s - 1.0).abs() <= PROB_TOL) {
                push(id, None, Rule::SonTransitions, format!("sum is {s}"));
            }
        }
        if let Some(p) = n.durations.iter().position(|&v| !finite_nonneg(v)) {
            push(
                id,
                None,
                Rule::DurationNonNegative,
                format!("post {p}: {}", n.durations[p]),
            );
        }
        if let Some(p) = n.demand.iter().position(|&v| !finite_nonneg(v)) {
            push(
                id,
                None,
                Rule::DemandNonNegative,
                format!("post {p}: {}", n.demand[p]),
            );
        }
        for (r, row) in n.inflows.iter().enumerate() {
            if let Some(p) = row.iter().position(|&v| !finite_nonneg(v)) {
                push(
                    id,
                    None,
                    Rule::InflowNonNegative,
                    format!("reservoir {r}, post {p}: {}", row[p]),
                );
            }
        }
        let rates = n.thermal_programmed.iter().chain(&n.hydro_programmed);
        if let Some(bad) = rates.copied().find(|r| !(0.0..=1.0).contains(r)) {
            push(id, None, Rule::RateRange, format!("rate {bad}"));
        }
        if let Some(sigma) = &n.sigma {
            if let Some(p) = sigma.iter().position(|&v| !finite_nonneg(v)) {
                push(
                    id,
                    None,
                    Rule::SigmaNonNegative,
                    format!("post {p}: {}", sigma[p]),
                );
            }
        }
    }
    out
}
