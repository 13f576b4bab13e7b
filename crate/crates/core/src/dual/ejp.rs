use crate::scenario::ScenarioTree;
use crate::units::EjpContract;

#[derive(Debug, Clone, PartialEq)]
pub struct EjpResult {
    pub value: f64,
    /// `t_n ∈ {0, 1}` per node index.
    pub days: Vec<u8>,
    /// Days left at the end of each node.
    pub stock: Vec<usize>,
    /// Curtailed energy `t_n P_J d` per offset.
    pub production: Vec<f64>,
}

/// Exact partial dual of an EJP contract by dynamic programming over
/// `(node, days left)`.
///
/// `W_n(s) = max_{t ∈ {0,1}, t ≤ s} t r_n + C_n(s − t)` with
/// `r_n = Σ_p λ d P_J` and `C_n` the sum of the sons' `W` (or `π V_J` at
/// leaves). Using a day requires a strictly better value.
pub fn theta_ejp(lambda: &[f64], contract: &EjpContract, tree: &ScenarioTree) -> EjpResult {
    let l = tree.num_posts();
    let j = contract.days;
    let nn = tree.len();
    let reward = |i: usize| -> f64 {
        let node = tree.node(i);
        (0..l)
            .map(|p| lambda[i * l + p] * node.durations[p] * contract.power)
            .sum()
    };
    let mut cont: Vec<Vec<f64>> = vec![Vec::new(); nn];
    let mut w: Vec<Vec<f64>> = vec![Vec::new(); nn];
    for i in (0..nn).rev() {
        let node = tree.node(i);
        let c: Vec<f64> = if node.is_leaf() {
            contract
                .terminal_value
                .iter()
                .map(|v| node.prob * v)
                .collect()
        } else {
            (0..=j)
                .map(|s| node.sons.iter().map(|&m| w[m][s]).sum())
                .collect()
        };
        let r = reward(i);
        w[i] = (0..=j)
            .map(|s| if s >= 1 { c[s].max(r + c[s - 1]) } else { c[s] })
            .collect();
        cont[i] = c;
    }

    let mut days = vec![0u8; nn];
    let mut stock = vec![0usize; nn];
    let mut production = vec![0.0; tree.dual_dim()];
    let mut value = 0.0;
    for i in 0..nn {
        let node = tree.node(i);
        let s = node.father.map_or(j, |f| stock[f]);
        let r = reward(i);
        let used = s >= 1 && r + cont[i][s - 1] > cont[i][s];
        stock[i] = s - used as usize;
        if used {
            days[i] = 1;
            value += r;
            for p in 0..l {
                production[i * l + p] = node.durations[p] * contract.power;
            }
        }
        if node.is_leaf() {
            value += node.prob * contract.terminal_value[stock[i]];
        }
    }
    EjpResult {
        value: -value,
        days,
        stock,
        production,
    }
}
