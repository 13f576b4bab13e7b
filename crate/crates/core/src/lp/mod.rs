//! Dense bounded-variable primal simplex.
//!
//! Rows `aᵀx (≤ | ≥ | =) b` are written `aᵀx − r = 0` with a bounded
//! logical variable `r`, so every constraint is an equality and every
//! variable carries its own bounds. Phase I minimizes the sum of signed
//! artificials; phase II keeps them fixed at zero. Pricing is Dantzig's
//! rule, switching to Bland's rule after a run of degenerate pivots.
//!
//! Row duals are read from the artificial columns, which hold `B⁻¹` up to
//! sign.
//!
//! # Dump format
//!
//! [`LpProblem::dump`] writes a line-oriented text description:
//!
//! ```text
//! lp <vars> <rows>
//! var <j> cost <c> lower <l> upper <u>
//! row <i> <le|ge|eq> <rhs> <j>:<a> <j>:<a> ...
//! ```
//!
//! Infinite bounds print as `inf` / `-inf`.

mod reference;

use std::fmt::Write as _;

use thiserror::Error;

pub use reference::{solve_primal_reference, PrimalReference, ReferenceOptions};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("variable {var}: lower bound {lower} above upper bound {upper}")]
    Bounds { var: usize, lower: f64, upper: f64 },
    #[error("non-finite data: {0}")]
    NotFinite(String),
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("infeasible at node {node}, post {post}")]
    InfeasibleCell { node: i64, post: usize },
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min cᵀx` subject to rows and `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(LpRow {
            coeffs,
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn rows(&self) -> &[LpRow] {
        &self.rows
    }

    pub fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !self.cost[j].is_finite() {
                return Err(LpError::NotFinite(format!("cost of variable {j}")));
            }
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY || l > u {
                return Err(LpError::Bounds {
                    var: j,
                    lower: l,
                    upper: u,
                });
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(LpError::NotFinite(format!("rhs of row {i}")));
            }
            for &(j, a) in &r.coeffs {
                if j >= n {
                    return Err(LpError::Dimension(format!(
                        "row {i} references variable {j} of {n}"
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::NotFinite(format!("row {i}, variable {j}")));
                }
            }
        }
        Ok(())
    }

    /// Text dump in the format described in the module docs.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lp {} {}", self.num_vars(), self.num_rows());
        for j in 0..self.num_vars() {
            let _ = writeln!(
                s,
                "var {j} cost {} lower {} upper {}",
                self.cost[j], self.lower[j], self.upper[j]
            );
        }
        for (i, r) in self.rows.iter().enumerate() {
            let rel = match r.relation {
                Relation::Le => "le",
                Relation::Ge => "ge",
                Relation::Eq => "eq",
            };
            let _ = write!(s, "row {i} {rel} {}", r.rhs);
            for &(j, a) in &r.coeffs {
                let _ = write!(s, " {j}:{a}");
            }
            s.push('\n');
        }
        s
    }

    /// Row activities `aᵢᵀx`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values (meaningful when optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals `∂ objective / ∂ rhs`.
    pub duals: Vec<f64>,
    /// Artificial level per row at the end of phase I; nonzero rows witness
    /// infeasibility.
    pub infeasibility: Vec<f64>,
    pub iterations: usize,
}

/// Residuals of the optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Largest row or bound violation.
    pub primal: f64,
    /// Largest reduced cost or row dual of the wrong sign.
    pub dual: f64,
    /// Largest product of a reduced cost (or row dual) with the distance
    /// to its bound (or row slack).
    pub complementarity: f64,
}

impl LpSolution {
    pub fn kkt(&self, p: &LpProblem) -> KktResiduals {
        let act = p.activities(&self.x);
        let mut primal = 0.0f64;
        let mut dual = 0.0f64;
        let mut comp = 0.0f64;
        for (i, r) in p.rows.iter().enumerate() {
            let slack = act[i] - r.rhs;
            let y = self.duals[i];
            match r.relation {
                Relation::Eq => primal = primal.max(slack.abs()),
                Relation::Le => {
                    primal = primal.max(slack);
                    dual = dual.max(y);
                    comp = comp.max((y * slack).abs());
                }
                Relation::Ge => {
                    primal = primal.max(-slack);
                    dual = dual.max(-y);
                    comp = comp.max((y * slack).abs());
                }
            }
        }
        let mut reduced = p.cost.clone();
        for (i, r) in p.rows.iter().enumerate() {
            for &(j, a) in &r.coeffs {
                reduced[j] -= self.duals[i] * a;
            }
        }
        for j in 0..p.num_vars() {
            let (x, l, u, d) = (self.x[j], p.lower[j], p.upper[j], reduced[j]);
            primal = primal.max(l - x).max(x - u);
            let to_lower = x - l;
            let to_upper = u - x;
            if d > 0.0 {
                // Only a variable at its lower bound may have d > 0.
                if l.is_finite() {
                    comp = comp.max(d * to_lower.abs());
                } else {
                    dual = dual.max(d);
                }
            } else if d < 0.0 {
                if u.is_finite() {
                    comp = comp.max(-d * to_upper.abs());
                } else {
                    dual = dual.max(-d);
                }
            }
        }
        KktResiduals {
            primal,
            dual,
            complementarity: comp,
        }
    }
}

const PIVOT_TOL: f64 = 1e-9;
const BLAND_AFTER: usize = 50;

struct Tableau {
    m: usize,
    ncol: usize,
    /// `B⁻¹ [A | −I | S]`, row-major.
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    head: Vec<usize>,
    basic: Vec<bool>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    sign: Vec<f64>,
    /// Original columns of structural and logical variables, sparse.
    columns: Vec<Vec<(usize, f64)>>,
    n_struct: usize,
    iterations: usize,
    max_iterations: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.ncol..(i + 1) * self.ncol]
    }

    fn art(&self, i: usize) -> usize {
        self.n_struct + self.m + i
    }

    fn recompute_reduced(&mut self) {
        let mut d = self.cost.clone();
        for i in 0..self.m {
            let cb = self.cost[self.head[i]];
            if cb != 0.0 {
                for (dj, tij) in d.iter_mut().zip(self.row(i)) {
                    *dj -= cb * tij;
                }
            }
        }
        for i in 0..self.m {
            d[self.head[i]] = 0.0;
        }
        self.reduced = d;
    }

    /// Recomputes basic values from the nonbasic ones: `x_B = −B⁻¹ N x_N`.
    fn refresh_basics(&mut self) {
        let mut w = vec![0.0; self.m];
        for j in 0..self.n_struct + self.m {
            if !self.basic[j] && self.x[j] != 0.0 {
                for &(i, a) in &self.columns[j] {
                    w[i] += a * self.x[j];
                }
            }
        }
        for i in 0..self.m {
            let a = self.art(i);
            if !self.basic[a] && self.x[a] != 0.0 {
                w[i] += self.sign[i] * self.x[a];
            }
        }
        for r in 0..self.m {
            let row = self.row(r);
            let mut v = 0.0;
            for i in 0..self.m {
                // (B⁻¹)_{r,i} = T[r, art_i] * sign_i.
                let binv = row[self.n_struct + self.m + i] * self.sign[i];
                v -= binv * w[i];
            }
            let h = self.head[r];
            self.x[h] = v;
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let ncol = self.ncol;
        let piv = self.t[r * ncol + q];
        {
            let row = &mut self.t[r * ncol..(r + 1) * ncol];
            for v in row.iter_mut() {
                *v /= piv;
            }
        }
        let prow: Vec<f64> = self.t[r * ncol..(r + 1) * ncol].to_vec();
        let nz: Vec<usize> = (0..ncol).filter(|&j| prow[j] != 0.0).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * ncol + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * ncol..(i + 1) * ncol];
            for &j in &nz {
                row[j] -= f * prow[j];
            }
            row[q] = 0.0;
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for &j in &nz {
                self.reduced[j] -= f * prow[j];
            }
        }
        self.reduced[q] = 0.0;
        let leaving = self.head[r];
        self.basic[leaving] = false;
        self.basic[q] = true;
        self.head[r] = q;
    }

    fn run(&mut self, dual_tol: f64) -> Result<PhaseEnd, LpError> {
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let bland = degenerate >= BLAND_AFTER;
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.ncol {
                if self.basic[j] || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = self.reduced[j];
                let dir = if d < -dual_tol && self.x[j] < self.upper[j] {
                    1.0
                } else if d > dual_tol && self.x[j] > self.lower[j] {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    enter = Some((j, dir));
                }
            }
            let Some((q, dir)) = enter else {
                return Ok(PhaseEnd::Optimal);
            };
            self.iterations += 1;

            let mut theta = self.upper[q] - self.lower[q];
            let mut leave: Option<(usize, f64)> = None;
            let mut leave_alpha = 0.0f64;
            for i in 0..self.m {
                let alpha = dir * self.t[i * self.ncol + q];
                let h = self.head[i];
                let (lim, bound) = if alpha > PIVOT_TOL {
                    if self.lower[h] == f64::NEG_INFINITY {
                        continue;
                    }
                    (
                        ((self.x[h] - self.lower[h]) / alpha).max(0.0),
                        self.lower[h],
                    )
                } else if alpha < -PIVOT_TOL {
                    if self.upper[h] == f64::INFINITY {
                        continue;
                    }
                    (
                        ((self.upper[h] - self.x[h]) / -alpha).max(0.0),
                        self.upper[h],
                    )
                } else {
                    continue;
                };
                let better = match leave {
                    None => lim < theta || (lim == theta && theta.is_finite()),
                    Some((r, _)) => {
                        if bland {
                            lim < theta || (lim == theta && h < self.head[r])
                        } else {
                            lim < theta - 1e-12
                                || (lim <= theta + 1e-12 && alpha.abs() > leave_alpha)
                        }
                    }
                };
                if better {
                    theta = lim.min(theta);
                    leave = Some((i, bound));
                    leave_alpha = alpha.abs();
                }
            }
            if !theta.is_finite() {
                return Ok(PhaseEnd::Unbounded);
            }
            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            if theta > 0.0 {
                for i in 0..self.m {
                    let tiq = self.t[i * self.ncol + q];
                    if tiq != 0.0 {
                        let h = self.head[i];
                        self.x[h] -= dir * theta * tiq;
                    }
                }
                self.x[q] += dir * theta;
            }
            match leave {
                None => {
                    // Bound flip of the entering variable.
                    self.x[q] = if dir > 0.0 {
                        self.upper[q]
                    } else {
                        self.lower[q]
                    };
                }
                Some((r, bound)) => {
                    let h = self.head[r];
                    self.pivot(r, q);
                    self.x[h] = bound;
                }
            }
            if self.iterations % 200 == 0 {
                self.recompute_reduced();
                self.refresh_basics();
            }
        }
    }
}

/// Solves `p` to optimality or reports infeasibility / unboundedness.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution, LpError> {
    p.check()?;
    let n = p.num_vars();
    let m = p.num_rows();
    let ncol = n + 2 * m;

    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
    for (i, r) in p.rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            if a != 0.0 {
                columns[j].push((i, a));
            }
        }
        columns[n + i].push((i, -1.0));
    }

    let mut lower = Vec::with_capacity(ncol);
    let mut upper = Vec::with_capacity(ncol);
    lower.extend_from_slice(&p.lower);
    upper.extend_from_slice(&p.upper);
    for r in &p.rows {
        let (l, u) = match r.relation {
            Relation::Le => (f64::NEG_INFINITY, r.rhs),
            Relation::Ge => (r.rhs, f64::INFINITY),
            Relation::Eq => (r.rhs, r.rhs),
        };
        lower.push(l);
        upper.push(u);
    }
    lower.extend(std::iter::repeat_n(0.0, m));
    upper.extend(std::iter::repeat_n(f64::INFINITY, m));

    let mut x = vec![0.0; ncol];
    for j in 0..n + m {
        x[j] = if lower[j].is_finite() {
            lower[j]
        } else if upper[j].is_finite() {
            upper[j]
        } else {
            0.0
        };
    }
    let mut residual = vec![0.0; m];
    for j in 0..n + m {
        for &(i, a) in &columns[j] {
            residual[i] += a * x[j];
        }
    }
    let sign: Vec<f64> = residual
        .iter()
        .map(|&r| if r >= 0.0 { -1.0 } else { 1.0 })
        .collect();

    let mut t = vec![0.0; m * ncol];
    for j in 0..n + m {
        for &(i, a) in &columns[j] {
            t[i * ncol + j] = a * sign[i];
        }
    }
    for i in 0..m {
        t[i * ncol + n + m + i] = 1.0;
        x[n + m + i] = residual[i].abs();
    }
    let head: Vec<usize> = (0..m).map(|i| n + m + i).collect();
    let mut basic = vec![false; ncol];
    for &h in &head {
        basic[h] = true;
    }
    let mut phase1_cost = vec![0.0; ncol];
    for c in phase1_cost.iter_mut().skip(n + m) {
        *c = 1.0;
    }

    let mut tab = Tableau {
        m,
        ncol,
        t,
        lower,
        upper,
        x,
        head,
        basic,
        cost: phase1_cost,
        reduced: Vec::new(),
        sign,
        columns,
        n_struct: n,
        iterations: 0,
        max_iterations: 50 * (m + n).max(100),
    };

    let scale_b = p.rows.iter().map(|r| r.rhs.abs()).fold(1.0, f64::max);
    let scale_x = p
        .lower
        .iter()
        .chain(&p.upper)
        .filter(|v| v.is_finite())
        .fold(scale_b, |a, v| a.max(v.abs()));

    tab.recompute_reduced();
    tab.run(1e-11)?;
    tab.refresh_basics();
    let infeasibility: Vec<f64> = (0..m).map(|i| tab.x[tab.art(i)].max(0.0)).collect();
    let total: f64 = infeasibility.iter().sum();
    if total > 1e-9 * scale_x * (m.max(1) as f64).sqrt() {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: tab.x[..n].to_vec(),
            objective: f64::NAN,
            duals: vec![0.0; m],
            infeasibility,
            iterations: tab.iterations,
        });
    }

    for i in 0..m {
        let a = tab.art(i);
        tab.upper[a] = 0.0;
        if !tab.basic[a] {
            tab.x[a] = 0.0;
        }
    }
    let mut cost = vec![0.0; ncol];
    cost[..n].copy_from_slice(&p.cost);
    tab.cost = cost;
    tab.recompute_reduced();
    let scale_c = p
        .cost
        .iter()
        .fold(0.0f64, |a, c| a.max(c.abs()))
        .max(1e-300);
    let end = tab.run(1e-11 * scale_c.max(1.0))?;
    tab.refresh_basics();
    tab.recompute_reduced();
    if let PhaseEnd::Unbounded = end {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: tab.x[..n].to_vec(),
            objective: f64::NEG_INFINITY,
            duals: vec![0.0; m],
            infeasibility,
            iterations: tab.iterations,
        });
    }

    // y_i = Σ_k c_B[k] (B⁻¹)_{k,i}.
    let mut duals = vec![0.0; m];
    for k in 0..m {
        let cb = tab.cost[tab.head[k]];
        if cb == 0.0 {
            continue;
        }
        let row = tab.row(k);
        for (i, y) in duals.iter_mut().enumerate() {
            *y += cb * row[n + m + i] * tab.sign[i];
        }
    }
    let mut xs = tab.x[..n].to_vec();
    for j in 0..n {
        xs[j] = xs[j].clamp(p.lower[j], p.upper[j]);
    }
    let objective = xs.iter().zip(&p.cost).map(|(x, c)| x * c).sum();
    let sol = LpSolution {
        status: LpStatus::Optimal,
        x: xs,
        objective,
        duals,
        infeasibility,
        iterations: tab.iterations,
    };
    let kkt = sol.kkt(p);
    if !(kkt.primal <= 1e-7 * scale_x) {
        return Err(LpError::Numerical(format!(
            "primal residual {} after solve",
            kkt.primal
        )));
    }
    Ok(sol)
}
