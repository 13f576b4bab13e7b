//! Maximization of a nonsmooth concave function given by an oracle that
//! returns a value and a supergradient.
//!
//! The default method is a proximal bundle method. Cuts are stored
//! relative to the current center `x̂` as `(e_i, g_i)` so that the model is
//! `m(x̂ + d) = θ(x̂) + min_i (e_i + g_iᵀd)`. Each iteration solves
//! `max_d m(x̂ + d) − ‖d‖² / (2t)` through its dual, a quadratic over the
//! simplex of cut weights, by pairwise coordinate descent.

use std::error::Error as StdError;
use std::io::Write;

use thiserror::Error;

use crate::dual::{evaluate_dual, DualError, DualModel, RunMode};

#[derive(Error, Debug)]
pub enum OptimizerError {
    #[error("oracle failed at iteration {iteration}: {source}")]
    Oracle {
        iteration: usize,
        #[source]
        source: Box<dyn StdError + Send + Sync>,
    },
    #[error("oracle returned a non-finite value or supergradient at iteration {0}")]
    NonFinite(usize),
    #[error("invalid optimizer parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    ProximalBundle,
    /// Subgradient ascent with Polyak steps toward an estimated target.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerParams {
    pub max_iterations: usize,
    /// Stop when the predicted ascent is below `tolerance * (1 + |θ̂|)`.
    pub tolerance: f64,
    /// Length of the first proximal step; `None` picks 10% of `‖x₀‖`.
    pub initial_step: Option<f64>,
    pub t_min: f64,
    pub t_max: f64,
    /// Fraction of the predicted ascent a serious step must achieve.
    pub serious_fraction: f64,
    /// Null steps in a row before `t` is halved.
    pub null_steps_before_shrink: usize,
    pub bundle_cap: usize,
    pub algorithm: Algorithm,
    /// Keep every iterate in the trace.
    pub store_iterates: bool,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            tolerance: 1e-7,
            initial_step: None,
            t_min: 1e-12,
            t_max: 1e12,
            serious_fraction: 0.1,
            null_steps_before_shrink: 3,
            bundle_cap: 200,
            algorithm: Algorithm::ProximalBundle,
            store_iterates: false,
        }
    }
}

impl OptimizerParams {
    fn check(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::Params(m.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be >= 1");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be > 0");
        }
        if self.bundle_cap < 2 {
            return bad("bundle_cap must be >= 2");
        }
        if !(self.serious_fraction > 0.0 && self.serious_fraction < 1.0) {
            return bad("serious_fraction must lie in (0, 1)");
        }
        if !(self.t_min > 0.0 && self.t_min <= self.t_max) {
            return bad("need 0 < t_min <= t_max");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Initial,
    Serious,
    Null,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Initial => "initial",
            StepKind::Serious => "serious",
            StepKind::Null => "null",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// `θ(λ_k)`.
    pub value: f64,
    /// Best value so far.
    pub best: f64,
    /// Predicted ascent of the model at this iteration.
    pub gap: f64,
    pub supergradient_norm: f64,
    pub step: StepKind,
    pub t: f64,
    /// Cuts that underestimated `θ(λ_k)`.
    pub model_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerTrace {
    pub entries: Vec<TraceEntry>,
    /// `λ_k` per iteration when requested.
    pub iterates: Vec<Vec<f64>>,
}

impl OptimizerTrace {
    pub fn total_model_violations(&self) -> usize {
        self.entries.iter().map(|e| e.model_violations).sum()
    }

    /// CSV with header `iteration,value,best,gap,supergradient_norm,step,t`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OptimizerError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iteration",
            "value",
            "best",
            "gap",
            "supergradient_norm",
            "step",
            "t",
        ])?;
        for e in &self.entries {
            w.write_record([
                e.iteration.to_string(),
                e.value.to_string(),
                e.best.to_string(),
                e.gap.to_string(),
                e.supergradient_norm.to_string(),
                e.step.as_str().to_string(),
                e.t.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    /// Best point found.
    pub lambda: Vec<f64>,
    pub value: f64,
    pub trace: OptimizerTrace,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Cut {
    e: f64,
    g: Vec<f64>,
}

struct Bundle {
    cuts: Vec<Cut>,
    gram: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Bundle {
    fn push(&mut self, e: f64, g: Vec<f64>) {
        let row: Vec<f64> = self.cuts.iter().map(|c| dot(&c.g, &g)).collect();
        for (r, v) in self.gram.iter_mut().zip(&row) {
            r.push(*v);
        }
        let mut row = row;
        row.push(dot(&g, &g));
        self.gram.push(row);
        self.cuts.push(Cut { e, g });
        self.weights.push(0.0);
    }

    /// Minimizes `(t/2) αᵀGα + eᵀα` over the simplex by a primal active
    /// set method warm-started from the previous weights.
    fn solve(&mut self, t: f64) {
        let k = self.cuts.len();
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0) {
            self.weights.iter_mut().for_each(|w| *w = 0.0);
            self.weights[k - 1] = 1.0;
        } else {
            self.weights.iter_mut().for_each(|w| *w /= total);
        }
        let h = |i: usize, j: usize| t * self.gram[i][j];
        let hmax = (0..k).map(|i| h(i, i)).fold(0.0f64, f64::max);
        let ridge = 1e-13 * hmax.max(1e-300);
        let emax = self.cuts.iter().map(|c| c.e.abs()).fold(0.0f64, f64::max);
        let tol = 1e-12 * (hmax + emax).max(1e-300);
        let mut alpha = self.weights.clone();
        let mut free: Vec<usize> = (0..k).filter(|&i| alpha[i] > 0.0).collect();

        for _ in 0..(10 * k + 100) {
            let f = free.len();
            let mut m = vec![vec![0.0; f + 2]; f + 1];
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    m[r][c] = h(i, j);
                }
                m[r][r] += ridge;
                m[r][f] = 1.0;
                m[r][f + 1] = -self.cuts[i].e;
                m[f][r] = 1.0;
            }
            m[f][f + 1] = 1.0;
            let Some(x) = gauss_solve(m) else { break };
            let beta = &x[..f];
            let mu = -x[f];
            if beta.iter().all(|&b| b >= 0.0) {
                for a in alpha.iter_mut() {
                    *a = 0.0;
                }
                for (r, &i) in free.iter().enumerate() {
                    alpha[i] = beta[r];
                }
                // Most violated reduced cost among fixed cuts.
                let mut enter = None;
                let mut worst = -tol;
                for j in 0..k {
                    if free.contains(&j) {
                        continue;
                    }
                    let g: f64 =
                        free.iter().map(|&i| h(j, i) * alpha[i]).sum::<f64>() + self.cuts[j].e - mu;
                    if g < worst {
                        worst = g;
                        enter = Some(j);
                    }
                }
                match enter {
                    Some(j) => free.push(j),
                    None => break,
                }
            } else {
                let mut step = 1.0f64;
                for (r, &i) in free.iter().enumerate() {
                    if beta[r] < alpha[i] {
                        step = step.min(alpha[i] / (alpha[i] - beta[r]));
                    }
                }
                for (r, &i) in free.iter().enumerate() {
                    alpha[i] += step * (beta[r] - alpha[i]);
                }
                let before = free.len();
                free.retain(|&i| alpha[i] > 1e-15);
                for i in 0..k {
                    if !free.contains(&i) {
                        alpha[i] = 0.0;
                    }
                }
                if free.len() == before {
                    // Blocking variable lost to rounding: drop the smallest.
                    let (pos, _) = free
                        .iter()
                        .enumerate()
                        .min_by(|a, b| alpha[*a.1].total_cmp(&alpha[*b.1]))
                        .expect("free set is nonempty");
                    alpha[free[pos]] = 0.0;
                    free.remove(pos);
                }
                let s: f64 = alpha.iter().sum();
                alpha.iter_mut().for_each(|a| *a /= s);
            }
        }
        self.weights = alpha;
    }

    /// Aggregate supergradient `ĝ = Σ α g` and error `ê = Σ α e`.
    fn aggregate(&self, dim: usize) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; dim];
        let mut e = 0.0;
        for (c, &w) in self.cuts.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            e += w * c.e;
            for (gi, ci) in g.iter_mut().zip(&c.g) {
                *gi += w * ci;
            }
        }
        (e, g)
    }

    fn recenter(&mut self, shift: &[f64], f_old: f64, f_new: f64) {
        for c in &mut self.cuts {
            c.e = (c.e + f_old + dot(&c.g, shift) - f_new).max(0.0);
        }
    }

    /// Keeps the aggregate cut, the cuts active in the last subproblem and
    /// the newest inactive cuts, `cap − 1` cuts in all.
    fn compress(&mut self, cap: usize, aggregate: (f64, Vec<f64>)) {
        if self.cuts.len() < cap {
            return;
        }
        let room = cap - 2;
        let mut keep: Vec<usize> = (0..self.cuts.len())
            .filter(|&i| self.weights[i] > 0.0)
            .collect();
        if keep.len() > room {
            keep.drain(..keep.len() - room);
        }
        for i in (0..self.cuts.len()).rev() {
            if keep.len() >= room {
                break;
            }
            if self.weights[i] == 0.0 {
                keep.push(i);
            }
        }
        keep.sort_unstable();
        let mut old: Vec<Option<Cut>> = self.cuts.drain(..).map(Some).collect();
        self.gram.clear();
        self.weights.clear();
        self.push(aggregate.0, aggregate.1);
        for i in keep {
            let c = old[i].take().expect("each cut kept once");
            self.push(c.e, c.g);
        }
        self.weights[0] = 1.0;
    }
}

/// Solves a dense augmented system `[A | b]` by Gaussian elimination with
/// partial pivoting.
fn gauss_solve(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = m.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            if f != 0.0 {
                for j in c..=n {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|j| m[r][j] * x[j]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Maximizes the concave function behind `oracle`, starting from `x0`.
pub fn maximize_dual<F, E>(
    mut oracle: F,
    x0: Vec<f64>,
    params: &OptimizerParams,
) -> Result<OptimizerResult, OptimizerError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    E: StdError + Send + Sync + 'static,
{
    params.check()?;
    let mut call = |x: &[f64], iteration: usize| -> Result<(f64, Vec<f64>), OptimizerError> {
        let (v, g) = oracle(x).map_err(|e| OptimizerError::Oracle {
            iteration,
            source: Box::new(e),
        })?;
        if !v.is_finite() || g.len() != x.len() || g.iter().any(|x| !x.is_finite()) {
            return Err(OptimizerError::NonFinite(iteration));
        }
        Ok((v, g))
    };
    match params.algorithm {
        Algorithm::ProximalBundle => bundle(&mut call, x0, params),
        Algorithm::Subgradient => subgradient(&mut call, x0, params),
    }
}

fn bundle(
    call: &mut dyn FnMut(&[f64], usize) -> Result<(f64, Vec<f64>), OptimizerError>,
    x0: Vec<f64>,
    params: &OptimizerParams,
) -> Result<OptimizerResult, OptimizerError> {
    let dim = x0.len();
    let mut center = x0;
    let (mut f_center, g0) = call(&center, 0)?;
    let g0_norm = dot(&g0, &g0).sqrt();
    let mut trace = OptimizerTrace::default();
    if params.store_iterates {
        trace.iterates.push(center.clone());
    }
    trace.entries.push(TraceEntry {
        iteration: 0,
        value: f_center,
        best: f_center,
        gap: f64::INFINITY,
        supergradient_norm: g0_norm,
        step: StepKind::Initial,
        t: 0.0,
        model_violations: 0,
    });
    if g0_norm == 0.0 {
        return Ok(OptimizerResult {
            lambda: center,
            value: f_center,
            trace,
            converged: true,
        });
    }
    let step0 = params.initial_step.unwrap_or_else(|| {
        let n = dot(&center, &center).sqrt();
        if n > 0.0 {
            0.1 * n
        } else {
            1.0
        }
    });
    let mut t = (step0 / g0_norm).clamp(params.t_min, params.t_max);
    let t_ref = t;
    let mut b = Bundle {
        cuts: Vec::new(),
        gram: Vec::new(),
        weights: Vec::new(),
    };
    b.push(0.0, g0);
    b.weights[0] = 1.0;
    let mut nulls = 0usize;
    let mut converged = false;

    for it in 1..=params.max_iterations {
        b.solve(t);
        let (e_hat, g_hat) = b.aggregate(dim);
        let g2 = dot(&g_hat, &g_hat);
        let delta = e_hat + t * g2;
        let stop = e_hat + 0.5 * t.max(t_ref) * g2;
        if stop <= params.tolerance * (1.0 + f_center.abs()) {
            converged = true;
            break;
        }
        let trial: Vec<f64> = center.iter().zip(&g_hat).map(|(c, g)| c + t * g).collect();
        let (f_trial, g_trial) = call(&trial, it)?;
        let shift: Vec<f64> = g_hat.iter().map(|g| t * g).collect();

        let tol = 1e-9 * (1.0 + f_trial.abs());
        let violations = b
            .cuts
            .iter()
            .filter(|c| f_center + c.e + dot(&c.g, &shift) < f_trial - tol)
            .count();

        // Linearization error of the new cut at the current center.
        let e_new = (f_trial - dot(&g_trial, &shift) - f_center).max(0.0);
        let ascent = f_trial - f_center;
        let serious = ascent >= params.serious_fraction * delta;
        let aggregate = (e_hat, g_hat);
        b.compress(params.bundle_cap, aggregate);
        b.push(e_new, g_trial.clone());
        let step = if serious {
            b.recenter(&shift, f_center, f_trial);
            center = trial;
            f_center = f_trial;
            if ascent >= 0.5 * delta {
                t = (2.0 * t).min(params.t_max);
            }
            nulls = 0;
            StepKind::Serious
        } else {
            nulls += 1;
            if nulls >= params.null_steps_before_shrink {
                t = (0.5 * t).max(params.t_min);
                nulls = 0;
            }
            StepKind::Null
        };
        if params.store_iterates {
            trace.iterates.push(if serious {
                center.clone()
            } else {
                trial_of(&center, &shift)
            });
        }
        trace.entries.push(TraceEntry {
            iteration: it,
            value: f_trial,
            best: f_center,
            gap: delta,
            supergradient_norm: dot(&g_trial, &g_trial).sqrt(),
            step,
            t,
            model_violations: violations,
        });
    }
    Ok(OptimizerResult {
        lambda: center,
        value: f_center,
        trace,
        converged,
    })
}

fn trial_of(center: &[f64], shift: &[f64]) -> Vec<f64> {
    center.iter().zip(shift).map(|(c, s)| c + s).collect()
}

fn subgradient(
    call: &mut dyn FnMut(&[f64], usize) -> Result<(f64, Vec<f64>), OptimizerError>,
    x0: Vec<f64>,
    params: &OptimizerParams,
) -> Result<OptimizerResult, OptimizerError> {
    let mut x = x0;
    let (mut f, mut g) = call(&x, 0)?;
    let mut best = (f, x.clone());
    let mut trace = OptimizerTrace::default();
    let mut gamma = params
        .initial_step
        .unwrap_or(0.1 * dot(&x, &x).sqrt().max(1.0))
        * dot(&g, &g).sqrt();
    let mut no_gain = 0;
    for it in 0..=params.max_iterations {
        let gn2 = dot(&g, &g);
        let improved = f > best.0;
        if improved {
            best = (f, x.clone());
            no_gain = 0;
        } else if it > 0 {
            no_gain += 1;
        }
        if params.store_iterates {
            trace.iterates.push(x.clone());
        }
        trace.entries.push(TraceEntry {
            iteration: it,
            value: f,
            best: best.0,
            gap: gamma,
            supergradient_norm: gn2.sqrt(),
            step: if it == 0 {
                StepKind::Initial
            } else if improved {
                StepKind::Serious
            } else {
                StepKind::Null
            },
            t: 0.0,
            model_violations: 0,
        });
        if gn2 == 0.0 || it == params.max_iterations {
            break;
        }
        if no_gain >= 10 {
            gamma *= 0.5;
            no_gain = 0;
        }
        // Polyak step toward the target best + gamma.
        let step = (best.0 + gamma - f) / gn2;
        x = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi).collect();
        let r = call(&x, it + 1)?;
        f = r.0;
        g = r.1;
    }
    Ok(OptimizerResult {
        lambda: best.1,
        value: best.0,
        trace,
        converged: false,
    })
}

/// Maximizes the dual of one run mode.
///
/// The search runs on `μ` with `λ = π ⊙ μ`, where `μ` is a price per MWh,
/// starting from `initial` (per-offset `μ`) or, when `None`, from the
/// median thermal cost everywhere. The result and any stored iterates are
/// expressed in `λ`.
pub fn optimize_dual(
    model: &DualModel<'_>,
    mode: &RunMode,
    initial: Option<&[f64]>,
    params: &OptimizerParams,
) -> Result<OptimizerResult, OptimizerError> {
    let pi = model.tree.prob_vector();
    let mu0 = match initial {
        Some(m) if m.len() == pi.len() => m.to_vec(),
        Some(m) => {
            return Err(OptimizerError::Params(format!(
                "initial prices have {} entries, expected {}",
                m.len(),
                pi.len()
            )))
        }
        None => vec![model.units.median_thermal_cost(); pi.len()],
    };
    mode.kappas().map_err(|e| OptimizerError::Oracle {
        iteration: 0,
        source: Box::new(e),
    })?;
    let to_lambda = |mu: &[f64]| -> Vec<f64> { mu.iter().zip(&pi).map(|(m, p)| m * p).collect() };
    let oracle = |mu: &[f64]| -> Result<(f64, Vec<f64>), DualError> {
        let e = evaluate_dual(&to_lambda(mu), model, mode)?;
        let g = e
            .supergradient
            .iter()
            .zip(&pi)
            .map(|(g, p)| g * p)
            .collect();
        Ok((e.value, g))
    };
    let mut r = maximize_dual(oracle, mu0, params)?;
    r.lambda = to_lambda(&r.lambda);
    for x in &mut r.trace.iterates {
        *x = to_lambda(x);
    }
    Ok(r)
}
