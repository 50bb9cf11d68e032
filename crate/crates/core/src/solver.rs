//! Damped Gauss-Newton over the assembled least-squares system.
//!
//! Each iteration solves `(JᵀJ + μI) δ = −Jᵀr`. A trial step is accepted only
//! if the energy at the new iterate, evaluated with lagged norms, closest
//! points and refit moments refreshed there, is strictly lower; otherwise μ
//! grows and the step is recomputed.

use std::time::Instant;

use crate::energy::{Assembled, Energies, Linearization, Problem, SparseRows};
use crate::par;
use crate::sparse::EnvelopeMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Initial damping; `None` uses `1e-6 · trace(JᵀJ) / n`.
    pub mu0: Option<f64>,
    pub mu_increase: f64,
    pub mu_decrease: f64,
    /// Damping increases tried per iteration before giving up.
    pub max_retries: usize,
    pub rel_tol: f64,
    pub step_tol: f64,
    /// Print a progress line to stderr every `log_every` iterations; 0 is silent.
    pub log_every: usize,
    /// Record wall-clock seconds in the history (off for reproducible logs).
    pub record_time: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            mu0: None,
            mu_increase: 10.0,
            mu_decrease: 0.3,
            max_retries: 30,
            rel_tol: 1e-10,
            step_tol: 1e-12,
            log_every: 0,
            record_time: true,
        }
    }
}

impl SolverConfig {
    pub fn with_iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.step_tol > 0.0) {
            return Err(Error::arg("convergence thresholds must be positive"));
        }
        if !(self.mu_increase > 1.0 && self.mu_decrease > 0.0 && self.mu_decrease < 1.0) {
            return Err(Error::arg("damping factors must satisfy increase > 1 and 0 < decrease < 1"));
        }
        if self.mu0.is_some_and(|m| !(m >= 0.0 && m.is_finite())) {
            return Err(Error::arg("initial damping must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub e_total: f64,
    pub e_d: f64,
    pub e_r: f64,
    pub e_c: f64,
    pub e_f: f64,
    /// `‖r‖²` of the assembled system at this iterate.
    pub residual_sq: f64,
    pub step_norm: f64,
    pub mu: f64,
    pub seconds: f64,
}

impl IterationRecord {
    fn new(iteration: usize, e: &Energies, residual_sq: f64, step_norm: f64, mu: f64, seconds: f64) -> Self {
        Self {
            iteration,
            e_total: e.total,
            e_d: e.e_d,
            e_r: e.e_r,
            e_c: e.e_c,
            e_f: e.e_f,
            residual_sq,
            step_norm,
            mu,
            seconds,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    RelativeDecrease,
    StepNorm,
    ZeroEnergy,
    ZeroGradient,
    /// No damping level produced a decrease.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub history: Vec<IterationRecord>,
    pub stop: StopReason,
    pub x: Vec<f64>,
    pub linearization: Linearization,
}

/// Normal equations `JᵀJ` for a fixed Jacobian sparsity pattern.
#[derive(Clone, Debug)]
pub struct NormalSystem {
    n: usize,
    jtj: EnvelopeMatrix,
    /// Per variable: (row, position in `cols`) of every Jacobian entry.
    col_entries: Vec<Vec<(usize, usize)>>,
    cols: Vec<usize>,
    row_ptr: Vec<usize>,
}

impl NormalSystem {
    pub fn new(jac: &SparseRows, n: usize) -> Result<Self> {
        let mut col_entries = vec![Vec::new(); n];
        for r in 0..jac.rows() {
            for pos in jac.row_ptr[r]..jac.row_ptr[r + 1] {
                let c = jac.cols[pos];
                if c >= n {
                    return Err(Error::Contract(format!("jacobian column {c} outside {n} variables")));
                }
                col_entries[c].push((r, pos));
            }
        }
        let mut marker = vec![usize::MAX; n];
        let adjacency = (0..n)
            .map(|a| {
                let mut adj = Vec::new();
                for &(r, _) in &col_entries[a] {
                    for &b in &jac.cols[jac.row_ptr[r]..jac.row_ptr[r + 1]] {
                        if marker[b] != a && b != a {
                            marker[b] = a;
                            adj.push(b);
                        }
                    }
                }
                adj
            })
            .collect();
        Ok(Self {
            n,
            jtj: EnvelopeMatrix::from_adjacency(adjacency)?,
            col_entries,
            cols: jac.cols.clone(),
            row_ptr: jac.row_ptr.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matches(&self, jac: &SparseRows) -> bool {
        jac.cols == self.cols && jac.row_ptr == self.row_ptr
    }

    /// Fills `JᵀJ` and returns `Jᵀr`.
    pub fn build(&mut self, jac: &SparseRows, r: &[f64], parallel: bool) -> Result<Vec<f64>> {
        if !self.matches(jac) || r.len() != jac.rows() {
            return Err(Error::Contract("jacobian pattern changed between iterations".into()));
        }
        let col_entries = &self.col_entries;
        let perm = self.jtj.perm().to_vec();
        let inv = self.jtj.inv().to_vec();
        let vals = &jac.vals;
        let cols = &jac.cols;
        let row_ptr = &jac.row_ptr;
        self.jtj.fill_rows(parallel, |pr, first, row| {
            let a = perm[pr];
            for &(jr, pos) in &col_entries[a] {
                let va = vals[pos];
                for q in row_ptr[jr]..row_ptr[jr + 1] {
                    let pc = inv[cols[q]];
                    if pc <= pr {
                        row[pc - first] += va * vals[q];
                    }
                }
            }
        });
        Ok(par::map_range(self.n, parallel, |a| {
            col_entries[a].iter().map(|&(jr, pos)| vals[pos] * r[jr]).sum()
        }))
    }

    pub fn trace(&self) -> f64 {
        self.jtj.trace()
    }

    /// Solves `(JᵀJ + μI) δ = −g`.
    pub fn solve(&self, g: &[f64], mu: f64) -> Result<Vec<f64>> {
        let mut m = self.jtj.clone();
        m.add_diag(mu);
        m.factor()?;
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        m.solve(&rhs)
    }
}

/// One damped Gauss-Newton step for residual `r` with Jacobian `jac` over
/// `n` variables. A singular system is retried with growing damping.
pub fn gn_step(r: &[f64], jac: &SparseRows, n: usize, mu: f64) -> Result<Vec<f64>> {
    if mu.is_nan() || mu < 0.0 {
        return Err(Error::arg("damping must be >= 0"));
    }
    let mut ns = NormalSystem::new(jac, n)?;
    let g = ns.build(jac, r, false)?;
    let floor = 1e-12 * (ns.trace() / n.max(1) as f64).max(f64::MIN_POSITIVE);
    let mut m = mu;
    let mut last = None;
    for _ in 0..20 {
        match ns.solve(&g, m) {
            Ok(d) => return Ok(d),
            Err(e @ Error::NotPositiveDefinite { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
        m = (m * 10.0).max(floor);
    }
    Err(last.unwrap_or(Error::NotPositiveDefinite { pivot: 0 }))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dump(iteration: usize, sys: &Assembled, mu: f64, x: &[f64], note: &str) -> Error {
    let e = &sys.energies;
    let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Error::Numerical {
        iteration,
        message: format!(
            "{note}; E_total = {:e}, E_d = {:e}, E_r = {:e}, E_c = {:e}, E_f = {:e}, mu = {mu:e}, max |x| = {xmax:e}",
            e.total, e.e_d, e.e_r, e.e_c, e.e_f
        ),
    }
}

/// Minimizes the problem's total energy and writes the final iterate back
/// into `problem`.
pub fn optimize(problem: &mut Problem, config: &SolverConfig) -> Result<SolveReport> {
    optimize_observed(problem, config, None)
}

/// Callback receiving the problem at the initial and at every accepted
/// iterate.
pub type Observer<'a> = &'a mut dyn FnMut(&Problem, &IterationRecord);

/// [`optimize`] with an observer.
pub fn optimize_observed(problem: &mut Problem, config: &SolverConfig, mut observer: Option<Observer>) -> Result<SolveReport> {
    config.validate()?;
    let start = Instant::now();
    let seconds = || if config.record_time { start.elapsed().as_secs_f64() } else { 0.0 };
    let n = problem.layout().len();
    let parallel = problem.parallel();
    let mut x = problem.pack();
    let mut lin = problem.linearize(&x)?;
    let mut sys = problem.assemble(&x, &lin)?;
    if !sys.norm_sq().is_finite() {
        return Err(dump(0, &sys, 0.0, &x, "non-finite initial energy"));
    }
    let mut history = vec![IterationRecord::new(0, &sys.energies, sys.norm_sq(), 0.0, 0.0, seconds())];
    if let Some(f) = observer.as_mut() {
        f(problem, &history[0]);
    }
    let mut normal: Option<NormalSystem> = None;
    let mut mu: Option<f64> = None;
    let (mut small_rel, mut small_step) = (0, 0);
    let mut stop = StopReason::MaxIterations;

    for it in 1..=config.max_iterations {
        let e = sys.norm_sq();
        if e == 0.0 {
            stop = StopReason::ZeroEnergy;
            break;
        }
        if normal.as_ref().is_none_or(|ns| !ns.matches(&sys.jacobian)) {
            normal = Some(NormalSystem::new(&sys.jacobian, n)?);
        }
        let ns = normal.as_mut().expect("normal system built above");
        let g = ns.build(&sys.jacobian, &sys.r, parallel)?;
        if g.iter().all(|v| *v == 0.0) {
            stop = StopReason::ZeroGradient;
            break;
        }
        let scale = ns.trace() / n.max(1) as f64;
        let mut m = mu.unwrap_or_else(|| config.mu0.unwrap_or(1e-6 * scale));
        if m <= 0.0 && config.mu0 != Some(0.0) {
            m = 1e-12 * scale.max(f64::MIN_POSITIVE);
        }
        let mut accepted = None;
        let mut saw_nonfinite = false;
        let mut saw_finite = false;
        for _ in 0..=config.max_retries {
            match ns.solve(&g, m) {
                Ok(delta) => {
                    let xn: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
                    let trial = problem.linearize(&xn).and_then(|l| problem.assemble(&xn, &l).map(|a| (l, a)));
                    match trial {
                        Ok((l, a)) => {
                            let en = a.norm_sq();
                            if !en.is_finite() {
                                saw_nonfinite = true;
                            } else {
                                saw_finite = true;
                                if en < e {
                                    accepted = Some((xn, l, a, norm(&delta)));
                                    break;
                                }
                            }
                        }
                        Err(Error::DegenerateParameterization(_)) => {}
                        Err(other) => return Err(other),
                    }
                }
                Err(Error::NotPositiveDefinite { .. }) => {}
                Err(other) => return Err(other),
            }
            m = (m * config.mu_increase).max(1e-12 * scale.max(f64::MIN_POSITIVE));
        }
        let Some((xn, ln, an, step)) = accepted else {
            if saw_nonfinite && !saw_finite {
                problem.set_state(&x, Some(&lin))?;
                return Err(dump(it, &sys, m, &x, "every trial step produced a non-finite energy"));
            }
            stop = StopReason::Stalled;
            break;
        };
        let en = an.norm_sq();
        let rel = (e - en) / e;
        mu = Some(m * config.mu_decrease);
        x = xn;
        lin = ln;
        sys = an;
        history.push(IterationRecord::new(it, &sys.energies, en, step, m, seconds()));
        if let Some(f) = observer.as_mut() {
            problem.set_state(&x, Some(&lin))?;
            f(problem, &history[history.len() - 1]);
        }
        if config.log_every > 0 && it % config.log_every == 0 {
            let e = &sys.energies;
            eprintln!(
                "iter {it:4}  E = {:.6e}  E_d = {:.3e}  E_r = {:.3e}  E_c = {:.3e}  E_f = {:.3e}  |step| = {step:.3e}",
                e.total, e.e_d, e.e_r, e.e_c, e.e_f
            );
        }
        small_rel = if rel < config.rel_tol { small_rel + 1 } else { 0 };
        small_step = if step < config.step_tol { small_step + 1 } else { 0 };
        if small_rel >= 2 {
            stop = StopReason::RelativeDecrease;
            break;
        }
        if small_step >= 2 {
            stop = StopReason::StepNorm;
            break;
        }
    }
    problem.set_state(&x, Some(&lin))?;
    Ok(SolveReport {
        history,
        stop,
        x,
        linearization: lin,
    })
}
