//! The switching problem on simulated paths.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regression::{regress_continuation, RegressionBasis};
use super::{backward_sweep, Policy, SolverConfig, SwitchingProblem};
use crate::costs::{running_cost, switch_cost, terminal_reward, CostConfig, NextStepExpectation, Regime, RegimeCostPaths};
use crate::dynamics::PathSet;
use crate::error::{Error, Result};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub se: f64,
}

impl ValueEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, se: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, se: (var / n).sqrt() }
    }
}

/// Regression of next-step values on the state `(r, lambda)` of the paths
/// alive at the current step. Dead paths get zero.
pub struct LsmcExpectation<'a> {
    paths: &'a PathSet,
    bases: [RegressionBasis; 2],
}

impl<'a> LsmcExpectation<'a> {
    /// Quadratic in `(r, lambda)` without collateral, in `r` alone with.
    pub fn new(paths: &'a PathSet) -> Self {
        Self::with_bases(paths, RegressionBasis::rate_and_intensity(), RegressionBasis::rate_only())
    }

    pub fn with_bases(paths: &'a PathSet, uncollateralized: RegressionBasis, collateralized: RegressionBasis) -> Self {
        Self { paths, bases: [uncollateralized, collateralized] }
    }
}

impl NextStepExpectation for LsmcExpectation<'_> {
    fn expect_next(&self, step: usize, regime: Regime, next: &[f64]) -> Result<Vec<f64>> {
        let paths = self.paths;
        let m = paths.n_paths();
        if next.len() != m {
            return Err(Error::GridMismatch(format!("{} values for {m} paths", next.len())));
        }
        let alive: Vec<usize> = (0..m).filter(|&p| paths.alive(step, p)).collect();
        let states: Vec<(f64, f64)> =
            alive.iter().map(|&p| (paths.short_rate[[step, p]], paths.intensity[[step, p]])).collect();
        let targets: Vec<f64> = alive.iter().map(|&p| next[p]).collect();
        let fit = regress_continuation(&states, &targets, &self.bases[regime.index()])?;
        let mut out = vec![0.0; m];
        for (k, &p) in alive.iter().enumerate() {
            out[p] = fit.fitted[k];
        }
        Ok(out)
    }
}

/// Running costs `(X - delta)^2 dt`, terminal reward and switch costs on
/// each simulated path, discounted at the risk-free rate. Nothing accrues
/// from a path's default step on.
pub struct PathProblem<'a> {
    pub paths: &'a PathSet,
    pub costs: &'a RegimeCostPaths,
    pub cfg: &'a CostConfig,
}

impl<'a> PathProblem<'a> {
    pub fn new(paths: &'a PathSet, costs: &'a RegimeCostPaths, cfg: &'a CostConfig) -> Result<Self> {
        let expected = (paths.grid.len(), paths.n_paths());
        if costs.bcva.dim() != expected || costs.coll_cost.dim() != expected {
            return Err(Error::GridMismatch(format!(
                "cost paths {:?} do not match path set {expected:?}",
                costs.bcva.dim()
            )));
        }
        cfg.validate()?;
        Ok(Self { paths, costs, cfg })
    }

    fn discount(&self, step: usize) -> f64 {
        (-self.cfg.r_free * self.paths.grid.time(step)).exp()
    }
}

impl SwitchingProblem for PathProblem<'_> {
    fn n_steps(&self) -> usize {
        self.paths.grid.n_steps()
    }

    fn n_items(&self, _step: usize) -> usize {
        self.paths.n_paths()
    }

    fn running(&self, step: usize, item: usize, regime: Regime) -> f64 {
        if !self.paths.alive(step, item) {
            return 0.0;
        }
        running_cost(regime, self.costs, step, item, self.cfg) * self.paths.grid.dt() * self.discount(step)
    }

    fn terminal(&self, item: usize, regime: Regime) -> f64 {
        let last = self.n_steps();
        if !self.paths.alive(last, item) {
            return 0.0;
        }
        // the collateral cost at maturity is the spot term -NPV(T)
        let npv = -self.costs.coll_cost[[last, item]];
        terminal_reward(regime, npv, self.cfg) * self.discount(last)
    }

    fn switch_cost(&self, step: usize, from: Regime) -> f64 {
        switch_cost(from, self.paths.grid.time(step), self.cfg)
    }
}

/// Result of the switching valuation on a path set.
#[derive(Debug, Clone)]
pub struct SwitchingSolution {
    /// Value of the switchable contract for each starting regime.
    pub v_star: [ValueEstimate; 2],
    /// Never collateralised.
    pub v_cva: ValueEstimate,
    /// Always collateralised.
    pub v_coll: ValueEstimate,
    pub initial_regime: Regime,
    /// Regime held over `[t_n, t_{n+1})` when starting from
    /// `initial_regime`, as the `z` indicator. Shape `(n_steps + 1, n_paths)`.
    pub indicators: Array2<u8>,
    /// Per regime: first step at or after `n` at which a path sitting in
    /// that regime would switch.
    pub min_switch_time: [Array2<Option<usize>>; 2],
    /// Switches `(step, regime entered)` per path.
    pub strategy_trace: Vec<Vec<(usize, Regime)>>,
    /// Forward re-pricing of `strategy_trace`.
    pub forward_value: ValueEstimate,
    pub policy: Policy,
}

impl SwitchingSolution {
    /// Cheaper of the two starting regimes.
    pub fn best(&self) -> (Regime, ValueEstimate) {
        let [z, zeta] = self.v_star;
        if zeta.mean < z.mean {
            (Regime::Collateralized, zeta)
        } else {
            (Regime::Uncollateralized, z)
        }
    }

    pub fn total_switches(&self) -> usize {
        self.strategy_trace.iter().map(Vec::len).sum()
    }
}

/// Cost of holding `regime` throughout, per path, and its average.
pub fn value_no_switch(problem: &PathProblem<'_>, regime: Regime) -> ValueEstimate {
    let n = problem.n_steps();
    let samples: Vec<f64> = (0..problem.n_items(0))
        .into_par_iter()
        .map(|p| (0..n).map(|s| problem.running(s, p, regime)).sum::<f64>() + problem.terminal(p, regime))
        .collect();
    ValueEstimate::from_samples(&samples)
}

/// Least-squares Monte Carlo solution of the switching problem.
pub fn solve_switching(
    paths: &PathSet,
    costs: &RegimeCostPaths,
    cfg: &CostConfig,
    solver: &SolverConfig,
    initial_regime: Regime,
) -> Result<SwitchingSolution> {
    let problem = PathProblem::new(paths, costs, cfg)?;
    // one basis for both regimes, so the compared continuations differ only
    // through their targets
    let basis = RegressionBasis::rate_and_intensity();
    let expectation = LsmcExpectation::with_bases(paths, basis.clone(), basis);
    solve_with(&problem, &expectation, solver, initial_regime)
}

/// As [`solve_switching`] with a caller-supplied expectation operator.
pub fn solve_with<E: NextStepExpectation + ?Sized>(
    problem: &PathProblem<'_>,
    expectation: &E,
    solver: &SolverConfig,
    initial_regime: Regime,
) -> Result<SwitchingSolution> {
    let sweep = backward_sweep(problem, expectation, solver)?;
    let v_star = sweep.initial_values.each_ref().map(|v| ValueEstimate::from_samples(v));
    let v_cva = value_no_switch(problem, Regime::Uncollateralized);
    let v_coll = value_no_switch(problem, Regime::Collateralized);

    let n = problem.n_steps();
    let m = problem.n_items(0);
    let policy = sweep.policy;

    // (indicator column, switches, realised cost) per path
    type Run = (Vec<u8>, Vec<(usize, Regime)>, f64);
    let runs: Vec<Run> = (0..m)
        .into_par_iter()
        .map(|p| {
            let mut regime = initial_regime;
            let mut level = policy.top();
            let mut column = vec![0u8; n + 1];
            let mut trace = Vec::new();
            let mut cost = 0.0;
            for (step, slot) in column.iter_mut().enumerate().take(n) {
                if policy.switches(level, step, regime, p) {
                    cost += problem.switch_cost(step, regime);
                    regime = regime.other();
                    level = policy.after_switch(level);
                    trace.push((step, regime));
                }
                *slot = regime.z();
                cost += problem.running(step, p, regime);
            }
            column[n] = regime.z();
            cost += problem.terminal(p, regime);
            (column, trace, cost)
        })
        .collect();

    let mut indicators = Array2::zeros((n + 1, m));
    let mut strategy_trace = Vec::with_capacity(m);
    let mut forward = Vec::with_capacity(m);
    for (p, (column, trace, cost)) in runs.into_iter().enumerate() {
        indicators.column_mut(p).assign(&ndarray::Array1::from(column));
        strategy_trace.push(trace);
        forward.push(cost);
    }

    let decisions = policy.top_level();
    let min_switch_time = Regime::BOTH.map(|z| {
        let mut tau = Array2::from_elem((n + 1, m), None);
        for p in 0..m {
            let mut next = None;
            for step in (0..n).rev() {
                if decisions[[step, z.index(), p]] {
                    next = Some(step);
                }
                tau[[step, p]] = next;
            }
        }
        tau
    });

    Ok(SwitchingSolution {
        v_star,
        v_cva,
        v_coll,
        initial_regime,
        indicators,
        min_switch_time,
        strategy_trace,
        forward_value: ValueEstimate::from_samples(&forward),
        policy,
    })
}

/// Summary of the states at which switching out of `regime` is optimal.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRow {
    pub step: usize,
    pub regime: Regime,
    pub count: usize,
    /// `[min, q05, q50, q95, max]`, absent when no path switches.
    pub summary: Option<[f64; 5]>,
}

/// Per step and regime, the cost state (BCVA without collateral, collateral
/// cost with) of the live paths whose minimal switching time is that step.
pub fn extract_boundary(solution: &SwitchingSolution, paths: &PathSet, costs: &RegimeCostPaths) -> Vec<BoundaryRow> {
    let n = paths.grid.n_steps();
    let mut rows = Vec::with_capacity(2 * n);
    for step in 0..n {
        for z in Regime::BOTH {
            let tau = &solution.min_switch_time[z.index()];
            let state = costs.state(z);
            let mut xs: Vec<f64> = (0..paths.n_paths())
                .filter(|&p| paths.alive(step, p) && tau[[step, p]] == Some(step))
                .map(|p| state[[step, p]])
                .collect();
            xs.sort_by(f64::total_cmp);
            let summary = (!xs.is_empty())
                .then(|| [xs[0], quantile(&xs, 0.05), quantile(&xs, 0.5), quantile(&xs, 0.95), xs[xs.len() - 1]]);
            rows.push(BoundaryRow { step, regime: z, count: xs.len(), summary });
        }
    }
    rows
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Smallest number of switches any path still makes from each step on.
pub fn min_remaining_switches(solution: &SwitchingSolution) -> Vec<usize> {
    let steps = solution.indicators.nrows();
    let mut out = vec![usize::MAX; steps];
    for trace in &solution.strategy_trace {
        let mut remaining = trace.len();
        let mut k = 0;
        for (step, slot) in out.iter_mut().enumerate() {
            while k < trace.len() && trace[k].0 < step {
                remaining -= 1;
                k += 1;
            }
            *slot = (*slot).min(remaining);
        }
    }
    out.iter().map(|&v| if v == usize::MAX { 0 } else { v }).collect()
}

/// `step,path,regime`.
pub fn write_indicators_csv<W: Write>(solution: &SwitchingSolution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "path", "regime"])?;
    for ((step, path), &z) in solution.indicators.indexed_iter() {
        let label = if z == 1 { Regime::Uncollateralized } else { Regime::Collateralized }.label();
        w.write_record(&[step.to_string(), path.to_string(), label.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `step,regime,count,min,q05,q50,q95,max`; summary fields are empty when
/// nothing switches.
pub fn write_boundary_csv<W: Write>(rows: &[BoundaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "regime", "count", "min", "q05", "q50", "q95", "max"])?;
    for row in rows {
        let mut record = vec![row.step.to_string(), row.regime.label().to_string(), row.count.to_string()];
        match row.summary {
            Some(s) => record.extend(s.iter().map(f64::to_string)),
            None => record.extend(std::iter::repeat_n(String::new(), 5)),
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// `step,min_remaining,total_remaining`.
pub fn write_switches_csv<W: Write>(solution: &SwitchingSolution, out: W) -> Result<()> {
    let min = min_remaining_switches(solution);
    let mut total = vec![0usize; min.len()];
    for trace in &solution.strategy_trace {
        for &(step, _) in trace {
            for slot in &mut total[..=step] {
                *slot += 1;
            }
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "min_remaining", "total_remaining"])?;
    for (step, (a, b)) in min.iter().zip(&total).enumerate() {
        w.write_record(&[step.to_string(), a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
