//! Two-regime optimal switching by backward induction.
//!
//! The engine is generic over the problem (what each item pays per step,
//! at maturity and on a switch) and over the conditional-expectation
//! operator, so the same sweep runs on Monte Carlo paths with regression
//! and on small discrete lattices with exact transition averages.

mod paths;
mod regression;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

pub use paths::{
    extract_boundary, min_remaining_switches, solve_switching, solve_with, value_no_switch, write_boundary_csv,
    write_indicators_csv, write_switches_csv, BoundaryRow, LsmcExpectation, PathProblem, SwitchingSolution,
    ValueEstimate,
};
pub use regression::{regress_continuation, Feature, RegressionBasis, RegressionFit};

use crate::costs::{NextStepExpectation, Regime};
use crate::error::{Error, Result};

/// What the backward sweep propagates from one step to the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueMode {
    /// Regression only drives decisions; each path carries the cost it
    /// actually realises under them.
    #[default]
    Pathwise,
    /// Propagate the estimated conditional expectations themselves.
    Expected,
}

/// Settings of the backward sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default)]
    pub mode: ValueMode,
    /// Cap on the number of switches; `None` allows one per step.
    #[serde(default)]
    pub max_switches: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { mode: ValueMode::Pathwise, max_switches: None }
    }
}

/// A switching problem on a grid of `n_steps + 1` dates. Items are paths
/// or lattice states; the item set may change between steps only in
/// [`ValueMode::Expected`].
pub trait SwitchingProblem: Sync {
    fn n_steps(&self) -> usize;
    fn n_items(&self, step: usize) -> usize;
    /// Cost accrued over `[t_step, t_{step+1})`, discounted to zero.
    fn running(&self, step: usize, item: usize, regime: Regime) -> f64;
    /// Discounted reward at maturity with `regime` held into it.
    fn terminal(&self, item: usize, regime: Regime) -> f64;
    /// Discounted cost of leaving `from` at `step`.
    fn switch_cost(&self, step: usize, from: Regime) -> f64;
}

/// Switch decisions of the optimal policy.
///
/// `levels[l][[step, regime, item]]` is true when an item in `regime` with
/// `l` switches left switches at `step`. Without a cap there is a single
/// level that refers to itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    levels: Vec<Array3<bool>>,
    capped: bool,
}

impl Policy {
    /// Level to start from.
    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    /// Level after one switch.
    pub fn after_switch(&self, level: usize) -> usize {
        if self.capped {
            level.saturating_sub(1)
        } else {
            level
        }
    }

    pub fn switches(&self, level: usize, step: usize, regime: Regime, item: usize) -> bool {
        self.levels[level].get([step, regime.index(), item]).copied().unwrap_or(false)
    }

    /// Decisions of the starting level, `(step, regime, item)`.
    pub fn top_level(&self) -> &Array3<bool> {
        &self.levels[self.top()]
    }
}

/// Output of [`backward_sweep`].
#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Values at step 0 for each starting regime, per item.
    pub initial_values: [Vec<f64>; 2],
    pub policy: Policy,
}

#[derive(Default)]
struct StepValues {
    realized: Vec<f64>,
    estimated: Vec<f64>,
}

/// Joint backward induction over both regime value surfaces.
///
/// At each step and item the continuation of regime `Z` is its running cost
/// plus the conditional expectation of its next-step value; the alternative
/// is the other regime's value at the same step plus the switch cost. A
/// switch is taken only when strictly cheaper.
pub fn backward_sweep<P, E>(problem: &P, expectation: &E, cfg: &SolverConfig) -> Result<SweepResult>
where
    P: SwitchingProblem + ?Sized,
    E: NextStepExpectation + ?Sized,
{
    let n_steps = problem.n_steps();
    if n_steps == 0 {
        return Err(Error::InvalidParameter("switching problem needs at least one step".into()));
    }
    let width = (0..=n_steps).map(|s| problem.n_items(s)).max().unwrap_or(0);
    if cfg.mode == ValueMode::Pathwise && (0..=n_steps).any(|s| problem.n_items(s) != width) {
        return Err(Error::GridMismatch("pathwise values need the same items at every step".into()));
    }
    let capped = cfg.max_switches.is_some();
    let n_levels = cfg.max_switches.map_or(1, |m| m + 1);
    let mut levels = vec![Array3::from_elem((n_steps + 1, 2, width), false); n_levels];

    let items = problem.n_items(n_steps);
    let terminal: [Vec<f64>; 2] =
        Regime::BOTH.map(|z| (0..items).map(|i| problem.terminal(i, z)).collect::<Vec<_>>());
    check_finite(n_steps, terminal.iter().flatten())?;
    // values[l][regime]
    let mut values: Vec<[StepValues; 2]> = (0..n_levels)
        .map(|_| terminal.clone().map(|v| StepValues { realized: v.clone(), estimated: v }))
        .collect();

    for step in (0..n_steps).rev() {
        let items = problem.n_items(step);
        let running: [Vec<f64>; 2] =
            Regime::BOTH.map(|z| (0..items).map(|i| problem.running(step, i, z)).collect::<Vec<_>>());
        let costs = Regime::BOTH.map(|z| problem.switch_cost(step, z));

        // continuation per level and regime: (estimated, realized)
        let mut cont: Vec<[(Vec<f64>, Vec<f64>); 2]> = Vec::with_capacity(n_levels);
        for level in &values {
            let mut pair: [(Vec<f64>, Vec<f64>); 2] = Default::default();
            for z in Regime::BOTH {
                let next = match cfg.mode {
                    ValueMode::Pathwise => &level[z.index()].realized,
                    ValueMode::Expected => &level[z.index()].estimated,
                };
                let expected = expectation.expect_next(step, z, next)?;
                if expected.len() != items {
                    return Err(Error::GridMismatch(format!(
                        "expectation returned {} values for {items} items at step {step}",
                        expected.len()
                    )));
                }
                let run = &running[z.index()];
                let est: Vec<f64> = expected.iter().zip(run).map(|(e, r)| r + e).collect();
                let real: Vec<f64> = match cfg.mode {
                    ValueMode::Pathwise => next.iter().zip(run).map(|(v, r)| r + v).collect(),
                    ValueMode::Expected => est.clone(),
                };
                pair[z.index()] = (est, real);
            }
            cont.push(pair);
        }

        let mut new_values: Vec<[StepValues; 2]> = Vec::with_capacity(n_levels);
        for l in 0..n_levels {
            let mut pair: [StepValues; 2] = Default::default();
            for z in Regime::BOTH {
                let o = z.other();
                let c = costs[z.index()];
                let (c_est, c_real) = &cont[l][z.index()];
                let mut est = c_est.clone();
                let mut real = c_real.clone();
                // alternative: other regime at this step
                let alt: Option<(&[f64], &[f64])> = if !capped {
                    let (e, r) = &cont[l][o.index()];
                    Some((e, r))
                } else if l > 0 {
                    let prev = &new_values[l - 1][o.index()];
                    Some((&prev.estimated, &prev.realized))
                } else {
                    None
                };
                if let Some((alt_est, alt_real)) = alt {
                    let decisions = &mut levels[l];
                    for i in 0..items {
                        let candidate = alt_est[i] + c;
                        if candidate < est[i] {
                            est[i] = candidate;
                            real[i] = alt_real[i] + c;
                            decisions[[step, z.index(), i]] = true;
                        }
                    }
                }
                check_finite(step, est.iter().chain(&real))?;
                pair[z.index()] = StepValues { realized: real, estimated: est };
            }
            new_values.push(pair);
        }
        values = new_values;
    }

    let top = values.pop().expect("at least one level");
    let initial_values = top.map(|v| match cfg.mode {
        ValueMode::Pathwise => v.realized,
        ValueMode::Expected => v.estimated,
    });
    Ok(SweepResult { initial_values, policy: Policy { levels, capped } })
}

fn check_finite<'a>(step: usize, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One item, deterministic costs given per step and regime.
    struct Line {
        running: Vec<[f64; 2]>,
        terminal: [f64; 2],
        switch: [f64; 2],
    }

    impl SwitchingProblem for Line {
        fn n_steps(&self) -> usize {
            self.running.len()
        }
        fn n_items(&self, _step: usize) -> usize {
            1
        }
        fn running(&self, step: usize, _item: usize, regime: Regime) -> f64 {
            self.running[step][regime.index()]
        }
        fn terminal(&self, _item: usize, regime: Regime) -> f64 {
            self.terminal[regime.index()]
        }
        fn switch_cost(&self, _step: usize, from: Regime) -> f64 {
            self.switch[from.index()]
        }
    }

    use crate::costs::Realized;
    const Z: Regime = Regime::Uncollateralized;
    const ZETA: Regime = Regime::Collateralized;

    #[test]
    fn switches_when_other_regime_is_cheaper() {
        let p = Line { running: vec![[1.0, 0.0]; 3], terminal: [0.0, 0.0], switch: [0.0, 0.0] };
        let out = backward_sweep(&p, &Realized, &SolverConfig::default()).unwrap();
        assert_eq!(out.initial_values[Z.index()], vec![0.0]);
        assert_eq!(out.initial_values[ZETA.index()], vec![0.0]);
        assert!(out.policy.switches(0, 0, Z, 0));
        assert!(!out.policy.switches(0, 0, ZETA, 0));
    }

    #[test]
    fn costly_switch_is_avoided() {
        let p = Line { running: vec![[1.0, 0.0]; 3], terminal: [0.0, 0.0], switch: [5.0, 5.0] };
        let out = backward_sweep(&p, &Realized, &SolverConfig::default()).unwrap();
        assert_eq!(out.initial_values[Z.index()], vec![3.0]);
        assert!(!out.policy.top_level().iter().any(|&b| b));
    }

    #[test]
    fn terminal_reward_can_force_a_late_switch() {
        // zeta is cheaper to run but expensive at maturity: start in zeta,
        // move to z at the last step
        let p = Line { running: vec![[1.0, 0.0]; 4], terminal: [0.0, 10.0], switch: [0.5, 0.5] };
        let out = backward_sweep(&p, &Realized, &SolverConfig::default()).unwrap();
        assert_eq!(out.initial_values[ZETA.index()], vec![1.5]);
        assert!(out.policy.switches(0, 3, ZETA, 0));
        assert!((0..3).all(|s| !out.policy.switches(0, s, ZETA, 0)));
    }

    #[test]
    fn switch_cap_limits_value() {
        // costs alternate so every step wants a switch
        let running = vec![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let p = Line { running, terminal: [0.0, 0.0], switch: [0.1, 0.1] };
        let free = backward_sweep(&p, &Realized, &SolverConfig::default()).unwrap();
        assert!((free.initial_values[Z.index()][0] - 0.4).abs() < 1e-12);
        let none = backward_sweep(&p, &Realized, &SolverConfig { max_switches: Some(0), ..Default::default() }).unwrap();
        assert_eq!(none.initial_values[Z.index()], vec![2.0]);
        let one = backward_sweep(&p, &Realized, &SolverConfig { max_switches: Some(1), ..Default::default() }).unwrap();
        assert_eq!(one.initial_values[Z.index()], vec![2.0]);
        let two = backward_sweep(&p, &Realized, &SolverConfig { max_switches: Some(2), ..Default::default() }).unwrap();
        assert!((two.initial_values[Z.index()][0] - 1.2).abs() < 1e-12);
        let many = backward_sweep(&p, &Realized, &SolverConfig { max_switches: Some(4), ..Default::default() }).unwrap();
        assert!((many.initial_values[Z.index()][0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn non_finite_costs_abort_with_step() {
        let p = Line { running: vec![[1.0, 0.0], [f64::NAN, 0.0], [0.0, 0.0]], terminal: [0.0; 2], switch: [0.0; 2] };
        match backward_sweep(&p, &Realized, &SolverConfig::default()) {
            Err(Error::NonFinite { step }) => assert_eq!(step, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
