//! Brute-force reference for the switching solver on small lattices.
//!
//! A [`ToyProblem`] is a finite Markov chain with per-state costs. Its
//! optimal value is found three ways: the generic backward sweep with
//! exact transition averages, exhaustive enumeration of every Markov
//! switching rule, and a plain recursive search over the scenario tree.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{NextStepExpectation, Regime};
use crate::error::{Error, Result};
use crate::solver::{backward_sweep, SolverConfig, SwitchingProblem, ValueMode};

pub const MAX_STEPS: usize = 6;
pub const MAX_STATES: usize = 8;
/// Largest number of decision slots [`enumerate_policies`] accepts.
pub const MAX_DECISION_BITS: usize = 22;

/// Discrete switching problem. Step `n` has `running[n].len()` states for
/// `n < n_steps` and `terminal.len()` at maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyProblem {
    pub initial_state: usize,
    /// `transitions[n][s][s']`: probability of moving from `s` at step `n`
    /// to `s'` at step `n + 1`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `running[n][s] = [cost without collateral, cost with]`.
    pub running: Vec<Vec<[f64; 2]>>,
    pub terminal: Vec<[f64; 2]>,
    /// Cost of leaving each regime, `[from z, from zeta]`.
    pub switch_cost: [f64; 2],
}

impl ToyProblem {
    pub fn n_steps(&self) -> usize {
        self.transitions.len()
    }

    pub fn n_states(&self, step: usize) -> usize {
        if step < self.n_steps() {
            self.running[step].len()
        } else {
            self.terminal.len()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_steps();
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if n == 0 || n > MAX_STEPS {
            return bad(format!("toy problem needs 1..={MAX_STEPS} steps, got {n}"));
        }
        if self.running.len() != n {
            return bad(format!("{} running-cost rows for {n} steps", self.running.len()));
        }
        for step in 0..=n {
            let k = self.n_states(step);
            if k == 0 || k > MAX_STATES {
                return bad(format!("step {step} has {k} states (allowed 1..={MAX_STATES})"));
            }
        }
        if self.initial_state >= self.n_states(0) {
            return bad(format!("initial state {} out of range", self.initial_state));
        }
        for (step, matrix) in self.transitions.iter().enumerate() {
            if matrix.len() != self.n_states(step) {
                return bad(format!("transition matrix at step {step} has {} rows", matrix.len()));
            }
            for (s, row) in matrix.iter().enumerate() {
                if row.len() != self.n_states(step + 1) {
                    return bad(format!("transition row ({step}, {s}) has {} entries", row.len()));
                }
                if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return bad(format!("transition row ({step}, {s}) has a negative or non-finite entry"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return bad(format!("transition row ({step}, {s}) sums to {sum}"));
                }
            }
        }
        let costs = self.running.iter().flatten().chain(&self.terminal).flatten().chain(&self.switch_cost);
        if costs.into_iter().any(|c| !c.is_finite()) {
            return bad("non-finite cost".into());
        }
        if self.switch_cost.iter().any(|&c| c < 0.0) {
            return bad("switch costs must be >= 0".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Index of the decision slot `(step, state, regime)`.
    fn slot(&self, step: usize, state: usize, regime: Regime) -> usize {
        let before: usize = (0..step).map(|s| self.n_states(s)).sum();
        2 * (before + state) + regime.index()
    }

    /// Number of binary decisions a Markov rule makes.
    pub fn decision_bits(&self) -> usize {
        2 * (0..self.n_steps()).map(|s| self.n_states(s)).sum::<usize>()
    }
}

impl SwitchingProblem for ToyProblem {
    fn n_steps(&self) -> usize {
        self.transitions.len()
    }

    fn n_items(&self, step: usize) -> usize {
        self.n_states(step)
    }

    fn running(&self, step: usize, item: usize, regime: Regime) -> f64 {
        self.running[step][item][regime.index()]
    }

    fn terminal(&self, item: usize, regime: Regime) -> f64 {
        self.terminal[item][regime.index()]
    }

    fn switch_cost(&self, _step: usize, from: Regime) -> f64 {
        self.switch_cost[from.index()]
    }
}

/// Exact conditional expectation on the lattice.
pub struct ExactExpectation<'a>(pub &'a ToyProblem);

impl NextStepExpectation for ExactExpectation<'_> {
    fn expect_next(&self, step: usize, _regime: Regime, next: &[f64]) -> Result<Vec<f64>> {
        let matrix = &self.0.transitions[step];
        if matrix.first().is_some_and(|row| row.len() != next.len()) {
            return Err(Error::GridMismatch(format!("{} next values at step {step}", next.len())));
        }
        Ok(matrix.iter().map(|row| row.iter().zip(next).map(|(p, v)| p * v).sum()).collect())
    }
}

/// Optimal value by the generic backward sweep with exact expectations.
pub fn solve_exact(problem: &ToyProblem, initial: Regime) -> Result<f64> {
    problem.validate()?;
    let cfg = SolverConfig { mode: ValueMode::Expected, max_switches: None };
    let out = backward_sweep(problem, &ExactExpectation(problem), &cfg)?;
    Ok(out.initial_values[initial.index()][problem.initial_state])
}

/// A Markov switching rule: one bit per `(step, state, regime)`; at most
/// one switch is made per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkovPolicy(pub u64);

impl MarkovPolicy {
    pub fn switches(self, problem: &ToyProblem, step: usize, state: usize, regime: Regime) -> bool {
        self.0 >> problem.slot(step, state, regime) & 1 == 1
    }
}

/// Expected cost of following `policy` from `(initial_state, initial)`.
pub fn evaluate_policy(problem: &ToyProblem, policy: MarkovPolicy, initial: Regime) -> f64 {
    let n = problem.n_steps();
    // after[s][regime]: cost from the start of a step with the regime
    // already chosen; before: prior to the decision
    let mut before: Vec<[f64; 2]> = problem.terminal.clone();
    for step in (0..n).rev() {
        let matrix = &problem.transitions[step];
        let after: Vec<[f64; 2]> = (0..problem.n_states(step))
            .map(|s| {
                Regime::BOTH.map(|z| {
                    let future: f64 = matrix[s].iter().zip(&before).map(|(p, v)| p * v[z.index()]).sum();
                    problem.running[step][s][z.index()] + future
                })
            })
            .collect();
        before = after
            .iter()
            .enumerate()
            .map(|(s, held)| {
                Regime::BOTH.map(|z| {
                    if policy.switches(problem, step, s, z) {
                        problem.switch_cost[z.index()] + held[z.other().index()]
                    } else {
                        held[z.index()]
                    }
                })
            })
            .collect();
    }
    before[problem.initial_state][initial.index()]
}

/// Best Markov rule found by exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Enumeration {
    pub value: f64,
    pub policy: MarkovPolicy,
    pub evaluated: u64,
}

/// Evaluates every Markov switching rule and returns the cheapest (lowest
/// index on ties).
pub fn enumerate_policies(problem: &ToyProblem, initial: Regime) -> Result<Enumeration> {
    problem.validate()?;
    let bits = problem.decision_bits();
    if bits > MAX_DECISION_BITS {
        return Err(Error::TooLarge(format!("{bits} decision bits (limit {MAX_DECISION_BITS})")));
    }
    let count = 1u64 << bits;
    let (value, index) = (0..count)
        .into_par_iter()
        .map(|i| (evaluate_policy(problem, MarkovPolicy(i), initial), i))
        .reduce(|| (f64::INFINITY, u64::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    Ok(Enumeration { value, policy: MarkovPolicy(index), evaluated: count })
}

/// Recursive search over the full scenario tree, choosing at every node
/// whether to switch once before the step's cost accrues.
pub fn tree_search(problem: &ToyProblem, initial: Regime) -> Result<f64> {
    problem.validate()?;
    fn node(p: &ToyProblem, step: usize, state: usize, regime: Regime) -> f64 {
        if step == p.n_steps() {
            return p.terminal[state][regime.index()];
        }
        let hold = |z: Regime| {
            let mut acc = p.running[step][state][z.index()];
            for (next, &prob) in p.transitions[step][state].iter().enumerate() {
                if prob > 0.0 {
                    acc += prob * node(p, step + 1, next, z);
                }
            }
            acc
        };
        let stay = hold(regime);
        let switch = p.switch_cost[regime.index()] + hold(regime.other());
        stay.min(switch)
    }
    Ok(node(problem, 0, problem.initial_state, initial))
}

/// Random toy problem with up to four steps and three states per step,
/// small enough for [`enumerate_policies`] (at most 16 decision bits).
pub fn random_problem<R: Rng + ?Sized>(rng: &mut R) -> ToyProblem {
    loop {
        let n = rng.random_range(1..=4);
        let states: Vec<usize> = (0..=n).map(|_| rng.random_range(1..=3)).collect();
        let bits = 2 * states[..n].iter().sum::<usize>();
        if bits > 16 {
            continue;
        }
        let transitions = (0..n)
            .map(|step| {
                (0..states[step])
                    .map(|_| {
                        let w: Vec<f64> = (0..states[step + 1]).map(|_| rng.random_range(0.05..1.0)).collect();
                        let total: f64 = w.iter().sum();
                        let mut row: Vec<f64> = w.iter().map(|x| x / total).collect();
                        let head: f64 = row[..row.len() - 1].iter().sum();
                        *row.last_mut().unwrap() = 1.0 - head;
                        row
                    })
                    .collect()
            })
            .collect();
        let mut cost = |_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let running = (0..n).map(|step| (0..states[step]).map(&mut cost).collect()).collect();
        let terminal = (0..states[n]).map(&mut cost).collect();
        let switch_cost = if rng.random_bool(0.25) {
            [0.0, 0.0]
        } else {
            [rng.random_range(0.0..0.3), rng.random_range(0.0..0.3)]
        };
        return ToyProblem {
            initial_state: rng.random_range(0..states[0]),
            transitions,
            running,
            terminal,
            switch_cost,
        };
    }
}
