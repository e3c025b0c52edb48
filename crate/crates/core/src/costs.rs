//! Cost processes of the two collateral regimes.
//!
//! Without collateral the party carries bilateral CVA; the running cost is
//! the squared distance of the BCVA process from a target `delta`. Under
//! full collateral it carries funding/opportunity costs on the posted or
//! received collateral, net of the collateral itself, again squared.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dynamics::PathSet;
use crate::error::{Error, Result};

/// Collateral regime of the contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// No collateral: exposed to counterparty default (`z = 1`).
    Uncollateralized,
    /// Perfect collateral: no credit exposure (`zeta = 1`).
    Collateralized,
}

impl Regime {
    pub const BOTH: [Regime; 2] = [Regime::Uncollateralized, Regime::Collateralized];

    pub fn other(self) -> Self {
        match self {
            Self::Uncollateralized => Self::Collateralized,
            Self::Collateralized => Self::Uncollateralized,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Self::Uncollateralized => 0,
            Self::Collateralized => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Self::Uncollateralized
        } else {
            Self::Collateralized
        }
    }

    /// Indicator `z`: 1 without collateral, 0 with.
    pub fn z(self) -> u8 {
        match self {
            Self::Uncollateralized => 1,
            Self::Collateralized => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Uncollateralized => "z",
            Self::Collateralized => "zeta",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "z" | "uncollateralized" | "zero-collateral" | "cva" => Ok(Self::Uncollateralized),
            "zeta" | "collateralized" | "full-collateral" | "coll" => Ok(Self::Collateralized),
            other => Err(Error::Parse(format!("unknown regime `{other}`"))),
        }
    }
}

/// Contract-level economics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub r_free: f64,
    pub r_borr: f64,
    pub r_opp: f64,
    /// Recovery rate on default.
    pub recovery: f64,
    /// Cost of switching from no collateral to full collateral.
    pub c_z: f64,
    /// Cost of switching from full collateral to no collateral.
    pub c_zeta: f64,
    pub delta: f64,
    pub notional: f64,
    /// Use `(1 - R)(E[NPV+] - E[NPV-])` instead of `(1 - R) E[NPV]` in the
    /// BCVA increment.
    pub split_epe_ene: bool,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            r_free: 0.0,
            r_borr: 0.01,
            r_opp: 0.03,
            recovery: 0.4,
            c_z: 0.0,
            c_zeta: 0.0,
            delta: 0.0,
            notional: 1000.0,
            split_epe_ene: false,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.r_free,
            self.r_borr,
            self.r_opp,
            self.recovery,
            self.c_z,
            self.c_zeta,
            self.delta,
            self.notional,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite cost parameter".into()));
        }
        if !(0.0..=1.0).contains(&self.recovery) {
            return Err(Error::InvalidParameter(format!("recovery {} outside [0, 1]", self.recovery)));
        }
        if self.c_z < 0.0 || self.c_zeta < 0.0 {
            return Err(Error::InvalidParameter("switching costs must be >= 0".into()));
        }
        if self.r_borr < self.r_free || self.r_opp < self.r_free {
            return Err(Error::InvalidParameter("borrowing and opportunity rates must be >= r_free".into()));
        }
        Ok(())
    }

    /// Switching costs above 2% of notional are outside the range the
    /// parametrisation was designed for; allowed, but flagged.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, c) in [("c_z", self.c_z), ("c_zeta", self.c_zeta)] {
            if c > 0.02 * self.notional {
                out.push(format!("{name} = {c} exceeds 2% of notional"));
            }
        }
        out
    }
}

/// Source of `E[X_{i+1} | F_{t_i}]` for the cost recursions.
pub trait NextStepExpectation {
    /// Conditional expectation, for every path alive at `step`, of
    /// `next[p]` (values at `step + 1`). Entries of dead paths are ignored.
    fn expect_next(&self, step: usize, regime: Regime, next: &[f64]) -> Result<Vec<f64>>;
}

/// Uses the realised next-step value as its own expectation; exact for
/// deterministic inputs.
pub struct Realized;

impl NextStepExpectation for Realized {
    fn expect_next(&self, _step: usize, _regime: Regime, next: &[f64]) -> Result<Vec<f64>> {
        Ok(next.to_vec())
    }
}

/// Per-step, per-path cost state of both regimes.
#[derive(Debug, Clone)]
pub struct RegimeCostPaths {
    pub bcva: Array2<f64>,
    pub coll_cost: Array2<f64>,
}

impl RegimeCostPaths {
    pub fn state(&self, regime: Regime) -> &Array2<f64> {
        match regime {
            Regime::Uncollateralized => &self.bcva,
            Regime::Collateralized => &self.coll_cost,
        }
    }

    /// Debug dump: `step,path,bcva,coll_cost`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "path", "bcva", "coll_cost"])?;
        for ((step, path), b) in self.bcva.indexed_iter() {
            w.write_record(&[
                step.to_string(),
                path.to_string(),
                b.to_string(),
                self.coll_cost[[step, path]].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_shape(paths: &PathSet, npv: &Array2<f64>) -> Result<()> {
    let expected = (paths.grid.len(), paths.n_paths());
    if npv.dim() != expected {
        return Err(Error::GridMismatch(format!("NPV matrix {:?} vs path set {expected:?}", npv.dim())));
    }
    Ok(())
}

/// Backward BCVA accumulation:
/// `BCVA_i = (1 - R) E[NPV_{i+1} | F_i] (Lambda_{i+1} - Lambda_i) + BCVA_{i+1}`,
/// zero at maturity and from the default step on.
pub fn bcva_paths(
    paths: &PathSet,
    npv: &Array2<f64>,
    cfg: &CostConfig,
    expectation: &impl NextStepExpectation,
) -> Result<Array2<f64>> {
    check_shape(paths, npv)?;
    let (n, m) = npv.dim();
    let lgd = 1.0 - cfg.recovery;
    let mut bcva = Array2::zeros((n, m));
    if lgd == 0.0 {
        return Ok(bcva);
    }
    for i in (0..n - 1).rev() {
        let next = npv.row(i + 1).to_vec();
        let exposure = if cfg.split_epe_ene {
            let pos: Vec<f64> = next.iter().map(|v| v.max(0.0)).collect();
            let neg: Vec<f64> = next.iter().map(|v| (-v).max(0.0)).collect();
            let ep = expectation.expect_next(i, Regime::Uncollateralized, &pos)?;
            let en = expectation.expect_next(i, Regime::Uncollateralized, &neg)?;
            ep.iter().zip(&en).map(|(a, b)| a - b).collect()
        } else {
            expectation.expect_next(i, Regime::Uncollateralized, &next)?
        };
        for p in 0..m {
            if paths.alive(i, p) {
                let hazard = paths.cum_hazard[[i + 1, p]] - paths.cum_hazard[[i, p]];
                bcva[[i, p]] = lgd * exposure[p] * hazard + bcva[[i + 1, p]];
            }
        }
    }
    Ok(bcva)
}

/// Collateral cost: backward funding accumulation
/// `F_i = [(r_opp - r) E+ + (r_borr - r) E-] dt + F_{i+1}` with
/// `E = E[NPV_{i+1} | F_i]`, net of the collateral held, `Coll_i = F_i - NPV_i`.
pub fn coll_cost_paths(
    paths: &PathSet,
    npv: &Array2<f64>,
    cfg: &CostConfig,
    expectation: &impl NextStepExpectation,
) -> Result<Array2<f64>> {
    check_shape(paths, npv)?;
    let (n, m) = npv.dim();
    let dt = paths.grid.dt();
    let opp = cfg.r_opp - cfg.r_free;
    let borr = cfg.r_borr - cfg.r_free;
    let mut funding = Array2::<f64>::zeros((n, m));
    for i in (0..n - 1).rev() {
        let next = npv.row(i + 1).to_vec();
        let expected = if opp == 0.0 && borr == 0.0 {
            vec![0.0; m]
        } else {
            expectation.expect_next(i, Regime::Collateralized, &next)?
        };
        for p in 0..m {
            if paths.alive(i, p) {
                let e = expected[p];
                funding[[i, p]] = (opp * e.max(0.0) + borr * (-e).max(0.0)) * dt + funding[[i + 1, p]];
            }
        }
    }
    let mut coll = funding - npv;
    for ((i, p), v) in coll.indexed_iter_mut() {
        if !paths.alive(i, p) {
            *v = 0.0;
        }
    }
    Ok(coll)
}

pub fn regime_cost_paths(
    paths: &PathSet,
    npv: &Array2<f64>,
    cfg: &CostConfig,
    expectation: &impl NextStepExpectation,
) -> Result<RegimeCostPaths> {
    cfg.validate()?;
    Ok(RegimeCostPaths {
        bcva: bcva_paths(paths, npv, cfg, expectation)?,
        coll_cost: coll_cost_paths(paths, npv, cfg, expectation)?,
    })
}

/// Running cost density (per unit time) in `regime`.
pub fn running_cost(regime: Regime, costs: &RegimeCostPaths, step: usize, path: usize, cfg: &CostConfig) -> f64 {
    let x = costs.state(regime)[[step, path]];
    (x - cfg.delta).powi(2)
}

/// Reward at maturity given the regime held into maturity.
pub fn terminal_reward(regime: Regime, npv_at_maturity: f64, cfg: &CostConfig) -> f64 {
    match regime {
        Regime::Collateralized => (-npv_at_maturity - cfg.delta).powi(2),
        Regime::Uncollateralized => cfg.delta * cfg.delta,
    }
}

/// Discounted cost of leaving `from` at time `t`.
pub fn switch_cost(from: Regime, t: f64, cfg: &CostConfig) -> f64 {
    let c = match from {
        Regime::Uncollateralized => cfg.c_z,
        Regime::Collateralized => cfg.c_zeta,
    };
    (-cfg.r_free * t).exp() * c
}
