//! CIR default intensity and Cox-process default times.

use ndarray::Array2;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::g2pp::rate_shocks;
use super::TimeGrid;
use crate::error::{Error, Result};
use crate::rng::{path_stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    /// Mean-reversion speed.
    pub kappa: f64,
    /// Long-run mean.
    pub gamma: f64,
    /// Volatility of the intensity.
    pub upsilon: f64,
    pub lambda0: f64,
}

impl CirParams {
    /// Senior bank name calibrated to CDS spreads of 2012-06-15.
    pub fn low() -> Self {
        Self { kappa: 1.03921, gamma: 0.02120, upsilon: 0.20122, lambda0: 0.04031 }
    }

    /// Subordinated bank name calibrated to CDS spreads of 2012-06-15.
    pub fn high() -> Self {
        Self { kappa: 0.30821, gamma: 0.11220, upsilon: 0.44214, lambda0: 0.20316 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa", self.kappa), ("gamma", self.gamma), ("upsilon", self.upsilon)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("CIR {name} = {v} must be >= 0")));
            }
        }
        if !self.lambda0.is_finite() || self.lambda0 < 0.0 {
            return Err(Error::InvalidParameter(format!("CIR lambda0 = {} must be >= 0", self.lambda0)));
        }
        Ok(())
    }

    /// `2 kappa gamma >= upsilon^2`. Violations are allowed (the truncated
    /// scheme stays non-negative) but worth reporting.
    pub fn feller_satisfied(&self) -> bool {
        2.0 * self.kappa * self.gamma >= self.upsilon * self.upsilon
    }

    /// `E[lambda_t] = gamma + (lambda0 - gamma) e^{-kappa t}`.
    pub fn mean(&self, t: f64) -> f64 {
        self.gamma + (self.lambda0 - self.gamma) * (-self.kappa * t).exp()
    }

    /// `Var[lambda_t]`.
    pub fn variance(&self, t: f64) -> f64 {
        let k = self.kappa;
        if k == 0.0 {
            return self.upsilon * self.upsilon * self.lambda0 * t;
        }
        let e = (-k * t).exp();
        self.upsilon * self.upsilon / k
            * (self.lambda0 * (e - e * e) + 0.5 * self.gamma * (1.0 - e) * (1.0 - e))
    }
}

#[derive(Debug, Clone)]
pub struct IntensityPaths {
    /// Non-negative intensity, shape `(n_steps + 1, n_paths)`.
    pub intensity: Array2<f64>,
    /// Trapezoidal running integral of the intensity.
    pub cum_hazard: Array2<f64>,
}

/// Full-truncation Euler.
///
/// `rate_corr` correlates the intensity shock with the first rate-factor
/// shock; the latter is replayed from that factor's own stream so both
/// simulations stay independent calls.
pub fn simulate_cir(
    params: &CirParams,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    rate_corr: f64,
) -> Result<IntensityPaths> {
    params.validate()?;
    if n_paths == 0 {
        return Err(Error::EmptyPathSet);
    }
    if !(rate_corr.is_finite() && rate_corr.abs() <= 1.0) {
        return Err(Error::InvalidParameter(format!("rate/intensity correlation {rate_corr}")));
    }
    let n = grid.len();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let ortho = (1.0 - rate_corr * rate_corr).sqrt();

    let columns: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_stream(seed, path, Purpose::Intensity);
            let mut rate = (rate_corr != 0.0).then(|| rate_shocks(seed, path));
            let mut lam = vec![0.0; n];
            let mut cum = vec![0.0; n];
            let mut state = params.lambda0;
            lam[0] = state;
            for i in 1..n {
                let own: f64 = StandardNormal.sample(&mut rng);
                let w = match rate.as_mut() {
                    Some(draw) => rate_corr * draw().0 + ortho * own,
                    None => own,
                };
                let pos = state.max(0.0);
                state += params.kappa * (params.gamma - pos) * dt + params.upsilon * pos.sqrt() * sqrt_dt * w;
                lam[i] = state.max(0.0);
                cum[i] = cum[i - 1] + 0.5 * (lam[i - 1] + lam[i]) * dt;
            }
            (lam, cum)
        })
        .collect();

    let mut intensity = Array2::zeros((n, n_paths));
    let mut cum_hazard = Array2::zeros((n, n_paths));
    for (p, (lam, cum)) in columns.into_iter().enumerate() {
        intensity.column_mut(p).assign(&ndarray::Array1::from(lam));
        cum_hazard.column_mut(p).assign(&ndarray::Array1::from(cum));
    }
    Ok(IntensityPaths { intensity, cum_hazard })
}

/// First grid index where the cumulated hazard reaches an independent unit
/// exponential draw, per path.
pub fn sample_default_times(cum_hazard: &Array2<f64>, seed: u64) -> Vec<Option<usize>> {
    (0..cum_hazard.ncols())
        .into_par_iter()
        .map(|path| {
            let mut rng = path_stream(seed, path, Purpose::DefaultClock);
            let xi: f64 = Exp1.sample(&mut rng);
            cum_hazard.column(path).iter().position(|&h| h >= xi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_limit_matches_closed_form() {
        let p = CirParams { upsilon: 0.0, ..CirParams::low() };
        let grid = TimeGrid::new(252, 1.0).unwrap();
        let sim = simulate_cir(&p, &grid, 3, 1, 0.0).unwrap();
        for (i, t) in grid.times().enumerate() {
            for v in sim.intensity.row(i) {
                assert!((v - p.mean(t)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn constant_at_long_run_mean() {
        let p = CirParams { kappa: 0.7, gamma: 0.05, upsilon: 0.0, lambda0: 0.05 };
        let grid = TimeGrid::new(50, 1.0).unwrap();
        let sim = simulate_cir(&p, &grid, 2, 9, 0.0).unwrap();
        assert!(sim.intensity.iter().all(|&v| (v - 0.05).abs() < 1e-15));
        let last = sim.cum_hazard.row(50);
        assert!(last.iter().all(|&h| (h - 0.05).abs() < 1e-12));
    }

    #[test]
    fn feller() {
        assert!(CirParams::low().feller_satisfied() == (2.0 * 1.03921 * 0.02120 >= 0.20122f64.powi(2)));
        assert!(!CirParams::high().feller_satisfied());
    }

    #[test]
    fn zero_hazard_never_defaults() {
        let cum = Array2::zeros((10, 50));
        assert!(sample_default_times(&cum, 3).iter().all(Option::is_none));
    }

    #[test]
    fn rejects_bad_params() {
        let grid = TimeGrid::new(10, 1.0).unwrap();
        let bad = CirParams { lambda0: -0.01, ..CirParams::low() };
        assert!(simulate_cir(&bad, &grid, 5, 0, 0.0).is_err());
        assert!(simulate_cir(&CirParams::low(), &grid, 0, 0, 0.0).is_err());
        assert!(simulate_cir(&CirParams::low(), &grid, 5, 0, 1.5).is_err());
    }
}
