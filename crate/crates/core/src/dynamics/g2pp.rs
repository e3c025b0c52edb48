//! Shifted two-factor Gaussian short rate, `r = y + z + phi(t)`.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TimeGrid;
use crate::curve::YieldCurve;
use crate::error::{Error, Result};
use crate::rng::{path_stream, Purpose};

/// Drift of the second factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecondFactorDrift {
    /// `dz = -nu z dt + eta dW2`.
    #[default]
    MeanReverting,
    /// `dz = -nu y dt + eta dW2`, a cross-coupled variant kept for
    /// comparison. Simulated by Euler; bond prices still use the standard model.
    CrossCoupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Params {
    /// Mean reversion of `y`.
    pub mu: f64,
    /// Mean reversion of `z`.
    pub nu: f64,
    /// Volatility of `y`.
    pub sigma: f64,
    /// Volatility of `z`.
    pub eta: f64,
    /// Correlation of the two factor shocks.
    pub rho: f64,
    #[serde(default)]
    pub z_drift: SecondFactorDrift,
}

impl G2Params {
    /// Calibrated EUR parameters (cap volatilities, 2012-06-15).
    pub fn eur_2012() -> Self {
        Self {
            mu: 0.00013,
            nu: 0.06730,
            sigma: 0.12924,
            eta: 0.14014,
            rho: -0.99948,
            z_drift: SecondFactorDrift::MeanReverting,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu", self.mu), ("nu", self.nu), ("sigma", self.sigma), ("eta", self.eta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("G2++ {name} = {v} must be >= 0")));
            }
        }
        if !(self.rho.is_finite() && self.rho.abs() <= 1.0) {
            return Err(Error::InvalidParameter(format!("G2++ rho = {} outside [-1, 1]", self.rho)));
        }
        Ok(())
    }

    /// Variance of `int_t^{t+tau} (y + z) du` given the factors at `t`.
    pub fn integrated_variance(&self, tau: f64) -> f64 {
        let (a, b) = (self.mu, self.nu);
        self.sigma * self.sigma * loading_product_integral(a, a, tau)
            + self.eta * self.eta * loading_product_integral(b, b, tau)
            + 2.0 * self.rho * self.sigma * self.eta * loading_product_integral(a, b, tau)
    }
}

/// `(1 - exp(-a t)) / a`, with the `a -> 0` limit `t`.
pub fn loading(a: f64, t: f64) -> f64 {
    let x = a * t;
    if x.abs() < 1e-300 {
        t
    } else {
        -(-x).exp_m1() / a
    }
}

/// `int_0^tau loading(a, s) loading(b, s) ds`.
///
/// The closed form cancels catastrophically for small mean reversions, so
/// this integrates the (entire) integrand with composite Gauss-Legendre.
fn loading_product_integral(a: f64, b: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let panels = (tau * a.max(b).max(1.0)).ceil().max(1.0) as usize;
    let h = tau / panels as f64;
    let (nodes, weights) = gauss_legendre_16();
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in nodes.iter().zip(weights) {
            let s = mid + 0.5 * h * x;
            total += w * loading(a, s) * loading(b, s);
        }
    }
    0.5 * h * total
}

fn gauss_legendre_16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Nodes and weights on `[-1, 1]` via Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// G2++ fitted to an initial curve: deterministic shift and bond prices.
#[derive(Debug, Clone)]
pub struct G2Model {
    pub params: G2Params,
    pub curve: YieldCurve,
}

impl G2Model {
    pub fn new(params: G2Params, curve: YieldCurve) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, curve })
    }

    /// Shift that makes model bond prices match the curve at time zero.
    pub fn phi(&self, t: f64) -> Result<f64> {
        let p = &self.params;
        let (by, bz) = (loading(p.mu, t), loading(p.nu, t));
        Ok(self.curve.forward_rate(t)?
            + 0.5 * p.sigma * p.sigma * by * by
            + 0.5 * p.eta * p.eta * bz * bz
            + p.rho * p.sigma * p.eta * by * bz)
    }

    /// `int_0^t phi(s) ds = -ln P(0, t) + V(0, t) / 2`.
    pub fn phi_integral(&self, t: f64) -> Result<f64> {
        Ok(self.curve.integrated_forward(t)? + 0.5 * self.params.integrated_variance(t))
    }

    /// Zero-coupon bond `P(t, maturity)` given the factors `(y, z)` at `t`.
    pub fn zero_coupon(&self, t: f64, maturity: f64, y: f64, z: f64) -> Result<f64> {
        Ok(self.bond_coefficients(t, maturity)?.price(y, z))
    }

    /// State-independent part of `P(t, T)`, reusable across paths.
    pub fn bond_coefficients(&self, t: f64, maturity: f64) -> Result<BondCoefficients> {
        if maturity < t {
            return Err(Error::InvalidParameter(format!("bond maturity {maturity} before t = {t}")));
        }
        let p = &self.params;
        let tau = maturity - t;
        let v = |s: f64| p.integrated_variance(s);
        let ratio = self.curve.discount_factor(maturity)? / self.curve.discount_factor(t)?;
        Ok(BondCoefficients {
            scale: ratio * (0.5 * (v(tau) - v(maturity) + v(t))).exp(),
            y_loading: loading(p.mu, tau),
            z_loading: loading(p.nu, tau),
        })
    }
}

/// `P(t, T) = scale * exp(-y_loading * y - z_loading * z)`.
#[derive(Debug, Clone, Copy)]
pub struct BondCoefficients {
    pub scale: f64,
    pub y_loading: f64,
    pub z_loading: f64,
}

impl BondCoefficients {
    #[inline]
    pub fn price(&self, y: f64, z: f64) -> f64 {
        self.scale * (-self.y_loading * y - self.z_loading * z).exp()
    }
}

/// Shift sampled on the grid.
pub fn fit_phi(model: &G2Model, grid: &TimeGrid) -> Result<Vec<f64>> {
    if model.curve.last_time() + 1e-9 < grid.maturity() {
        return Err(Error::GridMismatch(format!(
            "curve ends at {} before grid horizon {}",
            model.curve.last_time(),
            grid.maturity()
        )));
    }
    grid.times().map(|t| model.phi(t)).collect()
}

/// Simulated factor matrices, shape `(n_steps + 1, n_paths)`.
#[derive(Debug, Clone)]
pub struct FactorPaths {
    pub y: Array2<f64>,
    pub z: Array2<f64>,
    pub short_rate: Array2<f64>,
}

/// Draws the per-step standard normals `(n1, n2)` of the rate factors.
pub(crate) fn rate_shocks(seed: u64, path: usize) -> impl FnMut() -> (f64, f64) {
    let mut rng = path_stream(seed, path, Purpose::RateFactors);
    move || {
        let n1: f64 = StandardNormal.sample(&mut rng);
        let n2: f64 = StandardNormal.sample(&mut rng);
        (n1, n2)
    }
}

/// Exact Ornstein-Uhlenbeck transitions for both factors, starting at zero.
pub fn simulate_g2pp(
    params: &G2Params,
    phi: &[f64],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<FactorPaths> {
    params.validate()?;
    if n_paths == 0 {
        return Err(Error::EmptyPathSet);
    }
    if phi.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "phi has {} samples for a grid of {} points",
            phi.len(),
            grid.len()
        )));
    }
    let dt = grid.dt();
    let (mu, nu) = (params.mu, params.nu);
    let decay_y = (-mu * dt).exp();
    let decay_z = (-nu * dt).exp();
    let sd_y = (params.sigma * params.sigma * loading(2.0 * mu, dt)).sqrt();
    let sd_z = (params.eta * params.eta * loading(2.0 * nu, dt)).sqrt();
    let cov = params.rho * params.sigma * params.eta * loading(mu + nu, dt);
    let corr = if sd_y > 0.0 && sd_z > 0.0 { (cov / (sd_y * sd_z)).clamp(-1.0, 1.0) } else { 0.0 };
    let ortho = (1.0 - corr * corr).max(0.0).sqrt();
    // Euler coefficients for the cross-coupled variant
    let sqrt_dt = dt.sqrt();
    let rho_ortho = (1.0 - params.rho * params.rho).max(0.0).sqrt();

    let n = grid.len();
    let columns: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut shocks = rate_shocks(seed, path);
            let mut ys = vec![0.0; n];
            let mut zs = vec![0.0; n];
            for i in 1..n {
                let (n1, n2) = shocks();
                ys[i] = ys[i - 1] * decay_y + sd_y * n1;
                zs[i] = match params.z_drift {
                    SecondFactorDrift::MeanReverting => zs[i - 1] * decay_z + sd_z * (corr * n1 + ortho * n2),
                    SecondFactorDrift::CrossCoupled => {
                        zs[i - 1] - nu * ys[i - 1] * dt
                            + params.eta * sqrt_dt * (params.rho * n1 + rho_ortho * n2)
                    }
                };
            }
            (ys, zs)
        })
        .collect();

    let mut y = Array2::zeros((n, n_paths));
    let mut z = Array2::zeros((n, n_paths));
    for (p, (ys, zs)) in columns.into_iter().enumerate() {
        y.column_mut(p).assign(&ndarray::Array1::from(ys));
        z.column_mut(p).assign(&ndarray::Array1::from(zs));
    }
    let mut short_rate = &y + &z;
    for (mut row, &shift) in short_rate.rows_mut().into_iter().zip(phi) {
        row += shift;
    }
    Ok(FactorPaths { y, z, short_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        let sum: f64 = w.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        let x30: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((x30 - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn loading_limits() {
        assert_eq!(loading(0.0, 2.0), 2.0);
        assert!((loading(1e-10, 2.0) - 2.0).abs() < 1e-9);
        assert!((loading(0.5, 2.0) - (1.0 - (-1.0f64).exp()) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn variance_matches_closed_form_for_moderate_speeds() {
        let p = G2Params { mu: 0.4, nu: 0.9, sigma: 0.01, eta: 0.02, rho: -0.5, ..G2Params::eur_2012() };
        let tau: f64 = 3.0;
        let (a, b) = (p.mu, p.nu);
        let one = |a: f64| (tau + 2.0 / a * (-a * tau).exp() - 0.5 / a * (-2.0 * a * tau).exp() - 1.5 / a) / (a * a);
        let cross = (tau + ((-a * tau).exp() - 1.0) / a + ((-b * tau).exp() - 1.0) / b
            - ((-(a + b) * tau).exp() - 1.0) / (a + b))
            / (a * b);
        let expected = p.sigma.powi(2) * one(a) + p.eta.powi(2) * one(b) + 2.0 * p.rho * p.sigma * p.eta * cross;
        assert!((p.integrated_variance(tau) - expected).abs() < 1e-15 * expected.abs().max(1e-10) * 1e3);
    }

    #[test]
    fn zero_speed_limit() {
        // Brownian factors: Var(int_0^t W) = t^3 / 3
        let p = G2Params { mu: 0.0, nu: 0.0, sigma: 1.0, eta: 0.0, rho: 0.0, ..G2Params::eur_2012() };
        assert!((p.integrated_variance(2.0) - 8.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn flat_curve_zero_vol_phi_is_flat() {
        let p = G2Params { sigma: 0.0, eta: 0.0, ..G2Params::eur_2012() };
        let model = G2Model::new(p, YieldCurve::flat(0.025, 2.0).unwrap()).unwrap();
        let grid = TimeGrid::new(12, 1.0).unwrap();
        for v in fit_phi(&model, &grid).unwrap() {
            assert!((v - 0.025).abs() < 1e-14);
        }
    }

    #[test]
    fn bond_price_reprices_curve_at_origin() {
        let curve = crate::curve::build_curve(&crate::curve::eur_2012_quotes()).unwrap();
        let model = G2Model::new(G2Params::eur_2012(), curve.clone()).unwrap();
        for t in [0.25, 0.5, 1.0, 5.0] {
            let p = model.zero_coupon(0.0, t, 0.0, 0.0).unwrap();
            assert!((p - curve.discount_factor(t).unwrap()).abs() < 1e-14);
        }
        assert!((model.zero_coupon(0.7, 0.7, 0.1, -0.2).unwrap() - 1.0).abs() < 1e-15);
    }
}
