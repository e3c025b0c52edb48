//! Path-wise valuation and exposure of a fixed-vs-floating swap.
//!
//! Both legs share one schedule of `float_tenor` periods. Future floating
//! coupons are valued off G2++ bond prices, so the swap NPV is a function
//! of the simulated factors `(y, z)` at each grid date.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::YieldCurve;
use crate::dynamics::{BondCoefficients, G2Model, PathSet, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Pay fixed, receive floating.
    #[default]
    PayFixed,
    ReceiveFixed,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Self::PayFixed => 1.0,
            Self::ReceiveFixed => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::PayFixed => Self::ReceiveFixed,
            Self::ReceiveFixed => Self::PayFixed,
        }
    }
}

/// When the floating rate of a period is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fixing {
    /// Set at period end; while the period runs, the rate is the one
    /// currently observed for the remainder of the period.
    #[default]
    InArrears,
    /// Set at period start.
    InAdvance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapSpec {
    pub notional: f64,
    pub maturity: f64,
    pub float_tenor: f64,
    pub fixed_rate: f64,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub fixing: Fixing,
}

impl SwapSpec {
    /// Swap struck at the curve's par rate for its payment frequency.
    pub fn at_par(curve: &YieldCurve, notional: f64, maturity: f64, float_tenor: f64) -> Result<Self> {
        let freq = (1.0 / float_tenor).round();
        if (freq * float_tenor - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("tenor {float_tenor} is not 1/n years")));
        }
        Ok(Self {
            notional,
            maturity,
            float_tenor,
            fixed_rate: curve.par_swap_rate(maturity, freq as u32)?,
            direction: Direction::default(),
            fixing: Fixing::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.notional > 0.0 && self.notional.is_finite()) {
            return Err(Error::InvalidParameter(format!("notional {} must be > 0", self.notional)));
        }
        if !(self.float_tenor > 0.0 && self.maturity > 0.0) {
            return Err(Error::InvalidParameter("maturity and tenor must be positive".into()));
        }
        let n = self.maturity / self.float_tenor;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "maturity {} is not a multiple of tenor {}",
                self.maturity, self.float_tenor
            )));
        }
        if !self.fixed_rate.is_finite() {
            return Err(Error::InvalidParameter("non-finite fixed rate".into()));
        }
        Ok(())
    }

    fn n_periods(&self) -> usize {
        (self.maturity / self.float_tenor).round() as usize
    }
}

#[derive(Debug, Clone, Copy)]
struct Period {
    start_step: usize,
    end_step: usize,
    start: f64,
    end: f64,
}

/// Grid-aligned swap valuation under a fitted G2++ model.
#[derive(Debug, Clone)]
pub struct SwapPricer {
    spec: SwapSpec,
    model: G2Model,
    grid: TimeGrid,
    periods: Vec<Period>,
}

impl SwapPricer {
    pub fn new(spec: SwapSpec, model: G2Model, grid: TimeGrid) -> Result<Self> {
        spec.validate()?;
        if spec.maturity > grid.maturity() + 1e-9 {
            return Err(Error::GridMismatch(format!(
                "swap matures at {} after the grid horizon {}",
                spec.maturity,
                grid.maturity()
            )));
        }
        let periods = (0..spec.n_periods())
            .map(|k| {
                let start = k as f64 * spec.float_tenor;
                let end = (k + 1) as f64 * spec.float_tenor;
                Ok(Period { start_step: grid.step_of(start)?, end_step: grid.step_of(end)?, start, end })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, model, grid, periods })
    }

    pub fn spec(&self) -> &SwapSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// NPV at grid `step` for factor states `(y[p], z[p])`.
    ///
    /// `fixing_state` supplies the factors at an earlier step, needed only
    /// for periods fixed in advance and already running.
    pub fn npv_at(
        &self,
        step: usize,
        y: &[f64],
        z: &[f64],
        fixing_state: impl Fn(usize, usize) -> (f64, f64) + Sync,
    ) -> Result<Vec<f64>> {
        if step > self.grid.n_steps() {
            return Err(Error::InvalidParameter(format!("step {step} past the grid")));
        }
        if y.len() != z.len() {
            return Err(Error::GridMismatch("factor vectors differ in length".into()));
        }
        let t = self.grid.time(step);
        let tau = self.spec.float_tenor;
        let k = self.spec.fixed_rate;

        enum Leg {
            Forward { start: BondCoefficients, end: BondCoefficients },
            Arrears { end: BondCoefficients, remaining: f64 },
            Fixed { end: BondCoefficients, fixing: BondCoefficients, start_step: usize },
        }
        let mut legs = Vec::new();
        for p in self.periods.iter().filter(|p| p.end_step > step) {
            let end = self.model.bond_coefficients(t, p.end)?;
            let leg = if step <= p.start_step {
                Leg::Forward { start: self.model.bond_coefficients(t, p.start)?, end }
            } else {
                match self.spec.fixing {
                    Fixing::InArrears => Leg::Arrears { end, remaining: p.end - t },
                    Fixing::InAdvance => Leg::Fixed {
                        end,
                        fixing: self.model.bond_coefficients(p.start, p.end)?,
                        start_step: p.start_step,
                    },
                }
            };
            legs.push(leg);
        }

        let scale = self.spec.direction.sign() * self.spec.notional;
        Ok((0..y.len())
            .into_par_iter()
            .map(|i| {
                let (yi, zi) = (y[i], z[i]);
                let mut value = 0.0;
                for leg in &legs {
                    value += match leg {
                        Leg::Forward { start, end } => {
                            let pe = end.price(yi, zi);
                            start.price(yi, zi) - pe - tau * k * pe
                        }
                        Leg::Arrears { end, remaining } => {
                            let pe = end.price(yi, zi);
                            tau / remaining * (1.0 - pe) - tau * k * pe
                        }
                        Leg::Fixed { end, fixing, start_step } => {
                            let (ys, zs) = fixing_state(*start_step, i);
                            let rate = (1.0 / fixing.price(ys, zs) - 1.0) / tau;
                            end.price(yi, zi) * tau * (rate - k)
                        }
                    };
                }
                scale * value
            })
            .collect())
    }

    /// NPV matrix `(n_steps + 1, n_paths)` over a simulated path set.
    pub fn npv_matrix(&self, paths: &PathSet) -> Result<Array2<f64>> {
        if paths.grid != self.grid {
            return Err(Error::GridMismatch("path set simulated on a different grid".into()));
        }
        let n_paths = paths.n_paths();
        let mut npv = Array2::zeros((self.grid.len(), n_paths));
        for step in 0..self.grid.len() {
            let y = paths.y.row(step).to_vec();
            let z = paths.z.row(step).to_vec();
            let values = self.npv_at(step, &y, &z, |s, p| (paths.y[[s, p]], paths.z[[s, p]]))?;
            npv.row_mut(step).assign(&ndarray::Array1::from(values));
        }
        Ok(npv)
    }
}

/// Expected positive / negative exposure over surviving paths.
#[derive(Debug, Clone)]
pub struct ExposureProfile {
    pub times: Vec<f64>,
    pub npv: Array2<f64>,
    pub epe: Vec<f64>,
    /// Mean of `max(-NPV, 0)`, reported as a non-negative number.
    pub ene: Vec<f64>,
    pub mean_npv: Vec<f64>,
    pub alive: Vec<usize>,
}

impl ExposureProfile {
    /// Exposure CSV: `t,EPE,ENE,meanNPV`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "EPE", "ENE", "meanNPV"])?;
        for i in 0..self.times.len() {
            w.write_record(&[
                self.times[i].to_string(),
                self.epe[i].to_string(),
                self.ene[i].to_string(),
                self.mean_npv[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn exposure_profile(paths: &PathSet, pricer: &SwapPricer) -> Result<ExposureProfile> {
    if paths.n_paths() == 0 {
        return Err(Error::EmptyPathSet);
    }
    let npv = pricer.npv_matrix(paths)?;
    Ok(exposure_from_npv(paths, npv))
}

pub fn exposure_from_npv(paths: &PathSet, npv: Array2<f64>) -> ExposureProfile {
    let n = paths.grid.len();
    let (mut epe, mut ene, mut mean, mut alive) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0; n]);
    for step in 0..n {
        let (mut pos, mut neg, mut count) = (0.0, 0.0, 0usize);
        for (p, &v) in npv.row(step).iter().enumerate() {
            if paths.alive(step, p) {
                pos += v.max(0.0);
                neg += (-v).max(0.0);
                count += 1;
            }
        }
        if count > 0 {
            let c = count as f64;
            epe[step] = pos / c;
            ene[step] = neg / c;
            mean[step] = (pos - neg) / c;
        }
        alive[step] = count;
    }
    ExposureProfile { times: paths.grid.times().collect(), npv, epe, ene, mean_npv: mean, alive }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{build_curve, eur_2012_quotes};
    use crate::dynamics::G2Params;

    fn setup(params: G2Params, fixing: Fixing) -> (YieldCurve, SwapPricer) {
        let curve = build_curve(&eur_2012_quotes()).unwrap();
        let mut spec = SwapSpec::at_par(&curve, 1000.0, 1.0, 0.5).unwrap();
        spec.fixing = fixing;
        let model = G2Model::new(params, curve.clone()).unwrap();
        (curve, SwapPricer::new(spec, model, TimeGrid::new(252, 1.0).unwrap()).unwrap())
    }

    #[test]
    fn par_at_inception() {
        for fixing in [Fixing::InArrears, Fixing::InAdvance] {
            let (_, pricer) = setup(G2Params::eur_2012(), fixing);
            let v = pricer.npv_at(0, &[0.0], &[0.0], |_, _| (0.0, 0.0)).unwrap();
            assert!(v[0].abs() < 1e-10 * 1000.0, "{}", v[0]);
        }
    }

    #[test]
    fn deterministic_forward_swap_value() {
        let params = G2Params { sigma: 0.0, eta: 0.0, ..G2Params::eur_2012() };
        let (curve, pricer) = setup(params, Fixing::InAdvance);
        // at t = 0.25, deterministic rates: P(t, T) = df(T) / df(t)
        let step = 63;
        let t = 0.25;
        let df = |u: f64| curve.discount_factor(u).unwrap() / curve.discount_factor(t).unwrap();
        let k = pricer.spec().fixed_rate;
        let l1 = (curve.discount_factor(0.0).unwrap() / curve.discount_factor(0.5).unwrap() - 1.0) / 0.5;
        let expected = 1000.0 * (df(0.5) * 0.5 * (l1 - k) + (df(0.5) - df(1.0)) - 0.5 * k * df(1.0));
        let v = pricer.npv_at(step, &[0.0], &[0.0], |_, _| (0.0, 0.0)).unwrap();
        assert!((v[0] - expected).abs() < 1e-10, "{} vs {expected}", v[0]);
    }

    #[test]
    fn realized_rate_equal_to_strike_contributes_nothing() {
        let curve = YieldCurve::flat(0.02, 2.0).unwrap();
        let model = G2Model::new(G2Params { sigma: 0.0, eta: 0.0, ..G2Params::eur_2012() }, curve).unwrap();
        let grid = TimeGrid::new(4, 0.5).unwrap();
        let spec = SwapSpec {
            notional: 1000.0,
            maturity: 0.5,
            float_tenor: 0.5,
            fixed_rate: ((0.02f64 * 0.5).exp() - 1.0) / 0.5,
            direction: Direction::PayFixed,
            fixing: Fixing::InAdvance,
        };
        let pricer = SwapPricer::new(spec, model, grid).unwrap();
        for step in 0..=4 {
            let v = pricer.npv_at(step, &[0.0], &[0.0], |_, _| (0.0, 0.0)).unwrap();
            assert!(v[0].abs() < 1e-10);
        }
    }

    #[test]
    fn zero_after_last_payment_and_rejects_past_grid() {
        let (_, pricer) = setup(G2Params::eur_2012(), Fixing::InArrears);
        let v = pricer.npv_at(252, &[0.01, -0.02], &[0.0, 0.03], |_, _| (0.0, 0.0)).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        assert!(pricer.npv_at(253, &[0.0], &[0.0], |_, _| (0.0, 0.0)).is_err());
    }

    #[test]
    fn misaligned_schedule_is_rejected() {
        let curve = YieldCurve::flat(0.01, 2.0).unwrap();
        let spec = SwapSpec::at_par(&curve, 1.0, 1.0, 0.5).unwrap();
        let model = G2Model::new(G2Params::eur_2012(), curve).unwrap();
        assert!(SwapPricer::new(spec.clone(), model.clone(), TimeGrid::new(5, 1.0).unwrap()).is_err());
        assert!(SwapPricer::new(spec, model, TimeGrid::new(4, 0.5).unwrap()).is_err());
    }
}
