//! Initial term structure.
//!
//! A [`YieldCurve`] is a set of `(t, df)` pillars with an implicit
//! `(0, 1)` anchor, interpolated log-linearly in the discount factor.
//! Curves are built from [`MarketQuote`]s: a quote's own discount factor
//! is used verbatim when supplied, otherwise it is derived from the rate
//! according to the quote kind.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when matching times against pillars and schedules.
const TIME_EPS: f64 = 1e-9;

/// Quote convention of a curve pillar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuoteKind {
    /// Simply compounded deposit rate, ACT/360 accrual.
    MoneyMarket,
    /// Par rate of a swap with an annual 30/360 fixed leg.
    ParSwap,
    /// Annually compounded zero rate, `df = (1 + r)^-t`.
    Spot,
}

impl std::str::FromStr for QuoteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "money-market" | "mm" | "deposit" => Ok(Self::MoneyMarket),
            "par-swap" | "swap" => Ok(Self::ParSwap),
            "spot" | "zero" => Ok(Self::Spot),
            other => Err(Error::Parse(format!("unknown quote kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketQuote {
    pub label: String,
    /// Pillar time in years.
    pub maturity: f64,
    pub kind: QuoteKind,
    /// Decimal per annum.
    pub rate: f64,
    /// Discount factor published alongside the rate, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
}

impl MarketQuote {
    pub fn new(label: &str, kind: QuoteKind, rate: f64) -> Result<Self> {
        Ok(Self {
            label: label.to_string(),
            maturity: parse_tenor(label)?,
            kind,
            rate,
            df: None,
        })
    }

    pub fn with_df(mut self, df: f64) -> Self {
        self.df = Some(df);
        self
    }

    /// Money-market accrual fraction: actual days over 360, with a month
    /// counted as 365/12 days.
    fn act360_fraction(&self) -> f64 {
        self.maturity * 365.0 / 360.0
    }
}

/// Parses tenors such as `1m`, `18m`, `2y`, `1.5y`, `2w`, `7d` into years.
pub fn parse_tenor(label: &str) -> Result<f64> {
    let label = label.trim().to_ascii_lowercase();
    let bad = || Error::Parse(format!("bad tenor `{label}`"));
    let unit = label.chars().last().ok_or_else(bad)?;
    let number: f64 = label[..label.len() - 1].parse().map_err(|_| bad())?;
    let years = match unit {
        'd' => number / 365.0,
        'w' => number * 7.0 / 365.0,
        'm' => number / 12.0,
        'y' => number,
        _ => return Err(bad()),
    };
    if !(years > 0.0 && years.is_finite()) {
        return Err(bad());
    }
    Ok(years)
}

/// Discount curve interpolated log-linearly between pillars.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldCurve {
    times: Vec<f64>,
    log_dfs: Vec<f64>,
}

impl YieldCurve {
    /// Builds a curve directly from `(t, df)` pillars (without the origin).
    pub fn from_discount_factors(pillars: &[(f64, f64)]) -> Result<Self> {
        if pillars.is_empty() {
            return Err(Error::Curve("at least one pillar is required".into()));
        }
        let mut times = vec![0.0];
        let mut log_dfs = vec![0.0];
        for &(t, df) in pillars {
            if !(t.is_finite() && df.is_finite()) {
                return Err(Error::Curve(format!("non-finite pillar ({t}, {df})")));
            }
            if t <= *times.last().unwrap() {
                return Err(Error::Curve(format!(
                    "pillar times must be strictly increasing and positive (got {t})"
                )));
            }
            if df <= 0.0 {
                return Err(Error::Curve(format!("discount factor {df} at t = {t} is not positive")));
            }
            times.push(t);
            log_dfs.push(df.ln());
        }
        Ok(Self { times, log_dfs })
    }

    /// Flat curve with continuously compounded zero rate `rate` up to `horizon`.
    pub fn flat(rate: f64, horizon: f64) -> Result<Self> {
        Self::from_discount_factors(&[(horizon, (-rate * horizon).exp())])
    }

    /// Pillars, excluding the implicit origin.
    pub fn pillars(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.log_dfs)
            .skip(1)
            .map(|(&t, &l)| (t, l.exp()))
            .collect()
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn segment(&self, t: f64) -> usize {
        // index i such that times[i] <= t < times[i + 1], clamped to the last segment
        let i = self.times.partition_point(|&x| x <= t);
        i.saturating_sub(1).min(self.times.len() - 2)
    }

    fn check_range(&self, t: f64) -> Result<f64> {
        let last = self.last_time();
        if !t.is_finite() || t < -TIME_EPS {
            return Err(Error::InvalidParameter(format!("curve queried at t = {t}")));
        }
        if t > last + TIME_EPS {
            return Err(Error::Extrapolation { t, last });
        }
        Ok(t.clamp(0.0, last))
    }

    pub fn discount_factor(&self, t: f64) -> Result<f64> {
        let t = self.check_range(t)?;
        let i = self.segment(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        Ok((self.log_dfs[i] + w * (self.log_dfs[i + 1] - self.log_dfs[i])).exp())
    }

    /// Instantaneous forward rate `-d ln df / dt`; piecewise constant and
    /// right-continuous under log-linear interpolation.
    pub fn forward_rate(&self, t: f64) -> Result<f64> {
        let t = self.check_range(t)?;
        let i = self.segment(t);
        Ok(-(self.log_dfs[i + 1] - self.log_dfs[i]) / (self.times[i + 1] - self.times[i]))
    }

    /// Integral of the instantaneous forward over `[0, t]`, i.e. `-ln df(t)`.
    pub fn integrated_forward(&self, t: f64) -> Result<f64> {
        Ok(-self.discount_factor(t)?.ln())
    }

    /// Par rate of a swap with `fixed_freq` fixed payments a year.
    pub fn par_swap_rate(&self, maturity: f64, fixed_freq: u32) -> Result<f64> {
        if fixed_freq == 0 {
            return Err(Error::InvalidParameter("fixed frequency must be positive".into()));
        }
        let periods = maturity * fixed_freq as f64;
        let n = periods.round();
        if n < 1.0 || (periods - n).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "maturity {maturity} is not a multiple of 1/{fixed_freq}"
            )));
        }
        let accrual = 1.0 / fixed_freq as f64;
        let mut annuity = 0.0;
        for i in 1..=n as usize {
            annuity += accrual * self.discount_factor(i as f64 * accrual)?;
        }
        Ok((1.0 - self.discount_factor(maturity)?) / annuity)
    }
}

/// Builds a curve from quotes sorted by maturity.
///
/// Published discount factors win over rates. Otherwise money-market
/// pillars use simple compounding, spot pillars annual compounding, and
/// par-swap pillars are solved so that the annual-fixed par equation holds
/// on the final (interpolated) curve.
pub fn build_curve(quotes: &[MarketQuote]) -> Result<YieldCurve> {
    if quotes.is_empty() {
        return Err(Error::Curve("no quotes".into()));
    }
    let mut pillars: Vec<(f64, f64)> = Vec::with_capacity(quotes.len());
    for q in quotes {
        let last = pillars.last().map_or(0.0, |p| p.0);
        // also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(q.maturity > last) {
            return Err(Error::Curve(format!(
                "maturities must be strictly increasing ({} after {last})",
                q.label
            )));
        }
        if !q.rate.is_finite() {
            return Err(Error::Curve(format!("non-finite rate for {}", q.label)));
        }
        let df = match q.df {
            Some(df) => df,
            None => implied_df(q, &pillars)?,
        };
        if !(df > 0.0 && df.is_finite()) {
            return Err(Error::Curve(format!("{} implies discount factor {df}", q.label)));
        }
        pillars.push((q.maturity, df));
    }
    YieldCurve::from_discount_factors(&pillars)
}

/// Same as [`build_curve`] but ignores any published discount factors.
pub fn bootstrap_from_rates(quotes: &[MarketQuote]) -> Result<YieldCurve> {
    let stripped: Vec<MarketQuote> = quotes
        .iter()
        .cloned()
        .map(|mut q| {
            q.df = None;
            q
        })
        .collect();
    build_curve(&stripped)
}

fn implied_df(q: &MarketQuote, known: &[(f64, f64)]) -> Result<f64> {
    match q.kind {
        QuoteKind::MoneyMarket => Ok(1.0 / (1.0 + q.rate * q.act360_fraction())),
        QuoteKind::Spot => Ok((1.0 + q.rate).powf(-q.maturity)),
        QuoteKind::ParSwap => solve_par_pillar(q, known),
    }
}

fn solve_par_pillar(q: &MarketQuote, known: &[(f64, f64)]) -> Result<f64> {
    let years = q.maturity.round();
    if years < 1.0 || (q.maturity - years).abs() > TIME_EPS {
        return Err(Error::Curve(format!(
            "par-swap pillar {} must be a whole number of years",
            q.label
        )));
    }
    let k = q.rate;
    // fixed-leg PV + terminal df as a function of the trial pillar df; increasing in `df`
    let residual = |df: f64| -> Result<f64> {
        let mut trial = known.to_vec();
        trial.push((q.maturity, df));
        let curve = YieldCurve::from_discount_factors(&trial)?;
        let mut annuity = 0.0;
        for i in 1..=years as usize {
            annuity += curve.discount_factor(i as f64)?;
        }
        Ok(k * annuity + df - 1.0)
    };
    let (mut lo, mut hi) = (1e-12, 2.0);
    if residual(lo)? > 0.0 || residual(hi)? < 0.0 {
        return Err(Error::Curve(format!("cannot bootstrap {} at rate {k}", q.label)));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Deserialize)]
struct QuoteRow {
    maturity_label: String,
    kind: String,
    rate: f64,
    #[serde(default)]
    df: Option<f64>,
}

/// Reads quotes from CSV with columns `maturity_label,kind,rate,df` (df optional).
pub fn read_quotes<R: std::io::Read>(reader: R) -> Result<Vec<MarketQuote>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut quotes = Vec::new();
    for row in rdr.deserialize() {
        let row: QuoteRow = row?;
        let mut q = MarketQuote::new(&row.maturity_label, row.kind.parse()?, row.rate)?;
        q.df = row.df;
        quotes.push(q);
    }
    Ok(quotes)
}

pub fn load_quotes(path: impl AsRef<Path>) -> Result<Vec<MarketQuote>> {
    read_quotes(std::fs::File::open(path)?)
}

const EUR_2012_06_15: &str = include_str!("../../../data/eur_2012-06-15.csv");

/// EUR market quotes of 2012-06-15: EURIBOR deposits up to one year, spot
/// rates beyond, each with its published discount factor.
pub fn eur_2012_quotes() -> Vec<MarketQuote> {
    read_quotes(EUR_2012_06_15.as_bytes()).expect("embedded quote table is valid")
}
