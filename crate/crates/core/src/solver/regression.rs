//! Least-squares estimation of conditional expectations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Polynomial feature of the state `(r, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Constant,
    Rate,
    Intensity,
    RateSquared,
    IntensitySquared,
    RateIntensity,
}

impl Feature {
    #[inline]
    pub fn eval(self, r: f64, lambda: f64) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Rate => r,
            Self::Intensity => lambda,
            Self::RateSquared => r * r,
            Self::IntensitySquared => lambda * lambda,
            Self::RateIntensity => r * lambda,
        }
    }

    /// Which of `(r, lambda)` the feature depends on.
    fn uses(self) -> (bool, bool) {
        match self {
            Self::Constant => (false, false),
            Self::Rate | Self::RateSquared => (true, false),
            Self::Intensity | Self::IntensitySquared => (false, true),
            Self::RateIntensity => (true, true),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Constant => "1",
            Self::Rate => "r",
            Self::Intensity => "lambda",
            Self::RateSquared => "r^2",
            Self::IntensitySquared => "lambda^2",
            Self::RateIntensity => "r*lambda",
        }
    }
}

/// Ordered list of features; lower-order terms first so truncation keeps
/// the most important ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegressionBasis {
    pub features: Vec<Feature>,
}

impl RegressionBasis {
    /// Quadratic in `(r, lambda)` with cross term.
    pub fn rate_and_intensity() -> Self {
        use Feature::*;
        Self { features: vec![Constant, Rate, Intensity, RateSquared, IntensitySquared, RateIntensity] }
    }

    /// Quadratic in `r` only.
    pub fn rate_only() -> Self {
        use Feature::*;
        Self { features: vec![Constant, Rate, RateSquared] }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Result of one regression: coefficients on the retained features, in
/// the original (unscaled) feature units.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub features: Vec<Feature>,
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
}

impl RegressionFit {
    pub fn predict(&self, r: f64, lambda: f64) -> f64 {
        self.features.iter().zip(&self.coefficients).map(|(f, c)| c * f.eval(r, lambda)).sum()
    }
}

/// Minimum number of samples per basis function.
const SAMPLES_PER_FEATURE: usize = 10;

/// Ordinary least squares (Householder QR) of `targets` on `basis(states)`.
///
/// Features that are constant over the sample, or involve a state variable
/// that is, are dropped, and the basis
/// is truncated so there are at least ten samples per retained feature.
/// The intercept is always kept. Returns the fitted values at each sample.
pub fn regress_continuation(states: &[(f64, f64)], targets: &[f64], basis: &RegressionBasis) -> Result<RegressionFit> {
    if states.len() != targets.len() {
        return Err(Error::GridMismatch(format!(
            "{} states for {} regression targets",
            states.len(),
            targets.len()
        )));
    }
    let n = states.len();
    if n == 0 {
        return Ok(RegressionFit { features: vec![Feature::Constant], coefficients: vec![0.0], fitted: vec![] });
    }

    // candidate columns, centred and scaled
    let budget = (n / SAMPLES_PER_FEATURE).max(1);
    let varies = |v: fn(&(f64, f64)) -> f64| states.iter().any(|s| v(s) != v(&states[0]));
    let (r_varies, l_varies) = (varies(|s| s.0), varies(|s| s.1));
    let mut kept: Vec<(Feature, f64, f64)> = vec![(Feature::Constant, 0.0, 1.0)];
    for &f in basis.features.iter().filter(|&&f| f != Feature::Constant) {
        if kept.len() >= budget {
            break;
        }
        let (uses_r, uses_l) = f.uses();
        if (uses_r && !r_varies) || (uses_l && !l_varies) {
            continue;
        }
        let col: Vec<f64> = states.iter().map(|&(r, l)| f.eval(r, l)).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let magnitude = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sd <= 1e-12 * magnitude.max(1e-300) || sd == 0.0 {
            continue;
        }
        kept.push((f, mean, sd));
    }

    let k = kept.len();
    let design = DMatrix::from_fn(n, k, |i, j| {
        let (f, mean, sd) = kept[j];
        if f == Feature::Constant {
            1.0
        } else {
            let (r, l) = states[i];
            (f.eval(r, l) - mean) / sd
        }
    });

    let dependent = dependent_columns(&design);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient {
            features: dependent.into_iter().map(|j| kept[j].0.name().to_string()).collect(),
        });
    }

    let y = DVector::from_column_slice(targets);
    let qr = design.clone().qr();
    let qty = qr.q().transpose() * &y;
    let beta = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::InvalidParameter("singular least-squares system".into()))?;
    let fitted = (&design * &beta).iter().copied().collect();

    // back to raw feature units
    let mut coefficients = vec![0.0; k];
    for j in 1..k {
        let (_, mean, sd) = kept[j];
        coefficients[j] = beta[j] / sd;
        coefficients[0] -= beta[j] * mean / sd;
    }
    coefficients[0] += beta[0];

    Ok(RegressionFit { features: kept.iter().map(|c| c.0).collect(), coefficients, fitted })
}

/// Columns (by index) lying in the span of the preceding ones.
fn dependent_columns(design: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..design.ncols() {
        let col = design.column(j).into_owned();
        let norm = col.norm();
        let mut v = col.clone();
        // two passes of Gram-Schmidt for stability
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v -= q * proj;
            }
        }
        let residual = v.norm();
        if norm == 0.0 || residual <= 1e-9 * norm {
            dependent.push(j);
        } else {
            basis.push(v / residual);
        }
    }
    dependent
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_states(n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|i| (0.01 + 0.001 * (i % 17) as f64, 0.1 + 0.003 * (i % 11) as f64)).collect()
    }

    #[test]
    fn constant_targets() {
        let s = grid_states(200);
        let fit = regress_continuation(&s, &vec![3.5; 200], &RegressionBasis::rate_and_intensity()).unwrap();
        assert!(fit.fitted.iter().all(|v| (v - 3.5).abs() < 1e-10));
    }

    #[test]
    fn exact_linear_function() {
        let s = grid_states(300);
        let y: Vec<f64> = s.iter().map(|&(r, l)| 2.0 - 40.0 * r + 7.0 * l).collect();
        let fit = regress_continuation(&s, &y, &RegressionBasis::rate_and_intensity()).unwrap();
        for (f, t) in fit.fitted.iter().zip(&y) {
            assert!((f - t).abs() < 1e-10, "{f} {t}");
        }
    }

    #[test]
    fn recovers_quadratic_coefficient() {
        let s = grid_states(400);
        let y: Vec<f64> = s.iter().map(|&(r, _)| r * r).collect();
        let fit = regress_continuation(&s, &y, &RegressionBasis::rate_only()).unwrap();
        let pos = fit.features.iter().position(|&f| f == Feature::RateSquared).unwrap();
        assert!((fit.coefficients[pos] - 1.0).abs() < 1e-8, "{:?}", fit.coefficients);
        assert!((fit.predict(0.02, 0.0) - 0.0004).abs() < 1e-12);
    }

    #[test]
    fn constant_features_are_pruned() {
        let s: Vec<(f64, f64)> = (0..100).map(|i| (0.02, i as f64)).collect();
        let y: Vec<f64> = s.iter().map(|&(_, l)| l).collect();
        let fit = regress_continuation(&s, &y, &RegressionBasis::rate_and_intensity()).unwrap();
        assert!(!fit.features.contains(&Feature::Rate));
        assert!(fit.fitted.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn small_samples_shrink_the_basis() {
        let fit = regress_continuation(&[(0.01, 0.2)], &[4.0], &RegressionBasis::rate_and_intensity()).unwrap();
        assert_eq!(fit.features, vec![Feature::Constant]);
        assert_eq!(fit.fitted, vec![4.0]);
    }

    #[test]
    fn collinear_design_is_reported() {
        // r takes two values, so r^2 is affine in r
        let s: Vec<(f64, f64)> = (0..100).map(|i| (if i % 2 == 0 { 0.01 } else { 0.03 }, 0.0)).collect();
        let err = regress_continuation(&s, &vec![1.0; 100], &RegressionBasis::rate_only()).unwrap_err();
        match err {
            Error::RankDeficient { features } => assert_eq!(features, vec!["r^2".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
