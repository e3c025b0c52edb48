//! Statistical checks of the simulated rate and intensity paths.

use contingent_csa::dynamics::{simulate_cir, simulate_g2pp, CirParams, G2Params, TimeGrid};
use proptest::prelude::*;

fn mean_and_var(xs: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var, v.len())
}

#[test]
fn cir_mean_matches_closed_form() {
    let params = CirParams::low();
    let grid = TimeGrid::new(252, 1.0).unwrap();
    let sim = simulate_cir(&params, &grid, 20_000, 7, 0.0).unwrap();
    let (m, var, n) = mean_and_var(sim.intensity.row(252).iter().copied());
    let se = (var / n as f64).sqrt();
    let exact = params.mean(1.0);
    assert!((m - exact).abs() < 3.0 * se, "mean {m} vs {exact} (se {se})");
}

#[test]
fn first_factor_has_ou_variance() {
    let params = G2Params { mu: 0.5, sigma: 0.02, ..G2Params::eur_2012() };
    let grid = TimeGrid::new(50, 2.0).unwrap();
    let phi = vec![0.0; grid.len()];
    let f = simulate_g2pp(&params, &phi, &grid, 20_000, 11).unwrap();
    let (m, var, _) = mean_and_var(f.y.row(50).iter().copied());
    let exact = params.sigma.powi(2) * (1.0 - (-2.0 * params.mu * 2.0).exp()) / (2.0 * params.mu);
    assert!(m.abs() < 4.0 * (exact / 20_000.0).sqrt());
    assert!((var / exact - 1.0).abs() < 0.05, "variance {var} vs {exact}");
}

#[test]
fn uncorrelated_factors_have_uncorrelated_increments() {
    let params = G2Params { rho: 0.0, ..G2Params::eur_2012() };
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let phi = vec![0.0; grid.len()];
    let n = 20_000;
    let f = simulate_g2pp(&params, &phi, &grid, n, 3).unwrap();
    let dy: Vec<f64> = (0..n).map(|p| f.y[[1, p]] - f.y[[0, p]]).collect();
    let dz: Vec<f64> = (0..n).map(|p| f.z[[1, p]] - f.z[[0, p]]).collect();
    let (my, vy, _) = mean_and_var(dy.iter().copied());
    let (mz, vz, _) = mean_and_var(dz.iter().copied());
    let cov = dy.iter().zip(&dz).map(|(a, b)| (a - my) * (b - mz)).sum::<f64>() / (n as f64 - 1.0);
    let corr = cov / (vy * vz).sqrt();
    assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "correlation {corr}");
}

#[test]
fn correlated_factors_follow_rho() {
    let params = G2Params::eur_2012();
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let phi = vec![0.0; grid.len()];
    let n = 5_000;
    let f = simulate_g2pp(&params, &phi, &grid, n, 5).unwrap();
    let dy: Vec<f64> = (0..n).map(|p| f.y[[1, p]]).collect();
    let dz: Vec<f64> = (0..n).map(|p| f.z[[1, p]]).collect();
    let (my, vy, _) = mean_and_var(dy.iter().copied());
    let (mz, vz, _) = mean_and_var(dz.iter().copied());
    let cov = dy.iter().zip(&dz).map(|(a, b)| (a - my) * (b - mz)).sum::<f64>() / (n as f64 - 1.0);
    assert!(cov / (vy * vz).sqrt() < -0.99);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn intensity_stays_non_negative(
        kappa in 0.0..3.0f64,
        gamma in 0.0..0.3f64,
        upsilon in 0.0..1.5f64,
        lambda0 in 0.0..0.5f64,
        seed in any::<u64>(),
    ) {
        let params = CirParams { kappa, gamma, upsilon, lambda0 };
        let grid = TimeGrid::new(52, 1.0).unwrap();
        let sim = simulate_cir(&params, &grid, 16, seed, 0.0).unwrap();
        prop_assert!(sim.intensity.iter().all(|&l| l >= 0.0));
        for p in 0..16 {
            let col = sim.cum_hazard.column(p);
            prop_assert_eq!(col[0], 0.0);
            prop_assert!(col.windows(2).into_iter().all(|w| w[1] >= w[0]));
        }
    }
}
