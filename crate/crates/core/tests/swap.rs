//! Swap pricing and exposure on simulated paths.

use contingent_csa::curve::{build_curve, eur_2012_quotes};
use contingent_csa::dynamics::{simulate_paths, G2Model, TimeGrid};
use contingent_csa::scenario::ScenarioConfig;
use contingent_csa::swap::{exposure_from_npv, SwapPricer};
use contingent_csa::{Direction, Fixing, ModelParams, PathSet, SwapSpec};

fn setup(n_paths: usize, seed: u64) -> (PathSet, SwapSpec, G2Model, TimeGrid) {
    let cfg = ScenarioConfig::default();
    let curve = build_curve(&eur_2012_quotes()).unwrap();
    let params: ModelParams = cfg.model_params();
    let grid = TimeGrid::new(48, 1.0).unwrap();
    let paths = simulate_paths(&params, &curve, grid, n_paths, seed).unwrap();
    let spec = SwapSpec::at_par(&curve, 1000.0, 1.0, 0.5).unwrap();
    let model = G2Model::new(params.g2, curve).unwrap();
    (paths, spec, model, grid)
}

#[test]
fn par_swap_starts_at_zero() {
    for fixing in [Fixing::InArrears, Fixing::InAdvance] {
        let (paths, mut spec, model, grid) = setup(8, 1);
        spec.fixing = fixing;
        let npv = SwapPricer::new(spec, model, grid).unwrap().npv_matrix(&paths).unwrap();
        assert!(npv.row(0).iter().all(|v| v.abs() < 1e-6), "{fixing:?}: {:?}", npv.row(0));
    }
}

#[test]
fn directions_are_exact_negatives() {
    let (paths, spec, model, grid) = setup(64, 2);
    let pay = SwapPricer::new(spec.clone(), model.clone(), grid).unwrap().npv_matrix(&paths).unwrap();
    let flipped = SwapSpec { direction: Direction::ReceiveFixed, ..spec };
    let rec = SwapPricer::new(flipped, model, grid).unwrap().npv_matrix(&paths).unwrap();
    assert!(pay.iter().zip(rec.iter()).all(|(a, b)| a == &-b));
}

#[test]
fn npv_is_zero_at_maturity() {
    let (paths, spec, model, grid) = setup(32, 3);
    let npv = SwapPricer::new(spec, model, grid).unwrap().npv_matrix(&paths).unwrap();
    assert!(npv.row(48).iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn exposure_parts_sum_to_mean() {
    let (paths, spec, model, grid) = setup(256, 4);
    let npv = SwapPricer::new(spec, model, grid).unwrap().npv_matrix(&paths).unwrap();
    let profile = exposure_from_npv(&paths, npv);
    for i in 0..profile.times.len() {
        assert!(profile.epe[i] >= 0.0 && profile.ene[i] >= 0.0);
        assert!((profile.epe[i] - profile.ene[i] - profile.mean_npv[i]).abs() < 1e-9);
        assert!(profile.alive[i] <= 256);
    }
    assert!(profile.alive.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn epe_agrees_across_independent_seeds() {
    let n = 4000;
    let epe_at_half = |seed| {
        let (paths, spec, model, grid) = setup(n, seed);
        let npv = SwapPricer::new(spec, model, grid).unwrap().npv_matrix(&paths).unwrap();
        let alive: Vec<f64> = (0..n).filter(|&p| paths.alive(24, p)).map(|p| npv[[24, p]].max(0.0)).collect();
        let k = alive.len() as f64;
        let mean = alive.iter().sum::<f64>() / k;
        let var = alive.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (mean, var / k)
    };
    let (a, va) = epe_at_half(100);
    let (b, vb) = epe_at_half(200);
    assert!(a > 0.0);
    assert!((a - b).abs() < 4.0 * (va + vb).sqrt(), "{a} vs {b}");
}
