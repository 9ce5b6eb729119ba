#![allow(clippy::approx_constant)]

use hybridfit::data::windows_per_trajectory;
use hybridfit::metrics::eval_d_hat;
use hybridfit::prior::laplacian_periodic;
use hybridfit::problems::synthetic::{corr_friedman, corr_linear, friedman, overlapping, sample_cov, signed_equicorrelation};
use hybridfit::problems::systems::{lotka_volterra, pendulum, reaction_diffusion_with, RD_GRID};
use hybridfit::problems::{export_dynamic, export_static, static_problem, GenOptions, ProblemId, Sizes};
use hybridfit::residual::FnPredictor;
use ndarray::{Array1, Array2, ArrayView1, Axis};

const THETA: [f64; 6] = [10.0, std::f64::consts::PI, 20.0, 0.5, 10.0, 5.0];

fn friedman_fn(r: ArrayView1<'_, f64>) -> f64 {
    THETA[0] * (THETA[1] * r[0] * r[1]).sin() + THETA[2] * (r[2] - THETA[3]).powi(2) + THETA[4] * r[3] + THETA[5] * r[4]
}

/// Least squares via the normal equations.
fn ols(x: &Array2<f64>, y: &Array1<f64>) -> Vec<f64> {
    let xtx = x.t().dot(x);
    let xty = x.t().dot(y);
    match x.ncols() {
        1 => vec![xty[0] / xtx[[0, 0]]],
        2 => {
            let det = xtx[[0, 0]] * xtx[[1, 1]] - xtx[[0, 1]] * xtx[[1, 0]];
            vec![
                (xtx[[1, 1]] * xty[0] - xtx[[0, 1]] * xty[1]) / det,
                (xtx[[0, 0]] * xty[1] - xtx[[1, 0]] * xty[0]) / det,
            ]
        }
        _ => unreachable!(),
    }
}

fn sizes_of(p: &hybridfit::problems::StaticProblem) -> (usize, usize, usize) {
    (p.train.len(), p.val.len(), p.test.len())
}

#[test]
fn default_split_sizes() {
    let o = GenOptions::default();
    for (id, want) in [
        (ProblemId::Friedman, (300, 300, 600)),
        (ProblemId::CorrFriedman, (300, 300, 600)),
        (ProblemId::CorrLinear, (50, 50, 600)),
        (ProblemId::Overlapping, (50, 50, 600)),
    ] {
        assert_eq!(sizes_of(&static_problem(id, 1, &o).unwrap()), want, "{}", id.id());
    }
}

#[test]
fn noiseless_friedman_matches_closed_form() {
    let p = friedman(3, Sizes::new(200, 10, 10), Some(THETA), 0.0).unwrap();
    let truth = FnPredictor {
        n_inputs: 10,
        n_outputs: 1,
        f: |r: ArrayView1<'_, f64>| vec![friedman_fn(r)],
    };
    assert!(eval_d_hat(&truth, &p.train).unwrap() < 1e-24);
    assert!(p.train.features().iter().all(|v| (0.0..1.0).contains(v)));
}

#[test]
fn friedman_noise_has_unit_variance() {
    let p = friedman(4, Sizes::new(100_000, 1, 1), Some(THETA), 1.0).unwrap();
    let eps: Vec<f64> = p.train.features().rows().into_iter().zip(p.train.targets()).map(|(r, y)| y - friedman_fn(r)).collect();
    let n = eps.len() as f64;
    let m = eps.iter().sum::<f64>() / n;
    let var = eps.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (n - 1.0);
    assert!((var - 1.0).abs() < 0.02, "var {var}");
}

#[test]
fn corr_friedman_correlations_match_target() {
    let p = corr_friedman(5, Sizes::new(100_000, 1, 1), Some(THETA), 1.0).unwrap();
    let (_, s) = signed_equicorrelation(5, 10, 0.75, 0.3).unwrap();
    let c = sample_cov(&p.train.features().to_owned());
    for i in 0..10 {
        for j in 0..10 {
            let corr = c[[i, j]] / (c[[i, i]] * c[[j, j]]).sqrt();
            let want = if i == j { 1.0 } else { 0.4 * s[i] * s[j] };
            assert!((corr - want).abs() < 0.02, "({i},{j}): {corr} vs {want}");
        }
    }
    for j in 0..10 {
        let m = p.train.features().column(j).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((m - 1.0).abs() < 1e-12);
    }
}

#[test]
fn corr_friedman_unscaled_covariance_matches_target() {
    let p = corr_friedman(6, Sizes::new(100_000, 1, 1), Some(THETA), 1.0).unwrap();
    let note = &p.notes[0];
    let inner = &note[note.find('[').unwrap() + 1..note.find(']').unwrap()];
    let scale: Vec<f64> = inner.split(',').map(|v| v.trim().parse().unwrap()).collect();
    let (cov, _) = signed_equicorrelation(6, 10, 0.75, 0.3).unwrap();
    let mut x = p.train.features().to_owned();
    for j in 0..10 {
        x.column_mut(j).mapv_inplace(|v| v * scale[j]);
    }
    let c = sample_cov(&x);
    for i in 0..10 {
        for j in 0..10 {
            assert!((c[[i, j]] - cov[[i, j]]).abs() < 0.02, "({i},{j}): {} vs {}", c[[i, j]], cov[[i, j]]);
        }
    }
}

#[test]
fn same_seed_gives_identical_data() {
    let a = corr_friedman(7, Sizes::new(50, 20, 20), None, 1.0).unwrap();
    let b = corr_friedman(7, Sizes::new(50, 20, 20), None, 1.0).unwrap();
    assert_eq!(a.train.features(), b.train.features());
    assert_eq!(a.test.targets(), b.test.targets());
    let c = corr_friedman(8, Sizes::new(50, 20, 20), None, 1.0).unwrap();
    assert_ne!(a.train.targets(), c.train.targets());
}

#[test]
fn corr_linear_omitted_variable_bias() {
    let p = corr_linear(9, Sizes::new(100_000, 1, 1), 0.5).unwrap();
    let x = p.train.features().to_owned();
    let y = p.train.targets().to_owned();
    let short = ols(&x.select(Axis(1), &[0]), &y);
    // -0.5 + 2.25 / 2 * 1
    assert!((short[0] - 0.625).abs() < 0.01, "{short:?}");
    let full = ols(&x, &y);
    assert!((full[0] + 0.5).abs() < 0.01 && (full[1] - 1.0).abs() < 0.01, "{full:?}");
}

#[test]
fn overlapping_noiseless_truth_and_input_variance() {
    let p = overlapping(10, Sizes::new(100_000, 5, 5), 0.0).unwrap();
    let truth = FnPredictor {
        n_inputs: 2,
        n_outputs: 1,
        f: |r: ArrayView1<'_, f64>| vec![0.2 * r[0] * r[0] + (1.5 * r[0]).sin() + r[1]],
    };
    assert!(eval_d_hat(&truth, &p.train).unwrap() < 1e-24);
    let c = sample_cov(&p.train.features().to_owned());
    assert!((c[[0, 0]] - 2.0).abs() < 0.03, "var(x0) {}", c[[0, 0]]);
}

#[test]
fn lotka_volterra_full_scale_window_count() {
    let p = lotka_volterra(0, 1.0).unwrap();
    assert_eq!(p.train.len() + p.val.len() + p.test.len(), 200);
    assert_eq!(p.train.len(), 100);
    assert_eq!(p.train.horizon(), 400);
    assert_eq!(p.train.len() * windows_per_trajectory(401, 41, 2), 18_100);
    let w = p.train.windows(41, 2).unwrap();
    assert_eq!(w.dim(), (100 * 181, 41, 2));
}

#[test]
fn pendulum_full_scale_window_count() {
    let p = pendulum(0, 1.0).unwrap();
    assert_eq!(p.train.horizon(), 200);
    assert_eq!(p.train.windows(41, 2).unwrap().dim().0, 8_100);
    assert!(p.truth.theta[0] >= 0.785 * 0.785 && p.truth.theta[0] <= 3.14 * 3.14);
}

#[test]
fn reaction_diffusion_small_grid_shapes() {
    let p = reaction_diffusion_with(1, 8, 8, 6).unwrap();
    assert_eq!(p.train.grid_shape(), Some((8, 8)));
    assert_eq!(p.train.state_dim(), 2 * 64);
    assert_eq!(p.train.horizon(), 6);
    assert_eq!(RD_GRID, 32);
    assert_eq!(1920 / 2 * windows_per_trajectory(246, 51, 20), 9_600);
}

#[test]
fn laplacian_of_constant_field_is_zero() {
    let field = vec![3.7; 16 * 16];
    let mut out = vec![1.0; 16 * 16];
    laplacian_periodic(&field, 16, 16, 2.0 / 16.0, &mut out);
    assert!(out.iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn exports_write_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = static_problem(ProblemId::CorrLinear, 2, &GenOptions::default()).unwrap();
    export_static(&p, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("train.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), vec!["x0", "x1", "y"]);
    let first: Vec<f64> = rdr.records().next().unwrap().unwrap().iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], p.train.features()[[0, 0]]);
    assert_eq!(first[2], p.train.targets()[0]);
    assert!(dir.path().join("manifest.json").exists());

    let d = lotka_volterra(1, 0.02).unwrap();
    let sub = dir.path().join("lv");
    export_dynamic(&d, &sub).unwrap();
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sub.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["dt"], 0.05);
    assert_eq!(m["horizon"], 400);
    assert!(m["grid_shape"].is_null());
    assert_eq!(std::fs::read_dir(sub.join("train")).unwrap().count(), d.train.len());
}
