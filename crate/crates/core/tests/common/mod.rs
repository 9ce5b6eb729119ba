//! Property checks shared by the property tests and the acceptance report.
//! Each returns a short description on success and the violation otherwise.

#![allow(dead_code)]

use hybridfit::config::ExperimentConfig;
use hybridfit::hybrid::HybridModel;
use hybridfit::nn::{mse_grad, Activation, ConvSpec, MlpSpec, Net, NetSpec, TrainConfig};
use hybridfit::ode::{integrate, IntegratorCfg};
use hybridfit::pd::pd_dataset;
use hybridfit::problems::systems::{lotka_volterra, pendulum_with, Additive, LV_COEF};
use hybridfit::problems::synthetic::friedman;
use hybridfit::problems::Sizes;
use hybridfit::report::write_jsonl;
use hybridfit::residual::Predictor;
use hybridfit::runner::run_experiment;
use hybridfit::schemes::dynamics::window_loss_grad;
use hybridfit::schemes::regression::{fit_prior, PriorFitConfig};
use hybridfit::{ParametricPrior, PriorForm, ResidualConfig, ResidualKind, ResidualModel};
use ndarray::{Array1, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-2)
}

/// Double loop over query and background rows, one prediction at a time.
pub fn naive_pd(model: &dyn Predictor, known: &[usize], x: &Array2<f64>) -> Vec<f64> {
    let n = x.nrows();
    (0..n)
        .map(|q| {
            let mut s = 0.0;
            for i in 0..n {
                let mut row = x.row(i).to_owned();
                for &k in known {
                    row[k] = x[[q, k]];
                }
                s += model.predict(row.view().insert_axis(Axis(0))).unwrap()[[0, 0]];
            }
            s / n as f64
        })
        .collect()
}

/// Vectorized partial dependence equals the naive double loop for a net,
/// a forest and a boosted ensemble.
pub fn pd_matches_naive() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Array2<f64> = Array2::from_shape_fn((30, 4), |_| rng.gen_range(-1.0..1.0));
    let y: Array1<f64> = x.rows().into_iter().map(|r| r[0] * r[1] + (2.0 * r[2]).sin() - r[3]).collect();
    let kinds = [
        ResidualKind::Mlp {
            hidden_layers: 2,
            width: 8,
            activation: Activation::Tanh,
        },
        ResidualKind::RandomForest(hybridfit::trees::ForestConfig::new(10, 3)),
        ResidualKind::GradientBoosting(hybridfit::trees::BoostConfig::new(30, 2)),
    ];
    let mut worst: f64 = 0.0;
    for kind in kinds {
        let cfg = ResidualConfig::new(kind, TrainConfig::full_batch_adam(50, 0.01));
        let mut m = ResidualModel::new(cfg, 4, 1, None, 3).map_err(|e| e.to_string())?;
        m.fit_vec(x.view(), y.view(), None).map_err(|e| e.to_string())?;
        for known in [vec![0], vec![1, 2]] {
            let fast = pd_dataset(&m, &known, x.view()).map_err(|e| e.to_string())?;
            for (a, b) in fast.column(0).iter().zip(naive_pd(&m, &known, &x)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max |PD - naive| = {worst:.1e}"))
    } else {
        Err(format!("max |PD - naive| = {worst:.1e} > 1e-12"))
    }
}

/// Net parameter gradients against central differences on 20 random
/// architectures (MLPs of varying depth/width/activation and small conv nets).
pub fn net_gradients_match_fd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for c in 0..20 {
        let spec = if c % 4 == 3 {
            let h = rng.gen_range(3..5);
            NetSpec::Conv(ConvSpec::new(2, rng.gen_range(1..3), rng.gen_range(2..4), 2, h, h))
        } else {
            let mut s = MlpSpec::new(rng.gen_range(1..5), rng.gen_range(1..4), rng.gen_range(2..8), rng.gen_range(1..3));
            s.activation = if c % 2 == 0 { Activation::Tanh } else { Activation::Identity };
            NetSpec::Mlp(s)
        };
        let mut net = Net::new(spec.clone(), &mut rng).map_err(|e| e.to_string())?;
        let n = rng.gen_range(2..6);
        let x = Array2::from_shape_fn((n, spec.input_dim()), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((n, spec.output_dim()), |_| rng.gen_range(-1.0..1.0));
        let (_, g) = mse_grad(&net, x.view(), y.view()).map_err(|e| e.to_string())?;
        let p0 = net.params().to_vec();
        let h = 1e-5;
        for i in 0..p0.len() {
            let mut p = p0.clone();
            p[i] += h;
            net.set_params(&p);
            let lp = mse_grad(&net, x.view(), y.view()).unwrap().0;
            p[i] -= 2.0 * h;
            net.set_params(&p);
            let lm = mse_grad(&net, x.view(), y.view()).unwrap().0;
            net.set_params(&p0);
            worst = worst.max(rel_err((lp - lm) / (2.0 * h), g[i]));
        }
    }
    if worst <= 1e-5 {
        Ok(format!("net gradients: worst relative error {worst:.1e}"))
    } else {
        Err(format!("net gradients: worst relative error {worst:.1e} > 1e-5"))
    }
}

/// Trajectory (BPTT) gradients in prior and net parameters against central
/// differences on 20 random window batches.
pub fn bptt_gradients_match_fd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for c in 0..20 {
        let (form, d) = if c % 2 == 0 { (PriorForm::LotkaVolterra, 2) } else { (PriorForm::Pendulum, 2) };
        let mut prior = ParametricPrior::random(form, &mut rng);
        prior.gamma.iter_mut().for_each(|g| *g = rng.gen_range(-0.5..0.5));
        let with_net = c % 3 != 0;
        let mut net = Net::new(NetSpec::Mlp(MlpSpec::new(d, 1, rng.gen_range(2..6), d)), &mut rng).map_err(|e| e.to_string())?;
        let (b, l) = (rng.gen_range(1..12), rng.gen_range(2..6));
        let w = Array3::from_shape_fn((b, l, d), |_| rng.gen_range(-1.0..1.0));
        let dt = 0.05;
        let loss = |p: &ParametricPrior, n: &Net| window_loss_grad(p, with_net.then_some(n), w.view(), dt).unwrap().loss;
        let g = window_loss_grad(&prior, with_net.then_some(&net), w.view(), dt).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let pp = prior.params();
        for i in 0..pp.len() {
            let (mut a, mut b2) = (prior.clone(), prior.clone());
            let mut p = pp.clone();
            p[i] += h;
            a.set_params(&p);
            p[i] -= 2.0 * h;
            b2.set_params(&p);
            worst = worst.max(rel_err((loss(&a, &net) - loss(&b2, &net)) / (2.0 * h), g.prior[i]));
        }
        if with_net {
            let p0 = net.params().to_vec();
            for i in 0..p0.len() {
                let mut p = p0.clone();
                p[i] += h;
                net.set_params(&p);
                let lp = loss(&prior, &net);
                p[i] -= 2.0 * h;
                net.set_params(&p);
                let lm = loss(&prior, &net);
                net.set_params(&p0);
                worst = worst.max(rel_err((lp - lm) / (2.0 * h), g.net[i]));
            }
        }
    }
    if worst <= 1e-5 {
        Ok(format!("trajectory gradients: worst relative error {worst:.1e}"))
    } else {
        Err(format!("trajectory gradients: worst relative error {worst:.1e} > 1e-5"))
    }
}

/// Least-squares slope of log error against log step on the
/// Lotka-Volterra field.
pub fn rk4_order() -> Result<f64, String> {
    let [a, b, c, d] = LV_COEF;
    let f = Additive {
        prior: ParametricPrior::with_theta(PriorForm::LotkaVolterra, vec![b]).unwrap(),
        residual: move |x: &[f64], o: &mut [f64]| {
            o[0] = a;
            o[1] = -d + c * x[0].exp();
        },
    };
    let x0 = ndarray::array![-0.3, 0.2];
    let horizon = 2.0;
    let reference = integrate(&f, x0.view(), IntegratorCfg::rk4(horizon / 4096.0, 1), 4096).map_err(|e| e.to_string())?;
    let end = reference.row(4096).to_owned();
    let mut pts = Vec::new();
    for steps in [8usize, 16, 32, 64] {
        let tr = integrate(&f, x0.view(), IntegratorCfg::rk4(horizon / steps as f64, 1), steps).map_err(|e| e.to_string())?;
        let err = (&tr.row(steps) - &end).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
        pts.push(((horizon / steps as f64).ln(), err.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

pub fn rk4_is_fourth_order() -> Check {
    let slope = rk4_order()?;
    if (3.7..=4.3).contains(&slope) {
        Ok(format!("RK4 fitted order {slope:.3}"))
    } else {
        Err(format!("RK4 fitted order {slope:.3} outside [3.7, 4.3]"))
    }
}

/// Largest relative energy change along simulated undamped pendulum
/// trajectories.
pub fn pendulum_energy_drift() -> Result<f64, String> {
    let w0 = 2.0;
    let p = pendulum_with(5, 0.1, w0, 0.0).map_err(|e| e.to_string())?;
    let energy = |q: f64, w: f64| 0.5 * w * w + w0 * w0 * (1.0 - q.cos());
    let mut worst: f64 = 0.0;
    for tr in p.train.trajectories() {
        let e0 = energy(tr[[0, 0]], tr[[0, 1]]);
        for row in tr.rows() {
            worst = worst.max((energy(row[0], row[1]) - e0).abs() / e0);
        }
    }
    Ok(worst)
}

pub fn energy_is_conserved() -> Check {
    let drift = pendulum_energy_drift()?;
    if drift <= 1e-4 {
        Ok(format!("undamped pendulum relative energy drift {drift:.1e}"))
    } else {
        Err(format!("undamped pendulum relative energy drift {drift:.1e} > 1e-4"))
    }
}

/// Fitting `h_k + gamma` alone on `y` puts `E[f_a]` into the offset.
pub fn offset_absorbs_mean_of_unknown_part() -> Check {
    let theta = [10.0, std::f64::consts::PI, 20.0, 0.5, 10.0, 5.0];
    let p = friedman(21, Sizes::new(10_000, 10, 10), Some(theta), 1.0).map_err(|e| e.to_string())?;
    let mut prior = ParametricPrior::with_theta(PriorForm::FriedmanSine, vec![theta[0], theta[1]]).unwrap();
    let cfg = PriorFitConfig {
        epochs: 1500,
        lr: 0.05,
        ..PriorFitConfig::default()
    };
    fit_prior(&mut prior, p.train.features(), p.train.targets(), &cfg).map_err(|e| e.to_string())?;
    let expected = theta[2] * (1.0 / 3.0 - theta[3] + theta[3] * theta[3]) + theta[4] / 2.0 + theta[5] / 2.0;
    let gap = (prior.gamma[0] - expected).abs();
    if gap <= 0.05 {
        Ok(format!("gamma {:.4} vs E[f_a] {expected:.4}", prior.gamma[0]))
    } else {
        Err(format!("gamma {:.4} vs E[f_a] {expected:.4}: gap {gap:.4} > 0.05", prior.gamma[0]))
    }
}

/// Hybrid predictions equal prior plus residual exactly.
pub fn hybrid_is_additive() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = Array2::from_shape_fn((40, 3), |_| rng.gen_range(0.0..1.0));
    let y: Array1<f64> = x.rows().into_iter().map(|r| r[0] + r[1] * r[2]).collect();
    let cfg = ResidualConfig::new(ResidualKind::GradientBoosting(hybridfit::trees::BoostConfig::new(20, 2)), TrainConfig::full_batch_adam(1, 0.1));
    let mut res = ResidualModel::new(cfg, 3, 1, None, 0).map_err(|e| e.to_string())?;
    res.fit_vec(x.view(), y.view(), None).map_err(|e| e.to_string())?;
    let prior = ParametricPrior::new(PriorForm::Linear { known: vec![0] }, vec![1.7], vec![-0.4]).unwrap();
    let parts = &prior.eval_batch(x.view()) + &res.predict(x.view()).unwrap();
    let model = HybridModel::new(prior, res).map_err(|e| e.to_string())?;
    if model.predict(x.view()).unwrap() == parts {
        Ok("hybrid prediction == prior + residual bit for bit".into())
    } else {
        Err("hybrid prediction differs from prior + residual".into())
    }
}

/// A filtered residual ignores the known inputs, before and after training.
pub fn filtered_residual_is_blind() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = Array2::from_shape_fn((50, 4), |_| rng.gen_range(0.0..1.0));
    let y: Array1<f64> = x.rows().into_iter().map(|r| r[0] * 3.0 + r[2] - r[3]).collect();
    let mut x2 = x.clone();
    x2.column_mut(0).mapv_inplace(|v| v * 7.0 - 2.0);
    x2.column_mut(1).fill(42.0);
    for kind in [
        ResidualKind::Mlp {
            hidden_layers: 1,
            width: 5,
            activation: Activation::Tanh,
        },
        ResidualKind::RandomForest(hybridfit::trees::ForestConfig::new(5, 3)),
        ResidualKind::GradientBoosting(hybridfit::trees::BoostConfig::new(10, 2)),
    ] {
        let cfg = ResidualConfig::new(kind, TrainConfig::full_batch_adam(20, 0.01)).filtered(vec![0, 1]);
        let mut a = ResidualModel::new(cfg.clone(), 4, 1, None, 1).map_err(|e| e.to_string())?;
        let mut b = ResidualModel::new(cfg, 4, 1, None, 1).map_err(|e| e.to_string())?;
        a.fit_vec(x.view(), y.view(), None).map_err(|e| e.to_string())?;
        b.fit_vec(x2.view(), y.view(), None).map_err(|e| e.to_string())?;
        let (pa, pb) = (a.predict(x.view()).unwrap(), b.predict(x2.view()).unwrap());
        if pa != pb || pa != a.predict(x2.view()).unwrap() {
            return Err(format!("{} residual reacts to filtered inputs", a.kind().id()));
        }
    }
    Ok("filtered MLP/RF/GB residuals ignore x_k".into())
}

const TINY_STATIC: &str = r#"
name = "tiny"
problem = "corr_linear"
replicates = 2
seed = 9
schemes = ["sequential", "alternate", "pd_based", "ha_only"]
models = ["mlp", "gb"]
filters = [false, true]
train_sizes = [20]
[training]
mlp_epochs = 30
gb_trees = 10
[static]
pd_repeats = 1
alt_epochs_net = 5
alt_epochs_tree = 2
prior_fit = { epochs = 50 }
"#;

const TINY_DYNAMIC: &str = r#"
name = "tiny_dyn"
problem = "lotka_volterra"
seed = 4
scale = 0.02
schemes = ["joint", "pd_based"]
[dynamic]
epochs = 100
pd_block_epochs = 50
pd_final_epochs = 50
pd_repeats = 1
pd_queries = 64
"#;

fn jsonl(cfg: &ExperimentConfig) -> Result<Vec<u8>, String> {
    let records = run_experiment(cfg).map_err(|e| e.to_string())?;
    if let Some(r) = records.iter().find(|r| r.error.is_some()) {
        return Err(format!("unexpected failure in {:?}: {:?}", r.cell, r.error));
    }
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &records).map_err(|e| e.to_string())?;
    Ok(buf)
}

/// Same config and seed twice, on different thread counts, gives
/// byte-identical records.
pub fn runs_are_deterministic() -> Check {
    for text in [TINY_STATIC, TINY_DYNAMIC] {
        let mut cfg = ExperimentConfig::from_toml(text).map_err(|e| e.to_string())?;
        cfg.threads = Some(1);
        let a = jsonl(&cfg)?;
        cfg.threads = Some(3);
        let b = jsonl(&cfg)?;
        if a != b {
            return Err(format!("{} records differ between reruns", cfg.name));
        }
    }
    Ok("static and dynamic reruns are byte-identical".into())
}

/// Dynamic datasets used by the drift check are regenerated identically.
pub fn generators_are_deterministic() -> Check {
    let a = lotka_volterra(3, 0.05).map_err(|e| e.to_string())?;
    let b = lotka_volterra(3, 0.05).map_err(|e| e.to_string())?;
    if a.train.trajectories() == b.train.trajectories() {
        Ok("generators are seeded".into())
    } else {
        Err("generator output changed between calls".into())
    }
}

pub fn all() -> Vec<(&'static str, fn() -> Check)> {
    vec![
        ("pd_matches_naive", pd_matches_naive as fn() -> Check),
        ("net_gradients_match_fd", net_gradients_match_fd),
        ("bptt_gradients_match_fd", bptt_gradients_match_fd),
        ("rk4_is_fourth_order", rk4_is_fourth_order),
        ("energy_is_conserved", energy_is_conserved),
        ("offset_absorbs_mean_of_unknown_part", offset_absorbs_mean_of_unknown_part),
        ("hybrid_is_additive", hybrid_is_additive),
        ("filtered_residual_is_blind", filtered_residual_is_blind),
        ("runs_are_deterministic", runs_are_deterministic),
        ("generators_are_deterministic", generators_are_deterministic),
    ]
}
