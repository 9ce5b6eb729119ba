//! Experiment orchestration: data generation, training and evaluation for
//! every (replicate, training size, scheme, model, filter) cell.

use std::time::Instant;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, ModelId, SchemeId};
use crate::error::{Error, Result};
use crate::metrics::{eval_d_hat, eval_dk_hat, eval_dk_hat_traj, eval_rmae, eval_traj_mse};
use crate::ode::IntegratorCfg;
use crate::prior::ParametricPrior;
use crate::problems::{dynamic_problem, static_problem, DynamicProblem, GenOptions, Sizes, StaticProblem};
use crate::report::{Cell, Metrics, Record};
use crate::schemes::dynamics::run_dynamic;
use crate::schemes::regression::run_static;
use crate::schemes::StaticScheme;
use crate::hybrid::HybridModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A scheme/model/filter combination run on one generated problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arm {
    pub scheme: SchemeId,
    pub model: ModelId,
    pub filtered: bool,
}

/// Cells to run per generated problem. Filtering is meaningless for the
/// residual-only baseline and undefined for PD-based training, so those
/// combinations are dropped; dynamic residuals are never filtered.
pub fn arms(cfg: &ExperimentConfig) -> Result<Vec<Arm>> {
    let mut out = Vec::new();
    for scheme in cfg.scheme_ids()? {
        for model in cfg.model_ids() {
            for filtered in cfg.filter_flags() {
                let skip = filtered
                    && matches!(
                        scheme,
                        SchemeId::Static(StaticScheme::HaOnly) | SchemeId::Dynamic(_)
                    );
                if !skip {
                    out.push(Arm { scheme, model, filtered });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::config("no runnable cells"));
    }
    Ok(out)
}

fn gen_options(cfg: &ExperimentConfig, n_train: Option<usize>) -> GenOptions {
    let sizes = n_train.map(|n| {
        let d = cfg.problem.default_sizes();
        Sizes::new(n, d.val, d.test)
    });
    let data_dir = cfg.data_dir.clone().or_else(|| std::env::var_os("HYBRIDFIT_DATA_DIR").map(Into::into));
    GenOptions {
        sizes,
        noise_sd: cfg.noise_sd,
        scale: cfg.scale,
        data_dir,
    }
}

fn init_prior(form: &crate::prior::PriorForm, seed: u64) -> ParametricPrior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1f1f);
    ParametricPrior::random(form.clone(), &mut rng)
}

fn prior_fields(rec: &mut Record, model: &HybridModel, truth: Option<&ParametricPrior>) {
    let prior = model.prior.canonical();
    rec.theta_hat = Some(prior.theta.clone());
    rec.gamma_hat = Some(prior.gamma.clone());
    rec.theta_star = truth.map(|t| t.theta.clone());
    if let Some(t) = truth {
        rec.metrics.rmae = eval_rmae(&prior.theta, &t.theta).ok();
    }
}

fn run_static_arm(cfg: &ExperimentConfig, p: &StaticProblem, arm: Arm, seed: u64, rec: &mut Record) -> Result<()> {
    let SchemeId::Static(scheme) = arm.scheme else {
        return Err(Error::config("dynamic scheme on a static problem"));
    };
    let filter = if arm.filtered { p.init_form.known_indices() } else { vec![] };
    let residual = cfg.residual(arm.model, filter);
    let truth = p.truth.as_ref();
    if scheme == StaticScheme::FkThenHa && truth.is_none() {
        return Err(Error::config("fk_then_ha needs a ground-truth prior"));
    }
    let fallback = ParametricPrior::with_theta(p.init_form.clone(), vec![0.0; p.init_form.n_theta()])?;
    let out = run_static(
        scheme,
        init_prior(&p.init_form, seed),
        truth.unwrap_or(&fallback),
        &residual,
        &p.train,
        Some(&p.val),
        &cfg.static_cfg,
        seed,
    )?;
    let d = eval_d_hat(&out.model, &p.test)?;
    rec.metrics.d_hat = Some(d);
    rec.metrics.val_loss = out.val_loss;
    if scheme.estimates_prior() {
        prior_fields(rec, &out.model, truth);
        if let Some(t) = truth {
            rec.metrics.dk_hat = Some(eval_dk_hat(&out.model.prior, t, p.test.features())?);
        }
    }
    Ok(())
}

fn run_dynamic_arm(cfg: &ExperimentConfig, p: &DynamicProblem, arm: Arm, seed: u64, rec: &mut Record) -> Result<()> {
    let SchemeId::Dynamic(scheme) = arm.scheme else {
        return Err(Error::config("static scheme on a dynamical problem"));
    };
    let residual = cfg.residual(arm.model, vec![]);
    let dcfg = cfg.dynamic_cfg();
    let out = run_dynamic(scheme, init_prior(&p.truth.form, seed), &p.truth, &residual, &p.train, Some(&p.val), &dcfg, seed)?;
    let d = eval_traj_mse(&out.model, &p.test, IntegratorCfg::euler(p.test.dt()))?;
    rec.metrics.d_hat = Some(d);
    rec.metrics.log_d_hat = Some(d.ln());
    rec.metrics.val_loss = out.val_loss;
    if scheme.estimates_prior() {
        prior_fields(rec, &out.model, Some(&p.truth));
        rec.metrics.dk_hat = Some(eval_dk_hat_traj(&out.model.prior, &p.truth, &p.test)?);
    }
    Ok(())
}

enum Generated {
    Static(StaticProblem),
    Dynamic(DynamicProblem),
}

fn blank(cfg: &ExperimentConfig, n_train: usize, arm: Arm, replicate: usize, seed: u64) -> Record {
    Record {
        cell: Cell {
            problem: cfg.problem.id().to_string(),
            n_train,
            scheme: arm.scheme.id().to_string(),
            model: arm.model.id().to_string(),
            filtered: arm.filtered,
        },
        replicate,
        seed,
        metrics: Metrics::default(),
        theta_hat: None,
        gamma_hat: None,
        theta_star: None,
        error: None,
        wall_time_s: None,
    }
}

/// Runs every cell of one (replicate, training size) group. Failures are
/// captured in the records and never propagate.
fn run_group(cfg: &ExperimentConfig, arms: &[Arm], replicate: usize, n_train: Option<usize>) -> Vec<Record> {
    let seed = cfg.seed.wrapping_add(replicate as u64);
    let opts = gen_options(cfg, n_train);
    let generated = if cfg.problem.is_dynamic() {
        dynamic_problem(cfg.problem, seed, &opts).map(Generated::Dynamic)
    } else {
        static_problem(cfg.problem, seed, &opts).map(Generated::Static)
    };
    let size = match &generated {
        Ok(Generated::Static(p)) => p.train.len(),
        Ok(Generated::Dynamic(p)) => p.train.len(),
        Err(_) => n_train.unwrap_or(0),
    };
    arms.par_iter()
        .map(|&arm| {
            let mut rec = blank(cfg, size, arm, replicate, seed);
            let start = Instant::now();
            let res = match &generated {
                Ok(Generated::Static(p)) => run_static_arm(cfg, p, arm, seed, &mut rec),
                Ok(Generated::Dynamic(p)) => run_dynamic_arm(cfg, p, arm, seed, &mut rec),
                Err(e) => Err(Error::Precondition(format!("data generation failed: {e}"))),
            };
            if let Err(e) = res {
                rec.metrics = Metrics::default();
                rec.error = Some(e.to_string());
            }
            if cfg.record_timing {
                rec.wall_time_s = Some(start.elapsed().as_secs_f64());
            }
            rec
        })
        .collect()
}

/// Runs the whole experiment and returns records sorted by cell, then
/// replicate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Record>> {
    cfg.validate()?;
    let arms = arms(cfg)?;
    let sizes: Vec<Option<usize>> = if cfg.train_sizes.is_empty() {
        vec![None]
    } else {
        cfg.train_sizes.iter().map(|&n| Some(n)).collect()
    };
    let groups: Vec<(usize, Option<usize>)> = (0..cfg.replicates).flat_map(|r| sizes.iter().map(move |&n| (r, n))).collect();
    let work = || -> Vec<Record> {
        groups
            .par_iter()
            .flat_map_iter(|&(r, n)| run_group(cfg, &arms, r, n))
            .collect()
    };
    let mut records = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::config(e.to_string()))?
            .install(work),
        None => work(),
    };
    records.sort_by(|a, b| a.cell.cmp(&b.cell).then(a.replicate.cmp(&b.replicate)));
    Ok(records)
}
