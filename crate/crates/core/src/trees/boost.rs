use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_rows, RegressionTree, TreeConfig};
use crate::error::{Error, Result};

/// Least-squares gradient boosting settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    #[serde(default = "default_shrinkage")]
    pub shrinkage: f64,
    /// Truncate to the best validation prefix when validation data is given.
    #[serde(default)]
    pub early_stopping: bool,
}

fn default_shrinkage() -> f64 {
    0.3
}

impl BoostConfig {
    pub fn new(n_trees: usize, max_depth: usize) -> Self {
        Self {
            n_trees,
            max_depth,
            shrinkage: default_shrinkage(),
            early_stopping: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    init: f64,
    shrinkage: f64,
    trees: Vec<RegressionTree>,
}

/// Fits trees to successive residuals. With a validation set the ensemble
/// is truncated to the prefix with the lowest validation MSE.
pub fn fit_gb(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    cfg: BoostConfig,
    val: Option<(ArrayView2<'_, f64>, ArrayView1<'_, f64>)>,
    _seed: u64,
) -> Result<BoostedModel> {
    if cfg.n_trees == 0 {
        return Err(Error::Precondition("boosting needs at least one tree".into()));
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Empty("cannot boost on zero rows".into()));
    }
    let init = y.mean().expect("non-empty");
    let tcfg = TreeConfig {
        max_depth: Some(cfg.max_depth),
        min_samples_split: 2,
    };
    let rows: Vec<usize> = (0..n).collect();
    let mut pred = Array1::from_elem(n, init);
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut val_pred = val.map(|(vx, _)| Array1::from_elem(vx.nrows(), init));
    let val_mse = |p: &Array1<f64>, vy: ArrayView1<'_, f64>| p.iter().zip(vy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
    let mut best = (0usize, val.map_or(f64::INFINITY, |(_, vy)| val_mse(val_pred.as_ref().unwrap(), vy)));
    for t in 0..cfg.n_trees {
        let resid = &y - &pred;
        let tree = fit_tree_rows(x, resid.view(), &rows, tcfg)?;
        pred.scaled_add(cfg.shrinkage, &tree.predict(x)?);
        if let (Some((vx, vy)), Some(vp)) = (val, val_pred.as_mut()) {
            vp.scaled_add(cfg.shrinkage, &tree.predict(vx)?);
            let m = val_mse(vp, vy);
            if m < best.1 {
                best = (t + 1, m);
            }
        }
        trees.push(tree);
    }
    if val.is_some() {
        trees.truncate(best.0);
    }
    Ok(BoostedModel {
        init,
        shrinkage: cfg.shrinkage,
        trees,
    })
}

impl BoostedModel {
    pub fn init(&self) -> f64 {
        self.init
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.predict_first(x, self.trees.len())
    }

    /// Prediction using only the first `k` trees.
    pub fn predict_first(&self, x: ArrayView2<'_, f64>, k: usize) -> Result<Array1<f64>> {
        let mut p = Array1::from_elem(x.nrows(), self.init);
        for t in self.trees.iter().take(k) {
            p.scaled_add(self.shrinkage, &t.predict(x)?);
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::fit_tree;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mse(p: &Array1<f64>, y: &Array1<f64>) -> f64 {
        p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
    }

    #[test]
    fn training_mse_non_increasing_on_linear_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((80, 2), |_| rng.gen_range(-1.0..1.0));
        let y: Array1<f64> = (0..80).map(|i| 2.0 * x[[i, 0]] - x[[i, 1]]).collect();
        let m = fit_gb(x.view(), y.view(), BoostConfig::new(200, 2), None, 0).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=200 {
            let cur = mse(&m.predict_first(x.view(), k).unwrap(), &y);
            assert!(cur <= prev + 1e-12, "T={k}: {cur} > {prev}");
            prev = cur;
        }
    }

    #[test]
    fn unit_shrinkage_single_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((30, 2), |_| rng.gen::<f64>());
        let y: Array1<f64> = (0..30).map(|i| x[[i, 0]] * x[[i, 1]] * 5.0).collect();
        let cfg = BoostConfig {
            shrinkage: 1.0,
            ..BoostConfig::new(1, 2)
        };
        let m = fit_gb(x.view(), y.view(), cfg, None, 0).unwrap();
        let mean = y.mean().unwrap();
        let resid = y.mapv(|v| v - mean);
        let t = fit_tree(x.view(), resid.view(), TreeConfig { max_depth: Some(2), min_samples_split: 2 }, 0).unwrap();
        let want = t.predict(x.view()).unwrap() + mean;
        assert_eq!(m.predict(x.view()).unwrap(), want);
    }

    #[test]
    fn validation_truncation_keeps_best_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((40, 1), |_| rng.gen::<f64>());
        let y: Array1<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let vx = Array2::from_shape_fn((40, 1), |_| rng.gen::<f64>());
        let vy: Array1<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let full = fit_gb(x.view(), y.view(), BoostConfig::new(100, 2), None, 0).unwrap();
        let cut = fit_gb(x.view(), y.view(), BoostConfig::new(100, 2), Some((vx.view(), vy.view())), 0).unwrap();
        let best = mse(&cut.predict(vx.view()).unwrap(), &vy);
        for k in 0..=100 {
            assert!(best <= mse(&full.predict_first(vx.view(), k).unwrap(), &vy) + 1e-12);
        }
    }
}
