use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_rows, RegressionTree, TreeConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_samples_split: usize,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "yes")]
    pub bootstrap: bool,
}

fn yes() -> bool {
    true
}

impl ForestConfig {
    pub fn new(n_trees: usize, min_samples_split: usize) -> Self {
        Self {
            n_trees,
            min_samples_split,
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<RegressionTree>,
}

/// Per-tree RNG: stream `t` of the master seed.
fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64 + 1);
    rng
}

pub fn fit_rf(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: ForestConfig, seed: u64) -> Result<ForestModel> {
    if cfg.n_trees == 0 {
        return Err(Error::Precondition("forest needs at least one tree".into()));
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Empty("cannot fit a forest on zero rows".into()));
    }
    let tcfg = TreeConfig {
        max_depth: cfg.max_depth,
        min_samples_split: cfg.min_samples_split,
    };
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let rows: Vec<usize> = if cfg.bootstrap {
                let mut rng = tree_rng(seed, t);
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree_rows(x, y, &rows, tcfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { trees })
}

impl ForestModel {
    pub fn from_trees(trees: Vec<RegressionTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Empty("forest without trees".into()));
        }
        Ok(Self { trees })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.trees[0].n_features()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let mut acc = Array1::zeros(x.nrows());
        for t in &self.trees {
            acc += &t.predict(x)?;
        }
        Ok(acc / self.trees.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::fit_tree;
    use ndarray::Array2;

    fn data() -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((60, 3), |_| rng.gen::<f64>());
        let y = (0..60).map(|i| (4.0 * x[[i, 0]]).sin() + x[[i, 1]] + 0.1 * rng.gen::<f64>()).collect();
        (x, y)
    }

    #[test]
    fn single_tree_without_bootstrap_is_plain_cart() {
        let (x, y) = data();
        let cfg = ForestConfig {
            bootstrap: false,
            ..ForestConfig::new(1, 5)
        };
        let f = fit_rf(x.view(), y.view(), cfg, 3).unwrap();
        let t = fit_tree(x.view(), y.view(), TreeConfig { max_depth: None, min_samples_split: 5 }, 3).unwrap();
        assert_eq!(f.predict(x.view()).unwrap(), t.predict(x.view()).unwrap());
    }

    #[test]
    fn seeded_and_order_independent() {
        let (x, y) = data();
        let a = fit_rf(x.view(), y.view(), ForestConfig::new(20, 5), 42).unwrap();
        let b = fit_rf(x.view(), y.view(), ForestConfig::new(20, 5), 42).unwrap();
        assert_eq!(a, b);
        let mut rev = a.trees().to_vec();
        rev.reverse();
        let r = ForestModel::from_trees(rev).unwrap();
        let (pa, pr) = (a.predict(x.view()).unwrap(), r.predict(x.view()).unwrap());
        for (u, v) in pa.iter().zip(pr.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_predictions_stay_within_targets() {
        let (x, y) = data();
        let f = fit_rf(x.view(), y.view(), ForestConfig::new(10, 5), 1).unwrap();
        let far = Array2::from_shape_fn((5, 3), |(i, _)| if i % 2 == 0 { 50.0 } else { -50.0 });
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!(f.predict(far.view()).unwrap().iter().all(|p| *p >= lo && *p <= hi));
    }
}
