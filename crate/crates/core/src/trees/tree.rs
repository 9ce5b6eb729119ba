use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until nodes are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

struct Builder<'a, 'b> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'b, f64>,
    cfg: TreeConfig,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_, '_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n as f64;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));

        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == first);
        if !depth_ok || n < self.cfg.min_samples_split.max(2) || pure {
            return id;
        }
        let Some(best) = self.best_split(idx, sum) else {
            return id;
        };
        let (f, t) = (best.feature, best.threshold);
        // stable partition keeps row order deterministic
        let (mut l, mut r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[[i, f]] <= t);
        let left = self.grow(&mut l, depth + 1);
        let right = self.grow(&mut r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: f,
            threshold: t,
            left,
            right,
        };
        id
    }

    fn best_split(&self, idx: &[usize], sum: f64) -> Option<BestSplit> {
        let n = idx.len() as f64;
        let parent = sum * sum / n;
        let sse: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum::<f64>() - parent;
        let tol = 1e-12 * sse.abs().max(f64::MIN_POSITIVE);
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x.ncols() {
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]).then(a.cmp(&b)));
            let mut left = 0.0;
            for k in 0..order.len() - 1 {
                left += self.y[order[k]];
                let (lo, hi) = (self.x[[order[k], f]], self.x[[order[k + 1], f]]);
                if lo == hi {
                    continue;
                }
                let nl = (k + 1) as f64;
                let right = sum - left;
                let gain = left * left / nl + right * right / (n - nl) - parent;
                if gain > tol && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold: 0.5 * (lo + hi),
                    });
                }
            }
        }
        best
    }
}

/// Fits a variance-reduction CART tree on the rows listed in `rows`
/// (duplicates allowed, as produced by bootstrapping).
pub(crate) fn fit_tree_rows(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, rows: &[usize], cfg: TreeConfig) -> Result<RegressionTree> {
    if rows.is_empty() {
        return Err(Error::Empty("cannot fit a tree on zero rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::shape(x.nrows(), y.len()));
    }
    let mut b = Builder {
        x,
        y,
        cfg,
        nodes: Vec::new(),
    };
    let mut idx = rows.to_vec();
    b.grow(&mut idx, 0);
    Ok(RegressionTree {
        nodes: b.nodes,
        n_features: x.ncols(),
    })
}

/// Fits a tree on every row. Split search is exhaustive, so the seed only
/// exists for interface symmetry with the ensembles.
pub fn fit_tree(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: TreeConfig, _seed: u64) -> Result<RegressionTree> {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    fit_tree_rows(x, y, &rows, cfg)
}

impl RegressionTree {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf(v) => Some(*v),
                _ => None,
            })
            .collect()
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                _ => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::shape(format!("{} input columns", self.n_features), x.ncols()));
        }
        Ok(x.rows().into_iter().map(|r| self.predict_row(r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sse(pred: &Array1<f64>, y: &Array1<f64>) -> f64 {
        pred.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![4.0, 4.0, 4.0];
        let t = fit_tree(x.view(), y.view(), TreeConfig::default(), 0).unwrap();
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.predict(array![[100.0]].view()).unwrap()[0], 4.0);
    }

    #[test]
    fn step_function_split_at_midpoint() {
        let x = array![[-1.0], [1.0]];
        let y = array![0.0, 1.0];
        let cfg = TreeConfig {
            max_depth: Some(1),
            min_samples_split: 2,
        };
        let t = fit_tree(x.view(), y.view(), cfg, 0).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict(x.view()).unwrap(), y);
        assert_eq!(t.predict(array![[-0.01], [0.01]].view()).unwrap(), array![0.0, 1.0]);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // both columns separate the targets perfectly
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let y = array![0.0, 1.0];
        let t = fit_tree(x.view(), y.view(), TreeConfig::default(), 0).unwrap();
        assert_eq!(t.split_features(), vec![0]);
    }

    #[test]
    fn depth_two_beats_best_single_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((50, 3), |_| rng.gen::<f64>());
        let y: Array1<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();

        // exhaustive single-split oracle
        let mut best = f64::INFINITY;
        for f in 0..3 {
            for r in 0..50 {
                let t = x[[r, f]];
                let (l, h): (Vec<f64>, Vec<f64>) = (0..50).map(|i| (x[[i, f]], y[i])).fold((vec![], vec![]), |(mut l, mut h), (v, yi)| {
                    if v <= t {
                        l.push(yi)
                    } else {
                        h.push(yi)
                    }
                    (l, h)
                });
                let part = |v: &Vec<f64>| {
                    if v.is_empty() {
                        return 0.0;
                    }
                    let m = v.iter().sum::<f64>() / v.len() as f64;
                    v.iter().map(|a| (a - m) * (a - m)).sum::<f64>()
                };
                best = best.min(part(&l) + part(&h));
            }
        }
        let cfg = TreeConfig {
            max_depth: Some(2),
            min_samples_split: 2,
        };
        let t = fit_tree(x.view(), y.view(), cfg, 0).unwrap();
        assert!(t.depth() <= 2);
        assert!(sse(&t.predict(x.view()).unwrap(), &y) <= best + 1e-12);

        let stump = fit_tree(x.view(), y.view(), TreeConfig { max_depth: Some(1), ..cfg }, 0).unwrap();
        assert!((sse(&stump.predict(x.view()).unwrap(), &y) - best).abs() < 1e-9);
    }

    #[test]
    fn leaves_are_means_of_their_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((40, 2), |_| rng.gen::<f64>());
        let y: Array1<f64> = (0..40).map(|i| x[[i, 0]] * 3.0 + rng.gen::<f64>()).collect();
        let cfg = TreeConfig {
            max_depth: Some(3),
            min_samples_split: 5,
        };
        let t = fit_tree(x.view(), y.view(), cfg, 0).unwrap();
        let pred = t.predict(x.view()).unwrap();
        for v in t.leaf_values() {
            let members: Vec<f64> = (0..40).filter(|&i| pred[i] == v).map(|i| y[i]).collect();
            let m = members.iter().sum::<f64>() / members.len() as f64;
            assert!((m - v).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_rows_is_error() {
        let x = Array2::<f64>::zeros((0, 2));
        let y = Array1::<f64>::zeros(0);
        assert!(matches!(fit_tree(x.view(), y.view(), TreeConfig::default(), 0), Err(Error::Empty(_))));
    }
}
