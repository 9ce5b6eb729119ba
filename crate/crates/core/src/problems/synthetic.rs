//! Seeded static regression benchmarks.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::StaticProblem;
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::prior::{ParametricPrior, PriorForm};

/// Row counts of the three splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Sizes {
    pub const fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }
}

pub const FRIEDMAN_SIZES: Sizes = Sizes::new(300, 300, 600);
pub const SMALL_SIZES: Sizes = Sizes::new(50, 50, 600);
pub const FRIEDMAN_BASE_THETA: [f64; 6] = [10.0, std::f64::consts::PI, 20.0, 0.5, 10.0, 5.0];

/// Independent RNG stream per purpose so that, e.g., the training split
/// with `n` rows is a prefix of the one with `m > n` rows.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const S_THETA: u64 = 1;
const S_SIGNS: u64 = 2;
const S_SPLIT: u64 = 10;

/// Friedman coefficients: the base values scaled by independent U(0.5, 1.5)
/// factors.
pub fn friedman_theta(seed: u64) -> [f64; 6] {
    let mut rng = stream(seed, S_THETA);
    let mut th = FRIEDMAN_BASE_THETA;
    for t in th.iter_mut() {
        *t *= rng.gen_range(0.5..1.5);
    }
    th
}

fn friedman_target(x: &[f64], th: &[f64; 6]) -> f64 {
    th[0] * (th[1] * x[0] * x[1]).sin() + th[2] * (x[2] - th[3]).powi(2) + th[4] * x[3] + th[5] * x[4]
}

fn friedman_truth(th: &[f64; 6]) -> ParametricPrior {
    ParametricPrior::with_theta(PriorForm::FriedmanSine, vec![th[0], th[1]]).expect("two parameters")
}

fn split_rows<F>(seed: u64, split: Split, n: usize, d: usize, mut draw_x: F, noise_sd: f64, f: &dyn Fn(&[f64]) -> f64) -> (Array2<f64>, Array1<f64>)
where
    F: FnMut(&mut ChaCha8Rng, &mut [f64]),
{
    let mut rng = stream(seed, S_SPLIT + split as u64);
    let mut x = Array2::zeros((n, d));
    let mut y = Array1::zeros(n);
    let mut row = vec![0.0; d];
    for i in 0..n {
        draw_x(&mut rng, &mut row);
        let eps: f64 = rng.sample(StandardNormal);
        x.row_mut(i).iter_mut().zip(&row).for_each(|(a, b)| *a = *b);
        y[i] = f(&row) + noise_sd * eps;
    }
    (x, y)
}

fn check_sizes(s: Sizes) -> Result<()> {
    if s.train == 0 || s.val == 0 || s.test == 0 {
        return Err(Error::Precondition("every split needs at least one row".into()));
    }
    Ok(())
}

fn assemble(
    id: &str,
    seed: u64,
    splits: [(Array2<f64>, Array1<f64>); 3],
    known: Vec<usize>,
    truth: ParametricPrior,
    notes: Vec<String>,
) -> Result<StaticProblem> {
    let [tr, va, te] = splits;
    Ok(StaticProblem {
        id: id.to_string(),
        seed,
        train: Dataset::new(tr.0, tr.1, known.clone(), Split::Train)?,
        val: Dataset::new(va.0, va.1, known.clone(), Split::Val)?,
        test: Dataset::new(te.0, te.1, known, Split::Test)?,
        init_form: truth.form.clone(),
        truth: Some(truth),
        notes,
    })
}

/// `theta0 sin(theta1 x0 x1) + theta2 (x2 - theta3)^2 + theta4 x3 + theta5 x4 + eps`
/// on ten U(0, 1) inputs, five of them irrelevant.
pub fn friedman(seed: u64, sizes: Sizes, theta: Option<[f64; 6]>, noise_sd: f64) -> Result<StaticProblem> {
    check_sizes(sizes)?;
    let th = theta.unwrap_or_else(|| friedman_theta(seed));
    let f = |x: &[f64]| friedman_target(x, &th);
    let draw = |rng: &mut ChaCha8Rng, row: &mut [f64]| row.iter_mut().for_each(|v| *v = rng.gen::<f64>());
    let splits = [
        split_rows(seed, Split::Train, sizes.train, 10, draw, noise_sd, &f),
        split_rows(seed, Split::Val, sizes.val, 10, draw, noise_sd, &f),
        split_rows(seed, Split::Test, sizes.test, 10, draw, noise_sd, &f),
    ];
    assemble("friedman", seed, splits, vec![0, 1], friedman_truth(&th), vec![])
}

/// Covariance with constant variance and off-diagonal entries `+-c`.
///
/// Independent random signs almost never give a positive-definite matrix
/// in ten dimensions, so signs follow `s_i s_j` for a random sign vector
/// `s`, which always does when `var > c`.
pub fn signed_equicorrelation(seed: u64, d: usize, var: f64, c: f64) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut rng = stream(seed, S_SIGNS);
    let s: Vec<f64> = (0..d).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
    let cov = Array2::from_shape_fn((d, d), |(i, j)| if i == j { var } else { c * s[i] * s[j] });
    if cholesky(&cov).is_none() {
        return Err(Error::Precondition("covariance is not positive definite".into()));
    }
    Ok((cov, s))
}

/// Lower Cholesky factor, `None` if the matrix is not positive definite.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                let v = a[[i, i]] - s;
                if v <= 0.0 {
                    return None;
                }
                l[[i, j]] = v.sqrt();
            } else {
                l[[i, j]] = (a[[i, j]] - s) / l[[j, j]];
            }
        }
    }
    Some(l)
}

fn mvn_draw<'a>(mean: &'a [f64], chol: &'a Array2<f64>) -> impl Fn(&mut ChaCha8Rng, &mut [f64]) + Copy + 'a {
    move |rng: &mut ChaCha8Rng, row: &mut [f64]| {
        let z: Vec<f64> = (0..row.len()).map(|_| rng.sample(StandardNormal)).collect();
        for (i, r) in row.iter_mut().enumerate() {
            *r = mean[i] + (0..=i).map(|k| chol[[i, k]] * z[k]).sum::<f64>();
        }
    }
}

/// Friedman structure on correlated Gaussian inputs (mean 0.5, variance
/// 0.75, covariances +-0.3) divided per feature by the training max-abs.
/// The target is computed on the scaled inputs.
pub fn corr_friedman(seed: u64, sizes: Sizes, theta: Option<[f64; 6]>, noise_sd: f64) -> Result<StaticProblem> {
    check_sizes(sizes)?;
    let th = theta.unwrap_or_else(|| friedman_theta(seed));
    let (cov, _) = signed_equicorrelation(seed, 10, 0.75, 0.3)?;
    let chol = cholesky(&cov).expect("checked above");
    let mean = [0.5; 10];
    let draw = mvn_draw(&mean, &chol);
    let zero = |_: &[f64]| 0.0;
    let raw = [
        split_rows(seed, Split::Train, sizes.train, 10, draw, 0.0, &zero),
        split_rows(seed, Split::Val, sizes.val, 10, draw, 0.0, &zero),
        split_rows(seed, Split::Test, sizes.test, 10, draw, 0.0, &zero),
    ];
    let scale: Vec<f64> = (0..10)
        .map(|j| raw[0].0.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE))
        .collect();
    let mut out = Vec::with_capacity(3);
    for (k, (mut x, _)) in raw.into_iter().enumerate() {
        for j in 0..10 {
            x.column_mut(j).mapv_inplace(|v| v / scale[j]);
        }
        // fresh noise stream, independent of the input draws
        let mut rng = stream(seed, S_SPLIT + 100 + k as u64);
        let y: Array1<f64> = x
            .rows()
            .into_iter()
            .map(|r| friedman_target(r.as_slice().expect("row-major"), &th) + noise_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        out.push((x, y));
    }
    let splits: [(Array2<f64>, Array1<f64>); 3] = out.try_into().expect("three splits");
    let note = format!("input scale (train max-abs): {scale:?}");
    assemble("corr_friedman", seed, splits, vec![0, 1], friedman_truth(&th), vec![note])
}

pub const CORR_LINEAR_BETA: [f64; 2] = [-0.5, 1.0];
/// `var(x0)`, `cov(x0, x1)`, `var(x1)`.
pub const CORR_LINEAR_COV: [f64; 3] = [2.0, 2.25, 3.0];

fn corr_linear_cov() -> Array2<f64> {
    let [a, c, b] = CORR_LINEAR_COV;
    ndarray::arr2(&[[a, c], [c, b]])
}

/// `y = -0.5 x0 + x1 + eps`, `eps ~ N(0, 0.5^2)`, strongly correlated inputs.
pub fn corr_linear(seed: u64, sizes: Sizes, noise_sd: f64) -> Result<StaticProblem> {
    check_sizes(sizes)?;
    let chol = cholesky(&corr_linear_cov()).expect("positive definite");
    let mean = [0.0; 2];
    let draw = mvn_draw(&mean, &chol);
    let f = |x: &[f64]| CORR_LINEAR_BETA[0] * x[0] + CORR_LINEAR_BETA[1] * x[1];
    let splits = [
        split_rows(seed, Split::Train, sizes.train, 2, draw, noise_sd, &f),
        split_rows(seed, Split::Val, sizes.val, 2, draw, noise_sd, &f),
        split_rows(seed, Split::Test, sizes.test, 2, draw, noise_sd, &f),
    ];
    let truth = ParametricPrior::with_theta(PriorForm::Linear { known: vec![0] }, vec![CORR_LINEAR_BETA[0]])?;
    assemble("corr_linear", seed, splits, vec![0], truth, vec![])
}

pub const OVERLAP_COEF: [f64; 3] = [0.2, 1.5, 1.0];

/// `y = 0.2 x0^2 + sin(1.5 x0) + x1 + eps` on the correlated-linear inputs.
pub fn overlapping(seed: u64, sizes: Sizes, noise_sd: f64) -> Result<StaticProblem> {
    check_sizes(sizes)?;
    let chol = cholesky(&corr_linear_cov()).expect("positive definite");
    let mean = [0.0; 2];
    let draw = mvn_draw(&mean, &chol);
    let [b, g, d] = OVERLAP_COEF;
    let f = move |x: &[f64]| b * x[0] * x[0] + (g * x[0]).sin() + d * x[1];
    let splits = [
        split_rows(seed, Split::Train, sizes.train, 2, draw, noise_sd, &f),
        split_rows(seed, Split::Val, sizes.val, 2, draw, noise_sd, &f),
        split_rows(seed, Split::Test, sizes.test, 2, draw, noise_sd, &f),
    ];
    let truth = ParametricPrior::with_theta(PriorForm::Quadratic { index: 0 }, vec![b])?;
    assemble("overlapping", seed, splits, vec![0], truth, vec![])
}

/// Empirical covariance of the rows of `x`.
pub fn sample_cov(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mean = x.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let c = x - &mean;
    c.t().dot(&c) / (n - 1.0)
}
