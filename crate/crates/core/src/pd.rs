//! Partial dependence of a fitted model on the prior's inputs.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::residual::Predictor;

/// Upper bound on rows evaluated per model call.
const BLOCK_ROWS: usize = 1 << 16;

fn check(model: &dyn Predictor, known: &[usize], background: &ArrayView2<'_, f64>) -> Result<()> {
    if background.nrows() == 0 {
        return Err(Error::Empty("partial dependence needs background rows".into()));
    }
    if background.ncols() != model.n_inputs() {
        return Err(Error::config(format!("model reads {} inputs, background has {}", model.n_inputs(), background.ncols())));
    }
    let excluded = model.excluded_inputs();
    if let Some(k) = known.iter().find(|k| excluded.contains(k)) {
        return Err(Error::config(format!("partial dependence undefined: input {k} is filtered out of the model")));
    }
    if let Some(k) = known.iter().find(|&&k| k >= background.ncols()) {
        return Err(Error::config(format!("known index {k} out of range")));
    }
    Ok(())
}

/// `mean_i model(x_k = query, x_{-k} = background_i)`, one value per output.
pub fn pd_estimate(model: &dyn Predictor, known: &[usize], xk_query: ArrayView1<'_, f64>, background: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if xk_query.len() != known.len() {
        return Err(Error::shape(format!("{} query coordinates", known.len()), xk_query.len()));
    }
    check(model, known, &background)?;
    let mut full = Array2::zeros((1, background.ncols()));
    for (j, &k) in known.iter().enumerate() {
        full[[0, k]] = xk_query[j];
    }
    Ok(pd_grid(model, known, full.view(), background)?.row(0).to_owned())
}

/// Partial dependence evaluated at the `x_k` part of every row of
/// `queries`, averaging over `background`. Returns `(n_queries, n_outputs)`.
pub fn pd_grid(model: &dyn Predictor, known: &[usize], queries: ArrayView2<'_, f64>, background: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check(model, known, &background)?;
    let d = background.ncols();
    if queries.ncols() != d {
        return Err(Error::shape(format!("{d} query columns"), queries.ncols()));
    }
    // With no complementary inputs the average is a single evaluation.
    if known.len() == d {
        return model.predict(queries);
    }
    let n_bg = background.nrows();
    let per_block = (BLOCK_ROWS / n_bg).max(1);
    let mut out = Array2::zeros((queries.nrows(), model.n_outputs()));
    let mut start = 0;
    while start < queries.nrows() {
        let end = (start + per_block).min(queries.nrows());
        let mut stacked = Array2::zeros(((end - start) * n_bg, d));
        for (qi, q) in (start..end).enumerate() {
            let mut block = stacked.slice_mut(ndarray::s![qi * n_bg..(qi + 1) * n_bg, ..]);
            block.assign(&background);
            for &k in known {
                block.column_mut(k).fill(queries[[q, k]]);
            }
        }
        let pred = model.predict(stacked.view())?;
        for (qi, q) in (start..end).enumerate() {
            let block = pred.slice(ndarray::s![qi * n_bg..(qi + 1) * n_bg, ..]);
            let mut acc = Array1::<f64>::zeros(model.n_outputs());
            for r in block.rows() {
                acc += &r;
            }
            out.row_mut(q).assign(&(acc / n_bg as f64));
        }
        start = end;
    }
    Ok(out)
}

/// Proxy dataset targets: the partial dependence at every row's own `x_k`,
/// using the rows themselves as background.
pub fn pd_dataset(model: &dyn Predictor, known: &[usize], x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    pd_grid(model, known, x, x)
}
