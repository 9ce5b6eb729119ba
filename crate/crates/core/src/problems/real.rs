//! Loader for the power-plant (CCPP) and concrete-strength (CCS) tables.
//!
//! Expected CSV layout (header row required, comma separated):
//!
//! * CCPP: `T,AP,RH,V,PE` (`AT` is accepted for `T`); target `PE`.
//! * CCS: `Cement,Blast Furnace Slag,Fly Ash,Water,Superplasticizer,Coarse
//!   Aggregate,Fine Aggregate,Age,Strength`; a `Cement/Water` column is
//!   appended on load. Target `Strength`.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StaticProblem;
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::prior::PriorForm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RealDataset {
    Ccpp,
    Ccs,
}

/// Interpolation (random split) or extrapolation (lowest-quartile targets
/// held out for testing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Int,
    Ext,
}

pub const TRAIN_ROWS: usize = 100;
pub const VAL_ROWS: usize = 100;

impl RealDataset {
    pub fn id(self) -> &'static str {
        match self {
            RealDataset::Ccpp => "ccpp",
            RealDataset::Ccs => "ccs",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            RealDataset::Ccpp => "ccpp.csv",
            RealDataset::Ccs => "ccs.csv",
        }
    }

    /// Accepted header spellings for each input column, then the target.
    fn schema(self) -> (Vec<&'static [&'static str]>, &'static [&'static str]) {
        match self {
            RealDataset::Ccpp => (vec![&["T", "AT"], &["AP"], &["RH"], &["V"]], &["PE"]),
            RealDataset::Ccs => (
                vec![
                    &["Cement"],
                    &["Blast Furnace Slag"],
                    &["Fly Ash"],
                    &["Water"],
                    &["Superplasticizer"],
                    &["Coarse Aggregate"],
                    &["Fine Aggregate"],
                    &["Age"],
                ],
                &["Strength"],
            ),
        }
    }

    pub fn feature_names(self) -> Vec<&'static str> {
        let mut names: Vec<_> = self.schema().0.iter().map(|a| a[0]).collect();
        if self == RealDataset::Ccs {
            names.push("Cement/Water");
        }
        names
    }

    /// Column read by the linear prior.
    pub fn known_feature(self) -> usize {
        match self {
            RealDataset::Ccpp => 0,
            RealDataset::Ccs => 8,
        }
    }
}

/// Raw table: inputs (with derived columns) and target.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTable {
    pub dataset: RealDataset,
    pub features: Array2<f64>,
    pub target: Array1<f64>,
}

pub fn read_table(path: &Path, dataset: RealDataset) -> Result<RealTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |names: &[&str]| -> Result<usize> {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
            .ok_or_else(|| Error::Schema(format!("{}: missing column {}", path.display(), names[0])))
    };
    let (inputs, target) = dataset.schema();
    let cols: Vec<usize> = inputs.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let tcol = find(target)?;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Schema(format!("{}: row {} column {} is not a number", path.display(), line + 2, c + 1)))
        };
        let mut r: Vec<f64> = cols.iter().map(|&c| parse(c)).collect::<Result<_>>()?;
        if dataset == RealDataset::Ccs {
            if r[3] == 0.0 {
                return Err(Error::Schema(format!("{}: row {} has zero water", path.display(), line + 2)));
            }
            r.push(r[0] / r[3]);
        }
        rows.push(r);
        y.push(parse(tcol)?);
    }
    let d = dataset.feature_names().len();
    let n = rows.len();
    let features = Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(|e| Error::Schema(e.to_string()))?;
    Ok(RealTable {
        dataset,
        features,
        target: Array1::from(y),
    })
}

fn standardize(train: &mut Array2<f64>, others: &mut [&mut Array2<f64>]) {
    for j in 0..train.ncols() {
        let col = train.column(j);
        let m = col.mean().unwrap_or(0.0);
        let sd = col.std(0.0).max(f64::MIN_POSITIVE);
        train.column_mut(j).mapv_inplace(|v| (v - m) / sd);
        for o in others.iter_mut() {
            o.column_mut(j).mapv_inplace(|v| (v - m) / sd);
        }
    }
}

/// Splits and standardizes a table; statistics come from the training
/// split only.
pub fn split_table(table: &RealTable, mode: SplitMode, seed: u64) -> Result<StaticProblem> {
    let n = table.target.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pool, test): (Vec<usize>, Vec<usize>) = match mode {
        SplitMode::Int => ((0..n).collect(), Vec::new()),
        SplitMode::Ext => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| table.target[a].total_cmp(&table.target[b]).then(a.cmp(&b)));
            let cut = n / 4;
            (order[cut..].to_vec(), order[..cut].to_vec())
        }
    };
    if pool.len() < TRAIN_ROWS + VAL_ROWS + usize::from(mode == SplitMode::Int) || (mode == SplitMode::Ext && test.is_empty()) {
        return Err(Error::Precondition(format!("{} rows are too few for the {mode:?} protocol", n)));
    }
    pool.sort_unstable();
    pool.shuffle(&mut rng);
    let train = pool[..TRAIN_ROWS].to_vec();
    let val = pool[TRAIN_ROWS..TRAIN_ROWS + VAL_ROWS].to_vec();
    let test = if mode == SplitMode::Int { pool[TRAIN_ROWS + VAL_ROWS..].to_vec() } else { test };

    let take = |rows: &[usize]| (table.features.select(Axis(0), rows), table.target.select(Axis(0), rows));
    let (mut xtr, ytr) = take(&train);
    let (mut xva, yva) = take(&val);
    let (mut xte, yte) = take(&test);
    standardize(&mut xtr, &mut [&mut xva, &mut xte]);
    let mut ys = [ytr.insert_axis(Axis(1)), yva.insert_axis(Axis(1)), yte.insert_axis(Axis(1))];
    let [a, b, c] = &mut ys;
    standardize(a, &mut [b, c]);
    let [ytr, yva, yte] = ys.map(|y| y.column(0).to_owned());

    let k = table.dataset.known_feature();
    let mode_id = match mode {
        SplitMode::Int => "int",
        SplitMode::Ext => "ext",
    };
    Ok(StaticProblem {
        id: format!("{}_{mode_id}", table.dataset.id()),
        seed,
        train: Dataset::new(xtr, ytr, vec![k], Split::Train)?,
        val: Dataset::new(xva, yva, vec![k], Split::Val)?,
        test: Dataset::new(xte, yte, vec![k], Split::Test)?,
        init_form: PriorForm::Linear { known: vec![k] },
        truth: None,
        notes: vec![],
    })
}

/// Reads and splits in one call.
pub fn load_real(path: &Path, dataset: RealDataset, mode: SplitMode, seed: u64) -> Result<StaticProblem> {
    split_table(&read_table(path, dataset)?, mode, seed)
}
