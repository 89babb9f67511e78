//! Imputation, scaling and one-hot encoding fitted on training rows only.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{ColumnData, FeatureMatrix, FeatureSchema};
use crate::gbdt::DenseMatrix;

/// Relative spread below which a numeric column counts as constant.
const DEGENERATE_STD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnStats {
    Numeric { mean: f64, std: f64 },
    /// Sorted training tokens followed by the missing category (`null`).
    Categorical { categories: Vec<Option<String>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessorState {
    pub schema: FeatureSchema,
    pub columns: Vec<ColumnStats>,
    pub n_fit_rows: usize,
}

/// Dense design matrix with the provenance of each column.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub x: DenseMatrix,
    pub column_names: Vec<String>,
    /// Source feature of each design column (one-hot columns share one).
    pub source_features: Vec<String>,
}

pub fn fit(train: &FeatureMatrix) -> Result<PreprocessorState> {
    train.validate()?;
    if train.n_rows() == 0 {
        return Err(Error::InsufficientData("cannot fit a preprocessor on an empty matrix".into()));
    }
    let columns = train
        .columns
        .iter()
        .map(|col| match col {
            ColumnData::Numeric(values) => numeric_stats(values),
            ColumnData::Categorical(values) => {
                let tokens: BTreeSet<&str> = values.iter().flatten().map(String::as_str).collect();
                let mut categories: Vec<Option<String>> = tokens.into_iter().map(|t| Some(t.to_string())).collect();
                categories.push(None);
                ColumnStats::Categorical { categories }
            }
        })
        .collect();
    Ok(PreprocessorState {
        schema: train.schema.clone(),
        columns,
        n_fit_rows: train.n_rows(),
    })
}

fn numeric_stats(values: &[Option<f64>]) -> ColumnStats {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return ColumnStats::Numeric { mean: 0.0, std: 1.0 };
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let var = present.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let std = if std <= DEGENERATE_STD * mean.abs().max(1.0) { 1.0 } else { std };
    ColumnStats::Numeric { mean, std }
}

impl PreprocessorState {
    pub fn output_width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                ColumnStats::Numeric { .. } => 1,
                ColumnStats::Categorical { categories } => categories.len(),
            })
            .sum()
    }

    pub fn column_names(&self) -> (Vec<String>, Vec<String>) {
        let mut names = Vec::with_capacity(self.output_width());
        let mut sources = Vec::with_capacity(self.output_width());
        for (spec, stats) in self.schema.features.iter().zip(&self.columns) {
            match stats {
                ColumnStats::Numeric { .. } => {
                    names.push(spec.name.clone());
                    sources.push(spec.name.clone());
                }
                ColumnStats::Categorical { categories } => {
                    for c in categories {
                        names.push(match c {
                            Some(token) => format!("{}={token}", spec.name),
                            None => format!("{}=<missing>", spec.name),
                        });
                        sources.push(spec.name.clone());
                    }
                }
            }
        }
        (names, sources)
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<Design> {
        m.validate()?;
        if m.schema.features != self.schema.features {
            return Err(Error::Schema("matrix features differ from the fitted schema".into()));
        }
        let width = self.output_width();
        let n = m.n_rows();
        let mut data = vec![0.0; n * width];
        let mut offset = 0;
        for (col, stats) in m.columns.iter().zip(&self.columns) {
            match (col, stats) {
                (ColumnData::Numeric(values), ColumnStats::Numeric { mean, std }) => {
                    for (r, v) in values.iter().enumerate() {
                        let x = v.unwrap_or(*mean);
                        data[r * width + offset] = (x - mean) / std;
                    }
                    offset += 1;
                }
                (ColumnData::Categorical(values), ColumnStats::Categorical { categories }) => {
                    let missing_slot = categories.len() - 1;
                    for (r, v) in values.iter().enumerate() {
                        let slot = v
                            .as_deref()
                            .and_then(|token| {
                                categories[..missing_slot]
                                    .binary_search_by(|c| c.as_deref().unwrap_or_default().cmp(token))
                                    .ok()
                            })
                            .unwrap_or(missing_slot);
                        data[r * width + offset + slot] = 1.0;
                    }
                    offset += categories.len();
                }
                _ => return Err(Error::Schema("column kind differs from fitted statistics".into())),
            }
        }
        let (column_names, source_features) = self.column_names();
        Ok(Design {
            x: DenseMatrix::new(n, width, data)?,
            column_names,
            source_features,
        })
    }
}
