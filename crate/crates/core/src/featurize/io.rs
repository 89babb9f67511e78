use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{ColumnData, FeatureKind, FeatureMatrix, FeatureSchema};
use crate::error::{Error, Result};

const ID_COLUMN: &str = "task_id";
const TARGET_COLUMN: &str = "is_error";

/// Writes the matrix as CSV (missing cells empty) plus its JSON schema.
pub fn write_feature_matrix(csv_path: impl AsRef<Path>, schema_path: impl AsRef<Path>, m: &FeatureMatrix) -> Result<()> {
    m.validate()?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(schema_path)?), &m.schema)?;
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(csv_path)?));
    let mut header = vec![ID_COLUMN];
    header.extend(m.schema.names());
    header.push(TARGET_COLUMN);
    wtr.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for r in 0..m.n_rows() {
        record.clear();
        record.push(m.task_ids[r].clone());
        for col in &m.columns {
            record.push(match col {
                ColumnData::Numeric(v) => v[r].map(|x| x.to_string()).unwrap_or_default(),
                ColumnData::Categorical(v) => v[r].clone().unwrap_or_default(),
            });
        }
        record.push(if m.target[r] { "1" } else { "0" }.to_string());
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_feature_matrix(csv_path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let csv_path = csv_path.as_ref();
    let name = csv_path.display().to_string();
    let schema: FeatureSchema = serde_json::from_reader(File::open(schema_path)?)?;
    schema.validate()?;
    let mut rdr = csv::Reader::from_reader(File::open(csv_path)?);
    let header = rdr.headers()?.clone();
    let expected: Vec<&str> = std::iter::once(ID_COLUMN)
        .chain(schema.names())
        .chain(std::iter::once(TARGET_COLUMN))
        .collect();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Schema(format!("{name}: header does not match the feature schema")));
    }

    let mut columns: Vec<ColumnData> = schema
        .features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Numeric => ColumnData::Numeric(Vec::new()),
            FeatureKind::Categorical => ColumnData::Categorical(Vec::new()),
        })
        .collect();
    let mut task_ids = Vec::new();
    let mut target = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse {
            path: name.clone(),
            line,
            message,
        };
        task_ids.push(record[0].to_string());
        for (j, col) in columns.iter_mut().enumerate() {
            let cell = &record[j + 1];
            match col {
                ColumnData::Numeric(v) => v.push(if cell.is_empty() {
                    None
                } else {
                    Some(
                        cell.parse::<f64>()
                            .map_err(|e| parse_err(format!("column {}: {e}", schema.features[j].name)))?,
                    )
                }),
                ColumnData::Categorical(v) => v.push((!cell.is_empty()).then(|| cell.to_string())),
            }
        }
        target.push(match &record[record.len() - 1] {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(format!("target must be 0 or 1, got `{other}`"))),
        });
    }
    let m = FeatureMatrix {
        schema,
        task_ids,
        columns,
        target,
    };
    m.validate()?;
    Ok(m)
}
