//! Feature engineering over an audited annotation log.
//!
//! Four families of features are produced for every event: task metadata,
//! past annotator performance, session context and task completion. Every
//! history-based feature only reads events strictly earlier than the focal
//! event, so a row never sees its own audit outcome or anything after it.

mod io;
pub mod rolling;
pub mod text;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotation_log::{derive_verdict, AnnotationEvent, AnnotatorInfo, Application};
use crate::error::{Error, Result};

pub use io::{read_feature_matrix, write_feature_matrix};
pub use rolling::{
    rolling_error_rate, rolling_rate_by_category, tenure_and_volume, CategoryField, LogIndex, Scope, Severity,
    TenureVolume, WINDOW_DAYS, WINDOW_TASKS,
};
pub use text::{edit_distance, embedding_distance, TextEmbedder, TrigramEmbedder};

/// Name of the categorical column that carries the application.
pub const APPLICATION_FEATURE: &str = "application";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub window_days: Vec<u32>,
    pub window_tasks: Vec<u32>,
}

impl FeatureSchema {
    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{}`", f.name)));
            }
        }
        Ok(())
    }
}

/// The full feature set in presentation order.
pub fn standard_schema() -> FeatureSchema {
    use FeatureKind::{Categorical as C, Numeric as N};
    let mut features: Vec<(String, FeatureKind)> = vec![
        ("input_occurrences".into(), N),
        ("input_conversion_rate".into(), N),
        ("in_out_embedding_distance".into(), N),
        ("in_out_edit_distance".into(), N),
        ("input_media_type".into(), C),
        ("output_media_type".into(), C),
        ("input_misspelled".into(), N),
        ("input_language".into(), C),
        ("input_query_type".into(), C),
        ("storefront_name".into(), C),
        (APPLICATION_FEATURE.into(), C),
    ];
    for prefix in ["error", "error_all", "maj_error", "maj_error_all", "error_diff"] {
        for w in WINDOW_DAYS {
            let name = match prefix {
                "error" => format!("error_{w}"),
                "error_all" => format!("error_{w}_all"),
                "maj_error" => format!("maj_error_{w}"),
                "maj_error_all" => format!("maj_error_{w}_all"),
                _ => format!("error_{w}_diff"),
            };
            features.push((name, N));
        }
    }
    for w in WINDOW_DAYS {
        features.push((format!("vol_last_{w}"), N));
    }
    for name in [
        "tenure_full_days",
        "tenure_updated_days",
        "qualification_trials",
        "qualification_agreement_rate",
    ] {
        features.push((name.into(), N));
    }
    for n in WINDOW_TASKS {
        features.push((format!("error_rolling_output_media_type_{n}"), N));
    }
    for n in WINDOW_TASKS {
        features.push((format!("error_rolling_input_query_type_user_{n}"), N));
    }
    features.extend([
        ("nth_task_in_session".into(), N),
        ("seconds_into_session".into(), N),
        ("answer_value".into(), C),
        ("time_on_task".into(), N),
        ("comment_length".into(), N),
    ]);
    FeatureSchema {
        features: features
            .into_iter()
            .map(|(name, kind)| FeatureSpec { name, kind })
            .collect(),
        window_days: WINDOW_DAYS.to_vec(),
        window_tasks: WINDOW_TASKS.to_vec(),
    }
}

/// One column of cells; `None` marks a missing value.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            ColumnData::Numeric(_) => FeatureKind::Numeric,
            ColumnData::Categorical(_) => FeatureKind::Categorical,
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }
}

/// Row-aligned features plus the error target.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    pub task_ids: Vec<String>,
    pub columns: Vec<ColumnData>,
    pub target: Vec<bool>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.task_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.columns.len() != self.schema.features.len() {
            return Err(Error::Schema(format!(
                "{} columns for {} schema features",
                self.columns.len(),
                self.schema.features.len()
            )));
        }
        let n = self.n_rows();
        if self.target.len() != n {
            return Err(Error::Schema("target length differs from row count".into()));
        }
        for (spec, col) in self.schema.features.iter().zip(&self.columns) {
            if col.kind() != spec.kind {
                return Err(Error::Schema(format!("column `{}` has the wrong kind", spec.name)));
            }
            if col.len() != n {
                return Err(Error::Schema(format!("column `{}` has {} rows, expected {n}", spec.name, col.len())));
            }
            if let ColumnData::Numeric(v) = col {
                if v.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::Schema(format!("column `{}` has a non-finite value", spec.name)));
                }
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.schema.position(name).map(|i| &self.columns[i])
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            schema: self.schema.clone(),
            task_ids: rows.iter().map(|&r| self.task_ids[r].clone()).collect(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
        }
    }

    /// Rows whose task id is in `ids`, in matrix order.
    pub fn select_ids<S: AsRef<str>>(&self, ids: &[S]) -> FeatureMatrix {
        let wanted: std::collections::HashSet<&str> = ids.iter().map(|s| s.as_ref()).collect();
        let rows: Vec<usize> = (0..self.n_rows())
            .filter(|&r| wanted.contains(self.task_ids[r].as_str()))
            .collect();
        self.select_rows(&rows)
    }

    pub fn select_application(&self, app: Application) -> Result<FeatureMatrix> {
        let Some(ColumnData::Categorical(values)) = self.column(APPLICATION_FEATURE) else {
            return Err(Error::Schema(format!("no categorical `{APPLICATION_FEATURE}` column")));
        };
        let rows: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.as_deref() == Some(app.as_str()))
            .map(|(r, _)| r)
            .collect();
        Ok(self.select_rows(&rows))
    }
}

/// Builds one row per event with the trigram embedder.
pub fn build_feature_matrix(events: &[AnnotationEvent], profiles: &[AnnotatorInfo]) -> Result<FeatureMatrix> {
    build_feature_matrix_with(events, profiles, &TrigramEmbedder)
}

pub fn build_feature_matrix_with(
    events: &[AnnotationEvent],
    profiles: &[AnnotatorInfo],
    embedder: &dyn TextEmbedder,
) -> Result<FeatureMatrix> {
    let schema = standard_schema();
    let profile_by_id: HashMap<&str, &AnnotatorInfo> =
        profiles.iter().map(|p| (p.annotator_id.as_str(), p)).collect();
    let index = LogIndex::new(events);

    let mut numeric: Vec<Vec<Option<f64>>> = Vec::new();
    let mut categorical: Vec<Vec<Option<String>>> = Vec::new();
    let kinds: Vec<FeatureKind> = schema.features.iter().map(|f| f.kind).collect();
    for kind in &kinds {
        match kind {
            FeatureKind::Numeric => numeric.push(Vec::with_capacity(events.len())),
            FeatureKind::Categorical => categorical.push(Vec::with_capacity(events.len())),
        }
    }

    let mut row = Vec::with_capacity(kinds.len());
    for event in events {
        let profile = profile_by_id
            .get(event.annotator_id.as_str())
            .ok_or_else(|| Error::UnknownAnnotator(event.annotator_id.clone()))?;
        row.clear();
        event_row(event, profile, &index, embedder, &mut row);
        debug_assert_eq!(row.len(), kinds.len());
        let (mut ni, mut ci) = (0, 0);
        for cell in row.drain(..) {
            match cell {
                Cell::Num(v) => {
                    numeric[ni].push(v);
                    ni += 1;
                }
                Cell::Cat(v) => {
                    categorical[ci].push(v);
                    ci += 1;
                }
            }
        }
    }

    let (mut num_iter, mut cat_iter) = (numeric.into_iter(), categorical.into_iter());
    let columns = kinds
        .iter()
        .map(|k| match k {
            FeatureKind::Numeric => ColumnData::Numeric(num_iter.next().expect("numeric column")),
            FeatureKind::Categorical => ColumnData::Categorical(cat_iter.next().expect("categorical column")),
        })
        .collect();
    let matrix = FeatureMatrix {
        schema,
        task_ids: events.iter().map(|e| e.task_id.clone()).collect(),
        columns,
        target: events.iter().map(|e| derive_verdict(e).is_error).collect(),
    };
    matrix.validate()?;
    Ok(matrix)
}

enum Cell {
    Num(Option<f64>),
    Cat(Option<String>),
}

/// Cells in `standard_schema` order. Reads nothing from the focal audit label.
fn event_row(
    e: &AnnotationEvent,
    profile: &AnnotatorInfo,
    index: &LogIndex<'_>,
    embedder: &dyn TextEmbedder,
    row: &mut Vec<Cell>,
) {
    let num = |v: f64| Cell::Num(Some(v));
    let cat = |s: &str| Cell::Cat(if s.is_empty() { None } else { Some(s.to_string()) });
    let t = e.timestamp;
    let me = Scope::Annotator(&e.annotator_id);
    let app = Scope::Application(e.application);

    row.push(num(e.input_occurrences as f64));
    row.push(num(e.input_conversion_rate));
    row.push(num(embedder.distance(&e.input_text, &e.output_text)));
    row.push(num(edit_distance(&e.input_text, &e.output_text) as f64));
    row.push(cat(e.input_media_type.as_str()));
    row.push(cat(&e.output_media_type));
    row.push(num(if e.input_misspelled { 1.0 } else { 0.0 }));
    row.push(cat(&e.input_language));
    row.push(cat(&e.input_query_type));
    row.push(cat(&e.storefront));
    row.push(cat(e.application.as_str()));

    let own: Vec<Option<f64>> = WINDOW_DAYS.iter().map(|&w| index.error_rate(me, t, w, Severity::Any)).collect();
    let all: Vec<Option<f64>> = WINDOW_DAYS.iter().map(|&w| index.error_rate(app, t, w, Severity::Any)).collect();
    row.extend(own.iter().map(|&v| Cell::Num(v)));
    row.extend(all.iter().map(|&v| Cell::Num(v)));
    row.extend(WINDOW_DAYS.iter().map(|&w| Cell::Num(index.error_rate(me, t, w, Severity::Major))));
    row.extend(WINDOW_DAYS.iter().map(|&w| Cell::Num(index.error_rate(app, t, w, Severity::Major))));
    row.extend(own.iter().zip(&all).map(|(a, b)| match (a, b) {
        (Some(a), Some(b)) => Cell::Num(Some(a - b)),
        _ => Cell::Num(None),
    }));
    row.extend(WINDOW_DAYS.iter().map(|&w| num(index.volume(&e.annotator_id, t, w) as f64)));

    row.push(num(f64::from(rolling::whole_days_since(t, profile.last_activation_date))));
    row.push(num(f64::from(rolling::whole_days_since(t, profile.join_date))));
    row.push(num(f64::from(profile.qualification_trials)));
    row.push(num(profile.qualification_agreement_rate));

    for (field, value) in [
        (CategoryField::OutputMediaType, e.output_media_type.as_str()),
        (CategoryField::InputQueryType, e.input_query_type.as_str()),
    ] {
        for n in WINDOW_TASKS {
            row.push(Cell::Num(index.rate_by_category(&e.annotator_id, t, field, value, n)));
        }
    }

    row.push(num(f64::from(e.nth_task_in_session)));
    row.push(num(e.seconds_into_session));
    row.push(cat(e.annotator_label.name()));
    row.push(num(e.time_on_task));
    row.push(num(f64::from(e.comment_length)));
}
