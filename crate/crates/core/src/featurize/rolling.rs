//! Trailing-window statistics over the audited history of a log.
//!
//! All windows are half-open `[t - N days, t)`: the focal task and anything at
//! or after its timestamp never contribute.

use std::collections::HashMap;

use crate::annotation_log::{derive_verdict, AnnotationEvent, AnnotatorInfo, Application};
use crate::error::{Error, Result};

pub const DAY_SECONDS: i64 = 86_400;
pub const WINDOW_DAYS: [u32; 4] = [7, 14, 21, 28];
pub const WINDOW_TASKS: [u32; 3] = [1, 3, 5];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope<'a> {
    /// The focal annotator's own history, across applications.
    Annotator(&'a str),
    /// All annotators working on the application, focal annotator included.
    Application(Application),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Any,
    Major,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CategoryField {
    OutputMediaType,
    InputQueryType,
}

impl CategoryField {
    fn value(self, event: &AnnotationEvent) -> &str {
        match self {
            CategoryField::OutputMediaType => &event.output_media_type,
            CategoryField::InputQueryType => &event.input_query_type,
        }
    }
}

/// Time-sorted verdict history with prefix counts.
#[derive(Debug, Default)]
struct History {
    timestamps: Vec<i64>,
    /// `errors[i]` = errors among the first `i` entries.
    errors: Vec<u32>,
    majors: Vec<u32>,
}

impl History {
    fn from_entries(mut entries: Vec<(i64, &str, bool, bool)>) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        let mut h = History {
            timestamps: Vec::with_capacity(entries.len()),
            errors: Vec::with_capacity(entries.len() + 1),
            majors: Vec::with_capacity(entries.len() + 1),
        };
        h.errors.push(0);
        h.majors.push(0);
        for (ts, _, err, major) in entries {
            h.timestamps.push(ts);
            h.errors.push(h.errors.last().unwrap() + u32::from(err));
            h.majors.push(h.majors.last().unwrap() + u32::from(major));
        }
        h
    }

    fn before(&self, t: i64) -> usize {
        self.timestamps.partition_point(|&ts| ts < t)
    }

    fn window(&self, t: i64, window_days: u32) -> (usize, usize) {
        let lo = self.before(t - i64::from(window_days) * DAY_SECONDS);
        (lo, self.before(t))
    }

    fn rate(&self, t: i64, window_days: u32, severity: Severity) -> Option<f64> {
        let (lo, hi) = self.window(t, window_days);
        if hi == lo {
            return None;
        }
        let counts = match severity {
            Severity::Any => &self.errors,
            Severity::Major => &self.majors,
        };
        Some(f64::from(counts[hi] - counts[lo]) / (hi - lo) as f64)
    }

    fn volume(&self, t: i64, window_days: u32) -> usize {
        let (lo, hi) = self.window(t, window_days);
        hi - lo
    }

    /// Share of non-errors among the last `n` entries strictly before `t`.
    fn recent_correct_share(&self, t: i64, n: u32) -> Option<f64> {
        let hi = self.before(t);
        let lo = hi.saturating_sub(n as usize);
        if hi == lo {
            return None;
        }
        let errors = self.errors[hi] - self.errors[lo];
        Some((hi - lo - errors as usize) as f64 / (hi - lo) as f64)
    }
}

/// Per-annotator, per-application and per-category histories of a log.
pub struct LogIndex<'a> {
    by_annotator: HashMap<&'a str, History>,
    by_application: HashMap<Application, History>,
    by_category: HashMap<(CategoryField, &'a str, &'a str), History>,
}

impl<'a> LogIndex<'a> {
    pub fn new(events: &'a [AnnotationEvent]) -> Self {
        type Entries<'e> = Vec<(i64, &'e str, bool, bool)>;
        let mut annotators: HashMap<&str, Entries> = HashMap::new();
        let mut applications: HashMap<Application, Entries> = HashMap::new();
        let mut categories: HashMap<(CategoryField, &str, &str), Entries> = HashMap::new();
        for e in events {
            let v = derive_verdict(e);
            let entry = (e.timestamp, e.task_id.as_str(), v.is_error, v.is_major_error);
            annotators.entry(e.annotator_id.as_str()).or_default().push(entry);
            applications.entry(e.application).or_default().push(entry);
            for field in [CategoryField::OutputMediaType, CategoryField::InputQueryType] {
                categories
                    .entry((field, e.annotator_id.as_str(), field.value(e)))
                    .or_default()
                    .push(entry);
            }
        }
        fn build<K: std::hash::Hash + Eq>(m: HashMap<K, Entries<'_>>) -> HashMap<K, History> {
            m.into_iter().map(|(k, v)| (k, History::from_entries(v))).collect()
        }
        LogIndex {
            by_annotator: build(annotators),
            by_application: build(applications),
            by_category: build(categories),
        }
    }

    fn history(&self, scope: Scope<'_>) -> Option<&History> {
        match scope {
            Scope::Annotator(id) => self.by_annotator.get(id),
            Scope::Application(app) => self.by_application.get(&app),
        }
    }

    pub fn error_rate(&self, scope: Scope<'_>, t: i64, window_days: u32, severity: Severity) -> Option<f64> {
        self.history(scope)?.rate(t, window_days, severity)
    }

    pub fn volume(&self, annotator_id: &str, t: i64, window_days: u32) -> usize {
        self.by_annotator
            .get(annotator_id)
            .map_or(0, |h| h.volume(t, window_days))
    }

    pub fn rate_by_category(
        &self,
        annotator_id: &str,
        t: i64,
        field: CategoryField,
        value: &str,
        window_tasks: u32,
    ) -> Option<f64> {
        self.by_category
            .get(&(field, annotator_id, value))?
            .recent_correct_share(t, window_tasks)
    }
}

fn check_window_days(window_days: u32) -> Result<()> {
    if WINDOW_DAYS.contains(&window_days) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("window of {window_days} days not in {WINDOW_DAYS:?}")))
    }
}

/// Error rate over the trailing `window_days`; `None` when the window is empty.
pub fn rolling_error_rate(
    events: &[AnnotationEvent],
    scope: Scope<'_>,
    t: i64,
    window_days: u32,
    severity: Severity,
) -> Result<Option<f64>> {
    check_window_days(window_days)?;
    Ok(LogIndex::new(events).error_rate(scope, t, window_days, severity))
}

/// Share of correct annotations among the annotator's last `window_tasks`
/// earlier tasks with the given category value.
pub fn rolling_rate_by_category(
    events: &[AnnotationEvent],
    annotator_id: &str,
    t: i64,
    field: CategoryField,
    value: &str,
    window_tasks: u32,
) -> Result<Option<f64>> {
    if !WINDOW_TASKS.contains(&window_tasks) {
        return Err(Error::InvalidConfig(format!(
            "window of {window_tasks} tasks not in {WINDOW_TASKS:?}"
        )));
    }
    Ok(LogIndex::new(events).rate_by_category(annotator_id, t, field, value, window_tasks))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TenureVolume {
    /// Whole days since the last (re)activation.
    pub tenure_full_days: u32,
    /// Whole days since first joining the pool.
    pub tenure_updated_days: u32,
    /// Prior task counts for the 7/14/21/28 day windows.
    pub volumes: [usize; 4],
}

pub(crate) fn whole_days_since(t: i64, since: i64) -> u32 {
    ((t - since).max(0) / DAY_SECONDS) as u32
}

pub fn tenure_and_volume(
    events: &[AnnotationEvent],
    profiles: &[AnnotatorInfo],
    annotator_id: &str,
    t: i64,
) -> Result<TenureVolume> {
    let profile = profiles
        .iter()
        .find(|p| p.annotator_id == annotator_id)
        .ok_or_else(|| Error::UnknownAnnotator(annotator_id.to_string()))?;
    let index = LogIndex::new(events);
    Ok(TenureVolume {
        tenure_full_days: whole_days_since(t, profile.last_activation_date),
        tenure_updated_days: whole_days_since(t, profile.join_date),
        volumes: WINDOW_DAYS.map(|w| index.volume(annotator_id, t, w)),
    })
}
