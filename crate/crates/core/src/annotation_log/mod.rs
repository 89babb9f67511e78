//! Audited annotation events: schema, error verdicts, validation, file I/O and splits.

mod io;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_annotators, read_log, write_annotators, write_log, LogFormat};
pub use split::{holdout_partition, split_log, DatasetSplit};
pub(crate) use split::validation_seed;

/// Five-level search relevance scale, ordered from worst to best.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelevanceLabel {
    Unacceptable = 1,
    Acceptable = 2,
    Good = 3,
    Excellent = 4,
    Perfect = 5,
}

impl RelevanceLabel {
    pub const ALL: [RelevanceLabel; 5] = [
        RelevanceLabel::Unacceptable,
        RelevanceLabel::Acceptable,
        RelevanceLabel::Good,
        RelevanceLabel::Excellent,
        RelevanceLabel::Perfect,
    ];

    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn from_level(level: u8) -> Option<Self> {
        match level {
            1..=5 => Some(Self::ALL[usize::from(level) - 1]),
            _ => None,
        }
    }

    pub fn distance(self, other: RelevanceLabel) -> u8 {
        self.level().abs_diff(other.level())
    }

    pub fn name(self) -> &'static str {
        match self {
            RelevanceLabel::Unacceptable => "Unacceptable",
            RelevanceLabel::Acceptable => "Acceptable",
            RelevanceLabel::Good => "Good",
            RelevanceLabel::Excellent => "Excellent",
            RelevanceLabel::Perfect => "Perfect",
        }
    }
}

impl fmt::Display for RelevanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Application {
    MusicStreaming,
    MobileApplications,
    VideoStreaming,
}

impl Application {
    pub const ALL: [Application; 3] = [
        Application::MusicStreaming,
        Application::MobileApplications,
        Application::VideoStreaming,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Application::MusicStreaming => "music_streaming",
            Application::MobileApplications => "mobile_applications",
            Application::VideoStreaming => "video_streaming",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Application {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Application {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Application::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown application `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMediaType {
    Keyboard,
    Voice,
}

impl InputMediaType {
    pub fn as_str(self) -> &'static str {
        match self {
            InputMediaType::Keyboard => "keyboard",
            InputMediaType::Voice => "voice",
        }
    }
}

/// One audited annotation task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub task_id: String,
    pub annotator_id: String,
    pub application: Application,
    pub storefront: String,
    pub timestamp: i64,
    pub session_id: String,
    pub nth_task_in_session: u32,
    pub seconds_into_session: f64,
    pub input_text: String,
    pub output_text: String,
    pub input_media_type: InputMediaType,
    pub output_media_type: String,
    pub input_language: String,
    pub input_query_type: String,
    pub input_misspelled: bool,
    pub input_occurrences: u64,
    pub input_conversion_rate: f64,
    pub annotator_label: RelevanceLabel,
    pub problem_flagged: bool,
    pub time_on_task: f64,
    pub comment_length: u32,
    pub audit_label: RelevanceLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorVerdict {
    pub is_error: bool,
    pub is_major_error: bool,
}

/// Largest label distance that still counts as a minor error.
pub const MAJOR_ERROR_DISTANCE: u8 = 2;

pub fn derive_verdict(event: &AnnotationEvent) -> ErrorVerdict {
    verdict_for(event.annotator_label, event.audit_label)
}

pub fn verdict_for(annotator: RelevanceLabel, audit: RelevanceLabel) -> ErrorVerdict {
    let distance = annotator.distance(audit);
    ErrorVerdict {
        is_error: distance > 0,
        is_major_error: distance > MAJOR_ERROR_DISTANCE,
    }
}

/// Public annotator record used by the experience features.
///
/// `last_activation_date` equals `join_date` for annotators that were never deactivated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorInfo {
    pub annotator_id: String,
    pub join_date: i64,
    pub last_activation_date: i64,
    pub qualification_trials: u32,
    pub qualification_agreement_rate: f64,
}

impl AnnotatorInfo {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| Error::InvalidConfig(format!("annotator {}: {message}", self.annotator_id));
        if self.qualification_trials < 1 {
            return Err(bad("qualification_trials must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.qualification_agreement_rate) {
            return Err(bad("qualification_agreement_rate outside [0, 1]"));
        }
        if self.last_activation_date < self.join_date {
            return Err(bad("last_activation_date precedes join_date"));
        }
        Ok(())
    }
}

fn validate_event(event: &AnnotationEvent) -> Result<()> {
    let id = event.task_id.as_str();
    if id.is_empty() {
        return Err(Error::invariant(id, "task_id", "empty task id"));
    }
    if event.annotator_id.is_empty() {
        return Err(Error::invariant(id, "annotator_id", "empty annotator id"));
    }
    if event.nth_task_in_session < 1 {
        return Err(Error::invariant(id, "nth_task_in_session", "must be >= 1"));
    }
    if !(event.seconds_into_session.is_finite() && event.seconds_into_session >= 0.0) {
        return Err(Error::invariant(
            id,
            "seconds_into_session",
            format!("must be finite and non-negative, got {}", event.seconds_into_session),
        ));
    }
    if !(0.0..=1.0).contains(&event.input_conversion_rate) {
        return Err(Error::invariant(
            id,
            "input_conversion_rate",
            format!("must lie in [0, 1], got {}", event.input_conversion_rate),
        ));
    }
    if !(event.time_on_task.is_finite() && event.time_on_task > 0.0) {
        return Err(Error::invariant(
            id,
            "time_on_task",
            format!("must be finite and positive, got {}", event.time_on_task),
        ));
    }
    Ok(())
}

/// Checks every per-event and cross-event invariant of a log.
pub fn validate_log(events: &[AnnotationEvent]) -> Result<()> {
    let mut seen = HashSet::with_capacity(events.len());
    for event in events {
        validate_event(event)?;
        if !seen.insert(event.task_id.as_str()) {
            return Err(Error::invariant(&event.task_id, "task_id", "duplicate task id"));
        }
    }

    let mut sessions: BTreeMap<&str, Vec<&AnnotationEvent>> = BTreeMap::new();
    for event in events {
        sessions.entry(event.session_id.as_str()).or_default().push(event);
    }
    for members in sessions.values_mut() {
        members.sort_by_key(|e| (e.timestamp, e.nth_task_in_session));
        for pair in members.windows(2) {
            let (prev, next) = (pair[0], pair[1]);
            if next.annotator_id != prev.annotator_id {
                return Err(Error::invariant(
                    &next.task_id,
                    "session_id",
                    "session shared by several annotators",
                ));
            }
            if next.nth_task_in_session <= prev.nth_task_in_session {
                return Err(Error::invariant(
                    &next.task_id,
                    "nth_task_in_session",
                    "not strictly increasing within session",
                ));
            }
            if next.seconds_into_session < prev.seconds_into_session {
                return Err(Error::invariant(
                    &next.task_id,
                    "seconds_into_session",
                    "decreases within session",
                ));
            }
        }
    }
    Ok(())
}
