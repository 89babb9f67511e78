//! Synthetic audited annotation logs with a known latent error process.
//!
//! Each event's error probability follows an item-response style logistic model in
//! annotator skill, task difficulty, within-session fatigue and rushing. Observable
//! task metadata is drawn conditional on the latent difficulty and observable
//! qualification results conditional on skill, so the feature pipeline sees noisy
//! proxies of the true process. The true per-event probabilities are returned
//! separately and never enter the log itself.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::annotation_log::{
    derive_verdict, AnnotationEvent, AnnotatorInfo, Application, InputMediaType, RelevanceLabel,
};
use crate::error::{Error, Result};
use crate::model_selection::metrics::auc;

const DAY: i64 = 86_400;

/// Typical log seconds on task; shorter times count as rushing.
const REFERENCE_LOG_TIME: f64 = 3.555_348_061_489_413_6; // ln(35)
const LOG_TIME_SD: f64 = 0.45;
const FATIGUE_SCALE: f64 = 10.0;
const MAX_FATIGUE: f64 = 3.0;
const MEAN_SESSION_LENGTH: f64 = 10.0;
const CALIBRATION_ITERATIONS: usize = 100;
const CALIBRATION_TOLERANCE: f64 = 0.01;

const STOREFRONTS: [(&str, &str); 23] = [
    ("us", "en"),
    ("gb", "en"),
    ("de", "de"),
    ("fr", "fr"),
    ("jp", "ja"),
    ("ca", "en"),
    ("au", "en"),
    ("es", "es"),
    ("it", "it"),
    ("br", "pt"),
    ("mx", "es"),
    ("nl", "nl"),
    ("kr", "ko"),
    ("se", "sv"),
    ("in", "hi"),
    ("cn", "zh"),
    ("ru", "ru"),
    ("tr", "tr"),
    ("pl", "pl"),
    ("no", "nb"),
    ("dk", "da"),
    ("fi", "fi"),
    ("ar", "es"),
];

const QUERY_TYPES: [(&str, f64); 5] = [
    ("navigational", -0.8),
    ("transactional", -0.3),
    ("informational", 0.0),
    ("exploratory", 0.4),
    ("ambiguous", 0.9),
];

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ren", "to", "sa", "vel", "dor", "an", "qui", "zu", "bel", "ri", "mon", "ste", "ly",
];

/// Logistic coefficients of the latent error model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Coefficients {
    /// Starting intercept; replaced by the calibrated value when calibration is on.
    pub intercept: f64,
    pub skill: f64,
    pub difficulty: f64,
    pub fatigue: f64,
    pub rush: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients {
            intercept: -2.2,
            skill: 1.0,
            difficulty: 0.8,
            fatigue: 0.4,
            rush: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppOffsets {
    pub music_streaming: f64,
    pub mobile_applications: f64,
    pub video_streaming: f64,
}

impl Default for AppOffsets {
    fn default() -> Self {
        AppOffsets {
            music_streaming: -0.05,
            mobile_applications: 0.05,
            video_streaming: 0.0,
        }
    }
}

impl AppOffsets {
    pub fn get(&self, app: Application) -> f64 {
        match app {
            Application::MusicStreaming => self.music_streaming,
            Application::MobileApplications => self.mobile_applications,
            Application::VideoStreaming => self.video_streaming,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_annotators: usize,
    pub n_tasks: usize,
    /// Start of the logging period, epoch seconds.
    pub start_date: i64,
    pub duration_days: u32,
    pub target_error_rate: f64,
    pub coefficients: Coefficients,
    pub app_offsets: AppOffsets,
    /// Relative task volume of music, mobile and video.
    pub application_mix: [f64; 3],
    pub calibrate_intercept: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_annotators: 250,
            n_tasks: 50_000,
            start_date: 1_640_995_200, // 2022-01-01
            duration_days: 180,
            target_error_rate: 0.10,
            coefficients: Coefficients::default(),
            app_offsets: AppOffsets::default(),
            application_mix: [0.45, 0.40, 0.15],
            calibrate_intercept: true,
            seed: 20_240_501,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if !(self.target_error_rate > 0.0 && self.target_error_rate < 1.0) {
            return fail(format!("target_error_rate must lie in (0, 1), got {}", self.target_error_rate));
        }
        if self.duration_days == 0 {
            return fail("duration_days must be positive".into());
        }
        if self.application_mix.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.application_mix.iter().sum::<f64>() <= 0.0
        {
            return fail("application_mix must be non-negative with a positive sum".into());
        }
        let c = &self.coefficients;
        let o = &self.app_offsets;
        let all = [
            c.intercept,
            c.skill,
            c.difficulty,
            c.fatigue,
            c.rush,
            o.music_streaming,
            o.mobile_applications,
            o.video_streaming,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return fail("coefficients and offsets must be finite".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator_id: String,
    /// Standard-normal scale; higher means fewer errors.
    pub skill: f64,
    pub join_date: i64,
    pub last_activation_date: i64,
    pub qualification_trials: u32,
    pub qualification_agreement_rate: f64,
    pub daily_volume_rate: f64,
    /// Offset of the annotator's mean log time on task.
    pub speed_offset: f64,
}

impl AnnotatorProfile {
    pub fn info(&self) -> AnnotatorInfo {
        AnnotatorInfo {
            annotator_id: self.annotator_id.clone(),
            join_date: self.join_date,
            last_activation_date: self.last_activation_date,
            qualification_trials: self.qualification_trials,
            qualification_agreement_rate: self.qualification_agreement_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub task_id: String,
    pub application: Application,
    pub storefront: String,
    pub difficulty: f64,
    pub input_text: String,
    pub output_text: String,
    pub input_media_type: InputMediaType,
    pub output_media_type: String,
    pub input_language: String,
    pub input_query_type: String,
    pub input_misspelled: bool,
    pub input_occurrences: u64,
    pub input_conversion_rate: f64,
    pub true_label: RelevanceLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub annotators: Vec<AnnotatorProfile>,
    pub tasks: Vec<TaskTemplate>,
}

impl Population {
    pub fn annotator_infos(&self) -> Vec<AnnotatorInfo> {
        self.annotators.iter().map(AnnotatorProfile::info).collect()
    }
}

/// Hidden per-event truth, written to a sidecar file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub task_id: String,
    pub true_error_probability: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedLog {
    pub events: Vec<AnnotationEvent>,
    pub truth: Vec<TruthRecord>,
    /// Intercept actually used, after calibration.
    pub intercept: f64,
}

impl GeneratedLog {
    pub fn realized_error_rate(&self) -> f64 {
        if self.events.is_empty() {
            return 0.0;
        }
        let errors = self.events.iter().filter(|e| derive_verdict(e).is_error).count();
        errors as f64 / self.events.len() as f64
    }

    pub fn true_probabilities(&self) -> Vec<f64> {
        self.truth.iter().map(|t| t.true_error_probability).collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Latent error probability of a single annotation.
pub fn error_probability(
    skill: f64,
    difficulty: f64,
    session_position_norm: f64,
    rush_factor: f64,
    beta: &Coefficients,
    app_offset: f64,
) -> f64 {
    sigmoid(beta.intercept + linear_part(skill, difficulty, session_position_norm, rush_factor, beta, app_offset))
}

fn linear_part(skill: f64, difficulty: f64, fatigue: f64, rush: f64, beta: &Coefficients, app_offset: f64) -> f64 {
    app_offset - beta.skill * skill + beta.difficulty * difficulty + beta.fatigue * fatigue + beta.rush * rush
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn vocabulary() -> Vec<String> {
    let mut words = Vec::with_capacity(SYLLABLES.len() * 6);
    for (i, a) in SYLLABLES.iter().enumerate() {
        for k in 1..=6 {
            let b = SYLLABLES[(i * 7 + k * 3) % SYLLABLES.len()];
            words.push(format!("{a}{b}"));
        }
    }
    words.sort();
    words.dedup();
    words
}

fn perturb_one_char(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let positions: Vec<usize> = chars
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_alphabetic())
        .map(|(i, _)| i)
        .collect();
    if let Some(&pos) = positions.choose(rng) {
        let original = chars[pos];
        let mut replacement = original;
        while replacement == original {
            replacement = char::from(b'a' + rng.random_range(0..26u8));
        }
        chars[pos] = replacement;
    }
    chars.into_iter().collect()
}

fn true_label_weights(app: Application) -> [f64; 5] {
    match app {
        Application::MusicStreaming => [0.12, 0.13, 0.20, 0.25, 0.30],
        Application::MobileApplications => [0.15, 0.20, 0.25, 0.25, 0.15],
        Application::VideoStreaming => [0.18, 0.17, 0.25, 0.22, 0.18],
    }
}

fn output_media_types(app: Application) -> &'static [&'static str] {
    match app {
        Application::MusicStreaming => &["song", "album", "artist"],
        Application::MobileApplications => &["app"],
        Application::VideoStreaming => &["movie", "tv_show"],
    }
}

/// Probability that an output token repeats the matching input token.
fn token_overlap(label: RelevanceLabel) -> f64 {
    match label {
        RelevanceLabel::Perfect => 0.95,
        RelevanceLabel::Excellent => 0.8,
        RelevanceLabel::Good => 0.6,
        RelevanceLabel::Acceptable => 0.4,
        RelevanceLabel::Unacceptable => 0.15,
    }
}

pub fn generate_population(config: &GenConfig) -> Result<Population> {
    config.validate()?;
    let mut rng = rng_for(config.seed, 1);
    let start = config.start_date;
    let duration = i64::from(config.duration_days) * DAY;

    let mut annotators = Vec::with_capacity(config.n_annotators);
    for i in 0..config.n_annotators {
        let skill = normal(&mut rng);
        let veteran = rng.random_bool(0.7);
        let join_date = if veteran {
            start - rng.random_range(0..400 * DAY)
        } else {
            start + rng.random_range(0..(duration * 6 / 10).max(1))
        };
        let last_activation_date = if veteran && rng.random_bool(0.25) {
            let span = (start - join_date).clamp(1, 120 * DAY);
            start - rng.random_range(0..span)
        } else {
            join_date
        };
        let agreement = sigmoid(1.2 + 0.8 * skill + 0.6 * normal(&mut rng));
        let agreement = (agreement * 1000.0).round() / 1000.0;
        let pass_prob = sigmoid(0.8 + 0.8 * skill);
        let mut trials = 1u32;
        while trials < 10 && !rng.random_bool(pass_prob) {
            trials += 1;
        }
        let daily_volume_rate = (0.5 * normal(&mut rng)).exp() * 2.0;
        let speed_offset = 0.3 * normal(&mut rng);
        annotators.push(AnnotatorProfile {
            annotator_id: format!("ann-{i:04}"),
            skill,
            join_date,
            last_activation_date: last_activation_date.max(join_date),
            qualification_trials: trials,
            qualification_agreement_rate: agreement.clamp(0.0, 1.0),
            daily_volume_rate,
            speed_offset,
        });
    }

    let vocab = vocabulary();
    let app_dist = WeightedIndex::new(config.application_mix).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let storefront_weights: Vec<f64> = (0..STOREFRONTS.len()).map(|r| 1.0 / (r as f64 + 1.0).powf(0.9)).collect();
    let storefront_dist = WeightedIndex::new(&storefront_weights).expect("static weights");
    let label_dists: Vec<WeightedIndex<f64>> = Application::ALL
        .iter()
        .map(|&a| WeightedIndex::new(true_label_weights(a)).expect("static weights"))
        .collect();

    let mut tasks = Vec::with_capacity(config.n_tasks);
    for i in 0..config.n_tasks {
        let application = Application::ALL[app_dist.sample(&mut rng)];
        let difficulty = normal(&mut rng);
        let (storefront, native_language) = STOREFRONTS[storefront_dist.sample(&mut rng)];
        let input_language = if native_language != "en" && rng.random_bool(0.12) {
            "en"
        } else {
            native_language
        };
        let input_media_type = if rng.random_bool(0.2) {
            InputMediaType::Voice
        } else {
            InputMediaType::Keyboard
        };
        let output_media_type = *output_media_types(application).choose(&mut rng).expect("non-empty");
        let query_weights: Vec<f64> = QUERY_TYPES.iter().map(|(_, shift)| (shift * difficulty).exp()).collect();
        let query_dist = WeightedIndex::new(&query_weights).expect("positive weights");
        let input_query_type = QUERY_TYPES[query_dist.sample(&mut rng)].0;
        let true_label = RelevanceLabel::ALL[label_dists[application.index()].sample(&mut rng)];

        let n_tokens = rng.random_range(1..=3usize);
        let tokens: Vec<&String> = (0..n_tokens).map(|_| vocab.choose(&mut rng).expect("vocab")).collect();
        let clean_input = tokens.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ");
        let overlap = token_overlap(true_label);
        let mut output_tokens: Vec<&str> = tokens
            .iter()
            .map(|t| {
                if rng.random_bool(overlap) {
                    t.as_str()
                } else {
                    vocab.choose(&mut rng).expect("vocab").as_str()
                }
            })
            .collect();
        if rng.random_bool(0.3) {
            output_tokens.push(vocab.choose(&mut rng).expect("vocab"));
        }
        let output_text = output_tokens.join(" ");

        let input_misspelled = rng.random_bool(sigmoid(-2.2 + 0.8 * difficulty));
        let input_text = if input_misspelled {
            perturb_one_char(&clean_input, &mut rng)
        } else {
            clean_input
        };
        let input_occurrences = (6.0 - 1.0 * difficulty + 0.5 * normal(&mut rng)).exp().floor() as u64 + 1;
        let conversion = sigmoid(-0.5 - 0.8 * difficulty + 0.5 * normal(&mut rng));
        let input_conversion_rate = (conversion * 1000.0).round() / 1000.0;

        tasks.push(TaskTemplate {
            task_id: format!("task-{i:06}"),
            application,
            storefront: storefront.to_string(),
            difficulty,
            input_text,
            output_text,
            input_media_type,
            output_media_type: output_media_type.to_string(),
            input_language: input_language.to_string(),
            input_query_type: input_query_type.to_string(),
            input_misspelled,
            input_occurrences,
            input_conversion_rate,
            true_label,
        });
    }
    Ok(Population { annotators, tasks })
}

/// One scheduled annotation before outcomes are drawn.
struct Slot {
    annotator: usize,
    session: usize,
    timestamp: i64,
    nth: u32,
    seconds_into_session: f64,
    time_on_task: f64,
}

fn schedule(population: &Population, config: &GenConfig) -> Result<Vec<Slot>> {
    let n_tasks = population.tasks.len();
    if n_tasks == 0 {
        return Ok(Vec::new());
    }
    if population.annotators.is_empty() {
        return Err(Error::InvalidConfig("cannot generate tasks without annotators".into()));
    }
    let mut rng = rng_for(config.seed, 2);
    let start = config.start_date;
    let end = start + i64::from(config.duration_days) * DAY;

    let activity_start: Vec<i64> = population
        .annotators
        .iter()
        .map(|a| a.last_activation_date.max(start).min(end - DAY))
        .collect();
    let weights: Vec<f64> = population
        .annotators
        .iter()
        .zip(&activity_start)
        .map(|(a, &s)| a.daily_volume_rate * ((end - s) as f64 / DAY as f64).max(1.0))
        .collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut counts = vec![0usize; population.annotators.len()];
    for _ in 0..n_tasks {
        counts[dist.sample(&mut rng)] += 1;
    }

    let mut slots = Vec::with_capacity(n_tasks);
    for (a, profile) in population.annotators.iter().enumerate() {
        let mut remaining = counts[a];
        let mut lengths = Vec::new();
        while remaining > 0 {
            let u: f64 = rng.random();
            let len = 1 + ((1.0 - u).ln() / (1.0 - 1.0 / MEAN_SESSION_LENGTH).ln()).floor() as usize;
            let len = len.min(remaining);
            lengths.push(len);
            remaining -= len;
        }
        let span = (end - activity_start[a]).max(1);
        let mut starts: Vec<i64> = lengths
            .iter()
            .map(|_| activity_start[a] + rng.random_range(0..span))
            .collect();
        starts.sort_unstable();

        let mut earliest = i64::MIN;
        for (session, (&len, &planned)) in lengths.iter().zip(&starts).enumerate() {
            let session_start = planned.max(earliest);
            let mut ts = session_start;
            for nth in 1..=len {
                let log_time = REFERENCE_LOG_TIME + profile.speed_offset + LOG_TIME_SD * normal(&mut rng);
                let time_on_task = ((log_time.exp() * 10.0).round() / 10.0).max(1.0);
                slots.push(Slot {
                    annotator: a,
                    session,
                    timestamp: ts,
                    nth: nth as u32,
                    seconds_into_session: (ts - session_start) as f64,
                    time_on_task,
                });
                ts += time_on_task.ceil() as i64 + rng.random_range(2..20i64);
            }
            earliest = ts + 600;
        }
    }
    slots.sort_by_key(|s| (s.timestamp, s.annotator, s.nth));
    Ok(slots)
}

/// Per-event uniforms, drawn independently of outcomes so that calibration and
/// counterfactual regeneration only move the decision boundary.
struct Draws {
    error: f64,
    direction: f64,
    magnitude: f64,
    flag: f64,
    comment: f64,
    comment_len: f64,
}

fn displaced_label(truth: RelevanceLabel, direction_u: f64, magnitude_u: f64) -> RelevanceLabel {
    let level = i32::from(truth.level());
    let room_up = 5 - level;
    let room_down = level - 1;
    let go_up = match (room_up > 0, room_down > 0) {
        (true, true) => direction_u < 0.5,
        (true, false) => true,
        _ => false,
    };
    // geometric(1/2) magnitude, at least one level
    let k = 1 + ((1.0 - magnitude_u).ln() / 0.5f64.ln()).floor() as i32;
    let k = k.min(if go_up { room_up } else { room_down }).max(1);
    let new_level = if go_up { level + k } else { level - k };
    RelevanceLabel::from_level(new_level as u8).expect("displacement stays in range")
}

fn realized_rate(linear: &[f64], uniforms: &[f64], intercept: f64) -> f64 {
    let errors = linear
        .iter()
        .zip(uniforms)
        .filter(|(z, u)| **u < sigmoid(intercept + **z))
        .count();
    errors as f64 / linear.len() as f64
}

/// Bisection on the intercept so the realized error rate meets the target.
fn calibrate_intercept(linear: &[f64], uniforms: &[f64], target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..CALIBRATION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let rate = realized_rate(linear, uniforms, mid);
        let miss = (rate - target).abs();
        if miss < best.0 {
            best = (miss, mid);
        }
        if rate < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    let (miss, intercept) = best;
    if miss <= CALIBRATION_TOLERANCE {
        Ok(intercept)
    } else {
        Err(Error::Calibration {
            iterations: CALIBRATION_ITERATIONS,
            best_rate: realized_rate(linear, uniforms, intercept),
            target,
        })
    }
}

pub fn generate_log(population: &Population, config: &GenConfig) -> Result<GeneratedLog> {
    config.validate()?;
    let slots = schedule(population, config)?;
    if slots.is_empty() {
        return Ok(GeneratedLog {
            events: Vec::new(),
            truth: Vec::new(),
            intercept: config.coefficients.intercept,
        });
    }

    let mut rng = rng_for(config.seed, 3);
    let draws: Vec<Draws> = slots
        .iter()
        .map(|_| Draws {
            error: rng.random(),
            direction: rng.random(),
            magnitude: rng.random(),
            flag: rng.random(),
            comment: rng.random(),
            comment_len: rng.random(),
        })
        .collect();

    let beta = &config.coefficients;
    let linear: Vec<f64> = slots
        .iter()
        .zip(&population.tasks)
        .map(|(slot, task)| {
            let annotator = &population.annotators[slot.annotator];
            let fatigue = ((f64::from(slot.nth) - 1.0) / FATIGUE_SCALE).min(MAX_FATIGUE);
            let rush = (REFERENCE_LOG_TIME - slot.time_on_task.ln()) / LOG_TIME_SD;
            linear_part(
                annotator.skill,
                task.difficulty,
                fatigue,
                rush,
                beta,
                config.app_offsets.get(task.application),
            )
        })
        .collect();
    let uniforms: Vec<f64> = draws.iter().map(|d| d.error).collect();
    let intercept = if config.calibrate_intercept {
        calibrate_intercept(&linear, &uniforms, config.target_error_rate)?
    } else {
        beta.intercept
    };

    let mut events = Vec::with_capacity(slots.len());
    let mut truth = Vec::with_capacity(slots.len());
    let mut session_ids: HashMap<(usize, usize), String> = HashMap::new();
    for (((slot, task), draw), z) in slots.iter().zip(&population.tasks).zip(&draws).zip(&linear) {
        let annotator = &population.annotators[slot.annotator];
        let p = sigmoid(intercept + z);
        let is_error = draw.error < p;
        let annotator_label = if is_error {
            displaced_label(task.true_label, draw.direction, draw.magnitude)
        } else {
            task.true_label
        };
        let problem_flagged = draw.flag < 0.02;
        let comment_prob = sigmoid(-2.3 + 0.5 * task.difficulty) + if problem_flagged { 0.5 } else { 0.0 };
        let comment_length = if draw.comment < comment_prob {
            1 + ((1.0 - draw.comment_len).ln() / (1.0 - 1.0 / 6.0f64).ln()).floor() as u32
        } else {
            0
        };
        let session_id = session_ids
            .entry((slot.annotator, slot.session))
            .or_insert_with(|| format!("{}-s{:04}", annotator.annotator_id, slot.session))
            .clone();
        events.push(AnnotationEvent {
            task_id: task.task_id.clone(),
            annotator_id: annotator.annotator_id.clone(),
            application: task.application,
            storefront: task.storefront.clone(),
            timestamp: slot.timestamp,
            session_id,
            nth_task_in_session: slot.nth,
            seconds_into_session: slot.seconds_into_session,
            input_text: task.input_text.clone(),
            output_text: task.output_text.clone(),
            input_media_type: task.input_media_type,
            output_media_type: task.output_media_type.clone(),
            input_language: task.input_language.clone(),
            input_query_type: task.input_query_type.clone(),
            input_misspelled: task.input_misspelled,
            input_occurrences: task.input_occurrences,
            input_conversion_rate: task.input_conversion_rate,
            annotator_label,
            problem_flagged,
            time_on_task: slot.time_on_task,
            comment_length,
            audit_label: task.true_label,
        });
        truth.push(TruthRecord {
            task_id: task.task_id.clone(),
            true_error_probability: p,
        });
    }
    Ok(GeneratedLog {
        events,
        truth,
        intercept,
    })
}

/// Convenience: population plus log from one config.
pub fn generate(config: &GenConfig) -> Result<(Population, GeneratedLog)> {
    let population = generate_population(config)?;
    let log = generate_log(&population, config)?;
    Ok((population, log))
}

/// AUC of the hidden true probabilities against the realized verdicts.
pub fn oracle_auc(events: &[AnnotationEvent], probabilities: &[f64]) -> Result<f64> {
    if events.len() != probabilities.len() {
        return Err(Error::Dimension {
            expected: events.len(),
            actual: probabilities.len(),
        });
    }
    let labels: Vec<bool> = events.iter().map(|e| derive_verdict(e).is_error).collect();
    auc(probabilities, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation_log::validate_log;

    fn small_config() -> GenConfig {
        GenConfig {
            n_annotators: 20,
            n_tasks: 2_000,
            duration_days: 60,
            ..GenConfig::default()
        }
    }

    #[test]
    fn error_probability_examples() {
        let zero = Coefficients {
            intercept: 0.0,
            skill: 0.0,
            difficulty: 0.0,
            fatigue: 0.0,
            rush: 0.0,
        };
        assert_eq!(error_probability(0.3, -1.0, 0.5, 2.0, &zero, 0.0), 0.5);
        let base = Coefficients {
            intercept: logit(0.1),
            ..zero.clone()
        };
        assert!((error_probability(1.0, 1.0, 1.0, 1.0, &base, 0.0) - 0.1).abs() < 1e-12);
        let skilled = Coefficients {
            skill: 0.7,
            ..base
        };
        assert!(
            error_probability(2.0, 0.0, 0.0, 0.0, &skilled, 0.0) < error_probability(-2.0, 0.0, 0.0, 0.0, &skilled, 0.0)
        );
    }

    #[test]
    fn empty_annotator_set() {
        let config = GenConfig {
            n_annotators: 0,
            n_tasks: 0,
            ..GenConfig::default()
        };
        let (population, log) = generate(&config).unwrap();
        assert!(population.annotators.is_empty());
        assert!(log.events.is_empty());
    }

    #[test]
    fn tasks_without_annotators_fail() {
        let config = GenConfig {
            n_annotators: 0,
            n_tasks: 10,
            ..GenConfig::default()
        };
        assert!(generate(&config).is_err());
    }

    #[test]
    fn rejects_bad_target_rate() {
        let config = GenConfig {
            target_error_rate: 1.0,
            ..GenConfig::default()
        };
        assert!(matches!(generate_population(&config), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn deterministic_population_and_log() {
        let config = small_config();
        let (p1, l1) = generate(&config).unwrap();
        let (p2, l2) = generate(&config).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn generated_log_is_valid_and_calibrated() {
        let (_, log) = generate(&small_config()).unwrap();
        validate_log(&log.events).unwrap();
        assert!((log.realized_error_rate() - 0.10).abs() <= 0.01);
        for e in &log.events {
            assert!((1..=5).contains(&e.annotator_label.level()));
        }
        assert!(log.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn displacement_stays_in_range() {
        for truth in RelevanceLabel::ALL {
            for i in 0..50 {
                for j in 0..50 {
                    let label = displaced_label(truth, i as f64 / 50.0, j as f64 / 50.0);
                    assert_ne!(label, truth);
                }
            }
        }
        // a large magnitude draw from the middle of the scale reaches a major error
        let far = displaced_label(RelevanceLabel::Perfect, 0.1, 0.95);
        assert!(far.distance(RelevanceLabel::Perfect) > 2);
    }

    #[test]
    fn calibration_fails_on_tiny_logs() {
        let linear = vec![0.0; 7];
        let uniforms = vec![0.05, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        assert!(matches!(calibrate_intercept(&linear, &uniforms, 0.1), Err(Error::Calibration { .. })));
    }
}
