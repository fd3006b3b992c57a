//! Prompt planning: builds the guidance, question, danger, normalization and
//! judge prompts, sends them to a vision-language backend and parses the
//! structured replies.

mod backend;
mod parse;

use std::io::Cursor;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Frame, TriggerState};
use crate::error::{PlanError, PromptError};

pub use backend::{
    build_backend, request_key, BackendDescriptor, BackendKind, HttpBackend, MockBackend, MockTable, VlmBackend,
    MOCK_FALLBACK,
};
pub use parse::{
    extract_fields, parse_danger_response, parse_qa_answer, parse_structured_response, render_structured_response,
    HierarchicalResponse, DANGER_KEYS, FIELD_KEYS,
};

pub const WALK_TEMPLATE: &str = include_str!("../../templates/walk.txt");
pub const QA_TEMPLATE: &str = include_str!("../../templates/qa.txt");
pub const DANGER_TEMPLATE: &str = include_str!("../../templates/danger.txt");
pub const NORMALIZE_TEMPLATE: &str = include_str!("../../templates/normalize.txt");
pub const JUDGE_TEMPLATE: &str = include_str!("../../templates/judge.txt");
pub const PERCEPTION_TEMPLATE: &str = include_str!("../../templates/perception.txt");
pub const DECISION_TEMPLATE: &str = include_str!("../../templates/decision.txt");

/// Appended to the prompt when a reply has to be requested again.
pub const FORMAT_REMINDER: &str =
    "\nYour previous answer could not be read. Reply only with the JSON object in the format given above.";

/// Number of history slots in the danger template.
pub const DANGER_HISTORY: usize = 2;

/// An RGB frame attached to a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl PromptImage {
    pub fn from_frame(frame: &Frame) -> Self {
        Self {
            width: frame.width,
            height: frame.height,
            pixels: frame.pixels.clone(),
        }
    }

    /// SHA-256 over little-endian width, height and the raw RGB bytes.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update(&self.pixels);
        h.finalize().into()
    }

    pub fn to_png(&self) -> Result<Vec<u8>, PromptError> {
        use image::ImageEncoder;
        let mut out = Cursor::new(Vec::new());
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(&self.pixels, self.width, self.height, image::ExtendedColorType::Rgb8)
            .map_err(|e| PromptError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRequest {
    pub system_text: String,
    pub user_text: String,
    pub images: Vec<PromptImage>,
    pub max_tokens: u32,
    pub temperature: f64,
}

/// Decoding settings shared by every request a planner issues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptOptions {
    pub system_text: String,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Upper bound on attached frames.
    pub max_images: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            system_text: String::new(),
            max_tokens: 512,
            temperature: 0.0,
            max_images: 3,
        }
    }
}

impl PromptRequest {
    fn new(user_text: String, frames: &[Frame], opts: &PromptOptions) -> Result<Self, PromptError> {
        if user_text.trim().is_empty() {
            return Err(PromptError::Empty("user_text"));
        }
        if frames.len() > opts.max_images {
            return Err(PromptError::TooManyImages {
                max: opts.max_images,
                actual: frames.len(),
            });
        }
        Ok(Self {
            system_text: opts.system_text.clone(),
            user_text,
            images: frames.iter().map(PromptImage::from_frame).collect(),
            max_tokens: opts.max_tokens,
            temperature: opts.temperature,
        })
    }
}

/// Substitutes `{name}` placeholders in one left-to-right pass. Unknown
/// braces are copied verbatim and substituted values are never rescanned.
pub fn render_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        let hit = values
            .iter()
            .find(|(name, _)| tail.starts_with(name) && tail[name.len()..].starts_with('}'));
        match hit {
            Some((name, value)) => {
                out.push_str(value);
                rest = &tail[name.len() + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn build_walk_prompt(frames: &[Frame], priors_fragment: &str, opts: &PromptOptions) -> Result<PromptRequest, PromptError> {
    let text = render_template(WALK_TEMPLATE, &[("json_str", priors_fragment)]);
    PromptRequest::new(text, frames, opts)
}

pub fn build_qa_prompt(
    frames: &[Frame],
    priors_fragment: &str,
    question: &str,
    opts: &PromptOptions,
) -> Result<PromptRequest, PromptError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(PromptError::Empty("question"));
    }
    let quoted = serde_json::to_string(question).expect("string serializes");
    let text = render_template(QA_TEMPLATE, &[("json_str", priors_fragment), ("question", &quoted)]);
    PromptRequest::new(text, frames, opts)
}

pub fn build_danger_prompt(
    history_states: &[TriggerState],
    frames: &[Frame],
    opts: &PromptOptions,
) -> Result<PromptRequest, PromptError> {
    if history_states.len() != DANGER_HISTORY {
        return Err(PromptError::HistoryCount {
            expected: DANGER_HISTORY,
            actual: history_states.len(),
        });
    }
    let letters: Vec<String> = history_states.iter().map(|s| s.letter().to_string()).collect();
    let text = render_template(
        DANGER_TEMPLATE,
        &[("history_states[0]", &letters[0]), ("history_states[1]", &letters[1])],
    );
    PromptRequest::new(text, frames, opts)
}

pub fn build_normalization_prompt(annotated_text: &str, opts: &PromptOptions) -> Result<PromptRequest, PromptError> {
    if annotated_text.trim().is_empty() {
        return Err(PromptError::Empty("annotated text"));
    }
    let text = render_template(NORMALIZE_TEMPLATE, &[("annotated_text", annotated_text)]);
    PromptRequest::new(text, &[], opts)
}

/// Pairwise judge prompt; `answer_a` is shown first.
pub fn build_judge_prompt(
    ground_truth: &str,
    answer_a: &str,
    answer_b: &str,
    opts: &PromptOptions,
) -> Result<PromptRequest, PromptError> {
    let text = render_template(
        JUDGE_TEMPLATE,
        &[("ground_truth", ground_truth), ("answer_a", answer_a), ("answer_b", answer_b)],
    );
    PromptRequest::new(text, &[], opts)
}

/// First half of the two-step mode: scene fields 1-4 only.
pub fn build_perception_prompt(frames: &[Frame], priors_fragment: &str, opts: &PromptOptions) -> Result<PromptRequest, PromptError> {
    let text = render_template(PERCEPTION_TEMPLATE, &[("json_str", priors_fragment)]);
    PromptRequest::new(text, frames, opts)
}

/// Second half of the two-step mode: the instruction, given the perception reply.
pub fn build_decision_prompt(
    frames: &[Frame],
    priors_fragment: &str,
    perception: &HierarchicalResponse,
    opts: &PromptOptions,
) -> Result<PromptRequest, PromptError> {
    let summary = format!(
        "1. Location: {}; 2. Weather conditions: {}; 3. Traffic flow rating: {}; 4. Scene: {}",
        perception.location, perception.weather, perception.traffic, perception.scene
    );
    let text = render_template(DECISION_TEMPLATE, &[("json_str", priors_fragment), ("perception", &summary)]);
    PromptRequest::new(text, frames, opts)
}

/// Whether reasoning levels are requested in one reply or in two turns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanningMode {
    #[default]
    SingleRequest,
    MultiTurn,
}

fn with_reminder(req: &PromptRequest) -> PromptRequest {
    PromptRequest {
        user_text: format!("{}{FORMAT_REMINDER}", req.user_text),
        ..req.clone()
    }
}

/// Sends `req`, parsing with `parse`; a reply that fails to parse is
/// requested once more with [`FORMAT_REMINDER`] appended.
pub fn ask_with_retry<T, E>(
    backend: &dyn VlmBackend,
    req: &PromptRequest,
    timeout_ms: u64,
    parse: impl Fn(&str) -> Result<T, E>,
) -> Result<T, PlanError>
where
    PlanError: From<E>,
{
    let reply = backend.complete(req, timeout_ms)?;
    match parse(&reply) {
        Ok(v) => Ok(v),
        Err(_) => {
            let reply = backend.complete(&with_reminder(req), timeout_ms)?;
            Ok(parse(&reply)?)
        }
    }
}

/// Runs the full guidance exchange for one window of frames.
pub fn plan_guidance(
    backend: &dyn VlmBackend,
    frames: &[Frame],
    priors_fragment: &str,
    mode: PlanningMode,
    opts: &PromptOptions,
    timeout_ms: u64,
) -> Result<HierarchicalResponse, PlanError> {
    match mode {
        PlanningMode::SingleRequest => {
            let req = build_walk_prompt(frames, priors_fragment, opts)?;
            ask_with_retry(backend, &req, timeout_ms, parse_structured_response)
        }
        PlanningMode::MultiTurn => {
            let req = build_perception_prompt(frames, priors_fragment, opts)?;
            let scene = ask_with_retry(backend, &req, timeout_ms, |t| extract_fields(t, &FIELD_KEYS[..4]))?;
            let mut perception = HierarchicalResponse {
                location: scene[0].clone(),
                weather: scene[1].clone(),
                traffic: scene[2].clone(),
                scene: scene[3].clone(),
                instruction: String::new(),
            };
            let req = build_decision_prompt(frames, priors_fragment, &perception, opts)?;
            let decision = ask_with_retry(backend, &req, timeout_ms, |t| extract_fields(t, &FIELD_KEYS[4..]))?;
            perception.instruction = decision[0].clone();
            Ok(perception)
        }
    }
}

/// Answers a free-form question about the current window.
pub fn plan_answer(
    backend: &dyn VlmBackend,
    frames: &[Frame],
    priors_fragment: &str,
    question: &str,
    opts: &PromptOptions,
    timeout_ms: u64,
) -> Result<String, PlanError> {
    let req = build_qa_prompt(frames, priors_fragment, question, opts)?;
    let reply = backend.complete(&req, timeout_ms)?;
    Ok(parse_qa_answer(&reply))
}
