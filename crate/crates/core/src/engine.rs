//! The real-time loop: ring buffers over frames and danger states, the
//! trigger gate on every tick, gated guidance requests, reminder
//! deduplication, user questions, and the JSONL event log.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotation::load_detections;
use crate::domain::{infer_reminder_kinds, DetectionSet, Frame, ReminderKind, TriggerState};
use crate::error::{EngineError, InputError, PlanError};
use crate::hplanner::{build_backend, plan_answer, plan_guidance, PlanningMode, PromptOptions, VlmBackend};
use crate::polm::{build_priors, priors_to_fragment_with, PolmConfig};
use crate::tap::{
    decide_trigger, load_model, model_to_string, resize_bilinear, stack_planes, TapModel, TriggerDecision,
    TriggerPolicy, CLASSES,
};
use crate::hplanner::BackendDescriptor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub fps: f64,
    pub n_history: usize,
    pub polm: PolmConfig,
    pub policy: TriggerPolicy,
    pub backend: BackendDescriptor,
    /// Identical reminder text is not repeated within this window.
    pub cooldown_dedup_ms: u64,
    pub vlm_timeout_ms: u64,
    pub planning_mode: PlanningMode,
    pub prompt: PromptOptions,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            fps: 2.0,
            n_history: 3,
            polm: PolmConfig::default(),
            policy: TriggerPolicy::default(),
            backend: BackendDescriptor::default(),
            cooldown_dedup_ms: 8000,
            vlm_timeout_ms: 10_000,
            planning_mode: PlanningMode::default(),
            prompt: PromptOptions::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        if self.n_history == 0 {
            return bad("n_history must be at least 1".into());
        }
        if self.prompt.max_images < self.n_history {
            return bad(format!(
                "prompt.max_images {} cannot hold a window of {} frames",
                self.prompt.max_images, self.n_history
            ));
        }
        self.polm.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.policy.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.backend.validate()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn model_digest(model: &TapModel) -> String {
    sha256_hex(model_to_string(model).as_bytes())
}

/// Where a backend failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Reminder,
    Question,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    TapDecision {
        frame_index: u64,
        probs: [f64; CLASSES],
        predicted: TriggerState,
        decision: TriggerDecision,
    },
    ReminderEmitted {
        level: TriggerState,
        text: String,
        kinds: BTreeSet<ReminderKind>,
        location: String,
        weather: String,
        traffic: String,
        scene: String,
        priors: String,
    },
    ReminderSuppressed {
        level: TriggerState,
        text: String,
        last_emitted_ms: u64,
    },
    QaAnswered {
        question: String,
        answer: String,
    },
    BackendError {
        request: RequestKind,
        error: String,
    },
}

/// One log record, serialized as `{t, kind, payload}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineEvent {
    pub t: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl EngineEvent {
    pub fn kind(&self) -> &'static str {
        match self.body {
            EventBody::TapDecision { .. } => "TapDecision",
            EventBody::ReminderEmitted { .. } => "ReminderEmitted",
            EventBody::ReminderSuppressed { .. } => "ReminderSuppressed",
            EventBody::QaAnswered { .. } => "QaAnswered",
            EventBody::BackendError { .. } => "BackendError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub config_digest: String,
    pub seed: u64,
    pub model_digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLine {
    header: RunHeader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub header: RunHeader,
    pub events: Vec<EngineEvent>,
}

impl EventLog {
    pub fn count(&self, kind: &str) -> usize {
        self.events.iter().filter(|e| e.kind() == kind).count()
    }

    pub fn header_line(header: &RunHeader) -> String {
        serde_json::to_string(&HeaderLine { header: header.clone() }).expect("header serializes")
    }

    pub fn event_line(event: &EngineEvent) -> String {
        serde_json::to_string(event).expect("event serializes")
    }

    /// Newline-delimited form: header first, then one event per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = Self::header_line(&self.header);
        out.push('\n');
        for e in &self.events {
            out.push_str(&Self::event_line(e));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, (usize, String)> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or((1, "missing header".to_string()))?;
        let header = serde_json::from_str::<HeaderLine>(first).map_err(|e| (1, format!("bad header: {e}")))?.header;
        let events = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, format!("bad event: {e}"))))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, events })
    }

    pub fn load(path: &Path) -> Result<Self, InputError> {
        let text = fs::read_to_string(path).map_err(|e| InputError::io(path, e))?;
        Self::from_jsonl(&text).map_err(|(line, msg)| InputError::record(path, line, msg))
    }
}

pub struct Engine {
    config: EngineConfig,
    model: TapModel,
    backend: Box<dyn VlmBackend>,
    policy: TriggerPolicy,
    frames: VecDeque<Frame>,
    planes: VecDeque<Vec<f64>>,
    newest_detections: DetectionSet,
    states: VecDeque<TriggerState>,
    last_emitted: BTreeMap<String, u64>,
    header: RunHeader,
    events: Vec<EngineEvent>,
}

impl Engine {
    /// Builds the backend named in the config.
    pub fn new(config: EngineConfig, model: TapModel) -> Result<Self, EngineError> {
        config.validate()?;
        let backend = build_backend(&config.backend)?;
        Self::with_backend(config, model, backend)
    }

    pub fn with_backend(config: EngineConfig, model: TapModel, backend: Box<dyn VlmBackend>) -> Result<Self, EngineError> {
        config.validate()?;
        if model.config.n_history != config.n_history {
            return Err(EngineError::Config(format!(
                "gate model expects {} frames but the engine keeps {}",
                model.config.n_history, config.n_history
            )));
        }
        let header = RunHeader {
            config_digest: config.digest(),
            seed: model.config.seed,
            model_digest: model_digest(&model),
        };
        let n = config.n_history;
        Ok(Self {
            policy: config.policy.clone(),
            backend,
            frames: VecDeque::with_capacity(n),
            planes: VecDeque::with_capacity(n),
            newest_detections: DetectionSet::default(),
            states: std::iter::repeat_n(TriggerState::Low, n).collect(),
            last_emitted: BTreeMap::new(),
            header,
            events: Vec::new(),
            config,
            model,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Danger levels of the last `n_history` ticks, oldest first.
    pub fn state_history(&self) -> Vec<TriggerState> {
        self.states.iter().copied().collect()
    }

    pub fn header(&self) -> &RunHeader {
        &self.header
    }

    pub fn events(&self) -> &[EngineEvent] {
        &self.events
    }

    pub fn into_log(self) -> EventLog {
        EventLog {
            header: self.header,
            events: self.events,
        }
    }

    fn window(&self) -> Vec<Frame> {
        self.frames.iter().cloned().collect()
    }

    fn priors_fragment(&self) -> Result<String, EngineError> {
        let priors = build_priors(&self.newest_detections, &self.config.polm)?;
        Ok(priors_to_fragment_with(&priors, self.config.polm.mode))
    }

    fn record(&mut self, t: u64, body: EventBody) -> EngineEvent {
        let event = EngineEvent { t, body };
        self.events.push(event.clone());
        event
    }

    /// Ingests one frame. Returns the events it produced, in order.
    pub fn push_frame(&mut self, frame: Frame, detections: DetectionSet) -> Result<Vec<EngineEvent>, EngineError> {
        if let Some(prev) = self.frames.back() {
            if frame.timestamp_ms <= prev.timestamp_ms {
                return Err(EngineError::OutOfOrder {
                    index: frame.index,
                    timestamp_ms: frame.timestamp_ms,
                    previous_ms: prev.timestamp_ms,
                });
            }
        }
        let n = self.config.n_history;
        let hw = self.model.config.input_hw;
        if self.frames.len() == n {
            self.frames.pop_front();
            self.planes.pop_front();
        }
        self.planes.push_back(resize_bilinear(&frame, hw, hw));
        self.frames.push_back(frame);
        self.newest_detections = detections;
        if self.frames.len() < n {
            return Ok(Vec::new());
        }

        let first = self.events.len();
        let now = self.frames.back().expect("window is full").timestamp_ms;
        let frame_index = self.frames.back().expect("window is full").index;
        let refs: Vec<&[f64]> = self.planes.iter().map(Vec::as_slice).collect();
        let input = stack_planes(&refs, hw);
        let output = self.model.forward(&input, &self.state_history())?;
        let predicted = output.argmax();
        let decision = decide_trigger(&output.probs, now, &mut self.policy);
        self.record(
            now,
            EventBody::TapDecision {
                frame_index,
                probs: output.probs,
                predicted,
                decision,
            },
        );
        if let TriggerDecision::Fire(level) = decision {
            self.remind(now, level)?;
        }
        self.states.pop_front();
        self.states.push_back(predicted);
        Ok(self.events[first..].to_vec())
    }

    fn remind(&mut self, now: u64, level: TriggerState) -> Result<(), EngineError> {
        let fragment = self.priors_fragment()?;
        let frames = self.window();
        let reply = plan_guidance(
            self.backend.as_ref(),
            &frames,
            &fragment,
            self.config.planning_mode,
            &self.config.prompt,
            self.config.vlm_timeout_ms,
        );
        let resp = match reply {
            Ok(r) => r,
            Err(PlanError::Prompt(e)) => return Err(e.into()),
            Err(e) => {
                self.record(
                    now,
                    EventBody::BackendError {
                        request: RequestKind::Reminder,
                        error: e.to_string(),
                    },
                );
                return Ok(());
            }
        };
        let text = resp.instruction.trim().to_string();
        match self.last_emitted.get(&text) {
            Some(&last) if now - last < self.config.cooldown_dedup_ms => {
                self.record(
                    now,
                    EventBody::ReminderSuppressed {
                        level,
                        text,
                        last_emitted_ms: last,
                    },
                );
            }
            _ => {
                self.last_emitted.insert(text.clone(), now);
                self.record(
                    now,
                    EventBody::ReminderEmitted {
                        level,
                        kinds: infer_reminder_kinds(&text),
                        text,
                        location: resp.location,
                        weather: resp.weather,
                        traffic: resp.traffic,
                        scene: resp.scene,
                        priors: fragment,
                    },
                );
            }
        }
        Ok(())
    }

    /// Answers a user question over the current window, bypassing the gate.
    /// A backend failure is returned as a `BackendError` event.
    pub fn ask(&mut self, question: &str) -> Result<EngineEvent, EngineError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(EngineError::EmptyQuestion);
        }
        let now = self.frames.back().ok_or(EngineError::NoFrames)?.timestamp_ms;
        let fragment = self.priors_fragment()?;
        let frames = self.window();
        let body = match plan_answer(
            self.backend.as_ref(),
            &frames,
            &fragment,
            question,
            &self.config.prompt,
            self.config.vlm_timeout_ms,
        ) {
            Ok(answer) => EventBody::QaAnswered {
                question: question.to_string(),
                answer,
            },
            Err(PlanError::Prompt(e)) => return Err(e.into()),
            Err(e) => EventBody::BackendError {
                request: RequestKind::Question,
                error: e.to_string(),
            },
        };
        Ok(self.record(now, body))
    }
}

/// One entry of a frame directory's `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: u64,
    pub timestamp_ms: u64,
    pub file: String,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn frame_file_name(index: u64) -> String {
    format!("frame_{index:06}.png")
}

/// Lists the frames of `dir`: from its manifest when present, otherwise
/// every `frame_NNNNNN.png` with timestamps spaced `1000 / fps` ms apart.
pub fn read_manifest(dir: &Path, fps: f64) -> Result<Vec<ManifestEntry>, InputError> {
    let manifest = dir.join(MANIFEST_FILE);
    let entries: Vec<ManifestEntry> = if manifest.exists() {
        let text = fs::read_to_string(&manifest).map_err(|e| InputError::io(&manifest, e))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| InputError::record(&manifest, i + 1, format!("bad manifest entry: {e}")))
            })
            .collect::<Result<_, _>>()?
    } else {
        let listing = fs::read_dir(dir).map_err(|e| InputError::io(dir, e))?;
        let mut found = Vec::new();
        for entry in listing {
            let name = entry.map_err(|e| InputError::io(dir, e))?.file_name().to_string_lossy().into_owned();
            let index = name
                .strip_prefix("frame_")
                .and_then(|r| r.strip_suffix(".png"))
                .and_then(|d| d.parse::<u64>().ok());
            if let Some(index) = index {
                found.push(ManifestEntry {
                    index,
                    timestamp_ms: (index as f64 * 1000.0 / fps).round() as u64,
                    file: name,
                });
            }
        }
        found.sort_by_key(|e| e.index);
        found
    };
    if entries.is_empty() {
        return Err(InputError::invalid(dir, "no frames found"));
    }
    Ok(entries)
}

pub fn read_frame(dir: &Path, entry: &ManifestEntry) -> Result<Frame, InputError> {
    let path = dir.join(&entry.file);
    let img = image::open(&path)
        .map_err(|e| InputError::invalid(&path, format!("cannot decode frame: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Frame::new(entry.index, entry.timestamp_ms, w, h, img.into_raw()).map_err(|e| InputError::invalid(&path, e.to_string()))
}

/// Writes frames as PNGs plus a manifest.
pub fn write_frame_dir(dir: &Path, frames: &[Frame]) -> Result<(), InputError> {
    fs::create_dir_all(dir).map_err(|e| InputError::io(dir, e))?;
    let mut manifest = String::new();
    for f in frames {
        let name = frame_file_name(f.index);
        let path = dir.join(&name);
        image::save_buffer(&path, &f.pixels, f.width, f.height, image::ExtendedColorType::Rgb8)
            .map_err(|e| InputError::invalid(&path, format!("cannot encode frame: {e}")))?;
        let entry = ManifestEntry {
            index: f.index,
            timestamp_ms: f.timestamp_ms,
            file: name,
        };
        manifest.push_str(&serde_json::to_string(&entry).expect("entry serializes"));
        manifest.push('\n');
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| InputError::io(&path, e))
}

/// Files consumed and produced by [`run_stream`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamPaths {
    pub frame_dir: PathBuf,
    /// Frames without an entry get an empty detection set.
    pub detections: Option<PathBuf>,
    pub tap_model: PathBuf,
    pub out: PathBuf,
}

/// Line that ends an interactive session.
pub const QUIT_COMMAND: &str = ":quit";

/// Replays a frame directory through a fresh engine, appending each event
/// to `paths.out` as it happens.
///
/// With `questions`, one line is read after every tick: a blank line asks
/// nothing, [`QUIT_COMMAND`] stops the replay, end of input stops reading.
pub fn run_stream(
    config: &EngineConfig,
    paths: &StreamPaths,
    mut questions: Option<&mut dyn BufRead>,
) -> Result<EventLog, EngineError> {
    let entries = read_manifest(&paths.frame_dir, config.fps)?;
    let detections = match &paths.detections {
        Some(p) => load_detections(p)?,
        None => BTreeMap::new(),
    };
    let model = load_model(&paths.tap_model).map_err(|e| match e {
        crate::error::TapError::Io(source) => EngineError::Io {
            path: paths.tap_model.clone(),
            source,
        },
        other => EngineError::Config(format!("{}: {other}", paths.tap_model.display())),
    })?;
    let mut engine = Engine::new(config.clone(), model)?;

    let io_err = |source| EngineError::Io {
        path: paths.out.clone(),
        source,
    };
    let file = fs::File::create(&paths.out).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", EventLog::header_line(engine.header())).map_err(io_err)?;

    let mut written = 0;
    for entry in &entries {
        let frame = read_frame(&paths.frame_dir, entry)?;
        let dets = detections.get(&entry.index).cloned().unwrap_or_else(|| DetectionSet::empty(entry.index));
        engine.push_frame(frame, dets)?;

        let mut quit = false;
        if let Some(input) = questions.as_mut() {
            let mut line = String::new();
            let read = input.read_line(&mut line).map_err(|source| EngineError::Io {
                path: PathBuf::from("<stdin>"),
                source,
            })?;
            let line = line.trim();
            if read == 0 {
                questions = None;
            } else if line == QUIT_COMMAND {
                quit = true;
            } else if !line.is_empty() {
                engine.ask(line)?;
            }
        }

        for e in &engine.events()[written..] {
            writeln!(out, "{}", EventLog::event_line(e)).map_err(io_err)?;
        }
        written = engine.events().len();
        out.flush().map_err(io_err)?;
        if quit {
            break;
        }
    }
    Ok(engine.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hplanner::{render_structured_response, HierarchicalResponse, MockBackend};
    use crate::tap::TapConfig;

    fn tiny_model(n: usize) -> TapModel {
        let cfg = TapConfig {
            n_history: n,
            input_hw: 8,
            conv_channels: vec![2, 2],
            fv_dim: 4,
            ..TapConfig::default()
        };
        TapModel::zeros(&cfg).unwrap()
    }

    /// A zero model whose output is pinned to `level` by the final bias.
    fn constant_model(n: usize, level: TriggerState) -> TapModel {
        let mut m = tiny_model(n);
        m.fusion_out.bias[level.index()] = 10.0;
        m
    }

    fn reply(instruction: &str) -> String {
        render_structured_response(&HierarchicalResponse {
            location: "street".into(),
            weather: "sunny".into(),
            traffic: "high".into(),
            scene: "cars".into(),
            instruction: instruction.into(),
        })
    }

    fn engine(model: TapModel, backend: MockBackend) -> Engine {
        Engine::with_backend(EngineConfig::default(), model, Box::new(backend)).unwrap()
    }

    fn frame(i: u64) -> Frame {
        Frame::solid(i, i * 500, 8, 6, [i as u8, 40, 90])
    }

    #[test]
    fn fresh_engine_seeds_low_history() {
        let e = engine(tiny_model(3), MockBackend::constant("x"));
        assert_eq!(e.state_history(), vec![TriggerState::Low; 3]);
    }

    #[test]
    fn history_length_must_match_model() {
        let err = Engine::with_backend(EngineConfig::default(), tiny_model(2), Box::new(MockBackend::constant("x")));
        assert!(matches!(err, Err(EngineError::Config(_))));
    }

    #[test]
    fn config_digest_tracks_content() {
        let a = EngineConfig::default();
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(a.digest(), hex::encode(Sha256::digest(json.as_bytes())));
        let b = EngineConfig {
            cooldown_dedup_ms: 1,
            ..EngineConfig::default()
        };
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), EngineConfig::default().digest());
    }

    #[test]
    fn warm_up_emits_nothing() {
        let mut e = engine(tiny_model(3), MockBackend::constant("x"));
        assert!(e.push_frame(frame(0), DetectionSet::empty(0)).unwrap().is_empty());
        assert!(e.push_frame(frame(1), DetectionSet::empty(1)).unwrap().is_empty());
        let ev = e.push_frame(frame(2), DetectionSet::empty(2)).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind(), "TapDecision");
        assert_eq!(ev[0].t, 1000);
    }

    #[test]
    fn out_of_order_frame_is_rejected() {
        let mut e = engine(tiny_model(3), MockBackend::constant("x"));
        e.push_frame(frame(4), DetectionSet::empty(4)).unwrap();
        assert!(matches!(e.push_frame(frame(3), DetectionSet::empty(3)), Err(EngineError::OutOfOrder { .. })));
    }

    #[test]
    fn repeated_text_is_suppressed_within_window() {
        let mut e = engine(constant_model(3, TriggerState::High), MockBackend::constant(reply("stop now")));
        let mut kinds = Vec::new();
        for i in 0..20 {
            for ev in e.push_frame(frame(i), DetectionSet::empty(i)).unwrap() {
                if ev.kind() != "TapDecision" {
                    kinds.push((ev.t, ev.kind()));
                }
            }
        }
        // Fires at 1000, 6000 (suppressed, 5000 < 8000 since the emission), then 11000 emitted...
        assert_eq!(kinds[0], (1000, "ReminderEmitted"));
        assert_eq!(kinds[1], (6000, "ReminderSuppressed"));
    }

    #[test]
    fn argmax_enters_history() {
        let mut e = engine(constant_model(3, TriggerState::Mid), MockBackend::constant(reply("slow down")));
        for i in 0..4 {
            e.push_frame(frame(i), DetectionSet::empty(i)).unwrap();
        }
        assert_eq!(e.state_history(), vec![TriggerState::Low, TriggerState::Mid, TriggerState::Mid]);
    }

    #[test]
    fn ask_needs_frames_and_text() {
        let mut e = engine(tiny_model(3), MockBackend::constant("{\"Answer\": \"a quiet street\"}"));
        assert!(matches!(e.ask("describe the current scene"), Err(EngineError::NoFrames)));
        e.push_frame(frame(0), DetectionSet::empty(0)).unwrap();
        assert!(matches!(e.ask("  "), Err(EngineError::EmptyQuestion)));
        let ev = e.ask("describe the current scene").unwrap();
        assert_eq!(
            ev.body,
            EventBody::QaAnswered {
                question: "describe the current scene".into(),
                answer: "a quiet street".into()
            }
        );
        assert_eq!(ev.t, 0);
    }

    #[test]
    fn log_round_trips_through_jsonl() {
        let mut e = engine(constant_model(3, TriggerState::High), MockBackend::constant(reply("stop")));
        for i in 0..8 {
            e.push_frame(frame(i), DetectionSet::empty(i)).unwrap();
        }
        e.ask("what is ahead").unwrap();
        let log = e.into_log();
        let text = log.to_jsonl();
        assert!(text.lines().nth(1).unwrap().starts_with("{\"t\":1000,\"kind\":\"TapDecision\",\"payload\":{"));
        assert_eq!(EventLog::from_jsonl(&text).unwrap(), log);
    }
}
