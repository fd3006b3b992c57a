//! Timestamped annotation documents, detection files, and gate sample
//! construction.
//!
//! An annotation file is a block of `key: value` scene attributes followed by
//! events. Each event starts with a header line `<XmYYs-CODES>` and runs until
//! the next header:
//!
//! ```text
//! weather: Sunny
//! location: Road
//! traffic_flow: Mid
//! danger: B
//!
//! <2m30s-A,E>
//! almost hit the wall, go forward in the 11 o'clock direction
//! <3m39s-O>
//! Q: describe the current scene
//! A: at a crossroads with many vehicles
//! ```
//!
//! Codes `A`..`F` are reminder kinds in order (obstacle, intersection, road
//! width, oncoming mover, road departure, identifier); `O` marks a question.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    BBox, Detection, DetectionSet, LocationType, ReminderKind, SceneAttributes, TrafficFlow,
    TriggerState, Weather,
};
use crate::error::{AnnotationError, InputError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventCode {
    Reminder(ReminderKind),
    Question,
}

impl EventCode {
    pub fn letter(self) -> char {
        match self {
            EventCode::Question => 'O',
            EventCode::Reminder(kind) => {
                let i = ReminderKind::ALL.iter().position(|k| *k == kind).unwrap_or(0);
                (b'A' + i as u8) as char
            }
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'O' => Some(EventCode::Question),
            'A'..='F' => Some(EventCode::Reminder(ReminderKind::ALL[(c as u8 - b'A') as usize])),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventBody {
    Text(String),
    Qa { question: String, answer: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationEvent {
    pub time_s: f64,
    pub codes: Vec<EventCode>,
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationDoc {
    pub scene: SceneAttributes,
    pub events: Vec<AnnotationEvent>,
    /// Danger level changes, sorted by time, first entry at 0 s.
    pub danger_track: Vec<(f64, TriggerState)>,
}

impl AnnotationDoc {
    /// Ground-truth danger level in effect at `time_s`.
    pub fn danger_at(&self, time_s: f64) -> TriggerState {
        self.danger_track
            .iter()
            .take_while(|(t, _)| *t <= time_s)
            .last()
            .map(|(_, s)| *s)
            .unwrap_or(self.scene.danger)
    }

    pub fn code_counts(&self) -> BTreeMap<char, usize> {
        let mut counts = BTreeMap::new();
        for event in &self.events {
            for code in &event.codes {
                *counts.entry(code.letter()).or_insert(0) += 1;
            }
        }
        counts
    }
}

pub fn parse_timestamp(text: &str) -> Result<f64, AnnotationError> {
    let err = |reason| AnnotationError::Timestamp {
        token: text.to_string(),
        reason,
    };
    let rest = text.strip_suffix('s').ok_or_else(|| err("missing trailing 's'"))?;
    let (minutes, seconds) = rest.split_once('m').ok_or_else(|| err("missing 'm' separator"))?;
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(minutes) || !digits(seconds) {
        return Err(err("minutes and seconds must be non-negative integers"));
    }
    let minutes: u64 = minutes.parse().map_err(|_| err("minutes out of range"))?;
    let seconds: u64 = seconds.parse().map_err(|_| err("seconds out of range"))?;
    if seconds >= 60 {
        return Err(err("seconds must be below 60"));
    }
    Ok((minutes * 60 + seconds) as f64)
}

/// Formats whole seconds as `XmYYs`.
pub fn format_timestamp(time_s: f64) -> String {
    let total = time_s.max(0.0).round() as u64;
    format!("{}m{:02}s", total / 60, total % 60)
}

fn is_header(line: &str) -> bool {
    (line.starts_with('<') || line.starts_with('⟨')) && (line.ends_with('>') || line.ends_with('⟩'))
}

fn parse_header(line: &str, lineno: usize) -> Result<(f64, Vec<EventCode>), AnnotationError> {
    let inner = line
        .trim_start_matches(['<', '⟨'])
        .trim_end_matches(['>', '⟩'])
        .trim();
    let (stamp, codes) = inner
        .split_once('-')
        .ok_or_else(|| AnnotationError::at(lineno, format!("header {line:?} has no '-' before its codes")))?;
    let time_s = parse_timestamp(stamp.trim())
        .map_err(|e| AnnotationError::at(lineno, e.to_string()))?;
    let mut parsed = Vec::new();
    for raw in codes.split(',') {
        let token = raw.trim();
        let mut chars = token.chars();
        let code = match (chars.next(), chars.next()) {
            (Some(c), None) => EventCode::from_letter(c),
            _ => None,
        }
        .ok_or_else(|| AnnotationError::at(lineno, format!("unknown event code {token:?}")))?;
        if parsed.contains(&code) {
            return Err(AnnotationError::at(lineno, format!("duplicate event code {token:?}")));
        }
        parsed.push(code);
    }
    Ok((time_s, parsed))
}

fn parse_danger_track(value: &str, lineno: usize) -> Result<Vec<(f64, TriggerState)>, AnnotationError> {
    let mut track: Vec<(f64, TriggerState)> = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (stamp, level) = item
            .split_once(':')
            .ok_or_else(|| AnnotationError::at(lineno, format!("danger track entry {item:?} is not TIME:LEVEL")))?;
        let t = parse_timestamp(stamp.trim()).map_err(|e| AnnotationError::at(lineno, e.to_string()))?;
        let level: TriggerState = level
            .parse()
            .map_err(|e: crate::error::DomainError| AnnotationError::at(lineno, e.to_string()))?;
        if let Some((prev, _)) = track.last() {
            if t <= *prev {
                return Err(AnnotationError::at(lineno, "danger track times must strictly increase"));
            }
        }
        track.push((t, level));
    }
    Ok(track)
}

struct PendingEvent {
    line: usize,
    time_s: f64,
    codes: Vec<EventCode>,
    lines: Vec<(usize, String)>,
}

impl PendingEvent {
    fn finish(self) -> Result<AnnotationEvent, AnnotationError> {
        let body = if self.codes.contains(&EventCode::Question) {
            let mut question = None;
            let mut answer = None;
            for (lineno, text) in &self.lines {
                if let Some(q) = text.strip_prefix("Q:") {
                    question = Some(q.trim().to_string());
                } else if let Some(a) = text.strip_prefix("A:") {
                    answer = Some(a.trim().to_string());
                } else {
                    return Err(AnnotationError::at(*lineno, "question events hold only 'Q:' and 'A:' lines"));
                }
            }
            match (question, answer) {
                (Some(question), Some(answer)) if !question.is_empty() && !answer.is_empty() => {
                    EventBody::Qa { question, answer }
                }
                _ => {
                    return Err(AnnotationError::at(
                        self.line,
                        "question event needs a non-empty 'Q:' line and 'A:' line",
                    ))
                }
            }
        } else {
            EventBody::Text(
                self.lines
                    .into_iter()
                    .map(|(_, l)| l)
                    .collect::<Vec<_>>()
                    .join("\n"),
            )
        };
        Ok(AnnotationEvent {
            time_s: self.time_s,
            codes: self.codes,
            body,
        })
    }
}

pub fn parse_annotation(text: &str) -> Result<AnnotationDoc, AnnotationError> {
    let mut fields: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    let mut events: Vec<AnnotationEvent> = Vec::new();
    let mut pending: Option<PendingEvent> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if is_header(line) {
            let (time_s, codes) = parse_header(line, lineno)?;
            if let Some(prev) = pending.take() {
                events.push(prev.finish()?);
            }
            if let Some(last) = events.last() {
                if time_s <= last.time_s {
                    return Err(AnnotationError::at(
                        lineno,
                        format!(
                            "event at {} is not after the previous event at {}",
                            format_timestamp(time_s),
                            format_timestamp(last.time_s)
                        ),
                    ));
                }
            }
            pending = Some(PendingEvent {
                line: lineno,
                time_s,
                codes,
                lines: Vec::new(),
            });
            continue;
        }
        match pending.as_mut() {
            Some(event) => event.lines.push((lineno, line.to_string())),
            None => {
                let (key, value) = line
                    .split_once(':')
                    .ok_or_else(|| AnnotationError::at(lineno, format!("expected 'key: value', got {line:?}")))?;
                let key = key.trim();
                const KEYS: [&str; 6] = [
                    "weather",
                    "location",
                    "traffic_flow",
                    "danger",
                    "scene_description",
                    "danger_track",
                ];
                if !KEYS.contains(&key) {
                    return Err(AnnotationError::at(lineno, format!("unknown static key {key:?}")));
                }
                if fields.insert(key, (lineno, value.trim())).is_some() {
                    return Err(AnnotationError::at(lineno, format!("duplicate static key {key:?}")));
                }
            }
        }
    }
    if let Some(prev) = pending.take() {
        events.push(prev.finish()?);
    }

    fn required<'a, T: std::str::FromStr<Err = crate::error::DomainError>>(
        fields: &BTreeMap<&str, (usize, &'a str)>,
        key: &'static str,
    ) -> Result<T, AnnotationError> {
        let (lineno, value) = fields.get(key).ok_or(AnnotationError::MissingKey(key))?;
        value.parse().map_err(|e: crate::error::DomainError| AnnotationError::at(*lineno, e.to_string()))
    }

    let scene = SceneAttributes {
        weather: required::<Weather>(&fields, "weather")?,
        location: required::<LocationType>(&fields, "location")?,
        traffic_flow: required::<TrafficFlow>(&fields, "traffic_flow")?,
        danger: required::<TriggerState>(&fields, "danger")?,
        scene_description: fields
            .get("scene_description")
            .map(|(_, v)| v.to_string())
            .unwrap_or_default(),
    };
    let danger_track = match fields.get("danger_track") {
        Some((lineno, value)) => {
            let track = parse_danger_track(value, *lineno)?;
            match track.first() {
                Some((t, _)) if *t == 0.0 => track,
                _ => return Err(AnnotationError::at(*lineno, "danger track must start at 0m00s")),
            }
        }
        None => vec![(0.0, scene.danger)],
    };

    Ok(AnnotationDoc {
        scene,
        events,
        danger_track,
    })
}

pub fn serialize_annotation(doc: &AnnotationDoc) -> String {
    let mut out = String::new();
    let scene = &doc.scene;
    let _ = writeln!(out, "weather: {}", scene.weather);
    let _ = writeln!(out, "location: {}", scene.location);
    let _ = writeln!(out, "traffic_flow: {}", scene.traffic_flow);
    let _ = writeln!(out, "danger: {}", scene.danger.letter());
    if !scene.scene_description.is_empty() {
        let _ = writeln!(out, "scene_description: {}", scene.scene_description);
    }
    let track: Vec<String> = doc
        .danger_track
        .iter()
        .map(|(t, s)| format!("{}:{}", format_timestamp(*t), s.letter()))
        .collect();
    let _ = writeln!(out, "danger_track: {}", track.join(", "));

    let mut events: Vec<&AnnotationEvent> = doc.events.iter().collect();
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    for event in events {
        let codes: Vec<String> = event.codes.iter().map(|c| c.letter().to_string()).collect();
        let _ = writeln!(out, "\n<{}-{}>", format_timestamp(event.time_s), codes.join(","));
        match &event.body {
            EventBody::Text(text) => {
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    let _ = writeln!(out, "{}", line.trim());
                }
            }
            EventBody::Qa { question, answer } => {
                let _ = writeln!(out, "Q: {question}");
                let _ = writeln!(out, "A: {answer}");
            }
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct DetectionRecord {
    frame_index: u64,
    label: String,
    bbox: [f64; 4],
    score: f64,
}

/// Reads newline-delimited detection records, grouped by frame.
pub fn load_detections(path: &Path) -> Result<BTreeMap<u64, DetectionSet>, InputError> {
    let text = fs::read_to_string(path).map_err(|e| InputError::io(path, e))?;
    parse_detections(&text).map_err(|(line, message)| InputError::record(path, line, message))
}

/// Writes detection sets in the format read by [`load_detections`].
pub fn write_detections<'a>(
    path: &Path,
    sets: impl IntoIterator<Item = &'a DetectionSet>,
) -> Result<(), InputError> {
    let mut out = String::new();
    for set in sets {
        for d in &set.detections {
            let record = serde_json::json!({
                "frame_index": set.frame_index,
                "label": d.label,
                "bbox": [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
                "score": d.score,
            });
            out.push_str(&record.to_string());
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| InputError::io(path, e))
}

pub fn parse_detections(text: &str) -> Result<BTreeMap<u64, DetectionSet>, (usize, String)> {
    let mut sets: BTreeMap<u64, DetectionSet> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DetectionRecord =
            serde_json::from_str(line).map_err(|e| (i + 1, format!("malformed detection record: {e}")))?;
        let [x, y, w, h] = record.bbox;
        let det = Detection::new(record.label, BBox { x, y, w, h }, record.score)
            .map_err(|e| (i + 1, e.to_string()))?;
        sets.entry(record.frame_index)
            .or_insert_with(|| DetectionSet::empty(record.frame_index))
            .detections
            .push(det);
    }
    Ok(sets)
}

/// One training/evaluation example for the trigger gate: the `n` frames
/// preceding a target frame and their danger levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapSample {
    pub frame_indices: Vec<u64>,
    pub history_states: Vec<TriggerState>,
    pub gt_state: TriggerState,
}

/// Slides a window over an annotated stream sampled at `fps`. Sample `i`
/// covers frames `i-n .. i-1` and is labelled with the danger at frame `i`.
pub fn build_tap_samples(
    doc: &AnnotationDoc,
    frame_count: usize,
    n: usize,
    stride: usize,
    fps: f64,
) -> Result<Vec<TapSample>, AnnotationError> {
    if n == 0 || stride == 0 {
        return Err(AnnotationError::Samples("n and stride must be at least 1".into()));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(AnnotationError::Samples(format!("fps {fps} must be positive")));
    }
    if frame_count <= n {
        return Err(AnnotationError::Samples(format!(
            "{frame_count} frames cannot fill a history of {n}"
        )));
    }
    let at = |frame: usize| doc.danger_at(frame as f64 / fps);
    Ok((n..frame_count)
        .step_by(stride)
        .map(|i| TapSample {
            frame_indices: (i - n..i).map(|f| f as u64).collect(),
            history_states: (i - n..i).map(at).collect(),
            gt_state: at(i),
        })
        .collect())
}

pub fn load_samples(path: &Path) -> Result<Vec<TapSample>, InputError> {
    let text = fs::read_to_string(path).map_err(|e| InputError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| InputError::record(path, i + 1, format!("malformed sample: {e}")))
        })
        .collect()
}

pub fn write_samples(path: &Path, samples: &[TapSample]) -> Result<(), InputError> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| InputError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const TABLE8: &str = "\
weather: Sunny
location: Road
traffic_flow: Mid
danger: B

⟨ 2m30s-A,E ⟩
almost hit the wall, go forward in the 11 o'clock direction to return to the main route.
⟨ 2m43s-B ⟩
five steps ahead is the fork in the road, go forward in the 10 - o'clock direction to return to the main route.
⟨ 3m39s-O ⟩
Q: describe the current scene
A: at a crossroads with many vehicles, keep still to avoid, there are some obstacles ahead, be careful to avoid
";

    #[test]
    fn timestamps() {
        assert_eq!(parse_timestamp("2m30s").unwrap(), 150.0);
        assert_eq!(parse_timestamp("0m00s").unwrap(), 0.0);
        assert_eq!(parse_timestamp("3m39s").unwrap(), 219.0);
        for bad in ["2m60s", "2m", "m30s", "2x30s", "-1m10s", "2m3.5s", ""] {
            let err = parse_timestamp(bad).unwrap_err();
            assert!(err.to_string().contains(&format!("{bad:?}")), "{err}");
        }
        assert_eq!(format_timestamp(150.0), "2m30s");
        assert_eq!(format_timestamp(5.0), "0m05s");
    }

    #[test]
    fn parses_example_fragment() {
        let doc = parse_annotation(TABLE8).unwrap();
        let times: Vec<f64> = doc.events.iter().map(|e| e.time_s).collect();
        assert_eq!(times, vec![150.0, 163.0, 219.0]);
        assert_eq!(
            doc.events[0].codes,
            vec![
                EventCode::Reminder(ReminderKind::Obstacle),
                EventCode::Reminder(ReminderKind::RoadDeparture)
            ]
        );
        assert_eq!(doc.events[1].codes, vec![EventCode::Reminder(ReminderKind::Intersection)]);
        assert_eq!(
            doc.events[2].body,
            EventBody::Qa {
                question: "describe the current scene".into(),
                answer: "at a crossroads with many vehicles, keep still to avoid, there are some obstacles ahead, be careful to avoid".into(),
            }
        );
        let counts = doc.code_counts();
        assert_eq!(counts.get(&'A'), Some(&1));
        assert_eq!(counts.get(&'O'), Some(&1));
    }

    #[test]
    fn canonical_header_format() {
        let doc = parse_annotation(TABLE8).unwrap();
        let text = serialize_annotation(&doc);
        assert!(text.contains("\n<2m30s-A,E>\nalmost hit the wall"));
        assert_eq!(parse_annotation(&text).unwrap(), doc);
    }

    #[test]
    fn static_only_document() {
        let text = "weather: Night\nlocation: Corridor\ntraffic_flow: Low\ndanger: A\n";
        let doc = parse_annotation(text).unwrap();
        assert!(doc.events.is_empty());
        let out = serialize_annotation(&doc);
        assert!(!out.contains('<'));
        assert_eq!(parse_annotation(&out).unwrap(), doc);
    }

    #[test]
    fn rejects_bad_inputs_with_line_numbers() {
        let base = "weather: Night\nlocation: Corridor\ntraffic_flow: Low\ndanger: A\n";
        let cases = [
            (format!("{base}<0m10s-Z>\ntext\n"), 5),
            (format!("{base}<0m10s-A>\na\n<0m10s-B>\nb\n"), 7),
            (format!("{base}<0m20s-A>\na\n<0m10s-B>\nb\n"), 7),
            (format!("{base}<0m10s-O>\nQ: where am I\n"), 5),
            (format!("{base}<0m10s-O>\nwhere am I\n"), 6),
            (format!("{base}colour: red\n"), 5),
        ];
        for (text, line) in cases {
            match parse_annotation(&text) {
                Err(AnnotationError::Parse { line: got, .. }) => assert_eq!(got, line, "{text}"),
                other => panic!("expected parse error at line {line}, got {other:?}"),
            }
        }
        assert!(matches!(
            parse_annotation("weather: Night\n"),
            Err(AnnotationError::MissingKey("location"))
        ));
    }

    #[test]
    fn danger_track_lookup() {
        let text = "weather: Sunny\nlocation: Road\ntraffic_flow: Mid\ndanger: B\ndanger_track: 0m00s:A, 0m05s:C, 0m10s:B\n";
        let doc = parse_annotation(text).unwrap();
        assert_eq!(doc.danger_at(0.0), TriggerState::Low);
        assert_eq!(doc.danger_at(4.9), TriggerState::Low);
        assert_eq!(doc.danger_at(5.0), TriggerState::High);
        assert_eq!(doc.danger_at(100.0), TriggerState::Mid);
        assert!(parse_annotation(&text.replace("0m00s:A, ", "")).is_err());
    }

    #[test]
    fn detections_grouping_and_validation() {
        let text = r#"{"frame_index":0,"label":"car","bbox":[0.1,0.1,0.2,0.2],"score":0.9}
{"frame_index":0,"label":"person","bbox":[0.5,0.1,0.2,0.6],"score":0.7}
{"frame_index":0,"label":"pole","bbox":[0.8,0.0,0.1,0.9],"score":0.5}
"#;
        let sets = parse_detections(text).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[&0].detections.len(), 3);
        assert!(parse_detections("").unwrap().is_empty());

        let bad = r#"{"frame_index":0,"label":"car","bbox":[0.1,0.1,0.2,0.2],"score":1.2}"#;
        assert_eq!(parse_detections(bad).unwrap_err().0, 1);
        let malformed = format!("{}\nnot json\n", text.lines().next().unwrap());
        assert_eq!(parse_detections(&malformed).unwrap_err().0, 2);
    }

    fn constant_doc(level: TriggerState) -> AnnotationDoc {
        AnnotationDoc {
            scene: SceneAttributes {
                weather: Weather::Sunny,
                location: LocationType::Road,
                traffic_flow: TrafficFlow::Low,
                danger: level,
                scene_description: String::new(),
            },
            events: Vec::new(),
            danger_track: vec![(0.0, level)],
        }
    }

    #[test]
    fn sample_windows() {
        let doc = constant_doc(TriggerState::Low);
        // Enumerate the expected target frames directly.
        let expected: Vec<usize> = (0..10).filter(|&i| i >= 3).collect();
        let samples = build_tap_samples(&doc, 10, 3, 1, 2.0).unwrap();
        assert_eq!(samples.len(), expected.len());
        assert_eq!(samples.len(), 7);
        assert_eq!(samples[0].frame_indices, vec![0, 1, 2]);
        assert_eq!(samples[6].frame_indices, vec![6, 7, 8]);
        assert!(samples.iter().all(|s| s.gt_state == TriggerState::Low));
        assert_eq!(build_tap_samples(&doc, 4, 3, 1, 2.0).unwrap().len(), 1);
        assert!(build_tap_samples(&doc, 3, 3, 1, 2.0).is_err());
    }

    #[test]
    fn samples_follow_danger_track() {
        let mut doc = constant_doc(TriggerState::Low);
        doc.danger_track = vec![(0.0, TriggerState::Low), (2.0, TriggerState::High)];
        let samples = build_tap_samples(&doc, 6, 2, 1, 2.0).unwrap();
        // Frame 4 is at 2.0 s.
        assert_eq!(samples[2].frame_indices, vec![2, 3]);
        assert_eq!(samples[2].history_states, vec![TriggerState::Low, TriggerState::Low]);
        assert_eq!(samples[2].gt_state, TriggerState::High);
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9 ,.']{0,30}[a-z.]".prop_map(|s| s)
    }

    prop_compose! {
        fn arb_event()(t in 0u32..4000, codes in proptest::sample::subsequence(vec!['A','B','C','D','E','F','O'], 1..4),
                       text in arb_text(), answer in arb_text()) -> AnnotationEvent {
            let codes: Vec<EventCode> = codes.into_iter().map(|c| EventCode::from_letter(c).unwrap()).collect();
            let body = if codes.contains(&EventCode::Question) {
                EventBody::Qa { question: text, answer }
            } else {
                EventBody::Text(text)
            };
            AnnotationEvent { time_s: t as f64, codes, body }
        }
    }

    proptest! {
        #[test]
        fn timestamp_round_trip(m in 0u64..10_000, s in 0u64..60) {
            let text = format!("{m}m{s:02}s");
            let t = parse_timestamp(&text).unwrap();
            prop_assert_eq!(format_timestamp(t), text);
        }

        #[test]
        fn sample_count_formula(frame_count in 2usize..200, n in 1usize..8, stride in 1usize..7) {
            prop_assume!(frame_count > n);
            let doc = constant_doc(TriggerState::Mid);
            let samples = build_tap_samples(&doc, frame_count, n, stride, 2.0).unwrap();
            prop_assert_eq!(samples.len(), (frame_count - n - 1) / stride + 1);
            for s in &samples {
                prop_assert_eq!(s.frame_indices.len(), n);
                prop_assert_eq!(s.history_states.len(), n);
                prop_assert!(s.frame_indices.windows(2).all(|w| w[0] < w[1]));
            }
        }

        #[test]
        fn serialize_parse_fixpoint(mut events in proptest::collection::vec(arb_event(), 0..12)) {
            events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
            events.dedup_by(|a, b| a.time_s == b.time_s);
            let doc = AnnotationDoc { events, ..constant_doc(TriggerState::High) };
            let text = serialize_annotation(&doc);
            let parsed = parse_annotation(&text).unwrap();
            prop_assert_eq!(&parsed, &doc);
            prop_assert_eq!(serialize_annotation(&parsed), text);
        }
    }
}
