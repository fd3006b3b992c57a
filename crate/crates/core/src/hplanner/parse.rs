use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::domain::TriggerState;
use crate::error::ResponseError;

/// Keys of the five-level guidance reply, in order.
pub const FIELD_KEYS: [&str; 5] = [
    "1. Location",
    "2. Weather conditions",
    "3. Traffic flow rating",
    "4. Describe the overall scene in the image",
    "5. Instructions on how I should proceed",
];

pub const DANGER_KEYS: [&str; 2] = ["Frame 3 Danger Level", "Walking Guidance"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchicalResponse {
    pub location: String,
    pub weather: String,
    pub traffic: String,
    pub scene: String,
    pub instruction: String,
}

impl HierarchicalResponse {
    pub fn fields(&self) -> [&str; 5] {
        [&self.location, &self.weather, &self.traffic, &self.scene, &self.instruction]
    }
}

fn strip_fences(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// `"4. Describe ..."` -> `("4", "describe ...")`; keys without a number get `""`.
fn split_key(key: &str) -> (&str, String) {
    let key = key.trim();
    if !key.is_empty() && key.chars().all(|c| c.is_ascii_digit()) {
        return (key, String::new());
    }
    match key.split_once('.') {
        Some((n, rest)) if !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) => (n, rest.trim().to_lowercase()),
        _ => ("", key.to_lowercase()),
    }
}

fn key_matches(candidate: &str, wanted: &str) -> bool {
    if candidate == wanted || candidate.trim().eq_ignore_ascii_case(wanted) {
        return true;
    }
    let (cn, cname) = split_key(candidate);
    let (wn, wname) = split_key(wanted);
    match (cn.is_empty(), wn.is_empty()) {
        (false, false) => cn == wn,
        _ => cname == wname,
    }
}

fn value_text(v: &Value) -> Option<String> {
    let s = match v {
        Value::String(s) => s.trim().to_string(),
        Value::Null => return None,
        other => other.to_string(),
    };
    (!s.is_empty()).then_some(s)
}

fn from_object(obj: &Map<String, Value>, keys: &[&'static str]) -> Vec<Option<String>> {
    let scope = match obj.get("data") {
        Some(Value::Object(inner)) => inner,
        _ => obj,
    };
    keys.iter()
        .map(|k| {
            scope
                .iter()
                .find(|(ck, _)| key_matches(ck, k))
                .and_then(|(_, v)| value_text(v))
        })
        .collect()
}

/// Finds the JSON object in `text` covering the most of `keys`.
fn best_json(text: &str, keys: &[&'static str]) -> Vec<Option<String>> {
    let mut best = vec![None; keys.len()];
    let mut best_count = 0;
    for (pos, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(obj))) = stream.next() {
            let found = from_object(&obj, keys);
            let count = found.iter().filter(|f| f.is_some()).count();
            if count > best_count {
                best_count = count;
                best = found;
                if count == keys.len() {
                    break;
                }
            }
        }
    }
    best
}

/// `Key: value` or `"Key": "value",` lines.
fn from_lines(text: &str, keys: &[&'static str]) -> Vec<Option<String>> {
    keys.iter()
        .map(|k| {
            text.lines().find_map(|line| {
                let line = line.trim().trim_start_matches(['-', '*', ' ']);
                let (key, value) = line.split_once(':')?;
                let key = key.trim().trim_matches('"');
                if !key_matches(key, k) {
                    return None;
                }
                let value = value.trim().trim_end_matches(',').trim().trim_matches('"').trim();
                (!value.is_empty()).then(|| value.to_string())
            })
        })
        .collect()
}

/// Pulls `keys` out of a reply, tolerating prose around a JSON object,
/// code fences, a `data` wrapper, case changes and bare numbered keys.
pub fn extract_fields(text: &str, keys: &[&'static str]) -> Result<Vec<String>, ResponseError> {
    let text = strip_fences(text);
    let mut found = best_json(&text, keys);
    if found.iter().any(Option::is_none) {
        let lines = from_lines(&text, keys);
        for (slot, alt) in found.iter_mut().zip(lines) {
            if slot.is_none() {
                *slot = alt;
            }
        }
    }
    let missing: Vec<&'static str> = keys.iter().zip(&found).filter(|(_, v)| v.is_none()).map(|(k, _)| *k).collect();
    if !missing.is_empty() {
        return Err(ResponseError::MissingFields(missing));
    }
    Ok(found.into_iter().map(|v| v.expect("checked")).collect())
}

pub fn parse_structured_response(text: &str) -> Result<HierarchicalResponse, ResponseError> {
    let mut f = extract_fields(text, &FIELD_KEYS)?.into_iter();
    let mut next = || f.next().expect("five fields");
    Ok(HierarchicalResponse {
        location: next(),
        weather: next(),
        traffic: next(),
        scene: next(),
        instruction: next(),
    })
}

/// Canonical reply for `resp`, as a well-behaved backend would send it.
pub fn render_structured_response(resp: &HierarchicalResponse) -> String {
    let data: Map<String, Value> = FIELD_KEYS
        .iter()
        .zip(resp.fields())
        .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
        .collect();
    let mut root = Map::new();
    root.insert("data".into(), Value::Object(data));
    serde_json::to_string_pretty(&Value::Object(root)).expect("json serializes")
}

/// Danger level and guidance from a reply to the danger prompt.
pub fn parse_danger_response(text: &str) -> Result<(TriggerState, String), ResponseError> {
    let fields = extract_fields(text, &DANGER_KEYS)?;
    let level = fields[0]
        .chars()
        .find(|c| c.is_ascii_alphabetic())
        .and_then(TriggerState::from_letter)
        .ok_or(ResponseError::MissingFields(vec![DANGER_KEYS[0]]))?;
    Ok((level, fields[1].clone()))
}

/// The `Answer` field when present, else the whole reply trimmed.
pub fn parse_qa_answer(text: &str) -> String {
    match extract_fields(text, &["Answer"]) {
        Ok(mut v) => v.remove(0),
        Err(_) => strip_fences(text).trim().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const REPLY: &str = r#"{"data": {"1. Location": "street", "2. Weather conditions": "sunny", "3. Traffic flow rating": "medium", "4. Describe the overall scene in the image": "A busy street with parked cars.", "5. Instructions on how I should proceed": "Go straight, car at 2 o'clock."}}"#;

    fn sample() -> HierarchicalResponse {
        HierarchicalResponse {
            location: "street".into(),
            weather: "sunny".into(),
            traffic: "medium".into(),
            scene: "A busy street with parked cars.".into(),
            instruction: "Go straight, car at 2 o'clock.".into(),
        }
    }

    #[test]
    fn well_formed_reply() {
        assert_eq!(parse_structured_response(REPLY).unwrap(), sample());
    }

    #[test]
    fn prose_and_fences_are_tolerated() {
        let wrapped = format!("Sure! Here you go:\n```json\n{REPLY}\n```\nStay safe.");
        assert_eq!(parse_structured_response(&wrapped).unwrap(), parse_structured_response(REPLY).unwrap());
        let top_level = r#"{"1. location": " street ", "2": "sunny", "3. Traffic": "medium", "4.": "scene", "5. Instructions": "stop"}"#;
        let r = parse_structured_response(top_level).unwrap();
        assert_eq!((r.location.as_str(), r.instruction.as_str()), ("street", "stop"));
    }

    #[test]
    fn missing_field_is_named() {
        let broken = REPLY.replace("\"4. Describe the overall scene in the image\": \"A busy street with parked cars.\", ", "");
        let err = parse_structured_response(&broken).unwrap_err();
        assert_eq!(err, ResponseError::MissingFields(vec!["4. Describe the overall scene in the image"]));
        assert!(err.to_string().contains("Describe the overall scene"));
    }

    #[test]
    fn line_fallback() {
        let text = "1. Location: corridor\n2. Weather conditions: indoor\n3. Traffic flow rating: low\n4. Describe the overall scene in the image: quiet hall\n5. Instructions on how I should proceed: walk ahead";
        let r = parse_structured_response(text).unwrap();
        assert_eq!(r.location, "corridor");
        assert_eq!(r.instruction, "walk ahead");
    }

    #[test]
    fn danger_and_qa() {
        let (level, guide) =
            parse_danger_response(r#"{"data": {"Frame 3 Danger Level": "C", "Walking Guidance": "stop"}}"#).unwrap();
        assert_eq!((level, guide.as_str()), (TriggerState::High, "stop"));
        assert_eq!(parse_qa_answer(r#"{"data": {"Answer": "a crossing"}}"#), "a crossing");
        assert_eq!(parse_qa_answer("  plain words \n"), "plain words");
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(fields in proptest::collection::vec("[^\\s](.{0,40}[^\\s])?", 5)) {
            let resp = HierarchicalResponse {
                location: fields[0].clone(),
                weather: fields[1].clone(),
                traffic: fields[2].clone(),
                scene: fields[3].clone(),
                instruction: fields[4].clone(),
            };
            prop_assert_eq!(parse_structured_response(&render_structured_response(&resp)).unwrap(), resp);
        }
    }
}
