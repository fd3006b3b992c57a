//! Fixtures shared by the integration and acceptance targets.
#![allow(dead_code)]

use std::path::PathBuf;

use walkguide_core::domain::{Frame, TriggerState};
use walkguide_core::hplanner::{
    build_danger_prompt, build_judge_prompt, build_normalization_prompt, build_walk_prompt, PromptOptions,
};

pub fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// `(name, rendered, golden)` for each of the four published prompts.
pub fn golden_prompts() -> Vec<(&'static str, String, String)> {
    let opts = PromptOptions::default();
    let frames: Vec<Frame> = (0..3).map(|i| Frame::solid(i, i * 500, 4, 4, [90, 90, 90])).collect();
    let rendered = [
        ("walk", build_walk_prompt(&frames, r#"[{"label":"car","clock":2,"steps":5}]"#, &opts)),
        ("danger", build_danger_prompt(&[TriggerState::Low, TriggerState::Mid], &frames[2..], &opts)),
        ("normalize", build_normalization_prompt("Go LEFT  now!", &opts)),
        ("judge", build_judge_prompt("Turn left at the corner.", "Turn left.", "Go straight.", &opts)),
    ];
    rendered
        .into_iter()
        .map(|(name, req)| {
            let golden = std::fs::read_to_string(fixture_path(&format!("golden/{name}.txt"))).expect("golden file");
            (name, req.expect("prompt builds").user_text, golden)
        })
        .collect()
}
