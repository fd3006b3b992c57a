mod common;

use walkguide_core::hplanner::{parse_structured_response, render_structured_response, HierarchicalResponse};

#[test]
fn published_prompts_match_golden_files() {
    for (name, rendered, golden) in common::golden_prompts() {
        assert_eq!(rendered, golden, "{name} prompt drifted from its golden file");
    }
}

#[test]
fn rendered_reply_parses_back() {
    let resp = HierarchicalResponse {
        location: "foot path".into(),
        weather: "partly cloudy".into(),
        traffic: "low: 0-4 people/minute".into(),
        scene: "A quiet path with a \"STOP\" sign; trees on both sides.".into(),
        instruction: "Walk ahead 10 steps, bicycle at 2 o'clock.\nThen turn left.".into(),
    };
    assert_eq!(parse_structured_response(&render_structured_response(&resp)).unwrap(), resp);
}
