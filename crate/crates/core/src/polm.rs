//! Object priors: pick the detections that matter and describe where they are
//! in walking terms (clock direction, steps).

use serde::{Deserialize, Serialize};

use crate::domain::{clock_from_angle, step_bucket, Detection, DetectionSet, ObjectPrior};
use crate::error::DomainError;

/// How precisely object directions are rendered into prompts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Exact clock hour per object.
    #[default]
    Exact,
    /// Only the coarse sector: left ("10-11"), ahead ("12") or right ("1-2").
    Coarse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolmConfig {
    pub min_score: f64,
    /// Minimum box area as a fraction of the frame.
    pub min_area: f64,
    pub top_k: usize,
    pub horizontal_fov_deg: f64,
    /// Box height (fraction of frame) that corresponds to five steps away.
    pub reference_height: f64,
    pub mode: PriorMode,
}

impl Default for PolmConfig {
    fn default() -> Self {
        Self {
            min_score: 0.4,
            min_area: 0.01,
            top_k: 5,
            horizontal_fov_deg: 90.0,
            reference_height: 0.5,
            mode: PriorMode::Exact,
        }
    }
}

impl PolmConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.min_score) {
            return Err(DomainError::OutOfRange(format!("polm.min_score {} not in [0, 1]", self.min_score)));
        }
        if !unit(self.min_area) {
            return Err(DomainError::OutOfRange(format!("polm.min_area {} not in [0, 1]", self.min_area)));
        }
        if self.top_k == 0 {
            return Err(DomainError::OutOfRange("polm.top_k must be positive".into()));
        }
        if !(self.horizontal_fov_deg.is_finite() && self.horizontal_fov_deg > 0.0) {
            return Err(DomainError::OutOfRange(format!(
                "polm.horizontal_fov_deg {} must be positive",
                self.horizontal_fov_deg
            )));
        }
        if !(self.reference_height > 0.0 && self.reference_height <= 1.0) {
            return Err(DomainError::OutOfRange(format!(
                "polm.reference_height {} not in (0, 1]",
                self.reference_height
            )));
        }
        Ok(())
    }
}

/// Keeps confident, large-enough detections, ranked by `score * area`
/// (stable on ties) and truncated to `top_k`.
pub fn filter_detections(dets: &DetectionSet, cfg: &PolmConfig) -> Vec<Detection> {
    let mut kept: Vec<&Detection> = dets
        .detections
        .iter()
        .filter(|d| d.score >= cfg.min_score && d.bbox.area() >= cfg.min_area)
        .collect();
    kept.sort_by(|a, b| (b.score * b.bbox.area()).total_cmp(&(a.score * a.bbox.area())));
    kept.into_iter().take(cfg.top_k).cloned().collect()
}

/// Linear azimuth from the box center and a distance guess from the box
/// height relative to the calibration height.
pub fn localize(det: &Detection, cfg: &PolmConfig) -> Result<ObjectPrior, DomainError> {
    let azimuth = azimuth_from_center(det.bbox.center_x(), cfg.horizontal_fov_deg);
    let steps = 5.0 * cfg.reference_height / det.bbox.h;
    Ok(ObjectPrior {
        label: det.label.clone(),
        direction: clock_from_angle(azimuth)?,
        distance: step_bucket(steps)?,
        score: det.score,
    })
}

/// Degrees right of heading for a normalized horizontal position.
pub fn azimuth_from_center(center_x: f64, horizontal_fov_deg: f64) -> f64 {
    (center_x - 0.5) * horizontal_fov_deg
}

pub fn build_priors(dets: &DetectionSet, cfg: &PolmConfig) -> Result<Vec<ObjectPrior>, DomainError> {
    filter_detections(dets, cfg)
        .iter()
        .map(|d| localize(d, cfg))
        .collect()
}

fn sector(hour: u8) -> &'static str {
    match hour {
        12 => "12",
        1..=6 => "1-2",
        _ => "10-11",
    }
}

/// Renders priors as the compact array injected into the walking prompt,
/// nearest objects first.
pub fn priors_to_fragment(priors: &[ObjectPrior]) -> String {
    priors_to_fragment_with(priors, PriorMode::Exact)
}

pub fn priors_to_fragment_with(priors: &[ObjectPrior], mode: PriorMode) -> String {
    let mut sorted: Vec<&ObjectPrior> = priors.iter().collect();
    sorted.sort_by(|a, b| {
        a.distance
            .cmp(&b.distance)
            .then(a.direction.cmp(&b.direction))
            .then_with(|| a.label.cmp(&b.label))
    });
    let items: Vec<String> = sorted
        .iter()
        .map(|p| {
            let label = serde_json::to_string(&p.label).expect("string serializes");
            let clock = match mode {
                PriorMode::Exact => p.direction.hour().to_string(),
                PriorMode::Coarse => format!("\"{}\"", sector(p.direction.hour())),
            };
            format!("{{\"label\":{label},\"clock\":{clock},\"steps\":{}}}", p.distance.steps())
        })
        .collect();
    format!("[{}]", items.join(","))
}
