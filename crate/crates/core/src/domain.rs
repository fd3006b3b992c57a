//! Shared domain types and the taxonomy rules used across the runtime.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// A decoded RGB frame from the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: u64,
    pub timestamp_ms: u64,
    pub width: u32,
    pub height: u32,
    /// Row-major RGB, `width * height * 3` bytes.
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(
        index: u64,
        timestamp_ms: u64,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
    ) -> Result<Self, DomainError> {
        if width == 0 || height == 0 {
            return Err(DomainError::InvalidFrame(format!(
                "frame {index} has zero dimension {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(DomainError::InvalidFrame(format!(
                "frame {index}: expected {expected} bytes for {width}x{height} RGB, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            index,
            timestamp_ms,
            width,
            height,
            pixels,
        })
    }

    /// A frame filled with a single color.
    pub fn solid(index: u64, timestamp_ms: u64, width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            index,
            timestamp_ms,
            width,
            height,
            pixels,
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Normalized `(x, y, w, h)` box relative to the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center_x(&self) -> f64 {
        self.x + self.w / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(label: impl Into<String>, bbox: BBox, score: f64) -> Result<Self, DomainError> {
        let det = Self {
            label: label.into(),
            bbox,
            score,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let BBox { x, y, w, h } = self.bbox;
        // Small slack for boxes whose extent was rounded by the detector.
        const SLACK: f64 = 1e-9;
        let finite = [x, y, w, h, self.score].iter().all(|v| v.is_finite());
        if !finite || x < 0.0 || y < 0.0 || w <= 0.0 || h <= 0.0 || x + w > 1.0 + SLACK || y + h > 1.0 + SLACK {
            return Err(DomainError::InvalidDetection(format!(
                "bbox [{x}, {y}, {w}, {h}] for {:?} is outside the unit frame",
                self.label
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(DomainError::InvalidDetection(format!(
                "score {} for {:?} is outside [0, 1]",
                self.score, self.label
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub frame_index: u64,
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn empty(frame_index: u64) -> Self {
        Self {
            frame_index,
            detections: Vec::new(),
        }
    }
}

/// Danger level of the scene, which doubles as the trigger level of the gate.
///
/// Letter codes are fixed: `A` = Low, `B` = Mid, `C` = High.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TriggerState {
    Low,
    Mid,
    High,
}

impl TriggerState {
    pub const ALL: [TriggerState; 3] = [TriggerState::Low, TriggerState::Mid, TriggerState::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        match self {
            TriggerState::Low => 'A',
            TriggerState::Mid => 'B',
            TriggerState::High => 'C',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(TriggerState::Low),
            'B' => Some(TriggerState::Mid),
            'C' => Some(TriggerState::High),
            _ => None,
        }
    }
}

impl fmt::Display for TriggerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TriggerState::Low => "Low",
            TriggerState::Mid => "Mid",
            TriggerState::High => "High",
        };
        f.write_str(name)
    }
}

impl FromStr for TriggerState {
    type Err = DomainError;

    /// Accepts a letter code (`A`/`B`/`C`) or a level name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let mut chars = t.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(state) = TriggerState::from_letter(c) {
                return Ok(state);
            }
        }
        match t.to_ascii_lowercase().as_str() {
            "low" => Ok(TriggerState::Low),
            "mid" | "medium" => Ok(TriggerState::Mid),
            "high" => Ok(TriggerState::High),
            _ => Err(DomainError::UnknownVariant {
                kind: "trigger state",
                value: t.to_string(),
            }),
        }
    }
}

/// Turns a variant name into its comparison key: lowercase, no separators.
fn variant_key(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

macro_rules! labeled_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = DomainError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let key = variant_key(s);
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| variant_key(v.label()) == key)
                    .ok_or_else(|| DomainError::UnknownVariant {
                        kind: $kind,
                        value: s.trim().to_string(),
                    })
            }
        }
    };
}

labeled_enum!(Weather, "weather" {
    Sunny => "Sunny",
    Night => "Night",
    Overcast => "Overcast",
    Cloudy => "Cloudy",
    Indoor => "Indoor",
    Other => "Other",
});

labeled_enum!(LocationType, "location" {
    BusyStreet => "Busy Street",
    Road => "Road",
    Restaurant => "Restaurant",
    PedestrianPath => "Pedestrian Path",
    Corridor => "Corridor",
    BicycleLane => "Bicycle Lane",
    ShoppingMall => "Shopping Mall",
    Other => "Other",
});

labeled_enum!(
    /// Pedestrian count rating: Low is fewer than 2 people in the clip,
    /// Mid is 2 to 10, High is more than 10.
    TrafficFlow, "traffic flow" {
    Low => "Low",
    Mid => "Mid",
    High => "High",
});

labeled_enum!(ReminderKind, "reminder kind" {
    Obstacle => "Obstacle",
    Intersection => "Intersection",
    RoadWidth => "Road Width",
    OncomingMover => "Oncoming Mover",
    RoadDeparture => "Road Departure",
    Identifier => "Identifier",
});

labeled_enum!(QaKind, "question kind" {
    ScenePerception => "Scene Perception",
    RoadInquiry => "Road Inquiry",
    DetailedConsultation => "Detailed Consultation",
});

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneAttributes {
    pub weather: Weather,
    pub location: LocationType,
    pub traffic_flow: TrafficFlow,
    pub danger: TriggerState,
    pub scene_description: String,
}

/// Road-surface and traffic hazards observed within the walking corridor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardFlags {
    pub narrow_road: bool,
    pub bumpy_road: bool,
    pub vehicle_warning: bool,
    pub hazard_within_15_steps: bool,
}

impl HazardFlags {
    pub fn any(&self) -> bool {
        self.narrow_road || self.bumpy_road || self.vehicle_warning || self.hazard_within_15_steps
    }
}

/// Danger level from traffic rating and hazards. Any hazard means High; a
/// clear road with low traffic is Low; everything else is Mid.
pub fn classify_danger(traffic: TrafficFlow, hazards: HazardFlags) -> TriggerState {
    if hazards.any() {
        TriggerState::High
    } else if traffic == TrafficFlow::Low {
        TriggerState::Low
    } else {
        TriggerState::Mid
    }
}

/// Bearing as a clock hour, 12 being straight ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ClockDirection(u8);

impl ClockDirection {
    pub fn new(hour: u8) -> Result<Self, DomainError> {
        if (1..=12).contains(&hour) {
            Ok(Self(hour))
        } else {
            Err(DomainError::OutOfRange(format!("clock hour {hour} not in 1..=12")))
        }
    }

    pub fn hour(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for ClockDirection {
    type Error = DomainError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ClockDirection> for u8 {
    fn from(value: ClockDirection) -> Self {
        value.0
    }
}

/// Maps an azimuth (degrees, positive to the right of heading) to a clock hour,
/// 30 degrees per hour. Exact half-hour ties go to the larger hour.
pub fn clock_from_angle(azimuth_deg: f64) -> Result<ClockDirection, DomainError> {
    if !azimuth_deg.is_finite() {
        return Err(DomainError::NonFinite("azimuth"));
    }
    let offset = (azimuth_deg / 30.0 + 0.5).floor();
    let hour = (12.0 + offset).rem_euclid(12.0) as u8;
    Ok(ClockDirection(if hour == 0 { 12 } else { hour }))
}

/// Distance in walking steps, quantized to multiples of five.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct StepBucket(u32);

impl StepBucket {
    pub fn new(steps: u32) -> Result<Self, DomainError> {
        if steps >= 5 && steps % 5 == 0 {
            Ok(Self(steps))
        } else {
            Err(DomainError::OutOfRange(format!(
                "{steps} steps is not a positive multiple of 5"
            )))
        }
    }

    pub fn steps(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for StepBucket {
    type Error = DomainError;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<StepBucket> for u32 {
    fn from(value: StepBucket) -> Self {
        value.0
    }
}

/// Nearest multiple of 5 (ties up), never below 5.
pub fn step_bucket(steps_estimate: f64) -> Result<StepBucket, DomainError> {
    if !steps_estimate.is_finite() {
        return Err(DomainError::NonFinite("step estimate"));
    }
    if steps_estimate <= 0.0 {
        return Err(DomainError::OutOfRange(format!(
            "step estimate {steps_estimate} must be positive"
        )));
    }
    let buckets = (steps_estimate / 5.0 + 0.5).floor().max(1.0);
    let steps = (buckets * 5.0).min(u32::MAX as f64 - 4.0) as u32;
    Ok(StepBucket(steps - steps % 5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPrior {
    pub label: String,
    pub direction: ClockDirection,
    pub distance: StepBucket,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reminder {
    pub timestamp_ms: u64,
    pub kinds: BTreeSet<ReminderKind>,
    pub text: String,
}

impl Reminder {
    pub fn new(
        timestamp_ms: u64,
        kinds: BTreeSet<ReminderKind>,
        text: impl Into<String>,
    ) -> Result<Self, DomainError> {
        let text = text.into();
        if kinds.is_empty() {
            return Err(DomainError::Empty("reminder kinds"));
        }
        if text.trim().is_empty() {
            return Err(DomainError::Empty("reminder text"));
        }
        Ok(Self {
            timestamp_ms,
            kinds,
            text,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub timestamp_ms: u64,
    pub kind: QaKind,
    pub question: String,
    pub answer: String,
}

impl QaRecord {
    pub fn new(
        timestamp_ms: u64,
        kind: QaKind,
        question: impl Into<String>,
        answer: impl Into<String>,
    ) -> Result<Self, DomainError> {
        let question = question.into();
        let answer = answer.into();
        if question.trim().is_empty() {
            return Err(DomainError::Empty("question"));
        }
        if answer.trim().is_empty() {
            return Err(DomainError::Empty("answer"));
        }
        Ok(Self {
            timestamp_ms,
            kind,
            question,
            answer,
        })
    }
}

const KIND_KEYWORDS: &[(ReminderKind, &[&str])] = &[
    (
        ReminderKind::Obstacle,
        &["obstacle", "pole", "wall", "step", "stairs", "curb", "bollard", "cone", "hit", "block"],
    ),
    (
        ReminderKind::Intersection,
        &["intersection", "crossroad", "crossing", "fork", "turn", "corner", "junction"],
    ),
    (
        ReminderKind::RoadWidth,
        &["narrow", "wide", "width", "clear", "passable", "spacious"],
    ),
    (
        ReminderKind::OncomingMover,
        &["car", "vehicle", "bike", "bicycle", "scooter", "motorcycle", "pedestrian", "people", "person", "oncoming", "approaching"],
    ),
    (
        ReminderKind::RoadDeparture,
        &["deviat", "veer", "drift", "main route", "off the", "return to", "back to"],
    ),
    (
        ReminderKind::Identifier,
        &["sign", "traffic light", "landmark", "signal", "crosswalk"],
    ),
];

/// Keyword-based guess at which reminder kinds a reminder text covers.
/// Falls back to `Obstacle` so the set is never empty.
pub fn infer_reminder_kinds(text: &str) -> BTreeSet<ReminderKind> {
    let lower = text.to_lowercase();
    let mut kinds: BTreeSet<ReminderKind> = KIND_KEYWORDS
        .iter()
        .filter(|(_, words)| words.iter().any(|w| lower.contains(w)))
        .map(|(kind, _)| *kind)
        .collect();
    if kinds.is_empty() {
        kinds.insert(ReminderKind::Obstacle);
    }
    kinds
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flags(bits: u8) -> HazardFlags {
        HazardFlags {
            narrow_road: bits & 1 != 0,
            bumpy_road: bits & 2 != 0,
            vehicle_warning: bits & 4 != 0,
            hazard_within_15_steps: bits & 8 != 0,
        }
    }

    #[test]
    fn danger_classification_examples() {
        assert_eq!(classify_danger(TrafficFlow::Low, HazardFlags::default()), TriggerState::Low);
        let narrow = HazardFlags {
            narrow_road: true,
            ..Default::default()
        };
        assert_eq!(classify_danger(TrafficFlow::High, narrow), TriggerState::High);
        assert_eq!(classify_danger(TrafficFlow::Mid, HazardFlags::default()), TriggerState::Mid);
        assert_eq!(classify_danger(TrafficFlow::High, HazardFlags::default()), TriggerState::Mid);
    }

    #[test]
    fn any_hazard_dominates() {
        for traffic in TrafficFlow::ALL {
            for bits in 1..16u8 {
                assert_eq!(classify_danger(*traffic, flags(bits)), TriggerState::High);
            }
        }
    }

    #[test]
    fn clock_examples() {
        assert_eq!(clock_from_angle(0.0).unwrap().hour(), 12);
        assert_eq!(clock_from_angle(30.0).unwrap().hour(), 1);
        assert_eq!(clock_from_angle(-60.0).unwrap().hour(), 10);
        assert_eq!(clock_from_angle(45.0).unwrap().hour(), 2);
        assert_eq!(clock_from_angle(-45.0).unwrap().hour(), 11);
        assert_eq!(clock_from_angle(180.0).unwrap().hour(), 6);
        assert_eq!(clock_from_angle(-15.0).unwrap().hour(), 12);
        assert!(clock_from_angle(f64::NAN).is_err());
        assert!(clock_from_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn step_examples() {
        assert_eq!(step_bucket(2.0).unwrap().steps(), 5);
        assert_eq!(step_bucket(7.0).unwrap().steps(), 5);
        assert_eq!(step_bucket(7.5).unwrap().steps(), 10);
        assert_eq!(step_bucket(13.0).unwrap().steps(), 15);
        assert!(step_bucket(0.0).is_err());
        assert!(step_bucket(-3.0).is_err());
    }

    #[test]
    fn trigger_letters_round_trip() {
        for s in TriggerState::ALL {
            assert_eq!(TriggerState::from_letter(s.letter()), Some(s));
            assert_eq!(s.letter().to_string().parse::<TriggerState>().unwrap(), s);
            assert_eq!(s.to_string().parse::<TriggerState>().unwrap(), s);
        }
        assert_eq!(TriggerState::Low.letter(), 'A');
        assert_eq!(TriggerState::High.letter(), 'C');
        assert!("D".parse::<TriggerState>().is_err());
    }

    #[test]
    fn labeled_enums_parse_loosely() {
        assert_eq!("busy street".parse::<LocationType>().unwrap(), LocationType::BusyStreet);
        assert_eq!("PedestrianPath".parse::<LocationType>().unwrap(), LocationType::PedestrianPath);
        assert!("rainforest".parse::<LocationType>().is_err());
    }

    #[test]
    fn detection_validation() {
        let ok = BBox { x: 0.1, y: 0.1, w: 0.5, h: 0.5 };
        assert!(Detection::new("car", ok, 0.9).is_ok());
        assert!(Detection::new("car", ok, 1.2).is_err());
        assert!(Detection::new("car", BBox { x: 0.6, ..ok }, 0.5).is_err());
        assert!(Detection::new("car", BBox { h: 0.0, ..ok }, 0.5).is_err());
    }

    #[test]
    fn frame_length_checked() {
        assert!(Frame::new(0, 0, 2, 2, vec![0; 12]).is_ok());
        assert!(Frame::new(0, 0, 2, 2, vec![0; 11]).is_err());
    }

    #[test]
    fn reminder_kinds_never_empty() {
        assert_eq!(
            infer_reminder_kinds("five steps ahead is the fork in the road"),
            [ReminderKind::Obstacle, ReminderKind::Intersection].into_iter().collect()
        );
        assert_eq!(infer_reminder_kinds("go"), [ReminderKind::Obstacle].into_iter().collect());
        assert!(Reminder::new(0, BTreeSet::new(), "go").is_err());
    }

    proptest! {
        #[test]
        fn clock_is_periodic(a in -1.0e4f64..1.0e4) {
            prop_assert_eq!(clock_from_angle(a).unwrap(), clock_from_angle(a + 360.0).unwrap());
        }

        #[test]
        fn step_bucket_is_monotone_multiple_of_five(a in 1e-6f64..1e4, b in 1e-6f64..1e4) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (blo, bhi) = (step_bucket(lo).unwrap().steps(), step_bucket(hi).unwrap().steps());
            prop_assert!(blo >= 5 && blo % 5 == 0);
            prop_assert!(bhi >= 5 && bhi % 5 == 0);
            prop_assert!(blo <= bhi);
        }

        #[test]
        fn classify_is_order_independent(bits in 0u8..16, perm in 0usize..24, t in 0usize..3) {
            // Permute which flag each bit drives; the result only depends on the set.
            let order = [[0, 1, 2, 3], [3, 2, 1, 0], [1, 0, 3, 2], [2, 3, 0, 1]][perm % 4];
            let permuted = order.iter().enumerate().fold(0u8, |acc, (i, &j)| acc | (((bits >> i) & 1) << j));
            let traffic = TrafficFlow::ALL[t];
            prop_assert_eq!(classify_danger(traffic, flags(bits)), classify_danger(traffic, flags(permuted)));
        }
    }
}
