//! Deterministic synthetic data: brightness-coded gate samples and replayable
//! frame/detection streams.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::annotation::TapSample;
use crate::domain::{BBox, Detection, DetectionSet, Frame, TriggerState};

/// Grey-level range used for frames labelled with each level.
pub fn brightness_band(level: TriggerState) -> (u8, u8) {
    match level {
        TriggerState::Low => (10, 80),
        TriggerState::Mid => (105, 155),
        TriggerState::High => (180, 250),
    }
}

/// Samples whose label is encoded in frame brightness: dark frames are Low,
/// mid-grey Mid, bright High. Classes are balanced and history states are
/// random, so only the frames carry the label. Frame indices start at
/// `first_index` and are unique across the returned set.
pub fn brightness_dataset(
    count: usize,
    n_history: usize,
    frame_size: u32,
    seed: u64,
    first_index: u64,
) -> (Vec<TapSample>, Vec<Frame>) {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    let mut frames = Vec::with_capacity(count * n_history);
    let mut next = first_index;
    for i in 0..count {
        let label = TriggerState::from_index(i % 3).expect("three levels");
        let (lo, hi) = brightness_band(label);
        let mut indices = Vec::with_capacity(n_history);
        for _ in 0..n_history {
            let grey = rng.random_range(lo..=hi);
            let tint = |v: u8, d: i16| (v as i16 + d).clamp(0, 255) as u8;
            let rgb = [
                tint(grey, rng.random_range(-8..=8)),
                grey,
                tint(grey, rng.random_range(-8..=8)),
            ];
            frames.push(Frame::solid(next, next * 500, frame_size, frame_size, rgb));
            indices.push(next);
            next += 1;
        }
        let history_states = (0..n_history)
            .map(|_| TriggerState::from_index(rng.random_range(0..3)).expect("three levels"))
            .collect();
        samples.push(TapSample {
            frame_indices: indices,
            history_states,
            gt_state: label,
        });
    }
    (samples, frames)
}

const LABELS: [&str; 6] = ["person", "car", "bicycle", "pole", "trash can", "scooter"];

/// One frame of a synthetic walk with its detections.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamItem {
    pub frame: Frame,
    pub detections: DetectionSet,
}

/// A replayable stream: frames drift slowly in brightness and carry a few
/// random detections each. Fully determined by the arguments.
pub fn synthetic_stream(count: usize, fps: f64, width: u32, height: u32, seed: u64) -> Vec<StreamItem> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let period_ms = 1000.0 / fps;
    let mut grey: i32 = rng.random_range(40..200);
    (0..count as u64)
        .map(|index| {
            grey = (grey + rng.random_range(-12..=12)).clamp(0, 255);
            let mut pixels = Vec::with_capacity((width * height * 3) as usize);
            for y in 0..height {
                for x in 0..width {
                    let shade = (grey + (x as i32 - y as i32) / 4).clamp(0, 255) as u8;
                    pixels.extend_from_slice(&[shade, shade, (shade / 2).saturating_add(60)]);
                }
            }
            let timestamp_ms = (index as f64 * period_ms).round() as u64;
            let frame = Frame::new(index, timestamp_ms, width, height, pixels).expect("sized buffer");
            let n = rng.random_range(0..4);
            let detections = (0..n)
                .map(|_| {
                    let w = rng.random_range(0.05..0.5);
                    let h = rng.random_range(0.05..0.8);
                    let bbox = BBox {
                        x: rng.random_range(0.0..1.0 - w),
                        y: rng.random_range(0.0..1.0 - h),
                        w,
                        h,
                    };
                    let label = LABELS[rng.random_range(0..LABELS.len())];
                    let score = (rng.random_range(0.2..1.0f64) * 100.0).round() / 100.0;
                    Detection::new(label, bbox, score).expect("valid synthetic detection")
                })
                .collect();
            StreamItem {
                frame,
                detections: DetectionSet {
                    frame_index: index,
                    detections,
                },
            }
        })
        .collect()
}
