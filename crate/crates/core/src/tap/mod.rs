//! Trigger gate: a small 3D-conv + MLP classifier over recent frames and
//! danger states, with its trainer and firing policy.

mod backbone;
mod gradcheck;
mod io;
mod layers;
mod model;
mod policy;
mod preprocess;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::TapError;

pub use backbone::{Backbone, ConvStack, ConvStackCache};
pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckReport};
pub use io::{load_model, model_from_str, model_to_string, save_model, MODEL_FORMAT_VERSION};
pub use layers::{Conv3d, Linear};
pub use model::{softmax, TapModel, TapOutput, TapTrace};
pub use policy::{decide_trigger, TriggerDecision, TriggerPolicy};
pub use preprocess::{preprocess_frames, resize_bilinear, stack_planes, Volume};
pub use train::{accuracy, evaluate, predict, tap_train, FrameStore, TrainOptions, TrainReport};

/// Number of trigger levels.
pub const CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TapConfig {
    pub n_history: usize,
    pub input_hw: usize,
    /// Output channels of each conv block; the first block reads RGB.
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub spatial_stride: usize,
    pub temporal_stride: usize,
    pub padding: usize,
    pub fv_dim: usize,
    pub state_embed_dim: usize,
    pub fs_hidden: usize,
    pub fs_dim: usize,
    pub fusion_hidden: usize,
    pub seed: u64,
    /// Per-class loss weights (Low, Mid, High); unweighted when absent.
    pub class_weights: Option<[f64; CLASSES]>,
}

impl Default for TapConfig {
    fn default() -> Self {
        Self {
            n_history: 3,
            input_hw: 64,
            conv_channels: vec![16, 32],
            kernel: 3,
            spatial_stride: 2,
            temporal_stride: 1,
            padding: 1,
            fv_dim: 64,
            state_embed_dim: 8,
            fs_hidden: 32,
            fs_dim: 32,
            fusion_hidden: 32,
            seed: 0,
            class_weights: None,
        }
    }
}

impl TapConfig {
    pub fn validate(&self) -> Result<(), TapError> {
        let dims = [
            ("n_history", self.n_history),
            ("input_hw", self.input_hw),
            ("kernel", self.kernel),
            ("spatial_stride", self.spatial_stride),
            ("temporal_stride", self.temporal_stride),
            ("fv_dim", self.fv_dim),
            ("state_embed_dim", self.state_embed_dim),
            ("fs_hidden", self.fs_hidden),
            ("fs_dim", self.fs_dim),
            ("fusion_hidden", self.fusion_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(TapError::Config(format!("{name} must be positive")));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(TapError::Config("conv_channels must be non-empty and positive".into()));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(TapError::Config("class_weights must be positive and finite".into()));
            }
        }
        let (mut t, mut hw) = (self.n_history, self.input_hw);
        for (i, _) in self.conv_channels.iter().enumerate() {
            let out = |n: usize, s: usize| (n + 2 * self.padding).checked_sub(self.kernel).map(|v| v / s + 1);
            match (out(t, self.temporal_stride), out(hw, self.spatial_stride)) {
                (Some(nt), Some(nhw)) => (t, hw) = (nt, nhw),
                _ => return Err(TapError::Config(format!("conv block {i} shrinks the input below the kernel"))),
            }
        }
        Ok(())
    }
}
