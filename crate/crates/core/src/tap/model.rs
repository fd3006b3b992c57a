use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::Serialize;

use super::backbone::{Backbone, ConvStack};
use super::layers::{relu, relu_backward, relu_delta, xavier, Linear};
use super::preprocess::Volume;
use super::{TapConfig, CLASSES};
use crate::domain::TriggerState;
use crate::error::TapError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TapOutput {
    pub f_v: Vec<f64>,
    pub f_s: Vec<f64>,
    pub probs: [f64; CLASSES],
}

impl TapOutput {
    /// Most probable level; ties resolve to the lower level.
    pub fn argmax(&self) -> TriggerState {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(probs: &[f64; CLASSES]) -> TriggerState {
    let mut best = 0;
    for i in 1..CLASSES {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    TriggerState::from_index(best).expect("three classes")
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Everything after the visual backbone.
#[derive(Debug, Clone)]
pub(crate) struct HeadTrace {
    f_v: Vec<f64>,
    states: Vec<TriggerState>,
    state_in: Vec<f64>,
    state_pre: Vec<f64>,
    state_act: Vec<f64>,
    f_s: Vec<f64>,
    fused: Vec<f64>,
    fusion_pre: Vec<f64>,
    fusion_act: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

/// Forward intermediates kept for backpropagation.
#[derive(Debug, Clone)]
pub struct TapTrace<C> {
    pub(crate) cache: C,
    pub(crate) features: Vec<f64>,
    pub(crate) head: HeadTrace,
}

impl<C> TapTrace<C> {
    pub fn output(&self) -> TapOutput {
        let p = &self.head.probs;
        TapOutput {
            f_v: self.head.f_v.clone(),
            f_s: self.head.f_s.clone(),
            probs: [p[0], p[1], p[2]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapModel<B = ConvStack> {
    pub config: TapConfig,
    pub backbone: B,
    /// Pooled visual features to `f_v`.
    pub visual_proj: Linear,
    /// `(3, state_embed_dim)` row per trigger level.
    pub state_embed: Vec<f64>,
    pub state_hidden: Linear,
    /// Produces `f_s`.
    pub state_out: Linear,
    pub fusion_hidden: Linear,
    pub fusion_out: Linear,
}

impl TapModel<ConvStack> {
    /// All-zero parameters.
    pub fn zeros(config: &TapConfig) -> Result<Self, TapError> {
        config.validate()?;
        Ok(Self::zeros_with(config, ConvStack::zeros(config)))
    }

    /// Xavier-uniform weights and zero biases from a generator seeded with `config.seed`.
    pub fn new(config: &TapConfig) -> Result<Self, TapError> {
        Self::random(config, &mut SplitMix64::seed_from_u64(config.seed))
    }

    /// Xavier-uniform weights and zero biases drawn from `rng`.
    pub fn random<R: rand::Rng>(config: &TapConfig, rng: &mut R) -> Result<Self, TapError> {
        let mut model = Self::zeros(config)?;
        model.backbone.init(rng);
        model.init_head(rng);
        Ok(model)
    }
}

impl<B: Backbone> TapModel<B> {
    /// Zero head around an existing backbone.
    pub fn zeros_with(config: &TapConfig, backbone: B) -> Self {
        let e = config.state_embed_dim;
        Self {
            visual_proj: Linear::zeros(backbone.feature_dim(), config.fv_dim),
            state_embed: vec![0.0; CLASSES * e],
            state_hidden: Linear::zeros(config.n_history * e, config.fs_hidden),
            state_out: Linear::zeros(config.fs_hidden, config.fs_dim),
            fusion_hidden: Linear::zeros(config.fv_dim + config.fs_dim, config.fusion_hidden),
            fusion_out: Linear::zeros(config.fusion_hidden, CLASSES),
            config: config.clone(),
            backbone,
        }
    }

    pub fn init_head<R: rand::Rng>(&mut self, rng: &mut R) {
        self.visual_proj.init(rng);
        let e = self.config.state_embed_dim;
        self.state_embed = xavier(rng, CLASSES, e, CLASSES * e);
        self.state_hidden.init(rng);
        self.state_out.init(rng);
        self.fusion_hidden.init(rng);
        self.fusion_out.init(rng);
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros_with(&self.config, self.backbone.zeros_like())
    }

    pub fn embedding(&self, state: TriggerState) -> &[f64] {
        let e = self.config.state_embed_dim;
        &self.state_embed[state.index() * e..(state.index() + 1) * e]
    }

    fn check_states(&self, states: &[TriggerState]) -> Result<(), TapError> {
        if states.len() != self.config.n_history {
            return Err(TapError::shape(
                "state_embed",
                format!("expected {} history states, got {}", self.config.n_history, states.len()),
            ));
        }
        Ok(())
    }

    pub(crate) fn head_forward(&self, features: &[f64], states: &[TriggerState]) -> HeadTrace {
        let f_v = self.visual_proj.forward(features);
        let state_in: Vec<f64> = states.iter().flat_map(|s| self.embedding(*s).iter().copied()).collect();
        let state_pre = self.state_hidden.forward(&state_in);
        let state_act = relu(&state_pre);
        let f_s = self.state_out.forward(&state_act);
        let fused: Vec<f64> = f_v.iter().chain(&f_s).copied().collect();
        let fusion_pre = self.fusion_hidden.forward(&fused);
        let fusion_act = relu(&fusion_pre);
        let logits = self.fusion_out.forward(&fusion_act);
        let probs = softmax(&logits);
        HeadTrace {
            f_v,
            states: states.to_vec(),
            state_in,
            state_pre,
            state_act,
            f_s,
            fused,
            fusion_pre,
            fusion_act,
            logits,
            probs,
        }
    }

    pub fn trace(&self, input: &Volume, states: &[TriggerState]) -> Result<TapTrace<B::Cache>, TapError> {
        self.backbone.check_input(input)?;
        self.check_states(states)?;
        let (features, cache) = self.backbone.forward(input);
        let head = self.head_forward(&features, states);
        Ok(TapTrace { cache, features, head })
    }

    pub fn forward(&self, input: &Volume, states: &[TriggerState]) -> Result<TapOutput, TapError> {
        Ok(self.trace(input, states)?.output())
    }

    fn class_weight(&self, label: TriggerState) -> f64 {
        self.config.class_weights.map_or(1.0, |w| w[label.index()])
    }

    /// Weighted cross-entropy computed from logits.
    pub(crate) fn head_loss(&self, head: &HeadTrace, label: TriggerState) -> f64 {
        self.class_weight(label) * (log_sum_exp(&head.logits) - head.logits[label.index()])
    }

    pub fn loss(&self, trace: &TapTrace<B::Cache>, label: TriggerState) -> f64 {
        self.head_loss(&trace.head, label)
    }

    /// `loss(θ') - loss(θ)` where `θ'` differs from `θ` by a feature change
    /// `d_features` and/or `delta` added to head parameter `perturb.0`
    /// (flat index over the head tensors). Every intermediate is carried as
    /// a difference so tiny changes do not cancel against large activations.
    pub(crate) fn head_loss_delta(
        &self,
        trace: &TapTrace<B::Cache>,
        d_features: Option<&[f64]>,
        perturb: Option<(usize, f64)>,
        label: TriggerState,
    ) -> f64 {
        let h = &trace.head;
        let target = perturb.map(|(mut index, delta)| {
            for (tensor, (_, _, t)) in self.head_tensors().iter().enumerate() {
                if index < t.len() {
                    return (tensor, index, delta);
                }
                index -= t.len();
            }
            panic!("head parameter index out of range")
        });
        let linear = |layer: &Linear, weight_id: usize, x: &[f64], dx: &[f64]| -> Vec<f64> {
            let mut dy: Vec<f64> = layer
                .weight
                .chunks_exact(layer.in_dim)
                .map(|row| row.iter().zip(dx).map(|(w, d)| w * d).sum())
                .collect();
            match target {
                Some((t, i, delta)) if t == weight_id => {
                    let (row, col) = (i / layer.in_dim, i % layer.in_dim);
                    dy[row] += delta * (x[col] + dx[col]);
                }
                Some((t, i, delta)) if t == weight_id + 1 => dy[i] += delta,
                _ => {}
            }
            dy
        };
        let relu_d = |pre: &[f64], d: Vec<f64>| -> Vec<f64> { pre.iter().zip(d).map(|(z, d)| relu_delta(*z, d)).collect() };

        let zeros = vec![0.0; trace.features.len()];
        let d_fv = linear(&self.visual_proj, 0, &trace.features, d_features.unwrap_or(&zeros));
        let e = self.config.state_embed_dim;
        let mut d_state_in = vec![0.0; h.state_in.len()];
        if let Some((2, i, delta)) = target {
            for (slot, state) in h.states.iter().enumerate() {
                if state.index() == i / e {
                    d_state_in[slot * e + i % e] += delta;
                }
            }
        }
        let d_state_act = relu_d(&h.state_pre, linear(&self.state_hidden, 3, &h.state_in, &d_state_in));
        let d_fs = linear(&self.state_out, 5, &h.state_act, &d_state_act);
        let d_fused: Vec<f64> = d_fv.into_iter().chain(d_fs).collect();
        let d_fusion_act = relu_d(&h.fusion_pre, linear(&self.fusion_hidden, 7, &h.fused, &d_fused));
        let d_logits = linear(&self.fusion_out, 9, &h.fusion_act, &d_fusion_act);
        // lse(z + d) - lse(z) = ln(sum p_i e^{d_i}) = ln_1p(sum p_i (e^{d_i} - 1))
        let shift: f64 = h.probs.iter().zip(&d_logits).map(|(p, d)| p * d.exp_m1()).sum();
        self.class_weight(label) * (shift.ln_1p() - d_logits[label.index()])
    }

    /// Cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, trace: &TapTrace<B::Cache>, label: TriggerState) -> (f64, Self) {
        let mut grads = self.zeros_like();
        let loss = self.accumulate_grad(trace, label, &mut grads);
        (loss, grads)
    }

    /// Adds this sample's gradient into `grads` and returns its loss.
    pub fn accumulate_grad(&self, trace: &TapTrace<B::Cache>, label: TriggerState, grads: &mut Self) -> f64 {
        let h = &trace.head;
        let w = self.class_weight(label);
        let mut g_logits: Vec<f64> = h.probs.iter().map(|p| w * p).collect();
        g_logits[label.index()] -= w;

        let mut g = self.fusion_out.backward(&h.fusion_act, &g_logits, &mut grads.fusion_out);
        relu_backward(&h.fusion_pre, &mut g);
        let g_fused = self.fusion_hidden.backward(&h.fused, &g, &mut grads.fusion_hidden);
        let (g_fv, g_fs) = g_fused.split_at(self.config.fv_dim);

        let mut g = self.state_out.backward(&h.state_act, g_fs, &mut grads.state_out);
        relu_backward(&h.state_pre, &mut g);
        let g_in = self.state_hidden.backward(&h.state_in, &g, &mut grads.state_hidden);
        let e = self.config.state_embed_dim;
        for (slot, state) in h.states.iter().enumerate() {
            let row = state.index() * e;
            for j in 0..e {
                grads.state_embed[row + j] += g_in[slot * e + j];
            }
        }

        let g_features = self.visual_proj.backward(&trace.features, g_fv, &mut grads.visual_proj);
        self.backbone.backward(&trace.cache, &g_features, &mut grads.backbone);
        self.head_loss(h, label)
    }

    /// Named head tensors with shapes, in file order.
    pub(crate) fn head_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn lin<'a>(name: &str, l: &'a Linear) -> [(String, Vec<usize>, &'a [f64]); 2] {
            [
                (format!("{name}.weight"), vec![l.out_dim, l.in_dim], l.weight.as_slice()),
                (format!("{name}.bias"), vec![l.out_dim], l.bias.as_slice()),
            ]
        }
        let mut out = Vec::new();
        out.extend(lin("visual_proj", &self.visual_proj));
        out.push(("state_embed".into(), vec![CLASSES, self.config.state_embed_dim], self.state_embed.as_slice()));
        out.extend(lin("state_hidden", &self.state_hidden));
        out.extend(lin("state_out", &self.state_out));
        out.extend(lin("fusion_hidden", &self.fusion_hidden));
        out.extend(lin("fusion_out", &self.fusion_out));
        out
    }

    /// Every parameter tensor: backbone first, then head.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut all = self.backbone.tensors();
        all.extend(self.head_tensors());
        all
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let (backbone, head) = {
            let Self {
                backbone,
                visual_proj,
                state_embed,
                state_hidden,
                state_out,
                fusion_hidden,
                fusion_out,
                ..
            } = self;
            (
                backbone.tensors_mut(),
                vec![
                    visual_proj.weight.as_mut_slice(),
                    visual_proj.bias.as_mut_slice(),
                    state_embed.as_mut_slice(),
                    state_hidden.weight.as_mut_slice(),
                    state_hidden.bias.as_mut_slice(),
                    state_out.weight.as_mut_slice(),
                    state_out.bias.as_mut_slice(),
                    fusion_hidden.weight.as_mut_slice(),
                    fusion_hidden.bias.as_mut_slice(),
                    fusion_out.weight.as_mut_slice(),
                    fusion_out.bias.as_mut_slice(),
                ],
            )
        };
        backbone.into_iter().chain(head).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, t)| t.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TriggerState::{High, Low, Mid};
    use proptest::prelude::*;

    fn input_for(cfg: &TapConfig, fill: impl Fn(usize) -> f64) -> Volume {
        let mut v = Volume::zeros(3, cfg.n_history, cfg.input_hw, cfg.input_hw);
        v.data.iter_mut().enumerate().for_each(|(i, x)| *x = fill(i));
        v
    }

    fn small_cfg(seed: u64) -> TapConfig {
        TapConfig {
            input_hw: 8,
            conv_channels: vec![4, 6],
            fv_dim: 5,
            state_embed_dim: 3,
            fs_hidden: 4,
            fs_dim: 4,
            fusion_hidden: 6,
            seed,
            ..TapConfig::default()
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let cfg = TapConfig::default();
        let model = TapModel::zeros(&cfg).unwrap();
        let out = model.forward(&input_for(&cfg, |i| (i % 7) as f64 / 7.0), &[Low, Mid, High]).unwrap();
        assert_eq!(out.probs, [1.0 / 3.0; 3]);
        let trace = model.trace(&input_for(&cfg, |_| 0.5), &[Low, Low, Low]).unwrap();
        assert!((model.loss(&trace, High) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn default_shapes() {
        let cfg = TapConfig::default();
        let model = TapModel::new(&cfg).unwrap();
        let out = model.forward(&input_for(&cfg, |i| (i % 13) as f64 / 13.0), &[Low, Mid, High]).unwrap();
        assert_eq!(out.f_v.len(), 64);
        assert_eq!(out.f_s.len(), 32);
        assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let cfg = TapConfig::default();
        let model = TapModel::zeros(&cfg).unwrap();
        let err = model.forward(&Volume::zeros(3, 3, 32, 32), &[Low; 3]).unwrap_err();
        assert!(matches!(err, TapError::Shape { ref layer, .. } if layer == "conv0"), "{err}");
        let err = model.forward(&input_for(&cfg, |_| 0.0), &[Low; 2]).unwrap_err();
        assert!(matches!(err, TapError::Shape { ref layer, .. } if layer == "state_embed"), "{err}");
    }

    /// One RGB frame of 1x1 pixels, one conv channel, one unit everywhere:
    /// every quantity reduces to scalar arithmetic.
    #[test]
    fn toy_forward_matches_scalar_oracle() {
        let cfg = TapConfig {
            n_history: 1,
            input_hw: 1,
            conv_channels: vec![1],
            fv_dim: 1,
            state_embed_dim: 1,
            fs_hidden: 1,
            fs_dim: 1,
            fusion_hidden: 1,
            ..TapConfig::default()
        };
        let mut m = TapModel::zeros(&cfg).unwrap();
        // Centre tap of the kernel is the only one that sees the single voxel.
        let conv = &mut m.backbone.layers[0];
        for c in 0..3 {
            let i = conv.weight_index(0, c, 1, 1, 1);
            conv.weight[i] = [0.5, -0.25, 1.0][c];
        }
        conv.bias[0] = 0.1;
        m.visual_proj.weight = vec![2.0];
        m.visual_proj.bias = vec![-0.3];
        m.state_embed = vec![0.2, -0.4, 0.9];
        m.state_hidden.weight = vec![1.5];
        m.state_hidden.bias = vec![0.05];
        m.state_out.weight = vec![-1.2];
        m.state_out.bias = vec![0.4];
        m.fusion_hidden.weight = vec![0.7, 0.6];
        m.fusion_hidden.bias = vec![0.2];
        m.fusion_out.weight = vec![1.0, -2.0, 0.5];
        m.fusion_out.bias = vec![0.0, 0.3, -0.1];

        let rgb = [0.2, 0.6, 0.8];
        let mut input = Volume::zeros(3, 1, 1, 1);
        input.data = rgb.to_vec();
        let out = m.forward(&input, &[High]).unwrap();

        let conv_out = f64::max(0.0, 0.5 * 0.2 - 0.25 * 0.6 + 1.0 * 0.8 + 0.1);
        let f_v = 2.0 * conv_out - 0.3;
        let hidden = f64::max(0.0, 1.5 * 0.9 + 0.05);
        let f_s = -1.2 * hidden + 0.4;
        let h = f64::max(0.0, 0.7 * f_v + 0.6 * f_s + 0.2);
        let logits = [h, -2.0 * h + 0.3, 0.5 * h - 0.1];
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        assert!((out.f_v[0] - f_v).abs() < 1e-15);
        assert!((out.f_s[0] - f_s).abs() < 1e-15);
        for k in 0..3 {
            assert!((out.probs[k] - logits[k].exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn confident_prediction_has_zero_output_gradient() {
        let cfg = small_cfg(0);
        let mut m = TapModel::zeros(&cfg).unwrap();
        m.fusion_out.bias = vec![0.0, 0.0, 800.0];
        let trace = m.trace(&input_for(&cfg, |_| 0.3), &[Low, Mid, Mid]).unwrap();
        let (loss, grads) = m.loss_and_grad(&trace, High);
        assert_eq!(loss, 0.0);
        assert!(grads.fusion_out.weight.iter().chain(&grads.fusion_out.bias).all(|g| *g == 0.0));
    }

    #[test]
    fn weighted_loss_scales_gradient() {
        let cfg = small_cfg(4);
        let m = TapModel::new(&cfg).unwrap();
        let mut w = m.clone();
        w.config.class_weights = Some([1.0, 2.5, 1.0]);
        let trace = m.trace(&input_for(&cfg, |i| (i % 5) as f64 / 5.0), &[Low, Mid, High]).unwrap();
        let (l1, g1) = m.loss_and_grad(&trace, Mid);
        let (l2, g2) = w.loss_and_grad(&trace, Mid);
        assert!((l2 - 2.5 * l1).abs() < 1e-12);
        assert!((g2.fusion_out.bias[0] - 2.5 * g1.fusion_out.bias[0]).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = small_cfg(9);
        let a = TapModel::new(&cfg).unwrap();
        let b = TapModel::new(&cfg).unwrap();
        assert_eq!(a, b);
        let x = input_for(&cfg, |i| ((i * 31) % 17) as f64 / 17.0);
        assert_eq!(a.forward(&x, &[High, Low, Mid]).unwrap(), b.forward(&x, &[High, Low, Mid]).unwrap());
    }

    #[test]
    fn history_order_matters_with_distinct_embeddings() {
        let cfg = small_cfg(2);
        let m = TapModel::new(&cfg).unwrap();
        assert_ne!(m.embedding(Low), m.embedding(High));
        let x = input_for(&cfg, |_| 0.4);
        let a = m.forward(&x, &[Low, Mid, High]).unwrap();
        let b = m.forward(&x, &[High, Mid, Low]).unwrap();
        assert_ne!(a.f_s, b.f_s);
        assert_eq!(a.f_v, b.f_v);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn softmax_is_a_distribution(seed in any::<u64>(), fill in 0.0f64..1.0, states in proptest::collection::vec(0usize..3, 3)) {
            let cfg = small_cfg(seed);
            let m = TapModel::new(&cfg).unwrap();
            let states: Vec<_> = states.into_iter().map(|s| TriggerState::from_index(s).unwrap()).collect();
            let out = m.forward(&input_for(&cfg, |i| (fill + i as f64 * 0.37).fract()), &states).unwrap();
            prop_assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(out.probs.iter().all(|p| *p > 0.0 && *p < 1.0));
        }

        #[test]
        fn softmax_function_sums_to_one(logits in proptest::collection::vec(-50.0f64..50.0, 1..8)) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
