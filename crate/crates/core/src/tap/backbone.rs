use rand::Rng;

use super::layers::{relu, relu_backward, relu_delta, Conv3d};
use super::preprocess::Volume;
use super::TapConfig;
use crate::error::TapError;

/// Visual feature extractor feeding the gate. Implementations map a
/// `(3, N, H, W)` volume to a fixed-length pooled feature vector.
pub trait Backbone: Clone + Send + Sync {
    /// Intermediates retained by `forward` for `backward`.
    type Cache: Clone;

    fn feature_dim(&self) -> usize;

    fn check_input(&self, input: &Volume) -> Result<(), TapError>;

    fn forward(&self, input: &Volume) -> (Vec<f64>, Self::Cache);

    /// Accumulates parameter gradients into `grads` given the gradient of the
    /// pooled features.
    fn backward(&self, cache: &Self::Cache, grad_features: &[f64], grads: &mut Self);

    /// Same architecture with every parameter set to zero.
    fn zeros_like(&self) -> Self;

    /// Named parameter tensors with their shapes, in a stable order.
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])>;

    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    /// `features(θ + delta·e_index) - features(θ)`. The default recomputes
    /// both sides; implementations may reuse `cache` and track the change
    /// directly to avoid cancellation.
    fn feature_delta(&self, input: &Volume, _cache: &Self::Cache, index: usize, delta: f64) -> Vec<f64> {
        let mut copy = self.clone();
        let mut i = index;
        for t in copy.tensors_mut() {
            if i < t.len() {
                t[i] += delta;
                break;
            }
            i -= t.len();
        }
        let after = copy.forward(input).0;
        let before = self.forward(input).0;
        after.iter().zip(&before).map(|(a, b)| a - b).collect()
    }
}

/// Plain stack of `Conv3d + ReLU` blocks followed by global average pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack {
    pub layers: Vec<Conv3d>,
    input_shape: [usize; 4],
}

#[derive(Debug, Clone)]
pub struct ConvStackCache {
    /// `acts[0]` is the input; `acts[l + 1] = relu(pre[l])`.
    acts: Vec<Volume>,
    pre: Vec<Volume>,
    pooled: Vec<f64>,
}

fn dims(v: &Volume) -> (usize, usize, usize) {
    (v.time, v.height, v.width)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl ConvStack {
    pub fn zeros(cfg: &TapConfig) -> Self {
        let mut in_ch = 3;
        let layers = cfg
            .conv_channels
            .iter()
            .map(|&out| {
                let layer = Conv3d::zeros(in_ch, out, cfg.kernel, cfg.spatial_stride, cfg.temporal_stride, cfg.padding);
                in_ch = out;
                layer
            })
            .collect();
        Self {
            layers,
            input_shape: [3, cfg.n_history, cfg.input_hw, cfg.input_hw],
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.layers.iter_mut().for_each(|l| l.init(rng));
    }

    fn pool(v: &Volume) -> Vec<f64> {
        (0..v.channels).map(|c| mean(v.channel(c))).collect()
    }

    /// Maps a flat parameter index to `(layer, is_bias, local index)`.
    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if index < layer.weight.len() {
                return (l, false, index);
            }
            index -= layer.weight.len();
            if index < layer.bias.len() {
                return (l, true, index);
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl Backbone for ConvStack {
    type Cache = ConvStackCache;

    fn feature_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    fn check_input(&self, input: &Volume) -> Result<(), TapError> {
        if input.shape() != self.input_shape {
            return Err(TapError::shape(
                "conv0",
                format!("expected input {:?}, got {:?}", self.input_shape, input.shape()),
            ));
        }
        Ok(())
    }

    fn forward(&self, input: &Volume) -> (Vec<f64>, ConvStackCache) {
        let mut acts = vec![input.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.forward(acts.last().expect("non-empty"));
            let mut a = z.clone();
            a.data = relu(&z.data);
            pre.push(z);
            acts.push(a);
        }
        let pooled = Self::pool(acts.last().expect("non-empty"));
        (pooled.clone(), ConvStackCache { acts, pre, pooled })
    }

    fn backward(&self, cache: &ConvStackCache, grad_features: &[f64], grads: &mut Self) {
        let last = cache.acts.last().expect("non-empty");
        let per = (last.time * last.height * last.width) as f64;
        let mut grad = Volume::zeros(last.channels, last.time, last.height, last.width);
        for (c, g) in grad_features.iter().enumerate() {
            grad.channel_mut(c).iter_mut().for_each(|v| *v = g / per);
        }
        for l in (0..self.layers.len()).rev() {
            relu_backward(&cache.pre[l].data, &mut grad.data);
            let next = self.layers[l].backward(&cache.acts[l], &grad, &mut grads.layers[l], l > 0);
            match next {
                Some(g) => grad = g,
                None => break,
            }
        }
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let k = l.kernel;
                [
                    (format!("conv{i}.weight"), vec![l.out_channels, l.in_channels, k, k, k], l.weight.as_slice()),
                    (format!("conv{i}.bias"), vec![l.out_channels], l.bias.as_slice()),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Only the perturbed output channel changes in the first affected
    /// block, so that channel alone is pushed through the next block. The
    /// change is carried as a difference the whole way.
    fn feature_delta(&self, _input: &Volume, cache: &ConvStackCache, index: usize, delta: f64) -> Vec<f64> {
        let (l, is_bias, local) = self.locate(index);
        let layer = &self.layers[l];
        let z = &cache.pre[l];
        let n = z.time * z.height * z.width;
        let (o, mut dz) = if is_bias {
            (local, vec![delta; n])
        } else {
            let (o, c, kt, kh, kw) = layer.weight_coords(local);
            let mut dz = vec![0.0; n];
            layer.accumulate_tap(delta, cache.acts[l].channel(c), dims(&cache.acts[l]), &mut dz, dims(z), (kt, kh, kw));
            (o, dz)
        };
        dz.iter_mut().zip(z.channel(o)).for_each(|(d, z)| *d = relu_delta(*z, *d));
        let da = dz;

        let mut out = vec![0.0; cache.pooled.len()];
        if l + 1 == self.layers.len() {
            out[o] = mean(&da);
            return out;
        }

        let next = &self.layers[l + 1];
        let z_next = &cache.pre[l + 1];
        let mut d = Volume::zeros(z_next.channels, z_next.time, z_next.height, z_next.width);
        let (in_dims, out_dims) = (dims(z), dims(z_next));
        let k = next.kernel;
        for o2 in 0..next.out_channels {
            let dst = d.channel_mut(o2);
            for kt in 0..k {
                for kh in 0..k {
                    for kw in 0..k {
                        let w = next.weight[next.weight_index(o2, o, kt, kh, kw)];
                        if w != 0.0 {
                            next.accumulate_tap(w, &da, in_dims, dst, out_dims, (kt, kh, kw));
                        }
                    }
                }
            }
        }
        d.data.iter_mut().zip(&z_next.data).for_each(|(d, z)| *d = relu_delta(*z, *d));
        for (j, layer) in self.layers.iter().enumerate().skip(l + 2) {
            let mut dn = layer.forward_linear(&d);
            dn.data.iter_mut().zip(&cache.pre[j].data).for_each(|(d, z)| *d = relu_delta(*z, *d));
            d = dn;
        }
        for (c, v) in out.iter_mut().enumerate() {
            *v = mean(d.channel(c));
        }
        out
    }
}
