use rand::Rng;

use super::preprocess::Volume;

/// Uniform Xavier/Glorot initialization.
pub(crate) fn xavier<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

/// Output positions `o` in `0..n_out` whose input coordinate `o*stride + k - pad`
/// falls inside `0..n_in`.
#[inline]
fn valid_range(n_in: usize, n_out: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    // o*stride + k >= pad
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // o*stride + k - pad <= n_in - 1
    let hi = if n_in + pad < k + 1 {
        0
    } else {
        ((n_in + pad - k - 1) / stride + 1).min(n_out)
    };
    (lo, hi.max(lo))
}

/// Dense 3D convolution over `(channels, time, height, width)` volumes with a
/// cubic kernel and zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub spatial_stride: usize,
    pub temporal_stride: usize,
    pub padding: usize,
    /// `(out, in, kt, kh, kw)`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv3d {
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        spatial_stride: usize,
        temporal_stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            spatial_stride,
            temporal_stride,
            padding,
            weight: vec![0.0; out_channels * in_channels * kernel.pow(3)],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let k3 = self.kernel.pow(3);
        self.weight = xavier(rng, self.in_channels * k3, self.out_channels * k3, self.weight.len());
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn output_dims(&self, time: usize, height: usize, width: usize) -> Option<(usize, usize, usize)> {
        let out = |n: usize, stride: usize| {
            (n + 2 * self.padding)
                .checked_sub(self.kernel)
                .map(|v| v / stride + 1)
        };
        Some((
            out(time, self.temporal_stride)?,
            out(height, self.spatial_stride)?,
            out(width, self.spatial_stride)?,
        ))
    }

    #[inline]
    pub fn weight_index(&self, o: usize, c: usize, kt: usize, kh: usize, kw: usize) -> usize {
        (((o * self.in_channels + c) * self.kernel + kt) * self.kernel + kh) * self.kernel + kw
    }

    /// Splits a flat weight index into `(o, c, kt, kh, kw)`.
    pub fn weight_coords(&self, mut i: usize) -> (usize, usize, usize, usize, usize) {
        let k = self.kernel;
        let kw = i % k;
        i /= k;
        let kh = i % k;
        i /= k;
        let kt = i % k;
        i /= k;
        (i / self.in_channels, i % self.in_channels, kt, kh, kw)
    }

    /// Visits every (input row, output row, x-range) pair touched by kernel tap
    /// `(kt, kh, kw)`; the closure gets `(in_row_offset, out_row_offset, xo_lo, xo_hi)`
    /// relative to single-channel planes of the input and output.
    #[inline]
    fn for_tap_rows<F: FnMut(usize, usize, usize, usize)>(
        &self,
        in_dims: (usize, usize, usize),
        out_dims: (usize, usize, usize),
        tap: (usize, usize, usize),
        mut f: F,
    ) {
        let (ti_n, hi_n, wi_n) = in_dims;
        let (to_n, ho_n, wo_n) = out_dims;
        let (kt, kh, kw) = tap;
        let (p, ss, st) = (self.padding, self.spatial_stride, self.temporal_stride);
        let (t_lo, t_hi) = valid_range(ti_n, to_n, st, kt, p);
        let (y_lo, y_hi) = valid_range(hi_n, ho_n, ss, kh, p);
        let (x_lo, x_hi) = valid_range(wi_n, wo_n, ss, kw, p);
        if x_lo >= x_hi {
            return;
        }
        for to in t_lo..t_hi {
            let ti = to * st + kt - p;
            for yo in y_lo..y_hi {
                let yi = yo * ss + kh - p;
                f((ti * hi_n + yi) * wi_n, (to * ho_n + yo) * wo_n, x_lo, x_hi);
            }
        }
    }

    /// Adds `w * input_channel` (shifted by one kernel tap) into `out_channel`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn accumulate_tap(
        &self,
        w: f64,
        input_channel: &[f64],
        in_dims: (usize, usize, usize),
        out_channel: &mut [f64],
        out_dims: (usize, usize, usize),
        tap: (usize, usize, usize),
    ) {
        let ss = self.spatial_stride;
        let off = tap.2 as isize - self.padding as isize;
        self.for_tap_rows(in_dims, out_dims, tap, |in_row, out_row, lo, hi| {
            let src = &input_channel[in_row..in_row + in_dims.2];
            let dst = &mut out_channel[out_row..out_row + out_dims.2];
            for xo in lo..hi {
                let xi = (xo * ss) as isize + off;
                dst[xo] += w * src[xi as usize];
            }
        });
    }

    pub fn forward(&self, input: &Volume) -> Volume {
        self.apply(input, true)
    }

    /// Convolution without the bias term, i.e. the linear part of the layer.
    pub fn forward_linear(&self, input: &Volume) -> Volume {
        self.apply(input, false)
    }

    fn apply(&self, input: &Volume, with_bias: bool) -> Volume {
        let (to, ho, wo) = self
            .output_dims(input.time, input.height, input.width)
            .expect("validated input dims");
        let mut out = Volume::zeros(self.out_channels, to, ho, wo);
        let in_dims = (input.time, input.height, input.width);
        let out_dims = (to, ho, wo);
        let k = self.kernel;
        let plane = to * ho * wo;
        // im2col: one gathered input plane per (channel, tap), in weight order,
        // so each output channel is a run of contiguous axpys.
        let taps = self.in_channels * k * k * k;
        let mut cols = vec![0.0; taps * plane];
        for c in 0..self.in_channels {
            let src = input.channel(c);
            for kt in 0..k {
                for kh in 0..k {
                    for kw in 0..k {
                        let j = self.weight_index(0, c, kt, kh, kw);
                        let col = &mut cols[j * plane..(j + 1) * plane];
                        self.accumulate_tap(1.0, src, in_dims, col, out_dims, (kt, kh, kw));
                    }
                }
            }
        }
        for o in 0..self.out_channels {
            let dst = out.channel_mut(o);
            if with_bias {
                dst.iter_mut().for_each(|v| *v = self.bias[o]);
            }
            let weights = &self.weight[o * taps..(o + 1) * taps];
            for (w, col) in weights.iter().zip(cols.chunks_exact(plane)) {
                dst.iter_mut().zip(col).for_each(|(d, x)| *d += w * x);
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grads` and, when requested,
    /// returns the gradient with respect to the input.
    pub fn backward(&self, input: &Volume, grad_out: &Volume, grads: &mut Conv3d, need_input_grad: bool) -> Option<Volume> {
        let in_dims = (input.time, input.height, input.width);
        let out_dims = (grad_out.time, grad_out.height, grad_out.width);
        let (ss, p, k) = (self.spatial_stride, self.padding, self.kernel);
        let mut grad_in = need_input_grad.then(|| Volume::zeros(input.channels, input.time, input.height, input.width));
        for o in 0..self.out_channels {
            let g = grad_out.channel(o);
            grads.bias[o] += g.iter().sum::<f64>();
            for c in 0..self.in_channels {
                let src = input.channel(c);
                for kt in 0..k {
                    for kh in 0..k {
                        for kw in 0..k {
                            let wi = self.weight_index(o, c, kt, kh, kw);
                            let off = kw as isize - p as isize;
                            let mut acc = 0.0;
                            self.for_tap_rows(in_dims, out_dims, (kt, kh, kw), |in_row, out_row, lo, hi| {
                                let s = &src[in_row..in_row + in_dims.2];
                                let gr = &g[out_row..out_row + out_dims.2];
                                for xo in lo..hi {
                                    acc += gr[xo] * s[((xo * ss) as isize + off) as usize];
                                }
                            });
                            grads.weight[wi] += acc;
                            if let Some(gi) = grad_in.as_mut() {
                                let w = self.weight[wi];
                                let dst = gi.channel_mut(c);
                                self.for_tap_rows(in_dims, out_dims, (kt, kh, kw), |in_row, out_row, lo, hi| {
                                    let gr = &g[out_row..out_row + out_dims.2];
                                    let d = &mut dst[in_row..in_row + in_dims.2];
                                    for xo in lo..hi {
                                        d[((xo * ss) as isize + off) as usize] += w * gr[xo];
                                    }
                                });
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }
}

/// Fully connected layer, `weight` stored `(out, in)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.weight = xavier(rng, self.in_dim, self.out_dim, self.weight.len());
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn backward(&self, x: &[f64], grad_out: &[f64], grads: &mut Linear) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_dim];
        for (o, &g) in grad_out.iter().enumerate() {
            grads.bias[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grads.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                grad_in[i] += g * row[i];
            }
        }
        grad_in
    }
}

pub(crate) fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// `relu(z + d) - relu(z)` without cancellation when both sides share a branch.
#[inline]
pub(crate) fn relu_delta(z: f64, d: f64) -> f64 {
    match (z > 0.0, z + d > 0.0) {
        (true, true) => d,
        (false, false) => 0.0,
        _ => (z + d).max(0.0) - z.max(0.0),
    }
}

/// Zeroes `grad` wherever the pre-activation was not positive.
pub(crate) fn relu_backward(pre: &[f64], grad: &mut [f64]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}
