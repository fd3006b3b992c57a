use crate::domain::Frame;
use crate::error::TapError;

/// Dense `(channels, time, height, width)` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub channels: usize,
    pub time: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Volume {
    pub fn zeros(channels: usize, time: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            time,
            height,
            width,
            data: vec![0.0; channels * time * height * width],
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.channels, self.time, self.height, self.width]
    }

    #[inline]
    pub fn offset(&self, c: usize, t: usize, y: usize, x: usize) -> usize {
        ((c * self.time + t) * self.height + y) * self.width + x
    }

    pub fn get(&self, c: usize, t: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(c, t, y, x)]
    }

    /// Contiguous slice holding one channel across all time steps.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.time * self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.time * self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Bilinear resize of one 8-bit RGB frame to `out_h x out_w`, scaled to
/// [0, 1]. Output is channel-major `(3, out_h, out_w)`. Uses half-pixel
/// centers with edge clamping.
pub fn resize_bilinear(frame: &Frame, out_h: usize, out_w: usize) -> Vec<f64> {
    let (in_w, in_h) = (frame.width as usize, frame.height as usize);
    let mut out = vec![0.0; 3 * out_h * out_w];
    let axis = |o: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let scale = n_in as f64 / n_out as f64;
        let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, src - lo as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|x| axis(x, out_w, in_w)).collect();
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, out_h, in_h);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..3 {
                let p = |yy: usize, xx: usize| frame.pixels[(yy * in_w + xx) * 3 + c] as f64;
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out[(c * out_h + y) * out_w + x] = (top * (1.0 - fy) + bottom * fy) / 255.0;
            }
        }
    }
    out
}

/// Stacks per-frame resized planes `(3, hw, hw)` into a `(3, n, hw, hw)` volume.
pub fn stack_planes(planes: &[&[f64]], hw: usize) -> Volume {
    let n = planes.len();
    let mut vol = Volume::zeros(3, n, hw, hw);
    let plane = hw * hw;
    for (t, frame) in planes.iter().enumerate() {
        for c in 0..3 {
            let dst = vol.offset(c, t, 0, 0);
            vol.data[dst..dst + plane].copy_from_slice(&frame[c * plane..(c + 1) * plane]);
        }
    }
    vol
}

/// Resizes `n_history` frames and stacks them chronologically.
pub fn preprocess_frames(frames: &[Frame], n_history: usize, input_hw: usize) -> Result<Volume, TapError> {
    if frames.len() != n_history {
        return Err(TapError::FrameCount {
            expected: n_history,
            actual: frames.len(),
        });
    }
    let planes: Vec<Vec<f64>> = frames.iter().map(|f| resize_bilinear(f, input_hw, input_hw)).collect();
    let refs: Vec<&[f64]> = planes.iter().map(Vec::as_slice).collect();
    Ok(stack_planes(&refs, input_hw))
}
