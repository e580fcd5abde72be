//! Dense numeric core: the `Tensor` container and the small set of kernels
//! the pipeline needs (convolution, average pooling, activations, channel
//! concatenation, zero padding).
//!
//! Layout is channels-outer, width-fastest row-major. Every kernel
//! accumulates in f64 and stores back f32, so results are reproducible
//! bit-for-bit across runs and match the scalar reference implementations
//! exactly where the contract says "exact".

use crate::error::{Error, Result};

/// Dense rank-3 array of f32, shape (channels, height, width), row-major
/// with width fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::DataLength {
                channels,
                height,
                width,
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn full(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Build a tensor by evaluating `f(channel, y, x)` at every cell.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f32) {
        let i = self.idx(c, y, x);
        self.data[i] = value;
    }

    /// One channel plane as a contiguous slice.
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Copy of channels `[start, start + count)` as a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Tensor> {
        if start + count > self.channels {
            return Err(Error::ChannelMismatch {
                context: "slice_channels",
                expected: self.channels,
                got: start + count,
            });
        }
        let plane = self.height * self.width;
        let data = self.data[start * plane..(start + count) * plane].to_vec();
        Tensor::new(count, self.height, self.width, data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Parameters of a 2-D convolution layer (cross-correlation, zero padding).
#[derive(Debug, Clone)]
pub struct ConvParams {
    out_channels: usize,
    in_channels: usize,
    kh: usize,
    kw: usize,
    /// Flat (out, in, kh, kw) row-major weights.
    weights: Vec<f32>,
    bias: Vec<f32>,
    stride: usize,
    padding: usize,
}

impl ConvParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let expected = out_channels * in_channels * kh * kw;
        if weights.len() != expected {
            return Err(Error::InvalidValue {
                name: "ConvParams.weights",
                message: format!("expected {} values, got {}", expected, weights.len()),
            });
        }
        if bias.len() != out_channels {
            return Err(Error::InvalidValue {
                name: "ConvParams.bias",
                message: format!("expected {} values, got {}", out_channels, bias.len()),
            });
        }
        if stride == 0 {
            return Err(Error::InvalidValue {
                name: "ConvParams.stride",
                message: "stride must be positive".into(),
            });
        }
        Ok(Self {
            out_channels,
            in_channels,
            kh,
            kw,
            weights,
            bias,
            stride,
            padding,
        })
    }

    /// All-zero weights and biases; useful for wiring checks.
    pub fn zeros(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            out_channels,
            in_channels,
            kh,
            kw,
            weights: vec![0.0; out_channels * in_channels * kh * kw],
            bias: vec![0.0; out_channels],
            stride,
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.kh, self.kw)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.bias
    }

    #[inline]
    pub fn weight_at(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.weights[((o * self.in_channels + i) * self.kh + ky) * self.kw + kx]
    }

    /// Output spatial dims for an input of `h x w`, or an error when the
    /// geometry leaves no output.
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = (h + 2 * self.padding).checked_sub(self.kh);
        let ow = (w + 2 * self.padding).checked_sub(self.kw);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok((oh / self.stride + 1, ow / self.stride + 1)),
            _ => Err(Error::ConvGeometry {
                in_h: h,
                in_w: w,
                kh: self.kh,
                kw: self.kw,
                stride: self.stride,
                padding: self.padding,
            }),
        }
    }

    /// Number of multiply-accumulates for an input of `h x w`.
    pub fn mac_count(&self, h: usize, w: usize) -> Result<u64> {
        let (oh, ow) = self.output_dims(h, w)?;
        Ok((oh * ow) as u64
            * self.out_channels as u64
            * self.in_channels as u64
            * (self.kh * self.kw) as u64)
    }
}

/// 2-D cross-correlation with zero padding.
///
/// Accumulation runs in f64 with a fixed per-pixel term order (in-channel,
/// then kernel row, then kernel column), so outputs are bit-reproducible.
pub fn conv2d(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    if input.channels() != params.in_channels {
        return Err(Error::ChannelMismatch {
            context: "conv2d input",
            expected: params.in_channels,
            got: input.channels(),
        });
    }
    let (h, w) = (input.height(), input.width());
    let (oh, ow) = params.output_dims(h, w)?;
    let pad = params.padding as i64;
    let stride = params.stride;
    let mut out = Tensor::zeros(params.out_channels, oh, ow);
    let mut acc = vec![0.0f64; ow];
    for oc in 0..params.out_channels {
        for oy in 0..oh {
            acc.fill(params.bias[oc] as f64);
            let base_y = (oy * stride) as i64 - pad;
            for ic in 0..params.in_channels {
                let plane = input.channel(ic);
                for ky in 0..params.kh {
                    let iy = base_y + ky as i64;
                    if iy < 0 || iy >= h as i64 {
                        continue;
                    }
                    let in_row = &plane[iy as usize * w..iy as usize * w + w];
                    let w_base = ((oc * params.in_channels + ic) * params.kh + ky) * params.kw;
                    let w_row = &params.weights[w_base..w_base + params.kw];
                    for (kx, &wgt) in w_row.iter().enumerate() {
                        let wgt = wgt as f64;
                        let off = kx as i64 - pad;
                        if stride == 1 {
                            // valid ox range keeps ix = ox + off inside the row
                            let ox_start = (-off).max(0) as usize;
                            let ox_end = (w as i64 - off).clamp(0, ow as i64) as usize;
                            if ox_start >= ox_end {
                                continue;
                            }
                            let in_start = (ox_start as i64 + off) as usize;
                            let src = &in_row[in_start..in_start + (ox_end - ox_start)];
                            let dst = &mut acc[ox_start..ox_end];
                            for (a, &v) in dst.iter_mut().zip(src) {
                                *a += wgt * v as f64;
                            }
                        } else {
                            for (ox, a) in acc.iter_mut().enumerate() {
                                let ix = (ox * stride) as i64 + off;
                                if ix >= 0 && ix < w as i64 {
                                    *a += wgt * in_row[ix as usize] as f64;
                                }
                            }
                        }
                    }
                }
            }
            let row_base = (oc * oh + oy) * ow;
            for (ox, &a) in acc.iter().enumerate() {
                out.data[row_base + ox] = a as f32;
            }
        }
    }
    Ok(out)
}

/// Non-overlapping window means per channel. `height` and `width` must be
/// divisible by `window`; callers pad inputs up front.
pub fn avg_pool2d(input: &Tensor, window: usize) -> Result<Tensor> {
    if window == 0 {
        return Err(Error::InvalidValue {
            name: "avg_pool2d.window",
            message: "window must be positive".into(),
        });
    }
    let (c, h, w) = input.shape();
    if h % window != 0 {
        return Err(Error::NotDivisible {
            context: "avg_pool2d height",
            dim: h,
            divisor: window,
        });
    }
    if w % window != 0 {
        return Err(Error::NotDivisible {
            context: "avg_pool2d width",
            dim: w,
            divisor: window,
        });
    }
    let (oh, ow) = (h / window, w / window);
    let norm = 1.0 / (window * window) as f64;
    let mut out = Tensor::zeros(c, oh, ow);
    for ch in 0..c {
        let plane = input.channel(ch);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f64;
                for dy in 0..window {
                    let row = (oy * window + dy) * w + ox * window;
                    for dx in 0..window {
                        acc += plane[row + dx] as f64;
                    }
                }
                out.set(ch, oy, ox, (acc * norm) as f32);
            }
        }
    }
    Ok(out)
}

/// Pointwise activation kinds used by the update block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

/// Pointwise map; shape preserved.
pub fn elementwise(input: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Relu => input.map(|v| v.max(0.0)),
        Activation::Tanh => input.map(f32::tanh),
        Activation::Sigmoid => input.map(|v| 1.0 / (1.0 + (-v).exp())),
    }
}

/// Stack tensors along the channel axis, in order.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or(Error::InvalidValue {
        name: "concat_channels.parts",
        message: "need at least one tensor".into(),
    })?;
    let (h, w) = (first.height(), first.width());
    let mut channels = 0;
    for part in parts {
        if part.height() != h || part.width() != w {
            return Err(Error::SpatialMismatch {
                context: "concat_channels",
                expected_h: h,
                expected_w: w,
                got_h: part.height(),
                got_w: part.width(),
            });
        }
        channels += part.channels();
    }
    let mut data = Vec::with_capacity(channels * h * w);
    for part in parts {
        data.extend_from_slice(part.data());
    }
    Tensor::new(channels, h, w, data)
}

/// Zero-pad on the right/bottom to `new_h x new_w`.
pub fn pad_right_bottom(input: &Tensor, new_h: usize, new_w: usize) -> Result<Tensor> {
    let (c, h, w) = input.shape();
    if new_h < h || new_w < w {
        return Err(Error::SpatialMismatch {
            context: "pad_right_bottom",
            expected_h: h,
            expected_w: w,
            got_h: new_h,
            got_w: new_w,
        });
    }
    let mut out = Tensor::zeros(c, new_h, new_w);
    for ch in 0..c {
        let src = input.channel(ch);
        for y in 0..h {
            let dst_base = (ch * new_h + y) * new_w;
            out.data_mut()[dst_base..dst_base + w].copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::SplitMix64;

    fn random_tensor(rng: &mut SplitMix64, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn(c, h, w, |_, _, _| rng.next_f32_in(-1.0, 1.0))
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let mut rng = SplitMix64::new(11);
        let t = random_tensor(&mut rng, 3, 5, 7);
        let params = ConvParams::new(3, 3, 1, 1, identity_1x1(3), vec![0.0; 3], 1, 0).unwrap();
        let out = conv2d(&t, &params).unwrap();
        assert_eq!(out, t);
    }

    fn identity_1x1(c: usize) -> Vec<f32> {
        let mut weights = vec![0.0; c * c];
        for i in 0..c {
            weights[i * c + i] = 1.0;
        }
        weights
    }

    #[test]
    fn ones_kernel_counts_in_bounds_taps() {
        let t = Tensor::full(1, 2, 2, 1.0);
        let params = ConvParams::new(1, 1, 3, 3, vec![1.0; 9], vec![0.0], 1, 1).unwrap();
        let out = conv2d(&t, &params).unwrap();
        assert_eq!(out.shape(), (1, 2, 2));
        // every output position is a corner of the 2x2 input: 4 in-bounds taps
        for &v in out.data() {
            assert_eq!(v, 4.0);
        }
    }

    #[test]
    fn conv_matches_naive_loop_oracle() {
        let mut rng = SplitMix64::new(22);
        let input = random_tensor(&mut rng, 4, 8, 8);
        let weights: Vec<f32> = (0..6 * 4 * 3 * 3)
            .map(|_| rng.next_f32_in(-1.0, 1.0))
            .collect();
        let bias: Vec<f32> = (0..6).map(|_| rng.next_f32_in(-1.0, 1.0)).collect();
        let params = ConvParams::new(6, 4, 3, 3, weights, bias, 1, 1).unwrap();
        let got = conv2d(&input, &params).unwrap();
        let want = crate::oracle::conv2d_reference(&input, &params).unwrap();
        let max_diff = got
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff < 1e-5, "max diff {max_diff}");
    }

    #[test]
    fn conv_shape_mismatch_names_dimension() {
        let t = Tensor::zeros(2, 4, 4);
        let params = ConvParams::zeros(1, 3, 3, 3, 1, 1);
        let err = conv2d(&t, &params).unwrap_err();
        assert!(matches!(
            err,
            Error::ChannelMismatch {
                expected: 3,
                got: 2,
                ..
            }
        ));
    }

    #[test]
    fn conv_is_linear_in_input() {
        let mut rng = SplitMix64::new(33);
        let x = random_tensor(&mut rng, 2, 6, 6);
        let y = random_tensor(&mut rng, 2, 6, 6);
        let (a, b) = (0.7f32, -1.3f32);
        let weights: Vec<f32> = (0..3 * 2 * 3 * 3)
            .map(|_| rng.next_f32_in(-1.0, 1.0))
            .collect();
        let params = ConvParams::new(3, 2, 3, 3, weights, vec![0.0; 3], 1, 1).unwrap();
        let mixed = Tensor::from_fn(2, 6, 6, |c, yy, xx| {
            a * x.get(c, yy, xx) + b * y.get(c, yy, xx)
        });
        let lhs = conv2d(&mixed, &params).unwrap();
        let cx = conv2d(&x, &params).unwrap();
        let cy = conv2d(&y, &params).unwrap();
        for i in 0..lhs.len() {
            let want = a * cx.data()[i] + b * cy.data()[i];
            let diff = (lhs.data()[i] - want).abs();
            let scale = want.abs().max(1.0);
            assert!(diff / scale < 1e-4, "at {i}: {} vs {}", lhs.data()[i], want);
        }
    }

    #[test]
    fn pool_of_constants_is_constant() {
        let t = Tensor::full(3, 8, 8, 2.5);
        let out = avg_pool2d(&t, 2).unwrap();
        assert_eq!(out.shape(), (3, 4, 4));
        assert!(out.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn pool_block_mean() {
        let t = Tensor::new(1, 2, 2, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let out = avg_pool2d(&t, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn pool_matches_block_mean_oracle_exactly() {
        let mut rng = SplitMix64::new(44);
        let t = random_tensor(&mut rng, 8, 16, 16);
        let got = avg_pool2d(&t, 2).unwrap();
        let want = crate::oracle::block_mean_reference(&t, 2).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn pool_rejects_non_divisible() {
        let t = Tensor::zeros(1, 5, 4);
        assert!(matches!(
            avg_pool2d(&t, 2).unwrap_err(),
            Error::NotDivisible {
                dim: 5,
                divisor: 2,
                ..
            }
        ));
    }

    #[test]
    fn nested_pools_compose() {
        let mut rng = SplitMix64::new(55);
        let t = random_tensor(&mut rng, 2, 8, 8);
        let twice = avg_pool2d(&avg_pool2d(&t, 2).unwrap(), 2).unwrap();
        let once = avg_pool2d(&t, 4).unwrap();
        for (a, b) in twice.data().iter().zip(once.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn elementwise_examples() {
        let t = Tensor::new(1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(elementwise(&t, Activation::Relu).data(), &[0.0, 0.0, 2.0]);

        let z = Tensor::new(1, 1, 1, vec![0.0]).unwrap();
        assert_eq!(elementwise(&z, Activation::Sigmoid).data(), &[0.5]);

        for &x in &[8.0f32, -8.0, 12.0, -12.0] {
            let t = Tensor::new(1, 1, 1, vec![x]).unwrap();
            let y = elementwise(&t, Activation::Tanh).data()[0];
            assert!((1.0 - y.abs()).abs() < 1e-6, "tanh({x}) = {y}");
        }
    }

    #[test]
    fn concat_identity_and_order() {
        let mut rng = SplitMix64::new(66);
        let a = random_tensor(&mut rng, 3, 4, 4);
        let single = concat_channels(&[&a]).unwrap();
        assert_eq!(single, a);

        let b = random_tensor(&mut rng, 3, 4, 4);
        let both = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(both.shape(), (6, 4, 4));
        assert_eq!(both.slice_channels(0, 3).unwrap(), a);
        assert_eq!(both.slice_channels(3, 3).unwrap(), b);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::zeros(1, 4, 4);
        let b = Tensor::zeros(1, 4, 5);
        assert!(matches!(
            concat_channels(&[&a, &b]).unwrap_err(),
            Error::SpatialMismatch { .. }
        ));
    }

    #[test]
    fn kernels_are_pure() {
        let mut rng = SplitMix64::new(77);
        let t = random_tensor(&mut rng, 2, 6, 6);
        let weights: Vec<f32> = (0..2 * 2 * 3 * 3)
            .map(|_| rng.next_f32_in(-1.0, 1.0))
            .collect();
        let params = ConvParams::new(2, 2, 3, 3, weights, vec![0.1, -0.1], 1, 1).unwrap();
        assert_eq!(conv2d(&t, &params).unwrap(), conv2d(&t, &params).unwrap());
        assert_eq!(avg_pool2d(&t, 2).unwrap(), avg_pool2d(&t, 2).unwrap());
    }

    #[test]
    fn pad_right_bottom_zero_fills() {
        let t = Tensor::full(1, 2, 2, 3.0);
        let p = pad_right_bottom(&t, 3, 4).unwrap();
        assert_eq!(p.shape(), (1, 3, 4));
        assert_eq!(p.get(0, 0, 0), 3.0);
        assert_eq!(p.get(0, 1, 1), 3.0);
        assert_eq!(p.get(0, 2, 0), 0.0);
        assert_eq!(p.get(0, 0, 2), 0.0);
    }
}
