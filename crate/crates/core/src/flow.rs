//! Per-pixel 2-D displacement fields.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Dense flow field: for every pixel a displacement (u, v) in pixels,
/// u along x (width), v along y (height). Stored row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    /// Interleaved (u, v) pairs, length 2 * height * width.
    data: Vec<f32>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; 2 * height * width],
        }
    }

    pub fn constant(height: usize, width: usize, u: f32, v: f32) -> Self {
        let mut data = Vec::with_capacity(2 * height * width);
        for _ in 0..height * width {
            data.push(u);
            data.push(v);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_raw(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 2 * height * width {
            return Err(Error::DataLength {
                channels: 2,
                height,
                width,
                expected: 2 * height * width,
                got: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> (f32, f32) {
        let i = 2 * (y * self.width + x);
        (self.data[i], self.data[i + 1])
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, u: f32, v: f32) {
        let i = 2 * (y * self.width + x);
        self.data[i] = u;
        self.data[i + 1] = v;
    }

    /// Two-channel tensor view: channel 0 = u, channel 1 = v.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn(2, self.height, self.width, |c, y, x| {
            let (u, v) = self.get(y, x);
            if c == 0 {
                u
            } else {
                v
            }
        })
    }

    /// Inverse of [`FlowField::to_tensor`].
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.channels() != 2 {
            return Err(Error::ChannelMismatch {
                context: "FlowField::from_tensor",
                expected: 2,
                got: t.channels(),
            });
        }
        let (h, w) = (t.height(), t.width());
        let mut flow = FlowField::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                flow.set(y, x, t.get(0, y, x), t.get(1, y, x));
            }
        }
        Ok(flow)
    }

    /// Top-left crop to `h x w`.
    pub fn cropped(&self, h: usize, w: usize) -> Result<FlowField> {
        if h > self.height || w > self.width {
            return Err(Error::SpatialMismatch {
                context: "FlowField::cropped",
                expected_h: self.height,
                expected_w: self.width,
                got_h: h,
                got_w: w,
            });
        }
        let mut out = FlowField::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = self.get(y, x);
                out.set(y, x, u, v);
            }
        }
        Ok(out)
    }

    /// Elementwise sum; dims must match.
    pub fn add(&self, other: &FlowField) -> Result<FlowField> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::SpatialMismatch {
                context: "FlowField::add",
                expected_h: self.height,
                expected_w: self.width,
                got_h: other.height,
                got_w: other.width,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(FlowField {
            height: self.height,
            width: self.width,
            data,
        })
    }

    pub fn scaled(&self, factor: f32) -> FlowField {
        FlowField {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Largest per-pixel magnitude, 0 for an empty field.
    pub fn max_magnitude(&self) -> f32 {
        let mut max = 0.0f32;
        for i in 0..self.len() {
            let u = self.data[2 * i];
            let v = self.data[2 * i + 1];
            max = max.max((u * u + v * v).sqrt());
        }
        max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip() {
        let mut f = FlowField::zeros(3, 4);
        f.set(1, 2, 0.5, -1.5);
        f.set(2, 0, 7.0, 3.0);
        let back = FlowField::from_tensor(&f.to_tensor()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn crop_keeps_top_left() {
        let mut f = FlowField::zeros(4, 4);
        f.set(0, 0, 1.0, 2.0);
        f.set(3, 3, 9.0, 9.0);
        let c = f.cropped(2, 2).unwrap();
        assert_eq!(c.get(0, 0), (1.0, 2.0));
        assert_eq!(c.height(), 2);
        assert_eq!(c.width(), 2);
    }

    #[test]
    fn add_and_scale() {
        let a = FlowField::constant(2, 2, 1.0, -1.0);
        let b = FlowField::constant(2, 2, 0.5, 0.25);
        let sum = a.add(&b).unwrap();
        assert_eq!(sum.get(1, 1), (1.5, -0.75));
        assert_eq!(sum.scaled(2.0).get(0, 0), (3.0, -1.5));
    }
}
