//! Deterministic parameter initialization.
//!
//! Every run must be reproducible bit-for-bit, so weights come from a
//! SplitMix64 stream seeded per parameter tensor. The per-tensor seed mixes
//! the run seed with an FNV-1a hash of the parameter name, which makes the
//! values independent of construction order.

use crate::tensor::ConvParams;

/// SplitMix64 generator (Steele/Lea/Flood mixing constants).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform f32 in [lo, hi).
    pub fn next_f32_in(&mut self, lo: f32, hi: f32) -> f32 {
        (lo as f64 + self.next_f64_unit() * (hi - lo) as f64) as f32
    }

    /// Uniform in [-scale, scale).
    pub fn next_symmetric(&mut self, scale: f64) -> f32 {
        ((self.next_f64_unit() * 2.0 - 1.0) * scale) as f32
    }

    /// Uniform integer in [0, n).
    pub fn next_usize(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }
}

/// FNV-1a 64-bit hash of a parameter name.
pub fn fnv1a64(name: &str) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for byte in name.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Stream for one named parameter tensor.
pub fn param_rng(seed: u64, name: &str) -> SplitMix64 {
    // one extra mix step so seed 0 with short names still diverges
    let mut rng = SplitMix64::new(seed ^ fnv1a64(name));
    rng.next_u64();
    rng
}

/// Convolution parameters drawn uniform in [-s, s] with s = 1 / sqrt(fan-in),
/// fan-in counting input channels times kernel taps. Bias uses the same bound.
#[allow(clippy::too_many_arguments)]
pub fn seeded_conv(
    seed: u64,
    name: &str,
    out_channels: usize,
    in_channels: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> ConvParams {
    let mut rng = param_rng(seed, name);
    let fan_in = (in_channels * kh * kw) as f64;
    let scale = 1.0 / fan_in.sqrt();
    let weights = (0..out_channels * in_channels * kh * kw)
        .map(|_| rng.next_symmetric(scale))
        .collect();
    let bias = (0..out_channels)
        .map(|_| rng.next_symmetric(scale))
        .collect();
    ConvParams::new(
        out_channels,
        in_channels,
        kh,
        kw,
        weights,
        bias,
        stride,
        padding,
    )
    .expect("seeded_conv builds consistent shapes")
}
