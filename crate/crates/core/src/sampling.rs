//! Sub-pixel samplers.
//!
//! Two interchangeable routes compute the same thing: classic per-coordinate
//! bilinear grid sampling, and a slice-and-blend reformulation for uniform
//! grids that replaces the gather with vectorizable elementwise work. The
//! blend route loses one sample per axis, so a (2r+2)-wide integer gather
//! yields the (2r+1)-wide sub-pixel window the lookup needs.

use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sub-pixel shift with both components in [0, 1).
///
/// Components are kept in f64 so that decomposing a target coordinate into
/// integer cell plus residue stays lossless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shift2D {
    dx: f64,
    dy: f64,
}

impl Shift2D {
    pub fn new(dx: f64, dy: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dx) {
            return Err(Error::ShiftRange {
                name: "dx",
                value: dx as f32,
            });
        }
        if !(0.0..1.0).contains(&dy) {
            return Err(Error::ShiftRange {
                name: "dy",
                value: dy as f32,
            });
        }
        Ok(Self { dx, dy })
    }

    pub const ZERO: Shift2D = Shift2D { dx: 0.0, dy: 0.0 };

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }
}

/// Bilinear interpolation of `input` at real-valued (x, y) positions.
///
/// `coords` holds one (x, y) pair per output pixel, row-major over the
/// `out_h x out_w` output. Positions outside [0, W-1] x [0, H-1] draw zeros
/// from the implicit padding, and integer positions reproduce stored values
/// exactly.
pub fn grid_sample_bilinear(
    input: &Tensor,
    coords: &[(f64, f64)],
    out_h: usize,
    out_w: usize,
) -> Result<Tensor> {
    if coords.len() != out_h * out_w {
        return Err(Error::InvalidValue {
            name: "grid_sample_bilinear.coords",
            message: format!("expected {} pairs, got {}", out_h * out_w, coords.len()),
        });
    }
    let (c, h, w) = input.shape();
    let mut out = Tensor::zeros(c, out_h, out_w);
    for (p, &(xf, yf)) in coords.iter().enumerate() {
        let oy = p / out_w;
        let ox = p % out_w;
        let x0 = xf.floor();
        let y0 = yf.floor();
        let wx = xf - x0;
        let wy = yf - y0;
        let x0 = x0 as i64;
        let y0 = y0 as i64;
        for ch in 0..c {
            let plane = input.channel(ch);
            let tap = |yy: i64, xx: i64| -> f64 {
                if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                    0.0
                } else {
                    plane[yy as usize * w + xx as usize] as f64
                }
            };
            let v = (1.0 - wy) * (1.0 - wx) * tap(y0, x0)
                + (1.0 - wy) * wx * tap(y0, x0 + 1)
                + wy * (1.0 - wx) * tap(y0 + 1, x0)
                + wy * wx * tap(y0 + 1, x0 + 1);
            out.set(ch, oy, ox, v as f32);
        }
    }
    Ok(out)
}

/// Sub-pixel shift of a uniform grid by slicing and blending.
///
/// The tensor is split into two views offset by one pixel along x and blended
/// with (1 - dx, dx); the same is then done along y with (1 - dy, dy). Slice
/// bounds are inclusive index ranges, so both views span `len - 1` samples
/// and the output is `C x (H-1) x (W-1)`.
pub fn bilinear_shift(input: &Tensor, shift: Shift2D) -> Result<Tensor> {
    let (c, h, w) = input.shape();
    if h < 2 || w < 2 {
        return Err(Error::SpatialMismatch {
            context: "bilinear_shift needs H >= 2 and W >= 2",
            expected_h: 2,
            expected_w: 2,
            got_h: h,
            got_w: w,
        });
    }
    let dx = shift.dx();
    let dy = shift.dy();
    let (bw, bh) = (w - 1, h - 1);

    // x pass: blend columns [0, w-2] with [1, w-1]
    let mut blended_x = vec![0.0f64; c * h * bw];
    for ch in 0..c {
        let plane = input.channel(ch);
        for y in 0..h {
            let src = &plane[y * w..(y + 1) * w];
            let dst = &mut blended_x[(ch * h + y) * bw..(ch * h + y + 1) * bw];
            for x in 0..bw {
                dst[x] = (1.0 - dx) * src[x] as f64 + dx * src[x + 1] as f64;
            }
        }
    }

    // y pass: blend rows [0, h-2] with [1, h-1]
    let mut out = Tensor::zeros(c, bh, bw);
    for ch in 0..c {
        for y in 0..bh {
            let top = &blended_x[(ch * h + y) * bw..(ch * h + y + 1) * bw];
            let bottom = &blended_x[(ch * h + y + 1) * bw..(ch * h + y + 2) * bw];
            for x in 0..bw {
                let v = (1.0 - dy) * top[x] + dy * bottom[x];
                out.set(ch, y, x, v as f32);
            }
        }
    }
    Ok(out)
}

/// Bilinear resize with half-pixel centers and border replication.
///
/// Unlike [`grid_sample_bilinear`], out-of-range taps clamp to the border,
/// which is the convention wanted for resampling whole fields (hidden state,
/// flow upsampling) where zero bleed-in would be wrong.
pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = input.shape();
    if out_h == h && out_w == w {
        return input.clone();
    }
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;
    let mut out = Tensor::zeros(c, out_h, out_w);
    for oy in 0..out_h {
        let sy = (oy as f64 + 0.5) * scale_y - 0.5;
        let y0 = sy.floor();
        let fy = sy - y0;
        let y0c = (y0 as i64).clamp(0, h as i64 - 1) as usize;
        let y1c = (y0 as i64 + 1).clamp(0, h as i64 - 1) as usize;
        for ox in 0..out_w {
            let sx = (ox as f64 + 0.5) * scale_x - 0.5;
            let x0 = sx.floor();
            let fx = sx - x0;
            let x0c = (x0 as i64).clamp(0, w as i64 - 1) as usize;
            let x1c = (x0 as i64 + 1).clamp(0, w as i64 - 1) as usize;
            for ch in 0..c {
                let plane = input.channel(ch);
                let v = (1.0 - fy) * (1.0 - fx) * plane[y0c * w + x0c] as f64
                    + (1.0 - fy) * fx * plane[y0c * w + x1c] as f64
                    + fy * (1.0 - fx) * plane[y1c * w + x0c] as f64
                    + fy * fx * plane[y1c * w + x1c] as f64;
                out.set(ch, oy, ox, v as f32);
            }
        }
    }
    out
}

/// One measured size in a sampler benchmark.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub shift_ns_per_op: f64,
    pub grid_ns_per_op: f64,
}

impl BenchRow {
    /// grid-sample time over shift time; > 1 means the blend route is faster.
    pub fn throughput_ratio(&self) -> f64 {
        self.grid_ns_per_op / self.shift_ns_per_op
    }
}

/// Timing table for both samplers over a set of tensor shapes.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub repetitions: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("channels,height,width,shift_ns_per_op,grid_ns_per_op,ratio\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:.1},{:.1},{:.2}\n",
                r.channels,
                r.height,
                r.width,
                r.shift_ns_per_op,
                r.grid_ns_per_op,
                r.throughput_ratio()
            ));
        }
        s
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>16} {:>16} {:>8}",
            "size", "shift ns/op", "grid ns/op", "ratio"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<14} {:>16.1} {:>16.1} {:>8.2}",
                format!("{}x{}x{}", r.channels, r.height, r.width),
                r.shift_ns_per_op,
                r.grid_ns_per_op,
                r.throughput_ratio()
            )?;
        }
        writeln!(f, "(ratios are informational; measured on this host)")
    }
}

/// Time both samplers on each shape. Before timing, the two routes are run
/// once and compared; a disagreement aborts the benchmark.
pub fn bench_samplers(sizes: &[(usize, usize, usize)], repetitions: usize) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(Error::InvalidValue {
            name: "bench_samplers.repetitions",
            message: "need at least one repetition".into(),
        });
    }
    let mut rng = crate::init::SplitMix64::new(0x5EED_BE7C);
    let mut rows = Vec::with_capacity(sizes.len());
    for &(c, h, w) in sizes {
        if c == 0 || c.saturating_mul(h).saturating_mul(w) > (1 << 26) {
            return Err(Error::InvalidValue {
                name: "bench_samplers.sizes",
                message: format!("{c}x{h}x{w} is empty or too large to time"),
            });
        }
        if h < 2 || w < 2 {
            return Err(Error::SpatialMismatch {
                context: "bench_samplers size",
                expected_h: 2,
                expected_w: 2,
                got_h: h,
                got_w: w,
            });
        }
        let input = Tensor::from_fn(c, h, w, |_, _, _| rng.next_f32_in(-1.0, 1.0));
        let shift = Shift2D::new(rng.next_f64_unit(), rng.next_f64_unit())?;
        let coords = shifted_grid_coords(h, w, shift);

        // equivalence guard before taking any timings
        let a = bilinear_shift(&input, shift)?;
        let b = grid_sample_bilinear(&input, &coords, h - 1, w - 1)?;
        let max_diff = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        if max_diff > 1e-6 {
            return Err(Error::InvalidValue {
                name: "bench_samplers.guard",
                message: format!("samplers disagree by {max_diff} on {c}x{h}x{w}"),
            });
        }

        let start = Instant::now();
        for _ in 0..repetitions {
            std::hint::black_box(bilinear_shift(std::hint::black_box(&input), shift)?);
        }
        let shift_ns = start.elapsed().as_nanos() as f64 / repetitions as f64;

        let start = Instant::now();
        for _ in 0..repetitions {
            std::hint::black_box(grid_sample_bilinear(
                std::hint::black_box(&input),
                &coords,
                h - 1,
                w - 1,
            )?);
        }
        let grid_ns = start.elapsed().as_nanos() as f64 / repetitions as f64;

        rows.push(BenchRow {
            channels: c,
            height: h,
            width: w,
            shift_ns_per_op: shift_ns.max(1.0),
            grid_ns_per_op: grid_ns.max(1.0),
        });
    }
    Ok(BenchReport { repetitions, rows })
}

/// Coordinates of the uniform grid offset by `shift`, covering the
/// (H-1) x (W-1) window the blend route produces.
pub fn shifted_grid_coords(h: usize, w: usize, shift: Shift2D) -> Vec<(f64, f64)> {
    let mut coords = Vec::with_capacity((h - 1) * (w - 1));
    for i in 0..h - 1 {
        for j in 0..w - 1 {
            coords.push((j as f64 + shift.dx(), i as f64 + shift.dy()));
        }
    }
    coords
}
