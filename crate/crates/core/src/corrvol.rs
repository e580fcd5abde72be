//! Cost-volume machinery.
//!
//! Two routes to the same correlation features: a fully materialized 4-D
//! all-pairs volume with a lookup over it (the desk-scale reference), and a
//! tiled just-in-time lookup that gathers only the integer-grid features
//! each pixel's neighborhood needs, correlates them, and fixes the sub-pixel
//! part with a bilinear shift. The tiled route is the one whose peak
//! working set stays bounded: one tile's gather buffer at a time.

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::sampling::{bilinear_shift, Shift2D};
use crate::tensor::{avg_pool2d, Tensor};

/// Largest H*W either feature map may have before `build_all_pairs` refuses
/// to materialize the full volume.
pub const ALL_PAIRS_POSITION_LIMIT: usize = 4096;

/// Fully materialized correlation volume:
/// `C[i][j][k][l] = sum_h f1[h][i][j] * f2[h][k][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume4D {
    h1: usize,
    w1: usize,
    h2: usize,
    w2: usize,
    data: Vec<f32>,
}

impl CostVolume4D {
    pub fn from_raw(h1: usize, w1: usize, h2: usize, w2: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != h1 * w1 * h2 * w2 {
            return Err(Error::DataLength {
                channels: h1 * w1,
                height: h2,
                width: w2,
                expected: h1 * w1 * h2 * w2,
                got: data.len(),
            });
        }
        Ok(Self {
            h1,
            w1,
            h2,
            w2,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.h1, self.w1, self.h2, self.w2)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize, l: usize) -> f32 {
        self.data[((i * self.w1 + j) * self.h2 + k) * self.w2 + l]
    }

    /// The h2 x w2 correlation plane for source pixel (i, j).
    pub fn slice(&self, i: usize, j: usize) -> &[f32] {
        let plane = self.h2 * self.w2;
        let base = (i * self.w1 + j) * plane;
        &self.data[base..base + plane]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Feature maps at halving resolutions: level p+1 is the 2x average pool of
/// level p, with the channel count constant across levels.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    levels: Vec<Tensor>,
}

impl FeaturePyramid {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, p: usize) -> &Tensor {
        &self.levels[p]
    }

    pub fn feature_dim(&self) -> usize {
        self.levels[0].channels()
    }

    pub fn base_dims(&self) -> (usize, usize) {
        (self.levels[0].height(), self.levels[0].width())
    }
}

/// Lookup neighborhood geometry for radius r: (2r+1) sample offsets per axis,
/// gathered from a (2r+2)-wide integer grid so the sub-pixel shift can
/// consume one sample per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LookupWindow {
    radius: usize,
}

impl LookupWindow {
    pub fn new(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::InvalidValue {
                name: "LookupWindow.radius",
                message: "radius must be positive".into(),
            });
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// 2r + 1.
    pub fn samples_per_axis(&self) -> usize {
        2 * self.radius + 1
    }

    /// 2r + 2 = samples + 1.
    pub fn gather_per_axis(&self) -> usize {
        2 * self.radius + 2
    }

    /// (2r + 1)^2 output correlation channels.
    pub fn sample_channels(&self) -> usize {
        self.samples_per_axis() * self.samples_per_axis()
    }

    /// (2r + 2)^2 gathered grid positions per pixel.
    pub fn gather_count(&self) -> usize {
        self.gather_per_axis() * self.gather_per_axis()
    }

    /// (2r + 2)^2 * D features held per pixel while its tile is live.
    pub fn gathered_features(&self, feature_dim: usize) -> usize {
        self.gather_count() * feature_dim
    }
}

/// Working-set record of one tiled lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryTrace {
    /// Positions per tile, ceil(P / n_slice).
    pub tile_positions: usize,
    /// Number of tiles actually executed.
    pub tiles_run: usize,
    /// Peak gathered-feature buffer size in elements:
    /// tile_positions * (2r+2)^2 * D.
    pub peak_gather_elems: usize,
}

impl MemoryTrace {
    /// Peak gathered bytes under a given element width (1 for the
    /// quantized-deployment accounting, 4 for this f32 build).
    pub fn peak_bytes(&self, bytes_per_element: usize) -> u64 {
        self.peak_gather_elems as u64 * bytes_per_element as u64
    }
}

/// Materialize the all-pairs volume with f64 accumulation. Guarded to
/// desk-scale inputs; larger maps should go through [`jit_lookup`].
pub fn build_all_pairs(f1: &Tensor, f2: &Tensor) -> Result<CostVolume4D> {
    if f1.channels() != f2.channels() {
        return Err(Error::ChannelMismatch {
            context: "build_all_pairs",
            expected: f1.channels(),
            got: f2.channels(),
        });
    }
    let (d, h1, w1) = f1.shape();
    let (_, h2, w2) = f2.shape();
    for positions in [h1 * w1, h2 * w2] {
        if positions > ALL_PAIRS_POSITION_LIMIT {
            return Err(Error::AllPairsGuard {
                positions,
                limit: ALL_PAIRS_POSITION_LIMIT,
            });
        }
    }
    let mut data = Vec::with_capacity(h1 * w1 * h2 * w2);
    for i in 0..h1 {
        for j in 0..w1 {
            for k in 0..h2 {
                for l in 0..w2 {
                    let mut acc = 0.0f64;
                    for ch in 0..d {
                        acc += f1.get(ch, i, j) as f64 * f2.get(ch, k, l) as f64;
                    }
                    data.push(acc as f32);
                }
            }
        }
    }
    CostVolume4D::from_raw(h1, w1, h2, w2, data)
}

/// Repeated 2x average pooling. Spatial dims must divide by 2^(levels-1).
pub fn build_pyramid(features: &Tensor, levels: usize) -> Result<FeaturePyramid> {
    if levels == 0 {
        return Err(Error::InvalidValue {
            name: "build_pyramid.levels",
            message: "need at least one level".into(),
        });
    }
    let divisor = 1usize << (levels - 1);
    if !features.height().is_multiple_of(divisor) {
        return Err(Error::NotDivisible {
            context: "build_pyramid height",
            dim: features.height(),
            divisor,
        });
    }
    if !features.width().is_multiple_of(divisor) {
        return Err(Error::NotDivisible {
            context: "build_pyramid width",
            dim: features.width(),
            divisor,
        });
    }
    let mut pyramid = vec![features.clone()];
    for _ in 1..levels {
        let next = avg_pool2d(pyramid.last().unwrap(), 2)?;
        pyramid.push(next);
    }
    Ok(FeaturePyramid { levels: pyramid })
}

/// Split a real-valued target into its integer cell (floor convention) and
/// the sub-pixel residue in [0, 1)^2.
///
/// Computed in f64, where the residue of an f32-sourced value is exact, so
/// cell + residue reproduces the input bit for bit.
pub fn decompose_flow(x: f32, y: f32) -> ((i64, i64), Shift2D) {
    let (ix, rx) = floor_split(x as f64);
    let (iy, ry) = floor_split(y as f64);
    let shift = Shift2D::new(rx, ry).expect("floor residue stays in [0, 1)");
    ((ix, iy), shift)
}

fn floor_split(v: f64) -> (i64, f64) {
    let cell = v.floor();
    (cell as i64, v - cell)
}

/// Correlation lookup over a materialized volume.
///
/// For each pixel x the (2r+1)^2 correlations around x' = x + f(x) are
/// bilinearly sampled from the plane C[x, ., .] with zero padding. Output
/// channels run row-major over (dy, dx) offsets from (-r, -r) to (r, r).
pub fn lookup_precomputed(
    volume: &CostVolume4D,
    flow: &FlowField,
    window: LookupWindow,
) -> Result<Tensor> {
    let (h1, w1, h2, w2) = volume.dims();
    if flow.height() != h1 || flow.width() != w1 {
        return Err(Error::SpatialMismatch {
            context: "lookup_precomputed flow",
            expected_h: h1,
            expected_w: w1,
            got_h: flow.height(),
            got_w: flow.width(),
        });
    }
    let r = window.radius() as i64;
    let span = window.samples_per_axis();
    let mut out = Tensor::zeros(window.sample_channels(), h1, w1);
    for y in 0..h1 {
        for x in 0..w1 {
            let (fu, fv) = flow.get(y, x);
            let tx = x as f32 + fu;
            let ty = y as f32 + fv;
            let ((ix, iy), shift) = decompose_flow(tx, ty);
            let plane = volume.slice(y, x);
            let fx = shift.dx();
            let fy = shift.dy();
            let tap = |k: i64, l: i64| -> f64 {
                if k < 0 || l < 0 || k >= h2 as i64 || l >= w2 as i64 {
                    0.0
                } else {
                    plane[k as usize * w2 + l as usize] as f64
                }
            };
            for oy in -r..=r {
                for ox in -r..=r {
                    let base_k = iy + oy;
                    let base_l = ix + ox;
                    let v = (1.0 - fy) * (1.0 - fx) * tap(base_k, base_l)
                        + (1.0 - fy) * fx * tap(base_k, base_l + 1)
                        + fy * (1.0 - fx) * tap(base_k + 1, base_l)
                        + fy * fx * tap(base_k + 1, base_l + 1);
                    let channel = ((oy + r) as usize) * span + (ox + r) as usize;
                    out.set(channel, y, x, v as f32);
                }
            }
        }
    }
    Ok(out)
}

/// Dot products of one pixel's feature vector against each gathered feature
/// row, f64 accumulation. `gathered` holds `count` rows of `D` values.
pub fn correlate_gather(pixel_feature: &[f32], gathered: &[f32], count: usize) -> Vec<f32> {
    let d = pixel_feature.len();
    debug_assert_eq!(gathered.len(), count * d);
    let mut out = Vec::with_capacity(count);
    for g in 0..count {
        let row = &gathered[g * d..(g + 1) * d];
        let mut acc = 0.0f64;
        for (a, b) in pixel_feature.iter().zip(row) {
            acc += *a as f64 * *b as f64;
        }
        out.push(acc as f32);
    }
    out
}

/// Tiled just-in-time correlation lookup.
///
/// The H1*W1 pixels are split into `n_slice` contiguous row-major tiles of
/// ceil(P / n_slice) positions (last tile possibly short). Per tile, each
/// pixel gathers the (2r+2)^2 integer-grid features of `f2_level` around
/// floor(x + f(x)) (zeros out of bounds) into a shared buffer, correlates
/// them against its own feature vector, and blends the (2r+2)^2 correlation
/// grid down to (2r+1)^2 channels with the sub-pixel residue. Output matches
/// [`lookup_precomputed`] channel for channel; the returned trace records the
/// gather buffer that bounds peak memory.
pub fn jit_lookup(
    f1: &Tensor,
    f2_level: &Tensor,
    flow: &FlowField,
    window: LookupWindow,
    n_slice: usize,
) -> Result<(Tensor, MemoryTrace)> {
    if f1.channels() != f2_level.channels() {
        return Err(Error::ChannelMismatch {
            context: "jit_lookup",
            expected: f1.channels(),
            got: f2_level.channels(),
        });
    }
    let (d, h1, w1) = f1.shape();
    let (_, h2, w2) = f2_level.shape();
    if flow.height() != h1 || flow.width() != w1 {
        return Err(Error::SpatialMismatch {
            context: "jit_lookup flow",
            expected_h: h1,
            expected_w: w1,
            got_h: flow.height(),
            got_w: flow.width(),
        });
    }
    let positions = h1 * w1;
    if n_slice == 0 || n_slice > positions {
        return Err(Error::SliceCount {
            n_slice,
            max: positions,
        });
    }

    let tile_positions = positions.div_ceil(n_slice);
    let gather_per_axis = window.gather_per_axis();
    let gather_count = window.gather_count();
    let r = window.radius() as i64;
    let span = window.samples_per_axis();

    // one tile's gather buffer is the peak working set
    let mut gather = vec![0.0f32; tile_positions * gather_count * d];
    let mut out = Tensor::zeros(window.sample_channels(), h1, w1);
    let mut residues: Vec<Shift2D> = Vec::with_capacity(tile_positions);
    let mut tiles_run = 0usize;

    let mut tile_start = 0usize;
    while tile_start < positions {
        let tile_len = tile_positions.min(positions - tile_start);
        tiles_run += 1;
        residues.clear();

        // gather pass
        for t in 0..tile_len {
            let p = tile_start + t;
            let y = p / w1;
            let x = p % w1;
            let (fu, fv) = flow.get(y, x);
            let ((ix, iy), shift) = decompose_flow(x as f32 + fu, y as f32 + fv);
            residues.push(shift);
            let pixel_base = t * gather_count * d;
            for gy in 0..gather_per_axis {
                let sy = iy - r + gy as i64;
                for gx in 0..gather_per_axis {
                    let sx = ix - r + gx as i64;
                    let row_base = pixel_base + (gy * gather_per_axis + gx) * d;
                    if sy < 0 || sx < 0 || sy >= h2 as i64 || sx >= w2 as i64 {
                        gather[row_base..row_base + d].fill(0.0);
                    } else {
                        for ch in 0..d {
                            gather[row_base + ch] = f2_level.get(ch, sy as usize, sx as usize);
                        }
                    }
                }
            }
        }

        // correlate + sub-pixel blend pass
        let mut pixel_feature = vec![0.0f32; d];
        for t in 0..tile_len {
            let p = tile_start + t;
            let y = p / w1;
            let x = p % w1;
            for (ch, slot) in pixel_feature.iter_mut().enumerate() {
                *slot = f1.get(ch, y, x);
            }
            let rows = &gather[t * gather_count * d..(t + 1) * gather_count * d];
            let corr = correlate_gather(&pixel_feature, rows, gather_count);
            let grid = Tensor::new(1, gather_per_axis, gather_per_axis, corr)?;
            let blended = bilinear_shift(&grid, residues[t])?;
            for oy in 0..span {
                for ox in 0..span {
                    out.set(oy * span + ox, y, x, blended.get(0, oy, ox));
                }
            }
        }

        tile_start += tile_len;
    }

    let trace = MemoryTrace {
        tile_positions,
        tiles_run,
        peak_gather_elems: tile_positions * window.gathered_features(d),
    };
    Ok((out, trace))
}
