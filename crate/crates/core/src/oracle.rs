//! Slow reference implementations used to cross-check the engine.
//!
//! Everything here is written as plain scalar loops, independent of the
//! production code paths, and is shared by the unit tests and the `selftest`
//! command. None of it is meant to be fast.

use crate::corrvol::{CostVolume4D, LookupWindow};
use crate::error::Result;
use crate::flow::FlowField;
use crate::refine::GruParams;
use crate::tensor::{ConvParams, Tensor};

/// Direct six-nested-loop convolution (cross-correlation, zero padding).
pub fn conv2d_reference(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    let (_, h, w) = input.shape();
    let (oh, ow) = params.output_dims(h, w)?;
    let (kh, kw) = params.kernel();
    let mut out = Tensor::zeros(params.out_channels(), oh, ow);
    for oc in 0..params.out_channels() {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = params.bias()[oc] as f64;
                for ic in 0..params.in_channels() {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * params.stride() + ky) as i64 - params.padding() as i64;
                            let ix = (ox * params.stride() + kx) as i64 - params.padding() as i64;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                acc += params.weight_at(oc, ic, ky, kx) as f64
                                    * input.get(ic, iy as usize, ix as usize) as f64;
                            }
                        }
                    }
                }
                out.set(oc, oy, ox, acc as f32);
            }
        }
    }
    Ok(out)
}

/// Block means computed cell by cell.
pub fn block_mean_reference(input: &Tensor, window: usize) -> Result<Tensor> {
    let (c, h, w) = input.shape();
    assert!(h % window == 0 && w % window == 0);
    let mut out = Tensor::zeros(c, h / window, w / window);
    for ch in 0..c {
        for oy in 0..h / window {
            for ox in 0..w / window {
                let mut acc = 0.0f64;
                for dy in 0..window {
                    for dx in 0..window {
                        acc += input.get(ch, oy * window + dy, ox * window + dx) as f64;
                    }
                }
                out.set(ch, oy, ox, (acc * (1.0 / (window * window) as f64)) as f32);
            }
        }
    }
    Ok(out)
}

/// Closed-form four-tap bilinear sample with zero padding:
/// w00*v00 + w01*v01 + w10*v10 + w11*v11.
pub fn four_tap_reference(input: &Tensor, channel: usize, xf: f64, yf: f64) -> f32 {
    let (_, h, w) = input.shape();
    let x0 = xf.floor() as i64;
    let y0 = yf.floor() as i64;
    let fx = xf - x0 as f64;
    let fy = yf - y0 as f64;
    let tap = |yy: i64, xx: i64| -> f64 {
        if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
            0.0
        } else {
            input.get(channel, yy as usize, xx as usize) as f64
        }
    };
    let v00 = tap(y0, x0);
    let v01 = tap(y0, x0 + 1);
    let v10 = tap(y0 + 1, x0);
    let v11 = tap(y0 + 1, x0 + 1);
    (((1.0 - fy) * (1.0 - fx)) * v00
        + ((1.0 - fy) * fx) * v01
        + (fy * (1.0 - fx)) * v10
        + (fy * fx) * v11) as f32
}

/// Quadruple-loop all-pairs dot products.
pub fn all_pairs_reference(f1: &Tensor, f2: &Tensor) -> CostVolume4D {
    let (d, h1, w1) = f1.shape();
    let (_, h2, w2) = f2.shape();
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
    CostVolume4D::from_raw(h1, w1, h2, w2, data).expect("reference volume shape")
}

/// Correlation lookup by the other algebraic route: bilinearly interpolate
/// the *features* of `f2` at each offset position (zero padding), then take
/// the channel dot product with the `f1` feature. Interpolation and the dot
/// product commute, so this must agree with sampling correlations.
pub fn interpolate_then_dot_reference(
    f1: &Tensor,
    f2: &Tensor,
    flow: &FlowField,
    window: LookupWindow,
) -> Tensor {
    let (d, h1, w1) = f1.shape();
    let r = window.radius() as i64;
    let span = window.samples_per_axis();
    let mut out = Tensor::zeros(span * span, h1, w1);
    for y in 0..h1 {
        for x in 0..w1 {
            let (fu, fv) = flow.get(y, x);
            let tx = x as f32 + fu;
            let ty = y as f32 + fv;
            for oy in -r..=r {
                for ox in -r..=r {
                    let sx = tx as f64 + ox as f64;
                    let sy = ty as f64 + oy as f64;
                    let mut acc = 0.0f64;
                    for ch in 0..d {
                        let feat = four_tap_reference(f2, ch, sx, sy) as f64;
                        acc += f1.get(ch, y, x) as f64 * feat;
                    }
                    let channel = ((oy + r) as usize) * span + (ox + r) as usize;
                    out.set(channel, y, x, acc as f32);
                }
            }
        }
    }
    out
}

/// Gated recurrent update computed with scalar loops in f64.
pub fn conv_gru_reference(hidden: &Tensor, x: &Tensor, gru: &GruParams) -> Result<Tensor> {
    let joint = crate::tensor::concat_channels(&[hidden, x])?;
    let z_pre = conv2d_reference(&joint, &gru.update_gate)?;
    let r_pre = conv2d_reference(&joint, &gru.reset_gate)?;
    let (hc, h, w) = hidden.shape();
    let mut gated = hidden.clone();
    for c in 0..hc {
        for yy in 0..h {
            for xx in 0..w {
                let r = 1.0 / (1.0 + (-(r_pre.get(c, yy, xx) as f64)).exp());
                gated.set(c, yy, xx, (r * hidden.get(c, yy, xx) as f64) as f32);
            }
        }
    }
    let joint_q = crate::tensor::concat_channels(&[&gated, x])?;
    let q_pre = conv2d_reference(&joint_q, &gru.candidate)?;
    let mut out = Tensor::zeros(hc, h, w);
    for c in 0..hc {
        for yy in 0..h {
            for xx in 0..w {
                let z = 1.0 / (1.0 + (-(z_pre.get(c, yy, xx) as f64)).exp());
                let q = (q_pre.get(c, yy, xx) as f64).tanh();
                let hv = hidden.get(c, yy, xx) as f64;
                out.set(c, yy, xx, ((1.0 - z) * hv + z * q) as f32);
            }
        }
    }
    Ok(out)
}

/// Mean endpoint error by two plain loops.
pub fn epe_reference(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> f64 {
    let mut total = 0.0f64;
    let mut count = 0u64;
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            if let Some(m) = mask {
                if !m[y * pred.width() + x] {
                    continue;
                }
            }
            let (pu, pv) = pred.get(y, x);
            let (gu, gv) = gt.get(y, x);
            let du = (pu - gu) as f64;
            let dv = (pv - gv) as f64;
            total += (du * du + dv * dv).sqrt();
            count += 1;
        }
    }
    total / count as f64
}

/// Outlier percentage by two plain loops: error > 3 px and > 5% of the
/// ground-truth magnitude, both strict.
pub fn f1_all_reference(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> f64 {
    let mut outliers = 0u64;
    let mut count = 0u64;
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            if let Some(m) = mask {
                if !m[y * pred.width() + x] {
                    continue;
                }
            }
            let (pu, pv) = pred.get(y, x);
            let (gu, gv) = gt.get(y, x);
            let du = (pu - gu) as f64;
            let dv = (pv - gv) as f64;
            let err = (du * du + dv * dv).sqrt();
            let mag = ((gu as f64).powi(2) + (gv as f64).powi(2)).sqrt();
            if err > 3.0 && err > 0.05 * mag {
                outliers += 1;
            }
            count += 1;
        }
    }
    100.0 * outliers as f64 / count as f64
}

/// Scalar bilinear resize with half-pixel centers and border clamping.
pub fn resize_bilinear_reference(input: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = input.shape();
    let mut out = Tensor::zeros(c, out_h, out_w);
    for ch in 0..c {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let sy = (oy as f64 + 0.5) * h as f64 / out_h as f64 - 0.5;
                let sx = (ox as f64 + 0.5) * w as f64 / out_w as f64 - 0.5;
                let y0 = sy.floor();
                let x0 = sx.floor();
                let fy = sy - y0;
                let fx = sx - x0;
                let clamp_y = |v: f64| (v.max(0.0) as usize).min(h - 1);
                let clamp_x = |v: f64| (v.max(0.0) as usize).min(w - 1);
                let v = (1.0 - fy) * (1.0 - fx) * input.get(ch, clamp_y(y0), clamp_x(x0)) as f64
                    + (1.0 - fy) * fx * input.get(ch, clamp_y(y0), clamp_x(x0 + 1.0)) as f64
                    + fy * (1.0 - fx) * input.get(ch, clamp_y(y0 + 1.0), clamp_x(x0)) as f64
                    + fy * fx * input.get(ch, clamp_y(y0 + 1.0), clamp_x(x0 + 1.0)) as f64;
                out.set(ch, oy, ox, v as f32);
            }
        }
    }
    out
}
