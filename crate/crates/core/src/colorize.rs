//! Flow visualization with the standard optical-flow color wheel.

use crate::flow::FlowField;
use crate::tensor::Tensor;

// Hue sector lengths of the classic 55-entry wheel.
const RY: usize = 15;
const YG: usize = 6;
const GC: usize = 4;
const CB: usize = 11;
const BM: usize = 13;
const MR: usize = 6;
const NCOLS: usize = RY + YG + GC + CB + BM + MR;

fn color_wheel() -> Vec<[f64; 3]> {
    let mut wheel = Vec::with_capacity(NCOLS);
    for i in 0..RY {
        wheel.push([1.0, i as f64 / RY as f64, 0.0]);
    }
    for i in 0..YG {
        wheel.push([1.0 - i as f64 / YG as f64, 1.0, 0.0]);
    }
    for i in 0..GC {
        wheel.push([0.0, 1.0, i as f64 / GC as f64]);
    }
    for i in 0..CB {
        wheel.push([0.0, 1.0 - i as f64 / CB as f64, 1.0]);
    }
    for i in 0..BM {
        wheel.push([i as f64 / BM as f64, 0.0, 1.0]);
    }
    for i in 0..MR {
        wheel.push([1.0, 0.0, 1.0 - i as f64 / MR as f64]);
    }
    wheel
}

/// Render a flow field as a 3-channel image in [0, 1].
///
/// Hue encodes direction, saturation encodes magnitude relative to
/// `max_magnitude` (the observed maximum when not given); zero flow maps to
/// white.
pub fn colorize_flow(flow: &FlowField, max_magnitude: Option<f32>) -> Tensor {
    let wheel = color_wheel();
    let max_mag = match max_magnitude {
        Some(m) if m > 0.0 => m as f64,
        _ => {
            let observed = flow.max_magnitude() as f64;
            if observed > 0.0 {
                observed
            } else {
                1.0
            }
        }
    };
    let (h, w) = (flow.height(), flow.width());
    let mut out = Tensor::zeros(3, h, w);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(y, x);
            let nu = u as f64 / max_mag;
            let nv = v as f64 / max_mag;
            let rad = (nu * nu + nv * nv).sqrt();
            let angle = (-nv).atan2(-nu) / std::f64::consts::PI;
            let fk = (angle + 1.0) / 2.0 * (NCOLS as f64 - 1.0);
            let k0 = (fk.floor() as usize).min(NCOLS - 1);
            let k1 = (k0 + 1) % NCOLS;
            let f = fk - k0 as f64;
            for (c, (&c0, &c1)) in wheel[k0].iter().zip(wheel[k1].iter()).enumerate() {
                let col = (1.0 - f) * c0 + f * c1;
                let col = if rad <= 1.0 {
                    // desaturate toward white as magnitude falls
                    1.0 - rad * (1.0 - col)
                } else {
                    col * 0.75
                };
                out.set(c, y, x, col as f32);
            }
        }
    }
    out
}
