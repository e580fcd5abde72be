//! Flow evaluation metrics.

use crate::error::{Error, Result};
use crate::flow::FlowField;

fn check_dims(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<()> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::SpatialMismatch {
            context: "metric inputs",
            expected_h: gt.height(),
            expected_w: gt.width(),
            got_h: pred.height(),
            got_w: pred.width(),
        });
    }
    if let Some(m) = mask {
        if m.len() != pred.len() {
            return Err(Error::InvalidValue {
                name: "metric mask",
                message: format!("expected {} entries, got {}", pred.len(), m.len()),
            });
        }
        if !m.iter().any(|&v| v) {
            return Err(Error::EmptyMask);
        }
    } else if pred.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// Mean endpoint error: average Euclidean norm of the per-pixel flow
/// difference over valid pixels.
pub fn epe(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(pred, gt, mask)?;
    let mut total = 0.0f64;
    let mut count = 0u64;
    for i in 0..pred.len() {
        if let Some(m) = mask {
            if !m[i] {
                continue;
            }
        }
        let du = (pred.data()[2 * i] - gt.data()[2 * i]) as f64;
        let dv = (pred.data()[2 * i + 1] - gt.data()[2 * i + 1]) as f64;
        total += (du * du + dv * dv).sqrt();
        count += 1;
    }
    Ok(total / count as f64)
}

/// Percentage of valid pixels whose endpoint error exceeds 3 px AND exceeds
/// 5% of the ground-truth magnitude (both strict inequalities).
pub fn f1_all(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(pred, gt, mask)?;
    let mut outliers = 0u64;
    let mut count = 0u64;
    for i in 0..pred.len() {
        if let Some(m) = mask {
            if !m[i] {
                continue;
            }
        }
        let gu = gt.data()[2 * i] as f64;
        let gv = gt.data()[2 * i + 1] as f64;
        let du = pred.data()[2 * i] as f64 - gu;
        let dv = pred.data()[2 * i + 1] as f64 - gv;
        let err = (du * du + dv * dv).sqrt();
        if err > 3.0 && err > 0.05 * (gu * gu + gv * gv).sqrt() {
            outliers += 1;
        }
        count += 1;
    }
    Ok(100.0 * outliers as f64 / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::SplitMix64;

    fn random_flow(rng: &mut SplitMix64, h: usize, w: usize) -> FlowField {
        let mut f = FlowField::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                f.set(
                    y,
                    x,
                    rng.next_f32_in(-10.0, 10.0),
                    rng.next_f32_in(-10.0, 10.0),
                );
            }
        }
        f
    }

    #[test]
    fn epe_of_equal_fields_is_zero() {
        let mut rng = SplitMix64::new(1);
        let f = random_flow(&mut rng, 5, 7);
        assert_eq!(epe(&f, &f, None).unwrap(), 0.0);
    }

    #[test]
    fn constant_three_four_error_gives_five() {
        // integer-valued truth keeps the +(3, 4) error exactly representable
        let mut rng = SplitMix64::new(2);
        let mut gt = FlowField::zeros(6, 4);
        for v in gt.data_mut() {
            *v = rng.next_usize(21) as f32 - 10.0;
        }
        let mut pred = gt.clone();
        for i in 0..pred.len() {
            pred.data_mut()[2 * i] += 3.0;
            pred.data_mut()[2 * i + 1] += 4.0;
        }
        assert_eq!(epe(&pred, &gt, None).unwrap(), 5.0);
    }

    #[test]
    fn epe_matches_loop_oracle() {
        let mut rng = SplitMix64::new(3);
        let pred = random_flow(&mut rng, 7, 5);
        let gt = random_flow(&mut rng, 7, 5);
        let got = epe(&pred, &gt, None).unwrap();
        let want = crate::oracle::epe_reference(&pred, &gt, None);
        assert!((got - want).abs() < 1e-6);
    }

    #[test]
    fn epe_is_translation_equivariant_in_the_error() {
        let mut rng = SplitMix64::new(4);
        let pred = random_flow(&mut rng, 5, 5);
        let gt = random_flow(&mut rng, 5, 5);
        let base = epe(&pred, &gt, None).unwrap();
        let shift = |f: &FlowField| {
            let mut s = f.clone();
            for v in s.data_mut() {
                *v += 2.5;
            }
            s
        };
        let shifted = epe(&shift(&pred), &shift(&gt), None).unwrap();
        assert!((base - shifted).abs() < 1e-5);
    }

    #[test]
    fn f1_all_identity_and_uniform_error() {
        let gt = FlowField::constant(4, 4, 1.0, 0.0);
        assert_eq!(f1_all(&gt, &gt, None).unwrap(), 0.0);

        // uniform 10 px error over unit-magnitude truth: both thresholds hit
        let pred = FlowField::constant(4, 4, 11.0, 0.0);
        assert_eq!(f1_all(&pred, &gt, None).unwrap(), 100.0);
    }

    #[test]
    fn f1_all_boundary_is_strict() {
        // error exactly 3.0 px with |gt| = 10: inlier under strict comparison
        let gt = FlowField::constant(3, 3, 10.0, 0.0);
        let pred = FlowField::constant(3, 3, 13.0, 0.0);
        assert_eq!(f1_all(&pred, &gt, None).unwrap(), 0.0);
        assert_eq!(crate::oracle::f1_all_reference(&pred, &gt, None), 0.0);

        // nudge past the boundary: outlier
        let pred = FlowField::constant(3, 3, 13.001, 0.0);
        assert_eq!(f1_all(&pred, &gt, None).unwrap(), 100.0);
    }

    #[test]
    fn masked_metrics_skip_invalid_pixels() {
        let gt = FlowField::constant(2, 2, 0.0, 0.0);
        let mut pred = gt.clone();
        pred.set(0, 0, 30.0, 0.0);
        let mask = vec![false, true, true, true];
        assert_eq!(epe(&pred, &gt, Some(&mask)).unwrap(), 0.0);
        assert_eq!(f1_all(&pred, &gt, Some(&mask)).unwrap(), 0.0);

        let empty = vec![false; 4];
        assert!(matches!(
            epe(&pred, &gt, Some(&empty)).unwrap_err(),
            Error::EmptyMask
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = FlowField::zeros(2, 2);
        let b = FlowField::zeros(2, 3);
        assert!(epe(&a, &b, None).is_err());
    }
}
