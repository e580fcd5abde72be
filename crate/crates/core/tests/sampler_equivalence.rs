//! Property tests for the two sub-pixel sampling routes.

use corrflow_core::sampling::{bilinear_shift, grid_sample_bilinear, shifted_grid_coords, Shift2D};
use corrflow_core::tensor::Tensor;
use proptest::prelude::*;

fn tensor_strategy(max_c: usize, max_h: usize, max_w: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_c, 2..=max_h, 2..=max_w).prop_flat_map(|(c, h, w)| {
        proptest::collection::vec(-1.0f32..1.0, c * h * w)
            .prop_map(move |data| Tensor::new(c, h, w, data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn shift_equals_grid_sample_on_offset_grid(
        t in tensor_strategy(8, 16, 16),
        dx in 0.0f64..1.0,
        dy in 0.0f64..1.0,
    ) {
        let shift = Shift2D::new(dx, dy).unwrap();
        let blended = bilinear_shift(&t, shift).unwrap();
        let coords = shifted_grid_coords(t.height(), t.width(), shift);
        let sampled =
            grid_sample_bilinear(&t, &coords, t.height() - 1, t.width() - 1).unwrap();
        for (a, b) in blended.data().iter().zip(sampled.data()) {
            prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn shift_is_linear_in_the_input(
        t in tensor_strategy(4, 10, 10),
        scale in -2.0f32..2.0,
        dx in 0.0f64..1.0,
        dy in 0.0f64..1.0,
    ) {
        let shift = Shift2D::new(dx, dy).unwrap();
        let scaled = t.map(|v| scale * v);
        let a = bilinear_shift(&scaled, shift).unwrap();
        let b = bilinear_shift(&t, shift).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            let want = scale * y;
            let tol = 1e-5 * want.abs().max(1.0);
            prop_assert!((x - want).abs() < tol);
        }
    }

    #[test]
    fn grid_sample_far_outside_is_zero(
        t in tensor_strategy(3, 8, 8),
        x in 100.0f64..1000.0,
        y in 100.0f64..1000.0,
    ) {
        let out = grid_sample_bilinear(&t, &[(x, y), (-x, -y)], 1, 2).unwrap();
        prop_assert!(out.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn output_loses_exactly_one_sample_per_axis() {
    let t = Tensor::zeros(2, 7, 9);
    let out = bilinear_shift(&t, Shift2D::ZERO).unwrap();
    assert_eq!(out.shape(), (2, 6, 8));
}
