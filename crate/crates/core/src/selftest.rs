//! Built-in verification suites: every numeric component checked against its
//! independent reference at desk scale, with fixed seeds.

use crate::budget::{cost_model, peak_memory, PipelineConfig};
use crate::corrvol::{
    build_all_pairs, build_pyramid, decompose_flow, jit_lookup, lookup_precomputed, LookupWindow,
};
use crate::flow::FlowField;
use crate::init::SplitMix64;
use crate::metrics::{epe, f1_all};
use crate::oracle;
use crate::refine::{conv_gru_step, make_schedule, upsample_flow, GruParams, ScheduleMode};
use crate::sampling::{bilinear_shift, grid_sample_bilinear, shifted_grid_coords, Shift2D};
use crate::tensor::{avg_pool2d, conv2d, ConvParams, Tensor};

/// Result of one suite.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// All suite results.
#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

fn random_tensor(rng: &mut SplitMix64, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| rng.next_f32_in(-1.0, 1.0))
}

fn random_flow(rng: &mut SplitMix64, h: usize, w: usize, span: f32) -> FlowField {
    let mut flow = FlowField::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            flow.set(
                y,
                x,
                rng.next_f32_in(-span, span),
                rng.next_f32_in(-span, span),
            );
        }
    }
    flow
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f32, f32::max)
}

type SuiteFn = fn() -> std::result::Result<String, String>;

fn suite_convolution() -> std::result::Result<String, String> {
    let mut rng = SplitMix64::new(101);
    let mut worst = 0.0f32;
    for _ in 0..8 {
        let input = random_tensor(&mut rng, 4, 8, 8);
        let weights: Vec<f32> = (0..6 * 4 * 9).map(|_| rng.next_f32_in(-1.0, 1.0)).collect();
        let bias: Vec<f32> = (0..6).map(|_| rng.next_f32_in(-1.0, 1.0)).collect();
        let params = ConvParams::new(6, 4, 3, 3, weights, bias, 1, 1).map_err(|e| e.to_string())?;
        let got = conv2d(&input, &params).map_err(|e| e.to_string())?;
        let want = oracle::conv2d_reference(&input, &params).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(got.data(), want.data()));
    }
    if worst < 1e-5 {
        Ok(format!("8 random cases, max |diff| {worst:.2e}"))
    } else {
        Err(format!("naive-loop disagreement {worst:.2e}"))
    }
}

fn suite_pooling() -> std::result::Result<String, String> {
    let mut rng = SplitMix64::new(102);
    let t = random_tensor(&mut rng, 8, 16, 16);
    let got = avg_pool2d(&t, 2).map_err(|e| e.to_string())?;
    let want = oracle::block_mean_reference(&t, 2).map_err(|e| e.to_string())?;
    if got != want {
        return Err("block-mean mismatch".into());
    }
    let twice = avg_pool2d(&avg_pool2d(&t, 2).unwrap(), 2).unwrap();
    let once = avg_pool2d(&t, 4).unwrap();
    let diff = max_abs_diff(twice.data(), once.data());
    if diff < 1e-6 {
        Ok(format!(
            "exact block means; nested windows agree to {diff:.2e}"
        ))
    } else {
        Err(format!("nested pooling diverges by {diff:.2e}"))
    }
}

fn suite_sampler_equivalence() -> std::result::Result<String, String> {
    let mut rng = SplitMix64::new(103);
    let mut worst = 0.0f32;
    for _ in 0..200 {
        let c = 1 + rng.next_usize(8);
        let h = 2 + rng.next_usize(15);
        let w = 2 + rng.next_usize(15);
        let t = random_tensor(&mut rng, c, h, w);
        let shift =
            Shift2D::new(rng.next_f64_unit(), rng.next_f64_unit()).map_err(|e| e.to_string())?;
        let a = bilinear_shift(&t, shift).map_err(|e| e.to_string())?;
        let coords = shifted_grid_coords(h, w, shift);
        let b = grid_sample_bilinear(&t, &coords, h - 1, w - 1).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(a.data(), b.data()));
    }
    if worst < 1e-6 {
        Ok(format!("200 random cases, max |diff| {worst:.2e}"))
    } else {
        Err(format!("sampler routes disagree by {worst:.2e}"))
    }
}

fn suite_decompose_round_trip() -> std::result::Result<String, String> {
    let mut rng = SplitMix64::new(104);
    for _ in 0..1000 {
        let x = rng.next_f32_in(-100.0, 100.0);
        let ((ix, _), shift) = decompose_flow(x, 0.0);
        if (ix as f64 + shift.dx()) as f32 != x {
            return Err(format!("round trip failed for {x}"));
        }
        if !(0.0..1.0).contains(&shift.dx()) {
            return Err(format!("residue out of range for {x}"));
        }
    }
    Ok("1000 values recompose bit-exactly".into())
}

fn suite_jit_equivalence() -> std::result::Result<String, String> {
    let mut rng = SplitMix64::new(105);
    let mut worst = 0.0f32;
    for case in 0..40 {
        let d = 1 + rng.next_usize(32);
        let h = 2 + rng.next_usize(15);
        let w = 2 + rng.next_usize(15);
        let r = 1 + rng.next_usize(3);
        let f1 = random_tensor(&mut rng, d, h, w);
        let f2 = random_tensor(&mut rng, d, h, w);
        let span = if case % 3 == 0 {
            3.0 * w as f32
        } else {
            0.8 * w as f32
        };
        let flow = random_flow(&mut rng, h, w, span);
        let window = LookupWindow::new(r).map_err(|e| e.to_string())?;
        let volume = build_all_pairs(&f1, &f2).map_err(|e| e.to_string())?;
        let want = lookup_precomputed(&volume, &flow, window).map_err(|e| e.to_string())?;
        let mut reference: Option<Tensor> = None;
        for n_slice in [1, 2, 7, h * w] {
            if n_slice > h * w {
                continue;
            }
            let (got, _) =
                jit_lookup(&f1, &f2, &flow, window, n_slice).map_err(|e| e.to_string())?;
            worst = worst.max(max_abs_diff(got.data(), want.data()));
            match &reference {
                None => reference = Some(got),
                Some(first) => {
                    if first != &got {
                        return Err(format!("tiling changed the output at n_slice {n_slice}"));
                    }
                }
            }
        }
    }
    if worst < 1e-5 {
        Ok(format!(
            "40 cases x 4 tilings, max |diff| {worst:.2e}, tiling bit-exact"
        ))
    } else {
        Err(format!("just-in-time route off by {worst:.2e}"))
    }
}

fn suite_memory_fixtures() -> std::result::Result<String, String> {
    let fixture = |downsample: usize, n_slice: usize| PipelineConfig {
        height: 440,
        width: 1024,
        downsample,
        feature_dim: 128,
        radius: 3,
        iterations: 12,
        cv_levels: 1,
        n_slice,
        bytes_per_element: 1,
        mode: ScheduleMode::SingleLevel,
    };
    let checks = [
        (
            peak_memory(&fixture(16, 1)).untiled_peak_bytes,
            14_680_064u64,
        ),
        (peak_memory(&fixture(8, 1)).untiled_peak_bytes, 57_671_680),
        (peak_memory(&fixture(16, 56)).tiled_peak_bytes, 262_144),
    ];
    for (got, want) in checks {
        if got != want {
            return Err(format!("expected {want} bytes, accountant says {got}"));
        }
    }
    Ok("14,680,064 / 57,671,680 / 262,144 bytes reproduced exactly".into())
}

fn suite_engine_model_agreement() -> std::result::Result<String, String> {
    let mut rng = SplitMix64::new(106);
    let mut checked = 0;
    for _ in 0..20 {
        let d = 1 + rng.next_usize(24);
        let h = 2 + rng.next_usize(9);
        let w = 2 + rng.next_usize(9);
        let r = 1 + rng.next_usize(3);
        let k = if rng.next_usize(2) == 0 { 8 } else { 16 };
        let n_slice = 1 + rng.next_usize(h * w);
        let f1 = random_tensor(&mut rng, d, h, w);
        let f2 = random_tensor(&mut rng, d, h, w);
        let flow = random_flow(&mut rng, h, w, 2.0);
        let window = LookupWindow::new(r).map_err(|e| e.to_string())?;
        let (_, trace) = jit_lookup(&f1, &f2, &flow, window, n_slice).map_err(|e| e.to_string())?;
        for bytes_per_element in [1usize, 4] {
            let config = PipelineConfig {
                height: h * k,
                width: w * k,
                downsample: k,
                feature_dim: d,
                radius: r,
                iterations: 1,
                cv_levels: 1,
                n_slice,
                bytes_per_element,
                mode: ScheduleMode::SingleLevel,
            };
            let predicted = peak_memory(&config).tiled_peak_bytes;
            let measured = trace.peak_bytes(bytes_per_element);
            if predicted != measured {
                return Err(format!(
                    "engine {measured} B vs model {predicted} B at {h}x{w} D={d} r={r} n_slice={n_slice} b={bytes_per_element}"
                ));
            }
        }
        checked += 1;
    }
    Ok(format!(
        "{checked} swept configs agree exactly (b = 1 and 4)"
    ))
}

fn suite_cost_proportionality() -> std::result::Result<String, String> {
    let base = PipelineConfig {
        height: 448,
        width: 1024,
        downsample: 16,
        feature_dim: 64,
        radius: 3,
        iterations: 4,
        cv_levels: 1,
        n_slice: 56,
        bytes_per_element: 1,
        mode: ScheduleMode::SingleLevel,
    };
    let reference = cost_model(&base);

    let mut doubled_iters = base;
    doubled_iters.iterations = 8;
    if cost_model(&doubled_iters).lookup_macs_total != 2 * reference.lookup_macs_total {
        return Err("iteration doubling is not exactly x2".into());
    }
    let mut four_levels = base;
    four_levels.cv_levels = 4;
    if cost_model(&four_levels).lookup_macs_total != 4 * reference.lookup_macs_total {
        return Err("level quadrupling is not exactly x4".into());
    }
    let mut wide = base;
    wide.feature_dim = 128;
    if cost_model(&wide).lookup_macs_total != 2 * reference.lookup_macs_total {
        return Err("feature doubling is not exactly x2".into());
    }
    let mut fine = base;
    fine.downsample = 8;
    if cost_model(&fine).lookup_macs_total != 4 * reference.lookup_macs_total {
        return Err("resolution halving is not exactly x4".into());
    }
    Ok("lookup totals scale x2 (N), x4 (L), x2 (D), x4 (K halved), all exact".into())
}

fn suite_schedule_shapes() -> std::result::Result<String, String> {
    let c2f = make_schedule(12, ScheduleMode::CoarseToFine, 3);
    if c2f.levels() != vec![2, 2, 2, 2, 1, 1, 1, 1, 0, 0, 0, 0] {
        return Err(format!("12-iteration split came out as {:?}", c2f.levels()));
    }
    let short = make_schedule(4, ScheduleMode::CoarseToFine, 3);
    if short.levels() != vec![2, 1, 0, 0] {
        return Err(format!(
            "4-iteration split came out as {:?}",
            short.levels()
        ));
    }
    let single = make_schedule(12, ScheduleMode::SingleLevel, 1);
    if single.len() != 12 || !single.entries().iter().all(|e| e.level == 0 && e.bank == 0) {
        return Err("single-level schedule malformed".into());
    }
    Ok("split and bank assignments match the even-split rule".into())
}

fn suite_gru_oracle() -> std::result::Result<String, String> {
    let mut rng = SplitMix64::new(107);
    let hidden = random_tensor(&mut rng, 4, 3, 3).map(|v| 0.9 * v);
    let x = random_tensor(&mut rng, 5, 3, 3);
    let gru = GruParams {
        update_gate: crate::init::seeded_conv(9, "st.gru.update", 4, 9, 3, 3, 1, 1),
        reset_gate: crate::init::seeded_conv(9, "st.gru.reset", 4, 9, 3, 3, 1, 1),
        candidate: crate::init::seeded_conv(9, "st.gru.candidate", 4, 9, 3, 3, 1, 1),
    };
    let got = conv_gru_step(&hidden, &x, &gru).map_err(|e| e.to_string())?;
    let want = oracle::conv_gru_reference(&hidden, &x, &gru).map_err(|e| e.to_string())?;
    let diff = max_abs_diff(got.data(), want.data());
    if diff >= 1e-6 {
        return Err(format!("gate equations off by {diff:.2e}"));
    }
    let zero = GruParams {
        update_gate: ConvParams::zeros(4, 9, 3, 3, 1, 1),
        reset_gate: ConvParams::zeros(4, 9, 3, 3, 1, 1),
        candidate: ConvParams::zeros(4, 9, 3, 3, 1, 1),
    };
    let halved = conv_gru_step(&hidden, &x, &zero).map_err(|e| e.to_string())?;
    for i in 0..halved.len() {
        if (halved.data()[i] - 0.5 * hidden.data()[i]).abs() > 1e-7 {
            return Err("zero-parameter closed form violated".into());
        }
    }
    Ok(format!(
        "scalar oracle within {diff:.2e}; closed form at zero params holds"
    ))
}

fn suite_metrics() -> std::result::Result<String, String> {
    let mut rng = SplitMix64::new(108);
    let mut gt = FlowField::zeros(7, 5);
    for v in gt.data_mut() {
        // integer truth keeps the +(3, 4) error exactly representable
        *v = rng.next_usize(21) as f32 - 10.0;
    }
    let mut pred = gt.clone();
    for i in 0..pred.len() {
        pred.data_mut()[2 * i] += 3.0;
        pred.data_mut()[2 * i + 1] += 4.0;
    }
    if epe(&pred, &gt, None).map_err(|e| e.to_string())? != 5.0 {
        return Err("constant (3,4) error does not give 5.0".into());
    }
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = random_flow(&mut rng, 6, 6, 10.0);
        let b = random_flow(&mut rng, 6, 6, 10.0);
        let d1 = (epe(&a, &b, None).unwrap() - oracle::epe_reference(&a, &b, None)).abs();
        let d2 = (f1_all(&a, &b, None).unwrap() - oracle::f1_all_reference(&a, &b, None)).abs();
        worst = worst.max(d1).max(d2);
    }
    if worst < 1e-6 {
        Ok(format!(
            "identities hold; 100 random fields within {worst:.2e} of loop oracles"
        ))
    } else {
        Err(format!("metric oracles diverge by {worst:.2e}"))
    }
}

fn suite_resize_oracle() -> std::result::Result<String, String> {
    let mut rng = SplitMix64::new(109);
    let flow = random_flow(&mut rng, 5, 6, 3.0);
    let up = upsample_flow(&flow, 2);
    let want = oracle::resize_bilinear_reference(&flow.to_tensor(), 10, 12);
    let mut worst = 0.0f32;
    for y in 0..10 {
        for x in 0..12 {
            let (u, v) = up.get(y, x);
            worst = worst.max((u - 2.0 * want.get(0, y, x)).abs());
            worst = worst.max((v - 2.0 * want.get(1, y, x)).abs());
        }
    }
    if worst < 1e-5 {
        Ok(format!(
            "2x upsample within {worst:.2e} of the independent resize"
        ))
    } else {
        Err(format!("upsample off by {worst:.2e}"))
    }
}

fn suite_pyramid_correlation() -> std::result::Result<String, String> {
    let mut rng = SplitMix64::new(110);
    let f1 = random_tensor(&mut rng, 5, 6, 8);
    let f2 = random_tensor(&mut rng, 5, 6, 8);
    let p1 = build_pyramid(&f1, 2).map_err(|e| e.to_string())?;
    let p2 = build_pyramid(&f2, 2).map_err(|e| e.to_string())?;
    let via_pyramid = build_all_pairs(p1.level(1), p2.level(1)).map_err(|e| e.to_string())?;
    let a1 = oracle::block_mean_reference(&f1, 2).unwrap();
    let a2 = oracle::block_mean_reference(&f2, 2).unwrap();
    let via_oracle = oracle::all_pairs_reference(&a1, &a2);
    if via_pyramid == via_oracle {
        Ok("pooled-feature correlation equals block-average-then-correlate exactly".into())
    } else {
        Err("pyramid correlation mismatch".into())
    }
}

/// Run every suite; failures carry a one-line diagnostic.
pub fn run_selftest() -> SelftestReport {
    let suites: [(&'static str, SuiteFn); 12] = [
        ("convolution vs naive loops", suite_convolution),
        ("average pooling vs block means", suite_pooling),
        ("bilinear shift vs grid sampling", suite_sampler_equivalence),
        ("flow decomposition round trip", suite_decompose_round_trip),
        (
            "just-in-time lookup vs all-pairs volume",
            suite_jit_equivalence,
        ),
        ("peak-memory fixtures", suite_memory_fixtures),
        ("engine vs analytic model", suite_engine_model_agreement),
        ("cost-model proportionality", suite_cost_proportionality),
        ("lookup schedules", suite_schedule_shapes),
        ("recurrent update vs scalar oracle", suite_gru_oracle),
        ("metrics vs loop oracles", suite_metrics),
        ("flow upsampling vs independent resize", suite_resize_oracle),
    ];
    let mut results = Vec::with_capacity(suites.len() + 1);
    for (name, run) in suites {
        let outcome = run();
        results.push(SuiteResult {
            name,
            passed: outcome.is_ok(),
            detail: match outcome {
                Ok(detail) => detail,
                Err(detail) => detail,
            },
        });
    }
    let pyramid = suite_pyramid_correlation();
    results.push(SuiteResult {
        name: "pyramid correlation",
        passed: pyramid.is_ok(),
        detail: match pyramid {
            Ok(d) => d,
            Err(d) => d,
        },
    });
    SelftestReport { suites: results }
}
