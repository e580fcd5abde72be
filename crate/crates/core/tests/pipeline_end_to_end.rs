//! Cross-module pipeline behavior at desk scale.

use corrflow_core::budget::peak_memory;
use corrflow_core::init::SplitMix64;
use corrflow_core::io::config::RunConfig;
use corrflow_core::io::flo::{read_flo, write_flo};
use corrflow_core::io::weights::{load_model_into, save_model};
use corrflow_core::metrics::epe;
use corrflow_core::pipeline::{gen_synthetic, model_layout, Pipeline, WeightsOrigin};
use corrflow_core::refine::ScheduleMode;
use corrflow_core::tensor::Tensor;

fn small_config() -> RunConfig {
    RunConfig {
        feature_dim: 16,
        iterations: 4,
        n_slice: 6,
        seed: 11,
        ..RunConfig::default()
    }
}

fn random_image(seed: u64, h: usize, w: usize) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    Tensor::from_fn(3, h, w, |_, _, _| rng.next_f32_in(0.0, 1.0))
}

#[test]
fn flo_round_trip_through_inference() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.flo");
    let pipeline = Pipeline::from_config(small_config()).unwrap();
    let img1 = random_image(1, 64, 96);
    let img2 = random_image(2, 64, 96);
    let out = pipeline.infer(&img1, &img2).unwrap();
    write_flo(&path, &out.flow).unwrap();
    let back = read_flo(&path).unwrap();
    assert_eq!(back, out.flow);
    assert_eq!(back.height(), 64);
    assert_eq!(back.width(), 96);
}

#[test]
fn engine_trace_matches_accountant_prediction() {
    let config = small_config();
    let pipeline = Pipeline::from_config(config.clone()).unwrap();
    let img1 = random_image(3, 64, 96);
    let out = pipeline.infer(&img1, &img1).unwrap();
    let model = peak_memory(&config.pipeline_config(64, 96));
    assert_eq!(out.predicted_peak_bytes, model.tiled_peak_bytes);
}

#[test]
fn container_weights_reproduce_seeded_inference() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.cfw");
    let config = small_config();

    let seeded = Pipeline::from_config(config.clone()).unwrap();
    assert_eq!(seeded.origin, WeightsOrigin::Seeded(11));
    save_model(&path, &seeded.weights).unwrap();

    let mut loaded_config = config.clone();
    loaded_config.seed = 999; // seed must be irrelevant once a container loads
    loaded_config.weights = Some(path.clone());
    let loaded = Pipeline::from_config(loaded_config).unwrap();
    assert_eq!(loaded.origin, WeightsOrigin::Container);

    let img1 = random_image(4, 64, 64);
    let img2 = random_image(5, 64, 64);
    let a = seeded.infer(&img1, &img2).unwrap();
    let b = loaded.infer(&img1, &img2).unwrap();
    assert_eq!(a.flow, b.flow);
}

#[test]
fn mismatched_container_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.cfw");
    let narrow = Pipeline::from_config(small_config()).unwrap();
    save_model(&path, &narrow.weights).unwrap();

    let mut wide = small_config();
    wide.feature_dim = 32;
    let layout = model_layout(&wide);
    let mut skeleton = corrflow_core::encoder::ModelWeights::seeded(1, layout);
    assert!(load_model_into(&path, &mut skeleton).is_err());
}

#[test]
fn synthetic_loop_reaches_zero_epe_on_ground_truth() {
    let img = random_image(6, 48, 48);
    let (warped, gt) = gen_synthetic(&img, 2.5, -1.0).unwrap();
    assert_eq!(warped.shape(), img.shape());
    assert_eq!(epe(&gt, &gt, None).unwrap(), 0.0);
}

#[test]
fn single_level_mode_runs_with_one_bank() {
    let config = RunConfig {
        mode: ScheduleMode::SingleLevel,
        feature_dim: 16,
        iterations: 3,
        n_slice: 2,
        ..RunConfig::default()
    };
    let pipeline = Pipeline::from_config(config).unwrap();
    assert_eq!(pipeline.weights.banks.len(), 1);
    let img = random_image(7, 32, 32);
    let out = pipeline.infer(&img, &img).unwrap();
    assert_eq!(out.flow.height(), 32);
}
