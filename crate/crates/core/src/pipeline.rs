//! End-to-end pipeline assembly: image preparation and padding, the encoder
//! pass, the refinement loop, and final upsampling back to input resolution.

use crate::budget::peak_memory;
use crate::corrvol::{build_pyramid, FeaturePyramid, LookupWindow};
use crate::encoder::{
    encoder_forward, split_context, to_three_channels, ModelLayout, ModelWeights,
};
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::io::config::RunConfig;
use crate::refine::{
    make_schedule_with_revisits, run_refinement, upsample_flow, ContextFeatures, RefinementResult,
};
use crate::sampling::grid_sample_bilinear;
use crate::tensor::{pad_right_bottom, Tensor};

/// Where the weights came from; untrained seeded weights produce flow with
/// no predictive value, and callers are expected to say so.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightsOrigin {
    Seeded(u64),
    Container,
}

/// A configured pipeline instance.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: RunConfig,
    pub weights: ModelWeights,
    pub origin: WeightsOrigin,
}

/// Encoder outputs for one image pair.
#[derive(Debug, Clone)]
pub struct EncodedInputs {
    pub f1_pyramid: FeaturePyramid,
    pub f2_pyramid: FeaturePyramid,
    pub context: ContextFeatures,
    /// Input dims before pad-up.
    pub original_dims: (usize, usize),
    /// Dims after pad-up.
    pub padded_dims: (usize, usize),
}

/// A full inference run.
#[derive(Debug, Clone)]
pub struct InferenceOutput {
    /// Flow at input resolution, cropped back to the pre-padding dims.
    pub flow: FlowField,
    /// Raw refinement bookkeeping at lookup resolution.
    pub refinement: RefinementResult,
    /// Predicted tiled peak bytes of the lookup working set.
    pub predicted_peak_bytes: u64,
}

impl Pipeline {
    /// Build a pipeline with deterministic seeded weights, or weights loaded
    /// from the configured container.
    pub fn from_config(config: RunConfig) -> Result<Pipeline> {
        config.validate()?;
        let layout = model_layout(&config);
        let mut weights = ModelWeights::seeded(config.seed, layout);
        let origin = match &config.weights {
            Some(path) => {
                crate::io::weights::load_model_into(path, &mut weights)?;
                WeightsOrigin::Container
            }
            None => WeightsOrigin::Seeded(config.seed),
        };
        Ok(Pipeline {
            config,
            weights,
            origin,
        })
    }

    /// Pad, encode and pyramid both images; split the context features.
    pub fn encode(&self, img1: &Tensor, img2: &Tensor) -> Result<EncodedInputs> {
        if img1.height() != img2.height() || img1.width() != img2.width() {
            return Err(Error::SpatialMismatch {
                context: "input image pair",
                expected_h: img1.height(),
                expected_w: img1.width(),
                got_h: img2.height(),
                got_w: img2.width(),
            });
        }
        let original_dims = (img1.height(), img1.width());
        let multiple = self.config.pad_multiple();
        let padded_dims = (
            img1.height().div_ceil(multiple) * multiple,
            img1.width().div_ceil(multiple) * multiple,
        );

        let prep = |img: &Tensor| -> Result<Tensor> {
            let rgb = to_three_channels(img)?;
            pad_right_bottom(&rgb, padded_dims.0, padded_dims.1)
        };
        let p1 = prep(img1)?;
        let p2 = prep(img2)?;

        let depth = self.config.effective_depth();
        let f1 = encoder_forward(&p1, &self.weights.features)?;
        let f2 = encoder_forward(&p2, &self.weights.features)?;
        let raw_context = encoder_forward(&p1, &self.weights.context)?;
        Ok(EncodedInputs {
            f1_pyramid: build_pyramid(&f1, depth)?,
            f2_pyramid: build_pyramid(&f2, depth)?,
            context: split_context(&raw_context)?,
            original_dims,
            padded_dims,
        })
    }

    /// Full inference: encoders, scheduled refinement, upsample, crop.
    pub fn infer(&self, img1: &Tensor, img2: &Tensor) -> Result<InferenceOutput> {
        let encoded = self.encode(img1, img2)?;
        let schedule = make_schedule_with_revisits(
            self.config.iterations,
            self.config.mode,
            self.config.effective_depth(),
            self.config.coarse_revisits,
        );
        let window = LookupWindow::new(self.config.radius)?;
        let base_positions = {
            let (h0, w0) = encoded.f1_pyramid.base_dims();
            h0 * w0
        };
        let refinement = run_refinement(
            &encoded.f1_pyramid,
            &encoded.f2_pyramid,
            &encoded.context,
            &schedule,
            &self.weights.banks,
            window,
            self.config.n_slice.min(base_positions),
            self.config.concat,
        )?;

        let full = upsample_flow(&refinement.flow, self.config.downsample);
        let flow = full.cropped(encoded.original_dims.0, encoded.original_dims.1)?;

        let model = peak_memory(
            &self
                .config
                .pipeline_config(encoded.original_dims.0, encoded.original_dims.1),
        );
        Ok(InferenceOutput {
            flow,
            refinement,
            predicted_peak_bytes: model.tiled_peak_bytes,
        })
    }
}

/// Parameter shapes implied by a run configuration.
pub fn model_layout(config: &RunConfig) -> ModelLayout {
    let side = 2 * config.radius + 1;
    ModelLayout {
        downsample: config.downsample,
        feature_dim: config.feature_dim,
        corr_channels: side * side,
        bank_count: config.effective_depth(),
        concat: config.concat,
    }
}

/// Warp an image by a constant displacement to build a synthetic pair with
/// exact ground truth: the second frame satisfies I2(x + d) = I1(x), sampled
/// bilinearly with zero fill outside the frame.
pub fn gen_synthetic(img1: &Tensor, du: f32, dv: f32) -> Result<(Tensor, FlowField)> {
    let (_, h, w) = img1.shape();
    let mut coords = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            coords.push((x as f64 - du as f64, y as f64 - dv as f64));
        }
    }
    let img2 = grid_sample_bilinear(img1, &coords, h, w)?;
    Ok((img2, FlowField::constant(h, w, du, dv)))
}
