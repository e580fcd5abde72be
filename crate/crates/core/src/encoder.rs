//! Convolutional feature and context encoders.
//!
//! A small stem-plus-bottleneck-residual stack downsamples the image by 8,
//! and an extra stride-2 convolution extends that to 16 when configured. The
//! context encoder shares the architecture but emits hidden-init and context
//! channels instead of matching features.

use crate::error::{Error, Result};
use crate::refine::{ContextFeatures, UpdateBank, CONTEXT_DIM, HIDDEN_DIM};
use crate::tensor::{concat_channels, conv2d, elementwise, Activation, ConvParams, Tensor};

/// Stem width after the first convolution.
const STEM_DIM: usize = 32;
/// Residual-stage widths; each stage runs two bottleneck blocks and the
/// later stages stride by 2.
const STAGE_DIMS: [usize; 3] = [32, 64, 96];

/// One bottleneck residual block: 1x1 reduce, 3x3 (possibly strided),
/// 1x1 expand, with a projection shortcut when shape changes.
#[derive(Debug, Clone)]
pub struct BottleneckParams {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
    pub conv3: ConvParams,
    pub downsample: Option<ConvParams>,
}

/// Full encoder parameter set.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub conv1: ConvParams,
    pub blocks: Vec<BottleneckParams>,
    /// Extra stride-2 convolution used for 16x downsampling.
    pub extra_down: Option<ConvParams>,
    pub head: ConvParams,
}

/// Callback used to materialize each named convolution.
pub type ConvFactory<'a> = &'a mut dyn FnMut(
    &str,  // parameter name
    usize, // out channels
    usize, // in channels
    usize, // kernel
    usize, // stride
    usize, // padding
) -> ConvParams;

impl EncoderParams {
    /// Build the layer structure, delegating parameter values to `make`.
    pub fn build(prefix: &str, downsample: usize, out_dim: usize, make: ConvFactory) -> Self {
        let conv1 = make(&format!("{prefix}.conv1"), STEM_DIM, 3, 7, 2, 3);
        let mut blocks = Vec::new();
        let mut in_dim = STEM_DIM;
        for (stage, &planes) in STAGE_DIMS.iter().enumerate() {
            for block in 0..2 {
                let stride = if stage > 0 && block == 0 { 2 } else { 1 };
                let name = format!("{prefix}.layer{}.{}", stage + 1, block);
                let quarter = planes / 4;
                let needs_projection = stride != 1 || in_dim != planes;
                blocks.push(BottleneckParams {
                    conv1: make(&format!("{name}.conv1"), quarter, in_dim, 1, 1, 0),
                    conv2: make(&format!("{name}.conv2"), quarter, quarter, 3, stride, 1),
                    conv3: make(&format!("{name}.conv3"), planes, quarter, 1, 1, 0),
                    downsample: needs_projection
                        .then(|| make(&format!("{name}.down"), planes, in_dim, 1, stride, 0)),
                });
                in_dim = planes;
            }
        }
        let extra_down =
            (downsample == 16).then(|| make(&format!("{prefix}.down16"), in_dim, in_dim, 3, 2, 1));
        let head = make(&format!("{prefix}.head"), out_dim, in_dim, 1, 1, 0);
        EncoderParams {
            conv1,
            blocks,
            extra_down,
            head,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.head.out_channels()
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a ConvParams)>) {
        out.push((format!("{prefix}.conv1"), &self.conv1));
        for (i, block) in self.blocks.iter().enumerate() {
            let stage = i / 2 + 1;
            let idx = i % 2;
            let name = format!("{prefix}.layer{stage}.{idx}");
            out.push((format!("{name}.conv1"), &block.conv1));
            out.push((format!("{name}.conv2"), &block.conv2));
            out.push((format!("{name}.conv3"), &block.conv3));
            if let Some(down) = &block.downsample {
                out.push((format!("{name}.down"), down));
            }
        }
        if let Some(extra) = &self.extra_down {
            out.push((format!("{prefix}.down16"), extra));
        }
        out.push((format!("{prefix}.head"), &self.head));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut ConvParams)>) {
        out.push((format!("{prefix}.conv1"), &mut self.conv1));
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let stage = i / 2 + 1;
            let idx = i % 2;
            let name = format!("{prefix}.layer{stage}.{idx}");
            out.push((format!("{name}.conv1"), &mut block.conv1));
            out.push((format!("{name}.conv2"), &mut block.conv2));
            out.push((format!("{name}.conv3"), &mut block.conv3));
            if let Some(down) = &mut block.downsample {
                out.push((format!("{name}.down"), down));
            }
        }
        if let Some(extra) = &mut self.extra_down {
            out.push((format!("{prefix}.down16"), extra));
        }
        out.push((format!("{prefix}.head"), &mut self.head));
    }
}

fn bottleneck_forward(x: &Tensor, p: &BottleneckParams) -> Result<Tensor> {
    let y = elementwise(&conv2d(x, &p.conv1)?, Activation::Relu);
    let y = elementwise(&conv2d(&y, &p.conv2)?, Activation::Relu);
    let y = elementwise(&conv2d(&y, &p.conv3)?, Activation::Relu);
    let skip = match &p.downsample {
        Some(down) => conv2d(x, down)?,
        None => x.clone(),
    };
    if skip.shape() != y.shape() {
        return Err(Error::SpatialMismatch {
            context: "bottleneck skip",
            expected_h: y.height(),
            expected_w: y.width(),
            got_h: skip.height(),
            got_w: skip.width(),
        });
    }
    let mut out = y;
    for (o, s) in out.data_mut().iter_mut().zip(skip.data()) {
        *o = (*o + s).max(0.0);
    }
    Ok(out)
}

/// Run the encoder over a 3-channel image.
pub fn encoder_forward(image: &Tensor, params: &EncoderParams) -> Result<Tensor> {
    if image.channels() != 3 {
        return Err(Error::ChannelMismatch {
            context: "encoder input",
            expected: 3,
            got: image.channels(),
        });
    }
    let mut x = elementwise(&conv2d(image, &params.conv1)?, Activation::Relu);
    for block in &params.blocks {
        x = bottleneck_forward(&x, block)?;
    }
    if let Some(extra) = &params.extra_down {
        x = elementwise(&conv2d(&x, extra)?, Activation::Relu);
    }
    conv2d(&x, &params.head)
}

/// Split the raw context-encoder output into the tanh hidden initialization
/// and the relu context features.
pub fn split_context(raw: &Tensor) -> Result<ContextFeatures> {
    let expected = HIDDEN_DIM + CONTEXT_DIM;
    if raw.channels() != expected {
        return Err(Error::ChannelMismatch {
            context: "split_context",
            expected,
            got: raw.channels(),
        });
    }
    let hidden = raw.slice_channels(0, HIDDEN_DIM)?;
    let context = raw.slice_channels(HIDDEN_DIM, CONTEXT_DIM)?;
    Ok(ContextFeatures {
        hidden_init: elementwise(&hidden, Activation::Tanh),
        context: elementwise(&context, Activation::Relu),
    })
}

/// Architecture knobs that fix every parameter shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelLayout {
    pub downsample: usize,
    pub feature_dim: usize,
    /// (2r+1)^2 correlation channels fed to each update bank.
    pub corr_channels: usize,
    /// One bank per pyramid level in coarse-to-fine mode, one otherwise.
    pub bank_count: usize,
    pub concat: bool,
}

/// Every learned parameter of the pipeline: the two encoders plus one update
/// bank per pyramid level.
#[derive(Debug, Clone)]
pub struct ModelWeights {
    pub features: EncoderParams,
    pub context: EncoderParams,
    pub banks: Vec<UpdateBank>,
    pub layout: ModelLayout,
}

impl ModelWeights {
    /// Deterministic weights from a seed; two runs with the same seed and
    /// layout produce identical parameters.
    pub fn seeded(seed: u64, layout: ModelLayout) -> Self {
        let mut make = |name: &str, out: usize, inp: usize, k: usize, stride: usize, pad: usize| {
            crate::init::seeded_conv(seed, name, out, inp, k, k, stride, pad)
        };
        let features =
            EncoderParams::build("fnet", layout.downsample, layout.feature_dim, &mut make);
        let context = EncoderParams::build(
            "cnet",
            layout.downsample,
            HIDDEN_DIM + CONTEXT_DIM,
            &mut make,
        );
        let banks = (0..layout.bank_count)
            .map(|level| {
                UpdateBank::seeded(
                    seed,
                    &format!("bank{level}"),
                    layout.corr_channels,
                    layout.concat,
                )
            })
            .collect();
        ModelWeights {
            features,
            context,
            banks,
            layout,
        }
    }

    /// All convolutions with their canonical names, in a fixed order.
    pub fn named_convs(&self) -> Vec<(String, &ConvParams)> {
        let mut out = Vec::new();
        self.features.visit("fnet", &mut out);
        self.context.visit("cnet", &mut out);
        for (level, bank) in self.banks.iter().enumerate() {
            let prefix = format!("bank{level}");
            out.push((format!("{prefix}.motion.corr"), &bank.motion.conv_corr));
            out.push((format!("{prefix}.motion.flow1"), &bank.motion.conv_flow1));
            out.push((format!("{prefix}.motion.flow2"), &bank.motion.conv_flow2));
            out.push((format!("{prefix}.motion.fuse"), &bank.motion.conv_fuse));
            out.push((format!("{prefix}.gru.update"), &bank.gru.update_gate));
            out.push((format!("{prefix}.gru.reset"), &bank.gru.reset_gate));
            out.push((format!("{prefix}.gru.candidate"), &bank.gru.candidate));
            out.push((format!("{prefix}.head.conv1"), &bank.head.conv1));
            out.push((format!("{prefix}.head.conv2"), &bank.head.conv2));
        }
        out
    }

    /// Mutable variant of [`ModelWeights::named_convs`].
    pub fn named_convs_mut(&mut self) -> Vec<(String, &mut ConvParams)> {
        let mut out = Vec::new();
        self.features.visit_mut("fnet", &mut out);
        self.context.visit_mut("cnet", &mut out);
        for (level, bank) in self.banks.iter_mut().enumerate() {
            let prefix = format!("bank{level}");
            out.push((format!("{prefix}.motion.corr"), &mut bank.motion.conv_corr));
            out.push((
                format!("{prefix}.motion.flow1"),
                &mut bank.motion.conv_flow1,
            ));
            out.push((
                format!("{prefix}.motion.flow2"),
                &mut bank.motion.conv_flow2,
            ));
            out.push((format!("{prefix}.motion.fuse"), &mut bank.motion.conv_fuse));
            out.push((format!("{prefix}.gru.update"), &mut bank.gru.update_gate));
            out.push((format!("{prefix}.gru.reset"), &mut bank.gru.reset_gate));
            out.push((format!("{prefix}.gru.candidate"), &mut bank.gru.candidate));
            out.push((format!("{prefix}.head.conv1"), &mut bank.head.conv1));
            out.push((format!("{prefix}.head.conv2"), &mut bank.head.conv2));
        }
        out
    }

    /// Total parameter count (weights plus biases).
    pub fn parameter_count(&self) -> usize {
        self.named_convs()
            .iter()
            .map(|(_, c)| c.weights().len() + c.bias().len())
            .sum()
    }
}

/// Replicate a single-channel image to the 3 channels the encoder expects.
pub fn to_three_channels(image: &Tensor) -> Result<Tensor> {
    match image.channels() {
        3 => Ok(image.clone()),
        1 => concat_channels(&[image, image, image]),
        other => Err(Error::ChannelMismatch {
            context: "to_three_channels",
            expected: 3,
            got: other,
        }),
    }
}
