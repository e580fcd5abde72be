//! Iterative refinement: lookup scheduling, the motion encoder with its
//! lookup-concatenation buffer, the convolutional gated recurrent update,
//! the flow head, and the loop that accumulates flow increments across
//! iterations.

use std::collections::VecDeque;

use crate::corrvol::{jit_lookup, FeaturePyramid, LookupWindow};
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::init::seeded_conv;
use crate::sampling::resize_bilinear;
use crate::tensor::{
    avg_pool2d, concat_channels, conv2d, elementwise, Activation, ConvParams, Tensor,
};

/// Recurrent state width.
pub const HIDDEN_DIM: usize = 96;
/// Context feature width handed to every update.
pub const CONTEXT_DIM: usize = 64;
/// Width of the processed correlation features.
pub const CORR_FEAT_DIM: usize = 96;
/// Width of the processed flow features.
pub const FLOW_FEAT_DIM: usize = 32;
/// Width of the fused motion features before the raw flow is appended.
pub const FUSED_DIM: usize = 80;
/// Motion encoder output width (fused features plus the 2-channel flow).
pub const MOTION_DIM: usize = FUSED_DIM + 2;

/// How lookup resolutions are assigned across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// Every iteration at the finest level with one shared weight bank.
    SingleLevel,
    /// Contiguous phases from coarsest to finest, one bank per level.
    CoarseToFine,
}

/// One scheduled iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub iteration: usize,
    /// Pyramid level consulted (0 = finest).
    pub level: usize,
    /// Weight-bank id; a pure function of the level.
    pub bank: usize,
}

/// Per-iteration pyramid levels and weight-bank assignments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupSchedule {
    entries: Vec<ScheduleEntry>,
    pyramid_depth: usize,
}

impl LookupSchedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn levels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.level).collect()
    }

    pub fn pyramid_depth(&self) -> usize {
        self.pyramid_depth
    }

    /// Number of distinct banks the schedule addresses.
    pub fn bank_count(&self) -> usize {
        self.entries.iter().map(|e| e.bank).max().unwrap_or(0) + 1
    }
}

/// Plan `iterations` lookups. Coarse-to-fine splits them into
/// `pyramid_depth` contiguous phases as equal as possible, coarsest first,
/// with remainder iterations given to the finest phase.
pub fn make_schedule(
    iterations: usize,
    mode: ScheduleMode,
    pyramid_depth: usize,
) -> LookupSchedule {
    make_schedule_with_revisits(iterations, mode, pyramid_depth, 0)
}

/// Like [`make_schedule`], optionally ending with `trailing_coarse_revisits`
/// iterations back at the coarsest level (taken out of the same total).
pub fn make_schedule_with_revisits(
    iterations: usize,
    mode: ScheduleMode,
    pyramid_depth: usize,
    trailing_coarse_revisits: usize,
) -> LookupSchedule {
    assert!(iterations >= 1, "schedule needs at least one iteration");
    assert!(pyramid_depth >= 1, "schedule needs at least one level");
    let mut levels = Vec::with_capacity(iterations);
    match mode {
        ScheduleMode::SingleLevel => levels.resize(iterations, 0),
        ScheduleMode::CoarseToFine => {
            let revisits = trailing_coarse_revisits.min(iterations.saturating_sub(1));
            let body = iterations - revisits;
            let base = body / pyramid_depth;
            let remainder = body % pyramid_depth;
            for level in (0..pyramid_depth).rev() {
                let mut count = base;
                if level == 0 {
                    count += remainder;
                }
                levels.extend(std::iter::repeat_n(level, count));
            }
            levels.extend(std::iter::repeat_n(pyramid_depth - 1, revisits));
        }
    }
    let entries = levels
        .into_iter()
        .enumerate()
        .map(|(iteration, level)| ScheduleEntry {
            iteration,
            level,
            bank: level,
        })
        .collect();
    LookupSchedule {
        entries,
        pyramid_depth,
    }
}

/// Fresh lookup features produced by one motion-encoder pass: the processed
/// correlation branch and the processed flow branch.
#[derive(Debug, Clone)]
pub struct LookupFeatures {
    pub corr_feats: Tensor,
    pub flow_feats: Tensor,
}

/// Ring buffer of the last two lookup-feature pairs; missing slots read as
/// zero tensors of the right shape.
#[derive(Debug, Clone, Default)]
pub struct FeatureHistory {
    entries: VecDeque<LookupFeatures>,
}

impl FeatureHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, features: LookupFeatures) {
        self.entries.push_front(features);
        self.entries.truncate(2);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry `age` steps back (0 = previous iteration), or zero tensors.
    pub fn get_or_zero(&self, age: usize, h: usize, w: usize) -> LookupFeatures {
        match self.entries.get(age) {
            Some(f) => f.clone(),
            None => LookupFeatures {
                corr_feats: Tensor::zeros(CORR_FEAT_DIM, h, w),
                flow_feats: Tensor::zeros(FLOW_FEAT_DIM, h, w),
            },
        }
    }

    /// Resample buffered features when the lookup level changes.
    pub fn resize(&mut self, h: usize, w: usize) {
        for entry in &mut self.entries {
            if entry.corr_feats.height() != h || entry.corr_feats.width() != w {
                entry.corr_feats = resize_bilinear(&entry.corr_feats, h, w);
                entry.flow_feats = resize_bilinear(&entry.flow_feats, h, w);
            }
        }
    }
}

/// Motion-encoder convolutions.
#[derive(Debug, Clone)]
pub struct MotionEncoderParams {
    pub conv_corr: ConvParams,
    pub conv_flow1: ConvParams,
    pub conv_flow2: ConvParams,
    pub conv_fuse: ConvParams,
}

/// Gate convolutions of the recurrent update.
#[derive(Debug, Clone)]
pub struct GruParams {
    pub update_gate: ConvParams,
    pub reset_gate: ConvParams,
    pub candidate: ConvParams,
}

/// Flow-increment head.
#[derive(Debug, Clone)]
pub struct FlowHeadParams {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
}

/// One pyramid level's update weights.
#[derive(Debug, Clone)]
pub struct UpdateBank {
    pub motion: MotionEncoderParams,
    pub gru: GruParams,
    pub head: FlowHeadParams,
}

/// Shape of one convolution in the update block.
#[derive(Debug, Clone, Copy)]
pub struct ConvShape {
    pub name: &'static str,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub padding: usize,
}

/// Fuse-conv input width: the fresh pair plus, with concatenation, the two
/// buffered pairs.
pub fn fuse_input_channels(concat: bool) -> usize {
    let pair = CORR_FEAT_DIM + FLOW_FEAT_DIM;
    if concat {
        3 * pair
    } else {
        pair
    }
}

/// The update block's convolution shapes for a given correlation-feature
/// width. This single table drives bank construction and cost counting.
pub fn update_conv_shapes(corr_channels: usize, concat: bool) -> [ConvShape; 9] {
    let gru_in = HIDDEN_DIM + MOTION_DIM + CONTEXT_DIM;
    [
        ConvShape {
            name: "motion.corr",
            out_channels: CORR_FEAT_DIM,
            in_channels: corr_channels,
            kernel: 1,
            padding: 0,
        },
        ConvShape {
            name: "motion.flow1",
            out_channels: 64,
            in_channels: 2,
            kernel: 7,
            padding: 3,
        },
        ConvShape {
            name: "motion.flow2",
            out_channels: FLOW_FEAT_DIM,
            in_channels: 64,
            kernel: 3,
            padding: 1,
        },
        ConvShape {
            name: "motion.fuse",
            out_channels: FUSED_DIM,
            in_channels: fuse_input_channels(concat),
            kernel: 3,
            padding: 1,
        },
        ConvShape {
            name: "gru.update",
            out_channels: HIDDEN_DIM,
            in_channels: gru_in,
            kernel: 3,
            padding: 1,
        },
        ConvShape {
            name: "gru.reset",
            out_channels: HIDDEN_DIM,
            in_channels: gru_in,
            kernel: 3,
            padding: 1,
        },
        ConvShape {
            name: "gru.candidate",
            out_channels: HIDDEN_DIM,
            in_channels: gru_in,
            kernel: 3,
            padding: 1,
        },
        ConvShape {
            name: "head.conv1",
            out_channels: 128,
            in_channels: HIDDEN_DIM,
            kernel: 3,
            padding: 1,
        },
        ConvShape {
            name: "head.conv2",
            out_channels: 2,
            in_channels: 128,
            kernel: 3,
            padding: 1,
        },
    ]
}

/// Multiply-accumulates of one update-block pass over `positions` pixels
/// (stride-1 convolutions, base channel plan).
pub fn update_block_macs(positions: u64, corr_channels: usize) -> u64 {
    update_conv_shapes(corr_channels, false)
        .iter()
        .map(|s| {
            positions * s.out_channels as u64 * s.in_channels as u64 * (s.kernel * s.kernel) as u64
        })
        .sum()
}

/// Activation and weight traffic of one update-block pass.
pub fn update_block_bytes_moved(
    positions: u64,
    corr_channels: usize,
    bytes_per_element: u64,
) -> u64 {
    update_conv_shapes(corr_channels, false)
        .iter()
        .map(|s| {
            let activations = positions * (s.in_channels + s.out_channels) as u64;
            let weights =
                (s.out_channels * s.in_channels * s.kernel * s.kernel + s.out_channels) as u64;
            (activations + weights) * bytes_per_element
        })
        .sum()
}

impl UpdateBank {
    fn build(
        corr_channels: usize,
        concat: bool,
        mut make: impl FnMut(&ConvShape) -> ConvParams,
    ) -> Self {
        let shapes = update_conv_shapes(corr_channels, concat);
        let mut by_name = |name: &str| {
            let shape = shapes
                .iter()
                .find(|s| s.name == name)
                .expect("known conv name");
            make(shape)
        };
        UpdateBank {
            motion: MotionEncoderParams {
                conv_corr: by_name("motion.corr"),
                conv_flow1: by_name("motion.flow1"),
                conv_flow2: by_name("motion.flow2"),
                conv_fuse: by_name("motion.fuse"),
            },
            gru: GruParams {
                update_gate: by_name("gru.update"),
                reset_gate: by_name("gru.reset"),
                candidate: by_name("gru.candidate"),
            },
            head: FlowHeadParams {
                conv1: by_name("head.conv1"),
                conv2: by_name("head.conv2"),
            },
        }
    }

    /// Deterministic seeded bank; `name_prefix` keeps banks distinct.
    pub fn seeded(seed: u64, name_prefix: &str, corr_channels: usize, concat: bool) -> Self {
        Self::build(corr_channels, concat, |shape| {
            seeded_conv(
                seed,
                &format!("{name_prefix}.{}", shape.name),
                shape.out_channels,
                shape.in_channels,
                shape.kernel,
                shape.kernel,
                1,
                shape.padding,
            )
        })
    }

    /// All-zero bank; useful for wiring checks and zero-increment runs.
    pub fn zeros(corr_channels: usize, concat: bool) -> Self {
        Self::build(corr_channels, concat, |shape| {
            ConvParams::zeros(
                shape.out_channels,
                shape.in_channels,
                shape.kernel,
                shape.kernel,
                1,
                shape.padding,
            )
        })
    }
}

/// Encode the current correlation window and flow estimate into motion
/// features; with `concat_mode` the fusing convolution additionally sees the
/// two buffered lookup-feature pairs (zero-filled when absent).
///
/// Returns the motion features and the fresh pair for the history buffer.
pub fn motion_encoder(
    corr: &Tensor,
    flow: &FlowField,
    history: &FeatureHistory,
    bank: &MotionEncoderParams,
    concat_mode: bool,
) -> Result<(Tensor, LookupFeatures)> {
    let expected_fuse_in = fuse_input_channels(concat_mode);
    if bank.conv_fuse.in_channels() != expected_fuse_in {
        return Err(Error::ChannelMismatch {
            context: "motion_encoder fuse conv",
            expected: expected_fuse_in,
            got: bank.conv_fuse.in_channels(),
        });
    }
    let corr_feats = elementwise(&conv2d(corr, &bank.conv_corr)?, Activation::Relu);
    let flow_t = flow.to_tensor();
    let f1 = elementwise(&conv2d(&flow_t, &bank.conv_flow1)?, Activation::Relu);
    let flow_feats = elementwise(&conv2d(&f1, &bank.conv_flow2)?, Activation::Relu);

    let (h, w) = (corr.height(), corr.width());
    let fused_in = if concat_mode {
        let prev1 = history.get_or_zero(0, h, w);
        let prev2 = history.get_or_zero(1, h, w);
        concat_channels(&[
            &corr_feats,
            &flow_feats,
            &prev1.corr_feats,
            &prev1.flow_feats,
            &prev2.corr_feats,
            &prev2.flow_feats,
        ])?
    } else {
        concat_channels(&[&corr_feats, &flow_feats])?
    };
    let fused = elementwise(&conv2d(&fused_in, &bank.conv_fuse)?, Activation::Relu);
    let motion = concat_channels(&[&fused, &flow_t])?;
    Ok((
        motion,
        LookupFeatures {
            corr_feats,
            flow_feats,
        },
    ))
}

/// One gated recurrent update:
/// z = sigmoid(Wz*[h, x]), r = sigmoid(Wr*[h, x]),
/// q = tanh(Wq*[r. h, x]), h' = (1 - z) . h + z . q.
pub fn conv_gru_step(hidden: &Tensor, x: &Tensor, gru: &GruParams) -> Result<Tensor> {
    if hidden.height() != x.height() || hidden.width() != x.width() {
        return Err(Error::SpatialMismatch {
            context: "conv_gru_step",
            expected_h: hidden.height(),
            expected_w: hidden.width(),
            got_h: x.height(),
            got_w: x.width(),
        });
    }
    let joint = concat_channels(&[hidden, x])?;
    let z = elementwise(&conv2d(&joint, &gru.update_gate)?, Activation::Sigmoid);
    let r = elementwise(&conv2d(&joint, &gru.reset_gate)?, Activation::Sigmoid);

    let mut gated = hidden.clone();
    for (g, rv) in gated.data_mut().iter_mut().zip(r.data()) {
        *g *= rv;
    }
    let joint_q = concat_channels(&[&gated, x])?;
    let q = elementwise(&conv2d(&joint_q, &gru.candidate)?, Activation::Tanh);

    let mut out = Tensor::zeros(hidden.channels(), hidden.height(), hidden.width());
    for i in 0..out.len() {
        let zv = z.data()[i] as f64;
        let hv = hidden.data()[i] as f64;
        let qv = q.data()[i] as f64;
        out.data_mut()[i] = ((1.0 - zv) * hv + zv * qv) as f32;
    }
    Ok(out)
}

/// Predicted flow increment from the hidden state.
pub fn flow_head(hidden: &Tensor, params: &FlowHeadParams) -> Result<Tensor> {
    let mid = elementwise(&conv2d(hidden, &params.conv1)?, Activation::Relu);
    conv2d(&mid, &params.conv2)
}

/// Bilinear spatial upsampling by an integer factor with displacement values
/// multiplied by the same factor.
pub fn upsample_flow(flow: &FlowField, factor: usize) -> FlowField {
    assert!(factor >= 1, "upsample factor must be at least 1");
    if factor == 1 {
        return flow.clone();
    }
    let t = flow.to_tensor();
    let resized = resize_bilinear(&t, flow.height() * factor, flow.width() * factor);
    FlowField::from_tensor(&resized)
        .expect("resize preserves the two-channel layout")
        .scaled(factor as f32)
}

/// Context-encoder outputs: the tanh-squashed hidden initialization and the
/// relu context features.
#[derive(Debug, Clone)]
pub struct ContextFeatures {
    pub hidden_init: Tensor,
    pub context: Tensor,
}

/// Recurrent state carried across iterations: the hidden tensor (values in
/// (-1, 1) after every update), the flow accumulator in level-0 units, and
/// the two-deep lookup-feature buffer.
#[derive(Debug, Clone)]
pub struct UpdateState {
    pub hidden: Tensor,
    pub flow: FlowField,
    pub history: FeatureHistory,
}

impl UpdateState {
    /// Fresh state at level-0 dims with zero flow.
    pub fn new(hidden_init: Tensor, h0: usize, w0: usize) -> Self {
        UpdateState {
            hidden: hidden_init,
            flow: FlowField::zeros(h0, w0),
            history: FeatureHistory::new(),
        }
    }
}

/// Everything a refinement run produces.
#[derive(Debug, Clone)]
pub struct RefinementResult {
    /// Accumulated flow at level 0, in level-0 units.
    pub flow: FlowField,
    /// Accumulated flow after each iteration.
    pub snapshots: Vec<FlowField>,
    /// Per-iteration contribution, already upsampled to level 0.
    pub increments: Vec<FlowField>,
    /// (min, max) of the hidden state after each recurrent step.
    pub hidden_range: Vec<(f32, f32)>,
}

/// Run the scheduled refinement loop.
///
/// Flow starts at zero and lives at level 0. Each iteration rescales it to
/// the scheduled level (divide values by 2^p, pool positions), performs the
/// tiled lookup there, turns the correlation window into a flow increment via
/// the motion encoder, the recurrent update and the flow head, and adds the
/// increment (upsampled, values times 2^p) back into the accumulator. The
/// hidden state and the concatenation buffer persist across iterations and
/// are resampled bilinearly whenever the level changes.
#[allow(clippy::too_many_arguments)]
pub fn run_refinement(
    f1_pyr: &FeaturePyramid,
    f2_pyr: &FeaturePyramid,
    ctx: &ContextFeatures,
    schedule: &LookupSchedule,
    banks: &[UpdateBank],
    window: LookupWindow,
    n_slice: usize,
    concat_mode: bool,
) -> Result<RefinementResult> {
    if f1_pyr.depth() != f2_pyr.depth() || f1_pyr.feature_dim() != f2_pyr.feature_dim() {
        return Err(Error::ChannelMismatch {
            context: "run_refinement pyramids",
            expected: f1_pyr.feature_dim(),
            got: f2_pyr.feature_dim(),
        });
    }
    let (h0, w0) = f1_pyr.base_dims();
    if ctx.context.height() != h0 || ctx.context.width() != w0 {
        return Err(Error::SpatialMismatch {
            context: "run_refinement context",
            expected_h: h0,
            expected_w: w0,
            got_h: ctx.context.height(),
            got_w: ctx.context.width(),
        });
    }
    if n_slice == 0 {
        return Err(Error::SliceCount {
            n_slice,
            max: h0 * w0,
        });
    }
    for entry in schedule.entries() {
        if entry.level >= f1_pyr.depth() {
            return Err(Error::InvalidValue {
                name: "run_refinement.schedule",
                message: format!(
                    "level {} exceeds pyramid depth {}",
                    entry.level,
                    f1_pyr.depth()
                ),
            });
        }
        if entry.bank >= banks.len() {
            return Err(Error::InvalidValue {
                name: "run_refinement.banks",
                message: format!("bank {} not provided (have {})", entry.bank, banks.len()),
            });
        }
    }

    let mut state = UpdateState::new(ctx.hidden_init.clone(), h0, w0);
    let mut context_at_level = ctx.context.clone();
    let mut result = RefinementResult {
        flow: FlowField::zeros(h0, w0),
        snapshots: Vec::with_capacity(schedule.len()),
        increments: Vec::with_capacity(schedule.len()),
        hidden_range: Vec::with_capacity(schedule.len()),
    };

    for entry in schedule.entries() {
        let p = entry.level;
        let (hp, wp) = (h0 >> p, w0 >> p);
        if state.hidden.height() != hp || state.hidden.width() != wp {
            state.hidden = resize_bilinear(&state.hidden, hp, wp);
            context_at_level = resize_bilinear(&ctx.context, hp, wp);
            state.history.resize(hp, wp);
        }

        // flow at this level: pooled positions, values divided by 2^p
        let flow_at_level = if p == 0 {
            state.flow.clone()
        } else {
            let pooled = avg_pool2d(&state.flow.to_tensor(), 1 << p)?;
            FlowField::from_tensor(&pooled)?.scaled(1.0 / (1u32 << p) as f32)
        };

        let slices = n_slice.min(hp * wp);
        let bank = &banks[entry.bank];
        let (corr, _trace) = jit_lookup(
            f1_pyr.level(p),
            f2_pyr.level(p),
            &flow_at_level,
            window,
            slices,
        )?;
        let (motion, fresh) = motion_encoder(
            &corr,
            &flow_at_level,
            &state.history,
            &bank.motion,
            concat_mode,
        )?;
        let x = concat_channels(&[&motion, &context_at_level])?;
        state.hidden = conv_gru_step(&state.hidden, &x, &bank.gru)?;
        let delta = flow_head(&state.hidden, &bank.head)?;
        let increment = upsample_flow(&FlowField::from_tensor(&delta)?, 1 << p);
        state.flow = state.flow.add(&increment)?;

        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for &v in state.hidden.data() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        result.hidden_range.push((lo, hi));
        result.increments.push(increment);
        result.snapshots.push(state.flow.clone());
        state.history.push(fresh);
    }

    result.flow = state.flow;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrvol::build_pyramid;
    use crate::init::SplitMix64;

    #[test]
    fn single_level_schedule() {
        let s = make_schedule(12, ScheduleMode::SingleLevel, 1);
        assert_eq!(s.len(), 12);
        assert!(s.entries().iter().all(|e| e.level == 0 && e.bank == 0));
    }

    #[test]
    fn coarse_to_fine_even_split() {
        let s = make_schedule(12, ScheduleMode::CoarseToFine, 3);
        assert_eq!(s.levels(), vec![2, 2, 2, 2, 1, 1, 1, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn coarse_to_fine_remainder_to_finest() {
        let s = make_schedule(4, ScheduleMode::CoarseToFine, 3);
        assert_eq!(s.levels(), vec![2, 1, 0, 0]);
    }

    #[test]
    fn trailing_coarse_revisits_come_out_of_total() {
        let s = make_schedule_with_revisits(6, ScheduleMode::CoarseToFine, 3, 1);
        assert_eq!(s.len(), 6);
        assert_eq!(s.levels(), vec![2, 1, 0, 0, 0, 2]);
    }

    #[test]
    fn history_keeps_at_most_two_entries() {
        let mut history = FeatureHistory::new();
        for step in 0..4 {
            history.push(LookupFeatures {
                corr_feats: Tensor::full(CORR_FEAT_DIM, 2, 2, step as f32),
                flow_feats: Tensor::full(FLOW_FEAT_DIM, 2, 2, step as f32),
            });
        }
        assert_eq!(history.len(), 2);
        // newest first: ages 0 and 1 are the last two pushes
        assert_eq!(history.get_or_zero(0, 2, 2).corr_feats.get(0, 0, 0), 3.0);
        assert_eq!(history.get_or_zero(1, 2, 2).corr_feats.get(0, 0, 0), 2.0);
        // beyond the buffer: zeros of the right shape
        let far = history.get_or_zero(2, 2, 2);
        assert!(far.corr_feats.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn banks_are_pure_functions_of_level() {
        let s = make_schedule(9, ScheduleMode::CoarseToFine, 3);
        for e in s.entries() {
            assert_eq!(e.bank, e.level);
        }
        assert_eq!(s.bank_count(), 3);
    }

    #[test]
    fn gru_closed_form_at_zero_parameters() {
        let mut rng = SplitMix64::new(1);
        let hidden = Tensor::from_fn(4, 3, 3, |_, _, _| rng.next_f32_in(-0.9, 0.9));
        let x = Tensor::from_fn(6, 3, 3, |_, _, _| rng.next_f32_in(-1.0, 1.0));
        let gru = GruParams {
            update_gate: ConvParams::zeros(4, 10, 3, 3, 1, 1),
            reset_gate: ConvParams::zeros(4, 10, 3, 3, 1, 1),
            candidate: ConvParams::zeros(4, 10, 3, 3, 1, 1),
        };
        let out = conv_gru_step(&hidden, &x, &gru).unwrap();
        for i in 0..out.len() {
            assert!((out.data()[i] - 0.5 * hidden.data()[i]).abs() < 1e-7);
        }

        let zero_hidden = Tensor::zeros(4, 3, 3);
        let out = conv_gru_step(&zero_hidden, &x, &gru).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        let mut rng = SplitMix64::new(2);
        let hidden = Tensor::from_fn(4, 3, 3, |_, _, _| rng.next_f32_in(-0.9, 0.9));
        let x = Tensor::from_fn(5, 3, 3, |_, _, _| rng.next_f32_in(-1.0, 1.0));
        let gru = GruParams {
            update_gate: seeded_conv(3, "t.gru.update", 4, 9, 3, 3, 1, 1),
            reset_gate: seeded_conv(3, "t.gru.reset", 4, 9, 3, 3, 1, 1),
            candidate: seeded_conv(3, "t.gru.candidate", 4, 9, 3, 3, 1, 1),
        };
        let got = conv_gru_step(&hidden, &x, &gru).unwrap();
        let want = crate::oracle::conv_gru_reference(&hidden, &x, &gru).unwrap();
        for i in 0..got.len() {
            assert!((got.data()[i] - want.data()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn gru_output_stays_in_open_unit_interval() {
        let mut rng = SplitMix64::new(3);
        let hidden = Tensor::from_fn(HIDDEN_DIM, 4, 4, |_, _, _| rng.next_f32_in(-0.99, 0.99));
        let x = Tensor::from_fn(MOTION_DIM + CONTEXT_DIM, 4, 4, |_, _, _| {
            rng.next_f32_in(-1.0, 1.0)
        });
        let bank = UpdateBank::seeded(9, "range", 25, false);
        let out = conv_gru_step(&hidden, &x, &bank.gru).unwrap();
        assert!(out.data().iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn zero_motion_bank_maps_everything_to_zero() {
        let corr = Tensor::full(25, 4, 4, 1.5);
        let flow = FlowField::constant(4, 4, 2.0, -1.0);
        let bank = UpdateBank::zeros(25, false);
        let (motion, _) =
            motion_encoder(&corr, &flow, &FeatureHistory::new(), &bank.motion, false).unwrap();
        // fused part is zero; the appended raw flow channels are not
        let fused = motion.slice_channels(0, FUSED_DIM).unwrap();
        assert!(fused.data().iter().all(|&v| v == 0.0));
        assert_eq!(motion.channels(), MOTION_DIM);
    }

    #[test]
    fn empty_history_equals_explicit_zero_history() {
        let mut rng = SplitMix64::new(4);
        let corr = Tensor::from_fn(25, 4, 4, |_, _, _| rng.next_f32_in(-1.0, 1.0));
        let flow = FlowField::constant(4, 4, 0.5, 0.5);
        let bank = UpdateBank::seeded(5, "hist", 25, true);

        let empty = FeatureHistory::new();
        let (a, _) = motion_encoder(&corr, &flow, &empty, &bank.motion, true).unwrap();

        let mut zeroed = FeatureHistory::new();
        zeroed.push(LookupFeatures {
            corr_feats: Tensor::zeros(CORR_FEAT_DIM, 4, 4),
            flow_feats: Tensor::zeros(FLOW_FEAT_DIM, 4, 4),
        });
        zeroed.push(LookupFeatures {
            corr_feats: Tensor::zeros(CORR_FEAT_DIM, 4, 4),
            flow_feats: Tensor::zeros(FLOW_FEAT_DIM, 4, 4),
        });
        let (b, _) = motion_encoder(&corr, &flow, &zeroed, &bank.motion, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fuse_input_channel_arithmetic() {
        assert_eq!(fuse_input_channels(false), CORR_FEAT_DIM + FLOW_FEAT_DIM);
        assert_eq!(
            fuse_input_channels(true),
            (CORR_FEAT_DIM + FLOW_FEAT_DIM) + 2 * (FLOW_FEAT_DIM + CORR_FEAT_DIM)
        );
        let bank = UpdateBank::seeded(1, "chk", 49, true);
        assert_eq!(bank.motion.conv_fuse.in_channels(), 384);
    }

    #[test]
    fn concat_mode_with_zeroed_extra_weights_matches_plain_mode() {
        let mut rng = SplitMix64::new(6);
        let corr = Tensor::from_fn(9, 4, 4, |_, _, _| rng.next_f32_in(-1.0, 1.0));
        let flow = FlowField::constant(4, 4, 0.25, -0.25);
        let plain = UpdateBank::seeded(7, "wire", 9, false);

        // concat bank whose fuse conv copies the plain weights on the fresh
        // channels and zeros on the buffered ones
        let mut concat = UpdateBank::seeded(7, "wire", 9, true);
        concat.motion.conv_corr = plain.motion.conv_corr.clone();
        concat.motion.conv_flow1 = plain.motion.conv_flow1.clone();
        concat.motion.conv_flow2 = plain.motion.conv_flow2.clone();
        let base_in = fuse_input_channels(false);
        let full_in = fuse_input_channels(true);
        let mut weights = vec![0.0f32; FUSED_DIM * full_in * 9];
        for o in 0..FUSED_DIM {
            for i in 0..base_in {
                for k in 0..9 {
                    weights[(o * full_in + i) * 9 + k] =
                        plain.motion.conv_fuse.weights()[(o * base_in + i) * 9 + k];
                }
            }
        }
        concat.motion.conv_fuse = ConvParams::new(
            FUSED_DIM,
            full_in,
            3,
            3,
            weights,
            plain.motion.conv_fuse.bias().to_vec(),
            1,
            1,
        )
        .unwrap();

        // nonzero history to prove the buffered channels really are ignored
        let mut history = FeatureHistory::new();
        history.push(LookupFeatures {
            corr_feats: Tensor::full(CORR_FEAT_DIM, 4, 4, 0.7),
            flow_feats: Tensor::full(FLOW_FEAT_DIM, 4, 4, -0.3),
        });

        let (a, _) = motion_encoder(&corr, &flow, &history, &concat.motion, true).unwrap();
        let (b, _) =
            motion_encoder(&corr, &flow, &FeatureHistory::new(), &plain.motion, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn upsample_flow_examples() {
        let constant = FlowField::constant(3, 4, 1.5, -0.5);
        let up = upsample_flow(&constant, 16);
        assert_eq!(up.height(), 48);
        assert_eq!(up.width(), 64);
        for y in 0..48 {
            for x in 0..64 {
                assert_eq!(up.get(y, x), (24.0, -8.0));
            }
        }

        let mut rng = SplitMix64::new(7);
        let mut random = FlowField::zeros(5, 6);
        for y in 0..5 {
            for x in 0..6 {
                random.set(y, x, rng.next_f32_in(-3.0, 3.0), rng.next_f32_in(-3.0, 3.0));
            }
        }
        assert_eq!(upsample_flow(&random, 1), random);

        let doubled = upsample_flow(&random, 2);
        let oracle = crate::oracle::resize_bilinear_reference(&random.to_tensor(), 10, 12);
        for y in 0..10 {
            for x in 0..12 {
                let (u, v) = doubled.get(y, x);
                assert!((u - 2.0 * oracle.get(0, y, x)).abs() < 1e-5);
                assert!((v - 2.0 * oracle.get(1, y, x)).abs() < 1e-5);
            }
        }
    }

    fn small_setup(
        seed: u64,
        concat: bool,
        zero_head: bool,
    ) -> (
        FeaturePyramid,
        FeaturePyramid,
        ContextFeatures,
        Vec<UpdateBank>,
        LookupWindow,
    ) {
        let mut rng = SplitMix64::new(seed);
        let d = 8;
        let (h0, w0) = (8, 12);
        let f1 = Tensor::from_fn(d, h0, w0, |_, _, _| rng.next_f32_in(-1.0, 1.0));
        let f2 = Tensor::from_fn(d, h0, w0, |_, _, _| rng.next_f32_in(-1.0, 1.0));
        let p1 = build_pyramid(&f1, 3).unwrap();
        let p2 = build_pyramid(&f2, 3).unwrap();
        let ctx = ContextFeatures {
            hidden_init: Tensor::from_fn(HIDDEN_DIM, h0, w0, |_, _, _| rng.next_f32_in(-0.9, 0.9)),
            context: Tensor::from_fn(CONTEXT_DIM, h0, w0, |_, _, _| rng.next_f32_in(0.0, 1.0)),
        };
        let window = LookupWindow::new(2).unwrap();
        let corr_channels = window.sample_channels();
        let banks: Vec<UpdateBank> = (0..3)
            .map(|level| {
                let mut bank =
                    UpdateBank::seeded(seed + 1, &format!("bank{level}"), corr_channels, concat);
                if zero_head {
                    bank.head = FlowHeadParams {
                        conv1: ConvParams::zeros(128, HIDDEN_DIM, 3, 3, 1, 1),
                        conv2: ConvParams::zeros(2, 128, 3, 3, 1, 1),
                    };
                }
                bank
            })
            .collect();
        (p1, p2, ctx, banks, window)
    }

    #[test]
    fn zero_flow_head_keeps_flow_at_zero() {
        let (p1, p2, ctx, banks, window) = small_setup(11, false, true);
        let schedule = make_schedule(12, ScheduleMode::CoarseToFine, 3);
        let result = run_refinement(&p1, &p2, &ctx, &schedule, &banks, window, 4, false).unwrap();
        assert!(result.flow.data().iter().all(|&v| v == 0.0));
        for snap in &result.snapshots {
            assert!(snap.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn flow_is_sum_of_increments() {
        let (p1, p2, ctx, banks, window) = small_setup(12, false, false);
        let schedule = make_schedule(6, ScheduleMode::CoarseToFine, 3);
        let result = run_refinement(&p1, &p2, &ctx, &schedule, &banks, window, 4, false).unwrap();
        let mut acc = FlowField::zeros(8, 12);
        for inc in &result.increments {
            acc = acc.add(inc).unwrap();
        }
        assert_eq!(acc, result.flow);
        assert_eq!(result.snapshots.last().unwrap(), &result.flow);
    }

    #[test]
    fn hidden_stays_strictly_inside_unit_interval() {
        let (p1, p2, ctx, banks, window) = small_setup(13, false, false);
        let schedule = make_schedule(8, ScheduleMode::CoarseToFine, 3);
        let result = run_refinement(&p1, &p2, &ctx, &schedule, &banks, window, 4, false).unwrap();
        for &(lo, hi) in &result.hidden_range {
            assert!(lo > -1.0 && hi < 1.0, "hidden range [{lo}, {hi}]");
        }
    }

    #[test]
    fn refinement_is_deterministic() {
        let (p1, p2, ctx, banks, window) = small_setup(14, true, false);
        let schedule = make_schedule(5, ScheduleMode::CoarseToFine, 3);
        let a = run_refinement(&p1, &p2, &ctx, &schedule, &banks, window, 3, true).unwrap();
        let b = run_refinement(&p1, &p2, &ctx, &schedule, &banks, window, 3, true).unwrap();
        assert_eq!(a.flow, b.flow);
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(sa, sb);
        }
    }
}
