//! Analytic peak-memory accountant and latency-proxy cost model.
//!
//! The accountant tracks the dominant working set of the lookup path, the
//! gathered-feature buffer, in exact integer arithmetic, so the byte counts
//! can be pinned by fixtures with zero tolerance. The cost model counts MACs
//! and bytes; it makes no wall-clock claims, but its lookup totals are exactly
//! linear in iterations, levels, feature dimension and position count, which
//! is the structure the latency measurements on real accelerators follow.

use std::fmt;

use crate::error::{Error, Result};
use crate::refine::{update_block_bytes_moved, update_block_macs, ScheduleMode};

/// Knobs of one pipeline configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    /// Input image dims before pad-up.
    pub height: usize,
    pub width: usize,
    /// Feature downsampling factor K.
    pub downsample: usize,
    /// Encoder feature dimension D.
    pub feature_dim: usize,
    /// Lookup radius r.
    pub radius: usize,
    /// Refinement iterations N.
    pub iterations: usize,
    /// Cost-volume levels consulted per iteration (1 for this engine;
    /// exposed so multi-level baselines can be modeled).
    pub cv_levels: usize,
    /// Lookup tile count.
    pub n_slice: usize,
    /// Element width used for byte accounting (1 mirrors quantized
    /// deployment, 4 matches this f32 build).
    pub bytes_per_element: usize,
    pub mode: ScheduleMode,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("height", self.height),
            ("width", self.width),
            ("feature_dim", self.feature_dim),
            ("radius", self.radius),
            ("iterations", self.iterations),
            ("cv_levels", self.cv_levels),
            ("n_slice", self.n_slice),
            ("bytes_per_element", self.bytes_per_element),
        ] {
            if value == 0 {
                return Err(Error::InvalidValue {
                    name: "PipelineConfig",
                    message: format!("{name} must be positive"),
                });
            }
        }
        if self.downsample != 8 && self.downsample != 16 {
            return Err(Error::InvalidValue {
                name: "PipelineConfig.downsample",
                message: format!("expected 8 or 16, got {}", self.downsample),
            });
        }
        // keep every byte/MAC product comfortably inside u64
        for (name, value, limit) in [
            ("height", self.height, 1usize << 26),
            ("width", self.width, 1 << 26),
            ("feature_dim", self.feature_dim, 1 << 16),
            ("radius", self.radius, 1 << 10),
            ("iterations", self.iterations, 1 << 20),
            ("cv_levels", self.cv_levels, 16),
            ("bytes_per_element", self.bytes_per_element, 16),
        ] {
            if value > limit {
                return Err(Error::InvalidValue {
                    name: "PipelineConfig",
                    message: format!("{name} = {value} exceeds the supported {limit}"),
                });
            }
        }
        Ok(())
    }

    /// Lookup positions after pad-up: ceil(H/K) * ceil(W/K).
    pub fn positions(&self) -> u64 {
        (self.height.div_ceil(self.downsample) * self.width.div_ceil(self.downsample)) as u64
    }

    /// (2(r+1))^2 integer-grid gathers per position.
    pub fn gather_count(&self) -> u64 {
        let side = 2 * (self.radius as u64 + 1);
        side * side
    }

    /// (2r+1)^2 correlation channels per position.
    pub fn sample_channels(&self) -> u64 {
        let side = 2 * self.radius as u64 + 1;
        side * side
    }
}

/// Byte accounting of the lookup working set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryReport {
    pub positions: u64,
    /// (2(r+1))^2 * D * b bytes gathered per position.
    pub gather_bytes_per_position: u64,
    /// P * g * L: the whole gather resident at once.
    pub untiled_peak_bytes: u64,
    /// ceil(P / n_slice) * g * L: one tile resident at a time.
    pub tiled_peak_bytes: u64,
    /// Positions per tile.
    pub tile_positions: u64,
    /// For comparison: materializing the full 4-D volume(s), level p holding
    /// P * P / 4^p entries.
    pub full_volume_bytes: u64,
}

impl MemoryReport {
    /// Memory ratio between the untiled and tiled working sets.
    pub fn reduction_factor(&self) -> f64 {
        self.untiled_peak_bytes as f64 / self.tiled_peak_bytes as f64
    }
}

/// "14,680,064 B = 14336 KiB = 14.0 MiB (14.34 MB by the KiB/1000 reading)"
fn format_bytes(bytes: u64) -> String {
    format!(
        "{} B = {} KiB = {:.2} MiB ({:.2} MB by the KiB/1000 reading)",
        group_thousands(bytes),
        bytes / 1024,
        bytes as f64 / (1024.0 * 1024.0),
        bytes as f64 / 1024.0 / 1000.0,
    )
}

fn group_thousands(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl fmt::Display for MemoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "positions            {}",
            group_thousands(self.positions)
        )?;
        writeln!(
            f,
            "gather bytes/pos     {}",
            group_thousands(self.gather_bytes_per_position)
        )?;
        writeln!(
            f,
            "untiled peak         {}",
            format_bytes(self.untiled_peak_bytes)
        )?;
        writeln!(
            f,
            "tiled peak           {} ({} positions/tile)",
            format_bytes(self.tiled_peak_bytes),
            self.tile_positions
        )?;
        writeln!(
            f,
            "full 4-D volume      {}",
            format_bytes(self.full_volume_bytes)
        )
    }
}

/// Exact-integer peak-memory accounting for one configuration.
pub fn peak_memory(config: &PipelineConfig) -> MemoryReport {
    let p = config.positions();
    let g = config.gather_count() * config.feature_dim as u64 * config.bytes_per_element as u64;
    let levels = config.cv_levels as u64;
    let tile_positions = p.div_ceil(config.n_slice as u64);

    let mut full_volume = 0u64;
    for level in 0..config.cv_levels as u32 {
        full_volume += p * (p / 4u64.pow(level)) * config.bytes_per_element as u64;
    }

    MemoryReport {
        positions: p,
        gather_bytes_per_position: g,
        untiled_peak_bytes: p * g * levels,
        tiled_peak_bytes: tile_positions * g * levels,
        tile_positions,
        full_volume_bytes: full_volume,
    }
}

/// MAC and byte-traffic counts for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostReport {
    /// P * (2(r+1))^2 * D correlation MACs per lookup.
    pub lookup_macs_per_iteration: u64,
    /// Gathered feature bytes per lookup.
    pub lookup_bytes_per_iteration: u64,
    /// Motion encoder + recurrent update + flow head MACs per iteration.
    pub update_macs_per_iteration: u64,
    /// Activation + weight traffic of the update block per iteration.
    pub update_bytes_per_iteration: u64,
    /// N * L * per-lookup totals.
    pub lookup_macs_total: u64,
    pub lookup_bytes_total: u64,
    /// N * per-update totals.
    pub update_macs_total: u64,
    pub update_bytes_total: u64,
}

impl CostReport {
    pub fn total_macs(&self) -> u64 {
        self.lookup_macs_total + self.update_macs_total
    }

    pub fn total_bytes(&self) -> u64 {
        self.lookup_bytes_total + self.update_bytes_total
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "lookup  per-iter     {} MACs, {} bytes",
            group_thousands(self.lookup_macs_per_iteration),
            group_thousands(self.lookup_bytes_per_iteration)
        )?;
        writeln!(
            f,
            "update  per-iter     {} MACs, {} bytes",
            group_thousands(self.update_macs_per_iteration),
            group_thousands(self.update_bytes_per_iteration)
        )?;
        writeln!(
            f,
            "lookup  total        {} MACs, {} bytes",
            group_thousands(self.lookup_macs_total),
            group_thousands(self.lookup_bytes_total)
        )?;
        writeln!(
            f,
            "update  total        {} MACs, {} bytes",
            group_thousands(self.update_macs_total),
            group_thousands(self.update_bytes_total)
        )?;
        writeln!(
            f,
            "grand   total        {} MACs, {} bytes",
            group_thousands(self.total_macs()),
            group_thousands(self.total_bytes())
        )
    }
}

/// Deterministic count model. Lookup totals are N * L * (per-iteration cost)
/// and update totals N * (per-iteration cost); both are charged at the base
/// lookup resolution, so coarse-to-fine runs are bounded from above.
pub fn cost_model(config: &PipelineConfig) -> CostReport {
    let p = config.positions();
    let lookup_macs = p * config.gather_count() * config.feature_dim as u64;
    let lookup_bytes =
        p * config.gather_count() * config.feature_dim as u64 * config.bytes_per_element as u64;

    let corr_channels = (config.sample_channels() * config.cv_levels as u64) as usize;
    let update_macs = update_block_macs(p, corr_channels);
    let update_bytes = update_block_bytes_moved(p, corr_channels, config.bytes_per_element as u64);

    let n = config.iterations as u64;
    let l = config.cv_levels as u64;
    CostReport {
        lookup_macs_per_iteration: lookup_macs,
        lookup_bytes_per_iteration: lookup_bytes,
        update_macs_per_iteration: update_macs,
        update_bytes_per_iteration: update_bytes,
        lookup_macs_total: n * l * lookup_macs,
        lookup_bytes_total: n * l * lookup_bytes,
        update_macs_total: n * update_macs,
        update_bytes_total: n * update_bytes,
    }
}

/// One configuration's memory and cost summary.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub config: PipelineConfig,
    pub memory: MemoryReport,
    pub cost: CostReport,
}

/// Tabular report over several configurations, in input order.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "height,width,K,D,r,N,L,n_slice,b,positions,untiled_peak_bytes,tiled_peak_bytes,\
             lookup_macs_total,update_macs_total\n",
        );
        for row in &self.rows {
            let c = &row.config;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.height,
                c.width,
                c.downsample,
                c.feature_dim,
                c.radius,
                c.iterations,
                c.cv_levels,
                c.n_slice,
                c.bytes_per_element,
                row.memory.positions,
                row.memory.untiled_peak_bytes,
                row.memory.tiled_peak_bytes,
                row.cost.lookup_macs_total,
                row.cost.update_macs_total,
            ));
        }
        s
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<11} {:>3} {:>4} {:>2} {:>3} {:>2} {:>7} {:>2} {:>9} {:>15} {:>15} {:>16}",
            "image",
            "K",
            "D",
            "r",
            "N",
            "L",
            "n_slice",
            "b",
            "positions",
            "untiled B",
            "tiled B",
            "lookup MACs"
        )?;
        for row in &self.rows {
            let c = &row.config;
            writeln!(
                f,
                "{:<11} {:>3} {:>4} {:>2} {:>3} {:>2} {:>7} {:>2} {:>9} {:>15} {:>15} {:>16}",
                format!("{}x{}", c.height, c.width),
                c.downsample,
                c.feature_dim,
                c.radius,
                c.iterations,
                c.cv_levels,
                c.n_slice,
                c.bytes_per_element,
                row.memory.positions,
                group_thousands(row.memory.untiled_peak_bytes),
                group_thousands(row.memory.tiled_peak_bytes),
                group_thousands(row.cost.lookup_macs_total),
            )?;
        }
        Ok(())
    }
}

/// Evaluate memory and cost for each configuration, preserving order.
pub fn sweep(configs: &[PipelineConfig]) -> Result<SweepReport> {
    if configs.is_empty() {
        return Err(Error::InvalidValue {
            name: "sweep.configs",
            message: "need at least one configuration".into(),
        });
    }
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        config.validate()?;
        rows.push(SweepRow {
            config: *config,
            memory: peak_memory(config),
            cost: cost_model(config),
        });
    }
    Ok(SweepReport { rows })
}
