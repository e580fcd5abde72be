//! Run configuration: flat `key = value` text, `#` comments, unknown keys
//! fatal.

use std::fs;
use std::path::{Path, PathBuf};

use crate::budget::PipelineConfig;
use crate::error::{Error, Result};
use crate::refine::ScheduleMode;

/// Every knob of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Feature downsampling factor K (8 or 16).
    pub downsample: usize,
    /// Encoder feature dimension D.
    pub feature_dim: usize,
    /// Lookup radius r.
    pub radius: usize,
    pub iterations: usize,
    pub mode: ScheduleMode,
    pub pyramid_depth: usize,
    pub n_slice: usize,
    /// Lookup concatenation on/off.
    pub concat: bool,
    /// Seed for deterministic weights; ignored when `weights` is set.
    pub seed: u64,
    /// Optional weights-container path.
    pub weights: Option<PathBuf>,
    /// Element width for byte accounting.
    pub bytes_per_element: usize,
    /// Trailing coarse revisit iterations in coarse-to-fine mode.
    pub coarse_revisits: usize,
}

impl Default for RunConfig {
    /// The latency-oriented default: 16x features, 64 channels, radius 3,
    /// coarse-to-fine over three levels, six iterations.
    fn default() -> Self {
        RunConfig {
            downsample: 16,
            feature_dim: 64,
            radius: 3,
            iterations: 6,
            mode: ScheduleMode::CoarseToFine,
            pyramid_depth: 3,
            n_slice: 56,
            concat: false,
            seed: 42,
            weights: None,
            bytes_per_element: 1,
            coarse_revisits: 0,
        }
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a positive integer, got '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected on/off, got '{value}'"
        ))),
    }
}

impl RunConfig {
    /// Parse the `key = value` format. Later duplicates of a key are errors,
    /// as are keys this version does not know.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(idx) => &raw[..idx],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
            seen.push(key.to_string());
            match key {
                "k" => config.downsample = parse_usize(key, value)?,
                "d" => config.feature_dim = parse_usize(key, value)?,
                "r" => config.radius = parse_usize(key, value)?,
                "iterations" => config.iterations = parse_usize(key, value)?,
                "mode" => {
                    config.mode = match value {
                        "single_level" => ScheduleMode::SingleLevel,
                        "coarse_to_fine" => ScheduleMode::CoarseToFine,
                        _ => {
                            return Err(Error::Config(format!(
                                "mode: expected single_level or coarse_to_fine, got '{value}'"
                            )))
                        }
                    }
                }
                "pyramid_depth" => config.pyramid_depth = parse_usize(key, value)?,
                "n_slice" => config.n_slice = parse_usize(key, value)?,
                "concat" => config.concat = parse_bool(key, value)?,
                "seed" => {
                    config.seed = value.parse().map_err(|_| {
                        Error::Config(format!("seed: expected an integer, got '{value}'"))
                    })?
                }
                "weights" => config.weights = Some(PathBuf::from(value)),
                "bytes_per_element" => config.bytes_per_element = parse_usize(key, value)?,
                "coarse_revisits" => config.coarse_revisits = parse_usize(key, value)?,
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.downsample != 8 && self.downsample != 16 {
            return Err(Error::Config(format!(
                "k must be 8 or 16, got {}",
                self.downsample
            )));
        }
        for (name, value) in [
            ("d", self.feature_dim),
            ("r", self.radius),
            ("iterations", self.iterations),
            ("pyramid_depth", self.pyramid_depth),
            ("n_slice", self.n_slice),
            ("bytes_per_element", self.bytes_per_element),
        ] {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.mode == ScheduleMode::SingleLevel && self.coarse_revisits > 0 {
            return Err(Error::Config(
                "coarse_revisits only applies to coarse_to_fine mode".into(),
            ));
        }
        Ok(())
    }

    /// Effective pyramid depth: coarse-to-fine consults `pyramid_depth`
    /// levels, single-level only the finest.
    pub fn effective_depth(&self) -> usize {
        match self.mode {
            ScheduleMode::SingleLevel => 1,
            ScheduleMode::CoarseToFine => self.pyramid_depth,
        }
    }

    /// Pad-up unit: inputs grow to multiples of K * 2^(depth-1) so every
    /// pyramid level keeps integer dims.
    pub fn pad_multiple(&self) -> usize {
        self.downsample * (1 << (self.effective_depth() - 1))
    }

    /// The analytic-model view of this configuration for an input image.
    pub fn pipeline_config(&self, height: usize, width: usize) -> PipelineConfig {
        PipelineConfig {
            height,
            width,
            downsample: self.downsample,
            feature_dim: self.feature_dim,
            radius: self.radius,
            iterations: self.iterations,
            cv_levels: 1,
            n_slice: self.n_slice,
            bytes_per_element: self.bytes_per_element,
            mode: self.mode,
        }
    }
}
