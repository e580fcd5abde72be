//! Command-line frontend: inference, evaluation, memory/cost reporting,
//! sampler benchmarks, the self-test suites, and synthetic-pair generation.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corrflow_core::budget::{cost_model, peak_memory, sweep, PipelineConfig};
use corrflow_core::colorize::colorize_flow;
use corrflow_core::io::config::RunConfig;
use corrflow_core::io::flo::{read_flo, write_flo};
use corrflow_core::io::pnm::{read_image, write_image};
use corrflow_core::metrics::{epe, f1_all};
use corrflow_core::pipeline::{gen_synthetic, Pipeline, WeightsOrigin};
use corrflow_core::refine::ScheduleMode;
use corrflow_core::sampling::bench_samplers;
use corrflow_core::selftest::run_selftest;
use corrflow_core::Error;

#[derive(Parser)]
#[command(
    name = "corrflow",
    version,
    about = "Memory-bounded correlation-volume optical flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on an image pair and write a .flo flow field.
    Infer(InferArgs),
    /// Compare a predicted .flo against ground truth.
    Eval(EvalArgs),
    /// Print the peak-memory and cost reports for a configuration.
    Memcheck(MemcheckArgs),
    /// Time the two sub-pixel samplers.
    Bench(BenchArgs),
    /// Run the built-in oracle suites; nonzero exit on any failure.
    Selftest,
    /// Warp an image by a constant flow to build a synthetic pair.
    Gen(GenArgs),
}

#[derive(Args)]
struct InferArgs {
    /// Run-configuration file; built-in defaults when omitted.
    #[arg(long)]
    cfg: Option<PathBuf>,
    #[arg(long)]
    img1: PathBuf,
    #[arg(long)]
    img2: PathBuf,
    /// Output .flo path.
    #[arg(long)]
    out: PathBuf,
    /// Optional color-wheel visualization (PPM).
    #[arg(long)]
    viz: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Optional validity mask (PGM; nonzero pixels count).
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct MemcheckArgs {
    #[arg(long = "H")]
    height: usize,
    #[arg(long = "W")]
    width: usize,
    #[arg(long = "K", default_value_t = 16)]
    downsample: usize,
    #[arg(long = "D", default_value_t = 128)]
    feature_dim: usize,
    #[arg(long = "r", default_value_t = 3)]
    radius: usize,
    #[arg(long = "b", default_value_t = 1)]
    bytes_per_element: usize,
    #[arg(long = "n-slice", default_value_t = 1)]
    n_slice: usize,
    #[arg(long = "L", default_value_t = 1)]
    cv_levels: usize,
    #[arg(long, default_value_t = 12)]
    iterations: usize,
    /// Emit comma-separated rows instead of aligned tables.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated tensor shapes, each CxHxW.
    #[arg(long, default_value = "64x30x66,128x30x66,64x16x16")]
    sizes: String,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    /// Emit comma-separated rows instead of the aligned table.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    img1: PathBuf,
    /// Constant x displacement in pixels (may be fractional).
    #[arg(long, allow_hyphen_values = true)]
    dx: f32,
    /// Constant y displacement in pixels (may be fractional).
    #[arg(long, allow_hyphen_values = true)]
    dy: f32,
    #[arg(long)]
    out_img2: PathBuf,
    #[arg(long)]
    out_gt: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_io() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Infer(args) => infer(args),
        Command::Eval(args) => eval(args),
        Command::Memcheck(args) => memcheck(args),
        Command::Bench(args) => bench(args),
        Command::Selftest => selftest(),
        Command::Gen(args) => gen(args),
    }
}

fn infer(args: InferArgs) -> Result<ExitCode, Error> {
    let config = match &args.cfg {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let pipeline = Pipeline::from_config(config)?;
    if let WeightsOrigin::Seeded(seed) = pipeline.origin {
        eprintln!(
            "note: no weights container configured; using seeded random weights (seed {seed}). \
             Outputs are deterministic but carry no trained flow quality."
        );
    }
    let img1 = read_image(&args.img1)?;
    let img2 = read_image(&args.img2)?;
    let output = pipeline.infer(&img1, &img2)?;
    write_flo(&args.out, &output.flow)?;
    println!(
        "wrote {} ({}x{} flow, {} iterations, tiled lookup working set {} B at {} B/elem)",
        args.out.display(),
        output.flow.width(),
        output.flow.height(),
        output.refinement.snapshots.len(),
        output.predicted_peak_bytes,
        pipeline.config.bytes_per_element,
    );
    if let Some(viz) = &args.viz {
        write_image(viz, &colorize_flow(&output.flow, None))?;
        println!("wrote {}", viz.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(args: EvalArgs) -> Result<ExitCode, Error> {
    let pred = read_flo(&args.pred)?;
    let gt = read_flo(&args.gt)?;
    let mask = match &args.mask {
        Some(path) => {
            let img = read_image(path)?;
            Some(img.data().iter().map(|&v| v > 0.0).collect::<Vec<bool>>())
        }
        None => None,
    };
    let epe_value = epe(&pred, &gt, mask.as_deref())?;
    let f1_value = f1_all(&pred, &gt, mask.as_deref())?;
    println!("EPE: {epe_value:.6}");
    println!("F1-all: {f1_value:.4}%");
    Ok(ExitCode::SUCCESS)
}

/// A pinned working-set byte count: label, configuration, expected bytes,
/// and which report field carries them.
struct FixtureCheck {
    name: &'static str,
    config: PipelineConfig,
    expected: u64,
    field: fn(&PipelineConfig) -> u64,
}

/// The three pinned working-set byte counts for 440x1024 inputs.
fn fixture_checks() -> [FixtureCheck; 3] {
    let base = PipelineConfig {
        height: 440,
        width: 1024,
        downsample: 16,
        feature_dim: 128,
        radius: 3,
        iterations: 12,
        cv_levels: 1,
        n_slice: 1,
        bytes_per_element: 1,
        mode: ScheduleMode::SingleLevel,
    };
    let untiled = |c: &PipelineConfig| peak_memory(c).untiled_peak_bytes;
    let tiled = |c: &PipelineConfig| peak_memory(c).tiled_peak_bytes;
    [
        FixtureCheck {
            name: "16x untiled",
            config: base,
            expected: 14_680_064,
            field: untiled,
        },
        FixtureCheck {
            name: "8x untiled",
            config: PipelineConfig {
                downsample: 8,
                ..base
            },
            expected: 57_671_680,
            field: untiled,
        },
        FixtureCheck {
            name: "16x n_slice=56",
            config: PipelineConfig {
                n_slice: 56,
                ..base
            },
            expected: 262_144,
            field: tiled,
        },
    ]
}

fn memcheck(args: MemcheckArgs) -> Result<ExitCode, Error> {
    let config = PipelineConfig {
        height: args.height,
        width: args.width,
        downsample: args.downsample,
        feature_dim: args.feature_dim,
        radius: args.radius,
        iterations: args.iterations,
        cv_levels: args.cv_levels,
        n_slice: args.n_slice,
        bytes_per_element: args.bytes_per_element,
        mode: ScheduleMode::SingleLevel,
    };
    config.validate()?;
    if args.csv {
        print!("{}", sweep(&[config])?.to_csv());
    } else {
        let memory = peak_memory(&config);
        println!("memory report");
        print!("{memory}");
        println!(
            "tiling reduction     {:.2}x over the untiled working set",
            memory.reduction_factor()
        );
        println!();
        println!("cost report");
        print!("{}", cost_model(&config));
        println!();
    }

    println!("reference fixtures (440x1024, D=128, r=3, b=1)");
    let mut all_ok = true;
    for check in fixture_checks() {
        let got = (check.field)(&check.config);
        let ok = got == check.expected;
        all_ok &= ok;
        println!(
            "  {:<16} {:>12} bytes (expected {:>12})  {}",
            check.name,
            got,
            check.expected,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn parse_sizes(text: &str) -> Result<Vec<(usize, usize, usize)>, Error> {
    let mut sizes = Vec::new();
    for part in text.split(',') {
        let dims: Vec<&str> = part.trim().split('x').collect();
        if dims.len() != 3 {
            return Err(Error::InvalidValue {
                name: "bench.sizes",
                message: format!("'{part}' is not CxHxW"),
            });
        }
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::InvalidValue {
                name: "bench.sizes",
                message: format!("'{s}' is not a positive integer"),
            })
        };
        sizes.push((parse(dims[0])?, parse(dims[1])?, parse(dims[2])?));
    }
    Ok(sizes)
}

fn bench(args: BenchArgs) -> Result<ExitCode, Error> {
    let sizes = parse_sizes(&args.sizes)?;
    let report = bench_samplers(&sizes, args.reps)?;
    if args.csv {
        print!("{}", report.to_csv());
    } else {
        print!("{report}");
    }
    Ok(ExitCode::SUCCESS)
}

fn selftest() -> Result<ExitCode, Error> {
    let report = run_selftest();
    for suite in &report.suites {
        println!(
            "{} {:<42} {}",
            if suite.passed { "ok  " } else { "FAIL" },
            suite.name,
            suite.detail
        );
    }
    if report.all_passed() {
        println!("all {} suites passed", report.suites.len());
        Ok(ExitCode::SUCCESS)
    } else {
        let failed = report.suites.iter().filter(|s| !s.passed).count();
        eprintln!("{failed} suite(s) failed");
        Ok(ExitCode::from(1))
    }
}

fn gen(args: GenArgs) -> Result<ExitCode, Error> {
    let img1 = read_image(&args.img1)?;
    let (img2, gt) = gen_synthetic(&img1, args.dx, args.dy)?;
    write_image(&args.out_img2, &img2)?;
    write_flo(&args.out_gt, &gt)?;
    println!(
        "wrote {} and {} (constant flow {}, {})",
        args.out_img2.display(),
        args.out_gt.display(),
        args.dx,
        args.dy
    );
    Ok(ExitCode::SUCCESS)
}
