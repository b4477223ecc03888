use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use lowlight_cli::{run_enhance, selftest, CliError, CurveKind, RunConfig};
use lowlight_core::Mode;

/// Self-supervised low-light image enhancement.
///
/// Each input is decomposed into reflectance, illumination, and noise by
/// per-image optimization; the illumination map is brightened with a
/// nonlinear saturation curve (or gamma) and recombined. Writes
/// `<name>_enhanced.png` per image plus a `report.csv` of quality metrics.
#[derive(Parser, Debug)]
#[command(name = "lowlight", version)]
struct Cli {
    /// Input PNG files or directories containing PNGs.
    inputs: Vec<PathBuf>,

    /// JSON config file; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (created if absent).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Optimization iterations per image.
    #[arg(long)]
    iters: Option<usize>,

    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,

    /// Decomposition parameterization.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,

    /// Illumination curve for the enhancement stage.
    #[arg(long, value_enum)]
    curve: Option<CurveArg>,

    /// Curve exponent for --curve fixed-eta (must be >= 1).
    #[arg(long)]
    eta: Option<f64>,

    /// Gamma for --curve gamma.
    #[arg(long)]
    gamma: Option<f64>,

    /// Gradient suppression threshold in [0, 1).
    #[arg(long)]
    eps: Option<f64>,

    /// RNG seed for the decomposition.
    #[arg(long)]
    seed: Option<u64>,

    /// Also write reflectance/illumination/noise maps and loss traces.
    #[arg(long)]
    dump_intermediates: bool,

    /// Directory of reference images (matched by file name) for PSNR/SSIM.
    #[arg(long)]
    ref_dir: Option<PathBuf>,

    /// Worker pool width (default: logical cores).
    #[arg(long)]
    jobs: Option<usize>,

    /// Run the built-in verification suite and exit.
    #[arg(long)]
    self_test: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Cnn,
    Direct,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CurveArg {
    Nism,
    Gamma,
    FixedEta,
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if !cli.inputs.is_empty() {
        cfg.inputs = cli.inputs.clone();
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(iters) = cli.iters {
        cfg.decompose.iterations = iters;
    }
    if let Some(lr) = cli.lr {
        cfg.decompose.lr = lr;
    }
    if let Some(mode) = cli.mode {
        cfg.decompose.mode = match mode {
            ModeArg::Cnn => Mode::Cnn,
            ModeArg::Direct => Mode::Direct,
        };
    }
    if let Some(curve) = cli.curve {
        cfg.curve = match curve {
            CurveArg::Nism => CurveKind::Nism,
            CurveArg::Gamma => CurveKind::Gamma,
            CurveArg::FixedEta => CurveKind::FixedEta,
        };
    }
    if cli.eta.is_some() {
        cfg.eta = cli.eta;
    }
    if let Some(gamma) = cli.gamma {
        cfg.gamma = gamma;
    }
    if let Some(eps) = cli.eps {
        cfg.decompose.eps = eps;
    }
    if let Some(seed) = cli.seed {
        cfg.decompose.seed = seed;
    }
    if cli.dump_intermediates {
        cfg.dump_intermediates = true;
    }
    if cli.ref_dir.is_some() {
        cfg.ref_dir = cli.ref_dir.clone();
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    if cli.self_test {
        let report = selftest::run_selftest();
        print!("{}", report.render());
        return if report.all_passed() {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        };
    }

    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    match run_enhance(&cfg) {
        Ok(summary) => {
            println!(
                "processed {} image(s); report at {}",
                summary.processed,
                summary.report_path.display()
            );
            if summary.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for (path, reason) in &summary.failed {
                    eprintln!("failed: {}: {reason}", path.display());
                }
                ExitCode::from(1)
            }
        }
        Err(e @ CliError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
