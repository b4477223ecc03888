//! Batch enhancement pipeline behind the `lowlight` binary: input
//! expansion, the per-image decompose/enhance/measure sequence, report
//! writing, and the self-test suite.

pub mod selftest;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use lowlight_core::img::ImageTensor;
use lowlight_core::{decompose, metrics, nism, DecomposeConfig};

/// Illumination curve selection for the enhancement stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    /// Saturation curve with the exponent estimated per image.
    Nism,
    /// Gamma correction baseline.
    Gamma,
    /// Saturation curve with a caller-supplied exponent.
    FixedEta,
}

/// One batch run. Mirrors the JSON config file; command-line flags override
/// individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Input PNG files and/or directories of PNGs.
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub decompose: DecomposeConfig,
    pub curve: CurveKind,
    /// Exponent for `curve = "gamma"`.
    pub gamma: f64,
    /// Exponent for `curve = "fixed-eta"`; must be >= 1.
    pub eta: Option<f64>,
    /// Also write the reflectance, illumination, and noise maps plus the
    /// per-image loss trace.
    pub dump_intermediates: bool,
    /// Directory of reference images (matched by file name) for PSNR/SSIM.
    pub ref_dir: Option<PathBuf>,
    /// Worker pool width; defaults to the number of logical cores.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            out_dir: PathBuf::from("out"),
            decompose: DecomposeConfig::default(),
            curve: CurveKind::Nism,
            gamma: 2.2,
            eta: None,
            dump_intermediates: false,
            ref_dir: None,
            jobs: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Outcome of a batch run.
#[derive(Debug)]
pub struct RunSummary {
    /// Rows that made it into the report, in input order.
    pub processed: usize,
    /// Per-image failures: path and reason.
    pub failed: Vec<(PathBuf, String)>,
    pub report_path: PathBuf,
}

/// One report.csv row.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub eta: Option<f64>,
    pub t: Option<f64>,
    pub iters: usize,
    pub final_loss: f64,
    pub ge: f64,
    pub ce: f64,
    pub gmi: f64,
    pub gmg: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

pub const REPORT_HEADER: &str =
    "name,height,width,eta,T,iters,final_loss,ge,ce,gmi,gmg,psnr,ssim";

impl ReportRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            csv_escape(&self.name),
            self.height,
            self.width,
            opt(self.eta),
            opt(self.t),
            self.iters,
            self.final_loss,
            self.ge,
            self.ce,
            self.gmi,
            self.gmg,
            opt(self.psnr),
            opt(self.ssim),
        )
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Expands files and directories into a flat ordered list of PNG paths.
/// Directory contents are sorted by file name for reproducibility.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| CliError::Io {
                    path: input.clone(),
                    source: e,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .map(|ext| ext.eq_ignore_ascii_case("png"))
                        .unwrap_or(false)
                })
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Config(
            "no input images (expected PNG files or directories containing them)".into(),
        ));
    }
    Ok(files)
}

/// Output base names in input order; collisions get `_1`, `_2`, ... so a
/// batch never overwrites its own artifacts.
fn assign_stems(files: &[PathBuf]) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    files
        .iter()
        .map(|path| {
            let base = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".to_string());
            match seen.get_mut(&base) {
                None => {
                    seen.insert(base.clone(), 0);
                    base
                }
                Some(count) => {
                    *count += 1;
                    format!("{base}_{count}")
                }
            }
        })
        .collect()
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.decompose
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    match cfg.curve {
        CurveKind::Gamma => {
            if !(cfg.gamma.is_finite() && cfg.gamma > 0.0) {
                return Err(CliError::Config(format!(
                    "gamma must be positive, got {}",
                    cfg.gamma
                )));
            }
        }
        CurveKind::FixedEta => match cfg.eta {
            Some(eta) if eta.is_finite() && eta >= 1.0 => {}
            Some(eta) => {
                return Err(CliError::Config(format!(
                    "eta must be finite and >= 1, got {eta}"
                )))
            }
            None => {
                return Err(CliError::Config(
                    "curve \"fixed-eta\" requires --eta".into(),
                ))
            }
        },
        CurveKind::Nism => {}
    }
    Ok(())
}

/// Runs the full enhancement batch: decompose, brighten, recompose, and
/// measure every input; write the enhanced PNGs (plus intermediates on
/// request) and a deterministic `report.csv`. Per-image failures are
/// logged, skipped, and returned in the summary.
pub fn run_enhance(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    validate(cfg)?;
    let files = expand_inputs(&cfg.inputs)?;
    let stems = assign_stems(&files);
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Io {
        path: cfg.out_dir.clone(),
        source: e,
    })?;

    let jobs = cfg
        .jobs
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;

    use rayon::prelude::*;
    let outcomes: Vec<Result<ReportRow, String>> = pool.install(|| {
        files
            .par_iter()
            .zip(stems.par_iter())
            .map(|(path, stem)| process_image(path, stem, cfg).map_err(|e| e.to_string()))
            .collect()
    });

    let report_path = cfg.out_dir.join("report.csv");
    let mut report = String::from(REPORT_HEADER);
    report.push('\n');
    let mut processed = 0usize;
    let mut failed = Vec::new();
    for ((path, outcome), stem) in files.iter().zip(outcomes).zip(&stems) {
        match outcome {
            Ok(row) => {
                report.push_str(&row.to_csv());
                report.push('\n');
                processed += 1;
            }
            Err(reason) => {
                warn!("skipping {} ({stem}): {reason}", path.display());
                failed.push((path.clone(), reason));
            }
        }
    }
    let mut file = fs::File::create(&report_path).map_err(|e| CliError::Io {
        path: report_path.clone(),
        source: e,
    })?;
    file.write_all(report.as_bytes()).map_err(|e| CliError::Io {
        path: report_path.clone(),
        source: e,
    })?;

    Ok(RunSummary {
        processed,
        failed,
        report_path,
    })
}

fn process_image(path: &Path, stem: &str, cfg: &RunConfig) -> Result<ReportRow, anyhow::Error> {
    let source = ImageTensor::load_png(path)?;
    let result = decompose::decompose(&source, &cfg.decompose)?;

    let (eta, t, enhanced_l) = match cfg.curve {
        CurveKind::Nism => {
            let params = nism::estimate_eta(&result.l_low);
            (
                Some(params.eta),
                Some(params.t),
                nism::apply_nism(&result.l_low, params.eta),
            )
        }
        CurveKind::FixedEta => {
            let eta = cfg.eta.expect("validated");
            (Some(eta), None, nism::apply_nism(&result.l_low, eta))
        }
        CurveKind::Gamma => (None, None, nism::apply_gamma(&result.l_low, cfg.gamma)),
    };
    let enhanced = nism::recompose(&result.r_low, &enhanced_l)?;

    let out_path = cfg.out_dir.join(format!("{stem}_enhanced.png"));
    enhanced.save_png(&out_path)?;

    if cfg.dump_intermediates {
        result
            .r_low
            .save_png(cfg.out_dir.join(format!("{stem}_R.png")))?;
        result
            .l_low
            .save_png(cfg.out_dir.join(format!("{stem}_L.png")))?;
        // Noise is stored shifted as (n + 1) / 2, which is exactly the
        // visualization encoding.
        result
            .n_low
            .save_png(cfg.out_dir.join(format!("{stem}_N.png")))?;
        fs::write(
            cfg.out_dir.join(format!("{stem}_loss.csv")),
            result.loss_csv(),
        )?;
    }

    let base = metrics::report(&enhanced, None)?;
    let (psnr, ssim) = match reference_for(cfg, path) {
        Some(reference) => {
            let psnr = metrics::psnr(&enhanced, &reference)
                .map_err(|e| warn!("psnr unavailable for {stem}: {e}"))
                .ok();
            let ssim = metrics::ssim(&enhanced, &reference)
                .map_err(|e| warn!("ssim unavailable for {stem}: {e}"))
                .ok();
            (psnr, ssim)
        }
        None => (None, None),
    };

    let final_loss = result.final_loss().unwrap_or(f64::NAN);
    info!(
        "{stem}: {}x{} eta={} T={} final_loss={final_loss:.6} -> {}",
        source.width(),
        source.height(),
        eta.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
        t.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
        out_path.display()
    );

    Ok(ReportRow {
        name: stem.to_string(),
        height: source.height(),
        width: source.width(),
        eta,
        t,
        iters: cfg.decompose.iterations,
        final_loss,
        ge: base.ge,
        ce: base.ce,
        gmi: base.gmi,
        gmg: base.gmg,
        psnr,
        ssim,
    })
}

fn reference_for(cfg: &RunConfig, input: &Path) -> Option<ImageTensor> {
    let dir = cfg.ref_dir.as_ref()?;
    let name = input.file_name()?;
    let candidate = dir.join(name);
    if !candidate.exists() {
        warn!("no reference for {} in {}", name.to_string_lossy(), dir.display());
        return None;
    }
    match ImageTensor::load_png(&candidate) {
        Ok(img) => Some(img),
        Err(e) => {
            warn!("cannot load reference {}: {e}", candidate.display());
            None
        }
    }
}
