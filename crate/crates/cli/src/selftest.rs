//! Built-in verification suite: derivative rules against finite
//! differences, illumination-curve properties, and metric identities.
//! Printed as a plain-text table; exits clean only when every check passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lowlight_core::autodiff::{
    central_diff_gradients, grad_check, max_relative_error, Shape, Tape, Tensor, TensorData,
};
use lowlight_core::img::ImageTensor;
use lowlight_core::{decompose, metrics, nism, synth, DecomposeConfig};

pub struct Check {
    pub name: String,
    /// Measured value (max relative error, worst deviation, ...).
    pub value: f64,
    /// The value passes while it stays below this bound.
    pub threshold: f64,
    pub passed: bool,
}

pub struct SelfTestReport {
    pub checks: Vec<Check>,
}

impl SelfTestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<38} {:>14} {:>10}  result\n",
            "check", "measured", "threshold"
        ));
        for c in &self.checks {
            out.push_str(&format!(
                "{:<38} {:>14.3e} {:>10.1e}  {}\n",
                c.name,
                c.value,
                c.threshold,
                if c.passed { "PASS" } else { "FAIL" }
            ));
        }
        let (ok, total) = (
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len(),
        );
        out.push_str(&format!("{ok}/{total} checks passed\n"));
        out
    }
}

fn check(name: &str, value: f64, threshold: f64) -> Check {
    Check {
        name: name.to_string(),
        value,
        threshold,
        passed: value < threshold,
    }
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> TensorData {
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    TensorData::new(Shape::new(shape), values)
}

/// Random values kept away from zero so kinked ops are probed at
/// differentiable points.
fn rand_tensor_off_kink(shape: &[usize], rng: &mut ChaCha8Rng) -> TensorData {
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.random_range(0.05..1.0)
        })
        .collect();
    TensorData::new(Shape::new(shape), values)
}

type OpLoss = for<'a> fn(&'a Tape, Tensor<'a>) -> Tensor<'a>;

fn op_checks(report: &mut Vec<Check>) {
    use lowlight_core::autodiff::Axis;
    let smooth: Vec<(&str, OpLoss)> = vec![
        ("grad add/sub/scalar", |_, x| ((x + 0.4) - (x * 0.25 - 0.1)).fro_sq()),
        ("grad mul", |_, x| (x * x).sum()),
        ("grad div", |_, x| ((x + 2.0) / (x + 3.0)).sum()),
        ("grad exp", |_, x| x.exp().sum()),
        ("grad sigmoid", |_, x| x.sigmoid().sum()),
        ("grad tanh", |_, x| x.tanh().sum()),
        ("grad pow-const", |_, x| (x + 1.5).powc(0.7).sum()),
        ("grad negate", |_, x| (-x).l1()),
        ("grad sum", |_, x| x.sum()),
        ("grad mean", |_, x| x.mean()),
        ("grad fro", |_, x| x.fro()),
        ("grad fro-sq", |_, x| x.fro_sq()),
        ("grad spatial-diff", |_, x| {
            (x.spatial_diff(Axis::Horizontal).fro_sq() + x.spatial_diff(Axis::Vertical).fro_sq())
                .sum()
        }),
        ("grad slice-channel", |_, x| {
            (x.slice_channel(0) * x.slice_channel(1)).sum()
        }),
        ("grad atan2", |_, x| {
            (x.slice_channel(0) + 0.3).atan2(x.slice_channel(1) + 0.5).fro_sq()
        }),
        ("grad wrap-angle", |_, x| x.wrap_angle().fro_sq()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (name, f) in smooth {
        let mut worst: f64 = 0.0;
        for _ in 0..8 {
            let x = rand_tensor(&[2, 4, 4], &mut rng, 0.0, 1.0);
            worst = worst.max(grad_check(f, &x, 1e-4));
        }
        report.push(check(name, worst, 1e-4));
    }

    let kinked: Vec<(&str, OpLoss)> = vec![
        ("grad abs (off kink)", |_, x| x.abs().sum()),
        ("grad relu (off kink)", |_, x| x.relu().sum()),
        ("grad l1 (off kink)", |_, x| x.l1()),
        ("grad clamp (interior)", |_, x| x.clamp(-2.0, 2.0).fro_sq()),
    ];
    for (name, f) in kinked {
        let mut worst: f64 = 0.0;
        for _ in 0..8 {
            let x = rand_tensor_off_kink(&[2, 4, 4], &mut rng);
            worst = worst.max(grad_check(f, &x, 1e-4));
        }
        report.push(check(name, worst, 1e-4));
    }

    // Convolution over input, kernel, and bias jointly.
    let input = rand_tensor(&[2, 5, 5], &mut rng, 0.0, 1.0);
    let kernel = rand_tensor(&[2, 2, 3, 3], &mut rng, -0.5, 0.5);
    let bias = rand_tensor(&[2], &mut rng, -0.2, 0.2);
    let conv_err = lowlight_core::autodiff::grad_check_multi(
        |_, xs| xs[0].conv2d(xs[1], xs[2]).fro_sq(),
        &[input, kernel, bias],
        1e-4,
    );
    report.push(check("grad conv2d", conv_err, 1e-4));
}

fn full_loss_check(report: &mut Vec<Check>) {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let scene = synth::low_light_scene(8, 8, 88);
    let cfg = DecomposeConfig {
        eps: 0.0,
        ..DecomposeConfig::default()
    };
    let mut logits = Vec::new();
    for shape in [[3, 8, 8], [1, 8, 8], [3, 8, 8], [3, 8, 8], [1, 8, 8], [3, 8, 8]] {
        logits.push(rand_tensor(&shape, &mut rng, -0.8, 0.8));
    }
    let err = decompose::grad_check_total_loss(&scene.source, &cfg, &logits, 1e-4);
    report.push(check("grad full decomposition loss", err, 1e-3));
}

fn checker_sensitivity(report: &mut Vec<Check>) {
    // A deliberately sign-flipped gradient must be flagged loudly; this
    // guards the checker itself.
    fn quadratic<'t>(_: &'t Tape, xs: &[Tensor<'t>]) -> Tensor<'t> {
        xs[0].fro_sq()
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&[6], &mut rng, 0.2, 1.0);
    let numeric = central_diff_gradients(&quadratic, std::slice::from_ref(&x), 1e-4);
    let flipped: Vec<f64> = numeric[0].iter().map(|g| -g).collect();
    let err = max_relative_error(&flipped, &numeric[0]);
    report.push(Check {
        name: "checker flags sign errors".into(),
        value: err,
        threshold: 0.1,
        passed: err >= 0.1,
    });
}

fn curve_checks(report: &mut Vec<Check>) {
    // Exponent contract: estimated curves send the bright threshold to 0.8.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let t = rng.random_range(0.21..0.99);
        let eta = nism::eta_for_threshold(t);
        if eta > nism::ETA_MIN && eta < nism::ETA_MAX {
            worst = worst.max((nism::nism_curve(t, eta) - nism::BRIGHT_TARGET).abs());
        }
    }
    report.push(check("curve maps threshold to 0.8", worst, 1e-9));

    // Mirror symmetry with gamma across x + y = 1.
    let mut worst: f64 = 0.0;
    for i in 0..=1000 {
        let a = i as f64 / 1000.0;
        let reflected = nism::nism_curve(1.0 - nism::gamma_curve(a, 2.2), 2.2);
        worst = worst.max((reflected - (1.0 - a)).abs());
    }
    report.push(check("curve mirrors gamma", worst, 1e-12));

    // Monotone and never darkening across exponents.
    let mut violations: f64 = 0.0;
    for eta in [1.0, 2.2, 5.0, 20.0] {
        let mut prev = -1.0;
        for i in 0..=1000 {
            let l = i as f64 / 1000.0;
            let v = nism::nism_curve(l, eta);
            if v < l - 1e-15 || v < prev {
                violations += 1.0;
            }
            prev = v;
        }
    }
    report.push(check("curve monotone / brightening", violations, 0.5));

    // Gamma reference points.
    let dark = nism::gamma_curve(0.2, 2.2);
    let bright = nism::gamma_curve(0.8, 2.2);
    let gamma_ok = (0.47..0.49).contains(&dark) && (0.89..0.92).contains(&bright);
    report.push(Check {
        name: "gamma reference points".into(),
        value: dark,
        threshold: 0.49,
        passed: gamma_ok,
    });
}

fn metric_checks(report: &mut Vec<Check>) {
    let scene = synth::natural_scene(32, 32, 12);
    let self_sim = (metrics::ssim(&scene, &scene).unwrap() - 1.0).abs();
    report.push(check("ssim self-identity", self_sim, 1e-12));

    let base = ImageTensor::filled(16, 16, 1, 0.3);
    let offset = ImageTensor::filled(16, 16, 1, 0.4);
    let psnr_err = (metrics::psnr(&offset, &base).unwrap() - 20.0).abs();
    report.push(check("psnr of 0.1 offset is 20 dB", psnr_err, 1e-9));

    let flat = ImageTensor::filled(8, 8, 1, 0.6);
    report.push(check(
        "entropy of constant image",
        metrics::gray_entropy(&flat),
        1e-12,
    ));

    let full = ImageTensor::from_fn(16, 16, 1, |y, x, _| (y * 16 + x) as f64 / 255.0);
    report.push(check(
        "entropy of uniform histogram is 8",
        (metrics::gray_entropy(&full) - 8.0).abs(),
        1e-9,
    ));

    let gray_rgb = ImageTensor::from_fn(16, 16, 3, |y, x, _| ((y * 31 + x * 7) % 17) as f64 / 16.0);
    let ce_err =
        (metrics::color_entropy(&gray_rgb).unwrap() - 3.0 * metrics::gray_entropy(&gray_rgb)).abs();
    report.push(check("color entropy of gray-valued image", ce_err, 1e-12));
}

/// Runs every check and returns the table. Expected wall time is a few
/// seconds; everything is seeded and deterministic.
pub fn run_selftest() -> SelfTestReport {
    let mut checks = Vec::new();
    op_checks(&mut checks);
    full_loss_check(&mut checks);
    checker_sensitivity(&mut checks);
    curve_checks(&mut checks);
    metric_checks(&mut checks);
    SelfTestReport { checks }
}
