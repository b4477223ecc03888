//! Objective image-quality metrics: 256-bin entropies, mean illumination
//! and gradient on the 8-bit scale, PSNR, and single-scale SSIM.

use thiserror::Error;

use crate::img::ImageTensor;

/// PSNR reported for (near-)identical images instead of infinity.
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
// K1 = 0.01, K2 = 0.03 at dynamic range 1.0.
const SSIM_C1: f64 = 1e-4;
const SSIM_C2: f64 = 9e-4;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image {a_h}x{a_w}x{a_c} and reference {b_h}x{b_w}x{b_c} differ in shape")]
    ShapeMismatch {
        a_h: usize,
        a_w: usize,
        a_c: usize,
        b_h: usize,
        b_w: usize,
        b_c: usize,
    },
    #[error("image {h}x{w} is smaller than the {win}x{win} ssim window")]
    TooSmall { h: usize, w: usize, win: usize },
    #[error("color entropy needs a 3-channel image")]
    NeedsColor,
}

/// One row of objective metrics. `psnr`/`ssim` are present only when a
/// reference image was supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Gray entropy in bits, within `[0, 8]`.
    pub ge: f64,
    /// Color entropy in bits (sum over RGB), within `[0, 24]`.
    pub ce: f64,
    /// Gray mean illumination on the 0-255 scale.
    pub gmi: f64,
    /// Gray mean gradient magnitude on the 0-255 scale.
    pub gmg: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

fn gray_of(img: &ImageTensor) -> ImageTensor {
    match img.channels() {
        1 => img.clone(),
        _ => img.to_grayscale().expect("3-channel by construction"),
    }
}

fn entropy_256(values: impl Iterator<Item = f64>) -> f64 {
    let mut bins = [0u64; 256];
    let mut n = 0u64;
    for v in values {
        bins[(v * 255.0).round() as usize] += 1;
        n += 1;
    }
    let n = n as f64;
    bins.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Shannon entropy of the 256-bin gray histogram, in bits.
pub fn gray_entropy(img: &ImageTensor) -> f64 {
    entropy_256(gray_of(img).data().iter().copied())
}

/// Sum of the per-channel 256-bin entropies of an RGB image.
pub fn color_entropy(img: &ImageTensor) -> Result<f64, MetricsError> {
    if img.channels() != 3 {
        return Err(MetricsError::NeedsColor);
    }
    Ok((0..3)
        .map(|c| entropy_256(img.data().iter().skip(c).step_by(3).copied()))
        .sum())
}

/// Mean gray level on the 0-255 scale.
pub fn gray_mean_illumination(img: &ImageTensor) -> f64 {
    let gray = gray_of(img);
    255.0 * gray.data().iter().sum::<f64>() / gray.data().len() as f64
}

/// Mean per-pixel gradient magnitude `sqrt(gh^2 + gv^2)` of the gray image
/// on the 0-255 scale, using forward differences with replicate boundary.
pub fn gray_mean_gradient(img: &ImageTensor) -> f64 {
    let gray = gray_of(img);
    let (gh, gv) = gray.spatial_gradients();
    let sum: f64 = gh
        .data
        .iter()
        .zip(&gv.data)
        .map(|(&h, &v)| (h * h + v * v).sqrt())
        .sum();
    255.0 * sum / gh.data.len() as f64
}

fn check_shapes(a: &ImageTensor, b: &ImageTensor) -> Result<(), MetricsError> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(MetricsError::ShapeMismatch {
            a_h: a.height(),
            a_w: a.width(),
            a_c: a.channels(),
            b_h: b.height(),
            b_w: b.width(),
            b_c: b.channels(),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all samples on the `[0, 1]` scale,
/// capped at [`PSNR_CAP_DB`].
pub fn psnr(img: &ImageTensor, reference: &ImageTensor) -> Result<f64, MetricsError> {
    check_shapes(img, reference)?;
    let mse = img
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / img.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - center;
            let dx = x as f64 - center;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Single-scale SSIM on the gray images: 11x11 Gaussian window with
/// sigma 1.5 at dynamic range 1.0, averaged over the fully-valid window
/// positions (no padding).
pub fn ssim(img: &ImageTensor, reference: &ImageTensor) -> Result<f64, MetricsError> {
    check_shapes(img, reference)?;
    let (h, w) = (img.height(), img.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            h,
            w,
            win: SSIM_WINDOW,
        });
    }
    let a = gray_of(img);
    let b = gray_of(reference);
    let (a, b) = (a.data(), b.data());
    let win = gaussian_window();

    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=(h - SSIM_WINDOW) {
        for left in 0..=(w - SSIM_WINDOW) {
            let (mut ma, mut mb, mut maa, mut mbb, mut mab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for wy in 0..SSIM_WINDOW {
                let row = (top + wy) * w + left;
                let wrow = wy * SSIM_WINDOW;
                for wx in 0..SSIM_WINDOW {
                    let weight = win[wrow + wx];
                    let va = a[row + wx];
                    let vb = b[row + wx];
                    ma += weight * va;
                    mb += weight * vb;
                    maa += weight * va * va;
                    mbb += weight * vb * vb;
                    mab += weight * va * vb;
                }
            }
            let var_a = maa - ma * ma;
            let var_b = mbb - mb * mb;
            let cov = mab - ma * mb;
            let s = ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2));
            total += s;
            count += 1;
        }
    }
    // Anticorrelated windows can drive the raw score slightly negative;
    // the reported index is defined on [0, 1].
    Ok((total / count as f64).clamp(0.0, 1.0))
}

/// Computes every applicable metric. Grayscale inputs report
/// `ce = 3 * ge` (the channels are identical by construction).
pub fn report(
    img: &ImageTensor,
    reference: Option<&ImageTensor>,
) -> Result<MetricsReport, MetricsError> {
    let ge = gray_entropy(img);
    let ce = match img.channels() {
        3 => color_entropy(img)?,
        _ => 3.0 * ge,
    };
    let (psnr_v, ssim_v) = match reference {
        Some(r) => (Some(psnr(img, r)?), Some(ssim(img, r)?)),
        None => (None, None),
    };
    Ok(MetricsReport {
        ge,
        ce,
        gmi: gray_mean_illumination(img),
        gmg: gray_mean_gradient(img),
        psnr: psnr_v,
        ssim: ssim_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_image(h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(h, w, 1, |_, _, _| rng.random_range(0.0..=1.0))
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(gray_entropy(&ImageTensor::filled(5, 5, 1, 0.37)), 0.0);

        // Every 8-bit level exactly once: maximal entropy.
        let full = ImageTensor::from_fn(16, 16, 1, |y, x, _| (y * 16 + x) as f64 / 255.0);
        assert!((gray_entropy(&full) - 8.0).abs() < 1e-9);

        // Two equal-mass levels: one bit.
        let coin = ImageTensor::from_fn(2, 2, 1, |y, x, _| ((y + x) % 2) as f64);
        assert!((gray_entropy(&coin) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn color_entropy_examples() {
        let constant = ImageTensor::filled(4, 4, 3, 0.2);
        assert_eq!(color_entropy(&constant).unwrap(), 0.0);

        let full = ImageTensor::from_fn(16, 16, 3, |y, x, _| (y * 16 + x) as f64 / 255.0);
        assert!((color_entropy(&full).unwrap() - 24.0).abs() < 1e-9);

        // Gray-valued RGB: exactly three times the gray entropy.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grayish = ImageTensor::from_fn(8, 8, 1, |_, _, _| rng.random_range(0.0..=1.0));
        let rgb = ImageTensor::from_fn(8, 8, 3, |y, x, _| grayish.sample(y, x, 0));
        assert!((color_entropy(&rgb).unwrap() - 3.0 * gray_entropy(&rgb)).abs() < 1e-12);

        assert!(matches!(
            color_entropy(&grayish),
            Err(MetricsError::NeedsColor)
        ));
    }

    #[test]
    fn mean_illumination_examples() {
        assert_eq!(gray_mean_illumination(&ImageTensor::filled(3, 3, 3, 0.0)), 0.0);
        assert!((gray_mean_illumination(&ImageTensor::filled(3, 3, 3, 1.0)) - 255.0).abs() < 1e-9);
        let half = ImageTensor::from_fn(2, 2, 1, |y, _, _| y as f64);
        assert!((gray_mean_illumination(&half) - 127.5).abs() < 1e-12);
        // A constant 128/255 image reads exactly 128.
        let mid = ImageTensor::filled(4, 4, 1, 128.0 / 255.0);
        assert!((gray_mean_illumination(&mid) - 128.0).abs() < 1e-12);
    }

    #[test]
    fn mean_gradient_examples() {
        assert_eq!(gray_mean_gradient(&ImageTensor::filled(6, 6, 3, 0.5)), 0.0);

        let w = 9usize;
        let ramp = ImageTensor::from_fn(4, w, 1, |_, x, _| x as f64 / (w - 1) as f64);
        // Interior columns carry slope 1/(W-1); the last column is zero.
        let expected = 255.0 * (w - 1) as f64 / (w - 1) as f64 / w as f64;
        assert!((gray_mean_gradient(&ramp) - expected).abs() < 1e-9);

        // 4x4 checkerboard, brute-forced over all 16 pixels.
        let board = ImageTensor::from_fn(4, 4, 1, |y, x, _| ((y + x) % 2) as f64);
        let mut expect = 0.0;
        for y in 0..4 {
            for x in 0..4 {
                let v = board.sample(y, x, 0);
                let gh = if x + 1 < 4 { board.sample(y, x + 1, 0) - v } else { 0.0 };
                let gv = if y + 1 < 4 { board.sample(y + 1, x, 0) - v } else { 0.0 };
                expect += (gh * gh + gv * gv).sqrt();
            }
        }
        expect *= 255.0 / 16.0;
        assert!((gray_mean_gradient(&board) - expect).abs() < 1e-12);
    }

    #[test]
    fn psnr_examples() {
        let x = noise_image(8, 8, 1);
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP_DB);

        let base = ImageTensor::filled(8, 8, 1, 0.4);
        let off = ImageTensor::filled(8, 8, 1, 0.5);
        assert!((psnr(&off, &base).unwrap() - 20.0).abs() < 1e-9);

        let black = ImageTensor::filled(8, 8, 1, 0.0);
        let white = ImageTensor::filled(8, 8, 1, 1.0);
        assert!((psnr(&white, &black).unwrap()).abs() < 1e-12);

        assert!(matches!(
            psnr(&black, &ImageTensor::filled(4, 4, 1, 0.0)),
            Err(MetricsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn psnr_decreases_with_error_magnitude() {
        let base = ImageTensor::filled(8, 8, 1, 0.1);
        let mut prev = f64::INFINITY;
        for off in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let shifted = ImageTensor::filled(8, 8, 1, 0.1 + off);
            let p = psnr(&shifted, &base).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn entropy_is_shuffle_invariant() {
        let img = noise_image(12, 12, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut shuffled = img.data().to_vec();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let perm = ImageTensor::new(12, 12, 1, shuffled).unwrap();
        assert!((gray_entropy(&img) - gray_entropy(&perm)).abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let x = noise_image(16, 16, 21);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);

        let y = noise_image(16, 16, 22);
        let ab = ssim(&x, &y).unwrap();
        let ba = ssim(&y, &x).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn ssim_constant_closed_form() {
        let a = 0.3;
        let b = 0.7;
        let ia = ImageTensor::filled(12, 12, 1, a);
        let ib = ImageTensor::filled(12, 12, 1, b);
        let expected = (2.0 * a * b + SSIM_C1) / (a * a + b * b + SSIM_C1);
        assert!((ssim(&ia, &ib).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ssim_anticorrelated_noise_scores_low() {
        let x = noise_image(64, 64, 5);
        let inv = ImageTensor::new(
            64,
            64,
            1,
            x.data().iter().map(|&v| 1.0 - v).collect(),
        )
        .unwrap();
        assert!(ssim(&inv, &x).unwrap() < 0.2);
    }

    /// Independent straight-loop SSIM oracle with the same constants.
    fn ssim_reference(a: &ImageTensor, b: &ImageTensor) -> f64 {
        let (h, w) = (a.height(), a.width());
        let sigma = 1.5f64;
        let mut weights = vec![];
        for dy in -5i64..=5 {
            for dx in -5i64..=5 {
                weights.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
            }
        }
        let wsum: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut count = 0;
        for cy in 5..h as i64 - 5 {
            for cx in 5..w as i64 - 5 {
                let (mut ma, mut mb) = (0.0, 0.0);
                let mut idx = 0;
                for dy in -5i64..=5 {
                    for dx in -5i64..=5 {
                        let wgt = weights[idx] / wsum;
                        idx += 1;
                        ma += wgt * a.sample((cy + dy) as usize, (cx + dx) as usize, 0);
                        mb += wgt * b.sample((cy + dy) as usize, (cx + dx) as usize, 0);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                let mut idx = 0;
                for dy in -5i64..=5 {
                    for dx in -5i64..=5 {
                        let wgt = weights[idx] / wsum;
                        idx += 1;
                        let da = a.sample((cy + dy) as usize, (cx + dx) as usize, 0) - ma;
                        let db = b.sample((cy + dy) as usize, (cx + dx) as usize, 0) - mb;
                        va += wgt * da * da;
                        vb += wgt * db * db;
                        cov += wgt * da * db;
                    }
                }
                acc += ((2.0 * ma * mb + 1e-4) * (2.0 * cov + 9e-4))
                    / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
                count += 1;
            }
        }
        (acc / count as f64).clamp(0.0, 1.0)
    }

    #[test]
    fn ssim_matches_independent_oracle() {
        let x = noise_image(20, 24, 31);
        let n = noise_image(20, 24, 32);
        // Partially correlated pair keeps the score well inside (0, 1).
        let y = ImageTensor::new(
            20,
            24,
            1,
            x.data()
                .iter()
                .zip(n.data())
                .map(|(&a, &b)| 0.7 * a + 0.3 * b)
                .collect(),
        )
        .unwrap();
        let fast = ssim(&x, &y).unwrap();
        let slow = ssim_reference(&x, &y);
        assert!(fast > 0.2 && fast < 1.0);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }

    #[test]
    fn ssim_rejects_small_images() {
        let tiny = ImageTensor::filled(8, 8, 1, 0.5);
        assert!(matches!(
            ssim(&tiny, &tiny),
            Err(MetricsError::TooSmall { .. })
        ));
    }

    #[test]
    fn report_optionality_and_constant_case() {
        let mid = ImageTensor::filled(16, 16, 3, 128.0 / 255.0);
        let r = report(&mid, None).unwrap();
        assert!(r.psnr.is_none() && r.ssim.is_none());
        assert_eq!(r.ge, 0.0);
        assert_eq!(r.ce, 0.0);
        assert!((r.gmi - 128.0).abs() < 1e-9);
        assert_eq!(r.gmg, 0.0);

        let with_ref = report(&mid, Some(&mid)).unwrap();
        assert_eq!(with_ref.psnr.unwrap(), PSNR_CAP_DB);
        assert!((with_ref.ssim.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_ranges_on_textured_scene() {
        let scene = crate::synth::natural_scene(96, 96, 17);
        let r = report(&scene, None).unwrap();
        assert!(r.ge > 5.0 && r.ge <= 8.0, "ge = {}", r.ge);
        assert!(r.ce > 15.0 && r.ce <= 24.0, "ce = {}", r.ce);
        assert!(r.gmi >= 0.0 && r.gmi <= 255.0);
        assert!(r.gmg >= 0.0);
    }
}
