//! Illumination enhancement.
//!
//! The saturation curve `l_hat = 1 - (1 - l)^eta` brightens dark pixels
//! moderately while pushing bright pixels toward saturation; it is the
//! mirror image of gamma correction `l^(1/gamma)` across the line
//! `x + y = 1`. The exponent is chosen per image so that the dimmest pixel
//! of the bright cluster (found by 2-means over the illumination map) lands
//! on [`BRIGHT_TARGET`].

use log::warn;
use thiserror::Error;

use crate::img::ImageTensor;

/// Illumination level the dimmest bright-cluster pixel is mapped to.
pub const BRIGHT_TARGET: f64 = 0.8;

/// Exponent clamp range. Below 1 the curve would darken; the upper bound
/// caps the blow-up as the bright threshold approaches 0.
pub const ETA_MIN: f64 = 1.0;
pub const ETA_MAX: f64 = 20.0;

/// Largest pixel count fed to k-means; bigger maps are strided down, and the
/// bright threshold is then recomputed exactly over all pixels.
const KMEANS_SAMPLE_CAP: usize = 65_536;

#[derive(Debug, Error)]
pub enum NismError {
    #[error("k-means needs at least two distinct values")]
    TooFewDistinctValues,
    #[error("reflectance {r_h}x{r_w}x{r_c} incompatible with illumination {l_h}x{l_w}x{l_c}")]
    ShapeMismatch {
        r_h: usize,
        r_w: usize,
        r_c: usize,
        l_h: usize,
        l_w: usize,
        l_c: usize,
    },
}

/// Curve parameters estimated from an illumination map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NismParams {
    /// Minimum illumination among bright-cluster pixels, in `(0, 1)`.
    pub t: f64,
    /// Curve exponent, clamped to `[ETA_MIN, ETA_MAX]`.
    pub eta: f64,
    /// Set when the map was too flat (or fully bright) to cluster; the
    /// curve falls back to the identity (`eta = 1`).
    pub degenerate: bool,
}

/// Lloyd's algorithm with two clusters, deterministically initialized at the
/// 25th and 75th percentiles. Runs at most 100 iterations or until centroid
/// movement drops below 1e-6. Returns ascending centroids and a 0/1 label
/// per value (0 = dark cluster; ties assign dark).
pub fn kmeans_1d(values: &[f64]) -> Result<([f64; 2], Vec<u8>), NismError> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() < 2 || sorted[0] == sorted[sorted.len() - 1] {
        return Err(NismError::TooFewDistinctValues);
    }
    let mut c0 = percentile(&sorted, 0.25);
    let mut c1 = percentile(&sorted, 0.75);
    if c0 == c1 {
        // Quartiles coincide on heavily skewed data; widen to the extremes.
        c0 = sorted[0];
        c1 = sorted[sorted.len() - 1];
    }
    for _ in 0..100 {
        // Accumulate over the sorted copy: the means come out bitwise
        // identical for any permutation of the input.
        let (mut sum0, mut n0, mut sum1, mut n1) = (0.0, 0usize, 0.0, 0usize);
        for &v in &sorted {
            if (v - c0).abs() <= (v - c1).abs() {
                sum0 += v;
                n0 += 1;
            } else {
                sum1 += v;
                n1 += 1;
            }
        }
        let next0 = if n0 > 0 { sum0 / n0 as f64 } else { c0 };
        let next1 = if n1 > 0 { sum1 / n1 as f64 } else { c1 };
        let movement = (next0 - c0).abs().max((next1 - c1).abs());
        c0 = next0;
        c1 = next1;
        if movement < 1e-6 {
            break;
        }
    }
    if c0 > c1 {
        std::mem::swap(&mut c0, &mut c1);
    }
    let labels = values
        .iter()
        .map(|&v| u8::from((v - c0).abs() > (v - c1).abs()))
        .collect();
    Ok(([c0, c1], labels))
}

/// Linear-interpolation percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Exponent that maps threshold `t` to [`BRIGHT_TARGET`], clamped:
/// `eta = ln(1 - BRIGHT_TARGET) / ln(1 - t)`.
pub fn eta_for_threshold(t: f64) -> f64 {
    let raw = (1.0 - BRIGHT_TARGET).ln() / (1.0 - t).ln();
    raw.clamp(ETA_MIN, ETA_MAX)
}

/// Estimates curve parameters from a single-channel illumination map.
/// Near-constant maps (`max - min < 1e-3`) and thresholds at the very top
/// of the range (`t >= 1 - 1e-6`) are degenerate: the curve falls back to
/// the identity with a warning.
pub fn estimate_eta(illumination: &ImageTensor) -> NismParams {
    assert_eq!(
        illumination.channels(),
        1,
        "estimate_eta expects a single-channel illumination map"
    );
    let values = illumination.data();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo < 1e-3 {
        warn!("illumination map is near-constant (range {:.2e}); using identity curve", hi - lo);
        return NismParams {
            t: hi.clamp(1e-6, 1.0 - 1e-6),
            eta: 1.0,
            degenerate: true,
        };
    }

    let stride = values.len().div_ceil(KMEANS_SAMPLE_CAP).max(1);
    let sampled: Vec<f64> = values.iter().step_by(stride).copied().collect();
    let centroids = match kmeans_1d(&sampled) {
        Ok((c, _)) => c,
        // The stride can land on identical values even when the full map
        // has spread; fall back to clustering everything.
        Err(_) => kmeans_1d(values).expect("map has spread >= 1e-3")
            .0,
    };

    // Exact assignment over all pixels: bright means strictly above the
    // midpoint between centroids (ties are dark, matching kmeans_1d).
    let midpoint = (centroids[0] + centroids[1]) / 2.0;
    let t = values
        .iter()
        .copied()
        .filter(|&v| v > midpoint)
        .fold(f64::INFINITY, f64::min);
    if t >= 1.0 - 1e-6 {
        warn!("bright threshold {t:.6} is saturated; using identity curve");
        return NismParams {
            t: t.clamp(1e-6, 1.0 - 1e-6),
            eta: 1.0,
            degenerate: true,
        };
    }
    NismParams {
        t,
        eta: eta_for_threshold(t),
        degenerate: false,
    }
}

/// Saturation curve on a single value: `1 - (1 - l)^eta`.
pub fn nism_curve(l: f64, eta: f64) -> f64 {
    1.0 - (1.0 - l).clamp(0.0, 1.0).powf(eta)
}

/// Gamma correction on a single value: `l^(1/gamma)`.
pub fn gamma_curve(l: f64, gamma: f64) -> f64 {
    l.clamp(0.0, 1.0).powf(1.0 / gamma)
}

/// Applies the saturation curve samplewise. Requires `eta >= 1` so the
/// curve never darkens.
pub fn apply_nism(illumination: &ImageTensor, eta: f64) -> ImageTensor {
    assert!(eta >= 1.0 && eta.is_finite(), "eta must be finite and >= 1");
    map_samples(illumination, |l| nism_curve(l, eta))
}

/// Applies gamma correction samplewise. Requires `gamma > 0`.
pub fn apply_gamma(illumination: &ImageTensor, gamma: f64) -> ImageTensor {
    assert!(gamma > 0.0 && gamma.is_finite(), "gamma must be finite and > 0");
    map_samples(illumination, |l| gamma_curve(l, gamma))
}

fn map_samples(img: &ImageTensor, f: impl Fn(f64) -> f64) -> ImageTensor {
    let data = img.data().iter().map(|&v| f(v)).collect();
    ImageTensor::from_clamped(img.height(), img.width(), img.channels(), data)
}

/// Recombines reflectance with an enhanced illumination map:
/// per-channel product, clamped to `[0, 1]`.
pub fn recompose(
    reflectance: &ImageTensor,
    illumination: &ImageTensor,
) -> Result<ImageTensor, NismError> {
    if reflectance.height() != illumination.height()
        || reflectance.width() != illumination.width()
        || reflectance.channels() != 3
        || illumination.channels() != 1
    {
        return Err(NismError::ShapeMismatch {
            r_h: reflectance.height(),
            r_w: reflectance.width(),
            r_c: reflectance.channels(),
            l_h: illumination.height(),
            l_w: illumination.width(),
            l_c: illumination.channels(),
        });
    }
    let l = illumination.data();
    let data = reflectance
        .data()
        .chunks_exact(3)
        .zip(l)
        .flat_map(|(rgb, &lv)| rgb.iter().map(move |&rv| (rv * lv).clamp(0.0, 1.0)))
        .collect();
    Ok(ImageTensor::from_clamped(
        reflectance.height(),
        reflectance.width(),
        3,
        data,
    ))
}
