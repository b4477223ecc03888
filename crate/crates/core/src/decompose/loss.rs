//! The five loss terms driving the decomposition.
//!
//! Every norm is mean-normalized (element count, or its square root for
//! Frobenius/L2 norms) so the default weights behave the same at any image
//! size. Weighting fields and targets derived from the inputs are detached:
//! they steer the optimization but receive no gradient.

use crate::autodiff::{Axis, Tensor};

use super::DecomposeConfig;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Mean L1 distance between the recomposed image and the source:
/// `mean |R * L + N - S|`. The single-channel `L` broadcasts over `R`.
pub fn reconstruction_loss<'t>(
    r: Tensor<'t>,
    l: Tensor<'t>,
    n: Tensor<'t>,
    s: Tensor<'t>,
) -> Tensor<'t> {
    (r * l + n - s).abs().mean()
}

/// Mean L1 distance between the two reflectance estimates.
pub fn consistency_loss<'t>(r_low: Tensor<'t>, r_he: Tensor<'t>) -> Tensor<'t> {
    (r_low - r_he).abs().mean()
}

/// Averages a `[C, H, W]` tensor over channels into `[1, H, W]`.
fn channel_mean(t: Tensor<'_>) -> Tensor<'_> {
    let c = t.shape().dims()[0];
    let mut acc = t.slice_channel(0);
    for ch in 1..c {
        acc = acc + t.slice_channel(ch);
    }
    acc.mul_scalar(1.0 / c as f64)
}

/// Structure-aware smoothness plus cross-estimate edge consistency for one
/// illumination map. Per direction:
/// `mean(|grad L| * exp(-alpha * mean_ch |grad R|))`
/// `+ mean(|grad L| * exp(-alpha * (|grad L_low| + |grad L_he|)))`,
/// summed over the horizontal and vertical directions. Both exponential
/// weight fields are detached.
pub fn illumination_loss<'t>(
    l_self: Tensor<'t>,
    r_self: Tensor<'t>,
    l_low: Tensor<'t>,
    l_he: Tensor<'t>,
    alpha: f64,
) -> Tensor<'t> {
    let mut total: Option<Tensor<'t>> = None;
    for axis in [Axis::Horizontal, Axis::Vertical] {
        let grad_l = l_self.spatial_diff(axis).abs();

        let structure = channel_mean(r_self.spatial_diff(axis).abs()).detach();
        let smooth = (grad_l * structure.mul_scalar(-alpha).exp()).mean();

        let mutual = (l_low.spatial_diff(axis).abs() + l_he.spatial_diff(axis).abs()).detach();
        let consistent = (grad_l * mutual.mul_scalar(-alpha).exp()).mean();

        let term = smooth + consistent;
        total = Some(match total {
            None => term,
            Some(acc) => acc + term,
        });
    }
    total.expect("two directions")
}

/// Zeroes gradient samples with magnitude below `epsilon`; the result is a
/// detached constant field.
pub fn suppress_small_gradients<'t>(gradient: Tensor<'t>, epsilon: f64) -> Tensor<'t> {
    assert!(epsilon >= 0.0, "threshold must be non-negative");
    let masked: Vec<f64> = gradient
        .values()
        .into_iter()
        .map(|v| if v.abs() < epsilon { 0.0 } else { v })
        .collect();
    let shape = gradient.shape();
    gradient
        .tape()
        .constant(crate::autodiff::TensorData::new(shape, masked))
}

/// Differentiable hue angle of a `[3, H, W]` tensor, matching
/// [`crate::img::ImageTensor::hue_map`] bit for bit in the forward pass.
pub fn hue_of(rgb: Tensor<'_>) -> Tensor<'_> {
    let r = rgb.slice_channel(0);
    let g = rgb.slice_channel(1);
    let b = rgb.slice_channel(2);
    let y = (g - b).mul_scalar(SQRT3);
    let x = r.mul_scalar(2.0) - g - b;
    y.atan2(x)
}

/// Contrast and color guidance for one reflectance map:
/// per channel and direction, `||grad R - beta * suppressed(grad S)||_F /
/// sqrt(HW)` averaged over channels, plus the circular hue mismatch
/// `||wrap(hue R - hue S)||_2 / sqrt(HW)`. The amplified gradient target and
/// the source hue are constants.
pub fn reflectance_loss<'t>(
    r: Tensor<'t>,
    s: Tensor<'t>,
    beta: f64,
    epsilon: f64,
) -> Tensor<'t> {
    let dims = r.shape();
    let (h, w) = (dims.dims()[1], dims.dims()[2]);
    let inv_sqrt_px = 1.0 / ((h * w) as f64).sqrt();

    let mut contrast: Option<Tensor<'t>> = None;
    for axis in [Axis::Horizontal, Axis::Vertical] {
        let grad_r = r.spatial_diff(axis);
        let target = suppress_small_gradients(s.spatial_diff(axis), epsilon).mul_scalar(beta);
        let residual = grad_r - target;
        for ch in 0..3 {
            let term = residual.slice_channel(ch).fro().mul_scalar(inv_sqrt_px);
            contrast = Some(match contrast {
                None => term,
                Some(acc) => acc + term,
            });
        }
    }
    let contrast = contrast.expect("channels").mul_scalar(1.0 / 3.0);

    let hue_mismatch = (hue_of(r) - hue_of(s).detach())
        .wrap_angle()
        .fro()
        .mul_scalar(inv_sqrt_px);

    contrast + hue_mismatch
}

/// Intensity-weighted noise magnitude: `||S * N||_F / sqrt(numel)`. Dark
/// pixels tolerate noise; bright pixels do not.
pub fn noise_loss<'t>(s: Tensor<'t>, n: Tensor<'t>) -> Tensor<'t> {
    let numel = n.numel() as f64;
    (s * n).fro().mul_scalar(1.0 / numel.sqrt())
}

/// The decomposed maps for both renderings of one image.
pub struct DecomposedPair<'t> {
    pub r_low: Tensor<'t>,
    pub l_low: Tensor<'t>,
    pub n_low: Tensor<'t>,
    pub r_he: Tensor<'t>,
    pub l_he: Tensor<'t>,
    pub n_he: Tensor<'t>,
}

/// All nine loss terms, unweighted.
pub struct LossTerms<'t> {
    pub rec_low: Tensor<'t>,
    pub rec_he: Tensor<'t>,
    pub rc: Tensor<'t>,
    pub illum_low: Tensor<'t>,
    pub illum_he: Tensor<'t>,
    pub reflect_low: Tensor<'t>,
    pub reflect_he: Tensor<'t>,
    pub noise_low: Tensor<'t>,
    pub noise_he: Tensor<'t>,
}

pub fn loss_terms<'t>(
    pair: &DecomposedPair<'t>,
    s_low: Tensor<'t>,
    s_he: Tensor<'t>,
    cfg: &DecomposeConfig,
) -> LossTerms<'t> {
    LossTerms {
        rec_low: reconstruction_loss(pair.r_low, pair.l_low, pair.n_low, s_low),
        rec_he: reconstruction_loss(pair.r_he, pair.l_he, pair.n_he, s_he),
        rc: consistency_loss(pair.r_low, pair.r_he),
        illum_low: illumination_loss(pair.l_low, pair.r_low, pair.l_low, pair.l_he, cfg.alpha),
        illum_he: illumination_loss(pair.l_he, pair.r_he, pair.l_low, pair.l_he, cfg.alpha),
        reflect_low: reflectance_loss(pair.r_low, s_low, cfg.beta, cfg.eps),
        reflect_he: reflectance_loss(pair.r_he, s_he, cfg.beta, cfg.eps),
        noise_low: noise_loss(s_low, pair.n_low),
        noise_he: noise_loss(s_he, pair.n_he),
    }
}

/// Weighted sum of the terms:
/// `lambda_rc * rc + sum over renderings of (rec + lambda_illum * illum +
/// lambda_reflect * reflect + lambda_noise * noise)`.
pub fn total_loss<'t>(terms: &LossTerms<'t>, cfg: &DecomposeConfig) -> Tensor<'t> {
    terms.rc.mul_scalar(cfg.lambda_rc)
        + (terms.rec_low + terms.rec_he)
        + (terms.illum_low + terms.illum_he).mul_scalar(cfg.lambda_illum)
        + (terms.reflect_low + terms.reflect_he).mul_scalar(cfg.lambda_reflect)
        + (terms.noise_low + terms.noise_he).mul_scalar(cfg.lambda_noise)
}
