//! Seeded synthetic scenes: a textured reflectance lit by a piecewise-smooth
//! illumination field plus sensor-style noise. Used by tests, self-checks,
//! and demos; everything is deterministic in the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::img::ImageTensor;

/// Ground-truth components of a generated scene.
pub struct SyntheticScene {
    /// Observed image `R * L + noise`, clamped to `[0, 1]`.
    pub source: ImageTensor,
    /// True 3-channel reflectance in `[0.1, 1]`.
    pub reflectance: ImageTensor,
    /// True single-channel illumination.
    pub illumination: ImageTensor,
}

/// Low-light scene: illumination in `[0.05, 0.3]` with a smooth ramp and a
/// step edge, textured color reflectance, additive Gaussian noise
/// (sigma 0.02).
pub fn low_light_scene(height: usize, width: usize, seed: u64) -> SyntheticScene {
    scene(height, width, seed, 0.05, 0.3, 0.02)
}

/// Normally-lit variant used for metric sanity checks.
pub fn natural_scene(height: usize, width: usize, seed: u64) -> ImageTensor {
    scene(height, width, seed, 0.35, 0.95, 0.02).source
}

fn scene(
    height: usize,
    width: usize,
    seed: u64,
    light_lo: f64,
    light_hi: f64,
    noise_sigma: f64,
) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Piecewise-smooth illumination: directional ramp with a step partway
    // across, normalized into [light_lo, light_hi].
    let ramp_x = rng.random_range(0.3..1.0);
    let ramp_y = rng.random_range(0.3..1.0);
    let step_col = rng.random_range(width / 4..3 * width / 4);
    let step_gain = rng.random_range(0.25..0.45);
    let mut light = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / (width - 1).max(1) as f64;
            let fy = y as f64 / (height - 1).max(1) as f64;
            let mut v = ramp_x * fx + ramp_y * fy;
            if x >= step_col {
                v += step_gain;
            }
            light[y * width + x] = v;
        }
    }
    let (lo, hi) = light
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    for v in &mut light {
        *v = light_lo + (light_hi - light_lo) * (*v - lo) / (hi - lo);
    }
    let illumination = ImageTensor::from_clamped(height, width, 1, light);

    // Textured reflectance: a coarse random color lattice, bilinearly
    // upsampled, plus fine per-pixel texture.
    let cells = 6usize;
    let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1) * 3)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let mut refl = vec![0.0; height * width * 3];
    for y in 0..height {
        for x in 0..width {
            let gx = x as f64 / width as f64 * cells as f64;
            let gy = y as f64 / height as f64 * cells as f64;
            let (cx, cy) = (gx.floor() as usize, gy.floor() as usize);
            let (fx, fy) = (gx - cx as f64, gy - cy as f64);
            for c in 0..3 {
                let at = |yy: usize, xx: usize| lattice[(yy * (cells + 1) + xx) * 3 + c];
                let top = at(cy, cx) * (1.0 - fx) + at(cy, cx + 1) * fx;
                let bot = at(cy + 1, cx) * (1.0 - fx) + at(cy + 1, cx + 1) * fx;
                let smooth = top * (1.0 - fy) + bot * fy;
                let texture = rng.random_range(-0.12..0.12);
                refl[(y * width + x) * 3 + c] = (0.1 + 0.9 * smooth + texture).clamp(0.1, 1.0);
            }
        }
    }
    let reflectance = ImageTensor::from_clamped(height, width, 3, refl);

    let mut source = vec![0.0; height * width * 3];
    for p in 0..height * width {
        for c in 0..3 {
            let clean = reflectance.data()[p * 3 + c] * illumination.data()[p];
            source[p * 3 + c] = clean + gaussian(&mut rng, noise_sigma);
        }
    }
    SyntheticScene {
        source: ImageTensor::from_clamped(height, width, 3, source),
        reflectance,
        illumination,
    }
}

/// Box-Muller sample with the given standard deviation.
fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
