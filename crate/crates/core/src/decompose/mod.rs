//! Per-image self-supervised decomposition into reflectance, illumination,
//! and noise.
//!
//! The input image and its histogram-equalized rendering are decomposed
//! jointly: both show the same scene, so they must share a reflectance.
//! Each call optimizes fresh parameters against the weighted loss in
//! [`loss`] with Adam, one tape per iteration.

pub mod loss;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{grad_check_multi, AdamState, Shape, Tape, Tensor, TensorData};
use crate::img::ImageTensor;
use loss::{loss_terms, total_loss, DecomposedPair, LossTerms};

/// How the decomposed maps are produced from the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Per-pixel logit maps, independent for the two renderings. Fast and
    /// memory-light.
    Direct,
    /// A small shared CNN applied to both renderings: a relu conv stack
    /// followed by three 3x3 heads.
    Cnn,
}

/// Loss weights and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeConfig {
    /// Reflectance-consistency weight.
    pub lambda_rc: f64,
    /// Illumination smoothness/consistency weight.
    pub lambda_illum: f64,
    /// Reflectance contrast-and-color weight.
    pub lambda_reflect: f64,
    /// Noise-intensity weight.
    pub lambda_noise: f64,
    /// Structure-awareness coefficient inside the illumination weights.
    pub alpha: f64,
    /// Gradient amplification factor for the contrast target.
    pub beta: f64,
    /// Gradient suppression threshold in [0, 1) intensity units.
    pub eps: f64,
    pub iterations: usize,
    pub lr: f64,
    pub mode: Mode,
    pub seed: u64,
    /// Hidden width of the CNN stack (`mode = cnn`).
    pub channels: usize,
    /// Hidden conv layers in the CNN stack (`mode = cnn`).
    pub depth: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            lambda_rc: 0.01,
            lambda_illum: 0.1,
            lambda_reflect: 0.001,
            lambda_noise: 0.01,
            alpha: 10.0,
            beta: 10.0,
            eps: 0.01,
            iterations: 500,
            lr: 1e-3,
            mode: Mode::Direct,
            seed: 0,
            channels: 32,
            depth: 5,
        }
    }
}

impl DecomposeConfig {
    pub fn validate(&self) -> Result<(), DecomposeError> {
        let weights = [
            ("lambda_rc", self.lambda_rc),
            ("lambda_illum", self.lambda_illum),
            ("lambda_reflect", self.lambda_reflect),
            ("lambda_noise", self.lambda_noise),
        ];
        for (name, w) in weights {
            if !(0.0..1.0).contains(&w) {
                return Err(DecomposeError::Config(format!(
                    "{name} must lie in [0, 1), got {w}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(DecomposeError::Config(format!(
                "eps must lie in [0, 1), got {}",
                self.eps
            )));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(DecomposeError::Config(
                "alpha and beta must be non-negative".into(),
            ));
        }
        if self.iterations < 1 {
            return Err(DecomposeError::Config("iterations must be >= 1".into()));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(DecomposeError::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.mode == Mode::Cnn && (self.channels == 0 || self.depth == 0) {
            return Err(DecomposeError::Config(
                "cnn mode needs channels >= 1 and depth >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("input must be a 3-channel image, got {0} channels")]
    NotRgb(usize),
    #[error("input {h}x{w} is smaller than the 8-pixel minimum side")]
    TooSmall { h: usize, w: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss became non-finite at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        history: Vec<LossRecord>,
    },
}

/// Per-iteration loss values: the weighted total plus every raw term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub total: f64,
    pub rec_low: f64,
    pub rec_he: f64,
    pub rc: f64,
    pub illum_low: f64,
    pub illum_he: f64,
    pub reflect_low: f64,
    pub reflect_he: f64,
    pub noise_low: f64,
    pub noise_he: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str =
        "iteration,total,rec_low,rec_he,rc,illum_low,illum_he,reflect_low,reflect_he,noise_low,noise_he";

    pub fn csv_row(&self, iteration: usize) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            iteration,
            self.total,
            self.rec_low,
            self.rec_he,
            self.rc,
            self.illum_low,
            self.illum_he,
            self.reflect_low,
            self.reflect_he,
            self.noise_low,
            self.noise_he
        )
    }
}

/// Final decomposed maps for both renderings, plus the optimization trace.
///
/// Noise activations live in `[-1, 1]`; to honor the `[0, 1]` image
/// invariant they are stored shifted as `(n + 1) / 2`. Use the `*_signed`
/// accessors for raw values.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub r_low: ImageTensor,
    pub r_he: ImageTensor,
    pub l_low: ImageTensor,
    pub l_he: ImageTensor,
    pub n_low: ImageTensor,
    pub n_he: ImageTensor,
    pub loss_history: Vec<LossRecord>,
}

impl DecompositionResult {
    pub fn noise_low_signed(&self) -> Vec<f64> {
        self.n_low.data().iter().map(|&v| 2.0 * v - 1.0).collect()
    }

    pub fn noise_he_signed(&self) -> Vec<f64> {
        self.n_he.data().iter().map(|&v| 2.0 * v - 1.0).collect()
    }

    /// Mean absolute reconstruction residual of the low-light side:
    /// `mean |R * L + N - S|`.
    pub fn mean_reconstruction_error(&self, source: &ImageTensor) -> f64 {
        let r = self.r_low.data();
        let l = self.l_low.data();
        let n = self.noise_low_signed();
        let s = source.data();
        assert_eq!(r.len(), s.len(), "source shape mismatch");
        let mut acc = 0.0;
        for (p, &lv) in l.iter().enumerate() {
            for c in 0..3 {
                let i = p * 3 + c;
                acc += (r[i] * lv + n[i] - s[i]).abs();
            }
        }
        acc / s.len() as f64
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().map(|r| r.total)
    }

    /// Full optimization trace as CSV (header plus one row per iteration).
    pub fn loss_csv(&self) -> String {
        let mut out = String::from(LossRecord::CSV_HEADER);
        out.push('\n');
        for (i, rec) in self.loss_history.iter().enumerate() {
            out.push_str(&rec.csv_row(i));
            out.push('\n');
        }
        out
    }
}

/// Which rendering a forward pass decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Low,
    He,
}

/// The trainable state: either six per-pixel logit maps (direct) or the
/// CNN weight stack (shared across the two renderings).
pub struct Parameterization {
    mode: Mode,
    depth: usize,
    tensors: Vec<TensorData>,
}

impl Parameterization {
    pub fn init(cfg: &DecomposeConfig, height: usize, width: usize) -> Self {
        match cfg.mode {
            Mode::Direct => {
                // Zero logits: R = L = 0.5, N = 0. Neutral and reproducible.
                let mut tensors = Vec::with_capacity(6);
                for _ in 0..2 {
                    tensors.push(TensorData::zeros(Shape::new(&[3, height, width])));
                    tensors.push(TensorData::zeros(Shape::new(&[1, height, width])));
                    tensors.push(TensorData::zeros(Shape::new(&[3, height, width])));
                }
                Self {
                    mode: Mode::Direct,
                    depth: 0,
                    tensors,
                }
            }
            Mode::Cnn => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let mut tensors = Vec::new();
                let mut push_conv = |rng: &mut ChaCha8Rng, c_out: usize, c_in: usize| {
                    // He-uniform for the relu stack, zero biases.
                    let limit = (6.0 / (c_in * 9) as f64).sqrt();
                    let weights: Vec<f64> = (0..c_out * c_in * 9)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect();
                    tensors.push(TensorData::new(Shape::new(&[c_out, c_in, 3, 3]), weights));
                    tensors.push(TensorData::zeros(Shape::new(&[c_out])));
                };
                push_conv(&mut rng, cfg.channels, 3);
                for _ in 1..cfg.depth {
                    push_conv(&mut rng, cfg.channels, cfg.channels);
                }
                push_conv(&mut rng, 3, cfg.channels); // reflectance head
                push_conv(&mut rng, 1, cfg.channels); // illumination head
                push_conv(&mut rng, 3, cfg.channels); // noise head
                Self {
                    mode: Mode::Cnn,
                    depth: cfg.depth,
                    tensors,
                }
            }
        }
    }

    pub fn tensors(&self) -> &[TensorData] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [TensorData] {
        &mut self.tensors
    }

    /// Decodes one rendering into `(R, L, N)` with sigmoid/sigmoid/tanh
    /// heads, so `R, L` lie in `[0, 1]` and `N` in `[-1, 1]` by
    /// construction. `vars` must mirror `tensors()` on the target tape.
    pub fn forward<'t>(
        &self,
        vars: &[Tensor<'t>],
        input: Tensor<'t>,
        side: Side,
    ) -> (Tensor<'t>, Tensor<'t>, Tensor<'t>) {
        assert_eq!(vars.len(), self.tensors.len(), "var list mismatch");
        match self.mode {
            Mode::Direct => {
                let base = match side {
                    Side::Low => 0,
                    Side::He => 3,
                };
                (
                    vars[base].sigmoid(),
                    vars[base + 1].sigmoid(),
                    vars[base + 2].tanh(),
                )
            }
            Mode::Cnn => {
                let mut features = input;
                for layer in 0..self.depth {
                    features = features
                        .conv2d(vars[2 * layer], vars[2 * layer + 1])
                        .relu();
                }
                let heads = 2 * self.depth;
                let r = features.conv2d(vars[heads], vars[heads + 1]).sigmoid();
                let l = features.conv2d(vars[heads + 2], vars[heads + 3]).sigmoid();
                let n = features.conv2d(vars[heads + 4], vars[heads + 5]).tanh();
                (r, l, n)
            }
        }
    }
}

/// Decomposes a low-light image. Builds the histogram-equalized twin,
/// initializes parameters from the seed, and runs `cfg.iterations` Adam
/// steps on the total loss. Aborts with the partial history if the loss
/// leaves the finite range.
pub fn decompose(
    s_low: &ImageTensor,
    cfg: &DecomposeConfig,
) -> Result<DecompositionResult, DecomposeError> {
    cfg.validate()?;
    if s_low.channels() != 3 {
        return Err(DecomposeError::NotRgb(s_low.channels()));
    }
    let (h, w) = (s_low.height(), s_low.width());
    if h.min(w) < 8 {
        return Err(DecomposeError::TooSmall { h, w });
    }
    if s_low.data().iter().all(|&v| v == 0.0) {
        warn!("input image is entirely black; decomposition is ill-posed");
    }

    let s_he = s_low.hist_equalize();
    let s_low_chw = TensorData::new(Shape::new(&[3, h, w]), s_low.to_planar());
    let s_he_chw = TensorData::new(Shape::new(&[3, h, w]), s_he.to_planar());

    let mut params = Parameterization::init(cfg, h, w);
    let mut adam = AdamState::new(cfg.lr);
    let mut history = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let tape = Tape::new();
        let vars: Vec<Tensor<'_>> = params
            .tensors()
            .iter()
            .map(|t| tape.var(t.clone()))
            .collect();
        let s_low_t = tape.constant(s_low_chw.clone());
        let s_he_t = tape.constant(s_he_chw.clone());

        let (r_low, l_low, n_low) = params.forward(&vars, s_low_t, Side::Low);
        let (r_he, l_he, n_he) = params.forward(&vars, s_he_t, Side::He);
        let pair = DecomposedPair {
            r_low,
            l_low,
            n_low,
            r_he,
            l_he,
            n_he,
        };
        let terms = loss_terms(&pair, s_low_t, s_he_t, cfg);
        let total = total_loss(&terms, cfg);

        let record = LossRecord {
            total: total.value(),
            rec_low: terms.rec_low.value(),
            rec_he: terms.rec_he.value(),
            rc: terms.rc.value(),
            illum_low: terms.illum_low.value(),
            illum_he: terms.illum_he.value(),
            reflect_low: terms.reflect_low.value(),
            reflect_he: terms.reflect_he.value(),
            noise_low: terms.noise_low.value(),
            noise_he: terms.noise_he.value(),
        };
        history.push(record);
        if !record.total.is_finite() {
            return Err(DecomposeError::NonFinite { iteration, history });
        }

        total.backward();
        let grads: Vec<Vec<f64>> = vars
            .iter()
            .map(|v| v.grad().expect("backward materializes leaf gradients"))
            .collect();
        adam.step(params.tensors_mut(), &grads);
    }

    // Decode the final maps from the optimized parameters.
    let tape = Tape::new();
    let vars: Vec<Tensor<'_>> = params
        .tensors()
        .iter()
        .map(|t| tape.constant(t.clone()))
        .collect();
    let s_low_t = tape.constant(s_low_chw);
    let s_he_t = tape.constant(s_he_chw);
    let (r_low, l_low, n_low) = params.forward(&vars, s_low_t, Side::Low);
    let (r_he, l_he, n_he) = params.forward(&vars, s_he_t, Side::He);

    let image3 = |t: Tensor<'_>| ImageTensor::from_planar(h, w, 3, &t.values());
    let image1 = |t: Tensor<'_>| ImageTensor::from_planar(h, w, 1, &t.values());
    let noise = |t: Tensor<'_>| {
        let shifted: Vec<f64> = t.values().iter().map(|&v| (v + 1.0) / 2.0).collect();
        ImageTensor::from_planar(h, w, 3, &shifted)
    };

    Ok(DecompositionResult {
        r_low: image3(r_low),
        r_he: image3(r_he),
        l_low: image1(l_low),
        l_he: image1(l_he),
        n_low: noise(n_low),
        n_he: noise(n_he),
        loss_history: history,
    })
}

/// Gradient-checks the full total loss in direct mode: six logit maps
/// (`r/l/n` for the low and equalized renderings) against central finite
/// differences with the given step. Returns the worst relative error.
///
/// The illumination weight fields are held frozen at the base point. Their
/// forward values do depend on the logits, but gradients never flow through
/// them, so an honest difference quotient of the per-iteration objective
/// must hold them fixed as well.
pub fn grad_check_total_loss(
    s_low: &ImageTensor,
    cfg: &DecomposeConfig,
    logits: &[TensorData],
    step: f64,
) -> f64 {
    assert_eq!(logits.len(), 6, "expects six direct-mode logit maps");
    let (h, w) = (s_low.height(), s_low.width());
    let s_low_chw = TensorData::new(Shape::new(&[3, h, w]), s_low.to_planar());
    let s_he_chw = TensorData::new(
        Shape::new(&[3, h, w]),
        s_low.hist_equalize().to_planar(),
    );
    let frozen: Vec<TensorData> = {
        let tape = Tape::new();
        vec![
            tape.constant(logits[0].clone()).sigmoid().to_data(), // r_low
            tape.constant(logits[1].clone()).sigmoid().to_data(), // l_low
            tape.constant(logits[3].clone()).sigmoid().to_data(), // r_he
            tape.constant(logits[4].clone()).sigmoid().to_data(), // l_he
        ]
    };
    grad_check_multi(
        |tape, xs| {
            let s_low_t = tape.constant(s_low_chw.clone());
            let s_he_t = tape.constant(s_he_chw.clone());
            let r_low_w = tape.constant(frozen[0].clone());
            let l_low_w = tape.constant(frozen[1].clone());
            let r_he_w = tape.constant(frozen[2].clone());
            let l_he_w = tape.constant(frozen[3].clone());
            let (r_low, l_low, n_low) = (xs[0].sigmoid(), xs[1].sigmoid(), xs[2].tanh());
            let (r_he, l_he, n_he) = (xs[3].sigmoid(), xs[4].sigmoid(), xs[5].tanh());
            let terms = LossTerms {
                rec_low: loss::reconstruction_loss(r_low, l_low, n_low, s_low_t),
                rec_he: loss::reconstruction_loss(r_he, l_he, n_he, s_he_t),
                rc: loss::consistency_loss(r_low, r_he),
                illum_low: loss::illumination_loss(l_low, r_low_w, l_low_w, l_he_w, cfg.alpha),
                illum_he: loss::illumination_loss(l_he, r_he_w, l_low_w, l_he_w, cfg.alpha),
                reflect_low: loss::reflectance_loss(r_low, s_low_t, cfg.beta, cfg.eps),
                reflect_he: loss::reflectance_loss(r_he, s_he_t, cfg.beta, cfg.eps),
                noise_low: loss::noise_loss(s_low_t, n_low),
                noise_he: loss::noise_loss(s_he_t, n_he),
            };
            total_loss(&terms, cfg)
        },
        logits,
        step,
    )
}

#[cfg(test)]
mod tests;
