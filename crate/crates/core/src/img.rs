//! Pixel-space containers and operations.
//!
//! [`ImageTensor`] is the universal pixel carrier: dense, row-major,
//! interleaved channels, samples constrained to `[0, 1]`. [`Field`] holds
//! per-pixel quantities that are not intensities (finite differences, hue
//! angles) and carries no range invariant.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Rec.601 luma weights, shared by every "gray" computation in the crate.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt or undecodable PNG stream in {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("cannot encode PNG to {path}: {source}")]
    Encode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("unsupported bit depth or color type in {path}: {detail}")]
    Unsupported { path: PathBuf, detail: String },
    #[error("invalid image dimensions: {0}")]
    InvalidDimensions(String),
    #[error("sample {value} at index {index} outside [0, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("expected a {expected}-channel image, got {got} channels")]
    ChannelMismatch { expected: usize, got: usize },
}

/// Dense `height x width x channels` image, samples in `[0, 1]`, row-major
/// with interleaved channels (`data[(y * width + x) * channels + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Builds an image, validating the type invariants: non-empty dims,
    /// 1 or 3 channels, matching data length, every sample in `[0, 1]`.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::InvalidDimensions(format!(
                "{height}x{width} image is empty"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::InvalidDimensions(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(ImageError::InvalidDimensions(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        for (index, &value) in data.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ImageError::SampleOutOfRange { index, value });
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Like [`ImageTensor::new`] but clamps out-of-range samples instead of
    /// rejecting them. NaN samples clamp to 0.
    pub fn from_clamped(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Self {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, channels, data).expect("clamped data satisfies invariants")
    }

    /// Constant-valued image.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels])
            .expect("constant image satisfies invariants")
    }

    /// Builds an image from a per-(y, x, c) generator, clamping to `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::from_clamped(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sample(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copies the samples into planar channel-major (CHW) order, the layout
    /// used by the autodiff engine.
    pub fn to_planar(&self) -> Vec<f64> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; hw * self.channels];
        for p in 0..hw {
            for c in 0..self.channels {
                out[c * hw + p] = self.data[p * self.channels + c];
            }
        }
        out
    }

    /// Inverse of [`ImageTensor::to_planar`], clamping into `[0, 1]`.
    pub fn from_planar(height: usize, width: usize, channels: usize, planar: &[f64]) -> Self {
        let hw = height * width;
        assert_eq!(planar.len(), hw * channels, "planar length mismatch");
        let mut data = vec![0.0; planar.len()];
        for p in 0..hw {
            for c in 0..channels {
                data[p * channels + c] = planar[c * hw + p];
            }
        }
        Self::from_clamped(height, width, channels, data)
    }

    /// Loads an 8- or 16-bit PNG (gray, gray+alpha, RGB, or RGBA; alpha is
    /// dropped). Samples map to `v / 255` or `v / 65535`.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ImageError::NotFound(path.to_path_buf())
            } else {
                ImageError::Io {
                    path: path.to_path_buf(),
                    source: e,
                }
            }
        })?;
        let decoded = image::load(BufReader::new(file), image::ImageFormat::Png).map_err(|e| {
            ImageError::Decode {
                path: path.to_path_buf(),
                source: e,
            }
        })?;

        let width = decoded.width() as usize;
        let height = decoded.height() as usize;
        const U8: f64 = 255.0;
        const U16: f64 = 65535.0;
        use image::DynamicImage as D;
        let (channels, data): (usize, Vec<f64>) = match decoded {
            D::ImageLuma8(b) => (1, b.into_raw().iter().map(|&v| v as f64 / U8).collect()),
            D::ImageLumaA8(b) => (
                1,
                b.into_raw().chunks_exact(2).map(|p| p[0] as f64 / U8).collect(),
            ),
            D::ImageRgb8(b) => (3, b.into_raw().iter().map(|&v| v as f64 / U8).collect()),
            D::ImageRgba8(b) => (
                3,
                b.into_raw()
                    .chunks_exact(4)
                    .flat_map(|p| p[..3].iter().map(|&v| v as f64 / U8))
                    .collect(),
            ),
            D::ImageLuma16(b) => (1, b.into_raw().iter().map(|&v| v as f64 / U16).collect()),
            D::ImageLumaA16(b) => (
                1,
                b.into_raw().chunks_exact(2).map(|p| p[0] as f64 / U16).collect(),
            ),
            D::ImageRgb16(b) => (3, b.into_raw().iter().map(|&v| v as f64 / U16).collect()),
            D::ImageRgba16(b) => (
                3,
                b.into_raw()
                    .chunks_exact(4)
                    .flat_map(|p| p[..3].iter().map(|&v| v as f64 / U16))
                    .collect(),
            ),
            other => {
                return Err(ImageError::Unsupported {
                    path: path.to_path_buf(),
                    detail: format!("{:?}", other.color()),
                })
            }
        };
        Self::new(height, width, channels, data)
    }

    /// Writes an 8-bit PNG; each sample encodes as
    /// `round(clamp(s, 0, 1) * 255)` (round half away from zero).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&s| (s.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let file = File::create(path).map_err(|e| ImageError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut writer = BufWriter::new(file);
        let (w, h) = (self.width as u32, self.height as u32);
        let result = match self.channels {
            1 => image::GrayImage::from_raw(w, h, bytes)
                .expect("buffer length checked by invariant")
                .write_to(&mut writer, image::ImageFormat::Png),
            _ => image::RgbImage::from_raw(w, h, bytes)
                .expect("buffer length checked by invariant")
                .write_to(&mut writer, image::ImageFormat::Png),
        };
        result.map_err(|e| ImageError::Encode {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Per-pixel luma `0.299 R + 0.587 G + 0.114 B`.
    pub fn to_grayscale(&self) -> Result<ImageTensor, ImageError> {
        if self.channels != 3 {
            return Err(ImageError::ChannelMismatch {
                expected: 3,
                got: self.channels,
            });
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
            .collect();
        ImageTensor::new(self.height, self.width, 1, data)
    }

    /// Standard per-channel histogram equalization on a 256-bin quantization:
    /// `out = (cdf(q) - cdf_min) / (n_pixels - cdf_min)`. Channels with at
    /// most one occupied bin pass through unchanged.
    pub fn hist_equalize(&self) -> ImageTensor {
        let n = self.pixel_count();
        let mut out = self.data.clone();
        for c in 0..self.channels {
            let levels: Vec<usize> = (0..n)
                .map(|p| (self.data[p * self.channels + c] * 255.0).round() as usize)
                .collect();
            let mut hist = [0usize; 256];
            for &q in &levels {
                hist[q] += 1;
            }
            if hist.iter().filter(|&&h| h > 0).count() <= 1 {
                continue;
            }
            let mut cdf = [0usize; 256];
            let mut acc = 0;
            for (bin, &h) in hist.iter().enumerate() {
                acc += h;
                cdf[bin] = acc;
            }
            let cdf_min = hist
                .iter()
                .position(|&h| h > 0)
                .map(|bin| cdf[bin])
                .unwrap_or(0);
            let denom = (n - cdf_min) as f64;
            for (p, &q) in levels.iter().enumerate() {
                out[p * self.channels + c] = (cdf[q] - cdf_min) as f64 / denom;
            }
        }
        ImageTensor::new(self.height, self.width, self.channels, out)
            .expect("equalized samples stay in [0, 1]")
    }

    /// Per-pixel hue angle in `(-pi, pi]` from the chroma plane:
    /// `atan2(sqrt(3) * (G - B), 2R - G - B)`. Achromatic pixels (both
    /// arguments zero) map to 0.
    pub fn hue_map(&self) -> Result<Field, ImageError> {
        if self.channels != 3 {
            return Err(ImageError::ChannelMismatch {
                expected: 3,
                got: self.channels,
            });
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                let y = SQRT3 * (p[1] - p[2]);
                let x = 2.0 * p[0] - p[1] - p[2];
                if y == 0.0 && x == 0.0 {
                    0.0
                } else {
                    y.atan2(x)
                }
            })
            .collect();
        Ok(Field::new(self.height, self.width, 1, data))
    }

    /// Forward differences per channel with replicate boundary: the last
    /// column of the horizontal gradient and the last row of the vertical
    /// gradient are zero. Returns `(horizontal, vertical)`.
    pub fn spatial_gradients(&self) -> (Field, Field) {
        let (h, w, ch) = (self.height, self.width, self.channels);
        let mut gh = vec![0.0; self.data.len()];
        let mut gv = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let i = (y * w + x) * ch + c;
                    if x + 1 < w {
                        gh[i] = self.data[i + ch] - self.data[i];
                    }
                    if y + 1 < h {
                        gv[i] = self.data[i + w * ch] - self.data[i];
                    }
                }
            }
        }
        (
            Field::new(h, w, ch, gh),
            Field::new(h, w, ch, gv),
        )
    }
}

/// Per-pixel scalar field with the same layout as [`ImageTensor`] but no
/// range constraint. Used for gradients and hue angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width * channels, "field length mismatch");
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn sample(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn constructor_enforces_invariants() {
        assert!(ImageTensor::new(2, 2, 1, vec![0.0; 4]).is_ok());
        assert!(matches!(
            ImageTensor::new(2, 2, 2, vec![0.0; 8]),
            Err(ImageError::InvalidDimensions(_))
        ));
        assert!(matches!(
            ImageTensor::new(2, 2, 1, vec![0.0; 3]),
            Err(ImageError::InvalidDimensions(_))
        ));
        assert!(matches!(
            ImageTensor::new(1, 1, 1, vec![1.5]),
            Err(ImageError::SampleOutOfRange { .. })
        ));
    }

    #[test]
    fn png_byte_mapping() {
        let dir = tempfile::tempdir().unwrap();
        for (byte, expected) in [(0u8, 0.0), (255, 1.0), (128, 128.0 / 255.0)] {
            let path = dir.path().join(format!("px{byte}.png"));
            image::GrayImage::from_raw(1, 1, vec![byte])
                .unwrap()
                .save(&path)
                .unwrap();
            let img = ImageTensor::load_png(&path).unwrap();
            assert_eq!(img.data()[0], expected);
        }
    }

    #[test]
    fn png_save_rounding_and_clamp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.png");
        // 0.5 * 255 = 127.5 rounds half away from zero to 128.
        let img = ImageTensor::new(1, 3, 1, vec![1.0, 0.5, 0.0]).unwrap();
        img.save_png(&path).unwrap();
        let back = image::open(&path).unwrap().into_luma8();
        assert_eq!(back.as_raw(), &vec![255u8, 128, 0]);

        // Out-of-range samples clamp on encode.
        let img = ImageTensor::from_clamped(1, 1, 1, vec![1.7]);
        img.save_png(&path).unwrap();
        let back = image::open(&path).unwrap().into_luma8();
        assert_eq!(back.as_raw()[0], 255);
    }

    #[test]
    fn png_sixteen_bit_and_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(1, 1, vec![65535u16]).unwrap();
        buf.save(&path).unwrap();
        assert_eq!(ImageTensor::load_png(&path).unwrap().data()[0], 1.0);

        let path = dir.path().join("rgba.png");
        image::RgbaImage::from_raw(1, 1, vec![10, 20, 30, 0])
            .unwrap()
            .save(&path)
            .unwrap();
        let img = ImageTensor::load_png(&path).unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(img.data()[1], 20.0 / 255.0);
    }

    #[test]
    fn png_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ImageTensor::load_png(dir.path().join("absent.png")),
            Err(ImageError::NotFound(_))
        ));
        let path = dir.path().join("garbage.png");
        std::fs::write(&path, b"not a png at all").unwrap();
        assert!(matches!(
            ImageTensor::load_png(&path),
            Err(ImageError::Decode { .. })
        ));
        let img = ImageTensor::filled(1, 1, 1, 0.5);
        assert!(matches!(
            img.save_png(dir.path().join("no/such/dir/x.png")),
            Err(ImageError::Io { .. })
        ));
    }

    #[test]
    fn grayscale_examples() {
        let make = |r, g, b| ImageTensor::new(1, 1, 3, vec![r, g, b]).unwrap();
        assert!((make(1.0, 1.0, 1.0).to_grayscale().unwrap().data()[0] - 1.0).abs() < 1e-12);
        assert_eq!(make(0.0, 0.0, 0.0).to_grayscale().unwrap().data()[0], 0.0);
        assert_eq!(make(1.0, 0.0, 0.0).to_grayscale().unwrap().data()[0], 0.299);
        assert!(matches!(
            ImageTensor::filled(1, 1, 1, 0.5).to_grayscale(),
            Err(ImageError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn hist_equalize_degenerate_and_bilevel() {
        let constant = ImageTensor::filled(4, 4, 3, 0.25);
        assert_eq!(constant.hist_equalize(), constant);

        let mut data = vec![0.0; 16];
        data[8..].iter_mut().for_each(|v| *v = 1.0);
        let bilevel = ImageTensor::new(4, 4, 1, data).unwrap();
        assert_eq!(bilevel.hist_equalize(), bilevel);
    }

    #[test]
    fn hist_equalize_uniform_histogram_fixed_point() {
        // 16x16 single-channel image covering each of the 256 levels once.
        let img = ImageTensor::from_fn(16, 16, 1, |y, x, _| (y * 16 + x) as f64 / 255.0);
        let eq = img.hist_equalize();
        for (a, b) in img.data().iter().zip(eq.data()) {
            assert!(close(*a, *b, 1.0 / 255.0), "{a} vs {b}");
        }
    }

    #[test]
    fn hue_examples() {
        let hue = |r, g, b| {
            ImageTensor::new(1, 1, 3, vec![r, g, b])
                .unwrap()
                .hue_map()
                .unwrap()
                .data[0]
        };
        assert_eq!(hue(1.0, 0.0, 0.0), 0.0);
        assert_eq!(hue(0.5, 0.5, 0.5), 0.0);
        assert!(close(hue(0.0, 1.0, 0.0), 2.0 * std::f64::consts::FRAC_PI_3, 1e-12));
        assert!(close(hue(0.0, 0.0, 1.0), -2.0 * std::f64::consts::FRAC_PI_3, 1e-12));
    }

    #[test]
    fn gradient_examples() {
        let constant = ImageTensor::filled(5, 7, 3, 0.6);
        let (gh, gv) = constant.spatial_gradients();
        assert!(gh.data.iter().all(|&v| v == 0.0));
        assert!(gv.data.iter().all(|&v| v == 0.0));

        let w = 9;
        let ramp = ImageTensor::from_fn(4, w, 1, |_, x, _| x as f64 / (w - 1) as f64);
        let (gh, gv) = ramp.spatial_gradients();
        for y in 0..4 {
            for x in 0..w {
                let expect = if x + 1 < w { 1.0 / (w - 1) as f64 } else { 0.0 };
                assert!(close(gh.sample(y, x, 0), expect, 1e-12));
                assert_eq!(gv.sample(y, x, 0), 0.0);
            }
        }

        let step = ImageTensor::from_fn(6, 4, 1, |y, _, _| if y < 3 { 0.0 } else { 1.0 });
        let (_, gv) = step.spatial_gradients();
        for y in 0..6 {
            for x in 0..4 {
                let expect = if y == 2 { 1.0 } else { 0.0 };
                assert_eq!(gv.sample(y, x, 0), expect);
            }
        }
    }

    #[test]
    fn planar_round_trip() {
        let img = ImageTensor::from_fn(3, 5, 3, |y, x, c| {
            ((y * 31 + x * 7 + c * 3) % 11) as f64 / 10.0
        });
        let planar = img.to_planar();
        let back = ImageTensor::from_planar(3, 5, 3, &planar);
        assert_eq!(img, back);
    }

    fn arb_image(max_side: usize) -> impl Strategy<Value = ImageTensor> {
        (1..=max_side, 1..=max_side, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(
            |(h, w, c)| {
                proptest::collection::vec(0.0..=1.0f64, h * w * c)
                    .prop_map(move |data| ImageTensor::new(h, w, c, data).unwrap())
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn save_load_round_trip_within_half_level(img in arb_image(8)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.png");
            img.save_png(&path).unwrap();
            let back = ImageTensor::load_png(&path).unwrap();
            prop_assert_eq!(back.channels(), img.channels());
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
            }
        }

        #[test]
        fn hist_equalize_idempotent_and_monotone(img in arb_image(10)) {
            let once = img.hist_equalize();
            let twice = once.hist_equalize();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 255.0 + 1e-12);
            }
            // Rank order is preserved per channel on quantized levels.
            let c = img.channels();
            for ch in 0..c {
                let q: Vec<i64> = img.data().iter().skip(ch).step_by(c)
                    .map(|v| (v * 255.0).round() as i64).collect();
                let o: Vec<f64> = once.data().iter().skip(ch).step_by(c).copied().collect();
                for i in 0..q.len() {
                    for j in 0..q.len() {
                        if q[i] < q[j] {
                            prop_assert!(o[i] <= o[j] + 1e-12);
                        }
                    }
                }
            }
        }

        #[test]
        fn grayscale_bounded_by_channel_extremes(img in arb_image(6)) {
            prop_assume!(img.channels() == 3);
            let gray = img.to_grayscale().unwrap();
            for (p, chunk) in img.data().chunks_exact(3).enumerate() {
                let lo = chunk.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(gray.data()[p] >= lo - 1e-12 && gray.data()[p] <= hi + 1e-12);
            }
        }

        #[test]
        fn gradient_rows_telescope(img in arb_image(8)) {
            let (gh, _) = img.spatial_gradients();
            let w = img.width();
            for y in 0..img.height() {
                for c in 0..img.channels() {
                    let sum: f64 = (0..w).map(|x| gh.sample(y, x, c)).sum();
                    let expect = img.sample(y, w - 1, c) - img.sample(y, 0, c);
                    prop_assert!((sum - expect).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn hue_invariant_to_shift_and_scale(
            r in 0.0..=0.5f64, g in 0.0..=0.5f64, b in 0.0..=0.5f64,
            k in 0.0..=0.4f64, scale in 0.1..=2.0f64,
        ) {
            let base = ImageTensor::new(1, 1, 3, vec![r, g, b]).unwrap();
            let h0 = base.hue_map().unwrap().data[0];

            let shifted = ImageTensor::new(1, 1, 3, vec![r + k, g + k, b + k]).unwrap();
            prop_assert!((shifted.hue_map().unwrap().data[0] - h0).abs() < 1e-9);

            // Positive scaling about the channel mean preserves chroma direction.
            let mean = (r + g + b) / 3.0;
            let rescale = |v: f64| (mean + scale * (v - mean)).clamp(0.0, 1.0);
            let scaled = ImageTensor::new(1, 1, 3, vec![rescale(r), rescale(g), rescale(b)]).unwrap();
            let clipped = [rescale(r), rescale(g), rescale(b)]
                .iter()
                .zip([mean + scale * (r - mean), mean + scale * (g - mean), mean + scale * (b - mean)])
                .any(|(a, raw)| (a - raw).abs() > 1e-12);
            if !clipped {
                let h1 = scaled.hue_map().unwrap().data[0];
                if h0 != 0.0 || h1 != 0.0 {
                    prop_assert!((h1 - h0).abs() < 1e-9);
                }
            }
        }
    }
}
