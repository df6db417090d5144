//! Reconstruction quality metrics over `C × H × W` images.
//!
//! SSIM uses `C1 = (0.01·peak)²`, `C2 = (0.03·peak)²` and, unless told
//! otherwise, non-overlapping 8×8 blocks. MS-SSIM is the plain geometric
//! mean of per-scale SSIM values with 2×2 average pooling between scales.

use ndarray::{s, Array2, Array3};

use crate::error::{ensure, Result};
use crate::kernels::{conv2d, ConvKernel, FeatureMap};
use crate::signal::SeededRng;

pub use crate::info::{scs, scs_complex};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array3<f64>,
    peak: f64,
}

impl Image {
    pub fn new(pixels: Array3<f64>, peak: f64) -> Result<Self> {
        ensure!(peak > 0.0 && peak.is_finite(), "peak must be positive, got {peak}");
        let (c, h, w) = pixels.dim();
        ensure!(c >= 1 && h >= 1 && w >= 1, "image dimensions must be >= 1, got {c}x{h}x{w}");
        ensure!(
            pixels.iter().all(|v| (0.0..=peak).contains(v)),
            "pixel values must lie in [0, {peak}]"
        );
        Ok(Self { pixels, peak })
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.pixels.dim()
    }

    /// 2×2 average pooling; odd trailing rows/columns are dropped.
    pub fn downsample(&self) -> Result<Image> {
        let (c, h, w) = self.dim();
        ensure!(h >= 2 && w >= 2, "cannot downsample a {h}x{w} image");
        let out = Array3::from_shape_fn((c, h / 2, w / 2), |(ch, i, j)| {
            self.pixels.slice(s![ch, 2 * i..2 * i + 2, 2 * j..2 * j + 2]).sum() / 4.0
        });
        Ok(Image {
            pixels: out,
            peak: self.peak,
        })
    }
}

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    ensure!(a.dim() == b.dim(), "image shape mismatch {:?} vs {:?}", a.dim(), b.dim());
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.pixels.len() as f64;
    Ok(a.pixels.iter().zip(b.pixels.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n)
}

/// `10·log10(peak²/mse)`; `+∞` when the mse is zero.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    ensure!(peak > 0.0, "peak must be positive, got {peak}");
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SsimWindow {
    /// Non-overlapping `size × size` tiles; incomplete edge tiles are skipped.
    Blocks { size: usize },
    /// Sliding Gaussian window of odd `size`, every fully contained position.
    Gaussian { size: usize, sigma: f64 },
}

impl Default for SsimWindow {
    fn default() -> Self {
        SsimWindow::Blocks { size: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
    pub window: SsimWindow,
}

impl SsimParams {
    pub fn for_peak(peak: f64) -> Self {
        Self {
            c1: (0.01 * peak).powi(2),
            c2: (0.03 * peak).powi(2),
            window: SsimWindow::default(),
        }
    }

    pub fn with_window(mut self, window: SsimWindow) -> Self {
        self.window = window;
        self
    }

    fn weights_and_stride(&self) -> Result<(Array2<f64>, usize)> {
        match self.window {
            SsimWindow::Blocks { size } => {
                ensure!(size >= 1, "window size must be >= 1");
                let n = (size * size) as f64;
                Ok((Array2::from_elem((size, size), 1.0 / n), size))
            }
            SsimWindow::Gaussian { size, sigma } => {
                ensure!(size % 2 == 1, "gaussian window size must be odd, got {size}");
                ensure!(sigma > 0.0, "gaussian sigma must be positive, got {sigma}");
                let h = (size / 2) as f64;
                let mut g = Array2::from_shape_fn((size, size), |(i, j)| {
                    let (di, dj) = (i as f64 - h, j as f64 - h);
                    (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp()
                });
                let total = g.sum();
                g /= total;
                Ok((g, 1))
            }
        }
    }
}

/// Mean SSIM over every window position in every channel.
pub fn ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    same_shape(a, b)?;
    let (weights, stride) = params.weights_and_stride()?;
    let size = weights.nrows();
    let (c, h, w) = a.dim();
    ensure!(size <= h && size <= w, "window {size} larger than the {h}x{w} image");
    let (c1, c2) = (params.c1, params.c2);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        for i in (0..=h - size).step_by(stride) {
            for j in (0..=w - size).step_by(stride) {
                let pa = a.pixels.slice(s![ch, i..i + size, j..j + size]);
                let pb = b.pixels.slice(s![ch, i..i + size, j..j + size]);
                let mu_a = (&pa * &weights).sum();
                let mu_b = (&pb * &weights).sum();
                let mut var_a = 0.0;
                let mut var_b = 0.0;
                let mut cov = 0.0;
                for ((x, y), wt) in pa.iter().zip(pb.iter()).zip(weights.iter()) {
                    let (dx, dy) = (x - mu_a, y - mu_b);
                    var_a += wt * dx * dx;
                    var_b += wt * dy * dy;
                    cov += wt * dx * dy;
                }
                total += (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Per-scale SSIM values, finest first.
pub fn ssim_per_scale(a: &Image, b: &Image, scales: usize, params: &SsimParams) -> Result<Vec<f64>> {
    ensure!(scales >= 1, "need at least one scale");
    same_shape(a, b)?;
    let (_, h, w) = a.dim();
    let (weights, _) = params.weights_and_stride()?;
    let need = weights.nrows() << (scales - 1);
    ensure!(
        h >= need && w >= need,
        "a {h}x{w} image is too small for {scales} scales with window {}",
        weights.nrows()
    );
    let (mut a, mut b) = (a.clone(), b.clone());
    let mut values = Vec::with_capacity(scales);
    for m in 0..scales {
        if m > 0 {
            a = a.downsample()?;
            b = b.downsample()?;
        }
        values.push(ssim(&a, &b, params)?);
    }
    Ok(values)
}

/// `(Π_j SSIM_j)^{1/M}`, taking a real (sign-preserving) root when the
/// product is negative.
pub fn ms_ssim(a: &Image, b: &Image, scales: usize, params: &SsimParams) -> Result<f64> {
    let product: f64 = ssim_per_scale(a, b, scales, params)?.iter().product();
    Ok(product.signum() * product.abs().powf(1.0 / scales as f64))
}

/// One feature layer: convolution, optional rectifier, channel weights `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayer {
    pub kernel: ConvKernel,
    pub relu: bool,
    pub weights: Vec<f64>,
}

/// Cascade of layers; the output of every layer is compared.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    layers: Vec<FeatureLayer>,
}

impl FeatureExtractor {
    pub fn new(layers: Vec<FeatureLayer>) -> Result<Self> {
        ensure!(!layers.is_empty(), "feature extractor needs at least one layer");
        for (i, l) in layers.iter().enumerate() {
            ensure!(
                l.weights.len() == l.kernel.out_channels(),
                "layer {i}: {} weights for {} channels",
                l.weights.len(),
                l.kernel.out_channels()
            );
            if i > 0 {
                ensure!(
                    layers[i - 1].kernel.out_channels() == l.kernel.in_channels(),
                    "layer {i} expects {} channels, previous layer emits {}",
                    l.kernel.in_channels(),
                    layers[i - 1].kernel.out_channels()
                );
            }
        }
        Ok(Self { layers })
    }

    /// Single 1×1 identity layer with unit weights.
    pub fn identity(channels: usize) -> Result<Self> {
        Self::new(vec![FeatureLayer {
            kernel: ConvKernel::identity(1, channels)?,
            relu: false,
            weights: vec![1.0; channels],
        }])
    }

    /// Three 3×3 convolution + ReLU layers with seeded random weights.
    pub fn seeded(channels: usize, width: usize, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let mut layers = Vec::new();
        let mut c_in = channels;
        for _ in 0..3 {
            let mut kernel = ConvKernel::random(3, c_in, width, &mut rng)?.weights().clone();
            kernel /= (9 * c_in) as f64;
            layers.push(FeatureLayer {
                kernel: ConvKernel::new(kernel)?,
                relu: true,
                weights: (0..width).map(|_| rng.uniform(0.1, 1.0)).collect(),
            });
            c_in = width;
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[FeatureLayer] {
        &self.layers
    }

    pub fn features(&self, img: &Image) -> Result<Vec<FeatureMap>> {
        ensure!(
            img.dim().0 == self.layers[0].kernel.in_channels(),
            "extractor expects {} channels, image has {}",
            self.layers[0].kernel.in_channels(),
            img.dim().0
        );
        let mut x = FeatureMap::new(img.pixels.clone())?;
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let mut y = conv2d(&x, &l.kernel)?.into_data();
            if l.relu {
                y.mapv_inplace(|v| v.max(0.0));
            }
            x = FeatureMap::new(y)?;
            out.push(x.clone());
        }
        Ok(out)
    }

    pub fn scale_weights(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= factor);
        }
    }
}

/// `Σ_i 1/(H_i W_i) Σ_{h,w} ‖w_i ⊙ (y_i − ŷ_i)‖²`.
pub fn lpips(a: &Image, b: &Image, fx: &FeatureExtractor) -> Result<f64> {
    same_shape(a, b)?;
    let fa = fx.features(a)?;
    let fb = fx.features(b)?;
    let mut total = 0.0;
    for ((ya, yb), layer) in fa.iter().zip(&fb).zip(fx.layers()) {
        let (c, h, w) = ya.dim();
        let mut sum = 0.0;
        for ch in 0..c {
            let wt = layer.weights[ch];
            let diff = &ya.data().slice(s![ch, .., ..]) - &yb.data().slice(s![ch, .., ..]);
            sum += wt * wt * diff.iter().map(|d| d * d).sum::<f64>();
        }
        total += sum / (h * w) as f64;
    }
    Ok(total)
}
