//! Complex baseband signals, deterministic random streams and the DFT pair.
//!
//! The forward DFT is unnormalized, `X_k = Σ_n x_n e^{-j2πkn/N}`, and the
//! inverse carries `1/N`. Parseval therefore reads `Σ|X_k|² = N Σ|x_n|²`.

use std::cell::RefCell;
use std::ops::Index;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{ensure, Result};

/// Non-empty sequence of finite complex samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        ensure!(!samples.is_empty(), "signal must contain at least one sample");
        ensure!(
            samples.iter().all(|s| s.re.is_finite() && s.im.is_finite()),
            "signal samples must be finite"
        );
        Ok(Self { samples })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Mean of squared magnitudes.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.samples.iter()
    }
}

impl Index<usize> for ComplexSignal {
    type Output = Complex64;

    fn index(&self, idx: usize) -> &Complex64 {
        &self.samples[idx]
    }
}

impl AsRef<[Complex64]> for ComplexSignal {
    fn as_ref(&self) -> &[Complex64] {
        &self.samples
    }
}

/// Deterministic pseudorandom stream (ChaCha8) identified by its seed.
///
/// `fork` derives independent child streams from the seed alone, so the
/// children do not depend on how much of the parent has been consumed.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream number `stream` of this seed.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(stream.wrapping_add(1))))
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw from `[low, high)`; returns `low` when the range is empty.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        if high <= low {
            return low;
        }
        low + (high - low) * self.inner.random::<f64>()
    }

    /// Circularly-symmetric complex Gaussian with total variance `variance`.
    pub fn complex_normal(&mut self, variance: f64) -> Complex64 {
        let s = (variance / 2.0).sqrt();
        Complex64::new(s * self.standard_normal(), s * self.standard_normal())
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT of a raw buffer (unnormalized).
pub fn dft_in_place(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// In-place inverse DFT of a raw buffer (scaled by `1/N`).
pub fn inverse_dft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    fft.process(buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn dft(x: &ComplexSignal) -> ComplexSignal {
    let mut buf = x.samples.clone();
    dft_in_place(&mut buf);
    ComplexSignal { samples: buf }
}

pub fn inverse_dft(x: &ComplexSignal) -> ComplexSignal {
    let mut buf = x.samples.clone();
    inverse_dft_in_place(&mut buf);
    ComplexSignal { samples: buf }
}

/// Like [`dft`] but over a plain slice, rejecting empty input.
pub fn dft_slice(x: &[Complex64]) -> Result<Vec<Complex64>> {
    ensure!(!x.is_empty(), "dft of empty sequence");
    let mut buf = x.to_vec();
    dft_in_place(&mut buf);
    Ok(buf)
}

/// Like [`inverse_dft`] but over a plain slice, rejecting empty input.
pub fn inverse_dft_slice(x: &[Complex64]) -> Result<Vec<Complex64>> {
    ensure!(!x.is_empty(), "inverse dft of empty sequence");
    let mut buf = x.to_vec();
    inverse_dft_in_place(&mut buf);
    Ok(buf)
}

/// `n` i.i.d. CN(0, variance) samples; real and imaginary parts each carry
/// `variance / 2`.
pub fn sample_complex_gaussian(rng: &mut SeededRng, n: usize, variance: f64) -> Result<ComplexSignal> {
    ensure!(variance >= 0.0 && variance.is_finite(), "variance must be finite and >= 0, got {variance}");
    ensure!(n > 0, "sample count must be positive");
    let samples = (0..n).map(|_| rng.complex_normal(variance)).collect();
    Ok(ComplexSignal { samples })
}

/// Circular convolution of two equal-length sequences, computed directly.
pub fn circular_convolve(x: &[Complex64], h: &[Complex64]) -> Result<Vec<Complex64>> {
    ensure!(x.len() == h.len() && !x.is_empty(), "circular convolution needs equal non-zero lengths");
    let n = x.len();
    Ok((0..n)
        .map(|k| (0..n).map(|m| x[m] * h[(k + n - m) % n]).sum())
        .collect())
}
