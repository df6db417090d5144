//! Block-fading multipath channel with an exponential power-delay profile,
//! AWGN, and pilot-based CSI estimation (LS and linear MMSE).
//!
//! Frequency-domain quantities follow the unnormalized DFT convention of
//! [`crate::signal`]: `H_k = Σ_l h_l e^{-j2πkl/N}`. Noise variances passed to
//! the CSI estimators are per-subcarrier (the variance of `W_k` after the
//! receiver DFT).

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Result};
use crate::signal::{dft_in_place, ComplexSignal, SeededRng};

/// Diagonal loading added before inverting the MMSE normal matrix.
pub const MMSE_DIAGONAL_LOADING: f64 = 1e-12;

/// Exponential power-delay profile `σ_l² = α e^{-l/γ}` normalized to unit sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub num_taps: usize,
    pub decay: f64,
}

impl ChannelProfile {
    pub fn new(num_taps: usize, decay: f64) -> Result<Self> {
        let profile = Self { num_taps, decay };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.num_taps >= 1, "channel needs at least one tap");
        ensure!(
            self.decay > 0.0 && self.decay.is_finite(),
            "decay must be positive and finite, got {}",
            self.decay
        );
        Ok(())
    }

    /// Per-tap variances; they sum to one.
    pub fn tap_variances(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.num_taps)
            .map(|l| (-(l as f64) / self.decay).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

impl Default for ChannelProfile {
    fn default() -> Self {
        Self {
            num_taps: 8,
            decay: 4.0,
        }
    }
}

/// One fading draw: tap gains plus the time-domain AWGN variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: ComplexSignal,
    pub noise_variance: f64,
}

impl ChannelRealization {
    pub fn new(taps: ComplexSignal, noise_variance: f64) -> Result<Self> {
        ensure!(
            noise_variance >= 0.0 && noise_variance.is_finite(),
            "noise variance must be finite and >= 0"
        );
        Ok(Self {
            taps,
            noise_variance,
        })
    }

    pub fn with_noise(mut self, noise_variance: f64) -> Result<Self> {
        ensure!(
            noise_variance >= 0.0 && noise_variance.is_finite(),
            "noise variance must be finite and >= 0"
        );
        self.noise_variance = noise_variance;
        Ok(self)
    }

    pub fn num_taps(&self) -> usize {
        self.taps.len()
    }
}

/// Per-subcarrier channel estimate and its (modeled) error variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiEstimate {
    pub estimates: Vec<Complex64>,
    pub error_variance: f64,
}

impl CsiEstimate {
    pub fn perfect(response: Vec<Complex64>) -> Self {
        Self {
            estimates: response,
            error_variance: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    /// Mean squared error against the true response.
    pub fn mse_against(&self, truth: &[Complex64]) -> Result<f64> {
        ensure!(truth.len() == self.len(), "length mismatch in CSI comparison");
        Ok(self
            .estimates
            .iter()
            .zip(truth)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / truth.len() as f64)
    }
}

/// Draws independent taps `h_l ~ CN(0, σ_l²)`. The returned realization is
/// noiseless; attach noise with [`ChannelRealization::with_noise`].
pub fn sample_channel(profile: &ChannelProfile, rng: &mut SeededRng) -> Result<ChannelRealization> {
    profile.validate()?;
    let taps = profile
        .tap_variances()
        .into_iter()
        .map(|v| rng.complex_normal(v))
        .collect();
    ChannelRealization::new(ComplexSignal::new(taps)?, 0.0)
}

/// `z = h * x + w`, truncated to `len(x)` (zero-padded linear convolution).
pub fn apply_channel(x: &ComplexSignal, ch: &ChannelRealization, rng: &mut SeededRng) -> ComplexSignal {
    let xs = x.samples();
    let h = ch.taps.samples();
    let out = (0..xs.len())
        .map(|n| {
            let conv: Complex64 = h
                .iter()
                .take(n + 1)
                .enumerate()
                .map(|(l, hl)| hl * xs[n - l])
                .sum();
            if ch.noise_variance > 0.0 {
                conv + rng.complex_normal(ch.noise_variance)
            } else {
                conv
            }
        })
        .collect();
    ComplexSignal::new(out).expect("finite convolution of finite inputs")
}

/// DFT of the zero-padded taps at `n_subcarriers` points.
pub fn frequency_response(ch: &ChannelRealization, n_subcarriers: usize) -> Result<Vec<Complex64>> {
    ensure!(
        n_subcarriers >= ch.num_taps(),
        "need at least {} subcarriers for {} taps, got {}",
        ch.num_taps(),
        ch.num_taps(),
        n_subcarriers
    );
    let mut buf = vec![Complex64::new(0.0, 0.0); n_subcarriers];
    buf[..ch.num_taps()].copy_from_slice(ch.taps.samples());
    dft_in_place(&mut buf);
    Ok(buf)
}

fn check_pilots(pilot_tx: &Array2<Complex64>, pilot_rx: &Array2<Complex64>) -> Result<()> {
    ensure!(
        pilot_tx.dim() == pilot_rx.dim(),
        "pilot shapes differ: {:?} vs {:?}",
        pilot_tx.dim(),
        pilot_rx.dim()
    );
    ensure!(pilot_tx.nrows() >= 1 && pilot_tx.ncols() >= 1, "need at least one pilot symbol");
    if pilot_tx.iter().any(|p| p.norm_sqr() == 0.0) {
        return Err(invalid("pilot values must be nonzero"));
    }
    Ok(())
}

/// Per-subcarrier LS error variance `σ_w²/N_p² Σ_p 1/|x_{p,k}|²`.
fn ls_error_variances(pilot_tx: &Array2<Complex64>, noise_variance: f64) -> Vec<f64> {
    let np = pilot_tx.nrows() as f64;
    (0..pilot_tx.ncols())
        .map(|k| {
            let inv: f64 = pilot_tx.column(k).iter().map(|p| 1.0 / p.norm_sqr()).sum();
            noise_variance * inv / (np * np)
        })
        .collect()
}

/// Least-squares estimate: average over pilot symbols of `rx/tx`.
///
/// `noise_variance` is only used to report the modeled error variance
/// (pass 0 when unknown).
pub fn estimate_csi_ls(
    pilot_tx: &Array2<Complex64>,
    pilot_rx: &Array2<Complex64>,
    noise_variance: f64,
) -> Result<CsiEstimate> {
    check_pilots(pilot_tx, pilot_rx)?;
    ensure!(noise_variance >= 0.0, "noise variance must be >= 0");
    let np = pilot_tx.nrows() as f64;
    let estimates = (0..pilot_tx.ncols())
        .map(|k| {
            pilot_rx
                .column(k)
                .iter()
                .zip(pilot_tx.column(k))
                .map(|(r, t)| r / t)
                .sum::<Complex64>()
                / np
        })
        .collect();
    let vars = ls_error_variances(pilot_tx, noise_variance);
    Ok(CsiEstimate {
        estimates,
        error_variance: vars.iter().sum::<f64>() / vars.len() as f64,
    })
}

/// Linear MMSE estimate using the tap-domain prior of `profile`.
///
/// With `F_L` the first `L` DFT columns, the LS estimate is `y = F_L h + e`
/// with `e ~ CN(0, V)`. The posterior over taps has precision
/// `A = F_Lᴴ V⁻¹ F_L + Σ⁻¹`, mean `A⁻¹ F_Lᴴ V⁻¹ y`, and the reported error
/// variance is the subcarrier average of `f_kᴴ A⁻¹ f_k`, i.e. `tr(A⁻¹)`.
pub fn estimate_csi_mmse(
    pilot_tx: &Array2<Complex64>,
    pilot_rx: &Array2<Complex64>,
    profile: &ChannelProfile,
    noise_variance: f64,
) -> Result<CsiEstimate> {
    profile.validate()?;
    let ls = estimate_csi_ls(pilot_tx, pilot_rx, noise_variance)?;
    let n = ls.len();
    let taps = profile.num_taps;
    ensure!(n >= taps, "need at least {taps} subcarriers for the MMSE prior, got {n}");
    if noise_variance == 0.0 {
        return Ok(ls);
    }
    let vars = ls_error_variances(pilot_tx, noise_variance);
    let prior = profile.tap_variances();

    // twiddle[m] = e^{+j2πm/N}; (F_L)ᴴ[l,k] = twiddle[(k·l) mod N]
    let twiddle: Vec<Complex64> = (0..n)
        .map(|m| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / n as f64))
        .collect();

    // Gram entries depend only on l - m.
    let gram_lag = |d: isize| -> Complex64 {
        (0..n)
            .map(|k| {
                let idx = ((k as isize * d).rem_euclid(n as isize)) as usize;
                twiddle[idx] / vars[k]
            })
            .sum()
    };
    let lags: Vec<Complex64> = (0..(2 * taps - 1))
        .map(|i| gram_lag(i as isize - (taps as isize - 1)))
        .collect();
    let mut precision = DMatrix::<Complex64>::zeros(taps, taps);
    for l in 0..taps {
        for m in 0..taps {
            precision[(l, m)] = lags[l + taps - 1 - m];
        }
        precision[(l, l)] += Complex64::new(1.0 / prior[l] + MMSE_DIAGONAL_LOADING, 0.0);
    }
    let rhs = DVector::<Complex64>::from_iterator(
        taps,
        (0..taps).map(|l| {
            (0..n)
                .map(|k| twiddle[(k * l) % n] * ls.estimates[k] / vars[k])
                .sum::<Complex64>()
        }),
    );
    let covariance = precision
        .clone()
        .try_inverse()
        .ok_or_else(|| invalid("MMSE normal matrix is singular"))?;
    let tap_mean = &covariance * rhs;

    let mut estimates = vec![Complex64::new(0.0, 0.0); n];
    for l in 0..taps {
        estimates[l] = tap_mean[l];
    }
    dft_in_place(&mut estimates);
    let error_variance = (0..taps).map(|l| covariance[(l, l)].re).sum::<f64>();
    Ok(CsiEstimate {
        estimates,
        error_variance,
    })
}

/// `Ĥ_k = H_k - ℰ_k` with `ℰ_k ~ CN(0, σ_e²)` independent of `H`.
pub fn perturb_csi(true_h: &[Complex64], error_variance: f64, rng: &mut SeededRng) -> Result<CsiEstimate> {
    ensure!(
        error_variance >= 0.0 && error_variance.is_finite(),
        "CSI error variance must be finite and >= 0, got {error_variance}"
    );
    let estimates = true_h
        .iter()
        .map(|h| {
            if error_variance > 0.0 {
                h - rng.complex_normal(error_variance)
            } else {
                *h
            }
        })
        .collect();
    Ok(CsiEstimate {
        estimates,
        error_variance,
    })
}
