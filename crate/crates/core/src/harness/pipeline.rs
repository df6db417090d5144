//! One end-to-end trial: correlated Gaussian symbols, power-scaled linear
//! encoders, OFDM over independent fading links, CSI acquisition, and
//! per-subcarrier posterior-fusion decoding.
//!
//! Conventions:
//!
//! * SNR is per subcarrier: `σ_w² = P·10^{−SNR/10}` with `E|H|² = 1`. The
//!   time-domain AWGN therefore has variance `σ_w²/N_c`.
//! * Each complex symbol carries two real samples (real and imaginary part),
//!   each with prior variance `P/2` and correlation `r` across views.
//! * The receiver derotates `Z_k` by the phase of `Ĥ_k` and decodes the two
//!   parts as real channels with gain `|Ĥ_k|`, noise `σ_w²/2` and CSI error
//!   variance `σ_e²` (the complex estimator's error variance).
//! * Errors are measured in the transmitted-symbol domain.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{CsiMode, ExperimentConfig};
use crate::channel::{
    apply_channel, estimate_csi_ls, estimate_csi_mmse, frequency_response, perturb_csi, sample_channel,
    ChannelProfile, CsiEstimate,
};
use crate::error::{ensure, Result};
use crate::fusion::{map_estimate_single, posterior_fuse, GaussianPairModel, ObservationModel};
use crate::info::scs_complex;
use crate::ofdm::{clip, ofdm_demodulate, ofdm_modulate, papr, power_normalize, OfdmFrameConfig};
use crate::signal::{ComplexSignal, SeededRng};

// sub-stream ids inside one trial
const STREAM_SOURCE: u64 = 0;
const STREAM_CHANNEL: u64 = 1;
const STREAM_NOISE: u64 = 3;
const STREAM_CSI: u64 = 5;
const STREAM_SNR: u64 = 7;
const STREAM_PILOT_NOISE: u64 = 8;

/// Per-trial measurements. Variances and MSEs are per real sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub snr1_db: f64,
    pub snr2_db: f64,
    /// Fusion-decoder MSE of each view.
    pub mse1: f64,
    pub mse2: f64,
    /// MSE of the single-view MMSE decoder, for reference.
    pub mse_single1: f64,
    pub mse_single2: f64,
    /// Posterior variance predicted by the fusion model, averaged over
    /// subcarriers.
    pub theory_var1: f64,
    pub theory_var2: f64,
    pub r: f64,
    /// Predicted correlation of the derotated received samples, pooled over
    /// subcarriers.
    pub r_prime: f64,
    pub empirical_corr: f64,
    /// SCS of the two single-view equalized symbol streams.
    pub scs: f64,
    /// Mean over both views of the packet PAPR.
    pub papr_before_db: f64,
    pub papr_after_db: f64,
    /// CSI error variance the decoder assumes.
    pub csi_err_var1: f64,
    pub csi_err_var2: f64,
    /// Measured mean squared CSI error.
    pub csi_mse1: f64,
    pub csi_mse2: f64,
    /// Real samples per view behind each MSE.
    pub n_samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrChoice {
    /// Uniform per view per trial over the configured range.
    Drawn,
    Fixed { snr1_db: f64, snr2_db: f64 },
}

/// Knobs that sweeps vary on top of the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSettings {
    pub snr: SnrChoice,
    pub clip_ratio: Option<f64>,
    pub csi: CsiMode,
    pub n_pilots: usize,
}

impl LinkSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            snr: SnrChoice::Drawn,
            clip_ratio: cfg.clipping.ratio,
            csi: cfg.csi_mode(),
            n_pilots: cfg.ofdm.pilot_symbols,
        }
    }
}

/// Draws the two `N_s × N_c` source grids (real and imaginary parts each
/// correlated by `r`) and scales each to its power budget.
pub fn encode_views(cfg: &ExperimentConfig, rng: &mut SeededRng) -> Result<(Array2<Complex64>, Array2<Complex64>)> {
    let shape = (cfg.ofdm.info_symbols, cfg.ofdm.subcarriers);
    let r = cfg.source.correlation;
    let (sd1, sd2) = (cfg.source.variance1.sqrt(), cfg.source.variance2.sqrt());
    let decor = (1.0 - r * r).max(0.0).sqrt();
    let mut s1 = Array2::zeros(shape);
    let mut s2 = Array2::zeros(shape);
    for (a, b) in s1.iter_mut().zip(s2.iter_mut()) {
        let mut part = || {
            let u = rng.standard_normal();
            let v = rng.standard_normal();
            (sd1 * u, sd2 * (r * u + decor * v))
        };
        let (re1, re2) = part();
        let (im1, im2) = part();
        *a = Complex64::new(re1, im1);
        *b = Complex64::new(re2, im2);
    }
    Ok((power_normalize(&s1, cfg.power.total1)?, power_normalize(&s2, cfg.power.total2)?))
}

/// Per-subcarrier noise variance `P·10^{−SNR/10}` (zero at `+∞` dB).
pub fn noise_variance(power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        power * 10f64.powf(-snr_db / 10.0)
    }
}

struct LinkOutput {
    data: Array2<Complex64>,
    csi: CsiEstimate,
    csi_mse: f64,
    papr_before_db: f64,
    papr_after_db: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_link(
    x: &Array2<Complex64>,
    frame: &OfdmFrameConfig,
    profile: &ChannelProfile,
    noise_var: f64,
    settings: &LinkSettings,
    view: u64,
    trial_rng: &SeededRng,
) -> Result<LinkOutput> {
    let nc = frame.n_subcarriers;
    let pkt = ofdm_modulate(x, frame)?;
    let papr_before_db = papr(&pkt)?.db;
    let tx = match settings.clip_ratio {
        Some(rho) => clip(&pkt, rho)?,
        None => pkt,
    };
    let papr_after_db = papr(&tx)?.db;

    let ch = sample_channel(profile, &mut trial_rng.fork(STREAM_CHANNEL + view))?;
    // Pilot and data sections draw noise from separate streams so that the
    // data symbols see identical noise whatever the pilot count.
    let mut rx = apply_channel(tx.samples(), &ch, &mut trial_rng.fork(STREAM_NOISE + view)).into_samples();
    let time_var = noise_var / nc as f64;
    if time_var > 0.0 {
        let split = frame.n_pilot_symbols * frame.symbol_len();
        let mut pilot_noise = trial_rng.fork(STREAM_PILOT_NOISE + view);
        let mut data_noise = trial_rng.fork(STREAM_NOISE + view);
        for (i, s) in rx.iter_mut().enumerate() {
            let rng = if i < split { &mut pilot_noise } else { &mut data_noise };
            *s += rng.complex_normal(time_var);
        }
    }
    let (data, pilots_rx) = ofdm_demodulate(&tx.with_samples(ComplexSignal::new(rx)?)?, frame)?;

    let truth = frequency_response(&ch, nc)?;
    let csi = match settings.csi {
        CsiMode::Perfect => CsiEstimate::perfect(truth.clone()),
        CsiMode::Ls => estimate_csi_ls(&frame.pilot_values, &pilots_rx, noise_var)?,
        CsiMode::Mmse => estimate_csi_mmse(&frame.pilot_values, &pilots_rx, profile, noise_var)?,
        CsiMode::Synthetic(var) => perturb_csi(&truth, var, &mut trial_rng.fork(STREAM_CSI + view))?,
    };
    let csi_mse = csi.mse_against(&truth)?;
    Ok(LinkOutput {
        data,
        csi,
        csi_mse,
        papr_before_db,
        papr_after_db,
    })
}

fn link_frame(cfg: &ExperimentConfig, n_pilots: usize, power: f64) -> Result<OfdmFrameConfig> {
    let base = cfg.frame_with_pilots(n_pilots)?;
    OfdmFrameConfig::with_pilots(base.n_info_symbols, base.cp_length, base.pilot_values.mapv(|p| p * power.sqrt()))
}

fn derotation(h: Complex64) -> (f64, Complex64) {
    let g = h.norm();
    if g > 0.0 {
        (g, h.conj() / g)
    } else {
        (0.0, Complex64::new(1.0, 0.0))
    }
}

/// Runs trial `trial` of an experiment. Randomness is taken from
/// `master.fork(trial)`, so trials are reproducible individually and sweeps
/// that share a master seed see the same sources and channels.
pub fn simulate_trial(
    cfg: &ExperimentConfig,
    settings: &LinkSettings,
    trial: u64,
    master: &SeededRng,
) -> Result<TrialRecord> {
    cfg.validate()?;
    let t = master.fork(trial);
    let (snr1_db, snr2_db) = match settings.snr {
        SnrChoice::Drawn => {
            let mut r = t.fork(STREAM_SNR);
            (
                r.uniform(cfg.snr.low_db, cfg.snr.high_db),
                r.uniform(cfg.snr.low_db, cfg.snr.high_db),
            )
        }
        SnrChoice::Fixed { snr1_db, snr2_db } => (snr1_db, snr2_db),
    };
    ensure!(!snr1_db.is_nan() && !snr2_db.is_nan(), "SNR must not be NaN");
    let profile = cfg.profile()?;
    let (p1, p2) = (cfg.power.total1, cfg.power.total2);
    let (w1, w2) = (noise_variance(p1, snr1_db), noise_variance(p2, snr2_db));

    let (x1, x2) = encode_views(cfg, &mut t.fork(STREAM_SOURCE))?;
    let l1 = run_link(&x1, &link_frame(cfg, settings.n_pilots, p1)?, &profile, w1, settings, 0, &t)?;
    let l2 = run_link(&x2, &link_frame(cfg, settings.n_pilots, p2)?, &profile, w2, settings, 1, &t)?;

    let r = cfg.source.correlation;
    let model = GaussianPairModel::zero_mean(p1 / 2.0, p2 / 2.0, r)?;
    let swapped = model.swapped();
    let (e1, e2) = (l1.csi.error_variance, l2.csi.error_variance);
    let (ns, nc) = x1.dim();

    let mut sq = [0.0f64; 4];
    let mut theory = [0.0f64; 2];
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    let (mut pool_cov, mut pool_v1, mut pool_v2) = (0.0, 0.0, 0.0);
    let mut eq1 = Vec::with_capacity(ns * nc);
    let mut eq2 = Vec::with_capacity(ns * nc);

    for k in 0..nc {
        let (h1, h2) = (l1.csi.estimates[k], l2.csi.estimates[k]);
        let (g1, rot1) = derotation(h1);
        let (g2, rot2) = derotation(h2);
        let obs = ObservationModel::new((g1, g2), (e1, e2), (w1 / 2.0, w2 / 2.0))?;
        let obs_sw = obs.swapped();
        let (s1, s2) = obs.equivalent_noises(&model);
        theory[0] += posterior_fuse(&model, &obs, 0.0, 0.0)?.variance;
        theory[1] += posterior_fuse(&swapped, &obs_sw, 0.0, 0.0)?.variance;
        pool_cov += g1 * g2 * model.covariance();
        pool_v1 += g1 * g1 * model.var1 + s1;
        pool_v2 += g2 * g2 * model.var2 + s2;
        // single-view Wiener equalizers on the complex symbols
        let wiener1 = h1.conj() / (h1.norm_sqr() + w1 / p1 + e1);
        let wiener2 = h2.conj() / (h2.norm_sqr() + w2 / p2 + e2);

        for s in 0..ns {
            let (z1, z2) = (l1.data[[s, k]], l2.data[[s, k]]);
            eq1.push(wiener1 * z1);
            eq2.push(wiener2 * z2);
            let (y1, y2) = (z1 * rot1, z2 * rot2);
            let (t1, t2) = (x1[[s, k]], x2[[s, k]]);
            for (a, b, u1, u2) in [(y1.re, y2.re, t1.re, t2.re), (y1.im, y2.im, t1.im, t2.im)] {
                let m1 = posterior_fuse(&model, &obs, a, b)?.mean;
                let m2 = posterior_fuse(&swapped, &obs_sw, b, a)?.mean;
                let q1 = map_estimate_single(0.0, model.var1, g1, s1, a)?;
                let q2 = map_estimate_single(0.0, model.var2, g2, s2, b)?;
                sq[0] += (m1 - u1).powi(2);
                sq[1] += (m2 - u2).powi(2);
                sq[2] += (q1 - u1).powi(2);
                sq[3] += (q2 - u2).powi(2);
                sab += a * b;
                saa += a * a;
                sbb += b * b;
            }
        }
    }
    let n = (2 * ns * nc) as f64;
    let denom = (saa * sbb).sqrt();
    let pool_denom = (pool_v1 * pool_v2).sqrt();
    Ok(TrialRecord {
        trial,
        snr1_db,
        snr2_db,
        mse1: sq[0] / n,
        mse2: sq[1] / n,
        mse_single1: sq[2] / n,
        mse_single2: sq[3] / n,
        theory_var1: theory[0] / nc as f64,
        theory_var2: theory[1] / nc as f64,
        r,
        r_prime: if pool_denom > 0.0 { pool_cov / pool_denom } else { 0.0 },
        empirical_corr: if denom > 0.0 { sab / denom } else { 0.0 },
        scs: scs_complex(&eq1, &eq2)?,
        papr_before_db: (l1.papr_before_db + l2.papr_before_db) / 2.0,
        papr_after_db: (l1.papr_after_db + l2.papr_after_db) / 2.0,
        csi_err_var1: e1,
        csi_err_var2: e2,
        csi_mse1: l1.csi_mse,
        csi_mse2: l2.csi_mse,
        n_samples: n as u64,
    })
}

/// Runs `cfg.trials` trials with the configured settings, in trial order.
pub fn run_toy_pipeline(cfg: &ExperimentConfig, master: &SeededRng) -> Result<Vec<TrialRecord>> {
    run_trials(cfg, &LinkSettings::from_config(cfg), master)
}

pub fn run_trials(cfg: &ExperimentConfig, settings: &LinkSettings, master: &SeededRng) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    (0..cfg.trials as u64)
        .map(|t| simulate_trial(cfg, settings, t, master))
        .collect()
}

/// Aggregate over records, weighting every trial equally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSummary {
    pub trials: usize,
    pub mse1: f64,
    pub mse2: f64,
    pub mse_single1: f64,
    pub mse_single2: f64,
    pub theory_var1: f64,
    pub theory_var2: f64,
    pub scs: f64,
    pub csi_mse: f64,
    pub r_prime: f64,
    pub empirical_corr: f64,
}

impl PipelineSummary {
    pub fn of(records: &[TrialRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let mean = |f: fn(&TrialRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        Self {
            trials: records.len(),
            mse1: mean(|r| r.mse1),
            mse2: mean(|r| r.mse2),
            mse_single1: mean(|r| r.mse_single1),
            mse_single2: mean(|r| r.mse_single2),
            theory_var1: mean(|r| r.theory_var1),
            theory_var2: mean(|r| r.theory_var2),
            scs: mean(|r| r.scs),
            csi_mse: mean(|r| (r.csi_mse1 + r.csi_mse2) / 2.0),
            r_prime: mean(|r| r.r_prime),
            empirical_corr: mean(|r| r.empirical_corr),
        }
    }

    /// Fusion MSE averaged over both views.
    pub fn mse(&self) -> f64 {
        (self.mse1 + self.mse2) / 2.0
    }

    pub fn theory_var(&self) -> f64 {
        (self.theory_var1 + self.theory_var2) / 2.0
    }

    /// `|mse − theory| / theory`, worst view.
    pub fn theory_gap(&self) -> f64 {
        ((self.mse1 - self.theory_var1).abs() / self.theory_var1)
            .max((self.mse2 - self.theory_var2).abs() / self.theory_var2)
    }
}
