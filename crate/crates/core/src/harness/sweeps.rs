//! Parameter sweeps over SNR, clipping ratio and CSI quality.
//!
//! Every point of a sweep reuses the same per-trial random streams, so
//! differences between points come from the swept parameter rather than from
//! fresh sources and channels.

use serde::{Deserialize, Serialize};

use super::config::{CsiMode, ExperimentConfig};
use super::csv_io::{format_float, CsvRow};
use super::pipeline::{run_trials, LinkSettings, PipelineSummary, SnrChoice};
use crate::error::{ensure, Result};
use crate::signal::SeededRng;

/// SNR grid from `low` to `high` in steps of `step` (both ends included when
/// the range is a whole number of steps).
pub fn snr_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    let s = &cfg.snr;
    let n = ((s.high_db - s.low_db) / s.step_db + 1e-9).floor() as usize;
    (0..=n).map(|i| s.low_db + i as f64 * s.step_db).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScsPoint {
    pub snr_db: f64,
    pub trials: u64,
    pub mean_scs: f64,
}

/// Mean SCS of the equalized received streams with both links at each grid
/// SNR.
pub fn sweep_scs_vs_snr(cfg: &ExperimentConfig, master: &SeededRng) -> Result<Vec<ScsPoint>> {
    sweep_scs_at(cfg, &snr_grid(cfg), master)
}

pub fn sweep_scs_at(cfg: &ExperimentConfig, snrs: &[f64], master: &SeededRng) -> Result<Vec<ScsPoint>> {
    snrs.iter()
        .map(|&snr| {
            let settings = LinkSettings {
                snr: SnrChoice::Fixed {
                    snr1_db: snr,
                    snr2_db: snr,
                },
                ..LinkSettings::from_config(cfg)
            };
            let recs = run_trials(cfg, &settings, master)?;
            Ok(ScsPoint {
                snr_db: snr,
                trials: recs.len() as u64,
                mean_scs: PipelineSummary::of(&recs).scs,
            })
        })
        .collect()
}

/// Number of adjacent pairs where the value drops.
pub fn count_inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] < w[0]).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaprPoint {
    /// `f64::INFINITY` for the unclipped case.
    pub ratio: f64,
    /// Post-clipping PAPR of every trial (mean over both views), in dB.
    pub papr_db: Vec<f64>,
    pub summary: PipelineSummary,
}

impl PaprPoint {
    pub fn ccdf(&self, threshold_db: f64) -> f64 {
        ccdf(&self.papr_db, threshold_db)
    }
}

/// Fraction of samples strictly above `threshold`.
pub fn ccdf(samples: &[f64], threshold: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|&&s| s > threshold).count() as f64 / samples.len() as f64
}

/// Clipping sweep over the configured ratios plus the unclipped case,
/// ordered by increasing ratio.
pub fn sweep_papr(cfg: &ExperimentConfig, master: &SeededRng) -> Result<Vec<PaprPoint>> {
    let mut ratios = cfg.clipping.sweep_ratios.clone();
    ratios.push(f64::INFINITY);
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    ratios
        .into_iter()
        .map(|ratio| {
            let settings = LinkSettings {
                clip_ratio: ratio.is_finite().then_some(ratio),
                ..LinkSettings::from_config(cfg)
            };
            let recs = run_trials(cfg, &settings, master)?;
            Ok(PaprPoint {
                ratio,
                papr_db: recs.iter().map(|r| r.papr_after_db).collect(),
                summary: PipelineSummary::of(&recs),
            })
        })
        .collect()
}

/// One per-trial PAPR sample of the clipping sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaprSampleRow {
    pub clip_ratio: f64,
    pub trial: u64,
    pub papr_db: f64,
    pub sweep_mse: f64,
    pub sweep_theory_var: f64,
}

pub fn papr_rows(points: &[PaprPoint]) -> Vec<PaprSampleRow> {
    points
        .iter()
        .flat_map(|p| {
            p.papr_db.iter().enumerate().map(move |(t, &db)| PaprSampleRow {
                clip_ratio: p.ratio,
                trial: t as u64,
                papr_db: db,
                sweep_mse: p.summary.mse(),
                sweep_theory_var: p.summary.theory_var(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiPoint {
    pub mode: String,
    pub n_pilots: u64,
    /// Synthetic error variance; 0 for estimated modes.
    pub error_variance: f64,
    pub trials: u64,
    /// Measured mean squared CSI error.
    pub csi_mse: f64,
    /// Error variance assumed by the decoder.
    pub csi_err_model: f64,
    pub mse: f64,
    pub theory_var: f64,
    pub r_prime: f64,
    pub empirical_corr: f64,
}

fn csi_point(cfg: &ExperimentConfig, master: &SeededRng, csi: CsiMode, n_pilots: usize) -> Result<CsiPoint> {
    let settings = LinkSettings {
        csi,
        n_pilots,
        ..LinkSettings::from_config(cfg)
    };
    let recs = run_trials(cfg, &settings, master)?;
    let s = PipelineSummary::of(&recs);
    let model = recs.iter().map(|r| (r.csi_err_var1 + r.csi_err_var2) / 2.0).sum::<f64>() / recs.len() as f64;
    Ok(CsiPoint {
        mode: csi.name().into(),
        n_pilots: n_pilots as u64,
        error_variance: match csi {
            CsiMode::Synthetic(v) => v,
            _ => 0.0,
        },
        trials: recs.len() as u64,
        csi_mse: s.csi_mse,
        csi_err_model: model,
        mse: s.mse(),
        theory_var: s.theory_var(),
        r_prime: s.r_prime,
        empirical_corr: s.empirical_corr,
    })
}

/// Perfect-CSI baseline, then LS and MMSE at every configured pilot count,
/// then the synthetic error variances.
pub fn sweep_csi_error(cfg: &ExperimentConfig, master: &SeededRng) -> Result<Vec<CsiPoint>> {
    ensure!(!cfg.csi.sweep_pilots.is_empty(), "no pilot counts to sweep");
    let np = cfg.ofdm.pilot_symbols;
    let mut out = vec![csi_point(cfg, master, CsiMode::Perfect, np)?];
    for mode in [CsiMode::Ls, CsiMode::Mmse] {
        for &p in &cfg.csi.sweep_pilots {
            out.push(csi_point(cfg, master, mode, p)?);
        }
    }
    for &v in &cfg.csi.sweep_error_variances {
        out.push(csi_point(cfg, master, CsiMode::Synthetic(v), np)?);
    }
    Ok(out)
}

impl CsvRow for ScsPoint {
    const HEADER: &'static [&'static str] = &["snr_db", "trials", "mean_scs"];

    fn fields(&self) -> Vec<String> {
        vec![format_float(self.snr_db), self.trials.to_string(), format_float(self.mean_scs)]
    }
}

impl CsvRow for PaprSampleRow {
    const HEADER: &'static [&'static str] = &["clip_ratio", "trial", "papr_db", "sweep_mse", "sweep_theory_var"];

    fn fields(&self) -> Vec<String> {
        vec![
            format_float(self.clip_ratio),
            self.trial.to_string(),
            format_float(self.papr_db),
            format_float(self.sweep_mse),
            format_float(self.sweep_theory_var),
        ]
    }
}

impl CsvRow for CsiPoint {
    const HEADER: &'static [&'static str] = &[
        "mode",
        "n_pilots",
        "error_variance",
        "trials",
        "csi_mse",
        "csi_err_model",
        "mse",
        "theory_var",
        "r_prime",
        "empirical_corr",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.mode.clone(),
            self.n_pilots.to_string(),
            format_float(self.error_variance),
            self.trials.to_string(),
            format_float(self.csi_mse),
            format_float(self.csi_err_model),
            format_float(self.mse),
            format_float(self.theory_var),
            format_float(self.r_prime),
            format_float(self.empirical_corr),
        ]
    }
}
