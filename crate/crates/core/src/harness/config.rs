//! Experiment configuration, read from a sectioned `key = value` file.
//!
//! The grammar is TOML. Every key is optional; omitted keys take the
//! defaults listed on [`ExperimentConfig::default`]. Unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelProfile;
use crate::error::{ensure, invalid, Error, Result};
use crate::ofdm::OfdmFrameConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub channel: ChannelSection,
    pub ofdm: OfdmSection,
    pub snr: SnrSection,
    pub source: SourceSection,
    pub power: PowerSection,
    pub clipping: ClippingSection,
    pub csi: CsiSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub taps: usize,
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfdmSection {
    pub info_symbols: usize,
    pub pilot_symbols: usize,
    pub subcarriers: usize,
    pub cp_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnrSection {
    pub low_db: f64,
    pub high_db: f64,
    /// Grid spacing for the SCS sweep.
    pub step_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub correlation: f64,
    pub variance1: f64,
    pub variance2: f64,
    /// Compression budgets. Carried for completeness; the linear toy encoder
    /// does not reduce dimension.
    pub bandwidth1: usize,
    pub bandwidth2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSection {
    pub total1: f64,
    pub total2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClippingSection {
    /// Clipping ratio for `pipeline`; absent means no clipping.
    pub ratio: Option<f64>,
    /// Ratios visited by the PAPR sweep (the unclipped case is always added).
    pub sweep_ratios: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiModeKind {
    Perfect,
    Ls,
    Mmse,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsiSection {
    pub mode: CsiModeKind,
    /// Complex CSI error variance σ_e² for `synthetic` mode.
    pub error_variance: f64,
    pub sweep_pilots: Vec<usize>,
    pub sweep_error_variances: Vec<f64>,
}

/// Resolved CSI acquisition mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CsiMode {
    Perfect,
    Ls,
    Mmse,
    /// `Ĥ = H − ℰ`, `ℰ ~ CN(0, σ_e²)`.
    Synthetic(f64),
}

impl CsiMode {
    pub fn name(&self) -> &'static str {
        match self {
            CsiMode::Perfect => "perfect",
            CsiMode::Ls => "ls",
            CsiMode::Mmse => "mmse",
            CsiMode::Synthetic(_) => "synthetic",
        }
    }
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { taps: 8, decay: 4.0 }
    }
}

impl Default for OfdmSection {
    fn default() -> Self {
        Self {
            info_symbols: 3,
            pilot_symbols: 2,
            subcarriers: 2048,
            cp_length: 16,
        }
    }
}

impl Default for SnrSection {
    fn default() -> Self {
        Self {
            low_db: -8.0,
            high_db: 2.0,
            step_db: 1.0,
        }
    }
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            correlation: 0.8,
            variance1: 1.0,
            variance2: 1.0,
            bandwidth1: 1,
            bandwidth2: 1,
        }
    }
}

impl Default for PowerSection {
    fn default() -> Self {
        Self { total1: 0.5, total2: 0.5 }
    }
}

impl Default for ClippingSection {
    fn default() -> Self {
        Self {
            ratio: None,
            sweep_ratios: vec![1.0, 1.4, 2.0, 3.0],
        }
    }
}

impl Default for CsiSection {
    fn default() -> Self {
        Self {
            mode: CsiModeKind::Perfect,
            error_variance: 0.0,
            sweep_pilots: vec![1, 2, 4, 8],
            sweep_error_variances: vec![0.0, 0.01, 0.05, 0.1, 0.5],
        }
    }
}

impl Default for ExperimentConfig {
    /// Eight taps with decay 4, SNR drawn from [-8, 2] dB, two pilot and
    /// three data symbols on 2048 subcarriers with a 16-sample prefix,
    /// power 0.5 per view, r = 0.8, perfect CSI, 100 trials, seed 1.
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 100,
            channel: ChannelSection::default(),
            ofdm: OfdmSection::default(),
            snr: SnrSection::default(),
            source: SourceSection::default(),
            power: PowerSection::default(),
            clipping: ClippingSection::default(),
            csi: CsiSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Malformed(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.trials >= 1, "trials must be >= 1");
        self.profile()?;
        self.frame()?;
        let s = &self.snr;
        ensure!(s.low_db.is_finite() && s.high_db.is_finite(), "SNR bounds must be finite");
        ensure!(s.low_db <= s.high_db, "SNR low ({}) exceeds high ({})", s.low_db, s.high_db);
        ensure!(s.step_db > 0.0 && s.step_db.is_finite(), "SNR step must be positive");
        let src = &self.source;
        ensure!(src.correlation.abs() <= 1.0, "correlation must lie in [-1, 1]");
        ensure!(
            src.variance1 > 0.0 && src.variance2 > 0.0 && src.variance1.is_finite() && src.variance2.is_finite(),
            "source variances must be positive"
        );
        ensure!(src.bandwidth1 >= 1 && src.bandwidth2 >= 1, "bandwidths must be >= 1");
        let p = &self.power;
        ensure!(
            p.total1 > 0.0 && p.total2 > 0.0 && p.total1.is_finite() && p.total2.is_finite(),
            "powers must be positive"
        );
        if let Some(rho) = self.clipping.ratio {
            ensure!(rho > 0.0 && !rho.is_nan(), "clipping ratio must be > 0");
        }
        ensure!(
            self.clipping.sweep_ratios.iter().all(|r| *r > 0.0 && r.is_finite()),
            "sweep ratios must be positive and finite"
        );
        let c = &self.csi;
        ensure!(
            c.error_variance >= 0.0 && c.error_variance.is_finite(),
            "CSI error variance must be >= 0"
        );
        ensure!(!c.sweep_pilots.is_empty(), "sweep_pilots must not be empty");
        ensure!(c.sweep_pilots.iter().all(|&n| n >= 1), "pilot counts must be >= 1");
        ensure!(
            c.sweep_error_variances.iter().all(|v| *v >= 0.0 && v.is_finite()),
            "sweep error variances must be >= 0"
        );
        Ok(())
    }

    pub fn profile(&self) -> Result<ChannelProfile> {
        ChannelProfile::new(self.channel.taps, self.channel.decay)
    }

    pub fn csi_mode(&self) -> CsiMode {
        match self.csi.mode {
            CsiModeKind::Perfect => CsiMode::Perfect,
            CsiModeKind::Ls => CsiMode::Ls,
            CsiModeKind::Mmse => CsiMode::Mmse,
            CsiModeKind::Synthetic => CsiMode::Synthetic(self.csi.error_variance),
        }
    }

    /// Frame with the configured pilot count.
    pub fn frame(&self) -> Result<OfdmFrameConfig> {
        self.frame_with_pilots(self.ofdm.pilot_symbols)
    }

    /// Frame with `n_pilots` unit-modulus QPSK pilot symbols. Pilots are
    /// rescaled to the link power by the pipeline.
    pub fn frame_with_pilots(&self, n_pilots: usize) -> Result<OfdmFrameConfig> {
        let o = &self.ofdm;
        ensure!(
            o.subcarriers >= self.channel.taps,
            "need at least {} subcarriers for {} taps",
            self.channel.taps,
            self.channel.taps
        );
        if n_pilots == 0 {
            return Err(invalid("pilot_symbols must be >= 1"));
        }
        OfdmFrameConfig::new(o.info_symbols, n_pilots, o.subcarriers, o.cp_length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!((cfg.channel.taps, cfg.channel.decay), (8, 4.0));
        assert_eq!((cfg.snr.low_db, cfg.snr.high_db), (-8.0, 2.0));
        let o = &cfg.ofdm;
        assert_eq!((o.pilot_symbols, o.info_symbols, o.subcarriers, o.cp_length), (2, 3, 2048, 16));
        assert_eq!((cfg.power.total1, cfg.power.total2), (0.5, 0.5));
    }

    #[test]
    fn parses_sections() {
        let cfg = ExperimentConfig::parse(
            r#"
            seed = 42
            trials = 7
            [channel]
            taps = 4
            [snr]
            low_db = 0.0
            high_db = 0.0
            [clipping]
            ratio = 3.0
            [csi]
            mode = "synthetic"
            error_variance = 0.05
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.channel.taps, 4);
        assert_eq!(cfg.channel.decay, 4.0);
        assert_eq!(cfg.clipping.ratio, Some(3.0));
        assert_eq!(cfg.csi_mode(), CsiMode::Synthetic(0.05));
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = ExperimentConfig::default();
        cfg.clipping.ratio = Some(1.4);
        cfg.csi.mode = CsiModeKind::Mmse;
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "unknown = 1",
            "[channel]\ntapz = 3",
            "trials = 0",
            "[snr]\nlow_db = 3.0\nhigh_db = 1.0",
            "[ofdm]\ncp_length = 4096",
            "[ofdm]\npilot_symbols = 0",
            "[source]\ncorrelation = 1.5",
            "[csi]\nmode = \"magic\"",
            "[clipping]\nratio = -1.0",
            "seed = \"x\"",
            "[[[",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "accepted {text:?}");
        }
    }
}
