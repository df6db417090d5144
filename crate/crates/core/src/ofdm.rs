//! Block-pilot OFDM framing, amplitude clipping and PAPR.
//!
//! A packet is `N_p` pilot symbols followed by `N_s` information symbols.
//! Every symbol is the inverse DFT of one `N_c`-subcarrier row with the last
//! `L_cp` time samples copied in front as a cyclic prefix, so the serialized
//! packet holds `(N_s + N_p)(N_c + L_cp)` samples.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::io::Write;

use ndarray::{s, Array2};
use num_complex::Complex64;
use rand::RngCore;

use crate::error::{ensure, malformed, Result};
use crate::signal::{dft_in_place, inverse_dft_in_place, ComplexSignal, SeededRng};

/// Seed of the default pilot sequence shared by transmitter and receiver.
pub const DEFAULT_PILOT_SEED: u64 = 0x0FD3_91C0_DE5E_ED01;

/// Unit-magnitude QPSK pilots `e^{j(π/4 + qπ/2)}` drawn from `seed`.
pub fn qpsk_pilots(n_pilot_symbols: usize, n_subcarriers: usize, seed: u64) -> Array2<Complex64> {
    let mut rng = SeededRng::new(seed);
    Array2::from_shape_fn((n_pilot_symbols, n_subcarriers), |_| {
        let q = (rng.next_u32() & 3) as f64;
        Complex64::from_polar(1.0, FRAC_PI_4 + q * FRAC_PI_2)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmFrameConfig {
    pub n_info_symbols: usize,
    pub n_pilot_symbols: usize,
    pub n_subcarriers: usize,
    pub cp_length: usize,
    pub pilot_values: Array2<Complex64>,
}

impl OfdmFrameConfig {
    /// Frame with the default seeded QPSK pilots.
    pub fn new(n_info_symbols: usize, n_pilot_symbols: usize, n_subcarriers: usize, cp_length: usize) -> Result<Self> {
        Self::with_pilots(
            n_info_symbols,
            cp_length,
            qpsk_pilots(n_pilot_symbols, n_subcarriers, DEFAULT_PILOT_SEED),
        )
    }

    pub fn with_pilots(n_info_symbols: usize, cp_length: usize, pilot_values: Array2<Complex64>) -> Result<Self> {
        let (n_pilot_symbols, n_subcarriers) = pilot_values.dim();
        let cfg = Self {
            n_info_symbols,
            n_pilot_symbols,
            n_subcarriers,
            cp_length,
            pilot_values,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_info_symbols >= 1, "need at least one information symbol");
        ensure!(self.n_pilot_symbols >= 1, "need at least one pilot symbol");
        ensure!(self.n_subcarriers >= 1, "need at least one subcarrier");
        ensure!(
            self.cp_length < self.n_subcarriers,
            "cyclic prefix {} must be shorter than {} subcarriers",
            self.cp_length,
            self.n_subcarriers
        );
        ensure!(
            self.pilot_values.dim() == (self.n_pilot_symbols, self.n_subcarriers),
            "pilot matrix shape {:?} does not match frame",
            self.pilot_values.dim()
        );
        ensure!(
            self.pilot_values.iter().all(|p| p.norm_sqr() > 0.0 && p.re.is_finite() && p.im.is_finite()),
            "pilot values must be finite and nonzero"
        );
        Ok(())
    }

    pub fn symbol_len(&self) -> usize {
        self.n_subcarriers + self.cp_length
    }

    pub fn n_symbols(&self) -> usize {
        self.n_info_symbols + self.n_pilot_symbols
    }

    pub fn packet_len(&self) -> usize {
        self.n_symbols() * self.symbol_len()
    }

    pub fn layout(&self) -> PacketLayout {
        PacketLayout {
            n_info_symbols: self.n_info_symbols,
            n_pilot_symbols: self.n_pilot_symbols,
            n_subcarriers: self.n_subcarriers,
            cp_length: self.cp_length,
            pilots_first: true,
        }
    }
}

/// How a packet's samples are arranged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketLayout {
    pub n_info_symbols: usize,
    pub n_pilot_symbols: usize,
    pub n_subcarriers: usize,
    pub cp_length: usize,
    pub pilots_first: bool,
}

impl PacketLayout {
    pub fn packet_len(&self) -> usize {
        (self.n_info_symbols + self.n_pilot_symbols) * (self.n_subcarriers + self.cp_length)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmPacket {
    samples: ComplexSignal,
    layout: PacketLayout,
}

impl OfdmPacket {
    pub fn new(samples: ComplexSignal, layout: PacketLayout) -> Result<Self> {
        ensure!(
            samples.len() == layout.packet_len(),
            "packet has {} samples, layout needs {}",
            samples.len(),
            layout.packet_len()
        );
        Ok(Self { samples, layout })
    }

    pub fn samples(&self) -> &ComplexSignal {
        &self.samples
    }

    pub fn layout(&self) -> PacketLayout {
        self.layout
    }

    /// Same layout, new samples (e.g. after the channel).
    pub fn with_samples(&self, samples: ComplexSignal) -> Result<Self> {
        Self::new(samples, self.layout)
    }

    /// Average sample magnitude.
    pub fn mean_amplitude(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).sum::<f64>() / self.samples.len() as f64
    }

    /// Interleaved little-endian f64 `(re, im)` pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in self.samples.iter() {
            w.write_all(&s.re.to_le_bytes())?;
            w.write_all(&s.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// `re,im` header then one row per sample, full round-trip precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "re,im")?;
        for s in self.samples.iter() {
            writeln!(w, "{:?},{:?}", s.re, s.im)?;
        }
        Ok(())
    }
}

/// Decodes interleaved little-endian f64 pairs.
pub fn decode_samples_binary(bytes: &[u8]) -> Result<ComplexSignal> {
    if bytes.len() % 16 != 0 {
        return Err(malformed(format!("binary sample stream length {} is not a multiple of 16", bytes.len())));
    }
    let samples = bytes
        .chunks_exact(16)
        .map(|chunk| {
            let re = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    ComplexSignal::new(samples).map_err(|e| malformed(e.to_string()))
}

/// Parses the `re,im` CSV written by [`OfdmPacket::write_csv`].
pub fn decode_samples_csv(text: &str) -> Result<ComplexSignal> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "re,im" => {}
        _ => return Err(malformed("missing `re,im` header")),
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (re, im) = line
            .split_once(',')
            .ok_or_else(|| malformed(format!("line {}: expected two fields", i + 2)))?;
        let parse = |f: &str| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| malformed(format!("line {}: {e}", i + 2)))
        };
        samples.push(Complex64::new(parse(re)?, parse(im)?));
    }
    ComplexSignal::new(samples).map_err(|e| malformed(e.to_string()))
}

fn push_symbol(out: &mut Vec<Complex64>, row: impl Iterator<Item = Complex64>, cp: usize) {
    let mut time: Vec<Complex64> = row.collect();
    inverse_dft_in_place(&mut time);
    let n = time.len();
    out.extend_from_slice(&time[n - cp..]);
    out.extend_from_slice(&time);
}

/// Pilots first, then each information row; every row IDFT'd and CP'd.
pub fn ofdm_modulate(x_freq: &Array2<Complex64>, cfg: &OfdmFrameConfig) -> Result<OfdmPacket> {
    cfg.validate()?;
    ensure!(
        x_freq.dim() == (cfg.n_info_symbols, cfg.n_subcarriers),
        "data shape {:?} does not match frame ({}, {})",
        x_freq.dim(),
        cfg.n_info_symbols,
        cfg.n_subcarriers
    );
    let mut out = Vec::with_capacity(cfg.packet_len());
    for row in cfg.pilot_values.rows() {
        push_symbol(&mut out, row.iter().copied(), cfg.cp_length);
    }
    for row in x_freq.rows() {
        push_symbol(&mut out, row.iter().copied(), cfg.cp_length);
    }
    OfdmPacket::new(ComplexSignal::new(out)?, cfg.layout())
}

/// Strips each CP, applies the DFT, and splits into `(data, pilots)`.
pub fn ofdm_demodulate(rx: &OfdmPacket, cfg: &OfdmFrameConfig) -> Result<(Array2<Complex64>, Array2<Complex64>)> {
    cfg.validate()?;
    ensure!(
        rx.samples.len() == cfg.packet_len(),
        "received {} samples, frame needs {}",
        rx.samples.len(),
        cfg.packet_len()
    );
    let (nc, cp, sym) = (cfg.n_subcarriers, cfg.cp_length, cfg.symbol_len());
    let mut grid = Array2::<Complex64>::zeros((cfg.n_symbols(), nc));
    for (i, mut row) in grid.rows_mut().into_iter().enumerate() {
        let start = i * sym + cp;
        let mut buf = rx.samples.samples()[start..start + nc].to_vec();
        dft_in_place(&mut buf);
        row.iter_mut().zip(buf).for_each(|(d, v)| *d = v);
    }
    let pilots = grid.slice(s![..cfg.n_pilot_symbols, ..]).to_owned();
    let data = grid.slice(s![cfg.n_pilot_symbols.., ..]).to_owned();
    Ok((data, pilots))
}

/// Caps every sample magnitude at `ρ·Ā` (phase preserved), where `Ā` is the
/// mean amplitude of the whole input packet. `ρ = ∞` is the identity.
pub fn clip(pkt: &OfdmPacket, ratio: f64) -> Result<OfdmPacket> {
    ensure!(ratio > 0.0 && !ratio.is_nan(), "clipping ratio must be > 0, got {ratio}");
    clip_to(pkt, ratio * pkt.mean_amplitude())
}

/// Caps sample magnitudes at an absolute `threshold`.
pub fn clip_to(pkt: &OfdmPacket, threshold: f64) -> Result<OfdmPacket> {
    ensure!(threshold >= 0.0 && !threshold.is_nan(), "clipping threshold must be >= 0");
    if !threshold.is_finite() {
        return Ok(pkt.clone());
    }
    let clipped = pkt
        .samples
        .iter()
        .map(|&s| {
            let mag = s.norm();
            if mag > threshold {
                s * (threshold / mag)
            } else {
                s
            }
        })
        .collect();
    pkt.with_samples(ComplexSignal::new(clipped)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Papr {
    pub linear: f64,
    pub db: f64,
}

/// Peak power over mean power of the time-domain samples.
pub fn papr(pkt: &OfdmPacket) -> Result<Papr> {
    papr_of(pkt.samples.samples())
}

pub fn papr_of(samples: &[Complex64]) -> Result<Papr> {
    ensure!(!samples.is_empty(), "PAPR of empty packet");
    let peak = samples.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max);
    ensure!(peak > 0.0, "PAPR of all-zero packet is undefined");
    let mean = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64;
    let linear = peak / mean;
    Ok(Papr {
        linear,
        db: 10.0 * linear.log10(),
    })
}

/// Scales `x` so its mean power per sample equals `p_total`.
pub fn power_normalize(x: &Array2<Complex64>, p_total: f64) -> Result<Array2<Complex64>> {
    ensure!(p_total > 0.0 && p_total.is_finite(), "target power must be positive, got {p_total}");
    ensure!(!x.is_empty(), "cannot normalize an empty matrix");
    let power = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
    ensure!(power > 0.0, "cannot power-normalize an all-zero matrix");
    let scale = (p_total / power).sqrt();
    Ok(x.mapv(|v| v * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, frequency_response, sample_channel, ChannelProfile};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_grid(rng: &mut SeededRng, rows: usize, cols: usize) -> Array2<Complex64> {
        Array2::from_shape_fn((rows, cols), |_| rng.complex_normal(1.0))
    }

    #[test]
    fn impulse_row_becomes_ones() {
        let cfg = OfdmFrameConfig::new(1, 1, 4, 0).unwrap();
        let x = Array2::from_shape_vec((1, 4), vec![c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let pkt = ofdm_modulate(&x, &cfg).unwrap();
        assert_eq!(pkt.samples().len(), 8);
        for s in &pkt.samples().samples()[4..] {
            assert!((s - c(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn layout_and_cp() {
        let mut rng = SeededRng::new(3);
        let cfg = OfdmFrameConfig::new(3, 2, 16, 5).unwrap();
        let x = random_grid(&mut rng, 3, 16);
        let pkt = ofdm_modulate(&x, &cfg).unwrap();
        assert_eq!(pkt.samples().len(), (3 + 2) * (16 + 5));
        let s = pkt.samples().samples();
        for sym in 0..5 {
            let base = sym * 21;
            for i in 0..5 {
                assert_eq!(s[base + i], s[base + 16 + i]);
            }
        }
    }

    #[test]
    fn round_trip_identity_channel() {
        let mut rng = SeededRng::new(4);
        for (ns, np, nc, cp) in [(1, 1, 1, 0), (3, 2, 16, 4), (2, 1, 33, 32), (3, 2, 2048, 16)] {
            let cfg = OfdmFrameConfig::new(ns, np, nc, cp).unwrap();
            let x = random_grid(&mut rng, ns, nc);
            let (z, zp) = ofdm_demodulate(&ofdm_modulate(&x, &cfg).unwrap(), &cfg).unwrap();
            for (a, b) in z.iter().zip(x.iter()) {
                assert!((a - b).norm() < 1e-10);
            }
            for (a, b) in zp.iter().zip(cfg.pilot_values.iter()) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let cfg = OfdmFrameConfig::new(2, 1, 8, 2).unwrap();
        let bad = Array2::<Complex64>::zeros((3, 8));
        assert!(ofdm_modulate(&bad, &cfg).is_err());
        let pkt = ofdm_modulate(&Array2::zeros((2, 8)), &cfg).unwrap();
        let other = OfdmFrameConfig::new(2, 1, 8, 3).unwrap();
        assert!(ofdm_demodulate(&pkt, &other).is_err());
        assert!(OfdmFrameConfig::new(1, 1, 4, 4).is_err());
        assert!(OfdmFrameConfig::new(0, 1, 4, 0).is_err());
    }

    fn diagonalization_residual(cp: usize, seed: u64) -> f64 {
        let mut rng = SeededRng::new(seed);
        let cfg = OfdmFrameConfig::new(3, 2, 64, cp).unwrap();
        let ch = sample_channel(&ChannelProfile::new(8, 4.0).unwrap(), &mut rng).unwrap();
        let h = frequency_response(&ch, 64).unwrap();
        let x = random_grid(&mut rng, 3, 64);
        let pkt = ofdm_modulate(&x, &cfg).unwrap();
        let rx = pkt.with_samples(apply_channel(pkt.samples(), &ch, &mut rng)).unwrap();
        let (z, _) = ofdm_demodulate(&rx, &cfg).unwrap();
        z.indexed_iter()
            .map(|((r, k), zk)| (zk - h[k] * x[(r, k)]).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cyclic_prefix_diagonalizes() {
        assert!(diagonalization_residual(16, 1) < 1e-9);
        assert!(diagonalization_residual(7, 2) < 1e-9);
        assert!(diagonalization_residual(4, 3) > 1e-3);
    }

    #[test]
    fn clip_cases() {
        let mut rng = SeededRng::new(10);
        let cfg = OfdmFrameConfig::new(3, 2, 256, 16).unwrap();
        let pkt = ofdm_modulate(&random_grid(&mut rng, 3, 256), &cfg).unwrap();
        assert_eq!(clip(&pkt, f64::INFINITY).unwrap(), pkt);
        let peak = pkt.samples().iter().map(|s| s.norm()).fold(0.0, f64::max);
        assert_eq!(clip(&pkt, peak / pkt.mean_amplitude()).unwrap(), pkt);

        for rho in [0.5, 1.0, 1.4, 3.0] {
            let out = clip(&pkt, rho).unwrap();
            let bound = rho * pkt.mean_amplitude();
            assert!(out.samples().iter().all(|s| s.norm() <= bound * (1.0 + 1e-15)));
            for (a, b) in out.samples().iter().zip(pkt.samples().iter()) {
                if a.norm() > 0.0 {
                    assert!((a.arg() - b.arg()).abs() < 1e-12);
                }
            }
            // A fixed threshold is exactly idempotent.
            let fixed = clip_to(&out, bound).unwrap();
            for (a, b) in fixed.samples().iter().zip(out.samples().iter()) {
                assert!((a - b).norm() <= 1e-15 * bound);
            }
            // Re-clipping recomputes the (smaller) mean amplitude, so samples
            // at the old cap move by at most ρ·(Ā_in − Ā_out).
            let twice = clip(&out, rho).unwrap();
            let diff = out
                .samples()
                .iter()
                .zip(twice.samples().iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            let slack = rho * (pkt.mean_amplitude() - out.mean_amplitude());
            assert!(diff <= slack + 1e-15, "diff {diff} slack {slack}");
        }
        assert!(clip(&pkt, 0.0).is_err());
        assert!(clip(&pkt, -1.0).is_err());
    }

    #[test]
    fn clipped_papr_bound() {
        let mut rng = SeededRng::new(12);
        let cfg = OfdmFrameConfig::new(3, 2, 128, 8).unwrap();
        for _ in 0..1000 {
            let pkt = ofdm_modulate(&random_grid(&mut rng, 3, 128), &cfg).unwrap();
            let out = clip(&pkt, 1.0).unwrap();
            let ma = pkt.mean_amplitude();
            let bound = ma * ma / out.samples().mean_power();
            assert!(papr(&out).unwrap().linear <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn papr_cases() {
        let layout = PacketLayout {
            n_info_symbols: 1,
            n_pilot_symbols: 0,
            n_subcarriers: 4,
            cp_length: 0,
            pilots_first: true,
        };
        let flat = OfdmPacket::new(
            ComplexSignal::new((0..4).map(|k| Complex64::from_polar(2.0, k as f64)).collect()).unwrap(),
            layout,
        )
        .unwrap();
        let p = papr(&flat).unwrap();
        assert!((p.linear - 1.0).abs() < 1e-12 && p.db.abs() < 1e-10);

        let spike = OfdmPacket::new(ComplexSignal::from_real(&[1.0, 0.0, 0.0, 0.0]).unwrap(), layout).unwrap();
        let p = papr(&spike).unwrap();
        assert!((p.linear - 4.0).abs() < 1e-12);
        assert!((p.db - 6.020599913279624).abs() < 1e-9);

        let zero = OfdmPacket::new(ComplexSignal::zeros(4).unwrap(), layout).unwrap();
        assert!(papr(&zero).is_err());
    }

    #[test]
    fn power_normalization() {
        let mut rng = SeededRng::new(20);
        let x = random_grid(&mut rng, 3, 64);
        let y = power_normalize(&x, 0.5).unwrap();
        let p = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
        assert!((p - 0.5).abs() < 1e-12);
        let again = power_normalize(&y, 0.5).unwrap();
        for (a, b) in again.iter().zip(y.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let scaled = power_normalize(&x.mapv(|v| v * 7.0), 0.5).unwrap();
        for (a, b) in scaled.iter().zip(y.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(power_normalize(&Array2::zeros((2, 2)), 1.0).is_err());
        assert!(power_normalize(&x, 0.0).is_err());

        let cfg = OfdmFrameConfig::new(3, 2, 64, 4).unwrap();
        let a = papr(&ofdm_modulate(&x, &cfg).unwrap()).unwrap();
        let xs = power_normalize(&x, 3.0).unwrap();
        let pilots_scaled = cfg.pilot_values.mapv(|v| v * (xs[(0, 0)] / x[(0, 0)]));
        let cfg_s = OfdmFrameConfig::with_pilots(3, 4, pilots_scaled).unwrap();
        let b = papr(&ofdm_modulate(&xs, &cfg_s).unwrap()).unwrap();
        assert!((a.linear - b.linear).abs() <= 1e-12 * a.linear);
    }

    #[test]
    fn export_round_trips() {
        let mut rng = SeededRng::new(30);
        let cfg = OfdmFrameConfig::new(1, 1, 8, 2).unwrap();
        let pkt = ofdm_modulate(&random_grid(&mut rng, 1, 8), &cfg).unwrap();
        let mut bin = Vec::new();
        pkt.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 20 * 16);
        assert_eq!(&decode_samples_binary(&bin).unwrap(), pkt.samples());
        let mut csv = Vec::new();
        pkt.write_csv(&mut csv).unwrap();
        assert_eq!(&decode_samples_csv(std::str::from_utf8(&csv).unwrap()).unwrap(), pkt.samples());

        assert!(decode_samples_binary(&bin[..15]).is_err());
        assert!(decode_samples_binary(&[]).is_err());
        assert!(decode_samples_csv("x,y\n1,2\n").is_err());
        assert!(decode_samples_csv("re,im\n1;2\n").is_err());
        assert!(decode_samples_csv("re,im\nNaN,2\n").is_err());
    }
}
