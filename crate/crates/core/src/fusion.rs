//! Closed-form Bayesian fusion of two correlated Gaussian views observed
//! through scalar channels with imperfect CSI.
//!
//! Each view is received as `Z_i = Ĥ_i X_i + W̃_i`, where the equivalent noise
//! `W̃_i ~ N(0, σ_eᵢ² σ_xᵢ² + σ_wᵢ²)` absorbs the CSI error. The posterior of
//! `X_1` given `(Z_1, Z_2)` is Gaussian; its mean and variance are evaluated
//! with per-view equivalent noise variances `s_1, s_2`:
//!
//! ```text
//! D    = H1²H2²σ1²σ2²(1−r²) + H1²σ1² s2 + H2²σ2² s1 + s1 s2
//! mean = μ1 + [H1σ1²(H2²σ2²(1−r²) + s2)(z1 − H1μ1) + H2 r σ1σ2 s1 (z2 − H2μ2)] / D
//! var  = σ1² − [H1²σ1⁴(H2²σ2²(1−r²) + s2) + H2² r² σ1²σ2² s1] / D
//! ```
//!
//! With `s1 = s2` this is the single-noise form.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Result};
use crate::signal::SeededRng;

/// Jointly Gaussian `(X_1, X_2)` with correlation coefficient `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPairModel {
    pub mean1: f64,
    pub mean2: f64,
    pub var1: f64,
    pub var2: f64,
    pub correlation: f64,
}

impl GaussianPairModel {
    pub fn new(mean1: f64, mean2: f64, var1: f64, var2: f64, correlation: f64) -> Result<Self> {
        let m = Self {
            mean1,
            mean2,
            var1,
            var2,
            correlation,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn zero_mean(var1: f64, var2: f64, correlation: f64) -> Result<Self> {
        Self::new(0.0, 0.0, var1, var2, correlation)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.mean1.is_finite() && self.mean2.is_finite(), "means must be finite");
        ensure!(
            self.var1 > 0.0 && self.var2 > 0.0 && self.var1.is_finite() && self.var2.is_finite(),
            "view variances must be positive and finite"
        );
        ensure!(
            self.correlation.abs() <= 1.0,
            "correlation must lie in [-1, 1], got {}",
            self.correlation
        );
        Ok(())
    }

    /// Covariance of `(X_1, X_2)`.
    pub fn covariance(&self) -> f64 {
        self.correlation * (self.var1 * self.var2).sqrt()
    }

    /// The same pair with the views swapped, for decoding view 2.
    pub fn swapped(&self) -> Self {
        Self {
            mean1: self.mean2,
            mean2: self.mean1,
            var1: self.var2,
            var2: self.var1,
            correlation: self.correlation,
        }
    }
}

/// Scalar observation channels of both views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    /// Estimated gains `Ĥ_1, Ĥ_2`.
    pub gain1: f64,
    pub gain2: f64,
    pub csi_error_var1: f64,
    pub csi_error_var2: f64,
    pub noise_var1: f64,
    pub noise_var2: f64,
}

impl ObservationModel {
    pub fn new(gains: (f64, f64), csi_error_vars: (f64, f64), noise_vars: (f64, f64)) -> Result<Self> {
        let o = Self {
            gain1: gains.0,
            gain2: gains.1,
            csi_error_var1: csi_error_vars.0,
            csi_error_var2: csi_error_vars.1,
            noise_var1: noise_vars.0,
            noise_var2: noise_vars.1,
        };
        o.validate()?;
        Ok(o)
    }

    /// Perfect CSI on both links.
    pub fn perfect(gain1: f64, gain2: f64, noise_var1: f64, noise_var2: f64) -> Result<Self> {
        Self::new((gain1, gain2), (0.0, 0.0), (noise_var1, noise_var2))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.gain1.is_finite() && self.gain2.is_finite(), "gains must be finite");
        for v in [self.csi_error_var1, self.csi_error_var2, self.noise_var1, self.noise_var2] {
            ensure!(v >= 0.0 && v.is_finite(), "variances must be finite and >= 0, got {v}");
        }
        Ok(())
    }

    /// `(σ_w̃1², σ_w̃2²)` under `model`.
    pub fn equivalent_noises(&self, model: &GaussianPairModel) -> (f64, f64) {
        (
            self.csi_error_var1 * model.var1 + self.noise_var1,
            self.csi_error_var2 * model.var2 + self.noise_var2,
        )
    }

    pub fn swapped(&self) -> Self {
        Self {
            gain1: self.gain2,
            gain2: self.gain1,
            csi_error_var1: self.csi_error_var2,
            csi_error_var2: self.csi_error_var1,
            noise_var1: self.noise_var2,
            noise_var2: self.noise_var1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorEstimate {
    pub mean: f64,
    pub variance: f64,
}

/// `σ_w̃² = σ_e² σ_x² + σ_w²`.
pub fn equivalent_noise(csi_error_var: f64, signal_var: f64, noise_var: f64) -> Result<f64> {
    for v in [csi_error_var, signal_var, noise_var] {
        ensure!(v >= 0.0 && v.is_finite(), "equivalent noise inputs must be finite and >= 0, got {v}");
    }
    Ok(csi_error_var * signal_var + noise_var)
}

/// Posterior of `X_1` given `(z1, z2)`.
///
/// Falls back to the pseudo-inverse of the observation covariance when the
/// closed-form denominator vanishes (e.g. a noiseless view with zero gain).
pub fn posterior_fuse(model: &GaussianPairModel, obs: &ObservationModel, z1: f64, z2: f64) -> Result<PosteriorEstimate> {
    model.validate()?;
    obs.validate()?;
    ensure!(z1.is_finite() && z2.is_finite(), "observations must be finite");
    let (s1, s2) = obs.equivalent_noises(model);
    let (h1, h2) = (obs.gain1, obs.gain2);
    let (v1, v2, r) = (model.var1, model.var2, model.correlation);
    let sd12 = (v1 * v2).sqrt();
    let decor = 1.0 - r * r;

    let denom = h1 * h1 * h2 * h2 * v1 * v2 * decor + h1 * h1 * v1 * s2 + h2 * h2 * v2 * s1 + s1 * s2;
    let (d1, d2) = (z1 - h1 * model.mean1, z2 - h2 * model.mean2);
    if denom > 0.0 && denom.is_finite() {
        let g1 = h1 * v1 * (h2 * h2 * v2 * decor + s2);
        let g2 = h2 * r * sd12 * s1;
        let reduction = h1 * h1 * v1 * v1 * (h2 * h2 * v2 * decor + s2) + h2 * h2 * r * r * v1 * v2 * s1;
        return Ok(PosteriorEstimate {
            mean: model.mean1 + (g1 * d1 + g2 * d2) / denom,
            variance: (v1 - reduction / denom).max(0.0),
        });
    }
    if !denom.is_finite() {
        return Err(invalid("posterior denominator overflowed"));
    }

    // Singular observation covariance: condition through its pseudo-inverse.
    let c = [h1 * v1, h2 * r * sd12];
    let cov = [[h1 * h1 * v1 + s1, h1 * h2 * r * sd12], [h1 * h2 * r * sd12, h2 * h2 * v2 + s2]];
    let pinv = pseudo_inverse_2x2(cov);
    let gain = [
        c[0] * pinv[0][0] + c[1] * pinv[1][0],
        c[0] * pinv[0][1] + c[1] * pinv[1][1],
    ];
    Ok(PosteriorEstimate {
        mean: model.mean1 + gain[0] * d1 + gain[1] * d2,
        variance: (v1 - gain[0] * c[0] - gain[1] * c[1]).max(0.0),
    })
}

fn pseudo_inverse_2x2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let tr = a + d;
    let disc = ((a - d) * (a - d) / 4.0 + b * b).sqrt();
    let eig = [tr / 2.0 + disc, tr / 2.0 - disc];
    let tol = 1e-12 * eig[0].abs().max(1e-300);
    let mut out = [[0.0; 2]; 2];
    for &lam in &eig {
        if lam.abs() <= tol {
            continue;
        }
        // eigenvector of the symmetric matrix for `lam`
        let (x, y) = if b.abs() > 0.0 {
            (b, lam - a)
        } else if (lam - a).abs() <= (lam - d).abs() {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let n = (x * x + y * y).sqrt();
        let (x, y) = (x / n, y / n);
        out[0][0] += x * x / lam;
        out[0][1] += x * y / lam;
        out[1][0] += x * y / lam;
        out[1][1] += y * y / lam;
    }
    out
}

/// Correlation of the received pair:
/// `r' = r σ1 σ2 / sqrt((σ1² + s1/Ĥ1²)(σ2² + s2/Ĥ2²))`, and 0 when either
/// gain is zero (that view carries no signal).
pub fn noisy_correlation(model: &GaussianPairModel, obs: &ObservationModel) -> Result<f64> {
    model.validate()?;
    obs.validate()?;
    if obs.gain1 == 0.0 || obs.gain2 == 0.0 {
        return Ok(0.0);
    }
    let (s1, s2) = obs.equivalent_noises(model);
    let a = model.var1 + s1 / (obs.gain1 * obs.gain1);
    let b = model.var2 + s2 / (obs.gain2 * obs.gain2);
    Ok(model.correlation * (model.var1 * model.var2).sqrt() / (a * b).sqrt())
}

/// Mutual information of a bivariate Gaussian with correlation `r`, in nats.
pub fn gaussian_mi(r: f64) -> Result<f64> {
    ensure!(r.abs() < 1.0, "|r| must be < 1 for finite mutual information, got {r}");
    Ok(-0.5 * (1.0 - r * r).ln())
}

/// Scalar Wiener/MAP estimate `(Hσ²z + s μ) / (H²σ² + s)`.
pub fn map_estimate_single(mean: f64, var: f64, gain: f64, eq_noise: f64, z: f64) -> Result<f64> {
    ensure!(var > 0.0, "prior variance must be positive");
    ensure!(eq_noise >= 0.0, "noise variance must be >= 0");
    let denom = gain * gain * var + eq_noise;
    if denom == 0.0 {
        return Ok(mean);
    }
    Ok((gain * var * z + eq_noise * mean) / denom)
}

/// Single-view MMSE variance `σ²s / (H²σ² + s)`.
pub fn single_view_variance(var: f64, gain: f64, eq_noise: f64) -> f64 {
    let denom = gain * gain * var + eq_noise;
    if denom == 0.0 {
        var
    } else {
        var * eq_noise / denom
    }
}

/// Gaussian information quantities around view 1, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationTerms {
    /// `I(X1; Z1)`
    pub x1_z1: f64,
    /// `I(X1; Z1 | Z2)`
    pub x1_z1_given_z2: f64,
    /// `I(Z1; Z2)`
    pub z1_z2: f64,
    /// `I(X1; X2)`
    pub x1_x2: f64,
}

/// Log-determinant based evaluation of [`InformationTerms`]; requires
/// non-degenerate observations (positive equivalent noise on both views).
pub fn information_terms(model: &GaussianPairModel, obs: &ObservationModel) -> Result<InformationTerms> {
    model.validate()?;
    obs.validate()?;
    ensure!(model.correlation.abs() < 1.0, "need |r| < 1");
    let (s1, s2) = obs.equivalent_noises(model);
    ensure!(s1 > 0.0 && s2 > 0.0, "information terms need positive equivalent noise");
    let (h1, h2) = (obs.gain1, obs.gain2);
    let cov_x1x2 = model.covariance();
    let vx = model.var1;
    let vz1 = h1 * h1 * model.var1 + s1;
    let vz2 = h2 * h2 * model.var2 + s2;
    let c_x1z1 = h1 * model.var1;
    let c_x1z2 = h2 * cov_x1x2;
    let c_z1z2 = h1 * h2 * cov_x1x2;

    let det2 = |a: f64, b: f64, c: f64| a * c - b * b;
    let det3 = det2(vx, c_x1z1, vz1) * vz2 - vx * c_z1z2 * c_z1z2 - c_x1z2 * c_x1z2 * vz1
        + 2.0 * c_x1z1 * c_z1z2 * c_x1z2;

    Ok(InformationTerms {
        x1_z1: 0.5 * (vx * vz1 / det2(vx, c_x1z1, vz1)).ln(),
        x1_z1_given_z2: 0.5 * (det2(vx, c_x1z2, vz2) * det2(vz1, c_z1z2, vz2) / (vz2 * det3)).ln(),
        z1_z2: 0.5 * (vz1 * vz2 / det2(vz1, c_z1z2, vz2)).ln(),
        x1_x2: gaussian_mi(model.correlation)?,
    })
}

/// How the CSI error enters simulated observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiErrorModel {
    /// `Z = Ĥ X + W̃` with Gaussian `W̃` of the equivalent variance.
    Equivalent,
    /// `Z = (Ĥ + E) X + W` with `E ~ N(0, σ_e²)`, `W ~ N(0, σ_w²)`.
    Multiplicative,
}

/// One simulated draw of sources and observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSample {
    pub x1: f64,
    pub x2: f64,
    pub z1: f64,
    pub z2: f64,
}

/// Draws `(X1, X2, Z1, Z2)` from the model.
pub fn sample_joint(
    model: &GaussianPairModel,
    obs: &ObservationModel,
    error_model: CsiErrorModel,
    rng: &mut SeededRng,
) -> JointSample {
    let (sd1, sd2) = (model.var1.sqrt(), model.var2.sqrt());
    let r = model.correlation;
    let u = rng.standard_normal();
    let v = rng.standard_normal();
    let x1 = model.mean1 + sd1 * u;
    let x2 = model.mean2 + sd2 * (r * u + (1.0 - r * r).max(0.0).sqrt() * v);
    let (z1, z2) = match error_model {
        CsiErrorModel::Equivalent => {
            let (s1, s2) = obs.equivalent_noises(model);
            (
                obs.gain1 * x1 + s1.sqrt() * rng.standard_normal(),
                obs.gain2 * x2 + s2.sqrt() * rng.standard_normal(),
            )
        }
        CsiErrorModel::Multiplicative => {
            let e1 = obs.csi_error_var1.sqrt() * rng.standard_normal();
            let e2 = obs.csi_error_var2.sqrt() * rng.standard_normal();
            (
                (obs.gain1 + e1) * x1 + obs.noise_var1.sqrt() * rng.standard_normal(),
                (obs.gain2 + e2) * x2 + obs.noise_var2.sqrt() * rng.standard_normal(),
            )
        }
    };
    JointSample { x1, x2, z1, z2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn equivalent_noise_cases() {
        assert_eq!(equivalent_noise(0.0, 3.0, 0.5).unwrap(), 0.5);
        assert!((equivalent_noise(0.1, 1.0, 0.5).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(equivalent_noise(0.4, 0.0, 0.5).unwrap(), 0.5);
        assert!(equivalent_noise(-0.1, 1.0, 0.5).is_err());
        assert!(equivalent_noise(0.1, -1.0, 0.5).is_err());
        assert!(equivalent_noise(0.1, 1.0, -0.5).is_err());
    }

    #[test]
    fn uncorrelated_reduces_to_classical_mmse() {
        let model = GaussianPairModel::new(0.3, -1.0, 2.0, 0.7, 0.0).unwrap();
        let obs = ObservationModel::new((1.3, 0.0), (0.2, 0.1), (0.4, 0.3)).unwrap();
        let s = equivalent_noise(0.2, 2.0, 0.4).unwrap();
        let post = posterior_fuse(&model, &obs, 0.9, 5.0).unwrap();
        let expected = 2.0 * s / (1.3 * 1.3 * 2.0 + s);
        assert!(rel(post.variance, expected) < 1e-12);
        let map = map_estimate_single(0.3, 2.0, 1.3, s, 0.9).unwrap();
        assert!((post.mean - map).abs() < 1e-12);
    }

    #[test]
    fn huge_csi_error_falls_back_to_prior() {
        let model = GaussianPairModel::new(0.5, -0.2, 1.5, 0.8, 0.9).unwrap();
        // σ_e = 10^6
        let obs = ObservationModel::new((1.1, 0.7), (1e12, 1e12), (0.3, 0.2)).unwrap();
        let post = posterior_fuse(&model, &obs, 3.0, -2.0).unwrap();
        assert!(rel(post.mean, 0.5) < 1e-6, "{}", post.mean);
        assert!(rel(post.variance, 1.5) < 1e-6);
    }

    #[test]
    fn cross_view_term_pulls_mean_up() {
        let model = GaussianPairModel::zero_mean(1.0, 1.0, 0.6).unwrap();
        let obs = ObservationModel::perfect(1.0, 1.0, 0.5, 0.5).unwrap();
        let fused = posterior_fuse(&model, &obs, 0.4, 2.0).unwrap();
        let single = map_estimate_single(0.0, 1.0, 1.0, 0.5, 0.4).unwrap();
        assert!(fused.mean > single);
    }

    #[test]
    fn noiseless_zero_gain_view_uses_pseudo_inverse() {
        let model = GaussianPairModel::zero_mean(1.0, 1.0, 0.5).unwrap();
        let obs = ObservationModel::perfect(1.0, 0.0, 0.25, 0.0).unwrap();
        let post = posterior_fuse(&model, &obs, 0.8, 0.0).unwrap();
        assert!(rel(post.variance, single_view_variance(1.0, 1.0, 0.25)) < 1e-12);
        assert!((post.mean - map_estimate_single(0.0, 1.0, 1.0, 0.25, 0.8).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn map_cases() {
        assert_eq!(map_estimate_single(0.2, 1.0, 1.0, 0.0, 0.7).unwrap(), 0.7);
        assert_eq!(map_estimate_single(0.2, 1.0, 0.0, 0.5, 0.7).unwrap(), 0.2);
        assert!(map_estimate_single(0.0, 0.0, 1.0, 0.5, 0.7).is_err());
    }

    #[test]
    fn map_matches_fusion_without_second_view() {
        let mut rng = SeededRng::new(99);
        for _ in 0..100 {
            let mu = rng.uniform(-2.0, 2.0);
            let var = rng.uniform(0.1, 3.0);
            let h = rng.uniform(-2.0, 2.0);
            let e = rng.uniform(0.0, 0.5);
            let w = rng.uniform(0.01, 2.0);
            let z = rng.uniform(-3.0, 3.0);
            let model = GaussianPairModel::new(mu, 0.0, var, 1.0, 0.0).unwrap();
            let obs = ObservationModel::new((h, 0.0), (e, 0.0), (w, 1.0)).unwrap();
            let fused = posterior_fuse(&model, &obs, z, 0.0).unwrap();
            let s = equivalent_noise(e, var, w).unwrap();
            let single = map_estimate_single(mu, var, h, s, z).unwrap();
            assert!((fused.mean - single).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_correlation_cases() {
        let model = GaussianPairModel::zero_mean(1.0, 1.0, 0.8).unwrap();
        let clean = ObservationModel::perfect(0.7, 1.9, 0.0, 0.0).unwrap();
        assert!((noisy_correlation(&model, &clean).unwrap() - 0.8).abs() < 1e-15);
        let noisy = ObservationModel::perfect(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((noisy_correlation(&model, &noisy).unwrap() - 0.4).abs() < 1e-15);
        let indep = GaussianPairModel::zero_mean(1.0, 1.0, 0.0).unwrap();
        assert_eq!(noisy_correlation(&indep, &noisy).unwrap(), 0.0);
        let dead = ObservationModel::perfect(0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(noisy_correlation(&model, &dead).unwrap(), 0.0);
    }

    #[test]
    fn noisy_correlation_monte_carlo() {
        let model = GaussianPairModel::zero_mean(1.0, 1.0, 0.8).unwrap();
        let obs = ObservationModel::perfect(1.0, 1.0, 1.0, 1.0).unwrap();
        let mut rng = SeededRng::new(5);
        let n = 1_000_000;
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let s = sample_joint(&model, &obs, CsiErrorModel::Equivalent, &mut rng);
            sa += s.z1;
            sb += s.z2;
            saa += s.z1 * s.z1;
            sbb += s.z2 * s.z2;
            sab += s.z1 * s.z2;
        }
        let nf = n as f64;
        let cov = sab / nf - sa * sb / nf / nf;
        let corr = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        assert!((0.396..=0.404).contains(&corr), "{corr}");
    }

    #[test]
    fn gaussian_mi_cases() {
        assert_eq!(gaussian_mi(0.0).unwrap(), 0.0);
        assert!((gaussian_mi(0.4).unwrap() - 0.087176693572388).abs() < 1e-12);
        assert!(gaussian_mi(1.0).is_err());
        assert!(gaussian_mi(-1.2).is_err());
    }

    /// 2-D midpoint quadrature of ∫∫ p(x,y) ln[p(x,y)/(p(x)p(y))].
    #[test]
    fn gaussian_mi_matches_quadrature() {
        let r: f64 = 0.7;
        let det = 1.0 - r * r;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
        let (lim, steps) = (9.0, 1200);
        let h = 2.0 * lim / steps as f64;
        let mut acc = 0.0;
        for i in 0..steps {
            let x = -lim + (i as f64 + 0.5) * h;
            for j in 0..steps {
                let y = -lim + (j as f64 + 0.5) * h;
                let q = (x * x - 2.0 * r * x * y + y * y) / det;
                let p = norm * (-0.5 * q).exp();
                if p > 0.0 {
                    let px = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                    let py = (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt();
                    acc += p * (p / (px * py)).ln() * h * h;
                }
            }
        }
        assert!((acc - gaussian_mi(r).unwrap()).abs() < 1e-4, "quadrature {acc}");
    }

    #[test]
    fn conditional_information_ordering() {
        let mut rng = SeededRng::new(17);
        for _ in 0..2000 {
            let model = GaussianPairModel::new(
                rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0),
                rng.uniform(0.1, 3.0),
                rng.uniform(0.1, 3.0),
                rng.uniform(-0.99, 0.99),
            )
            .unwrap();
            let obs = ObservationModel::new(
                (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)),
                (rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5)),
                (rng.uniform(0.01, 2.0), rng.uniform(0.01, 2.0)),
            )
            .unwrap();
            let t = information_terms(&model, &obs).unwrap();
            assert!(t.x1_z1_given_z2 <= t.x1_z1 + 1e-12, "{t:?}");
            assert!(t.z1_z2 <= t.x1_x2 + 1e-12);
            let rp = noisy_correlation(&model, &obs).unwrap();
            assert!((gaussian_mi(rp).unwrap() - t.z1_z2).abs() < 1e-9);
        }
    }

    fn arb_model() -> impl Strategy<Value = GaussianPairModel> {
        (-2.0..2.0f64, -2.0..2.0f64, 0.05..4.0f64, 0.05..4.0f64, -1.0..=1.0f64)
            .prop_map(|(m1, m2, v1, v2, r)| GaussianPairModel::new(m1, m2, v1, v2, r).unwrap())
    }

    fn arb_obs() -> impl Strategy<Value = ObservationModel> {
        (-3.0..3.0f64, -3.0..3.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.001..3.0f64, 0.001..3.0f64)
            .prop_map(|(h1, h2, e1, e2, w1, w2)| ObservationModel::new((h1, h2), (e1, e2), (w1, w2)).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn correlation_shrinks(model in arb_model(), obs in arb_obs()) {
            let rp = noisy_correlation(&model, &obs).unwrap();
            prop_assert!(rp.abs() <= model.correlation.abs() + 1e-15);
            if model.correlation.abs() < 1.0 {
                prop_assert!(gaussian_mi(rp).unwrap() <= gaussian_mi(model.correlation).unwrap() + 1e-15);
            }
        }

        #[test]
        fn fusion_never_hurts(model in arb_model(), obs in arb_obs()) {
            let post = posterior_fuse(&model, &obs, 0.0, 0.0).unwrap();
            let (s1, _) = obs.equivalent_noises(&model);
            let single = single_view_variance(model.var1, obs.gain1, s1);
            prop_assert!(post.variance <= single * (1.0 + 1e-12) + 1e-15);
            prop_assert!(post.variance <= model.var1 * (1.0 + 1e-12));
            prop_assert!(post.variance >= 0.0);
        }

        #[test]
        fn variance_grows_with_noise(model in arb_model(), obs in arb_obs(), bump in 0.0..2.0f64) {
            let base = posterior_fuse(&model, &obs, 0.0, 0.0).unwrap().variance;
            let mut worse = obs;
            worse.noise_var1 += bump;
            worse.noise_var2 += bump;
            let after = posterior_fuse(&model, &worse, 0.0, 0.0).unwrap().variance;
            prop_assert!(after >= base - 1e-12 * model.var1);
        }

        #[test]
        fn mean_is_affine(model in arb_model(), obs in arb_obs(),
                          z1 in -3.0..3.0f64, z2 in -3.0..3.0f64, a in -2.0..2.0f64, b in -2.0..2.0f64) {
            let f = |u: f64, v: f64| posterior_fuse(&model, &obs, u, v).unwrap().mean;
            let base = f(0.0, 0.0);
            let g1 = f(1.0, 0.0) - base;
            let g2 = f(0.0, 1.0) - base;
            let lhs = f(a * z1 + b, z2);
            let rhs = base + g1 * (a * z1 + b) + g2 * z2;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
