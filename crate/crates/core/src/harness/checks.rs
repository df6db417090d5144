//! Self-checks that compare closed forms against simulation or brute force.

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::csv_io::{format_float, CsvRow};
use crate::error::{invalid, Result};
use crate::fusion::{noisy_correlation, posterior_fuse, sample_joint, CsiErrorModel, GaussianPairModel, ObservationModel};
use crate::info::{verify_mi_nonincreasing, DiscreteJoint, StochasticMatrix, MI_CHAIN_TOL};
use crate::kernels::conv_equivalence_max_error;
use crate::signal::SeededRng;

/// Draws a random model in a moderate-SNR regime. With `zero_mean` the
/// source means are 0; `csi_error` toggles nonzero CSI error.
pub fn random_fusion_setup(
    rng: &mut SeededRng,
    zero_mean: bool,
    csi_error: bool,
) -> Result<(GaussianPairModel, ObservationModel)> {
    let (m1, m2) = if zero_mean {
        (0.0, 0.0)
    } else {
        (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0))
    };
    let model = GaussianPairModel::new(
        m1,
        m2,
        rng.uniform(0.25, 4.0),
        rng.uniform(0.25, 4.0),
        rng.uniform(-0.95, 0.95),
    )?;
    let gain = |rng: &mut SeededRng| {
        let g = rng.uniform(0.3, 2.0);
        if rng.uniform(0.0, 1.0) < 0.5 {
            -g
        } else {
            g
        }
    };
    let gains = (gain(rng), gain(rng));
    let errs = if csi_error {
        (rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5))
    } else {
        (0.0, 0.0)
    };
    let noise = (rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0));
    Ok((model, ObservationModel::new(gains, errs, noise)?))
}

/// One Monte Carlo comparison of the closed-form posterior of `X1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorCheckRow {
    pub draw: u64,
    pub error_model: String,
    pub mean1: f64,
    pub mean2: f64,
    pub var1: f64,
    pub var2: f64,
    pub r: f64,
    pub gain1: f64,
    pub gain2: f64,
    pub csi_err1: f64,
    pub csi_err2: f64,
    pub noise1: f64,
    pub noise2: f64,
    pub samples: u64,
    pub theory_var: f64,
    pub empirical_var: f64,
    /// `|v̂ − v| / v`.
    pub var_rel_err: f64,
    /// Largest `|m̂(z) − m(z)| / √v` over the probe points.
    pub mean_err_sd: f64,
    /// Largest `|m̂(z) − m(z)| / |m(z)|` over the probe points.
    pub mean_rel_err: f64,
}

impl PosteriorCheckRow {
    /// Worst of the variance and (standardized) mean errors.
    pub fn worst(&self) -> f64 {
        self.var_rel_err.max(self.mean_err_sd)
    }
}

/// Estimates `E[X1 | Z1, Z2]` and `Var[X1 | Z1, Z2]` from `samples` draws by
/// least-squares regression of `X1` on `(1, Z1, Z2)`. For jointly Gaussian
/// variables the regression line is the conditional mean and the residual
/// variance is the conditional variance. Means are compared at the four
/// points `E[Z] ± 1.5·sd(Z)`.
pub fn posterior_monte_carlo(
    draw: u64,
    model: &GaussianPairModel,
    obs: &ObservationModel,
    error_model: CsiErrorModel,
    samples: u64,
    rng: &mut SeededRng,
) -> Result<PosteriorCheckRow> {
    if samples < 10 {
        return Err(invalid("need at least 10 samples"));
    }
    let ez = [obs.gain1 * model.mean1, obs.gain2 * model.mean2];
    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    let mut yy = 0.0;
    for _ in 0..samples {
        let s = sample_joint(model, obs, error_model, rng);
        let f = Vector3::new(1.0, s.z1 - ez[0], s.z2 - ez[1]);
        let y = s.x1 - model.mean1;
        xtx += f * f.transpose();
        xty += f * y;
        yy += y * y;
    }
    let beta = xtx
        .cholesky()
        .ok_or_else(|| invalid("regression normal matrix is singular"))?
        .solve(&xty);
    let n = samples as f64;
    let empirical_var = (yy - beta.dot(&xty)) / (n - 3.0);

    let (s1, s2) = obs.equivalent_noises(model);
    let sd_z1 = (obs.gain1 * obs.gain1 * model.var1 + s1).sqrt();
    let sd_z2 = (obs.gain2 * obs.gain2 * model.var2 + s2).sqrt();
    let theory_var = posterior_fuse(model, obs, ez[0], ez[1])?.variance;
    let mut mean_err_sd: f64 = 0.0;
    let mut mean_rel_err: f64 = 0.0;
    for (a, b) in [(1.5, 1.5), (1.5, -1.5), (-1.5, 1.5), (-1.5, -1.5)] {
        let (d1, d2) = (a * sd_z1, b * sd_z2);
        let m = posterior_fuse(model, obs, ez[0] + d1, ez[1] + d2)?.mean;
        let m_hat = model.mean1 + beta[0] + beta[1] * d1 + beta[2] * d2;
        mean_err_sd = mean_err_sd.max((m_hat - m).abs() / theory_var.sqrt());
        mean_rel_err = mean_rel_err.max((m_hat - m).abs() / m.abs());
    }
    Ok(PosteriorCheckRow {
        draw,
        error_model: match error_model {
            CsiErrorModel::Equivalent => "equivalent".into(),
            CsiErrorModel::Multiplicative => "multiplicative".into(),
        },
        mean1: model.mean1,
        mean2: model.mean2,
        var1: model.var1,
        var2: model.var2,
        r: model.correlation,
        gain1: obs.gain1,
        gain2: obs.gain2,
        csi_err1: obs.csi_error_var1,
        csi_err2: obs.csi_error_var2,
        noise1: obs.noise_var1,
        noise2: obs.noise_var2,
        samples,
        theory_var,
        empirical_var,
        var_rel_err: (empirical_var - theory_var).abs() / theory_var,
        mean_err_sd,
        mean_rel_err,
    })
}

/// `draws` random setups with Gaussian equivalent noise (a third without
/// CSI error), followed by `multiplicative_draws` zero-mean setups where the
/// CSI error multiplies the source.
pub fn run_posterior_check(
    draws: u64,
    multiplicative_draws: u64,
    samples: u64,
    master: &SeededRng,
) -> Result<Vec<PosteriorCheckRow>> {
    let mut rows = Vec::new();
    for d in 0..draws + multiplicative_draws {
        let mut rng = master.fork(d);
        let row = if d < draws {
            let (model, obs) = random_fusion_setup(&mut rng, false, d % 3 != 0)?;
            posterior_monte_carlo(d, &model, &obs, CsiErrorModel::Equivalent, samples, &mut rng)?
        } else {
            let (model, obs) = random_fusion_setup(&mut rng, true, true)?;
            posterior_monte_carlo(d, &model, &obs, CsiErrorModel::Multiplicative, samples, &mut rng)?
        };
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCheckRow {
    pub draw: u64,
    pub r: f64,
    pub r_prime: f64,
    pub empirical: f64,
    pub rel_err: f64,
    pub samples: u64,
}

/// Sample correlation of received pairs `Z = (Ĥ + E)X + W` for one fixed
/// zero-mean setup per draw, against the predicted `r'`. Setups use
/// `|r| ∈ [0.5, 0.95]` and good links so that `r'` is not near zero.
pub fn run_correlation_check(draws: u64, samples: u64, master: &SeededRng) -> Result<Vec<CorrelationCheckRow>> {
    (0..draws)
        .map(|d| {
            let mut rng = master.fork(d);
            let sign = if rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            let model = GaussianPairModel::zero_mean(
                rng.uniform(0.5, 2.0),
                rng.uniform(0.5, 2.0),
                sign * rng.uniform(0.5, 0.95),
            )?;
            let obs = ObservationModel::new(
                (rng.uniform(0.8, 2.0), rng.uniform(0.8, 2.0)),
                (rng.uniform(0.0, 0.2), rng.uniform(0.0, 0.2)),
                (rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)),
            )?;
            let r_prime = noisy_correlation(&model, &obs)?;
            let (mut s12, mut s11, mut s22) = (0.0, 0.0, 0.0);
            for _ in 0..samples {
                let s = sample_joint(&model, &obs, CsiErrorModel::Multiplicative, &mut rng);
                s12 += s.z1 * s.z2;
                s11 += s.z1 * s.z1;
                s22 += s.z2 * s.z2;
            }
            let empirical = s12 / (s11 * s22).sqrt();
            Ok(CorrelationCheckRow {
                draw: d,
                r: model.correlation,
                r_prime,
                empirical,
                rel_err: (empirical - r_prime).abs() / r_prime.abs(),
                samples,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiCheckRow {
    pub instance: u64,
    pub size1: u64,
    pub size2: u64,
    pub stages: u64,
    pub mi_initial_bits: f64,
    pub mi_final_bits: f64,
    /// Largest stage-to-stage increase (negative when strictly decreasing).
    pub max_increase_bits: f64,
    pub violation: bool,
}

fn random_stochastic(rng: &mut SeededRng, inputs: usize, outputs: usize) -> Result<StochasticMatrix> {
    let mut m = Array2::from_shape_simple_fn((inputs, outputs), || rng.uniform(0.0, 1.0));
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    StochasticMatrix::new(m)
}

/// Random joints of sizes 2..=6 pushed through random chains of 1..=4
/// stochastic stages per view; flags any stage whose MI rises by more than
/// the tolerance.
pub fn run_mi_check(instances: u64, master: &SeededRng) -> Result<Vec<MiCheckRow>> {
    let size = |rng: &mut SeededRng| 2 + (rng.uniform(0.0, 5.0) as usize).min(4);
    (0..instances)
        .map(|i| {
            let mut rng = master.fork(i);
            let (a, b) = (size(&mut rng), size(&mut rng));
            let joint = DiscreteJoint::from_weights(Array2::from_shape_simple_fn((a, b), || rng.uniform(0.0, 1.0)))?;
            let depth = 1 + (rng.uniform(0.0, 4.0) as usize).min(3);
            let (mut s1, mut s2) = (Vec::new(), Vec::new());
            let (mut in1, mut in2) = (a, b);
            for _ in 0..depth {
                let (o1, o2) = (size(&mut rng), size(&mut rng));
                s1.push(random_stochastic(&mut rng, in1, o1)?);
                s2.push(random_stochastic(&mut rng, in2, o2)?);
                (in1, in2) = (o1, o2);
            }
            let chain = verify_mi_nonincreasing(&joint, &s1, &s2)?;
            let max_increase = chain
                .per_stage
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(MiCheckRow {
                instance: i,
                size1: a as u64,
                size2: b as u64,
                stages: depth as u64,
                mi_initial_bits: chain.per_stage[0],
                mi_final_bits: *chain.per_stage.last().expect("non-empty"),
                max_increase_bits: max_increase,
                violation: max_increase > MI_CHAIN_TOL,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvieCheckRow {
    pub kernel_size: u64,
    pub trials: u64,
    pub max_abs_err: f64,
}

/// Convolution-equivalence of the analytic CVIE construction, per kernel
/// size, on random 2-channel 8×9 maps.
pub fn run_cvie_check(kernel_sizes: &[usize], trials: u64, master: &SeededRng) -> Result<Vec<CvieCheckRow>> {
    kernel_sizes
        .iter()
        .map(|&k| {
            let mut rng = master.fork(k as u64);
            Ok(CvieCheckRow {
                kernel_size: k as u64,
                trials,
                max_abs_err: conv_equivalence_max_error(&[k], trials as usize, 2, 8, 9, &mut rng)?,
            })
        })
        .collect()
}

impl CsvRow for PosteriorCheckRow {
    const HEADER: &'static [&'static str] = &[
        "draw",
        "error_model",
        "mean1",
        "mean2",
        "var1",
        "var2",
        "r",
        "gain1",
        "gain2",
        "csi_err1",
        "csi_err2",
        "noise1",
        "noise2",
        "samples",
        "theory_var",
        "empirical_var",
        "var_rel_err",
        "mean_err_sd",
        "mean_rel_err",
    ];

    fn fields(&self) -> Vec<String> {
        let mut out = vec![self.draw.to_string(), self.error_model.clone()];
        out.extend(
            [
                self.mean1,
                self.mean2,
                self.var1,
                self.var2,
                self.r,
                self.gain1,
                self.gain2,
                self.csi_err1,
                self.csi_err2,
                self.noise1,
                self.noise2,
            ]
            .map(format_float),
        );
        out.push(self.samples.to_string());
        out.extend(
            [
                self.theory_var,
                self.empirical_var,
                self.var_rel_err,
                self.mean_err_sd,
                self.mean_rel_err,
            ]
            .map(format_float),
        );
        out
    }
}

impl CsvRow for CorrelationCheckRow {
    const HEADER: &'static [&'static str] = &["draw", "r", "r_prime", "empirical", "rel_err", "samples"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.draw.to_string(),
            format_float(self.r),
            format_float(self.r_prime),
            format_float(self.empirical),
            format_float(self.rel_err),
            self.samples.to_string(),
        ]
    }
}

impl CsvRow for MiCheckRow {
    const HEADER: &'static [&'static str] = &[
        "instance",
        "size1",
        "size2",
        "stages",
        "mi_initial_bits",
        "mi_final_bits",
        "max_increase_bits",
        "violation",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.instance.to_string(),
            self.size1.to_string(),
            self.size2.to_string(),
            self.stages.to_string(),
            format_float(self.mi_initial_bits),
            format_float(self.mi_final_bits),
            format_float(self.max_increase_bits),
            self.violation.to_string(),
        ]
    }
}

impl CsvRow for CvieCheckRow {
    const HEADER: &'static [&'static str] = &["kernel_size", "trials", "max_abs_err"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.kernel_size.to_string(),
            self.trials.to_string(),
            format_float(self.max_abs_err),
        ]
    }
}
