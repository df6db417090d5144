//! Discrete information measures, exact data-processing checks for staged
//! encoders, squared cosine similarity, and linear/kernel CCA cosines.
//!
//! Everything in this module is in bits; [`crate::fusion::gaussian_mi`]
//! works in nats. Use [`nats_to_bits`] / [`bits_to_nats`] to convert.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{ensure, invalid, Result};

const NORMALIZATION_TOL: f64 = 1e-12;

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * std::f64::consts::LN_2
}

fn check_pmf(values: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    let mut count = 0usize;
    for p in values {
        ensure!(p.is_finite() && p >= 0.0, "probabilities must be finite and >= 0, got {p}");
        total += p;
        count += 1;
    }
    ensure!(count > 0, "empty distribution");
    ensure!(
        (total - 1.0).abs() <= NORMALIZATION_TOL,
        "probabilities sum to {total}, expected 1"
    );
    Ok(())
}

/// Joint pmf over `A × B` (rows index `A`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    pmf: Array2<f64>,
}

impl DiscreteJoint {
    pub fn new(pmf: Array2<f64>) -> Result<Self> {
        check_pmf(pmf.iter().copied())?;
        Ok(Self { pmf })
    }

    /// Normalizes nonnegative weights into a joint pmf.
    pub fn from_weights(weights: Array2<f64>) -> Result<Self> {
        ensure!(weights.iter().all(|w| w.is_finite() && *w >= 0.0), "weights must be finite and >= 0");
        let total: f64 = weights.sum();
        ensure!(total > 0.0, "weights sum to zero");
        Self::new(weights / total)
    }

    pub fn pmf(&self) -> &Array2<f64> {
        &self.pmf
    }

    pub fn marginal_a(&self) -> Vec<f64> {
        self.pmf.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn marginal_b(&self) -> Vec<f64> {
        self.pmf.columns().into_iter().map(|c| c.sum()).collect()
    }

    /// Pushes each coordinate through its own channel: `T_aᵀ P T_b`.
    pub fn push_forward(&self, stage_a: &StochasticMatrix, stage_b: &StochasticMatrix) -> Result<Self> {
        ensure!(
            stage_a.rows.nrows() == self.pmf.nrows() && stage_b.rows.nrows() == self.pmf.ncols(),
            "stage input sizes ({}, {}) do not match joint {:?}",
            stage_a.rows.nrows(),
            stage_b.rows.nrows(),
            self.pmf.dim()
        );
        let pmf = stage_a.rows.t().dot(&self.pmf).dot(&stage_b.rows);
        // Renormalize away accumulated rounding.
        let total = pmf.sum();
        Ok(Self { pmf: pmf / total })
    }
}

/// Row-stochastic matrix: row `i` is the conditional pmf of the output given
/// input symbol `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: Array2<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        ensure!(rows.nrows() >= 1 && rows.ncols() >= 1, "stochastic matrix must be non-empty");
        for (i, row) in rows.rows().into_iter().enumerate() {
            check_pmf(row.iter().copied()).map_err(|e| invalid(format!("row {i}: {e}")))?;
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(Array2::eye(n))
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn input_size(&self) -> usize {
        self.rows.nrows()
    }

    pub fn output_size(&self) -> usize {
        self.rows.ncols()
    }
}

fn plogp_sum(values: impl Iterator<Item = f64>) -> f64 {
    -values.filter(|&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

/// Shannon entropy in bits, with `0·log 0 = 0`.
pub fn entropy(pmf: &[f64]) -> Result<f64> {
    check_pmf(pmf.iter().copied())?;
    Ok(plogp_sum(pmf.iter().copied()))
}

/// `Σ p(a,b) log2 [p(a,b) / (p(a)p(b))]`.
pub fn mutual_information(joint: &DiscreteJoint) -> f64 {
    let pa = joint.marginal_a();
    let pb = joint.marginal_b();
    let mi: f64 = joint
        .pmf
        .indexed_iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|((i, j), &p)| p * (p / (pa[i] * pb[j])).log2())
        .sum();
    mi.max(0.0)
}

/// MI at every stage of two independently applied encoder chains.
#[derive(Debug, Clone, PartialEq)]
pub struct MiChain {
    /// `I(s1^a; s2^a)` for `a = 0..=depth`; entry 0 is the raw joint.
    pub per_stage: Vec<f64>,
    /// True iff each entry is at most its predecessor plus `1e-9`.
    pub non_increasing: bool,
}

pub const MI_CHAIN_TOL: f64 = 1e-9;

/// Applies `stages1[a]` to the first coordinate and `stages2[a]` to the
/// second, stage by stage, tracking the mutual information exactly.
pub fn verify_mi_nonincreasing(
    joint: &DiscreteJoint,
    stages1: &[StochasticMatrix],
    stages2: &[StochasticMatrix],
) -> Result<MiChain> {
    ensure!(
        stages1.len() == stages2.len(),
        "both views need the same number of stages ({} vs {})",
        stages1.len(),
        stages2.len()
    );
    let mut current = joint.clone();
    let mut per_stage = vec![mutual_information(&current)];
    for (a, b) in stages1.iter().zip(stages2) {
        current = current.push_forward(a, b)?;
        per_stage.push(mutual_information(&current));
    }
    let non_increasing = per_stage.windows(2).all(|w| w[1] <= w[0] + MI_CHAIN_TOL);
    Ok(MiChain {
        per_stage,
        non_increasing,
    })
}

/// Squared cosine similarity `⟨x1,x2⟩² / (‖x1‖²‖x2‖²)` of real vectors.
pub fn scs(x1: &[f64], x2: &[f64]) -> Result<f64> {
    ensure!(x1.len() == x2.len(), "length mismatch ({} vs {})", x1.len(), x2.len());
    let n1: f64 = x1.iter().map(|v| v * v).sum();
    let n2: f64 = x2.iter().map(|v| v * v).sum();
    ensure!(n1 > 0.0 && n2 > 0.0, "squared cosine similarity of a zero vector");
    let dot: f64 = x1.iter().zip(x2).map(|(a, b)| a * b).sum();
    Ok((dot * dot / (n1 * n2)).min(1.0))
}

/// Complex SCS `|⟨x1,x2⟩|² / (‖x1‖²‖x2‖²)` with the conjugate inner product.
pub fn scs_complex(x1: &[Complex64], x2: &[Complex64]) -> Result<f64> {
    ensure!(x1.len() == x2.len(), "length mismatch ({} vs {})", x1.len(), x2.len());
    let n1: f64 = x1.iter().map(|v| v.norm_sqr()).sum();
    let n2: f64 = x2.iter().map(|v| v.norm_sqr()).sum();
    ensure!(n1 > 0.0 && n2 > 0.0, "squared cosine similarity of a zero vector");
    let dot: Complex64 = x1.iter().zip(x2).map(|(a, b)| a * b.conj()).sum();
    Ok((dot.norm_sqr() / (n1 * n2)).min(1.0))
}

/// Result of the linear CCA cosine maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaCosine {
    /// Largest achievable cosine between `S1 a` and `S2 b`.
    pub cosine: f64,
    /// Projection applied to the first view's features.
    pub transform1: DVector<f64>,
    /// Projection applied to the second view's features.
    pub transform2: DVector<f64>,
    /// Set when a Gram matrix was rank deficient and directions were dropped.
    pub reduced_rank: bool,
}

const RANK_TOL: f64 = 1e-10;

/// `G^{-1/2}` on the numerically nonzero eigenspace; flags dropped directions.
fn inverse_sqrt(gram: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut reduced = false;
    let scaled = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| {
            if l > RANK_TOL * top {
                1.0 / l.sqrt()
            } else {
                reduced = true;
                0.0
            }
        }),
    );
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&scaled) * v.transpose(), reduced)
}

/// Maximal cosine similarity between linear projections of two data
/// matrices (rows are samples), via the SVD of `G11^{-1/2} G12 G22^{-1/2}`
/// with uncentered Gram matrices `Gij = Siᵀ Sj`.
pub fn cca_cosine_linear(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<CcaCosine> {
    ensure!(s1.nrows() == s2.nrows(), "sample counts differ ({} vs {})", s1.nrows(), s2.nrows());
    ensure!(s1.nrows() >= 1 && s1.ncols() >= 1 && s2.ncols() >= 1, "empty data matrix");
    ensure!(
        s1.iter().chain(s2.iter()).all(|v| v.is_finite()),
        "data must be finite"
    );
    ensure!(
        s1.iter().any(|v| *v != 0.0) && s2.iter().any(|v| *v != 0.0),
        "data matrices must be nonzero"
    );
    let (w1, r1) = inverse_sqrt(s1.transpose() * s1);
    let (w2, r2) = inverse_sqrt(s2.transpose() * s2);
    let m = &w1 * (s1.transpose() * s2) * &w2;
    let svd = m.svd(true, true);
    let (idx, &sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| invalid("empty singular value set"))?;
    let u = svd.u.as_ref().expect("u requested").column(idx).into_owned();
    let vt = svd.v_t.as_ref().expect("v_t requested").row(idx).transpose();
    Ok(CcaCosine {
        cosine: sigma.min(1.0),
        transform1: &w1 * u,
        transform2: &w2 * vt,
        reduced_rank: r1 || r2,
    })
}

/// Positive-definite kernels for the kernel-space cosine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    /// `(⟨a,b⟩ + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// `exp(-‖a-b‖² / (2h²))`
    Gaussian { bandwidth: f64 },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Linear => Ok(()),
            Kernel::Polynomial { degree, offset } => {
                ensure!(degree >= 1, "polynomial degree must be >= 1");
                ensure!(offset >= 0.0 && offset.is_finite(), "polynomial offset must be finite and >= 0");
                Ok(())
            }
            Kernel::Gaussian { bandwidth } => {
                ensure!(bandwidth > 0.0 && bandwidth.is_finite(), "bandwidth must be positive and finite");
                Ok(())
            }
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dot = || a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        match *self {
            Kernel::Linear => dot(),
            Kernel::Polynomial { degree, offset } => (dot() + offset).powi(degree as i32),
            Kernel::Gaussian { bandwidth } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }
}

/// `K(s1,s2) / sqrt(K(s1,s1) K(s2,s2))`.
pub fn kernel_cosine(s1: &[f64], s2: &[f64], kernel: Kernel) -> Result<f64> {
    kernel.validate()?;
    ensure!(s1.len() == s2.len() && !s1.is_empty(), "inputs must be non-empty and equal length");
    let k11 = kernel.eval(s1, s1);
    let k22 = kernel.eval(s2, s2);
    ensure!(k11 > 0.0 && k22 > 0.0, "kernel self-similarity must be positive");
    Ok(kernel.eval(s1, s2) / (k11 * k22).sqrt())
}
