//! Symmetric proposal families for the random-walk increment W and their
//! log-densities (the latter feed the delayed-rejection acceptance ratio).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Seedable generator with a reproducible stream.
#[derive(Debug, Clone)]
pub struct RngState {
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform on [0, 1).
    pub fn uniform01(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    fn chi_squared(&mut self, dof: f64) -> f64 {
        Gamma::new(dof / 2.0, 2.0).unwrap().sample(&mut self.inner)
    }
}

/// Which symmetric family q0 the increment is drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProposalKind {
    Gaussian,
    /// Multivariate Student-t; one shared chi-squared divisor per vector.
    Student { dof: f64 },
    UniformCube,
    LaplaceProduct,
}

impl ProposalKind {
    pub const DEFAULT_STUDENT_DOF: f64 = 6.0;

    pub fn student_default() -> Self {
        ProposalKind::Student {
            dof: Self::DEFAULT_STUDENT_DOF,
        }
    }
}

/// One draw of W from the standard member of the family.
pub fn sample_standard(kind: ProposalKind, d: usize, rng: &mut RngState) -> Vec<f64> {
    assert!(d >= 1);
    match kind {
        ProposalKind::Gaussian => (0..d).map(|_| rng.standard_normal()).collect(),
        ProposalKind::Student { dof } => {
            assert!(dof > 2.0, "student dof must exceed 2");
            let scale = (rng.chi_squared(dof) / dof).sqrt();
            (0..d).map(|_| rng.standard_normal() / scale).collect()
        }
        ProposalKind::UniformCube => (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
        ProposalKind::LaplaceProduct => (0..d)
            .map(|_| {
                // inverse CDF of Laplace(0,1) from one uniform
                let u = rng.uniform01() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect(),
    }
}

use crate::special::{ln_gamma, LN_2PI};

/// log q0(w) with normalization constants; −∞ outside the support.
pub fn log_density_standard(kind: ProposalKind, d: usize, w: &[f64]) -> f64 {
    assert_eq!(w.len(), d);
    match kind {
        ProposalKind::Gaussian => {
            let sq: f64 = w.iter().map(|x| x * x).sum();
            -0.5 * (d as f64) * LN_2PI - 0.5 * sq
        }
        ProposalKind::Student { dof } => {
            let sq: f64 = w.iter().map(|x| x * x).sum();
            let d = d as f64;
            ln_gamma((dof + d) / 2.0)
                - ln_gamma(dof / 2.0)
                - 0.5 * d * (dof * std::f64::consts::PI).ln()
                - 0.5 * (dof + d) * (1.0 + sq / dof).ln()
        }
        ProposalKind::UniformCube => {
            if w.iter().any(|x| x.abs() > 1.0) {
                f64::NEG_INFINITY
            } else {
                -(d as f64) * std::f64::consts::LN_2
            }
        }
        ProposalKind::LaplaceProduct => {
            let abs_sum: f64 = w.iter().map(|x| x.abs()).sum();
            -(d as f64) * std::f64::consts::LN_2 - abs_sum
        }
    }
}
