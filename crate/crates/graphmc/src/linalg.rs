//! Dense small-matrix primitives: Cholesky factorization, weighted rank-one
//! Cholesky updates, triangular products and solves.
//!
//! All matrices here are tiny (one per sampling block), so everything is a
//! plain row-major `Vec<f64>` with no BLAS behind it.

use crate::error::{Error, Result};

/// Lower-triangular matrix with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    dim: usize,
    /// Row-major `dim * dim`; strict upper part is kept at zero.
    entries: Vec<f64>,
}

impl LowerTriangular {
    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    /// Build from explicit entries; the strict upper part must be zero and the
    /// diagonal strictly positive.
    pub fn from_rows(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let m = Self { dim, entries };
        m.check_invariants()?;
        Ok(m)
    }

    fn check_invariants(&self) -> Result<()> {
        for i in 0..self.dim {
            if self[(i, i)] <= 0.0 || !self[(i, i)].is_finite() {
                return Err(Error::NotPositiveDefinite {
                    row: i,
                    pivot: self[(i, i)],
                });
            }
            for j in (i + 1)..self.dim {
                if self[(i, j)] != 0.0 {
                    return Err(Error::Model(format!(
                        "nonzero entry ({i},{j}) above the diagonal"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// L * Lᵀ as a symmetric matrix.
    pub fn gram(&self) -> SymmetricPD {
        let d = self.dim;
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += self[(i, k)] * self[(j, k)];
                }
                c[i * d + j] = s;
                c[j * d + i] = s;
            }
        }
        SymmetricPD { dim: d, entries: c }
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)].ln()).sum()
    }
}

impl std::ops::Index<(usize, usize)> for LowerTriangular {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.dim + j]
    }
}

/// Symmetric matrix, stored fully; positive definiteness is certified by a
/// successful factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricPD {
    dim: usize,
    entries: Vec<f64>,
}

impl SymmetricPD {
    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1);
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    /// Build from row-major entries, symmetrizing is not applied: the input
    /// must already be symmetric.
    pub fn from_rows(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                if entries[i * dim + j] != entries[j * dim + i] {
                    return Err(Error::Model(format!("entry ({i},{j}) is not symmetric")));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl std::ops::Index<(usize, usize)> for SymmetricPD {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.dim + j]
    }
}

/// Cholesky factorization C = L·Lᵀ.
///
/// Fails with `NotPositiveDefinite` when a pivot falls at or below
/// `dim * eps * max_diag`.
pub fn chol_factor(c: &SymmetricPD) -> Result<LowerTriangular> {
    let d = c.dim;
    let max_diag = (0..d).map(|i| c[(i, i)].abs()).fold(0.0_f64, f64::max);
    let tol = d as f64 * f64::EPSILON * max_diag;
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = c[(i, j)];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= tol {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(LowerTriangular { dim: d, entries: l })
}

/// Rank-one Cholesky update: returns L' with L'·L'ᵀ = beta·L·Lᵀ + w·v·vᵀ
/// in O(d²) operations, without refactorizing.
///
/// Scales L by √beta and then runs the classical hyperbolic-rotation update
/// with the vector √w·v. `beta > 0` and `w ≥ 0` keep the result positive
/// definite, so no failure path exists here.
pub fn rank1_update(l: &LowerTriangular, beta: f64, w: f64, v: &[f64]) -> LowerTriangular {
    rank1_update_counted(l, beta, w, v).0
}

/// Same as [`rank1_update`] but also reports the number of floating-point
/// operations performed, for complexity checks.
pub fn rank1_update_counted(
    l: &LowerTriangular,
    beta: f64,
    w: f64,
    v: &[f64],
) -> (LowerTriangular, usize) {
    assert!(beta > 0.0, "beta must be positive");
    assert!(w >= 0.0, "w must be nonnegative");
    assert_eq!(v.len(), l.dim, "vector length must match dimension");

    let d = l.dim;
    let sqrt_beta = beta.sqrt();
    let mut out = l.entries.clone();
    let mut flops = 0usize;
    for x in out.iter_mut() {
        *x *= sqrt_beta;
    }
    flops += d * d;

    if w == 0.0 {
        return (LowerTriangular { dim: d, entries: out }, flops);
    }

    // Classical positive rank-one update (Golub-style): maintain the working
    // vector x = sqrt(w)*v and sweep columns with scaled Givens rotations.
    let sw = w.sqrt();
    let mut x: Vec<f64> = v.iter().map(|&vi| sw * vi).collect();
    flops += d;
    for j in 0..d {
        let ljj = out[j * d + j];
        let r = (ljj * ljj + x[j] * x[j]).sqrt();
        let c = r / ljj;
        let s = x[j] / ljj;
        out[j * d + j] = r;
        flops += 6;
        for i in (j + 1)..d {
            let lij = (out[i * d + j] + s * x[i]) / c;
            x[i] = c * x[i] - s * lij;
            out[i * d + j] = lij;
            flops += 6;
        }
    }
    (LowerTriangular { dim: d, entries: out }, flops)
}

/// L·w for lower-triangular L.
pub fn tri_matvec(l: &LowerTriangular, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != l.dim {
        return Err(Error::DimensionMismatch {
            expected: l.dim,
            got: w.len(),
        });
    }
    let d = l.dim;
    let mut out = vec![0.0; d];
    for i in 0..d {
        let mut s = 0.0;
        for j in 0..=i {
            s += l[(i, j)] * w[j];
        }
        out[i] = s;
    }
    Ok(out)
}

/// Solve L·x = b by forward substitution.
pub fn tri_solve(l: &LowerTriangular, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != l.dim {
        return Err(Error::DimensionMismatch {
            expected: l.dim,
            got: b.len(),
        });
    }
    let d = l.dim;
    let mut x = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn chol_identity() {
        let c = SymmetricPD::identity(2);
        let l = chol_factor(&c).unwrap();
        assert_eq!(l, LowerTriangular::identity(2));
    }

    #[test]
    fn chol_hand_example() {
        let c = SymmetricPD::from_rows(2, vec![4.0, 2.0, 2.0, 5.0]).unwrap();
        let l = chol_factor(&c).unwrap();
        assert_close(l[(0, 0)], 2.0, 1e-12);
        assert_close(l[(1, 0)], 1.0, 1e-12);
        assert_close(l[(1, 1)], 2.0, 1e-12);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn chol_indefinite_fails() {
        let c = SymmetricPD::from_rows(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            chol_factor(&c),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn rank1_hand_examples() {
        // 0.5*I + 0.5*(1,1)(1,1)^T = [[1,0.5],[0.5,1]]
        let l = LowerTriangular::identity(2);
        let up = rank1_update(&l, 0.5, 0.5, &[1.0, 1.0]);
        assert_close(up[(0, 0)], 1.0, 1e-12);
        assert_close(up[(1, 0)], 0.5, 1e-12);
        assert_close(up[(1, 1)], 0.75_f64.sqrt(), 1e-12);

        // w = 0 leaves beta=1 update a no-op.
        let l = LowerTriangular::from_rows(2, vec![2.0, 0.0, 1.0, 2.0]).unwrap();
        let up = rank1_update(&l, 1.0, 0.0, &[3.0, -1.0]);
        assert_eq!(up, l);

        // d = 1: sqrt(0.25*4 + 9) = sqrt(10)
        let l = LowerTriangular::from_rows(1, vec![2.0]).unwrap();
        let up = rank1_update(&l, 0.25, 1.0, &[3.0]);
        assert_close(up[(0, 0)], 10.0_f64.sqrt(), 1e-12);
    }

    #[test]
    fn tri_matvec_examples() {
        let l = LowerTriangular::identity(3);
        assert_eq!(tri_matvec(&l, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let l = LowerTriangular::from_rows(2, vec![2.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(tri_matvec(&l, &[1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(tri_matvec(&l, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(tri_matvec(&l, &[1.0]).is_err());
    }

    #[test]
    fn tri_solve_examples() {
        let l = LowerTriangular::identity(2);
        assert_eq!(tri_solve(&l, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        let l = LowerTriangular::from_rows(2, vec![2.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(tri_solve(&l, &[2.0, 3.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(tri_solve(&l, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rank1_flop_growth_is_quadratic() {
        // flops(d) / d^2 must stay below a fixed constant across sizes.
        let mut ratios = Vec::new();
        for d in [2usize, 4, 8, 16, 32] {
            let l = LowerTriangular::identity(d);
            let v: Vec<f64> = (0..d).map(|i| (i as f64 + 1.0) / d as f64).collect();
            let (_, flops) = rank1_update_counted(&l, 0.9, 0.1, &v);
            ratios.push(flops as f64 / (d * d) as f64);
        }
        for r in &ratios {
            assert!(*r <= 8.0, "flop ratio {r} exceeds c*d^2 bound");
        }
    }

    fn random_pd(d: usize, seed: u64) -> SymmetricPD {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![0.0; d * d];
        for x in a.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        // A*A^T + d*eps_shift*I is safely PD
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += a[i * d + k] * a[j * d + k];
                }
                c[i * d + j] = s;
            }
            c[i * d + i] += 0.1;
        }
        SymmetricPD { dim: d, entries: c }
    }

    #[test]
    fn chol_factor_roundtrip_many() {
        for trial in 0..1000u64 {
            let d = (trial % 10 + 1) as usize;
            let c = random_pd(d, trial);
            let l = chol_factor(&c).unwrap();
            let g = l.gram();
            let norm = (0..d * d).map(|k| c.entries[k].abs()).fold(0.0, f64::max);
            for k in 0..d * d {
                assert!((g.entries[k] - c.entries[k]).abs() <= 1e-10 * norm);
            }
        }
    }

    #[test]
    fn rank1_matches_refactorization_many() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..1000u64 {
            let d = (trial % 6 + 1) as usize;
            let c = random_pd(d, trial.wrapping_mul(31));
            let l = chol_factor(&c).unwrap();
            let beta = rng.gen_range(0.01..1.0);
            let w = rng.gen_range(0.0..1.0);
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();

            let fast = rank1_update(&l, beta, w, &v);

            let mut target = vec![0.0; d * d];
            let g = l.gram();
            for i in 0..d {
                for j in 0..d {
                    target[i * d + j] = beta * g[(i, j)] + w * v[i] * v[j];
                }
            }
            let slow = chol_factor(&SymmetricPD { dim: d, entries: target }).unwrap();
            for i in 0..d {
                for j in 0..=i {
                    let scale = slow[(i, j)].abs().max(1.0);
                    assert!(
                        (fast[(i, j)] - slow[(i, j)]).abs() <= 1e-9 * scale,
                        "d={d} ({i},{j}): {} vs {}",
                        fast[(i, j)],
                        slow[(i, j)]
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn solve_inverts_matvec(seed in 0u64..500, d in 1usize..8) {
            let c = random_pd(d, seed);
            let l = chol_factor(&c).unwrap();
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b = tri_matvec(&l, &x).unwrap();
            let back = tri_solve(&l, &b).unwrap();
            for i in 0..d {
                prop_assert!((back[i] - x[i]).abs() <= 1e-10 * x[i].abs().max(1.0));
            }
        }
    }
}
