//! Finite centered Gaussian laws with regression conditioning.
//!
//! Covariances are assembled as B^T B from per-basis functional evaluations,
//! so they are positive semidefinite by construction; conditioning uses the
//! Gaussian regression formula and preserves semidefiniteness up to a
//! documented eigenvalue clamp.

use crate::error::{Error, Result};
use crate::Real;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Relative eigenvalue clamp: roundoff below this magnitude is zeroed.
const CLAMP_REL: Real = 1e-10;
/// Relative eigenvalue hard floor: anything more negative is a genuine
/// degeneracy of the model, not roundoff.
const HARD_FLOOR_REL: Real = 1e-6;

/// A centered (or conditioned) finite Gaussian law.
#[derive(Debug, Clone)]
pub struct GaussianVector {
    pub mean: DVector<Real>,
    pub cov: DMatrix<Real>,
    /// Semantic tags per coordinate.
    pub labels: Vec<String>,
}

impl GaussianVector {
    /// Centered law with covariance B^T B, where row n of `functionals`
    /// holds the evaluations of the n-th basis function against each
    /// coordinate functional.
    pub fn from_functionals(functionals: &DMatrix<Real>, labels: Vec<String>) -> Self {
        let cov = functionals.transpose() * functionals;
        GaussianVector {
            mean: DVector::zeros(cov.nrows()),
            cov,
            labels,
        }
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    fn scale(&self) -> Real {
        (0..self.dim())
            .map(|i| self.cov[(i, i)].abs())
            .fold(0.0, Real::max)
    }

    /// Law of the remaining coordinates given `observed` coordinates equal
    /// to `values` (Gaussian regression).
    pub fn condition(&self, observed: &[usize], values: &[Real]) -> Result<GaussianVector> {
        assert_eq!(observed.len(), values.len());
        let keep: Vec<usize> = (0..self.dim()).filter(|i| !observed.contains(i)).collect();
        let s_oo = select(&self.cov, observed, observed);
        let s_uo = select(&self.cov, &keep, observed);
        let s_uu = select(&self.cov, &keep, &keep);

        let scale = (0..observed.len())
            .map(|i| s_oo[(i, i)].abs())
            .fold(0.0 as Real, Real::max)
            .max(1e-300);
        let eig = s_oo.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.iter().cloned().fold(Real::INFINITY, Real::min);
        if min_eig <= 1e-12 * scale {
            return Err(Error::DegenerateConditioning(format!(
                "observed block has min eigenvalue {min_eig:.3e} at scale {scale:.3e}"
            )));
        }
        // Inverse through the spectral factorization.
        let mut inv = DMatrix::zeros(observed.len(), observed.len());
        for k in 0..observed.len() {
            let u = eig.eigenvectors.column(k);
            let lam = eig.eigenvalues[k];
            inv += DMatrix::from_fn(observed.len(), observed.len(), |i, j| {
                u[i] * u[j] / lam
            });
        }
        let gain = &s_uo * &inv;
        let innovation = DVector::from_iterator(
            values.len(),
            values
                .iter()
                .enumerate()
                .map(|(k, v)| v - self.mean[observed[k]]),
        );
        let mean_u = DVector::from_iterator(keep.len(), keep.iter().map(|&i| self.mean[i]))
            + &gain * innovation;
        let mut cov_u = s_uu - gain * s_uo.transpose();
        // Symmetrize and clamp roundoff-negative eigenvalues.
        cov_u = (&cov_u + cov_u.transpose()) * 0.5;
        let full_scale = self.scale().max(1e-300);
        let eig_u = cov_u.clone().symmetric_eigen();
        let min_u = eig_u
            .eigenvalues
            .iter()
            .cloned()
            .fold(Real::INFINITY, Real::min);
        if min_u < -HARD_FLOOR_REL * full_scale {
            return Err(Error::DegenerateConditioning(format!(
                "conditional covariance eigenvalue {min_u:.3e} below the hard floor"
            )));
        }
        if min_u < 0.0 {
            let mut rebuilt = DMatrix::zeros(keep.len(), keep.len());
            for k in 0..keep.len() {
                let lam = eig_u.eigenvalues[k].max(0.0);
                if lam == 0.0 {
                    continue;
                }
                let u = eig_u.eigenvectors.column(k);
                rebuilt += DMatrix::from_fn(keep.len(), keep.len(), |i, j| lam * u[i] * u[j]);
            }
            cov_u = rebuilt;
        }
        let labels = keep.iter().map(|&i| self.labels[i].clone()).collect();
        Ok(GaussianVector {
            mean: mean_u,
            cov: cov_u,
            labels,
        })
    }

    /// Spectral square-root sampler.
    pub fn sampler(&self) -> Result<GaussianSampler> {
        let scale = self.scale().max(1e-300);
        let eig = self.cov.clone().symmetric_eigen();
        let n = self.dim();
        let mut factor = DMatrix::zeros(n, n);
        for k in 0..n {
            let lam = eig.eigenvalues[k];
            if lam < -HARD_FLOOR_REL * scale {
                return Err(Error::DegenerateConditioning(format!(
                    "eigenvalue {lam:.3e} below the hard floor at scale {scale:.3e}"
                )));
            }
            let s = lam.max(0.0).sqrt();
            for i in 0..n {
                factor[(i, k)] = eig.eigenvectors[(i, k)] * s;
            }
        }
        Ok(GaussianSampler {
            mean: self.mean.clone(),
            factor,
        })
    }

    /// Minimum covariance eigenvalue (diagnostics).
    pub fn min_eigenvalue(&self) -> Real {
        self.cov
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(Real::INFINITY, Real::min)
    }

    /// Clamped-covariance check: eigenvalues must be >= -1e-10 relative.
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -CLAMP_REL * self.scale().max(1e-300)
    }
}

fn select(m: &DMatrix<Real>, rows: &[usize], cols: &[usize]) -> DMatrix<Real> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Draws from a fixed Gaussian law.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<Real>,
    factor: DMatrix<Real>,
}

impl GaussianSampler {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut impl Rng, out: &mut DVector<Real>) {
        let n = self.dim();
        let z = DVector::from_iterator(n, (0..n).map(|_| {
            let v: Real = StandardNormal.sample(rng);
            v
        }));
        out.copy_from(&self.mean);
        out.gemv(1.0, &self.factor, &z, 1.0);
    }
}
