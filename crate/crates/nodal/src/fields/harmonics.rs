//! Homogeneous harmonic polynomial bases for the sphere.
//!
//! The degree-l harmonic space is computed as the kernel of the formal
//! Laplacian on homogeneous degree-l polynomials, then orthonormalized in
//! L^2(S^2) with a quadrature that is exact for the polynomial degrees
//! involved. Restricted to the sphere these are real spherical harmonics.

use super::basis::Polynomial;
use crate::num::gauss_legendre;
use crate::Real;
use nalgebra::DMatrix;

/// Monomials of exact total degree `l` in three variables.
fn homogeneous_monomials(l: usize) -> Vec<[u8; 3]> {
    let mut out = Vec::new();
    for a in 0..=l {
        for b in 0..=(l - a) {
            let c = l - a - b;
            out.push([a as u8, b as u8, c as u8]);
        }
    }
    out
}

/// Orthonormal basis of spherical harmonics of degree `l`, scaled so that
/// the reproducing kernel is the Legendre polynomial:
/// `sum_n h_n(x) h_n(y) = P_l(x . y)` and every `h_n` has unit field
/// variance contribution on the sphere.
pub fn spherical_harmonic_basis(l: usize) -> Vec<Polynomial> {
    let monos = homogeneous_monomials(l);
    let dim = monos.len();
    let index: std::collections::HashMap<[u8; 3], usize> = monos
        .iter()
        .enumerate()
        .map(|(i, m)| (*m, i))
        .collect();

    // Formal Laplacian as a matrix from degree-l to degree-(l-2) monomials.
    let target = if l >= 2 {
        homogeneous_monomials(l - 2)
    } else {
        Vec::new()
    };
    let tindex: std::collections::HashMap<[u8; 3], usize> = target
        .iter()
        .enumerate()
        .map(|(i, m)| (*m, i))
        .collect();
    let kernel_basis: Vec<Vec<Real>> = if target.is_empty() {
        // Degrees 0 and 1 are harmonic outright.
        (0..dim)
            .map(|i| {
                let mut v = vec![0.0; dim];
                v[i] = 1.0;
                v
            })
            .collect()
    } else {
        let mut lap = DMatrix::<Real>::zeros(target.len(), dim);
        for (col, m) in monos.iter().enumerate() {
            for axis in 0..3 {
                if m[axis] >= 2 {
                    let mut q = *m;
                    q[axis] -= 2;
                    let k = m[axis] as Real;
                    lap[(tindex[&q], col)] += k * (k - 1.0);
                }
            }
        }
        // Null space of the Laplacian via the spectrum of lap^T lap.
        let gram = lap.transpose() * &lap;
        let eig = gram.symmetric_eigen();
        let emax = eig.eigenvalues.iter().cloned().fold(0.0, Real::max);
        let tol = emax * 1e-12 * dim as Real;
        (0..dim)
            .filter(|&i| eig.eigenvalues[i] <= tol)
            .map(|i| eig.eigenvectors.column(i).iter().cloned().collect())
            .collect()
    };
    assert_eq!(kernel_basis.len(), 2 * l + 1, "harmonic space dimension");
    let _ = index;

    // Exact quadrature on the sphere for polynomial integrands of degree 2l:
    // Gauss-Legendre in z, uniform in the azimuth.
    let nz = l + 2;
    let nphi = 2 * l + 2;
    let (zs, wz) = gauss_legendre::<Real>(nz);
    let mut quad: Vec<(crate::geometry::Point, Real)> = Vec::with_capacity(nz * nphi);
    for (z, w) in zs.iter().zip(wz.iter()) {
        let r = (1.0 - z * z).max(0.0).sqrt();
        for j in 0..nphi {
            let phi = 2.0 * std::f64::consts::PI * j as Real / nphi as Real;
            quad.push((
                [r * phi.cos(), r * phi.sin(), *z],
                w * 2.0 * std::f64::consts::PI / nphi as Real,
            ));
        }
    }

    let polys: Vec<Polynomial> = kernel_basis
        .iter()
        .map(|coeffs| {
            let mut p = Polynomial::new(
                coeffs
                    .iter()
                    .zip(monos.iter())
                    .filter(|(c, _)| c.abs() > 0.0)
                    .map(|(c, m)| (*c, *m))
                    .collect(),
            );
            p.compress();
            p
        })
        .collect();

    // Values at quadrature points, then Gram and its Cholesky factor.
    let k = polys.len();
    let vals = DMatrix::<Real>::from_fn(quad.len(), k, |q, i| polys[i].value(&quad[q].0));
    let mut gram = DMatrix::<Real>::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mut s = 0.0;
            for (q, (_, w)) in quad.iter().enumerate() {
                s += vals[(q, i)] * vals[(q, j)] * w;
            }
            gram[(i, j)] = s;
            gram[(j, i)] = s;
        }
    }
    let chol = gram.cholesky().expect("Gram matrix is positive definite");
    // Columns of L^{-T} give L^2-orthonormal combinations.
    let linv_t = chol
        .l()
        .try_inverse()
        .expect("triangular inverse")
        .transpose();

    let scale = (4.0 * std::f64::consts::PI / (2 * l + 1) as Real).sqrt();
    (0..k)
        .map(|j| {
            let mut p = Polynomial::zero();
            for i in 0..k {
                let a = linv_t[(i, j)];
                if a != 0.0 {
                    p.add_scaled(&polys[i], a * scale);
                }
            }
            p.compress();
            p
        })
        .collect()
}

/// Legendre polynomial `P_l`, used as the covariance oracle in tests.
pub fn legendre(l: usize, x: Real) -> Real {
    let mut p0 = 1.0;
    let mut p1 = x;
    if l == 0 {
        return p0;
    }
    for k in 2..=l {
        let kf = k as Real;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normalize;

    #[test]
    fn basis_is_harmonic_and_reproduces_legendre_kernel() {
        for l in [1usize, 3, 8, 20] {
            let basis = spherical_harmonic_basis(l);
            assert_eq!(basis.len(), 2 * l + 1);
            for p in &basis {
                let lap = p.laplacian();
                let x = [0.4, -0.2, 0.8];
                assert!(
                    lap.value(&x).abs() < 1e-6 * (1.0 + p.value(&x).abs()),
                    "degree {l} basis not harmonic"
                );
            }
            let x = normalize(&[0.3, -0.5, 0.9]);
            let y = normalize(&[-0.7, 0.2, 0.4]);
            let k: Real = basis.iter().map(|p| p.value(&x) * p.value(&y)).sum();
            let expected = legendre(l, crate::geometry::dot(&x, &y));
            assert!(
                (k - expected).abs() < 1e-8,
                "degree {l}: kernel {k} vs P_l {expected}"
            );
            let kxx: Real = basis.iter().map(|p| p.value(&x) * p.value(&x)).sum();
            assert!((kxx - 1.0).abs() < 1e-8, "degree {l}: variance {kxx}");
        }
    }
}
