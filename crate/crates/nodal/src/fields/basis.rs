//! Analytic basis functions with exact jets.
//!
//! Every sampled path and deterministic fixture is a finite combination of
//! these, so values, gradients and Hessians are obtained by analytic
//! differentiation, never by finite differences.

use crate::geometry::Vec3;
use crate::Real;

/// Dense polynomial in up to three ambient variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    /// (coefficient, powers of x, y, z)
    pub terms: Vec<(Real, [u8; 3])>,
}

impl Polynomial {
    pub fn new(terms: Vec<(Real, [u8; 3])>) -> Self {
        Polynomial { terms }
    }

    pub fn constant(c: Real) -> Self {
        Polynomial {
            terms: vec![(c, [0, 0, 0])],
        }
    }

    pub fn zero() -> Self {
        Polynomial { terms: Vec::new() }
    }

    pub fn max_degree(&self) -> usize {
        self.terms
            .iter()
            .map(|(_, p)| (p[0] + p[1] + p[2]) as usize)
            .max()
            .unwrap_or(0)
    }

    /// Merge duplicate monomials and drop zeros.
    pub fn compress(&mut self) {
        use std::collections::BTreeMap;
        let mut map: BTreeMap<[u8; 3], Real> = BTreeMap::new();
        for &(c, p) in &self.terms {
            *map.entry(p).or_insert(0.0) += c;
        }
        self.terms = map
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(p, c)| (c, p))
            .collect();
    }

    pub fn add_scaled(&mut self, other: &Polynomial, scale: Real) {
        for &(c, p) in &other.terms {
            self.terms.push((scale * c, p));
        }
    }

    /// Formal Laplacian, as a polynomial.
    pub fn laplacian(&self) -> Polynomial {
        let mut out = Polynomial::zero();
        for &(c, p) in &self.terms {
            for axis in 0..3 {
                if p[axis] >= 2 {
                    let mut q = p;
                    q[axis] -= 2;
                    let k = p[axis] as Real;
                    out.terms.push((c * k * (k - 1.0), q));
                }
            }
        }
        out.compress();
        out
    }

    pub fn value(&self, x: &Vec3) -> Real {
        let pw = PowerTable::new(x, self.max_degree());
        self.terms
            .iter()
            .map(|&(c, p)| c * pw.monomial(&p))
            .sum()
    }

    pub fn jet(&self, x: &Vec3) -> AmbientJet {
        let pw = PowerTable::new(x, self.max_degree());
        let mut jet = AmbientJet::zero();
        for &(c, p) in &self.terms {
            jet.value += c * pw.monomial(&p);
            for i in 0..3 {
                if p[i] >= 1 {
                    let mut q = p;
                    q[i] -= 1;
                    jet.grad[i] += c * p[i] as Real * pw.monomial(&q);
                }
            }
            for i in 0..3 {
                for j in i..3 {
                    let mut q = p;
                    let factor = if i == j {
                        if p[i] < 2 {
                            continue;
                        }
                        q[i] -= 2;
                        p[i] as Real * (p[i] - 1) as Real
                    } else {
                        if p[i] < 1 || p[j] < 1 {
                            continue;
                        }
                        q[i] -= 1;
                        q[j] -= 1;
                        p[i] as Real * p[j] as Real
                    };
                    let v = c * factor * pw.monomial(&q);
                    jet.hess[i][j] += v;
                    if i != j {
                        jet.hess[j][i] += v;
                    }
                }
            }
        }
        jet
    }
}

/// Precomputed coordinate powers for fast monomial evaluation.
struct PowerTable {
    pows: [Vec<Real>; 3],
}

impl PowerTable {
    fn new(x: &Vec3, max_degree: usize) -> Self {
        let mut pows = [
            Vec::with_capacity(max_degree + 1),
            Vec::with_capacity(max_degree + 1),
            Vec::with_capacity(max_degree + 1),
        ];
        for axis in 0..3 {
            let mut v = 1.0;
            pows[axis].push(1.0);
            for _ in 0..max_degree {
                v *= x[axis];
                pows[axis].push(v);
            }
        }
        PowerTable { pows }
    }

    #[inline]
    fn monomial(&self, p: &[u8; 3]) -> Real {
        self.pows[0][p[0] as usize] * self.pows[1][p[1] as usize] * self.pows[2][p[2] as usize]
    }
}

/// Phase of a trigonometric basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cos,
    Sin,
}

/// Ambient (chart) jet of a scalar function: value, gradient and symmetric
/// Hessian in the surrounding coordinates.
#[derive(Debug, Clone, Copy)]
pub struct AmbientJet {
    pub value: Real,
    pub grad: Vec3,
    pub hess: [[Real; 3]; 3],
}

impl AmbientJet {
    pub fn zero() -> Self {
        AmbientJet {
            value: 0.0,
            grad: [0.0; 3],
            hess: [[0.0; 3]; 3],
        }
    }

    pub fn add_scaled(&mut self, other: &AmbientJet, scale: Real) {
        self.value += scale * other.value;
        for i in 0..3 {
            self.grad[i] += scale * other.grad[i];
            for j in 0..3 {
                self.hess[i][j] += scale * other.hess[i][j];
            }
        }
    }
}

/// A single analytic basis function.
#[derive(Debug, Clone)]
pub enum BasisFn {
    /// `amp * cos/sin(k . x)` with angular wave vector `k`.
    Trig { k: Vec3, phase: Phase, amp: Real },
    /// Ambient polynomial.
    Poly(Polynomial),
    /// `p(x - center) * exp(-|x - center|^2 / 2)`.
    PolyGauss { poly: Polynomial, center: Vec3 },
}

impl BasisFn {
    pub fn value(&self, x: &Vec3) -> Real {
        match self {
            BasisFn::Trig { k, phase, amp } => {
                let t = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
                match phase {
                    Phase::Cos => amp * t.cos(),
                    Phase::Sin => amp * t.sin(),
                }
            }
            BasisFn::Poly(p) => p.value(x),
            BasisFn::PolyGauss { poly, center } => {
                let y = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                poly.value(&y) * (-r2 / 2.0).exp()
            }
        }
    }

    pub fn jet(&self, x: &Vec3) -> AmbientJet {
        match self {
            BasisFn::Trig { k, phase, amp } => {
                let t = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
                let (c, s) = (t.cos(), t.sin());
                let (v, dv, ddv) = match phase {
                    Phase::Cos => (c, -s, -c),
                    Phase::Sin => (s, c, -s),
                };
                let mut jet = AmbientJet::zero();
                jet.value = amp * v;
                for i in 0..3 {
                    jet.grad[i] = amp * dv * k[i];
                    for j in 0..3 {
                        jet.hess[i][j] = amp * ddv * k[i] * k[j];
                    }
                }
                jet
            }
            BasisFn::Poly(p) => p.jet(x),
            BasisFn::PolyGauss { poly, center } => {
                let y = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                let env = (-r2 / 2.0).exp();
                let p = poly.jet(&y);
                let mut jet = AmbientJet::zero();
                jet.value = p.value * env;
                for i in 0..3 {
                    jet.grad[i] = (p.grad[i] - p.value * y[i]) * env;
                }
                for i in 0..3 {
                    for j in 0..3 {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        jet.hess[i][j] = (p.hess[i][j]
                            - p.grad[i] * y[j]
                            - p.grad[j] * y[i]
                            - p.value * delta
                            + p.value * y[i] * y[j])
                            * env;
                    }
                }
                jet
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: &BasisFn, x: &Vec3) {
        let h = 1e-5;
        let jet = f.jet(x);
        for i in 0..3 {
            let mut xp = *x;
            let mut xm = *x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
            assert!(
                (jet.grad[i] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "grad[{i}]: analytic {} vs fd {fd}",
                jet.grad[i]
            );
            for j in 0..3 {
                let mut pp = *x;
                pp[i] += h;
                pp[j] += h;
                let mut pm = *x;
                pm[i] += h;
                pm[j] -= h;
                let mut mp = *x;
                mp[i] -= h;
                mp[j] += h;
                let mut mm = *x;
                mm[i] -= h;
                mm[j] -= h;
                let fd2 = (f.value(&pp) - f.value(&pm) - f.value(&mp) + f.value(&mm))
                    / (4.0 * h * h);
                assert!(
                    (jet.hess[i][j] - fd2).abs() <= 2e-4 * (1.0 + fd2.abs()),
                    "hess[{i}][{j}]: analytic {} vs fd {fd2}",
                    jet.hess[i][j]
                );
            }
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let x = [0.31, -0.42, 0.57];
        let cases = vec![
            BasisFn::Trig {
                k: [2.0 * std::f64::consts::PI, 4.0 * std::f64::consts::PI, 0.0],
                phase: Phase::Sin,
                amp: 1.3,
            },
            BasisFn::Poly(Polynomial::new(vec![
                (1.0, [2, 0, 0]),
                (-0.5, [1, 1, 1]),
                (2.0, [0, 3, 0]),
            ])),
            BasisFn::PolyGauss {
                poly: Polynomial::new(vec![(1.0, [1, 0, 0]), (0.7, [0, 2, 0])]),
                center: [0.1, 0.0, -0.2],
            },
        ];
        for f in &cases {
            fd_check(f, &x);
        }
    }

    #[test]
    fn polynomial_laplacian_is_exact() {
        // lap(x^2 y + z^3) = 2y + 6z
        let p = Polynomial::new(vec![(1.0, [2, 1, 0]), (1.0, [0, 0, 3])]);
        let lap = p.laplacian();
        let x = [0.3, 0.7, -0.4];
        assert!((lap.value(&x) - (2.0 * 0.7 + 6.0 * -0.4)).abs() < 1e-14);
    }
}
