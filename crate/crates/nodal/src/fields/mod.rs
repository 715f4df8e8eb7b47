//! Covariance models for Gaussian fields, exact-jet sampling via finite
//! spectral sums, deterministic test functions and Cameron-Martin structure.
//!
//! Every model carries an orthonormal Cameron-Martin basis `h_n` with
//! `K(p,q) = sum_n h_n(p) h_n(q)` exactly (finite rank), so sampled paths are
//! exact finite sums and all jets are analytic.

pub mod basis;
pub mod harmonics;

use crate::error::{Error, Result};
use crate::geometry::{dot, Domain, DomainKind, Point, Vec3};
use crate::Real;
use basis::{AmbientJet, BasisFn, Phase, Polynomial};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

fn default_directions() -> usize {
    32
}
fn default_sigma0() -> Real {
    3.0
}

/// Model selection, as it appears in run configurations.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Random eigenfunction of the flat torus with eigenvalue 4 pi^2 n.
    ArithmeticWave { n: u64 },
    /// Equal-weight plane waves on the circle |xi| = k (truncated Berry wave).
    BerryWave {
        k: Real,
        #[serde(default = "default_directions")]
        directions: usize,
    },
    /// Tensor Hermite truncation of the Bargmann-Fock field, centered in the
    /// domain.
    BargmannFock { truncation: usize },
    /// Restriction of the degree-d Kostlan polynomial to the sphere,
    /// K(x,y) = (x.y)^d.
    Kostlan { degree: usize },
    /// Explicit frequency set with weights on a flat domain.
    SpectralSum {
        frequencies: Vec<Vec<i64>>,
        weights: Vec<Real>,
    },
    /// K(x,y) = x.y on the sphere; the nodal set is always a great circle.
    LinearField,
    /// Random real spherical harmonic of degree l.
    SphericalHarmonic { l: usize },
    /// Spectral sum plus a constant basis function at weight sigma0, so the
    /// empty-zero-set event has positive probability.
    AtomDemo {
        #[serde(default = "default_sigma0")]
        sigma0: Real,
    },
}

impl ModelSpec {
    pub fn valid_names() -> &'static [&'static str] {
        &[
            "arithmetic-wave",
            "berry-wave",
            "bargmann-fock",
            "kostlan",
            "spectral-sum",
            "linear-field",
            "spherical-harmonic",
            "atom-demo",
        ]
    }
}

/// A finite-rank Gaussian covariance model bound to a domain.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    pub spec: ModelSpec,
    pub domain_kind: DomainKind,
    pub dims: usize,
    pub extents: Vec<Real>,
    pub basis: Arc<Vec<BasisFn>>,
    /// K(p,q) depends only on p - q (flat) or on the angle (sphere).
    pub stationary: bool,
    /// Normalization convention recorded in output metadata.
    pub normalization: &'static str,
}

/// Builds the model basis, checks domain compatibility and runs the joint
/// density guard on a deterministic (point, direction) sweep.
pub fn build_model(spec: &ModelSpec, domain: &Domain) -> Result<CovarianceModel> {
    let model = build_model_unchecked(spec, domain)?;
    model.check_joint_density(domain)?;
    Ok(model)
}

/// Same construction without the non-degeneracy sweep. Needed for the rank-1
/// fixtures whose (value, derivative) pair is degenerate by design.
pub fn build_model_unchecked(spec: &ModelSpec, domain: &Domain) -> Result<CovarianceModel> {
    let m = domain.dims;
    let require_kind = |kinds: &[DomainKind]| -> Result<()> {
        if kinds.contains(&domain.kind) {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "{spec:?} is not defined on {:?} domains",
                domain.kind
            )))
        }
    };
    let mut stationary = true;
    let mut normalization = "unit pointwise variance";
    let basis: Vec<BasisFn> = match spec {
        ModelSpec::ArithmeticWave { n } => {
            require_kind(&[DomainKind::FlatTorus])?;
            let lattice = lattice_points(*n, m);
            if lattice.is_empty() {
                return Err(Error::InvalidModel(format!(
                    "no lattice points with |xi|^2 = {n} in dimension {m}"
                )));
            }
            let total = 2 * lattice.len();
            let amp = (2.0 / total as Real).sqrt();
            trig_pairs(&lattice, &domain.extents, m, amp)
        }
        ModelSpec::SpectralSum {
            frequencies,
            weights,
        } => {
            require_kind(&[DomainKind::FlatTorus, DomainKind::Rectangle])?;
            spectral_sum_basis(frequencies, weights, &domain.extents, m)?
        }
        ModelSpec::AtomDemo { sigma0 } => {
            require_kind(&[DomainKind::FlatTorus, DomainKind::Rectangle])?;
            if !(*sigma0 > 0.0) {
                return Err(Error::InvalidModel("sigma0 must be positive".into()));
            }
            normalization = "unit fluctuation variance plus constant at sigma0";
            let freqs: Vec<Vec<i64>> = if m == 2 {
                vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![1, -1]]
            } else {
                vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1], vec![1, 1, 0]]
            };
            let w = (1.0 / freqs.len() as Real).sqrt();
            let mut b = spectral_sum_basis(&freqs, &vec![w; freqs.len()], &domain.extents, m)?;
            b.push(BasisFn::Poly(Polynomial::constant(*sigma0)));
            b
        }
        ModelSpec::BerryWave { k, directions } => {
            require_kind(&[DomainKind::Rectangle])?;
            if m != 2 {
                return Err(Error::InvalidModel("Berry wave is two-dimensional".into()));
            }
            if !(*k > 0.0) || *directions < 2 {
                return Err(Error::InvalidModel(
                    "Berry wave needs k > 0 and at least 2 directions".into(),
                ));
            }
            let amp = (1.0 / *directions as Real).sqrt();
            let mut b = Vec::with_capacity(2 * directions);
            for j in 0..*directions {
                let theta = std::f64::consts::PI * (j as Real + 0.5) / *directions as Real;
                let kv = [k * theta.cos(), k * theta.sin(), 0.0];
                b.push(BasisFn::Trig {
                    k: kv,
                    phase: Phase::Cos,
                    amp,
                });
                b.push(BasisFn::Trig {
                    k: kv,
                    phase: Phase::Sin,
                    amp,
                });
            }
            b
        }
        ModelSpec::BargmannFock { truncation } => {
            require_kind(&[DomainKind::Rectangle])?;
            stationary = false;
            normalization = "exp(x.y) truncation, unit variance at the center";
            let mut center = [0.0; 3];
            for i in 0..m {
                center[i] = domain.extents[i] / 2.0;
            }
            let mut b = Vec::new();
            for alpha in multi_indices_up_to(*truncation, m) {
                let fact: Real = alpha
                    .iter()
                    .map(|&a| (1..=a as u64).map(|v| v as Real).product::<Real>())
                    .product();
                let mono = Polynomial::new(vec![(1.0 / fact.sqrt(), alpha)]);
                b.push(BasisFn::PolyGauss { poly: mono, center });
            }
            b
        }
        ModelSpec::Kostlan { degree } => {
            require_kind(&[DomainKind::Sphere2])?;
            if *degree < 1 {
                return Err(Error::InvalidModel("Kostlan degree must be >= 1".into()));
            }
            let mut b = Vec::new();
            for alpha in multi_indices_exact(*degree, 3) {
                let c = multinomial(*degree, &alpha).sqrt();
                b.push(BasisFn::Poly(Polynomial::new(vec![(c, alpha)])));
            }
            b
        }
        ModelSpec::LinearField => {
            require_kind(&[DomainKind::Sphere2])?;
            (0..3)
                .map(|i| {
                    let mut p = [0u8; 3];
                    p[i] = 1;
                    BasisFn::Poly(Polynomial::new(vec![(1.0, p)]))
                })
                .collect()
        }
        ModelSpec::SphericalHarmonic { l } => {
            require_kind(&[DomainKind::Sphere2])?;
            if *l < 1 {
                return Err(Error::InvalidModel("harmonic degree must be >= 1".into()));
            }
            harmonics::spherical_harmonic_basis(*l)
                .into_iter()
                .map(BasisFn::Poly)
                .collect()
        }
    };
    Ok(CovarianceModel {
        spec: spec.clone(),
        domain_kind: domain.kind,
        dims: m,
        extents: domain.extents.clone(),
        basis: Arc::new(basis),
        stationary,
        normalization,
    })
}

fn lattice_points(n: u64, m: usize) -> Vec<Vec<i64>> {
    // Half lattice: one representative of each {xi, -xi} pair.
    let bound = (n as Real).sqrt() as i64 + 1;
    let mut out = Vec::new();
    let mut point = vec![0i64; m];
    enumerate_lattice(&mut point, 0, bound, n as i64, &mut out);
    out
}

fn enumerate_lattice(
    point: &mut Vec<i64>,
    axis: usize,
    bound: i64,
    n: i64,
    out: &mut Vec<Vec<i64>>,
) {
    if axis == point.len() {
        let norm2: i64 = point.iter().map(|&x| x * x).sum();
        if norm2 == n {
            // Keep the representative whose first nonzero entry is positive.
            if point.iter().find(|&&x| x != 0).map(|&x| x > 0).unwrap_or(false) {
                out.push(point.clone());
            }
        }
        return;
    }
    for v in -bound..=bound {
        point[axis] = v;
        enumerate_lattice(point, axis + 1, bound, n, out);
    }
}

fn trig_pairs(freqs: &[Vec<i64>], extents: &[Real], m: usize, amp: Real) -> Vec<BasisFn> {
    let mut out = Vec::with_capacity(2 * freqs.len());
    for xi in freqs {
        let mut k = [0.0; 3];
        for i in 0..m {
            k[i] = 2.0 * std::f64::consts::PI * xi[i] as Real / extents[i];
        }
        out.push(BasisFn::Trig {
            k,
            phase: Phase::Cos,
            amp,
        });
        out.push(BasisFn::Trig {
            k,
            phase: Phase::Sin,
            amp,
        });
    }
    out
}

fn spectral_sum_basis(
    frequencies: &[Vec<i64>],
    weights: &[Real],
    extents: &[Real],
    m: usize,
) -> Result<Vec<BasisFn>> {
    if frequencies.is_empty() || frequencies.len() != weights.len() {
        return Err(Error::InvalidModel(
            "spectral sum needs matching, nonempty frequency and weight lists".into(),
        ));
    }
    if frequencies.iter().any(|f| f.len() != m) {
        return Err(Error::InvalidModel(format!(
            "spectral sum frequencies must have {m} components"
        )));
    }
    let mut out = Vec::with_capacity(2 * frequencies.len());
    for (xi, &w) in frequencies.iter().zip(weights.iter()) {
        out.extend(trig_pairs(std::slice::from_ref(xi), extents, m, w));
    }
    Ok(out)
}

fn multi_indices_exact(degree: usize, vars: usize) -> Vec<[u8; 3]> {
    let mut out = Vec::new();
    for a in 0..=degree {
        for b in 0..=(degree - a) {
            if vars == 2 {
                if a + b == degree {
                    out.push([a as u8, b as u8, 0]);
                }
            } else {
                let c = degree - a - b;
                out.push([a as u8, b as u8, c as u8]);
            }
        }
    }
    out
}

fn multi_indices_up_to(truncation: usize, vars: usize) -> Vec<[u8; 3]> {
    let mut out = Vec::new();
    for d in 0..=truncation {
        out.extend(multi_indices_exact(d, vars));
    }
    out
}

fn multinomial(d: usize, alpha: &[u8; 3]) -> Real {
    let mut result = 1.0;
    let mut used = 0u64;
    for &a in alpha {
        for j in 1..=(a as u64) {
            used += 1;
            result *= used as Real / j as Real;
        }
    }
    debug_assert_eq!(used, d as u64);
    result
}

impl CovarianceModel {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Covariance K(p,q) from the finite-rank representation.
    pub fn covariance(&self, p: &Point, q: &Point) -> Real {
        self.basis.iter().map(|h| h.value(p) * h.value(q)).sum()
    }

    /// Mixed derivative of K contracted against tangent directions:
    /// `dirs_p` holds the directions of differentiation in the first slot
    /// (up to order 2) and `dirs_q` in the second.
    pub fn covariance_jet(
        &self,
        domain: &Domain,
        p: &Point,
        q: &Point,
        dirs_p: &[Vec3],
        dirs_q: &[Vec3],
    ) -> Result<Real> {
        if dirs_p.len() > 2 || dirs_q.len() > 2 {
            return Err(Error::InvalidModel(
                "covariance jets are available up to order (2,2)".into(),
            ));
        }
        let mut total = 0.0;
        for h in self.basis.iter() {
            let a = contract_jet(&intrinsic_jet(domain, p, &h.jet(p)), dirs_p);
            let b = contract_jet(&intrinsic_jet(domain, q, &h.jet(q)), dirs_q);
            total += a * b;
        }
        Ok(total)
    }

    /// Per-basis intrinsic jets at a point, the raw material of Gaussian
    /// covariance assembly.
    pub fn basis_jets(&self, domain: &Domain, p: &Point) -> Vec<Jet> {
        self.basis
            .iter()
            .map(|h| intrinsic_jet(domain, p, &h.jet(p)))
            .collect()
    }

    /// Draw a sample path with a seeded deterministic generator.
    pub fn sample(&self, seed: u64) -> FieldFunction {
        self.sample_stream(seed, 0)
    }

    /// Independent stream `stream` of the generator seeded by `seed`; used by
    /// concurrent workers.
    pub fn sample_stream(&self, seed: u64, stream: u64) -> FieldFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let coeffs: Vec<Real> = (0..self.rank())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        FieldFunction::in_basis(coeffs, Arc::clone(&self.basis))
    }

    /// Cameron-Martin inner product of two elements of the basis span.
    pub fn cm_inner(&self, f: &FieldFunction, g: &FieldFunction) -> Result<Real> {
        let cf = f
            .basis_coefficients(&self.basis)
            .ok_or_else(|| Error::InvalidModel("element outside the model span".into()))?;
        let cg = g
            .basis_coefficients(&self.basis)
            .ok_or_else(|| Error::InvalidModel("element outside the model span".into()))?;
        Ok(cf.iter().zip(cg.iter()).map(|(a, b)| a * b).sum())
    }

    /// The n-th Cameron-Martin basis element as a field.
    pub fn basis_element(&self, n: usize) -> FieldFunction {
        let mut coeffs = vec![0.0; self.rank()];
        coeffs[n] = 1.0;
        FieldFunction::in_basis(coeffs, Arc::clone(&self.basis))
    }

    /// Verifies that (X(p), d_pX(v)) has a density on a deterministic
    /// 100-probe sweep.
    pub fn check_joint_density(&self, domain: &Domain) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA551);
        for probe in 0..100 {
            let p = domain.sample_point(&mut rng);
            let v = domain.sample_tangent(&p, &mut rng);
            let mut s_vv = 0.0;
            let mut s_vg = 0.0;
            let mut s_gg = 0.0;
            for h in self.basis.iter() {
                let jet = intrinsic_jet(domain, &p, &h.jet(&p));
                let g = dot(&jet.grad, &v);
                s_vv += jet.value * jet.value;
                s_vg += jet.value * g;
                s_gg += g * g;
            }
            let tr = s_vv + s_gg;
            let det = s_vv * s_gg - s_vg * s_vg;
            let min_eig = (tr - (tr * tr - 4.0 * det).max(0.0).sqrt()) / 2.0;
            if !(min_eig > 1e-10 * tr.max(1e-300)) {
                return Err(Error::InvalidModel(format!(
                    "joint (value, derivative) law is degenerate at probe {probe}: min eigenvalue {min_eig:.3e}"
                )));
            }
        }
        Ok(())
    }
}

/// Intrinsic second-order jet of a scalar function at a point: value,
/// (tangential) gradient, Hessian bilinear form and Laplacian.
#[derive(Debug, Clone, Copy)]
pub struct Jet {
    pub value: Real,
    pub grad: Vec3,
    pub hess: [[Real; 3]; 3],
    pub lap: Real,
}

impl Jet {
    pub fn grad_norm(&self) -> Real {
        norm3(&self.grad)
    }

    pub fn hess_bilinear(&self, u: &Vec3, v: &Vec3) -> Real {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += u[i] * self.hess[i][j] * v[j];
            }
        }
        s
    }

    /// `lap - Hess(nu, nu)` with `nu` the unit gradient direction; the
    /// tangential trace of the Hessian along the level set.
    pub fn delta_tilde(&self) -> Real {
        let n = self.grad_norm();
        if n == 0.0 {
            return Real::NAN;
        }
        let nu = [self.grad[0] / n, self.grad[1] / n, self.grad[2] / n];
        self.lap - self.hess_bilinear(&nu, &nu)
    }

    /// Mean curvature of the level set through this point.
    pub fn mean_curvature(&self) -> Real {
        self.delta_tilde() / self.grad_norm()
    }
}

fn norm3(v: &Vec3) -> Real {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Converts an ambient jet to the intrinsic one of the domain. On flat
/// domains this truncates to the active coordinates; on the sphere the
/// gradient is projected to the tangent plane and the Hessian picks up the
/// Levi-Civita correction of the round metric.
pub fn intrinsic_jet(domain: &Domain, p: &Point, ambient: &AmbientJet) -> Jet {
    match domain.kind {
        DomainKind::FlatTorus | DomainKind::Rectangle => {
            let m = domain.dims;
            let mut grad = [0.0; 3];
            let mut hess = [[0.0; 3]; 3];
            let mut lap = 0.0;
            for i in 0..m {
                grad[i] = ambient.grad[i];
                lap += ambient.hess[i][i];
                for j in 0..m {
                    hess[i][j] = ambient.hess[i][j];
                }
            }
            Jet {
                value: ambient.value,
                grad,
                hess,
                lap,
            }
        }
        DomainKind::Sphere2 => {
            let gp = dot(&ambient.grad, p);
            let mut grad = [0.0; 3];
            for i in 0..3 {
                grad[i] = ambient.grad[i] - gp * p[i];
            }
            // Projected Hessian of the restriction: P (H - (G.p) I) P.
            let mut hmg = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    hmg[i][j] = ambient.hess[i][j] - if i == j { gp } else { 0.0 };
                }
            }
            let mut hp = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for k in 0..3 {
                        let pik = if i == k { 1.0 } else { 0.0 } - p[i] * p[k];
                        s += pik * hmg[k][j];
                    }
                    hp[i][j] = s;
                }
            }
            let mut hess = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for k in 0..3 {
                        let pkj = if k == j { 1.0 } else { 0.0 } - p[k] * p[j];
                        s += hp[i][k] * pkj;
                    }
                    hess[i][j] = s;
                }
            }
            let lap = hess[0][0] + hess[1][1] + hess[2][2];
            Jet {
                value: ambient.value,
                grad,
                hess,
                lap,
            }
        }
    }
}

fn contract_jet(jet: &Jet, dirs: &[Vec3]) -> Real {
    match dirs.len() {
        0 => jet.value,
        1 => dot(&jet.grad, &dirs[0]),
        2 => jet.hess_bilinear(&dirs[0], &dirs[1]),
        _ => unreachable!(),
    }
}

/// A twice-differentiable scalar function with exact jet evaluation: a finite
/// combination of analytic basis functions.
#[derive(Debug, Clone)]
pub struct FieldFunction {
    pub coeffs: Vec<Real>,
    pub basis: Arc<Vec<BasisFn>>,
    /// Single-term fast path when the combination collapses (polynomial
    /// bases of sphere models), rebuilt on construction.
    collapsed: Option<BasisFn>,
}

impl FieldFunction {
    pub fn in_basis(coeffs: Vec<Real>, basis: Arc<Vec<BasisFn>>) -> Self {
        assert_eq!(coeffs.len(), basis.len());
        let collapsed = collapse(&coeffs, &basis);
        FieldFunction {
            coeffs,
            basis,
            collapsed,
        }
    }

    /// Deterministic fixture from explicit (coefficient, basis) terms.
    pub fn from_terms(terms: Vec<(Real, BasisFn)>) -> Self {
        let (coeffs, basis): (Vec<Real>, Vec<BasisFn>) = terms.into_iter().unzip();
        Self::in_basis(coeffs, Arc::new(basis))
    }

    /// Coefficients in the given basis, when this field shares it.
    pub fn basis_coefficients(&self, basis: &Arc<Vec<BasisFn>>) -> Option<&[Real]> {
        if Arc::ptr_eq(&self.basis, basis) || self.basis.len() == basis.len() {
            Some(&self.coeffs)
        } else {
            None
        }
    }

    pub fn value(&self, p: &Point) -> Real {
        if let Some(c) = &self.collapsed {
            return c.value(p);
        }
        self.coeffs
            .iter()
            .zip(self.basis.iter())
            .map(|(c, h)| c * h.value(p))
            .sum()
    }

    pub fn ambient_jet(&self, p: &Point) -> AmbientJet {
        if let Some(c) = &self.collapsed {
            return c.jet(p);
        }
        let mut jet = AmbientJet::zero();
        for (c, h) in self.coeffs.iter().zip(self.basis.iter()) {
            jet.add_scaled(&h.jet(p), *c);
        }
        jet
    }

    /// Exact intrinsic jet (value, gradient, Hessian, Laplacian).
    pub fn jet(&self, domain: &Domain, p: &Point) -> Jet {
        intrinsic_jet(domain, p, &self.ambient_jet(p))
    }

    /// f + t h in a merged basis.
    pub fn add_scaled(&self, other: &FieldFunction, t: Real) -> FieldFunction {
        if Arc::ptr_eq(&self.basis, &other.basis) {
            let coeffs = self
                .coeffs
                .iter()
                .zip(other.coeffs.iter())
                .map(|(a, b)| a + t * b)
                .collect();
            return FieldFunction::in_basis(coeffs, Arc::clone(&self.basis));
        }
        let mut terms: Vec<(Real, BasisFn)> = self
            .coeffs
            .iter()
            .zip(self.basis.iter())
            .map(|(c, h)| (*c, h.clone()))
            .collect();
        terms.extend(
            other
                .coeffs
                .iter()
                .zip(other.basis.iter())
                .map(|(c, h)| (t * c, h.clone())),
        );
        FieldFunction::from_terms(terms)
    }

    pub fn scale(&self, s: Real) -> FieldFunction {
        FieldFunction::in_basis(
            self.coeffs.iter().map(|c| s * c).collect(),
            Arc::clone(&self.basis),
        )
    }
}

fn collapse(coeffs: &[Real], basis: &[BasisFn]) -> Option<BasisFn> {
    if basis.len() < 2 {
        return None;
    }
    if basis.iter().all(|b| matches!(b, BasisFn::Poly(_))) {
        let mut sum = Polynomial::zero();
        for (c, b) in coeffs.iter().zip(basis.iter()) {
            if let BasisFn::Poly(p) = b {
                sum.add_scaled(p, *c);
            }
        }
        sum.compress();
        return Some(BasisFn::Poly(sum));
    }
    let center0 = match &basis[0] {
        BasisFn::PolyGauss { center, .. } => *center,
        _ => return None,
    };
    if basis.iter().all(|b| matches!(b, BasisFn::PolyGauss { center, .. } if *center == center0)) {
        let mut sum = Polynomial::zero();
        for (c, b) in coeffs.iter().zip(basis.iter()) {
            if let BasisFn::PolyGauss { poly, .. } = b {
                sum.add_scaled(poly, *c);
            }
        }
        sum.compress();
        return Some(BasisFn::PolyGauss {
            poly: sum,
            center: center0,
        });
    }
    None
}

/// Common deterministic fixtures used across tests and examples.
pub mod fixtures {
    use super::*;

    /// sin(2 pi x / L) on a flat domain.
    pub fn sine_x(extent: Real) -> FieldFunction {
        FieldFunction::from_terms(vec![(
            1.0,
            BasisFn::Trig {
                k: [2.0 * std::f64::consts::PI / extent, 0.0, 0.0],
                phase: Phase::Sin,
                amp: 1.0,
            },
        )])
    }

    /// x^2 + y^2 - r^2 centered at `center`.
    pub fn circle(center: [Real; 2], r2: Real) -> FieldFunction {
        FieldFunction::from_terms(vec![(
            1.0,
            BasisFn::Poly(Polynomial::new(vec![
                (1.0, [2, 0, 0]),
                (-2.0 * center[0], [1, 0, 0]),
                (1.0, [0, 2, 0]),
                (-2.0 * center[1], [0, 1, 0]),
                (center[0] * center[0] + center[1] * center[1] - r2, [0, 0, 0]),
            ])),
        )])
    }

    /// Constant function.
    pub fn constant(c: Real) -> FieldFunction {
        FieldFunction::from_terms(vec![(1.0, BasisFn::Poly(Polynomial::constant(c)))])
    }

    /// Linear height a.x (ambient) restricted to the sphere.
    pub fn linear(a: Vec3) -> FieldFunction {
        FieldFunction::from_terms(vec![(
            1.0,
            BasisFn::Poly(Polynomial::new(vec![
                (a[0], [1, 0, 0]),
                (a[1], [0, 1, 0]),
                (a[2], [0, 0, 1]),
            ])),
        )])
    }

    /// cos(2 pi x) + cos(2 pi y) on the unit torus.
    pub fn cosine_pair() -> FieldFunction {
        let tau = 2.0 * std::f64::consts::PI;
        FieldFunction::from_terms(vec![
            (
                1.0,
                BasisFn::Trig {
                    k: [tau, 0.0, 0.0],
                    phase: Phase::Cos,
                    amp: 1.0,
                },
            ),
            (
                1.0,
                BasisFn::Trig {
                    k: [0.0, tau, 0.0],
                    phase: Phase::Cos,
                    amp: 1.0,
                },
            ),
        ])
    }

    /// x^2 - y^2 saddle.
    pub fn saddle() -> FieldFunction {
        FieldFunction::from_terms(vec![(
            1.0,
            BasisFn::Poly(Polynomial::new(vec![(1.0, [2, 0, 0]), (-1.0, [0, 2, 0])])),
        )])
    }

    /// General polynomial fixture.
    pub fn poly(terms: Vec<(Real, [u8; 3])>) -> FieldFunction {
        FieldFunction::from_terms(vec![(1.0, BasisFn::Poly(Polynomial::new(terms)))])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_domain;

    fn unit_torus() -> Domain {
        make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 16).unwrap().0
    }

    fn sphere(level: usize) -> Domain {
        make_domain(DomainKind::Sphere2, 2, &[], level).unwrap().0
    }

    #[test]
    fn arithmetic_wave_one_has_four_basis_functions() {
        // Lattice points with |xi|^2 = 1: (1,0) and (0,1) up to sign.
        let model = build_model(&ModelSpec::ArithmeticWave { n: 1 }, &unit_torus()).unwrap();
        assert_eq!(model.rank(), 4);
        let p = [0.3, 0.7, 0.0];
        assert!((model.covariance(&p, &p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn arithmetic_wave_rejects_empty_lattice() {
        // 3 is not a sum of two squares.
        assert!(build_model(&ModelSpec::ArithmeticWave { n: 3 }, &unit_torus()).is_err());
    }

    #[test]
    fn kostlan_covariance_is_power_of_dot_product() {
        let d = sphere(2);
        let model = build_model(&ModelSpec::Kostlan { degree: 5 }, &d).unwrap();
        let x = crate::geometry::normalize(&[0.2, -0.4, 0.9]);
        let y = crate::geometry::normalize(&[-0.6, 0.1, 0.7]);
        let expected = dot(&x, &y).powi(5);
        assert!((model.covariance(&x, &y) - expected).abs() < 1e-12);
    }

    #[test]
    fn linear_field_covariance_is_dot_product() {
        let d = sphere(2);
        let model = build_model(&ModelSpec::LinearField, &d).unwrap();
        let x = crate::geometry::normalize(&[0.2, -0.4, 0.9]);
        let y = crate::geometry::normalize(&[-0.6, 0.1, 0.7]);
        assert!((model.covariance(&x, &y) - dot(&x, &y)).abs() < 1e-14);
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = build_model(&ModelSpec::ArithmeticWave { n: 1 }, &unit_torus()).unwrap();
        let f = model.sample(42);
        let g = model.sample(42);
        assert_eq!(f.coeffs, g.coeffs);
        let h = model.sample(43);
        assert_ne!(f.coeffs, h.coeffs);
        let s = model.sample_stream(42, 1);
        assert_ne!(f.coeffs, s.coeffs);
    }

    #[test]
    fn sample_variance_matches_model() {
        let domain = unit_torus();
        let model = build_model(&ModelSpec::ArithmeticWave { n: 2 }, &domain).unwrap();
        let p = [0.21, 0.55, 0.0];
        let n = 10_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for seed in 0..n {
            let v = model.sample(seed).value(&p);
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as Real;
        let var = sum2 / n as Real - mean * mean;
        // Variance of the sample variance of N(0,1) is about 2/n.
        let se = (2.0 / n as Real).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se, "var {var}");
    }

    #[test]
    fn finite_rank_identity_holds_for_all_models() {
        use rand::Rng;
        let torus = unit_torus();
        let sph = sphere(2);
        let (rect, _) = make_domain(DomainKind::Rectangle, 2, &[2.0, 2.0], 16).unwrap();
        let cases: Vec<(CovarianceModel, Domain)> = vec![
            (
                build_model(&ModelSpec::ArithmeticWave { n: 5 }, &torus).unwrap(),
                torus.clone(),
            ),
            (
                build_model(
                    &ModelSpec::BerryWave {
                        k: 8.0,
                        directions: 16,
                    },
                    &rect,
                )
                .unwrap(),
                rect.clone(),
            ),
            (
                build_model(&ModelSpec::BargmannFock { truncation: 5 }, &rect).unwrap(),
                rect.clone(),
            ),
            (
                build_model(&ModelSpec::SphericalHarmonic { l: 6 }, &sph).unwrap(),
                sph.clone(),
            ),
            (
                build_model(&ModelSpec::AtomDemo { sigma0: 3.0 }, &torus).unwrap(),
                torus.clone(),
            ),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (model, domain) in &cases {
            for _ in 0..100 {
                let p = domain.sample_point(&mut rng);
                let q = domain.sample_point(&mut rng);
                let k1 = model.covariance(&p, &q);
                let k2 = model.covariance(&q, &p);
                assert!((k1 - k2).abs() <= 1e-10, "symmetry");
                let explicit: Real = model
                    .basis
                    .iter()
                    .map(|h| h.value(&p) * h.value(&q))
                    .sum();
                assert!((k1 - explicit).abs() <= 1e-10);
                let _ = rng.gen::<Real>();
            }
        }
    }

    #[test]
    fn jet_exactness_against_finite_differences() {
        let torus = unit_torus();
        let model = build_model(&ModelSpec::ArithmeticWave { n: 5 }, &torus).unwrap();
        let f = model.sample(11);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let h = 1e-5;
        for _ in 0..100 {
            let p = torus.sample_point(&mut rng);
            let jet = f.jet(&torus, &p);
            for i in 0..2 {
                let mut pp = p;
                let mut pm = p;
                pp[i] += h;
                pm[i] -= h;
                let fd = (f.value(&pp) - f.value(&pm)) / (2.0 * h);
                assert!((jet.grad[i] - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn sphere_jets_use_intrinsic_projection() {
        let d = sphere(2);
        // Linear field a.x at p orthogonal to a.
        let a = [0.0, 0.0, 1.0];
        let f = fixtures::linear(a);
        let p = [1.0, 0.0, 0.0];
        let jet = f.jet(&d, &p);
        assert!((jet.value - 0.0).abs() < 1e-15);
        assert!((jet.grad[2] - 1.0).abs() < 1e-15);
        assert!(jet.grad[0].abs() < 1e-15 && jet.grad[1].abs() < 1e-15);
        // Hess(v,v) = -(a.p)|v|^2 = 0 here.
        for i in 0..3 {
            for j in 0..3 {
                assert!(jet.hess[i][j].abs() < 1e-14);
            }
        }
        // Spherical harmonic eigenvalue check: lap Y_l = -l(l+1) Y_l.
        let l = 4;
        let model = build_model(&ModelSpec::SphericalHarmonic { l }, &d).unwrap();
        let y = model.sample(3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = d.sample_point(&mut rng);
            let jet = y.jet(&d, &p);
            let expected = -(l as Real) * (l as Real + 1.0) * jet.value;
            assert!(
                (jet.lap - expected).abs() < 1e-8 * (1.0 + expected.abs()),
                "lap {} vs {}",
                jet.lap,
                expected
            );
        }
    }

    #[test]
    fn covariance_jet_matrix_is_positive_definite_and_centered() {
        let torus = unit_torus();
        let model = build_model(&ModelSpec::ArithmeticWave { n: 1 }, &torus).unwrap();
        let p = [0.37, 0.81, 0.0];
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        // Constant variance kills the cross term.
        let dp = model.covariance_jet(&torus, &p, &p, &[e1], &[]).unwrap();
        assert!(dp.abs() < 1e-12);
        // Gradient covariance is (E_n/2) I with E_n = 4 pi^2 n.
        let g11 = model.covariance_jet(&torus, &p, &p, &[e1], &[e1]).unwrap();
        let g12 = model.covariance_jet(&torus, &p, &p, &[e1], &[e2]).unwrap();
        let expected = 4.0 * std::f64::consts::PI.powi(2) / 2.0;
        assert!((g11 - expected).abs() < 1e-10);
        assert!(g12.abs() < 1e-10);
    }

    #[test]
    fn cm_inner_is_orthonormal_and_reproducing() {
        let torus = unit_torus();
        let model = build_model(&ModelSpec::ArithmeticWave { n: 1 }, &torus).unwrap();
        for i in 0..model.rank() {
            for j in 0..model.rank() {
                let v = model
                    .cm_inner(&model.basis_element(i), &model.basis_element(j))
                    .unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-14);
            }
        }
        // Linearity: <2 h0 + 3 h1, h0> = 2.
        let combo = FieldFunction::in_basis(
            {
                let mut c = vec![0.0; model.rank()];
                c[0] = 2.0;
                c[1] = 3.0;
                c
            },
            Arc::clone(&model.basis),
        );
        let v = model.cm_inner(&combo, &model.basis_element(0)).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        // Reproducing property: <K(p,.), K(q,.)> = K(p,q).
        let p = [0.12, 0.56, 0.0];
        let q = [0.71, 0.33, 0.0];
        let kp = FieldFunction::in_basis(
            model.basis.iter().map(|h| h.value(&p)).collect(),
            Arc::clone(&model.basis),
        );
        let kq = FieldFunction::in_basis(
            model.basis.iter().map(|h| h.value(&q)).collect(),
            Arc::clone(&model.basis),
        );
        let v = model.cm_inner(&kp, &kq).unwrap();
        assert!((v - model.covariance(&p, &q)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_model_is_rejected_by_the_guard() {
        // A single constant basis function has degenerate (value, derivative)
        // pairs everywhere.
        let torus = unit_torus();
        let spec = ModelSpec::SpectralSum {
            frequencies: vec![vec![0, 0]],
            weights: vec![1.0],
        };
        assert!(build_model(&spec, &torus).is_err());
        assert!(build_model_unchecked(&spec, &torus).is_ok());
    }
}
