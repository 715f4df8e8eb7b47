//! First and second variation of the nodal volume, the Cameron-Martin norm
//! of its differential, and the finite-difference oracles that validate
//! them.
//!
//! The directional derivative of V at f along h is
//! `-int_Z h Delta~f / |df|^2 dZ + int_{dZ} h g(n, nu) / |d(f|dM)| d(dZ)`,
//! discretized over the extracted nodal set.

use crate::error::{Error, Result};
use crate::fields::{CovarianceModel, FieldFunction};
use crate::geometry::{cross, dot, normalize, Domain, DomainKind, GridChart, Vec3};
use crate::nodal::{extract_nodal_set, nodal_volume, NodalSet};
use crate::Real;
use rayon::prelude::*;
use serde::Serialize;

/// Outcome of a first-variation evaluation, with the optional
/// finite-difference oracle attached.
#[derive(Debug, Clone, Serialize)]
pub struct VariationReport {
    pub interior_term: Real,
    pub boundary_term: Real,
    /// boundary_term - interior_term.
    pub total: Real,
    pub fd_value: Option<Real>,
    pub fd_gap: Option<Real>,
}

/// Directional derivative of the nodal volume at `f` along `h`.
pub fn first_variation(
    f: &FieldFunction,
    h: &FieldFunction,
    domain: &Domain,
    chart: &GridChart,
) -> Result<VariationReport> {
    let nodal = extract_nodal_set(f, domain, chart)?;
    first_variation_on(&nodal, h)
}

/// Same, reusing an already extracted nodal set.
pub fn first_variation_on(nodal: &NodalSet, h: &FieldFunction) -> Result<VariationReport> {
    let interior_term = nodal.integrate(|e| {
        h.value(&e.point) * e.delta_tilde / (e.grad_norm * e.grad_norm)
    })?;
    let boundary_term = nodal.integrate_boundary(|b| {
        h.value(&b.point) * b.g_n_nu / b.d_restricted_norm
    })?;
    Ok(VariationReport {
        interior_term,
        boundary_term,
        total: boundary_term - interior_term,
        fd_value: None,
        fd_gap: None,
    })
}

/// Richardson-extrapolated central difference of t -> V(f + t h) at 0 with
/// steps eps and eps/2, on a shared chart so discretization bias mostly
/// cancels.
pub fn fd_first_variation(
    f: &FieldFunction,
    h: &FieldFunction,
    domain: &Domain,
    chart: &GridChart,
    eps: Real,
) -> Result<Real> {
    let central = |e: Real| -> Result<Real> {
        let vp = nodal_volume(&f.add_scaled(h, e), domain, chart)?;
        let vm = nodal_volume(&f.add_scaled(h, -e), domain, chart)?;
        Ok((vp - vm) / (2.0 * e))
    };
    let d1 = central(eps)?;
    let d2 = central(eps / 2.0)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Attaches the finite-difference oracle to a report.
pub fn with_fd(
    mut report: VariationReport,
    f: &FieldFunction,
    h: &FieldFunction,
    domain: &Domain,
    chart: &GridChart,
    eps: Real,
) -> Result<VariationReport> {
    let fd = fd_first_variation(f, h, domain, chart, eps)?;
    report.fd_gap = Some((report.total - fd).abs());
    report.fd_value = Some(fd);
    Ok(report)
}

/// Squared Cameron-Martin norm of the differential d_f V under the model's
/// kernel: the discretized double integrals over Z x Z and dZ x dZ plus the
/// interior-boundary cross terms carrying the sign of the duality pairing.
pub fn cm_norm_sq(
    f: &FieldFunction,
    model: &CovarianceModel,
    domain: &Domain,
    chart: &GridChart,
) -> Result<Real> {
    let nodal = extract_nodal_set(f, domain, chart)?;
    cm_norm_sq_on(&nodal, model)
}

pub fn cm_norm_sq_on(nodal: &NodalSet, model: &CovarianceModel) -> Result<Real> {
    // Interior density a(e) = Delta~f / |df|^2, boundary density
    // b(e) = g(n, nu) / |d(f|dM)|.
    let interior: Vec<(crate::geometry::Point, Real)> = nodal
        .elements
        .iter()
        .map(|e| (e.point, e.weight * e.delta_tilde / (e.grad_norm * e.grad_norm)))
        .collect();
    let boundary: Vec<(crate::geometry::Point, Real)> = nodal
        .boundary_elements
        .iter()
        .map(|b| (b.point, b.weight * b.g_n_nu / b.d_restricted_norm))
        .collect();

    let pair_sum = |rows: &[(crate::geometry::Point, Real)],
                    cols: &[(crate::geometry::Point, Real)]|
     -> Real {
        let partials: Vec<Real> = rows
            .par_iter()
            .map(|(p, a)| {
                let mut s = 0.0;
                for (q, b) in cols {
                    s += a * b * model.covariance(p, q);
                }
                s
            })
            .collect();
        partials.iter().sum()
    };

    let ii = pair_sum(&interior, &interior);
    let bb = pair_sum(&boundary, &boundary);
    let ib = pair_sum(&interior, &boundary);
    Ok(ii + bb - 2.0 * ib)
}

/// Second variation of the volume for minimal nodal sets:
/// `int_Z |d psi|^2 - psi^2 (|II|^2 + Ric(nu, nu)) dZ` with
/// `psi = -h / |df|` on Z.
pub fn second_variation_minimal(
    f: &FieldFunction,
    h: &FieldFunction,
    domain: &Domain,
    chart: &GridChart,
    minimality_threshold: Real,
) -> Result<Real> {
    let nodal = extract_nodal_set(f, domain, chart)?;
    let max_h = nodal.max_mean_curvature();
    if max_h > minimality_threshold {
        return Err(Error::NotMinimal(format!(
            "max |H_Z| = {max_h:.3e} exceeds the minimality threshold {minimality_threshold:.3e}"
        )));
    }
    if !nodal.boundary_elements.is_empty() {
        return Err(Error::NotMinimal(
            "second variation requires Z disjoint from the boundary".into(),
        ));
    }
    let psi: Vec<Real> = nodal
        .elements
        .iter()
        .map(|e| -h.value(&e.point) / e.grad_norm)
        .collect();
    let dpsi_sq = tangential_derivative_sq(&nodal, &psi, domain);

    let ricci = match domain.kind {
        DomainKind::Sphere2 => 1.0,
        _ => 0.0,
    };
    let mut total = 0.0;
    for (i, e) in nodal.elements.iter().enumerate() {
        let ii_sq = second_fundamental_form_sq(e, domain);
        total += (dpsi_sq[i] - psi[i] * psi[i] * (ii_sq + ricci)) * e.weight;
    }
    Ok(total)
}

/// Squared Frobenius norm of II = Hess f / |df| restricted to the tangent
/// space of Z.
fn second_fundamental_form_sq(e: &crate::nodal::NodalElement, domain: &Domain) -> Real {
    let tangent = level_tangent_basis(e, domain);
    let mut s = 0.0;
    for ti in &tangent {
        for tj in &tangent {
            let ii = e.jet.hess_bilinear(ti, tj) / e.grad_norm;
            s += ii * ii;
        }
    }
    s
}

/// Orthonormal basis of T Z at the element: vectors orthogonal to the
/// conormal (and to the sphere normal).
fn level_tangent_basis(e: &crate::nodal::NodalElement, domain: &Domain) -> Vec<Vec3> {
    let nu = e.conormal;
    match (domain.kind, domain.dims) {
        (DomainKind::Sphere2, _) => {
            vec![normalize(&cross(&e.point, &nu))]
        }
        (_, 2) => vec![[-nu[1], nu[0], 0.0]],
        (_, _) => {
            // Two orthonormal vectors orthogonal to nu.
            let mut a = [0.0, 0.0, 1.0];
            if nu[2].abs() > 0.9 {
                a = [1.0, 0.0, 0.0];
            }
            let t1 = normalize(&cross(&nu, &a));
            let t2 = cross(&nu, &t1);
            vec![t1, t2]
        }
    }
}

/// Per-element squared norm of the intrinsic tangential derivative of a
/// scalar sampled on the nodal elements: arclength differences along
/// polylines (m = 2), least-squares tangential gradients on triangle fans
/// (m = 3).
fn tangential_derivative_sq(nodal: &NodalSet, psi: &[Real], domain: &Domain) -> Vec<Real> {
    let n = nodal.elements.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    // Neighbors share a crossing id.
    use std::collections::HashMap;
    let mut by_link: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, e) in nodal.elements.iter().enumerate() {
        for &l in &e.links {
            if l != u64::MAX {
                by_link.entry(l).or_default().push(i);
            }
        }
    }
    if nodal.dims == 2 {
        for (i, e) in nodal.elements.iter().enumerate() {
            // The two neighbors across the element's crossings.
            let mut nbrs = Vec::with_capacity(2);
            for &l in &e.links[..2] {
                if l == u64::MAX {
                    continue;
                }
                for &j in by_link.get(&l).into_iter().flatten() {
                    if j != i {
                        nbrs.push(j);
                    }
                }
            }
            let d = match nbrs.len() {
                0 => 0.0,
                1 => {
                    let j = nbrs[0];
                    let ds = domain.geodesic_distance(&e.point, &nodal.elements[j].point);
                    if ds > 0.0 {
                        (psi[j] - psi[i]) / ds
                    } else {
                        0.0
                    }
                }
                _ => {
                    let (a, b) = (nbrs[0], nbrs[1]);
                    let da = domain.geodesic_distance(&e.point, &nodal.elements[a].point);
                    let db = domain.geodesic_distance(&e.point, &nodal.elements[b].point);
                    if da + db > 0.0 {
                        (psi[b] - psi[a]).abs() / (da + db)
                    } else {
                        0.0
                    }
                }
            };
            out[i] = d * d;
        }
    } else {
        // m = 3: fit psi ~ psi0 + g . (q - p) over the fan of neighbors,
        // with g constrained to the tangent plane.
        for (i, e) in nodal.elements.iter().enumerate() {
            let mut nbrs: Vec<usize> = Vec::new();
            for &l in &e.links {
                if l == u64::MAX {
                    continue;
                }
                for &j in by_link.get(&l).into_iter().flatten() {
                    if j != i && !nbrs.contains(&j) {
                        nbrs.push(j);
                    }
                }
            }
            if nbrs.len() < 2 {
                continue;
            }
            let basis = level_tangent_basis(e, domain);
            // Normal equations in the 2-D tangent chart.
            let mut ata = [[0.0; 2]; 2];
            let mut atb = [0.0; 2];
            for &j in &nbrs {
                let q = nodal.elements[j].point;
                let d = domain.displacement(&e.point, &q);
                let u = [dot(&d, &basis[0]), dot(&d, &basis[1])];
                let dv = psi[j] - psi[i];
                for r in 0..2 {
                    atb[r] += u[r] * dv;
                    for c in 0..2 {
                        ata[r][c] += u[r] * u[c];
                    }
                }
            }
            let det = ata[0][0] * ata[1][1] - ata[0][1] * ata[1][0];
            if det.abs() < 1e-30 {
                continue;
            }
            let gx = (atb[0] * ata[1][1] - atb[1] * ata[0][1]) / det;
            let gy = (atb[1] * ata[0][0] - atb[0] * ata[1][0]) / det;
            out[i] = gx * gx + gy * gy;
        }
    }
    out
}

/// Second central difference of t -> V(f + t h) at 0.
pub fn fd_second_variation(
    f: &FieldFunction,
    h: &FieldFunction,
    domain: &Domain,
    chart: &GridChart,
    eps: Real,
) -> Result<Real> {
    let v0 = nodal_volume(f, domain, chart)?;
    let vp = nodal_volume(&f.add_scaled(h, eps), domain, chart)?;
    let vm = nodal_volume(&f.add_scaled(h, -eps), domain, chart)?;
    Ok((vp - 2.0 * v0 + vm) / (eps * eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{build_model, fixtures, ModelSpec};
    use crate::geometry::make_domain;
    use std::f64::consts::PI;

    #[test]
    fn geodesic_nodal_lines_have_zero_variation() {
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 64).unwrap();
        let f = fixtures::sine_x(1.0);
        let h = fixtures::cosine_pair();
        let report = first_variation(&f, &h, &domain, &chart).unwrap();
        assert!(report.total.abs() < 1e-12, "total {}", report.total);
        assert_eq!(report.boundary_term, 0.0);
    }

    #[test]
    fn shrinking_circle_matches_the_analytic_rate() {
        // V(f + t) = 2 pi sqrt(1 - t) for f = x^2 + y^2 - 1, so the
        // derivative at t = 0 is -pi.
        let (domain, chart) = make_domain(DomainKind::Rectangle, 2, &[4.0, 4.0], 512).unwrap();
        let f = fixtures::circle([2.0, 2.0], 1.0);
        let h = fixtures::constant(1.0);
        let report = first_variation(&f, &h, &domain, &chart).unwrap();
        assert!(
            (report.total + PI).abs() < 1e-3,
            "total {} vs -pi",
            report.total
        );
        assert!(report.interior_term > 0.0 && report.total < 0.0);
        // A tighter box keeps the crossing-pattern noise of the difference
        // quotient below the oracle tolerance.
        let (domain, chart) = make_domain(DomainKind::Rectangle, 2, &[2.5, 2.5], 512).unwrap();
        let f = fixtures::circle([1.25, 1.25], 1.0);
        let fd = fd_first_variation(&f, &h, &domain, &chart, 1e-3).unwrap();
        assert!((fd + PI).abs() < 1e-4, "fd {fd} vs -pi");
    }

    #[test]
    fn fd_oracle_is_linear_in_h() {
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 96).unwrap();
        let model = build_model(&ModelSpec::ArithmeticWave { n: 2 }, &domain).unwrap();
        let f = model.sample(5);
        let h = model.sample(99);
        let d1 = fd_first_variation(&f, &h, &domain, &chart, 1e-3).unwrap();
        let d2 = fd_first_variation(&f, &h.scale(2.0), &domain, &chart, 5e-4).unwrap();
        assert!(
            (d2 - 2.0 * d1).abs() < 2e-3 * (1.0 + d1.abs()),
            "{d2} vs {}",
            2.0 * d1
        );
    }

    #[test]
    fn formula_is_exactly_linear_in_h() {
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 64).unwrap();
        let model = build_model(&ModelSpec::ArithmeticWave { n: 5 }, &domain).unwrap();
        let f = model.sample(1);
        let h1 = model.basis_element(0);
        let h2 = model.basis_element(3);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
        let a = first_variation_on(&nodal, &h1).unwrap().total;
        let b = first_variation_on(&nodal, &h2).unwrap().total;
        let combo = h1.scale(2.5).add_scaled(&h2, -1.25);
        let c = first_variation_on(&nodal, &combo).unwrap().total;
        let expected = 2.5 * a - 1.25 * b;
        assert!(
            (c - expected).abs() <= 1e-10 * (1.0 + expected.abs()),
            "{c} vs {expected}"
        );
    }

    #[test]
    fn boundary_term_vanishes_for_orthogonal_intersections() {
        // x = const meets the horizontal faces orthogonally: g(n, nu) = 0.
        let (domain, chart) = make_domain(DomainKind::Rectangle, 2, &[2.0, 1.0], 64).unwrap();
        let f = fixtures::poly(vec![(1.0, [1, 0, 0]), (-0.73, [0, 0, 0])]);
        let h = fixtures::constant(1.0);
        let report = first_variation(&f, &h, &domain, &chart).unwrap();
        assert_eq!(report.boundary_term, 0.0);
        assert!(report.total.abs() < 1e-12);
    }

    #[test]
    fn cm_norm_matches_basis_expansion() {
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 96).unwrap();
        let model = build_model(&ModelSpec::ArithmeticWave { n: 5 }, &domain).unwrap();
        let f = model.sample(7);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
        let double_sum = cm_norm_sq_on(&nodal, &model).unwrap();
        let mut expansion = 0.0;
        for n in 0..model.rank() {
            let pairing = first_variation_on(&nodal, &model.basis_element(n))
                .unwrap()
                .total;
            expansion += pairing * pairing;
        }
        assert!(
            (double_sum - expansion).abs() <= 1e-6 * expansion.abs().max(1e-12),
            "double sum {double_sum} vs expansion {expansion}"
        );
    }

    #[test]
    fn cm_norm_scales_linearly_with_the_kernel() {
        // Replacing K by c K multiplies the double sum by c: realized by
        // scaling every basis function by sqrt(c).
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 48).unwrap();
        let model = build_model(&ModelSpec::ArithmeticWave { n: 1 }, &domain).unwrap();
        let mut scaled = model.clone();
        let scaled_basis: Vec<_> = model
            .basis
            .iter()
            .map(|b| match b {
                crate::fields::basis::BasisFn::Trig { k, phase, amp } => {
                    crate::fields::basis::BasisFn::Trig {
                        k: *k,
                        phase: *phase,
                        amp: amp * 2.0,
                    }
                }
                other => other.clone(),
            })
            .collect();
        scaled.basis = std::sync::Arc::new(scaled_basis);
        let f = model.sample(3);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
        let v1 = cm_norm_sq_on(&nodal, &model).unwrap();
        let v4 = cm_norm_sq_on(&nodal, &scaled).unwrap();
        assert!((v4 - 4.0 * v1).abs() <= 1e-10 * v1.abs());
    }

    #[test]
    fn cm_norm_of_empty_nodal_set_is_zero() {
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 16).unwrap();
        let model = build_model(&ModelSpec::AtomDemo { sigma0: 3.0 }, &domain).unwrap();
        let f = fixtures::cosine_pair().add_scaled(&fixtures::constant(10.0), 1.0);
        let v = cm_norm_sq(&f, &model, &domain, &chart).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn second_variation_on_the_minimal_torus_fixture() {
        // f = sin(2 pi x), h = 2 pi sin(2 pi y): psi = -sin(2 pi y) on the
        // two geodesic lines, giving int |d psi|^2 = 4 pi^2.
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 256).unwrap();
        let f = fixtures::sine_x(1.0);
        let tau = 2.0 * PI;
        let h = FieldFunction::from_terms(vec![(
            tau,
            crate::fields::basis::BasisFn::Trig {
                k: [0.0, tau, 0.0],
                phase: crate::fields::basis::Phase::Sin,
                amp: 1.0,
            },
        )]);
        let v = second_variation_minimal(&f, &h, &domain, &chart, 1e-3).unwrap();
        let expected = 4.0 * PI * PI;
        assert!(
            ((v - expected) / expected).abs() < 5e-3,
            "second variation {v} vs {expected}"
        );
        // Constant h: psi constant, flat geodesics, zero.
        let v0 =
            second_variation_minimal(&f, &fixtures::constant(1.0), &domain, &chart, 1e-3).unwrap();
        assert!(v0.abs() < 1e-10, "constant direction gives {v0}");
    }

    #[test]
    fn second_variation_rejects_non_minimal_sets() {
        let (domain, chart) = make_domain(DomainKind::Rectangle, 2, &[4.0, 4.0], 64).unwrap();
        let f = fixtures::circle([2.0, 2.0], 1.0);
        let err = second_variation_minimal(&f, &fixtures::constant(1.0), &domain, &chart, 1e-3);
        assert!(matches!(err, Err(Error::NotMinimal(_))));
    }
}
