//! Discretized nodal sets: extraction of Z = f^{-1}(0), its (m-1)-volume,
//! boundary trace, connected components and weighted integrals.
//!
//! Crossings are located on grid edges by bisection plus one Newton step;
//! per-element jets are evaluated at centroids Newton-projected back onto Z.

use crate::error::{Error, Result};
use crate::fields::{FieldFunction, Jet};
use crate::geometry::{cross, dot, norm, normalize, Domain, DomainKind, Face, GridChart, Point, Vec3};
use crate::Real;
use std::collections::HashMap;

/// One interior element of the discretized nodal set: a polyline segment
/// (m = 2) or a triangle (m = 3) with its measure weight and the field jet
/// at the projected representative point.
#[derive(Debug, Clone)]
pub struct NodalElement {
    pub point: Point,
    /// Local H^{m-1} measure.
    pub weight: Real,
    /// Unit conormal grad f / |grad f|.
    pub conormal: Vec3,
    pub grad_norm: Real,
    pub lap: Real,
    pub hess_nu_nu: Real,
    /// lap - Hess(nu, nu).
    pub delta_tilde: Real,
    pub jet: Jet,
    /// Crossing identifiers shared with neighboring elements (adjacency).
    pub links: [u64; 3],
}

/// One element of the boundary trace Z on the domain boundary.
#[derive(Debug, Clone)]
pub struct BoundaryElement {
    pub point: Point,
    /// Local H^{m-2} measure (counting measure when m = 2).
    pub weight: Real,
    /// g(n, nu) with n the outward normal of the face.
    pub g_n_nu: Real,
    /// Norm of the differential of the restriction f|boundary.
    pub d_restricted_norm: Real,
}

#[derive(Debug, Clone)]
pub struct NodalSet {
    pub elements: Vec<NodalElement>,
    pub boundary_elements: Vec<BoundaryElement>,
    pub dims: usize,
    /// max |f| over the chart nodes; reference scale for the tolerances.
    pub field_scale: Real,
}

const GRAD_FLOOR_REL: Real = 1e-6;
const PROJECTION_TOL_REL: Real = 1e-9;

impl NodalSet {
    /// Sum of element weights, approximating H^{m-1}(Z).
    pub fn volume(&self) -> Real {
        self.elements.iter().map(|e| e.weight).sum()
    }

    /// Number of connected components of the adjacency graph.
    pub fn component_count(&self) -> usize {
        let mut ids: Vec<u64> = self
            .elements
            .iter()
            .flat_map(|e| e.links.iter().copied())
            .filter(|&l| l != u64::MAX)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let index: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let mut uf = UnionFind::new(ids.len());
        for e in &self.elements {
            let linked: Vec<usize> = e
                .links
                .iter()
                .filter(|&&l| l != u64::MAX)
                .map(|l| index[l])
                .collect();
            for w in linked.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        let mut roots: Vec<usize> = (0..ids.len()).map(|i| uf.find(i)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// Weighted sum of a per-element integrand over the interior elements.
    pub fn integrate(&self, integrand: impl Fn(&NodalElement) -> Real) -> Result<Real> {
        let mut total = 0.0;
        for e in &self.elements {
            let v = integrand(e);
            if !v.is_finite() {
                return Err(Error::IntegrandFailure(format!(
                    "non-finite integrand at {:?}",
                    e.point
                )));
            }
            total += v * e.weight;
        }
        Ok(total)
    }

    pub fn integrate_boundary(&self, integrand: impl Fn(&BoundaryElement) -> Real) -> Result<Real> {
        let mut total = 0.0;
        for e in &self.boundary_elements {
            let v = integrand(e);
            if !v.is_finite() {
                return Err(Error::IntegrandFailure(format!(
                    "non-finite boundary integrand at {:?}",
                    e.point
                )));
            }
            total += v * e.weight;
        }
        Ok(total)
    }

    /// Maximum |mean curvature| over the elements.
    pub fn max_mean_curvature(&self) -> Real {
        self.elements
            .iter()
            .map(|e| (e.delta_tilde / e.grad_norm).abs())
            .fold(0.0, Real::max)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Extracts the discretized nodal set of `f` over the chart.
pub fn extract_nodal_set(
    f: &FieldFunction,
    domain: &Domain,
    chart: &GridChart,
) -> Result<NodalSet> {
    match domain.kind {
        DomainKind::FlatTorus | DomainKind::Rectangle => {
            if domain.dims == 2 {
                extract_flat_2d(f, domain, chart)
            } else {
                extract_flat_3d(f, domain, chart)
            }
        }
        DomainKind::Sphere2 => extract_sphere(f, domain),
    }
}

/// Nodal volume of `f` on the chart: extraction followed by the weight sum.
pub fn nodal_volume(f: &FieldFunction, domain: &Domain, chart: &GridChart) -> Result<Real> {
    Ok(extract_nodal_set(f, domain, chart)?.volume())
}

// ---------------------------------------------------------------------------
// Shared refinement helpers
// ---------------------------------------------------------------------------

/// Parameter of the root of f along the straight segment [a, b], by
/// bisection plus one Newton polish. `fa` must have the opposite sign of
/// `fb`. Returning the parameter keeps cached crossings consistent across
/// cells on wrapped charts.
fn refine_edge_param(f: &FieldFunction, a: &Point, b: &Point, fa: Real) -> Real {
    let dir = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let eval = |t: Real| -> Point { [a[0] + t * dir[0], a[1] + t * dir[1], a[2] + t * dir[2]] };
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut flo = fa;
    for _ in 0..46 {
        let mid = 0.5 * (lo + hi);
        let fm = f.value(&eval(mid));
        if fm == 0.0 {
            return mid;
        }
        if (flo > 0.0) == (fm > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    let p = eval(t);
    let jet = f.ambient_jet(&p);
    let slope = jet.grad[0] * dir[0] + jet.grad[1] * dir[1] + jet.grad[2] * dir[2];
    if slope != 0.0 {
        let step = jet.value / slope;
        if (t - step) > 0.0 && (t - step) < 1.0 {
            t -= step;
        }
    }
    t
}

fn refine_edge_crossing(f: &FieldFunction, a: &Point, b: &Point, fa: Real) -> Point {
    let t = refine_edge_param(f, a, b, fa);
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// Canonicalizes crossing identifiers through a quantized-point map, so
/// crossings that coincide geometrically (for instance a nodal set passing
/// exactly through a mesh vertex or grid node) share one identifier.
struct PointIds {
    map: HashMap<[i64; 3], u64>,
}

impl PointIds {
    fn new() -> Self {
        PointIds {
            map: HashMap::new(),
        }
    }

    fn canon(&mut self, domain: &Domain, p: &Point, candidate: u64) -> u64 {
        let wrapped = domain.wrap(p);
        let mut q = [0i64; 3];
        for i in 0..3 {
            let extent = if i < domain.dims && !domain.extents.is_empty() {
                domain.extents[i]
            } else {
                1.0
            };
            let cell = (wrapped[i] / extent * 1e9).round() as i64;
            q[i] = if domain.kind == DomainKind::FlatTorus {
                cell.rem_euclid(1_000_000_000)
            } else {
                cell
            };
        }
        *self.map.entry(q).or_insert(candidate)
    }
}

/// Newton-project a point onto the zero set along the gradient until
/// |f| <= tol; returns the point unchanged if the gradient degenerates.
fn project_to_zero(f: &FieldFunction, domain: &Domain, p: &Point, tol: Real) -> Point {
    let mut x = *p;
    for _ in 0..12 {
        let jet = f.jet(domain, &x);
        if jet.value.abs() <= tol {
            return x;
        }
        let g2 = dot(&jet.grad, &jet.grad);
        if g2 == 0.0 {
            return x;
        }
        let s = jet.value / g2;
        for i in 0..3 {
            x[i] -= s * jet.grad[i];
        }
        if domain.kind == DomainKind::Sphere2 {
            x = normalize(&x);
        }
    }
    x
}

fn build_element(
    f: &FieldFunction,
    domain: &Domain,
    centroid: &Point,
    weight: Real,
    links: [u64; 3],
    scale: Real,
) -> Result<NodalElement> {
    let p = project_to_zero(f, domain, centroid, PROJECTION_TOL_REL * scale);
    let jet = f.jet(domain, &p);
    let gn = jet.grad_norm();
    if gn < GRAD_FLOOR_REL * scale {
        return Err(Error::RegularityViolation(format!(
            "|grad f| = {gn:.3e} below the floor {:.3e} at {:?}",
            GRAD_FLOOR_REL * scale,
            p
        )));
    }
    let nu = [jet.grad[0] / gn, jet.grad[1] / gn, jet.grad[2] / gn];
    let hnn = jet.hess_bilinear(&nu, &nu);
    Ok(NodalElement {
        point: domain.wrap(&p),
        weight,
        conormal: nu,
        grad_norm: gn,
        lap: jet.lap,
        hess_nu_nu: hnn,
        delta_tilde: jet.lap - hnn,
        jet,
        links,
    })
}

// ---------------------------------------------------------------------------
// 2-D marching squares over a chart rectangle (also used for cube faces)
// ---------------------------------------------------------------------------

/// Chart segment produced by marching squares: endpoints in chart
/// coordinates plus the global ids of the crossing edges.
struct ChartSegment {
    a: [Real; 2],
    b: [Real; 2],
    ea: u64,
    eb: u64,
}

/// Runs marching squares on an (nu x nv)-cell chart. `value` is the field in
/// chart coordinates; `wrap` makes both axes periodic. The saddle ambiguity
/// is resolved by the sign of the exactly evaluated cell-center value.
/// `root_on_edge` returns the crossing parameter in [0, 1] along the edge;
/// parameters are cached per global edge so shared crossings agree exactly
/// across cells, including across the periodic seam.
fn marching_squares(
    nu: usize,
    nv: usize,
    hu: Real,
    hv: Real,
    wrap: bool,
    value: &impl Fn(Real, Real) -> Real,
    root_on_edge: &impl Fn([Real; 2], [Real; 2], Real) -> Real,
) -> (Vec<ChartSegment>, Real) {
    let nodes_u = if wrap { nu } else { nu + 1 };
    let nodes_v = if wrap { nv } else { nv + 1 };
    let mut values = vec![0.0; nodes_u * nodes_v];
    let mut scale: Real = 0.0;
    for j in 0..nodes_v {
        for i in 0..nodes_u {
            let v = value(i as Real * hu, j as Real * hv);
            scale = scale.max(v.abs());
            values[j * nodes_u + i] = v;
        }
    }
    let node = |i: usize, j: usize| -> Real {
        let iw = if wrap { i % nu } else { i };
        let jw = if wrap { j % nv } else { j };
        values[jw * nodes_u + iw]
    };
    // Global edge ids from wrapped node indices: 2*(node) for the +u edge,
    // 2*(node)+1 for the +v edge.
    let edge_id = |i: usize, j: usize, dir: usize| -> u64 {
        let iw = if wrap { i % nu } else { i } as u64;
        let jw = if wrap { j % nv } else { j } as u64;
        2 * (jw * nodes_u as u64 + iw) + dir as u64
    };
    let positive = |x: Real| x > 0.0;

    let mut segments = Vec::new();
    let mut param_cache: HashMap<u64, Real> = HashMap::new();
    for j in 0..nv {
        for i in 0..nu {
            let c = [
                node(i, j),
                node(i + 1, j),
                node(i + 1, j + 1),
                node(i, j + 1),
            ];
            let s = [positive(c[0]), positive(c[1]), positive(c[2]), positive(c[3])];
            if s.iter().all(|&x| x == s[0]) {
                continue;
            }
            let corner = |k: usize| -> [Real; 2] {
                let (di, dj) = [(0, 0), (1, 0), (1, 1), (0, 1)][k];
                [(i + di) as Real * hu, (j + dj) as Real * hv]
            };
            // Edge k joins corner k and corner (k+1)%4; edges 0 and 2 run in
            // +u, edges 1 and 3 in +v, so the cached parameter orientation is
            // consistent across cells.
            let ids = [
                edge_id(i, j, 0),
                edge_id(i + 1, j, 1),
                edge_id(i, j + 1, 0),
                edge_id(i, j, 1),
            ];
            let oriented: [(usize, usize); 4] = [(0, 1), (1, 2), (3, 2), (0, 3)];
            let mut cross_pt = |k: usize| -> [Real; 2] {
                let (ka, kb) = oriented[k];
                let t = *param_cache
                    .entry(ids[k])
                    .or_insert_with(|| root_on_edge(corner(ka), corner(kb), c[ka]));
                let (pa, pb) = (corner(ka), corner(kb));
                [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
            };
            let mut emit = |ka: usize, kb: usize, segments: &mut Vec<ChartSegment>| {
                let a = cross_pt(ka);
                let b = cross_pt(kb);
                segments.push(ChartSegment {
                    a,
                    b,
                    ea: ids[ka],
                    eb: ids[kb],
                });
            };
            let crossed: Vec<usize> = (0..4).filter(|&k| s[k] != s[(k + 1) % 4]).collect();
            match crossed.len() {
                2 => emit(crossed[0], crossed[1], &mut segments),
                4 => {
                    // Saddle: the exact center value decides the pairing.
                    let center = value((i as Real + 0.5) * hu, (j as Real + 0.5) * hv);
                    if positive(center) == s[0] {
                        // Corners 1 and 3 are isolated.
                        emit(0, 1, &mut segments);
                        emit(2, 3, &mut segments);
                    } else {
                        emit(3, 0, &mut segments);
                        emit(1, 2, &mut segments);
                    }
                }
                _ => unreachable!("marching squares cell with odd crossing count"),
            }
        }
    }
    (segments, scale)
}

fn extract_flat_2d(f: &FieldFunction, domain: &Domain, chart: &GridChart) -> Result<NodalSet> {
    let wrap = domain.kind == DomainKind::FlatTorus;
    let (nu, nv) = (chart.resolution[0], chart.resolution[1]);
    let (hu, hv) = (chart.spacing[0], chart.spacing[1]);
    let value = |u: Real, v: Real| f.value(&[u, v, 0.0]);
    let root = |a: [Real; 2], b: [Real; 2], fa: Real| -> Real {
        refine_edge_param(f, &[a[0], a[1], 0.0], &[b[0], b[1], 0.0], fa)
    };
    let (segments, scale) = marching_squares(nu, nv, hu, hv, wrap, &value, &root);
    if scale == 0.0 {
        return Err(Error::RegularityViolation(
            "field vanishes identically on the chart".into(),
        ));
    }
    let mut ids = PointIds::new();
    let mut elements = Vec::with_capacity(segments.len());
    for seg in &segments {
        let (dx, dy) = (seg.b[0] - seg.a[0], seg.b[1] - seg.a[1]);
        let weight = (dx * dx + dy * dy).sqrt();
        if weight == 0.0 {
            continue;
        }
        let pa = [seg.a[0], seg.a[1], 0.0];
        let pb = [seg.b[0], seg.b[1], 0.0];
        let ea = ids.canon(domain, &pa, seg.ea);
        let eb = ids.canon(domain, &pb, seg.eb);
        let mid = [
            0.5 * (seg.a[0] + seg.b[0]),
            0.5 * (seg.a[1] + seg.b[1]),
            0.0,
        ];
        elements.push(build_element(
            f,
            domain,
            &mid,
            weight,
            [ea, eb, u64::MAX],
            scale,
        )?);
    }
    let boundary_elements = if domain.has_boundary() {
        extract_boundary_2d(f, domain, chart, scale)?
    } else {
        Vec::new()
    };
    Ok(NodalSet {
        elements,
        boundary_elements,
        dims: 2,
        field_scale: scale,
    })
}

/// Boundary trace for a 2-D rectangle: zeros of f restricted to the four
/// open faces, weighted by the counting measure.
fn extract_boundary_2d(
    f: &FieldFunction,
    domain: &Domain,
    chart: &GridChart,
    scale: Real,
) -> Result<Vec<BoundaryElement>> {
    let mut out = Vec::new();
    for face in domain.faces() {
        let t_axis = face.tangent_axes(2)[0];
        let res = chart.resolution[t_axis];
        let h = chart.spacing[t_axis];
        let embed = |u: Real| -> Point {
            let mut p = [0.0; 3];
            p[face.axis] = if face.upper { domain.extents[face.axis] } else { 0.0 };
            p[t_axis] = u;
            p
        };
        let mut prev = f.value(&embed(0.0));
        for k in 0..res {
            let u1 = (k + 1) as Real * h;
            let cur = f.value(&embed(u1));
            if (prev > 0.0) != (cur > 0.0) {
                let p = refine_edge_crossing(f, &embed(k as Real * h), &embed(u1), prev);
                // Skip corner neighborhoods: boundary integrals are taken
                // over open faces only.
                let u = p[t_axis];
                if u > 1e-9 && u < domain.extents[t_axis] - 1e-9 {
                    out.push(boundary_element(f, domain, &face, &p, 1.0, scale)?);
                }
            }
            prev = cur;
        }
    }
    Ok(out)
}

fn boundary_element(
    f: &FieldFunction,
    domain: &Domain,
    face: &Face,
    p: &Point,
    weight: Real,
    scale: Real,
) -> Result<BoundaryElement> {
    let jet = f.jet(domain, p);
    let gn = jet.grad_norm();
    if gn < GRAD_FLOOR_REL * scale {
        return Err(Error::RegularityViolation(format!(
            "boundary gradient below floor at {p:?}"
        )));
    }
    let nu = [jet.grad[0] / gn, jet.grad[1] / gn, jet.grad[2] / gn];
    let n = face.outward_normal();
    let tangential: Real = face
        .tangent_axes(domain.dims)
        .iter()
        .map(|&a| jet.grad[a] * jet.grad[a])
        .sum::<Real>()
        .sqrt();
    if tangential < GRAD_FLOOR_REL * scale {
        return Err(Error::RegularityViolation(format!(
            "restricted differential below floor at {p:?}"
        )));
    }
    Ok(BoundaryElement {
        point: *p,
        weight,
        g_n_nu: dot(&n, &nu),
        d_restricted_norm: tangential,
    })
}

// ---------------------------------------------------------------------------
// 3-D marching tetrahedra
// ---------------------------------------------------------------------------

/// Kuhn decomposition of the unit cube into six tetrahedra around the main
/// diagonal (corner bit patterns).
const CUBE_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

fn extract_flat_3d(f: &FieldFunction, domain: &Domain, chart: &GridChart) -> Result<NodalSet> {
    let wrap = domain.kind == DomainKind::FlatTorus;
    let res = [
        chart.resolution[0],
        chart.resolution[1],
        chart.resolution[2],
    ];
    let h = [chart.spacing[0], chart.spacing[1], chart.spacing[2]];
    let nodes = [
        if wrap { res[0] } else { res[0] + 1 },
        if wrap { res[1] } else { res[1] + 1 },
        if wrap { res[2] } else { res[2] + 1 },
    ];
    let mut values = vec![0.0; nodes[0] * nodes[1] * nodes[2]];
    let mut scale: Real = 0.0;
    for l in 0..nodes[2] {
        for j in 0..nodes[1] {
            for i in 0..nodes[0] {
                let v = f.value(&[i as Real * h[0], j as Real * h[1], l as Real * h[2]]);
                scale = scale.max(v.abs());
                values[(l * nodes[1] + j) * nodes[0] + i] = v;
            }
        }
    }
    if scale == 0.0 {
        return Err(Error::RegularityViolation(
            "field vanishes identically on the chart".into(),
        ));
    }
    let node_id = |i: usize, j: usize, l: usize| -> u64 {
        let iw = if wrap { i % res[0] } else { i };
        let jw = if wrap { j % res[1] } else { j };
        let lw = if wrap { l % res[2] } else { l };
        ((lw * nodes[1] + jw) * nodes[0] + iw) as u64
    };
    let node_val = |i: usize, j: usize, l: usize| -> Real {
        let iw = if wrap { i % res[0] } else { i };
        let jw = if wrap { j % res[1] } else { j };
        let lw = if wrap { l % res[2] } else { l };
        values[(lw * nodes[1] + jw) * nodes[0] + iw]
    };

    let mut crossings: HashMap<(u64, u64), (Real, u64)> = HashMap::new();
    let mut ids = PointIds::new();
    let mut elements: Vec<NodalElement> = Vec::new();
    for l in 0..res[2] {
        for j in 0..res[1] {
            for i in 0..res[0] {
                let corner = |k: usize| -> (Point, Real, u64) {
                    let (di, dj, dl) = (k & 1, (k >> 1) & 1, (k >> 2) & 1);
                    let p = [
                        (i + di) as Real * h[0],
                        (j + dj) as Real * h[1],
                        (l + dl) as Real * h[2],
                    ];
                    (p, node_val(i + di, j + dj, l + dl), node_id(i + di, j + dj, l + dl))
                };
                let cube: Vec<(Point, Real, u64)> = (0..8).map(corner).collect();
                if cube.iter().all(|c| c.1 > 0.0) || cube.iter().all(|c| c.1 <= 0.0) {
                    continue;
                }
                for tet in &CUBE_TETS {
                    process_tet(
                        f,
                        domain,
                        &[cube[tet[0]].clone(), cube[tet[1]].clone(), cube[tet[2]].clone(), cube[tet[3]].clone()],
                        &mut crossings,
                        &mut ids,
                        &mut elements,
                        scale,
                    )?;
                }
            }
        }
    }
    let boundary_elements = if domain.has_boundary() {
        extract_boundary_3d(f, domain, chart, scale)?
    } else {
        Vec::new()
    };
    Ok(NodalSet {
        elements,
        boundary_elements,
        dims: 3,
        field_scale: scale,
    })
}

fn process_tet(
    f: &FieldFunction,
    domain: &Domain,
    corners: &[(Point, Real, u64); 4],
    crossings: &mut HashMap<(u64, u64), (Real, u64)>,
    ids: &mut PointIds,
    elements: &mut Vec<NodalElement>,
    scale: Real,
) -> Result<()> {
    let pos: Vec<usize> = (0..4).filter(|&k| corners[k].1 > 0.0).collect();
    if pos.is_empty() || pos.len() == 4 {
        return Ok(());
    }
    let neg: Vec<usize> = (0..4).filter(|&k| !(corners[k].1 > 0.0)).collect();
    // Cached parameters are oriented from the smaller to the larger global
    // node id, so cells across the periodic seam reconstruct consistently.
    let mut crossing = |a: usize, b: usize| -> (Point, u64) {
        let (ia, ib) = (corners[a].2, corners[b].2);
        let (lo, hi) = if ia <= ib { (a, b) } else { (b, a) };
        let key = (ia.min(ib), ia.max(ib));
        let next = crossings.len() as u64;
        let (t, id) = *crossings.entry(key).or_insert_with(|| {
            (
                refine_edge_param(f, &corners[lo].0, &corners[hi].0, corners[lo].1),
                next,
            )
        });
        let (pa, pb) = (&corners[lo].0, &corners[hi].0);
        let p = [
            pa[0] + t * (pb[0] - pa[0]),
            pa[1] + t * (pb[1] - pa[1]),
            pa[2] + t * (pb[2] - pa[2]),
        ];
        (p, id)
    };
    let tri = |p1: (Point, u64), p2: (Point, u64), p3: (Point, u64),
                   ids: &mut PointIds,
                   elements: &mut Vec<NodalElement>|
     -> Result<()> {
        let e1 = [p2.0[0] - p1.0[0], p2.0[1] - p1.0[1], p2.0[2] - p1.0[2]];
        let e2 = [p3.0[0] - p1.0[0], p3.0[1] - p1.0[1], p3.0[2] - p1.0[2]];
        let area = norm(&cross(&e1, &e2)) / 2.0;
        if area == 0.0 {
            return Ok(());
        }
        let centroid = [
            (p1.0[0] + p2.0[0] + p3.0[0]) / 3.0,
            (p1.0[1] + p2.0[1] + p3.0[1]) / 3.0,
            (p1.0[2] + p2.0[2] + p3.0[2]) / 3.0,
        ];
        let links = [
            ids.canon(domain, &p1.0, p1.1),
            ids.canon(domain, &p2.0, p2.1),
            ids.canon(domain, &p3.0, p3.1),
        ];
        elements.push(build_element(f, domain, &centroid, area, links, scale)?);
        Ok(())
    };
    match pos.len() {
        1 | 3 => {
            let lone = if pos.len() == 1 { pos[0] } else { neg[0] };
            let others: Vec<usize> = (0..4).filter(|&k| k != lone).collect();
            let c1 = crossing(lone, others[0]);
            let c2 = crossing(lone, others[1]);
            let c3 = crossing(lone, others[2]);
            tri(c1, c2, c3, ids, elements)?;
        }
        2 => {
            let (a, b) = (pos[0], pos[1]);
            let (c, d) = (neg[0], neg[1]);
            let ac = crossing(a, c);
            let ad = crossing(a, d);
            let bc = crossing(b, c);
            let bd = crossing(b, d);
            tri(ac, ad, bd, ids, elements)?;
            tri(ac, bd, bc, ids, elements)?;
        }
        _ => unreachable!(),
    }
    Ok(())
}

/// Boundary trace for a 3-D box: marching squares of f restricted to each of
/// the six open faces.
fn extract_boundary_3d(
    f: &FieldFunction,
    domain: &Domain,
    chart: &GridChart,
    scale: Real,
) -> Result<Vec<BoundaryElement>> {
    let mut out = Vec::new();
    for face in domain.faces() {
        let axes = face.tangent_axes(3);
        let (au, av) = (axes[0], axes[1]);
        let embed = |u: Real, v: Real| -> Point {
            let mut p = [0.0; 3];
            p[face.axis] = if face.upper { domain.extents[face.axis] } else { 0.0 };
            p[au] = u;
            p[av] = v;
            p
        };
        let value = |u: Real, v: Real| f.value(&embed(u, v));
        let root = |a: [Real; 2], b: [Real; 2], fa: Real| -> Real {
            refine_edge_param(f, &embed(a[0], a[1]), &embed(b[0], b[1]), fa)
        };
        let (segments, _) = marching_squares(
            chart.resolution[au],
            chart.resolution[av],
            chart.spacing[au],
            chart.spacing[av],
            false,
            &value,
            &root,
        );
        for seg in &segments {
            let (du, dv) = (seg.b[0] - seg.a[0], seg.b[1] - seg.a[1]);
            let weight = (du * du + dv * dv).sqrt();
            if weight == 0.0 {
                continue;
            }
            let mu = 0.5 * (seg.a[0] + seg.b[0]);
            let mv = 0.5 * (seg.a[1] + seg.b[1]);
            // Open faces only, per the corner exclusion.
            let margin = 1e-9;
            if mu < margin
                || mu > domain.extents[au] - margin
                || mv < margin
                || mv > domain.extents[av] - margin
            {
                continue;
            }
            let p0 = embed(mu, mv);
            let p = project_on_face(f, domain, &face, &p0, scale);
            out.push(boundary_element(f, domain, &face, &p, weight, scale)?);
        }
    }
    Ok(out)
}

/// Newton projection within a face: moves along the face-tangential gradient
/// until f vanishes on the face.
fn project_on_face(
    f: &FieldFunction,
    domain: &Domain,
    face: &Face,
    p: &Point,
    scale: Real,
) -> Point {
    let axes = face.tangent_axes(domain.dims);
    let mut x = *p;
    for _ in 0..12 {
        let jet = f.jet(domain, &x);
        if jet.value.abs() <= PROJECTION_TOL_REL * scale {
            return x;
        }
        let g2: Real = axes.iter().map(|&a| jet.grad[a] * jet.grad[a]).sum();
        if g2 == 0.0 {
            return x;
        }
        let s = jet.value / g2;
        for &a in &axes {
            x[a] -= s * jet.grad[a];
        }
    }
    x
}

// ---------------------------------------------------------------------------
// Sphere mesh crossings
// ---------------------------------------------------------------------------

fn extract_sphere(f: &FieldFunction, domain: &Domain) -> Result<NodalSet> {
    let mesh = domain
        .mesh
        .as_ref()
        .ok_or_else(|| Error::InvalidDomain("sphere domain without mesh".into()))?;
    let values: Vec<Real> = mesh.vertices.iter().map(|v| f.value(v)).collect();
    let scale = values.iter().fold(0.0 as Real, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::RegularityViolation(
            "field vanishes identically on the mesh".into(),
        ));
    }
    let mut crossings: HashMap<(u32, u32), (Point, u64)> = HashMap::new();
    let mut ids = PointIds::new();
    let mut elements = Vec::new();
    for tri in &mesh.triangles {
        let s: Vec<bool> = tri.iter().map(|&v| values[v as usize] > 0.0).collect();
        if s[0] == s[1] && s[1] == s[2] {
            continue;
        }
        let mut pts: Vec<(Point, u64)> = Vec::with_capacity(2);
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            if s[e as usize] != s[(e + 1) % 3] {
                let key = (a.min(b), a.max(b));
                let next = crossings.len() as u64;
                let entry = crossings.entry(key).or_insert_with(|| {
                    let pa = mesh.vertices[a as usize];
                    let pb = mesh.vertices[b as usize];
                    (sphere_edge_root(f, &pa, &pb, values[a as usize]), next)
                });
                pts.push(*entry);
            }
        }
        debug_assert_eq!(pts.len(), 2);
        // Great-circle arc between the two crossing points. For a geodesic
        // nodal line the arcs tile the circle, so the total length is exact.
        let weight = dot(&pts[0].0, &pts[1].0).clamp(-1.0, 1.0).acos();
        if weight == 0.0 {
            continue;
        }
        let mid = normalize(&[
            pts[0].0[0] + pts[1].0[0],
            pts[0].0[1] + pts[1].0[1],
            pts[0].0[2] + pts[1].0[2],
        ]);
        let links = [
            ids.canon(domain, &pts[0].0, pts[0].1),
            ids.canon(domain, &pts[1].0, pts[1].1),
            u64::MAX,
        ];
        elements.push(build_element(f, domain, &mid, weight, links, scale)?);
    }
    Ok(NodalSet {
        elements,
        boundary_elements: Vec::new(),
        dims: 2,
        field_scale: scale,
    })
}

/// Root of f along the normalized chord between two mesh vertices.
fn sphere_edge_root(f: &FieldFunction, a: &Point, b: &Point, fa: Real) -> Point {
    let eval = |t: Real| -> Point {
        normalize(&[
            (1.0 - t) * a[0] + t * b[0],
            (1.0 - t) * a[1] + t * b[1],
            (1.0 - t) * a[2] + t * b[2],
        ])
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut flo = fa;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = f.value(&eval(mid));
        if fm == 0.0 {
            return eval(mid);
        }
        if (flo > 0.0) == (fm > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    eval(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::fixtures;
    use crate::geometry::make_domain;

    #[test]
    fn sine_nodal_lines_on_torus() {
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 64).unwrap();
        let f = fixtures::sine_x(1.0);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
        // Two straight circles of length 1 each.
        assert!((nodal.volume() - 2.0).abs() < 1e-9, "V = {}", nodal.volume());
        assert_eq!(nodal.component_count(), 2);
    }

    #[test]
    fn circle_volume_and_component() {
        let (domain, chart) = make_domain(DomainKind::Rectangle, 2, &[2.0, 2.0], 128).unwrap();
        // x^2 + y^2 - 1/4 centered in [0,2]^2.
        let f = fixtures::circle([1.0, 1.0], 0.25);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
        let expected = std::f64::consts::PI; // 2 pi r with r = 1/2
        assert!(
            (nodal.volume() - expected).abs() < 5e-4,
            "V = {} vs {}",
            nodal.volume(),
            expected
        );
        assert_eq!(nodal.component_count(), 1);
        assert!(nodal.boundary_elements.is_empty());
    }

    #[test]
    fn circle_convergence_is_second_order() {
        // Radius sqrt(0.26) so the circle does not pass through grid nodes.
        let r2: Real = 0.26;
        let expected = 2.0 * std::f64::consts::PI * r2.sqrt();
        let mut errors = Vec::new();
        for res in [32usize, 64, 128, 256] {
            let (domain, chart) = make_domain(DomainKind::Rectangle, 2, &[2.0, 2.0], res).unwrap();
            let f = fixtures::circle([1.0, 1.0], r2);
            let v = nodal_volume(&f, &domain, &chart).unwrap();
            errors.push((v - expected).abs());
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (3.2..=4.8).contains(&ratio),
                "refinement ratio {ratio} outside [3.2, 4.8]: {errors:?}"
            );
        }
    }

    #[test]
    fn sign_flip_and_scale_invariance() {
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 32).unwrap();
        let model =
            crate::fields::build_model(&crate::fields::ModelSpec::ArithmeticWave { n: 2 }, &domain)
                .unwrap();
        let f = model.sample(17);
        let v = nodal_volume(&f, &domain, &chart).unwrap();
        let v_neg = nodal_volume(&f.scale(-1.0), &domain, &chart).unwrap();
        assert_eq!(v, v_neg, "sign flip must not change the zero set");
        let v3 = nodal_volume(&f.scale(3.0), &domain, &chart).unwrap();
        assert!(((v - v3) / v).abs() < 1e-12);
    }

    #[test]
    fn empty_nodal_set_has_zero_volume() {
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 16).unwrap();
        let f = fixtures::cosine_pair().add_scaled(&fixtures::constant(5.0), 1.0);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
        assert_eq!(nodal.elements.len(), 0);
        assert_eq!(nodal.volume(), 0.0);
    }

    #[test]
    fn sphere_equator_has_length_two_pi() {
        let (domain, chart) = make_domain(DomainKind::Sphere2, 2, &[], 4).unwrap();
        let f = fixtures::linear([0.0, 0.0, 1.0]);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
        let expected = 2.0 * std::f64::consts::PI;
        assert!(
            (nodal.volume() - expected).abs() < 1e-10,
            "V = {}",
            nodal.volume()
        );
        assert_eq!(nodal.component_count(), 1);
    }

    #[test]
    fn great_circles_have_exact_length_for_any_direction() {
        let (domain, chart) = make_domain(DomainKind::Sphere2, 2, &[], 3).unwrap();
        let f = fixtures::linear([0.4, -1.2, 0.3]);
        let v = nodal_volume(&f, &domain, &chart).unwrap();
        assert!((v - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn elements_satisfy_projection_and_regularity_invariants() {
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], 64).unwrap();
        let model =
            crate::fields::build_model(&crate::fields::ModelSpec::ArithmeticWave { n: 5 }, &domain)
                .unwrap();
        for seed in 0..100 {
            let f = model.sample(seed);
            let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
            for e in &nodal.elements {
                assert!(e.weight > 0.0);
                let fv = f.value(&e.point).abs();
                assert!(fv <= 1e-9 * nodal.field_scale, "|f| = {fv:.3e} off Z");
                assert!(e.grad_norm >= 1e-6 * nodal.field_scale);
            }
        }
    }

    #[test]
    fn integrate_consistency_and_identity() {
        let (domain, chart) = make_domain(DomainKind::Rectangle, 2, &[2.0, 2.0], 128).unwrap();
        let r2: Real = 0.81;
        let f = fixtures::circle([1.0, 1.0], r2);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
        let v = nodal.volume();
        let one = nodal.integrate(|_| 1.0).unwrap();
        assert_eq!(one, v);
        let ratio = nodal
            .integrate(|e| (1.0 / e.grad_norm) * e.grad_norm)
            .unwrap();
        assert!((ratio - v).abs() < 1e-12);
        // For the circle of radius r the integrand Delta~f / |df|^2 is
        // 1/(2 r^2) pointwise, so the integral is pi / r.
        let curv = nodal
            .integrate(|e| e.delta_tilde / (e.grad_norm * e.grad_norm))
            .unwrap();
        let expected = std::f64::consts::PI / r2.sqrt();
        assert!((curv - expected).abs() < 1e-3, "curvature integral {curv}");
    }

    #[test]
    fn tetrahedra_extract_plane_and_sphere_in_box() {
        let (domain, chart) = make_domain(DomainKind::Rectangle, 3, &[1.0, 1.0, 1.0], 24).unwrap();
        // Plane x = 0.481: area 1 exactly.
        let f = fixtures::poly(vec![(1.0, [1, 0, 0]), (-0.481, [0, 0, 0])]);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
        assert!((nodal.volume() - 1.0).abs() < 1e-9, "plane area {}", nodal.volume());
        // Sphere of radius 0.3 around the center: area 4 pi r^2.
        let g = fixtures::poly(vec![
            (1.0, [2, 0, 0]),
            (1.0, [0, 2, 0]),
            (1.0, [0, 0, 2]),
            (-1.0, [1, 0, 0]),
            (-1.0, [0, 1, 0]),
            (-1.0, [0, 0, 1]),
            (0.75 - 0.09, [0, 0, 0]),
        ]);
        let nodal = extract_nodal_set(&g, &domain, &chart).unwrap();
        let expected = 4.0 * std::f64::consts::PI * 0.09;
        assert!(
            ((nodal.volume() - expected) / expected).abs() < 5e-3,
            "sphere area {} vs {}",
            nodal.volume(),
            expected
        );
        assert_eq!(nodal.component_count(), 1);
    }

    #[test]
    fn boundary_trace_on_rectangle() {
        // Vertical line x = 0.75 on [0,2]x[0,1]: the trace is two points on
        // the horizontal faces, with nu = e_x so g(n, nu) = 0 there.
        let (domain, chart) = make_domain(DomainKind::Rectangle, 2, &[2.0, 1.0], 32).unwrap();
        let f = fixtures::poly(vec![(1.0, [1, 0, 0]), (-0.75, [0, 0, 0])]);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();
        assert_eq!(nodal.boundary_elements.len(), 2);
        for b in &nodal.boundary_elements {
            assert!((b.point[0] - 0.75).abs() < 1e-10);
            assert!(b.g_n_nu.abs() < 1e-12);
            assert!((b.d_restricted_norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn component_count_matches_flood_fill_oracle() {
        // sin(2 pi x) sin(2 pi y) + 0.1 on the torus: contractible curves, so
        // components = sign regions - 1.
        let tau = 2.0 * std::f64::consts::PI;
        let res = 64usize;
        let (domain, chart) = make_domain(DomainKind::FlatTorus, 2, &[1.0, 1.0], res).unwrap();
        let f = FieldFunction::from_terms(vec![
            (
                0.5,
                crate::fields::basis::BasisFn::Trig {
                    k: [tau, -tau, 0.0],
                    phase: crate::fields::basis::Phase::Cos,
                    amp: 1.0,
                },
            ),
            (
                -0.5,
                crate::fields::basis::BasisFn::Trig {
                    k: [tau, tau, 0.0],
                    phase: crate::fields::basis::Phase::Cos,
                    amp: 1.0,
                },
            ),
            (
                1.0,
                crate::fields::basis::BasisFn::Poly(
                    crate::fields::basis::Polynomial::constant(0.1),
                ),
            ),
        ]);
        let nodal = extract_nodal_set(&f, &domain, &chart).unwrap();

        // Flood-fill oracle on the sign lattice.
        let h = 1.0 / res as Real;
        let sign =
            |i: usize, j: usize| f.value(&[i as Real * h, j as Real * h, 0.0]) > 0.0;
        let mut seen = vec![false; res * res];
        let mut regions = 0;
        for start in 0..res * res {
            if seen[start] {
                continue;
            }
            regions += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(k) = stack.pop() {
                let (i, j) = (k % res, k / res);
                let s = sign(i, j);
                let neighbors = [
                    ((i + 1) % res, j),
                    ((i + res - 1) % res, j),
                    (i, (j + 1) % res),
                    (i, (j + res - 1) % res),
                ];
                for (ni, nj) in neighbors {
                    let nk = nj * res + ni;
                    if !seen[nk] && sign(ni, nj) == s {
                        seen[nk] = true;
                        stack.push(nk);
                    }
                }
            }
        }
        assert_eq!(nodal.component_count(), regions - 1);
    }
}
