//! Computational domains: flat tori, rectangles with boundary, and the round
//! two-sphere as a subdivided icosahedron.
//!
//! Domains and charts are immutable after construction and safe to share
//! across workers. All sphere computations happen in the ambient embedding;
//! intrinsic quantities are obtained by tangential projection.

use crate::error::{Error, Result};
use crate::Real;
use serde::{Deserialize, Serialize};

pub type Point = [Real; 3];
pub type Vec3 = [Real; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    FlatTorus,
    Rectangle,
    Sphere2,
}

/// A compact computational domain with its metric structure.
#[derive(Debug, Clone)]
pub struct Domain {
    pub kind: DomainKind,
    /// Intrinsic dimension m (2 or 3; Sphere2 forces 2).
    pub dims: usize,
    /// Per-axis period or side length for the flat kinds.
    pub extents: Vec<Real>,
    /// Triangulation, Sphere2 only.
    pub mesh: Option<TriMesh>,
}

/// Regular lattice chart over a flat domain. For Sphere2 the mesh vertices
/// play the role of the lattice and `resolution` records the subdivision
/// level.
#[derive(Debug, Clone)]
pub struct GridChart {
    pub resolution: Vec<usize>,
    pub spacing: Vec<Real>,
}

/// Axis-aligned face of a rectangle boundary.
#[derive(Debug, Clone, Copy)]
pub struct Face {
    /// Axis whose coordinate is frozen on this face.
    pub axis: usize,
    /// false: coordinate 0 side, true: coordinate = extent side.
    pub upper: bool,
}

impl Face {
    /// Outward unit normal of the face.
    pub fn outward_normal(&self) -> Vec3 {
        let mut n = [0.0; 3];
        n[self.axis] = if self.upper { 1.0 } else { -1.0 };
        n
    }

    /// Axes tangent to the face, in increasing order.
    pub fn tangent_axes(&self, dims: usize) -> Vec<usize> {
        (0..dims).filter(|&a| a != self.axis).collect()
    }
}

pub fn make_domain(
    kind: DomainKind,
    dims: usize,
    extents: &[Real],
    resolution: usize,
) -> Result<(Domain, GridChart)> {
    match kind {
        DomainKind::Sphere2 => {
            if dims != 2 {
                return Err(Error::InvalidDomain(format!(
                    "Sphere2 is two-dimensional, got dims={dims}"
                )));
            }
            let mesh = TriMesh::icosphere(resolution);
            let domain = Domain {
                kind,
                dims: 2,
                extents: Vec::new(),
                mesh: Some(mesh),
            };
            let chart = GridChart {
                resolution: vec![resolution],
                spacing: Vec::new(),
            };
            Ok((domain, chart))
        }
        DomainKind::FlatTorus | DomainKind::Rectangle => {
            if dims != 2 && dims != 3 {
                return Err(Error::InvalidDomain(format!("dims must be 2 or 3, got {dims}")));
            }
            if extents.len() != dims {
                return Err(Error::InvalidDomain(format!(
                    "expected {dims} extents, got {}",
                    extents.len()
                )));
            }
            if extents.iter().any(|&e| !(e > 0.0)) {
                return Err(Error::InvalidDomain("extents must be strictly positive".into()));
            }
            if resolution < 8 {
                return Err(Error::InvalidDomain(format!(
                    "resolution must be at least 8, got {resolution}"
                )));
            }
            let spacing = extents.iter().map(|e| e / resolution as Real).collect();
            let domain = Domain {
                kind,
                dims,
                extents: extents.to_vec(),
                mesh: None,
            };
            let chart = GridChart {
                resolution: vec![resolution; dims],
                spacing,
            };
            Ok((domain, chart))
        }
    }
}

impl Domain {
    pub fn has_boundary(&self) -> bool {
        self.kind == DomainKind::Rectangle
    }

    /// Total Riemannian volume. For Sphere2 this is the mesh area, which
    /// approaches 4 pi under refinement.
    pub fn volume(&self) -> Real {
        match self.kind {
            DomainKind::FlatTorus | DomainKind::Rectangle => self.extents.iter().product(),
            DomainKind::Sphere2 => self.mesh.as_ref().map(|m| m.total_area()).unwrap_or(0.0),
        }
    }

    /// Boundary faces (empty for boundaryless domains).
    pub fn faces(&self) -> Vec<Face> {
        if !self.has_boundary() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for axis in 0..self.dims {
            out.push(Face { axis, upper: false });
            out.push(Face { axis, upper: true });
        }
        out
    }

    /// (m-1)-volume of the boundary.
    pub fn boundary_volume(&self) -> Real {
        let mut total = 0.0;
        for face in self.faces() {
            let area: Real = face
                .tangent_axes(self.dims)
                .iter()
                .map(|&a| self.extents[a])
                .product();
            total += area;
        }
        total
    }

    /// Shortest displacement from `p` to `q` respecting the domain metric
    /// (minimal image on the torus). Flat domains only.
    pub fn displacement(&self, p: &Point, q: &Point) -> Vec3 {
        let mut d = [0.0; 3];
        for i in 0..self.dims {
            let mut di = q[i] - p[i];
            if self.kind == DomainKind::FlatTorus {
                let l = self.extents[i];
                di -= (di / l).round() * l;
            }
            d[i] = di;
        }
        d
    }

    pub fn geodesic_distance(&self, p: &Point, q: &Point) -> Real {
        match self.kind {
            DomainKind::FlatTorus | DomainKind::Rectangle => {
                let d = self.displacement(p, q);
                norm(&d)
            }
            DomainKind::Sphere2 => {
                if p == q {
                    return 0.0;
                }
                let c = dot(p, q).clamp(-1.0, 1.0);
                c.acos()
            }
        }
    }

    /// Wrap a point back into the fundamental domain of a torus; identity on
    /// the other kinds.
    pub fn wrap(&self, p: &Point) -> Point {
        let mut out = *p;
        if self.kind == DomainKind::FlatTorus {
            for i in 0..self.dims {
                let l = self.extents[i];
                out[i] = out[i].rem_euclid(l);
            }
        }
        out
    }

    /// Geodesic step from `p` with initial tangent direction `v` (unit) and
    /// arclength `t`.
    pub fn exp_map(&self, p: &Point, v: &Vec3, t: Real) -> Point {
        match self.kind {
            DomainKind::FlatTorus | DomainKind::Rectangle => {
                self.wrap(&[p[0] + t * v[0], p[1] + t * v[1], p[2] + t * v[2]])
            }
            DomainKind::Sphere2 => {
                let (c, s) = (t.cos(), t.sin());
                normalize(&[
                    c * p[0] + s * v[0],
                    c * p[1] + s * v[1],
                    c * p[2] + s * v[2],
                ])
            }
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        match self.kind {
            DomainKind::FlatTorus => true,
            DomainKind::Rectangle => (0..self.dims).all(|i| p[i] >= 0.0 && p[i] <= self.extents[i]),
            DomainKind::Sphere2 => (norm(p) - 1.0).abs() < 1e-9,
        }
    }

    /// Uniform random point on the domain.
    pub fn sample_point(&self, rng: &mut impl rand::Rng) -> Point {
        match self.kind {
            DomainKind::FlatTorus | DomainKind::Rectangle => {
                let mut p = [0.0; 3];
                for i in 0..self.dims {
                    p[i] = rng.gen::<Real>() * self.extents[i];
                }
                p
            }
            DomainKind::Sphere2 => {
                use rand_distr::{Distribution, StandardNormal};
                loop {
                    let v: Vec3 = [
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                    ];
                    let n = norm(&v);
                    if n > 1e-6 {
                        return [v[0] / n, v[1] / n, v[2] / n];
                    }
                }
            }
        }
    }

    /// Random unit tangent vector at `p`.
    pub fn sample_tangent(&self, p: &Point, rng: &mut impl rand::Rng) -> Vec3 {
        use rand_distr::{Distribution, StandardNormal};
        loop {
            let mut v: Vec3 = [0.0; 3];
            match self.kind {
                DomainKind::FlatTorus | DomainKind::Rectangle => {
                    for i in 0..self.dims {
                        v[i] = StandardNormal.sample(rng);
                    }
                }
                DomainKind::Sphere2 => {
                    let g: Vec3 = [
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                    ];
                    let gp = dot(&g, p);
                    for i in 0..3 {
                        v[i] = g[i] - gp * p[i];
                    }
                }
            }
            let n = norm(&v);
            if n > 1e-6 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }

    /// Orthonormal tangent frame at `p`: the full coordinate frame on flat
    /// domains, two tangent vectors on the sphere.
    pub fn tangent_frame(&self, p: &Point) -> Vec<Vec3> {
        match self.kind {
            DomainKind::FlatTorus | DomainKind::Rectangle => {
                (0..self.dims)
                    .map(|i| {
                        let mut e = [0.0; 3];
                        e[i] = 1.0;
                        e
                    })
                    .collect()
            }
            DomainKind::Sphere2 => {
                // Pick the coordinate axis least aligned with p.
                let mut k = 0;
                for i in 1..3 {
                    if p[i].abs() < p[k].abs() {
                        k = i;
                    }
                }
                let mut a = [0.0; 3];
                a[k] = 1.0;
                let ap = dot(&a, p);
                let mut e1 = [a[0] - ap * p[0], a[1] - ap * p[1], a[2] - ap * p[2]];
                let n1 = norm(&e1);
                for x in &mut e1 {
                    *x /= n1;
                }
                let e2 = cross(p, &e1);
                vec![e1, e2]
            }
        }
    }
}

/// Triangle mesh of the unit sphere.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Icosahedron subdivided `level` times with vertices normalized onto the
    /// unit sphere.
    pub fn icosphere(level: usize) -> TriMesh {
        let phi = (1.0 + (5.0 as Real).sqrt()) / 2.0;
        let mut vertices: Vec<Point> = vec![
            [-1.0, phi, 0.0],
            [1.0, phi, 0.0],
            [-1.0, -phi, 0.0],
            [1.0, -phi, 0.0],
            [0.0, -1.0, phi],
            [0.0, 1.0, phi],
            [0.0, -1.0, -phi],
            [0.0, 1.0, -phi],
            [phi, 0.0, -1.0],
            [phi, 0.0, 1.0],
            [-phi, 0.0, -1.0],
            [-phi, 0.0, 1.0],
        ]
        .into_iter()
        .map(|v| normalize(&v))
        .collect();
        let mut triangles: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];

        use std::collections::HashMap;
        for _ in 0..level {
            let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(triangles.len() * 4);
            for tri in &triangles {
                let mut mid = [0u32; 3];
                for e in 0..3 {
                    let a = tri[e];
                    let b = tri[(e + 1) % 3];
                    let key = (a.min(b), a.max(b));
                    mid[e] = *midpoint.entry(key).or_insert_with(|| {
                        let pa = vertices[a as usize];
                        let pb = vertices[b as usize];
                        let m = normalize(&[
                            (pa[0] + pb[0]) / 2.0,
                            (pa[1] + pb[1]) / 2.0,
                            (pa[2] + pb[2]) / 2.0,
                        ]);
                        vertices.push(m);
                        (vertices.len() - 1) as u32
                    });
                }
                next.push([tri[0], mid[0], mid[2]]);
                next.push([tri[1], mid[1], mid[0]]);
                next.push([tri[2], mid[2], mid[1]]);
                next.push([mid[0], mid[1], mid[2]]);
            }
            triangles = next;
        }
        TriMesh {
            vertices,
            triangles,
        }
    }

    /// Sum of flat triangle areas.
    pub fn total_area(&self) -> Real {
        self.triangles
            .iter()
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn triangle_area(&self, tri: &[u32; 3]) -> Real {
        let a = self.vertices[tri[0] as usize];
        let b = self.vertices[tri[1] as usize];
        let c = self.vertices[tri[2] as usize];
        let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let ac = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        norm(&cross(&ab, &ac)) / 2.0
    }

    pub fn triangle_centroid(&self, tri: &[u32; 3]) -> Point {
        let a = self.vertices[tri[0] as usize];
        let b = self.vertices[tri[1] as usize];
        let c = self.vertices[tri[2] as usize];
        normalize(&[
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
            (a[2] + b[2] + c[2]) / 3.0,
        ])
    }
}

pub fn dot(a: &Vec3, b: &Vec3) -> Real {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> Real {
    dot(a, a).sqrt()
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn normalize(a: &Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}
