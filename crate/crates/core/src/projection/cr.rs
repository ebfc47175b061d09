//! Crouzeix–Raviart elements on a uniform right-triangle mesh of the unit
//! square and three projective interpolations built from different
//! subdomain choices: edge midpoints, whole edges, and small squares at an
//! edge quarter point.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{l2_dual, DualFunctional, LocalBasisFamily, Sampled, Subdomain};
use crate::error::{Error, Result};
use crate::polynomial::{gauss_legendre, gauss_segment};

/// `n × n` squares of side `h = 1/n`, each split by its lower-left to
/// upper-right diagonal.
#[derive(Clone, Debug)]
pub struct CrMesh {
    pub n: usize,
    pub h: f64,
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Sorted vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// `tri_edges[t][a]` is the edge opposite local vertex `a`.
    pub tri_edges: Vec<[usize; 3]>,
    pub edge_tris: Vec<Vec<usize>>,
}

impl CrMesh {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("CR mesh needs at least one square".into()));
        }
        let h = 1.0 / n as f64;
        let vid = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let mut index: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<Vec<usize>> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for a in 0..3 {
                let (p, q) = (tri[(a + 1) % 3], tri[(a + 2) % 3]);
                let key = [p.min(q), p.max(q)];
                let e = *index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_tris.push(Vec::new());
                    edges.len() - 1
                });
                edge_tris[e].push(t);
                te[a] = e;
            }
            tri_edges.push(te);
        }
        Ok(CrMesh { n, h, vertices, triangles, edges, tri_edges, edge_tris })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edge joining the lattice vertices `(i0, j0)` and `(i1, j1)`.
    pub fn edge_between(&self, p: (usize, usize), q: (usize, usize)) -> Option<usize> {
        let vid = |(i, j): (usize, usize)| j * (self.n + 1) + i;
        let (a, b) = (vid(p), vid(q));
        let key = [a.min(b), a.max(b)];
        self.edges.iter().position(|e| *e == key)
    }

    pub fn is_interior_edge(&self, e: usize) -> bool {
        self.edge_tris[e].len() == 2
    }

    pub fn edge_points(&self, e: usize) -> [[f64; 2]; 2] {
        let [a, b] = self.edges[e];
        [self.vertices[a], self.vertices[b]]
    }

    pub fn midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edge_points(e);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    /// Barycentric coordinates of `x` in triangle `t`.
    pub fn barycentric(&self, t: usize, x: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (x[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// `φ_e` on triangle `t` at `x` (zero if `e` is not an edge of `t`).
    pub fn basis_on(&self, e: usize, t: usize, x: [f64; 2]) -> f64 {
        match self.tri_edges[t].iter().position(|f| *f == e) {
            Some(a) => 1.0 - 2.0 * self.barycentric(t, x)[a],
            None => 0.0,
        }
    }

    /// Value on triangle `t` of `Σ c_e φ_e`.
    pub fn combine_on(&self, t: usize, coeffs: &[f64], x: [f64; 2]) -> f64 {
        let l = self.barycentric(t, x);
        (0..3).map(|a| coeffs[self.tri_edges[t][a]] * (1.0 - 2.0 * l[a])).sum()
    }

    /// Convex pieces of `poly ∩ t` for every triangle `t` it meets.
    fn clip(&self, poly: &[[f64; 2]]) -> Vec<(usize, Vec<[f64; 2]>)> {
        let mut out = Vec::new();
        for t in 0..self.triangles.len() {
            let piece = clip_convex(poly, &self.corners(t));
            if polygon_area(&piece) > 1e-300 {
                out.push((t, piece));
            }
        }
        out
    }

    /// Quadrature on `region` as `(triangle, point, weight)`, exact to degree `2n − 2`.
    fn quadrature(&self, region: &Subdomain, n: usize) -> Result<Vec<(usize, [f64; 2], f64)>> {
        let pieces: Vec<(usize, Vec<[f64; 2]>)> = match region {
            Subdomain::Whole => (0..self.triangles.len()).map(|t| (t, self.corners(t).to_vec())).collect(),
            Subdomain::Polygon(p) => self.clip(p),
            Subdomain::Cells(_) => return Err(Error::DegenerateSubdomain),
        };
        let mut out = Vec::new();
        for (t, piece) in pieces {
            for k in 1..piece.len() - 1 {
                for (x, w) in triangle_rule(piece[0], piece[k], piece[k + 1], n) {
                    out.push((t, x, w));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::DegenerateSubdomain);
        }
        Ok(out)
    }

    /// `∫_region ψ v` for a dual functional of this family.
    pub fn apply_dual(&self, dual: &DualFunctional, v: impl Fn(f64, f64) -> f64) -> Result<f64> {
        let mut total = 0.0;
        for (t, x, w) in self.quadrature(&dual.region, 6)? {
            let psi: f64 = dual
                .indices
                .iter()
                .zip(&dual.coeffs)
                .map(|(e, c)| c * self.basis_on(*e, t, x))
                .sum();
            total += w * psi * v(x[0], x[1]);
        }
        Ok(total)
    }
}

impl LocalBasisFamily for CrMesh {
    fn dim(&self) -> usize {
        self.num_edges()
    }

    fn sample(&self, region: &Subdomain) -> Result<Sampled> {
        // products of two linears: degree 2
        let quad = self.quadrature(region, 2)?;
        let mut indices: Vec<usize> = quad.iter().flat_map(|(t, _, _)| self.tri_edges[*t]).collect();
        indices.sort_unstable();
        indices.dedup();
        let area = quad.iter().map(|(_, _, w)| w).sum();
        let matrix = DMatrix::from_fn(quad.len(), indices.len(), |r, c| {
            let (t, x, w) = quad[r];
            w.sqrt() * self.basis_on(indices[c], t, x)
        });
        Ok(Sampled { indices, matrix, area })
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Sutherland–Hodgman clip of a convex polygon by a counter-clockwise
/// convex polygon.
pub fn clip_convex(subject: &[[f64; 2]], clipper: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    for k in 0..clipper.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clipper[k], clipper[(k + 1) % clipper.len()]);
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let (p, q) = (input[i], input[(i + 1) % input.len()]);
            let (sp, sq) = (cross(a, b, p), cross(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

pub fn polygon_area(p: &[[f64; 2]]) -> f64 {
    if p.len() < 3 {
        return 0.0;
    }
    0.5 * (0..p.len())
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % p.len()]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
        .abs()
}

/// Collapsed Gauss rule on a triangle, exact to degree `2n − 2`.
pub fn triangle_rule(a: [f64; 2], b: [f64; 2], c: [f64; 2], n: usize) -> Vec<([f64; 2], f64)> {
    let (xi, wi) = gauss_legendre(n);
    let area2 = cross(a, b, c).abs();
    let mut out = Vec::with_capacity(n * n);
    for (s, ws) in xi.iter().zip(&wi) {
        let u = 0.5 * (1.0 + s);
        for (t, wt) in xi.iter().zip(&wi) {
            let v = 0.5 * (1.0 + t) * (1.0 - u);
            let w = 0.25 * ws * wt * (1.0 - u) * area2;
            let x = [
                a[0] + u * (b[0] - a[0]) + v * (c[0] - a[0]),
                a[1] + u * (b[1] - a[1]) + v * (c[1] - a[1]),
            ];
            out.push((x, w));
        }
    }
    out
}

/// Which quarter point of an edge, counted from its lower-index vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuarterPoint {
    First,
    Third,
}

/// Square of side `side` with one diagonal along edge `e`, centered at `center`.
fn square_on_edge(mesh: &CrMesh, e: usize, center: [f64; 2], side: f64) -> Vec<[f64; 2]> {
    let [p, q] = mesh.edge_points(e);
    let len = (q[0] - p[0]).hypot(q[1] - p[1]);
    let d = [(q[0] - p[0]) / len, (q[1] - p[1]) / len];
    let nrm = [-d[1], d[0]];
    let r = side / std::f64::consts::SQRT_2;
    vec![
        [center[0] + r * d[0], center[1] + r * d[1]],
        [center[0] + r * nrm[0], center[1] + r * nrm[1]],
        [center[0] - r * d[0], center[1] - r * d[1]],
        [center[0] - r * nrm[0], center[1] - r * nrm[1]],
    ]
}

/// Side length `h/(8√2)` of the quarter-point squares.
pub fn quarter_square_side(h: f64) -> f64 {
    h / (8.0 * std::f64::consts::SQRT_2)
}

/// The quarter-point square subdomain of edge `e`.
pub fn quarter_square(mesh: &CrMesh, e: usize, which: QuarterPoint) -> Subdomain {
    let [p, q] = mesh.edge_points(e);
    let t = match which {
        QuarterPoint::First => 0.25,
        QuarterPoint::Third => 0.75,
    };
    let center = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
    Subdomain::Polygon(square_on_edge(mesh, e, center, quarter_square_side(mesh.h)))
}

/// A small square centered at the midpoint of `e`.
pub fn midpoint_square(mesh: &CrMesh, e: usize) -> Subdomain {
    Subdomain::Polygon(square_on_edge(mesh, e, mesh.midpoint(e), quarter_square_side(mesh.h)))
}

/// A thin rhombus whose long diagonal is the edge `e`.
pub fn edge_rhombus(mesh: &CrMesh, e: usize) -> Subdomain {
    let [p, q] = mesh.edge_points(e);
    let m = mesh.midpoint(e);
    let len = (q[0] - p[0]).hypot(q[1] - p[1]);
    let nrm = [-(q[1] - p[1]) / len, (q[0] - p[0]) / len];
    let r = mesh.h / 16.0;
    Subdomain::Polygon(vec![p, [m[0] + r * nrm[0], m[1] + r * nrm[1]], q, [m[0] - r * nrm[0], m[1] - r * nrm[1]]])
}

/// Dual coefficients of one edge, scaled by `h²`.
#[derive(Clone, Debug)]
pub struct CrDualReport {
    pub edge: usize,
    pub quarter: QuarterPoint,
    pub dual: DualFunctional,
    pub scaled_coeffs: Vec<f64>,
}

pub fn cr_dual(mesh: &CrMesh, e: usize, quarter: QuarterPoint) -> Result<CrDualReport> {
    let dual = l2_dual(mesh, &quarter_square(mesh, e, quarter), e)?;
    let h2 = mesh.h * mesh.h;
    let scaled_coeffs = dual.coeffs.iter().map(|c| c * h2).collect();
    Ok(CrDualReport { edge: e, quarter, dual, scaled_coeffs })
}

/// Horizontal, diagonal and vertical interior edges leaving vertex `(i, j)`.
pub fn representative_edges(mesh: &CrMesh) -> [usize; 3] {
    let m = mesh.n / 2;
    let h = mesh.edge_between((m - 1, m), (m, m));
    let d = mesh.edge_between((m - 1, m - 1), (m, m));
    let v = mesh.edge_between((m, m - 1), (m, m));
    [h, d, v].map(|e| e.expect("mesh has at least 2×2 squares"))
}

/// Dual reports at both quarter points of the three edge types of a mesh
/// with `n × n` squares.
pub fn cr_dual_demo(n: usize) -> Result<Vec<CrDualReport>> {
    if n < 2 {
        return Err(Error::InvalidMesh("demo needs at least 2×2 squares".into()));
    }
    let mesh = CrMesh::new(n)?;
    let mut out = Vec::new();
    for e in representative_edges(&mesh) {
        for q in [QuarterPoint::First, QuarterPoint::Third] {
            out.push(cr_dual(&mesh, e, q)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrVariant {
    /// `λ_k(v) = v(b_k)`.
    S1,
    /// `λ_k(v) = ⨍_{e_k} v`.
    S2,
    /// `λ_k(v) = ∫_{𝒟_k} ψ_k v` over quarter-point squares.
    S3,
}

/// The functionals `λ_k` for every edge of the mesh, given `v` that may be
/// discontinuous across edges: `v(t, x)` is `v` on triangle `t` at `x`.
pub fn cr_projective_interpolation(
    mesh: &CrMesh,
    variant: CrVariant,
    v: impl Fn(usize, f64, f64) -> f64,
) -> Result<Vec<f64>> {
    (0..mesh.num_edges())
        .map(|e| {
            let t = mesh.edge_tris[e][0];
            match variant {
                CrVariant::S1 => {
                    let m = mesh.midpoint(e);
                    Ok(v(t, m[0], m[1]))
                }
                CrVariant::S2 => {
                    let [p, q] = mesh.edge_points(e);
                    let rule = gauss_segment(p, q, 4);
                    let len: f64 = rule.weights.iter().sum();
                    Ok(rule.integrate(|x, y| v(t, x, y)) / len)
                }
                CrVariant::S3 => {
                    let dual = l2_dual(mesh, &quarter_square(mesh, e, QuarterPoint::First), e)?;
                    let mut total = 0.0;
                    for (tt, x, w) in mesh.quadrature(&dual.region, 6)? {
                        let psi: f64 = dual
                            .indices
                            .iter()
                            .zip(&dual.coeffs)
                            .map(|(f, c)| c * mesh.basis_on(*f, tt, x))
                            .sum();
                        total += w * psi * v(tt, x[0], x[1]);
                    }
                    Ok(total)
                }
            }
        })
        .collect()
}

/// Sorts both lists and returns the largest relative difference.
pub fn multiset_gap(computed: &[f64], expected: &[f64]) -> f64 {
    if computed.len() != expected.len() {
        return f64::INFINITY;
    }
    let mut a = computed.to_vec();
    let mut b = expected.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs() / y.abs()).fold(0.0, f64::max)
}

/// Reference dual coefficients (times `h²`) for axis-parallel edges.
pub const AXIS_EDGE_COEFFS: [f64; 5] = [-18048.0, 6528.0, 12672.0, 6528.0, 31104.0];

/// Reference dual coefficients (times `h²`) for diagonal edges.
pub fn diagonal_edge_coeffs() -> [f64; 5] {
    let s = 8.0 * std::f64::consts::SQRT_2;
    let q1 = -384.0 * (s - 1.0);
    let q2 = -384.0 * (s - 129.0);
    [q1, q2, 24960.0, q2, q1]
}
