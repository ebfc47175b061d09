//! Bivariate quadratics on axis-aligned rectangles, tensor Gauss rules and
//! the Morley degree-of-freedom fit used to realize per-cell restrictions.

use nalgebra::{Matrix6, SMatrix, Vector6};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    /// Extent in x (`L_K`).
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    /// Extent in y (`H_K`).
    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// `h_K = max(L_K, H_K)`.
    pub fn size(&self) -> f64 {
        self.width().max(self.height())
    }

    /// Radius of the inscribed circle.
    pub fn inradius(&self) -> f64 {
        0.5 * self.width().min(self.height())
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Rect {
        Rect::new(self.x0 + dx, self.x1 + dx, self.y0 + dy, self.y1 + dy)
    }

    /// Vertices in the order LL, LR, UL, UR.
    pub fn vertices(&self) -> [[f64; 2]; 4] {
        [
            [self.x0, self.y0],
            [self.x1, self.y0],
            [self.x0, self.y1],
            [self.x1, self.y1],
        ]
    }
}

/// A quadratic `c₀ + c_x ξ + c_y η + c_xx ξ² + c_xy ξη + c_yy η²` in the
/// scaled local frame `ξ = (x − x_c)/ℓ`, `η = (y − y_c)/ℓ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct P2Poly {
    pub center: [f64; 2],
    pub scale: f64,
    pub coeffs: [f64; 6],
}

impl P2Poly {
    pub fn new(center: [f64; 2], scale: f64, coeffs: [f64; 6]) -> Self {
        P2Poly { center, scale, coeffs }
    }

    /// Zero polynomial in the canonical frame of `rect` (barycenter, `h_K`).
    pub fn zero_on(rect: &Rect) -> Self {
        P2Poly::new(rect.center(), rect.size(), [0.0; 6])
    }

    /// Re-expresses a global quadratic in the canonical frame of `rect`.
    pub fn from_quadratic(rect: &Rect, q: &Quadratic) -> Self {
        let [xc, yc] = rect.center();
        let l = rect.size();
        let [_, ax, ay, axx, axy, ayy] = q.coeffs;
        P2Poly::new(
            [xc, yc],
            l,
            [
                q.eval(xc, yc),
                l * (ax + 2.0 * axx * xc + axy * yc),
                l * (ay + axy * xc + 2.0 * ayy * yc),
                l * l * axx,
                l * l * axy,
                l * l * ayy,
            ],
        )
    }

    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.center[0]) / self.scale,
            (y - self.center[1]) / self.scale,
        )
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (s, t) = self.local(x, y);
        let c = &self.coeffs;
        c[0] + c[1] * s + c[2] * t + c[3] * s * s + c[4] * s * t + c[5] * t * t
    }

    pub fn grad(&self, x: f64, y: f64) -> [f64; 2] {
        let (s, t) = self.local(x, y);
        let c = &self.coeffs;
        [
            (c[1] + 2.0 * c[3] * s + c[4] * t) / self.scale,
            (c[2] + c[4] * s + 2.0 * c[5] * t) / self.scale,
        ]
    }

    /// Constant Hessian `[[p_xx, p_xy], [p_xy, p_yy]]`.
    pub fn hessian(&self) -> [[f64; 2]; 2] {
        let c = &self.coeffs;
        let l2 = self.scale * self.scale;
        let xy = c[4] / l2;
        [[2.0 * c[3] / l2, xy], [xy, 2.0 * c[5] / l2]]
    }

    pub fn same_frame(&self, other: &P2Poly) -> bool {
        self.center == other.center && self.scale == other.scale
    }

    /// `self += alpha * other`; both must live in the same frame.
    pub fn axpy(&mut self, alpha: f64, other: &P2Poly) {
        debug_assert!(self.same_frame(other), "P2Poly frames differ");
        for (a, b) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> P2Poly {
        let mut out = *self;
        out.coeffs.iter_mut().for_each(|c| *c *= alpha);
        out
    }

    /// Morley degrees of freedom of this polynomial on `rect`.
    pub fn morley_dofs(&self, rect: &Rect) -> MorleyDofs {
        let vertex_values = rect.vertices().map(|[x, y]| self.eval(x, y));
        let [xc, yc] = rect.center();
        // normal derivatives of a quadratic are affine along an edge, so the
        // edge mean equals the midpoint value
        let bottom = -self.grad(xc, rect.y0)[1];
        let top = self.grad(xc, rect.y1)[1];
        let left = -self.grad(rect.x0, yc)[0];
        let right = self.grad(rect.x1, yc)[0];
        MorleyDofs {
            vertex_values,
            edge_normal_means: [bottom, top, left, right],
        }
    }
}

/// A quadratic in global coordinates:
/// `a₀ + a_x x + a_y y + a_xx x² + a_xy xy + a_yy y²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadratic {
    pub coeffs: [f64; 6],
}

impl Quadratic {
    pub const ONE: Quadratic = Quadratic::monomial(0);
    pub const X: Quadratic = Quadratic::monomial(1);
    pub const Y: Quadratic = Quadratic::monomial(2);
    pub const XX: Quadratic = Quadratic::monomial(3);
    pub const XY: Quadratic = Quadratic::monomial(4);
    pub const YY: Quadratic = Quadratic::monomial(5);

    /// The six monomials `1, x, y, x², xy, y²` in coefficient order.
    pub const MONOMIALS: [Quadratic; 6] = [
        Quadratic::ONE,
        Quadratic::X,
        Quadratic::Y,
        Quadratic::XX,
        Quadratic::XY,
        Quadratic::YY,
    ];

    pub const fn new(coeffs: [f64; 6]) -> Self {
        Quadratic { coeffs }
    }

    const fn monomial(k: usize) -> Self {
        let mut coeffs = [0.0; 6];
        coeffs[k] = 1.0;
        Quadratic { coeffs }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let a = &self.coeffs;
        a[0] + a[1] * x + a[2] * y + a[3] * x * x + a[4] * x * y + a[5] * y * y
    }

    pub fn grad(&self, x: f64, y: f64) -> [f64; 2] {
        let a = &self.coeffs;
        [
            a[1] + 2.0 * a[3] * x + a[4] * y,
            a[2] + a[4] * x + 2.0 * a[5] * y,
        ]
    }

    pub fn dxx(&self) -> f64 {
        2.0 * self.coeffs[3]
    }

    pub fn dxy(&self) -> f64 {
        self.coeffs[4]
    }

    pub fn dyy(&self) -> f64 {
        2.0 * self.coeffs[5]
    }

    /// Lies in `Q₁` (no `x²`, `y²` terms).
    pub fn is_bilinear(&self) -> bool {
        self.coeffs[3] == 0.0 && self.coeffs[5] == 0.0
    }

    /// Exact cell mean `⨍_rect q`.
    pub fn mean_over(&self, rect: &Rect) -> f64 {
        let [xc, yc] = rect.center();
        let (l, h) = (rect.width(), rect.height());
        self.eval(xc, yc) + self.coeffs[3] * l * l / 12.0 + self.coeffs[5] * h * h / 12.0
    }
}

/// Morley degrees of freedom on a rectangle.
///
/// Vertex ordering: LL, LR, UL, UR. Edge ordering: bottom, top, left, right,
/// each the mean of the derivative along the outward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MorleyDofs {
    pub vertex_values: [f64; 4],
    pub edge_normal_means: [f64; 4],
}

/// Default relative residual tolerance for [`fit_p2_from_morley`].
pub const FIT_TOLERANCE: f64 = 1e-9;

/// Fits the unique quadratic with the given Morley degrees of freedom.
///
/// The eight conditions are overdetermined for the six coefficients; the fit
/// solves the normal equations in the scaled local frame and rejects data
/// whose relative least-squares residual exceeds `tol`.
pub fn fit_p2_from_morley(rect: &Rect, dofs: &MorleyDofs, tol: f64) -> Result<P2Poly> {
    let l = rect.size();
    let a = 0.5 * rect.width() / l;
    let b = 0.5 * rect.height() / l;

    // rows in local coordinates; derivative rows are multiplied by ℓ
    #[rustfmt::skip]
    let m = SMatrix::<f64, 8, 6>::from_row_slice(&[
        1.0, -a, -b, a * a,  a * b, b * b,
        1.0,  a, -b, a * a, -a * b, b * b,
        1.0, -a,  b, a * a, -a * b, b * b,
        1.0,  a,  b, a * a,  a * b, b * b,
        0.0, 0.0, -1.0, 0.0, 0.0, 2.0 * b,
        0.0, 0.0,  1.0, 0.0, 0.0, 2.0 * b,
        0.0, -1.0, 0.0, 2.0 * a, 0.0, 0.0,
        0.0,  1.0, 0.0, 2.0 * a, 0.0, 0.0,
    ]);
    let mut d = SMatrix::<f64, 8, 1>::zeros();
    for k in 0..4 {
        d[k] = dofs.vertex_values[k];
        d[4 + k] = l * dofs.edge_normal_means[k];
    }

    let norm_d = d.norm();
    if norm_d == 0.0 {
        return Ok(P2Poly::zero_on(rect));
    }
    let normal: Matrix6<f64> = m.transpose() * m;
    let rhs: Vector6<f64> = m.transpose() * d;
    let chol = normal
        .cholesky()
        .expect("Morley fit normal matrix is positive definite for any rectangle");
    let c = chol.solve(&rhs);
    let residual = (m * c - d).norm() / norm_d;
    if residual.is_nan() || residual > tol {
        return Err(Error::InconsistentDofs { residual });
    }
    Ok(P2Poly::new(
        rect.center(),
        l,
        [c[0], c[1], c[2], c[3], c[4], c[5]],
    ))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (pn, pn1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (x * pn - pn1) / (x * x - 1.0);
    (pn, d)
}

/// A quadrature rule on a region: nodes with positive weights.
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Tensor Gauss–Legendre rule with `n` points per direction; exact for `Q_{2n−1}`.
pub fn gauss_rect(rect: &Rect, n: usize) -> QuadRule {
    let (xi, wi) = gauss_legendre(n);
    let [xc, yc] = rect.center();
    let (hx, hy) = (0.5 * rect.width(), 0.5 * rect.height());
    let mut nodes = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (sy, wy) in xi.iter().zip(&wi) {
        for (sx, wx) in xi.iter().zip(&wi) {
            nodes.push([xc + hx * sx, yc + hy * sy]);
            weights.push(wx * wy * hx * hy);
        }
    }
    QuadRule { nodes, weights }
}

/// Gauss–Legendre rule on the segment from `a` to `b` (weights sum to its length).
pub fn gauss_segment(a: [f64; 2], b: [f64; 2], n: usize) -> QuadRule {
    let (xi, wi) = gauss_legendre(n);
    let half = 0.5 * ((b[0] - a[0]).hypot(b[1] - a[1]));
    let nodes = xi
        .iter()
        .map(|s| {
            let t = 0.5 * (1.0 + s);
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        })
        .collect();
    let weights = wi.iter().map(|w| w * half).collect();
    QuadRule { nodes, weights }
}

/// Cell mean of `f` by tensor Gauss of order `n`.
pub fn cell_mean(rect: &Rect, n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    gauss_rect(rect, n).integrate(f) / rect.area()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    #[test]
    fn midpoint_rule() {
        let q = gauss_rect(&unit(), 1);
        assert_eq!(q.len(), 1);
        assert_eq!(q.nodes[0], [0.5, 0.5]);
        assert_eq!(q.weights[0], 1.0);
    }

    #[test]
    fn two_point_rule_is_exact_for_x2y2() {
        let v = gauss_rect(&unit(), 2).integrate(|x, y| x * x * y * y);
        assert!((v - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn ten_point_rule_on_trig_product() {
        let v = gauss_rect(&unit(), 10).integrate(|x, y| {
            let s = (PI * x).sin() * (PI * y).sin();
            s * s
        });
        assert!((v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn legendre_weights_sum_to_two() {
        for n in 1..=16 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n={n}");
            // exact for x^(2n-2)
            let m = 2 * n - 2;
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(m as i32)).sum();
            assert!((approx - 2.0 / (m as f64 + 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn derivatives_of_monomials_in_local_frame() {
        let l = 0.3;
        let xi2 = P2Poly::new([1.0, 2.0], l, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(xi2.eval(1.0, 2.0), 0.0);
        assert_eq!(xi2.grad(1.0, 2.0), [0.0, 0.0]);
        assert!((xi2.hessian()[0][0] - 2.0 / (l * l)).abs() < 1e-12);
        let xieta = P2Poly::new([1.0, 2.0], l, [0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!((xieta.hessian()[0][1] - 1.0 / (l * l)).abs() < 1e-12);
    }

    #[test]
    fn fit_constant() {
        let dofs = MorleyDofs {
            vertex_values: [1.0; 4],
            edge_normal_means: [0.0; 4],
        };
        let p = fit_p2_from_morley(&unit(), &dofs, FIT_TOLERANCE).unwrap();
        for [x, y] in [[0.1, 0.2], [0.7, 0.9]] {
            assert!((p.eval(x, y) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn fit_x_squared() {
        let dofs = MorleyDofs {
            vertex_values: [0.0, 1.0, 0.0, 1.0],
            edge_normal_means: [0.0, 0.0, -0.0, 2.0],
        };
        let p = fit_p2_from_morley(&unit(), &dofs, FIT_TOLERANCE).unwrap();
        let expect = P2Poly::from_quadratic(&unit(), &Quadratic::XX);
        for (a, b) in p.coeffs.iter().zip(expect.coeffs.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn fit_rejects_perturbed_vertex() {
        let dofs = MorleyDofs {
            vertex_values: [1.0, 1.0, 0.0, 1.0],
            edge_normal_means: [0.0, 0.0, -0.0, 2.0],
        };
        // independent least-squares oracle on the unscaled system
        let rows: Vec<[f64; 6]> = vec![
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 1.0, 0.0, 0.0, 1.0],
            [1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            [0.0, 0.0, -1.0, 0.0, -0.5, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.5, 2.0],
            [0.0, -1.0, 0.0, 0.0, -0.5, 0.0],
            [0.0, 1.0, 0.0, 2.0, 0.5, 0.0],
        ];
        let m = nalgebra::DMatrix::from_fn(8, 6, |i, j| rows[i][j]);
        let d = nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let sol = m.clone().svd(true, true).solve(&d, 1e-14).unwrap();
        let oracle_residual = (&m * sol - &d).norm();
        assert!(oracle_residual > 0.1);
        match fit_p2_from_morley(&unit(), &dofs, FIT_TOLERANCE) {
            Err(Error::InconsistentDofs { residual }) => assert!(residual > 1e-2),
            other => panic!("expected InconsistentDofs, got {other:?}"),
        }
    }

    fn arb_rect() -> impl Strategy<Value = Rect> {
        (-3.0..3.0f64, -3.0..3.0f64, 0.01..2.0f64, 0.01..2.0f64)
            .prop_map(|(x, y, l, h)| Rect::new(x, x + l, y, y + h))
    }

    fn arb_coeffs() -> impl Strategy<Value = [f64; 6]> {
        prop::array::uniform6(-5.0..5.0f64)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn morley_fit_inverts_dof_extraction(rect in arb_rect(), c in arb_coeffs()) {
            let p = P2Poly::new(rect.center(), rect.size(), c);
            let fitted = fit_p2_from_morley(&rect, &p.morley_dofs(&rect), FIT_TOLERANCE).unwrap();
            for (a, b) in fitted.coeffs.iter().zip(c.iter()) {
                prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn two_point_gauss_is_exact_on_q3(rect in arb_rect(), c in prop::array::uniform16(-1.0..1.0f64)) {
            // Σ c_ij x^i y^j, i, j ≤ 3, against the analytic integral
            let f = |x: f64, y: f64| {
                let mut s = 0.0;
                for i in 0..4 { for j in 0..4 { s += c[4 * i + j] * x.powi(i as i32) * y.powi(j as i32); } }
                s
            };
            let prim = |a: f64, b: f64, k: i32| (b.powi(k + 1) - a.powi(k + 1)) / (k as f64 + 1.0);
            let mut exact = 0.0;
            for i in 0..4 { for j in 0..4 {
                exact += c[4 * i + j] * prim(rect.x0, rect.x1, i as i32) * prim(rect.y0, rect.y1, j as i32);
            } }
            let approx = gauss_rect(&rect, 2).integrate(f);
            let scale = c.iter().map(|v| v.abs()).sum::<f64>() * rect.area() * 250.0;
            prop_assert!((approx - exact).abs() <= 1e-13 * scale.max(exact.abs()));
        }

        #[test]
        fn gradient_matches_finite_differences(rect in arb_rect(), c in arb_coeffs(), s in -0.5..0.5f64, t in -0.5..0.5f64) {
            let p = P2Poly::new(rect.center(), rect.size(), c);
            let [xc, yc] = rect.center();
            let (x, y) = (xc + s * rect.width(), yc + t * rect.height());
            let d = 1e-5 * rect.size();
            let fx = (p.eval(x + d, y) - p.eval(x - d, y)) / (2.0 * d);
            let fy = (p.eval(x, y + d) - p.eval(x, y - d)) / (2.0 * d);
            let g = p.grad(x, y);
            let mag = c.iter().map(|v| v.abs()).sum::<f64>() / rect.size();
            prop_assert!((g[0] - fx).abs() < 1e-8 * mag.max(1.0));
            prop_assert!((g[1] - fy).abs() < 1e-8 * mag.max(1.0));
        }

        #[test]
        fn global_quadratic_round_trips_through_local_frame(rect in arb_rect(), c in arb_coeffs()) {
            let q = Quadratic::new(c);
            let p = P2Poly::from_quadratic(&rect, &q);
            for [x, y] in rect.vertices() {
                prop_assert!((p.eval(x, y) - q.eval(x, y)).abs() < 1e-11 * (1.0 + q.eval(x, y).abs()));
            }
            let h = p.hessian();
            prop_assert!((h[0][0] - q.dxx()).abs() < 1e-10 * (1.0 + q.dxx().abs()));
            prop_assert!((h[0][1] - q.dxy()).abs() < 1e-10 * (1.0 + q.dxy().abs()));
        }
    }
}
