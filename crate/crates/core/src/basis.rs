//! The patch basis functions `φ_K` of the RRM space.
//!
//! Each `φ_K` is piecewise quadratic on the 3×3 patch around `K`. Its Morley
//! degrees of freedom are fixed in closed form by the patch widths; every
//! piece is recovered by a Morley fit that also checks the data are
//! consistent with a single quadratic per cell.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{classify, Cell, Classification, Lattice, Patch3x3, TensorGrid};
use crate::polynomial::{fit_p2_from_morley, gauss_rect, MorleyDofs, P2Poly, Quadratic, Rect, FIT_TOLERANCE};

/// One quadratic piece of a patch function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub cell: Cell,
    pub rect: Rect,
    pub poly: P2Poly,
    pub real: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchBasisFn {
    pub center: Cell,
    /// Indexed `[column][row]` like [`Patch3x3::cell_map`].
    pub pieces: [[Piece; 3]; 3],
}

impl PatchBasisFn {
    pub fn piece(&self, cell: Cell) -> Option<&Piece> {
        let a = cell.i - self.center.i + 1;
        let b = cell.j - self.center.j + 1;
        if (0..3).contains(&a) && (0..3).contains(&b) {
            Some(&self.pieces[a as usize][b as usize])
        } else {
            None
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Piece> {
        self.pieces.iter().flatten()
    }

    /// Value at a point of the given lattice cell (zero outside the patch).
    pub fn eval_in(&self, cell: Cell, x: f64, y: f64) -> f64 {
        self.piece(cell).map_or(0.0, |p| p.poly.eval(x, y))
    }
}

/// Closed-form parameters of `φ_K`: `(γ_x, γ_y, anchor)`.
pub fn shape_parameters(patch: &Patch3x3) -> (f64, f64, f64) {
    let [lm, l, lp] = patch.lengths;
    let [hm, h, hp] = patch.heights;
    let gx = (1.0 + l / lm) / (1.0 + l / lp);
    let gy = (1.0 + h / hm) / (1.0 + h / hp);
    let anchor = lm / (lm + l) * hm / (hm + h);
    (gx, gy, anchor)
}

/// Builds `φ_K` on a patch.
pub fn build_phi(patch: &Patch3x3) -> Result<PatchBasisFn> {
    let [lm, _, lp] = patch.lengths;
    let [hm, _, hp] = patch.heights;
    let (gx, gy, a) = shape_parameters(patch);

    // vertex values on the 4×4 patch lattice, [x line][y line]
    let mut v = [[0.0; 4]; 4];
    v[1][1] = a;
    v[2][1] = gx * a;
    v[1][2] = gy * a;
    v[2][2] = gx * gy * a;

    // ∂_y at midpoints of horizontal edges, [column][y line]
    let mut dy = [[0.0; 4]; 3];
    let below = [1.0, 1.0 + gx, gx].map(|c| c * a / hm);
    let above = [gy, (1.0 + gx) * gy, gx * gy].map(|c| -c * a / hp);
    for m in 0..3 {
        dy[m][1] = below[m];
        dy[m][2] = above[m];
    }

    // ∂_x at midpoints of vertical edges, [x line][row]
    let mut dx = [[0.0; 3]; 4];
    dx[1] = [1.0, 1.0 + gy, gy].map(|c| c * a / lm);
    dx[2] = [gx, (1.0 + gy) * gx, gx * gy].map(|c| -c * a / lp);

    let mut pieces = [[None; 3]; 3];
    for (c, column) in pieces.iter_mut().enumerate() {
        for (r, slot) in column.iter_mut().enumerate() {
            let pc = patch.cell_map[c][r];
            let dofs = MorleyDofs {
                vertex_values: [v[c][r], v[c + 1][r], v[c][r + 1], v[c + 1][r + 1]],
                edge_normal_means: [-dy[c][r], dy[c][r + 1], -dx[c][r], dx[c + 1][r]],
            };
            let poly = fit_p2_from_morley(&pc.rect, &dofs, FIT_TOLERANCE)?;
            *slot = Some(Piece { cell: pc.cell, rect: pc.rect, poly, real: pc.real });
        }
    }
    Ok(PatchBasisFn {
        center: patch.center,
        pieces: pieces.map(|col| col.map(|p| p.expect("every piece is fitted"))),
    })
}

/// An indexed family of patch functions with per-cell lookup.
#[derive(Clone, Debug)]
pub struct BasisSet {
    functions: Vec<PatchBasisFn>,
    index: HashMap<Cell, usize>,
    /// For each lattice cell, the functions whose patch contains it.
    by_cell: HashMap<Cell, Vec<(usize, P2Poly)>>,
}

impl BasisSet {
    pub fn from_functions(functions: Vec<PatchBasisFn>) -> Self {
        let mut index = HashMap::new();
        let mut by_cell: HashMap<Cell, Vec<(usize, P2Poly)>> = HashMap::new();
        for (k, f) in functions.iter().enumerate() {
            index.insert(f.center, k);
            for p in f.iter() {
                by_cell.entry(p.cell).or_default().push((k, p.poly));
            }
        }
        BasisSet { functions, index, by_cell }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[PatchBasisFn] {
        &self.functions
    }

    pub fn get(&self, k: usize) -> &PatchBasisFn {
        &self.functions[k]
    }

    pub fn index_of(&self, center: Cell) -> Option<usize> {
        self.index.get(&center).copied()
    }

    /// `(function index, piece)` for every function supported on `cell`.
    pub fn on_cell(&self, cell: Cell) -> &[(usize, P2Poly)] {
        self.by_cell.get(&cell).map_or(&[], Vec::as_slice)
    }

    /// `Σ c_k φ_k` restricted to `cell`, in the cell's canonical frame.
    pub fn combine_on(&self, cell: Cell, rect: &Rect, coeffs: impl Fn(usize) -> f64) -> P2Poly {
        let mut acc = P2Poly::zero_on(rect);
        for (k, p) in self.on_cell(cell) {
            acc.axpy(coeffs(*k), p);
        }
        acc
    }
}

/// Basis functions centered at the given cells, in the given order.
pub fn build_set(grid: &TensorGrid, lattice: &Lattice, centers: &[Cell]) -> Result<BasisSet> {
    let functions = centers
        .iter()
        .map(|c| build_phi(&Patch3x3::from_lattice(grid, lattice, *c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BasisSet::from_functions(functions))
}

/// The discrete space: functions centered at interior cells.
pub fn build_interior_set(grid: &TensorGrid, class: &Classification, lattice: &Lattice) -> Result<BasisSet> {
    if class.interior_cells.is_empty() {
        return Err(Error::EmptySpace);
    }
    build_set(grid, lattice, &class.interior_cells)
}

/// The extended family: functions centered at every patch center.
pub fn build_extended_set(grid: &TensorGrid, class: &Classification, lattice: &Lattice) -> Result<BasisSet> {
    build_set(grid, lattice, &class.extended_centers())
}

/// Discrete space of a grid with mirror ghosts; convenient entry point.
pub fn interior_space(grid: &TensorGrid) -> Result<(Classification, BasisSet)> {
    let class = classify(grid)?;
    let set = build_interior_set(grid, &class, &Lattice::mirror(grid))?;
    Ok((class, set))
}

/// `r_K(v) = v(c_K) − (L_K² v_xx + H_K² v_yy)/8`.
pub fn point_functional(q: &Quadratic, rect: &Rect) -> f64 {
    let [xc, yc] = rect.center();
    let (l, h) = (rect.width(), rect.height());
    q.eval(xc, yc) - (l * l * q.dxx() + h * h * q.dyy()) / 8.0
}

/// `t_K(v) = ⨍_K v − (L_K² v_xx + H_K² v_yy)/6`.
pub fn mean_functional(q: &Quadratic, rect: &Rect) -> f64 {
    let (l, h) = (rect.width(), rect.height());
    q.mean_over(rect) - (l * l * q.dxx() + h * h * q.dyy()) / 6.0
}

/// Largest violation of each reproduction identity over a set of cells.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityReport {
    /// `Σ v(c_K) φ_K = v` for bilinear `v`.
    pub q1_point: f64,
    /// `Σ ⨍_K v φ_K = v` for bilinear `v`.
    pub q1_mean: f64,
    /// `Σ r_K(v) φ_K = v` for quadratic `v`.
    pub p2_point: f64,
    /// `Σ t_K(v) φ_K = v` for quadratic `v`.
    pub p2_mean: f64,
    /// `Σ (−1)^{i+j} L_K H_K φ_K = 0`, relative to `max L_K H_K`.
    pub checkerboard: f64,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        [self.q1_point, self.q1_mean, self.p2_point, self.p2_mean, self.checkerboard]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn coeff_gap(a: &P2Poly, b: &P2Poly) -> f64 {
    a.coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Checks the reproduction identities of `set` on `cells`, each of which
/// must be covered by all nine surrounding patch functions.
pub fn verify_identities(set: &BasisSet, cells: &[(Cell, Rect)]) -> IdentityReport {
    let mut report = IdentityReport::default();
    let rect_of = |k: usize| set.get(k).pieces[1][1].rect;
    let bilinear = [Quadratic::ONE, Quadratic::X, Quadratic::Y, Quadratic::XY];
    for (cell, rect) in cells {
        let apply = |q: &Quadratic, functional: &dyn Fn(&Quadratic, &Rect) -> f64| {
            set.combine_on(*cell, rect, |k| functional(q, &rect_of(k)))
        };
        for q in &bilinear {
            let target = P2Poly::from_quadratic(rect, q);
            let point = apply(q, &|q, r| {
                let [x, y] = r.center();
                q.eval(x, y)
            });
            let mean = apply(q, &|q, r| q.mean_over(r));
            report.q1_point = report.q1_point.max(coeff_gap(&point, &target));
            report.q1_mean = report.q1_mean.max(coeff_gap(&mean, &target));
        }
        for q in &Quadratic::MONOMIALS {
            let target = P2Poly::from_quadratic(rect, q);
            let point = apply(q, &point_functional);
            let mean = apply(q, &mean_functional);
            report.p2_point = report.p2_point.max(coeff_gap(&point, &target));
            report.p2_mean = report.p2_mean.max(coeff_gap(&mean, &target));
        }
        let scale = set
            .on_cell(*cell)
            .iter()
            .map(|(k, _)| rect_of(*k).area())
            .fold(0.0, f64::max);
        let checker = set.combine_on(*cell, rect, |k| set.get(k).center.parity_sign() * rect_of(k).area());
        let zero = P2Poly::zero_on(rect);
        report.checkerboard = report.checkerboard.max(coeff_gap(&checker, &zero) / scale);
    }
    report
}

/// `(|p|_{0,K}, |p|_{1,K}, |p|_{2,K})`, exact for quadratics.
pub fn seminorms(p: &P2Poly, rect: &Rect) -> [f64; 3] {
    let q = gauss_rect(rect, 3);
    let l2 = q.integrate(|x, y| p.eval(x, y).powi(2));
    let h1 = q.integrate(|x, y| {
        let [gx, gy] = p.grad(x, y);
        gx * gx + gy * gy
    });
    let h = p.hessian();
    let h2 = rect.area() * (h[0][0].powi(2) + 2.0 * h[0][1].powi(2) + h[1][1].powi(2));
    [l2.sqrt(), h1.sqrt(), h2.sqrt()]
}

/// Smallest `C` with `|φ_K|_{k,T} ≤ C h_K^{1−k}` for `k = 0, 1, 2` over all
/// pieces of `f`.
pub fn norm_bound_constant(f: &PatchBasisFn) -> f64 {
    let hk = f.pieces[1][1].rect.size();
    f.iter()
        .flat_map(|p| {
            let s = seminorms(&p.poly, &p.rect);
            [s[0] / hk, s[1], s[2] * hk]
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DEFAULT_GAMMA0;
    use crate::polynomial::Rect;
    use proptest::prelude::*;

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    fn uniform_patch(h: f64) -> Patch3x3 {
        let g = TensorGrid::uniform(Rect::new(0.0, 3.0 * h, 0.0, 3.0 * h), 3).unwrap();
        Patch3x3::from_lattice(&g, &Lattice::mirror(&g), Cell::new(1, 1))
    }

    fn grid_from(xs: Vec<f64>, ys: Vec<f64>) -> TensorGrid {
        let n = (xs.len() - 1) * (ys.len() - 1);
        TensorGrid::new(xs, ys, vec![true; n], crate::mesh::DomainKind::Custom).unwrap()
    }

    #[test]
    fn uniform_parameters() {
        let (gx, gy, a) = shape_parameters(&uniform_patch(0.1));
        assert_eq!((gx, gy), (1.0, 1.0));
        assert!((a - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pieces_match_morley_data() {
        let f = build_phi(&uniform_patch(1.0)).unwrap();
        let c = &f.pieces[1][1];
        // center cell: vertex values all a = 1/4
        let d = c.poly.morley_dofs(&c.rect);
        for v in d.vertex_values {
            assert!((v - 0.25).abs() < 1e-13);
        }
        // normal derivative at the top midpoint is −(1+γx)γy a/H₁ = −1/2
        assert!((d.edge_normal_means[1] + 0.5).abs() < 1e-13);
        // patch corners vanish with zero slopes on the outer edges
        let ll = f.pieces[0][0].poly.morley_dofs(&f.pieces[0][0].rect);
        assert!(ll.vertex_values[0].abs() < 1e-14);
        assert!(ll.edge_normal_means[0].abs() < 1e-14);
        assert!((ll.vertex_values[3] - 0.25).abs() < 1e-13);
    }

    #[test]
    fn corner_piece_closed_form() {
        // independent hand computation on the unit lower-left piece:
        // p = a(x²/2 + xy + y²/2 − x/2 − y/2) with a = 1/4
        let f = build_phi(&uniform_patch(1.0)).unwrap();
        let p = &f.pieces[0][0];
        for (x, y) in [(0.3, 0.7), (0.9, 0.1), (0.5, 0.5)] {
            let expect = 0.25 * (x * x / 2.0 + x * y + y * y / 2.0 - x / 2.0 - y / 2.0);
            assert!((p.poly.eval(x, y) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn identities_uniform_and_pattern() {
        let grids = [
            TensorGrid::uniform(unit(), 4).unwrap(),
            TensorGrid::uniform(unit(), 8).unwrap(),
            TensorGrid::uniform(unit(), 16).unwrap(),
            TensorGrid::pattern(1, 0.65).unwrap(),
            TensorGrid::pattern(2, 0.65).unwrap(),
            TensorGrid::pattern(3, 0.65).unwrap(),
            TensorGrid::lshape_uniform(4).unwrap(),
            TensorGrid::lshape_pattern(2, 0.65).unwrap(),
        ];
        for g in grids {
            for scale in [1.0, 1.3] {
                let class = classify(&g).unwrap();
                let set = build_extended_set(&g, &class, &Lattice::scaled_ghosts(&g, scale)).unwrap();
                let cells: Vec<_> = g.active_cells().into_iter().map(|c| (c, g.cell_rect(c))).collect();
                let r = verify_identities(&set, &cells);
                assert!(r.max() < 1e-10, "{r:?}");
            }
        }
    }

    #[test]
    fn interior_basis_vanishes_near_boundary() {
        let g = TensorGrid::lshape_uniform(4).unwrap();
        let (_, set) = interior_space(&g).unwrap();
        for f in set.functions() {
            assert!(f.iter().all(|p| p.real));
        }
        // boundary data of every interior function vanish on ∂Ω
        for f in set.functions() {
            for p in f.iter() {
                let d = p.poly.morley_dofs(&p.rect);
                let nbrs = crate::mesh::cell_edges(p.cell).map(|e| e.sides());
                for (k, sides) in nbrs.iter().enumerate() {
                    let other = if sides[0] == p.cell { sides[1] } else { sides[0] };
                    if !g.is_active(other) {
                        assert!(d.edge_normal_means[k].abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn norm_bound_is_moderate() {
        for g in [TensorGrid::uniform(unit(), 8).unwrap(), TensorGrid::pattern(3, 0.65).unwrap()] {
            let (_, set) = interior_space(&g).unwrap();
            let c = set.functions().iter().map(norm_bound_constant).fold(0.0, f64::max);
            assert!(c < 100.0 * DEFAULT_GAMMA0 * DEFAULT_GAMMA0, "C = {c}");
        }
    }

    #[test]
    fn lookup_by_cell() {
        let g = TensorGrid::uniform(unit(), 6).unwrap();
        let (class, set) = interior_space(&g).unwrap();
        assert_eq!(set.len(), class.interior_cells.len());
        assert_eq!(set.on_cell(Cell::new(2, 2)).len(), 9);
        assert_eq!(set.on_cell(Cell::new(0, 0)).len(), 1);
        let k = set.index_of(Cell::new(3, 2)).unwrap();
        assert_eq!(set.get(k).center, Cell::new(3, 2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]

        #[test]
        fn identities_random_tensor_grid(
            w in proptest::collection::vec(0.2f64..1.0, 6),
            hgt in proptest::collection::vec(0.2f64..1.0, 5),
            scale in 0.7f64..1.6,
        ) {
            let lines = |w: &[f64]| {
                let mut out = vec![0.0];
                for d in w {
                    out.push(out.last().unwrap() + d);
                }
                out
            };
            let g = grid_from(lines(&w), lines(&hgt));
            let class = classify(&g).unwrap();
            let set = build_extended_set(&g, &class, &Lattice::scaled_ghosts(&g, scale)).unwrap();
            let cells: Vec<_> = g.active_cells().into_iter().map(|c| (c, g.cell_rect(c))).collect();
            let r = verify_identities(&set, &cells);
            prop_assert!(r.max() < 1e-10, "{:?}", r);
        }
    }
}
