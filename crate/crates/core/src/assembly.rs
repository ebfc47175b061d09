//! Broken Hessian and gradient forms on the discrete space and the solve of
//! `(ε²A + B) u = F`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::interpolation::Coefficients;
use crate::mesh::{Cell, TensorGrid};
use crate::polynomial::{gauss_rect, P2Poly, Rect};

/// Gauss order per direction for load vectors.
pub const LOAD_ORDER: usize = 6;

/// Relative residual target of the iterative fallback.
pub const CG_TOLERANCE: f64 = 1e-12;

/// `A` (broken Hessian), `B` (broken gradient) and a load vector `F`.
#[derive(Clone, Debug)]
pub struct SparseSPDSystem {
    pub a: CscMatrix<f64>,
    pub b: CscMatrix<f64>,
    pub f: Vec<f64>,
}

impl SparseSPDSystem {
    pub fn dim(&self) -> usize {
        self.f.len()
    }

    /// `ε²A + B`.
    pub fn operator(&self, eps: f64) -> CscMatrix<f64> {
        if eps == 0.0 {
            self.b.clone()
        } else {
            &(&self.a * (eps * eps)) + &self.b
        }
    }

    pub fn solve(&self, eps: f64) -> Result<Vec<f64>> {
        solve(&self.operator(eps), &self.f)
    }
}

fn hessian_inner(p: &P2Poly, q: &P2Poly) -> f64 {
    let (a, b) = (p.hessian(), q.hessian());
    a[0][0] * b[0][0] + 2.0 * a[0][1] * b[0][1] + a[1][1] * b[1][1]
}

/// Assembles `A` and `B` over the active cells of `grid`.
pub fn assemble_matrices(grid: &TensorGrid, set: &BasisSet) -> (CscMatrix<f64>, CscMatrix<f64>) {
    let n = set.len();
    let mut a = CooMatrix::new(n, n);
    let mut b = CooMatrix::new(n, n);
    for cell in grid.active_cells() {
        let rect = grid.cell_rect(cell);
        let local = set.on_cell(cell);
        if local.is_empty() {
            continue;
        }
        let quad = gauss_rect(&rect, 2);
        let grads: Vec<Vec<[f64; 2]>> = local
            .iter()
            .map(|(_, p)| quad.nodes.iter().map(|x| p.grad(x[0], x[1])).collect())
            .collect();
        for (r, (k, pk)) in local.iter().enumerate() {
            for (s, (l, pl)) in local.iter().enumerate() {
                a.push(*k, *l, rect.area() * hessian_inner(pk, pl));
                let g: f64 = quad
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(q, w)| w * (grads[r][q][0] * grads[s][q][0] + grads[r][q][1] * grads[s][q][1]))
                    .sum();
                b.push(*k, *l, g);
            }
        }
    }
    (CscMatrix::from(&a), CscMatrix::from(&b))
}

/// `F_k = ∫_Ω f φ_k` with tensor Gauss of the given order on each cell.
pub fn assemble_load(grid: &TensorGrid, set: &BasisSet, f: impl Fn(f64, f64) -> f64, order: usize) -> Vec<f64> {
    let mut out = vec![0.0; set.len()];
    for cell in grid.active_cells() {
        let local = set.on_cell(cell);
        if local.is_empty() {
            continue;
        }
        let quad = gauss_rect(&grid.cell_rect(cell), order);
        for (x, w) in quad.nodes.iter().zip(&quad.weights) {
            let fw = w * f(x[0], x[1]);
            for (k, p) in local {
                out[*k] += fw * p.eval(x[0], x[1]);
            }
        }
    }
    out
}

pub fn assemble(grid: &TensorGrid, set: &BasisSet, f: impl Fn(f64, f64) -> f64) -> SparseSPDSystem {
    let (a, b) = assemble_matrices(grid, set);
    let f = assemble_load(grid, set, f, LOAD_ORDER);
    SparseSPDSystem { a, b, f }
}

/// Solves an SPD system by sparse Cholesky, falling back to Jacobi-
/// preconditioned conjugate gradients if the factorization fails.
pub fn solve(k: &CscMatrix<f64>, f: &[f64]) -> Result<Vec<f64>> {
    if f.is_empty() {
        return Err(Error::EmptySpace);
    }
    match CscCholesky::factor(k) {
        Ok(chol) => {
            let rhs = DMatrix::from_column_slice(f.len(), 1, f);
            Ok(chol.solve(&rhs).column(0).iter().copied().collect())
        }
        Err(_) => conjugate_gradient(k, f, CG_TOLERANCE, 10 * f.len() + 100),
    }
}

fn mat_vec(k: &CscMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; k.nrows()];
    for (j, col) in k.col_iter().enumerate() {
        for (i, v) in col.row_indices().iter().zip(col.values()) {
            y[*i] += v * x[j];
        }
    }
    y
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient(k: &CscMatrix<f64>, f: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = f.len();
    let mut diag = vec![0.0; n];
    for (j, col) in k.col_iter().enumerate() {
        for (i, v) in col.row_indices().iter().zip(col.values()) {
            if *i == j {
                diag[j] = *v;
            }
        }
    }
    if diag.iter().any(|d| *d <= 0.0) {
        return Err(Error::SolveFailure("non-positive diagonal".into()));
    }
    let norm_f = dot(f, f).sqrt();
    let mut x = vec![0.0; n];
    if norm_f == 0.0 {
        return Ok(x);
    }
    let mut r = f.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let kp = mat_vec(k, &p);
        let alpha = rz / dot(&p, &kp);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        if dot(&r, &r).sqrt() <= tol * norm_f {
            return Ok(x);
        }
        z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolveFailure(format!("CG did not converge in {max_iter} iterations")))
}

/// `‖K u − F‖ / ‖F‖`.
pub fn relative_residual(k: &CscMatrix<f64>, u: &[f64], f: &[f64]) -> f64 {
    let ku = mat_vec(k, u);
    let r: f64 = ku.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    r / dot(f, f).sqrt()
}

/// Largest `|K_ij − K_ji|` relative to `max |K_ij|`.
pub fn asymmetry(k: &CscMatrix<f64>) -> f64 {
    let dense = DMatrix::from(k);
    let scale = dense.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (&dense - dense.transpose()).amax() / scale
}

/// A function that is a single quadratic on each active cell.
#[derive(Clone, Debug)]
pub struct PiecewiseP2Field {
    pub pieces: Vec<(Cell, Rect, P2Poly)>,
}

impl PiecewiseP2Field {
    pub fn eval(&self, grid: &TensorGrid, x: f64, y: f64) -> Option<f64> {
        let cell = grid.locate(x, y)?;
        self.pieces
            .binary_search_by(|(c, _, _)| c.cmp(&cell))
            .ok()
            .map(|k| self.pieces[k].2.eval(x, y))
    }
}

pub fn field_from_coefficients(grid: &TensorGrid, set: &BasisSet, coeffs: &Coefficients) -> PiecewiseP2Field {
    let mut pieces: Vec<(Cell, Rect, P2Poly)> = grid
        .active_cells()
        .into_iter()
        .map(|c| {
            let rect = grid.cell_rect(c);
            (c, rect, set.combine_on(c, &rect, |k| coeffs.get(k)))
        })
        .collect();
    pieces.sort_by_key(|p| p.0);
    PiecewiseP2Field { pieces }
}

/// `row col value` triplets, one per stored entry.
pub fn dump_matrix(k: &CscMatrix<f64>) -> String {
    let mut out = String::new();
    for (j, col) in k.col_iter().enumerate() {
        for (i, v) in col.row_indices().iter().zip(col.values()) {
            writeln!(out, "{i} {j} {v:.17e}").unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{interior_space, BasisSet};
    use crate::mesh::Lattice;
    use crate::interpolation::interpolate_h0;
    use crate::polynomial::Quadratic;

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    fn system(grid: &TensorGrid) -> SparseSPDSystem {
        let (_, set) = interior_space(grid).unwrap();
        assemble(grid, &set, |x, y| (x * 3.0).sin() + y)
    }

    #[test]
    fn matrices_are_symmetric() {
        for g in [TensorGrid::uniform(unit(), 8).unwrap(), TensorGrid::lshape_pattern(1, 0.65).unwrap()] {
            let s = system(&g);
            assert!(asymmetry(&s.a) < 1e-12);
            assert!(asymmetry(&s.b) < 1e-12);
        }
    }

    #[test]
    fn gradient_gram_is_positive_definite() {
        let s = system(&TensorGrid::pattern(2, 0.65).unwrap());
        let eig = nalgebra::SymmetricEigen::new(DMatrix::from(&s.b));
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn energy_matches_direct_quadrature() {
        // uᵀ(ε²A + B)u against a direct cellwise integration of the field
        let g = TensorGrid::pattern(2, 0.65).unwrap();
        let (_, set) = interior_space(&g).unwrap();
        let lat = Lattice::mirror(&g);
        let c = interpolate_h0(&set, &lat, |_, r: &Rect| Quadratic::new([0.3, 1.0, -2.0, 0.5, 1.5, -0.7]).mean_over(r));
        let s = assemble(&g, &set, |_, _| 0.0);
        let eps = 0.3;
        let ku = mat_vec(&s.operator(eps), &c.0);
        let quadratic_form = dot(&c.0, &ku);
        let field = field_from_coefficients(&g, &set, &c);
        let mut direct = 0.0;
        for (_, rect, p) in &field.pieces {
            let q = gauss_rect(rect, 5);
            let h = p.hessian();
            direct += eps * eps * rect.area() * (h[0][0].powi(2) + 2.0 * h[0][1].powi(2) + h[1][1].powi(2));
            direct += q.integrate(|x, y| {
                let [a, b] = p.grad(x, y);
                a * a + b * b
            });
        }
        assert!((quadratic_form - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn sparsity_is_lattice_distance_two() {
        let g = TensorGrid::lshape_uniform(4).unwrap();
        let (_, set) = interior_space(&g).unwrap();
        let s = assemble(&g, &set, |_, _| 1.0);
        let k = s.operator(1.0);
        let mut stored = std::collections::BTreeSet::new();
        for (j, col) in k.col_iter().enumerate() {
            for i in col.row_indices() {
                stored.insert((*i, j));
            }
        }
        for i in 0..set.len() {
            for j in 0..set.len() {
                let near = set.get(i).center.lattice_distance(set.get(j).center) <= 2;
                assert_eq!(stored.contains(&(i, j)), near);
            }
        }
    }

    #[test]
    fn cholesky_and_cg_agree() {
        let s = system(&TensorGrid::uniform(unit(), 10).unwrap());
        for eps in [1.0, 2f64.powi(-6), 2f64.powi(-12), 0.0] {
            let k = s.operator(eps);
            let u = solve(&k, &s.f).unwrap();
            assert!(relative_residual(&k, &u, &s.f) < 1e-10);
            let v = conjugate_gradient(&k, &s.f, 1e-13, 10_000).unwrap();
            let diff: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = u.iter().map(|a| a.abs()).fold(0.0, f64::max);
            assert!(diff < 1e-8 * scale, "eps {eps}: {diff}");
        }
    }

    #[test]
    fn translation_invariance() {
        let g = TensorGrid::pattern(2, 0.65).unwrap();
        let t = g.translated(0.37, -1.25);
        let (_, s1) = interior_space(&g).unwrap();
        let (_, s2) = interior_space(&t).unwrap();
        let (a1, b1) = assemble_matrices(&g, &s1);
        let (a2, b2) = assemble_matrices(&t, &s2);
        let gap = |x: &CscMatrix<f64>, y: &CscMatrix<f64>| {
            (DMatrix::from(x) - DMatrix::from(y)).amax() / DMatrix::from(x).amax()
        };
        assert!(gap(&a1, &a2) < 1e-10);
        assert!(gap(&b1, &b2) < 1e-10);
    }

    #[test]
    fn empty_space_is_reported() {
        let g = TensorGrid::uniform(unit(), 2).unwrap();
        assert!(matches!(interior_space(&g), Err(Error::EmptySpace)));
        let s = assemble(&g, &BasisSet::from_functions(Vec::new()), |_, _| 1.0);
        assert!(matches!(s.solve(1.0), Err(Error::EmptySpace)));
    }

    #[test]
    fn dump_lists_entries() {
        let s = system(&TensorGrid::uniform(unit(), 3).unwrap());
        let text = dump_matrix(&s.b);
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("0 0 "));
    }
}
