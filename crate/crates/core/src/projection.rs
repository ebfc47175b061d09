//! Existence tests for locally defined projective interpolations.
//!
//! A family `{φ_k}` with subdomains `{𝒟_k}` admits functionals
//! `λ_k(v) = ∫_{𝒟_k} ψ_k v` dual to the basis exactly when no `φ_k|_{𝒟_k}`
//! is a combination of the other functions restricted to `𝒟_k`. Restrictions
//! are handled as quadrature-weighted sample matrices `M` (one column per
//! function overlapping `𝒟_k`, `MᵀM` the L² Gram matrix), so dependence is
//! decided from a least-squares residual without forming the Gram matrix.

pub mod cr;

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::mesh::{Cell, Classification, TensorGrid};
use crate::polynomial::gauss_rect;

/// Relative least-squares residual below which a restriction counts as dependent.
pub const DEPENDENCE_TOLERANCE: f64 = 1e-9;

/// A subdomain `𝒟_k`.
#[derive(Clone, Debug, PartialEq)]
pub enum Subdomain {
    /// Union of active grid cells.
    Cells(Vec<Cell>),
    /// A convex polygon, counter-clockwise; clipped against the domain.
    Polygon(Vec<[f64; 2]>),
    /// The whole domain.
    Whole,
}

/// Restriction of the overlapping functions to a subdomain: rows are
/// quadrature points scaled by `√w`, columns are functions.
#[derive(Clone, Debug)]
pub struct Sampled {
    pub indices: Vec<usize>,
    pub matrix: DMatrix<f64>,
    pub area: f64,
}

impl Sampled {
    pub fn gram(&self) -> DMatrix<f64> {
        self.matrix.transpose() * &self.matrix
    }

    pub fn column_of(&self, k: usize) -> Option<usize> {
        self.indices.iter().position(|i| *i == k)
    }
}

/// A finite family of locally supported functions on a domain.
pub trait LocalBasisFamily {
    fn dim(&self) -> usize;

    /// Samples every function that does not vanish identically on `region`.
    fn sample(&self, region: &Subdomain) -> Result<Sampled>;
}

/// The RRM functions of a [`BasisSet`] on the active cells of a grid.
pub struct RrmFamily<'a> {
    pub grid: &'a TensorGrid,
    pub set: &'a BasisSet,
}

impl LocalBasisFamily for RrmFamily<'_> {
    fn dim(&self) -> usize {
        self.set.len()
    }

    fn sample(&self, region: &Subdomain) -> Result<Sampled> {
        let cells = match region {
            Subdomain::Cells(c) => c.clone(),
            Subdomain::Whole => self.grid.active_cells(),
            Subdomain::Polygon(_) => {
                return Err(Error::DegenerateSubdomain);
            }
        };
        let cells: Vec<Cell> = cells.into_iter().filter(|c| self.grid.is_active(*c)).collect();
        if cells.is_empty() {
            return Err(Error::DegenerateSubdomain);
        }
        let mut indices: Vec<usize> = cells
            .iter()
            .flat_map(|c| self.set.on_cell(*c).iter().map(|(k, _)| *k))
            .collect();
        indices.sort_unstable();
        indices.dedup();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut area = 0.0;
        for c in &cells {
            let rect = self.grid.cell_rect(*c);
            area += rect.area();
            let q = gauss_rect(&rect, 3);
            let local = self.set.on_cell(*c);
            for (x, w) in q.nodes.iter().zip(&q.weights) {
                let sw = w.sqrt();
                let mut row = vec![0.0; indices.len()];
                for (k, p) in local {
                    let col = indices.binary_search(k).expect("index collected above");
                    row[col] = sw * p.eval(x[0], x[1]);
                }
                rows.push(row);
            }
        }
        let matrix = DMatrix::from_fn(rows.len(), indices.len(), |r, c| rows[r][c]);
        Ok(Sampled { indices, matrix, area })
    }
}

/// Outcome of [`projectivity_test`].
#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    /// `φ_k|_𝒟 = Σ_j g_j φ_j|_𝒟` with the listed `(j, g_j)`.
    Representable { witness: Vec<(usize, f64)>, residual: f64 },
    NotRepresentable { residual: f64 },
}

impl Decision {
    pub fn is_representable(&self) -> bool {
        matches!(self, Decision::Representable { .. })
    }

    pub fn residual(&self) -> f64 {
        match self {
            Decision::Representable { residual, .. } | Decision::NotRepresentable { residual } => *residual,
        }
    }
}

/// Decides whether `φ_k|_𝒟` lies in the span of the other restrictions.
pub fn projectivity_test(
    family: &impl LocalBasisFamily,
    region: &Subdomain,
    k: usize,
    tol: f64,
) -> Result<Decision> {
    let s = family.sample(region)?;
    if s.area <= 0.0 {
        return Err(Error::DegenerateSubdomain);
    }
    Ok(decide(&s, k, tol))
}

fn decide(s: &Sampled, k: usize, tol: f64) -> Decision {
    let Some(col) = s.column_of(k) else {
        return Decision::Representable { witness: Vec::new(), residual: 0.0 };
    };
    let target = s.matrix.column(col).into_owned();
    let norm = target.norm();
    let others: Vec<usize> = (0..s.indices.len()).filter(|c| *c != col).collect();
    if others.is_empty() || norm == 0.0 {
        let residual = if norm == 0.0 { 0.0 } else { 1.0 };
        return if residual <= tol {
            Decision::Representable { witness: Vec::new(), residual }
        } else {
            Decision::NotRepresentable { residual }
        };
    }
    let m = s.matrix.select_columns(&others);
    let coeffs = least_squares(&m, &target);
    let residual = (&m * &coeffs - &target).norm() / norm;
    if residual <= tol {
        let witness = others.iter().zip(coeffs.iter()).map(|(c, g)| (s.indices[*c], *g)).collect();
        Decision::Representable { witness, residual }
    } else {
        Decision::NotRepresentable { residual }
    }
}

/// Minimum-norm least-squares solution by SVD.
fn least_squares(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = m.clone().svd(true, true);
    let cutoff = DEPENDENCE_TOLERANCE * svd.singular_values.max();
    svd.solve(b, cutoff).expect("SVD computed with both factors")
}

/// Number of singular values of `M` below `tol · σ_max`.
pub fn nullity(s: &Sampled, tol: f64) -> usize {
    let sv = s.matrix.clone().svd(false, false).singular_values;
    let cutoff = tol * sv.max();
    let rank = sv.iter().filter(|v| **v > cutoff).count();
    s.indices.len() - rank
}

/// Orthonormal basis (columns) of the null space of `M`: all coefficient
/// vectors `c` with `Σ c_j φ_j = 0` on the sampled region.
pub fn dependency_space(s: &Sampled, tol: f64) -> DMatrix<f64> {
    let svd = s.matrix.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let cutoff = tol * svd.singular_values.max();
    let n = s.indices.len();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for r in 0..v_t.nrows() {
        if svd.singular_values[r] <= cutoff {
            cols.push(v_t.row(r).transpose());
        }
    }
    // wide matrices have more columns than singular values
    if v_t.nrows() < n {
        let full = s.matrix.transpose() * &s.matrix;
        let eig = full.symmetric_eigen();
        let scale = eig.eigenvalues.amax();
        cols = (0..n)
            .filter(|i| eig.eigenvalues[*i].abs() <= tol * tol * scale)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
    }
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&cols)
}

/// `‖v − P v‖ / ‖v‖` with `P` the orthogonal projector onto the columns of
/// an orthonormal `basis`.
pub fn distance_to_span(basis: &DMatrix<f64>, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    let norm = v.norm();
    if basis.ncols() == 0 {
        return 1.0;
    }
    let proj = basis * (basis.transpose() * &v);
    (v - proj).norm() / norm
}

/// True iff every cell of `cells` is active and covered by nine functions of
/// the interior set, i.e. all eight neighbours and itself are interior cells.
pub fn completely_subdomain_check(grid: &TensorGrid, class: &Classification, cells: &[Cell]) -> bool {
    !cells.is_empty()
        && cells.iter().all(|c| {
            grid.is_active(*c)
                && (-1..=1).all(|di| (-1..=1).all(|dj| class.is_interior(c.offset(di, dj))))
        })
}

/// `ψ_k = Σ_j c_j φ_j|_{𝒟_k}`, zero outside `𝒟_k`.
#[derive(Clone, Debug)]
pub struct DualFunctional {
    pub k: usize,
    pub region: Subdomain,
    pub indices: Vec<usize>,
    pub coeffs: Vec<f64>,
}

/// L² dual of `φ_k` on `region`: solves `G c = e_k` on the overlapping
/// functions (minimum-norm if `G` is singular).
pub fn l2_dual(family: &impl LocalBasisFamily, region: &Subdomain, k: usize) -> Result<DualFunctional> {
    let s = family.sample(region)?;
    let col = s
        .column_of(k)
        .ok_or_else(|| Error::SingularGram(format!("function {k} vanishes on its subdomain")))?;
    let gram = s.gram();
    let mut e = DVector::zeros(s.indices.len());
    e[col] = 1.0;
    let svd = gram.clone().svd(true, true);
    let cutoff = 1e-14 * svd.singular_values.max();
    let c = svd.solve(&e, cutoff).map_err(|m| Error::SingularGram(m.to_string()))?;
    if (&gram * &c - &e).norm() > 1e-8 {
        return Err(Error::SingularGram(format!("function {k} is dependent on its subdomain")));
    }
    Ok(DualFunctional { k, region: region.clone(), indices: s.indices, coeffs: c.iter().copied().collect() })
}

/// Largest `|∫ ψ_s φ_t − δ_st|` over all duals and all functions.
pub fn duality_defect(family: &impl LocalBasisFamily, duals: &[DualFunctional]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for d in duals {
        let s = family.sample(&d.region)?;
        let psi = &s.matrix * DVector::from_column_slice(&d.coeffs);
        for (col, t) in s.indices.iter().enumerate() {
            let value = psi.dot(&s.matrix.column(col));
            let expect = if *t == d.k { 1.0 } else { 0.0 };
            worst = worst.max((value - expect).abs());
        }
    }
    Ok(worst)
}

/// Compares two vectors up to one global scalar: `‖a/‖a‖ ∓ b/‖b‖‖`.
pub fn normalized_difference(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x / na - sign * y / nb).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `‖Σ_j g_j φ_j − φ_k‖ / ‖φ_k‖` on the sampled region.
pub fn witness_residual(s: &Sampled, k: usize, witness: &[(usize, f64)]) -> f64 {
    let Some(col) = s.column_of(k) else {
        return 0.0;
    };
    let target = s.matrix.column(col);
    let mut combo = DVector::zeros(s.matrix.nrows());
    for (j, g) in witness {
        if let Some(c) = s.column_of(*j) {
            combo += s.matrix.column(c) * *g;
        }
    }
    (combo - target).norm() / target.norm()
}

/// The witness read off the checkerboard identity:
/// `φ_K = −Σ_{T≠K} (d_T L_T H_T)/(d_K L_K H_K) φ_T`.
pub fn checkerboard_witness(set: &BasisSet, indices: &[usize], k: usize) -> Vec<(usize, f64)> {
    let d = checkerboard_vector(set, indices);
    let Some(pos) = indices.iter().position(|i| *i == k) else {
        return Vec::new();
    };
    indices
        .iter()
        .zip(&d)
        .filter(|(j, _)| **j != k)
        .map(|(j, dj)| (*j, -dj / d[pos]))
        .collect()
}

/// Checkerboard coefficients `(−1)^{i+j} L_T H_T` of the functions of `set`
/// listed in `indices`.
pub fn checkerboard_vector(set: &BasisSet, indices: &[usize]) -> Vec<f64> {
    indices
        .iter()
        .map(|k| {
            let f = set.get(*k);
            f.center.parity_sign() * f.pieces[1][1].rect.area()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::interior_space;
    use crate::mesh::TensorGrid;
    use crate::polynomial::Rect;

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    #[test]
    fn completely_subdomain_on_six_by_six() {
        let g = TensorGrid::uniform(unit(), 6).unwrap();
        let class = crate::mesh::classify(&g).unwrap();
        // oracle: a cell qualifies iff each of its 3×3 neighbours has all
        // four vertices strictly inside, i.e. indices 2..=3 on a 6×6 grid
        for i in 0..6 {
            for j in 0..6 {
                let c = Cell::new(i, j);
                let expect = (2..=3).contains(&i) && (2..=3).contains(&j);
                assert_eq!(completely_subdomain_check(&g, &class, &[c]), expect, "{c:?}");
            }
        }
        let g = TensorGrid::uniform(unit(), 10).unwrap();
        let class = crate::mesh::classify(&g).unwrap();
        assert!(!completely_subdomain_check(&g, &class, &g.active_cells()));
    }

    #[test]
    fn whole_domain_never_representable() {
        let g = TensorGrid::pattern(2, 0.65).unwrap();
        let (_, set) = interior_space(&g).unwrap();
        let fam = RrmFamily { grid: &g, set: &set };
        for k in 0..set.len() {
            let d = projectivity_test(&fam, &Subdomain::Whole, k, DEPENDENCE_TOLERANCE).unwrap();
            assert!(!d.is_representable(), "{k}: {d:?}");
            assert!(d.residual() > 1e-3);
        }
    }

    #[test]
    fn completely_cell_is_representable() {
        let g = TensorGrid::uniform(unit(), 8).unwrap();
        let (class, set) = interior_space(&g).unwrap();
        let fam = RrmFamily { grid: &g, set: &set };
        let cell = Cell::new(4, 3);
        assert!(completely_subdomain_check(&g, &class, &[cell]));
        let k = set.index_of(cell).unwrap();
        let d = projectivity_test(&fam, &Subdomain::Cells(vec![cell]), k, DEPENDENCE_TOLERANCE).unwrap();
        assert!(d.is_representable());
        assert!(d.residual() < 1e-10);
    }

    #[test]
    fn dependencies_are_modulated_checkerboards() {
        for g in [TensorGrid::uniform(unit(), 9).unwrap(), TensorGrid::lshape_pattern(2, 0.65).unwrap()] {
            let (class, set) = interior_space(&g).unwrap();
            let fam = RrmFamily { grid: &g, set: &set };
            let cells = vec![Cell::new(3, 3), Cell::new(4, 3), Cell::new(3, 4)];
            assert!(completely_subdomain_check(&g, &class, &cells));
            let s = fam.sample(&Subdomain::Cells(cells)).unwrap();
            let space = dependency_space(&s, DEPENDENCE_TOLERANCE);
            assert_eq!(space.ncols(), 3);
            assert_eq!(nullity(&s, DEPENDENCE_TOLERANCE), 3);
            let d = checkerboard_vector(&set, &s.indices);
            assert!(distance_to_span(&space, &d) < 1e-9);
            for axis in 0..2 {
                let v: Vec<f64> = s
                    .indices
                    .iter()
                    .zip(&d)
                    .map(|(k, dk)| dk * set.get(*k).pieces[1][1].rect.center()[axis])
                    .collect();
                assert!(distance_to_span(&space, &v) < 1e-9);
            }
            let k = set.index_of(Cell::new(3, 3)).unwrap();
            let w = checkerboard_witness(&set, &s.indices, k);
            assert!(witness_residual(&s, k, &w) < 1e-10);
            let Decision::Representable { witness, .. } = decide(&s, k, DEPENDENCE_TOLERANCE) else {
                panic!("completely subdomain must be dependent");
            };
            assert!(witness_residual(&s, k, &witness) < 1e-10);
        }
    }

    #[test]
    fn decisions_are_tolerance_robust() {
        let g = TensorGrid::uniform(unit(), 8).unwrap();
        let (_, set) = interior_space(&g).unwrap();
        let fam = RrmFamily { grid: &g, set: &set };
        let cases = [
            (Subdomain::Cells(vec![Cell::new(4, 4)]), Cell::new(4, 4), true),
            (Subdomain::Whole, Cell::new(4, 4), false),
            (Subdomain::Cells(vec![Cell::new(1, 1), Cell::new(2, 1)]), Cell::new(2, 2), false),
        ];
        for (region, center, expect) in cases {
            let k = set.index_of(center).unwrap();
            for tol in [1e-12, 1e-10, 1e-9, 1e-8, 1e-6] {
                let d = projectivity_test(&fam, &region, k, tol).unwrap();
                assert_eq!(d.is_representable(), expect, "{region:?} tol {tol}");
            }
        }
    }

    #[test]
    fn degenerate_region() {
        let g = TensorGrid::uniform(unit(), 6).unwrap();
        let (_, set) = interior_space(&g).unwrap();
        let fam = RrmFamily { grid: &g, set: &set };
        let r = projectivity_test(&fam, &Subdomain::Cells(vec![]), 0, 1e-9);
        assert!(matches!(r, Err(Error::DegenerateSubdomain)));
    }

    #[test]
    fn global_duals_exist() {
        let g = TensorGrid::uniform(unit(), 5).unwrap();
        let (_, set) = interior_space(&g).unwrap();
        let fam = RrmFamily { grid: &g, set: &set };
        let duals: Vec<_> = (0..set.len()).map(|k| l2_dual(&fam, &Subdomain::Whole, k).unwrap()).collect();
        assert!(duality_defect(&fam, &duals).unwrap() < 1e-9);
    }

    #[test]
    fn normalized_difference_ignores_scale_and_sign() {
        assert!(normalized_difference(&[1.0, -2.0], &[-3.0, 6.0]) < 1e-15);
        assert!(normalized_difference(&[1.0, 0.0], &[0.0, 1.0]) > 1.0);
    }
}
