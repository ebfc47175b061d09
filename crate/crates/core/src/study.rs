//! Manufactured-solution convergence studies.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::assembly::{assemble_load, assemble_matrices, field_from_coefficients, solve, PiecewiseP2Field, SparseSPDSystem, LOAD_ORDER};
use crate::basis::interior_space;
use crate::error::{Error, Result};
use crate::interpolation::Coefficients;
use crate::mesh::{PatternLayout, TensorGrid, DEFAULT_PATTERN_LAYOUT, DEFAULT_PATTERN_RATIO};
use crate::polynomial::gauss_rect;

/// Gauss order per direction for error integrals.
pub const ERROR_ORDER: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExampleId {
    /// Unit square, `u = (sin πx sin πy)²`.
    One,
    /// L-shape `(0,2)² \ [1,2]²`, same `u`.
    Two,
    /// Unit square, `f = 2π² sin πx sin πy`, compared against `u⁰ = sin πx sin πy`.
    Three,
}

impl ExampleId {
    pub fn from_number(n: u32) -> Option<Self> {
        match n {
            1 => Some(ExampleId::One),
            2 => Some(ExampleId::Two),
            3 => Some(ExampleId::Three),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        match self {
            ExampleId::One => 1,
            ExampleId::Two => 2,
            ExampleId::Three => 3,
        }
    }

    pub fn reference(self) -> Reference {
        match self {
            ExampleId::One | ExampleId::Two => Reference::SineSquared,
            ExampleId::Three => Reference::Sine,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MeshKind {
    Uniform,
    Pattern,
}

/// Value, gradient and Hessian `(u_xx, u_xy, u_yy)` of a reference field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    /// `(sin πx sin πy)²`.
    SineSquared,
    /// `sin πx sin πy`.
    Sine,
}

/// `g = sin²(πt)` and its first four derivatives.
fn sin2(t: f64) -> [f64; 5] {
    let (s, c) = (2.0 * PI * t).sin_cos();
    [
        0.5 * (1.0 - c),
        PI * s,
        2.0 * PI * PI * c,
        -4.0 * PI.powi(3) * s,
        -8.0 * PI.powi(4) * c,
    ]
}

impl Reference {
    pub fn jet(self, x: f64, y: f64) -> Jet {
        match self {
            Reference::SineSquared => {
                let (g, h) = (sin2(x), sin2(y));
                Jet {
                    value: g[0] * h[0],
                    grad: [g[1] * h[0], g[0] * h[1]],
                    hess: [g[2] * h[0], g[1] * h[1], g[0] * h[2]],
                }
            }
            Reference::Sine => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                let p2 = PI * PI;
                Jet {
                    value: sx * sy,
                    grad: [PI * cx * sy, PI * sx * cy],
                    hess: [-p2 * sx * sy, p2 * cx * cy, -p2 * sx * sy],
                }
            }
        }
    }

    pub fn laplacian(self, x: f64, y: f64) -> f64 {
        let j = self.jet(x, y);
        j.hess[0] + j.hess[2]
    }

    pub fn bilaplacian(self, x: f64, y: f64) -> f64 {
        match self {
            Reference::SineSquared => {
                let (g, h) = (sin2(x), sin2(y));
                g[4] * h[0] + 2.0 * g[2] * h[2] + g[0] * h[4]
            }
            Reference::Sine => 4.0 * PI.powi(4) * (PI * x).sin() * (PI * y).sin(),
        }
    }
}

/// An example problem on a chosen mesh family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleSpec {
    pub id: ExampleId,
    pub mesh: MeshKind,
    pub ratio: f64,
    pub layout: PatternLayout,
}

impl ExampleSpec {
    pub fn new(id: ExampleId, mesh: MeshKind) -> Self {
        ExampleSpec { id, mesh, ratio: DEFAULT_PATTERN_RATIO, layout: DEFAULT_PATTERN_LAYOUT }
    }

    pub fn grid(&self, level: u32) -> Result<TensorGrid> {
        let n = 1usize << level;
        match (self.id, self.mesh) {
            (ExampleId::Two, MeshKind::Uniform) => TensorGrid::lshape_uniform(n),
            (ExampleId::Two, MeshKind::Pattern) => {
                TensorGrid::lshape_pattern_with_layout(level, self.ratio, self.layout)
            }
            (_, MeshKind::Uniform) => TensorGrid::uniform(crate::polynomial::Rect::new(0.0, 1.0, 0.0, 1.0), n),
            (_, MeshKind::Pattern) => TensorGrid::pattern_with_layout(level, self.ratio, self.layout),
        }
    }

    /// Right-hand side `f` for a given `ε`.
    pub fn source(&self, eps: f64) -> impl Fn(f64, f64) -> f64 + Sync {
        let r = self.id.reference();
        let id = self.id;
        move |x, y| match id {
            ExampleId::Three => 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin(),
            _ => eps * eps * r.bilaplacian(x, y) - r.laplacian(x, y),
        }
    }
}

/// Error and reference seminorms `(L², H¹, H²)`, broken over cells.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub error: [f64; 3],
    pub reference: [f64; 3],
}

impl ErrorNorms {
    pub fn energy(eps: f64, s: &[f64; 3]) -> f64 {
        (eps * eps * s[2] * s[2] + s[1] * s[1]).sqrt()
    }

    pub fn relative_energy(&self, eps: f64) -> f64 {
        Self::energy(eps, &self.error) / Self::energy(eps, &self.reference)
    }

    pub fn relative(&self, k: usize) -> f64 {
        self.error[k] / self.reference[k]
    }
}

/// Broken seminorms of `reference − field` and of `reference` by tensor Gauss.
pub fn error_norms(field: &PiecewiseP2Field, reference: impl Fn(f64, f64) -> Jet, order: usize) -> ErrorNorms {
    let mut e = [0.0; 3];
    let mut r = [0.0; 3];
    for (_, rect, p) in &field.pieces {
        let q = gauss_rect(rect, order);
        let ph = p.hessian();
        for (x, w) in q.nodes.iter().zip(&q.weights) {
            let j = reference(x[0], x[1]);
            let v = p.eval(x[0], x[1]);
            let g = p.grad(x[0], x[1]);
            let [dxx, dxy, dyy] = [j.hess[0] - ph[0][0], j.hess[1] - ph[0][1], j.hess[2] - ph[1][1]];
            e[0] += w * (j.value - v).powi(2);
            e[1] += w * ((j.grad[0] - g[0]).powi(2) + (j.grad[1] - g[1]).powi(2));
            e[2] += w * (dxx * dxx + 2.0 * dxy * dxy + dyy * dyy);
            r[0] += w * j.value * j.value;
            r[1] += w * (j.grad[0].powi(2) + j.grad[1].powi(2));
            r[2] += w * (j.hess[0].powi(2) + 2.0 * j.hess[1].powi(2) + j.hess[2].powi(2));
        }
    }
    ErrorNorms { error: e.map(f64::sqrt), reference: r.map(f64::sqrt) }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub level: u32,
    pub h: f64,
    pub dofs: usize,
    pub rel_energy: f64,
    pub rel_h1: f64,
    pub rel_h2: f64,
    pub rel_l2: f64,
}

impl ConvergenceRow {
    pub fn energy_error(eps: f64, level: u32, h: f64, dofs: usize, norms: &ErrorNorms) -> Self {
        ConvergenceRow {
            eps,
            level,
            h,
            dofs,
            rel_energy: norms.relative_energy(eps),
            rel_h1: norms.relative(1),
            rel_h2: norms.relative(2),
            rel_l2: norms.relative(0),
        }
    }
}

/// Least-squares slope of `log e` against `log h`.
pub fn rate_fit(hs: &[f64], errors: &[f64]) -> Result<f64> {
    if hs.len() != errors.len() || hs.len() < 2 {
        return Err(Error::InsufficientData(hs.len().min(errors.len())));
    }
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(1));
    }
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub spec: ExampleSpec,
    pub rows: Vec<ConvergenceRow>,
    /// `(ε, fitted rate)` per ε, in input order.
    pub rates: Vec<(f64, f64)>,
}

impl ConvergenceTable {
    pub fn rows_for(&self, eps: f64) -> Vec<&ConvergenceRow> {
        self.rows.iter().filter(|r| r.eps == eps).collect()
    }

    pub fn rate_for(&self, eps: f64) -> Option<f64> {
        self.rates.iter().find(|(e, _)| *e == eps).map(|(_, r)| *r)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,h,rel_energy,rel_h1,rel_h2,rel_l2\n");
        for (eps, rate) in &self.rates {
            for r in self.rows_for(*eps) {
                writeln!(
                    out,
                    "{:e},{:e},{:.6e},{:.6e},{:.6e},{:.6e}",
                    r.eps, r.h, r.rel_energy, r.rel_h1, r.rel_h2, r.rel_l2
                )
                .unwrap();
            }
            writeln!(out, "# rate eps={eps:e} value={rate:.4}").unwrap();
        }
        out
    }
}

/// Solution on one mesh level for several `ε`.
struct LevelRun {
    grid: TensorGrid,
    system: SparseSPDSystem,
    f4: Vec<f64>,
    f2: Vec<f64>,
    set: crate::basis::BasisSet,
}

fn prepare_level(spec: &ExampleSpec, level: u32) -> Result<LevelRun> {
    let grid = spec.grid(level)?;
    let (_, set) = interior_space(&grid)?;
    let (a, b) = assemble_matrices(&grid, &set);
    let r = spec.id.reference();
    let (f4, f2) = match spec.id {
        ExampleId::Three => {
            let f = spec.source(0.0);
            (vec![0.0; set.len()], assemble_load(&grid, &set, f, LOAD_ORDER))
        }
        _ => (
            assemble_load(&grid, &set, |x, y| r.bilaplacian(x, y), LOAD_ORDER),
            assemble_load(&grid, &set, |x, y| -r.laplacian(x, y), LOAD_ORDER),
        ),
    };
    let system = SparseSPDSystem { a, b, f: Vec::new() };
    Ok(LevelRun { grid, system, f4, f2, set })
}

/// Discrete solution for one `ε` on a prepared level.
fn solve_level(run: &LevelRun, eps: f64) -> Result<PiecewiseP2Field> {
    let f: Vec<f64> = run.f4.iter().zip(&run.f2).map(|(a, b)| eps * eps * a + b).collect();
    let u = solve(&run.system.operator(eps), &f)?;
    Ok(field_from_coefficients(&run.grid, &run.set, &Coefficients(u)))
}

/// Solves `spec` on each level for each `ε` and fits the rates.
pub fn run_convergence(spec: &ExampleSpec, eps: &[f64], levels: &[u32]) -> Result<ConvergenceTable> {
    if levels.is_empty() || eps.is_empty() {
        return Err(Error::InsufficientData(0));
    }
    let reference = spec.id.reference();
    let per_level: Vec<Vec<ConvergenceRow>> = levels
        .par_iter()
        .map(|&level| {
            let run = prepare_level(spec, level)?;
            let h = run.grid.h();
            eps.par_iter()
                .map(|&e| {
                    let field = solve_level(&run, e)?;
                    let norms = error_norms(&field, |x, y| reference.jet(x, y), ERROR_ORDER);
                    Ok(ConvergenceRow::energy_error(e, level, h, run.set.len(), &norms))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &e in eps {
        for level_rows in &per_level {
            rows.extend(level_rows.iter().filter(|r| r.eps == e).copied());
        }
    }
    let mut rates = Vec::new();
    for &e in eps {
        let sel: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.eps == e).collect();
        let rate = if sel.len() >= 2 {
            let hs: Vec<f64> = sel.iter().map(|r| r.h).collect();
            let es: Vec<f64> = sel.iter().map(|r| r.rel_energy).collect();
            rate_fit(&hs, &es)?
        } else {
            f64::NAN
        };
        rates.push((e, rate));
    }
    Ok(ConvergenceTable { spec: *spec, rows, rates })
}

/// Reference relative energy errors for one example and mesh family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceTable {
    pub example: ExampleId,
    pub mesh: MeshKind,
    pub levels: [u32; 5],
    pub hs: [f64; 5],
    /// `(log₂ ε, errors, rate)`.
    pub rows: &'static [(i32, [f64; 5], f64)],
}

impl ReferenceTable {
    pub fn eps(&self) -> Vec<f64> {
        self.rows.iter().map(|(k, _, _)| 2f64.powi(*k)).collect()
    }
}

const PATTERN_HS: [f64; 5] = [3.250e-1, 1.625e-1, 8.125e-2, 4.063e-2, 2.031e-2];
const UNIFORM_HS: [f64; 5] = [0.25, 0.125, 0.0625, 0.03125, 0.015625];

const EX1_PATTERN: [(i32, [f64; 5], f64); 6] = [
    (0, [0.6196, 0.3127, 0.1556, 0.0776, 0.0388], 1.00),
    (-2, [0.5691, 0.2798, 0.1380, 0.0686, 0.0343], 1.01),
    (-4, [0.3691, 0.1597, 0.0699, 0.0330, 0.0162], 1.13),
    (-6, [0.2825, 0.1318, 0.0553, 0.0192, 0.0064], 1.37),
    (-8, [0.2746, 0.1337, 0.0664, 0.0311, 0.0127], 1.10),
    (-10, [0.2741, 0.1339, 0.0676, 0.0338, 0.0166], 1.01),
];

const EX1_UNIFORM: [(i32, [f64; 5], f64); 6] = [
    (0, [0.5403, 0.2754, 0.1376, 0.0688, 0.0344], 0.99),
    (-2, [0.4890, 0.2448, 0.1218, 0.0608, 0.0304], 1.00),
    (-4, [0.2926, 0.1238, 0.0585, 0.0288, 0.0144], 1.08),
    (-6, [0.2080, 0.0585, 0.0199, 0.0084, 0.0040], 1.42),
    (-8, [0.2002, 0.0502, 0.0130, 0.0037, 0.0013], 1.84),
    (-10, [0.1996, 0.0496, 0.0124, 0.0031, 0.0008], 1.99),
];

const EX2_PATTERN: [(i32, [f64; 5], f64); 6] = [
    (0, [0.6236, 0.3142, 0.1558, 0.0776, 0.0388], 1.00),
    (-2, [0.5722, 0.2812, 0.1382, 0.0687, 0.0343], 1.02),
    (-4, [0.3711, 0.1610, 0.0700, 0.0330, 0.0162], 1.13),
    (-6, [0.2863, 0.1349, 0.0556, 0.0192, 0.0064], 1.38),
    (-8, [0.2787, 0.1373, 0.0668, 0.0312, 0.0127], 1.11),
    (-10, [0.2782, 0.1375, 0.0681, 0.0338, 0.0166], 1.02),
];

const EX2_UNIFORM: [(i32, [f64; 5], f64); 6] = [
    (0, [0.5463, 0.2763, 0.1377, 0.0688, 0.0344], 1.00),
    (-2, [0.4938, 0.2456, 0.1219, 0.0608, 0.0304], 1.01),
    (-4, [0.2937, 0.1242, 0.0586, 0.0288, 0.0144], 1.08),
    (-6, [0.2077, 0.0585, 0.0200, 0.0084, 0.0040], 1.42),
    (-8, [0.1997, 0.0502, 0.0130, 0.0037, 0.0013], 1.84),
    (-10, [0.1991, 0.0496, 0.0124, 0.0031, 0.0008], 1.98),
];

const EX3_PATTERN: [(i32, [f64; 5], f64); 3] = [
    (-8, [0.5846, 0.3945, 0.2755, 0.1995, 0.1555], 0.48),
    (-10, [0.5843, 0.3934, 0.2725, 0.1912, 0.1358], 0.53),
    (-12, [0.5843, 0.3933, 0.2723, 0.1907, 0.1343], 0.53),
];

const EX3_UNIFORM: [(i32, [f64; 5], f64); 3] = [
    (-8, [0.5731, 0.3896, 0.2743, 0.1992, 0.1549], 0.47),
    (-10, [0.5728, 0.3886, 0.2714, 0.1913, 0.1362], 0.52),
    (-12, [0.5728, 0.3885, 0.2712, 0.1908, 0.1347], 0.52),
];

pub fn reference_table(example: ExampleId, mesh: MeshKind) -> ReferenceTable {
    let (levels, hs) = match mesh {
        MeshKind::Uniform => ([2, 3, 4, 5, 6], UNIFORM_HS),
        MeshKind::Pattern => ([1, 2, 3, 4, 5], PATTERN_HS),
    };
    let rows: &'static [(i32, [f64; 5], f64)] = match (example, mesh) {
        (ExampleId::One, MeshKind::Pattern) => &EX1_PATTERN,
        (ExampleId::One, MeshKind::Uniform) => &EX1_UNIFORM,
        (ExampleId::Two, MeshKind::Pattern) => &EX2_PATTERN,
        (ExampleId::Two, MeshKind::Uniform) => &EX2_UNIFORM,
        (ExampleId::Three, MeshKind::Pattern) => &EX3_PATTERN,
        (ExampleId::Three, MeshKind::Uniform) => &EX3_UNIFORM,
    };
    ReferenceTable { example, mesh, levels, hs, rows }
}

/// Tolerances for comparing a computed table with a [`ReferenceTable`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableTolerance {
    /// Entry passes if within this absolute difference...
    pub abs: f64,
    /// ...or within this relative difference. `None` skips entries.
    pub rel: Option<f64>,
    pub rate: f64,
}

impl TableTolerance {
    pub fn for_table(example: ExampleId, mesh: MeshKind) -> Self {
        match (example, mesh) {
            (ExampleId::Three, MeshKind::Uniform) => TableTolerance { abs: 0.0, rel: Some(0.02), rate: 0.05 },
            (_, MeshKind::Uniform) => TableTolerance { abs: 5e-4, rel: Some(0.02), rate: 0.05 },
            (_, MeshKind::Pattern) => TableTolerance { abs: 0.0, rel: None, rate: 0.1 },
        }
    }
}

/// One mismatch between a computed and a reference entry.
#[derive(Clone, Debug, PartialEq)]
pub struct TableMismatch {
    pub eps: f64,
    /// `None` for the rate column.
    pub h: Option<f64>,
    pub computed: f64,
    pub expected: f64,
}

/// Compares every entry and rate of `reference` present in `table`.
pub fn compare_with_reference(
    table: &ConvergenceTable,
    reference: &ReferenceTable,
    tol: &TableTolerance,
) -> Vec<TableMismatch> {
    let mut out = Vec::new();
    for ((_, errs, rate), eps) in reference.rows.iter().zip(reference.eps()) {
        let rows = table.rows_for(eps);
        if let Some(rel) = tol.rel {
            for (level, expected) in reference.levels.iter().zip(errs) {
                if let Some(r) = rows.iter().find(|r| r.level == *level) {
                    let diff = (r.rel_energy - expected).abs();
                    if diff > tol.abs && diff > rel * expected {
                        out.push(TableMismatch { eps, h: Some(r.h), computed: r.rel_energy, expected: *expected });
                    }
                }
            }
        }
        if let Some(got) = table.rate_for(eps) {
            if got.is_nan() || (got - rate).abs() > tol.rate {
                out.push(TableMismatch { eps, h: None, computed: got, expected: *rate });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(r: Reference, x: f64, y: f64) {
        let d = 1e-5;
        let j = r.jet(x, y);
        let gx = (r.jet(x + d, y).value - r.jet(x - d, y).value) / (2.0 * d);
        let gy = (r.jet(x, y + d).value - r.jet(x, y - d).value) / (2.0 * d);
        assert!((gx - j.grad[0]).abs() < 1e-7 * (1.0 + gx.abs()));
        assert!((gy - j.grad[1]).abs() < 1e-7 * (1.0 + gy.abs()));
        let hxy = (r.jet(x, y + d).grad[0] - r.jet(x, y - d).grad[0]) / (2.0 * d);
        let hxx = (r.jet(x + d, y).grad[0] - r.jet(x - d, y).grad[0]) / (2.0 * d);
        let hyy = (r.jet(x, y + d).grad[1] - r.jet(x, y - d).grad[1]) / (2.0 * d);
        for (a, b) in [hxx, hxy, hyy].iter().zip(j.hess) {
            assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()));
        }
        // Δ²u by a five-point Laplacian of the closed-form Laplacian
        let e = 1e-3;
        let lap = |x: f64, y: f64| r.laplacian(x, y);
        let fd = (lap(x + e, y) + lap(x - e, y) + lap(x, y + e) + lap(x, y - e) - 4.0 * lap(x, y)) / (e * e);
        let exact = r.bilaplacian(x, y);
        assert!((fd - exact).abs() < 1e-4 * (1.0 + exact.abs()), "{fd} vs {exact}");
    }

    #[test]
    fn reference_derivatives() {
        for (x, y) in [(0.3, 0.7), (0.11, 0.52), (1.4, 0.2)] {
            fd_check(Reference::SineSquared, x, y);
            fd_check(Reference::Sine, x, y);
        }
    }

    #[test]
    fn lshape_reference_is_clamped() {
        let r = Reference::SineSquared;
        for k in 0..=40 {
            let t = 2.0 * k as f64 / 40.0;
            for (x, y) in [(t, 0.0), (0.0, t), (t, 2.0), (2.0, t), (t, 1.0), (1.0, t)] {
                let j = r.jet(x, y);
                assert!(j.value.abs() < 1e-14);
                assert!(j.grad[0].abs() < 1e-14 && j.grad[1].abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rate_fit_exact_slopes() {
        let hs = [0.5, 0.25, 0.125, 0.0625];
        let half: Vec<f64> = hs.iter().map(|h| 3.0 * h).collect();
        let quarter: Vec<f64> = hs.iter().map(|h| 7.0 * h * h).collect();
        assert!((rate_fit(&hs, &half).unwrap() - 1.0).abs() < 1e-12);
        assert!((rate_fit(&hs, &quarter).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(rate_fit(&hs[..1], &half[..1]), Err(Error::InsufficientData(1))));
    }

    #[test]
    fn rate_fit_on_reference_rows() {
        for (example, mesh) in [
            (ExampleId::One, MeshKind::Uniform),
            (ExampleId::Two, MeshKind::Uniform),
            (ExampleId::Three, MeshKind::Uniform),
        ] {
            let t = reference_table(example, mesh);
            for (_, errs, rate) in t.rows {
                let fitted = rate_fit(&t.hs, errs).unwrap();
                assert!((fitted - rate).abs() <= 0.02, "{example:?}: {fitted} vs {rate}");
            }
        }
    }

    #[test]
    fn self_comparison_is_zero() {
        let g = TensorGrid::pattern(1, 0.65).unwrap();
        let (_, set) = interior_space(&g).unwrap();
        let c = Coefficients((0..set.len()).map(|k| (k as f64).sin()).collect());
        let field = field_from_coefficients(&g, &set, &c);
        let lookup = |x: f64, y: f64| {
            let cell = g.locate(x, y).unwrap();
            let p = field.pieces.iter().find(|(c, _, _)| *c == cell).unwrap().2;
            let h = p.hessian();
            Jet { value: p.eval(x, y), grad: p.grad(x, y), hess: [h[0][0], h[0][1], h[1][1]] }
        };
        let n = error_norms(&field, lookup, ERROR_ORDER);
        assert!(n.error.iter().all(|e| *e < 1e-13));
    }

    #[test]
    fn error_quadrature_has_converged() {
        let spec = ExampleSpec::new(ExampleId::One, MeshKind::Uniform);
        let run = prepare_level(&spec, 2).unwrap();
        let field = solve_level(&run, 1.0).unwrap();
        let r = Reference::SineSquared;
        let a = error_norms(&field, |x, y| r.jet(x, y), 10);
        let b = error_norms(&field, |x, y| r.jet(x, y), 14);
        assert!((a.relative_energy(1.0) - b.relative_energy(1.0)).abs() < 1e-10);
    }

    #[test]
    fn zero_eps_limit_is_h1_error() {
        let spec = ExampleSpec::new(ExampleId::One, MeshKind::Uniform);
        let run = prepare_level(&spec, 3).unwrap();
        let field = solve_level(&run, 0.01).unwrap();
        let n = error_norms(&field, |x, y| Reference::SineSquared.jet(x, y), ERROR_ORDER);
        let mut last = f64::INFINITY;
        for k in 4..12 {
            let gap = (n.relative_energy(2f64.powi(-k)) - n.relative(1)).abs();
            assert!(gap <= last);
            last = gap;
        }
        assert!((n.relative_energy(0.0) - n.relative(1)).abs() < 1e-15);
    }

    #[test]
    fn single_uniform_row() {
        let spec = ExampleSpec::new(ExampleId::One, MeshKind::Uniform);
        let t = run_convergence(&spec, &[1.0], &[2, 3]).unwrap();
        assert_eq!(t.rows.len(), 2);
        let csv = t.to_csv();
        assert!(csv.starts_with("eps,h,rel_energy,rel_h1,rel_h2,rel_l2\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
