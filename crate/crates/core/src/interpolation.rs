//! Quasi-interpolation by five-cell weighted averages.
//!
//! The functional `λ_K(v) = Σ_μ w_μ ⨍_{S_μ} v` over the center cell and its
//! four edge neighbours agrees with `t_K` on quadratics, so feeding it into
//! the patch basis reproduces `P_2` wherever all nine overlapping functions
//! are present.

use crate::basis::BasisSet;
use crate::mesh::{Cell, Lattice};
use crate::polynomial::{cell_mean, Quadratic, Rect};

/// Stencil cells in order: left, right, below, above, center.
#[derive(Clone, Debug, PartialEq)]
pub struct FiveCellStencil {
    pub center: Cell,
    pub cells: [Cell; 5],
    pub rects: [Rect; 5],
    pub weights: [f64; 5],
}

impl FiveCellStencil {
    /// `λ_K(v)` given cell means.
    pub fn apply(&self, mean: &impl Fn(Cell, &Rect) -> f64) -> f64 {
        (0..5).map(|k| self.weights[k] * mean(self.cells[k], &self.rects[k])).sum()
    }

    /// `λ_K(q)` with exact means of a global quadratic.
    pub fn apply_quadratic(&self, q: &Quadratic) -> f64 {
        self.apply(&|_, r: &Rect| q.mean_over(r))
    }
}

/// Stencil weights from the widths and heights of the cross around a cell.
pub fn stencil_weights(lengths: [f64; 3], heights: [f64; 3]) -> [f64; 5] {
    let [lm, l, lp] = lengths;
    let [hm, h, hp] = heights;
    let sx = lm + l + lp;
    let sy = hm + h + hp;
    let w1 = -l * l / ((lm + l) * sx);
    let w2 = -l * l / ((l + lp) * sx);
    let w3 = -h * h / ((hm + h) * sy);
    let w4 = -h * h / ((h + hp) * sy);
    [w1, w2, w3, w4, 1.0 - w1 - w2 - w3 - w4]
}

pub fn stencil(lattice: &Lattice, center: Cell) -> FiveCellStencil {
    let cells = [
        center.offset(-1, 0),
        center.offset(1, 0),
        center.offset(0, -1),
        center.offset(0, 1),
        center,
    ];
    let rects = cells.map(|c| lattice.rect(c));
    let lengths = [rects[0].width(), rects[4].width(), rects[1].width()];
    let heights = [rects[2].height(), rects[4].height(), rects[3].height()];
    FiveCellStencil { center, cells, rects, weights: stencil_weights(lengths, heights) }
}

/// Coefficient vector of a combination of a [`BasisSet`], in set order.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients(pub Vec<f64>);

impl Coefficients {
    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }
}

/// `Σ_K λ_K(v) φ_K` over every function of `set`; `mean(cell, rect)` must
/// return `⨍ v` on any lattice cell touched by a stencil.
pub fn interpolate(set: &BasisSet, lattice: &Lattice, mean: impl Fn(Cell, &Rect) -> f64) -> Coefficients {
    Coefficients(
        set.functions()
            .iter()
            .map(|f| stencil(lattice, f.center).apply(&mean))
            .collect(),
    )
}

/// `Π_h0`: interpolation into the discrete space (interior-centered set).
pub fn interpolate_h0(set: &BasisSet, lattice: &Lattice, mean: impl Fn(Cell, &Rect) -> f64) -> Coefficients {
    interpolate(set, lattice, mean)
}

/// `Π̃_h`: interpolation with the extended set.
pub fn interpolate_extended(
    set: &BasisSet,
    lattice: &Lattice,
    mean: impl Fn(Cell, &Rect) -> f64,
) -> Coefficients {
    interpolate(set, lattice, mean)
}

/// Cell means of a smooth function by Gauss quadrature of order `n`.
pub fn smooth_means(f: impl Fn(f64, f64) -> f64, n: usize) -> impl Fn(Cell, &Rect) -> f64 {
    move |_, r: &Rect| cell_mean(r, n, &f)
}
