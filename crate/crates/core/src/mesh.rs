//! Rectangular tensor-product grids with an active-cell mask, their
//! topological classification, and ghost-extended 3×3 patches.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::polynomial::Rect;

/// Default bound on `max h_K/ρ_K`.
pub const DEFAULT_GAMMA0: f64 = 10.0;

/// Number of ghost rows/columns synthesized on each side of the grid.
pub const GHOST_LAYERS: i32 = 2;

/// Lattice index of a cell. Real cells have `0 ≤ i < nx`, `0 ≤ j < ny`;
/// exterior cells continue the lattice with negative or overflowing indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub i: i32,
    pub j: i32,
}

impl Cell {
    pub const fn new(i: i32, j: i32) -> Self {
        Cell { i, j }
    }

    pub fn offset(self, di: i32, dj: i32) -> Cell {
        Cell::new(self.i + di, self.j + dj)
    }

    /// Checkerboard sign `(−1)^{i+j}`.
    pub fn parity_sign(self) -> f64 {
        if (self.i + self.j).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Chebyshev distance between lattice cells.
    pub fn lattice_distance(self, other: Cell) -> i32 {
        (self.i - other.i).abs().max((self.j - other.j).abs())
    }
}

/// Lattice index of a grid vertex `(xs[i], ys[j])`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    pub i: i32,
    pub j: i32,
}

/// Grid edge. `Horizontal { i, j }` joins vertices `(i, j)`–`(i+1, j)`;
/// `Vertical { i, j }` joins `(i, j)`–`(i, j+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Edge {
    Horizontal { i: i32, j: i32 },
    Vertical { i: i32, j: i32 },
}

impl Edge {
    pub fn endpoints(self) -> [Vertex; 2] {
        match self {
            Edge::Horizontal { i, j } => [Vertex { i, j }, Vertex { i: i + 1, j }],
            Edge::Vertical { i, j } => [Vertex { i, j }, Vertex { i, j: j + 1 }],
        }
    }

    /// The two lattice cells sharing this edge (below/above or left/right).
    pub fn sides(self) -> [Cell; 2] {
        match self {
            Edge::Horizontal { i, j } => [Cell::new(i, j - 1), Cell::new(i, j)],
            Edge::Vertical { i, j } => [Cell::new(i - 1, j), Cell::new(i, j)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    Square,
    LShape,
    Custom,
}

/// How a pattern macro-cell split is repeated across the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatternLayout {
    /// Every macro-cell is split at `ratio` from its lower-left corner.
    Translated,
    /// Odd macro-cells are reflected, so neighbouring macros mirror each other.
    Mirrored,
}

/// Default layout for [`TensorGrid::pattern`].
pub const DEFAULT_PATTERN_LAYOUT: PatternLayout = PatternLayout::Translated;

/// Default split ratio of a pattern macro-cell.
pub const DEFAULT_PATTERN_RATIO: f64 = 0.65;

/// Rectangular tensor-product grid with an active-cell mask.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorGrid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    active: Vec<bool>,
    kind: DomainKind,
}

impl TensorGrid {
    /// Builds and validates a grid. `active` is indexed `j * nx + i`.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, active: Vec<bool>, kind: DomainKind) -> Result<Self> {
        if xs.len() < 2 || ys.len() < 2 {
            return Err(Error::InvalidMesh("need at least two lines per direction".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMesh("non-finite coordinate".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMesh("coordinates must be strictly increasing".into()));
        }
        let (nx, ny) = (xs.len() - 1, ys.len() - 1);
        if active.len() != nx * ny {
            return Err(Error::InvalidMesh(format!(
                "mask has {} entries, expected {}",
                active.len(),
                nx * ny
            )));
        }
        let grid = TensorGrid { xs, ys, active, kind };
        grid.check_topology()?;
        Ok(grid)
    }

    /// `n × n` equal cells covering `extent`.
    pub fn uniform(extent: Rect, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("cells per side must be positive".into()));
        }
        let xs = linspace(extent.x0, extent.x1, n);
        let ys = linspace(extent.y0, extent.y1, n);
        let kind = if extent == Rect::new(0.0, 1.0, 0.0, 1.0) {
            DomainKind::Square
        } else {
            DomainKind::Custom
        };
        TensorGrid::new(xs, ys, vec![true; n * n], kind)
    }

    /// Unit square tiled by `2^level × 2^level` macro-cells, each split at
    /// `ratio` in both directions.
    pub fn pattern(level: u32, ratio: f64) -> Result<Self> {
        Self::pattern_with_layout(level, ratio, DEFAULT_PATTERN_LAYOUT)
    }

    pub fn pattern_with_layout(level: u32, ratio: f64, layout: PatternLayout) -> Result<Self> {
        check_pattern_args(level, ratio)?;
        let lines = pattern_lines(0.0, 1usize << level, 0.5f64.powi(level as i32), ratio, layout);
        let n = lines.len() - 1;
        TensorGrid::new(lines.clone(), lines, vec![true; n * n], DomainKind::Square)
    }

    /// `(0,2)² \ [1,2]²` with `n` uniform cells per unit length.
    pub fn lshape_uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("cells per unit must be positive".into()));
        }
        lshape_from_lines(linspace(0.0, 2.0, 2 * n))
    }

    /// `(0,2)² \ [1,2]²` tiled by macro-cells of size `2^−level`.
    pub fn lshape_pattern(level: u32, ratio: f64) -> Result<Self> {
        Self::lshape_pattern_with_layout(level, ratio, DEFAULT_PATTERN_LAYOUT)
    }

    pub fn lshape_pattern_with_layout(level: u32, ratio: f64, layout: PatternLayout) -> Result<Self> {
        check_pattern_args(level, ratio)?;
        let lines = pattern_lines(0.0, 2usize << level, 0.5f64.powi(level as i32), ratio, layout);
        lshape_from_lines(lines)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn nx(&self) -> i32 {
        (self.xs.len() - 1) as i32
    }

    pub fn ny(&self) -> i32 {
        (self.ys.len() - 1) as i32
    }

    pub fn in_lattice(&self, c: Cell) -> bool {
        c.i >= 0 && c.j >= 0 && c.i < self.nx() && c.j < self.ny()
    }

    pub fn is_active(&self, c: Cell) -> bool {
        self.in_lattice(c) && self.active[(c.j * self.nx() + c.i) as usize]
    }

    /// Active cells in lattice order.
    pub fn active_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for i in 0..self.nx() {
            for j in 0..self.ny() {
                let c = Cell::new(i, j);
                if self.is_active(c) {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Geometry of a real (in-lattice) cell.
    pub fn cell_rect(&self, c: Cell) -> Rect {
        let (i, j) = (c.i as usize, c.j as usize);
        Rect::new(self.xs[i], self.xs[i + 1], self.ys[j], self.ys[j + 1])
    }

    /// Mesh size `h = max_K h_K` over active cells.
    pub fn h(&self) -> f64 {
        self.active_cells()
            .into_iter()
            .map(|c| self.cell_rect(c).size())
            .fold(0.0, f64::max)
    }

    /// Shape regularity `max_K h_K/ρ_K` over active cells.
    pub fn regularity(&self) -> f64 {
        self.active_cells()
            .into_iter()
            .map(|c| {
                let r = self.cell_rect(c);
                r.size() / r.inradius()
            })
            .fold(0.0, f64::max)
    }

    /// `Some(ratio)` when the regularity bound `gamma0` is exceeded.
    pub fn regularity_warning(&self, gamma0: f64) -> Option<f64> {
        let r = self.regularity();
        (r > gamma0).then_some(r)
    }

    /// Number of active cells having no vertex on the boundary.
    pub fn count_interior_cells(&self) -> usize {
        self.active_cells()
            .into_iter()
            .filter(|c| cell_vertices(*c).iter().all(|v| self.active_around(*v) == 4))
            .count()
    }

    /// Active real cell containing `(x, y)` (closed on the low side).
    pub fn locate(&self, x: f64, y: f64) -> Option<Cell> {
        let i = locate_interval(&self.xs, x)?;
        let j = locate_interval(&self.ys, y)?;
        let c = Cell::new(i as i32, j as i32);
        self.is_active(c).then_some(c)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> TensorGrid {
        TensorGrid {
            xs: self.xs.iter().map(|x| x + dx).collect(),
            ys: self.ys.iter().map(|y| y + dy).collect(),
            active: self.active.clone(),
            kind: DomainKind::Custom,
        }
    }

    /// Number of active cells among the four around a vertex.
    pub fn active_around(&self, v: Vertex) -> usize {
        vertex_cells(v).iter().filter(|c| self.is_active(**c)).count()
    }

    fn check_topology(&self) -> Result<()> {
        let cells = self.active_cells();
        let Some(&start) = cells.first() else {
            return Err(Error::InvalidMesh("no active cells".into()));
        };
        // edge-connected active region
        let reached = flood(start, |c| self.is_active(c));
        if reached != cells.len() {
            return Err(Error::InvalidMesh("active region is not edge-connected".into()));
        }
        // complement (including a ring outside the lattice) must be connected
        let outside = Cell::new(-1, -1);
        let within = |c: Cell| c.i >= -1 && c.j >= -1 && c.i <= self.nx() && c.j <= self.ny();
        let holes = (self.nx() + 2) * (self.ny() + 2) - cells.len() as i32;
        let reached = flood(outside, |c| within(c) && !self.is_active(c));
        if reached as i32 != holes {
            return Err(Error::InvalidMesh("active region is not simply connected".into()));
        }
        for i in 0..=self.nx() {
            for j in 0..=self.ny() {
                let v = Vertex { i, j };
                let [ll, lr, ul, ur] = vertex_cells(v).map(|c| self.is_active(c));
                if (ll && ur && !lr && !ul) || (lr && ul && !ll && !ur) {
                    return Err(Error::InvalidMesh(format!(
                        "active cells touch only at vertex {v:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump: the x line, the y line, then the mask, top row first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "{}", join(&self.xs)).unwrap();
        writeln!(out, "{}", join(&self.ys)).unwrap();
        for j in (0..self.ny()).rev() {
            let row: String = (0..self.nx())
                .map(|i| if self.is_active(Cell::new(i, j)) { '1' } else { '0' })
                .collect();
            writeln!(out, "{row}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut coords = || -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| Error::Parse("missing coordinate line".into()))?;
            line.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect()
        };
        let xs = coords()?;
        let ys = coords()?;
        let nx = xs.len().saturating_sub(1);
        let ny = ys.len().saturating_sub(1);
        let rows: Vec<&str> = lines.collect();
        if rows.len() != ny {
            return Err(Error::Parse(format!("expected {ny} mask rows, found {}", rows.len())));
        }
        let mut active = vec![false; nx * ny];
        for (r, row) in rows.iter().enumerate() {
            let j = ny - 1 - r;
            let row = row.trim();
            if row.len() != nx {
                return Err(Error::Parse(format!("mask row {r} has wrong length")));
            }
            for (i, ch) in row.chars().enumerate() {
                active[j * nx + i] = match ch {
                    '1' => true,
                    '0' => false,
                    other => return Err(Error::Parse(format!("bad mask character {other:?}"))),
                };
            }
        }
        TensorGrid::new(xs, ys, active, DomainKind::Custom)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
}

fn check_pattern_args(level: u32, ratio: f64) -> Result<()> {
    if level == 0 || level > 20 {
        return Err(Error::InvalidMesh(format!("pattern level {level} out of range")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidRatio(ratio));
    }
    Ok(())
}

fn pattern_lines(start: f64, macros: usize, size: f64, ratio: f64, layout: PatternLayout) -> Vec<f64> {
    let mut lines = Vec::with_capacity(2 * macros + 1);
    for m in 0..macros {
        let x0 = start + m as f64 * size;
        lines.push(x0);
        let frac = match layout {
            PatternLayout::Mirrored if m % 2 == 1 => 1.0 - ratio,
            _ => ratio,
        };
        lines.push(x0 + frac * size);
    }
    lines.push(start + macros as f64 * size);
    lines
}

fn lshape_from_lines(lines: Vec<f64>) -> Result<TensorGrid> {
    let n = lines.len() - 1;
    let mut active = vec![true; n * n];
    for j in 0..n {
        for i in 0..n {
            let [cx, cy] = [0.5 * (lines[i] + lines[i + 1]), 0.5 * (lines[j] + lines[j + 1])];
            if cx > 1.0 && cy > 1.0 {
                active[j * n + i] = false;
            }
        }
    }
    TensorGrid::new(lines.clone(), lines, active, DomainKind::LShape)
}

fn locate_interval(lines: &[f64], x: f64) -> Option<usize> {
    let n = lines.len() - 1;
    if x < lines[0] || x > lines[n] {
        return None;
    }
    let k = lines.partition_point(|l| *l <= x);
    Some(k.saturating_sub(1).min(n - 1))
}

fn flood(start: Cell, member: impl Fn(Cell) -> bool) -> usize {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let n = c.offset(di, dj);
            if member(n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen.len()
}

/// The four lattice cells around a vertex: LL, LR, UL, UR.
pub fn vertex_cells(v: Vertex) -> [Cell; 4] {
    [
        Cell::new(v.i - 1, v.j - 1),
        Cell::new(v.i, v.j - 1),
        Cell::new(v.i - 1, v.j),
        Cell::new(v.i, v.j),
    ]
}

/// The four vertices of a cell: LL, LR, UL, UR.
pub fn cell_vertices(c: Cell) -> [Vertex; 4] {
    [
        Vertex { i: c.i, j: c.j },
        Vertex { i: c.i + 1, j: c.j },
        Vertex { i: c.i, j: c.j + 1 },
        Vertex { i: c.i + 1, j: c.j + 1 },
    ]
}

/// The four edges of a cell: bottom, top, left, right.
pub fn cell_edges(c: Cell) -> [Edge; 4] {
    [
        Edge::Horizontal { i: c.i, j: c.j },
        Edge::Horizontal { i: c.i, j: c.j + 1 },
        Edge::Vertical { i: c.i, j: c.j },
        Edge::Vertical { i: c.i + 1, j: c.j },
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CornerKind {
    Convex,
    Concave,
}

/// Topological classification of a grid.
#[derive(Clone, Debug)]
pub struct Classification {
    pub interior_cells: Vec<Cell>,
    pub boundary_cells: Vec<Cell>,
    /// Exterior cells added by the corner and non-corner-edge expansions.
    pub expansion_cells: Vec<Cell>,
    pub corner_nodes: Vec<(Vertex, CornerKind)>,
    pub corner_edges: Vec<Edge>,
    pub non_corner_boundary_edges: Vec<Edge>,
    pub interior_vertices: Vec<Vertex>,
    pub boundary_vertices: Vec<Vertex>,
    pub interior_edges: Vec<Edge>,
    pub boundary_edges: Vec<Edge>,
}

impl Classification {
    /// All patch centers: interior, boundary and expansion cells, sorted.
    pub fn extended_centers(&self) -> Vec<Cell> {
        let mut all: Vec<Cell> = self
            .interior_cells
            .iter()
            .chain(&self.boundary_cells)
            .chain(&self.expansion_cells)
            .copied()
            .collect();
        all.sort();
        all.dedup();
        all
    }

    pub fn is_interior(&self, c: Cell) -> bool {
        self.interior_cells.binary_search(&c).is_ok()
    }

    pub fn is_patch_center(&self, c: Cell) -> bool {
        self.interior_cells.binary_search(&c).is_ok()
            || self.boundary_cells.binary_search(&c).is_ok()
            || self.expansion_cells.binary_search(&c).is_ok()
    }
}

/// Classifies cells, vertices and edges and collects the expansion cells.
pub fn classify(grid: &TensorGrid) -> Result<Classification> {
    let mut interior_vertices = Vec::new();
    let mut boundary_vertices = Vec::new();
    let mut corner_nodes = Vec::new();
    for i in 0..=grid.nx() {
        for j in 0..=grid.ny() {
            let v = Vertex { i, j };
            match grid.active_around(v) {
                0 => {}
                4 => interior_vertices.push(v),
                n => {
                    boundary_vertices.push(v);
                    match n {
                        1 => corner_nodes.push((v, CornerKind::Convex)),
                        3 => corner_nodes.push((v, CornerKind::Concave)),
                        _ => {}
                    }
                }
            }
        }
    }
    boundary_vertices.sort();
    interior_vertices.sort();

    let is_boundary_vertex = |v: Vertex| {
        let n = grid.active_around(v);
        n > 0 && n < 4
    };

    let mut interior_cells = Vec::new();
    let mut boundary_cells = Vec::new();
    for c in grid.active_cells() {
        if cell_vertices(c).iter().any(|v| is_boundary_vertex(*v)) {
            boundary_cells.push(c);
        } else {
            interior_cells.push(c);
        }
    }

    // standing assumption: no cell holds two corner nodes
    for c in grid.active_cells() {
        let corners: Vec<Vertex> = cell_vertices(c)
            .into_iter()
            .filter(|v| corner_nodes.iter().any(|(w, _)| w == v))
            .collect();
        if corners.len() >= 2 {
            return Err(Error::CornerAdjacencyViolation {
                first: corners[0],
                second: corners[1],
                cell: c,
            });
        }
    }

    let mut interior_edges = Vec::new();
    let mut boundary_edges = Vec::new();
    let mut edges = BTreeSet::new();
    for c in grid.active_cells() {
        edges.extend(cell_edges(c));
    }
    for e in edges {
        let [a, b] = e.sides();
        if grid.is_active(a) && grid.is_active(b) {
            interior_edges.push(e);
        } else {
            boundary_edges.push(e);
        }
    }
    let is_corner = |v: Vertex| corner_nodes.iter().any(|(w, _)| *w == v);
    let (corner_edges, non_corner_boundary_edges): (Vec<Edge>, Vec<Edge>) = boundary_edges
        .iter()
        .partition(|e| e.endpoints().iter().any(|v| is_corner(*v)));

    // expansion: every corner contributes the four cells around it, every
    // non-corner boundary edge the two cells on either side
    let mut expansion = BTreeSet::new();
    let mut touch = |c: Cell| {
        if !grid.is_active(c) {
            expansion.insert(c);
        }
    };
    for (v, _) in &corner_nodes {
        vertex_cells(*v).into_iter().for_each(&mut touch);
    }
    for e in &non_corner_boundary_edges {
        e.sides().into_iter().for_each(&mut touch);
    }

    Ok(Classification {
        interior_cells,
        boundary_cells,
        expansion_cells: expansion.into_iter().collect(),
        corner_nodes,
        corner_edges,
        non_corner_boundary_edges,
        interior_vertices,
        boundary_vertices,
        interior_edges,
        boundary_edges,
    })
}

/// The grid lines continued by [`GHOST_LAYERS`] ghost rows and columns on
/// each side. Ghost widths mirror the nearest real cell, times `ghost_scale`.
#[derive(Clone, Debug)]
pub struct Lattice {
    x_lines: Vec<f64>,
    y_lines: Vec<f64>,
    nx: i32,
    ny: i32,
}

impl Lattice {
    pub fn mirror(grid: &TensorGrid) -> Self {
        Self::scaled_ghosts(grid, 1.0)
    }

    pub fn scaled_ghosts(grid: &TensorGrid, ghost_scale: f64) -> Self {
        Lattice {
            x_lines: extend_lines(grid.xs(), ghost_scale),
            y_lines: extend_lines(grid.ys(), ghost_scale),
            nx: grid.nx(),
            ny: grid.ny(),
        }
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.i >= -GHOST_LAYERS
            && c.j >= -GHOST_LAYERS
            && c.i < self.nx + GHOST_LAYERS
            && c.j < self.ny + GHOST_LAYERS
    }

    pub fn rect(&self, c: Cell) -> Rect {
        assert!(self.contains(c), "cell {c:?} outside the extended lattice");
        let i = (c.i + GHOST_LAYERS) as usize;
        let j = (c.j + GHOST_LAYERS) as usize;
        Rect::new(self.x_lines[i], self.x_lines[i + 1], self.y_lines[j], self.y_lines[j + 1])
    }
}

fn extend_lines(lines: &[f64], scale: f64) -> Vec<f64> {
    let n = lines.len();
    let first = scale * (lines[1] - lines[0]);
    let last = scale * (lines[n - 1] - lines[n - 2]);
    let g = GHOST_LAYERS as usize;
    let mut out = Vec::with_capacity(n + 2 * g);
    for k in (1..=g).rev() {
        out.push(lines[0] - k as f64 * first);
    }
    out.extend_from_slice(lines);
    for k in 1..=g {
        out.push(lines[n - 1] + k as f64 * last);
    }
    out
}

/// One entry of a 3×3 patch: a lattice cell with its geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchCell {
    pub cell: Cell,
    pub rect: Rect,
    /// Active cell of the grid (as opposed to a ghost).
    pub real: bool,
}

/// A cell with its eight lattice neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch3x3 {
    pub center: Cell,
    /// `(L_{K,−1}, L_K, L_{K,1})`.
    pub lengths: [f64; 3],
    /// `(H_{K,−1}, H_K, H_{K,1})`.
    pub heights: [f64; 3],
    /// Indexed `[column][row]`, column 0 = left, row 0 = bottom.
    pub cell_map: [[PatchCell; 3]; 3],
    /// Lower-left corner of the patch.
    pub origin: [f64; 2],
}

impl Patch3x3 {
    /// Builds the patch centered at `center` from the lattice geometry.
    pub fn from_lattice(grid: &TensorGrid, lattice: &Lattice, center: Cell) -> Self {
        let cell_map: [[PatchCell; 3]; 3] = std::array::from_fn(|a| {
            std::array::from_fn(|b| {
                let cell = center.offset(a as i32 - 1, b as i32 - 1);
                PatchCell {
                    cell,
                    rect: lattice.rect(cell),
                    real: grid.is_active(cell),
                }
            })
        });
        let lengths = std::array::from_fn(|a| cell_map[a][1].rect.width());
        let heights = std::array::from_fn(|b| cell_map[1][b].rect.height());
        let origin = [cell_map[0][0].rect.x0, cell_map[0][0].rect.y0];
        Patch3x3 { center, lengths, heights, cell_map, origin }
    }

    pub fn center_rect(&self) -> Rect {
        self.cell_map[1][1].rect
    }

    pub fn cells(&self) -> impl Iterator<Item = &PatchCell> {
        self.cell_map.iter().flatten()
    }

    pub fn is_fully_real(&self) -> bool {
        self.cells().all(|c| c.real)
    }
}

/// The 3×3 patch around `center`, which must be active or an expansion cell.
pub fn patch(
    grid: &TensorGrid,
    class: &Classification,
    lattice: &Lattice,
    center: Cell,
) -> Result<Patch3x3> {
    if !class.is_patch_center(center) {
        return Err(Error::NotAPatchCenter(center));
    }
    Ok(Patch3x3::from_lattice(grid, lattice, center))
}
