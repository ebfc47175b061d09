use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rrm_core::assembly::{assemble, dump_matrix};
use rrm_core::basis::{build_extended_set, build_interior_set};
use rrm_core::mesh::{classify, Cell, Lattice, PatternLayout, TensorGrid, DEFAULT_GAMMA0, DEFAULT_PATTERN_RATIO};
use rrm_core::polynomial::Rect;
use rrm_core::projection::cr::{
    cr_dual_demo, cr_projective_interpolation, quarter_square, representative_edges, CrMesh, CrVariant,
    QuarterPoint,
};
use rrm_core::projection::{
    checkerboard_vector, checkerboard_witness, completely_subdomain_check, normalized_difference, projectivity_test,
    witness_residual, Decision, LocalBasisFamily, RrmFamily, Subdomain, DEPENDENCE_TOLERANCE,
};
use rrm_core::study::{
    compare_with_reference, reference_table, run_convergence, ExampleId, ExampleSpec, MeshKind, TableTolerance,
};
use rrm_core::suite::{self, Check};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_TABLE: u8 = 3;

type SuiteFn = fn() -> rrm_core::Result<Vec<Check>>;

#[derive(Parser)]
#[command(name = "rrm", version, about = "Reduced rectangular Morley elements for ε²Δ²u − Δu = f")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study of one example; writes CSV.
    Convergence(ConvergenceArgs),
    /// Run the property suites.
    Verify {
        #[arg(long, value_enum)]
        suite: Option<Suite>,
    },
    /// Projectivity decisions and dual-basis tables.
    Projection(ProjectionArgs),
    /// Dump a mesh, a basis function or the system matrix.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshArg {
    Uniform,
    Pattern,
}

impl From<MeshArg> for MeshKind {
    fn from(m: MeshArg) -> Self {
        match m {
            MeshArg::Uniform => MeshKind::Uniform,
            MeshArg::Pattern => MeshKind::Pattern,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Translated,
    Mirrored,
}

impl From<LayoutArg> for PatternLayout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Translated => PatternLayout::Translated,
            LayoutArg::Mirrored => PatternLayout::Mirrored,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Basis,
    Interp,
    Assembly,
    Projection,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
    example: u32,
    #[arg(long, value_enum, default_value = "uniform")]
    mesh: MeshArg,
    #[arg(long, default_value_t = DEFAULT_PATTERN_RATIO)]
    ratio: f64,
    #[arg(long, value_enum, default_value = "translated")]
    layout: LayoutArg,
    /// Comma-separated list; `2^-6` notation accepted. Defaults to the
    /// reference ε column.
    #[arg(long, value_delimiter = ',', value_parser = parse_eps)]
    eps: Option<Vec<f64>>,
    /// Inclusive range `a..b` or a single level. Defaults to the reference levels.
    #[arg(long, value_parser = parse_levels)]
    levels: Option<Levels>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare with the reference table; exit 3 on mismatch.
    #[arg(long)]
    check_tables: bool,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Family {
    Rrm,
    Cr,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Selection {
    Patch,
    Omega,
    S1,
    S2,
    S3,
}

#[derive(Args)]
struct ProjectionArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long, value_enum)]
    selection: Selection,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    mesh: MeshArg,
    #[arg(long)]
    lshape: bool,
    /// Cells per unit length (uniform) or squares per side (CR mesh).
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Pattern refinement level.
    #[arg(long, default_value_t = 2)]
    level: u32,
    #[arg(long, default_value_t = DEFAULT_PATTERN_RATIO)]
    ratio: f64,
    #[arg(long, value_enum, default_value = "translated")]
    layout: LayoutArg,
}

impl GridArgs {
    fn build(&self) -> rrm_core::Result<TensorGrid> {
        let layout = self.layout.into();
        match (self.mesh, self.lshape) {
            (MeshArg::Uniform, false) => TensorGrid::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), self.n),
            (MeshArg::Uniform, true) => TensorGrid::lshape_uniform(self.n),
            (MeshArg::Pattern, false) => TensorGrid::pattern_with_layout(self.level, self.ratio, layout),
            (MeshArg::Pattern, true) => TensorGrid::lshape_pattern_with_layout(self.level, self.ratio, layout),
        }
    }
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    dump_mesh: bool,
    /// Center cell `i,j` of the basis function to print.
    #[arg(long, value_parser = parse_cell)]
    dump_basis: Option<Cell>,
    #[arg(long)]
    dump_system: bool,
    /// ε for `--dump-system`.
    #[arg(long, default_value = "1", value_parser = parse_eps)]
    eps: f64,
}

#[derive(Clone, Copy)]
struct Levels(u32, u32);

fn parse_eps(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.strip_prefix("2^") {
        Some(p) => p.parse::<i32>().map(|k| 2f64.powi(k)).map_err(|e| e.to_string())?,
        None => s.parse::<f64>().map_err(|e| e.to_string())?,
    };
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("ε must be a non-negative number, got {s}"))
    }
}

fn parse_levels(s: &str) -> Result<Levels, String> {
    let (a, b) = s.split_once("..").unwrap_or((s, s));
    let a: u32 = a.trim().parse().map_err(|_| format!("bad level range {s}"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad level range {s}"))?;
    if a > b || b > 10 {
        return Err(format!("bad level range {s}"));
    }
    Ok(Levels(a, b))
}

fn parse_cell(s: &str) -> Result<Cell, String> {
    let (i, j) = s.split_once(',').ok_or_else(|| format!("expected i,j, got {s}"))?;
    let i = i.trim().parse().map_err(|_| format!("bad cell index {s}"))?;
    let j = j.trim().parse().map_err(|_| format!("bad cell index {s}"))?;
    Ok(Cell::new(i, j))
}

enum Failure {
    Usage(String),
    Numerical(String),
    Table(String),
}

impl From<rrm_core::Error> for Failure {
    fn from(e: rrm_core::Error) -> Self {
        use rrm_core::Error as E;
        match e {
            E::InvalidMesh(_)
            | E::InvalidRatio(_)
            | E::CornerAdjacencyViolation { .. }
            | E::NotAPatchCenter(_)
            | E::EmptySpace => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Convergence(args) => convergence(args),
        Command::Verify { suite } => verify(suite),
        Command::Projection(args) => projection(args),
        Command::Inspect(args) => inspect(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Table(m)) => {
            eprintln!("table check failed: {m}");
            ExitCode::from(EXIT_TABLE)
        }
    }
}

fn convergence(args: ConvergenceArgs) -> Result<(), Failure> {
    let id = ExampleId::from_number(args.example).ok_or_else(|| Failure::Usage("unknown example".into()))?;
    let mesh: MeshKind = args.mesh.into();
    let reference = reference_table(id, mesh);
    let spec = ExampleSpec { ratio: args.ratio, layout: args.layout.into(), ..ExampleSpec::new(id, mesh) };
    let eps = args.eps.unwrap_or_else(|| reference.eps());
    let levels: Vec<u32> = match args.levels {
        Some(Levels(a, b)) => (a..=b).collect(),
        None => reference.levels.to_vec(),
    };
    if let Some(g) = levels.first().map(|l| spec.grid(*l)).transpose()? {
        if let Some(ratio) = g.regularity_warning(DEFAULT_GAMMA0) {
            eprintln!("warning: mesh regularity {ratio:.2} exceeds {DEFAULT_GAMMA0}");
        }
    }
    let table = run_convergence(&spec, &eps, &levels)?;
    let csv = table.to_csv();
    match &args.out {
        Some(path) => fs::write(path, &csv).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    for (e, r) in &table.rates {
        eprintln!("ε = {e:e}: rate {r:.4}");
    }
    if args.check_tables {
        let mismatches = compare_with_reference(&table, &reference, &TableTolerance::for_table(id, mesh));
        for m in &mismatches {
            match m.h {
                Some(h) => eprintln!("  ε={:e} h={h:.4e}: {:.4} vs {:.4}", m.eps, m.computed, m.expected),
                None => eprintln!("  ε={:e} rate: {:.4} vs {:.2}", m.eps, m.computed, m.expected),
            }
        }
        if !mismatches.is_empty() {
            return Err(Failure::Table(format!("{} entries outside tolerance", mismatches.len())));
        }
        eprintln!("table check passed");
    }
    Ok(())
}

fn verify(which: Option<Suite>) -> Result<(), Failure> {
    let suites: Vec<(&str, SuiteFn)> = vec![
        ("basis", suite::basis_checks),
        ("interp", suite::interpolation_checks),
        ("assembly", suite::assembly_checks),
        ("projection", suite::projection_checks),
    ];
    let selected = |name: &str| match which {
        None => true,
        Some(Suite::Basis) => name == "basis",
        Some(Suite::Interp) => name == "interp",
        Some(Suite::Assembly) => name == "assembly",
        Some(Suite::Projection) => name == "projection",
    };
    let mut failed = 0;
    for (name, run) in suites.into_iter().filter(|(n, _)| selected(n)) {
        println!("[{name}]");
        for c in run()? {
            println!("  {c}");
            if !c.passed() {
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} checks failed")));
    }
    println!("all checks passed");
    Ok(())
}

fn projection(args: ProjectionArgs) -> Result<(), Failure> {
    match args.family {
        Family::Rrm => rrm_projection(&args),
        Family::Cr => cr_projection(&args),
    }
}

fn print_decision(k: usize, d: &Decision) {
    match d {
        Decision::Representable { witness, residual } => {
            println!("φ_{k}: Representable (residual {residual:.2e})");
            for (j, g) in witness {
                println!("    g[{j}] = {g:+.12e}");
            }
        }
        Decision::NotRepresentable { residual } => println!("φ_{k}: NotRepresentable (residual {residual:.3e})"),
    }
}

fn rrm_projection(args: &ProjectionArgs) -> Result<(), Failure> {
    let grid = args.grid.build()?;
    let class = classify(&grid)?;
    let set = build_interior_set(&grid, &class, &Lattice::mirror(&grid))?;
    let family = RrmFamily { grid: &grid, set: &set };
    match args.selection {
        Selection::Patch => {
            let [xc, yc] = [grid.nx() / 2, grid.ny() / 2];
            let cell = grid
                .active_cells()
                .into_iter()
                .filter(|c| completely_subdomain_check(&grid, &class, &[*c]))
                .min_by_key(|c| (c.i - xc).abs() + (c.j - yc).abs())
                .ok_or_else(|| Failure::Usage("grid has no completely covered cell; use a finer grid".into()))?;
            println!("subdomain: cell ({}, {})", cell.i, cell.j);
            let region = Subdomain::Cells(vec![cell]);
            let s = family.sample(&region)?;
            let board = checkerboard_vector(&set, &s.indices);
            println!("checkerboard vector:");
            for (k, d) in s.indices.iter().zip(&board) {
                let c = set.get(*k).center;
                println!("    φ_{k} at ({}, {}): {d:+.12e}", c.i, c.j);
            }
            for &k in &s.indices {
                let d = projectivity_test(&family, &region, k, DEPENDENCE_TOLERANCE)?;
                print_decision(k, &d);
                let cw = checkerboard_witness(&set, &s.indices, k);
                println!("    checkerboard witness residual {:.2e}", witness_residual(&s, k, &cw));
                if let Decision::Representable { witness, .. } = &d {
                    let mut full: Vec<f64> = s.indices.iter().map(|j| if *j == k { -1.0 } else { 0.0 }).collect();
                    for (j, g) in witness {
                        if let Some(c) = s.column_of(*j) {
                            full[c] = *g;
                        }
                    }
                    println!("    least-squares witness vs checkerboard {:.3e}", normalized_difference(&full, &board));
                }
            }
        }
        Selection::Omega => {
            let mut representable = 0;
            for k in 0..set.len() {
                let d = projectivity_test(&family, &Subdomain::Whole, k, DEPENDENCE_TOLERANCE)?;
                if d.is_representable() {
                    representable += 1;
                }
                println!("φ_{k}: {}", if d.is_representable() { "Representable" } else { "NotRepresentable" });
            }
            println!("{representable} of {} functions representable on Ω", set.len());
        }
        _ => return Err(Failure::Usage("selections s1, s2, s3 belong to --family cr".into())),
    }
    Ok(())
}

fn cr_projection(args: &ProjectionArgs) -> Result<(), Failure> {
    let n = if args.grid.n == 8 { 4 } else { args.grid.n };
    let mesh = CrMesh::new(n)?;
    let variant = match args.selection {
        Selection::S1 => CrVariant::S1,
        Selection::S2 => CrVariant::S2,
        Selection::S3 => CrVariant::S3,
        Selection::Patch => {
            for e in representative_edges(&mesh) {
                let d = projectivity_test(&mesh, &quarter_square(&mesh, e, QuarterPoint::First), e, DEPENDENCE_TOLERANCE)?;
                println!("edge {e}, quarter-point square:");
                print_decision(e, &d);
            }
            return Ok(());
        }
        Selection::Omega => {
            let mut representable = 0;
            for e in 0..mesh.num_edges() {
                if projectivity_test(&mesh, &Subdomain::Whole, e, DEPENDENCE_TOLERANCE)?.is_representable() {
                    representable += 1;
                }
            }
            println!("{representable} of {} functions representable on Ω", mesh.num_edges());
            return Ok(());
        }
    };
    if variant == CrVariant::S3 {
        println!("dual coefficients × h² on quarter-point squares (h = {})", mesh.h);
        for r in cr_dual_demo(n)? {
            let [p, q] = mesh.edge_points(r.edge);
            println!("edge {} ({:?} → {:?}), {:?} quarter point:", r.edge, p, q, r.quarter);
            for (j, c) in r.dual.indices.iter().zip(&r.scaled_coeffs) {
                println!("    φ_{j}: {c:.6}");
            }
        }
    }
    let mut worst: f64 = 0.0;
    for j in 0..mesh.num_edges() {
        let mut unit = vec![0.0; mesh.num_edges()];
        unit[j] = 1.0;
        let c = cr_projective_interpolation(&mesh, variant, |t, x, y| mesh.combine_on(t, &unit, [x, y]))?;
        worst = c.iter().zip(&unit).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    println!("{variant:?}: max |λ_k(φ_j) − δ_kj| = {worst:.3e} over {} edges", mesh.num_edges());
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<(), Failure> {
    if !(args.dump_mesh || args.dump_basis.is_some() || args.dump_system) {
        return Err(Failure::Usage("choose at least one of --dump-mesh, --dump-basis, --dump-system".into()));
    }
    let grid = args.grid.build()?;
    if args.dump_mesh {
        print!("{}", grid.to_text());
    }
    if let Some(center) = args.dump_basis {
        let class = classify(&grid)?;
        let set = build_extended_set(&grid, &class, &Lattice::mirror(&grid))?;
        let k = set.index_of(center).ok_or(rrm_core::Error::NotAPatchCenter(center))?;
        let f = set.get(k);
        println!("# phi centered at ({}, {}); per cell: i j real x0 x1 y0 y1 c0 cx cy cxx cxy cyy", center.i, center.j);
        for p in f.iter() {
            let r = p.rect;
            let c = p.poly.coeffs;
            println!(
                "{} {} {} {} {} {} {} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
                p.cell.i, p.cell.j, u8::from(p.real), r.x0, r.x1, r.y0, r.y1, c[0], c[1], c[2], c[3], c[4], c[5]
            );
        }
    }
    if args.dump_system {
        let class = classify(&grid)?;
        let set = build_interior_set(&grid, &class, &Lattice::mirror(&grid))?;
        let system = assemble(&grid, &set, |_, _| 1.0);
        print!("{}", dump_matrix(&system.operator(args.eps)));
    }
    Ok(())
}
