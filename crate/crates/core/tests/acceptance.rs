//! Acceptance suite: one PASS/FAIL line per criterion, details for every
//! failing or informational check. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rrm_core::study::{ExampleId, MeshKind};
use rrm_core::suite::{self, Bound, Check};

struct Criterion {
    number: u32,
    title: &'static str,
    checks: Vec<Check>,
}

impl Criterion {
    fn passed(&self) -> bool {
        suite::all_passed(&self.checks)
    }
}

fn table(example: ExampleId, mesh: MeshKind, entries: Option<(f64, f64)>, rate: f64) -> (Vec<Check>, Duration) {
    let start = Instant::now();
    match suite::reproduce_table(example, mesh) {
        Ok((t, reference)) => (suite::table_checks(&t, &reference, entries, rate), start.elapsed()),
        Err(e) => (vec![Check::at_most(format!("run failed: {e}"), 1.0, 0.0)], start.elapsed()),
    }
}

fn or_failure(name: &str, r: rrm_core::Result<Vec<Check>>) -> Vec<Check> {
    r.unwrap_or_else(|e| vec![Check::at_most(format!("{name} failed: {e}"), 1.0, 0.0)])
}

fn main() -> ExitCode {
    let uniform = Some((5e-4, 0.02));
    let mut criteria = Vec::new();

    let (mut checks, elapsed) = table(ExampleId::One, MeshKind::Uniform, uniform, 0.05);
    checks.push(Check::at_most("full table runtime [s]", elapsed.as_secs_f64(), 120.0));
    criteria.push(Criterion { number: 1, title: "Example 1 reference errors, uniform square grids", checks });

    let (mut checks, elapsed) = table(ExampleId::Two, MeshKind::Uniform, uniform, 0.05);
    checks.push(Check::at_most("full table runtime [s]", elapsed.as_secs_f64(), 120.0));
    criteria.push(Criterion { number: 2, title: "Example 2 reference errors, uniform L-shape grids", checks });

    let (checks, _) = table(ExampleId::Three, MeshKind::Uniform, Some((0.0, 0.02)), 0.05);
    criteria.push(Criterion { number: 3, title: "Example 3 reference errors, uniform square grids", checks });

    let mut checks = Vec::new();
    for (label, example) in [("Example 1", ExampleId::One), ("Example 2", ExampleId::Two), ("Example 3", ExampleId::Three)] {
        let (c, _) = table(example, MeshKind::Pattern, None, 0.1);
        checks.extend(c.into_iter().map(|mut c| {
            c.name = format!("{label} {}", c.name);
            c
        }));
    }
    let worst = checks
        .iter()
        .filter(|c| matches!(c.bound, Bound::Advisory(_)))
        .map(|c| c.value)
        .fold(0.0, f64::max);
    checks.push(Check::info("largest relative entry deviation (advisory limit 0.25)", worst));
    criteria.push(Criterion { number: 4, title: "all examples, pattern grids (rates gate)", checks });

    criteria.push(Criterion { number: 5, title: "basis identities", checks: or_failure("basis", suite::basis_checks()) });
    criteria.push(Criterion {
        number: 6,
        title: "interpolation",
        checks: or_failure("interpolation", suite::interpolation_checks()),
    });
    criteria.push(Criterion {
        number: 7,
        title: "projective interpolation analysis",
        checks: or_failure("projection", suite::projection_checks()),
    });
    criteria.push(Criterion {
        number: 8,
        title: "assembly structure",
        checks: or_failure("assembly", suite::assembly_checks()),
    });

    for c in &criteria {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        let gating = c.checks.iter().filter(|k| k.gating()).count();
        println!("criterion {} ({}): {status} [{gating} gating checks]", c.number, c.title);
        for k in &c.checks {
            let shown = match k.bound {
                Bound::Info => true,
                Bound::Advisory(_) => !k.satisfied(),
                _ => !k.passed() || k.name.ends_with("rate") || k.name.contains("runtime"),
            };
            if shown {
                println!("    {k}");
            }
        }
    }
    let failed: Vec<u32> = criteria.iter().filter(|c| !c.passed()).map(|c| c.number).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
