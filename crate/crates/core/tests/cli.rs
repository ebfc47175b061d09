use std::process::Command;

fn rrm(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rrm")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn convergence_writes_csv_with_rate() {
    let (code, out, _) = rrm(&["convergence", "--example", "1", "--mesh", "uniform", "--eps", "1", "--levels", "2..6"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "eps,h,rel_energy,rel_h1,rel_h2,rel_l2");
    assert_eq!(lines.len(), 7);
    assert!(lines[6].starts_with("# rate eps=1e0 value=0.99"));
    assert!(lines[1].contains("5.4030"));
}

#[test]
fn table_check_exit_codes() {
    let path = std::env::temp_dir().join("rrm-cli-table4.csv");
    let p = path.to_str().unwrap();
    let (code, _, err) = rrm(&["convergence", "--example", "2", "--check-tables", "--out", p]);
    assert_eq!(code, 0, "{err}");
    assert!(std::fs::read_to_string(&path).unwrap().lines().count() > 30);
    let (code, _, _) = rrm(&[
        "convergence", "--example", "1", "--mesh", "pattern", "--layout", "mirrored", "--check-tables", "--out", p,
    ]);
    assert_eq!(code, 3);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(rrm(&["convergence", "--example", "4"]).0, 1);
    assert_eq!(rrm(&["convergence", "--example", "1", "--eps", "abc"]).0, 1);
    assert_eq!(rrm(&["projection", "--family", "rrm", "--selection", "s2"]).0, 1);
    assert_eq!(rrm(&["inspect", "--n", "2", "--dump-system"]).0, 1);
    assert_eq!(rrm(&["nonsense"]).0, 1);
}

#[test]
fn verify_basis_suite() {
    let (code, out, _) = rrm(&["verify", "--suite", "basis"]);
    assert_eq!(code, 0);
    assert!(out.contains("all checks passed"));
}

#[test]
fn inspect_dumps_round_trip() {
    let (code, out, _) = rrm(&["inspect", "--mesh", "pattern", "--level", "1", "--dump-mesh"]);
    assert_eq!(code, 0);
    let g = rrm_core::mesh::TensorGrid::from_text(&out).unwrap();
    let expected = rrm_core::mesh::TensorGrid::pattern(1, 0.65).unwrap();
    assert_eq!(g.xs(), expected.xs());
    assert_eq!(g.ys(), expected.ys());
    assert_eq!(g.active_cells(), expected.active_cells());

    let (code, out, _) = rrm(&["inspect", "--n", "4", "--dump-basis", "1,1"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().filter(|l| !l.starts_with('#')).count(), 9);

    let (code, out, _) = rrm(&["inspect", "--n", "5", "--dump-system", "--eps", "2^-6"]);
    assert_eq!(code, 0);
    for l in out.lines() {
        assert_eq!(l.split_whitespace().count(), 3);
    }
}

#[test]
fn projection_prints_cr_coefficients() {
    let (code, out, _) = rrm(&["projection", "--family", "cr", "--selection", "s3"]);
    assert_eq!(code, 0);
    assert!(out.contains("-18048.000000") && out.contains("31104.000000") && out.contains("24960.000000"));
    let (code, out, _) = rrm(&["projection", "--family", "rrm", "--selection", "patch"]);
    assert_eq!(code, 0);
    assert!(out.contains("Representable") && !out.contains("NotRepresentable"));
}
