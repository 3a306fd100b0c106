use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn hompop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hompop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({}): {}",
            e,
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn points(v: &Value) -> Vec<Vec<f64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|m| {
            m["point"]
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_f64().unwrap())
                .collect()
        })
        .collect()
}

#[test]
fn cubic_constraints_end_to_end() {
    let f = data("cubic_constraints.txt");
    let out = hompop(&[f.to_str().unwrap(), "--max-order", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let bound = v["final"]["best_bound"].as_f64().unwrap();
    assert!((bound + 1.38490).abs() < 1e-4, "{}", bound);
    let last = v["records"].as_array().unwrap().last().unwrap();
    let m = points(&last["minimizers"]);
    assert_eq!(m.len(), 1);
    assert!((m[0][0] + 0.5774).abs() < 1e-3 && (m[0][1] + 0.8075).abs() < 1e-3, "{:?}", m);
    assert!(v["problem_echo"].as_str().unwrap().starts_with("vars: x1 x2\n"));
}

#[test]
fn record_schema() {
    let f = data("quadratic_hyperbolic.txt");
    let out = hompop(&[f.to_str().unwrap(), "--order", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in ["problem_echo", "records", "final"] {
        assert!(v.get(key).is_some(), "missing {}", key);
    }
    let r = &v["records"][0];
    for key in [
        "k",
        "kind",
        "f_k",
        "f_k_prime",
        "status",
        "flat_t",
        "minimizers",
        "minimizers_at_infinity",
        "optcond",
    ] {
        assert!(r.get(key).is_some(), "record is missing {}", key);
    }
    assert_eq!(r["k"], 3);
    assert_eq!(r["kind"], "homog");
    assert_eq!(r["status"], "Optimal");
    assert_eq!(r["minimizers"].as_array().unwrap().len(), 4);
    assert!(r["minimizers"][0]["value"].is_f64());
}

#[test]
fn output_is_deterministic_for_a_seed() {
    let f = data("orthant_cubic_mixed.txt");
    let args = [f.to_str().unwrap(), "--order", "2", "--seed", "3"];
    let a = hompop(&args);
    let b = hompop(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn denominator_matches_even_variant() {
    let f = data("quadratic_hyperbolic.txt");
    let bound = |kind: &str| {
        let out = hompop(&[f.to_str().unwrap(), "--order", "2", "--kind", kind, "--no-verify"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        json(&out)["records"][0]["f_k"].as_f64().unwrap()
    };
    let even = bound("even");
    let denom = bound("denom");
    assert!((even - denom).abs() < 1e-6, "{} vs {}", even, denom);
}

#[test]
fn malformed_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.txt");
    std::fs::write(&f, "vars: x\nminimize: x^ + 1\n").unwrap();
    let out = hompop(&[f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{}", err);
}

#[test]
fn missing_vars_line_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.txt");
    std::fs::write(&f, "minimize: x1\n").unwrap();
    let out = hompop(&[f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn flag_errors_exit_2() {
    let f = data("cubic_constraints.txt");
    let f = f.to_str().unwrap();
    assert_eq!(hompop(&[f, "--order", "2", "--max-order", "3"]).status.code(), Some(2));
    assert_eq!(hompop(&[f, "--bogus"]).status.code(), Some(2));
    assert_eq!(hompop(&[f, "--kind", "nope"]).status.code(), Some(2));
    assert_eq!(hompop(&[f, "--json", "--pretty"]).status.code(), Some(2));
}

#[test]
fn unattained_optimum_exits_3() {
    let f = data("unattained.txt");
    let out = hompop(&[f.to_str().unwrap(), "--max-order", "3"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert!(v["final"]["diagnosis"]
        .as_str()
        .unwrap()
        .contains("optimum likely unattained"));
}

#[test]
fn points_at_infinity_of_the_augmented_choi_lam_form() {
    let f = data("choi_lam_augmented.txt");
    let out = hompop(&[f.to_str().unwrap(), "--infinity", "--order", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let inf = &v["infinity"];
    assert!(inf["bound"].as_f64().unwrap().abs() < 1e-6);
    let pts = points(&inf["points"]);
    assert_eq!(pts.len(), 14);
    let s = 1.0 / 3f64.sqrt();
    for p in &pts {
        let axis = p.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-3).count() == 1
            && p.iter().filter(|x| x.abs() < 1e-3).count() == 2;
        let diag = p.iter().all(|x| (x.abs() - s).abs() < 1e-3);
        assert!(axis || diag, "{:?}", p);
    }
}

#[test]
fn sdpa_dump_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("ex.dat-s");
    let f = data("orthant_cubic_mixed.txt");
    let out = hompop(&[f.to_str().unwrap(), "--order", "2", "--dump-sdpa", dump.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&dump).unwrap();
    assert!(text.lines().count() > 3);
}

#[test]
fn pretty_output_is_text() {
    let f = data("cubic_constraints.txt");
    let out = hompop(&[f.to_str().unwrap(), "--pretty"]);
    assert_eq!(out.status.code(), Some(0));
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.starts_with("kind homog"));
    assert!(s.contains("best bound -1.3849"));
}
