use std::path::PathBuf;
use std::process::Command;

use fieldspace::scalar::{Elementary, Rational};
use fieldspace::simplicial::spine_fixture;
use fieldspace_cli::dsl::{parse, parse_with, BinOp, ErrorKind, Expr};
use num_bigint::BigInt;
use proptest::prelude::*;

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models")
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fieldspace"))
        .args(args)
        .current_dir(models())
        .output()
        .expect("run fieldspace");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fieldspace-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

#[test]
fn harmonic_el() {
    let (code, out, _) = run(&["el", "harmonic.th"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "EL_u = -u_tt - u");
}

#[test]
fn el_oracle_reports_deviation() {
    let (code, out, _) = run(&["check", "harmonic.th", "--suite", "el-oracle", "--samples", "30"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("max relative deviation"));
}

#[test]
fn json_records_carry_kind_and_schema() {
    let (code, out, _) = run(&["--json", "taylor", "--expr", "x^3", "--at", "1", "--order", "2"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(v["kind"], "taylor");
    assert_eq!(v["schema"], "fieldspace.taylor.v1");
    assert_eq!(v["polynomial"], "1 + 3*(x - 1) + 3*(x - 1)^2");
}

#[test]
fn fermion_minimal_order() {
    let (code, out, _) = run(&["odd-order", "fermionic-particle.th", "--max", "4"]);
    assert_eq!(code, 0);
    assert!(out.trim_end().ends_with("minimal odd order: 2"));
}

#[test]
fn harmonic_sine_is_critical() {
    let (code, out, _) = run(&["critical", "harmonic.th", "--plot", "harmonic-plot.th"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("critical"));
}

#[test]
fn free_particle_action_and_variation() {
    let (_, out, _) = run(&["action", "free-particle.th", "--plot", "free-particle-plot.th", "--box", "0,1"]);
    assert_eq!(out.trim(), "S = 2*m");
    let (code, out, _) = run(&[
        "variation",
        "free-particle.th",
        "--plot",
        "free-particle-plot.th",
        "--delta",
        "free-particle-delta.th",
    ]);
    assert_eq!(code, 0);
    assert!(out.starts_with("dS = 0"));
}

#[test]
fn family_action_depends_on_probe() {
    let (code, out, _) = run(&["action", "free-particle.th", "--plot", "free-particle-family.th"]);
    assert_eq!(code, 0);
    // ∫₀¹ m/2 (2 s t + 1)² dt
    assert_eq!(out.trim(), "S = 2/3*m*s1^2 + m*s1 + 1/2*m");
}

#[test]
fn parse_errors_exit_2_with_position() {
    let empty = temp_file("empty.th", "");
    let (code, _, err) = run(&["el", empty.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains(":1:1: syntax error"), "{err}");

    let odd = temp_file("odd.th", "spacetime t\nfield psi : odd\nlagrangian psi\n");
    let (code, _, err) = run(&["el", odd.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains(":3:12: parity error"), "{err}");

    let lex = temp_file("lex.th", "spacetime t\nfield u : even\nlagrangian u $ u\n");
    let (_, _, err) = run(&["el", lex.to_str().unwrap()]);
    assert!(err.contains(":3:14: lexical error"), "{err}");
}

#[test]
fn error_classes_are_distinct() {
    let cases = [
        ("spacetime t\nfield u : even\nlagrangian w", ErrorKind::UnknownName),
        ("spacetime t\nfield u : even\nlagrangian sin(u", ErrorKind::Syntax),
        ("spacetime t\nfield u : even\nfield u : odd", ErrorKind::Semantic),
        ("spacetime t\nfield u : even, psi : odd", ErrorKind::Syntax),
        ("spacetime t\nfield u : even\nfield p : odd\nlagrangian u*p", ErrorKind::Parity),
        ("spacetime t\nfield u : even\nfield p : odd\nconstraint p*p = 0", ErrorKind::Parity),
        ("spacetime t\nfield u : even\nlagrangian u ~ 1", ErrorKind::Lexical),
        ("spacetime t\nfield u : odd\nprobe R(0|1)\nplot u = s1", ErrorKind::UnknownName),
        ("spacetime t\nfield u : odd\nprobe R(1|1)\nplot u = s1", ErrorKind::Parity),
        ("spacetime x, y\noneform x*d(x, y)", ErrorKind::Semantic),
        ("spacetime x\nelement g = [[0]]", ErrorKind::Semantic),
    ];
    for (src, kind) in cases {
        let e = parse(src).unwrap_err();
        assert_eq!(e.kind, kind, "{src}: {e}");
    }
}

#[test]
fn plot_files_extend_the_model() {
    let base = parse(&std::fs::read_to_string(models().join("free-particle.th")).unwrap()).unwrap();
    let doc = parse_with("probe R(0|0) * D(1,2)\nplot q = t + e1", Some(&base)).unwrap();
    assert_eq!(doc.plots.len(), 1);
    assert!(parse_with("plot z = t", Some(&base)).is_err());
}

#[test]
fn bundled_models_round_trip() {
    for entry in std::fs::read_dir(models()).unwrap() {
        let path = entry.unwrap().path();
        let src = std::fs::read_to_string(&path).unwrap();
        // plot and variation files need their model
        let base = if src.contains("spacetime") {
            None
        } else {
            Some(parse(&std::fs::read_to_string(models().join("free-particle.th")).unwrap()).unwrap())
        };
        let Ok(doc) = parse_with(&src, base.as_ref()) else {
            continue;
        };
        let again = parse_with(&doc.to_string(), None).unwrap();
        assert_eq!(again, doc, "{}", path.display());
    }
}

#[test]
fn kan_on_emitted_truncation() {
    let json = temp_file("c4.json", "");
    let (code, _, _) = run(&["groupoid", "gauge-c4.th", "--emit", json.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (code, out, _) = run(&["kan", json.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    let (code, out, _) = run(&["kan", json.to_str().unwrap(), "--horn", "2,1,0,0", "--all"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().filter(|l| l.starts_with("filler:")).count(), 1, "{out}");
}

#[test]
fn non_kan_truncation_fails_verification() {
    let json = temp_file("spine.json", &spine_fixture(2).to_json());
    let (code, out, _) = run(&["kan", json.to_str().unwrap()]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("FAIL Kan condition at n = 2"));
    let (code, _, err) = run(&["kan", json.to_str().unwrap(), "--horn", "5,0"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["el"]).0, 2);
    assert_eq!(run(&["check", "harmonic.th", "--suite", "nope"]).0, 2);
    assert_eq!(run(&["action", "harmonic.th", "--plot", "harmonic-plot.th", "--box", "0"]).0, 2);
    assert_eq!(run(&["taylor", "--expr", "y", "--at", "0", "--order", "2"]).0, 2);
}

#[test]
fn bad_worker_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_fieldspace"))
        .args(["el", "harmonic.th"])
        .current_dir(models())
        .env("FIELDSPACE_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

// ---------------------------------------------------------------------------
// round trip of printed documents

fn literal() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0i64..50).prop_map(|n| Expr::Num(Rational::from_integer(BigInt::from(n)))),
        (1i64..400, 1u32..3).prop_map(|(n, k)| Expr::Num(Rational::new(BigInt::from(n), BigInt::from(10i64.pow(k))))),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        literal(),
        Just(Expr::Name("u".into())),
        Just(Expr::Name("t".into())),
        Just(Expr::Name("m".into())),
        Just(Expr::Deriv("u".into(), vec!["t".into()])),
        Just(Expr::Deriv("u".into(), vec!["t".into(), "t".into()])),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (inner.clone(), inner.clone(), prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul)])
                .prop_map(|(a, b, op)| Expr::Bin(op, Box::new(a), Box::new(b))),
            (inner.clone(), 1i64..5).prop_map(|(a, n)| Expr::Bin(
                BinOp::Div,
                Box::new(a),
                Box::new(Expr::Num(Rational::from_integer(BigInt::from(n))))
            )),
            (inner.clone(), 0i32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            inner.prop_map(|a| Expr::Call(Elementary::Sin, Box::new(a))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn printed_documents_reparse_equal(e in expr()) {
        let src = format!("spacetime t\nparam m\nfield u : even\nlagrangian {e}\n");
        let doc = parse(&src).unwrap();
        prop_assert_eq!(doc.lagrangian.as_ref(), Some(&e));
        let printed = doc.to_string();
        prop_assert_eq!(parse(&printed).unwrap(), doc);
    }
}
