//! Acceptance gate: one pass/fail line per criterion, then a single assertion
//! over all of them. Run with `--nocapture` to see the report.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use fieldspace::checks::{
    algebra_laws, dual_number_suite, el_oracle_suite, functor_descriptors, functor_suite, gauge_suite, gluing_suite,
    taylor_suite, total_derivative_suite, SuiteReport,
};
use fieldspace::jet::OracleParams;
use fieldspace::simplicial::{build_two_form_groupoid, check_kan, check_simplicial_identities, FiniteGroup};
use fieldspace_cli::{commands, theory};
use serde_json::Value;

const SEED: u64 = 20_240_611;

struct Verdict {
    criterion: usize,
    passed: bool,
    detail: String,
}

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models")
}

fn bin(args: &[&str], workers: Option<usize>) -> (i32, String, Duration) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fieldspace"));
    cmd.args(args).current_dir(models());
    match workers {
        Some(w) => cmd.env("FIELDSPACE_WORKERS", w.to_string()),
        None => cmd.env_remove("FIELDSPACE_WORKERS"),
    };
    let start = Instant::now();
    let out = cmd.output().expect("run fieldspace");
    let elapsed = start.elapsed();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).expect("utf-8"), elapsed)
}

fn suites_pass(rs: &[SuiteReport], min: usize) -> (bool, String) {
    let ok = rs.iter().all(|r| r.passed() && r.samples >= min);
    let detail = rs
        .iter()
        .map(|r| format!("{} {}/{} failed", r.name, r.failures.len(), r.samples))
        .collect::<Vec<_>>()
        .join(", ");
    let first = rs.iter().flat_map(|r| r.failures.first()).next();
    (ok, match first {
        Some(f) => format!("{detail}; first failure: {f}"),
        None => detail,
    })
}

fn criterion_1() -> (bool, String) {
    const GOLDEN: &str = "(f1(t)*D[f2(t), t] - D[f1(t), t]*f2(t))*th1*th2 dt";
    let (code, stdout, t) = bin(&["--json", "odd-order", "fermionic-particle.th", "--max", "4"], None);
    let records: Vec<Value> = stdout.lines().map(|l| serde_json::from_str(l).expect("json")).collect();
    let verdict = |q: u64| {
        records
            .iter()
            .find(|r| r["kind"] == "odd-order" && r["q"] == q)
            .map(|r| (r["verdict"].as_str().unwrap_or("").to_string(), r["density"].as_str().unwrap_or("").to_string()))
    };
    let v: Vec<_> = (0..3).map(verdict).collect();
    let ok = code == 0
        && v[0].as_ref().is_some_and(|(x, _)| x == "zero")
        && v[1].as_ref().is_some_and(|(x, _)| x == "zero")
        && v[2].as_ref().is_some_and(|(x, d)| x == "nontrivial" && d == GOLDEN)
        && t < Duration::from_secs(1);
    let verdicts: Vec<String> = v.iter().map(|x| x.as_ref().map_or("missing".into(), |(a, _)| a.clone())).collect();
    (ok, format!("verdicts {verdicts:?}, q=2 density `{}`, {t:.2?}", v[2].as_ref().map_or("", |(_, d)| d.as_str())))
}

fn criterion_2() -> (bool, String) {
    let params = OracleParams {
        h: 1e-2,
        step: 1e-4,
        tolerance: 1e-3,
    };
    let start = Instant::now();
    let (r, worst) = el_oracle_suite(24, SEED, &params);
    let t = start.elapsed();
    let (ok, detail) = suites_pass(&[r], 20);
    (ok && t < Duration::from_secs(30), format!("{detail}, max relative deviation {worst:.2e}, {t:.2?}"))
}

fn criterion_3() -> (bool, String) {
    let start = Instant::now();
    let r = total_derivative_suite(500, SEED);
    let t = start.elapsed();
    let (ok, detail) = suites_pass(&[r], 500);
    (ok && t < Duration::from_secs(30), format!("{detail}, {t:.2?}"))
}

fn criterion_4() -> (bool, String) {
    suites_pass(&algebra_laws(1000, SEED), 1000)
}

fn criterion_5() -> (bool, String) {
    let rs: Vec<SuiteReport> = functor_descriptors()
        .iter()
        .map(|(name, d)| functor_suite(d, name, 1000, SEED))
        .collect();
    suites_pass(&rs, 1000)
}

fn criterion_6() -> (bool, String) {
    suites_pass(&[dual_number_suite(1000, SEED), taylor_suite(1000, SEED)], 1000)
}

fn criterion_7() -> (bool, String) {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, g) in [("Z/2", FiniteGroup::cyclic(2)), ("S3", FiniteGroup::symmetric3())] {
        let x = g.nerve(3);
        let ids = check_simplicial_identities(&x);
        ok &= ids.passed();
        for n in [2, 3] {
            let r = check_kan(&x, n).expect("kan check");
            ok &= r.passed() && r.all_unique();
            notes.push(format!("{name} n={n}: {}/{} unique", r.unique, r.horns));
        }
    }
    let doc = commands::load(&models().join("two-form-groupoid.th")).expect("model");
    let spec = theory::two_form_spec(&doc).expect("two-form spec");
    let generators = spec.objects.len() + spec.one_forms.len() + spec.zero_forms.len();
    let g = build_two_form_groupoid(&spec).expect("groupoid");
    let ids = check_simplicial_identities(&g.truncation);
    let horns = g.generator_horns();
    let mut filled = 0;
    for h in &horns {
        let f = g.fill_inner(h).expect("fill");
        if !f.fillers.is_empty() && f.differences_exact {
            filled += 1;
        }
    }
    ok &= ids.passed() && !horns.is_empty() && filled == horns.len() && spec.one_forms.len() >= 5;
    let t = start.elapsed();
    ok &= t < Duration::from_secs(60);
    notes.push(format!(
        "two-form groupoid ({generators} generators, {} one-forms): identities {}, {filled}/{} inner horns filled with exact differences",
        spec.one_forms.len(),
        if ids.passed() { "hold" } else { "fail" },
        horns.len()
    ));
    (ok, format!("{}, {t:.2?}", notes.join("; ")))
}

fn criterion_8() -> (bool, String) {
    suites_pass(&gauge_suite(200, SEED), 100)
}

fn criterion_9() -> (bool, String) {
    suites_pass(&[gluing_suite(200, SEED)], 100)
}

fn criterion_10() -> (bool, String) {
    let runs: &[&[&str]] = &[
        &["--json", "el", "harmonic.th"],
        &["--json", "el", "free-particle.th"],
        &["--json", "action", "free-particle.th", "--plot", "free-particle-plot.th", "--box", "0,1"],
        &["--json", "odd-order", "fermionic-particle.th", "--max", "4"],
        &["--json", "el", "dirac.th"],
        &["--json", "groupoid", "two-form-groupoid.th"],
        &["--json", "check", "harmonic.th", "--suite", "el-oracle", "--samples", "50", "--seed", "7"],
    ];
    let mut bad = Vec::new();
    for args in runs {
        let a = bin(args, Some(4));
        let b = bin(args, Some(4));
        let c = bin(args, Some(1));
        let same = a.0 == 0 && a.0 == b.0 && a.0 == c.0 && a.1 == b.1 && a.1 == c.1 && !a.1.is_empty();
        if !same {
            bad.push(args.join(" "));
        }
    }
    (bad.is_empty(), format!("{} invocations compared; differing: {bad:?}", runs.len()))
}

#[test]
fn acceptance() {
    let criteria: [fn() -> (bool, String); 10] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
    ];
    let verdicts: Vec<Verdict> = criteria
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (passed, detail) = f();
            Verdict {
                criterion: i + 1,
                passed,
                detail,
            }
        })
        .collect();
    for v in &verdicts {
        println!("criterion {:>2}: {}  {}", v.criterion, if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.passed).map(|v| v.criterion).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
