//! Subcommand implementations. Each command returns an [`Outcome`]: the
//! structured records, the human-readable lines and whether verification
//! passed. Rendering and exit codes are left to `main`.

use std::path::Path;

use fieldspace::checks::{
    algebra_laws, dual_number_suite, functor_suite, gauge_suite, gluing_suite_for, taylor_suite,
    total_derivative_suite, SuiteReport,
};
use fieldspace::fermion::scan_odd_orders;
use fieldspace::infinitesimal::taylor_via_disk;
use fieldspace::jet::{action_on_plot, euler_lagrange, fd_suite, first_variation, is_critical_plot, OracleParams};
use fieldspace::scalar::Rational;
use fieldspace::simplicial::{
    build_two_form_groupoid, build_yang_mills_groupoid, check_kan, check_simplicial_identities, kan_fill, Horn,
    IdentityReport, SimplicialTruncation,
};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dsl::{self, ParseError, TheoryDocument};
use crate::theory::{self, TheoryError};

/// Version tag carried by every record.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{file}:{error}")]
    Parse { file: String, error: ParseError },
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Model(String),
}

impl From<TheoryError> for CliError {
    fn from(e: TheoryError) -> Self {
        CliError::Model(e.0)
    }
}

fn model<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Model(e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub records: Vec<Value>,
    pub human: Vec<String>,
    pub passed: bool,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            records: Vec::new(),
            human: Vec::new(),
            passed: true,
        }
    }

    fn record(&mut self, kind: &str, mut body: Value) {
        let obj = body.as_object_mut().expect("records are objects");
        obj.insert("kind".into(), json!(kind));
        obj.insert("schema".into(), json!(format!("fieldspace.{kind}.v{SCHEMA_VERSION}")));
        self.records.push(body);
    }

    fn line(&mut self, s: impl Into<String>) {
        self.human.push(s.into());
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<TheoryDocument, CliError> {
    let src = read(path)?;
    dsl::parse(&src).map_err(|error| CliError::Parse {
        file: path.display().to_string(),
        error,
    })
}

fn load_on(path: &Path, base: &TheoryDocument) -> Result<TheoryDocument, CliError> {
    let src = read(path)?;
    dsl::parse_with(&src, Some(base)).map_err(|error| CliError::Parse {
        file: path.display().to_string(),
        error,
    })
}

fn bounds_json(b: &[(Rational, Rational)]) -> Value {
    json!(b.iter().map(|(lo, hi)| vec![lo.to_string(), hi.to_string()]).collect::<Vec<_>>())
}

pub fn el(path: &Path) -> Result<Outcome, CliError> {
    let doc = load(path)?;
    let spec = theory::lagrangian_spec(&doc)?;
    let el = euler_lagrange(&spec).map_err(model)?;
    let mut out = Outcome::new();
    let eqs: Vec<Value> = el
        .components
        .iter()
        .map(|(n, e)| json!({"field": n, "expression": e.to_string()}))
        .collect();
    for (n, e) in &el.components {
        out.line(format!("EL_{n} = {e}"));
    }
    out.record(
        "euler-lagrange",
        json!({"lagrangian": spec.density().to_string(), "jet_order": spec.jet().order(), "equations": eqs}),
    );
    Ok(out)
}

fn box_for(doc: &TheoryDocument, spec: Option<&str>) -> Result<Vec<(Rational, Rational)>, CliError> {
    theory::parse_box(spec.unwrap_or("0,1"), doc.spacetime.len()).map_err(CliError::Usage)
}

pub fn action(path: &Path, plot: &Path, bounds: Option<&str>) -> Result<Outcome, CliError> {
    let doc = load(path)?;
    let spec = theory::lagrangian_spec(&doc)?;
    let pdoc = load_on(plot, &doc)?;
    let p = theory::plot(&pdoc)?;
    let b = box_for(&doc, bounds)?;
    let s = action_on_plot(&spec, &p, &b).map_err(model)?;
    let mut out = Outcome::new();
    out.line(format!("S = {s}"));
    out.record("action", json!({"plot": p.to_string(), "box": bounds_json(&b), "value": s.to_string()}));
    Ok(out)
}

pub fn variation(path: &Path, plot: &Path, delta: &Path, bounds: Option<&str>) -> Result<Outcome, CliError> {
    let doc = load(path)?;
    let spec = theory::lagrangian_spec(&doc)?;
    let pdoc = load_on(plot, &doc)?;
    let vdoc = load_on(delta, &pdoc)?;
    let vp = theory::variation_plot(&vdoc)?;
    let b = box_for(&doc, bounds)?;
    let fv = first_variation(&spec, &vp, &b).map_err(model)?;
    let mut out = Outcome::new();
    out.line(format!("dS = {}", fv.total));
    out.line(format!("bulk = {}", fv.bulk));
    out.line(format!("boundary = {}", fv.boundary));
    out.record(
        "variation",
        json!({
            "box": bounds_json(&b),
            "total": fv.total.to_string(),
            "bulk": fv.bulk.to_string(),
            "boundary": fv.boundary.to_string(),
        }),
    );
    Ok(out)
}

pub fn critical(path: &Path, plot: &Path) -> Result<Outcome, CliError> {
    let doc = load(path)?;
    let spec = theory::lagrangian_spec(&doc)?;
    let pdoc = load_on(plot, &doc)?;
    let p = theory::plot(&pdoc)?;
    let c = is_critical_plot(&spec, &p).map_err(model)?;
    let mut out = Outcome::new();
    out.line(if c.critical { "critical" } else { "not critical" });
    for (n, r) in &c.residuals {
        out.line(format!("  EL_{n} on the plot = {r}"));
    }
    let residuals: Vec<Value> = c.residuals.iter().map(|(n, r)| json!({"field": n, "residual": r.to_string()})).collect();
    out.record("critical", json!({"plot": p.to_string(), "critical": c.critical, "residuals": residuals}));
    Ok(out)
}

pub fn odd_order(path: &Path, max: usize, seed: u64) -> Result<Outcome, CliError> {
    let doc = load(path)?;
    let spec = theory::lagrangian_spec(&doc)?;
    let scan = scan_odd_orders(&spec, max, seed).map_err(model)?;
    let mut out = Outcome::new();
    for ev in &scan {
        out.line(format!("q = {}: {}", ev.q, ev.verdict));
        out.line(format!("  density: {}", ev.template));
        let witness = ev.witness.as_ref().map(|w| {
            let fns: Vec<Value> = w.functions.iter().map(|(n, f)| json!({"slot": n, "function": f.to_string()})).collect();
            out.line(format!(
                "  witness: {} gives {}",
                w.functions.iter().map(|(n, f)| format!("{n} = {f}")).collect::<Vec<_>>().join(", "),
                w.integral
            ));
            json!({"functions": fns, "integral": w.integral.to_string()})
        });
        out.record(
            "odd-order",
            json!({"q": ev.q, "verdict": ev.verdict.name(), "density": ev.template.to_string(), "witness": witness}),
        );
    }
    let minimal = scan.iter().find(|e| e.verdict == fieldspace::fermion::Verdict::Nontrivial).map(|e| e.q);
    match minimal {
        Some(q) => out.line(format!("minimal odd order: {q}")),
        None => out.line(format!("no nontrivial order up to {max}")),
    }
    out.record("odd-order-result", json!({"max": max, "minimal": minimal}));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Functor,
    Gluing,
    ElOracle,
    Taylor,
    Algebra,
    Gauge,
    TotalDerivative,
}

#[derive(Debug, Clone, Copy)]
pub struct CheckParams {
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
    pub grid_h: f64,
    pub step: f64,
}

const SHOWN_FAILURES: usize = 10;

fn report(out: &mut Outcome, r: &SuiteReport, extra: Value) {
    let status = if r.passed() { "pass" } else { "FAIL" };
    out.line(format!("{status} {}: {} samples, {} failures", r.name, r.samples, r.failures.len()));
    for f in r.failures.iter().take(SHOWN_FAILURES) {
        out.line(format!("  {f}"));
    }
    if r.failures.len() > SHOWN_FAILURES {
        out.line(format!("  ... {} more", r.failures.len() - SHOWN_FAILURES));
    }
    let mut body = json!({"suite": r.name, "samples": r.samples, "failures": r.failures, "passed": r.passed()});
    if let (Some(b), Some(e)) = (body.as_object_mut(), extra.as_object()) {
        b.extend(e.clone());
    }
    out.passed &= r.passed();
    out.record("check", body);
}

pub fn check(path: &Path, suite: Suite, p: CheckParams) -> Result<Outcome, CliError> {
    let doc = load(path)?;
    let mut out = Outcome::new();
    let none = json!({});
    match suite {
        Suite::Functor => {
            let d = theory::descriptor(&doc)?;
            let name = doc.fields.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join("-");
            report(&mut out, &functor_suite(&d, &name, p.samples, p.seed), none);
        }
        Suite::Gluing => {
            let d = theory::descriptor(&doc)?;
            report(&mut out, &gluing_suite_for(&[d], p.samples, p.seed), none);
        }
        Suite::ElOracle => {
            let spec = theory::lagrangian_spec(&doc)?;
            let params = OracleParams {
                h: p.grid_h,
                step: p.step,
                tolerance: p.tolerance,
            };
            let samples = fd_suite(&spec, p.samples, p.seed, &params).map_err(model)?;
            let max = samples.iter().map(|s| s.relative_error).fold(0.0, f64::max);
            let failures = samples
                .iter()
                .enumerate()
                .filter(|(_, s)| !s.passed)
                .map(|(i, s)| {
                    format!(
                        "sample {i}: φ = {}, δφ = {}: exact {:.6e}, fd {:.6e}, rel {:.3e}",
                        s.phi, s.delta, s.exact, s.finite_difference, s.relative_error
                    )
                })
                .collect();
            let r = SuiteReport {
                name: "el-oracle".into(),
                samples: p.samples,
                failures,
            };
            out.line(format!("max relative deviation: {max:.3e} (tolerance {:.1e})", p.tolerance));
            report(
                &mut out,
                &r,
                json!({"max_relative_deviation": format!("{max:.6e}"), "tolerance": p.tolerance, "grid_h": p.grid_h, "step": p.step}),
            );
        }
        Suite::Taylor => {
            report(&mut out, &taylor_suite(p.samples, p.seed), none.clone());
            report(&mut out, &dual_number_suite(p.samples, p.seed), none);
        }
        Suite::Algebra => {
            for r in algebra_laws(p.samples, p.seed) {
                report(&mut out, &r, none.clone());
            }
        }
        Suite::Gauge => {
            for r in gauge_suite(p.samples, p.seed) {
                report(&mut out, &r, none.clone());
            }
        }
        Suite::TotalDerivative => report(&mut out, &total_derivative_suite(p.samples, p.seed), none),
    }
    Ok(out)
}

fn identity_summary(out: &mut Outcome, r: &IdentityReport, what: &str) {
    let status = if r.passed() { "pass" } else { "FAIL" };
    out.line(format!("{status} simplicial identities on {what}: {} checked, {} violations", r.checked, r.violations.len()));
    for v in r.violations.iter().take(SHOWN_FAILURES) {
        out.line(format!("  {v}"));
    }
    out.passed &= r.passed();
    let violations: Vec<String> = r.violations.iter().map(|v| v.to_string()).collect();
    out.record(
        "identities",
        json!({"object": what, "checked": r.checked, "violations": violations, "passed": r.passed()}),
    );
}

/// Parses `n,k,f,...` plus any extra faces. Faces are labels at level
/// `n - 1`, or indices when no label matches.
fn parse_horn(x: &SimplicialTruncation, spec: &str, extra: &[String]) -> Result<Horn, CliError> {
    let mut parts = spec.split(',').map(str::trim);
    let num = |s: Option<&str>, what: &str| -> Result<usize, CliError> {
        s.and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Usage(format!("--horn: expected {what} in `{spec}`")))
    };
    let n = num(parts.next(), "n")?;
    let k = num(parts.next(), "k")?;
    let faces: Vec<String> = parts.map(str::to_string).chain(extra.iter().cloned()).collect();
    if n == 0 || n > x.dim() {
        return Err(CliError::Usage(format!("--horn: n = {n} is outside 1..={}", x.dim())));
    }
    let mut idx = Vec::new();
    for f in &faces {
        let i = match x.find(n - 1, f) {
            Some(i) => i,
            None => f
                .parse::<usize>()
                .ok()
                .filter(|&i| i < x.len(n - 1))
                .ok_or_else(|| CliError::Usage(format!("--horn: no {}-simplex `{f}`", n - 1)))?,
        };
        idx.push(i);
    }
    Ok(Horn { n, k, faces: idx })
}

pub fn kan(path: &Path, horn: Option<&str>, faces: &[String], all: bool) -> Result<Outcome, CliError> {
    let src = read(path)?;
    let x = SimplicialTruncation::from_json(&src).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut out = Outcome::new();
    match horn {
        Some(spec) => {
            let h = parse_horn(&x, spec, faces)?;
            let fillers = kan_fill(&x, &h, all).map_err(|e| CliError::Usage(e.to_string()))?;
            let labels: Vec<&str> = fillers.iter().map(|&f| x.label(h.n, f)).collect();
            out.line(format!("horn {}", h.describe(&x)));
            if labels.is_empty() {
                out.line("no filler");
                out.passed = false;
            }
            for l in &labels {
                out.line(format!("filler: {l}"));
            }
            out.record(
                "kan-fill",
                json!({"n": h.n, "k": h.k, "faces": h.faces, "fillers": labels, "complete": all}),
            );
        }
        None => {
            identity_summary(&mut out, &check_simplicial_identities(&x), &path.display().to_string());
            for n in 1..=x.dim() {
                let r = check_kan(&x, n).map_err(model)?;
                let status = if r.passed() { "pass" } else { "FAIL" };
                out.line(format!(
                    "{status} Kan condition at n = {n}: {} horns, {} filled, {} unique",
                    r.horns, r.filled, r.unique
                ));
                for h in r.unfilled.iter().take(SHOWN_FAILURES) {
                    out.line(format!("  unfilled: {}", h.describe(&x)));
                }
                out.passed &= r.passed();
                let unfilled: Vec<String> = r.unfilled.iter().map(|h| h.describe(&x)).collect();
                out.record(
                    "kan",
                    json!({"n": n, "horns": r.horns, "filled": r.filled, "unique": r.unique, "unfilled": unfilled, "passed": r.passed()}),
                );
            }
        }
    }
    Ok(out)
}

pub fn groupoid(path: &Path, dim: usize, emit: Option<&Path>) -> Result<Outcome, CliError> {
    let doc = load(path)?;
    let mut out = Outcome::new();
    let truncation = if !doc.objects.is_empty() || !doc.one_forms.is_empty() {
        let spec = theory::two_form_spec(&doc)?;
        let g = build_two_form_groupoid(&spec).map_err(model)?;
        let x = &g.truncation;
        out.line(format!(
            "two-form groupoid: {} objects, {} gauge transformations, {} 2-cells",
            x.len(0),
            x.len(1),
            x.len(2)
        ));
        out.record(
            "two-form-groupoid",
            json!({"levels": (0..=x.dim()).map(|n| x.len(n)).collect::<Vec<_>>()}),
        );
        identity_summary(&mut out, &check_simplicial_identities(x), "two-form groupoid");
        let horns = g.generator_horns();
        let mut ok = true;
        for h in &horns {
            let fill = g.fill_inner(h).map_err(model)?;
            let good = !fill.fillers.is_empty() && fill.differences_exact;
            ok &= good;
            out.record(
                "horn-fill",
                json!({
                    "horn": h.describe(x),
                    "fillers": fill.fillers.iter().map(|&c| x.label(2, c)).collect::<Vec<_>>(),
                    "composites": fill.composites.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                    "differences_exact": fill.differences_exact,
                }),
            );
            if !good {
                out.line(format!("  FAIL horn {}", h.describe(x)));
            }
        }
        let status = if ok { "pass" } else { "FAIL" };
        out.line(format!("{status} inner horns: {} generator horns filled, filler differences exact", horns.len()));
        out.passed &= ok;
        g.truncation
    } else if !doc.connections.is_empty() || !doc.elements.is_empty() {
        let sample = theory::group_sample(&doc)?;
        let conns = theory::connections(&doc)?;
        let n = sample.matrices.first().map(|m| m.size()).or(conns.first().map(|c| c.n)).unwrap_or(1);
        let g = build_yang_mills_groupoid(n, &doc.spacetime, &conns, &sample, dim).map_err(model)?;
        let x = &g.truncation;
        out.line(format!(
            "gauge groupoid: {} connections, group of order {}, {} arrows",
            g.objects.len(),
            g.group.order(),
            x.len(1)
        ));
        out.record(
            "gauge-groupoid",
            json!({
                "objects": g.objects.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                "group_order": g.group.order(),
                "levels": (0..=x.dim()).map(|n| x.len(n)).collect::<Vec<_>>(),
            }),
        );
        identity_summary(&mut out, &check_simplicial_identities(x), "gauge groupoid");
        for k in 2..=x.dim() {
            let r = check_kan(x, k).map_err(model)?;
            let status = if r.passed() && r.all_unique() { "pass" } else { "FAIL" };
            out.line(format!("{status} Kan condition at n = {k}: {} horns, {} unique fillers", r.horns, r.unique));
            out.passed &= r.passed() && r.all_unique();
            out.record("kan", json!({"n": k, "horns": r.horns, "filled": r.filled, "unique": r.unique, "passed": r.passed()}));
        }
        g.truncation
    } else {
        return Err(CliError::Model("the model declares no groupoid data".into()));
    };
    if let Some(p) = emit {
        std::fs::write(p, truncation.to_json()).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        })?;
        out.line(format!("wrote {}", p.display()));
    }
    Ok(out)
}

pub fn taylor(expr: &str, at: &str, order: u32, var: &str) -> Result<Outcome, CliError> {
    let e = dsl::parse_expression(expr, &[var.to_string()]).map_err(|error| CliError::Parse {
        file: "--expr".into(),
        error,
    })?;
    let f = theory::scalar_expression(&e, var)?;
    let p = theory::parse_rational(at).map_err(CliError::Usage)?;
    let t = taylor_via_disk(&f, var, &p, order).map_err(model)?;
    let mut out = Outcome::new();
    out.line(t.to_string());
    out.record(
        "taylor",
        json!({
            "expression": e.to_string(),
            "variable": var,
            "point": p.to_string(),
            "order": order,
            "polynomial": t.to_string(),
            "coefficients": t.coefficients.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        }),
    );
    Ok(out)
}
