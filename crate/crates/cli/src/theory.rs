//! Evaluation of parsed model files into the objects of the core library.

use std::sync::Arc;

use fieldspace::forms::Form;
use fieldspace::jet::{JetSpace, LagrangianSpec, VariationPlot};
use fieldspace::probes::{FieldComponent, FieldSpaceDescriptor, PlotHom, ProbeSpace};
use fieldspace::scalar::{Rational, Scalar};
use fieldspace::simplicial::{GroupSample, MatrixForm, RatMatrix, ScalarMatrix, TwoFormSpec};
use fieldspace::superalgebra::super_inverse;
use fieldspace::{Ambient, Parity, SuperPoly};
use num_traits::Zero;
use thiserror::Error;

use crate::dsl::{BinOp, Expr, TheoryDocument};

/// Evaluation failure; `parity` marks the errors reported as parity errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct EvalError {
    pub message: String,
    pub parity: bool,
}

fn semantic(message: impl Into<String>) -> EvalError {
    EvalError {
        message: message.into(),
        parity: false,
    }
}

fn parity_error(message: impl Into<String>) -> EvalError {
    EvalError {
        message: message.into(),
        parity: true,
    }
}

fn wrap<E: std::fmt::Display>(e: E) -> EvalError {
    semantic(e.to_string())
}

/// Error raised when a model lacks what a command needs.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct TheoryError(pub String);

impl From<EvalError> for TheoryError {
    fn from(e: EvalError) -> Self {
        TheoryError(e.message)
    }
}

struct Env<'a> {
    amb: Arc<Ambient>,
    doc: &'a TheoryDocument,
    jet: Option<&'a JetSpace>,
}

fn eval(e: &Expr, env: &Env) -> Result<SuperPoly, EvalError> {
    let amb = &env.amb;
    Ok(match e {
        Expr::Num(r) => SuperPoly::scalar(amb, Scalar::from_rational(r.clone())),
        Expr::Name(n) => {
            if env.doc.params.contains(n) {
                SuperPoly::scalar(amb, Scalar::sym(n.clone()))
            } else if let (Some(jet), Some(_)) = (env.jet, env.doc.field_parity(n)) {
                jet.var(n, &[]).map_err(wrap)?
            } else {
                SuperPoly::gen(amb, n).map_err(wrap)?
            }
        }
        Expr::Neg(a) => eval(a, env)?.neg(),
        Expr::Bin(op, a, b) => {
            let (x, y) = (eval(a, env)?, eval(b, env)?);
            match op {
                BinOp::Add => x.add(&y).map_err(wrap)?,
                BinOp::Sub => x.sub(&y).map_err(wrap)?,
                BinOp::Mul => x.mul(&y).map_err(wrap)?,
                BinOp::Div => x.mul(&invert(&y, b)?).map_err(wrap)?,
            }
        }
        Expr::Pow(a, n) => {
            let x = eval(a, env)?;
            if *n >= 0 {
                x.pow(*n as u32)
            } else {
                invert(&x, a)?.pow(n.unsigned_abs())
            }
        }
        Expr::Call(kind, a) => {
            let x = eval(a, env)?;
            if !x.has_parity(Parity::Even) {
                return Err(parity_error(format!("{} of the odd expression `{a}`", kind.name())));
            }
            x.elementary(*kind).map_err(wrap)?
        }
        Expr::Deriv(u, cs) => {
            let jet = env.jet.ok_or_else(|| semantic("jet derivative outside a lagrangian"))?;
            let cs: Vec<&str> = cs.iter().map(String::as_str).collect();
            jet.var(u, &cs).map_err(wrap)?
        }
        Expr::Pair(l, m, r) => {
            let jet = env.jet.ok_or_else(|| semantic("pair outside a lagrangian"))?;
            let mat = constant_matrix(env.doc.matrix(m).ok_or_else(|| semantic(format!("unknown matrix `{m}`")))?)
                .map_err(semantic)?;
            let side = |x: &Expr| -> Result<Vec<SuperPoly>, EvalError> {
                let (name, cs): (&str, Vec<&str>) = match x {
                    Expr::Name(n) => (n, vec![]),
                    Expr::Deriv(n, cs) => (n, cs.iter().map(String::as_str).collect()),
                    _ => return Err(semantic("pair operands are multiplets")),
                };
                let members = env.doc.multiplet(name).ok_or_else(|| semantic(format!("unknown multiplet `{name}`")))?;
                members.iter().map(|f| jet.var(f, &cs).map_err(wrap)).collect()
            };
            let (ls, rs) = (side(l)?, side(r)?);
            if ls.len() != mat.size() || rs.len() != mat.size() {
                return Err(semantic(format!("matrix `{m}` does not match the multiplet size")));
            }
            let mut acc = SuperPoly::zero(amb);
            for (a, x) in ls.iter().enumerate() {
                for (b, y) in rs.iter().enumerate() {
                    let c = mat.get(a, b);
                    if c.is_zero() {
                        continue;
                    }
                    let term = x.mul(y).map_err(wrap)?.scale(&Scalar::from_rational(c.clone()));
                    acc = &acc + &term;
                }
            }
            acc
        }
        Expr::Diff(_) => return Err(semantic("differential in a function context")),
        Expr::Matrix(_) => return Err(semantic("matrix in a function context")),
    })
}

fn invert(y: &SuperPoly, src: &Expr) -> Result<SuperPoly, EvalError> {
    if !y.has_parity(Parity::Even) {
        return Err(parity_error(format!("division by the odd expression `{src}`")));
    }
    super_inverse(y).map_err(|_| semantic(format!("`{src}` is not invertible")))
}

pub(crate) fn pair_multiplet(e: &Expr) -> &str {
    match e {
        Expr::Name(n) | Expr::Deriv(n, _) => n,
        _ => "",
    }
}

fn rational_of(e: &Expr) -> Result<Rational, String> {
    let amb = Ambient::new(vec![], vec![], vec![], 0).expect("empty ambient");
    let doc = TheoryDocument::default();
    let env = Env {
        amb,
        doc: &doc,
        jet: None,
    };
    let v = eval(e, &env).map_err(|e| e.message)?;
    v.body()
        .as_rational()
        .filter(|_| v.nilpotent_part().is_zero())
        .ok_or_else(|| format!("`{e}` is not a rational constant"))
}

/// A square matrix literal with rational entries.
pub fn constant_matrix(e: &Expr) -> Result<RatMatrix, String> {
    let Expr::Matrix(rows) = e else {
        return Err("expected a matrix literal".into());
    };
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(format!("matrix literal is not square ({n} rows)"));
    }
    let entries = rows.iter().flatten().map(rational_of).collect::<Result<Vec<_>, _>>()?;
    RatMatrix::new(n, entries).map_err(|e| e.to_string())
}

pub fn check_element(m: &RatMatrix) -> Result<(), String> {
    m.inverse().map(|_| ()).ok_or_else(|| format!("group element {m} is singular"))
}

// ---------------------------------------------------------------------------
// field theories

fn components(doc: &TheoryDocument) -> Vec<FieldComponent> {
    doc.fields
        .iter()
        .map(|(n, p)| FieldComponent {
            name: n.clone(),
            parity: *p,
        })
        .collect()
}

pub(crate) fn constraint_scalar(doc: &TheoryDocument, lhs: &Expr, rhs: &Expr) -> Result<Scalar, EvalError> {
    let even: Vec<String> = doc.fields.iter().filter(|(_, p)| *p == Parity::Even).map(|(n, _)| n.clone()).collect();
    for (n, p) in &doc.fields {
        if *p == Parity::Odd && (mentions(lhs, n) || mentions(rhs, n)) {
            return Err(parity_error(format!("constraint mentions the odd field `{n}`")));
        }
    }
    let env = Env {
        amb: Ambient::new(even, vec![], vec![], 0).map_err(wrap)?,
        doc,
        jet: None,
    };
    let v = eval(lhs, &env)?.sub(&eval(rhs, &env)?).map_err(wrap)?;
    Ok(v.body())
}

fn mentions(e: &Expr, name: &str) -> bool {
    match e {
        Expr::Name(n) | Expr::Deriv(n, _) => n == name,
        Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => mentions(a, name),
        Expr::Bin(_, a, b) | Expr::Pair(a, _, b) => mentions(a, name) || mentions(b, name),
        Expr::Matrix(rows) => rows.iter().flatten().any(|x| mentions(x, name)),
        _ => false,
    }
}

pub fn descriptor(doc: &TheoryDocument) -> Result<Arc<FieldSpaceDescriptor>, TheoryError> {
    if doc.spacetime.is_empty() || doc.fields.is_empty() {
        return Err(TheoryError("the model declares no spacetime or no fields".into()));
    }
    let constraints = doc
        .constraints
        .iter()
        .map(|(l, r)| constraint_scalar(doc, l, r))
        .collect::<Result<Vec<_>, _>>()?;
    FieldSpaceDescriptor::new(doc.spacetime.clone(), components(doc), constraints).map_err(|e| TheoryError(e.to_string()))
}

/// Jet order used for the Lagrangian: at least 1, the declared `order`, and
/// the highest derivative that occurs.
pub fn jet_order(doc: &TheoryDocument, e: &Expr) -> u32 {
    doc.order.unwrap_or(1).max(e.max_derivative()).max(1)
}

fn density(doc: &TheoryDocument, e: &Expr) -> Result<(Arc<JetSpace>, SuperPoly), EvalError> {
    let jet = JetSpace::new(doc.spacetime.clone(), components(doc), jet_order(doc, e)).map_err(wrap)?;
    let env = Env {
        amb: jet.ambient().clone(),
        doc,
        jet: Some(&jet),
    };
    let v = eval(e, &env)?;
    Ok((jet, v))
}

pub(crate) fn check_density(doc: &TheoryDocument, e: &Expr) -> Result<(), EvalError> {
    let (_, v) = density(doc, e)?;
    match v.parity() {
        Some(Parity::Even) => Ok(()),
        Some(Parity::Odd) => Err(parity_error("the lagrangian density is odd; it must be even")),
        None => Err(parity_error("the lagrangian density mixes even and odd terms")),
    }
}

pub fn lagrangian_spec(doc: &TheoryDocument) -> Result<LagrangianSpec, TheoryError> {
    let e = doc.lagrangian.as_ref().ok_or_else(|| TheoryError("the model has no lagrangian".into()))?;
    let d = descriptor(doc)?;
    let (jet, v) = density(doc, e)?;
    LagrangianSpec::new(d, jet, v).map_err(|e| TheoryError(e.to_string()))
}

fn plot_env(doc: &TheoryDocument) -> Result<(ProbeSpace, Arc<Ambient>), EvalError> {
    let probe = doc.probe.unwrap_or_else(ProbeSpace::point);
    let d = FieldSpaceDescriptor::new(doc.spacetime.clone(), components(doc), vec![]).map_err(wrap)?;
    Ok((probe, d.plot_ambient(&probe).map_err(wrap)?))
}

fn plot_value(doc: &TheoryDocument, e: &Expr) -> Result<SuperPoly, EvalError> {
    let (_, amb) = plot_env(doc)?;
    eval(e, &Env { amb, doc, jet: None })
}

pub(crate) fn check_plot_component(doc: &TheoryDocument, field: &str, parity: Parity, e: &Expr) -> Result<(), EvalError> {
    let v = plot_value(doc, e)?;
    if !v.has_parity(parity) {
        return Err(parity_error(format!("`{field}` is {} but the expression `{e}` is not", parity.name())));
    }
    Ok(())
}

fn plot_components(doc: &TheoryDocument, list: &[(String, Expr)], what: &str) -> Result<Vec<SuperPoly>, TheoryError> {
    doc.fields
        .iter()
        .map(|(n, _)| {
            let (_, e) = list
                .iter()
                .find(|(m, _)| m == n)
                .ok_or_else(|| TheoryError(format!("no {what} given for `{n}`")))?;
            Ok(plot_value(doc, e)?)
        })
        .collect()
}

/// The plot given by the `plot` statements; every field needs one.
pub fn plot(doc: &TheoryDocument) -> Result<PlotHom, TheoryError> {
    let d = descriptor(doc)?;
    let probe = doc.probe.unwrap_or_else(ProbeSpace::point);
    let comps = plot_components(doc, &doc.plots, "plot")?;
    PlotHom::new(probe, d, comps).map_err(|e| TheoryError(e.to_string()))
}

pub fn variation_plot(doc: &TheoryDocument) -> Result<VariationPlot, TheoryError> {
    let p = plot(doc)?;
    let delta = plot_components(doc, &doc.variations, "variation")?;
    VariationPlot::new(p, delta).map_err(|e| TheoryError(e.to_string()))
}

// ---------------------------------------------------------------------------
// forms

fn form_ambient(doc: &TheoryDocument) -> Result<Arc<Ambient>, EvalError> {
    Ambient::new(doc.spacetime.clone(), vec![], vec![], 0).map_err(wrap)
}

fn eval_form(e: &Expr, doc: &TheoryDocument, amb: &Arc<Ambient>) -> Result<Form, EvalError> {
    let coords = &doc.spacetime;
    let function = |e: &Expr| -> Result<SuperPoly, EvalError> {
        let f = eval_form(e, doc, amb)?;
        if f.degree() != 0 && !f.is_zero() {
            return Err(semantic(format!("`{e}` has degree {}, expected a function", f.degree())));
        }
        Ok(f.coefficient(&[]))
    };
    Ok(match e {
        Expr::Diff(cs) => {
            let idx: Vec<usize> = cs.iter().map(|c| coords.iter().position(|x| x == c).expect("checked")).collect();
            Form::monomial(coords, SuperPoly::one(amb), &idx).map_err(wrap)?
        }
        Expr::Neg(a) => eval_form(a, doc, amb)?.neg(),
        Expr::Bin(BinOp::Add | BinOp::Sub, a, b) => {
            let (x, y) = (eval_form(a, doc, amb)?, eval_form(b, doc, amb)?);
            let y = if matches!(e, Expr::Bin(BinOp::Sub, ..)) { y.neg() } else { y };
            // zero adapts to the degree of the other summand
            if x.is_zero() && x.degree() != y.degree() {
                y
            } else if y.is_zero() && x.degree() != y.degree() {
                x
            } else {
                x.add(&y).map_err(wrap)?
            }
        }
        Expr::Bin(BinOp::Mul, a, b) => eval_form(a, doc, amb)?.wedge(&eval_form(b, doc, amb)?).map_err(wrap)?,
        Expr::Bin(BinOp::Div, a, b) => {
            let den = function(b)?;
            eval_form(a, doc, amb)?.left_mul(&invert(&den, b)?).map_err(wrap)?
        }
        Expr::Pow(a, n) => {
            let base = function(a)?;
            let v = if *n >= 0 { base.pow(*n as u32) } else { invert(&base, a)?.pow(n.unsigned_abs()) };
            Form::function(coords, v)
        }
        Expr::Call(k, a) => Form::function(coords, function(a)?.elementary(*k).map_err(wrap)?),
        Expr::Num(_) | Expr::Name(_) => Form::function(coords, eval(e, &Env { amb: amb.clone(), doc, jet: None })?),
        Expr::Deriv(..) | Expr::Pair(..) | Expr::Matrix(_) => return Err(semantic(format!("`{e}` is not a form"))),
    })
}

/// Evaluates a form expression and checks its degree; the literal zero has
/// every degree.
pub(crate) fn form_of_degree(doc: &TheoryDocument, e: &Expr, degree: usize) -> Result<Form, EvalError> {
    let amb = form_ambient(doc)?;
    let f = eval_form(e, doc, &amb)?;
    if f.is_zero() {
        return Ok(Form::zero(&amb, &doc.spacetime, degree));
    }
    if f.degree() != degree {
        return Err(semantic(format!("expected a {degree}-form, found a {}-form", f.degree())));
    }
    Ok(f)
}

pub fn two_form_spec(doc: &TheoryDocument) -> Result<TwoFormSpec, TheoryError> {
    let all = |v: &[Expr], k| v.iter().map(|e| form_of_degree(doc, e, k)).collect::<Result<Vec<_>, _>>();
    Ok(TwoFormSpec {
        objects: all(&doc.objects, 2)?,
        one_forms: all(&doc.one_forms, 1)?,
        zero_forms: all(&doc.zero_forms, 0)?,
    })
}

// ---------------------------------------------------------------------------
// matrix-valued forms

#[derive(Debug, Clone)]
enum MValue {
    Fun(Scalar),
    Mat(ScalarMatrix),
    /// Scalar 1-form, one coefficient per coordinate.
    Form(Vec<Scalar>),
    MatForm(Vec<ScalarMatrix>),
}

fn mat_scale(m: &ScalarMatrix, s: &Scalar) -> ScalarMatrix {
    m.map(|x| x.mul(s))
}

fn eval_matrix(e: &Expr, doc: &TheoryDocument, amb: &Arc<Ambient>) -> Result<MValue, EvalError> {
    use MValue::*;
    let coords = &doc.spacetime;
    let bad = |what: &str| semantic(format!("{what} in `{e}` is not supported for matrix forms"));
    Ok(match e {
        Expr::Num(_) | Expr::Name(_) => Fun(eval(e, &Env { amb: amb.clone(), doc, jet: None })?.body()),
        Expr::Diff(cs) => {
            if cs.len() != 1 {
                return Err(semantic("connections are 1-forms"));
            }
            let i = coords.iter().position(|x| x == &cs[0]).expect("checked");
            Form((0..coords.len()).map(|j| if i == j { Scalar::one() } else { Scalar::zero() }).collect())
        }
        Expr::Matrix(rows) => {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(semantic("matrix literal is not square"));
            }
            let mut entries = Vec::new();
            for x in rows.iter().flatten() {
                match eval_matrix(x, doc, amb)? {
                    Fun(s) => entries.push(s),
                    _ => return Err(semantic("matrix entries must be functions")),
                }
            }
            Mat(ScalarMatrix { n, entries })
        }
        Expr::Neg(a) => match eval_matrix(a, doc, amb)? {
            Fun(s) => Fun(s.neg()),
            Mat(m) => Mat(mat_scale(&m, &Scalar::from(-1))),
            Form(v) => Form(v.iter().map(Scalar::neg).collect()),
            MatForm(v) => MatForm(v.iter().map(|m| mat_scale(m, &Scalar::from(-1))).collect()),
        },
        Expr::Bin(op @ (BinOp::Add | BinOp::Sub), a, b) => {
            let x = eval_matrix(a, doc, amb)?;
            let mut y = eval_matrix(&Expr::Neg(b.clone()), doc, amb)?;
            if *op == BinOp::Add {
                y = eval_matrix(b, doc, amb)?;
            }
            match (x, y) {
                (Fun(p), Fun(q)) => Fun(p.add(&q)),
                (Fun(z), v) | (v, Fun(z)) if z.is_zero() => v,
                (Mat(p), Mat(q)) if p.n == q.n => Mat(p.add(&q)),
                (Form(p), Form(q)) => Form(p.iter().zip(&q).map(|(a, b)| a.add(b)).collect()),
                (MatForm(p), MatForm(q)) if p.iter().zip(&q).all(|(a, b)| a.n == b.n) => {
                    MatForm(p.iter().zip(&q).map(|(a, b)| a.add(b)).collect())
                }
                _ => return Err(bad("a sum of different kinds")),
            }
        }
        Expr::Bin(BinOp::Mul, a, b) => match (eval_matrix(a, doc, amb)?, eval_matrix(b, doc, amb)?) {
            (Fun(p), Fun(q)) => Fun(p.mul(&q)),
            (Fun(s), Mat(m)) | (Mat(m), Fun(s)) => Mat(mat_scale(&m, &s)),
            (Mat(p), Mat(q)) if p.n == q.n => Mat(p.mul(&q)),
            (Fun(s), Form(v)) | (Form(v), Fun(s)) => Form(v.iter().map(|x| x.mul(&s)).collect()),
            (Mat(m), Form(v)) | (Form(v), Mat(m)) => MatForm(v.iter().map(|x| mat_scale(&m, x)).collect()),
            (Fun(s), MatForm(v)) | (MatForm(v), Fun(s)) => MatForm(v.iter().map(|m| mat_scale(m, &s)).collect()),
            _ => return Err(bad("a product")),
        },
        Expr::Bin(BinOp::Div, a, b) => match (eval_matrix(a, doc, amb)?, eval_matrix(b, doc, amb)?) {
            (x, Fun(s)) => {
                let inv = s.inv().ok_or_else(|| semantic(format!("`{b}` is not invertible")))?;
                match x {
                    Fun(p) => Fun(p.mul(&inv)),
                    Mat(m) => Mat(mat_scale(&m, &inv)),
                    Form(v) => Form(v.iter().map(|x| x.mul(&inv)).collect()),
                    MatForm(v) => MatForm(v.iter().map(|m| mat_scale(m, &inv)).collect()),
                }
            }
            _ => return Err(bad("a division")),
        },
        Expr::Pow(a, n) => match eval_matrix(a, doc, amb)? {
            Fun(s) if *n >= 0 => Fun(s.pow(*n)),
            Fun(s) => Fun(s.inv().ok_or_else(|| semantic(format!("`{a}` is not invertible")))?.pow(-n)),
            _ => return Err(bad("a power")),
        },
        Expr::Call(k, a) => match eval_matrix(a, doc, amb)? {
            Fun(s) => Fun(Scalar::func(*k, s)),
            _ => return Err(bad("a function call")),
        },
        Expr::Deriv(..) | Expr::Pair(..) => return Err(bad("a jet expression")),
    })
}

/// A `gl(n)`-valued 1-form `Σ_μ A_μ d(x^μ)`.
pub(crate) fn matrix_form(doc: &TheoryDocument, e: &Expr) -> Result<MatrixForm, EvalError> {
    let amb = form_ambient(doc)?;
    match eval_matrix(e, doc, &amb)? {
        MValue::MatForm(v) => {
            let n = v[0].n;
            MatrixForm::new(n, &doc.spacetime, v).map_err(wrap)
        }
        _ => Err(semantic(format!("`{e}` is not a matrix-valued 1-form"))),
    }
}

pub fn group_sample(doc: &TheoryDocument) -> Result<GroupSample, TheoryError> {
    let elements = doc
        .elements
        .iter()
        .map(|(n, e)| constant_matrix(e).map(|m| (n.clone(), m)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(TheoryError)?;
    Ok(GroupSample::new(elements))
}

pub fn connections(doc: &TheoryDocument) -> Result<Vec<MatrixForm>, TheoryError> {
    Ok(doc
        .connections
        .iter()
        .map(|(_, e)| matrix_form(doc, e))
        .collect::<Result<Vec<_>, _>>()?)
}

// ---------------------------------------------------------------------------
// standalone expressions

/// Evaluates a one-variable expression to a scalar function.
pub fn scalar_expression(e: &Expr, var: &str) -> Result<Scalar, TheoryError> {
    let amb = Ambient::new(vec![var.to_string()], vec![], vec![], 0).map_err(|e| TheoryError(e.to_string()))?;
    let doc = TheoryDocument::default();
    let v = eval(e, &Env { amb, doc: &doc, jet: None })?;
    Ok(v.body())
}

/// `a,b` box bounds per coordinate.
pub fn parse_box(spec: &str, dim: usize) -> Result<Vec<(Rational, Rational)>, String> {
    let vals = spec
        .split(',')
        .map(|s| parse_rational(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if vals.len() == 2 && dim > 1 {
        return Ok(vec![(vals[0].clone(), vals[1].clone()); dim]);
    }
    if vals.len() != 2 * dim {
        return Err(format!("expected {} bounds for {dim} coordinates, found {}", 2 * dim, vals.len()));
    }
    Ok(vals.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect())
}

/// `3`, `-1/2` or `0.25`.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let bad = || format!("`{s}` is not a rational number");
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let r = if let Some((n, d)) = body.split_once('/') {
        let n: num_bigint::BigInt = n.parse().map_err(|_| bad())?;
        let d: num_bigint::BigInt = d.parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        Rational::new(n, d)
    } else {
        let e = crate::dsl::parse_expression(body, &[]).map_err(|_| bad())?;
        match e {
            Expr::Num(r) => r,
            _ => return Err(bad()),
        }
    };
    Ok(if neg { -r } else { r })
}
