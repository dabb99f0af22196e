//! Finite-order jet spaces, total derivatives and the Euler–Lagrange
//! operator.
//!
//! Jet coordinates `u^a_I` are generators of a super algebra: even fields
//! give even variables, odd fields give Grassmann generators. Multi-indices
//! are sorted, so `u_xt` and `u_tx` are the same coordinate. All odd
//! derivatives are left derivatives, and variations pair as `δφ · EL`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_traits::Signed;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::forms::{Form, FormError};
use crate::probes::{FieldComponent, FieldSpaceDescriptor, PlotHom, ProbeError};
use crate::random::{nonzero_rational, random_polynomial, sample_rng, SampleRng};
use crate::scalar::{rational_to_f64, Rational, Scalar};
use crate::superalgebra::{AlgebraError, Ambient, Parity, Substitution, SuperPoly};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JetError {
    #[error("jet order bound {order} exceeded while differentiating `{name}`")]
    BoundExceeded { name: String, order: u32 },
    #[error("the Lagrangian density must be even")]
    OddDensity,
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("unknown coordinate `{0}`")]
    UnknownCoordinate(String),
    #[error("variation of `{0}` has the wrong parity")]
    VariationParity(String),
    #[error("the oracle needs one even field over one coordinate")]
    OracleShape,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

/// Sorted list of coordinate indices.
pub type MultiIndex = Vec<usize>;

/// `J^n` of a trivial bundle over a coordinate patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetSpace {
    coords: Vec<String>,
    fields: Vec<FieldComponent>,
    order: u32,
    ambient: Arc<Ambient>,
    /// jet coordinate name -> (field index, multi-index)
    index: HashMap<String, (usize, MultiIndex)>,
}

impl JetSpace {
    pub fn new(coords: Vec<String>, fields: Vec<FieldComponent>, order: u32) -> Result<Arc<Self>, JetError> {
        let long = coords.iter().any(|c| c.chars().count() > 1);
        let mut even = coords.clone();
        let mut odd = Vec::new();
        let mut index = HashMap::new();
        let indices = multi_indices(coords.len(), order);
        for (a, f) in fields.iter().enumerate() {
            for mi in &indices {
                let name = jet_name(&f.name, mi, &coords, long);
                match f.parity {
                    Parity::Even => even.push(name.clone()),
                    Parity::Odd => odd.push(name.clone()),
                }
                index.insert(name, (a, mi.clone()));
            }
        }
        let ambient = Ambient::new(even, odd, vec![], 0)?;
        Ok(Arc::new(JetSpace {
            coords,
            fields,
            order,
            ambient,
            index,
        }))
    }

    pub fn from_descriptor(d: &FieldSpaceDescriptor, order: u32) -> Result<Arc<Self>, JetError> {
        JetSpace::new(d.spacetime().to_vec(), d.components().to_vec(), order)
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }
    pub fn fields(&self) -> &[FieldComponent] {
        &self.fields
    }
    pub fn order(&self) -> u32 {
        self.order
    }
    pub fn ambient(&self) -> &Arc<Ambient> {
        &self.ambient
    }

    /// Same fields and coordinates at a different order.
    pub fn with_order(&self, order: u32) -> Result<Arc<Self>, JetError> {
        JetSpace::new(self.coords.clone(), self.fields.clone(), order)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }

    fn long_names(&self) -> bool {
        self.coords.iter().any(|c| c.chars().count() > 1)
    }

    pub fn name(&self, field: usize, mi: &[usize]) -> String {
        let mut mi = mi.to_vec();
        mi.sort_unstable();
        jet_name(&self.fields[field].name, &mi, &self.coords, self.long_names())
    }

    /// Decodes a jet coordinate name.
    pub fn lookup(&self, name: &str) -> Option<(usize, &MultiIndex)> {
        self.index.get(name).map(|(a, mi)| (*a, mi))
    }

    /// The jet coordinate `u^a_I` as an element.
    pub fn var(&self, field: &str, derivs: &[&str]) -> Result<SuperPoly, JetError> {
        let a = self
            .field_index(field)
            .ok_or_else(|| JetError::UnknownField(field.to_string()))?;
        let mi = derivs
            .iter()
            .map(|d| self.coord_index(d).ok_or_else(|| JetError::UnknownCoordinate(d.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if mi.len() as u32 > self.order {
            return Err(JetError::BoundExceeded {
                name: self.name(a, &mi),
                order: self.order,
            });
        }
        Ok(SuperPoly::gen(&self.ambient, &self.name(a, &mi))?)
    }

    pub fn coord(&self, name: &str) -> Result<SuperPoly, JetError> {
        if self.coord_index(name).is_none() {
            return Err(JetError::UnknownCoordinate(name.to_string()));
        }
        Ok(SuperPoly::gen(&self.ambient, name)?)
    }

    /// Highest derivative order occurring in `e`.
    pub fn expression_order(&self, e: &SuperPoly) -> u32 {
        let mut best = 0;
        for (b, c) in e.terms() {
            for &i in b.odd() {
                let name = &e.ambient().odd()[i as usize];
                if let Some((_, mi)) = self.lookup(name) {
                    best = best.max(mi.len() as u32);
                }
            }
            for s in c.free_symbols() {
                if let Some((_, mi)) = self.lookup(&s) {
                    best = best.max(mi.len() as u32);
                }
            }
        }
        best
    }

    /// `D_μ e = ∂e/∂x^μ + Σ u^a_{I+μ} · ∂e/∂u^a_I`.
    pub fn total_derivative(&self, e: &SuperPoly, mu: usize) -> Result<SuperPoly, JetError> {
        let mut out = e.partial_derivative(&self.coords[mu])?;
        for (a, f) in self.fields.iter().enumerate() {
            for mi in multi_indices(self.coords.len(), self.order) {
                let name = self.name(a, &mi);
                let de = match f.parity {
                    Parity::Even => {
                        if !e.terms().any(|(_, c)| c.depends_on(&name)) {
                            continue;
                        }
                        e.partial_derivative(&name)?
                    }
                    Parity::Odd => e.partial_derivative(&name)?,
                };
                if de.is_zero() {
                    continue;
                }
                let mut up = mi.clone();
                up.push(mu);
                if up.len() as u32 > self.order {
                    return Err(JetError::BoundExceeded {
                        name,
                        order: self.order,
                    });
                }
                let next = SuperPoly::gen(&self.ambient, &self.name(a, &up))?;
                out = &out + &(&next * &de);
            }
        }
        Ok(out)
    }

    /// `D_I e` for a multi-index.
    pub fn total_derivative_multi(&self, e: &SuperPoly, mi: &[usize]) -> Result<SuperPoly, JetError> {
        mi.iter()
            .try_fold(e.clone(), |acc, &mu| self.total_derivative(&acc, mu))
    }

    /// Re-expresses `e` in this jet space (which must be at least as large).
    pub fn raise(&self, e: &SuperPoly) -> Result<SuperPoly, JetError> {
        Ok(e.embed(&self.ambient)?)
    }

    /// Left partial derivative along a jet coordinate.
    pub fn partial(&self, e: &SuperPoly, field: usize, mi: &[usize]) -> Result<SuperPoly, JetError> {
        let name = self.name(field, mi);
        Ok(e.partial_derivative(&name)?)
    }
}

fn jet_name(field: &str, mi: &[usize], coords: &[String], long: bool) -> String {
    if mi.is_empty() {
        return field.to_string();
    }
    let parts: Vec<&str> = mi.iter().map(|&i| coords[i].as_str()).collect();
    if long {
        format!("{field}_{}", parts.join("_"))
    } else {
        format!("{field}_{}", parts.concat())
    }
}

/// All sorted multi-indices over `d` coordinates with length `<= order`,
/// shortest first.
pub fn multi_indices(d: usize, order: u32) -> Vec<MultiIndex> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..order {
        let mut next = Vec::new();
        for mi in &layer {
            let start = mi.last().copied().unwrap_or(0);
            for mu in start..d {
                let mut m: Vec<usize> = mi.clone();
                m.push(mu);
                next.push(m);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// A Lagrangian density `L dx^1…dx^d` on a jet space.
#[derive(Debug, Clone)]
pub struct LagrangianSpec {
    descriptor: Arc<FieldSpaceDescriptor>,
    jet: Arc<JetSpace>,
    density: SuperPoly,
}

impl LagrangianSpec {
    pub fn new(
        descriptor: Arc<FieldSpaceDescriptor>,
        jet: Arc<JetSpace>,
        density: SuperPoly,
    ) -> Result<Self, JetError> {
        if !density.has_parity(Parity::Even) {
            return Err(JetError::OddDensity);
        }
        let density = density.embed(jet.ambient())?;
        Ok(LagrangianSpec {
            descriptor,
            jet,
            density,
        })
    }

    pub fn descriptor(&self) -> &Arc<FieldSpaceDescriptor> {
        &self.descriptor
    }
    pub fn jet(&self) -> &Arc<JetSpace> {
        &self.jet
    }
    pub fn density(&self) -> &SuperPoly {
        &self.density
    }
    pub fn order(&self) -> u32 {
        self.jet.expression_order(&self.density)
    }
}

/// `EL_a` for every field, living in the jet space of twice the order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ELDensity {
    pub jet: Arc<JetSpace>,
    pub components: Vec<(String, SuperPoly)>,
}

impl ELDensity {
    pub fn component(&self, field: &str) -> Option<&SuperPoly> {
        self.components.iter().find(|(n, _)| n == field).map(|(_, e)| e)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|(_, e)| e.is_zero())
    }
}

impl fmt::Display for ELDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, e)) in self.components.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "EL_{n} = {e}")?;
        }
        Ok(())
    }
}

/// `EL_a = Σ_I (−1)^{|I|} D_I(∂L/∂u^a_I)`.
pub fn euler_lagrange(spec: &LagrangianSpec) -> Result<ELDensity, JetError> {
    let n = spec.jet.order.max(spec.order());
    let big = spec.jet.with_order(2 * n)?;
    let l = big.raise(&spec.density)?;
    let d = big.coords.len();
    let components = big
        .fields
        .iter()
        .enumerate()
        .map(|(a, f)| {
            let mut acc = SuperPoly::zero(big.ambient());
            for mi in multi_indices(d, n) {
                let p = big.partial(&l, a, &mi)?;
                if p.is_zero() {
                    continue;
                }
                let term = big.total_derivative_multi(&p, &mi)?;
                acc = if mi.len() % 2 == 0 { &acc + &term } else { &acc - &term };
            }
            Ok((f.name.clone(), acc))
        })
        .collect::<Result<Vec<_>, JetError>>()?;
    Ok(ELDensity {
        jet: big,
        components,
    })
}

/// `u^a_I ↦ ∂_I φ^a` for `|I| <= order`.
pub fn prolong(plot: &PlotHom, order: u32) -> Result<BTreeMap<String, SuperPoly>, JetError> {
    let jet = JetSpace::from_descriptor(plot.descriptor(), order)?;
    prolong_into(&jet, plot)
}

fn prolong_into(jet: &JetSpace, plot: &PlotHom) -> Result<BTreeMap<String, SuperPoly>, JetError> {
    let mut out = BTreeMap::new();
    let mut cache: HashMap<(usize, MultiIndex), SuperPoly> = HashMap::new();
    for (a, comp) in plot.components().iter().enumerate() {
        for mi in multi_indices(jet.coords.len(), jet.order) {
            let value = match mi.split_last() {
                None => comp.clone(),
                Some((&mu, parent)) => cache[&(a, parent.to_vec())].coefficient_derivative(&jet.coords[mu]),
            };
            out.insert(jet.name(a, &mi), value.clone());
            cache.insert((a, mi), value);
        }
    }
    Ok(out)
}

/// Evaluates a jet expression on the prolongation of a plot.
pub fn evaluate_on_plot(jet: &JetSpace, e: &SuperPoly, plot: &PlotHom) -> Result<SuperPoly, JetError> {
    let values = prolong_into(jet, plot)?;
    let target = plot.ambient();
    let hom = Substitution::new(jet.ambient(), &values, &target)?;
    let e = e.embed(jet.ambient())?;
    Ok(hom.apply(&e)?)
}

/// `L(j^∞ φ)` as a top-degree form on spacetime with probe-dependent coefficients.
pub fn lagrangian_on_plot(spec: &LagrangianSpec, plot: &PlotHom) -> Result<Form, JetError> {
    let dens = evaluate_on_plot(&spec.jet, &spec.density, plot)?;
    let coords = spec.jet.coords.clone();
    let all: Vec<usize> = (0..coords.len()).collect();
    Ok(Form::monomial(&coords, dens, &all)?)
}

/// `∫_box L(j^∞ φ)`.
pub fn action_on_plot(
    spec: &LagrangianSpec,
    plot: &PlotHom,
    bounds: &[(Rational, Rational)],
) -> Result<SuperPoly, JetError> {
    Ok(lagrangian_on_plot(spec, plot)?.integrate_over_box(bounds)?)
}

/// A plot together with a velocity per field component.
#[derive(Debug, Clone)]
pub struct VariationPlot {
    pub plot: PlotHom,
    pub delta: Vec<SuperPoly>,
}

impl VariationPlot {
    pub fn new(plot: PlotHom, delta: Vec<SuperPoly>) -> Result<Self, JetError> {
        let amb = plot.ambient();
        let delta = delta
            .into_iter()
            .map(|d| d.embed(&amb))
            .collect::<Result<Vec<_>, _>>()?;
        let comps = plot.descriptor().components();
        if delta.len() != comps.len() {
            return Err(ProbeError::ComponentCount {
                expected: comps.len(),
                found: delta.len(),
            }
            .into());
        }
        for (c, d) in comps.iter().zip(&delta) {
            if !d.has_parity(c.parity) {
                return Err(JetError::VariationParity(c.name.clone()));
            }
        }
        Ok(VariationPlot { plot, delta })
    }

    /// The velocity as a plot of the same field space.
    pub fn velocity_plot(&self) -> Result<PlotHom, JetError> {
        Ok(PlotHom::new_unchecked(
            self.plot.probe(),
            self.plot.descriptor().clone(),
            self.delta.clone(),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirstVariation {
    /// `∫ Σ_a δφ^a · EL_a(φ)`.
    pub bulk: SuperPoly,
    /// Term discarded by integrating by parts; zero for compactly supported δφ.
    pub boundary: SuperPoly,
    /// `∫ Σ_{a,I} ∂_I δφ^a · ∂L/∂u^a_I(φ)`, the derivative of the action.
    pub total: SuperPoly,
}

pub fn first_variation(
    spec: &LagrangianSpec,
    vp: &VariationPlot,
    bounds: &[(Rational, Rational)],
) -> Result<FirstVariation, JetError> {
    let el = euler_lagrange(spec)?;
    let amb = vp.plot.ambient();
    let coords = spec.jet.coords.clone();
    let all: Vec<usize> = (0..coords.len()).collect();
    let mut bulk_density = SuperPoly::zero(&amb);
    for (a, (_, e)) in el.components.iter().enumerate() {
        let on = evaluate_on_plot(&el.jet, e, &vp.plot)?;
        bulk_density = &bulk_density + &(&vp.delta[a] * &on);
    }
    let n = spec.jet.order.max(spec.order());
    let jet = spec.jet.with_order(n)?;
    let l = jet.raise(&spec.density)?;
    let velocity = prolong_into(&jet, &vp.velocity_plot()?)?;
    let mut total_density = SuperPoly::zero(&amb);
    for a in 0..jet.fields.len() {
        for mi in multi_indices(coords.len(), n) {
            let p = jet.partial(&l, a, &mi)?;
            if p.is_zero() {
                continue;
            }
            let on = evaluate_on_plot(&jet, &p, &vp.plot)?;
            total_density = &total_density + &(&velocity[&jet.name(a, &mi)] * &on);
        }
    }
    let bulk = Form::monomial(&coords, bulk_density, &all)?.integrate_over_box(bounds)?;
    let total = Form::monomial(&coords, total_density, &all)?.integrate_over_box(bounds)?;
    Ok(FirstVariation {
        boundary: &total - &bulk,
        bulk,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Criticality {
    pub critical: bool,
    pub residuals: Vec<(String, SuperPoly)>,
}

/// A plot is critical iff every `EL_a` vanishes on its prolongation.
pub fn is_critical_plot(spec: &LagrangianSpec, plot: &PlotHom) -> Result<Criticality, JetError> {
    let el = euler_lagrange(spec)?;
    let amb = plot.ambient();
    let mut residuals = Vec::new();
    for (n, e) in &el.components {
        let r = evaluate_on_plot(&el.jet, e, plot)?;
        residuals.push((n.clone(), r));
    }
    let zero = SuperPoly::zero(&amb);
    let critical = residuals.iter().all(|(_, r)| r.equals(&zero, true));
    Ok(Criticality {
        critical,
        residuals,
    })
}

// ---------------------------------------------------------------------------
// finite-difference oracle

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    pub h: f64,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            h: 1e-2,
            step: 1e-4,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    pub lagrangian: String,
    pub phi: String,
    pub delta: String,
    pub exact: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
    pub passed: bool,
}

/// `S_h[φ] = Σ_i h · L(t_i + h/2, (φ_i + φ_{i+1})/2, (φ_{i+1} − φ_i)/h)` on `[0, 1]`.
fn discrete_action(
    density: &Scalar,
    names: (&str, &str, &str),
    phi: &dyn Fn(f64) -> f64,
    n: usize,
) -> Result<f64, JetError> {
    let h = 1.0 / n as f64;
    let mut acc = 0.0;
    let mut point = HashMap::new();
    let mut prev = phi(0.0);
    for i in 0..n {
        let t0 = i as f64 * h;
        let next = phi(t0 + h);
        point.insert(names.0.to_string(), t0 + h / 2.0);
        point.insert(names.1.to_string(), (prev + next) / 2.0);
        point.insert(names.2.to_string(), (next - prev) / h);
        acc += h * density.eval_f64(&point).map_err(AlgebraError::from)?;
        prev = next;
    }
    Ok(acc)
}

fn poly_f64(s: &Scalar, var: &str) -> impl Fn(f64) -> f64 {
    let coeffs: Vec<(i32, f64)> = s
        .coefficients_in(var)
        .expect("polynomial")
        .into_iter()
        .map(|(k, c)| (k as i32, rational_to_f64(&c.as_rational().expect("rational coefficient"))))
        .collect();
    move |t| coeffs.iter().map(|(k, c)| c * t.powi(*k)).sum()
}

/// Compares `first_variation` with a central difference of the discretized
/// action along `φ + τ δφ` on `[0, 1]`.
pub fn fd_check(
    spec: &LagrangianSpec,
    phi: &Scalar,
    delta: &Scalar,
    params: &OracleParams,
) -> Result<OracleSample, JetError> {
    let jet = &spec.jet;
    if jet.coords.len() != 1 || jet.fields.len() != 1 || jet.fields[0].parity != Parity::Even {
        return Err(JetError::OracleShape);
    }
    let t = jet.coords[0].clone();
    let u = jet.fields[0].name.clone();
    let ut = jet.name(0, &[0]);
    let descriptor = spec.descriptor.clone();
    let probe = crate::probes::ProbeSpace::point();
    let amb = descriptor.plot_ambient(&probe)?;
    let plot = PlotHom::new(probe, descriptor, vec![SuperPoly::scalar(&amb, phi.clone())])?;
    let vp = VariationPlot::new(plot, vec![SuperPoly::scalar(&amb, delta.clone())])?;
    let unit = [(Rational::from_integer(0.into()), Rational::from_integer(1.into()))];
    let fv = first_variation(spec, &vp, &unit)?;
    let exact = fv
        .total
        .body()
        .eval_f64(&HashMap::new())
        .map_err(AlgebraError::from)?;
    let density = spec.density.body();
    let n = (1.0 / params.h).round() as usize;
    let (pf, df) = (poly_f64(phi, &t), poly_f64(delta, &t));
    let eps = params.step;
    let plus = discrete_action(&density, (&t, &u, &ut), &|x| pf(x) + eps * df(x), n)?;
    let minus = discrete_action(&density, (&t, &u, &ut), &|x| pf(x) - eps * df(x), n)?;
    let fd = (plus - minus) / (2.0 * eps);
    let rel = (fd - exact).abs() / exact.abs().max(f64::MIN_POSITIVE);
    Ok(OracleSample {
        lagrangian: spec.density.to_string(),
        phi: phi.to_string(),
        delta: delta.to_string(),
        exact,
        finite_difference: fd,
        relative_error: rel,
        passed: rel <= params.tolerance,
    })
}

/// Smallest `|δS|` the relative comparison is run on; smaller draws are
/// resampled because the relative error is then dominated by round-off.
pub const ORACLE_MAGNITUDE_FLOOR: f64 = 1e-3;

fn random_path_pair(rng: &mut SampleRng, t: &str) -> (Scalar, Scalar) {
    let tv = Scalar::sym(t);
    let phi = random_polynomial(rng, &[t.to_string()], 3, 3);
    let bump = tv.mul(&Scalar::one().sub(&tv));
    let delta = bump.mul(&random_polynomial(rng, &[t.to_string()], 1, 2).add(&Scalar::from_rational(nonzero_rational(rng))));
    (phi, delta)
}

/// Runs the oracle on `samples` random path/variation pairs for a fixed
/// Lagrangian; sample `i` uses stream `i` of `seed`.
pub fn fd_suite(
    spec: &LagrangianSpec,
    samples: usize,
    seed: u64,
    params: &OracleParams,
) -> Result<Vec<OracleSample>, JetError> {
    let t = spec.jet.coords.first().cloned().ok_or(JetError::OracleShape)?;
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            loop {
                let (phi, delta) = random_path_pair(&mut rng, &t);
                let s = fd_check(spec, &phi, &delta, params)?;
                if s.exact.abs() >= ORACLE_MAGNITUDE_FLOOR {
                    return Ok(s);
                }
            }
        })
        .collect()
}

/// Random first-order polynomial Lagrangian in `(t, u, u_t)` with a kinetic
/// term so that the variation is rarely degenerate.
pub fn random_first_order_lagrangian(rng: &mut SampleRng) -> Result<LagrangianSpec, JetError> {
    let descriptor = FieldSpaceDescriptor::new(
        vec!["t".into()],
        vec![FieldComponent {
            name: "u".into(),
            parity: Parity::Even,
        }],
        vec![],
    )?;
    let jet = JetSpace::from_descriptor(&descriptor, 1)?;
    let vars = ["t".to_string(), "u".to_string(), "u_t".to_string()];
    let mut dens = random_polynomial(rng, &vars, 3, 4);
    let kinetic = Scalar::sym("u_t").pow(2).scale(&nonzero_rational(rng).abs());
    dens = dens.add(&kinetic);
    if rng.gen_bool(0.5) {
        dens = dens.add(&Scalar::sym("u").pow(2).scale(&nonzero_rational(rng)));
    }
    LagrangianSpec::new(descriptor, jet.clone(), SuperPoly::scalar(jet.ambient(), dens))
}

/// Random even jet expression of order `<= 2` in one even field `u` and one
/// odd field `psi` over `t`, for the total-derivative property.
pub fn random_jet_expression(rng: &mut SampleRng, jet: &JetSpace) -> SuperPoly {
    let amb = jet.ambient();
    let even: Vec<String> = ["t", "u", "u_t", "u_tt"].iter().map(|s| s.to_string()).collect();
    let mut out = SuperPoly::scalar(amb, random_polynomial(rng, &even, 3, 3));
    if rng.gen_bool(0.3) {
        let f = if rng.gen_bool(0.5) {
            Scalar::sin(Scalar::sym("u"))
        } else {
            Scalar::exp(Scalar::sym("u_t"))
        };
        out = &out + &SuperPoly::scalar(amb, f.mul(&random_polynomial(rng, &even, 1, 2)));
    }
    let odd: Vec<&str> = ["psi", "psi_t", "psi_tt"]
        .into_iter()
        .filter(|n| amb.generator(n).is_some())
        .collect();
    if odd.len() >= 2 && rng.gen_bool(0.6) {
        let i = rng.gen_range(0..odd.len());
        let mut j = rng.gen_range(0..odd.len());
        while j == i {
            j = rng.gen_range(0..odd.len());
        }
        let a = SuperPoly::gen(amb, odd[i]).expect("odd jet coordinate");
        let b = SuperPoly::gen(amb, odd[j]).expect("odd jet coordinate");
        let c = random_polynomial(rng, &even, 2, 2);
        out = &out + &(&a * &b).scale(&c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::ProbeSpace;
    use crate::scalar::rat;

    fn even(name: &str) -> FieldComponent {
        FieldComponent {
            name: name.into(),
            parity: Parity::Even,
        }
    }

    fn odd(name: &str) -> FieldComponent {
        FieldComponent {
            name: name.into(),
            parity: Parity::Odd,
        }
    }

    fn spec(fields: Vec<FieldComponent>, build: impl Fn(&JetSpace) -> SuperPoly) -> LagrangianSpec {
        let d = FieldSpaceDescriptor::new(vec!["t".into()], fields, vec![]).unwrap();
        let jet = JetSpace::from_descriptor(&d, 1).unwrap();
        let l = build(&jet);
        LagrangianSpec::new(d, jet, l).unwrap()
    }

    fn harmonic() -> LagrangianSpec {
        spec(vec![even("u")], |j| {
            let ut = j.var("u", &["t"]).unwrap();
            let u = j.var("u", &[]).unwrap();
            (&(&ut * &ut) - &(&u * &u)).scale(&Scalar::from_rational(rat(1, 2)))
        })
    }

    fn fermion() -> LagrangianSpec {
        spec(vec![odd("psi")], |j| &j.var("psi", &[]).unwrap() * &j.var("psi", &["t"]).unwrap())
    }

    #[test]
    fn names_and_indices() {
        let j = JetSpace::new(vec!["x".into(), "y".into()], vec![even("u")], 2).unwrap();
        assert_eq!(j.name(0, &[1, 0]), "u_xy");
        assert!(j.lookup("u_yy").is_some());
        assert_eq!(multi_indices(2, 2).len(), 6);
        let j = JetSpace::new(vec!["x1".into(), "x2".into()], vec![even("u")], 1).unwrap();
        assert_eq!(j.name(0, &[1]), "u_x2");
    }

    #[test]
    fn total_derivatives() {
        let s = harmonic();
        let j = s.jet().with_order(2).unwrap();
        let u = j.var("u", &[]).unwrap();
        assert_eq!(j.total_derivative(&u, 0).unwrap().to_string(), "u_t");
        let ut = j.var("u", &["t"]).unwrap();
        let half = (&ut * &ut).scale(&Scalar::from_rational(rat(1, 2)));
        assert_eq!(j.total_derivative(&half, 0).unwrap().to_string(), "u_t*u_tt");
        let f = fermion();
        let j = f.jet().with_order(2).unwrap();
        let l = j.raise(f.density()).unwrap();
        assert_eq!(j.total_derivative(&l, 0).unwrap().to_string(), "psi*psi_tt");
        let top = j.var("psi", &["t", "t"]).unwrap();
        assert!(matches!(
            j.total_derivative(&top, 0),
            Err(JetError::BoundExceeded { .. })
        ));
    }

    #[test]
    fn euler_lagrange_examples() {
        assert_eq!(euler_lagrange(&harmonic()).unwrap().to_string(), "EL_u = -u_tt - u");
        assert_eq!(euler_lagrange(&fermion()).unwrap().to_string(), "EL_psi = 2*psi_t");
        let total = spec(vec![even("u")], |j| {
            let u = j.var("u", &[]).unwrap();
            // D_t(u^3 t) = 3 u^2 u_t t + u^3
            let f = (&(&u * &u) * &u).scale(&Scalar::sym("t"));
            j.total_derivative(&f, 0).unwrap()
        });
        assert!(euler_lagrange(&total).unwrap().is_zero());
    }

    #[test]
    fn prolongation() {
        let d = FieldSpaceDescriptor::new(vec!["t".into()], vec![even("u")], vec![]).unwrap();
        let p = ProbeSpace::point();
        let amb = d.plot_ambient(&p).unwrap();
        let plot = PlotHom::new(p, d.clone(), vec![SuperPoly::scalar(&amb, Scalar::sym("t").pow(2))]).unwrap();
        let pr = prolong(&plot, 2).unwrap();
        let shown: Vec<String> = pr.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        assert_eq!(shown, ["u: t^2", "u_t: 2*t", "u_tt: 2"]);
        let pr1 = prolong(&plot, 1).unwrap();
        assert!(pr1.iter().all(|(k, v)| pr[k] == *v));
    }

    #[test]
    fn actions_and_criticality() {
        let free = spec(vec![even("u")], |j| {
            let ut = j.var("u", &["t"]).unwrap();
            (&ut * &ut).scale(&Scalar::from_rational(rat(1, 2)))
        });
        let unit = [(rat(0, 1), rat(1, 1))];
        let p = ProbeSpace::cartesian(2);
        let d = free.descriptor().clone();
        let amb = d.plot_ambient(&p).unwrap();
        let line = Scalar::sym("s1").add(&Scalar::sym("s2").mul(&Scalar::sym("t")));
        let plot = PlotHom::new(p, d.clone(), vec![SuperPoly::scalar(&amb, line)]).unwrap();
        assert!(is_critical_plot(&free, &plot).unwrap().critical);
        let pt = ProbeSpace::point();
        let amb0 = d.plot_ambient(&pt).unwrap();
        let sq = PlotHom::new(pt, d.clone(), vec![SuperPoly::scalar(&amb0, Scalar::sym("t").pow(2))]).unwrap();
        let c = is_critical_plot(&free, &sq).unwrap();
        assert!(!c.critical);
        assert_eq!(c.residuals[0].1.to_string(), "-2");
        let lin = PlotHom::new(pt, d, vec![SuperPoly::scalar(&amb0, Scalar::sym("t"))]).unwrap();
        assert_eq!(action_on_plot(&free, &lin, &unit).unwrap().to_string(), "1/2");

        let f = fermion();
        let q2 = ProbeSpace::super_cartesian(0, 2);
        let fd = f.descriptor().clone();
        let fa = fd.plot_ambient(&q2).unwrap();
        let t = Scalar::sym("t");
        let psi = &SuperPoly::gen(&fa, "th1").unwrap().scale(&t) + &SuperPoly::gen(&fa, "th2").unwrap().scale(&t.pow(2));
        let plot = PlotHom::new(q2, fd.clone(), vec![psi]).unwrap();
        assert_eq!(action_on_plot(&f, &plot, &unit).unwrap().to_string(), "1/3*th1*th2");
        let constant = PlotHom::new(q2, fd, vec![SuperPoly::gen(&fa, "th1").unwrap().scale(&Scalar::sym("c"))]).unwrap();
        assert!(is_critical_plot(&f, &constant).unwrap().critical);
    }

    #[test]
    fn first_variation_cases() {
        let h = harmonic();
        let d = h.descriptor().clone();
        let p = ProbeSpace::point();
        let amb = d.plot_ambient(&p).unwrap();
        let t = Scalar::sym("t");
        let bump = t.mul(&Scalar::one().sub(&t));
        let plot = PlotHom::new(p, d, vec![SuperPoly::scalar(&amb, bump.clone())]).unwrap();
        let unit = [(rat(0, 1), rat(1, 1))];
        let vp = VariationPlot::new(plot.clone(), vec![SuperPoly::scalar(&amb, bump.clone())]).unwrap();
        let fv = first_variation(&h, &vp, &unit).unwrap();
        assert!(fv.boundary.is_zero());
        // ∫ (2 - t + t^2) t(1-t) dt = 3/10
        assert_eq!(fv.bulk.to_string(), "3/10");
        let zero = VariationPlot::new(plot, vec![SuperPoly::zero(&amb)]).unwrap();
        assert!(first_variation(&h, &zero, &unit).unwrap().total.is_zero());
        let s = fd_check(&h, &bump, &bump, &OracleParams::default()).unwrap();
        assert!(s.passed, "{s:?}");
    }

    #[test]
    fn oracle_on_random_lagrangians() {
        let mut rng = sample_rng(42, 0);
        for i in 0..5 {
            let spec = random_first_order_lagrangian(&mut rng).unwrap();
            let samples = fd_suite(&spec, 2, i, &OracleParams::default()).unwrap();
            assert!(samples.iter().all(|s| s.passed), "{samples:?}");
        }
    }

    #[test]
    fn total_derivatives_are_trivial() {
        let d = FieldSpaceDescriptor::new(vec!["t".into()], vec![even("u"), odd("psi")], vec![]).unwrap();
        let jet2 = JetSpace::from_descriptor(&d, 2).unwrap();
        let jet3 = JetSpace::from_descriptor(&d, 3).unwrap();
        let mut rng = sample_rng(9, 0);
        for _ in 0..20 {
            let f = random_jet_expression(&mut rng, &jet2);
            let dl = jet3.total_derivative(&jet3.raise(&f).unwrap(), 0).unwrap();
            let spec = LagrangianSpec::new(d.clone(), jet3.clone(), dl).unwrap();
            assert!(euler_lagrange(&spec).unwrap().is_zero(), "F = {f}");
        }
    }
}
