//! Odd-parametrized plots of fermionic field spaces.
//!
//! Over `ℝ^{k|q}` the most general plot of a component is a sum over odd
//! monomials `θ_J` of the right parity, each with its own slot function
//! `f_J(s, x)`. Substituting this template into a Lagrangian density shows
//! at which `q` the density starts to see the fermions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::forms::{Convention, Form};
use crate::jet::{euler_lagrange, evaluate_on_plot, JetError, JetSpace, LagrangianSpec};
use crate::probes::{FieldComponent, FieldSpaceDescriptor, PlotHom, ProbeError, ProbeSpace};
use crate::random::{random_polynomial, sample_rng};
use crate::scalar::{rat, Scalar};
use crate::superalgebra::{Ambient, Basis, Parity, Substitution, SuperPoly};

/// Largest odd order the scan accepts.
pub const MAX_ODD_ORDER: usize = 8;

/// Witness attempts per order before giving up.
const WITNESS_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FermionError {
    #[error("odd order {0} exceeds the supported maximum {MAX_ODD_ORDER}")]
    OrderTooLarge(usize),
    #[error("templates are built over R(k|q) probes without infinitesimal directions")]
    ThickenedProbe,
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

impl From<crate::superalgebra::AlgebraError> for FermionError {
    fn from(e: crate::superalgebra::AlgebraError) -> Self {
        FermionError::Jet(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub component: usize,
    pub monomial: Vec<u16>,
}

/// The general plot of a descriptor by `ℝ^{k|q}`.
#[derive(Debug, Clone)]
pub struct OddPlotBasis {
    pub probe: ProbeSpace,
    pub slots: Vec<Slot>,
    pub template: PlotHom,
}

impl fmt::Display for OddPlotBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.template)
    }
}

fn odd_subsets(q: usize, parity: Parity) -> Vec<Vec<u16>> {
    let mut out: Vec<Vec<u16>> = (0u32..(1 << q))
        .map(|mask| (0..q as u16).filter(|i| mask & (1 << i) != 0).collect::<Vec<u16>>())
        .filter(|s| Parity::of_degree(s.len()) == parity)
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn slot_name(field: &str, several: bool, monomial: &[u16]) -> String {
    let idx: String = monomial.iter().map(|i| (i + 1).to_string()).collect();
    if several {
        format!("{field}_f{idx}")
    } else {
        format!("f{idx}")
    }
}

pub fn enumerate_plot_form(
    descriptor: &Arc<FieldSpaceDescriptor>,
    probe: ProbeSpace,
) -> Result<OddPlotBasis, FermionError> {
    if probe.m > 0 {
        return Err(FermionError::ThickenedProbe);
    }
    let amb = descriptor.plot_ambient(&probe)?;
    let mut args: Vec<Scalar> = probe.even_names().into_iter().map(Scalar::sym).collect();
    args.extend(descriptor.spacetime().iter().cloned().map(Scalar::sym));
    let several = descriptor.components().len() > 1;
    let mut slots = Vec::new();
    let mut comps = Vec::new();
    for (a, c) in descriptor.components().iter().enumerate() {
        let mut value = SuperPoly::zero(&amb);
        for mono in odd_subsets(probe.q, c.parity) {
            let name = slot_name(&c.name, several, &mono);
            let f = Scalar::apply(name.clone(), args.clone());
            value = &value + &SuperPoly::monomial(&amb, Basis::new(mono.clone(), vec![]), f);
            slots.push(Slot {
                name,
                component: a,
                monomial: mono,
            });
        }
        comps.push(value);
    }
    let template = PlotHom::new_unchecked(probe, descriptor.clone(), comps)?;
    Ok(OddPlotBasis {
        probe,
        slots,
        template,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    IdenticallyZero,
    /// Every θ-coefficient is a total derivative of the slot functions.
    Exact,
    Nontrivial,
    /// Not a total derivative, but no witness was found.
    Undecided,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::IdenticallyZero => "zero",
            Verdict::Exact => "exact",
            Verdict::Nontrivial => "nontrivial",
            Verdict::Undecided => "undecided",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Slot instantiation on which the density integrates to a nonzero value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub functions: Vec<(String, Scalar)>,
    pub integral: SuperPoly,
    pub convention: Convention,
}

#[derive(Debug, Clone)]
pub struct OrderEvaluation {
    pub q: usize,
    pub template: Form,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

/// Substitutes the general `ℝ^{0|q}` plot into the density and classifies
/// the result.
pub fn evaluate_lagrangian_at_order(
    spec: &LagrangianSpec,
    q: usize,
    seed: u64,
) -> Result<OrderEvaluation, FermionError> {
    if q > MAX_ODD_ORDER {
        return Err(FermionError::OrderTooLarge(q));
    }
    let probe = ProbeSpace::super_cartesian(0, q);
    let basis = enumerate_plot_form(spec.descriptor(), probe)?;
    let density = evaluate_on_plot(spec.jet(), spec.density(), &basis.template)?;
    let coords = spec.jet().coords().to_vec();
    let all: Vec<usize> = (0..coords.len()).collect();
    let template = Form::monomial(&coords, density, &all).map_err(JetError::from)?;
    if template.is_zero() {
        return Ok(OrderEvaluation {
            q,
            template,
            verdict: Verdict::IdenticallyZero,
            witness: None,
        });
    }
    if is_total_derivative(spec, &basis)? {
        return Ok(OrderEvaluation {
            q,
            template,
            verdict: Verdict::Exact,
            witness: None,
        });
    }
    let witness = find_witness(&template, &basis, seed ^ q as u64);
    let verdict = if witness.is_some() {
        Verdict::Nontrivial
    } else {
        Verdict::Undecided
    };
    Ok(OrderEvaluation {
        q,
        template,
        verdict,
        witness,
    })
}

/// Rewrites the density with the slot functions as even jet fields and
/// tests every θ-coefficient with the Euler–Lagrange operator.
fn is_total_derivative(spec: &LagrangianSpec, basis: &OddPlotBasis) -> Result<bool, FermionError> {
    let jet = spec.jet();
    let n = jet.order().max(spec.order());
    let slot_fields: Vec<FieldComponent> = basis
        .slots
        .iter()
        .map(|s| FieldComponent {
            name: s.name.clone(),
            parity: Parity::Even,
        })
        .collect();
    let slot_jet = JetSpace::new(jet.coords().to_vec(), slot_fields.clone(), n)?;
    let amb = Ambient::new(
        slot_jet.ambient().even().to_vec(),
        basis.probe.odd_names(),
        vec![],
        0,
    )?;
    let big = jet.with_order(n)?;
    let mut assignment = BTreeMap::new();
    for (a, _) in big.fields().iter().enumerate() {
        for mi in crate::jet::multi_indices(big.coords().len(), n) {
            let mut value = SuperPoly::zero(&amb);
            for (si, s) in basis.slots.iter().enumerate() {
                if s.component != a {
                    continue;
                }
                let f = Scalar::sym(slot_jet.name(si, &mi));
                value = &value + &SuperPoly::monomial(&amb, Basis::new(s.monomial.clone(), vec![]), f);
            }
            assignment.insert(big.name(a, &mi), value);
        }
    }
    let hom = Substitution::new(big.ambient(), &assignment, &amb)?;
    let rewritten = hom.apply(&big.raise(spec.density())?)?;
    let descriptor = FieldSpaceDescriptor::new(jet.coords().to_vec(), slot_fields, vec![])?;
    for (_, c) in rewritten.terms() {
        let l = SuperPoly::scalar(slot_jet.ambient(), c.clone());
        let s = LagrangianSpec::new(descriptor.clone(), slot_jet.clone(), l)?;
        if !euler_lagrange(&s)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Searches bump polynomials `Π x²(1−x)² · p(x)` for an instantiation with
/// nonzero integral over the unit box.
fn find_witness(template: &Form, basis: &OddPlotBasis, seed: u64) -> Option<Witness> {
    let coords = template.coords().to_vec();
    let bump = coords.iter().fold(Scalar::one(), |acc, x| {
        let x = Scalar::sym(x.clone());
        acc.mul(&x.pow(2)).mul(&Scalar::one().sub(&x).pow(2))
    });
    let params: Vec<String> = basis
        .probe
        .even_names()
        .into_iter()
        .chain(coords.iter().cloned())
        .collect();
    let bounds: Vec<_> = coords.iter().map(|_| (rat(0, 1), rat(1, 1))).collect();
    let convention = Convention::CompactSupport(bounds.clone());
    for attempt in 0..WITNESS_ATTEMPTS {
        let mut rng = sample_rng(seed, attempt);
        let functions: Vec<(String, Scalar)> = basis
            .slots
            .iter()
            .map(|s| {
                let mut p = random_polynomial(&mut rng, &coords, 2, 3);
                if p.is_zero() || rng.gen_bool(0.2) {
                    p = p.add(&Scalar::one());
                }
                (s.name.clone(), bump.mul(&p))
            })
            .collect();
        let inst = template.map_coefficients(|c| {
            c.map_coefficients(|s| {
                functions
                    .iter()
                    .fold(s.clone(), |acc, (n, body)| acc.subst_function(n, &params, body))
            })
        });
        let Ok(ex) = inst.is_exact_polynomial(&convention) else {
            continue;
        };
        if !ex.exact {
            return Some(Witness {
                functions,
                integral: ex.integral.unwrap_or_else(|| SuperPoly::zero(template.ambient())),
                convention,
            });
        }
    }
    None
}

/// Scans `q = 0..=q_max`, stopping at the first nontrivial order.
pub fn scan_odd_orders(
    spec: &LagrangianSpec,
    q_max: usize,
    seed: u64,
) -> Result<Vec<OrderEvaluation>, FermionError> {
    if q_max > MAX_ODD_ORDER {
        return Err(FermionError::OrderTooLarge(q_max));
    }
    let mut out = Vec::new();
    for q in 0..=q_max {
        let ev = evaluate_lagrangian_at_order(spec, q, seed)?;
        let done = ev.verdict == Verdict::Nontrivial;
        out.push(ev);
        if done {
            break;
        }
    }
    Ok(out)
}

/// Smallest odd order with a nontrivial verdict.
pub fn minimal_odd_order(spec: &LagrangianSpec, q_max: usize, seed: u64) -> Result<Option<usize>, FermionError> {
    Ok(scan_odd_orders(spec, q_max, seed)?
        .iter()
        .find(|e| e.verdict == Verdict::Nontrivial)
        .map(|e| e.q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fermion_spec() -> LagrangianSpec {
        let d = FieldSpaceDescriptor::new(
            vec!["t".into()],
            vec![FieldComponent {
                name: "psi".into(),
                parity: Parity::Odd,
            }],
            vec![],
        )
        .unwrap();
        let jet = JetSpace::from_descriptor(&d, 1).unwrap();
        let l = &jet.var("psi", &[]).unwrap() * &jet.var("psi", &["t"]).unwrap();
        LagrangianSpec::new(d, jet, l).unwrap()
    }

    #[test]
    fn templates() {
        let s = fermion_spec();
        let d = s.descriptor();
        let show = |q| enumerate_plot_form(d, ProbeSpace::super_cartesian(0, q)).unwrap().to_string();
        assert_eq!(show(0), "psi = 0");
        assert_eq!(show(1), "psi = f1(t)*th1");
        assert_eq!(show(2), "psi = f1(t)*th1 + f2(t)*th2");
        assert_eq!(show(3), "psi = f1(t)*th1 + f2(t)*th2 + f3(t)*th3 + f123(t)*th1*th2*th3");
    }

    #[test]
    fn fermionic_particle_sequence() {
        let s = fermion_spec();
        let evs = scan_odd_orders(&s, 4, 0).unwrap();
        let verdicts: Vec<Verdict> = evs.iter().map(|e| e.verdict).collect();
        assert_eq!(verdicts, [Verdict::IdenticallyZero, Verdict::IdenticallyZero, Verdict::Nontrivial]);
        assert_eq!(
            evs[2].template.to_string(),
            "(f1(t)*D[f2(t), t] - D[f1(t), t]*f2(t))*th1*th2 dt"
        );
        assert!(evs[2].witness.is_some());
        assert_eq!(minimal_odd_order(&s, 4, 0).unwrap(), Some(2));
    }

    #[test]
    fn total_derivative_density_is_exact() {
        let d = FieldSpaceDescriptor::new(
            vec!["t".into()],
            vec![FieldComponent {
                name: "u".into(),
                parity: Parity::Even,
            }],
            vec![],
        )
        .unwrap();
        let jet = JetSpace::from_descriptor(&d, 1).unwrap();
        // 2 ∂_t(u²) = 4 u u_t
        let l = (&jet.var("u", &[]).unwrap() * &jet.var("u", &["t"]).unwrap()).scale(&Scalar::from(4));
        let s = LagrangianSpec::new(d, jet, l).unwrap();
        let ev = evaluate_lagrangian_at_order(&s, 0, 0).unwrap();
        assert_eq!(ev.verdict, Verdict::Exact);
    }

    #[test]
    fn mixed_descriptor_points() {
        let d = FieldSpaceDescriptor::new(
            vec!["t".into()],
            vec![
                FieldComponent { name: "x".into(), parity: Parity::Even },
                FieldComponent { name: "psi".into(), parity: Parity::Odd },
            ],
            vec![],
        )
        .unwrap();
        let b = enumerate_plot_form(&d, ProbeSpace::point()).unwrap();
        assert_eq!(b.to_string(), "x = x_f(t); psi = 0");
    }
}
