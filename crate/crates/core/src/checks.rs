//! Randomized verification suites shared by the command line and the
//! acceptance tests. Sample `i` of a suite always draws from stream `i` of the
//! seed, so results do not depend on the worker count.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::infinitesimal::{taylor_via_disk, TangentVector};
use crate::jet::{euler_lagrange, fd_suite, random_first_order_lagrangian, random_jet_expression, JetSpace, LagrangianSpec, OracleParams};
use crate::probes::{
    check_functoriality, glue_plots, random_plot, random_two_box_cover, restrict, FieldComponent, FieldSpaceDescriptor,
    GluingError, ProbeSpace,
};
use crate::random::{random_element, random_nilpotent, random_polynomial, sample_rng, small_rational, SampleRng};
use crate::scalar::{rat, Scalar};
use crate::simplicial::{random_central, random_gl, random_matrix_form, random_so2};
use crate::superalgebra::{Ambient, Parity, SuperPoly};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub samples: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn run(name: &str, samples: usize, seed: u64, f: impl Fn(usize, &mut SampleRng) -> Option<String> + Sync) -> SuiteReport {
    let failures: Vec<String> = (0..samples)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            f(i, &mut rng).map(|m| format!("sample {i}: {m}"))
        })
        .collect();
    SuiteReport {
        name: name.into(),
        samples,
        failures,
    }
}

/// Ambient used for the algebra laws: two even, three odd and two Weil
/// generators with `r = 2`.
pub fn law_ambient() -> Arc<Ambient> {
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    Ambient::new(names(&["x", "y"]), names(&["th1", "th2", "th3"]), names(&["e1", "e2"]), 2).expect("valid ambient")
}

fn parity(rng: &mut SampleRng) -> Parity {
    if rng.gen_bool(0.5) {
        Parity::Even
    } else {
        Parity::Odd
    }
}

/// Graded commutativity, associativity, the odd Leibniz rule and the
/// nilpotency relations on random elements.
pub fn algebra_laws(samples: usize, seed: u64) -> Vec<SuiteReport> {
    let amb = law_ambient();
    let commutativity = run("graded-commutativity", samples, seed, |_, rng| {
        let (pa, pb) = (parity(rng), parity(rng));
        let a = random_element(rng, &amb, Some(pa), 3);
        let b = random_element(rng, &amb, Some(pb), 3);
        let ab = &a * &b;
        let ba = &b * &a;
        let expected = if pa == Parity::Odd && pb == Parity::Odd { ba.neg() } else { ba };
        (ab != expected).then(|| format!("a = {a}, b = {b}: ab = {ab}"))
    });
    let associativity = run("associativity", samples, seed.wrapping_add(1), |_, rng| {
        let a = random_element(rng, &amb, None, 3);
        let b = random_element(rng, &amb, None, 3);
        let c = random_element(rng, &amb, None, 3);
        let l = &(&a * &b) * &c;
        let r = &a * &(&b * &c);
        (l != r).then(|| format!("a = {a}, b = {b}, c = {c}"))
    });
    let leibniz = run("odd-leibniz", samples, seed.wrapping_add(2), |_, rng| {
        let pa = parity(rng);
        let a = random_element(rng, &amb, Some(pa), 3);
        let b = random_element(rng, &amb, None, 3);
        let th = amb.odd()[rng.gen_range(0..amb.odd().len())].clone();
        let d = |p: &SuperPoly| p.partial_derivative(&th).expect("odd generator");
        let lhs = d(&(&a * &b));
        let second = &a * &d(&b);
        let rhs = &(&d(&a) * &b) + &(if pa == Parity::Odd { second.neg() } else { second });
        (lhs != rhs).then(|| format!("∂_{th} of a = {a}, b = {b}: {lhs} vs {rhs}"))
    });
    let nilpotency = run("nilpotency", samples, seed.wrapping_add(3), |_, rng| {
        let xi = random_element(rng, &amb, Some(Parity::Odd), 4);
        if !(&xi * &xi).is_zero() {
            return Some(format!("odd {xi} squares to {}", &xi * &xi));
        }
        let r = amb.order();
        let e = SuperPoly::gen(&amb, &amb.weil()[rng.gen_range(0..amb.weil().len())]).expect("weil generator");
        if !e.pow(r + 1).is_zero() || e.pow(r).is_zero() {
            return Some(format!("{e} has the wrong nilpotency order"));
        }
        let n = random_nilpotent(rng, &amb, Parity::Even, 4);
        let top = n.pow(amb.nilpotency_bound());
        (!top.is_zero()).then(|| format!("{n} raised to {} is {top}", amb.nilpotency_bound()))
    });
    vec![commutativity, associativity, leibniz, nilpotency]
}

/// Descriptors over `ℝ¹_t` used by the functoriality suite.
pub fn functor_descriptors() -> Vec<(&'static str, Arc<FieldSpaceDescriptor>)> {
    let comp = |name: &str, parity| FieldComponent {
        name: name.into(),
        parity,
    };
    let make = |c: Vec<FieldComponent>| FieldSpaceDescriptor::new(vec!["t".into()], c, vec![]).expect("descriptor");
    vec![
        ("boson", make(vec![comp("u", Parity::Even)])),
        ("fermion", make(vec![comp("psi", Parity::Odd)])),
        ("mixed", make(vec![comp("u", Parity::Even), comp("psi", Parity::Odd)])),
    ]
}

pub fn functor_suite(descriptor: &Arc<FieldSpaceDescriptor>, name: &str, samples: usize, seed: u64) -> SuiteReport {
    let r = check_functoriality(descriptor, samples, seed);
    SuiteReport {
        name: format!("functor-{name}"),
        samples,
        failures: r
            .failures
            .iter()
            .map(|f| format!("sample {}: {} law: {}", f.sample, f.law, f.detail))
            .collect(),
    }
}

/// Leibniz rule of random tangent vectors on `ℝ²`.
pub fn dual_number_suite(samples: usize, seed: u64) -> SuiteReport {
    let vars = vec!["x".to_string(), "y".to_string()];
    run("dual-leibniz", samples, seed, |_, rng| {
        let tv = TangentVector {
            vars: vars.clone(),
            point: (0..2).map(|_| Scalar::from_rational(small_rational(rng))).collect(),
            velocity: (0..2).map(|_| Scalar::from_rational(small_rational(rng))).collect(),
        };
        let f1 = random_polynomial(rng, &vars, 3, 3);
        let f2 = random_polynomial(rng, &vars, 3, 3);
        tv.check_leibniz(&f1, &f2).err().map(|e| e.to_string())
    })
}

/// Taylor expansion through `D¹_r` against `Σ f⁽ʲ⁾(p)/j! (x − p)ʲ`, for
/// polynomials of degree ≤ 6 and `r ≤ 6`; exact reconstruction once `r` reaches
/// the degree.
pub fn taylor_suite(samples: usize, seed: u64) -> SuiteReport {
    let x = "x".to_string();
    run("taylor", samples, seed, |_, rng| {
        let f = random_polynomial(rng, std::slice::from_ref(&x), 6, 4);
        let p = small_rational(rng);
        let r = rng.gen_range(0..=6u32);
        let t = match taylor_via_disk(&f, &x, &p, r) {
            Ok(t) => t,
            Err(e) => return Some(e.to_string()),
        };
        let at: HashMap<String, Scalar> = [(x.clone(), Scalar::from_rational(p.clone()))].into();
        let shift = Scalar::sym(x.clone()).sub(&Scalar::from_rational(p.clone()));
        let mut factorial = rat(1, 1);
        let mut oracle = Scalar::zero();
        for j in 0..=r {
            if j > 0 {
                factorial *= rat(j as i64, 1);
            }
            let c = f.nth_derivative(&x, j).subst(&at).scale(&(rat(1, 1) / &factorial));
            oracle = oracle.add(&c.mul(&shift.pow(j as i32)));
        }
        if t.to_scalar() != oracle {
            return Some(format!("f = {f}, p = {p}, r = {r}: {t} vs {oracle}"));
        }
        let degree = f.coefficients_in(&x).and_then(|c| c.keys().max().copied()).unwrap_or(0);
        (r >= degree && t.to_scalar() != f).then(|| format!("f = {f} not reconstructed at order {r}"))
    })
}

/// `(A^{g₁})^{g₂} = A^{g₁g₂}` on random pairs from `SO(2)` and `GL(2, ℚ)`,
/// and invariance under central constants.
pub fn gauge_suite(samples: usize, seed: u64) -> Vec<SuiteReport> {
    let coords = vec!["x".to_string(), "y".to_string()];
    let composition = run("gauge-composition", samples, seed, |i, rng| {
        let a = random_matrix_form(rng, 2, &coords);
        let (g1, g2) = if i % 2 == 0 {
            (random_so2(rng), random_so2(rng))
        } else {
            (random_gl(rng, 2), random_gl(rng, 2))
        };
        let lhs = a.gauge_constant(&g1).and_then(|b| b.gauge_constant(&g2));
        let rhs = a.gauge_constant(&g1.mul(&g2));
        match (lhs, rhs) {
            (Ok(l), Ok(r)) if l == r => None,
            (Ok(l), Ok(r)) => Some(format!("A = {a}, g1 = {g1}, g2 = {g2}: {l} vs {r}")),
            (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
        }
    });
    let abelian = run("gauge-abelian", samples, seed.wrapping_add(1), |_, rng| {
        let n = rng.gen_range(1..=3);
        let a = random_matrix_form(rng, n, &coords);
        let g = random_central(rng, n);
        match a.gauge_constant(&g) {
            Ok(b) if b == a => None,
            Ok(b) => Some(format!("A = {a} moved to {b} by {g}")),
            Err(e) => Some(e.to_string()),
        }
    });
    vec![composition, abelian]
}

/// Restriction to a random two-box cover glues back to the original plot, and
/// a disagreement injected on the second box is reported against pieces 0, 1.
pub fn gluing_suite(samples: usize, seed: u64) -> SuiteReport {
    let descriptors: Vec<_> = functor_descriptors().into_iter().map(|(_, d)| d).collect();
    gluing_suite_for(&descriptors, samples, seed)
}

/// The gluing suite cycling through the given field spaces; constraints are
/// not imposed on the random plots.
pub fn gluing_suite_for(descriptors: &[Arc<FieldSpaceDescriptor>], samples: usize, seed: u64) -> SuiteReport {
    run("gluing", samples, seed, |i, rng| {
        let desc = &descriptors[i % descriptors.len()];
        let k = rng.gen_range(1..=2);
        let q = rng.gen_range(0..=2);
        let probe = ProbeSpace::super_cartesian(k, q);
        let plot = match random_plot(rng, probe, desc) {
            Ok(p) => p,
            Err(e) => return Some(e.to_string()),
        };
        let (reference, a, b) = random_two_box_cover(rng, k);
        let pieces = match (restrict(&plot, &a), restrict(&plot, &b)) {
            (Ok(pa), Ok(pb)) => vec![pa, pb],
            (Err(e), _) | (_, Err(e)) => return Some(e.to_string()),
        };
        match glue_plots(&pieces, &reference) {
            Ok(g) if g == plot => {}
            Ok(g) => return Some(format!("glued {g}, expected {plot}")),
            Err(e) => return Some(e.to_string()),
        }
        // inject a disagreement in a random component
        let c = rng.gen_range(0..desc.components().len());
        let comp = &desc.components()[c];
        let amb = plot.ambient();
        let bump = match comp.parity {
            Parity::Even => SuperPoly::scalar(&amb, Scalar::sym(probe.even_names()[0].clone())),
            Parity::Odd => {
                let odd_gens = amb.odd().to_vec();
                match odd_gens.first() {
                    Some(th) => SuperPoly::gen(&amb, th).expect("odd generator"),
                    // no odd probe directions: every odd component vanishes
                    None => return None,
                }
            }
        };
        let mut comps = plot.components().to_vec();
        comps[c] = &comps[c] + &bump;
        let broken = match crate::probes::PlotHom::new_unchecked(probe, desc.clone(), comps) {
            Ok(p) => p,
            Err(e) => return Some(e.to_string()),
        };
        let bad = vec![pieces[0].clone(), (b.clone(), broken)];
        match glue_plots(&bad, &reference) {
            Err(GluingError::Obstruction(0, 1, name)) if name == comp.name => None,
            other => Some(format!("injected disagreement in `{}` gave {other:?}", comp.name)),
        }
    })
}

/// `E(D_t F) = 0` for random `F` of order ≤ 2 in an even and an odd field.
pub fn total_derivative_suite(samples: usize, seed: u64) -> SuiteReport {
    let desc = functor_descriptors().pop().expect("mixed descriptor").1;
    let jet2 = JetSpace::from_descriptor(&desc, 2).expect("jet space");
    let jet3 = JetSpace::from_descriptor(&desc, 3).expect("jet space");
    run("total-derivative", samples, seed, |_, rng| {
        let f = random_jet_expression(rng, &jet2);
        let dl = jet3
            .raise(&f)
            .and_then(|g| jet3.total_derivative(&g, 0))
            .and_then(|dl| LagrangianSpec::new(desc.clone(), jet3.clone(), dl));
        match dl.and_then(|spec| euler_lagrange(&spec)) {
            Ok(el) if el.is_zero() => None,
            Ok(el) => Some(format!("F = {f}: {el}")),
            Err(e) => Some(e.to_string()),
        }
    })
}

/// Finite-difference oracle on random first-order Lagrangians, one path per
/// Lagrangian. Failures list the relative error.
pub fn el_oracle_suite(lagrangians: usize, seed: u64, params: &OracleParams) -> (SuiteReport, f64) {
    let results: Vec<Result<(f64, bool, String), String>> = (0..lagrangians)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let spec = random_first_order_lagrangian(&mut rng).map_err(|e| e.to_string())?;
            let s = fd_suite(&spec, 1, seed.wrapping_add(i as u64 + 1), params).map_err(|e| e.to_string())?;
            let s = &s[0];
            Ok((
                s.relative_error,
                s.passed,
                format!(
                    "L = {}, φ = {}, δφ = {}: exact {:.6e}, fd {:.6e}, rel {:.3e}",
                    s.lagrangian, s.phi, s.delta, s.exact, s.finite_difference, s.relative_error
                ),
            ))
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((rel, passed, detail)) => {
                worst = worst.max(rel);
                if !passed {
                    failures.push(format!("sample {i}: {detail}"));
                }
            }
            Err(e) => failures.push(format!("sample {i}: {e}")),
        }
    }
    (
        SuiteReport {
            name: "el-oracle".into(),
            samples: lagrangians,
            failures,
        },
        worst,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_samples() {
        for r in algebra_laws(40, 1) {
            assert!(r.passed(), "{r:?}");
        }
        assert!(dual_number_suite(20, 2).passed());
        assert!(taylor_suite(30, 3).passed());
        for r in gauge_suite(20, 4) {
            assert!(r.passed(), "{r:?}");
        }
        let g = gluing_suite(20, 5);
        assert!(g.passed(), "{g:?}");
        assert!(total_derivative_suite(10, 6).passed());
        let (r, worst) = el_oracle_suite(3, 7, &OracleParams::default());
        assert!(r.passed() && worst < 1e-3, "{r:?}");
    }

    #[test]
    fn suites_are_reproducible() {
        assert_eq!(gluing_suite(5, 9), gluing_suite(5, 9));
    }
}
