//! Infinitesimal probes: dual numbers, Taylor expansion through `D¹_r`, and
//! tangent vectors of field spaces as `D¹₁`-plots.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::jet::{action_on_plot, euler_lagrange, evaluate_on_plot, JetError, LagrangianSpec, VariationPlot};
use crate::probes::{PlotHom, ProbeError, ProbeSpace};
use crate::random::{random_polynomial, sample_rng};
use crate::scalar::{format_term, join_terms, Rational, Scalar};
use crate::superalgebra::{AlgebraError, Ambient, Basis, Parity, SuperPoly};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InfinitesimalError {
    #[error("not a point: constraint `{constraint}` evaluates to {value} at the base point")]
    NotAPoint { constraint: String, value: String },
    #[error("not tangent: constraint `{constraint}` has first-order part {value}")]
    NotTangent { constraint: String, value: String },
    #[error("malformed dual-number plot: {0}")]
    MalformedDualPlot(String),
    #[error("Leibniz rule fails for {0}")]
    Leibniz(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// `𝒪(D¹_r)`: one Weil generator `e1` with `e1^{r+1} = 0`.
pub fn disk(r: u32) -> Arc<Ambient> {
    ProbeSpace { k: 0, q: 0, m: 1, r }.ambient()
}

fn weil_coefficient(p: &SuperPoly, j: u16) -> Scalar {
    p.coefficient(&Basis::new(vec![], vec![j]))
}

/// A point of a (possibly constrained) Cartesian space with a derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TangentVector {
    pub vars: Vec<String>,
    pub point: Vec<Scalar>,
    pub velocity: Vec<Scalar>,
}

impl TangentVector {
    /// `p(f)`.
    pub fn evaluate(&self, f: &Scalar) -> Scalar {
        f.subst(&self.point_map())
    }

    /// `X_p(f) = Σ X^i ∂_i f(p)`.
    pub fn derivation(&self, f: &Scalar) -> Scalar {
        let map = self.point_map();
        self.vars
            .iter()
            .zip(&self.velocity)
            .fold(Scalar::zero(), |acc, (v, x)| acc.add(&x.mul(&f.derivative(v).subst(&map))))
    }

    fn point_map(&self) -> HashMap<String, Scalar> {
        self.vars.iter().cloned().zip(self.point.iter().cloned()).collect()
    }

    /// Image of `f` under the homomorphism: `p(f) + ε X_p(f)`.
    pub fn image(&self, f: &Scalar) -> Result<SuperPoly, InfinitesimalError> {
        let d = disk(1);
        let src = Ambient::new(self.vars.clone(), vec![], vec![], 0)?;
        let assignment: BTreeMap<String, SuperPoly> = self
            .vars
            .iter()
            .zip(self.point.iter().zip(&self.velocity))
            .map(|(v, (p, x))| {
                let e = SuperPoly::gen(&d, "e1").expect("disk generator");
                (v.clone(), &SuperPoly::scalar(&d, p.clone()) + &e.scale(x))
            })
            .collect();
        Ok(SuperPoly::scalar(&src, f.clone()).substitute(&assignment, &d)?)
    }

    /// Checks `image(f₁f₂) = p(f₁)p(f₂) + ε(p(f₁)X(f₂) + X(f₁)p(f₂))`.
    pub fn check_leibniz(&self, f1: &Scalar, f2: &Scalar) -> Result<(), InfinitesimalError> {
        let d = disk(1);
        let lhs = self.image(&f1.mul(f2))?;
        let (p1, p2) = (self.evaluate(f1), self.evaluate(f2));
        let (x1, x2) = (self.derivation(f1), self.derivation(f2));
        let e = SuperPoly::gen(&d, "e1").expect("disk generator");
        let rhs = &SuperPoly::scalar(&d, p1.mul(&p2)) + &e.scale(&p1.mul(&x2).add(&x1.mul(&p2)));
        if lhs.equals(&rhs, true) {
            Ok(())
        } else {
            Err(InfinitesimalError::Leibniz(format!("f1 = {f1}, f2 = {f2}: {lhs} vs {rhs}")))
        }
    }
}

impl fmt::Display for TangentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p: Vec<String> = self.point.iter().map(|x| x.to_string()).collect();
        let v: Vec<String> = self.velocity.iter().map(|x| x.to_string()).collect();
        write!(f, "p = ({}), X = ({})", p.join(", "), v.join(", "))
    }
}

/// Reads a homomorphism `C∞(X) → ℝ[ε]/ε²` off the images of the coordinates
/// and checks it respects the constraints defining `X`.
pub fn hom_to_dual_numbers(
    constraints: &[Scalar],
    vars: &[String],
    assignment: &BTreeMap<String, SuperPoly>,
    leibniz_samples: usize,
    seed: u64,
) -> Result<TangentVector, InfinitesimalError> {
    let d = disk(1);
    let mut point = Vec::new();
    let mut velocity = Vec::new();
    for v in vars {
        let img = assignment
            .get(v)
            .ok_or_else(|| InfinitesimalError::MalformedDualPlot(format!("no image for `{v}`")))?;
        let img = img.embed(&d)?;
        point.push(img.body());
        velocity.push(weil_coefficient(&img, 1));
    }
    let tv = TangentVector {
        vars: vars.to_vec(),
        point,
        velocity,
    };
    for c in constraints {
        let img = tv.image(c)?;
        let (v0, v1) = (img.body(), weil_coefficient(&img, 1));
        let vanishes = |s: &Scalar| s.is_zero() || s.vanishes_on_samples(8, seed) == Some(true);
        if !vanishes(&v0) {
            return Err(InfinitesimalError::NotAPoint {
                constraint: c.to_string(),
                value: v0.to_string(),
            });
        }
        if !vanishes(&v1) {
            return Err(InfinitesimalError::NotTangent {
                constraint: c.to_string(),
                value: v1.to_string(),
            });
        }
    }
    for i in 0..leibniz_samples {
        let mut rng = sample_rng(seed, i as u64);
        let f1 = random_polynomial(&mut rng, vars, 3, 3);
        let f2 = random_polynomial(&mut rng, vars, 3, 3);
        tv.check_leibniz(&f1, &f2)?;
    }
    Ok(tv)
}

/// Truncated Taylor polynomial `Σ_j c_j (x − p)^j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaylorPolynomial {
    pub var: String,
    pub point: Rational,
    pub coefficients: Vec<Scalar>,
}

impl TaylorPolynomial {
    /// The polynomial re-expanded in powers of `x`.
    pub fn to_scalar(&self) -> Scalar {
        let shift = Scalar::sym(self.var.clone()).sub(&Scalar::from_rational(self.point.clone()));
        self.coefficients
            .iter()
            .enumerate()
            .fold(Scalar::zero(), |acc, (j, c)| acc.add(&c.mul(&shift.pow(j as i32))))
    }
}

impl fmt::Display for TaylorPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = if self.point == Rational::from_integer(0.into()) {
            self.var.clone()
        } else {
            let shift = Scalar::sym(self.var.clone()).sub(&Scalar::from_rational(self.point.clone()));
            format!("({shift})")
        };
        let parts: Vec<String> = self
            .coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(j, c)| {
                let power = match j {
                    0 => String::new(),
                    1 => base.clone(),
                    _ => format!("{base}^{j}"),
                };
                match c.as_rational() {
                    Some(r) => format_term(&r, &power, j == 0),
                    None if j == 0 => c.to_string(),
                    None if c.num_terms() > 1 => format!("({c})*{power}"),
                    None => format!("{c}*{power}"),
                }
            })
            .collect();
        if parts.is_empty() {
            return write!(f, "0");
        }
        write!(f, "{}", join_terms(parts))
    }
}

/// Image of `f` under `x ↦ p + ε` in `𝒪(D¹_r)`, read as a Taylor polynomial.
pub fn taylor_via_disk(f: &Scalar, var: &str, p: &Rational, r: u32) -> Result<TaylorPolynomial, InfinitesimalError> {
    let coefficients = if r == 0 {
        let mut m = HashMap::new();
        m.insert(var.to_string(), Scalar::from_rational(p.clone()));
        vec![f.subst(&m)]
    } else {
        let d = disk(r);
        let src = Ambient::new(vec![var.to_string()], vec![], vec![], 0)?;
        let mut assignment = BTreeMap::new();
        let e = SuperPoly::gen(&d, "e1").expect("disk generator");
        assignment.insert(var.to_string(), &SuperPoly::scalar(&d, Scalar::from_rational(p.clone())) + &e);
        let img = SuperPoly::scalar(&src, f.clone()).substitute(&assignment, &d)?;
        (0..=r as u16).map(|j| weil_coefficient(&img, j)).collect()
    };
    Ok(TaylorPolynomial {
        var: var.to_string(),
        point: p.clone(),
        coefficients,
    })
}

/// Splits a plot over `Σ × D¹` into its base plot and its ε-velocity.
pub fn tangent_plot_of_fieldspace(plot: &PlotHom) -> Result<VariationPlot, InfinitesimalError> {
    let probe = plot.probe();
    if probe.m != 1 {
        return Err(InfinitesimalError::MalformedDualPlot(format!(
            "expected exactly one infinitesimal direction, found {}",
            probe.m
        )));
    }
    let base_probe = ProbeSpace::super_cartesian(probe.k, probe.q);
    let amb = plot.descriptor().plot_ambient(&base_probe)?;
    let mut base = Vec::new();
    let mut delta = Vec::new();
    for (c, comp) in plot.descriptor().components().iter().zip(plot.components()) {
        let mut b = SuperPoly::zero(&amb);
        let mut v = SuperPoly::zero(&amb);
        for (basis, coef) in comp.terms() {
            let mono = SuperPoly::monomial(&amb, Basis::new(basis.odd().to_vec(), vec![]), coef.clone());
            match basis.weil()[0] {
                0 => b = &b + &mono,
                1 => v = &v + &mono,
                j => {
                    return Err(InfinitesimalError::MalformedDualPlot(format!(
                        "component `{}` has a term of degree {j} in the infinitesimal direction",
                        c.name
                    )))
                }
            }
        }
        base.push(b);
        delta.push(v);
    }
    let base = PlotHom::new_unchecked(base_probe, plot.descriptor().clone(), base)?;
    Ok(VariationPlot::new(base, delta)?)
}

/// `φ + ε δφ` over the probe thickened by `D¹₁`.
pub fn dual_plot(vp: &VariationPlot) -> Result<PlotHom, InfinitesimalError> {
    let probe = vp.plot.probe();
    if probe.m != 0 {
        return Err(InfinitesimalError::MalformedDualPlot(
            "base plot already has infinitesimal directions".into(),
        ));
    }
    let thick = ProbeSpace { m: 1, r: 1, ..probe };
    let amb = vp.plot.descriptor().plot_ambient(&thick)?;
    let e = SuperPoly::gen(&amb, "e1")?;
    let comps = vp
        .plot
        .components()
        .iter()
        .zip(&vp.delta)
        .map(|(p, d)| Ok(&p.embed(&amb)? + &(&e * &d.embed(&amb)?)))
        .collect::<Result<Vec<_>, AlgebraError>>()?;
    Ok(PlotHom::new_unchecked(thick, vp.plot.descriptor().clone(), comps)?)
}

/// First-order part of a quantity computed over `Σ × D¹₁`, re-expressed over `Σ`.
fn epsilon_part(p: &SuperPoly, base: &Arc<Ambient>) -> SuperPoly {
    let mut out = SuperPoly::zero(base);
    for (b, c) in p.terms() {
        if b.weil().first() == Some(&1) {
            out = &out + &SuperPoly::monomial(base, Basis::new(b.odd().to_vec(), vec![]), c.clone());
        }
    }
    out
}

/// ε-coefficient of the action on `φ + ε δφ`.
pub fn action_linearization(
    spec: &LagrangianSpec,
    vp: &VariationPlot,
    bounds: &[(Rational, Rational)],
) -> Result<SuperPoly, InfinitesimalError> {
    let thick = dual_plot(vp)?;
    let s = action_on_plot(spec, &thick, bounds)?;
    let probe = vp.plot.probe();
    let base = ProbeSpace::super_cartesian(probe.k, probe.q).ambient();
    Ok(epsilon_part(&s, &base).embed(&vp.plot.ambient())?)
}

/// True if `δφ` solves the Euler–Lagrange equations linearized at `φ`.
pub fn is_jacobi_field(spec: &LagrangianSpec, vp: &VariationPlot) -> Result<bool, InfinitesimalError> {
    let el = euler_lagrange(spec)?;
    let thick = dual_plot(vp)?;
    let amb = vp.plot.ambient();
    for (_, e) in &el.components {
        let on = evaluate_on_plot(&el.jet, e, &thick)?;
        let lin = epsilon_part(&on, &amb);
        if !lin.equals(&SuperPoly::zero(&amb), true) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Parity bookkeeping helper: the velocity of a component has its parity.
pub fn velocity_parity(vp: &VariationPlot, i: usize) -> Option<Parity> {
    vp.delta.get(i).and_then(|d| d.parity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{first_variation, JetSpace};
    use crate::probes::{FieldComponent, FieldSpaceDescriptor};
    use crate::scalar::rat;

    fn d1(p: i64, v: i64) -> SuperPoly {
        let d = disk(1);
        &SuperPoly::from_int(&d, p) + &SuperPoly::gen(&d, "e1").unwrap().scale(&Scalar::from(v))
    }

    #[test]
    fn splitting_dual_numbers() {
        let mut a = BTreeMap::new();
        a.insert("x".to_string(), d1(3, 5));
        let tv = hom_to_dual_numbers(&[], &["x".into()], &a, 10, 1).unwrap();
        assert_eq!(tv.to_string(), "p = (3), X = (5)");
    }

    #[test]
    fn circle_tangents() {
        let (x, y) = (Scalar::sym("x"), Scalar::sym("y"));
        let circle = x.pow(2).add(&y.pow(2)).sub(&Scalar::one());
        let vars = vec!["x".to_string(), "y".to_string()];
        let mut a = BTreeMap::new();
        a.insert("x".to_string(), d1(1, 0));
        let d = disk(1);
        a.insert("y".to_string(), SuperPoly::gen(&d, "e1").unwrap().scale(&Scalar::sym("v")));
        let tv = hom_to_dual_numbers(&[circle.clone()], &vars, &a, 5, 2).unwrap();
        assert_eq!(tv.to_string(), "p = (1, 0), X = (0, v)");
        a.insert("x".to_string(), d1(1, 1));
        a.insert("y".to_string(), SuperPoly::zero(&d));
        assert!(matches!(
            hom_to_dual_numbers(&[circle.clone()], &vars, &a, 0, 2),
            Err(InfinitesimalError::NotTangent { .. })
        ));
        a.insert("x".to_string(), d1(2, 0));
        assert!(matches!(
            hom_to_dual_numbers(&[circle], &vars, &a, 0, 2),
            Err(InfinitesimalError::NotAPoint { .. })
        ));
    }

    #[test]
    fn taylor() {
        let x = Scalar::sym("x");
        let t = taylor_via_disk(&x.pow(3), "x", &rat(1, 1), 2).unwrap();
        assert_eq!(t.to_string(), "1 + 3*(x - 1) + 3*(x - 1)^2");
        let c = taylor_via_disk(&Scalar::from(7), "x", &rat(2, 1), 4).unwrap();
        assert_eq!(c.to_string(), "7");
        let r0 = taylor_via_disk(&x.pow(2), "x", &rat(3, 1), 0).unwrap();
        assert_eq!(r0.to_string(), "9");
        let e = taylor_via_disk(&Scalar::exp(x), "x", &rat(0, 1), 2).unwrap();
        assert_eq!(e.to_string(), "1 + x + 1/2*x^2");
    }

    fn descriptor(parity: Parity) -> Arc<FieldSpaceDescriptor> {
        FieldSpaceDescriptor::new(
            vec!["t".into()],
            vec![FieldComponent { name: "u".into(), parity }],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn tangent_plots() {
        let d = descriptor(Parity::Even);
        let p = ProbeSpace { k: 0, q: 0, m: 1, r: 1 };
        let amb = d.plot_ambient(&p).unwrap();
        let t = Scalar::sym("t");
        let e = SuperPoly::gen(&amb, "e1").unwrap();
        let u = &SuperPoly::scalar(&amb, t.pow(2)) + &e.scale(&t);
        let vp = tangent_plot_of_fieldspace(&PlotHom::new(p, d.clone(), vec![u.clone()]).unwrap()).unwrap();
        assert_eq!(vp.plot.to_string(), "u = t^2");
        assert_eq!(vp.delta[0].to_string(), "t");
        assert_eq!(dual_plot(&vp).unwrap().components()[0], u);

        let f = descriptor(Parity::Odd);
        let p = ProbeSpace { k: 0, q: 1, m: 1, r: 1 };
        let amb = f.plot_ambient(&p).unwrap();
        let th = SuperPoly::gen(&amb, "th1").unwrap();
        let e = SuperPoly::gen(&amb, "e1").unwrap();
        let psi = &th.scale(&t) + &(&e * &th);
        let vp = tangent_plot_of_fieldspace(&PlotHom::new(p, f, vec![psi]).unwrap()).unwrap();
        assert_eq!(vp.plot.to_string(), "u = t*th1");
        assert_eq!(vp.delta[0].to_string(), "th1");
        assert_eq!(velocity_parity(&vp, 0), Some(Parity::Odd));

        let p2 = ProbeSpace { k: 0, q: 0, m: 1, r: 2 };
        let amb = d.plot_ambient(&p2).unwrap();
        let e = SuperPoly::gen(&amb, "e1").unwrap();
        let bad = PlotHom::new(p2, d, vec![&e * &e]).unwrap();
        assert!(matches!(
            tangent_plot_of_fieldspace(&bad),
            Err(InfinitesimalError::MalformedDualPlot(_))
        ));
    }

    #[test]
    fn linearization_matches_first_variation() {
        let d = descriptor(Parity::Even);
        let jet = JetSpace::from_descriptor(&d, 1).unwrap();
        let u = jet.var("u", &[]).unwrap();
        let ut = jet.var("u", &["t"]).unwrap();
        let l = &(&ut * &ut) - &(&(&u * &u) * &u);
        let spec = LagrangianSpec::new(d.clone(), jet, l).unwrap();
        let p = ProbeSpace::cartesian(1);
        let amb = d.plot_ambient(&p).unwrap();
        let t = Scalar::sym("t");
        let phi = SuperPoly::scalar(&amb, t.mul(&Scalar::sym("s1")).add(&t.pow(2)));
        let delta = SuperPoly::scalar(&amb, t.pow(3).add(&Scalar::one()));
        let vp = VariationPlot::new(PlotHom::new(p, d, vec![phi]).unwrap(), vec![delta]).unwrap();
        let unit = [(rat(0, 1), rat(1, 1))];
        let lin = action_linearization(&spec, &vp, &unit).unwrap();
        assert_eq!(lin, first_variation(&spec, &vp, &unit).unwrap().total);
    }

    #[test]
    fn jacobi_fields_of_free_particle() {
        let d = descriptor(Parity::Even);
        let jet = JetSpace::from_descriptor(&d, 1).unwrap();
        let ut = jet.var("u", &["t"]).unwrap();
        let spec = LagrangianSpec::new(d.clone(), jet, &ut * &ut).unwrap();
        let p = ProbeSpace::point();
        let amb = d.plot_ambient(&p).unwrap();
        let t = Scalar::sym("t");
        let plot = PlotHom::new(p, d, vec![SuperPoly::scalar(&amb, t.clone())]).unwrap();
        let line = VariationPlot::new(plot.clone(), vec![SuperPoly::scalar(&amb, t.add(&Scalar::one()))]).unwrap();
        assert!(is_jacobi_field(&spec, &line).unwrap());
        let bent = VariationPlot::new(plot, vec![SuperPoly::scalar(&amb, t.pow(2))]).unwrap();
        assert!(!is_jacobi_field(&spec, &bent).unwrap());
    }
}
