//! Supercommutative algebras `C∞(ℝ^k) ⊗ Λ[θ_1..θ_q] ⊗ ℝ[ε_1..ε_m]/(ε)^{r+1}`.
//!
//! A [`SuperPoly`] is a finite sum `Σ c · θ_I · ε^α` with [`Scalar`]
//! coefficients, strictly increasing odd index lists `I` and Weil exponent
//! vectors of total degree at most `r`. Every value carries the [`Ambient`]
//! it lives in; mixing ambients is an error.
//!
//! Odd derivatives are *left* derivatives: `∂_θ` moves `θ` to the front of a
//! monomial, collecting a sign per transposition, and deletes it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::One;
use thiserror::Error;

use crate::scalar::{
    format_term, join_terms, rat, Applied, Atom, Elementary, EvalError, Rational, Scalar,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of_degree(d: usize) -> Self {
        if d % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn bit(self) -> usize {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }

    pub fn add(self, other: Parity) -> Parity {
        Parity::of_degree(self.bit() + other.bit())
    }

    pub fn name(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("incompatible ambients: {0} vs {1}")]
    IncompatibleAmbient(String, String),
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("not a homomorphism: image of `{gen}` {reason}")]
    NotAHomomorphism { gen: String, reason: String },
    #[error("nilpotency violation: image of `{gen}` {reason}")]
    NilpotencyViolation { gen: String, reason: String },
    #[error("invalid ambient: {0}")]
    InvalidAmbient(String),
    #[error("cannot invert an element with zero body")]
    NotInvertible,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Names of the even variables, odd generators and Weil generators of an
/// algebra, together with the Weil truncation order `r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ambient {
    even: Vec<String>,
    odd: Vec<String>,
    weil: Vec<String>,
    order: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Even(usize),
    Odd(usize),
    Weil(usize),
}

impl Ambient {
    pub fn new(
        even: Vec<String>,
        odd: Vec<String>,
        weil: Vec<String>,
        order: u32,
    ) -> Result<Arc<Ambient>, AlgebraError> {
        if weil.is_empty() != (order == 0) {
            return Err(AlgebraError::InvalidAmbient(format!(
                "{} Weil generators with order {order}",
                weil.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for n in even.iter().chain(&odd).chain(&weil) {
            if !seen.insert(n.as_str()) {
                return Err(AlgebraError::InvalidAmbient(format!("duplicate name `{n}`")));
            }
        }
        Ok(Arc::new(Ambient {
            even,
            odd,
            weil,
            order,
        }))
    }

    pub fn even(&self) -> &[String] {
        &self.even
    }
    pub fn odd(&self) -> &[String] {
        &self.odd
    }
    pub fn weil(&self) -> &[String] {
        &self.weil
    }
    pub fn order(&self) -> u32 {
        self.order
    }

    /// `(k, q, m, r)`.
    pub fn signature(&self) -> (usize, usize, usize, u32) {
        (self.even.len(), self.odd.len(), self.weil.len(), self.order)
    }

    /// Any element with vanishing body raised to this power is zero.
    pub fn nilpotency_bound(&self) -> u32 {
        self.odd.len() as u32 + self.weil.len() as u32 * self.order + 1
    }

    pub fn generator(&self, name: &str) -> Option<Generator> {
        if let Some(i) = self.even.iter().position(|n| n == name) {
            return Some(Generator::Even(i));
        }
        if let Some(i) = self.odd.iter().position(|n| n == name) {
            return Some(Generator::Odd(i));
        }
        self.weil.iter().position(|n| n == name).map(Generator::Weil)
    }
}

impl fmt::Display for Ambient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{} | {} | {}; r={}]",
            self.even.join(","),
            self.odd.join(","),
            self.weil.join(","),
            self.order
        )
    }
}

fn same_ambient(a: &Arc<Ambient>, b: &Arc<Ambient>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Odd and Weil part of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Basis {
    odd: Vec<u16>,
    weil: Vec<u16>,
}

impl Basis {
    pub fn one(m: usize) -> Self {
        Basis {
            odd: Vec::new(),
            weil: vec![0; m],
        }
    }

    pub fn new(odd: Vec<u16>, weil: Vec<u16>) -> Self {
        Basis { odd, weil }
    }

    pub fn odd(&self) -> &[u16] {
        &self.odd
    }
    pub fn weil(&self) -> &[u16] {
        &self.weil
    }

    pub fn odd_degree(&self) -> usize {
        self.odd.len()
    }

    pub fn weil_degree(&self) -> u32 {
        self.weil.iter().map(|&e| e as u32).sum()
    }

    pub fn is_one(&self) -> bool {
        self.odd.is_empty() && self.weil.iter().all(|&e| e == 0)
    }

    pub fn parity(&self) -> Parity {
        Parity::of_degree(self.odd.len())
    }

    /// Product of two basis monomials: `None` if it vanishes, else the sign.
    fn mul(&self, other: &Basis, order: u32) -> Option<(Basis, bool)> {
        let weil: Vec<u16> = self.weil.iter().zip(&other.weil).map(|(a, b)| a + b).collect();
        if weil.iter().map(|&e| e as u32).sum::<u32>() > order {
            return None;
        }
        let mut odd = Vec::with_capacity(self.odd.len() + other.odd.len());
        let mut negative = false;
        let (mut i, mut j) = (0, 0);
        while i < self.odd.len() && j < other.odd.len() {
            match self.odd[i].cmp(&other.odd[j]) {
                Ordering::Equal => return None,
                Ordering::Less => {
                    odd.push(self.odd[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    // other.odd[j] jumps over the remaining self.odd[i..]
                    if (self.odd.len() - i) % 2 == 1 {
                        negative = !negative;
                    }
                    odd.push(other.odd[j]);
                    j += 1;
                }
            }
        }
        odd.extend_from_slice(&self.odd[i..]);
        odd.extend_from_slice(&other.odd[j..]);
        Some((Basis { odd, weil }, negative))
    }
}

impl Ord for Basis {
    fn cmp(&self, other: &Self) -> Ordering {
        self.odd
            .len()
            .cmp(&other.odd.len())
            .then_with(|| self.weil_degree().cmp(&other.weil_degree()))
            .then_with(|| self.odd.cmp(&other.odd))
            .then_with(|| other.weil.cmp(&self.weil))
    }
}

impl PartialOrd for Basis {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Element of a super/thickened function algebra in normal form.
#[derive(Debug, Clone)]
pub struct SuperPoly {
    ambient: Arc<Ambient>,
    terms: BTreeMap<Basis, Scalar>,
}

impl PartialEq for SuperPoly {
    fn eq(&self, other: &Self) -> bool {
        same_ambient(&self.ambient, &other.ambient) && self.terms == other.terms
    }
}

impl Eq for SuperPoly {}

impl SuperPoly {
    pub fn zero(ambient: &Arc<Ambient>) -> Self {
        SuperPoly {
            ambient: ambient.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn one(ambient: &Arc<Ambient>) -> Self {
        SuperPoly::scalar(ambient, Scalar::one())
    }

    pub fn scalar(ambient: &Arc<Ambient>, c: Scalar) -> Self {
        let mut p = SuperPoly::zero(ambient);
        p.insert(Basis::one(ambient.weil.len()), c);
        p
    }

    pub fn from_int(ambient: &Arc<Ambient>, n: i64) -> Self {
        SuperPoly::scalar(ambient, Scalar::from(n))
    }

    /// The generator (even variable, odd or Weil generator) called `name`.
    pub fn gen(ambient: &Arc<Ambient>, name: &str) -> Result<Self, AlgebraError> {
        match ambient.generator(name) {
            Some(Generator::Even(_)) => Ok(SuperPoly::scalar(ambient, Scalar::sym(name))),
            Some(Generator::Odd(i)) => Ok(SuperPoly::monomial(
                ambient,
                Basis::new(vec![i as u16], vec![0; ambient.weil.len()]),
                Scalar::one(),
            )),
            Some(Generator::Weil(i)) => {
                let mut w = vec![0; ambient.weil.len()];
                w[i] = 1;
                Ok(SuperPoly::monomial(ambient, Basis::new(vec![], w), Scalar::one()))
            }
            None => Err(AlgebraError::UnknownGenerator(name.to_string())),
        }
    }

    /// `c · basis`; the basis is validated against the ambient.
    pub fn monomial(ambient: &Arc<Ambient>, basis: Basis, c: Scalar) -> Self {
        let mut p = SuperPoly::zero(ambient);
        p.insert(basis, c);
        p
    }

    fn insert(&mut self, basis: Basis, c: Scalar) {
        if c.is_zero() || basis.weil_degree() > self.ambient.order {
            return;
        }
        let mut odd = basis.odd.clone();
        odd.dedup();
        assert_eq!(odd, basis.odd, "odd indices must be strictly increasing");
        match self.terms.entry(basis) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().add(&c);
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn ambient(&self) -> &Arc<Ambient> {
        &self.ambient
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Basis, &Scalar)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, basis: &Basis) -> Scalar {
        self.terms.get(basis).cloned().unwrap_or_default()
    }

    /// Degree-zero part in all odd and Weil generators.
    pub fn body(&self) -> Scalar {
        self.coefficient(&Basis::one(self.ambient.weil.len()))
    }

    pub fn nilpotent_part(&self) -> SuperPoly {
        let mut out = self.clone();
        out.terms.remove(&Basis::one(self.ambient.weil.len()));
        out
    }

    /// Parity if homogeneous; zero counts as even.
    pub fn parity(&self) -> Option<Parity> {
        let mut it = self.terms.keys().map(|b| b.parity());
        match it.next() {
            None => Some(Parity::Even),
            Some(p) => it.all(|q| q == p).then_some(p),
        }
    }

    pub fn has_parity(&self, p: Parity) -> bool {
        self.is_zero() || self.parity() == Some(p)
    }

    /// Homogeneous component of the given parity.
    pub fn part(&self, p: Parity) -> SuperPoly {
        SuperPoly {
            ambient: self.ambient.clone(),
            terms: self
                .terms
                .iter()
                .filter(|(b, _)| b.parity() == p)
                .map(|(b, c)| (b.clone(), c.clone()))
                .collect(),
        }
    }

    fn check_same(&self, other: &SuperPoly) -> Result<(), AlgebraError> {
        if same_ambient(&self.ambient, &other.ambient) {
            Ok(())
        } else {
            Err(AlgebraError::IncompatibleAmbient(
                self.ambient.to_string(),
                other.ambient.to_string(),
            ))
        }
    }

    pub fn add(&self, other: &SuperPoly) -> Result<SuperPoly, AlgebraError> {
        self.check_same(other)?;
        Ok(self.add_unchecked(other))
    }

    fn add_unchecked(&self, other: &SuperPoly) -> SuperPoly {
        let mut out = self.clone();
        for (b, c) in &other.terms {
            out.insert(b.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &SuperPoly) -> Result<SuperPoly, AlgebraError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> SuperPoly {
        self.map_coefficients(|c| c.neg())
    }

    pub fn scale(&self, s: &Scalar) -> SuperPoly {
        self.map_coefficients(|c| c.mul(s))
    }

    /// Applies `f` to every coefficient and renormalizes.
    pub fn map_coefficients(&self, mut f: impl FnMut(&Scalar) -> Scalar) -> SuperPoly {
        let mut out = SuperPoly::zero(&self.ambient);
        for (b, c) in &self.terms {
            out.insert(b.clone(), f(c));
        }
        out
    }

    /// Graded-commutative product.
    pub fn mul(&self, other: &SuperPoly) -> Result<SuperPoly, AlgebraError> {
        self.check_same(other)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &SuperPoly) -> SuperPoly {
        let mut out = SuperPoly::zero(&self.ambient);
        for (ba, ca) in &self.terms {
            for (bb, cb) in &other.terms {
                if let Some((b, negative)) = ba.mul(bb, self.ambient.order) {
                    let c = ca.mul(cb);
                    out.insert(b, if negative { c.neg() } else { c });
                }
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> SuperPoly {
        let mut acc = SuperPoly::one(&self.ambient);
        for _ in 0..n {
            acc = acc.mul_unchecked(self);
            if acc.is_zero() {
                break;
            }
        }
        acc
    }

    /// Partial derivative along an even variable, or left derivative along
    /// an odd or Weil generator.
    pub fn partial_derivative(&self, gen: &str) -> Result<SuperPoly, AlgebraError> {
        let g = self
            .ambient
            .generator(gen)
            .ok_or_else(|| AlgebraError::UnknownGenerator(gen.to_string()))?;
        Ok(self.derivative_by(g, gen))
    }

    /// Derivative along a symbol that is not a generator (a parameter);
    /// coefficients are differentiated and the basis is untouched.
    pub fn coefficient_derivative(&self, var: &str) -> SuperPoly {
        self.map_coefficients(|c| c.derivative(var))
    }

    fn derivative_by(&self, g: Generator, name: &str) -> SuperPoly {
        let mut out = SuperPoly::zero(&self.ambient);
        match g {
            Generator::Even(_) => return self.coefficient_derivative(name),
            Generator::Odd(i) => {
                let i = i as u16;
                for (b, c) in &self.terms {
                    if let Some(pos) = b.odd.iter().position(|&x| x == i) {
                        let mut odd = b.odd.clone();
                        odd.remove(pos);
                        let c = if pos % 2 == 1 { c.neg() } else { c.clone() };
                        out.insert(Basis::new(odd, b.weil.clone()), c);
                    }
                }
            }
            Generator::Weil(i) => {
                for (b, c) in &self.terms {
                    let e = b.weil[i];
                    if e > 0 {
                        let mut weil = b.weil.clone();
                        weil[i] -= 1;
                        out.insert(
                            Basis::new(b.odd.clone(), weil),
                            c.scale(&Rational::from_integer(BigInt::from(e))),
                        );
                    }
                }
            }
        }
        out
    }

    /// Re-expresses this element in a larger ambient, matching generators by
    /// name. Fails if a generator in use is missing or changes kind.
    pub fn embed(&self, target: &Arc<Ambient>) -> Result<SuperPoly, AlgebraError> {
        if same_ambient(&self.ambient, target) {
            return Ok(self.clone());
        }
        let odd_map: Vec<Option<u16>> = self
            .ambient
            .odd
            .iter()
            .map(|n| target.odd.iter().position(|m| m == n).map(|i| i as u16))
            .collect();
        let weil_map: Vec<Option<usize>> = self
            .ambient
            .weil
            .iter()
            .map(|n| target.weil.iter().position(|m| m == n))
            .collect();
        let mut out = SuperPoly::zero(target);
        for (b, c) in &self.terms {
            let mut odd = Vec::with_capacity(b.odd.len());
            for &i in &b.odd {
                odd.push(odd_map[i as usize].ok_or_else(|| {
                    AlgebraError::UnknownGenerator(self.ambient.odd[i as usize].clone())
                })?);
            }
            let mut weil = vec![0u16; target.weil.len()];
            for (i, &e) in b.weil.iter().enumerate() {
                if e > 0 {
                    let j = weil_map[i].ok_or_else(|| {
                        AlgebraError::UnknownGenerator(self.ambient.weil[i].clone())
                    })?;
                    weil[j] = e;
                }
            }
            // reorder odd generators, tracking the permutation sign
            let negative = inversion_parity(&odd);
            odd.sort_unstable();
            let c = if negative { c.neg() } else { c.clone() };
            out.insert(Basis::new(odd, weil), c);
        }
        Ok(out)
    }

    /// Unique homomorphic extension of `assignment` (generator name → image in
    /// `target`), applied to `self`. Unassigned generators map to the
    /// generator of the same name in `target`.
    pub fn substitute(
        &self,
        assignment: &BTreeMap<String, SuperPoly>,
        target: &Arc<Ambient>,
    ) -> Result<SuperPoly, AlgebraError> {
        let hom = Substitution::new(&self.ambient, assignment, target)?;
        hom.apply(self)
    }

    /// Collapses coefficients to exact rationals at the given point.
    pub fn evaluate_numeric(
        &self,
        point: &HashMap<String, Rational>,
    ) -> Result<SuperPoly, AlgebraError> {
        let mut out = SuperPoly::zero(&self.ambient);
        for (b, c) in &self.terms {
            out.insert(b.clone(), Scalar::from_rational(c.eval_rational(point)?));
        }
        Ok(out)
    }

    /// Equality of normal forms, optionally falling back to random sampling of
    /// the coefficient difference when syntactic comparison fails.
    pub fn equals(&self, other: &SuperPoly, sampling_fallback: bool) -> bool {
        if self == other {
            return true;
        }
        if !sampling_fallback || !same_ambient(&self.ambient, &other.ambient) {
            return false;
        }
        let diff = self.add_unchecked(&other.neg());
        diff.terms
            .values()
            .all(|c| c.vanishes_on_samples(16, 0x5eed).unwrap_or(false))
    }
}

fn inversion_parity(v: &[u16]) -> bool {
    let mut n = 0usize;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] > v[j] {
                n += 1;
            }
        }
    }
    n % 2 == 1
}

/// A validated algebra homomorphism between two ambients.
pub struct Substitution<'a> {
    source: &'a Arc<Ambient>,
    target: &'a Arc<Ambient>,
    even: HashMap<String, SuperPoly>,
    odd: Vec<SuperPoly>,
    weil: Vec<SuperPoly>,
}

impl<'a> Substitution<'a> {
    pub fn new(
        source: &'a Arc<Ambient>,
        assignment: &BTreeMap<String, SuperPoly>,
        target: &'a Arc<Ambient>,
    ) -> Result<Self, AlgebraError> {
        let mut even = HashMap::new();
        let mut odd: Vec<Option<SuperPoly>> = vec![None; source.odd.len()];
        let mut weil: Vec<Option<SuperPoly>> = vec![None; source.weil.len()];
        for (name, img) in assignment {
            if !same_ambient(&img.ambient, target) {
                return Err(AlgebraError::IncompatibleAmbient(
                    img.ambient.to_string(),
                    target.to_string(),
                ));
            }
            match source.generator(name) {
                None => return Err(AlgebraError::UnknownGenerator(name.clone())),
                Some(Generator::Even(_)) => {
                    if !img.has_parity(Parity::Even) {
                        return Err(AlgebraError::NotAHomomorphism {
                            gen: name.clone(),
                            reason: format!("is not even: {img}"),
                        });
                    }
                    even.insert(name.clone(), img.clone());
                }
                Some(Generator::Odd(i)) => {
                    if !img.mul_unchecked(img).is_zero() {
                        return Err(AlgebraError::NilpotencyViolation {
                            gen: name.clone(),
                            reason: format!("does not square to zero: {img}"),
                        });
                    }
                    if !img.has_parity(Parity::Odd) {
                        return Err(AlgebraError::NotAHomomorphism {
                            gen: name.clone(),
                            reason: format!("is not odd: {img}"),
                        });
                    }
                    odd[i] = Some(img.clone());
                }
                Some(Generator::Weil(i)) => {
                    if !img.has_parity(Parity::Even) {
                        return Err(AlgebraError::NotAHomomorphism {
                            gen: name.clone(),
                            reason: format!("is not even: {img}"),
                        });
                    }
                    weil[i] = Some(img.clone());
                }
            }
        }
        let lookup = |name: &String, want: fn(Generator) -> bool| -> Result<SuperPoly, AlgebraError> {
            match target.generator(name) {
                Some(g) if want(g) => SuperPoly::gen(target, name),
                _ => Err(AlgebraError::UnknownGenerator(name.clone())),
            }
        };
        let odd = odd
            .into_iter()
            .zip(&source.odd)
            .map(|(img, name)| match img {
                Some(p) => Ok(p),
                None => lookup(name, |g| matches!(g, Generator::Odd(_))),
            })
            .collect::<Result<Vec<_>, _>>();
        let weil = weil
            .into_iter()
            .zip(&source.weil)
            .map(|(img, name)| match img {
                Some(p) => Ok(p),
                None => lookup(name, |g| matches!(g, Generator::Weil(_))),
            })
            .collect::<Result<Vec<_>, _>>();
        // a missing identity image only matters if the generator is used, so
        // defer those errors to `apply` by storing a marker
        let odd = odd.unwrap_or_else(|_| Vec::new());
        let weil = weil.unwrap_or_else(|_| Vec::new());
        let hom = Substitution {
            source,
            target,
            even,
            odd,
            weil,
        };
        hom.check_weil_relations()?;
        Ok(hom)
    }

    /// All degree-(r+1) monomials in the Weil images must vanish.
    fn check_weil_relations(&self) -> Result<(), AlgebraError> {
        let m = self.source.weil.len();
        if m == 0 || self.weil.len() != m {
            return Ok(());
        }
        let r = self.source.order as usize;
        let mut exps = vec![0usize; m];
        fn rec(
            hom: &Substitution<'_>,
            idx: usize,
            left: usize,
            exps: &mut Vec<usize>,
        ) -> Result<(), AlgebraError> {
            if idx + 1 == exps.len() {
                exps[idx] = left;
                let mut prod = SuperPoly::one(hom.target);
                for (i, &e) in exps.iter().enumerate() {
                    prod = prod.mul_unchecked(&hom.weil[i].pow(e as u32));
                }
                if !prod.is_zero() {
                    let gens: Vec<String> = exps
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| **e > 0)
                        .map(|(i, e)| format!("{}^{e}", hom.source.weil[i]))
                        .collect();
                    return Err(AlgebraError::NilpotencyViolation {
                        gen: hom.source.weil[exps.iter().position(|e| *e > 0).unwrap_or(0)].clone(),
                        reason: format!("relation {} = 0 fails", gens.join("*")),
                    });
                }
                return Ok(());
            }
            for e in 0..=left {
                exps[idx] = e;
                rec(hom, idx + 1, left - e, exps)?;
            }
            Ok(())
        }
        rec(self, 0, r + 1, &mut exps)
    }

    pub fn apply(&self, p: &SuperPoly) -> Result<SuperPoly, AlgebraError> {
        if !same_ambient(&p.ambient, self.source) {
            return Err(AlgebraError::IncompatibleAmbient(
                p.ambient.to_string(),
                self.source.to_string(),
            ));
        }
        let mut out = SuperPoly::zero(self.target);
        for (b, c) in &p.terms {
            let mut img = self.eval_scalar(c)?;
            for &i in &b.odd {
                let g = self.odd.get(i as usize).ok_or_else(|| {
                    AlgebraError::UnknownGenerator(self.source.odd[i as usize].clone())
                })?;
                img = img.mul_unchecked(g);
                if img.is_zero() {
                    break;
                }
            }
            for (i, &e) in b.weil.iter().enumerate() {
                if e > 0 && !img.is_zero() {
                    let g = self.weil.get(i).ok_or_else(|| {
                        AlgebraError::UnknownGenerator(self.source.weil[i].clone())
                    })?;
                    img = img.mul_unchecked(&g.pow(e as u32));
                }
            }
            out = out.add_unchecked(&img);
        }
        Ok(out)
    }

    /// Evaluates a coefficient with even variables replaced by super values.
    fn eval_scalar(&self, c: &Scalar) -> Result<SuperPoly, AlgebraError> {
        if !self.even.keys().any(|k| c.depends_on(k)) {
            return Ok(SuperPoly::scalar(self.target, c.clone()));
        }
        // fast path: purely scalar images
        if self.even.values().all(|v| v.terms.keys().all(|b| b.is_one())) {
            let map = self
                .even
                .iter()
                .map(|(k, v)| (k.clone(), v.body()))
                .collect();
            return Ok(SuperPoly::scalar(self.target, c.subst(&map)));
        }
        let mut out = SuperPoly::zero(self.target);
        for (m, coeff) in c.terms() {
            let mut prod = SuperPoly::scalar(self.target, Scalar::from_rational(coeff.clone()));
            for (atom, e) in m.factors() {
                let v = self.eval_atom(atom)?;
                let v = if *e >= 0 {
                    v.pow(*e as u32)
                } else {
                    super_inverse(&v)?.pow((-e) as u32)
                };
                prod = prod.mul_unchecked(&v);
                if prod.is_zero() {
                    break;
                }
            }
            out = out.add_unchecked(&prod);
        }
        Ok(out)
    }

    fn eval_atom(&self, atom: &Atom) -> Result<SuperPoly, AlgebraError> {
        let lift = |s: Scalar| SuperPoly::scalar(self.target, s);
        match atom {
            Atom::Sym(s) => Ok(self
                .even
                .get(s)
                .cloned()
                .unwrap_or_else(|| lift(Scalar::sym(s.clone())))),
            Atom::Recip(b) => super_inverse(&self.eval_scalar(b)?),
            Atom::Func(kind, arg) => {
                let v = self.eval_scalar(arg)?;
                elementary_of_super(*kind, &v)
            }
            Atom::Apply(a) => {
                let args = a
                    .args
                    .iter()
                    .map(|x| self.eval_scalar(x))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(applied_of_super(a, &args, self.target))
            }
        }
    }
}

/// `1/x = b⁻¹ Σ_j (−n b⁻¹)^j` for `x = b + n` with `n` nilpotent.
pub fn super_inverse(x: &SuperPoly) -> Result<SuperPoly, AlgebraError> {
    let body = x.body();
    let inv = body.inv().ok_or(AlgebraError::NotInvertible)?;
    let amb = &x.ambient;
    let step = x.nilpotent_part().scale(&inv).neg();
    let mut acc = SuperPoly::one(amb);
    let mut term = SuperPoly::one(amb);
    loop {
        term = term.mul_unchecked(&step);
        if term.is_zero() {
            break;
        }
        acc = acc.add_unchecked(&term);
    }
    Ok(acc.scale(&inv))
}

/// Σ_j coeff(j) · n^j for the nilpotent `n`, stopping once `n^j` vanishes.
fn nilpotent_series(n: &SuperPoly, mut coeff: impl FnMut(u32) -> Scalar) -> SuperPoly {
    let amb = &n.ambient;
    let mut acc = SuperPoly::scalar(amb, coeff(0));
    let mut power = SuperPoly::one(amb);
    let mut j = 0;
    loop {
        power = power.mul_unchecked(n);
        j += 1;
        if power.is_zero() {
            break;
        }
        acc = acc.add_unchecked(&power.scale(&coeff(j)));
    }
    acc
}

fn factorial(j: u32) -> Rational {
    (1..=j as i64).fold(Rational::one(), |acc, k| acc * rat(k, 1))
}

impl SuperPoly {
    /// `sin`, `cos`, `exp` or `log` of an even element, expanded around its body.
    pub fn elementary(&self, kind: Elementary) -> Result<SuperPoly, AlgebraError> {
        elementary_of_super(kind, self)
    }
}

fn elementary_of_super(kind: Elementary, v: &SuperPoly) -> Result<SuperPoly, AlgebraError> {
    let amb = &v.ambient;
    let a = v.body();
    let n = v.nilpotent_part();
    if n.is_zero() {
        return Ok(SuperPoly::scalar(amb, Scalar::func(kind, a)));
    }
    let sign = |k: u32| if k % 2 == 0 { Rational::one() } else { -Rational::one() };
    Ok(match kind {
        Elementary::Exp => {
            nilpotent_series(&n, |j| Scalar::from_rational(factorial(j).recip())).scale(&Scalar::exp(a))
        }
        Elementary::Sin | Elementary::Cos => {
            // sin(a+n) = sin a·C(n) + cos a·S(n); cos(a+n) = cos a·C(n) − sin a·S(n)
            let c = nilpotent_series(&n, |j| {
                if j % 2 == 0 {
                    Scalar::from_rational(sign(j / 2) * factorial(j).recip())
                } else {
                    Scalar::zero()
                }
            });
            let s = nilpotent_series(&n, |j| {
                if j % 2 == 1 {
                    Scalar::from_rational(sign(j / 2) * factorial(j).recip())
                } else {
                    Scalar::zero()
                }
            });
            let (sa, ca) = (Scalar::sin(a.clone()), Scalar::cos(a));
            if kind == Elementary::Sin {
                c.scale(&sa).add_unchecked(&s.scale(&ca))
            } else {
                c.scale(&ca).add_unchecked(&s.scale(&sa).neg())
            }
        }
        Elementary::Log => {
            let inv = a.inv().ok_or(AlgebraError::NotInvertible)?;
            let ratio = n.scale(&inv);
            let tail = nilpotent_series(&ratio, |j| {
                if j == 0 {
                    Scalar::zero()
                } else {
                    Scalar::from_rational(-sign(j) * rat(1, j as i64))
                }
            });
            tail.add_unchecked(&SuperPoly::scalar(amb, Scalar::log(a)))
        }
    })
}

/// Taylor expansion of an uninterpreted function at super arguments.
fn applied_of_super(a: &Applied, args: &[SuperPoly], target: &Arc<Ambient>) -> SuperPoly {
    let bodies: Vec<Scalar> = args.iter().map(|x| x.body()).collect();
    let nils: Vec<SuperPoly> = args.iter().map(|x| x.nilpotent_part()).collect();
    let mut out = SuperPoly::zero(target);
    let mut extra = vec![0u32; args.len()];
    fn rec(
        a: &Applied,
        bodies: &[Scalar],
        nils: &[SuperPoly],
        idx: usize,
        extra: &mut Vec<u32>,
        acc: SuperPoly,
        weight: Rational,
        out: &mut SuperPoly,
    ) {
        if idx == nils.len() {
            let derivs = a.derivs.iter().zip(extra.iter()).map(|(d, e)| d + e).collect();
            let f = Scalar::applied(Applied {
                name: a.name.clone(),
                derivs,
                args: bodies.to_vec(),
            });
            *out = out.add_unchecked(&acc.scale(&f.scale(&weight)));
            return;
        }
        let mut power = SuperPoly::one(&acc.ambient);
        let mut j = 0u32;
        loop {
            let term = acc.mul_unchecked(&power);
            if term.is_zero() {
                break;
            }
            extra[idx] = j;
            rec(a, bodies, nils, idx + 1, extra, term, &weight * factorial(j).recip(), out);
            power = power.mul_unchecked(&nils[idx]);
            j += 1;
            if nils[idx].is_zero() {
                break;
            }
        }
        extra[idx] = 0;
    }
    rec(a, &bodies, &nils, 0, &mut extra, SuperPoly::one(target), Rational::one(), &mut out);
    out
}

impl fmt::Display for SuperPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts = self.terms.iter().map(|(b, c)| {
            let mut gens: Vec<String> = b
                .odd
                .iter()
                .map(|&i| self.ambient.odd[i as usize].clone())
                .collect();
            for (i, &e) in b.weil.iter().enumerate() {
                match e {
                    0 => {}
                    1 => gens.push(self.ambient.weil[i].clone()),
                    e => gens.push(format!("{}^{e}", self.ambient.weil[i])),
                }
            }
            let basis = gens.join("*");
            if b.is_one() {
                return c.to_string();
            }
            if c.num_terms() == 1 {
                let (m, r) = c.terms().next().unwrap();
                if m.is_one() {
                    return format_term(r, &basis, false);
                }
                return format!("{c}*{basis}");
            }
            format!("({c})*{basis}")
        });
        write!(f, "{}", join_terms(parts))
    }
}

impl std::ops::Add for &SuperPoly {
    type Output = SuperPoly;
    fn add(self, rhs: &SuperPoly) -> SuperPoly {
        SuperPoly::add(self, rhs).expect("ambient mismatch in +")
    }
}

impl std::ops::Sub for &SuperPoly {
    type Output = SuperPoly;
    fn sub(self, rhs: &SuperPoly) -> SuperPoly {
        SuperPoly::sub(self, rhs).expect("ambient mismatch in -")
    }
}

impl std::ops::Mul for &SuperPoly {
    type Output = SuperPoly;
    fn mul(self, rhs: &SuperPoly) -> SuperPoly {
        SuperPoly::mul(self, rhs).expect("ambient mismatch in *")
    }
}

impl std::ops::Neg for &SuperPoly {
    type Output = SuperPoly;
    fn neg(self) -> SuperPoly {
        SuperPoly::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn amb(even: &[&str], odd: &[&str], weil: &[&str], r: u32) -> Arc<Ambient> {
        Ambient::new(names(even), names(odd), names(weil), r).unwrap()
    }

    #[test]
    fn odd_generators_anticommute() {
        let a = amb(&["t"], &["th1", "th2"], &[], 0);
        let t1 = SuperPoly::gen(&a, "th1").unwrap();
        let t2 = SuperPoly::gen(&a, "th2").unwrap();
        assert_eq!((&t1 * &t2).to_string(), "th1*th2");
        assert_eq!((&t2 * &t1).to_string(), "-th1*th2");
        assert!((&t1 * &t1).is_zero());
    }

    #[test]
    fn odd_square_of_function_multiple_vanishes() {
        let a = amb(&["t"], &["th"], &[], 0);
        let f = SuperPoly::scalar(&a, Scalar::apply("f", vec![Scalar::sym("t")]));
        let x = &f * &SuperPoly::gen(&a, "th").unwrap();
        assert!((&x * &x).is_zero());
    }

    #[test]
    fn weil_truncation() {
        let a = amb(&[], &[], &["e"], 1);
        let x = &SuperPoly::one(&a) + &SuperPoly::gen(&a, "e").unwrap();
        assert_eq!((&x * &x).to_string(), "1 + 2*e");
    }

    #[test]
    fn mismatched_ambients_error() {
        let a = amb(&["t"], &[], &[], 0);
        let b = amb(&["s"], &[], &[], 0);
        let err = SuperPoly::one(&a).mul(&SuperPoly::one(&b)).unwrap_err();
        assert!(matches!(err, AlgebraError::IncompatibleAmbient(..)));
    }

    #[test]
    fn left_derivative_signs() {
        let a = amb(&["t"], &["th1", "th2"], &[], 0);
        let p = &SuperPoly::gen(&a, "th1").unwrap() * &SuperPoly::gen(&a, "th2").unwrap();
        assert_eq!(p.partial_derivative("th1").unwrap().to_string(), "th2");
        assert_eq!(p.partial_derivative("th2").unwrap().to_string(), "-th1");
        let dd = p
            .partial_derivative("th1")
            .unwrap()
            .partial_derivative("th1")
            .unwrap();
        assert!(dd.is_zero());
        assert!(matches!(
            p.partial_derivative("zz"),
            Err(AlgebraError::UnknownGenerator(_))
        ));
    }

    #[test]
    fn even_derivative_passes_through_odd_monomial() {
        let a = amb(&["t"], &["th1"], &[], 0);
        let f1 = Scalar::apply("f1", vec![Scalar::sym("t")]);
        let p = SuperPoly::gen(&a, "th1").unwrap().scale(&f1);
        assert_eq!(p.partial_derivative("t").unwrap().to_string(), "D[f1(t), t]*th1");
    }

    #[test]
    fn substitution_of_odd_generator() {
        let src = amb(&[], &["b"], &[], 0);
        let tgt = amb(&["t"], &["th"], &[], 0);
        let b = SuperPoly::gen(&src, "b").unwrap();
        let poly = &SuperPoly::from_int(&src, 3) + &b;
        let mut asg = BTreeMap::new();
        asg.insert("b".to_string(), SuperPoly::zero(&tgt));
        assert_eq!(poly.substitute(&asg, &tgt).unwrap().to_string(), "3");
        let f = Scalar::apply("f", vec![Scalar::sym("t")]);
        let img = SuperPoly::gen(&tgt, "th").unwrap().scale(&f);
        asg.insert("b".to_string(), img.clone());
        assert_eq!(b.substitute(&asg, &tgt).unwrap(), img);
    }

    #[test]
    fn substitution_rejects_bad_images() {
        let src = amb(&[], &["b"], &[], 0);
        let tgt = amb(&["x"], &["th1", "th2"], &[], 0);
        let b = SuperPoly::gen(&src, "b").unwrap();
        let mut asg = BTreeMap::new();
        asg.insert("b".to_string(), SuperPoly::gen(&tgt, "x").unwrap());
        assert!(matches!(
            b.substitute(&asg, &tgt),
            Err(AlgebraError::NilpotencyViolation { .. })
        ));
        let even_nil = &SuperPoly::gen(&tgt, "th1").unwrap() * &SuperPoly::gen(&tgt, "th2").unwrap();
        asg.insert("b".to_string(), even_nil);
        assert!(matches!(
            b.substitute(&asg, &tgt),
            Err(AlgebraError::NotAHomomorphism { .. })
        ));
    }

    #[test]
    fn identity_substitution() {
        let a = amb(&["t"], &["th1", "th2"], &["e"], 2);
        let p = &(&SuperPoly::gen(&a, "th1").unwrap() * &SuperPoly::gen(&a, "e").unwrap())
            + &SuperPoly::scalar(&a, Scalar::sin(Scalar::sym("t")));
        assert_eq!(p.substitute(&BTreeMap::new(), &a).unwrap(), p);
    }

    #[test]
    fn even_variable_into_nilpotent_shift_is_taylor() {
        let src = amb(&["x"], &[], &[], 0);
        let tgt = amb(&[], &[], &["e"], 2);
        let x = SuperPoly::gen(&src, "x").unwrap();
        let cube = x.pow(3);
        let mut asg = BTreeMap::new();
        asg.insert(
            "x".to_string(),
            &SuperPoly::one(&tgt) + &SuperPoly::gen(&tgt, "e").unwrap(),
        );
        assert_eq!(cube.substitute(&asg, &tgt).unwrap().to_string(), "1 + 3*e + 3*e^2");
        let ex = SuperPoly::scalar(&src, Scalar::exp(Scalar::sym("x")));
        let img = ex.substitute(&asg, &tgt).unwrap();
        assert_eq!(img.to_string(), "exp(1) + exp(1)*e + 1/2*exp(1)*e^2");
    }

    #[test]
    fn weil_image_must_be_nilpotent() {
        let src = amb(&[], &[], &["e"], 1);
        let tgt = amb(&["x"], &[], &[], 0);
        let e = SuperPoly::gen(&src, "e").unwrap();
        let mut asg = BTreeMap::new();
        asg.insert("e".to_string(), SuperPoly::gen(&tgt, "x").unwrap());
        assert!(matches!(
            e.substitute(&asg, &tgt),
            Err(AlgebraError::NilpotencyViolation { .. })
        ));
    }

    #[test]
    fn numeric_evaluation_keeps_structure() {
        let a = amb(&["t"], &["th1"], &[], 0);
        let t = Scalar::sym("t");
        let p = SuperPoly::gen(&a, "th1").unwrap().scale(&t.pow(2).add(&Scalar::one()));
        let mut pt = HashMap::new();
        pt.insert("t".to_string(), rat(2, 1));
        assert_eq!(p.evaluate_numeric(&pt).unwrap().to_string(), "5*th1");
        assert!(SuperPoly::zero(&a).evaluate_numeric(&pt).unwrap().is_zero());
    }

    #[test]
    fn fermion_coefficient_evaluates_to_one() {
        let a = amb(&["t"], &["th1", "th2"], &[], 0);
        let t = Scalar::sym("t");
        let (f1, f2) = (t.clone(), t.pow(2));
        let c = f1.mul(&f2.derivative("t")).sub(&f2.mul(&f1.derivative("t")));
        let p = (&SuperPoly::gen(&a, "th1").unwrap() * &SuperPoly::gen(&a, "th2").unwrap()).scale(&c);
        let mut pt = HashMap::new();
        pt.insert("t".to_string(), rat(1, 1));
        assert_eq!(p.evaluate_numeric(&pt).unwrap().to_string(), "th1*th2");
    }

    #[test]
    fn embed_reorders_odd_generators_with_sign() {
        let a = amb(&[], &["b", "a"], &[], 0);
        let big = amb(&[], &["a", "b"], &[], 0);
        let p = &SuperPoly::gen(&a, "b").unwrap() * &SuperPoly::gen(&a, "a").unwrap();
        assert_eq!(p.to_string(), "b*a");
        assert_eq!(p.embed(&big).unwrap().to_string(), "-a*b");
    }
}
