//! Exact symbolic scalars, the coefficient ring of every super polynomial.
//!
//! A [`Scalar`] is stored in a canonical sum-of-monomials form. Monomials are
//! products of integer powers of [`Atom`]s: plain symbols, elementary function
//! applications, uninterpreted functions such as `f1(t)` together with their
//! partial derivatives, and reciprocals of multi-term sums. Coefficients are
//! exact rationals.
//!
//! Two scalars that are equal after normalization compare equal with `==`.
//! No transcendental identities are applied beyond a handful of local rules
//! (`exp(a)*exp(b) = exp(a+b)`, `log(exp(a)) = a`, parity of `sin`/`cos`,
//! values at zero), so `sin(t)^2 + cos(t)^2` stays as written.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;

/// Builds the rational `num/den`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational approximation of a finite `f64` (the binary value itself).
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("uninterpreted function `{0}` cannot be evaluated")]
    UnboundFunction(String),
    #[error("log of non-positive value {0}")]
    LogDomain(String),
    #[error("division by zero")]
    DivisionByZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Elementary {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Elementary {
    pub fn name(self) -> &'static str {
        match self {
            Elementary::Sin => "sin",
            Elementary::Cos => "cos",
            Elementary::Exp => "exp",
            Elementary::Log => "log",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Elementary::Sin),
            "cos" => Some(Elementary::Cos),
            "exp" => Some(Elementary::Exp),
            "log" => Some(Elementary::Log),
            _ => None,
        }
    }

    fn apply_f64(self, x: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Elementary::Sin => x.sin(),
            Elementary::Cos => x.cos(),
            Elementary::Exp => x.exp(),
            Elementary::Log => {
                if x <= 0.0 {
                    return Err(EvalError::LogDomain(format!("{x}")));
                }
                x.ln()
            }
        })
    }
}

/// An uninterpreted function application `D^derivs f(args)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Applied {
    pub name: String,
    /// Number of partial derivatives taken in each argument slot.
    pub derivs: Vec<u32>,
    pub args: Vec<Scalar>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    Sym(String),
    Apply(Applied),
    Func(Elementary, Box<Scalar>),
    /// `1 / base` for a base with at least two terms and leading coefficient 1.
    Recip(Box<Scalar>),
}

impl Atom {
    fn rank(&self) -> u8 {
        match self {
            Atom::Sym(_) => 0,
            Atom::Apply(_) => 1,
            Atom::Func(..) => 2,
            Atom::Recip(_) => 3,
        }
    }

    pub fn mentions(&self, var: &str) -> bool {
        match self {
            Atom::Sym(s) => s == var,
            Atom::Apply(a) => a.args.iter().any(|x| x.depends_on(var)),
            Atom::Func(_, arg) => arg.depends_on(var),
            Atom::Recip(b) => b.depends_on(var),
        }
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Atom::Sym(s) => {
                out.insert(s.clone());
            }
            Atom::Apply(a) => a.args.iter().for_each(|x| x.collect_symbols(out)),
            Atom::Func(_, arg) => arg.collect_symbols(out),
            Atom::Recip(b) => b.collect_symbols(out),
        }
    }

    fn has_uninterpreted(&self) -> bool {
        match self {
            Atom::Sym(_) => false,
            Atom::Apply(_) => true,
            Atom::Func(_, arg) => arg.has_uninterpreted(),
            Atom::Recip(b) => b.has_uninterpreted(),
        }
    }
}

impl Ord for Atom {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Atom::Sym(a), Atom::Sym(b)) => a.cmp(b),
            (Atom::Apply(a), Atom::Apply(b)) => a
                .name
                .cmp(&b.name)
                // higher derivatives sort first so that `f*D[g]` leads `D[f]*g`
                .then_with(|| b.derivs.cmp(&a.derivs))
                .then_with(|| a.args.cmp(&b.args)),
            (Atom::Func(ka, a), Atom::Func(kb, b)) => ka.cmp(kb).then_with(|| a.cmp(b)),
            (Atom::Recip(a), Atom::Recip(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Atom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A product of atom powers, sorted by atom, with no zero exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    factors: Vec<(Atom, i32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial::default()
    }

    pub fn factors(&self) -> &[(Atom, i32)] {
        &self.factors
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn degree(&self) -> i64 {
        self.factors.iter().map(|(_, e)| *e as i64).sum()
    }

    fn atom(atom: Atom) -> Self {
        Monomial::from_factors(vec![(atom, 1)])
    }

    /// Canonicalizes an arbitrary factor list: sorts, merges repeated atoms,
    /// folds every `exp` factor into a single `exp` atom and drops zero powers.
    pub fn from_factors(mut raw: Vec<(Atom, i32)>) -> Self {
        let mut exp_arg: Option<Scalar> = None;
        raw.retain(|(atom, e)| {
            if let Atom::Func(Elementary::Exp, arg) = atom {
                let term = arg.scale(&Rational::from_integer(BigInt::from(*e)));
                exp_arg = Some(match exp_arg.take() {
                    Some(acc) => acc.add(&term),
                    None => term,
                });
                false
            } else {
                true
            }
        });
        if let Some(arg) = exp_arg {
            if !arg.is_zero() {
                raw.push((Atom::Func(Elementary::Exp, Box::new(arg)), 1));
            }
        }
        raw.sort_by(|a, b| a.0.cmp(&b.0));
        let mut factors: Vec<(Atom, i32)> = Vec::with_capacity(raw.len());
        for (atom, e) in raw {
            match factors.last_mut() {
                Some((last, le)) if *last == atom => *le += e,
                _ => factors.push((atom, e)),
            }
        }
        factors.retain(|(_, e)| *e != 0);
        Monomial { factors }
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        if self.is_one() {
            return other.clone();
        }
        if other.is_one() {
            return self.clone();
        }
        let needs_full = self
            .factors
            .iter()
            .chain(other.factors.iter())
            .filter(|(a, _)| matches!(a, Atom::Func(Elementary::Exp, _)))
            .count()
            > 1;
        if needs_full {
            let mut raw = self.factors.clone();
            raw.extend(other.factors.iter().cloned());
            return Monomial::from_factors(raw);
        }
        // merge of two sorted lists
        let mut out = Vec::with_capacity(self.factors.len() + other.factors.len());
        let (mut i, mut j) = (0, 0);
        while i < self.factors.len() && j < other.factors.len() {
            let (a, ea) = &self.factors[i];
            let (b, eb) = &other.factors[j];
            match a.cmp(b) {
                Ordering::Less => {
                    out.push((a.clone(), *ea));
                    i += 1;
                }
                Ordering::Greater => {
                    out.push((b.clone(), *eb));
                    j += 1;
                }
                Ordering::Equal => {
                    if ea + eb != 0 {
                        out.push((a.clone(), ea + eb));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend(self.factors[i..].iter().cloned());
        out.extend(other.factors[j..].iter().cloned());
        Monomial { factors: out }
    }

    pub fn depends_on(&self, var: &str) -> bool {
        self.factors.iter().any(|(a, _)| a.mentions(var))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.factors.cmp(&other.factors))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical symbolic scalar: a finite sum of rational multiples of monomials.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Scalar {
    terms: BTreeMap<Monomial, Rational>,
}

impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        self.terms.iter().cmp(other.terms.iter())
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::from_rational(Rational::from_integer(BigInt::from(n)))
    }
}

impl From<Rational> for Scalar {
    fn from(r: Rational) -> Self {
        Scalar::from_rational(r)
    }
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::default()
    }

    pub fn one() -> Self {
        Scalar::from(1)
    }

    pub fn from_rational(r: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !r.is_zero() {
            terms.insert(Monomial::one(), r);
        }
        Scalar { terms }
    }

    pub fn sym(name: impl Into<String>) -> Self {
        Scalar::from_monomial(Monomial::atom(Atom::Sym(name.into())), Rational::one())
    }

    pub fn from_monomial(m: Monomial, c: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Scalar { terms }
    }

    /// Uninterpreted function `name(args)`.
    pub fn apply(name: impl Into<String>, args: Vec<Scalar>) -> Self {
        let derivs = vec![0; args.len()];
        Scalar::applied(Applied {
            name: name.into(),
            derivs,
            args,
        })
    }

    pub fn applied(a: Applied) -> Self {
        Scalar::from_monomial(Monomial::atom(Atom::Apply(a)), Rational::one())
    }

    /// Elementary function application with local simplification.
    pub fn func(kind: Elementary, arg: Scalar) -> Self {
        if let Some(c) = arg.as_rational() {
            if c.is_zero() {
                return match kind {
                    Elementary::Sin => Scalar::zero(),
                    Elementary::Cos | Elementary::Exp => Scalar::one(),
                    // log(0) is kept symbolic; evaluation reports the domain error
                    Elementary::Log => Scalar::from_monomial(
                        Monomial::atom(Atom::Func(kind, Box::new(arg))),
                        Rational::one(),
                    ),
                };
            }
            if kind == Elementary::Log && c.is_one() {
                return Scalar::zero();
            }
        }
        match kind {
            Elementary::Log => {
                if let Some(inner) = arg.single_atom() {
                    if let Atom::Func(Elementary::Exp, a) = inner {
                        return (**a).clone();
                    }
                }
            }
            Elementary::Exp => {
                if let Some(Atom::Func(Elementary::Log, a)) = arg.single_atom() {
                    return (**a).clone();
                }
            }
            Elementary::Sin | Elementary::Cos => {
                if arg.leading_coefficient().map_or(false, |c| c.is_negative()) {
                    let flipped = arg.neg();
                    let val = Scalar::from_monomial(
                        Monomial::atom(Atom::Func(kind, Box::new(flipped))),
                        Rational::one(),
                    );
                    return if kind == Elementary::Sin { val.neg() } else { val };
                }
            }
        }
        Scalar::from_monomial(
            Monomial::atom(Atom::Func(kind, Box::new(arg))),
            Rational::one(),
        )
    }

    pub fn sin(arg: Scalar) -> Self {
        Scalar::func(Elementary::Sin, arg)
    }
    pub fn cos(arg: Scalar) -> Self {
        Scalar::func(Elementary::Cos, arg)
    }
    pub fn exp(arg: Scalar) -> Self {
        Scalar::func(Elementary::Exp, arg)
    }
    pub fn log(arg: Scalar) -> Self {
        Scalar::func(Elementary::Log, arg)
    }

    /// The atom if this scalar is exactly one atom to the first power.
    fn single_atom(&self) -> Option<&Atom> {
        if self.terms.len() != 1 {
            return None;
        }
        let (m, c) = self.terms.iter().next()?;
        if c.is_one() && m.factors.len() == 1 && m.factors[0].1 == 1 {
            Some(&m.factors[0].0)
        } else {
            None
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_rational().map_or(false, |c| c.is_one())
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next()?;
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self.single_atom()? {
            Atom::Sym(s) => Some(s),
            _ => None,
        }
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    /// Coefficient of the term printed first (highest in the term order).
    pub fn leading_coefficient(&self) -> Option<&Rational> {
        self.terms.iter().next_back().map(|(_, c)| c)
    }

    /// Constant part (coefficient of the empty monomial).
    pub fn constant_term(&self) -> Rational {
        self.terms
            .get(&Monomial::one())
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        let (big, small) = if self.terms.len() >= other.terms.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut terms = big.terms.clone();
        for (m, c) in &small.terms {
            add_term(&mut terms, m.clone(), c.clone());
        }
        Scalar { terms }
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Scalar {
        Scalar {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn scale(&self, r: &Rational) -> Scalar {
        if r.is_zero() {
            return Scalar::zero();
        }
        Scalar {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * r)).collect(),
        }
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        if self.is_zero() || other.is_zero() {
            return Scalar::zero();
        }
        if let Some(c) = self.as_rational() {
            return other.scale(&c);
        }
        if let Some(c) = other.as_rational() {
            return self.scale(&c);
        }
        let mut terms = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                add_term(&mut terms, ma.mul(mb), ca * cb);
            }
        }
        Scalar { terms }
    }

    /// Multiplicative inverse, if one exists in the representable class.
    pub fn inv(&self) -> Option<Scalar> {
        match self.terms.len() {
            0 => None,
            1 => {
                let (m, c) = self.terms.iter().next()?;
                let factors = m.factors.iter().map(|(a, e)| (a.clone(), -e)).collect();
                Some(Scalar::from_monomial(
                    Monomial::from_factors(factors),
                    c.recip(),
                ))
            }
            _ => {
                let lc = self.leading_coefficient()?.clone();
                let base = self.scale(&lc.recip());
                Some(Scalar::from_monomial(
                    Monomial::atom(Atom::Recip(Box::new(base))),
                    lc.recip(),
                ))
            }
        }
    }

    pub fn div(&self, other: &Scalar) -> Option<Scalar> {
        Some(self.mul(&other.inv()?))
    }

    /// Integer power. Panics on a negative power of zero.
    pub fn pow(&self, n: i32) -> Scalar {
        if n == 0 {
            return Scalar::one();
        }
        if n < 0 {
            return self
                .inv()
                .expect("negative power of zero")
                .pow(-n);
        }
        if self.terms.len() == 1 {
            let (m, c) = self.terms.iter().next().unwrap();
            let factors = m.factors.iter().map(|(a, e)| (a.clone(), e * n)).collect();
            return Scalar::from_monomial(Monomial::from_factors(factors), num_traits::pow(c.clone(), n as usize));
        }
        let mut acc = Scalar::one();
        let mut base = self.clone();
        let mut k = n as u32;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    pub fn depends_on(&self, var: &str) -> bool {
        self.terms.keys().any(|m| m.depends_on(var))
    }

    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        for m in self.terms.keys() {
            for (a, _) in &m.factors {
                a.collect_symbols(out);
            }
        }
    }

    /// True if some uninterpreted function application occurs.
    pub fn has_uninterpreted(&self) -> bool {
        self.terms
            .keys()
            .any(|m| m.factors.iter().any(|(a, _)| a.has_uninterpreted()))
    }

    /// True if the scalar is a polynomial in `vars`: every atom mentioning one of
    /// them is that bare symbol raised to a non-negative power.
    pub fn is_polynomial_in(&self, vars: &[String]) -> bool {
        self.terms.keys().all(|m| {
            m.factors.iter().all(|(a, e)| match a {
                Atom::Sym(s) if vars.contains(s) => *e >= 0,
                other => !vars.iter().any(|v| other.mentions(v)),
            })
        })
    }

    /// True if every atom is a symbol with non-negative exponent.
    pub fn is_polynomial(&self) -> bool {
        self.terms
            .keys()
            .all(|m| m.factors.iter().all(|(a, e)| matches!(a, Atom::Sym(_)) && *e >= 0))
    }

    /// Splits off the dependence on `var` for polynomial-in-`var` scalars:
    /// returns `{power -> coefficient}` with coefficients free of `var`.
    pub fn coefficients_in(&self, var: &str) -> Option<BTreeMap<u32, Scalar>> {
        let mut out: BTreeMap<u32, Scalar> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut power = 0u32;
            let mut rest = Vec::new();
            for (a, e) in &m.factors {
                match a {
                    Atom::Sym(s) if s == var => {
                        if *e < 0 {
                            return None;
                        }
                        power = *e as u32;
                    }
                    other => {
                        if other.mentions(var) {
                            return None;
                        }
                        rest.push((other.clone(), *e));
                    }
                }
            }
            let piece = Scalar::from_monomial(Monomial { factors: rest }, c.clone());
            let slot = out.entry(power).or_default();
            *slot = slot.add(&piece);
        }
        out.retain(|_, v| !v.is_zero());
        Some(out)
    }

    /// Partial derivative with respect to the symbol `var`.
    pub fn derivative(&self, var: &str) -> Scalar {
        let mut out = Scalar::zero();
        for (m, c) in &self.terms {
            if !m.depends_on(var) {
                continue;
            }
            for (idx, (atom, e)) in m.factors.iter().enumerate() {
                if !atom.mentions(var) {
                    continue;
                }
                let d_atom = atom_derivative(atom, var);
                if d_atom.is_zero() {
                    continue;
                }
                let mut rest = m.factors.clone();
                if *e == 1 {
                    rest.remove(idx);
                } else {
                    rest[idx].1 -= 1;
                }
                let rest = Scalar::from_monomial(
                    Monomial::from_factors(rest),
                    c * Rational::from_integer(BigInt::from(*e)),
                );
                out = out.add(&rest.mul(&d_atom));
            }
        }
        out
    }

    pub fn nth_derivative(&self, var: &str, n: u32) -> Scalar {
        (0..n).fold(self.clone(), |acc, _| acc.derivative(var))
    }

    /// Simultaneous substitution of symbols by scalars.
    pub fn subst(&self, map: &HashMap<String, Scalar>) -> Scalar {
        if map.is_empty() || !map.keys().any(|k| self.depends_on(k)) {
            return self.clone();
        }
        self.rebuild(&mut |atom| match atom {
            Atom::Sym(s) => map.get(s).cloned(),
            _ => None,
        })
    }

    /// Replaces every application of the uninterpreted function `name` by
    /// `body` with `params` bound to the call arguments. Derivative markers
    /// become derivatives of `body`.
    pub fn subst_function(&self, name: &str, params: &[String], body: &Scalar) -> Scalar {
        self.rebuild(&mut |atom| match atom {
            Atom::Apply(a) if a.name == name && a.args.len() == params.len() => {
                let mut d = body.clone();
                for (p, k) in params.iter().zip(&a.derivs) {
                    d = d.nth_derivative(p, *k);
                }
                let args: Vec<Scalar> = a
                    .args
                    .iter()
                    .map(|x| x.subst_function(name, params, body))
                    .collect();
                let map = params.iter().cloned().zip(args).collect();
                Some(d.subst(&map))
            }
            _ => None,
        })
    }

    /// Rebuilds the scalar bottom-up. `leaf` may replace an atom outright;
    /// atoms it declines are rebuilt from their rebuilt children.
    fn rebuild(&self, leaf: &mut dyn FnMut(&Atom) -> Option<Scalar>) -> Scalar {
        let mut out = Scalar::zero();
        for (m, c) in &self.terms {
            let mut prod = Scalar::from_rational(c.clone());
            for (atom, e) in &m.factors {
                let val = match leaf(atom) {
                    Some(v) => v,
                    None => match atom {
                        Atom::Sym(_) => Scalar::from_monomial(Monomial::atom(atom.clone()), Rational::one()),
                        Atom::Apply(a) => Scalar::applied(Applied {
                            name: a.name.clone(),
                            derivs: a.derivs.clone(),
                            args: a.args.iter().map(|x| x.rebuild(leaf)).collect(),
                        }),
                        Atom::Func(k, arg) => Scalar::func(*k, arg.rebuild(leaf)),
                        Atom::Recip(b) => b
                            .rebuild(leaf)
                            .inv()
                            .unwrap_or_else(|| Scalar::from_monomial(Monomial::atom(atom.clone()), Rational::one())),
                    },
                };
                prod = prod.mul(&val.pow(*e));
                if prod.is_zero() {
                    break;
                }
            }
            out = out.add(&prod);
        }
        out
    }

    /// Floating-point evaluation.
    pub fn eval_f64(&self, point: &HashMap<String, f64>) -> Result<f64, EvalError> {
        let mut total = 0.0;
        for (m, c) in &self.terms {
            let mut v = rational_to_f64(c);
            for (atom, e) in &m.factors {
                let a = atom_eval_f64(atom, point)?;
                if *e < 0 && a == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                v *= a.powi(*e);
            }
            total += v;
        }
        Ok(total)
    }

    /// Exact evaluation; elementary functions of non-trivial arguments are
    /// evaluated in `f64` and converted exactly.
    pub fn eval_rational(&self, point: &HashMap<String, Rational>) -> Result<Rational, EvalError> {
        let mut total = Rational::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for (atom, e) in &m.factors {
                let a = atom_eval_rational(atom, point)?;
                if *e < 0 {
                    if a.is_zero() {
                        return Err(EvalError::DivisionByZero);
                    }
                    v *= num_traits::pow(a.recip(), (-e) as usize);
                } else {
                    v *= num_traits::pow(a, *e as usize);
                }
            }
            total += v;
        }
        Ok(total)
    }

    /// Replaces every atom by a fresh value and checks the result is zero on
    /// `samples` pseudo-random rational points of the free symbols.
    pub fn vanishes_on_samples(&self, samples: usize, seed: u64) -> Option<bool> {
        use rand::{Rng, SeedableRng};
        if self.is_zero() {
            return Some(true);
        }
        if self.has_uninterpreted() {
            return None;
        }
        let syms: Vec<String> = self.free_symbols().into_iter().collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let exact = !self.has_elementary();
        for _ in 0..samples {
            let point: HashMap<String, Rational> = syms
                .iter()
                .map(|s| (s.clone(), rat(rng.gen_range(-97..=97), rng.gen_range(1..=13))))
                .collect();
            if exact {
                match self.eval_rational(&point) {
                    Ok(v) if v.is_zero() => {}
                    Ok(_) => return Some(false),
                    Err(_) => continue,
                }
            } else {
                let fp: HashMap<String, f64> =
                    point.iter().map(|(k, v)| (k.clone(), rational_to_f64(v))).collect();
                match self.eval_f64(&fp) {
                    Ok(v) if v.abs() <= 1e-9 => {}
                    Ok(_) => return Some(false),
                    Err(_) => continue,
                }
            }
        }
        Some(true)
    }

    fn has_elementary(&self) -> bool {
        fn atom_has(a: &Atom) -> bool {
            match a {
                Atom::Sym(_) => false,
                Atom::Func(..) => true,
                Atom::Apply(x) => x.args.iter().any(|s| s.has_elementary()),
                Atom::Recip(b) => b.has_elementary(),
            }
        }
        self.terms.keys().any(|m| m.factors.iter().any(|(a, _)| atom_has(a)))
    }
}

fn add_term(terms: &mut BTreeMap<Monomial, Rational>, m: Monomial, c: Rational) {
    if c.is_zero() {
        return;
    }
    match terms.entry(m) {
        std::collections::btree_map::Entry::Vacant(v) => {
            v.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut o) => {
            *o.get_mut() += c;
            if o.get().is_zero() {
                o.remove();
            }
        }
    }
}

fn atom_derivative(atom: &Atom, var: &str) -> Scalar {
    match atom {
        Atom::Sym(s) => {
            if s == var {
                Scalar::one()
            } else {
                Scalar::zero()
            }
        }
        Atom::Func(kind, arg) => {
            let inner = arg.derivative(var);
            if inner.is_zero() {
                return Scalar::zero();
            }
            let outer = match kind {
                Elementary::Sin => Scalar::cos((**arg).clone()),
                Elementary::Cos => Scalar::sin((**arg).clone()).neg(),
                Elementary::Exp => Scalar::exp((**arg).clone()),
                Elementary::Log => arg.inv().unwrap_or_else(Scalar::zero),
            };
            outer.mul(&inner)
        }
        Atom::Apply(a) => {
            let mut out = Scalar::zero();
            for (i, arg) in a.args.iter().enumerate() {
                let inner = arg.derivative(var);
                if inner.is_zero() {
                    continue;
                }
                let mut derivs = a.derivs.clone();
                derivs[i] += 1;
                let d = Scalar::applied(Applied {
                    name: a.name.clone(),
                    derivs,
                    args: a.args.clone(),
                });
                out = out.add(&d.mul(&inner));
            }
            out
        }
        Atom::Recip(b) => {
            let inner = b.derivative(var);
            if inner.is_zero() {
                return Scalar::zero();
            }
            let r = Scalar::from_monomial(Monomial::atom(atom.clone()), Rational::one());
            r.pow(2).mul(&inner).neg()
        }
    }
}

fn atom_eval_f64(atom: &Atom, point: &HashMap<String, f64>) -> Result<f64, EvalError> {
    match atom {
        Atom::Sym(s) => point
            .get(s)
            .copied()
            .ok_or_else(|| EvalError::UnboundSymbol(s.clone())),
        Atom::Func(k, arg) => k.apply_f64(arg.eval_f64(point)?),
        Atom::Apply(a) => Err(EvalError::UnboundFunction(a.name.clone())),
        Atom::Recip(b) => {
            let v = b.eval_f64(point)?;
            if v == 0.0 {
                Err(EvalError::DivisionByZero)
            } else {
                Ok(1.0 / v)
            }
        }
    }
}

fn atom_eval_rational(atom: &Atom, point: &HashMap<String, Rational>) -> Result<Rational, EvalError> {
    match atom {
        Atom::Sym(s) => point
            .get(s)
            .cloned()
            .ok_or_else(|| EvalError::UnboundSymbol(s.clone())),
        Atom::Func(k, arg) => {
            let x = arg.eval_rational(point)?;
            if *k == Elementary::Log && !x.is_positive() {
                return Err(EvalError::LogDomain(x.to_string()));
            }
            let v = k.apply_f64(rational_to_f64(&x))?;
            rational_from_f64(v).ok_or_else(|| EvalError::LogDomain(x.to_string()))
        }
        Atom::Apply(a) => Err(EvalError::UnboundFunction(a.name.clone())),
        Atom::Recip(b) => {
            let v = b.eval_rational(point)?;
            if v.is_zero() {
                Err(EvalError::DivisionByZero)
            } else {
                Ok(v.recip())
            }
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Sym(s) => write!(f, "{s}"),
            Atom::Func(k, arg) => write!(f, "{}({arg})", k.name()),
            Atom::Recip(b) => write!(f, "({b})"),
            Atom::Apply(a) => {
                let args = a
                    .args
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(", ");
                let call = format!("{}({args})", a.name);
                if a.derivs.iter().all(|d| *d == 0) {
                    return write!(f, "{call}");
                }
                let vars: Option<Vec<&str>> = a.args.iter().map(|x| x.as_symbol()).collect();
                match vars {
                    Some(vars) if vars.iter().collect::<BTreeSet<_>>().len() == vars.len() => {
                        let mut parts = vec![call];
                        for (v, k) in vars.iter().zip(&a.derivs) {
                            for _ in 0..*k {
                                parts.push(v.to_string());
                            }
                        }
                        write!(f, "D[{}]", parts.join(", "))
                    }
                    _ => {
                        let orders = a
                            .derivs
                            .iter()
                            .map(|d| d.to_string())
                            .collect::<Vec<_>>()
                            .join(",");
                        write!(f, "{}^({orders})({args})", a.name)
                    }
                }
            }
        }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|(a, e)| {
                let recip = matches!(a, Atom::Recip(_));
                match (e, recip) {
                    (1, false) => a.to_string(),
                    (e, false) => format!("{a}^{e}"),
                    (e, true) => format!("{a}^{}", -e),
                }
            })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// Formats `c*m` for a single term; used by both scalar and super printing.
pub(crate) fn format_term(c: &Rational, body: &str, body_is_one: bool) -> String {
    if body_is_one {
        return c.to_string();
    }
    if c.is_one() {
        body.to_string()
    } else if (-c).is_one() {
        format!("-{body}")
    } else {
        format!("{c}*{body}")
    }
}

/// Joins signed term strings with ` + ` / ` - `.
pub(crate) fn join_terms<I: IntoIterator<Item = String>>(parts: I) -> String {
    let mut out = String::new();
    for (i, p) in parts.into_iter().enumerate() {
        if i == 0 {
            out.push_str(&p);
        } else if let Some(rest) = p.strip_prefix('-') {
            out.push_str(" - ");
            out.push_str(rest);
        } else {
            out.push_str(" + ");
            out.push_str(&p);
        }
    }
    out
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts = self
            .terms
            .iter()
            .rev()
            .map(|(m, c)| format_term(c, &m.to_string(), m.is_one()));
        write!(f, "{}", join_terms(parts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> Scalar {
        Scalar::sym("t")
    }

    #[test]
    fn like_terms_merge_and_cancel() {
        let a = t().add(&Scalar::from(2)).add(&t());
        assert_eq!(a.to_string(), "2*t + 2");
        assert!(a.sub(&a).is_zero());
    }

    #[test]
    fn polynomial_product_and_order() {
        let x = Scalar::sym("x");
        let p = x.add(&Scalar::one()).pow(2);
        assert_eq!(p.to_string(), "x^2 + 2*x + 1");
    }

    #[test]
    fn derivative_tables() {
        let s = Scalar::sin(t().pow(2));
        assert_eq!(s.derivative("t").to_string(), "2*t*cos(t^2)");
        let e = Scalar::exp(t()).mul(&Scalar::exp(t()));
        assert_eq!(e.to_string(), "exp(2*t)");
        assert_eq!(e.derivative("t").to_string(), "2*exp(2*t)");
        let l = Scalar::log(t());
        assert_eq!(l.derivative("t").to_string(), "t^-1");
    }

    #[test]
    fn exp_merge_cancels() {
        let e = Scalar::exp(t()).mul(&Scalar::exp(t().neg()));
        assert!(e.is_one());
        assert_eq!(Scalar::log(Scalar::exp(t())), t());
    }

    #[test]
    fn sin_is_odd_cos_is_even() {
        assert_eq!(Scalar::sin(t().neg()), Scalar::sin(t()).neg());
        assert_eq!(Scalar::cos(t().neg()), Scalar::cos(t()));
        assert!(Scalar::sin(Scalar::zero()).is_zero());
    }

    #[test]
    fn uninterpreted_derivatives_print_with_d() {
        let f1 = Scalar::apply("f1", vec![t()]);
        let f2 = Scalar::apply("f2", vec![t()]);
        let w = f1.mul(&f2.derivative("t")).sub(&f2.mul(&f1.derivative("t")));
        assert_eq!(w.to_string(), "f1(t)*D[f2(t), t] - D[f1(t), t]*f2(t)");
    }

    #[test]
    fn function_instantiation_uses_derivatives() {
        let f = Scalar::apply("f", vec![t()]);
        let expr = f.derivative("t").mul(&f);
        let body = t().pow(2);
        let out = expr.subst_function("f", &["t".to_string()], &body);
        assert_eq!(out.to_string(), "2*t^3");
    }

    #[test]
    fn reciprocal_of_sum_roundtrips() {
        let b = t().add(&Scalar::one());
        let r = b.inv().unwrap();
        assert!(r.mul(&b).sub(&Scalar::one()).vanishes_on_samples(8, 1).unwrap());
        let mut pt = HashMap::new();
        pt.insert("t".to_string(), rat(1, 1));
        assert_eq!(r.eval_rational(&pt).unwrap(), rat(1, 2));
    }

    #[test]
    fn log_domain_error() {
        let mut pt = HashMap::new();
        pt.insert("t".to_string(), rat(-1, 1));
        assert!(matches!(
            Scalar::log(t()).eval_rational(&pt),
            Err(EvalError::LogDomain(_))
        ));
    }

    #[test]
    fn coefficients_in_variable() {
        let a = Scalar::sym("a");
        let p = a.mul(&t().pow(2)).add(&t()).add(&a);
        let c = p.coefficients_in("t").unwrap();
        assert_eq!(c[&0], a);
        assert_eq!(c[&1], Scalar::one());
        assert_eq!(c[&2], a);
        assert!(Scalar::sin(t()).coefficients_in("t").is_none());
    }
}
