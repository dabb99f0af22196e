//! Probe spaces `ℝ^(k|q) × D^m_r`, maps between them, and plots of field
//! spaces.
//!
//! A probe map `Σ' → Σ` is stored contravariantly: every generator of the
//! target `Σ` gets an image in the function algebra of the source `Σ'`. A
//! plot of a field space over `M` by `Σ` is one element of the algebra of
//! `Σ × M` per field component; pulling back along a probe map substitutes
//! the probe generators and leaves spacetime coordinates alone.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::random::{random_element, random_polynomial, sample_rng, SampleRng};
use crate::scalar::{Rational, Scalar};
use crate::superalgebra::{AlgebraError, Ambient, Parity, Substitution, SuperPoly};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeError {
    #[error("invalid probe: {0}")]
    InvalidProbe(String),
    #[error("probe mismatch: expected {expected}, found {found}")]
    ProbeMismatch { expected: String, found: String },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("expected {expected} components, found {found}")]
    ComponentCount { expected: usize, found: usize },
    #[error("component `{component}` must be {expected}")]
    Parity { component: String, expected: Parity },
    #[error("constraint `{constraint} = 0` fails: residual {residual}")]
    ConstraintViolated { constraint: String, residual: String },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// `ℝ^(k|q) × D^m_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProbeSpace {
    pub k: usize,
    pub q: usize,
    pub m: usize,
    pub r: u32,
}

impl ProbeSpace {
    pub fn new(k: usize, q: usize, m: usize, r: u32) -> Result<Self, ProbeError> {
        if (m == 0) != (r == 0) {
            return Err(ProbeError::InvalidProbe(format!(
                "m = {m} and r = {r} must vanish together"
            )));
        }
        Ok(ProbeSpace { k, q, m, r })
    }

    pub fn cartesian(k: usize) -> Self {
        ProbeSpace { k, q: 0, m: 0, r: 0 }
    }

    pub fn super_cartesian(k: usize, q: usize) -> Self {
        ProbeSpace { k, q, m: 0, r: 0 }
    }

    pub fn point() -> Self {
        ProbeSpace::cartesian(0)
    }

    pub fn even_names(&self) -> Vec<String> {
        (1..=self.k).map(|i| format!("s{i}")).collect()
    }

    pub fn odd_names(&self) -> Vec<String> {
        (1..=self.q).map(|i| format!("th{i}")).collect()
    }

    pub fn weil_names(&self) -> Vec<String> {
        (1..=self.m).map(|i| format!("e{i}")).collect()
    }

    /// Generators in the order used by [`ProbeMap`] images.
    pub fn generator_names(&self) -> Vec<String> {
        let mut v = self.even_names();
        v.extend(self.odd_names());
        v.extend(self.weil_names());
        v
    }

    pub fn generator_parity(&self, idx: usize) -> Parity {
        if idx >= self.k && idx < self.k + self.q {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    pub fn ambient(&self) -> Arc<Ambient> {
        Ambient::new(self.even_names(), self.odd_names(), self.weil_names(), self.r)
            .expect("canonical probe names are distinct")
    }

    pub fn is_purely_even(&self) -> bool {
        self.q == 0 && self.m == 0
    }
}

impl fmt::Display for ProbeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R({}|{})", self.k, self.q)?;
        if self.m > 0 {
            write!(f, " * D({},{})", self.m, self.r)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldComponent {
    pub name: String,
    pub parity: Parity,
}

/// Trivial field bundle over a coordinate patch, with optional algebraic
/// constraints on the even components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpaceDescriptor {
    spacetime: Vec<String>,
    components: Vec<FieldComponent>,
    constraints: Vec<Scalar>,
}

impl FieldSpaceDescriptor {
    pub fn new(
        spacetime: Vec<String>,
        components: Vec<FieldComponent>,
        constraints: Vec<Scalar>,
    ) -> Result<Arc<Self>, ProbeError> {
        let mut seen = std::collections::HashSet::new();
        for n in spacetime.iter().chain(components.iter().map(|c| &c.name)) {
            if !seen.insert(n.clone()) {
                return Err(ProbeError::InvalidDescriptor(format!("duplicate name `{n}`")));
            }
        }
        for c in &constraints {
            for s in c.free_symbols() {
                match components.iter().find(|x| x.name == s) {
                    Some(x) if x.parity == Parity::Even => {}
                    Some(_) => {
                        return Err(ProbeError::InvalidDescriptor(format!(
                            "constraint mentions odd component `{s}`"
                        )))
                    }
                    None => {
                        return Err(ProbeError::InvalidDescriptor(format!(
                            "constraint mentions `{s}`, which is not a field component"
                        )))
                    }
                }
            }
        }
        Ok(Arc::new(FieldSpaceDescriptor {
            spacetime,
            components,
            constraints,
        }))
    }

    pub fn spacetime(&self) -> &[String] {
        &self.spacetime
    }

    pub fn components(&self) -> &[FieldComponent] {
        &self.components
    }

    pub fn constraints(&self) -> &[Scalar] {
        &self.constraints
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    /// Algebra of `Σ × M`: probe generators plus spacetime coordinates.
    pub fn plot_ambient(&self, probe: &ProbeSpace) -> Result<Arc<Ambient>, ProbeError> {
        let mut even = probe.even_names();
        even.extend(self.spacetime.iter().cloned());
        Ambient::new(even, probe.odd_names(), probe.weil_names(), probe.r).map_err(|e| {
            ProbeError::InvalidDescriptor(format!("spacetime names clash with probe names: {e}"))
        })
    }

    /// Plot set of the probe itself: `y(Σ)` with one component per generator.
    pub fn representable(probe: &ProbeSpace) -> Arc<Self> {
        let components = probe
            .generator_names()
            .into_iter()
            .enumerate()
            .map(|(i, name)| FieldComponent {
                name,
                parity: probe.generator_parity(i),
            })
            .collect();
        Arc::new(FieldSpaceDescriptor {
            spacetime: Vec::new(),
            components,
            constraints: Vec::new(),
        })
    }
}

/// Probe map `source → target`, stored as target generators ↦ source algebra.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeMap {
    source: ProbeSpace,
    target: ProbeSpace,
    images: Vec<SuperPoly>,
}

impl ProbeMap {
    pub fn new(
        source: ProbeSpace,
        target: ProbeSpace,
        images: Vec<SuperPoly>,
    ) -> Result<Self, ProbeError> {
        let names = target.generator_names();
        if images.len() != names.len() {
            return Err(ProbeError::ComponentCount {
                expected: names.len(),
                found: images.len(),
            });
        }
        let src = source.ambient();
        let images = images
            .into_iter()
            .map(|p| p.embed(&src))
            .collect::<Result<Vec<_>, _>>()?;
        let map = ProbeMap {
            source,
            target,
            images,
        };
        Substitution::new(&target.ambient(), &map.assignment(), &src)?;
        Ok(map)
    }

    pub fn identity(p: ProbeSpace) -> Self {
        let amb = p.ambient();
        let images = p
            .generator_names()
            .iter()
            .map(|n| SuperPoly::gen(&amb, n).expect("own generator"))
            .collect();
        ProbeMap {
            source: p,
            target: p,
            images,
        }
    }

    pub fn source(&self) -> ProbeSpace {
        self.source
    }

    pub fn target(&self) -> ProbeSpace {
        self.target
    }

    pub fn images(&self) -> &[SuperPoly] {
        &self.images
    }

    pub fn assignment(&self) -> BTreeMap<String, SuperPoly> {
        self.target
            .generator_names()
            .into_iter()
            .zip(self.images.iter().cloned())
            .collect()
    }

    /// `self ∘ inner`, where `inner: A → self.source`.
    pub fn compose(&self, inner: &ProbeMap) -> Result<ProbeMap, ProbeError> {
        if inner.target != self.source {
            return Err(ProbeError::ProbeMismatch {
                expected: self.source.to_string(),
                found: inner.target.to_string(),
            });
        }
        let amb = inner.source.ambient();
        let mid = self.source.ambient();
        let hom = Substitution::new(&mid, &inner.assignment(), &amb)?;
        let images = self
            .images
            .iter()
            .map(|p| hom.apply(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ProbeMap {
            source: inner.source,
            target: self.target,
            images,
        })
    }

    /// The map viewed as a plot of the representable `y(target)` by `source`.
    pub fn as_plot(&self) -> PlotHom {
        PlotHom {
            probe: self.source,
            descriptor: FieldSpaceDescriptor::representable(&self.target),
            components: self.images.clone(),
        }
    }

    /// Inverse of [`ProbeMap::as_plot`].
    pub fn from_plot(plot: &PlotHom, target: ProbeSpace) -> Result<ProbeMap, ProbeError> {
        if *plot.descriptor != *FieldSpaceDescriptor::representable(&target) {
            return Err(ProbeError::InvalidDescriptor(
                "plot is not of the representable descriptor".into(),
            ));
        }
        ProbeMap::new(plot.probe, target, plot.components.clone())
    }
}

/// A `Σ`-plot of a field space: one element of `𝒪(Σ × M)` per component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotHom {
    probe: ProbeSpace,
    descriptor: Arc<FieldSpaceDescriptor>,
    components: Vec<SuperPoly>,
}

impl PlotHom {
    pub fn new(
        probe: ProbeSpace,
        descriptor: Arc<FieldSpaceDescriptor>,
        components: Vec<SuperPoly>,
    ) -> Result<Self, ProbeError> {
        let plot = PlotHom::new_unchecked(probe, descriptor, components)?;
        plot.check_constraints()?;
        Ok(plot)
    }

    /// Checks parity and ambient but skips the constraint equations.
    pub fn new_unchecked(
        probe: ProbeSpace,
        descriptor: Arc<FieldSpaceDescriptor>,
        components: Vec<SuperPoly>,
    ) -> Result<Self, ProbeError> {
        if components.len() != descriptor.components.len() {
            return Err(ProbeError::ComponentCount {
                expected: descriptor.components.len(),
                found: components.len(),
            });
        }
        let amb = descriptor.plot_ambient(&probe)?;
        let components = components
            .into_iter()
            .map(|p| p.embed(&amb))
            .collect::<Result<Vec<_>, _>>()?;
        for (c, p) in descriptor.components.iter().zip(&components) {
            if !p.has_parity(c.parity) {
                return Err(ProbeError::Parity {
                    component: c.name.clone(),
                    expected: c.parity,
                });
            }
        }
        Ok(PlotHom {
            probe,
            descriptor,
            components,
        })
    }

    pub fn zero(probe: ProbeSpace, descriptor: Arc<FieldSpaceDescriptor>) -> Result<Self, ProbeError> {
        let amb = descriptor.plot_ambient(&probe)?;
        let n = descriptor.components.len();
        PlotHom::new(probe, descriptor, vec![SuperPoly::zero(&amb); n])
    }

    pub fn probe(&self) -> ProbeSpace {
        self.probe
    }

    pub fn descriptor(&self) -> &Arc<FieldSpaceDescriptor> {
        &self.descriptor
    }

    pub fn components(&self) -> &[SuperPoly] {
        &self.components
    }

    pub fn component(&self, name: &str) -> Option<&SuperPoly> {
        self.descriptor.component_index(name).map(|i| &self.components[i])
    }

    pub fn ambient(&self) -> Arc<Ambient> {
        self.descriptor
            .plot_ambient(&self.probe)
            .expect("validated at construction")
    }

    pub fn check_constraints(&self) -> Result<(), ProbeError> {
        if self.descriptor.constraints.is_empty() {
            return Ok(());
        }
        let amb = self.descriptor.plot_ambient(&self.probe)?;
        let names: Vec<String> = self.descriptor.components.iter().map(|c| c.name.clone()).collect();
        let src = Ambient::new(names.clone(), vec![], vec![], 0)?;
        let assignment: BTreeMap<String, SuperPoly> = names
            .iter()
            .zip(&self.components)
            .filter(|(n, _)| self.descriptor.constraints.iter().any(|c| c.depends_on(n)))
            .map(|(n, p)| (n.clone(), p.clone()))
            .collect();
        for c in &self.descriptor.constraints {
            let residual = SuperPoly::scalar(&src, c.clone()).substitute(&assignment, &amb)?;
            if !residual.equals(&SuperPoly::zero(&amb), true) {
                return Err(ProbeError::ConstraintViolated {
                    constraint: c.to_string(),
                    residual: residual.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Restriction to the reduced points: all odd and Weil generators set to 0.
    pub fn reduced(&self) -> Result<PlotHom, ProbeError> {
        let point = ProbeSpace::cartesian(self.probe.k);
        let amb = point.ambient();
        let mut images: Vec<SuperPoly> = point
            .even_names()
            .iter()
            .map(|n| SuperPoly::gen(&amb, n).expect("own generator"))
            .collect();
        images.extend(std::iter::repeat(SuperPoly::zero(&amb)).take(self.probe.q + self.probe.m));
        pullback_plot(self, &ProbeMap::new(point, self.probe, images)?)
    }
}

impl fmt::Display for PlotHom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .descriptor
            .components
            .iter()
            .zip(&self.components)
            .map(|(c, p)| format!("{} = {}", c.name, p))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// `𝒳(f)(φ) = φ ∘ (f × id_M)`.
pub fn pullback_plot(plot: &PlotHom, f: &ProbeMap) -> Result<PlotHom, ProbeError> {
    if f.target != plot.probe {
        return Err(ProbeError::ProbeMismatch {
            expected: plot.probe.to_string(),
            found: f.target.to_string(),
        });
    }
    let src = plot.descriptor.plot_ambient(&plot.probe)?;
    let tgt = plot.descriptor.plot_ambient(&f.source)?;
    let assignment = f
        .assignment()
        .into_iter()
        .map(|(n, p)| Ok((n, p.embed(&tgt)?)))
        .collect::<Result<BTreeMap<_, _>, AlgebraError>>()?;
    let hom = Substitution::new(&src, &assignment, &tgt)?;
    let components = plot
        .components
        .iter()
        .map(|p| hom.apply(p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PlotHom {
        probe: f.source,
        descriptor: plot.descriptor.clone(),
        components,
    })
}

/// The natural transformation `y(Σ) → 𝒳` induced by a plot: its component at
/// `Σ'` sends a probe map `f: Σ' → Σ` to `𝒳(f)(φ)`.
pub struct YonedaTransformation<'a> {
    plot: &'a PlotHom,
}

impl<'a> YonedaTransformation<'a> {
    pub fn of(plot: &'a PlotHom) -> Self {
        YonedaTransformation { plot }
    }

    pub fn component(&self, f: &ProbeMap) -> Result<PlotHom, ProbeError> {
        pullback_plot(self.plot, f)
    }
}

/// `h ↦ h_Σ(id_Σ)` applied to the transformation induced by `plot`.
pub fn yoneda_roundtrip(plot: &PlotHom) -> Result<PlotHom, ProbeError> {
    YonedaTransformation::of(plot).component(&ProbeMap::identity(plot.probe))
}

/// Checks that `g ∘ f` computed as probe-map composition matches `g`
/// viewed as a representable plot pulled back along `f`.
pub fn representable_agrees(g: &ProbeMap, f: &ProbeMap) -> Result<bool, ProbeError> {
    let via_plot = pullback_plot(&g.as_plot(), f)?;
    let via_compose = g.compose(f)?.as_plot();
    Ok(via_plot == via_compose)
}

// ---------------------------------------------------------------------------
// random probes and plots

pub fn random_probe(rng: &mut SampleRng, max_k: usize, max_q: usize, allow_weil: bool) -> ProbeSpace {
    let k = rng.gen_range(0..=max_k);
    let q = rng.gen_range(0..=max_q);
    let (m, r) = if allow_weil && rng.gen_bool(0.3) {
        (1, rng.gen_range(1..=2))
    } else {
        (0, 0)
    };
    ProbeSpace { k, q, m, r }
}

/// Random probe map `source → target`.
///
/// Even generators go to even elements, odd generators to odd elements and
/// Weil generators into the ideal generated by the source Weil generators
/// (or 0), which keeps every truncation relation intact.
pub fn random_probe_map(rng: &mut SampleRng, source: ProbeSpace, target: ProbeSpace) -> ProbeMap {
    let amb = source.ambient();
    let mut images = Vec::new();
    for _ in 0..target.k {
        let body = random_polynomial(rng, &source.even_names(), 2, 2);
        let nil = random_element(rng, &amb, Some(Parity::Even), 2).nilpotent_part();
        images.push(&SuperPoly::scalar(&amb, body) + &nil);
    }
    for _ in 0..target.q {
        images.push(random_element(rng, &amb, Some(Parity::Odd), 3));
    }
    for _ in 0..target.m {
        let img = if source.m > 0 && source.r <= target.r {
            let mut acc = SuperPoly::zero(&amb);
            for name in source.weil_names() {
                let e = SuperPoly::gen(&amb, &name).expect("own generator");
                let c = random_element(rng, &amb, Some(Parity::Even), 2);
                acc = &acc + &(&c * &e);
            }
            acc
        } else {
            SuperPoly::zero(&amb)
        };
        images.push(img);
    }
    ProbeMap::new(source, target, images).expect("generated images respect all relations")
}

/// Random plot with components of bounded degree; constraints are ignored.
pub fn random_plot(
    rng: &mut SampleRng,
    probe: ProbeSpace,
    descriptor: &Arc<FieldSpaceDescriptor>,
) -> Result<PlotHom, ProbeError> {
    let amb = descriptor.plot_ambient(&probe)?;
    let comps = descriptor
        .components
        .iter()
        .map(|c| random_element(rng, &amb, Some(c.parity), 3))
        .collect();
    PlotHom::new_unchecked(probe, descriptor.clone(), comps)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctorFailure {
    pub sample: usize,
    pub law: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FunctorReport {
    pub samples: usize,
    pub failures: Vec<FunctorFailure>,
}

impl FunctorReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub type PullbackFn = dyn Fn(&PlotHom, &ProbeMap) -> Result<PlotHom, ProbeError> + Sync;

/// Random identity and composition checks of [`pullback_plot`].
pub fn check_functoriality(
    descriptor: &Arc<FieldSpaceDescriptor>,
    samples: usize,
    seed: u64,
) -> FunctorReport {
    check_functoriality_with(descriptor, samples, seed, &pullback_plot)
}

/// Same as [`check_functoriality`] but with a caller-supplied pullback, so
/// that a deliberately broken implementation can be shown to be caught.
pub fn check_functoriality_with(
    descriptor: &Arc<FieldSpaceDescriptor>,
    samples: usize,
    seed: u64,
    pull: &PullbackFn,
) -> FunctorReport {
    let failures: Vec<FunctorFailure> = (0..samples)
        .into_par_iter()
        .flat_map_iter(|i| functor_sample(descriptor, seed, i, pull))
        .collect();
    FunctorReport { samples, failures }
}

fn functor_sample(
    descriptor: &Arc<FieldSpaceDescriptor>,
    seed: u64,
    i: usize,
    pull: &PullbackFn,
) -> Vec<FunctorFailure> {
    let mut rng = sample_rng(seed, i as u64);
    let mut out = Vec::new();
    let fail = |law, detail: String| FunctorFailure {
        sample: i,
        law,
        detail,
    };
    let p1 = random_probe(&mut rng, 2, 3, true);
    let p2 = random_probe(&mut rng, 2, 3, true);
    let p3 = random_probe(&mut rng, 2, 3, true);
    let plot = match random_plot(&mut rng, p1, descriptor) {
        Ok(p) => p,
        Err(e) => return vec![fail("setup", e.to_string())],
    };
    let f = random_probe_map(&mut rng, p2, p1);
    let g = random_probe_map(&mut rng, p3, p2);
    match pull(&plot, &ProbeMap::identity(p1)) {
        Ok(p) if p == plot => {}
        Ok(p) => out.push(fail("identity", format!("plot {plot} pulled back to {p}"))),
        Err(e) => out.push(fail("identity", e.to_string())),
    }
    let stepwise = pull(&plot, &f).and_then(|x| pull(&x, &g));
    let direct = f.compose(&g).and_then(|fg| pull(&plot, &fg));
    match (stepwise, direct) {
        (Ok(a), Ok(b)) if a == b => {}
        (Ok(a), Ok(b)) => out.push(fail(
            "composition",
            format!("plot {plot}: stepwise {a} vs composite {b}"),
        )),
        (Err(e), _) | (_, Err(e)) => out.push(fail("composition", e.to_string())),
    }
    out
}

// ---------------------------------------------------------------------------
// gluing

/// Axis-aligned open box `Π (lo_i, hi_i)` with rational corners.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenBox {
    pub lo: Vec<Rational>,
    pub hi: Vec<Rational>,
}

impl OpenBox {
    pub fn new(lo: Vec<Rational>, hi: Vec<Rational>) -> Result<Self, GluingError> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(GluingError::InvalidBox);
        }
        Ok(OpenBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[Rational]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (a, b))| a < x && x < b)
    }

    pub fn intersects(&self, other: &OpenBox) -> bool {
        (0..self.dim()).all(|i| {
            std::cmp::max(&self.lo[i], &other.lo[i]) < std::cmp::min(&self.hi[i], &other.hi[i])
        })
    }
}

impl fmt::Display for OpenBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| format!("({a}, {b})"))
            .collect();
        write!(f, "{}", parts.join(" x "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GluingError {
    #[error("invalid box")]
    InvalidBox,
    #[error("no pieces to glue")]
    Empty,
    #[error("box dimension {found} does not match probe dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("pieces {0} and {1} disagree on their overlap in component `{2}`")]
    Obstruction(usize, usize, String),
    #[error("the boxes do not cover the reference box: point ({0}) is missed")]
    NotCovering(String),
    #[error("pieces {0} and {1} are plots of different field spaces or probes")]
    Mismatch(usize, usize),
}

/// Restriction of a plot to an open box of its probe's even coordinates.
pub fn restrict(plot: &PlotHom, b: &OpenBox) -> Result<(OpenBox, PlotHom), GluingError> {
    if b.dim() != plot.probe.k {
        return Err(GluingError::DimensionMismatch {
            expected: plot.probe.k,
            found: b.dim(),
        });
    }
    Ok((b.clone(), plot.clone()))
}

/// Glues plots given on open boxes covering `reference`.
///
/// Each piece carries the polynomial expression it restricts. Pieces must
/// agree on every nonempty pairwise overlap; since the reference box is
/// connected and polynomials agreeing on an open set are equal, the glued
/// plot is then the common expression.
pub fn glue_plots(pieces: &[(OpenBox, PlotHom)], reference: &OpenBox) -> Result<PlotHom, GluingError> {
    let (_, first) = pieces.first().ok_or(GluingError::Empty)?;
    let k = first.probe.k;
    if reference.dim() != k {
        return Err(GluingError::DimensionMismatch {
            expected: k,
            found: reference.dim(),
        });
    }
    for (i, (b, p)) in pieces.iter().enumerate() {
        if b.dim() != k {
            return Err(GluingError::DimensionMismatch {
                expected: k,
                found: b.dim(),
            });
        }
        if p.probe != first.probe || p.descriptor != first.descriptor {
            return Err(GluingError::Mismatch(0, i));
        }
    }
    check_cover(pieces.iter().map(|(b, _)| b), reference)?;
    let relevant: Vec<usize> = (0..pieces.len())
        .filter(|&i| pieces[i].0.intersects(reference))
        .collect();
    for (a, &i) in relevant.iter().enumerate() {
        for &j in &relevant[a + 1..] {
            if !pieces[i].0.intersects(&pieces[j].0) {
                continue;
            }
            let (pi, pj) = (&pieces[i].1, &pieces[j].1);
            for (c, (x, y)) in pi.components.iter().zip(&pj.components).enumerate() {
                if !x.equals(y, false) {
                    return Err(GluingError::Obstruction(
                        i,
                        j,
                        pi.descriptor.components[c].name.clone(),
                    ));
                }
            }
        }
    }
    Ok(pieces[relevant[0]].1.clone())
}

/// Exact coverage test: every cell of the arrangement cut out by the box
/// walls is represented by a wall point or a midpoint.
fn check_cover<'a>(
    boxes: impl Iterator<Item = &'a OpenBox> + Clone,
    reference: &OpenBox,
) -> Result<(), GluingError> {
    let k = reference.dim();
    let mut axes: Vec<Vec<Rational>> = Vec::with_capacity(k);
    for i in 0..k {
        let (lo, hi) = (&reference.lo[i], &reference.hi[i]);
        let mut walls: Vec<Rational> = vec![lo.clone(), hi.clone()];
        for b in boxes.clone() {
            for w in [&b.lo[i], &b.hi[i]] {
                if lo < w && w < hi {
                    walls.push(w.clone());
                }
            }
        }
        walls.sort();
        walls.dedup();
        let mut pts: Vec<Rational> = Vec::new();
        for w in walls.windows(2) {
            pts.push((&w[0] + &w[1]) / Rational::from_integer(2.into()));
            if &w[1] < hi {
                pts.push(w[1].clone());
            }
        }
        axes.push(pts);
    }
    let mut idx = vec![0usize; k];
    loop {
        let p: Vec<Rational> = (0..k).map(|i| axes[i][idx[i]].clone()).collect();
        if !boxes.clone().any(|b| b.contains(&p)) {
            let s: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            return Err(GluingError::NotCovering(s.join(", ")));
        }
        let mut d = 0;
        loop {
            if d == k {
                return Ok(());
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Random two-box cover of `(0,1)^k` overlapping in the first coordinate.
pub fn random_two_box_cover(rng: &mut SampleRng, k: usize) -> (OpenBox, OpenBox, OpenBox) {
    use crate::scalar::rat;
    let reference = OpenBox::new(vec![rat(0, 1); k], vec![rat(1, 1); k]).expect("unit box");
    let mut a = reference.clone();
    let mut b = reference.clone();
    if k > 0 {
        let cut = rat(rng.gen_range(2..=8), 10);
        let width = rat(rng.gen_range(1..=2), 20);
        a.hi[0] = &cut + &width;
        b.lo[0] = &cut - &width;
        // widen orthogonal directions a little so the boxes stick out
        for i in 1..k {
            a.lo[i] = rat(-rng.gen_range(1..=5), 50);
            b.hi[i] = rat(11, 10);
        }
    }
    (reference, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn fermion() -> Arc<FieldSpaceDescriptor> {
        FieldSpaceDescriptor::new(
            vec!["t".into()],
            vec![FieldComponent {
                name: "psi".into(),
                parity: Parity::Odd,
            }],
            vec![],
        )
        .unwrap()
    }

    fn f(name: &str) -> Scalar {
        Scalar::apply(name, vec![Scalar::sym("t")])
    }

    #[test]
    fn pullback_along_theta_inclusion() {
        let d = fermion();
        let p2 = ProbeSpace::super_cartesian(0, 2);
        let amb = d.plot_ambient(&p2).unwrap();
        let th1 = SuperPoly::gen(&amb, "th1").unwrap();
        let th2 = SuperPoly::gen(&amb, "th2").unwrap();
        let psi = &th1.scale(&f("f1")) + &th2.scale(&f("f2"));
        let plot = PlotHom::new(p2, d.clone(), vec![psi]).unwrap();
        let p1 = ProbeSpace::super_cartesian(0, 1);
        let a1 = p1.ambient();
        let map = ProbeMap::new(
            p1,
            p2,
            vec![SuperPoly::gen(&a1, "th1").unwrap(), SuperPoly::zero(&a1)],
        )
        .unwrap();
        let pulled = pullback_plot(&plot, &map).unwrap();
        assert_eq!(pulled.to_string(), "psi = f1(t)*th1");
        assert_eq!(pullback_plot(&plot, &ProbeMap::identity(p2)).unwrap(), plot);
    }

    #[test]
    fn parity_is_enforced() {
        let d = fermion();
        let p = ProbeSpace::super_cartesian(0, 1);
        let amb = d.plot_ambient(&p).unwrap();
        let err = PlotHom::new(p, d, vec![SuperPoly::scalar(&amb, Scalar::sym("t"))]).unwrap_err();
        assert!(matches!(err, ProbeError::Parity { .. }));
    }

    #[test]
    fn odd_field_has_only_the_zero_point() {
        let d = fermion();
        let p = ProbeSpace::point();
        let amb = d.plot_ambient(&p).unwrap();
        assert!(PlotHom::new(p, d.clone(), vec![SuperPoly::zero(&amb)]).is_ok());
        assert!(PlotHom::new(p, d, vec![SuperPoly::scalar(&amb, Scalar::sym("t"))]).is_err());
    }

    #[test]
    fn circle_constraint() {
        let x = Scalar::sym("x");
        let y = Scalar::sym("y");
        let c = x.pow(2).add(&y.pow(2)).sub(&Scalar::one());
        let d = FieldSpaceDescriptor::new(
            vec![],
            vec![
                FieldComponent { name: "x".into(), parity: Parity::Even },
                FieldComponent { name: "y".into(), parity: Parity::Even },
            ],
            vec![c],
        )
        .unwrap();
        let p = ProbeSpace::cartesian(1);
        let amb = d.plot_ambient(&p).unwrap();
        let s = Scalar::sym("s1");
        let ok = PlotHom::new(
            p,
            d.clone(),
            vec![SuperPoly::scalar(&amb, Scalar::cos(s.clone())), SuperPoly::scalar(&amb, Scalar::sin(s.clone()))],
        );
        assert!(ok.is_ok());
        let bad = PlotHom::new(p, d, vec![SuperPoly::scalar(&amb, s.clone()), SuperPoly::scalar(&amb, s)]);
        assert!(matches!(bad, Err(ProbeError::ConstraintViolated { .. })));
    }

    #[test]
    fn functor_laws_and_fault_injection() {
        let d = fermion();
        assert!(check_functoriality(&d, 40, 3).passed());
        assert_eq!(check_functoriality(&d, 0, 3), FunctorReport::default());
        let broken = |p: &PlotHom, m: &ProbeMap| {
            let out = pullback_plot(p, m)?;
            let comps = out.components().iter().map(|c| c.scale(&Scalar::from(2))).collect();
            PlotHom::new_unchecked(out.probe(), out.descriptor().clone(), comps)
        };
        let report = check_functoriality_with(&d, 20, 3, &broken);
        assert!(!report.passed());
        assert!(report.failures.iter().any(|f| f.law == "identity"));
    }

    #[test]
    fn yoneda_and_representables() {
        let mut rng = sample_rng(11, 0);
        for _ in 0..20 {
            let (a, b, c) = (
                random_probe(&mut rng, 2, 2, true),
                random_probe(&mut rng, 2, 2, true),
                random_probe(&mut rng, 2, 2, true),
            );
            let g = random_probe_map(&mut rng, b, c);
            let f = random_probe_map(&mut rng, a, b);
            assert!(representable_agrees(&g, &f).unwrap());
            let plot = g.as_plot();
            assert_eq!(yoneda_roundtrip(&plot).unwrap(), plot);
            assert_eq!(ProbeMap::from_plot(&plot, c).unwrap(), g);
        }
        let z = PlotHom::zero(ProbeSpace::super_cartesian(1, 1), fermion()).unwrap();
        assert_eq!(yoneda_roundtrip(&z).unwrap(), z);
    }

    #[test]
    fn gluing_cases() {
        let d = FieldSpaceDescriptor::new(
            vec!["t".into()],
            vec![FieldComponent { name: "u".into(), parity: Parity::Even }],
            vec![],
        )
        .unwrap();
        let p = ProbeSpace::cartesian(1);
        let amb = d.plot_ambient(&p).unwrap();
        let u = SuperPoly::scalar(&amb, Scalar::sym("s1").pow(2).add(&Scalar::sym("t")));
        let plot = PlotHom::new(p, d.clone(), vec![u.clone()]).unwrap();
        let reference = OpenBox::new(vec![rat(0, 1)], vec![rat(1, 1)]).unwrap();
        let a = OpenBox::new(vec![rat(-1, 1)], vec![rat(2, 3)]).unwrap();
        let b = OpenBox::new(vec![rat(1, 2)], vec![rat(2, 1)]).unwrap();
        let pieces = vec![restrict(&plot, &a).unwrap(), restrict(&plot, &b).unwrap()];
        assert_eq!(glue_plots(&pieces, &reference).unwrap(), plot);
        assert_eq!(glue_plots(&[(reference.clone(), plot.clone())], &reference).unwrap(), plot);

        let other = PlotHom::new(p, d, vec![&u + &SuperPoly::one(&amb)]).unwrap();
        let bad = vec![(a.clone(), plot.clone()), (b, other)];
        assert_eq!(
            glue_plots(&bad, &reference).unwrap_err(),
            GluingError::Obstruction(0, 1, "u".into())
        );
        let gap = OpenBox::new(vec![rat(2, 3)], vec![rat(2, 1)]).unwrap();
        let holes = vec![(a, plot.clone()), (gap, plot)];
        assert!(matches!(glue_plots(&holes, &reference), Err(GluingError::NotCovering(_))));
    }

    #[test]
    fn reduced_plot_forgets_fermions() {
        let d = fermion();
        let p = ProbeSpace::super_cartesian(1, 2);
        let mut rng = sample_rng(5, 0);
        let plot = random_plot(&mut rng, p, &d).unwrap();
        let red = plot.reduced().unwrap();
        assert_eq!(red.probe(), ProbeSpace::cartesian(1));
        assert!(red.components()[0].is_zero());
    }
}
