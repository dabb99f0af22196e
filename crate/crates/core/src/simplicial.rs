//! Finite truncations of simplicial sets, horn filling, nerves, and the gauge
//! groupoids of 2-form and Yang–Mills fields.
//!
//! A [`SimplicialTruncation`] serializes to JSON as
//!
//! ```json
//! {
//!   "levels": [["v0", "v1"], ["s0 v0", "s0 v1", "e"]],
//!   "faces": [[[], []], [[0, 0], [1, 1], [1, 0]]],
//!   "degeneracies": [[[0], [1]], [[], [], []]]
//! }
//! ```
//!
//! `levels[n]` lists the labels of the `n`-simplices. `faces[n][x]` holds the
//! level `n − 1` indices of `d_0 x, …, d_n x` (empty at level 0), and
//! `degeneracies[n][x]` holds the level `n + 1` indices of `s_0 x, …, s_n x`
//! (empty at the top level).

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forms::{Convention, Form, FormError};
use crate::probes::ProbeMap;
use crate::random::{nonzero_rational, small_rational, SampleRng};
use crate::scalar::{rat, EvalError, Rational, Scalar};
use crate::superalgebra::{AlgebraError, SuperPoly};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimplicialError {
    #[error("malformed truncation: {0}")]
    Malformed(String),
    #[error("malformed horn: {0}")]
    MalformedHorn(String),
    #[error("group sample is not closed: missing {0}")]
    NotClosed(String),
    #[error("matrix is not invertible: {0}")]
    Singular(String),
    #[error("ill-typed gauge data: {0}")]
    IllTyped(String),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

// ---------------------------------------------------------------------------
// truncations

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplicialTruncation {
    pub levels: Vec<Vec<String>>,
    pub faces: Vec<Vec<Vec<usize>>>,
    pub degeneracies: Vec<Vec<Vec<usize>>>,
}

impl SimplicialTruncation {
    /// Truncation dimension `N`.
    pub fn dim(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn len(&self, n: usize) -> usize {
        self.levels.get(n).map_or(0, Vec::len)
    }

    pub fn label(&self, n: usize, x: usize) -> &str {
        &self.levels[n][x]
    }

    pub fn find(&self, n: usize, label: &str) -> Option<usize> {
        self.levels.get(n)?.iter().position(|l| l == label)
    }

    /// `d_i x` for `x` at level `n`.
    pub fn d(&self, n: usize, i: usize, x: usize) -> usize {
        self.faces[n][x][i]
    }

    /// `s_i x` for `x` at level `n`.
    pub fn s(&self, n: usize, i: usize, x: usize) -> usize {
        self.degeneracies[n][x][i]
    }

    /// Checks that every map is total and lands in range.
    pub fn validate(&self) -> Result<(), SimplicialError> {
        let top = self.levels.len();
        if top == 0 {
            return Err(SimplicialError::Malformed("no levels".into()));
        }
        if self.faces.len() != top || self.degeneracies.len() != top {
            return Err(SimplicialError::Malformed(format!(
                "{top} levels but {} face and {} degeneracy tables",
                self.faces.len(),
                self.degeneracies.len()
            )));
        }
        for n in 0..top {
            if self.faces[n].len() != self.len(n) || self.degeneracies[n].len() != self.len(n) {
                return Err(SimplicialError::Malformed(format!("level {n}: table sizes differ from label count")));
            }
            let face_count = if n == 0 { 0 } else { n + 1 };
            let degen_count = if n + 1 == top { 0 } else { n + 1 };
            for x in 0..self.len(n) {
                let (fs, ds) = (&self.faces[n][x], &self.degeneracies[n][x]);
                if fs.len() != face_count || ds.len() != degen_count {
                    return Err(SimplicialError::Malformed(format!(
                        "`{}` at level {n} has {} faces and {} degeneracies, expected {face_count} and {degen_count}",
                        self.levels[n][x],
                        fs.len(),
                        ds.len()
                    )));
                }
                if n > 0 && fs.iter().any(|&f| f >= self.len(n - 1)) {
                    return Err(SimplicialError::Malformed(format!(
                        "`{}` at level {n} has a face out of range",
                        self.levels[n][x]
                    )));
                }
                if n + 1 < top && ds.iter().any(|&s| s >= self.len(n + 1)) {
                    return Err(SimplicialError::Malformed(format!(
                        "`{}` at level {n} has a degeneracy out of range",
                        self.levels[n][x]
                    )));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (n, level) in self.levels.iter().enumerate() {
            for l in level {
                if !seen.insert((n, l)) {
                    return Err(SimplicialError::Malformed(format!("duplicate label `{l}` at level {n}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truncation serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SimplicialError> {
        let x: SimplicialTruncation =
            serde_json::from_str(s).map_err(|e| SimplicialError::Malformed(e.to_string()))?;
        x.validate()?;
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub identity: String,
    pub level: usize,
    pub simplex: String,
    pub lhs: String,
    pub rhs: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} fails on `{}` at level {}: `{}` vs `{}`",
            self.identity, self.simplex, self.level, self.lhs, self.rhs
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdentityReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn identities_at(x: &SimplicialTruncation, n: usize, a: usize) -> (usize, Vec<Violation>) {
    let top = x.dim();
    let mut checked = 0;
    let mut out = Vec::new();
    let mut expect = |identity: String, lvl: usize, lhs: usize, rhs: usize| {
        checked += 1;
        if lhs != rhs {
            out.push(Violation {
                identity,
                level: n,
                simplex: x.label(n, a).to_string(),
                lhs: x.label(lvl, lhs).to_string(),
                rhs: x.label(lvl, rhs).to_string(),
            });
        }
    };
    if n >= 2 {
        for j in 1..=n {
            for i in 0..j {
                let lhs = x.d(n - 1, i, x.d(n, j, a));
                let rhs = x.d(n - 1, j - 1, x.d(n, i, a));
                expect(format!("d{i} d{j} = d{} d{i}", j - 1), n - 2, lhs, rhs);
            }
        }
    }
    if n < top {
        for j in 0..=n {
            let y = x.s(n, j, a);
            expect(format!("d{j} s{j} = id"), n, x.d(n + 1, j, y), a);
            expect(format!("d{} s{j} = id", j + 1), n, x.d(n + 1, j + 1, y), a);
            for i in 0..j {
                let rhs = x.s(n - 1, j - 1, x.d(n, i, a));
                expect(format!("d{i} s{j} = s{} d{i}", j - 1), n, x.d(n + 1, i, y), rhs);
            }
            for i in j + 2..=n + 1 {
                let rhs = x.s(n - 1, j, x.d(n, i - 1, a));
                expect(format!("d{i} s{j} = s{j} d{}", i - 1), n, x.d(n + 1, i, y), rhs);
            }
        }
        if n + 1 < top {
            for j in 0..=n {
                for i in 0..=j {
                    let lhs = x.s(n + 1, i, x.s(n, j, a));
                    let rhs = x.s(n + 1, j + 1, x.s(n, i, a));
                    expect(format!("s{i} s{j} = s{} s{i}", j + 1), n + 2, lhs, rhs);
                }
            }
        }
    }
    (checked, out)
}

/// Exhaustively checks the simplicial identities on every simplex.
pub fn check_simplicial_identities(x: &SimplicialTruncation) -> IdentityReport {
    if let Err(e) = x.validate() {
        return IdentityReport {
            checked: 0,
            violations: vec![Violation {
                identity: "well-formed".into(),
                level: 0,
                simplex: String::new(),
                lhs: e.to_string(),
                rhs: String::new(),
            }],
        };
    }
    let work: Vec<(usize, usize)> = (0..=x.dim()).flat_map(|n| (0..x.len(n)).map(move |a| (n, a))).collect();
    let results: Vec<(usize, Vec<Violation>)> = work.par_iter().map(|&(n, a)| identities_at(x, n, a)).collect();
    let mut report = IdentityReport {
        checked: 0,
        violations: Vec::new(),
    };
    for (c, v) in results {
        report.checked += c;
        report.violations.extend(v);
    }
    report
}

// ---------------------------------------------------------------------------
// horns

/// `Λⁿ_k` given by the faces `d_i` for `i ≠ k`, in increasing `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horn {
    pub n: usize,
    pub k: usize,
    pub faces: Vec<usize>,
}

impl Horn {
    /// The prescribed `d_i`, if `i ≠ k`.
    pub fn face(&self, i: usize) -> Option<usize> {
        match i.cmp(&self.k) {
            std::cmp::Ordering::Less => self.faces.get(i).copied(),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => self.faces.get(i - 1).copied(),
        }
    }

    pub fn from_labels(x: &SimplicialTruncation, n: usize, k: usize, labels: &[&str]) -> Result<Horn, SimplicialError> {
        if n == 0 {
            return Err(SimplicialError::MalformedHorn("horns start at dimension 1".into()));
        }
        let faces = labels
            .iter()
            .map(|l| {
                x.find(n - 1, l).ok_or_else(|| {
                    SimplicialError::MalformedHorn(format!("no simplex labelled `{l}` at level {}", n - 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Horn { n, k, faces })
    }

    pub fn describe(&self, x: &SimplicialTruncation) -> String {
        let parts: Vec<String> = (0..=self.n)
            .map(|i| match self.face(i) {
                Some(f) => format!("d{i} = {}", x.label(self.n - 1, f)),
                None => format!("d{i} = ?"),
            })
            .collect();
        format!("Λ^{}_{} [{}]", self.n, self.k, parts.join(", "))
    }
}

fn check_horn(x: &SimplicialTruncation, h: &Horn) -> Result<(), SimplicialError> {
    let bad = |m: String| Err(SimplicialError::MalformedHorn(m));
    if h.n == 0 || h.n > x.dim() {
        return bad(format!("dimension {} outside 1..={}", h.n, x.dim()));
    }
    if h.k > h.n {
        return bad(format!("missing face {} exceeds {}", h.k, h.n));
    }
    if h.faces.len() != h.n {
        return bad(format!("expected {} faces, got {}", h.n, h.faces.len()));
    }
    if let Some(f) = h.faces.iter().find(|&&f| f >= x.len(h.n - 1)) {
        return bad(format!("face index {f} out of range"));
    }
    if h.n >= 2 {
        for j in 0..=h.n {
            for i in 0..j {
                let (Some(fi), Some(fj)) = (h.face(i), h.face(j)) else {
                    continue;
                };
                let a = x.d(h.n - 1, i, fj);
                let b = x.d(h.n - 1, j - 1, fi);
                if a != b {
                    return bad(format!(
                        "faces {i} and {j} disagree: d{i} of `{}` is `{}` but d{} of `{}` is `{}`",
                        x.label(h.n - 1, fj),
                        x.label(h.n - 2, a),
                        j - 1,
                        x.label(h.n - 1, fi),
                        x.label(h.n - 2, b)
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Simplices filling the horn, in the order they are listed in the level.
/// Without `all` only the first filler is returned.
pub fn kan_fill(x: &SimplicialTruncation, h: &Horn, all: bool) -> Result<Vec<usize>, SimplicialError> {
    x.validate()?;
    fill_valid(x, h, all)
}

fn fill_valid(x: &SimplicialTruncation, h: &Horn, all: bool) -> Result<Vec<usize>, SimplicialError> {
    check_horn(x, h)?;
    let matches = |s: &usize| (0..=h.n).all(|i| h.face(i).is_none_or(|f| x.d(h.n, i, *s) == f));
    let it = (0..x.len(h.n)).filter(matches);
    Ok(if all { it.collect() } else { it.take(1).collect() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KanReport {
    pub n: usize,
    pub horns: usize,
    pub filled: usize,
    pub unique: usize,
    pub unfilled: Vec<Horn>,
}

impl KanReport {
    pub fn passed(&self) -> bool {
        self.unfilled.is_empty()
    }

    pub fn all_unique(&self) -> bool {
        self.passed() && self.unique == self.horns
    }
}

/// All compatible horns of dimension `n`, every missing face `k`.
pub fn enumerate_horns(x: &SimplicialTruncation, n: usize) -> Vec<Horn> {
    if n == 0 || n > x.dim() {
        return Vec::new();
    }
    fn rec(x: &SimplicialTruncation, n: usize, k: usize, i: usize, chosen: &mut Vec<usize>, out: &mut Vec<Horn>) {
        if i > n {
            out.push(Horn {
                n,
                k,
                faces: chosen.clone(),
            });
            return;
        }
        if i == k {
            return rec(x, n, k, i + 1, chosen, out);
        }
        for f in 0..x.len(n - 1) {
            let partial = Horn {
                n,
                k,
                faces: chosen.clone(),
            };
            // compatibility with every earlier face
            let ok = n < 2
                || (0..i).all(|j| {
                    partial.face(j).is_none_or(|fj| x.d(n - 1, j, f) == x.d(n - 1, i - 1, fj))
                });
            if ok {
                chosen.push(f);
                rec(x, n, k, i + 1, chosen, out);
                chosen.pop();
            }
        }
    }
    (0..=n)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut out = Vec::new();
            rec(x, n, k, 0, &mut Vec::new(), &mut out);
            out
        })
        .collect()
}

/// Tries every compatible horn of dimension `n`.
pub fn check_kan(x: &SimplicialTruncation, n: usize) -> Result<KanReport, SimplicialError> {
    x.validate()?;
    let horns = enumerate_horns(x, n);
    let results: Vec<(Horn, usize)> = horns
        .into_par_iter()
        .map(|h| {
            let count = fill_valid(x, &h, true).map(|v| v.len()).unwrap_or(0);
            (h, count)
        })
        .collect();
    let mut report = KanReport {
        n,
        horns: results.len(),
        filled: 0,
        unique: 0,
        unfilled: Vec::new(),
    };
    for (h, c) in results {
        match c {
            0 => report.unfilled.push(h),
            1 => {
                report.filled += 1;
                report.unique += 1;
            }
            _ => report.filled += 1,
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// nerves and fixtures

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrow {
    pub label: String,
    pub source: usize,
    pub target: usize,
}

/// A finite groupoid; `compose[(f, g)]` is "first `f`, then `g`".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroupoid {
    pub objects: Vec<String>,
    pub arrows: Vec<Arrow>,
    pub compose: HashMap<(usize, usize), usize>,
    pub identities: Vec<usize>,
}

impl FiniteGroupoid {
    /// Nerve truncated at level `dim`: composable strings of arrows.
    pub fn nerve(&self, dim: usize) -> SimplicialTruncation {
        let mut strings: Vec<Vec<Vec<usize>>> = vec![(0..self.objects.len()).map(|o| vec![o]).collect()];
        for n in 1..=dim {
            let mut level = Vec::new();
            if n == 1 {
                level = (0..self.arrows.len()).map(|a| vec![a]).collect();
            } else {
                for s in &strings[n - 1] {
                    let end = self.arrows[*s.last().unwrap()].target;
                    for (a, arr) in self.arrows.iter().enumerate() {
                        if arr.source == end {
                            let mut t = s.clone();
                            t.push(a);
                            level.push(t);
                        }
                    }
                }
            }
            strings.push(level);
        }
        let index: Vec<HashMap<Vec<usize>, usize>> = strings
            .iter()
            .map(|l| l.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect())
            .collect();
        let comp = |f: usize, g: usize| self.compose[&(f, g)];
        let vertex = |s: &[usize], i: usize| {
            if i == 0 {
                self.arrows[s[0]].source
            } else {
                self.arrows[s[i - 1]].target
            }
        };
        let mut faces = vec![vec![Vec::new(); self.objects.len()]];
        let mut degeneracies = Vec::new();
        let mut levels = vec![self.objects.clone()];
        for n in 1..=dim {
            let mut fl = Vec::new();
            let mut labels = Vec::new();
            for s in &strings[n] {
                labels.push(s.iter().map(|&a| self.arrows[a].label.as_str()).collect::<Vec<_>>().join("|"));
                let f: Vec<usize> = if n == 1 {
                    vec![self.arrows[s[0]].target, self.arrows[s[0]].source]
                } else {
                    (0..=n)
                        .map(|i| {
                            let t: Vec<usize> = if i == 0 {
                                s[1..].to_vec()
                            } else if i == n {
                                s[..n - 1].to_vec()
                            } else {
                                let mut t = s[..i - 1].to_vec();
                                t.push(comp(s[i - 1], s[i]));
                                t.extend_from_slice(&s[i + 1..]);
                                t
                            };
                            index[n - 1][&t]
                        })
                        .collect()
                };
                fl.push(f);
            }
            faces.push(fl);
            levels.push(labels);
        }
        for n in 0..=dim {
            let dl: Vec<Vec<usize>> = if n == dim {
                vec![Vec::new(); strings[n].len()]
            } else if n == 0 {
                (0..self.objects.len()).map(|o| vec![index[1][&vec![self.identities[o]]]]).collect()
            } else {
                strings[n]
                    .iter()
                    .map(|s| {
                        (0..=n)
                            .map(|i| {
                                let mut t = s[..i].to_vec();
                                t.push(self.identities[vertex(s, i)]);
                                t.extend_from_slice(&s[i..]);
                                index[n + 1][&t]
                            })
                            .collect()
                    })
                    .collect()
            };
            degeneracies.push(dl);
        }
        SimplicialTruncation {
            levels,
            faces,
            degeneracies,
        }
    }
}

/// Finite group given by its multiplication table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroup {
    pub labels: Vec<String>,
    pub table: Vec<Vec<usize>>,
    pub identity: usize,
}

impl FiniteGroup {
    pub fn cyclic(n: usize) -> Self {
        FiniteGroup {
            labels: (0..n).map(|i| i.to_string()).collect(),
            table: (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect(),
            identity: 0,
        }
    }

    /// Permutations of three letters in one-line notation, `(στ)(i) = σ(τ(i))`.
    pub fn symmetric3() -> Self {
        let mut perms = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    if a != b && b != c && a != c {
                        perms.push([a, b, c]);
                    }
                }
            }
        }
        let pos = |p: [usize; 3]| perms.iter().position(|q| *q == p).unwrap();
        let table = perms
            .iter()
            .map(|s| perms.iter().map(|t| pos([s[t[0]], s[t[1]], s[t[2]]])).collect())
            .collect();
        FiniteGroup {
            labels: perms.iter().map(|p| format!("{}{}{}", p[0], p[1], p[2])).collect(),
            table,
            identity: 0,
        }
    }

    pub fn order(&self) -> usize {
        self.labels.len()
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn as_groupoid(&self) -> FiniteGroupoid {
        let n = self.order();
        FiniteGroupoid {
            objects: vec!["*".into()],
            arrows: self
                .labels
                .iter()
                .map(|l| Arrow {
                    label: l.clone(),
                    source: 0,
                    target: 0,
                })
                .collect(),
            compose: (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| ((a, b), self.mul(a, b))).collect(),
            identities: vec![self.identity],
        }
    }

    pub fn nerve(&self, dim: usize) -> SimplicialTruncation {
        self.as_groupoid().nerve(dim)
    }
}

/// Sub-simplicial set of `Δ[p]` on the vertex sequences accepted by `keep`
/// (which must be closed under faces and degeneracies).
pub fn sub_simplex(p: usize, dim: usize, keep: impl Fn(&[usize]) -> bool) -> SimplicialTruncation {
    let mut seqs: Vec<Vec<Vec<usize>>> = Vec::new();
    for n in 0..=dim {
        let mut level = Vec::new();
        let mut cur = vec![0usize; n + 1];
        loop {
            if cur.windows(2).all(|w| w[0] <= w[1]) && keep(&cur) {
                level.push(cur.clone());
            }
            let mut i = n + 1;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                cur[i] += 1;
                if cur[i] <= p {
                    break;
                }
                cur[i] = 0;
                if i == 0 {
                    i = usize::MAX;
                    break;
                }
            }
            if i == usize::MAX {
                break;
            }
        }
        seqs.push(level);
    }
    let index: Vec<HashMap<Vec<usize>, usize>> =
        seqs.iter().map(|l| l.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()).collect();
    let label = |s: &[usize]| s.iter().map(|v| v.to_string()).collect::<String>();
    SimplicialTruncation {
        levels: seqs.iter().map(|l| l.iter().map(|s| label(s)).collect()).collect(),
        faces: (0..=dim)
            .map(|n| {
                seqs[n]
                    .iter()
                    .map(|s| {
                        if n == 0 {
                            return Vec::new();
                        }
                        (0..=n)
                            .map(|i| {
                                let mut t = s.clone();
                                t.remove(i);
                                index[n - 1][&t]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect(),
        degeneracies: (0..=dim)
            .map(|n| {
                seqs[n]
                    .iter()
                    .map(|s| {
                        if n == dim {
                            return Vec::new();
                        }
                        (0..=n)
                            .map(|i| {
                                let mut t = s.clone();
                                t.insert(i, s[i]);
                                index[n + 1][&t]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    }
}

/// The standard simplex `Δ[p]` truncated at `dim`.
pub fn standard_simplex(p: usize, dim: usize) -> SimplicialTruncation {
    sub_simplex(p, dim, |_| true)
}

/// The horn `Λ²₁ ⊂ Δ[2]` as a simplicial set: two composable edges and no
/// composite.
pub fn spine_fixture(dim: usize) -> SimplicialTruncation {
    sub_simplex(2, dim, |s| s.iter().all(|&v| v <= 1) || s.iter().all(|&v| v >= 1))
}

// ---------------------------------------------------------------------------
// 2-form gauge fields

#[derive(Debug, Clone)]
pub struct TwoFormSpec {
    pub objects: Vec<Form>,
    pub one_forms: Vec<Form>,
    pub zero_forms: Vec<Form>,
}

/// Truncated groupoid of 2-forms `B`, gauge transformations `B ↦ B + dA`, and
/// 2-cells `(A₁, A₂) ↦ A₁ + A₂ + df`. Level 3 is degenerate.
#[derive(Debug, Clone)]
pub struct TwoFormGroupoid {
    pub truncation: SimplicialTruncation,
    pub objects: Vec<Form>,
    /// `(source object, A)` per 1-cell.
    pub edges: Vec<(usize, Form)>,
    /// `(source object, A₁, A₂, f)` per 2-cell.
    pub cells: Vec<(usize, Form, Form, Form)>,
    /// Number of objects given as generators.
    pub generator_objects: usize,
    /// `0` followed by the 1-form generators.
    pub generator_one_forms: Vec<Form>,
}

struct TwoFormBuilder {
    objects: Vec<Form>,
    object_index: HashMap<String, usize>,
    edges: Vec<(usize, Form)>,
    edge_index: HashMap<(usize, String), usize>,
    cells: Vec<(usize, Form, Form, Form)>,
    cell_index: HashMap<(usize, String, String, String), usize>,
}

impl TwoFormBuilder {
    fn object(&mut self, b: Form) -> usize {
        let key = b.to_string();
        if let Some(&i) = self.object_index.get(&key) {
            return i;
        }
        self.objects.push(b);
        self.object_index.insert(key, self.objects.len() - 1);
        self.objects.len() - 1
    }

    fn target(&self, e: usize) -> Result<Form, SimplicialError> {
        let (b, a) = &self.edges[e];
        Ok(self.objects[*b].add(&a.exterior_derivative())?)
    }

    fn edge(&mut self, b: usize, a: Form) -> Result<usize, SimplicialError> {
        let key = (b, a.to_string());
        if let Some(&i) = self.edge_index.get(&key) {
            return Ok(i);
        }
        self.edges.push((b, a));
        let e = self.edges.len() - 1;
        self.edge_index.insert(key, e);
        let t = self.target(e)?;
        self.object(t);
        Ok(e)
    }

    fn cell(&mut self, b: usize, a1: Form, a2: Form, f: Form) -> Result<usize, SimplicialError> {
        let key = (b, a1.to_string(), a2.to_string(), f.to_string());
        if let Some(&i) = self.cell_index.get(&key) {
            return Ok(i);
        }
        let e2 = self.edge(b, a1.clone())?;
        let mid = self.object(self.target(e2)?);
        self.edge(mid, a2.clone())?;
        let composite = a1.add(&a2)?.add(&f.exterior_derivative())?;
        self.edge(b, composite)?;
        self.cells.push((b, a1, a2, f));
        self.cell_index.insert(key, self.cells.len() - 1);
        Ok(self.cells.len() - 1)
    }
}

fn require_degree(forms: &[Form], degree: usize, what: &str, coords: &[String]) -> Result<(), SimplicialError> {
    for f in forms {
        if f.degree() != degree {
            return Err(SimplicialError::IllTyped(format!("{what} `{f}` has degree {}, expected {degree}", f.degree())));
        }
        if f.coords() != coords {
            return Err(SimplicialError::IllTyped(format!("{what} `{f}` lives on different coordinates")));
        }
        if f.terms().any(|(_, c)| c.terms().any(|(_, s)| !s.is_polynomial())) {
            return Err(SimplicialError::IllTyped(format!("{what} `{f}` has non-polynomial coefficients")));
        }
    }
    Ok(())
}

/// Builds the truncation generated by the given objects and gauge parameters.
/// Level 2 holds a 2-cell for every generator object `B`, every pair of
/// 1-form generators (including `0`) and every 0-form label (including `0`),
/// plus the degenerate 2-cells.
pub fn build_two_form_groupoid(spec: &TwoFormSpec) -> Result<TwoFormGroupoid, SimplicialError> {
    let first = spec
        .objects
        .first()
        .ok_or_else(|| SimplicialError::IllTyped("at least one object is required".into()))?;
    let amb = first.ambient().clone();
    let coords = first.coords().to_vec();
    require_degree(&spec.objects, 2, "object", &coords)?;
    require_degree(&spec.one_forms, 1, "gauge parameter", &coords)?;
    require_degree(&spec.zero_forms, 0, "gauge-of-gauge parameter", &coords)?;
    let mut gens1 = vec![Form::zero(&amb, &coords, 1)];
    for a in &spec.one_forms {
        if !gens1.iter().any(|g| g == a) {
            gens1.push(a.clone());
        }
    }
    let mut gens0 = vec![Form::zero(&amb, &coords, 0)];
    for f in &spec.zero_forms {
        if !gens0.iter().any(|g| g == f) {
            gens0.push(f.clone());
        }
    }
    let mut b = TwoFormBuilder {
        objects: Vec::new(),
        object_index: HashMap::new(),
        edges: Vec::new(),
        edge_index: HashMap::new(),
        cells: Vec::new(),
        cell_index: HashMap::new(),
    };
    for o in &spec.objects {
        b.object(o.clone());
    }
    let generator_objects = b.objects.len();
    for o in 0..generator_objects {
        for a1 in &gens1 {
            for a2 in &gens1 {
                for f in &gens0 {
                    b.cell(o, a1.clone(), a2.clone(), f.clone())?;
                }
            }
        }
    }
    let zero1 = Form::zero(&amb, &coords, 1);
    let zero0 = Form::zero(&amb, &coords, 0);
    let identities: Vec<usize> = (0..b.objects.len())
        .map(|o| b.edge(o, zero1.clone()))
        .collect::<Result<_, _>>()?;
    let edge_count = b.edges.len();
    let mut edge_degen = Vec::with_capacity(edge_count);
    for e in 0..edge_count {
        let (src, a) = b.edges[e].clone();
        let s0 = b.cell(src, zero1.clone(), a.clone(), zero0.clone())?;
        let s1 = b.cell(src, a, zero1.clone(), zero0.clone())?;
        edge_degen.push(vec![s0, s1]);
    }
    if b.edges.len() != edge_count || b.objects.len() != identities.len() {
        return Err(SimplicialError::Malformed("degenerate cells left the generated set".into()));
    }
    let edge_of = |bb: &TwoFormBuilder, src: usize, a: &Form| bb.edge_index[&(src, a.to_string())];
    let mut cell_faces = Vec::new();
    for (src, a1, a2, f) in &b.cells {
        let e2 = edge_of(&b, *src, a1);
        let mid = b.object_index[&b.target(e2)?.to_string()];
        let e0 = edge_of(&b, mid, a2);
        let e1 = edge_of(&b, *src, &a1.add(a2)?.add(&f.exterior_derivative())?);
        cell_faces.push(vec![e0, e1, e2]);
    }
    // level 3: degeneracies of 2-cells, identified by their faces
    let face_of_degenerate = |c: usize, j: usize, i: usize| -> usize {
        if i < j {
            edge_degen[cell_faces[c][i]][j - 1]
        } else if i == j || i == j + 1 {
            c
        } else {
            edge_degen[cell_faces[c][i - 1]][j]
        }
    };
    let mut top_labels = Vec::new();
    let mut top_faces: Vec<Vec<usize>> = Vec::new();
    let mut top_index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut cell_degen = Vec::new();
    let cell_labels: Vec<String> = b
        .cells
        .iter()
        .map(|(src, a1, a2, f)| format!("({a1}, {a2}; {f}) @ {}", b.objects[*src]))
        .collect();
    for c in 0..b.cells.len() {
        let mut ds = Vec::new();
        for j in 0..3 {
            let fs: Vec<usize> = (0..4).map(|i| face_of_degenerate(c, j, i)).collect();
            let idx = *top_index.entry(fs.clone()).or_insert_with(|| {
                top_labels.push(format!("s{j}[{}]", cell_labels[c]));
                top_faces.push(fs);
                top_labels.len() - 1
            });
            ds.push(idx);
        }
        cell_degen.push(ds);
    }
    let truncation = SimplicialTruncation {
        levels: vec![
            b.objects.iter().map(|o| o.to_string()).collect(),
            b.edges.iter().map(|(s, a)| format!("{a} @ {}", b.objects[*s])).collect(),
            cell_labels,
            top_labels,
        ],
        faces: vec![
            vec![Vec::new(); b.objects.len()],
            b.edges
                .iter()
                .enumerate()
                .map(|(e, (s, _))| Ok(vec![b.object_index[&b.target(e)?.to_string()], *s]))
                .collect::<Result<_, SimplicialError>>()?,
            cell_faces,
            top_faces.clone(),
        ],
        degeneracies: vec![
            identities.iter().map(|&e| vec![e]).collect(),
            edge_degen,
            cell_degen,
            vec![Vec::new(); top_faces.len()],
        ],
    };
    Ok(TwoFormGroupoid {
        truncation,
        objects: b.objects,
        edges: b.edges,
        cells: b.cells,
        generator_objects,
        generator_one_forms: gens1,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HornFill {
    pub horn: Horn,
    pub fillers: Vec<usize>,
    /// Third edges `A₁ + A₂ + df` of the fillers.
    pub composites: Vec<Form>,
    /// Every pairwise difference of composites is exact.
    pub differences_exact: bool,
}

impl TwoFormGroupoid {
    /// Every `Λ²₁` horn whose edges are generator gauge parameters starting at
    /// a generator object.
    pub fn generator_horns(&self) -> Vec<Horn> {
        let x = &self.truncation;
        let mut out = Vec::new();
        for o in 0..self.generator_objects {
            for a1 in &self.generator_one_forms {
                let Some(e2) = x.find(1, &format!("{a1} @ {}", self.objects[o])) else {
                    continue;
                };
                let mid = x.d(1, 0, e2);
                for a2 in &self.generator_one_forms {
                    if let Some(e0) = x.find(1, &format!("{a2} @ {}", self.objects[mid])) {
                        out.push(Horn {
                            n: 2,
                            k: 1,
                            faces: vec![e0, e2],
                        });
                    }
                }
            }
        }
        out
    }

    /// Fills a `Λ²₁` horn, listing every filler and checking that their
    /// composites differ by exact forms.
    pub fn fill_inner(&self, h: &Horn) -> Result<HornFill, SimplicialError> {
        let fillers = kan_fill(&self.truncation, h, true)?;
        let composites: Vec<Form> = fillers
            .iter()
            .map(|&c| self.edges[self.truncation.d(2, 1, c)].1.clone())
            .collect();
        let mut differences_exact = true;
        for (i, a) in composites.iter().enumerate() {
            for b in &composites[i + 1..] {
                let diff = a.sub(b)?;
                if !diff.is_exact_polynomial(&Convention::Free)?.exact {
                    differences_exact = false;
                }
            }
        }
        Ok(HornFill {
            horn: h.clone(),
            fillers,
            composites,
            differences_exact,
        })
    }
}

// ---------------------------------------------------------------------------
// matrices and Yang–Mills gauge fields

/// Square matrix over ℚ, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RatMatrix {
    n: usize,
    entries: Vec<Rational>,
}

impl RatMatrix {
    pub fn new(n: usize, entries: Vec<Rational>) -> Result<Self, SimplicialError> {
        if entries.len() != n * n {
            return Err(SimplicialError::IllTyped(format!("{} entries for a {n}x{n} matrix", entries.len())));
        }
        Ok(RatMatrix { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let entries = (0..n * n).map(|k| if k / n == k % n { rat(1, 1) } else { rat(0, 1) }).collect();
        RatMatrix { n, entries }
    }

    /// `[[c, -s], [s, c]]`.
    pub fn rotation(c: Rational, s: Rational) -> Self {
        RatMatrix {
            n: 2,
            entries: vec![c.clone(), -s.clone(), s, c],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i * self.n + j]
    }

    pub fn mul(&self, other: &RatMatrix) -> RatMatrix {
        let n = self.n;
        let entries = (0..n * n)
            .map(|k| (0..n).fold(rat(0, 1), |acc, l| acc + self.get(k / n, l) * other.get(l, k % n)))
            .collect();
        RatMatrix { n, entries }
    }

    pub fn inverse(&self) -> Option<RatMatrix> {
        let n = self.n;
        let mut a = self.entries.clone();
        let mut inv = RatMatrix::identity(n).entries;
        for col in 0..n {
            let pivot = (col..n).find(|&r| a[r * n + col] != rat(0, 1))?;
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
                inv.swap(col * n + k, pivot * n + k);
            }
            let p = a[col * n + col].clone();
            for k in 0..n {
                a[col * n + k] = &a[col * n + k] / &p;
                inv[col * n + k] = &inv[col * n + k] / &p;
            }
            for r in 0..n {
                if r != col {
                    let factor = a[r * n + col].clone();
                    if factor != rat(0, 1) {
                        for k in 0..n {
                            a[r * n + k] = &a[r * n + k] - &factor * &a[col * n + k];
                            inv[r * n + k] = &inv[r * n + k] - &factor * &inv[col * n + k];
                        }
                    }
                }
            }
        }
        Some(RatMatrix { n, entries: inv })
    }

    pub fn to_scalar(&self) -> ScalarMatrix {
        ScalarMatrix {
            n: self.n,
            entries: self.entries.iter().map(|r| Scalar::from_rational(r.clone())).collect(),
        }
    }
}

impl fmt::Display for RatMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = (0..self.n)
            .map(|i| {
                let r: Vec<String> = (0..self.n).map(|j| self.get(i, j).to_string()).collect();
                format!("[{}]", r.join(", "))
            })
            .collect();
        write!(f, "[{}]", rows.join(", "))
    }
}

/// Square matrix of functions, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalarMatrix {
    pub n: usize,
    pub entries: Vec<Scalar>,
}

impl ScalarMatrix {
    pub fn zero(n: usize) -> Self {
        ScalarMatrix {
            n,
            entries: vec![Scalar::zero(); n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        &self.entries[i * self.n + j]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Scalar::is_zero)
    }

    pub fn add(&self, o: &ScalarMatrix) -> ScalarMatrix {
        ScalarMatrix {
            n: self.n,
            entries: self.entries.iter().zip(&o.entries).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn mul(&self, o: &ScalarMatrix) -> ScalarMatrix {
        let n = self.n;
        let entries = (0..n * n)
            .map(|k| (0..n).fold(Scalar::zero(), |acc, l| acc.add(&self.get(k / n, l).mul(o.get(l, k % n)))))
            .collect();
        ScalarMatrix { n, entries }
    }

    pub fn map(&self, f: impl Fn(&Scalar) -> Scalar) -> ScalarMatrix {
        ScalarMatrix {
            n: self.n,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn eval(&self, point: &HashMap<String, f64>) -> Result<Vec<f64>, EvalError> {
        self.entries.iter().map(|e| e.eval_f64(point)).collect()
    }
}

impl fmt::Display for ScalarMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = (0..self.n)
            .map(|i| {
                let r: Vec<String> = (0..self.n).map(|j| self.get(i, j).to_string()).collect();
                format!("[{}]", r.join(", "))
            })
            .collect();
        write!(f, "[{}]", rows.join(", "))
    }
}

/// `𝔤 = gl(n)`-valued 1-form `Σ_μ A_μ dx^μ` with function coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixForm {
    pub n: usize,
    pub coords: Vec<String>,
    pub components: Vec<ScalarMatrix>,
}

impl MatrixForm {
    pub fn zero(n: usize, coords: &[String]) -> Self {
        MatrixForm {
            n,
            coords: coords.to_vec(),
            components: vec![ScalarMatrix::zero(n); coords.len()],
        }
    }

    pub fn new(n: usize, coords: &[String], components: Vec<ScalarMatrix>) -> Result<Self, SimplicialError> {
        if components.len() != coords.len() || components.iter().any(|c| c.n != n || c.entries.len() != n * n) {
            return Err(SimplicialError::IllTyped(format!(
                "expected {} components of size {n}x{n}",
                coords.len()
            )));
        }
        Ok(MatrixForm {
            n,
            coords: coords.to_vec(),
            components,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(ScalarMatrix::is_zero)
    }

    /// `g⁻¹ A g` for a constant `g`, where `g dg⁻¹` vanishes.
    pub fn gauge_constant(&self, g: &RatMatrix) -> Result<MatrixForm, SimplicialError> {
        if g.size() != self.n {
            return Err(SimplicialError::IllTyped(format!("{}x{} gauge parameter on gl({})", g.n, g.n, self.n)));
        }
        let gi = g.inverse().ok_or_else(|| SimplicialError::Singular(g.to_string()))?.to_scalar();
        let gs = g.to_scalar();
        Ok(MatrixForm {
            n: self.n,
            coords: self.coords.clone(),
            components: self.components.iter().map(|a| gi.mul(a).mul(&gs)).collect(),
        })
    }

    /// Pullback along a map of Cartesian probes: `(f*A)_ν = Σ_μ A_μ(f) ∂_ν f^μ`.
    pub fn pullback(&self, f: &ProbeMap) -> Result<MatrixForm, SimplicialError> {
        let target = f.target().even_names();
        if target != self.coords {
            return Err(SimplicialError::IllTyped(format!(
                "form on ({}) pulled back along a map into ({})",
                self.coords.join(", "),
                target.join(", ")
            )));
        }
        let images: Vec<Scalar> = f.images().iter().map(SuperPoly::body).collect();
        let map: HashMap<String, Scalar> = self.coords.iter().cloned().zip(images.iter().cloned()).collect();
        let source = f.source().even_names();
        let moved: Vec<ScalarMatrix> = self.components.iter().map(|a| a.map(|s| s.subst(&map))).collect();
        let components = source
            .iter()
            .map(|v| {
                moved
                    .iter()
                    .zip(&images)
                    .fold(ScalarMatrix::zero(self.n), |acc, (a, img)| {
                        let dv = img.derivative(v);
                        acc.add(&a.map(|s| s.mul(&dv)))
                    })
            })
            .collect();
        Ok(MatrixForm {
            n: self.n,
            coords: source,
            components,
        })
    }

    /// Components at a point.
    pub fn eval(&self, point: &HashMap<String, f64>) -> Result<Vec<Vec<f64>>, EvalError> {
        self.components.iter().map(|c| c.eval(point)).collect()
    }
}

impl fmt::Display for MatrixForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .components
            .iter()
            .zip(&self.coords)
            .filter(|(c, _)| !c.is_zero())
            .map(|(c, x)| format!("{c} d{x}"))
            .collect();
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

/// Finite sample of a matrix group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSample {
    pub labels: Vec<String>,
    pub matrices: Vec<RatMatrix>,
}

impl GroupSample {
    pub fn new(elements: Vec<(String, RatMatrix)>) -> Self {
        let (labels, matrices) = elements.into_iter().unzip();
        GroupSample { labels, matrices }
    }

    /// Rotations by multiples of a quarter turn.
    pub fn c4() -> Self {
        let r = |c: i64, s: i64| RatMatrix::rotation(rat(c, 1), rat(s, 1));
        GroupSample::new(vec![
            ("r0".into(), r(1, 0)),
            ("r1".into(), r(0, 1)),
            ("r2".into(), r(-1, 0)),
            ("r3".into(), r(0, -1)),
        ])
    }

    /// Symmetries of the square: `C4` and four reflections.
    pub fn d4() -> Self {
        let mut s = GroupSample::c4();
        let m = |a: i64, b: i64, c: i64, d: i64| RatMatrix::new(2, vec![rat(a, 1), rat(b, 1), rat(c, 1), rat(d, 1)]).unwrap();
        for (l, x) in [("fx", m(1, 0, 0, -1)), ("fy", m(-1, 0, 0, 1)), ("fd", m(0, 1, 1, 0)), ("fa", m(0, -1, -1, 0))] {
            s.labels.push(l.into());
            s.matrices.push(x);
        }
        s
    }

    /// Multiplication table, if the sample is a group.
    pub fn close(&self) -> Result<FiniteGroup, SimplicialError> {
        let n = self.matrices.first().map(RatMatrix::size).unwrap_or(0);
        if self.matrices.is_empty() {
            return Err(SimplicialError::NotClosed("identity (sample is empty)".into()));
        }
        let mut index: BTreeMap<&RatMatrix, usize> = BTreeMap::new();
        for (i, m) in self.matrices.iter().enumerate() {
            if m.size() != n {
                return Err(SimplicialError::IllTyped("matrices of different sizes".into()));
            }
            if m.inverse().is_none() {
                return Err(SimplicialError::Singular(format!("{} = {m}", self.labels[i])));
            }
            index.entry(m).or_insert(i);
        }
        let identity = *index
            .get(&RatMatrix::identity(n))
            .ok_or_else(|| SimplicialError::NotClosed(format!("identity {}", RatMatrix::identity(n))))?;
        let mut table = Vec::new();
        for (i, a) in self.matrices.iter().enumerate() {
            let mut row = Vec::new();
            for (j, b) in self.matrices.iter().enumerate() {
                let p = a.mul(b);
                let k = *index.get(&p).ok_or_else(|| {
                    SimplicialError::NotClosed(format!("{}*{} = {p}", self.labels[i], self.labels[j]))
                })?;
                row.push(k);
            }
            table.push(row);
        }
        Ok(FiniteGroup {
            labels: self.labels.clone(),
            table,
            identity,
        })
    }
}

/// Action groupoid of constant gauge transformations on a finite set of
/// connections, with its nerve.
#[derive(Debug, Clone)]
pub struct YangMillsGroupoid {
    pub truncation: SimplicialTruncation,
    pub objects: Vec<MatrixForm>,
    pub group: FiniteGroup,
    pub sample: GroupSample,
}

/// Objects are the orbits of the generators (and `0`) under the sample;
/// the arrow `(A, g)` runs `A → A^g = g⁻¹Ag`. Levels `0..=dim` of the nerve.
pub fn build_yang_mills_groupoid(
    n: usize,
    coords: &[String],
    generators: &[MatrixForm],
    sample: &GroupSample,
    dim: usize,
) -> Result<YangMillsGroupoid, SimplicialError> {
    let group = sample.close()?;
    if let Some(m) = sample.matrices.first() {
        if m.size() != n {
            return Err(SimplicialError::IllTyped(format!("{}x{} sample for gl({n})", m.size(), m.size())));
        }
    }
    let mut objects = vec![MatrixForm::zero(n, coords)];
    let mut index: HashMap<String, usize> = HashMap::new();
    index.insert(objects[0].to_string(), 0);
    let mut queue = Vec::new();
    for g in generators {
        if g.n != n || g.coords != coords {
            return Err(SimplicialError::IllTyped(format!("generator `{g}` has the wrong shape")));
        }
        if !index.contains_key(&g.to_string()) {
            index.insert(g.to_string(), objects.len());
            objects.push(g.clone());
            queue.push(objects.len() - 1);
        }
    }
    while let Some(o) = queue.pop() {
        for m in &sample.matrices {
            let t = objects[o].gauge_constant(m)?;
            let key = t.to_string();
            if !index.contains_key(&key) {
                index.insert(key, objects.len());
                objects.push(t);
                queue.push(objects.len() - 1);
            }
        }
    }
    let gcount = group.order();
    let mut arrows = Vec::new();
    for (o, a) in objects.iter().enumerate() {
        for (gi, m) in sample.matrices.iter().enumerate() {
            let target = index[&a.gauge_constant(m)?.to_string()];
            arrows.push(Arrow {
                label: format!("{}@{}", sample.labels[gi], o),
                source: o,
                target,
            });
        }
    }
    let arrow = |o: usize, g: usize| o * gcount + g;
    let mut compose = HashMap::new();
    for o in 0..objects.len() {
        for g1 in 0..gcount {
            let mid = arrows[arrow(o, g1)].target;
            for g2 in 0..gcount {
                compose.insert((arrow(o, g1), arrow(mid, g2)), arrow(o, group.mul(g1, g2)));
            }
        }
    }
    let groupoid = FiniteGroupoid {
        objects: objects.iter().enumerate().map(|(i, a)| format!("A{i} = {a}")).collect(),
        identities: (0..objects.len()).map(|o| arrow(o, group.identity)).collect(),
        arrows,
        compose,
    };
    Ok(YangMillsGroupoid {
        truncation: groupoid.nerve(dim),
        objects,
        group,
        sample: sample.clone(),
    })
}

/// The `ℝ^k`-plots of `BG_conn` truncated at level 3: `gl(n)`-valued
/// polynomial 1-forms on the probe with constant gauge morphisms.
pub fn bgconn_plot(
    k: usize,
    n: usize,
    sample: &GroupSample,
    generators: &[MatrixForm],
) -> Result<YangMillsGroupoid, SimplicialError> {
    let coords = crate::probes::ProbeSpace::cartesian(k).even_names();
    for g in generators {
        if g.components.iter().any(|c| c.entries.iter().any(|e| !e.is_polynomial_in(&coords))) {
            return Err(SimplicialError::IllTyped(format!("generator `{g}` is not polynomial on the probe")));
        }
    }
    build_yang_mills_groupoid(n, &coords, generators, sample, 3)
}

// numeric gauge transformations by non-constant group-valued functions

fn invert_f64(n: usize, m: &[f64]) -> Option<Vec<f64>> {
    let mut a = m.to_vec();
    let mut inv: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-12 {
            return None;
        }
        for k in 0..n {
            a.swap(col * n + k, pivot * n + k);
            inv.swap(col * n + k, pivot * n + k);
        }
        let p = a[col * n + col];
        for k in 0..n {
            a[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = a[r * n + col];
                for k in 0..n {
                    a[r * n + k] -= factor * a[col * n + k];
                    inv[r * n + k] -= factor * inv[col * n + k];
                }
            }
        }
    }
    Some(inv)
}

fn mul_f64(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..n * n)
        .map(|k| (0..n).map(|l| a[(k / n) * n + l] * b[l * n + k % n]).sum())
        .collect()
}

fn point_map(coords: &[String], p: &[f64]) -> HashMap<String, f64> {
    coords.iter().cloned().zip(p.iter().copied()).collect()
}

fn inverse_at(g: &ScalarMatrix, coords: &[String], p: &[f64]) -> Result<Vec<f64>, SimplicialError> {
    let m = g.eval(&point_map(coords, p))?;
    invert_f64(g.n, &m).ok_or_else(|| SimplicialError::Singular(format!("{g} at {p:?}")))
}

/// `A^g = g⁻¹ A g + g dg⁻¹` at a point, with `dg⁻¹` by central differences
/// of step `h`. `a` holds the components of `A` at the point.
pub fn gauge_numeric_at(
    a: &[Vec<f64>],
    g: &ScalarMatrix,
    coords: &[String],
    p: &[f64],
    h: f64,
) -> Result<Vec<Vec<f64>>, SimplicialError> {
    let n = g.n;
    let gp = g.eval(&point_map(coords, p))?;
    let gi = inverse_at(g, coords, p)?;
    let mut out = Vec::new();
    for (mu, a_mu) in a.iter().enumerate() {
        let mut plus = p.to_vec();
        let mut minus = p.to_vec();
        plus[mu] += h;
        minus[mu] -= h;
        let (ip, im) = (inverse_at(g, coords, &plus)?, inverse_at(g, coords, &minus)?);
        let dgi: Vec<f64> = ip.iter().zip(&im).map(|(x, y)| (x - y) / (2.0 * h)).collect();
        let conj = mul_f64(n, &mul_f64(n, &gi, a_mu), &gp);
        let shift = mul_f64(n, &gp, &dgi);
        out.push(conj.iter().zip(&shift).map(|(x, y)| x + y).collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericComposition {
    pub max_error: f64,
    pub tolerance: f64,
}

impl NumericComposition {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

/// Compares `(A^{g₁})^{g₂}` with `A^{g₁g₂}` at the sample points.
pub fn check_numeric_composition(
    a: &MatrixForm,
    g1: &ScalarMatrix,
    g2: &ScalarMatrix,
    points: &[Vec<f64>],
    h: f64,
    tolerance: f64,
) -> Result<NumericComposition, SimplicialError> {
    let g12 = g1.mul(g2);
    let mut max_error: f64 = 0.0;
    for p in points {
        let ap = a.eval(&point_map(&a.coords, p))?;
        let once = gauge_numeric_at(&ap, g1, &a.coords, p, h)?;
        let twice = gauge_numeric_at(&once, g2, &a.coords, p, h)?;
        let direct = gauge_numeric_at(&ap, &g12, &a.coords, p, h)?;
        for (x, y) in twice.iter().flatten().zip(direct.iter().flatten()) {
            max_error = max_error.max((x - y).abs());
        }
    }
    Ok(NumericComposition { max_error, tolerance })
}

// random samples

/// Rational point of `SO(2)` from a Pythagorean parametrization.
pub fn random_so2(rng: &mut SampleRng) -> RatMatrix {
    let a = rat(rng.gen_range(-5..=5), 1);
    let b = rat(rng.gen_range(1..=5), 1);
    let norm = &a * &a + &b * &b;
    RatMatrix::rotation((&a * &a - &b * &b) / &norm, (rat(2, 1) * &a * &b) / &norm)
}

pub fn random_gl(rng: &mut SampleRng, n: usize) -> RatMatrix {
    loop {
        let m = RatMatrix {
            n,
            entries: (0..n * n).map(|_| small_rational(rng)).collect(),
        };
        if m.inverse().is_some() {
            return m;
        }
    }
}

/// Polynomial `gl(n)`-valued 1-form with degree ≤ 2 coefficients.
pub fn random_matrix_form(rng: &mut SampleRng, n: usize, coords: &[String]) -> MatrixForm {
    let components = coords
        .iter()
        .map(|_| ScalarMatrix {
            n,
            entries: (0..n * n)
                .map(|_| {
                    if rng.gen_bool(0.4) {
                        Scalar::zero()
                    } else {
                        crate::random::random_polynomial(rng, coords, 2, 2)
                    }
                })
                .collect(),
        })
        .collect();
    MatrixForm {
        n,
        coords: coords.to_vec(),
        components,
    }
}

/// Random nonzero scalar multiple of the identity, an abelian constant gauge parameter.
pub fn random_central(rng: &mut SampleRng, n: usize) -> RatMatrix {
    let c = nonzero_rational(rng);
    RatMatrix {
        n,
        entries: (0..n * n).map(|k| if k / n == k % n { c.clone() } else { rat(0, 1) }).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::{ProbeMap, ProbeSpace};
    use crate::random::sample_rng;
    use crate::superalgebra::Ambient;
    use std::sync::Arc;

    fn xy() -> (Arc<Ambient>, Vec<String>) {
        (Ambient::new(vec!["x".into(), "y".into()], vec![], vec![], 0).unwrap(), vec!["x".into(), "y".into()])
    }

    fn poly(a: &Arc<Ambient>, s: Scalar) -> SuperPoly {
        SuperPoly::scalar(a, s)
    }

    #[test]
    fn nerves_are_kan_with_unique_fillers() {
        for g in [FiniteGroup::cyclic(2), FiniteGroup::symmetric3()] {
            let x = g.nerve(3);
            assert_eq!(x.len(3), g.order().pow(3));
            let r = check_simplicial_identities(&x);
            assert!(r.passed(), "{:?}", r.violations.first());
            for n in [2, 3] {
                let k = check_kan(&x, n).unwrap();
                assert!(k.all_unique(), "n = {n}: {k:?}");
                assert_eq!(k.horns, (n + 1) * g.order().pow(n as u32));
            }
        }
    }

    #[test]
    fn standard_simplex_and_fixtures() {
        let d2 = standard_simplex(2, 3);
        assert_eq!(d2.levels[0], vec!["0", "1", "2"]);
        assert!(check_simplicial_identities(&d2).passed());
        let json = d2.to_json();
        assert_eq!(SimplicialTruncation::from_json(&json).unwrap(), d2);

        let spine = spine_fixture(2);
        assert!(check_simplicial_identities(&spine).passed());
        let h = Horn::from_labels(&spine, 2, 1, &["12", "01"]).unwrap();
        assert!(kan_fill(&spine, &h, false).unwrap().is_empty());

        let mut bad = FiniteGroup::cyclic(2).nerve(3);
        let victim = bad.find(2, "0|1").unwrap();
        bad.faces[2][victim].swap(0, 2);
        let r = check_simplicial_identities(&bad);
        assert!(!r.passed());
        assert!(r.violations.iter().any(|v| v.simplex == "1" && v.identity == "d0 s0 = id" && v.lhs == "0"));
        assert!(r.violations[0].to_string().contains("fails on"));
    }

    #[test]
    fn malformed_horns() {
        let x = FiniteGroup::cyclic(2).nerve(2);
        let d = standard_simplex(1, 2);
        assert!(matches!(
            kan_fill(&x, &Horn { n: 2, k: 3, faces: vec![0, 0] }, false),
            Err(SimplicialError::MalformedHorn(_))
        ));
        // d0 = 11 and d2 = 01 disagree on the middle vertex
        let h = Horn::from_labels(&d, 2, 1, &["11", "00"]).unwrap();
        assert!(matches!(kan_fill(&d, &h, false), Err(SimplicialError::MalformedHorn(_))));
        // an outer horn with no filler in Δ[1]
        let h = Horn::from_labels(&d, 2, 0, &["00", "01"]).unwrap();
        assert!(kan_fill(&d, &h, false).unwrap().is_empty());
    }

    fn two_form_spec() -> TwoFormSpec {
        let (a, c) = xy();
        let (x, y) = (Scalar::sym("x"), Scalar::sym("y"));
        let b1 = Form::monomial(&c, poly(&a, x.clone()), &[0, 1]).unwrap();
        TwoFormSpec {
            objects: vec![Form::zero(&a, &c, 2), b1],
            one_forms: vec![
                Form::monomial(&c, poly(&a, x.clone()), &[1]).unwrap(),
                Form::monomial(&c, poly(&a, y.clone()), &[0]).unwrap(),
                Form::monomial(&c, poly(&a, x.mul(&y)), &[0]).unwrap(),
                Form::monomial(&c, poly(&a, Scalar::one()), &[1]).unwrap(),
                Form::monomial(&c, poly(&a, y.pow(2)), &[1]).unwrap(),
            ],
            zero_forms: vec![Form::function(&c, poly(&a, x.mul(&y))), Form::function(&c, poly(&a, y))],
        }
    }

    #[test]
    fn two_form_groupoid() {
        let g = build_two_form_groupoid(&two_form_spec()).unwrap();
        let x = &g.truncation;
        let e = x.find(1, "x dy @ 0").unwrap();
        assert_eq!(x.label(0, x.d(1, 0, e)), "dx∧dy");
        let id = x.find(1, "0 @ 0").unwrap();
        assert_eq!(x.d(1, 0, id), x.d(1, 1, id));
        let r = check_simplicial_identities(x);
        assert!(r.passed(), "{:?}", r.violations.first());
        let horns = g.generator_horns();
        assert_eq!(horns.len(), 2 * 6 * 6);
        for h in &horns {
            let fill = g.fill_inner(h).unwrap();
            assert!(fill.fillers.len() >= 3, "{}", h.describe(x));
            assert!(fill.differences_exact);
            let a1 = &g.edges[h.faces[1]].1;
            let a2 = &g.edges[h.faces[0]].1;
            assert_eq!(fill.composites[0], a1.add(a2).unwrap());
        }
    }

    #[test]
    fn closure_and_constant_gauge() {
        let partial = GroupSample::new(vec![
            ("id".into(), RatMatrix::identity(2)),
            ("r1".into(), RatMatrix::rotation(rat(0, 1), rat(1, 1))),
        ]);
        match partial.close() {
            Err(SimplicialError::NotClosed(m)) => assert_eq!(m, "r1*r1 = [[-1, 0], [0, -1]]"),
            other => panic!("{other:?}"),
        }
        let coords = vec!["x".to_string(), "y".to_string()];
        let (x, y) = (Scalar::sym("x"), Scalar::sym("y"));
        let a = MatrixForm::new(
            2,
            &coords,
            vec![
                ScalarMatrix { n: 2, entries: vec![Scalar::zero(), x.clone(), Scalar::zero(), Scalar::zero()] },
                ScalarMatrix { n: 2, entries: vec![y, Scalar::zero(), Scalar::zero(), Scalar::zero()] },
            ],
        )
        .unwrap();
        let r1 = RatMatrix::rotation(rat(0, 1), rat(1, 1));
        assert_eq!(a.gauge_constant(&r1).unwrap().to_string(), "[[0, 0], [-x, 0]] dx + [[0, 0], [0, y]] dy");
        assert_eq!(a.gauge_constant(&RatMatrix::identity(2)).unwrap(), a);
        assert_eq!(a.gauge_constant(&random_central(&mut sample_rng(1, 0), 2)).unwrap(), a);

        let ym = build_yang_mills_groupoid(2, &coords, &[a], &GroupSample::d4(), 3).unwrap();
        assert!(check_simplicial_identities(&ym.truncation).passed());
        assert!(check_kan(&ym.truncation, 2).unwrap().all_unique());
    }

    #[test]
    fn gauge_composition_is_an_action() {
        let coords = vec!["x".to_string(), "y".to_string()];
        for i in 0..50 {
            let mut rng = sample_rng(3, i);
            let a = random_matrix_form(&mut rng, 2, &coords);
            let (g1, g2) = if i % 2 == 0 {
                (random_so2(&mut rng), random_so2(&mut rng))
            } else {
                (random_gl(&mut rng, 2), random_gl(&mut rng, 2))
            };
            let lhs = a.gauge_constant(&g1).unwrap().gauge_constant(&g2).unwrap();
            assert_eq!(lhs, a.gauge_constant(&g1.mul(&g2)).unwrap());
        }
    }

    #[test]
    fn bgconn_plots() {
        let point = bgconn_plot(0, 2, &GroupSample::c4(), &[]).unwrap();
        assert_eq!(point.truncation.levels[0].len(), 1);
        assert_eq!(point.truncation.len(1), 4);

        let coords = ProbeSpace::cartesian(2).even_names();
        let mut rng = sample_rng(5, 0);
        let a = random_matrix_form(&mut rng, 2, &coords);
        let plot = bgconn_plot(2, 2, &GroupSample::c4(), &[a.clone()]).unwrap();
        assert!(check_simplicial_identities(&plot.truncation).passed());

        let src = ProbeSpace::cartesian(1);
        let amb = src.ambient();
        let s = Scalar::sym("s1");
        let f = ProbeMap::new(
            src,
            ProbeSpace::cartesian(2),
            vec![poly(&amb, s.pow(2)), poly(&amb, s.add(&Scalar::one()))],
        )
        .unwrap();
        let pulled = a.pullback(&f).unwrap();
        assert_eq!(pulled.coords, vec!["s1".to_string()]);
        let g = RatMatrix::rotation(rat(0, 1), rat(1, 1));
        assert_eq!(
            a.gauge_constant(&g).unwrap().pullback(&f).unwrap(),
            pulled.gauge_constant(&g).unwrap()
        );
    }

    #[test]
    fn numeric_gauge_transformations() {
        let coords = vec!["x".to_string(), "y".to_string()];
        let a = random_matrix_form(&mut sample_rng(9, 0), 2, &coords);
        let rot = |theta: Scalar| ScalarMatrix {
            n: 2,
            entries: vec![
                Scalar::cos(theta.clone()),
                Scalar::sin(theta.clone()).neg(),
                Scalar::sin(theta.clone()),
                Scalar::cos(theta),
            ],
        };
        let (x, y) = (Scalar::sym("x"), Scalar::sym("y"));
        let g1 = rot(x.mul(&y));
        let g2 = rot(x.pow(2).add(&y));
        let points = vec![vec![0.3, -0.2], vec![0.5, 0.7]];
        let r = check_numeric_composition(&a, &g1, &g2, &points, 1e-4, 1e-6).unwrap();
        assert!(r.passed(), "{r:?}");
        // constant parameters agree with the symbolic action
        let c = RatMatrix::rotation(rat(3, 5), rat(4, 5));
        let p = &points[0];
        let ap = a.eval(&point_map(&coords, p)).unwrap();
        let numeric = gauge_numeric_at(&ap, &c.to_scalar(), &coords, p, 1e-4).unwrap();
        let exact = a.gauge_constant(&c).unwrap().eval(&point_map(&coords, p)).unwrap();
        for (u, v) in numeric.iter().flatten().zip(exact.iter().flatten()) {
            assert!((u - v).abs() < 1e-9);
        }
        // with non-commuting non-constant parameters the formula is not an action
        let g3 = ScalarMatrix {
            n: 2,
            entries: vec![Scalar::one(), x.clone(), Scalar::zero(), Scalar::one()],
        };
        let g4 = ScalarMatrix {
            n: 2,
            entries: vec![Scalar::one(), Scalar::zero(), y.clone(), Scalar::one()],
        };
        let r = check_numeric_composition(&MatrixForm::zero(2, &coords), &g3, &g4, &points, 1e-4, 1e-6).unwrap();
        assert!(!r.passed());
    }
}
