//! Seeded generators for the property suites and the `check` command.
//!
//! Everything is driven by a ChaCha stream, so a `(seed, index)` pair fully
//! determines the generated value regardless of thread scheduling.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::{rat, Rational, Scalar};
use crate::superalgebra::{Ambient, Basis, Parity, SuperPoly};

pub type SampleRng = ChaCha8Rng;

/// Independent stream for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> SampleRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// Rational with numerator in `-4..=4` and denominator in `1..=3`.
pub fn small_rational(rng: &mut SampleRng) -> Rational {
    rat(rng.gen_range(-4..=4), rng.gen_range(1..=3))
}

pub fn nonzero_rational(rng: &mut SampleRng) -> Rational {
    loop {
        let r = small_rational(rng);
        if r != Rational::from_integer(0.into()) {
            return r;
        }
    }
}

/// Polynomial in `vars` with at most `max_terms` terms of degree `<= max_degree`.
pub fn random_polynomial(
    rng: &mut SampleRng,
    vars: &[String],
    max_degree: u32,
    max_terms: usize,
) -> Scalar {
    let mut out = Scalar::zero();
    let n = rng.gen_range(0..=max_terms);
    for _ in 0..n {
        let mut term = Scalar::from_rational(nonzero_rational(rng));
        if !vars.is_empty() {
            let deg = rng.gen_range(0..=max_degree);
            for _ in 0..deg {
                let v = vars.choose(rng).expect("nonempty");
                term = term.mul(&Scalar::sym(v.clone()));
            }
        }
        out = out.add(&term);
    }
    out
}

/// Random basis monomial of the ambient with the requested Grassmann parity.
pub fn random_basis(rng: &mut SampleRng, ambient: &Ambient, parity: Option<Parity>) -> Option<Basis> {
    let q = ambient.odd().len();
    let m = ambient.weil().len();
    for _ in 0..16 {
        let mut odd: Vec<u16> = (0..q as u16).filter(|_| rng.gen_bool(0.4)).collect();
        if let Some(p) = parity {
            if Parity::of_degree(odd.len()) != p {
                if odd.is_empty() {
                    if q == 0 {
                        return None;
                    }
                    odd.push(rng.gen_range(0..q as u16));
                } else {
                    odd.remove(rng.gen_range(0..odd.len()));
                }
            }
        }
        let mut weil = vec![0u16; m];
        let mut budget = if m > 0 { rng.gen_range(0..=ambient.order()) } else { 0 };
        while budget > 0 {
            weil[rng.gen_range(0..m)] += 1;
            budget -= 1;
        }
        let b = Basis::new(odd, weil);
        if parity.map_or(true, |p| b.parity() == p) {
            return Some(b);
        }
    }
    None
}

/// Random element; `parity = None` allows inhomogeneous results.
pub fn random_element(
    rng: &mut SampleRng,
    ambient: &Arc<Ambient>,
    parity: Option<Parity>,
    max_terms: usize,
) -> SuperPoly {
    let vars: Vec<String> = ambient.even().to_vec();
    let mut out = SuperPoly::zero(ambient);
    let n = rng.gen_range(0..=max_terms);
    for _ in 0..n {
        let Some(b) = random_basis(rng, ambient, parity) else {
            break;
        };
        let c = random_polynomial(rng, &vars, 2, 2);
        out = &out + &SuperPoly::monomial(ambient, b, c);
    }
    out
}

/// Random element with vanishing body.
pub fn random_nilpotent(
    rng: &mut SampleRng,
    ambient: &Arc<Ambient>,
    parity: Parity,
    max_terms: usize,
) -> SuperPoly {
    random_element(rng, ambient, Some(parity), max_terms).nilpotent_part()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<u32> = (0..5).map(|_| sample_rng(7, 3).gen()).collect();
        let b: Vec<u32> = (0..5).map(|_| sample_rng(7, 3).gen()).collect();
        assert_eq!(a, b);
        assert_ne!(sample_rng(7, 3).gen::<u64>(), sample_rng(7, 4).gen::<u64>());
    }

    #[test]
    fn homogeneous_elements_have_requested_parity() {
        let amb = Ambient::new(vec!["x".into()], vec!["a".into(), "b".into(), "c".into()], vec![], 0)
            .unwrap();
        let mut rng = sample_rng(1, 0);
        for _ in 0..50 {
            let p = random_element(&mut rng, &amb, Some(Parity::Odd), 4);
            assert!(p.has_parity(Parity::Odd));
        }
    }
}
