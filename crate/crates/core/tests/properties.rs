//! Property tests of the algebraic invariants. Each case draws a seed and
//! builds its random objects from the corresponding sample stream.

use std::sync::Arc;

use fieldspace::checks::{gauge_suite, law_ambient, total_derivative_suite};
use fieldspace::forms::{Convention, Form};
use fieldspace::infinitesimal::taylor_via_disk;
use fieldspace::random::{random_element, random_nilpotent, random_polynomial, sample_rng, SampleRng};
use fieldspace::scalar::{rat, Scalar};
use fieldspace::simplicial::{check_kan, check_simplicial_identities, FiniteGroup};
use fieldspace::superalgebra::super_inverse;
use fieldspace::{Ambient, Parity, SuperPoly};
use proptest::prelude::*;
use rand::Rng;

fn parity(b: bool) -> Parity {
    if b {
        Parity::Odd
    } else {
        Parity::Even
    }
}

fn coords() -> Vec<String> {
    vec!["x".into(), "y".into(), "z".into()]
}

fn form_ambient() -> Arc<Ambient> {
    Ambient::new(coords(), vec![], vec![], 0).unwrap()
}

fn random_form(rng: &mut SampleRng, degree: usize) -> Form {
    let amb = form_ambient();
    let c = coords();
    let mut out = Form::zero(&amb, &c, degree);
    for _ in 0..3 {
        let mut idx: Vec<usize> = (0..3).collect();
        while idx.len() > degree {
            idx.remove(rng.gen_range(0..idx.len()));
        }
        let coeff = SuperPoly::scalar(&amb, random_polynomial(rng, &c, 3, 3));
        out = out.add(&Form::monomial(&c, coeff, &idx).unwrap()).unwrap();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn graded_commutativity(seed: u64, px: bool, py: bool) {
        let mut rng = sample_rng(seed, 0);
        let amb = law_ambient();
        let x = random_element(&mut rng, &amb, Some(parity(px)), 3);
        let y = random_element(&mut rng, &amb, Some(parity(py)), 3);
        let xy = x.mul(&y).unwrap();
        let yx = y.mul(&x).unwrap();
        let expected = if px && py { yx.neg() } else { yx };
        prop_assert_eq!(xy, expected);
    }

    #[test]
    fn associativity(seed: u64) {
        let mut rng = sample_rng(seed, 0);
        let amb = law_ambient();
        let [a, b, c] = [0, 1, 2].map(|_| random_element(&mut rng, &amb, None, 3));
        prop_assert_eq!(a.mul(&b).unwrap().mul(&c).unwrap(), a.mul(&b.mul(&c).unwrap()).unwrap());
    }

    #[test]
    fn nilpotents_vanish_at_the_bound(seed: u64, odd: bool) {
        let mut rng = sample_rng(seed, 0);
        let amb = law_ambient();
        let n = random_nilpotent(&mut rng, &amb, parity(odd), 4);
        prop_assert!(n.pow(amb.nilpotency_bound()).is_zero());
    }

    #[test]
    fn super_inverse_inverts(seed: u64, body in 1i64..20) {
        let mut rng = sample_rng(seed, 0);
        let amb = law_ambient();
        let x = &SuperPoly::from_int(&amb, body) + &random_nilpotent(&mut rng, &amb, Parity::Even, 4);
        let inv = super_inverse(&x).unwrap();
        prop_assert_eq!(x.mul(&inv).unwrap(), SuperPoly::one(&amb));
    }

    #[test]
    fn d_squared_vanishes(seed: u64, degree in 0usize..3) {
        let mut rng = sample_rng(seed, 0);
        let w = random_form(&mut rng, degree);
        prop_assert!(w.exterior_derivative().exterior_derivative().is_zero());
    }

    #[test]
    fn d_is_a_graded_derivation(seed: u64, p in 0usize..3, q in 0usize..2) {
        let mut rng = sample_rng(seed, 0);
        let a = random_form(&mut rng, p);
        let b = random_form(&mut rng, q);
        let lhs = a.wedge(&b).unwrap().exterior_derivative();
        let first = a.exterior_derivative().wedge(&b).unwrap();
        let second = a.wedge(&b.exterior_derivative()).unwrap();
        let second = if p % 2 == 1 { second.neg() } else { second };
        prop_assert_eq!(lhs, first.add(&second).unwrap());
    }

    #[test]
    fn exact_forms_are_recognised(seed: u64, degree in 0usize..2) {
        let mut rng = sample_rng(seed, 0);
        let b = random_form(&mut rng, degree);
        let e = b.exterior_derivative().is_exact_polynomial(&Convention::Free).unwrap();
        prop_assert!(e.exact);
    }

    #[test]
    fn taylor_reconstructs_polynomials(seed: u64, num in -5i64..5, den in 1i64..4) {
        let mut rng = sample_rng(seed, 0);
        let x = "x".to_string();
        let f = random_polynomial(&mut rng, std::slice::from_ref(&x), 6, 4);
        let t = taylor_via_disk(&f, &x, &rat(num, den), 6).unwrap();
        prop_assert_eq!(t.to_scalar(), f);
    }

    #[test]
    fn taylor_of_product_is_product_of_taylors(seed: u64, r in 1u32..5) {
        // truncated Taylor maps are ring homomorphisms
        let mut rng = sample_rng(seed, 0);
        let x = "x".to_string();
        let f = random_polynomial(&mut rng, std::slice::from_ref(&x), 3, 3);
        let g = random_polynomial(&mut rng, std::slice::from_ref(&x), 3, 3);
        let p = rat(1, 2);
        let (tf, tg) = (taylor_via_disk(&f, &x, &p, r).unwrap(), taylor_via_disk(&g, &x, &p, r).unwrap());
        let tfg = taylor_via_disk(&f.mul(&g), &x, &p, r).unwrap();
        for k in 0..=r as usize {
            let conv = (0..=k).fold(Scalar::zero(), |acc, j| acc.add(&tf.coefficients[j].mul(&tg.coefficients[k - j])));
            prop_assert_eq!(&tfg.coefficients[k], &conv);
        }
    }

    #[test]
    fn total_derivatives_have_no_equations(seed: u64) {
        let r = total_derivative_suite(1, seed);
        prop_assert!(r.passed(), "{:?}", r.failures);
    }

    #[test]
    fn gauge_action_composes(seed: u64) {
        for r in gauge_suite(2, seed) {
            prop_assert!(r.passed(), "{:?}", r.failures);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cyclic_nerves_are_kan(n in 1usize..5) {
        let x = FiniteGroup::cyclic(n).nerve(3);
        prop_assert!(check_simplicial_identities(&x).passed());
        for level in 1..=3 {
            let r = check_kan(&x, level).unwrap();
            // a 1-horn is a single vertex, filled by every arrow out of it
            prop_assert!(r.passed() && (level == 1 || r.all_unique()));
        }
    }
}
