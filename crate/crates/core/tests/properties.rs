use proptest::prelude::*;
use symseq_core::tokenizer::{decode, encode};
use symseq_core::{parse_poly, poly_to_string, Expression, Polynomial, Ring, Task, TaskSpec};

fn ring_strategy() -> impl Strategy<Value = Ring> {
    prop_oneof![
        Just(Ring::Integers),
        Just(Ring::F7),
        Just(Ring::PrimeField { modulus: 2 }),
        Just(Ring::PrimeField { modulus: 11 })
    ]
}

fn poly_in(ring: Ring, num_vars: usize, max_deg: u32, coeff: i64) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0..=max_deg, num_vars), -coeff..=coeff), 0..6)
        .prop_map(move |terms| Polynomial::from_terms(ring, num_vars, terms).unwrap())
}

fn poly_any() -> impl Strategy<Value = Polynomial> {
    (ring_strategy(), 1usize..=4).prop_flat_map(|(ring, n)| poly_in(ring, n, 4, 50))
}

/// Value at an integer point, computed term by term and reduced to the
/// balanced residue for prime fields.
fn eval_oracle(p: &Polynomial, point: &[i64]) -> i128 {
    let mut v: i128 = 0;
    for (m, c) in p.terms() {
        let mut t = c as i128;
        for (x, &e) in point.iter().zip(m.exponents()) {
            t *= (*x as i128).pow(e);
        }
        v += t;
    }
    reduce(p.ring(), v)
}

fn reduce(ring: Ring, v: i128) -> i128 {
    match ring {
        Ring::Integers => v,
        Ring::PrimeField { modulus } => {
            let p = modulus as i128;
            let r = v.rem_euclid(p);
            if r > p / 2 {
                r - p
            } else {
                r
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn printing_then_parsing_is_identity(p in poly_any()) {
        let text = poly_to_string(&p);
        let back = parse_poly(&text, p.ring(), p.num_vars()).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(poly_to_string(&back), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn multiplication_commutes_and_associates(
        (a, b, c) in (ring_strategy(), 1usize..=3).prop_flat_map(|(r, n)| (poly_in(r, n, 3, 9), poly_in(r, n, 3, 9), poly_in(r, n, 3, 9)))
    ) {
        prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
        prop_assert_eq!(a.mul(&b).unwrap().mul(&c).unwrap(), a.mul(&b.mul(&c).unwrap()).unwrap());
        prop_assert_eq!(a.add(&b).unwrap().mul(&c).unwrap(), a.mul(&c).unwrap().add(&b.mul(&c).unwrap()).unwrap());
    }

    #[test]
    fn evaluation_is_a_ring_homomorphism(
        (a, b, pt) in (ring_strategy(), 1usize..=3).prop_flat_map(|(r, n)| (poly_in(r, n, 3, 9), poly_in(r, n, 3, 9), prop::collection::vec(-6i64..=6, n)))
    ) {
        let prod = a.mul(&b).unwrap();
        let ring = a.ring();
        prop_assert_eq!(eval_oracle(&prod, &pt), reduce(ring, eval_oracle(&a, &pt) * eval_oracle(&b, &pt)));
        prop_assert_eq!(prod.eval(&pt).unwrap(), eval_oracle(&prod, &pt));
    }

    #[test]
    fn f7_products_stay_balanced(a in poly_in(Ring::F7, 2, 3, 3), b in poly_in(Ring::F7, 2, 3, 3)) {
        let prod = a.mul(&b).unwrap();
        prop_assert!(prod.terms().all(|(_, c)| (-3..=3).contains(&c) && c != 0));
        prop_assert!(prod.total_degree() <= a.total_degree() + b.total_degree());
    }

    #[test]
    fn decode_inverts_encode_on_arbitrary_polynomials(
        fs in prop::collection::vec(poly_in(Ring::F7, 2, 4, 3), 1..4)
    ) {
        let spec = TaskSpec { num_factors: 2, ..TaskSpec::preset(Task::ProdF7) };
        let vocab = spec.vocabulary();
        let exprs: Vec<Expression> = fs.into_iter().map(Expression::Poly).collect();
        let ids = encode(&exprs, &vocab).unwrap();
        prop_assert_eq!(decode(&ids.ids, &vocab, Ring::F7).unwrap(), exprs);
    }

    #[test]
    fn decode_never_panics(ids in prop::collection::vec(0u32..20, 0..30)) {
        let vocab = TaskSpec::preset(Task::ProdF7).vocabulary();
        let _ = decode(&ids, &vocab, Ring::F7);
        let vocab = TaskSpec::preset(Task::Factorization).vocabulary();
        let _ = decode(&ids, &vocab, Ring::Integers);
    }
}
