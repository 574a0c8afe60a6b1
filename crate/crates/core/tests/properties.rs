//! Property tests: exact ring/field laws on randomized cyclotomic numbers and
//! small Puiseux series, and the parity/periodicity invariants of the theta
//! expansions.

use num_rational::BigRational;
use proptest::prelude::*;

use mock_theta::cyclo::CycloNum;
use mock_theta::series::{rat, Monomial, PuiseuxSeries, Region, TruncationBox};
use mock_theta::thetas::{theta_formal, ThetaImage, ThetaIndex};

fn cyclo_strategy(order: u64) -> impl Strategy<Value = CycloNum> {
    prop::collection::vec((0..order as i64, -5i64..6, 1i64..5), 1..4).prop_map(move |terms| {
        CycloNum::from_signed(
            order,
            terms
                .into_iter()
                .map(|(e, n, d)| (e, BigRational::new(n.into(), d.into()))),
        )
    })
}

fn series_strategy() -> impl Strategy<Value = PuiseuxSeries> {
    prop::collection::vec(
        ((-4i64..5, 1i64..3), (-3i64..4, 1i64..3), (-3i64..4, 1i64..3), -4i64..5),
        1..6,
    )
    .prop_map(|terms| {
        let bbox = TruncationBox::with_q_order(6);
        let mut s = PuiseuxSeries::zero(bbox, Region::Standard);
        for ((qn, qd), (an, ad), (bn, bd), coeff) in terms {
            s.push(
                Monomial::new(rat(qn, qd), rat(an, ad), rat(bn, bd)),
                CycloNum::from_i64(8, coeff),
            );
        }
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cyclo_field_laws(a in cyclo_strategy(12), b in cyclo_strategy(12), c in cyclo_strategy(12)) {
        let ab_c = a.mul(&b).unwrap().mul(&c).unwrap();
        let a_bc = a.mul(&b.mul(&c).unwrap()).unwrap();
        prop_assert_eq!(&ab_c, &a_bc);
        let l = a.mul(&b.add(&c).unwrap()).unwrap();
        let r = a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap();
        prop_assert_eq!(&l, &r);
        if !a.is_zero() {
            prop_assert!(a.mul(&a.inv().unwrap()).unwrap().is_one());
        }
    }

    #[test]
    fn cyclo_canonicalization_idempotent(a in cyclo_strategy(24)) {
        // rebuilding from the stored terms reproduces the value exactly
        let rebuilt = CycloNum::new(a.order(), a.terms().map(|(e, c)| (*e, c.clone())).collect());
        prop_assert_eq!(&rebuilt, &a);
    }

    #[test]
    fn series_ring_laws(a in series_strategy(), b in series_strategy(), c in series_strategy()) {
        // (a+b)+c = a+(b+c)
        let l = a.add(&b).unwrap().add(&c).unwrap();
        let r = a.add(&b.add(&c).unwrap()).unwrap();
        prop_assert!(l.equal_up_to(&r).unwrap().0);
        // a(b+c) = ab+ac within the shared box
        let l = a.mul(&b.add(&c).unwrap()).unwrap();
        let r = a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap();
        prop_assert!(l.equal_up_to(&r).unwrap().0);
        // ab = ba
        let l = a.mul(&b).unwrap();
        let r = b.mul(&a).unwrap();
        prop_assert!(l.equal_up_to(&r).unwrap().0);
    }

    #[test]
    fn theta_parity_term_map_bijection(k_twice in -6i64..7, m_twice in 1i64..7) {
        // theta_{-k,m}(tau, z) = theta_{k,m}(tau, -z): exact term-map bijection
        let bbox = TruncationBox::with_q_order(6);
        let idx_pos = ThetaIndex::new(rat(k_twice, 2), rat(m_twice, 2), false).unwrap();
        let idx_neg = ThetaIndex::new(rat(-k_twice, 2), rat(m_twice, 2), false).unwrap();
        let w_pos = ThetaImage::new(
            BigRational::from_integer(1.into()),
            Monomial::new(rat(0, 1), rat(1, 1), rat(0, 1)),
        );
        let w_neg = ThetaImage::new(
            BigRational::from_integer(1.into()),
            Monomial::new(rat(0, 1), rat(-1, 1), rat(0, 1)),
        );
        let one = CycloNum::one(1);
        let a = theta_formal(&idx_neg, &w_pos, &Monomial::one(), &one, &bbox, Region::Standard).unwrap();
        let b = theta_formal(&idx_pos, &w_neg, &Monomial::one(), &one, &bbox, Region::Standard).unwrap();
        prop_assert!(a.equal_up_to(&b).unwrap().0);
    }

    #[test]
    fn theta_index_periodicity_formal(k_twice in -4i64..5, m_twice in 1i64..6) {
        // theta_{k+2m,m} = theta_{k,m} exactly as term maps
        let bbox = TruncationBox::with_q_order(6);
        let w = ThetaImage::new(
            BigRational::from_integer(1.into()),
            Monomial::new(rat(0, 1), rat(1, 1), rat(0, 1)),
        );
        let one = CycloNum::one(1);
        let a = theta_formal(
            &ThetaIndex::new(rat(k_twice, 2), rat(m_twice, 2), false).unwrap(),
            &w, &Monomial::one(), &one, &bbox, Region::Standard,
        ).unwrap();
        let b = theta_formal(
            &ThetaIndex::new(rat(k_twice + 2 * m_twice, 2), rat(m_twice, 2), false).unwrap(),
            &w, &Monomial::one(), &one, &bbox, Region::Standard,
        ).unwrap();
        prop_assert!(a.equal_up_to(&b).unwrap().0);
    }
}

/// theta_{k,m} + theta_{-k,m} is even in z: its x1-support is symmetric and
/// coefficients agree pairwise under x1 -> 1/x1.
#[test]
fn theta_even_combination_symmetric_support() {
    let bbox = TruncationBox::with_q_order(8);
    let one = CycloNum::one(1);
    let w = ThetaImage::new(
        BigRational::from_integer(1.into()),
        Monomial::new(rat(0, 1), rat(1, 1), rat(0, 1)),
    );
    let a = theta_formal(
        &ThetaIndex::new(rat(3, 2), rat(5, 2), false).unwrap(),
        &w, &Monomial::one(), &one, &bbox, Region::Standard,
    )
    .unwrap();
    let b = theta_formal(
        &ThetaIndex::new(rat(-3, 2), rat(5, 2), false).unwrap(),
        &w, &Monomial::one(), &one, &bbox, Region::Standard,
    )
    .unwrap();
    let sum = a.add(&b).unwrap();
    assert!(!sum.is_empty());
    for (mono, coeff) in sum.terms() {
        let mirrored = Monomial::new(mono.e_q.clone(), -mono.e_x1.clone(), mono.e_x2.clone());
        let partner = sum.coeff(&mirrored).expect("mirror term present");
        assert_eq!(partner, coeff, "even series must have symmetric coefficients");
    }
}

/// The substitution z2 -> z2 + 2 tau reproduces the index periodicity pattern
/// theta_{k+2m,m} = theta_{k,m}: theta_{k,m}(tau, z1 + z2 + 2 tau) equals
/// q^{-m} (x1 x2)^{-m} theta_{k,m}(tau, z1 + z2) as term maps.
#[test]
fn substitution_reproduces_index_shift_law() {
    use mock_theta::series::{ArgImage, Substitution};
    let m = rat(3, 2);
    let k = rat(1, 1);
    let one = CycloNum::one(1);
    let big = TruncationBox::new(rat(14, 1), (rat(-12, 1), rat(12, 1)), (rat(-12, 1), rat(12, 1)));
    let target = TruncationBox::with_q_order(5);
    let img = ThetaImage::z1_plus_z2();
    // enlarged source so that the substituted image is complete in the target
    let src = theta_formal(
        &ThetaIndex::new(k.clone(), m.clone(), false).unwrap(),
        &img, &Monomial::one(), &one, &big, Region::Standard,
    )
    .unwrap();
    let sub = Substitution {
        q: ArgImage::of_monomial(Monomial::q_pow(rat(1, 1))),
        x1: ArgImage::of_monomial(Monomial::new(rat(0, 1), rat(1, 1), rat(0, 1))),
        x2: ArgImage::of_monomial(Monomial::new(rat(2, 1), rat(0, 1), rat(1, 1))),
    };
    let shifted = src.substitute_into(&sub, target.clone()).unwrap();
    let rhs = theta_formal(
        &ThetaIndex::new(k, m.clone(), false).unwrap(),
        &img,
        &Monomial::new(-m.clone(), -m.clone(), -m.clone()),
        &one,
        &target,
        Region::Standard,
    )
    .unwrap();
    let (eq, diff) = shifted.equal_up_to(&rhs).unwrap();
    assert!(eq, "first difference at {diff:?}");
}
