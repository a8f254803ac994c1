use lattice_current::algebra::{Interval, LatticeGeometry, LocalOperator};
use lattice_current::freefermion::{boosted_fermi, QuadraticOp, WickEngine};
use lattice_current::identities::{dense_commutator, identity_suite};
use lattice_current::linalg::CMat;
use lattice_current::models::{fermion, parse_model, random_model, xxz};
use lattice_current::Complex64;
use proptest::prelude::*;

fn op(g: LatticeGeometry, start: i64, len: usize, entries: &[(f64, f64)]) -> LocalOperator {
    let dim = 1usize << len;
    let m = CMat::from_fn(dim, dim, |i, j| {
        let (re, im) = entries[(i * dim + j) % entries.len()];
        Complex64::new(re, im * ((i + 2 * j) % 3) as f64)
    });
    LocalOperator::new(g, Interval { start, len }, m).unwrap()
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 7..40)
}

fn operator() -> impl Strategy<Value = LocalOperator> {
    (-3i64..3, 1usize..=3, entries()).prop_map(|(s, l, e)| op(LatticeGeometry::chain(2), s, l, &e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jacobi_identity(a in operator(), b in operator(), c in operator()) {
        let t1 = a.commutator(&b.commutator(&c).unwrap()).unwrap();
        let t2 = b.commutator(&c.commutator(&a).unwrap()).unwrap();
        let t3 = c.commutator(&a.commutator(&b).unwrap()).unwrap();
        let total = LocalOperator::sum([&t1, &t2, &t3]).unwrap();
        let scale = a.max_abs() * b.max_abs() * c.max_abs() * total.dim() as f64;
        prop_assert!(total.max_abs() <= 1e-12 * scale.max(1.0), "{}", total.max_abs());
    }

    #[test]
    fn commutator_norm_bound(a in operator(), b in operator()) {
        let c = a.commutator(&b).unwrap().operator_norm();
        let bound = 2.0 * a.operator_norm() * b.operator_norm();
        prop_assert!(c <= bound * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn translation_and_embedding_keep_the_norm(a in operator(), x in -20i64..20, pad in 0usize..3) {
        let n = a.operator_norm();
        prop_assert_eq!(a.translate(x).unwrap().operator_norm(), n);
        let s = a.support();
        let wide = a.embed(Interval { start: s.start - pad as i64, len: s.len + 2 * pad }).unwrap();
        prop_assert!((wide.operator_norm() - n).abs() <= 1e-12 * n.max(1.0));
    }

    #[test]
    fn disjoint_commutators_are_exactly_zero(a in operator(), b in operator(), gap in 0i64..3) {
        let shift = a.support().end() + 1 + gap - b.support().start;
        let b = b.translate(shift).unwrap();
        prop_assert_eq!(a.commutator(&b).unwrap().max_abs(), 0.0);
        prop_assert_eq!(dense_commutator(&a, &b).unwrap().max_abs(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_models_satisfy_the_identities(seed in any::<u64>()) {
        let m = random_model(2, seed).unwrap();
        let r = identity_suite(&m, 6).unwrap();
        for c in &r.checks {
            prop_assert!(c.passed(), "seed {}: {} residual {:e}", seed, c.name, c.residual);
        }
    }

    #[test]
    fn builtin_models_round_trip(lambda in -2.0..2.0f64, t in 0.1..2.0f64, mu in -1.0..1.0f64, v in -1.0..1.0f64) {
        for m in [xxz(lambda), fermion(t, mu, v)] {
            let back = parse_model(&m.to_toml()).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn custom_models_round_trip(seed in any::<u64>()) {
        let m = random_model(2, seed).unwrap();
        prop_assert_eq!(parse_model(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn wick_correlators_are_stationary_and_covariant(
        phi in -1.0..1.0f64,
        z in -6i64..6,
        x in -10i64..10,
        s in -1.5..1.5f64,
        t in -2.0..2.0f64,
    ) {
        let e = WickEngine::new(boosted_fermi(64, 0.5, phi, 1.0, 0.0).unwrap());
        let (a, b) = (QuadraticOp::density(0), QuadraticOp::bond(z, 1.0, 0.0));
        let base = e.connected(&a, &b, t);
        let moved = e.connected(&a.shifted(x), &b.shifted(x), t);
        prop_assert!((moved - base).norm() < 1e-10);
        let via_shift = stationarity(&e, &a, &b, s, t);
        prop_assert!((via_shift - base).norm() < 1e-10, "{} vs {}", via_shift, base);
    }
}

/// `ω(Â(s) B̂(t + s))` with both operators evolved explicitly; stationarity
/// says this equals `ω(Â B̂(t))`.
fn stationarity(e: &WickEngine, a: &QuadraticOp, b: &QuadraticOp, s: f64, t: f64) -> Complex64 {
    let p = e.one_particle();
    let r = e.occupation().sites;
    let (am, bm) = (a.ring_matrix(r), b.ring_matrix(r));
    let (at, bt) = (p.evolve(&am, s), p.evolve(&bm, t + s));
    e.connected(&from_ring(&at), &from_ring(&bt), 0.0)
}

fn from_ring(m: &CMat) -> QuadraticOp {
    let r = m.nrows();
    let terms =
        (0..r).flat_map(|w| (0..r).map(move |x| (w, x))).map(|(w, x)| (w as i64, x as i64, m[(w, x)])).collect();
    QuadraticOp { terms, constant: Complex64::new(0.0, 0.0) }
}
