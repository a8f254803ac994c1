use lattice_current::bounds::{cone_profile, envelope_check, group_velocity_constant, ConeOptions};
use lattice_current::models::{fermion, xxz};

#[test]
fn xxz_cone_holds_and_decays_at_least_exponentially() {
    let m = xxz(1.0);
    let c = m.chain();
    let (a, b) = (m.charge_op(c, 0).unwrap(), m.bond_op(c, 0).unwrap());
    let xs: Vec<i64> = (-4..=4).collect();
    let ts = [-0.2, 0.0, 0.1, 0.2, 0.3];
    let p = cone_profile(&m, &a, &b, &xs, &ts, ConeOptions::default()).unwrap();
    assert_eq!(p.violations(), 0);
    assert_eq!(p.spacelike_max(&a, &b), 0.0);
    for t in [0.1, 0.2, 0.3] {
        let rates = p.decay_rates(t, 2, 1e-13);
        assert!(!rates.is_empty());
        for (x, r) in rates {
            assert!(r >= 1.0, "t={t} x={x}: rate {r}");
        }
    }
    let v = p.velocity.expect("front crosses the threshold");
    let two_v = 2.0 * group_velocity_constant(&m);
    assert!(v.is_finite() && v > 0.0 && v < two_v / 10.0, "{v} vs {two_v}");
}

#[test]
fn envelope_holds_for_other_couplings() {
    for m in [xxz(0.5), fermion(1.0, 0.2, 0.4)] {
        let r = envelope_check(&m, &[(2, 1), (3, 1)], &[0.004, 0.02], ConeOptions::default()).unwrap();
        assert_eq!(r.points.len(), 4);
        for p in &r.points {
            assert!(p.holds(), "{}: {p:?}", m.name);
            assert!(p.measured > 0.0);
        }
    }
}
