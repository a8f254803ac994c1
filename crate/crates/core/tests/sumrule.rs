use std::f64::consts::PI;

use lattice_current::freefermion::boosted_fermi;
use lattice_current::sumrule::{
    correlation_grid, lemma_target, sumrule_integral, theorem_sumrule, CorrelationSource, TestWindow, WickSource,
};
use lattice_current::Exec;

fn setup() -> (WickSource, TestWindow) {
    let src = WickSource::new(boosted_fermi(256, 0.5, PI / 8.0, 1.0, 0.0).unwrap());
    (src, TestWindow::gaussian(1.5, 6.0, 0.05).unwrap())
}

#[test]
fn target_matches_the_infinite_volume_closed_form() {
    let (src, w) = setup();
    // occupied band [φ - πν, φ + πν] carries (2t/π) sin(πν) sin φ
    let current = 2.0 / PI * (PI / 8.0).sin();
    assert!((src.current() - current).abs() < 1e-3 * current);
    // the gaussian transform at zero is σ·erf(T/(σ√2)); the tail beyond 4σ is below 1e-4
    let target = (2.0 * PI).sqrt() * current * 1.5;
    assert!((lemma_target(src.current(), &w) - target).abs() < 2e-3 * target);
}

#[test]
fn deviation_falls_with_m_at_fixed_ratio() {
    let (src, w) = setup();
    let grid = correlation_grid(&src, -160, 32, &w.times(), Exec::default()).unwrap();
    let devs: Vec<f64> = [8, 16, 32].iter().map(|&m| sumrule_integral(&grid, &w, 4 * m, m).unwrap().rel_dev).collect();
    assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");
}

#[test]
fn limits_do_not_commute() {
    let (src, w) = setup();
    let grid = correlation_grid(&src, -144, 128, &w.times(), Exec::default()).unwrap();
    let right = sumrule_integral(&grid, &w, 64, 16).unwrap();
    let wrong = sumrule_integral(&grid, &w, 16, 128).unwrap();
    assert!(right.rel_dev < 1e-3);
    assert!((wrong.value - wrong.target).abs() > 100.0 * (right.value - right.target).abs());
}

#[test]
fn the_two_sum_rules_agree() {
    let (src, w) = setup();
    let grid = correlation_grid(&src, -96, 64, &w.times(), Exec::default()).unwrap();
    let lemma = sumrule_integral(&grid, &w, 64, 16).unwrap();
    let theorem = theorem_sumrule(&grid.restrict(-64, 64).unwrap(), &w).unwrap();
    let from_lemma = lemma.value / (2.0 * PI).sqrt();
    assert!((theorem.value.re - from_lemma).abs() < 0.1 * from_lemma.abs());
    assert!((theorem.target - lemma.target / (2.0 * PI).sqrt()).abs() < 1e-12);
}

#[test]
fn shifting_the_construction_changes_nothing() {
    let (_, w) = setup();
    let occ = boosted_fermi(256, 0.5, PI / 8.0, 1.0, 0.0).unwrap();
    let times = w.times();
    let a = correlation_grid(&WickSource::new(occ.clone()), -48, 16, &times, Exec::default()).unwrap();
    let b = correlation_grid(&WickSource::new(occ).with_offset(1), -48, 16, &times, Exec::default()).unwrap();
    let (va, vb) = (sumrule_integral(&a, &w, 32, 16).unwrap(), sumrule_integral(&b, &w, 32, 16).unwrap());
    assert!((va.value - vb.value).abs() < 1e-8);
}
