//! Acceptance suite: one PASS/FAIL line per criterion, then a nonzero exit if
//! any failed. Runs without the libtest harness so the lines always print.

use std::f64::consts::PI;
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use lattice_current::bounds::{cone_profile, envelope_check, ConeOptions};
use lattice_current::dynamics::{EdCorrelator, EdOptions, EdSystem, StateKind};
use lattice_current::freefermion::{boosted_fermi, fermi_dirac, wick_two_time, WickEngine};
use lattice_current::identities::identity_suite;
use lattice_current::models::{fermion, xxz};
use lattice_current::sumrule::{
    correlation_grid, lemma_target, sumrule_integral, sumrule_integral_direct, term_decomposition, theorem_sumrule,
    CorrelationSource, TestWindow, WickSource,
};
use lattice_current::{Exec, Result};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { passed, detail })
}

const MIN: u64 = 60;

// 1. identity suite on both built-ins, 6 to 10 sites, residual <= 1e-12
fn identities() -> Result<Verdict> {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for m in [xxz(1.0), fermion(1.0, 0.0, 0.5)] {
        for sites in [6, 8, 10] {
            let r = identity_suite(&m, sites)?;
            ok &= r.all_pass() && r.max_residual() <= 1e-12;
            worst = worst.max(r.max_residual());
        }
    }
    verdict(ok, format!("max residual {worst:.2e} (limit 1e-12)"))
}

// 2. exact diagonalization against Wick contraction on R = 8
fn ed_vs_wick() -> Result<Verdict> {
    let r = 8;
    let mut worst: f64 = 0.0;
    let states = [(0.0, boosted_fermi(r, 0.5, PI / 4.0, 1.0, 0.0)?), (0.2, fermi_dirac(r, 1.0, 0.3, 1.0, 0.2)?)];
    for (mu, occ) in states {
        let m = fermion(1.0, mu, 0.0);
        let sys = EdSystem::new(&m, r, EdOptions { origin: Some(3), ..EdOptions::default() })?;
        let st = sys.state(&StateKind::Occupation(occ.n.clone()))?;
        let ed = EdCorrelator { system: &sys, state: &st };
        let engine = WickEngine::new(occ);
        let c = m.chain();
        let n0 = m.charge_op(c, 0)?;
        for z in -3..=3 {
            let h = m.bond_op(c, z)?;
            for t in [0.0, 0.5, 1.0] {
                worst = worst.max((ed.connected(&n0, &h, t)? - wick_two_time(&engine, &n0, &h, t)?).norm());
            }
        }
    }
    verdict(worst <= 1e-8, format!("max |ED - Wick| {worst:.2e} (limit 1e-8)"))
}

// 3. measured commutators under the explicit light-cone bound
fn lieb_robinson() -> Result<Verdict> {
    let m = xxz(1.0);
    let c = m.chain();
    let (a, b) = (m.charge_op(c, 0)?, m.bond_op(c, 0)?);
    let xs: Vec<i64> = (-5..=5).collect();
    let ts: Vec<f64> = (-5..=5).map(|i| i as f64 / 10.0).collect();
    let p = cone_profile(&m, &a, &b, &xs, &ts, ConeOptions::default())?;
    let valid = p.points.iter().filter(|q| q.bound.is_some()).count();
    let spacelike = p.spacelike_max(&a, &b);
    verdict(
        p.violations() == 0 && valid > 0 && spacelike <= 1e-12,
        format!(
            "ring {}, {} violations at {valid} valid points, spacelike max {spacelike:.2e} (limit 1e-12)",
            p.ring,
            p.violations()
        ),
    )
}

// 4. measured deviation under the sum-rule envelope
fn envelope() -> Result<Verdict> {
    let r = envelope_check(&xxz(1.0), &[(4, 2), (5, 2)], &[0.005, 0.01, 0.02], ConeOptions::default())?;
    let worst = r.points.iter().map(|p| p.measured / p.envelope).fold(0.0, f64::max);
    verdict(
        r.points.len() == 6 && r.points.iter().all(|p| p.holds()),
        format!("ring {}, worst measured/envelope {worst:.2e}", r.ring),
    )
}

fn window() -> Result<TestWindow> {
    TestWindow::gaussian(1.5, 6.0, 0.05)
}

fn sea(phi: f64) -> Result<WickSource> {
    Ok(WickSource::new(boosted_fermi(256, 0.5, phi, 1.0, 0.0)?))
}

// 5. finite-region sum rule in the right order of limits, and the swapped order
fn lemma() -> Result<Verdict> {
    let (src, w) = (sea(PI / 8.0)?, window()?);
    let grid = correlation_grid(&src, -(64 + 128), 128, &w.times(), Exec::default())?;
    let devs: Vec<f64> =
        [16, 32, 64].iter().map(|&l| sumrule_integral(&grid, &w, l, 16).map(|p| p.rel_dev)).collect::<Result<_>>()?;
    let swapped = sumrule_integral(&grid, &w, 16, 128)?;
    let target = lemma_target(src.current(), &w);
    // the grid route against region operators contracted directly
    let direct = sumrule_integral_direct(&src, &w, 64, 16, Exec::default())?;
    let last = sumrule_integral(&grid, &w, 64, 16)?;
    let routes = (direct.value - last.value).abs() <= 1e-10 * target.abs();
    let ok = devs[2] <= 0.05
        && devs[0] > devs[1]
        && devs[1] > devs[2]
        && swapped.value.abs() <= 0.05 * target.abs()
        && routes
        && target.abs() > 0.1;
    verdict(
        ok,
        format!(
            "rel dev L=16,32,64: {:.2e} {:.2e} {:.2e} (limit 5e-2 at L=64); swapped |value|/target {:.2e}; routes agree {routes}",
            devs[0],
            devs[1],
            devs[2],
            swapped.value.abs() / target.abs()
        ),
    )
}

// 6. three-term split at M = 8, 16, 32
fn decomposition() -> Result<Verdict> {
    let (src, w) = (sea(PI / 8.0)?, window()?);
    let grid = correlation_grid(&src, -(128 + 32), 32, &w.times(), Exec::default())?;
    let terms = [8, 16, 32].iter().map(|&m| term_decomposition(&grid, &w, m, 128)).collect::<Result<Vec<_>>>()?;
    let decreasing =
        terms.windows(2).all(|p| p[1].term8.abs() < p[0].term8.abs() && p[1].term9.abs() < p[0].term9.abs());
    let direct = sumrule_integral_direct(&src, &w, 128, 16, Exec::default())?.value;
    let split = (terms[1].sum() - direct).abs() / direct.abs();
    verdict(
        decreasing && split <= 1e-6,
        format!(
            "|term8| {:.1e} {:.1e} {:.1e}, |term9| {:.1e} {:.1e} {:.1e}; split vs direct at M=16 {split:.1e} (limit 1e-6)",
            terms[0].term8.abs(),
            terms[1].term8.abs(),
            terms[2].term8.abs(),
            terms[0].term9.abs(),
            terms[1].term9.abs(),
            terms[2].term9.abs()
        ),
    )
}

// 7. smeared spectral sum rule, boosted sea and equilibrium control
fn theorem() -> Result<Verdict> {
    let w = window()?;
    let boosted = theorem_sumrule(&correlation_grid(&sea(PI / 8.0)?, -64, 64, &w.times(), Exec::default())?, &w)?;
    let eq = theorem_sumrule(&correlation_grid(&sea(0.0)?, -64, 64, &w.times(), Exec::default())?, &w)?;
    let control = eq.value.norm() / boosted.target.abs();
    verdict(
        boosted.rel_dev <= 0.10 && control <= 1e-3,
        format!(
            "boosted rel dev {:.2e} (limit 0.1); equilibrium |S|/reference {control:.2e} (limit 1e-3)",
            boosted.rel_dev
        ),
    )
}

// 8. repeated CLI runs give byte-identical CSVs
fn determinism() -> Result<Verdict> {
    let dir = std::env::temp_dir().join(format!("lattice-current-acceptance-{}", std::process::id()));
    let mut identical = true;
    let mut compared = 0;
    for (cmd, files) in
        [("sumrule", &["sumrule.csv", "terms.csv"][..]), ("spectrum", &["grid.csv", "spectral.csv", "theorem.csv"][..])]
    {
        let mut runs = Vec::new();
        for k in 0..2 {
            let out = dir.join(format!("{cmd}{k}"));
            let st = Command::new(env!("CARGO_BIN_EXE_lattice-current"))
                .args([cmd, "--out"])
                .arg(&out)
                .output()
                .expect("cli runs");
            identical &= st.status.success();
            runs.push(out);
        }
        for f in files {
            let a = fs::read(runs[0].join(f)).unwrap_or_default();
            let b = fs::read(runs[1].join(f)).unwrap_or_default();
            identical &= !a.is_empty() && a == b;
            compared += 1;
        }
    }
    let _ = fs::remove_dir_all(&dir);
    verdict(identical, format!("{compared} CSV files compared across two runs each"))
}

fn main() {
    type Check = fn() -> Result<Verdict>;
    let criteria: [(&str, Check, Duration); 8] = [
        ("operator identities", identities, Duration::from_secs(10)),
        ("ED vs Wick correlators", ed_vs_wick, Duration::from_secs(MIN)),
        ("Lieb-Robinson bound", lieb_robinson, Duration::from_secs(5 * MIN)),
        ("sum-rule envelope", envelope, Duration::from_secs(5 * MIN)),
        ("finite-region sum rule", lemma, Duration::from_secs(10 * MIN)),
        ("three-term decomposition", decomposition, Duration::from_secs(10 * MIN)),
        ("spectral sum rule", theorem, Duration::from_secs(10 * MIN)),
        ("CLI determinism", determinism, Duration::from_secs(10 * MIN)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let (passed, detail) = match result {
            Ok(v) => (v.passed && took <= *budget, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        println!(
            "criterion {} {:<26} {} {} [{:.1}s, budget {}s]",
            i + 1,
            name,
            if passed { "PASS" } else { "FAIL" },
            detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
