//! Quasi-free states of non-interacting fermions on large rings.
//!
//! Conventions: `c_x = R^{-1/2} Σ_k e^{ikx} c_k`, dispersion
//! `ε(k) = -2t cos k - μ`, so `c_y(t) = Σ_z U_{yz}(t) c_z` with
//! `U_{yz}(t) = R^{-1} Σ_k e^{ik(y-z)} e^{-iε(k)t}`.
//! Two-time contractions used throughout:
//!
//! * `ω(c_w† c_z(t)) = P_t(z-w)`, `P_t(d) = R^{-1} Σ_k n(k) e^{ikd} e^{-iε(k)t}`
//! * `ω(c_x c_y†(t)) = Q_t(x-y)`, `Q_t(d) = R^{-1} Σ_k (1-n(k)) e^{ikd} e^{iε(k)t}`

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::algebra::{spin, Interval, LocalOperator};
use crate::error::{domain, Error};
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::models::{ModelKind, ModelSpec};
use crate::Result;

/// Ring momenta `k_j = 2πj/R` for `j = -⌊(R-1)/2⌋ ..= ⌊R/2⌋`, so `k = π` is
/// included for even `R` and every momentum lies in `(-π, π]`.
pub fn momenta(r: usize) -> Vec<f64> {
    let lo = -(((r - 1) / 2) as i64);
    let hi = (r / 2) as i64;
    (lo..=hi).map(|j| 2.0 * PI * j as f64 / r as f64).collect()
}

/// Integer labels `j` of [`momenta`].
fn momentum_labels(r: usize) -> Vec<i64> {
    let lo = -(((r - 1) / 2) as i64);
    (lo..=(r / 2) as i64).collect()
}

/// Occupation numbers of the ring momenta for hopping `t` and chemical
/// potential `mu` (interaction `v = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct Occupation {
    pub sites: usize,
    pub n: Vec<f64>,
    pub hopping: f64,
    pub mu: f64,
}

impl Occupation {
    pub fn new(sites: usize, n: Vec<f64>, hopping: f64, mu: f64) -> Result<Self> {
        if sites < 2 {
            return Err(domain("ring needs at least 2 sites"));
        }
        if n.len() != sites {
            return Err(domain(format!("{} occupations for {sites} momenta", n.len())));
        }
        if n.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(domain("occupations must lie in [0, 1]"));
        }
        if !hopping.is_finite() || !mu.is_finite() {
            return Err(domain("hopping and chemical potential must be finite"));
        }
        Ok(Occupation { sites, n, hopping, mu })
    }

    /// Parameters `t`, `mu` from a fermion model, which must have `v = 0`.
    pub fn model_params(model: &ModelSpec) -> Result<(f64, f64)> {
        if model.kind != ModelKind::Fermion {
            return Err(Error::Unsupported("Wick contraction needs the fermion model".into()));
        }
        if model.param("v") != Some(0.0) {
            return Err(Error::Unsupported("Wick contraction needs v = 0 (quadratic Hamiltonian)".into()));
        }
        Ok((model.param("t").unwrap_or(0.0), model.param("mu").unwrap_or(0.0)))
    }

    /// `n(k) = 1/2` everywhere: the infinite-temperature state.
    pub fn infinite_temperature(sites: usize, hopping: f64, mu: f64) -> Result<Self> {
        Self::new(sites, vec![0.5; sites], hopping, mu)
    }

    pub fn momenta(&self) -> Vec<f64> {
        momenta(self.sites)
    }

    pub fn dispersion(&self, k: f64) -> f64 {
        -2.0 * self.hopping * k.cos() - self.mu
    }

    pub fn filling(&self) -> f64 {
        self.n.iter().sum::<f64>() / self.sites as f64
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Sharp Fermi sea of filling `nu` centred at momentum `phi`.
///
/// `n(k) = 1` when `|k - φ| < πν` (distance taken on the circle), `1/2` when a
/// grid momentum sits exactly on the edge, `0` otherwise. The half weight at a
/// tie keeps `n(k) = n(-k)` at `φ = 0` whatever the ring size.
pub fn boosted_fermi(sites: usize, nu: f64, phi: f64, hopping: f64, mu: f64) -> Result<Occupation> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(domain(format!("filling must lie in (0, 1], got {nu}")));
    }
    if !(phi > -PI - 1e-15 && phi <= PI) {
        return Err(domain(format!("boost must lie in (-π, π], got {phi}")));
    }
    let edge = PI * nu;
    let n = momenta(sites)
        .into_iter()
        .map(|k| {
            if nu >= 1.0 {
                return 1.0;
            }
            let dist = wrap_angle(k - phi).abs();
            if (dist - edge).abs() <= 1e-12 {
                0.5
            } else if dist < edge {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Occupation::new(sites, n, hopping, mu)
}

/// Boosted Fermi-Dirac occupation `n(k) = 1/(1 + e^{β ε(k - φ)})`.
pub fn fermi_dirac(sites: usize, beta: f64, phi: f64, hopping: f64, mu: f64) -> Result<Occupation> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(domain("inverse temperature must be finite and non-negative"));
    }
    let n = momenta(sites)
        .into_iter()
        .map(|k| {
            let e = -2.0 * hopping * (k - phi).cos() - mu;
            let x = beta * e;
            if x > 0.0 {
                let y = (-x).exp();
                y / (1.0 + y)
            } else {
                1.0 / (1.0 + x.exp())
            }
        })
        .collect();
    Occupation::new(sites, n, hopping, mu)
}

/// `ω(j_{0,1}) = (2t/R) Σ_k sin(k) n(k)`.
pub fn current_expectation(occ: &Occupation) -> f64 {
    let s: f64 = occ.momenta().iter().zip(&occ.n).map(|(k, n)| k.sin() * n).sum();
    2.0 * occ.hopping * s / occ.sites as f64
}

/// Fermion bilinear `Σ a_{wx} c_w† c_x + const`, sites on the infinite chain
/// (reduced mod R when contracted on a ring).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadraticOp {
    pub terms: Vec<(i64, i64, Complex64)>,
    pub constant: Complex64,
}

impl QuadraticOp {
    /// `n_x = c_x† c_x`.
    pub fn density(x: i64) -> Self {
        QuadraticOp { terms: vec![(x, x, ONE)], constant: ZERO }
    }

    /// `-t(c_{x+1}† c_x + c_x† c_{x+1}) - μ n_x`.
    pub fn bond(x: i64, hopping: f64, mu: f64) -> Self {
        let t = Complex64::new(-hopping, 0.0);
        let mut terms = vec![(x + 1, x, t), (x, x + 1, t)];
        if mu != 0.0 {
            terms.push((x, x, Complex64::new(-mu, 0.0)));
        }
        QuadraticOp { terms, constant: ZERO }
    }

    pub fn plus(&self, other: &QuadraticOp) -> QuadraticOp {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        QuadraticOp { terms, constant: self.constant + other.constant }
    }

    pub fn scaled(&self, s: Complex64) -> QuadraticOp {
        QuadraticOp { terms: self.terms.iter().map(|&(w, x, a)| (w, x, a * s)).collect(), constant: self.constant * s }
    }

    pub fn shifted(&self, by: i64) -> QuadraticOp {
        QuadraticOp {
            terms: self.terms.iter().map(|&(w, x, a)| (w + by, x + by, a)).collect(),
            constant: self.constant,
        }
    }

    /// Read off the bilinear form of a spin-level operator of the
    /// Jordan-Wigner fermion model. Fails if the operator is not of the form
    /// `Σ a c†c + const` to `1e-10`.
    pub fn from_local(op: &LocalOperator) -> Result<QuadraticOp> {
        if op.geometry().local_dim != 2 {
            return Err(Error::Unsupported("only spin-1/2 (fermion) operators are quadratic".into()));
        }
        let sup = op.support();
        let m = sup.len;
        let cdag: Vec<CMat> = (0..m).map(|i| jw_creation(m, i)).collect();
        let id = linalg::identity(1 << m);
        let dim = (1usize << m) as f64;
        let a = op.matrix();
        let hs = |b: &CMat| -> Complex64 { linalg::trace(linalg::matmul_adj_lhs(b.as_ref(), a).as_ref()) };
        let mut fit = linalg::zeros(1 << m, 1 << m);
        let mut terms = Vec::new();
        // Orthogonal basis under the trace form: 1, n_w - 1/2, c_w† c_x (w ≠ x).
        let mut constant = hs(&id) / dim;
        fit = linalg::add(fit.as_ref(), linalg::scale(id.as_ref(), constant).as_ref());
        for w in 0..m {
            for x in 0..m {
                let b = linalg::matmul_adj_rhs(cdag[w].as_ref(), cdag[x].as_ref());
                let basis = if w == x {
                    linalg::sub(b.as_ref(), linalg::scale(id.as_ref(), 0.5.into()).as_ref())
                } else {
                    b.clone()
                };
                let coef = hs(&basis) / (dim / 4.0);
                if coef.norm() > 1e-15 {
                    fit = linalg::add(fit.as_ref(), linalg::scale(basis.as_ref(), coef).as_ref());
                    terms.push((sup.start + w as i64, sup.start + x as i64, coef));
                    if w == x {
                        constant -= coef * 0.5;
                    }
                }
            }
        }
        let residual = linalg::max_abs_diff(fit.as_ref(), a);
        if residual > 1e-10 * op.max_abs().max(1.0) {
            return Err(Error::Unsupported(format!(
                "operator on {sup} is not a fermion bilinear (residual {residual:.2e})"
            )));
        }
        Ok(QuadraticOp { terms, constant })
    }

    /// Coefficient matrix on ring sites `0..R` (sites reduced mod R).
    pub fn ring_matrix(&self, r: usize) -> CMat {
        let mut m = linalg::zeros(r, r);
        for &(w, x, a) in &self.terms {
            m[(w.rem_euclid(r as i64) as usize, x.rem_euclid(r as i64) as usize)] += a;
        }
        m
    }
}

/// `c_i†` on `m` sites with the Jordan-Wigner string over sites `< i`.
fn jw_creation(m: usize, i: usize) -> CMat {
    let mut out = linalg::identity(1);
    let mz = linalg::scale(spin::sigma_z().as_ref(), Complex64::new(-1.0, 0.0));
    for s in 0..m {
        let f = match s.cmp(&i) {
            std::cmp::Ordering::Less => mz.clone(),
            std::cmp::Ordering::Equal => spin::sigma_plus(),
            std::cmp::Ordering::Greater => linalg::identity(2),
        };
        out = linalg::kron(out.as_ref(), f.as_ref());
    }
    out
}

/// Single-particle propagator and equal-time data.
#[derive(Clone, Debug)]
pub struct OneParticleData {
    pub sites: usize,
    pub energies: Vec<f64>,
    labels: Vec<i64>,
}

impl OneParticleData {
    pub fn new(occ: &Occupation) -> Self {
        let energies = occ.momenta().iter().map(|&k| occ.dispersion(k)).collect();
        OneParticleData { sites: occ.sites, energies, labels: momentum_labels(occ.sites) }
    }

    /// `U_{yz}(t) = R^{-1} Σ_k e^{ik(y-z)} e^{-iε(k)t}` on ring sites.
    pub fn propagator(&self, t: f64) -> CMat {
        let r = self.sites;
        let f = self.kernel(|_| 1.0, -t);
        CMat::from_fn(r, r, |y, z| f[(y + r - z) % r])
    }

    /// `g(d) = R^{-1} Σ_k w(k) e^{ikd} e^{i s ε(k)}` for `d = 0..R`.
    fn kernel(&self, w: impl Fn(usize) -> f64, s: f64) -> Vec<Complex64> {
        let r = self.sites;
        let unit: Vec<Complex64> = (0..r).map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / r as f64)).collect();
        let weights: Vec<Complex64> =
            (0..r).map(|i| Complex64::from_polar(w(i) / r as f64, s * self.energies[i])).collect();
        (0..r)
            .map(|d| {
                let mut acc = ZERO;
                for (i, &wi) in weights.iter().enumerate() {
                    if wi != ZERO {
                        let idx = (self.labels[i] * d as i64).rem_euclid(r as i64) as usize;
                        acc += wi * unit[idx];
                    }
                }
                acc
            })
            .collect()
    }

    /// `G_{xy} = ω(c_x† c_y)` on ring sites.
    pub fn correlation_matrix(&self, occ: &Occupation) -> CMat {
        let r = self.sites;
        let g = self.kernel(|i| occ.n[i], 0.0);
        CMat::from_fn(r, r, |x, y| g[(y + r - x) % r])
    }

    /// `B(t)` coefficients `U† b U`.
    pub fn evolve(&self, b: &CMat, t: f64) -> CMat {
        let u = self.propagator(t);
        linalg::matmul(linalg::matmul_adj_lhs(u.as_ref(), b.as_ref()).as_ref(), u.as_ref())
    }
}

/// Two-time contraction tables at one time.
#[derive(Clone, Debug)]
pub struct WickTables {
    pub t: f64,
    p: Vec<Complex64>,
    q: Vec<Complex64>,
}

/// Correlators of bilinears in a quasi-free state.
#[derive(Clone, Debug)]
pub struct WickEngine {
    occ: Occupation,
    one: OneParticleData,
    g: Vec<Complex64>,
}

impl WickEngine {
    pub fn new(occ: Occupation) -> Self {
        let one = OneParticleData::new(&occ);
        let g = one.kernel(|i| occ.n[i], 0.0);
        WickEngine { occ, one, g }
    }

    pub fn occupation(&self) -> &Occupation {
        &self.occ
    }

    pub fn one_particle(&self) -> &OneParticleData {
        &self.one
    }

    fn wrap(&self, d: i64) -> usize {
        d.rem_euclid(self.occ.sites as i64) as usize
    }

    pub fn tables(&self, t: f64) -> WickTables {
        let n = &self.occ.n;
        WickTables { t, p: self.one.kernel(|i| n[i], -t), q: self.one.kernel(|i| 1.0 - n[i], t) }
    }

    /// `ω(A)`.
    pub fn expect(&self, a: &QuadraticOp) -> Complex64 {
        a.terms.iter().map(|&(w, x, c)| c * self.g[self.wrap(x - w)]).sum::<Complex64>() + a.constant
    }

    /// `ω(Â B̂(t))` from precomputed tables.
    pub fn connected_with(&self, tab: &WickTables, a: &QuadraticOp, b: &QuadraticOp) -> Complex64 {
        let mut sum = ZERO;
        for &(w, x, ca) in &a.terms {
            for &(y, z, cb) in &b.terms {
                sum += ca * cb * tab.p[self.wrap(z - w)] * tab.q[self.wrap(x - y)];
            }
        }
        sum
    }

    /// `ω(Â B̂(t))`.
    pub fn connected(&self, a: &QuadraticOp, b: &QuadraticOp, t: f64) -> Complex64 {
        self.connected_with(&self.tables(t), a, b)
    }

    /// `ω(A B(t))`, including the disconnected part.
    pub fn two_time(&self, a: &QuadraticOp, b: &QuadraticOp, t: f64) -> Complex64 {
        self.connected(a, b, t) + self.expect(a) * self.expect(b)
    }

    /// `ω([A, B(t)])` through the one-particle route: the commutator of
    /// bilinears is the bilinear of the coefficient commutator.
    pub fn commutator_via_propagator(&self, a: &QuadraticOp, b: &QuadraticOp, t: f64) -> Complex64 {
        let r = self.occ.sites;
        let am = a.ring_matrix(r);
        let bt = self.one.evolve(&b.ring_matrix(r), t);
        let c = linalg::commutator(am.as_ref(), bt.as_ref());
        let g = self.one.correlation_matrix(&self.occ);
        let mut sum = ZERO;
        for w in 0..r {
            for x in 0..r {
                sum += c[(w, x)] * g[(w, x)];
            }
        }
        sum
    }
}

/// `ω(Â B̂(t))` for spin-level operators of the fermion model.
pub fn wick_two_time(engine: &WickEngine, a: &LocalOperator, b: &LocalOperator, t: f64) -> Result<Complex64> {
    Ok(engine.connected(&QuadraticOp::from_local(a)?, &QuadraticOp::from_local(b)?, t))
}

/// Support helper for bilinears: `[min site, max site]`.
pub fn quadratic_support(a: &QuadraticOp) -> Option<Interval> {
    let lo = a.terms.iter().map(|&(w, x, _)| w.min(x)).min()?;
    let hi = a.terms.iter().map(|&(w, x, _)| w.max(x)).max()?;
    Some(Interval { start: lo, len: (hi - lo + 1) as usize })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{EdCorrelator, EdOptions, EdSystem, StateKind};
    use crate::models::fermion;

    #[test]
    fn momentum_window() {
        let k = momenta(4);
        assert_eq!(k.len(), 4);
        assert!((k[0] + PI / 2.0).abs() < 1e-15 && (k[3] - PI).abs() < 1e-15);
        let k5 = momenta(5);
        assert!(k5.iter().all(|&x| x > -PI && x <= PI));
        assert_eq!(k5.len(), 5);
    }

    #[test]
    fn current_vanishes_without_boost_or_for_full_band() {
        for r in [8, 9, 256] {
            for nu in [0.25, 0.5, 0.3] {
                let occ = boosted_fermi(r, nu, 0.0, 1.0, 0.0).unwrap();
                assert!(current_expectation(&occ).abs() < 1e-14, "{r} {nu}");
            }
            let full = boosted_fermi(r, 1.0, 0.7, 1.0, 0.0).unwrap();
            assert!(current_expectation(&full).abs() < 1e-14);
        }
    }

    #[test]
    fn boosted_current_oracle() {
        // Independent evaluation: count occupied labels directly.
        let (r, nu, phi) = (256usize, 0.5, PI / 8.0);
        let occ = boosted_fermi(r, nu, phi, 1.0, 0.0).unwrap();
        let mut s = 0.0;
        for j in -127i64..=128 {
            let k = 2.0 * PI * j as f64 / 256.0;
            // |k - φ| < π/2 on the circle, with k - φ in (-π, π] after wrapping.
            let mut d = k - phi;
            if d > PI {
                d -= 2.0 * PI;
            }
            if d <= -PI {
                d += 2.0 * PI;
            }
            let w = if (d.abs() - PI / 2.0).abs() < 1e-12 {
                0.5
            } else if d.abs() < PI / 2.0 {
                1.0
            } else {
                0.0
            };
            s += w * k.sin();
        }
        let oracle = 2.0 * s / 256.0;
        assert!((current_expectation(&occ) - oracle).abs() < 1e-14);
        assert!((occ.filling() - 0.5).abs() < 1e-12);
        // Continuum value (2/π) sin(πν) sin φ at large R.
        let continuum = 2.0 / PI * (PI * nu).sin() * phi.sin();
        assert!((oracle - continuum).abs() < 1e-3, "{oracle} {continuum}");
    }

    #[test]
    fn propagator_is_a_unitary_group() {
        let occ = boosted_fermi(12, 0.5, 0.3, 1.0, 0.2).unwrap();
        let one = OneParticleData::new(&occ);
        let u0 = one.propagator(0.0);
        assert!(linalg::max_abs_diff(u0.as_ref(), linalg::identity(12).as_ref()) < 1e-14);
        let u = one.propagator(0.7);
        let uu = linalg::matmul_adj_lhs(u.as_ref(), u.as_ref());
        assert!(linalg::max_abs_diff(uu.as_ref(), linalg::identity(12).as_ref()) < 1e-12);
        let prod = linalg::matmul(one.propagator(0.3).as_ref(), one.propagator(0.4).as_ref());
        assert!(linalg::max_abs_diff(prod.as_ref(), u.as_ref()) < 1e-12);
    }

    #[test]
    fn infinite_temperature_density_fluctuation() {
        let occ = Occupation::infinite_temperature(16, 1.0, 0.0).unwrap();
        let e = WickEngine::new(occ);
        let n0 = QuadraticOp::density(0);
        assert!((e.connected(&n0, &n0, 0.0) - 0.25).norm() < 1e-14);
        assert!((e.expect(&n0) - 0.5).norm() < 1e-14);
    }

    #[test]
    fn bilinear_fit_recovers_model_operators() {
        let m = fermion(1.3, 0.4, 0.0);
        let c = m.chain();
        let h = QuadraticOp::from_local(&m.bond_op(c, 2).unwrap()).unwrap();
        let mut terms = h.terms.clone();
        terms.sort_by_key(|&(w, x, _)| (w, x));
        let expect = [(2, 2, -0.4), (2, 3, -1.3), (3, 2, -1.3)];
        assert_eq!(terms.len(), 3);
        for ((w, x, a), (w2, x2, b)) in terms.iter().zip(expect) {
            assert_eq!((*w, *x), (w2, x2));
            assert!((a - Complex64::new(b, 0.0)).norm() < 1e-14);
        }
        assert!(h.constant.norm() < 1e-14);
        // The interacting bond is not a bilinear.
        let hv = fermion(1.0, 0.0, 0.5).bond_op(c, 0).unwrap();
        assert!(matches!(QuadraticOp::from_local(&hv), Err(Error::Unsupported(_))));
        // Energy current of the free model is.
        assert!(QuadraticOp::from_local(&m.energy_current(c, 0).unwrap()).is_ok());
    }

    #[test]
    fn routes_agree() {
        let occ = boosted_fermi(32, 0.5, 0.6, 1.0, 0.1).unwrap();
        let e = WickEngine::new(occ);
        let a = QuadraticOp::density(0);
        for z in -3..=3 {
            let b = QuadraticOp::bond(z, 1.0, 0.1);
            for t in [0.0, 0.4, 1.1] {
                let conn_ab = e.connected(&a, &b, t);
                // ω([A, B(t)]) = ω(Â B̂(t)) - ω(B̂(t) Â), and ω(B̂(t)Â) = ω(B̂ Â(-t)).
                let conn_ba = e.connected(&b, &a, -t);
                let comm = e.commutator_via_propagator(&a, &b, t);
                assert!((conn_ab - conn_ba - comm).norm() < 1e-12, "{z} {t}");
            }
        }
    }

    #[test]
    fn matches_exact_diagonalization() {
        let r = 8;
        let m = fermion(1.0, 0.2, 0.0);
        let occ = boosted_fermi(r, 0.5, PI / 4.0, 1.0, 0.2).unwrap();
        // Sites -3..=4 fill the ring; origin 3 keeps every operator off the seam.
        let opts = EdOptions { origin: Some(3), ..EdOptions::default() };
        let sys = EdSystem::new(&m, r, opts).unwrap();
        let st = sys.state(&StateKind::Occupation(occ.n.clone())).unwrap();
        let ed = EdCorrelator { system: &sys, state: &st };
        let e = WickEngine::new(occ.clone());
        let c = m.chain();
        let j = m.current(c, 0).unwrap();
        let ej = ed.expect(&j).unwrap();
        assert!((ej.re - current_expectation(&occ)).abs() < 1e-10 && ej.im.abs() < 1e-10);
        assert!(current_expectation(&occ).abs() > 0.1);
        let n0 = m.charge_op(c, 0).unwrap();
        for z in -3..=3 {
            let h = m.bond_op(c, z).unwrap();
            for t in [0.0, 0.5, 1.0] {
                let a = ed.connected(&n0, &h, t).unwrap();
                let b = wick_two_time(&e, &n0, &h, t).unwrap();
                assert!((a - b).norm() < 1e-10, "z={z} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn clustering_decays() {
        let occ = boosted_fermi(256, 0.5, PI / 8.0, 1.0, 0.0).unwrap();
        let e = WickEngine::new(occ);
        let a = QuadraticOp::density(0);
        let envelope = |lo: i64, hi: i64| -> f64 {
            (lo..hi).map(|z| e.connected(&a, &QuadraticOp::bond(z, 1.0, 0.0), 0.0).norm()).fold(0.0, f64::max)
        };
        let octaves: Vec<f64> =
            [(2, 4), (4, 8), (8, 16), (16, 32), (32, 64)].iter().map(|&(a, b)| envelope(a, b)).collect();
        for w in octaves.windows(2) {
            assert!(w[1] < w[0], "{octaves:?}");
        }
    }
}
