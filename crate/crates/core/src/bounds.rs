//! Lieb-Robinson bound with explicit constants, the sum-rule deviation
//! envelope `Z_{M,L}(t)`, and the measured commutator norms they bound.
//!
//! Support sizes `dA`, `dB` are site counts (1 for `n_x`, 2 for `h` and `j`,
//! 3 for `J`). With that reading the bound reproduces the prefactors and
//! exponents used when it is applied to `[n_z, J_0(s)]` and `[j, J_{-M}]`.

use std::f64::consts::E;

use crate::algebra::LocalOperator;
use crate::dynamics::{interval as region, ring_guard, EdOptions, EdSystem, GuardReport};
use crate::error::domain;
use crate::models::{ModelKind, ModelSpec};
use crate::Result;

/// `V(h) = 4 (N+1)^4 e^2 ‖h‖`.
pub fn group_velocity_constant(model: &ModelSpec) -> f64 {
    let d = model.local_dim as f64;
    let h = model.bond_op(model.chain(), 0).expect("bond fits the chain").operator_norm();
    4.0 * d.powi(4) * E * E * h
}

/// Inputs of the bound for one pair of operators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrParams {
    pub v: f64,
    pub local_dim: usize,
    pub d_a: usize,
    pub d_b: usize,
    pub norm_a: f64,
    pub norm_b: f64,
}

impl LrParams {
    pub fn for_operators(model: &ModelSpec, a: &LocalOperator, b: &LocalOperator) -> Self {
        LrParams {
            v: group_velocity_constant(model),
            local_dim: model.local_dim,
            d_a: a.support().len,
            d_b: b.support().len,
            norm_a: a.operator_norm(),
            norm_b: b.operator_norm(),
        }
    }

    /// `2 (N+1)^{dA+dB} ‖A‖‖B‖ dA dB`.
    pub fn prefactor(&self) -> f64 {
        let d = self.local_dim as f64;
        2.0 * d.powi((self.d_a + self.d_b) as i32) * self.norm_a * self.norm_b * (self.d_a * self.d_b) as f64
    }

    /// Whether `|x| > dA + dB`, where the bound applies.
    pub fn valid(&self, x: i64) -> bool {
        x.unsigned_abs() as usize > self.d_a + self.d_b
    }
}

/// Upper bound on `‖[τ_x α_t(A), B]‖`:
/// `prefactor · exp(-(|x| - dA - dB) + 2V|t|)`.
pub fn lr_bound(p: &LrParams, x: i64, t: f64) -> Result<f64> {
    if !p.valid(x) {
        return Err(domain(format!("bound needs |x| > dA + dB = {}, got x = {x}", p.d_a + p.d_b)));
    }
    let gap = x.unsigned_abs() as f64 - (p.d_a + p.d_b) as f64;
    Ok(p.prefactor() * (-gap + 2.0 * p.v * t.abs()).exp())
}

/// Norms entering `Z_{M,L}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeNorms {
    pub charge: f64,
    pub current: f64,
    pub energy_current: f64,
    pub v: f64,
    pub local_dim: usize,
}

impl EnvelopeNorms {
    pub fn of(model: &ModelSpec) -> Result<Self> {
        let c = model.chain();
        Ok(EnvelopeNorms {
            charge: model.charge_op(c, 0)?.operator_norm(),
            current: model.current(c, 0)?.operator_norm(),
            energy_current: model.energy_current(c, 0)?.operator_norm(),
            v: group_velocity_constant(model),
            local_dim: model.local_dim,
        })
    }
}

/// `Z_{M,L}(t)`, the bound on
/// `‖[N_{[-L,0]}, H_{[-M,M+1]}(t)] - [N_{[-L,0]}, H_{[-M,M+1]}]‖`.
pub fn z_envelope(norms: &EnvelopeNorms, m: usize, l: usize, t: f64) -> Result<f64> {
    if m == 0 || l < m {
        return Err(domain(format!("envelope needs L >= M > 0, got L = {l}, M = {m}")));
    }
    let d = norms.local_dim as f64;
    let (m, l, t) = (m as f64, l as f64, t.abs());
    let v2 = 2.0 * norms.v;
    // (e^{2V|t|} - 1)/(2V), with its V -> 0 limit |t|.
    let growth = if v2 == 0.0 { t } else { (v2 * t).exp_m1() / v2 };
    // ((e^{2V|t|} - 1)/(2V) - |t|)/(2V), with its V -> 0 limit t^2/2.
    let second = if v2 == 0.0 {
        t * t / 2.0
    } else {
        let x = v2 * t;
        if x < 1e-4 {
            t * t / 2.0 * (1.0 + x / 3.0 + x * x / 12.0)
        } else {
            (growth - t) / v2
        }
    };
    let term1 = 6.0
        * d.powi(4)
        * norms.charge
        * norms.energy_current
        * ((-m).exp() / (1.0 - (-1.0f64).exp()))
        * E.powi(3)
        * growth;
    let term2 =
        12.0 * E.powi(5) * d.powi(5) * norms.current * norms.energy_current * ((-m).exp() + (-(l - m)).exp()) * second;
    Ok(term1 + term2)
}

/// One measured point of the cone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConePoint {
    pub x: i64,
    pub t: f64,
    pub measured: f64,
    /// `None` where the bound does not apply.
    pub bound: Option<f64>,
}

impl ConePoint {
    pub fn violates(&self) -> bool {
        self.bound.is_some_and(|b| self.measured > b)
    }
}

#[derive(Clone, Debug)]
pub struct ConeProfile {
    pub points: Vec<ConePoint>,
    pub ring: usize,
    pub guard: GuardReport,
    pub params: LrParams,
    /// Least-squares slope of the front position against `|t|`.
    pub velocity: Option<f64>,
}

impl ConeProfile {
    pub fn violations(&self) -> usize {
        self.points.iter().filter(|p| p.violates()).count()
    }

    /// Max measured value at `t = 0` among points whose supports are disjoint.
    pub fn spacelike_max(&self, a: &LocalOperator, b: &LocalOperator) -> f64 {
        self.points
            .iter()
            .filter(|p| p.t == 0.0 && disjoint_after_shift(a, b, p.x))
            .map(|p| p.measured)
            .fold(0.0, f64::max)
    }

    /// `ln m(x) - ln m(x+1)` along the tail `x > 0` at time `t`, for points
    /// above `floor`.
    pub fn decay_rates(&self, t: f64, from: i64, floor: f64) -> Vec<(i64, f64)> {
        let mut row: Vec<&ConePoint> = self.points.iter().filter(|p| p.t == t && p.x >= from).collect();
        row.sort_by_key(|p| p.x);
        row.windows(2)
            .filter(|w| w[1].x == w[0].x + 1 && w[1].measured > floor)
            .map(|w| (w[0].x, (w[0].measured / w[1].measured).ln()))
            .collect()
    }
}

fn disjoint_after_shift(a: &LocalOperator, b: &LocalOperator, x: i64) -> bool {
    let sa = a.support().shifted(x);
    let sb = b.support();
    sa.end() < sb.start || sb.end() < sa.start
}

/// Settings for [`cone_profile`].
#[derive(Clone, Copy, Debug)]
pub struct ConeOptions {
    pub guard_tol: f64,
    pub guard_start: usize,
    /// Level whose crossing marks the front in each time slice.
    pub front_threshold: f64,
    pub ed: EdOptions,
}

impl Default for ConeOptions {
    fn default() -> Self {
        ConeOptions { guard_tol: 1e-6, guard_start: 6, front_threshold: 1e-3, ed: EdOptions::default() }
    }
}

/// Smallest ring holding `τ_x A` and `B` for every `x` in `xs` with the two
/// separated on both sides.
pub fn cone_ring(a: &LocalOperator, b: &LocalOperator, xs: &[i64]) -> usize {
    let reach = xs.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
    2 * reach + a.support().len + b.support().len - 1
}

/// Measure `‖[τ_x α_t(A), B]‖` on a guarded ring for every `(x, t)`.
pub fn cone_profile(
    model: &ModelSpec,
    a: &LocalOperator,
    b: &LocalOperator,
    xs: &[i64],
    ts: &[f64],
    opts: ConeOptions,
) -> Result<ConeProfile> {
    let t_max = ts.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let guard = ring_guard(model, a, t_max.max(1e-3), opts.guard_tol, opts.guard_start, opts.ed)?;
    let ring = guard.sites.max(cone_ring(a, b, xs));
    let sys = EdSystem::new(model, ring, opts.ed)?;
    let params = LrParams::for_operators(model, a, b);
    let exec = opts.ed.exec;
    let spin = model.kind == ModelKind::Spin;
    let mut points = Vec::with_capacity(xs.len() * ts.len());
    if spin {
        // Ring dynamics commute with translations: [τ_x α_t(A), B] has the
        // norm of [α_t(A), τ_{-x} B].
        let fa = sys.full(a)?;
        let shifted = xs.iter().map(|&x| sys.sparse(&b.translate(-x)?)).collect::<Result<Vec<_>>>()?;
        for &t in ts {
            let at = sys.evolve(&fa, t);
            let norms = exec.try_map(shifted.iter().collect(), |sb| sys.norm(&sys.commutator_sparse(&at, sb)))?;
            for (&x, m) in xs.iter().zip(norms) {
                points.push(ConePoint { x, t, measured: m, bound: lr_bound(&params, x, t).ok() });
            }
        }
    } else {
        let sb = sys.sparse(b)?;
        for &t in ts {
            let norms = exec.try_map(xs.to_vec(), |x| {
                let at = sys.evolve(&sys.full(&a.translate(x)?)?, t);
                sys.norm(&sys.commutator_sparse(&at, &sb))
            })?;
            for (&x, m) in xs.iter().zip(norms) {
                points.push(ConePoint { x, t, measured: m, bound: lr_bound(&params, x, t).ok() });
            }
        }
    }
    let velocity = fit_velocity(&points, opts.front_threshold);
    Ok(ConeProfile { points, ring, guard, params, velocity })
}

/// Front `x_f(t)`: where `ln m` crosses `ln θ` on the right tail, by linear
/// interpolation in `x`; velocity is the least-squares slope of `x_f` against
/// `|t|` over `t > 0`.
pub fn fit_velocity(points: &[ConePoint], threshold: f64) -> Option<f64> {
    let mut ts: Vec<f64> = points.iter().map(|p| p.t).filter(|t| *t > 0.0).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut samples = Vec::new();
    for t in ts {
        let mut row: Vec<&ConePoint> = points.iter().filter(|p| p.t == t && p.x >= 0).collect();
        row.sort_by_key(|p| p.x);
        let lt = threshold.ln();
        let front = row.windows(2).rev().find_map(|w| {
            let (m0, m1) = (w[0].measured, w[1].measured);
            if m0 >= threshold && m1 < threshold && m1 > 0.0 {
                let (l0, l1) = (m0.ln(), m1.ln());
                Some(w[0].x as f64 + (l0 - lt) / (l0 - l1))
            } else if m0 >= threshold && m1 == 0.0 {
                Some(w[0].x as f64)
            } else {
                None
            }
        });
        if let Some(f) = front {
            samples.push((t, f));
        }
    }
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let (mt, mf) = samples.iter().fold((0.0, 0.0), |(a, b), (t, f)| (a + t / n, b + f / n));
    let (num, den) =
        samples.iter().fold((0.0, 0.0), |(a, b), (t, f)| (a + (t - mt) * (f - mf), b + (t - mt) * (t - mt)));
    (den > 0.0).then(|| num / den)
}

/// One measured point of the envelope check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopePoint {
    pub l: usize,
    pub m: usize,
    pub t: f64,
    pub measured: f64,
    pub envelope: f64,
}

impl EnvelopePoint {
    pub fn holds(&self) -> bool {
        self.measured <= self.envelope
    }
}

#[derive(Clone, Debug)]
pub struct EnvelopeReport {
    pub points: Vec<EnvelopePoint>,
    pub ring: usize,
    pub guard: GuardReport,
}

/// Measure `‖[N_{[-L,0]}, H_{[-M,M+1]}(t)] - [N_{[-L,0]}, H_{[-M,M+1]}]‖` and
/// compare with `Z_{M,L}(t)` for every `(L, M)` pair and time.
pub fn envelope_check(
    model: &ModelSpec,
    pairs: &[(usize, usize)],
    ts: &[f64],
    opts: ConeOptions,
) -> Result<EnvelopeReport> {
    let norms = EnvelopeNorms::of(model)?;
    let c = model.chain();
    let max_l = pairs.iter().map(|p| p.0).max().ok_or_else(|| domain("no (L, M) pairs"))?;
    let max_m = pairs.iter().map(|p| p.1).max().unwrap_or(1);
    for &(l, m) in pairs {
        if m == 0 || l < m {
            return Err(domain(format!("envelope needs L >= M > 0, got ({l}, {m})")));
        }
    }
    let t_max = ts.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    let h_probe = model.region_hamiltonian(c, region(-(max_m as i64), max_m as i64 + 1))?;
    let guard = ring_guard(model, &h_probe, t_max.max(1e-3), opts.guard_tol, opts.guard_start, opts.ed)?;
    // Span [-L, M+1] plus a margin of three sites on the far side.
    let span = max_l + max_m + 2;
    let ring = guard.sites.max(span + 3);
    let ed = EdOptions { origin: Some(max_l as i64 + 1), ..opts.ed };
    let sys = EdSystem::new(model, ring, ed)?;
    let mut points = Vec::new();
    for &(l, m) in pairs {
        let n = sys.sparse(&model.region_charge(c, region(-(l as i64), 0))?)?;
        let h = sys.full(&model.region_hamiltonian(c, region(-(m as i64), m as i64 + 1))?)?;
        let measured = ed.exec.try_map(ts.to_vec(), |t| {
            let diff = sys.evolve(&h, t).minus(&h);
            sys.norm(&sys.commutator_sparse(&diff, &n))
        })?;
        for (&t, measured) in ts.iter().zip(measured) {
            points.push(EnvelopePoint { l, m, t, measured, envelope: z_envelope(&norms, m, l, t)? });
        }
    }
    Ok(EnvelopeReport { points, ring, guard })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::LatticeGeometry;
    use crate::linalg;
    use crate::models::xxz;

    #[test]
    fn velocity_constant() {
        let v = group_velocity_constant(&xxz(1.0));
        assert!((v - 48.0 * E * E).abs() < 1e-10);
        assert!((v - 354.67).abs() < 0.05);
        let zero = ModelSpec::from_matrices("free", 2, linalg::zeros(4, 4), crate::algebra::spin::sigma_z()).unwrap();
        assert_eq!(group_velocity_constant(&zero), 0.0);
        let m = xxz(0.3);
        let scaled = m.with_scaled_bond(2.5).unwrap();
        assert!((group_velocity_constant(&scaled) - 2.5 * group_velocity_constant(&m)).abs() < 1e-9);
    }

    #[test]
    fn bound_instantiations() {
        let m = xxz(1.0);
        let c = m.chain();
        let n0 = m.charge_op(c, 0).unwrap();
        let j0 = m.energy_current(c, 0).unwrap();
        let p = LrParams::for_operators(&m, &n0, &j0);
        assert_eq!((p.d_a, p.d_b), (1, 3));
        let nn = n0.operator_norm() * j0.operator_norm();
        assert!((p.prefactor() - 2.0 * 16.0 * nn * 3.0).abs() < 1e-12);
        // exponent |z| - 4
        let b = lr_bound(&p, 7, 0.0).unwrap();
        assert!((b - p.prefactor() * (-3.0f64).exp()).abs() < 1e-12);
        assert!(lr_bound(&p, 4, 0.1).is_err());

        let j = m.current(c, 0).unwrap();
        let q = LrParams::for_operators(&m, &j, &j0);
        let expect = 2.0 * j.operator_norm() * j0.operator_norm() * 32.0 * 6.0;
        assert!((q.prefactor() - expect).abs() < 1e-12);
        let s = 0.01;
        let got = lr_bound(&q, 9, s).unwrap();
        let paper = expect * (-s * ((9.0 - 5.0) / s - 2.0 * q.v)).exp();
        assert!((got - paper).abs() < 1e-12 * paper);
    }

    #[test]
    fn bound_monotonicity() {
        let p = LrParams { v: 2.0, local_dim: 2, d_a: 1, d_b: 2, norm_a: 0.5, norm_b: 0.75 };
        let mut last = 0.0;
        for t in [0.0, 0.1, 0.2, 0.5] {
            let b = lr_bound(&p, 6, -t).unwrap();
            assert!(b > last);
            last = b;
        }
        assert!(lr_bound(&p, 7, 0.3).unwrap() < lr_bound(&p, 6, 0.3).unwrap());
        assert!(lr_bound(&p, -7, 0.3).unwrap() == lr_bound(&p, 7, 0.3).unwrap());
    }

    #[test]
    fn envelope_closed_form() {
        let norms = EnvelopeNorms::of(&xxz(1.0)).unwrap();
        assert_eq!(z_envelope(&norms, 2, 4, 0.0).unwrap(), 0.0);
        assert!(z_envelope(&norms, 3, 2, 0.1).is_err());
        let mut last = 0.0;
        for t in [0.001, 0.005, 0.01, 0.02] {
            let z = z_envelope(&norms, 2, 4, t).unwrap();
            assert!(z > last);
            last = z;
        }
        // decreasing in M at fixed L - M
        assert!(z_envelope(&norms, 3, 5, 0.01).unwrap() < z_envelope(&norms, 2, 4, 0.01).unwrap());
        // direct transcription at one point
        let (v, t) = (norms.v, 0.01);
        let g = ((2.0 * v * t).exp() - 1.0) / (2.0 * v);
        let term1 = 6.0 * 16.0 * norms.charge * norms.energy_current * (-2.0f64).exp() / (1.0 - (-1.0f64).exp())
            * E.powi(3)
            * g;
        let term2 =
            2.0 * norms.current * norms.energy_current * 32.0 * 6.0 * E.powi(5) * ((-2.0f64).exp() + (-2.0f64).exp())
                / (2.0 * v)
                * (g - t);
        let z = z_envelope(&norms, 2, 4, t).unwrap();
        assert!((z - term1 - term2).abs() < 1e-10 * z);
    }

    #[test]
    fn zero_coupling_cone_is_flat() {
        let zero = ModelSpec::from_matrices("free", 2, linalg::zeros(4, 4), crate::algebra::spin::sigma_z()).unwrap();
        let c = zero.chain();
        let a = zero.charge_op(c, 0).unwrap();
        let sx = crate::algebra::spin::sigma_x();
        let b = LocalOperator::new(c, region(0, 1), linalg::kron(sx.as_ref(), linalg::identity(2).as_ref())).unwrap();
        let prof = cone_profile(&zero, &a, &b, &[-3, -1, 0, 1, 3], &[0.0, 0.5], ConeOptions::default()).unwrap();
        for p in &prof.points {
            if p.x != 0 && p.x != 1 && p.x != -1 {
                assert_eq!(p.measured, 0.0);
            }
        }
    }

    #[test]
    fn small_cone_respects_bound() {
        let m = xxz(1.0);
        let c = m.chain();
        let a = m.charge_op(c, 0).unwrap();
        let b = m.bond_op(c, 0).unwrap();
        let xs: Vec<i64> = (-4..=4).collect();
        let ts = [-0.3, 0.0, 0.2, 0.4];
        let prof = cone_profile(&m, &a, &b, &xs, &ts, ConeOptions::default()).unwrap();
        assert_eq!(prof.violations(), 0);
        assert!(prof.spacelike_max(&a, &b) <= 1e-12);
        let cap = 2.0 * a.operator_norm() * b.operator_norm();
        assert!(prof.points.iter().all(|p| p.measured <= cap + 1e-12));
        let ring = LatticeGeometry::ring(prof.ring, 2).unwrap();
        assert!(ring.sites >= 10);
    }
}
