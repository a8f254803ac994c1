//! The windowed charge/energy sum rule and the spectral density near `(k, ε) = (0, 0)`.
//!
//! Conventions, fixed once here:
//!
//! * `g(z, t) = ω(i[n_0, h_{-z,-z+1}(t)])`, so that by translation
//!   invariance `ω(i[N_{[-L,0]}, H_{[-M,M+1]}(t)]) = Σ_z w_{L,M}(z) g(z, t)`
//!   with `w_{L,M}(z) = Σ_x r_L(x) s_M(x - z)` ([`overlap_weight`]).
//! * `ρ(z, t) = (2π√(2π))⁻¹ ω(i n̂_0 ĥ_{-z,-z+1}(-t))`. For self-adjoint
//!   operators `g(z, t) = 4π√(2π) Re ρ(z, -t)`.
//! * `f̃(ε) = (2π)^{-1/2} ∫ f(t) e^{iεt} dt`.
//! * `ρ̃(k, ε) = (2π)^{-1/2} Σ_z ∫ dt w(t) ρ(z, t) e^{-i(kz - εt)}`, the
//!   inversion of `ρ(z,t) = (2π√(2π))⁻¹ ∫dε ∫dk ρ̃(k,ε) e^{i(kz-εt)}`.
//! * `S(f) = -2πi ∫ dε f̃(ε) (D(ε) - D(-ε)*)` with
//!   `D(ε) = ∂_k ρ̃(k, ε)|_{k=0}`; the second term is the `k`-derivative of
//!   `k ↦ ρ̃(-k, -ε)*`. In the time domain
//!   `S(f) = -4π Σ_z z ∫ f(t) Re ρ(z, -t) dt`, and the sum rule reads
//!   `S(f) → ω(j_{0,1}) f̃(0)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::algebra::LocalOperator;
use crate::dynamics::{center, interval, EdOptions, EdState, EdSystem, EigenOp, StateKind};
use crate::error::{domain, Error};
use crate::exec::Exec;
use crate::freefermion::{current_expectation, Occupation, QuadraticOp, WickEngine};
use crate::linalg::{I, ZERO};
use crate::models::ModelSpec;
use crate::Result;

/// `1/(2π√(2π))`, the normalization of `ρ`.
pub fn rho_norm() -> f64 {
    1.0 / (2.0 * PI * (2.0 * PI).sqrt())
}

/// Largest admissible time step.
pub const MAX_STEP: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub enum WindowShape {
    /// `e^{-t²/(2σ²)}` truncated to `[-T, T]`.
    Gaussian { sigma: f64 },
    /// `cos²(πt/(2T))`.
    Hann,
    /// Samples on the uniform grid over `[-T, T]`.
    Custom(Vec<f64>),
}

/// A test function `f` supported on `[-T, T]`, sampled on a uniform grid with
/// an even number of intervals (composite Simpson).
#[derive(Clone, Debug, PartialEq)]
pub struct TestWindow {
    pub shape: WindowShape,
    pub half_width: f64,
    pub dt: f64,
    intervals: usize,
}

fn interval_count(half_width: f64, dt: f64) -> Result<usize> {
    if !(half_width > 0.0 && dt > 0.0 && half_width.is_finite()) {
        return Err(Error::Grid("window needs T > 0 and dt > 0".into()));
    }
    let n = (2.0 * half_width / dt).round();
    if (n * dt - 2.0 * half_width).abs() > 1e-9 * half_width {
        return Err(Error::Grid(format!("2T = {} is not a multiple of dt = {dt}", 2.0 * half_width)));
    }
    let n = n as usize;
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Grid(format!("Simpson needs an even number of intervals, got {n}")));
    }
    Ok(n)
}

impl TestWindow {
    pub fn gaussian(sigma: f64, half_width: f64, dt: f64) -> Result<Self> {
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(domain("gaussian width must be positive"));
        }
        if half_width < 4.0 * sigma - 1e-12 {
            return Err(Error::Quadrature(format!("T = {half_width} < 4σ = {}", 4.0 * sigma)));
        }
        let limit = (sigma / 8.0).min(MAX_STEP);
        if dt > limit + 1e-15 {
            return Err(Error::Quadrature(format!("step {dt} exceeds min(σ/8, {MAX_STEP}) = {limit}")));
        }
        let intervals = interval_count(half_width, dt)?;
        Ok(TestWindow { shape: WindowShape::Gaussian { sigma }, half_width, dt, intervals })
    }

    pub fn hann(half_width: f64, dt: f64) -> Result<Self> {
        if dt > MAX_STEP + 1e-15 {
            return Err(Error::Quadrature(format!("step {dt} exceeds {MAX_STEP}")));
        }
        let intervals = interval_count(half_width, dt)?;
        Ok(TestWindow { shape: WindowShape::Hann, half_width, dt, intervals })
    }

    pub fn custom(half_width: f64, samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 3 || samples.len().is_multiple_of(2) {
            return Err(Error::Grid(format!(
                "custom window needs an odd number (>= 3) of samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(domain("custom window samples must be finite"));
        }
        let intervals = samples.len() - 1;
        let dt = 2.0 * half_width / intervals as f64;
        if dt.is_nan() || dt <= 0.0 {
            return Err(Error::Grid("window needs T > 0".into()));
        }
        Ok(TestWindow { shape: WindowShape::Custom(samples), half_width, dt, intervals })
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid times `t_i = (i - n/2) dt`, symmetric about zero.
    pub fn times(&self) -> Vec<f64> {
        let h = (self.intervals / 2) as f64;
        (0..self.len()).map(|i| (i as f64 - h) * self.dt).collect()
    }

    pub fn samples(&self) -> Vec<f64> {
        match &self.shape {
            WindowShape::Custom(s) => s.clone(),
            WindowShape::Gaussian { sigma } => {
                self.times().iter().map(|t| (-t * t / (2.0 * sigma * sigma)).exp()).collect()
            }
            WindowShape::Hann => {
                let tt = self.half_width;
                self.times().iter().map(|t| (PI * t / (2.0 * tt)).cos().powi(2)).collect()
            }
        }
    }

    /// Composite Simpson weights on [`Self::times`].
    pub fn weights(&self) -> Vec<f64> {
        simpson_weights(self.len(), self.dt)
    }

    /// `∫ f(t) g(t) dt` for `g` sampled on the grid.
    pub fn integrate(&self, g: &[f64]) -> f64 {
        let f = self.samples();
        self.weights().iter().zip(&f).zip(g).map(|((w, f), g)| w * f * g).sum()
    }

    /// `f̃(ε) = (2π)^{-1/2} ∫ f(t) e^{iεt} dt`.
    pub fn transform(&self, eps: f64) -> Complex64 {
        let f = self.samples();
        let s: Complex64 = self
            .weights()
            .iter()
            .zip(&f)
            .zip(self.times())
            .map(|((w, f), t)| Complex64::from_polar(w * f, eps * t))
            .sum();
        s / (2.0 * PI).sqrt()
    }

    /// `(∫ |f|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let f = self.samples();
        self.weights().iter().zip(&f).map(|(w, f)| w * f * f).sum::<f64>().sqrt()
    }
}

/// Composite Simpson weights `dt/3 · (1, 4, 2, 4, ..., 4, 1)` for an odd
/// number of points.
pub fn simpson_weights(n: usize, dt: f64) -> Vec<f64> {
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd number of points");
    (0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * dt / 3.0
        })
        .collect()
}

/// `Σ_x r_L(x) s_M(x - z)` with `r_L = 1` on `[-L, 0]` (all `x <= 0` when
/// `l` is `None`) and `s_M = 1` on `[-M, M]`.
pub fn overlap_weight(l: Option<usize>, m: usize, z: i64) -> i64 {
    let m = m as i64;
    let hi = (z + m).min(0);
    let lo = match l {
        Some(l) => (z - m).max(-(l as i64)),
        None => z - m,
    };
    (hi - lo + 1).max(0)
}

/// A translation-invariant stationary state that can produce the two-time
/// data the sum rules need.
pub trait CorrelationSource: Sync {
    fn label(&self) -> String;

    /// `ω(j_{0,1})`.
    fn current(&self) -> f64;

    /// `ω(n̂_a ĥ_{a-z,a-z+1}(t))` for each `z`, with `a` the source offset.
    fn connected_row(&self, zs: &[i64], t: f64) -> Result<Vec<Complex64>>;

    /// `ω(i[N_{[a-L,a]}, H_{[a-M,a+M+1]}(t)])` evaluated as one commutator.
    fn direct_integrand(&self, l: usize, m: usize, t: f64) -> Result<f64>;
}

/// Quasi-free source on a ring of `R` sites.
#[derive(Clone, Debug)]
pub struct WickSource {
    engine: WickEngine,
    offset: i64,
}

impl WickSource {
    pub fn new(occ: Occupation) -> Self {
        WickSource { engine: WickEngine::new(occ), offset: 0 }
    }

    /// Same state with every region shifted by `offset` sites.
    pub fn with_offset(mut self, offset: i64) -> Self {
        self.offset = offset;
        self
    }

    pub fn engine(&self) -> &WickEngine {
        &self.engine
    }

    fn bond(&self, x: i64) -> QuadraticOp {
        let occ = self.engine.occupation();
        QuadraticOp::bond(x, occ.hopping, occ.mu)
    }

    fn regions(&self, l: usize, m: usize) -> (QuadraticOp, QuadraticOp) {
        let a = self.offset;
        let n = (-(l as i64)..=0).fold(QuadraticOp::default(), |acc, x| acc.plus(&QuadraticOp::density(a + x)));
        let h = (-(m as i64)..=m as i64).fold(QuadraticOp::default(), |acc, y| acc.plus(&self.bond(a + y)));
        (n, h)
    }

    /// The integrand through the one-particle commutator, an `O(R³)` route
    /// kept as an independent check.
    pub fn integrand_via_propagator(&self, l: usize, m: usize, t: f64) -> f64 {
        let (n, h) = self.regions(l, m);
        (I * self.engine.commutator_via_propagator(&n, &h, t)).re
    }
}

impl CorrelationSource for WickSource {
    fn label(&self) -> String {
        let occ = self.engine.occupation();
        format!("wick R={} t={} mu={} filling={}", occ.sites, occ.hopping, occ.mu, occ.filling())
    }

    fn current(&self) -> f64 {
        current_expectation(self.engine.occupation())
    }

    fn connected_row(&self, zs: &[i64], t: f64) -> Result<Vec<Complex64>> {
        let tab = self.engine.tables(t);
        let n0 = QuadraticOp::density(self.offset);
        Ok(zs.iter().map(|&z| self.engine.connected_with(&tab, &n0, &self.bond(self.offset - z))).collect())
    }

    fn direct_integrand(&self, l: usize, m: usize, t: f64) -> Result<f64> {
        let (n, h) = self.regions(l, m);
        // ω(i[A, B(t)]) = -2 Im ω(Â B̂(t)) for self-adjoint A, B.
        Ok(-2.0 * self.engine.connected(&n, &h, t).im)
    }
}

/// Exact-diagonalization source on a small ring.
pub struct EdSource {
    model: ModelSpec,
    system: EdSystem,
    state: EdState,
    offset: i64,
}

impl EdSource {
    pub fn new(model: &ModelSpec, sites: usize, kind: &StateKind, opts: EdOptions) -> Result<Self> {
        let system = EdSystem::new(model, sites, opts)?;
        let state = system.state(kind)?;
        Ok(EdSource { model: model.clone(), system, state, offset: 0 })
    }

    pub fn with_offset(mut self, offset: i64) -> Self {
        self.offset = offset;
        self
    }

    pub fn system(&self) -> &EdSystem {
        &self.system
    }

    fn centered(&self, a: &LocalOperator) -> Result<EigenOp> {
        let e = self.system.to_eigen(&self.system.full(a)?);
        let c = center(a, self.state.expect(&e))?;
        Ok(self.system.to_eigen(&self.system.full(&c)?))
    }
}

impl CorrelationSource for EdSource {
    fn label(&self) -> String {
        format!("ed {} R={}", self.model.name, self.system.sites())
    }

    fn current(&self) -> f64 {
        let c = self.model.chain();
        self.model
            .current(c, self.offset)
            .and_then(|j| Ok(self.state.expect(&self.system.to_eigen(&self.system.full(&j)?)).re))
            .unwrap_or(f64::NAN)
    }

    fn connected_row(&self, zs: &[i64], t: f64) -> Result<Vec<Complex64>> {
        let c = self.model.chain();
        let n0 = self.centered(&self.model.charge_op(c, self.offset)?)?;
        zs.iter()
            .map(|&z| {
                let h = self.centered(&self.model.bond_op(c, self.offset - z)?)?;
                Ok(self.state.two_time(&self.system, &n0, &h, t))
            })
            .collect()
    }

    fn direct_integrand(&self, l: usize, m: usize, t: f64) -> Result<f64> {
        let c = self.model.chain();
        let a = self.offset;
        let n = self.model.region_charge(c, interval(a - l as i64, a))?;
        let h = self.model.region_hamiltonian(c, interval(a - m as i64, a + m as i64 + 1))?;
        let (en, eh) = (self.system.to_eigen(&self.system.full(&n)?), self.system.to_eigen(&self.system.full(&h)?));
        Ok((I * self.state.commutator_two_time(&self.system, &en, &eh, t)).re)
    }
}

/// `ρ(z, t)` on `z ∈ [zmin, zmax]` and a time grid symmetric about zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationGrid {
    pub zmin: i64,
    pub zmax: i64,
    pub times: Vec<f64>,
    /// Row-major in `z`: `values[(z - zmin) * times.len() + i]`.
    pub values: Vec<Complex64>,
    /// `ω(j_{0,1})` of the state.
    pub current: f64,
    pub label: String,
}

impl CorrelationGrid {
    pub fn zs(&self) -> impl Iterator<Item = i64> {
        self.zmin..=self.zmax
    }

    pub fn nt(&self) -> usize {
        self.times.len()
    }

    pub fn rho(&self, z: i64, i: usize) -> Complex64 {
        self.values[(z - self.zmin) as usize * self.nt() + i]
    }

    /// Index of `-t_i` on the symmetric grid.
    pub fn mirror(&self, i: usize) -> usize {
        self.nt() - 1 - i
    }

    pub fn covers(&self, zmin: i64, zmax: i64) -> bool {
        self.zmin <= zmin && zmax <= self.zmax
    }

    /// `g(z, t_i) = 4π√(2π) Re ρ(z, -t_i)`.
    pub fn commutator_value(&self, z: i64, i: usize) -> f64 {
        self.rho(z, self.mirror(i)).re / rho_norm() * 2.0
    }

    /// Sum-rule integrand `Σ_z w_{L,M}(z) g(z, t_i)` at every grid time.
    pub fn integrand(&self, l: Option<usize>, m: usize) -> Result<Vec<f64>> {
        let lo = match l {
            Some(l) => -(l as i64) - m as i64,
            None => self.zmin,
        };
        if !self.covers(lo, m as i64) {
            return Err(Error::Grid(format!("grid z in [{}, {}] does not cover [{lo}, {m}]", self.zmin, self.zmax)));
        }
        Ok((0..self.nt())
            .map(|i| (lo..=m as i64).map(|z| overlap_weight(l, m, z) as f64 * self.commutator_value(z, i)).sum())
            .collect())
    }

    /// The sub-grid on `[zmin, zmax]`.
    pub fn restrict(&self, zmin: i64, zmax: i64) -> Result<CorrelationGrid> {
        if !self.covers(zmin, zmax) || zmax < zmin {
            return Err(Error::Grid(format!("[{zmin}, {zmax}] is not inside [{}, {}]", self.zmin, self.zmax)));
        }
        let nt = self.nt();
        let from = (zmin - self.zmin) as usize * nt;
        let to = (zmax - self.zmin + 1) as usize * nt;
        Ok(CorrelationGrid { zmin, zmax, values: self.values[from..to].to_vec(), ..self.clone() })
    }

    /// A synthetic grid `ρ(z, t) = e^{i(k₀z - ε₀t)} g(z)`.
    pub fn synthetic(zmin: i64, zmax: i64, times: Vec<f64>, k0: f64, eps0: f64, g: impl Fn(i64) -> f64) -> Self {
        let mut values = Vec::with_capacity(((zmax - zmin + 1) as usize) * times.len());
        for z in zmin..=zmax {
            for &t in &times {
                values.push(Complex64::from_polar(g(z), k0 * z as f64 - eps0 * t));
            }
        }
        CorrelationGrid { zmin, zmax, times, values, current: 0.0, label: "synthetic".into() }
    }
}

/// Fill `ρ(z, t) = (2π√(2π))⁻¹ i ω(n̂_0 ĥ_{-z,-z+1}(-t))`, partitioned over
/// time slices.
pub fn correlation_grid(
    source: &dyn CorrelationSource,
    zmin: i64,
    zmax: i64,
    times: &[f64],
    exec: Exec,
) -> Result<CorrelationGrid> {
    if zmax < zmin {
        return Err(Error::Grid(format!("empty z range [{zmin}, {zmax}]")));
    }
    let nt = times.len();
    for (i, t) in times.iter().enumerate() {
        if (t + times[nt - 1 - i]).abs() > 1e-12 {
            return Err(Error::Grid("time grid must be symmetric about zero".into()));
        }
    }
    let zs: Vec<i64> = (zmin..=zmax).collect();
    let columns = exec.try_map(times.to_vec(), |t| source.connected_row(&zs, -t))?;
    let s = I * rho_norm();
    let mut values = vec![ZERO; zs.len() * nt];
    for (i, col) in columns.into_iter().enumerate() {
        for (zi, c) in col.into_iter().enumerate() {
            values[zi * nt + i] = s * c;
        }
    }
    Ok(CorrelationGrid { zmin, zmax, times: times.to_vec(), values, current: source.current(), label: source.label() })
}

/// One row of the `(L, M)` table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SumRulePoint {
    pub l: usize,
    pub m: usize,
    pub value: f64,
    pub target: f64,
    /// `|value - target| / |target|`, or the absolute deviation when the
    /// target vanishes.
    pub rel_dev: f64,
}

fn deviation(value: f64, target: f64) -> f64 {
    if target == 0.0 {
        (value - target).abs()
    } else {
        (value - target).abs() / target.abs()
    }
}

/// `√(2π) ω(j_{0,1}) f̃(0)`.
pub fn lemma_target(current: f64, window: &TestWindow) -> f64 {
    (2.0 * PI).sqrt() * current * window.transform(0.0).re
}

fn check_times(grid: &CorrelationGrid, window: &TestWindow) -> Result<()> {
    let wt = window.times();
    if wt.len() != grid.nt() || wt.iter().zip(&grid.times).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::Grid("correlation grid times differ from the window grid".into()));
    }
    Ok(())
}

/// `∫ f(t) ω(i[N_{[-L,0]}, H_{[-M,M+1]}(t)]) dt` from the grid.
pub fn sumrule_integral(grid: &CorrelationGrid, window: &TestWindow, l: usize, m: usize) -> Result<SumRulePoint> {
    if m == 0 {
        return Err(domain("M must be positive"));
    }
    check_times(grid, window)?;
    let value = window.integrate(&grid.integrand(Some(l), m)?);
    let target = lemma_target(grid.current, window);
    Ok(SumRulePoint { l, m, value, target, rel_dev: deviation(value, target) })
}

/// Same integral with the integrand evaluated as a single commutator.
pub fn sumrule_integral_direct(
    source: &dyn CorrelationSource,
    window: &TestWindow,
    l: usize,
    m: usize,
    exec: Exec,
) -> Result<SumRulePoint> {
    let g = exec.try_map(window.times(), |t| source.direct_integrand(l, m, t))?;
    let value = window.integrate(&g);
    let target = lemma_target(source.current(), window);
    Ok(SumRulePoint { l, m, value, target, rel_dev: deviation(value, target) })
}

/// The three pieces of the `L → ∞` integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermDecomposition {
    pub m: usize,
    pub l_big: usize,
    /// `z < -M`, weight `2M+1` (tapering over the last `2M` sites at `L_big`).
    pub term8: f64,
    /// `-M <= z <= M`, weight `M+1`.
    pub term9: f64,
    /// `-M <= z <= M`, weight `-z`.
    pub term10: f64,
    /// `term8` recomputed at `L_big/2`: the `L` convergence check.
    pub term8_half: f64,
}

impl TermDecomposition {
    pub fn sum(&self) -> f64 {
        self.term8 + self.term9 + self.term10
    }
}

/// Split the integral at `L = L_big` into the three displayed pieces.
pub fn term_decomposition(
    grid: &CorrelationGrid,
    window: &TestWindow,
    m: usize,
    l_big: usize,
) -> Result<TermDecomposition> {
    check_times(grid, window)?;
    if m == 0 || l_big < 2 * m {
        return Err(domain(format!("need M > 0 and L_big >= 2M, got M = {m}, L_big = {l_big}")));
    }
    let mi = m as i64;
    let lo = -(l_big as i64) - mi;
    if !grid.covers(lo, mi) {
        return Err(Error::Grid(format!("grid z in [{}, {}] must cover [{lo}, {m}]", grid.zmin, grid.zmax)));
    }
    let nt = grid.nt();
    let far = |l: usize| -> f64 {
        let g: Vec<f64> = (0..nt)
            .map(|i| {
                (-(l as i64) - mi..-mi)
                    .map(|z| overlap_weight(Some(l), m, z) as f64 * grid.commutator_value(z, i))
                    .sum()
            })
            .collect();
        window.integrate(&g)
    };
    let near = |weight: &dyn Fn(i64) -> f64| -> f64 {
        let g: Vec<f64> = (0..nt).map(|i| (-mi..=mi).map(|z| weight(z) * grid.commutator_value(z, i)).sum()).collect();
        window.integrate(&g)
    };
    Ok(TermDecomposition {
        m,
        l_big,
        term8: far(l_big),
        term9: near(&|_| (m + 1) as f64),
        term10: near(&|z| -(z as f64)),
        term8_half: far(l_big / 2),
    })
}

/// Smallest `Z` (among octaves `start, 2·start, ...`) such that
/// `max_t |ρ(z, t)|` stays below `1e-3` of the `z = 0` value on `Z <= |z| <= 2Z`;
/// doubled for sharp Fermi edges and capped at `limit`.
pub fn auto_zmax(
    source: &dyn CorrelationSource,
    times: &[f64],
    start: i64,
    limit: i64,
    sharp: bool,
    exec: Exec,
) -> Result<i64> {
    let peak = |zs: &[i64]| -> Result<Vec<f64>> {
        let cols = exec.try_map(times.to_vec(), |t| source.connected_row(zs, t))?;
        Ok((0..zs.len()).map(|j| cols.iter().map(|c| c[j].norm()).fold(0.0, f64::max)).collect())
    };
    let reference = peak(&[0])?[0];
    let mut z = start.max(1);
    let found = loop {
        if 2 * z > limit {
            break limit;
        }
        let zs: Vec<i64> = (z..=2 * z).flat_map(|x| [x, -x]).collect();
        let tail = peak(&zs)?.into_iter().fold(0.0, f64::max);
        if tail <= 1e-3 * reference {
            break z;
        }
        z *= 2;
    };
    Ok(if sharp { (2 * found).min(limit) } else { found })
}

/// `ρ̃(k, ε)` on a rectangular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDensity {
    pub ks: Vec<f64>,
    pub eps: Vec<f64>,
    /// Row-major in `k`.
    pub values: Vec<Complex64>,
}

impl SpectralDensity {
    pub fn get(&self, ki: usize, ei: usize) -> Complex64 {
        self.values[ki * self.eps.len() + ei]
    }

    /// `(2π√(2π))⁻¹ Δk Δε Σ ρ̃ e^{i(kz - εt)}`; reproduces `w(t) ρ(z, t)` when
    /// the grids are those of [`fourier_grids`].
    pub fn reconstruct(&self, z: i64, t: f64) -> Complex64 {
        let dk = 2.0 * PI / self.ks.len() as f64;
        let de = if self.eps.len() > 1 { self.eps[1] - self.eps[0] } else { 0.0 };
        let mut s = ZERO;
        for (ki, &k) in self.ks.iter().enumerate() {
            for (ei, &e) in self.eps.iter().enumerate() {
                s += self.get(ki, ei) * Complex64::from_polar(1.0, k * z as f64 - e * t);
            }
        }
        s * rho_norm() * dk * de
    }

    /// Position of the largest `|ρ̃|`.
    pub fn argmax(&self) -> (f64, f64) {
        let (mut best, mut at) = (-1.0, (0.0, 0.0));
        for (ki, &k) in self.ks.iter().enumerate() {
            for (ei, &e) in self.eps.iter().enumerate() {
                let v = self.get(ki, ei).norm();
                if v > best {
                    best = v;
                    at = (k, e);
                }
            }
        }
        at
    }
}

/// Momentum grid `2πj/K` over `(-π, π]` with `K` the number of `z` values, and
/// the discrete-orthogonal energy grid `2πm/(P dt)` with `P = 2·nt` points.
pub fn fourier_grids(grid: &CorrelationGrid) -> (Vec<f64>, Vec<f64>) {
    let kn = (grid.zmax - grid.zmin + 1) as usize;
    let ks = crate::freefermion::momenta(kn);
    (ks, orthogonal_energies(grid))
}

fn step(grid: &CorrelationGrid) -> Result<f64> {
    if grid.nt() < 2 {
        return Err(Error::Grid("time grid needs at least two points".into()));
    }
    Ok(grid.times[1] - grid.times[0])
}

/// `2πm/(P dt)` for `m = -P/2 .. P/2 - 1`, `P = 2·nt`.
pub fn orthogonal_energies(grid: &CorrelationGrid) -> Vec<f64> {
    let p = 2 * grid.nt() as i64;
    let dt = grid.times[1] - grid.times[0];
    (-p / 2..p / 2).map(|m| 2.0 * PI * m as f64 / (p as f64 * dt)).collect()
}

/// `ρ̃(k, ε) = (2π)^{-1/2} Σ_z Δt Σ_t w(t) ρ(z, t) e^{-i(kz - εt)}` with `w`
/// the window samples (the grid must share the window's times).
pub fn spectral_density(
    grid: &CorrelationGrid,
    window: &TestWindow,
    ks: &[f64],
    eps: &[f64],
    exec: Exec,
) -> Result<SpectralDensity> {
    check_times(grid, window)?;
    let dt = step(grid)?;
    let w = window.samples();
    let nt = grid.nt();
    // Time transform first: A(z, ε) = Δt Σ_t w ρ e^{iεt}.
    let zs: Vec<i64> = grid.zs().collect();
    let a: Vec<Vec<Complex64>> = exec.map(zs.clone(), |z| {
        eps.iter()
            .map(|&e| (0..nt).map(|i| grid.rho(z, i) * Complex64::from_polar(w[i] * dt, e * grid.times[i])).sum())
            .collect()
    });
    let norm = 1.0 / (2.0 * PI).sqrt();
    let rows: Vec<Vec<Complex64>> = exec.map(ks.to_vec(), |k| {
        (0..eps.len())
            .map(|ei| zs.iter().zip(&a).map(|(&z, az)| az[ei] * Complex64::from_polar(norm, -k * z as f64)).sum())
            .collect()
    });
    Ok(SpectralDensity { ks: ks.to_vec(), eps: eps.to_vec(), values: rows.into_iter().flatten().collect() })
}

/// The smeared sum rule at `k = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoremValue {
    /// `S(f)` through the energy integral; its imaginary part is a numerical
    /// diagnostic.
    pub value: Complex64,
    /// `S(f)` from the time-domain form `-4π Σ_z z ∫ f Re ρ(z, -t)`.
    pub time_domain: f64,
    /// `ω(j_{0,1}) f̃(0)`.
    pub target: f64,
    pub rel_dev: f64,
}

/// `S(f) = -2πi ∫ dε f̃(ε) (D(ε) - D(-ε)*)`, `D(ε) = ∂_k ρ̃(0, ε)` computed as
/// `(2π)^{-1/2} Δt Σ_t Σ_z (-iz) ρ(z, t) e^{iεt}` (no extra window: `f`
/// enters through `f̃`). The energy grid is discrete-orthogonal on the time
/// grid, so the `ε` sum collapses to the Simpson sum of the time-domain form
/// up to rounding.
pub fn theorem_sumrule(grid: &CorrelationGrid, window: &TestWindow) -> Result<TheoremValue> {
    check_times(grid, window)?;
    let dt = step(grid)?;
    let nt = grid.nt();
    let eps = orthogonal_energies(grid);
    let p = eps.len();
    let de = 2.0 * PI / (p as f64 * dt);
    let kz: Vec<Complex64> =
        (0..nt).map(|i| grid.zs().map(|z| Complex64::new(0.0, -(z as f64)) * grid.rho(z, i)).sum()).collect();
    let norm = 1.0 / (2.0 * PI).sqrt();
    let d: Vec<Complex64> = eps
        .iter()
        .map(|&e| (0..nt).map(|i| kz[i] * Complex64::from_polar(dt * norm, e * grid.times[i])).sum())
        .collect();
    // eps[m] = (m - p/2) de, so -eps[m] sits at index p - m (mod p).
    let neg = |m: usize| (p - m) % p;
    let mut s = ZERO;
    for m in 0..p {
        s += window.transform(eps[m]) * (d[m] - d[neg(m)].conj()) * de;
    }
    let value = Complex64::new(0.0, -2.0 * PI) * s;
    let g: Vec<f64> = (0..nt).map(|i| grid.zs().map(|z| z as f64 * grid.rho(z, grid.mirror(i)).re).sum()).collect();
    let time_domain = -4.0 * PI * window.integrate(&g);
    let target = grid.current * window.transform(0.0).re;
    Ok(TheoremValue { value, time_domain, target, rel_dev: deviation(value.re, target) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::EdOptions;
    use crate::freefermion::{boosted_fermi, momenta};
    use crate::models::fermion;

    fn brute_weight(l: Option<usize>, m: usize, z: i64) -> i64 {
        let lo = l.map(|l| -(l as i64)).unwrap_or(-10_000);
        (lo..=0).filter(|&x| (x - z).abs() <= m as i64).count() as i64
    }

    #[test]
    fn overlap_weights() {
        assert_eq!(overlap_weight(None, 2, -5), 5);
        assert_eq!(overlap_weight(None, 2, 0), 3);
        assert_eq!(overlap_weight(None, 2, 3), 0);
        for l in [Some(0), Some(1), Some(3), Some(7), None] {
            for m in 0..5 {
                for z in -20..20 {
                    assert_eq!(overlap_weight(l, m, z), brute_weight(l, m, z), "{l:?} {m} {z}");
                }
            }
        }
        for m in 0..6usize {
            for z in -15..15i64 {
                let piece = if z < -(m as i64) {
                    2 * m as i64 + 1
                } else if z <= m as i64 {
                    m as i64 + 1 - z
                } else {
                    0
                };
                assert_eq!(overlap_weight(None, m, z), piece);
            }
        }
    }

    #[test]
    fn window_quadrature() {
        let w = TestWindow::gaussian(1.5, 6.0, 0.05).unwrap();
        assert_eq!(w.len(), 241);
        let t = w.times();
        assert_eq!(t[0], -6.0);
        assert_eq!(t[120], 0.0);
        // ∫ e^{-t²/2σ²} over [-4σ, 4σ] = σ√(2π) erf(2√2)
        let exact = 1.5 * (2.0 * PI).sqrt() * 0.999_936_657_516_334_2;
        assert!((w.integrate(&vec![1.0; 241]) - exact).abs() < 1e-8);
        assert!((w.transform(0.0).re * (2.0 * PI).sqrt() - exact).abs() < 1e-8);
        // f̃(ε) of the untruncated gaussian is σ e^{-σ²ε²/2}
        let e = 0.7;
        assert!((w.transform(e).re - 1.5 * (-1.125 * e * e).exp()).abs() < 1e-3);
        assert!(w.transform(e).im.abs() < 1e-12);
        assert!(TestWindow::gaussian(1.5, 5.0, 0.05).is_err());
        assert!(TestWindow::gaussian(1.5, 6.0, 0.2).is_err());
        assert!(TestWindow::gaussian(1.5, 6.0, 0.035).is_err());
        assert!(TestWindow::hann(2.0, 0.05).is_ok());
        assert!(TestWindow::custom(1.0, vec![0.0, 1.0, 1.0, 0.0]).is_err());
        let c = TestWindow::custom(1.0, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(c.dt, 1.0);
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let w = TestWindow::custom(1.0, vec![1.0; 11]).unwrap();
        let g: Vec<f64> = w.times().iter().map(|t| 1.0 + t + 3.0 * t * t - t * t * t).collect();
        assert!((w.integrate(&g) - 4.0).abs() < 1e-13);
    }

    fn sea(r: usize, phi: f64) -> WickSource {
        WickSource::new(boosted_fermi(r, 0.5, phi, 1.0, 0.0).unwrap())
    }

    #[test]
    fn grid_route_matches_single_commutator() {
        let src = sea(64, PI / 8.0);
        let times: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.25).collect();
        let grid = correlation_grid(&src, -30, 6, &times, Exec::Sequential).unwrap();
        for (l, m) in [(8, 3), (20, 6), (4, 4)] {
            let f = grid.integrand(Some(l), m).unwrap();
            for (i, &t) in times.iter().enumerate() {
                let d = src.direct_integrand(l, m, t).unwrap();
                assert!((f[i] - d).abs() < 1e-10, "{l} {m} {t}: {} vs {d}", f[i]);
                let p = src.integrand_via_propagator(l, m, t);
                assert!((p - d).abs() < 1e-10);
            }
        }
        // at t = 0 with L >= M the integrand is ω(j_{0,1})
        let f = grid.integrand(Some(20), 6).unwrap();
        assert!((f[4] - src.current()).abs() < 1e-12);
    }

    #[test]
    fn ed_and_wick_integrands_agree() {
        let occ = boosted_fermi(8, 0.5, PI / 4.0, 1.0, 0.0).unwrap();
        let ed = EdSource::new(
            &fermion(1.0, 0.0, 0.0),
            8,
            &StateKind::Occupation(occ.n.clone()),
            EdOptions { origin: Some(3), ..EdOptions::default() },
        )
        .unwrap();
        let wk = WickSource::new(occ);
        assert!((ed.current() - wk.current()).abs() < 1e-10);
        for t in [0.0, 0.5, 1.0] {
            let a = ed.direct_integrand(3, 1, t).unwrap();
            let b = wk.direct_integrand(3, 1, t).unwrap();
            assert!((a - b).abs() < 1e-8, "{t}: {a} vs {b}");
        }
        let times = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let ge = correlation_grid(&ed, -3, 3, &times, Exec::Sequential).unwrap();
        let gw = correlation_grid(&wk, -3, 3, &times, Exec::Sequential).unwrap();
        for (a, b) in ge.values.iter().zip(&gw.values) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn infinite_temperature_grid_vanishes_off_support() {
        let opts = EdOptions { origin: Some(3), ..EdOptions::default() };
        let ed = EdSource::new(&fermion(1.0, 0.3, 0.5), 8, &StateKind::InfiniteTemperature, opts).unwrap();
        let g = correlation_grid(&ed, -3, 3, &[-0.5, 0.0, 0.5], Exec::Sequential).unwrap();
        for z in [-3, -2, 2, 3] {
            assert!(g.rho(z, 1).norm() < 1e-14);
        }
        // the integrand is a commutator expectation in a trace state
        assert!(ed.direct_integrand(2, 1, 0.7).unwrap().abs() < 1e-12);
    }

    #[test]
    fn equilibrium_integrand_is_odd_in_time() {
        let src = sea(64, 0.0);
        assert!(src.current().abs() < 1e-15);
        for t in [0.3, 1.1] {
            let a = src.direct_integrand(10, 3, t).unwrap();
            let b = src.direct_integrand(10, 3, -t).unwrap();
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_invariance() {
        let occ = boosted_fermi(64, 0.5, PI / 8.0, 1.0, 0.2).unwrap();
        let a = WickSource::new(occ.clone());
        let b = WickSource::new(occ).with_offset(1);
        let w = TestWindow::custom(0.5, vec![1.0; 5]).unwrap();
        let ga = correlation_grid(&a, -12, 4, &w.times(), Exec::Sequential).unwrap();
        let gb = correlation_grid(&b, -12, 4, &w.times(), Exec::Sequential).unwrap();
        let pa = sumrule_integral(&ga, &w, 8, 2).unwrap();
        let pb = sumrule_integral(&gb, &w, 8, 2).unwrap();
        assert!((pa.value - pb.value).abs() < 1e-8);
        assert!((a.direct_integrand(8, 2, 0.4).unwrap() - b.direct_integrand(8, 2, 0.4).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn decomposition_sums_to_integral() {
        let src = sea(128, PI / 8.0);
        let w = TestWindow::gaussian(0.4, 1.6, 0.05).unwrap();
        let grid = correlation_grid(&src, -40, 8, &w.times(), Exec::Sequential).unwrap();
        let d = term_decomposition(&grid, &w, 4, 32).unwrap();
        let direct = sumrule_integral_direct(&src, &w, 32, 4, Exec::Sequential).unwrap();
        assert!((d.sum() - direct.value).abs() <= 1e-10 * direct.value.abs());
        assert!(term_decomposition(&grid, &w, 8, 40).is_err());
    }

    #[test]
    fn spectral_density_of_zero_is_zero() {
        let w = TestWindow::custom(0.5, vec![1.0; 11]).unwrap();
        let g = CorrelationGrid::synthetic(-4, 4, w.times(), 0.3, 1.0, |_| 0.0);
        let (ks, eps) = fourier_grids(&g);
        let s = spectral_density(&g, &w, &ks, &eps, Exec::Sequential).unwrap();
        assert!(s.values.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn synthetic_peak_and_reconstruction() {
        let w = TestWindow::hann(3.0, 0.05).unwrap();
        let k0 = momenta(33)[20];
        let g = CorrelationGrid::synthetic(-16, 16, w.times(), k0, 1.3, |z| (-(z * z) as f64 / 40.0).exp());
        let (ks, eps) = fourier_grids(&g);
        let s = spectral_density(&g, &w, &ks, &eps, Exec::Sequential).unwrap();
        let (kp, ep) = s.argmax();
        assert!((kp - k0).abs() < 1e-12);
        assert!((ep - 1.3).abs() <= eps[1] - eps[0]);
        let samples = w.samples();
        for (z, i) in [(0, 60), (5, 10), (-16, 119)] {
            let back = s.reconstruct(z, g.times[i]);
            assert!((back - g.rho(z, i) * samples[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn theorem_routes_agree() {
        let src = sea(64, PI / 8.0);
        let w = TestWindow::gaussian(0.5, 2.0, 0.05).unwrap();
        let g = correlation_grid(&src, -20, 20, &w.times(), Exec::Sequential).unwrap();
        let th = theorem_sumrule(&g, &w).unwrap();
        assert!(th.value.im.abs() <= 1e-8 * th.value.re.abs());
        assert!((th.value.re - th.time_domain).abs() < 1e-10 * th.time_domain.abs());
        let eq = correlation_grid(&sea(64, 0.0), -20, 20, &w.times(), Exec::Sequential).unwrap();
        let te = theorem_sumrule(&eq, &w).unwrap();
        assert!(te.value.re.abs() < 1e-10);
    }
}
