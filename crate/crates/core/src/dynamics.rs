//! Exact dynamics on finite rings.
//!
//! The ring Hamiltonian is split into charge sectors when the site charge is
//! diagonal in the site basis and each sector is diagonalized densely. Global
//! operators are stored as a map from (row sector, column sector) to dense
//! blocks; charge-conserving operators only have diagonal blocks.
//!
//! Operators built on the open chain ([`crate::models::ModelSpec::chain`]) are
//! placed on the ring with chain site `x` at ring site `x + origin mod R`.
//! The default origin `R/2` keeps operators near the chain origin away from
//! the seam between ring sites `R-1` and `0`.
//!
//! For Jordan-Wigner fermions the hopping part of the seam bond is multiplied
//! by `(-1)^(N-1)` in the `N`-particle sector, which makes the spin ring
//! Hamiltonian equal to the periodic fermion ring. Fermion operators must not
//! straddle the seam.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::algebra::{BoundaryMode, Interval, LocalOperator};
use crate::error::{domain, Error};
use crate::exec::Exec;
use crate::freefermion::momenta;
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::models::{ModelKind, ModelSpec};
use crate::Result;

/// Default Hilbert space dimension cap (`2^14`).
pub const DEFAULT_CAP: usize = 1 << 14;

/// Blocks above this size get Lanczos norms instead of dense ones.
const DENSE_NORM_MAX: usize = 256;

#[derive(Clone, Copy, Debug)]
pub struct EdOptions {
    pub cap: usize,
    /// Use charge sectors when the charge is diagonal.
    pub blocking: bool,
    /// Ring site of chain site 0; `None` means `R/2`.
    pub origin: Option<i64>,
    pub exec: Exec,
}

impl Default for EdOptions {
    fn default() -> Self {
        EdOptions { cap: DEFAULT_CAP, blocking: true, origin: None, exec: Exec::default() }
    }
}

#[derive(Clone, Debug)]
struct Sector {
    label: i64,
    states: Vec<usize>,
    energies: Vec<f64>,
    vectors: CMat,
}

/// Spectral decomposition of a ring Hamiltonian.
#[derive(Clone, Debug)]
pub struct EdSystem {
    model: ModelSpec,
    sites: usize,
    origin: i64,
    dim: usize,
    exec: Exec,
    sectors: Vec<Sector>,
    /// product state -> (sector, position in sector)
    locate: Vec<(u32, u32)>,
    /// sector Hamiltonians in the product basis
    hamiltonian: Vec<CMat>,
}

/// Operator on the ring Hilbert space as sector blocks.
#[derive(Clone, Debug, Default)]
pub struct FullOp {
    blocks: BTreeMap<(usize, usize), CMat>,
}

/// The same, expressed in the energy eigenbasis.
#[derive(Clone, Debug, Default)]
pub struct EigenOp {
    blocks: BTreeMap<(usize, usize), CMat>,
}

/// Nonzero entries of an embedded local operator, in product-basis indices.
#[derive(Clone, Debug, Default)]
pub struct SparseOp {
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

impl EdSystem {
    /// Diagonalize the ring Hamiltonian of `model` on `sites` sites.
    pub fn new(model: &ModelSpec, sites: usize, opts: EdOptions) -> Result<Self> {
        let d = model.local_dim;
        let dim = u32::try_from(sites)
            .ok()
            .and_then(|s| d.checked_pow(s))
            .filter(|&n| n <= opts.cap)
            .ok_or(Error::DimensionCap { dim: d.saturating_pow(sites.min(64) as u32), cap: opts.cap })?;
        if sites < 2 {
            return Err(domain("ring needs at least 2 sites"));
        }
        let labels = state_labels(model, sites, dim, opts.blocking);
        let mut by_label: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (s, &l) in labels.iter().enumerate() {
            by_label.entry(l).or_default().push(s);
        }
        let mut locate = vec![(0u32, 0u32); dim];
        let groups: Vec<(i64, Vec<usize>)> = by_label.into_iter().collect();
        for (si, (_, states)) in groups.iter().enumerate() {
            for (p, &s) in states.iter().enumerate() {
                locate[s] = (si as u32, p as u32);
            }
        }
        let mut sys = EdSystem {
            model: model.clone(),
            sites,
            origin: opts.origin.unwrap_or((sites / 2) as i64),
            dim,
            exec: opts.exec,
            sectors: Vec::new(),
            locate,
            hamiltonian: Vec::new(),
        };
        let hs = groups
            .iter()
            .enumerate()
            .map(|(si, (_, states))| sys.sector_hamiltonian(si, states))
            .collect::<Result<Vec<_>>>()?;
        let eig = opts.exec.try_map(hs.iter().collect(), |h: &CMat| {
            linalg::hermitian_eigen(linalg::hermitian_part(h.as_ref()).as_ref())
        })?;
        sys.sectors = groups
            .into_iter()
            .zip(eig)
            .map(|((label, states), (energies, vectors))| Sector { label, states, energies, vectors })
            .collect();
        sys.hamiltonian = hs;
        Ok(sys)
    }

    fn sector_hamiltonian(&self, si: usize, states: &[usize]) -> Result<CMat> {
        let d = self.model.local_dim;
        let r = self.sites;
        let bond = self.model.bond_matrix();
        let fermion = self.model.kind == ModelKind::Fermion;
        let cols = column_nonzeros(bond);
        let mut h = linalg::zeros(states.len(), states.len());
        for (j, &c) in states.iter().enumerate() {
            let occupied = if fermion { (0..r).filter(|&p| self.digit(c, p) == 0).count() } else { 0 };
            for x in 0..r {
                let (p0, p1) = (x, (x + 1) % r);
                let (a, b) = (self.digit(c, p0), self.digit(c, p1));
                for &(lo, v) in &cols[a * d + b] {
                    let (a2, b2) = (lo / d, lo % d);
                    let target = self.replace_digit(self.replace_digit(c, p0, a2), p1, b2);
                    let mut v = v;
                    // Seam bond: site 0 is p1 when x = R-1.
                    if fermion && x == r - 1 && r > 2 && b2 != b && (occupied + 1) % 2 == 1 {
                        v = -v;
                    }
                    let (ts, tp) = self.locate[target];
                    if ts as usize != si {
                        return Err(Error::ChargeNotConserved { norm: v.norm() });
                    }
                    h[(tp as usize, j)] += v;
                }
            }
        }
        Ok(h)
    }

    fn stride(&self, p: usize) -> usize {
        self.model.local_dim.pow((self.sites - 1 - p) as u32)
    }

    fn digit(&self, state: usize, p: usize) -> usize {
        (state / self.stride(p)) % self.model.local_dim
    }

    fn replace_digit(&self, state: usize, p: usize, new: usize) -> usize {
        let st = self.stride(p);
        state - self.digit(state, p) * st + new * st
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn sector_count(&self) -> usize {
        self.sectors.len()
    }

    pub fn sector_sizes(&self) -> Vec<usize> {
        self.sectors.iter().map(|s| s.states.len()).collect()
    }

    /// Total charge of each sector (meaningful with blocking).
    pub fn sector_charges(&self) -> Vec<f64> {
        self.sectors.iter().map(|s| s.label as f64 * 1e-6).collect()
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.sectors.iter().flat_map(|s| s.energies.iter().copied()).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn sector_energies(&self, s: usize) -> &[f64] {
        &self.sectors[s].energies
    }

    /// Max over sectors of `|U diag(E) U† - H|` and `|U†U - 1|` (entrywise).
    pub fn decomposition_residuals(&self) -> (f64, f64) {
        let mut rec = 0.0f64;
        let mut uni = 0.0f64;
        for (s, h) in self.sectors.iter().zip(&self.hamiltonian) {
            let n = s.states.len();
            let ud = CMat::from_fn(n, n, |i, j| s.vectors[(i, j)] * s.energies[j]);
            let back = linalg::matmul_adj_rhs(ud.as_ref(), s.vectors.as_ref());
            rec = rec.max(linalg::max_abs_diff(back.as_ref(), h.as_ref()));
            let g = linalg::matmul_adj_lhs(s.vectors.as_ref(), s.vectors.as_ref());
            uni = uni.max(linalg::max_abs_diff(g.as_ref(), linalg::identity(n).as_ref()));
        }
        (rec, uni)
    }

    /// Ring site of a site of `op`'s lattice.
    fn ring_positions(&self, op: &LocalOperator) -> Result<Vec<usize>> {
        let g = op.geometry();
        if g.local_dim != self.model.local_dim {
            return Err(domain("operator and model have different local dimensions"));
        }
        let shift = match g.mode {
            BoundaryMode::Ring if g.sites == self.sites => 0,
            BoundaryMode::Ring => return Err(domain("operator lives on a ring of a different size")),
            BoundaryMode::Open { .. } => self.origin,
        };
        let sup = op.support();
        if sup.len > self.sites {
            return Err(domain(format!("support {sup} does not fit a ring of {} sites", self.sites)));
        }
        let pos: Vec<usize> = sup.sites().map(|x| (x + shift).rem_euclid(self.sites as i64) as usize).collect();
        let wraps = pos.windows(2).any(|w| w[1] < w[0]);
        if wraps && self.model.kind == ModelKind::Fermion && op.max_abs() > 0.0 {
            return Err(Error::Unsupported(format!(
                "fermion operator on {sup} crosses the ring seam; move it away from the seam"
            )));
        }
        Ok(pos)
    }

    /// Embed a local operator as a sparse product-basis operator.
    pub fn sparse(&self, op: &LocalOperator) -> Result<SparseOp> {
        let pos = self.ring_positions(op)?;
        let d = self.model.local_dim;
        let m = op.matrix();
        let n = pos.len();
        let cols: Vec<Vec<(usize, Complex64)>> = (0..m.ncols())
            .map(|j| (0..m.nrows()).filter(|&i| m[(i, j)] != ZERO).map(|i| (i, m[(i, j)])).collect())
            .collect();
        let strides: Vec<usize> = pos.iter().map(|&p| self.stride(p)).collect();
        let mut entries = Vec::new();
        for c in 0..self.dim {
            let mut lin = 0;
            let mut base = c;
            for (k, &p) in pos.iter().enumerate() {
                let dg = self.digit(c, p);
                lin = lin * d + dg;
                base -= dg * strides[k];
            }
            for &(lo, v) in &cols[lin] {
                let mut r = base;
                let mut rem = lo;
                for k in (0..n).rev() {
                    r += (rem % d) * strides[k];
                    rem /= d;
                }
                entries.push((r, c, v));
            }
        }
        Ok(SparseOp { entries })
    }

    /// Embed a local operator as a block operator.
    pub fn full(&self, op: &LocalOperator) -> Result<FullOp> {
        Ok(self.from_sparse(&self.sparse(op)?))
    }

    pub fn from_sparse(&self, sp: &SparseOp) -> FullOp {
        let mut out = FullOp::default();
        for &(r, c, v) in &sp.entries {
            let (rs, rp) = self.locate[r];
            let (cs, cp) = self.locate[c];
            let (rs, cs) = (rs as usize, cs as usize);
            let (nr, nc) = (self.sectors[rs].states.len(), self.sectors[cs].states.len());
            let b = out.blocks.entry((rs, cs)).or_insert_with(|| linalg::zeros(nr, nc));
            b[(rp as usize, cp as usize)] += v;
        }
        out
    }

    /// Identity on the ring.
    pub fn identity(&self) -> FullOp {
        FullOp {
            blocks: self
                .sectors
                .iter()
                .enumerate()
                .map(|(s, sec)| ((s, s), linalg::identity(sec.states.len())))
                .collect(),
        }
    }

    /// The ring Hamiltonian (with the fermion seam sign, if any).
    pub fn hamiltonian_op(&self) -> FullOp {
        FullOp { blocks: self.hamiltonian.iter().cloned().enumerate().map(|(s, h)| ((s, s), h)).collect() }
    }

    pub fn to_eigen(&self, op: &FullOp) -> EigenOp {
        let items: Vec<_> = op.blocks.iter().collect();
        let blocks = self.exec.map(items, |(&(r, c), b)| {
            let left = linalg::matmul_adj_lhs(self.sectors[r].vectors.as_ref(), b.as_ref());
            ((r, c), linalg::matmul(left.as_ref(), self.sectors[c].vectors.as_ref()))
        });
        EigenOp { blocks: blocks.into_iter().collect() }
    }

    pub fn from_eigen(&self, op: &EigenOp) -> FullOp {
        let items: Vec<_> = op.blocks.iter().collect();
        let blocks = self.exec.map(items, |(&(r, c), b)| {
            let left = linalg::matmul(self.sectors[r].vectors.as_ref(), b.as_ref());
            ((r, c), linalg::matmul_adj_rhs(left.as_ref(), self.sectors[c].vectors.as_ref()))
        });
        FullOp { blocks: blocks.into_iter().collect() }
    }

    /// `e^{iHt} A e^{-iHt}` in the eigenbasis.
    pub fn evolve_eigen(&self, op: &EigenOp, t: f64) -> EigenOp {
        if t == 0.0 {
            return op.clone();
        }
        let blocks = op
            .blocks
            .iter()
            .map(|(&(r, c), b)| {
                let (er, ec) = (&self.sectors[r].energies, &self.sectors[c].energies);
                let m = CMat::from_fn(b.nrows(), b.ncols(), |i, j| {
                    b[(i, j)] * Complex64::from_polar(1.0, (er[i] - ec[j]) * t)
                });
                ((r, c), m)
            })
            .collect();
        EigenOp { blocks }
    }

    /// `A(t) = e^{iHt} A e^{-iHt}`; returns `A` itself at `t = 0`.
    pub fn evolve(&self, op: &FullOp, t: f64) -> FullOp {
        if t == 0.0 {
            return op.clone();
        }
        self.from_eigen(&self.evolve_eigen(&self.to_eigen(op), t))
    }

    /// Heisenberg-picture evolution of a local operator.
    pub fn evolve_local(&self, op: &LocalOperator, t: f64) -> Result<FullOp> {
        Ok(self.evolve(&self.full(op)?, t))
    }

    /// Dense matrix in the product basis (small rings only).
    pub fn to_dense(&self, op: &FullOp) -> CMat {
        let mut m = linalg::zeros(self.dim, self.dim);
        for (&(r, c), b) in &op.blocks {
            for (i, &gi) in self.sectors[r].states.iter().enumerate() {
                for (j, &gj) in self.sectors[c].states.iter().enumerate() {
                    m[(gi, gj)] = b[(i, j)];
                }
            }
        }
        m
    }

    /// Spectral norm of a block operator.
    pub fn norm(&self, op: &FullOp) -> Result<f64> {
        if op.max_abs() == 0.0 {
            return Ok(0.0);
        }
        if op.blocks.keys().all(|(r, c)| r == c) {
            let items: Vec<&CMat> = op.blocks.values().collect();
            let norms = self.exec.try_map(items, |b: &CMat| block_norm(b))?;
            return Ok(norms.into_iter().fold(0.0, f64::max));
        }
        if self.dim <= 2 * DENSE_NORM_MAX {
            return Ok(linalg::spectral_norm(self.to_dense(op).as_ref()));
        }
        // Largest eigenvalue of A†A.
        let adj = op.adjoint();
        let apply = |v: &[Complex64]| self.apply(&adj, &self.apply(op, v));
        Ok(linalg::lanczos_max_abs(self.dim, apply, 1e-12)?.sqrt())
    }

    /// Matrix-vector product in the product basis.
    pub fn apply(&self, op: &FullOp, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.dim];
        for (&(r, c), b) in &op.blocks {
            let rs = &self.sectors[r].states;
            let cs = &self.sectors[c].states;
            for (j, &gj) in cs.iter().enumerate() {
                let x = v[gj];
                if x == ZERO {
                    continue;
                }
                for (i, &gi) in rs.iter().enumerate() {
                    out[gi] += b[(i, j)] * x;
                }
            }
        }
        out
    }

    /// `A·S` for a sparse `S`.
    pub fn mul_sparse(&self, a: &FullOp, s: &SparseOp) -> FullOp {
        let mut out = FullOp::default();
        for &(r, c, v) in &s.entries {
            let (rs, rp) = self.locate[r];
            let (cs, cp) = self.locate[c];
            // column c of the result gets v times column r of A
            for (&(br, bc), b) in a.blocks.range((0, 0)..) {
                if bc != rs as usize {
                    continue;
                }
                let n = self.sectors[br].states.len();
                let nc = self.sectors[cs as usize].states.len();
                let dst = out.blocks.entry((br, cs as usize)).or_insert_with(|| linalg::zeros(n, nc));
                for i in 0..n {
                    dst[(i, cp as usize)] += b[(i, rp as usize)] * v;
                }
            }
        }
        out
    }

    /// `S·A` for a sparse `S`.
    pub fn sparse_mul(&self, s: &SparseOp, a: &FullOp) -> FullOp {
        let mut out = FullOp::default();
        for &(r, c, v) in &s.entries {
            let (rs, rp) = self.locate[r];
            let (cs, cp) = self.locate[c];
            // row r of the result gets v times row c of A
            for (&(br, bc), b) in &a.blocks {
                if br != cs as usize {
                    continue;
                }
                let n = self.sectors[bc].states.len();
                let nr = self.sectors[rs as usize].states.len();
                let dst = out.blocks.entry((rs as usize, bc)).or_insert_with(|| linalg::zeros(nr, n));
                for j in 0..n {
                    dst[(rp as usize, j)] += v * b[(cp as usize, j)];
                }
            }
        }
        out
    }

    /// `[A, S]` for a sparse `S`.
    pub fn commutator_sparse(&self, a: &FullOp, s: &SparseOp) -> FullOp {
        self.mul_sparse(a, s).minus(&self.sparse_mul(s, a))
    }

    /// Stationary state of this ring.
    pub fn state(&self, kind: &StateKind) -> Result<EdState> {
        match kind {
            StateKind::InfiniteTemperature => Ok(self.diagonal_state(|_| 1.0)),
            StateKind::Gibbs { beta } => {
                if !beta.is_finite() {
                    return Err(domain("inverse temperature must be finite"));
                }
                let emin = self.eigenvalues().first().copied().unwrap_or(0.0);
                Ok(self.diagonal_state(|e| (-beta * (e - emin)).exp()))
            }
            StateKind::Occupation(n) => self.occupation_state(n),
        }
    }

    fn diagonal_state(&self, weight: impl Fn(f64) -> f64) -> EdState {
        let w: Vec<Vec<f64>> = self.sectors.iter().map(|s| s.energies.iter().map(|&e| weight(e)).collect()).collect();
        let z: f64 = w.iter().flatten().sum();
        let rho = w
            .into_iter()
            .enumerate()
            .map(|(s, ws)| (s, Rho::Diagonal(ws.into_iter().map(|x| x / z).collect())))
            .collect();
        EdState { rho }
    }

    fn occupation_state(&self, n: &[f64]) -> Result<EdState> {
        if self.model.kind != ModelKind::Fermion || self.model.param("v") != Some(0.0) {
            return Err(Error::Unsupported(
                "momentum occupations need the non-interacting fermion model (v = 0)".into(),
            ));
        }
        let r = self.sites;
        if n.len() != r {
            return Err(domain(format!("occupation has {} entries, ring has {r} sites", n.len())));
        }
        if n.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(domain("occupations must lie in [0, 1]"));
        }
        let ks = momenta(r);
        let partial: Vec<usize> = (0..r).filter(|&i| n[i] > 0.0 && n[i] < 1.0).collect();
        if partial.len() > 12 {
            return Err(Error::Unsupported("too many fractional occupations for exact enumeration".into()));
        }
        let mut acc: BTreeMap<usize, CMat> = BTreeMap::new();
        for mask in 0u32..(1u32 << partial.len()) {
            let mut weight = 1.0;
            let mut modes: Vec<usize> = (0..r).filter(|&i| n[i] == 1.0).collect();
            for (b, &i) in partial.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    weight *= n[i];
                    modes.push(i);
                } else {
                    weight *= 1.0 - n[i];
                }
            }
            modes.sort_unstable();
            let psi = self.slater(&modes.iter().map(|&i| ks[i]).collect::<Vec<_>>());
            let Some(&g0) = psi.iter().find(|(_, a)| *a != ZERO).map(|(g, _)| g) else { continue };
            let s = self.locate[g0].0 as usize;
            let len = self.sectors[s].states.len();
            let mut v = vec![ZERO; len];
            for (g, a) in &psi {
                v[self.locate[*g].1 as usize] = *a;
            }
            let m = acc.entry(s).or_insert_with(|| linalg::zeros(len, len));
            for j in 0..len {
                if v[j] == ZERO {
                    continue;
                }
                for i in 0..len {
                    m[(i, j)] += v[i] * v[j].conj() * weight;
                }
            }
        }
        let mut rho = BTreeMap::new();
        for (s, m) in acc {
            let sec = &self.sectors[s];
            let e =
                linalg::matmul(linalg::matmul_adj_lhs(sec.vectors.as_ref(), m.as_ref()).as_ref(), sec.vectors.as_ref());
            let mut off = 0.0f64;
            for i in 0..e.nrows() {
                for j in 0..e.ncols() {
                    if (sec.energies[i] - sec.energies[j]).abs() > 1e-8 {
                        off = off.max(e[(i, j)].norm());
                    }
                }
            }
            if off > 1e-9 {
                return Err(Error::Numerical(format!(
                    "momentum state is not stationary on this ring (off-diagonal weight {off:.2e})"
                )));
            }
            rho.insert(s, Rho::Dense(e));
        }
        Ok(EdState { rho })
    }

    /// `Π_k c_k† |0⟩` with `c_k† = R^{-1/2} Σ_y e^{iky} c_y†` over ring sites,
    /// as sparse (index, amplitude) pairs.
    fn slater(&self, ks: &[f64]) -> Vec<(usize, Complex64)> {
        let r = self.sites;
        let vacuum = (0..r).fold(0usize, |acc, p| acc + self.stride(p));
        let mut psi: BTreeMap<usize, Complex64> = BTreeMap::from([(vacuum, ONE)]);
        let norm = 1.0 / (r as f64).sqrt();
        for &k in ks {
            let mut next: BTreeMap<usize, Complex64> = BTreeMap::new();
            for (&s, &a) in &psi {
                for y in 0..r {
                    if self.digit(s, y) == 0 {
                        continue;
                    }
                    let before = (0..y).filter(|&p| self.digit(s, p) == 0).count();
                    let sign = if before % 2 == 0 { 1.0 } else { -1.0 };
                    let phase = Complex64::from_polar(norm * sign, k * y as f64);
                    *next.entry(s - self.stride(y)).or_insert(ZERO) += a * phase;
                }
            }
            psi = next;
        }
        psi.into_iter().filter(|(_, a)| a.norm() > 1e-300).collect()
    }
}

fn state_labels(model: &ModelSpec, sites: usize, dim: usize, blocking: bool) -> Vec<i64> {
    if !blocking || !model.charge_is_diagonal() {
        return vec![0; dim];
    }
    let d = model.local_dim;
    let q: Vec<f64> = (0..d).map(|a| model.charge_matrix()[(a, a)].re).collect();
    (0..dim)
        .map(|mut s| {
            let mut total = 0.0;
            for _ in 0..sites {
                total += q[s % d];
                s /= d;
            }
            (total * 1e6).round() as i64
        })
        .collect()
}

fn column_nonzeros(m: &CMat) -> Vec<Vec<(usize, Complex64)>> {
    (0..m.ncols()).map(|j| (0..m.nrows()).filter(|&i| m[(i, j)] != ZERO).map(|i| (i, m[(i, j)])).collect()).collect()
}

fn block_norm(b: &CMat) -> Result<f64> {
    let n = b.nrows();
    if n <= DENSE_NORM_MAX || n != b.ncols() {
        return Ok(linalg::spectral_norm(b.as_ref()));
    }
    let scale = linalg::max_abs(b.as_ref());
    let tol = 1e-12 * scale;
    let herm = if linalg::hermiticity_residual(b.as_ref()) <= tol {
        Some(b.clone())
    } else {
        let ib = linalg::scale(b.as_ref(), linalg::I);
        (linalg::hermiticity_residual(ib.as_ref()) <= tol).then_some(ib)
    };
    match herm {
        Some(h) => linalg::lanczos_max_abs(n, |v| matvec(&h, v), 1e-12),
        None => {
            let g = linalg::matmul_adj_lhs(b.as_ref(), b.as_ref());
            Ok(linalg::lanczos_max_abs(n, |v| matvec(&g, v), 1e-12)?.sqrt())
        }
    }
}

fn matvec(m: &CMat, v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; m.nrows()];
    for (j, &x) in v.iter().enumerate() {
        if x == ZERO {
            continue;
        }
        let col = m.col(j);
        for (o, &a) in out.iter_mut().zip(col.iter()) {
            *o += a * x;
        }
    }
    out
}

impl FullOp {
    pub fn blocks(&self) -> impl Iterator<Item = (&(usize, usize), &CMat)> {
        self.blocks.iter()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.values().map(|b| linalg::max_abs(b.as_ref())).fold(0.0, f64::max)
    }

    fn zip_with(&self, other: &FullOp, f: impl Fn(Complex64, Complex64) -> Complex64) -> FullOp {
        let mut blocks = BTreeMap::new();
        for key in self.blocks.keys().chain(other.blocks.keys()) {
            if blocks.contains_key(key) {
                continue;
            }
            let m = match (self.blocks.get(key), other.blocks.get(key)) {
                (Some(a), Some(b)) => CMat::from_fn(a.nrows(), a.ncols(), |i, j| f(a[(i, j)], b[(i, j)])),
                (Some(a), None) => CMat::from_fn(a.nrows(), a.ncols(), |i, j| f(a[(i, j)], ZERO)),
                (None, Some(b)) => CMat::from_fn(b.nrows(), b.ncols(), |i, j| f(ZERO, b[(i, j)])),
                (None, None) => unreachable!(),
            };
            blocks.insert(*key, m);
        }
        FullOp { blocks }
    }

    pub fn plus(&self, other: &FullOp) -> FullOp {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn minus(&self, other: &FullOp) -> FullOp {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, s: Complex64) -> FullOp {
        FullOp { blocks: self.blocks.iter().map(|(k, b)| (*k, linalg::scale(b.as_ref(), s))).collect() }
    }

    pub fn adjoint(&self) -> FullOp {
        FullOp { blocks: self.blocks.iter().map(|(&(r, c), b)| ((c, r), linalg::adjoint(b.as_ref()))).collect() }
    }

    pub fn matmul(&self, other: &FullOp) -> FullOp {
        let mut blocks: BTreeMap<(usize, usize), CMat> = BTreeMap::new();
        for (&(r, k), a) in &self.blocks {
            for (&(k2, c), b) in &other.blocks {
                if k != k2 {
                    continue;
                }
                let p = linalg::matmul(a.as_ref(), b.as_ref());
                match blocks.get_mut(&(r, c)) {
                    Some(acc) => *acc = linalg::add(acc.as_ref(), p.as_ref()),
                    None => {
                        blocks.insert((r, c), p);
                    }
                }
            }
        }
        FullOp { blocks }
    }

    pub fn commutator(&self, other: &FullOp) -> FullOp {
        self.matmul(other).minus(&other.matmul(self))
    }

    pub fn trace(&self) -> Complex64 {
        self.blocks.iter().filter(|((r, c), _)| r == c).map(|(_, b)| linalg::trace(b.as_ref())).sum()
    }

    pub fn max_abs_diff(&self, other: &FullOp) -> f64 {
        self.minus(other).max_abs()
    }
}

impl EigenOp {
    pub fn plus(&self, other: &EigenOp) -> EigenOp {
        let a = FullOp { blocks: self.blocks.clone() };
        let b = FullOp { blocks: other.blocks.clone() };
        EigenOp { blocks: a.plus(&b).blocks }
    }

    pub fn scaled(&self, s: Complex64) -> EigenOp {
        EigenOp { blocks: self.blocks.iter().map(|(k, b)| (*k, linalg::scale(b.as_ref(), s))).collect() }
    }
}

/// Which stationary state to build on a ring.
#[derive(Clone, Debug, PartialEq)]
pub enum StateKind {
    InfiniteTemperature,
    Gibbs {
        beta: f64,
    },
    /// Quasi-free state with the given occupation of the ring momenta
    /// (ordered as [`crate::freefermion::momenta`]); fermion model with `v = 0`.
    Occupation(Vec<f64>),
}

#[derive(Clone, Debug)]
enum Rho {
    Diagonal(Vec<f64>),
    Dense(CMat),
}

/// Density matrix commuting with the ring Hamiltonian, stored per sector in
/// the energy eigenbasis.
#[derive(Clone, Debug)]
pub struct EdState {
    rho: BTreeMap<usize, Rho>,
}

impl EdState {
    /// `ω(A)` for `A` in the eigenbasis.
    pub fn expect(&self, a: &EigenOp) -> Complex64 {
        let mut sum = ZERO;
        for (&s, rho) in &self.rho {
            let Some(b) = a.blocks.get(&(s, s)) else { continue };
            sum += match rho {
                Rho::Diagonal(w) => w.iter().enumerate().map(|(i, &p)| b[(i, i)] * p).sum(),
                Rho::Dense(m) => linalg::trace(linalg::matmul(m.as_ref(), b.as_ref()).as_ref()),
            };
        }
        sum
    }

    /// `(ρA)` restricted to row sector `s`, or `(Aρ)` when `right` is set.
    fn with_rho(&self, a: &EigenOp, s: usize, c: usize, right: bool) -> Option<CMat> {
        let (key, rs) = if right { ((c, s), s) } else { ((s, c), s) };
        let b = a.blocks.get(&key)?;
        let rho = self.rho.get(&rs)?;
        Some(match (rho, right) {
            (Rho::Diagonal(w), false) => CMat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * w[i]),
            (Rho::Diagonal(w), true) => CMat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * w[j]),
            (Rho::Dense(m), false) => linalg::matmul(m.as_ref(), b.as_ref()),
            (Rho::Dense(m), true) => linalg::matmul(b.as_ref(), m.as_ref()),
        })
    }

    /// `ω(A B(t))`.
    pub fn two_time(&self, sys: &EdSystem, a: &EigenOp, b: &EigenOp, t: f64) -> Complex64 {
        let mut sum = ZERO;
        for &s in self.rho.keys() {
            for (&(r, c), _) in a.blocks.range((s, 0)..(s + 1, 0)) {
                debug_assert_eq!(r, s);
                let (Some(ra), Some(bb)) = (self.with_rho(a, s, c, false), b.blocks.get(&(c, s))) else { continue };
                sum += trace_product_phased(sys, &ra, bb, s, c, t);
            }
        }
        sum
    }

    /// `ω(B(t) A)`.
    pub fn two_time_reversed(&self, sys: &EdSystem, a: &EigenOp, b: &EigenOp, t: f64) -> Complex64 {
        let mut sum = ZERO;
        for &s in self.rho.keys() {
            // (Aρ) has column sector s; B(t) block (s, r).
            for (&(r, c), _) in a.blocks.iter().filter(|((_, c), _)| *c == s) {
                debug_assert_eq!(c, s);
                let (Some(ar), Some(bb)) = (self.with_rho(a, s, r, true), b.blocks.get(&(s, r))) else { continue };
                sum += trace_product_phased(sys, &ar, bb, r, s, t);
            }
        }
        sum
    }

    /// `ω([A, B(t)])`.
    pub fn commutator_two_time(&self, sys: &EdSystem, a: &EigenOp, b: &EigenOp, t: f64) -> Complex64 {
        self.two_time(sys, a, b, t) - self.two_time_reversed(sys, a, b, t)
    }
}

/// `Σ_ij X_ij B(t)_ji` where X is block (r, c) and B block (c, r) in the
/// eigenbasis, `B(t)_ji = e^{i(E_cj - E_ri)t} B_ji`.
fn trace_product_phased(sys: &EdSystem, x: &CMat, b: &CMat, r: usize, c: usize, t: f64) -> Complex64 {
    let er = &sys.sectors[r].energies;
    let ec = &sys.sectors[c].energies;
    let mut sum = ZERO;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let v = x[(i, j)] * b[(j, i)];
            if v != ZERO {
                sum += if t == 0.0 { v } else { v * Complex64::from_polar(1.0, (ec[j] - er[i]) * t) };
            }
        }
    }
    sum
}

/// Expectations and correlators of local operators in an ED state.
pub struct EdCorrelator<'a> {
    pub system: &'a EdSystem,
    pub state: &'a EdState,
}

impl EdCorrelator<'_> {
    pub fn eigen(&self, a: &LocalOperator) -> Result<EigenOp> {
        Ok(self.system.to_eigen(&self.system.full(a)?))
    }

    pub fn expect(&self, a: &LocalOperator) -> Result<Complex64> {
        Ok(self.state.expect(&self.eigen(a)?))
    }

    /// `ω(A B(t))`.
    pub fn two_time(&self, a: &LocalOperator, b: &LocalOperator, t: f64) -> Result<Complex64> {
        Ok(self.state.two_time(self.system, &self.eigen(a)?, &self.eigen(b)?, t))
    }

    /// `ω(Â B̂(t)) = ω(A B(t)) - ω(A)ω(B)`.
    pub fn connected(&self, a: &LocalOperator, b: &LocalOperator, t: f64) -> Result<Complex64> {
        let (ea, eb) = (self.eigen(a)?, self.eigen(b)?);
        Ok(self.state.two_time(self.system, &ea, &eb, t) - self.state.expect(&ea) * self.state.expect(&eb))
    }

    /// `ω([A, B(t)])`.
    pub fn commutator(&self, a: &LocalOperator, b: &LocalOperator, t: f64) -> Result<Complex64> {
        Ok(self.state.commutator_two_time(self.system, &self.eigen(a)?, &self.eigen(b)?, t))
    }
}

/// `A - ω(A)`: the centred operator.
pub fn center(a: &LocalOperator, expectation: Complex64) -> Result<LocalOperator> {
    let id = LocalOperator::identity(a.geometry(), a.support())?;
    a.minus(&id.scaled(expectation))
}

/// Outcome of the finite-size guard.
#[derive(Clone, Debug)]
pub struct GuardReport {
    /// Smallest ring size that passed.
    pub sites: usize,
    /// Max deviation between consecutive ring sizes, per size tried.
    pub deviations: Vec<(usize, f64)>,
}

/// Grow the ring by two sites at a time until the infinite-temperature
/// autocorrelation `ω(A A(t))` agrees with the next size to `tol` for
/// `|t| ≤ t_max`.
pub fn ring_guard(
    model: &ModelSpec,
    a: &LocalOperator,
    t_max: f64,
    tol: f64,
    start: usize,
    opts: EdOptions,
) -> Result<GuardReport> {
    let times: Vec<f64> = (1..=4).map(|i| t_max * i as f64 / 4.0).collect();
    let profile = |r: usize| -> Result<Vec<Complex64>> {
        let sys = EdSystem::new(model, r, opts)?;
        let st = sys.state(&StateKind::InfiniteTemperature)?;
        let ea = sys.to_eigen(&sys.full(a)?);
        Ok(times.iter().map(|&t| st.two_time(&sys, &ea, &ea, t)).collect())
    };
    let mut r = start.max(a.support().len + 2);
    let mut current = profile(r)?;
    let mut deviations = Vec::new();
    loop {
        let next = profile(r + 2)?;
        let dev = current.iter().zip(&next).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        deviations.push((r, dev));
        if dev < tol {
            return Ok(GuardReport { sites: r, deviations });
        }
        r += 2;
        current = next;
    }
}

/// Region `[a, b]` helper for callers working with chain coordinates.
pub fn interval(a: i64, b: i64) -> Interval {
    Interval { start: a, len: (b - a + 1) as usize }
}
