//! Dense-matrix representation of the local observable algebra.
//!
//! A [`LocalOperator`] is a matrix on the tensor product of the on-site
//! spaces of a contiguous interval of sites. Tensor factors are ordered by
//! site index ascending, the leftmost site being the most significant
//! (slowest varying) index. On a ring an interval is an arc and may wrap
//! across the seam between site `R-1` and site `0`.

use faer::MatRef;
use num_complex::Complex64;

use crate::error::domain;
use crate::linalg::{self, CMat};
use crate::Result;

/// Open interval of sites or periodic ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryMode {
    /// Sites `first ..= first + sites - 1`.
    Open { first: i64 },
    /// Sites `0 .. sites`, arithmetic mod `sites`.
    Ring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LatticeGeometry {
    pub mode: BoundaryMode,
    pub sites: usize,
    pub local_dim: usize,
}

impl LatticeGeometry {
    pub fn open(first: i64, sites: usize, local_dim: usize) -> Result<Self> {
        Self::checked(BoundaryMode::Open { first }, sites, local_dim)
    }

    pub fn ring(sites: usize, local_dim: usize) -> Result<Self> {
        Self::checked(BoundaryMode::Ring, sites, local_dim)
    }

    /// Open interval wide enough to stand in for the two-way infinite lattice
    /// in local computations.
    pub fn chain(local_dim: usize) -> Self {
        LatticeGeometry { mode: BoundaryMode::Open { first: -(1 << 30) }, sites: 1 << 31, local_dim }
    }

    fn checked(mode: BoundaryMode, sites: usize, local_dim: usize) -> Result<Self> {
        if sites < 2 {
            return Err(domain(format!("lattice needs at least 2 sites, got {sites}")));
        }
        if local_dim < 2 {
            return Err(domain(format!("local dimension must be >= 2, got {local_dim}")));
        }
        Ok(LatticeGeometry { mode, sites, local_dim })
    }

    pub fn is_ring(&self) -> bool {
        matches!(self.mode, BoundaryMode::Ring)
    }

    /// Reduce a site to its canonical label (mod R on a ring).
    pub fn site(&self, x: i64) -> i64 {
        match self.mode {
            BoundaryMode::Ring => x.rem_euclid(self.sites as i64),
            BoundaryMode::Open { .. } => x,
        }
    }

    pub fn contains_interval(&self, iv: Interval) -> bool {
        match self.mode {
            BoundaryMode::Ring => iv.len <= self.sites,
            BoundaryMode::Open { first } => iv.start >= first && iv.end() < first + self.sites as i64,
        }
    }

    fn normalize(&self, iv: Interval) -> Interval {
        Interval { start: self.site(iv.start), len: iv.len }
    }

    /// Position of `site` inside `iv`, if it lies there.
    fn offset_in(&self, iv: Interval, site: i64) -> Option<usize> {
        let off = match self.mode {
            BoundaryMode::Ring => (site - iv.start).rem_euclid(self.sites as i64),
            BoundaryMode::Open { .. } => site - iv.start,
        };
        (off >= 0 && (off as usize) < iv.len).then_some(off as usize)
    }

    /// Smallest interval containing both `a` and `b`.
    pub fn merge(&self, a: Interval, b: Interval) -> Interval {
        match self.mode {
            BoundaryMode::Open { .. } => {
                let start = a.start.min(b.start);
                let end = a.end().max(b.end());
                Interval { start, len: (end - start + 1) as usize }
            }
            BoundaryMode::Ring => {
                let r = self.sites as i64;
                let (a, b) = (self.normalize(a), self.normalize(b));
                let span = |x: Interval, y: Interval| -> usize {
                    let off = (y.start - x.start).rem_euclid(r) as usize;
                    x.len.max(off + y.len)
                };
                let (la, lb) = (span(a, b), span(b, a));
                let (start, len) = match la.cmp(&lb) {
                    std::cmp::Ordering::Less => (a.start, la),
                    std::cmp::Ordering::Greater => (b.start, lb),
                    std::cmp::Ordering::Equal => (a.start.min(b.start), la),
                };
                if len >= self.sites {
                    Interval { start: 0, len: self.sites }
                } else {
                    Interval { start, len }
                }
            }
        }
    }

    pub fn disjoint(&self, a: Interval, b: Interval) -> bool {
        !a.sites().any(|x| self.offset_in(b, self.site(x)).is_some())
    }
}

/// Contiguous run of `len` sites starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    pub start: i64,
    pub len: usize,
}

impl Interval {
    /// Inclusive interval `[a, b]`.
    pub fn new(a: i64, b: i64) -> Result<Self> {
        if b < a {
            return Err(domain(format!("empty interval [{a}, {b}]")));
        }
        Ok(Interval { start: a, len: (b - a + 1) as usize })
    }

    pub fn site(x: i64) -> Self {
        Interval { start: x, len: 1 }
    }

    pub fn end(&self) -> i64 {
        self.start + self.len as i64 - 1
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.start..self.start + self.len as i64
    }

    pub fn shifted(&self, x: i64) -> Self {
        Interval { start: self.start + x, len: self.len }
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end())
    }
}

/// A finitely supported observable.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    geometry: LatticeGeometry,
    support: Interval,
    matrix: CMat,
}

impl LocalOperator {
    pub fn new(geometry: LatticeGeometry, support: Interval, matrix: CMat) -> Result<Self> {
        if !geometry.contains_interval(support) {
            return Err(domain(format!("support {support} does not fit the lattice")));
        }
        let dim = checked_pow(geometry.local_dim, support.len)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(domain(format!(
                "matrix is {}x{}, support {support} needs {dim}x{dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(LocalOperator { geometry, support: geometry.normalize(support), matrix })
    }

    /// Single-site operator at `x`.
    pub fn on_site(geometry: LatticeGeometry, x: i64, matrix: CMat) -> Result<Self> {
        Self::new(geometry, Interval::site(x), matrix)
    }

    pub fn identity(geometry: LatticeGeometry, support: Interval) -> Result<Self> {
        let dim = checked_pow(geometry.local_dim, support.len)?;
        Self::new(geometry, support, linalg::identity(dim))
    }

    pub fn zero(geometry: LatticeGeometry, support: Interval) -> Result<Self> {
        let dim = checked_pow(geometry.local_dim, support.len)?;
        Self::new(geometry, support, linalg::zeros(dim, dim))
    }

    pub fn geometry(&self) -> LatticeGeometry {
        self.geometry
    }

    pub fn support(&self) -> Interval {
        self.support
    }

    pub fn matrix(&self) -> MatRef<'_, Complex64> {
        self.matrix.as_ref()
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `A ⊗ 1` on `target`, which must contain the support.
    pub fn embed(&self, target: Interval) -> Result<LocalOperator> {
        let g = self.geometry;
        if !g.contains_interval(target) {
            return Err(domain(format!("target {target} does not fit the lattice")));
        }
        let target = g.normalize(target);
        if target == self.support {
            return Ok(self.clone());
        }
        let dim = checked_pow(g.local_dim, target.len)?;
        let mut out = linalg::zeros(dim, dim);
        self.add_embedded(&mut out, target)?;
        Ok(LocalOperator { geometry: g, support: target, matrix: out })
    }

    /// `out += A ⊗ 1` with `out` on the (normalized) interval `target`.
    fn add_embedded(&self, out: &mut CMat, target: Interval) -> Result<()> {
        let g = self.geometry;
        let positions: Vec<usize> = self
            .support
            .sites()
            .map(|x| g.offset_in(target, g.site(x)))
            .collect::<Option<_>>()
            .ok_or_else(|| domain(format!("target {target} does not contain support {}", self.support)))?;
        let d = g.local_dim;
        let n = target.len;
        let stride = |p: usize| d.pow((n - 1 - p) as u32);
        let rest: Vec<usize> = (0..n).filter(|p| !positions.contains(p)).collect();
        let local_offsets = digit_offsets(d, &positions, &stride);
        let rest_offsets = digit_offsets(d, &rest, &stride);
        let m = self.matrix.as_ref();
        for &r in &rest_offsets {
            for (j, &cj) in local_offsets.iter().enumerate() {
                for (i, &ci) in local_offsets.iter().enumerate() {
                    let v = m[(i, j)];
                    if v != linalg::ZERO {
                        out[(r + ci, r + cj)] += v;
                    }
                }
            }
        }
        Ok(())
    }

    fn check_same_lattice(&self, other: &LocalOperator) -> Result<()> {
        if self.geometry != other.geometry {
            return Err(domain("operators live on different lattices"));
        }
        Ok(())
    }

    fn merged(&self, other: &LocalOperator) -> Result<(LocalOperator, LocalOperator)> {
        self.check_same_lattice(other)?;
        let target = self.geometry.merge(self.support, other.support);
        Ok((self.embed(target)?, other.embed(target)?))
    }

    /// Product on the smallest interval containing both supports.
    pub fn multiply(&self, other: &LocalOperator) -> Result<LocalOperator> {
        let (a, b) = self.merged(other)?;
        let matrix = linalg::matmul(a.matrix(), b.matrix());
        Ok(LocalOperator { matrix, ..a })
    }

    /// `AB - BA`. Exactly zero for disjoint supports.
    pub fn commutator(&self, other: &LocalOperator) -> Result<LocalOperator> {
        self.check_same_lattice(other)?;
        if self.geometry.disjoint(self.support, other.support) {
            let target = self.geometry.merge(self.support, other.support);
            return LocalOperator::zero(self.geometry, target);
        }
        let (a, b) = self.merged(other)?;
        let matrix = linalg::commutator(a.matrix(), b.matrix());
        Ok(LocalOperator { matrix, ..a })
    }

    pub fn plus(&self, other: &LocalOperator) -> Result<LocalOperator> {
        let (a, b) = self.merged(other)?;
        let matrix = linalg::add(a.matrix(), b.matrix());
        Ok(LocalOperator { matrix, ..a })
    }

    pub fn minus(&self, other: &LocalOperator) -> Result<LocalOperator> {
        let (a, b) = self.merged(other)?;
        let matrix = linalg::sub(a.matrix(), b.matrix());
        Ok(LocalOperator { matrix, ..a })
    }

    pub fn scaled(&self, s: Complex64) -> LocalOperator {
        LocalOperator { matrix: linalg::scale(self.matrix(), s), ..*self }
    }

    pub fn adjoint(&self) -> LocalOperator {
        LocalOperator { matrix: linalg::adjoint(self.matrix()), ..*self }
    }

    /// Space translation τ_x: same matrix, support shifted by `x`.
    pub fn translate(&self, x: i64) -> Result<LocalOperator> {
        let support = self.support.shifted(x);
        if !self.geometry.contains_interval(support) {
            return Err(domain(format!("translation by {x} moves {} off the lattice", self.support)));
        }
        Ok(LocalOperator {
            geometry: self.geometry,
            support: self.geometry.normalize(support),
            matrix: self.matrix.clone(),
        })
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        linalg::spectral_norm(self.matrix())
    }

    pub fn hermiticity_residual(&self) -> f64 {
        linalg::hermiticity_residual(self.matrix())
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(self.matrix())
    }

    /// Max entrywise difference after embedding both on the merged support.
    pub fn max_abs_diff(&self, other: &LocalOperator) -> Result<f64> {
        let (a, b) = self.merged(other)?;
        Ok(linalg::max_abs_diff(a.matrix(), b.matrix()))
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(self.matrix())
    }

    /// Sum of operators (empty input is rejected; supports are merged).
    pub fn sum<'a>(ops: impl IntoIterator<Item = &'a LocalOperator>) -> Result<LocalOperator> {
        let ops: Vec<&LocalOperator> = ops.into_iter().collect();
        let first = *ops.first().ok_or_else(|| domain("sum of no operators"))?;
        let g = first.geometry;
        let mut target = first.support;
        for op in &ops[1..] {
            first.check_same_lattice(op)?;
            target = g.merge(target, op.support);
        }
        let target = g.normalize(target);
        let dim = checked_pow(g.local_dim, target.len)?;
        let mut out = linalg::zeros(dim, dim);
        for op in &ops {
            op.add_embedded(&mut out, target)?;
        }
        Ok(LocalOperator { geometry: g, support: target, matrix: out })
    }
}

fn checked_pow(d: usize, n: usize) -> Result<usize> {
    u32::try_from(n)
        .ok()
        .and_then(|n| d.checked_pow(n))
        .filter(|&dim| dim <= 1 << 16)
        .ok_or_else(|| domain(format!("local operator on {n} sites of dimension {d} is too large")))
}

/// For each multi-index over `positions` (most significant first), the offset
/// it contributes to the full index.
fn digit_offsets(d: usize, positions: &[usize], stride: &dyn Fn(usize) -> usize) -> Vec<usize> {
    let count = d.pow(positions.len() as u32);
    (0..count)
        .map(|mut idx| {
            let mut off = 0;
            for &p in positions.iter().rev() {
                off += (idx % d) * stride(p);
                idx /= d;
            }
            off
        })
        .collect()
}

/// Standard single-site matrices.
pub mod spin {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn from_rows(rows: [[Complex64; 2]; 2]) -> CMat {
        CMat::from_fn(2, 2, |i, j| rows[i][j])
    }

    pub fn sigma_x() -> CMat {
        from_rows([[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]])
    }

    pub fn sigma_y() -> CMat {
        from_rows([[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]])
    }

    pub fn sigma_z() -> CMat {
        from_rows([[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]])
    }

    /// σ⁺ = |↑⟩⟨↓| with |↑⟩ the first basis vector.
    pub fn sigma_plus() -> CMat {
        from_rows([[c(0., 0.), c(1., 0.)], [c(0., 0.), c(0., 0.)]])
    }

    pub fn sigma_minus() -> CMat {
        from_rows([[c(0., 0.), c(0., 0.)], [c(1., 0.), c(0., 0.)]])
    }

    /// Spin-1/2 components S^(a) = σ^(a)/2, a = 1, 2, 3.
    pub fn spin_half(a: usize) -> CMat {
        let s = match a {
            1 => sigma_x(),
            2 => sigma_y(),
            3 => sigma_z(),
            _ => panic!("spin component must be 1, 2 or 3"),
        };
        linalg::scale(s.as_ref(), c(0.5, 0.0))
    }
}
