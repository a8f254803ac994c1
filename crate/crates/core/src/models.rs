//! Nearest-neighbour models: a bond interaction `h_{x,x+1}` and a site charge
//! `n_x` that the bond conserves, plus the operators derived from them.
//!
//! Spinless fermions are carried in the spin-1/2 representation obtained by
//! the Jordan-Wigner map with `n = (1 + σ³)/2`, so basis state 0 of a site is
//! the occupied one. Nearest-neighbour hopping and densities carry no string
//! in this map.
//!
//! # Model file grammar
//!
//! A model file is TOML with a single `[model]` table in one of two forms.
//!
//! ```toml
//! [model]
//! builtin = "xxz"          # or "fermion"
//! params.lambda = 1.0      # fermion takes params.t, params.mu, params.v
//! ```
//!
//! ```toml
//! [model]
//! name = "ising"           # optional, defaults to "custom"
//! local_dim = 2
//! # d^2 x d^2 bond and d x d charge, row-major, entries as [re, im].
//! # Either nested rows or one flat list of d^4 (resp. d^2) pairs.
//! bond = [[[1,0],[0,0],[0,0],[0,0]],
//!         [[0,0],[-1,0],[0,0],[0,0]],
//!         [[0,0],[0,0],[-1,0],[0,0]],
//!         [[0,0],[0,0],[0,0],[1,0]]]
//! charge = [[[1,0],[0,0]], [[0,0],[0,0]]]
//! ```
//!
//! Numbers may be integers or floats. Unknown keys are errors. Parse errors
//! carry the 1-based line and column of the offending item.
//!
//! A one-line shorthand is accepted as well: `xxz,lambda=1` or
//! `model=fermion, t=1, mu=0, v=0.5`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use toml::Spanned;

use crate::algebra::{spin, Interval, LatticeGeometry, LocalOperator};
use crate::error::{domain, Error};
use crate::linalg::{self, CMat, I, ONE, ZERO};
use crate::Result;

/// Tolerance for Hermiticity and charge conservation of accepted models.
pub const MODEL_TOL: f64 = 1e-12;

/// How a model was specified, which decides its serialized form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelSource {
    Builtin,
    Matrices,
}

/// Physical reading of the local Hilbert space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Spin,
    /// Jordan-Wigner fermions; matters only on rings, where the wrap bond
    /// picks up a parity-dependent sign.
    Fermion,
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: String,
    pub local_dim: usize,
    bond: CMat,
    charge: CMat,
    pub params: BTreeMap<String, f64>,
    pub kind: ModelKind,
    pub source: ModelSource,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.local_dim == other.local_dim
            && self.params == other.params
            && self.kind == other.kind
            && self.source == other.source
            && self.bond == other.bond
            && self.charge == other.charge
    }
}

impl ModelSpec {
    /// Validated custom model.
    pub fn from_matrices(name: &str, local_dim: usize, bond: CMat, charge: CMat) -> Result<Self> {
        Self::validated(ModelSpec {
            name: name.to_string(),
            local_dim,
            bond,
            charge,
            params: BTreeMap::new(),
            kind: ModelKind::Spin,
            source: ModelSource::Matrices,
        })
    }

    fn validated(self) -> Result<Self> {
        let d = self.local_dim;
        if d < 2 {
            return Err(domain(format!("local dimension must be >= 2, got {d}")));
        }
        if self.charge.nrows() != d || self.charge.ncols() != d {
            return Err(domain(format!("charge must be {d}x{d}")));
        }
        if self.bond.nrows() != d * d || self.bond.ncols() != d * d {
            return Err(domain(format!("bond must be {0}x{0}", d * d)));
        }
        for (what, m) in [("bond", &self.bond), ("charge", &self.charge)] {
            if !linalg::max_abs(m.as_ref()).is_finite() {
                return Err(domain(format!("{what} has non-finite entries")));
            }
            let residual = linalg::hermiticity_residual(m.as_ref());
            if residual > MODEL_TOL * linalg::max_abs(m.as_ref()).max(1.0) {
                return Err(Error::NotHermitian { what: what.to_string(), residual });
            }
        }
        let norm = self.conservation_residual();
        let scale = (linalg::spectral_norm(self.bond.as_ref()) * linalg::spectral_norm(self.charge.as_ref())).max(1.0);
        if norm > MODEL_TOL * scale {
            return Err(Error::ChargeNotConserved { norm });
        }
        Ok(self)
    }

    /// `‖[h_{0,1}, n_0 + n_1]‖`.
    pub fn conservation_residual(&self) -> f64 {
        let q = pair_charge(self.charge.as_ref());
        linalg::spectral_norm(linalg::commutator(self.bond.as_ref(), q.as_ref()).as_ref())
    }

    pub fn bond_matrix(&self) -> &CMat {
        &self.bond
    }

    pub fn charge_matrix(&self) -> &CMat {
        &self.charge
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    /// Same model with the bond multiplied by `c`.
    pub fn with_scaled_bond(&self, c: f64) -> Result<Self> {
        Self::from_matrices(
            &format!("{}*{c:?}", self.name),
            self.local_dim,
            linalg::scale(self.bond.as_ref(), Complex64::new(c, 0.0)),
            self.charge.clone(),
        )
    }

    /// Whether the charge is diagonal in the site basis (enables sector blocking).
    pub fn charge_is_diagonal(&self) -> bool {
        let d = self.local_dim;
        (0..d).all(|i| (0..d).all(|j| i == j || self.charge[(i, j)] == ZERO))
    }

    /// Open chain standing in for the infinite lattice.
    pub fn chain(&self) -> LatticeGeometry {
        LatticeGeometry::chain(self.local_dim)
    }

    fn check(&self, g: LatticeGeometry) -> Result<()> {
        if g.local_dim != self.local_dim {
            return Err(domain(format!("lattice has local dimension {}, model {}", g.local_dim, self.local_dim)));
        }
        Ok(())
    }

    /// `h_{x,x+1}`.
    pub fn bond_op(&self, g: LatticeGeometry, x: i64) -> Result<LocalOperator> {
        self.check(g)?;
        LocalOperator::new(g, Interval { start: x, len: 2 }, self.bond.clone())
    }

    /// `n_x`.
    pub fn charge_op(&self, g: LatticeGeometry, x: i64) -> Result<LocalOperator> {
        self.check(g)?;
        LocalOperator::on_site(g, x, self.charge.clone())
    }

    /// `j_{x,x+1} = -i[n_{x+1}, h_{x,x+1}]`.
    pub fn current(&self, g: LatticeGeometry, x: i64) -> Result<LocalOperator> {
        let c = self.charge_op(g, x + 1)?.commutator(&self.bond_op(g, x)?)?;
        Ok(c.scaled(-I))
    }

    /// `i[n_x, h_{x,x+1}]`, equal to [`Self::current`] for a conserving bond.
    pub fn current_from_left(&self, g: LatticeGeometry, x: i64) -> Result<LocalOperator> {
        let c = self.charge_op(g, x)?.commutator(&self.bond_op(g, x)?)?;
        Ok(c.scaled(I))
    }

    /// `J_x = i[h_{x-1,x}, h_{x,x+1}]` on `[x-1, x+1]`.
    pub fn energy_current(&self, g: LatticeGeometry, x: i64) -> Result<LocalOperator> {
        let c = self.bond_op(g, x - 1)?.commutator(&self.bond_op(g, x)?)?;
        Ok(c.scaled(I))
    }

    /// Sum of the bonds lying inside the interval `region` (no wrap bond).
    pub fn region_hamiltonian(&self, g: LatticeGeometry, region: Interval) -> Result<LocalOperator> {
        self.check(g)?;
        if region.len < 2 {
            return LocalOperator::zero(g, region);
        }
        let bonds = (region.start..region.end()).map(|x| self.bond_op(g, x)).collect::<Result<Vec<_>>>()?;
        LocalOperator::sum(&bonds)?.embed(region)
    }

    /// `N_Λ = Σ_{x∈Λ} n_x`.
    pub fn region_charge(&self, g: LatticeGeometry, region: Interval) -> Result<LocalOperator> {
        self.check(g)?;
        let terms = region.sites().map(|x| self.charge_op(g, x)).collect::<Result<Vec<_>>>()?;
        LocalOperator::sum(&terms)?.embed(region)
    }

    /// Periodic Hamiltonian `Σ_{x=0}^{R-1} h_{x,x+1 mod R}` on a ring, without
    /// any fermionic boundary sign. For `R = 2` both bonds act on the same
    /// pair of sites, so the bond is counted twice.
    pub fn ring_hamiltonian(&self, g: LatticeGeometry) -> Result<LocalOperator> {
        self.check(g)?;
        if !g.is_ring() {
            return Err(domain("ring_hamiltonian needs a ring"));
        }
        let whole = Interval { start: 0, len: g.sites };
        let bonds = (0..g.sites as i64).map(|x| self.bond_op(g, x)?.embed(whole)).collect::<Result<Vec<_>>>()?;
        LocalOperator::sum(&bonds)
    }

    /// Total charge on a ring.
    pub fn ring_charge(&self, g: LatticeGeometry) -> Result<LocalOperator> {
        self.region_charge(g, Interval { start: 0, len: g.sites })
    }

    /// Serialize to the model file format; [`parse_model`] inverts this.
    pub fn to_toml(&self) -> String {
        let mut s = String::from("[model]\n");
        match self.source {
            ModelSource::Builtin => {
                let _ = writeln!(s, "builtin = {:?}", self.name);
                for (k, v) in &self.params {
                    let _ = writeln!(s, "params.{k} = {v:?}");
                }
            }
            ModelSource::Matrices => {
                let _ = writeln!(s, "name = {:?}", self.name);
                let _ = writeln!(s, "local_dim = {}", self.local_dim);
                let _ = writeln!(s, "bond = {}", matrix_toml(&self.bond));
                let _ = writeln!(s, "charge = {}", matrix_toml(&self.charge));
            }
        }
        s
    }
}

fn pair_charge(n: faer::MatRef<'_, Complex64>) -> CMat {
    let id = linalg::identity(n.nrows());
    linalg::add(linalg::kron(n, id.as_ref()).as_ref(), linalg::kron(id.as_ref(), n).as_ref())
}

fn matrix_toml(m: &CMat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> =
                (0..m.ncols()).map(|j| format!("[{:?}, {:?}]", m[(i, j)].re, m[(i, j)].im)).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[\n  {},\n]", rows.join(",\n  "))
}

/// Built-in models: `xxz` with `lambda`, `fermion` with `t`, `mu`, `v`.
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let keys: &[&str] = match name {
        "xxz" => &["lambda"],
        "fermion" => &["t", "mu", "v"],
        _ => return Err(domain(format!("unknown built-in model {name:?} (expected xxz or fermion)"))),
    };
    for k in params.keys() {
        if !keys.contains(&k.as_str()) {
            return Err(domain(format!("model {name} has no parameter {k:?}")));
        }
    }
    let get = |k: &str| -> Result<f64> {
        let v = *params.get(k).ok_or_else(|| domain(format!("model {name} needs parameter {k:?}")))?;
        if !v.is_finite() {
            return Err(domain(format!("parameter {k} must be finite")));
        }
        Ok(v)
    };
    let c = |x: f64| Complex64::new(x, 0.0);
    let (bond, charge, kind) = match name {
        "xxz" => {
            let lambda = get("lambda")?;
            let s = |a| spin::spin_half(a);
            let bond = linalg::add(
                linalg::add(
                    linalg::kron(s(1).as_ref(), s(1).as_ref()).as_ref(),
                    linalg::kron(s(2).as_ref(), s(2).as_ref()).as_ref(),
                )
                .as_ref(),
                linalg::scale(linalg::kron(s(3).as_ref(), s(3).as_ref()).as_ref(), c(lambda)).as_ref(),
            );
            (bond, s(3), ModelKind::Spin)
        }
        _ => {
            let (t, mu, v) = (get("t")?, get("mu")?, get("v")?);
            let (sp, sm) = (spin::sigma_plus(), spin::sigma_minus());
            let n = CMat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { ONE } else { ZERO });
            let id = linalg::identity(2);
            let hop = linalg::add(
                linalg::kron(sp.as_ref(), sm.as_ref()).as_ref(),
                linalg::kron(sm.as_ref(), sp.as_ref()).as_ref(),
            );
            let mut bond = linalg::scale(hop.as_ref(), c(-t));
            bond = linalg::sub(
                bond.as_ref(),
                linalg::scale(linalg::kron(n.as_ref(), id.as_ref()).as_ref(), c(mu)).as_ref(),
            );
            bond =
                linalg::add(bond.as_ref(), linalg::scale(linalg::kron(n.as_ref(), n.as_ref()).as_ref(), c(v)).as_ref());
            (bond, n, ModelKind::Fermion)
        }
    };
    ModelSpec {
        name: name.to_string(),
        local_dim: 2,
        bond,
        charge,
        params: params.clone(),
        kind,
        source: ModelSource::Builtin,
    }
    .validated()
}

/// Convenience wrapper around [`builtin`].
pub fn xxz(lambda: f64) -> ModelSpec {
    builtin("xxz", &BTreeMap::from([("lambda".to_string(), lambda)])).expect("valid xxz")
}

/// Convenience wrapper around [`builtin`].
pub fn fermion(t: f64, mu: f64, v: f64) -> ModelSpec {
    let p = BTreeMap::from([("t".to_string(), t), ("mu".to_string(), mu), ("v".to_string(), v)]);
    builtin("fermion", &p).expect("valid fermion")
}

/// Random conserving model: random Hermitian `n` and `h₀`, with `h₀` projected
/// onto the commutant of `n⊗1 + 1⊗n`.
pub fn random_model(local_dim: usize, seed: u64) -> Result<ModelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = local_dim;
    let charge = random_hermitian(d, &mut rng);
    let h0 = random_hermitian(d * d, &mut rng);
    let q = pair_charge(charge.as_ref());
    let (vals, vecs) = linalg::hermitian_eigen(q.as_ref())?;
    let rotated = linalg::matmul(linalg::matmul_adj_lhs(vecs.as_ref(), h0.as_ref()).as_ref(), vecs.as_ref());
    let gap = 1e-8 * vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let projected =
        CMat::from_fn(d * d, d * d, |i, j| if (vals[i] - vals[j]).abs() <= gap { rotated[(i, j)] } else { ZERO });
    let back = linalg::matmul_adj_rhs(linalg::matmul(vecs.as_ref(), projected.as_ref()).as_ref(), vecs.as_ref());
    ModelSpec::from_matrices(&format!("random-{seed}"), d, linalg::hermitian_part(back.as_ref()), charge)
}

/// Random Hermitian matrix with entries of order one.
pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    linalg::hermitian_part(a.as_ref())
}

/// The `[model]` table of a model or run-config file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelStanza {
    name: Option<Spanned<String>>,
    builtin: Option<Spanned<String>>,
    params: Option<BTreeMap<String, Spanned<f64>>>,
    local_dim: Option<Spanned<i64>>,
    bond: Option<Spanned<toml::Value>>,
    charge: Option<Spanned<toml::Value>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    model: Spanned<ModelStanza>,
}

/// Parse a model file (TOML) or the one-line shorthand.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let trimmed = text.trim();
    if !trimmed.contains('\n') && !trimmed.starts_with('[') && !trimmed.starts_with('#') {
        return parse_shorthand(trimmed);
    }
    let file: ModelFile = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    let span = file.model.span();
    file.model.into_inner().resolve(text, span.start)
}

impl ModelStanza {
    /// Build and validate the model. `text` is the source the spans refer to
    /// and `at` the offset of the table itself.
    pub fn resolve(self, text: &str, at: usize) -> Result<ModelSpec> {
        let err = |offset: usize, message: String| {
            let (line, column) = line_col(text, offset);
            Error::Parse { line, column, message }
        };
        let located = |offset: usize, e: Error| match e {
            Error::Parse { .. } => e,
            other => err(offset, other.to_string()),
        };
        if let Some(b) = self.builtin {
            for (key, v) in [
                ("local_dim", self.local_dim.is_some()),
                ("bond", self.bond.is_some()),
                ("charge", self.charge.is_some()),
            ] {
                if v {
                    return Err(err(b.span().start, format!("`{key}` cannot be combined with `builtin`")));
                }
            }
            if let Some(n) = &self.name {
                return Err(err(n.span().start, "`name` cannot be combined with `builtin`".into()));
            }
            let params: BTreeMap<String, f64> =
                self.params.unwrap_or_default().into_iter().map(|(k, v)| (k, *v.get_ref())).collect();
            let span = b.span();
            return builtin(b.get_ref(), &params).map_err(|e| located(span.start, e));
        }
        if let Some(p) = self.params.as_ref().and_then(|p| p.values().next()) {
            return Err(err(p.span().start, "`params` only apply to built-in models".into()));
        }
        let ld = self.local_dim.ok_or_else(|| err(at, "expected `builtin` or `local_dim`".into()))?;
        let d = usize::try_from(*ld.get_ref())
            .ok()
            .filter(|&d| (2..=16).contains(&d))
            .ok_or_else(|| err(ld.span().start, format!("local_dim must be in 2..=16, got {}", ld.get_ref())))?;
        let bond = self.bond.ok_or_else(|| err(at, "missing `bond`".into()))?;
        let charge = self.charge.ok_or_else(|| err(at, "missing `charge`".into()))?;
        let bond_span = bond.span().start;
        let bm = value_matrix(bond.get_ref(), d * d).map_err(|m| err(bond_span, format!("bond: {m}")))?;
        let charge_span = charge.span().start;
        let cm = value_matrix(charge.get_ref(), d).map_err(|m| err(charge_span, format!("charge: {m}")))?;
        let name = self.name.map(|n| n.into_inner()).unwrap_or_else(|| "custom".to_string());
        ModelSpec::from_matrices(&name, d, bm, cm).map_err(|e| located(bond_span, e))
    }
}

fn value_matrix(v: &toml::Value, n: usize) -> std::result::Result<CMat, String> {
    let outer = v.as_array().ok_or("expected an array")?;
    let entries: Vec<&toml::Value> = if outer.len() == n && outer.iter().all(is_row) {
        outer
            .iter()
            .map(|row| {
                let row = row.as_array().expect("checked row");
                if row.len() != n {
                    Err(format!("each row needs {n} entries, found {}", row.len()))
                } else {
                    Ok(row.iter())
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect()
    } else if outer.len() == n * n {
        outer.iter().collect()
    } else {
        return Err(format!("expected {n} rows of {n} [re, im] pairs or {} pairs", n * n));
    };
    let mut m = linalg::zeros(n, n);
    for (idx, e) in entries.iter().enumerate() {
        m[(idx / n, idx % n)] = pair(e)
            .ok_or_else(|| format!("entry ({}, {}) must be a [re, im] pair of numbers", idx / n + 1, idx % n + 1))?;
    }
    Ok(m)
}

fn is_row(v: &toml::Value) -> bool {
    v.as_array().is_some_and(|r| r.first().is_some_and(|e| pair(e).is_some()))
}

fn pair(v: &toml::Value) -> Option<Complex64> {
    let a = v.as_array()?;
    if a.len() != 2 {
        return None;
    }
    Some(Complex64::new(number(&a[0])?, number(&a[1])?))
}

fn number(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn parse_shorthand(line: &str) -> Result<ModelSpec> {
    let mut name = None;
    let mut params = BTreeMap::new();
    let mut offset = line.len() - line.trim_start().len();
    for (i, raw) in line.split(',').enumerate() {
        let col = offset + raw.len() - raw.trim_start().len() + 1;
        offset += raw.len() + 1;
        let tok = raw.trim();
        let perr = |message: String| Error::Parse { line: 1, column: col, message };
        match tok.split_once('=') {
            None if i == 0 && !tok.is_empty() => name = Some(tok.to_string()),
            None => return Err(perr(format!("expected key=value, found {tok:?}"))),
            Some((k, v)) => {
                let (k, v) = (k.trim(), v.trim());
                if k == "model" && i == 0 {
                    name = Some(v.to_string());
                } else {
                    let x: f64 = v.parse().map_err(|_| perr(format!("{k}: {v:?} is not a number")))?;
                    params.insert(k.to_string(), x);
                }
            }
        }
    }
    let name = name.ok_or_else(|| Error::Parse { line: 1, column: 1, message: "missing model name".into() })?;
    builtin(&name, &params).map_err(|e| Error::Parse { line: 1, column: 1, message: e.to_string() })
}

/// Convert a TOML error into a positioned parse error.
pub fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
    Error::Parse { line, column, message: e.message().to_string() }
}

/// 1-based line and column (in characters) of a byte offset.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}
