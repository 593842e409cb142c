//! Exact linear-Gaussian bookkeeping in the Heisenberg picture.
//!
//! Every quadrature is a [`QuadExpr`]: a real linear form over the
//! quadratures of independent basis modes (vacua and single-mode squeezed
//! states) plus a classical mean. Because basis quadratures are mutually
//! uncorrelated, variances and covariances follow directly from the
//! coefficients, with no sampling error.
//!
//! A basis quadrature carries its own squeezing: the `x` quadrature of an
//! x-squeezed basis mode has standard deviation `e^{-r}/2`. [`Basis::vacuum_form`]
//! rewrites an expression over the underlying vacuum quadratures `x^{(0)}`,
//! `p^{(0)}` (so the squeezing factors move into the coefficients), which is
//! the form used for term-level identity checks.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{power_db, VACUUM_VARIANCE};

/// Coefficients with magnitude below this are dropped from a [`QuadExpr`].
pub const COEFF_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisId(pub u32);

impl fmt::Display for BasisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    pub fn conjugate(self) -> Self {
        match self {
            Quadrature::X => Quadrature::P,
            Quadrature::P => Quadrature::X,
        }
    }
}

impl fmt::Display for Quadrature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quadrature::X => "x",
            Quadrature::P => "p",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Vacuum,
    XSqueezed,
    PSqueezed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisMode {
    id: BasisId,
    kind: BasisKind,
    r: f64,
}

impl BasisMode {
    /// A vacuum mode always gets `r = 0`, whatever is passed.
    pub fn new(id: BasisId, kind: BasisKind, r: f64) -> Result<Self> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::invalid(format!(
                "squeezing parameter must be finite and >= 0, got {r}"
            )));
        }
        let r = if kind == BasisKind::Vacuum { 0.0 } else { r };
        Ok(Self { id, kind, r })
    }

    pub fn id(&self) -> BasisId {
        self.id
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Factor relating this mode's quadrature to the vacuum quadrature it was
    /// squeezed from (`e^{-r}` on the squeezed axis, `e^{+r}` on the other).
    pub fn scale(&self, q: Quadrature) -> f64 {
        match (self.kind, q) {
            (BasisKind::Vacuum, _) => 1.0,
            (BasisKind::XSqueezed, Quadrature::X) | (BasisKind::PSqueezed, Quadrature::P) => {
                (-self.r).exp()
            }
            (BasisKind::XSqueezed, Quadrature::P) | (BasisKind::PSqueezed, Quadrature::X) => {
                self.r.exp()
            }
        }
    }

    pub fn sd(&self, q: Quadrature) -> f64 {
        0.5 * self.scale(q)
    }

    pub fn variance(&self, q: Quadrature) -> f64 {
        let s = self.scale(q);
        VACUUM_VARIANCE * s * s
    }
}

/// A quadrature observable as a linear form over basis quadratures.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadExpr {
    terms: BTreeMap<(BasisId, Quadrature), f64>,
    mean: f64,
}

impl QuadExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(mean: f64) -> Self {
        Self {
            terms: BTreeMap::new(),
            mean,
        }
    }

    pub fn basis(id: BasisId, q: Quadrature) -> Self {
        Self::term(id, q, 1.0)
    }

    pub fn term(id: BasisId, q: Quadrature, coeff: f64) -> Self {
        let mut e = Self::zero();
        e.add_term(id, q, coeff);
        e
    }

    pub fn from_terms<I>(terms: I, mean: f64) -> Self
    where
        I: IntoIterator<Item = (BasisId, Quadrature, f64)>,
    {
        let mut e = Self::constant(mean);
        for (id, q, c) in terms {
            e.add_term(id, q, c);
        }
        e
    }

    pub fn add_term(&mut self, id: BasisId, q: Quadrature, coeff: f64) {
        let entry = self.terms.entry((id, q)).or_insert(0.0);
        *entry += coeff;
        if entry.abs() < COEFF_EPSILON {
            self.terms.remove(&(id, q));
        }
    }

    pub fn coeff(&self, id: BasisId, q: Quadrature) -> f64 {
        self.terms.get(&(id, q)).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (BasisId, Quadrature, f64)> + '_ {
        self.terms.iter().map(|(&(id, q), &c)| (id, q, c))
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn set_mean(&mut self, mean: f64) {
        self.mean = mean;
    }

    /// Same fluctuating part, zero mean.
    pub fn centered(&self) -> Self {
        Self {
            terms: self.terms.clone(),
            mean: 0.0,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = Self::constant(self.mean * a);
        for (&(id, q), &c) in &self.terms {
            out.add_term(id, q, c * a);
        }
        out
    }

    /// Largest absolute coefficient difference over the union of terms.
    /// Means are not compared.
    pub fn max_coeff_diff(&self, other: &QuadExpr) -> f64 {
        let mut worst: f64 = 0.0;
        for (&k, &c) in &self.terms {
            worst = worst.max((c - other.terms.get(&k).copied().unwrap_or(0.0)).abs());
        }
        for (&k, &c) in &other.terms {
            if !self.terms.contains_key(&k) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    /// Terms whose coefficients differ by more than `tol`.
    pub fn term_diffs(&self, other: &QuadExpr, tol: f64) -> Vec<TermDiff> {
        let mut keys: Vec<_> = self.terms.keys().chain(other.terms.keys()).copied().collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .filter_map(|(id, q)| {
                let lhs = self.coeff(id, q);
                let rhs = other.coeff(id, q);
                ((lhs - rhs).abs() > tol).then_some(TermDiff {
                    basis: id,
                    quadrature: q,
                    lhs,
                    rhs,
                })
            })
            .collect()
    }

    fn merge(&mut self, other: &QuadExpr, sign: f64) {
        self.mean += sign * other.mean;
        for (&(id, q), &c) in &other.terms {
            self.add_term(id, q, sign * c);
        }
    }
}

impl fmt::Display for QuadExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (id, q, c) in self.terms() {
            if first {
                write!(f, "{c:+.6}·{q}[{id}]")?;
                first = false;
            } else {
                write!(f, " {c:+.6}·{q}[{id}]")?;
            }
        }
        if self.mean != 0.0 || first {
            if first {
                write!(f, "{}", self.mean)?;
            } else {
                write!(f, " {:+}", self.mean)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermDiff {
    pub basis: BasisId,
    pub quadrature: Quadrature,
    pub lhs: f64,
    pub rhs: f64,
}

impl AddAssign<&QuadExpr> for QuadExpr {
    fn add_assign(&mut self, rhs: &QuadExpr) {
        self.merge(rhs, 1.0);
    }
}

impl SubAssign<&QuadExpr> for QuadExpr {
    fn sub_assign(&mut self, rhs: &QuadExpr) {
        self.merge(rhs, -1.0);
    }
}

impl Add<&QuadExpr> for &QuadExpr {
    type Output = QuadExpr;
    fn add(self, rhs: &QuadExpr) -> QuadExpr {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&QuadExpr> for &QuadExpr {
    type Output = QuadExpr;
    fn sub(self, rhs: &QuadExpr) -> QuadExpr {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Add for QuadExpr {
    type Output = QuadExpr;
    fn add(mut self, rhs: QuadExpr) -> QuadExpr {
        self += &rhs;
        self
    }
}

impl Sub for QuadExpr {
    type Output = QuadExpr;
    fn sub(mut self, rhs: QuadExpr) -> QuadExpr {
        self -= &rhs;
        self
    }
}

impl Neg for &QuadExpr {
    type Output = QuadExpr;
    fn neg(self) -> QuadExpr {
        self.scaled(-1.0)
    }
}

impl Neg for QuadExpr {
    type Output = QuadExpr;
    fn neg(self) -> QuadExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for &QuadExpr {
    type Output = QuadExpr;
    fn mul(self, a: f64) -> QuadExpr {
        self.scaled(a)
    }
}

impl Mul<f64> for QuadExpr {
    type Output = QuadExpr;
    fn mul(self, a: f64) -> QuadExpr {
        self.scaled(a)
    }
}

impl Mul<&QuadExpr> for f64 {
    type Output = QuadExpr;
    fn mul(self, e: &QuadExpr) -> QuadExpr {
        e.scaled(self)
    }
}

impl Mul<QuadExpr> for f64 {
    type Output = QuadExpr;
    fn mul(self, e: QuadExpr) -> QuadExpr {
        e.scaled(self)
    }
}

/// Registry of independent basis modes. Ids are dense: `BasisId(k)` is the
/// k-th registered mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    modes: Vec<BasisMode>,
}

impl Basis {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, kind: BasisKind, r: f64) -> Result<BasisId> {
        let id = BasisId(self.modes.len() as u32);
        self.modes.push(BasisMode::new(id, kind, r)?);
        Ok(id)
    }

    pub fn push_vacuum(&mut self) -> BasisId {
        let id = BasisId(self.modes.len() as u32);
        self.modes.push(BasisMode {
            id,
            kind: BasisKind::Vacuum,
            r: 0.0,
        });
        id
    }

    pub fn get(&self, id: BasisId) -> Result<&BasisMode> {
        self.modes.get(id.0 as usize).ok_or(Error::UnknownBasis(id))
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &BasisMode> {
        self.modes.iter()
    }

    /// Copy with every squeezing parameter set to zero.
    pub fn unsqueezed(&self) -> Basis {
        Basis {
            modes: self
                .modes
                .iter()
                .map(|m| BasisMode {
                    r: 0.0,
                    ..*m
                })
                .collect(),
        }
    }

    fn check(&self, e: &QuadExpr) -> Result<()> {
        for (id, _, _) in e.terms() {
            self.get(id)?;
        }
        Ok(())
    }

    /// `sum coeff^2 * Var(basis quadrature)`; the mean does not contribute.
    pub fn variance(&self, e: &QuadExpr) -> Result<f64> {
        e.terms()
            .map(|(id, q, c)| Ok(c * c * self.get(id)?.variance(q)))
            .sum()
    }

    pub fn covariance(&self, a: &QuadExpr, b: &QuadExpr) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let (small, large) = if a.n_terms() <= b.n_terms() { (a, b) } else { (b, a) };
        let mut acc = 0.0;
        for (id, q, c) in small.terms() {
            let d = large.coeff(id, q);
            if d != 0.0 {
                acc += c * d * self.get(id)?.variance(q);
            }
        }
        Ok(acc)
    }

    /// Variance the expression would have if every basis mode were vacuum.
    pub fn snl(&self, e: &QuadExpr) -> Result<f64> {
        self.check(e)?;
        Ok(e.terms().map(|(_, _, c)| c * c).sum::<f64>() * VACUUM_VARIANCE)
    }

    /// `10 log10(variance / snl)`. Meaningful as a shot-noise-referenced
    /// level when `e` is reached from the basis by a passive network; use
    /// [`GaussianState::observable_db`] for combinations of mode quadratures
    /// after squeezers or feedforward.
    pub fn variance_db(&self, e: &QuadExpr) -> Result<f64> {
        let snl = self.snl(e)?;
        if snl <= 0.0 {
            return Err(Error::UndefinedSnl);
        }
        Ok(power_db(self.variance(e)? / snl))
    }

    /// Rewrite over vacuum quadratures: each coefficient absorbs the basis
    /// mode's `e^{-r}` / `e^{+r}` factor.
    pub fn vacuum_form(&self, e: &QuadExpr) -> Result<QuadExpr> {
        let mut out = QuadExpr::constant(e.mean());
        for (id, q, c) in e.terms() {
            out.add_term(id, q, c * self.get(id)?.scale(q));
        }
        Ok(out)
    }

    fn extend_from(&mut self, other: &Basis) -> u32 {
        let offset = self.modes.len() as u32;
        for m in &other.modes {
            self.modes.push(BasisMode {
                id: BasisId(m.id.0 + offset),
                ..*m
            });
        }
        offset
    }
}

/// `(x, p)` of one optical mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeQuads {
    pub x: QuadExpr,
    pub p: QuadExpr,
}

impl ModeQuads {
    pub fn get(&self, q: Quadrature) -> &QuadExpr {
        match q {
            Quadrature::X => &self.x,
            Quadrature::P => &self.p,
        }
    }

    pub fn get_mut(&mut self, q: Quadrature) -> &mut QuadExpr {
        match q {
            Quadrature::X => &mut self.x,
            Quadrature::P => &mut self.p,
        }
    }
}

/// A linear combination of mode quadratures `sum c_i q_i`, as a homodyne
/// setup would measure it. Its shot-noise level is `sum c_i^2 / 4`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observable {
    terms: Vec<(usize, Quadrature, f64)>,
}

impl Observable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn quad(mode: usize, q: Quadrature) -> Self {
        Self::new().plus(mode, q, 1.0)
    }

    /// Quadrature at homodyne angle `theta`: `cos(theta) x + sin(theta) p`.
    pub fn at_angle(mode: usize, theta: f64) -> Self {
        Self::new()
            .plus(mode, Quadrature::X, theta.cos())
            .plus(mode, Quadrature::P, theta.sin())
    }

    pub fn plus(mut self, mode: usize, q: Quadrature, coeff: f64) -> Self {
        self.terms.push((mode, q, coeff));
        self
    }

    pub fn scale(mut self, a: f64) -> Self {
        for t in &mut self.terms {
            t.2 *= a;
        }
        self
    }

    pub fn terms(&self) -> &[(usize, Quadrature, f64)] {
        &self.terms
    }

    pub fn snl(&self) -> f64 {
        // merge repeated (mode, quadrature) entries before squaring
        let mut merged: BTreeMap<(usize, Quadrature), f64> = BTreeMap::new();
        for &(m, q, c) in &self.terms {
            *merged.entry((m, q)).or_insert(0.0) += c;
        }
        merged.values().map(|c| c * c).sum::<f64>() * VACUUM_VARIANCE
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    modes: Vec<ModeQuads>,
    basis: Basis,
}

impl GaussianState {
    /// `n` independent vacua; mode `k` references only basis mode `k`.
    pub fn vacuum(n: usize) -> Self {
        let kinds = vec![(BasisKind::Vacuum, 0.0); n];
        Self::from_basis_modes(&kinds).expect("vacuum basis is always valid")
    }

    /// One mode per basis entry, each mode equal to its basis mode.
    pub fn from_basis_modes(kinds: &[(BasisKind, f64)]) -> Result<Self> {
        let mut basis = Basis::new();
        let mut modes = Vec::with_capacity(kinds.len());
        for &(kind, r) in kinds {
            let id = basis.push(kind, r)?;
            modes.push(ModeQuads {
                x: QuadExpr::basis(id, Quadrature::X),
                p: QuadExpr::basis(id, Quadrature::P),
            });
        }
        Ok(Self { modes, basis })
    }

    pub fn from_parts(modes: Vec<ModeQuads>, basis: Basis) -> Result<Self> {
        let s = Self { modes, basis };
        s.validate()?;
        Ok(s)
    }

    /// Checks that every referenced basis id is registered.
    pub fn validate(&self) -> Result<()> {
        for m in &self.modes {
            self.basis.check(&m.x)?;
            self.basis.check(&m.p)?;
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub(crate) fn basis_mut(&mut self) -> &mut Basis {
        &mut self.basis
    }

    pub fn modes(&self) -> &[ModeQuads] {
        &self.modes
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.modes.len() {
            Ok(())
        } else {
            Err(Error::ModeOutOfRange {
                mode,
                len: self.modes.len(),
            })
        }
    }

    pub fn mode(&self, mode: usize) -> Result<&ModeQuads> {
        self.check_mode(mode)?;
        Ok(&self.modes[mode])
    }

    pub fn mode_mut(&mut self, mode: usize) -> Result<&mut ModeQuads> {
        self.check_mode(mode)?;
        Ok(&mut self.modes[mode])
    }

    pub fn quad(&self, mode: usize, q: Quadrature) -> Result<&QuadExpr> {
        Ok(self.mode(mode)?.get(q))
    }

    /// Tensor product: `other`'s modes are appended after ours and its basis
    /// ids are shifted past ours.
    pub fn join(mut self, other: &GaussianState) -> Self {
        let offset = self.basis.extend_from(&other.basis);
        let shift = |e: &QuadExpr| {
            QuadExpr::from_terms(
                e.terms().map(|(id, q, c)| (BasisId(id.0 + offset), q, c)),
                e.mean(),
            )
        };
        for m in &other.modes {
            self.modes.push(ModeQuads {
                x: shift(&m.x),
                p: shift(&m.p),
            });
        }
        self
    }

    /// Keep only the listed modes (in that order); the basis is kept whole.
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        let modes = keep
            .iter()
            .map(|&k| self.mode(k).cloned())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            modes,
            basis: self.basis.clone(),
        })
    }

    pub fn resolve(&self, obs: &Observable) -> Result<QuadExpr> {
        let mut e = QuadExpr::zero();
        for &(mode, q, c) in obs.terms() {
            e += &self.quad(mode, q)?.scaled(c);
        }
        Ok(e)
    }

    pub fn variance(&self, e: &QuadExpr) -> Result<f64> {
        self.basis.variance(e)
    }

    pub fn observable_variance(&self, obs: &Observable) -> Result<f64> {
        self.basis.variance(&self.resolve(obs)?)
    }

    /// Variance of a mode-quadrature combination relative to its shot-noise
    /// level, in dB.
    pub fn observable_db(&self, obs: &Observable) -> Result<f64> {
        let snl = obs.snl();
        if snl <= 0.0 {
            return Err(Error::UndefinedSnl);
        }
        Ok(power_db(self.observable_variance(obs)? / snl))
    }

    /// Same state with every basis squeezing parameter set to zero.
    pub fn unsqueezed(&self) -> Self {
        Self {
            modes: self.modes.clone(),
            basis: self.basis.unsqueezed(),
        }
    }

    pub fn covariance(&self) -> CovarianceMatrix {
        let quads: Vec<&QuadExpr> = self.modes.iter().flat_map(|m| [&m.x, &m.p]).collect();
        let n = quads.len();
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let c = self
                    .basis
                    .covariance(quads[i], quads[j])
                    .expect("state invariant: basis ids are registered");
                entries[(i, j)] = c;
                entries[(j, i)] = c;
            }
        }
        CovarianceMatrix { entries }
    }

    pub fn means(&self) -> Vec<f64> {
        self.modes
            .iter()
            .flat_map(|m| [m.x.mean(), m.p.mean()])
            .collect()
    }
}

/// Quadrature covariances ordered `(x_1, p_1, ..., x_N, p_N)`, vacuum = 1/4.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn mode_block(&self, mode: usize) -> Matrix2<f64> {
        let i = 2 * mode;
        Matrix2::new(
            self.entries[(i, i)],
            self.entries[(i, i + 1)],
            self.entries[(i + 1, i)],
            self.entries[(i + 1, i + 1)],
        )
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| (self.entries[(i, j)] - self.entries[(j, i)]).abs() <= tol))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `det` of every single-mode block is at least `1/16` (within `tol`).
    pub fn satisfies_uncertainty(&self, tol: f64) -> bool {
        (0..self.dim() / 2).all(|k| self.mode_block(k).determinant() >= 1.0 / 16.0 - tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn squeezed_p_state(db: f64) -> GaussianState {
        GaussianState::from_basis_modes(&[(
            BasisKind::PSqueezed,
            crate::units::r_from_squeezing_db(db),
        )])
        .unwrap()
    }

    #[test]
    fn fresh_vacuum_references_its_own_basis_mode() {
        let s = GaussianState::vacuum(3);
        for k in 0..3 {
            let m = s.mode(k).unwrap();
            assert_eq!(m.x, QuadExpr::basis(BasisId(k as u32), Quadrature::X));
            assert_eq!(m.p, QuadExpr::basis(BasisId(k as u32), Quadrature::P));
            assert_eq!(m.x.mean(), 0.0);
        }
    }

    #[test]
    fn vacuum_variance_is_a_quarter() {
        let s = GaussianState::vacuum(1);
        assert_eq!(s.variance(&s.mode(0).unwrap().x).unwrap(), 0.25);
        assert_abs_diff_eq!(s.basis().variance_db(&s.mode(0).unwrap().x).unwrap(), 0.0);
    }

    #[test]
    fn p_squeezed_minus_four_db() {
        let s = squeezed_p_state(-4.0);
        let v = s.variance(&s.mode(0).unwrap().p).unwrap();
        // 10^{-0.4} / 4
        assert_abs_diff_eq!(v, 0.398_107_170_553_497_3 / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.0995, epsilon = 1e-4);
    }

    #[test]
    fn balanced_difference_of_vacua_stays_at_snl() {
        let s = GaussianState::vacuum(2);
        let e = (&s.mode(0).unwrap().x - &s.mode(1).unwrap().x) * std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(s.variance(&e).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn snl_counts_vacuum_units() {
        let s = GaussianState::vacuum(3);
        let q = |k: usize, q: Quadrature| s.quad(k, q).unwrap().clone();
        let a = q(0, Quadrature::P) - q(1, Quadrature::X);
        assert_eq!(s.basis().snl(&a).unwrap(), 0.5);
        let b = q(1, Quadrature::P) - q(0, Quadrature::X) - q(2, Quadrature::X);
        assert_eq!(s.basis().snl(&b).unwrap(), 0.75);
        let g = 0.98;
        let c = q(0, Quadrature::P) * g - q(1, Quadrature::X);
        assert_abs_diff_eq!(s.basis().snl(&c).unwrap(), 0.4901, epsilon = 1e-15);
    }

    #[test]
    fn constant_expression_has_no_snl() {
        let b = Basis::new();
        assert_eq!(b.variance_db(&QuadExpr::constant(3.0)), Err(Error::UndefinedSnl));
    }

    #[test]
    fn unknown_basis_is_an_error() {
        let b = Basis::new();
        let e = QuadExpr::basis(BasisId(7), Quadrature::X);
        assert_eq!(b.variance(&e), Err(Error::UnknownBasis(BasisId(7))));
        assert_eq!(b.snl(&e), Err(Error::UnknownBasis(BasisId(7))));
    }

    #[test]
    fn vacuum_kind_forces_zero_r() {
        let m = BasisMode::new(BasisId(0), BasisKind::Vacuum, 3.0).unwrap();
        assert_eq!(m.r(), 0.0);
        assert!(BasisMode::new(BasisId(0), BasisKind::XSqueezed, -1.0).is_err());
    }

    #[test]
    fn squeezed_sds_follow_kind() {
        let r = 0.7;
        let x = BasisMode::new(BasisId(0), BasisKind::XSqueezed, r).unwrap();
        let p = BasisMode::new(BasisId(1), BasisKind::PSqueezed, r).unwrap();
        assert_abs_diff_eq!(x.sd(Quadrature::X), (-r).exp() / 2.0);
        assert_abs_diff_eq!(x.sd(Quadrature::P), r.exp() / 2.0);
        assert_abs_diff_eq!(p.sd(Quadrature::X), r.exp() / 2.0);
        assert_abs_diff_eq!(p.sd(Quadrature::P), (-r).exp() / 2.0);
    }

    #[test]
    fn canonical_form_drops_cancelled_terms() {
        let a = QuadExpr::basis(BasisId(0), Quadrature::X);
        let z = &a - &a;
        assert!(z.is_constant());
        assert_eq!(z.n_terms(), 0);
    }

    #[test]
    fn join_shifts_basis_ids() {
        let a = squeezed_p_state(-3.0);
        let b = GaussianState::vacuum(2);
        let s = a.join(&b);
        assert_eq!(s.n_modes(), 3);
        assert_eq!(s.basis().len(), 3);
        assert_eq!(s.mode(2).unwrap().x, QuadExpr::basis(BasisId(2), Quadrature::X));
        assert_eq!(s.basis().get(BasisId(0)).unwrap().kind(), BasisKind::PSqueezed);
        s.validate().unwrap();
    }

    #[test]
    fn vacuum_form_moves_squeezing_into_coefficients() {
        let s = squeezed_p_state(-6.0);
        let r = crate::units::r_from_squeezing_db(-6.0);
        let v = s.basis().vacuum_form(&s.mode(0).unwrap().p).unwrap();
        assert_abs_diff_eq!(v.coeff(BasisId(0), Quadrature::P), (-r).exp(), epsilon = 1e-15);
    }

    #[test]
    fn one_mode_vacuum_covariance() {
        let c = GaussianState::vacuum(1).covariance();
        assert_eq!(c.dim(), 2);
        assert_eq!(c.mode_block(0), Matrix2::new(0.25, 0.0, 0.0, 0.25));
        assert!(c.satisfies_uncertainty(1e-15));
    }

    #[test]
    fn observable_snl_merges_repeated_terms() {
        let o = Observable::new()
            .plus(0, Quadrature::X, 1.0)
            .plus(0, Quadrature::X, 1.0);
        assert_eq!(o.snl(), 1.0);
    }

    fn arb_expr(n_basis: u32) -> impl Strategy<Value = QuadExpr> {
        prop::collection::vec(
            (0..n_basis, prop::bool::ANY, -3.0f64..3.0),
            0..8,
        )
        .prop_map(|v| {
            QuadExpr::from_terms(
                v.into_iter().map(|(id, px, c)| {
                    (BasisId(id), if px { Quadrature::P } else { Quadrature::X }, c)
                }),
                0.0,
            )
        })
    }

    fn arb_basis() -> impl Strategy<Value = Basis> {
        prop::collection::vec((0u8..3, 0.0f64..1.5), 6).prop_map(|v| {
            let mut b = Basis::new();
            for (k, r) in v {
                let kind = match k {
                    0 => BasisKind::Vacuum,
                    1 => BasisKind::XSqueezed,
                    _ => BasisKind::PSqueezed,
                };
                b.push(kind, r).unwrap();
            }
            b
        })
    }

    proptest! {
        #[test]
        fn variance_scales_quadratically(basis in arb_basis(), e in arb_expr(6), a in -5.0f64..5.0) {
            let v = basis.variance(&e).unwrap();
            let va = basis.variance(&e.scaled(a)).unwrap();
            prop_assert!((va - a * a * v).abs() <= 1e-9 * (1.0 + va.abs()));
        }

        #[test]
        fn disjoint_expressions_add_variances(basis in arb_basis(), e1 in arb_expr(3), e2 in arb_expr(3)) {
            // shift e2 onto basis ids 3..6 so the supports are disjoint
            let e2 = QuadExpr::from_terms(e2.terms().map(|(id, q, c)| (BasisId(id.0 + 3), q, c)), 0.0);
            let lhs = basis.variance(&(&e1 + &e2)).unwrap();
            let rhs = basis.variance(&e1).unwrap() + basis.variance(&e2).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs));
        }

        #[test]
        fn snl_is_variance_without_squeezing(basis in arb_basis(), e in arb_expr(6)) {
            let snl = basis.snl(&e).unwrap();
            let v0 = basis.unsqueezed().variance(&e).unwrap();
            prop_assert!((snl - v0).abs() <= 1e-12 * (1.0 + snl));
        }

        #[test]
        fn addition_commutes(e1 in arb_expr(6), e2 in arb_expr(6)) {
            prop_assert!((&e1 + &e2).max_coeff_diff(&(&e2 + &e1)) == 0.0);
        }
    }
}
