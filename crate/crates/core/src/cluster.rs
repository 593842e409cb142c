//! Six-mode linear cluster: the generating unitary `U6`, its beam-splitter
//! network, nullifiers and the pairwise inseparability test.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{BasisId, BasisKind, GaussianState, Observable, QuadExpr, Quadrature};
use crate::optics::{BeamSplitterSpec, BsSign, SymplecticOp};
use crate::units::VACUUM_VARIANCE;

pub const CLUSTER_MODES: usize = 6;

/// Undirected graph over `n` modes; nullifier `a` is `p_a - Σ_{b∈N(a)} x_b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl ClusterGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return Err(Error::invalid(format!("self-loop on vertex {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::ModeOutOfRange { mode: a.max(b), len: n });
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self { n, edges: set })
    }

    /// Chain `0 - 1 - ... - (n-1)`.
    pub fn linear_chain(n: usize) -> Self {
        Self {
            n,
            edges: (1..n).map(|k| (k - 1, k)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, a: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(u, v)| match (u == a, v == a) {
                (true, _) => Some(v),
                (_, true) => Some(u),
                _ => None,
            })
            .collect()
    }

    pub fn nullifier_observable(&self, a: usize) -> Observable {
        self.neighbors(a)
            .into_iter()
            .fold(Observable::quad(a, Quadrature::P), |o, b| {
                o.plus(b, Quadrature::X, -1.0)
            })
    }
}

/// Complex mode-amplitude transformation `b = U a`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    entries: DMatrix<Complex64>,
}

impl UnitaryMatrix {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        let u = Self { entries };
        if u.entries.nrows() != u.entries.ncols() {
            return Err(Error::invalid("unitary must be square"));
        }
        if u.unitarity_error() > Self::TOLERANCE {
            return Err(Error::invalid(format!(
                "matrix is not unitary (max |UU† - I| = {:.3e})",
                u.unitarity_error()
            )));
        }
        Ok(u)
    }

    pub(crate) fn unchecked(entries: DMatrix<Complex64>) -> Self {
        Self { entries }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// 1-based entry, as matrices are usually quoted.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[(row - 1, col - 1)]
    }

    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim();
        let prod = &self.entries * self.entries.adjoint();
        (prod - DMatrix::<Complex64>::identity(n, n))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_diff(&self, other: &UnitaryMatrix) -> f64 {
        (&self.entries - &other.entries)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Real quadrature map in interleaved `(x_1, p_1, ...)` ordering:
    /// `x' = Re U x - Im U p`, `p' = Im U x + Re U p`.
    pub fn real_lift(&self) -> SymplecticOp {
        let n = self.dim();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.entries[(i, j)];
                m[(2 * i, 2 * j)] = z.re;
                m[(2 * i, 2 * j + 1)] = -z.im;
                m[(2 * i + 1, 2 * j)] = z.im;
                m[(2 * i + 1, 2 * j + 1)] = z.re;
            }
        }
        SymplecticOp::from_matrix(m).expect("lift of a square matrix is square and even")
    }
}

/// The six-mode linear-cluster generating unitary.
pub fn u6_matrix() -> UnitaryMatrix {
    let s = f64::sqrt;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let r = |re: f64| c(re, 0.0);
    let i = |im: f64| c(0.0, im);
    let z = r(0.0);
    #[rustfmt::skip]
    let rows = [
        [i(1.0 / s(2.0)), i(1.0 / s(3.0)), r(-s(2.0 / 39.0)), r(-s(3.0 / 26.0)), z, z],
        [r(-1.0 / s(2.0)), r(1.0 / s(3.0)), i(s(2.0 / 39.0)), i(s(3.0 / 26.0)), z, z],
        [z, i(1.0 / s(3.0)), r(2.0 * s(2.0 / 39.0)), r(s(6.0 / 13.0)), z, z],
        [z, z, i(-s(6.0 / 13.0)), i(2.0 * s(2.0 / 39.0)), r(-1.0 / s(3.0)), z],
        [z, z, r(s(3.0 / 26.0)), r(-s(2.0 / 39.0)), i(1.0 / s(3.0)), i(-1.0 / s(2.0))],
        [z, z, i(s(3.0 / 26.0)), i(-s(2.0 / 39.0)), r(-1.0 / s(3.0)), r(-1.0 / s(2.0))],
    ];
    let entries = DMatrix::from_fn(6, 6, |a, b| rows[a][b]);
    UnitaryMatrix::new(entries).expect("U6 is unitary")
}

/// Elementary optical element of the cluster network. Mode indices are
/// 0-based; `Display` uses 1-based labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementaryOp {
    /// `a_k -> i a_k`.
    Fourier(usize),
    /// `a_k -> -a_k`.
    PhaseFlip(usize),
    BeamSplitter(BeamSplitterSpec),
}

impl ElementaryOp {
    pub fn amplitude_matrix(&self, n: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::<Complex64>::identity(n, n);
        match *self {
            ElementaryOp::Fourier(k) => m[(k, k)] = Complex64::i(),
            ElementaryOp::PhaseFlip(k) => m[(k, k)] = Complex64::new(-1.0, 0.0),
            ElementaryOp::BeamSplitter(spec) => {
                let (k, l) = spec.modes();
                let b = spec.matrix();
                m[(k, k)] = b[(0, 0)].into();
                m[(k, l)] = b[(0, 1)].into();
                m[(l, k)] = b[(1, 0)].into();
                m[(l, l)] = b[(1, 1)].into();
            }
        }
        m
    }

    pub fn apply(&self, state: &mut GaussianState, offset: usize) -> Result<()> {
        match *self {
            ElementaryOp::Fourier(k) => state.rotate(offset + k, FRAC_PI_2),
            ElementaryOp::PhaseFlip(k) => state.rotate(offset + k, PI),
            ElementaryOp::BeamSplitter(spec) => {
                let (k, l) = spec.modes();
                let shifted =
                    BeamSplitterSpec::new(spec.transmission(), spec.sign(), offset + k, offset + l)?;
                state.beam_splitter(&shifted)
            }
        }
    }

    /// Acts on one shot of sampled quadratures.
    pub fn apply_to_samples(&self, x: &mut [f64], p: &mut [f64]) {
        match *self {
            ElementaryOp::Fourier(k) => {
                let (xk, pk) = (x[k], p[k]);
                x[k] = -pk;
                p[k] = xk;
            }
            ElementaryOp::PhaseFlip(k) => {
                x[k] = -x[k];
                p[k] = -p[k];
            }
            ElementaryOp::BeamSplitter(spec) => {
                let (k, l) = spec.modes();
                let b = spec.matrix();
                for v in [x, p] {
                    let (a, c) = (v[k], v[l]);
                    v[k] = b[(0, 0)] * a + b[(0, 1)] * c;
                    v[l] = b[(1, 0)] * a + b[(1, 1)] * c;
                }
            }
        }
    }
}

impl fmt::Display for ElementaryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementaryOp::Fourier(k) => write!(f, "F{}", k + 1),
            ElementaryOp::PhaseFlip(k) => write!(f, "I{}(-1)", k + 1),
            ElementaryOp::BeamSplitter(spec) => {
                let (k, l) = spec.modes();
                let sign = match spec.sign() {
                    BsSign::Plus => '+',
                    BsSign::Minus => '-',
                };
                write!(f, "B{sign}{}{}({})", k + 1, l + 1, fraction(spec.transmission()))
            }
        }
    }
}

fn fraction(t: f64) -> String {
    for den in 1..=64u32 {
        let num = (t * den as f64).round();
        if (num / den as f64 - t).abs() < 1e-12 {
            return if den == 1 {
                format!("{num}")
            } else {
                format!("{num}/{den}")
            };
        }
    }
    format!("{t}")
}

/// Splitting ratios of the network, first applied first.
pub const NETWORK_TRANSMISSIONS: [f64; 5] = [4.0 / 13.0, 2.0 / 3.0, 2.0 / 3.0, 0.5, 0.5];

fn bs(t: f64, sign: BsSign, k: usize, l: usize) -> ElementaryOp {
    ElementaryOp::BeamSplitter(BeamSplitterSpec::new(t, sign, k - 1, l - 1).expect("static spec"))
}

/// The network realising `U6`, in application order (first element acts
/// first). Indices in the constructors below are 1-based.
pub fn u6_decomposition() -> Vec<ElementaryOp> {
    use ElementaryOp::{Fourier as F, PhaseFlip as I};
    let [t1, t2, t3, t4, t5] = NETWORK_TRANSMISSIONS;
    vec![
        I(5),
        bs(t1, BsSign::Minus, 3, 4),
        F(2),
        bs(t2, BsSign::Plus, 2, 3),
        F(4),
        bs(t3, BsSign::Plus, 4, 5),
        bs(t4, BsSign::Plus, 1, 2),
        F(4),
        bs(t5, BsSign::Plus, 5, 6),
        I(5),
        F(4),
        F(3),
        F(2),
        I(1),
        F(0),
    ]
}

/// Product `op_last ⋯ op_first`.
pub fn compose(ops: &[ElementaryOp], n: usize) -> UnitaryMatrix {
    let m = ops
        .iter()
        .fold(DMatrix::<Complex64>::identity(n, n), |acc, op| {
            op.amplitude_matrix(n) * acc
        });
    UnitaryMatrix::unchecked(m)
}

/// Deviation of the product read with `√(1-T)` on the splitter diagonals and
/// without the input-side phase flip.
pub fn literal_decomposition_error() -> f64 {
    let ops: Vec<ElementaryOp> = u6_decomposition()
        .into_iter()
        .skip(1)
        .map(|op| match op {
            ElementaryOp::BeamSplitter(spec) => ElementaryOp::BeamSplitter(spec.complementary()),
            other => other,
        })
        .collect();
    compose(&ops, CLUSTER_MODES).max_diff(&u6_matrix())
}

/// Squeezing parameters of the three NOPAs; NOPA `k` supplies the x-squeezed
/// `a_{2k-1}` and the p-squeezed `a_{2k}`.
pub fn input_modes(r: [f64; 3]) -> Result<GaussianState> {
    let mut kinds = Vec::with_capacity(CLUSTER_MODES);
    for rk in r {
        if !(rk >= 0.0 && rk.is_finite()) {
            return Err(Error::invalid(format!("squeezing parameter must be finite and >= 0, got {rk}")));
        }
        kinds.push((BasisKind::XSqueezed, rk));
        kinds.push((BasisKind::PSqueezed, rk));
    }
    GaussianState::from_basis_modes(&kinds)
}

/// Cluster from three identical NOPAs, via the real lift of `U6`.
pub fn prepare_cluster(r: f64) -> Result<GaussianState> {
    prepare_cluster_per_nopa([r; 3])
}

pub fn prepare_cluster_per_nopa(r: [f64; 3]) -> Result<GaussianState> {
    let mut s = input_modes(r)?;
    s.apply(&[0, 1, 2, 3, 4, 5], &u6_matrix().real_lift())?;
    Ok(s)
}

/// Same state, built element by element through the network.
pub fn prepare_cluster_via_network(r: f64) -> Result<GaussianState> {
    let mut s = input_modes([r; 3])?;
    for op in u6_decomposition() {
        op.apply(&mut s, 0)?;
    }
    Ok(s)
}

pub fn nullifiers(s: &GaussianState, g: &ClusterGraph) -> Result<Vec<QuadExpr>> {
    if s.n_modes() != g.n() {
        return Err(Error::SizeMismatch {
            expected: g.n(),
            found: s.n_modes(),
        });
    }
    (0..g.n())
        .map(|a| s.resolve(&g.nullifier_observable(a)))
        .collect()
}

/// Closed-form excess-noise terms of the six-mode chain, written over the
/// unsqueezed input quadratures `x^(0), p^(0)` of basis modes `0..6`.
pub fn reference_nullifiers(r: f64) -> Vec<QuadExpr> {
    let e = (-r).exp();
    let s = f64::sqrt;
    let x = |k: u32, c: f64| (BasisId(k), Quadrature::X, c * e);
    let p = |k: u32, c: f64| (BasisId(k), Quadrature::P, c * e);
    vec![
        QuadExpr::from_terms([x(0, s(2.0))], 0.0),
        QuadExpr::from_terms([p(1, s(3.0))], 0.0),
        QuadExpr::from_terms([x(0, 1.0 / s(2.0)), p(3, s(13.0 / 6.0)), x(4, 1.0 / s(3.0))], 0.0),
        QuadExpr::from_terms([p(1, 1.0 / s(3.0)), x(2, -s(13.0 / 6.0)), p(5, 1.0 / s(2.0))], 0.0),
        QuadExpr::from_terms([x(4, s(3.0))], 0.0),
        QuadExpr::from_terms([p(5, s(2.0))], 0.0),
    ]
}

/// Compares expressions term by term, allowing each input basis mode `a_k`
/// to enter with an overall sign `s_k` (a squeezed vacuum is invariant under
/// `a_k -> -a_k`). Returns the signs if every coefficient then agrees within
/// `tol`; basis modes that never appear keep `+1`.
pub fn match_up_to_input_signs(
    got: &[QuadExpr],
    reference: &[QuadExpr],
    n_basis: usize,
    tol: f64,
) -> Option<Vec<f64>> {
    if got.len() != reference.len() {
        return None;
    }
    let mut signs: Vec<Option<f64>> = vec![None; n_basis];
    for (g, r) in got.iter().zip(reference) {
        for (id, q, c) in r.terms() {
            let k = id.0 as usize;
            if k >= n_basis {
                return None;
            }
            let gc = g.coeff(id, q);
            if signs[k].is_none() && gc.abs() > tol {
                signs[k] = Some(if gc * c >= 0.0 { 1.0 } else { -1.0 });
            }
        }
    }
    let signs: Vec<f64> = signs.into_iter().map(|s| s.unwrap_or(1.0)).collect();
    let flip = |e: &QuadExpr| {
        QuadExpr::from_terms(
            e.terms().map(|(id, q, c)| (id, q, c * signs.get(id.0 as usize).copied().unwrap_or(1.0))),
            e.mean(),
        )
    };
    got.iter()
        .zip(reference)
        .all(|(g, r)| flip(r).term_diffs(g, tol).is_empty())
        .then_some(signs)
}

/// Nullifier variances of a six-mode chain relative to their shot-noise
/// levels, in dB.
pub fn nullifier_variances_db(s: &GaussianState) -> Result<Vec<f64>> {
    let g = ClusterGraph::linear_chain(s.n_modes());
    (0..g.n())
        .map(|a| s.observable_db(&g.nullifier_observable(a)))
        .collect()
}

pub fn nullifier_variances(s: &GaussianState) -> Result<Vec<f64>> {
    let g = ClusterGraph::linear_chain(s.n_modes());
    (0..g.n())
        .map(|a| s.observable_variance(&g.nullifier_observable(a)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VlfReport {
    /// `Var δ_a + Var δ_{a+1}` in units where vacuum variance is 1/4.
    pub values: Vec<f64>,
    pub bound: f64,
    pub passes: Vec<bool>,
}

impl VlfReport {
    pub fn all_pass(&self) -> bool {
        self.passes.iter().all(|&p| p)
    }
}

/// Sufficient multipartite-inseparability test for the chain: every
/// neighbouring pair of nullifier variances must sum below 1.
pub fn vlf_inseparability(s: &GaussianState) -> Result<VlfReport> {
    let v = nullifier_variances(s)?;
    if v.len() < 2 {
        return Err(Error::Degenerate("need at least two modes".into()));
    }
    let bound = 4.0 * VACUUM_VARIANCE;
    let values: Vec<f64> = v.windows(2).map(|w| w[0] + w[1]).collect();
    let passes = values.iter().map(|&x| x < bound).collect();
    Ok(VlfReport {
        values,
        bound,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::r_from_squeezing_db;
    use approx::assert_abs_diff_eq;

    #[test]
    fn u6_entries() {
        let u = u6_matrix();
        assert_abs_diff_eq!(u.entry(1, 1).im, 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(u.entry(1, 1).re, 0.0);
        assert_abs_diff_eq!(u.entry(3, 4).re, (6.0f64 / 13.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(u.entry(1, 4).re, -(3.0f64 / 26.0).sqrt(), epsilon = 1e-15);
        assert!(u.unitarity_error() < 1e-12);
    }

    #[test]
    fn decomposition_reproduces_u6() {
        let err = compose(&u6_decomposition(), 6).max_diff(&u6_matrix());
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn decomposition_transmissions() {
        let ts: Vec<f64> = u6_decomposition()
            .iter()
            .filter_map(|op| match op {
                ElementaryOp::BeamSplitter(s) => Some(s.transmission()),
                _ => None,
            })
            .collect();
        assert_eq!(ts, NETWORK_TRANSMISSIONS.to_vec());
    }

    #[test]
    fn dropping_last_fourier_breaks_equality() {
        let mut ops = u6_decomposition();
        assert_eq!(ops.pop(), Some(ElementaryOp::Fourier(0)));
        assert!(compose(&ops, 6).max_diff(&u6_matrix()) > 0.1);
    }

    #[test]
    fn literal_reading_does_not_match() {
        assert_abs_diff_eq!(literal_decomposition_error(), 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn op_labels() {
        let labels: Vec<String> = u6_decomposition().iter().map(|o| o.to_string()).collect();
        assert_eq!(labels[1], "B-34(4/13)");
        assert_eq!(labels[8], "B+56(1/2)");
        assert_eq!(labels.last().unwrap(), "F1");
        assert_eq!(labels[13], "I2(-1)");
    }

    #[test]
    fn lift_and_network_agree() {
        let r = 0.7;
        let a = prepare_cluster(r).unwrap();
        let b = prepare_cluster_via_network(r).unwrap();
        for k in 0..6 {
            for q in [Quadrature::X, Quadrature::P] {
                let d = a.quad(k, q).unwrap().max_coeff_diff(b.quad(k, q).unwrap());
                assert!(d < 1e-12, "mode {k} {q}: {d}");
            }
        }
    }

    #[test]
    fn lift_is_symplectic() {
        assert!(u6_matrix().real_lift().symplectic_error() < 1e-10);
    }

    #[test]
    fn nullifiers_match_closed_forms() {
        let r = r_from_squeezing_db(-4.0);
        let s = prepare_cluster(r).unwrap();
        let g = ClusterGraph::linear_chain(6);
        let got: Vec<QuadExpr> = nullifiers(&s, &g)
            .unwrap()
            .iter()
            .map(|d| s.basis().vacuum_form(d).unwrap())
            .collect();
        let signs = match_up_to_input_signs(&got, &reference_nullifiers(r), 6, 1e-10).unwrap();
        // only the sixth input enters with the opposite sign
        assert_eq!(signs, vec![1.0, 1.0, 1.0, 1.0, 1.0, -1.0]);
        for a in [0, 1, 2, 4] {
            assert!(got[a].term_diffs(&reference_nullifiers(r)[a], 1e-10).is_empty());
        }
    }

    #[test]
    fn sign_matching_rejects_real_differences() {
        let r = 0.4;
        let mut refs = reference_nullifiers(r);
        let got = refs.clone();
        assert_eq!(match_up_to_input_signs(&got, &refs, 6, 1e-10), Some(vec![1.0; 6]));
        // flipping one occurrence of a shared basis mode cannot be absorbed
        refs[2] = QuadExpr::from_terms(
            refs[2].terms().map(|(id, q, c)| if id == BasisId(0) { (id, q, -c) } else { (id, q, c) }),
            0.0,
        );
        assert_eq!(match_up_to_input_signs(&got, &refs, 6, 1e-10), None);
    }

    #[test]
    fn delta_one_and_three_share_x1() {
        let s = prepare_cluster(0.5).unwrap();
        let d = nullifiers(&s, &ClusterGraph::linear_chain(6)).unwrap();
        assert!(d[0].coeff(BasisId(0), Quadrature::X) != 0.0);
        assert!(d[2].coeff(BasisId(0), Quadrature::X) != 0.0);
    }

    #[test]
    fn nullifier_chain_labels() {
        let g = ClusterGraph::linear_chain(6);
        assert_eq!(g.nullifier_observable(0).terms(), &[(0, Quadrature::P, 1.0), (1, Quadrature::X, -1.0)]);
        assert_eq!(
            g.nullifier_observable(2).terms(),
            &[(2, Quadrature::P, 1.0), (1, Quadrature::X, -1.0), (3, Quadrature::X, -1.0)]
        );
    }

    #[test]
    fn minus_four_db_cluster() {
        let s = prepare_cluster(r_from_squeezing_db(-4.0)).unwrap();
        for db in nullifier_variances_db(&s).unwrap() {
            assert_abs_diff_eq!(db, -4.0, epsilon = 1e-9);
        }
        let vlf = vlf_inseparability(&s).unwrap();
        let want = [0.497, 0.597, 0.597, 0.597, 0.497];
        for (v, w) in vlf.values.iter().zip(want) {
            assert_abs_diff_eq!(*v, w, epsilon = 1e-3);
        }
        assert!(vlf.all_pass());
    }

    #[test]
    fn unsqueezed_cluster_fails_vlf() {
        let s = prepare_cluster(0.0).unwrap();
        for db in nullifier_variances_db(&s).unwrap() {
            assert_abs_diff_eq!(db, 0.0, epsilon = 1e-12);
        }
        let vlf = vlf_inseparability(&s).unwrap();
        let want = [1.25, 1.5, 1.5, 1.5, 1.25];
        for (v, w) in vlf.values.iter().zip(want) {
            assert_abs_diff_eq!(*v, w, epsilon = 1e-12);
        }
        assert!(vlf.passes.iter().all(|p| !p));
    }

    #[test]
    fn vacuum_nullifiers_at_snl() {
        let s = GaussianState::vacuum(6);
        for db in nullifier_variances_db(&s).unwrap() {
            assert_abs_diff_eq!(db, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn large_squeezing_kills_nullifiers() {
        let s = prepare_cluster(10.0).unwrap();
        for v in nullifier_variances(&s).unwrap() {
            assert!(v < 1e-7);
        }
    }

    #[test]
    fn nullifiers_need_matching_size() {
        let s = GaussianState::vacuum(4);
        assert_eq!(
            nullifiers(&s, &ClusterGraph::linear_chain(6)),
            Err(Error::SizeMismatch { expected: 6, found: 4 })
        );
    }

    #[test]
    fn graph_validation() {
        assert!(ClusterGraph::new(3, &[(1, 1)]).is_err());
        assert!(ClusterGraph::new(3, &[(0, 3)]).is_err());
        let g = ClusterGraph::new(3, &[(1, 0), (0, 1), (2, 1)]).unwrap();
        assert_eq!(g, ClusterGraph::linear_chain(3));
        assert_eq!(g.neighbors(1), vec![0, 2]);
    }

    #[test]
    fn sample_action_matches_amplitude_matrix() {
        let x0 = [0.3, -1.1, 0.4, 0.9, -0.2, 0.5];
        let p0 = [1.0, 0.1, -0.7, 0.2, 0.6, -0.3];
        let (mut x, mut p) = (x0, p0);
        for op in u6_decomposition() {
            op.apply_to_samples(&mut x, &mut p);
        }
        let u = u6_matrix();
        for k in 0..6 {
            let z: Complex64 = (0..6)
                .map(|j| u.entries()[(k, j)] * Complex64::new(x0[j], p0[j]))
                .sum();
            assert_abs_diff_eq!(z.re, x[k], epsilon = 1e-12);
            assert_abs_diff_eq!(z.im, p[k], epsilon = 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn nullifier_ratio_is_exp_minus_2r(r in 0.0f64..3.0) {
                let s = prepare_cluster(r).unwrap();
                let want = crate::units::power_db((-2.0 * r).exp());
                for db in nullifier_variances_db(&s).unwrap() {
                    prop_assert!((db - want).abs() < 1e-8);
                }
            }

            #[test]
            fn nullifiers_shrink_with_r(r in 0.0f64..3.0, dr in 0.01f64..1.0) {
                let a = nullifier_variances(&prepare_cluster(r).unwrap()).unwrap();
                let b = nullifier_variances(&prepare_cluster(r + dr).unwrap()).unwrap();
                for (va, vb) in a.iter().zip(&b) {
                    prop_assert!(vb < va);
                }
            }

            #[test]
            fn per_nopa_equal_levels_match(r in 0.0f64..2.0) {
                let a = prepare_cluster(r).unwrap();
                let b = prepare_cluster_per_nopa([r; 3]).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
