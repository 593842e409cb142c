//! Elementary Gaussian operations acting in place on a [`GaussianState`].
//!
//! Lossless operations are real linear maps on the quadratures of the modes
//! they touch ([`SymplecticOp`]); the same matrix is used to update the state
//! and to check the symplectic condition `Mᵀ Ω M = Ω`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, ModeQuads, QuadExpr, Quadrature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BsSign {
    Plus,
    Minus,
}

impl BsSign {
    fn value(self) -> f64 {
        match self {
            BsSign::Plus => 1.0,
            BsSign::Minus => -1.0,
        }
    }
}

/// A real beam splitter `B^±_{kl}(T)` between modes `k` and `l`:
///
/// ```text
/// a_k' =    √T a_k + √(1-T) a_l
/// a_l' = ± √(1-T) a_k ∓ √T a_l
/// ```
///
/// `T` is the power fraction that stays in port `k`. The same 2×2 map acts on
/// the x-pair and on the p-pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitterSpec {
    transmission: f64,
    sign: BsSign,
    modes: (usize, usize),
}

impl BeamSplitterSpec {
    pub fn new(transmission: f64, sign: BsSign, k: usize, l: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&transmission) {
            return Err(Error::invalid(format!(
                "beam splitter transmission must lie in [0, 1], got {transmission}"
            )));
        }
        if k == l {
            return Err(Error::SameMode(k));
        }
        Ok(Self {
            transmission,
            sign,
            modes: (k, l),
        })
    }

    pub fn transmission(&self) -> f64 {
        self.transmission
    }

    pub fn sign(&self) -> BsSign {
        self.sign
    }

    pub fn modes(&self) -> (usize, usize) {
        self.modes
    }

    /// The same splitter with `T` replaced by `1 - T`.
    pub fn complementary(&self) -> Self {
        Self {
            transmission: 1.0 - self.transmission,
            ..*self
        }
    }

    /// 2×2 mode map on `(a_k, a_l)`.
    pub fn matrix(&self) -> Matrix2<f64> {
        let t = self.transmission.sqrt();
        let r = (1.0 - self.transmission).sqrt();
        let s = self.sign.value();
        Matrix2::new(t, r, s * r, -s * t)
    }
}

/// Real linear map on `(x_1, p_1, ..., x_n, p_n)` of the modes it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticOp {
    matrix: DMatrix<f64>,
}

impl SymplecticOp {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() % 2 != 0 {
            return Err(Error::invalid("symplectic op needs a square even-dimensional matrix"));
        }
        Ok(Self { matrix })
    }

    pub fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self {
            matrix: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
        }
    }

    pub fn squeeze(r_s: f64) -> Self {
        Self {
            matrix: DMatrix::from_row_slice(2, 2, &[r_s.exp(), 0.0, 0.0, (-r_s).exp()]),
        }
    }

    pub fn beam_splitter(spec: &BeamSplitterSpec) -> Self {
        let b = spec.matrix();
        let mut m = DMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                m[(2 * i, 2 * j)] = b[(i, j)];
                m[(2 * i + 1, 2 * j + 1)] = b[(i, j)];
            }
        }
        Self { matrix: m }
    }

    /// `exp(2i x_j x_k)`: `p_j += x_k`, `p_k += x_j`.
    pub fn cz() -> Self {
        Self {
            matrix: DMatrix::from_row_slice(
                4,
                4,
                &[
                    1.0, 0.0, 0.0, 0.0, //
                    0.0, 1.0, 1.0, 0.0, //
                    0.0, 0.0, 1.0, 0.0, //
                    1.0, 0.0, 0.0, 1.0,
                ],
            ),
        }
    }

    pub fn cz_inverse() -> Self {
        let mut op = Self::cz();
        op.matrix[(1, 2)] = -1.0;
        op.matrix[(3, 0)] = -1.0;
        op
    }

    pub fn n_modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn compose(&self, first: &SymplecticOp) -> SymplecticOp {
        SymplecticOp {
            matrix: &self.matrix * &first.matrix,
        }
    }

    /// Max entry of `|Mᵀ Ω M - Ω|` with `Ω` in interleaved ordering.
    pub fn symplectic_error(&self) -> f64 {
        let omega = symplectic_form(self.n_modes());
        let lhs = self.matrix.transpose() * &omega * &self.matrix;
        (lhs - omega).abs().max()
    }
}

/// Standard symplectic form for `(x_1, p_1, ..., x_n, p_n)`.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        w[(2 * k, 2 * k + 1)] = 1.0;
        w[(2 * k + 1, 2 * k)] = -1.0;
    }
    w
}

impl GaussianState {
    /// Applies `op` to the listed modes (quadrature ordering follows `modes`).
    pub fn apply(&mut self, modes: &[usize], op: &SymplecticOp) -> Result<()> {
        if modes.len() != op.n_modes() {
            return Err(Error::SizeMismatch {
                expected: op.n_modes(),
                found: modes.len(),
            });
        }
        for (i, &a) in modes.iter().enumerate() {
            self.check_mode(a)?;
            if modes[..i].contains(&a) {
                return Err(Error::SameMode(a));
            }
        }
        let old: Vec<QuadExpr> = modes
            .iter()
            .flat_map(|&m| {
                let q = &self.modes()[m];
                [q.x.clone(), q.p.clone()]
            })
            .collect();
        let m = op.matrix();
        for (i, &mode) in modes.iter().enumerate() {
            let mut new = ModeQuads::default();
            for (row, target) in [(2 * i, Quadrature::X), (2 * i + 1, Quadrature::P)] {
                let mut acc = QuadExpr::zero();
                for (col, e) in old.iter().enumerate() {
                    let c = m[(row, col)];
                    if c != 0.0 {
                        acc += &e.scaled(c);
                    }
                }
                *new.get_mut(target) = acc;
            }
            *self.mode_mut(mode)? = new;
        }
        Ok(())
    }

    /// Phase-space rotation by `phi`: `x' = x cos φ - p sin φ`, `p' = x sin φ + p cos φ`.
    pub fn rotate(&mut self, mode: usize, phi: f64) -> Result<()> {
        self.apply(&[mode], &SymplecticOp::rotation(phi))
    }

    /// Fourier transform, a 90° rotation.
    pub fn fourier(&mut self, mode: usize) -> Result<()> {
        self.rotate(mode, FRAC_PI_2)
    }

    pub fn squeeze(&mut self, mode: usize, r_s: f64) -> Result<()> {
        self.apply(&[mode], &SymplecticOp::squeeze(r_s))
    }

    pub fn beam_splitter(&mut self, spec: &BeamSplitterSpec) -> Result<()> {
        let (k, l) = spec.modes();
        self.apply(&[k, l], &SymplecticOp::beam_splitter(spec))
    }

    pub fn cz(&mut self, j: usize, k: usize) -> Result<()> {
        if j == k {
            return Err(Error::SameMode(j));
        }
        self.apply(&[j, k], &SymplecticOp::cz())
    }

    /// Classical displacement of one quadrature's mean.
    pub fn displace(&mut self, mode: usize, axis: Quadrature, amount: f64) -> Result<()> {
        let e = self.mode_mut(mode)?.get_mut(axis);
        let mean = e.mean();
        e.set_mean(mean + amount);
        Ok(())
    }

    /// Displacement by an operator-valued amount: adds `amount` (a linear form
    /// over the basis) to the chosen quadrature. This is how homodyne
    /// feedforward enters the Heisenberg picture.
    pub fn feedforward(&mut self, mode: usize, axis: Quadrature, amount: &QuadExpr) -> Result<()> {
        *self.mode_mut(mode)?.get_mut(axis) += amount;
        Ok(())
    }

    /// Pure loss of power transmission `eta`, mixing in a freshly allocated
    /// vacuum basis mode. `eta = 1` leaves the state untouched.
    pub fn apply_loss(&mut self, mode: usize, eta: f64) -> Result<()> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid(format!("efficiency must lie in (0, 1], got {eta}")));
        }
        self.check_mode(mode)?;
        if eta == 1.0 {
            return Ok(());
        }
        let vac = self.basis_mut().push_vacuum();
        let (t, r) = (eta.sqrt(), (1.0 - eta).sqrt());
        let m = self.mode_mut(mode)?;
        for q in [Quadrature::X, Quadrature::P] {
            let mut e = m.get(q).scaled(t);
            e.add_term(vac, q, r);
            *m.get_mut(q) = e;
        }
        Ok(())
    }
}

/// Homodyne phase jitter to second order in the jitter sd `s`: the detected
/// quadrature `x_θ` becomes `e^{-s²/2} x_θ + n`, with `n` uncorrelated noise of
/// variance `s² (Var x_⊥ + ⟨x_⊥⟩²)` carried by a fresh vacuum basis mode.
pub fn jittered_detection(
    state: &mut GaussianState,
    measured: &QuadExpr,
    conjugate: &QuadExpr,
    sd: f64,
) -> Result<QuadExpr> {
    if sd == 0.0 {
        return Ok(measured.clone());
    }
    let noise_var = sd * sd * (state.variance(conjugate)? + conjugate.mean().powi(2));
    let mut out = measured.scaled((-0.5 * sd * sd).exp());
    if noise_var > 0.0 {
        let vac = state.basis_mut().push_vacuum();
        // a vacuum quadrature with coefficient c has variance c²/4
        out.add_term(vac, Quadrature::X, 2.0 * noise_var.sqrt());
    }
    Ok(out)
}

/// Detection channels of the gate sequence: the six homodyne detectors that
/// drive the feedforward, then the two output detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    D1,
    D2,
    C2,
    C3,
    D3,
    D4,
    Mu,
    Nu,
}

impl Channel {
    pub const ALL: [Channel; 8] = [
        Channel::D1,
        Channel::D2,
        Channel::C2,
        Channel::C3,
        Channel::D3,
        Channel::D4,
        Channel::Mu,
        Channel::Nu,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Loss and phase-noise model applied at detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImperfectionSpec {
    /// Effective power efficiency of every detection channel.
    pub efficiency: f64,
    /// Per-channel overrides, ordered as [`Channel::ALL`].
    pub channel_efficiency: Option<[f64; 8]>,
    /// Homodyne phase-jitter standard deviation (radians).
    pub phase_jitter_sd: f64,
    /// Include the second-order jitter correction in the analytic engine.
    pub jitter_correction: bool,
    /// Scale each detected outcome by `1/√η` before feedforward, keeping unit
    /// signal transfer.
    pub calibrated_gains: bool,
}

impl Default for ImperfectionSpec {
    fn default() -> Self {
        Self::lossless()
    }
}

impl ImperfectionSpec {
    /// Path transmission × photodiode efficiency × interference visibility.
    pub const TYPICAL_EFFICIENCY: f64 = 0.96 * 0.95 * 0.99;
    /// 2.5° homodyne locking jitter.
    pub const TYPICAL_JITTER_SD: f64 = 2.5 * std::f64::consts::PI / 180.0;

    pub fn lossless() -> Self {
        Self {
            efficiency: 1.0,
            channel_efficiency: None,
            phase_jitter_sd: 0.0,
            jitter_correction: false,
            calibrated_gains: true,
        }
    }

    /// Typical experimental losses; jitter is recorded but its analytic
    /// correction stays off.
    pub fn typical() -> Self {
        Self {
            efficiency: Self::TYPICAL_EFFICIENCY,
            phase_jitter_sd: Self::TYPICAL_JITTER_SD,
            ..Self::lossless()
        }
    }

    pub fn with_efficiency(efficiency: f64) -> Self {
        Self {
            efficiency,
            ..Self::lossless()
        }
    }

    pub fn efficiency(&self, ch: Channel) -> f64 {
        self.channel_efficiency
            .map_or(self.efficiency, |e| e[ch.index()])
    }

    /// Jitter sd as seen by the analytic engine (zero unless the correction
    /// is switched on).
    pub fn analytic_jitter_sd(&self) -> f64 {
        if self.jitter_correction {
            self.phase_jitter_sd
        } else {
            0.0
        }
    }

    pub fn is_lossless(&self) -> bool {
        Channel::ALL.iter().all(|&c| self.efficiency(c) == 1.0) && self.analytic_jitter_sd() == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for ch in Channel::ALL {
            let e = self.efficiency(ch);
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::invalid(format!(
                    "efficiency of channel {ch:?} must lie in (0, 1], got {e}"
                )));
            }
        }
        if !(self.phase_jitter_sd >= 0.0 && self.phase_jitter_sd.is_finite()) {
            return Err(Error::invalid("phase jitter sd must be finite and >= 0"));
        }
        Ok(())
    }
}
