//! Measurement-based squeezing gate cascaded into a controlled-Z gate on the
//! six-mode cluster.
//!
//! Mode layout of the working state: `0 = α`, `1 = β`, `2..8 = C1..C6`. After
//! feedforward only `C4` and `C5` survive, renamed `μ` and `ν`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, Matrix4x2};
use serde::{Deserialize, Serialize};

use crate::cluster::{self, ClusterGraph};
use crate::error::{Error, Result};
use crate::gaussian::{
    BasisId, BasisKind, GaussianState, Observable, QuadExpr, Quadrature, TermDiff,
};
use crate::optics::{jittered_detection, BeamSplitterSpec, BsSign, Channel, ImperfectionSpec};
use crate::units::{power_db, r_from_squeezing_db, VACUUM_VARIANCE};

pub const ALPHA: usize = 0;
pub const BETA: usize = 1;
const C1: usize = 2;

fn cluster_slot(k: usize) -> usize {
    C1 + k - 1
}

pub const ALPHA_BASIS: BasisId = BasisId(0);
pub const BETA_BASIS: BasisId = BasisId(1);
/// Basis id of cluster input `a_k` (1-based `k`).
pub fn cluster_basis(k: usize) -> BasisId {
    BasisId(1 + k as u32)
}

/// Input state of α or β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputSpec {
    Vacuum,
    /// p-squeezed vacuum, `db <= 0`.
    PSqueezed { db: f64 },
    /// Coherent state displaced along `axis` with signal power
    /// `mean² / (1/4)` equal to `modulation_db`.
    Coherent { axis: Quadrature, modulation_db: f64 },
}

impl InputSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InputSpec::Vacuum => Ok(()),
            InputSpec::PSqueezed { db } if db <= 0.0 && db.is_finite() => Ok(()),
            InputSpec::PSqueezed { db } => Err(Error::invalid(format!(
                "input squeezing is given as a non-positive dB level, got {db}"
            ))),
            InputSpec::Coherent { modulation_db, .. } if modulation_db >= 0.0 && modulation_db.is_finite() => Ok(()),
            InputSpec::Coherent { modulation_db, .. } => Err(Error::invalid(format!(
                "modulation must be a non-negative dB level, got {modulation_db}"
            ))),
        }
    }

    pub(crate) fn basis_mode(&self) -> (BasisKind, f64) {
        match *self {
            InputSpec::PSqueezed { db } if db < 0.0 => (BasisKind::PSqueezed, r_from_squeezing_db(db)),
            _ => (BasisKind::Vacuum, 0.0),
        }
    }

    /// Mean amplitude of the displaced quadrature.
    pub fn mean(&self) -> Option<(Quadrature, f64)> {
        match *self {
            InputSpec::Coherent { axis, modulation_db } => {
                Some((axis, (VACUUM_VARIANCE * 10f64.powf(modulation_db / 10.0)).sqrt()))
            }
            _ => None,
        }
    }
}

impl fmt::Display for InputSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSpec::Vacuum => write!(f, "vacuum"),
            InputSpec::PSqueezed { db } => write!(f, "psq:{db}"),
            InputSpec::Coherent { axis, modulation_db } => write!(f, "coh-{axis}:{modulation_db}"),
        }
    }
}

/// `vacuum`, `psq:<dB>` or `coh-x:<dB>` / `coh-p:<dB>`.
impl FromStr for InputSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number in input spec '{s}'")))
        };
        let spec = if s.eq_ignore_ascii_case("vacuum") {
            InputSpec::Vacuum
        } else if let Some(v) = s.strip_prefix("psq:") {
            InputSpec::PSqueezed { db: num(v)? }
        } else if let Some(v) = s.strip_prefix("coh-x:") {
            InputSpec::Coherent { axis: Quadrature::X, modulation_db: num(v)? }
        } else if let Some(v) = s.strip_prefix("coh-p:") {
            InputSpec::Coherent { axis: Quadrature::P, modulation_db: num(v)? }
        } else {
            return Err(Error::invalid(format!(
                "unknown input spec '{s}' (expected vacuum, psq:<dB>, coh-x:<dB> or coh-p:<dB>)"
            )));
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Homodyne angles of detectors d1 and d2 (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementAngles {
    pub theta1: f64,
    pub theta2: f64,
}

impl MeasurementAngles {
    /// The squeezing-gate configuration `θ1 = -θ2`.
    pub fn symmetric(theta2: f64) -> Self {
        Self { theta1: -theta2, theta2 }
    }

    /// Gate squeezing `e^{-r_s} = tan θ2` in dB.
    pub fn gate_squeezing_db(&self) -> f64 {
        20.0 * self.theta2.tan().log10()
    }

    pub fn is_symmetric(&self) -> bool {
        (self.theta1 + self.theta2).abs() < 1e-12
    }
}

/// Angles realising a p-squeezing gate of `db` (≤ 0): `tan θ2 = 10^{dB/20}`.
pub fn angle_for_squeezing(db: f64) -> Result<MeasurementAngles> {
    if !(db <= 0.0 && db.is_finite()) {
        return Err(Error::invalid(format!(
            "gate squeezes p, so its level must be <= 0 dB, got {db}"
        )));
    }
    Ok(MeasurementAngles::symmetric(10f64.powf(db / 20.0).atan()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ancilla {
    Cluster,
    /// Each cluster submode replaced by an independent vacuum (coherent
    /// light of matching intensity).
    CoherentSubstitute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub alpha: InputSpec,
    pub beta: InputSpec,
    /// Squeezing parameter of every NOPA.
    pub cluster_r: f64,
    pub angles: MeasurementAngles,
    pub imperfections: ImperfectionSpec,
    pub ancilla: Ancilla,
}

impl SequenceConfig {
    /// Lossless cluster run with vacuum inputs.
    pub fn new(cluster_r: f64, angles: MeasurementAngles) -> Self {
        Self {
            alpha: InputSpec::Vacuum,
            beta: InputSpec::Vacuum,
            cluster_r,
            angles,
            imperfections: ImperfectionSpec::lossless(),
            ancilla: Ancilla::Cluster,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha.validate()?;
        self.beta.validate()?;
        self.imperfections.validate()?;
        if !(self.cluster_r >= 0.0 && self.cluster_r.is_finite()) {
            return Err(Error::invalid(format!(
                "cluster squeezing parameter must be finite and >= 0, got {}",
                self.cluster_r
            )));
        }
        let (s, c) = self.angles.theta2.sin_cos();
        if s.abs() < 1e-9 || c.abs() < 1e-9 {
            return Err(Error::SingularFeedforward {
                theta2: self.angles.theta2,
            });
        }
        Ok(())
    }
}

/// Measurement-outcome weights: `v = (p3, p2, √2 x_d3, √2 p_d4) - M (x_d1, x_d2)`.
pub fn outcome_matrix(theta2: f64) -> Matrix4x2<f64> {
    let a = 1.0 / (theta2.sin() * 2f64.sqrt());
    let b = 1.0 / (theta2.cos() * 2f64.sqrt());
    Matrix4x2::new(a, a, -b, b, 0.0, 0.0, 0.0, 0.0)
}

/// Gain matrix mapping `v` onto the displacements of `(x_C4, p_C4, x_C5, p_C5)`.
pub fn gain_matrix() -> Matrix4<f64> {
    #[rustfmt::skip]
    let g = Matrix4::new(
        -1.0,  0.0, 0.0, 0.0,
         0.0, -1.0, 1.0, 0.0,
         0.0,  0.0, 1.0, 0.0,
        -1.0,  0.0, 0.0, 1.0,
    );
    g
}

/// Labels of the six homodyne outcomes, in detection order.
pub const MEASURED_LABELS: [&str; 6] = ["x_d1", "x_d2", "p_2", "p_3", "x_d3", "p_d4"];
pub const OUTPUT_LABELS: [&str; 4] = ["x_mu", "p_mu", "x_nu", "p_nu"];

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutput {
    /// Two-mode state `(μ, ν)`.
    pub state: GaussianState,
    /// Outcomes as seen by the feedforward (after loss, jitter and gain
    /// calibration), ordered as [`MEASURED_LABELS`].
    pub measured: [QuadExpr; 6],
    /// Displacements `f1..f4` applied to `(x_C4, p_C4, x_C5, p_C5)`.
    pub feedforward: [QuadExpr; 4],
    pub config: SequenceConfig,
}

pub const MU: usize = 0;
pub const NU: usize = 1;

impl SequenceOutput {
    /// `(x_μ, p_μ, x_ν, p_ν)`.
    pub fn quadratures(&self) -> [&QuadExpr; 4] {
        let m = self.state.modes();
        [&m[MU].x, &m[MU].p, &m[NU].x, &m[NU].p]
    }

    pub fn variances(&self) -> Result<[f64; 4]> {
        let q = self.quadratures();
        Ok([
            self.state.variance(q[0])?,
            self.state.variance(q[1])?,
            self.state.variance(q[2])?,
            self.state.variance(q[3])?,
        ])
    }

    /// Output noise relative to the vacuum level, in dB.
    pub fn variances_db(&self) -> Result<[f64; 4]> {
        Ok(self.variances()?.map(|v| power_db(v / VACUUM_VARIANCE)))
    }

    pub fn covariance(&self, a: usize, b: usize) -> Result<f64> {
        let q = self.quadratures();
        self.state.basis().covariance(q[a], q[b])
    }
}

fn build_inputs(cfg: &SequenceConfig) -> Result<GaussianState> {
    let mut s = GaussianState::from_basis_modes(&[cfg.alpha.basis_mode(), cfg.beta.basis_mode()])?;
    for (mode, spec) in [(ALPHA, cfg.alpha), (BETA, cfg.beta)] {
        if let Some((axis, m)) = spec.mean() {
            s.displace(mode, axis, m)?;
        }
    }
    let ancilla = match cfg.ancilla {
        Ancilla::Cluster => cluster::prepare_cluster(cfg.cluster_r)?,
        Ancilla::CoherentSubstitute => GaussianState::vacuum(cluster::CLUSTER_MODES),
    };
    Ok(s.join(&ancilla))
}

/// Couples α to C1 and β to C6 on balanced splitters. Afterwards slot α holds
/// `d2 = (α + C1)/√2`, slot C1 holds `d1 = (α - C1)/√2`, slot β holds
/// `d3 = (β + iC6)/√2` and slot C6 holds `d4 = (β - iC6)/√2`.
fn couple_inputs(s: &mut GaussianState) -> Result<()> {
    let c6 = cluster_slot(6);
    s.beam_splitter(&BeamSplitterSpec::new(0.5, BsSign::Plus, ALPHA, cluster_slot(1))?)?;
    s.rotate(c6, FRAC_PI_2)?;
    s.beam_splitter(&BeamSplitterSpec::new(0.5, BsSign::Plus, BETA, c6)?)?;
    Ok(())
}

/// Detection setup: (slot, homodyne angle, channel) in [`MEASURED_LABELS`] order.
fn detections(angles: &MeasurementAngles) -> [(usize, f64, Channel); 6] {
    [
        (cluster_slot(1), angles.theta1, Channel::D1),
        (ALPHA, angles.theta2, Channel::D2),
        (cluster_slot(2), FRAC_PI_2, Channel::C2),
        (cluster_slot(3), FRAC_PI_2, Channel::C3),
        (BETA, 0.0, Channel::D3),
        (cluster_slot(6), FRAC_PI_2, Channel::D4),
    ]
}

pub fn run_sequence(cfg: &SequenceConfig) -> Result<SequenceOutput> {
    cfg.validate()?;
    let imp = &cfg.imperfections;
    let mut s = build_inputs(cfg)?;
    couple_inputs(&mut s)?;

    let jitter = imp.analytic_jitter_sd();
    let mut measured: [QuadExpr; 6] = Default::default();
    for (i, (slot, theta, ch)) in detections(&cfg.angles).into_iter().enumerate() {
        let eta = imp.efficiency(ch);
        s.apply_loss(slot, eta)?;
        let outcome = s.resolve(&Observable::at_angle(slot, theta))?;
        let conj = s.resolve(&Observable::at_angle(slot, theta + FRAC_PI_2))?;
        let mut m = jittered_detection(&mut s, &outcome, &conj, jitter)?;
        if imp.calibrated_gains {
            m = m.scaled(1.0 / eta.sqrt());
        }
        measured[i] = m;
    }

    let [xd1, xd2, p2, p3, xd3, pd4] = &measured;
    let m = outcome_matrix(cfg.angles.theta2);
    let sqrt2 = 2f64.sqrt();
    let base = [p3.clone(), p2.clone(), xd3 * sqrt2, pd4 * sqrt2];
    let v: Vec<QuadExpr> = (0..4)
        .map(|i| &base[i] - &(&(xd1 * m[(i, 0)]) + &(xd2 * m[(i, 1)])))
        .collect();
    let g = gain_matrix();
    let feedforward: [QuadExpr; 4] = std::array::from_fn(|i| {
        (0..4).fold(QuadExpr::zero(), |acc, j| {
            if g[(i, j)] == 0.0 {
                acc
            } else {
                acc + &v[j] * g[(i, j)]
            }
        })
    });

    let targets = [
        (cluster_slot(4), Quadrature::X),
        (cluster_slot(4), Quadrature::P),
        (cluster_slot(5), Quadrature::X),
        (cluster_slot(5), Quadrature::P),
    ];
    for ((mode, q), f) in targets.into_iter().zip(&feedforward) {
        s.feedforward(mode, q, f)?;
    }
    s.apply_loss(cluster_slot(4), imp.efficiency(Channel::Mu))?;
    s.apply_loss(cluster_slot(5), imp.efficiency(Channel::Nu))?;

    Ok(SequenceOutput {
        state: s.select(&[cluster_slot(4), cluster_slot(5)])?,
        measured,
        feedforward,
        config: *cfg,
    })
}

/// Output of a perfect gate sequence (all excess noise removed), on a basis
/// holding only α and β.
pub fn ideal_output(alpha: InputSpec, beta: InputSpec, angles: MeasurementAngles) -> Result<GaussianState> {
    alpha.validate()?;
    beta.validate()?;
    let mut inputs = GaussianState::from_basis_modes(&[alpha.basis_mode(), beta.basis_mode()])?;
    for (mode, spec) in [(ALPHA, alpha), (BETA, beta)] {
        if let Some((axis, m)) = spec.mean() {
            inputs.displace(mode, axis, m)?;
        }
    }
    let (t, cot) = (angles.theta2.tan(), 1.0 / angles.theta2.tan());
    let q = |m: usize, q: Quadrature| inputs.quad(m, q).cloned();
    let (xa, pa, xb, pb) = (
        q(ALPHA, Quadrature::X)?,
        q(ALPHA, Quadrature::P)?,
        q(BETA, Quadrature::X)?,
        q(BETA, Quadrature::P)?,
    );
    let modes = vec![
        crate::gaussian::ModeQuads {
            x: &xa * cot,
            p: &(&pa * t) + &xb,
        },
        crate::gaussian::ModeQuads {
            x: xb.clone(),
            p: &pb + &(&xa * cot),
        },
    ];
    GaussianState::from_parts(modes, inputs.basis().clone())
}

/// Excess-noise combinations on `(x_μ, p_μ, x_ν, p_ν)` built from the
/// nullifiers `δ`: `(δ1-δ3, -δ2+δ4-δ6, -δ6, δ1+δ5-δ3)`.
pub fn excess_noise(deltas: &[QuadExpr]) -> Result<[QuadExpr; 4]> {
    if deltas.len() != 6 {
        return Err(Error::SizeMismatch {
            expected: 6,
            found: deltas.len(),
        });
    }
    let d = |k: usize| &deltas[k - 1];
    Ok([
        d(1) - d(3),
        &(&(-d(2)) + d(4)) - d(6),
        -d(6),
        &(d(1) + d(5)) - d(3),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub holds: bool,
    pub max_diff: f64,
    /// Mismatching terms, keyed by output quadrature label.
    pub diffs: Vec<(String, Vec<TermDiff>)>,
}

/// Rebuilds the outputs as `ideal + excess noise`, with the nullifiers taken
/// from an independently prepared cluster, and compares coefficient by
/// coefficient (means included).
pub fn verify_io_identity(out: &SequenceOutput, tol: f64) -> Result<IdentityCheck> {
    let cfg = &out.config;
    if !cfg.imperfections.is_lossless() {
        return Err(Error::invalid("the input-output identity is defined for lossless runs"));
    }
    let ideal = ideal_output(cfg.alpha, cfg.beta, cfg.angles)?;
    let c = cluster::prepare_cluster(cfg.cluster_r)?;
    let shift = |e: &QuadExpr| {
        QuadExpr::from_terms(
            e.terms().map(|(id, q, c)| (BasisId(id.0 + 2), q, c)),
            e.mean(),
        )
    };
    let deltas: Vec<QuadExpr> = cluster::nullifiers(&c, &ClusterGraph::linear_chain(6))?
        .iter()
        .map(shift)
        .collect();
    let noise = excess_noise(&deltas)?;
    let im = ideal.modes();
    let want = [
        &im[MU].x + &noise[0],
        &im[MU].p + &noise[1],
        &im[NU].x + &noise[2],
        &im[NU].p + &noise[3],
    ];
    let mut max_diff: f64 = 0.0;
    let mut diffs = Vec::new();
    for ((label, got), want) in OUTPUT_LABELS.iter().zip(out.quadratures()).zip(&want) {
        let d = got.max_coeff_diff(want).max((got.mean() - want.mean()).abs());
        max_diff = max_diff.max(d);
        let terms = got.term_diffs(want, tol);
        if !terms.is_empty() || (got.mean() - want.mean()).abs() > tol {
            diffs.push((label.to_string(), terms));
        }
    }
    Ok(IdentityCheck {
        holds: diffs.is_empty(),
        max_diff,
        diffs,
    })
}

/// Signal power `mean² / (1/4)` of each output quadrature in dB; `None` where
/// the mean vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalReport {
    pub x_mu: Option<f64>,
    pub p_mu: Option<f64>,
    pub x_nu: Option<f64>,
    pub p_nu: Option<f64>,
}

impl SignalReport {
    pub fn as_array(&self) -> [Option<f64>; 4] {
        [self.x_mu, self.p_mu, self.x_nu, self.p_nu]
    }
}

pub fn propagate_signal(out: &SequenceOutput) -> SignalReport {
    let db = |e: &QuadExpr| {
        let m = e.mean();
        (m.abs() > 1e-12).then(|| power_db(m * m / VACUUM_VARIANCE))
    };
    let [a, b, c, d] = out.quadratures();
    SignalReport {
        x_mu: db(a),
        p_mu: db(b),
        x_nu: db(c),
        p_nu: db(d),
    }
}
