//! Shot-by-shot sampling of the gate sequence: random basis quadratures are
//! pushed through the optical network numerically, homodyne outcomes are
//! drawn, and feedforward is a classical displacement. Used as an
//! independent check of the analytic engine.
//!
//! Randomness: one ChaCha8 generator seeded from `seed`, split into streams
//! by `(chunk << 5) | slot`, where a chunk is [`CHUNK`] consecutive shots and
//! `slot` names the noise source (see [`Slot`]). Results therefore do not
//! depend on the number of worker threads.

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::{u6_decomposition, CLUSTER_MODES};
use crate::error::{Error, Result};
use crate::gaussian::{BasisKind, BasisMode, BasisId, Quadrature};
use crate::optics::Channel;
use crate::sequence::{gain_matrix, outcome_matrix, Ancilla, SequenceConfig, SequenceOutput, OUTPUT_LABELS};

pub const CHUNK: u64 = 1024;

/// Noise sources with their own RNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Alpha,
    Beta,
    /// Cluster input `a_k`, 0-based.
    Cluster(u8),
    /// Loss vacuum in front of detector `k` (measurement order), 0-based.
    DetectorLoss(u8),
    /// Loss vacuum on output μ (0) or ν (1).
    OutputLoss(u8),
    Jitter,
}

impl Slot {
    pub fn index(self) -> u64 {
        match self {
            Slot::Alpha => 0,
            Slot::Beta => 1,
            Slot::Cluster(k) => 2 + k as u64,
            Slot::DetectorLoss(k) => 8 + k as u64,
            Slot::OutputLoss(k) => 14 + k as u64,
            Slot::Jitter => 16,
        }
    }
}

fn stream_rng(seed: u64, chunk: u64, slot: Slot) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((chunk << 5) | slot.index());
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub sequence: SequenceConfig,
    pub shots: u64,
    pub seed: u64,
    /// Keep every shot's output quadratures.
    pub keep_records: bool,
}

impl McConfig {
    pub fn new(sequence: SequenceConfig, shots: u64, seed: u64) -> Self {
        Self {
            sequence,
            shots,
            seed,
            keep_records: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRun {
    pub seed: u64,
    pub shots: u64,
    /// Empirical means of `(x_μ, p_μ, x_ν, p_ν)`.
    pub means: [f64; 4],
    /// Empirical covariance (divisor `n - 1`).
    pub covariance: [[f64; 4]; 4],
    pub records: Option<Vec<[f64; 4]>>,
}

/// Pre-resolved numeric parameters of one configuration.
struct Plan {
    alpha: (BasisMode, [f64; 2]),
    beta: (BasisMode, [f64; 2]),
    cluster: Option<[BasisMode; CLUSTER_MODES]>,
    angles: [f64; 6],
    eta: [f64; 8],
    calibrate: [f64; 6],
    jitter_sd: f64,
    m: nalgebra::Matrix4x2<f64>,
    g: Matrix4<f64>,
}

fn input_mode(spec: &crate::sequence::InputSpec) -> Result<(BasisMode, [f64; 2])> {
    let (kind, r) = spec.basis_mode();
    let mut mean = [0.0; 2];
    if let Some((axis, m)) = spec.mean() {
        mean[axis as usize] = m;
    }
    Ok((BasisMode::new(BasisId(0), kind, r)?, mean))
}

impl Plan {
    fn new(cfg: &SequenceConfig) -> Result<Self> {
        cfg.validate()?;
        let imp = &cfg.imperfections;
        let cluster = match cfg.ancilla {
            Ancilla::Cluster => {
                let mut modes = [BasisMode::new(BasisId(0), BasisKind::Vacuum, 0.0)?; CLUSTER_MODES];
                for (k, m) in modes.iter_mut().enumerate() {
                    let kind = if k % 2 == 0 { BasisKind::XSqueezed } else { BasisKind::PSqueezed };
                    *m = BasisMode::new(BasisId(k as u32), kind, cfg.cluster_r)?;
                }
                Some(modes)
            }
            Ancilla::CoherentSubstitute => None,
        };
        let eta: [f64; 8] = std::array::from_fn(|i| imp.efficiency(Channel::ALL[i]));
        let calibrate = std::array::from_fn(|i| {
            if imp.calibrated_gains {
                1.0 / eta[i].sqrt()
            } else {
                1.0
            }
        });
        let h = std::f64::consts::FRAC_PI_2;
        Ok(Self {
            alpha: input_mode(&cfg.alpha)?,
            beta: input_mode(&cfg.beta)?,
            cluster,
            angles: [cfg.angles.theta1, cfg.angles.theta2, h, h, 0.0, h],
            eta,
            calibrate,
            jitter_sd: imp.phase_jitter_sd,
            m: outcome_matrix(cfg.angles.theta2),
            g: gain_matrix(),
        })
    }
}

struct Streams {
    alpha: ChaCha8Rng,
    beta: ChaCha8Rng,
    cluster: Vec<ChaCha8Rng>,
    det_loss: Vec<ChaCha8Rng>,
    out_loss: Vec<ChaCha8Rng>,
    jitter: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64, chunk: u64) -> Self {
        Self {
            alpha: stream_rng(seed, chunk, Slot::Alpha),
            beta: stream_rng(seed, chunk, Slot::Beta),
            cluster: (0..6).map(|k| stream_rng(seed, chunk, Slot::Cluster(k))).collect(),
            det_loss: (0..6).map(|k| stream_rng(seed, chunk, Slot::DetectorLoss(k))).collect(),
            out_loss: (0..2).map(|k| stream_rng(seed, chunk, Slot::OutputLoss(k))).collect(),
            jitter: stream_rng(seed, chunk, Slot::Jitter),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sample_mode(rng: &mut ChaCha8Rng, mode: &BasisMode, mean: [f64; 2]) -> (f64, f64) {
    let x = mean[0] + mode.sd(Quadrature::X) * normal(rng);
    let p = mean[1] + mode.sd(Quadrature::P) * normal(rng);
    (x, p)
}

fn lossy(rng: &mut ChaCha8Rng, eta: f64, x: f64, p: f64) -> (f64, f64) {
    // always draw, so streams stay aligned whatever the efficiency
    let (vx, vp) = (0.5 * normal(rng), 0.5 * normal(rng));
    if eta == 1.0 {
        (x, p)
    } else {
        let (t, r) = (eta.sqrt(), (1.0 - eta).sqrt());
        (t * x + r * vx, t * p + r * vp)
    }
}

/// Balanced splitter `(a, b) -> ((a + b)/√2, (a - b)/√2)` on one quadrature pair.
fn balanced(a: f64, b: f64) -> (f64, f64) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (s * (a + b), s * (a - b))
}

fn shot(plan: &Plan, st: &mut Streams) -> [f64; 4] {
    let (xa, pa) = sample_mode(&mut st.alpha, &plan.alpha.0, plan.alpha.1);
    let (xb, pb) = sample_mode(&mut st.beta, &plan.beta.0, plan.beta.1);

    let mut cx = [0.0; CLUSTER_MODES];
    let mut cp = [0.0; CLUSTER_MODES];
    let vac = BasisMode::new(BasisId(0), BasisKind::Vacuum, 0.0).expect("vacuum");
    for k in 0..CLUSTER_MODES {
        let mode = plan.cluster.as_ref().map_or(&vac, |c| &c[k]);
        (cx[k], cp[k]) = sample_mode(&mut st.cluster[k], mode, [0.0; 2]);
    }
    if plan.cluster.is_some() {
        for op in u6_decomposition() {
            op.apply_to_samples(&mut cx, &mut cp);
        }
    }

    // α with C1; β with C6 after a quarter turn of C6
    let (d2x, d1x) = balanced(xa, cx[0]);
    let (d2p, d1p) = balanced(pa, cp[0]);
    let (r6x, r6p) = (-cp[5], cx[5]);
    let (d3x, d4x) = balanced(xb, r6x);
    let (d3p, d4p) = balanced(pb, r6p);

    let detected = [
        (d1x, d1p),
        (d2x, d2p),
        (cx[1], cp[1]),
        (cx[2], cp[2]),
        (d3x, d3p),
        (d4x, d4p),
    ];
    let mut outcome = [0.0; 6];
    for (i, &(x, p)) in detected.iter().enumerate() {
        let (x, p) = lossy(&mut st.det_loss[i], plan.eta[i], x, p);
        let phi = plan.jitter_sd * normal(&mut st.jitter);
        let (s, c) = (plan.angles[i] + phi).sin_cos();
        outcome[i] = plan.calibrate[i] * (c * x + s * p);
    }

    let [xd1, xd2, p2, p3, xd3, pd4] = outcome;
    let sqrt2 = std::f64::consts::SQRT_2;
    let v = Vector4::new(p3, p2, sqrt2 * xd3, sqrt2 * pd4) - plan.m * nalgebra::Vector2::new(xd1, xd2);
    let f = plan.g * v;

    let (xm, pm) = lossy(&mut st.out_loss[0], plan.eta[6], cx[3] + f[0], cp[3] + f[1]);
    let (xn, pn) = lossy(&mut st.out_loss[1], plan.eta[7], cx[4] + f[2], cp[4] + f[3]);
    [xm, pm, xn, pn]
}

/// Running first and second moments (Welford / Chan).
#[derive(Debug, Clone, Copy)]
struct Moments {
    n: u64,
    mean: Vector4<f64>,
    m2: Matrix4<f64>,
}

impl Moments {
    fn new() -> Self {
        Self {
            n: 0,
            mean: Vector4::zeros(),
            m2: Matrix4::zeros(),
        }
    }

    fn push(&mut self, x: [f64; 4]) {
        let x = Vector4::from(x);
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean).transpose();
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = (self.n as f64) * (other.n as f64) / n as f64;
        Moments {
            n,
            mean: self.mean + d * (other.n as f64 / n as f64),
            m2: self.m2 + other.m2 + d * d.transpose() * w,
        }
    }
}

pub fn mc_run(cfg: &McConfig) -> Result<McRun> {
    if cfg.shots == 0 {
        return Err(Error::invalid("Monte-Carlo needs at least one shot"));
    }
    let plan = Plan::new(&cfg.sequence)?;
    let n_chunks = cfg.shots.div_ceil(CHUNK);
    let chunks: Vec<(Moments, Vec<[f64; 4]>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut st = Streams::new(cfg.seed, c);
            let len = CHUNK.min(cfg.shots - c * CHUNK);
            let mut m = Moments::new();
            let mut rec = Vec::new();
            for _ in 0..len {
                let out = shot(&plan, &mut st);
                m.push(out);
                if cfg.keep_records {
                    rec.push(out);
                }
            }
            (m, rec)
        })
        .collect();
    let mut total = Moments::new();
    let mut records = cfg.keep_records.then(Vec::new);
    for (m, rec) in chunks {
        total = total.merge(m);
        if let Some(r) = records.as_mut() {
            r.extend(rec);
        }
    }
    let denom = if total.n > 1 { (total.n - 1) as f64 } else { 1.0 };
    let cov = total.m2 / denom;
    Ok(McRun {
        seed: cfg.seed,
        shots: cfg.shots,
        means: total.mean.into(),
        covariance: std::array::from_fn(|i| std::array::from_fn(|j| cov[(i, j)])),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub label: String,
    pub analytic: f64,
    pub empirical: f64,
    pub std_err: f64,
    /// `(empirical - analytic) / std_err`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McComparison {
    pub threshold: f64,
    pub checks: Vec<MomentCheck>,
    pub max_abs_z: f64,
    pub passes: bool,
}

/// Compares empirical moments with the analytic output, using
/// `se(mean_i) = √(Σ_ii / n)` and `se(Σ_ij) = √((Σ_ii Σ_jj + Σ_ij²) / n)`
/// evaluated with the analytic covariance.
pub fn compare_with_analytic(run: &McRun, analytic: &SequenceOutput, threshold: f64) -> Result<McComparison> {
    let n = run.shots as f64;
    let q = analytic.quadratures();
    let mut sigma = [[0.0; 4]; 4];
    for (i, row) in sigma.iter_mut().enumerate() {
        for (j, s) in row.iter_mut().enumerate() {
            *s = analytic.covariance(i, j)?;
        }
    }
    let mut checks = Vec::new();
    let mut push = |label: String, a: f64, e: f64, se: f64| {
        let z = if se > 0.0 { (e - a) / se } else if (e - a).abs() < 1e-12 { 0.0 } else { f64::INFINITY };
        checks.push(MomentCheck {
            label,
            analytic: a,
            empirical: e,
            std_err: se,
            z,
        });
    };
    for i in 0..4 {
        push(
            format!("mean {}", OUTPUT_LABELS[i]),
            q[i].mean(),
            run.means[i],
            (sigma[i][i] / n).sqrt(),
        );
    }
    for i in 0..4 {
        for j in i..4 {
            let label = if i == j {
                format!("var {}", OUTPUT_LABELS[i])
            } else {
                format!("cov {} {}", OUTPUT_LABELS[i], OUTPUT_LABELS[j])
            };
            let se = ((sigma[i][i] * sigma[j][j] + sigma[i][j] * sigma[i][j]) / n).sqrt();
            push(label, sigma[i][j], run.covariance[i][j], se);
        }
    }
    let max_abs_z = checks.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    Ok(McComparison {
        threshold,
        passes: max_abs_z <= threshold,
        checks,
        max_abs_z,
    })
}

/// The analytic configuration matching what the sampler does: jitter, if
/// present, enters through the second-order correction.
pub fn analytic_counterpart(cfg: &SequenceConfig) -> SequenceConfig {
    let mut c = *cfg;
    c.imperfections.jitter_correction = c.imperfections.phase_jitter_sd > 0.0;
    c
}
