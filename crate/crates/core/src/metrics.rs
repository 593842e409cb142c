//! Figures of merit for the gate outputs: two-mode inseparability with an
//! optimised gain, the entanglement degree `E`, and Gaussian fidelity against
//! the ideal output.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, Observable, Quadrature};
use crate::sequence::{ideal_output, run_sequence, Ancilla, SequenceConfig, SequenceOutput, MU, NU};
use crate::units::{power_db, VACUUM_VARIANCE};

/// Closed-form gain minimising `E` for a lossless cluster of squeezing `r`,
/// a p-squeezed β of parameter `r_beta` and gate angle `theta2`.
pub fn optimal_gain(r: f64, r_beta: f64, theta2: f64) -> f64 {
    let e2r = (2.0 * r).exp();
    let e2b = (2.0 * r_beta).exp();
    let cot2 = 1.0 / theta2.tan().powi(2);
    let tan2 = theta2.tan().powi(2);
    let num = e2b * (3.0 + 2.0 * e2r + e2r * e2b + e2r * cot2);
    let den = e2r + 8.0 * e2b + e2r * e2b * e2b + e2r * e2b * (cot2 + tan2);
    num / den
}

/// Second moments entering the inseparability sum
/// `Var(g p_μ - x_ν) + Var(g p_ν - x_μ) = g² S - 2 g C + V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DuanMoments {
    pub s: f64,
    pub c: f64,
    pub v: f64,
}

impl DuanMoments {
    pub fn from_output(out: &SequenceOutput) -> Result<Self> {
        // quadrature order: x_μ, p_μ, x_ν, p_ν
        let var = |i| out.covariance(i, i);
        Ok(Self {
            s: var(1)? + var(3)?,
            c: out.covariance(1, 2)? + out.covariance(3, 0)?,
            v: var(0)? + var(2)?,
        })
    }

    pub fn lhs(&self, g: f64) -> f64 {
        g * g * self.s - 2.0 * g * self.c + self.v
    }

    pub fn entanglement(&self, g: f64) -> f64 {
        self.lhs(g) - g
    }

    /// Stationary point of `E(g)`. The boundary `g` is in units of four
    /// vacuum variances, hence the `2 · 1/4` offset.
    pub fn optimal_gain(&self) -> Result<f64> {
        if self.s <= 0.0 {
            return Err(Error::Degenerate("p_μ and p_ν have zero variance".into()));
        }
        Ok((self.c + 2.0 * VACUUM_VARIANCE) / self.s)
    }
}

pub fn duan_lhs(out: &SequenceOutput, g: f64) -> Result<f64> {
    Ok(DuanMoments::from_output(out)?.lhs(g))
}

/// `E = Var(g p_μ - x_ν) + Var(g p_ν - x_μ) - g`; negative means entangled.
pub fn entanglement_e(out: &SequenceOutput, g: f64) -> Result<f64> {
    if g.is_nan() || g <= 0.0 {
        return Err(Error::invalid(format!("gain must be positive, got {g}")));
    }
    Ok(DuanMoments::from_output(out)?.entanglement(g))
}

/// Golden-section minimisation of `E(g)` over `g > 0`.
pub fn optimal_gain_numeric(out: &SequenceOutput) -> Result<f64> {
    let m = DuanMoments::from_output(out)?;
    if m.s <= 0.0 {
        return Err(Error::Degenerate("p_μ and p_ν have zero variance".into()));
    }
    let f = |g: f64| m.entanglement(g);
    let mut hi = 1.0;
    while f(2.0 * hi) < f(hi) && hi < 1e6 {
        hi *= 2.0;
    }
    Ok(golden_section(f, 0.0, 2.0 * hi, 1e-12))
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + c.abs() + d.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DuanReport {
    pub g: f64,
    pub lhs: f64,
    pub e: f64,
    /// `Var(g p_μ - x_ν)` and `Var(g p_ν - x_μ)`.
    pub variances: [f64; 2],
    /// Same, relative to their shot-noise levels `(g² + 1)/4`.
    pub variances_db: [f64; 2],
    pub passes: bool,
}

pub fn duan_check(out: &SequenceOutput, g: f64) -> Result<DuanReport> {
    if !(g >= 0.0 && g.is_finite()) {
        return Err(Error::invalid(format!("gain must be finite and >= 0, got {g}")));
    }
    let a = Observable::quad(MU, Quadrature::P)
        .scale(g)
        .plus(NU, Quadrature::X, -1.0);
    let b = Observable::quad(NU, Quadrature::P)
        .scale(g)
        .plus(MU, Quadrature::X, -1.0);
    let s = &out.state;
    let variances = [s.observable_variance(&a)?, s.observable_variance(&b)?];
    let variances_db = [s.observable_db(&a)?, s.observable_db(&b)?];
    let lhs = variances[0] + variances[1];
    Ok(DuanReport {
        g,
        lhs,
        e: lhs - g,
        variances,
        variances_db,
        passes: lhs < g,
    })
}

/// Covariances scaled so that vacuum is the identity, and the mean offset
/// `ε = √2 (⟨r⟩_1 - ⟨r⟩_2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityInputs {
    pub a1: Matrix2<f64>,
    pub a2: Matrix2<f64>,
    pub epsilon: Vector2<f64>,
}

impl FidelityInputs {
    pub fn from_modes(ideal: &GaussianState, ideal_mode: usize, actual: &GaussianState, actual_mode: usize) -> Self {
        let block = |s: &GaussianState, m: usize| s.covariance().mode_block(m) / VACUUM_VARIANCE;
        let mean = |s: &GaussianState, m: usize| {
            let q = &s.modes()[m];
            Vector2::new(q.x.mean(), q.p.mean())
        };
        Self {
            a1: block(ideal, ideal_mode),
            a2: block(actual, actual_mode),
            epsilon: (mean(ideal, ideal_mode) - mean(actual, actual_mode)) * 2f64.sqrt(),
        }
    }

    /// Both blocks free of x-p correlations.
    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.a1[(0, 1)].abs() <= tol && self.a2[(0, 1)].abs() <= tol
    }
}

/// Fidelity of two single-mode Gaussian states:
/// `F = 2 / (√(Δ + σ) - √σ) · exp(-εᵀ (A1 + A2)⁻¹ ε)` with
/// `Δ = det(A1 + A2)` and `σ = (det A1 - 1)(det A2 - 1)`.
pub fn gaussian_fidelity(fi: &FidelityInputs) -> Result<f64> {
    let sum = fi.a1 + fi.a2;
    let delta = sum.determinant();
    let inv = sum
        .try_inverse()
        .filter(|_| delta.abs() > 1e-300)
        .ok_or(Error::Singular("A1 + A2"))?;
    let mut sigma = (fi.a1.determinant() - 1.0) * (fi.a2.determinant() - 1.0);
    if sigma < 0.0 {
        if sigma < -1e-9 {
            return Err(Error::invalid(format!(
                "covariance blocks violate the uncertainty relation (σ = {sigma:.3e})"
            )));
        }
        sigma = 0.0;
    }
    let pre = 2.0 / ((delta + sigma).sqrt() - sigma.sqrt());
    let expo = (fi.epsilon.transpose() * inv * fi.epsilon)[(0, 0)];
    Ok(pre * (-expo).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityReport {
    pub f_mu: f64,
    pub f_nu: f64,
    /// Whether both output blocks were x-p uncorrelated.
    pub diagonal: bool,
}

/// Fidelity of each output mode against the excess-noise-free output for
/// the same inputs and angles.
pub fn output_fidelities(out: &SequenceOutput) -> Result<FidelityReport> {
    let cfg = &out.config;
    let ideal = ideal_output(cfg.alpha, cfg.beta, cfg.angles)?;
    let mu = FidelityInputs::from_modes(&ideal, MU, &out.state, MU);
    let nu = FidelityInputs::from_modes(&ideal, NU, &out.state, NU);
    Ok(FidelityReport {
        f_mu: gaussian_fidelity(&mu)?,
        f_nu: gaussian_fidelity(&nu)?,
        diagonal: mu.is_diagonal(1e-12) && nu.is_diagonal(1e-12),
    })
}

/// Fidelities reached with every cluster submode replaced by vacuum.
pub fn classical_limit_fidelity(cfg: &SequenceConfig) -> Result<FidelityReport> {
    let sub = SequenceConfig {
        ancilla: Ancilla::CoherentSubstitute,
        ..*cfg
    };
    output_fidelities(&run_sequence(&sub)?)
}

/// Squeezing of each output quadrature in dB (for reports).
pub fn output_noise_db(out: &SequenceOutput) -> Result<[f64; 4]> {
    out.variances()
        .map(|v| v.map(|x| power_db(x / VACUUM_VARIANCE)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::ImperfectionSpec;
    use crate::sequence::{angle_for_squeezing, InputSpec};
    use crate::units::r_from_squeezing_db;
    use approx::assert_abs_diff_eq;

    fn r4() -> f64 {
        r_from_squeezing_db(-4.0)
    }

    fn point(beta_db: f64, gate_db: f64) -> SequenceConfig {
        let mut c = SequenceConfig::new(r4(), angle_for_squeezing(gate_db).unwrap());
        if beta_db < 0.0 {
            c.beta = InputSpec::PSqueezed { db: beta_db };
        }
        c
    }

    /// `|<a|b>|²` from truncated Fock expansions.
    fn coherent_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        // term_n = (a* b)^n / n!
        let z = (a.0 * b.0 + a.1 * b.1, a.0 * b.1 - a.1 * b.0);
        let (mut tr, mut ti) = (1.0, 0.0);
        for n in 0..200 {
            re += tr;
            im += ti;
            let k = (n + 1) as f64;
            let (nr, ni) = ((tr * z.0 - ti * z.1) / k, (tr * z.1 + ti * z.0) / k);
            tr = nr;
            ti = ni;
        }
        let norm = (-(a.0 * a.0 + a.1 * a.1) / 2.0 - (b.0 * b.0 + b.1 * b.1) / 2.0).exp();
        (re * re + im * im) * norm * norm
    }

    #[test]
    fn printed_gain_table_points() {
        let t45 = angle_for_squeezing(0.0).unwrap().theta2;
        let t12 = angle_for_squeezing(-12.0).unwrap().theta2;
        assert_abs_diff_eq!(optimal_gain(r4(), 0.0, t45), 0.72, epsilon = 0.005);
        assert_abs_diff_eq!(optimal_gain(r4(), r4(), t12), 0.98, epsilon = 0.005);
        assert_abs_diff_eq!(optimal_gain(r4(), 0.0, t12), 0.95, epsilon = 0.005);
    }

    #[test]
    fn closed_and_numeric_gain_agree() {
        for beta in [0.0, -4.0, -12.0] {
            for gate in [0.0, -3.0, -6.0, -9.0, -12.0] {
                let c = point(beta, gate);
                let out = run_sequence(&c).unwrap();
                let rb = if beta < 0.0 { r_from_squeezing_db(beta) } else { 0.0 };
                let closed = optimal_gain(c.cluster_r, rb, c.angles.theta2);
                let numeric = optimal_gain_numeric(&out).unwrap();
                let stationary = DuanMoments::from_output(&out).unwrap().optimal_gain().unwrap();
                assert!((closed - numeric).abs() < 1e-6, "{beta} {gate}: {closed} vs {numeric}");
                assert!((closed - stationary).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vacuum_outputs_sit_on_the_boundary() {
        // two independent vacua: g = 1 gives E = 0
        let mut out = run_sequence(&point(0.0, -6.0)).unwrap();
        out.state = GaussianState::vacuum(2);
        assert_abs_diff_eq!(entanglement_e(&out, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(optimal_gain_numeric(&out).unwrap(), 1.0, epsilon = 1e-6);
        assert!(entanglement_e(&out, 0.0).is_err());
    }

    #[test]
    fn lossless_point_j_passes_substitute_fails() {
        let c = point(-4.0, -12.0);
        let out = run_sequence(&c).unwrap();
        let g = optimal_gain_numeric(&out).unwrap();
        let rep = duan_check(&out, g).unwrap();
        assert!(rep.passes);
        assert!(rep.variances_db.iter().all(|&d| d < 0.0), "{rep:?}");
        let sub = run_sequence(&SequenceConfig { ancilla: Ancilla::CoherentSubstitute, ..c }).unwrap();
        let gs = optimal_gain_numeric(&sub).unwrap();
        assert!(!duan_check(&sub, gs).unwrap().passes);
    }

    #[test]
    fn small_gain_fails() {
        let out = run_sequence(&point(-4.0, -12.0)).unwrap();
        let rep = duan_check(&out, 1e-9).unwrap();
        assert!(!rep.passes);
    }

    #[test]
    fn identical_vacua_have_unit_fidelity() {
        let fi = FidelityInputs {
            a1: Matrix2::identity(),
            a2: Matrix2::identity(),
            epsilon: Vector2::zeros(),
        };
        assert_eq!(gaussian_fidelity(&fi).unwrap(), 1.0);
    }

    #[test]
    fn coherent_fidelity_matches_fock_overlap() {
        for (a, b) in [((0.0, 0.0), (0.5, 0.0)), ((1.2, -0.3), (0.4, 0.9)), ((2.0, 1.0), (2.1, 0.8))] {
            let fi = FidelityInputs {
                a1: Matrix2::identity(),
                a2: Matrix2::identity(),
                epsilon: Vector2::new(a.0 - b.0, a.1 - b.1) * 2f64.sqrt(),
            };
            assert_abs_diff_eq!(gaussian_fidelity(&fi).unwrap(), coherent_overlap(a, b), epsilon = 1e-12);
        }
    }

    #[test]
    fn squeezed_vacuum_overlap() {
        // |<0|S(r)|0>|² = 1 / cosh r
        for r in [0.1f64, 0.5, 1.3] {
            let fi = FidelityInputs {
                a1: Matrix2::identity(),
                a2: Matrix2::new((-2.0 * r).exp(), 0.0, 0.0, (2.0 * r).exp()),
                epsilon: Vector2::zeros(),
            };
            assert_abs_diff_eq!(gaussian_fidelity(&fi).unwrap(), 1.0 / f64::cosh(r), epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_sum_is_an_error() {
        let fi = FidelityInputs {
            a1: Matrix2::zeros(),
            a2: Matrix2::zeros(),
            epsilon: Vector2::zeros(),
        };
        assert_eq!(gaussian_fidelity(&fi), Err(Error::Singular("A1 + A2")));
    }

    #[test]
    fn infinite_squeezing_gives_unit_fidelity() {
        let mut c = point(-4.0, -12.0);
        c.cluster_r = 12.0;
        let f = output_fidelities(&run_sequence(&c).unwrap()).unwrap();
        assert_abs_diff_eq!(f.f_mu, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(f.f_nu, 1.0, epsilon = 1e-6);
        assert!(f.diagonal);
    }

    #[test]
    fn lossless_row_a_reference() {
        let f = output_fidelities(&run_sequence(&point(0.0, 0.0)).unwrap()).unwrap();
        assert_abs_diff_eq!(f.f_mu, 0.851, epsilon = 1e-3);
        assert_abs_diff_eq!(f.f_nu, 0.886, epsilon = 1e-3);
    }

    #[test]
    fn cluster_beats_substitute() {
        for gate in [0.0, -3.0, -6.0, -9.0, -12.0] {
            for imp in [ImperfectionSpec::lossless(), ImperfectionSpec::typical()] {
                let mut c = point(0.0, gate);
                c.imperfections = imp;
                let fc = output_fidelities(&run_sequence(&c).unwrap()).unwrap();
                let fs = classical_limit_fidelity(&c).unwrap();
                assert!(fc.f_mu > fs.f_mu && fc.f_nu > fs.f_nu, "{gate}");
            }
        }
    }

    #[test]
    fn substitute_equals_unsqueezed_cluster() {
        let mut c = point(-4.0, -6.0);
        c.cluster_r = 0.0;
        let a = output_fidelities(&run_sequence(&c).unwrap()).unwrap();
        let b = classical_limit_fidelity(&c).unwrap();
        assert_abs_diff_eq!(a.f_mu, b.f_mu, epsilon = 1e-14);
        assert_abs_diff_eq!(a.f_nu, b.f_nu, epsilon = 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pure(r: f64) -> Matrix2<f64> {
            Matrix2::new((-2.0 * r).exp(), 0.0, 0.0, (2.0 * r).exp())
        }

        proptest! {
            #[test]
            fn pure_fidelity_is_symmetric(r1 in -1.5f64..1.5, r2 in -1.5f64..1.5, ex in -2.0f64..2.0, ep in -2.0f64..2.0) {
                let e = Vector2::new(ex, ep);
                let f12 = gaussian_fidelity(&FidelityInputs { a1: pure(r1), a2: pure(r2), epsilon: e }).unwrap();
                let f21 = gaussian_fidelity(&FidelityInputs { a1: pure(r2), a2: pure(r1), epsilon: e }).unwrap();
                prop_assert!((f12 - f21).abs() < 1e-12);
                prop_assert!(f12 <= 1.0 + 1e-12 && f12 > 0.0);
            }

            #[test]
            fn fidelity_drops_with_offset(r in -1.0f64..1.0, n in 0.1f64..3.0, k in 1.01f64..3.0, ang in 0.0f64..std::f64::consts::TAU) {
                let dir = Vector2::new(ang.cos(), ang.sin());
                let f = |s: f64| gaussian_fidelity(&FidelityInputs {
                    a1: Matrix2::identity() * n.max(1.0),
                    a2: pure(r),
                    epsilon: dir * s,
                }).unwrap();
                prop_assert!(f(k * 0.5) < f(0.5));
            }

            #[test]
            fn common_displacement_leaves_fidelity(db in 0.0f64..20.0, gate in -12.0f64..0.0) {
                let base = point(-4.0, gate);
                let mut shifted = base;
                shifted.alpha = InputSpec::Coherent { axis: Quadrature::X, modulation_db: db };
                let a = output_fidelities(&run_sequence(&base).unwrap()).unwrap();
                let b = output_fidelities(&run_sequence(&shifted).unwrap()).unwrap();
                prop_assert!((a.f_mu - b.f_mu).abs() < 1e-10);
                prop_assert!((a.f_nu - b.f_nu).abs() < 1e-10);
            }

            #[test]
            fn gains_agree_on_grid(r_db in -10.0f64..-0.5, b_db in -12.0f64..0.0, gate in -12.0f64..0.0) {
                let mut c = SequenceConfig::new(r_from_squeezing_db(r_db), angle_for_squeezing(gate).unwrap());
                c.beta = InputSpec::PSqueezed { db: b_db };
                let out = run_sequence(&c).unwrap();
                let closed = optimal_gain(c.cluster_r, r_from_squeezing_db(b_db), c.angles.theta2);
                prop_assert!((closed - optimal_gain_numeric(&out).unwrap()).abs() < 1e-6);
            }
        }
    }
}
