//! Distance from a target system gate, fitness, effective error Hamiltonian
//! and log-log scaling fits.
//!
//! The distance of a unitary `U` on `S ⊗ B` from `G ⊗ Φ` (best bath unitary
//! `Φ`) is `D = sqrt(1 - ‖Γ‖_Tr / d)` with `Γ = Tr_S[U (G^† ⊗ I)]`. For well
//! decoupled sequences `1 - ‖Γ‖_Tr/d` is far below `f64` resolution, so the
//! main evaluator uses the identity
//!
//! ```text
//! Γ^†Γ = d_S² I - M,
//! M = d_S Σ_a Σ_{b≠a} U_ba^† U_ba + Σ_{a<a'} (U_aa - U_a'a')^† (U_aa - U_a'a')
//! ```
//!
//! (`U_ab` are the `d_B × d_B` blocks), which expresses `D²` through small
//! quantities only: `D² = (1/d) Σ_i λ_i / (d_S + sqrt(d_S² - λ_i))` over the
//! eigenvalues `λ_i` of `M`.

use crate::dd::DdMatrix;
use crate::linalg::{
    c, herm_eigh, identity, kron, partial_trace_system, pauli, sup_norm, trace_norm,
    unitary_logm, CMatrix, LinalgError, Pauli,
};
use crate::model::{ModelError, PulseModel, SystemModel};
use crate::propagator::{cycle_propagator, Mat2, MAT2_ID};
use crate::sequence::Sequence;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distances below this are treated as this value when taking logarithms.
pub const D_FLOOR: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "q")]
    pub fitness: f64,
    pub tau_c: f64,
}

impl DistanceReport {
    pub fn new(d: f64, tau_c: f64) -> DistanceReport {
        DistanceReport {
            d,
            fitness: fitness(d),
            tau_c,
        }
    }
}

/// `q = -log10(max(D, D_FLOOR))`.
pub fn fitness(d: f64) -> f64 {
    -d.max(D_FLOOR).log10()
}

fn check_dims(u: &CMatrix, g: &CMatrix, d_s: usize, d_b: usize) -> Result<(), MetricsError> {
    let d = d_s * d_b;
    if u.shape() != (d, d) {
        return Err(MetricsError::Dimension(format!(
            "U is {}x{}, expected {d}x{d}",
            u.nrows(),
            u.ncols()
        )));
    }
    if g.shape() != (d_s, d_s) {
        return Err(MetricsError::Dimension(format!(
            "G is {}x{}, expected {d_s}x{d_s}",
            g.nrows(),
            g.ncols()
        )));
    }
    Ok(())
}

fn relative_to_target(u: &CMatrix, g: &CMatrix, d_b: usize) -> CMatrix {
    u * kron(&g.adjoint(), &identity(d_b))
}

/// Distance of `W` (already multiplied by `G^† ⊗ I`) from `I_S ⊗ Φ`, evaluated
/// from the small-quantity matrix `M`.
pub(crate) fn distance_from_blocks(w: &DdMatrix, d_s: usize) -> f64 {
    let n = w.dim();
    let m = n / d_s;
    let blocks: Vec<Vec<DdMatrix>> = (0..d_s)
        .map(|a| (0..d_s).map(|b| w.block(a, b, m)).collect())
        .collect();
    let mut acc = DdMatrix::zeros(m);
    let mut off = DdMatrix::zeros(m);
    for a in 0..d_s {
        for b in 0..d_s {
            if a != b {
                off = off.add(&blocks[b][a].adjoint_matmul(&blocks[b][a]));
            }
        }
    }
    for _ in 0..d_s {
        acc = acc.add(&off);
    }
    for a in 0..d_s {
        for a2 in a + 1..d_s {
            let diff = blocks[a][a].sub(&blocks[a2][a2]);
            acc = acc.add(&diff.adjoint_matmul(&diff));
        }
    }
    let mf = acc.to_cmatrix();
    let mf = (&mf + mf.adjoint()).scale(0.5);
    let vals = match herm_eigh(&mf) {
        Ok((v, _)) => v,
        // M is Hermitian by construction; fall back to its diagonal bound.
        Err(_) => mf.diagonal().iter().map(|z| z.re).collect(),
    };
    let ds = d_s as f64;
    let sum: f64 = vals
        .iter()
        .map(|&l| {
            let l = l.clamp(0.0, ds * ds);
            l / (ds + (ds * ds - l).sqrt())
        })
        .sum();
    (sum / n as f64).clamp(0.0, 1.0).sqrt()
}

/// Distance of `U` from the nearest `G ⊗ Φ`, evaluated stably.
pub fn distance(u: &CMatrix, g: &CMatrix, d_s: usize, d_b: usize) -> Result<f64, MetricsError> {
    check_dims(u, g, d_s, d_b)?;
    let w = DdMatrix::from_cmatrix(&relative_to_target(u, g, d_b));
    Ok(distance_from_blocks(&w, d_s))
}

/// Distance by the literal closed form `sqrt(max(0, 1 - ‖Γ‖_Tr / d))`.
pub fn distance_trace_norm(u: &CMatrix, g: &CMatrix, d_s: usize, d_b: usize) -> Result<f64, MetricsError> {
    check_dims(u, g, d_s, d_b)?;
    let gamma = partial_trace_system(&relative_to_target(u, g, d_b), d_s, d_b)?;
    let d = (d_s * d_b) as f64;
    Ok((1.0 - trace_norm(&gamma) / d).max(0.0).sqrt())
}

/// `‖U - G ⊗ Φ‖_F / sqrt(2d)` for a given bath unitary `Φ`.
pub fn frobenius_objective(u: &CMatrix, g: &CMatrix, phi: &CMatrix) -> f64 {
    let d = u.nrows() as f64;
    (u - kron(g, phi)).norm() / (2.0 * d).sqrt()
}

/// The minimizing bath unitary `Φ = W V^†` from the SVD `Γ = W Σ V^†`.
pub fn optimal_bath_unitary(u: &CMatrix, g: &CMatrix, d_s: usize, d_b: usize) -> Result<CMatrix, MetricsError> {
    check_dims(u, g, d_s, d_b)?;
    let gamma = partial_trace_system(&relative_to_target(u, g, d_b), d_s, d_b)?;
    let svd = gamma.svd(true, true);
    let w = svd.u.ok_or(LinalgError::NoConvergence)?;
    let vt = svd.v_t.ok_or(LinalgError::NoConvergence)?;
    Ok(w * vt)
}

/// Frobenius objective evaluated at the optimal bath unitary.
pub fn distance_at_minimizer(u: &CMatrix, g: &CMatrix, d_s: usize, d_b: usize) -> Result<f64, MetricsError> {
    let phi = optimal_bath_unitary(u, g, d_s, d_b)?;
    Ok(frobenius_objective(u, g, &phi))
}

/// Precise distance of one cycle of `seq` from the system identity.
pub fn evaluate(seq: &Sequence, sys: &SystemModel, model: &PulseModel) -> Result<DistanceReport, ModelError> {
    evaluate_against(seq, sys, model, &MAT2_ID)
}

/// Precise distance of one cycle of `seq` from the system gate `g`.
pub fn evaluate_against(
    seq: &Sequence,
    sys: &SystemModel,
    model: &PulseModel,
    g: &Mat2,
) -> Result<DistanceReport, ModelError> {
    let p = cycle_propagator(seq, sys, model)?;
    let c = p.ideal;
    let prop_to_identity = c[0][1].norm() == 0.0 && c[1][0].norm() == 0.0 && c[0][0] == c[1][1];
    let is_identity_target = *g == MAT2_ID;
    let w = if prop_to_identity && is_identity_target {
        // A global phase does not change D.
        p.toggling
    } else {
        let g_adj = [[g[0][0].conj(), g[1][0].conj()], [g[0][1].conj(), g[1][1].conj()]];
        p.toggling.system_left_mul(&c).system_right_mul(&g_adj)
    };
    Ok(DistanceReport::new(distance_from_blocks(&w, sys.d_s), p.tau_c))
}

/// `N = log10(D) / log10((J+β) τ_c) - 1`.
pub fn decoupling_order(d: f64, j: f64, beta: f64, tau_c: f64) -> Result<f64, MetricsError> {
    let x = (j + beta) * tau_c;
    if !(x > 0.0 && x < 1.0) {
        return Err(MetricsError::InvalidInput(format!("(J+β)τ_c = {x} must lie in (0, 1)")));
    }
    if !(d > 0.0 && d < 1.0) {
        return Err(MetricsError::InvalidInput(format!("D = {d} must lie in (0, 1)")));
    }
    Ok(d.log10() / x.log10() - 1.0)
}

/// Upper bound on `D` for a cyclic ideal sequence with `(J+β)τ_c = x`.
pub fn magnus_bound(x: f64) -> f64 {
    x.exp_m1() / std::f64::consts::SQRT_2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffHamReport {
    /// Sup-norms of the averaged `B̄_x, B̄_y, B̄_z`.
    pub channel_norms: [f64; 3],
    /// Sup-norm of the traceless part of the averaged pure-bath term.
    pub bath_norm: f64,
    /// Sup-norm of everything that acts nontrivially on the system.
    pub err_norm: f64,
}

impl EffHamReport {
    pub fn max_channel_norm(&self) -> f64 {
        self.channel_norms.iter().cloned().fold(0.0, f64::max)
    }
}

/// Decompose the effective Hamiltonian `H̄ = i log(U) / τ_c` into system
/// channels `H̄ = Σ_μ σ^μ ⊗ B̄_μ`.
pub fn effective_error_hamiltonian(
    u: &CMatrix,
    tau_c: f64,
    d_s: usize,
    d_b: usize,
) -> Result<EffHamReport, MetricsError> {
    if d_s != 2 {
        return Err(MetricsError::Dimension("channel decomposition needs a qubit system".into()));
    }
    if u.shape() != (d_s * d_b, d_s * d_b) {
        return Err(MetricsError::Dimension(format!("U is {}x{}", u.nrows(), u.ncols())));
    }
    if !(tau_c > 0.0) {
        return Err(MetricsError::InvalidInput(format!("tau_c = {tau_c} must be > 0")));
    }
    // Remove the global phase so an overall ±1 or ±i does not sit on the branch cut.
    let tr = u.trace();
    let u = if tr.norm() > 1e-8 {
        u * Complex64::from_polar(1.0, -tr.arg())
    } else {
        u.clone()
    };
    let h = unitary_logm(&u)? / c(tau_c, 0.0);
    let channel = |mu: Pauli| -> Result<CMatrix, MetricsError> {
        let p = kron(&pauli(mu), &identity(d_b));
        Ok(partial_trace_system(&(p * &h), d_s, d_b)? * c(0.5, 0.0))
    };
    let b_i = channel(Pauli::I)?;
    let mut norms = [0.0; 3];
    for (k, mu) in [Pauli::X, Pauli::Y, Pauli::Z].into_iter().enumerate() {
        norms[k] = sup_norm(&channel(mu)?);
    }
    let mean = b_i.trace() / c(d_b as f64, 0.0);
    let traceless = &b_i - identity(d_b) * mean;
    let err = &h - kron(&identity(d_s), &b_i);
    Ok(EffHamReport {
        channel_norms: norms,
        bath_norm: sup_norm(&traceless),
        err_norm: sup_norm(&err),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Least-squares line through `(log10 x, log10 y)`.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit, MetricsError> {
    if points.len() < 4 {
        return Err(MetricsError::InvalidInput(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(MetricsError::InvalidInput(format!("non-positive point ({}, {})", p.0, p.1)));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let span = lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - lx.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(span > 1e-9) {
        return Err(MetricsError::InvalidInput("degenerate x range".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        n_points: points.len(),
    })
}

/// Geometric mean of positive values with the standard error of `log10`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoStats {
    pub mean: f64,
    pub log10_stderr: f64,
    pub n: usize,
}

pub fn geometric_stats(values: &[f64]) -> Option<GeoStats> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let logs: Vec<f64> = values.iter().map(|v| v.log10()).collect();
    let n = logs.len() as f64;
    let m = logs.iter().sum::<f64>() / n;
    let stderr = if logs.len() > 1 {
        (logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Some(GeoStats {
        mean: 10f64.powf(m),
        log10_stderr: stderr,
        n: logs.len(),
    })
}

/// Which of `J`, `β` is the dominant strength in an exponent sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `J = 1e-3 β`.
    JMuchLessBeta,
    /// `β = 1e-3 J`.
    JMuchGreaterBeta,
}

impl Regime {
    /// `(J, β)` for the dominant strength `s`.
    pub fn strengths(self, s: f64) -> (f64, f64) {
        match self {
            Regime::JMuchLessBeta => (1e-3 * s, s),
            Regime::JMuchGreaterBeta => (s, 1e-3 * s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    /// Decoupling order, one less than the `τ_d` slope.
    pub n: f64,
    pub n_j: f64,
    pub n_beta: f64,
}

/// Exponents from a `τ_d` sweep and a `J` sweep (other parameters fixed):
/// `N + 1` is the `τ_d` slope, `n_J` the `J` slope, and `n_β = N + 1 - n_J`.
pub fn extract_exponents(tau_sweep: &[(f64, f64)], j_sweep: &[(f64, f64)]) -> Result<Exponents, MetricsError> {
    let tau = fit_scaling(tau_sweep)?;
    let j = fit_scaling(j_sweep)?;
    Ok(Exponents {
        n: tau.slope - 1.0,
        n_j: j.slope,
        n_beta: tau.slope - j.slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{herm_expm, max_abs_diff};
    use crate::model::{BathSpec, PulseLabel};
    use crate::sequence::{propagate, xy4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (&a + a.adjoint()).scale(0.5)
    }

    fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        herm_expm(&random_hermitian(n, rng), 1.0).unwrap()
    }

    #[test]
    fn factorized_unitary_has_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_unitary(2, &mut rng);
        let phi = random_unitary(4, &mut rng);
        let u = kron(&g, &phi);
        assert!(distance(&u, &g, 2, 4).unwrap() < 1e-14);
        assert!(distance_trace_norm(&u, &g, 2, 4).unwrap() < 1e-7);
    }

    #[test]
    fn orthogonal_case_has_unit_distance() {
        let u = kron(&(pauli(Pauli::X) * c(0.0, -1.0)), &identity(4));
        let g = identity(2);
        assert!((distance(&u, &g, 2, 4).unwrap() - 1.0).abs() < 1e-14);
        assert!((distance_trace_norm(&u, &g, 2, 4).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stable_and_literal_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d_b in [2, 4, 8] {
            let u = random_unitary(2 * d_b, &mut rng);
            let g = random_unitary(2, &mut rng);
            let a = distance(&u, &g, 2, d_b).unwrap();
            let b = distance_trace_norm(&u, &g, 2, d_b).unwrap();
            let m = distance_at_minimizer(&u, &g, 2, d_b).unwrap();
            assert!((a - b).abs() < 1e-12);
            assert!((a - m).abs() < 1e-12);
        }
    }

    #[test]
    fn minimizer_beats_random_bath_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_unitary(4, &mut rng);
        let g = identity(2);
        let d = distance(&u, &g, 2, 2).unwrap();
        for _ in 0..2000 {
            let phi = random_unitary(2, &mut rng);
            assert!(d <= frobenius_objective(&u, &g, &phi) + 1e-12);
        }
    }

    #[test]
    fn small_distances_resolved_below_double_precision() {
        // U = exp(-i ε σx ⊗ B): D is linear in ε far below 1e-8.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_hermitian(4, &mut rng);
        let h = kron(&pauli(Pauli::X), &b);
        let d1 = distance(&herm_expm(&h, 1e-6).unwrap(), &identity(2), 2, 4).unwrap();
        let d2 = distance(&herm_expm(&h, 1e-7).unwrap(), &identity(2), 2, 4).unwrap();
        assert!((d1 / d2 - 10.0).abs() < 1e-3, "{d1} {d2}");
    }

    #[test]
    fn invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_unitary(8, &mut rng);
        let g = identity(2);
        let d = distance(&u, &g, 2, 4).unwrap();
        let phased = &u * Complex64::from_polar(1.0, 0.7);
        assert!((distance(&phased, &g, 2, 4).unwrap() - d).abs() < 1e-13);
        let v = random_unitary(4, &mut rng);
        let rotated = &u * kron(&identity(2), &v);
        assert!((distance(&rotated, &g, 2, 4).unwrap() - d).abs() < 1e-13);
    }

    #[test]
    fn dimension_errors() {
        let u = identity(8);
        assert!(distance(&u, &identity(2), 2, 2).is_err());
        assert!(distance(&u, &identity(3), 2, 4).is_err());
    }

    #[test]
    fn fitness_floor() {
        assert_eq!(fitness(0.0), 15.0);
        assert!((fitness(1e-3) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn decoupling_order_inversion() {
        let (j, b, t) = (1e-3, 1e-6, 10.0);
        let x: f64 = (j + b) * t;
        assert!((decoupling_order(x.powi(2), j, b, t).unwrap() - 1.0).abs() < 1e-12);
        assert!((decoupling_order(x.powi(6), j, b, t).unwrap() - 5.0).abs() < 1e-12);
        assert!(decoupling_order(0.5, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn xy4_is_first_order() {
        // The τ_d slope of D is N + 1.
        let spec = BathSpec::new(4, 7, 1e-3, 1e-6).unwrap();
        let sys = SystemModel::random(&spec).unwrap();
        let r1 = evaluate(&xy4(0.1), &sys, &PulseModel::Ideal).unwrap();
        let r2 = evaluate(&xy4(1.0), &sys, &PulseModel::Ideal).unwrap();
        let n = (r2.d / r1.d).log10() - 1.0;
        assert!((n - 1.0).abs() < 0.05, "N = {n}");
        // The one-point formula carries the log of the O(1) prefactor.
        let literal = decoupling_order(r1.d, 1e-3, 1e-6, r1.tau_c).unwrap();
        assert!(literal > 1.0 && literal < 2.0);
    }

    #[test]
    fn evaluate_matches_f64_distance_at_large_d() {
        let spec = BathSpec::new(4, 8, 0.2, 0.1).unwrap();
        let sys = SystemModel::random(&spec).unwrap();
        let seq = crate::sequence::ga8a(PulseLabel::X, PulseLabel::Y, 0.5).unwrap();
        let (u, tc) = propagate(&seq, &sys, &PulseModel::Ideal).unwrap();
        let r = evaluate(&seq, &sys, &PulseModel::Ideal).unwrap();
        assert!((r.tau_c - tc).abs() < 1e-15);
        assert!((r.d - distance_trace_norm(&u, &identity(2), 2, 16).unwrap()).abs() < 1e-9);
        // Non-identity target.
        let gx: Mat2 = PulseLabel::X.ideal_2x2();
        let rx = evaluate_against(&seq, &sys, &PulseModel::Ideal, &gx).unwrap();
        assert!((rx.d - 1.0).abs() < 1e-3);
    }

    #[test]
    fn effective_hamiltonian_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hb = random_hermitian(4, &mut rng);
        let hb = &hb - identity(4) * (hb.trace() / c(4.0, 0.0));
        let tc = 0.3;
        let u = herm_expm(&kron(&identity(2), &hb), tc).unwrap();
        let r = effective_error_hamiltonian(&u, tc, 2, 4).unwrap();
        assert!(r.max_channel_norm() < 1e-12);
        assert!((r.bath_norm - sup_norm(&hb)).abs() < 1e-12);
        let b = random_hermitian(4, &mut rng).scale(0.5);
        let u = herm_expm(&kron(&pauli(Pauli::X), &b), tc).unwrap();
        let r = effective_error_hamiltonian(&u, tc, 2, 4).unwrap();
        assert!((r.channel_norms[0] - sup_norm(&b)).abs() < 1e-12);
        assert!(r.channel_norms[1] < 1e-12 && r.channel_norms[2] < 1e-12);
        assert!((r.err_norm - sup_norm(&b)).abs() < 1e-12);
        // Phase -1 (as from a sequence whose ideal pulses multiply to -I).
        let r2 = effective_error_hamiltonian(&(-u.clone()), tc, 2, 4).unwrap();
        assert!(max_abs_diff(
            &CMatrix::from_row_slice(1, 3, &r.channel_norms.map(|x| c(x, 0.0))),
            &CMatrix::from_row_slice(1, 3, &r2.channel_norms.map(|x| c(x, 0.0)))
        ) < 1e-12);
    }

    #[test]
    fn scaling_fit_cases() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| {
            let x = 10f64.powf(-3.0 + 0.3 * k as f64);
            (x, 2.5 * x.powi(3))
        }).collect();
        let f = fit_scaling(&pts).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, 0.1)).collect();
        assert!(fit_scaling(&flat).unwrap().slope.abs() < 1e-12);
        assert!(fit_scaling(&pts[..3]).is_err());
        assert!(fit_scaling(&[(1.0, 1.0); 5]).is_err());
        assert!(fit_scaling(&[(1.0, 1.0), (2.0, -1.0), (3.0, 1.0), (4.0, 1.0)]).is_err());
    }

    #[test]
    fn exponents_from_synthetic_power_law() {
        // D = J² β τ_d³
        let (j0, b0, t0) = (1e-3, 1e-2, 0.1);
        let tau: Vec<(f64, f64)> = (0..8).map(|k| {
            let t = t0 * 10f64.powf(k as f64 / 4.0);
            (t, j0 * j0 * b0 * t.powi(3))
        }).collect();
        let js: Vec<(f64, f64)> = (0..8).map(|k| {
            let j = j0 * 10f64.powf(k as f64 / 4.0);
            (j, j * j * b0 * t0.powi(3))
        }).collect();
        let e = extract_exponents(&tau, &js).unwrap();
        assert!((e.n - 2.0).abs() < 1e-9 && (e.n_j - 2.0).abs() < 1e-9 && (e.n_beta - 1.0).abs() < 1e-9);
    }

    #[test]
    fn geometric_stats_basic() {
        let s = geometric_stats(&[1e-3, 1e-5]).unwrap();
        assert!((s.mean - 1e-4).abs() < 1e-16);
        assert!((s.log10_stderr - 1.0).abs() < 1e-12);
        assert!(geometric_stats(&[]).is_none());
        assert!(geometric_stats(&[0.0]).is_none());
    }
}
