//! Dense complex linear algebra in double precision: Hermitian exponential,
//! unitary logarithm, norms, partial trace and operator embedding.

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;

/// Relative tolerance on `max|A - A^†|` for Hermitian inputs.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Minimum distance of every eigenphase from `±π` accepted by [`unitary_logm`].
pub const BRANCH_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian (max |A - A^†| = {0:.3e})")]
    NotHermitian(f64),
    #[error("repeated site index {0}")]
    RepeatedSite(usize),
    #[error("site index {site} out of range for {n_spins} spins")]
    SiteOutOfRange { site: usize, n_spins: usize },
    #[error("eigenphase {phase:.9} is within {margin:e} of the logarithm branch cut; shorten the cycle time")]
    BranchAmbiguity { phase: f64, margin: f64 },
    #[error("eigen-solver failed to converge")]
    NoConvergence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// 2x2 Pauli matrix.
pub fn pauli(p: Pauli) -> CMatrix {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match p {
        Pauli::I => CMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        Pauli::X => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        Pauli::Y => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        Pauli::Z => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Kronecker product `a ⊗ b` (a is the leftmost, most significant factor).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

fn check_square(a: &CMatrix, what: &str) -> Result<usize, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::Dimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// Embed a 2x2 or 4x4 operator acting on the given sites of an `n_spins`
/// register; site 0 is the leftmost Kronecker factor.
pub fn embed(op: &CMatrix, sites: &[usize], n_spins: usize) -> Result<CMatrix, LinalgError> {
    let k = sites.len();
    let dim_op = 1usize << k;
    if k == 0 || op.nrows() != dim_op || op.ncols() != dim_op {
        return Err(LinalgError::Dimension(format!(
            "operator of size {}x{} does not act on {} site(s)",
            op.nrows(),
            op.ncols(),
            k
        )));
    }
    for (idx, &s) in sites.iter().enumerate() {
        if s >= n_spins {
            return Err(LinalgError::SiteOutOfRange { site: s, n_spins });
        }
        if sites[..idx].contains(&s) {
            return Err(LinalgError::RepeatedSite(s));
        }
    }
    let dim = 1usize << n_spins;
    let bit = |state: usize, site: usize| (state >> (n_spins - 1 - site)) & 1;
    let mut out = CMatrix::zeros(dim, dim);
    for row in 0..dim {
        for col in 0..dim {
            // Spectator sites must agree.
            let mut spect_ok = true;
            for s in 0..n_spins {
                if !sites.contains(&s) && bit(row, s) != bit(col, s) {
                    spect_ok = false;
                    break;
                }
            }
            if !spect_ok {
                continue;
            }
            let mut r = 0;
            let mut cc = 0;
            for &s in sites {
                r = (r << 1) | bit(row, s);
                cc = (cc << 1) | bit(col, s);
            }
            out[(row, col)] = op[(r, cc)];
        }
    }
    Ok(out)
}

/// Max entrywise `|A - A^†|`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// Symmetrized copy of a matrix that is Hermitian within tolerance.
pub fn hermitian_part(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    check_square(a, "Hermitian input")?;
    let defect = hermitian_defect(a);
    let scale = a.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    if defect > HERMITIAN_TOL * scale {
        return Err(LinalgError::NotHermitian(defect));
    }
    Ok((a + a.adjoint()).scale(0.5))
}

/// Eigen-decomposition of a Hermitian matrix: `(eigenvalues, V)` with `H = V Λ V^†`.
pub fn herm_eigh(h: &CMatrix) -> Result<(Vec<f64>, CMatrix), LinalgError> {
    let h = hermitian_part(h)?;
    let n = h.nrows();
    let eig = SymmetricEigen::try_new(h, 1e-15, 10_000 * n.max(1))
        .ok_or(LinalgError::NoConvergence)?;
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// `exp(-i H t)` via the spectral decomposition of `H`.
pub fn herm_expm(h: &CMatrix, t: f64) -> Result<CMatrix, LinalgError> {
    let (vals, v) = herm_eigh(h)?;
    Ok(spectral_propagator(&vals, &v, t))
}

/// `V diag(exp(-i λ t)) V^†`.
pub fn spectral_propagator(vals: &[f64], v: &CMatrix, t: f64) -> CMatrix {
    let mut vd = v.clone();
    for (j, &l) in vals.iter().enumerate() {
        let ph = Complex64::from_polar(1.0, -l * t);
        let mut col = vd.column_mut(j);
        col *= ph;
    }
    vd * v.adjoint()
}

/// Principal logarithm in the form `H` with `exp(-i H) = U`.
pub fn unitary_logm(u: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = check_square(u, "unitary input")?;
    let schur = Schur::try_new(u.clone(), 1e-15, 100_000).ok_or(LinalgError::NoConvergence)?;
    let (q, t) = schur.unpack();
    let mut phases = Vec::with_capacity(n);
    for i in 0..n {
        let phi = t[(i, i)].arg();
        if std::f64::consts::PI - phi.abs() < BRANCH_MARGIN {
            return Err(LinalgError::BranchAmbiguity {
                phase: phi,
                margin: BRANCH_MARGIN,
            });
        }
        phases.push(phi);
    }
    let mut qd = q.clone();
    for (j, &phi) in phases.iter().enumerate() {
        let mut col = qd.column_mut(j);
        col *= c(-phi, 0.0);
    }
    let h = qd * q.adjoint();
    Ok((&h + h.adjoint()).scale(0.5))
}

pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    a.clone().singular_values().iter().copied().collect()
}

/// Largest singular value.
pub fn sup_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    singular_values(a).into_iter().fold(0.0, f64::max)
}

/// Sum of singular values.
pub fn trace_norm(a: &CMatrix) -> f64 {
    singular_values(a).into_iter().sum()
}

/// `Tr_S` over the first (system) factor of a `d_S·d_B` operator.
pub fn partial_trace_system(m: &CMatrix, d_s: usize, d_b: usize) -> Result<CMatrix, LinalgError> {
    if m.nrows() != d_s * d_b || m.ncols() != d_s * d_b {
        return Err(LinalgError::Dimension(format!(
            "expected {0}x{0}, got {1}x{2}",
            d_s * d_b,
            m.nrows(),
            m.ncols()
        )));
    }
    let mut out = CMatrix::zeros(d_b, d_b);
    for a in 0..d_s {
        out += m.view((a * d_b, a * d_b), (d_b, d_b));
    }
    Ok(out)
}

/// `max |A - B|` entrywise.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let a = random_matrix(n, rng);
        (&a + a.adjoint()).scale(0.5)
    }

    #[test]
    fn embed_single_site_and_ordering() {
        let x = pauli(Pauli::X);
        assert_eq!(embed(&x, &[0], 1).unwrap(), x);
        let z = pauli(Pauli::Z);
        assert_eq!(embed(&z, &[1], 2).unwrap(), kron(&identity(2), &z));
    }

    #[test]
    fn embed_two_sites_matches_kronecker() {
        let op = kron(&pauli(Pauli::X), &pauli(Pauli::Y));
        let got = embed(&op, &[0, 2], 3).unwrap();
        let expect = kron(&kron(&pauli(Pauli::X), &identity(2)), &pauli(Pauli::Y));
        assert!(max_abs_diff(&got, &expect) < 1e-15);
        // Reversed site order swaps the factors.
        let got = embed(&op, &[2, 0], 3).unwrap();
        let expect = kron(&kron(&pauli(Pauli::Y), &identity(2)), &pauli(Pauli::X));
        assert!(max_abs_diff(&got, &expect) < 1e-15);
    }

    #[test]
    fn embed_rejects_bad_sites() {
        let op = kron(&pauli(Pauli::X), &pauli(Pauli::Y));
        assert_eq!(embed(&op, &[1, 1], 3), Err(LinalgError::RepeatedSite(1)));
        assert!(matches!(embed(&op, &[0, 3], 3), Err(LinalgError::SiteOutOfRange { .. })));
        assert!(matches!(embed(&pauli(Pauli::X), &[0, 1], 3), Err(LinalgError::Dimension(_))));
    }

    #[test]
    fn expm_zero_time_and_pauli_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_hermitian(8, &mut rng);
        assert!(max_abs_diff(&herm_expm(&h, 0.0).unwrap(), &identity(8)) < 1e-14);
        let u = herm_expm(&pauli(Pauli::X).scale(std::f64::consts::FRAC_PI_2), 1.0).unwrap();
        let expect = pauli(Pauli::X) * c(0.0, -1.0);
        assert!(max_abs_diff(&u, &expect) < 1e-12);
    }

    #[test]
    fn expm_random_unitary_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_hermitian(32, &mut rng);
        let u = herm_expm(&h, 0.7).unwrap();
        let uinv = herm_expm(&h, -0.7).unwrap();
        assert!(max_abs_diff(&(u.adjoint() * &u), &identity(32)) < 1e-12);
        assert!(max_abs_diff(&(&u * uinv), &identity(32)) < 1e-12);
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let a = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(herm_expm(&a, 1.0), Err(LinalgError::NotHermitian(_))));
    }

    #[test]
    fn logm_identity_and_diagonal() {
        assert!(unitary_logm(&identity(4)).unwrap().iter().all(|z| z.norm() < 1e-15));
        let u = herm_expm(&pauli(Pauli::Z).scale(0.3), 1.0).unwrap();
        let h = unitary_logm(&u).unwrap();
        assert!(max_abs_diff(&h, &pauli(Pauli::Z).scale(0.3)) < 1e-14);
    }

    #[test]
    fn logm_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 8, 32] {
            let h = random_hermitian(n, &mut rng);
            let h = h.scale(2.5 / sup_norm(&h));
            let u = herm_expm(&h, 1.0).unwrap();
            let back = unitary_logm(&u).unwrap();
            assert!(max_abs_diff(&back, &h) < 1e-9, "n={n}");
            assert!(max_abs_diff(&herm_expm(&back, 1.0).unwrap(), &u) < 1e-9);
        }
    }

    #[test]
    fn logm_near_branch_cut_is_rejected() {
        let u = herm_expm(&pauli(Pauli::Z).scale(std::f64::consts::PI - 1e-8), 1.0).unwrap();
        assert!(matches!(unitary_logm(&u), Err(LinalgError::BranchAmbiguity { .. })));
    }

    #[test]
    fn norms_simple_cases() {
        assert!((sup_norm(&pauli(Pauli::X)) - 1.0).abs() < 1e-15);
        assert!((sup_norm(&identity(3).scale(2.5)) - 2.5).abs() < 1e-15);
        assert!((trace_norm(&identity(5)) - 5.0).abs() < 1e-14);
        let d = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0)]);
        assert!((trace_norm(&d) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn trace_norm_matches_sqrt_of_gram_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let a = random_matrix(6, &mut rng);
            let (vals, _) = herm_eigh(&(a.adjoint() * &a)).unwrap();
            let oracle: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
            assert!((trace_norm(&a) - oracle).abs() < 1e-10);
            let smax = vals.iter().cloned().fold(0.0, f64::max).sqrt();
            assert!((sup_norm(&a) - smax).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(2, &mut rng);
        let b = random_matrix(3, &mut rng);
        let pt = partial_trace_system(&kron(&a, &b), 2, 3).unwrap();
        assert!(max_abs_diff(&pt, &(&b * a.trace())) < 1e-14);
        let pt = partial_trace_system(&identity(6), 2, 3).unwrap();
        assert!(max_abs_diff(&pt, &identity(3).scale(2.0)) < 1e-15);
        // Index-summation oracle for d_S = d_B = 2.
        let m = random_matrix(4, &mut rng);
        let pt = partial_trace_system(&m, 2, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let s = m[(i, j)] + m[(2 + i, 2 + j)];
                assert!((pt[(i, j)] - s).norm() < 1e-15);
            }
        }
        assert!(partial_trace_system(&m, 2, 3).is_err());
    }
}
