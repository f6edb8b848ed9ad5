//! Cycle propagators in double-double precision.
//!
//! Each physical pulse is split as `P_j = P_j^ideal · e_j`, with `e_j` the
//! pulse error. Writing `C_j` for the product of the first `j` ideal pulses,
//!
//! ```text
//! U = C_K · Π_j ( C_{j-1}^† e_j f_j C_{j-1} )
//! ```
//!
//! where `f_j = exp(-i H0 τ_j)`. Every toggling-frame factor is a free
//! propagator (and error factor) conjugated by a system Pauli operator, which
//! is exact. Long structured sequences repeat the same sub-words many times,
//! so products of sub-words are memoized after removing a common frame.

use crate::dd::{Cdd, Dd, DdMatrix};
use crate::model::{pulse_error_factor, ModelError, PulseLabel, PulseModel, SystemModel};
use crate::sequence::Sequence;
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::Arc;

pub(crate) type Mat2 = [[Complex64; 2]; 2];

pub(crate) const MAT2_ID: Mat2 = [
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
];

pub(crate) fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Cycle propagator split as `U = (C ⊗ I_B) · W`, with `C` the exact product of
/// the ideal pulses and `W` the toggling-frame product.
pub struct CyclePropagator {
    pub ideal: Mat2,
    pub toggling: DdMatrix,
    pub tau_c: f64,
}

impl CyclePropagator {
    /// Full lab-frame propagator in double-double.
    pub fn full(&self) -> DdMatrix {
        self.toggling.system_left_mul(&self.ideal)
    }

    /// Full lab-frame propagator rounded to `f64`.
    pub fn to_cmatrix(&self) -> crate::linalg::CMatrix {
        self.full().to_cmatrix()
    }
}

/// `V diag(exp(-i λ τ)) V^†` for the double-double spectral factors of `H0`.
fn free_factor(sys: &SystemModel, tau: f64) -> DdMatrix {
    let sp = sys.spectral();
    let n = sp.vals.len();
    if sp.vals.iter().all(|&l| l == 0.0) {
        return DdMatrix::identity(n);
    }
    let mut vd = sp.v.clone();
    for (j, &l) in sp.vals.iter().enumerate() {
        let ph = Cdd::expi_neg(Dd::prod_f64(l, tau));
        for i in 0..n {
            vd.set(i, j, vd.get(i, j) * ph);
        }
    }
    vd.matmul(&sp.v_adj)
}

struct WordProduct<'a> {
    bases: &'a [Arc<DdMatrix>],
    memo: HashMap<Vec<u32>, Arc<DdMatrix>>,
}

impl WordProduct<'_> {
    /// Product of the letters in operator order (last letter leftmost).
    fn product(&mut self, word: &[u32]) -> Arc<DdMatrix> {
        let frame = (word[0] & 3) as u8;
        if frame != 0 {
            let canon: Vec<u32> = word.iter().map(|&l| l ^ frame as u32).collect();
            let m = self.product(&canon);
            return Arc::new(m.pauli_conjugate(frame));
        }
        if word.len() == 1 {
            return self.bases[(word[0] >> 2) as usize].clone();
        }
        if let Some(m) = self.memo.get(word) {
            return m.clone();
        }
        let split = 1usize << (usize::BITS - 1 - (word.len() - 1).leading_zeros());
        let early = self.product(&word[..split]);
        let late = self.product(&word[split..]);
        let m = Arc::new(late.matmul(&early));
        self.memo.insert(word.to_vec(), m.clone());
        m
    }
}

fn check_labels(seq: &Sequence, model: &PulseModel) -> Result<(), ModelError> {
    model.validate()?;
    for s in &seq.steps {
        // Identity slots under zero-width faulty pulses mean "no pulse".
        if !model.accepts(s.pulse) && !s.pulse.is_identity() {
            return Err(ModelError::LabelNotAllowed {
                label: s.pulse,
                model: model.to_string(),
            });
        }
    }
    Ok(())
}

/// Double-double propagator of one sequence cycle.
pub fn cycle_propagator(
    seq: &Sequence,
    sys: &SystemModel,
    model: &PulseModel,
) -> Result<CyclePropagator, ModelError> {
    check_labels(seq, model)?;
    let n = sys.dim();
    // Base factor e_j f_j, keyed by (error-factor label, interval bits).
    let mut base_ids: HashMap<(Option<PulseLabel>, u64), u32> = HashMap::new();
    let mut bases: Vec<Arc<DdMatrix>> = Vec::new();
    let mut free_cache: HashMap<u64, Arc<DdMatrix>> = HashMap::new();
    let mut word: Vec<u32> = Vec::with_capacity(seq.len());
    let mut frame: u8 = 0;
    let mut ideal = MAT2_ID;
    for s in &seq.steps {
        let err = pulse_error_factor(s.pulse, model, sys)?;
        let err_key = err.as_ref().map(|_| s.pulse);
        if err.is_some() || s.interval > 0.0 {
            let key = (err_key, s.interval.to_bits());
            let id = match base_ids.get(&key) {
                Some(&id) => id,
                None => {
                    let free = if s.interval > 0.0 {
                        Some(
                            free_cache
                                .entry(s.interval.to_bits())
                                .or_insert_with(|| Arc::new(free_factor(sys, s.interval)))
                                .clone(),
                        )
                    } else {
                        None
                    };
                    let m = match (&err, free) {
                        (Some(e), Some(f)) => Arc::new(e.matmul(&f)),
                        (Some(e), None) => e.clone(),
                        (None, Some(f)) => f,
                        (None, None) => unreachable!("guarded above"),
                    };
                    let id = bases.len() as u32;
                    bases.push(m);
                    base_ids.insert(key, id);
                    id
                }
            };
            word.push((id << 2) | frame as u32);
        }
        if !s.pulse.is_identity() {
            frame ^= s.pulse.code();
            ideal = mat2_mul(&s.pulse.ideal_2x2(), &ideal);
        }
    }
    let toggling = if word.is_empty() {
        DdMatrix::identity(n)
    } else {
        let mut wp = WordProduct {
            bases: &bases,
            memo: HashMap::new(),
        };
        Arc::try_unwrap(wp.product(&word)).unwrap_or_else(|a| (*a).clone())
    };
    Ok(CyclePropagator {
        ideal,
        toggling,
        tau_c: seq.cycle_time(model),
    })
}
