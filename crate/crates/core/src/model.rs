//! Random spin-bath Hamiltonians and control-pulse unitaries.
//!
//! The system qubit is the leftmost tensor factor. Angular frequencies are in
//! rad/ns and times in ns.

use crate::dd::{Dd, DdMatrix};
use crate::linalg::{
    c, embed, herm_eigh, herm_expm, identity, kron, pauli, sup_norm, CMatrix, LinalgError, Pauli,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid bath specification: {0}")]
    InvalidSpec(String),
    #[error("raw {0} operator has zero norm but a nonzero strength was requested")]
    ZeroNorm(&'static str),
    #[error("pulse {label} is not available under the {model} pulse model")]
    LabelNotAllowed { label: PulseLabel, model: String },
    #[error("invalid pulse model: {0}")]
    InvalidPulseModel(String),
    #[error("invalid system model document: {0}")]
    Document(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Parameters of one random bath realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub n_spins: usize,
    pub seed: u64,
    /// Error-Hamiltonian strength `‖H_err‖` (rad/ns).
    #[serde(rename = "J")]
    pub j: f64,
    /// Pure-bath strength `‖H_B‖` (rad/ns).
    pub beta: f64,
}

impl BathSpec {
    pub fn new(n_spins: usize, seed: u64, j: f64, beta: f64) -> Result<BathSpec, ModelError> {
        let spec = BathSpec {
            n_spins,
            seed,
            j,
            beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_spins != 4 && self.n_spins != 6 {
            return Err(ModelError::InvalidSpec(format!(
                "n_spins must be 4 or 6, got {}",
                self.n_spins
            )));
        }
        self.validate_strengths()
    }

    fn validate_strengths(&self) -> Result<(), ModelError> {
        if !(self.j.is_finite() && self.j >= 0.0) {
            return Err(ModelError::InvalidSpec(format!("J must be >= 0, got {}", self.j)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(ModelError::InvalidSpec(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// The four raw bath operators `B_I, B_x, B_y, B_z` (each `2^n × 2^n`).
#[derive(Clone, Debug, PartialEq)]
pub struct BathOperators {
    pub n_spins: usize,
    pub b: [CMatrix; 4],
}

impl BathOperators {
    pub fn get(&self, mu: Pauli) -> &CMatrix {
        &self.b[pauli_index(mu)]
    }
}

fn pauli_index(p: Pauli) -> usize {
    match p {
        Pauli::I => 0,
        Pauli::X => 1,
        Pauli::Y => 2,
        Pauli::Z => 3,
    }
}

/// Uniform `[0, 1)` coefficient `c^μ_{αβ,ij}` from a ChaCha stream selected by
/// the index tuple, so each value is independent of evaluation order.
pub fn bath_coefficient(seed: u64, mu: Pauli, i: usize, j: usize, a: Pauli, b: Pauli) -> f64 {
    let key = ((pauli_index(mu) as u64) << 24)
        | ((i as u64) << 16)
        | ((j as u64) << 8)
        | ((pauli_index(a) as u64) << 4)
        | pauli_index(b) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng.gen::<f64>()
}

/// `B_μ = Σ_{i≠j} Σ_{αβ} c^μ_{αβ,ij} σ^α_i σ^β_j` with coefficients from `coeff`.
///
/// Test hook behind [`build_bath_operators`]; accepts any `n_spins >= 2`.
pub fn build_bath_operators_with<F>(n_spins: usize, coeff: F) -> Result<BathOperators, ModelError>
where
    F: Fn(Pauli, usize, usize, Pauli, Pauli) -> f64,
{
    if n_spins < 2 {
        return Err(ModelError::InvalidSpec("at least two bath spins are required".into()));
    }
    let dim = 1usize << n_spins;
    let mut out: [CMatrix; 4] = std::array::from_fn(|_| CMatrix::zeros(dim, dim));
    let pair_ops: Vec<((Pauli, Pauli), CMatrix)> = Pauli::ALL
        .iter()
        .flat_map(|&a| Pauli::ALL.iter().map(move |&b| (a, b)))
        .map(|(a, b)| ((a, b), kron(&pauli(a), &pauli(b))))
        .collect();
    for i in 0..n_spins {
        for j in 0..n_spins {
            if i == j {
                continue;
            }
            for ((a, b), op) in &pair_ops {
                let weights: Vec<f64> = Pauli::ALL.iter().map(|&mu| coeff(mu, i, j, *a, *b)).collect();
                if weights.iter().all(|&w| w == 0.0) {
                    continue;
                }
                let full = embed(op, &[i, j], n_spins)?;
                for (k, &w) in weights.iter().enumerate() {
                    if w != 0.0 {
                        out[k] += full.scale(w);
                    }
                }
            }
        }
    }
    Ok(BathOperators { n_spins, b: out })
}

/// Random bath operators for a validated spec.
pub fn build_bath_operators(spec: &BathSpec) -> Result<BathOperators, ModelError> {
    spec.validate()?;
    let seed = spec.seed;
    build_bath_operators_with(spec.n_spins, |mu, i, j, a, b| bath_coefficient(seed, mu, i, j, a, b))
}

/// Eigen-decomposition of `H0` with double-double unitary eigenvectors.
pub(crate) struct Spectral {
    pub vals: Vec<f64>,
    pub v: DdMatrix,
    pub v_adj: DdMatrix,
}

/// Immutable system + bath Hamiltonian normalized to strengths `(J, β)`.
pub struct SystemModel {
    pub spec: BathSpec,
    pub d_s: usize,
    pub d_b: usize,
    /// `Σ_μ σ^μ ⊗ B_μ`, scaled to sup-norm `J`.
    pub h_err: CMatrix,
    /// Bath-only Hamiltonian (`d_B × d_B`), scaled to sup-norm `β`.
    pub h_b: CMatrix,
    /// `I_S ⊗ H_B`.
    pub h_b_full: CMatrix,
    pub h0: CMatrix,
    /// Scaled channel operators `B_x, B_y, B_z` (so `h_err = Σ σ^μ ⊗ channels[μ]`).
    pub channels: [CMatrix; 3],
    raw: Option<BathOperators>,
    spectral: OnceLock<Arc<Spectral>>,
    f64_spectral: OnceLock<(Vec<f64>, CMatrix)>,
    pulse_cache: Mutex<HashMap<(String, PulseLabel), Arc<DdMatrix>>>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("spec", &self.spec)
            .field("d_s", &self.d_s)
            .field("d_b", &self.d_b)
            .finish()
    }
}

impl Clone for SystemModel {
    fn clone(&self) -> Self {
        SystemModel::from_parts(
            self.spec,
            self.h_err.clone(),
            self.h_b.clone(),
            self.channels.clone(),
            self.raw.clone(),
        )
    }
}

/// Normalize raw bath operators to the strengths in `spec`.
pub fn assemble(spec: &BathSpec, bath: &BathOperators) -> Result<SystemModel, ModelError> {
    spec.validate_strengths()?;
    if bath.n_spins != spec.n_spins {
        return Err(ModelError::InvalidSpec(format!(
            "bath operators built for {} spins, spec has {}",
            bath.n_spins, spec.n_spins
        )));
    }
    let d_b = 1usize << spec.n_spins;
    let raw_err = [Pauli::X, Pauli::Y, Pauli::Z]
        .iter()
        .fold(CMatrix::zeros(2 * d_b, 2 * d_b), |acc, &mu| {
            acc + kron(&pauli(mu), bath.get(mu))
        });
    let err_norm = sup_norm(&raw_err);
    let err_scale = if spec.j == 0.0 {
        0.0
    } else if err_norm == 0.0 {
        return Err(ModelError::ZeroNorm("error Hamiltonian"));
    } else {
        spec.j / err_norm
    };
    // Drop the all-identity component of B_I: it is a global phase.
    let mut raw_bath = bath.get(Pauli::I).clone();
    let mean = raw_bath.trace() / c(d_b as f64, 0.0);
    for k in 0..d_b {
        raw_bath[(k, k)] -= mean;
    }
    let bath_norm = sup_norm(&raw_bath);
    let bath_scale = if spec.beta == 0.0 {
        0.0
    } else if bath_norm == 0.0 {
        return Err(ModelError::ZeroNorm("pure-bath"));
    } else {
        spec.beta / bath_norm
    };
    let h_err = raw_err.scale(err_scale);
    let h_b = raw_bath.scale(bath_scale);
    let channels = [
        bath.get(Pauli::X).scale(err_scale),
        bath.get(Pauli::Y).scale(err_scale),
        bath.get(Pauli::Z).scale(err_scale),
    ];
    Ok(SystemModel::from_parts(*spec, h_err, h_b, channels, Some(bath.clone())))
}

impl SystemModel {
    fn from_parts(
        spec: BathSpec,
        h_err: CMatrix,
        h_b: CMatrix,
        channels: [CMatrix; 3],
        raw: Option<BathOperators>,
    ) -> SystemModel {
        let d_b = h_b.nrows();
        let h_b_full = kron(&identity(2), &h_b);
        let h0 = &h_err + &h_b_full;
        SystemModel {
            spec,
            d_s: 2,
            d_b,
            h_err,
            h_b,
            h_b_full,
            h0,
            channels,
            raw,
            spectral: OnceLock::new(),
            f64_spectral: OnceLock::new(),
            pulse_cache: Mutex::new(HashMap::new()),
        }
    }

    /// Build and assemble a random bath realization.
    pub fn random(spec: &BathSpec) -> Result<SystemModel, ModelError> {
        assemble(spec, &build_bath_operators(spec)?)
    }

    /// Model from explicit channel operators `B_x, B_y, B_z` and bath Hamiltonian
    /// `H_B`, used as-is without rescaling. `spec.j` and `spec.beta` are
    /// recomputed from the operators.
    pub fn from_operators(channels: [CMatrix; 3], h_b: CMatrix) -> Result<SystemModel, ModelError> {
        let d_b = h_b.nrows();
        if d_b == 0 || !d_b.is_power_of_two() || channels.iter().any(|b| b.shape() != (d_b, d_b)) {
            return Err(ModelError::InvalidSpec("inconsistent operator dimensions".into()));
        }
        let h_err = [Pauli::X, Pauli::Y, Pauli::Z]
            .iter()
            .zip(channels.iter())
            .fold(CMatrix::zeros(2 * d_b, 2 * d_b), |acc, (&mu, b)| acc + kron(&pauli(mu), b));
        let spec = BathSpec {
            n_spins: d_b.trailing_zeros() as usize,
            seed: 0,
            j: sup_norm(&h_err),
            beta: sup_norm(&h_b),
        };
        Ok(SystemModel::from_parts(spec, h_err, h_b, channels, None))
    }

    pub fn dim(&self) -> usize {
        self.d_s * self.d_b
    }

    /// Raw (unscaled) bath operators, when the model was assembled from them.
    pub fn raw_operators(&self) -> Option<&BathOperators> {
        self.raw.as_ref()
    }

    pub(crate) fn f64_eigh(&self) -> &(Vec<f64>, CMatrix) {
        self.f64_spectral
            .get_or_init(|| herm_eigh(&self.h0).expect("H0 is Hermitian by construction"))
    }

    /// `exp(-i H0 t)` in double precision.
    pub fn free_propagator(&self, t: f64) -> CMatrix {
        if t == 0.0 {
            return identity(self.dim());
        }
        let (vals, v) = self.f64_eigh();
        crate::linalg::spectral_propagator(vals, v, t)
    }

    pub(crate) fn spectral(&self) -> Arc<Spectral> {
        self.spectral
            .get_or_init(|| {
                let (vals, v) = self.f64_eigh();
                let v = DdMatrix::from_cmatrix(v).polish_unitary(2);
                let v_adj = v.adjoint();
                Arc::new(Spectral {
                    vals: vals.clone(),
                    v,
                    v_adj,
                })
            })
            .clone()
    }

    pub(crate) fn cached_pulse_factor<F>(&self, key: (String, PulseLabel), make: F) -> Result<Arc<DdMatrix>, ModelError>
    where
        F: FnOnce() -> Result<DdMatrix, ModelError>,
    {
        if let Some(m) = self.pulse_cache.lock().expect("cache lock").get(&key) {
            return Ok(m.clone());
        }
        let m = Arc::new(make()?);
        self.pulse_cache.lock().expect("cache lock").insert(key, m.clone());
        Ok(m)
    }

    /// JSON document; raw operators are included when `include_raw` is set and available.
    pub fn to_document(&self, include_raw: bool) -> SystemModelDoc {
        let raw = if include_raw {
            self.raw.as_ref().map(|r| RawOperatorsDoc {
                b_i: matrix_to_pairs(&r.b[0]),
                b_x: matrix_to_pairs(&r.b[1]),
                b_y: matrix_to_pairs(&r.b[2]),
                b_z: matrix_to_pairs(&r.b[3]),
            })
        } else {
            None
        };
        SystemModelDoc {
            seed: self.spec.seed,
            n_spins: self.spec.n_spins,
            j: self.spec.j,
            beta: self.spec.beta,
            raw,
        }
    }

    /// Rebuild a model from its JSON document. Without raw operators the bath is
    /// regenerated from the seed.
    pub fn from_document(doc: &SystemModelDoc) -> Result<SystemModel, ModelError> {
        let spec = BathSpec {
            n_spins: doc.n_spins,
            seed: doc.seed,
            j: doc.j,
            beta: doc.beta,
        };
        match &doc.raw {
            None => SystemModel::random(&spec),
            Some(raw) => {
                let d_b = 1usize << doc.n_spins;
                let b = [
                    pairs_to_matrix(&raw.b_i, d_b)?,
                    pairs_to_matrix(&raw.b_x, d_b)?,
                    pairs_to_matrix(&raw.b_y, d_b)?,
                    pairs_to_matrix(&raw.b_z, d_b)?,
                ];
                assemble(
                    &spec,
                    &BathOperators {
                        n_spins: doc.n_spins,
                        b,
                    },
                )
            }
        }
    }
}

/// Serializable description of a [`SystemModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModelDoc {
    pub seed: u64,
    pub n_spins: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawOperatorsDoc>,
}

/// Raw bath operators as row-major `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawOperatorsDoc {
    pub b_i: Vec<[f64; 2]>,
    pub b_x: Vec<[f64; 2]>,
    pub b_y: Vec<[f64; 2]>,
    pub b_z: Vec<[f64; 2]>,
}

fn matrix_to_pairs(m: &CMatrix) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push([m[(i, j)].re, m[(i, j)].im]);
        }
    }
    out
}

fn pairs_to_matrix(p: &[[f64; 2]], n: usize) -> Result<CMatrix, ModelError> {
    if p.len() != n * n {
        return Err(ModelError::Document(format!(
            "expected {} entries, found {}",
            n * n,
            p.len()
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| c(p[i * n + j][0], p[i * n + j][1])))
}

/// Pulse symbol. `b` suffix = phase-reversed (barred) pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PulseLabel {
    I,
    X,
    Y,
    Z,
    Xb,
    Yb,
    Zb,
}

impl PulseLabel {
    pub const ALL: [PulseLabel; 7] = [
        PulseLabel::I,
        PulseLabel::X,
        PulseLabel::Y,
        PulseLabel::Z,
        PulseLabel::Xb,
        PulseLabel::Yb,
        PulseLabel::Zb,
    ];

    pub fn axis(self) -> Pauli {
        match self {
            PulseLabel::I => Pauli::I,
            PulseLabel::X | PulseLabel::Xb => Pauli::X,
            PulseLabel::Y | PulseLabel::Yb => Pauli::Y,
            PulseLabel::Z | PulseLabel::Zb => Pauli::Z,
        }
    }

    pub fn is_barred(self) -> bool {
        matches!(self, PulseLabel::Xb | PulseLabel::Yb | PulseLabel::Zb)
    }

    pub fn is_identity(self) -> bool {
        self == PulseLabel::I
    }

    /// Label with the given axis and bar.
    pub fn from_axis(axis: Pauli, barred: bool) -> PulseLabel {
        match (axis, barred) {
            (Pauli::I, _) => PulseLabel::I,
            (Pauli::X, false) => PulseLabel::X,
            (Pauli::Y, false) => PulseLabel::Y,
            (Pauli::Z, false) => PulseLabel::Z,
            (Pauli::X, true) => PulseLabel::Xb,
            (Pauli::Y, true) => PulseLabel::Yb,
            (Pauli::Z, true) => PulseLabel::Zb,
        }
    }

    /// Phase-reversed partner (`X <-> Xb`); `I` maps to itself.
    pub fn bar(self) -> PulseLabel {
        PulseLabel::from_axis(self.axis(), !self.is_barred())
    }

    /// Unbarred label with the same axis.
    pub fn unbarred(self) -> PulseLabel {
        PulseLabel::from_axis(self.axis(), false)
    }

    /// Two-bit Pauli code (bit 0 = x, bit 1 = z): products ignoring phase are XOR.
    pub fn code(self) -> u8 {
        pauli_code(self.axis())
    }

    /// Ideal 2x2 operator: `-iσ^μ` (unbarred), `+iσ^μ` (barred), identity for `I`.
    pub fn ideal_2x2(self) -> [[Complex64; 2]; 2] {
        let s = if self.is_barred() { 1.0 } else { -1.0 };
        let z = c(0.0, 0.0);
        let i = c(0.0, s);
        match self.axis() {
            Pauli::I => [[c(1.0, 0.0), z], [z, c(1.0, 0.0)]],
            Pauli::X => [[z, i], [i, z]],
            Pauli::Y => [[z, c(s, 0.0)], [c(-s, 0.0), z]],
            Pauli::Z => [[i, z], [z, -i]],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PulseLabel::I => "I",
            PulseLabel::X => "X",
            PulseLabel::Y => "Y",
            PulseLabel::Z => "Z",
            PulseLabel::Xb => "Xb",
            PulseLabel::Yb => "Yb",
            PulseLabel::Zb => "Zb",
        }
    }
}

pub(crate) fn pauli_code(p: Pauli) -> u8 {
    match p {
        Pauli::I => 0,
        Pauli::X => 1,
        Pauli::Z => 2,
        Pauli::Y => 3,
    }
}

pub(crate) fn pauli_from_code(code: u8) -> Pauli {
    match code & 3 {
        0 => Pauli::I,
        1 => Pauli::X,
        2 => Pauli::Z,
        _ => Pauli::Y,
    }
}

impl fmt::Display for PulseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PulseLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PulseLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown pulse label '{s}' (expected one of I,X,Y,Z,Xb,Yb,Zb)"))
    }
}

/// Control-pulse error model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseModel {
    Ideal,
    FiniteWidth { tau_p: f64 },
    FlipAngle { epsilon: f64 },
    FiniteWidthFlipAngle { tau_p: f64, epsilon: f64 },
}

impl PulseModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidPulseModel(m));
        if let Some(tp) = self.tau_p() {
            if !(tp.is_finite() && tp > 0.0) {
                return bad(format!("tau_p must be > 0, got {tp}"));
            }
        }
        let eps = self.epsilon();
        if !(eps.is_finite() && eps > -1.0 && eps < 1.0) {
            return bad(format!("epsilon must lie in (-1, 1), got {eps}"));
        }
        Ok(())
    }

    pub fn tau_p(&self) -> Option<f64> {
        match *self {
            PulseModel::FiniteWidth { tau_p } | PulseModel::FiniteWidthFlipAngle { tau_p, .. } => Some(tau_p),
            _ => None,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match *self {
            PulseModel::FlipAngle { epsilon } | PulseModel::FiniteWidthFlipAngle { epsilon, .. } => epsilon,
            _ => 0.0,
        }
    }

    /// Time consumed by one pulse.
    pub fn pulse_duration(&self) -> f64 {
        self.tau_p().unwrap_or(0.0)
    }

    pub fn name(&self) -> &'static str {
        match self {
            PulseModel::Ideal => "ideal",
            PulseModel::FiniteWidth { .. } => "finite-width",
            PulseModel::FlipAngle { .. } => "flip-angle",
            PulseModel::FiniteWidthFlipAngle { .. } => "finite-width-flip-angle",
        }
    }

    /// Key that identifies the pulse unitaries of this model (for caching).
    pub(crate) fn cache_key(&self) -> String {
        format!(
            "{}:{:016x}:{:016x}",
            self.name(),
            self.pulse_duration().to_bits(),
            self.epsilon().to_bits()
        )
    }

    /// Whether `label` can be executed under this model. Barred labels are
    /// accepted under `Ideal` (global phase only).
    pub fn accepts(&self, label: PulseLabel) -> bool {
        match self {
            PulseModel::FlipAngle { .. } => !label.is_identity(),
            _ => true,
        }
    }
}

impl fmt::Display for PulseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PulseModel::Ideal => write!(f, "ideal"),
            PulseModel::FiniteWidth { tau_p } => write!(f, "finite-width(tau_p={tau_p})"),
            PulseModel::FlipAngle { epsilon } => write!(f, "flip-angle(epsilon={epsilon})"),
            PulseModel::FiniteWidthFlipAngle { tau_p, epsilon } => {
                write!(f, "finite-width-flip-angle(tau_p={tau_p}, epsilon={epsilon})")
            }
        }
    }
}

/// Search alphabet of a pulse model.
pub fn pulse_set(model: &PulseModel) -> Vec<PulseLabel> {
    use PulseLabel::*;
    match model {
        PulseModel::Ideal => vec![I, X, Y, Z],
        PulseModel::FlipAngle { .. } => vec![X, Y, Z, Xb, Yb, Zb],
        _ => PulseLabel::ALL.to_vec(),
    }
}

fn ideal_full(label: PulseLabel, d_b: usize) -> CMatrix {
    let g = label.ideal_2x2();
    let g = CMatrix::from_row_slice(2, 2, &[g[0][0], g[0][1], g[1][0], g[1][1]]);
    kron(&g, &identity(d_b))
}

/// `exp(-i θ s σ^μ)` as a 2x2 matrix.
fn rotation_2x2(axis: Pauli, theta: f64) -> CMatrix {
    let (cs, sn) = (theta.cos(), theta.sin());
    identity(2).scale(cs) + pauli(axis) * c(0.0, -sn)
}

/// Lab-frame unitary and elapsed time of one pulse.
pub fn pulse_unitary(
    label: PulseLabel,
    model: &PulseModel,
    sys: &SystemModel,
) -> Result<(CMatrix, f64), ModelError> {
    model.validate()?;
    if !model.accepts(label) {
        return Err(ModelError::LabelNotAllowed {
            label,
            model: model.to_string(),
        });
    }
    let d_b = sys.d_b;
    let sign = if label.is_barred() { -1.0 } else { 1.0 };
    match *model {
        PulseModel::Ideal => Ok((ideal_full(label, d_b), 0.0)),
        PulseModel::FlipAngle { epsilon } => {
            let theta = sign * std::f64::consts::FRAC_PI_2 * (1.0 + epsilon);
            Ok((kron(&rotation_2x2(label.axis(), theta), &identity(d_b)), 0.0))
        }
        PulseModel::FiniteWidth { tau_p } | PulseModel::FiniteWidthFlipAngle { tau_p, .. } => {
            let amp = std::f64::consts::FRAC_PI_2 / tau_p * (1.0 + model.epsilon());
            let h = if label.is_identity() {
                sys.h0.clone()
            } else {
                kron(&pauli(label.axis()), &identity(d_b)).scale(amp * sign) + &sys.h0
            };
            Ok((herm_expm(&h, tau_p)?, tau_p))
        }
    }
}

/// Double-double error factor `e = P_ideal^† P` of a pulse, so that the physical
/// pulse is `P = P_ideal · e`. Returns `None` when `e` is exactly the identity.
pub(crate) fn pulse_error_factor(
    label: PulseLabel,
    model: &PulseModel,
    sys: &SystemModel,
) -> Result<Option<Arc<DdMatrix>>, ModelError> {
    let n = sys.dim();
    match *model {
        PulseModel::Ideal => Ok(None),
        PulseModel::FlipAngle { epsilon } => {
            if label.is_identity() || epsilon == 0.0 {
                return Ok(None);
            }
            sys.cached_pulse_factor((model.cache_key(), label), || {
                // e = exp(∓i (π/2) ε σ^μ), the over-rotation beyond the ideal π pulse.
                let theta = Dd::FRAC_PI_2.mul_f64(epsilon);
                let theta = if label.is_barred() { -theta } else { theta };
                let (cs, sn) = theta.cos_sin();
                Ok(system_rotation_dd(label.axis(), cs, sn, n))
            })
            .map(Some)
        }
        PulseModel::FiniteWidth { .. } | PulseModel::FiniteWidthFlipAngle { .. } => {
            sys.cached_pulse_factor((model.cache_key(), label), || {
                let (p, _) = pulse_unitary(label, model, sys)?;
                let e = ideal_full(label, sys.d_b).adjoint() * p;
                Ok(DdMatrix::from_cmatrix(&e).polish_unitary(2))
            })
            .map(Some)
        }
    }
}

/// `(cos θ) I - i (sin θ) σ^axis`, tensored with the bath identity, in double-double.
fn system_rotation_dd(axis: Pauli, cs: Dd, sn: Dd, n: usize) -> DdMatrix {
    use crate::dd::Cdd;
    let m = n / 2;
    let mut out = DdMatrix::zeros(n);
    let zero = Dd::ZERO;
    for k in 0..m {
        out.set(k, k, Cdd { re: cs, im: zero });
        out.set(m + k, m + k, Cdd { re: cs, im: zero });
        match axis {
            Pauli::X => {
                out.set(k, m + k, Cdd { re: zero, im: -sn });
                out.set(m + k, k, Cdd { re: zero, im: -sn });
            }
            Pauli::Y => {
                // -i sin θ σ^y = [[0, -sin θ], [sin θ, 0]]
                out.set(k, m + k, Cdd { re: -sn, im: zero });
                out.set(m + k, k, Cdd { re: sn, im: zero });
            }
            Pauli::Z => {
                out.set(k, k, Cdd { re: cs, im: -sn });
                out.set(m + k, m + k, Cdd { re: cs, im: sn });
            }
            Pauli::I => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn small_model(seed: u64) -> SystemModel {
        let spec = BathSpec {
            n_spins: 2,
            seed,
            j: 1e-3,
            beta: 1e-6,
        };
        let bath = build_bath_operators_with(2, |mu, i, j, a, b| bath_coefficient(seed, mu, i, j, a, b)).unwrap();
        assemble(&spec, &bath).unwrap()
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = BathSpec::new(4, 17, 1e-3, 1e-6).unwrap();
        let a = build_bath_operators(&spec).unwrap();
        let b = build_bath_operators(&spec).unwrap();
        assert_eq!(a, b);
        let other = build_bath_operators(&BathSpec::new(4, 18, 1e-3, 1e-6).unwrap()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn zero_coefficients_give_zero_operators() {
        let bath = build_bath_operators_with(3, |_, _, _, _, _| 0.0).unwrap();
        for b in &bath.b {
            assert!(b.iter().all(|z| *z == c(0.0, 0.0)));
        }
    }

    #[test]
    fn single_coefficient_matches_hand_kronecker() {
        let bath = build_bath_operators_with(2, |mu, i, j, a, b| {
            if mu == Pauli::X && i == 0 && j == 1 && a == Pauli::X && b == Pauli::Z {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let expect = kron(&pauli(Pauli::X), &pauli(Pauli::Z));
        assert!(max_abs_diff(bath.get(Pauli::X), &expect) < 1e-15);
        assert!(bath.get(Pauli::Y).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn bath_operators_are_hermitian() {
        let bath = build_bath_operators(&BathSpec::new(4, 3, 1.0, 1.0).unwrap()).unwrap();
        for b in &bath.b {
            assert!(crate::linalg::hermitian_defect(b) < 1e-13);
        }
    }

    #[test]
    fn assemble_hits_requested_strengths() {
        let spec = BathSpec::new(4, 5, 1e-3, 1e-6).unwrap();
        let sys = SystemModel::random(&spec).unwrap();
        assert!((sup_norm(&sys.h_err) - 1e-3).abs() / 1e-3 < 1e-10);
        assert!((sup_norm(&sys.h_b) - 1e-6).abs() / 1e-6 < 1e-10);
        assert!(max_abs_diff(&sys.h0, &(&sys.h_err + kron(&identity(2), &sys.h_b))) == 0.0);
        assert_eq!(sys.spec.j, 1e-3);
        assert_eq!(sys.spec.beta, 1e-6);
        // No identity-channel component in H_err.
        let tr = crate::linalg::partial_trace_system(&sys.h_err, 2, 16).unwrap();
        assert!(tr.iter().all(|z| z.norm() < 1e-17));
        // Channel operators reproduce H_err.
        let rebuilt = [Pauli::X, Pauli::Y, Pauli::Z]
            .iter()
            .zip(sys.channels.iter())
            .fold(CMatrix::zeros(32, 32), |acc, (&mu, b)| acc + kron(&pauli(mu), b));
        assert!(max_abs_diff(&rebuilt, &sys.h_err) < 1e-18);
    }

    #[test]
    fn zero_beta_gives_zero_bath_hamiltonian() {
        let spec = BathSpec::new(4, 5, 1e-3, 0.0).unwrap();
        let sys = SystemModel::random(&spec).unwrap();
        assert!(sys.h_b.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn zero_norm_with_nonzero_strength_is_an_error() {
        let bath = build_bath_operators_with(2, |_, _, _, _, _| 0.0).unwrap();
        let spec = BathSpec {
            n_spins: 2,
            seed: 0,
            j: 1e-3,
            beta: 0.0,
        };
        assert!(matches!(assemble(&spec, &bath), Err(ModelError::ZeroNorm(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(BathSpec::new(5, 0, 1e-3, 1e-6).is_err());
        assert!(BathSpec::new(4, 0, -1.0, 1e-6).is_err());
        assert!(BathSpec::new(6, 0, 1e-3, 0.0).is_ok());
    }

    #[test]
    fn pulse_sets() {
        assert_eq!(pulse_set(&PulseModel::Ideal).len(), 4);
        let fa = pulse_set(&PulseModel::FlipAngle { epsilon: 0.1 });
        assert_eq!(fa.len(), 6);
        assert!(!fa.contains(&PulseLabel::I));
        assert_eq!(pulse_set(&PulseModel::FiniteWidthFlipAngle { tau_p: 1.0, epsilon: 0.1 }).len(), 7);
        assert_eq!(pulse_set(&PulseModel::FiniteWidth { tau_p: 1.0 }).len(), 7);
    }

    #[test]
    fn ideal_pulse_squared_is_minus_identity() {
        let sys = small_model(1);
        let (x, t) = pulse_unitary(PulseLabel::X, &PulseModel::Ideal, &sys).unwrap();
        assert_eq!(t, 0.0);
        assert!(max_abs_diff(&(&x * &x), &identity(8).scale(-1.0)) < 1e-15);
        for l in PulseLabel::ALL {
            let g = CMatrix::from_row_slice(2, 2, &l.ideal_2x2().concat());
            let expect = match l.axis() {
                Pauli::I => identity(2),
                ax => pauli(ax) * c(0.0, if l.is_barred() { 1.0 } else { -1.0 }),
            };
            assert!(max_abs_diff(&g, &expect) == 0.0, "{l}");
        }
    }

    #[test]
    fn finite_width_with_zero_hamiltonian_is_ideal() {
        let zero = CMatrix::zeros(4, 4);
        let sys = SystemModel::from_operators([zero.clone(), zero.clone(), zero.clone()], zero).unwrap();
        let model = PulseModel::FiniteWidth { tau_p: 0.7 };
        for l in [PulseLabel::X, PulseLabel::Yb, PulseLabel::Z] {
            let (p, t) = pulse_unitary(l, &model, &sys).unwrap();
            assert_eq!(t, 0.7);
            assert!(max_abs_diff(&p, &ideal_full(l, 4)) < 1e-12);
        }
    }

    #[test]
    fn flip_angle_conjugate_pair_cancels() {
        let sys = small_model(2);
        let model = PulseModel::FlipAngle { epsilon: 0.1 };
        let (x, _) = pulse_unitary(PulseLabel::X, &model, &sys).unwrap();
        let (xb, _) = pulse_unitary(PulseLabel::Xb, &model, &sys).unwrap();
        assert!(max_abs_diff(&(&xb * &x), &identity(8)) < 1e-12);
        assert!(matches!(
            pulse_unitary(PulseLabel::I, &model, &sys),
            Err(ModelError::LabelNotAllowed { .. })
        ));
    }

    #[test]
    fn all_pulses_unitary() {
        let sys = small_model(3);
        for model in [
            PulseModel::Ideal,
            PulseModel::FlipAngle { epsilon: -0.2 },
            PulseModel::FiniteWidth { tau_p: 0.5 },
            PulseModel::FiniteWidthFlipAngle { tau_p: 0.5, epsilon: 0.05 },
        ] {
            for l in pulse_set(&model) {
                let (p, _) = pulse_unitary(l, &model, &sys).unwrap();
                assert!(max_abs_diff(&(p.adjoint() * &p), &identity(8)) < 1e-12);
            }
        }
    }

    #[test]
    fn finite_width_converges_to_ideal() {
        let sys = small_model(4);
        let h0n = sup_norm(&sys.h0);
        for &tp in &[1.0, 0.1, 0.01] {
            let (p, _) = pulse_unitary(PulseLabel::Y, &PulseModel::FiniteWidth { tau_p: tp }, &sys).unwrap();
            let diff = sup_norm(&(p - ideal_full(PulseLabel::Y, sys.d_b)));
            assert!(diff < 10.0 * h0n * tp, "tau_p={tp}: {diff}");
        }
    }

    #[test]
    fn error_factor_reconstructs_pulse() {
        let sys = small_model(5);
        for model in [
            PulseModel::FlipAngle { epsilon: 0.13 },
            PulseModel::FiniteWidthFlipAngle { tau_p: 0.3, epsilon: -0.05 },
        ] {
            for l in [PulseLabel::X, PulseLabel::Yb, PulseLabel::Z] {
                let (p, _) = pulse_unitary(l, &model, &sys).unwrap();
                let e = pulse_error_factor(l, &model, &sys).unwrap().unwrap();
                let rebuilt = ideal_full(l, sys.d_b) * e.to_cmatrix();
                assert!(max_abs_diff(&rebuilt, &p) < 1e-14, "{model} {l}");
            }
        }
    }

    #[test]
    fn document_round_trip() {
        let sys = small_model(6);
        let doc = sys.to_document(true);
        let text = serde_json::to_string(&doc).unwrap();
        let back: SystemModelDoc = serde_json::from_str(&text).unwrap();
        let rebuilt = SystemModel::from_document(&back).unwrap();
        assert_eq!(rebuilt.h0, sys.h0);
        let seeded = SystemModel::random(&BathSpec::new(4, 9, 1e-3, 1e-6).unwrap()).unwrap();
        let doc = seeded.to_document(false);
        assert!(doc.raw.is_none());
        assert_eq!(SystemModel::from_document(&doc).unwrap().h0, seeded.h0);
    }

    #[test]
    fn labels_parse_and_bar() {
        for l in PulseLabel::ALL {
            assert_eq!(l.as_str().parse::<PulseLabel>().unwrap(), l);
            assert_eq!(l.bar().bar(), l);
        }
        assert!("W".parse::<PulseLabel>().is_err());
        assert_eq!(PulseLabel::X.code() ^ PulseLabel::Z.code(), PulseLabel::Y.code());
    }
}
