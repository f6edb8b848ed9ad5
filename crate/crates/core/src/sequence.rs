//! Executable pulse sequences and the named sequence families.
//!
//! Steps are stored in time order: step `j` is a free interval followed by a
//! pulse, and the first step is applied first. Published listings of these
//! families are written as operator products (latest pulse leftmost), so each
//! constructor below lists pulses reversed relative to that notation.
//!
//! A zero interval places a pulse immediately after the previous one.

use crate::model::{pauli_from_code, PulseLabel, PulseModel};
use crate::linalg::Pauli;
use crate::propagator::mat2_mul;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("sequence has no steps")]
    Empty,
    #[error("interval {0} at step {1} is negative or not finite")]
    BadInterval(f64, usize),
    #[error("{0}")]
    InvalidParameters(String),
    #[error("sequence '{0}' violates the cyclic condition (product of ideal pulses is not proportional to identity)")]
    NotCyclic(String),
    #[error("cannot parse token '{token}': {reason}")]
    Parse { token: String, reason: String },
    #[error("unknown sequence family '{0}'")]
    UnknownFamily(String),
}

/// One free interval (ns) followed by one pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub interval: f64,
    pub pulse: PulseLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub steps: Vec<Step>,
    /// Minimum nonzero interval (ns).
    pub tau_d: f64,
    pub name: String,
}

/// How back-to-back (zero-interval) pulse pairs are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergePolicy {
    /// Replace every adjacent pair by [`pauli_merge`] (bars dropped on true products).
    Pauli,
    /// Replace every adjacent pair by the single ideal pulse equal to the
    /// product including its sign, see [`signed_merge`].
    Signed,
    /// Only absorb identity pulses.
    IdentityOnly,
    /// Keep all pulses.
    None,
}

impl MergePolicy {
    /// Merging that leaves the physics of `model` unchanged.
    pub fn exact_for(model: &PulseModel) -> MergePolicy {
        match model {
            PulseModel::Ideal => MergePolicy::Pauli,
            PulseModel::FlipAngle { .. } => MergePolicy::IdentityOnly,
            _ => MergePolicy::None,
        }
    }
}

/// Label whose ideal operator equals `p·q` up to a global phase. Identity is
/// absorbed without touching the other label; a genuine product is unbarred.
pub fn pauli_merge(p: PulseLabel, q: PulseLabel) -> PulseLabel {
    if p.is_identity() {
        return q;
    }
    if q.is_identity() {
        return p;
    }
    PulseLabel::from_axis(pauli_from_code(p.code() ^ q.code()), false)
}

/// The single ideal pulse equal to `later · earlier`, sign included: a product
/// `-iσ` is unbarred and `+iσ` barred. Same-axis products give `I`.
pub fn signed_merge(later: PulseLabel, earlier: PulseLabel) -> PulseLabel {
    if later.is_identity() {
        return earlier;
    }
    if earlier.is_identity() {
        return later;
    }
    let axis = pauli_from_code(later.code() ^ earlier.code());
    if axis == Pauli::I {
        return PulseLabel::I;
    }
    let prod = mat2_mul(&later.ideal_2x2(), &earlier.ideal_2x2());
    let reference = PulseLabel::from_axis(axis, false).ideal_2x2();
    // prod = ± reference; compare on a nonzero entry.
    let (i, j) = if reference[0][0].norm() > 0.5 { (0, 0) } else { (0, 1) };
    let ratio = prod[i][j] / reference[i][j];
    PulseLabel::from_axis(axis, ratio.re < 0.0)
}

/// True iff the ordered product of ideal pulses is proportional to identity.
pub fn cyclic_ok(seq: &Sequence) -> bool {
    pulses_cyclic(seq.steps.iter().map(|s| s.pulse))
}

pub(crate) fn pulses_cyclic<I: IntoIterator<Item = PulseLabel>>(pulses: I) -> bool {
    pulses.into_iter().fold(0u8, |acc, p| acc ^ p.code()) == 0
}

impl Sequence {
    pub fn new(name: impl Into<String>, tau_d: f64, steps: Vec<Step>) -> Result<Sequence, SequenceError> {
        if steps.is_empty() {
            return Err(SequenceError::Empty);
        }
        for (k, s) in steps.iter().enumerate() {
            if !(s.interval.is_finite() && s.interval >= 0.0) {
                return Err(SequenceError::BadInterval(s.interval, k));
            }
        }
        Ok(Sequence {
            steps,
            tau_d,
            name: name.into(),
        })
    }

    /// Fixed-interval sequence: every pulse preceded by one interval `tau_d`.
    pub fn uniform(name: impl Into<String>, tau_d: f64, pulses: &[PulseLabel]) -> Sequence {
        let steps = pulses
            .iter()
            .map(|&p| Step {
                interval: tau_d,
                pulse: p,
            })
            .collect();
        Sequence {
            steps,
            tau_d,
            name: name.into(),
        }
    }

    pub fn pulses(&self) -> Vec<PulseLabel> {
        self.steps.iter().map(|s| s.pulse).collect()
    }

    /// Number of steps (pulse slots, identities included).
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Number of nonzero free intervals.
    pub fn interval_count(&self) -> usize {
        self.steps.iter().filter(|s| s.interval > 0.0).count()
    }

    /// Total free-evolution time.
    pub fn free_time(&self) -> f64 {
        self.steps.iter().map(|s| s.interval).sum()
    }

    /// Cycle time under `model`: free time plus the duration of every executed pulse.
    pub fn cycle_time(&self, model: &PulseModel) -> f64 {
        let tp = model.pulse_duration();
        self.free_time() + tp * self.executed_pulse_count(model) as f64
    }

    /// Pulses that consume time under `model` (identity slots are waits of
    /// length `tau_p` under finite-width models).
    pub fn executed_pulse_count(&self, model: &PulseModel) -> usize {
        match model {
            PulseModel::FiniteWidth { .. } | PulseModel::FiniteWidthFlipAngle { .. } => self.steps.len(),
            _ => self.steps.iter().filter(|s| !s.pulse.is_identity()).count(),
        }
    }

    /// Rescale every interval so the minimum nonzero interval becomes `tau_d`.
    pub fn with_tau_d(&self, tau_d: f64) -> Sequence {
        let f = if self.tau_d > 0.0 { tau_d / self.tau_d } else { 1.0 };
        Sequence {
            steps: self
                .steps
                .iter()
                .map(|s| Step {
                    interval: s.interval * f,
                    pulse: s.pulse,
                })
                .collect(),
            tau_d,
            name: self.name.clone(),
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Sequence {
        self.name = name.into();
        self
    }

    /// Whether all intervals are 0 or `tau_d`.
    pub fn is_fixed_interval(&self) -> bool {
        self.steps
            .iter()
            .all(|s| s.interval == 0.0 || s.interval == self.tau_d)
    }

    /// Combine zero-interval pulse pairs according to `policy`.
    pub fn merged(&self, policy: MergePolicy) -> Sequence {
        let mut out: Vec<Step> = Vec::with_capacity(self.steps.len());
        for &s in &self.steps {
            if s.interval == 0.0 {
                if let Some(prev) = out.last_mut() {
                    let combined = match policy {
                        MergePolicy::Pauli => Some(pauli_merge(s.pulse, prev.pulse)),
                        MergePolicy::Signed => Some(signed_merge(s.pulse, prev.pulse)),
                        MergePolicy::IdentityOnly if s.pulse.is_identity() => Some(prev.pulse),
                        MergePolicy::IdentityOnly if prev.pulse.is_identity() => Some(s.pulse),
                        _ => None,
                    };
                    if let Some(p) = combined {
                        prev.pulse = p;
                        continue;
                    }
                }
            }
            out.push(s);
        }
        Sequence {
            steps: out,
            tau_d: self.tau_d,
            name: self.name.clone(),
        }
    }

    /// Text form: one `interval_ns:LABEL` token per step.
    pub fn to_text(&self) -> String {
        self.steps
            .iter()
            .map(|s| format!("{}:{}", s.interval, s.pulse))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parse the text form. `#` starts a comment running to end of line.
    pub fn parse_text(name: impl Into<String>, text: &str) -> Result<Sequence, SequenceError> {
        let mut steps = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split_whitespace() {
                let (iv, lab) = tok.split_once(':').ok_or_else(|| SequenceError::Parse {
                    token: tok.to_string(),
                    reason: "expected interval_ns:LABEL".into(),
                })?;
                let interval: f64 = iv.parse().map_err(|_| SequenceError::Parse {
                    token: tok.to_string(),
                    reason: format!("'{iv}' is not a number"),
                })?;
                let pulse: PulseLabel = lab.parse().map_err(|e: String| SequenceError::Parse {
                    token: tok.to_string(),
                    reason: e,
                })?;
                steps.push(Step { interval, pulse });
            }
        }
        let tau_d = steps
            .iter()
            .map(|s| s.interval)
            .filter(|&t| t > 0.0)
            .fold(f64::INFINITY, f64::min);
        let tau_d = if tau_d.is_finite() { tau_d } else { 0.0 };
        Sequence::new(name, tau_d, steps)
    }

    /// Identity key for deduplication (pulses and intervals, not the name).
    pub fn key(&self) -> String {
        self.to_text()
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.to_text())
    }
}

fn require_cyclic(seq: &Sequence) -> Result<(), SequenceError> {
    if cyclic_ok(seq) {
        Ok(())
    } else {
        Err(SequenceError::NotCyclic(seq.name.clone()))
    }
}

/// Replace every free interval of `outer` by one full cycle of `inner`; each
/// outer pulse then follows inner's last pulse directly and the pair is
/// combined according to `policy`.
pub fn concatenate(outer: &Sequence, inner: &Sequence, policy: MergePolicy) -> Result<Sequence, SequenceError> {
    require_cyclic(outer)?;
    require_cyclic(inner)?;
    let mut steps = Vec::with_capacity(outer.len() * (inner.len() + 1));
    for s in &outer.steps {
        if s.interval > 0.0 {
            steps.extend_from_slice(&inner.steps);
            steps.push(Step {
                interval: 0.0,
                pulse: s.pulse,
            });
        } else {
            steps.push(*s);
        }
    }
    let seq = Sequence {
        steps,
        tau_d: inner.tau_d,
        name: format!("{}[{}]", outer.name, inner.name),
    };
    Ok(seq.merged(policy))
}

/// `n` copies of `seq` back to back.
pub fn repeat(seq: &Sequence, n: usize) -> Sequence {
    let mut steps = Vec::with_capacity(seq.len() * n);
    for _ in 0..n {
        steps.extend_from_slice(&seq.steps);
    }
    Sequence {
        steps,
        tau_d: seq.tau_d,
        name: format!("{n}x{}", seq.name),
    }
}

fn distinct_axes(labels: &[PulseLabel]) -> Result<(), SequenceError> {
    for (k, a) in labels.iter().enumerate() {
        if a.is_identity() {
            return Err(SequenceError::InvalidParameters(format!(
                "pulse parameter P{} must not be the identity",
                k + 1
            )));
        }
        for b in &labels[..k] {
            if a.axis() == b.axis() {
                return Err(SequenceError::InvalidParameters(format!(
                    "pulse parameters must satisfy P1≠P2 (got {b} and {a})"
                )));
            }
        }
    }
    Ok(())
}

/// Non-identity axis orthogonal to both `a` and `b`.
pub fn third_axis(a: PulseLabel, b: PulseLabel) -> PulseLabel {
    PulseLabel::from_axis(pauli_from_code(a.code() ^ b.code()), false)
}

fn label_list(labels: &[PulseLabel]) -> String {
    labels.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(",")
}

fn named(family: &str, args: &[PulseLabel]) -> String {
    format!("{family}({})", label_list(args))
}

use PulseLabel as L;

/// `P f P f`.
pub fn cpmg(p: PulseLabel, tau_d: f64) -> Sequence {
    Sequence::uniform(named("cpmg", &[p]), tau_d, &[p, p])
}

/// Time order `P1 P2 P1 P2`.
pub fn ga4(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    distinct_axes(&[p1, p2])?;
    Ok(Sequence::uniform(named("ga4", &[p1, p2]), tau_d, &[p1, p2, p1, p2]))
}

pub fn xy4(tau_d: f64) -> Sequence {
    ga4(L::X, L::Y, tau_d).expect("X, Y distinct").renamed("xy4")
}

/// Time order `P1 P2 P1 I P1 P2 P1 I`.
pub fn ga8a(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    distinct_axes(&[p1, p2])?;
    Ok(Sequence::uniform(
        named("ga8a", &[p1, p2]),
        tau_d,
        &[p1, p2, p1, L::I, p1, p2, p1, L::I],
    ))
}

/// `GA4` cycles separated by `P3` applied right after the trailing `P2`; the
/// pair is one merged pulse. `P3` must differ from `P2` (else this is `GA8a`).
pub fn ga8b(p1: PulseLabel, p2: PulseLabel, p3: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    distinct_axes(&[p1, p2])?;
    if p3.is_identity() || p3.axis() == p2.axis() {
        return Err(SequenceError::InvalidParameters(
            "ga8b requires P3 ∉ {I, P2}".into(),
        ));
    }
    let outer = cpmg(p3, tau_d);
    let inner = ga4(p1, p2, tau_d)?;
    Ok(concatenate(&outer, &inner, MergePolicy::Pauli)?.renamed(named("ga8b", &[p1, p2, p3])))
}

/// Two `GA8a` cycles, each closed by `P3` in place of its trailing identity.
pub fn ga16a(p1: PulseLabel, p2: PulseLabel, p3: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    if p3.is_identity() {
        return Err(SequenceError::InvalidParameters("ga16a requires P3 ≠ I".into()));
    }
    let s = concatenate(&cpmg(p3, tau_d), &ga8a(p1, p2, tau_d)?, MergePolicy::Pauli)?;
    Ok(s.renamed(named("ga16a", &[p1, p2, p3])))
}

fn cat(name: String, outer: Sequence, inner: Sequence, policy: MergePolicy) -> Result<Sequence, SequenceError> {
    Ok(concatenate(&outer, &inner, policy)?.renamed(name))
}

/// `GA4[GA4]`.
pub fn ga16b(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("ga16b", &[p1, p2]), ga4(p1, p2, tau_d)?, ga4(p1, p2, tau_d)?, MergePolicy::Pauli)
}

/// `GA4[GA8a]`.
pub fn ga32a(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("ga32a", &[p1, p2]), ga4(p1, p2, tau_d)?, ga8a(p1, p2, tau_d)?, MergePolicy::Pauli)
}

/// `GA8a[GA4]`.
pub fn ga32b(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("ga32b", &[p1, p2]), ga8a(p1, p2, tau_d)?, ga4(p1, p2, tau_d)?, MergePolicy::Pauli)
}

/// `GA8a[GA8a]`.
pub fn ga64a(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("ga64a", &[p1, p2]), ga8a(p1, p2, tau_d)?, ga8a(p1, p2, tau_d)?, MergePolicy::Pauli)
}

/// `GA8b[GA8b]`.
pub fn ga64b(p1: PulseLabel, p2: PulseLabel, p3: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(
        named("ga64b", &[p1, p2, p3]),
        ga8b(p1, p2, p3, tau_d)?,
        ga8b(p1, p2, p3, tau_d)?,
        MergePolicy::Pauli,
    )
}

/// `GA4[GA4[GA4]]`.
pub fn ga64c(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("ga64c", &[p1, p2]), ga4(p1, p2, tau_d)?, ga16b(p1, p2, tau_d)?, MergePolicy::Pauli)
}

/// `GA4[GA64a]`.
pub fn ga256a(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("ga256a", &[p1, p2]), ga4(p1, p2, tau_d)?, ga64a(p1, p2, tau_d)?, MergePolicy::Pauli)
}

/// `GA8b[GA32a]`.
pub fn ga256b(p1: PulseLabel, p2: PulseLabel, p3: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(
        named("ga256b", &[p1, p2, p3]),
        ga8b(p1, p2, p3, tau_d)?,
        ga32a(p1, p2, tau_d)?,
        MergePolicy::Pauli,
    )
}

/// `GA4[GA64c]`.
pub fn ga256c(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("ga256c", &[p1, p2]), ga4(p1, p2, tau_d)?, ga64c(p1, p2, tau_d)?, MergePolicy::Pauli)
}

/// `GA8a^(q) = GA8a[GA8a^(q-1)]`, with `GA8a^(1) = GA8a`.
pub fn ga8a_level(q: usize, p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    if q == 0 {
        return Err(SequenceError::InvalidParameters("concatenation level starts at 1".into()));
    }
    let base = ga8a(p1, p2, tau_d)?;
    let mut s = base.clone();
    for _ in 1..q {
        s = concatenate(&base, &s, MergePolicy::Pauli)?;
    }
    Ok(s.renamed(format!("ga8a^({q})({})", label_list(&[p1, p2]))))
}

// Robust families. Concatenations use `MergePolicy::Signed` so pulse phases survive.

/// Time order `P P̄`.
pub fn rga2(p: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    distinct_axes(&[p])?;
    let p = p.unbarred();
    Ok(Sequence::uniform(named("rga2", &[p]), tau_d, &[p, p.bar()]))
}

/// Time order `P1 P̄2 P1 P̄2`.
pub fn rga4(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    distinct_axes(&[p1, p2])?;
    let b2 = p2.bar();
    Ok(Sequence::uniform(named("rga4", &[p1, p2]), tau_d, &[p1, b2, p1, b2]))
}

/// Time order `P1 P̄2 P̄1 P̄2`.
pub fn rga4p(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    distinct_axes(&[p1, p2])?;
    let (b1, b2) = (p1.bar(), p2.bar());
    Ok(Sequence::uniform(named("rga4p", &[p1, p2]), tau_d, &[p1, b2, b1, b2]))
}

/// Time order `P1 P̄2 P1 I P̄1 P2 P̄1 I`.
pub fn rga8a(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    distinct_axes(&[p1, p2])?;
    let (b1, b2) = (p1.bar(), p2.bar());
    Ok(Sequence::uniform(
        named("rga8a", &[p1, p2]),
        tau_d,
        &[p1, b2, p1, L::I, b1, p2, b1, L::I],
    ))
}

/// Time order `P1 P̄2 P1 I P1 P̄2 P1 I`.
pub fn rga8ap(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    distinct_axes(&[p1, p2])?;
    let b2 = p2.bar();
    Ok(Sequence::uniform(
        named("rga8ap", &[p1, p2]),
        tau_d,
        &[p1, b2, p1, L::I, p1, b2, p1, L::I],
    ))
}

/// `RGA2[RGA4]`, with the outer pair along `P3`.
pub fn rga8b(p1: PulseLabel, p2: PulseLabel, p3: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(
        named("rga8b", &[p1, p2, p3]),
        rga2(p3, tau_d)?,
        rga4(p1, p2, tau_d)?,
        MergePolicy::Signed,
    )
}

/// `P1 P2 P1 P2 P2 P1 P2 P1` (a palindrome, so identical in either order).
pub fn rga8c(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    distinct_axes(&[p1, p2])?;
    Ok(Sequence::uniform(
        named("rga8c", &[p1, p2]),
        tau_d,
        &[p1, p2, p1, p2, p2, p1, p2, p1],
    ))
}

/// Two `RGA8a` cycles closed by `P3` and then `P̄3` in place of the trailing identity.
pub fn rga16a(p1: PulseLabel, p2: PulseLabel, p3: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    if p3.is_identity() {
        return Err(SequenceError::InvalidParameters("rga16a requires P3 ≠ I".into()));
    }
    let outer = Sequence::uniform("", tau_d, &[p3, p3.bar()]);
    cat(named("rga16a", &[p1, p2, p3]), outer, rga8a(p1, p2, tau_d)?, MergePolicy::Signed)
}

/// Two `RGA8a'` cycles each closed by `P3`.
pub fn rga16ap(p1: PulseLabel, p2: PulseLabel, p3: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    if p3.is_identity() {
        return Err(SequenceError::InvalidParameters("rga16ap requires P3 ≠ I".into()));
    }
    cat(
        named("rga16ap", &[p1, p2, p3]),
        cpmg(p3, tau_d),
        rga8ap(p1, p2, tau_d)?,
        MergePolicy::Signed,
    )
}

/// `RGA4[RGA4']`.
pub fn rga16bp(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("rga16bp", &[p1, p2]), rga4(p1, p2, tau_d)?, rga4p(p1, p2, tau_d)?, MergePolicy::Signed)
}

/// `RGA4'[RGA4']`.
pub fn rga16bpp(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("rga16bpp", &[p1, p2]), rga4p(p1, p2, tau_d)?, rga4p(p1, p2, tau_d)?, MergePolicy::Signed)
}

/// `RGA4[RGA8a]`.
pub fn rga32a(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("rga32a", &[p1, p2]), rga4(p1, p2, tau_d)?, rga8a(p1, p2, tau_d)?, MergePolicy::Signed)
}

/// `RGA8c[RGA4]`.
pub fn rga32c(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("rga32c", &[p1, p2]), rga8c(p1, p2, tau_d)?, rga4(p1, p2, tau_d)?, MergePolicy::Signed)
}

/// `RGA8a[RGA8a]`.
pub fn rga64a(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("rga64a", &[p1, p2]), rga8a(p1, p2, tau_d)?, rga8a(p1, p2, tau_d)?, MergePolicy::Signed)
}

/// `RGA8c[RGA8c]`.
pub fn rga64c(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("rga64c", &[p1, p2]), rga8c(p1, p2, tau_d)?, rga8c(p1, p2, tau_d)?, MergePolicy::Signed)
}

/// `RGA4[RGA64a]`.
pub fn rga256a(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("rga256a", &[p1, p2]), rga4(p1, p2, tau_d)?, rga64a(p1, p2, tau_d)?, MergePolicy::Signed)
}

/// `RGA4[RGA64c]`.
pub fn rga256c(p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    cat(named("rga256c", &[p1, p2]), rga4(p1, p2, tau_d)?, rga64c(p1, p2, tau_d)?, MergePolicy::Signed)
}

/// `RGA8a^(q) = RGA8a[RGA8a^(q-1)]`, with `RGA8a^(1) = RGA8a`.
pub fn rga8a_level(q: usize, p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    if q == 0 {
        return Err(SequenceError::InvalidParameters("concatenation level starts at 1".into()));
    }
    let base = rga8a(p1, p2, tau_d)?;
    let mut s = base.clone();
    for _ in 1..q {
        s = concatenate(&base, &s, MergePolicy::Signed)?;
    }
    Ok(s.renamed(format!("rga8a^({q})({})", label_list(&[p1, p2]))))
}

/// Concatenated DD: `CDD_0` is one bare interval and `CDD_r = CDD_1[CDD_{r-1}]`
/// with `CDD_1 = RGA4'`, time order `P1 P̄2 P̄1 P̄2`.
pub fn cdd(r: usize, p1: PulseLabel, p2: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    let base = rga4p(p1, p2, tau_d)?;
    let mut s = Sequence::uniform("cdd0", tau_d, &[L::I]);
    for _ in 0..r {
        s = concatenate(&base, &s, MergePolicy::Pauli)?;
    }
    Ok(s.renamed(format!("cdd{r}({})", label_list(&[p1, p2]))))
}

/// Normalized UDD intervals `λ_k = (t_k - t_{k-1}) / t_1`, `k = 1..=M+1`,
/// with `t_k ∝ sin²(kπ / (2M+2))`.
///
/// Evaluated as `sin((2k-1)θ) / sin θ` with `θ = π/(2M+2)`, folding the angle
/// into `[0, π/2]` so mirror-image intervals are bitwise equal.
pub fn udd_lambdas(m: usize) -> Vec<f64> {
    let n = 2 * m + 2;
    let theta = std::f64::consts::PI / n as f64;
    (1..=m + 1)
        .map(|k| {
            let j = 2 * k - 1;
            let j = j.min(n - j);
            (j as f64 * theta).sin() / theta.sin()
        })
        .collect()
}

fn udd_terminal(m: usize, generator: PulseLabel) -> PulseLabel {
    if m % 2 == 1 {
        generator
    } else {
        L::I
    }
}

/// Uhrig DD of order `M`: `M` generator pulses at `t_k = τ_c sin²(kπ/(2M+2))`,
/// plus one more generator pulse at the end when `M` is odd. The shortest
/// interval equals `tau_d`.
pub fn udd(m: usize, generator: PulseLabel, tau_d: f64) -> Result<Sequence, SequenceError> {
    if m == 0 {
        return Err(SequenceError::InvalidParameters("UDD order must be >= 1".into()));
    }
    distinct_axes(&[generator])?;
    let lam = udd_lambdas(m);
    let steps = lam
        .iter()
        .enumerate()
        .map(|(k, &l)| Step {
            interval: l * tau_d,
            pulse: if k < m { generator } else { udd_terminal(m, generator) },
        })
        .collect();
    Sequence::new(format!("udd{m}({generator})"), tau_d, steps)
}

/// Quadratic DD: outer UDD of order `M2` in `Γ2` whose `k`-th free period is an
/// inner UDD of order `M1` in `Γ1` scaled by the outer `λ_k`.
pub fn qdd(
    m1: usize,
    m2: usize,
    g1: PulseLabel,
    g2: PulseLabel,
    tau_d: f64,
) -> Result<Sequence, SequenceError> {
    if m1 == 0 || m2 == 0 {
        return Err(SequenceError::InvalidParameters("QDD orders must be >= 1".into()));
    }
    distinct_axes(&[g1, g2])?;
    let inner = udd_lambdas(m1);
    let outer = udd_lambdas(m2);
    let mut steps = Vec::new();
    for (k, &lo) in outer.iter().enumerate() {
        for (i, &li) in inner.iter().enumerate() {
            steps.push(Step {
                interval: li * lo * tau_d,
                pulse: if i < m1 { g1 } else { udd_terminal(m1, g1) },
            });
        }
        steps.push(Step {
            interval: 0.0,
            pulse: if k < m2 { g2 } else { udd_terminal(m2, g2) },
        });
    }
    let s = Sequence::new(format!("qdd{m1},{m2}({g1},{g2})"), tau_d, steps)?;
    Ok(s.merged(MergePolicy::Pauli))
}

/// Names accepted by [`make_named`].
pub const FAMILIES: &[&str] = &[
    "cpmg", "xy4", "ga4", "ga8a", "ga8b", "ga16a", "ga16b", "ga32a", "ga32b", "ga64a", "ga64b", "ga64c",
    "ga256a", "ga256b", "ga256c", "ga8a_level", "rga2", "rga4", "rga4p", "rga8a", "rga8ap", "rga8b",
    "rga8c", "rga16a", "rga16ap", "rga16bp", "rga16bpp", "rga32a", "rga32c", "rga64a", "rga64c",
    "rga256a", "rga256c", "rga8a_level", "cdd", "udd", "qdd", "free",
];

/// Parameters of a named family.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FamilyParams {
    /// Pulse parameters `P1, P2, P3` (or generators for UDD/QDD).
    pub pulses: Vec<PulseLabel>,
    /// Integer parameters: CDD level, UDD order, QDD orders, concatenation level.
    pub orders: Vec<usize>,
}

/// Build a named family. Missing pulse parameters default to `X, Y` and a
/// third pulse of `P1` (`ga8b`, `ga16a`, `ga64b`, `ga256b`, `rga16a`, `rga16ap`)
/// or the orthogonal axis (`rga8b`). UDD defaults to `X`, QDD to `Z, X`.
pub fn make_named(name: &str, params: &FamilyParams, tau_d: f64) -> Result<Sequence, SequenceError> {
    let p = &params.pulses;
    let p1 = p.first().copied().unwrap_or(L::X);
    let p2 = p.get(1).copied().unwrap_or(L::Y);
    let p3_same = p.get(2).copied().unwrap_or(p1);
    let p3_orth = || p.get(2).copied().unwrap_or_else(|| third_axis(p1, p2));
    let order = |k: usize, what: &str| {
        params
            .orders
            .get(k)
            .copied()
            .ok_or_else(|| SequenceError::InvalidParameters(format!("{name} requires {what}")))
    };
    match name {
        "free" => Ok(Sequence::uniform("free", tau_d, &[L::I])),
        "cpmg" => {
            distinct_axes(&[p1])?;
            Ok(cpmg(p1, tau_d))
        }
        "xy4" => Ok(xy4(tau_d)),
        "ga4" => ga4(p1, p2, tau_d),
        "ga8a" => ga8a(p1, p2, tau_d),
        "ga8b" => ga8b(p1, p2, p3_same, tau_d),
        "ga16a" => ga16a(p1, p2, p3_same, tau_d),
        "ga16b" => ga16b(p1, p2, tau_d),
        "ga32a" => ga32a(p1, p2, tau_d),
        "ga32b" => ga32b(p1, p2, tau_d),
        "ga64a" => ga64a(p1, p2, tau_d),
        "ga64b" => ga64b(p1, p2, p3_same, tau_d),
        "ga64c" => ga64c(p1, p2, tau_d),
        "ga256a" => ga256a(p1, p2, tau_d),
        "ga256b" => ga256b(p1, p2, p3_same, tau_d),
        "ga256c" => ga256c(p1, p2, tau_d),
        "ga8a_level" => ga8a_level(order(0, "a concatenation level")?, p1, p2, tau_d),
        "rga2" => rga2(p1, tau_d),
        "rga4" => rga4(p1, p2, tau_d),
        "rga4p" => rga4p(p1, p2, tau_d),
        "rga8a" => rga8a(p1, p2, tau_d),
        "rga8ap" => rga8ap(p1, p2, tau_d),
        "rga8b" => rga8b(p1, p2, p3_orth(), tau_d),
        "rga8c" => rga8c(p1, p2, tau_d),
        "rga16a" => rga16a(p1, p2, p3_same, tau_d),
        "rga16ap" => rga16ap(p1, p2, p3_same, tau_d),
        "rga16bp" => rga16bp(p1, p2, tau_d),
        "rga16bpp" => rga16bpp(p1, p2, tau_d),
        "rga32a" => rga32a(p1, p2, tau_d),
        "rga32c" => rga32c(p1, p2, tau_d),
        "rga64a" => rga64a(p1, p2, tau_d),
        "rga64c" => rga64c(p1, p2, tau_d),
        "rga256a" => rga256a(p1, p2, tau_d),
        "rga256c" => rga256c(p1, p2, tau_d),
        "rga8a_level" => rga8a_level(order(0, "a concatenation level")?, p1, p2, tau_d),
        "cdd" => cdd(order(0, "a level r")?, p1, p2, tau_d),
        "udd" => udd(order(0, "an order M")?, p.first().copied().unwrap_or(L::X), tau_d),
        "qdd" => {
            let m1 = order(0, "orders M1,M2")?;
            let m2 = params.orders.get(1).copied().unwrap_or(m1);
            let g1 = p.first().copied().unwrap_or(L::Z);
            let g2 = p.get(1).copied().unwrap_or(L::X);
            qdd(m1, m2, g1, g2, tau_d)
        }
        other => Err(SequenceError::UnknownFamily(other.to_string())),
    }
}

/// Parse a family specification such as `ga8a:X,Y`, `cdd3:X,Y`, `udd7:Z`,
/// `qdd3,3:Z,X`, `ga8a_level2` or `rga16a:X,Y,X`.
pub fn parse_family_spec(spec: &str, tau_d: f64) -> Result<Sequence, SequenceError> {
    let (head, args) = match spec.split_once(':') {
        Some((h, a)) => (h.trim(), a.trim()),
        None => (spec.trim(), ""),
    };
    let pulses = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|t| {
                t.trim().parse::<PulseLabel>().map_err(|e| SequenceError::Parse {
                    token: t.trim().to_string(),
                    reason: e,
                })
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    // Split trailing digits/commas off families that take integer orders.
    let (name, orders) = split_orders(head)?;
    make_named(&name, &FamilyParams { pulses, orders }, tau_d)
}

fn split_orders(head: &str) -> Result<(String, Vec<usize>), SequenceError> {
    if FAMILIES.contains(&head) {
        return Ok((head.to_string(), Vec::new()));
    }
    for prefix in ["ga8a_level", "rga8a_level", "cdd", "udd", "qdd"] {
        if let Some(rest) = head.strip_prefix(prefix) {
            if rest.is_empty() {
                continue;
            }
            let orders = rest
                .split(',')
                .map(|t| t.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| SequenceError::UnknownFamily(head.to_string()))?;
            return Ok((prefix.to_string(), orders));
        }
    }
    Err(SequenceError::UnknownFamily(head.to_string()))
}

/// Lab-frame propagator of one cycle and its duration `τ_c`.
pub fn propagate(
    seq: &Sequence,
    sys: &crate::model::SystemModel,
    model: &PulseModel,
) -> Result<(crate::linalg::CMatrix, f64), crate::model::ModelError> {
    let p = crate::propagator::cycle_propagator(seq, sys, model)?;
    Ok((p.to_cmatrix(), p.tau_c))
}
