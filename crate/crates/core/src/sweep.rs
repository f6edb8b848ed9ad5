//! Parameter sweeps, two-parameter landscapes and sequence comparisons.
//!
//! Every (cell, sequence, seed) evaluation is independent. Work runs on the
//! rayon pool and is collected in input order, so results do not depend on
//! the number of threads.

use crate::metrics::{evaluate, fitness, geometric_stats};
use crate::model::{BathSpec, ModelError, PulseModel, SystemModel};
use crate::sequence::{parse_family_spec, Sequence, SequenceError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid sweep plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "tau_d")]
    TauD,
    #[serde(rename = "J")]
    J,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "tau_p")]
    TauP,
    #[serde(rename = "epsilon")]
    Epsilon,
    #[serde(rename = "tau_p_over_tau_d")]
    TauPOverTauD,
    #[serde(rename = "J_over_beta")]
    JOverBeta,
}

fn default_ppd() -> usize {
    6
}

/// Log-spaced grid from `min` to `max` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: Param,
    pub min: f64,
    pub max: f64,
    #[serde(default = "default_ppd")]
    pub points_per_decade: usize,
}

impl Axis {
    pub fn grid(&self) -> Vec<f64> {
        if self.min == self.max {
            return vec![self.min];
        }
        let decades = (self.max / self.min).log10();
        let n = ((decades * self.points_per_decade as f64).round() as usize).max(1) + 1;
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    self.max
                } else {
                    self.min * 10f64.powf(decades * i as f64 / (n - 1) as f64)
                }
            })
            .collect()
    }
}

/// Parameter values; unset fields are filled by the axes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_d: Option<f64>,
    /// Pins the cycle time instead of the pulse interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_c: Option<f64>,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_p_over_tau_d: Option<f64>,
    #[serde(rename = "J_over_beta", default, skip_serializing_if = "Option::is_none")]
    pub j_over_beta: Option<f64>,
}

impl Params {
    fn set(&mut self, p: Param, v: f64) {
        let slot = match p {
            Param::TauD => &mut self.tau_d,
            Param::J => &mut self.j,
            Param::Beta => &mut self.beta,
            Param::TauP => &mut self.tau_p,
            Param::Epsilon => &mut self.epsilon,
            Param::TauPOverTauD => &mut self.tau_p_over_tau_d,
            Param::JOverBeta => &mut self.j_over_beta,
        };
        *slot = Some(v);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Ideal,
    FiniteWidth,
    FlipAngle,
    FiniteWidthFlipAngle,
}

impl ModelKind {
    pub fn has_width(self) -> bool {
        matches!(self, ModelKind::FiniteWidth | ModelKind::FiniteWidthFlipAngle)
    }

    pub fn has_flip(self) -> bool {
        matches!(self, ModelKind::FlipAngle | ModelKind::FiniteWidthFlipAngle)
    }

    fn build(self, tau_p: f64, epsilon: f64) -> PulseModel {
        match self {
            ModelKind::Ideal => PulseModel::Ideal,
            ModelKind::FiniteWidth => PulseModel::FiniteWidth { tau_p },
            ModelKind::FlipAngle => PulseModel::FlipAngle { epsilon },
            ModelKind::FiniteWidthFlipAngle => PulseModel::FiniteWidthFlipAngle { tau_p, epsilon },
        }
    }
}

fn default_n_spins() -> usize {
    4
}
fn default_n_seeds() -> usize {
    10
}

/// A sweep, landscape or comparison. Zero, one or two axes respectively.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    #[serde(default)]
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub fixed: Params,
    /// Family specs such as `ga8a:X,Y` or `cdd3`.
    #[serde(default)]
    pub sequences: Vec<String>,
    #[serde(default)]
    pub pulse_model: ModelKind,
    #[serde(default = "default_n_spins")]
    pub n_spins: usize,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    /// Bath realization `s` uses seed `seed + s`.
    #[serde(default)]
    pub seed: u64,
}

impl SweepPlan {
    /// Sequences named by `sequences`, built at unit interval.
    pub fn templates(&self) -> Result<Vec<Sequence>, SweepError> {
        self.sequences
            .iter()
            .map(|s| Ok(parse_family_spec(s, 1.0)?.renamed(s.clone())))
            .collect()
    }

    pub fn validate(&self, n_axes: usize) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::Plan(m));
        if self.axes.len() != n_axes {
            return bad(format!("expected {n_axes} axes, found {}", self.axes.len()));
        }
        if self.n_seeds == 0 {
            return bad("n_seeds must be at least 1".into());
        }
        BathSpec::new(self.n_spins, 0, 0.0, 0.0)?;
        let mut probe = self.fixed;
        for a in &self.axes {
            if !(a.min > 0.0 && a.max >= a.min && a.max.is_finite()) {
                return bad(format!("axis {:?} needs 0 < min <= max, got [{}, {}]", a.param, a.min, a.max));
            }
            if a.points_per_decade == 0 {
                return bad("points_per_decade must be at least 1".into());
            }
            let meaningless = match a.param {
                Param::TauP | Param::TauPOverTauD => !self.pulse_model.has_width(),
                Param::Epsilon => !self.pulse_model.has_flip(),
                _ => false,
            };
            if meaningless {
                return bad(format!("{:?} has no effect under {:?}", a.param, self.pulse_model));
            }
            probe.set(a.param, a.min);
        }
        if self.axes.len() == 2 && self.axes[0].param == self.axes[1].param {
            return bad("both axes sweep the same parameter".into());
        }
        resolve(&probe, self.pulse_model).map(|_| ()).map_err(SweepError::Plan)
    }
}

#[derive(Clone, Copy, Debug)]
enum Timing {
    TauD(f64),
    TauC(f64),
}

#[derive(Clone, Copy, Debug)]
struct Resolved {
    j: f64,
    beta: f64,
    timing: Timing,
    tau_p: Option<f64>,
    tau_p_ratio: Option<f64>,
    epsilon: f64,
    kind: ModelKind,
}

fn resolve(p: &Params, kind: ModelKind) -> Result<Resolved, String> {
    let beta = p.beta.ok_or("beta is not set")?;
    let j = match (p.j, p.j_over_beta) {
        (Some(_), Some(_)) => return Err("set only one of J and J_over_beta".into()),
        (Some(j), None) => j,
        (None, Some(r)) => r * beta,
        (None, None) => return Err("J is not set".into()),
    };
    let timing = match (p.tau_d, p.tau_c) {
        (Some(t), None) if t > 0.0 => Timing::TauD(t),
        (None, Some(t)) if t > 0.0 => Timing::TauC(t),
        (Some(_), Some(_)) => return Err("set only one of tau_d and tau_c".into()),
        (None, None) => return Err("tau_d or tau_c must be set".into()),
        _ => return Err("tau_d and tau_c must be > 0".into()),
    };
    if kind.has_width() {
        match (p.tau_p, p.tau_p_over_tau_d) {
            (Some(_), Some(_)) => return Err("set only one of tau_p and tau_p_over_tau_d".into()),
            (None, None) => return Err(format!("{kind:?} needs tau_p or tau_p_over_tau_d")),
            _ => {}
        }
    } else if p.tau_p.is_some() || p.tau_p_over_tau_d.is_some() {
        return Err(format!("tau_p has no effect under {kind:?}"));
    }
    if kind.has_flip() && p.epsilon.is_none() {
        return Err(format!("{kind:?} needs epsilon"));
    }
    if !kind.has_flip() && p.epsilon.is_some() {
        return Err(format!("epsilon has no effect under {kind:?}"));
    }
    BathSpec::new(4, 0, j, beta).map_err(|e| e.to_string())?;
    Ok(Resolved {
        j,
        beta,
        timing,
        tau_p: p.tau_p,
        tau_p_ratio: p.tau_p_over_tau_d,
        epsilon: p.epsilon.unwrap_or(0.0),
        kind,
    })
}

/// Interval and pulse model for one sequence in one cell.
fn timing_for(r: &Resolved, template: &Sequence) -> Result<(f64, PulseModel), String> {
    let unit = template.with_tau_d(1.0);
    let m_d = unit.free_time();
    let m_p = unit.executed_pulse_count(&r.kind.build(1.0, r.epsilon)) as f64;
    let (tau_d, tau_p) = match (r.timing, r.tau_p, r.tau_p_ratio) {
        (Timing::TauD(t), tp, ratio) => (t, tp.or(ratio.map(|x| x * t))),
        (Timing::TauC(tc), _, Some(ratio)) => {
            let t = tc / (m_d + m_p * ratio);
            (t, Some(ratio * t))
        }
        (Timing::TauC(tc), tp, None) => {
            let t = (tc - m_p * tp.unwrap_or(0.0)) / m_d;
            if !(t > 0.0) {
                return Err(format!("infeasible: pulses alone exceed tau_c = {tc}"));
            }
            (t, tp)
        }
    };
    let model = r.kind.build(tau_p.unwrap_or(0.0), r.epsilon);
    model.validate().map_err(|e| e.to_string())?;
    Ok((tau_d, model))
}

/// Summary of one sequence over all seeds in one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub sequence: String,
    pub tau_d: Option<f64>,
    pub tau_c: Option<f64>,
    #[serde(rename = "D_mean")]
    pub d_mean: Option<f64>,
    /// Standard error of `log10 D`.
    #[serde(rename = "D_stderr")]
    pub d_stderr: Option<f64>,
    pub n_seeds: usize,
    pub reason: String,
}

struct Cell {
    x: Option<f64>,
    y: Option<f64>,
    resolved: Result<Resolved, String>,
}

fn cells(plan: &SweepPlan) -> Vec<Cell> {
    let grids: Vec<Vec<f64>> = plan.axes.iter().map(Axis::grid).collect();
    let mut points: Vec<(Option<f64>, Option<f64>)> = Vec::new();
    match grids.len() {
        0 => points.push((None, None)),
        1 => points.extend(grids[0].iter().map(|&x| (Some(x), None))),
        _ => {
            for &x in &grids[0] {
                for &y in &grids[1] {
                    points.push((Some(x), Some(y)));
                }
            }
        }
    }
    points
        .into_iter()
        .map(|(x, y)| {
            let mut p = plan.fixed;
            for (a, v) in plan.axes.iter().zip([x, y]) {
                p.set(a.param, v.expect("one value per axis"));
            }
            Cell {
                x,
                y,
                resolved: resolve(&p, plan.pulse_model),
            }
        })
        .collect()
}

type SystemKey = (u64, u64, u64);

fn build_systems(plan: &SweepPlan, cells: &[Cell]) -> Result<HashMap<SystemKey, SystemModel>, SweepError> {
    let mut keys: Vec<SystemKey> = Vec::new();
    for c in cells {
        if let Ok(r) = &c.resolved {
            for s in 0..plan.n_seeds as u64 {
                keys.push((r.j.to_bits(), r.beta.to_bits(), plan.seed.wrapping_add(s)));
            }
        }
    }
    keys.sort_unstable();
    keys.dedup();
    let built: Vec<Result<SystemModel, ModelError>> = keys
        .par_iter()
        .map(|&(j, b, seed)| {
            let spec = BathSpec::new(plan.n_spins, seed, f64::from_bits(j), f64::from_bits(b))?;
            SystemModel::random(&spec)
        })
        .collect();
    let mut out = HashMap::new();
    for (k, s) in keys.into_iter().zip(built) {
        out.insert(k, s?);
    }
    Ok(out)
}

fn summarize(x: Option<f64>, y: Option<f64>, name: &str, runs: Vec<Result<(f64, f64, f64), String>>) -> SweepRow {
    let mut ds = Vec::new();
    let mut reason = String::new();
    let mut times = (None, None);
    for r in runs {
        match r {
            Ok((d, tau_d, tau_c)) => {
                ds.push(d);
                times = (Some(tau_d), Some(tau_c));
            }
            Err(e) if reason.is_empty() => reason = e,
            Err(_) => {}
        }
    }
    let (d_mean, d_stderr) = if ds.is_empty() {
        (None, None)
    } else if ds.iter().all(|&d| d == 0.0) {
        (Some(0.0), Some(0.0))
    } else if ds.iter().any(|&d| d == 0.0) {
        if reason.is_empty() {
            reason = "zero distance for some seeds".into();
        }
        (Some(0.0), None)
    } else {
        let g = geometric_stats(&ds).expect("positive distances");
        (Some(g.mean), Some(g.log10_stderr))
    };
    SweepRow {
        x,
        y,
        sequence: name.to_string(),
        tau_d: times.0,
        tau_c: times.1,
        d_mean,
        d_stderr,
        n_seeds: ds.len(),
        reason,
    }
}

/// Geometric-mean distance of every template in every cell of `plan`.
fn run_cells(plan: &SweepPlan, templates: &[Sequence]) -> Result<Vec<SweepRow>, SweepError> {
    if templates.is_empty() {
        return Err(SweepError::Plan("no sequences to evaluate".into()));
    }
    let cells = cells(plan);
    let systems = build_systems(plan, &cells)?;
    let n_seeds = plan.n_seeds;
    let jobs: Vec<(usize, usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..templates.len()).flat_map(move |t| (0..n_seeds).map(move |s| (c, t, s))))
        .collect();
    let results: Vec<Result<(f64, f64, f64), String>> = jobs
        .par_iter()
        .map(|&(c, t, s)| {
            let r = cells[c].resolved.as_ref().map_err(|e| e.clone())?;
            let (tau_d, model) = timing_for(r, &templates[t])?;
            let sys = &systems[&(r.j.to_bits(), r.beta.to_bits(), plan.seed.wrapping_add(s as u64))];
            let seq = templates[t].with_tau_d(tau_d);
            let rep = evaluate(&seq, sys, &model).map_err(|e| e.to_string())?;
            Ok((rep.d, tau_d, rep.tau_c))
        })
        .collect();
    let mut it = results.into_iter();
    let mut rows = Vec::with_capacity(cells.len() * templates.len());
    for cell in &cells {
        for t in templates {
            let runs: Vec<_> = it.by_ref().take(n_seeds).collect();
            rows.push(summarize(cell.x, cell.y, &t.name, runs));
        }
    }
    Ok(rows)
}

/// One row per (grid point, sequence).
pub fn sweep_1d(plan: &SweepPlan, templates: &[Sequence]) -> Result<Vec<SweepRow>, SweepError> {
    plan.validate(1)?;
    run_cells(plan, templates)
}

/// Winner of one landscape cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeCell {
    pub x: f64,
    pub y: f64,
    pub winner: String,
    #[serde(rename = "D_best")]
    pub d_best: Option<f64>,
    pub pulses: Option<usize>,
}

/// Best sequence per grid cell plus the full per-sequence table.
pub fn landscape_2d(
    plan: &SweepPlan,
    templates: &[Sequence],
) -> Result<(Vec<LandscapeCell>, Vec<SweepRow>), SweepError> {
    plan.validate(2)?;
    let rows = run_cells(plan, templates)?;
    let kind = plan.pulse_model;
    let pulses: Vec<usize> = templates
        .iter()
        .map(|t| t.executed_pulse_count(&kind.build(1.0, 0.0)))
        .collect();
    let mut out = Vec::new();
    for chunk in rows.chunks(templates.len()) {
        let best = chunk
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.d_mean.map(|d| (d, pulses[i], i)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let (x, y) = (chunk[0].x.expect("2-D cell"), chunk[0].y.expect("2-D cell"));
        out.push(match best {
            Some((d, p, i)) => LandscapeCell {
                x,
                y,
                winner: chunk[i].sequence.clone(),
                d_best: Some(d),
                pulses: Some(p),
            },
            None => LandscapeCell {
                x,
                y,
                winner: String::new(),
                d_best: None,
                pulses: None,
            },
        });
    }
    Ok((out, rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub rank: usize,
    pub sequence: String,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    #[serde(rename = "D_stderr")]
    pub d_stderr: Option<f64>,
    pub q: Option<f64>,
    pub pulses: usize,
    pub tau_d: Option<f64>,
    pub tau_c: Option<f64>,
    pub reason: String,
}

/// All templates at the fixed parameters, best (smallest `D`) first.
pub fn compare(plan: &SweepPlan, templates: &[Sequence]) -> Result<Vec<CompareRow>, SweepError> {
    plan.validate(0)?;
    let rows = run_cells(plan, templates)?;
    let kind = plan.pulse_model;
    let mut out: Vec<CompareRow> = rows
        .into_iter()
        .zip(templates)
        .map(|(r, t)| CompareRow {
            rank: 0,
            sequence: r.sequence,
            d: r.d_mean,
            d_stderr: r.d_stderr,
            q: r.d_mean.map(fitness),
            pulses: t.executed_pulse_count(&kind.build(1.0, 0.0)),
            tau_d: r.tau_d,
            tau_c: r.tau_c,
            reason: r.reason,
        })
        .collect();
    out.sort_by(|a, b| match (a.d, b.d) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    for (i, r) in out.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(out)
}

/// Serialize rows as CSV with a header line.
pub fn write_csv<T: Serialize, W: std::io::Write>(rows: &[T], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(axes: Vec<Axis>, fixed: Params, seqs: &[&str]) -> SweepPlan {
        SweepPlan {
            axes,
            fixed,
            sequences: seqs.iter().map(|s| s.to_string()).collect(),
            pulse_model: ModelKind::Ideal,
            n_spins: 4,
            n_seeds: 3,
            seed: 11,
        }
    }

    fn tau_axis(min: f64, max: f64) -> Axis {
        Axis {
            param: Param::TauD,
            min,
            max,
            points_per_decade: 4,
        }
    }

    #[test]
    fn grid_is_log_spaced_and_inclusive() {
        let g = tau_axis(1e-3, 1e-1).grid();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[8], 1e-1);
        for w in g.windows(2) {
            assert!(((w[1] / w[0]).log10() - 0.25).abs() < 1e-12);
        }
        assert_eq!(tau_axis(0.5, 0.5).grid(), vec![0.5]);
    }

    #[test]
    fn xy4_slope_two() {
        let fixed = Params {
            j: Some(1e-3),
            beta: Some(1e-6),
            ..Default::default()
        };
        let p = plan(vec![tau_axis(1e-3, 1e-1)], fixed, &["xy4"]);
        let rows = sweep_1d(&p, &p.templates().unwrap()).unwrap();
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.x.unwrap(), r.d_mean.unwrap())).collect();
        let fit = crate::metrics::fit_scaling(&pts).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.2, "{}", fit.slope);
    }

    #[test]
    fn zero_coupling_gives_zero_distance() {
        let fixed = Params {
            j: Some(0.0),
            beta: Some(0.0),
            ..Default::default()
        };
        let p = plan(vec![tau_axis(0.01, 1.0)], fixed, &["xy4", "ga8a", "cdd2", "qdd2,2"]);
        for r in sweep_1d(&p, &p.templates().unwrap()).unwrap() {
            assert_eq!(r.d_mean, Some(0.0), "{}", r.sequence);
        }
    }

    #[test]
    fn plan_validation() {
        let fixed = Params {
            j: Some(1e-3),
            beta: Some(1e-6),
            ..Default::default()
        };
        let mut p = plan(vec![tau_axis(1e-3, 1e-1)], fixed, &["xy4"]);
        assert!(p.validate(1).is_ok());
        assert!(p.validate(0).is_err());
        p.axes[0].param = Param::Epsilon;
        assert!(p.validate(1).is_err());
        p.axes[0] = tau_axis(-1.0, 1.0);
        assert!(p.validate(1).is_err());
        let json = r#"{"axes": [{"param": "J", "min": 1e-5, "max": 1e-2}], "fixed": {"beta": 1e-6, "tau_d": 0.1},
            "sequences": ["ga4", "cdd2"], "pulse_model": "ideal"}"#;
        let p: SweepPlan = serde_json::from_str(json).unwrap();
        assert_eq!(p.n_seeds, 10);
        assert!(p.validate(1).is_ok());
    }

    #[test]
    fn fixed_cycle_time_mode() {
        let fixed = Params {
            j: Some(1e-3),
            beta: Some(1e-6),
            tau_c: Some(1.0),
            tau_p: Some(0.01),
            ..Default::default()
        };
        let mut p = plan(Vec::new(), fixed, &["xy4", "cdd3"]);
        p.pulse_model = ModelKind::FiniteWidth;
        p.n_seeds = 1;
        let rows = compare(&p, &p.templates().unwrap()).unwrap();
        for r in &rows {
            assert!((r.tau_c.unwrap() - 1.0).abs() < 1e-12, "{}", r.sequence);
        }
        let xy4 = rows.iter().find(|r| r.sequence == "xy4").unwrap();
        assert!((xy4.tau_d.unwrap() - 0.24).abs() < 1e-12);
        // 64 pulses of 0.02 exceed the cycle.
        p.fixed.tau_p = Some(0.02);
        let rows = compare(&p, &p.templates().unwrap()).unwrap();
        let cdd = rows.iter().find(|r| r.sequence == "cdd3").unwrap();
        assert!(cdd.d.is_none() && cdd.reason.starts_with("infeasible"));
        assert_eq!(cdd.rank, 2);
    }

    #[test]
    fn compare_duplicates_and_order() {
        let fixed = Params {
            j: Some(1e-3),
            beta: Some(1e-6),
            tau_d: Some(0.1),
            ..Default::default()
        };
        let p = plan(Vec::new(), fixed, &["ga8a", "xy4", "ga8a"]);
        let rows = compare(&p, &p.templates().unwrap()).unwrap();
        assert_eq!(rows[0].sequence, "ga8a");
        assert_eq!(rows[1].sequence, "ga8a");
        assert_eq!(rows[0].d, rows[1].d);
        assert!(rows[0].d < rows[2].d);
        assert_eq!(rows.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        let empty = plan(Vec::new(), fixed, &[]);
        assert!(compare(&empty, &[]).is_err());
    }

    #[test]
    fn landscape_single_sequence_wins_everywhere() {
        let fixed = Params {
            tau_d: Some(0.1),
            ..Default::default()
        };
        let axes = vec![
            Axis {
                param: Param::J,
                min: 1e-4,
                max: 1e-2,
                points_per_decade: 1,
            },
            Axis {
                param: Param::Beta,
                min: 1e-4,
                max: 1e-3,
                points_per_decade: 1,
            },
        ];
        let p = plan(axes, fixed, &["ga4"]);
        let (cells, rows) = landscape_2d(&p, &p.templates().unwrap()).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(rows.len(), 6);
        assert!(cells.iter().all(|c| c.winner == "ga4"));
    }

    #[test]
    fn csv_is_deterministic() {
        let fixed = Params {
            j: Some(1e-2),
            beta: Some(1e-3),
            ..Default::default()
        };
        let p = plan(vec![tau_axis(0.01, 0.1)], fixed, &["ga8a", "cdd2"]);
        let t = p.templates().unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&sweep_1d(&p, &t).unwrap(), &mut a).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let rows = pool.install(|| sweep_1d(&p, &t).unwrap());
        write_csv(&rows, &mut b).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with("x,y,sequence,tau_d,tau_c,D_mean,D_stderr,n_seeds,reason\n"));
    }
}
