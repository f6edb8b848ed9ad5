//! Genetic search over pulse sequences with linked pulse sites.
//!
//! A chromosome assigns one gene (pulse label) to each group of linked sites.
//! The search starts with two groups (odd and even sites) and unlinks sites
//! level by level until every site is independent.

use crate::metrics::{evaluate, fitness};
use crate::model::{pulse_set, BathSpec, ModelError, PulseLabel, PulseModel, SystemModel};
use crate::sequence::Sequence;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum GaError {
    #[error("invalid GA configuration: {0}")]
    Config(String),
    #[error("no cyclic sequence can be built from the available pulses")]
    EmptySearchSpace,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Number of gene groups quoted for level `l`.
pub fn ktilde(l: usize) -> usize {
    if l % 2 == 0 {
        (3 * l + 4) / 2
    } else {
        3 * (l + 1) / 2
    }
}

/// Partition of pulse sites (0-based) into linked groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub k: usize,
    pub level: usize,
    /// Sorted by first member; members ascending.
    pub groups: Vec<Vec<usize>>,
}

impl Layout {
    /// Level 0: one group of odd sites (1, 3, ...) and one of even sites.
    pub fn initial(k: usize) -> Layout {
        let odd: Vec<usize> = (0..k).step_by(2).collect();
        let even: Vec<usize> = (1..k).step_by(2).collect();
        let groups = [odd, even].into_iter().filter(|g| !g.is_empty()).collect();
        Layout { k, level: 0, groups }
    }

    /// Next level: split every linked even-site block by stride doubling, or
    /// the odd-site blocks once all even sites are free. `None` at the top.
    pub fn next(&self) -> Option<Layout> {
        let even_site = |g: &Vec<usize>| g[0] % 2 == 1;
        let split_even = self.groups.iter().any(|g| even_site(g) && g.len() > 1);
        let split_odd = self.groups.iter().any(|g| !even_site(g) && g.len() > 1);
        if !split_even && !split_odd {
            return None;
        }
        let mut groups = Vec::new();
        for g in &self.groups {
            if g.len() > 1 && even_site(g) == split_even {
                groups.push(g.iter().copied().step_by(2).collect());
                groups.push(g.iter().copied().skip(1).step_by(2).collect());
            } else {
                groups.push(g.clone());
            }
        }
        groups.sort_by_key(|g: &Vec<usize>| g[0]);
        Some(Layout {
            k: self.k,
            level: self.level + 1,
            groups,
        })
    }

    /// Highest level, where every group is a single site.
    pub fn max_level(k: usize) -> usize {
        let mut l = Layout::initial(k);
        while let Some(n) = l.next() {
            l = n;
        }
        l.level
    }

    fn is_singletons(&self) -> bool {
        self.groups.iter().all(|g| g.len() == 1)
    }
}

#[derive(Clone, Debug)]
pub struct Chromosome {
    pub layout: Arc<Layout>,
    pub genes: Vec<PulseLabel>,
}

impl Chromosome {
    pub fn decode(&self) -> Vec<PulseLabel> {
        let mut out = vec![PulseLabel::I; self.layout.k];
        for (g, &gene) in self.layout.groups.iter().zip(&self.genes) {
            for &s in g {
                out[s] = gene;
            }
        }
        out
    }

    pub fn is_cyclic(&self) -> bool {
        let mut acc = 0u8;
        for (g, gene) in self.layout.groups.iter().zip(&self.genes) {
            if g.len() % 2 == 1 {
                acc ^= gene.code();
            }
        }
        acc == 0
    }

    /// Encode a site-wise sequence onto `layout`, taking the most frequent
    /// label of each group (ties go to the earliest site).
    pub fn encode_majority(layout: Arc<Layout>, sites: &[PulseLabel]) -> Chromosome {
        let genes = layout
            .groups
            .iter()
            .map(|g| {
                let mut best = sites[g[0]];
                let mut best_count = 0;
                for &s in g {
                    let n = g.iter().filter(|&&t| sites[t] == sites[s]).count();
                    if n > best_count {
                        best = sites[s];
                        best_count = n;
                    }
                }
                best
            })
            .collect();
        Chromosome { layout, genes }
    }

    pub fn to_sequence(&self, name: &str, tau_d: f64) -> Sequence {
        Sequence::uniform(name, tau_d, &self.decode())
    }
}

fn label_text(pulses: &[PulseLabel]) -> String {
    pulses.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(" ")
}

/// `p_j ∝ exp((q_j - q_best) / T)`.
pub fn selection_probabilities(q: &[f64], t: f64) -> Vec<f64> {
    if q.is_empty() {
        return Vec::new();
    }
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = q.iter().map(|&x| ((x - best) / t).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|x| x / sum).collect()
}

/// Annealing temperature at generation `alpha`, never below `Tf`.
pub fn temperature(alpha: usize, t0: f64, cfg: &GaConfig) -> f64 {
    let ac = cfg.alpha_c();
    let r = alpha as f64 / ac;
    let shape = 1.0 - cfg.eta * (cfg.lambda * std::f64::consts::PI * r).sin();
    (t0 * (cfg.tf / t0).powf(r) * shape).max(cfg.tf)
}

/// Splice the decoded parents at a random site and repair the splice site so
/// that both children stay cyclic. Falls back to the parents.
pub fn crossover(
    c1: &Chromosome,
    c2: &Chromosome,
    alphabet: &[PulseLabel],
    rng: &mut impl Rng,
) -> (Chromosome, Chromosome) {
    let k = c1.layout.k;
    let (s1, s2) = (c1.decode(), c2.decode());
    for _ in 0..4 * k.max(1) {
        let x = rng.gen_range(1..=k);
        if x == k {
            break;
        }
        let child = |a: &[PulseLabel], b: &[PulseLabel], rng: &mut dyn rand::RngCore| {
            let mut s: Vec<PulseLabel> = a[..x].iter().chain(&b[x..]).copied().collect();
            let total = s.iter().fold(0u8, |acc, p| acc ^ p.code());
            if total != 0 {
                let need = s[x - 1].code() ^ total;
                let opts: Vec<PulseLabel> = alphabet.iter().copied().filter(|p| p.code() == need).collect();
                s[x - 1] = *opts.choose(rng)?;
            }
            let c = Chromosome::encode_majority(c1.layout.clone(), &s);
            c.is_cyclic().then_some(c)
        };
        if let (Some(o1), Some(o2)) = (child(&s1, &s2, rng), child(&s2, &s1, rng)) {
            return (o1, o2);
        }
    }
    (c1.clone(), c2.clone())
}

/// Change one group's gene while keeping the sequence cyclic. `None` when no
/// such change exists.
pub fn mutate_single(c: &Chromosome, alphabet: &[PulseLabel], rng: &mut impl Rng) -> Option<Chromosome> {
    let mut order: Vec<usize> = (0..c.genes.len()).collect();
    order.shuffle(rng);
    for g in order {
        let mut opts: Vec<PulseLabel> = alphabet.iter().copied().filter(|&p| p != c.genes[g]).collect();
        opts.shuffle(rng);
        for p in opts {
            let mut m = c.clone();
            m.genes[g] = p;
            if m.is_cyclic() {
                return Some(m);
            }
        }
    }
    None
}

/// Change two groups that carry the same gene together. `None` when no pair
/// shares a gene or no joint change stays cyclic.
pub fn mutate_double(c: &Chromosome, alphabet: &[PulseLabel], rng: &mut impl Rng) -> Option<Chromosome> {
    let n = c.genes.len();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| c.genes[a] == c.genes[b])
        .collect();
    pairs.shuffle(rng);
    for (a, b) in pairs {
        let cur = c.genes[a];
        let alts: Vec<PulseLabel> = alphabet.iter().copied().filter(|&p| p != cur).collect();
        let mut joint: Vec<(PulseLabel, PulseLabel)> =
            alts.iter().flat_map(|&x| alts.iter().map(move |&y| (x, y))).collect();
        joint.shuffle(rng);
        for (x, y) in joint {
            let mut m = c.clone();
            m.genes[a] = x;
            m.genes[b] = y;
            if m.is_cyclic() {
                return Some(m);
            }
        }
    }
    None
}

/// Uniformly random cyclic chromosome not in `exclude`, or `None` after a
/// bounded number of attempts.
pub fn random_chromosome(
    layout: &Arc<Layout>,
    alphabet: &[PulseLabel],
    exclude: &HashSet<Vec<PulseLabel>>,
    rng: &mut impl Rng,
) -> Option<Chromosome> {
    for _ in 0..64 * (layout.groups.len() + 1) {
        let genes = (0..layout.groups.len()).map(|_| *alphabet.choose(rng).unwrap()).collect();
        let c = Chromosome {
            layout: layout.clone(),
            genes,
        };
        if c.is_cyclic() && !exclude.contains(&c.decode()) {
            return Some(c);
        }
    }
    None
}

fn default_q() -> usize {
    16
}
fn default_n_spins() -> usize {
    4
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_tf() -> f64 {
    0.05
}
fn default_eta() -> f64 {
    0.3
}
fn default_lambda() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Q", default = "default_q")]
    pub q: usize,
    #[serde(default = "ideal")]
    pub pulse_model: PulseModel,
    pub tau_d: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub beta: f64,
    #[serde(default = "default_n_spins")]
    pub n_spins: usize,
    /// Bath realizations averaged during the search.
    #[serde(default = "default_seeds")]
    pub bath_seeds: Vec<u64>,
    /// Realizations used to rank the final candidates; empty means reuse
    /// `bath_seeds`.
    #[serde(default)]
    pub final_seeds: Vec<u64>,
    /// Initial temperature. Unset: widest fitness gap of the population.
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default = "default_tf")]
    pub tf: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Cutoff generation. Unset: `50 (1 + K/64)`.
    #[serde(default)]
    pub alpha_c: Option<f64>,
    /// Unset: `ceil(alpha_c)`.
    #[serde(default)]
    pub generations_per_level: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn ideal() -> PulseModel {
    PulseModel::Ideal
}

impl GaConfig {
    /// Defaults for everything except the problem definition.
    pub fn new(k: usize, pulse_model: PulseModel, tau_d: f64, j: f64, beta: f64) -> GaConfig {
        GaConfig {
            k,
            q: default_q(),
            pulse_model,
            tau_d,
            j,
            beta,
            n_spins: default_n_spins(),
            bath_seeds: default_seeds(),
            final_seeds: Vec::new(),
            t0: None,
            tf: default_tf(),
            eta: default_eta(),
            lambda: default_lambda(),
            alpha_c: None,
            generations_per_level: None,
            seed: 0,
        }
    }

    pub fn alpha_c(&self) -> f64 {
        self.alpha_c.unwrap_or(50.0 * (1.0 + self.k as f64 / 64.0))
    }

    pub fn generations(&self) -> usize {
        self.generations_per_level.unwrap_or(self.alpha_c().ceil() as usize)
    }

    pub fn validate(&self) -> Result<(), GaError> {
        let bad = |m: String| Err(GaError::Config(m));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.q == 0 || self.q % 8 != 0 {
            return bad(format!("Q must be a positive multiple of 8, got {}", self.q));
        }
        if !(self.tf > 0.0 && self.tf.is_finite()) {
            return bad(format!("Tf must be > 0, got {}", self.tf));
        }
        if let Some(t0) = self.t0 {
            if !(t0 > self.tf && t0.is_finite()) {
                return bad(format!("T0 must exceed Tf, got T0={t0}, Tf={}", self.tf));
            }
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1), got {}", self.eta));
        }
        if !self.lambda.is_finite() {
            return bad("lambda must be finite".into());
        }
        if self.alpha_c() <= 0.0 || !self.alpha_c().is_finite() {
            return bad("alpha_c must be > 0".into());
        }
        if !(self.tau_d > 0.0 && self.tau_d.is_finite()) {
            return bad(format!("tau_d must be > 0, got {}", self.tau_d));
        }
        if self.bath_seeds.is_empty() {
            return bad("at least one bath seed is required".into());
        }
        self.pulse_model.validate()?;
        BathSpec::new(self.n_spins, 0, self.j, self.beta)?;
        Ok(())
    }
}

/// A population member with its cached fitness.
#[derive(Clone, Debug)]
pub struct Member {
    pub chromosome: Chromosome,
    pub pulses: Vec<PulseLabel>,
    pub fitness: f64,
}

fn rank(a: &Member, b: &Member) -> Ordering {
    b.fitness
        .total_cmp(&a.fitness)
        .then_with(|| label_text(&a.pulses).cmp(&label_text(&b.pulses)))
}

/// One row of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub level: usize,
    pub generation: usize,
    pub groups: usize,
    pub temperature: f64,
    pub best_q: f64,
    pub mean_q: f64,
    pub best_sequence: String,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelBest {
    pub level: usize,
    pub groups: usize,
    pub ktilde: usize,
    pub sequence: String,
    pub q: f64,
}

#[derive(Clone, Debug)]
pub struct GaResult {
    pub best: Sequence,
    /// Mean fitness of `best` over the ranking seeds.
    pub best_q: f64,
    pub history: Vec<HistoryRow>,
    pub level_bests: Vec<LevelBest>,
}

pub fn write_history_csv<W: std::io::Write>(rows: &[HistoryRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy)]
enum Purpose {
    Init = 1,
    Selection = 2,
    Splice = 3,
    Mutation = 4,
    Refill = 5,
}

/// Search state: configuration, bath realizations and the fitness cache.
pub struct GaRun {
    pub cfg: GaConfig,
    alphabet: Vec<PulseLabel>,
    systems: Vec<SystemModel>,
    cache: HashMap<Vec<PulseLabel>, f64>,
}

impl GaRun {
    pub fn new(cfg: GaConfig) -> Result<GaRun, GaError> {
        cfg.validate()?;
        let systems = build_systems(&cfg, &cfg.bath_seeds)?;
        Ok(GaRun {
            alphabet: pulse_set(&cfg.pulse_model),
            cfg,
            systems,
            cache: HashMap::new(),
        })
    }

    pub fn alphabet(&self) -> &[PulseLabel] {
        &self.alphabet
    }

    pub fn evaluations(&self) -> usize {
        self.cache.len()
    }

    fn rng(&self, level: usize, generation: usize, purpose: Purpose) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        r.set_stream(((level as u64) << 40) | ((generation as u64) << 8) | purpose as u64);
        r
    }

    /// Mean fitness over the search realizations, cached by decoded sequence.
    pub fn fitness_of(&mut self, pulses: &[Vec<PulseLabel>]) -> Result<Vec<f64>, GaError> {
        let mut todo: Vec<&Vec<PulseLabel>> = pulses.iter().filter(|p| !self.cache.contains_key(*p)).collect();
        todo.sort();
        todo.dedup();
        let computed: Vec<Result<f64, ModelError>> = todo
            .par_iter()
            .map(|p| mean_fitness(p, &self.systems, &self.cfg.pulse_model, self.cfg.tau_d))
            .collect();
        for (p, q) in todo.into_iter().zip(computed) {
            self.cache.insert(p.clone(), q?);
        }
        Ok(pulses.iter().map(|p| self.cache[p]).collect())
    }

    fn members(&mut self, chromosomes: Vec<Chromosome>) -> Result<Vec<Member>, GaError> {
        let pulses: Vec<Vec<PulseLabel>> = chromosomes.iter().map(Chromosome::decode).collect();
        let q = self.fitness_of(&pulses)?;
        Ok(chromosomes
            .into_iter()
            .zip(pulses)
            .zip(q)
            .map(|((chromosome, pulses), fitness)| Member {
                chromosome,
                pulses,
                fitness,
            })
            .collect())
    }

    /// Level-0 population: all valid (odd, even) gene pairs when there are at
    /// most `Q`, otherwise `Q` of them drawn without replacement.
    pub fn initial_population(&mut self) -> Result<Vec<Member>, GaError> {
        let layout = Arc::new(Layout::initial(self.cfg.k));
        let g = layout.groups.len();
        let mut all: Vec<Chromosome> = Vec::new();
        let mut seen = HashSet::new();
        let combos: Vec<Vec<PulseLabel>> = if g == 1 {
            self.alphabet.iter().map(|&a| vec![a]).collect()
        } else {
            self.alphabet
                .iter()
                .flat_map(|&a| self.alphabet.iter().map(move |&b| vec![a, b]))
                .collect()
        };
        for genes in combos {
            let c = Chromosome {
                layout: layout.clone(),
                genes,
            };
            if c.is_cyclic() && seen.insert(c.decode()) {
                all.push(c);
            }
        }
        if all.is_empty() {
            return Err(GaError::EmptySearchSpace);
        }
        if all.len() > self.cfg.q {
            let mut rng = self.rng(0, 0, Purpose::Init);
            all.shuffle(&mut rng);
            all.truncate(self.cfg.q);
        }
        let mut pop = self.members(all)?;
        pop.sort_by(rank);
        Ok(pop)
    }

    /// Top `n` members of `pool` whose sequences are not yet in `taken`.
    fn take_best(pool: &mut Vec<Member>, taken: &mut HashSet<Vec<PulseLabel>>, n: usize) -> Vec<Member> {
        pool.sort_by(rank);
        let mut out = Vec::new();
        let mut rest = Vec::new();
        for m in pool.drain(..) {
            if out.len() < n && !taken.contains(&m.pulses) {
                taken.insert(m.pulses.clone());
                out.push(m);
            } else {
                rest.push(m);
            }
        }
        *pool = rest;
        out
    }

    fn refill(
        &mut self,
        pop: &mut Vec<Member>,
        taken: &mut HashSet<Vec<PulseLabel>>,
        leftovers: &mut Vec<Member>,
        layout: &Arc<Layout>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), GaError> {
        let q = self.cfg.q;
        let mut fresh = Vec::new();
        let mut excl = taken.clone();
        while pop.len() + fresh.len() < q {
            match random_chromosome(layout, &self.alphabet, &excl, rng) {
                Some(c) => {
                    excl.insert(c.decode());
                    fresh.push(c);
                }
                None => break,
            }
        }
        let mut fresh = self.members(fresh)?;
        let n = fresh.len();
        pop.extend(Self::take_best(&mut fresh, taken, n));
        let need = q.saturating_sub(pop.len());
        pop.extend(Self::take_best(leftovers, taken, need));
        Ok(())
    }

    /// One generation of reproduction, mutation and selection at temperature `t`.
    pub fn evolve_generation(&mut self, pop: &[Member], t: f64, generation: usize) -> Result<Vec<Member>, GaError> {
        let q = self.cfg.q;
        let layout = pop[0].chromosome.layout.clone();
        let level = layout.level;

        // Offspring from annealed selection of distinct parents.
        let mut offspring = Vec::with_capacity(2 * q);
        if pop.len() >= 2 {
            let fit: Vec<f64> = pop.iter().map(|m| m.fitness).collect();
            let probs = selection_probabilities(&fit, t);
            let pick = WeightedIndex::new(&probs).expect("probabilities are positive");
            let mut sel = self.rng(level, generation, Purpose::Selection);
            let mut splice = self.rng(level, generation, Purpose::Splice);
            for _ in 0..q {
                let a = pick.sample(&mut sel);
                let mut b = pick.sample(&mut sel);
                let mut tries = 0;
                while b == a && tries < 64 {
                    b = pick.sample(&mut sel);
                    tries += 1;
                }
                if b == a {
                    b = (a + 1 + sel.gen_range(0..pop.len() - 1)) % pop.len();
                }
                let (o1, o2) = crossover(&pop[a].chromosome, &pop[b].chromosome, &self.alphabet, &mut splice);
                offspring.push(o1);
                offspring.push(o2);
            }
        }
        let mut offspring = self.members(offspring)?;
        let mut refill_rng = self.rng(level, generation, Purpose::Refill);

        // Interim pool.
        let mut parents: Vec<Member> = pop.to_vec();
        let mut taken = HashSet::new();
        let mut interim = Self::take_best(&mut parents, &mut taken, q / 4);
        interim.extend(Self::take_best(&mut offspring.clone(), &mut taken, 3 * q / 4));
        let mut none = Vec::new();
        self.refill(&mut interim, &mut taken, &mut none, &layout, &mut refill_rng)?;

        // Mutants of every interim member.
        let mut mrng = self.rng(level, generation, Purpose::Mutation);
        let mut singles = Vec::new();
        let mut doubles = Vec::new();
        for m in &interim {
            if let Some(c) = mutate_single(&m.chromosome, &self.alphabet, &mut mrng) {
                singles.push(c);
            }
            if let Some(c) = mutate_double(&m.chromosome, &self.alphabet, &mut mrng) {
                doubles.push(c);
            }
        }
        let mut singles = self.members(singles)?;
        let mut doubles = self.members(doubles)?;

        // Next population.
        let mut parents: Vec<Member> = pop.to_vec();
        let mut taken = HashSet::new();
        let mut next = Self::take_best(&mut parents, &mut taken, q / 8);
        next.extend(Self::take_best(&mut offspring, &mut taken, 5 * q / 8));
        next.extend(Self::take_best(&mut singles, &mut taken, q / 8));
        next.extend(Self::take_best(&mut doubles, &mut taken, q / 8));
        let mut leftovers: Vec<Member> = parents
            .into_iter()
            .chain(offspring)
            .chain(singles)
            .chain(doubles)
            .chain(interim)
            .collect();
        self.refill(&mut next, &mut taken, &mut leftovers, &layout, &mut refill_rng)?;
        next.sort_by(rank);
        Ok(next)
    }

    /// Move the population to the next level. Decoded sequences are unchanged.
    /// Returns `None` at the top level.
    pub fn increase_complexity(&self, pop: &[Member]) -> Option<Vec<Member>> {
        let layout = Arc::new(pop[0].chromosome.layout.next()?);
        Some(
            pop.iter()
                .map(|m| {
                    let c = Chromosome::encode_majority(layout.clone(), &m.pulses);
                    Member {
                        chromosome: c,
                        pulses: m.pulses.clone(),
                        fitness: m.fitness,
                    }
                })
                .collect(),
        )
    }

    fn initial_temperature(&self, pop: &[Member]) -> f64 {
        self.cfg.t0.unwrap_or_else(|| {
            let hi = pop.iter().map(|m| m.fitness).fold(f64::NEG_INFINITY, f64::max);
            let lo = pop.iter().map(|m| m.fitness).fold(f64::INFINITY, f64::min);
            (hi - lo).max(2.0 * self.cfg.tf)
        })
    }

    /// Full search over all levels.
    pub fn run(&mut self) -> Result<GaResult, GaError> {
        let k = self.cfg.k;
        let max_level = Layout::max_level(k);
        let gens = self.cfg.generations();
        let mut pop = self.initial_population()?;
        let mut best = pop[0].clone();
        let mut history = Vec::new();
        let mut level_bests = Vec::new();
        let mut candidates: Vec<Vec<PulseLabel>> = pop.iter().map(|m| m.pulses.clone()).collect();
        for level in 0..=max_level {
            if level > 0 {
                pop = self.increase_complexity(&pop).expect("level below the maximum");
            }
            let t0 = self.initial_temperature(&pop);
            let mut level_best = pop[0].clone();
            for generation in 0..gens {
                let t = temperature(generation, t0, &self.cfg);
                pop = self.evolve_generation(&pop, t, generation)?;
                let top = &pop[0];
                if rank(top, &level_best) == Ordering::Less {
                    level_best = top.clone();
                }
                if rank(top, &best) == Ordering::Less {
                    best = top.clone();
                }
                let mean = pop.iter().map(|m| m.fitness).sum::<f64>() / pop.len() as f64;
                history.push(HistoryRow {
                    level,
                    generation,
                    groups: top.chromosome.layout.groups.len(),
                    temperature: t,
                    best_q: top.fitness,
                    mean_q: mean,
                    best_sequence: label_text(&top.pulses),
                    evaluations: self.cache.len(),
                });
            }
            level_bests.push(LevelBest {
                level,
                groups: level_best.chromosome.layout.groups.len(),
                ktilde: ktilde(level),
                sequence: label_text(&level_best.pulses),
                q: level_best.fitness,
            });
            candidates.push(level_best.pulses.clone());
        }
        debug_assert!(pop[0].chromosome.layout.is_singletons());
        candidates.push(best.pulses.clone());
        candidates.extend(pop.iter().map(|m| m.pulses.clone()));
        let (best_pulses, best_q) = self.final_ranking(candidates, best)?;
        Ok(GaResult {
            best: Sequence::uniform(format!("ga_k{k}"), self.cfg.tau_d, &best_pulses),
            best_q,
            history,
            level_bests,
        })
    }

    fn final_ranking(&self, mut cands: Vec<Vec<PulseLabel>>, best: Member) -> Result<(Vec<PulseLabel>, f64), GaError> {
        if self.cfg.final_seeds.is_empty() {
            return Ok((best.pulses, best.fitness));
        }
        cands.sort();
        cands.dedup();
        let systems = build_systems(&self.cfg, &self.cfg.final_seeds)?;
        let scored: Vec<Result<f64, ModelError>> = cands
            .par_iter()
            .map(|p| mean_fitness(p, &systems, &self.cfg.pulse_model, self.cfg.tau_d))
            .collect();
        let mut out: Option<(Vec<PulseLabel>, f64)> = None;
        for (p, q) in cands.into_iter().zip(scored) {
            let q = q?;
            let better = match &out {
                None => true,
                Some((bp, bq)) => q > *bq || (q == *bq && label_text(&p) < label_text(bp)),
            };
            if better {
                out = Some((p, q));
            }
        }
        Ok(out.expect("at least one candidate"))
    }
}

fn build_systems(cfg: &GaConfig, seeds: &[u64]) -> Result<Vec<SystemModel>, GaError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let spec = BathSpec::new(cfg.n_spins, seed, cfg.j, cfg.beta)?;
            SystemModel::random(&spec)
        })
        .collect::<Result<Vec<_>, ModelError>>()
        .map_err(GaError::from)
}

fn mean_fitness(p: &[PulseLabel], systems: &[SystemModel], model: &PulseModel, tau_d: f64) -> Result<f64, ModelError> {
    let seq = Sequence::uniform("candidate", tau_d, p);
    let mut sum = 0.0;
    for sys in systems {
        sum += fitness(evaluate(&seq, sys, model)?.d);
    }
    Ok(sum / systems.len() as f64)
}

/// Run the whole search described by `cfg`.
pub fn run_ga(cfg: GaConfig) -> Result<GaResult, GaError> {
    GaRun::new(cfg)?.run()
}
