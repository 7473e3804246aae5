//! Fiducial and germ selection.
//!
//! Fiducials are chosen from all short sequences by greedy construction
//! followed by swap refinement of the fiducial fitness. Germ sets are
//! evolved with an elitist genetic algorithm on the germ fitness, with
//! infeasible sets (growth-constraint violations) ranked below feasible ones.

use nalgebra::{RowVector4, Vector4};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{ContextMode, ContextSpec, Germ};
use crate::label::{BaseGate, Context, GateLabel};
use crate::ptm::{GateSet, PtmError};
use crate::sensitivity::{
    build_b, fiducial_fitness, fiducial_sides, germ_constraint_check, germ_fitness, t_from_sides, BDesign,
    FiducialFitness, SensitivityError, SensitivityMatrix, Violation,
};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("no informationally complete fiducial set exists over gates {0:?}")]
    NotInformationallyComplete(Vec<BaseGate>),
    #[error("invalid design configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ptm(#[from] PtmError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub stall_generations: usize,
    pub max_generations: usize,
    /// Probability that a child is mutated.
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub tournament: usize,
    pub elite: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 40,
            stall_generations: 10,
            max_generations: 200,
            mutation_rate: 0.6,
            crossover_rate: 0.8,
            tournament: 3,
            elite: 2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub max_fiducial_length: usize,
    pub fiducials_per_side: usize,
    pub germ_count: usize,
    /// Longest germ in the initial population and after mutation.
    pub max_germ_length: usize,
    /// Maximum repetition index `L`.
    pub max_l: u32,
    pub ga: GaConfig,
    /// Restricts the labels germs are built from (default: the context's).
    #[serde(default)]
    pub germ_alphabet: Option<Vec<GateLabel>>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            max_fiducial_length: 3,
            fiducials_per_side: 6,
            germ_count: 11,
            max_germ_length: 4,
            max_l: 7,
            ga: GaConfig::default(),
            germ_alphabet: None,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<(), DesignError> {
        if self.fiducials_per_side < 6 {
            return Err(DesignError::Config("at least 6 fiducials per side are required".into()));
        }
        if self.max_l < 2 {
            return Err(DesignError::Config("maximum repetition index must be >= 2".into()));
        }
        if self.germ_count == 0 || self.max_germ_length == 0 {
            return Err(DesignError::Config("germ count and germ length must be >= 1".into()));
        }
        if self.ga.population < 2 || self.ga.tournament == 0 || self.ga.elite >= self.ga.population {
            return Err(DesignError::Config("GA needs population >= 2, tournament >= 1, elite < population".into()));
        }
        Ok(())
    }
}

/// All sequences over `alphabet` of length `0..=max_len`, shortest first.
pub fn all_sequences(alphabet: &[BaseGate], max_len: usize) -> Vec<Vec<BaseGate>> {
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..max_len {
        let next: Vec<Vec<BaseGate>> = layer
            .iter()
            .flat_map(|s: &Vec<BaseGate>| {
                alphabet.iter().map(move |&b| {
                    let mut t = s.clone();
                    t.push(b);
                    t
                })
            })
            .collect();
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Ordering key: informationally complete sets first, then fitness.
fn fid_key(f: &FiducialFitness) -> (bool, f64) {
    (!f.non_ic, f.value)
}

fn better(a: &FiducialFitness, b: &FiducialFitness) -> bool {
    let (ka, kb) = (fid_key(a), fid_key(b));
    ka.0 && !kb.0 || ka.0 == kb.0 && ka.1 > kb.1 * (1.0 + 1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiducialChoice {
    pub preps: Vec<Germ>,
    pub meass: Vec<Germ>,
    pub fitness: FiducialFitness,
}

/// Choose preparation and measurement fiducials over the base gates of
/// `gs_perfect`.
pub fn select_fiducials(gs_perfect: &GateSet, cfg: &DesignConfig) -> Result<FiducialChoice, DesignError> {
    let mut bases: Vec<BaseGate> = Vec::new();
    for l in gs_perfect.labels() {
        if !bases.contains(&l.base) {
            bases.push(l.base);
        }
    }
    let mut free = GateSet::perfect(bases.iter().map(|&b| GateLabel::free(b)));
    free.prep = gs_perfect.prep;
    free.meas = gs_perfect.meas;

    let candidates: Vec<Germ> = all_sequences(&bases, cfg.max_fiducial_length)
        .into_iter()
        .map(|s| s.into_iter().map(GateLabel::free).collect())
        .collect();
    let (pv, mr) = fiducial_sides(&free, &candidates, &candidates)?;
    let k = cfg.fiducials_per_side.min(candidates.len());

    let eval = |p: &[usize], m: &[usize]| -> FiducialFitness {
        let pvs: Vec<Vector4<f64>> = p.iter().map(|&i| pv[i]).collect();
        let mrs: Vec<RowVector4<f64>> = m.iter().map(|&i| mr[i]).collect();
        fiducial_fitness(&t_from_sides(&pvs, &mrs))
    };

    // Greedy: add the (prep, meas) pair with the best marginal fitness.
    let (mut p, mut m): (Vec<usize>, Vec<usize>) = (Vec::new(), Vec::new());
    for _ in 0..k {
        let mut best: Option<(usize, usize, FiducialFitness)> = None;
        for a in (0..candidates.len()).filter(|a| !p.contains(a)) {
            for b in (0..candidates.len()).filter(|b| !m.contains(b)) {
                let (mut pp, mut mm) = (p.clone(), m.clone());
                pp.push(a);
                mm.push(b);
                let f = eval(&pp, &mm);
                if best.as_ref().is_none_or(|(_, _, bf)| better(&f, bf)) {
                    best = Some((a, b, f));
                }
            }
        }
        let (a, b, _) = best.expect("candidate space is nonempty");
        p.push(a);
        m.push(b);
    }

    // Swap refinement until no single replacement improves.
    let mut current = eval(&p, &m);
    loop {
        let mut improved = false;
        for side in 0..2 {
            for pos in 0..k {
                for c in 0..candidates.len() {
                    let list = if side == 0 { &p } else { &m };
                    if list.contains(&c) {
                        continue;
                    }
                    let (mut pp, mut mm) = (p.clone(), m.clone());
                    if side == 0 { pp[pos] = c } else { mm[pos] = c }
                    let f = eval(&pp, &mm);
                    if better(&f, &current) {
                        p = pp;
                        m = mm;
                        current = f;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    if current.non_ic {
        return Err(DesignError::NotInformationallyComplete(bases));
    }
    p.sort_unstable();
    m.sort_unstable();
    Ok(FiducialChoice {
        preps: p.iter().map(|&i| candidates[i].clone()).collect(),
        meass: m.iter().map(|&i| candidates[i].clone()).collect(),
        fitness: current,
    })
}

/// Candidate generation and variation for [`ga_run`].
pub trait SearchSpace: Sync {
    type Candidate: Clone + Send + Sync;
    fn random(&self, rng: &mut ChaCha8Rng) -> Self::Candidate;
    fn crossover(&self, a: &Self::Candidate, b: &Self::Candidate, rng: &mut ChaCha8Rng) -> Self::Candidate;
    fn mutate(&self, c: &mut Self::Candidate, rng: &mut ChaCha8Rng);
}

#[derive(Debug, Clone)]
pub struct GaOutcome<C> {
    pub best: C,
    pub fitness: f64,
    pub generations: usize,
    /// Best fitness after each generation (index 0: initial population).
    pub history: Vec<f64>,
}

fn tournament(fit: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.random_range(0..fit.len());
    for _ in 1..size {
        let i = rng.random_range(0..fit.len());
        if fit[i] > fit[best] {
            best = i;
        }
    }
    best
}

/// Elitist GA maximizing `fitness`. `seeds` are injected into the initial
/// population. Stops after `stall_generations` generations without
/// improvement of the best fitness.
pub fn ga_run<S, F>(fitness: F, space: &S, cfg: &GaConfig, seeds: &[S::Candidate]) -> GaOutcome<S::Candidate>
where
    S: SearchSpace,
    F: Fn(&S::Candidate) -> f64 + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pop: Vec<S::Candidate> = seeds.iter().take(cfg.population).cloned().collect();
    while pop.len() < cfg.population {
        pop.push(space.random(&mut rng));
    }
    let evaluate = |pop: &[S::Candidate]| -> Vec<f64> { pop.par_iter().map(&fitness).collect() };
    let mut fit = evaluate(&pop);

    let argmax = |fit: &[f64]| (0..fit.len()).fold(0, |b, i| if fit[i] > fit[b] { i } else { b });
    let mut best_i = argmax(&fit);
    let mut best = (pop[best_i].clone(), fit[best_i]);
    let mut history = vec![best.1];
    let mut stall = 0;
    let mut generations = 0;

    while stall < cfg.stall_generations && generations < cfg.max_generations {
        generations += 1;
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[b].total_cmp(&fit[a]));
        let mut next: Vec<S::Candidate> = order.iter().take(cfg.elite).map(|&i| pop[i].clone()).collect();
        while next.len() < cfg.population {
            let a = tournament(&fit, cfg.tournament, &mut rng);
            let mut child = if rng.random_bool(cfg.crossover_rate) {
                let b = tournament(&fit, cfg.tournament, &mut rng);
                space.crossover(&pop[a], &pop[b], &mut rng)
            } else {
                pop[a].clone()
            };
            if rng.random_bool(cfg.mutation_rate) {
                space.mutate(&mut child, &mut rng);
            }
            next.push(child);
        }
        pop = next;
        fit = evaluate(&pop);
        best_i = argmax(&fit);
        if fit[best_i] > best.1 {
            best = (pop[best_i].clone(), fit[best_i]);
            stall = 0;
        } else {
            stall += 1;
        }
        history.push(best.1);
    }
    GaOutcome { best: best.0, fitness: best.1, generations, history }
}

/// Germ sets of fixed size over a label alphabet.
#[derive(Debug, Clone)]
pub struct GermSpace {
    pub alphabet: Vec<GateLabel>,
    pub germ_count: usize,
    pub max_len: usize,
}

impl GermSpace {
    fn random_germ(&self, rng: &mut ChaCha8Rng) -> Germ {
        let n = rng.random_range(1..=self.max_len);
        (0..n).map(|_| *self.alphabet.choose(rng).expect("alphabet nonempty")).collect()
    }
}

impl SearchSpace for GermSpace {
    type Candidate = Vec<Germ>;

    fn random(&self, rng: &mut ChaCha8Rng) -> Vec<Germ> {
        (0..self.germ_count).map(|_| self.random_germ(rng)).collect()
    }

    fn crossover(&self, a: &Vec<Germ>, b: &Vec<Germ>, rng: &mut ChaCha8Rng) -> Vec<Germ> {
        a.iter().zip(b).map(|(x, y)| if rng.random_bool(0.5) { x.clone() } else { y.clone() }).collect()
    }

    fn mutate(&self, c: &mut Vec<Germ>, rng: &mut ChaCha8Rng) {
        let g = &mut c[rng.random_range(0..self.germ_count)];
        let label = *self.alphabet.choose(rng).expect("alphabet nonempty");
        match rng.random_range(0..4) {
            0 if g.len() < self.max_len => g.insert(rng.random_range(0..=g.len()), label),
            1 if g.len() > 1 => {
                g.remove(rng.random_range(0..g.len()));
            }
            2 => *g = self.random_germ(rng),
            _ => {
                let i = rng.random_range(0..g.len());
                g[i] = label;
            }
        }
    }
}

/// Germ labels for `ctx` from context-free base sequences. In memory mode
/// the first gate floats (its context comes from whatever precedes it,
/// including the previous repetition) and later gates take the successor
/// context of their predecessor.
pub fn contextualize_germ(germ: &[GateLabel], ctx: &ContextSpec) -> Germ {
    match ctx.mode {
        ContextMode::Memory => germ
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if i == 0 {
                    GateLabel::floating(l.base)
                } else {
                    let prev = germ[i - 1].base;
                    GateLabel::at(l.base, ctx.successor.get(&prev).copied().unwrap_or(prev.class() + 1))
                }
            })
            .collect(),
        _ => germ.to_vec(),
    }
}

/// Labels germs are built from.
pub fn germ_alphabet(ctx: &ContextSpec) -> Vec<GateLabel> {
    match ctx.mode {
        ContextMode::Memory => BaseGate::ALL.iter().map(|&b| GateLabel::free(b)).collect(),
        _ => {
            let mut out = ctx.alphabet.clone();
            for l in &ctx.ancillary {
                if !out.contains(l) {
                    out.push(*l);
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermSet {
    pub germs: Vec<Germ>,
    pub fitness: f64,
    pub feasible: bool,
    pub violations: Vec<Violation>,
    pub config: DesignConfig,
}

/// Evolve a germ set maximizing `min(B^L)` subject to row growth.
pub fn select_germs(
    gs_perfect: &GateSet,
    preps: &[Germ],
    meass: &[Germ],
    cfg: &DesignConfig,
    ctx: &ContextSpec,
) -> Result<GermSet, DesignError> {
    cfg.validate()?;
    let alphabet = cfg.germ_alphabet.clone().unwrap_or_else(|| germ_alphabet(ctx));
    if alphabet.is_empty() {
        return Err(DesignError::Config("germ alphabet is empty".into()));
    }
    let space = GermSpace { alphabet, germ_count: cfg.germ_count, max_len: cfg.max_germ_length };
    let score = |cand: &Vec<Germ>| -> Option<SensitivityMatrix> {
        let germs: Vec<Germ> = cand.iter().map(|g| contextualize_germ(g, ctx)).collect();
        build_b(gs_perfect, &BDesign { preps, meass, germs: &germs, max_l: cfg.max_l, ctx }).ok()
    };
    let fitness = |cand: &Vec<Germ>| score(cand).map_or(f64::NEG_INFINITY, |b| germ_fitness(&b));
    let out = ga_run(fitness, &space, &cfg.ga, &[]);
    let germs: Vec<Germ> = out.best.iter().map(|g| contextualize_germ(g, ctx)).collect();
    let b = build_b(gs_perfect, &BDesign { preps, meass, germs: &germs, max_l: cfg.max_l, ctx })?;
    let violations = germ_constraint_check(&b);
    Ok(GermSet { germs, fitness: germ_fitness(&b), feasible: violations.is_empty(), violations, config: cfg.clone() })
}

/// Whether `germ` only uses floating or explicit contexts (never `Free`)
/// when the context spec requires them.
pub fn germ_contexts_resolved(germ: &[GateLabel], ctx: &ContextSpec) -> bool {
    match ctx.mode {
        ContextMode::None => germ.iter().all(|l| l.context == Context::Free),
        _ => germ.iter().all(|l| l.context != Context::Free),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sensitivity::fiducial_t;

    #[test]
    fn forty_short_sequences() {
        assert_eq!(all_sequences(&BaseGate::ALL, 3).len(), 40);
    }

    #[test]
    fn fiducials_reach_reference_fitness() {
        let gs = GateSet::standard();
        let choice = select_fiducials(&gs, &DesignConfig::default()).unwrap();
        let f = fixtures::f_ref();
        let reference = fiducial_fitness(&fiducial_t(&gs, &f, &f).unwrap());
        assert!(!choice.fitness.non_ic);
        assert!(choice.fitness.value >= reference.value * (1.0 - 1e-9));
        for side in [&choice.preps, &choice.meass] {
            for i in 0..side.len() {
                for j in i + 1..side.len() {
                    assert_ne!(side[i], side[j]);
                }
            }
        }
    }

    #[test]
    fn idle_only_has_no_complete_fiducials() {
        let gs = GateSet::perfect([GateLabel::free(BaseGate::I)]);
        assert!(matches!(
            select_fiducials(&gs, &DesignConfig::default()),
            Err(DesignError::NotInformationallyComplete(_))
        ));
    }

    struct Flat;
    impl SearchSpace for Flat {
        type Candidate = u32;
        fn random(&self, rng: &mut ChaCha8Rng) -> u32 {
            rng.random()
        }
        fn crossover(&self, a: &u32, _: &u32, _: &mut ChaCha8Rng) -> u32 {
            *a
        }
        fn mutate(&self, c: &mut u32, rng: &mut ChaCha8Rng) {
            *c = rng.random();
        }
    }

    #[test]
    fn constant_fitness_stops_after_stall_window() {
        let cfg = GaConfig { stall_generations: 7, ..GaConfig::default() };
        let out = ga_run(|_| 1.0, &Flat, &cfg, &[]);
        assert_eq!(out.generations, 7);
    }

    #[test]
    fn memory_germs_float_first_gate() {
        let ctx = ContextSpec::memory();
        let g = contextualize_germ(&[GateLabel::free(BaseGate::Rx), GateLabel::free(BaseGate::I)], &ctx);
        assert_eq!(g, vec![GateLabel::floating(BaseGate::Rx), GateLabel::at(BaseGate::I, 1)]);
        assert!(germ_contexts_resolved(&g, &ctx));
    }

    #[test]
    fn single_idle_germ_is_infeasible() {
        let ctx = ContextSpec::none();
        let gs = GateSet::standard();
        let f = fixtures::f_ref();
        let cfg = DesignConfig {
            germ_count: 1,
            max_germ_length: 1,
            max_l: 3,
            ga: GaConfig { population: 4, stall_generations: 2, ..GaConfig::default() },
            germ_alphabet: Some(vec![GateLabel::free(BaseGate::I)]),
            ..DesignConfig::default()
        };
        let set = select_germs(&gs, &f, &f, &cfg, &ctx).unwrap();
        assert!(!set.feasible);
        assert!(!set.violations.is_empty());
    }
}
