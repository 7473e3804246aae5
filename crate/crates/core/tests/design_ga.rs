use cagst::circuit::{enumerate_circuits, resolve, validate_compiled, ContextSpec};
use cagst::design::{ga_run, select_fiducials, select_germs, DesignConfig, GaConfig, SearchSpace};
use cagst::fixtures;
use cagst::pipeline::perfect_for;
use cagst::ptm::GateSet;
use cagst::sensitivity::{build_b, germ_constraint_check, germ_fitness, BDesign};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Ten slots over a four-letter alphabet; fitness is minus the Hamming
/// distance to a hidden target.
struct Slots;

const TARGET: [u8; 10] = [3, 1, 0, 1, 2, 0, 2, 3, 1, 0];

impl SearchSpace for Slots {
    type Candidate = Vec<u8>;
    fn random(&self, rng: &mut ChaCha8Rng) -> Vec<u8> {
        (0..10).map(|_| rng.random_range(0..4)).collect()
    }
    fn crossover(&self, a: &Vec<u8>, b: &Vec<u8>, rng: &mut ChaCha8Rng) -> Vec<u8> {
        a.iter().zip(b).map(|(x, y)| if rng.random_bool(0.5) { *x } else { *y }).collect()
    }
    fn mutate(&self, c: &mut Vec<u8>, rng: &mut ChaCha8Rng) {
        let i = rng.random_range(0..c.len());
        c[i] = rng.random_range(0..4);
    }
}

fn hamming(c: &Vec<u8>) -> f64 {
    -(c.iter().zip(TARGET).filter(|(a, b)| **a != *b).count() as f64)
}

#[test]
fn ga_recovers_a_hidden_target() {
    let cfg = GaConfig { stall_generations: 30, seed: 4, ..Default::default() };
    let out = ga_run(hamming, &Slots, &cfg, &[]);
    assert_eq!(out.best, TARGET.to_vec());
    assert_eq!(out.fitness, 0.0);
}

#[test]
fn ga_is_deterministic_and_monotone() {
    let cfg = GaConfig { seed: 11, ..Default::default() };
    let a = ga_run(hamming, &Slots, &cfg, &[]);
    let b = ga_run(hamming, &Slots, &cfg, &[]);
    assert_eq!(a.best, b.best);
    assert_eq!(a.history, b.history);
    assert!(a.history.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(a.history.len(), a.generations + 1);
}

#[test]
fn constant_fitness_stops_after_the_stall_budget() {
    let cfg = GaConfig { stall_generations: 4, ..Default::default() };
    let out = ga_run(|_| 1.0, &Slots, &cfg, &[]);
    assert_eq!(out.generations, 4);
}

#[test]
fn fiducials_are_distinct() {
    let choice = select_fiducials(&GateSet::standard(), &DesignConfig::default()).unwrap();
    for side in [&choice.preps, &choice.meass] {
        assert_eq!(side.len(), 6);
        for i in 0..side.len() {
            assert!(side[i].len() <= 3);
            for j in i + 1..side.len() {
                assert_ne!(side[i], side[j]);
            }
        }
    }
}

#[test]
fn published_sets_are_feasible_in_their_contexts() {
    for (name, ctx) in [("g_ref", ContextSpec::none()), ("g", ContextSpec::none()), ("g6", ContextSpec::none()), ("g_ct", ContextSpec::crosstalk()), ("g_mem", ContextSpec::memory())] {
        let f = fixtures::f_ref_for(&ctx);
        let germs = fixtures::germ_set(name).unwrap();
        let max_l = fixtures::max_repetition(name).unwrap();
        let b = build_b(&perfect_for(&ctx), &BDesign { preps: &f, meass: &f, germs: &germs, max_l, ctx: &ctx }).unwrap();
        assert!(germ_constraint_check(&b).is_empty(), "{name}");
        assert!(germ_fitness(&b) > 0.0, "{name}");
    }
}

#[test]
fn context_free_germ_search_matches_the_published_yardstick() {
    let ctx = ContextSpec::none();
    let gs = GateSet::standard();
    let f = fixtures::f_ref();
    let g = fixtures::germ_set("g").unwrap();
    let yardstick = germ_fitness(&build_b(&gs, &BDesign { preps: &f, meass: &f, germs: &g, max_l: 7, ctx: &ctx }).unwrap());
    let set = select_germs(&gs, &f, &f, &DesignConfig::default(), &ctx).unwrap();
    assert!(set.feasible && set.violations.is_empty());
    assert_eq!(set.germs.len(), 11);
    assert!(set.fitness >= 0.5 * yardstick, "{} vs {}", set.fitness, yardstick);

    let recomputed = germ_fitness(&build_b(&gs, &BDesign { preps: &f, meass: &f, germs: &set.germs, max_l: 7, ctx: &ctx }).unwrap());
    assert_eq!(recomputed, set.fitness);
}

#[test]
fn memory_germs_survive_repetition() {
    let ctx = ContextSpec::memory();
    let f = fixtures::f_ref_for(&ctx);
    let cfg = DesignConfig {
        germ_count: 6,
        max_l: 3,
        max_germ_length: 5,
        ga: GaConfig { population: 16, stall_generations: 4, max_generations: 30, seed: 3, ..Default::default() },
        ..Default::default()
    };
    let set = select_germs(&perfect_for(&ctx), &f, &f, &cfg, &ctx).unwrap();
    for germ in &set.germs {
        let twice: Vec<_> = germ.iter().chain(germ).copied().collect();
        let compiled = resolve(&twice, &ctx).unwrap_or_else(|e| panic!("{germ:?}: {e}"));
        assert!(validate_compiled(&compiled));
    }
    for c in enumerate_circuits(&f, &f, &set.germs, cfg.max_l, &ctx).unwrap() {
        assert!(validate_compiled(&c));
    }
}

#[test]
fn idle_only_alphabet_is_infeasible() {
    let cfg = DesignConfig {
        germ_count: 1,
        max_l: 3,
        germ_alphabet: Some(vec![cagst::GateLabel::free(cagst::BaseGate::I)]),
        ga: GaConfig { population: 6, stall_generations: 2, ..Default::default() },
        ..Default::default()
    };
    let f = fixtures::f_ref();
    let set = select_germs(&GateSet::standard(), &f, &f, &cfg, &ContextSpec::none()).unwrap();
    assert!(!set.feasible);
    assert!(!set.violations.is_empty());
}
