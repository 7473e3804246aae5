//! First-order coefficients checked against finite differences and
//! brute-force aggregation.

use cagst::circuit::ContextSpec;
use cagst::fixtures;
use cagst::ptm::{ptm_of_unitary, GateSet, SuperOp};
use cagst::sensitivity::{
    build_b, coefficient_matrices, entry_coefficient, germ_fitness, BDesign, CoefficientKind, EntryTarget,
};
use cagst::{BaseGate, Germ, GateLabel};
use nalgebra::{Matrix4, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LABELS: [GateLabel; 3] = [
    GateLabel::free(BaseGate::Rx),
    GateLabel::free(BaseGate::Ry),
    GateLabel::free(BaseGate::I),
];

fn noisy_standard(rng: &mut ChaCha8Rng) -> GateSet {
    let mut gs = GateSet::standard();
    for l in LABELS {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let kick = ptm_of_unitary(&axis.normalize(), rng.random_range(0.0..0.05)).unwrap();
        let g = *gs.gate(&l).unwrap();
        gs = gs.with_gate(l, SuperOp(g.0 * kick.0));
    }
    gs
}

fn random_seq(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<GateLabel> {
    let n = rng.random_range(1..=max_len);
    (0..n).map(|_| LABELS[rng.random_range(0..3)]).collect()
}

fn perturbed(gs: &GateSet, t: &EntryTarget, x: f64, kind: CoefficientKind) -> GateSet {
    let g = gs.gate(&t.gate).unwrap().0;
    let mut e = Matrix4::zeros();
    e[(t.row, t.col)] = x;
    let new = match kind {
        CoefficientKind::ErrorGeneratorEntry => g * e.exp(),
        CoefficientKind::SuperOpEntry => g + e,
    };
    gs.clone().with_gate(t.gate, SuperOp(new))
}

fn central_difference(gs: &GateSet, seq: &[GateLabel], t: &EntryTarget, kind: CoefficientKind) -> f64 {
    let eps = 1e-6;
    let up = perturbed(gs, t, eps, kind).evaluate(seq).unwrap();
    let down = perturbed(gs, t, -eps, kind).evaluate(seq).unwrap();
    (up - down) / (2.0 * eps)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn coefficients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for trial in 0..300 {
        let gs = if trial % 2 == 0 { GateSet::standard() } else { noisy_standard(&mut rng) };
        let seq = random_seq(&mut rng, 24);
        let t = EntryTarget { gate: LABELS[rng.random_range(0..3)], row: rng.random_range(1..4), col: rng.random_range(0..4) };
        for kind in [CoefficientKind::ErrorGeneratorEntry, CoefficientKind::SuperOpEntry] {
            let a = entry_coefficient(&gs, &seq, &t, kind).unwrap();
            let fd = central_difference(&gs, &seq, &t, kind);
            worst = worst.max(rel_err(a, fd));
        }
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn superop_coefficient_is_product_of_sides() {
    // Brute force: the probability is linear in one entry, so the
    // coefficient equals E(entry = 1) − E(entry = 0) with other gates fixed
    // when the gate occurs once.
    let gs = GateSet::standard();
    let seq = [LABELS[0], LABELS[2], LABELS[1]];
    for (row, col) in cagst::sensitivity::nontrivial_entries() {
        let t = EntryTarget { gate: LABELS[2], row, col };
        let a = entry_coefficient(&gs, &seq, &t, CoefficientKind::SuperOpEntry).unwrap();
        let base = gs.evaluate(&seq).unwrap();
        let bumped = perturbed(&gs, &t, 1.0, CoefficientKind::SuperOpEntry).evaluate(&seq).unwrap();
        assert!((bumped - base - a).abs() < 1e-14);
    }
}

#[test]
fn published_germs_outscore_bare_idle() {
    let ctx = ContextSpec::none();
    let gs = GateSet::standard();
    let f = fixtures::f_ref();
    let g = fixtures::germ_set("g").unwrap();
    let idle: Vec<Germ> = vec![vec![LABELS[2]]];
    let bg = build_b(&gs, &BDesign { preps: &f, meass: &f, germs: &g, max_l: 4, ctx: &ctx }).unwrap();
    let bi = build_b(&gs, &BDesign { preps: &f, meass: &f, germs: &idle, max_l: 4, ctx: &ctx }).unwrap();
    assert!(germ_fitness(&bg) > germ_fitness(&bi));
}

fn seq_strategy() -> impl Strategy<Value = Vec<GateLabel>> {
    prop::collection::vec(0usize..3, 1..16).prop_map(|v| v.into_iter().map(|i| LABELS[i]).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_add_over_occurrences(a in seq_strategy(), b in seq_strategy(), seed in 0u64..1000) {
        // Coefficients of the spliced sequence ab equal the sum of the
        // contributions of each half, with the other half folded into the
        // preparation or measurement.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gs = noisy_standard(&mut rng);
        let whole: Vec<GateLabel> = a.iter().chain(&b).copied().collect();
        let total = coefficient_matrices(&gs, &whole, CoefficientKind::ErrorGeneratorEntry).unwrap();

        let mut first = gs.clone();
        first.meas.0 = (gs.meas.row() * gs.sequence_op(&b).unwrap().0).transpose();
        let mut second = gs.clone();
        second.prep.0 = gs.sequence_op(&a).unwrap().0 * gs.prep.0;
        let ca = coefficient_matrices(&first, &a, CoefficientKind::ErrorGeneratorEntry).unwrap();
        let cb = coefficient_matrices(&second, &b, CoefficientKind::ErrorGeneratorEntry).unwrap();
        for l in LABELS {
            let sum = ca.get(&l).copied().unwrap_or_else(Matrix4::zeros) + cb.get(&l).copied().unwrap_or_else(Matrix4::zeros);
            let t = total.get(&l).copied().unwrap_or_else(Matrix4::zeros);
            prop_assert!((sum - t).abs().max() < 1e-12);
        }
    }

    #[test]
    fn adding_a_germ_never_decreases_b(extra in seq_strategy()) {
        let ctx = ContextSpec::none();
        let gs = GateSet::standard();
        let f = fixtures::f_ref();
        let g6 = fixtures::germ_set("g6").unwrap();
        let base: Vec<Germ> = g6[..3].to_vec();
        let mut more = base.clone();
        more.push(extra);
        let b0 = build_b(&gs, &BDesign { preps: &f, meass: &f, germs: &base, max_l: 3, ctx: &ctx }).unwrap();
        let b1 = build_b(&gs, &BDesign { preps: &f, meass: &f, germs: &more, max_l: 3, ctx: &ctx }).unwrap();
        for (r0, r1) in b0.data.iter().zip(&b1.data) {
            for (x0, x1) in r0.iter().zip(r1) {
                prop_assert!(x1 + 1e-12 >= *x0);
            }
        }
    }
}
