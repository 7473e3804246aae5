use cagst::circuit::{enumerate_circuits, CompiledCircuit, ContextSpec};
use cagst::dataset::Dataset;
use cagst::fixtures;
use cagst::label::{BaseGate, GateLabel};
use cagst::metrics::diamond_distance;
use cagst::ptm::GateSet;
use cagst::qpu::{exact_dataset, make_gateset, sample_dataset, NoiseRecipe, VirtualQpu};
use cagst::reconstruct::{loss, minimize_l1, reconstruct, smoothed_step, Bounds, FitProblem, FitStatus, ResidualModel, SolverState, StepOutcome};
use nalgebra::{DMatrix, DVector};

fn design(max_l: u32) -> Vec<CompiledCircuit> {
    let f = fixtures::f_ref();
    enumerate_circuits(&f, &f, &fixtures::germ_set("g").unwrap(), max_l, &ContextSpec::none()).unwrap()
}

fn noisy(seed: u64, scale: f64) -> VirtualQpu {
    make_gateset(&NoiseRecipe::new(seed, scale), &GateSet::standard(), &ContextSpec::none()).unwrap()
}

#[test]
fn exact_data_is_fit_to_machine_precision() {
    let circuits = design(7);
    let qpu = noisy(3, 1.0);
    let ds = exact_dataset(&qpu, &circuits).unwrap();
    assert_eq!(loss(&qpu.truth, &ds).unwrap(), 0.0);

    let problem = FitProblem::new(GateSet::standard());
    let fit = reconstruct(&ds, &problem).unwrap();
    assert!(fit.loss <= 1e-8, "loss {}", fit.loss);
    assert_eq!(fit.status, FitStatus::ToleranceMet);
    assert!(fit.loss <= loss(&problem.target, &ds).unwrap());
    assert!((loss(&fit.estimate, &ds).unwrap() - fit.loss).abs() <= 1e-10);
    assert!(problem.bounds().contains(&problem.encode(&fit.estimate)));
    for g in fit.estimate.gates.values() {
        assert_eq!(g.rows()[0], [1.0, 0.0, 0.0, 0.0]);
    }
    assert_eq!(fit.residuals.len(), ds.len());

    let idle = GateLabel::free(BaseGate::I);
    let inaccuracy = diamond_distance(&fit.estimate.gates[&idle], &qpu.truth.gates[&idle]).value;
    assert!(inaccuracy <= 1e-4, "idle inaccuracy {inaccuracy}");
}

#[test]
fn perfect_data_returns_the_perfect_gate_set() {
    let perfect = GateSet::standard();
    let qpu = VirtualQpu { truth: perfect.clone(), seed: 0 };
    let ds = exact_dataset(&qpu, &design(4)).unwrap();
    let fit = reconstruct(&ds, &FitProblem::new(perfect.clone())).unwrap();
    assert_eq!(fit.loss, 0.0);
    assert_eq!(fit.estimate, perfect);
}

#[test]
fn finite_shot_estimate_beats_the_truth() {
    let circuits = design(4);
    let qpu = noisy(8, 1.0);
    let ds = sample_dataset(&qpu, &circuits, 100_000, 17).unwrap();
    let fit = reconstruct(&ds, &FitProblem::new(GateSet::standard())).unwrap();
    let truth_loss = loss(&qpu.truth, &ds).unwrap();
    assert!(fit.loss <= truth_loss, "estimate {} truth {}", fit.loss, truth_loss);
}

#[test]
fn reconstruction_is_deterministic() {
    let circuits = design(3);
    let ds = sample_dataset(&noisy(4, 2.0), &circuits, 1000, 9).unwrap();
    let mut problem = FitProblem::new(GateSet::standard());
    problem.restarts = 2;
    problem.seed = 5;
    let a = reconstruct(&ds, &problem).unwrap();
    let b = reconstruct(&ds, &problem).unwrap();
    assert_eq!(a.estimate, b.estimate);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn restarts_never_worsen_the_fit() {
    let circuits = design(3);
    let ds = sample_dataset(&noisy(6, 2.0), &circuits, 1000, 2).unwrap();
    let single = reconstruct(&ds, &FitProblem::new(GateSet::standard())).unwrap();
    let mut problem = FitProblem::new(GateSet::standard());
    problem.restarts = 3;
    let multi = reconstruct(&ds, &problem).unwrap();
    assert!(multi.loss <= single.loss);
}

#[test]
fn removing_circuits_degrades_the_idle_estimate() {
    let qpu = noisy(12, 1.0);
    let idle = GateLabel::free(BaseGate::I);
    let errors: Vec<f64> = [7, 3, 1]
        .iter()
        .map(|&l| {
            let ds = exact_dataset(&qpu, &design(l)).unwrap();
            let fit = reconstruct(&ds, &FitProblem::new(GateSet::standard())).unwrap();
            diamond_distance(&fit.estimate.gates[&idle], &qpu.truth.gates[&idle]).value
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[0] <= w[1]), "{errors:?}");
}

#[test]
fn untied_memory_fit_reproduces_exact_data_too() {
    let ctx = ContextSpec::memory();
    let perfect = cagst::pipeline::perfect_for(&ctx);
    let recipe = NoiseRecipe::new(3, 1.0).with_distinct_contexts(&[1, 2, 3]);
    let qpu = make_gateset(&recipe, &perfect, &ctx).unwrap();
    let f = fixtures::f_ref_for(&ctx);
    let circuits = enumerate_circuits(&f, &f, &fixtures::germ_set("g_mem").unwrap(), 3, &ctx).unwrap();
    let ds = exact_dataset(&qpu, &circuits).unwrap();
    let fit = reconstruct(&ds, &FitProblem::new(perfect)).unwrap();
    assert!(fit.loss <= 1e-8, "loss {}", fit.loss);
}

#[test]
fn coverage_of_truncated_datasets_is_partial() {
    let circuits = design(2);
    let full = exact_dataset(&noisy(1, 1.0), &circuits).unwrap();
    let truncated = Dataset { records: full.records[..full.len() - 3].to_vec() };
    let missing = cagst::pipeline::missing_circuits(&circuits, &truncated);
    assert_eq!(missing.len(), 3);
}

#[test]
fn context_differences_are_recovered() {
    let ctx = ContextSpec::memory();
    let perfect = cagst::pipeline::perfect_for(&ctx);
    let recipe = NoiseRecipe::new(21, 2.0).with_distinct_contexts_for(&[1, 2, 3], &[BaseGate::I]);
    let qpu = make_gateset(&recipe, &perfect, &ctx).unwrap();
    let f = fixtures::f_ref_for(&ctx);
    let circuits = enumerate_circuits(&f, &f, &fixtures::germ_set("g_mem").unwrap(), 6, &ctx).unwrap();
    let ds = exact_dataset(&qpu, &circuits).unwrap();
    let problem = FitProblem::new(perfect).tie_bases(&[BaseGate::Rx, BaseGate::Ry]);
    assert_eq!(problem.n_vars(), 12 * 5 + 8);
    let fit = reconstruct(&ds, &problem).unwrap();
    assert!(fit.loss <= 1e-8);
    assert_eq!(fit.estimate.gates[&GateLabel::at(BaseGate::Rx, 1)], fit.estimate.gates[&GateLabel::at(BaseGate::Rx, 3)]);

    let idles: Vec<GateLabel> = (1..=3).map(|k| GateLabel::at(BaseGate::I, k)).collect();
    for i in 0..3 {
        for j in i + 1..3 {
            let injected = (qpu.truth.gates[&idles[i]].0 - qpu.truth.gates[&idles[j]].0).norm();
            let recovered = (fit.estimate.gates[&idles[i]].0 - fit.estimate.gates[&idles[j]].0).norm();
            assert!((recovered - injected).abs() <= 0.2 * injected, "{i}{j}: {recovered} vs {injected}");
        }
    }
}

/// `r_i(x) = sin(a_i·x) − b_i`, a smooth nonlinear model with a nonzero
/// optimum.
struct Waves {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl ResidualModel for Waves {
    fn n_vars(&self) -> usize {
        self.a.ncols()
    }
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.a * x).map(f64::sin) - &self.b
    }
    fn residuals_and_jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let ax = &self.a * x;
        let mut j = self.a.clone();
        for (i, mut row) in j.row_iter_mut().enumerate() {
            row *= ax[i].cos();
        }
        (self.residuals(x), j)
    }
}

fn waves(seed: u64) -> Waves {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(12, 4, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_fn(12, |_, _| rng.random_range(-0.5..0.5));
    Waves { a, b }
}

#[test]
fn accepted_steps_descend_inside_the_box() {
    for seed in 0..10 {
        let model = waves(seed);
        let bounds = Bounds { lower: DVector::from_element(4, -0.3), upper: DVector::from_element(4, 0.4) };
        let mut state = SolverState::new(&model, DVector::zeros(4), 1e-3);
        let mut l1 = model.residuals(&state.x).abs().sum();
        for _ in 0..200 {
            let outcome = smoothed_step(&model, &bounds, &mut state);
            assert!(bounds.contains(&state.x));
            let now = model.residuals(&state.x).abs().sum();
            assert!(now <= l1 + 1e-15, "seed {seed}: {now} > {l1}");
            l1 = now;
            if matches!(outcome, StepOutcome::Stationary) {
                break;
            }
        }
        let full = minimize_l1(&model, &bounds, &DVector::zeros(4), &Default::default());
        assert!(bounds.contains(&full.x));
        assert!(full.loss <= model.residuals(&DVector::zeros(4)).abs().sum());
    }
}
