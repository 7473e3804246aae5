//! Gate-set estimation by box-constrained L1 fitting of outcome frequencies.
//!
//! The L1 loss `Σ_c |p_c(θ) − f_c|` is minimized through a sequence of
//! Huber-smoothed problems with a shrinking threshold δ. Each smoothed
//! problem is solved by a damped, iteratively reweighted Gauss-Newton method
//! with an active-set projection onto the box. A step is accepted only when
//! it satisfies an Armijo condition on the smoothed loss and does not
//! increase the L1 loss.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix4, RowVector4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::label::{BaseGate, GateLabel};
use crate::ptm::{GateSet, MeasVec, PtmError, StateVec, SuperOp};

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bounds of variable {index} are empty: [{lower}, {upper}]")]
    EmptyBounds { index: usize, lower: f64, upper: f64 },
    #[error(transparent)]
    Ptm(#[from] PtmError),
}

/// Residuals `r(x)` and their Jacobian for the generic solver.
pub trait ResidualModel: Sync {
    fn n_vars(&self) -> usize;
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;
    fn residuals_and_jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Bounds {
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        x.zip_zip_map(&self.lower, &self.upper, |v, l, u| v.clamp(l, u))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter().zip(self.lower.iter().zip(self.upper.iter())).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    fn check(&self) -> Result<(), ReconstructError> {
        for (index, (l, u)) in self.lower.iter().zip(self.upper.iter()).enumerate() {
            if !(l <= u) {
                return Err(ReconstructError::EmptyBounds { index, lower: *l, upper: *u });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub delta_start: f64,
    pub delta_end: f64,
    /// Factor applied to δ between stages.
    pub delta_factor: f64,
    pub max_stage_iterations: usize,
    pub max_iterations: usize,
    /// Step size (∞-norm) below which a stage is converged.
    pub step_tolerance: f64,
    /// A stage is also converged when `loss_window` accepted steps lower
    /// the L1 loss by less than this fraction.
    pub loss_tolerance: f64,
    pub loss_window: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            delta_start: 1e-3,
            delta_end: 1e-8,
            delta_factor: 0.1,
            max_stage_iterations: 300,
            max_iterations: 3000,
            step_tolerance: 1e-12,
            loss_tolerance: 1e-8,
            loss_window: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    ToleranceMet,
    /// No further descent step could be found before the tolerance was met.
    Stalled,
    MaxIterations,
}

/// Residuals at this level are treated as exact fits (rounding floor of
/// long products of 4×4 matrices).
pub const RESIDUAL_FLOOR: f64 = 1e-13;

fn huber(r: &DVector<f64>, delta: f64) -> f64 {
    r.iter()
        .map(|v| {
            let a = v.abs();
            if a <= delta { v * v / (2.0 * delta) } else { a - delta / 2.0 }
        })
        .sum()
}

fn l1(r: &DVector<f64>) -> f64 {
    r.iter().map(|v| v.abs()).sum()
}

/// Optimizer state carried between smoothed steps.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: DVector<f64>,
    pub delta: f64,
    /// Levenberg-Marquardt damping.
    pub lambda: f64,
    pub loss: f64,
    pub iterations: usize,
}

impl SolverState {
    pub fn new<M: ResidualModel>(model: &M, x: DVector<f64>, delta: f64) -> Self {
        let loss = l1(&model.residuals(&x));
        SolverState { x, delta, lambda: 1e-8, loss, iterations: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Step taken; carries its ∞-norm.
    Accepted(f64),
    /// The point is stationary for the current δ (or the loss is zero).
    Stationary,
    /// No acceptable step; damping increased.
    Rejected,
}

/// One damped projected Gauss-Newton step on the Huber-smoothed L1 loss.
pub fn smoothed_step<M: ResidualModel>(model: &M, bounds: &Bounds, state: &mut SolverState) -> StepOutcome {
    state.iterations += 1;
    let (r, jac) = model.residuals_and_jacobian(&state.x);
    if r.amax() <= RESIDUAL_FLOOR {
        return StepOutcome::Stationary;
    }
    let delta = state.delta;
    let psi = r.map(|v| if v.abs() <= delta { v / delta } else { v.signum() });
    let grad = jac.tr_mul(&psi);
    let sqrt_w = r.map(|v| 1.0 / v.abs().max(delta).sqrt());
    let mut jw = jac.clone();
    for (mut row, w) in jw.row_iter_mut().zip(sqrt_w.iter()) {
        row *= *w;
    }
    let hess = jw.tr_mul(&jw);

    let n = model.n_vars();
    let at_bound = |i: usize| {
        let x = state.x[i];
        (x <= bounds.lower[i] && grad[i] > 0.0) || (x >= bounds.upper[i] && grad[i] < 0.0)
    };
    let free: Vec<usize> = (0..n).filter(|&i| !at_bound(i)).collect();
    if free.is_empty() {
        return StepOutcome::Stationary;
    }
    let proj_grad = free.iter().map(|&i| grad[i].abs()).fold(0.0, f64::max);
    if proj_grad == 0.0 {
        return StepOutcome::Stationary;
    }

    let k = free.len();
    let mut h = DMatrix::from_fn(k, k, |a, b| hess[(free[a], free[b])]);
    let scale = (0..k).map(|a| h[(a, a)]).fold(0.0, f64::max).max(1e-300);
    for a in 0..k {
        h[(a, a)] += state.lambda * (h[(a, a)] + 1e-12 * scale);
    }
    let g = DVector::from_fn(k, |a, _| grad[free[a]]);
    let Some(d_free) = h.clone().cholesky().map(|c| c.solve(&(-&g))) else {
        state.lambda = (state.lambda * 10.0).max(1e-8);
        return StepOutcome::Rejected;
    };
    let mut d = DVector::zeros(n);
    for (a, &i) in free.iter().enumerate() {
        d[i] = d_free[a];
    }

    let h0 = huber(&r, delta);
    let l0 = l1(&r);
    let mut alpha = 1.0;
    for _ in 0..30 {
        let trial = bounds.project(&(&state.x + &d * alpha));
        let step = &trial - &state.x;
        let step_norm = step.amax();
        if step_norm == 0.0 {
            break;
        }
        let rt = model.residuals(&trial);
        let (ht, lt) = (huber(&rt, delta), l1(&rt));
        if ht <= h0 + 1e-4 * grad.dot(&step) && lt <= l0 {
            state.x = trial;
            state.loss = lt;
            state.lambda = (state.lambda * 0.3).max(1e-12);
            return StepOutcome::Accepted(step_norm);
        }
        alpha *= 0.5;
    }
    state.lambda = (state.lambda * 10.0).max(1e-8);
    StepOutcome::Rejected
}

#[derive(Debug, Clone)]
pub struct Minimization {
    pub x: DVector<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub status: FitStatus,
}

/// Minimize `Σ|r(x)|` over the box, starting from `x0` (projected into it).
pub fn minimize_l1<M: ResidualModel>(model: &M, bounds: &Bounds, x0: &DVector<f64>, settings: &SolverSettings) -> Minimization {
    let mut state = SolverState::new(model, bounds.project(x0), settings.delta_start);
    let status;
    'stages: loop {
        let mut stage_status = FitStatus::MaxIterations;
        let mut accepted = vec![state.loss];
        for _ in 0..settings.max_stage_iterations {
            if state.iterations >= settings.max_iterations {
                status = FitStatus::MaxIterations;
                break 'stages;
            }
            match smoothed_step(model, bounds, &mut state) {
                StepOutcome::Stationary => {
                    stage_status = FitStatus::ToleranceMet;
                    break;
                }
                StepOutcome::Accepted(norm) if norm <= settings.step_tolerance => {
                    stage_status = FitStatus::ToleranceMet;
                    break;
                }
                StepOutcome::Accepted(_) => {
                    accepted.push(state.loss);
                    let n = accepted.len();
                    if n > settings.loss_window
                        && accepted[n - 1 - settings.loss_window] - state.loss <= settings.loss_tolerance * state.loss
                    {
                        stage_status = FitStatus::ToleranceMet;
                        break;
                    }
                }
                StepOutcome::Rejected if state.lambda > 1e10 => {
                    stage_status = FitStatus::Stalled;
                    break;
                }
                StepOutcome::Rejected => {}
            }
        }
        if state.loss == 0.0 || stage_status == FitStatus::ToleranceMet && state.delta <= settings.delta_end * (1.0 + 1e-9) {
            status = FitStatus::ToleranceMet;
            break;
        }
        if state.delta <= settings.delta_end * (1.0 + 1e-9) {
            status = stage_status;
            break;
        }
        state.delta = (state.delta * settings.delta_factor).max(settings.delta_end);
        state.lambda = 1e-8;
    }
    Minimization { loss: state.loss, x: state.x, iterations: state.iterations, status }
}

/// Fit configuration: the target gate set fixes the labels, the starting
/// point and the box centers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitProblem {
    pub target: GateSet,
    pub gate_margin: f64,
    pub spam_margin: f64,
    /// Extra starts from seeded perturbations of the target.
    pub restarts: usize,
    pub seed: u64,
    pub settings: SolverSettings,
    /// Labels fitted as copies of another label (alias → representative).
    #[serde(default)]
    pub shared: BTreeMap<GateLabel, GateLabel>,
}

impl FitProblem {
    pub fn new(target: GateSet) -> Self {
        FitProblem {
            target,
            gate_margin: 0.1,
            spam_margin: 0.2,
            restarts: 0,
            seed: 0,
            settings: SolverSettings::default(),
            shared: BTreeMap::new(),
        }
    }

    /// Fit every label of the given bases as one operator, whatever its
    /// context. In memory mode this removes the per-frame gauge freedom that
    /// otherwise leaves idles after a rotation unidentifiable.
    pub fn tie_bases(mut self, bases: &[BaseGate]) -> Self {
        for &b in bases {
            let mut labels = self.target.labels().copied().filter(|l| l.base == b);
            if let Some(rep) = labels.next() {
                for l in labels {
                    self.shared.insert(l, rep);
                }
            }
        }
        self
    }

    pub fn labels(&self) -> Vec<GateLabel> {
        self.target.labels().copied().collect()
    }

    /// Labels that own a block of 12 variables.
    pub fn free_labels(&self) -> Vec<GateLabel> {
        self.target.labels().copied().filter(|l| !self.shared.contains_key(l)).collect()
    }

    fn block_index(&self) -> BTreeMap<GateLabel, usize> {
        let free: BTreeMap<GateLabel, usize> = self.free_labels().into_iter().enumerate().map(|(i, l)| (l, i)).collect();
        self.target
            .labels()
            .map(|l| (*l, free[self.shared.get(l).unwrap_or(l)]))
            .collect()
    }

    pub fn n_vars(&self) -> usize {
        12 * self.free_labels().len() + 8
    }

    /// Entry intervals: gates `[p ± margin] ∩ [−1, 1]`, SPAM `[v ± margin] ∩ [−√2, √2]`.
    pub fn bounds(&self) -> Bounds {
        let x = self.encode(&self.target);
        let ng = 12 * self.free_labels().len();
        let s2 = std::f64::consts::SQRT_2;
        let lower = DVector::from_fn(x.len(), |i, _| {
            if i < ng { (x[i] - self.gate_margin).max(-1.0) } else { (x[i] - self.spam_margin).max(-s2) }
        });
        let upper = DVector::from_fn(x.len(), |i, _| {
            if i < ng { (x[i] + self.gate_margin).min(1.0) } else { (x[i] + self.spam_margin).min(s2) }
        });
        Bounds { lower, upper }
    }

    /// Variable vector: rows X, Y, Z of each gate in label order, then prep, then meas.
    pub fn encode(&self, gs: &GateSet) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.n_vars());
        for label in self.free_labels() {
            let g = gs.gates.get(&label).map_or_else(|| self.target.gates[&label].0, |g| g.0);
            for r in 1..4 {
                for c in 0..4 {
                    v.push(g[(r, c)]);
                }
            }
        }
        v.extend(gs.prep.0.iter());
        v.extend(gs.meas.0.iter());
        DVector::from_vec(v)
    }

    pub fn decode(&self, x: &DVector<f64>) -> GateSet {
        let gates = self.block_index().into_iter().map(|(label, n)| (label, SuperOp(block(x, n)))).collect();
        let ng = 12 * self.free_labels().len();
        GateSet {
            prep: StateVec(Vector4::from_fn(|i, _| x[ng + i])),
            meas: MeasVec(Vector4::from_fn(|i, _| x[ng + 4 + i])),
            gates,
        }
    }
}

fn block(x: &DVector<f64>, n: usize) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 0)] = 1.0;
    for r in 1..4 {
        for c in 0..4 {
            m[(r, c)] = x[12 * n + 4 * (r - 1) + c];
        }
    }
    m
}

/// Residual model `p_c(θ) − f_c` over the dataset records.
struct GateSetModel {
    circuits: Vec<Vec<usize>>,
    observed: Vec<f64>,
    n_gates: usize,
}

impl GateSetModel {
    fn new(problem: &FitProblem, ds: &Dataset) -> Result<Self, ReconstructError> {
        let index = problem.block_index();
        let circuits = ds
            .records
            .iter()
            .map(|r| {
                r.circuit
                    .iter()
                    .map(|l| index.get(l).copied().ok_or(PtmError::UnknownLabel(*l)))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let observed = ds.records.iter().map(|r| r.observation.frequency()).collect();
        Ok(GateSetModel { circuits, observed, n_gates: problem.free_labels().len() })
    }

    fn unpack(&self, x: &DVector<f64>) -> (Vec<Matrix4<f64>>, Vector4<f64>, RowVector4<f64>) {
        let ops = (0..self.n_gates).map(|n| block(x, n)).collect();
        let ng = 12 * self.n_gates;
        let rho = Vector4::from_fn(|i, _| x[ng + i]);
        let m = RowVector4::from_fn(|_, i| x[ng + 4 + i]);
        (ops, rho, m)
    }

    fn probability(ops: &[Matrix4<f64>], rho: &Vector4<f64>, m: &RowVector4<f64>, seq: &[usize]) -> f64 {
        let mut v = *rho;
        for &i in seq {
            v = ops[i] * v;
        }
        (m * v)[0]
    }
}

impl ResidualModel for GateSetModel {
    fn n_vars(&self) -> usize {
        12 * self.n_gates + 8
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let (ops, rho, m) = self.unpack(x);
        let vals: Vec<f64> = self
            .circuits
            .par_iter()
            .zip(&self.observed)
            .map(|(seq, f)| Self::probability(&ops, &rho, &m, seq) - f)
            .collect();
        DVector::from_vec(vals)
    }

    fn residuals_and_jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (ops, rho, m) = self.unpack(x);
        let n = self.n_vars();
        let ng = 12 * self.n_gates;
        let rows: Vec<(f64, Vec<f64>)> = self
            .circuits
            .par_iter()
            .zip(&self.observed)
            .map(|(seq, f)| {
                let mut prefix = Vec::with_capacity(seq.len() + 1);
                prefix.push(rho);
                for &i in seq {
                    let v = ops[i] * prefix.last().unwrap();
                    prefix.push(v);
                }
                let p = (m * prefix[seq.len()])[0];
                let mut row = vec![0.0; n];
                let mut suffix = m;
                for t in (0..seq.len()).rev() {
                    let base = 12 * seq[t];
                    for r in 1..4 {
                        for c in 0..4 {
                            row[base + 4 * (r - 1) + c] += suffix[r] * prefix[t][c];
                        }
                    }
                    suffix *= ops[seq[t]];
                }
                for i in 0..4 {
                    row[ng + i] = suffix[i];
                    row[ng + 4 + i] = prefix[seq.len()][i];
                }
                (p - f, row)
            })
            .collect();
        let r = DVector::from_iterator(rows.len(), rows.iter().map(|(v, _)| *v));
        let jac = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].1[j]);
        (r, jac)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub estimate: GateSet,
    pub loss: f64,
    pub iterations: usize,
    /// `model − observed` per record, in dataset order.
    pub residuals: Vec<f64>,
    pub status: FitStatus,
}

/// `Σ_c |p_c(gs) − f_c|`.
pub fn loss(gs: &GateSet, ds: &Dataset) -> Result<f64, PtmError> {
    let terms = ds
        .records
        .par_iter()
        .map(|r| gs.evaluate(&r.circuit).map(|p| (p - r.observation.frequency()).abs()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(terms.iter().sum())
}

pub fn reconstruct(ds: &Dataset, problem: &FitProblem) -> Result<FitResult, ReconstructError> {
    if ds.is_empty() {
        return Err(ReconstructError::EmptyDataset);
    }
    let bounds = problem.bounds();
    bounds.check()?;
    let model = GateSetModel::new(problem, ds)?;
    let x0 = problem.encode(&problem.target);

    let mut starts = vec![x0.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    for _ in 0..problem.restarts {
        let x = DVector::from_fn(x0.len(), |i, _| {
            let half = 0.25 * (bounds.upper[i] - bounds.lower[i]);
            x0[i] + rng.random_range(-half..=half)
        });
        starts.push(bounds.project(&x));
    }

    let mut best: Option<Minimization> = None;
    for s in &starts {
        let run = minimize_l1(&model, &bounds, s, &problem.settings);
        if best.as_ref().is_none_or(|b| run.loss < b.loss) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let residuals = model.residuals(&best.x);
    Ok(FitResult {
        estimate: problem.decode(&best.x),
        loss: l1(&residuals),
        iterations: best.iterations,
        residuals: residuals.iter().copied().collect(),
        status: best.status,
    })
}
