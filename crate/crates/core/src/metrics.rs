//! Channel distances: diamond norm, best correction unitary, process fidelity.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::C64;
use crate::ptm::{ptm_of_euler_zyz, ptm_to_choi, SuperOp};
use crate::sdp::{self, Problem, Settings, SolverStatus};

/// Whether distances are reported as `‖Φ−Ψ‖⋄` or half of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    #[default]
    Unhalved,
    Halved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiamondResult {
    pub value: f64,
    pub status: SolverStatus,
    /// Absolute primal-dual objective gap (unhalved units).
    pub gap: f64,
    pub convention: Convention,
}

/// Real symmetric embedding `[[Re, −Im], [Im, Re]]` of a Hermitian matrix.
fn embed<const N: usize>(h: &nalgebra::SMatrix<C64, N, N>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2 * N, 2 * N);
    for i in 0..N {
        for j in 0..N {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + N, j + N)] = z.re;
            out[(i, j + N)] = -z.im;
            out[(i + N, j)] = z.im;
        }
    }
    out
}

/// Partial trace over the output (second) factor of a two-qubit operator.
fn trace_out(m: &Matrix4<C64>) -> Matrix2<C64> {
    Matrix2::from_fn(|i, j| m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)])
}

/// Basis of the 16-dimensional real space of 4×4 Hermitian matrices.
fn hermitian_basis() -> Vec<Matrix4<C64>> {
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(16);
    for a in 0..4 {
        for b in a..4 {
            let mut m = Matrix4::zeros();
            m[(a, b)] = one;
            m[(b, a)] = one;
            out.push(m);
            if a != b {
                let mut m = Matrix4::zeros();
                m[(a, b)] = -i;
                m[(b, a)] = i;
                out.push(m);
            }
        }
    }
    out
}

/// Dual-form diamond-norm program for a Hermiticity-preserving map with Choi
/// matrix `j`:
///
/// minimize t  subject to  Z ⪰ 2J,  Z ⪰ 0,  t·I ⪰ Tr_out(Z − J).
///
/// Written with `y = (t, coordinates of Z)` and objective `max −t`.
fn diamond_problem(j: &Matrix4<C64>) -> Problem {
    let sizes = vec![8, 8, 4];
    let c = vec![-embed(j) * 2.0, DMatrix::zeros(8, 8), embed(&trace_out(j))];
    let mut a = vec![vec![DMatrix::zeros(8, 8), DMatrix::zeros(8, 8), -DMatrix::identity(4, 4)]];
    for h in hermitian_basis() {
        let e = embed(&h);
        a.push(vec![-e.clone(), -e, embed(&trace_out(&h))]);
    }
    let mut b = DVector::zeros(17);
    b[0] = -1.0;
    Problem { sizes, c, a, b }
}

/// Diamond norm of `g − h` (unhalved).
pub fn diamond_distance(g: &SuperOp, h: &SuperOp) -> DiamondResult {
    diamond_distance_with(g, h, Convention::Unhalved)
}

pub fn diamond_distance_with(g: &SuperOp, h: &SuperOp, convention: Convention) -> DiamondResult {
    let diff = SuperOp(g.0 - h.0);
    let factor = match convention {
        Convention::Unhalved => 1.0,
        Convention::Halved => 0.5,
    };
    if diff.max_abs_entry() == 0.0 {
        return DiamondResult { value: 0.0, status: SolverStatus::Converged, gap: 0.0, convention };
    }
    let sol = sdp::solve(&diamond_problem(&ptm_to_choi(&diff)), &Settings::default());
    let value = -0.5 * (sol.primal_objective + sol.dual_objective);
    DiamondResult { value: factor * value.max(0.0), status: sol.status, gap: sol.gap(), convention }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFit {
    /// Euler z-y-z angles of the correction, each in [−π, π].
    pub angles: [f64; 3],
    pub uncorrected: f64,
    pub corrected: f64,
    /// `uncorrected / corrected` (≥ 1).
    pub improvement_ratio: f64,
}

fn wrap_angle(a: f64) -> f64 {
    if (-std::f64::consts::PI..=std::f64::consts::PI).contains(&a) {
        return a;
    }
    let t = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(t) - std::f64::consts::PI;
    if w < -std::f64::consts::PI { w + t } else { w }
}

/// Nelder-Mead on a 3-vector. Returns the best vertex and its value.
fn nelder_mead<F: Fn(&[f64; 3]) -> f64>(f: F, x0: [f64; 3], step: f64, max_iter: usize) -> ([f64; 3], f64) {
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((x0, f(&x0)));
    for k in 0..3 {
        let mut x = x0;
        x[k] += step;
        simplex.push((x, f(&x)));
    }
    let lerp = |a: &[f64; 3], b: &[f64; 3], t: f64| -> [f64; 3] { [0, 1, 2].map(|i| a[i] + t * (b[i] - a[i])) };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[3].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| (0..3).map(|i| (x[i] - simplex[0].0[i]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < 1e-10 || diameter < 1e-6 {
            break;
        }
        let centroid = [0, 1, 2].map(|i| (simplex[0].0[i] + simplex[1].0[i] + simplex[2].0[i]) / 3.0);
        let worst = simplex[3];
        let xr = lerp(&centroid, &worst.0, -1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &worst.0, -2.0);
            let fe = f(&xe);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = lerp(&centroid, &worst.0, -0.5);
                (x, f(&x))
            } else {
                let x = lerp(&centroid, &worst.0, 0.5);
                (x, f(&x))
            };
            if fc < worst.1.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let x = lerp(&best, &v.0, 0.5);
                    *v = (x, f(&x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Deterministic starting angles: the identity and a 2×2×2 grid.
fn correction_starts() -> Vec<[f64; 3]> {
    let q = std::f64::consts::FRAC_PI_4;
    let mut out = vec![[0.0; 3]];
    for a in [-q, q] {
        for b in [-q, q] {
            for c in [-q, q] {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// Best unitary `U` (3 Euler angles) minimizing `‖U·g − I‖⋄`.
pub fn fit_correction_unitary(g: &SuperOp) -> CorrectionFit {
    let id = SuperOp::identity();
    let objective = |a: &[f64; 3]| diamond_distance(&SuperOp(ptm_of_euler_zyz(a).0 * g.0), &id).value;
    let uncorrected = objective(&[0.0; 3]);
    let runs: Vec<([f64; 3], f64)> = correction_starts()
        .into_par_iter()
        .map(|x0| nelder_mead(objective, x0, 0.05, 2000))
        .collect();
    let (best, value) = runs
        .into_iter()
        .fold(([0.0; 3], uncorrected), |acc, r| if r.1 < acc.1 { r } else { acc });
    let angles = best.map(wrap_angle);
    CorrectionFit {
        angles,
        uncorrected,
        corrected: value,
        improvement_ratio: if value > 0.0 { uncorrected / value } else { f64::INFINITY },
    }
}

/// Entanglement fidelity `Tr(J(g)·J(h))/4`, clamped to [0, 1].
pub fn process_fidelity(g: &SuperOp, h: &SuperOp) -> f64 {
    (g.0.component_mul(&h.0).sum() / 4.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    /// `1 − corrected/uncorrected`.
    pub fraction: f64,
    /// `(uncorrected − floor)/(corrected − floor)`; `None` when corrected equals the floor.
    pub reduction_factor: Option<f64>,
}

pub fn coherence_fraction(uncorrected: f64, corrected: f64, floor: f64) -> Coherence {
    let fraction = if uncorrected > 0.0 { 1.0 - corrected / uncorrected } else { 0.0 };
    let denom = corrected - floor;
    Coherence {
        fraction,
        reduction_factor: if denom.abs() <= f64::EPSILON * corrected.abs().max(1.0) {
            None
        } else {
            Some((uncorrected - floor) / denom)
        },
    }
}

/// One row of the metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub label: String,
    pub context: String,
    pub d_diamond: f64,
    pub d_corrected: f64,
    pub angles: [f64; 3],
    pub coherence_fraction: f64,
}

pub fn metrics_row(label: &crate::label::GateLabel, estimate: &SuperOp, target: &SuperOp, convention: Convention) -> MetricsRow {
    // Correct relative to the target: U·(G_p⁻¹·G) − I.
    let noise = target.0.try_inverse().map(|inv| SuperOp(inv * estimate.0)).unwrap_or_else(|| *estimate);
    let d = diamond_distance_with(estimate, target, convention).value;
    let fit = fit_correction_unitary(&noise);
    let factor = match convention {
        Convention::Unhalved => 1.0,
        Convention::Halved => 0.5,
    };
    let corrected = (fit.corrected * factor).min(d);
    MetricsRow {
        label: label.to_string(),
        context: label.context.to_string(),
        d_diamond: d,
        d_corrected: corrected,
        angles: fit.angles,
        coherence_fraction: coherence_fraction(d, corrected, 0.0).fraction,
    }
}
