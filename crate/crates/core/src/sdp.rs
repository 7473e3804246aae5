//! Small dense primal-dual interior-point solver for block-diagonal real
//! semidefinite programs.
//!
//! Primal: minimize ⟨C, X⟩ subject to ⟨A_i, X⟩ = b_i, X ⪰ 0.
//! Dual:   maximize bᵀy subject to C − Σ y_i A_i = S ⪰ 0.
//!
//! Uses the HKM search direction with Mehrotra predictor-corrector steps and
//! an infeasible starting point. Intended for problems with a few dozen
//! constraints and blocks of size ≤ 32.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub type Blocks = Vec<DMatrix<f64>>;

#[derive(Debug, Clone)]
pub struct Problem {
    /// Block sizes.
    pub sizes: Vec<usize>,
    pub c: Blocks,
    /// One block-diagonal matrix per constraint.
    pub a: Vec<Blocks>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    /// Numerical breakdown (factorization failed); best iterate returned.
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolverStatus,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub x: Blocks,
    pub y: DVector<f64>,
    pub s: Blocks,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
}

impl Solution {
    pub fn gap(&self) -> f64 {
        (self.primal_objective - self.dual_objective).abs()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { tolerance: 1e-10, max_iterations: 100 }
    }
}

fn inner(a: &Blocks, b: &Blocks) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn axpy(alpha: f64, x: &Blocks, y: &Blocks) -> Blocks {
    x.iter().zip(y).map(|(a, b)| b + a * alpha).collect()
}

fn norm(a: &Blocks) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl Problem {
    fn op_a(&self, x: &Blocks) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|ai| inner(ai, x)))
    }

    fn op_at(&self, y: &DVector<f64>) -> Blocks {
        let mut out: Blocks = self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (ai, yi) in self.a.iter().zip(y.iter()) {
            for (o, a) in out.iter_mut().zip(ai) {
                *o += a * *yi;
            }
        }
        out
    }

    fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }
}

/// Largest step α ≤ 1 keeping `x + α·dx` positive semidefinite (before damping).
fn max_step(x: &Blocks, dx: &Blocks) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        let l = xb.clone().cholesky()?.l();
        let linv = l.clone().try_inverse()?;
        let m = sym(&linv * db * linv.transpose());
        let lmin = m.symmetric_eigenvalues().min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    Some(alpha)
}

fn inverse_blocks(x: &Blocks) -> Option<Blocks> {
    x.iter().map(|m| m.clone().cholesky().map(|c| c.inverse())).collect()
}

pub fn solve(p: &Problem, settings: &Settings) -> Solution {
    let n = p.dim() as f64;
    let m = p.a.len();
    let scale = 10.0_f64.max(norm(&p.c)).max(p.b.amax());
    let mut x: Blocks = p.sizes.iter().map(|&k| DMatrix::identity(k, k) * scale).collect();
    let mut s: Blocks = p.sizes.iter().map(|&k| DMatrix::identity(k, k) * scale).collect();
    let mut y = DVector::zeros(m);
    let bnorm = 1.0 + p.b.amax();
    let cnorm = 1.0 + norm(&p.c);

    let mut status = SolverStatus::MaxIterations;
    let mut iterations = 0;
    for it in 0..settings.max_iterations {
        iterations = it;
        let rp = &p.b - p.op_a(&x);
        let at_y = p.op_at(&y);
        let rd: Blocks = p.c.iter().zip(&s).zip(&at_y).map(|((c, s), a)| c - s - a).collect();
        let mu = inner(&x, &s) / n;
        let pobj = inner(&p.c, &x);
        let dobj = p.b.dot(&y);
        let pinf = rp.amax() / bnorm;
        let dinf = norm(&rd) / cnorm;
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if pinf < settings.tolerance && dinf < settings.tolerance && rel_gap < settings.tolerance {
            status = SolverStatus::Converged;
            break;
        }

        let Some(sinv) = inverse_blocks(&s) else {
            status = SolverStatus::NumericalFailure;
            break;
        };
        // Schur complement M_ij = ⟨A_i, X A_j S⁻¹⟩.
        let xa_sinv: Vec<Blocks> = p
            .a
            .iter()
            .map(|aj| aj.iter().zip(&x).zip(&sinv).map(|((a, xb), si)| xb * a * si).collect())
            .collect();
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = inner(&p.a[i], &xa_sinv[j]);
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        let Some(chol) = schur.clone().cholesky() else {
            status = SolverStatus::NumericalFailure;
            break;
        };

        let x_rd_sinv: Blocks = x.iter().zip(&rd).zip(&sinv).map(|((xb, r), si)| xb * r * si).collect();
        let a_x_rd_sinv = p.op_a(&x_rd_sinv);

        // rc is the complementarity target; returns (dx, dy, ds).
        let direction = |rc: &Blocks| -> (Blocks, DVector<f64>, Blocks) {
            let rc_sinv: Blocks = rc.iter().zip(&sinv).map(|(r, si)| r * si).collect();
            let rhs = &rp - p.op_a(&rc_sinv) + &a_x_rd_sinv;
            let dy = chol.solve(&rhs);
            let at_dy = p.op_at(&dy);
            let ds: Blocks = rd.iter().zip(&at_dy).map(|(r, a)| r - a).collect();
            let dx: Blocks = rc_sinv
                .iter()
                .zip(&x)
                .zip(&ds)
                .zip(&sinv)
                .map(|(((rcs, xb), d), si)| sym(rcs - xb * d * si))
                .collect();
            (dx, dy, ds)
        };

        let xs: Blocks = x.iter().zip(&s).map(|(a, b)| a * b).collect();
        let rc_aff: Blocks = xs.iter().map(|v| -v).collect();
        let (dx_a, _, ds_a) = direction(&rc_aff);
        let (Some(ap), Some(ad)) = (max_step(&x, &dx_a), max_step(&s, &ds_a)) else {
            status = SolverStatus::NumericalFailure;
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff = inner(&axpy(ap, &dx_a, &x), &axpy(ad, &ds_a, &s)) / n;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let rc: Blocks = p
            .sizes
            .iter()
            .zip(&xs)
            .zip(dx_a.iter().zip(&ds_a))
            .map(|((&k, xsb), (dxb, dsb))| DMatrix::identity(k, k) * (sigma * mu) - xsb - dxb * dsb)
            .collect();
        let (dx, dy, ds) = direction(&rc);
        let (Some(ap), Some(ad)) = (max_step(&x, &dx), max_step(&s, &ds)) else {
            status = SolverStatus::NumericalFailure;
            break;
        };
        let ap = (0.98 * ap).min(1.0);
        let ad = (0.98 * ad).min(1.0);
        x = axpy(ap, &dx, &x).into_iter().map(sym).collect();
        s = axpy(ad, &ds, &s).into_iter().map(sym).collect();
        y += dy * ad;
    }

    let rp = &p.b - p.op_a(&x);
    let at_y = p.op_at(&y);
    let rd: Blocks = p.c.iter().zip(&s).zip(&at_y).map(|((c, s), a)| c - s - a).collect();
    Solution {
        status,
        primal_objective: inner(&p.c, &x),
        dual_objective: p.b.dot(&y),
        primal_infeasibility: rp.amax(),
        dual_infeasibility: norm(&rd),
        x,
        y,
        s,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_eigenvalue_as_sdp() {
        // λmax(C) = min t s.t. tI − C ⪰ 0, i.e. max −t with A = −I.
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let lmax = c.clone().symmetric_eigenvalues().max();
        let p = Problem {
            sizes: vec![3],
            c: vec![-c],
            a: vec![vec![-DMatrix::identity(3, 3)]],
            b: DVector::from_vec(vec![-1.0]),
        };
        let sol = solve(&p, &Settings::default());
        assert_eq!(sol.status, SolverStatus::Converged);
        assert!((-sol.dual_objective - lmax).abs() < 1e-8);
        assert!(sol.gap() < 1e-8);
    }

    #[test]
    fn two_blocks_with_linear_part() {
        // min x1 + x2 over diagonal 1×1 blocks with x1 + x2 = 1 and x1 − x2 = 0.5 → 1.
        let p = Problem {
            sizes: vec![1, 1],
            c: vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)],
            a: vec![
                vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)],
                vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, -1.0)],
            ],
            b: DVector::from_vec(vec![1.0, 0.5]),
        };
        let sol = solve(&p, &Settings::default());
        assert_eq!(sol.status, SolverStatus::Converged);
        assert!((sol.primal_objective - 1.0).abs() < 1e-8);
        assert!((sol.x[0][(0, 0)] - 0.75).abs() < 1e-6);
    }
}
