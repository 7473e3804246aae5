//! Pauli transfer matrices for one qubit, gate sets, circuit evaluation,
//! error generators and Choi conversion.
//!
//! States and effects are expanded in the normalized Pauli basis
//! `{I, X, Y, Z}/√2`, so a physical state has first component `1/√2` and
//! every component lies in `[-√2, √2]`. Gate PTMs do not depend on the
//! normalization.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Matrix2, Matrix4, RowVector4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{BaseGate, GateLabel};
use crate::linalg::{self, paulis, LogmFailure, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PtmError {
    #[error("rotation axis must have unit norm (got norm {0})")]
    NonUnitAxis(f64),
    #[error("unknown gate label `{0}`")]
    UnknownLabel(GateLabel),
    #[error("perfect gate is not invertible")]
    Singular,
    #[error("error generator undefined: {0:?}")]
    DegenerateLogarithm(LogmFailure),
}

/// Real 4×4 Pauli transfer matrix in the basis order (I, X, Y, Z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperOp(pub Matrix4<f64>);

impl SuperOp {
    pub fn identity() -> Self {
        SuperOp(Matrix4::identity())
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> Self {
        SuperOp(Matrix4::from_fn(|i, j| rows[i][j]))
    }

    pub fn rows(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[(i, j)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &SuperOp) -> SuperOp {
        SuperOp(self.0 * first.0)
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        (self.0[(0, 0)] - 1.0).abs() <= tol && (1..4).all(|j| self.0[(0, j)].abs() <= tol)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Perfect target gate for a base gate.
    pub fn perfect(base: BaseGate) -> SuperOp {
        let half_pi = std::f64::consts::FRAC_PI_2;
        match base {
            BaseGate::Rx => rotation(&Vector3::x(), half_pi),
            BaseGate::Ry => rotation(&Vector3::y(), half_pi),
            BaseGate::I => SuperOp::identity(),
        }
    }
}

/// Pauli expansion of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVec(pub Vector4<f64>);

impl StateVec {
    /// The ground state `|0⟩⟨0|`.
    pub fn ground() -> Self {
        StateVec(Vector4::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2))
    }

    /// State with the given Bloch vector.
    pub fn from_bloch(b: &Vector3<f64>) -> Self {
        StateVec(Vector4::new(1.0, b.x, b.y, b.z) * FRAC_1_SQRT_2)
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        (self.0[0] - FRAC_1_SQRT_2).abs() <= tol && self.0.iter().all(|v| v.abs() <= 2f64.sqrt() + tol)
    }
}

/// Pauli expansion of the ground-outcome measurement effect, used as a covector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasVec(pub Vector4<f64>);

impl MeasVec {
    /// The projector `|0⟩⟨0|`.
    pub fn ground() -> Self {
        MeasVec(Vector4::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2))
    }

    /// Effect `(I + m·σ)/2`.
    pub fn from_bloch(m: &Vector3<f64>) -> Self {
        MeasVec(Vector4::new(1.0, m.x, m.y, m.z) * FRAC_1_SQRT_2)
    }

    pub fn row(&self) -> RowVector4<f64> {
        self.0.transpose()
    }
}

/// Error generator `L` with `G = G_p · exp(L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorGenerator(pub Matrix4<f64>);

impl ErrorGenerator {
    pub fn zero() -> Self {
        ErrorGenerator(Matrix4::zeros())
    }
}

/// Preparation, measurement and a map from contextual labels to PTMs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "GateSetFile", into = "GateSetFile")]
pub struct GateSet {
    pub prep: StateVec,
    pub meas: MeasVec,
    pub gates: BTreeMap<GateLabel, SuperOp>,
}

impl GateSet {
    pub fn new(prep: StateVec, meas: MeasVec) -> Self {
        GateSet { prep, meas, gates: BTreeMap::new() }
    }

    /// Ideal ground-state preparation and measurement with the perfect gate
    /// for every label.
    pub fn perfect<I: IntoIterator<Item = GateLabel>>(labels: I) -> Self {
        let mut gs = GateSet::new(StateVec::ground(), MeasVec::ground());
        for l in labels {
            gs.gates.insert(l, SuperOp::perfect(l.base));
        }
        gs
    }

    /// The context-free `{Rx, Ry, I}` target gate set.
    pub fn standard() -> Self {
        GateSet::perfect(BaseGate::ALL.iter().map(|&b| GateLabel::free(b)))
    }

    pub fn with_gate(mut self, label: GateLabel, op: SuperOp) -> Self {
        self.gates.insert(label, op);
        self
    }

    pub fn gate(&self, label: &GateLabel) -> Result<&SuperOp, PtmError> {
        self.gates.get(label).ok_or(PtmError::UnknownLabel(*label))
    }

    pub fn labels(&self) -> impl Iterator<Item = &GateLabel> {
        self.gates.keys()
    }

    /// Product of the sequence's PTMs, last gate leftmost.
    pub fn sequence_op(&self, seq: &[GateLabel]) -> Result<SuperOp, PtmError> {
        let mut acc = Matrix4::identity();
        for l in seq {
            acc = self.gate(l)?.0 * acc;
        }
        Ok(SuperOp(acc))
    }

    /// Probability of the ground outcome after running `seq` (time order).
    pub fn evaluate(&self, seq: &[GateLabel]) -> Result<f64, PtmError> {
        let mut v = self.prep.0;
        for l in seq {
            v = self.gate(l)?.0 * v;
        }
        Ok(self.meas.0.dot(&v))
    }
}

/// Free-function form of [`GateSet::evaluate`].
pub fn evaluate_circuit(gs: &GateSet, seq: &[GateLabel]) -> Result<f64, PtmError> {
    gs.evaluate(seq)
}

#[derive(Serialize, Deserialize)]
struct GateSetFile {
    prep: [f64; 4],
    meas: [f64; 4],
    gates: BTreeMap<GateLabel, [[f64; 4]; 4]>,
}

impl From<GateSetFile> for GateSet {
    fn from(f: GateSetFile) -> Self {
        GateSet {
            prep: StateVec(Vector4::from(f.prep)),
            meas: MeasVec(Vector4::from(f.meas)),
            gates: f.gates.into_iter().map(|(k, v)| (k, SuperOp::from_rows(v))).collect(),
        }
    }
}

impl From<GateSet> for GateSetFile {
    fn from(g: GateSet) -> Self {
        GateSetFile {
            prep: g.prep.0.into(),
            meas: g.meas.0.into(),
            gates: g.gates.iter().map(|(k, v)| (*k, v.rows())).collect(),
        }
    }
}

/// PTM of the rotation `exp(-i angle/2 · axis·σ)`.
pub fn ptm_of_unitary(axis: &Vector3<f64>, angle: f64) -> Result<SuperOp, PtmError> {
    let n = axis.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(PtmError::NonUnitAxis(n));
    }
    Ok(rotation(axis, angle))
}

fn rotation(axis: &Vector3<f64>, angle: f64) -> SuperOp {
    let (s, c) = angle.sin_cos();
    let k = axis.cross_matrix();
    let r3 = nalgebra::Matrix3::identity() + k * s + k * k * (1.0 - c);
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(1, 1).copy_from(&r3);
    SuperOp(m)
}

/// PTM of `Rz(a) · Ry(b) · Rz(c)` (the `c` rotation acts first).
pub fn ptm_of_euler_zyz(angles: &[f64; 3]) -> SuperOp {
    let z = Vector3::z();
    let y = Vector3::y();
    SuperOp(rotation(&z, angles[0]).0 * rotation(&y, angles[1]).0 * rotation(&z, angles[2]).0)
}

/// `L = log(perfect⁻¹ · noisy)` on the principal branch.
pub fn error_generator(noisy: &SuperOp, perfect: &SuperOp) -> Result<ErrorGenerator, PtmError> {
    let inv = perfect.0.try_inverse().ok_or(PtmError::Singular)?;
    let l = linalg::logm(&(inv * noisy.0)).map_err(PtmError::DegenerateLogarithm)?;
    Ok(ErrorGenerator(l))
}

/// `perfect · exp(s·L)`; `s = 0` returns `perfect` unchanged.
pub fn apply_error(perfect: &SuperOp, gen: &ErrorGenerator, s: f64) -> SuperOp {
    if s == 0.0 {
        return *perfect;
    }
    SuperOp(perfect.0 * linalg::expm(&(gen.0 * s)))
}

/// Choi matrix `Σ_ab |a⟩⟨b| ⊗ Φ(|a⟩⟨b|)` (input factor first); trace 2
/// for trace-preserving maps.
pub fn ptm_to_choi(g: &SuperOp) -> Matrix4<C64> {
    let p = paulis();
    let mut out = Matrix4::<C64>::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let mut e = Matrix2::<C64>::zeros();
            e[(a, b)] = C64::new(1.0, 0.0);
            let image = apply_to_operator(g, &p, &e);
            for r in 0..2 {
                for c in 0..2 {
                    out[(2 * a + r, 2 * b + c)] = image[(r, c)];
                }
            }
        }
    }
    out
}

/// Image of an arbitrary 2×2 operator under the channel.
fn apply_to_operator(g: &SuperOp, p: &[Matrix2<C64>; 4], x: &Matrix2<C64>) -> Matrix2<C64> {
    // Coefficients in the unnormalized Pauli basis: x = Σ_j c_j P_j / 2.
    let coeffs: Vec<C64> = p.iter().map(|pj| (pj * x).trace()).collect();
    let mut out = Matrix2::<C64>::zeros();
    for i in 0..4 {
        let mut ci = C64::new(0.0, 0.0);
        for (j, cj) in coeffs.iter().enumerate() {
            ci += *cj * g.0[(i, j)];
        }
        out += p[i] * (ci * 0.5);
    }
    out
}
