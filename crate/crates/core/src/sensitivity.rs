//! First-order sensitivity of circuit outcomes to gate-set parameters.
//!
//! For a circuit `⟨M| G_n … G_1 |ρ⟩` the probability is multilinear in the
//! gate entries, so the first-order coefficient of an entry is a sum over the
//! gate's occurrences of (measurement side) × (preparation side). Fiducial
//! design uses coefficients of raw PTM entries of the germ block; germ design
//! uses coefficients of error-generator entries, `G = G_p·exp(L)` expanded
//! at `L = 0`.

use std::collections::BTreeMap;

use nalgebra::{Matrix4, RowVector4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{compile, enumerate_specs, CircuitError, CircuitSpec, CompiledCircuit, ContextSpec, Germ};
use crate::label::GateLabel;
use crate::ptm::{GateSet, PtmError};

/// Denominator regularization for the fiducial fitness.
pub const VARIANCE_EPS: f64 = 1e-12;
/// Slack on the strict growth constraint `B[l] < B[l+1]`.
pub const GROWTH_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error(transparent)]
    Ptm(#[from] PtmError),
    #[error("circuit {spec:?} failed to compile: {source}")]
    Compile { spec: CircuitSpec, source: CircuitError },
    #[error("germ set is empty")]
    EmptyGermSet,
    #[error("fiducial lists must be nonempty")]
    EmptyFiducials,
    #[error("maximum repetition index must be >= 1")]
    NoColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoefficientKind {
    /// Coefficient of a raw PTM entry `G[j][k]`.
    SuperOpEntry,
    /// Coefficient of an error-generator entry `L[j][k]`.
    ErrorGeneratorEntry,
}

/// Entry `(row, col)` (zero-based) of the PTM or error generator of `gate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntryTarget {
    pub gate: GateLabel,
    pub row: usize,
    pub col: usize,
}

/// Nontrivial entries of a trace-preserving single-qubit PTM: rows X, Y, Z
/// and all four columns.
pub fn nontrivial_entries() -> impl Iterator<Item = (usize, usize)> {
    (1..4).flat_map(|r| (0..4).map(move |c| (r, c)))
}

/// Per-gate first-order coefficients for one sequence: `out[gate][(j, k)]`.
pub fn coefficient_matrices(
    gs: &GateSet,
    seq: &[GateLabel],
    kind: CoefficientKind,
) -> Result<BTreeMap<GateLabel, Matrix4<f64>>, PtmError> {
    let ops = seq.iter().map(|l| gs.gate(l).map(|g| g.0)).collect::<Result<Vec<_>, _>>()?;
    let n = ops.len();

    // prefix[t] = G_{t-1} … G_0 ρ
    let mut prefix: Vec<Vector4<f64>> = Vec::with_capacity(n + 1);
    prefix.push(gs.prep.0);
    for op in &ops {
        let v = op * prefix.last().unwrap();
        prefix.push(v);
    }

    let mut out: BTreeMap<GateLabel, Matrix4<f64>> = BTreeMap::new();
    // suffix = M G_{n-1} … G_{t+1}
    let mut suffix: RowVector4<f64> = gs.meas.row();
    for t in (0..n).rev() {
        let left = match kind {
            CoefficientKind::SuperOpEntry => suffix,
            CoefficientKind::ErrorGeneratorEntry => suffix * ops[t],
        };
        let acc = out.entry(seq[t]).or_insert_with(Matrix4::zeros);
        *acc += left.transpose() * prefix[t].transpose();
        suffix *= ops[t];
    }
    Ok(out)
}

/// First-order coefficient of one entry in the outcome probability of `seq`.
pub fn entry_coefficient(
    gs: &GateSet,
    seq: &[GateLabel],
    target: &EntryTarget,
    kind: CoefficientKind,
) -> Result<f64, PtmError> {
    gs.gate(&target.gate)?;
    let m = coefficient_matrices(gs, seq, kind)?;
    Ok(m.get(&target.gate).map_or(0.0, |a| a[(target.row, target.col)]))
}

/// Fiducial sensitivity vector `T`, one entry per nontrivial germ-block entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiducialSensitivity {
    /// Row-major over rows X, Y, Z and columns I, X, Y, Z.
    pub t: [f64; 12],
}

impl FiducialSensitivity {
    /// Indices of vanishing entries (information gaps).
    pub fn zero_entries(&self) -> Vec<usize> {
        self.t.iter().enumerate().filter(|(_, v)| **v <= 1e-12).map(|(i, _)| i).collect()
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut t = self.t;
        t.iter_mut().for_each(|v| *v *= a);
        FiducialSensitivity { t }
    }
}

/// Measurement-side row vectors and preparation-side vectors of fiducials.
pub(crate) fn fiducial_sides(
    gs: &GateSet,
    preps: &[Germ],
    meass: &[Germ],
) -> Result<(Vec<Vector4<f64>>, Vec<RowVector4<f64>>), PtmError> {
    let prep_vecs = preps
        .iter()
        .map(|f| gs.sequence_op(f).map(|op| op.0 * gs.prep.0))
        .collect::<Result<Vec<_>, _>>()?;
    let meas_rows = meass
        .iter()
        .map(|f| gs.sequence_op(f).map(|op| gs.meas.row() * op.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((prep_vecs, meas_rows))
}

/// `T[j,k] = Σ_{p,m} |⟨M|F_m|j⟩⟨k|F_p|ρ⟩|`.
pub fn fiducial_t(gs: &GateSet, preps: &[Germ], meass: &[Germ]) -> Result<FiducialSensitivity, SensitivityError> {
    if preps.is_empty() || meass.is_empty() {
        return Err(SensitivityError::EmptyFiducials);
    }
    let (pv, mr) = fiducial_sides(gs, preps, meass)?;
    Ok(t_from_sides(&pv, &mr))
}

pub(crate) fn t_from_sides(pv: &[Vector4<f64>], mr: &[RowVector4<f64>]) -> FiducialSensitivity {
    // |u_j v_k| summed over pairs factorizes.
    let mut vs = [0.0; 4];
    for v in pv {
        for k in 0..4 {
            vs[k] += v[k].abs();
        }
    }
    let mut us = [0.0; 4];
    for u in mr {
        for j in 0..4 {
            us[j] += u[j].abs();
        }
    }
    let mut t = [0.0; 12];
    for (i, (j, k)) in nontrivial_entries().enumerate() {
        t[i] = us[j] * vs[k];
    }
    FiducialSensitivity { t }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiducialFitness {
    pub value: f64,
    /// Some entry of `T` vanishes: the fiducials are not informationally complete.
    pub non_ic: bool,
    /// Zero variance: the value is capped by the regularizer.
    pub degenerate_uniform: bool,
}

/// `sum(T) / (var(T) + ε)` with population variance.
pub fn fiducial_fitness(t: &FiducialSensitivity) -> FiducialFitness {
    let n = t.t.len() as f64;
    let sum: f64 = t.t.iter().sum();
    let mean = sum / n;
    let var = t.t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    FiducialFitness {
        value: sum / (var + VARIANCE_EPS),
        non_ic: !t.zero_entries().is_empty(),
        degenerate_uniform: var <= VARIANCE_EPS,
    }
}

/// Row label of the sensitivity matrix: gate and zero-based entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLabel {
    pub gate: GateLabel,
    pub row: usize,
    pub col: usize,
}

/// Rows: targeted error-generator entries. Columns: repetition index 1..=L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMatrix {
    pub rows: Vec<RowLabel>,
    /// `data[r][l-1]`.
    pub data: Vec<Vec<f64>>,
}

impl SensitivityMatrix {
    pub fn n_cols(&self) -> usize {
        self.data.first().map_or(0, |r| r.len())
    }

    pub fn last_column(&self) -> Vec<f64> {
        self.data.iter().map(|r| *r.last().unwrap_or(&0.0)).collect()
    }

    /// CSV with header `gate,j,k,l=1,…,l=L`; `j`, `k` are 1-based.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["gate".to_string(), "j".to_string(), "k".to_string()];
        header.extend((1..=self.n_cols()).map(|l| format!("l={l}")));
        w.write_record(&header)?;
        for (label, row) in self.rows.iter().zip(&self.data) {
            let mut rec = vec![label.gate.to_string(), (label.row + 1).to_string(), (label.col + 1).to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.12e}")));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Inputs for assembling `B`.
#[derive(Debug, Clone)]
pub struct BDesign<'a> {
    pub preps: &'a [Germ],
    pub meass: &'a [Germ],
    pub germs: &'a [Germ],
    pub max_l: u32,
    pub ctx: &'a ContextSpec,
}

/// `B[r][l] = Σ_{p,m,g} |a₁|` over circuits with repetition index `l`.
///
/// Rows cover every targeted (non-ancillary) label of the context; ancillary
/// gates still appear in circuits but contribute no rows.
pub fn build_b(gs: &GateSet, design: &BDesign<'_>) -> Result<SensitivityMatrix, SensitivityError> {
    if design.germs.is_empty() {
        return Err(SensitivityError::EmptyGermSet);
    }
    if design.preps.is_empty() || design.meass.is_empty() {
        return Err(SensitivityError::EmptyFiducials);
    }
    if design.max_l < 1 {
        return Err(SensitivityError::NoColumns);
    }
    let targeted = design.ctx.targeted();
    let rows: Vec<RowLabel> = targeted
        .iter()
        .flat_map(|&gate| nontrivial_entries().map(move |(row, col)| RowLabel { gate, row, col }))
        .collect();

    let specs = enumerate_specs(design.preps, design.meass, design.germs.len(), design.max_l);
    let per_circuit: Vec<(u32, Vec<f64>)> = specs
        .par_iter()
        .map(|spec| {
            let c = compile(spec, design.germs, design.ctx)
                .map_err(|source| SensitivityError::Compile { spec: spec.clone(), source })?;
            let coeffs = circuit_coefficients(gs, &c)?;
            let vals = rows
                .iter()
                .map(|r| coeffs.get(&r.gate).map_or(0.0, |m| m[(r.row, r.col)].abs()))
                .collect();
            Ok((spec.l, vals))
        })
        .collect::<Result<_, SensitivityError>>()?;

    let mut data = vec![vec![0.0; design.max_l as usize]; rows.len()];
    for (l, vals) in per_circuit {
        for (r, v) in vals.into_iter().enumerate() {
            data[r][(l - 1) as usize] += v;
        }
    }
    Ok(SensitivityMatrix { rows, data })
}

fn circuit_coefficients(gs: &GateSet, c: &CompiledCircuit) -> Result<BTreeMap<GateLabel, Matrix4<f64>>, PtmError> {
    coefficient_matrices(gs, &c.executed(), CoefficientKind::ErrorGeneratorEntry)
}

/// A failed growth constraint: `B[row][l] >= B[row][l+1]` (l is 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub row: usize,
    pub l: u32,
}

pub fn germ_constraint_check(b: &SensitivityMatrix) -> Vec<Violation> {
    let mut out = Vec::new();
    for (row, vals) in b.data.iter().enumerate() {
        for (i, w) in vals.windows(2).enumerate() {
            if w[1] <= w[0] + GROWTH_SLACK {
                out.push(Violation { row, l: i as u32 + 1 });
            }
        }
    }
    out
}

/// `min(B^L)` for feasible matrices; infeasible ones score below zero,
/// ordered by their number of violations.
pub fn germ_fitness(b: &SensitivityMatrix) -> f64 {
    let last = b.last_column();
    let min = last.iter().copied().fold(f64::INFINITY, f64::min);
    let min = if min.is_finite() { min } else { 0.0 };
    let violations = germ_constraint_check(b).len();
    if violations == 0 {
        min
    } else {
        -(violations as f64) - 1.0 + min / (1.0 + min)
    }
}
