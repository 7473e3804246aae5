//! Circuit layout: preparation fiducial, repeated germ, measurement
//! fiducial; context rules and compilation to flat label sequences.
//!
//! Sequences are stored in time order (first applied gate first). The
//! notation used for published germ sets is written in operator
//! order and is reversed by [`parse_operator_string`].

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{BaseGate, Context, GateLabel, LabelParseError};

/// A time-ordered gate sequence used as a germ or fiducial.
pub type Germ = Vec<GateLabel>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("repetition index must be >= 1 (got {0})")]
    BadRepetition(u32),
    #[error("memory sequence index {0} outside 1..=9")]
    BadIndex(u8),
    #[error("germ index {0} not in the germ table")]
    UnknownGerm(usize),
    #[error("label `{label}` at position {position} is not in the context alphabet")]
    NotInAlphabet { position: usize, label: GateLabel },
    #[error("label `{label}` at position {position} conflicts with required context {expected}")]
    ContextConflict { position: usize, label: GateLabel, expected: u8 },
    #[error("cannot parse sequence `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

impl From<LabelParseError> for CircuitError {
    fn from(e: LabelParseError) -> Self {
        CircuitError::Parse { text: String::new(), reason: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    #[default]
    None,
    Crosstalk,
    Memory,
}

/// How many germ copies repetition index `l` stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Repetition {
    /// `2^(l-1)` copies, from `G^l = G^(l-1) G^(l-1)` with `G^1 = G`.
    #[default]
    HalfPower,
    /// `2^l` copies.
    FullPower,
}

impl Repetition {
    pub fn copies(self, l: u32) -> usize {
        match self {
            Repetition::HalfPower => 1usize << (l - 1),
            Repetition::FullPower => 1usize << l,
        }
    }
}

/// Context rules for a characterization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSpec {
    pub mode: ContextMode,
    pub alphabet: Vec<GateLabel>,
    /// Labels that appear in circuits but are not targeted by germ selection.
    pub ancillary: Vec<GateLabel>,
    /// Context given to fiducial gates (and to floating gates outside memory mode).
    pub fiducial_context: Context,
    /// Memory mode: the context a gate takes when it follows a given base gate.
    pub successor: BTreeMap<BaseGate, u8>,
    #[serde(default)]
    pub repetition: Repetition,
    /// Free-form notes (e.g. gate durations) carried into artifacts.
    #[serde(default)]
    pub notes: Option<String>,
}

impl ContextSpec {
    /// Context-free `{Rx, Ry, I}`.
    pub fn none() -> Self {
        ContextSpec {
            mode: ContextMode::None,
            alphabet: BaseGate::ALL.iter().map(|&b| GateLabel::free(b)).collect(),
            ancillary: Vec::new(),
            fiducial_context: Context::Free,
            successor: BTreeMap::new(),
            repetition: Repetition::HalfPower,
            notes: None,
        }
    }

    /// Idle on the target qubit in contexts 1..=3 (a C-phase on a
    /// neighbouring pair) and 4 (everything idle); ancillary rotations only
    /// in context 4.
    pub fn crosstalk() -> Self {
        let mut alphabet: Vec<GateLabel> = (1..=4).map(|k| GateLabel::at(BaseGate::I, k)).collect();
        let ancillary = vec![GateLabel::at(BaseGate::Rx, 4), GateLabel::at(BaseGate::Ry, 4)];
        alphabet.extend(ancillary.iter().copied());
        ContextSpec {
            mode: ContextMode::Crosstalk,
            alphabet,
            ancillary,
            fiducial_context: Context::Index(4),
            successor: BTreeMap::new(),
            repetition: Repetition::HalfPower,
            notes: Some(
                "contexts 1-3: C-phase between the neighbour and Q0/Q3/Q4; context 4: all idle; \
                 C-phase lasts three single-qubit slots"
                    .to_string(),
            ),
        }
    }

    /// First-order memory: each gate's context is the class of the previous
    /// gate (1: after Rx, 2: after Ry, 3: after I). Only idles are targeted.
    pub fn memory() -> Self {
        let mut alphabet = Vec::new();
        for b in BaseGate::ALL {
            for k in 1..=3 {
                alphabet.push(GateLabel::at(b, k));
            }
        }
        let ancillary = alphabet.iter().copied().filter(|l| l.base != BaseGate::I).collect();
        let successor = BaseGate::ALL.iter().map(|&b| (b, b.class() + 1)).collect();
        ContextSpec {
            mode: ContextMode::Memory,
            alphabet,
            ancillary,
            fiducial_context: Context::Floating,
            successor,
            repetition: Repetition::HalfPower,
            notes: None,
        }
    }

    pub fn for_mode(mode: ContextMode) -> Self {
        match mode {
            ContextMode::None => ContextSpec::none(),
            ContextMode::Crosstalk => ContextSpec::crosstalk(),
            ContextMode::Memory => ContextSpec::memory(),
        }
    }

    /// Alphabet labels that are not ancillary.
    pub fn targeted(&self) -> Vec<GateLabel> {
        self.alphabet.iter().copied().filter(|l| !self.ancillary.contains(l)).collect()
    }

    /// Base gates available for fiducials.
    pub fn fiducial_bases(&self) -> Vec<BaseGate> {
        let mut out: Vec<BaseGate> = Vec::new();
        for l in &self.alphabet {
            let ok = match (self.mode, self.fiducial_context) {
                (ContextMode::Memory, _) => true,
                (_, c) => l.context == c,
            };
            if ok && !out.contains(&l.base) {
                out.push(l.base);
            }
        }
        out
    }

    /// Turn a base-gate fiducial into labels for this context.
    pub fn fiducial(&self, bases: &[BaseGate]) -> Germ {
        bases.iter().map(|&b| GateLabel { base: b, context: self.fiducial_context }).collect()
    }

    fn successor_context(&self, prev: BaseGate) -> u8 {
        self.successor.get(&prev).copied().unwrap_or(prev.class() + 1)
    }

    /// Context of the first gate: preparation is merged with an idle.
    fn initial_context(&self) -> u8 {
        self.successor_context(BaseGate::I)
    }
}

/// Indices of a circuit: `(prep fiducial, germ, repetition index, meas fiducial)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub prep: Germ,
    pub germ: usize,
    pub l: u32,
    pub meas: Germ,
}

/// Flat, context-resolved gate sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompiledCircuit {
    /// Gates between preparation and measurement, in time order.
    pub seq: Vec<GateLabel>,
    /// Memory mode: the idle inserted right before measurement.
    pub terminal: Option<GateLabel>,
    pub provenance: Option<CircuitSpec>,
}

impl CompiledCircuit {
    pub fn plain(seq: Vec<GateLabel>) -> Self {
        CompiledCircuit { seq, terminal: None, provenance: None }
    }

    /// Every gate that is executed, including the terminal idle.
    pub fn executed(&self) -> Vec<GateLabel> {
        let mut out = self.seq.clone();
        out.extend(self.terminal);
        out
    }

    /// Table-1 indices of the body, or `None` outside memory labelling.
    pub fn memory_indices(&self) -> Option<Vec<u8>> {
        self.seq.iter().map(memory_index).collect()
    }
}

/// Index 1..=9 of a memory-mode label: Rx@1..3 → 1..3, Ry → 4..6, I → 7..9.
pub fn memory_index(label: &GateLabel) -> Option<u8> {
    match label.context {
        Context::Index(k @ 1..=3) => Some(label.base.class() * 3 + k),
        _ => None,
    }
}

pub fn memory_label(index: u8) -> Result<GateLabel, CircuitError> {
    if !(1..=9).contains(&index) {
        return Err(CircuitError::BadIndex(index));
    }
    let base = BaseGate::ALL[((index - 1) / 3) as usize];
    Ok(GateLabel::at(base, (index - 1) % 3 + 1))
}

/// Germ concatenated `2^(l-1)` times.
pub fn repeat_germ(germ: &[GateLabel], l: u32) -> Result<Germ, CircuitError> {
    repeat_germ_with(germ, l, Repetition::HalfPower)
}

pub fn repeat_germ_with(germ: &[GateLabel], l: u32, rule: Repetition) -> Result<Germ, CircuitError> {
    if l < 1 {
        return Err(CircuitError::BadRepetition(l));
    }
    Ok(germ.repeat(rule.copies(l)))
}

/// Indices allowed after `prev` in a memory-mode sequence.
pub fn valid_successors(prev: u8) -> Result<[u8; 3], CircuitError> {
    if !(1..=9).contains(&prev) {
        return Err(CircuitError::BadIndex(prev));
    }
    let ctx = (prev - 1) / 3 + 1;
    Ok([ctx, ctx + 3, ctx + 6])
}

/// Result of checking adjacent pairs of a memory-mode index sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceCheck {
    pub valid: bool,
    /// Position (0-based) of the first element that breaks the rule.
    pub first_violation: Option<usize>,
}

pub fn validate_sequence(seq: &[u8]) -> SequenceCheck {
    for (i, w) in seq.windows(2).enumerate() {
        let ok = match valid_successors(w[0]) {
            Ok(allowed) => allowed.contains(&w[1]),
            Err(_) => false,
        };
        if !ok {
            return SequenceCheck { valid: false, first_violation: Some(i + 1) };
        }
    }
    if let Some(&x) = seq.first() {
        if !(1..=9).contains(&x) {
            return SequenceCheck { valid: false, first_violation: Some(0) };
        }
    }
    SequenceCheck { valid: true, first_violation: None }
}

/// Full memory-mode check of a compiled circuit: the first gate follows the
/// preparation idle, every adjacent pair obeys the successor rule, and the
/// terminal idle is in place.
pub fn validate_compiled(c: &CompiledCircuit) -> bool {
    let Some(mut idx) = c.memory_indices() else { return false };
    let Some(term) = c.terminal.as_ref().and_then(memory_index) else { return false };
    if term < 7 {
        return false;
    }
    if let Some(&first) = idx.first() {
        if (first - 1) % 3 != 2 {
            return false;
        }
    }
    idx.push(term);
    validate_sequence(&idx).valid
}

/// Build the flat sequence for one circuit.
pub fn compile(spec: &CircuitSpec, germs: &[Germ], ctx: &ContextSpec) -> Result<CompiledCircuit, CircuitError> {
    let germ = germs.get(spec.germ).ok_or(CircuitError::UnknownGerm(spec.germ))?;
    let mut raw = spec.prep.clone();
    raw.extend(repeat_germ_with(germ, spec.l, ctx.repetition)?);
    raw.extend(spec.meas.iter().copied());
    let mut out = resolve(&raw, ctx)?;
    out.provenance = Some(spec.clone());
    Ok(out)
}

/// Resolve contexts of a raw time-ordered sequence under `ctx`.
pub fn resolve(raw: &[GateLabel], ctx: &ContextSpec) -> Result<CompiledCircuit, CircuitError> {
    let mut seq = Vec::with_capacity(raw.len());
    match ctx.mode {
        ContextMode::None | ContextMode::Crosstalk => {
            for (position, l) in raw.iter().enumerate() {
                let label = match l.context {
                    Context::Floating => l.with_context(ctx.fiducial_context),
                    Context::Free if ctx.mode == ContextMode::Crosstalk => l.with_context(ctx.fiducial_context),
                    _ => *l,
                };
                if !ctx.alphabet.contains(&label) {
                    return Err(CircuitError::NotInAlphabet { position, label });
                }
                seq.push(label);
            }
            Ok(CompiledCircuit { seq, terminal: None, provenance: None })
        }
        ContextMode::Memory => {
            let mut expected = ctx.initial_context();
            for (position, l) in raw.iter().enumerate() {
                let label = match l.context {
                    Context::Floating | Context::Free => GateLabel::at(l.base, expected),
                    Context::Index(k) if k == expected => *l,
                    Context::Index(_) => {
                        return Err(CircuitError::ContextConflict { position, label: *l, expected });
                    }
                };
                if !ctx.alphabet.contains(&label) {
                    return Err(CircuitError::NotInAlphabet { position, label });
                }
                seq.push(label);
                expected = ctx.successor_context(l.base);
            }
            let terminal = GateLabel::at(BaseGate::I, expected);
            Ok(CompiledCircuit { seq, terminal: Some(terminal), provenance: None })
        }
    }
}

/// Every `(p, m, g, l)` combination for `1 <= l <= max_l`, before dedup.
pub fn enumerate_specs(preps: &[Germ], meass: &[Germ], n_germs: usize, max_l: u32) -> Vec<CircuitSpec> {
    let mut out = Vec::with_capacity(preps.len() * meass.len() * n_germs * max_l as usize);
    for l in 1..=max_l {
        for g in 0..n_germs {
            for p in preps {
                for m in meass {
                    out.push(CircuitSpec { prep: p.clone(), germ: g, l, meas: m.clone() });
                }
            }
        }
    }
    out
}

/// Compile all combinations and drop circuits whose executed sequence
/// repeats an earlier one.
pub fn enumerate_circuits(
    preps: &[Germ],
    meass: &[Germ],
    germs: &[Germ],
    max_l: u32,
    ctx: &ContextSpec,
) -> Result<Vec<CompiledCircuit>, CircuitError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for spec in enumerate_specs(preps, meass, germs.len(), max_l) {
        let c = compile(&spec, germs, ctx)?;
        if seen.insert(c.executed()) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Parse operator-order notation such as `I^2R^3_yI^1R^f_x` or `R_yR_xI`
/// into a time-ordered sequence. `∅` and the empty string give an empty
/// sequence. Gates without a superscript are context free.
pub fn parse_operator_string(text: &str) -> Result<Germ, CircuitError> {
    let err = |reason: &str| CircuitError::Parse { text: text.to_string(), reason: reason.to_string() };
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace() && *c != '{' && *c != '}').collect();
    let mut i = 0;
    let mut ops = Vec::new();
    while i < chars.len() {
        let base_char = chars[i];
        i += 1;
        let mut sub: Option<char> = None;
        let mut sup: Option<String> = None;
        loop {
            match chars.get(i) {
                Some('_') => {
                    sub = Some(*chars.get(i + 1).ok_or_else(|| err("dangling subscript"))?);
                    i += 2;
                }
                Some('^') => {
                    i += 1;
                    let mut s = String::new();
                    while let Some(c) = chars.get(i) {
                        if c.is_ascii_digit() || (*c == 'f' && s.is_empty()) {
                            s.push(*c);
                            i += 1;
                            if *c == 'f' {
                                break;
                            }
                        } else {
                            break;
                        }
                    }
                    if s.is_empty() {
                        return Err(err("empty superscript"));
                    }
                    sup = Some(s);
                }
                _ => break,
            }
        }
        let base = match (base_char, sub) {
            ('∅', None) => continue,
            ('I', None) => BaseGate::I,
            ('R', Some('x')) => BaseGate::Rx,
            ('R', Some('y')) => BaseGate::Ry,
            _ => return Err(err("unrecognised gate")),
        };
        let context = match sup.as_deref() {
            None => Context::Free,
            Some("f") => Context::Floating,
            Some(k) => Context::Index(k.parse().map_err(|_| err("bad context index"))?),
        };
        ops.push(GateLabel { base, context });
    }
    ops.reverse();
    Ok(ops)
}
