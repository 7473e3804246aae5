//! Virtual QPUs: random noisy (optionally context-dependent) gate sets and
//! binomial shot sampling.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Matrix4, SMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CompiledCircuit, ContextSpec};
use crate::dataset::{Dataset, Observation, Record};
use crate::label::{BaseGate, Context, GateLabel};
use crate::linalg::{paulis, C64};
use crate::ptm::{apply_error, error_generator, GateSet, MeasVec, PtmError, StateVec, SuperOp};

#[derive(Debug, Error)]
pub enum QpuError {
    #[error("mix weight {0} outside [0, 1]")]
    MixWeight(f64),
    #[error("error-generator scale {0} must be >= 0")]
    Scale(f64),
    #[error("override for context {0}, which the context spec does not declare")]
    UndeclaredContext(u8),
    #[error("gate {label} has entry {value} outside [-1, 1] after scaling")]
    EntryOutOfRange { label: GateLabel, value: f64 },
    #[error("circuit probability {p} outside [0, 1]: truth is unphysical")]
    Unphysical { p: f64 },
    #[error("shot count must be >= 1")]
    NoShots,
    #[error(transparent)]
    Ptm(#[from] PtmError),
}

/// Noise drawn independently for one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextNoise {
    pub seed: u64,
    #[serde(default)]
    pub mix_weight: Option<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
    /// Base gates the override applies to; all when absent.
    #[serde(default)]
    pub bases: Option<Vec<BaseGate>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecipe {
    pub seed: u64,
    /// Weight of the random channel in the convex mixture.
    #[serde(default = "default_mix_weight")]
    pub mix_weight: f64,
    /// Multiplier applied to the error generator.
    pub scale: f64,
    /// Contexts whose gates get their own random channels.
    #[serde(default)]
    pub overrides: BTreeMap<u8, ContextNoise>,
    /// SPAM infidelity range `[lo, hi]`.
    #[serde(default = "default_spam_range")]
    pub spam_infidelity: [f64; 2],
}

fn default_mix_weight() -> f64 {
    0.001
}

fn default_spam_range() -> [f64; 2] {
    [1e-3, 1e-2]
}

impl NoiseRecipe {
    pub fn new(seed: u64, scale: f64) -> Self {
        NoiseRecipe { seed, mix_weight: default_mix_weight(), scale, overrides: BTreeMap::new(), spam_infidelity: default_spam_range() }
    }

    /// Independent noise per context for each of `contexts`.
    pub fn with_distinct_contexts(mut self, contexts: &[u8]) -> Self {
        for &k in contexts {
            self.overrides.insert(k, ContextNoise { seed: mix_seed(self.seed, 1000 + k as u64), mix_weight: None, scale: None, bases: None });
        }
        self
    }

    /// Like [`NoiseRecipe::with_distinct_contexts`], restricted to `bases`;
    /// other gates keep context-independent noise.
    pub fn with_distinct_contexts_for(mut self, contexts: &[u8], bases: &[BaseGate]) -> Self {
        self = self.with_distinct_contexts(contexts);
        for &k in contexts {
            if let Some(o) = self.overrides.get_mut(&k) {
                o.bases = Some(bases.to_vec());
            }
        }
        self
    }

    fn validate(&self, ctx: &ContextSpec) -> Result<(), QpuError> {
        let weights = std::iter::once(self.mix_weight).chain(self.overrides.values().filter_map(|o| o.mix_weight));
        for w in weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(QpuError::MixWeight(w));
            }
        }
        let scales = std::iter::once(self.scale).chain(self.overrides.values().filter_map(|o| o.scale));
        for s in scales {
            if !(s >= 0.0) {
                return Err(QpuError::Scale(s));
            }
        }
        for &k in self.overrides.keys() {
            let declared = ctx.alphabet.iter().chain(&ctx.ancillary).any(|l| l.context == Context::Index(k));
            if !declared {
                return Err(QpuError::UndeclaredContext(k));
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer applied to `seed + stream`; used to derive
/// independent seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// PTM `R_ij = Tr(P_i Σ_e K_e P_j K_e†)/2` of a Kraus representation.
pub fn ptm_from_kraus(kraus: &[Matrix2<C64>]) -> SuperOp {
    let p = paulis();
    let m = Matrix4::from_fn(|i, j| {
        let image: Matrix2<C64> = kraus.iter().map(|k| k * p[j] * k.adjoint()).sum();
        (p[i] * image).trace().re / 2.0
    });
    SuperOp(m)
}

/// Random CPTP channel from a Haar-random isometry `C² → C² ⊗ C⁴`.
pub fn random_channel(seed: u64) -> SuperOp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: SMatrix<C64, 8, 2> = SMatrix::from_fn(|_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix column phases so the isometry is Haar distributed.
    let mut v = q;
    for c in 0..2 {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..8 {
            v[(row, c)] *= phase;
        }
    }
    let kraus: Vec<Matrix2<C64>> = (0..4)
        .map(|e| Matrix2::from_fn(|i, j| v[(2 * e + i, j)]))
        .collect();
    let mut out = ptm_from_kraus(&kraus);
    // The first row is (1, 0, 0, 0) analytically; remove rounding.
    out.0[(0, 0)] = 1.0;
    for j in 1..4 {
        out.0[(0, j)] = 0.0;
    }
    out
}

/// `apply_error(G_p, log(G_p⁻¹((1−w)G_p + w·R)), s)`.
pub fn noisy_gate(perfect: &SuperOp, channel: &SuperOp, w: f64, s: f64) -> Result<SuperOp, PtmError> {
    let mixed = SuperOp(perfect.0 * (1.0 - w) + channel.0 * w);
    let gen = error_generator(&mixed, perfect)?;
    Ok(apply_error(perfect, &gen, s))
}

/// A simulated device: hidden truth plus the seed used for sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VirtualQpu {
    pub truth: GateSet,
    pub seed: u64,
}

fn spam_bloch(rng: &mut ChaCha8Rng, range: [f64; 2]) -> Vector3<f64> {
    let u = if range[1] > range[0] { rng.random_range(range[0]..=range[1]) } else { range[0] };
    let bz = 1.0 - 2.0 * u;
    let radius = rng.random_range(0.0..=1.0) * (1.0 - bz * bz).max(0.0).sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    Vector3::new(radius * phi.cos(), radius * phi.sin(), bz)
}

/// Build the truth gate set for every label of `perfect`.
///
/// Labels without an override share the noise of their base gate, so
/// context-free evaluation never sees override draws.
pub fn make_gateset(recipe: &NoiseRecipe, perfect: &GateSet, ctx: &ContextSpec) -> Result<VirtualQpu, QpuError> {
    recipe.validate(ctx)?;
    let mut truth = perfect.clone();
    for (label, g) in &perfect.gates {
        let (seed, w, s) = match (label.context, label.context.index().and_then(|k| recipe.overrides.get(&k)).filter(|o| o.bases.as_ref().is_none_or(|b| b.contains(&label.base)))) {
            (_, Some(o)) => (o.seed, o.mix_weight.unwrap_or(recipe.mix_weight), o.scale.unwrap_or(recipe.scale)),
            _ => (recipe.seed, recipe.mix_weight, recipe.scale),
        };
        let channel = random_channel(mix_seed(seed, label.base.class() as u64));
        let noisy = if s == 0.0 || w == 0.0 { *g } else { noisy_gate(g, &channel, w, s)? };
        if let Some(value) = noisy.0.iter().copied().find(|v| v.abs() > 1.0) {
            return Err(QpuError::EntryOutOfRange { label: *label, value });
        }
        truth.gates.insert(*label, noisy);
    }
    if recipe.scale > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(recipe.seed, 77));
        truth.prep = StateVec::from_bloch(&spam_bloch(&mut rng, recipe.spam_infidelity));
        truth.meas = MeasVec::from_bloch(&spam_bloch(&mut rng, recipe.spam_infidelity));
    }
    Ok(VirtualQpu { truth, seed: recipe.seed })
}

fn checked_probability(truth: &GateSet, seq: &[GateLabel]) -> Result<f64, QpuError> {
    let p = truth.evaluate(seq)?;
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(QpuError::Unphysical { p });
    }
    Ok(p)
}

/// `(zeros, ones)` with `zeros ~ Binomial(n, p)`.
pub fn sample_shots(qpu: &VirtualQpu, circuit: &CompiledCircuit, n: u64, seed: u64) -> Result<(u64, u64), QpuError> {
    if n == 0 {
        return Err(QpuError::NoShots);
    }
    let p = checked_probability(&qpu.truth, &circuit.executed())?.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zeros = Binomial::new(n, p).expect("p is in [0, 1]").sample(&mut rng);
    Ok((zeros, n - zeros))
}

/// Shot-sampled dataset; circuit `i` uses seed `mix_seed(seed, i)`.
pub fn sample_dataset(qpu: &VirtualQpu, circuits: &[CompiledCircuit], shots: u64, seed: u64) -> Result<Dataset, QpuError> {
    let records = circuits
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let (zeros, _) = sample_shots(qpu, c, shots, mix_seed(seed, i as u64))?;
            Ok(Record { circuit: c.executed(), observation: Observation::Counts { shots, zeros } })
        })
        .collect::<Result<Vec<_>, QpuError>>()?;
    Ok(Dataset { records })
}

/// Infinite-shot dataset carrying exact probabilities.
pub fn exact_dataset(qpu: &VirtualQpu, circuits: &[CompiledCircuit]) -> Result<Dataset, QpuError> {
    let records = circuits
        .par_iter()
        .map(|c| {
            let seq = c.executed();
            let p = checked_probability(&qpu.truth, &seq)?;
            Ok(Record { circuit: seq, observation: Observation::Exact { p_exact: p } })
        })
        .collect::<Result<Vec<_>, QpuError>>()?;
    Ok(Dataset { records })
}
