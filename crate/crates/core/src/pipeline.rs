//! Campaign driver: design → simulate → reconstruct → report, plus scale
//! sweeps of reconstruction accuracy.
//!
//! Every command reads a [`CampaignConfig`] and works inside its output
//! directory. Artifacts embed the configuration that produced them.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{enumerate_circuits, CircuitError, CompiledCircuit, ContextMode, ContextSpec, Germ};
use crate::dataset::{Dataset, DatasetError};
use crate::design::{select_fiducials, select_germs, DesignConfig, DesignError};
use crate::fixtures;
use crate::label::{format_sequence, BaseGate, GateLabel};
use crate::metrics::{diamond_distance_with, metrics_row, Convention, MetricsRow};
use crate::ptm::GateSet;
use crate::qpu::{exact_dataset, make_gateset, mix_seed, sample_dataset, NoiseRecipe, QpuError, VirtualQpu};
use crate::reconstruct::{reconstruct, FitProblem, FitResult, FitStatus, ReconstructError};
use crate::sensitivity::{build_b, germ_fitness, BDesign, SensitivityError};

pub const DESIGN_FILE: &str = "design.json";
pub const B_FILE: &str = "B.csv";
pub const CIRCUITS_FILE: &str = "circuits.json";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const TRUTH_FILE: &str = "truth.json";
pub const FIT_FILE: &str = "fit.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const INACCURACY_FILE: &str = "inaccuracy.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("design is infeasible: {0}")]
    Infeasible(String),
    #[error("reconstruction did not converge ({0:?})")]
    NonConvergence(FitStatus),
    #[error("dataset does not cover the design; missing circuits:\n{}", .0.join("\n"))]
    Coverage(Vec<String>),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error(transparent)]
    Qpu(#[from] QpuError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
}

impl PipelineError {
    /// Process exit code: 2 infeasible design, 3 non-convergence, 4 I/O,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Infeasible(_) => 2,
            PipelineError::Design(DesignError::NotInformationallyComplete(_)) => 2,
            PipelineError::NonConvergence(_) => 3,
            PipelineError::Io { .. } | PipelineError::Format { .. } => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Published,
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSection {
    pub fiducial_source: Source,
    pub germ_source: Source,
    /// Published germ set name; defaults by mode (`g`, `g_ct`, `g_mem`).
    pub germ_set: Option<String>,
    /// Maximum repetition index; defaults to the published set's.
    pub max_l: Option<u32>,
    /// Search settings when a source is `search`.
    pub search: DesignConfig,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            fiducial_source: Source::Published,
            germ_source: Source::Published,
            germ_set: None,
            max_l: None,
            search: DesignConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSection {
    pub restarts: usize,
    pub convention: Convention,
    /// Bases fitted as one operator across contexts; defaults to the
    /// rotations in memory mode.
    pub tie_bases: Option<Vec<BaseGate>>,
    /// Overrides the solver's total iteration budget.
    pub max_iterations: Option<usize>,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection { restarts: 0, convention: Convention::Unhalved, tie_bases: None, max_iterations: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    /// Error-generator scales; the defaults put idle diamond errors near
    /// 1e-4, 3e-4, 1e-3, 3e-3 and 1e-2.
    pub scales: Vec<f64>,
    pub replicates: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { scales: vec![0.065, 0.2, 0.65, 2.0, 6.5], replicates: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub mode: ContextMode,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    /// Shots per circuit; 0 produces exact probabilities.
    #[serde(default)]
    pub shots: u64,
    #[serde(default)]
    pub design: DesignSection,
    /// Noise of the simulated device; defaults to scale 1 with independent
    /// noise per context in contextual modes.
    #[serde(default)]
    pub noise: Option<NoiseRecipe>,
    /// Use an external dataset instead of simulating one.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl CampaignConfig {
    pub fn new(mode: ContextMode, output: impl Into<PathBuf>) -> Self {
        CampaignConfig {
            mode,
            seed: 0,
            output: output.into(),
            shots: 0,
            design: DesignSection::default(),
            noise: None,
            dataset: None,
            fit: FitSection::default(),
            sweep: SweepSection::default(),
        }
    }

    /// Load TOML (`.toml`) or JSON (anything else).
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = read(path)?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|reason| PipelineError::Format { path: path.to_path_buf(), reason })
    }

    pub fn context(&self) -> ContextSpec {
        ContextSpec::for_mode(self.mode)
    }

    fn germ_set_name(&self) -> String {
        self.design.germ_set.clone().unwrap_or_else(|| {
            match self.mode {
                ContextMode::None => "g",
                ContextMode::Crosstalk => "g_ct",
                ContextMode::Memory => "g_mem",
            }
            .to_string()
        })
    }

    pub fn max_l(&self) -> u32 {
        self.design
            .max_l
            .or_else(|| fixtures::max_repetition(&self.germ_set_name()))
            .unwrap_or(self.design.search.max_l)
    }

    pub fn recipe(&self) -> NoiseRecipe {
        self.noise.clone().unwrap_or_else(|| default_recipe(self.mode, self.seed, 1.0))
    }

    pub fn tie_bases(&self) -> Vec<BaseGate> {
        self.fit.tie_bases.clone().unwrap_or_else(|| match self.mode {
            ContextMode::Memory => vec![BaseGate::Rx, BaseGate::Ry],
            _ => Vec::new(),
        })
    }

    /// Reconstruction problem around the perfect gates of this mode.
    pub fn fit_problem(&self, seed: u64) -> FitProblem {
        let mut problem = FitProblem::new(perfect_for(&self.context())).tie_bases(&self.tie_bases());
        problem.restarts = self.fit.restarts;
        problem.seed = seed;
        if let Some(n) = self.fit.max_iterations {
            problem.settings.max_iterations = n;
        }
        problem
    }

    fn path(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }
}

/// Scale `s` noise; contextual modes get independent idle noise per
/// context.
pub fn default_recipe(mode: ContextMode, seed: u64, scale: f64) -> NoiseRecipe {
    let r = NoiseRecipe::new(seed, scale);
    match mode {
        ContextMode::None => r,
        ContextMode::Crosstalk => r.with_distinct_contexts_for(&[1, 2, 3, 4], &[BaseGate::I]),
        ContextMode::Memory => r.with_distinct_contexts_for(&[1, 2, 3], &[BaseGate::I]),
    }
}

/// Perfect gate set over every label a context can produce.
pub fn perfect_for(ctx: &ContextSpec) -> GateSet {
    let mut labels = ctx.alphabet.clone();
    for l in &ctx.ancillary {
        if !labels.contains(l) {
            labels.push(*l);
        }
    }
    GateSet::perfect(labels)
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    write(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&read(path)?).map_err(|e| PipelineError::Format { path: path.to_path_buf(), reason: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiducialLists {
    pub prep: Vec<Germ>,
    pub meas: Vec<Germ>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignArtifact {
    pub config: CampaignConfig,
    pub context: ContextSpec,
    pub fiducials: FiducialLists,
    pub germs: Vec<Germ>,
    /// Readable operator strings of the germs, time order left to right.
    pub germ_text: Vec<String>,
    pub max_l: u32,
    pub fitness: f64,
    pub feasible: bool,
    #[serde(rename = "B_csv")]
    pub b_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitsArtifact {
    pub config: CampaignConfig,
    pub circuits: Vec<CompiledCircuit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthArtifact {
    pub config: CampaignConfig,
    pub recipe: NoiseRecipe,
    pub truth: GateSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub config: CampaignConfig,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: CampaignConfig,
    pub metrics: Vec<MetricsRow>,
    /// `d(estimate, truth)` per label when the truth is known.
    pub inaccuracy: Option<Vec<InaccuracyRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InaccuracyRow {
    pub label: String,
    pub d_estimate_truth: f64,
    pub d_truth_target: f64,
}

/// Write fiducials, germs, the sensitivity matrix and the circuit list.
pub fn cmd_design(cfg: &CampaignConfig) -> Result<DesignArtifact, PipelineError> {
    let ctx = cfg.context();
    let perfect = perfect_for(&ctx);
    let max_l = cfg.max_l();

    let (prep, meas) = match cfg.design.fiducial_source {
        Source::Published => (fixtures::f_ref_for(&ctx), fixtures::f_ref_for(&ctx)),
        Source::Search => {
            let choice = select_fiducials(&perfect, &cfg.design.search)?;
            let to_ctx = |list: &[Germ]| -> Vec<Germ> {
                list.iter().map(|f| ctx.fiducial(&f.iter().map(|l| l.base).collect::<Vec<BaseGate>>())).collect()
            };
            (to_ctx(&choice.preps), to_ctx(&choice.meass))
        }
    };

    let (germs, fitness, feasible, b) = match cfg.design.germ_source {
        Source::Published => {
            let name = cfg.germ_set_name();
            let germs = fixtures::germ_set(&name).ok_or_else(|| PipelineError::Config(format!("unknown germ set `{name}`")))?;
            let b = build_b(&perfect, &BDesign { preps: &prep, meass: &meas, germs: &germs, max_l, ctx: &ctx })?;
            let feasible = crate::sensitivity::germ_constraint_check(&b).is_empty();
            (germs, germ_fitness(&b), feasible, b)
        }
        Source::Search => {
            let mut search = cfg.design.search.clone();
            search.max_l = max_l;
            search.ga.seed = mix_seed(cfg.seed, 11);
            let set = select_germs(&perfect, &prep, &meas, &search, &ctx)?;
            let b = build_b(&perfect, &BDesign { preps: &prep, meass: &meas, germs: &set.germs, max_l, ctx: &ctx })?;
            (set.germs, set.fitness, set.feasible, b)
        }
    };
    info!("design: {} germs, L = {max_l}, fitness {fitness}, feasible {feasible}", germs.len());

    let csv = b.to_csv().map_err(|e| PipelineError::Format { path: cfg.path(B_FILE), reason: e.to_string() })?;
    write(&cfg.path(B_FILE), csv.as_bytes())?;
    let circuits = enumerate_circuits(&prep, &meas, &germs, max_l, &ctx)?;
    write_json(&cfg.path(CIRCUITS_FILE), &CircuitsArtifact { config: cfg.clone(), circuits })?;

    let artifact = DesignArtifact {
        config: cfg.clone(),
        context: ctx,
        fiducials: FiducialLists { prep, meas },
        germ_text: germs.iter().map(|g| format_sequence(g)).collect(),
        germs,
        max_l,
        fitness,
        feasible,
        b_csv: B_FILE.to_string(),
    };
    write_json(&cfg.path(DESIGN_FILE), &artifact)?;
    if !feasible {
        return Err(PipelineError::Infeasible(format!("germ set violates the growth constraint (fitness {fitness})")));
    }
    Ok(artifact)
}

/// Circuit list of the design in the output directory; its mode must match.
pub fn load_circuits(cfg: &CampaignConfig) -> Result<Vec<CompiledCircuit>, PipelineError> {
    let artifact: CircuitsArtifact = read_json(&cfg.path(CIRCUITS_FILE))?;
    if artifact.config.mode != cfg.mode {
        return Err(PipelineError::Config(format!(
            "design was made for mode {:?}, campaign is {:?}",
            artifact.config.mode, cfg.mode
        )));
    }
    Ok(artifact.circuits)
}

/// Hidden truth of the configured virtual QPU.
pub fn make_truth(cfg: &CampaignConfig) -> Result<GateSet, PipelineError> {
    let ctx = cfg.context();
    Ok(make_gateset(&cfg.recipe(), &perfect_for(&ctx), &ctx)?.truth)
}

/// Simulate the circuit list on a virtual QPU; writes the dataset and the
/// hidden truth.
pub fn cmd_simulate(cfg: &CampaignConfig) -> Result<Dataset, PipelineError> {
    let ctx = cfg.context();
    let circuits = load_circuits(cfg)?;
    let recipe = cfg.recipe();
    let qpu = make_gateset(&recipe, &perfect_for(&ctx), &ctx)?;
    let ds = simulate_dataset(&qpu, &circuits, cfg.shots, mix_seed(cfg.seed, 23))?;
    info!("simulate: {} records, shots {}", ds.len(), cfg.shots);
    write(&cfg.path(DATASET_FILE), ds.to_jsonl().as_bytes())?;
    write_json(&cfg.path(TRUTH_FILE), &TruthArtifact { config: cfg.clone(), recipe, truth: qpu.truth })?;
    Ok(ds)
}

fn simulate_dataset(qpu: &VirtualQpu, circuits: &[CompiledCircuit], shots: u64, seed: u64) -> Result<Dataset, QpuError> {
    if shots == 0 { exact_dataset(qpu, circuits) } else { sample_dataset(qpu, circuits, shots, seed) }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, PipelineError> {
    let file = fs::File::open(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
    Dataset::read_jsonl(BufReader::new(file)).map_err(|e| match e {
        DatasetError::Io(source) => PipelineError::Io { path: path.to_path_buf(), source },
        other => PipelineError::Format { path: path.to_path_buf(), reason: other.to_string() },
    })
}

/// Circuits of the design absent from the dataset, as readable strings.
pub fn missing_circuits(circuits: &[CompiledCircuit], ds: &Dataset) -> Vec<String> {
    let have: std::collections::HashSet<&Vec<GateLabel>> = ds.records.iter().map(|r| &r.circuit).collect();
    circuits
        .iter()
        .map(|c| c.executed())
        .filter(|seq| !have.contains(seq))
        .map(|seq| if seq.is_empty() { "∅".to_string() } else { format_sequence(&seq) })
        .collect()
}

pub fn cmd_reconstruct(cfg: &CampaignConfig) -> Result<FitResult, PipelineError> {
    let circuits = load_circuits(cfg)?;
    let ds_path = cfg.dataset.clone().unwrap_or_else(|| cfg.path(DATASET_FILE));
    let ds = load_dataset(&ds_path)?;
    let missing = missing_circuits(&circuits, &ds);
    if !missing.is_empty() {
        return Err(PipelineError::Coverage(missing));
    }
    let fit = reconstruct(&ds, &cfg.fit_problem(mix_seed(cfg.seed, 31)))?;
    info!("reconstruct: loss {:.3e}, {} iterations, {:?}", fit.loss, fit.iterations, fit.status);
    write_json(&cfg.path(FIT_FILE), &FitArtifact { config: cfg.clone(), fit: fit.clone() })?;
    if fit.status == FitStatus::MaxIterations {
        return Err(PipelineError::NonConvergence(fit.status));
    }
    Ok(fit)
}

/// Metrics of the targeted labels of `estimate` against the perfect gates,
/// and inaccuracy against `truth` when given.
pub fn build_report(cfg: &CampaignConfig, estimate: &GateSet, truth: Option<&GateSet>) -> Report {
    let ctx = cfg.context();
    let perfect = perfect_for(&ctx);
    let conv = cfg.fit.convention;
    let labels: Vec<GateLabel> = ctx.targeted().into_iter().filter(|l| estimate.gates.contains_key(l)).collect();
    let metrics = labels.iter().map(|l| metrics_row(l, &estimate.gates[l], &perfect.gates[l], conv)).collect();
    let inaccuracy = truth.map(|t| {
        estimate
            .gates
            .iter()
            .filter_map(|(l, g)| {
                let tg = t.gates.get(l)?;
                Some(InaccuracyRow {
                    label: l.to_string(),
                    d_estimate_truth: diamond_distance_with(g, tg, conv).value,
                    d_truth_target: diamond_distance_with(tg, &perfect.gates[l], conv).value,
                })
            })
            .collect()
    });
    Report { config: cfg.clone(), metrics, inaccuracy }
}

pub fn cmd_report(cfg: &CampaignConfig) -> Result<Report, PipelineError> {
    let fit: FitArtifact = read_json(&cfg.path(FIT_FILE))?;
    let truth_path = cfg.path(TRUTH_FILE);
    let truth = if truth_path.exists() { Some(read_json::<TruthArtifact>(&truth_path)?.truth) } else { None };
    let report = build_report(cfg, &fit.fit.estimate, truth.as_ref());
    write_json(&cfg.path(METRICS_FILE), &report)?;
    if let Some(rows) = &report.inaccuracy {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| PipelineError::Format { path: cfg.path(INACCURACY_FILE), reason: e.to_string() })?;
        }
        let bytes = w.into_inner().map_err(|e| PipelineError::Format { path: cfg.path(INACCURACY_FILE), reason: e.to_string() })?;
        write(&cfg.path(INACCURACY_FILE), &bytes)?;
    }
    Ok(report)
}

/// Design, simulate, reconstruct and report in sequence.
pub fn cmd_run(cfg: &CampaignConfig) -> Result<Report, PipelineError> {
    cmd_design(cfg)?;
    if cfg.dataset.is_none() {
        cmd_simulate(cfg)?;
    }
    cmd_reconstruct(cfg)?;
    cmd_report(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scale: f64,
    pub replicate: usize,
    pub label: String,
    /// `d(truth, perfect)`.
    pub gate_error: f64,
    /// `d(estimate, truth)`.
    pub inaccuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scale: f64,
    pub mean_gate_error: f64,
    pub mean_inaccuracy: f64,
    pub ratio: f64,
}

/// Idle labels are scored in every mode.
fn sweep_labels(ctx: &ContextSpec) -> Vec<GateLabel> {
    ctx.targeted().into_iter().filter(|l| l.base == BaseGate::I).collect()
}

/// Reconstruction accuracy over random devices at each configured scale.
pub fn run_sweep(cfg: &CampaignConfig, circuits: &[CompiledCircuit]) -> Result<(Vec<SweepRow>, Vec<SweepSummary>), PipelineError> {
    let ctx = cfg.context();
    let perfect = perfect_for(&ctx);
    let labels = sweep_labels(&ctx);
    let conv = cfg.fit.convention;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (si, &scale) in cfg.sweep.scales.iter().enumerate() {
        let (mut err_sum, mut inacc_sum, mut n) = (0.0, 0.0, 0usize);
        for rep in 0..cfg.sweep.replicates {
            let seed = mix_seed(cfg.seed, (si * 100_000 + rep) as u64);
            let qpu = make_gateset(&default_recipe(cfg.mode, seed, scale), &perfect, &ctx)?;
            let ds = simulate_dataset(&qpu, circuits, cfg.shots, mix_seed(seed, 1))?;
            let fit = reconstruct(&ds, &cfg.fit_problem(mix_seed(seed, 2)))?;
            for l in &labels {
                let gate_error = diamond_distance_with(&qpu.truth.gates[l], &perfect.gates[l], conv).value;
                let inaccuracy = diamond_distance_with(&fit.estimate.gates[l], &qpu.truth.gates[l], conv).value;
                err_sum += gate_error;
                inacc_sum += inaccuracy;
                n += 1;
                rows.push(SweepRow { scale, replicate: rep, label: l.to_string(), gate_error, inaccuracy, loss: fit.loss });
            }
        }
        let nf = n.max(1) as f64;
        let s = SweepSummary {
            scale,
            mean_gate_error: err_sum / nf,
            mean_inaccuracy: inacc_sum / nf,
            ratio: if err_sum > 0.0 { inacc_sum / err_sum } else { 0.0 },
        };
        info!("sweep: scale {scale}: error {:.3e}, inaccuracy {:.3e}", s.mean_gate_error, s.mean_inaccuracy);
        summary.push(s);
    }
    Ok((rows, summary))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let fmt = |e: csv::Error| PipelineError::Format { path: path.to_path_buf(), reason: e.to_string() };
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(fmt)?;
    }
    let bytes = w.into_inner().map_err(|e| fmt(e.into_error().into()))?;
    write(path, &bytes)
}

pub fn cmd_sweep(cfg: &CampaignConfig) -> Result<Vec<SweepSummary>, PipelineError> {
    let circuits = match load_circuits(cfg) {
        Ok(c) => c,
        Err(PipelineError::Io { .. }) => {
            cmd_design(cfg)?;
            load_circuits(cfg)?
        }
        Err(e) => return Err(e),
    };
    let (rows, summary) = run_sweep(cfg, &circuits)?;
    write_csv(&cfg.path(SWEEP_FILE), &rows)?;
    write_csv(&cfg.path(SWEEP_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Render a report as an aligned text table.
pub fn render_report<W: Write>(report: &Report, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{:<8} {:>10} {:>12} {:>10} {:>30}", "label", "diamond", "corrected", "coherent", "angles (z, y, z)")?;
    for r in &report.metrics {
        writeln!(
            out,
            "{:<8} {:>10.5} {:>12.5} {:>10.3} {:>30}",
            r.label,
            r.d_diamond,
            r.d_corrected,
            r.coherence_fraction,
            format!("({:+.4}, {:+.4}, {:+.4})", r.angles[0], r.angles[1], r.angles[2])
        )?;
    }
    if let Some(rows) = &report.inaccuracy {
        writeln!(out, "\n{:<8} {:>14} {:>14}", "label", "d(est, truth)", "d(truth, G_p)")?;
        for r in rows {
            writeln!(out, "{:<8} {:>14.3e} {:>14.3e}", r.label, r.d_estimate_truth, r.d_truth_target)?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_from_toml() {
        let text = r#"
            mode = "memory"
            seed = 3
            output = "out"
            shots = 1000
            [design]
            germ_source = "search"
            [sweep]
            scales = [0.5]
            replicates = 2
        "#;
        let cfg: CampaignConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.mode, ContextMode::Memory);
        assert_eq!(cfg.design.germ_source, Source::Search);
        assert_eq!(cfg.design.fiducial_source, Source::Published);
        assert_eq!(cfg.max_l(), 6);
        assert_eq!(cfg.sweep.replicates, 2);
        assert_eq!(cfg.recipe().overrides.len(), 3);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Infeasible(String::new()).exit_code(), 2);
        assert_eq!(PipelineError::NonConvergence(FitStatus::MaxIterations).exit_code(), 3);
        let io = PipelineError::Io { path: PathBuf::new(), source: std::io::Error::other("x") };
        assert_eq!(io.exit_code(), 4);
    }
}
