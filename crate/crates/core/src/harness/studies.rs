//! Study orchestration: sweeps, optimization, diagnostics, and persistence
//! of results as CSV + JSON artifacts.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::costs::{infidelity, robust_cost, CostSpec, PrimaryCost};
use crate::dynamics::{
    excitation_probabilities, minimum_gap_scan, propagate, PropagationConfig, QuantumState,
};
use crate::error::{CrabError, Result};
use crate::harness::config::{ExperimentConfig, PrimaryKind, Study, TargetKind};
use crate::models::{
    ground_state, HamiltonianModel, LmgDicke, ProblemTiming, SpinChainTransfer, TwoQubitJosephson,
};
use crate::observables::{reduced_density_dicke, von_neumann_entropy, DickeBipartition};
use crate::optimizer::{multi_start, CrabProblem, PulseAnsatz};
use crate::pulse::{BaseGuess, ControlField, RegularizerKind};

/// Command-line overrides applied on top of the configuration document.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into(), seed: None, steps: None }
    }
}

/// One sweep point; unused axes stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PointKey {
    pub size: Option<usize>,
    pub n_components: Option<usize>,
    pub randomized: Option<bool>,
    pub target: Option<TargetKind>,
    pub total_time: Option<f64>,
}

impl PointKey {
    fn empty() -> Self {
        Self { size: None, n_components: None, randomized: None, target: None, total_time: None }
    }

    pub fn label(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let Some(t) = self.target {
            parts.push(t.name().to_string());
        }
        if let Some(n) = self.size {
            parts.push(format!("n{n}"));
        }
        if let Some(t) = self.total_time {
            parts.push(format!("t{t:.4}"));
        }
        if let Some(nc) = self.n_components {
            parts.push(format!("nc{nc}"));
        }
        if let Some(r) = self.randomized {
            parts.push(if r { "randomized" } else { "harmonic" }.to_string());
        }
        parts.join("-")
    }
}

/// Self-contained description of an optimized pulse, sufficient to replay
/// its cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PulseDocument {
    pub study: Study,
    pub point: PointKey,
    pub total_time: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub best_cost: f64,
    pub fields: Vec<ControlField>,
}

impl PulseDocument {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Per-point summary stored in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PointRecord {
    pub point: PointKey,
    pub gap_min: Option<f64>,
    pub t_qsl: Option<f64>,
    pub total_time: f64,
    pub n_steps: usize,
    pub point_seed: u64,
    pub best_instance: usize,
    pub best_cost: f64,
    pub best_infidelity: Option<f64>,
    pub best_entropy: Option<f64>,
    pub baseline_cost: Option<f64>,
    pub baseline_infidelity: Option<f64>,
    pub instance_costs: Vec<f64>,
    pub pulse_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ResultManifest {
    pub study: Study,
    pub tool_version: String,
    pub master_seed: u64,
    pub n_steps: usize,
    pub config: ExperimentConfig,
    pub wall_clock_seconds: f64,
    pub points: Vec<PointRecord>,
}

enum ModelInstance {
    TwoQubit(TwoQubitJosephson),
    Lmg(LmgDicke),
    Chain(SpinChainTransfer),
}

impl ModelInstance {
    fn as_dyn(&self) -> &dyn HamiltonianModel {
        match self {
            ModelInstance::TwoQubit(m) => m,
            ModelInstance::Lmg(m) => m,
            ModelInstance::Chain(m) => m,
        }
    }
}

struct ProblemSetup {
    model: ModelInstance,
    psi0: QuantumState,
    cost: CostSpec,
    bases: Vec<BaseGuess>,
    total_time: f64,
    gap_min: Option<f64>,
    t_qsl: Option<f64>,
    target: Option<QuantumState>,
    bipartition: Option<DickeBipartition>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn two_qubit_target(kind: TargetKind) -> Result<QuantumState> {
    let c = |x: f64| Complex64::new(x, 0.0);
    match kind {
        TargetKind::Excited => QuantumState::basis_state(4, 3),
        TargetKind::Uniform => {
            QuantumState::from_unnormalized(DVector::from_vec(vec![c(1.0); 4]))
        }
        TargetKind::Bell => QuantumState::from_unnormalized(DVector::from_vec(vec![
            c(1.0),
            c(0.0),
            c(0.0),
            c(1.0),
        ])),
    }
}

/// Cost selected by the configuration (or the study default), built against
/// the point's target/bipartition.
fn build_cost(
    config: &ExperimentConfig,
    default_primary: PrimaryKind,
    model: &dyn HamiltonianModel,
    bases: &[BaseGuess],
    total_time: f64,
    target: Option<&QuantumState>,
    bipartition: Option<&DickeBipartition>,
) -> Result<CostSpec> {
    let kind = config.cost.primary.unwrap_or(default_primary);
    let primary = match kind {
        PrimaryKind::Infidelity => {
            let target = target.ok_or_else(|| {
                CrabError::Config("cost.primary: infidelity needs a target state for this study".into())
            })?;
            PrimaryCost::Infidelity { target: target.clone() }
        }
        PrimaryKind::FinalEnergy => {
            let finals: Vec<f64> =
                bases.iter().map(|b| b.value_at(total_time, total_time)).collect();
            PrimaryCost::FinalEnergy { hamiltonian: model.build(&finals)? }
        }
        PrimaryKind::NegEntropy => {
            let part = bipartition.ok_or_else(|| {
                CrabError::Config("cost.primary: neg-entropy applies to the collective-spin studies only".into())
            })?;
            PrimaryCost::NegEntropy { bipartition: *part }
        }
    };
    let mut spec = CostSpec::new(primary, config.cost.alpha, config.cost.fluence_weights.clone())?;
    if let Some(rob) = config.cost.robustness {
        spec = spec.with_robustness(rob.to_spec());
    }
    Ok(spec)
}

/// Instantiate the model, states, timing, and cost for one sweep point.
fn setup_point(config: &ExperimentConfig, point: &PointKey) -> Result<ProblemSetup> {
    let size = point.size.unwrap_or(config.model.n_spins);
    match config.study {
        Study::TwoQubit => {
            let model = TwoQubitJosephson { e_c: config.model.e_c, e_j: config.model.e_j };
            let psi0 = QuantumState::basis_state(4, 0)?;
            let target = two_qubit_target(point.target.ok_or_else(|| {
                CrabError::Config("two-qubit point needs a target".into())
            })?)?;
            let total_time = config
                .timing
                .total_time
                .unwrap_or(PI / config.model.e_j.abs());
            let bases = vec![BaseGuess::Constant { value: config.ansatz.guess_amplitude }];
            let cost = build_cost(config, PrimaryKind::Infidelity, &model, &bases, total_time, Some(&target), None)?;
            Ok(ProblemSetup {
                model: ModelInstance::TwoQubit(model),
                psi0,
                cost,
                bases,
                total_time,
                gap_min: None,
                t_qsl: None,
                target: Some(target),
                bipartition: None,
            })
        }
        Study::LmgTransition | Study::LinearVsOptimal => {
            let model = LmgDicke { n_spins: size, gamma: config.model.anisotropy, coupling: 1.0 };
            let g_i = config.ansatz.field_initial;
            let grid: Vec<Vec<f64>> =
                linspace(0.0, g_i, config.timing.gap_scan_points).into_iter().map(|g| vec![g]).collect();
            let scan = minimum_gap_scan(&model, &grid)?;
            let timing = ProblemTiming::from_gap(scan.gap_min, config.timing.t_qsl_multiple)?;
            let total_time = point
                .total_time
                .or(config.timing.total_time)
                .unwrap_or(timing.total_time);
            let sector = model.reachable_sector();
            let psi0 = ground_state(&model, &[g_i], sector.as_deref())?;
            let target = ground_state(&model, &[0.0], sector.as_deref())?;
            let bases = vec![BaseGuess::LinearRamp { start: g_i, end: 0.0 }];
            let cost = build_cost(config, PrimaryKind::Infidelity, &model, &bases, total_time, Some(&target), None)?;
            Ok(ProblemSetup {
                model: ModelInstance::Lmg(model),
                psi0,
                cost,
                bases,
                total_time,
                gap_min: Some(timing.gap_min),
                t_qsl: Some(timing.t_qsl),
                target: Some(target),
                bipartition: None,
            })
        }
        Study::LmgEntropy => {
            let model = LmgDicke { n_spins: size, gamma: config.model.anisotropy, coupling: 1.0 };
            let g_i = config.ansatz.field_initial;
            let sector = model.reachable_sector();
            let psi0 = ground_state(&model, &[g_i], sector.as_deref())?;
            let part = DickeBipartition::half(size)?;
            let total_time = point.total_time.or(config.timing.total_time).ok_or_else(|| {
                CrabError::Config("entropy point needs a total time".into())
            })?;
            let bases = vec![BaseGuess::LinearRamp { start: g_i, end: 0.0 }];
            let cost = build_cost(config, PrimaryKind::NegEntropy, &model, &bases, total_time, None, Some(&part))?;
            Ok(ProblemSetup {
                model: ModelInstance::Lmg(model),
                psi0,
                cost,
                bases,
                total_time,
                gap_min: None,
                t_qsl: None,
                target: None,
                bipartition: Some(part),
            })
        }
        Study::ChainTransfer => {
            let model = SpinChainTransfer::new(size)?;
            let c0 = config.ansatz.trap_strength;
            let x1 = model.positions[0];
            let xn = model.positions[size - 1];
            // The speed limit for end-to-end transfer is ballistic, not
            // gap-derived: the one-excitation band supports group velocity
            // at most 2J, so crossing the chain takes at least N / (2J).
            // (A gap scan along the dragged-trap path gives a time several
            // times shorter than ballistic, below which no control can
            // reach the far end at all.)
            let t_qsl = size as f64 / (2.0 * model.coupling);
            let total_time = point
                .total_time
                .or(config.timing.total_time)
                .unwrap_or(config.timing.t_qsl_multiple * t_qsl);
            let psi0 = QuantumState::basis_state(size, 0)?;
            let target = QuantumState::basis_state(size, size - 1)?;
            let bases = vec![
                BaseGuess::LinearRamp { start: x1, end: xn },
                BaseGuess::Constant { value: c0 },
            ];
            let cost = build_cost(config, PrimaryKind::Infidelity, &model, &bases, total_time, Some(&target), None)?;
            Ok(ProblemSetup {
                model: ModelInstance::Chain(model),
                psi0,
                cost,
                bases,
                total_time,
                gap_min: None,
                t_qsl: Some(t_qsl),
                target: Some(target),
                bipartition: None,
            })
        }
    }
}

fn enumerate_points(config: &ExperimentConfig) -> Vec<PointKey> {
    let mut points = Vec::new();
    match config.study {
        Study::TwoQubit => {
            for target in config.targets() {
                for &nc in &config.ansatz.n_components {
                    for &rand in &config.ansatz.randomized_frequencies {
                        points.push(PointKey {
                            target: Some(target),
                            n_components: Some(nc),
                            randomized: Some(rand),
                            ..PointKey::empty()
                        });
                    }
                }
            }
        }
        Study::LmgTransition | Study::ChainTransfer => {
            for size in config.sizes() {
                let ncs: Vec<usize> =
                    if config.study == Study::ChainTransfer && !config.sweep.nc_fractions.is_empty() {
                        config
                            .sweep
                            .nc_fractions
                            .iter()
                            .map(|f| ((f * size as f64).round() as usize).max(1))
                            .collect()
                    } else {
                        config.ansatz.n_components.clone()
                    };
                for nc in ncs {
                    for &rand in &config.ansatz.randomized_frequencies {
                        points.push(PointKey {
                            size: Some(size),
                            n_components: Some(nc),
                            randomized: Some(rand),
                            ..PointKey::empty()
                        });
                    }
                }
            }
        }
        Study::LmgEntropy => {
            let times = if config.sweep.times.is_empty() {
                vec![config.timing.total_time.unwrap_or(1.0)]
            } else {
                config.sweep.times.clone()
            };
            for size in config.sizes() {
                for &t in &times {
                    for &nc in &config.ansatz.n_components {
                        points.push(PointKey {
                            size: Some(size),
                            total_time: Some(t),
                            n_components: Some(nc),
                            randomized: Some(config.ansatz.randomized_frequencies[0]),
                            ..PointKey::empty()
                        });
                    }
                }
            }
        }
        Study::LinearVsOptimal => {}
    }
    points
}

/// Deterministic per-point seed: FNV-1a of the point label mixed with the
/// master seed, so reordering sweep axes never changes a point's stream.
fn point_seed(master_seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ master_seed
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn nominal_final_state(
    setup: &ProblemSetup,
    fields: &[ControlField],
    n_steps: usize,
) -> Result<QuantumState> {
    let prop = propagate(
        setup.model.as_dyn(),
        fields,
        &setup.psi0,
        setup.total_time,
        &PropagationConfig::new(n_steps)?,
    )?;
    Ok(prop.final_state)
}

struct PointMetrics {
    infidelity: Option<f64>,
    entropy: Option<f64>,
}

fn point_metrics(setup: &ProblemSetup, final_state: &QuantumState) -> Result<PointMetrics> {
    let inf = match &setup.target {
        Some(t) => Some(infidelity(final_state, t)?),
        None => None,
    };
    let ent = match &setup.bipartition {
        Some(p) => Some(von_neumann_entropy(&reduced_density_dicke(final_state, p)?)?),
        None => None,
    };
    Ok(PointMetrics { infidelity: inf, entropy: ent })
}

fn apply_overrides(config: &ExperimentConfig, opts: &RunOptions) -> ExperimentConfig {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.master_seed = seed;
    }
    if let Some(steps) = opts.steps {
        config.n_steps = Some(steps);
    }
    config
}

/// Execute the configured sweep: optimize every point, write `results.csv`,
/// `traces.csv`, one pulse document per point, and `manifest.json`.
pub fn run_study(config: &ExperimentConfig, opts: &RunOptions) -> Result<ResultManifest> {
    config.validate()?;
    let config = apply_overrides(config, opts);
    if config.study == Study::LinearVsOptimal {
        return Err(CrabError::Config(
            "the linear-vs-optimal study is a diagnostic; use the diagnose command".into(),
        ));
    }
    fs::create_dir_all(&opts.out_dir)?;
    let started = Instant::now();
    let n_steps = config.resolve_n_steps();
    let simplex = config.optimizer.simplex();
    let points = enumerate_points(&config);
    if points.is_empty() {
        return Err(CrabError::Config("the sweep is empty".into()));
    }

    let mut results_rows: Vec<String> = vec![results_header(config.study).to_string()];
    let mut trace_rows: Vec<String> = vec!["point,instance,eval,best_cost".to_string()];
    let mut records = Vec::with_capacity(points.len());

    for point in &points {
        let setup = setup_point(&config, point)?;
        let nc = point.n_components.unwrap_or(config.ansatz.n_components[0]);
        let ansatz = PulseAnsatz {
            bases: setup.bases.clone(),
            n_components: nc,
            randomized_frequencies: point.randomized.unwrap_or(false),
            optimize_frequencies: config.ansatz.optimize_frequencies,
            regularizer: RegularizerKind::PolynomialBump,
            random_start: config.ansatz.random_start,
            start_scale: config.ansatz.start_scale,
        };
        let problem = CrabProblem {
            model: setup.model.as_dyn(),
            initial_state: setup.psi0.clone(),
            cost: setup.cost.clone(),
            ansatz,
            total_time: setup.total_time,
            propagation: PropagationConfig::new(n_steps)?,
        };
        let seed = point_seed(config.master_seed, &point.label());
        let sweep = multi_start(&problem, config.optimizer.n_instances, seed, config.optimizer.budget, &simplex)?;

        // baseline: the bare guess without any correction
        let baseline = match config.study {
            Study::LmgTransition | Study::ChainTransfer => {
                let bare: Vec<ControlField> = setup
                    .bases
                    .iter()
                    .map(|b| ControlField::bare(b.clone(), setup.total_time))
                    .collect::<Result<_>>()?;
                let state = nominal_final_state(&setup, &bare, n_steps)?;
                let metrics = point_metrics(&setup, &state)?;
                let cost = robust_cost(
                    &setup.cost,
                    setup.model.as_dyn(),
                    &bare,
                    &setup.psi0,
                    setup.total_time,
                    &PropagationConfig::new(n_steps)?,
                )?;
                Some((cost, metrics.infidelity))
            }
            _ => None,
        };

        let mut instance_costs = Vec::with_capacity(sweep.all.len());
        for (i, outcome) in sweep.all.iter().enumerate() {
            instance_costs.push(outcome.result.best_cost);
            let state = nominal_final_state(&setup, &outcome.fields, n_steps)?;
            let metrics = point_metrics(&setup, &state)?;
            results_rows.push(result_row(
                config.study,
                point,
                i,
                outcome.result.best_cost,
                &metrics,
                baseline.as_ref(),
            ));
            for (eval, best) in &outcome.result.trace {
                trace_rows.push(format!("{},{},{},{}", point.label(), i, eval, fmt(*best)));
            }
        }

        let best_state = nominal_final_state(&setup, &sweep.best.fields, n_steps)?;
        let best_metrics = point_metrics(&setup, &best_state)?;
        let pulse_file = format!("pulse-{}.json", point.label());
        let doc = PulseDocument {
            study: config.study,
            point: point.clone(),
            total_time: setup.total_time,
            n_steps,
            seed: sweep.best.result.seed,
            best_cost: sweep.best.result.best_cost,
            fields: sweep.best.fields.clone(),
        };
        fs::write(opts.out_dir.join(&pulse_file), serde_json::to_string_pretty(&doc)?)?;

        records.push(PointRecord {
            point: point.clone(),
            gap_min: setup.gap_min,
            t_qsl: setup.t_qsl,
            total_time: setup.total_time,
            n_steps,
            point_seed: seed,
            best_instance: sweep.best_index,
            best_cost: sweep.best.result.best_cost,
            best_infidelity: best_metrics.infidelity,
            best_entropy: best_metrics.entropy,
            baseline_cost: baseline.as_ref().map(|(c, _)| *c),
            baseline_infidelity: baseline.as_ref().and_then(|(_, i)| *i),
            instance_costs,
            pulse_file,
        });
    }

    fs::write(opts.out_dir.join("results.csv"), results_rows.join("\n") + "\n")?;
    fs::write(opts.out_dir.join("traces.csv"), trace_rows.join("\n") + "\n")?;
    let manifest = ResultManifest {
        study: config.study,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.master_seed,
        n_steps,
        config: config.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        points: records,
    };
    fs::write(opts.out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn results_header(study: Study) -> &'static str {
    match study {
        Study::TwoQubit => "target,n_components,randomized,instance,cost,infidelity",
        Study::LmgTransition => "n_spins,n_components,instance,cost,infidelity,baseline_infidelity",
        Study::ChainTransfer => "n_spins,n_components,nc_over_n,instance,cost,infidelity",
        Study::LmgEntropy => "n_spins,total_time,instance,cost,entropy,entropy_max",
        Study::LinearVsOptimal => "",
    }
}

fn result_row(
    study: Study,
    point: &PointKey,
    instance: usize,
    cost: f64,
    metrics: &PointMetrics,
    baseline: Option<&(f64, Option<f64>)>,
) -> String {
    match study {
        Study::TwoQubit => format!(
            "{},{},{},{},{},{}",
            point.target.unwrap().name(),
            point.n_components.unwrap(),
            point.randomized.unwrap(),
            instance,
            fmt(cost),
            fmt(metrics.infidelity.unwrap()),
        ),
        Study::LmgTransition => format!(
            "{},{},{},{},{},{}",
            point.size.unwrap(),
            point.n_components.unwrap(),
            instance,
            fmt(cost),
            fmt(metrics.infidelity.unwrap()),
            fmt(baseline.and_then(|(_, i)| *i).unwrap_or(f64::NAN)),
        ),
        Study::ChainTransfer => {
            let n = point.size.unwrap() as f64;
            let nc = point.n_components.unwrap();
            format!(
                "{},{},{},{},{},{}",
                point.size.unwrap(),
                nc,
                fmt(nc as f64 / n),
                instance,
                fmt(cost),
                fmt(metrics.infidelity.unwrap()),
            )
        }
        Study::LmgEntropy => {
            let n = point.size.unwrap();
            format!(
                "{},{},{},{},{},{}",
                n,
                fmt(point.total_time.unwrap()),
                instance,
                fmt(cost),
                fmt(metrics.entropy.unwrap()),
                fmt(((n / 2 + 1) as f64).log2()),
            )
        }
        Study::LinearVsOptimal => String::new(),
    }
}

/// Summary of a trajectory diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DiagnoseReport {
    pub gap_min: f64,
    pub t_qsl: f64,
    pub total_time: f64,
    pub n_steps: usize,
    pub linear_final_p_tot: f64,
    pub linear_final_infidelity: f64,
    pub optimized_final_p_tot: Option<f64>,
    pub optimized_final_infidelity: Option<f64>,
}

fn write_trajectory(
    path: &Path,
    model: &dyn HamiltonianModel,
    fields: &[ControlField],
    psi0: &QuantumState,
    total_time: f64,
    n_steps: usize,
    stride: usize,
    k_columns: usize,
) -> Result<(f64, QuantumState)> {
    let config = PropagationConfig::new(n_steps)?.with_stride(stride)?;
    let prop = propagate(model, fields, psi0, total_time, &config)?;
    let mut rows = Vec::new();
    let mut header = vec!["t".to_string()];
    for i in 0..k_columns {
        header.push(format!("p_{i}"));
    }
    header.push("p_tot".to_string());
    rows.push(header.join(","));

    let mut samples: Vec<(f64, &QuantumState)> =
        prop.checkpoints.iter().map(|(t, s)| (*t, s)).collect();
    if samples.last().map_or(true, |(t, _)| (total_time - t).abs() > 1e-12) {
        samples.push((total_time, &prop.final_state));
    }
    let mut final_p_tot = 0.0;
    for (t, state) in samples {
        let controls: Vec<f64> = fields.iter().map(|f| f.eval(t)).collect::<Result<_>>()?;
        let pops = excitation_probabilities(state, model, &controls, model.dim())?;
        let mut row = vec![fmt(t)];
        for i in 0..k_columns {
            row.push(fmt(pops.probabilities.get(i).copied().unwrap_or(0.0)));
        }
        row.push(fmt(pops.total_excitation));
        rows.push(row.join(","));
        final_p_tot = pops.total_excitation;
    }
    fs::write(path, rows.join("\n") + "\n")?;
    Ok((final_p_tot, prop.final_state))
}

/// Propagate the linear ramp (and, when configured, a stored optimized
/// pulse) while recording instantaneous excitation probabilities.
pub fn diagnose_trajectory(config: &ExperimentConfig, opts: &RunOptions) -> Result<DiagnoseReport> {
    config.validate()?;
    let config = apply_overrides(config, opts);
    if config.study != Study::LinearVsOptimal {
        return Err(CrabError::Config(
            "diagnose requires study = \"linear-vs-optimal\"".into(),
        ));
    }
    fs::create_dir_all(&opts.out_dir)?;
    let point = PointKey { size: Some(config.model.n_spins), ..PointKey::empty() };
    let setup = setup_point(&config, &point)?;
    let n_steps = config.resolve_n_steps();
    let stride = config.diagnostics.checkpoint_stride;
    let k = config.diagnostics.k_levels.min(setup.model.as_dyn().dim());
    let target = setup.target.as_ref().unwrap();

    let linear: Vec<ControlField> = setup
        .bases
        .iter()
        .map(|b| ControlField::bare(b.clone(), setup.total_time))
        .collect::<Result<_>>()?;
    let (lin_p_tot, lin_final) = write_trajectory(
        &opts.out_dir.join("linear.csv"),
        setup.model.as_dyn(),
        &linear,
        &setup.psi0,
        setup.total_time,
        n_steps,
        stride,
        k,
    )?;
    let lin_inf = infidelity(&lin_final, target)?;

    let mut report = DiagnoseReport {
        gap_min: setup.gap_min.unwrap(),
        t_qsl: setup.t_qsl.unwrap(),
        total_time: setup.total_time,
        n_steps,
        linear_final_p_tot: lin_p_tot,
        linear_final_infidelity: lin_inf,
        optimized_final_p_tot: None,
        optimized_final_infidelity: None,
    };

    if let Some(pulse_path) = &config.diagnostics.pulse {
        let doc = PulseDocument::from_path(Path::new(pulse_path)).map_err(|e| {
            CrabError::Config(format!(
                "cannot read the stored pulse {pulse_path} ({e}); run the lmg-transition study first"
            ))
        })?;
        let arity = setup.model.as_dyn().control_arity();
        if doc.fields.len() != arity {
            return Err(CrabError::DimensionMismatch { expected: arity, got: doc.fields.len() });
        }
        let (opt_p_tot, opt_final) = write_trajectory(
            &opts.out_dir.join("optimized.csv"),
            setup.model.as_dyn(),
            &doc.fields,
            &setup.psi0,
            doc.total_time,
            n_steps,
            stride,
            k,
        )?;
        report.optimized_final_p_tot = Some(opt_p_tot);
        report.optimized_final_infidelity = Some(infidelity(&opt_final, target)?);
    }

    fs::write(opts.out_dir.join("diagnose.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReplayReport {
    pub stored_cost: f64,
    pub recomputed_cost: f64,
    pub n_steps: usize,
    /// Whether the stored step count was used, making bit-level agreement
    /// mandatory.
    pub exact: bool,
}

/// Recompute the cost of a stored pulse under the given configuration.
/// With the stored step count the result must match `best_cost` to 1e-12
/// relative; with an overridden step count the report simply records both.
pub fn replay_pulse(pulse_path: &Path, config: &ExperimentConfig, opts: &RunOptions) -> Result<ReplayReport> {
    config.validate()?;
    let config = apply_overrides(config, opts);
    let doc = PulseDocument::from_path(pulse_path)?;
    if doc.study != config.study {
        return Err(CrabError::Config(format!(
            "pulse was produced by the {} study but the configuration selects {}",
            doc.study.name(),
            config.study.name()
        )));
    }
    let setup = setup_point(&config, &doc.point)?;
    let arity = setup.model.as_dyn().control_arity();
    if doc.fields.len() != arity {
        return Err(CrabError::DimensionMismatch { expected: arity, got: doc.fields.len() });
    }
    let n_steps = opts.steps.unwrap_or(doc.n_steps);
    let cost = robust_cost(
        &setup.cost,
        setup.model.as_dyn(),
        &doc.fields,
        &setup.psi0,
        doc.total_time,
        &PropagationConfig::new(n_steps)?,
    )?;
    let exact = n_steps == doc.n_steps;
    if exact {
        let tol = 1e-12 * doc.best_cost.abs().max(1.0);
        if (cost - doc.best_cost).abs() > tol {
            return Err(CrabError::Internal(format!(
                "replayed cost {cost:e} differs from stored best cost {:e} beyond 1e-12 relative; \
                 the pulse document is stale or was edited",
                doc.best_cost
            )));
        }
    }
    Ok(ReplayReport { stored_cost: doc.best_cost, recomputed_cost: cost, n_steps, exact })
}
