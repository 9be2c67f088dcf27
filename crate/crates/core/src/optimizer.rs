//! Derivative-free minimization of the CRAB multivariable cost with
//! multi-start randomized-frequency instances under a strict evaluation
//! budget.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{robust_cost, CostSpec};
use crate::dynamics::{PropagationConfig, QuantumState};
use crate::error::{CrabError, Result};
use crate::models::HamiltonianModel;
use crate::pulse::{make_frequencies, BaseGuess, BoundaryRegularizer, ControlField, CrabParams, RegularizerKind};

/// Nelder-Mead simplex hyperparameters and stopping rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplexConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Per-coordinate offset of the initial simplex around x0.
    pub initial_step: f64,
    pub f_tolerance: f64,
    pub x_tolerance: f64,
    pub max_evals: usize,
    /// On simplex collapse before the budget is exhausted, re-seed a fresh
    /// simplex at the best vertex with the step halved; once the step is
    /// fully polished it cycles back to its initial value so the remaining
    /// budget keeps re-exploring around the best point.
    pub restart_on_collapse: bool,
    /// Seed for the random offset applied to the restart center whenever the
    /// step cycles back to its initial value. Without it, repeated restarts
    /// from an already-polished point retrace the same simplex path and the
    /// remaining budget is wasted.
    pub restart_jitter: Option<u64>,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: 0.3,
            f_tolerance: 1e-12,
            x_tolerance: 1e-10,
            max_evals: 10_000,
            restart_on_collapse: true,
            restart_jitter: None,
        }
    }
}

impl SimplexConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.expansion > 1.0 && 1.0 > self.contraction && self.contraction > 0.0) {
            return Err(CrabError::InvalidArgument(
                "simplex coefficients must satisfy expansion > 1 > contraction > 0".into(),
            ));
        }
        if self.max_evals < dim + 1 {
            return Err(CrabError::InvalidArgument(format!(
                "max_evals {} below simplex size {}",
                self.max_evals,
                dim + 1
            )));
        }
        Ok(())
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_params: Vec<f64>,
    pub best_cost: f64,
    pub n_evals: usize,
    /// (evaluation index, best-so-far cost), recorded at every improvement.
    pub trace: Vec<(usize, f64)>,
    pub seed: u64,
    /// The frequency draw used, one vector per control field.
    pub frequency_draw: Vec<Vec<f64>>,
}

struct Tracker<'a> {
    objective: &'a mut dyn FnMut(&[f64]) -> f64,
    n_evals: usize,
    max_evals: usize,
    best_params: Vec<f64>,
    best_cost: f64,
    trace: Vec<(usize, f64)>,
}

impl<'a> Tracker<'a> {
    /// Evaluate within the budget; `None` once it is exhausted. Non-finite
    /// objective values are recorded as +inf.
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.n_evals >= self.max_evals {
            return None;
        }
        self.n_evals += 1;
        let raw = (self.objective)(x);
        let f = if raw.is_finite() { raw } else { f64::INFINITY };
        if f < self.best_cost {
            self.best_cost = f;
            self.best_params = x.to_vec();
            self.trace.push((self.n_evals, f));
        }
        Some(f)
    }
}

/// Standard reflect/expand/contract/shrink simplex search. Returns the best
/// vertex ever evaluated; terminates on budget exhaustion or, with restarts
/// disabled, on simplex collapse (function spread below `f_tolerance` or
/// diameter below `x_tolerance`).
pub fn nelder_mead(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    config: &SimplexConfig,
) -> Result<OptimizationResult> {
    let dim = x0.len();
    if dim == 0 {
        return Err(CrabError::InvalidArgument("nelder_mead needs at least one variable".into()));
    }
    config.validate(dim)?;

    let mut tracker = Tracker {
        objective,
        n_evals: 0,
        max_evals: config.max_evals,
        best_params: x0.to_vec(),
        best_cost: f64::INFINITY,
        trace: Vec::new(),
    };

    let mut center = x0.to_vec();
    let mut step = config.initial_step;
    let mut jitter = config.restart_jitter.map(ChaCha8Rng::seed_from_u64);
    let mut hops = 0u32;
    'outer: loop {
        // fresh simplex around the current center
        let mut xs: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
        let mut fs: Vec<f64> = Vec::with_capacity(dim + 1);
        for i in 0..=dim {
            let mut v = center.clone();
            if i > 0 {
                v[i - 1] += step;
            }
            match tracker.eval(&v) {
                Some(f) => {
                    xs.push(v);
                    fs.push(f);
                }
                None => break 'outer,
            }
        }

        loop {
            // order: best first, worst last
            let mut order: Vec<usize> = (0..=dim).collect();
            order.sort_by(|&a, &b| fs[a].partial_cmp(&fs[b]).unwrap());
            let xs_new: Vec<Vec<f64>> = order.iter().map(|&i| xs[i].clone()).collect();
            let fs_new: Vec<f64> = order.iter().map(|&i| fs[i]).collect();
            xs = xs_new;
            fs = fs_new;

            let spread = fs[dim] - fs[0];
            let diameter = xs[1..]
                .iter()
                .map(|x| {
                    x.iter()
                        .zip(&xs[0])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max)
                })
                .fold(0.0f64, f64::max);
            let collapsed = spread.is_nan() || spread < config.f_tolerance || diameter < config.x_tolerance;
            if collapsed {
                if config.restart_on_collapse && tracker.n_evals < tracker.max_evals {
                    center = tracker.best_params.clone();
                    step *= 0.5;
                    if step < 1e-6 * config.initial_step.abs() {
                        // fully polished: hop away from the best point and
                        // re-explore, with the hop scale growing while no
                        // better basin turns up
                        step = config.initial_step;
                        if let Some(rng) = jitter.as_mut() {
                            hops += 1;
                            let scale = step * f64::from(1 << (hops % 5));
                            for c in center.iter_mut() {
                                *c += scale * rng.gen_range(-1.0..=1.0);
                            }
                        }
                    }
                    continue 'outer;
                }
                break 'outer;
            }

            // centroid of all but the worst
            let mut centroid = vec![0.0; dim];
            for x in &xs[..dim] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / dim as f64;
                }
            }
            let worst = xs[dim].clone();
            let lerp = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let reflected = lerp(config.reflection);
            let Some(f_r) = tracker.eval(&reflected) else { break 'outer };

            if f_r < fs[0] {
                // try to expand
                let expanded = lerp(config.reflection * config.expansion);
                let Some(f_e) = tracker.eval(&expanded) else { break 'outer };
                if f_e < f_r {
                    xs[dim] = expanded;
                    fs[dim] = f_e;
                } else {
                    xs[dim] = reflected;
                    fs[dim] = f_r;
                }
            } else if f_r < fs[dim - 1] {
                xs[dim] = reflected;
                fs[dim] = f_r;
            } else {
                // contract, outside or inside of the worst vertex
                let contracted = if f_r < fs[dim] {
                    lerp(config.reflection * config.contraction)
                } else {
                    lerp(-config.contraction)
                };
                let Some(f_c) = tracker.eval(&contracted) else { break 'outer };
                if f_c < fs[dim].min(f_r) {
                    xs[dim] = contracted;
                    fs[dim] = f_c;
                } else {
                    // shrink toward the best vertex
                    for i in 1..=dim {
                        let shrunk: Vec<f64> = xs[0]
                            .iter()
                            .zip(&xs[i])
                            .map(|(b, v)| b + config.shrink * (v - b))
                            .collect();
                        let Some(f_s) = tracker.eval(&shrunk) else { break 'outer };
                        xs[i] = shrunk;
                        fs[i] = f_s;
                    }
                }
            }
        }
    }

    Ok(OptimizationResult {
        best_params: tracker.best_params,
        best_cost: tracker.best_cost,
        n_evals: tracker.n_evals,
        trace: tracker.trace,
        seed: 0,
        frequency_draw: Vec::new(),
    })
}

/// The CRAB pulse ansatz shared by every control field of a problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseAnsatz {
    /// One base guess per control field.
    pub bases: Vec<BaseGuess>,
    pub n_components: usize,
    /// Draw frequencies randomly around the principal harmonics; otherwise
    /// use the principal harmonics themselves.
    pub randomized_frequencies: bool,
    /// Treat the frequencies as additional optimization variables
    /// (3 Nc per field instead of 2 Nc).
    pub optimize_frequencies: bool,
    pub regularizer: RegularizerKind,
    /// Start each instance from a uniform random amplitude vector in
    /// [-start_scale, start_scale] instead of from zero (g = 1).
    pub random_start: bool,
    pub start_scale: f64,
}

impl PulseAnsatz {
    pub fn fixed_harmonics(bases: Vec<BaseGuess>, n_components: usize) -> Self {
        Self {
            bases,
            n_components,
            randomized_frequencies: false,
            optimize_frequencies: false,
            regularizer: RegularizerKind::PolynomialBump,
            random_start: false,
            start_scale: 0.0,
        }
    }

    fn params_per_field(&self) -> usize {
        if self.optimize_frequencies {
            3 * self.n_components
        } else {
            2 * self.n_components
        }
    }
}

/// A fully-specified CRAB optimization problem.
pub struct CrabProblem<'a> {
    pub model: &'a dyn HamiltonianModel,
    pub initial_state: QuantumState,
    pub cost: CostSpec,
    pub ansatz: PulseAnsatz,
    pub total_time: f64,
    pub propagation: PropagationConfig,
}

/// Result of a CRAB run: the optimizer outcome plus the optimized fields.
#[derive(Debug, Clone)]
pub struct CrabOutcome {
    pub result: OptimizationResult,
    pub fields: Vec<ControlField>,
}

fn build_fields(
    ansatz: &PulseAnsatz,
    total_time: f64,
    frequencies: &[Vec<f64>],
    params: &[f64],
) -> Result<Vec<ControlField>> {
    let nc = ansatz.n_components;
    let per = ansatz.params_per_field();
    let mut fields = Vec::with_capacity(ansatz.bases.len());
    for (j, base) in ansatz.bases.iter().enumerate() {
        let chunk = &params[j * per..(j + 1) * per];
        let ws = if ansatz.optimize_frequencies {
            chunk[2 * nc..3 * nc].to_vec()
        } else {
            frequencies[j].clone()
        };
        let crab = CrabParams::new(chunk[..nc].to_vec(), chunk[nc..2 * nc].to_vec(), ws)?;
        fields.push(ControlField::new(
            base.clone(),
            crab,
            BoundaryRegularizer::new(ansatz.regularizer, total_time)?,
        )?);
    }
    Ok(fields)
}

/// Optimize the CRAB amplitudes (and optionally frequencies) of one problem
/// instance. The instance `seed` fixes the frequency draw and, when the
/// ansatz asks for it, the random amplitude start.
pub fn crab_optimize(problem: &CrabProblem, config: &SimplexConfig, seed: u64) -> Result<CrabOutcome> {
    let arity = problem.model.control_arity();
    if problem.ansatz.bases.len() != arity {
        return Err(CrabError::DimensionMismatch { expected: arity, got: problem.ansatz.bases.len() });
    }
    let nc = problem.ansatz.n_components;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frequencies: Vec<Vec<f64>> = (0..arity)
        .map(|_| {
            let field_seed = rng.next_u64();
            if nc == 0 {
                Ok(Vec::new())
            } else {
                make_frequencies(nc, problem.total_time, problem.ansatz.randomized_frequencies, field_seed)
            }
        })
        .collect::<Result<_>>()?;

    // degenerate ansatz: no correction, one baseline evaluation
    if nc == 0 {
        let fields: Vec<ControlField> = problem
            .ansatz
            .bases
            .iter()
            .map(|b| ControlField::bare(b.clone(), problem.total_time))
            .collect::<Result<_>>()?;
        let cost = robust_cost(
            &problem.cost,
            problem.model,
            &fields,
            &problem.initial_state,
            problem.total_time,
            &problem.propagation,
        )?;
        return Ok(CrabOutcome {
            result: OptimizationResult {
                best_params: Vec::new(),
                best_cost: cost,
                n_evals: 1,
                trace: vec![(1, cost)],
                seed,
                frequency_draw: frequencies,
            },
            fields,
        });
    }

    let per = problem.ansatz.params_per_field();
    let dim = per * arity;
    let mut x0 = vec![0.0; dim];
    for j in 0..arity {
        let chunk = &mut x0[j * per..(j + 1) * per];
        if problem.ansatz.random_start {
            let s = problem.ansatz.start_scale;
            for v in chunk[..2 * nc].iter_mut() {
                *v = rng.gen_range(-s..=s);
            }
        }
        if problem.ansatz.optimize_frequencies {
            chunk[2 * nc..].copy_from_slice(&frequencies[j]);
        }
    }

    // fail fast on inconsistent problem setup before entering the search
    let probe = build_fields(&problem.ansatz, problem.total_time, &frequencies, &x0)?;
    robust_cost(
        &problem.cost,
        problem.model,
        &probe,
        &problem.initial_state,
        problem.total_time,
        &problem.propagation,
    )?;

    let mut objective = |params: &[f64]| -> f64 {
        let Ok(fields) = build_fields(&problem.ansatz, problem.total_time, &frequencies, params) else {
            return f64::INFINITY;
        };
        robust_cost(
            &problem.cost,
            problem.model,
            &fields,
            &problem.initial_state,
            problem.total_time,
            &problem.propagation,
        )
        .unwrap_or(f64::INFINITY)
    };

    let instance_config = SimplexConfig {
        restart_jitter: config.restart_jitter.or_else(|| Some(rng.next_u64())),
        ..*config
    };
    let mut result = nelder_mead(&mut objective, &x0, &instance_config)?;
    result.seed = seed;
    result.frequency_draw = frequencies.clone();
    let fields = build_fields(&problem.ansatz, problem.total_time, &frequencies, &result.best_params)?;
    Ok(CrabOutcome { result, fields })
}

/// Best-of-n multi-start protocol: instance seeds derive deterministically
/// from the master seed, the global budget is split evenly, and the
/// minimum-cost instance wins (ties by instance index).
pub struct MultiStartOutcome {
    pub best_index: usize,
    pub best: CrabOutcome,
    pub all: Vec<CrabOutcome>,
}

pub fn multi_start(
    problem: &CrabProblem,
    n_instances: usize,
    master_seed: u64,
    total_budget: usize,
    config: &SimplexConfig,
) -> Result<MultiStartOutcome> {
    if n_instances == 0 {
        return Err(CrabError::InvalidArgument("multi_start needs at least one instance".into()));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(master_seed);
    let seeds: Vec<u64> = (0..n_instances).map(|_| seeder.next_u64()).collect();
    let per_instance = SimplexConfig {
        max_evals: (total_budget / n_instances).max(1),
        ..*config
    };
    let all: Vec<CrabOutcome> = seeds
        .par_iter()
        .map(|&seed| crab_optimize(problem, &per_instance, seed))
        .collect::<Result<_>>()?;
    let best_index = all
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.result
                .best_cost
                .partial_cmp(&b.result.best_cost)
                .unwrap()
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .unwrap();
    let best = all[best_index].clone();
    Ok(MultiStartOutcome { best_index, best, all })
}
