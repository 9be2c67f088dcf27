//! CRAB-parametrized control fields.
//!
//! A control field is a base guess pulse multiplied by a truncated
//! trigonometric correction whose frequencies sit randomly around the
//! principal harmonics of the pulse duration. A boundary regularizer pins
//! the correction to zero at both ends so the field always meets its
//! boundary values.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CrabError, Result};

/// Amplitudes and frequencies of the truncated trigonometric correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrabParams {
    pub amplitudes_a: Vec<f64>,
    pub amplitudes_b: Vec<f64>,
    /// Angular frequencies, strictly positive and strictly increasing.
    pub frequencies: Vec<f64>,
}

impl CrabParams {
    pub fn new(amplitudes_a: Vec<f64>, amplitudes_b: Vec<f64>, frequencies: Vec<f64>) -> Result<Self> {
        let p = Self { amplitudes_a, amplitudes_b, frequencies };
        p.validate()?;
        Ok(p)
    }

    /// Zero-amplitude parameters over the given frequency set: g(t) = 1.
    pub fn zeros(frequencies: Vec<f64>) -> Result<Self> {
        let n = frequencies.len();
        Self::new(vec![0.0; n], vec![0.0; n], frequencies)
    }

    pub fn n_components(&self) -> usize {
        self.frequencies.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frequencies.len();
        if self.amplitudes_a.len() != n || self.amplitudes_b.len() != n {
            return Err(CrabError::InvalidArgument(format!(
                "amplitude/frequency length mismatch: {} / {} / {}",
                self.amplitudes_a.len(),
                self.amplitudes_b.len(),
                n
            )));
        }
        for (k, w) in self.frequencies.iter().enumerate() {
            if !w.is_finite() || *w <= 0.0 {
                return Err(CrabError::InvalidArgument(format!("frequency {k} not positive: {w}")));
            }
            if k > 0 && self.frequencies[k - 1] >= *w {
                return Err(CrabError::InvalidArgument(format!(
                    "frequencies not strictly increasing at index {k}"
                )));
            }
        }
        Ok(())
    }
}

/// The base guess pulse the correction multiplies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseGuess {
    Constant { value: f64 },
    LinearRamp { start: f64, end: f64 },
    /// Sample times must cover [0, T] and be strictly increasing; values are
    /// linearly interpolated in between.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl BaseGuess {
    pub fn value_at(&self, t: f64, total_time: f64) -> f64 {
        match self {
            BaseGuess::Constant { value } => *value,
            BaseGuess::LinearRamp { start, end } => start + (end - start) * t / total_time,
            BaseGuess::Table { times, values } => {
                // strictly increasing times covering [0, T], checked at construction
                let i = match times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
                    Ok(i) => return values[i],
                    Err(i) => i,
                };
                if i == 0 {
                    return values[0];
                }
                if i == times.len() {
                    return values[values.len() - 1];
                }
                let (t0, t1) = (times[i - 1], times[i]);
                let (v0, v1) = (values[i - 1], values[i]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Same guess with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> BaseGuess {
        match self {
            BaseGuess::Constant { value } => BaseGuess::Constant { value: value * factor },
            BaseGuess::LinearRamp { start, end } => BaseGuess::LinearRamp {
                start: start * factor,
                end: end * factor,
            },
            BaseGuess::Table { times, values } => BaseGuess::Table {
                times: times.clone(),
                values: values.iter().map(|v| v * factor).collect(),
            },
        }
    }

    fn validate(&self, total_time: f64) -> Result<()> {
        if let BaseGuess::Table { times, values } = self {
            if times.len() < 2 || times.len() != values.len() {
                return Err(CrabError::InvalidArgument(
                    "table guess needs at least two (time, value) samples".into(),
                ));
            }
            if !times.windows(2).all(|w| w[0] < w[1]) {
                return Err(CrabError::InvalidArgument("table times must be strictly increasing".into()));
            }
            if times[0] > 0.0 || times[times.len() - 1] < total_time {
                return Err(CrabError::InvalidArgument(format!(
                    "table samples must cover [0, {total_time}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerKind {
    /// 1/lambda(t) = 4 t (T - t) / T^2: zero at both ends, one at midpoint.
    PolynomialBump,
    /// 1/lambda(t) = 1: correction unpinned, for testing only.
    None,
}

/// Boundary weight 1/lambda(t) applied to the trigonometric correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRegularizer {
    pub kind: RegularizerKind,
    pub total_time: f64,
}

impl BoundaryRegularizer {
    pub fn new(kind: RegularizerKind, total_time: f64) -> Result<Self> {
        if !(total_time > 0.0) {
            return Err(CrabError::InvalidArgument(format!("total_time must be positive, got {total_time}")));
        }
        Ok(Self { kind, total_time })
    }

    pub fn inv_lambda(&self, t: f64) -> f64 {
        match self.kind {
            RegularizerKind::PolynomialBump => {
                let tt = self.total_time;
                4.0 * t * (tt - t) / (tt * tt)
            }
            RegularizerKind::None => 1.0,
        }
    }
}

/// One CRAB control field: base guess times (1 + correction / lambda).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    pub base: BaseGuess,
    pub params: CrabParams,
    pub regularizer: BoundaryRegularizer,
}

impl ControlField {
    pub fn new(base: BaseGuess, params: CrabParams, regularizer: BoundaryRegularizer) -> Result<Self> {
        params.validate()?;
        base.validate(regularizer.total_time)?;
        Ok(Self { base, params, regularizer })
    }

    /// A field with no correction at all: the base guess itself.
    pub fn bare(base: BaseGuess, total_time: f64) -> Result<Self> {
        Self::new(
            base,
            CrabParams { amplitudes_a: vec![], amplitudes_b: vec![], frequencies: vec![] },
            BoundaryRegularizer::new(RegularizerKind::PolynomialBump, total_time)?,
        )
    }

    pub fn total_time(&self) -> f64 {
        self.regularizer.total_time
    }

    /// Gamma(t) = Gamma0(t) * [1 + (sum_n A_n sin(w_n t) + B_n cos(w_n t)) / lambda(t)].
    pub fn eval(&self, t: f64) -> Result<f64> {
        let tt = self.total_time();
        if !(0.0..=tt).contains(&t) {
            return Err(CrabError::OutOfRange { t, total_time: tt });
        }
        let mut corr = 0.0;
        for ((a, b), w) in self
            .params
            .amplitudes_a
            .iter()
            .zip(&self.params.amplitudes_b)
            .zip(&self.params.frequencies)
        {
            let (s, c) = (w * t).sin_cos();
            corr += a * s + b * c;
        }
        Ok(self.base.value_at(t, tt) * (1.0 + corr * self.regularizer.inv_lambda(t)))
    }

    /// Midpoint samples t_j = (j + 1/2) T / n_steps for the propagator grid.
    pub fn sample(&self, n_steps: usize) -> Result<Vec<(f64, f64)>> {
        if n_steps == 0 {
            return Err(CrabError::InvalidArgument("n_steps must be at least 1".into()));
        }
        let dt = self.total_time() / n_steps as f64;
        (0..n_steps)
            .map(|j| {
                let t = (j as f64 + 0.5) * dt;
                Ok((t, self.eval(t)?))
            })
            .collect()
    }

    /// Field with every output value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> ControlField {
        ControlField {
            base: self.base.scaled(factor),
            params: self.params.clone(),
            regularizer: self.regularizer,
        }
    }
}

/// Frequencies w_k = 2 pi k (1 + r_k) / T for k = 1..=n_components, with r_k
/// uniform in [-0.5, 0.5] when `randomized` (drawn from the seeded generator),
/// r_k = 0 otherwise. The result is sorted ascending; ties trigger a redraw.
pub fn make_frequencies(n_components: usize, total_time: f64, randomized: bool, seed: u64) -> Result<Vec<f64>> {
    if n_components == 0 {
        return Err(CrabError::InvalidArgument("n_components must be at least 1".into()));
    }
    if !(total_time > 0.0) {
        return Err(CrabError::InvalidArgument(format!("total_time must be positive, got {total_time}")));
    }
    if !randomized {
        return Ok((1..=n_components).map(|k| TAU * k as f64 / total_time).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut ws: Vec<f64> = (1..=n_components)
            .map(|k| {
                let r: f64 = rng.gen_range(-0.5..=0.5);
                TAU * k as f64 * (1.0 + r) / total_time
            })
            .collect();
        ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if ws.windows(2).all(|w| w[0] < w[1]) {
            return Ok(ws);
        }
        // measure-zero tie: draw a fresh configuration
    }
}
