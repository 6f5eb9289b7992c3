//! Inner solvers that minimize the surrogate inside a bound box.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("invalid bounds at component {index}: [{lower}, {upper}]")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective returned {value} at {theta:?}")]
    NonFiniteObjective { theta: Vec<f64>, value: f64 },
    #[error("start point has dimension {got}, bounds have {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, OptimError>;

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(OptimError::InvalidConfig(format!(
                "bound vectors of length {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(OptimError::InvalidBounds {
                    index,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// `γ ∈ [-π/2, π/2]`, `β ∈ [-π/4, π/4]` for `p` layers.
    pub fn maxcut(p: usize) -> Self {
        let lower = [vec![-FRAC_PI_2; p], vec![-FRAC_PI_4; p]].concat();
        let upper = [vec![FRAC_PI_2; p], vec![FRAC_PI_4; p]].concat();
        Self { lower, upper }
    }

    /// All `2p` components in `[-π/2, π/2)`; sampling never returns the upper edge.
    pub fn heavy_hex(p: usize) -> Self {
        Self {
            lower: vec![-FRAC_PI_2; 2 * p],
            upper: vec![FRAC_PI_2; 2 * p],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    pub fn clip(&self, theta: &mut [f64]) {
        for (x, (lo, hi)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*lo, *hi);
        }
    }

    /// Uniform draw from the half-open box `[lower, upper)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| rng.gen_range(lo..hi))
            .collect()
    }

    fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub npop: usize,
    pub gtol: usize,
    pub ftol: f64,
    pub max_gens: usize,
    pub mutation: f64,
    pub crossover: f64,
    pub seed: u64,
}

impl DeConfig {
    /// Population `20p`, stop after `gtol = 500` generations whose best value
    /// moved by at most `ftol = 5e-4`, rand/1/bin with `F = 0.8`, `CR = 0.9`.
    pub fn for_layers(p: usize, seed: u64) -> Self {
        Self {
            npop: 20 * p,
            gtol: 500,
            ftol: 5e-4,
            max_gens: 5000,
            mutation: 0.8,
            crossover: 0.9,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.npop < 4 {
            return Err(OptimError::InvalidConfig(format!("npop {} < 4", self.npop)));
        }
        if !(self.mutation > 0.0 && self.mutation < 2.0) {
            return Err(OptimError::InvalidConfig(format!(
                "mutation factor {} outside (0, 2)",
                self.mutation
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(OptimError::InvalidConfig(format!(
                "crossover rate {} outside [0, 1]",
                self.crossover
            )));
        }
        if self.gtol == 0 || self.max_gens == 0 || !(self.ftol >= 0.0) {
            return Err(OptimError::InvalidConfig(
                "gtol and max_gens must be positive, ftol nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FtolGtol,
    MaxGens,
    /// Every local search met its simplex tolerance.
    LocalConvergence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub best_theta: Vec<f64>,
    pub best_value: f64,
    pub generations: usize,
    pub evaluations: usize,
    pub terminated_by: Termination,
}

fn checked<F: Fn(&[f64]) -> f64 + ?Sized>(objective: &F, theta: &[f64], evals: &mut usize) -> Result<f64> {
    *evals += 1;
    let value = objective(theta);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(OptimError::NonFiniteObjective {
            theta: theta.to_vec(),
            value,
        })
    }
}

/// rand/1/bin differential evolution with clipping and greedy selection.
///
/// Stops once the best value improved by at most `ftol` over the last `gtol`
/// generations, or after `max_gens` generations.
pub fn differential_evolution<F>(objective: &F, bounds: &BoundBox, cfg: &DeConfig) -> Result<OptimizerReport>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    cfg.validate()?;
    let d = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut evals = 0;

    let mut pop: Vec<Vec<f64>> = (0..cfg.npop).map(|_| bounds.sample(&mut rng)).collect();
    let mut fit = pop
        .iter()
        .map(|x| checked(objective, x, &mut evals))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = argmin(&fit);
    let mut history = vec![fit[best]];

    let mut trials = vec![vec![0.0; d]; cfg.npop];
    let mut generation = 0;
    let terminated_by = loop {
        generation += 1;
        for (i, trial) in trials.iter_mut().enumerate() {
            let picks = loop {
                let s = sample(&mut rng, cfg.npop, 3);
                if !s.iter().any(|k| k == i) {
                    break [s.index(0), s.index(1), s.index(2)];
                }
            };
            let [a, b, c] = picks.map(|k| &pop[k]);
            let forced = rng.gen_range(0..d);
            for j in 0..d {
                trial[j] = if j == forced || rng.gen::<f64>() < cfg.crossover {
                    a[j] + cfg.mutation * (b[j] - c[j])
                } else {
                    pop[i][j]
                };
            }
            bounds.clip(trial);
        }
        for (i, trial) in trials.iter_mut().enumerate() {
            let f = checked(objective, trial, &mut evals)?;
            if f <= fit[i] {
                std::mem::swap(&mut pop[i], trial);
                fit[i] = f;
            }
        }
        best = argmin(&fit);
        history.push(fit[best]);

        if generation >= cfg.gtol && history[generation - cfg.gtol] - history[generation] <= cfg.ftol {
            break Termination::FtolGtol;
        }
        if generation >= cfg.max_gens {
            break Termination::MaxGens;
        }
    };

    Ok(OptimizerReport {
        best_theta: pop[best].clone(),
        best_value: fit[best],
        generations: generation,
        evaluations: evals,
        terminated_by,
    })
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v < values[best] { k } else { best })
}

/// Settings for the bounded Nelder-Mead local search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexConfig {
    /// Initial edge length as a fraction of each box width.
    pub initial_step: f64,
    pub xtol: f64,
    pub ftol: f64,
    pub max_iters: usize,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.05,
            xtol: 1e-10,
            ftol: 1e-12,
            max_iters: 5000,
        }
    }
}

/// Nelder-Mead from `start`, with every trial point clipped into the box.
pub fn local_search<F>(objective: &F, bounds: &BoundBox, start: &[f64], cfg: &SimplexConfig) -> Result<OptimizerReport>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let d = bounds.dim();
    if start.len() != d {
        return Err(OptimError::DimensionMismatch {
            expected: d,
            got: start.len(),
        });
    }
    let mut evals = 0;
    let mut x0 = start.to_vec();
    bounds.clip(&mut x0);

    let mut simplex = vec![x0.clone()];
    for (j, width) in bounds.widths().enumerate() {
        let mut v = x0.clone();
        let step = cfg.initial_step * width;
        // Step inward if the outward vertex would sit on the boundary.
        v[j] = if v[j] + step <= bounds.upper[j] { v[j] + step } else { v[j] - step };
        simplex.push(v);
    }
    let mut values = simplex
        .iter()
        .map(|v| checked(objective, v, &mut evals))
        .collect::<Result<Vec<f64>>>()?;

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iters = 0;
    let mut converged = false;
    while iters < cfg.max_iters {
        iters += 1;
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        values = order.iter().map(|&k| values[k]).collect();

        let spread = values[d] - values[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= cfg.ftol && diameter <= cfg.xtol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64)
            .collect();
        let toward = |t: f64, from: &[f64]| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(from).map(|(c, x)| c + t * (x - c)).collect();
            bounds.clip(&mut p);
            p
        };

        let reflected = toward(-alpha, &simplex[d]);
        let fr = checked(objective, &reflected, &mut evals)?;
        if fr < values[0] {
            let expanded = toward(-alpha * gamma, &simplex[d]);
            let fe = checked(objective, &expanded, &mut evals)?;
            if fe < fr {
                simplex[d] = expanded;
                values[d] = fe;
            } else {
                simplex[d] = reflected;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = reflected;
            values[d] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[d] {
            let p = toward(rho, &reflected);
            let f = checked(objective, &p, &mut evals)?;
            (p, f)
        } else {
            let p = toward(rho, &simplex[d]);
            let f = checked(objective, &p, &mut evals)?;
            (p, f)
        };
        if fc < values[d].min(fr) {
            simplex[d] = contracted;
            values[d] = fc;
            continue;
        }
        for k in 1..=d {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[k])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            values[k] = checked(objective, &shrunk, &mut evals)?;
            simplex[k] = shrunk;
        }
    }
    let best = argmin(&values);
    Ok(OptimizerReport {
        best_theta: simplex[best].clone(),
        best_value: values[best],
        generations: iters,
        evaluations: evals,
        terminated_by: if converged {
            Termination::LocalConvergence
        } else {
            Termination::MaxGens
        },
    })
}

/// Best of `n_starts` local searches from uniform random starts.
pub fn multistart_local<F>(
    objective: &F,
    bounds: &BoundBox,
    n_starts: usize,
    seed: u64,
    cfg: &SimplexConfig,
) -> Result<OptimizerReport>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    if n_starts == 0 {
        return Err(OptimError::InvalidConfig("n_starts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..n_starts).map(|_| bounds.sample(&mut rng)).collect();
    let mut best: Option<OptimizerReport> = None;
    let (mut generations, mut evaluations, mut all_converged) = (0, 0, true);
    for start in &starts {
        let r = local_search(objective, bounds, start, cfg)?;
        generations += r.generations;
        evaluations += r.evaluations;
        all_converged &= r.terminated_by == Termination::LocalConvergence;
        if best.as_ref().map_or(true, |b| r.best_value < b.best_value) {
            best = Some(r);
        }
    }
    let best = best.expect("n_starts >= 1");
    Ok(OptimizerReport {
        generations,
        evaluations,
        terminated_by: if all_converged {
            Termination::LocalConvergence
        } else {
            Termination::MaxGens
        },
        ..best
    })
}

/// `θ ↦ objective(θ) / n`.
pub fn rescale_objective<F>(objective: F, n: usize) -> impl Fn(&[f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert!(n >= 1, "rescale factor must be positive");
    let scale = n as f64;
    move |theta| objective(theta) / scale
}
