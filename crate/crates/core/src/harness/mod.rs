//! Experiment layer: metrics, heuristic angles, exact re-evaluation,
//! multi-run aggregation and parameter transfer. Batch execution and report
//! emission live in [`experiment`] and [`report`].

pub mod experiment;
pub mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerError, RunResult};
use crate::engine::{AngleVector, EngineError, QaoaSimulator};
use crate::instances::{InstanceError, ProblemInstance, SpectrumExtrema};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("degenerate spectrum: c_min = c_max = {0}")]
    DegenerateSpectrum(f64),
    #[error("aggregation needs at least 2 curves, got {0}")]
    TooFewCurves(usize),
    #[error("no grid point is covered by every curve")]
    EmptyGrid,
    #[error("run result carries {archive} archive records for {evaluations} evaluations")]
    MissingArchive { archive: usize, evaluations: usize },
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("partial-run conflict at {path}: {reason}")]
    PartialRunConflict { path: String, reason: String },
    #[error("{failed} of {total} runs failed")]
    RunsFailed { failed: usize, total: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("plot: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// `r = (c_max - value) / (c_max - c_min)`: 1 at the minimum, 0 at the maximum.
pub fn approximation_ratio(value: f64, extrema: &SpectrumExtrema) -> Result<f64> {
    let span = extrema.c_max - extrema.c_min;
    if span <= 0.0 {
        return Err(HarnessError::DegenerateSpectrum(extrema.c_min));
    }
    Ok((extrema.c_max - value) / span)
}

/// Parameter-transfer angles for heavy-hex Ising models at p = 3, 4, 5.
pub struct HeuristicAngleTable;

impl HeuristicAngleTable {
    const P3: ([f64; 3], [f64; 3]) = (
        [-0.14264, -0.26589, -0.34195],
        [0.50502, 0.35713, 0.19264],
    );
    const P4: ([f64; 4], [f64; 4]) = (
        [-0.12077, -0.22360, -0.29902, -0.35329],
        [0.54321, 0.41806, 0.28615, 0.16041],
    );
    const P5: ([f64; 5], [f64; 5]) = (
        [-0.11764, -0.19946, -0.268736, -0.321586, -0.34583],
        [0.53822, 0.44776, 0.32923, 0.23056, 0.12587],
    );

    pub fn layers() -> [usize; 3] {
        [3, 4, 5]
    }

    pub fn get(p: usize) -> Option<AngleVector> {
        let (g, b): (&[f64], &[f64]) = match p {
            3 => (&Self::P3.0, &Self::P3.1),
            4 => (&Self::P4.0, &Self::P4.1),
            5 => (&Self::P5.0, &Self::P5.1),
            _ => return None,
        };
        Some(AngleVector {
            gamma: g.to_vec(),
            beta: b.to_vec(),
        })
    }
}

/// One point of an exact re-evaluation curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactPoint {
    pub evaluations: usize,
    pub cumulative_shots: u64,
    /// Best-so-far archived (finite-shot) value.
    pub finite_best: f64,
    /// Exact cost at the angles that achieved `finite_best`.
    pub exact: f64,
}

/// Exact cost at the best-so-far angles after every evaluation, with the
/// argmin chosen on archived values. Not monotone in general.
pub fn reevaluate_exact(result: &RunResult, instance: &ProblemInstance) -> Result<Vec<ExactPoint>> {
    if result.archive.len() != result.evaluations {
        return Err(HarnessError::MissingArchive {
            archive: result.archive.len(),
            evaluations: result.evaluations,
        });
    }
    let sim = QaoaSimulator::new(instance)?;
    let mut out = Vec::with_capacity(result.archive.len());
    let mut best: Option<(f64, f64)> = None;
    for (rec, pt) in result.archive.iter().zip(&result.learning_curve) {
        if best.map_or(true, |(v, _)| rec.value < v) {
            best = Some((rec.value, sim.exact_cost(&rec.theta)?));
        }
        let (finite_best, exact) = best.expect("set above");
        out.push(ExactPoint {
            evaluations: pt.evaluations,
            cumulative_shots: pt.cumulative_shots,
            finite_best,
            exact,
        });
    }
    Ok(out)
}

/// Pointwise mean and `2σ/√m` half-width of `m` curves on a common grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
    pub runs: usize,
}

/// Value of a step curve (sorted by x) at `x`, holding the last value at or
/// before `x`.
fn step_value(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let k = curve.partition_point(|&(cx, _)| cx <= x);
    (k > 0).then(|| curve[k - 1].1)
}

/// Right-continuous step interpolation of every curve onto `grid`, then mean
/// and half-width over curves. Grid points preceding the first point of any
/// curve are dropped. The spread uses the population standard deviation.
pub fn aggregate(curves: &[Vec<(f64, f64)>], grid: &[f64]) -> Result<AggregateCurve> {
    let m = curves.len();
    if m < 2 {
        return Err(HarnessError::TooFewCurves(m));
    }
    let mut out = AggregateCurve {
        grid: Vec::new(),
        mean: Vec::new(),
        half_width: Vec::new(),
        runs: m,
    };
    for &x in grid {
        let Some(values) = curves.iter().map(|c| step_value(c, x)).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let mean = values.iter().sum::<f64>() / m as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
        out.grid.push(x);
        out.mean.push(mean);
        out.half_width.push(2.0 * var.sqrt() / (m as f64).sqrt());
    }
    if out.grid.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    Ok(out)
}

/// Transfer of fixed angles to one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub instance_id: String,
    pub exact: f64,
    /// Mean of one finite-shot estimate per seed.
    pub sampled_mean: f64,
    pub heuristic_exact: Option<f64>,
    /// `heuristic_exact - exact`; positive when the transferred angles beat
    /// the heuristic ones.
    pub margin: Option<f64>,
}

/// Evaluates `angles` on each instance, exactly and with `shots` shots per
/// seed, next to the heuristic angles of the same depth when tabulated.
pub fn transfer_eval(
    angles: &AngleVector,
    instances: &[(String, ProblemInstance)],
    shots: u64,
    seeds: &[u64],
) -> Result<Vec<TransferRow>> {
    let heuristic = HeuristicAngleTable::get(angles.p());
    instances
        .iter()
        .map(|(id, inst)| {
            let sim = QaoaSimulator::new(inst)?;
            let exact = sim.exact_cost(angles)?;
            let sampled_mean = if seeds.is_empty() {
                f64::NAN
            } else {
                let mut s = 0.0;
                for &seed in seeds {
                    s += sim.sampled_cost(angles, shots, seed)?.value;
                }
                s / seeds.len() as f64
            };
            let heuristic_exact = heuristic.as_ref().map(|h| sim.exact_cost(h)).transpose()?;
            Ok(TransferRow {
                instance_id: id.clone(),
                exact,
                sampled_mean,
                heuristic_exact,
                margin: heuristic_exact.map(|h| h - exact),
            })
        })
        .collect()
}
