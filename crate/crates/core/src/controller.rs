//! Adaptive sampling loop: sample the true cost, then repeatedly fit a
//! surrogate to every evaluation so far, minimize it, and evaluate the true
//! cost at the surrogate minimum.
//!
//! Every evaluation lands in an append-only [`Archive`]. All randomness is
//! derived from the run's master seed and the evaluation or iteration index,
//! so a run resumed from a partial archive continues exactly where an
//! uninterrupted run would have gone.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AngleVector, EngineError, QaoaSimulator};
use crate::optim::{self, BoundBox, DeConfig, OptimError, SimplexConfig};
use crate::surrogate::{dedupe, RbfSurrogate, Tail};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("truth evaluation failed: {0}")]
    Truth(#[from] EngineError),
    #[error("inner optimizer failed: {0}")]
    Optim(#[from] OptimError),
    #[error("archive {path}: {reason}")]
    Archive { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ControllerError>;

/// Expensive objective queried by the loop.
pub trait TruthOracle: Sync {
    fn evaluate(&self, angles: &AngleVector, seed: u64) -> Result<f64>;
    /// Shots per evaluation; 0 marks an exact (infinite-shot) oracle.
    fn shots(&self) -> u64;
    /// Divisor applied to the surrogate before inner minimization.
    fn scale(&self) -> usize {
        1
    }
}

/// Finite-shot (or exact, with `shots == 0`) QAOA cost.
#[derive(Clone, Debug)]
pub struct QaoaTruth {
    sim: Arc<QaoaSimulator>,
    shots: u64,
}

impl QaoaTruth {
    pub fn new(sim: Arc<QaoaSimulator>, shots: u64) -> Self {
        Self { sim, shots }
    }
}

impl TruthOracle for QaoaTruth {
    fn evaluate(&self, angles: &AngleVector, seed: u64) -> Result<f64> {
        Ok(if self.shots == 0 {
            self.sim.exact_cost(angles)?
        } else {
            self.sim.sampled_cost(angles, self.shots, seed)?.value
        })
    }

    fn shots(&self) -> u64 {
        self.shots
    }

    fn scale(&self) -> usize {
        self.sim.n()
    }
}

/// Wraps a plain function as a deterministic truth.
pub struct FnTruth<F> {
    f: F,
    shots: u64,
    scale: usize,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnTruth<F> {
    pub fn new(f: F, shots: u64, scale: usize) -> Self {
        Self { f, shots, scale }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> TruthOracle for FnTruth<F> {
    fn evaluate(&self, angles: &AngleVector, _seed: u64) -> Result<f64> {
        Ok((self.f)(&angles.to_flat()))
    }

    fn shots(&self) -> u64 {
        self.shots
    }

    fn scale(&self) -> usize {
        self.scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    RandomInit,
    HeuristicInit,
    Candidate,
    /// Uniform draw taken when the surrogate could not be fit.
    RandomFallback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub theta: AngleVector,
    pub value: f64,
    pub shots: u64,
    /// -1 for initial samples, otherwise the loop iteration (from 1).
    pub iteration: i64,
    pub source: Source,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

/// Append-only evaluation log, optionally mirrored to a JSON-lines file that
/// is flushed after every record.
#[derive(Debug, Default)]
pub struct Archive {
    records: Vec<EvaluationRecord>,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

impl Archive {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Starts a fresh file, truncating any previous content.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path)?;
        Ok(Self {
            records: Vec::new(),
            sink: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    /// Loads an existing file (or starts an empty one) and appends to it.
    pub fn open(path: &Path) -> Result<Self> {
        let records = if path.exists() { Self::load(path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            records,
            sink: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    pub fn load(path: &Path) -> Result<Vec<EvaluationRecord>> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| ControllerError::Archive {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", k + 1),
            })?;
            out.push(rec);
        }
        Ok(out)
    }

    pub fn append(&mut self, record: EvaluationRecord) -> Result<()> {
        if let Some((_, w)) = self.sink.as_mut() {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.sink.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn into_records(self) -> Vec<EvaluationRecord> {
        self.records
    }
}

/// Inner solver used to minimize the surrogate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerSolver {
    De {
        /// Defaults to `20p`.
        #[serde(default)]
        npop: Option<usize>,
        #[serde(default = "defaults::gtol")]
        gtol: usize,
        #[serde(default = "defaults::ftol")]
        ftol: f64,
        #[serde(default = "defaults::max_gens")]
        max_gens: usize,
        #[serde(default = "defaults::mutation")]
        mutation: f64,
        #[serde(default = "defaults::crossover")]
        crossover: f64,
    },
    Multistart {
        #[serde(default = "defaults::n_starts")]
        n_starts: usize,
        #[serde(default)]
        simplex: SimplexConfig,
    },
}

mod defaults {
    pub fn gtol() -> usize {
        500
    }
    pub fn ftol() -> f64 {
        5e-4
    }
    pub fn max_gens() -> usize {
        5000
    }
    pub fn mutation() -> f64 {
        0.8
    }
    pub fn crossover() -> f64 {
        0.9
    }
    pub fn n_starts() -> usize {
        10
    }
}

impl Default for InnerSolver {
    fn default() -> Self {
        Self::De {
            npop: None,
            gtol: defaults::gtol(),
            ftol: defaults::ftol(),
            max_gens: defaults::max_gens(),
            mutation: defaults::mutation(),
            crossover: defaults::crossover(),
        }
    }
}

impl InnerSolver {
    fn minimize<F: Fn(&[f64]) -> f64>(
        &self,
        objective: &F,
        bounds: &BoundBox,
        p: usize,
        seed: u64,
    ) -> std::result::Result<optim::OptimizerReport, OptimError> {
        match self {
            Self::De {
                npop,
                gtol,
                ftol,
                max_gens,
                mutation,
                crossover,
            } => {
                let cfg = DeConfig {
                    npop: npop.unwrap_or(20 * p),
                    gtol: *gtol,
                    ftol: *ftol,
                    max_gens: *max_gens,
                    mutation: *mutation,
                    crossover: *crossover,
                    seed,
                };
                optim::differential_evolution(objective, bounds, &cfg)
            }
            Self::Multistart { n_starts, simplex } => {
                optim::multistart_local(objective, bounds, *n_starts, seed, simplex)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub instance_id: String,
    pub p: usize,
    pub bounds: BoundBox,
    pub n_init: usize,
    pub n_it: usize,
    /// Shots per evaluation; 0 selects the exact cost.
    pub shots: u64,
    #[serde(default)]
    pub heuristic_angles: Vec<AngleVector>,
    #[serde(default)]
    pub inner: InnerSolver,
    #[serde(default)]
    pub tail: Tail,
    pub master_seed: u64,
    /// Store per-evaluation wall time in the archive. Makes archives
    /// non-reproducible byte for byte.
    #[serde(default)]
    pub record_timing: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let d = 2 * self.p;
        let fail = |m: String| Err(ControllerError::Config(m));
        if self.p == 0 {
            return fail("p must be at least 1".into());
        }
        if self.bounds.dim() != d {
            return fail(format!("bounds have dimension {}, expected {d}", self.bounds.dim()));
        }
        if self.n_init < d + 2 {
            return fail(format!("n_init {} < dimension + 2 = {}", self.n_init, d + 2));
        }
        if self.heuristic_angles.len() > self.n_init {
            return fail("more heuristic angles than initial samples".into());
        }
        for h in &self.heuristic_angles {
            if h.p() != self.p || !self.bounds.contains(&h.to_flat()) {
                return fail(format!("heuristic angles {h:?} do not fit p = {} and the bounds", self.p));
            }
        }
        Ok(())
    }

    pub fn total_evaluations(&self) -> usize {
        self.n_init + self.n_it
    }
}

const STREAM_INIT: u64 = 1;
const STREAM_TRUTH: u64 = 2;
const STREAM_INNER: u64 = 3;
const STREAM_FALLBACK: u64 = 4;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for item `index` of random stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

/// Sampling seed of the `index`-th truth evaluation of a run.
pub fn truth_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, STREAM_TRUTH, index as u64)
}

fn evaluate_and_append<T: TruthOracle + ?Sized>(
    archive: &mut Archive,
    cfg: &RunConfig,
    truth: &T,
    theta: AngleVector,
    iteration: i64,
    source: Source,
) -> Result<EvaluationRecord> {
    let seed = truth_seed(cfg.master_seed, archive.len());
    let start = Instant::now();
    let value = truth.evaluate(&theta, seed)?;
    if !value.is_finite() {
        return Err(ControllerError::Config(format!("truth returned {value}")));
    }
    let record = EvaluationRecord {
        theta,
        value,
        shots: truth.shots(),
        iteration,
        source,
        seed,
        wall_time_ms: cfg
            .record_timing
            .then(|| start.elapsed().as_secs_f64() * 1e3),
    };
    archive.append(record.clone())?;
    Ok(record)
}

fn check_truth<T: TruthOracle + ?Sized>(cfg: &RunConfig, truth: &T) -> Result<()> {
    if truth.shots() != cfg.shots {
        return Err(ControllerError::Config(format!(
            "truth uses {} shots, configuration says {}",
            truth.shots(),
            cfg.shots
        )));
    }
    Ok(())
}

/// Fills the archive up to `n_init` records: heuristic angles first, then
/// uniform random points.
pub fn initial_sample<T: TruthOracle + ?Sized>(cfg: &RunConfig, truth: &T, archive: &mut Archive) -> Result<()> {
    cfg.validate()?;
    check_truth(cfg, truth)?;
    for k in archive.len()..cfg.n_init {
        let (theta, source) = match cfg.heuristic_angles.get(k) {
            Some(h) => (h.clone(), Source::HeuristicInit),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, STREAM_INIT, k as u64));
                (AngleVector::from_flat(&cfg.bounds.sample(&mut rng))?, Source::RandomInit)
            }
        };
        evaluate_and_append(archive, cfg, truth, theta, -1, source)?;
    }
    Ok(())
}

/// One loop iteration: fit, minimize the rescaled surrogate, evaluate truth
/// at the candidate, append.
pub fn step<T: TruthOracle + ?Sized>(archive: &mut Archive, cfg: &RunConfig, truth: &T) -> Result<EvaluationRecord> {
    if archive.len() < cfg.n_init {
        return Err(ControllerError::Config(format!(
            "step needs the {} initial samples first, archive has {}",
            cfg.n_init,
            archive.len()
        )));
    }
    let iteration = (archive.len() - cfg.n_init + 1) as i64;
    let points: Vec<(Vec<f64>, f64)> = archive
        .records()
        .iter()
        .map(|r| (r.theta.to_flat(), r.value))
        .collect();
    let training = dedupe(&points);

    let candidate = RbfSurrogate::fit(&training, cfg.tail)
        .map_err(|e| e.to_string())
        .and_then(|surrogate| {
            let objective = optim::rescale_objective(|x: &[f64]| surrogate.value(x), truth.scale());
            let seed = derive_seed(cfg.master_seed, STREAM_INNER, iteration as u64);
            cfg.inner
                .minimize(&objective, &cfg.bounds, cfg.p, seed)
                .map(|r| r.best_theta)
                .map_err(|e| e.to_string())
        });

    let (theta, source) = match candidate {
        Ok(theta) => (theta, Source::Candidate),
        Err(reason) => {
            log::warn!(
                "{}: iteration {iteration}: surrogate step failed ({reason}); sampling a random point",
                cfg.instance_id
            );
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, STREAM_FALLBACK, iteration as u64));
            (cfg.bounds.sample(&mut rng), Source::RandomFallback)
        }
    };
    evaluate_and_append(archive, cfg, truth, AngleVector::from_flat(&theta)?, iteration, source)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub evaluations: usize,
    pub cumulative_shots: u64,
    pub best_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub theta_opt: AngleVector,
    pub c_opt: f64,
    pub evaluations: usize,
    pub total_shots: u64,
    /// Iterations that fell back to a random point.
    pub fit_failures: Vec<i64>,
    pub learning_curve: Vec<LearningPoint>,
    #[serde(skip)]
    pub archive: Vec<EvaluationRecord>,
}

impl RunResult {
    /// Summarizes an archive: `θ_opt` is the first record with the lowest value.
    pub fn from_records(config: RunConfig, records: Vec<EvaluationRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| ControllerError::Config("empty archive".into()))?;
        let mut best = first;
        let mut shots = 0u64;
        let mut curve = Vec::with_capacity(records.len());
        for (k, r) in records.iter().enumerate() {
            if r.value < best.value {
                best = r;
            }
            shots += r.shots;
            curve.push(LearningPoint {
                evaluations: k + 1,
                cumulative_shots: shots,
                best_value: best.value,
            });
        }
        Ok(Self {
            theta_opt: best.theta.clone(),
            c_opt: best.value,
            evaluations: records.len(),
            total_shots: shots,
            fit_failures: records
                .iter()
                .filter(|r| r.source == Source::RandomFallback)
                .map(|r| r.iteration)
                .collect(),
            learning_curve: curve,
            config,
            archive: records,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serializes") + "\n"
    }
}

/// Initial sampling followed by `n_it` iterations. A non-empty archive is
/// resumed; records beyond the configured budget are rejected.
pub fn run<T: TruthOracle + ?Sized>(cfg: &RunConfig, truth: &T, archive: &mut Archive) -> Result<RunResult> {
    cfg.validate()?;
    check_truth(cfg, truth)?;
    if archive.len() > cfg.total_evaluations() {
        return Err(ControllerError::Config(format!(
            "archive already holds {} records, budget is {}",
            archive.len(),
            cfg.total_evaluations()
        )));
    }
    if let Some(r) = archive.records().iter().find(|r| r.shots != cfg.shots) {
        return Err(ControllerError::Config(format!(
            "archive record with {} shots conflicts with configured {}",
            r.shots, cfg.shots
        )));
    }
    for (k, r) in archive.records().iter().enumerate() {
        if r.seed != truth_seed(cfg.master_seed, k) {
            return Err(ControllerError::Config(format!(
                "archive record {k} was produced under a different master seed"
            )));
        }
    }
    initial_sample(cfg, truth, archive)?;
    while archive.len() < cfg.total_evaluations() {
        step(archive, cfg, truth)?;
    }
    RunResult::from_records(cfg.clone(), archive.records().to_vec())
}
