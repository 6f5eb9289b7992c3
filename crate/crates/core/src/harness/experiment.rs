//! Batch execution of experiment specs.
//!
//! A spec lists cells (one hyperparameter setting each) over manifest
//! instances. Every (cell, instance, repeat) is one run with its own archive
//! at `<output>/<cell>/<instance>/run_<k>.jsonl` and summary at
//! `run_<k>.json`. Finished runs are skipped, partial archives resumed.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HarnessError, HeuristicAngleTable, Result};
use crate::controller::{self, derive_seed, Archive, InnerSolver, QaoaTruth, RunConfig, RunResult};
use crate::engine::QaoaSimulator;
use crate::instances::{Manifest, ProblemInstance};
use crate::optim::BoundBox;
use crate::surrogate::Tail;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsKind {
    /// γ ∈ [−π/2, π/2], β ∈ [−π/4, π/4].
    Maxcut,
    /// γ, β ∈ [−π/2, π/2].
    HeavyHex,
}

impl BoundsKind {
    fn for_instance(inst: &ProblemInstance) -> Self {
        match inst {
            ProblemInstance::MaxCut(_) => Self::Maxcut,
            ProblemInstance::HeavyHex(_) => Self::HeavyHex,
        }
    }

    pub fn bounds(self, p: usize) -> BoundBox {
        match self {
            Self::Maxcut => BoundBox::maxcut(p),
            Self::HeavyHex => BoundBox::heavy_hex(p),
        }
    }
}

/// Value fed into the approximation ratio when aggregating.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Best archived (finite-shot) value so far.
    #[default]
    Finite,
    /// Exact cost at the best-so-far angles.
    Exact,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregationSettings {
    #[serde(default)]
    pub metric: Metric,
    /// Shot grid spacing; defaults to one point per evaluation.
    #[serde(default)]
    pub grid_step: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub label: String,
    pub instances: Vec<String>,
    pub repeats: usize,
    pub p: usize,
    pub shots: u64,
    pub n_init: usize,
    pub n_it: usize,
    #[serde(default)]
    pub inner: InnerSolver,
    /// Seed the initial sample with the tabulated heuristic angles.
    #[serde(default)]
    pub heuristic: bool,
    /// Defaults to the instance family's box.
    #[serde(default)]
    pub bounds: Option<BoundsKind>,
    #[serde(default)]
    pub tail: Tail,
    #[serde(default)]
    pub record_timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub aggregation: AggregationSettings,
    pub cells: Vec<CellSpec>,
}

impl ExperimentSpec {
    /// Reads a `.toml` or `.json` spec. Relative paths resolve against the
    /// spec's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut spec: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text)?,
            _ => serde_json::from_str(&text)?,
        };
        let base = path.parent().unwrap_or(Path::new(""));
        spec.manifest = base.join(&spec.manifest);
        spec.output_dir = base.join(&spec.output_dir);
        Ok(spec)
    }

    pub fn validate(&self, manifest: &Manifest) -> Result<()> {
        let mut labels = std::collections::HashSet::new();
        for cell in &self.cells {
            let fail = |m: String| Err(HarnessError::Spec(format!("cell {}: {m}", cell.label)));
            if !labels.insert(&cell.label) {
                return fail("duplicate label".into());
            }
            if cell.label.is_empty() || cell.label.contains(['/', '\\']) {
                return fail("label must be a nonempty path component".into());
            }
            if cell.repeats == 0 {
                return fail("repeats must be at least 1".into());
            }
            if cell.instances.is_empty() {
                return fail("no instances".into());
            }
            if cell.heuristic && HeuristicAngleTable::get(cell.p).is_none() {
                return fail(format!("no heuristic angles for p = {}", cell.p));
            }
            for id in &cell.instances {
                manifest.entry(id)?;
            }
        }
        Ok(())
    }

    pub fn cell(&self, label: &str) -> Result<&CellSpec> {
        self.cells
            .iter()
            .find(|c| c.label == label)
            .ok_or_else(|| HarnessError::Spec(format!("no cell named {label}")))
    }

    pub fn run_dir(&self, cell: &str, instance: &str) -> PathBuf {
        self.output_dir.join(cell).join(instance)
    }
}

/// FNV-1a, used to turn instance ids into stable seed streams.
fn stable_hash(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Master seed of one run. It depends on the instance and repeat but not the
/// cell, so cells sharing an instance and `n_init` start from the same
/// initial sample.
pub fn run_seed(master: u64, instance: &str, repeat: usize) -> u64 {
    derive_seed(master, stable_hash(instance), repeat as u64)
}

#[derive(Clone, Debug)]
pub struct RunJob {
    pub cell: String,
    pub instance: String,
    pub repeat: usize,
    pub config: RunConfig,
    pub archive_path: PathBuf,
    pub summary_path: PathBuf,
}

pub fn plan(spec: &ExperimentSpec, manifest: &Manifest) -> Result<Vec<RunJob>> {
    spec.validate(manifest)?;
    let mut jobs = Vec::new();
    for cell in &spec.cells {
        let heuristic: Vec<_> = if cell.heuristic {
            HeuristicAngleTable::get(cell.p).into_iter().collect()
        } else {
            Vec::new()
        };
        for id in &cell.instances {
            let bounds = match cell.bounds {
                Some(kind) => kind.bounds(cell.p),
                None => BoundsKind::for_instance(&manifest.load_instance(id)?).bounds(cell.p),
            };
            let dir = spec.run_dir(&cell.label, id);
            for k in 0..cell.repeats {
                let config = RunConfig {
                    instance_id: id.clone(),
                    p: cell.p,
                    bounds: bounds.clone(),
                    n_init: cell.n_init,
                    n_it: cell.n_it,
                    shots: cell.shots,
                    heuristic_angles: heuristic.clone(),
                    inner: cell.inner.clone(),
                    tail: cell.tail,
                    master_seed: run_seed(spec.master_seed, id, k),
                    record_timing: cell.record_timing,
                };
                config.validate()?;
                jobs.push(RunJob {
                    cell: cell.label.clone(),
                    instance: id.clone(),
                    repeat: k,
                    config,
                    archive_path: dir.join(format!("run_{k}.jsonl")),
                    summary_path: dir.join(format!("run_{k}.json")),
                });
            }
        }
    }
    Ok(jobs)
}

/// Reads a finished run: summary JSON plus its archive.
pub fn load_run(summary_path: &Path, archive_path: &Path) -> Result<RunResult> {
    let mut result: RunResult = serde_json::from_str(&fs::read_to_string(summary_path)?)?;
    result.archive = Archive::load(archive_path)?;
    Ok(result)
}

fn execute_job(job: &RunJob, sim: &Arc<QaoaSimulator>) -> Result<RunResult> {
    if job.summary_path.exists() {
        let done = load_run(&job.summary_path, &job.archive_path)?;
        if done.config != job.config {
            return Err(HarnessError::PartialRunConflict {
                path: job.summary_path.display().to_string(),
                reason: "finished run was produced by a different configuration".into(),
            });
        }
        return Ok(done);
    }
    fs::create_dir_all(job.archive_path.parent().expect("run files live in a directory"))?;
    let mut archive = Archive::open(&job.archive_path)?;
    let resumed = archive.len();
    let truth = QaoaTruth::new(Arc::clone(sim), job.config.shots);
    let result = controller::run(&job.config, &truth, &mut archive).map_err(|e| match e {
        controller::ControllerError::Config(reason) if resumed > 0 => HarnessError::PartialRunConflict {
            path: job.archive_path.display().to_string(),
            reason,
        },
        other => other.into(),
    })?;
    let tmp = job.summary_path.with_extension("json.tmp");
    fs::write(&tmp, result.to_json())?;
    fs::rename(&tmp, &job.summary_path)?;
    Ok(result)
}

pub struct JobOutcome {
    pub job: RunJob,
    pub result: Result<RunResult>,
}

/// Runs every job of the spec on a pool of `spec.workers` threads. Failures
/// are collected per job, never short-circuiting the others.
pub fn execute(spec: &ExperimentSpec) -> Result<Vec<JobOutcome>> {
    let manifest = Manifest::load(&spec.manifest)?;
    let jobs = plan(spec, &manifest)?;
    let mut sims: HashMap<String, Arc<QaoaSimulator>> = HashMap::new();
    for job in &jobs {
        if !sims.contains_key(&job.instance) {
            let inst = manifest.load_instance(&job.instance)?;
            sims.insert(job.instance.clone(), Arc::new(QaoaSimulator::new(&inst)?));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| HarnessError::Spec(format!("thread pool: {e}")))?;
    let outcomes = pool.install(|| {
        jobs.into_par_iter()
            .map(|job| {
                let result = execute_job(&job, &sims[&job.instance]);
                if let Err(e) = &result {
                    log::error!("{} / {} / run {}: {e}", job.cell, job.instance, job.repeat);
                }
                JobOutcome { job, result }
            })
            .collect()
    });
    Ok(outcomes)
}

/// Summaries of a cell's finished runs, in (instance, repeat) order.
pub fn load_cell(spec: &ExperimentSpec, cell: &CellSpec) -> Result<Vec<RunResult>> {
    let mut out = Vec::new();
    for id in &cell.instances {
        let dir = spec.run_dir(&cell.label, id);
        for k in 0..cell.repeats {
            out.push(load_run(
                &dir.join(format!("run_{k}.json")),
                &dir.join(format!("run_{k}.jsonl")),
            )?);
        }
    }
    Ok(out)
}
