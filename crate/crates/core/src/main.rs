use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use qaoa_surrogate::harness::experiment::{self, ExperimentSpec, Metric};
use qaoa_surrogate::harness::{report, transfer_eval, HeuristicAngleTable};
use qaoa_surrogate::instances::{
    generate_3regular_maxcut, generate_heavy_hex, generate_heavy_hex_instance, Manifest, ProblemInstance,
};

#[derive(Parser)]
#[command(name = "qsurr", version, about = "Surrogate-based QAOA angle optimization")]
struct Cli {
    /// Overrides the master seed of the spec (or the base seed of `gen`).
    #[arg(long, global = true)]
    master_seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded instances into a manifest.
    Gen {
        /// 3-regular weighted Max-Cut, e.g. `n=16 count=5`.
        #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
        maxcut: Option<Vec<String>>,
        /// Heavy-hex Ising patches, e.g. `rows=1 cols=1 count=5`.
        #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
        heavy_hex: Option<Vec<String>>,
        /// Seed of the first instance; instance k uses seed + k.
        #[arg(long)]
        seed: Option<u64>,
        /// Manifest file, created or extended.
        #[arg(long, default_value = "manifest.json")]
        manifest: PathBuf,
    },
    /// Execute every run of an experiment spec (TOML or JSON). Resumable.
    Run {
        spec: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write the aggregated CSV of each cell to stdout.
    Aggregate {
        spec: PathBuf,
        #[arg(long)]
        metric: Option<String>,
    },
    /// Write exact re-evaluation curves next to each finished run.
    Reeval { spec: PathBuf },
    /// Evaluate the best angles of a finished run on other instances.
    Transfer {
        /// Run summary (`run_k.json`), or `heuristic:<p>` for tabulated angles.
        #[arg(long)]
        angles: String,
        #[arg(long)]
        manifest: PathBuf,
        /// Instance ids; defaults to every manifest entry.
        #[arg(long, num_args = 1..)]
        instances: Option<Vec<String>>,
        #[arg(long, default_value_t = 1000)]
        shots: u64,
        #[arg(long, default_value_t = 8)]
        seeds: u64,
    },
    /// CSV tables and SVG plots under `<output>/report/`.
    Report { spec: PathBuf },
}

fn parse_kv(args: &[String]) -> Result<BTreeMap<String, usize>> {
    args.iter()
        .map(|a| {
            let (k, v) = a.split_once('=').ok_or_else(|| anyhow!("expected KEY=VALUE, got {a:?}"))?;
            Ok((k.to_string(), v.parse().with_context(|| format!("value of {k}"))?))
        })
        .collect()
}

fn take(kv: &BTreeMap<String, usize>, key: &str, default: Option<usize>) -> Result<usize> {
    kv.get(key).copied().or(default).ok_or_else(|| anyhow!("missing {key}="))
}

fn gen(
    maxcut: Option<Vec<String>>,
    heavy_hex: Option<Vec<String>>,
    seed: u64,
    manifest_path: &Path,
) -> Result<()> {
    let mut manifest = if manifest_path.exists() {
        Manifest::load(manifest_path)?
    } else {
        Manifest::new(manifest_path.parent().unwrap_or(Path::new("")))
    };
    if maxcut.is_none() && heavy_hex.is_none() {
        bail!("nothing to generate; pass --maxcut or --heavy-hex");
    }
    if let Some(args) = maxcut {
        let kv = parse_kv(&args)?;
        let (n, count) = (take(&kv, "n", None)?, take(&kv, "count", Some(1))?);
        for k in 0..count as u64 {
            let s = seed + k;
            let inst: ProblemInstance = generate_3regular_maxcut(n, s)?.into();
            manifest.add(&format!("maxcut-n{n}-s{s}"), &inst, s)?;
        }
    }
    if let Some(args) = heavy_hex {
        let kv = parse_kv(&args)?;
        let (rows, cols) = (take(&kv, "rows", Some(1))?, take(&kv, "cols", Some(1))?);
        let count = take(&kv, "count", Some(1))?;
        let graph = generate_heavy_hex(rows, cols)?;
        for k in 0..count as u64 {
            let s = seed + k;
            let inst: ProblemInstance = generate_heavy_hex_instance(graph.clone(), s)?.into();
            manifest.add(&format!("heavyhex-{rows}x{cols}-s{s}"), &inst, s)?;
        }
    }
    manifest.save(manifest_path)?;
    println!("{} instances in {}", manifest.instances.len(), manifest_path.display());
    Ok(())
}

fn load_spec(path: &Path, master_seed: Option<u64>) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(s) = master_seed {
        spec.master_seed = s;
    }
    Ok(spec)
}

fn run(spec: &ExperimentSpec) -> Result<()> {
    let outcomes = experiment::execute(spec)?;
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    for o in &outcomes {
        match &o.result {
            Ok(r) => println!("{}\t{}\trun {}\tC_opt = {}", o.job.cell, o.job.instance, o.job.repeat, r.c_opt),
            Err(e) => eprintln!("{}\t{}\trun {}\tFAILED: {e}", o.job.cell, o.job.instance, o.job.repeat),
        }
    }
    if failed > 0 {
        bail!("{failed} of {} runs failed", outcomes.len());
    }
    Ok(())
}

fn reeval(spec: &ExperimentSpec) -> Result<()> {
    let manifest = Manifest::load(&spec.manifest)?;
    for cell in &spec.cells {
        for id in &cell.instances {
            let inst = manifest.load_instance(id)?;
            let dir = spec.run_dir(&cell.label, id);
            for k in 0..cell.repeats {
                let result = experiment::load_run(&dir.join(format!("run_{k}.json")), &dir.join(format!("run_{k}.jsonl")))?;
                let curve = qaoa_surrogate::harness::reevaluate_exact(&result, &inst)?;
                let out = dir.join(format!("run_{k}.exact.json"));
                fs::write(&out, serde_json::to_string_pretty(&curve)? + "\n")?;
                let last = curve.last().expect("runs are nonempty");
                println!("{}\t{id}\trun {k}\tfinite {}\texact {}", cell.label, last.finite_best, last.exact);
            }
        }
    }
    Ok(())
}

fn transfer(angles: &str, manifest: &Path, ids: Option<Vec<String>>, shots: u64, seeds: u64, master: u64) -> Result<()> {
    let angles = match angles.strip_prefix("heuristic:") {
        Some(p) => HeuristicAngleTable::get(p.parse()?).ok_or_else(|| anyhow!("no heuristic angles for p = {p}"))?,
        None => {
            let text = fs::read_to_string(angles).with_context(|| format!("reading {angles}"))?;
            serde_json::from_str::<qaoa_surrogate::controller::RunResult>(&text)?.theta_opt
        }
    };
    let manifest = Manifest::load(manifest)?;
    let ids = ids.unwrap_or_else(|| manifest.instances.iter().map(|e| e.id.clone()).collect());
    let instances = ids
        .iter()
        .map(|id| Ok((id.clone(), manifest.load_instance(id)?)))
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..seeds).map(|k| master.wrapping_add(k)).collect();
    println!("instance,exact,sampled_mean,heuristic_exact,margin");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in transfer_eval(&angles, &instances, shots, &seeds)? {
        println!(
            "{},{},{},{},{}",
            row.instance_id,
            row.exact,
            row.sampled_mean,
            opt(row.heuristic_exact),
            opt(row.margin)
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            maxcut,
            heavy_hex,
            seed,
            manifest,
        } => gen(maxcut, heavy_hex, seed.or(cli.master_seed).unwrap_or(1), &manifest),
        Command::Run { spec, workers } => load_spec(&spec, cli.master_seed).and_then(|mut s| {
            if let Some(w) = workers {
                s.workers = w;
            }
            run(&s)
        }),
        Command::Aggregate { spec, metric } => load_spec(&spec, cli.master_seed).and_then(|mut s| {
            if let Some(m) = metric {
                s.aggregation.metric = match m.as_str() {
                    "finite" => Metric::Finite,
                    "exact" => Metric::Exact,
                    other => bail!("unknown metric {other:?}"),
                };
            }
            let manifest = Manifest::load(&s.manifest)?;
            for cell in &s.cells {
                println!("# {}", cell.label);
                print!("{}", report::to_csv(&report::cell_curve(&s, &manifest, cell)?));
            }
            Ok(())
        }),
        Command::Reeval { spec } => load_spec(&spec, cli.master_seed).and_then(|s| reeval(&s)),
        Command::Transfer {
            angles,
            manifest,
            instances,
            shots,
            seeds,
        } => transfer(&angles, &manifest, instances, shots, seeds, cli.master_seed.unwrap_or(0)),
        Command::Report { spec } => load_spec(&spec, cli.master_seed).and_then(|s| {
            for c in report::write_report(&s)? {
                println!("{}\truns {}\tshots {}\tmean r {} ± {}", c.label, c.runs, c.final_shots, c.final_mean_r, c.final_half_width);
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
