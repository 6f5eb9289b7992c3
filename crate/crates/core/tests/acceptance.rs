//! Acceptance suite. Every test prints one `[PASS]`/`[FAIL]` line and then
//! asserts. Full-scale batch variants are `#[ignore]`d; run them with
//! `cargo test --test acceptance -- --ignored --nocapture`.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use qaoa_surrogate::controller::{Archive, InnerSolver};
use qaoa_surrogate::engine::{pi_shift_invariance_check, AngleVector, QaoaSimulator};
use qaoa_surrogate::harness::experiment::{execute, load_cell, AggregationSettings, CellSpec, ExperimentSpec, Metric};
use qaoa_surrogate::harness::report::cell_curve;
use qaoa_surrogate::harness::HeuristicAngleTable;
use qaoa_surrogate::instances::{
    generate_3regular_maxcut, generate_heavy_hex, generate_heavy_hex_instance, HeavyHexInstance, Manifest,
    ProblemInstance,
};
use qaoa_surrogate::surrogate::{dedupe, RbfSurrogate, Tail};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, name: &str, ok: bool, detail: String) {
    println!("[{}] criterion {id} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn check(id: &str, name: &str, ok: bool, detail: String) {
    report(id, name, ok, detail.clone());
    assert!(ok, "criterion {id} {name}: {detail}");
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < limit, format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

#[test]
fn criterion_1_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut amp, mut cost) = (0f64, 0f64);
    for draw in 0..100 {
        let n = rng.gen_range(2..=4);
        let p = rng.gen_range(1..=3);
        let inst = if draw % 2 == 0 {
            common::random_maxcut(n, &mut rng)
        } else {
            common::random_heavy_hex(n, &mut rng)
        };
        let angles = common::random_angles(p, &mut rng);
        let sim = QaoaSimulator::new(&inst).unwrap();
        let state = sim.prepare_state(&angles).unwrap();
        let want = common::oracle_state(&inst, &angles);
        for (a, b) in state.amplitudes.iter().zip(&want) {
            amp = amp.max((a - b).norm());
        }
        cost = cost.max((sim.exact_cost(&angles).unwrap() - common::oracle_cost(&inst, &angles)).abs());
    }
    let (fast, t) = within(start, Duration::from_secs(10));
    check(
        "1",
        "oracle equivalence",
        amp <= 1e-12 && cost <= 1e-12 && fast,
        format!("100 draws, max amplitude error {amp:.2e}, max cost error {cost:.2e}, {t}"),
    );
}

#[test]
fn criterion_2_exact_interpolation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_center, mut worst_affine) = (0f64, 0f64);
    for set in 0..50 {
        let p = 2 + set % 2;
        let d = 2 * p;
        let m = rng.gen_range(20..=200);
        let pts: Vec<(Vec<f64>, f64)> = (0..m)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-PI / 2.0..PI / 2.0)).collect();
                let y = x.iter().enumerate().map(|(k, v)| ((k + 1) as f64 * v).cos()).sum::<f64>() + rng.gen_range(-1.0..1.0);
                (x, y)
            })
            .collect();
        let train = dedupe(&pts);
        let s = RbfSurrogate::fit(&train, Tail::Affine).unwrap();
        for (x, &y) in train.points().iter().zip(train.targets()) {
            worst_center = worst_center.max((s.evaluate(x).unwrap() - y).abs() / y.abs().max(1.0));
        }

        let coef: Vec<f64> = (0..=d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let f = |x: &[f64]| coef[0] + x.iter().zip(&coef[1..]).map(|(a, b)| a * b).sum::<f64>();
        let aff: Vec<(Vec<f64>, f64)> = pts.iter().map(|(x, _)| (x.clone(), f(x))).collect();
        let s = RbfSurrogate::fit(&dedupe(&aff), Tail::Affine).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-PI..PI)).collect();
            worst_affine = worst_affine.max((s.evaluate(&x).unwrap() - f(&x)).abs() / f(&x).abs().max(1.0));
        }
    }
    let (fast, t) = within(start, Duration::from_secs(30));
    check(
        "2",
        "exact interpolation",
        worst_center <= 1e-8 && worst_affine <= 1e-8 && fast,
        format!("50 sets, worst center residual {worst_center:.2e}, worst affine probe error {worst_affine:.2e}, {t}"),
    );
}

#[test]
fn criterion_3_estimator_consistency() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_z = 0f64;
    for seed in [11u64, 12, 13] {
        let inst: ProblemInstance = generate_3regular_maxcut(8, seed).unwrap().into();
        let sim = QaoaSimulator::new(&inst).unwrap();
        let angles = common::random_angles(2, &mut rng);
        let exact = sim.exact_cost(&angles).unwrap();
        let est: Vec<f64> = (0..200u64)
            .map(|k| sim.sampled_cost(&angles, 200, seed << 16 | k).unwrap().value)
            .collect();
        let mean = est.iter().sum::<f64>() / 200.0;
        let var = est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 199.0;
        let se = (var / 200.0).sqrt();
        worst_z = worst_z.max((mean - exact).abs() / se);
    }
    let (fast, t) = within(start, Duration::from_secs(60));
    check(
        "3",
        "estimator consistency",
        worst_z <= 4.0 && fast,
        format!("3 instances, worst |mean - exact| = {worst_z:.2} standard errors, {t}"),
    );
}

fn heavy_hex_patches() -> Vec<HeavyHexInstance> {
    (1..=5u64)
        .map(|s| generate_heavy_hex_instance(generate_heavy_hex(1, 1).unwrap(), s).unwrap())
        .collect()
}

#[test]
fn criterion_4_pi_shift_invariance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0f64;
    for inst in heavy_hex_patches() {
        assert!(inst.graph().n() <= 16);
        let angles = common::random_angles(3, &mut rng);
        for k in 0..6 {
            worst = worst.max(pi_shift_invariance_check(&inst, &angles, k).unwrap());
            let mut flat = angles.to_flat();
            flat[k] -= PI;
            let minus = AngleVector::from_flat(&flat).unwrap();
            worst = worst.max(pi_shift_invariance_check(&inst, &minus, k).unwrap());
        }
    }
    let (fast, t) = within(start, Duration::from_secs(60));
    check(
        "4",
        "pi-shift invariance",
        worst <= 1e-10 && fast,
        format!("5 patches x 6 components x 2 signs, worst difference {worst:.2e}, {t}"),
    );
}

fn maxcut_manifest(dir: &Path, count: u64) -> Vec<String> {
    let mut m = Manifest::new(dir);
    let ids: Vec<String> = (1..=count)
        .map(|s| {
            let id = format!("maxcut-n16-s{s}");
            let inst: ProblemInstance = generate_3regular_maxcut(16, s).unwrap().into();
            m.add(&id, &inst, s).unwrap();
            id
        })
        .collect();
    m.save(&dir.join("manifest.json")).unwrap();
    ids
}

fn cell(label: &str, ids: &[String], repeats: usize, p: usize, shots: u64, n_init: usize, n_it: usize) -> CellSpec {
    CellSpec {
        label: label.into(),
        instances: ids.to_vec(),
        repeats,
        p,
        shots,
        n_init,
        n_it,
        inner: InnerSolver::default(),
        heuristic: false,
        bounds: None,
        tail: Tail::Affine,
        record_timing: false,
    }
}

fn spec(dir: &Path, cells: Vec<CellSpec>) -> ExperimentSpec {
    ExperimentSpec {
        manifest: dir.join("manifest.json"),
        output_dir: dir.join("out"),
        master_seed: 20240501,
        workers: 0,
        aggregation: AggregationSettings::default(),
        cells,
    }
}

fn run_all(spec: &ExperimentSpec) {
    for o in execute(spec).unwrap() {
        if let Err(e) = o.result {
            panic!("{} / {} / {}: {e}", o.job.cell, o.job.instance, o.job.repeat);
        }
    }
}

/// Mean r of a cell at `shots` (last grid point at or below it).
fn mean_r_at(spec: &ExperimentSpec, label: &str, shots: f64, metric: Metric) -> (f64, f64) {
    let mut s = spec.clone();
    s.aggregation.metric = metric;
    let manifest = Manifest::load(&s.manifest).unwrap();
    let curve = cell_curve(&s, &manifest, s.cell(label).unwrap()).unwrap();
    let k = curve.grid.partition_point(|&x| x <= shots) - 1;
    (curve.mean[k], curve.half_width[k])
}

/// Surrogate runs stop at `surrogate_evals`; r at 10^5 shots only depends on
/// the first 500 evaluations, so 500 gives the same value as 1000.
fn fig2_analog(instances: u64, repeats: usize, surrogate_evals: usize, limit: Option<Duration>) {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let ids = maxcut_manifest(dir.path(), instances);
    let spec = spec(
        dir.path(),
        vec![
            cell("surrogate", &ids, repeats, 2, 200, 50, surrogate_evals - 50),
            cell("random", &ids, repeats, 2, 200, 1000, 0),
        ],
    );
    run_all(&spec);
    let (r_s, h_s) = mean_r_at(&spec, "surrogate", 1e5, Metric::Finite);
    let (r_r, h_r) = mean_r_at(&spec, "random", 2e5, Metric::Finite);
    let (x_s, _) = mean_r_at(&spec, "surrogate", 1e5, Metric::Exact);
    let (x_r, _) = mean_r_at(&spec, "random", 2e5, Metric::Exact);
    let a = r_s - r_r >= 0.03;
    let b = (0.75..=0.95).contains(&r_s);
    let (fast, t) = match limit {
        Some(l) => within(start, l),
        None => (true, format!("{:.0}s", start.elapsed().as_secs_f64())),
    };
    let tag = format!("{instances} instances x {repeats} runs");
    report(
        "5a",
        "surrogate beats random search by 0.03",
        a,
        format!("{tag}: r = {r_s:.4} ± {h_s:.4} at 1e5 shots vs random {r_r:.4} ± {h_r:.4} after 1000 evaluations (exact re-evaluation: {x_s:.4} vs {x_r:.4})"),
    );
    report("5b", "r at 1e5 shots in [0.75, 0.95]", b, format!("{tag}: r = {r_s:.4}"));
    report("5", "runtime", fast, t.clone());
    assert!(a && b && fast, "criterion 5 ({tag}): r {r_s} vs {r_r}, {t}");
}

#[test]
fn criterion_5_fig2_analog_smoke() {
    fig2_analog(2, 5, 500, Some(Duration::from_secs(30 * 60)));
}

#[test]
#[ignore = "hours-scale batch"]
fn criterion_5_fig2_analog_full() {
    fig2_analog(5, 20, 1000, None);
}

fn fig3_analog(instances: u64, repeats: usize) {
    let dir = tempfile::tempdir().unwrap();
    let ids = maxcut_manifest(dir.path(), instances);
    // 2e6 shots at 5000 per evaluation is 400 evaluations.
    let spec = spec(
        dir.path(),
        vec![
            cell("p2", &ids, repeats, 2, 5000, 50, 350),
            cell("p6", &ids, repeats, 6, 5000, 50, 350),
        ],
    );
    run_all(&spec);
    let (r2, h2) = mean_r_at(&spec, "p2", 2e6, Metric::Finite);
    let (r6, h6) = mean_r_at(&spec, "p6", 2e6, Metric::Finite);
    let ok = r6 >= r2 - 0.01;
    check(
        "6",
        "deeper circuits do not lose",
        ok,
        format!("{instances} instances x {repeats} runs at 2e6 shots: p=6 r = {r6:.4} ± {h6:.4}, p=2 r = {r2:.4} ± {h2:.4}"),
    );
}

#[test]
fn criterion_6_fig3_analog_reduced() {
    fig3_analog(2, 3);
}

#[test]
#[ignore = "hours-scale batch"]
fn criterion_6_fig3_analog_full() {
    fig3_analog(5, 20);
}

#[test]
fn criterion_7_heavy_hex_beats_heuristic_angles() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::new(dir.path());
    let ids: Vec<String> = heavy_hex_patches()
        .into_iter()
        .enumerate()
        .map(|(k, inst)| {
            let id = format!("heavyhex-1x1-s{}", k + 1);
            m.add(&id, &inst.into(), k as u64 + 1).unwrap();
            id
        })
        .collect();
    m.save(&dir.path().join("manifest.json")).unwrap();
    let mut c = cell("hh", &ids, 8, 3, 1000, 20, 80);
    c.heuristic = true;
    let spec = spec(dir.path(), vec![c]);
    run_all(&spec);

    let heur = HeuristicAngleTable::get(3).unwrap();
    let runs = load_cell(&spec, spec.cell("hh").unwrap()).unwrap();
    let mut improved = 0;
    let mut lines = Vec::new();
    for id in &ids {
        let sim = QaoaSimulator::new(&m.load_instance(id).unwrap()).unwrap();
        let base = sim.exact_cost(&heur).unwrap();
        let mine: Vec<&_> = runs.iter().filter(|r| &r.config.instance_id == id).collect();
        assert_eq!(mine.len(), 8);
        for r in &mine {
            assert_eq!(r.total_shots, 100_000);
            assert_eq!(r.archive[0].theta, heur);
        }
        let mean = mine.iter().map(|r| sim.exact_cost(&r.theta_opt).unwrap()).sum::<f64>() / 8.0;
        if mean < base {
            improved += 1;
        }
        lines.push(format!("{id}: {mean:.3} vs {base:.3}"));
    }
    check(
        "7",
        "heavy-hex improves on heuristic angles",
        improved >= 4,
        format!("{improved}/5 instances improved (mean exact C at theta_opt vs theta_heur: {})", lines.join("; ")),
    );
}

#[test]
fn criterion_8_budget_exactness() {
    let dir = tempfile::tempdir().unwrap();
    let ids = maxcut_manifest(dir.path(), 2);
    let mut small = cell("budget", &ids, 3, 1, 200, 10, 15);
    small.inner = InnerSolver::Multistart { n_starts: 4, simplex: Default::default() };
    let spec = spec(dir.path(), vec![small, cell("budget-de", &ids, 2, 2, 50, 8, 12)]);
    run_all(&spec);
    let mut checked = 0;
    let mut ok = true;
    for c in &spec.cells {
        for r in load_cell(&spec, c).unwrap() {
            ok &= r.archive.len() == c.n_init + c.n_it;
            let mut cum = 0u64;
            for (k, rec) in r.archive.iter().enumerate() {
                cum += rec.shots;
                ok &= cum == r.learning_curve[k].cumulative_shots;
                if rec.iteration >= 1 {
                    ok &= cum == c.shots * (c.n_init as u64 + rec.iteration as u64);
                }
            }
            ok &= r.total_shots == c.shots * (c.n_init + c.n_it) as u64;
            checked += 1;
        }
        for id in &c.instances {
            for k in 0..c.repeats {
                let path = spec.run_dir(&c.label, id).join(format!("run_{k}.jsonl"));
                let reloaded = Archive::load(&path).unwrap();
                ok &= reloaded.len() == c.n_init + c.n_it;
            }
        }
    }
    check("8", "budget exactness", ok, format!("{checked} runs: cumulative shots = N_s (N_init + i) at every iteration"));
}

#[test]
fn criterion_9_determinism() {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let ids = maxcut_manifest(dir.path(), 1);
        let spec = spec(dir.path(), vec![cell("det", &ids, 2, 2, 200, 10, 10)]);
        run_all(&spec);
        let mut files = Vec::new();
        for k in 0..2 {
            let d = spec.run_dir("det", &ids[0]);
            files.push(fs::read(d.join(format!("run_{k}.json"))).unwrap());
            files.push(fs::read(d.join(format!("run_{k}.jsonl"))).unwrap());
        }
        outputs.push(files);
    }
    check(
        "9",
        "determinism",
        outputs[0] == outputs[1],
        "two runs of the same spec and master seed produce byte-identical summaries and archives".into(),
    );
}
