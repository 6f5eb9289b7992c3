//! Approximation-ratio curves, CSV tables and SVG plots per experiment cell.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use plotters::prelude::*;

use super::experiment::{load_cell, CellSpec, ExperimentSpec, Metric};
use super::{aggregate, approximation_ratio, reevaluate_exact, AggregateCurve, HarnessError, Result};
use crate::controller::RunResult;
use crate::instances::{brute_force_extrema, Manifest, ProblemInstance, SpectrumExtrema};

pub const CSV_HEADER: &str = "shots,mean_r,half_width";

/// `(x, r)` curve of one run. `x` is cumulative shots, or evaluation count
/// for exact-mode runs.
pub fn ratio_curve(
    result: &RunResult,
    extrema: &SpectrumExtrema,
    metric: Metric,
    instance: Option<&ProblemInstance>,
) -> Result<Vec<(f64, f64)>> {
    let x_of = |evals: usize, shots: u64| if result.config.shots == 0 { evals as f64 } else { shots as f64 };
    match metric {
        Metric::Finite => result
            .learning_curve
            .iter()
            .map(|pt| Ok((x_of(pt.evaluations, pt.cumulative_shots), approximation_ratio(pt.best_value, extrema)?)))
            .collect(),
        Metric::Exact => {
            let inst = instance.ok_or_else(|| HarnessError::Spec("exact metric needs the instance".into()))?;
            reevaluate_exact(result, inst)?
                .into_iter()
                .map(|pt| Ok((x_of(pt.evaluations, pt.cumulative_shots), approximation_ratio(pt.exact, extrema)?)))
                .collect()
        }
    }
}

/// Grid with one point per `step` shots, or the union of all curve abscissae.
pub fn shot_grid(curves: &[Vec<(f64, f64)>], step: Option<u64>) -> Vec<f64> {
    let max = curves
        .iter()
        .filter_map(|c| c.last().map(|p| p.0))
        .fold(0.0, f64::max);
    match step {
        Some(s) if s > 0 => (1..).map(|k| (k * s) as f64).take_while(|&x| x <= max).collect(),
        _ => {
            let mut xs: Vec<f64> = curves.iter().flatten().map(|p| p.0).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            xs
        }
    }
}

/// Aggregated approximation-ratio curve of one cell.
pub fn cell_curve(spec: &ExperimentSpec, manifest: &Manifest, cell: &CellSpec) -> Result<AggregateCurve> {
    let runs = load_cell(spec, cell)?;
    let mut cache: HashMap<String, (ProblemInstance, SpectrumExtrema)> = HashMap::new();
    let mut curves = Vec::with_capacity(runs.len());
    for run in &runs {
        let id = &run.config.instance_id;
        if !cache.contains_key(id) {
            let inst = manifest.load_instance(id)?;
            let ext = brute_force_extrema(&inst)?;
            cache.insert(id.clone(), (inst, ext));
        }
        let (inst, ext) = &cache[id];
        curves.push(ratio_curve(run, ext, spec.aggregation.metric, Some(inst))?);
    }
    let grid = shot_grid(&curves, spec.aggregation.grid_step);
    aggregate(&curves, &grid)
}

pub fn to_csv(curve: &AggregateCurve) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for k in 0..curve.grid.len() {
        s += &format!("{},{},{}\n", curve.grid[k], curve.mean[k], curve.half_width[k]);
    }
    s
}

/// Parses a table written by [`to_csv`]; values round-trip exactly.
pub fn from_csv(text: &str) -> Result<Vec<[f64; 3]>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(HarnessError::Spec("unexpected CSV header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v: Vec<f64> = l
                .split(',')
                .map(|f| f.parse::<f64>().map_err(|e| HarnessError::Spec(format!("CSV field {f:?}: {e}"))))
                .collect::<Result<_>>()?;
            <[f64; 3]>::try_from(v).map_err(|_| HarnessError::Spec(format!("CSV row {l:?}")))
        })
        .collect()
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

/// Mean r against shots with `±half_width` bands, one series per curve.
pub fn plot_curves(path: &Path, title: &str, curves: &[(String, AggregateCurve)]) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| HarnessError::Plot(e.to_string());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, 0f64, f64::INFINITY, f64::NEG_INFINITY);
    for (_, c) in curves {
        for k in 0..c.grid.len() {
            x0 = x0.min(c.grid[k]);
            x1 = x1.max(c.grid[k]);
            y0 = y0.min(c.mean[k] - c.half_width[k]);
            y1 = y1.max(c.mean[k] + c.half_width[k]);
        }
    }
    if !x0.is_finite() {
        return Err(HarnessError::EmptyGrid);
    }
    x0 = x0.max(1.0);
    if x1 <= x0 {
        x1 = x0 * 10.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-3);

    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(44)
        .y_label_area_size(60)
        .build_cartesian_2d((x0..x1).log_scale(), (y0 - pad)..(y1 + pad))
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("cumulative shots")
        .y_desc("approximation ratio r")
        .draw()
        .map_err(|e| plot_err(&e))?;
    for (k, (label, c)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts = |sign: f64| -> Vec<(f64, f64)> {
            (0..c.grid.len())
                .filter(|&i| c.grid[i] >= x0)
                .map(|i| (c.grid[i], c.mean[i] + sign * c.half_width[i]))
                .collect()
        };
        chart
            .draw_series(LineSeries::new(pts(0.0), color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        for sign in [-1.0, 1.0] {
            chart
                .draw_series(LineSeries::new(pts(sign), color.mix(0.35)))
                .map_err(|e| plot_err(&e))?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

/// Final mean r of a cell.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CellSummary {
    pub label: String,
    pub runs: usize,
    pub final_shots: f64,
    pub final_mean_r: f64,
    pub final_half_width: f64,
}

/// Writes `<output>/report/<cell>.csv`, `<cell>.svg`, `all.svg` and
/// `summary.json`.
pub fn write_report(spec: &ExperimentSpec) -> Result<Vec<CellSummary>> {
    let manifest = Manifest::load(&spec.manifest)?;
    let dir = spec.output_dir.join("report");
    fs::create_dir_all(&dir)?;
    let mut all = Vec::new();
    let mut summaries = Vec::new();
    for cell in &spec.cells {
        let curve = cell_curve(spec, &manifest, cell)?;
        fs::write(dir.join(format!("{}.csv", cell.label)), to_csv(&curve))?;
        let series = vec![(cell.label.clone(), curve.clone())];
        plot_curves(&dir.join(format!("{}.svg", cell.label)), &cell.label, &series)?;
        let last = curve.grid.len() - 1;
        summaries.push(CellSummary {
            label: cell.label.clone(),
            runs: curve.runs,
            final_shots: curve.grid[last],
            final_mean_r: curve.mean[last],
            final_half_width: curve.half_width[last],
        });
        all.extend(series);
    }
    plot_curves(&dir.join("all.svg"), "approximation ratio vs shots", &all)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summaries)? + "\n")?;
    Ok(summaries)
}
