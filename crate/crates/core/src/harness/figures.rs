//! Standard figures built from sweep records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::plot::{render_plot, PlotKind, PlotStyle, Point, Series};
use super::sweep::ExperimentRecord;
use crate::ale::Method;
use crate::error::{Error, Result};
use crate::gnn::Arch;

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    /// File stem, e.g. `rmse-m-gcn-s0.01`.
    pub name: String,
    pub series: Vec<Series>,
    pub style: PlotStyle,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// f64 keys for BTreeMap grouping
fn key(v: f64) -> u64 {
    v.to_bits()
}

/// Mean RMSE to ground truth versus m for one (arch, sparsity, method),
/// with the standard deviation across model seeds as the error bar. Each
/// model first contributes its own mean over k and repeats.
pub fn rmse_by_m(records: &[ExperimentRecord], arch: Arch, sparsity: f64, method: Method) -> Vec<Point> {
    let mut per_m: BTreeMap<usize, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in records {
        if r.arch == arch && r.sparsity == sparsity && r.method == method {
            per_m
                .entry(r.m)
                .or_default()
                .entry(r.model_seed)
                .or_default()
                .push(r.rmse_to_ground_truth);
        }
    }
    per_m
        .into_iter()
        .map(|(m, models)| {
            let means: Vec<f64> = models.values().map(|v| mean_std(v).0).collect();
            let (mean, std) = mean_std(&means);
            Point::with_err(m as f64, mean, std)
        })
        .collect()
}

fn combos(records: &[ExperimentRecord]) -> Vec<(Arch, u64)> {
    let mut out: Vec<(Arch, u64)> = records.iter().map(|r| (r.arch, key(r.sparsity))).collect();
    out.sort_by_key(|&(a, s)| (a.as_str(), s));
    out.dedup();
    out
}

/// One RMSE-versus-m figure per (arch, sparsity), an RMSE-to-aggregate
/// versus time scatter per arch, a heatmap of the approximate minus exact
/// RMSE over (k, m) per (arch, sparsity), and a depth figure when the
/// records span several depths.
pub fn sweep_figures(records: &[ExperimentRecord]) -> Result<Vec<Figure>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to plot".into()));
    }
    let mut figs = Vec::new();
    for (arch, s) in combos(records) {
        let sparsity = f64::from_bits(s);
        let series: Vec<Series> = [Method::Exact, Method::Approximate]
            .into_iter()
            .map(|m| Series::new(m.as_str(), rmse_by_m(records, arch, sparsity, m)))
            .filter(|s| !s.points.is_empty())
            .collect();
        figs.push(Figure {
            name: format!("rmse-m-{arch}-s{sparsity}"),
            series,
            style: PlotStyle {
                kind: PlotKind::Line,
                title: format!("{} RMSE to ground truth, sparsity {sparsity}", arch.as_str().to_uppercase()),
                x_label: "modified nodes m".into(),
                y_label: "RMSE".into(),
                log_x: true,
                ..PlotStyle::default()
            },
        });

        let mut cells: BTreeMap<(usize, usize), [Vec<f64>; 2]> = BTreeMap::new();
        for r in records.iter().filter(|r| r.arch == arch && key(r.sparsity) == s) {
            let slot = match r.method {
                Method::Exact => 0,
                Method::Approximate => 1,
                _ => continue,
            };
            cells.entry((r.m, r.k)).or_default()[slot].push(r.rmse_to_ground_truth);
        }
        let mut rows: BTreeMap<usize, Vec<Point>> = BTreeMap::new();
        for ((m, k), [exact, approx]) in cells {
            if !exact.is_empty() && !approx.is_empty() {
                let diff = mean_std(&approx).0 - mean_std(&exact).0;
                rows.entry(m).or_default().push(Point::new(k as f64, diff));
            }
        }
        if !rows.is_empty() {
            figs.push(Figure {
                name: format!("heatmap-{arch}-s{sparsity}"),
                series: rows.into_iter().map(|(m, p)| Series::new(format!("m={m}"), p)).collect(),
                style: PlotStyle {
                    kind: PlotKind::Heatmap,
                    title: format!("{} approximate minus exact RMSE", arch.as_str().to_uppercase()),
                    x_label: "target nodes k".into(),
                    y_label: "modified nodes m".into(),
                    ..PlotStyle::default()
                },
            });
        }
    }

    let mut archs: Vec<Arch> = records.iter().map(|r| r.arch).collect();
    archs.sort_by_key(|a| a.as_str());
    archs.dedup();
    for arch in archs {
        let series: Vec<Series> = [Method::Exact, Method::Approximate]
            .into_iter()
            .map(|m| {
                let pts = records
                    .iter()
                    .filter(|r| r.arch == arch && r.method == m)
                    .filter_map(|r| r.rmse_to_aggregate.map(|y| Point::new(r.wall_time_seconds.max(1e-9), y)))
                    .collect();
                Series::new(m.as_str(), pts)
            })
            .filter(|s| !s.points.is_empty())
            .collect();
        if !series.is_empty() {
            figs.push(Figure {
                name: format!("time-{arch}"),
                series,
                style: PlotStyle {
                    kind: PlotKind::Scatter,
                    title: format!("{} RMSE to aggregate exact vs time", arch.as_str().to_uppercase()),
                    x_label: "explanation time (s)".into(),
                    y_label: "RMSE to aggregate".into(),
                    log_x: true,
                    ..PlotStyle::default()
                },
            });
        }
    }

    let mut depths: Vec<usize> = records.iter().map(|r| r.layers).collect();
    depths.sort_unstable();
    depths.dedup();
    if depths.len() > 1 {
        let mut series = Vec::new();
        for (arch, s) in combos(records) {
            let pts: Vec<Point> = depths
                .iter()
                .filter_map(|&l| {
                    let v: Vec<f64> = records
                        .iter()
                        .filter(|r| {
                            r.arch == arch && key(r.sparsity) == s && r.layers == l && r.method == Method::Approximate
                        })
                        .filter_map(|r| r.rmse_to_aggregate)
                        .collect();
                    (!v.is_empty()).then(|| {
                        let (mean, std) = mean_std(&v);
                        Point::with_err(l as f64, mean, std)
                    })
                })
                .collect();
            if !pts.is_empty() {
                series.push(Series::new(format!("{arch} s={}", f64::from_bits(s)), pts));
            }
        }
        if !series.is_empty() {
            figs.push(Figure {
                name: "depth".into(),
                series,
                style: PlotStyle {
                    kind: PlotKind::Line,
                    title: "approximate vs aggregate exact by depth".into(),
                    x_label: "layers".into(),
                    y_label: "RMSE to aggregate".into(),
                    ..PlotStyle::default()
                },
            });
        }
    }
    Ok(figs)
}

/// Renders every figure into `dir` as `<name>.svg`.
pub fn write_figures(figs: &[Figure], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    figs.iter()
        .map(|f| {
            let path = dir.join(format!("{}.svg", f.name));
            std::fs::write(&path, render_plot(&f.series, &f.style)?)?;
            Ok(path)
        })
        .collect()
}
