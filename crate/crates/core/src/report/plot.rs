//! Figure data: one `t_hours,value` CSV and one SVG line chart per family.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::{load_run, AgingReport, AnalysisOptions};
use crate::error::{Error, Result};
use crate::metrics::{MetricKind, TimeSeries, SECONDS_PER_HOUR};
use crate::series_io::write_series_hours;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureFamily {
    Memory,
    ResponseTime,
    Throughput,
}

impl FigureFamily {
    pub const ALL: [FigureFamily; 3] = [FigureFamily::Memory, FigureFamily::ResponseTime, FigureFamily::Throughput];

    pub fn stem(self) -> &'static str {
        match self {
            FigureFamily::Memory => "fig_memory",
            FigureFamily::ResponseTime => "fig_response_time",
            FigureFamily::Throughput => "fig_throughput",
        }
    }

    fn title(self) -> &'static str {
        match self {
            FigureFamily::Memory => "Memory consumption",
            FigureFamily::ResponseTime => "Response time",
            FigureFamily::Throughput => "Throughput",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlotFiles {
    pub written: Vec<PathBuf>,
}

fn pick<'a>(family: FigureFamily, series: &'a [TimeSeries]) -> Option<&'a TimeSeries> {
    let get = |k: MetricKind| series.iter().find(|s| s.kind() == k && !s.is_empty());
    match family {
        FigureFamily::Memory => get(MetricKind::ProcessRss).or_else(|| get(MetricKind::SystemMemoryUsed)),
        FigureFamily::ResponseTime => get(MetricKind::ResponseTime),
        FigureFamily::Throughput => get(MetricKind::Throughput),
    }
}

/// Line chart of a series against time in hours, as an SVG document.
pub fn render_svg(series: &TimeSeries, title: &str) -> Result<String> {
    let xs: Vec<f64> = series.samples().iter().map(|s| s.t / SECONDS_PER_HOUR).collect();
    let ys = series.values();
    let (mut x0, mut x1) = bounds(&xs);
    let (mut y0, mut y1) = bounds(&ys);
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.05 };
        y0 -= pad;
        y1 += pad;
    } else {
        let pad = (y1 - y0) * 0.05;
        y0 -= pad;
        y1 += pad;
    }

    let mut buf = String::new();
    {
        let root = SVGBackend::with_string(&mut buf, (800, 480)).into_drawing_area();
        let draw = |e: &dyn std::fmt::Display| Error::InvalidArgument(format!("plot: {e}"));
        root.fill(&WHITE).map_err(|e| draw(&e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("{title} ({})", series.kind()), ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(90)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(|e| draw(&e))?;
        chart
            .configure_mesh()
            .x_desc("time (hours)")
            .y_desc(series.kind().canonical_unit())
            .draw()
            .map_err(|e| draw(&e))?;
        chart
            .draw_series(LineSeries::new(xs.iter().copied().zip(ys.iter().copied()), &BLUE))
            .map_err(|e| draw(&e))?;
        root.present().map_err(|e| draw(&e))?;
    }
    Ok(buf)
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

/// Writes figure CSVs and SVGs for the series the report was built from.
pub fn emit_plot_data(report: &AgingReport, dir: &Path) -> Result<PlotFiles> {
    let opts = AnalysisOptions {
        alpha: report.alpha,
        bucket_width_s: report.bucket_width_s,
        response_time: report.response_time_path,
        seed: report.seed,
    };
    let loaded = load_run(dir, &opts)?;
    let mut files = PlotFiles::default();
    for family in FigureFamily::ALL {
        let Some(series) = pick(family, &loaded.series) else {
            continue;
        };
        let csv = dir.join(format!("{}.csv", family.stem()));
        write_series_hours(&csv, series)?;
        let svg_path = dir.join(format!("{}.svg", family.stem()));
        let svg = render_svg(series, family.title())?;
        std::fs::write(&svg_path, svg).map_err(|e| Error::file(&svg_path, e))?;
        files.written.push(csv);
        files.written.push(svg_path);
    }
    Ok(files)
}
