use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AgingReport, MetricRow};
use crate::error::Error;
use crate::metrics::MetricKind;

/// p-values below this are shown as "~0".
pub const P_DISPLAY_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableStyle {
    /// Memory: p-value and slope.
    PaperTable1,
    /// Response time: p-value and slope.
    PaperTable2,
    /// Memory and response time: mean, slope, confidence interval.
    PaperTable3,
    Full,
}

impl FromStr for TableStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "paper-table-1" => Ok(TableStyle::PaperTable1),
            "paper-table-2" => Ok(TableStyle::PaperTable2),
            "paper-table-3" => Ok(TableStyle::PaperTable3),
            "full" => Ok(TableStyle::Full),
            other => Err(Error::InvalidArgument(format!("unknown table style `{other}`"))),
        }
    }
}

#[derive(Clone, Copy)]
enum Column {
    Metric,
    N,
    Mean,
    PValue,
    Slope,
    Ci,
    Verdict,
}

impl TableStyle {
    fn metrics(self) -> &'static [MetricKind] {
        match self {
            TableStyle::PaperTable1 => &[MetricKind::SystemMemoryUsed, MetricKind::ProcessRss],
            TableStyle::PaperTable2 => &[MetricKind::ResponseTime],
            TableStyle::PaperTable3 => &[MetricKind::SystemMemoryUsed, MetricKind::ProcessRss, MetricKind::ResponseTime],
            TableStyle::Full => &MetricKind::ALL,
        }
    }

    fn columns(self) -> &'static [Column] {
        use Column::*;
        match self {
            TableStyle::PaperTable1 | TableStyle::PaperTable2 => &[Metric, PValue, Slope, Verdict],
            TableStyle::PaperTable3 => &[Metric, Mean, Slope, Ci, Verdict],
            TableStyle::Full => &[Metric, N, Mean, PValue, Slope, Ci, Verdict],
        }
    }

    fn title(self) -> &'static str {
        match self {
            TableStyle::PaperTable1 => "Memory usage: p-value and Sen's slope",
            TableStyle::PaperTable2 => "Response time: p-value and Sen's slope",
            TableStyle::PaperTable3 => "Memory usage and response time: mean, Sen's slope and confidence interval",
            TableStyle::Full => "All metrics",
        }
    }
}

/// Scientific notation with four fractional digits, e.g. `5.5042e-3`.
/// Zero is printed without a sign.
pub fn format_sci(x: f64) -> String {
    if x == 0.0 {
        "0.0000e0".to_string()
    } else {
        format!("{x:.4e}")
    }
}

pub fn format_p(p: f64) -> String {
    if p < P_DISPLAY_FLOOR {
        "~0".to_string()
    } else {
        format_sci(p)
    }
}

pub fn format_mean(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

pub fn format_ci(lo: f64, hi: f64) -> String {
    format!("[{} {}]", format_sci(lo), format_sci(hi))
}

fn header(col: Column) -> &'static str {
    match col {
        Column::Metric => "Metric",
        Column::N => "n",
        Column::Mean => "Mean",
        Column::PValue => "p-value",
        Column::Slope => "Slope",
        Column::Ci => "Confidence Interval",
        Column::Verdict => "Verdict",
    }
}

fn cell(row: &MetricRow, col: Column) -> String {
    let dash = || "-".to_string();
    match col {
        Column::Metric => row.metric.name().to_string(),
        Column::N => row.n.to_string(),
        Column::Mean => row.mean.map_or_else(dash, |m| format!("{} {}", format_mean(m), row.mean_unit)),
        Column::PValue => row.p_value.map_or_else(dash, format_p),
        Column::Slope => row.slope.map_or_else(dash, |s| format!("{} {}", format_sci(s), row.slope_unit)),
        Column::Ci => match (row.ci_low, row.ci_high) {
            (Some(lo), Some(hi)) => format!("{} {}", format_ci(lo, hi), row.slope_unit),
            _ => dash(),
        },
        Column::Verdict => row.verdict_label().to_string(),
    }
}

fn csv_cells(row: &MetricRow, col: Column) -> Vec<String> {
    let opt = |x: Option<f64>, f: fn(f64) -> String| x.map(f).unwrap_or_default();
    match col {
        Column::Metric => vec![row.metric.name().into()],
        Column::N => vec![row.n.to_string()],
        Column::Mean => vec![opt(row.mean, format_mean), row.mean_unit.clone()],
        Column::PValue => vec![opt(row.p_value, format_p)],
        Column::Slope => vec![opt(row.slope, format_sci), row.slope_unit.clone()],
        Column::Ci => vec![opt(row.ci_low, format_sci), opt(row.ci_high, format_sci)],
        Column::Verdict => vec![row.verdict_label().into()],
    }
}

fn csv_headers(col: Column) -> &'static [&'static str] {
    match col {
        Column::Metric => &["metric"],
        Column::N => &["n"],
        Column::Mean => &["mean", "mean_unit"],
        Column::PValue => &["p_value"],
        Column::Slope => &["slope", "slope_unit"],
        Column::Ci => &["ci_low", "ci_high"],
        Column::Verdict => &["verdict"],
    }
}

fn selected_rows(report: &AgingReport, style: TableStyle) -> (Vec<&MetricRow>, Vec<MetricKind>) {
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for &kind in style.metrics() {
        match report.row(kind) {
            Some(r) => rows.push(r),
            None if style != TableStyle::Full => missing.push(kind),
            None => {}
        }
    }
    (rows, missing)
}

/// Aligned plain-text table with a report header.
pub fn render_table(report: &AgingReport, style: TableStyle) -> String {
    let (rows, missing) = selected_rows(report, style);
    let cols = style.columns();
    let mut grid: Vec<Vec<String>> = vec![cols.iter().map(|&c| header(c).to_string()).collect()];
    for r in &rows {
        grid.push(cols.iter().map(|&c| cell(r, c)).collect());
    }
    let widths: Vec<usize> = (0..cols.len())
        .map(|i| grid.iter().map(|line| line[i].chars().count()).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let _ = writeln!(out, "{}", style.title());
    let _ = writeln!(
        out,
        "run: {}  generated-at: {}  alpha: {}",
        report.run_id, report.generated_at, report.alpha
    );
    for note in &report.notes {
        let _ = writeln!(out, "# {note}");
    }
    out.push('\n');
    for (li, line) in grid.iter().enumerate() {
        let mut text = String::new();
        for (i, c) in line.iter().enumerate() {
            if i > 0 {
                text.push_str("  ");
            }
            let _ = write!(text, "{:<width$}", c, width = widths[i]);
        }
        let _ = writeln!(out, "{}", text.trim_end());
        if li == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    for kind in missing {
        let _ = writeln!(out, "* {kind}: not present in this report");
    }
    out
}

/// The same table as CSV, one header line.
pub fn render_csv(report: &AgingReport, style: TableStyle) -> String {
    let (rows, _) = selected_rows(report, style);
    let cols = style.columns();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let head: Vec<&str> = cols.iter().flat_map(|&c| csv_headers(c).iter().copied()).collect();
    w.write_record(&head).expect("in-memory write");
    for r in rows {
        let line: Vec<String> = cols.iter().flat_map(|&c| csv_cells(r, c)).collect();
        w.write_record(&line).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{ResponseTimePath, RowStatus};
    use crate::trend::Verdict;

    fn row(metric: MetricKind, mean: f64, p: f64, slope: f64, lo: f64, hi: f64, verdict: Verdict) -> MetricRow {
        MetricRow {
            metric,
            status: RowStatus::Analyzed,
            n: 100,
            mean: Some(mean),
            mean_unit: "GB".into(),
            p_value: Some(p),
            slope: Some(slope),
            slope_unit: "GB/h".into(),
            ci_low: Some(lo),
            ci_high: Some(hi),
            verdict: Some(verdict),
            trend: None,
        }
    }

    fn report(rows: Vec<MetricRow>) -> AgingReport {
        AgingReport {
            run_id: "r".into(),
            generated_at: "now".into(),
            alpha: 0.05,
            bucket_width_s: 60.0,
            response_time_path: ResponseTimePath::Bucketed,
            seed: 0,
            notes: vec![],
            rows,
        }
    }

    #[test]
    fn number_formats() {
        assert_eq!(format_sci(5.5042e-3), "5.5042e-3");
        assert_eq!(format_sci(-49.9446), "-4.9945e1");
        assert_eq!(format_sci(0.0), "0.0000e0");
        assert_eq!(format_sci(-0.0), "0.0000e0");
        assert_eq!(format_p(1e-16), "~0");
        assert_eq!(format_p(0.0), "~0");
        assert_eq!(format_p(2.1e-13), "2.1000e-13");
        assert_eq!(format_mean(2.87), "2.87");
        assert_eq!(format_mean(-0.001), "0.00");
        assert_eq!(format_ci(5.0969e-3, 5.9116e-3), "[5.0969e-3 5.9116e-3]");
    }

    #[test]
    fn table3_reproduces_strings() {
        let r = report(vec![row(MetricKind::SystemMemoryUsed, 2.87, 0.0, 5.5042e-3, 5.0969e-3, 5.9116e-3, Verdict::Increasing)]);
        let text = render_table(&r, TableStyle::PaperTable3);
        assert!(text.contains("2.87 GB"));
        assert!(text.contains("5.5042e-3 GB/h"));
        assert!(text.contains("[5.0969e-3 5.9116e-3]"));
        assert!(text.contains("* response-time: not present"));
        let csv = render_csv(&r, TableStyle::PaperTable3);
        assert!(csv.starts_with("metric,mean,mean_unit,slope,slope_unit,ci_low,ci_high,verdict\n"));
        assert!(csv.contains("system-memory-used,2.87,GB,5.5042e-3,GB/h,5.0969e-3,5.9116e-3,increasing"));
    }

    #[test]
    fn zero_row_has_no_signs() {
        let r = report(vec![row(MetricKind::ProcessRss, 0.0, 1.0, -0.0, -0.0, 0.0, Verdict::NoTrend)]);
        let text = render_table(&r, TableStyle::Full);
        assert!(text.contains("[0.0000e0 0.0000e0]"));
        assert!(!text.contains("-0.0000"));
    }

    #[test]
    fn table1_is_memory_only() {
        let mut rt = row(MetricKind::ResponseTime, 5.0, 0.5, 0.0, 0.0, 0.0, Verdict::NoTrend);
        rt.mean_unit = "ms".into();
        let r = report(vec![row(MetricKind::ProcessRss, 1.0, 1e-20, 1.0, 0.5, 1.5, Verdict::Increasing), rt]);
        let t1 = render_table(&r, TableStyle::PaperTable1);
        assert!(t1.contains("process-rss"));
        assert!(t1.contains("~0"));
        assert!(!t1.contains("response-time  "));
        let t2 = render_table(&r, TableStyle::PaperTable2);
        assert!(t2.contains("response-time"));
        assert!(!t2.contains("process-rss"));
    }

    #[test]
    fn style_names_parse() {
        assert_eq!("paper-table-1".parse::<TableStyle>().unwrap(), TableStyle::PaperTable1);
        assert_eq!("full".parse::<TableStyle>().unwrap(), TableStyle::Full);
        assert!("table-9".parse::<TableStyle>().is_err());
    }
}
