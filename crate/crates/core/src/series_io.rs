//! CSV persistence for series and request records.
//!
//! Series files carry the header `t_seconds,value` (figure files written by
//! the report engine use `t_hours,value`); record files carry
//! `dispatch_t_seconds,latency_ms,status,worker_id`. Numbers are written in
//! shortest round-trip decimal form, so reading a file back yields the same
//! `f64` bits.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{IngestWarnings, MetricKind, MetricSample, RequestRecord, TimeSeries, SECONDS_PER_HOUR};

pub const SERIES_HEADER: &str = "t_seconds,value";
pub const HOURS_HEADER: &str = "t_hours,value";
pub const RECORDS_HEADER: &str = "dispatch_t_seconds,latency_ms,status,worker_id";

/// Incremental writer for one series file.
pub struct SeriesWriter<W: Write> {
    out: W,
    last_t: Option<f64>,
    written: usize,
}

impl SeriesWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> SeriesWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{SERIES_HEADER}")?;
        Ok(Self {
            out,
            last_t: None,
            written: 0,
        })
    }

    /// Appends one sample. Returns `Ok(false)` (and writes nothing) when the
    /// sample would break the series invariants.
    pub fn push(&mut self, sample: MetricSample) -> io::Result<bool> {
        let valid = sample.t.is_finite()
            && sample.t >= 0.0
            && sample.value.is_finite()
            && self.last_t.is_none_or(|last| sample.t > last);
        if !valid {
            return Ok(false);
        }
        writeln!(self.out, "{},{}", sample.t, sample.value)?;
        self.last_t = Some(sample.t);
        self.written += 1;
        Ok(true)
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Incremental writer for a request-record file.
pub struct RecordWriter<W: Write> {
    out: W,
    written: u64,
}

impl RecordWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{RECORDS_HEADER}")?;
        Ok(Self { out, written: 0 })
    }

    pub fn push(&mut self, r: &RequestRecord) -> io::Result<()> {
        writeln!(self.out, "{},{},{},{}", r.dispatch_t, r.latency_ms, r.status, r.worker_id)?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_series(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut w = SeriesWriter::create(path).map_err(|e| Error::file(path, e))?;
    for s in series.samples() {
        w.push(*s).map_err(|e| Error::file(path, e))?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

/// Writes a series with its time axis in hours (figure data).
pub fn write_series_hours(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut out = String::with_capacity(series.len() * 24 + 16);
    out.push_str(HOURS_HEADER);
    out.push('\n');
    for s in series.samples() {
        out.push_str(&format!("{},{}\n", s.t / SECONDS_PER_HOUR, s.value));
    }
    std::fs::write(path, out).map_err(|e| Error::file(path, e))
}

pub fn write_records(path: &Path, records: &[RequestRecord]) -> Result<()> {
    let mut w = RecordWriter::create(path).map_err(|e| Error::file(path, e))?;
    for r in records {
        w.push(r).map_err(|e| Error::file(path, e))?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

fn parse_f64(field: Option<&str>, line: u64, name: &str) -> std::result::Result<f64, String> {
    let raw = field.ok_or_else(|| format!("line {line}: missing field `{name}`"))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| format!("line {line}: field `{name}` is not a number: `{raw}`"))
}

/// Reads a series CSV (either time axis). Rows with non-finite values or
/// non-increasing times are skipped and counted; malformed rows are an error.
pub fn read_series_from<R: Read>(
    reader: R,
    kind: MetricKind,
    run_id: &str,
) -> std::result::Result<(TimeSeries, IngestWarnings), String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let time_scale = match (headers.get(0), headers.get(1)) {
        (Some("t_seconds"), Some("value")) => 1.0,
        (Some("t_hours"), Some("value")) => SECONDS_PER_HOUR,
        _ => {
            return Err(format!(
                "unexpected header `{}`, expected `{SERIES_HEADER}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ))
        }
    };
    let mut samples = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let line = i as u64 + 2;
        let t = parse_f64(row.get(0), line, "t")?;
        let v = parse_f64(row.get(1), line, "value")?;
        samples.push(MetricSample::new(t * time_scale, v));
    }
    Ok(TimeSeries::ingest(kind, run_id, samples))
}

pub fn read_series(path: &Path, kind: MetricKind, run_id: &str) -> Result<(TimeSeries, IngestWarnings)> {
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    read_series_from(f, kind, run_id).map_err(|m| Error::file(path, m))
}

pub fn read_records_from<R: Read>(reader: R) -> std::result::Result<Vec<RequestRecord>, String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != RECORDS_HEADER {
        return Err(format!("unexpected header, expected `{RECORDS_HEADER}`"));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let line = i as u64 + 2;
        let dispatch_t = parse_f64(row.get(0), line, "dispatch_t_seconds")?;
        let latency_ms = parse_f64(row.get(1), line, "latency_ms")?;
        let status = row
            .get(2)
            .and_then(|s| s.trim().parse::<u16>().ok())
            .ok_or_else(|| format!("line {line}: bad status"))?;
        let worker_id = row
            .get(3)
            .and_then(|s| s.trim().parse::<u32>().ok())
            .ok_or_else(|| format!("line {line}: bad worker_id"))?;
        if !(dispatch_t.is_finite() && dispatch_t >= 0.0 && latency_ms.is_finite() && latency_ms >= 0.0) {
            return Err(format!("line {line}: negative or non-finite time"));
        }
        out.push(RequestRecord {
            dispatch_t,
            latency_ms,
            status,
            worker_id,
        });
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<RequestRecord>> {
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    read_records_from(f).map_err(|m| Error::file(path, m))
}
