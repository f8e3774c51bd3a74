//! CSV ingestion, threshold-exceedance interarrival times and report output.
//!
//! Reports are written as JSON, CSV or Markdown. JSON field order follows
//! the struct definitions and is documented in `docs/schemas.md`. Every
//! file is first written next to its destination and then renamed into
//! place, so a failed run never leaves a truncated file behind.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapResult;
use crate::error::{Error, Result};
use crate::likelihood::Series;
use crate::optimizer::FitResult;
use crate::selection::ModelComparison;
use crate::simulate::{StudyReport, REPORT_PARAMS};

pub const DEFAULT_LABEL_COLUMN: &str = "date";
pub const DEFAULT_VALUE_COLUMN: &str = "value";
/// Exceedance level used for the VIX interarrival study.
pub const DEFAULT_THRESHOLD: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub value: f64,
}

/// A labelled series as read from disk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawSeries {
    pub rows: Vec<Row>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
}

impl RawSeries {
    pub fn from_rows(rows: Vec<Row>) -> Self {
        Self { rows, source: None }
    }

    /// Rows labelled by their 1-based position.
    pub fn from_values(values: &[f64]) -> Self {
        Self::from_rows(
            values
                .iter()
                .enumerate()
                .map(|(i, &value)| Row {
                    label: (i + 1).to_string(),
                    value,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.label.clone()).collect()
    }

    /// Validated model input. Fails if any value is not strictly positive
    /// or the series is too short.
    pub fn to_series(&self) -> Result<Series> {
        Series::with_labels(self.values(), self.labels())
    }
}

/// Column names used by [`read_csv_with`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvColumns {
    pub label: String,
    pub value: String,
}

impl Default for CsvColumns {
    fn default() -> Self {
        Self {
            label: DEFAULT_LABEL_COLUMN.into(),
            value: DEFAULT_VALUE_COLUMN.into(),
        }
    }
}

/// Reads a `date,value` CSV.
pub fn read_csv(path: impl AsRef<Path>) -> Result<RawSeries> {
    read_csv_with(path, &CsvColumns::default())
}

pub fn read_csv_with(path: impl AsRef<Path>, columns: &CsvColumns) -> Result<RawSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = parse_csv(&text, columns)?;
    raw.source = Some(path.to_path_buf());
    Ok(raw)
}

/// Parses CSV text. Rows are numbered from 1 with the header as row 1.
/// Blank input yields an empty series.
pub fn parse_csv(text: &str, columns: &CsvColumns) -> Result<RawSeries> {
    if text.trim().is_empty() {
        return Ok(RawSeries::default());
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            column: name.to_string(),
            message: format!("header has no '{name}' column"),
        })
    };
    let label_idx = find(&columns.label)?;
    let value_idx = find(&columns.value)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let cell = |idx: usize, name: &str| {
            record.get(idx).ok_or_else(|| Error::Parse {
                row,
                column: name.to_string(),
                message: "missing field".into(),
            })
        };
        let label = cell(label_idx, &columns.label)?.to_string();
        let text = cell(value_idx, &columns.value)?;
        let bad = |message: String| Error::Parse {
            row,
            column: columns.value.clone(),
            message,
        };
        let value: f64 = text.parse().map_err(|_| bad(format!("'{text}' is not a number")))?;
        if !value.is_finite() {
            return Err(bad(format!("'{text}' is not finite")));
        }
        rows.push(Row { label, value });
    }
    Ok(RawSeries { rows, source: None })
}

/// One exceedance: the row that crossed the threshold and the number of
/// rows since the previous exceedance (or since the start of the series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// 1-based data row index.
    pub row: usize,
    pub label: String,
    pub wait: usize,
}

/// Streaming form of [`interarrival`]. Feeding two blocks one after the
/// other gives the same events as feeding their concatenation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterarrivalScanner {
    threshold: f64,
    seen: usize,
    pending: usize,
}

impl InterarrivalScanner {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            seen: 0,
            pending: 0,
        }
    }

    /// Consumes one row. Returns an event when `value > threshold`.
    pub fn push(&mut self, label: &str, value: f64) -> Option<Event> {
        self.seen += 1;
        self.pending += 1;
        if value > self.threshold {
            let wait = std::mem::take(&mut self.pending);
            Some(Event {
                row: self.seen,
                label: label.to_string(),
                wait,
            })
        } else {
            None
        }
    }

    /// Rows consumed since the last exceedance.
    pub fn pending(&self) -> usize {
        self.pending
    }

    pub fn rows_seen(&self) -> usize {
        self.seen
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterarrivalSeries {
    pub threshold: f64,
    pub total_rows: usize,
    pub events: Vec<Event>,
    /// Rows after the final exceedance that have not yet produced an event.
    pub trailing: usize,
}

impl InterarrivalSeries {
    pub fn waits(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.wait as f64).collect()
    }

    /// The waiting times as model input, labelled by the exceedance rows.
    pub fn to_series(&self) -> Result<Series> {
        Series::with_labels(self.waits(), self.events.iter().map(|e| e.label.clone()).collect())
    }
}

/// Waiting times between strict exceedances of `threshold`.
pub fn interarrival(raw: &RawSeries, threshold: f64) -> Result<InterarrivalSeries> {
    if !threshold.is_finite() {
        return Err(Error::domain(format!("threshold must be finite, got {threshold}")));
    }
    let mut scan = InterarrivalScanner::new(threshold);
    let events = raw.rows.iter().filter_map(|r| scan.push(&r.label, r.value)).collect();
    Ok(InterarrivalSeries {
        threshold,
        total_rows: raw.len(),
        events,
        trailing: scan.pending(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
    Md,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Format::Csv,
            Some("md") | Some("markdown") => Format::Md,
            _ => Format::Json,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Md),
            other => Err(Error::domain(format!("unknown format '{other}' (expected json, csv or md)"))),
        }
    }
}

/// A result that can be rendered in every output format.
pub trait Report: Serialize {
    fn to_csv(&self) -> Result<String>;
    fn to_markdown(&self) -> String;

    fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
            Format::Md => Ok(self.to_markdown()),
        }
    }
}

fn csv_string<F>(header: &[&str], fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    let bytes = w.into_inner().map_err(|e| Error::domain(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn md_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| {} |", header.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        "n/a".into()
    }
}

/// Parameter table with `Parameter, Estimation, 95% CI, AIC` columns. The
/// CI column stays empty without a bootstrap result.
pub fn fit_table_markdown(fit: &FitResult, boot: Option<&BootstrapResult>) -> String {
    let est = fit.estimates();
    let ci_header = boot.map_or("95% CI".to_string(), |b| format!("{}% CI", b.level * 100.0));
    let header = ["Parameter", "Estimation", ci_header.as_str(), "AIC"];
    let rows: Vec<Vec<String>> = REPORT_PARAMS
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = if j == 0 { fit.tau.to_string() } else { num(est[j]) };
            let ci = match boot {
                Some(b) if j == 0 => format!("[{}, {}]", b.tau_interval.lo, b.tau_interval.hi),
                Some(b) => b.interval(name).map_or(String::new(), |i| format!("[{}, {}]", num(i.lo), num(i.hi))),
                None => String::new(),
            };
            let aic = if j == 0 { format!("{:.1}", fit.aic) } else { String::new() };
            vec![name.to_string(), estimate, ci, aic]
        })
        .collect();
    md_table(&header, &rows)
}

impl Report for FitResult {
    /// `parameter,value` rows: the seven estimates, then loglik and AIC.
    fn to_csv(&self) -> Result<String> {
        let est = self.estimates();
        csv_string(&["parameter", "value"], |w| {
            w.write_record(["tau", &self.tau.to_string()])?;
            for j in 1..7 {
                w.write_record([REPORT_PARAMS[j], &est[j].to_string()])?;
            }
            w.write_record(["loglik", &self.loglik.to_string()])?;
            w.write_record(["aic", &self.aic.to_string()])?;
            Ok(())
        })
    }

    fn to_markdown(&self) -> String {
        fit_table_markdown(self, None)
    }
}

impl Report for StudyReport {
    /// `parameter,true_value,mean,rmse,re`, one row per parameter.
    fn to_csv(&self) -> Result<String> {
        csv_string(&["parameter", "true_value", "mean", "rmse", "re"], |w| {
            for r in &self.rows {
                w.write_record([
                    r.parameter.clone(),
                    r.true_value.to_string(),
                    r.mean.to_string(),
                    r.rmse.to_string(),
                    r.re.to_string(),
                ])?;
            }
            Ok(())
        })
    }

    fn to_markdown(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.parameter.clone(), num(r.true_value), num(r.mean), num(r.rmse), num(r.re)])
            .collect();
        format!(
            "**{}**: {} truth, {} fit, T={}, tau={}, R={}, failures={}\n\n{}",
            self.name,
            self.truth_family,
            self.fit_family,
            self.len,
            self.tau,
            self.replications,
            self.failures,
            md_table(&["Parameter", "True value", "Ê", "RMSE", "RE"], &rows)
        )
    }
}

impl Report for Vec<StudyReport> {
    /// The single-study CSV with a leading `study` column.
    fn to_csv(&self) -> Result<String> {
        csv_string(&["study", "parameter", "true_value", "mean", "rmse", "re"], |w| {
            for s in self {
                for r in &s.rows {
                    w.write_record([
                        s.name.clone(),
                        r.parameter.clone(),
                        r.true_value.to_string(),
                        r.mean.to_string(),
                        r.rmse.to_string(),
                        r.re.to_string(),
                    ])?;
                }
            }
            Ok(())
        })
    }

    fn to_markdown(&self) -> String {
        self.iter().map(Report::to_markdown).collect::<Vec<_>>().join("\n")
    }
}

impl Report for BootstrapResult {
    /// `parameter,estimate,lo,hi`: six continuous parameters, then `tau`
    /// with integer endpoints.
    fn to_csv(&self) -> Result<String> {
        csv_string(&["parameter", "estimate", "lo", "hi"], |w| {
            for i in &self.intervals {
                w.write_record([i.parameter.clone(), i.estimate.to_string(), i.lo.to_string(), i.hi.to_string()])?;
            }
            let t = &self.tau_interval;
            w.write_record(["tau".to_string(), t.estimate.to_string(), t.lo.to_string(), t.hi.to_string()])?;
            Ok(())
        })
    }

    fn to_markdown(&self) -> String {
        let t = &self.tau_interval;
        let mut rows = vec![vec![
            "tau".to_string(),
            t.estimate.to_string(),
            format!("[{}, {}]", t.lo, t.hi),
        ]];
        rows.extend(
            self.intervals
                .iter()
                .map(|i| vec![i.parameter.clone(), num(i.estimate), format!("[{}, {}]", num(i.lo), num(i.hi))]),
        );
        let ci = format!("{}% CI", self.level * 100.0);
        format!(
            "B={}, failures={}, seed={}\n\n{}",
            self.replications,
            self.failures,
            self.seed,
            md_table(&["Parameter", "Estimation", ci.as_str()], &rows)
        )
    }
}

impl Report for ModelComparison {
    /// One row per candidate: `family,alpha01,tau,loglik,aic,winner,error`.
    fn to_csv(&self) -> Result<String> {
        csv_string(&["family", "alpha01", "tau", "loglik", "aic", "winner", "error"], |w| {
            for (i, o) in self.outcomes.iter().enumerate() {
                let (tau, ll) = o.fit.as_ref().map_or((String::new(), String::new()), |f| {
                    (f.tau.to_string(), f.loglik.to_string())
                });
                w.write_record([
                    o.candidate.family.to_string(),
                    o.candidate.alpha01.to_string(),
                    tau,
                    ll,
                    o.aic.map_or(String::new(), |a| a.to_string()),
                    (i == self.winner).to_string(),
                    o.error.clone().unwrap_or_default(),
                ])?;
            }
            Ok(())
        })
    }

    fn to_markdown(&self) -> String {
        let mut s = String::new();
        for (i, o) in self.outcomes.iter().enumerate() {
            let mark = if i == self.winner { " (selected)" } else { "" };
            let _ = writeln!(s, "**{}**{}\n", o.candidate, mark);
            match &o.fit {
                Some(f) => s.push_str(&fit_table_markdown(f, None)),
                None => {
                    let _ = writeln!(s, "fit failed: {}", o.error.as_deref().unwrap_or("unknown"));
                }
            }
            s.push('\n');
        }
        s
    }
}

impl Report for InterarrivalSeries {
    /// `row,label,wait`, one row per exceedance.
    fn to_csv(&self) -> Result<String> {
        csv_string(&["row", "label", "wait"], |w| {
            for e in &self.events {
                w.write_record([e.row.to_string(), e.label.clone(), e.wait.to_string()])?;
            }
            Ok(())
        })
    }

    fn to_markdown(&self) -> String {
        let rows: Vec<Vec<String>> = self.events.iter().map(|e| vec![e.label.clone(), e.wait.to_string()]).collect();
        md_table(&["Date", "T"], &rows)
    }
}

/// Profile log-likelihood curve as `tau,loglik,converged`. Failed change
/// points have an empty `loglik`.
pub fn profile_csv(fit: &FitResult) -> Result<String> {
    csv_string(&["tau", "loglik", "converged"], |w| {
        for p in &fit.profile {
            let ll = if p.loglik.is_finite() { p.loglik.to_string() } else { String::new() };
            w.write_record([p.tau.to_string(), ll, p.converged.to_string()])?;
        }
        Ok(())
    })
}

/// `t,label,value,regime` where `regime` is 0 up to and including `tau`
/// and 1 afterwards.
pub fn annotated_series_csv(series: &Series, tau: usize) -> Result<String> {
    csv_string(&["t", "label", "value", "regime"], |w| {
        for (i, &x) in series.values().iter().enumerate() {
            let t = i + 1;
            let label = series.labels().map_or_else(|| t.to_string(), |l| l[i].clone());
            w.write_record([t.to_string(), label, x.to_string(), u8::from(t > tau).to_string()])?;
        }
        Ok(())
    })
}

/// Writes `contents` to a temporary sibling of `path` and renames it over
/// `path`.
pub fn write_atomic(path: impl AsRef<Path>, contents: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| Error::domain(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_report<R: Report + ?Sized>(report: &R, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let text = report.render(format)?;
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cols() -> CsvColumns {
        CsvColumns::default()
    }

    #[test]
    fn parses_two_rows() {
        let raw = parse_csv("date,value\n2020-01-02,12.5\n2020-01-03,13.1", &cols()).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw.values(), vec![12.5, 13.1]);
        assert_eq!(raw.labels(), vec!["2020-01-02", "2020-01-03"]);
    }

    #[test]
    fn missing_header_is_row_one() {
        let err = parse_csv("2020-01-02,12.5\n2020-01-03,13.1", &cols()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }), "{err}");
    }

    #[test]
    fn bad_values_report_their_row() {
        for (text, row) in [
            ("date,value\n2020-01-02,12.5\n2020-01-03,NaN", 3),
            ("date,value\n2020-01-02,abc", 2),
            ("date,value\na,1\nb,2\nc,inf", 4),
        ] {
            let err = parse_csv(text, &cols()).unwrap_err();
            match err {
                Error::Parse { row: r, column, .. } => {
                    assert_eq!(r, row);
                    assert_eq!(column, "value");
                }
                other => panic!("unexpected {other}"),
            }
        }
    }

    #[test]
    fn custom_columns_and_quoting() {
        let c = CsvColumns {
            label: "Date".into(),
            value: "Close".into(),
        };
        let raw = parse_csv("Open,Date,Close\n1,\"Jan 2, 2020\",12.5\n", &c).unwrap();
        assert_eq!(raw.rows[0].label, "Jan 2, 2020");
        assert_eq!(raw.rows[0].value, 12.5);
    }

    #[test]
    fn blank_input_is_empty() {
        assert!(parse_csv("", &cols()).unwrap().is_empty());
        assert!(parse_csv("date,value\n", &cols()).unwrap().is_empty());
    }

    #[test]
    fn hand_traced_interarrival() {
        let raw = RawSeries::from_values(&[10.0, 35.0, 12.0, 11.0, 40.0]);
        let ia = interarrival(&raw, 30.0).unwrap();
        let got: Vec<(usize, usize)> = ia.events.iter().map(|e| (e.row, e.wait)).collect();
        assert_eq!(got, vec![(2, 2), (5, 3)]);
        assert_eq!(ia.trailing, 0);
    }

    #[test]
    fn threshold_is_strict_and_consecutive_rows_give_one() {
        let raw = RawSeries::from_values(&[30.0, 31.0, 32.0, 30.0]);
        let ia = interarrival(&raw, 30.0).unwrap();
        let got: Vec<(usize, usize)> = ia.events.iter().map(|e| (e.row, e.wait)).collect();
        assert_eq!(got, vec![(2, 2), (3, 1)]);
        assert_eq!(ia.trailing, 1);
        assert!(interarrival(&raw, f64::NAN).is_err());
        assert!(interarrival(&RawSeries::default(), 30.0).unwrap().events.is_empty());
    }

    proptest! {
        #[test]
        fn interarrival_is_a_fold(values in proptest::collection::vec(0.0f64..60.0, 0..80), cut in 0usize..80) {
            let cut = cut.min(values.len());
            let whole = interarrival(&RawSeries::from_values(&values), 30.0).unwrap();

            let mut scan = InterarrivalScanner::new(30.0);
            let mut events = Vec::new();
            for (i, &v) in values[..cut].iter().enumerate() {
                events.extend(scan.push(&(i + 1).to_string(), v));
            }
            for (i, &v) in values[cut..].iter().enumerate() {
                events.extend(scan.push(&(cut + i + 1).to_string(), v));
            }
            prop_assert_eq!(&events, &whole.events);
            prop_assert_eq!(scan.pending(), whole.trailing);

            let total: usize = whole.events.iter().map(|e| e.wait).sum::<usize>() + whole.trailing;
            prop_assert_eq!(total, values.len());
            prop_assert!(whole.events.iter().all(|e| e.wait >= 1));
        }
    }

    #[test]
    fn atomic_write_replaces_and_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        let missing = dir.path().join("no/such/dir/out.txt");
        assert!(matches!(write_atomic(&missing, b"x"), Err(Error::Io { .. })));
    }

    #[test]
    fn format_detection() {
        assert_eq!(Format::from_path(Path::new("a/b.CSV")), Format::Csv);
        assert_eq!(Format::from_path(Path::new("b.md")), Format::Md);
        assert_eq!(Format::from_path(Path::new("b")), Format::Json);
        assert_eq!("markdown".parse::<Format>().unwrap(), Format::Md);
        assert!("xml".parse::<Format>().is_err());
    }
}
