//! File formats: token traces (line-delimited text or fixed-stride binary),
//! report documents, CSV tables, loss curves and dense matrices.
//!
//! Text trace: one JSON header line, then one record per line as
//! `index<TAB>nll_full<TAB>nll_quant<TAB>proxy_mean_quant`.
//!
//! Binary trace: the 8-byte magic `TBTRACE1`, a little-endian `u32` header
//! length, the JSON header, then 32-byte records (`u64` index followed by
//! three `f64`, all little-endian).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assembly::{BoundReport, TokenRecord, TokenTrace, TraceSource};
use crate::error::{Error, Result};
use crate::harness::{CoverageResult, TightnessRow};
use crate::numeric::round_sig;
use crate::prequential::OnlineLossCurve;
use crate::scaling::{Checkpoint, CheckpointCurve};
use crate::spectral::SpectralEstimate;

pub const SCHEMA_VERSION: u32 = 1;
pub const TRACE_MAGIC: &[u8; 8] = b"TBTRACE1";
pub const MATRIX_MAGIC: &[u8; 8] = b"TBMAT1\0\0";
pub const RECORD_STRIDE: usize = 32;
/// Significant digits for every emitted number.
pub const EMIT_DIGITS: usize = 12;

const MAX_HEADER_BYTES: u32 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFileHeader {
    pub schema_version: u32,
    pub vocab: u64,
    pub alpha_used: f64,
    pub num_records: u64,
    pub source: TraceSource,
    #[serde(default)]
    pub parent_size: Option<u64>,
    /// Free-form provenance (sampling frame, model identifiers, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl TraceFileHeader {
    pub fn for_trace(trace: &TokenTrace) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            vocab: trace.vocab(),
            alpha_used: trace.alpha_used(),
            num_records: trace.len() as u64,
            source: trace.source(),
            parent_size: trace.parent_size(),
            notes: BTreeMap::new(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.num_records == 0 {
            return Err(Error::Schema("num_records must be at least 1".into()));
        }
        if let Some(parent) = self.parent_size {
            if parent < self.num_records {
                return Err(Error::Schema(format!(
                    "parent_size {parent} is smaller than num_records {}",
                    self.num_records
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    #[default]
    Text,
    Binary,
}

impl std::str::FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(TraceFormat::Text),
            "binary" => Ok(TraceFormat::Binary),
            other => Err(Error::domain(format!("unknown trace format `{other}`"))),
        }
    }
}

pub fn write_trace<W: Write>(trace: &TokenTrace, mut out: W, format: TraceFormat) -> Result<()> {
    write_trace_with_header(&TraceFileHeader::for_trace(trace), trace.records(), &mut out, format)
}

/// Write a header and records without building a [`TokenTrace`].
pub fn write_trace_with_header<W: Write>(
    header: &TraceFileHeader,
    records: &[TokenRecord],
    mut out: W,
    format: TraceFormat,
) -> Result<()> {
    let json = serde_json::to_string(header)?;
    match format {
        TraceFormat::Text => {
            writeln!(out, "{json}")?;
            for r in records {
                writeln!(out, "{}\t{:?}\t{:?}\t{:?}", r.index, r.nll_full, r.nll_quant, r.proxy_mean_quant)?;
            }
        }
        TraceFormat::Binary => {
            out.write_all(TRACE_MAGIC)?;
            out.write_all(&(json.len() as u32).to_le_bytes())?;
            out.write_all(json.as_bytes())?;
            let mut buf = [0u8; RECORD_STRIDE];
            for r in records {
                buf[0..8].copy_from_slice(&r.index.to_le_bytes());
                buf[8..16].copy_from_slice(&r.nll_full.to_le_bytes());
                buf[16..24].copy_from_slice(&r.nll_quant.to_le_bytes());
                buf[24..32].copy_from_slice(&r.proxy_mean_quant.to_le_bytes());
                out.write_all(&buf)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_trace(trace: &TokenTrace, path: impl AsRef<Path>, format: TraceFormat) -> Result<()> {
    write_trace(trace, BufWriter::new(File::create(path)?), format)
}

/// Single-pass record reader; the format is detected from the first bytes.
pub struct TraceReader<R> {
    inner: R,
    header: TraceFileHeader,
    format: TraceFormat,
    position: u64,
    line: String,
    done: bool,
}

impl TraceReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let binary = inner.fill_buf()?.starts_with(TRACE_MAGIC);
        let (header, format) = if binary {
            let mut prefix = [0u8; 12];
            inner.read_exact(&mut prefix)?;
            let len = u32::from_le_bytes(prefix[8..12].try_into().expect("4 bytes"));
            if len > MAX_HEADER_BYTES {
                return Err(Error::Schema(format!("header length {len} is implausibly large")));
            }
            let mut json = vec![0u8; len as usize];
            inner.read_exact(&mut json).map_err(|_| Error::Schema("binary header is truncated".into()))?;
            (serde_json::from_slice::<TraceFileHeader>(&json)?, TraceFormat::Binary)
        } else {
            let mut line = String::new();
            if inner.read_line(&mut line)? == 0 {
                return Err(Error::Schema("empty trace file".into()));
            }
            (serde_json::from_str::<TraceFileHeader>(line.trim_end())?, TraceFormat::Text)
        };
        header.check()?;
        Ok(Self { inner, header, format, position: 0, line: String::new(), done: false })
    }

    pub fn header(&self) -> &TraceFileHeader {
        &self.header
    }

    pub fn format(&self) -> TraceFormat {
        self.format
    }

    fn truncated(&self) -> Error {
        Error::Truncated { expected: self.header.num_records, found: self.position }
    }

    fn next_record(&mut self) -> Result<Option<TokenRecord>> {
        let ordinal = self.position;
        let record = match self.format {
            TraceFormat::Text => {
                self.line.clear();
                if self.inner.read_line(&mut self.line)? == 0 {
                    None
                } else {
                    Some(parse_text_record(self.line.trim_end_matches(['\n', '\r']), ordinal)?)
                }
            }
            TraceFormat::Binary => {
                let mut buf = [0u8; RECORD_STRIDE];
                let mut filled = 0;
                while filled < RECORD_STRIDE {
                    let n = self.inner.read(&mut buf[filled..])?;
                    if n == 0 {
                        break;
                    }
                    filled += n;
                }
                match filled {
                    0 => None,
                    RECORD_STRIDE => {
                        let f = |i: usize| f64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
                        Some(TokenRecord {
                            index: u64::from_le_bytes(buf[0..8].try_into().expect("8 bytes")),
                            nll_full: f(8),
                            nll_quant: f(16),
                            proxy_mean_quant: f(24),
                        })
                    }
                    _ => return Err(self.truncated()),
                }
            }
        };
        match record {
            None if self.position < self.header.num_records => Err(self.truncated()),
            None => Ok(None),
            Some(_) if self.position >= self.header.num_records => Err(Error::Schema(format!(
                "trace body has more records than the declared {}",
                self.header.num_records
            ))),
            Some(r) => {
                self.position += 1;
                Ok(Some(r))
            }
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TokenRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_record().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

fn parse_text_record(line: &str, ordinal: u64) -> Result<TokenRecord> {
    let bad = |reason: String| Error::InvalidRecord { index: ordinal, reason };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
    }
    let index = fields[0].trim().parse::<u64>().map_err(|e| bad(format!("index: {e}")))?;
    let num = |i: usize, name: &str| {
        fields[i].trim().parse::<f64>().map_err(|e| Error::InvalidRecord { index, reason: format!("{name}: {e}") })
    };
    Ok(TokenRecord {
        index,
        nll_full: num(1, "nll_full")?,
        nll_quant: num(2, "nll_quant")?,
        proxy_mean_quant: num(3, "proxy_mean_quant")?,
    })
}

/// Stream and validate a trace. Every record is checked against the trace
/// invariants; the error names the offending record.
pub fn read_trace<R: BufRead>(reader: R) -> Result<TokenTrace> {
    let reader = TraceReader::new(reader)?;
    let h = reader.header().clone();
    let mut trace = TokenTrace::empty(h.alpha_used, h.vocab, h.source, h.parent_size)?;
    for record in reader {
        trace.push(record?)?;
    }
    Ok(trace)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<TokenTrace> {
    read_trace(BufReader::new(File::open(path)?))
}

/// Envelope for every emitted report: embeds the seed and full
/// configuration next to the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument<T> {
    pub kind: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub report: T,
}

impl<T: Serialize> ReportDocument<T> {
    pub fn new(kind: &str, seed: Option<u64>, config: impl Serialize, report: T) -> Result<Self> {
        Ok(Self { kind: kind.to_string(), seed, config: serde_json::to_value(config)?, report })
    }

    pub fn to_json(&self) -> Result<String> {
        to_canonical_json(self)
    }
}

/// Deterministic JSON: keys sorted, numbers rounded to [`EMIT_DIGITS`]
/// significant digits. Non-finite numbers are refused and the error names
/// the field path.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let raw = serde_value::to_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    let json = canonicalize(raw, &mut Vec::new())?;
    let mut text = serde_json::to_string_pretty(&json)?;
    text.push('\n');
    Ok(text)
}

pub fn parse_report<T: DeserializeOwned>(text: &str) -> Result<ReportDocument<T>> {
    Ok(serde_json::from_str(text)?)
}

fn canonicalize(value: serde_value::Value, path: &mut Vec<String>) -> Result<serde_json::Value> {
    use serde_json::Value as J;
    use serde_value::Value as V;
    Ok(match value {
        V::Bool(b) => J::Bool(b),
        V::U8(v) => J::from(v),
        V::U16(v) => J::from(v),
        V::U32(v) => J::from(v),
        V::U64(v) => J::from(v),
        V::I8(v) => J::from(v),
        V::I16(v) => J::from(v),
        V::I32(v) => J::from(v),
        V::I64(v) => J::from(v),
        V::F32(v) => number(v as f64, path)?,
        V::F64(v) => number(v, path)?,
        V::Char(c) => J::String(c.to_string()),
        V::String(s) => J::String(s),
        V::Unit => J::Null,
        V::Option(None) => J::Null,
        V::Option(Some(inner)) | V::Newtype(inner) => canonicalize(*inner, path)?,
        V::Seq(items) => J::Array(
            items
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    path.push(i.to_string());
                    let out = canonicalize(v, path);
                    path.pop();
                    out
                })
                .collect::<Result<_>>()?,
        ),
        V::Map(entries) => {
            let mut map = serde_json::Map::new();
            for (k, v) in entries {
                let key = match canonicalize(k, path)? {
                    J::String(s) => s,
                    other => other.to_string(),
                };
                path.push(key.clone());
                let v = canonicalize(v, path)?;
                path.pop();
                map.insert(key, v);
            }
            J::Object(map)
        }
        V::Bytes(b) => J::Array(b.into_iter().map(J::from).collect()),
    })
}

fn number(v: f64, path: &[String]) -> Result<serde_json::Value> {
    if !v.is_finite() {
        return Err(Error::NonFinite(field_name(path)));
    }
    Ok(serde_json::Number::from_f64(round_sig(v, EMIT_DIGITS)).map(serde_json::Value::Number).expect("finite"))
}

fn field_name(path: &[String]) -> String {
    if path.is_empty() {
        "<root>".into()
    } else {
        path.join(".")
    }
}

/// One CSV/JSON table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Bool(bool),
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Plot-ready comparison table: one row per configuration, one column per
/// quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::LengthMismatch { left: row.len(), right: self.columns.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for (i, row) in self.rows.iter().enumerate() {
            let cells = row
                .iter()
                .zip(&self.columns)
                .map(|(c, name)| match c {
                    Cell::Num(v) if !v.is_finite() => Err(Error::NonFinite(format!("{name} (row {i})"))),
                    Cell::Num(v) => Ok(format_number(*v)),
                    Cell::Int(v) => Ok(v.to_string()),
                    Cell::Bool(b) => Ok(b.to_string()),
                    Cell::Text(s) => Ok(s.clone()),
                })
                .collect::<Result<Vec<_>>>()?;
            w.write_record(&cells)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    /// Parse a CSV table; cells are typed as bool, integer, number or text.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut table = Table::new(r.headers()?.iter().map(str::to_string));
        for record in r.records() {
            table.push_row(record?.iter().map(parse_cell).collect())?;
        }
        Ok(table)
    }
}

fn parse_cell(s: &str) -> Cell {
    match s {
        "true" => Cell::Bool(true),
        "false" => Cell::Bool(false),
        _ => {
            if let Ok(i) = s.parse::<i64>() {
                Cell::Int(i)
            } else if let Ok(v) = s.parse::<f64>() {
                Cell::Num(v)
            } else {
                Cell::Text(s.to_string())
            }
        }
    }
}

fn format_number(v: f64) -> String {
    format!("{:?}", round_sig(v, EMIT_DIGITS))
}

pub const TERM_COLUMNS: [&str; 13] = [
    "label",
    "num_records",
    "empirical_risk_full",
    "empirical_risk_quant",
    "complexity",
    "sigma",
    "term_random_guess",
    "term_loss_variation",
    "term_smoothing",
    "term_quant_gap",
    "subsample_correction",
    "total_bound",
    "vacuous",
];

/// One row per labelled report, one column per bound term.
pub fn term_breakdown_table(reports: &[(String, BoundReport)]) -> Result<Table> {
    let mut t = Table::new(TERM_COLUMNS);
    for (label, r) in reports {
        t.push_row(vec![
            label.as_str().into(),
            r.num_records.into(),
            r.empirical_risk_full.into(),
            r.empirical_risk_quant.into(),
            r.complexity.into(),
            r.sigma.into(),
            r.term_random_guess.into(),
            r.term_loss_variation.into(),
            r.term_smoothing.into(),
            r.term_quant_gap.into(),
            r.subsample_correction.into(),
            r.total_bound.into(),
            r.vacuous.into(),
        ])?;
    }
    Ok(t)
}

pub fn coverage_table(results: &[CoverageResult]) -> Result<Table> {
    let mut t = Table::new([
        "process_kind",
        "variance_profile",
        "vocab",
        "horizon",
        "bound",
        "trials",
        "violations",
        "violation_rate",
        "binomial_upper_99",
        "negative_control_rate",
        "halved_gap_rate",
        "mean_bound",
        "mean_true_gap",
        "mean_population_risk",
    ]);
    for r in results {
        t.push_row(vec![
            enum_name(&r.spec.process_kind)?.into(),
            enum_name(&r.spec.variance_profile)?.into(),
            r.spec.vocab.into(),
            r.spec.horizon.into(),
            enum_name(&r.bound)?.into(),
            r.trials.into(),
            r.violations.into(),
            r.violation_rate.into(),
            r.binomial_upper_99.into(),
            r.negative_control_rate.into(),
            r.halved_gap_rate.into(),
            r.mean_bound.into(),
            r.mean_true_gap.into(),
            r.mean_population_risk.into(),
        ])?;
    }
    Ok(t)
}

pub fn tightness_table(rows: &[TightnessRow]) -> Result<Table> {
    let mut t = Table::new([
        "process_kind",
        "variance_profile",
        "horizon",
        "trials",
        "azuma_mean",
        "maintext_mean",
        "appendix_mean",
        "maintext_win_rate",
        "appendix_win_rate",
    ]);
    for r in rows {
        t.push_row(vec![
            enum_name(&r.process_kind)?.into(),
            enum_name(&r.variance_profile)?.into(),
            r.horizon.into(),
            r.trials.into(),
            r.azuma_mean.into(),
            r.maintext_mean.into(),
            r.appendix_mean.into(),
            r.maintext_win_rate.into(),
            r.appendix_win_rate.into(),
        ])?;
    }
    Ok(t)
}

/// Spectral density histogram of an SLQ estimate.
pub fn density_table(estimate: &SpectralEstimate, bins: usize) -> Result<Table> {
    let mut t = Table::new(["bin_lo", "bin_hi", "density"]);
    for (lo, hi, d) in estimate.density_histogram(bins) {
        t.push_row(vec![lo.into(), hi.into(), d.into()])?;
    }
    Ok(t)
}

/// Ritz nodes and weights of every probe.
pub fn quadrature_table(estimate: &SpectralEstimate) -> Result<Table> {
    let mut t = Table::new(["probe", "node", "weight"]);
    for (p, q) in estimate.quadrature.iter().enumerate() {
        for (node, weight) in q.nodes.iter().zip(&q.weights) {
            t.push_row(vec![p.into(), (*node).into(), (*weight).into()])?;
        }
    }
    Ok(t)
}

fn enum_name<T: Serialize>(v: &T) -> Result<String> {
    match serde_json::to_value(v)? {
        serde_json::Value::String(s) => Ok(s),
        other => Ok(other.to_string()),
    }
}

/// Checkpoint curves from CSV with columns `model_size`, `tokens_seen`,
/// `loss`; any further column becomes a per-checkpoint metric (empty cells
/// are skipped). Curves are returned in increasing model size.
pub fn read_checkpoint_curves<R: Read>(reader: R) -> Result<Vec<CheckpointCurve>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let (ci_n, ci_d, ci_l) = (col("model_size")?, col("tokens_seen")?, col("loss")?);
    let mut groups: BTreeMap<u64, Vec<Checkpoint>> = BTreeMap::new();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |name: &str, e: String| Error::InvalidRecord { index: row as u64, reason: format!("{name}: {e}") };
        let n = field(ci_n).parse::<u64>().map_err(|e| bad("model_size", e.to_string()))?;
        let d = field(ci_d).parse::<u64>().map_err(|e| bad("tokens_seen", e.to_string()))?;
        let loss = field(ci_l).parse::<f64>().map_err(|e| bad("loss", e.to_string()))?;
        let mut point = Checkpoint::new(d, loss);
        for (i, name) in headers.iter().enumerate() {
            if i == ci_n || i == ci_d || i == ci_l || field(i).is_empty() {
                continue;
            }
            let v = field(i).parse::<f64>().map_err(|e| bad(name, e.to_string()))?;
            point = point.with_metric(name, v);
        }
        groups.entry(n).or_default().push(point);
    }
    if groups.is_empty() {
        return Err(Error::Schema("checkpoint CSV has no rows".into()));
    }
    groups.into_iter().map(|(n, pts)| CheckpointCurve::new(n, pts)).collect()
}

pub fn checkpoint_curves_table(curves: &[CheckpointCurve]) -> Result<Table> {
    let metrics: std::collections::BTreeSet<&String> =
        curves.iter().flat_map(|c| c.points().iter().flat_map(|p| p.metrics.keys())).collect();
    let mut columns = vec!["model_size".to_string(), "tokens_seen".into(), "loss".into()];
    columns.extend(metrics.iter().map(|m| m.to_string()));
    let mut t = Table::new(columns);
    for c in curves {
        for p in c.points() {
            let mut row: Vec<Cell> = vec![c.model_size().into(), p.tokens_seen.into(), p.train_loss.into()];
            row.extend(metrics.iter().map(|m| p.metrics.get(*m).map_or(Cell::Text(String::new()), |v| (*v).into())));
            t.push_row(row)?;
        }
    }
    Ok(t)
}

/// Online loss curve from CSV with columns `step`, `online_loss`,
/// `final_loss`; steps must be strictly increasing.
pub fn read_online_curve<R: Read>(reader: R) -> Result<OnlineLossCurve> {
    #[derive(Deserialize)]
    struct Row {
        step: u64,
        online_loss: f64,
        final_loss: f64,
    }
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let (mut online, mut fin) = (Vec::new(), Vec::new());
    let mut last: Option<u64> = None;
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row?;
        if last.is_some_and(|s| row.step <= s) {
            return Err(Error::InvalidRecord { index: i as u64, reason: format!("step {} is not increasing", row.step) });
        }
        last = Some(row.step);
        online.push(row.online_loss);
        fin.push(row.final_loss);
    }
    if online.is_empty() {
        return Err(Error::Schema("online loss CSV has no rows".into()));
    }
    OnlineLossCurve::new(online, fin)
}

pub fn online_curve_table(curve: &OnlineLossCurve) -> Result<Table> {
    let mut t = Table::new(["step", "online_loss", "final_loss"]);
    for (k, (a, b)) in curve.online().iter().zip(curve.final_model()).enumerate() {
        t.push_row(vec![(k + 1).into(), (*a).into(), (*b).into()])?;
    }
    Ok(t)
}

/// Dense matrix from headerless CSV; lines starting with `#` are ignored.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in r.records() {
        let record = record?;
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(Error::InvalidRecord { index: rows as u64, reason: "ragged matrix row".into() });
        }
        for v in record.iter() {
            data.push(v.parse::<f64>().map_err(|e| Error::InvalidRecord { index: rows as u64, reason: e.to_string() })?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Schema("matrix CSV is empty".into()))?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Binary matrix: magic, `u64` rows, `u64` cols, row-major `f64`, all
/// little-endian.
pub fn write_matrix_binary<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut reader: R) -> Result<DMatrix<f64>> {
    let mut head = [0u8; 24];
    reader.read_exact(&mut head).map_err(|_| Error::Schema("matrix header is truncated".into()))?;
    if &head[0..8] != MATRIX_MAGIC {
        return Err(Error::Schema("not a binary matrix file".into()));
    }
    let rows = u64::from_le_bytes(head[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(head[16..24].try_into().expect("8 bytes"));
    let count = rows.checked_mul(cols).filter(|c| *c <= (1 << 32)).ok_or_else(|| Error::Schema("matrix too large".into()))?;
    let mut bytes = vec![0u8; count as usize * 8];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| Error::Truncated { expected: count, found: 0 })?;
    let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(DMatrix::from_row_slice(rows as usize, cols as usize, &data))
}

/// Load a matrix, choosing the binary or CSV reader from the file contents.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let mut reader = BufReader::new(File::open(path)?);
    if reader.fill_buf()?.starts_with(MATRIX_MAGIC) {
        read_matrix_binary(reader)
    } else {
        read_matrix_csv(reader)
    }
}

/// Deserialize a JSON configuration document.
pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace() -> TokenTrace {
        let records = (0..5)
            .map(|i| TokenRecord {
                index: i,
                nll_full: 0.1 * i as f64 + 1.0 / 3.0,
                nll_quant: 0.2 * i as f64 + 1e-7,
                proxy_mean_quant: 1.5 + i as f64 * 1e-3,
            })
            .collect();
        TokenTrace::new(0.05, 100, records, TraceSource::Synthetic, Some(1000)).unwrap()
    }

    #[test]
    fn text_and_binary_round_trip() {
        let t = trace();
        for format in [TraceFormat::Text, TraceFormat::Binary] {
            let mut buf = Vec::new();
            write_trace(&t, &mut buf, format).unwrap();
            let back = read_trace(buf.as_slice()).unwrap();
            assert_eq!(back, t);
            let mut again = Vec::new();
            write_trace(&back, &mut again, format).unwrap();
            assert_eq!(again, buf);
        }
    }

    #[test]
    fn truncation_and_excess_are_detected() {
        let t = trace();
        let mut buf = Vec::new();
        write_trace(&t, &mut buf, TraceFormat::Binary).unwrap();
        let cut = &buf[..buf.len() - 5];
        assert_eq!(read_trace(cut).unwrap_err(), Error::Truncated { expected: 5, found: 4 });
        let mut text = Vec::new();
        write_trace(&t, &mut text, TraceFormat::Text).unwrap();
        let s = String::from_utf8(text).unwrap();
        let short: String = s.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert_eq!(read_trace(short.as_bytes()).unwrap_err(), Error::Truncated { expected: 5, found: 3 });
        let long = format!("{s}9\t1\t1\t1\n");
        assert!(matches!(read_trace(long.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn header_validation() {
        let zero = r#"{"schema_version":1,"vocab":10,"alpha_used":0.1,"num_records":0,"source":"synthetic"}"#;
        assert!(matches!(read_trace(format!("{zero}\n").as_bytes()), Err(Error::Schema(_))));
        let v2 = r#"{"schema_version":2,"vocab":10,"alpha_used":0.1,"num_records":1,"source":"synthetic"}"#;
        assert!(matches!(read_trace(format!("{v2}\n0\t1\t1\t1\n").as_bytes()), Err(Error::Schema(_))));
        assert!(matches!(read_trace(&b""[..]), Err(Error::Schema(_))));
    }

    #[test]
    fn cap_violation_names_record() {
        let h = r#"{"schema_version":1,"vocab":10,"alpha_used":0.1,"num_records":2,"source":"extracted"}"#;
        let body = format!("{h}\n0\t1\t1\t1\n17\t1\t{}\t1\n", (100.0f64).ln() + 1e-3);
        match read_trace(body.as_bytes()) {
            Err(Error::InvalidRecord { index, .. }) => assert_eq!(index, 17),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn canonical_json_rounds_and_refuses_nan() {
        #[derive(Serialize)]
        struct Inner {
            value: f64,
        }
        #[derive(Serialize)]
        struct Outer {
            items: Vec<Inner>,
            note: Option<f64>,
        }
        let ok = Outer { items: vec![Inner { value: 1.0 / 3.0 }], note: None };
        let s = to_canonical_json(&ok).unwrap();
        assert!(s.contains("0.333333333333") && !s.contains("0.3333333333333"));
        let bad = Outer { items: vec![Inner { value: 0.0 }, Inner { value: f64::NAN }], note: None };
        assert_eq!(to_canonical_json(&bad).unwrap_err(), Error::NonFinite("items.1.value".into()));
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = term_breakdown_table(&[]).unwrap();
        assert_eq!(t.to_csv().unwrap(), format!("{}\n", TERM_COLUMNS.join(",")));
        let back = Table::from_csv(t.to_csv().unwrap().as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn table_nan_names_column() {
        let mut t = Table::new(["a", "b"]);
        t.push_row(vec![1.0.into(), f64::NAN.into()]).unwrap();
        assert_eq!(t.to_csv().unwrap_err(), Error::NonFinite("b (row 0)".into()));
    }

    #[test]
    fn checkpoint_csv_round_trip() {
        let csv_in = "model_size,tokens_seen,loss,sigma\n70,1000,3.5,0.2\n70,500,4.0,\n160,1000,3.2,0.1\n";
        let curves = read_checkpoint_curves(csv_in.as_bytes()).unwrap();
        assert_eq!(curves.len(), 2);
        assert_eq!(curves[0].points()[0].tokens_seen, 500);
        assert!(curves[0].points()[0].metrics.is_empty());
        let out = checkpoint_curves_table(&curves).unwrap().to_csv().unwrap();
        assert_eq!(read_checkpoint_curves(out.as_bytes()).unwrap(), curves);
    }

    #[test]
    fn online_curve_csv() {
        let c = read_online_curve("step,online_loss,final_loss\n1,2.0,1.0\n2,1.5,1.0\n".as_bytes()).unwrap();
        assert_eq!(c.online(), &[2.0, 1.5]);
        let out = online_curve_table(&c).unwrap().to_csv().unwrap();
        assert_eq!(read_online_curve(out.as_bytes()).unwrap(), c);
        assert!(read_online_curve("step,online_loss,final_loss\n2,1,1\n1,1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn matrix_formats() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 1e-300, 4.0, 5.0, 1.0 / 7.0]);
        let mut csv_buf = Vec::new();
        write_matrix_csv(&m, &mut csv_buf).unwrap();
        assert_eq!(read_matrix_csv(csv_buf.as_slice()).unwrap(), m);
        let mut bin = Vec::new();
        write_matrix_binary(&m, &mut bin).unwrap();
        assert_eq!(read_matrix_binary(bin.as_slice()).unwrap(), m);
        assert!(read_matrix_binary(&bin[..bin.len() - 1]).is_err());
        assert!(read_matrix_csv("1,2\n3\n".as_bytes()).is_err());
    }
}
