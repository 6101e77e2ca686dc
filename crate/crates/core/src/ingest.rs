// SPDX-License-Identifier: MIT OR Apache-2.0

//! Event and signal ingestion, calendar binning and contingency tables.
//!
//! Events are dated rows of nonnegative attribute counts. They are summed
//! into monthly (`YYYY-MM`) or yearly (`YYYY`) bins to form a
//! [`ContingencyTable`] whose rows are the time bins and whose columns are
//! the attributes. Bins or attributes that end up with a zero total are
//! dropped, since profiles are undefined for them.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Read;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub date: NaiveDate,
    pub counts: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Granularity {
    Month,
    Year,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Month => "month",
            Granularity::Year => "year",
        }
    }

    /// Ordinal index of the bin containing `date`.
    pub fn bin_of(self, date: NaiveDate) -> i64 {
        match self {
            Granularity::Month => date.year() as i64 * 12 + date.month0() as i64,
            Granularity::Year => date.year() as i64,
        }
    }

    pub fn format_bin(self, ordinal: i64) -> String {
        match self {
            Granularity::Month => {
                format!(
                    "{:04}-{:02}",
                    ordinal.div_euclid(12),
                    ordinal.rem_euclid(12) + 1
                )
            }
            Granularity::Year => format!("{ordinal:04}"),
        }
    }

    pub fn parse_bin(self, label: &str) -> Result<i64> {
        let bad = || Error::invalid(format!("bad {} label '{label}'", self.as_str()));
        match self {
            Granularity::Month => {
                let (y, m) = label.split_once('-').ok_or_else(bad)?;
                if y.len() != 4 || m.len() != 2 {
                    return Err(bad());
                }
                let y: i64 = y.parse().map_err(|_| bad())?;
                let m: i64 = m.parse().map_err(|_| bad())?;
                if !(1..=12).contains(&m) {
                    return Err(bad());
                }
                Ok(y * 12 + m - 1)
            }
            Granularity::Year => {
                if label.len() != 4 {
                    return Err(bad());
                }
                label.parse().map_err(|_| bad())
            }
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "month" => Ok(Granularity::Month),
            "year" => Ok(Granularity::Year),
            other => Err(Error::invalid(format!(
                "unknown granularity '{other}', expected month or year"
            ))),
        }
    }
}

/// Inclusive interval of bin ordinals at a fixed granularity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinRange {
    pub granularity: Granularity,
    pub first: i64,
    pub last: i64,
}

impl BinRange {
    pub fn parse(granularity: Granularity, from: &str, to: &str) -> Result<Self> {
        let range = BinRange {
            granularity,
            first: granularity.parse_bin(from)?,
            last: granularity.parse_bin(to)?,
        };
        if range.is_empty() {
            return Err(Error::invalid(format!("empty range {from} .. {to}")));
        }
        Ok(range)
    }

    /// Smallest range holding every event.
    pub fn covering(events: &[EventRecord], granularity: Granularity) -> Result<Self> {
        let bins = events.iter().map(|e| granularity.bin_of(e.date));
        let first = bins
            .clone()
            .min()
            .ok_or_else(|| Error::data("no event records"))?;
        let last = bins.max().unwrap_or(first);
        Ok(BinRange {
            granularity,
            first,
            last,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.last - self.first + 1) as usize
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        let bin = self.granularity.bin_of(date);
        bin >= self.first && bin <= self.last
    }
}

/// Ordering of time-bin labels: numeric when both labels are integers,
/// textual otherwise (ISO labels sort correctly as text).
pub fn label_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

fn check_strictly_increasing(labels: &[String]) -> Result<()> {
    for w in labels.windows(2) {
        if label_cmp(&w[0], &w[1]) != Ordering::Less {
            return Err(Error::data(format!(
                "labels not strictly increasing: '{}' then '{}'",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(line, e.to_string())
}

fn parse_count(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| {
        Error::parse(
            line,
            format!("column '{column}': non-numeric count '{field}'"),
        )
    })?;
    if !v.is_finite() {
        return Err(Error::parse(
            line,
            format!("column '{column}': non-finite count '{field}'"),
        ));
    }
    if v < 0.0 {
        return Err(Error::parse(
            line,
            format!("column '{column}': negative count {field}"),
        ));
    }
    Ok(v)
}

/// Parses an event CSV whose header must be `date` followed by `schema`.
pub fn parse_events<R: Read>(source: R, schema: &[String]) -> Result<Vec<EventRecord>> {
    let (header, events) = parse_events_with_header(source)?;
    if header != schema {
        return Err(Error::parse(
            1,
            format!(
                "header attributes {:?} do not match the expected schema of {} attributes",
                header,
                schema.len()
            ),
        ));
    }
    Ok(events)
}

/// Parses an event CSV, taking the attribute schema from its header.
pub fn parse_events_with_header<R: Read>(source: R) -> Result<(Vec<String>, Vec<EventRecord>)> {
    let mut reader = csv_reader(source);
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(r) => r.map_err(csv_error)?,
        None => return Err(Error::parse(1, "missing header")),
    };
    if header.get(0) != Some("date") {
        return Err(Error::parse(1, "first header column must be 'date'"));
    }
    let schema: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if schema.is_empty() {
        return Err(Error::parse(1, "no attribute columns"));
    }

    let mut events = Vec::new();
    for row in rows {
        let row = row.map_err(csv_error)?;
        let line = record_line(&row);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != schema.len() + 1 {
            return Err(Error::parse(
                line,
                format!("expected {} columns, found {}", schema.len() + 1, row.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
            .map_err(|_| Error::parse(line, format!("malformed date '{}'", &row[0])))?;
        let counts = schema
            .iter()
            .zip(row.iter().skip(1))
            .map(|(col, field)| parse_count(field, line, col))
            .collect::<Result<Vec<_>>>()?;
        events.push(EventRecord { date, counts });
    }
    if events.is_empty() {
        return Err(Error::data("no event records"));
    }
    Ok((schema, events))
}

/// Writes events in the format read by [`parse_events`].
pub fn serialize_events(schema: &[String], events: &[EventRecord]) -> String {
    let mut out = String::from("date");
    for name in schema {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for e in events {
        let _ = write!(out, "{}", e.date.format("%Y-%m-%d"));
        for c in &e.counts {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

/// Counts of attributes (columns) per ordered time bin (rows).
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    counts: DMatrix<f64>,
}

impl ContingencyTable {
    /// Builds a table, checking shape, label order and nonnegativity.
    /// Zero rows and columns are allowed here; see [`Self::prune_empty`].
    pub fn new(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        counts: DMatrix<f64>,
    ) -> Result<Self> {
        if counts.nrows() != row_labels.len() || counts.ncols() != col_labels.len() {
            return Err(Error::invalid(format!(
                "table is {}x{} but has {} row and {} column labels",
                counts.nrows(),
                counts.ncols(),
                row_labels.len(),
                col_labels.len()
            )));
        }
        if counts.nrows() == 0 || counts.ncols() == 0 {
            return Err(Error::data("empty contingency table"));
        }
        if let Some(v) = counts.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::data(format!(
                "table entry {v} is not a nonnegative number"
            )));
        }
        check_strictly_increasing(&row_labels)?;
        Ok(ContingencyTable {
            row_labels,
            col_labels,
            counts,
        })
    }

    /// Convenience constructor with labels `1..=rows` and `c1..=cols`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("ragged table rows"));
        }
        let counts = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        Self::new(
            (1..=n).map(|i| i.to_string()).collect(),
            (1..=m).map(|j| format!("c{j}")).collect(),
            counts,
        )
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn counts(&self) -> &DMatrix<f64> {
        &self.counts
    }

    pub fn nrows(&self) -> usize {
        self.counts.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.counts.ncols()
    }

    pub fn total(&self) -> f64 {
        self.counts.sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.counts.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.counts.column_iter().map(|c| c.sum()).collect()
    }

    pub fn transpose(&self) -> ContingencyTable {
        ContingencyTable {
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            counts: self.counts.transpose(),
        }
    }

    /// Removes rows and columns with a zero total. Returns the pruned
    /// table with the dropped row and column labels.
    pub fn prune_empty(&self) -> Result<(ContingencyTable, Vec<String>, Vec<String>)> {
        let rs = self.row_sums();
        let cs = self.col_sums();
        let keep_rows: Vec<usize> = (0..self.nrows()).filter(|&i| rs[i] > 0.0).collect();
        let keep_cols: Vec<usize> = (0..self.ncols()).filter(|&j| cs[j] > 0.0).collect();
        if keep_rows.is_empty() {
            return Err(Error::data("all rows of the table are zero"));
        }
        let dropped_rows: Vec<String> = (0..self.nrows())
            .filter(|&i| rs[i] <= 0.0)
            .map(|i| self.row_labels[i].clone())
            .collect();
        let dropped_cols: Vec<String> = (0..self.ncols())
            .filter(|&j| cs[j] <= 0.0)
            .map(|j| self.col_labels[j].clone())
            .collect();
        for label in &dropped_rows {
            log::warn!("dropping empty time bin '{label}'");
        }
        for label in &dropped_cols {
            log::warn!("dropping empty attribute '{label}'");
        }
        let counts = DMatrix::from_fn(keep_rows.len(), keep_cols.len(), |a, b| {
            self.counts[(keep_rows[a], keep_cols[b])]
        });
        let table = ContingencyTable {
            row_labels: keep_rows
                .iter()
                .map(|&i| self.row_labels[i].clone())
                .collect(),
            col_labels: keep_cols
                .iter()
                .map(|&j| self.col_labels[j].clone())
                .collect(),
            counts,
        };
        Ok((table, dropped_rows, dropped_cols))
    }

    /// Reads the table CSV layout: `label,<attr1>,...`.
    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv_reader(source);
        let mut rows = reader.records();
        let header = match rows.next() {
            Some(r) => r.map_err(csv_error)?,
            None => return Err(Error::parse(1, "missing header")),
        };
        if header.get(0) != Some("label") {
            return Err(Error::parse(1, "first header column must be 'label'"));
        }
        let col_labels: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut row_labels = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            let row = row.map_err(csv_error)?;
            let line = record_line(&row);
            if row.len() == 1 && row[0].is_empty() {
                continue;
            }
            if row.len() != col_labels.len() + 1 {
                return Err(Error::parse(
                    line,
                    format!(
                        "expected {} columns, found {}",
                        col_labels.len() + 1,
                        row.len()
                    ),
                ));
            }
            row_labels.push(row[0].to_owned());
            for (col, field) in col_labels.iter().zip(row.iter().skip(1)) {
                values.push(parse_count(field, line, col)?);
            }
        }
        if row_labels.is_empty() {
            return Err(Error::data("no table rows"));
        }
        let counts = DMatrix::from_row_slice(row_labels.len(), col_labels.len(), &values);
        Self::new(row_labels, col_labels, counts)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, label) in self.row_labels.iter().enumerate() {
            out.push_str(label);
            for j in 0..self.ncols() {
                let _ = write!(out, ",{}", self.counts[(i, j)]);
            }
            out.push('\n');
        }
        out
    }
}

/// Result of [`aggregate`]: the pruned table and what was pruned.
#[derive(Clone, Debug)]
pub struct Aggregation {
    pub table: ContingencyTable,
    pub dropped_rows: Vec<String>,
    pub dropped_cols: Vec<String>,
}

/// Sums event counts into calendar bins over `range`. Events outside the
/// range are ignored; empty bins and attributes are dropped with a warning.
pub fn aggregate(
    events: &[EventRecord],
    attributes: &[String],
    range: BinRange,
) -> Result<Aggregation> {
    if range.is_empty() {
        return Err(Error::invalid("aggregation range is empty"));
    }
    let g = range.granularity;
    let mut counts = DMatrix::zeros(range.len(), attributes.len());
    for e in events {
        if e.counts.len() != attributes.len() {
            return Err(Error::data(format!(
                "event on {} has {} counts, schema has {}",
                e.date,
                e.counts.len(),
                attributes.len()
            )));
        }
        if !range.contains(e.date) {
            continue;
        }
        let row = (g.bin_of(e.date) - range.first) as usize;
        for (j, c) in e.counts.iter().enumerate() {
            counts[(row, j)] += c;
        }
    }
    let row_labels = (range.first..=range.last)
        .map(|b| g.format_bin(b))
        .collect();
    let raw = ContingencyTable::new(row_labels, attributes.to_vec(), counts)?;
    let (table, dropped_rows, dropped_cols) = raw.prune_empty()?;
    Ok(Aggregation {
        table,
        dropped_rows,
        dropped_cols,
    })
}

/// Univariate signal over ordered time-bin labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalSignal {
    labels: Vec<String>,
    values: Vec<f64>,
}

impl ExternalSignal {
    pub fn new(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::data("empty signal"));
        }
        if labels.len() != values.len() {
            return Err(Error::invalid("signal labels and values differ in length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("signal contains a non-finite value"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::data(format!("duplicate label '{dup}'")));
        }
        check_strictly_increasing(&labels)?;
        Ok(ExternalSignal { labels, values })
    }

    /// Signal with labels `1..=n`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let labels = (1..=values.len()).map(|i| i.to_string()).collect();
        Self::new(labels, values)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reads a `label,value` CSV.
pub fn load_signal<R: Read>(source: R) -> Result<ExternalSignal> {
    let mut reader = csv_reader(source);
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(r) => r.map_err(csv_error)?,
        None => return Err(Error::data("empty signal")),
    };
    if header.len() != 2 || &header[0] != "label" || &header[1] != "value" {
        return Err(Error::parse(1, "signal header must be 'label,value'"));
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for row in rows {
        let row = row.map_err(csv_error)?;
        let line = record_line(&row);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != 2 {
            return Err(Error::parse(
                line,
                format!("expected 2 columns, found {}", row.len()),
            ));
        }
        let v: f64 = row[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::parse(line, format!("non-numeric value '{}'", &row[1])))?;
        labels.push(row[0].to_owned());
        values.push(v);
    }
    ExternalSignal::new(labels, values)
}
