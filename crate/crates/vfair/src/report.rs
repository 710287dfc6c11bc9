//! Result tables and epoch series as Markdown or CSV text.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use vfair_core::metrics::{disparity, EpochSeries, GroupMetrics, Slice};

use crate::error::{Error, Result};

/// Column titles, in table order.
pub const TABLE_COLUMNS: [&str; 10] = [
    "Train File",
    "Test File",
    "Acc.",
    "EER",
    "EER O",
    "EER Y",
    "EER F",
    "EER M",
    "DS Y/O",
    "DS M/F",
];
pub const MARKER_COLUMNS: [&str; 2] = ["Lowest DS Y/O", "Lowest DS M/F"];
const MARKER: &str = "*";

/// One line of a results table. Every rate is a percentage.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub train_file_id: String,
    pub test_file_id: String,
    /// Imported from a side file; the toolkit never trains a model.
    pub training_accuracy: Option<f64>,
    pub eer: f64,
    pub eer_old: f64,
    pub eer_young: f64,
    pub eer_female: f64,
    pub eer_male: f64,
    pub ds_young_old: f64,
    pub ds_male_female: f64,
}

impl ResultRow {
    pub fn from_metrics(
        train_file_id: &str,
        test_file_id: &str,
        training_accuracy: Option<f64>,
        metrics: &GroupMetrics,
    ) -> Self {
        let pct = |s: Slice| 100.0 * metrics.eer(s);
        ResultRow {
            train_file_id: train_file_id.to_string(),
            test_file_id: test_file_id.to_string(),
            training_accuracy,
            eer: pct(Slice::Overall),
            eer_old: pct(Slice::Old),
            eer_young: pct(Slice::Young),
            eer_female: pct(Slice::Female),
            eer_male: pct(Slice::Male),
            ds_young_old: disparity(pct(Slice::Young), pct(Slice::Old)),
            ds_male_female: disparity(pct(Slice::Male), pct(Slice::Female)),
        }
    }

    fn rates(&self) -> [f64; 7] {
        [
            self.eer,
            self.eer_old,
            self.eer_young,
            self.eer_female,
            self.eer_male,
            self.ds_young_old,
            self.ds_male_female,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Markdown => "md",
        }
    }
}

/// `<train_id>__<test_id>__fold<k>.<ext>`
pub fn report_file_name(train_id: &str, test_id: &str, fold: u32, format: TableFormat) -> String {
    format!("{train_id}__{test_id}__fold{fold}.{}", format.extension())
}

fn pct2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Value in hundredths as displayed, so that flags agree with the rendered text.
fn hundredths(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

/// For every row, whether its DS Y/O and DS M/F are the lowest of its
/// test-file block. Ties are all flagged.
fn lowest_flags(rows: &[ResultRow]) -> Vec<[bool; 2]> {
    let mut best: BTreeMap<&str, [i64; 2]> = BTreeMap::new();
    for r in rows {
        let v = [hundredths(r.ds_young_old), hundredths(r.ds_male_female)];
        best.entry(&r.test_file_id)
            .and_modify(|b| {
                b[0] = b[0].min(v[0]);
                b[1] = b[1].min(v[1]);
            })
            .or_insert(v);
    }
    rows.iter()
        .map(|r| {
            let b = best[r.test_file_id.as_str()];
            [
                hundredths(r.ds_young_old) == b[0],
                hundredths(r.ds_male_female) == b[1],
            ]
        })
        .collect()
}

fn check_rows(rows: &[ResultRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Report("a table needs at least one row".into()));
    }
    for r in rows {
        for id in [&r.train_file_id, &r.test_file_id] {
            if id.is_empty() || id.contains(['|', '\n', '\r', ',', '"']) {
                return Err(Error::Report(format!(
                    "file id '{id}' must be non-empty and free of '|', ',', quotes and line breaks"
                )));
            }
        }
        if r.rates()
            .iter()
            .chain(&r.training_accuracy)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Report(format!(
                "row {} / {} has a non-finite value",
                r.train_file_id, r.test_file_id
            )));
        }
    }
    Ok(())
}

fn cells(r: &ResultRow) -> Vec<String> {
    let mut out = vec![
        r.train_file_id.clone(),
        r.test_file_id.clone(),
        r.training_accuracy.map_or_else(|| "n/a".to_string(), pct2),
    ];
    out.extend(r.rates().into_iter().map(pct2));
    out
}

/// Renders rows in the given order. Within each test-file block the lowest
/// DS Y/O and DS M/F are flagged: bold in Markdown, `*` marker columns in CSV.
pub fn emit_table(rows: &[ResultRow], format: TableFormat) -> Result<String> {
    check_rows(rows)?;
    let flags = lowest_flags(rows);
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            let header: Vec<&str> = TABLE_COLUMNS
                .iter()
                .chain(&MARKER_COLUMNS)
                .copied()
                .collect();
            writeln!(out, "{}", header.join(",")).unwrap();
            for (r, f) in rows.iter().zip(&flags) {
                let mut c = cells(r);
                c.extend(f.iter().map(|&on| if on { MARKER } else { "" }.to_string()));
                writeln!(out, "{}", c.join(",")).unwrap();
            }
        }
        TableFormat::Markdown => {
            writeln!(out, "| {} |", TABLE_COLUMNS.join(" | ")).unwrap();
            let align: Vec<&str> = (0..TABLE_COLUMNS.len())
                .map(|i| if i < 2 { "---" } else { "---:" })
                .collect();
            writeln!(out, "| {} |", align.join(" | ")).unwrap();
            for (r, f) in rows.iter().zip(&flags) {
                let mut c = cells(r);
                for (k, on) in f.iter().enumerate() {
                    if *on {
                        c[8 + k] = format!("**{}**", c[8 + k]);
                    }
                }
                writeln!(out, "| {} |", c.join(" | ")).unwrap();
            }
        }
    }
    Ok(out)
}

fn parse_cells(line_no: usize, c: &[&str]) -> Result<ResultRow> {
    if c.len() < TABLE_COLUMNS.len() {
        return Err(Error::Report(format!(
            "line {line_no}: expected {} columns, found {}",
            TABLE_COLUMNS.len(),
            c.len()
        )));
    }
    let num = |i: usize| -> Result<f64> {
        let raw = c[i].trim().trim_matches('*');
        raw.parse().map_err(|_| {
            Error::Report(format!(
                "line {line_no}: column '{}' has value '{raw}'",
                TABLE_COLUMNS[i]
            ))
        })
    };
    let acc = match c[2].trim() {
        "n/a" => None,
        _ => Some(num(2)?),
    };
    Ok(ResultRow {
        train_file_id: c[0].trim().to_string(),
        test_file_id: c[1].trim().to_string(),
        training_accuracy: acc,
        eer: num(3)?,
        eer_old: num(4)?,
        eer_young: num(5)?,
        eer_female: num(6)?,
        eer_male: num(7)?,
        ds_young_old: num(8)?,
        ds_male_female: num(9)?,
    })
}

fn split_line(line: &str, format: TableFormat) -> Vec<&str> {
    match format {
        TableFormat::Csv => line.split(',').collect(),
        TableFormat::Markdown => line
            .trim()
            .trim_start_matches('|')
            .trim_end_matches('|')
            .split('|')
            .map(str::trim)
            .collect(),
    }
}

/// Inverse of [`emit_table`] at the emitted precision. Flags are dropped.
pub fn parse_table(text: &str, format: TableFormat) -> Result<Vec<ResultRow>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Report("empty table".into()))?;
    let head = split_line(header, format);
    if head.len() < TABLE_COLUMNS.len() || head[..TABLE_COLUMNS.len()] != TABLE_COLUMNS {
        return Err(Error::Report(format!("unexpected header: {header}")));
    }
    if format == TableFormat::Markdown {
        lines.next();
    }
    lines
        .map(|(i, line)| parse_cells(i + 1, &split_line(line, format)))
        .collect()
}

/// Long-format series: `epoch,slice,eer_percent`, sorted by slice then epoch.
pub fn emit_series(series: &EpochSeries) -> Result<String> {
    let mut rows: Vec<(Slice, u32, f64)> = series
        .iter()
        .flat_map(|(s, points)| points.iter().map(move |&(e, v)| (*s, e, v)))
        .collect();
    if rows.is_empty() {
        return Err(Error::Report(
            "an epoch series needs at least one point".into(),
        ));
    }
    if let Some((s, e, _)) = rows.iter().find(|(_, _, v)| !v.is_finite()) {
        return Err(Error::Report(format!(
            "non-finite EER for slice {s} at epoch {e}"
        )));
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::from("epoch,slice,eer_percent\n");
    for (slice, epoch, eer) in rows {
        writeln!(out, "{epoch},{slice},{:.4}", 100.0 * eer).unwrap();
    }
    Ok(out)
}

/// Inverse of [`emit_series`]; EERs come back as fractions.
pub fn parse_series(text: &str) -> Result<EpochSeries> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "epoch,slice,eer_percent" => {}
        _ => {
            return Err(Error::Report(
                "series header must be 'epoch,slice,eer_percent'".into(),
            ))
        }
    }
    let mut series = EpochSeries::new();
    for (i, line) in lines {
        let bad = || Error::Report(format!("line {}: malformed series row '{line}'", i + 1));
        let mut parts = line.split(',');
        let (Some(e), Some(s), Some(v), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let epoch: u32 = e.trim().parse().map_err(|_| bad())?;
        let slice = Slice::parse(s).ok_or_else(bad)?;
        let pct: f64 = v.trim().parse().map_err(|_| bad())?;
        series.entry(slice).or_default().push((epoch, pct / 100.0));
    }
    for points in series.values_mut() {
        points.sort_by_key(|p| p.0);
    }
    Ok(series)
}
