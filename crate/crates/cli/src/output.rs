use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};
use crate::sweep::Table;

pub const SIGNIFICANT: usize = 12;

/// Decimal-dot rendering with `SIGNIFICANT` significant digits.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{:.*e}", SIGNIFICANT - 1, x);
    }
    let decimals = (SIGNIFICANT as i32 - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let err = |e: &dyn std::fmt::Display| CliError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| err(&e))?;
    tmp.write_all(bytes).map_err(|e| err(&e))?;
    tmp.persist(path).map_err(|e| err(&e.error))?;
    Ok(())
}

/// Writes the table as CSV, replacing any previous file in one step.
pub fn write_csv(table: &Table, path: &Path) -> CliResult<()> {
    if table.rows.is_empty() {
        return Err(CliError::EmptyTable);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|&x| format_value(x))).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    write_atomic(path, &bytes)
}

/// Reads a CSV written by [`write_csv`].
pub fn read_csv(path: &Path) -> CliResult<Table> {
    let err = |e: &dyn std::fmt::Display| CliError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| err(&e))?;
    let header = r.headers().map_err(|e| err(&e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| err(&e))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| err(&e)))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line plot of `columns` against column 0; a new series starts whenever
/// the x value decreases.
pub fn write_svg(table: &Table, columns: &[usize], path: &Path) -> CliResult<()> {
    if table.rows.is_empty() {
        return Err(CliError::EmptyTable);
    }
    let finite = |v: f64| v.is_finite();
    let xs: Vec<f64> = table.rows.iter().map(|r| r[0]).filter(|v| finite(*v)).collect();
    let ys: Vec<f64> = table
        .rows
        .iter()
        .flat_map(|r| columns.iter().map(move |&c| r[c]))
        .filter(|v| finite(*v))
        .collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            r#"<line x1="{MARGIN}" x2="{0}" y1="{1:.2}" y2="{1:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            WIDTH - MARGIN,
            py(0.0)
        );
    }
    for (k, &c) in columns.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        let mut prev = f64::NEG_INFINITY;
        for r in &table.rows {
            if r[0] < prev {
                series.push(Vec::new());
            }
            prev = r[0];
            if finite(r[0]) && finite(r[c]) {
                series.last_mut().unwrap().push((px(r[0]), py(r[c])));
            }
        }
        for pts in series.iter().filter(|p| p.len() > 1) {
            let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, d.join(" "));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 16.0 * (k as f64 + 1.0),
            table.header[c]
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, WIDTH / 2.0, HEIGHT - 15.0, table.header[0]);
    let _ = writeln!(s, r#"<text x="5" y="{}">{}</text>"#, MARGIN - 8.0, format_value(y1));
    let _ = writeln!(s, r#"<text x="5" y="{}">{}</text>"#, HEIGHT - MARGIN, format_value(y0));
    s.push_str("</svg>\n");
    write_atomic(path, s.as_bytes())
}
