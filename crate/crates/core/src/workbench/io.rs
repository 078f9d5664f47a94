use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inverse::{InverseReport, MeasurementSet};
use crate::model::Point;

/// Decimal form with 17 significant digits, enough to round-trip any `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn parse_error(path: &Path, line: u64, column: usize, message: impl std::fmt::Display) -> Error {
    Error::Parse { path: path.to_path_buf(), message: format!("line {line}, column {column}: {message}") }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_error(path))
}

/// Writes rows of reals under a fixed header.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = create(path)?;
    let io = io_error(path);
    writeln!(out, "{}", header.join(",")).map_err(&io)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let line: Vec<String> = row.into_iter().map(format_real).collect();
        writeln!(out, "{}", line.join(",")).map_err(&io)?;
    }
    out.flush().map_err(io)
}

/// A CSV table of reals: the header, then one row per record.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Reads a numeric CSV, rejecting ragged rows and non-numeric fields with
/// their line and column.
pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(io_error(path))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> =
        reader.headers().map_err(|e| parse_error(path, 1, 1, e))?.iter().map(str::to_string).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(parse_error(path, 1, 1, "missing header"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, 1, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                record.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field
                    .parse::<f64>()
                    .map_err(|_| parse_error(path, line, c + 1, format!("`{field}` is not a number ({})", header[c])))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Writes `x,y,u,h` with the background evaluated (or tabulated) at each
/// sample.
pub fn write_measurement(path: &Path, m: &MeasurementSet) -> Result<()> {
    let h = m.background_values();
    let rows = m.points.iter().zip(&m.values).zip(h).map(|((p, u), h)| vec![p[0], p[1], *u, h]);
    write_table(path, &["x", "y", "u", "h"], rows)
}

/// Samples read back from a measurement file; `h` is present when the file
/// has a fourth column.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementTable {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    pub h: Option<Vec<f64>>,
}

pub fn read_measurement(path: &Path) -> Result<MeasurementTable> {
    let table = read_table(path)?;
    let names: Vec<&str> = table.header.iter().map(String::as_str).collect();
    let with_h = match names.as_slice() {
        ["x", "y", "u"] => false,
        ["x", "y", "u", "h"] => true,
        _ => {
            return Err(parse_error(path, 1, 1, format!("expected header x,y,u[,h], found {}", table.header.join(","))))
        }
    };
    Ok(MeasurementTable {
        points: table.rows.iter().map(|r| Point::new(r[0], r[1])).collect(),
        values: table.rows.iter().map(|r| r[2]).collect(),
        h: with_h.then(|| table.rows.iter().map(|r| r[3]).collect()),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), message: format!("serialization failed: {e}") })?;
    writeln!(out).map_err(io_error(path))?;
    out.flush().map_err(io_error(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line() as u64, e.column(), e))
}

pub fn emit_report(report: &InverseReport, path: &Path) -> Result<()> {
    write_json(path, report)
}

pub fn read_report(path: &Path) -> Result<InverseReport> {
    read_json(path)
}

/// Named columns of reals for plotting, written in column order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotSeries {
    pub fn new(columns: &[&str]) -> Self {
        PlotSeries { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the columns");
        self.rows.push(row);
    }
}

pub fn emit_plotdata(series: &PlotSeries, path: &Path) -> Result<()> {
    let header: Vec<&str> = series.columns.iter().map(String::as_str).collect();
    write_table(path, &header, series.rows.iter().cloned())
}

pub fn read_plotdata(path: &Path) -> Result<PlotSeries> {
    let t = read_table(path)?;
    Ok(PlotSeries { columns: t.header, rows: t.rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HarmonicBackground;
    use proptest::prelude::*;

    fn temp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("strata-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    proptest! {
        #[test]
        fn seventeen_digits_round_trip(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            prop_assert_eq!(format_real(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        let p = temp("empty.csv");
        emit_plotdata(&PlotSeries::new(&["n", "c_n"]), &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "n,c_n\n");
        assert_eq!(read_plotdata(&p).unwrap(), PlotSeries::new(&["n", "c_n"]));
    }

    #[test]
    fn plotdata_round_trip() {
        let p = temp("series.csv");
        let mut s = PlotSeries::new(&["n", "value"]);
        s.push(vec![1.0, 0.1 + 0.2]);
        s.push(vec![2.0, -1.0 / 3.0]);
        s.push(vec![3.0, 5e-300]);
        emit_plotdata(&s, &p).unwrap();
        assert_eq!(read_plotdata(&p).unwrap(), s);
    }

    #[test]
    fn measurement_round_trip() {
        let p = temp("m.csv");
        let h = HarmonicBackground::linear_x().with_term(2, 0.3, -0.1);
        let points: Vec<Point> = (0..5).map(|k| Point::new(3.0 * (k as f64).cos(), 3.0 * (k as f64).sin())).collect();
        let values: Vec<f64> = points.iter().map(|q| h.eval(q) + 1.0 / 7.0).collect();
        let m = MeasurementSet::new(points.clone(), values.clone(), h.clone(), Point::zeros(), 2.0).unwrap();
        write_measurement(&p, &m).unwrap();
        let t = read_measurement(&p).unwrap();
        assert_eq!(t.points, points);
        assert_eq!(t.values, values);
        assert_eq!(t.h.unwrap(), m.background_values());
    }

    #[test]
    fn malformed_measurement_reports_position() {
        let p = temp("bad.csv");
        std::fs::write(&p, "x,y,u\n1,2,3\n4,oops,6\n").unwrap();
        let err = read_measurement(&p).unwrap_err().to_string();
        assert!(err.contains("line 3, column 2"), "{err}");
        std::fs::write(&p, "x,y,u\n1,2,3\n4,5\n").unwrap();
        let err = read_measurement(&p).unwrap_err().to_string();
        assert!(err.contains("line 3, column 3"), "{err}");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_measurement(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_table(Path::new("/nonexistent/strata.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/strata.csv"));
    }
}
