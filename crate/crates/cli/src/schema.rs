//! Versioned CSV tables.
//!
//! The first line of every table is `# schema: trimer-csv v<N> <kind>`,
//! the second the column header.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

pub const SCHEMA_NAME: &str = "trimer-csv";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Spectral,
    Spectrum,
    Meanfield,
    Bogoliubov,
    Trajectories,
    Timeseries,
}

impl Kind {
    pub const ALL: [Kind; 6] =
        [Kind::Spectral, Kind::Spectrum, Kind::Meanfield, Kind::Bogoliubov, Kind::Trajectories, Kind::Timeseries];

    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Spectral => "spectral",
            Kind::Spectrum => "spectrum",
            Kind::Meanfield => "meanfield",
            Kind::Bogoliubov => "bogoliubov",
            Kind::Trajectories => "trajectories",
            Kind::Timeseries => "timeseries",
        }
    }
}

impl FromStr for Kind {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, SchemaError> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| SchemaError(format!("unknown table kind '{s}'")))
    }
}

/// Schema line for `kind`.
pub fn header_line(kind: Kind) -> String {
    format!("# schema: {SCHEMA_NAME} v{SCHEMA_VERSION} {}", kind.as_str())
}

/// Columns every spectral row starts with; five sector columns follow.
pub const SPECTRAL_BASE: [&str; 11] =
    ["g0", "eta", "lambda", "E0", "E1", "E2", "E3", "E4", "n_rescaled", "g2", "coskewness"];
pub const SECTOR_COLUMNS: usize = 5;

pub fn spectral_columns() -> Vec<String> {
    let mut c: Vec<String> = SPECTRAL_BASE.iter().map(|s| s.to_string()).collect();
    c.extend((0..SECTOR_COLUMNS).map(|i| format!("sector{i}")));
    c.extend(["cutoff", "worst_deficit"].map(String::from));
    c
}

pub fn trajectory_columns() -> Vec<String> {
    let mut c: Vec<String> = SPECTRAL_BASE.iter().map(|s| s.to_string()).collect();
    c.extend((0..SECTOR_COLUMNS).map(|i| format!("sector{i}")));
    c.extend(["n_stderr", "cosk_stderr", "converged", "g2_stderr", "drift", "kappa", "cutoff", "ntraj"].map(String::from));
    c
}

/// Seventeen significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_table<W: Write>(out: W, kind: Kind, columns: &[String], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut out = out;
    writeln!(out, "{}", header_line(kind))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError(pub String);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SchemaError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: Kind,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Reads a table, rejecting unknown schema names, versions and kinds.
    pub fn parse(text: &str) -> Result<Table, SchemaError> {
        let (first, rest) = text.split_once('\n').ok_or_else(|| SchemaError("missing schema line".into()))?;
        let spec = first
            .trim_end()
            .strip_prefix("# schema: ")
            .ok_or_else(|| SchemaError("first line is not a schema comment".into()))?;
        let mut parts = spec.split_whitespace();
        let (name, version, kind) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(v), Some(k), None) => (n, v, k),
            _ => return Err(SchemaError(format!("malformed schema line '{first}'"))),
        };
        if name != SCHEMA_NAME {
            return Err(SchemaError(format!("unknown schema '{name}'")));
        }
        if version != format!("v{SCHEMA_VERSION}") {
            return Err(SchemaError(format!("unsupported schema version '{version}'")));
        }
        let kind: Kind = kind.parse()?;
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
        let columns: Vec<String> =
            r.headers().map_err(|e| SchemaError(e.to_string()))?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()).map_err(|e| SchemaError(e.to_string())))
            .collect::<Result<Vec<Vec<String>>, _>>()?;
        Ok(Table { kind, columns, rows })
    }

    pub fn index(&self, name: &str) -> Result<usize, SchemaError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| SchemaError(format!("missing column '{name}'")))
    }

    /// Column as floats; empty cells become NaN.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>, SchemaError> {
        let i = self.index(name)?;
        self.rows
            .iter()
            .map(|r| {
                let s = r[i].trim();
                if s.is_empty() {
                    Ok(f64::NAN)
                } else {
                    s.parse().map_err(|_| SchemaError(format!("column '{name}': bad number '{s}'")))
                }
            })
            .collect()
    }

    pub fn strings(&self, name: &str) -> Result<Vec<&str>, SchemaError> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}
