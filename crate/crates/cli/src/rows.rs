//! The shared CSV schema every command reads and writes.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::Deserialize;

use mcsperf_core::Regime;

use crate::error::CliError;

pub const HEADER: [&str; 7] = ["n", "c", "p", "source", "regime", "throughput", "tail_null_fraction"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Predicted,
    Simulated,
    Measured,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Predicted => "predicted",
            Source::Simulated => "simulated",
            Source::Measured => "measured",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "predicted" => Ok(Source::Predicted),
            "simulated" => Ok(Source::Simulated),
            "measured" => Ok(Source::Measured),
            other => Err(CliError::Schema(format!("unknown source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub n: usize,
    pub c: f64,
    pub p: f64,
    pub source: Source,
    pub regime: Option<Regime>,
    pub throughput: f64,
    pub tail_null_fraction: Option<f64>,
}

impl Row {
    /// Join key; values parsed from text compare by bit pattern.
    pub fn key(&self) -> (usize, u64, u64) {
        (self.n, self.c.to_bits(), self.p.to_bits())
    }

    fn fields(&self) -> [String; 7] {
        let opt = |v: Option<String>| v.unwrap_or_default();
        [
            self.n.to_string(),
            self.c.to_string(),
            self.p.to_string(),
            self.source.to_string(),
            opt(self.regime.map(|r| r.to_string())),
            self.throughput.to_string(),
            opt(self.tail_null_fraction.map(|t| t.to_string())),
        ]
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush().map_err(|e| CliError::io("writing CSV", e))?;
    Ok(())
}

#[derive(Deserialize)]
struct RawRow {
    n: usize,
    c: f64,
    p: f64,
    source: String,
    regime: Option<String>,
    throughput: f64,
    tail_null_fraction: Option<f64>,
}

/// Parses a CSV in the shared schema; `name` labels error messages.
pub fn read_rows<R: Read>(input: R, name: &str) -> Result<Vec<Row>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| CliError::Schema(format!("{name}: {e}")))?;
    if header.iter().ne(HEADER) {
        return Err(CliError::Schema(format!(
            "{name}: header is {:?}, expected {}",
            header.iter().collect::<Vec<_>>().join(","),
            HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<RawRow>().enumerate() {
        let line = i + 2;
        let raw = rec.map_err(|e| CliError::Schema(format!("{name} line {line}: {e}")))?;
        let regime = match raw.regime.as_deref() {
            None | Some("") => None,
            Some(s) => Some(s.parse::<Regime>().map_err(|e| CliError::Schema(format!("{name} line {line}: {e}")))?),
        };
        rows.push(Row {
            n: raw.n,
            c: raw.c,
            p: raw.p,
            source: raw.source.parse().map_err(|e| CliError::Schema(format!("{name} line {line}: {e}")))?,
            regime,
            throughput: raw.throughput,
            tail_null_fraction: raw.tail_null_fraction,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_empty_fields() {
        let rows = vec![
            Row {
                n: 15,
                c: 1000.0,
                p: 14990.0,
                source: Source::Predicted,
                regime: Some(Regime::Contended),
                throughput: 4.04e5 / 1075.0,
                tail_null_fraction: None,
            },
            Row {
                n: 2,
                c: 0.5,
                p: 0.0,
                source: Source::Simulated,
                regime: None,
                throughput: 123.25,
                tail_null_fraction: Some(1.0),
            },
        ];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "n,c,p,source,regime,throughput,tail_null_fraction\n\
             15,1000,14990,predicted,contended,375.8139534883721,\n\
             2,0.5,0,simulated,,123.25,1\n"
        );
        assert_eq!(read_rows(&buf[..], "t").unwrap(), rows);
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(read_rows("n,c,p\n1,2,3\n".as_bytes(), "t"), Err(CliError::Schema(_))));
        let bad_source = "n,c,p,source,regime,throughput,tail_null_fraction\n1,0,0,guessed,,1,\n";
        assert!(matches!(read_rows(bad_source.as_bytes(), "t"), Err(CliError::Schema(_))));
        let bad_number = "n,c,p,source,regime,throughput,tail_null_fraction\n1,x,0,predicted,,1,\n";
        assert!(matches!(read_rows(bad_number.as_bytes(), "t"), Err(CliError::Schema(_))));
    }
}
