//! Data ingestion (CSV) and trace persistence (CSV and binary), plus run
//! reporting.
//!
//! Binary trace layout (all little-endian):
//!   magic "GRAT" | u32 version = 1 | u32 column count k |
//!   k x (u16 name length, UTF-8 name bytes) |
//!   u64 row count (0xFFFF_FFFF_FFFF_FFFF while streaming, patched on finalize) |
//!   rows of k x f64

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampler::RunReport;

pub const TRACE_MAGIC: [u8; 4] = *b"GRAT";
pub const TRACE_VERSION: u32 = 1;
const ROW_COUNT_SENTINEL: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
    pub ncols: usize,
}

impl Table {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    /// Column by 0-based index.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Comma-separated numeric table; a non-numeric first line is a header.
pub fn read_csv(path: &Path) -> Result<Table> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<Table> {
    let mut headers = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ncols = 0usize;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                if rows.is_empty() && headers.is_none() {
                    ncols = vals.len();
                } else if vals.len() != ncols {
                    return Err(Error::RaggedRows {
                        line: lineno,
                        expected: ncols,
                        got: vals.len(),
                    });
                }
                rows.push(vals);
            }
            Err(e) => {
                if i == 0 {
                    headers = Some(fields.iter().map(|s| s.to_string()).collect());
                    ncols = fields.len();
                } else {
                    return Err(Error::CsvParse {
                        line: lineno,
                        msg: e.to_string(),
                    });
                }
            }
        }
    }
    Ok(Table {
        headers,
        rows,
        ncols,
    })
}

/// Streaming consumer of trace rows. The column list is fixed at creation.
pub trait TraceSink {
    fn columns(&self) -> &[String];
    fn write_row(&mut self, row: &[f64]) -> Result<()>;
    /// Flush and complete the file; further writes are an error.
    fn finalize(&mut self) -> Result<()>;
}

pub struct CsvSink {
    columns: Vec<String>,
    out: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path, columns: Vec<String>) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", columns.join(","))?;
        Ok(Self { columns, out })
    }
}

impl TraceSink for CsvSink {
    fn columns(&self) -> &[String] {
        &self.columns
    }

    fn write_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err(Error::Evaluation("NaN in trace row".into()));
        }
        let mut line = String::new();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            // `{}` prints the shortest digits that round-trip the double
            line.push_str(&format!("{v}"));
        }
        writeln!(self.out, "{line}")?;
        Ok(())
    }

    fn finalize(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub struct BinarySink {
    columns: Vec<String>,
    out: BufWriter<File>,
    count_offset: u64,
    rows_written: u64,
}

impl BinarySink {
    pub fn create(path: &Path, columns: Vec<String>) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&TRACE_MAGIC)?;
        out.write_all(&TRACE_VERSION.to_le_bytes())?;
        out.write_all(&(columns.len() as u32).to_le_bytes())?;
        let mut count_offset = 12u64;
        for name in &columns {
            let bytes = name.as_bytes();
            out.write_all(&(bytes.len() as u16).to_le_bytes())?;
            out.write_all(bytes)?;
            count_offset += 2 + bytes.len() as u64;
        }
        out.write_all(&ROW_COUNT_SENTINEL.to_le_bytes())?;
        Ok(Self {
            columns,
            out,
            count_offset,
            rows_written: 0,
        })
    }
}

impl TraceSink for BinarySink {
    fn columns(&self) -> &[String] {
        &self.columns
    }

    fn write_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        for v in row {
            self.out.write_all(&v.to_le_bytes())?;
        }
        self.rows_written += 1;
        Ok(())
    }

    fn finalize(&mut self) -> Result<()> {
        self.out.flush()?;
        let file = self.out.get_mut();
        file.seek(SeekFrom::Start(self.count_offset))?;
        file.write_all(&self.rows_written.to_le_bytes())?;
        file.seek(SeekFrom::End(0))?;
        file.flush()?;
        Ok(())
    }
}

/// Reads a binary trace. A file still carrying the streaming sentinel (the
/// writer never finalized) is read by scanning rows to end of file.
pub fn read_trace_binary(path: &Path) -> Result<Table> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.display().to_string()));
    }
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_trace_binary(&bytes)
}

/// Decodes an in-memory binary trace; see [`read_trace_binary`].
pub fn parse_trace_binary(bytes: &[u8]) -> Result<Table> {
    let mut at = 0usize;

    let take = |at: &mut usize, n: usize| -> Option<&[u8]> {
        let chunk = bytes.get(*at..*at + n)?;
        *at += n;
        Some(chunk)
    };

    let magic = take(&mut at, 4).ok_or(Error::BadMagic)?;
    if magic != TRACE_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut at, 4).ok_or(Error::TruncatedRow)?.try_into().unwrap());
    if version != TRACE_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let ncols =
        u32::from_le_bytes(take(&mut at, 4).ok_or(Error::TruncatedRow)?.try_into().unwrap()) as usize;
    let mut headers = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        let len =
            u16::from_le_bytes(take(&mut at, 2).ok_or(Error::TruncatedRow)?.try_into().unwrap())
                as usize;
        let name = take(&mut at, len).ok_or(Error::TruncatedRow)?;
        headers.push(
            std::str::from_utf8(name)
                .map_err(|_| Error::BadMagic)?
                .to_string(),
        );
    }
    let declared =
        u64::from_le_bytes(take(&mut at, 8).ok_or(Error::TruncatedRow)?.try_into().unwrap());

    let row_bytes = ncols.max(1) * 8;
    let remaining = bytes.len() - at;
    let nrows = if declared == ROW_COUNT_SENTINEL {
        if ncols == 0 {
            0
        } else {
            if remaining % row_bytes != 0 {
                return Err(Error::TruncatedRow);
            }
            remaining / row_bytes
        }
    } else {
        if ncols > 0 && remaining != declared as usize * row_bytes {
            return Err(Error::TruncatedRow);
        }
        declared as usize
    };

    let mut rows = Vec::with_capacity(nrows);
    for _ in 0..nrows {
        let mut row = Vec::with_capacity(ncols);
        for _ in 0..ncols {
            let chunk = take(&mut at, 8).ok_or(Error::TruncatedRow)?;
            row.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        rows.push(row);
    }
    Ok(Table {
        headers: Some(headers),
        rows,
        ncols,
    })
}

/// Human-readable summary of a completed run.
pub fn format_report(report: &RunReport) -> String {
    let mut out = String::new();
    if let Some(avg) = &report.functional_average {
        out.push_str("Functional average = [");
        for v in avg {
            out.push_str(&format!(" {v:.6}"));
        }
        out.push_str(" ]\n");
    }
    out.push_str("Acceptance rates:\n");
    for b in &report.blocks {
        out.push_str(&format!("  ( {} ): {:.2}\n", b.label, 100.0 * b.acceptance_rate));
        if let Some((first, delayed)) = b.stage_rates {
            out.push_str(&format!(
                "    first stage: {:.2}, delayed: {:.2}\n",
                100.0 * first,
                100.0 * delayed
            ));
        }
    }
    out
}
