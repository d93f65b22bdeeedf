//! File formats: dense matrices and vectors as CSV, operators as JSON.
//!
//! Matrix CSV has one line per row and no header. A row of `n` fields is
//! read as real entries; a row of `2n` fields as `re, im` pairs. Vector CSV
//! has a `re,im` header and one entry per line.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blockop::BlockBandedOperator;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::space::SpaceSpec;
use crate::C64;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

fn parse_field(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: not a number: {s:?}")))
}

pub fn read_matrix_csv<R: Read>(reader: R) -> Result<CMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push(rec.iter().map(|f| parse_field(f, line + 1)).collect::<Result<_>>()?);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::Parse("matrix file is empty".into()));
    }
    let complex = rows[0].len() == 2 * n;
    let width = if complex { 2 * n } else { n };
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::Parse(format!(
            "row {} has {} fields; a {n}×{n} matrix needs {n} real or {} re,im fields",
            i + 1,
            r.len(),
            2 * n
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        if complex {
            C64::new(rows[i][2 * j], rows[i][2 * j + 1])
        } else {
            C64::new(rows[i][j], 0.0)
        }
    }))
}

pub fn write_matrix_csv<W: Write>(writer: W, m: &CMatrix) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.nrows() {
        let fields: Vec<String> = (0..m.ncols())
            .flat_map(|j| [m[(i, j)].re.to_string(), m[(i, j)].im.to_string()])
            .collect();
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_matrix_file(path: &Path) -> Result<CMatrix> {
    read_matrix_csv(File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?)
}

#[derive(Serialize, Deserialize)]
struct Entry {
    re: f64,
    im: f64,
}

pub fn read_vector_csv<R: Read>(reader: R) -> Result<Vec<C64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<Entry>()
        .map(|e| e.map(|e| C64::new(e.re, e.im)).map_err(Error::from))
        .collect()
}

pub fn write_vector_csv<W: Write>(writer: W, x: &[C64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for v in x {
        wtr.serialize(Entry { re: v.re, im: v.im })?;
    }
    wtr.flush()?;
    Ok(())
}

/// One nonzero block, entries row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub row: usize,
    pub col: usize,
    pub entries: Vec<C64>,
}

/// JSON form of a [`BlockBandedOperator`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorFile {
    pub space: SpaceSpec,
    pub band: usize,
    pub blocks: Vec<BlockEntry>,
}

impl From<&BlockBandedOperator> for OperatorFile {
    fn from(t: &BlockBandedOperator) -> Self {
        OperatorFile {
            space: t.space().clone(),
            band: t.band(),
            blocks: t
                .blocks()
                .map(|(&(row, col), m)| BlockEntry {
                    row,
                    col,
                    entries: m.transpose().iter().copied().collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<OperatorFile> for BlockBandedOperator {
    type Error = Error;

    fn try_from(f: OperatorFile) -> Result<Self> {
        let k = f.space.num_blocks();
        let mut blocks = Vec::with_capacity(f.blocks.len());
        for b in f.blocks {
            if b.row >= k || b.col >= k {
                return Err(Error::BlockOutOfRange {
                    index: b.row.max(b.col),
                    blocks: k,
                });
            }
            let (r, c) = (f.space.block_size(b.row), f.space.block_size(b.col));
            if b.entries.len() != r * c {
                return Err(Error::DimensionMismatch {
                    expected: r * c,
                    actual: b.entries.len(),
                });
            }
            blocks.push(((b.row, b.col), CMatrix::from_row_slice(r, c, &b.entries)));
        }
        BlockBandedOperator::new(f.space, f.band, blocks)
    }
}

pub fn read_operator_json<R: Read>(reader: R) -> Result<BlockBandedOperator> {
    let file: OperatorFile = serde_json::from_reader(reader)?;
    file.try_into()
}

pub fn write_operator_json<W: Write>(writer: W, t: &BlockBandedOperator) -> Result<()> {
    serde_json::to_writer_pretty(writer, &OperatorFile::from(t))?;
    Ok(())
}
