//! Vector dataset ingestion and layout persistence.
//!
//! Two input formats are supported: headerless little-endian `f32` dumps
//! (row-major, shape supplied by the caller) and plain numeric CSV. Layouts
//! are written as CSV with an `id,x,y[,label]` header and reload bit-exactly.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{NomadError, Result};

/// On-disk encoding of a vector dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VectorFormat {
    /// Little-endian binary32, row-major, no header.
    #[value(name = "raw-f32")]
    RawF32,
    /// Comma-separated numeric table, no header.
    Csv,
}

impl FromStr for VectorFormat {
    type Err = NomadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw-f32" | "f32" | "raw" => Ok(VectorFormat::RawF32),
            "csv" => Ok(VectorFormat::Csv),
            other => Err(NomadError::param(format!("unknown vector format `{other}`"))),
        }
    }
}

/// An `n x d` matrix of high-dimensional vectors with identifiers and
/// optional categorical labels.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    data: Vec<f32>,
    n: usize,
    d: usize,
    ids: Vec<String>,
    labels: Option<Vec<String>>,
}

impl VectorDataset {
    /// Builds a dataset from row-major values. Ids default to the row index.
    pub fn new(data: Vec<f32>, n: usize, d: usize) -> Result<Self> {
        if n < 2 {
            return Err(NomadError::Dimension(format!(
                "a dataset needs at least 2 rows, got {n}"
            )));
        }
        if d < 1 {
            return Err(NomadError::Dimension(
                "a dataset needs at least 1 column".into(),
            ));
        }
        if data.len() != n * d {
            return Err(NomadError::Dimension(format!(
                "{} values cannot form a {n} x {d} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(NomadError::Validation {
                row: pos / d,
                column: pos % d,
                message: format!("non-finite value {}", data[pos]),
            });
        }
        let ids = (0..n).map(|i| i.to_string()).collect();
        Ok(Self {
            data,
            n,
            d,
            ids,
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(NomadError::Dimension(format!(
                "row {i} has {} columns, expected {d}",
                r.len()
            )));
        }
        Self::new(rows.concat(), rows.len(), d)
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(NomadError::Dimension(format!(
                "{} ids for {} rows",
                ids.len(),
                self.n
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(NomadError::param(format!("duplicate id `{id}`")));
            }
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(NomadError::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Squared Euclidean distance between rows `i` and `j`, accumulated in f64.
    #[inline]
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_dist_f32(self.row(i), self.row(j))
    }
}

#[inline]
fn sq_dist_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let t = f64::from(x) - f64::from(y);
            t * t
        })
        .sum()
}

/// Learned 2-D positions, one row per dataset point.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutMatrix {
    pub positions: Vec<[f64; 2]>,
    pub epoch: usize,
}

impl LayoutMatrix {
    pub fn new(positions: Vec<[f64; 2]>) -> Self {
        Self {
            positions,
            epoch: 0,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .all(|p| p[0].is_finite() && p[1].is_finite())
    }
}

/// A layout reloaded from disk together with its point metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedLayout {
    pub layout: LayoutMatrix,
    pub ids: Vec<String>,
    pub labels: Option<Vec<String>>,
}

pub fn load_vectors(
    path: impl AsRef<Path>,
    format: VectorFormat,
    rows: Option<usize>,
    dims: Option<usize>,
) -> Result<VectorDataset> {
    let path = path.as_ref();
    match format {
        VectorFormat::RawF32 => load_raw_f32(path, rows, dims),
        VectorFormat::Csv => load_csv_vectors(path, rows, dims),
    }
}

fn load_raw_f32(path: &Path, rows: Option<usize>, dims: Option<usize>) -> Result<VectorDataset> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| NomadError::io(path, e))?;
    let len = bytes.len();
    let (n, d) = match (rows, dims) {
        (Some(n), Some(d)) => (n, d),
        (None, Some(d)) if d > 0 && len % (4 * d) == 0 => (len / (4 * d), d),
        (Some(n), None) if n > 0 && len % (4 * n) == 0 => (n, len / (4 * n)),
        (None, None) => {
            return Err(NomadError::Dimension(
                "raw-f32 input needs --dims (and optionally --rows)".into(),
            ))
        }
        _ => {
            return Err(NomadError::Dimension(format!(
                "{len} bytes is not a whole number of f32 rows for the given shape"
            )))
        }
    };
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| NomadError::Dimension("shape overflows".into()))?;
    if expected != len {
        return Err(NomadError::Dimension(format!(
            "{n} x {d} f32 values need {expected} bytes, file has {len}"
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    VectorDataset::new(data, n, d)
}

fn load_csv_vectors(
    path: &Path,
    rows: Option<usize>,
    dims: Option<usize>,
) -> Result<VectorDataset> {
    let file = File::open(path).map_err(|e| NomadError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let mut data = Vec::new();
    let mut width = None;
    let mut n = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(NomadError::Dimension(format!(
                "row {row} has {} columns, expected {w}",
                record.len()
            )));
        }
        for (column, field) in record.iter().enumerate() {
            let v: f32 = field.parse().map_err(|_| NomadError::Validation {
                row,
                column,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(NomadError::Validation {
                    row,
                    column,
                    message: format!("non-finite value {v}"),
                });
            }
            data.push(v);
        }
        n += 1;
    }
    let d = width.unwrap_or(0);
    if rows.is_some_and(|r| r != n) || dims.is_some_and(|c| c != d) {
        return Err(NomadError::Dimension(format!(
            "csv holds {n} x {d} values, expected {} x {}",
            rows.map_or("?".into(), |r| r.to_string()),
            dims.map_or("?".into(), |c| c.to_string()),
        )));
    }
    VectorDataset::new(data, n, d)
}

fn csv_error(path: &Path, e: csv::Error) -> NomadError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => NomadError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        NomadError::Schema(e.to_string())
    }
}

/// Reads one label per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| NomadError::io(path, e))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

pub fn save_layout(
    layout: &LayoutMatrix,
    ids: &[String],
    labels: Option<&[String]>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if ids.len() != layout.n() {
        return Err(NomadError::param(format!(
            "{} ids for a layout of {} rows",
            ids.len(),
            layout.n()
        )));
    }
    if let Some(l) = labels {
        if l.len() != layout.n() {
            return Err(NomadError::param(format!(
                "{} labels for a layout of {} rows",
                l.len(),
                layout.n()
            )));
        }
    }
    let file = File::create(path).map_err(|e| NomadError::io(path, e))?;
    write_layout(layout, ids, labels, BufWriter::new(file)).map_err(|e| csv_error(path, e))
}

/// Writes the layout CSV to any sink. Coordinates use the shortest decimal
/// form that parses back to the identical `f64`.
pub fn write_layout<W: Write>(
    layout: &LayoutMatrix,
    ids: &[String],
    labels: Option<&[String]>,
    sink: W,
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    if labels.is_some() {
        w.write_record(["id", "x", "y", "label"])?;
    } else {
        w.write_record(["id", "x", "y"])?;
    }
    for (i, p) in layout.positions.iter().enumerate() {
        let x = p[0].to_string();
        let y = p[1].to_string();
        match labels {
            Some(l) => w.write_record([ids[i].as_str(), &x, &y, l[i].as_str()])?,
            None => w.write_record([ids[i].as_str(), &x, &y])?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_layout(path: impl AsRef<Path>) -> Result<LoadedLayout> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| NomadError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id_col), Some(x_col), Some(y_col)) = (col("id"), col("x"), col("y")) else {
        return Err(NomadError::Schema(format!(
            "layout header must contain id,x,y; found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    };
    let label_col = col("label");

    let mut positions = Vec::new();
    let mut ids = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let coord = |column: usize| -> Result<f64> {
            let field = record.get(column).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| NomadError::Validation {
                row,
                column,
                message: format!("`{field}` is not a number"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(NomadError::Validation {
                    row,
                    column,
                    message: format!("non-finite coordinate {v}"),
                })
            }
        };
        positions.push([coord(x_col)?, coord(y_col)?]);
        ids.push(record.get(id_col).unwrap_or("").to_string());
        if let (Some(c), Some(l)) = (label_col, labels.as_mut()) {
            l.push(record.get(c).unwrap_or("").to_string());
        }
    }
    if positions.is_empty() {
        return Err(NomadError::Schema("layout file has no rows".into()));
    }
    Ok(LoadedLayout {
        layout: LayoutMatrix::new(positions),
        ids,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    #[test]
    fn raw_f32_shape_from_flags() {
        let vals: Vec<u8> = [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        assert_eq!(vals.len(), 24);
        let f = write_tmp(&vals);
        let ds = load_vectors(f.path(), VectorFormat::RawF32, Some(3), Some(2)).unwrap();
        assert_eq!((ds.n(), ds.dims()), (3, 2));
        assert_eq!(ds.row(2), &[5.0, 6.0]);
        assert_eq!(ds.ids()[1], "1");
    }

    #[test]
    fn raw_f32_size_mismatch() {
        let f = write_tmp(&[0u8; 25]);
        let err = load_vectors(f.path(), VectorFormat::RawF32, Some(3), Some(2)).unwrap_err();
        assert!(matches!(err, NomadError::Dimension(_)), "{err}");
    }

    #[test]
    fn raw_f32_rejects_nan_with_location() {
        let vals: Vec<u8> = [1.0f32, 2.0, f32::NAN, 4.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let f = write_tmp(&vals);
        let err = load_vectors(f.path(), VectorFormat::RawF32, None, Some(2)).unwrap_err();
        match err {
            NomadError::Validation { row, column, .. } => assert_eq!((row, column), (1, 0)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_parse() {
        let f = write_tmp(b"1.0,2.0\n3.0,4.0");
        let ds = load_vectors(f.path(), VectorFormat::Csv, None, None).unwrap();
        assert_eq!((ds.n(), ds.dims()), (2, 2));
        assert_eq!(ds.row(0), &[1.0, 2.0]);
        assert_eq!(ds.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_rejects_inf_and_ragged() {
        let f = write_tmp(b"1,2\n3,inf\n");
        match load_vectors(f.path(), VectorFormat::Csv, None, None).unwrap_err() {
            NomadError::Validation { row, column, .. } => assert_eq!((row, column), (1, 1)),
            other => panic!("unexpected {other}"),
        }
        let f = write_tmp(b"1,2\n3\n");
        assert!(matches!(
            load_vectors(f.path(), VectorFormat::Csv, None, None),
            Err(NomadError::Dimension(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_vectors("/nonexistent/x.f32", VectorFormat::RawF32, Some(1), Some(1))
            .unwrap_err();
        assert!(matches!(err, NomadError::Io { .. }));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let ds = VectorDataset::new(vec![0.0, 1.0], 2, 1).unwrap();
        assert!(ds.with_ids(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn single_point_layout_file() {
        let mut buf = Vec::new();
        let layout = LayoutMatrix::new(vec![[0.0, 0.0]]);
        write_layout(&layout, &["0".to_string()], None, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "id,x,y\n0,0,0\n");
    }

    #[test]
    fn save_rejects_mismatched_ids() {
        let dir = tempfile::tempdir().unwrap();
        let layout = LayoutMatrix::new(vec![[0.0, 0.0], [1.0, 1.0]]);
        let err = save_layout(&layout, &["0".to_string()], None, dir.path().join("l.csv"))
            .unwrap_err();
        assert!(matches!(err, NomadError::Parameter(_)));
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        let layout = LayoutMatrix::new(vec![[0.5, -1.25], [3.0, 1e-7]]);
        let ids = vec!["a".to_string(), "b,c".to_string()];
        let labels = vec!["x".to_string(), "y".to_string()];
        save_layout(&layout, &ids, Some(&labels), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id,x,y,label\n"));
        let back = load_layout(&path).unwrap();
        assert_eq!(back.layout.positions, layout.positions);
        assert_eq!(back.ids, ids);
        assert_eq!(back.labels.as_deref(), Some(&labels[..]));
    }

    #[test]
    fn missing_columns_schema_error() {
        let f = write_tmp(b"x,y\n1,2\n");
        assert!(matches!(load_layout(f.path()), Err(NomadError::Schema(_))));
        let f = write_tmp(b"");
        assert!(load_layout(f.path()).is_err());
    }

    proptest! {
        #[test]
        fn layout_round_trip_is_bit_exact(
            pts in prop::collection::vec(
                (any::<f64>().prop_filter("finite", |v| v.is_finite()),
                 -1e12f64..1e12), 1..40)
        ) {
            let layout = LayoutMatrix::new(pts.iter().map(|&(x, y)| [x, y]).collect());
            let ids: Vec<String> = (0..layout.n()).map(|i| i.to_string()).collect();
            let mut buf = Vec::new();
            write_layout(&layout, &ids, None, &mut buf).unwrap();
            let mut f = tempfile::NamedTempFile::new().unwrap();
            f.write_all(&buf).unwrap();
            let back = load_layout(f.path()).unwrap();
            for (a, b) in back.layout.positions.iter().zip(&layout.positions) {
                prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
                prop_assert_eq!(a[1].to_bits(), b[1].to_bits());
            }
        }
    }
}
