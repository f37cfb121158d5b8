//! Reading and writing source matrices, and merging per-source
//! dictionaries into one union dictionary.
//!
//! CSV layout: the header holds the document ids (its first cell is
//! ignored), every other row starts with its term label. MatrixMarket files
//! are coordinate format with the term labels in a sidecar file
//! `<file>.labels`, one per line.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra_sparse::io::{load_coo_from_matrix_market_str, MatrixMarketErrorKind};
use nalgebra_sparse::CooMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{DataMode, Source, SourceDataset, SourceMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    MatrixMarket,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "mm" | "mtx" | "matrixmarket" => Ok(Self::MatrixMarket),
            other => Err(Error::InvalidArgument(format!("unknown input format {other:?}"))),
        }
    }
}

/// A source together with its own row dictionary, before merging.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSource {
    pub labels: Vec<String>,
    pub source: Source,
}

/// 17 significant digits, enough to round-trip every `f64`.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn check_value(x: f64, mode: DataMode, at: impl Fn() -> String) -> Result<f64> {
    let ok = match mode {
        DataMode::Counts => x.is_finite() && x >= 0.0 && x.fract() == 0.0,
        DataMode::Reals => x.is_finite(),
    };
    if ok {
        Ok(x)
    } else {
        Err(Error::Format(format!("{} value {x} at {}", if mode == DataMode::Counts { "non-count" } else { "non-finite" }, at())))
    }
}

fn check_unique(labels: &[String], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::Format(format!("duplicate {what} {l:?}")));
        }
    }
    Ok(())
}

pub fn read_csv<R: Read>(reader: R, name: &str, mode: DataMode) -> Result<LabeledSource> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Format(format!("{name}: {e}")))?.clone();
    let doc_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    check_unique(&doc_ids, "document id")?;
    let n = doc_ids.len();
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("{name}: {e}")))?;
        let mut cells = rec.iter();
        labels.push(cells.next().unwrap_or_default().to_owned());
        let row = cells
            .enumerate()
            .map(|(c, cell)| {
                let x: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("{name}: unparsable value {cell:?} at row {}, column {}", r + 1, c + 1)))?;
                check_value(x, mode, || format!("{name} row {}, column {}", r + 1, c + 1))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    check_unique(&labels, "row label")?;
    let mut matrix = SourceMatrix::zeros(labels.len(), n);
    for (m, row) in rows.iter().enumerate() {
        for (i, &x) in row.iter().enumerate() {
            matrix.set(m, i, x);
        }
    }
    Ok(LabeledSource { labels, source: Source { name: name.to_owned(), doc_ids, matrix } })
}

pub fn write_csv<W: Write>(writer: W, labels: &[String], source: &Source) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let x = &source.matrix;
    let header = std::iter::once("term").chain(source.doc_ids.iter().map(String::as_str));
    wtr.write_record(header).map_err(|e| Error::Format(e.to_string()))?;
    for (m, label) in labels.iter().enumerate() {
        let row = std::iter::once(label.clone()).chain((0..x.cols()).map(|i| format_value(x.get(m, i))));
        wtr.write_record(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

fn load_coo(text: &str) -> Result<CooMatrix<f64>> {
    match load_coo_from_matrix_market_str::<f64>(text) {
        Ok(coo) => Ok(coo),
        Err(e) if e.kind() == MatrixMarketErrorKind::TypeMismatch => {
            let ints = load_coo_from_matrix_market_str::<i64>(text).map_err(|e| Error::Format(e.message().to_owned()))?;
            let (r, c, v) = (ints.row_indices().to_vec(), ints.col_indices().to_vec(), ints.values().iter().map(|&x| x as f64).collect());
            CooMatrix::try_from_triplets(ints.nrows(), ints.ncols(), r, c, v).map_err(|e| Error::Format(e.to_string()))
        }
        Err(e) => Err(Error::Format(e.message().to_owned())),
    }
}

/// Reads a coordinate MatrixMarket matrix (terms × documents). Repeated
/// coordinates are summed.
pub fn read_matrix_market(text: &str, labels: Vec<String>, name: &str, mode: DataMode) -> Result<LabeledSource> {
    let coo = load_coo(text).map_err(|e| Error::Format(format!("{name}: {e}")))?;
    if coo.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{name}: {} rows but {} labels", coo.nrows(), labels.len())));
    }
    check_unique(&labels, "row label")?;
    let mut matrix = SourceMatrix::zeros(coo.nrows(), coo.ncols());
    for (r, c, &v) in coo.triplet_iter() {
        matrix.set(r, c, matrix.get(r, c) + v);
    }
    for (i, col) in (0..matrix.cols()).map(|i| (i, matrix.column(i))) {
        for (r, &v) in col.iter().enumerate() {
            check_value(v, mode, || format!("{name} ({}, {})", r + 1, i + 1))?;
        }
    }
    Ok(LabeledSource { labels, source: Source::new(name, matrix) })
}

pub fn write_matrix_market<W: Write>(mut w: W, source: &Source) -> Result<()> {
    let x = &source.matrix;
    let nnz = x.as_slice().iter().filter(|&&v| v != 0.0).count();
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {nnz}", x.rows(), x.cols())?;
    for i in 0..x.cols() {
        for (m, &v) in x.column(i).iter().enumerate() {
            if v != 0.0 {
                writeln!(w, "{} {} {}", m + 1, i + 1, format_value(v))?;
            }
        }
    }
    Ok(())
}

pub fn write_labels<W: Write>(mut w: W, labels: &[String]) -> Result<()> {
    for l in labels {
        writeln!(w, "{l}")?;
    }
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

/// Re-indexes every source into the union of their dictionaries, zero
/// filling missing rows. Identical dictionaries are kept as they are;
/// otherwise the union is sorted, which makes the result independent of
/// source order up to the order of the sources themselves.
pub fn merge_sources(parts: Vec<LabeledSource>) -> Result<SourceDataset> {
    let Some(first) = parts.first() else {
        return Err(Error::InvalidArgument("no sources".into()));
    };
    if parts.iter().all(|p| p.labels == first.labels) {
        let labels = first.labels.clone();
        return SourceDataset::new(labels, parts.into_iter().map(|p| p.source).collect());
    }
    let union: Vec<String> = parts.iter().flat_map(|p| p.labels.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let index: HashMap<&str, usize> = union.iter().enumerate().map(|(r, l)| (l.as_str(), r)).collect();
    let mut sources = Vec::with_capacity(parts.len());
    for p in &parts {
        let old = &p.source.matrix;
        let mut x = SourceMatrix::zeros(union.len(), old.cols());
        for (m, l) in p.labels.iter().enumerate() {
            let r = index[l.as_str()];
            for i in 0..old.cols() {
                x.set(r, i, old.get(m, i));
            }
        }
        sources.push(Source { name: p.source.name.clone(), doc_ids: p.source.doc_ids.clone(), matrix: x });
    }
    SourceDataset::new(union, sources)
}

fn source_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn load_source(path: &Path, format: InputFormat, mode: DataMode) -> Result<LabeledSource> {
    let name = source_name(path);
    match format {
        InputFormat::Csv => read_csv(std::fs::File::open(path)?, &name, mode),
        InputFormat::MatrixMarket => {
            let text = std::fs::read_to_string(path)?;
            let labels = std::fs::read_to_string(sidecar_path(path))?.lines().map(str::to_owned).collect();
            read_matrix_market(&text, labels, &name, mode)
        }
    }
}

pub fn load_sources(paths: &[PathBuf], format: InputFormat, mode: DataMode) -> Result<SourceDataset> {
    let parts = paths.iter().map(|p| load_source(p, format, mode)).collect::<Result<Vec<_>>>()?;
    merge_sources(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(labels: &[&str], cols: &[Vec<f64>], name: &str) -> LabeledSource {
        LabeledSource {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            source: Source::new(name, SourceMatrix::from_columns(labels.len(), cols).unwrap()),
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let src = labeled(&["x", "y"], &[vec![0.1, 1.0 / 3.0], vec![-2.5e-300, 7.0]], "s");
        let mut buf = Vec::new();
        write_csv(&mut buf, &src.labels, &src.source).unwrap();
        let back = read_csv(buf.as_slice(), "s", DataMode::Reals).unwrap();
        assert_eq!(back, src);
    }

    #[test]
    fn matrix_market_round_trip() {
        let src = labeled(&["a", "b", "c"], &[vec![1.0, 0.0, 3.0], vec![0.0, 0.0, 2.0]], "s");
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &src.source).unwrap();
        let back = read_matrix_market(std::str::from_utf8(&buf).unwrap(), src.labels.clone(), "s", DataMode::Counts).unwrap();
        assert_eq!(back.source.matrix, src.source.matrix);
    }

    #[test]
    fn integer_matrix_market_is_accepted() {
        let text = "%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 1 4\n2 2 1\n";
        let s = read_matrix_market(text, vec!["a".into(), "b".into()], "s", DataMode::Counts).unwrap();
        assert_eq!(s.source.matrix.as_slice(), &[4.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn fractional_counts_are_rejected() {
        let text = "term,d0\na,1.5\n";
        assert!(matches!(read_csv(text.as_bytes(), "s", DataMode::Counts), Err(Error::Format(_))));
        assert!(read_csv(text.as_bytes(), "s", DataMode::Reals).is_ok());
    }

    #[test]
    fn identical_dictionaries_are_untouched() {
        let a = labeled(&["z", "a"], &[vec![1.0, 2.0]], "a");
        let b = labeled(&["z", "a"], &[vec![3.0, 4.0]], "b");
        let d = merge_sources(vec![a.clone(), b]).unwrap();
        assert_eq!(d.labels, a.labels);
        assert_eq!(d.matrix(0), &a.source.matrix);
    }

    #[test]
    fn union_zero_fills() {
        let a = labeled(&["a", "b"], &[vec![1.0, 2.0]], "a");
        let b = labeled(&["b", "c"], &[vec![3.0, 4.0]], "b");
        let d = merge_sources(vec![a, b]).unwrap();
        assert_eq!(d.labels, ["a", "b", "c"]);
        assert_eq!(d.matrix(0).column(0), &[1.0, 2.0, 0.0]);
        assert_eq!(d.matrix(1).column(0), &[0.0, 3.0, 4.0]);
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let text = "term,d0\na,1\na,2\n";
        assert!(read_csv(text.as_bytes(), "s", DataMode::Counts).is_err());
    }
}
