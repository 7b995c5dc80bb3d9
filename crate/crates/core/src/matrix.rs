//! Article x journal count matrix.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::JournalLexicon;
use crate::template::CitationInstance;

pub const TRIPLETS_FILE: &str = "triplets.txt";
pub const ROWS_FILE: &str = "rows.txt";
pub const COLS_FILE: &str = "cols.txt";

/// Nonnegative integer counts with labelled axes. Only positive counts are
/// stored, sorted by (row, col).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseCountMatrix {
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    entries: Vec<(usize, usize, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixStats {
    pub n_rows: usize,
    pub n_cols: usize,
    pub nnz: usize,
    pub total_count: u64,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    pub citations: u64,
    pub dropped_empty: u64,
    pub matched: u64,
    pub unmatched: u64,
}

/// Accumulates citations; rows and columns are numbered by first appearance.
#[derive(Debug)]
pub struct MatrixBuilder<'a> {
    lexicon: &'a JournalLexicon,
    rows: HashMap<String, usize>,
    cols: HashMap<String, usize>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    counts: HashMap<(usize, usize), u64>,
    diagnostics: BuildDiagnostics,
}

fn intern(map: &mut HashMap<String, usize>, labels: &mut Vec<String>, label: &str) -> usize {
    if let Some(&i) = map.get(label) {
        return i;
    }
    let i = labels.len();
    map.insert(label.to_string(), i);
    labels.push(label.to_string());
    i
}

impl<'a> MatrixBuilder<'a> {
    pub fn new(lexicon: &'a JournalLexicon) -> Self {
        MatrixBuilder {
            lexicon,
            rows: HashMap::new(),
            cols: HashMap::new(),
            row_labels: Vec::new(),
            col_labels: Vec::new(),
            counts: HashMap::new(),
            diagnostics: BuildDiagnostics::default(),
        }
    }

    pub fn push(&mut self, citation: &CitationInstance) {
        self.diagnostics.citations += 1;
        let journal = self.lexicon.normalize(&citation.raw_journal);
        if journal.name.is_empty() {
            self.diagnostics.dropped_empty += 1;
            return;
        }
        if journal.matched {
            self.diagnostics.matched += 1;
        } else {
            self.diagnostics.unmatched += 1;
        }
        let i = intern(&mut self.rows, &mut self.row_labels, &citation.article_title);
        let j = intern(&mut self.cols, &mut self.col_labels, &journal.name);
        *self.counts.entry((i, j)).or_insert(0) += 1;
    }

    pub fn diagnostics(&self) -> BuildDiagnostics {
        self.diagnostics
    }

    pub fn finish(self) -> SparseCountMatrix {
        let mut entries: Vec<_> = self.counts.into_iter().map(|((i, j), c)| (i, j, c)).collect();
        entries.sort_unstable();
        SparseCountMatrix {
            row_labels: self.row_labels,
            col_labels: self.col_labels,
            entries,
        }
    }
}

pub fn build_matrix<'c>(
    citations: impl IntoIterator<Item = &'c CitationInstance>,
    lexicon: &JournalLexicon,
) -> SparseCountMatrix {
    let mut builder = MatrixBuilder::new(lexicon);
    for c in citations {
        builder.push(c);
    }
    builder.finish()
}

impl SparseCountMatrix {
    /// Builds from labelled triplets; duplicate coordinates are summed and
    /// zero counts are dropped.
    pub fn from_triplets(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        triplets: impl IntoIterator<Item = (usize, usize, u64)>,
    ) -> Result<Self> {
        check_unique(&row_labels, "row")?;
        check_unique(&col_labels, "column")?;
        let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
        for (i, j, c) in triplets {
            if i >= row_labels.len() || j >= col_labels.len() {
                return Err(Error::ShapeMismatch(format!(
                    "entry ({i}, {j}) outside shape ({}, {})",
                    row_labels.len(),
                    col_labels.len()
                )));
            }
            if c > 0 {
                *counts.entry((i, j)).or_insert(0) += c;
            }
        }
        let mut entries: Vec<_> = counts.into_iter().map(|((i, j), c)| (i, j, c)).collect();
        entries.sort_unstable();
        Ok(SparseCountMatrix {
            row_labels,
            col_labels,
            entries,
        })
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    /// Stored entries sorted by (row, col).
    pub fn entries(&self) -> &[(usize, usize, u64)] {
        &self.entries
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.row_labels.len(), self.col_labels.len())
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.entries
            .binary_search_by(|&(i, j, _)| (i, j).cmp(&(row, col)))
            .map_or(0, |idx| self.entries[idx].2)
    }

    /// Count looked up by labels.
    pub fn count(&self, article: &str, journal: &str) -> u64 {
        let i = self.row_labels.iter().position(|r| r == article);
        let j = self.col_labels.iter().position(|c| c == journal);
        match (i, j) {
            (Some(i), Some(j)) => self.get(i, j),
            _ => 0,
        }
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn stats(&self) -> MatrixStats {
        let (n_rows, n_cols) = self.shape();
        let cells = n_rows * n_cols;
        MatrixStats {
            n_rows,
            n_cols,
            nnz: self.nnz(),
            total_count: self.total_count(),
            density: if cells == 0 {
                0.0
            } else {
                self.nnz() as f64 / cells as f64
            },
        }
    }

    pub fn column_sums(&self) -> Vec<u64> {
        let mut sums = vec![0; self.col_labels.len()];
        for &(_, j, c) in &self.entries {
            sums[j] += c;
        }
        sums
    }

    /// Journals by total citations, descending; ties by ascending name.
    pub fn top_cited_journals(&self, n: usize) -> Vec<(String, u64)> {
        let mut ranked: Vec<(String, u64)> =
            self.col_labels.iter().cloned().zip(self.column_sums()).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(n);
        ranked
    }

    /// Drops the named columns and any rows left empty. Returns the reduced
    /// matrix and the names that matched no column.
    pub fn exclude_journals(&self, names: &[String]) -> (SparseCountMatrix, Vec<String>) {
        let excluded: HashSet<&str> = names.iter().map(String::as_str).collect();
        let missing = names
            .iter()
            .filter(|n| !self.col_labels.contains(n))
            .cloned()
            .collect();

        let mut col_map = vec![None; self.col_labels.len()];
        let mut col_labels = Vec::new();
        for (j, label) in self.col_labels.iter().enumerate() {
            if !excluded.contains(label.as_str()) {
                col_map[j] = Some(col_labels.len());
                col_labels.push(label.clone());
            }
        }
        let kept: Vec<_> = self
            .entries
            .iter()
            .filter_map(|&(i, j, c)| col_map[j].map(|nj| (i, nj, c)))
            .collect();
        let mut row_map = vec![None; self.row_labels.len()];
        for &(i, _, _) in &kept {
            row_map[i] = Some(());
        }
        let mut row_index = vec![0; self.row_labels.len()];
        let mut row_labels = Vec::new();
        for (i, label) in self.row_labels.iter().enumerate() {
            if row_map[i].is_some() {
                row_index[i] = row_labels.len();
                row_labels.push(label.clone());
            }
        }
        let entries = kept.into_iter().map(|(i, j, c)| (row_index[i], j, c)).collect();
        (
            SparseCountMatrix {
                row_labels,
                col_labels,
                entries,
            },
            missing,
        )
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let (n_rows, n_cols) = self.shape();
        let mut indptr = vec![0; n_rows + 1];
        for &(i, _, _) in &self.entries {
            indptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices: self.entries.iter().map(|e| e.1).collect(),
            values: self.entries.iter().map(|e| e.2 as f64).collect(),
        }
    }

    /// Writes `triplets.txt`, `rows.txt` and `cols.txt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (n_rows, n_cols) = self.shape();
        let mut triplets = format!("{n_rows} {n_cols} {}\n", self.nnz());
        for &(i, j, c) in &self.entries {
            writeln!(triplets, "{i} {j} {c}").unwrap();
        }
        write_file(&dir.join(TRIPLETS_FILE), &triplets)?;
        write_labels(&dir.join(ROWS_FILE), &self.row_labels)?;
        write_labels(&dir.join(COLS_FILE), &self.col_labels)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(TRIPLETS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        let header: Vec<usize> = parse_fields(&path, lines.next().unwrap_or(""), 3)?;
        let (n_rows, n_cols, nnz) = (header[0], header[1], header[2]);
        let mut triplets = Vec::with_capacity(nnz);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<u64> = parse_fields(&path, line, 3)?;
            if f[2] == 0 {
                return Err(Error::format(&path, "stored count must be positive"));
            }
            triplets.push((f[0] as usize, f[1] as usize, f[2]));
        }
        if triplets.len() != nnz {
            return Err(Error::format(
                &path,
                format!("header declares {nnz} entries, found {}", triplets.len()),
            ));
        }
        let row_labels = read_labels(&dir.join(ROWS_FILE))?;
        let col_labels = read_labels(&dir.join(COLS_FILE))?;
        if row_labels.len() != n_rows || col_labels.len() != n_cols {
            return Err(Error::format(&path, "label files disagree with the header shape"));
        }
        let m = SparseCountMatrix::from_triplets(row_labels, col_labels, triplets)?;
        if m.nnz() != nnz {
            return Err(Error::format(&path, "duplicate coordinates"));
        }
        Ok(m)
    }
}

fn check_unique(labels: &[String], axis: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Error::InvalidArgument(format!("duplicate {axis} label {l:?}")));
        }
    }
    Ok(())
}

fn parse_fields<T: std::str::FromStr>(path: &Path, line: &str, n: usize) -> Result<Vec<T>> {
    let fields: Vec<T> = line
        .split_whitespace()
        .map(|f| f.parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::format(path, format!("bad line {line:?}")))?;
    if fields.len() != n {
        return Err(Error::format(path, format!("expected {n} fields in {line:?}")));
    }
    Ok(fields)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_labels(path: &Path, labels: &[String]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        out.push_str(l);
        out.push('\n');
    }
    write_file(path, &out)
}

pub(crate) fn read_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Compressed sparse rows over `f64`, the numeric view used by the factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Keeps the nonzero entries of a dense matrix.
    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let (n_rows, n_cols) = dense.dim();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in dense.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}
