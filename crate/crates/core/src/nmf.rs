//! Non-negative matrix factorization `X ≈ WH` with the Euclidean
//! multiplicative update rules.
//!
//! `X` is only ever touched through its stored entries. The dense `WH`
//! product is never formed: the updates and the reconstruction error are
//! expressed through `WᵀX`, `XHᵀ` and the two `k × k` Gram matrices.
//!
//! All accumulations run in a fixed row-major order, so a factorization is
//! bit-reproducible for a given input, `k`, iteration count and seed.

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{read_labels, write_labels, CsrMatrix, COLS_FILE, ROWS_FILE};

pub const DEFAULT_ITERATIONS: usize = 50_000;
pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    /// Full sweeps (one H update followed by one W update).
    pub iterations: usize,
    /// Added to every update denominator. With 0.0, entries whose
    /// denominator vanishes are set to zero.
    pub epsilon: f64,
    /// Stop early once the relative error improvement of a sweep drops
    /// below this value. `None` runs all iterations.
    pub rel_tol: Option<f64>,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            iterations: DEFAULT_ITERATIONS,
            epsilon: DEFAULT_EPSILON,
            rel_tol: None,
        }
    }
}

impl NmfConfig {
    pub fn with_iterations(iterations: usize) -> Self {
        NmfConfig {
            iterations,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel {
    pub k: usize,
    /// Article loadings, `n_rows × k`.
    pub w: Array2<f64>,
    /// Journal loadings, `k × n_cols`.
    pub h: Array2<f64>,
    pub iterations_run: usize,
    /// `‖X − WH‖_F` at the stored factors.
    pub final_error: f64,
    pub seed: u64,
}

impl NmfModel {
    pub fn n_rows(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.h.ncols()
    }
}

/// Draws `W` then `H` row by row, i.i.d. uniform on (0, 1].
pub fn initialize(n_rows: usize, n_cols: usize, k: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || 1.0 - rng.random::<f64>();
    let w = Array2::from_shape_simple_fn((n_rows, k), &mut draw);
    let h = Array2::from_shape_simple_fn((k, n_cols), &mut draw);
    (w, h)
}

fn check_shapes(x: &CsrMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<()> {
    let (m, n) = x.shape();
    if w.nrows() != m || h.ncols() != n || w.ncols() != h.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "X is {m}×{n}, W is {}×{}, H is {}×{}",
            w.nrows(),
            w.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    Ok(())
}

fn standard(a: &Array2<f64>) -> Array2<f64> {
    a.as_standard_layout().into_owned()
}

/// `WᵀW`, `k × k`.
fn gram_of_columns(w: &[f64], m: usize, k: usize) -> Vec<f64> {
    let mut g = vec![0.0; k * k];
    for i in 0..m {
        let row = &w[i * k..(i + 1) * k];
        for a in 0..k {
            for b in a..k {
                g[a * k + b] += row[a] * row[b];
            }
        }
    }
    mirror_upper(&mut g, k);
    g
}

/// `HHᵀ`, `k × k`.
fn gram_of_rows(h: &[f64], k: usize, n: usize) -> Vec<f64> {
    let mut g = vec![0.0; k * k];
    for a in 0..k {
        let ra = &h[a * n..(a + 1) * n];
        for b in a..k {
            let rb = &h[b * n..(b + 1) * n];
            g[a * k + b] = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
        }
    }
    mirror_upper(&mut g, k);
    g
}

fn mirror_upper(g: &mut [f64], k: usize) {
    for a in 0..k {
        for b in 0..a {
            g[a * k + b] = g[b * k + a];
        }
    }
}

/// `WᵀX`, `k × n`, accumulated over the stored entries of X in row order.
fn wt_x(x: &CsrMatrix, w: &[f64], k: usize) -> Vec<f64> {
    let n = x.n_cols;
    let mut out = vec![0.0; k * n];
    for i in 0..x.n_rows {
        let wi = &w[i * k..(i + 1) * k];
        for (j, v) in x.row(i) {
            for c in 0..k {
                out[c * n + j] += wi[c] * v;
            }
        }
    }
    out
}

/// `XHᵀ`, `m × k`.
fn x_ht(x: &CsrMatrix, h: &[f64], k: usize) -> Vec<f64> {
    let n = x.n_cols;
    let mut out = vec![0.0; x.n_rows * k];
    for i in 0..x.n_rows {
        let oi = &mut out[i * k..(i + 1) * k];
        for (j, v) in x.row(i) {
            for c in 0..k {
                oi[c] += v * h[c * n + j];
            }
        }
    }
    out
}

#[inline]
fn update(current: f64, numerator: f64, denominator: f64, epsilon: f64) -> f64 {
    let d = denominator + epsilon;
    if d > 0.0 {
        current * numerator / d
    } else {
        0.0
    }
}

/// `H ← H ⊙ WᵀX ⊘ (WᵀWH + ε)` in place.
fn update_h(x: &CsrMatrix, w: &[f64], h: &mut [f64], k: usize, epsilon: f64) {
    let n = x.n_cols;
    let numer = wt_x(x, w, k);
    let wtw = gram_of_columns(w, x.n_rows, k);
    let mut denom = vec![0.0; k * n];
    for c in 0..k {
        let drow = &mut denom[c * n..(c + 1) * n];
        for l in 0..k {
            let g = wtw[c * k + l];
            let hl = &h[l * n..(l + 1) * n];
            for (d, &hv) in drow.iter_mut().zip(hl) {
                *d += g * hv;
            }
        }
    }
    for ((hv, &num), &den) in h.iter_mut().zip(&numer).zip(&denom) {
        *hv = update(*hv, num, den, epsilon);
    }
}

/// `W ← W ⊙ XHᵀ ⊘ (WHHᵀ + ε)` in place.
fn update_w(x: &CsrMatrix, w: &mut [f64], h: &[f64], k: usize, epsilon: f64) {
    let numer = x_ht(x, h, k);
    let hht = gram_of_rows(h, k, x.n_cols);
    let mut denom = vec![0.0; x.n_rows * k];
    for i in 0..x.n_rows {
        let wi = &w[i * k..(i + 1) * k];
        for c in 0..k {
            let mut s = 0.0;
            for l in 0..k {
                s += wi[l] * hht[l * k + c];
            }
            denom[i * k + c] = s;
        }
    }
    for ((wv, &num), &den) in w.iter_mut().zip(&numer).zip(&denom) {
        *wv = update(*wv, num, den, epsilon);
    }
}

/// Above this many multiply-adds (`m·n·k`) the error uses the Gram expansion
/// instead of explicit residuals.
const DIRECT_ERROR_LIMIT: usize = 1 << 24;

fn squared_error(x: &CsrMatrix, w: &[f64], h: &[f64], k: usize) -> f64 {
    let (m, n) = (x.n_rows, x.n_cols);
    if m.saturating_mul(n).saturating_mul(k) <= DIRECT_ERROR_LIMIT {
        squared_error_direct(x, w, h, k)
    } else {
        squared_error_gram(x, w, h, k)
    }
}

/// `Σ (X − WH)²` over every cell. Exact near zero error.
fn squared_error_direct(x: &CsrMatrix, w: &[f64], h: &[f64], k: usize) -> f64 {
    let n = x.n_cols;
    let mut wh = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..x.n_rows {
        let wi = &w[i * k..(i + 1) * k];
        wh.iter_mut().for_each(|v| *v = 0.0);
        for (c, &wv) in wi.iter().enumerate() {
            for (acc, &hv) in wh.iter_mut().zip(&h[c * n..(c + 1) * n]) {
                *acc += wv * hv;
            }
        }
        for (j, v) in x.row(i) {
            wh[j] -= v;
        }
        total += wh.iter().map(|r| r * r).sum::<f64>();
    }
    total
}

/// `‖X‖² − 2⟨X, WH⟩ + tr(WᵀW · HHᵀ)`, touching only stored entries of X.
/// Loses relative precision once the error is below about 1e-8 ‖X‖.
fn squared_error_gram(x: &CsrMatrix, w: &[f64], h: &[f64], k: usize) -> f64 {
    let n = x.n_cols;
    let mut cross = 0.0;
    for i in 0..x.n_rows {
        let wi = &w[i * k..(i + 1) * k];
        for (j, v) in x.row(i) {
            let mut wh = 0.0;
            for c in 0..k {
                wh += wi[c] * h[c * n + j];
            }
            cross += v * wh;
        }
    }
    let wtw = gram_of_columns(w, x.n_rows, k);
    let hht = gram_of_rows(h, k, n);
    let wh_sq: f64 = wtw.iter().zip(&hht).map(|(a, b)| a * b).sum();
    (x.frobenius_sq() - 2.0 * cross + wh_sq).max(0.0)
}

/// One full sweep: H is updated first, then W using the new H.
pub fn multiplicative_step(
    x: &CsrMatrix,
    w: &Array2<f64>,
    h: &Array2<f64>,
    epsilon: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_shapes(x, w, h)?;
    let k = w.ncols();
    let mut w = standard(w);
    let mut h = standard(h);
    {
        let ws = w.as_slice_mut().expect("standard layout");
        let hs = h.as_slice_mut().expect("standard layout");
        update_h(x, ws, hs, k, epsilon);
        update_w(x, ws, hs, k, epsilon);
    }
    Ok((w, h))
}

/// `‖X − WH‖_F`.
pub fn reconstruction_error(x: &CsrMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<f64> {
    check_shapes(x, w, h)?;
    let w = standard(w);
    let h = standard(h);
    Ok(squared_error(x, w.as_slice().unwrap(), h.as_slice().unwrap(), w.ncols()).sqrt())
}

/// Single seeded run at a fixed `k`.
pub fn factorize(x: &CsrMatrix, k: usize, config: &NmfConfig, seed: u64) -> Result<NmfModel> {
    if x.nnz() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let max = x.n_rows.min(x.n_cols);
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > max {
        return Err(Error::RankTooLarge { k, max });
    }
    if config.iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    let (mut w, mut h) = initialize(x.n_rows, x.n_cols, k, seed);
    let mut iterations_run = 0;
    {
        let ws = w.as_slice_mut().unwrap();
        let hs = h.as_slice_mut().unwrap();
        let mut previous = config.rel_tol.map(|_| squared_error(x, ws, hs, k).sqrt());
        for _ in 0..config.iterations {
            update_h(x, ws, hs, k, config.epsilon);
            update_w(x, ws, hs, k, config.epsilon);
            iterations_run += 1;
            if let (Some(tol), Some(prev)) = (config.rel_tol, previous) {
                let err = squared_error(x, ws, hs, k).sqrt();
                if prev <= 0.0 || (prev - err) / prev < tol {
                    break;
                }
                previous = Some(err);
            }
        }
    }
    let final_error = reconstruction_error(x, &w, &h)?;
    Ok(NmfModel {
        k,
        w,
        h,
        iterations_run,
        final_error,
        seed,
    })
}

/// One independent run per `k`, seeded with `seed + k`, returned in `k`
/// order. Runs execute concurrently on up to `jobs` threads (rayon's
/// default pool when `None`); the output does not depend on scheduling.
pub fn sweep_model_sizes(
    x: &CsrMatrix,
    k_range: RangeInclusive<usize>,
    config: &NmfConfig,
    seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<NmfModel>> {
    let max = x.n_rows.min(x.n_cols);
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo == 0 || lo > hi {
        return Err(Error::InvalidArgument(format!("invalid k range {lo}..={hi}")));
    }
    if hi > max {
        return Err(Error::Sweep {
            k: hi,
            source: Box::new(Error::RankTooLarge { k: hi, max }),
        });
    }
    let ks: Vec<usize> = k_range.collect();
    let run = |k: &usize| {
        factorize(x, *k, config, seed.wrapping_add(*k as u64)).map_err(|e| Error::Sweep {
            k: *k,
            source: Box::new(e),
        })
    };
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            pool.install(|| ks.par_iter().map(run).collect())
        }
        None => ks.par_iter().map(run).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadingAxis {
    /// Column of W: hub articles.
    Articles,
    /// Row of H: authoritative journals.
    Journals,
}

/// Highest loadings of one cluster, descending, ties by ascending label.
pub fn top_loadings(
    model: &NmfModel,
    cluster: usize,
    axis: LoadingAxis,
    n: usize,
    labels: &[String],
) -> Result<Vec<(String, f64)>> {
    if cluster >= model.k {
        return Err(Error::IndexOutOfRange {
            index: cluster,
            len: model.k,
        });
    }
    let loadings: Vec<f64> = match axis {
        LoadingAxis::Articles => model.w.column(cluster).to_vec(),
        LoadingAxis::Journals => model.h.row(cluster).to_vec(),
    };
    if loadings.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for an axis of length {}",
            labels.len(),
            loadings.len()
        )));
    }
    let mut ranked: Vec<(String, f64)> = labels.iter().cloned().zip(loadings).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    Ok(ranked)
}

pub const MODEL_HEADER_FILE: &str = "header.json";
pub const W_FILE: &str = "W.f64";
pub const H_FILE: &str = "H.f64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub k: usize,
    pub n_rows: usize,
    pub n_cols: usize,
    pub seed: u64,
    pub iterations: usize,
    pub final_error: f64,
}

/// A model together with the axis labels it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub model: NmfModel,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

pub fn model_dir_name(k: usize) -> String {
    format!("k{k:02}")
}

fn write_f64s(path: &Path, a: &Array2<f64>) -> Result<()> {
    let bytes: Vec<u8> = standard(a).iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f64s(path: &Path, shape: (usize, usize)) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != shape.0 * shape.1 * 8 {
        return Err(Error::format(
            path,
            format!("expected {}×{} f64 values", shape.0, shape.1),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec(shape, values).expect("length checked"))
}

/// Writes one model into `dir`: JSON header, little-endian W and H, labels.
pub fn save_model(model: &NmfModel, dir: &Path, row_labels: &[String], col_labels: &[String]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = ModelHeader {
        k: model.k,
        n_rows: model.n_rows(),
        n_cols: model.n_cols(),
        seed: model.seed,
        iterations: model.iterations_run,
        final_error: model.final_error,
    };
    let json = serde_json::to_string_pretty(&header).expect("header serializes") + "\n";
    let path = dir.join(MODEL_HEADER_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    write_f64s(&dir.join(W_FILE), &model.w)?;
    write_f64s(&dir.join(H_FILE), &model.h)?;
    write_labels(&dir.join(ROWS_FILE), row_labels)?;
    write_labels(&dir.join(COLS_FILE), col_labels)
}

pub fn load_model(dir: &Path) -> Result<StoredModel> {
    let path = dir.join(MODEL_HEADER_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header: ModelHeader = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    let w = read_f64s(&dir.join(W_FILE), (header.n_rows, header.k))?;
    let h = read_f64s(&dir.join(H_FILE), (header.k, header.n_cols))?;
    let row_labels = read_labels(&dir.join(ROWS_FILE))?;
    let col_labels = read_labels(&dir.join(COLS_FILE))?;
    if row_labels.len() != header.n_rows || col_labels.len() != header.n_cols {
        return Err(Error::format(dir, "label files disagree with the model shape"));
    }
    Ok(StoredModel {
        model: NmfModel {
            k: header.k,
            w,
            h,
            iterations_run: header.iterations,
            final_error: header.final_error,
            seed: header.seed,
        },
        row_labels,
        col_labels,
    })
}

/// Writes each model to `<dir>/kNN/`.
pub fn save_models(
    models: &[NmfModel],
    dir: &Path,
    row_labels: &[String],
    col_labels: &[String],
) -> Result<Vec<PathBuf>> {
    models
        .iter()
        .map(|m| {
            let sub = dir.join(model_dir_name(m.k));
            save_model(m, &sub, row_labels, col_labels).map(|_| sub)
        })
        .collect()
}

/// Loads every `kNN` subdirectory of `dir`, ordered by k.
pub fn load_models(dir: &Path) -> Result<Vec<StoredModel>> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(k) = name.strip_prefix('k').and_then(|s| s.parse::<usize>().ok()) {
            if entry.path().is_dir() {
                found.push((k, entry.path()));
            }
        }
    }
    found.sort();
    found.iter().map(|(_, p)| load_model(p)).collect()
}
