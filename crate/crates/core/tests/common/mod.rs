//! Independent dense oracles and fixture helpers shared by the test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn random_matrix(m: usize, n: usize, seed: u64, density: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((m, n), || {
        if rng.random::<f64>() < density {
            rng.random_range(0.0..5.0)
        } else {
            0.0
        }
    })
}

pub fn random_positive(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((m, n), || rng.random_range(0.1..1.0))
}

/// Plain triple loop, no library routines.
pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (m, k) = a.dim();
    let n = b.ncols();
    assert_eq!(b.nrows(), k);
    let mut c = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..k {
                s += a[[i, l]] * b[[l, j]];
            }
            c[[i, j]] = s;
        }
    }
    c
}

/// ‖X − WH‖_F by explicit residuals.
pub fn dense_error(x: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let wh = matmul(w, h);
    x.iter()
        .zip(wh.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn ratio_update(cur: &Array2<f64>, num: &Array2<f64>, den: &Array2<f64>, eps: f64) -> Array2<f64> {
    let mut out = cur.clone();
    for ((o, n), d) in out.iter_mut().zip(num.iter()).zip(den.iter()) {
        let d = d + eps;
        *o = if d > 0.0 { *o * n / d } else { 0.0 };
    }
    out
}

/// Lee–Seung Euclidean step on dense arrays: H first, then W with the new H.
pub fn dense_step(x: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>, eps: f64) -> (Array2<f64>, Array2<f64>) {
    let wt = w.t().to_owned();
    let h_num = matmul(&wt, x);
    let h_den = matmul(&matmul(&wt, w), h);
    let h_new = ratio_update(h, &h_num, &h_den, eps);
    let ht = h_new.t().to_owned();
    let w_num = matmul(x, &ht);
    let w_den = matmul(w, &matmul(&h_new, &ht));
    let w_new = ratio_update(w, &w_num, &w_den, eps);
    (w_new, h_new)
}

pub fn max_rel_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .fold(0.0, f64::max)
}

/// Hand-counted matrix of `fixtures/sample-pages-articles.xml` with
/// `fixtures/journals.xml`.
pub const FIXTURE_COUNTS: &[(&str, &str, u64)] = &[
    ("Uranus", "Icarus", 2),
    ("Uranus", "Science", 1),
    ("Uranus", "The Astrophysical Journal", 1),
    ("Myocardial infarction", "The Lancet", 2),
    ("Myocardial infarction", "The New England Journal of Medicine", 2),
    ("Papillomavirus", "The Journal of Virology", 2),
    ("Papillomavirus", "Virology", 1),
    ("Papillomavirus", "Nature", 1),
    ("Papillomavirus", "Oncogene", 1),
    ("RBL2", "Oncogene", 2),
    ("RBL2", "The Journal of Biological Chemistry", 2),
    ("RBL2", "Cancer Research", 1),
    ("RBL2", "PNAS", 2),
    ("Extinction (astronomy)", "The Astrophysical Journal", 2),
    ("Extinction (astronomy)", "Astronomy & Astrophysics", 2),
    ("CD34", "Blood", 2),
    ("CD34", "The Journal of Experimental Medicine", 1),
    (
        "CD34",
        "Proceedings of the Royal Society of London, Series B, Biological Sciences",
        2,
    ),
    ("Henry George Fourcade", "The Photogrammetric Record", 1),
    ("Henry George Fourcade", "Photogrammetric Record", 1),
    (
        "Solute carrier family",
        "Pflügers Archiv European Journal of Physiology",
        2,
    ),
    ("Solute carrier family", "The Journal of Biological Chemistry", 1),
    ("Solute carrier family", "Gene", 2),
];
