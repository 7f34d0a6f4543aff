//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

pub fn to_f32(x: &Array2<f64>) -> Array2<f32> {
    x.mapv(|v| v as f32)
}

/// One acceptance line on the unbuffered stderr handle, so it shows without `--nocapture`.
pub fn report(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {criterion}: {detail}");
}

pub fn report_not_run(criterion: &str, why: &str) {
    let _ = writeln!(std::io::stderr(), "[NOT RUN] {criterion}: {why}");
}

/// HSIC with every product written out: zeroed diagonals, `K̃L̃` by explicit
/// triple loop, then the unbiased combination of trace, total sums and `1ᵀK̃L̃1`.
pub fn hsic_double_loop(k: ArrayView2<f64>, l: ArrayView2<f64>) -> f64 {
    let n = k.nrows();
    let kt = |i: usize, j: usize| if i == j { 0.0 } else { k[[i, j]] };
    let lt = |i: usize, j: usize| if i == j { 0.0 } else { l[[i, j]] };
    let mut kl = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                kl[i][j] += kt(i, m) * lt(m, j);
            }
        }
    }
    let trace: f64 = (0..n).map(|i| kl[i][i]).sum();
    let (mut sk, mut sl) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            sk += kt(i, j);
            sl += lt(i, j);
        }
    }
    let one_kl_one: f64 = kl.iter().flatten().sum();
    let nf = n as f64;
    (trace + sk * sl / ((nf - 1.0) * (nf - 2.0)) - 2.0 / (nf - 2.0) * one_kl_one) / (nf * (nf - 3.0))
}

/// HSIC as a U-statistic over ordered 4-tuples of distinct indices:
/// `Σ k_ij (l_ij + l_qr − 2 l_iq) / (n)_4`.
pub fn hsic_u_statistic(k: ArrayView2<f64>, l: ArrayView2<f64>) -> f64 {
    let n = k.nrows();
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            for q in (0..n).filter(|&q| q != i && q != j) {
                for r in (0..n).filter(|&r| r != i && r != j && r != q) {
                    total += k[[i, j]] * (l[[i, j]] + l[[q, r]] - 2.0 * l[[i, q]]);
                    count += 1.0;
                }
            }
        }
    }
    total / count
}

/// Linear CKA of one batch holding every row.
pub fn single_batch_cka(x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    let k = x.dot(&x.t());
    let l = y.dot(&y.t());
    hsic_double_loop(k.view(), l.view()) / (hsic_double_loop(k.view(), k.view()) * hsic_double_loop(l.view(), l.view())).sqrt()
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let g = normal_matrix(rng, d, d);
    let mut q = Array2::<f64>::zeros((d, d));
    for c in 0..d {
        let mut v = g.column(c).to_owned();
        for p in 0..c {
            let proj = q.column(p).dot(&v);
            v = &v - &(&q.column(p) * proj);
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(c).assign(&(v / norm));
    }
    q
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &Array2<f64>, h: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for idx in ndarray::indices(x.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let up = f(&probe);
        probe[idx] = orig - h;
        let down = f(&probe);
        probe[idx] = orig;
        g[idx] = (up - down) / (2.0 * h);
    }
    g
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt().max(b.mapv(|v| v * v).sum().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Exhaustive-count accuracy and agreement.
pub fn count_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let mut hits = 0usize;
    for k in 0..pred.len() {
        if pred[k] == truth[k] {
            hits += 1;
        }
    }
    hits as f64 / pred.len() as f64
}

pub fn count_agreement(a: &[usize], b: &[usize], truth: &[usize]) -> f64 {
    let mut hits = 0usize;
    for k in 0..truth.len() {
        if a[k] == truth[k] && b[k] == truth[k] {
            hits += 1;
        }
    }
    hits as f64 / truth.len() as f64
}
