//! Small dense helpers shared by the reducers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::seed;

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// `x` with `mean` subtracted from every row.
pub fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    out
}

/// Sample covariance (denominator `n - 1`) of already-centered rows.
pub fn covariance(centered: &DMatrix<f64>) -> DMatrix<f64> {
    let denom = (centered.nrows().max(2) - 1) as f64;
    let mut c = centered.tr_mul(centered);
    c /= denom;
    c.fill_lower_triangle_with_upper_triangle();
    c
}

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing, eigenvectors
/// as columns.
pub fn symmetric_eigen_desc(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Flip each row so that its entry of largest magnitude is positive.
pub fn fix_row_signs(rows: &mut DMatrix<f64>) {
    for mut row in rows.row_iter_mut() {
        let mut best = 0usize;
        for j in 1..row.len() {
            if row[j].abs() > row[best].abs() {
                best = j;
            }
        }
        if row.len() > 0 && row[best] < 0.0 {
            row.neg_mut();
        }
    }
}

/// Orthonormal basis for the columns of `a` (thin QR).
fn orthonormalize(a: DMatrix<f64>) -> DMatrix<f64> {
    a.qr().q()
}

/// Top-`k` right singular vectors (as rows) and singular values of `a`,
/// via a randomized range finder with `oversample` extra columns and
/// `power_iters` subspace iterations.
pub fn randomized_svd(
    a: &DMatrix<f64>,
    k: usize,
    oversample: usize,
    power_iters: usize,
    rng_seed: u64,
) -> (DMatrix<f64>, DVector<f64>) {
    let (n, d) = a.shape();
    let l = (k + oversample).min(n).min(d);
    let mut rng = seed::rng(rng_seed);
    let omega = DMatrix::from_fn(d, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(a * omega);
    for _ in 0..power_iters {
        let z = orthonormalize(a.tr_mul(&q));
        q = orthonormalize(a * z);
    }
    let b = q.tr_mul(a);
    let svd = b.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let k = k.min(order.len());
    let rows: Vec<_> = order[..k].iter().map(|&i| v_t.row(i).into_owned()).collect();
    let values = DVector::from_iterator(k, order[..k].iter().map(|&i| svd.singular_values[i]));
    (DMatrix::from_rows(&rows), values)
}

/// Max absolute entry of `a * a^T - I`.
pub fn orthonormality_error(rows: &DMatrix<f64>) -> f64 {
    let g = rows * rows.transpose();
    let mut worst = 0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}
