use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg;

use super::{check_k, FitMeta, Method, Params, ReducerModel};

/// Above this width the top components come from a randomized range finder
/// instead of the dense covariance eigendecomposition.
pub const EXACT_MAX_DIMS: usize = 1024;
const RSVD_OVERSAMPLE: usize = 10;
const RSVD_POWER_ITERS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaParams {
    pub mean: DVector<f64>,
    /// `k x in_dims`, orthonormal rows.
    pub components: DMatrix<f64>,
    /// Non-increasing; `explained variance = s^2 / (n - 1)`.
    pub singular_values: DVector<f64>,
}

impl PcaParams {
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::center(x, &self.mean) * self.components.transpose()
    }

    /// Map reduced coordinates back to the input space.
    pub fn inverse_transform(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = z * &self.components;
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.mean[j]);
        }
        out
    }
}

/// Mean removal plus projection away from the top `D` principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PpaParams {
    pub mean: DVector<f64>,
    /// `D x dims`, orthonormal rows. `D` may be 0.
    pub top_components: DMatrix<f64>,
}

impl PpaParams {
    pub fn removed(&self) -> usize {
        self.top_components.nrows()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let centered = linalg::center(x, &self.mean);
        if self.removed() == 0 {
            return centered;
        }
        let proj = &centered * self.top_components.transpose();
        centered - proj * &self.top_components
    }
}

/// PPA, then PCA, then PPA on the reduced output.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaPpaParams {
    pub pre: PpaParams,
    pub pca: PcaParams,
    pub post: PpaParams,
}

impl PcaPpaParams {
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.post.transform(&self.pca.transform(&self.pre.transform(x)))
    }
}

/// Number of directions PPA removes from `dims`-wide data.
pub fn ppa_depth(dims: usize) -> usize {
    dims / 100
}

struct Components {
    rows: DMatrix<f64>,
    variances: DVector<f64>,
    total_variance: f64,
}

fn top_components(centered: &DMatrix<f64>, k: usize, seed: u64) -> Components {
    let (n, d) = centered.shape();
    let denom = (n.max(2) - 1) as f64;
    if d <= EXACT_MAX_DIMS {
        let cov = linalg::covariance(centered);
        let total_variance = cov.trace();
        let (values, vectors) = linalg::symmetric_eigen_desc(cov);
        let mut rows = vectors.columns(0, k).transpose();
        linalg::fix_row_signs(&mut rows);
        let variances = DVector::from_iterator(k, values.iter().take(k).map(|&v| v.max(0.0)));
        Components { rows, variances, total_variance }
    } else {
        let total_variance = centered.norm_squared() / denom;
        let (mut rows, sv) =
            linalg::randomized_svd(centered, k, RSVD_OVERSAMPLE, RSVD_POWER_ITERS, seed);
        linalg::fix_row_signs(&mut rows);
        let variances = sv.map(|s| s * s / denom);
        Components { rows, variances, total_variance }
    }
}

fn pca_params(x: &DMatrix<f64>, k: usize, seed: u64) -> (PcaParams, f64) {
    let mean = linalg::column_means(x);
    let centered = linalg::center(x, &mean);
    let denom = (x.nrows().max(2) - 1) as f64;
    let c = top_components(&centered, k, seed);
    let residual = (c.total_variance - c.variances.sum()).max(0.0);
    let params = PcaParams {
        mean,
        components: c.rows,
        singular_values: c.variances.map(|v| (v * denom).sqrt()),
    };
    (params, residual)
}

/// Fit PPA removing `depth` directions.
pub fn fit_ppa(x: &DMatrix<f64>, depth: usize, seed: u64) -> PpaParams {
    let mean = linalg::column_means(x);
    let top_components = if depth == 0 {
        DMatrix::zeros(0, x.ncols())
    } else {
        let centered = linalg::center(x, &mean);
        top_components(&centered, depth.min(x.ncols()), seed).rows
    };
    PpaParams { mean, top_components }
}

pub fn fit_pca(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<ReducerModel> {
    check_k(k, x.nrows(), x.ncols(), true)?;
    let (params, residual) = pca_params(x, k, seed);
    Ok(ReducerModel {
        method: Method::Pca,
        in_dims: x.ncols(),
        out_dims: k,
        params: Params::Pca(params),
        fit_meta: FitMeta {
            n_pretrain_rows: x.nrows() as u64,
            seed,
            iterations_run: 1,
            final_objective: residual,
            clamped: 0,
        },
        trace: vec![residual],
    })
}

pub fn fit_pca_ppa(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<ReducerModel> {
    check_k(k, x.nrows(), x.ncols(), true)?;
    let pre = fit_ppa(x, ppa_depth(x.ncols()), seed);
    let x1 = pre.transform(x);
    let (pca, residual) = pca_params(&x1, k, seed);
    let x2 = pca.transform(&x1);
    let post = fit_ppa(&x2, ppa_depth(k), seed);
    Ok(ReducerModel {
        method: Method::PcaPpa,
        in_dims: x.ncols(),
        out_dims: k,
        params: Params::PcaPpa(PcaPpaParams { pre, pca, post }),
        fit_meta: FitMeta {
            n_pretrain_rows: x.nrows() as u64,
            seed,
            iterations_run: 1,
            final_objective: residual,
            clamped: 0,
        },
        trace: vec![residual],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand_distr::{Distribution, StandardNormal};

    fn pca(model: &ReducerModel) -> &PcaParams {
        match &model.params {
            Params::Pca(p) => p,
            _ => unreachable!(),
        }
    }

    #[test]
    fn four_point_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 2.0, 0.0, -2.0, 0.0]);
        let m = fit_pca(&x, 1, 0).unwrap();
        let p = pca(&m);
        assert!((p.components[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(p.components[(0, 1)].abs() < 1e-12);
        let z = m.transform_matrix(&x).unwrap();
        for (got, want) in z.iter().zip([1.0, -1.0, 2.0, -2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let probe = DMatrix::from_row_slice(1, 2, &[3.0, 0.0]);
        assert!((m.transform_matrix(&probe).unwrap()[0] - 3.0).abs() < 1e-12);
        let at_mean = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        assert_eq!(m.transform_matrix(&at_mean).unwrap()[0], 0.0);
    }

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::seed::rng(seed);
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn constant_column_carries_no_variance() {
        let mut x = random(30, 5, 1);
        x.column_mut(2).fill(4.5);
        let m = fit_pca(&x, 4, 0).unwrap();
        let p = pca(&m);
        for r in 0..4 {
            assert!(p.components[(r, 2)].abs() < 1e-10);
        }
        let z = p.transform(&x);
        let back = p.inverse_transform(&z);
        assert!((back - &x).abs().max() < 1e-10);
    }

    #[test]
    fn full_rank_reconstruction() {
        // 6 rows in 3 dims: centered rank 3.
        let x = random(6, 3, 2);
        let m = fit_pca(&x, 3, 0).unwrap();
        let p = pca(&m);
        let back = p.inverse_transform(&p.transform(&x));
        assert!((back - &x).abs().max() < 1e-8);
    }

    #[test]
    fn invariants_hold() {
        let x = random(40, 12, 3);
        let m = fit_pca(&x, 5, 0).unwrap();
        let p = pca(&m);
        assert!(linalg::orthonormality_error(&p.components) <= 1e-8);
        let s = &p.singular_values;
        assert!(s.as_slice().windows(2).all(|w| w[0] >= w[1]));
        let z = p.transform(&x);
        for c in z.column_iter() {
            assert!(c.mean().abs() < 1e-8);
        }
        // Explained variances against the covariance spectrum.
        let cov = linalg::covariance(&linalg::center(&x, &p.mean));
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for i in 0..5 {
            assert!((s[i] * s[i] / 39.0 - ev[i]).abs() < 1e-8);
        }
        // Largest-magnitude entry of each component is positive.
        for row in p.components.row_iter() {
            let big = row.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(big > 0.0);
        }
    }

    #[test]
    fn k_bounds() {
        let x = random(4, 10, 4);
        assert!(matches!(fit_pca(&x, 4, 0), Err(Error::Config(_))));
        assert!(fit_pca(&x, 3, 0).is_ok());
        assert!(matches!(fit_pca(&x, 0, 0), Err(Error::Config(_))));
        assert!(matches!(fit_pca(&random(1, 3, 0), 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn ppa_depths() {
        assert_eq!(ppa_depth(768), 7);
        assert_eq!(ppa_depth(128), 1);
        assert_eq!(ppa_depth(64), 0);
    }

    #[test]
    fn ppa_removes_projections() {
        let x = random(300, 230, 5);
        let p = fit_ppa(&x, ppa_depth(230), 0);
        assert_eq!(p.removed(), 2);
        let y = p.transform(&x);
        let proj = &y * p.top_components.transpose();
        assert!(proj.abs().max() <= 1e-8);
    }

    #[test]
    fn pca_ppa_shapes() {
        let x = random(300, 768, 6);
        let m = fit_pca_ppa(&x, 128, 0).unwrap();
        let Params::PcaPpa(p) = &m.params else { unreachable!() };
        assert_eq!(p.pre.removed(), 7);
        assert_eq!(p.post.removed(), 1);
        let z = m.transform_matrix(&x).unwrap();
        assert_eq!(z.ncols(), 128);
        let proj = &z * p.post.top_components.transpose();
        assert!(proj.abs().max() <= 1e-8);

        let m64 = fit_pca_ppa(&x, 64, 0).unwrap();
        let Params::PcaPpa(p64) = &m64.params else { unreachable!() };
        assert_eq!(p64.post.removed(), 0);
        let z = m64.transform_matrix(&x).unwrap();
        for c in z.column_iter() {
            assert!(c.mean().abs() < 1e-8);
        }
    }

    #[test]
    fn randomized_path_agrees_with_dense() {
        // Strong low-rank structure plus small noise, wider than the exact limit.
        let d = EXACT_MAX_DIMS + 40;
        let mut rng = crate::seed::rng(8);
        let scores = DMatrix::from_fn(120, 4, |_, j| {
            let s: f64 = StandardNormal.sample(&mut rng);
            s * (10.0 - 2.0 * j as f64)
        });
        let loadings = random(4, d, 9);
        let x = scores * loadings + random(120, d, 10) * 1e-3;
        let m = fit_pca(&x, 4, 0).unwrap();
        let p = pca(&m);
        let cov = linalg::covariance(&linalg::center(&x, &p.mean));
        let (_, vecs) = linalg::symmetric_eigen_desc(cov);
        let exact = vecs.columns(0, 4).transpose();
        // Singular values of the cross-Gram are the cosines of principal angles.
        let cosines = (&p.components * exact.transpose()).svd(false, false).singular_values;
        assert!(cosines.iter().all(|c| *c > 1.0 - 1e-10));
    }
}
