use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::Side;
use crate::error::{Error, Result};
use crate::seed;

/// Relative eigenvalue below which an unregularized covariance counts as singular.
const RANK_TOLERANCE: f64 = 1e-10;

/// `z = P (x - mean)` per side.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEmbedding {
    pub source: DMatrix<f64>,
    pub target: DMatrix<f64>,
    pub source_mean: Option<DVector<f64>>,
    pub target_mean: Option<DVector<f64>>,
    /// Canonical correlations, empty for random projections.
    pub correlations: Vec<f64>,
}

impl LinearEmbedding {
    pub fn feature_dim(&self) -> usize {
        self.source.nrows()
    }

    pub fn source_dim(&self) -> usize {
        self.source.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.target.ncols()
    }

    pub fn project(&self, side: Side, x: &[f64]) -> Result<Vec<f64>> {
        let (p, mean) = match side {
            Side::Source => (&self.source, &self.source_mean),
            Side::Target => (&self.target, &self.target_mean),
        };
        if x.len() != p.ncols() {
            return Err(Error::arg(format!(
                "expected a {}-dim state, got {}",
                p.ncols(),
                x.len()
            )));
        }
        let mut v = DVector::from_column_slice(x);
        if let Some(m) = mean {
            v -= m;
        }
        Ok((p * v).iter().copied().collect())
    }
}

pub fn random_projection(
    source_dim: usize,
    target_dim: usize,
    feature_dim: usize,
    seed: u64,
) -> Result<LinearEmbedding> {
    if feature_dim == 0 || feature_dim > source_dim.min(target_dim) {
        return Err(Error::arg(format!(
            "feature_dim {feature_dim} must be in 1..={}",
            source_dim.min(target_dim)
        )));
    }
    let scale = 1.0 / (feature_dim as f64).sqrt();
    let draw = |side: &str, cols: usize| {
        let mut rng = seed::rng(seed::derive(seed, &["random_projection", side], &[]));
        DMatrix::from_fn(feature_dim, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
    };
    Ok(LinearEmbedding {
        source: draw("source", source_dim),
        target: draw("target", target_dim),
        source_mean: None,
        target_mean: None,
        correlations: Vec::new(),
    })
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::arg("need a non-empty set of equal-length rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

fn center(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.mean()));
    let mut c = m.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (c, mean)
}

/// `C^{-1/2}` of a covariance; errors when it is singular and unregularized.
fn inverse_sqrt(c: &DMatrix<f64>, reg: f64, which: &str) -> Result<DMatrix<f64>> {
    let eig = c.clone().symmetric_eigen();
    let max = eig.eigenvalues.max().max(0.0);
    let min = eig.eigenvalues.min();
    if reg == 0.0 && (max == 0.0 || min <= RANK_TOLERANCE * max) {
        return Err(Error::numerical(format!(
            "{which} covariance is rank deficient; use a positive regularizer"
        )));
    }
    if min <= 0.0 {
        return Err(Error::numerical(format!(
            "{which} covariance is not positive definite"
        )));
    }
    let d = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&d) * q.transpose())
}

/// Left/right singular pairs of `t` sorted by decreasing singular value.
pub(crate) fn sorted_svd(t: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = t.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = DMatrix::from_fn(u.nrows(), order.len(), |i, k| u[(i, order[k])]);
    let v = DMatrix::from_fn(vt.ncols(), order.len(), |i, k| vt[(order[k], i)]);
    let s = order.iter().map(|&k| svd.singular_values[k]).collect();
    (u, s, v)
}

/// Canonical correlation analysis. Rows of `x` and `y` are paired samples;
/// `reg` is added to both sample covariances.
pub fn cca_fit(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    feature_dim: usize,
    reg: f64,
) -> Result<LinearEmbedding> {
    if x.len() != y.len() {
        return Err(Error::arg(format!(
            "{} source rows but {} target rows",
            x.len(),
            y.len()
        )));
    }
    if !(reg >= 0.0) {
        return Err(Error::arg("regularizer must be non-negative"));
    }
    if x.len() < 2 {
        return Err(Error::arg("cca needs at least two samples"));
    }
    let (xc, mx) = center(&rows_to_matrix(x)?);
    let (yc, my) = center(&rows_to_matrix(y)?);
    let (dx, dy) = (xc.ncols(), yc.ncols());
    if feature_dim == 0 || feature_dim > dx.min(dy) {
        return Err(Error::arg(format!(
            "feature_dim {feature_dim} must be in 1..={}",
            dx.min(dy)
        )));
    }
    let n1 = (x.len() - 1) as f64;
    let cxx = xc.transpose() * &xc / n1 + DMatrix::identity(dx, dx) * reg;
    let cyy = yc.transpose() * &yc / n1 + DMatrix::identity(dy, dy) * reg;
    let cxy = xc.transpose() * &yc / n1;
    let wx = inverse_sqrt(&cxx, reg, "source")?;
    let wy = inverse_sqrt(&cyy, reg, "target")?;
    let (u, s, v) = sorted_svd(&(&wx * cxy * &wy));
    let a = u.columns(0, feature_dim).transpose() * wx;
    let b = v.columns(0, feature_dim).transpose() * wy;
    Ok(LinearEmbedding {
        source: a,
        target: b,
        source_mean: Some(mx),
        target_mean: Some(my),
        correlations: s[..feature_dim].to_vec(),
    })
}
