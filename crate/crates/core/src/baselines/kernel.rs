use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linear::sorted_svd;
use crate::embedding::Side;
use crate::error::{Error, Result};
use crate::linalg::{dist, median};

/// Eigenvalues of a centered kernel matrix below `-NEGATIVE_TOLERANCE * max`
/// make it non-PSD.
const NEGATIVE_TOLERANCE: f64 = 1e-8;
/// Eigen-directions with relative eigenvalue below this are dropped.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    /// `(x'y + 1)^2`
    Quad,
    /// `exp(-|x - y|^2 / (2 h^2))` with `h` the median pairwise distance.
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KccaConfig {
    pub kernel: KernelKind,
    /// Defaults to `1e-3 * n` when absent.
    pub reg: Option<f64>,
    /// Training pairs beyond this are thinned by an even stride.
    pub max_samples: usize,
}

impl Default for KccaConfig {
    fn default() -> Self {
        KccaConfig {
            kernel: KernelKind::Rbf,
            reg: None,
            max_samples: 600,
        }
    }
}

impl KccaConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Some(r) = self.reg {
            if !(r > 0.0) {
                errs.push("kcca.reg must be positive".into());
            }
        }
        if self.max_samples < 2 {
            errs.push("kcca.max_samples must be at least 2".into());
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSide {
    pub samples: Vec<Vec<f64>>,
    pub bandwidth: f64,
    /// Row means of the uncentered training kernel matrix, and their mean.
    pub row_means: Vec<f64>,
    pub total_mean: f64,
    /// Dual coefficients, one column per feature (`n x k`).
    pub coefficients: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelEmbedding {
    pub kind: KernelKind,
    pub reg: f64,
    pub source: KernelSide,
    pub target: KernelSide,
    pub correlations: Vec<f64>,
}

pub fn kernel(kind: KernelKind, bandwidth: f64, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        KernelKind::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        KernelKind::Quad => {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            (d + 1.0).powi(2)
        }
        KernelKind::Rbf => {
            let d = dist(a, b);
            (-d * d / (2.0 * bandwidth * bandwidth)).exp()
        }
    }
}

fn median_distance(rows: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(dist(&rows[i], &rows[j]));
        }
    }
    let m = median(&d);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn thin(rows: &[Vec<f64>], max: usize) -> Vec<Vec<f64>> {
    if rows.len() <= max {
        return rows.to_vec();
    }
    (0..max)
        .map(|i| rows[i * rows.len() / max].clone())
        .collect()
}

struct Centered {
    matrix: DMatrix<f64>,
    row_means: Vec<f64>,
    total_mean: f64,
}

fn centered_gram(kind: KernelKind, h: f64, rows: &[Vec<f64>]) -> Centered {
    let n = rows.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel(kind, h, &rows[i], &rows[j]));
    let row_means: Vec<f64> = k.row_iter().map(|r| r.mean()).collect();
    let total_mean = row_means.iter().sum::<f64>() / n as f64;
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        k[(i, j)] - row_means[i] - row_means[j] + total_mean
    });
    Centered {
        matrix,
        row_means,
        total_mean,
    }
}

/// Eigen-directions of a centered kernel matrix with positive eigenvalue,
/// scaled so that `alpha' (K^2 + r K) alpha = I`.
fn whitened_basis(k: &DMatrix<f64>, reg: f64, which: &str) -> Result<DMatrix<f64>> {
    let eig = crate::linalg::symmetrize(k).symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        return Err(Error::numerical(format!(
            "{which} kernel matrix is zero after centering"
        )));
    }
    if eig.eigenvalues.min() < -NEGATIVE_TOLERANCE * max {
        return Err(Error::numerical(format!(
            "{which} kernel matrix is not PSD after centering"
        )));
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > RANK_TOLERANCE * max)
        .collect();
    let n = k.nrows();
    let basis = DMatrix::from_fn(n, keep.len(), |i, c| {
        let l = eig.eigenvalues[keep[c]];
        eig.eigenvectors[(i, keep[c])] / (l * l + reg * l).sqrt()
    });
    Ok(basis)
}

/// Regularized kernel CCA. Maximizes `a' Kx Ky b` subject to
/// `a' (Kx^2 + r Kx) a = b' (Ky^2 + r Ky) b = 1` on centered kernels.
pub fn kcca_fit(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    feature_dim: usize,
    cfg: &KccaConfig,
) -> Result<KernelEmbedding> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::arg("kcca needs at least two paired samples"));
    }
    let xs = thin(x, cfg.max_samples);
    let ys = thin(y, cfg.max_samples);
    let n = xs.len();
    let reg = cfg.reg.unwrap_or(1e-3 * n as f64);
    let bw = |rows: &[Vec<f64>]| match cfg.kernel {
        KernelKind::Rbf => median_distance(rows),
        _ => 1.0,
    };
    let (hx, hy) = (bw(&xs), bw(&ys));
    let kx = centered_gram(cfg.kernel, hx, &xs);
    let ky = centered_gram(cfg.kernel, hy, &ys);
    let bx = whitened_basis(&kx.matrix, reg, "source")?;
    let by = whitened_basis(&ky.matrix, reg, "target")?;
    if feature_dim == 0 || feature_dim > bx.ncols().min(by.ncols()) {
        return Err(Error::arg(format!(
            "feature_dim {feature_dim} exceeds the kernel rank ({})",
            bx.ncols().min(by.ncols())
        )));
    }
    // With alpha = Bx a and beta = By b the constraints become a'a = b'b = 1.
    let t = (bx.transpose() * &kx.matrix) * (&ky.matrix * &by);
    let (u, s, v) = sorted_svd(&t);
    let side =
        |rows: Vec<Vec<f64>>, h: f64, c: Centered, basis: &DMatrix<f64>, dirs: &DMatrix<f64>| {
            KernelSide {
                samples: rows,
                bandwidth: h,
                row_means: c.row_means,
                total_mean: c.total_mean,
                coefficients: basis * dirs.columns(0, feature_dim),
            }
        };
    Ok(KernelEmbedding {
        kind: cfg.kernel,
        reg,
        source: side(xs, hx, kx, &bx, &u),
        target: side(ys, hy, ky, &by, &v),
        correlations: s[..feature_dim].to_vec(),
    })
}

impl KernelEmbedding {
    pub fn feature_dim(&self) -> usize {
        self.correlations.len()
    }

    pub fn source_dim(&self) -> usize {
        self.source.samples[0].len()
    }

    pub fn target_dim(&self) -> usize {
        self.target.samples[0].len()
    }

    pub fn project(&self, side: Side, x: &[f64]) -> Result<Vec<f64>> {
        let s = match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        };
        if x.len() != s.samples[0].len() {
            return Err(Error::arg(format!(
                "expected a {}-dim state, got {}",
                s.samples[0].len(),
                x.len()
            )));
        }
        let raw: Vec<f64> = s
            .samples
            .iter()
            .map(|r| kernel(self.kind, s.bandwidth, x, r))
            .collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let k = self.feature_dim();
        let mut out = vec![0.0; k];
        for (i, v) in raw.iter().enumerate() {
            let c = v - mean - s.row_means[i] + s.total_mean;
            for (f, o) in out.iter_mut().enumerate() {
                *o += s.coefficients[(i, f)] * c;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::linear::cca_fit;
    use crate::baselines::linear::tests::correlated;

    #[test]
    fn rbf_self_similarity_is_one() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(kernel(KernelKind::Rbf, 0.7, &x, &x), 1.0);
    }

    #[test]
    fn quad_kernel_matches_expansion() {
        let (x, y) = ([1.5, -0.5], [2.0, 3.0]);
        let expanded = x[0] * x[0] * y[0] * y[0]
            + x[1] * x[1] * y[1] * y[1]
            + 2.0 * x[0] * x[1] * y[0] * y[1]
            + 2.0 * x[0] * y[0]
            + 2.0 * x[1] * y[1]
            + 1.0;
        assert!((kernel(KernelKind::Quad, 1.0, &x, &y) - expanded).abs() < 1e-12);
    }

    #[test]
    fn linear_kernel_reproduces_cca() {
        let (x, y) = correlated(400, 3);
        let cfg = KccaConfig {
            kernel: KernelKind::Linear,
            max_samples: 400,
            ..KccaConfig::default()
        };
        let k = kcca_fit(&x, &y, 2, &cfg).unwrap();
        let matched = cca_fit(&x, &y, 2, k.reg / 399.0).unwrap();
        let plain = cca_fit(&x, &y, 2, 0.0).unwrap();
        for i in 0..2 {
            assert!((k.correlations[i] - matched.correlations[i]).abs() < 1e-8);
            assert!((k.correlations[i] - plain.correlations[i]).abs() < 1e-3);
        }
    }

    #[test]
    fn training_points_embed_finitely_for_every_kernel() {
        let (x, y) = correlated(120, 8);
        for kind in [KernelKind::Linear, KernelKind::Quad, KernelKind::Rbf] {
            let cfg = KccaConfig {
                kernel: kind,
                ..KccaConfig::default()
            };
            let k = kcca_fit(&x, &y, 2, &cfg).unwrap();
            for c in &k.correlations {
                assert!(*c >= 0.0 && *c <= 1.0 + 1e-9);
            }
            for (a, b) in x.iter().zip(&y).take(20) {
                assert!(k
                    .project(Side::Source, a)
                    .unwrap()
                    .iter()
                    .all(|v| v.is_finite()));
                assert!(k
                    .project(Side::Target, b)
                    .unwrap()
                    .iter()
                    .all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn projection_of_training_points_realizes_the_correlation() {
        let (x, y) = correlated(150, 4);
        let cfg = KccaConfig {
            kernel: KernelKind::Rbf,
            ..KccaConfig::default()
        };
        let k = kcca_fit(&x, &y, 1, &cfg).unwrap();
        let a: Vec<f64> = x
            .iter()
            .map(|r| k.project(Side::Source, r).unwrap()[0])
            .collect();
        let b: Vec<f64> = y
            .iter()
            .map(|r| k.project(Side::Target, r).unwrap()[0])
            .collect();
        let cross: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
        assert!(
            (cross - k.correlations[0]).abs() < 1e-6,
            "{cross} vs {}",
            k.correlations[0]
        );
    }

    #[test]
    fn thinning_and_regularizer_defaults() {
        let (x, y) = correlated(50, 2);
        let cfg = KccaConfig {
            max_samples: 20,
            ..KccaConfig::default()
        };
        let k = kcca_fit(&x, &y, 2, &cfg).unwrap();
        assert_eq!(k.source.samples.len(), 20);
        assert!((k.reg - 0.02).abs() < 1e-15);
        let bad = KccaConfig {
            reg: Some(0.0),
            ..KccaConfig::default()
        };
        assert!(matches!(
            kcca_fit(&x, &y, 2, &bad),
            Err(Error::Validation(_))
        ));
    }
}
