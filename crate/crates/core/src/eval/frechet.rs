use nalgebra::{DMatrix, SymmetricEigen};

use crate::nn::Mat;
use crate::{Error, Result};

/// Eigenvalues below this are a covariance error; those between it and 0
/// are clamped.
pub const PSD_TOLERANCE: f64 = 1e-6;

/// Diagonal loading applied when there are fewer samples than dimensions.
pub const SHRINKAGE: f64 = 1e-6;

/// Mean and covariance of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub covariance: Mat,
}

impl GaussianSummary {
    pub fn new(mean: Vec<f64>, covariance: Mat) -> Result<Self> {
        let d = mean.len();
        if covariance.dim() != (d, d) {
            return Err(Error::shape(format!(
                "covariance {:?} for a {d}-dimensional mean",
                covariance.dim()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[[i, j]] - covariance[[j, i]]).abs() > 1e-8 {
                    return Err(Error::Covariance(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { mean, covariance })
    }

    /// Sample mean and unbiased covariance of the rows of `features`, with
    /// [`SHRINKAGE`] on the diagonal when rows < columns.
    pub fn fit(features: &Mat) -> Result<Self> {
        let (n, d) = features.dim();
        if n < 2 {
            return Err(Error::Covariance(format!(
                "covariance needs at least 2 samples, got {n}"
            )));
        }
        let mean = features.mean_axis(ndarray::Axis(0)).expect("n >= 2");
        let centered = features - &mean.view().insert_axis(ndarray::Axis(0));
        let mut cov = centered.t().dot(&centered) / (n as f64 - 1.0);
        if n < d {
            for i in 0..d {
                cov[[i, i]] += SHRINKAGE;
            }
        }
        Ok(Self {
            mean: mean.to_vec(),
            covariance: cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[[i, j]] + m[[j, i]]))
}

fn checked_eigen(m: DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let e = SymmetricEigen::new(m);
    if let Some(min) = e.eigenvalues.iter().copied().reduce(f64::min) {
        if min < -PSD_TOLERANCE {
            return Err(Error::Covariance(format!(
                "{what} has eigenvalue {min:.3e}"
            )));
        }
    }
    Ok(e)
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// The trace of the square root is taken from the eigenvalues of the
/// symmetric `S_a^(1/2) S_b S_a^(1/2)`, which shares its spectrum with
/// `S_a S_b`.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "Fréchet distance between dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let ea = checked_eigen(to_na(&a.covariance), "first covariance")?;
    let sb = to_na(&b.covariance);
    checked_eigen(sb.clone(), "second covariance")?;
    let roots = ea.eigenvalues.map(|v| v.max(0.0).sqrt());
    let sqrt_a = &ea.eigenvectors * DMatrix::from_diagonal(&roots) * ea.eigenvectors.transpose();
    let inner = &sqrt_a * sb * &sqrt_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let trace_sqrt: f64 = checked_eigen(inner, "covariance product")?
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();
    let trace = a.covariance.diag().sum() + b.covariance.diag().sum() - 2.0 * trace_sqrt;
    Ok((mean_term + trace).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(d: usize, s: f64) -> Mat {
        Mat::from_shape_fn((d, d), |(i, j)| if i == j { s } else { 0.0 })
    }

    #[test]
    fn worked_examples() {
        let a = GaussianSummary::new(vec![0.0, 0.0], eye(2, 1.0)).unwrap();
        let b = GaussianSummary::new(vec![1.0, 0.0], eye(2, 1.0)).unwrap();
        assert!((frechet_distance(&a, &b).unwrap() - 1.0).abs() < 1e-8);
        let c = GaussianSummary::new(vec![0.0, 0.0], eye(2, 4.0)).unwrap();
        assert!((frechet_distance(&c, &a).unwrap() - 2.0).abs() < 1e-8);
        assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GaussianSummary::fit(&Mat::zeros((1, 3))).is_err());
        let a = GaussianSummary::new(vec![0.0; 2], eye(2, 1.0)).unwrap();
        let neg = GaussianSummary::new(vec![0.0; 2], eye(2, -1.0)).unwrap();
        assert!(matches!(
            frechet_distance(&a, &neg),
            Err(Error::Covariance(_))
        ));
        let three = GaussianSummary::new(vec![0.0; 3], eye(3, 1.0)).unwrap();
        assert!(frechet_distance(&a, &three).is_err());
    }
}
