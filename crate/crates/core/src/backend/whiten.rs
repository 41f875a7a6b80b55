use nalgebra::{DMatrix, DVector};

use crate::corpus::{Artifact, Decoder, Encoder};
use crate::linalg::{sample_covariance, sym_eigen_desc};
use crate::{Error, Result};

const MIN_NORM: f64 = 1e-10;

/// Centering and symmetric whitening followed by length normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    pub mean: DVector<f64>,
    pub whitening: DMatrix<f64>,
}

impl Whitener {
    pub fn fit(x: &[DVector<f64>]) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::InsufficientData("whitening needs at least two vectors".into()));
        }
        let (mean, cov) = sample_covariance(x);
        let (vals, vecs) = sym_eigen_desc(&cov);
        if vals.iter().any(|&v| v <= 1e-300) {
            return Err(Error::Numeric("training covariance is singular".into()));
        }
        let inv_sqrt = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()));
        let whitening = &vecs * inv_sqrt * vecs.transpose();
        Ok(Whitener { mean, whitening })
    }

    pub fn whiten(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), got: x.len() });
        }
        Ok(&self.whitening * (x - &self.mean))
    }

    /// Whitens and scales to unit Euclidean norm.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        length_normalize(self.whiten(x)?)
    }
}

pub fn length_normalize(x: DVector<f64>) -> Result<DVector<f64>> {
    let norm = x.norm();
    if !(norm >= MIN_NORM) {
        return Err(Error::Numeric(format!("cannot length-normalise vector of norm {norm:e}")));
    }
    Ok(x / norm)
}

impl Artifact for Whitener {
    const KIND: &'static str = "whitener";
    const VERSION: u32 = 1;

    fn encode(&self, enc: &mut Encoder) {
        enc.f64s(self.mean.as_slice());
        enc.matrix(&self.whitening);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        let mean = DVector::from_vec(dec.f64s()?);
        let whitening = dec.matrix()?;
        if whitening.nrows() != mean.len() || whitening.ncols() != mean.len() {
            return Err(Error::Corrupt("whitener shape".into()));
        }
        Ok(Whitener { mean, whitening })
    }
}
