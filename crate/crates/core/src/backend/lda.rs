use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::corpus::{Artifact, Decoder, Encoder};
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::{Error, Result};

/// Fisher discriminant projection.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaTransform {
    /// R x L
    pub projection: DMatrix<f64>,
    pub input_mean: DVector<f64>,
}

impl LdaTransform {
    pub fn output_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(self.projection.tr_mul(&(x - &self.input_mean)))
    }
}

impl Artifact for LdaTransform {
    const KIND: &'static str = "lda";
    const VERSION: u32 = 1;

    fn encode(&self, enc: &mut Encoder) {
        enc.matrix(&self.projection);
        enc.f64s(self.input_mean.as_slice());
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        let projection = dec.matrix()?;
        let input_mean = DVector::from_vec(dec.f64s()?);
        if input_mean.len() != projection.nrows() {
            return Err(Error::Corrupt("LDA shape".into()));
        }
        Ok(LdaTransform { projection, input_mean })
    }
}

/// Groups row indices by class label, in order of first appearance.
pub(crate) fn group_by_label(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut ids: Vec<usize> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match ids.iter().position(|&x| x == l) {
            Some(g) => groups[g].push(i),
            None => {
                ids.push(l);
                groups.push(vec![i]);
            }
        }
    }
    groups
}

/// Between- and within-class scatter (both normalised by the sample count).
pub(crate) fn scatter(x: &[DVector<f64>], groups: &[Vec<usize>]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let dim = x[0].len();
    let n = x.len() as f64;
    let mut mean = DVector::zeros(dim);
    for v in x {
        mean += v;
    }
    mean /= n;
    let mut sb = DMatrix::zeros(dim, dim);
    let mut sw = DMatrix::zeros(dim, dim);
    for g in groups {
        let mut m = DVector::zeros(dim);
        for &i in g {
            m += &x[i];
        }
        m /= g.len() as f64;
        let d = &m - &mean;
        sb += &d * d.transpose() * g.len() as f64;
        for &i in g {
            let r = &x[i] - &m;
            sw += &r * r.transpose();
        }
    }
    (mean, sb / n, sw / n)
}

/// Fits an LDA projection to `out_dim` dimensions. Returns the transform and
/// any warnings raised (e.g. clamping of the output dimension).
pub fn train_lda(x: &[DVector<f64>], labels: &[usize], out_dim: usize) -> Result<(LdaTransform, Vec<String>)> {
    if x.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: labels.len() });
    }
    if x.is_empty() {
        return Err(Error::Empty("LDA training set".into()));
    }
    let dim = x[0].len();
    if x.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: 0 });
    }
    let groups = group_by_label(labels);
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::InsufficientData(
            "LDA needs at least two classes with two embeddings each".into(),
        ));
    }
    let mut warnings = Vec::new();
    let max_dim = (groups.len() - 1).min(dim);
    let l = if out_dim > max_dim {
        let msg = format!("LDA dimension {out_dim} clamped to {max_dim}");
        warn!("{msg}");
        warnings.push(msg);
        max_dim
    } else {
        out_dim
    };
    if l == 0 {
        return Err(Error::Config("LDA output dimension must be positive".into()));
    }
    let (mean, sb, mut sw) = scatter(x, &groups);
    let eps = 1e-6 * sw.trace() / l as f64;
    let eps = if eps > 0.0 { eps } else { 1e-12 };
    for i in 0..dim {
        sw[(i, i)] += eps;
    }
    let chol = symmetrize(&sw)
        .cholesky()
        .ok_or_else(|| Error::Numeric("within-class scatter is not positive definite".into()))?;
    let g = chol.l();
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("within-class factor is singular".into()))?;
    let m = &g_inv * sb * g_inv.transpose();
    let (_, vecs) = sym_eigen_desc(&m);
    let projection = g_inv.transpose() * vecs.columns(0, l);
    Ok((LdaTransform { projection, input_mean: mean }, warnings))
}
