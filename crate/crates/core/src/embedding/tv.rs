use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Artifact, Decoder, Encoder};
use crate::parallel::Workers;
use crate::{Error, Result};

use super::{BwStats, Embedding, GmmUbm};

/// Total-variability subspace with the UBM covariances it was trained against.
#[derive(Debug, Clone)]
pub struct TotalVariability {
    t: DMatrix<f64>,
    variances: Vec<f64>,
    components: usize,
    dim: usize,
    pub ubm_ref: String,
    pub profile_id: String,
    // derived
    inv_sigma_t: DMatrix<f64>,
    blocks: Vec<DMatrix<f64>>,
}

impl PartialEq for TotalVariability {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t
            && self.variances == other.variances
            && self.components == other.components
            && self.ubm_ref == other.ubm_ref
            && self.profile_id == other.profile_id
    }
}

impl TotalVariability {
    pub fn new(t: DMatrix<f64>, variances: Vec<f64>, components: usize, dim: usize) -> Result<Self> {
        let cd = components * dim;
        if t.nrows() != cd || variances.len() != cd {
            return Err(Error::DimensionMismatch { expected: cd, got: t.nrows() });
        }
        if t.ncols() == 0 || t.ncols() >= cd {
            return Err(Error::Config(format!("rank {} must be in 1..{cd}", t.ncols())));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite subspace entry".into()));
        }
        let mut inv_sigma_t = t.clone();
        for (i, mut row) in inv_sigma_t.row_iter_mut().enumerate() {
            row /= variances[i];
        }
        let blocks = (0..components)
            .map(|c| {
                let tc = t.rows(c * dim, dim);
                let sc = inv_sigma_t.rows(c * dim, dim);
                tc.transpose() * sc
            })
            .collect();
        Ok(TotalVariability {
            t,
            variances,
            components,
            dim,
            ubm_ref: String::new(),
            profile_id: String::new(),
            inv_sigma_t,
            blocks,
        })
    }

    pub fn rank(&self) -> usize {
        self.t.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn n_components(&self) -> usize {
        self.components
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    fn check(&self, stats: &BwStats) -> Result<()> {
        if stats.n.len() != self.components || stats.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.components * self.dim,
                got: stats.f.len(),
            });
        }
        Ok(())
    }

    /// Posterior precision L and linear term b of the latent factor.
    fn precision(&self, stats: &BwStats) -> (DMatrix<f64>, DVector<f64>) {
        let r = self.rank();
        let mut l = DMatrix::identity(r, r);
        for (c, block) in self.blocks.iter().enumerate() {
            if stats.n[c] != 0.0 {
                l += block * stats.n[c];
            }
        }
        let f = DVector::from_column_slice(&stats.f);
        let b = self.inv_sigma_t.tr_mul(&f);
        (l, b)
    }

    /// Posterior mean of the latent factor.
    pub fn posterior_mean(&self, stats: &BwStats) -> Result<DVector<f64>> {
        self.check(stats)?;
        let (l, b) = self.precision(stats);
        let chol = Cholesky::new(l).ok_or_else(|| Error::Numeric("singular posterior precision".into()))?;
        Ok(chol.solve(&b))
    }
}

impl Artifact for TotalVariability {
    const KIND: &'static str = "total-variability";
    const VERSION: u32 = 1;

    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.components as u64);
        enc.u64(self.dim as u64);
        enc.str(&self.ubm_ref);
        enc.str(&self.profile_id);
        enc.f64s(&self.variances);
        enc.matrix(&self.t);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        let components = dec.len()?;
        let dim = dec.len()?;
        let ubm_ref = dec.str()?;
        let profile_id = dec.str()?;
        let variances = dec.f64s()?;
        let t = dec.matrix()?;
        let mut tv = TotalVariability::new(t, variances, components, dim)?;
        tv.ubm_ref = ubm_ref;
        tv.profile_id = profile_id;
        Ok(tv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvTrainConfig {
    pub rank: usize,
    pub iters: usize,
    pub seed: u64,
    /// Scale of the random initial subspace.
    pub init_scale: f64,
}

impl TvTrainConfig {
    pub fn new(rank: usize, seed: u64) -> Self {
        TvTrainConfig {
            rank,
            iters: 5,
            seed,
            init_scale: 0.001,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TvTrainLog {
    /// Auxiliary objective evaluated before each update.
    pub objective: Vec<f64>,
    pub warnings: Vec<String>,
}

impl TvTrainLog {
    pub fn worst_decrease(&self) -> f64 {
        self.objective
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

struct Posterior {
    w: DVector<f64>,
    /// E[w w^T]
    second: DMatrix<f64>,
    objective: f64,
}

fn posterior(tv: &TotalVariability, stats: &BwStats) -> Result<Posterior> {
    let (l, b) = tv.precision(stats);
    let chol = Cholesky::new(l).ok_or_else(|| {
        Error::Numeric("singular posterior precision; subspace rank too high for the data".into())
    })?;
    let w = chol.solve(&b);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let cov = chol.inverse();
    let objective = 0.5 * b.dot(&w) - 0.5 * log_det;
    let second = cov + &w * w.transpose();
    Ok(Posterior { w, second, objective })
}

/// Trains the subspace by EM with a minimum-divergence step after every
/// maximum-likelihood update.
pub fn train_tv(
    stats: &[BwStats],
    ubm: &GmmUbm,
    config: &TvTrainConfig,
    workers: &Workers,
) -> Result<(TotalVariability, TvTrainLog)> {
    let c = ubm.n_components();
    let d = ubm.dim();
    let r = config.rank;
    if stats.is_empty() {
        return Err(Error::Empty("no statistics for subspace training".into()));
    }
    for s in stats {
        if s.n.len() != c || s.dim != d {
            return Err(Error::DimensionMismatch { expected: c * d, got: s.f.len() });
        }
    }
    let mut log = TvTrainLog::default();
    if stats.len() < r {
        let msg = format!("{} utterances for rank {r}", stats.len());
        warn!("{msg}");
        log.warnings.push(msg);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = DMatrix::from_fn(c * d, r, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * config.init_scale
    });
    let mut tv = TotalVariability::new(init, ubm.variances().to_vec(), c, d)?;

    let u = stats.len();
    let f_all = DMatrix::from_fn(c * d, u, |i, j| stats[j].f[i]);
    for _ in 0..config.iters {
        let posts: Vec<Posterior> = workers
            .map(stats, |s| posterior(&tv, s))
            .into_iter()
            .collect::<Result<_>>()?;
        let objective: f64 = posts.iter().map(|p| p.objective).sum();
        if !objective.is_finite() {
            return Err(Error::Numeric("non-finite subspace objective".into()));
        }
        log.objective.push(objective);

        let w_all = DMatrix::from_fn(u, r, |j, k| posts[j].w[k]);
        let cross = &f_all * &w_all;
        let comps: Vec<usize> = (0..c).collect();
        let blocks: Vec<DMatrix<f64>> = workers
            .map(&comps, |&k| {
                let mut a = DMatrix::zeros(r, r);
                for (s, p) in stats.iter().zip(&posts) {
                    if s.n[k] != 0.0 {
                        a += &p.second * s.n[k];
                    }
                }
                let a = Cholesky::new(a).map(|ch| ch.inverse());
                a.map(|ainv| cross.rows(k * d, d) * ainv)
            })
            .into_iter()
            .map(|b| b.ok_or_else(|| Error::Numeric("component with no occupancy".into())))
            .collect::<Result<_>>()?;
        let mut t = DMatrix::zeros(c * d, r);
        for (k, b) in blocks.iter().enumerate() {
            t.rows_mut(k * d, d).copy_from(b);
        }

        let mut k_mat = DMatrix::zeros(r, r);
        for p in &posts {
            k_mat += &p.second;
        }
        k_mat /= u as f64;
        let chol = Cholesky::new(k_mat).ok_or_else(|| Error::Numeric("singular latent covariance".into()))?;
        let t = t * chol.l();
        tv = TotalVariability::new(t, ubm.variances().to_vec(), c, d)?;
    }
    let final_obj: Result<f64> = workers
        .map(stats, |s| posterior(&tv, s).map(|p| p.objective))
        .into_iter()
        .sum();
    log.objective.push(final_obj?);
    Ok((tv, log))
}

/// Posterior-mean i-vector tagged with the subspace's profile.
pub fn extract_ivector(stats: &BwStats, tv: &TotalVariability) -> Result<Embedding> {
    let w = tv.posterior_mean(stats)?;
    Embedding::new(w.as_slice().to_vec(), &tv.profile_id, "")
}
