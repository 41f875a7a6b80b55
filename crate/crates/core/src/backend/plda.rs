use std::collections::BTreeMap;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::{Artifact, Decoder, Encoder};
use crate::linalg::{floor_eigenvalues, gauss_log_pdf, spd_inverse, spd_log_det, sym_eigen_desc, symmetrize, LN_2PI};
use crate::{Error, Result};

use super::lda::{group_by_label, scatter};

const EIG_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PldaVariant {
    /// x = m + V y + e with a low-rank speaker subspace and full residual covariance.
    Simplified { speaker_dim: usize },
    /// Speaker means ~ N(m, B), observations ~ N(speaker mean, W).
    TwoCov,
}

/// Gaussian PLDA model in two-covariance form. For the simplified variant
/// the between-class covariance is V V^T.
#[derive(Debug, Clone)]
pub struct PldaModel {
    pub variant: PldaVariant,
    pub mean: DVector<f64>,
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
    pub loading: Option<DMatrix<f64>>,
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    constant: f64,
}

impl PartialEq for PldaModel {
    fn eq(&self, other: &Self) -> bool {
        self.variant == other.variant
            && self.mean == other.mean
            && self.between == other.between
            && self.within == other.within
            && self.loading == other.loading
    }
}

impl PldaModel {
    pub fn two_cov(mean: DVector<f64>, between: DMatrix<f64>, within: DMatrix<f64>) -> Result<Self> {
        Self::build(PldaVariant::TwoCov, mean, between, within, None)
    }

    pub fn simplified(mean: DVector<f64>, loading: DMatrix<f64>, residual: DMatrix<f64>) -> Result<Self> {
        let between = &loading * loading.transpose();
        let variant = PldaVariant::Simplified { speaker_dim: loading.ncols() };
        Self::build(variant, mean, between, residual, Some(loading))
    }

    fn build(
        variant: PldaVariant,
        mean: DVector<f64>,
        between: DMatrix<f64>,
        within: DMatrix<f64>,
        loading: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let d = mean.len();
        for m in [&between, &within] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: m.nrows() });
            }
        }
        let between = symmetrize(&between);
        let within = symmetrize(&within);
        let total = &between + &within;
        let t_inv = spd_inverse(&total)?;
        let schur = symmetrize(&(&total - &between * &t_inv * &between));
        let a = spd_inverse(&schur)?;
        let q = symmetrize(&(&t_inv - &a));
        let p = &t_inv * &between * &a;
        let constant = 0.5 * spd_log_det(&total)? - 0.5 * spd_log_det(&schur)?;
        Ok(PldaModel {
            variant,
            mean,
            between,
            within,
            loading,
            q,
            p,
            constant,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Same-speaker versus different-speaker log-likelihood ratio of two vectors.
    pub fn llr(&self, enroll: &DVector<f64>, test: &DVector<f64>) -> Result<f64> {
        for v in [enroll, test] {
            if v.len() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
            }
        }
        let a = enroll - &self.mean;
        let b = test - &self.mean;
        let s = 0.5 * (a.dot(&(&self.q * &a)) + b.dot(&(&self.q * &b))) + a.dot(&(&self.p * &b)) + self.constant;
        if !s.is_finite() {
            return Err(Error::Numeric("non-finite score".into()));
        }
        Ok(s)
    }

    /// Log marginal likelihood of the data with speaker latents integrated out.
    pub fn log_likelihood(&self, x: &[DVector<f64>], labels: &[usize]) -> Result<f64> {
        log_marginal(&self.mean, &self.between, &self.within, x, &group_by_label(labels))
    }
}

fn log_marginal(
    mean: &DVector<f64>,
    between: &DMatrix<f64>,
    within: &DMatrix<f64>,
    x: &[DVector<f64>],
    groups: &[Vec<usize>],
) -> Result<f64> {
    let d = mean.len() as f64;
    let w_inv = spd_inverse(within)?;
    let w_logdet = spd_log_det(within)?;
    let mut class_cov: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
    let mut total = 0.0;
    for g in groups {
        let n = g.len();
        let nf = n as f64;
        let mut xbar = DVector::zeros(mean.len());
        for &i in g {
            xbar += &x[i];
        }
        xbar /= nf;
        let cov = class_cov
            .entry(n)
            .or_insert_with(|| symmetrize(&(between + within / nf)));
        let mut ll = gauss_log_pdf(&(&xbar - mean), cov)?;
        let mut quad = 0.0;
        for &i in g {
            let r = &x[i] - &xbar;
            quad += r.dot(&(&w_inv * &r));
        }
        ll += 0.5 * d * LN_2PI + 0.5 * (w_logdet - d * nf.ln());
        ll -= 0.5 * (nf * d * LN_2PI + nf * w_logdet + quad);
        total += ll;
    }
    Ok(total)
}

impl Artifact for PldaModel {
    const KIND: &'static str = "plda";
    const VERSION: u32 = 1;

    fn encode(&self, enc: &mut Encoder) {
        match self.variant {
            PldaVariant::TwoCov => enc.u8(0),
            PldaVariant::Simplified { .. } => enc.u8(1),
        }
        enc.f64s(self.mean.as_slice());
        enc.matrix(&self.between);
        enc.matrix(&self.within);
        if let Some(v) = &self.loading {
            enc.matrix(v);
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        let tag = dec.u8()?;
        let mean = DVector::from_vec(dec.f64s()?);
        let between = dec.matrix()?;
        let within = dec.matrix()?;
        match tag {
            0 => PldaModel::two_cov(mean, between, within),
            1 => {
                let v = dec.matrix()?;
                let mut m = PldaModel::simplified(mean, v, within)?;
                // Keep the stored product bit-exact.
                m.between = between;
                Ok(m)
            }
            t => Err(Error::Corrupt(format!("unknown PLDA variant tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PldaTrainReport {
    /// Log marginal likelihood before each EM update and after the last.
    pub objective: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PldaTrainReport {
    pub fn worst_decrease(&self) -> f64 {
        self.objective
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(1.0))
            .fold(0.0, f64::max)
    }

    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }
}

fn floored(m: &DMatrix<f64>, what: &str, report: &mut PldaTrainReport) -> DMatrix<f64> {
    let (fixed, changed) = floor_eigenvalues(m, EIG_FLOOR);
    if changed {
        report.warn(format!("{what} covariance not positive definite; eigenvalues floored at {EIG_FLOOR:e}"));
    }
    fixed
}

pub fn train_plda(
    x: &[DVector<f64>],
    labels: &[usize],
    variant: PldaVariant,
    iters: usize,
) -> Result<(PldaModel, PldaTrainReport)> {
    if x.is_empty() || x.len() != labels.len() {
        return Err(Error::Empty("PLDA training set".into()));
    }
    let dim = x[0].len();
    if x.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: 0 });
    }
    let groups = group_by_label(labels);
    let mut report = PldaTrainReport::default();
    if groups.len() < 10 || groups.iter().any(|g| g.len() < 2) {
        report.warn(format!(
            "PLDA trained on {} speakers, smallest has {} utterances",
            groups.len(),
            groups.iter().map(Vec::len).min().unwrap_or(0)
        ));
    }
    let (mean, _, sw) = scatter(x, &groups);
    // Between-class covariance of speaker means, unweighted by utterance count.
    let mut class_cov = DMatrix::zeros(dim, dim);
    for g in &groups {
        let m = g.iter().fold(DVector::zeros(dim), |a, &i| a + &x[i]) / g.len() as f64;
        let dm = m - &mean;
        class_cov += &dm * dm.transpose();
    }
    class_cov /= groups.len() as f64;
    let within0 = floored(&sw, "within-class", &mut report);
    match variant {
        PldaVariant::TwoCov => {
            let between0 = floored(&class_cov, "between-class", &mut report);
            train_two_cov(x, &groups, mean, between0, within0, iters, report)
        }
        PldaVariant::Simplified { speaker_dim } => {
            if speaker_dim == 0 || speaker_dim > dim {
                return Err(Error::Config(format!("speaker subspace {speaker_dim} outside 1..={dim}")));
            }
            let (vals, vecs) = sym_eigen_desc(&class_cov);
            let mut v = vecs.columns(0, speaker_dim).into_owned();
            for k in 0..speaker_dim {
                let scale = vals[k].max(EIG_FLOOR).sqrt();
                v.column_mut(k).scale_mut(scale);
            }
            train_simplified(x, &groups, mean, v, within0, iters, report)
        }
    }
}

fn train_two_cov(
    x: &[DVector<f64>],
    groups: &[Vec<usize>],
    mut mean: DVector<f64>,
    mut between: DMatrix<f64>,
    mut within: DMatrix<f64>,
    iters: usize,
    mut report: PldaTrainReport,
) -> Result<(PldaModel, PldaTrainReport)> {
    let dim = mean.len();
    let n_total = x.len() as f64;
    let k = groups.len() as f64;
    for _ in 0..iters {
        report.objective.push(log_marginal(&mean, &between, &within, x, groups)?);
        let b_inv = spd_inverse(&between)?;
        let w_inv = spd_inverse(&within)?;
        let b_inv_mu = &b_inv * &mean;
        let mut posts = Vec::with_capacity(groups.len());
        for g in groups {
            let sum = g.iter().fold(DVector::zeros(dim), |a, &i| a + &x[i]);
            let prec = &b_inv + &w_inv * g.len() as f64;
            let cov = spd_inverse(&prec)?;
            let y = &cov * (&b_inv_mu + &w_inv * sum);
            posts.push((y, cov));
        }
        let new_mean = posts.iter().fold(DVector::zeros(dim), |a, (y, _)| a + y) / k;
        let mut new_b = DMatrix::zeros(dim, dim);
        let mut new_w = DMatrix::zeros(dim, dim);
        for (g, (y, cov)) in groups.iter().zip(&posts) {
            let dy = y - &new_mean;
            new_b += cov + &dy * dy.transpose();
            for &i in g {
                let r = &x[i] - y;
                new_w += cov + &r * r.transpose();
            }
        }
        mean = new_mean;
        between = floored(&(new_b / k), "between-class", &mut report);
        within = floored(&(new_w / n_total), "within-class", &mut report);
    }
    report.objective.push(log_marginal(&mean, &between, &within, x, groups)?);
    Ok((PldaModel::two_cov(mean, between, within)?, report))
}

fn train_simplified(
    x: &[DVector<f64>],
    groups: &[Vec<usize>],
    mean: DVector<f64>,
    mut v: DMatrix<f64>,
    mut sigma: DMatrix<f64>,
    iters: usize,
    mut report: PldaTrainReport,
) -> Result<(PldaModel, PldaTrainReport)> {
    let dim = mean.len();
    let s = v.ncols();
    let n_total = x.len() as f64;
    let centered: Vec<DVector<f64>> = x.iter().map(|v| v - &mean).collect();
    let mut total_scatter = DMatrix::zeros(dim, dim);
    for c in &centered {
        total_scatter += c * c.transpose();
    }
    let bb = |v: &DMatrix<f64>| v * v.transpose();
    for _ in 0..iters {
        report.objective.push(log_marginal(&mean, &bb(&v), &sigma, x, groups)?);
        let s_inv = spd_inverse(&sigma)?;
        let vt_s_inv = v.transpose() * &s_inv;
        let vt_s_inv_v = &vt_s_inv * &v;
        let mut cross = DMatrix::zeros(dim, s);
        let mut second = DMatrix::zeros(s, s);
        for g in groups {
            let n = g.len() as f64;
            let sum = g.iter().fold(DVector::zeros(dim), |a, &i| a + &centered[i]);
            let prec = DMatrix::identity(s, s) + &vt_s_inv_v * n;
            let chol = Cholesky::new(symmetrize(&prec))
                .ok_or_else(|| Error::Numeric("singular speaker posterior".into()))?;
            let y = chol.solve(&(&vt_s_inv * &sum));
            let eyy = chol.inverse() + &y * y.transpose();
            cross += &sum * y.transpose();
            second += eyy * n;
        }
        let second_inv = spd_inverse(&second)?;
        v = &cross * second_inv;
        let new_sigma = (&total_scatter - &v * cross.transpose()) / n_total;
        sigma = floored(&new_sigma, "residual", &mut report);
    }
    report.objective.push(log_marginal(&mean, &bb(&v), &sigma, x, groups)?);
    Ok((PldaModel::simplified(mean, v, sigma)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, chol: &DMatrix<f64>) -> DVector<f64> {
        chol * DVector::from_fn(chol.nrows(), |_, _| StandardNormal.sample(rng))
    }

    fn simulate(
        between: &DMatrix<f64>,
        within: &DMatrix<f64>,
        speakers: usize,
        per: usize,
        seed: u64,
    ) -> (Vec<DVector<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lb = between.clone().cholesky().unwrap().l();
        let lw = within.clone().cholesky().unwrap().l();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for s in 0..speakers {
            let m = gaussian(&mut rng, &lb);
            for _ in 0..per {
                x.push(&m + gaussian(&mut rng, &lw));
                y.push(s);
            }
        }
        (x, y)
    }

    fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    fn true_cov() -> (DMatrix<f64>, DMatrix<f64>) {
        let b = DMatrix::from_row_slice(4, 4, &[
            2.0, 0.5, 0.0, 0.1, 0.5, 1.5, 0.2, 0.0, 0.0, 0.2, 1.0, 0.3, 0.1, 0.0, 0.3, 0.8,
        ]);
        let w = DMatrix::from_row_slice(4, 4, &[
            0.6, 0.1, 0.0, 0.0, 0.1, 0.5, 0.05, 0.0, 0.0, 0.05, 0.4, 0.1, 0.0, 0.0, 0.1, 0.3,
        ]);
        (b, w)
    }

    #[test]
    fn two_cov_recovers_generating_model() {
        // 200 speakers leave ~15% sampling error in B alone, so use more.
        let (b, w) = true_cov();
        let (x, y) = simulate(&b, &w, 2000, 10, 1);
        let (m, report) = train_plda(&x, &y, PldaVariant::TwoCov, 10).unwrap();
        assert!(rel_frob(&m.between, &b) < 0.10, "B err {}", rel_frob(&m.between, &b));
        assert!(rel_frob(&m.within, &w) < 0.10, "W err {}", rel_frob(&m.within, &w));
        assert!(report.worst_decrease() <= 1e-4, "{:?}", report.objective);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn two_cov_matches_balanced_closed_form() {
        // With equal utterance counts the ML solution is available directly:
        // W = pooled within scatter * n/(n-1), B = cov(speaker means) - W/n.
        let (b, w) = true_cov();
        let (x, y) = simulate(&b, &w, 200, 10, 6);
        let (m, _) = train_plda(&x, &y, PldaVariant::TwoCov, 50).unwrap();
        let groups = group_by_label(&y);
        let (_, _, sw) = scatter(&x, &groups);
        let w_ml = sw * (10.0 / 9.0);
        let means: Vec<DVector<f64>> = groups
            .iter()
            .map(|g| g.iter().fold(DVector::zeros(4), |a, &i| a + &x[i]) / g.len() as f64)
            .collect();
        let (_, cov_means) = crate::linalg::sample_covariance(&means);
        let b_ml = cov_means - &w_ml / 10.0;
        assert!(rel_frob(&m.within, &w_ml) < 1e-6);
        assert!(rel_frob(&m.between, &b_ml) < 1e-4, "{}", rel_frob(&m.between, &b_ml));
    }

    #[test]
    fn single_utterance_speakers_floor_within() {
        let (b, w) = true_cov();
        let (x, y) = simulate(&b, &w, 50, 1, 2);
        let (m, report) = train_plda(&x, &y, PldaVariant::TwoCov, 3).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("floored")));
        assert!(m.within.clone().symmetric_eigen().eigenvalues.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn simplified_full_rank_matches_total_covariance() {
        let (b, w) = true_cov();
        let (x, y) = simulate(&b, &w, 200, 10, 3);
        let (m, report) = train_plda(&x, &y, PldaVariant::Simplified { speaker_dim: 4 }, 10).unwrap();
        let (_, sample) = crate::linalg::sample_covariance(&x);
        let model_total = &m.between + &m.within;
        assert!(rel_frob(&model_total, &sample) < 0.10);
        assert!(report.worst_decrease() <= 1e-4, "{:?}", report.objective);
    }

    #[test]
    fn simplified_low_rank_monotone() {
        let (b, w) = true_cov();
        let (x, y) = simulate(&b, &w, 100, 5, 4);
        let (m, report) = train_plda(&x, &y, PldaVariant::Simplified { speaker_dim: 2 }, 10).unwrap();
        assert_eq!(m.loading.as_ref().unwrap().ncols(), 2);
        assert!(report.worst_decrease() <= 1e-4, "{:?}", report.objective);
    }

    #[test]
    fn llr_symmetric_and_vanishes_without_speaker_variability() {
        let (b, w) = true_cov();
        let m = PldaModel::two_cov(DVector::zeros(4), b, w.clone()).unwrap();
        let p = DVector::from_vec(vec![0.3, -1.0, 0.5, 2.0]);
        let q = DVector::from_vec(vec![-0.2, 0.4, 1.1, 0.0]);
        assert!((m.llr(&p, &q).unwrap() - m.llr(&q, &p).unwrap()).abs() < 1e-9);
        let tiny = PldaModel::two_cov(DVector::zeros(4), DMatrix::identity(4, 4) * 1e-12, w).unwrap();
        assert!(tiny.llr(&p, &q).unwrap().abs() < 1e-9);
    }

    #[test]
    fn self_beats_negation() {
        let m = PldaModel::two_cov(DVector::zeros(3), DMatrix::identity(3, 3) * 10.0, DMatrix::identity(3, 3) * 0.1).unwrap();
        let v = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        assert!(m.llr(&v, &v).unwrap() > m.llr(&v, &(-&v)).unwrap());
    }

    #[test]
    fn artifact_round_trip() {
        let (b, w) = true_cov();
        let (x, y) = simulate(&b, &w, 30, 4, 5);
        for variant in [PldaVariant::TwoCov, PldaVariant::Simplified { speaker_dim: 2 }] {
            let (m, _) = train_plda(&x, &y, variant, 2).unwrap();
            let back = PldaModel::from_bytes(&m.to_bytes()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.llr(&x[0], &x[1]).unwrap(), m.llr(&x[0], &x[1]).unwrap());
        }
    }
}
