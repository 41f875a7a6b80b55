use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Artifact, Decoder, Encoder};
use crate::frontend::FeatureMatrix;
use crate::linalg::{log_sum_exp, LN_2PI};
use crate::parallel::{Workers, FRAME_CHUNK};
use crate::{Error, Result};

/// Diagonal-covariance Gaussian mixture used as the universal background model.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmUbm {
    weights: Vec<f64>,
    /// C x D, row-major.
    means: Vec<f64>,
    /// C x D, row-major.
    variances: Vec<f64>,
    dim: usize,
    // derived
    log_consts: Vec<f64>,
    inv_vars: Vec<f64>,
}

impl GmmUbm {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>, dim: usize) -> Result<Self> {
        let c = weights.len();
        if c == 0 || dim == 0 || means.len() != c * dim || variances.len() != c * dim {
            return Err(Error::DimensionMismatch {
                expected: c * dim,
                got: means.len().min(variances.len()),
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Numeric(format!("mixture weights sum to {total}")));
        }
        if variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numeric("invalid mixture parameters".into()));
        }
        let inv_vars: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
        let log_consts = (0..c)
            .map(|k| {
                let log_det: f64 = variances[k * dim..(k + 1) * dim].iter().map(|v| v.ln()).sum();
                weights[k].ln() - 0.5 * (dim as f64 * LN_2PI + log_det)
            })
            .collect();
        Ok(GmmUbm {
            weights,
            means,
            variances,
            dim,
            log_consts,
            inv_vars,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    pub fn variance(&self, c: usize) -> &[f64] {
        &self.variances[c * self.dim..(c + 1) * self.dim]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Writes component posteriors for `x` into `post` and returns log p(x).
    pub fn posteriors(&self, x: &[f64], post: &mut [f64]) -> f64 {
        let d = self.dim;
        for c in 0..self.weights.len() {
            let m = &self.means[c * d..(c + 1) * d];
            let iv = &self.inv_vars[c * d..(c + 1) * d];
            let mut q = 0.0;
            for i in 0..d {
                let diff = x[i] - m[i];
                q += diff * diff * iv[i];
            }
            post[c] = self.log_consts[c] - 0.5 * q;
        }
        let ll = log_sum_exp(post);
        for p in post.iter_mut() {
            *p = (*p - ll).exp();
        }
        ll
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut post = vec![0.0; self.n_components()];
        self.posteriors(x, &mut post)
    }
}

impl Artifact for GmmUbm {
    const KIND: &'static str = "gmm-ubm";
    const VERSION: u32 = 1;

    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.dim as u64);
        enc.f64s(&self.weights);
        enc.f64s(&self.means);
        enc.f64s(&self.variances);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        let dim = dec.len()?;
        let weights = dec.f64s()?;
        let means = dec.f64s()?;
        let variances = dec.f64s()?;
        GmmUbm::new(weights, means, variances, dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UbmTrainConfig {
    pub components: usize,
    /// EM iterations at every mixture size.
    pub iters_per_split: usize,
    pub seed: u64,
    /// Variance floor as a fraction of the global variance.
    pub variance_floor: f64,
    /// Split perturbation in standard deviations.
    pub perturbation: f64,
}

impl UbmTrainConfig {
    pub fn new(components: usize, seed: u64) -> Self {
        UbmTrainConfig {
            components,
            iters_per_split: 5,
            seed,
            variance_floor: 1e-3,
            perturbation: 0.1,
        }
    }
}

/// Per-iteration training record: (mixture size, average log-likelihood per frame).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UbmTrainLog {
    pub iterations: Vec<(usize, f64)>,
}

impl UbmTrainLog {
    /// Largest relative decrease of the log-likelihood between consecutive
    /// iterations at the same mixture size (0 if monotone).
    pub fn worst_decrease(&self) -> f64 {
        self.iterations
            .windows(2)
            .filter(|w| w[0].0 == w[1].0)
            .map(|w| (w[0].1 - w[1].1) / w[0].1.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

struct Accum {
    ll: f64,
    n: Vec<f64>,
    f: Vec<f64>,
    s: Vec<f64>,
}

fn e_step(frames: &[f64], dim: usize, ubm: &GmmUbm, workers: &Workers) -> Result<Accum> {
    let c = ubm.n_components();
    let chunks: Vec<&[f64]> = frames.chunks(FRAME_CHUNK * dim).collect();
    let partial = workers.map(&chunks, |chunk| {
        let mut acc = Accum {
            ll: 0.0,
            n: vec![0.0; c],
            f: vec![0.0; c * dim],
            s: vec![0.0; c * dim],
        };
        let mut post = vec![0.0; c];
        for x in chunk.chunks_exact(dim) {
            acc.ll += ubm.posteriors(x, &mut post);
            for k in 0..c {
                let g = post[k];
                if g == 0.0 {
                    continue;
                }
                acc.n[k] += g;
                let f = &mut acc.f[k * dim..(k + 1) * dim];
                let s = &mut acc.s[k * dim..(k + 1) * dim];
                for i in 0..dim {
                    f[i] += g * x[i];
                    s[i] += g * x[i] * x[i];
                }
            }
        }
        acc
    });
    let mut total = Accum {
        ll: 0.0,
        n: vec![0.0; c],
        f: vec![0.0; c * dim],
        s: vec![0.0; c * dim],
    };
    for p in partial {
        total.ll += p.ll;
        total.n.iter_mut().zip(&p.n).for_each(|(a, b)| *a += b);
        total.f.iter_mut().zip(&p.f).for_each(|(a, b)| *a += b);
        total.s.iter_mut().zip(&p.s).for_each(|(a, b)| *a += b);
    }
    if !total.ll.is_finite() {
        return Err(Error::Numeric(format!("UBM log-likelihood is {}", total.ll)));
    }
    Ok(total)
}

fn m_step(acc: &Accum, prev: &GmmUbm, floor: &[f64]) -> Result<GmmUbm> {
    let c = prev.n_components();
    let dim = prev.dim();
    let total: f64 = acc.n.iter().sum();
    let mut weights = Vec::with_capacity(c);
    let mut means = Vec::with_capacity(c * dim);
    let mut vars = Vec::with_capacity(c * dim);
    for k in 0..c {
        let n = acc.n[k];
        weights.push(n / total);
        if n < 1e-8 {
            // Starved component keeps its previous shape.
            means.extend_from_slice(prev.mean(k));
            vars.extend_from_slice(prev.variance(k));
            continue;
        }
        for i in 0..dim {
            let m = acc.f[k * dim + i] / n;
            let v = acc.s[k * dim + i] / n - m * m;
            means.push(m);
            vars.push(v.max(floor[i]));
        }
    }
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    GmmUbm::new(weights, means, vars, dim)
}

fn split(ubm: &GmmUbm, target: usize, perturbation: f64, rng: &mut ChaCha8Rng) -> Result<GmmUbm> {
    let c = ubm.n_components();
    let dim = ubm.dim();
    let n_split = (target - c).min(c);
    // Heaviest components first; ties by index.
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| ubm.weights[b].partial_cmp(&ubm.weights[a]).unwrap().then(a.cmp(&b)));
    let mut to_split = vec![false; c];
    for &k in &order[..n_split] {
        to_split[k] = true;
    }
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut vars = Vec::new();
    let mut extra_w = Vec::new();
    let mut extra_m = Vec::new();
    let mut extra_v = Vec::new();
    for k in 0..c {
        let m = ubm.mean(k);
        let v = ubm.variance(k);
        if to_split[k] {
            let signs: Vec<f64> = (0..dim).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            weights.push(ubm.weights[k] / 2.0);
            extra_w.push(ubm.weights[k] / 2.0);
            for i in 0..dim {
                let delta = perturbation * v[i].sqrt() * signs[i];
                means.push(m[i] + delta);
                extra_m.push(m[i] - delta);
            }
            vars.extend_from_slice(v);
            extra_v.extend_from_slice(v);
        } else {
            weights.push(ubm.weights[k]);
            means.extend_from_slice(m);
            vars.extend_from_slice(v);
        }
    }
    weights.extend(extra_w);
    means.extend(extra_m);
    vars.extend(extra_v);
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    GmmUbm::new(weights, means, vars, dim)
}

/// Trains a UBM by EM with binary splitting from the global Gaussian.
///
/// Only speech frames are used. Variances are floored at a fraction of the
/// global variance (with an absolute minimum of 1e-8).
pub fn train_ubm(
    features: &[FeatureMatrix],
    config: &UbmTrainConfig,
    workers: &Workers,
) -> Result<(GmmUbm, UbmTrainLog)> {
    let c_target = config.components;
    if c_target == 0 {
        return Err(Error::Config("UBM needs at least one component".into()));
    }
    let dim = features
        .first()
        .map(|f| f.dim())
        .ok_or_else(|| Error::Empty("UBM training features".into()))?;
    let mut frames = Vec::new();
    for f in features {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: f.dim() });
        }
        for r in f.speech_rows() {
            frames.extend_from_slice(r);
        }
    }
    let n = frames.len() / dim;
    if n < 50 * c_target {
        return Err(Error::InsufficientData(format!(
            "{n} speech frames for {c_target} components (need {})",
            50 * c_target
        )));
    }

    let mut mean = vec![0.0; dim];
    for x in frames.chunks_exact(dim) {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for x in frames.chunks_exact(dim) {
        for i in 0..dim {
            var[i] += (x[i] - mean[i]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    let floor: Vec<f64> = var.iter().map(|v| (v * config.variance_floor).max(1e-8)).collect();
    let init_var: Vec<f64> = var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();

    let mut ubm = GmmUbm::new(vec![1.0], mean, init_var, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = UbmTrainLog::default();
    loop {
        for _ in 0..config.iters_per_split {
            let acc = e_step(&frames, dim, &ubm, workers)?;
            log.iterations.push((ubm.n_components(), acc.ll / n as f64));
            ubm = m_step(&acc, &ubm, &floor)?;
        }
        if ubm.n_components() >= c_target {
            break;
        }
        ubm = split(&ubm, c_target, config.perturbation, &mut rng)?;
    }
    let acc = e_step(&frames, dim, &ubm, workers)?;
    log.iterations.push((ubm.n_components(), acc.ll / n as f64));
    Ok((ubm, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn features(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        FeatureMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn single_component_is_global_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.gen_range(-1.0..3.0), rng.gen_range(0.0..0.5)])
            .collect();
        let n = rows.len() as f64;
        let (ubm, _) = train_ubm(&[features(rows.clone())], &UbmTrainConfig::new(1, 0), &Workers::single()).unwrap();
        for d in 0..2 {
            let m = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            let v = rows.iter().map(|r| (r[d] - m).powi(2)).sum::<f64>() / n;
            assert!((ubm.mean(0)[d] - m).abs() < 1e-9);
            assert!((ubm.variance(0)[d] - v).abs() < 1e-9);
        }
    }

    #[test]
    fn two_clusters_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let centers = [[-5.0, 2.0], [5.0, -2.0]];
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|i| {
                let c = centers[i % 2];
                vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]
            })
            .collect();
        let (ubm, log) = train_ubm(&[features(rows)], &UbmTrainConfig::new(2, 3), &Workers::single()).unwrap();
        for c in centers {
            let best = (0..2)
                .map(|k| ((ubm.mean(k)[0] - c[0]).powi(2) + (ubm.mean(k)[1] - c[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.1, "centre {c:?} off by {best}");
        }
        assert!(log.worst_decrease() <= 1e-6);
    }

    #[test]
    fn constant_frames_hit_the_floor() {
        let rows = vec![vec![1.5, -2.0, 0.0]; 500];
        let (ubm, _) = train_ubm(&[features(rows)], &UbmTrainConfig::new(4, 0), &Workers::single()).unwrap();
        assert!(ubm.variances().iter().all(|&v| v == 1e-8));
        for k in 0..4 {
            for (m, t) in ubm.mean(k).iter().zip([1.5, -2.0, 0.0]) {
                assert!((m - t).abs() < 1e-3);
            }
        }
        assert!((ubm.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_little_data() {
        let rows = vec![vec![0.0]; 100];
        assert!(matches!(
            train_ubm(&[features(rows)], &UbmTrainConfig::new(4, 0), &Workers::single()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn likelihood_monotone_and_non_power_of_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..3000)
            .map(|i| {
                let c = (i % 5) as f64 * 2.5;
                vec![c + noise.sample(&mut rng), (c * 0.7).sin() * 3.0 + noise.sample(&mut rng), noise.sample(&mut rng)]
            })
            .collect();
        let (ubm, log) = train_ubm(&[features(rows)], &UbmTrainConfig::new(6, 9), &Workers::single()).unwrap();
        assert_eq!(ubm.n_components(), 6);
        assert!(log.worst_decrease() <= 1e-6, "decrease {}", log.worst_decrease());
    }

    #[test]
    fn worker_count_does_not_change_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..9000).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>() * 2.0]).collect();
        let f = [features(rows)];
        let (a, _) = train_ubm(&f, &UbmTrainConfig::new(4, 1), &Workers::new(1)).unwrap();
        let (b, _) = train_ubm(&f, &UbmTrainConfig::new(4, 1), &Workers::new(4)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }
}
