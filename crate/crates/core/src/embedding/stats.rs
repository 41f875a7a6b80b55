use crate::corpus::{Artifact, Decoder, Encoder};
use crate::frontend::FeatureMatrix;
use crate::{Error, Result};

use super::GmmUbm;

/// Zeroth- and centered first-order statistics of an utterance against a UBM.
#[derive(Debug, Clone, PartialEq)]
pub struct BwStats {
    /// Occupancy per component, length C.
    pub n: Vec<f64>,
    /// Centered first-order statistics, C x D row-major.
    pub f: Vec<f64>,
    pub dim: usize,
}

impl BwStats {
    pub fn zeros(components: usize, dim: usize) -> Self {
        BwStats {
            n: vec![0.0; components],
            f: vec![0.0; components * dim],
            dim,
        }
    }

    pub fn n_components(&self) -> usize {
        self.n.len()
    }

    pub fn total_occupancy(&self) -> f64 {
        self.n.iter().sum()
    }

    pub fn merge(&mut self, other: &BwStats) -> Result<()> {
        if other.n.len() != self.n.len() || other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.f.len(),
                got: other.f.len(),
            });
        }
        self.n.iter_mut().zip(&other.n).for_each(|(a, b)| *a += b);
        self.f.iter_mut().zip(&other.f).for_each(|(a, b)| *a += b);
        Ok(())
    }
}

impl Artifact for BwStats {
    const KIND: &'static str = "bw-stats";
    const VERSION: u32 = 1;

    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.dim as u64);
        enc.f64s(&self.n);
        enc.f64s(&self.f);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        let dim = dec.len()?;
        let n = dec.f64s()?;
        let f = dec.f64s()?;
        if f.len() != n.len() * dim {
            return Err(Error::Corrupt("statistics shape".into()));
        }
        Ok(BwStats { n, f, dim })
    }
}

/// Accumulates statistics over the speech frames of `feat`.
pub fn accumulate_bw(feat: &FeatureMatrix, ubm: &GmmUbm) -> Result<BwStats> {
    let dim = ubm.dim();
    if feat.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: feat.dim() });
    }
    if feat.n_speech() == 0 {
        return Err(Error::Empty("no speech frames".into()));
    }
    let c = ubm.n_components();
    let mut stats = BwStats::zeros(c, dim);
    let mut post = vec![0.0; c];
    for x in feat.speech_rows() {
        let ll = ubm.posteriors(x, &mut post);
        if !ll.is_finite() {
            return Err(Error::Numeric("non-finite frame likelihood".into()));
        }
        for k in 0..c {
            let g = post[k];
            if g == 0.0 {
                continue;
            }
            stats.n[k] += g;
            let m = ubm.mean(k);
            let f = &mut stats.f[k * dim..(k + 1) * dim];
            for i in 0..dim {
                f[i] += g * (x[i] - m[i]);
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separated_ubm() -> GmmUbm {
        GmmUbm::new(
            vec![0.5, 0.3, 0.2],
            vec![0.0, 0.0, 20.0, 0.0, 0.0, 20.0],
            vec![1.0; 6],
            2,
        )
        .unwrap()
    }

    #[test]
    fn frame_at_component_mean() {
        let ubm = separated_ubm();
        let feat = FeatureMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let s = accumulate_bw(&feat, &ubm).unwrap();
        // Nearest competitor is 20 sigma away: posterior ratio exp(-200) * w ratio.
        let other = (0.3f64 / 0.5).ln() - 200.0;
        assert!((s.n[0] - 1.0).abs() < 1e-6);
        assert!(s.n[1] < other.exp() * 2.0 + 1e-12);
        assert!(s.f.iter().take(2).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn occupancy_sums_to_frames_and_split_merge() {
        let ubm = separated_ubm();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..301)
            .map(|_| vec![rng.gen_range(-5.0..25.0), rng.gen_range(-5.0..25.0)])
            .collect();
        let feat = FeatureMatrix::from_rows(&rows).unwrap();
        let whole = accumulate_bw(&feat, &ubm).unwrap();
        assert!((whole.total_occupancy() - 301.0).abs() < 1e-9);
        let mut merged = accumulate_bw(&feat.slice(0, 120), &ubm).unwrap();
        merged.merge(&accumulate_bw(&feat.slice(120, 301), &ubm).unwrap()).unwrap();
        for (a, b) in whole.n.iter().chain(&whole.f).zip(merged.n.iter().chain(&merged.f)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn no_speech_is_an_error() {
        let ubm = separated_ubm();
        let feat = FeatureMatrix::from_rows(&[vec![0.0, 0.0]])
            .unwrap()
            .with_speech_flags(vec![false])
            .unwrap();
        assert!(matches!(accumulate_bw(&feat, &ubm), Err(Error::Empty(_))));
    }
}
