use super::FeatureMatrix;

/// Variances below this are treated as zero-variance dimensions.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Mean and variance normalisation with statistics from speech frames,
/// applied to all frames. Falls back to all frames if none are speech.
pub fn cmvn(feat: &FeatureMatrix) -> crate::Result<FeatureMatrix> {
    let dim = feat.dim();
    let use_all = feat.n_speech() < 2;
    if use_all {
        log::warn!("cmvn: fewer than 2 speech frames, using all {} frames", feat.n_frames());
    }
    let selected: Vec<&[f64]> = feat
        .rows()
        .zip(feat.speech_flags())
        .filter(|(_, &s)| use_all || s)
        .map(|(r, _)| r)
        .collect();
    let n = selected.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in &selected {
        for d in 0..dim {
            mean[d] += r[d];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in &selected {
        for d in 0..dim {
            var[d] += (r[d] - mean[d]).powi(2);
        }
    }
    let mut floored = 0;
    let inv_std: Vec<f64> = var
        .iter()
        .map(|&v| {
            let v = v / n;
            if v < VARIANCE_FLOOR {
                floored += 1;
                0.0
            } else {
                1.0 / v.sqrt()
            }
        })
        .collect();
    if floored > 0 {
        log::warn!("cmvn: {floored} zero-variance dimension(s) floored");
    }
    let data = feat
        .rows()
        .flat_map(|r| (0..dim).map(|d| (r[d] - mean[d]) * inv_std[d]).collect::<Vec<_>>())
        .collect();
    feat.with_data(data, dim)
}

/// Subtracts from each frame the mean over a centred window of
/// `window_frames` frames, clipped at the edges.
pub fn sliding_cmn(feat: &FeatureMatrix, window_frames: usize) -> FeatureMatrix {
    let n = feat.n_frames();
    let dim = feat.dim();
    let window = window_frames.max(1);
    let left = (window - 1) / 2;
    let right = window - 1 - left;
    // prefix[t] = sum of rows [0, t)
    let mut prefix = vec![0.0; (n + 1) * dim];
    for t in 0..n {
        for d in 0..dim {
            prefix[(t + 1) * dim + d] = prefix[t * dim + d] + feat.row(t)[d];
        }
    }
    let mut data = Vec::with_capacity(n * dim);
    for t in 0..n {
        let lo = t.saturating_sub(left);
        let hi = (t + right + 1).min(n);
        let count = (hi - lo) as f64;
        for d in 0..dim {
            let mean = (prefix[hi * dim + d] - prefix[lo * dim + d]) / count;
            data.push(feat.row(t)[d] - mean);
        }
    }
    feat.with_data(data, dim).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(feat: &FeatureMatrix, d: usize) -> (f64, f64) {
        let v: Vec<f64> = feat.speech_rows().map(|r| r[d]).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64)
    }

    proptest! {
        #[test]
        fn cmvn_zero_mean_unit_variance(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 5..40),
                                        mask in prop::collection::vec(any::<bool>(), 40)) {
            let f = FeatureMatrix::from_rows(&rows).unwrap();
            let mut flags: Vec<bool> = mask[..rows.len()].to_vec();
            flags[0] = true;
            flags[1] = true;
            let f = f.with_speech_flags(flags).unwrap();
            let g = cmvn(&f).unwrap();
            for d in 0..3 {
                let (_, raw_var) = stats(&f, d);
                let (m, v) = stats(&g, d);
                prop_assert!(m.abs() < 1e-9);
                if raw_var > 1e-6 {
                    prop_assert!((v - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn cmvn_idempotent_on_normalised_input() {
        let rows: Vec<Vec<f64>> = [-1.0, 1.0, -1.0, 1.0].iter().map(|&v| vec![v, -v]).collect();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        let g = cmvn(&f).unwrap();
        for (a, b) in f.data().iter().zip(g.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cmvn_constant_dimension_becomes_zero() {
        let rows: Vec<Vec<f64>> = (0..6).map(|t| vec![4.0, t as f64]).collect();
        let g = cmvn(&FeatureMatrix::from_rows(&rows).unwrap()).unwrap();
        assert!(g.rows().all(|r| r[0] == 0.0));
    }

    #[test]
    fn cmvn_applies_speech_stats_to_all_frames() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0], vec![2.0], vec![100.0]];
        let f = FeatureMatrix::from_rows(&rows).unwrap().with_speech_flags(vec![true, true, false]).unwrap();
        let g = cmvn(&f).unwrap();
        assert_eq!(g.row(0)[0], -1.0);
        assert_eq!(g.row(1)[0], 1.0);
        assert_eq!(g.row(2)[0], 99.0);
    }

    #[test]
    fn sliding_cmn_short_input_is_global_mean() {
        let rows: Vec<Vec<f64>> = (0..10).map(|t| vec![(t * t) as f64]).collect();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        let g = sliding_cmn(&f, 300);
        let mean = rows.iter().map(|r| r[0]).sum::<f64>() / 10.0;
        for t in 0..10 {
            assert!((g.row(t)[0] - (rows[t][0] - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn sliding_cmn_constant_is_zero() {
        let f = FeatureMatrix::from_rows(&vec![vec![7.5, -3.0]; 20]).unwrap();
        assert!(sliding_cmn(&f, 5).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sliding_cmn_step_window_three() {
        let x = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let g = sliding_cmn(&FeatureMatrix::from_rows(&rows).unwrap(), 3);
        // windows: [0,1], [0,2], [1,3], [2,4], [3,5], [4,5]
        let means = [0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0];
        for t in 0..6 {
            assert!((g.row(t)[0] - (x[t] - means[t])).abs() < 1e-12, "frame {t}");
        }
    }
}
