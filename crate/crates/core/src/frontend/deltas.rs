use super::FeatureMatrix;
use crate::{Error, Result};

fn regression(rows: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let n = rows.len() as isize;
    let denom: f64 = 2.0 * (1..=window).map(|k| (k * k) as f64).sum::<f64>();
    let dim = rows[0].len();
    (0..n)
        .map(|t| {
            let mut out = vec![0.0; dim];
            for k in 1..=window as isize {
                let fwd = &rows[(t + k).min(n - 1) as usize];
                let back = &rows[(t - k).max(0) as usize];
                for d in 0..dim {
                    out[d] += k as f64 * (fwd[d] - back[d]);
                }
            }
            out.iter_mut().for_each(|v| *v /= denom);
            out
        })
        .collect()
}

/// Appends regression deltas and double deltas (edges replicated), tripling
/// the dimension.
pub fn append_deltas(feat: &FeatureMatrix, window: usize) -> Result<FeatureMatrix> {
    if window == 0 {
        return Err(Error::Config("delta window must be positive".into()));
    }
    if feat.n_frames() < 2 * window + 1 {
        return Err(Error::TooShort(format!(
            "{} frames, deltas need at least {}",
            feat.n_frames(),
            2 * window + 1
        )));
    }
    let stat: Vec<Vec<f64>> = feat.rows().map(|r| r.to_vec()).collect();
    let delta = regression(&stat, window);
    let delta2 = regression(&delta, window);
    let dim = feat.dim();
    let mut data = Vec::with_capacity(feat.n_frames() * dim * 3);
    for t in 0..feat.n_frames() {
        data.extend_from_slice(&stat[t]);
        data.extend_from_slice(&delta[t]);
        data.extend_from_slice(&delta2[t]);
    }
    feat.with_data(data, dim * 3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_track_has_zero_deltas() {
        let f = FeatureMatrix::from_rows(&vec![vec![3.0, -1.0]; 7]).unwrap();
        let d = append_deltas(&f, 2).unwrap();
        assert_eq!(d.dim(), 6);
        assert!(d.rows().all(|r| r[2..].iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn linear_ramp() {
        let rows: Vec<Vec<f64>> = (0..10).map(|t| vec![2.0 * t as f64, -(t as f64)]).collect();
        let d = append_deltas(&FeatureMatrix::from_rows(&rows).unwrap(), 2).unwrap();
        // Deltas are exact slopes away from the edges; double deltas vanish
        // where the delta window itself is interior.
        for t in 2..8 {
            assert!((d.row(t)[2] - 2.0).abs() < 1e-12);
            assert!((d.row(t)[3] + 1.0).abs() < 1e-12);
        }
        for t in 4..6 {
            assert!(d.row(t)[4].abs() < 1e-12 && d.row(t)[5].abs() < 1e-12);
        }
    }

    #[test]
    fn five_frame_regression_by_hand() {
        let x = [0.3, -1.2, 2.5, 0.7, 4.1];
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let d = append_deltas(&FeatureMatrix::from_rows(&rows).unwrap(), 2).unwrap();
        let at = |i: isize| x[i.clamp(0, 4) as usize];
        for t in 0..5isize {
            let expected = (1.0 * (at(t + 1) - at(t - 1)) + 2.0 * (at(t + 2) - at(t - 2))) / 10.0;
            assert!((d.row(t as usize)[1] - expected).abs() < 1e-12);
        }
        // middle frame written out in full
        let mid = ((0.7 - (-1.2)) + 2.0 * (4.1 - 0.3)) / 10.0;
        assert!((d.row(2)[1] - mid).abs() < 1e-12);
    }

    #[test]
    fn too_few_frames() {
        let f = FeatureMatrix::from_rows(&vec![vec![1.0]; 4]).unwrap();
        assert!(matches!(append_deltas(&f, 2), Err(Error::TooShort(_))));
    }
}
