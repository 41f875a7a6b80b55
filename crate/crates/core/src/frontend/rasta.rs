use super::FeatureMatrix;

/// Numerator of the RASTA band-pass, applied to x[n], x[n-1], ..., x[n-4].
pub const RASTA_NUMERATOR: [f64; 5] = [0.2, 0.1, 0.0, -0.1, -0.2];
pub const RASTA_POLE: f64 = 0.94;

/// RASTA band-pass along time, independently per dimension.
///
/// Past inputs before the first frame replicate the first frame and the
/// filter state starts at zero, so a constant trajectory maps to zero.
pub fn rasta_filter(feat: &FeatureMatrix) -> FeatureMatrix {
    let n = feat.n_frames();
    let dim = feat.dim();
    let mut out = vec![0.0; n * dim];
    for d in 0..dim {
        let x = |t: isize| feat.row(t.max(0) as usize)[d];
        let mut y_prev = 0.0;
        for t in 0..n as isize {
            let mut y = RASTA_POLE * y_prev;
            for (k, b) in RASTA_NUMERATOR.iter().enumerate() {
                y += b * x(t - k as isize);
            }
            out[t as usize * dim + d] = y;
            y_prev = y;
        }
    }
    feat.with_data(out, dim).expect("shape preserved")
}
