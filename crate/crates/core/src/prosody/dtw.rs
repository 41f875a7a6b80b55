use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::frontend::FeatureMatrix;
use crate::{Error, Result};

use super::FormantTrack;

/// Monotone alignment between two frame sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPath {
    pub pairs: Vec<(usize, usize)>,
    /// Sum of local costs along the path.
    pub cost: f64,
}

impl AlignmentPath {
    pub fn mean_cost(&self) -> f64 {
        self.cost / self.pairs.len() as f64
    }
}

/// 1 - cosine similarity; a zero vector is at distance 1 from anything
/// except another zero vector.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    match (na > 0.0, nb > 0.0) {
        (true, true) => 1.0 - dot / (na.sqrt() * nb.sqrt()),
        (false, false) => 0.0,
        _ => 1.0,
    }
}

/// Minimum-cost path through a row-major `n x m` local cost matrix with steps
/// (1,0), (0,1), (1,1). Ties prefer the diagonal, then (1,0).
pub fn dtw_on_costs(cost: &[f64], n: usize, m: usize) -> Result<AlignmentPath> {
    if n == 0 || m == 0 {
        return Err(Error::Empty("cannot align an empty sequence".into()));
    }
    if cost.len() != n * m {
        return Err(Error::DimensionMismatch { expected: n * m, got: cost.len() });
    }
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = cost[i * m + j];
            if i == 0 && j == 0 {
                acc[0] = c;
                continue;
            }
            let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
            let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
            let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
            acc[i * m + j] = c + diag.min(up).min(left);
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut pairs = vec![(i, j)];
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
        let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
        let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    let total = pairs.iter().map(|&(a, b)| cost[a * m + b]).sum();
    Ok(AlignmentPath { pairs, cost: total })
}

/// Aligns two feature sequences under summed cosine distance.
pub fn dtw_align(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<AlignmentPath> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let (n, m) = (a.n_frames(), b.n_frames());
    if n == 0 || m == 0 {
        return Err(Error::Empty("cannot align an empty sequence".into()));
    }
    let mut cost = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            cost.push(cosine_distance(a.row(i), b.row(j)));
        }
    }
    dtw_on_costs(&cost, n, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormantDifference {
    pub d_hz: f64,
    /// Aligned pairs where both frames are reliable.
    pub frames_used: usize,
}

/// Mean absolute F1-F3 difference over aligned, mutually reliable frames.
pub fn formant_difference(a: &FormantTrack, b: &FormantTrack, path: &AlignmentPath) -> Result<FormantDifference> {
    let mut sum = 0.0;
    let mut used = 0;
    for &(i, j) in &path.pairs {
        if i >= a.n_frames() || j >= b.n_frames() {
            return Err(Error::DimensionMismatch {
                expected: a.n_frames().max(b.n_frames()),
                got: i.max(j) + 1,
            });
        }
        if !(a.reliable[i] && b.reliable[j]) {
            continue;
        }
        used += 1;
        for n in 0..3 {
            sum += (a.freqs[i][n] - b.freqs[j][n]).abs();
        }
    }
    if used == 0 {
        return Err(Error::InsufficientData("no mutually reliable aligned frames".into()));
    }
    Ok(FormantDifference {
        d_hz: sum / (3.0 * used as f64),
        frames_used: used,
    })
}

/// Row of the formant-difference report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormantDiffRow {
    pub attacker_id: String,
    pub target_id: String,
    pub condition: String,
    /// `None` when the pair was rejected.
    pub d_hz: Option<f64>,
    pub frames_used: usize,
    pub status: String,
}

/// CSV `attacker_id,target_id,condition,d_hz,frames_used,status`.
pub fn write_formant_diff_csv(w: impl Write, rows: &[FormantDiffRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["attacker_id", "target_id", "condition", "d_hz", "frames_used", "status"])?;
    for r in rows {
        out.write_record([
            r.attacker_id.clone(),
            r.target_id.clone(),
            r.condition.clone(),
            r.d_hz.map(|d| format!("{d:.6}")).unwrap_or_default(),
            r.frames_used.to_string(),
            r.status.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
