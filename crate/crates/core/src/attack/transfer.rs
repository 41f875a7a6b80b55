use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::mean_ci;
use crate::{Error, Result};

use super::{AttackScore, Condition, RankCategory, RankedTargets};

pub const TRANSFER_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMean {
    pub rank_category: RankCategory,
    pub condition: Condition,
    pub target_id: String,
    pub mean_llr: f64,
    pub ci_halfwidth: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerTransfer {
    pub attacker_id: String,
    pub categories: Vec<CategoryMean>,
    /// closest > median > furthest in the attacked system, per attack condition.
    pub preserved: BTreeMap<Condition, bool>,
    /// Rank correlation between the two systems' full target rankings.
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub schema_version: u32,
    pub attackers: Vec<AttackerTransfer>,
    pub preserved_count: BTreeMap<Condition, usize>,
    pub median_spearman: f64,
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation with average ranks for ties. Zero when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData("rank correlation needs at least 2 pairs".into()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Checks whether the attacker-side ordering carries over to the attacked system.
///
/// `ranked_a` and `ranked_b` rank the same targets for each attacker under the
/// two systems; `scores_b` are the attack trials scored by the attacked system.
pub fn transfer_report(ranked_a: &[RankedTargets], ranked_b: &[RankedTargets], scores_b: &[AttackScore]) -> Result<TransferReport> {
    let mut attackers = Vec::new();
    for ra in ranked_a {
        let rb = ranked_b
            .iter()
            .find(|r| r.attacker_id == ra.attacker_id && r.filter_tag == ra.filter_tag)
            .ok_or_else(|| Error::UnknownId(format!("no attacked-system ranking for {}", ra.attacker_id)))?;
        let mut xa = Vec::with_capacity(ra.entries.len());
        let mut xb = Vec::with_capacity(ra.entries.len());
        for (t, s) in &ra.entries {
            let sb = rb
                .score_of(t)
                .ok_or_else(|| Error::UnknownId(format!("target {t} missing from attacked-system ranking")))?;
            xa.push(*s);
            xb.push(sb);
        }
        if rb.entries.len() != ra.entries.len() {
            return Err(Error::InvalidRecord {
                id: ra.attacker_id.clone(),
                reason: "rankings cover different target sets".into(),
            });
        }
        let rho = spearman(&xa, &xb)?;

        let mut cells: BTreeMap<(RankCategory, Condition, String), Vec<f64>> = BTreeMap::new();
        for s in scores_b.iter().filter(|s| s.trial.assignment.attacker_id == ra.attacker_id) {
            let a = &s.trial.assignment;
            cells
                .entry((a.rank_category, s.trial.condition, a.target_id.clone()))
                .or_default()
                .push(s.llr);
        }
        let mut categories = Vec::new();
        for ((cat, cond, target), v) in &cells {
            let (mean, ci) = mean_ci(v)?;
            categories.push(CategoryMean {
                rank_category: *cat,
                condition: *cond,
                target_id: target.clone(),
                mean_llr: mean,
                ci_halfwidth: ci,
                n_trials: v.len(),
            });
        }
        let mut preserved = BTreeMap::new();
        for cond in [Condition::ZeroEffort, Condition::Mimicry] {
            let mean_of = |cat: RankCategory| -> Result<f64> {
                let v: Vec<f64> = cells
                    .iter()
                    .filter(|((c, k, _), _)| *c == cat && *k == cond)
                    .flat_map(|(_, v)| v.iter().copied())
                    .collect();
                if v.is_empty() {
                    return Err(Error::InsufficientData(format!(
                        "attacker {} has no {cond} trials for the {cat} target",
                        ra.attacker_id
                    )));
                }
                Ok(v.iter().sum::<f64>() / v.len() as f64)
            };
            let (c, m, f) = (
                mean_of(RankCategory::Closest)?,
                mean_of(RankCategory::Median)?,
                mean_of(RankCategory::Furthest)?,
            );
            preserved.insert(cond, c > m && m > f);
        }
        attackers.push(AttackerTransfer {
            attacker_id: ra.attacker_id.clone(),
            categories,
            preserved,
            spearman: rho,
        });
    }
    let mut preserved_count = BTreeMap::new();
    for cond in [Condition::ZeroEffort, Condition::Mimicry] {
        preserved_count.insert(cond, attackers.iter().filter(|a| a.preserved[&cond]).count());
    }
    let median_spearman = median(attackers.iter().map(|a| a.spearman).collect());
    Ok(TransferReport {
        schema_version: TRANSFER_SCHEMA_VERSION,
        attackers,
        preserved_count,
        median_spearman,
    })
}
