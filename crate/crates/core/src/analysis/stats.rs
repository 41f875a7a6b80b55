use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attack::{AttackScore, Condition, LanguagePool, RankCategory};
use crate::backend::{Domain, TrialLabel, TrialScore};
use crate::{Error, Result};

pub const HISTOGRAM_BINS: usize = 40;

/// Mean and 95% half-width, 1.96 times the standard error of the mean.
///
/// The standard error uses the population standard deviation, so `{0, 2}`
/// gives `(1, 1.96 / sqrt 2)`.
pub fn mean_ci(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("mean of no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, 1.96 * var.sqrt() / n.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub rank_category: RankCategory,
    pub language_pool: LanguagePool,
    pub condition: Condition,
    pub mean_llr: f64,
    pub ci_halfwidth: f64,
    pub n_trials: usize,
}

/// One summary per category, language pool and condition present in `scores`.
pub fn summarize_categories(scores: &[AttackScore]) -> Vec<CategorySummary> {
    let mut cells: BTreeMap<(RankCategory, LanguagePool, Condition), Vec<f64>> = BTreeMap::new();
    for s in scores {
        let a = &s.trial.assignment;
        cells
            .entry((a.rank_category, a.language_pool, s.trial.condition))
            .or_default()
            .push(s.llr);
    }
    cells
        .into_iter()
        .map(|((cat, pool, cond), mut v)| {
            // Sorting first makes the sums independent of trial order.
            v.sort_by(f64::total_cmp);
            let (mean, ci) = mean_ci(&v).expect("cells are non-empty");
            CategorySummary {
                rank_category: cat,
                language_pool: pool,
                condition: cond,
                mean_llr: mean,
                ci_halfwidth: ci,
                n_trials: v.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicryDelta {
    /// Which ASV system scored the trials, e.g. `attacker` or `attacked`.
    pub system: String,
    pub rank_category: RankCategory,
    /// Mean of mimicry minus zero-effort over content-paired trials.
    pub delta_mean: f64,
    pub ci_halfwidth: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSet {
    pub deltas: Vec<MimicryDelta>,
    /// Attack trials with no counterpart of the other condition.
    pub unpaired: usize,
}

/// Mimicry minus zero-effort score differences, pooled over attackers,
/// language pools and utterances, one row per category.
///
/// Trials pair up when they share attacker, target, category and prompt.
pub fn mimicry_deltas(scores: &[AttackScore], system: &str) -> DeltaSet {
    type Key = (RankCategory, String, String, LanguagePool, String);
    let mut groups: BTreeMap<Key, (Vec<(String, f64)>, Vec<(String, f64)>)> = BTreeMap::new();
    let mut unpaired = 0;
    for s in scores {
        let t = &s.trial;
        let slot = match t.condition {
            Condition::ZeroEffort => 0,
            Condition::Mimicry => 1,
            Condition::Genuine => continue,
        };
        let Some(prompt) = t.prompt_id.clone() else {
            unpaired += 1;
            continue;
        };
        let a = &t.assignment;
        let key = (a.rank_category, a.attacker_id.clone(), a.target_id.clone(), a.language_pool, prompt);
        let g = groups.entry(key).or_default();
        let item = (t.test_utterance_id.clone(), s.llr);
        if slot == 0 {
            g.0.push(item)
        } else {
            g.1.push(item)
        }
    }
    let mut per_cat: BTreeMap<RankCategory, Vec<f64>> = BTreeMap::new();
    for ((cat, ..), (mut ze, mut mi)) in groups {
        ze.sort_by(|a, b| a.0.cmp(&b.0));
        mi.sort_by(|a, b| a.0.cmp(&b.0));
        let n = ze.len().min(mi.len());
        unpaired += ze.len() + mi.len() - 2 * n;
        let d = per_cat.entry(cat).or_default();
        for k in 0..n {
            d.push(mi[k].1 - ze[k].1);
        }
    }
    let deltas = per_cat
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(cat, mut v)| {
            v.sort_by(f64::total_cmp);
            let (mean, ci) = mean_ci(&v).expect("non-empty");
            MimicryDelta {
                system: system.to_string(),
                rank_category: cat,
                delta_mean: mean,
                ci_halfwidth: ci,
                n_pairs: v.len(),
            }
        })
        .collect();
    DeltaSet { deltas, unpaired }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDistribution {
    pub domain: Domain,
    pub hypothesis: TrialLabel,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std: f64,
    pub n_trials: usize,
}

/// Histograms per domain and hypothesis over bin edges shared by all cells.
pub fn domain_distributions(scores: &[TrialScore]) -> Vec<DomainDistribution> {
    let mut cells: BTreeMap<(Domain, TrialLabel), Vec<f64>> = BTreeMap::new();
    for s in scores.iter().filter(|s| s.label != TrialLabel::Unknown) {
        cells.entry((s.domain, s.label)).or_default().push(s.llr);
    }
    if cells.is_empty() {
        return Vec::new();
    }
    let lo = cells.values().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = cells.values().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| lo + i as f64 * width).collect();
    cells
        .into_iter()
        .map(|((domain, hypothesis), mut v)| {
            v.sort_by(f64::total_cmp);
            let mut counts = vec![0; HISTOGRAM_BINS];
            for &x in &v {
                let b = (((x - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
                counts[b] += 1;
            }
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            DomainDistribution {
                domain,
                hypothesis,
                bin_edges: edges.clone(),
                counts,
                mean,
                std,
                n_trials: v.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{AttackTrial, TargetAssignment};
    use rand::{Rng, SeedableRng};
    use rand::seq::SliceRandom;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn mean_ci_examples() {
        assert_eq!(mean_ci(&[1.0; 4]).unwrap(), (1.0, 0.0));
        let (m, h) = mean_ci(&[0.0, 2.0]).unwrap();
        assert_eq!(m, 1.0);
        assert!((h - 1.96 / 2f64.sqrt()).abs() < 1e-12);
        assert!((h - 1.3859).abs() < 1e-4);
        assert!(mean_ci(&[]).is_err());
    }

    #[test]
    fn mean_ci_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..25).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (m, h) = mean_ci(&x).unwrap();
        for (a, b) in [(2.0, 1.0), (-3.0, 0.5)] {
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let (my, hy) = mean_ci(&y).unwrap();
            assert!((my - (a * m + b)).abs() < 1e-9);
            assert!((hy - a.abs() * h).abs() < 1e-9);
        }
    }

    fn attack(cat: RankCategory, pool: LanguagePool, cond: Condition, prompt: &str, llr: f64) -> AttackScore {
        AttackScore {
            trial: AttackTrial {
                assignment: TargetAssignment {
                    attacker_id: "A1".into(),
                    rank_category: cat,
                    target_id: "T1".into(),
                    language_pool: pool,
                },
                condition: cond,
                prompt_id: Some(prompt.into()),
                test_utterance_id: format!("{cond}_{prompt}"),
                enroll_utterance_ids: vec!["e".into()],
            },
            llr,
        }
    }

    #[test]
    fn summaries_by_cell_and_order_invariant() {
        let mut s = vec![
            attack(RankCategory::Closest, LanguagePool::Native, Condition::ZeroEffort, "p1", 1.0),
            attack(RankCategory::Closest, LanguagePool::Native, Condition::ZeroEffort, "p2", 3.0),
            attack(RankCategory::Furthest, LanguagePool::Native, Condition::Mimicry, "p1", -1.0),
            attack(RankCategory::Common, LanguagePool::Nonnative, Condition::Genuine, "p1", 0.1),
        ];
        let a = summarize_categories(&s);
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].mean_llr, 2.0);
        assert_eq!(a[0].n_trials, 2);
        s.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(summarize_categories(&s), a);
    }

    #[test]
    fn deltas_pair_by_prompt() {
        let s = vec![
            attack(RankCategory::Median, LanguagePool::Native, Condition::ZeroEffort, "p1", 1.0),
            attack(RankCategory::Median, LanguagePool::Native, Condition::Mimicry, "p1", 2.0),
            attack(RankCategory::Median, LanguagePool::Native, Condition::ZeroEffort, "p2", 3.0),
            attack(RankCategory::Median, LanguagePool::Native, Condition::Mimicry, "p2", 5.0),
            attack(RankCategory::Median, LanguagePool::Native, Condition::Mimicry, "p3", 9.0),
        ];
        let d = mimicry_deltas(&s, "attacked");
        assert_eq!(d.deltas.len(), 1);
        assert_eq!(d.deltas[0].delta_mean, 1.5);
        assert_eq!(d.deltas[0].n_pairs, 2);
        assert_eq!(d.unpaired, 1);

        let same = vec![
            attack(RankCategory::Closest, LanguagePool::Native, Condition::ZeroEffort, "p1", 4.0),
            attack(RankCategory::Closest, LanguagePool::Native, Condition::Mimicry, "p1", 4.0),
            attack(RankCategory::Closest, LanguagePool::Native, Condition::ZeroEffort, "p2", -2.0),
            attack(RankCategory::Closest, LanguagePool::Native, Condition::Mimicry, "p2", -2.0),
        ];
        let d = mimicry_deltas(&same, "attacked");
        assert_eq!((d.deltas[0].delta_mean, d.deltas[0].ci_halfwidth), (0.0, 0.0));
    }

    fn ts(domain: Domain, label: TrialLabel, llr: f64) -> TrialScore {
        TrialScore {
            enroll_ref: "e".into(),
            test_utterance_id: "t".into(),
            label,
            domain,
            llr,
        }
    }

    #[test]
    fn histograms() {
        let eq: Vec<TrialScore> = (0..10).map(|_| ts(Domain::TargetDomain, TrialLabel::Nontarget, 2.5)).collect();
        let d = domain_distributions(&eq);
        assert_eq!(d[0].counts.iter().filter(|&&c| c > 0).count(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        let mut two: Vec<TrialScore> = base.iter().map(|&x| ts(Domain::TargetDomain, TrialLabel::Nontarget, x)).collect();
        two.extend(base.iter().rev().map(|&x| ts(Domain::CrossDomain, TrialLabel::Nontarget, x)));
        let d = domain_distributions(&two);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].counts, d[1].counts);
        assert_eq!(d[0].bin_edges, d[1].bin_edges);

        let mut shifted = Vec::new();
        for _ in 0..1000 {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            shifted.push(ts(Domain::TargetDomain, TrialLabel::Nontarget, x));
            shifted.push(ts(Domain::CrossDomain, TrialLabel::Nontarget, y + 2.0));
        }
        let d = domain_distributions(&shifted);
        for c in &d {
            assert_eq!(c.counts.iter().sum::<usize>(), c.n_trials);
        }
        let diff = d.iter().find(|c| c.domain == Domain::CrossDomain).unwrap().mean
            - d.iter().find(|c| c.domain == Domain::TargetDomain).unwrap().mean;
        assert!((diff - 2.0).abs() < 0.1, "{diff}");
    }
}
