use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::corpus::SpeakerRecord;
use crate::embedding::{average_embeddings, Embedding};
use crate::parallel::Workers;
use crate::{Error, Result};

string_enum!(RankCategory {
    Closest => "closest",
    Median => "median",
    Furthest => "furthest",
    Common => "common",
});
string_enum!(LanguagePool { Native => "native", Nonnative => "nonnative" });

/// Targets in descending score order for one attacker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTargets {
    pub attacker_id: String,
    pub filter_tag: String,
    pub entries: Vec<(String, f64)>,
}

impl RankedTargets {
    pub fn position(&self, target_id: &str) -> Option<usize> {
        self.entries.iter().position(|(t, _)| t == target_id)
    }

    pub fn score_of(&self, target_id: &str) -> Option<f64> {
        self.entries.iter().find(|(t, _)| t == target_id).map(|e| e.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetAssignment {
    pub attacker_id: String,
    pub rank_category: RankCategory,
    pub target_id: String,
    pub language_pool: LanguagePool,
}

/// A target speaker with its pooled embeddings.
pub struct TargetCandidate<'a> {
    pub speaker: &'a SpeakerRecord,
    pub embeddings: Vec<Embedding>,
}

/// Sorts scores descending with ties broken by ascending target id.
pub fn rank_from_scores(attacker_id: &str, filter_tag: &str, mut scores: Vec<(String, f64)>) -> Result<RankedTargets> {
    if scores.is_empty() {
        return Err(Error::Empty(format!("no targets to rank for {attacker_id}")));
    }
    if let Some((t, _)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score for target {t}")));
    }
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(RankedTargets {
        attacker_id: attacker_id.to_string(),
        filter_tag: filter_tag.to_string(),
        entries: scores,
    })
}

/// Scores the attacker's averaged natural-voice embedding against every target
/// that passes `filter`, each target represented by its pooled embeddings.
pub fn rank_targets(
    backend: &Backend,
    attacker_id: &str,
    attacker_natural: &[Embedding],
    targets: &[TargetCandidate],
    filter: impl Fn(&SpeakerRecord) -> bool,
    filter_tag: &str,
    workers: &Workers,
) -> Result<RankedTargets> {
    let attacker = average_embeddings(attacker_natural).map_err(|e| e.context(format!("attacker {attacker_id}")))?;
    let pool: Vec<&TargetCandidate> = targets.iter().filter(|t| filter(t.speaker)).collect();
    if pool.is_empty() {
        return Err(Error::Empty(format!("filter {filter_tag:?} leaves no targets")));
    }
    let scores = workers.map(&pool, |t| {
        backend
            .score(&t.embeddings, &attacker)
            .map(|s| (t.speaker.speaker_id.clone(), s))
            .map_err(|e| e.context(format!("target {}", t.speaker.speaker_id)))
    });
    let scores = scores.into_iter().collect::<Result<Vec<_>>>()?;
    rank_from_scores(attacker_id, filter_tag, scores)
}

/// Closest, median (lower middle) and furthest targets.
pub fn select_targets(ranked: &RankedTargets, pool: LanguagePool) -> Result<[TargetAssignment; 3]> {
    let n = ranked.entries.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "{} has {n} ranked targets, need at least 3",
            ranked.attacker_id
        )));
    }
    let pick = |category, i: usize| TargetAssignment {
        attacker_id: ranked.attacker_id.clone(),
        rank_category: category,
        target_id: ranked.entries[i].0.clone(),
        language_pool: pool,
    };
    Ok([
        pick(RankCategory::Closest, 0),
        pick(RankCategory::Median, (n - 1) / 2),
        pick(RankCategory::Furthest, n - 1),
    ])
}

fn bad_row(row: usize, reason: impl Into<String>) -> Error {
    Error::InvalidRecord {
        id: format!("row {row}"),
        reason: reason.into(),
    }
}

pub fn write_assignments_csv(w: impl Write, assignments: &[TargetAssignment]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["attacker_id", "rank_category", "target_id", "language_pool"])?;
    for a in assignments {
        out.write_record([
            a.attacker_id.as_str(),
            a.rank_category.as_str(),
            &a.target_id,
            a.language_pool.as_str(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_assignments_csv(r: impl Read) -> Result<Vec<TargetAssignment>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(bad_row(i + 1, "expected attacker_id,rank_category,target_id,language_pool"));
        }
        out.push(TargetAssignment {
            attacker_id: rec[0].trim().to_string(),
            rank_category: rec[1].parse().map_err(|e: String| bad_row(i + 1, e))?,
            target_id: rec[2].trim().to_string(),
            language_pool: rec[3].parse().map_err(|e: String| bad_row(i + 1, e))?,
        });
    }
    Ok(out)
}

/// CSV `attacker_id,filter_tag,rank,target_id,score`, ranks from 1.
pub fn write_rankings_csv(w: impl Write, rankings: &[RankedTargets]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["attacker_id", "filter_tag", "rank", "target_id", "score"])?;
    for r in rankings {
        for (i, (t, s)) in r.entries.iter().enumerate() {
            out.write_record([
                r.attacker_id.as_str(),
                &r.filter_tag,
                &(i + 1).to_string(),
                t,
                &format!("{s:e}"),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_rankings_csv(r: impl Read) -> Result<Vec<RankedTargets>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: Vec<RankedTargets> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(bad_row(i + 1, "expected attacker_id,filter_tag,rank,target_id,score"));
        }
        let score: f64 = rec[4].trim().parse().map_err(|_| bad_row(i + 1, "bad score"))?;
        let (attacker, tag) = (rec[0].trim(), rec[1].trim());
        match out.last_mut() {
            Some(r) if r.attacker_id == attacker && r.filter_tag == tag => {
                r.entries.push((rec[3].trim().to_string(), score))
            }
            _ => out.push(RankedTargets {
                attacker_id: attacker.to_string(),
                filter_tag: tag.to_string(),
                entries: vec![(rec[3].trim().to_string(), score)],
            }),
        }
    }
    for r in &out {
        if r.entries.windows(2).any(|w| w[0].1 < w[1].1) {
            return Err(Error::InvalidRecord {
                id: r.attacker_id.clone(),
                reason: "ranking is not in descending score order".into(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranked(scores: &[(&str, f64)]) -> RankedTargets {
        rank_from_scores("A", "all", scores.iter().map(|(t, s)| (t.to_string(), *s)).collect()).unwrap()
    }

    fn ids(r: &RankedTargets) -> Vec<&str> {
        r.entries.iter().map(|e| e.0.as_str()).collect()
    }

    #[test]
    fn sort_and_tie_break() {
        assert_eq!(ids(&ranked(&[("t1", 2.0), ("t2", 5.0), ("t3", -1.0)])), ["t2", "t1", "t3"]);
        assert_eq!(ids(&ranked(&[("tb", 1.0), ("ta", 1.0)])), ["ta", "tb"]);
        assert!(rank_from_scores("A", "all", vec![]).is_err());
    }

    #[test]
    fn median_index_rule() {
        for (n, median) in [(3, 1), (4, 1), (44, 21), (7365, 3682)] {
            let r = rank_from_scores("A", "all", (0..n).map(|i| (format!("t{i:05}"), -(i as f64))).collect()).unwrap();
            let sel = select_targets(&r, LanguagePool::Native).unwrap();
            assert_eq!(sel[0].target_id, "t00000");
            assert_eq!(sel[1].target_id, format!("t{median:05}"));
            assert_eq!(sel[2].target_id, format!("t{:05}", n - 1));
        }
        assert!(select_targets(&ranked(&[("a", 1.0), ("b", 0.0)]), LanguagePool::Native).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let r = ranked(&[("t1", 2.5), ("t2", -0.125), ("t3", 7.0)]);
        let mut buf = Vec::new();
        write_rankings_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert_eq!(read_rankings_csv(&buf[..]).unwrap(), vec![r.clone()]);
        let a = select_targets(&r, LanguagePool::Nonnative).unwrap().to_vec();
        let mut buf = Vec::new();
        write_assignments_csv(&mut buf, &a).unwrap();
        assert_eq!(read_assignments_csv(&buf[..]).unwrap(), a);
        assert!(read_assignments_csv(&b"attacker_id,rank_category,target_id,language_pool\nA,nearest,t1,native\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn shift_invariance(scores in prop::collection::vec(-50.0f64..50.0, 3..30), c in -100.0f64..100.0) {
            let base: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, &s)| (format!("t{i:02}"), s)).collect();
            let shifted = base.iter().map(|(t, s)| (t.clone(), s + c)).collect();
            let a = rank_from_scores("A", "all", base).unwrap();
            let b = rank_from_scores("A", "all", shifted).unwrap();
            // Adding c can merge or split near-ties only through rounding.
            let exact = a.entries.windows(2).all(|w| (w[0].1 - w[1].1).abs() > 1e-9);
            if exact {
                prop_assert_eq!(ids(&a), ids(&b));
            }
        }

        #[test]
        fn reversal_duality(scores in prop::collection::hash_set(-1000i32..1000, 3..30)) {
            let base: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, &s)| (format!("t{i:02}"), s as f64)).collect();
            let neg = base.iter().map(|(t, s)| (t.clone(), -s)).collect();
            let a = select_targets(&rank_from_scores("A", "all", base).unwrap(), LanguagePool::Native).unwrap();
            let b = select_targets(&rank_from_scores("A", "all", neg).unwrap(), LanguagePool::Native).unwrap();
            prop_assert_eq!(&a[0].target_id, &b[2].target_id);
            prop_assert_eq!(&a[2].target_id, &b[0].target_id);
        }
    }
}
