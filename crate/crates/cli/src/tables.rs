//! CLI-only CSV formats.

use std::io::{Read, Write};

use mimicry_core::attack::TargetAssignment;
use mimicry_core::{Error, Result};
use serde::{Deserialize, Serialize};

fn bad_row(row: usize, reason: impl Into<String>) -> Error {
    Error::InvalidRecord {
        id: format!("row {row}"),
        reason: reason.into(),
    }
}

/// Held-out test utterances chosen for one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub assignment: TargetAssignment,
    pub test_utterances: Vec<String>,
    pub active_speech_s: f64,
}

pub fn write_selection(w: impl Write, rows: &[SelectionRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "attacker_id",
        "rank_category",
        "target_id",
        "language_pool",
        "test_utterances",
        "active_speech_s",
    ])?;
    for r in rows {
        out.write_record([
            r.assignment.attacker_id.clone(),
            r.assignment.rank_category.to_string(),
            r.assignment.target_id.clone(),
            r.assignment.language_pool.to_string(),
            r.test_utterances.join(";"),
            format!("{:.2}", r.active_speech_s),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_selection(r: impl Read) -> Result<Vec<SelectionRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != 6 {
            return Err(bad_row(row, "expected 6 columns"));
        }
        out.push(SelectionRow {
            assignment: TargetAssignment {
                attacker_id: rec[0].trim().to_string(),
                rank_category: rec[1].parse().map_err(|e: String| bad_row(row, e))?,
                target_id: rec[2].trim().to_string(),
                language_pool: rec[3].parse().map_err(|e: String| bad_row(row, e))?,
            },
            test_utterances: rec[4].split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            active_speech_s: rec[5].trim().parse().map_err(|_| bad_row(row, "bad active_speech_s"))?,
        });
    }
    Ok(out)
}

/// One attacker utterance compared against one target utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodyPair {
    pub attacker_id: String,
    pub target_id: String,
    /// `natural` or `mimicry`.
    pub condition: String,
    pub attacker_utterance: String,
    pub target_utterance: String,
}

pub fn read_pairs(r: impl Read) -> Result<Vec<ProsodyPair>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<ProsodyPair>().enumerate() {
        let p = rec?;
        if p.condition != "natural" && p.condition != "mimicry" {
            return Err(bad_row(i + 1, format!("condition must be natural or mimicry, got {:?}", p.condition)));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn write_pairs(w: impl Write, pairs: &[ProsodyPair]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in pairs {
        out.serialize(p)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mimicry_core::attack::{LanguagePool, RankCategory};

    #[test]
    fn selection_round_trip() {
        let rows = vec![SelectionRow {
            assignment: TargetAssignment {
                attacker_id: "A01".into(),
                rank_category: RankCategory::Median,
                target_id: "T007".into(),
                language_pool: LanguagePool::Native,
            },
            test_utterances: vec!["T007_01".into(), "T007_04".into()],
            active_speech_s: 4.25,
        }];
        let mut buf = Vec::new();
        write_selection(&mut buf, &rows).unwrap();
        assert_eq!(read_selection(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn pairs_reject_bad_condition() {
        let text = "attacker_id,target_id,condition,attacker_utterance,target_utterance\nA,T,whisper,a,t\n";
        assert!(read_pairs(text.as_bytes()).is_err());
    }
}
