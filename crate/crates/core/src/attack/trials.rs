use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::backend::{Domain, Trial, TrialLabel};
use crate::corpus::{Manifest, Session};
use crate::{Error, Result};

use super::TargetAssignment;

string_enum!(Condition { ZeroEffort => "zero_effort", Mimicry => "mimicry", Genuine => "genuine" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrial {
    pub assignment: TargetAssignment,
    pub condition: Condition,
    pub prompt_id: Option<String>,
    pub test_utterance_id: String,
    pub enroll_utterance_ids: Vec<String>,
}

impl AttackTrial {
    pub fn enroll_ref(&self) -> String {
        self.enroll_utterance_ids.join(";")
    }

    /// Plain verification trial. Attacks are non-target trials that cross
    /// from the attacker domain into the target domain.
    pub fn to_trial(&self) -> Trial {
        let (label, domain) = match self.condition {
            Condition::Genuine => (TrialLabel::Target, Domain::TargetDomain),
            _ => (TrialLabel::Nontarget, Domain::CrossDomain),
        };
        Trial {
            enroll_ref: self.enroll_ref(),
            test_utterance_id: self.test_utterance_id.clone(),
            label,
            domain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub trial: AttackTrial,
    pub llr: f64,
}

/// Builds genuine, zero-effort and mimicry trials for each assignment.
///
/// `selections` pairs every assignment with the target utterances held out for
/// testing. The target is enrolled on all its remaining utterances. For each
/// held-out utterance the attacker's zero-effort and mimicry recordings of the
/// same prompt become the attack test utterances.
pub fn build_attack_trials(selections: &[(TargetAssignment, Vec<String>)], manifest: &Manifest) -> Result<Vec<AttackTrial>> {
    let mut out = Vec::new();
    for (a, tests) in selections {
        if manifest.speaker(&a.attacker_id).is_none() {
            return Err(Error::UnknownId(a.attacker_id.clone()));
        }
        if manifest.speaker(&a.target_id).is_none() {
            return Err(Error::UnknownId(a.target_id.clone()));
        }
        if tests.is_empty() {
            return Err(Error::InsufficientData(format!("no test utterances selected for target {}", a.target_id)));
        }
        let held: BTreeSet<&str> = tests.iter().map(String::as_str).collect();
        for t in tests {
            match manifest.utterance(t) {
                Some(u) if u.speaker_id == a.target_id => {}
                Some(_) => {
                    return Err(Error::InvalidRecord {
                        id: t.clone(),
                        reason: format!("not an utterance of target {}", a.target_id),
                    })
                }
                None => return Err(Error::UnknownId(t.clone())),
            }
        }
        let enroll: Vec<String> = manifest
            .utterances_of(&a.target_id)
            .filter(|u| !held.contains(u.utterance_id.as_str()))
            .map(|u| u.utterance_id.clone())
            .collect();
        if enroll.is_empty() {
            return Err(Error::InsufficientData(format!(
                "target {} has no utterances left for enrollment",
                a.target_id
            )));
        }
        let mut attack_count = [0usize; 2];
        for t in tests {
            let prompt = manifest.utterance(t).and_then(|u| u.prompt_id.clone());
            out.push(AttackTrial {
                assignment: a.clone(),
                condition: Condition::Genuine,
                prompt_id: prompt.clone(),
                test_utterance_id: t.clone(),
                enroll_utterance_ids: enroll.clone(),
            });
            let Some(prompt) = prompt else { continue };
            for (k, (session, condition)) in [
                (Session::ZeroEffort, Condition::ZeroEffort),
                (Session::Mimicry, Condition::Mimicry),
            ]
            .into_iter()
            .enumerate()
            {
                for u in manifest
                    .session_of(&a.attacker_id, session)
                    .filter(|u| u.prompt_id.as_deref() == Some(prompt.as_str()))
                {
                    attack_count[k] += 1;
                    out.push(AttackTrial {
                        assignment: a.clone(),
                        condition,
                        prompt_id: Some(prompt.clone()),
                        test_utterance_id: u.utterance_id.clone(),
                        enroll_utterance_ids: enroll.clone(),
                    });
                }
            }
        }
        for (k, session) in [Session::ZeroEffort, Session::Mimicry].into_iter().enumerate() {
            if attack_count[k] == 0 {
                return Err(Error::MissingSession {
                    speaker: a.attacker_id.clone(),
                    session: format!("{session} (for target {})", a.target_id),
                });
            }
        }
    }
    Ok(out)
}

const TRIAL_COLUMNS: [&str; 8] = [
    "attacker_id",
    "rank_category",
    "target_id",
    "language_pool",
    "condition",
    "prompt_id",
    "test_utterance_id",
    "enroll_utterances",
];

fn trial_fields(t: &AttackTrial) -> Vec<String> {
    vec![
        t.assignment.attacker_id.clone(),
        t.assignment.rank_category.to_string(),
        t.assignment.target_id.clone(),
        t.assignment.language_pool.to_string(),
        t.condition.to_string(),
        t.prompt_id.clone().unwrap_or_default(),
        t.test_utterance_id.clone(),
        t.enroll_ref(),
    ]
}

fn bad_row(row: usize, reason: impl Into<String>) -> Error {
    Error::InvalidRecord {
        id: format!("row {row}"),
        reason: reason.into(),
    }
}

fn parse_trial(row: usize, rec: &csv::StringRecord) -> Result<AttackTrial> {
    let field = |i: usize| rec[i].trim().to_string();
    Ok(AttackTrial {
        assignment: TargetAssignment {
            attacker_id: field(0),
            rank_category: rec[1].parse().map_err(|e: String| bad_row(row, e))?,
            target_id: field(2),
            language_pool: rec[3].parse().map_err(|e: String| bad_row(row, e))?,
        },
        condition: rec[4].parse().map_err(|e: String| bad_row(row, e))?,
        prompt_id: Some(field(5)).filter(|p| !p.is_empty()),
        test_utterance_id: field(6),
        enroll_utterance_ids: rec[7].split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
    })
}

pub fn write_attack_trials_csv(w: impl Write, trials: &[AttackTrial]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRIAL_COLUMNS)?;
    for t in trials {
        out.write_record(trial_fields(t))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_attack_trials_csv(r: impl Read) -> Result<Vec<AttackTrial>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != TRIAL_COLUMNS.len() {
            return Err(bad_row(i + 1, format!("expected {} columns", TRIAL_COLUMNS.len())));
        }
        out.push(parse_trial(i + 1, &rec)?);
    }
    Ok(out)
}

/// Trial columns followed by `llr`.
pub fn write_attack_scores_csv(w: impl Write, scores: &[AttackScore]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = TRIAL_COLUMNS.to_vec();
    header.push("llr");
    out.write_record(header)?;
    for s in scores {
        let mut fields = trial_fields(&s.trial);
        fields.push(format!("{:e}", s.llr));
        out.write_record(fields)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_attack_scores_csv(r: impl Read) -> Result<Vec<AttackScore>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != TRIAL_COLUMNS.len() + 1 {
            return Err(bad_row(i + 1, format!("expected {} columns", TRIAL_COLUMNS.len() + 1)));
        }
        let llr: f64 = rec[8].trim().parse().map_err(|_| bad_row(i + 1, "bad llr"))?;
        if !llr.is_finite() {
            return Err(bad_row(i + 1, "non-finite llr"));
        }
        out.push(AttackScore {
            trial: parse_trial(i + 1, &rec)?,
            llr,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{LanguagePool, RankCategory};
    use crate::corpus::{Gender, Role, SpeakerRecord, UtteranceRecord};

    fn spk(id: &str, role: Role) -> SpeakerRecord {
        SpeakerRecord {
            speaker_id: id.into(),
            role,
            gender: Gender::Male,
            nationality: "FI".into(),
            display_name: None,
        }
    }

    fn utt(id: &str, spk: &str, session: Session, prompt: &str) -> UtteranceRecord {
        UtteranceRecord {
            utterance_id: id.into(),
            speaker_id: spk.into(),
            audio_path: format!("{id}.wav").into(),
            session,
            duration_s: 2.0,
            sample_rate_hz: 16000,
            prompt_id: Some(prompt.into()),
            partition: None,
            quality_ok: true,
        }
    }

    fn manifest(with_mimicry: bool) -> Manifest {
        let mut utts = Vec::new();
        for t in ["T1", "T2"] {
            for k in 0..5 {
                let id = format!("{t}_{k}");
                utts.push(utt(&id, t, Session::Wild, &id));
                utts.push(utt(&format!("A1_ze_{id}"), "A1", Session::ZeroEffort, &id));
                if with_mimicry {
                    utts.push(utt(&format!("A1_mi_{id}"), "A1", Session::Mimicry, &id));
                }
            }
        }
        utts.push(utt("A1_nat", "A1", Session::Natural, "n"));
        Manifest::new(vec![spk("A1", Role::Attacker), spk("T1", Role::Target), spk("T2", Role::Target)], utts).unwrap()
    }

    fn assignment(cat: RankCategory, target: &str) -> TargetAssignment {
        TargetAssignment {
            attacker_id: "A1".into(),
            rank_category: cat,
            target_id: target.into(),
            language_pool: LanguagePool::Native,
        }
    }

    #[test]
    fn enrollment_excludes_tests_and_counts_add_up() {
        let m = manifest(true);
        let sel = vec![
            (assignment(RankCategory::Closest, "T1"), vec!["T1_0".to_string(), "T1_3".to_string()]),
            (assignment(RankCategory::Furthest, "T2"), vec!["T2_1".to_string()]),
        ];
        let trials = build_attack_trials(&sel, &m).unwrap();
        // (2 + 1) test utterances x 3 conditions.
        assert_eq!(trials.len(), 9);
        for t in &trials {
            let held: Vec<&String> = sel.iter().find(|(a, _)| *a == t.assignment).unwrap().1.iter().collect();
            assert!(t.enroll_utterance_ids.iter().all(|e| !held.contains(&e)));
            assert!(!t.enroll_utterance_ids.contains(&t.test_utterance_id));
        }
        assert_eq!(trials[0].enroll_utterance_ids, ["T1_1", "T1_2", "T1_4"]);
        let prompts: BTreeSet<_> = trials.iter().filter(|t| t.test_utterance_id.contains("T1_3")).map(|t| t.prompt_id.clone()).collect();
        assert_eq!(prompts.len(), 1);
    }

    #[test]
    fn missing_mimicry_session_names_attacker() {
        let m = manifest(false);
        let sel = vec![(assignment(RankCategory::Closest, "T1"), vec!["T1_0".to_string()])];
        let err = build_attack_trials(&sel, &m).unwrap_err().to_string();
        assert!(err.contains("A1") && err.contains("mimicry"), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let m = manifest(true);
        let sel = vec![(assignment(RankCategory::Median, "T2"), vec!["T2_4".to_string()])];
        let trials = build_attack_trials(&sel, &m).unwrap();
        let mut buf = Vec::new();
        write_attack_trials_csv(&mut buf, &trials).unwrap();
        assert_eq!(read_attack_trials_csv(&buf[..]).unwrap(), trials);
        let scores: Vec<AttackScore> = trials.iter().enumerate().map(|(i, t)| AttackScore { trial: t.clone(), llr: i as f64 - 0.5 }).collect();
        let mut buf = Vec::new();
        write_attack_scores_csv(&mut buf, &scores).unwrap();
        assert_eq!(read_attack_scores_csv(&buf[..]).unwrap(), scores);
    }
}
