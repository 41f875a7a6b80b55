//! Glue between the stored embeddings and the attack procedure.

use std::collections::BTreeMap;
use std::path::Path;

use crate::attack::{
    rank_targets, select_utterances, AttackScore, AttackTrial, RankCategory, RankedTargets, TargetAssignment,
    TargetCandidate, UtteranceCandidate, UtteranceSelection,
};
use crate::backend::{Backend, Domain, Trial, TrialLabel, TrialScore};
use crate::corpus::{Manifest, Role, Session, SpeakerRecord, UtteranceRecord};
use crate::embedding::{average_embeddings, Embedding, EmbeddingSet};
use crate::frontend::{sad_energy, FrontendConfig};
use crate::parallel::Workers;
use crate::system::load_audio;
use crate::{Error, Result};

/// Embeddings looked up by utterance id.
pub struct EmbeddingIndex<'a> {
    map: BTreeMap<&'a str, &'a Embedding>,
}

impl<'a> EmbeddingIndex<'a> {
    pub fn new(set: &'a EmbeddingSet) -> Self {
        EmbeddingIndex {
            map: set.items.iter().map(|e| (e.source.as_str(), e)).collect(),
        }
    }

    pub fn get(&self, utterance_id: &str) -> Result<&'a Embedding> {
        self.map
            .get(utterance_id)
            .copied()
            .ok_or_else(|| Error::MissingKey(format!("embedding for {utterance_id}")))
    }

    pub fn many(&self, ids: &[String]) -> Result<Vec<Embedding>> {
        ids.iter().map(|id| self.get(id).cloned()).collect()
    }

    /// Embeddings of a speaker's usable utterances in the given session.
    pub fn of_session(&self, manifest: &Manifest, speaker: &str, session: Session) -> Result<Vec<Embedding>> {
        let ids: Vec<String> = manifest
            .session_of(speaker, session)
            .filter(|u| u.quality_ok)
            .map(|u| u.utterance_id.clone())
            .collect();
        if ids.is_empty() {
            return Err(Error::MissingSession {
                speaker: speaker.to_string(),
                session: session.to_string(),
            });
        }
        self.many(&ids)
    }
}

/// Target filter given on the command line: `all`, `gender=same`,
/// `gender=<g>` or `nationality=<code>`, joined with `,`.
pub fn parse_filter(spec: &str, attacker: &SpeakerRecord) -> Result<Box<dyn Fn(&SpeakerRecord) -> bool + Sync>> {
    let mut preds: Vec<Box<dyn Fn(&SpeakerRecord) -> bool + Sync>> = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "all") {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("bad filter {part:?}, expected key=value")))?;
        let value = value.trim().to_string();
        match key.trim() {
            "gender" if value == "same" => {
                let g = attacker.gender;
                preds.push(Box::new(move |s| s.gender == g));
            }
            "gender" => {
                let g = value.parse().map_err(Error::Config)?;
                preds.push(Box::new(move |s| s.gender == g));
            }
            "nationality" => preds.push(Box::new(move |s| s.nationality == value)),
            other => return Err(Error::Config(format!("unknown filter key {other:?}"))),
        }
    }
    Ok(Box::new(move |s| preds.iter().all(|p| p(s))))
}

/// Ranks the target-role speakers with evaluation recordings for one attacker.
pub fn rank_for_attacker(
    backend: &Backend,
    manifest: &Manifest,
    index: &EmbeddingIndex,
    attacker_id: &str,
    filter_spec: &str,
    workers: &Workers,
) -> Result<RankedTargets> {
    let attacker = manifest
        .speaker(attacker_id)
        .filter(|s| s.role == Role::Attacker)
        .ok_or_else(|| Error::UnknownId(format!("attacker {attacker_id}")))?;
    let filter = parse_filter(filter_spec, attacker)?;
    let natural = index.of_session(manifest, attacker_id, Session::Natural)?;
    let mut targets = Vec::new();
    for s in manifest.speakers_with_role(Role::Target) {
        let ids: Vec<String> = manifest
            .session_of(&s.speaker_id, Session::Wild)
            .filter(|u| u.quality_ok && u.partition.as_deref().is_none_or(|p| !p.starts_with("dev")))
            .map(|u| u.utterance_id.clone())
            .collect();
        if ids.is_empty() {
            continue;
        }
        targets.push(TargetCandidate {
            speaker: s,
            embeddings: index.many(&ids)?,
        });
    }
    rank_targets(backend, attacker_id, &natural, &targets, filter, filter_spec, workers)
}

/// Seconds of detected speech per utterance.
pub fn active_speech(manifest: &Manifest, base: &Path, utts: &[&UtteranceRecord], workers: &Workers) -> Result<Vec<f64>> {
    let config = FrontendConfig::alignment();
    workers
        .map(utts, |u| {
            let audio = load_audio(manifest, base, u, config.sample_rate_hz)?;
            let flags = sad_energy(&audio, &config);
            Ok(flags.iter().filter(|&&f| f).count() as f64 * config.hop_ms / 1000.0)
        })
        .into_iter()
        .collect()
}

/// Picks the held-out test utterances of an assignment's target, scoring each
/// target utterance against the attacker's averaged natural voice. At least
/// one utterance is always left for enrollment.
#[allow(clippy::too_many_arguments)]
pub fn select_test_utterances(
    backend: &Backend,
    manifest: &Manifest,
    base: &Path,
    index: &EmbeddingIndex,
    assignment: &TargetAssignment,
    min_active_speech_s: f64,
    workers: &Workers,
) -> Result<UtteranceSelection> {
    let attacker = average_embeddings(&index.of_session(manifest, &assignment.attacker_id, Session::Natural)?)?;
    let utts: Vec<&UtteranceRecord> = manifest.session_of(&assignment.target_id, Session::Wild).collect();
    if utts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "target {} needs at least 2 utterances",
            assignment.target_id
        )));
    }
    let speech = active_speech(manifest, base, &utts, workers)?;
    let mut candidates = Vec::with_capacity(utts.len());
    for (u, s) in utts.iter().zip(speech) {
        let score = backend.score(std::slice::from_ref(index.get(&u.utterance_id)?), &attacker)?;
        candidates.push(UtteranceCandidate {
            utterance_id: u.utterance_id.clone(),
            score,
            active_speech_s: s,
            quality_ok: u.quality_ok,
        });
    }
    let category = match assignment.rank_category {
        RankCategory::Common => RankCategory::Closest,
        c => c,
    };
    Ok(select_utterances(&candidates, category, min_active_speech_s, Some(utts.len() - 1)))
}

/// Scores attack trials, enrolling on the average of the enrollment embeddings.
pub fn score_attack_trials(
    backend: &Backend,
    index: &EmbeddingIndex,
    trials: &[AttackTrial],
    workers: &Workers,
) -> Result<Vec<AttackScore>> {
    workers
        .map(trials, |t| {
            let enroll = index.many(&t.enroll_utterance_ids)?;
            let llr = backend.score(&enroll, index.get(&t.test_utterance_id)?)?;
            Ok(AttackScore { trial: t.clone(), llr })
        })
        .into_iter()
        .collect()
}

fn is_evaluation(u: &UtteranceRecord) -> bool {
    u.partition.as_deref().is_none_or(|p| !p.starts_with("dev"))
}

/// Half of each speaker's utterances (by id) enroll, the rest are tests.
fn split_half(mut utts: Vec<&UtteranceRecord>) -> (Vec<&UtteranceRecord>, Vec<&UtteranceRecord>) {
    utts.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let tests = utts.split_off(utts.len().div_ceil(2));
    (utts, tests)
}

/// Held-out verification trials: target speakers' wild utterances against each
/// other (target domain), attackers' natural utterances against each other
/// (attacker domain), and attacker tests against target enrollments (cross
/// domain, all non-target).
pub fn verification_trials(manifest: &Manifest) -> Vec<Trial> {
    let mut targets = Vec::new();
    let mut attackers = Vec::new();
    for s in &manifest.speakers {
        let (session, list) = match s.role {
            Role::Target => (Session::Wild, &mut targets),
            Role::Attacker => (Session::Natural, &mut attackers),
        };
        let utts: Vec<&UtteranceRecord> =
            manifest.session_of(&s.speaker_id, session).filter(|u| u.quality_ok && is_evaluation(u)).collect();
        if utts.len() >= 2 {
            list.push(split_half(utts));
        }
    }
    type Split<'a> = (Vec<&'a UtteranceRecord>, Vec<&'a UtteranceRecord>);
    let join = |e: &[&UtteranceRecord]| e.iter().map(|u| u.utterance_id.as_str()).collect::<Vec<_>>().join(";");
    let mut out = Vec::new();
    let mut add = |enroll: &[Split], tests: &[Split], same_pool: bool, domain: Domain| {
        for (i, (e, _)) in enroll.iter().enumerate() {
            let enroll_ref = join(e);
            for (j, (_, t)) in tests.iter().enumerate() {
                let label = if same_pool && i == j { TrialLabel::Target } else { TrialLabel::Nontarget };
                for u in t {
                    out.push(Trial {
                        enroll_ref: enroll_ref.clone(),
                        test_utterance_id: u.utterance_id.clone(),
                        label,
                        domain,
                    });
                }
            }
        }
    };
    add(&targets, &targets, true, Domain::TargetDomain);
    add(&attackers, &attackers, true, Domain::AttackerDomain);
    add(&targets, &attackers, false, Domain::CrossDomain);
    out
}

/// Utterance ids behind an enrollment reference: `;`-joined utterance ids, or
/// a speaker id standing for all of that speaker's evaluation utterances.
pub fn enroll_ids(manifest: &Manifest, enroll_ref: &str) -> Result<Vec<String>> {
    if manifest.utterance(enroll_ref).is_none() && manifest.speaker(enroll_ref).is_some() {
        return Ok(manifest
            .utterances_of(enroll_ref)
            .filter(|u| is_evaluation(u))
            .map(|u| u.utterance_id.clone())
            .collect());
    }
    let ids: Vec<String> = enroll_ref.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
    if ids.is_empty() {
        return Err(Error::InvalidRecord {
            id: enroll_ref.to_string(),
            reason: "empty enrollment reference".into(),
        });
    }
    Ok(ids)
}

/// Scores verification trials; each distinct enrollment is averaged once.
pub fn score_trials(
    backend: &Backend,
    manifest: &Manifest,
    index: &EmbeddingIndex,
    trials: &[Trial],
    workers: &Workers,
) -> Result<Vec<TrialScore>> {
    let mut enrolls: BTreeMap<&str, Embedding> = BTreeMap::new();
    for t in trials {
        if !enrolls.contains_key(t.enroll_ref.as_str()) {
            let ids = enroll_ids(manifest, &t.enroll_ref)?;
            enrolls.insert(&t.enroll_ref, average_embeddings(&index.many(&ids)?)?);
        }
    }
    workers
        .map(trials, |t| {
            let enroll = &enrolls[t.enroll_ref.as_str()];
            backend.score_trial(t, std::slice::from_ref(enroll), index.get(&t.test_utterance_id)?)
        })
        .into_iter()
        .collect()
}
