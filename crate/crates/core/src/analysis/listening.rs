use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::TargetAssignment;
use crate::corpus::{Manifest, Session, UtteranceRecord};
use crate::{Error, Result};

string_enum!(ListeningGroup {
    TargetVsTarget => "target_vs_target",
    TargetVsZeroEffort => "target_vs_zero_effort",
    TargetVsMimicry => "target_vs_mimicry",
    AttackerVsZeroEffort => "attacker_vs_zero_effort",
    AttackerVsMimicry => "attacker_vs_mimicry",
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListeningTrial {
    pub trial_id: String,
    pub group: ListeningGroup,
    pub attacker_id: String,
    pub target_id: String,
    pub prompt_id: String,
    /// Enrollment-side utterance: the target's for the first three groups,
    /// the attacker's natural voice for the last two.
    pub reference_utterance_id: String,
    pub test_utterance_id: String,
    /// Presentation order, `reference`/`test` possibly swapped.
    pub sample_a: String,
    pub sample_b: String,
    pub presentation_order_seed: u64,
}

fn closest_duration<'a>(pool: &[&'a UtteranceRecord], duration: f64) -> Option<&'a UtteranceRecord> {
    pool.iter()
        .min_by(|a, b| {
            (a.duration_s - duration)
                .abs()
                .total_cmp(&(b.duration_s - duration).abs())
                .then_with(|| a.utterance_id.cmp(&b.utterance_id))
        })
        .copied()
}

fn first_with_prompt<'a>(manifest: &'a Manifest, speaker: &'a str, session: Session, prompt: &str) -> Option<&'a UtteranceRecord> {
    manifest
        .session_of(speaker, session)
        .filter(|u| u.quality_ok && u.prompt_id.as_deref() == Some(prompt))
        .min_by(|a, b| a.utterance_id.cmp(&b.utterance_id))
}

/// Five equally sized groups of same/different-speaker listening trials.
///
/// For every attacker-target combination `per_combination` prompts are drawn
/// for which the target and both of the attacker's attack sessions have a
/// recording. The three target-referenced trials of a prompt share one target
/// enrollment utterance, chosen among the target's other utterances for the
/// closest duration.
pub fn generate_listening_trials(
    manifest: &Manifest,
    assignments: &[TargetAssignment],
    per_combination: usize,
    seed: u64,
) -> Result<Vec<ListeningTrial>> {
    if per_combination == 0 {
        return Err(Error::Config("per_combination must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut trials = Vec::new();
    for a in assignments {
        if !seen.insert((a.attacker_id.clone(), a.target_id.clone())) {
            continue;
        }
        let (att, tgt) = (a.attacker_id.as_str(), a.target_id.as_str());
        let mut prompts: Vec<String> = manifest
            .utterances_of(tgt)
            .filter(|u| u.quality_ok)
            .filter_map(|u| u.prompt_id.clone())
            .filter(|p| {
                first_with_prompt(manifest, att, Session::ZeroEffort, p).is_some()
                    && first_with_prompt(manifest, att, Session::Mimicry, p).is_some()
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if prompts.len() < per_combination {
            return Err(Error::InsufficientData(format!(
                "{att} -> {tgt}: {} prompts with both attack sessions, need {per_combination}",
                prompts.len()
            )));
        }
        prompts.shuffle(&mut rng);
        prompts.truncate(per_combination);
        let chosen: BTreeSet<&str> = prompts.iter().map(String::as_str).collect();
        let enroll_pool: Vec<&UtteranceRecord> = manifest
            .utterances_of(tgt)
            .filter(|u| u.quality_ok && !u.prompt_id.as_deref().is_some_and(|p| chosen.contains(p)))
            .collect();
        let natural: Vec<&UtteranceRecord> = manifest.session_of(att, Session::Natural).filter(|u| u.quality_ok).collect();
        if enroll_pool.is_empty() {
            return Err(Error::InsufficientData(format!("{tgt} has no enrollment utterance outside the test prompts")));
        }
        if natural.is_empty() {
            return Err(Error::MissingSession {
                speaker: att.to_string(),
                session: Session::Natural.to_string(),
            });
        }
        for p in &prompts {
            let genuine = first_with_prompt(manifest, tgt, Session::Wild, p)
                .or_else(|| manifest.utterances_of(tgt).find(|u| u.prompt_id.as_deref() == Some(p)))
                .expect("prompt came from the target's utterances");
            let ze = first_with_prompt(manifest, att, Session::ZeroEffort, p).expect("filtered");
            let mi = first_with_prompt(manifest, att, Session::Mimicry, p).expect("filtered");
            let test_dur = (genuine.duration_s + ze.duration_s + mi.duration_s) / 3.0;
            let enroll = closest_duration(&enroll_pool, test_dur).expect("non-empty");
            let reference = closest_duration(&natural, (ze.duration_s + mi.duration_s) / 2.0).expect("non-empty");
            for (group, r, t) in [
                (ListeningGroup::TargetVsTarget, enroll, genuine),
                (ListeningGroup::TargetVsZeroEffort, enroll, ze),
                (ListeningGroup::TargetVsMimicry, enroll, mi),
                (ListeningGroup::AttackerVsZeroEffort, reference, ze),
                (ListeningGroup::AttackerVsMimicry, reference, mi),
            ] {
                let order_seed: u64 = rng.gen();
                let (sa, sb) = if order_seed & 1 == 1 { (t, r) } else { (r, t) };
                trials.push(ListeningTrial {
                    trial_id: String::new(),
                    group,
                    attacker_id: att.to_string(),
                    target_id: tgt.to_string(),
                    prompt_id: p.clone(),
                    reference_utterance_id: r.utterance_id.clone(),
                    test_utterance_id: t.utterance_id.clone(),
                    sample_a: sa.utterance_id.clone(),
                    sample_b: sb.utterance_id.clone(),
                    presentation_order_seed: order_seed,
                });
            }
        }
    }
    trials.shuffle(&mut rng);
    for (i, t) in trials.iter_mut().enumerate() {
        t.trial_id = format!("L{:04}", i + 1);
    }
    Ok(trials)
}

pub fn write_listening_trials_csv(w: impl Write, trials: &[ListeningTrial]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for t in trials {
        out.serialize(t)?;
    }
    if trials.is_empty() {
        out.write_record([
            "trial_id",
            "group",
            "attacker_id",
            "target_id",
            "prompt_id",
            "reference_utterance_id",
            "test_utterance_id",
            "sample_a",
            "sample_b",
            "presentation_order_seed",
        ])?;
    }
    out.flush()?;
    Ok(())
}
