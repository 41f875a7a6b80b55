use serde::{Deserialize, Serialize};

use super::RankCategory;

/// A target utterance scored against the attacker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceCandidate {
    pub utterance_id: String,
    pub score: f64,
    pub active_speech_s: f64,
    pub quality_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSelection {
    pub utterance_ids: Vec<String>,
    pub active_speech_s: f64,
    pub warnings: Vec<String>,
}

/// Greedy selection in the category's score order until `min_active_speech_s`
/// of active speech has been collected.
///
/// Closest (and common) take the highest scores first, furthest the lowest,
/// median the scores nearest the mean. Utterances that failed the quality
/// audit are skipped. `max_count` caps the selection so the caller can keep
/// utterances back for enrollment.
pub fn select_utterances(
    candidates: &[UtteranceCandidate],
    category: RankCategory,
    min_active_speech_s: f64,
    max_count: Option<usize>,
) -> UtteranceSelection {
    let mut warnings = Vec::new();
    let mut pool: Vec<&UtteranceCandidate> = candidates.iter().filter(|c| c.quality_ok).collect();
    let skipped = candidates.len() - pool.len();
    if skipped > 0 {
        warnings.push(format!("skipped {skipped} utterances that failed the quality audit"));
    }
    let by_id = |a: &&UtteranceCandidate, b: &&UtteranceCandidate| a.utterance_id.cmp(&b.utterance_id);
    match category {
        RankCategory::Closest | RankCategory::Common => {
            pool.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| by_id(a, b)))
        }
        RankCategory::Furthest => pool.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| by_id(a, b))),
        RankCategory::Median => {
            let mean = pool.iter().map(|c| c.score).sum::<f64>() / pool.len().max(1) as f64;
            pool.sort_by(|a, b| {
                (a.score - mean)
                    .abs()
                    .total_cmp(&(b.score - mean).abs())
                    .then_with(|| by_id(a, b))
            });
        }
    }
    let cap = max_count.unwrap_or(usize::MAX);
    let mut ids = Vec::new();
    let mut total = 0.0;
    for c in pool {
        if total >= min_active_speech_s || ids.len() >= cap {
            break;
        }
        ids.push(c.utterance_id.clone());
        total += c.active_speech_s;
    }
    if total < min_active_speech_s {
        warnings.push(format!(
            "only {total:.1} s of active speech selected, below the {min_active_speech_s:.1} s floor"
        ));
    }
    UtteranceSelection {
        utterance_ids: ids,
        active_speech_s: total,
        warnings,
    }
}
