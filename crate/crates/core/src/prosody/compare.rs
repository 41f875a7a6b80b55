use serde::{Deserialize, Serialize};

use crate::corpus::AudioBuffer;
use crate::frontend::{extract_features, FeatureMatrix, FrontendConfig};
use crate::Result;

use super::{dtw_align, extract_formants, formant_difference, AlignmentPath, FormantTrack, PitchConfig};

/// Utterance pairs whose mean aligned cosine distance exceeds this are rejected.
pub const MAX_MEAN_ALIGNMENT_DISTANCE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PairOutcome {
    Compared { d_hz: f64, frames_used: usize },
    /// The alignment was too poor to trust.
    Misaligned { mean_distance: f64 },
    /// No aligned frame pair was reliable on both sides.
    Unreliable,
}

/// Speech-only alignment features and the original frame index of each row.
fn speech_features(audio: &AudioBuffer) -> Result<(FeatureMatrix, Vec<usize>)> {
    let feat = extract_features(audio, &FrontendConfig::alignment())?;
    let index: Vec<usize> = feat
        .speech_flags()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| i)
        .collect();
    Ok((feat.speech_only(), index))
}

/// Aligns the speech frames of two utterances and measures their formant
/// difference over the aligned frames.
pub fn compare_formants(a: &AudioBuffer, pitch_a: &PitchConfig, b: &AudioBuffer, pitch_b: &PitchConfig) -> Result<(PairOutcome, FormantTrack, FormantTrack)> {
    let track_a = extract_formants(a, pitch_a)?;
    let track_b = extract_formants(b, pitch_b)?;
    let (fa, ia) = speech_features(a)?;
    let (fb, ib) = speech_features(b)?;
    if fa.n_frames() == 0 || fb.n_frames() == 0 {
        return Ok((PairOutcome::Unreliable, track_a, track_b));
    }
    let path = dtw_align(&fa, &fb)?;
    let mean = path.mean_cost();
    if mean > MAX_MEAN_ALIGNMENT_DISTANCE {
        return Ok((PairOutcome::Misaligned { mean_distance: mean }, track_a, track_b));
    }
    // Formant frames share the front-end's frame grid; the formant track may
    // be a frame shorter at the end.
    let pairs = path
        .pairs
        .iter()
        .map(|&(i, j)| (ia[i], ib[j]))
        .filter(|&(i, j)| i < track_a.n_frames() && j < track_b.n_frames())
        .collect();
    let mapped = AlignmentPath { pairs, cost: path.cost };
    let outcome = match formant_difference(&track_a, &track_b, &mapped) {
        Ok(d) => PairOutcome::Compared {
            d_hz: d.d_hz,
            frames_used: d.frames_used,
        },
        Err(crate::Error::InsufficientData(_)) => PairOutcome::Unreliable,
        Err(e) => return Err(e),
    };
    Ok((outcome, track_a, track_b))
}
