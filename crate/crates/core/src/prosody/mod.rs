//! F0 tracking, speaking rate, formant tracking, DTW alignment and the
//! formant-difference measure.

mod compare;
mod dtw;
mod formant;
mod pitch;
mod rate;

pub use compare::{compare_formants, PairOutcome, MAX_MEAN_ALIGNMENT_DISTANCE};
pub use dtw::{cosine_distance, dtw_align, dtw_on_costs, formant_difference, write_formant_diff_csv, AlignmentPath, FormantDiffRow, FormantDifference};
pub use formant::{burg_lpc, extract_formants, frame_centres, lpc_resonances, FormantTrack};
pub use pitch::{f0_summary, track_f0, PitchConfig, PitchTrack};
pub use rate::{intensity_contour, speaking_rate, SpeakingRate};
