//! Acoustic feature extraction for both system profiles.

mod config;
mod deltas;
mod features;
mod mfcc;
mod norm;
mod rasta;
mod sad;

pub use config::{FrontendConfig, Normalization, SadConfig};
pub use deltas::append_deltas;
pub use features::FeatureMatrix;
pub use mfcc::{compute_mfcc, frame_count, frame_signal};
pub use norm::{cmvn, sliding_cmn};
pub use rasta::rasta_filter;
pub use sad::{frame_log_energy_db, sad_energy};

use crate::corpus::AudioBuffer;
use crate::Result;

/// Runs the complete front-end for a profile.
///
/// With CMVN: MFCC, RASTA (if enabled), deltas (if enabled), speech flags,
/// then CMVN over the speech frames. With sliding CMN: MFCC, sliding CMN,
/// speech flags. Downstream consumers only use flagged frames.
pub fn extract_features(audio: &AudioBuffer, config: &FrontendConfig) -> Result<FeatureMatrix> {
    config.validate()?;
    let mut feat = compute_mfcc(audio, config)?;
    let flags = sad_energy(audio, config);
    match config.norm {
        Normalization::Cmvn => {
            if config.rasta {
                feat = rasta_filter(&feat);
            }
            if config.include_deltas {
                feat = append_deltas(&feat, 2)?;
            }
            feat = feat.with_speech_flags(flags)?;
            cmvn(&feat)
        }
        Normalization::SlidingCmn => {
            if config.rasta {
                feat = rasta_filter(&feat);
            }
            feat = sliding_cmn(&feat, config.sliding_window_frames);
            if config.include_deltas {
                feat = append_deltas(&feat, 2)?;
            }
            feat.with_speech_flags(flags)
        }
    }
}
