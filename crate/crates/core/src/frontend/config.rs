use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Cmvn,
    SlidingCmn,
}

/// Energy speech-activity detector settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SadConfig {
    /// Frames more than this far below the loudest frame are non-speech.
    pub dynamic_range_db: f64,
    /// Absolute floor in dBFS; `None` keeps only the relative threshold.
    pub floor_dbfs: Option<f64>,
}

impl Default for SadConfig {
    fn default() -> Self {
        SadConfig {
            dynamic_range_db: 30.0,
            floor_dbfs: Some(-60.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub n_mfcc: usize,
    pub n_mel_filters: usize,
    pub include_deltas: bool,
    pub rasta: bool,
    pub norm: Normalization,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub preemphasis: f64,
    pub sliding_window_frames: usize,
    pub sample_rate_hz: u32,
    pub sad: SadConfig,
}

impl FrontendConfig {
    /// 20 MFCCs with RASTA, deltas and double deltas, CMVN: 60 dimensions.
    pub fn profile_a() -> Self {
        FrontendConfig {
            n_mfcc: 20,
            n_mel_filters: 20,
            include_deltas: true,
            rasta: true,
            norm: Normalization::Cmvn,
            frame_ms: 25.0,
            hop_ms: 10.0,
            preemphasis: 0.97,
            sliding_window_frames: 300,
            sample_rate_hz: 16000,
            sad: SadConfig::default(),
        }
    }

    /// 30 MFCCs, no deltas, sliding CMN: 30 dimensions.
    pub fn profile_b() -> Self {
        FrontendConfig {
            n_mfcc: 30,
            n_mel_filters: 30,
            include_deltas: false,
            rasta: false,
            norm: Normalization::SlidingCmn,
            ..FrontendConfig::profile_a()
        }
    }

    /// Static MFCCs with CMVN only; used for DTW alignment.
    pub fn alignment() -> Self {
        FrontendConfig {
            include_deltas: false,
            rasta: false,
            ..FrontendConfig::profile_a()
        }
    }

    pub fn output_dim(&self) -> usize {
        if self.include_deltas {
            3 * self.n_mfcc
        } else {
            self.n_mfcc
        }
    }

    pub fn frame_len(&self) -> usize {
        (self.frame_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mel_filters {
            return Err(Error::Config(format!(
                "n_mfcc ({}) must be in 1..=n_mel_filters ({})",
                self.n_mfcc, self.n_mel_filters
            )));
        }
        if !(self.frame_ms > self.hop_ms && self.hop_ms > 0.0) {
            return Err(Error::Config("require frame_ms > hop_ms > 0".into()));
        }
        if self.sliding_window_frames == 0 {
            return Err(Error::Config("sliding window must be at least one frame".into()));
        }
        Ok(())
    }
}
