use super::mfcc::frame_signal;
use super::FrontendConfig;
use crate::corpus::AudioBuffer;

/// Mean-square energy per frame in dB relative to full scale (mean square 1).
pub fn frame_log_energy_db(audio: &AudioBuffer, frame_len: usize, hop: usize) -> Vec<f64> {
    let x = audio.samples();
    frame_signal(x.len(), frame_len, hop)
        .into_iter()
        .map(|s| {
            let ms = x[s..s + frame_len].iter().map(|v| v * v).sum::<f64>() / frame_len as f64;
            10.0 * (ms + 1e-20).log10()
        })
        .collect()
}

/// Energy-based speech activity: a frame is speech iff its energy exceeds
/// both the utterance maximum minus the dynamic range and the absolute floor.
pub fn sad_energy(audio: &AudioBuffer, config: &FrontendConfig) -> Vec<bool> {
    let energies = frame_log_energy_db(audio, config.frame_len(), config.hop_len());
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let relative = max - config.sad.dynamic_range_db;
    let threshold = match config.sad.floor_dbfs {
        Some(floor) => relative.max(floor),
        None => relative,
    };
    energies.iter().map(|&e| e > threshold).collect()
}
