use serde::{Deserialize, Serialize};

use crate::corpus::AudioBuffer;
use crate::{Error, Result};

use super::{track_f0, PitchConfig};

const WINDOW_S: f64 = 0.064;
const HOP_S: f64 = 0.016;
const MIN_DIP_DB: f64 = 2.0;
/// Frames more than this far below the loudest frame count as pause.
const SILENCE_DB: f64 = 25.0;
const MIN_PAUSE_S: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakingRate {
    pub syllables_per_s: f64,
    pub nuclei: usize,
    pub duration_s: f64,
    /// Duration minus detected pauses.
    pub phonation_time_s: f64,
    /// Times of the detected nuclei.
    pub nucleus_times_s: Vec<f64>,
}

/// Intensity contour in dB (Hann-weighted mean square) with frame centres.
pub fn intensity_contour(audio: &AudioBuffer) -> (Vec<f64>, Vec<f64>) {
    let fs = audio.sample_rate_hz() as f64;
    let x = audio.samples();
    let win = ((WINDOW_S * fs).round() as usize).max(2);
    let hop = ((HOP_S * fs).round() as usize).max(1);
    let w: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / win as f64).cos())
        .collect();
    let wsum: f64 = w.iter().sum();
    let mut db = Vec::new();
    let mut times = Vec::new();
    let mut start = 0;
    while start + win <= x.len() {
        let ms: f64 = x[start..start + win].iter().zip(&w).map(|(v, w)| v * v * w).sum::<f64>() / wsum;
        db.push(10.0 * (ms + 1e-20).log10());
        times.push((start as f64 + win as f64 / 2.0) / fs);
        start += hop;
    }
    (times, db)
}

/// Counts syllable nuclei: intensity peaks above the median contour level,
/// separated on both sides from any higher peak (or the signal edge) by a dip
/// of at least 2 dB, at voiced frames.
pub fn speaking_rate(audio: &AudioBuffer, pitch: &PitchConfig) -> Result<SpeakingRate> {
    let duration = audio.duration_s();
    if duration < 0.5 {
        return Err(Error::TooShort(format!("{duration:.3} s of audio, speaking rate needs 0.5 s")));
    }
    let (times, db) = intensity_contour(audio);
    let track = track_f0(audio, pitch)?;
    let n = db.len();
    let mut sorted = db.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };

    let peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || db[i] > db[i - 1];
            let right = i + 1 == n || db[i] >= db[i + 1];
            left && right && db[i] > median
        })
        .collect();
    let mut nuclei = Vec::new();
    for &p in &peaks {
        // Deepest dip on each side before the contour rises above the peak.
        let mut left_min = db[p];
        for v in db[..p].iter().rev() {
            if *v > db[p] {
                break;
            }
            left_min = left_min.min(*v);
        }
        let mut right_min = db[p];
        for v in &db[p + 1..] {
            if *v > db[p] {
                break;
            }
            right_min = right_min.min(*v);
        }
        if db[p] - left_min >= MIN_DIP_DB && db[p] - right_min >= MIN_DIP_DB && track.is_voiced_at(times[p]) {
            nuclei.push(times[p]);
        }
    }

    let max_db = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut pause_frames = 0usize;
    let mut run = 0usize;
    let min_run = (MIN_PAUSE_S / HOP_S).ceil() as usize;
    for &v in db.iter().chain(std::iter::once(&f64::INFINITY)) {
        if v < max_db - SILENCE_DB {
            run += 1;
        } else {
            if run >= min_run {
                pause_frames += run;
            }
            run = 0;
        }
    }
    let phonation = (duration - pause_frames as f64 * HOP_S).max(0.0);
    Ok(SpeakingRate {
        syllables_per_s: nuclei.len() as f64 / duration,
        nuclei: nuclei.len(),
        duration_s: duration,
        phonation_time_s: phonation,
        nucleus_times_s: nuclei,
    })
}
