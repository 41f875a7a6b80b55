use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::{FeatureMatrix, FrontendConfig};
use crate::corpus::AudioBuffer;
use crate::{Error, Result};

/// Floor applied to mel filterbank energies before the logarithm.
pub const LOG_ENERGY_FLOOR: f64 = 1e-10;

pub fn frame_count(n_samples: usize, frame_len: usize, hop: usize) -> usize {
    if n_samples < frame_len {
        0
    } else {
        1 + (n_samples - frame_len) / hop
    }
}

/// Splits a signal into overlapping frames; returns frame start offsets.
pub fn frame_signal(n_samples: usize, frame_len: usize, hop: usize) -> Vec<usize> {
    (0..frame_count(n_samples, frame_len, hop)).map(|t| t * hop).collect()
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-style filters over FFT bins, spanning 0 Hz to Nyquist.
fn mel_filterbank(n_filters: usize, n_fft: usize, sample_rate: f64) -> Vec<Vec<(usize, f64)>> {
    let max_mel = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (n_filters + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    (0..n_filters)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .filter_map(|k| {
                    let f = k as f64 * sample_rate / n_fft as f64;
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis, `n_out` rows of length `n_in`.
fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n_in as f64).sqrt()
            } else {
                (2.0 / n_in as f64).sqrt()
            };
            (0..n_in)
                .map(|m| scale * (PI * k as f64 * (m as f64 + 0.5) / n_in as f64).cos())
                .collect()
        })
        .collect()
}

/// Mel-frequency cepstral coefficients, c0 first.
///
/// Pre-emphasis is applied to the whole signal, then each frame is Hamming
/// windowed and zero-padded to the next power of two. Every frame is
/// flagged as speech; the caller overrides flags after activity detection.
pub fn compute_mfcc(audio: &AudioBuffer, config: &FrontendConfig) -> Result<FeatureMatrix> {
    config.validate()?;
    if audio.sample_rate_hz() != config.sample_rate_hz {
        return Err(Error::Config(format!(
            "audio is {} Hz, front-end expects {} Hz",
            audio.sample_rate_hz(),
            config.sample_rate_hz
        )));
    }
    let frame_len = config.frame_len();
    let hop = config.hop_len();
    let x = audio.samples();
    let starts = frame_signal(x.len(), frame_len, hop);
    if starts.is_empty() {
        return Err(Error::TooShort(format!(
            "{} samples is shorter than one {frame_len}-sample frame",
            x.len()
        )));
    }

    let mut emphasized = Vec::with_capacity(x.len());
    emphasized.push(x[0]);
    for i in 1..x.len() {
        emphasized.push(x[i] - config.preemphasis * x[i - 1]);
    }

    let n_fft = frame_len.next_power_of_two();
    let sr = config.sample_rate_hz as f64;
    let window: Vec<f64> = (0..frame_len)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (frame_len - 1) as f64).cos())
        .collect();
    let bank = mel_filterbank(config.n_mel_filters, n_fft, sr);
    let dct = dct_matrix(config.n_mfcc, config.n_mel_filters);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);

    let mut data = Vec::with_capacity(starts.len() * config.n_mfcc);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut log_mel = vec![0.0; config.n_mel_filters];
    for &s in &starts {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < frame_len {
                Complex::new(emphasized[s + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (m, filt) in bank.iter().enumerate() {
            let e: f64 = filt.iter().map(|&(k, w)| w * buf[k].norm_sqr()).sum();
            log_mel[m] = e.max(LOG_ENERGY_FLOOR).ln();
        }
        for row in &dct {
            data.push(row.iter().zip(&log_mel).map(|(a, b)| a * b).sum());
        }
    }
    let times = starts
        .iter()
        .map(|&s| (s as f64 + frame_len as f64 / 2.0) / sr)
        .collect();
    let n = starts.len();
    FeatureMatrix::new(data, config.n_mfcc, vec![true; n], times)
}
