use std::io::Write;

use nalgebra::{DMatrix, Schur};

use crate::corpus::{resample, AudioBuffer};
use crate::Result;

use super::{track_f0, PitchConfig};

pub const LPC_ORDER: usize = 12;
pub const ANALYSIS_RATE_HZ: u32 = 10_000;
pub const MAX_BANDWIDTH_HZ: f64 = 400.0;
pub const MIN_FORMANT_HZ: f64 = 90.0;
pub const MAX_FORMANT_HZ: f64 = 4900.0;
/// Frame hop and nominal (effective) window length.
pub const HOP_S: f64 = 0.010;
pub const WINDOW_S: f64 = 0.025;

#[derive(Debug, Clone, PartialEq)]
pub struct FormantTrack {
    pub frame_times_s: Vec<f64>,
    /// F1, F2, F3 per frame in Hz; zero where fewer candidates were found.
    pub freqs: Vec<[f64; 3]>,
    pub reliable: Vec<bool>,
}

impl FormantTrack {
    pub fn n_frames(&self) -> usize {
        self.freqs.len()
    }

    pub fn reliable_fraction(&self) -> f64 {
        if self.reliable.is_empty() {
            return 0.0;
        }
        self.reliable.iter().filter(|&&r| r).count() as f64 / self.reliable.len() as f64
    }

    /// CSV with columns `time_s,f1_hz,f2_hz,f3_hz,reliable`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time_s", "f1_hz", "f2_hz", "f3_hz", "reliable"])?;
        for i in 0..self.n_frames() {
            let f = self.freqs[i];
            out.write_record([
                format!("{:.4}", self.frame_times_s[i]),
                format!("{:.2}", f[0]),
                format!("{:.2}", f[1]),
                format!("{:.2}", f[2]),
                (self.reliable[i] as u8).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Burg estimate of the linear predictor `x[n] ~ sum_k a[k] x[n-1-k]`.
pub fn burg_lpc(x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; order];
    if n <= order + 1 {
        return d;
    }
    let mut wk1: Vec<f64> = x[..n - 1].to_vec();
    let mut wk2: Vec<f64> = x[1..].to_vec();
    let mut wkm = vec![0.0; order];
    for k in 1..=order {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n - k {
            num += wk1[j] * wk2[j];
            den += wk1[j] * wk1[j] + wk2[j] * wk2[j];
        }
        if den <= 0.0 {
            return d;
        }
        d[k - 1] = 2.0 * num / den;
        for i in 0..k - 1 {
            d[i] = wkm[i] - d[k - 1] * wkm[k - 2 - i];
        }
        if k == order {
            break;
        }
        wkm[..k].copy_from_slice(&d[..k]);
        for j in 0..n - k - 1 {
            wk1[j] -= wkm[k - 1] * wk2[j];
            wk2[j] = wk2[j + 1] - wkm[k - 1] * wk1[j + 1];
        }
    }
    d
}

/// Resonance candidates (frequency, bandwidth) from the predictor polynomial
/// roots in the upper half plane, sorted by frequency.
pub fn lpc_resonances(a: &[f64], fs: f64) -> Vec<(f64, f64)> {
    let p = a.len();
    if p == 0 || a.iter().all(|&v| v == 0.0) {
        return Vec::new();
    }
    // Companion matrix of z^p - a1 z^(p-1) - ... - ap.
    let mut c = DMatrix::zeros(p, p);
    for k in 0..p {
        c[(0, k)] = a[k];
    }
    for i in 1..p {
        c[(i, i - 1)] = 1.0;
    }
    let Some(schur) = Schur::try_new(c, f64::EPSILON, 1000) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for z in schur.complex_eigenvalues().iter() {
        if !(z.im > 0.0) {
            continue;
        }
        let mut z = *z;
        let r = z.norm();
        if r > 1.0 {
            // Reflect into the unit circle: 1 / conj(z).
            z /= r * r;
        }
        let freq = z.im.atan2(z.re) * fs / (2.0 * std::f64::consts::PI);
        let bw = -z.norm().ln() * fs / std::f64::consts::PI;
        out.push((freq, bw));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Centres of 25 ms / 10 ms frames over `duration_s`, matching the front end's framing.
pub fn frame_centres(duration_s: f64) -> Vec<f64> {
    if duration_s < WINDOW_S {
        return Vec::new();
    }
    let n = ((duration_s - WINDOW_S) / HOP_S + 1e-9).floor() as usize + 1;
    (0..n).map(|k| k as f64 * HOP_S + WINDOW_S / 2.0).collect()
}

/// F1-F3 track. Frames are unreliable when unvoiced, silent, or when fewer
/// than three admissible resonances are found.
pub fn extract_formants(audio: &AudioBuffer, pitch: &PitchConfig) -> Result<FormantTrack> {
    let times = frame_centres(audio.duration_s());
    let pitch_track = track_f0(audio, pitch).ok();
    let down = resample(audio, ANALYSIS_RATE_HZ)?;
    let fs = ANALYSIS_RATE_HZ as f64;
    let mut x = down.samples().to_vec();
    let alpha = (-2.0 * std::f64::consts::PI * 50.0 / fs).exp();
    for i in (1..x.len()).rev() {
        x[i] -= alpha * x[i - 1];
    }
    // Gaussian window twice the nominal length, as effective length ~ nominal.
    let phys = (2.0 * WINDOW_S * fs).round() as usize;
    let edge = (-12.0f64).exp();
    let window: Vec<f64> = (0..phys)
        .map(|i| {
            let t = (i as f64 + 0.5) / phys as f64 - 0.5;
            ((-48.0 * t * t).exp() - edge) / (1.0 - edge)
        })
        .collect();
    let mut freqs = Vec::with_capacity(times.len());
    let mut reliable = Vec::with_capacity(times.len());
    let mut frame = vec![0.0; phys];
    for &t in &times {
        let centre = (t * fs).round() as isize;
        let start = centre - (phys / 2) as isize;
        let mut energy = 0.0;
        for i in 0..phys {
            let idx = start + i as isize;
            let v = if idx >= 0 && (idx as usize) < x.len() { x[idx as usize] } else { 0.0 };
            frame[i] = v * window[i];
            energy += frame[i] * frame[i];
        }
        let mut f = [0.0; 3];
        let mut ok = false;
        if energy > 1e-12 {
            let cands: Vec<f64> = lpc_resonances(&burg_lpc(&frame, LPC_ORDER), fs)
                .into_iter()
                .filter(|&(freq, bw)| bw < MAX_BANDWIDTH_HZ && freq > MIN_FORMANT_HZ && freq < MAX_FORMANT_HZ)
                .map(|(freq, _)| freq)
                .collect();
            for (slot, v) in f.iter_mut().zip(&cands) {
                *slot = *v;
            }
            let voiced = pitch_track.as_ref().is_some_and(|p| p.is_voiced_at(t));
            ok = cands.len() >= 3 && voiced;
        }
        freqs.push(f);
        reliable.push(ok);
    }
    Ok(FormantTrack {
        frame_times_s: times,
        freqs,
        reliable,
    })
}
