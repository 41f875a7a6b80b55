//! Source-filter building blocks.

use std::f64::consts::PI;

/// Two-pole resonator with unity gain at DC, coefficients updated per sample.
#[derive(Debug, Clone, Default)]
pub struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    pub fn step(&mut self, x: f64, freq_hz: f64, bandwidth_hz: f64, fs: f64) -> f64 {
        let r = (-PI * bandwidth_hz / fs).exp();
        let c = 2.0 * r * (2.0 * PI * freq_hz / fs).cos();
        let r2 = r * r;
        let y = (1.0 - c + r2) * x + c * self.y1 - r2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Pulse train whose instantaneous frequency follows `f0_hz` (one value per
/// sample, zero for silence). Pulses are split between neighbouring samples
/// so the period is not quantised to whole samples.
pub fn pulse_train(f0_hz: &[f64], fs: f64) -> Vec<f64> {
    let mut out = vec![0.0; f0_hz.len() + 1];
    let mut phase = 0.0;
    for (n, &f) in f0_hz.iter().enumerate() {
        if f <= 0.0 {
            phase = 0.0;
            continue;
        }
        let step = f / fs;
        let next = phase + step;
        if next >= 1.0 {
            // Fraction of this sample interval at which the pulse falls.
            let frac = (1.0 - phase) / step;
            out[n] += 1.0 - frac;
            out[n + 1] += frac;
        }
        phase = next.fract();
    }
    out.truncate(f0_hz.len());
    out
}

/// One-pole low-pass: y[n] = (1 - a) x[n] + a y[n-1].
pub fn one_pole(x: &mut [f64], a: f64) {
    let mut y = 0.0;
    for v in x.iter_mut() {
        y = (1.0 - a) * *v + a * y;
        *v = y;
    }
}

/// First-order difference x[n] - a x[n-1].
pub fn pre_difference(x: &mut [f64], a: f64) {
    let mut prev = 0.0;
    for v in x.iter_mut() {
        let cur = *v;
        *v = cur - a * prev;
        prev = cur;
    }
}

pub fn peak_normalize(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

/// Pulse train at a constant `f0_hz` filtered through fixed resonances
/// `(frequency, bandwidth)`.
pub fn resonant_pulse_train(f0_hz: f64, resonances: &[(f64, f64)], fs: f64, duration_s: f64) -> Vec<f64> {
    let n = (duration_s * fs).round() as usize;
    let mut x = pulse_train(&vec![f0_hz; n], fs);
    let mut filters = vec![Resonator::default(); resonances.len()];
    for v in x.iter_mut() {
        let mut s = *v;
        for (r, &(f, bw)) in filters.iter_mut().zip(resonances) {
            s = r.step(s, f, bw, fs);
        }
        *v = s;
    }
    pre_difference(&mut x, 0.97);
    peak_normalize(&mut x, 0.5);
    x
}

/// `k` vowel-like bursts of `on_s` seconds separated by `off_s` seconds of
/// silence, with `lead_s` of silence before the first and after the last.
pub fn vowel_bursts(k: usize, on_s: f64, off_s: f64, lead_s: f64, f0_hz: f64, fs: f64) -> Vec<f64> {
    let on = (on_s * fs).round() as usize;
    let off = (off_s * fs).round() as usize;
    let lead = (lead_s * fs).round() as usize;
    let total = 2 * lead + k * on + k.saturating_sub(1) * off;
    let mut f0 = vec![0.0; total];
    let mut env = vec![0.0; total];
    let ramp = (0.015 * fs) as usize;
    for b in 0..k {
        let start = lead + b * (on + off);
        for i in 0..on {
            f0[start + i] = f0_hz;
            let edge = i.min(on - 1 - i);
            env[start + i] = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
        }
    }
    let mut x = pulse_train(&f0, fs);
    let formants = [(700.0, 90.0), (1200.0, 110.0), (2500.0, 160.0)];
    let mut filters = vec![Resonator::default(); formants.len()];
    for v in x.iter_mut() {
        let mut s = *v;
        for (r, &(f, bw)) in filters.iter_mut().zip(&formants) {
            s = r.step(s, f, bw, fs);
        }
        *v = s;
    }
    pre_difference(&mut x, 0.97);
    for (v, e) in x.iter_mut().zip(&env) {
        *v *= e;
    }
    peak_normalize(&mut x, 0.5);
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_count_matches_frequency() {
        let fs = 16000.0;
        let x = pulse_train(&vec![123.0; 16000], fs);
        let total: f64 = x.iter().sum();
        assert!((total - 123.0).abs() <= 1.0);
    }

    #[test]
    fn resonator_unity_dc_gain() {
        let mut r = Resonator::default();
        let mut y = 0.0;
        for _ in 0..20000 {
            y = r.step(1.0, 500.0, 80.0, 16000.0);
        }
        assert!((y - 1.0).abs() < 1e-9);
    }
}
