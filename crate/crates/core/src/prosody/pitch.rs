use std::io::Write;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::corpus::{AudioBuffer, Gender};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub floor_hz: f64,
    pub ceiling_hz: f64,
    pub timestep_s: f64,
    pub silence_threshold: f64,
    pub voicing_threshold: f64,
    pub octave_cost: f64,
    pub octave_jump_cost: f64,
    pub vuv_cost: f64,
    pub max_candidates: usize,
}

impl PitchConfig {
    pub fn male() -> Self {
        PitchConfig {
            floor_hz: 75.0,
            ceiling_hz: 200.0,
            timestep_s: 0.010,
            silence_threshold: 0.03,
            voicing_threshold: 0.45,
            octave_cost: 0.01,
            octave_jump_cost: 0.35,
            vuv_cost: 0.14,
            max_candidates: 15,
        }
    }

    pub fn female() -> Self {
        PitchConfig {
            floor_hz: 100.0,
            ceiling_hz: 300.0,
            ..Self::male()
        }
    }

    /// Range covering both genders, for speakers of unknown gender.
    pub fn wide() -> Self {
        PitchConfig {
            floor_hz: 75.0,
            ceiling_hz: 300.0,
            ..Self::male()
        }
    }

    pub fn for_gender(g: Gender) -> Self {
        match g {
            Gender::Male => Self::male(),
            Gender::Female => Self::female(),
            Gender::Unknown => Self::wide(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor_hz > 0.0 && self.floor_hz < self.ceiling_hz) {
            return Err(Error::Config("pitch floor must be below ceiling".into()));
        }
        if self.timestep_s <= 0.0 || self.max_candidates < 2 {
            return Err(Error::Config("bad pitch time step or candidate count".into()));
        }
        let costs = [
            self.silence_threshold,
            self.voicing_threshold,
            self.octave_cost,
            self.octave_jump_cost,
            self.vuv_cost,
        ];
        if costs.iter().any(|&c| !(c >= 0.0)) {
            return Err(Error::Config("pitch costs must be non-negative".into()));
        }
        Ok(())
    }

    /// Analysis window: three periods of the floor frequency.
    pub fn window_s(&self) -> f64 {
        3.0 / self.floor_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub frame_times_s: Vec<f64>,
    /// `None` for unvoiced frames.
    pub f0_hz: Vec<Option<f64>>,
    /// Strength of the chosen candidate per frame.
    pub strengths: Vec<f64>,
}

impl PitchTrack {
    pub fn n_frames(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn voiced(&self) -> impl Iterator<Item = f64> + '_ {
        self.f0_hz.iter().flatten().copied()
    }

    /// Voicing at the frame nearest to `t`.
    pub fn is_voiced_at(&self, t: f64) -> bool {
        if self.frame_times_s.is_empty() {
            return false;
        }
        let idx = self
            .frame_times_s
            .partition_point(|&ft| ft < t)
            .min(self.frame_times_s.len() - 1);
        let best = if idx > 0 && (self.frame_times_s[idx - 1] - t).abs() <= (self.frame_times_s[idx] - t).abs() {
            idx - 1
        } else {
            idx
        };
        self.f0_hz[best].is_some()
    }

    /// CSV with columns `time_s,f0_hz,strength`; unvoiced frames have an empty f0.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time_s", "f0_hz", "strength"])?;
        for i in 0..self.n_frames() {
            let f0 = self.f0_hz[i].map(|f| format!("{f:.4}")).unwrap_or_default();
            out.write_record([format!("{:.4}", self.frame_times_s[i]), f0, format!("{:.6}", self.strengths[i])])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    /// 0 for the unvoiced candidate.
    freq: f64,
    strength: f64,
}

/// Autocorrelation of `x` for lags 0..=max_lag via zero-padded FFT.
fn autocorrelation(x: &[f64], max_lag: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = (x.len() + max_lag + 1).next_power_of_two();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    fft.process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    ifft.process(&mut buf);
    buf[..=max_lag].iter().map(|c| c.re / n as f64).collect()
}

/// F0 contour by windowed autocorrelation with Viterbi path selection.
pub fn track_f0(audio: &AudioBuffer, config: &PitchConfig) -> Result<PitchTrack> {
    config.validate()?;
    let fs = audio.sample_rate_hz() as f64;
    let x = audio.samples();
    let window_s = config.window_s();
    let duration = audio.duration_s();
    if duration < window_s {
        return Err(Error::TooShort(format!(
            "{duration:.3} s of audio, pitch analysis needs {window_s:.3} s"
        )));
    }
    let win_len = ((window_s * fs).round() as usize).max(3);
    let min_lag = (fs / config.ceiling_hz).floor().max(2.0) as usize;
    let max_lag = ((fs / config.floor_hz).ceil() as usize).min(win_len - 1);
    let n_frames = ((duration - window_s) / config.timestep_s).floor() as usize + 1;
    let t1 = 0.5 * (duration - (n_frames - 1) as f64 * config.timestep_s);

    let global_mean = x.iter().sum::<f64>() / x.len() as f64;
    let global_peak = x.iter().map(|v| (v - global_mean).abs()).fold(0.0, f64::max);

    let hann: Vec<f64> = (0..win_len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / win_len as f64).cos())
        .collect();
    let mut planner = FftPlanner::new();
    let r_w = autocorrelation(&hann, max_lag + 1, &mut planner);

    let vt = config.voicing_threshold;
    let st = config.silence_threshold;
    let mut times = Vec::with_capacity(n_frames);
    let mut frames: Vec<Vec<Candidate>> = Vec::with_capacity(n_frames);
    let mut seg = vec![0.0; win_len];
    for f in 0..n_frames {
        let t = t1 + f as f64 * config.timestep_s;
        times.push(t);
        let start = ((t * fs).round() as isize - (win_len / 2) as isize).clamp(0, (x.len() - win_len) as isize) as usize;
        let frame = &x[start..start + win_len];
        let mean = frame.iter().sum::<f64>() / win_len as f64;
        let local_peak = frame.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        for i in 0..win_len {
            seg[i] = (frame[i] - mean) * hann[i];
        }

        let intensity = if global_peak > 0.0 { local_peak / global_peak } else { 0.0 };
        let unvoiced_strength = vt + (2.0 - intensity / (st / (1.0 + vt))).max(0.0) * (1.0 + vt);
        let mut cands = vec![Candidate {
            freq: 0.0,
            strength: unvoiced_strength,
        }];

        let r_a = autocorrelation(&seg, max_lag + 1, &mut planner);
        if r_a[0] > 0.0 && local_peak > 0.0 {
            let r: Vec<f64> = (0..=max_lag + 1).map(|k| (r_a[k] / r_a[0]) / (r_w[k] / r_w[0])).collect();
            let mut voiced = Vec::new();
            for k in min_lag.max(1)..=max_lag {
                if !(r[k] > r[k - 1] && r[k] >= r[k + 1]) || r[k] < 0.5 * vt {
                    continue;
                }
                let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
                let denom = a - 2.0 * b + c;
                let shift = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
                let mut peak = b - 0.25 * (a - c) * shift;
                if peak > 1.0 {
                    peak = 1.0 / peak;
                }
                let lag = (k as f64 + shift) / fs;
                let freq = 1.0 / lag;
                if freq < config.floor_hz || freq > config.ceiling_hz {
                    continue;
                }
                let strength = peak - config.octave_cost * (config.ceiling_hz * lag).log2();
                voiced.push(Candidate { freq, strength });
            }
            voiced.sort_by(|a, b| b.strength.total_cmp(&a.strength).then(a.freq.total_cmp(&b.freq)));
            voiced.truncate(config.max_candidates - 1);
            cands.extend(voiced);
        }
        frames.push(cands);
    }

    let path = viterbi(&frames, config);
    let f0_hz = path
        .iter()
        .zip(&frames)
        .map(|(&k, c)| (c[k].freq > 0.0).then_some(c[k].freq))
        .collect();
    let strengths = path.iter().zip(&frames).map(|(&k, c)| c[k].strength).collect();
    Ok(PitchTrack {
        frame_times_s: times,
        f0_hz,
        strengths,
    })
}

fn transition_cost(a: &Candidate, b: &Candidate, config: &PitchConfig) -> f64 {
    let correction = 0.01 / config.timestep_s;
    let cost = match (a.freq > 0.0, b.freq > 0.0) {
        (false, false) => 0.0,
        (true, true) => config.octave_jump_cost * (a.freq / b.freq).log2().abs(),
        _ => config.vuv_cost,
    };
    cost * correction
}

/// Index of the chosen candidate per frame, maximising total strength minus
/// transition costs.
fn viterbi(frames: &[Vec<Candidate>], config: &PitchConfig) -> Vec<usize> {
    let n = frames.len();
    let mut score: Vec<f64> = frames[0].iter().map(|c| c.strength).collect();
    let mut back: Vec<Vec<usize>> = vec![vec![0; frames[0].len()]];
    for t in 1..n {
        let mut next = Vec::with_capacity(frames[t].len());
        let mut ptr = Vec::with_capacity(frames[t].len());
        for cur in &frames[t] {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (k, prev) in frames[t - 1].iter().enumerate() {
                let v = score[k] - transition_cost(prev, cur, config);
                if v > best {
                    best = v;
                    arg = k;
                }
            }
            next.push(best + cur.strength);
            ptr.push(arg);
        }
        score = next;
        back.push(ptr);
    }
    let mut k = score
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0;
    let mut path = vec![0; n];
    for t in (0..n).rev() {
        path[t] = k;
        k = back[t][k];
    }
    path
}

/// Median and population standard deviation of the voiced frames.
pub fn f0_summary(track: &PitchTrack) -> Result<(f64, f64)> {
    let mut v: Vec<f64> = track.voiced().collect();
    if v.is_empty() {
        return Err(Error::Empty("pitch track has no voiced frames".into()));
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    Ok((median, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::resonant_pulse_train;

    const FS: u32 = 16000;

    fn tone(f0: f64) -> AudioBuffer {
        let x = resonant_pulse_train(f0, &[(600.0, 90.0), (1400.0, 120.0), (2600.0, 180.0)], FS as f64, 1.0);
        AudioBuffer::new(x, FS).unwrap()
    }

    #[test]
    fn periodic_signals_within_two_percent() {
        for (f0, cfg) in [(120.0, PitchConfig::male()), (110.0, PitchConfig::male()), (150.0, PitchConfig::male()), (220.0, PitchConfig::female())] {
            let track = track_f0(&tone(f0), &cfg).unwrap();
            let (median, _) = f0_summary(&track).unwrap();
            assert!((median - f0).abs() / f0 <= 0.02, "{f0}: {median}");
            assert!(track.voiced().count() as f64 >= 0.8 * track.n_frames() as f64);
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let audio = AudioBuffer::new(vec![0.0; 16000], FS).unwrap();
        let track = track_f0(&audio, &PitchConfig::male()).unwrap();
        assert!(track.n_frames() > 0);
        assert_eq!(track.voiced().count(), 0);
    }

    #[test]
    fn too_short() {
        let audio = AudioBuffer::new(vec![0.1; 200], FS).unwrap();
        assert!(matches!(track_f0(&audio, &PitchConfig::male()), Err(Error::TooShort(_))));
    }

    #[test]
    fn voiced_values_in_range_and_scale_invariant() {
        let audio = tone(150.0);
        let cfg = PitchConfig::male();
        let a = track_f0(&audio, &cfg).unwrap();
        for f in a.voiced() {
            assert!(f >= cfg.floor_hz && f <= cfg.ceiling_hz);
        }
        let scaled = AudioBuffer::new(audio.samples().iter().map(|v| v * 0.1).collect(), FS).unwrap();
        let b = track_f0(&scaled, &cfg).unwrap();
        let va: Vec<bool> = a.f0_hz.iter().map(Option::is_some).collect();
        let vb: Vec<bool> = b.f0_hz.iter().map(Option::is_some).collect();
        assert_eq!(va, vb);
    }

    #[test]
    fn no_isolated_octave_jumps() {
        // Strong 100 Hz and 200 Hz components.
        let n = 16000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / FS as f64;
                0.3 * (2.0 * std::f64::consts::PI * 100.0 * t).sin() + 0.5 * (2.0 * std::f64::consts::PI * 200.0 * t).sin()
            })
            .collect();
        let track = track_f0(&AudioBuffer::new(x, FS).unwrap(), &PitchConfig::wide()).unwrap();
        let f = &track.f0_hz;
        let mut isolated = 0;
        for t in 1..f.len() - 1 {
            if let (Some(a), Some(b), Some(c)) = (f[t - 1], f[t], f[t + 1]) {
                let up = (b / a).log2();
                let down = (c / b).log2();
                if up.abs() > 0.8 && down.abs() > 0.8 && up.signum() != down.signum() {
                    isolated += 1;
                }
            }
        }
        assert_eq!(isolated, 0);
    }

    fn track_of(values: &[Option<f64>]) -> PitchTrack {
        PitchTrack {
            frame_times_s: (0..values.len()).map(|i| i as f64 * 0.01).collect(),
            f0_hz: values.to_vec(),
            strengths: vec![0.0; values.len()],
        }
    }

    #[test]
    fn summary_conventions() {
        let (m, s) = f0_summary(&track_of(&[Some(150.0); 5])).unwrap();
        assert_eq!((m, s), (150.0, 0.0));
        let (m, s) = f0_summary(&track_of(&[Some(100.0), Some(110.0), Some(120.0)])).unwrap();
        assert_eq!(m, 110.0);
        assert!((s - (200.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let (m2, s2) = f0_summary(&track_of(&[None, Some(120.0), None, Some(100.0), Some(110.0), None])).unwrap();
        assert_eq!((m2, s2), (m, s));
        assert!(f0_summary(&track_of(&[None, None])).is_err());
    }
}
