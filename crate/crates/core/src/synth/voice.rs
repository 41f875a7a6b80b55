use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::Gender;

use super::signal::{one_pole, peak_normalize, pre_difference, pulse_train, Resonator};

/// Reference vowel formants (F1, F2, F3) for an adult male vocal tract.
const VOWELS: [[f64; 3]; 10] = [
    [270.0, 2290.0, 3010.0],
    [390.0, 1990.0, 2550.0],
    [530.0, 1840.0, 2480.0],
    [660.0, 1720.0, 2410.0],
    [730.0, 1090.0, 2440.0],
    [570.0, 840.0, 2410.0],
    [440.0, 1020.0, 2240.0],
    [300.0, 870.0, 2240.0],
    [640.0, 1190.0, 2390.0],
    [490.0, 1350.0, 1690.0],
];
const BANDWIDTHS: [f64; 5] = [80.0, 100.0, 140.0, 200.0, 250.0];

/// Parameters of a synthetic talker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Voice {
    pub gender: Gender,
    pub f0_hz: f64,
    /// Intonation depth in semitones.
    pub f0_range_st: f64,
    /// Vocal-tract length factor applied to all formants.
    pub formant_scale: f64,
    /// Per-formant multiplicative offsets for F1..F3.
    pub formant_offsets: [f64; 3],
    /// Fixed upper resonances (F4, F5) in Hz.
    pub upper_formants: [f64; 2],
    pub bandwidth_scale: f64,
    /// Source low-pass pole controlling spectral tilt.
    pub tilt: f64,
    pub breathiness: f64,
    /// Syllable duration factor.
    pub tempo: f64,
}

impl Voice {
    /// Draws a voice around a cluster centre; `spread` scales the deviation.
    pub fn sample(centre: &Voice, spread: f64, rng: &mut ChaCha8Rng) -> Voice {
        let mut n = |sd: f64| -> f64 { sd * spread * rng.sample::<f64, _>(StandardNormal) };
        Voice {
            gender: centre.gender,
            f0_hz: centre.f0_hz * (n(0.12)).exp(),
            f0_range_st: (centre.f0_range_st + n(0.6)).clamp(0.5, 5.0),
            formant_scale: centre.formant_scale * (n(0.05)).exp(),
            formant_offsets: [
                centre.formant_offsets[0] * (n(0.05)).exp(),
                centre.formant_offsets[1] * (n(0.05)).exp(),
                centre.formant_offsets[2] * (n(0.04)).exp(),
            ],
            upper_formants: [
                (centre.upper_formants[0] * (n(0.05)).exp()).clamp(3000.0, 4200.0),
                (centre.upper_formants[1] * (n(0.05)).exp()).clamp(4300.0, 5600.0),
            ],
            bandwidth_scale: centre.bandwidth_scale * (n(0.15)).exp(),
            tilt: (centre.tilt + n(0.03)).clamp(0.6, 0.97),
            breathiness: (centre.breathiness * (n(0.4)).exp()).clamp(0.002, 0.3),
            tempo: (centre.tempo * (n(0.08)).exp()).clamp(0.7, 1.4),
        }
    }

    /// Population-level centre for a gender.
    pub fn prototype(gender: Gender) -> Voice {
        let female = gender == Gender::Female;
        Voice {
            gender,
            f0_hz: if female { 205.0 } else { 118.0 },
            f0_range_st: 2.5,
            formant_scale: if female { 1.16 } else { 1.0 },
            formant_offsets: [1.0; 3],
            upper_formants: if female { [3900.0, 4900.0] } else { [3500.0, 4500.0] },
            bandwidth_scale: 1.0,
            tilt: 0.85,
            breathiness: if female { 0.04 } else { 0.02 },
            tempo: 1.0,
        }
    }

    /// Moves each parameter a fraction of the way towards `target`. The
    /// fractions model how well a talker can imitate each property.
    pub fn imitate(&self, target: &Voice, skill: &ImitationSkill) -> Voice {
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let glerp = |a: f64, b: f64, t: f64| (a.ln() + (b.ln() - a.ln()) * t).exp();
        Voice {
            gender: self.gender,
            f0_hz: glerp(self.f0_hz, target.f0_hz, skill.pitch),
            f0_range_st: lerp(self.f0_range_st, target.f0_range_st, skill.pitch),
            formant_scale: glerp(self.formant_scale, target.formant_scale, skill.tract),
            formant_offsets: [0, 1, 2].map(|i| glerp(self.formant_offsets[i], target.formant_offsets[i], skill.articulation)),
            upper_formants: [0, 1].map(|i| glerp(self.upper_formants[i], target.upper_formants[i], skill.tract)),
            bandwidth_scale: glerp(self.bandwidth_scale, target.bandwidth_scale, skill.articulation),
            tilt: lerp(self.tilt, target.tilt, skill.phonation),
            breathiness: glerp(self.breathiness, target.breathiness, skill.phonation),
            tempo: glerp(self.tempo, target.tempo, skill.tempo),
        }
    }

    fn vowel_formants(&self, v: usize) -> [f64; 3] {
        [0, 1, 2].map(|i| VOWELS[v][i] * self.formant_scale * self.formant_offsets[i])
    }
}

/// Fractions (0 = unchanged, 1 = exact copy) by which an impersonator shifts
/// each voice property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImitationSkill {
    pub pitch: f64,
    pub tract: f64,
    pub articulation: f64,
    pub phonation: f64,
    pub tempo: f64,
}

impl ImitationSkill {
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        ImitationSkill {
            pitch: rng.gen_range(0.5..0.8),
            tract: rng.gen_range(0.1..0.3),
            articulation: rng.gen_range(0.2..0.45),
            phonation: rng.gen_range(0.3..0.6),
            tempo: rng.gen_range(0.4..0.7),
        }
    }
}

/// Recording conditions of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    /// First-order colouring coefficient applied as x[n] + c x[n-1].
    pub colour: f64,
    pub snr_db: f64,
    pub peak: f64,
}

impl Channel {
    pub fn studio(rng: &mut ChaCha8Rng) -> Self {
        Channel {
            colour: rng.gen_range(-0.05..0.05),
            snr_db: rng.gen_range(40.0..50.0),
            peak: rng.gen_range(0.4..0.7),
        }
    }

    pub fn wild(rng: &mut ChaCha8Rng) -> Self {
        Channel {
            colour: rng.gen_range(-0.35..0.35),
            snr_db: rng.gen_range(22.0..35.0),
            peak: rng.gen_range(0.2..0.8),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Syllable {
    vowel: usize,
    duration_s: f64,
    gap_s: f64,
    accent_st: f64,
    fricative: bool,
}

/// Syllable plan derived from a prompt seed; the same prompt yields the same
/// vowel sequence and rhythm for every talker.
fn prompt_plan(prompt_seed: u64, duration_s: f64) -> Vec<Syllable> {
    let mut rng = ChaCha8Rng::seed_from_u64(prompt_seed ^ 0x5e_ed0f_7e47);
    let mut plan = Vec::new();
    let mut t = 0.0;
    while t < duration_s {
        let s = Syllable {
            vowel: rng.gen_range(0..VOWELS.len()),
            duration_s: rng.gen_range(0.12..0.24),
            gap_s: if rng.gen_bool(0.15) { rng.gen_range(0.25..0.4) } else { rng.gen_range(0.04..0.12) },
            accent_st: rng.gen_range(-1.0..1.0),
            fricative: rng.gen_bool(0.4),
        };
        t += s.duration_s + s.gap_s;
        plan.push(s);
    }
    plan
}

/// Renders an utterance of roughly `duration_s` seconds.
pub fn render(
    voice: &Voice,
    prompt_seed: u64,
    duration_s: f64,
    channel: &Channel,
    fs: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let plan = prompt_plan(prompt_seed, duration_s / voice.tempo);
    let lead = (0.15 * fs) as usize;
    let mut f0 = Vec::new();
    let mut env = Vec::new();
    let mut formants: Vec<[f64; 3]> = Vec::new();
    let mut fric = Vec::new();
    let push_silence = |n: usize, f0: &mut Vec<f64>, env: &mut Vec<f64>, fm: &mut Vec<[f64; 3]>, fr: &mut Vec<f64>, last: [f64; 3]| {
        for _ in 0..n {
            f0.push(0.0);
            env.push(0.0);
            fm.push(last);
            fr.push(0.0);
        }
    };
    let mut last = voice.vowel_formants(plan[0].vowel);
    push_silence(lead, &mut f0, &mut env, &mut formants, &mut fric, last);
    let jitter = Normal::new(0.0, 0.004).unwrap();
    let n_syl = plan.len();
    for (k, s) in plan.iter().enumerate() {
        let n = (s.duration_s * voice.tempo * fs) as usize;
        let target = voice.vowel_formants(s.vowel);
        let glide = ((0.04 * fs) as usize).min(n / 2);
        let ramp = ((0.02 * fs) as usize).min(n / 2).max(1);
        let declination = -2.0 * k as f64 / n_syl as f64;
        let base = voice.f0_hz * 2f64.powf((s.accent_st * voice.f0_range_st * 0.5 + declination * voice.f0_range_st * 0.3) / 12.0);
        for i in 0..n {
            let w = if i < glide { i as f64 / glide as f64 } else { 1.0 };
            formants.push([0, 1, 2].map(|d| last[d] + (target[d] - last[d]) * w));
            let pos = i as f64 / n as f64;
            f0.push(base * (1.0 + 0.03 * (1.0 - 2.0 * pos)) * (1.0 + jitter.sample(rng)));
            let edge = i.min(n - 1 - i);
            env.push(if edge < ramp {
                0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            });
            fric.push(0.0);
        }
        last = target;
        let gap = (s.gap_s * voice.tempo * fs) as usize;
        push_silence(gap, &mut f0, &mut env, &mut formants, &mut fric, last);
        if s.fricative && k + 1 < n_syl {
            let len = ((0.06 * fs) as usize).min(gap);
            let end = fric.len();
            for v in &mut fric[end - len..] {
                *v = 0.25;
            }
        }
    }
    push_silence(lead, &mut f0, &mut env, &mut formants, &mut fric, last);

    let mut source = pulse_train(&f0, fs);
    one_pole(&mut source, voice.tilt);
    let total = source.len();
    let noise: Vec<f64> = (0..total).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for i in 0..total {
        source[i] = source[i] * env[i] + voice.breathiness * 0.05 * noise[i] * env[i];
    }
    let mut tract = vec![Resonator::default(); 5];
    let bw: Vec<f64> = BANDWIDTHS.iter().map(|b| b * voice.bandwidth_scale).collect();
    let mut out = vec![0.0; total];
    for i in 0..total {
        let f = formants[i];
        let centres = [f[0], f[1], f[2], voice.upper_formants[0], voice.upper_formants[1]];
        let mut s = source[i];
        for (k, r) in tract.iter_mut().enumerate() {
            s = r.step(s, centres[k], bw[k], fs);
        }
        out[i] = s;
    }
    pre_difference(&mut out, 0.95);
    // Fricative noise, roughly high-passed.
    let mut hiss: Vec<f64> = (0..total).map(|i| fric[i] * rng.sample::<f64, _>(StandardNormal)).collect();
    pre_difference(&mut hiss, 0.9);
    let speech_peak = out.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
    for i in 0..total {
        out[i] += hiss[i] * speech_peak * 0.15;
    }

    // Channel.
    let mut prev = 0.0;
    for v in out.iter_mut() {
        let cur = *v;
        *v = cur + channel.colour * prev;
        prev = cur;
    }
    let power = out.iter().map(|v| v * v).sum::<f64>() / total as f64;
    let noise_sd = (power / 10f64.powf(channel.snr_db / 10.0)).sqrt();
    for v in out.iter_mut() {
        *v += noise_sd * rng.sample::<f64, _>(StandardNormal);
    }
    peak_normalize(&mut out, channel.peak);
    out
}
