//! Browser bindings: synthesize vowel-like voices, track their pitch and
//! formants, and compare two voices by aligned formant difference.

use mimicry_core::corpus::AudioBuffer;
use mimicry_core::prosody::{compare_formants, extract_formants, track_f0, PairOutcome, PitchConfig};
use mimicry_core::synth::resonant_pulse_train;
use wasm_bindgen::prelude::*;

pub const SAMPLE_RATE: u32 = 16_000;

fn buffer(samples: &[f32]) -> Result<AudioBuffer, JsError> {
    let x = samples.iter().map(|&v| v as f64).collect();
    AudioBuffer::new(x, SAMPLE_RATE).map_err(|e| JsError::new(&e.to_string()))
}

fn vowel(f0: f64, f: [f64; 3], duration_s: f64) -> Vec<f64> {
    let bw = |f: f64| 50.0 + 0.04 * f;
    resonant_pulse_train(f0, &[(f[0], bw(f[0])), (f[1], bw(f[1])), (f[2], bw(f[2]))], SAMPLE_RATE as f64, duration_s)
}

/// A pulse train through three resonances at 16 kHz.
#[wasm_bindgen]
pub fn synth_vowel(f0: f64, f1: f64, f2: f64, f3: f64, duration_s: f64) -> Vec<f32> {
    vowel(f0, [f1, f2, f3], duration_s.clamp(0.1, 5.0)).into_iter().map(|v| v as f32).collect()
}

/// Four vowels /a/ /i/ /u/ /e/ with short pauses, formants scaled by
/// `vtl_scale` (vocal tract length) and F1 raised by `f1_shift_hz`.
#[wasm_bindgen]
pub fn synth_phrase(f0: f64, vtl_scale: f64, f1_shift_hz: f64) -> Vec<f32> {
    const VOWELS: [[f64; 3]; 4] = [[730.0, 1090.0, 2440.0], [270.0, 2290.0, 3010.0], [300.0, 870.0, 2240.0], [530.0, 1840.0, 2480.0]];
    let pause = vec![0.0; (0.08 * SAMPLE_RATE as f64) as usize];
    let mut out = pause.clone();
    for f in VOWELS {
        let f = [f[0] * vtl_scale + f1_shift_hz, f[1] * vtl_scale, f[2] * vtl_scale];
        out.extend(vowel(f0, f, 0.25));
        out.extend_from_slice(&pause);
    }
    out.into_iter().map(|v| v as f32).collect()
}

#[wasm_bindgen]
pub struct Analysis {
    pitch_times: Vec<f64>,
    f0: Vec<f64>,
    formant_times: Vec<f64>,
    formants: Vec<f64>,
}

#[wasm_bindgen]
impl Analysis {
    pub fn pitch_times(&self) -> Vec<f64> {
        self.pitch_times.clone()
    }

    /// F0 per frame in Hz, NaN where unvoiced.
    pub fn f0(&self) -> Vec<f64> {
        self.f0.clone()
    }

    pub fn formant_times(&self) -> Vec<f64> {
        self.formant_times.clone()
    }

    /// F1, F2, F3 per frame, flattened; NaN where unreliable.
    pub fn formants(&self) -> Vec<f64> {
        self.formants.clone()
    }

    pub fn median_f0(&self) -> f64 {
        let mut v: Vec<f64> = self.f0.iter().copied().filter(|f| !f.is_nan()).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

/// Pitch and formant tracks of 16 kHz samples.
#[wasm_bindgen]
pub fn analyze(samples: &[f32]) -> Result<Analysis, JsError> {
    let audio = buffer(samples)?;
    let pitch = PitchConfig::wide();
    let p = track_f0(&audio, &pitch).map_err(|e| JsError::new(&e.to_string()))?;
    let f = extract_formants(&audio, &pitch).map_err(|e| JsError::new(&e.to_string()))?;
    let formants = f
        .freqs
        .iter()
        .zip(&f.reliable)
        .flat_map(|(v, &ok)| v.map(|x| if ok { x } else { f64::NAN }))
        .collect();
    Ok(Analysis {
        pitch_times: p.frame_times_s,
        f0: p.f0_hz.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        formant_times: f.frame_times_s,
        formants,
    })
}

#[wasm_bindgen]
pub struct Comparison {
    d_hz: f64,
    frames_used: usize,
    status: String,
}

#[wasm_bindgen]
impl Comparison {
    /// Mean absolute F1-F3 difference in Hz; NaN when rejected.
    pub fn d_hz(&self) -> f64 {
        self.d_hz
    }

    pub fn frames_used(&self) -> usize {
        self.frames_used
    }

    pub fn status(&self) -> String {
        self.status.clone()
    }
}

/// Aligns two 16 kHz recordings and measures their formant difference.
#[wasm_bindgen]
pub fn compare(a: &[f32], b: &[f32]) -> Result<Comparison, JsError> {
    let pitch = PitchConfig::wide();
    let (outcome, _, _) =
        compare_formants(&buffer(a)?, &pitch, &buffer(b)?, &pitch).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(match outcome {
        PairOutcome::Compared { d_hz, frames_used } => Comparison {
            d_hz,
            frames_used,
            status: "ok".into(),
        },
        PairOutcome::Misaligned { mean_distance } => Comparison {
            d_hz: f64::NAN,
            frames_used: 0,
            status: format!("rejected: mean alignment distance {mean_distance:.2}"),
        },
        PairOutcome::Unreliable => Comparison {
            d_hz: f64::NAN,
            frames_used: 0,
            status: "rejected: no reliable frames".into(),
        },
    })
}
