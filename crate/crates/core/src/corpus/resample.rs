use super::AudioBuffer;
use crate::{Error, Result};

const KAISER_BETA: f64 = 8.6;
/// Sinc zero crossings on each side of the kernel centre.
const ZERO_CROSSINGS: usize = 512;
/// Cutoff as a fraction of the lower Nyquist frequency.
const CUTOFF: f64 = 0.995;
/// Above this many phases the kernel is evaluated per output sample.
const MAX_TABLE_PHASES: usize = 4096;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Kernel {
    /// Cutoff in cycles per input sample.
    fc: f64,
    half_width: f64,
    i0_beta: f64,
}

impl Kernel {
    fn eval(&self, tau: f64) -> f64 {
        let x = tau / self.half_width;
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let arg = 2.0 * self.fc * tau;
        let sinc = if arg.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
        };
        let window = bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / self.i0_beta;
        2.0 * self.fc * sinc * window
    }
}

/// Band-limited rational resampling with a Kaiser-windowed sinc kernel.
///
/// Output length is `round(len * target / source)`. Equal rates return the
/// input unchanged.
pub fn resample(audio: &AudioBuffer, target_hz: u32) -> Result<AudioBuffer> {
    if target_hz == 0 {
        return Err(Error::Config("target sample rate must be positive".into()));
    }
    let src = audio.sample_rate_hz() as u64;
    let dst = target_hz as u64;
    if src == dst {
        return Ok(audio.clone());
    }
    let g = gcd(src, dst);
    let up = dst / g;
    let down = src / g;
    let x = audio.samples();
    let n_out = ((x.len() as f64) * dst as f64 / src as f64).round().max(1.0) as usize;

    let fc = 0.5 * CUTOFF * (dst.min(src) as f64) / src as f64;
    let kernel = Kernel {
        fc,
        half_width: ZERO_CROSSINGS as f64 / (2.0 * fc),
        i0_beta: bessel_i0(KAISER_BETA),
    };
    let reach = kernel.half_width.ceil() as i64;
    let taps = (2 * reach + 2) as usize;

    let table: Option<Vec<Vec<f64>>> = if (up as usize) <= MAX_TABLE_PHASES {
        Some(
            (0..up)
                .map(|p| {
                    let frac = p as f64 / up as f64;
                    (0..taps)
                        .map(|k| kernel.eval(frac - (k as i64 - reach) as f64))
                        .collect()
                })
                .collect(),
        )
    } else {
        None
    };

    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = (pos % up) as usize;
        let frac = phase as f64 / up as f64;
        let mut acc = 0.0;
        for k in 0..taps {
            let j = base + k as i64 - reach;
            if j < 0 || j >= x.len() as i64 {
                continue;
            }
            let h = match &table {
                Some(t) => t[phase][k],
                None => kernel.eval(frac - (k as i64 - reach) as f64),
            };
            acc += x[j as usize] * h;
        }
        out.push(acc);
    }
    AudioBuffer::new(out, target_hz)
}
