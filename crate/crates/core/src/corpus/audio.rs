use std::path::Path;

use crate::{Error, Result};

/// Mono audio with samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("audio buffer".into()));
        }
        if sample_rate_hz == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord {
                id: "audio".into(),
                reason: format!("non-finite sample at index {i}"),
            });
        }
        Ok(AudioBuffer { samples, sample_rate_hz })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io)
            if io.kind() == std::io::ErrorKind::UnexpectedEof
                || io.to_string().contains("Failed to read enough bytes") =>
        {
            Error::TruncatedAudio(path.to_path_buf())
        }
        hound::Error::FormatError(msg) if msg.contains("premature") || msg.contains("end of file") => {
            Error::TruncatedAudio(path.to_path_buf())
        }
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::Unsupported => Error::UnsupportedAudio(format!("{}: unsupported WAV variant", path.display())),
        other => Error::UnsupportedAudio(format!("{}: {other}", path.display())),
    }
}

/// Reads a PCM WAV file (16-bit integer or 32-bit float), averaging channels.
pub fn read_audio(path: &Path) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let declared = reader.len() as usize;
    if channels == 0 {
        return Err(Error::UnsupportedAudio(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedAudio(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.display()
            )))
        }
    };
    if interleaved.len() != declared || !interleaved.len().is_multiple_of(channels) {
        return Err(Error::TruncatedAudio(path.to_path_buf()));
    }
    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if samples.is_empty() {
        return Err(Error::TruncatedAudio(path.to_path_buf()));
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes mono 16-bit PCM, clipping to the representable range.
pub fn write_wav_i16(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let tmp = path.with_extension("wav.tmp");
    {
        let mut w = hound::WavWriter::create(&tmp, spec).map_err(|e| map_hound(path, e))?;
        for &s in audio.samples() {
            let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(q).map_err(|e| map_hound(path, e))?;
        }
        w.finalize().map_err(|e| map_hound(path, e))?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw<T: hound::Sample + Copy>(path: &Path, spec: hound::WavSpec, data: &[T]) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in data {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    fn int_spec(channels: u16, rate: u32) -> hound::WavSpec {
        hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        }
    }

    #[test]
    fn mono_int16_identity_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let data: Vec<i16> = (0..16000).map(|i| ((i % 200) as i16 - 100) * 50).collect();
        write_raw(&p, int_spec(1, 16000), &data);
        let a = read_audio(&p).unwrap();
        assert_eq!(a.len(), 16000);
        assert_eq!(a.sample_rate_hz(), 16000);
        assert_eq!(a.samples()[1], data[1] as f64 / 32768.0);
    }

    #[test]
    fn stereo_antiphase_averages_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let mut data = Vec::new();
        for i in 0..1000 {
            let x = ((i * 37) % 20000) as i16 - 10000;
            data.push(x);
            data.push(-x);
        }
        write_raw(&p, int_spec(2, 16000), &data);
        let a = read_audio(&p).unwrap();
        assert_eq!(a.len(), 1000);
        assert!(a.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn max_amplitude_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.wav");
        write_raw(&p, int_spec(1, 8000), &[i16::MAX; 64]);
        let a = read_audio(&p).unwrap();
        let expected = 32767.0 / 32768.0;
        assert!(a.samples().iter().all(|&v| v == expected));
    }

    #[test]
    fn float32_supported_and_24_bit_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 22050,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        write_raw(&p, spec, &[0.25f32, -0.5, 0.75]);
        assert_eq!(read_audio(&p).unwrap().samples(), &[0.25, -0.5, 0.75]);

        let p24 = dir.path().join("i24.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        write_raw(&p24, spec, &[1i32, 2, 3]);
        assert!(matches!(read_audio(&p24), Err(Error::UnsupportedAudio(_))));
    }

    #[test]
    fn truncated_file_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_raw(&p, int_spec(1, 16000), &[1000i16; 500]);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 301]).unwrap();
        let r = read_audio(&p);
        assert!(matches!(r, Err(Error::TruncatedAudio(_))), "{r:?}");
    }

    #[test]
    fn write_read_is_lossless_to_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.wav");
        let samples: Vec<f64> = (0..4000).map(|i| 0.9 * (i as f64 * 0.013).sin()).collect();
        let a = AudioBuffer::new(samples.clone(), 16000).unwrap();
        write_wav_i16(&p, &a).unwrap();
        let b = read_audio(&p).unwrap();
        let max_err = samples
            .iter()
            .zip(b.samples())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 2f64.powi(-15), "max error {max_err}");
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(AudioBuffer::new(vec![], 16000).is_err());
        assert!(AudioBuffer::new(vec![0.0, f64::NAN], 16000).is_err());
    }
}
