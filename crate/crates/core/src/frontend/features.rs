use std::io::Write;
use std::path::Path;

use crate::corpus::{Artifact, Decoder, Encoder};
use crate::{Error, Result};

/// Frame-by-dimension feature matrix with per-frame speech flags.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    dim: usize,
    speech: Vec<bool>,
    times: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, dim: usize, speech: Vec<bool>, times: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        let n = data.len() / dim;
        if speech.len() != n || times.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: speech.len().min(times.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        Ok(FeatureMatrix { data, dim, speech, times })
    }

    /// Builds a matrix from rows with every frame marked as speech and unit spacing.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or_else(|| Error::Empty("feature rows".into()))?;
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let n = rows.len();
        FeatureMatrix::new(data, dim, vec![true; n], (0..n).map(|t| t as f64).collect())
    }

    pub fn n_frames(&self) -> usize {
        self.speech.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn speech_flags(&self) -> &[bool] {
        &self.speech
    }

    pub fn frame_times_s(&self) -> &[f64] {
        &self.times
    }

    pub fn n_speech(&self) -> usize {
        self.speech.iter().filter(|&&s| s).count()
    }

    pub fn speech_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows().zip(&self.speech).filter(|(_, &s)| s).map(|(r, _)| r)
    }

    /// Same frames and flags, new values.
    pub fn with_data(&self, data: Vec<f64>, dim: usize) -> Result<Self> {
        FeatureMatrix::new(data, dim, self.speech.clone(), self.times.clone())
    }

    pub fn with_speech_flags(mut self, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != self.n_frames() {
            return Err(Error::DimensionMismatch {
                expected: self.n_frames(),
                got: flags.len(),
            });
        }
        self.speech = flags;
        Ok(self)
    }

    /// Only the speech frames, all flagged as speech.
    pub fn speech_only(&self) -> Self {
        let mut data = Vec::new();
        let mut times = Vec::new();
        for t in 0..self.n_frames() {
            if self.speech[t] {
                data.extend_from_slice(self.row(t));
                times.push(self.times[t]);
            }
        }
        let n = times.len();
        FeatureMatrix {
            data,
            dim: self.dim,
            speech: vec![true; n],
            times,
        }
    }

    /// Contiguous frame range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        FeatureMatrix {
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
            speech: self.speech[start..end].to_vec(),
            times: self.times[start..end].to_vec(),
        }
    }

    /// First `k` columns of every row.
    pub fn leading_dims(&self, k: usize) -> Self {
        let k = k.min(self.dim);
        let data = self.rows().flat_map(|r| r[..k].iter().copied()).collect();
        FeatureMatrix {
            data,
            dim: k,
            speech: self.speech.clone(),
            times: self.times.clone(),
        }
    }

    /// Binary layout: magic `MFEAT001`, u32 dim, u64 frame count, u8 dtype
    /// (1 = f64 little endian), row-major values, one flag byte per frame,
    /// frame times as f64.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(21 + self.data.len() * 8 + self.n_frames() * 9);
        out.extend_from_slice(b"MFEAT001");
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_frames() as u64).to_le_bytes());
        out.push(1);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(self.speech.iter().map(|&s| s as u8));
        for t in &self.times {
            out.extend_from_slice(&t.to_le_bytes());
        }
        crate::corpus::store::write_atomic(path, &out)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut dec = Decoder::new(&bytes);
        if dec.take(8)? != b"MFEAT001" {
            return Err(Error::Corrupt(format!("{}: not a feature file", path.display())));
        }
        let dim = dec.u32()? as usize;
        let n = dec.u64()? as usize;
        if dec.u8()? != 1 {
            return Err(Error::UnsupportedAudio("unknown feature dtype".into()));
        }
        let data = (0..n * dim).map(|_| dec.f64()).collect::<Result<Vec<_>>>()?;
        let speech = dec.take(n)?.iter().map(|&b| b != 0).collect();
        let times = (0..n).map(|_| dec.f64()).collect::<Result<Vec<_>>>()?;
        FeatureMatrix::new(data, dim, speech, times)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        write!(w, "time_s,speech")?;
        for d in 0..self.dim {
            write!(w, ",c{d}")?;
        }
        writeln!(w)?;
        for t in 0..self.n_frames() {
            write!(w, "{},{}", self.times[t], self.speech[t] as u8)?;
            for v in self.row(t) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

impl Artifact for FeatureMatrix {
    const KIND: &'static str = "features";
    const VERSION: u32 = 1;

    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.dim as u64);
        enc.f64s(&self.data);
        enc.bytes(&(self.speech.len() as u64).to_le_bytes());
        for &s in &self.speech {
            enc.u8(s as u8);
        }
        enc.f64s(&self.times);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        let dim = dec.len()?;
        let data = dec.f64s()?;
        let n = dec.len()?;
        let speech = (0..n).map(|_| dec.u8().map(|b| b != 0)).collect::<Result<Vec<_>>>()?;
        let times = dec.f64s()?;
        FeatureMatrix::new(data, dim, speech, times)
    }
}
