use std::io::{Read, Write};

use crate::corpus::{Artifact, Decoder, Encoder};
use crate::{Error, Result};

/// Fixed-size utterance or speaker representation produced by one system profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub profile_id: String,
    /// Utterance id, or a speaker/utterance-set reference for averages.
    pub source: String,
}

impl Embedding {
    pub fn new(vector: Vec<f64>, profile_id: &str, source: &str) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::Empty("embedding vector".into()));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite embedding for {source}")));
        }
        Ok(Embedding {
            vector,
            profile_id: profile_id.to_string(),
            source: source.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn with_source(mut self, source: &str) -> Self {
        self.source = source.to_string();
        self
    }
}

/// Element-wise mean of embeddings from a single profile.
pub fn average_embeddings(list: &[Embedding]) -> Result<Embedding> {
    let first = list.first().ok_or_else(|| Error::Empty("no embeddings to average".into()))?;
    let mut sum = vec![0.0; first.dim()];
    for e in list {
        if e.profile_id != first.profile_id {
            return Err(Error::MixedProfiles(first.profile_id.clone(), e.profile_id.clone()));
        }
        if e.dim() != first.dim() {
            return Err(Error::DimensionMismatch { expected: first.dim(), got: e.dim() });
        }
        sum.iter_mut().zip(&e.vector).for_each(|(s, v)| *s += v);
    }
    let n = list.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    let source = if list.len() == 1 {
        first.source.clone()
    } else {
        list.iter().map(|e| e.source.as_str()).collect::<Vec<_>>().join("+")
    };
    Embedding::new(sum, &first.profile_id, &source)
}

/// Ordered collection of embeddings stored as one artifact.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingSet {
    pub items: Vec<Embedding>,
}

impl EmbeddingSet {
    pub fn get(&self, source: &str) -> Option<&Embedding> {
        self.items.iter().find(|e| e.source == source)
    }
}

impl Artifact for EmbeddingSet {
    const KIND: &'static str = "embeddings";
    const VERSION: u32 = 1;

    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.items.len() as u64);
        for e in &self.items {
            enc.str(&e.source);
            enc.str(&e.profile_id);
            enc.f64s(&e.vector);
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        let n = dec.len()?;
        let mut items = Vec::with_capacity(n);
        for _ in 0..n {
            let source = dec.str()?;
            let profile = dec.str()?;
            let vector = dec.f64s()?;
            items.push(Embedding::new(vector, &profile, &source)?);
        }
        Ok(EmbeddingSet { items })
    }
}

/// CSV with columns `utterance_id,profile_id,e0,e1,...`.
pub fn write_embeddings_csv(w: impl Write, embeddings: &[Embedding]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = embeddings.first().map_or(0, |e| e.dim());
    let mut header = vec!["utterance_id".to_string(), "profile_id".to_string()];
    header.extend((0..dim).map(|i| format!("e{i}")));
    out.write_record(&header)?;
    for e in embeddings {
        let mut rec = vec![e.source.clone(), e.profile_id.clone()];
        rec.extend(e.vector.iter().map(|v| format!("{v:e}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_embeddings_csv(r: impl Read) -> Result<Vec<Embedding>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut items = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::InvalidRecord {
            id: format!("row {}", i + 1),
            reason: m.to_string(),
        };
        if rec.len() < 3 {
            return Err(bad("too few columns"));
        }
        let vector = rec
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<Vec<_>>>()?;
        items.push(Embedding::new(vector, &rec[1], &rec[0])?);
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(v: Vec<f64>) -> Embedding {
        Embedding::new(v, "A", "u").unwrap()
    }

    #[test]
    fn single_and_symmetric() {
        let v = emb(vec![1.0, -2.0, 3.5]);
        assert_eq!(average_embeddings(std::slice::from_ref(&v)).unwrap(), v);
        let neg = emb(vec![-1.0, 2.0, -3.5]);
        let avg = average_embeddings(&[v, neg]).unwrap();
        assert!(avg.vector.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_reverse_order_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let list: Vec<Embedding> = (0..28).map(|_| emb((0..7).map(|_| rng.gen_range(-3.0..3.0)).collect())).collect();
        let avg = average_embeddings(&list).unwrap();
        for d in 0..7 {
            let m: f64 = list.iter().rev().map(|e| e.vector[d]).sum::<f64>() / 28.0;
            assert!((avg.vector[d] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_empty_and_mixed() {
        assert!(matches!(average_embeddings(&[]), Err(Error::Empty(_))));
        let b = Embedding::new(vec![1.0], "B", "x").unwrap();
        assert!(matches!(
            average_embeddings(&[emb(vec![1.0]), b]),
            Err(Error::MixedProfiles(..))
        ));
        assert!(matches!(
            average_embeddings(&[emb(vec![1.0]), emb(vec![1.0, 2.0])]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn csv_and_artifact_round_trip() {
        let items = vec![
            Embedding::new(vec![0.1, -1e-17, 3.0], "A", "u1").unwrap(),
            Embedding::new(vec![1.0 / 3.0, 2.0, 0.0], "A", "u2").unwrap(),
        ];
        let mut buf = Vec::new();
        write_embeddings_csv(&mut buf, &items).unwrap();
        assert_eq!(read_embeddings_csv(&buf[..]).unwrap(), items);
        let set = EmbeddingSet { items };
        assert_eq!(EmbeddingSet::from_bytes(&set.to_bytes()).unwrap(), set);
    }
}
