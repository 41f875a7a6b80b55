//! LDA, whitening with length normalisation, PLDA and trial scoring.

mod lda;
mod plda;
mod score;
mod whiten;

use nalgebra::DVector;

pub use lda::{train_lda, LdaTransform};
pub use plda::{train_plda, PldaModel, PldaTrainReport, PldaVariant};
pub use score::{
    compute_eer, eer_from_scores, read_scores_csv, read_trials_csv, write_scores_csv, write_trials_csv, Domain, Eer,
    Trial, TrialLabel, TrialScore,
};
pub use whiten::{length_normalize, Whitener};

use crate::corpus::{Artifact, Decoder, Encoder};
use crate::embedding::{average_embeddings, Embedding};
use crate::{Error, Result};

/// Trained scoring back end: LDA, whitening and length normalisation, PLDA.
#[derive(Debug, Clone, PartialEq)]
pub struct Backend {
    pub profile_id: String,
    pub lda: LdaTransform,
    pub whitener: Whitener,
    pub plda: PldaModel,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackendReport {
    pub warnings: Vec<String>,
    pub plda_objective: Vec<f64>,
}

/// Maps string labels to dense class indices in order of first appearance.
pub fn label_indices(labels: &[String]) -> Vec<usize> {
    let mut seen: Vec<&str> = Vec::new();
    labels
        .iter()
        .map(|l| match seen.iter().position(|s| *s == l) {
            Some(i) => i,
            None => {
                seen.push(l);
                seen.len() - 1
            }
        })
        .collect()
}

pub fn train_backend(
    embeddings: &[Embedding],
    speakers: &[String],
    lda_dim: usize,
    variant: PldaVariant,
    plda_iters: usize,
) -> Result<(Backend, BackendReport)> {
    let first = embeddings.first().ok_or_else(|| Error::Empty("back-end training set".into()))?;
    if embeddings.iter().any(|e| e.profile_id != first.profile_id) {
        let other = embeddings.iter().find(|e| e.profile_id != first.profile_id).unwrap();
        return Err(Error::MixedProfiles(first.profile_id.clone(), other.profile_id.clone()));
    }
    let labels = label_indices(speakers);
    let raw: Vec<DVector<f64>> = embeddings.iter().map(|e| DVector::from_column_slice(&e.vector)).collect();
    let (lda, mut warnings) = train_lda(&raw, &labels, lda_dim)?;
    let projected: Vec<DVector<f64>> = raw.iter().map(|x| lda.apply(x)).collect::<Result<_>>()?;
    let whitener = Whitener::fit(&projected)?;
    let normed: Vec<DVector<f64>> = projected.iter().map(|x| whitener.apply(x)).collect::<Result<_>>()?;
    let variant = match variant {
        PldaVariant::Simplified { speaker_dim } if speaker_dim > lda.output_dim() => {
            let msg = format!("speaker subspace {speaker_dim} clamped to {}", lda.output_dim());
            log::warn!("{msg}");
            warnings.push(msg);
            PldaVariant::Simplified { speaker_dim: lda.output_dim() }
        }
        v => v,
    };
    let (plda, plda_report) = train_plda(&normed, &labels, variant, plda_iters)?;
    warnings.extend(plda_report.warnings);
    Ok((
        Backend {
            profile_id: first.profile_id.clone(),
            lda,
            whitener,
            plda,
        },
        BackendReport {
            warnings,
            plda_objective: plda_report.objective,
        },
    ))
}

impl Backend {
    /// LDA projection, whitening and length normalisation of a raw embedding.
    pub fn transform(&self, e: &Embedding) -> Result<DVector<f64>> {
        if e.profile_id != self.profile_id {
            return Err(Error::MixedProfiles(self.profile_id.clone(), e.profile_id.clone()));
        }
        let x = DVector::from_column_slice(&e.vector);
        self.whitener.apply(&self.lda.apply(&x)?)
    }

    /// LLR of `test` against the average of the raw enrollment embeddings.
    pub fn score(&self, enroll: &[Embedding], test: &Embedding) -> Result<f64> {
        let avg = average_embeddings(enroll)?;
        self.plda.llr(&self.transform(&avg)?, &self.transform(test)?)
    }

    pub fn score_trial(&self, trial: &Trial, enroll: &[Embedding], test: &Embedding) -> Result<TrialScore> {
        TrialScore::new(trial, self.score(enroll, test)?)
    }
}

impl Artifact for Backend {
    const KIND: &'static str = "backend";
    const VERSION: u32 = 1;

    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.profile_id);
        for part in [self.lda.to_bytes(), self.whitener.to_bytes(), self.plda.to_bytes()] {
            enc.u64(part.len() as u64);
            enc.bytes(&part);
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        let profile_id = dec.str()?;
        let mut part = || -> Result<&[u8]> {
            let n = dec.len()?;
            dec.take(n)
        };
        let lda = LdaTransform::from_bytes(part()?)?;
        let whitener = Whitener::from_bytes(part()?)?;
        let plda = PldaModel::from_bytes(part()?)?;
        Ok(Backend {
            profile_id,
            lda,
            whitener,
            plda,
        })
    }
}
