//! End-to-end training and embedding extraction for one system profile.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{train_backend, Backend, LdaTransform, PldaModel, Whitener};
use crate::corpus::{read_audio, resample, Artifact, AudioBuffer, Decoder, Encoder, Manifest, Store, UtteranceRecord};
use crate::embedding::{
    accumulate_bw, extract_ivector, train_tv, train_ubm, BwStats, Embedding, EmbeddingSet, GmmUbm, SystemProfile,
    TotalVariability, TvTrainConfig, UbmTrainConfig,
};
use crate::frontend::{extract_features, FeatureMatrix, FrontendConfig};
use crate::parallel::Workers;
use crate::{Error, Result};

/// Reads an utterance and resamples it to `rate` when needed.
pub fn load_audio(manifest: &Manifest, base: &Path, utt: &UtteranceRecord, rate: u32) -> Result<AudioBuffer> {
    let path = manifest.audio_path(utt, base);
    let audio = read_audio(&path).map_err(|e| e.context(format!("utterance {}", utt.utterance_id)))?;
    if audio.sample_rate_hz() == rate {
        Ok(audio)
    } else {
        resample(&audio, rate)
    }
}

/// Front-end features for each utterance, in input order.
pub fn utterance_features(
    manifest: &Manifest,
    base: &Path,
    utts: &[&UtteranceRecord],
    config: &FrontendConfig,
    workers: &Workers,
) -> Result<Vec<FeatureMatrix>> {
    workers
        .map(utts, |u| {
            let audio = load_audio(manifest, base, u, config.sample_rate_hz)?;
            extract_features(&audio, config).map_err(|e| e.context(format!("utterance {}", u.utterance_id)))
        })
        .into_iter()
        .collect()
}

/// A trained system: UBM, total-variability subspace and scoring back-end.
#[derive(Debug, Clone)]
pub struct TrainedSystem {
    pub profile: SystemProfile,
    pub ubm: GmmUbm,
    pub tv: TotalVariability,
    pub backend: Backend,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub profile_id: String,
    pub n_utterances: usize,
    pub n_speakers: usize,
    /// (mixture size, average frame log-likelihood) per EM iteration.
    pub ubm_objective: Vec<(usize, f64)>,
    pub tv_objective: Vec<f64>,
    pub plda_objective: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Artifact wrapper storing a profile as JSON.
struct StoredProfile(SystemProfile);

impl Artifact for StoredProfile {
    const KIND: &'static str = "system-profile";
    const VERSION: u32 = 1;

    fn encode(&self, enc: &mut Encoder) {
        enc.str(&serde_json::to_string(&self.0).expect("profile serializes"));
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        Ok(StoredProfile(serde_json::from_str(&dec.str()?)?))
    }
}

pub fn ubm_key(profile_id: &str) -> String {
    format!("{profile_id}/ubm")
}

pub fn tv_key(profile_id: &str) -> String {
    format!("{profile_id}/tv")
}

pub fn embeddings_key(profile_id: &str) -> String {
    format!("{profile_id}/embeddings")
}

/// Store keys of every persisted model part, in training order.
pub fn model_keys(profile_id: &str) -> [String; 6] {
    [
        format!("{profile_id}/profile"),
        ubm_key(profile_id),
        tv_key(profile_id),
        format!("{profile_id}/lda"),
        format!("{profile_id}/whitener"),
        format!("{profile_id}/plda"),
    ]
}

fn embed(stats: &BwStats, tv: &TotalVariability, source: &str) -> Result<Embedding> {
    Ok(extract_ivector(stats, tv)?.with_source(source))
}

/// Trains the whole system on the profile's training partition.
pub fn train_system(
    profile: &SystemProfile,
    manifest: &Manifest,
    base: &Path,
    workers: &Workers,
) -> Result<(TrainedSystem, TrainingLog)> {
    profile.validate()?;
    let utts: Vec<&UtteranceRecord> = manifest
        .partition(&profile.training_partition)
        .filter(|u| u.quality_ok)
        .collect();
    if utts.is_empty() {
        return Err(Error::InsufficientData(format!(
            "manifest has no utterances in training partition {:?}",
            profile.training_partition
        )));
    }
    let mut log = TrainingLog {
        profile_id: profile.profile_id.clone(),
        ..Default::default()
    };
    log::info!("{}: extracting features for {} utterances", profile.profile_id, utts.len());
    let feats = utterance_features(manifest, base, &utts, &profile.frontend, workers).map_err(|e| e.context("front-end"))?;
    let (utts, feats): (Vec<&UtteranceRecord>, Vec<FeatureMatrix>) = utts
        .into_iter()
        .zip(feats)
        .filter(|(u, f)| {
            let keep = f.n_speech() > 0;
            if !keep {
                let msg = format!("utterance {} has no speech frames; skipped", u.utterance_id);
                log::warn!("{msg}");
                log.warnings.push(msg);
            }
            keep
        })
        .unzip();

    let ubm_cfg = UbmTrainConfig {
        iters_per_split: profile.ubm_iters,
        ..UbmTrainConfig::new(profile.ubm_components, profile.seed)
    };
    log::info!("{}: training {}-component UBM", profile.profile_id, profile.ubm_components);
    let (ubm, ubm_log) = train_ubm(&feats, &ubm_cfg, workers).map_err(|e| e.context("UBM training"))?;
    log.ubm_objective = ubm_log.iterations;

    let stats: Vec<BwStats> = workers
        .map(&feats, |f| accumulate_bw(f, &ubm))
        .into_iter()
        .collect::<Result<_>>()
        .map_err(|e| e.context("Baum-Welch statistics"))?;
    let tv_cfg = TvTrainConfig {
        iters: profile.tv_iters,
        init_scale: profile.tv_init_scale,
        ..TvTrainConfig::new(profile.tv_rank, profile.seed)
    };
    log::info!("{}: training rank-{} total variability", profile.profile_id, profile.tv_rank);
    let (mut tv, tv_log) = train_tv(&stats, &ubm, &tv_cfg, workers).map_err(|e| e.context("total-variability training"))?;
    tv.profile_id = profile.profile_id.clone();
    tv.ubm_ref = crate::corpus::store::hex_digest(&ubm.to_bytes());
    log.tv_objective = tv_log.objective;
    log.warnings.extend(tv_log.warnings);

    let embeddings: Vec<Embedding> = workers
        .map_indexed(stats.len(), |i| embed(&stats[i], &tv, &utts[i].utterance_id))
        .into_iter()
        .collect::<Result<_>>()?;
    let speakers: Vec<String> = utts.iter().map(|u| u.speaker_id.clone()).collect();
    let mut distinct = speakers.clone();
    distinct.sort();
    distinct.dedup();
    log.n_utterances = utts.len();
    log.n_speakers = distinct.len();
    log::info!("{}: training back-end on {} speakers", profile.profile_id, distinct.len());
    let (backend, report) = train_backend(&embeddings, &speakers, profile.lda_dim, profile.plda, profile.plda_iters)
        .map_err(|e| e.context("back-end training"))?;
    log.plda_objective = report.plda_objective;
    log.warnings.extend(report.warnings);
    Ok((
        TrainedSystem {
            profile: profile.clone(),
            ubm,
            tv,
            backend,
        },
        log,
    ))
}

impl TrainedSystem {
    /// Writes every model part under profile-scoped keys; returns their digests.
    pub fn save(&self, store: &Store) -> Result<Vec<(String, String)>> {
        let id = &self.profile.profile_id;
        let keys = model_keys(id);
        let digests = [
            store.put(&keys[0], &StoredProfile(self.profile.clone()))?,
            store.put(&keys[1], &self.ubm)?,
            store.put(&keys[2], &self.tv)?,
            store.put(&keys[3], &self.backend.lda)?,
            store.put(&keys[4], &self.backend.whitener)?,
            store.put(&keys[5], &self.backend.plda)?,
        ];
        Ok(keys.into_iter().zip(digests).collect())
    }

    pub fn load(store: &Store, profile_id: &str) -> Result<Self> {
        let keys = model_keys(profile_id);
        let profile = store.get::<StoredProfile>(&keys[0])?.0;
        let ubm: GmmUbm = store.get(&keys[1])?;
        let tv: TotalVariability = store.get(&keys[2])?;
        let lda: LdaTransform = store.get(&keys[3])?;
        let whitener: Whitener = store.get(&keys[4])?;
        let plda: PldaModel = store.get(&keys[5])?;
        if tv.ubm_ref != crate::corpus::store::hex_digest(&ubm.to_bytes()) {
            return Err(Error::Corrupt(format!("{profile_id}: subspace was trained on a different UBM")));
        }
        Ok(TrainedSystem {
            backend: Backend {
                profile_id: profile.profile_id.clone(),
                lda,
                whitener,
                plda,
            },
            profile,
            ubm,
            tv,
        })
    }

    /// Embeddings of the given utterances, in input order.
    pub fn extract(&self, manifest: &Manifest, base: &Path, utts: &[&UtteranceRecord], workers: &Workers) -> Result<Vec<Embedding>> {
        let feats = utterance_features(manifest, base, utts, &self.profile.frontend, workers)?;
        workers
            .map_indexed(utts.len(), |i| {
                let stats = accumulate_bw(&feats[i], &self.ubm).map_err(|e| e.context(format!("utterance {}", utts[i].utterance_id)))?;
                embed(&stats, &self.tv, &utts[i].utterance_id)
            })
            .into_iter()
            .collect()
    }

    /// Extracts embeddings for every utterance outside this profile's
    /// training partition and stores them.
    pub fn extract_all(&self, store: &Store, manifest: &Manifest, base: &Path, workers: &Workers) -> Result<EmbeddingSet> {
        let utts: Vec<&UtteranceRecord> = manifest
            .utterances
            .iter()
            .filter(|u| u.partition.as_deref() != Some(self.profile.training_partition.as_str()))
            .collect();
        let items = self.extract(manifest, base, &utts, workers)?;
        let set = EmbeddingSet { items };
        store.put(&embeddings_key(&self.profile.profile_id), &set)?;
        Ok(set)
    }
}
