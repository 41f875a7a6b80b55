use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    write_wav_i16, AudioBuffer, Gender, Manifest, Role, Session, SpeakerRecord, UtteranceRecord,
};
use crate::parallel::Workers;
use crate::{Error, Result};

use super::voice::{render, Channel, ImitationSkill, Voice};

pub const VOICES_FILE: &str = "voices.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Evaluation speakers, attackers included.
    pub speakers: usize,
    pub attackers: usize,
    pub utterances_per_speaker: usize,
    /// Background speakers in each of the two training partitions.
    pub background_speakers: usize,
    pub background_utterances: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub sample_rate_hz: u32,
    /// Number of voice clusters speakers are drawn from.
    pub clusters: usize,
    /// Spread of cluster centres around the gender prototype.
    pub cluster_spread: f64,
    /// Spread of speakers around their cluster centre.
    pub speaker_spread: f64,
    pub female_fraction: f64,
    pub nationalities: Vec<String>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            speakers: 50,
            attackers: 5,
            utterances_per_speaker: 10,
            background_speakers: 120,
            background_utterances: 8,
            min_duration_s: 2.0,
            max_duration_s: 3.0,
            sample_rate_hz: 16000,
            clusters: 6,
            cluster_spread: 1.0,
            speaker_spread: 0.7,
            female_fraction: 0.4,
            nationalities: vec!["FI".into(), "SE".into(), "EE".into()],
            seed: 1,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.attackers == 0 || self.attackers >= self.speakers {
            return Err(Error::Config("need at least one attacker and one target".into()));
        }
        if self.utterances_per_speaker < 2 || self.background_utterances < 2 {
            return Err(Error::Config("need at least two utterances per speaker".into()));
        }
        if !(self.min_duration_s > 0.3 && self.min_duration_s <= self.max_duration_s) {
            return Err(Error::Config("bad utterance duration range".into()));
        }
        if self.clusters == 0 || self.nationalities.is_empty() || self.sample_rate_hz < 8000 {
            return Err(Error::Config("bad cluster, nationality or sample-rate settings".into()));
        }
        Ok(())
    }
}

/// Voice parameters behind a generated corpus, needed to record attack
/// sessions later.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VoiceBook {
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub voices: BTreeMap<String, Voice>,
    pub skills: BTreeMap<String, ImitationSkill>,
}

pub fn load_voices(dir: &Path) -> Result<VoiceBook> {
    let path = dir.join(VOICES_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(e).context(path.display().to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

fn stable_hash(parts: &[&str], seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

struct Job {
    utterance: UtteranceRecord,
    voice: Voice,
    studio: bool,
}

fn render_jobs(dir: &Path, jobs: &[Job], book: &VoiceBook, workers: &Workers) -> Result<Vec<UtteranceRecord>> {
    let results = workers.map(jobs, |job| -> Result<UtteranceRecord> {
        let u = &job.utterance;
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[&u.utterance_id], book.seed));
        let channel = if job.studio { Channel::studio(&mut rng) } else { Channel::wild(&mut rng) };
        let duration = rng.gen_range(book.min_duration_s..=book.max_duration_s);
        let prompt = u.prompt_id.as_deref().unwrap_or(&u.utterance_id);
        let prompt_seed = stable_hash(&[prompt], 0);
        let fs = book.sample_rate_hz as f64;
        let samples = render(&job.voice, prompt_seed, duration, &channel, fs, &mut rng);
        let audio = AudioBuffer::new(samples, book.sample_rate_hz)?;
        let path = dir.join(&u.audio_path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_wav_i16(&path, &audio)?;
        Ok(UtteranceRecord {
            duration_s: audio.duration_s(),
            ..u.clone()
        })
    });
    results.into_iter().collect()
}

fn utterance(id: String, speaker: &str, session: Session, prompt: String, partition: &str, fs: u32) -> UtteranceRecord {
    UtteranceRecord {
        audio_path: PathBuf::from("audio").join(speaker).join(format!("{id}.wav")),
        utterance_id: id,
        speaker_id: speaker.to_string(),
        session,
        duration_s: 1.0,
        sample_rate_hz: fs,
        prompt_id: Some(prompt),
        partition: Some(partition.to_string()),
        quality_ok: true,
    }
}

/// Writes WAV files, `manifest.csv` and the voice book under `dir`.
///
/// Evaluation speakers (partition `eval`) are attackers `A01..` with natural
/// sessions and targets `T001..` with in-the-wild sessions. Two disjoint
/// background pools (`dev_a`, `dev_b`) serve as training data.
pub fn generate_corpus(config: &SynthConfig, dir: &Path, workers: &Workers) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centres: Vec<Voice> = (0..config.clusters)
        .flat_map(|_| [Gender::Male, Gender::Female])
        .map(|g| Voice::sample(&Voice::prototype(g), config.cluster_spread, &mut rng))
        .collect();
    let mut book = VoiceBook {
        seed: config.seed,
        sample_rate_hz: config.sample_rate_hz,
        min_duration_s: config.min_duration_s,
        max_duration_s: config.max_duration_s,
        ..VoiceBook::default()
    };
    let mut speakers = Vec::new();
    let mut jobs = Vec::new();

    let mut add_speaker = |id: String, role: Role, partition: &str, n_utts: usize, rng: &mut ChaCha8Rng, book: &mut VoiceBook| {
        let gender = if rng.gen_bool(config.female_fraction) { Gender::Female } else { Gender::Male };
        let cluster = rng.gen_range(0..config.clusters);
        let centre = &centres[cluster * 2 + usize::from(gender == Gender::Female)];
        let voice = Voice::sample(centre, config.speaker_spread, rng);
        let nationality = config.nationalities[rng.gen_range(0..config.nationalities.len())].clone();
        speakers.push(SpeakerRecord {
            speaker_id: id.clone(),
            role,
            gender,
            nationality,
            display_name: None,
        });
        let session = if role == Role::Attacker { Session::Natural } else { Session::Wild };
        for k in 0..n_utts {
            let uid = format!("{id}_{k:02}");
            jobs.push(Job {
                utterance: utterance(uid.clone(), &id, session, uid, partition, config.sample_rate_hz),
                voice: voice.clone(),
                studio: role == Role::Attacker,
            });
        }
        if role == Role::Attacker {
            book.skills.insert(id.clone(), ImitationSkill::sample(rng));
        }
        book.voices.insert(id, voice);
    };

    for a in 0..config.attackers {
        add_speaker(format!("A{:02}", a + 1), Role::Attacker, "eval", config.utterances_per_speaker, &mut rng, &mut book);
    }
    for t in 0..config.speakers - config.attackers {
        add_speaker(format!("T{:03}", t + 1), Role::Target, "eval", config.utterances_per_speaker, &mut rng, &mut book);
    }
    for (prefix, partition) in [("BA", "dev_a"), ("BB", "dev_b")] {
        for b in 0..config.background_speakers {
            add_speaker(format!("{prefix}{:03}", b + 1), Role::Target, partition, config.background_utterances, &mut rng, &mut book);
        }
    }

    let utterances = render_jobs(dir, &jobs, &book, workers)?;
    let manifest = Manifest::new(speakers, utterances)?;
    manifest.write_csv(&dir.join("manifest.csv"))?;
    std::fs::write(dir.join(VOICES_FILE), serde_json::to_string_pretty(&book)?)?;
    Ok(manifest)
}

/// One attacker recording zero-effort and mimicry versions of target prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSessionRequest {
    pub attacker_id: String,
    pub target_id: String,
    pub prompt_ids: Vec<String>,
}

/// Records zero-effort (own voice) and mimicry (voice shifted towards the
/// target by the attacker's imitation skill) utterances for each requested
/// prompt, appends them to the manifest and rewrites `manifest.csv`.
pub fn add_attack_sessions(
    dir: &Path,
    manifest: &Manifest,
    requests: &[AttackSessionRequest],
    workers: &Workers,
) -> Result<Manifest> {
    let book = load_voices(dir)?;
    let mut jobs = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for r in requests {
        let attacker = book.voices.get(&r.attacker_id).ok_or_else(|| Error::UnknownId(r.attacker_id.clone()))?;
        let skill = book.skills.get(&r.attacker_id).ok_or_else(|| Error::UnknownId(r.attacker_id.clone()))?;
        let target = book.voices.get(&r.target_id).ok_or_else(|| Error::UnknownId(r.target_id.clone()))?;
        let mimic = attacker.imitate(target, skill);
        for p in &r.prompt_ids {
            for (tag, session, voice) in [("ze", Session::ZeroEffort, attacker.clone()), ("mi", Session::Mimicry, mimic.clone())] {
                let id = format!("{}_{tag}_{}_{}", r.attacker_id, r.target_id, p);
                if manifest.utterance(&id).is_some() || !seen.insert(id.clone()) {
                    continue;
                }
                jobs.push(Job {
                    utterance: utterance(id, &r.attacker_id, session, p.clone(), "eval", book.sample_rate_hz),
                    voice,
                    studio: true,
                });
            }
        }
    }
    let mut utterances = manifest.utterances.clone();
    utterances.extend(render_jobs(dir, &jobs, &book, workers)?);
    let updated = Manifest::new(manifest.speakers.clone(), utterances)?;
    updated.write_csv(&dir.join("manifest.csv"))?;
    Ok(updated)
}
