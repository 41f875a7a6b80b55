use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use mimicry_core::analysis::{
    domain_distributions, generate_listening_trials, mimicry_deltas, prosody_report, read_deltas_csv,
    render_table2, render_table2_markdown, summarize_categories, write_deltas_csv, write_distributions_dat,
    write_listening_trials_csv, write_summaries_csv, ProsodyChange, ProsodyCombination, ProsodyStats, ReportBundle,
};
use mimicry_core::attack::{
    build_attack_trials, read_assignments_csv, read_attack_scores_csv, read_rankings_csv, select_targets,
    transfer_report, write_assignments_csv, write_attack_scores_csv, write_attack_trials_csv, write_rankings_csv,
    LanguagePool, RankCategory, TargetAssignment,
};
use mimicry_core::backend::{
    compute_eer, read_scores_csv, read_trials_csv, write_scores_csv, write_trials_csv, Domain,
    TrialScore,
};
use mimicry_core::corpus::{load_manifest, read_audio, Manifest, Role, Session, Store, UtteranceRecord};
use mimicry_core::embedding::{write_embeddings_csv, EmbeddingSet};
use mimicry_core::experiment::{
    enroll_ids, rank_for_attacker, score_attack_trials, score_trials, select_test_utterances, verification_trials,
    EmbeddingIndex,
};
use mimicry_core::parallel::Workers;
use mimicry_core::prosody::{
    compare_formants, f0_summary, speaking_rate, track_f0, write_formant_diff_csv, FormantDiffRow, PairOutcome,
    PitchConfig,
};
use mimicry_core::synth::{add_attack_sessions, generate_corpus, AttackSessionRequest};
use mimicry_core::system::{embeddings_key, train_system, TrainedSystem};
use mimicry_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::tables::{read_pairs, read_selection, write_pairs, write_selection, ProsodyPair, SelectionRow};
use crate::{Cli, Command, Global};

pub const PROSODY_SCHEMA_VERSION: u32 = 1;

struct Ctx<'a> {
    global: &'a Global,
    cfg: RunConfig,
    workers: Workers,
}

impl Ctx<'_> {
    fn store(&self) -> Result<Store> {
        let root = self
            .global
            .store
            .clone()
            .or_else(|| self.cfg.paths.store.clone())
            .unwrap_or_else(|| PathBuf::from("store"));
        Store::open(root)
    }

    fn manifest_path(&self) -> Result<PathBuf> {
        self.global
            .manifest
            .clone()
            .or_else(|| self.cfg.paths.manifest.clone())
            .ok_or_else(|| Error::Config("no manifest given (--manifest or paths.manifest)".into()))
    }

    /// The manifest and the directory relative audio paths resolve against.
    fn manifest(&self) -> Result<(Manifest, PathBuf)> {
        let path = self.manifest_path()?;
        let m = load_manifest(&path)?;
        let base = self
            .cfg
            .paths
            .audio_root
            .clone()
            .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
        Ok((m, base))
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self
            .global
            .out
            .clone()
            .or_else(|| self.cfg.paths.output.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn system(&self, profile: &str) -> Result<TrainedSystem> {
        TrainedSystem::load(&self.store()?, profile).map_err(|e| e.context(format!("profile {profile} (run `train` first)")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::from(e).context(path.display().to_string()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn in_file(path: &Path, e: Error) -> Error {
    e.context(path.display().to_string())
}

/// Embeddings for `ids`, extracting and storing any the store lacks.
fn embeddings_for(
    ctx: &Ctx,
    system: &TrainedSystem,
    manifest: &Manifest,
    base: &Path,
    ids: &BTreeSet<String>,
) -> Result<EmbeddingSet> {
    let store = ctx.store()?;
    let key = embeddings_key(&system.profile.profile_id);
    let mut set = if store.contains(&key) { store.get::<EmbeddingSet>(&key)? } else { EmbeddingSet::default() };
    let have: BTreeSet<String> = set.items.iter().map(|e| e.source.clone()).collect();
    let missing: Vec<&UtteranceRecord> = ids
        .iter()
        .filter(|id| !have.contains(*id))
        .map(|id| manifest.utterance(id).ok_or_else(|| Error::UnknownId(id.clone())))
        .collect::<Result<_>>()?;
    if !missing.is_empty() {
        log::info!("extracting {} missing embeddings", missing.len());
        set.items.extend(system.extract(manifest, base, &missing, &ctx.workers)?);
        store.put(&key, &set)?;
    }
    Ok(set)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.global.config.as_deref())?;
    let workers = match cli.global.workers {
        Some(0) => return Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => Workers::new(n),
        None => Workers::default(),
    };
    let ctx = Ctx {
        global: &cli.global,
        cfg,
        workers,
    };
    match &cli.command {
        Command::SynthCorpus(a) => synth_corpus(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Rank(a) => rank(&ctx, a),
        Command::SelectUtterances(a) => select_utterances(&ctx, a),
        Command::Attack(a) => attack(&ctx, a),
        Command::TransferReport(a) => transfer(&ctx, a),
        Command::Prosody(a) => prosody(&ctx, a),
        Command::Trials(a) => trials(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Eer(a) => eer(&ctx, a),
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub speakers: Option<usize>,
    #[arg(long)]
    pub attackers: Option<usize>,
    /// Utterances per evaluation speaker.
    #[arg(long)]
    pub utterances: Option<usize>,
    /// Background speakers in each training partition.
    #[arg(long)]
    pub background_speakers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record zero-effort and mimicry sessions for the prompts of the test
    /// utterances in this selection file, into the existing corpus.
    #[arg(long)]
    pub attack_sessions: Option<PathBuf>,
}

fn synth_corpus(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    if let Some(sel_path) = &a.attack_sessions {
        let manifest_path = match (&ctx.global.manifest, &ctx.global.out, &ctx.cfg.paths.manifest) {
            (Some(m), ..) => m.clone(),
            (None, Some(out), _) => out.join("manifest.csv"),
            (None, None, Some(m)) => m.clone(),
            _ => return Err(Error::Config("give the corpus with --manifest or --out".into())),
        };
        let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = load_manifest(&manifest_path)?;
        let rows = read_selection(open(sel_path)?).map_err(|e| in_file(sel_path, e))?;
        let mut requests = Vec::new();
        for r in &rows {
            let prompts = r
                .test_utterances
                .iter()
                .map(|u| {
                    manifest
                        .utterance(u)
                        .ok_or_else(|| Error::UnknownId(u.clone()))
                        .map(|u| u.prompt_id.clone().unwrap_or_else(|| u.utterance_id.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            requests.push(AttackSessionRequest {
                attacker_id: r.assignment.attacker_id.clone(),
                target_id: r.assignment.target_id.clone(),
                prompt_ids: prompts,
            });
        }
        let before = manifest.utterances.len();
        let updated = add_attack_sessions(&dir, &manifest, &requests, &ctx.workers)?;
        println!("added {} attack utterances to {}", updated.utterances.len() - before, manifest_path.display());
        return Ok(());
    }
    let mut cfg = ctx.cfg.synth.clone();
    cfg.speakers = a.speakers.unwrap_or(cfg.speakers);
    cfg.attackers = a.attackers.unwrap_or(cfg.attackers);
    cfg.utterances_per_speaker = a.utterances.unwrap_or(cfg.utterances_per_speaker);
    cfg.background_speakers = a.background_speakers.unwrap_or(cfg.background_speakers);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let dir = ctx.out_dir()?;
    let m = generate_corpus(&cfg, &dir, &ctx.workers)?;
    println!(
        "wrote {} speakers, {} utterances to {}",
        m.speakers.len(),
        m.utterances.len(),
        dir.join("manifest.csv").display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// System profile id (`A` attacker side, `B` attacked).
    #[arg(long)]
    pub profile: String,
}

#[derive(Serialize)]
struct TrainReport<'a> {
    profile: &'a mimicry_core::embedding::SystemProfile,
    log: &'a mimicry_core::system::TrainingLog,
    artifacts: Vec<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_s: Option<f64>,
}

fn train(ctx: &Ctx, a: &ProfileArgs) -> Result<()> {
    let profile = ctx.cfg.profile(&a.profile, ctx.global.scale)?;
    let (manifest, base) = ctx.manifest()?;
    let start = Instant::now();
    let (system, log) = train_system(&profile, &manifest, &base, &ctx.workers)?;
    let artifacts = system.save(&ctx.store()?)?;
    for (k, d) in &artifacts {
        println!("{k} {d}");
    }
    for w in &log.warnings {
        log::warn!("{w}");
    }
    let report = TrainReport {
        profile: &profile,
        log: &log,
        artifacts,
        elapsed_s: (!ctx.global.deterministic).then(|| start.elapsed().as_secs_f64()),
    };
    write_json(&ctx.out_dir()?.join(format!("train_{}.json", profile.profile_id)), &report)
}

fn extract(ctx: &Ctx, a: &ProfileArgs) -> Result<()> {
    let system = ctx.system(&a.profile)?;
    let (manifest, base) = ctx.manifest()?;
    let set = system.extract_all(&ctx.store()?, &manifest, &base, &ctx.workers)?;
    let path = ctx.out_dir()?.join(format!("embeddings_{}.csv", a.profile));
    let mut w = create(&path)?;
    write_embeddings_csv(&mut w, &set.items)?;
    w.flush()?;
    println!("{} embeddings -> {}", set.items.len(), path.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub profile: String,
    /// Attacker to rank targets for (repeatable); all attackers when omitted.
    #[arg(long)]
    pub attacker: Vec<String>,
    /// Target filter: `all`, `gender=same`, `gender=female`, `nationality=FI`, comma-joined.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long, value_parser = parse_pool)]
    pub pool: Option<LanguagePool>,
}

fn parse_pool(s: &str) -> std::result::Result<LanguagePool, String> {
    s.parse()
}

fn rank(ctx: &Ctx, a: &RankArgs) -> Result<()> {
    let system = ctx.system(&a.profile)?;
    let (manifest, _) = ctx.manifest()?;
    let store = ctx.store()?;
    let set: EmbeddingSet = store
        .get(&embeddings_key(&a.profile))
        .map_err(|e| e.context(format!("profile {} embeddings (run `extract` first)", a.profile)))?;
    let index = EmbeddingIndex::new(&set);
    let filter = a.filter.clone().unwrap_or_else(|| ctx.cfg.attack.filter.clone());
    let pool = match a.pool {
        Some(p) => p,
        None => ctx.cfg.attack.language_pool.parse().map_err(Error::Config)?,
    };
    let attackers: Vec<String> = if a.attacker.is_empty() {
        manifest.speakers_with_role(Role::Attacker).map(|s| s.speaker_id.clone()).collect()
    } else {
        a.attacker.clone()
    };
    let mut rankings = Vec::new();
    let mut assignments = Vec::new();
    for att in &attackers {
        let ranked = rank_for_attacker(&system.backend, &manifest, &index, att, &filter, &ctx.workers)?;
        let picks = select_targets(&ranked, pool)?;
        println!(
            "{att}: {} targets, closest {} median {} furthest {}",
            ranked.entries.len(),
            picks[0].target_id,
            picks[1].target_id,
            picks[2].target_id
        );
        assignments.extend(picks);
        let gender = manifest.speaker(att).map(|s| s.gender.to_string()).unwrap_or_default();
        if let Some(t) = ctx.cfg.attack.common_targets.get(&gender) {
            if manifest.speaker(t).is_none() {
                return Err(Error::UnknownId(format!("common target {t}")));
            }
            assignments.push(TargetAssignment {
                attacker_id: att.clone(),
                rank_category: RankCategory::Common,
                target_id: t.clone(),
                language_pool: pool,
            });
        }
        rankings.push(ranked);
    }
    let out = ctx.out_dir()?;
    let mut w = create(&out.join(format!("ranking_{}.csv", a.profile)))?;
    write_rankings_csv(&mut w, &rankings)?;
    w.flush()?;
    let mut w = create(&out.join(format!("assignments_{}.csv", a.profile)))?;
    write_assignments_csv(&mut w, &assignments)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Profile whose scores order the utterances.
    #[arg(long, default_value = "A")]
    pub profile: String,
    #[arg(long)]
    pub assignments: PathBuf,
    /// Active speech to collect per assignment, in seconds.
    #[arg(long)]
    pub min_active_speech: Option<f64>,
}

fn select_utterances(ctx: &Ctx, a: &SelectArgs) -> Result<()> {
    let system = ctx.system(&a.profile)?;
    let (manifest, base) = ctx.manifest()?;
    let assignments = read_assignments_csv(open(&a.assignments)?).map_err(|e| in_file(&a.assignments, e))?;
    let min_s = a.min_active_speech.unwrap_or(ctx.cfg.attack.min_active_speech_s);
    let mut ids = BTreeSet::new();
    for asg in &assignments {
        for u in manifest.session_of(&asg.attacker_id, Session::Natural).chain(manifest.utterances_of(&asg.target_id)) {
            ids.insert(u.utterance_id.clone());
        }
    }
    let set = embeddings_for(ctx, &system, &manifest, &base, &ids)?;
    let index = EmbeddingIndex::new(&set);
    let mut rows = Vec::new();
    for asg in &assignments {
        let sel = select_test_utterances(&system.backend, &manifest, &base, &index, asg, min_s, &ctx.workers)?;
        for w in &sel.warnings {
            log::warn!("{} -> {}: {w}", asg.attacker_id, asg.target_id);
        }
        rows.push(SelectionRow {
            assignment: asg.clone(),
            test_utterances: sel.utterance_ids,
            active_speech_s: sel.active_speech_s,
        });
    }
    let path = ctx.out_dir()?.join("selection.csv");
    let mut w = create(&path)?;
    write_selection(&mut w, &rows)?;
    w.flush()?;
    println!("{} assignments -> {}", rows.len(), path.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Profile of the attacked system.
    #[arg(long, default_value = "B")]
    pub profile: String,
    /// Selection file from `select-utterances`.
    #[arg(long)]
    pub selection: PathBuf,
}

#[derive(Serialize)]
struct AttackSummary {
    profile_id: String,
    n_trials: usize,
    summaries: Vec<mimicry_core::analysis::CategorySummary>,
    deltas: Vec<mimicry_core::analysis::MimicryDelta>,
    unpaired_trials: usize,
}

fn attack(ctx: &Ctx, a: &AttackArgs) -> Result<()> {
    let rows = read_selection(open(&a.selection)?).map_err(|e| in_file(&a.selection, e))?;
    let out = ctx.out_dir()?;
    let scores = if rows.is_empty() {
        Vec::new()
    } else {
        let system = ctx.system(&a.profile)?;
        let (manifest, base) = ctx.manifest()?;
        let selections: Vec<(TargetAssignment, Vec<String>)> =
            rows.iter().map(|r| (r.assignment.clone(), r.test_utterances.clone())).collect();
        let trials = build_attack_trials(&selections, &manifest)?;
        let mut w = create(&out.join("attack_trials.csv"))?;
        write_attack_trials_csv(&mut w, &trials)?;
        w.flush()?;
        let ids: BTreeSet<String> = trials
            .iter()
            .flat_map(|t| t.enroll_utterance_ids.iter().cloned().chain([t.test_utterance_id.clone()]))
            .collect();
        let set = embeddings_for(ctx, &system, &manifest, &base, &ids)?;
        score_attack_trials(&system.backend, &EmbeddingIndex::new(&set), &trials, &ctx.workers)?
    };
    let mut w = create(&out.join(format!("attack_scores_{}.csv", a.profile)))?;
    write_attack_scores_csv(&mut w, &scores)?;
    w.flush()?;
    let deltas = mimicry_deltas(&scores, &a.profile);
    let summary = AttackSummary {
        profile_id: a.profile.clone(),
        n_trials: scores.len(),
        summaries: summarize_categories(&scores),
        deltas: deltas.deltas,
        unpaired_trials: deltas.unpaired,
    };
    for s in &summary.summaries {
        println!(
            "{:<9} {:<10} {:<12} {:>9.3} ± {:.3} (n={})",
            s.rank_category, s.language_pool, s.condition, s.mean_llr, s.ci_halfwidth, s.n_trials
        );
    }
    write_json(&out.join(format!("summary_{}.json", a.profile)), &summary)
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Ranking file produced with the attacker-side profile.
    #[arg(long)]
    pub attacker_ranking: PathBuf,
    /// Ranking file produced with the attacked profile.
    #[arg(long)]
    pub attacked_ranking: PathBuf,
    /// Attack scores from the attacked profile.
    #[arg(long)]
    pub scores: PathBuf,
}

fn transfer(ctx: &Ctx, a: &TransferArgs) -> Result<()> {
    let ra = read_rankings_csv(open(&a.attacker_ranking)?).map_err(|e| in_file(&a.attacker_ranking, e))?;
    let rb = read_rankings_csv(open(&a.attacked_ranking)?).map_err(|e| in_file(&a.attacked_ranking, e))?;
    let scores = read_attack_scores_csv(open(&a.scores)?).map_err(|e| in_file(&a.scores, e))?;
    let report = transfer_report(&ra, &rb, &scores)?;
    for at in &report.attackers {
        let flags: Vec<String> = at.preserved.iter().map(|(c, p)| format!("{c}={p}")).collect();
        println!("{} spearman {:.3} order preserved: {}", at.attacker_id, at.spearman, flags.join(" "));
    }
    println!("median spearman {:.3}", report.median_spearman);
    write_json(&ctx.out_dir()?.join("transfer.json"), &report)
}

#[derive(Debug, Args)]
pub struct ProsodyArgs {
    /// Pair list (attacker_id,target_id,condition,attacker_utterance,target_utterance).
    #[arg(long, conflicts_with = "selection")]
    pub pairs: Option<PathBuf>,
    /// Derive pairs from a selection file: zero-effort (natural voice) and
    /// mimicry recordings against the target utterance with the same prompt.
    #[arg(long)]
    pub selection: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceProsody {
    pub utterance_id: String,
    pub speaking_rate: Option<f64>,
    pub f0_median: Option<f64>,
    pub f0_std: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProsodyBundle {
    pub schema_version: u32,
    pub utterances: Vec<UtteranceProsody>,
    pub formant_pairs: Vec<FormantDiffRow>,
    pub combinations: Vec<ProsodyCombination>,
    pub changes: Vec<ProsodyChange>,
}

fn pairs_from_selection(manifest: &Manifest, rows: &[SelectionRow]) -> Vec<ProsodyPair> {
    let mut out = Vec::new();
    for r in rows {
        let (att, tgt) = (&r.assignment.attacker_id, &r.assignment.target_id);
        for t in &r.test_utterances {
            let Some(prompt) = manifest.utterance(t).and_then(|u| u.prompt_id.clone()) else { continue };
            for (session, condition) in [(Session::ZeroEffort, "natural"), (Session::Mimicry, "mimicry")] {
                for u in manifest.session_of(att, session).filter(|u| u.prompt_id.as_deref() == Some(prompt.as_str())) {
                    out.push(ProsodyPair {
                        attacker_id: att.clone(),
                        target_id: tgt.clone(),
                        condition: condition.into(),
                        attacker_utterance: u.utterance_id.clone(),
                        target_utterance: t.clone(),
                    });
                }
            }
        }
    }
    out
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn prosody(ctx: &Ctx, a: &ProsodyArgs) -> Result<()> {
    let (manifest, base) = ctx.manifest()?;
    let pairs = match (&a.pairs, &a.selection) {
        (Some(p), _) => read_pairs(open(p)?).map_err(|e| in_file(p, e))?,
        (None, Some(s)) => pairs_from_selection(&manifest, &read_selection(open(s)?).map_err(|e| in_file(s, e))?),
        (None, None) => return Err(Error::Config("give --pairs or --selection".into())),
    };
    let pitch_for = |utt: &str| -> Result<PitchConfig> {
        let u = manifest.utterance(utt).ok_or_else(|| Error::UnknownId(utt.to_string()))?;
        Ok(manifest.speaker(&u.speaker_id).map(|s| PitchConfig::for_gender(s.gender)).unwrap_or_else(PitchConfig::wide))
    };
    let load = |utt: &str| -> Result<mimicry_core::corpus::AudioBuffer> {
        let u = manifest.utterance(utt).ok_or_else(|| Error::UnknownId(utt.to_string()))?;
        read_audio(&manifest.audio_path(u, &base)).map_err(|e| e.context(format!("utterance {utt}")))
    };

    let ids: Vec<String> = pairs
        .iter()
        .flat_map(|p| [p.attacker_utterance.clone(), p.target_utterance.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let per_utt: Vec<UtteranceProsody> = ctx
        .workers
        .map(&ids, |id| -> Result<UtteranceProsody> {
            let audio = load(id)?;
            let cfg = pitch_for(id)?;
            let track = track_f0(&audio, &cfg)?;
            let f0 = f0_summary(&track).ok();
            let sr = speaking_rate(&audio, &cfg).ok();
            Ok(UtteranceProsody {
                utterance_id: id.clone(),
                speaking_rate: sr.map(|s| s.syllables_per_s),
                f0_median: f0.map(|f| f.0),
                f0_std: f0.map(|f| f.1),
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let by_id: BTreeMap<&str, &UtteranceProsody> = per_utt.iter().map(|u| (u.utterance_id.as_str(), u)).collect();

    let outcomes: Vec<PairOutcome> = ctx
        .workers
        .map(&pairs, |p| -> Result<PairOutcome> {
            let (xa, xb) = (load(&p.attacker_utterance)?, load(&p.target_utterance)?);
            let (pa, pb) = (pitch_for(&p.attacker_utterance)?, pitch_for(&p.target_utterance)?);
            Ok(compare_formants(&xa, &pa, &xb, &pb)?.0)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let rows: Vec<FormantDiffRow> = pairs
        .iter()
        .zip(&outcomes)
        .map(|(p, o)| {
            let (d, n, status) = match o {
                PairOutcome::Compared { d_hz, frames_used } => (Some(*d_hz), *frames_used, "ok".to_string()),
                PairOutcome::Misaligned { mean_distance } => (None, 0, format!("rejected: misaligned ({mean_distance:.3})")),
                PairOutcome::Unreliable => (None, 0, "rejected: no reliable frames".to_string()),
            };
            FormantDiffRow {
                attacker_id: p.attacker_id.clone(),
                target_id: p.target_id.clone(),
                condition: p.condition.clone(),
                d_hz: d,
                frames_used: n,
                status,
            }
        })
        .collect();

    let mut combos: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        combos.entry((p.attacker_id.clone(), p.target_id.clone())).or_default().push(i);
    }
    let stats_of = |utts: &BTreeSet<&str>| -> Option<ProsodyStats> {
        if utts.is_empty() {
            return None;
        }
        let items: Vec<&UtteranceProsody> = utts.iter().filter_map(|u| by_id.get(u).copied()).collect();
        Some(ProsodyStats {
            speaking_rate: mean(items.iter().filter_map(|u| u.speaking_rate))?,
            f0_median: mean(items.iter().filter_map(|u| u.f0_median)),
            f0_std: mean(items.iter().filter_map(|u| u.f0_std)),
        })
    };
    let mut combinations = Vec::new();
    for ((att, tgt), idx) in &combos {
        let side = |cond: &str| -> BTreeSet<&str> {
            idx.iter().filter(|&&i| pairs[i].condition == cond).map(|&i| pairs[i].attacker_utterance.as_str()).collect()
        };
        let targets: BTreeSet<&str> = idx.iter().map(|&i| pairs[i].target_utterance.as_str()).collect();
        let d = |cond: &str| mean(idx.iter().filter(|&&i| pairs[i].condition == cond).filter_map(|&i| rows[i].d_hz));
        combinations.push(ProsodyCombination {
            attacker_id: att.clone(),
            target_id: tgt.clone(),
            target: stats_of(&targets),
            natural: stats_of(&side("natural")),
            mimicry: stats_of(&side("mimicry")),
            formant_natural: d("natural"),
            formant_mimicry: d("mimicry"),
        });
    }
    let complete: Vec<ProsodyCombination> = combinations
        .iter()
        .filter(|c| {
            let ok = c.target.is_some() && c.natural.is_some() && c.mimicry.is_some();
            if !ok {
                log::warn!("{} -> {}: missing a condition; left out of the change report", c.attacker_id, c.target_id);
            }
            ok
        })
        .cloned()
        .collect();
    let changes = prosody_report(&complete)?;

    let out = ctx.out_dir()?;
    let mut w = create(&out.join("formant_diff.csv"))?;
    write_formant_diff_csv(&mut w, &rows)?;
    w.flush()?;
    let mut w = create(&out.join("prosody_pairs.csv"))?;
    write_pairs(&mut w, &pairs)?;
    w.flush()?;
    let mut w = csv::Writer::from_writer(create(&out.join("prosody_changes.csv"))?);
    w.write_record(["attacker_id", "target_id", "parameter", "natural_distance", "mimicry_distance", "improved"])?;
    for c in &changes {
        let f = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        w.write_record([
            c.attacker_id.clone(),
            c.target_id.clone(),
            c.parameter.to_string(),
            f(c.natural_distance),
            f(c.mimicry_distance),
            c.improved.to_string(),
        ])?;
    }
    w.flush()?;
    let rejected = rows.iter().filter(|r| r.d_hz.is_none()).count();
    println!("{} pairs compared, {} rejected, {} change rows", rows.len() - rejected, rejected, changes.len());
    write_json(
        &out.join("prosody.json"),
        &ProsodyBundle {
            schema_version: PROSODY_SCHEMA_VERSION,
            utterances: per_utt,
            formant_pairs: rows,
            combinations,
            changes,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrialKind {
    Listening,
    Verification,
}

#[derive(Debug, Args)]
pub struct TrialsArgs {
    #[arg(long, value_enum, default_value = "listening")]
    pub kind: TrialKind,
    /// Assignments file (listening trials).
    #[arg(long)]
    pub assignments: Option<PathBuf>,
    /// Trials per attacker-target combination and group.
    #[arg(long, default_value_t = 5)]
    pub per_combination: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn trials(ctx: &Ctx, a: &TrialsArgs) -> Result<()> {
    let (manifest, _) = ctx.manifest()?;
    let out = ctx.out_dir()?;
    match a.kind {
        TrialKind::Listening => {
            let path = a
                .assignments
                .as_ref()
                .ok_or_else(|| Error::Config("listening trials need --assignments".into()))?;
            let assignments = read_assignments_csv(open(path)?).map_err(|e| in_file(path, e))?;
            let list = generate_listening_trials(&manifest, &assignments, a.per_combination, a.seed)?;
            let mut w = create(&out.join("listening_trials.csv"))?;
            write_listening_trials_csv(&mut w, &list)?;
            w.flush()?;
            println!("{} listening trials", list.len());
        }
        TrialKind::Verification => {
            let list = verification_trials(&manifest);
            let mut w = create(&out.join("trials.csv"))?;
            write_trials_csv(&mut w, &list)?;
            w.flush()?;
            println!("{} verification trials", list.len());
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EerArgs {
    /// Existing score file; its EER is printed.
    #[arg(long, conflicts_with_all = ["trials", "profile"])]
    pub scores: Option<PathBuf>,
    /// Trial list to score with `--profile`.
    #[arg(long, requires = "profile")]
    pub trials: Option<PathBuf>,
    #[arg(long)]
    pub profile: Option<String>,
}

fn eer(ctx: &Ctx, a: &EerArgs) -> Result<()> {
    let scores: Vec<TrialScore> = if let Some(path) = &a.scores {
        read_scores_csv(open(path)?).map_err(|e| in_file(path, e))?
    } else {
        let path = a.trials.as_ref().ok_or_else(|| Error::Config("give --scores or --trials with --profile".into()))?;
        let profile = a.profile.as_deref().expect("clap requires --profile");
        let list = read_trials_csv(open(path)?).map_err(|e| in_file(path, e))?;
        let system = ctx.system(profile)?;
        let (manifest, base) = ctx.manifest()?;
        let mut ids = BTreeSet::new();
        for t in &list {
            ids.extend(enroll_ids(&manifest, &t.enroll_ref)?);
            ids.insert(t.test_utterance_id.clone());
        }
        let set = embeddings_for(ctx, &system, &manifest, &base, &ids)?;
        let scored = score_trials(&system.backend, &manifest, &EmbeddingIndex::new(&set), &list, &ctx.workers)?;
        let out = ctx.out_dir()?.join(format!("scores_{profile}.csv"));
        let mut w = create(&out)?;
        write_scores_csv(&mut w, &scored)?;
        w.flush()?;
        scored
    };
    let mut by_domain: BTreeMap<Domain, Vec<TrialScore>> = BTreeMap::new();
    for s in &scores {
        by_domain.entry(s.domain).or_default().push(s.clone());
    }
    for (d, s) in &by_domain {
        if let Ok(e) = compute_eer(s) {
            println!("{d}: EER {:.2}% at threshold {:.4} ({} trials)", 100.0 * e.eer, e.threshold, s.len());
        }
    }
    let e = compute_eer(&scores)?;
    println!("all: EER {:.2}% at threshold {:.4} ({} trials)", 100.0 * e.eer, e.threshold, scores.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Attack scores from the attacked system.
    #[arg(long)]
    pub attacked_scores: Option<PathBuf>,
    /// Attack scores from the attacker-side system.
    #[arg(long)]
    pub attacker_scores: Option<PathBuf>,
    /// Verification score files for the domain distributions (repeatable).
    #[arg(long)]
    pub trial_scores: Vec<PathBuf>,
    /// `prosody.json` from the prosody command.
    #[arg(long)]
    pub prosody: Option<PathBuf>,
    /// Precomputed score differences (system,rank_category,delta_mean,ci_halfwidth,n_pairs).
    #[arg(long)]
    pub deltas: Option<PathBuf>,
}

fn report(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    let mut bundle = ReportBundle::new();
    let mut any = false;
    for (path, system) in [(&a.attacker_scores, "attacker"), (&a.attacked_scores, "attacked")] {
        let Some(path) = path else { continue };
        any = true;
        let scores = read_attack_scores_csv(open(path)?).map_err(|e| in_file(path, e))?;
        if system == "attacked" {
            bundle.summaries = summarize_categories(&scores);
        }
        let d = mimicry_deltas(&scores, system);
        if d.unpaired > 0 {
            bundle.warnings.push(format!("{system}: {} attack trials without a content-matched pair", d.unpaired));
        }
        bundle.unpaired_trials += d.unpaired;
        bundle.deltas.extend(d.deltas);
    }
    if let Some(path) = &a.deltas {
        any = true;
        bundle.deltas.extend(read_deltas_csv(open(path)?).map_err(|e| in_file(path, e))?);
    }
    let mut trial_scores = Vec::new();
    for path in &a.trial_scores {
        any = true;
        let s = read_scores_csv(open(path)?).map_err(|e| in_file(path, e))?;
        if let Ok(e) = compute_eer(&s) {
            bundle.eer.push((path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(), e));
        }
        trial_scores.extend(s);
    }
    bundle.distributions = domain_distributions(&trial_scores);
    if let Some(path) = &a.prosody {
        any = true;
        let text = std::fs::read_to_string(path).map_err(|e| in_file(path, e.into()))?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| in_file(path, e.into()))?;
        let found = v.get("schema_version").and_then(|s| s.as_u64());
        if found != Some(PROSODY_SCHEMA_VERSION as u64) {
            return Err(Error::VersionMismatch {
                key: path.display().to_string(),
                expected: PROSODY_SCHEMA_VERSION.to_string(),
                found: found.map(|f| f.to_string()).unwrap_or_else(|| "none".into()),
            });
        }
        let p: ProsodyBundle = serde_json::from_value(v).map_err(|e| in_file(path, e.into()))?;
        bundle.prosody = p.changes;
    }
    if !any {
        bundle.warnings.push("no inputs given; the report is empty".into());
    }
    for w in &bundle.warnings {
        log::warn!("{w}");
    }
    let out = ctx.out_dir()?;
    std::fs::write(out.join("report.json"), bundle.to_json()?)?;
    let table = render_table2(&bundle.deltas);
    std::fs::write(out.join("table2.txt"), &table)?;
    std::fs::write(out.join("table2.md"), render_table2_markdown(&bundle.deltas))?;
    let mut w = create(&out.join("summaries.csv"))?;
    write_summaries_csv(&mut w, &bundle.summaries)?;
    w.flush()?;
    let mut w = create(&out.join("deltas.csv"))?;
    write_deltas_csv(&mut w, &bundle.deltas)?;
    w.flush()?;
    let mut w = create(&out.join("distributions.dat"))?;
    write_distributions_dat(&mut w, &bundle.distributions)?;
    w.flush()?;
    print!("{table}");
    Ok(())
}
