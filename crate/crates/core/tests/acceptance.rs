//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use mimicry_core::analysis::{mean_ci, read_deltas_csv, render_table2};
use mimicry_core::attack::{
    build_attack_trials, select_targets, transfer_report, Condition, LanguagePool, RankedTargets,
};
use mimicry_core::backend::{compute_eer, eer_from_scores, PldaModel};
use mimicry_core::corpus::{AudioBuffer, Manifest, Role, Store, UtteranceRecord};
use mimicry_core::embedding::{accumulate_bw, train_ubm, EmbeddingSet, SystemProfile, UbmTrainConfig};
use mimicry_core::experiment::{
    rank_for_attacker, score_attack_trials, score_trials, select_test_utterances, verification_trials,
    EmbeddingIndex,
};
use mimicry_core::frontend::FeatureMatrix;
use mimicry_core::linalg::LN_2PI;
use mimicry_core::parallel::Workers;
use mimicry_core::prosody::{
    cosine_distance, dtw_align, extract_formants, f0_summary, formant_difference, speaking_rate, track_f0,
    AlignmentPath, FormantTrack, PitchConfig,
};
use mimicry_core::synth::{
    add_attack_sessions, generate_corpus, resonant_pulse_train, vowel_bursts, AttackSessionRequest, SynthConfig,
};
use mimicry_core::system::{train_system, TrainedSystem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// End-to-end experiment shared by criteria 1 and 2.

struct Experiment {
    eer: Vec<(String, f64)>,
    elapsed: Duration,
    transfer: Result<(usize, usize, f64), String>,
}

fn is_eval(u: &UtteranceRecord) -> bool {
    u.partition.as_deref().is_none_or(|p| !p.starts_with("dev"))
}

fn extract_eval(system: &TrainedSystem, m: &Manifest, dir: &Path, workers: &Workers) -> EmbeddingSet {
    let utts: Vec<&UtteranceRecord> = m.utterances.iter().filter(|u| is_eval(u)).collect();
    EmbeddingSet {
        items: system.extract(m, dir, &utts, workers).expect("extraction"),
    }
}

fn run_experiment() -> Experiment {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();
    let workers = Workers::default();
    let start = Instant::now();
    let mut manifest = generate_corpus(&SynthConfig::default(), dir, &workers).expect("corpus");
    let trials = verification_trials(&manifest);
    let mut systems = Vec::new();
    let mut eer = Vec::new();
    for profile in [SystemProfile::attacker_desk(), SystemProfile::attacked_desk()] {
        let (system, _) = train_system(&profile, &manifest, dir, &workers).expect("training");
        let set = extract_eval(&system, &manifest, dir, &workers);
        let scores = score_trials(&system.backend, &manifest, &EmbeddingIndex::new(&set), &trials, &workers)
            .expect("scoring");
        eer.push((profile.profile_id.clone(), compute_eer(&scores).expect("eer").eer));
        systems.push((system, set));
    }
    let elapsed = start.elapsed();
    let transfer = attack_and_transfer(&mut manifest, dir, &systems, &workers);
    Experiment { eer, elapsed, transfer }
}

/// Ranks targets with both systems, attacks the attacker-side picks and
/// scores the attacks on the attacked system.
fn attack_and_transfer(
    manifest: &mut Manifest,
    dir: &Path,
    systems: &[(TrainedSystem, EmbeddingSet)],
    workers: &Workers,
) -> Result<(usize, usize, f64), String> {
    let e = |e: mimicry_core::Error| e.to_string();
    let [(a, set_a), (b, set_b)] = systems else { unreachable!() };
    let (ia, ib) = (EmbeddingIndex::new(set_a), EmbeddingIndex::new(set_b));
    let attackers: Vec<String> = manifest.speakers_with_role(Role::Attacker).map(|s| s.speaker_id.clone()).collect();
    let mut ranked_a: Vec<RankedTargets> = Vec::new();
    let mut ranked_b: Vec<RankedTargets> = Vec::new();
    let mut selections = Vec::new();
    let mut requests = Vec::new();
    for att in &attackers {
        let ra = rank_for_attacker(&a.backend, manifest, &ia, att, "gender=same", workers).map_err(e)?;
        ranked_b.push(rank_for_attacker(&b.backend, manifest, &ib, att, "gender=same", workers).map_err(e)?);
        for asg in select_targets(&ra, LanguagePool::Native).map_err(e)? {
            let sel = select_test_utterances(&a.backend, manifest, dir, &ia, &asg, 10.0, workers).map_err(e)?;
            let prompt_ids = sel
                .utterance_ids
                .iter()
                .map(|u| manifest.utterance(u).and_then(|u| u.prompt_id.clone()).unwrap_or_default())
                .collect();
            requests.push(AttackSessionRequest {
                attacker_id: att.clone(),
                target_id: asg.target_id.clone(),
                prompt_ids,
            });
            selections.push((asg, sel.utterance_ids));
        }
        ranked_a.push(ra);
    }
    *manifest = add_attack_sessions(dir, manifest, &requests, workers).map_err(e)?;
    let new: Vec<&UtteranceRecord> =
        manifest.utterances.iter().filter(|u| is_eval(u) && set_b.get(&u.utterance_id).is_none()).collect();
    let mut set = set_b.clone();
    set.items.extend(b.extract(manifest, dir, &new, workers).map_err(e)?);
    let trials = build_attack_trials(&selections, manifest).map_err(e)?;
    let scores = score_attack_trials(&b.backend, &EmbeddingIndex::new(&set), &trials, workers).map_err(e)?;
    let report = transfer_report(&ranked_a, &ranked_b, &scores).map_err(e)?;
    let preserved = report.preserved_count.get(&Condition::ZeroEffort).copied().unwrap_or(0);
    Ok((preserved, report.attackers.len(), report.median_spearman))
}

fn c1_pipeline(x: &Experiment) -> Outcome {
    let ok = x.eer.iter().all(|(_, e)| *e < 0.10) && x.elapsed < Duration::from_secs(600);
    let rates: Vec<String> = x.eer.iter().map(|(p, e)| format!("{p} {:.2}%", 100.0 * e)).collect();
    check(ok, format!("EER {}; corpus+training+scoring {:.0} s", rates.join(", "), x.elapsed.as_secs_f64()))
}

fn c2_transfer(x: &Experiment) -> Outcome {
    let (preserved, n, rho) = x.transfer.clone()?;
    check(
        preserved * 5 >= 4 * n && rho > 0.5,
        format!("closest > median > furthest for {preserved}/{n} attackers; median Spearman {rho:.3}"),
    )
}

// PLDA against brute-force marginal likelihood integration.

fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let nodes = eig.eigenvalues.iter().copied().collect();
    let weights = (0..n).map(|k| std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)).collect();
    (nodes, weights)
}

/// log p(e,t | same) - log p(e|.) - log p(t|.), integrating the speaker
/// variable y ~ N(mean, B) with x | y ~ N(y, W) on a tensor Gauss-Hermite grid.
fn quadrature_llr(mean: &DVector<f64>, b: &DMatrix<f64>, w: &DMatrix<f64>, e: &DVector<f64>, t: &DVector<f64>, n: usize) -> f64 {
    let dim = mean.len();
    let (nodes, weights) = gauss_hermite(n);
    let l = b.clone().cholesky().unwrap().l();
    let w_inv = w.clone().try_inverse().unwrap();
    let log_norm = -0.5 * (dim as f64 * LN_2PI + w.determinant().ln());
    let density = |x: &DVector<f64>, y: &DVector<f64>| {
        let d = x - y;
        (log_norm - 0.5 * d.dot(&(&w_inv * &d))).exp()
    };
    let scale = std::f64::consts::PI.powf(-(dim as f64) / 2.0);
    let (mut same, mut pe, mut pt) = (0.0, 0.0, 0.0);
    let mut idx = vec![0usize; dim];
    loop {
        let z = DVector::from_fn(dim, |i, _| nodes[idx[i]] * 2f64.sqrt());
        let wt: f64 = idx.iter().map(|&k| weights[k]).product::<f64>() * scale;
        let y = mean + &l * z;
        let (le, lt) = (density(e, &y), density(t, &y));
        same += wt * le * lt;
        pe += wt * le;
        pt += wt * lt;
        let mut k = 0;
        loop {
            if k == dim {
                return same.ln() - pe.ln() - pt.ln();
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Refines the grid until two successive estimates agree to 1e-9.
fn converged_llr(mean: &DVector<f64>, b: &DMatrix<f64>, w: &DMatrix<f64>, e: &DVector<f64>, t: &DVector<f64>) -> f64 {
    let step = if mean.len() == 1 { 40 } else { 20 };
    let mut n = 2 * step;
    let mut prev = quadrature_llr(mean, b, w, e, t, n);
    loop {
        n += step;
        let next = quadrature_llr(mean, b, w, e, t, n);
        if (next - prev).abs() < 1e-9 || n >= 12 * step {
            return next;
        }
        prev = next;
    }
}

fn random_spd(rng: &mut ChaCha8Rng, dim: usize, floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| 0.4 * randn(rng));
    &a * a.transpose() + DMatrix::identity(dim, dim) * floor
}

fn c3_plda() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let dim = if trial < 50 { 1 } else { 3 };
        let mean = DVector::from_fn(dim, |_, _| 0.3 * randn(&mut rng));
        let b = random_spd(&mut rng, dim, 0.5);
        let w = random_spd(&mut rng, dim, 0.6);
        let model = PldaModel::two_cov(mean.clone(), b.clone(), w.clone()).map_err(|e| e.to_string())?;
        let e = DVector::from_fn(dim, |_, _| randn(&mut rng));
        let t = DVector::from_fn(dim, |_, _| randn(&mut rng));
        let oracle = converged_llr(&mean, &b, &w, &e, &t);
        let d = (model.llr(&e, &t).map_err(|e| e.to_string())? - oracle).abs();
        worst = worst.max(d);
    }
    check(worst <= 1e-6, format!("100 trials (1-D and 3-D), max |LLR - quadrature| = {worst:.2e}"))
}

// EER against an exhaustive threshold sweep.

fn sweep_eer(tar: &[f64], non: &[f64]) -> f64 {
    let mut cuts: Vec<f64> = tar.iter().chain(non).copied().collect();
    cuts.push(f64::INFINITY);
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup();
    let rates = |thr: f64| {
        let far = non.iter().filter(|&&s| s >= thr).count() as f64 / non.len() as f64;
        let frr = tar.iter().filter(|&&s| s < thr).count() as f64 / tar.len() as f64;
        (far, frr)
    };
    for pair in cuts.windows(2) {
        let (a0, r0) = rates(pair[0]);
        let (a1, r1) = rates(pair[1]);
        if a1 >= r1 {
            let alpha = if (r0 - a0) - (r1 - a1) > 0.0 { (r0 - a0) / ((r0 - a0) - (r1 - a1)) } else { 1.0 };
            return a0 + alpha * (a1 - a0);
        }
    }
    unreachable!("the last cut accepts everything")
}

fn c4_eer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..50 {
        let nt = rng.gen_range(1..25);
        let nn = rng.gen_range(1..25);
        let tar: Vec<f64> = (0..nt).map(|_| (rng.gen_range(0.0..6.0f64) * 2.0).round() / 2.0 + 0.5).collect();
        let non: Vec<f64> = (0..nn).map(|_| (rng.gen_range(0.0..6.0f64) * 2.0).round() / 2.0).collect();
        let got = eer_from_scores(&tar, &non).map_err(|e| e.to_string())?.eer;
        if got != sweep_eer(&tar, &non) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches}/50 score sets differ from the exhaustive sweep"))
}

// DTW against exhaustive path enumeration.

fn enumerate_min(cost: &[f64], m: usize, i: usize, j: usize, n: usize) -> f64 {
    let here = cost[i * m + j];
    if i == n - 1 && j == m - 1 {
        return here;
    }
    let mut best = f64::INFINITY;
    for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
        if i + di < n && j + dj < m {
            best = best.min(enumerate_min(cost, m, i + di, j + dj, n));
        }
    }
    here + best
}

fn c5_dtw() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (n, m, dim) = (rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=4));
        let rows = |rng: &mut ChaCha8Rng, k: usize| -> Vec<Vec<f64>> {
            (0..k).map(|_| (0..dim).map(|_| randn(rng)).collect()).collect()
        };
        let (ra, rb) = (rows(&mut rng, n), rows(&mut rng, m));
        let cost: Vec<f64> = ra.iter().flat_map(|x| rb.iter().map(|y| cosine_distance(x, y))).collect();
        let oracle = enumerate_min(&cost, m, 0, 0, n);
        let a = FeatureMatrix::from_rows(&ra).map_err(|e| e.to_string())?;
        let b = FeatureMatrix::from_rows(&rb).map_err(|e| e.to_string())?;
        let path: AlignmentPath = dtw_align(&a, &b).map_err(|e| e.to_string())?;
        let path_cost: f64 = path.pairs.iter().map(|&(i, j)| cost[i * m + j]).sum();
        worst = worst.max((path.cost - oracle).abs()).max((path_cost - oracle).abs());
    }
    check(worst < 1e-12, format!("200 instances up to 6x6, max |cost - exhaustive| = {worst:.1e}"))
}

fn c6_f0() -> Outcome {
    let fs = 16000;
    let mut errs = Vec::new();
    for f0 in [110.0, 150.0, 220.0] {
        let x = resonant_pulse_train(f0, &[(600.0, 80.0), (1400.0, 100.0), (2500.0, 150.0)], fs as f64, 1.0);
        let track = track_f0(&AudioBuffer::new(x, fs).unwrap(), &PitchConfig::wide()).map_err(|e| e.to_string())?;
        let (median, _) = f0_summary(&track).map_err(|e| e.to_string())?;
        errs.push((median - f0).abs() / f0);
    }
    let silence = track_f0(&AudioBuffer::new(vec![0.0; fs as usize], fs).unwrap(), &PitchConfig::wide())
        .map_err(|e| e.to_string())?;
    let voiced = silence.voiced().count();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    check(
        worst <= 0.02 && voiced == 0 && silence.n_frames() > 0,
        format!("max relative F0 error {:.3}% at 110/150/220 Hz; {voiced} voiced silence frames", 100.0 * worst),
    )
}

fn c7_rate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fs = 16000.0;
    let mut hits = 0;
    for _ in 0..50 {
        let k = rng.gen_range(5..=15);
        let on = rng.gen_range(0.08..0.16);
        let off = rng.gen_range(0.06..0.16);
        let f0 = rng.gen_range(100.0..220.0);
        let x = vowel_bursts(k, on, off, 0.3, f0, fs);
        let rate = speaking_rate(&AudioBuffer::new(x, fs as u32).unwrap(), &PitchConfig::wide()).map_err(|e| e.to_string())?;
        if rate.nuclei.abs_diff(k) <= 1 {
            hits += 1;
        }
    }
    check(hits >= 45, format!("{hits}/50 burst signals counted within one nucleus"))
}

fn track(freqs: Vec<[f64; 3]>, reliable: Vec<bool>) -> FormantTrack {
    FormantTrack {
        frame_times_s: (0..freqs.len()).map(|i| i as f64 * 0.01).collect(),
        freqs,
        reliable,
    }
}

fn c8_formants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 40;
    let random_track = |rng: &mut ChaCha8Rng| {
        track(
            (0..n).map(|_| [rng.gen_range(300.0..900.0), rng.gen_range(900.0..2200.0), rng.gen_range(2200.0..3200.0)]).collect(),
            (0..n).map(|_| rng.gen_bool(0.8)).collect(),
        )
    };
    let (a, b) = (random_track(&mut rng), random_track(&mut rng));
    let diag = AlignmentPath {
        pairs: (0..n).map(|i| (i, i)).collect(),
        cost: 0.0,
    };
    let self_d = formant_difference(&a, &a, &diag).map_err(|e| e.to_string())?.d_hz;
    let skew = AlignmentPath {
        pairs: (0..n).map(|i| (i, (i * 7) % n)).collect(),
        cost: 0.0,
    };
    let flipped = AlignmentPath {
        pairs: skew.pairs.iter().map(|&(i, j)| (j, i)).collect(),
        cost: 0.0,
    };
    let ab = formant_difference(&a, &b, &skew).map_err(|e| e.to_string())?.d_hz;
    let ba = formant_difference(&b, &a, &flipped).map_err(|e| e.to_string())?.d_hz;
    let mut shifted = a.clone();
    shifted.freqs.iter_mut().for_each(|f| f[0] += 30.0);
    let plus30 = formant_difference(&a, &shifted, &diag).map_err(|e| e.to_string())?.d_hz;

    let fs = 16000;
    let x = resonant_pulse_train(120.0, &[(500.0, 60.0), (1500.0, 90.0), (2500.0, 120.0)], fs as f64, 1.0);
    let est = extract_formants(&AudioBuffer::new(x, fs).unwrap(), &PitchConfig::male()).map_err(|e| e.to_string())?;
    let mut medians = [0.0; 3];
    for (k, truth) in [500.0, 1500.0, 2500.0].into_iter().enumerate() {
        let mut err: Vec<f64> =
            (0..est.n_frames()).filter(|&i| est.reliable[i]).map(|i| (est.freqs[i][k] - truth).abs()).collect();
        if err.is_empty() {
            return Err("no reliable formant frames".into());
        }
        err.sort_by(f64::total_cmp);
        medians[k] = err[err.len() / 2];
    }
    check(
        self_d == 0.0 && (ab - ba).abs() <= 1e-12 && (plus30 - 10.0).abs() <= 1e-9 && medians.iter().all(|&m| m <= 50.0),
        format!(
            "d(a,a) = {self_d}, |d(a,b) - d(b,a)| = {:.1e}, +30 Hz F1 gives {plus30:.12} Hz, median errors {:.1}/{:.1}/{:.1} Hz",
            (ab - ba).abs(),
            medians[0],
            medians[1],
            medians[2]
        ),
    )
}

fn c9_map_reduce() -> Outcome {
    let e = |e: mimicry_core::Error| e.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dim = 4;
    let feats: Vec<FeatureMatrix> = (0..6)
        .map(|s| {
            let rows: Vec<Vec<f64>> =
                (0..300).map(|_| (0..dim).map(|d| randn(&mut rng) + ((s + d) % 3) as f64).collect()).collect();
            FeatureMatrix::from_rows(&rows).unwrap()
        })
        .collect();
    let (ubm, _) = train_ubm(&feats, &UbmTrainConfig::new(8, 3), &Workers::new(2)).map_err(e)?;
    let whole = accumulate_bw(&feats[0], &ubm).map_err(e)?;
    let mut merged = accumulate_bw(&feats[0].slice(0, 70), &ubm).map_err(e)?;
    for (s, t) in [(70, 151), (151, 300)] {
        merged.merge(&accumulate_bw(&feats[0].slice(s, t), &ubm).map_err(e)?).map_err(e)?;
    }
    let gap = whole.n.iter().zip(&merged.n).chain(whole.f.iter().zip(&merged.f)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    // Train and extract on a small corpus with one and with four workers.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = SynthConfig {
        speakers: 10,
        attackers: 2,
        background_speakers: 24,
        seed: 9,
        ..SynthConfig::default()
    };
    let corpus = tmp.path().join("corpus");
    let m = generate_corpus(&cfg, &corpus, &Workers::new(3)).map_err(e)?;
    let mut digests = Vec::new();
    for threads in [1, 4] {
        let w = Workers::new(threads);
        let (system, _) = train_system(&SystemProfile::attacked_desk(), &m, &corpus, &w).map_err(e)?;
        let store = Store::open(tmp.path().join(format!("store{threads}"))).map_err(e)?;
        let mut keys: Vec<String> = system.save(&store).map_err(e)?.into_iter().map(|(k, _)| k).collect();
        system.extract_all(&store, &m, &corpus, &w).map_err(e)?;
        keys.push(mimicry_core::system::embeddings_key(&system.profile.profile_id));
        let sums: Vec<Option<String>> = keys.iter().map(|k| store.digest(k)).collect::<Result<_, _>>().map_err(e)?;
        digests.push(sums);
    }
    let identical = digests[0] == digests[1] && digests[0].iter().all(Option::is_some);
    check(
        gap <= 1e-9 && identical,
        format!(
            "sharded vs whole statistics max gap {gap:.1e}; {} stored artifacts {} for 1 and 4 workers",
            digests[0].len(),
            if identical { "byte-identical" } else { "DIFFER" }
        ),
    )
}

const TABLE2_FIXTURE: &str = "system,rank_category,delta_mean,ci_halfwidth,n_pairs
attacker,closest,-9.7,5.2,0
attacker,median,2.2,4.3,0
attacker,furthest,5.9,7.1,0
attacker,common,-7.2,4.3,0
attacked,closest,-5.2,3.9,0
attacked,median,9.2,3.3,0
attacked,furthest,6.1,4.3,0
attacked,common,-0.5,3.8,0
";

const TABLE2_EXPECTED: &str = "\
ASV system             Closest        Median      Furthest        Common
Attacker's ASV      -9.7 ± 5.2     2.2 ± 4.3     5.9 ± 7.1    -7.2 ± 4.3
Attacked ASV        -5.2 ± 3.9     9.2 ± 3.3     6.1 ± 4.3    -0.5 ± 3.8
";

fn c10_report() -> Outcome {
    let deltas = read_deltas_csv(TABLE2_FIXTURE.as_bytes()).map_err(|e| e.to_string())?;
    let table = render_table2(&deltas);
    let (m, ci) = mean_ci(&[0.0, 2.0]).map_err(|e| e.to_string())?;
    check(
        table == TABLE2_EXPECTED && m == 1.0 && (ci - 1.3859).abs() <= 1e-4,
        if table == TABLE2_EXPECTED {
            format!("Table 2 fixture renders exactly; mean_ci(0, 2) = ({m}, {ci:.4})")
        } else {
            format!("rendered table differs:\n{table}")
        },
    )
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(d) => println!("PASS  {name:<28} {d} [{secs:.1} s]"),
        Err(d) => println!("FAIL  {name:<28} {d} [{secs:.1} s]"),
    }
    outcome.is_ok()
}

fn main() {
    let quick = std::env::args().any(|a| a == "--quick");
    let mut ok = true;
    ok &= run("3 PLDA oracle", c3_plda);
    ok &= run("4 EER oracle", c4_eer);
    ok &= run("5 DTW oracle", c5_dtw);
    ok &= run("6 F0 accuracy", c6_f0);
    ok &= run("7 speaking rate", c7_rate);
    ok &= run("8 formant metric", c8_formants);
    ok &= run("9 map-reduce determinism", c9_map_reduce);
    ok &= run("10 report fidelity", c10_report);
    if !quick {
        let x = catch_unwind(run_experiment).map_err(|_| "experiment panicked".to_string());
        ok &= run("1 end-to-end pipeline", || x.as_ref().map_err(Clone::clone).and_then(c1_pipeline));
        ok &= run("2 rank transfer", || x.as_ref().map_err(Clone::clone).and_then(c2_transfer));
    }
    if !ok {
        std::process::exit(1);
    }
}
