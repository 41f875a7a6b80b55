use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

string_enum!(TrialLabel { Target => "target", Nontarget => "nontarget", Unknown => "unknown" });
string_enum!(Domain {
    TargetDomain => "target_domain",
    AttackerDomain => "attacker_domain",
    CrossDomain => "cross_domain",
});

/// One verification trial. `enroll_ref` names either a speaker or a
/// `;`-separated list of enrollment utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub enroll_ref: String,
    pub test_utterance_id: String,
    pub label: TrialLabel,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub enroll_ref: String,
    pub test_utterance_id: String,
    pub label: TrialLabel,
    pub domain: Domain,
    pub llr: f64,
}

impl TrialScore {
    pub fn new(trial: &Trial, llr: f64) -> Result<Self> {
        if !llr.is_finite() {
            return Err(Error::Numeric(format!("non-finite score for {}", trial.test_utterance_id)));
        }
        Ok(TrialScore {
            enroll_ref: trial.enroll_ref.clone(),
            test_utterance_id: trial.test_utterance_id.clone(),
            label: trial.label,
            domain: trial.domain,
            llr,
        })
    }
}

fn invalid(row: usize, reason: impl Into<String>) -> Error {
    Error::InvalidRecord {
        id: format!("row {row}"),
        reason: reason.into(),
    }
}

/// Trial list CSV: `enroll_ref,test_utterance_id,label[,domain]`.
pub fn read_trials_csv(r: impl Read) -> Result<Vec<Trial>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 3 {
            return Err(invalid(i + 1, "expected enroll_ref,test_utterance_id,label"));
        }
        let label = rec[2].parse().map_err(|e: String| invalid(i + 1, e))?;
        let domain = match rec.get(3) {
            Some(d) if !d.trim().is_empty() => d.parse().map_err(|e: String| invalid(i + 1, e))?,
            _ => Domain::TargetDomain,
        };
        out.push(Trial {
            enroll_ref: rec[0].trim().to_string(),
            test_utterance_id: rec[1].trim().to_string(),
            label,
            domain,
        });
    }
    Ok(out)
}

pub fn write_trials_csv(w: impl Write, trials: &[Trial]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["enroll_ref", "test_utterance_id", "label", "domain"])?;
    for t in trials {
        out.write_record([&t.enroll_ref, &t.test_utterance_id, t.label.as_str(), t.domain.as_str()])?;
    }
    out.flush()?;
    Ok(())
}

/// Score CSV: trial columns followed by `llr`.
pub fn write_scores_csv(w: impl Write, scores: &[TrialScore]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["enroll_ref", "test_utterance_id", "label", "domain", "llr"])?;
    for s in scores {
        out.write_record([
            s.enroll_ref.as_str(),
            &s.test_utterance_id,
            s.label.as_str(),
            s.domain.as_str(),
            &format!("{:e}", s.llr),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_scores_csv(r: impl Read) -> Result<Vec<TrialScore>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(invalid(i + 1, "expected 5 columns"));
        }
        let llr: f64 = rec[4].trim().parse().map_err(|_| invalid(i + 1, "bad llr"))?;
        if !llr.is_finite() {
            return Err(invalid(i + 1, "non-finite llr"));
        }
        out.push(TrialScore {
            enroll_ref: rec[0].to_string(),
            test_utterance_id: rec[1].to_string(),
            label: rec[2].parse().map_err(|e: String| invalid(i + 1, e))?,
            domain: rec[3].parse().map_err(|e: String| invalid(i + 1, e))?,
            llr,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate over the labelled scores (unknown labels are ignored).
pub fn compute_eer(scores: &[TrialScore]) -> Result<Eer> {
    let tar: Vec<f64> = scores.iter().filter(|s| s.label == TrialLabel::Target).map(|s| s.llr).collect();
    let non: Vec<f64> = scores.iter().filter(|s| s.label == TrialLabel::Nontarget).map(|s| s.llr).collect();
    eer_from_scores(&tar, &non)
}

/// Equal error rate from raw target and non-target scores.
///
/// Trials are accepted when `score >= threshold`. The ROC is walked from the
/// highest threshold down with tied scores grouped into one step, and the
/// FAR = FRR crossing is interpolated linearly between neighbouring points.
pub fn eer_from_scores(targets: &[f64], nontargets: &[f64]) -> Result<Eer> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::Empty("EER needs target and non-target scores".into()));
    }
    if targets.iter().chain(nontargets).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let mut all: Vec<(f64, bool)> = targets
        .iter()
        .map(|&s| (s, true))
        .chain(nontargets.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let nt = targets.len() as f64;
    let nn = nontargets.len() as f64;
    // Counts of accepted non-targets and rejected targets.
    let (mut fa, mut fr) = (0usize, targets.len());
    let (mut far, mut frr) = (0.0, 1.0);
    let mut prev_threshold = f64::INFINITY;
    let mut i = 0;
    while i < all.len() {
        let thr = all[i].0;
        let (mut dt, mut dn) = (0usize, 0usize);
        while i < all.len() && all[i].0 == thr {
            if all[i].1 {
                dt += 1;
            } else {
                dn += 1;
            }
            i += 1;
        }
        fa += dn;
        fr -= dt;
        let next_far = fa as f64 / nn;
        let next_frr = fr as f64 / nt;
        if next_far >= next_frr {
            let gap0 = frr - far;
            let gap1 = next_frr - next_far;
            let alpha = if gap0 - gap1 > 0.0 { gap0 / (gap0 - gap1) } else { 1.0 };
            let eer = far + alpha * (next_far - far);
            let threshold = if prev_threshold.is_finite() {
                prev_threshold + alpha * (thr - prev_threshold)
            } else {
                thr
            };
            return Ok(Eer { eer, threshold });
        }
        far = next_far;
        frr = next_frr;
        prev_threshold = thr;
    }
    unreachable!("FAR reaches 1 and FRR reaches 0 at the lowest score")
}
