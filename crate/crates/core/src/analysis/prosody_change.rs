use serde::{Deserialize, Serialize};

use crate::{Error, Result};

string_enum!(ProsodyParameter {
    SpeakingRate => "speaking_rate",
    F0Median => "f0_median",
    F0Std => "f0_std",
    FormantD => "formant_d",
});

/// Per-speaker, per-condition prosodic statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProsodyStats {
    pub speaking_rate: f64,
    /// `None` when nothing was voiced.
    pub f0_median: Option<f64>,
    pub f0_std: Option<f64>,
}

/// Everything measured for one attacker-target combination. The formant
/// fields are distances to the target already; `None` marks a rejected pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodyCombination {
    pub attacker_id: String,
    pub target_id: String,
    pub target: Option<ProsodyStats>,
    pub natural: Option<ProsodyStats>,
    pub mimicry: Option<ProsodyStats>,
    pub formant_natural: Option<f64>,
    pub formant_mimicry: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodyChange {
    pub attacker_id: String,
    pub target_id: String,
    pub parameter: ProsodyParameter,
    pub natural_distance: Option<f64>,
    pub mimicry_distance: Option<f64>,
    /// Mimicry strictly closer to the target than the natural voice.
    pub improved: bool,
}

/// Natural-to-target and mimicry-to-target distance for every parameter.
pub fn prosody_report(combinations: &[ProsodyCombination]) -> Result<Vec<ProsodyChange>> {
    let mut out = Vec::new();
    for c in combinations {
        let missing = |what: &str| Error::MissingSession {
            speaker: if what == "target" { c.target_id.clone() } else { c.attacker_id.clone() },
            session: format!("{what} statistics"),
        };
        let target = c.target.ok_or_else(|| missing("target"))?;
        let natural = c.natural.ok_or_else(|| missing("natural"))?;
        let mimicry = c.mimicry.ok_or_else(|| missing("mimicry"))?;
        let dist = |x: Option<f64>, t: Option<f64>| Some((x? - t?).abs());
        let rows = [
            (
                ProsodyParameter::SpeakingRate,
                dist(Some(natural.speaking_rate), Some(target.speaking_rate)),
                dist(Some(mimicry.speaking_rate), Some(target.speaking_rate)),
            ),
            (
                ProsodyParameter::F0Median,
                dist(natural.f0_median, target.f0_median),
                dist(mimicry.f0_median, target.f0_median),
            ),
            (
                ProsodyParameter::F0Std,
                dist(natural.f0_std, target.f0_std),
                dist(mimicry.f0_std, target.f0_std),
            ),
            (ProsodyParameter::FormantD, c.formant_natural, c.formant_mimicry),
        ];
        for (parameter, nat, mim) in rows {
            out.push(ProsodyChange {
                attacker_id: c.attacker_id.clone(),
                target_id: c.target_id.clone(),
                parameter,
                natural_distance: nat,
                mimicry_distance: mim,
                improved: matches!((nat, mim), (Some(n), Some(m)) if m < n),
            });
        }
    }
    Ok(out)
}
