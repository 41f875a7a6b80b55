use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mimicry_core::backend::PldaVariant;
use mimicry_core::embedding::SystemProfile;
use mimicry_core::synth::SynthConfig;
use mimicry_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

/// Per-profile overrides; unset fields keep the preset.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverride {
    pub ubm_components: Option<usize>,
    pub ubm_iters: Option<usize>,
    pub tv_rank: Option<usize>,
    pub tv_iters: Option<usize>,
    pub tv_init_scale: Option<f64>,
    pub lda_dim: Option<usize>,
    /// Simplified PLDA speaker subspace; ignored for two-covariance PLDA.
    pub speaker_dim: Option<usize>,
    pub plda_iters: Option<usize>,
    pub training_partition: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    /// Base directory for relative audio paths; defaults to the manifest's directory.
    pub audio_root: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSettings {
    pub filter: String,
    pub min_active_speech_s: f64,
    pub language_pool: String,
    /// Gender-matched common targets: `male`/`female` to a speaker id.
    pub common_targets: BTreeMap<String, String>,
}

impl Default for AttackSettings {
    fn default() -> Self {
        AttackSettings {
            filter: "gender=same".into(),
            min_active_speech_s: 30.0,
            language_pool: "native".into(),
            common_targets: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scale: Scale,
    pub paths: Paths,
    pub profile: BTreeMap<String, ProfileOverride>,
    pub attack: AttackSettings,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Resolves a profile id. Ids starting with `A` build on the
    /// attacker-side preset, ids starting with `B` on the attacked one.
    pub fn profile(&self, id: &str, scale_flag: Option<Scale>) -> Result<SystemProfile> {
        let scale = scale_flag.unwrap_or(self.scale);
        let mut p = match (id.chars().next(), scale) {
            (Some('A'), Scale::Desk) => SystemProfile::attacker_desk(),
            (Some('A'), Scale::Full) => SystemProfile::attacker(),
            (Some('B'), Scale::Desk) => SystemProfile::attacked_desk(),
            (Some('B'), Scale::Full) => SystemProfile::attacked(),
            _ => return Err(Error::Config(format!("unknown profile {id:?}; ids start with A or B"))),
        };
        p.profile_id = id.to_string();
        if let Some(o) = self.profile.get(id) {
            macro_rules! set {
                ($($f:ident),*) => { $(if let Some(v) = o.$f.clone() { p.$f = v; })* };
            }
            set!(ubm_components, ubm_iters, tv_rank, tv_iters, tv_init_scale, lda_dim, plda_iters, training_partition, seed);
            if let (Some(d), PldaVariant::Simplified { .. }) = (o.speaker_dim, p.plda) {
                p.plda = PldaVariant::Simplified { speaker_dim: d };
            }
        }
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply() {
        let cfg: RunConfig = toml::from_str(
            r#"
            scale = "desk"
            [profile.A]
            ubm_components = 8
            speaker_dim = 5
            [attack]
            filter = "nationality=FI"
            [synth]
            speakers = 12
            "#,
        )
        .unwrap();
        let a = cfg.profile("A", None).unwrap();
        assert_eq!(a.ubm_components, 8);
        assert_eq!(a.plda, PldaVariant::Simplified { speaker_dim: 5 });
        assert_eq!(cfg.profile("A", Some(Scale::Full)).unwrap().ubm_components, 8);
        assert_eq!(cfg.profile("B", None).unwrap().ubm_components, 32);
        assert_eq!(cfg.synth.speakers, 12);
        assert_eq!(cfg.synth.attackers, SynthConfig::default().attackers);
        assert!(cfg.profile("C", None).is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
