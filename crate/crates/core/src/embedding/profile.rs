use serde::{Deserialize, Serialize};

use crate::backend::PldaVariant;
use crate::frontend::FrontendConfig;
use crate::{Error, Result};

/// Complete recipe for one speaker-verification system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemProfile {
    pub profile_id: String,
    pub frontend: FrontendConfig,
    pub ubm_components: usize,
    pub ubm_iters: usize,
    pub tv_rank: usize,
    pub tv_iters: usize,
    pub tv_init_scale: f64,
    pub lda_dim: usize,
    pub plda: PldaVariant,
    pub plda_iters: usize,
    /// Manifest partition the system is trained on.
    pub training_partition: String,
    pub seed: u64,
}

impl SystemProfile {
    /// Attacker-side system at full size: 60-D RASTA MFCCs, 400-D i-vectors,
    /// LDA to 250, simplified PLDA with a 200-D speaker subspace.
    pub fn attacker() -> Self {
        SystemProfile {
            profile_id: "A".into(),
            frontend: FrontendConfig::profile_a(),
            ubm_components: 256,
            ubm_iters: 5,
            tv_rank: 400,
            tv_iters: 5,
            tv_init_scale: 0.001,
            lda_dim: 250,
            plda: PldaVariant::Simplified { speaker_dim: 200 },
            plda_iters: 10,
            training_partition: "dev_a".into(),
            seed: 1,
        }
    }

    /// Attacked system at full size: 30-D MFCCs with sliding CMN, 512-D
    /// i-vectors, LDA to 200, two-covariance PLDA.
    pub fn attacked() -> Self {
        SystemProfile {
            profile_id: "B".into(),
            frontend: FrontendConfig::profile_b(),
            ubm_components: 256,
            ubm_iters: 5,
            tv_rank: 512,
            tv_iters: 5,
            tv_init_scale: 0.001,
            lda_dim: 200,
            plda: PldaVariant::TwoCov,
            plda_iters: 10,
            training_partition: "dev_b".into(),
            seed: 2,
        }
    }

    /// Attacker-side system shrunk for small corpora.
    pub fn attacker_desk() -> Self {
        SystemProfile {
            ubm_components: 32,
            tv_rank: 60,
            lda_dim: 40,
            plda: PldaVariant::Simplified { speaker_dim: 30 },
            ..Self::attacker()
        }
    }

    /// Attacked system shrunk for small corpora.
    pub fn attacked_desk() -> Self {
        SystemProfile {
            ubm_components: 32,
            tv_rank: 80,
            lda_dim: 30,
            ..Self::attacked()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.frontend.validate()?;
        if self.profile_id.is_empty() || self.profile_id.contains(['/', ' ']) {
            return Err(Error::Config(format!("bad profile id {:?}", self.profile_id)));
        }
        if self.ubm_components == 0 || self.tv_rank == 0 || self.lda_dim == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        if self.tv_rank >= self.ubm_components * self.frontend.output_dim() {
            return Err(Error::Config("subspace rank exceeds supervector size".into()));
        }
        if self.lda_dim > self.tv_rank {
            return Err(Error::Config("LDA dimension exceeds i-vector dimension".into()));
        }
        if let PldaVariant::Simplified { speaker_dim } = self.plda {
            if speaker_dim == 0 || speaker_dim > self.lda_dim {
                return Err(Error::Config("speaker subspace must fit the LDA output".into()));
            }
        }
        Ok(())
    }

    /// The two systems of an experiment must differ in front end and back end.
    pub fn check_distinct(a: &SystemProfile, b: &SystemProfile) -> Result<()> {
        if a.profile_id == b.profile_id {
            return Err(Error::Config("profiles share an id".into()));
        }
        if a.frontend == b.frontend {
            return Err(Error::Config("profiles share a front end".into()));
        }
        if a.lda_dim == b.lda_dim && a.plda == b.plda {
            return Err(Error::Config("profiles share a back end".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_distinct() {
        for p in [
            SystemProfile::attacker(),
            SystemProfile::attacked(),
            SystemProfile::attacker_desk(),
            SystemProfile::attacked_desk(),
        ] {
            p.validate().unwrap();
        }
        SystemProfile::check_distinct(&SystemProfile::attacker(), &SystemProfile::attacked()).unwrap();
        SystemProfile::check_distinct(&SystemProfile::attacker_desk(), &SystemProfile::attacked_desk()).unwrap();
        assert!(SystemProfile::check_distinct(&SystemProfile::attacker(), &SystemProfile::attacker()).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let p = SystemProfile::attacker_desk();
        let text = serde_json::to_string(&p).unwrap();
        let back: SystemProfile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}
