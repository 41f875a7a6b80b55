//! Target selection, utterance selection, attack trials and transfer metrics.

mod rank;
mod transfer;
mod trials;
mod utterances;

pub use rank::{
    rank_from_scores, rank_targets, read_assignments_csv, read_rankings_csv, select_targets, write_assignments_csv,
    write_rankings_csv, LanguagePool, RankCategory, RankedTargets, TargetAssignment, TargetCandidate,
};
pub use transfer::{spearman, transfer_report, AttackerTransfer, CategoryMean, TransferReport};
pub use trials::{
    build_attack_trials, read_attack_scores_csv, read_attack_trials_csv, write_attack_scores_csv,
    write_attack_trials_csv, AttackScore, AttackTrial, Condition,
};
pub use utterances::{select_utterances, UtteranceCandidate, UtteranceSelection};
