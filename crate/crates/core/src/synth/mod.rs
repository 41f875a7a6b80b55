//! Seeded synthetic speech corpus with known speaker structure.

mod corpus;
mod signal;
mod voice;

pub use corpus::{add_attack_sessions, generate_corpus, load_voices, AttackSessionRequest, SynthConfig, VoiceBook, VOICES_FILE};
pub use signal::{one_pole, pre_difference, pulse_train, resonant_pulse_train, vowel_bursts, Resonator};
pub use voice::{render, Channel, ImitationSkill, Voice};
