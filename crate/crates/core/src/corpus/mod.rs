//! Corpus metadata, audio I/O and the persistent artifact store.

mod audio;
mod codec;
mod manifest;
mod resample;
pub(crate) mod store;

pub use audio::{read_audio, write_wav_i16, AudioBuffer};
pub use codec::{Artifact, Decoder, Encoder};
pub use manifest::{
    load_manifest, Gender, Manifest, Role, Session, SpeakerRecord, UtteranceRecord,
    MANIFEST_COLUMNS, MANIFEST_SCHEMA_VERSION,
};
pub use resample::resample;
pub use store::{Store, STORE_ENV};
