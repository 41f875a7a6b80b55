//! GMM-UBM, Baum-Welch statistics, total-variability training and i-vectors.

mod gmm;
mod profile;
mod stats;
mod tv;
mod vector;

pub use gmm::{train_ubm, GmmUbm, UbmTrainConfig, UbmTrainLog};
pub use profile::SystemProfile;
pub use stats::{accumulate_bw, BwStats};
pub use tv::{extract_ivector, train_tv, TotalVariability, TvTrainConfig, TvTrainLog};
pub use vector::{average_embeddings, read_embeddings_csv, write_embeddings_csv, Embedding, EmbeddingSet};
