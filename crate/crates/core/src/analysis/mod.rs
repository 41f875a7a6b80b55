//! Score aggregation and reporting.

mod listening;
mod prosody_change;
mod report;
mod stats;

pub use listening::{generate_listening_trials, write_listening_trials_csv, ListeningGroup, ListeningTrial};
pub use prosody_change::{prosody_report, ProsodyChange, ProsodyCombination, ProsodyParameter, ProsodyStats};
pub use report::{
    read_deltas_csv, read_summaries_csv, render_table2, render_table2_markdown, write_deltas_csv, write_distributions_dat,
    write_summaries_csv, ReportBundle, REPORT_SCHEMA_VERSION,
};
pub use stats::{
    domain_distributions, mean_ci, mimicry_deltas, summarize_categories, CategorySummary, DeltaSet, DomainDistribution,
    MimicryDelta, HISTOGRAM_BINS,
};
