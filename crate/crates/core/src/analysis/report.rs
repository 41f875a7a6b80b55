use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::attack::RankCategory;
use crate::backend::Eer;
use crate::{Error, Result};

use super::{CategorySummary, DomainDistribution, MimicryDelta, ProsodyChange};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything `report` emits, in one JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub summaries: Vec<CategorySummary>,
    pub deltas: Vec<MimicryDelta>,
    pub unpaired_trials: usize,
    pub distributions: Vec<DomainDistribution>,
    pub prosody: Vec<ProsodyChange>,
    pub eer: Vec<(String, Eer)>,
    pub warnings: Vec<String>,
}

impl ReportBundle {
    pub fn new() -> Self {
        ReportBundle {
            schema_version: REPORT_SCHEMA_VERSION,
            ..Default::default()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let found = v.get("schema_version").and_then(|s| s.as_u64());
        if found != Some(REPORT_SCHEMA_VERSION as u64) {
            return Err(Error::VersionMismatch {
                key: "report bundle".into(),
                expected: REPORT_SCHEMA_VERSION.to_string(),
                found: found.map(|f| f.to_string()).unwrap_or_else(|| "none".into()),
            });
        }
        Ok(serde_json::from_value(v)?)
    }
}

const TABLE2_COLUMNS: [RankCategory; 4] = [
    RankCategory::Closest,
    RankCategory::Median,
    RankCategory::Furthest,
    RankCategory::Common,
];

fn system_label(system: &str) -> String {
    match system {
        "attacker" => "Attacker's ASV".into(),
        "attacked" => "Attacked ASV".into(),
        other => other.to_string(),
    }
}

fn fmt1(x: f64) -> String {
    let s = format!("{x:.1}");
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

/// Rows in order attacker, attacked, then any other systems by name.
fn table2_rows(deltas: &[MimicryDelta]) -> Vec<(String, Vec<String>)> {
    let mut systems: Vec<&str> = deltas.iter().map(|d| d.system.as_str()).collect();
    systems.sort_by_key(|s| match *s {
        "attacker" => (0, String::new()),
        "attacked" => (1, String::new()),
        other => (2, other.to_string()),
    });
    systems.dedup();
    systems
        .into_iter()
        .map(|sys| {
            let cells = TABLE2_COLUMNS
                .iter()
                .map(|cat| {
                    deltas
                        .iter()
                        .find(|d| d.system == sys && d.rank_category == *cat)
                        .map(|d| format!("{} ± {}", fmt1(d.delta_mean), fmt1(d.ci_halfwidth)))
                        .unwrap_or_else(|| "-".into())
                })
                .collect();
            (system_label(sys), cells)
        })
        .collect()
}

/// Mimicry-minus-natural score differences as a fixed-width text table.
pub fn render_table2(deltas: &[MimicryDelta]) -> String {
    let mut out = format!("{:<16}", "ASV system");
    for c in TABLE2_COLUMNS {
        let mut name = c.as_str().to_string();
        name[..1].make_ascii_uppercase();
        out.push_str(&format!("{name:>14}"));
    }
    out.push('\n');
    for (label, cells) in table2_rows(deltas) {
        out.push_str(&format!("{label:<16}"));
        for c in cells {
            out.push_str(&format!("{c:>14}"));
        }
        out.push('\n');
    }
    out
}

pub fn render_table2_markdown(deltas: &[MimicryDelta]) -> String {
    let mut out = String::from("| ASV system | Closest | Median | Furthest | Common |\n|---|---:|---:|---:|---:|\n");
    for (label, cells) in table2_rows(deltas) {
        out.push_str(&format!("| {label} | {} |\n", cells.join(" | ")));
    }
    out
}

pub fn write_summaries_csv(w: impl Write, rows: &[CategorySummary]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rank_category", "language_pool", "condition", "mean_llr", "ci_halfwidth", "n_trials"])?;
    for r in rows {
        out.write_record([
            r.rank_category.to_string(),
            r.language_pool.to_string(),
            r.condition.to_string(),
            format!("{:e}", r.mean_llr),
            format!("{:e}", r.ci_halfwidth),
            r.n_trials.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn bad_row(row: usize, reason: impl Into<String>) -> Error {
    Error::InvalidRecord {
        id: format!("row {row}"),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(row: usize, s: &str, name: &str) -> Result<T> {
    s.trim().parse().map_err(|_| bad_row(row, format!("bad {name} {s:?}")))
}

pub fn read_summaries_csv(r: impl Read) -> Result<Vec<CategorySummary>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != 6 {
            return Err(bad_row(row, "expected 6 columns"));
        }
        out.push(CategorySummary {
            rank_category: rec[0].parse().map_err(|e: String| bad_row(row, e))?,
            language_pool: rec[1].parse().map_err(|e: String| bad_row(row, e))?,
            condition: rec[2].parse().map_err(|e: String| bad_row(row, e))?,
            mean_llr: num(row, &rec[3], "mean_llr")?,
            ci_halfwidth: num(row, &rec[4], "ci_halfwidth")?,
            n_trials: num(row, &rec[5], "n_trials")?,
        });
    }
    Ok(out)
}

/// CSV `system,rank_category,delta_mean,ci_halfwidth,n_pairs`.
pub fn write_deltas_csv(w: impl Write, rows: &[MimicryDelta]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["system", "rank_category", "delta_mean", "ci_halfwidth", "n_pairs"])?;
    for r in rows {
        out.write_record([
            r.system.clone(),
            r.rank_category.to_string(),
            format!("{}", r.delta_mean),
            format!("{}", r.ci_halfwidth),
            r.n_pairs.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_deltas_csv(r: impl Read) -> Result<Vec<MimicryDelta>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != 5 {
            return Err(bad_row(row, "expected system,rank_category,delta_mean,ci_halfwidth,n_pairs"));
        }
        let ci: f64 = num(row, &rec[3], "ci_halfwidth")?;
        if !(ci >= 0.0) {
            return Err(bad_row(row, "negative confidence half-width"));
        }
        out.push(MimicryDelta {
            system: rec[0].trim().to_string(),
            rank_category: rec[1].parse().map_err(|e: String| bad_row(row, e))?,
            delta_mean: num(row, &rec[2], "delta_mean")?,
            ci_halfwidth: ci,
            n_pairs: num(row, &rec[4], "n_pairs")?,
        });
    }
    Ok(out)
}

/// Gnuplot data blocks, one per distribution: bin centre and count.
pub fn write_distributions_dat(mut w: impl Write, dists: &[DomainDistribution]) -> Result<()> {
    for (k, d) in dists.iter().enumerate() {
        if k > 0 {
            writeln!(w, "\n")?;
        }
        writeln!(w, "# {} {} n={} mean={:.6} std={:.6}", d.domain, d.hypothesis, d.n_trials, d.mean, d.std)?;
        for (i, c) in d.counts.iter().enumerate() {
            writeln!(w, "{:.6} {}", 0.5 * (d.bin_edges[i] + d.bin_edges[i + 1]), c)?;
        }
    }
    Ok(())
}
