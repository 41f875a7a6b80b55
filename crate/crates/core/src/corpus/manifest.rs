use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Required CSV columns, in order.
pub const MANIFEST_COLUMNS: [&str; 9] = [
    "speaker_id",
    "role",
    "gender",
    "nationality",
    "utterance_id",
    "audio_path",
    "session",
    "sample_rate_hz",
    "duration_s",
];

/// Optional trailing columns.
const OPTIONAL_COLUMNS: [&str; 4] = ["prompt_id", "partition", "quality", "display_name"];

string_enum!(Role { Attacker => "attacker", Target => "target" });
string_enum!(Gender { Male => "male", Female => "female", Unknown => "unknown" });
string_enum!(Session {
    Natural => "natural",
    ZeroEffort => "zero_effort",
    Mimicry => "mimicry",
    Wild => "wild",
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerRecord {
    pub speaker_id: String,
    pub role: Role,
    pub gender: Gender,
    pub nationality: String,
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub audio_path: PathBuf,
    pub session: Session,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    /// Spoken-content id shared by utterances reading the same text.
    pub prompt_id: Option<String>,
    /// Training partition tag, e.g. `dev_a`.
    pub partition: Option<String>,
    /// False when the recording failed a quality audit.
    pub quality_ok: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub speakers: Vec<SpeakerRecord>,
    pub utterances: Vec<UtteranceRecord>,
    speaker_index: BTreeMap<String, usize>,
    utterance_index: BTreeMap<String, usize>,
}

/// One flattened manifest row, shared by the CSV and JSON-lines readers.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Row {
    speaker_id: String,
    role: String,
    gender: String,
    nationality: String,
    #[serde(default)]
    utterance_id: String,
    #[serde(default)]
    audio_path: String,
    #[serde(default)]
    session: String,
    #[serde(default)]
    sample_rate_hz: String,
    #[serde(default)]
    duration_s: String,
    #[serde(default)]
    prompt_id: String,
    #[serde(default)]
    partition: String,
    #[serde(default)]
    quality: String,
    #[serde(default)]
    display_name: String,
}

impl Manifest {
    /// Builds and validates a manifest from records.
    pub fn new(speakers: Vec<SpeakerRecord>, utterances: Vec<UtteranceRecord>) -> Result<Self> {
        let mut speaker_index = BTreeMap::new();
        for (i, s) in speakers.iter().enumerate() {
            if s.speaker_id.is_empty() {
                return Err(Error::InvalidRecord {
                    id: format!("speaker #{i}"),
                    reason: "empty speaker_id".into(),
                });
            }
            if speaker_index.insert(s.speaker_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(s.speaker_id.clone()));
            }
        }
        let mut utterance_index = BTreeMap::new();
        for (i, u) in utterances.iter().enumerate() {
            if u.utterance_id.is_empty() {
                return Err(Error::InvalidRecord {
                    id: format!("utterance #{i}"),
                    reason: "empty utterance_id".into(),
                });
            }
            if utterance_index.insert(u.utterance_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(u.utterance_id.clone()));
            }
            let speaker = match speaker_index.get(&u.speaker_id) {
                Some(&s) => &speakers[s],
                None => {
                    return Err(Error::DanglingReference {
                        utterance: u.utterance_id.clone(),
                        speaker: u.speaker_id.clone(),
                    })
                }
            };
            if !(u.duration_s > 0.0 && u.duration_s.is_finite()) {
                return Err(Error::InvalidRecord {
                    id: u.utterance_id.clone(),
                    reason: format!("duration_s must be positive, got {}", u.duration_s),
                });
            }
            if u.sample_rate_hz == 0 {
                return Err(Error::InvalidRecord {
                    id: u.utterance_id.clone(),
                    reason: "sample_rate_hz must be positive".into(),
                });
            }
            let session_ok = match speaker.role {
                Role::Target => u.session == Session::Wild,
                Role::Attacker => u.session != Session::Wild,
            };
            if !session_ok {
                return Err(Error::InvalidRecord {
                    id: u.utterance_id.clone(),
                    reason: format!("session {} not allowed for a {} speaker", u.session, speaker.role),
                });
            }
        }
        Ok(Manifest {
            speakers,
            utterances,
            speaker_index,
            utterance_index,
        })
    }

    pub fn speaker(&self, id: &str) -> Option<&SpeakerRecord> {
        self.speaker_index.get(id).map(|&i| &self.speakers[i])
    }

    pub fn utterance(&self, id: &str) -> Option<&UtteranceRecord> {
        self.utterance_index.get(id).map(|&i| &self.utterances[i])
    }

    pub fn utterances_of<'a>(&'a self, speaker_id: &'a str) -> impl Iterator<Item = &'a UtteranceRecord> + 'a {
        self.utterances.iter().filter(move |u| u.speaker_id == speaker_id)
    }

    pub fn session_of<'a>(
        &'a self,
        speaker_id: &'a str,
        session: Session,
    ) -> impl Iterator<Item = &'a UtteranceRecord> + 'a {
        self.utterances_of(speaker_id).filter(move |u| u.session == session)
    }

    pub fn speakers_with_role(&self, role: Role) -> impl Iterator<Item = &SpeakerRecord> {
        self.speakers.iter().filter(move |s| s.role == role)
    }

    pub fn partition<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a UtteranceRecord> + 'a {
        self.utterances
            .iter()
            .filter(move |u| u.partition.as_deref() == Some(tag))
    }

    /// Resolves an utterance's audio path relative to `base` when it is not absolute.
    pub fn audio_path(&self, utt: &UtteranceRecord, base: &Path) -> PathBuf {
        if utt.audio_path.is_absolute() {
            utt.audio_path.clone()
        } else {
            base.join(&utt.audio_path)
        }
    }

    fn rows(&self) -> Vec<Row> {
        let mut rows = Vec::new();
        for s in &self.speakers {
            let base = Row {
                speaker_id: s.speaker_id.clone(),
                role: s.role.to_string(),
                gender: s.gender.to_string(),
                nationality: s.nationality.clone(),
                display_name: s.display_name.clone().unwrap_or_default(),
                ..Row::default()
            };
            let mut any = false;
            for u in self.utterances_of(&s.speaker_id) {
                any = true;
                rows.push(Row {
                    utterance_id: u.utterance_id.clone(),
                    audio_path: u.audio_path.to_string_lossy().into_owned(),
                    session: u.session.to_string(),
                    sample_rate_hz: u.sample_rate_hz.to_string(),
                    duration_s: format!("{}", u.duration_s),
                    prompt_id: u.prompt_id.clone().unwrap_or_default(),
                    partition: u.partition.clone().unwrap_or_default(),
                    quality: if u.quality_ok { String::new() } else { "bad".into() },
                    ..base.clone()
                });
            }
            if !any {
                rows.push(base);
            }
        }
        rows
    }

    /// Writes the CSV form, preceded by the schema-version comment line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = format!("# schema_version={MANIFEST_SCHEMA_VERSION}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let header: Vec<&str> = MANIFEST_COLUMNS.iter().chain(OPTIONAL_COLUMNS.iter()).copied().collect();
            w.write_record(&header)?;
            for r in self.rows() {
                w.write_record([
                    &r.speaker_id,
                    &r.role,
                    &r.gender,
                    &r.nationality,
                    &r.utterance_id,
                    &r.audio_path,
                    &r.session,
                    &r.sample_rate_hz,
                    &r.duration_s,
                    &r.prompt_id,
                    &r.partition,
                    &r.quality,
                    &r.display_name,
                ])?;
            }
            w.flush()?;
        }
        crate::corpus::store::write_atomic(path, &out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = format!("{{\"schema_version\":{MANIFEST_SCHEMA_VERSION}}}\n");
        for r in self.rows() {
            out.push_str(&serde_json::to_string(&r)?);
            out.push('\n');
        }
        crate::corpus::store::write_atomic(path, out.as_bytes())
    }
}

/// Loads a manifest from CSV, or JSON lines when the extension is `.jsonl`.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let rows = if is_jsonl {
        parse_jsonl(path, &text)?
    } else {
        parse_csv(path, &text)?
    };
    assemble(path, rows)
}

fn check_schema_version(path: &Path, line: u64, version: &str) -> Result<()> {
    match version.trim().parse::<u32>() {
        Ok(MANIFEST_SCHEMA_VERSION) => Ok(()),
        _ => Err(Error::parse(
            path,
            line,
            format!("unsupported schema_version {version:?} (expected {MANIFEST_SCHEMA_VERSION})"),
        )),
    }
}

fn parse_csv(path: &Path, text: &str) -> Result<Vec<(u64, Row)>> {
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("schema_version=") {
                check_schema_version(path, i as u64 + 1, v)?;
            }
        } else if !line.is_empty() {
            break;
        }
    }
    if text.lines().all(|l| l.trim().is_empty() || l.trim_start().starts_with('#')) {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| with_path(e.into(), path))?
        .clone();
    let header_line = reader.position().line();
    for (i, col) in MANIFEST_COLUMNS.iter().enumerate() {
        if headers.get(i) != Some(col) {
            return Err(Error::parse(
                path,
                header_line,
                format!("expected column {} to be {col:?}, found {:?}", i + 1, headers.get(i).unwrap_or("")),
            ));
        }
    }
    for h in headers.iter().skip(MANIFEST_COLUMNS.len()) {
        if !OPTIONAL_COLUMNS.contains(&h) {
            return Err(Error::parse(path, header_line, format!("unknown column {h:?}")));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| with_path(e.into(), path))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |name: &str| -> String {
            headers
                .iter()
                .position(|h| h == name)
                .and_then(|i| record.get(i))
                .unwrap_or("")
                .to_string()
        };
        rows.push((
            line,
            Row {
                speaker_id: get("speaker_id"),
                role: get("role"),
                gender: get("gender"),
                nationality: get("nationality"),
                utterance_id: get("utterance_id"),
                audio_path: get("audio_path"),
                session: get("session"),
                sample_rate_hz: get("sample_rate_hz"),
                duration_s: get("duration_s"),
                prompt_id: get("prompt_id"),
                partition: get("partition"),
                quality: get("quality"),
                display_name: get("display_name"),
            },
        ));
    }
    Ok(rows)
}

fn parse_jsonl(path: &Path, text: &str) -> Result<Vec<(u64, Row)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if let Some(v) = value.get("schema_version") {
            check_schema_version(path, line_no, &v.to_string())?;
            continue;
        }
        let row: Row =
            serde_json::from_value(value).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        rows.push((line_no, row));
    }
    Ok(rows)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    }
}

fn assemble(path: &Path, rows: Vec<(u64, Row)>) -> Result<Manifest> {
    let mut speakers: Vec<SpeakerRecord> = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut utterances = Vec::new();
    for (line, row) in rows {
        let bad = |msg: String| Error::parse(path, line, msg);
        if row.speaker_id.is_empty() {
            return Err(bad("empty speaker_id".into()));
        }
        // Rows with blank speaker columns refer to a speaker defined elsewhere.
        let defines_speaker = !(row.role.is_empty() && row.gender.is_empty() && row.nationality.is_empty());
        if !defines_speaker && row.utterance_id.is_empty() {
            return Err(bad("row defines neither a speaker nor an utterance".into()));
        }
        let speaker = SpeakerRecord {
            speaker_id: row.speaker_id.clone(),
            role: if defines_speaker { row.role.parse().map_err(bad)? } else { Role::Target },
            gender: if defines_speaker { row.gender.parse().map_err(bad)? } else { Gender::Unknown },
            nationality: row.nationality.clone(),
            display_name: non_empty(&row.display_name),
        };
        match seen.get(&speaker.speaker_id) {
            _ if !defines_speaker => {}
            Some(&i) if speakers[i] != speaker => {
                return Err(Error::DuplicateId(speaker.speaker_id));
            }
            Some(_) => {}
            None => {
                seen.insert(speaker.speaker_id.clone(), speakers.len());
                speakers.push(speaker);
            }
        }
        if row.utterance_id.is_empty() {
            continue;
        }
        let quality_ok = match row.quality.trim() {
            "" | "ok" => true,
            "bad" => false,
            other => return Err(bad(format!("invalid quality {other:?}"))),
        };
        utterances.push(UtteranceRecord {
            utterance_id: row.utterance_id.clone(),
            speaker_id: row.speaker_id.clone(),
            audio_path: PathBuf::from(&row.audio_path),
            session: row.session.parse().map_err(bad)?,
            duration_s: row
                .duration_s
                .parse()
                .map_err(|_| bad(format!("invalid duration_s {:?}", row.duration_s)))?,
            sample_rate_hz: row
                .sample_rate_hz
                .parse()
                .map_err(|_| bad(format!("invalid sample_rate_hz {:?}", row.sample_rate_hz)))?,
            prompt_id: non_empty(&row.prompt_id),
            partition: non_empty(&row.partition),
            quality_ok,
        });
    }
    Manifest::new(speakers, utterances)
}

fn non_empty(s: &str) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s.to_string())
    }
}
