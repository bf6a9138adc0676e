use std::path::Path;

use serde::{Deserialize, Serialize};

use super::extract::ScoreFlag;
use super::{Result, ScoreError};
use crate::encoding::Scheme;

/// One scored row. `group` is a category code, `other`, or empty when the
/// run has no group column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub row_id: u64,
    pub score: f64,
    pub label: u8,
    pub group: String,
    pub scheme: Scheme,
    pub flags: Vec<ScoreFlag>,
}

impl ScoredRecord {
    pub fn scores(records: &[ScoredRecord]) -> Vec<f64> {
        records.iter().map(|r| r.score).collect()
    }

    pub fn labels(records: &[ScoredRecord]) -> Vec<u8> {
        records.iter().map(|r| r.label).collect()
    }
}

const HEADER: [&str; 6] = ["row_id", "score", "label", "group", "scheme", "flags"];

/// Renders `row_id,score,label,group,scheme,flags`, scores in shortest
/// round-trip form and flags joined by `;`.
pub fn scored_records_csv(records: &[ScoredRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in records {
        let flags: Vec<&str> = r.flags.iter().map(ScoreFlag::as_str).collect();
        w.write_record([
            r.row_id.to_string(),
            r.score.to_string(),
            r.label.to_string(),
            r.group.clone(),
            r.scheme.as_str().to_string(),
            flags.join(";"),
        ])?;
    }
    w.into_inner().map_err(|e| ScoreError::Io(e.into_error()))
}

pub fn write_scored_records(path: &Path, records: &[ScoredRecord]) -> Result<()> {
    std::fs::write(path, scored_records_csv(records)?)?;
    Ok(())
}

pub fn read_scored_records(path: &Path) -> Result<Vec<ScoredRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(ScoreError::Parse {
            line: 1,
            message: format!("expected header {}", HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| ScoreError::Parse { line, message };
        let row_id = rec[0].parse::<u64>().map_err(|e| bad(format!("row_id: {e}")))?;
        let score = rec[1].parse::<f64>().map_err(|e| bad(format!("score: {e}")))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(bad(format!("score {score} outside [0, 1]")));
        }
        let label = match &rec[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("label `{other}` is not 0 or 1"))),
        };
        let scheme = match &rec[4] {
            "multiple-choice" => Scheme::MultipleChoice,
            "numeric" => Scheme::Numeric,
            other => return Err(bad(format!("unknown scheme `{other}`"))),
        };
        let flags = rec[5]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| ScoreFlag::parse(s).ok_or_else(|| bad(format!("unknown flag `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(ScoredRecord {
            row_id,
            score,
            label,
            group: rec[3].to_string(),
            scheme,
            flags,
        });
    }
    Ok(out)
}
