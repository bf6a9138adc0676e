use std::fs::File;
use std::path::{Path, PathBuf};

use log::info;

use super::dataset::{LineageStep, TabularDataset};
use super::schema::{ColumnKind, ColumnSchema};
use super::{DataError, Result};

/// Loads a PUMS person-level CSV (or every `*.csv` in a directory, in file
/// name order) keeping only the schema columns. Row ids are record
/// ordinals across all files.
pub fn load_person_csv(path: &Path, schema: &[ColumnSchema]) -> Result<TabularDataset> {
    let files = csv_files(path)?;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    let mut row_ids: Vec<u64> = Vec::new();
    let mut next_id: u64 = 0;

    for file in &files {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(File::open(file)?);
        let headers = reader.headers()?.clone();
        let positions = schema
            .iter()
            .map(|col| {
                headers
                    .iter()
                    .position(|h| h.trim() == col.name)
                    .ok_or_else(|| DataError::MissingColumn {
                        column: col.name.clone(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut record = csv::StringRecord::new();
        while reader.read_record(&mut record)? {
            for ((col, &pos), out) in schema.iter().zip(&positions).zip(columns.iter_mut()) {
                let raw = record.get(pos).unwrap_or("").trim();
                out.push(parse_cell(col, raw).ok_or_else(|| DataError::Parse {
                    row: next_id as usize,
                    column: col.name.clone(),
                    value: raw.to_string(),
                })?);
            }
            row_ids.push(next_id);
            next_id += 1;
        }
    }

    info!("loaded {} rows from {} file(s)", row_ids.len(), files.len());
    let source = path.display().to_string();
    let rows = row_ids.len();
    TabularDataset::from_columns(
        schema.to_vec(),
        row_ids,
        columns,
        LineageStep::Load { source, rows },
    )
}

fn parse_cell(col: &ColumnSchema, raw: &str) -> Option<f64> {
    if col.is_missing_raw(raw) {
        return Some(f64::NAN);
    }
    match col.kind {
        ColumnKind::Integer | ColumnKind::Categorical => raw.parse::<i64>().ok().map(|v| v as f64),
        ColumnKind::Decimal => raw.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

fn csv_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(DataError::NoInput(path.display().to_string()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(DataError::NoInput(path.display().to_string()));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{acs_schema, Value};
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    #[test]
    fn parses_rows_and_ignores_extra_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "RT,AGEP,SEX\nP,42,1\nP,17,2\n");
        let d = load_person_csv(&p, &acs_schema(&["AGEP", "SEX"])).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.value(0, 0), Value::Int(42));
        assert_eq!(d.value(1, 0), Value::Int(17));
        assert_eq!(d.value(1, 1), Value::Code(2));
        assert_eq!(d.schema().len(), 2);
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "AGEP,SEX\n42,1\n");
        let err = load_person_csv(&p, &acs_schema(&["AGEP", "OCCP"])).unwrap_err();
        match err {
            DataError::MissingColumn { column } => assert_eq!(column, "OCCP"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unparseable_cell_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "AGEP,SEX\n42,1\nabc,2\n");
        let err = load_person_csv(&p, &acs_schema(&["AGEP", "SEX"])).unwrap_err();
        match err {
            DataError::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "AGEP");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blanks_and_missing_codes_load_as_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "AGEP,WKHP\n42,\n30,-9\n");
        let schema = vec![
            ColumnSchema::new("AGEP", ColumnKind::Integer),
            ColumnSchema::new("WKHP", ColumnKind::Integer).with_missing_codes(&["-9"]),
        ];
        let d = load_person_csv(&p, &schema).unwrap();
        assert!(d.value(0, 1).is_missing());
        assert!(d.value(1, 1).is_missing());
    }

    #[test]
    fn directory_of_state_files_concatenates_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "psam_p02.csv", "AGEP\n20\n");
        write(dir.path(), "psam_p01.csv", "AGEP\n10\n11\n");
        write(dir.path(), "notes.txt", "ignored");
        let d = load_person_csv(dir.path(), &acs_schema(&["AGEP"])).unwrap();
        let ages: Vec<_> = (0..d.len()).map(|r| d.value(r, 0)).collect();
        assert_eq!(ages, vec![Value::Int(10), Value::Int(11), Value::Int(20)]);
        assert_eq!(d.row_ids().collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
