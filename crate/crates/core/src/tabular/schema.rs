use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Integer,
    Decimal,
    Categorical,
}

/// One column of a person-level table. Raw cells that are empty or listed
/// in `missing_codes` load as missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub missing_codes: Vec<String>,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
            missing_codes: Vec::new(),
        }
    }

    pub fn with_missing_codes(mut self, codes: &[&str]) -> Self {
        self.missing_codes = codes.iter().map(|c| c.to_string()).collect();
        self
    }

    pub fn is_missing_raw(&self, raw: &str) -> bool {
        raw.is_empty() || self.missing_codes.iter().any(|c| c == raw)
    }
}

/// Kind of a PUMS person column. Quantities are integers; everything else
/// is a categorical code.
pub fn acs_column_kind(name: &str) -> ColumnKind {
    match name {
        "AGEP" | "WKHP" | "PINCP" | "JWMNP" | "POVPIP" | "PWGTP" => ColumnKind::Integer,
        _ => ColumnKind::Categorical,
    }
}

pub fn acs_schema<S: AsRef<str>>(columns: &[S]) -> Vec<ColumnSchema> {
    let mut out: Vec<ColumnSchema> = Vec::with_capacity(columns.len());
    for c in columns {
        let name = c.as_ref();
        if out.iter().any(|s| s.name == name) {
            continue;
        }
        out.push(ColumnSchema::new(name, acs_column_kind(name)));
    }
    out
}
