use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncodeError, Result};
use crate::tabular::{TabularDataset, TaskDefinition, Value};

pub const DEFAULT_PREAMBLE: &str = "The following data describes a survey respondent. \
The survey was conducted among US residents in 2018. \
Please answer the question based on the information provided.";

/// Renders the values of one column as a sentence:
/// `{phrase}{connector}{value text}.`
///
/// Categorical columns use `values`; numeric columns use `format`, a
/// template with one of the placeholders `{int}`, `{decimal}` or
/// `{currency}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnToText {
    pub column: String,
    #[serde(default)]
    pub description: String,
    pub phrase: String,
    #[serde(default = "default_connector")]
    pub connector: String,
    /// Full sentence used for missing cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(default, with = "code_map", skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<i64, String>,
}

fn default_connector() -> String {
    ": ".to_string()
}

/// Integer-keyed maps stored with string keys, as TOML requires.
pub(crate) mod code_map {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, V: Serialize>(map: &BTreeMap<i64, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D, V>(d: D) -> Result<BTreeMap<i64, V>, D::Error>
    where
        D: Deserializer<'de>,
        V: Deserialize<'de>,
    {
        let raw = BTreeMap::<String, V>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<i64>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("value code `{k}` is not an integer")))
            })
            .collect()
    }
}

impl ColumnToText {
    pub fn categorical(
        column: &str,
        phrase: &str,
        values: impl IntoIterator<Item = (i64, &'static str)>,
    ) -> Self {
        Self {
            column: column.into(),
            description: String::new(),
            phrase: phrase.into(),
            connector: default_connector(),
            missing: None,
            format: None,
            values: values.into_iter().map(|(k, v)| (k, v.to_string())).collect(),
        }
    }

    pub fn numeric(column: &str, phrase: &str, format: &str) -> Self {
        Self {
            column: column.into(),
            description: String::new(),
            phrase: phrase.into(),
            connector: default_connector(),
            missing: None,
            format: Some(format.into()),
            values: BTreeMap::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: ColumnToText = toml::from_str(text)?;
        if m.format.is_none() && m.values.is_empty() {
            return Err(EncodeError::Codebook(format!(
                "column `{}` has neither a value map nor a format",
                m.column
            )));
        }
        Ok(m)
    }

    pub fn is_categorical(&self) -> bool {
        self.format.is_none()
    }

    fn missing_sentence(&self) -> String {
        match &self.missing {
            Some(s) => s.clone(),
            None => {
                let what = if self.description.is_empty() {
                    self.column.clone()
                } else {
                    self.description.to_lowercase()
                };
                format!("The individual's {what} is not reported.")
            }
        }
    }

    fn value_text(&self, raw: Value) -> Result<String> {
        if let Some(template) = &self.format {
            let x = raw.as_f64().expect("missing handled by caller");
            return Ok(render_number(template, x));
        }
        let code = match raw {
            Value::Code(c) | Value::Int(c) => c,
            Value::Decimal(d) if d.fract() == 0.0 => d as i64,
            _ => {
                return Err(EncodeError::UnmappedCode {
                    column: self.column.clone(),
                    code: format!("{:?}", raw),
                })
            }
        };
        self.values
            .get(&code)
            .cloned()
            .ok_or_else(|| EncodeError::UnmappedCode {
                column: self.column.clone(),
                code: code.to_string(),
            })
    }

    /// Checks that `raw` is renderable without building the sentence.
    pub fn covers(&self, raw: Value) -> bool {
        raw.is_missing() || self.value_text(raw).is_ok()
    }
}

fn render_number(template: &str, x: f64) -> String {
    let int = x.round() as i64;
    template
        .replace("{int}", &int.to_string())
        .replace("{decimal}", &format!("{x}"))
        .replace("{currency}", &format_currency(int))
}

/// `$75,000`; negative amounts render as `-$5,000`.
pub fn format_currency(amount: i64) -> String {
    let digits = amount.unsigned_abs().to_string();
    let mut grouped = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    if amount < 0 {
        format!("-${grouped}")
    } else {
        format!("${grouped}")
    }
}

/// Renders one cell as a complete sentence.
pub fn encode_value(mapping: &ColumnToText, raw: Value) -> Result<String> {
    if raw.is_missing() {
        return Ok(mapping.missing_sentence());
    }
    let text = mapping.value_text(raw)?;
    let end = if text.ends_with('.') { "" } else { "." };
    Ok(format!("{}{}{}{}", mapping.phrase, mapping.connector, text, end))
}

/// Column mappings plus the population preamble that opens every prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookConfig {
    pub population_preamble: String,
    pub mappings: BTreeMap<String, ColumnToText>,
}

macro_rules! bundled_columns {
    ($($col:literal),* $(,)?) => {
        &[$(($col, include_str!(concat!("../../assets/codebook/", $col, ".toml")))),*]
    };
}

const BUNDLED: &[(&str, &str)] = bundled_columns!(
    "AGEP", "ANC", "CIT", "COW", "DEAR", "DEYE", "DIS", "DREM", "ESP", "ESR", "FER", "JWMNP",
    "JWTR", "MAR", "MIG", "MIL", "NATIVITY", "OCCP", "PINCP", "POBP", "POVPIP", "PUBCOV",
    "RAC1P", "RELP", "SCHL", "SEX", "ST", "WKHP",
);

impl CodebookConfig {
    /// The bundled census codebook (28 columns).
    pub fn bundled() -> Self {
        let mappings = BUNDLED
            .iter()
            .map(|(col, src)| {
                let m = ColumnToText::from_toml(src)
                    .unwrap_or_else(|e| panic!("bundled codebook {col} is malformed: {e}"));
                (m.column.clone(), m)
            })
            .collect();
        Self {
            population_preamble: DEFAULT_PREAMBLE.to_string(),
            mappings,
        }
    }

    /// Reads one `*.toml` document per column from `dir`; an optional
    /// `preamble.txt` replaces the default preamble.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut mappings = BTreeMap::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "toml"))
            .collect();
        entries.sort();
        for p in entries {
            let m = ColumnToText::from_toml(&std::fs::read_to_string(&p)?)?;
            mappings.insert(m.column.clone(), m);
        }
        let preamble_path = dir.join("preamble.txt");
        let population_preamble = if preamble_path.is_file() {
            std::fs::read_to_string(preamble_path)?.trim().to_string()
        } else {
            DEFAULT_PREAMBLE.to_string()
        };
        let cb = Self {
            population_preamble,
            mappings,
        };
        cb.check_preamble()?;
        Ok(cb)
    }

    pub fn with_mapping(mut self, mapping: ColumnToText) -> Self {
        self.mappings.insert(mapping.column.clone(), mapping);
        self
    }

    pub fn with_preamble(mut self, preamble: impl Into<String>) -> Self {
        self.population_preamble = preamble.into();
        self
    }

    pub fn mapping(&self, column: &str) -> Result<&ColumnToText> {
        self.mappings
            .get(column)
            .ok_or_else(|| EncodeError::MissingMapping {
                column: column.into(),
            })
    }

    fn check_preamble(&self) -> Result<()> {
        if self.population_preamble.trim().is_empty() {
            return Err(EncodeError::Codebook("population preamble is empty".into()));
        }
        Ok(())
    }

    /// Every task feature has a mapping and the preamble is set.
    pub fn validate_task(&self, task: &TaskDefinition) -> Result<()> {
        self.check_preamble()?;
        for f in &task.feature_columns {
            self.mapping(f)?;
        }
        Ok(())
    }

    /// Every value of every task feature in `data` is renderable.
    pub fn validate_data(&self, task: &TaskDefinition, data: &TabularDataset) -> Result<()> {
        self.validate_task(task)?;
        for f in &task.feature_columns {
            let m = self.mapping(f)?;
            let col = data
                .column_index(f)
                .ok_or_else(|| EncodeError::MissingColumn { column: f.clone() })?;
            for row in 0..data.len() {
                let v = data.value(row, col);
                if !m.covers(v) {
                    // Re-run to get the precise error.
                    encode_value(m, v)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::BUNDLED_TASK_IDS;

    #[test]
    fn table_examples() {
        let cb = CodebookConfig::bundled();
        assert_eq!(
            encode_value(cb.mapping("AGEP").unwrap(), Value::Int(42)).unwrap(),
            "The individual's age is: 42 years old."
        );
        assert_eq!(
            encode_value(cb.mapping("SEX").unwrap(), Value::Code(2)).unwrap(),
            "The individual's sex is: Female."
        );
        assert_eq!(
            encode_value(cb.mapping("WKHP").unwrap(), Value::Int(40)).unwrap(),
            "The individual's usual number of hours worked per week is: 40 hours."
        );
        assert_eq!(
            encode_value(cb.mapping("PINCP").unwrap(), Value::Int(75000)).unwrap(),
            "The individual's total yearly income is: $75,000."
        );
        assert_eq!(
            encode_value(cb.mapping("DIS").unwrap(), Value::Code(1)).unwrap(),
            "The individual has a disability."
        );
        assert_eq!(
            encode_value(cb.mapping("ST").unwrap(), Value::Code(6)).unwrap(),
            "The individual lives in California."
        );
        assert_eq!(
            encode_value(cb.mapping("POBP").unwrap(), Value::Code(515)).unwrap(),
            "The individual's place of birth is: New Zealand."
        );
        assert_eq!(
            encode_value(cb.mapping("JWMNP").unwrap(), Value::Int(45)).unwrap(),
            "The individual takes 45 minutes travelling to work every day."
        );
        assert_eq!(
            encode_value(cb.mapping("POVPIP").unwrap(), Value::Int(150)).unwrap(),
            "The individual's income to poverty ratio is 150%."
        );
    }

    #[test]
    fn missing_cell_uses_configured_sentence() {
        let cb = CodebookConfig::bundled();
        let wkhp = cb.mapping("WKHP").unwrap();
        assert_eq!(
            encode_value(wkhp, Value::Missing).unwrap(),
            wkhp.missing.clone().unwrap()
        );
        let sex = cb.mapping("SEX").unwrap();
        assert_eq!(
            encode_value(sex, Value::Missing).unwrap(),
            "The individual's sex is not reported."
        );
    }

    #[test]
    fn unmapped_code_fails_loudly() {
        let cb = CodebookConfig::bundled();
        match encode_value(cb.mapping("OCCP").unwrap(), Value::Code(1)) {
            Err(EncodeError::UnmappedCode { column, code }) => {
                assert_eq!(column, "OCCP");
                assert_eq!(code, "1");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn currency_grouping() {
        assert_eq!(format_currency(0), "$0");
        assert_eq!(format_currency(999), "$999");
        assert_eq!(format_currency(50_000), "$50,000");
        assert_eq!(format_currency(1_234_567), "$1,234,567");
        assert_eq!(format_currency(-5_000), "-$5,000");
    }

    #[test]
    fn bundled_codebook_covers_all_bundled_tasks() {
        let cb = CodebookConfig::bundled();
        assert_eq!(cb.mappings.len(), 28);
        for id in BUNDLED_TASK_IDS {
            cb.validate_task(&TaskDefinition::bundled(id).unwrap()).unwrap();
        }
        assert!(cb.mapping("OCCP").unwrap().values.len() > 500);
    }

    #[test]
    fn categorical_sentences_never_contain_their_code() {
        let cb = CodebookConfig::bundled();
        for m in cb.mappings.values().filter(|m| m.is_categorical()) {
            for (&code, _) in &m.values {
                let s = encode_value(m, Value::Code(code)).unwrap();
                let bare = code.to_string();
                let leaked = s
                    .split(|c: char| !c.is_ascii_digit())
                    .any(|tok| tok == bare);
                assert!(!leaked, "{}: `{s}` contains code {bare}", m.column);
            }
        }
    }

    #[test]
    fn empty_preamble_rejected() {
        let task = TaskDefinition::bundled("ACSIncome").unwrap();
        let cb = CodebookConfig::bundled().with_preamble("  ");
        assert!(cb.validate_task(&task).is_err());
    }

    #[test]
    fn codebook_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = ColumnToText::categorical("SEX", "Gender is", [(1, "Male"), (2, "Female")]);
        std::fs::write(dir.path().join("SEX.toml"), toml::to_string(&m).unwrap()).unwrap();
        std::fs::write(dir.path().join("preamble.txt"), "Survey of 2019 residents.\n").unwrap();
        let cb = CodebookConfig::from_dir(dir.path()).unwrap();
        assert_eq!(cb.population_preamble, "Survey of 2019 residents.");
        assert_eq!(cb.mapping("SEX").unwrap(), &m);
    }
}
