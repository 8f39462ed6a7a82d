use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Numeric,
    /// Read (and possibly filtered on) but never encoded.
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Value substitutions applied after trimming, before anything else.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recode: Option<BTreeMap<String, String>>,
    /// Rows whose value is not listed are filtered out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed: Option<Vec<String>>,
    /// Rows whose numeric value falls outside `[lo, hi]` are filtered out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
            recode: None,
            allowed: None,
            range: None,
        }
    }

    pub(crate) fn has_filter(&self) -> bool {
        self.allowed.is_some() || self.range.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub column: String,
    /// Cleaned value mapped to Y = 1; every other value maps to Y = 0.
    pub positive: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitiveSpec {
    pub column: String,
    /// Value mapped to S = 0.
    pub privileged: String,
    /// Value mapped to S = 1.
    pub disadvantaged: String,
    /// Whether the sensitive attribute is also one-hot encoded into X.
    #[serde(default = "default_true")]
    pub include_as_feature: bool,
}

fn default_true() -> bool {
    true
}

fn default_delimiter() -> char {
    ','
}

fn default_missing() -> Vec<String> {
    vec!["?".into(), String::new()]
}

/// Describes how a CSV file maps onto features, label and sensitive
/// attribute. Stored as TOML; see `schemas/*.toml` for the shipped ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub name: String,
    #[serde(default = "default_true")]
    pub has_header: bool,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Tokens treated as missing values (compared after trimming).
    #[serde(default = "default_missing")]
    pub missing_values: Vec<String>,
    /// Hidden units per layer for the reference model on this dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_width: Option<usize>,
    /// `softmax` or `linear`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_head: Option<crate::nn::OutputHead>,
    pub label: LabelSpec,
    pub sensitive: SensitiveSpec,
    pub columns: Vec<ColumnSpec>,
}

const ADULT: &str = include_str!("../../schemas/adult.toml");
const COMPAS: &str = include_str!("../../schemas/compas.toml");
const GERMAN: &str = include_str!("../../schemas/german.toml");

impl DatasetSchema {
    pub const BUILTIN: [&'static str; 3] = ["adult", "compas", "german"];

    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "adult" | "census" => ADULT,
            "compas" => COMPAS,
            "german" | "credit" => GERMAN,
            other => return Err(Error::Schema(format!("no built-in schema named `{other}`"))),
        };
        Self::from_toml_str(text)
    }

    /// Built-in name or path to a TOML schema file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if path.extension().is_some_and(|e| e == "toml") || path.exists() {
            Self::from_file(path)
        } else {
            Self::builtin(name_or_path)
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: DatasetSchema =
            toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("column `{}` listed twice", c.name)));
            }
            if c.range.is_some_and(|[lo, hi]| !(lo <= hi)) {
                return Err(Error::Schema(format!("column `{}` has an empty range", c.name)));
            }
        }
        if self.column(&self.label.column).is_none() {
            return Err(Error::Schema(format!(
                "label column `{}` is not among the columns",
                self.label.column
            )));
        }
        match self.column(&self.sensitive.column) {
            None => {
                return Err(Error::Schema(format!(
                    "sensitive column `{}` is not among the columns",
                    self.sensitive.column
                )))
            }
            Some(c) if c.kind != ColumnKind::Categorical => {
                return Err(Error::Schema(format!(
                    "sensitive column `{}` must be categorical",
                    c.name
                )))
            }
            _ => {}
        }
        if self.label.column == self.sensitive.column {
            return Err(Error::Schema("label and sensitive column must differ".into()));
        }
        if self.sensitive.privileged == self.sensitive.disadvantaged {
            return Err(Error::Schema(
                "privileged and disadvantaged values must differ".into(),
            ));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Schema("delimiter must be a single ASCII character".into()));
        }
        Ok(())
    }
}
