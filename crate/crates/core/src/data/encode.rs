use std::collections::HashMap;
use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, DatasetSchema};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Counts reported by [`load_dataset`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub rows_read: usize,
    pub rows_kept: usize,
    /// Rows with a missing value in a used column.
    pub dropped_missing: usize,
    /// Rows rejected by `allowed`/`range` filters or an unmapped sensitive value.
    pub dropped_filtered: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureBlock {
    Categorical {
        name: String,
        categories: Vec<String>,
        offset: usize,
    },
    /// Min-max scaled numeric column; `min`/`max` are the raw bounds that map
    /// to 0 and 1.
    Numeric {
        name: String,
        offset: usize,
        min: f64,
        max: f64,
    },
}

impl FeatureBlock {
    pub fn name(&self) -> &str {
        match self {
            FeatureBlock::Categorical { name, .. } | FeatureBlock::Numeric { name, .. } => name,
        }
    }

    pub fn offset(&self) -> usize {
        match self {
            FeatureBlock::Categorical { offset, .. } | FeatureBlock::Numeric { offset, .. } => {
                *offset
            }
        }
    }

    pub fn width(&self) -> usize {
        match self {
            FeatureBlock::Categorical { categories, .. } => categories.len(),
            FeatureBlock::Numeric { .. } => 1,
        }
    }
}

/// Column layout of the encoded feature matrix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub blocks: Vec<FeatureBlock>,
}

impl FeatureLayout {
    pub fn width(&self) -> usize {
        self.blocks.iter().map(FeatureBlock::width).sum()
    }

    /// `name` for numerics, `name=category` for one-hot columns.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for b in &self.blocks {
            match b {
                FeatureBlock::Categorical {
                    name, categories, ..
                } => names.extend(categories.iter().map(|c| format!("{name}={c}"))),
                FeatureBlock::Numeric { name, .. } => names.push(name.clone()),
            }
        }
        names
    }

    /// Rebuilds a layout from encoded feature names. Numeric bounds are unknown
    /// and reported as `[0, 1]`.
    pub fn from_feature_names(names: &[String]) -> Self {
        let mut blocks: Vec<FeatureBlock> = Vec::new();
        for (offset, full) in names.iter().enumerate() {
            match full.split_once('=') {
                Some((name, cat)) => {
                    if let Some(FeatureBlock::Categorical {
                        name: prev,
                        categories,
                        ..
                    }) = blocks.last_mut()
                    {
                        if prev == name {
                            categories.push(cat.to_string());
                            continue;
                        }
                    }
                    blocks.push(FeatureBlock::Categorical {
                        name: name.to_string(),
                        categories: vec![cat.to_string()],
                        offset,
                    });
                }
                None => blocks.push(FeatureBlock::Numeric {
                    name: full.clone(),
                    offset,
                    min: 0.0,
                    max: 1.0,
                }),
            }
        }
        FeatureLayout { blocks }
    }
}

/// Encoded tabular data: features `x`, binary label `y`, binary sensitive
/// attribute `s` (1 = disadvantaged group).
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDataset<T> {
    pub x: Array2<T>,
    pub y: Vec<u8>,
    pub s: Vec<u8>,
    /// Row index in the loaded file (after dropping), for provenance.
    pub row_ids: Vec<usize>,
    pub layout: Arc<FeatureLayout>,
}

impl<T: Scalar> EncodedDataset<T> {
    pub fn new(x: Array2<T>, y: Vec<u8>, s: Vec<u8>, layout: Arc<FeatureLayout>) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || s.len() != n {
            return Err(Error::Parameter(format!(
                "row counts differ: x {n}, y {}, s {}",
                y.len(),
                s.len()
            )));
        }
        if y.iter().chain(&s).any(|&v| v > 1) {
            return Err(Error::Parameter("labels and sensitive values must be 0/1".into()));
        }
        if layout.width() != x.ncols() {
            return Err(Error::Parameter(format!(
                "layout describes {} features, x has {}",
                layout.width(),
                x.ncols()
            )));
        }
        Ok(EncodedDataset {
            x,
            y,
            s,
            row_ids: (0..n).collect(),
            layout,
        })
    }

    /// Dataset with a single numeric block per column; handy for synthetic data.
    pub fn from_parts(x: Array2<T>, y: Vec<u8>, s: Vec<u8>) -> Result<Self> {
        let layout = FeatureLayout {
            blocks: (0..x.ncols())
                .map(|i| FeatureBlock::Numeric {
                    name: format!("x{i}"),
                    offset: i,
                    min: 0.0,
                    max: 1.0,
                })
                .collect(),
        };
        Self::new(x, y, s, Arc::new(layout))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.layout.feature_names()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        EncodedDataset {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            s: rows.iter().map(|&i| self.s[i]).collect(),
            row_ids: rows.iter().map(|&i| self.row_ids[i]).collect(),
            layout: Arc::clone(&self.layout),
        }
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.n_features() != other.n_features() {
            return Err(Error::InputShape {
                expected: self.n_features(),
                got: other.n_features(),
            });
        }
        let x = ndarray::concatenate(Axis(0), &[self.x.view(), other.x.view()])
            .expect("column counts checked");
        Ok(EncodedDataset {
            x,
            y: self.y.iter().chain(&other.y).copied().collect(),
            s: self.s.iter().chain(&other.s).copied().collect(),
            row_ids: self.row_ids.iter().chain(&other.row_ids).copied().collect(),
            layout: Arc::clone(&self.layout),
        })
    }

    /// Row counts per `(s, y)` cell, indexed `[s][y]`.
    pub fn cell_counts(&self) -> [[usize; 2]; 2] {
        let mut c = [[0; 2]; 2];
        for (&s, &y) in self.s.iter().zip(&self.y) {
            c[s as usize][y as usize] += 1;
        }
        c
    }

    /// Recovers the categorical label of every categorical block and the raw
    /// value of every numeric block for one row.
    pub fn decode_row(&self, row: usize) -> Vec<(String, String)> {
        let x = self.x.row(row);
        self.layout
            .blocks
            .iter()
            .map(|b| match b {
                FeatureBlock::Categorical {
                    name,
                    categories,
                    offset,
                } => {
                    let hot = (0..categories.len())
                        .max_by(|&a, &b| {
                            x[offset + a]
                                .partial_cmp(&x[offset + b])
                                .unwrap_or(std::cmp::Ordering::Equal)
                        })
                        .unwrap_or(0);
                    (name.clone(), categories[hot].clone())
                }
                FeatureBlock::Numeric {
                    name,
                    offset,
                    min,
                    max,
                } => {
                    let raw = min + x[*offset].as_f64() * (max - min);
                    (name.clone(), raw.to_string())
                }
            })
            .collect()
    }

    /// Writes the dataset as CSV: one column per encoded feature (named as in
    /// [`FeatureLayout::feature_names`]), then `__label`, `__sensitive`,
    /// `__row_id`. Values use shortest round-trip formatting.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = self.feature_names();
        header.extend(["__label", "__sensitive", "__row_id"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.y[i].to_string());
            rec.push(self.s[i].to_string());
            rec.push(self.row_ids[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header.len() < 3 || header[header.len() - 3..] != ["__label", "__sensitive", "__row_id"] {
            return Err(Error::Schema(format!(
                "{}: not an encoded dataset file",
                path.display()
            )));
        }
        let width = header.len() - 3;
        let (mut xs, mut y, mut s, mut ids) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let num = |j: usize| -> Result<f64> {
                rec[j].parse::<f64>().map_err(|_| Error::RowParse {
                    line,
                    column: header[j].clone(),
                    value: rec[j].to_string(),
                })
            };
            for j in 0..width {
                xs.push(T::of(num(j)?));
            }
            y.push(num(width)? as u8);
            s.push(num(width + 1)? as u8);
            ids.push(num(width + 2)? as usize);
        }
        let n = y.len();
        let x = Array2::from_shape_vec((n, width), xs).expect("rows have fixed width");
        let layout = FeatureLayout::from_feature_names(&header[..width]);
        let mut data = Self::new(x, y, s, Arc::new(layout))?;
        data.row_ids = ids;
        Ok(data)
    }
}

/// Reads a CSV file and encodes it according to `schema`.
pub fn load_dataset<T: Scalar>(
    path: impl AsRef<Path>,
    schema: &DatasetSchema,
) -> Result<(EncodedDataset<T>, LoadStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Option<Vec<String>> = if schema.has_header {
        Some(reader.headers()?.iter().map(String::from).collect())
    } else {
        None
    };
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        records.push((line, rec.iter().map(String::from).collect::<Vec<_>>()));
    }
    encode_records(header.as_deref(), &records, schema)
}

struct UsedColumn<'a> {
    spec: &'a super::schema::ColumnSpec,
    position: usize,
}

/// Encodes already-split records. `header` is required when the schema says
/// the file has one; otherwise columns are matched by position. Each record
/// carries its source line number for error messages.
pub fn encode_records<T: Scalar>(
    header: Option<&[String]>,
    records: &[(u64, Vec<String>)],
    schema: &DatasetSchema,
) -> Result<(EncodedDataset<T>, LoadStats)> {
    schema.validate()?;
    let positions: Vec<usize> = match header {
        Some(h) => schema
            .columns
            .iter()
            .map(|c| {
                h.iter()
                    .position(|name| name.trim() == c.name)
                    .ok_or_else(|| Error::Schema(format!("unknown column `{}`", c.name)))
            })
            .collect::<Result<_>>()?,
        None if schema.has_header => {
            return Err(Error::Schema("schema expects a header row".into()))
        }
        None => (0..schema.columns.len()).collect(),
    };
    let used: Vec<UsedColumn> = schema
        .columns
        .iter()
        .zip(positions)
        .filter(|(c, _)| {
            c.kind != ColumnKind::Drop
                || c.has_filter()
                || c.name == schema.label.column
                || c.name == schema.sensitive.column
        })
        .map(|(spec, position)| UsedColumn { spec, position })
        .collect();

    let mut stats = LoadStats::default();
    let mut kept: Vec<Vec<String>> = Vec::new();
    let mut numerics: Vec<Vec<f64>> = Vec::new();
    'rows: for (line, record) in records {
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        stats.rows_read += 1;
        let mut cleaned = Vec::with_capacity(used.len());
        for col in &used {
            let raw = record.get(col.position).map_or("", |v| v.trim());
            let value = col
                .spec
                .recode
                .as_ref()
                .and_then(|m| m.get(raw))
                .map_or(raw, String::as_str);
            if schema.missing_values.iter().any(|m| m == value) {
                stats.dropped_missing += 1;
                continue 'rows;
            }
            cleaned.push(value.to_string());
        }
        let mut row_numerics = Vec::new();
        let mut filtered = false;
        for (col, value) in used.iter().zip(&cleaned) {
            let spec = col.spec;
            let parse = || {
                value.parse::<f64>().map_err(|_| Error::RowParse {
                    line: *line,
                    column: spec.name.clone(),
                    value: value.clone(),
                })
            };
            if spec.kind == ColumnKind::Numeric {
                row_numerics.push(parse()?);
            }
            if let Some(allowed) = &spec.allowed {
                filtered |= !allowed.iter().any(|a| a == value);
            }
            if let Some([lo, hi]) = spec.range {
                let v = parse()?;
                filtered |= !(lo..=hi).contains(&v);
            }
            if spec.name == schema.sensitive.column {
                filtered |= *value != schema.sensitive.privileged
                    && *value != schema.sensitive.disadvantaged;
            }
        }
        if filtered {
            stats.dropped_filtered += 1;
            continue;
        }
        kept.push(cleaned);
        numerics.push(row_numerics);
    }
    stats.rows_kept = kept.len();

    // Feature blocks in schema order; categories in first-appearance order.
    let mut blocks = Vec::new();
    let mut block_sources = Vec::new();
    let mut offset = 0;
    let mut numeric_idx = 0;
    for (j, col) in used.iter().enumerate() {
        let spec = col.spec;
        let is_label = spec.name == schema.label.column;
        let is_sensitive = spec.name == schema.sensitive.column;
        let numeric_slot = (spec.kind == ColumnKind::Numeric).then(|| {
            numeric_idx += 1;
            numeric_idx - 1
        });
        if is_label || (is_sensitive && !schema.sensitive.include_as_feature) {
            continue;
        }
        match spec.kind {
            ColumnKind::Drop => {}
            ColumnKind::Categorical => {
                let mut categories: Vec<String> = Vec::new();
                for row in &kept {
                    if !categories.contains(&row[j]) {
                        categories.push(row[j].clone());
                    }
                }
                let width = categories.len();
                blocks.push(FeatureBlock::Categorical {
                    name: spec.name.clone(),
                    categories,
                    offset,
                });
                block_sources.push(j);
                offset += width;
            }
            ColumnKind::Numeric => {
                let slot = numeric_slot.unwrap();
                let (min, max) = numerics.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[slot]), hi.max(r[slot]))
                });
                blocks.push(FeatureBlock::Numeric {
                    name: spec.name.clone(),
                    offset,
                    min: if min.is_finite() { min } else { 0.0 },
                    max: if max.is_finite() { max } else { 1.0 },
                });
                block_sources.push(slot);
                offset += 1;
            }
        }
    }

    let n = kept.len();
    let mut x = Array2::<T>::zeros((n, offset));
    for (block, &src) in blocks.iter().zip(&block_sources) {
        match block {
            FeatureBlock::Categorical {
                categories, offset, ..
            } => {
                let index: HashMap<&str, usize> = categories
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.as_str(), i))
                    .collect();
                for (i, row) in kept.iter().enumerate() {
                    x[[i, offset + index[row[src].as_str()]]] = T::one();
                }
            }
            FeatureBlock::Numeric {
                offset, min, max, ..
            } => {
                for (i, r) in numerics.iter().enumerate() {
                    x[[i, *offset]] = T::of(min_max(r[src], *min, *max));
                }
            }
        }
    }

    let label_idx = used
        .iter()
        .position(|c| c.spec.name == schema.label.column)
        .unwrap();
    let sens_idx = used
        .iter()
        .position(|c| c.spec.name == schema.sensitive.column)
        .unwrap();
    let y = kept
        .iter()
        .map(|r| u8::from(r[label_idx] == schema.label.positive))
        .collect();
    let s = kept
        .iter()
        .map(|r| u8::from(r[sens_idx] == schema.sensitive.disadvantaged))
        .collect();
    let data = EncodedDataset::new(x, y, s, Arc::new(FeatureLayout { blocks }))?;
    Ok((data, stats))
}

pub(crate) fn min_max(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((v - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{ColumnSpec, LabelSpec, SensitiveSpec};

    fn schema(include_sensitive: bool) -> DatasetSchema {
        DatasetSchema {
            name: "toy".into(),
            has_header: true,
            delimiter: ',',
            missing_values: vec!["?".into(), String::new()],
            hidden_width: None,
            output_head: None,
            label: LabelSpec {
                column: "y".into(),
                positive: "yes".into(),
            },
            sensitive: SensitiveSpec {
                column: "g".into(),
                privileged: "m".into(),
                disadvantaged: "f".into(),
                include_as_feature: include_sensitive,
            },
            columns: vec![
                ColumnSpec::new("color", ColumnKind::Categorical),
                ColumnSpec::new("age", ColumnKind::Numeric),
                ColumnSpec::new("g", ColumnKind::Categorical),
                ColumnSpec::new("junk", ColumnKind::Drop),
                ColumnSpec::new("y", ColumnKind::Categorical),
            ],
        }
    }

    fn header() -> Vec<String> {
        ["color", "age", "g", "junk", "y"].map(String::from).to_vec()
    }

    fn rec(line: u64, fields: &[&str]) -> (u64, Vec<String>) {
        (line, fields.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn single_row_one_hot() {
        let rows = vec![rec(2, &["red", "30", "f", "", "yes"])];
        let (d, stats) = encode_records::<f64>(Some(&header()), &rows, &schema(true)).unwrap();
        assert_eq!(stats.rows_kept, 1);
        assert_eq!(d.feature_names(), vec!["color=red", "age", "g=f"]);
        assert_eq!(d.y, vec![1]);
        assert_eq!(d.s, vec![1]);
    }

    #[test]
    fn cardinality_three_has_exactly_one_hot_entry() {
        let rows = vec![
            rec(2, &["red", "30", "f", "", "yes"]),
            rec(3, &["blue", "40", "m", "", "no"]),
            rec(4, &["green", "50", "m", "", "no"]),
        ];
        let (d, _) = encode_records::<f64>(Some(&header()), &rows, &schema(false)).unwrap();
        assert_eq!(d.feature_names(), vec!["color=red", "color=blue", "color=green", "age"]);
        for i in 0..3 {
            let hot: f64 = d.x.row(i).iter().take(3).sum();
            assert_eq!(hot, 1.0);
        }
        assert_eq!(d.x.column(3).to_vec(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn sensitive_feature_flag_controls_inclusion() {
        let rows = vec![
            rec(2, &["red", "30", "f", "", "yes"]),
            rec(3, &["blue", "40", "m", "", "no"]),
        ];
        let (with, _) = encode_records::<f64>(Some(&header()), &rows, &schema(true)).unwrap();
        let (without, _) = encode_records::<f64>(Some(&header()), &rows, &schema(false)).unwrap();
        assert!(with.feature_names().iter().any(|n| n.starts_with("g=")));
        assert!(!without.feature_names().iter().any(|n| n.starts_with("g=")));
        assert_eq!(with.s, without.s);
        assert!(!with.feature_names().iter().any(|n| n.starts_with("y")));
    }

    #[test]
    fn drops_missing_and_unmapped_sensitive_rows() {
        let rows = vec![
            rec(2, &["red", "?", "f", "", "yes"]),
            rec(3, &["blue", "40", "x", "", "no"]),
            rec(4, &["blue", "41", "m", "", "no"]),
            rec(5, &["", "", "", "", ""]),
        ];
        let (d, stats) = encode_records::<f64>(Some(&header()), &rows, &schema(true)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(stats.rows_read, 3);
        assert_eq!(stats.dropped_missing, 1);
        assert_eq!(stats.dropped_filtered, 1);
    }

    #[test]
    fn non_numeric_value_reports_line() {
        let rows = vec![rec(7, &["red", "old", "f", "", "yes"])];
        let err = encode_records::<f64>(Some(&header()), &rows, &schema(true)).unwrap_err();
        assert!(matches!(err, Error::RowParse { line: 7, .. }), "{err}");
    }

    #[test]
    fn unknown_column_is_schema_error() {
        let mut h = header();
        h[1] = "years".into();
        let err = encode_records::<f64>(Some(&h), &[], &schema(true)).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }
}
