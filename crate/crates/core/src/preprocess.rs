//! CSV ingestion for tabular fairness datasets.
//!
//! A [`PreprocessSpec`] is a `key = value` file naming the label column and
//! its positive values, the sensitive column and how it maps to the
//! underprivileged group `s = 0`, and which columns to drop, one-hot encode
//! or standardize. Categorical levels are collected from every row; numeric
//! means and standard deviations come from the training rows only. The
//! group is not a feature column here because the scorers append it.
//!
//! Columns the spec does not name are ignored.
//!
//! The dataset CSV format written by [`write_dataset_csv`] is one column
//! per feature followed by `label` and `group`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::config::KvConfig;
use crate::dataset::{complement, stratified_test_rows, LabeledDataset, PerSubgroup, Subgroup};
use crate::error::{invalid, Error, Result};

/// How raw sensitive values map to the underprivileged group.
#[derive(Debug, Clone, PartialEq)]
pub enum SensitiveRule {
    /// Listed values are `s = 0`.
    Values(Vec<String>),
    /// Numeric values `<= bound` are `s = 0`.
    AtMost(f64),
}

/// Specs for the four benchmark tables, embedded at build time.
pub const BUILTIN_SPECS: [(&str, &str); 4] = [
    ("adult", include_str!("../specs/adult.spec")),
    ("bank", include_str!("../specs/bank.spec")),
    ("compas", include_str!("../specs/compas.spec")),
    ("german", include_str!("../specs/german.spec")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSpec {
    pub name: String,
    pub label_column: String,
    pub positive_labels: Vec<String>,
    pub negative_labels: Vec<String>,
    pub sensitive_column: String,
    pub underprivileged: SensitiveRule,
    /// When set, rows whose sensitive value is in neither group are dropped.
    pub privileged: Option<Vec<String>>,
    pub dropped_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub numeric_columns: Vec<String>,
    pub test_fraction: f64,
    /// Field separator of the raw file.
    pub delimiter: u8,
}

fn nonempty(cfg: &KvConfig, key: &'static str) -> Result<Vec<String>> {
    let v = cfg.list(key);
    if v.is_empty() {
        return Err(invalid(key, "must list at least one value"));
    }
    Ok(v)
}

impl PreprocessSpec {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let underprivileged = match (cfg.get("underprivileged"), cfg.parse_value::<f64>("underprivileged_max")?) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "underprivileged",
                    "give either underprivileged or underprivileged_max, not both",
                ))
            }
            (Some(_), None) => SensitiveRule::Values(nonempty(cfg, "underprivileged")?),
            (None, Some(b)) => SensitiveRule::AtMost(b),
            (None, None) => return Err(invalid("underprivileged", "missing")),
        };
        let spec = Self {
            name: cfg.get("name").unwrap_or("dataset").to_string(),
            label_column: cfg.require("label_column")?.to_string(),
            positive_labels: nonempty(cfg, "positive_label")?,
            negative_labels: nonempty(cfg, "negative_label")?,
            sensitive_column: cfg.require("sensitive_column")?.to_string(),
            underprivileged,
            privileged: cfg.contains("privileged").then(|| cfg.list("privileged")),
            dropped_columns: cfg.list("dropped_columns"),
            categorical_columns: cfg.list("categorical_columns"),
            numeric_columns: cfg.list("numeric_columns"),
            test_fraction: cfg.parse_value("test_fraction")?.unwrap_or(0.3),
            delimiter: match cfg.get("delimiter") {
                None => b',',
                Some(d) if d.len() == 1 => d.as_bytes()[0],
                Some(d) => return Err(invalid("delimiter", format!("`{d}` is not one byte"))),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_config(&KvConfig::from_file(path)?)
    }

    /// One of the shipped specs by name, if it exists.
    pub fn builtin(name: &str) -> Option<Result<Self>> {
        let text = BUILTIN_SPECS.iter().find(|(n, _)| *n == name)?.1;
        Some(KvConfig::parse(text, name).and_then(|cfg| Self::from_config(&cfg)))
    }

    fn validate(&self) -> Result<()> {
        for special in [&self.label_column, &self.sensitive_column] {
            if self.dropped_columns.contains(special) {
                return Err(invalid("dropped_columns", format!("`{special}` cannot be dropped")));
            }
            if self.categorical_columns.contains(special) || self.numeric_columns.contains(special) {
                return Err(invalid(
                    "feature columns",
                    format!("`{special}` is the label or sensitive column"),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for c in self
            .dropped_columns
            .iter()
            .chain(&self.categorical_columns)
            .chain(&self.numeric_columns)
        {
            if !seen.insert(c) {
                return Err(invalid("columns", format!("`{c}` is listed twice")));
            }
        }
        if self.positive_labels.iter().any(|p| self.negative_labels.contains(p)) {
            return Err(invalid("positive_label", "overlaps negative_label"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(invalid("test_fraction", format!("{} not in (0, 1)", self.test_fraction)));
        }
        Ok(())
    }

    fn named_columns(&self) -> impl Iterator<Item = &String> {
        [&self.label_column, &self.sensitive_column]
            .into_iter()
            .chain(&self.dropped_columns)
            .chain(&self.categorical_columns)
            .chain(&self.numeric_columns)
    }
}

/// Header plus string cells of a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read(path: &Path) -> Result<Self> {
        Self::read_with(path, b',')
    }

    pub fn read_with(path: &Path, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
                path: self.path.clone(),
            })
    }

    fn bad(&self, row: usize, reason: String) -> Error {
        // +2: one for the header, one for 1-based numbering.
        Error::BadValue {
            path: self.path.clone(),
            row: row + 2,
            reason,
        }
    }
}

/// Label, group and kept-row mapping of a table under a spec.
struct Targets {
    rows: Vec<usize>,
    labels: Vec<u8>,
    groups: Vec<u8>,
}

fn map_targets(table: &RawTable, spec: &PreprocessSpec) -> Result<Targets> {
    for c in spec.named_columns() {
        table.column(c)?;
    }
    let yc = table.column(&spec.label_column)?;
    let sc = table.column(&spec.sensitive_column)?;
    let mut out = Targets {
        rows: Vec::new(),
        labels: Vec::new(),
        groups: Vec::new(),
    };
    for (i, row) in table.rows.iter().enumerate() {
        let sv = &row[sc];
        let s = match &spec.underprivileged {
            SensitiveRule::Values(vals) if vals.contains(sv) => 0,
            SensitiveRule::Values(_) => match &spec.privileged {
                Some(p) if !p.contains(sv) => continue,
                _ => 1,
            },
            SensitiveRule::AtMost(bound) => {
                let v: f64 = sv
                    .parse()
                    .map_err(|_| table.bad(i, format!("sensitive value `{sv}` is not numeric")))?;
                u8::from(v > *bound)
            }
        };
        let yv = &row[yc];
        let y = if spec.positive_labels.contains(yv) {
            1
        } else if spec.negative_labels.contains(yv) {
            0
        } else {
            return Err(table.bad(i, format!("label value `{yv}` is not mapped")));
        };
        out.rows.push(i);
        out.labels.push(y);
        out.groups.push(s);
    }
    if out.rows.is_empty() {
        return Err(Error::InvalidDataset(format!("{}: no data rows", table.path.display())));
    }
    Ok(out)
}

/// Column-wise encoding fitted on a table.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    /// `(column index, sorted levels)`.
    pub categorical: Vec<(usize, Vec<String>)>,
    /// `(column index, mean, std)`; a zero std is stored as 1.
    pub numeric: Vec<(usize, f64, f64)>,
    pub feature_names: Vec<String>,
}

impl Encoder {
    /// Levels from `all_rows`, standardization statistics from `train_rows`.
    pub fn fit(
        table: &RawTable,
        spec: &PreprocessSpec,
        all_rows: &[usize],
        train_rows: &[usize],
    ) -> Result<Self> {
        let mut categorical = Vec::new();
        let mut names = Vec::new();
        for c in &spec.categorical_columns {
            let j = table.column(c)?;
            let levels: BTreeSet<&String> = all_rows.iter().map(|&i| &table.rows[i][j]).collect();
            let levels: Vec<String> = levels.into_iter().cloned().collect();
            names.extend(levels.iter().map(|l| format!("{c}={l}")));
            categorical.push((j, levels));
        }
        let mut numeric = Vec::new();
        for c in &spec.numeric_columns {
            let j = table.column(c)?;
            let mut vals = Vec::with_capacity(train_rows.len());
            for &i in train_rows {
                vals.push(parse_numeric(table, i, j)?);
            }
            let n = vals.len().max(1) as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            names.push(c.clone());
            numeric.push((j, mean, std));
        }
        Ok(Self {
            categorical,
            numeric,
            feature_names: names,
        })
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    fn encode(&self, table: &RawTable, rows: &[usize]) -> Result<Array2<f64>> {
        let mut x = Array2::zeros((rows.len(), self.width()));
        for (r, &i) in rows.iter().enumerate() {
            let mut k = 0;
            for (j, levels) in &self.categorical {
                let v = &table.rows[i][*j];
                match levels.binary_search(v) {
                    Ok(pos) => x[[r, k + pos]] = 1.0,
                    Err(_) => return Err(table.bad(i, format!("unseen level `{v}`"))),
                }
                k += levels.len();
            }
            for &(j, mean, std) in &self.numeric {
                x[[r, k]] = (parse_numeric(table, i, j)? - mean) / std;
                k += 1;
            }
        }
        Ok(x)
    }
}

fn parse_numeric(table: &RawTable, i: usize, j: usize) -> Result<f64> {
    let v = &table.rows[i][j];
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(table.bad(
            i,
            format!("value `{v}` in numeric column `{}` is not a number", table.header[j]),
        )),
    }
}

fn build(table: &RawTable, enc: &Encoder, t: &Targets, pick: &[usize]) -> Result<LabeledDataset> {
    let rows: Vec<usize> = pick.iter().map(|&k| t.rows[k]).collect();
    let x = enc.encode(table, &rows)?;
    LabeledDataset::new(
        x,
        pick.iter().map(|&k| t.labels[k]).collect(),
        pick.iter().map(|&k| t.groups[k]).collect(),
        enc.feature_names.clone(),
    )
}

/// Loads a whole file, standardizing with statistics of all kept rows.
pub fn load_csv(path: &Path, spec: &PreprocessSpec) -> Result<LabeledDataset> {
    let table = RawTable::read_with(path, spec.delimiter)?;
    let t = map_targets(&table, spec)?;
    let all: Vec<usize> = (0..t.rows.len()).collect();
    let enc = Encoder::fit(&table, spec, &t.rows, &t.rows)?;
    build(&table, &enc, &t, &all)
}

/// Loads a file and splits it into `(train, test)` with an exact-count
/// stratified split; numeric statistics come from the training rows.
pub fn load_csv_split(path: &Path, spec: &PreprocessSpec, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let table = RawTable::read_with(path, spec.delimiter)?;
    let t = map_targets(&table, spec)?;
    let mut strata = PerSubgroup::<Vec<usize>>::default();
    for (k, (&y, &s)) in t.labels.iter().zip(&t.groups).enumerate() {
        strata[Subgroup::new(y, s)].push(k);
    }
    let test = stratified_test_rows(&strata, spec.test_fraction, seed)?;
    let train = complement(t.rows.len(), &test);
    let train_raw: Vec<usize> = train.iter().map(|&k| t.rows[k]).collect();
    let enc = Encoder::fit(&table, spec, &t.rows, &train_raw)?;
    Ok((build(&table, &enc, &t, &train)?, build(&table, &enc, &t, &test)?))
}

/// Writes features, `label` and `group` with round-trip float formatting.
pub fn write_dataset_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.extend(["label", "group"]);
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(ds.labels()[i].to_string());
        rec.push(ds.groups()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format of [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<LabeledDataset> {
    let table = RawTable::read(path)?;
    let yc = table.column("label")?;
    let sc = table.column("group")?;
    let feat: Vec<usize> = (0..table.header.len()).filter(|&j| j != yc && j != sc).collect();
    let n = table.rows.len();
    if n == 0 {
        return Err(Error::InvalidDataset(format!("{}: no data rows", path.display())));
    }
    let mut x = Array2::zeros((n, feat.len()));
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        for (k, &j) in feat.iter().enumerate() {
            x[[i, k]] = parse_numeric(&table, i, j)?;
        }
        for (col, out) in [(yc, &mut labels), (sc, &mut groups)] {
            match table.rows[i][col].as_str() {
                "0" => out.push(0),
                "1" => out.push(1),
                other => return Err(table.bad(i, format!("`{other}` is not 0 or 1"))),
            }
        }
    }
    let names = feat.iter().map(|&j| table.header[j].clone()).collect();
    LabeledDataset::new(x, labels, groups, names)
}

/// Writes a `key = value` sidecar.
pub fn write_sidecar(path: &Path, cfg: &KvConfig) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(cfg.render().as_bytes())?;
    Ok(())
}
