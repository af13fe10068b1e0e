//! Delimited-text ingestion and the key=value dataset manifest.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use super::{binarize_labels, Graph};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

/// Column mapping for a node file / edge file pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    pub id_column: String,
    pub sensitive_column: String,
    pub label_column: String,
    /// Feature columns in order; `None` means every column except id and label.
    pub feature_columns: Option<Vec<String>>,
    pub delimiter: u8,
    pub edge_delimiter: u8,
    pub edge_header: bool,
}

impl DatasetSchema {
    pub fn new(sensitive: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id_column: "id".into(),
            sensitive_column: sensitive.into(),
            label_column: label.into(),
            feature_columns: None,
            delimiter: b',',
            edge_delimiter: b',',
            edge_header: false,
        }
    }
}

fn parse_delimiter(v: &str) -> Result<u8> {
    match v {
        "comma" | "," => Ok(b','),
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        "space" | " " => Ok(b' '),
        "semicolon" | ";" => Ok(b';'),
        "pipe" | "|" => Ok(b'|'),
        s if s.len() == 1 => Ok(s.as_bytes()[0]),
        s => Err(Error::Config(format!("unsupported delimiter {s:?}"))),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

/// Reads the node and edge files described by `schema`.
///
/// Nodes whose label is negative are kept but carry no ground truth; every
/// other label is binarized (values above 1 collapse to 1).
pub fn load_dataset(node_file: &Path, edge_file: &Path, schema: &DatasetSchema) -> Result<Graph> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(node_file)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", node_file.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Ingestion(format!("{}: {e}", node_file.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("node file has no column {name:?}")))
    };
    let id_col = col(&schema.id_column)?;
    let label_col = col(&schema.label_column)?;
    col(&schema.sensitive_column)?;
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != id_col && i != label_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let feature_cols: Vec<usize> = feature_names.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let sensitive_index = feature_names
        .iter()
        .position(|n| *n == schema.sensitive_column)
        .ok_or_else(|| Error::Schema("sensitive column must be one of the feature columns".into()))?;

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut data = Vec::new();
    let mut raw_labels: Vec<Option<i64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Ingestion(format!("{}: {e}", node_file.display())))?;
        let row = line + 2;
        let id = rec.get(id_col).unwrap_or("").to_owned();
        if ids.insert(id.clone(), raw_labels.len()).is_some() {
            return Err(Error::Ingestion(format!("duplicate node id {id:?} on line {row}")));
        }
        for (&c, name) in feature_cols.iter().zip(&feature_names) {
            let field = rec.get(c).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| {
                Error::Ingestion(format!("non-numeric value {field:?} in column {name:?} on line {row}"))
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion(format!(
                    "non-finite value in column {name:?} on line {row}"
                )));
            }
            data.push(v);
        }
        let lf = rec.get(label_col).unwrap_or("");
        let lv: f64 = lf
            .parse()
            .map_err(|_| Error::Ingestion(format!("non-numeric label {lf:?} on line {row}")))?;
        if lv.fract() != 0.0 {
            return Err(Error::Schema(format!("label {lf:?} on line {row} is not an integer")));
        }
        raw_labels.push((lv >= 0.0).then_some(lv as i64));
    }
    let n = raw_labels.len();
    let features = Matrix::new(n, feature_names.len(), data)?;
    for i in 0..n {
        let s = features.get(i, sensitive_index);
        if s != 0.0 && s != 1.0 {
            return Err(Error::Schema(format!(
                "sensitive column {:?} has non-binary value {s} (node {i})",
                schema.sensitive_column
            )));
        }
    }

    let known: Vec<i64> = raw_labels.iter().flatten().copied().collect();
    let mut binary = binarize_labels(&known)?.into_iter();
    let labels: Vec<Option<u8>> = raw_labels
        .iter()
        .map(|l| l.map(|_| binary.next().unwrap()))
        .collect();

    let mut erdr = csv::ReaderBuilder::new()
        .delimiter(schema.edge_delimiter)
        .has_headers(schema.edge_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(edge_file)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", edge_file.display())))?;
    let mut edges = Vec::new();
    for (line, rec) in erdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Ingestion(format!("{}: {e}", edge_file.display())))?;
        let fields: Vec<&str> = rec.iter().filter(|f| !f.is_empty()).collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::Ingestion(format!(
                "edge line {} has fewer than two ids",
                line + 1
            )));
        }
        let lookup = |f: &str| {
            ids.get(f).copied().ok_or_else(|| {
                Error::Ingestion(format!("edge line {} references unknown node {f:?}", line + 1))
            })
        };
        edges.push((lookup(fields[0])?, lookup(fields[1])?));
    }
    let adjacency = CsrMatrix::adjacency_from_edges(n, &edges)?;
    Graph::new(adjacency, features, sensitive_index, labels)?.with_feature_names(feature_names)
}

/// Parsed dataset manifest. Entries are `key=value`, separated by newlines
/// or commas; `#` starts a comment. Keys that are not dataset keys are kept
/// as configuration overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub schema: DatasetSchema,
    pub standardize: bool,
    pub overrides: BTreeMap<String, String>,
}

impl Manifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Ingestion(format!("cannot read manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            for entry in line.split(',') {
                let entry = entry.trim();
                if entry.is_empty() {
                    continue;
                }
                let (k, v) = entry
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("manifest entry {entry:?} is not key=value")))?;
                kv.insert(k.trim().to_owned(), v.trim().to_owned());
            }
        }
        let mut take = |k: &str| kv.remove(k);
        let required = |v: Option<String>, k: &str| {
            v.ok_or_else(|| Error::Config(format!("manifest is missing {k:?}")))
        };
        let nodes = base_dir.join(required(take("nodes"), "nodes")?);
        let edges = base_dir.join(required(take("edges"), "edges")?);
        let mut schema = DatasetSchema::new(
            required(take("sensitive"), "sensitive")?,
            required(take("label"), "label")?,
        );
        if let Some(id) = take("id") {
            schema.id_column = id;
        }
        if let Some(d) = take("delimiter") {
            schema.delimiter = parse_delimiter(&d)?;
            schema.edge_delimiter = schema.delimiter;
        }
        if let Some(d) = take("edge_delimiter") {
            schema.edge_delimiter = parse_delimiter(&d)?;
        }
        if let Some(h) = take("edge_header") {
            schema.edge_header = parse_bool("edge_header", &h)?;
        }
        if let Some(f) = take("features") {
            schema.feature_columns = Some(
                f.split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect(),
            );
        }
        let standardize = match take("standardize") {
            Some(v) => parse_bool("standardize", &v)?,
            None => false,
        };
        Ok(Self {
            nodes,
            edges,
            schema,
            standardize,
            overrides: kv,
        })
    }
}

pub fn load_manifest_dataset(m: &Manifest) -> Result<Graph> {
    let g = load_dataset(&m.nodes, &m.edges, &m.schema)?;
    Ok(if m.standardize { g.standardized() } else { g })
}
