//! Labeled feature tables: ingestion from the class-directory layout,
//! persistence, stratified splits and correlation analysis.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{self, PolarityMode};
use crate::matrix::Matrix;
use crate::morphology::{self, Connectivity, FeatureVector};

pub const DEFAULT_SEED: u64 = 42;
pub const CSV_HEADER: [&str; 5] = ["path", "label", "foreground", "background", "holes"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Uninfected = 0,
    Parasitized = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Uninfected, Label::Parasitized];

    pub fn dir_name(self) -> &'static str {
        match self {
            Label::Uninfected => "Uninfected",
            Label::Parasitized => "Parasitized",
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Uninfected),
            1 => Ok(Label::Parasitized),
            _ => Err(Error::NonBinaryLabels),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub path: String,
    pub label: Label,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub seed: u64,
    pub polarity: PolarityMode,
    pub connectivity: Connectivity,
    /// Seconds since the Unix epoch at extraction time.
    pub extracted_at: u64,
}

impl Default for TableMetadata {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            polarity: PolarityMode::default(),
            connectivity: Connectivity::default(),
            extracted_at: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureTable {
    samples: Vec<Sample>,
    pub metadata: TableMetadata,
}

impl FeatureTable {
    pub fn new(samples: Vec<Sample>, metadata: TableMetadata) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut paths: Vec<&str> = samples.iter().map(|s| s.path.as_str()).collect();
        paths.sort_unstable();
        if let Some(w) = paths.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("duplicate path `{}`", w[0])));
        }
        Ok(Self { samples, metadata })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn label_bytes(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label.as_u8()).collect()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for s in &self.samples {
            counts[s.label as usize] += 1;
        }
        counts
    }

    pub fn features(&self) -> Vec<FeatureVector> {
        self.samples.iter().map(|s| s.features).collect()
    }

    /// Project onto a feature set, producing the model input matrix.
    pub fn matrix(&self, set: FeatureSet) -> Matrix {
        let rows: Vec<Vec<f64>> = self.samples.iter().map(|s| set.project(&s.features)).collect();
        Matrix::from_rows(&rows).expect("uniform row width")
    }
}

/// Columns fed to the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// Foreground count and hole count.
    #[default]
    Two,
    /// Foreground, background and hole counts.
    Three,
}

impl FeatureSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            FeatureSet::Two => &["foreground", "holes"],
            FeatureSet::Three => &["foreground", "background", "holes"],
        }
    }

    pub fn width(self) -> usize {
        self.names().len()
    }

    pub fn project(self, fv: &FeatureVector) -> Vec<f64> {
        match self {
            FeatureSet::Two => vec![f64::from(fv.foreground), f64::from(fv.holes)],
            FeatureSet::Three => vec![
                f64::from(fv.foreground),
                f64::from(fv.background),
                f64::from(fv.holes),
            ],
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Two => "two",
            FeatureSet::Three => "three",
        })
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two" | "2" => Ok(FeatureSet::Two),
            "three" | "3" => Ok(FeatureSet::Three),
            other => Err(Error::InvalidArgument(format!("unknown feature set `{other}`"))),
        }
    }
}

/// The final two-column view: background is dropped as redundant.
pub fn select_final_features(table: &FeatureTable) -> Matrix {
    table.matrix(FeatureSet::Two)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub polarity: PolarityMode,
    pub connectivity: Connectivity,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestFailure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub table: FeatureTable,
    pub failures: Vec<IngestFailure>,
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            files.push(path);
        }
    }
    Ok(files)
}

/// Extract features for one image file.
pub fn extract_file(path: &Path, opts: &IngestOptions) -> Result<FeatureVector> {
    let mask = imaging::preprocess_file(path, opts.polarity)?;
    Ok(morphology::extract_features_with(&mask, opts.connectivity))
}

/// Walk `<root>/Parasitized` and `<root>/Uninfected`, extracting features
/// from every PNG. Per-file failures are collected, not fatal.
pub fn ingest(root: impl AsRef<Path>, opts: &IngestOptions) -> Result<Ingested> {
    let root = root.as_ref();
    let mut jobs: Vec<(String, Label, PathBuf)> = Vec::new();
    let mut by_name = [Label::Parasitized, Label::Uninfected];
    by_name.sort_by_key(|l| l.dir_name());
    for label in by_name {
        let dir = root.join(label.dir_name());
        if !dir.is_dir() {
            return Err(Error::MissingClassDir(label.dir_name().to_string()));
        }
        let mut files: Vec<(String, PathBuf)> = list_pngs(&dir)?
            .into_iter()
            .map(|p| {
                let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                (format!("{}/{}", label.dir_name(), name), p)
            })
            .collect();
        files.sort();
        jobs.extend(files.into_iter().map(|(rel, p)| (rel, label, p)));
    }

    let results: Vec<(String, Label, Result<FeatureVector>)> = jobs
        .into_par_iter()
        .map(|(rel, label, path)| {
            let fv = extract_file(&path, opts);
            (rel, label, fv)
        })
        .collect();

    let attempted = results.len();
    let mut samples = Vec::with_capacity(attempted);
    let mut failures = Vec::new();
    for (path, label, res) in results {
        match res {
            Ok(features) => samples.push(Sample {
                path,
                label,
                features,
            }),
            Err(e) => {
                log::warn!("extraction failed for {path}: {e}");
                failures.push(IngestFailure {
                    path,
                    error: e.to_string(),
                });
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::AllFilesFailed(attempted));
    }
    let extracted_at = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let metadata = TableMetadata {
        seed: opts.seed,
        polarity: opts.polarity,
        connectivity: opts.connectivity,
        extracted_at,
    };
    Ok(Ingested {
        table: FeatureTable::new(samples, metadata)?,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class seeded shuffle; the last `floor(n_class * test_fraction)`
/// shuffled indices of each class go to the test side.
pub fn stratified_split(labels: &[Label], test_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let by_class = indices_by_class(labels);
    if by_class.iter().any(Vec::is_empty) {
        return Err(Error::SingleClassTable);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut idx in by_class {
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).floor() as usize;
        let cut = idx.len() - n_test;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitAssignment { train, test })
}

pub fn split_table(table: &FeatureTable, test_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    stratified_split(&table.labels(), test_fraction, seed)
}

fn indices_by_class(labels: &[Label]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        out[*l as usize].push(i);
    }
    out
}

/// Stratified k-fold partition of positions `0..labels.len()`. Each class is
/// shuffled and dealt round-robin, continuing the deal across classes, so
/// fold sizes differ by at most one overall and per class.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::TooFewSamples {
            needed: k,
            got: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for mut idx in indices_by_class(labels) {
        idx.shuffle(&mut rng);
        for i in idx {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Folds over table indices drawn only from `train_indices`.
pub fn kfold_indices(
    labels: &[Label],
    train_indices: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let sub: Vec<Label> = train_indices.iter().map(|&i| labels[i]).collect();
    Ok(stratified_folds(&sub, k, seed)?
        .into_iter()
        .map(|f| f.into_iter().map(|p| train_indices[p]).collect())
        .collect())
}

/// Complement of fold `i` within `0..n` given the fold list.
pub fn fold_train(folds: &[Vec<usize>], i: usize) -> Vec<usize> {
    let mut train: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    train.sort_unstable();
    train
}

pub const CORRELATION_COLUMNS: [&str; 4] = ["foreground", "background", "holes", "label"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == a)?;
        let j = self.columns.iter().position(|c| c == b)?;
        Some(self.values[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (name, row) in self.columns.iter().zip(&self.values) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for CorrelationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<12}", "")?;
        for c in &self.columns {
            write!(f, "{c:>12}")?;
        }
        writeln!(f)?;
        for (name, row) in self.columns.iter().zip(&self.values) {
            write!(f, "{name:<12}")?;
            for v in row {
                write!(f, "{v:>12.4}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Pearson r between two equally long columns.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson_correlation_matrix(table: &FeatureTable) -> Result<CorrelationMatrix> {
    if table.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: table.len(),
        });
    }
    let s = table.samples();
    let cols: [Vec<f64>; 4] = [
        s.iter().map(|x| f64::from(x.features.foreground)).collect(),
        s.iter().map(|x| f64::from(x.features.background)).collect(),
        s.iter().map(|x| f64::from(x.features.holes)).collect(),
        s.iter().map(|x| f64::from(x.label.as_u8())).collect(),
    ];
    for (name, col) in CORRELATION_COLUMNS.iter().zip(&cols) {
        if col.iter().all(|v| *v == col[0]) {
            return Err(Error::ConstantColumn((*name).to_string()));
        }
    }
    let mut values = vec![vec![0.0; 4]; 4];
    for i in 0..4 {
        values[i][i] = 1.0;
        for j in i + 1..4 {
            let r = pearson(&cols[i], &cols[j]).expect("non-constant columns");
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        columns: CORRELATION_COLUMNS.iter().map(|c| c.to_string()).collect(),
        values,
    })
}

fn metadata_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Serialize the sample rows as CSV (header mandatory, LF line endings).
pub fn table_to_csv(table: &FeatureTable) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let schema = |e: csv::Error| Error::Schema(e.to_string());
    w.write_record(CSV_HEADER).map_err(schema)?;
    for s in &table.samples {
        w.write_record([
            s.path.clone(),
            s.label.as_u8().to_string(),
            s.features.foreground.to_string(),
            s.features.background.to_string(),
            s.features.holes.to_string(),
        ])
        .map_err(schema)?;
    }
    w.into_inner().map_err(|e| Error::Schema(e.to_string()))
}

/// Write the CSV plus a `<path>.meta.json` sidecar with the run metadata.
pub fn save_table(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, table_to_csv(table)?).map_err(|e| Error::io(path, e))?;
    let meta = serde_json::to_vec_pretty(&table.metadata).expect("metadata serializes");
    let meta_path = metadata_path(path);
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(meta_path, e))
}

pub fn table_from_csv(bytes: &[u8], metadata: TableMetadata) -> Result<FeatureTable> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = r.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let mut positions = [0usize; 5];
    for (slot, name) in positions.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing `{name}` column")))?;
    }
    let mut samples = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let field = |k: usize| rec.get(positions[k]).unwrap_or("");
        let int = |k: usize| -> Result<u32> {
            field(k).parse().map_err(|_| {
                Error::Schema(format!("row {}: bad `{}` value `{}`", line + 1, CSV_HEADER[k], field(k)))
            })
        };
        let label_raw: u8 = field(1)
            .parse()
            .map_err(|_| Error::Schema(format!("row {}: bad label `{}`", line + 1, field(1))))?;
        let label = Label::try_from(label_raw)
            .map_err(|_| Error::Schema(format!("row {}: label must be 0 or 1", line + 1)))?;
        samples.push(Sample {
            path: field(0).to_string(),
            label,
            features: FeatureVector {
                foreground: int(2)?,
                background: int(3)?,
                holes: int(4)?,
            },
        });
    }
    if samples.is_empty() {
        return Err(Error::Schema("table has no rows".into()));
    }
    FeatureTable::new(samples, metadata)
}

pub fn load_table(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        return Err(Error::Schema("empty file".into()));
    }
    let meta_path = metadata_path(path);
    let metadata = match std::fs::read(&meta_path) {
        Ok(raw) => serde_json::from_slice(&raw)
            .map_err(|e| Error::Schema(format!("{}: {e}", meta_path.display())))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => TableMetadata::default(),
        Err(e) => return Err(Error::io(meta_path, e)),
    };
    table_from_csv(&bytes, metadata)
}
