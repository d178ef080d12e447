//! Compact little-endian model files.
//!
//! ```text
//! magic     b"EMFE"
//! version   u16
//! kind      u8        1 logreg, 2 rf, 3 knn, 4 svm, 5 ensemble
//! features  u8
//! has_std   u8        followed by `features` means and `features` stds (f64)
//! payload   kind-specific
//! crc32     u32       over every preceding byte
//! ```
//!
//! Forest trees are written in preorder; a split node's left child is the
//! next node, so child indices are not stored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ensemble::TwoStageEnsemble;
use super::forest::{Criterion, DecisionTree, ForestParams, MaxFeatures, Node, RandomForest};
use super::knn::{Knn, KnnParams, Metric};
use super::logistic::{LogisticRegression, Penalty};
use super::standardize::Standardizer;
use super::svm::SvmRbf;
use super::{Model, ModelKind};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"EMFE";
pub const FORMAT_VERSION: u16 = 1;

fn kind_code(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::LogReg => 1,
        ModelKind::Rf => 2,
        ModelKind::Knn => 3,
        ModelKind::Svm => 4,
        ModelKind::Ensemble => 5,
    }
}

fn kind_from_code(c: u8) -> Option<ModelKind> {
    ModelKind::ALL.into_iter().find(|k| kind_code(*k) == c)
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.f64(*x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptModel("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > self.buf.len() / 8 {
            return Err(Error::CorruptModel("length field exceeds data".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn count(&mut self) -> Result<usize> {
        let n = self.u32()? as usize;
        if n > self.buf.len() {
            return Err(Error::CorruptModel("length field exceeds data".into()));
        }
        Ok(n)
    }
    fn done(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::CorruptModel("trailing bytes in payload".into()))
        }
    }
}

fn corrupt(what: &str) -> Error {
    Error::CorruptModel(what.to_string())
}

fn header_standardizer(model: &Model) -> Option<&Standardizer> {
    match model {
        Model::LogReg(m) => Some(&m.standardizer),
        Model::Rf(_) => None,
        Model::Knn(m) => Some(&m.standardizer),
        Model::Svm(m) => Some(&m.standardizer),
        Model::Ensemble(m) => Some(&m.stage1.standardizer),
    }
}

fn write_logreg_body(w: &mut Writer, m: &LogisticRegression) {
    w.u8(m.penalty.code());
    w.f64(m.c);
    w.f64(m.threshold);
    w.f64s(&m.weights);
    w.f64(m.bias);
}

fn read_logreg_body(r: &mut Reader, d: usize, standardizer: Standardizer) -> Result<LogisticRegression> {
    let penalty = Penalty::from_code(r.u8()?).ok_or_else(|| corrupt("unknown penalty"))?;
    let c = r.f64()?;
    let threshold = r.f64()?;
    let weights = r.f64s(d)?;
    let bias = r.f64()?;
    Ok(LogisticRegression {
        weights,
        bias,
        penalty,
        c,
        threshold,
        standardizer,
    })
}

fn write_forest_body(w: &mut Writer, f: &RandomForest) {
    let p = &f.params;
    w.u32(p.n_estimators as u32);
    w.u32(p.max_depth.map_or(0, |d| d as u32 + 1));
    w.u32(p.min_samples_split as u32);
    w.u32(p.min_samples_leaf as u32);
    w.u8(match p.max_features {
        MaxFeatures::Sqrt => 0,
        MaxFeatures::Log2 => 1,
        MaxFeatures::All => 2,
    });
    w.u8(match p.criterion {
        Criterion::Gini => 0,
        Criterion::Entropy => 1,
    });
    w.u8(u8::from(p.bootstrap));
    w.u64(f.seed);
    w.u32(f.trees.len() as u32);
    for t in &f.trees {
        w.u32(t.nodes.len() as u32);
        for n in &t.nodes {
            match *n {
                Node::Leaf { counts } => {
                    w.u8(0);
                    w.u32(counts[0]);
                    w.u32(counts[1]);
                }
                Node::Split {
                    feature, threshold, ..
                } => {
                    w.u8(1);
                    w.u8(feature);
                    w.f64(threshold);
                }
            }
        }
    }
}

fn read_tree(r: &mut Reader, d: usize) -> Result<DecisionTree> {
    let n = r.count()?;
    if n == 0 {
        return Err(corrupt("empty tree"));
    }
    let mut nodes: Vec<Node> = Vec::with_capacity(n);
    // splits whose right child has not been read yet
    let mut awaiting: Vec<usize> = Vec::new();
    for i in 0..n {
        if matches!(nodes.last(), Some(Node::Leaf { .. })) {
            let p = awaiting.pop().ok_or_else(|| corrupt("node outside tree"))?;
            if let Node::Split { right, .. } = &mut nodes[p] {
                *right = i as u32;
            }
        }
        let node = match r.u8()? {
            0 => Node::Leaf {
                counts: [r.u32()?, r.u32()?],
            },
            1 => {
                let feature = r.u8()?;
                if usize::from(feature) >= d {
                    return Err(corrupt("split feature out of range"));
                }
                awaiting.push(i);
                Node::Split {
                    feature,
                    threshold: r.f64()?,
                    left: i as u32 + 1,
                    right: 0,
                }
            }
            _ => return Err(corrupt("unknown node tag")),
        };
        nodes.push(node);
    }
    if !awaiting.is_empty() || !matches!(nodes.last(), Some(Node::Leaf { .. })) {
        return Err(corrupt("tree ends with an open split"));
    }
    Ok(DecisionTree { nodes })
}

fn read_forest_body(r: &mut Reader, d: usize) -> Result<RandomForest> {
    let n_estimators = r.u32()? as usize;
    let max_depth = match r.u32()? {
        0 => None,
        v => Some(v as usize - 1),
    };
    let min_samples_split = r.u32()? as usize;
    let min_samples_leaf = r.u32()? as usize;
    let max_features = match r.u8()? {
        0 => MaxFeatures::Sqrt,
        1 => MaxFeatures::Log2,
        2 => MaxFeatures::All,
        _ => return Err(corrupt("unknown max_features")),
    };
    let criterion = match r.u8()? {
        0 => Criterion::Gini,
        1 => Criterion::Entropy,
        _ => return Err(corrupt("unknown criterion")),
    };
    let bootstrap = r.u8()? != 0;
    let seed = r.u64()?;
    let n_trees = r.count()?;
    let trees = (0..n_trees).map(|_| read_tree(r, d)).collect::<Result<Vec<_>>>()?;
    Ok(RandomForest {
        params: ForestParams {
            n_estimators,
            max_depth,
            min_samples_split,
            min_samples_leaf,
            max_features,
            criterion,
            bootstrap,
        },
        n_features: d,
        seed,
        trees,
    })
}

/// Serialize a fitted model.
pub fn encode(model: &Model) -> Vec<u8> {
    let d = model.n_features();
    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(kind_code(model.kind()));
    w.u8(d as u8);
    match header_standardizer(model) {
        Some(s) => {
            w.u8(1);
            w.f64s(&s.means);
            w.f64s(&s.stds);
        }
        None => w.u8(0),
    }
    match model {
        Model::LogReg(m) => write_logreg_body(&mut w, m),
        Model::Rf(f) => write_forest_body(&mut w, f),
        Model::Knn(k) => {
            w.u32(k.params.n_neighbors as u32);
            let (code, p) = match k.params.metric {
                Metric::Euclidean => (0, 0),
                Metric::Manhattan => (1, 0),
                Metric::Chebyshev => (2, 0),
                Metric::Minkowski(p) => (3, p),
            };
            w.u8(code);
            w.u8(p);
            w.u32(k.train.rows() as u32);
            w.f64s(k.train.as_slice());
            w.buf.extend_from_slice(&k.labels);
        }
        Model::Svm(s) => {
            w.f64(s.c);
            w.f64(s.gamma);
            w.f64(s.bias);
            w.u32(s.coef.len() as u32);
            w.f64s(s.support.as_slice());
            w.f64s(&s.coef);
        }
        Model::Ensemble(e) => {
            write_logreg_body(&mut w, &e.stage1);
            write_forest_body(&mut w, &e.stage2);
        }
    }
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

/// Parse a model file, verifying magic, checksum and version.
pub fn decode(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() + 2 + 3 + 4 {
        return Err(corrupt("file too short"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let kind = kind_from_code(r.u8()?).ok_or_else(|| corrupt("unknown model kind"))?;
    let d = usize::from(r.u8()?);
    if d == 0 {
        return Err(corrupt("zero feature count"));
    }
    let standardizer = match r.u8()? {
        0 => None,
        1 => Some(Standardizer {
            means: r.f64s(d)?,
            stds: r.f64s(d)?,
        }),
        _ => return Err(corrupt("bad standardizer flag")),
    };
    let need_std = || standardizer.clone().ok_or_else(|| corrupt("missing standardizer"));
    let model = match kind {
        ModelKind::LogReg => Model::LogReg(read_logreg_body(&mut r, d, need_std()?)?),
        ModelKind::Rf => Model::Rf(read_forest_body(&mut r, d)?),
        ModelKind::Knn => {
            let n_neighbors = r.u32()? as usize;
            let metric = match (r.u8()?, r.u8()?) {
                (0, _) => Metric::Euclidean,
                (1, _) => Metric::Manhattan,
                (2, _) => Metric::Chebyshev,
                (3, p) if p >= 1 => Metric::Minkowski(p),
                _ => return Err(corrupt("unknown metric")),
            };
            let rows = r.count()?;
            let train = Matrix::new(rows, d, r.f64s(rows * d)?).map_err(|_| corrupt("bad matrix"))?;
            let labels = r.take(rows)?.to_vec();
            Model::Knn(Knn {
                params: KnnParams {
                    n_neighbors,
                    metric,
                },
                standardizer: need_std()?,
                train,
                labels,
            })
        }
        ModelKind::Svm => {
            let c = r.f64()?;
            let gamma = r.f64()?;
            let bias = r.f64()?;
            let n_sv = r.count()?;
            let support = Matrix::new(n_sv, d, r.f64s(n_sv * d)?).map_err(|_| corrupt("bad matrix"))?;
            let coef = r.f64s(n_sv)?;
            Model::Svm(SvmRbf {
                c,
                gamma,
                bias,
                standardizer: need_std()?,
                support,
                coef,
            })
        }
        ModelKind::Ensemble => {
            let stage1 = read_logreg_body(&mut r, d, need_std()?)?;
            let stage2 = read_forest_body(&mut r, d)?;
            Model::Ensemble(TwoStageEnsemble { stage1, stage2 })
        }
    };
    r.done()?;
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Human-readable companion to a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub model_kind: String,
    pub features: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
}

/// Sidecar contents; coefficient fields are present for models with a
/// logistic stage.
pub fn sidecar(model: &Model, feature_names: &[&str]) -> Sidecar {
    let lr = model.as_logreg();
    Sidecar {
        model_kind: model.kind().name().to_string(),
        features: feature_names.iter().map(|s| s.to_string()).collect(),
        weights: lr.map(|m| m.weights.clone()),
        bias: lr.map(|m| m.bias),
        standardizer: header_standardizer(model).cloned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::logistic::DEFAULT_THRESHOLD;

    fn lr() -> Model {
        Model::LogReg(LogisticRegression {
            weights: vec![2.847, 0.623],
            bias: -0.125,
            penalty: Penalty::ElasticNet,
            c: 10.0,
            threshold: DEFAULT_THRESHOLD,
            standardizer: Standardizer {
                means: vec![10847.0, 1.2],
                stds: vec![1823.0, 1.4],
            },
        })
    }

    #[test]
    fn logreg_round_trip_and_size() {
        let m = lr();
        let bytes = encode(&m);
        assert!(bytes.len() <= 2048, "{} bytes", bytes.len());
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn truncated_and_flipped() {
        let bytes = encode(&lr());
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::CorruptModel(_))));
        assert!(matches!(decode(&bytes[..10]), Err(Error::CorruptModel(_))));
        let mut flipped = bytes.clone();
        flipped[20] ^= 0x40;
        assert!(matches!(decode(&flipped), Err(Error::CorruptModel(_))));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode(&lr());
        bytes[4] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn tree_layout_round_trip() {
        // split(split(leaf, leaf), split(leaf, leaf))
        let t = DecisionTree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 5.5, left: 1, right: 4 },
                Node::Split { feature: 1, threshold: 1.5, left: 2, right: 3 },
                Node::Leaf { counts: [3, 0] },
                Node::Leaf { counts: [1, 2] },
                Node::Split { feature: 0, threshold: 9.5, left: 5, right: 6 },
                Node::Leaf { counts: [0, 4] },
                Node::Leaf { counts: [2, 2] },
            ],
        };
        let f = RandomForest { params: ForestParams::default(), n_features: 2, seed: 7, trees: vec![t] };
        let m = Model::Rf(f);
        assert_eq!(decode(&encode(&m)).unwrap(), m);
    }

    #[test]
    fn sidecar_schema() {
        let json = serde_json::to_value(sidecar(&lr(), &["foreground", "holes"])).unwrap();
        assert_eq!(json["model_kind"], "logreg");
        assert_eq!(json["features"], serde_json::json!(["foreground", "holes"]));
        assert_eq!(json["weights"][0], 2.847);
        assert_eq!(json["standardizer"]["means"][1], 1.2);
    }
}
