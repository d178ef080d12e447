//! Structural features of a binary mask: foreground area, background area and
//! the number of enclosed background components (holes).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;

/// Pixel adjacency used for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidArgument(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: u8 = s
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("connectivity must be 4 or 8, got `{s}`")))?;
        Connectivity::try_from(v)
    }
}

/// Which pixel class to label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Foreground,
    Background,
}

/// Per-image structural measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    pub foreground: u32,
    pub background: u32,
    pub holes: u32,
}

/// Component labels; 0 marks pixels outside the labeled class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: u32,
}

impl LabelMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Number of components `K`; labels run over `1..=K`.
    pub fn component_count(&self) -> u32 {
        self.count
    }
}

pub fn foreground_count(mask: &BinaryMask) -> u32 {
    mask.bits().iter().filter(|&&b| b).count() as u32
}

pub fn background_count(mask: &BinaryMask) -> u32 {
    mask.len() as u32 - foreground_count(mask)
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // slot 0 is the "unlabeled" sentinel
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Two-pass union-find labeling. Component IDs follow the raster order of
/// each component's first pixel.
pub fn label_components(mask: &BinaryMask, target: Target, connectivity: Connectivity) -> LabelMap {
    let (w, h) = (mask.width(), mask.height());
    let want = target == Target::Foreground;
    let bits = mask.bits();
    let mut provisional = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if bits[i] != want {
                continue;
            }
            let mut label = 0u32;
            let mut visit = |nx: usize, ny: usize, label: &mut u32| {
                let n = provisional[ny * w + nx];
                if n != 0 {
                    *label = if *label == 0 { n } else { sets.union(*label, n) };
                }
            };
            if x > 0 {
                visit(x - 1, y, &mut label);
            }
            if y > 0 {
                visit(x, y - 1, &mut label);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        visit(x - 1, y - 1, &mut label);
                    }
                    if x + 1 < w {
                        visit(x + 1, y - 1, &mut label);
                    }
                }
            }
            provisional[i] = if label == 0 { sets.make() } else { label };
        }
    }

    let mut remap = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    let labels = provisional
        .iter()
        .map(|&p| {
            if p == 0 {
                return 0;
            }
            let root = sets.find(p) as usize;
            if remap[root] == 0 {
                count += 1;
                remap[root] = count;
            }
            remap[root]
        })
        .collect();
    LabelMap {
        width: w,
        height: h,
        labels,
        count,
    }
}

/// Background components that touch no image border.
pub fn count_holes(mask: &BinaryMask, connectivity: Connectivity) -> u32 {
    let map = label_components(mask, Target::Background, connectivity);
    let (w, h) = (map.width, map.height);
    let mut touches = vec![false; map.count as usize + 1];
    for x in 0..w {
        touches[map.get(x, 0) as usize] = true;
        touches[map.get(x, h - 1) as usize] = true;
    }
    for y in 0..h {
        touches[map.get(0, y) as usize] = true;
        touches[map.get(w - 1, y) as usize] = true;
    }
    touches[1..].iter().filter(|&&t| !t).count() as u32
}

pub fn extract_features(mask: &BinaryMask) -> FeatureVector {
    extract_features_with(mask, Connectivity::default())
}

pub fn extract_features_with(mask: &BinaryMask, connectivity: Connectivity) -> FeatureVector {
    let foreground = foreground_count(mask);
    FeatureVector {
        foreground,
        background: mask.len() as u32 - foreground,
        holes: count_holes(mask, connectivity),
    }
}

/// Population summary of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let values: Vec<f64> = values.into_iter().collect();
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(Self {
            mean,
            std: var.sqrt(),
            min,
            max,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStatistics {
    pub foreground: Summary,
    pub background: Summary,
    pub holes: Summary,
}

pub fn feature_statistics(vectors: &[FeatureVector]) -> Result<FeatureStatistics> {
    Ok(FeatureStatistics {
        foreground: Summary::of(vectors.iter().map(|v| f64::from(v.foreground)))?,
        background: Summary::of(vectors.iter().map(|v| f64::from(v.background)))?,
        holes: Summary::of(vectors.iter().map(|v| f64::from(v.holes)))?,
    })
}
