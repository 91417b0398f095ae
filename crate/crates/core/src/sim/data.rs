//! Synthetic frozen-feature data and the binary feature-file format.
//!
//! Feature file, little-endian:
//!
//! ```text
//! "FFUR" | version u16 | n u32 | d u32 | c u32 | dtype u8 (4 = f32, 8 = f64)
//! features (n×d, row-major) | labels (n×c, row-major)
//! ```

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{substream, Stream};
use crate::client::{Sample, SampleId};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Precision};

pub const FEATURE_MAGIC: &[u8; 4] = b"FFUR";
pub const FEATURE_VERSION: u16 = 1;

/// Feature and label rows; the row index is the sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Matrix,
    pub labels: Matrix,
    pub dtype: Precision,
}

impl FeatureSet {
    pub fn new(features: Matrix, labels: Matrix, dtype: Precision) -> Result<Self> {
        if features.rows() != labels.rows() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} label rows", features.rows()),
                got: format!("{} label rows", labels.rows()),
            });
        }
        Ok(FeatureSet {
            features: features.rounded(dtype),
            labels: labels.rounded(dtype),
            dtype,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn c(&self) -> usize {
        self.labels.cols()
    }

    pub fn sample(&self, id: SampleId) -> Result<Sample> {
        let i = id.0 as usize;
        if i >= self.n() {
            return Err(Error::InvalidArgument(format!("sample {id} outside feature set of {}", self.n())));
        }
        Ok(Sample {
            id,
            feature: self.features.row(i).to_vec(),
            label: self.labels.row(i).to_vec(),
        })
    }

    /// Index of the largest label entry of each row.
    pub fn class_of(&self, id: SampleId) -> usize {
        argmax(self.labels.row(id.0 as usize))
    }

    /// `(F, Y)` for the given ids, in the given order.
    pub fn batch(&self, ids: &[SampleId]) -> (Matrix, Matrix) {
        let idx: Vec<usize> = ids.iter().map(|id| id.0 as usize).collect();
        (self.features.select_rows(&idx), self.labels.select_rows(&idx))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(19 + self.dtype.width() * (self.n() * (self.d() + self.c())));
        buf.extend_from_slice(FEATURE_MAGIC);
        buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        for v in [self.n(), self.d(), self.c()] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.push(self.dtype.width() as u8);
        for &v in self.features.as_slice().iter().chain(self.labels.as_slice()) {
            match self.dtype {
                Precision::Single => buf.extend_from_slice(&(v as f32).to_le_bytes()),
                Precision::Double => buf.extend_from_slice(&v.to_le_bytes()),
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let bad = |m: &str| Error::Wire(format!("feature file: {m}"));
        if buf.len() < 19 || &buf[..4] != FEATURE_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != FEATURE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let word = |k: usize| u32::from_le_bytes(buf[6 + 4 * k..10 + 4 * k].try_into().unwrap()) as usize;
        let (n, d, c) = (word(0), word(1), word(2));
        let dtype = Precision::from_width(buf[18]).ok_or_else(|| bad("bad dtype"))?;
        let width = dtype.width();
        let count = n * (d + c);
        if buf.len() != 19 + count * width {
            return Err(bad(&format!(
                "expected {} payload bytes, found {}",
                count * width,
                buf.len() - 19
            )));
        }
        let values: Vec<f64> = buf[19..]
            .chunks_exact(width)
            .map(|ch| match dtype {
                Precision::Single => f32::from_le_bytes(ch.try_into().unwrap()) as f64,
                Precision::Double => f64::from_le_bytes(ch.try_into().unwrap()),
            })
            .collect();
        let (f, y) = values.split_at(n * d);
        Ok(FeatureSet {
            features: Matrix::from_vec(n, d, f.to_vec())?,
            labels: Matrix::from_vec(n, c, y.to_vec())?,
            dtype,
        })
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Synthetic data with an 80/20 train/test split.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub set: FeatureSet,
    pub train: Vec<SampleId>,
    pub test: Vec<SampleId>,
}

/// Gaussian class clusters standing in for frozen-backbone features.
///
/// Each class mean lies at distance `separation` from the origin along its
/// own direction (orthonormal when `c ≤ d`); features are mean plus unit
/// isotropic noise, stored in single precision. Labels are one-hot.
pub fn gen_synthetic(seed: u64, n: usize, d: usize, c: usize, separation: f64) -> SyntheticData {
    let mut rng = substream(seed, Stream::Data);
    let means = class_means(&mut rng, d, c, separation);

    let mut features = Matrix::zeros(n, d);
    let mut labels = Matrix::zeros(n, c);
    for i in 0..n {
        let k = if c == 0 { 0 } else { rng.random_range(0..c) };
        for j in 0..d {
            let noise: f64 = rng.sample(StandardNormal);
            let mean = if c == 0 { 0.0 } else { means[(k, j)] };
            features[(i, j)] = Precision::Single.round(mean + noise);
        }
        if c > 0 {
            labels[(i, k)] = 1.0;
        }
    }

    let mut ids: Vec<SampleId> = (0..n as u64).map(SampleId).collect();
    ids.shuffle(&mut rng);
    let n_train = n * 4 / 5;
    let mut train = ids[..n_train].to_vec();
    let mut test = ids[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();

    SyntheticData {
        set: FeatureSet {
            features,
            labels,
            dtype: Precision::Single,
        },
        train,
        test,
    }
}

fn class_means(rng: &mut impl Rng, d: usize, c: usize, separation: f64) -> Matrix {
    let mut means = Matrix::zeros(c, d);
    for k in 0..c {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if c <= d {
            for prev in 0..k {
                let proj: f64 = v.iter().zip(means.row(prev)).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(means.row(prev)).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            means.row_mut(k).iter_mut().zip(&v).for_each(|(m, x)| *m = x / norm);
        }
    }
    means.scale(separation, Precision::Double)
}

/// Fraction of `ids` whose argmax over `f · W` matches the label argmax.
pub fn accuracy(set: &FeatureSet, ids: &[SampleId], head: &Matrix) -> f64 {
    if ids.is_empty() {
        return f64::NAN;
    }
    let hits = ids.iter().filter(|id| predict(set, **id, head) == set.class_of(**id)).count();
    hits as f64 / ids.len() as f64
}

/// Recall of one class over `ids`.
pub fn class_recall(set: &FeatureSet, ids: &[SampleId], head: &Matrix, class: usize) -> f64 {
    let of_class: Vec<SampleId> = ids.iter().copied().filter(|&id| set.class_of(id) == class).collect();
    accuracy(set, &of_class, head)
}

fn predict(set: &FeatureSet, id: SampleId, head: &Matrix) -> usize {
    let f = set.features.row(id.0 as usize);
    let scores: Vec<f64> = (0..head.cols())
        .map(|k| f.iter().enumerate().map(|(j, x)| x * head[(j, k)]).sum())
        .collect();
    argmax(&scores)
}
