//! Synthetic 2-D classification datasets, seeded mini-batching, and the
//! `SHRPDS1` dataset container.
//!
//! # File layout
//!
//! All integers and floats are little-endian.
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 8         | magic `b"SHRPDS1\n"`                    |
//! | 8      | 1         | kind: 0 = blobs, 1 = moons, 2 = xor     |
//! | 9      | 8         | seed (u64)                              |
//! | 17     | 8         | noise (f64)                             |
//! | 25     | 8         | n, number of rows (u64)                 |
//! | 33     | 8         | dim, input columns (u64)                |
//! | 41     | 8         | classes (u64)                           |
//! | 49     | 8·n·dim   | inputs, row-major f64                   |
//! | …      | 4·n       | targets (u32)                           |
//!
//! The file must end exactly after the targets.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::objective::Batch;
use crate::rng::{self, Stream};

pub const MAGIC: &[u8; 8] = b"SHRPDS1\n";
const HEADER_LEN: usize = 49;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Moons,
    Xor,
}

impl DatasetKind {
    fn code(self) -> u8 {
        match self {
            DatasetKind::Blobs => 0,
            DatasetKind::Moons => 1,
            DatasetKind::Xor => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DatasetKind::Blobs),
            1 => Some(DatasetKind::Moons),
            2 => Some(DatasetKind::Xor),
            _ => None,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Blobs => "blobs",
            DatasetKind::Moons => "moons",
            DatasetKind::Xor => "xor",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(DatasetKind::Blobs),
            "moons" => Ok(DatasetKind::Moons),
            "xor" => Ok(DatasetKind::Xor),
            other => Err(Error::config(format!("unknown dataset kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub seed: u64,
    pub noise: f64,
    pub dim: usize,
    pub classes: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<usize>,
}

const CLASSES: usize = 2;

/// Generates `n` labelled 2-D points, `⌈n/2⌉` of class 0 and `⌊n/2⌋` of class 1,
/// in a seeded shuffled order.
///
/// * blobs: class 0 around (−1, −1), class 1 around (1, 1)
/// * moons: two interleaved half circles
/// * xor: class 1 in quadrants I and III, class 0 in II and IV
///
/// Each coordinate then gets Gaussian noise with standard deviation `noise`.
pub fn generate_dataset(kind: DatasetKind, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < CLASSES {
        return Err(Error::config(format!(
            "need at least {CLASSES} examples for {CLASSES} classes, got {n}"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::config("noise must be finite and nonnegative"));
    }
    let mut rng = rng::stream(seed, Stream::Dataset);
    let per_class = [n - n / 2, n / 2];
    let mut rows: Vec<([f64; 2], usize)> = Vec::with_capacity(n);
    for (class, &count) in per_class.iter().enumerate() {
        for j in 0..count {
            let p = match kind {
                DatasetKind::Blobs => {
                    let c = if class == 0 { -1.0 } else { 1.0 };
                    [c, c]
                }
                DatasetKind::Moons => {
                    let t = if count > 1 {
                        PI * j as f64 / (count - 1) as f64
                    } else {
                        0.0
                    };
                    if class == 0 {
                        [t.cos(), t.sin()]
                    } else {
                        [1.0 - t.cos(), 0.5 - t.sin()]
                    }
                }
                DatasetKind::Xor => {
                    let quadrant = j % 2;
                    let (sx, sy) = match (class, quadrant) {
                        (1, 0) => (1.0, 1.0),
                        (1, _) => (-1.0, -1.0),
                        (_, 0) => (-1.0, 1.0),
                        _ => (1.0, -1.0),
                    };
                    [sx * rng.gen_range(0.0..1.0), sy * rng.gen_range(0.0..1.0)]
                }
            };
            rows.push((p, class));
        }
    }
    if noise > 0.0 {
        for (p, _) in rows.iter_mut() {
            for v in p.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += noise * z;
            }
        }
    }
    rows.shuffle(&mut rng);
    Ok(Dataset {
        kind,
        seed,
        noise,
        dim: 2,
        classes: CLASSES,
        inputs: rows.iter().flat_map(|(p, _)| *p).collect(),
        targets: rows.iter().map(|(_, c)| *c).collect(),
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Batch of the given rows, in the given order.
    pub fn batch(&self, rows: &[usize]) -> Result<Batch> {
        let inputs = rows
            .iter()
            .flat_map(|&r| self.row(r).iter().copied())
            .collect();
        let targets = rows.iter().map(|&r| self.targets[r]).collect();
        Batch::new(inputs, self.dim, targets, rows.to_vec())
    }

    pub fn full_batch(&self) -> Result<Batch> {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: rows
                .iter()
                .flat_map(|&r| self.row(r).iter().copied())
                .collect(),
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
            ..self.clone()
        }
    }

    /// Seeded shuffled split; the first `⌊train_fraction · n⌋` shuffled rows
    /// train, the rest test. Both parts keep at least one row.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if self.len() < 2 || !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::config(
                "split needs at least 2 rows and a train fraction in (0, 1)",
            ));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(seed, Stream::Split));
        let cut = ((train_fraction * self.len() as f64).floor() as usize).clamp(1, self.len() - 1);
        Ok((self.subset(&order[..cut]), self.subset(&order[cut..])))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.inputs.len() * 8 + self.len() * 4);
        out.extend_from_slice(MAGIC);
        out.push(self.kind.code());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.noise.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.classes as u64).to_le_bytes());
        for v in &self.inputs {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &t in &self.targets {
            out.extend_from_slice(&(t as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::format("dataset file", m.to_string());
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(bad("missing SHRPDS1 header"));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let kind =
            DatasetKind::from_code(bytes[8]).ok_or_else(|| bad("unknown dataset kind code"))?;
        let seed = u64_at(9);
        let noise = f64::from_bits(u64_at(17));
        let n = usize::try_from(u64_at(25)).map_err(|_| bad("row count overflow"))?;
        let dim = usize::try_from(u64_at(33)).map_err(|_| bad("dim overflow"))?;
        let classes = usize::try_from(u64_at(41)).map_err(|_| bad("class count overflow"))?;
        let expected = n
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(8))
            .and_then(|v| v.checked_add(n.checked_mul(4)?))
            .and_then(|v| v.checked_add(HEADER_LEN))
            .ok_or_else(|| bad("size overflow"))?;
        if bytes.len() != expected {
            return Err(bad(&format!(
                "expected {expected} bytes for {n} rows of width {dim}, found {}",
                bytes.len()
            )));
        }
        let body = &bytes[HEADER_LEN..];
        let inputs: Vec<f64> = body[..n * dim * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let targets: Vec<usize> = body[n * dim * 8..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        if targets.iter().any(|&t| t >= classes) {
            return Err(bad("target out of class range"));
        }
        Ok(Dataset {
            kind,
            seed,
            noise,
            dim,
            classes,
            inputs,
            targets,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized container.
    pub fn checksum(&self) -> String {
        Sha256::digest(self.to_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Row permutation for one epoch, seeded by `(seed, epoch)`.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, Stream::Batches, epoch));
    order
}

/// Splits one epoch's permutation into consecutive batches; the last may be short.
pub fn make_batches(
    dataset: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Batch>> {
    if batch_size == 0 || batch_size > dataset.len() {
        return Err(Error::config(format!(
            "batch size must be in 1..={}, got {batch_size}",
            dataset.len()
        )));
    }
    epoch_permutation(dataset.len(), seed, epoch)
        .chunks(batch_size)
        .map(|rows| dataset.batch(rows))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_blobs_sit_on_centers() {
        let d = generate_dataset(DatasetKind::Blobs, 4, 0.0, 3).unwrap();
        for i in 0..4 {
            let c = if d.targets[i] == 0 { -1.0 } else { 1.0 };
            assert_eq!(d.row(i), &[c, c]);
        }
        assert_eq!(d.targets.iter().filter(|&&t| t == 0).count(), 2);
    }

    #[test]
    fn classes_balanced_and_small_n_rejected() {
        for kind in [DatasetKind::Blobs, DatasetKind::Moons, DatasetKind::Xor] {
            let d = generate_dataset(kind, 11, 0.1, 0).unwrap();
            let ones = d.targets.iter().sum::<usize>();
            assert_eq!(ones, 5);
        }
        assert!(generate_dataset(DatasetKind::Moons, 1, 0.1, 0).is_err());
        assert!(generate_dataset(DatasetKind::Moons, 10, -0.1, 0).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_dataset(DatasetKind::Xor, 50, 0.2, 11).unwrap();
        let b = generate_dataset(DatasetKind::Xor, 50, 0.2, 11).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = generate_dataset(DatasetKind::Xor, 50, 0.2, 12).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let d = generate_dataset(DatasetKind::Moons, 37, 0.15, 5).unwrap();
        let bytes = d.to_bytes();
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Dataset::from_bytes(&wrong).is_err());
        let mut wrong = bytes;
        wrong[8] = 9;
        assert!(Dataset::from_bytes(&wrong).is_err());
    }

    #[test]
    fn batch_sizes_and_partition() {
        let d = generate_dataset(DatasetKind::Blobs, 10, 0.5, 1).unwrap();
        let batches = make_batches(&d, 3, 4, 0).unwrap();
        let sizes: Vec<_> = batches.iter().map(Batch::rows).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices().to_vec()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(make_batches(&d, 3, 4, 0).unwrap(), batches);
        assert_ne!(make_batches(&d, 3, 4, 1).unwrap(), batches);
        assert!(make_batches(&d, 0, 4, 0).is_err());
        assert!(make_batches(&d, 11, 4, 0).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let d = generate_dataset(DatasetKind::Moons, 100, 0.1, 2).unwrap();
        let (train, test) = d.split(0.8, 9).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        let mut all: Vec<u64> = train
            .inputs
            .iter()
            .chain(&test.inputs)
            .map(|v| v.to_bits())
            .collect();
        let mut orig: Vec<u64> = d.inputs.iter().map(|v| v.to_bits()).collect();
        all.sort_unstable();
        orig.sort_unstable();
        assert_eq!(all, orig);
    }
}
