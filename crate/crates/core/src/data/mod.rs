//! Datasets: the `.t64` tensor format, CSV import, a synthetic ECG-like
//! generator, splitting and one-hot labels.

mod synth;
mod t64;

pub use synth::{generate_synth, SynthSpec};
pub use t64::{read_tensor, write_tensor, T64_MAGIC};

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::nn::model::{ModelVariant, NUM_CLASSES};
use crate::nn::Tensor;

/// Beat types of the five-class heartbeat task.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["N", "L", "R", "A", "V"];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid label: {0}")]
    Label(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `[S, C, T]`
    pub x: Tensor,
    pub y: Vec<usize>,
    pub classes: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(x: Tensor, y: Vec<usize>, classes: usize, name: &str) -> Result<Self, DataError> {
        if x.shape().len() != 3 {
            return Err(DataError::Shape(format!("expected [S, C, T], got {:?}", x.shape())));
        }
        if x.dim(0) != y.len() {
            return Err(DataError::Shape(format!("{} samples but {} labels", x.dim(0), y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
            return Err(DataError::Label(format!("label {bad} outside [0, {classes})")));
        }
        Ok(Self { x, y, classes, name: name.to_string() })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.x.dim(1)
    }

    pub fn timesteps(&self) -> usize {
        self.x.dim(2)
    }

    pub fn check_variant(&self, v: ModelVariant) -> Result<(), DataError> {
        if self.channels() != v.in_channels() || self.timesteps() != v.timesteps() {
            return Err(DataError::Shape(format!(
                "dataset has C={} T={}, model {v} needs C={} T={}",
                self.channels(),
                self.timesteps(),
                v.in_channels(),
                v.timesteps()
            )));
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.gather_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
            name: self.name.clone(),
        }
    }

    /// Inputs and one-hot targets for the given sample indices.
    pub fn batch(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let labels: Vec<usize> = idx.iter().map(|&i| self.y[i]).collect();
        (self.x.gather_rows(idx), one_hot(&labels, self.classes))
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.y {
            h[l] += 1;
        }
        h
    }

    /// Writes inputs then labels as two consecutive `.t64` tensors.
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        write_tensor(&mut w, &self.x)?;
        let labels = Tensor::new(&[self.len()], self.y.iter().map(|&l| l as f64).collect())
            .map_err(|e| DataError::Malformed(e.to_string()))?;
        write_tensor(&mut w, &labels)?;
        w.flush()?;
        Ok(())
    }
}

/// Loads a dataset written by [`Dataset::save`], checking it fits `variant`.
pub fn load_dataset(path: &Path, variant: Option<ModelVariant>) -> Result<Dataset, DataError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let ds = read_dataset(&mut r, &path.display().to_string())?;
    if let Some(v) = variant {
        ds.check_variant(v)?;
    }
    Ok(ds)
}

pub fn read_dataset<R: Read>(r: &mut R, name: &str) -> Result<Dataset, DataError> {
    let x = read_tensor(r)?;
    let labels = read_tensor(r)?;
    if labels.shape().len() != 1 {
        return Err(DataError::Malformed("label tensor must be rank 1".into()));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DataError::Malformed("trailing bytes after label tensor".into()));
    }
    let y = labels_from_f64(labels.data())?;
    Dataset::new(x, y, NUM_CLASSES, name)
}

fn labels_from_f64(v: &[f64]) -> Result<Vec<usize>, DataError> {
    v.iter()
        .map(|&l| {
            if l.fract() != 0.0 || l < 0.0 {
                Err(DataError::Label(format!("label {l} is not a class index")))
            } else {
                Ok(l as usize)
            }
        })
        .collect()
}

/// CSV with one sample per row: `C*T` values (channel-major) then the label.
pub fn load_csv(path: &Path, channels: usize, timesteps: usize) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Malformed(e.to_string()))?;
    let width = channels * timesteps;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Malformed(e.to_string()))?;
        if rec.len() != width + 1 {
            return Err(DataError::Shape(format!("row {} has {} fields, expected {}", line + 1, rec.len(), width + 1)));
        }
        for f in rec.iter().take(width) {
            let v: f64 = f.parse().map_err(|_| DataError::Malformed(format!("row {}: bad number {f:?}", line + 1)))?;
            xs.push(v);
        }
        let l: f64 = rec[width].parse().map_err(|_| DataError::Malformed(format!("row {}: bad label", line + 1)))?;
        ys.push(l);
    }
    if ys.is_empty() {
        return Err(DataError::Malformed("empty CSV".into()));
    }
    let x = Tensor::new(&[ys.len(), channels, timesteps], xs).map_err(|e| DataError::Malformed(e.to_string()))?;
    Dataset::new(x, labels_from_f64(&ys)?, NUM_CLASSES, &path.display().to_string())
}

pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut v = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        v[i * classes + l] = 1.0;
    }
    Tensor::new(&[labels.len().max(1), classes], if labels.is_empty() { vec![0.0; classes] } else { v })
        .expect("one-hot shape")
}

/// Seeded shuffle, then the first `round(ratio * S)` samples go to training.
pub fn train_test_split(ds: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::Shape(format!("split ratio {ratio} not in (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let cut = (ratio * ds.len() as f64).round() as usize;
    if cut == 0 || cut == ds.len() {
        return Err(DataError::Shape("split leaves one side empty".into()));
    }
    Ok((ds.subset(&idx[..cut]), ds.subset(&idx[cut..])))
}

/// Seeded per-epoch sample order.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_0000_0000_0000);
    rng.set_stream(epoch as u64);
    idx.shuffle(&mut rng);
    idx
}
