//! Classification datasets: seeded Gaussian blobs and the big-endian IDX
//! image/label format.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Cluster centers are drawn at this scale, so with unit spread the blobs
/// are well separated in any dimension.
const CENTER_SCALE: f64 = 4.0;

/// Where a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    SyntheticBlobs,
    MnistIdx,
}

/// Dense classification dataset with row-major inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n * p` row-major feature matrix.
    pub inputs: Vec<f64>,
    /// Class labels, each in `0..k`.
    pub labels: Vec<usize>,
    /// Number of rows.
    pub n: usize,
    /// Features per row.
    pub p: usize,
    /// Number of classes.
    pub k: usize,
    /// Provenance tag echoed into run outputs.
    pub source: DataSource,
}

impl Dataset {
    /// Feature row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.p..(i + 1) * self.p]
    }

    /// Copies the rows and labels at `idx` into flat minibatch buffers.
    pub fn gather(&self, idx: &[usize], xs: &mut Vec<f64>, ys: &mut Vec<usize>) {
        xs.clear();
        ys.clear();
        for &i in idx {
            xs.extend_from_slice(self.row(i));
            ys.push(self.labels[i]);
        }
    }
}

/// `k` seeded Gaussian clusters of `n` points in `p` dimensions.
///
/// Centers are drawn first (scale [`CENTER_SCALE`]), then each point is its
/// class center plus `spread`-scaled Gaussian noise. Class counts are
/// balanced: `n / k` each, remainder going to the lowest class indices, and
/// rows are laid out class by class.
pub fn make_blobs(n: usize, p: usize, k: usize, spread: f64, rng: &mut Rng) -> Result<Dataset> {
    if k < 2 || n < k {
        return Err(Error::InvalidConfig(format!(
            "blobs need n >= k >= 2, got n {n}, k {k}"
        )));
    }
    if p == 0 {
        return Err(Error::InvalidConfig("blobs need p >= 1".into()));
    }
    if !spread.is_finite() || spread <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "blob spread must be finite and > 0, got {spread}"
        )));
    }

    let centers: Vec<f64> = (0..k * p)
        .map(|_| CENTER_SCALE * rng.standard_normal())
        .collect();

    let base = n / k;
    let rem = n % k;
    let mut inputs = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for class in 0..k {
        let count = base + usize::from(class < rem);
        let center = &centers[class * p..(class + 1) * p];
        for _ in 0..count {
            for &c in center {
                inputs.push(c + spread * rng.standard_normal());
            }
            labels.push(class);
        }
    }

    Ok(Dataset {
        inputs,
        labels,
        n,
        p,
        k,
        source: DataSource::SyntheticBlobs,
    })
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::DataFormat(format!(
            "truncated IDX file: {what} needs bytes {offset}..{end}, file has {}",
            bytes.len()
        )));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Loads an IDX image file plus its label file into a [`Dataset`].
///
/// Pixel bytes are scaled to `[0, 1]` by dividing by 255; `k` is one past
/// the largest label. Fails on bad magic numbers, truncated payloads, or an
/// image/label count mismatch.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = std::fs::read(images_path)?;
    let lbl_bytes = std::fs::read(labels_path)?;

    let img_magic = read_be_u32(&img_bytes, 0, "image magic")?;
    if img_magic != IDX_IMAGES_MAGIC {
        return Err(Error::DataFormat(format!(
            "bad magic in image file: expected {IDX_IMAGES_MAGIC:#010x}, got {img_magic:#010x}"
        )));
    }
    let n = read_be_u32(&img_bytes, 4, "image count")? as usize;
    let rows = read_be_u32(&img_bytes, 8, "image rows")? as usize;
    let cols = read_be_u32(&img_bytes, 12, "image cols")? as usize;
    let p = rows * cols;
    let expected = 16 + n * p;
    if img_bytes.len() != expected {
        return Err(Error::DataFormat(format!(
            "truncated IDX image payload: expected {expected} bytes, got {}",
            img_bytes.len()
        )));
    }

    let lbl_magic = read_be_u32(&lbl_bytes, 0, "label magic")?;
    if lbl_magic != IDX_LABELS_MAGIC {
        return Err(Error::DataFormat(format!(
            "bad magic in label file: expected {IDX_LABELS_MAGIC:#010x}, got {lbl_magic:#010x}"
        )));
    }
    let n_lbl = read_be_u32(&lbl_bytes, 4, "label count")? as usize;
    if n_lbl != n {
        return Err(Error::DataFormat(format!(
            "image/label count mismatch: {n} images vs {n_lbl} labels"
        )));
    }
    let expected_lbl = 8 + n;
    if lbl_bytes.len() != expected_lbl {
        return Err(Error::DataFormat(format!(
            "truncated IDX label payload: expected {expected_lbl} bytes, got {}",
            lbl_bytes.len()
        )));
    }
    if n == 0 || p == 0 {
        return Err(Error::DataFormat(
            "IDX file declares an empty dataset".into(),
        ));
    }

    let inputs: Vec<f64> = img_bytes[16..]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    let labels: Vec<usize> = lbl_bytes[8..].iter().map(|&b| b as usize).collect();
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    if k < 2 {
        return Err(Error::DataFormat(
            "IDX labels contain fewer than 2 classes".into(),
        ));
    }

    Ok(Dataset {
        inputs,
        labels,
        n,
        p,
        k,
        source: DataSource::MnistIdx,
    })
}
