use std::f64::consts::TAU;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::noisy_labels::LabeledSet;
use crate::numerics::Tensor;
use crate::rng::Seeder;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Reads an IDX file. Image files (`0x803`, `[count, rows, cols]`) are
/// scaled to `[0, 1]` by dividing by 255; label files (`0x801`, `[count]`)
/// keep their raw byte values.
pub fn load_idx(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, path)
}

pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let truncated = |expected: u64| Error::IdxTruncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len() as u64,
    };
    if bytes.len() < 4 {
        return Err(truncated(4));
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().expect("four bytes"));
    let rank = match magic {
        IDX_IMAGES => 3,
        IDX_LABELS => 1,
        _ => {
            return Err(Error::IdxBadMagic {
                path: path.to_path_buf(),
                magic,
            })
        }
    };
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(truncated(header as u64));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("four bytes")) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .and_then(|c| c.checked_add(header))
        .ok_or_else(|| Error::IdxDimOverflow { path: path.to_path_buf() })?;
    if bytes.len() < count {
        return Err(truncated(count as u64));
    }
    let payload = &bytes[header..count];
    let data = if magic == IDX_IMAGES {
        payload.iter().map(|b| f64::from(*b) / 255.0).collect()
    } else {
        payload.iter().map(|b| f64::from(*b)).collect()
    };
    Tensor::new(dims, data)
}

/// Loads an image/label IDX pair as a labeled set with flattened rows.
pub fn load_idx_pair(images: &Path, labels: &Path, n_classes: usize) -> Result<LabeledSet> {
    let x = load_idx(images)?;
    let y = load_idx(labels)?;
    let n = x.shape()[0];
    let width = x.len() / n.max(1);
    let x = x.reshape(vec![n, width])?;
    let labels: Vec<usize> = y.data().iter().map(|v| *v as usize).collect();
    LabeledSet::new(x, labels, n_classes)
}

/// 2-D Gaussian blobs with class centers evenly spaced on the unit circle.
/// Items are interleaved by class (`item i` has class `i mod n_classes`).
/// Fails unless the `6·spread` disks around the centers are disjoint.
pub fn synth_blobs(n_classes: usize, n_per_class: usize, spread: f64, seeder: &Seeder) -> Result<LabeledSet> {
    if n_classes < 2 {
        return Err(Error::Domain("blobs need at least two classes".into()));
    }
    if n_per_class == 0 {
        return Err(Error::Domain("blobs need at least one item per class".into()));
    }
    let gap = 2.0 * (std::f64::consts::PI / n_classes as f64).sin();
    if !(spread > 0.0 && 12.0 * spread < gap) {
        return Err(Error::Domain(format!(
            "spread {spread} overlaps: 6-sigma disks need center distance > {}, have {gap}",
            12.0 * spread
        )));
    }
    let mut rng = seeder.stream("blobs", 0);
    let n = n_classes * n_per_class;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % n_classes;
        let (cx, cy) = blob_center(c, n_classes);
        let dx: f64 = StandardNormal.sample(&mut rng);
        let dy: f64 = StandardNormal.sample(&mut rng);
        data.push(cx + spread * dx);
        data.push(cy + spread * dy);
        labels.push(c);
    }
    LabeledSet::new(Tensor::new(vec![n, 2], data)?, labels, n_classes)
}

pub fn blob_center(c: usize, n_classes: usize) -> (f64, f64) {
    let angle = TAU * c as f64 / n_classes as f64;
    (angle.cos(), angle.sin())
}
