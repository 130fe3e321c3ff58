//! MNIST / Fashion-MNIST ingestion from IDX files and stratified subsets.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;

use crate::error::{Error, FormatError, Result};
use crate::image::ImageTensor;
use crate::seed;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetName {
    Mnist,
    Fmnist,
}

impl DatasetName {
    pub fn name(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Fmnist => "fmnist",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "fmnist" | "fashion_mnist" => Ok(DatasetName::Fmnist),
            _ => Err(Error::invalid(format!("unknown dataset '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: DatasetName,
    pub images: Vec<ImageTensor>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn labels_usize(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| usize::from(l)).collect()
    }

    /// Digest of pixel bytes and labels; identifies a subset in cache keys.
    pub fn fingerprint(&self) -> u64 {
        let mut buf = Vec::with_capacity(self.len() * 785);
        buf.extend_from_slice(self.name.name().as_bytes());
        for (img, &label) in self.images.iter().zip(&self.labels) {
            buf.push(label);
            buf.extend(img.data().iter().map(|&v| (v * 255.0).round() as u8));
        }
        seed::hash64(&buf)
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], word: usize) -> u32 {
    u32::from_be_bytes(bytes[4 * word..4 * word + 4].try_into().unwrap())
}

fn check_header(path: &Path, bytes: &[u8], magic: u32, words: usize) -> Result<()> {
    if bytes.len() < 4 * words {
        return Err(Error::format(
            path,
            FormatError::Truncated {
                expected: 4 * words,
                found: bytes.len(),
            },
        ));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::format(path, FormatError::BadMagic { expected: magic, found }));
    }
    Ok(())
}

/// Parses an IDX3 image file and IDX1 label file (optionally gzipped). Pixels
/// are mapped to `[0, 1]` by `byte / 255`. Fails without returning a partial
/// dataset on any header or length problem.
pub fn load_idx(images_path: &Path, labels_path: &Path, name: DatasetName) -> Result<Dataset> {
    let img_bytes = read_maybe_gz(images_path)?;
    let lbl_bytes = read_maybe_gz(labels_path)?;
    check_header(images_path, &img_bytes, IDX_IMAGES_MAGIC, 4)?;
    check_header(labels_path, &lbl_bytes, IDX_LABELS_MAGIC, 2)?;

    let count = be_u32(&img_bytes, 1) as usize;
    let rows = be_u32(&img_bytes, 2) as usize;
    let cols = be_u32(&img_bytes, 3) as usize;
    let label_count = be_u32(&lbl_bytes, 1) as usize;
    if count != label_count {
        return Err(Error::format(
            labels_path,
            FormatError::CountMismatch {
                images: count,
                labels: label_count,
            },
        ));
    }
    let pixels = rows * cols;
    let expected = 16 + count * pixels;
    if img_bytes.len() != expected {
        return Err(Error::format(
            images_path,
            FormatError::Truncated {
                expected,
                found: img_bytes.len(),
            },
        ));
    }
    if lbl_bytes.len() != 8 + count {
        return Err(Error::format(
            labels_path,
            FormatError::Truncated {
                expected: 8 + count,
                found: lbl_bytes.len(),
            },
        ));
    }
    let labels = lbl_bytes[8..].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= NUM_CLASSES) {
        return Err(Error::format(
            labels_path,
            FormatError::Malformed(format!("label {bad} outside 0..{NUM_CLASSES}")),
        ));
    }
    let images = img_bytes[16..]
        .chunks_exact(pixels.max(1))
        .take(count)
        .map(|px| ImageTensor::new(rows, cols, 1, px.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { name, images, labels })
}

/// Writes a dataset back out as uncompressed IDX. Pixels are re-quantized with
/// `round(x · 255)`, which inverts the loader's normalization exactly.
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (rows, cols) = ds
        .images
        .first()
        .map(|i| (i.height(), i.width()))
        .unwrap_or((28, 28));
    let mut img = Vec::with_capacity(16 + ds.len() * rows * cols);
    for v in [IDX_IMAGES_MAGIC, ds.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for image in &ds.images {
        if image.dims() != (rows, cols, 1) {
            return Err(Error::invalid("IDX images must share one single-channel shape"));
        }
        img.extend(image.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    let mut lbl = Vec::with_capacity(8 + ds.len());
    for v in [IDX_LABELS_MAGIC, ds.len() as u32] {
        lbl.extend_from_slice(&v.to_be_bytes());
    }
    lbl.extend_from_slice(&ds.labels);
    fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, lbl).map_err(|e| Error::io(labels_path, e))
}

fn locate(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    let gz = dir.join(format!("{stem}.gz"));
    if !plain.exists() && gz.exists() {
        gz
    } else {
        plain
    }
}

/// Loads `<root>/<name>/train-{images-idx3,labels-idx1}-ubyte[.gz]`.
pub fn load_from_dir(root: &Path, name: DatasetName) -> Result<Dataset> {
    let dir = root.join(name.name());
    load_idx(
        &locate(&dir, "train-images-idx3-ubyte"),
        &locate(&dir, "train-labels-idx1-ubyte"),
        name,
    )
}

/// Split sizes per class: every class gets `⌊n/10⌋`, and a seeded choice of
/// `n mod 10` classes get one more.
fn class_quota(n: usize, rng: &mut seed::Rng) -> [usize; NUM_CLASSES] {
    let mut quota = [n / NUM_CLASSES; NUM_CLASSES];
    let mut classes: Vec<usize> = (0..NUM_CLASSES).collect();
    classes.shuffle(rng);
    for &c in classes.iter().take(n % NUM_CLASSES) {
        quota[c] += 1;
    }
    quota
}

fn pick(ds: &Dataset, indices: &[usize]) -> Dataset {
    Dataset {
        name: ds.name,
        images: indices.iter().map(|&i| ds.images[i].clone()).collect(),
        labels: indices.iter().map(|&i| ds.labels[i]).collect(),
    }
}

/// Class-balanced, disjoint train/test subsets. Within each split the
/// per-class counts differ by at most one. Deterministic per seed.
pub fn subset_indices(ds: &Dataset, n_train: usize, n_test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train + n_test > ds.len() {
        return Err(Error::invalid(format!(
            "requested {} samples from a dataset of {}",
            n_train + n_test,
            ds.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[usize::from(l)].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let train_quota = class_quota(n_train, &mut rng);
    let test_quota = class_quota(n_test, &mut rng);
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n_test);
    for c in 0..NUM_CLASSES {
        let need = train_quota[c] + test_quota[c];
        if by_class[c].len() < need {
            return Err(Error::invalid(format!(
                "class {c} has {} samples, stratified split needs {need}",
                by_class[c].len()
            )));
        }
        train.extend_from_slice(&by_class[c][..train_quota[c]]);
        test.extend_from_slice(&by_class[c][train_quota[c]..need]);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train, test))
}

pub fn subset(ds: &Dataset, n_train: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = subset_indices(ds, n_train, n_test, seed)?;
    Ok((pick(ds, &train), pick(ds, &test)))
}
