use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::{Array3, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{FfError, Result};
use crate::rng::{self, purpose};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// A labelled stack of grayscale images with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    images: Array3<f32>,
    labels: Vec<usize>,
    class_count: usize,
}

impl ImageSet {
    pub fn new(images: Array3<f32>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.len_of(Axis(0)) != labels.len() {
            return Err(FfError::Consistency(format!(
                "{} images but {} labels",
                images.len_of(Axis(0)),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(FfError::Domain(format!(
                "label {bad} outside 0..{class_count}"
            )));
        }
        if images.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(FfError::Domain("intensity outside [0, 1]".into()));
        }
        Ok(ImageSet {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn height(&self) -> usize {
        self.images.len_of(Axis(1))
    }

    pub fn width(&self) -> usize {
        self.images.len_of(Axis(2))
    }

    pub fn pixels(&self) -> usize {
        self.height() * self.width()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn images(&self) -> &Array3<f32> {
        &self.images
    }

    pub fn image(&self, index: usize) -> ArrayView2<'_, f32> {
        self.images.index_axis(Axis(0), index)
    }

    /// Row-major flattened copy of one image.
    pub fn flat(&self, index: usize) -> Vec<f64> {
        self.image(index).iter().map(|&v| f64::from(v)).collect()
    }

    /// New set holding the given samples, in order.
    pub fn select(&self, indices: &[usize]) -> ImageSet {
        ImageSet {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    pub fn take(&self, count: usize) -> ImageSet {
        let indices: Vec<usize> = (0..count.min(self.len())).collect();
        self.select(&indices)
    }

    /// Replaces the class count (e.g. when a split is missing the last classes).
    pub fn with_class_count(mut self, class_count: usize) -> Result<Self> {
        if self.labels.iter().any(|&l| l >= class_count) {
            return Err(FfError::Domain(format!(
                "class count {class_count} smaller than a present label"
            )));
        }
        self.class_count = class_count;
        Ok(self)
    }

    /// Sample indices grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    /// Shuffled `(train, validation)` partition with `ceil(fraction * n)`
    /// validation samples; both parts keep the original sample order.
    pub fn split_validation(&self, fraction: f64, seed: u64) -> Result<(ImageSet, ImageSet)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(FfError::Config(format!("validation fraction {fraction} outside [0, 1)")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(seed, &[purpose::SPLIT]));
        let held = ((fraction * self.len() as f64).ceil() as usize).min(self.len());
        let mut val = order[..held].to_vec();
        let mut train = order[held..].to_vec();
        val.sort_unstable();
        train.sort_unstable();
        Ok((self.select(&train), self.select(&val)))
    }
}

fn open(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| FfError::io(path, e))?;
    let reader = BufReader::new(file);
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(reader)))
    } else {
        Ok(Box::new(reader))
    }
}

fn read_u32(reader: &mut dyn Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|e| FfError::io(path, e))?;
    Ok(u32::from_be_bytes(buf))
}

fn read_images(path: &Path) -> Result<Array3<f32>> {
    let mut reader = open(path)?;
    let magic = read_u32(&mut *reader, path)?;
    if magic != IMAGE_MAGIC {
        return Err(FfError::Format(format!(
            "{}: image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = read_u32(&mut *reader, path)? as usize;
    let rows = read_u32(&mut *reader, path)? as usize;
    let cols = read_u32(&mut *reader, path)? as usize;
    let mut bytes = vec![0u8; count * rows * cols];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| FfError::io(path, e))?;
    let values = bytes.into_iter().map(|b| f32::from(b) / 255.0).collect();
    Array3::from_shape_vec((count, rows, cols), values)
        .map_err(|e| FfError::Shape(e.to_string()))
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut reader = open(path)?;
    let magic = read_u32(&mut *reader, path)?;
    if magic != LABEL_MAGIC {
        return Err(FfError::Format(format!(
            "{}: label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = read_u32(&mut *reader, path)? as usize;
    let mut bytes = vec![0u8; count];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| FfError::io(path, e))?;
    Ok(bytes)
}

/// Loads an IDX image/label pair (optionally gzip-compressed, by `.gz` suffix).
///
/// Bytes are scaled to `[0, 1]` by division by 255. The class count is the
/// largest label plus one.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<ImageSet> {
    let images = read_images(images_path.as_ref())?;
    let labels = read_labels(labels_path.as_ref())?;
    if images.len_of(Axis(0)) != labels.len() {
        return Err(FfError::Consistency(format!(
            "{} images but {} labels",
            images.len_of(Axis(0)),
            labels.len()
        )));
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let class_count = labels.iter().max().map_or(1, |&m| m + 1);
    ImageSet::new(images, labels, class_count)
}

/// Writes an image set as an IDX pair, quantizing intensities to bytes.
pub fn save_idx(
    set: &ImageSet,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    fn io(p: &Path) -> impl Fn(std::io::Error) -> FfError + '_ {
        move |e| FfError::io(p, e)
    }

    let file = File::create(images_path).map_err(io(images_path))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(16);
    for v in [
        IMAGE_MAGIC,
        set.len() as u32,
        set.height() as u32,
        set.width() as u32,
    ] {
        header.extend_from_slice(&v.to_be_bytes());
    }
    w.write_all(&header).map_err(io(images_path))?;
    let bytes: Vec<u8> = set
        .images
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes).map_err(io(images_path))?;
    w.flush().map_err(io(images_path))?;

    let file = File::create(labels_path).map_err(io(labels_path))?;
    let mut w = BufWriter::new(file);
    w.write_all(&LABEL_MAGIC.to_be_bytes())
        .map_err(io(labels_path))?;
    w.write_all(&(set.len() as u32).to_be_bytes())
        .map_err(io(labels_path))?;
    let labels: Vec<u8> = set.labels.iter().map(|&l| l as u8).collect();
    w.write_all(&labels).map_err(io(labels_path))?;
    w.flush().map_err(io(labels_path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Finds `<dir>/<dataset>/<split>-{images-idx3,labels-idx1}-ubyte[.gz]`.
pub fn resolve_split(data_dir: &Path, dataset: &str, split: Split) -> Result<(PathBuf, PathBuf)> {
    let base = data_dir.join(dataset);
    let find = |kind: &str| -> Result<PathBuf> {
        let name = format!("{}-{kind}-ubyte", split.prefix());
        let plain = base.join(&name);
        if plain.exists() {
            return Ok(plain);
        }
        let gz = base.join(format!("{name}.gz"));
        if gz.exists() {
            return Ok(gz);
        }
        Err(FfError::io(
            plain,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no IDX file (plain or .gz)"),
        ))
    };
    Ok((find("images-idx3")?, find("labels-idx1")?))
}

/// Loads a named dataset split from a data directory laid out by conventional
/// IDX file names. EMNIST-Letters (`letters`, `emnist-letters`) labels 1..=26
/// are shifted to 0..=25.
pub fn load_split(data_dir: &Path, dataset: &str, split: Split) -> Result<ImageSet> {
    let (images, labels) = resolve_split(data_dir, dataset, split)?;
    let set = load_idx(images, labels)?;
    if matches!(dataset, "letters" | "emnist-letters") {
        if set.labels.contains(&0) {
            return Err(FfError::Format("letters labels are expected to start at 1".into()));
        }
        let labels = set.labels.iter().map(|&l| l - 1).collect();
        return ImageSet::new(set.images, labels, 26);
    }
    Ok(set)
}
