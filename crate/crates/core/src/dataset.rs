//! Image dataset containers: IDX (MNIST, Fashion-MNIST) and CIFAR-10 binary.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::binio::Reader;
use crate::encoding::{encode_image, preprocess_on_off_center, preprocess_on_off_per_channel, DogParams, ImageTensor, SpikeTrain};
use crate::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<(ImageTensor, usize)>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(samples: Vec<(ImageTensor, usize)>, class_count: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Parameter("dataset has no samples".into()));
        }
        if let Some((_, label)) = samples.iter().find(|(_, l)| *l >= class_count) {
            return Err(Error::Domain(format!("label {label} outside 0..{class_count}")));
        }
        Ok(LabeledDataset { samples, class_count })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|(_, l)| *l).collect()
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        LabeledDataset::new(indices.iter().map(|&i| self.samples[i].clone()).collect(), self.class_count)
    }
}

/// Parses an IDX image file (`ubyte`, 3 dimensions) and its label file.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let mut ir = Reader::new(images);
    let magic = ir.u32_be("image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::parse("image magic", format!("got {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let count = ir.u32_be("image count")? as usize;
    let rows = ir.u32_be("image rows")? as usize;
    let cols = ir.u32_be("image columns")? as usize;
    let pixels = ir.take(
        count
            .checked_mul(rows * cols)
            .ok_or_else(|| Error::parse("image count", "size overflow"))?,
        "image pixels",
    )?;
    ir.finish("image file")?;

    let mut lr = Reader::new(labels);
    let magic = lr.u32_be("label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::parse("label magic", format!("got {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let label_count = lr.u32_be("label count")? as usize;
    if label_count != count {
        return Err(Error::parse("label count", format!("{label_count} labels for {count} images")));
    }
    let label_bytes = lr.take(count, "labels")?;
    lr.finish("label file")?;

    if count == 0 {
        return Err(Error::parse("image count", "file holds no images"));
    }
    let class_count = *label_bytes.iter().max().unwrap() as usize + 1;
    let size = rows * cols;
    let samples = label_bytes
        .iter()
        .enumerate()
        .map(|(i, &label)| Ok((ImageTensor::from_u8(rows, cols, 1, &pixels[i * size..(i + 1) * size])?, label as usize)))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(samples, class_count)
}

/// Writes a grayscale dataset back to IDX image and label bytes. Intensities
/// are quantized to the nearest of 256 levels.
pub fn to_idx(dataset: &LabeledDataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let first = &dataset.samples[0].0;
    let (rows, cols) = (first.height(), first.width());
    let mut images = Vec::with_capacity(16 + dataset.len() * rows * cols);
    let mut labels = Vec::with_capacity(8 + dataset.len());
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    for (image, label) in &dataset.samples {
        if image.channels() != 1 || image.height() != rows || image.width() != cols {
            return Err(Error::structural(
                "IDX sample shape",
                format!("1x{rows}x{cols}"),
                format!("{}x{}x{}", image.channels(), image.height(), image.width()),
            ));
        }
        let label = u8::try_from(*label).map_err(|_| Error::Domain(format!("label {label} does not fit a byte")))?;
        images.extend(image.values().iter().map(|v| (v * 255.0).round() as u8));
        labels.push(label);
    }
    Ok((images, labels))
}

/// Parses one CIFAR-10 binary batch: records of one label byte followed by
/// 3072 channel-major pixel bytes (R, G, B planes of 32x32).
pub fn parse_cifar10(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::parse(
            "record length",
            format!("{} bytes is not a positive multiple of {CIFAR_RECORD}", bytes.len()),
        ));
    }
    let samples = bytes
        .chunks_exact(CIFAR_RECORD)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            if label >= 10 {
                return Err(Error::parse("label", format!("record {i} has label {label}")));
            }
            Ok((ImageTensor::from_u8(CIFAR_SIDE, CIFAR_SIDE, 3, &rec[1..])?, label))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(samples, 10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Cifar10,
}

impl DatasetKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mnist" => Ok(DatasetKind::Mnist),
            "fashion-mnist" | "fashion" => Ok(DatasetKind::FashionMnist),
            "cifar10" | "cifar-10" => Ok(DatasetKind::Cifar10),
            other => Err(Error::config("dataset", format!("unknown dataset `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::FashionMnist => "fashion-mnist",
            DatasetKind::Cifar10 => "cifar10",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Loads a split from a directory holding the usual file names:
/// `{train,t10k}-{images-idx3,labels-idx1}-ubyte` for IDX datasets,
/// `data_batch_{1..5}.bin` / `test_batch.bin` for CIFAR-10.
pub fn load_split(dir: impl AsRef<Path>, kind: DatasetKind, split: Split) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    match kind {
        DatasetKind::Mnist | DatasetKind::FashionMnist => {
            let prefix = if split == Split::Train { "train" } else { "t10k" };
            let images = fs::read(dir.join(format!("{prefix}-images-idx3-ubyte")))?;
            let labels = fs::read(dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
            let mut ds = parse_idx(&images, &labels)?;
            ds.class_count = ds.class_count.max(10);
            Ok(ds)
        }
        DatasetKind::Cifar10 => {
            let files: Vec<String> = match split {
                Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
                Split::Test => vec!["test_batch.bin".to_string()],
            };
            let mut samples = Vec::new();
            for f in files {
                samples.extend(parse_cifar10(&fs::read(dir.join(f))?)?.samples);
            }
            LabeledDataset::new(samples, 10)
        }
    }
}

/// DoG on/off-center filtering followed by latency coding, one spike train
/// per sample. Color images are filtered per channel.
pub fn encode_dataset(dataset: &LabeledDataset, dog: &DogParams, t_max: f64) -> Result<Vec<(SpikeTrain, usize)>> {
    dataset
        .samples
        .par_iter()
        .map(|(image, label)| {
            let planes = if image.channels() == 1 {
                preprocess_on_off_center(image, dog)?
            } else {
                preprocess_on_off_per_channel(image, dog)?
            };
            Ok((encode_image(&planes, t_max, true)?, *label))
        })
        .collect()
}
