//! Dataset container: the scene configuration plus train and validation splits.

use std::path::{Path, PathBuf};

use oasis_core::scene::{generate_split, LabelMap, Sample, SceneConfig};

use crate::container::{take_record, ContainerReader, ContainerWriter, Decoder, Encoder};
use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 8] = b"OASISDS\0";
pub const FILE_NAME: &str = "dataset.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenes: SceneConfig,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

impl Dataset {
    pub fn generate(scenes: SceneConfig, num_train: usize, num_val: usize) -> Result<Self> {
        scenes.validate()?;
        Ok(Dataset {
            train: generate_split(&scenes, "train", num_train),
            val: generate_split(&scenes, "val", num_val),
            scenes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.scenes.num_classes
    }
}

fn encode_split(samples: &[Sample]) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u64(samples.len() as u64);
    for s in samples {
        e.u32(s.label.height() as u32);
        e.u32(s.label.width() as u32);
        e.bytes(s.label.labels());
        e.tensor(&s.image);
    }
    e.into_bytes()
}

fn decode_split(d: &mut Decoder<'_>, num_classes: usize) -> Result<Vec<Sample>> {
    let n = d.u64()?;
    let mut out = Vec::new();
    for _ in 0..n {
        let at = d.offset();
        let (h, w) = (d.u32()? as usize, d.u32()? as usize);
        let labels = d.bytes()?.to_vec();
        if labels.iter().any(|&c| c as usize >= num_classes) {
            return Err(d.error(format!("label outside {num_classes} classes")));
        }
        let label = LabelMap::new(h, w, labels).map_err(|e| d.error(e.to_string()))?;
        let image = d.tensor()?;
        if image.shape() != [3, h, w] {
            return Err(d.error_at(
                at,
                format!(
                    "image shape {:?} does not match label {h}×{w}",
                    image.shape()
                ),
            ));
        }
        out.push(Sample { label, image });
    }
    d.finish()?;
    Ok(out)
}

/// `path` may name the file itself or a directory holding `dataset.bin`.
pub fn resolve(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(FILE_NAME)
    } else {
        path.to_path_buf()
    }
}

pub fn save(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = ContainerWriter::create(path, MAGIC)?;
    let cfg = serde_json::to_vec(&ds.scenes).map_err(|e| LabError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    w.record("scene_config", &cfg)?;
    w.record("train", &encode_split(&ds.train))?;
    w.record("val", &encode_split(&ds.val))?;
    w.finish()
}

pub fn load(path: &Path) -> Result<Dataset> {
    let path = resolve(path);
    let records = ContainerReader::open(&path, MAGIC)?.read_all()?;
    let (h, cfg) = take_record(&records, "scene_config", &path)?;
    let scenes: SceneConfig = serde_json::from_slice(cfg).map_err(|e| {
        LabError::format(
            &path,
            h.offset + e.column() as u64,
            format!("scene config: {e}"),
        )
    })?;
    scenes.validate()?;
    let split = |tag: &str| -> Result<Vec<Sample>> {
        let (h, payload) = take_record(&records, tag, &path)?;
        decode_split(
            &mut Decoder::new(payload, h.offset, &path),
            scenes.num_classes,
        )
    };
    let train = split("train")?;
    let val = split("val")?;
    Ok(Dataset { scenes, train, val })
}
