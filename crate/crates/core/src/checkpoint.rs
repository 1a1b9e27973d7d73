//! Self-describing binary checkpoint container shared by both model kinds:
//! magic, format version, a kind tag, a JSON hyperparameter block, then each
//! parameter tensor as (name, rows, cols, little-endian f64 data).

use crate::codec::{AutoencoderModel, CodecHyperparams};
use crate::mil::{ClassifierHyperparams, ClassifierModel};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"ADVSCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Autoencoder,
    Classifier,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Autoencoder => 0,
            ModelKind::Classifier => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(ModelKind::Autoencoder),
            1 => Some(ModelKind::Classifier),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint holds a {found:?} model, expected {expected:?}")]
    WrongKind { expected: ModelKind, found: ModelKind },
    #[error("hyperparameters: {0}")]
    Hyperparams(#[from] serde_json::Error),
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(kind: ModelKind, hp_json: &str) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(kind.tag());
        buf.extend_from_slice(&(hp_json.len() as u32).to_le_bytes());
        buf.extend_from_slice(hp_json.as_bytes());
        Writer { buf }
    }

    fn tensors(&mut self, names: &[&str], tensors: &[&Tensor]) {
        self.buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in names.iter().zip(tensors) {
            self.buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            self.buf.extend_from_slice(name.as_bytes());
            self.buf.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            self.buf.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                self.buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Format("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn header(&mut self, expected: ModelKind) -> Result<String, CheckpointError> {
        if self.take(8)? != MAGIC {
            return Err(CheckpointError::Format("bad magic".into()));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Format(format!("unsupported format version {version}")));
        }
        let tag = self.take(1)?[0];
        let kind = ModelKind::from_tag(tag)
            .ok_or_else(|| CheckpointError::Format(format!("unknown model kind {tag}")))?;
        if kind != expected {
            return Err(CheckpointError::WrongKind { expected, found: kind });
        }
        let hp_len = self.u32()? as usize;
        let hp = std::str::from_utf8(self.take(hp_len)?)
            .map_err(|_| CheckpointError::Format("hyperparameters are not utf-8".into()))?;
        Ok(hp.to_string())
    }

    fn tensors(&mut self) -> Result<Vec<(String, Tensor)>, CheckpointError> {
        let count = self.u32()? as usize;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = self.u32()? as usize;
            let name = std::str::from_utf8(self.take(name_len)?)
                .map_err(|_| CheckpointError::Format("tensor name is not utf-8".into()))?
                .to_string();
            let rows = self.u32()? as usize;
            let cols = self.u32()? as usize;
            let bytes = self.take(rows * cols * 8)?;
            let data: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            out.push((name, Tensor::from_vec(rows, cols, data)));
        }
        Ok(out)
    }
}

fn fill_params(
    names: &[&str],
    params: Vec<&mut Tensor>,
    mut loaded: Vec<(String, Tensor)>,
) -> Result<(), CheckpointError> {
    for (name, slot) in names.iter().zip(params) {
        let idx = loaded
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| CheckpointError::Format(format!("missing tensor {name}")))?;
        let (_, t) = loaded.swap_remove(idx);
        if (t.rows(), t.cols()) != (slot.rows(), slot.cols()) {
            return Err(CheckpointError::Format(format!(
                "tensor {name}: shape ({}x{}) does not match model ({}x{})",
                t.rows(),
                t.cols(),
                slot.rows(),
                slot.cols()
            )));
        }
        *slot = t;
    }
    if let Some((name, _)) = loaded.first() {
        return Err(CheckpointError::Format(format!("unexpected tensor {name}")));
    }
    Ok(())
}

pub fn save_autoencoder(path: &Path, model: &AutoencoderModel) -> Result<(), CheckpointError> {
    let hp = serde_json::to_string(&model.hp)?;
    let mut w = Writer::new(ModelKind::Autoencoder, &hp);
    w.tensors(&model.param_names(), &model.params());
    fs::write(path, w.buf)?;
    Ok(())
}

pub fn load_autoencoder(path: &Path) -> Result<AutoencoderModel, CheckpointError> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    let hp_json = r.header(ModelKind::Autoencoder)?;
    let hp: CodecHyperparams = serde_json::from_str(&hp_json)?;
    let loaded = r.tensors()?;
    let mut model = AutoencoderModel::init(hp, &mut ChaCha8Rng::seed_from_u64(0));
    let names = model.param_names();
    fill_params(&names, model.params_mut(), loaded)?;
    Ok(model)
}

pub fn save_classifier(path: &Path, model: &ClassifierModel) -> Result<(), CheckpointError> {
    let hp = serde_json::to_string(&model.hp)?;
    let mut w = Writer::new(ModelKind::Classifier, &hp);
    w.tensors(&model.param_names(), &model.params());
    fs::write(path, w.buf)?;
    Ok(())
}

pub fn load_classifier(path: &Path) -> Result<ClassifierModel, CheckpointError> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    let hp_json = r.header(ModelKind::Classifier)?;
    let hp: ClassifierHyperparams = serde_json::from_str(&hp_json)?;
    let loaded = r.tensors()?;
    let mut model = ClassifierModel::init(hp, &mut ChaCha8Rng::seed_from_u64(0));
    let names = model.param_names();
    fill_params(&names, model.params_mut(), loaded)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mil::AggregatorKind;
    use tempfile::tempdir;

    #[test]
    fn autoencoder_checkpoint_roundtrips_bit_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ae.ckpt");
        let hp = CodecHyperparams {
            embed_dim: 6,
            latent_dim: 10,
            conv_channels: 8,
            kernel_width: 5,
            max_len: 64,
        };
        let model = AutoencoderModel::init(hp, &mut ChaCha8Rng::seed_from_u64(42));
        save_autoencoder(&path, &model).unwrap();
        let loaded = load_autoencoder(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn classifier_checkpoint_roundtrips_for_both_aggregators() {
        let dir = tempdir().unwrap();
        for kind in [AggregatorKind::Attention, AggregatorKind::MeanMax] {
            let path = dir.path().join("clf.ckpt");
            let hp = ClassifierHyperparams {
                latent_dim: 10,
                heads: 2,
                hidden: 4,
                head_hidden: 8,
                aggregator: kind,
            };
            let model = ClassifierModel::init(hp, &mut ChaCha8Rng::seed_from_u64(7));
            save_classifier(&path, &model).unwrap();
            let loaded = load_classifier(&path).unwrap();
            assert_eq!(model, loaded);
        }
    }

    #[test]
    fn kind_tag_is_checked() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ae.ckpt");
        let hp = CodecHyperparams {
            embed_dim: 6,
            latent_dim: 10,
            conv_channels: 8,
            kernel_width: 5,
            max_len: 64,
        };
        let model = AutoencoderModel::init(hp, &mut ChaCha8Rng::seed_from_u64(1));
        save_autoencoder(&path, &model).unwrap();
        assert!(matches!(
            load_classifier(&path),
            Err(CheckpointError::WrongKind { .. })
        ));
    }

    #[test]
    fn truncated_files_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"ADVSCKPT\x01").unwrap();
        assert!(matches!(load_autoencoder(&path), Err(CheckpointError::Format(_))));
    }
}
