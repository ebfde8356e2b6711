//! Single-file weight checkpoints: magic, format version, config echo, then
//! named f64 tensors (little endian).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::nn::{Arr, ParamStore};

use super::config::DetectorConfig;
use super::model::GroupDetector;

const MAGIC: &[u8; 4] = b"GDCK";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, cfg: &DetectorConfig, params: &ParamStore) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg_json = serde_json::to_vec(cfg)?;
    out.extend_from_slice(&(cfg_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&cfg_json);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for (name, value) in params.iter() {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.ndim() as u64).to_le_bytes());
        for &d in value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in value.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::WeightMismatch("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(DetectorConfig, Vec<(String, Arr)>)> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::WeightMismatch("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::WeightMismatch(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let cfg_len = r.u64()? as usize;
    let cfg: DetectorConfig = serde_json::from_slice(r.take(cfg_len)?)?;
    let n_tensors = r.u64()? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = r.u64()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::WeightMismatch("invalid tensor name".into()))?;
        let ndim = r.u64()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.f64()?);
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|e| Error::WeightMismatch(e.to_string()))?;
        tensors.push((name, arr));
    }
    Ok((cfg, tensors))
}

/// Rebuild a model from a checkpoint (config echo + weights).
pub fn model_from_checkpoint(path: &Path) -> Result<GroupDetector> {
    let (cfg, tensors) = load_checkpoint(path)?;
    let mut model = GroupDetector::new(cfg)?;
    model.load_weights(tensors)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::config::DetectorConfig;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let cfg = DetectorConfig { seed: 5, ..DetectorConfig::tiny() };
        let model = GroupDetector::new(cfg.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &cfg, &model.params).unwrap();
        let restored = model_from_checkpoint(&path).unwrap();
        assert_eq!(restored.cfg, cfg);
        for (name, value) in model.params.iter() {
            let id = restored.params.id_of(name).unwrap();
            assert_eq!(restored.params.value(id), value, "tensor {name}");
        }
    }

    #[test]
    fn wrong_preset_weights_are_rejected() {
        let tiny = GroupDetector::new(DetectorConfig::tiny()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.ckpt");
        save_checkpoint(&path, &tiny.cfg, &tiny.params).unwrap();
        let (_, tensors) = load_checkpoint(&path).unwrap();
        let mut full = GroupDetector::new(DetectorConfig::default()).unwrap();
        assert!(matches!(full.load_weights(tensors), Err(Error::WeightMismatch(_))));
    }

    #[test]
    fn corrupt_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
