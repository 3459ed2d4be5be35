//! Versioned binary model container.
//!
//! Layout (all integers `u32` little-endian, all parameters `f64` little-endian):
//!
//! ```text
//! magic "FAMEMODL" | version | precision tag (u8: 32 or 64)
//! input C, H, W | head tag (u8: 0 = classification, 1 = embedding) | head size
//! feature layer | embedding layer | layer count | layers...
//! ```
//!
//! Each layer starts with a `u8` tag: 0 conv2d (stride, padding, out, in, k,
//! weights, biases), 1 relu, 2 maxpool (kernel, stride), 3 global_avgpool,
//! 4 flatten, 5 linear (out, in, weights, biases).

use std::fs;
use std::path::Path;

use super::{Head, LayerSpec, ModelGraph, NetError, Precision, Tensor};

pub const MAGIC: &[u8; 8] = b"FAMEMODL";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_model(model: &ModelGraph) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + model.param_count() * 8);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    out.push(model.precision().tag());
    for d in model.input_shape() {
        put_u32(&mut out, d as u32);
    }
    match model.head() {
        Head::Classification { classes } => {
            out.push(0);
            put_u32(&mut out, classes as u32);
        }
        Head::Embedding { dim } => {
            out.push(1);
            put_u32(&mut out, dim as u32);
        }
    }
    put_u32(&mut out, model.feature_layer() as u32);
    put_u32(&mut out, model.embedding_layer() as u32);
    put_u32(&mut out, model.layers().len() as u32);
    for layer in model.layers() {
        match layer {
            LayerSpec::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                out.push(0);
                put_u32(&mut out, *stride as u32);
                put_u32(&mut out, *padding as u32);
                let s = weight.shape();
                put_u32(&mut out, s[0] as u32);
                put_u32(&mut out, s[1] as u32);
                put_u32(&mut out, s[2] as u32);
                put_f64s(&mut out, weight.values());
                put_f64s(&mut out, bias.values());
            }
            LayerSpec::Relu => out.push(1),
            LayerSpec::MaxPool { kernel, stride } => {
                out.push(2);
                put_u32(&mut out, *kernel as u32);
                put_u32(&mut out, *stride as u32);
            }
            LayerSpec::GlobalAvgPool => out.push(3),
            LayerSpec::Flatten => out.push(4),
            LayerSpec::Linear { weight, bias } => {
                out.push(5);
                let s = weight.shape();
                put_u32(&mut out, s[0] as u32);
                put_u32(&mut out, s[1] as u32);
                put_f64s(&mut out, weight.values());
                put_f64s(&mut out, bias.values());
            }
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelGraph, NetError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(NetError::Format(format!(
            "bad magic bytes {magic:?}, expected {:?} (fame model container)",
            std::str::from_utf8(MAGIC).unwrap()
        )));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(NetError::Format(format!(
            "unsupported model format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let precision_tag = r.u8()?;
    let precision = Precision::from_tag(precision_tag)
        .ok_or_else(|| NetError::Format(format!("unknown precision tag {precision_tag}")))?;
    let input_shape = [r.dim()?, r.dim()?, r.dim()?];
    let head = match r.u8()? {
        0 => Head::Classification { classes: r.dim()? },
        1 => Head::Embedding { dim: r.dim()? },
        t => return Err(NetError::Format(format!("unknown head tag {t}"))),
    };
    let feature_layer = r.dim()?;
    let embedding_layer = r.dim()?;
    let count = r.dim()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let layer = match r.u8()? {
            0 => {
                let stride = r.dim()?;
                let padding = r.dim()?;
                let (o, c, k) = (r.dim()?, r.dim()?, r.dim()?);
                let weight = r.tensor(vec![o, c, k, k])?;
                let bias = r.tensor(vec![o])?;
                LayerSpec::Conv2d {
                    weight,
                    bias,
                    stride,
                    padding,
                }
            }
            1 => LayerSpec::Relu,
            2 => LayerSpec::MaxPool {
                kernel: r.dim()?,
                stride: r.dim()?,
            },
            3 => LayerSpec::GlobalAvgPool,
            4 => LayerSpec::Flatten,
            5 => {
                let (o, n) = (r.dim()?, r.dim()?);
                let weight = r.tensor(vec![o, n])?;
                let bias = r.tensor(vec![o])?;
                LayerSpec::Linear { weight, bias }
            }
            t => return Err(NetError::Format(format!("unknown layer tag {t} at layer {i}"))),
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(NetError::Format(format!(
            "{} trailing bytes after layer list",
            bytes.len() - r.pos
        )));
    }
    ModelGraph::new(input_shape, layers, feature_layer, embedding_layer, head, precision)
        .map_err(|e| NetError::Format(format!("decoded model is inconsistent: {e}")))
}

pub fn save_model(model: &ModelGraph, path: impl AsRef<Path>) -> Result<(), NetError> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelGraph, NetError> {
    decode_model(&fs::read(path)?)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            NetError::Format(format!(
                "truncated model file: needed {n} bytes at offset {}, {} available",
                self.pos,
                self.bytes.len() - self.pos.min(self.bytes.len())
            ))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn dim(&mut self) -> Result<usize, NetError> {
        Ok(self.u32()? as usize)
    }

    fn tensor(&mut self, shape: Vec<usize>) -> Result<Tensor, NetError> {
        let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n
            .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= self.bytes.len()))
            .ok_or_else(|| NetError::Format(format!("implausible tensor shape {shape:?}")))?;
        let raw = self.take(n * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, values).map_err(|e| NetError::Format(format!("bad tensor: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{identity_embedder, shapes_classifier};
    use super::*;

    #[test]
    fn round_trip_is_bit_identical() {
        for model in [shapes_classifier(3), identity_embedder(4, 8).with_precision(Precision::F64)] {
            let bytes = encode_model(&model);
            let back = decode_model(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(encode_model(&back), bytes);
        }
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let bytes = encode_model(&shapes_classifier(3));
        for cut in [0, 5, 12, 40, bytes.len() - 1] {
            assert!(matches!(decode_model(&bytes[..cut]), Err(NetError::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn wrong_magic_names_expected_format() {
        let mut bytes = encode_model(&shapes_classifier(3));
        bytes[0] = b'X';
        let err = decode_model(&bytes).unwrap_err().to_string();
        assert!(err.contains("FAMEMODL"), "{err}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let model = shapes_classifier(9);
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }
}
