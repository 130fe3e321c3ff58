//! QNNM model checkpoints.
//!
//! Little-endian throughout:
//!
//! ```text
//! "QNNM" | version u32 | layer count u32 | rng seed u64 | input rank u32 | dims u32…
//! per layer:
//!   kind u32 (0 conv2d, 1 dense, 2 relu, 3 dropout, 4 flatten, 5 softmax)
//!   conv2d : kernel, stride, in_channels, out_channels (u32)
//!   dense  : inputs, outputs (u32)
//!   dropout: prob (f32)
//!   conv2d/dense then carry two tensors (weights, bias), each as
//!   rank u32 | dims u32… | f32 values
//! ```
//!
//! Parameters are stored as `f32`, so a reloaded model matches the original to
//! single precision.

use std::fs;
use std::path::Path;

use super::{Layer, Model};
use crate::error::{Error, FormatError, Result};

pub const QNNM_MAGIC: &[u8; 4] = b"QNNM";
pub const QNNM_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(buf: &mut Vec<u8>, dims: &[usize], values: &[f64]) {
    put_u32(buf, dims.len());
    for &d in dims {
        put_u32(buf, d);
    }
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(QNNM_MAGIC);
    put_u32(&mut buf, QNNM_VERSION as usize);
    put_u32(&mut buf, model.layers().len());
    buf.extend_from_slice(&model.rng_seed().to_le_bytes());
    put_u32(&mut buf, model.input_shape().len());
    for &d in model.input_shape() {
        put_u32(&mut buf, d);
    }
    for layer in model.layers() {
        match layer {
            Layer::Conv2d {
                kernel,
                stride,
                in_channels,
                out_channels,
                weights,
                bias,
            } => {
                for v in [0, *kernel, *stride, *in_channels, *out_channels] {
                    put_u32(&mut buf, v);
                }
                put_tensor(&mut buf, &[*out_channels, *kernel, *kernel, *in_channels], weights);
                put_tensor(&mut buf, &[*out_channels], bias);
            }
            Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => {
                for v in [1, *inputs, *outputs] {
                    put_u32(&mut buf, v);
                }
                put_tensor(&mut buf, &[*outputs, *inputs], weights);
                put_tensor(&mut buf, &[*outputs], bias);
            }
            Layer::Relu => put_u32(&mut buf, 2),
            Layer::Dropout { prob } => {
                put_u32(&mut buf, 3);
                buf.extend_from_slice(&(*prob as f32).to_le_bytes());
            }
            Layer::Flatten => put_u32(&mut buf, 4),
            Layer::Softmax => put_u32(&mut buf, 5),
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], FormatError> {
        if self.pos + n > self.bytes.len() {
            return Err(FormatError::Truncated {
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<usize, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32(&mut self) -> std::result::Result<f64, FormatError> {
        Ok(f64::from(f32::from_le_bytes(self.take(4)?.try_into().unwrap())))
    }

    fn tensor(&mut self, expected: &[usize]) -> std::result::Result<Vec<f64>, FormatError> {
        let rank = self.u32()?;
        let dims = (0..rank).map(|_| self.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
        if dims != expected {
            return Err(FormatError::Malformed(format!(
                "tensor dims {dims:?}, layer expects {expected:?}"
            )));
        }
        (0..dims.iter().product::<usize>()).map(|_| self.f32()).collect()
    }
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |kind| Error::format(path, kind);
    let mut r = Reader { bytes: &bytes, pos: 0 };
    let magic = r.take(4).map_err(fail)?;
    if magic != QNNM_MAGIC {
        return Err(fail(FormatError::BadMagic {
            expected: u32::from_be_bytes(*QNNM_MAGIC),
            found: u32::from_be_bytes(magic.try_into().unwrap()),
        }));
    }
    let version = r.u32().map_err(fail)? as u32;
    if version != QNNM_VERSION {
        return Err(fail(FormatError::UnsupportedVersion(version)));
    }
    let parse = |r: &mut Reader| -> std::result::Result<(Vec<usize>, Vec<Layer>, u64), FormatError> {
        let count = r.u32()?;
        let seed = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let rank = r.u32()?;
        let input = (0..rank).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let layer = match r.u32()? {
                0 => {
                    let (kernel, stride, in_channels, out_channels) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
                    let weights = r.tensor(&[out_channels, kernel, kernel, in_channels])?;
                    let bias = r.tensor(&[out_channels])?;
                    Layer::Conv2d {
                        kernel,
                        stride,
                        in_channels,
                        out_channels,
                        weights,
                        bias,
                    }
                }
                1 => {
                    let (inputs, outputs) = (r.u32()?, r.u32()?);
                    let weights = r.tensor(&[outputs, inputs])?;
                    let bias = r.tensor(&[outputs])?;
                    Layer::Dense {
                        inputs,
                        outputs,
                        weights,
                        bias,
                    }
                }
                2 => Layer::Relu,
                3 => Layer::Dropout { prob: r.f32()? },
                4 => Layer::Flatten,
                5 => Layer::Softmax,
                k => return Err(FormatError::Malformed(format!("unknown layer kind {k}"))),
            };
            layers.push(layer);
        }
        if r.pos != r.bytes.len() {
            return Err(FormatError::Malformed(format!(
                "{} trailing bytes",
                r.bytes.len() - r.pos
            )));
        }
        Ok((input, layers, seed))
    };
    let (input, layers, seed) = parse(&mut r).map_err(fail)?;
    Model::from_layers(input, layers, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetName;
    use crate::nn::{build_model, Architecture};

    #[test]
    fn round_trip_to_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        for arch in Architecture::ALL {
            let model = build_model(arch, DatasetName::Fmnist, 21).unwrap();
            let path = dir.path().join(format!("{arch}.qnnm"));
            save_model(&model, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back.input_shape(), model.input_shape());
            assert_eq!(back.rng_seed(), model.rng_seed());
            let rounded: Vec<f64> = model.flat_params().iter().map(|&v| f64::from(v as f32)).collect();
            assert_eq!(back.flat_params(), rounded);
            assert_eq!(back.layers().len(), model.layers().len());
        }
    }

    #[test]
    fn corrupt_checkpoints_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.qnnm");
        save_model(&build_model(Architecture::QunnHead, DatasetName::Mnist, 0).unwrap(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format { kind: FormatError::Truncated { .. }, .. })));
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format { kind: FormatError::BadMagic { .. }, .. })));
    }
}
