//! Binary container for models, datasets and encoders.
//!
//! All integers and reals are little-endian.
//!
//! ```text
//! magic   "AADV"
//! version u32            (currently 1)
//! kind    u8             1 = model, 2 = dataset, 3 = encoder
//! payload
//!
//! model:   h w c classes n_layers (u32 each), then per layer a kind byte
//!          0 dense: in out (u32), weight[in*out] f64, bias[out] f64
//!          1 conv:  k c_in c_out stride padding (u32), kernel[k*k*c_in*c_out] f64, bias[c_out] f64
//!          2 relu:  no fields
//! dataset: h w c classes count (u32), then per sample
//!          label u32, split u8 (0 train, 1 val), pixels[h*w*c] f64
//! encoder: kind u8 (0 fc, 1 conv-small), h w c (u32), channel_independent u8,
//!          seed u64, n_tensors u32, then per tensor rank u32, dims u32*, data f64*
//! ```

use std::fs;
use std::path::Path;

use crate::classifier::dataset::{Dataset, Sample, Split};
use crate::classifier::model::{ClassifierModel, Layer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AADV";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    Model = 1,
    Dataset = 2,
    Encoder = 3,
}

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn header(kind: PayloadKind) -> Self {
        let mut w = Self::default();
        w.buf.extend_from_slice(MAGIC);
        w.u32(VERSION as usize);
        w.u8(kind as u8);
        w
    }

    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn reals(&mut self, t: &Tensor) {
        for v in t.data() {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub(crate) fn tensor(&mut self, t: &Tensor) {
        self.u32(t.shape().len());
        for &d in t.shape() {
            self.u32(d);
        }
        self.reals(t);
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn open(buf: &'a [u8], kind: PayloadKind) -> Result<Self> {
        let mut r = Self { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                detail: "bad magic".into(),
            });
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(r.error_at(4, format!("unsupported version {version}")));
        }
        let k = r.u8()?;
        if k != kind as u8 {
            return Err(r.error_at(8, format!("payload kind {k}, expected {}", kind as u8)));
        }
        Ok(r)
    }

    fn error_at(&self, offset: usize, detail: impl Into<String>) -> Error {
        Error::Format {
            offset,
            detail: detail.into(),
        }
    }

    pub(crate) fn error(&self, detail: impl Into<String>) -> Error {
        self.error_at(self.pos, detail)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.error(format!(
                "truncated: need {n} bytes, {} remain",
                self.buf.len() - self.pos
            ))),
        }
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub(crate) fn reals(&mut self, shape: &[usize]) -> Result<Tensor> {
        let start = self.pos;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| self.error(format!("tensor shape {shape:?} overflows")))?;
        let bytes = self.take(n)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(shape, data).map_err(|e| self.error_at(start, e.to_string()))
    }

    pub(crate) fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()?;
        if rank == 0 || rank > 8 {
            return Err(self.error(format!("implausible tensor rank {rank}")));
        }
        let dims = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        self.reals(&dims)
    }

    pub(crate) fn end(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.error(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_model(model: &ClassifierModel) -> Vec<u8> {
    let mut w = Writer::header(PayloadKind::Model);
    let [h, wd, c] = model.input_shape();
    for v in [h, wd, c, model.classes(), model.layers().len()] {
        w.u32(v);
    }
    for layer in model.layers() {
        match layer {
            Layer::Dense { weight, bias } => {
                w.u8(0);
                w.u32(weight.shape()[0]);
                w.u32(weight.shape()[1]);
                w.reals(weight);
                w.reals(bias);
            }
            Layer::Conv {
                kernel,
                bias,
                stride,
                padding,
            } => {
                w.u8(1);
                let s = kernel.shape();
                for v in [s[0], s[2], s[3], *stride, *padding] {
                    w.u32(v);
                }
                w.reals(kernel);
                w.reals(bias);
            }
            Layer::Relu => w.u8(2),
        }
    }
    w.finish()
}

pub fn decode_model(bytes: &[u8]) -> Result<ClassifierModel> {
    let mut r = Reader::open(bytes, PayloadKind::Model)?;
    let shape = [r.u32()?, r.u32()?, r.u32()?];
    let classes = r.u32()?;
    let n_layers = r.u32()?;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let at = r.pos;
        let layer = match r.u8()? {
            0 => {
                let (i, o) = (r.u32()?, r.u32()?);
                Layer::Dense {
                    weight: r.reals(&[i, o])?,
                    bias: r.reals(&[o])?,
                }
            }
            1 => {
                let (k, ci, co, stride, padding) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
                Layer::Conv {
                    kernel: r.reals(&[k, k, ci, co])?,
                    bias: r.reals(&[co])?,
                    stride,
                    padding,
                }
            }
            2 => Layer::Relu,
            k => return Err(Error::Format { offset: at, detail: format!("unknown layer kind {k}") }),
        };
        layers.push(layer);
    }
    let end = r.pos;
    r.end()?;
    ClassifierModel::new(shape, classes, layers).map_err(|e| Error::Format {
        offset: end,
        detail: e.to_string(),
    })
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::header(PayloadKind::Dataset);
    let [h, wd, c] = ds.shape;
    for v in [h, wd, c, ds.classes, ds.len()] {
        w.u32(v);
    }
    for s in &ds.samples {
        w.u32(s.label);
        w.u8(match s.split {
            Split::Train => 0,
            Split::Val => 1,
        });
        w.reals(&s.image);
    }
    w.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::open(bytes, PayloadKind::Dataset)?;
    let shape = [r.u32()?, r.u32()?, r.u32()?];
    let classes = r.u32()?;
    let count = r.u32()?;
    let mut samples = Vec::new();
    for _ in 0..count {
        let label = r.u32()?;
        let split = match r.u8()? {
            0 => Split::Train,
            1 => Split::Val,
            s => return Err(r.error(format!("unknown split tag {s}"))),
        };
        samples.push(Sample {
            image: r.reals(&shape)?,
            label,
            split,
        });
    }
    let end = r.pos;
    r.end()?;
    Dataset::new(shape, classes, samples).map_err(|e| Error::Format {
        offset: end,
        detail: e.to_string(),
    })
}

pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel> {
    let path = path.as_ref();
    decode_model(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_dataset(ds))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    decode_dataset(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::dataset::generate_synthetic;

    #[test]
    fn model_bytes_are_stable() {
        let m = ClassifierModel::default_cnn(4);
        let bytes = encode_model(&m);
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_model(&back), bytes);
    }

    #[test]
    fn dataset_round_trip() {
        let d = generate_synthetic(5, 12, 8, 8, 3, 4).unwrap();
        let bytes = encode_dataset(&d);
        assert_eq!(decode_dataset(&bytes).unwrap(), d);
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bytes = encode_model(&ClassifierModel::random_linear_3x3(1));
        for cut in [0, 3, 8, 20, bytes.len() - 1] {
            match decode_model(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_kind_and_trailing_bytes() {
        let d = generate_synthetic(5, 2, 8, 8, 1, 2).unwrap();
        assert!(matches!(decode_model(&encode_dataset(&d)), Err(Error::Format { offset: 8, .. })));
        let mut bytes = encode_model(&ClassifierModel::random_linear_3x3(1));
        bytes.push(0);
        assert!(matches!(decode_model(&bytes), Err(Error::Format { .. })));
    }
}
