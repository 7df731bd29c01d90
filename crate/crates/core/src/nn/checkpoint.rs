//! NNCK checkpoint files.
//!
//! Layout: a plain-text header of `key=value` lines terminated by an empty
//! line, then the binary body
//!
//! ```text
//! "NNCK" | u8 version (=1) | u32 LE tensor count
//! per tensor: u16 LE name length | UTF-8 name | u8 rank | rank × u32 LE dims
//!             | product(dims) × f32 LE
//! ```

use std::path::Path;

use crate::error::{Error, Result};

use super::layer::LayerSpec;
use super::model::Model;
use super::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"NNCK";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub header: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn fmt_err(offset: usize, detail: impl Into<String>) -> Error {
    Error::Format {
        format: "NNCK",
        offset,
        detail: detail.into(),
    }
}

impl Checkpoint {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| fmt_err(0, format!("header key `{key}` missing")))
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let (key, value) = (key.into(), value.into());
        match self.header.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.header.push((key, value)),
        }
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| fmt_err(0, format!("tensor `{name}` missing")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for (k, v) in &self.header {
            if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::invalid(format!("unencodable header entry `{k}`")));
            }
            out.extend_from_slice(format!("{k}={v}\n").as_bytes());
        }
        out.push(b'\n');
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::invalid(format!("tensor name too long: {name}")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims().len() as u8);
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut header = Vec::new();
        let mut pos = 0;
        loop {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| fmt_err(pos, "unterminated header"))?
                + pos;
            let line = std::str::from_utf8(&bytes[pos..end])
                .map_err(|_| fmt_err(pos, "header is not UTF-8"))?;
            let line_start = pos;
            pos = end + 1;
            if line.is_empty() {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fmt_err(line_start, format!("header line without `=`: {line}")))?;
            header.push((k.to_string(), v.to_string()));
        }

        let mut r = Reader { bytes, pos };
        if r.take(4)? != MAGIC {
            return Err(fmt_err(pos, "bad magic"));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(fmt_err(r.pos - 1, format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| fmt_err(at, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let at = r.pos;
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(dims, data).map_err(|e| fmt_err(at, e.to_string()))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(fmt_err(r.pos, "trailing bytes"));
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(fmt_err(self.bytes.len(), "truncated body"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn dims_to_string(dims: &[usize]) -> String {
    dims.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| d.parse().map_err(|_| fmt_err(0, format!("bad dims `{s}`"))))
        .collect()
}

impl Model<f32> {
    /// Checkpoint holding the model spec in the header and every parameter
    /// value as a tensor. Extra header entries can be appended by callers.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let layers = self
            .layers()
            .iter()
            .map(LayerSpec::to_string)
            .collect::<Vec<_>>()
            .join(";");
        Checkpoint {
            header: vec![
                ("kind".into(), "model".into()),
                ("seed".into(), self.seed().to_string()),
                ("input".into(), dims_to_string(self.input_dims())),
                ("layers".into(), layers),
            ],
            tensors: self
                .params()
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let seed = ck
            .require("seed")?
            .parse()
            .map_err(|_| fmt_err(0, "bad seed"))?;
        let input = parse_dims(ck.require("input")?)?;
        let layers_text = ck.require("layers")?;
        let layers = if layers_text.is_empty() {
            Vec::new()
        } else {
            layers_text
                .split(';')
                .map(str::parse)
                .collect::<Result<Vec<LayerSpec>>>()?
        };
        Model::from_parts(&input, layers, seed, ck.tensors.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_byte_layout() {
        let ck = Checkpoint {
            header: vec![("a".into(), "1".into())],
            tensors: vec![("w".into(), Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap())],
        };
        let bytes = ck.to_bytes().unwrap();
        let mut expect = b"a=1\n\nNNCK\x01\x01\x00\x00\x00\x01\x00w\x02\x01\x00\x00\x00\x02\x00\x00\x00".to_vec();
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expect);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn truncation_is_reported() {
        let ck = Checkpoint {
            header: vec![],
            tensors: vec![("w".into(), Tensor::vector(vec![1.0, 2.0, 3.0]))],
        };
        let bytes = ck.to_bytes().unwrap();
        for cut in [3, 8, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
        }
        let mut bad = bytes.clone();
        bad[5] = 2; // version byte follows "\nNNCK"
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    #[test]
    fn model_round_trip() {
        let layers = vec![
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Dense { inputs: 8, outputs: 3 },
        ];
        let model = Model::<f32>::new(&[1, 4, 4], layers, 77).unwrap();
        let bytes = model.to_checkpoint().to_bytes().unwrap();
        let back = Model::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, model);
    }
}
