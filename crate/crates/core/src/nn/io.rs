//! Binary weight container: layer specs plus (name, shape, row-major
//! values) records. Little-endian throughout; round-trips are bit-exact.
//!
//! Layout: 8-byte magic `FOGW0001`, u32 spec count, tagged spec records,
//! u32 param count, then per parameter a length-prefixed name, shape, and
//! raw f64 values.

use std::fs;
use std::path::Path;

use super::{Activation, LayerSpec, ModelWeights, Param};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FOGW0001";

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Linear => 0,
        Activation::Relu => 1,
        Activation::Sigmoid => 2,
    }
}

fn activation_from(tag: u8) -> Result<Activation> {
    match tag {
        0 => Ok(Activation::Linear),
        1 => Ok(Activation::Relu),
        2 => Ok(Activation::Sigmoid),
        other => Err(Error::Format(format!("unknown activation tag {other}"))),
    }
}

pub fn encode_weights(specs: &[LayerSpec], weights: &ModelWeights) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for spec in specs {
        match *spec {
            LayerSpec::Conv1d {
                filters,
                kernel_size,
                stride,
                activation,
            } => {
                out.push(0);
                out.extend_from_slice(&(filters as u32).to_le_bytes());
                out.extend_from_slice(&(kernel_size as u32).to_le_bytes());
                out.extend_from_slice(&(stride as u32).to_le_bytes());
                out.push(activation_tag(activation));
            }
            LayerSpec::Lstm { units } => {
                out.push(1);
                out.extend_from_slice(&(units as u32).to_le_bytes());
            }
            LayerSpec::Dense { units, activation } => {
                out.push(2);
                out.extend_from_slice(&(units as u32).to_le_bytes());
                out.push(activation_tag(activation));
            }
            LayerSpec::Dropout { rate } => {
                out.push(3);
                out.extend_from_slice(&rate.to_le_bytes());
            }
        }
    }
    out.extend_from_slice(&(weights.params.len() as u32).to_le_bytes());
    for param in &weights.params {
        let name = param.name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(param.shape.len() as u32).to_le_bytes());
        for &dim in &param.shape {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        out.extend_from_slice(&(param.values.len() as u64).to_le_bytes());
        for v in &param.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("weight file truncated".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
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

pub fn decode_weights(buf: &[u8]) -> Result<(Vec<LayerSpec>, ModelWeights)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a foglab weight file".into()));
    }
    let n_specs = r.u32()? as usize;
    let mut specs = Vec::with_capacity(n_specs);
    for _ in 0..n_specs {
        let spec = match r.u8()? {
            0 => LayerSpec::Conv1d {
                filters: r.u32()? as usize,
                kernel_size: r.u32()? as usize,
                stride: r.u32()? as usize,
                activation: activation_from(r.u8()?)?,
            },
            1 => LayerSpec::Lstm {
                units: r.u32()? as usize,
            },
            2 => LayerSpec::Dense {
                units: r.u32()? as usize,
                activation: activation_from(r.u8()?)?,
            },
            3 => LayerSpec::Dropout { rate: r.f64()? },
            other => return Err(Error::Format(format!("unknown layer tag {other}"))),
        };
        specs.push(spec);
    }
    let n_params = r.u32()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("non-UTF8 parameter name".into()))?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let count = r.u64()? as usize;
        if count != shape.iter().product::<usize>() {
            return Err(Error::Format(format!(
                "parameter '{name}': {count} values for shape {shape:?}"
            )));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(r.f64()?);
        }
        params.push(Param {
            name,
            shape,
            values,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::Format("trailing bytes in weight file".into()));
    }
    Ok((specs, ModelWeights { params }))
}

pub fn write_weights(
    path: impl AsRef<Path>,
    specs: &[LayerSpec],
    weights: &ModelWeights,
) -> Result<()> {
    fs::write(path, encode_weights(specs, weights))?;
    Ok(())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<(Vec<LayerSpec>, ModelWeights)> {
    decode_weights(&fs::read(path)?)
}
