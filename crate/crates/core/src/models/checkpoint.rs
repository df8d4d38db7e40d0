//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic            8 bytes  "DMNDCKPT"
//! version          u32
//! variant name     u32 length + UTF-8 bytes
//! input spec       3 × u32
//! scale            f64
//! layer count      u32
//! per layer        u8 kind, u8 activation, u32 dim count, dims as u32
//! per parameter    u64 length + f64 values (layer order, weights then bias)
//! ```

use crate::error::{Error, Result};
use crate::nn::{Activation, Conv2d, Conv3d, Dense, LocallyConnected2d};
use crate::scalar::Scalar;

use super::{Layer, ModelGraph, Variant};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DMNDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_CONV3D: u8 = 1;
const KIND_CONV2D: u8 = 2;
const KIND_LOCAL: u8 = 3;
const KIND_DENSE: u8 = 4;
const KIND_RESHAPE: u8 = 5;

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::Linear => 0,
        Activation::Relu => 1,
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn save_checkpoint<T: Scalar>(model: &ModelGraph<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let name = model.variant.name().as_bytes();
    put_u32(&mut out, name.len());
    out.extend_from_slice(name);
    for d in model.input_spec {
        put_u32(&mut out, d);
    }
    out.extend_from_slice(&model.scale.f64().to_le_bytes());
    put_u32(&mut out, model.layers.len());
    for layer in &model.layers {
        let (kind, act, dims): (u8, u8, Vec<usize>) = match layer {
            Layer::Conv3d(l) => (
                KIND_CONV3D,
                act_code(l.activation),
                vec![l.kernel_depth, l.in_channels, l.out_channels],
            ),
            Layer::Conv2d(l) => (KIND_CONV2D, act_code(l.activation), vec![l.in_channels, l.out_channels]),
            Layer::Local(l) => (
                KIND_LOCAL,
                act_code(l.activation),
                vec![l.rows, l.cols, l.in_channels, l.out_channels],
            ),
            Layer::Dense(l) => (KIND_DENSE, act_code(l.activation), vec![l.fan_in, l.fan_out]),
            Layer::Reshape(to) => (KIND_RESHAPE, 0, to.clone()),
        };
        out.push(kind);
        out.push(act);
        put_u32(&mut out, dims.len());
        for d in dims {
            put_u32(&mut out, d);
        }
    }
    for p in model.params() {
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        for v in p.data() {
            out.extend_from_slice(&v.f64().to_le_bytes());
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
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("truncated checkpoint: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn activation(code: u8) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Linear),
        1 => Ok(Activation::Relu),
        c => Err(Error::Format(format!("unknown activation code {c}"))),
    }
}

fn dims<const N: usize>(d: &[usize], kind: &str) -> Result<[usize; N]> {
    d.try_into()
        .map_err(|_| Error::Format(format!("{kind} layer needs {N} dims, found {}", d.len())))
}

pub fn load_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<ModelGraph<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let name_len = r.u32()?;
    let name = std::str::from_utf8(r.take(name_len)?)
        .map_err(|_| Error::Format("variant name is not UTF-8".into()))?;
    let variant: Variant = name.parse().map_err(|_| Error::Format(format!("unknown variant `{name}`")))?;
    let input_spec = [r.u32()?, r.u32()?, r.u32()?];
    let scale = r.f64()?;
    let n_layers = r.u32()?;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let kind = r.u8()?;
        let act = activation(r.u8()?)?;
        let n = r.u32()?;
        let d = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        layers.push(match kind {
            KIND_CONV3D => {
                let [kd, i, o] = dims(&d, "conv3d")?;
                Layer::Conv3d(Conv3d::zeros(kd, i, o, act)?)
            }
            KIND_CONV2D => {
                let [i, o] = dims(&d, "conv2d")?;
                Layer::Conv2d(Conv2d::zeros(i, o, act)?)
            }
            KIND_LOCAL => {
                let [rows, cols, i, o] = dims(&d, "lc2d")?;
                Layer::Local(LocallyConnected2d::zeros(rows, cols, i, o, act)?)
            }
            KIND_DENSE => {
                let [i, o] = dims(&d, "dense")?;
                Layer::Dense(Dense::zeros(i, o, act)?)
            }
            KIND_RESHAPE => Layer::Reshape(d),
            k => return Err(Error::Format(format!("unknown layer kind {k}"))),
        });
    }
    let output_spec = match layers.last() {
        Some(Layer::Reshape(d)) if d.len() == 2 => [d[0], d[1]],
        _ => return Err(Error::Format("graph must end in an [I, J] reshape".into())),
    };
    let mut model = ModelGraph::new(variant, layers, input_spec, output_spec)
        .map_err(|e| Error::Format(format!("inconsistent layer specs: {e}")))?;
    model.scale = T::of(scale);
    for p in model.params_mut() {
        let len = r.u64()? as usize;
        if len != p.len() {
            return Err(Error::Format(format!(
                "parameter length {len} does not match layer spec {}",
                p.len()
            )));
        }
        for v in p.data_mut() {
            *v = T::of(r.f64()?);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}
