//! Binary parameter files: `PERF`, version `u32`, tensor count `u32`, then
//! per tensor a `u16` name length, UTF-8 name, `u8` rank, `u64` dims, `u8`
//! dtype tag and raw little-endian values. All integers are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{build_backbone, BackboneConfig, ModelParams};
use crate::tensor::{Element, Tensor};

const MAGIC: &[u8; 4] = b"PERF";
pub const FORMAT_VERSION: u32 = 1;

fn put_value<E: Element, W: Write>(out: &mut W, v: E) -> std::io::Result<()> {
    match E::DTYPE_TAG {
        0 => out.write_all(&(v.as_f64() as f32).to_le_bytes()),
        _ => out.write_all(&v.as_f64().to_le_bytes()),
    }
}

pub fn write_params<E: Element, W: Write>(out: W, params: &ModelParams<E>) -> Result<()> {
    let mut out = BufWriter::new(out);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let count = u32::try_from(params.len()).map_err(|_| Error::format("too many tensors"))?;
    out.write_all(&count.to_le_bytes())?;
    for (name, t) in params.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::format(format!("name too long: {name}")))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        let rank = u8::try_from(t.rank()).map_err(|_| Error::format("rank exceeds 255"))?;
        out.write_all(&[rank])?;
        for &d in t.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        out.write_all(&[E::DTYPE_TAG])?;
        for &v in t.data() {
            put_value(&mut out, v)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn take<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("truncated checkpoint"),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_params<E: Element, R: Read>(input: R) -> Result<ModelParams<E>> {
    let mut input = BufReader::new(input);
    if &take::<4, _>(&mut input)? != MAGIC {
        return Err(Error::format("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(take(&mut input)?);
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let count = u32::from_le_bytes(take(&mut input)?);
    let mut params = ModelParams::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(take(&mut input)?) as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name).map_err(|_| Error::format("truncated tensor name"))?;
        let name = String::from_utf8(name).map_err(|_| Error::format("tensor name is not UTF-8"))?;
        let rank = take::<1, _>(&mut input)?[0] as usize;
        let shape = (0..rank)
            .map(|_| Ok(u64::from_le_bytes(take(&mut input)?) as usize))
            .collect::<Result<Vec<_>>>()?;
        let tag = take::<1, _>(&mut input)?[0];
        if tag != E::DTYPE_TAG {
            return Err(Error::format(format!("{name}: dtype tag {tag}, expected {}", E::DTYPE_TAG)));
        }
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                Ok(match tag {
                    0 => E::of(f64::from(f32::from_le_bytes(take(&mut input)?))),
                    _ => E::of(f64::from_le_bytes(take(&mut input)?)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        params.insert(name, Tensor::new(shape, data)?)?;
    }
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(Error::format("trailing bytes after checkpoint"));
    }
    Ok(params)
}

pub fn save<E: Element>(path: impl AsRef<Path>, params: &ModelParams<E>) -> Result<()> {
    write_params(File::create(path)?, params)
}

pub fn load<E: Element>(path: impl AsRef<Path>) -> Result<ModelParams<E>> {
    read_params(File::open(path)?)
}

/// Loads a checkpoint and checks that its names and shapes match `cfg`.
pub fn load_for(path: impl AsRef<Path>, cfg: &BackboneConfig) -> Result<ModelParams> {
    let params = load(path)?;
    check_compatible(&params, cfg)?;
    Ok(params)
}

pub fn check_compatible<E: Element>(params: &ModelParams<E>, cfg: &BackboneConfig) -> Result<()> {
    let reference = build_backbone::<f32>(cfg, 0)?;
    if reference.len() != params.len() {
        return Err(Error::config(format!("checkpoint has {} tensors, config needs {}", params.len(), reference.len())));
    }
    for (name, t) in reference.iter() {
        let got = params.get(name)?;
        if got.shape() != t.shape() {
            return Err(Error::config(format!("{name}: checkpoint shape {:?}, config {:?}", got.shape(), t.shape())));
        }
    }
    Ok(())
}
