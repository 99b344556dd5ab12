//! The PADT tensor container and 16-bit PGM export.
//!
//! Layout (all integers little-endian): magic `PADT`, version `u32 = 1`,
//! record count `u32`; then per record a `u16` name length, the UTF-8 name,
//! a `u8` rank, `rank` dimensions as `u64`, and the row-major payload as
//! `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{invalid, PactError, Result};
use crate::geometry::{Grid, Point};
use crate::image::{Image, Sinogram};
use crate::mask::ChannelMask;

pub const MAGIC: &[u8; 4] = b"PADT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<u64>, data: Vec<f64>) -> Result<Self> {
        let t = Self {
            name: name.into(),
            dims,
            data,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn scalar(name: impl Into<String>, v: f64) -> Self {
        Self {
            name: name.into(),
            dims: Vec::new(),
            data: vec![v],
        }
    }

    pub fn vector(name: impl Into<String>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dims: vec![data.len() as u64],
            data,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.name.len() > u16::MAX as usize {
            return invalid(format!("tensor name is {} bytes long", self.name.len()));
        }
        if self.dims.len() > u8::MAX as usize {
            return invalid(format!("tensor `{}` has rank {}", self.name, self.dims.len()));
        }
        let count = element_count(&self.dims);
        if count != Some(self.data.len() as u64) {
            return invalid(format!(
                "tensor `{}` has dims {:?} but {} values",
                self.name,
                self.dims,
                self.data.len()
            ));
        }
        Ok(())
    }

    /// The single value of a rank-0 (or one-element) tensor.
    pub fn as_scalar(&self) -> Result<f64> {
        match self.data.as_slice() {
            [v] => Ok(*v),
            _ => invalid(format!("tensor `{}` is not a scalar", self.name)),
        }
    }
}

fn element_count(dims: &[u64]) -> Option<u64> {
    dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d))
}

pub fn encode(tensors: &[Tensor]) -> Result<Vec<u8>> {
    let count = u32::try_from(tensors.len()).map_err(|_| PactError::InvalidArgument("too many records".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for t in tensors {
        t.validate()?;
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for d in &t.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(PactError::Format {
            offset: self.pos as u64,
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return self.fail(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.buf.len() - self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<Vec<Tensor>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return r.fail("bad magic, not a PADT file");
    }
    let version = r.u32("version")?;
    if version != VERSION {
        r.pos = 4;
        return r.fail(format!("unsupported version {version}"));
    }
    let count = r.u32("record count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let start = r.pos;
        let len = r.u16("name length")? as usize;
        let name_bytes = r.take(len, "name")?;
        let name = match std::str::from_utf8(name_bytes) {
            Ok(s) => s.to_owned(),
            Err(_) => {
                r.pos = start + 2;
                return r.fail("record name is not UTF-8");
            }
        };
        let rank = r.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u64("dimension")?);
        }
        let n = match element_count(&dims).and_then(|n| n.checked_mul(8)) {
            Some(bytes) if bytes <= (buf.len() - r.pos) as u64 => (bytes / 8) as usize,
            _ => return r.fail(format!("truncated payload of `{name}` with dims {dims:?}")),
        };
        let payload = r.take(n * 8, "payload")?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(Tensor { name, dims, data });
    }
    if r.pos != buf.len() {
        return r.fail(format!("{} trailing bytes", buf.len() - r.pos));
    }
    Ok(out)
}

pub fn write_tensors(path: impl AsRef<Path>, tensors: &[Tensor]) -> Result<()> {
    fs::write(path, encode(tensors)?)?;
    Ok(())
}

pub fn read_tensors(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    decode(&fs::read(path)?)
}

pub fn write_tensor(path: impl AsRef<Path>, name: &str, dims: Vec<u64>, data: Vec<f64>) -> Result<()> {
    write_tensors(path, &[Tensor::new(name, dims, data)?])
}

pub fn find<'a>(tensors: &'a [Tensor], name: &str) -> Result<&'a Tensor> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| PactError::InvalidArgument(format!("no `{name}` record")))
}

/// Records `image` (`ny × nx`), `meta.dx`, `meta.origin`.
pub fn image_records(im: &Image) -> Vec<Tensor> {
    let g = im.grid;
    vec![
        Tensor {
            name: "image".into(),
            dims: vec![g.ny as u64, g.nx as u64],
            data: im.values.clone(),
        },
        Tensor::scalar("meta.dx", g.dx),
        Tensor::vector("meta.origin", vec![g.origin.x, g.origin.y]),
    ]
}

pub fn image_from_records(tensors: &[Tensor]) -> Result<Image> {
    let t = find(tensors, "image")?;
    let [ny, nx] = t.dims[..] else {
        return invalid("`image` record must have rank 2");
    };
    let dx = find(tensors, "meta.dx")?.as_scalar()?;
    let origin = match find(tensors, "meta.origin")?.data[..] {
        [x, y] => Point { x, y },
        _ => return invalid("`meta.origin` must hold two values"),
    };
    let grid = Grid::new(nx as usize, ny as usize, dx, origin)?;
    Image::from_values(grid, t.data.clone())
}

pub fn write_image(path: impl AsRef<Path>, im: &Image) -> Result<()> {
    write_tensors(path, &image_records(im))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    image_from_records(&read_tensors(path)?)
}

/// Records `sino` (`channels × samples`), `meta.dt`, `meta.t0`, `meta.sound_speed`.
pub fn sinogram_records(s: &Sinogram) -> Vec<Tensor> {
    vec![
        Tensor {
            name: "sino".into(),
            dims: vec![s.n_channels as u64, s.n_samples as u64],
            data: s.data.clone(),
        },
        Tensor::scalar("meta.dt", s.dt),
        Tensor::scalar("meta.t0", s.t0),
        Tensor::scalar("meta.sound_speed", s.sound_speed),
    ]
}

pub fn sinogram_from_records(tensors: &[Tensor]) -> Result<Sinogram> {
    let t = find(tensors, "sino")?;
    let [nc, ns] = t.dims[..] else {
        return invalid("`sino` record must have rank 2");
    };
    Sinogram::new(
        nc as usize,
        ns as usize,
        find(tensors, "meta.dt")?.as_scalar()?,
        find(tensors, "meta.t0")?.as_scalar()?,
        find(tensors, "meta.sound_speed")?.as_scalar()?,
        t.data.clone(),
    )
}

pub fn write_sinogram(path: impl AsRef<Path>, s: &Sinogram) -> Result<()> {
    write_tensors(path, &sinogram_records(s))
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    sinogram_from_records(&read_tensors(path)?)
}

/// Records `mask.kept` and `mask.total`.
pub fn mask_records(m: &ChannelMask) -> Vec<Tensor> {
    vec![
        Tensor::vector("mask.kept", m.kept.iter().map(|&k| k as f64).collect()),
        Tensor::scalar("mask.total", m.total_channels as f64),
    ]
}

pub fn mask_from_records(tensors: &[Tensor]) -> Result<ChannelMask> {
    let total = find(tensors, "mask.total")?.as_scalar()?;
    let kept = &find(tensors, "mask.kept")?.data;
    let as_index = |v: f64| {
        if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(PactError::InvalidArgument(format!("{v} is not a channel index")))
        }
    };
    ChannelMask::new(as_index(total)?, kept.iter().map(|&v| as_index(v)).collect::<Result<_>>()?)
}

pub fn write_mask(path: impl AsRef<Path>, m: &ChannelMask) -> Result<()> {
    write_tensors(path, &mask_records(m))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<ChannelMask> {
    mask_from_records(&read_tensors(path)?)
}

/// Min-max normalized 16-bit binary PGM, top row first (largest `y`).
/// A constant image is written as mid-gray 32768.
pub fn pgm_bytes(x: &Image) -> Vec<u8> {
    let (nx, ny) = (x.grid.nx, x.grid.ny);
    let (lo, hi) = (x.min(), x.max());
    let mut out = format!("P5\n{nx} {ny}\n65535\n").into_bytes();
    for j in (0..ny).rev() {
        for i in 0..nx {
            let v = if hi > lo {
                ((x.get(i, j) - lo) / (hi - lo) * 65535.0).round() as u16
            } else {
                32768
            };
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

pub fn export_pgm(x: &Image, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&pgm_bytes(x))?;
    Ok(())
}
