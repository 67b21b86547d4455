//! `BSLM` binary tensor files.
//!
//! Layout, all little-endian:
//!
//! | bytes        | content                                      |
//! |--------------|----------------------------------------------|
//! | 4            | magic `BSLM`                                 |
//! | 4            | format version, u32                          |
//! | 16           | dims (n_images, channels, frequencies, timebins), u32 each |
//! | 8 × n_images | label timestamps, u64 ms                     |
//! | 4 × product  | values, f32, image-major … time-minor        |
//!
//! Pose-cell snapshots reuse the format with dims (1, N_x, N_y, N_θ).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BSLM";
pub const VERSION: u32 = 1;
const HEADER_BYTES: u64 = 4 + 4 + 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub dims: [usize; 4],
    pub timestamps: Vec<u64>,
    pub values: Vec<f32>,
}

impl Tensor4 {
    pub fn image_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn image(&self, n: usize) -> &[f32] {
        let len = self.image_len();
        &self.values[n * len..(n + 1) * len]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write_header(&mut w, self.dims)?;
        for t in &self.timestamps {
            w.write_all(&t.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R, origin: &str) -> Result<Tensor4> {
        let bad = |m: &str| Error::parse(origin, 0, m.to_string());
        let mut head = [0u8; HEADER_BYTES as usize];
        r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
        if &head[0..4] != MAGIC {
            return Err(bad("bad magic, expected BSLM"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let dims = [u32_at(8), u32_at(12), u32_at(16), u32_at(20)].map(|d| d as usize);
        let mut timestamps = vec![0u64; dims[0]];
        let mut b8 = [0u8; 8];
        for t in &mut timestamps {
            r.read_exact(&mut b8).map_err(|_| bad("truncated timestamps"))?;
            *t = u64::from_le_bytes(b8);
        }
        let count = dims.iter().product::<usize>();
        let mut raw = vec![0u8; count * 4];
        r.read_exact(&mut raw).map_err(|_| bad("truncated values"))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| bad(&e.to_string()))? != 0 {
            return Err(bad("trailing bytes after tensor values"));
        }
        Ok(Tensor4 { dims, timestamps, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Tensor4> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f), &path.display().to_string())
    }
}

fn write_header<W: Write>(w: &mut W, dims: [usize; 4]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in dims {
        let d = u32::try_from(d).map_err(|_| std::io::Error::other("dimension exceeds u32"))?;
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

/// Writes a tensor file one (image, channel) slab at a time, in any order.
/// The file is pre-sized from the dims, so slabs never written stay zero.
pub struct SlabWriter {
    file: File,
    dims: [usize; 4],
    values_offset: u64,
    path: std::path::PathBuf,
}

impl SlabWriter {
    pub fn create(path: &Path, dims: [usize; 4], timestamps: &[u64]) -> Result<Self> {
        if timestamps.len() != dims[0] {
            return Err(Error::invalid("one timestamp per image is required"));
        }
        let io = |e| Error::io(path, e);
        let file = File::create(path).map_err(io)?;
        let mut w = BufWriter::new(&file);
        write_header(&mut w, dims).map_err(io)?;
        for t in timestamps {
            w.write_all(&t.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)?;
        drop(w);
        let values_offset = HEADER_BYTES + 8 * dims[0] as u64;
        let total = values_offset + 4 * dims.iter().product::<usize>() as u64;
        file.set_len(total).map_err(io)?;
        Ok(SlabWriter {
            file,
            dims,
            values_offset,
            path: path.to_path_buf(),
        })
    }

    /// Writes the `frequencies × timebins` slab for one image and channel.
    pub fn write_slab(&mut self, image: usize, channel: usize, values: &[f32]) -> Result<()> {
        let slab = self.dims[2] * self.dims[3];
        if values.len() != slab || image >= self.dims[0] || channel >= self.dims[1] {
            return Err(Error::invalid("slab does not fit the tensor dims"));
        }
        let offset = self.values_offset + 4 * ((image * self.dims[1] + channel) * slab) as u64;
        let mut bytes = Vec::with_capacity(slab * 4);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let io = |e| Error::io(&self.path, e);
        self.file.seek(SeekFrom::Start(offset)).map_err(io)?;
        self.file.write_all(&bytes).map_err(io)
    }
}
