//! Binary VDI file format, little-endian, no padding:
//!
//! ```text
//! "VDI1" | u32 version | u32 width | u32 height | u32 n_sg
//! camera: 10 x f64 (position, quaternion xyzw, fov_y, near, far)
//! aabb: 6 x f64 (min, max)
//! grid dims: 3 x u32
//! width*height x u16 list counts
//! packed supersegments in list order: f32 front, back, r, g, b, a
//! gx*gy*gz x u32 grid counts
//! ```

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::Point3;
use thiserror::Error;

use crate::camera::{Aabb, Camera};
use crate::vdi::{check_list, AccelGrid, Supersegment, Vdi};

pub const MAGIC: &[u8; 4] = b"VDI1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 * 4 + 10 * 8 + 6 * 8 + 3 * 4;
pub const SEGMENT_LEN: usize = 6 * 4;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    VersionMismatch(u32),
    #[error("truncated stream")]
    TruncatedStream,
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            FormatError::TruncatedStream
        } else {
            FormatError::Io(e)
        }
    }
}

pub fn encoded_len(vdi: &Vdi, grid: &AccelGrid) -> usize {
    HEADER_LEN + 2 * vdi.num_lists() + SEGMENT_LEN * vdi.total_segments() + 4 * grid.num_cells()
}

pub fn encode_vdi(vdi: &Vdi, grid: &AccelGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(vdi, grid));
    out.extend_from_slice(MAGIC);
    for v in [VERSION, vdi.width, vdi.height, vdi.n_sg] {
        out.write_u32::<LE>(v).unwrap();
    }
    for v in vdi.gen_camera.to_block() {
        out.write_f64::<LE>(v).unwrap();
    }
    let a = &vdi.volume_aabb;
    for v in [a.min.x, a.min.y, a.min.z, a.max.x, a.max.y, a.max.z] {
        out.write_f64::<LE>(v).unwrap();
    }
    for v in [grid.dims.0, grid.dims.1, grid.dims.2] {
        out.write_u32::<LE>(v).unwrap();
    }
    for &c in &vdi.counts {
        out.write_u16::<LE>(c).unwrap();
    }
    for i in 0..vdi.num_lists() {
        for s in vdi.list(i) {
            for v in [s.front, s.back, s.color[0], s.color[1], s.color[2], s.alpha] {
                out.write_f32::<LE>(v).unwrap();
            }
        }
    }
    for &c in &grid.counts {
        out.write_u32::<LE>(c).unwrap();
    }
    out
}

fn need(cur: &Cursor<&[u8]>, n: usize) -> Result<(), FormatError> {
    let left = cur.get_ref().len() - cur.position() as usize;
    if left < n {
        Err(FormatError::TruncatedStream)
    } else {
        Ok(())
    }
}

pub fn decode_vdi(bytes: &[u8]) -> Result<(Vdi, AccelGrid), FormatError> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = cur.read_u32::<LE>()?;
    if version != VERSION {
        return Err(FormatError::VersionMismatch(version));
    }
    let width = cur.read_u32::<LE>()?;
    let height = cur.read_u32::<LE>()?;
    let n_sg = cur.read_u32::<LE>()?;
    let mut block = [0.0; 10];
    cur.read_f64_into::<LE>(&mut block)?;
    let mut ab = [0.0; 6];
    cur.read_f64_into::<LE>(&mut ab)?;
    let dims = (cur.read_u32::<LE>()?, cur.read_u32::<LE>()?, cur.read_u32::<LE>()?);

    if width == 0 || height == 0 || dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(FormatError::InvariantViolation("zero-sized list or grid dimensions".into()));
    }
    if n_sg == 0 || n_sg > u16::MAX as u32 {
        return Err(FormatError::InvariantViolation(format!("n_sg {n_sg} out of range")));
    }
    let n_lists = width as usize * height as usize;
    need(&cur, 2 * n_lists)?;
    let mut counts = vec![0u16; n_lists];
    cur.read_u16_into::<LE>(&mut counts)?;
    if let Some(i) = counts.iter().position(|&c| c as u32 > n_sg) {
        return Err(FormatError::InvariantViolation(format!("list {i} count {} > n_sg", counts[i])));
    }
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    let n_cells = dims.0 as usize * dims.1 as usize * dims.2 as usize;
    need(&cur, SEGMENT_LEN * total + 4 * n_cells)?;

    let camera = Camera::from_block(&block, (width, height));
    if !(camera.near > 0.0 && camera.near < camera.far) {
        return Err(FormatError::InvariantViolation("camera near/far".into()));
    }
    let aabb = Aabb::new(Point3::new(ab[0], ab[1], ab[2]), Point3::new(ab[3], ab[4], ab[5]));
    let mut vdi = Vdi::empty(camera, aabb, n_sg);
    let mut f = [0f32; 6];
    let mut segs = Vec::with_capacity(n_sg as usize);
    for (i, &c) in counts.iter().enumerate() {
        segs.clear();
        for _ in 0..c {
            cur.read_f32_into::<LE>(&mut f)?;
            segs.push(Supersegment {
                front: f[0],
                back: f[1],
                color: [f[2], f[3], f[4]],
                alpha: f[5],
            });
        }
        check_list(&segs, n_sg as usize).map_err(|e| FormatError::InvariantViolation(format!("list {i}: {e}")))?;
        vdi.set_list(i, &segs);
    }
    let mut grid = AccelGrid::for_camera(&vdi.gen_camera, dims);
    cur.read_u32_into::<LE>(&mut grid.counts)?;
    if cur.position() as usize != bytes.len() {
        return Err(FormatError::InvariantViolation(format!(
            "{} trailing bytes",
            bytes.len() - cur.position() as usize
        )));
    }
    Ok((vdi, grid))
}

pub fn write_vdi_file(path: impl AsRef<Path>, vdi: &Vdi, grid: &AccelGrid) -> Result<(), FormatError> {
    std::fs::write(path, encode_vdi(vdi, grid)).map_err(FormatError::Io)
}

pub fn read_vdi_file(path: impl AsRef<Path>) -> Result<(Vdi, AccelGrid), FormatError> {
    decode_vdi(&std::fs::read(path).map_err(FormatError::Io)?)
}
