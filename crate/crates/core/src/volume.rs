//! Raw scalar volumes, transfer functions, and classified trilinear sampling.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::Aabb;
use nalgebra::{Point3, Vector3};

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("volume file is {actual} bytes, metadata implies {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("unsupported voxel type `{0}`")]
    UnsupportedVoxelType(String),
    #[error("invalid volume metadata: {0}")]
    InvalidMeta(String),
    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoxelType {
    U8,
    U16,
}

impl VoxelType {
    pub fn bytes(self) -> usize {
        match self {
            VoxelType::U8 => 1,
            VoxelType::U16 => 2,
        }
    }

    /// Scalars are normalized by the type's maximum, not the dataset range.
    pub fn max_value(self) -> f32 {
        match self {
            VoxelType::U8 => u8::MAX as f32,
            VoxelType::U16 => u16::MAX as f32,
        }
    }

    fn parse(s: &str) -> Result<Self, VolumeError> {
        match s {
            "u8" => Ok(VoxelType::U8),
            "u16" => Ok(VoxelType::U16),
            other => Err(VolumeError::UnsupportedVoxelType(other.to_string())),
        }
    }
}

/// Sidecar metadata describing a headerless raw brick.
///
/// `raw` is optional; when absent the brick is expected next to the JSON file
/// with the same stem and a `.raw` extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    pub voxel_type: String,
    pub spacing: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<PathBuf>,
}

impl VolumeMeta {
    pub fn new(dims: [usize; 3], voxel_type: VoxelType, spacing: [f64; 3]) -> Self {
        let voxel_type = match voxel_type {
            VoxelType::U8 => "u8",
            VoxelType::U16 => "u16",
        };
        Self {
            dims,
            voxel_type: voxel_type.to_string(),
            spacing,
            raw: None,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, VolumeError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn voxel_type(&self) -> Result<VoxelType, VolumeError> {
        VoxelType::parse(&self.voxel_type)
    }

    fn validate(&self) -> Result<(), VolumeError> {
        if self.dims.iter().any(|&d| d < 2) {
            return Err(VolumeError::InvalidMeta(format!(
                "every dimension needs at least 2 voxels, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeError::InvalidMeta(format!(
                "spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        Ok(())
    }

    fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    U16(Vec<u16>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::U16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, i: usize) -> f32 {
        match self {
            VoxelData::U8(v) => v[i] as f32,
            VoxelData::U16(v) => v[i] as f32,
        }
    }

    pub fn voxel_type(&self) -> VoxelType {
        match self {
            VoxelData::U8(_) => VoxelType::U8,
            VoxelData::U16(_) => VoxelType::U16,
        }
    }

    fn range(&self) -> (f32, f32) {
        let fold = |(lo, hi): (f32, f32), x: f32| (lo.min(x), hi.max(x));
        match self {
            VoxelData::U8(v) => v.iter().map(|&x| x as f32).fold((f32::MAX, f32::MIN), fold),
            VoxelData::U16(v) => v.iter().map(|&x| x as f32).fold((f32::MAX, f32::MIN), fold),
        }
    }

    /// Little-endian bytes, x-fastest.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            VoxelData::U8(v) => v.clone(),
            VoxelData::U16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

/// Dense scalar grid, x-fastest. Voxel centers span the world bounding box, so
/// the box edge along each axis is `(n - 1) * spacing`, centered on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: VoxelData,
    value_range: (f32, f32),
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: VoxelData) -> Result<Self, VolumeError> {
        let meta = VolumeMeta::new(dims, data.voxel_type(), spacing);
        meta.validate()?;
        if data.len() != meta.voxel_count() {
            return Err(VolumeError::SizeMismatch {
                expected: (meta.voxel_count() * data.voxel_type().bytes()) as u64,
                actual: (data.len() * data.voxel_type().bytes()) as u64,
            });
        }
        let value_range = data.range();
        Ok(Self {
            dims,
            spacing,
            data,
            value_range,
        })
    }

    /// Builds a volume by evaluating `f` at every voxel index.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        voxel_type: VoxelType,
        f: impl Fn(usize, usize, usize) -> u16,
    ) -> Result<Self, VolumeError> {
        let n = dims.iter().product::<usize>();
        let mut idx = Vec::with_capacity(n);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    idx.push(f(x, y, z));
                }
            }
        }
        let data = match voxel_type {
            VoxelType::U8 => VoxelData::U8(idx.into_iter().map(|v| v.min(255) as u8).collect()),
            VoxelType::U16 => VoxelData::U16(idx),
        };
        Self::new(dims, spacing, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn voxel_type(&self) -> VoxelType {
        self.data.voxel_type()
    }

    pub fn value_range(&self) -> (f32, f32) {
        self.value_range
    }

    pub fn meta(&self) -> VolumeMeta {
        VolumeMeta::new(self.dims, self.voxel_type(), self.spacing)
    }

    pub fn voxel(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data.get(self.index(x, y, z))
    }

    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn aabb(&self) -> Aabb {
        let ext = Vector3::new(
            (self.dims[0] - 1) as f64 * self.spacing[0],
            (self.dims[1] - 1) as f64 * self.spacing[1],
            (self.dims[2] - 1) as f64 * self.spacing[2],
        );
        Aabb::new(Point3::from(-ext / 2.0), Point3::from(ext / 2.0))
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Normalized scalar at `p` in `[0, 1]^3` (0 and 1 are the outermost voxel centers).
    pub fn sample_scalar(&self, p: [f64; 3]) -> f32 {
        let mut base = [0usize; 3];
        let mut frac = [0f32; 3];
        for a in 0..3 {
            let u = p[a] * (self.dims[a] - 1) as f64;
            let i = (u.floor() as isize).clamp(0, self.dims[a] as isize - 2) as usize;
            base[a] = i;
            frac[a] = (u - i as f64) as f32;
        }
        let [x, y, z] = base;
        let [fx, fy, fz] = frac;
        let sx = 1;
        let sy = self.dims[0];
        let sz = self.dims[0] * self.dims[1];
        let i000 = self.index(x, y, z);
        let v = |off: usize| self.data.get(i000 + off);
        let c00 = v(0) + (v(sx) - v(0)) * fx;
        let c10 = v(sy) + (v(sy + sx) - v(sy)) * fx;
        let c01 = v(sz) + (v(sz + sx) - v(sz)) * fx;
        let c11 = v(sz + sy) + (v(sz + sy + sx) - v(sz + sy)) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        (c0 + (c1 - c0) * fz) / self.voxel_type().max_value()
    }

    /// Interpolates the scalar first, then classifies it.
    pub fn sample_classified(&self, tf: &TransferFunction, p: [f64; 3]) -> [f32; 4] {
        tf.classify(self.sample_scalar(p))
    }

    /// Maps a world point to normalized volume coordinates, clamped into `[0, 1]^3`.
    pub fn world_to_unit(&self, aabb: &Aabb, w: &Point3<f64>) -> [f64; 3] {
        let ext = aabb.max - aabb.min;
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = ((w[a] - aabb.min[a]) / ext[a]).clamp(0.0, 1.0);
        }
        p
    }
}

/// Reads a headerless little-endian brick described by `meta`.
pub fn load_raw_volume(path: impl AsRef<Path>, meta: &VolumeMeta) -> Result<Volume, VolumeError> {
    let voxel_type = meta.voxel_type()?;
    meta.validate()?;
    let bytes = fs::read(path)?;
    let expected = (meta.voxel_count() * voxel_type.bytes()) as u64;
    if bytes.len() as u64 != expected {
        return Err(VolumeError::SizeMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = match voxel_type {
        VoxelType::U8 => VoxelData::U8(bytes),
        VoxelType::U16 => VoxelData::U16(
            bytes
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
    };
    Volume::new(meta.dims, meta.spacing, data)
}

/// Loads the sidecar JSON and the brick it points at.
pub fn load_volume_json(meta_path: impl AsRef<Path>) -> Result<Volume, VolumeError> {
    let meta_path = meta_path.as_ref();
    let meta = VolumeMeta::from_json_file(meta_path)?;
    let raw = match &meta.raw {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => meta_path.parent().unwrap_or(Path::new(".")).join(p),
        None => meta_path.with_extension("raw"),
    };
    load_raw_volume(raw, &meta)
}

/// Writes the brick and its sidecar metadata (`<stem>.raw` + `<stem>.json`).
pub fn save_volume(vol: &Volume, raw_path: impl AsRef<Path>) -> Result<PathBuf, VolumeError> {
    let raw_path = raw_path.as_ref();
    fs::write(raw_path, vol.data().to_le_bytes())?;
    let mut meta = vol.meta();
    meta.raw = raw_path.file_name().map(PathBuf::from);
    let meta_path = raw_path.with_extension("json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(meta_path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunctionFile {
    pub points: Vec<[f32; 5]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
}

/// Piecewise-linear RGBA classification, baked into a lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    points: Vec<[f32; 5]>,
    lut: Vec<[f32; 4]>,
}

impl TransferFunction {
    pub const DEFAULT_RESOLUTION: usize = 1024;

    /// `points` are `[scalar, r, g, b, a]`, strictly ascending in scalar from 0 to 1.
    pub fn new(points: Vec<[f32; 5]>, resolution: usize) -> Result<Self, VolumeError> {
        let bad = |m: &str| Err(VolumeError::InvalidTransferFunction(m.to_string()));
        if points.len() < 2 {
            return bad("need at least two control points");
        }
        if resolution < 2 {
            return bad("lookup table needs at least two entries");
        }
        if points[0][0] != 0.0 || points[points.len() - 1][0] != 1.0 {
            return bad("control points must start at 0 and end at 1");
        }
        if points.windows(2).any(|w| w[1][0] <= w[0][0]) {
            return bad("control points must be strictly ascending");
        }
        if points.iter().flatten().any(|&c| !(0.0..=1.0).contains(&c)) {
            return bad("all components must lie in [0, 1]");
        }
        let lut = (0..resolution)
            .map(|i| Self::interpolate(&points, i as f32 / (resolution - 1) as f32))
            .collect();
        Ok(Self { points, lut })
    }

    fn interpolate(points: &[[f32; 5]], s: f32) -> [f32; 4] {
        let k = points.partition_point(|p| p[0] <= s).clamp(1, points.len() - 1);
        let (a, b) = (points[k - 1], points[k]);
        let t = ((s - a[0]) / (b[0] - a[0])).clamp(0.0, 1.0);
        let mut out = [0.0; 4];
        for c in 0..4 {
            out[c] = (a[c + 1] + (b[c + 1] - a[c + 1]) * t).clamp(0.0, 1.0);
        }
        out
    }

    pub fn from_file(file: &TransferFunctionFile) -> Result<Self, VolumeError> {
        Self::new(
            file.points.clone(),
            file.resolution.unwrap_or(Self::DEFAULT_RESOLUTION),
        )
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, VolumeError> {
        let file: TransferFunctionFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> TransferFunctionFile {
        TransferFunctionFile {
            points: self.points.clone(),
            resolution: Some(self.lut.len()),
        }
    }

    pub fn points(&self) -> &[[f32; 5]] {
        &self.points
    }

    pub fn lut(&self) -> &[[f32; 4]] {
        &self.lut
    }

    /// Non-premultiplied RGBA for a normalized scalar, linearly interpolated between LUT entries.
    pub fn classify(&self, s: f32) -> [f32; 4] {
        let x = s.clamp(0.0, 1.0) * (self.lut.len() - 1) as f32;
        let i = (x as usize).min(self.lut.len() - 2);
        let t = x - i as f32;
        let (a, b) = (self.lut[i], self.lut[i + 1]);
        [
            a[0] + (b[0] - a[0]) * t,
            a[1] + (b[1] - a[1]) * t,
            a[2] + (b[2] - a[2]) * t,
            a[3] + (b[3] - a[3]) * t,
        ]
    }
}
