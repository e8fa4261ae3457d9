//! VDI lists, the NDC list grid, and the empty-space acceleration grid.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::camera::{depth_to_ndc_z, Aabb, Camera};

/// One depth interval of a generation ray with its composited color.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Supersegment {
    /// NDC z of the front face.
    pub front: f32,
    /// NDC z of the back face.
    pub back: f32,
    /// Premultiplied color.
    pub color: [f32; 3],
    pub alpha: f32,
}

impl Supersegment {
    pub fn rgba(&self) -> [f32; 4] {
        [self.color[0], self.color[1], self.color[2], self.alpha]
    }
}

/// Ordered, disjoint supersegments of one generation ray.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SupersegmentList {
    pub segments: Vec<Supersegment>,
}

impl SupersegmentList {
    pub fn count(&self) -> usize {
        self.segments.len()
    }
}

/// Checks the per-list invariants; returns a description of the first violation.
pub fn check_list(segs: &[Supersegment], n_sg: usize) -> Result<(), String> {
    if segs.len() > n_sg {
        return Err(format!("{} supersegments exceed n_sg={n_sg}", segs.len()));
    }
    for (k, s) in segs.iter().enumerate() {
        if !(s.front < s.back) {
            return Err(format!("segment {k}: front {} !< back {}", s.front, s.back));
        }
        if !(s.front >= -1.0 && s.back <= 1.0) {
            return Err(format!("segment {k}: depth [{}, {}] outside [-1, 1]", s.front, s.back));
        }
        if !(0.0..=1.0).contains(&s.alpha) {
            return Err(format!("segment {k}: alpha {}", s.alpha));
        }
        if s.color.iter().any(|&c| !(c >= 0.0 && c <= s.alpha + 1e-6)) {
            return Err(format!("segment {k}: color {:?} not premultiplied by {}", s.color, s.alpha));
        }
        if k + 1 < segs.len() && s.back > segs[k + 1].front {
            return Err(format!("segment {k}: back {} > next front {}", s.back, segs[k + 1].front));
        }
    }
    Ok(())
}

/// Volumetric depth image: `width * height` lists of up to `n_sg` supersegments.
///
/// Storage mirrors a fixed-capacity texture: list `i` owns
/// `segments[i * n_sg .. i * n_sg + counts[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vdi {
    pub width: u32,
    pub height: u32,
    pub n_sg: u32,
    pub counts: Vec<u16>,
    pub segments: Vec<Supersegment>,
    pub gen_camera: Camera,
    pub volume_aabb: Aabb,
}

impl Vdi {
    /// Empty VDI over the generation camera's viewport.
    pub fn empty(gen_camera: Camera, volume_aabb: Aabb, n_sg: u32) -> Self {
        let (width, height) = gen_camera.viewport;
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            n_sg,
            counts: vec![0; n],
            segments: vec![Supersegment::default(); n * n_sg as usize],
            gen_camera,
            volume_aabb,
        }
    }

    pub fn num_lists(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn list_index(&self, cx: u32, cy: u32) -> usize {
        cy as usize * self.width as usize + cx as usize
    }

    #[inline]
    pub fn list(&self, idx: usize) -> &[Supersegment] {
        let base = idx * self.n_sg as usize;
        &self.segments[base..base + self.counts[idx] as usize]
    }

    pub fn set_list(&mut self, idx: usize, segs: &[Supersegment]) {
        assert!(segs.len() <= self.n_sg as usize, "list exceeds n_sg");
        let base = idx * self.n_sg as usize;
        self.segments[base..base + segs.len()].copy_from_slice(segs);
        for s in &mut self.segments[base + segs.len()..base + self.n_sg as usize] {
            *s = Supersegment::default();
        }
        self.counts[idx] = segs.len() as u16;
    }

    pub fn total_segments(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.counts.len() != self.num_lists() || self.segments.len() != self.num_lists() * self.n_sg as usize {
            return Err("storage size does not match width * height * n_sg".into());
        }
        for i in 0..self.num_lists() {
            check_list(self.list(i), self.n_sg as usize).map_err(|e| format!("list {i}: {e}"))?;
        }
        Ok(())
    }

    /// NDC x-range of list column `cx`.
    pub fn column_x(&self, cx: u32) -> (f64, f64) {
        cell_range(cx, self.width)
    }

    pub fn column_y(&self, cy: u32) -> (f64, f64) {
        cell_range(cy, self.height)
    }
}

/// NDC interval `[lo, hi)` of cell `i` out of `n` across `[-1, 1]`.
#[inline]
pub fn cell_range(i: u32, n: u32) -> (f64, f64) {
    let s = 2.0 / n as f64;
    (i as f64 * s - 1.0, (i + 1) as f64 * s - 1.0)
}

/// Cell index along one axis for NDC coordinate `v`, clamped to the grid.
#[inline]
pub fn axis_cell(v: f64, n: u32) -> u32 {
    let c = ((v + 1.0) * n as f64 * 0.5).floor();
    if c < 0.0 {
        0
    } else {
        (c as u32).min(n - 1)
    }
}

/// List-grid cell containing NDC `(x, y)`.
pub fn list_cell_of(x: f64, y: f64, width: u32, height: u32) -> (u32, u32) {
    (axis_cell(x, width), axis_cell(y, height))
}

/// Per-cell supersegment counts over a frustum-aligned grid of the generation view.
///
/// x and y follow NDC uniformly; z is split into slabs of constant view-space
/// depth, so in NDC the cells are larger toward the near plane and smaller
/// toward the far plane.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelGrid {
    pub dims: (u32, u32, u32),
    pub counts: Vec<u32>,
    /// `gz + 1` view-space depths from near to far.
    pub z_slabs: Vec<f64>,
    /// The same boundaries as NDC z.
    pub ndc_slabs: Vec<f64>,
}

impl AccelGrid {
    pub fn default_dims(width: u32, height: u32) -> (u32, u32, u32) {
        ((width / 16).max(1), (height / 16).max(1), 32)
    }

    pub fn new(dims: (u32, u32, u32), near: f64, far: f64) -> Self {
        let (gx, gy, gz) = dims;
        assert!(gx > 0 && gy > 0 && gz > 0, "grid dims must be positive");
        let z_slabs: Vec<f64> = (0..=gz)
            .map(|k| match k {
                0 => near,
                k if k == gz => far,
                k => near + (far - near) * k as f64 / gz as f64,
            })
            .collect();
        let mut ndc_slabs: Vec<f64> = z_slabs.iter().map(|&d| depth_to_ndc_z(near, far, d)).collect();
        ndc_slabs[0] = -1.0;
        ndc_slabs[gz as usize] = 1.0;
        Self {
            dims,
            counts: vec![0; (gx * gy * gz) as usize],
            z_slabs,
            ndc_slabs,
        }
    }

    pub fn for_camera(cam: &Camera, dims: (u32, u32, u32)) -> Self {
        Self::new(dims, cam.near, cam.far)
    }

    pub fn num_cells(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn index(&self, cx: u32, cy: u32, cz: u32) -> usize {
        let (gx, gy, _) = self.dims;
        ((cz * gy + cy) * gx + cx) as usize
    }

    #[inline]
    pub fn count(&self, cx: u32, cy: u32, cz: u32) -> u32 {
        self.counts[self.index(cx, cy, cz)]
    }

    /// Slab containing NDC depth `z`; slabs are half-open `[z_k, z_{k+1})`.
    #[inline]
    pub fn slab_of(&self, z: f64) -> u32 {
        let gz = self.dims.2 as usize;
        let interior = &self.ndc_slabs[1..gz];
        interior.partition_point(|&b| b <= z) as u32
    }

    pub fn cell_of(&self, x: f64, y: f64, z: f64) -> (u32, u32, u32) {
        (axis_cell(x, self.dims.0), axis_cell(y, self.dims.1), self.slab_of(z))
    }

    /// Flat index of the cell containing an NDC point.
    pub fn grid_cell_of(&self, ndc: [f64; 3]) -> usize {
        let (cx, cy, cz) = self.cell_of(ndc[0], ndc[1], ndc[2]);
        self.index(cx, cy, cz)
    }

    /// Grid cells overlapped by the supersegment `[front, back]` of list column
    /// `(i, j)` in a `width x height` list grid, as inclusive ranges.
    pub fn footprint(
        &self,
        i: u32,
        j: u32,
        width: u32,
        height: u32,
        front: f32,
        back: f32,
    ) -> ([u32; 2], [u32; 2], [u32; 2]) {
        let (gx, gy, _) = self.dims;
        let xr = column_cells(i, width, gx);
        let yr = column_cells(j, height, gy);
        let zr = [self.slab_of(front as f64), self.slab_of(back as f64)];
        (xr, yr, zr)
    }

    /// Builds counts for a whole VDI.
    pub fn build(vdi: &Vdi, dims: (u32, u32, u32)) -> Self {
        let b = GridBuilder::new(AccelGrid::for_camera(&vdi.gen_camera, dims));
        crate::par::map_indexed(vdi.height as usize, |j| {
            for i in 0..vdi.width {
                let idx = vdi.list_index(i, j as u32);
                for s in vdi.list(idx) {
                    b.add(i, j as u32, vdi.width, vdi.height, s.front, s.back);
                }
            }
        });
        b.finish()
    }
}

/// Grid cells whose NDC span overlaps list column `i` of `n_lists` (inclusive range).
#[inline]
pub fn column_cells(i: u32, n_lists: u32, n_cells: u32) -> [u32; 2] {
    let (i, n, g) = (i as u64, n_lists as u64, n_cells as u64);
    let lo = i * g / n;
    let hi = ((i + 1) * g + n - 1) / n - 1;
    [lo as u32, hi as u32]
}

/// Concurrent grid construction with atomic count increments.
pub struct GridBuilder {
    grid: AccelGrid,
    counts: Vec<AtomicU32>,
}

impl GridBuilder {
    pub fn new(grid: AccelGrid) -> Self {
        let counts = (0..grid.num_cells()).map(|_| AtomicU32::new(0)).collect();
        Self { grid, counts }
    }

    pub fn grid(&self) -> &AccelGrid {
        &self.grid
    }

    pub fn add(&self, i: u32, j: u32, width: u32, height: u32, front: f32, back: f32) {
        let (xr, yr, zr) = self.grid.footprint(i, j, width, height, front, back);
        for cz in zr[0]..=zr[1] {
            for cy in yr[0]..=yr[1] {
                for cx in xr[0]..=xr[1] {
                    self.counts[self.grid.index(cx, cy, cz)].fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }

    pub fn finish(self) -> AccelGrid {
        let mut grid = self.grid;
        grid.counts = self.counts.into_iter().map(AtomicU32::into_inner).collect();
        grid
    }
}
