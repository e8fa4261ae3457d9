//! Full-quality VDI rendering from a novel viewpoint.
//!
//! Each novel ray is clipped to the volume box and the generation frustum,
//! carried into generation NDC where the lists form a regular column grid,
//! and traversed column by column. Supersegments met along the way are
//! composited with their opacity rescaled to the length of the intersection.

pub mod dda;
pub mod search;

use std::time::Instant;

use nalgebra::{Vector3, Vector4};

use crate::camera::{clip_ray, clip_ray_to_frustum, ndc_z_to_depth, Camera, Projector, Ray};
use crate::image::{blend_under, over_background, Image};
use crate::par::{tiles, Tile};
use crate::vdi::{cell_range, AccelGrid, Supersegment, Vdi};
use dda::{directed_cell, CellVisit, Dda};
use search::{find_first, Forward, ListView, Mirrored};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub use_ess: bool,
    pub early_term_alpha: f32,
    /// Non-premultiplied background color.
    pub background: [f32; 4],
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            use_ess: true,
            early_term_alpha: 0.999,
            background: [0.0, 0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RenderStats {
    pub lists_visited: u64,
    pub supersegments_intersected: u64,
    pub search_reads: u64,
    pub cells_skipped: u64,
    pub ms: f64,
}

impl RenderStats {
    pub fn merge(&mut self, o: &RenderStats) {
        self.lists_visited += o.lists_visited;
        self.supersegments_intersected += o.supersegments_intersected;
        self.search_reads += o.search_reads;
        self.cells_skipped += o.cells_skipped;
    }
}

/// Opacity of a homogeneous supersegment seen over `l` times its generation thickness.
#[inline]
pub fn opacity_correct(alpha: f32, l: f64) -> f32 {
    if l <= 0.0 || alpha <= 0.0 {
        return 0.0;
    }
    if alpha >= 1.0 {
        return 1.0;
    }
    (1.0 - (1.0 - alpha as f64).powf(l)) as f32
}

/// A novel ray expressed as a chord through generation NDC.
#[derive(Debug, Clone, Copy)]
pub struct Chord {
    pub a0: [f64; 3],
    pub a1: [f64; 3],
    /// Homogeneous world points of `a0` and `a1 - a0`, for length queries.
    h0: Vector4<f64>,
    dh: Vector4<f64>,
    dir: Vector3<f64>,
}

impl Chord {
    #[inline]
    pub fn point(&self, s: f64) -> [f64; 3] {
        [
            self.a0[0] + s * (self.a1[0] - self.a0[0]),
            self.a0[1] + s * (self.a1[1] - self.a0[1]),
            self.a0[2] + s * (self.a1[2] - self.a0[2]),
        ]
    }

    #[inline]
    pub fn dz(&self) -> f64 {
        self.a1[2] - self.a0[2]
    }

    /// World position along the novel ray direction at chord parameter `s`, up to a constant.
    #[inline]
    pub fn world_t(&self, s: f64) -> f64 {
        let h = self.h0 + self.dh * s;
        h.xyz().dot(&self.dir) / h.w
    }

    /// Inverse of [`Chord::world_t`].
    #[inline]
    pub fn s_at_world_t(&self, t: f64) -> f64 {
        let a = self.h0.xyz().dot(&self.dir);
        let b = self.dh.xyz().dot(&self.dir);
        (a - t * self.h0.w) / (t * self.dh.w - b)
    }

    /// World length of the chord between `sa` and `sb`.
    #[inline]
    pub fn world_len(&self, sa: f64, sb: f64) -> f64 {
        (self.world_t(sb) - self.world_t(sa)).abs()
    }

    /// Chord parameters where NDC z equals `za` and `zb`, intersected with `[s_lo, s_hi]`.
    #[inline]
    pub fn z_overlap(&self, za: f64, zb: f64, s_lo: f64, s_hi: f64) -> Option<(f64, f64)> {
        let dz = self.dz();
        let (lo, hi) = if dz == 0.0 {
            let z = self.a0[2];
            if za <= z && z <= zb {
                (s_lo, s_hi)
            } else {
                return None;
            }
        } else {
            let (p, q) = ((za - self.a0[2]) / dz, (zb - self.a0[2]) / dz);
            let (p, q) = if p <= q { (p, q) } else { (q, p) };
            (p.max(s_lo), q.min(s_hi))
        };
        (lo <= hi).then_some((lo, hi))
    }
}

/// Clips `ray` to the volume box and the generation frustum and maps it to generation NDC.
pub fn project_ray_to_ndc(ray: &Ray, vdi: &Vdi, gen: &Projector) -> Option<Chord> {
    let (ta, tb) = clip_ray(ray, &vdi.volume_aabb)?;
    let mut r = *ray;
    r.t_near = ta;
    r.t_far = tb;
    let (t0, t1) = clip_ray_to_frustum(&r, gen)?;
    if t1 <= t0 {
        return None;
    }
    let p0 = gen.world_to_ndc(&ray.at(t0)).ok()?;
    let p1 = gen.world_to_ndc(&ray.at(t1)).ok()?;
    let a0 = [p0.x, p0.y, p0.z].map(|v| v.clamp(-1.0, 1.0));
    let a1 = [p1.x, p1.y, p1.z].map(|v| v.clamp(-1.0, 1.0));
    let h0 = gen.inv_view_proj * Vector4::new(a0[0], a0[1], a0[2], 1.0);
    let h1 = gen.inv_view_proj * Vector4::new(a1[0], a1[1], a1[2], 1.0);
    Some(Chord { a0, a1, h0, dh: h1 - h0, dir: ray.dir })
}

/// World thickness along generation rays, per list column and row.
pub struct Thickness {
    near: f64,
    far: f64,
    /// `1 / cos` of the angle between each list's center ray and the view axis.
    inv_cos: Vec<f64>,
    width: u32,
}

impl Thickness {
    pub fn new(vdi: &Vdi) -> Self {
        let cam = &vdi.gen_camera;
        let ty = (cam.fov_y * 0.5).tan();
        let tx = ty * cam.aspect();
        let mut inv_cos = Vec::with_capacity(vdi.num_lists());
        for cy in 0..vdi.height {
            let (y0, y1) = cell_range(cy, vdi.height);
            for cx in 0..vdi.width {
                let (x0, x1) = cell_range(cx, vdi.width);
                let v = Vector3::new(0.5 * (x0 + x1) * tx, 0.5 * (y0 + y1) * ty, 1.0);
                inv_cos.push(v.norm());
            }
        }
        Self { near: cam.near, far: cam.far, inv_cos, width: vdi.width }
    }

    /// World length of `[front, back]` along the center ray of list `(cx, cy)`.
    #[inline]
    pub fn of(&self, cx: u32, cy: u32, front: f32, back: f32) -> f64 {
        let d = ndc_z_to_depth(self.near, self.far, back as f64) - ndc_z_to_depth(self.near, self.far, front as f64);
        d * self.inv_cos[cy as usize * self.width as usize + cx as usize]
    }
}

/// Shared per-frame state for tracing many rays against one VDI.
pub struct Tracer<'a> {
    pub vdi: &'a Vdi,
    pub grid: &'a AccelGrid,
    pub gen: Projector,
    pub thickness: Thickness,
    pub opts: RenderOptions,
}

impl<'a> Tracer<'a> {
    pub fn new(vdi: &'a Vdi, grid: &'a AccelGrid, opts: RenderOptions) -> Self {
        Self {
            vdi,
            grid,
            gen: vdi.gen_camera.projector(),
            thickness: Thickness::new(vdi),
            opts,
        }
    }

    /// Premultiplied composite of one novel ray, before the background.
    pub fn trace(&self, ray: &Ray, stats: &mut RenderStats) -> [f32; 4] {
        let mut acc = [0.0f32; 4];
        let Some(chord) = project_ray_to_ndc(ray, self.vdi, &self.gen) else {
            return acc;
        };
        if chord.dz() >= 0.0 {
            self.traverse(&chord, &mut acc, stats, |l| Forward(l), 1.0);
        } else {
            self.traverse(&chord, &mut acc, stats, |l| Mirrored(l), -1.0);
        }
        acc
    }

    fn traverse<'l, L: ListView>(
        &self,
        chord: &Chord,
        acc: &mut [f32; 4],
        stats: &mut RenderStats,
        view: impl Fn(&'l [Supersegment]) -> L,
        sign: f64,
    ) where
        'a: 'l,
    {
        let (w, h) = (self.vdi.width, self.vdi.height);
        let mut seed: Option<usize> = None;
        let mut s = 0.0;
        let mut dda = Dda::new(chord.a0, chord.a1, w, h, s);
        loop {
            if self.opts.use_ess {
                if let Some(s_exit) = self.empty_cell_exit(chord, s) {
                    stats.cells_skipped += 1;
                    if s_exit >= 1.0 {
                        return;
                    }
                    s = s_exit;
                    dda = Dda::new(chord.a0, chord.a1, w, h, s);
                    continue;
                }
            }
            let Some(visit) = dda.next() else { return };
            s = visit.s_out;
            stats.lists_visited += 1;
            let idx = self.vdi.list_index(visit.cx, visit.cy);
            let segs: &'l [Supersegment] = self.vdi.list(idx);
            if !segs.is_empty() {
                let lv = view(segs);
                seed = self.composite_list(chord, &visit, &lv, segs, seed, sign, acc, stats);
                if acc[3] >= self.opts.early_term_alpha {
                    return;
                }
            }
            if visit.s_out >= 1.0 {
                return;
            }
        }
    }

    /// Composites the supersegments of one list crossed on `visit`; returns the next seed.
    #[allow(clippy::too_many_arguments)]
    fn composite_list<L: ListView>(
        &self,
        chord: &Chord,
        visit: &CellVisit,
        lv: &L,
        segs: &[Supersegment],
        seed: Option<usize>,
        sign: f64,
        acc: &mut [f32; 4],
        stats: &mut RenderStats,
    ) -> Option<usize> {
        let (d_entry, d_exit) = (sign * visit.z_in, sign * visit.z_out);
        let r = find_first(lv, d_entry, d_exit, seed);
        stats.search_reads += r.reads as u64;
        let Some(first) = r.index else {
            return Some(r.probe);
        };
        let mut last = first;
        let mut j = first;
        while j < lv.len() && lv.front(j) <= d_exit {
            let seg = &segs[lv.original(j)];
            if let Some((sa, sb)) = chord.z_overlap(seg.front as f64, seg.back as f64, visit.s_in, visit.s_out) {
                let lw = chord.world_len(sa, sb);
                if lw > 0.0 {
                    stats.supersegments_intersected += 1;
                    let l = lw / self.thickness.of(visit.cx, visit.cy, seg.front, seg.back);
                    let a = opacity_correct(seg.alpha, l);
                    if a > 0.0 {
                        let k = a / seg.alpha;
                        blend_under(acc, [seg.color[0] * k, seg.color[1] * k, seg.color[2] * k], a);
                    }
                }
            }
            last = j;
            if acc[3] >= self.opts.early_term_alpha {
                break;
            }
            j += 1;
        }
        Some(last)
    }

    /// If the chord point at `s` lies in a zero-count grid cell, the parameter where it leaves that cell.
    fn empty_cell_exit(&self, chord: &Chord, s: f64) -> Option<f64> {
        let g = self.grid;
        let (gx, gy, gz) = g.dims;
        let p = chord.point(s);
        let d = [chord.a1[0] - chord.a0[0], chord.a1[1] - chord.a0[1], chord.dz()];
        let cx = directed_cell((p[0] + 1.0) * gx as f64 * 0.5, d[0], gx);
        let cy = directed_cell((p[1] + 1.0) * gy as f64 * 0.5, d[1], gy);
        let interior = &g.ndc_slabs[1..gz as usize];
        let cz = if d[2] < 0.0 {
            interior.partition_point(|&b| b < p[2])
        } else {
            interior.partition_point(|&b| b <= p[2])
        } as u32;
        if g.count(cx, cy, cz) != 0 {
            return None;
        }
        let mut exit = 1.0f64;
        let bounds = [cell_range(cx, gx), cell_range(cy, gy), (g.ndc_slabs[cz as usize], g.ndc_slabs[cz as usize + 1])];
        for a in 0..3 {
            if d[a] > 0.0 {
                exit = exit.min((bounds[a].1 - chord.a0[a]) / d[a]);
            } else if d[a] < 0.0 {
                exit = exit.min((bounds[a].0 - chord.a0[a]) / d[a]);
            }
        }
        (exit > s).then_some(exit)
    }
}

/// Renders `vdi` from `cam` at the camera's viewport.
pub fn render_vdi(vdi: &Vdi, grid: &AccelGrid, cam: &Camera, opts: &RenderOptions) -> (Image, RenderStats) {
    let start = Instant::now();
    let tracer = Tracer::new(vdi, grid, *opts);
    let proj = cam.projector();
    let (w, h) = cam.viewport;
    let tl = tiles(w, h);
    let results = crate::par::map_indexed(tl.len(), |k| {
        let t = tl[k];
        let mut st = RenderStats::default();
        let px = trace_tile(&t, w, h, |x, y| {
            let ray = proj.ray_through_ndc(2.0 * (x as f64 + 0.5) / w as f64 - 1.0, 1.0 - 2.0 * (y as f64 + 0.5) / h as f64);
            over_background(tracer.trace(&ray, &mut st), opts.background)
        });
        (px, st)
    });
    let mut img = Image::new(w, h, opts.background);
    let mut stats = RenderStats::default();
    for (t, (px, st)) in tl.iter().zip(results) {
        stats.merge(&st);
        scatter_tile(&mut img, t, &px);
    }
    stats.ms = start.elapsed().as_secs_f64() * 1e3;
    (img, stats)
}

pub(crate) fn trace_tile(t: &Tile, _w: u32, _h: u32, mut f: impl FnMut(u32, u32) -> [f32; 4]) -> Vec<[f32; 4]> {
    let mut out = Vec::with_capacity(((t.x1 - t.x0) * (t.y1 - t.y0)) as usize);
    for y in t.y0..t.y1 {
        for x in t.x0..t.x1 {
            out.push(f(x, y));
        }
    }
    out
}

pub(crate) fn scatter_tile(img: &mut Image, t: &Tile, px: &[[f32; 4]]) {
    let mut k = 0;
    for y in t.y0..t.y1 {
        for x in t.x0..t.x1 {
            img.set(x, y, px[k]);
            k += 1;
        }
    }
}

/// Front-to-back composite of each list's stored supersegments, one pixel per list.
pub fn composite_lists(vdi: &Vdi, background: [f32; 4]) -> Image {
    let mut img = Image::new(vdi.width, vdi.height, background);
    for iy in 0..vdi.height {
        for ix in 0..vdi.width {
            let idx = vdi.list_index(ix, vdi.height - 1 - iy);
            let mut acc = [0.0f32; 4];
            for s in vdi.list(idx) {
                blend_under(&mut acc, s.color, s.alpha);
            }
            img.set(ix, iy, over_background(acc, background));
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opacity_correct_examples() {
        assert_eq!(opacity_correct(0.5, 1.0), 0.5);
        assert!((opacity_correct(0.5, 2.0) - 0.75).abs() < 1e-7);
        assert_eq!(opacity_correct(0.0, 3.0), 0.0);
        assert_eq!(opacity_correct(1.0, 0.01), 1.0);
    }

    #[test]
    fn split_composites_like_whole() {
        for &a in &[0.01f32, 0.3, 0.9, 0.999] {
            for &(l1, l2) in &[(0.1, 0.9), (1.5, 2.5), (0.0, 1.0)] {
                let whole = opacity_correct(a, l1 + l2);
                let (x, y) = (opacity_correct(a, l1), opacity_correct(a, l2));
                assert!((x + (1.0 - x) * y - whole).abs() < 1e-6);
            }
        }
    }
}
