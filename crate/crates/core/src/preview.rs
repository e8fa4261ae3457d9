//! Preview rendering by dynamic subsampling.
//!
//! The image is rendered at `d_i` times the display resolution and upsampled
//! bilinearly. Along each ray, samples are spent per acceleration-grid cell in
//! proportion to `d_r`, the world length of the ray inside the cell and the
//! cell's supersegment count; empty cells get none. Each sample only asks which
//! supersegment contains it, with no intersection computations.

use std::time::Instant;

use crate::camera::Camera;
use crate::image::{blend_under, over_background, Image};
use crate::par::tiles;
use crate::raycast::dda::directed_cell;
use crate::raycast::search::{find_first, Forward, ListView, Mirrored};
use crate::raycast::{opacity_correct, project_ray_to_ndc, scatter_tile, trace_tile, Chord, RenderOptions, Tracer};
use crate::vdi::{axis_cell, cell_range, AccelGrid, Supersegment, Vdi};

pub use crate::control::{Action, FrameMode, ModeSelector, PiController};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreviewParams {
    pub d_i: f64,
    pub d_r: f64,
    pub target_fps: f64,
    /// Final (display) resolution.
    pub display: (u32, u32),
}

impl PreviewParams {
    pub fn new(d_i: f64, d_r: f64, display: (u32, u32)) -> Self {
        Self { d_i, d_r, target_fps: 30.0, display }
    }

    /// Resolution actually rendered before upsampling.
    pub fn lowres(&self) -> (u32, u32) {
        let f = |v: u32| ((v as f64 * self.d_i).round() as u32).max(1);
        (f(self.display.0), f(self.display.1))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PreviewStats {
    pub samples: u64,
    /// Supersegment list reads.
    pub lookups: u64,
    /// Samples whose position falls in a zero-count grid cell.
    pub zero_cell_touches: u64,
    pub cells_crossed: u64,
    /// Unrounded sum of `d_r * length * count` over crossed cells.
    pub demand: f64,
    pub ms: f64,
}

impl PreviewStats {
    fn merge(&mut self, o: &PreviewStats) {
        self.samples += o.samples;
        self.lookups += o.lookups;
        self.zero_cell_touches += o.zero_cell_touches;
        self.cells_crossed += o.cells_crossed;
        self.demand += o.demand;
    }
}

/// Samples spent in one grid cell: `round(d_r * isect_len * count)`, halves rounded up.
#[inline]
pub fn samples_in_cell(d_r: f64, isect_len: f64, count: u32) -> u32 {
    if count == 0 {
        return 0;
    }
    (d_r * isect_len * count as f64 + 0.5).floor() as u32
}

/// Grid cells crossed by the chord, in order, as `(cx, cy, cz, s_in, s_out)`.
pub fn grid_cells_along(chord: &Chord, grid: &AccelGrid) -> Vec<(u32, u32, u32, f64, f64)> {
    let (gx, gy, gz) = grid.dims;
    let d = [chord.a1[0] - chord.a0[0], chord.a1[1] - chord.a0[1], chord.dz()];
    let interior = &grid.ndc_slabs[1..gz as usize];
    let mut out = Vec::new();
    let mut s = 0.0f64;
    while s < 1.0 {
        let p = chord.point(s);
        let cx = directed_cell((p[0] + 1.0) * gx as f64 * 0.5, d[0], gx);
        let cy = directed_cell((p[1] + 1.0) * gy as f64 * 0.5, d[1], gy);
        let cz = if d[2] < 0.0 {
            interior.partition_point(|&b| b < p[2])
        } else {
            interior.partition_point(|&b| b <= p[2])
        } as u32;
        let bounds = [
            cell_range(cx, gx),
            cell_range(cy, gy),
            (grid.ndc_slabs[cz as usize], grid.ndc_slabs[cz as usize + 1]),
        ];
        let mut exit = 1.0f64;
        for a in 0..3 {
            if d[a] > 0.0 {
                exit = exit.min((bounds[a].1 - chord.a0[a]) / d[a]);
            } else if d[a] < 0.0 {
                exit = exit.min((bounds[a].0 - chord.a0[a]) / d[a]);
            }
        }
        if exit <= s {
            // Rounding left us on a boundary; nudge forward.
            exit = (s + 1e-12).min(1.0);
        }
        out.push((cx, cy, cz, s, exit));
        s = exit;
    }
    out
}

struct Sampler<'a> {
    tracer: Tracer<'a>,
    d_r: f64,
}

impl Sampler<'_> {
    fn trace(&self, ray: &crate::camera::Ray, st: &mut PreviewStats) -> [f32; 4] {
        let mut acc = [0.0f32; 4];
        let vdi = self.tracer.vdi;
        let Some(chord) = project_ray_to_ndc(ray, vdi, &self.tracer.gen) else {
            return acc;
        };
        if chord.dz() >= 0.0 {
            self.march(&chord, Forward, 1.0, &mut acc, st);
        } else {
            self.march(&chord, Mirrored, -1.0, &mut acc, st);
        }
        acc
    }

    fn march<'s, L: ListView>(
        &'s self,
        chord: &Chord,
        view: impl Fn(&'s [Supersegment]) -> L,
        sign: f64,
        acc: &mut [f32; 4],
        st: &mut PreviewStats,
    ) {
        let vdi: &'s Vdi = self.tracer.vdi;
        let grid = self.tracer.grid;
        let early = self.tracer.opts.early_term_alpha;
        let mut seed: Option<usize> = None;
        let (ta0, tb0) = (chord.world_t(0.0), chord.world_t(1.0));
        let forward_t = tb0 >= ta0;
        for (cx, cy, cz, s_in, s_out) in grid_cells_along(chord, grid) {
            st.cells_crossed += 1;
            let count = grid.count(cx, cy, cz);
            let ta = chord.world_t(s_in);
            let tb = chord.world_t(s_out);
            let len = (tb - ta).abs();
            if count > 0 {
                st.demand += self.d_r * len * count as f64;
            }
            let n = samples_in_cell(self.d_r, len, count);
            if n == 0 {
                continue;
            }
            let dl = len / n as f64;
            for k in 0..n {
                let frac = (k as f64 + 0.5) / n as f64;
                let t = if forward_t { ta + frac * (tb - ta) } else { ta - frac * (ta - tb) };
                let s = chord.s_at_world_t(t).clamp(s_in, s_out);
                let p = chord.point(s);
                st.samples += 1;
                let (gx, gy, gz) = grid.cell_of(p[0], p[1], p[2]);
                if grid.count(gx, gy, gz) == 0 {
                    st.zero_cell_touches += 1;
                }
                let lx = axis_cell(p[0], vdi.width);
                let ly = axis_cell(p[1], vdi.height);
                let idx = vdi.list_index(lx, ly);
                let segs = vdi.list(idx);
                if segs.is_empty() {
                    continue;
                }
                let lv = view(segs);
                let z = sign * p[2];
                let r = find_first(&lv, z, z, seed);
                st.lookups += 1;
                seed = Some(r.index.unwrap_or(r.probe));
                let Some(j) = r.index else { continue };
                if lv.front(j) > z || lv.back(j) < z {
                    continue;
                }
                let seg = &segs[lv.original(j)];
                let l = dl / self.tracer.thickness.of(lx, ly, seg.front, seg.back);
                let a = opacity_correct(seg.alpha, l);
                if a > 0.0 {
                    let f = a / seg.alpha;
                    blend_under(acc, [seg.color[0] * f, seg.color[1] * f, seg.color[2] * f], a);
                    if acc[3] >= early {
                        return;
                    }
                }
            }
        }
    }
}

/// Renders a preview at `d_i` times the display resolution and upsamples it.
///
/// Returns the upsampled image, the low-resolution render and counters.
pub fn render_preview(
    vdi: &Vdi,
    grid: &AccelGrid,
    cam: &Camera,
    params: &PreviewParams,
    opts: &RenderOptions,
) -> (Image, Image, PreviewStats) {
    let start = Instant::now();
    let (w, h) = params.lowres();
    let low_cam = cam.with_viewport((w, h));
    let proj = low_cam.projector();
    let sampler = Sampler { tracer: Tracer::new(vdi, grid, *opts), d_r: params.d_r };
    let tl = tiles(w, h);
    let results = crate::par::map_indexed(tl.len(), |k| {
        let mut st = PreviewStats::default();
        let px = trace_tile(&tl[k], w, h, |x, y| {
            let ray = proj.ray_through_ndc(2.0 * (x as f64 + 0.5) / w as f64 - 1.0, 1.0 - 2.0 * (y as f64 + 0.5) / h as f64);
            over_background(sampler.trace(&ray, &mut st), opts.background)
        });
        (px, st)
    });
    let mut low = Image::new(w, h, opts.background);
    let mut stats = PreviewStats::default();
    for (t, (px, st)) in tl.iter().zip(results) {
        stats.merge(&st);
        scatter_tile(&mut low, t, &px);
    }
    let up = low.upsample_bilinear(params.display.0, params.display.1);
    stats.ms = start.elapsed().as_secs_f64() * 1e3;
    (up, low, stats)
}
