//! Reference direct volume rendering with the same sampler and marching as generation.

use crate::camera::{clip_ray, Camera};
use crate::generate::{adjust_alpha, march, GenParams};
use crate::image::{blend_under, over_background, Image};
use crate::par::tiles;
use crate::raycast::{scatter_tile, trace_tile};
use crate::volume::{TransferFunction, Volume};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvrParams {
    /// `None` means half the smallest voxel spacing.
    pub step: Option<f64>,
    pub ref_step: Option<f64>,
    pub alpha_early: f64,
    pub background: [f32; 4],
}

impl Default for DvrParams {
    fn default() -> Self {
        Self { step: None, ref_step: None, alpha_early: 0.999, background: [0.0, 0.0, 0.0, 1.0] }
    }
}

impl DvrParams {
    /// Matches the sampling of a generation run.
    pub fn from_gen(p: &GenParams) -> Self {
        Self { step: p.step, ref_step: p.ref_step, alpha_early: p.alpha_early, ..Self::default() }
    }
}

pub fn render_dvr(vol: &Volume, tf: &TransferFunction, cam: &Camera, params: &DvrParams) -> Image {
    let (w, h) = cam.viewport;
    let proj = cam.projector();
    let aabb = vol.aabb();
    let step = params.step.unwrap_or(0.5 * vol.min_spacing());
    let ref_step = params.ref_step.unwrap_or(0.5 * vol.min_spacing());
    let tl = tiles(w, h);
    let blocks = crate::par::map_indexed(tl.len(), |k| {
        trace_tile(&tl[k], w, h, |x, y| {
            let ray = proj.ray_through_ndc(2.0 * (x as f64 + 0.5) / w as f64 - 1.0, 1.0 - 2.0 * (y as f64 + 0.5) / h as f64);
            let mut acc = [0.0f64; 4];
            if let Some((t0, t1)) = clip_ray(&ray, &aabb) {
                if t1 > t0 {
                    march(vol, tf, &ray, t0, t1, step, ref_step, params.alpha_early, |_, s, e| {
                        let a = adjust_alpha(s[3] as f64, e);
                        let t = 1.0 - acc[3];
                        for c in 0..3 {
                            acc[c] += t * s[c] as f64 * a;
                        }
                        acc[3] += t * a;
                        true
                    });
                }
            }
            let mut out = [0.0f32; 4];
            blend_under(&mut out, [acc[0] as f32, acc[1] as f32, acc[2] as f32], acc[3] as f32);
            over_background(out, params.background)
        })
    });
    let mut img = Image::new(w, h, params.background);
    for (t, px) in tl.iter().zip(blocks) {
        scatter_tile(&mut img, t, &px);
    }
    img
}
