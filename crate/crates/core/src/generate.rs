//! VDI generation: per-ray front-to-back accumulation into supersegments under
//! a homogeneity threshold, with a per-ray bisection search for that threshold.
//!
//! Each ray is sampled once into a buffer of classified samples; the bisection
//! then re-segments that buffer, so every "pass" below is a segmentation pass
//! over identical samples.

use std::time::Instant;

use crate::camera::{clip_ray, Camera, Projector, Ray};
use crate::vdi::{AccelGrid, GridBuilder, Supersegment, Vdi};
use crate::volume::{TransferFunction, Volume};

pub const GAMMA_MAX: f64 = 1.732_050_807_568_877_2;

/// What happens once a pass would start supersegment `n_sg + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetMode {
    /// Stop the pass and report `exceeded`.
    Abort,
    /// Keep merging everything that follows into the last supersegment.
    Cap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub n_sg: u32,
    /// Accepted shortfall below `n_sg`; `None` means `floor(0.15 * n_sg)`, at least 1.
    pub delta: Option<u32>,
    pub epsilon: f64,
    pub gamma_init: f64,
    /// World-space sampling step; `None` means half the smallest voxel spacing.
    pub step: Option<f64>,
    /// Step length whose samples take the transfer-function opacity unchanged;
    /// `None` means half the smallest voxel spacing.
    pub ref_step: Option<f64>,
    pub alpha_early: f64,
    /// Acceleration grid dimensions; `None` means [`AccelGrid::default_dims`].
    pub grid_dims: Option<(u32, u32, u32)>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_sg: 20,
            delta: None,
            epsilon: 1e-6,
            gamma_init: 1e-5,
            step: None,
            ref_step: None,
            alpha_early: 0.999,
            grid_dims: None,
        }
    }
}

impl GenParams {
    pub fn with_n_sg(n_sg: u32) -> Self {
        Self { n_sg, ..Self::default() }
    }

    pub fn delta(&self) -> u32 {
        self.delta
            .unwrap_or_else(|| ((0.15 * self.n_sg as f64).floor() as u32).max(1))
            .min(self.n_sg.saturating_sub(1))
    }

    pub fn step(&self, vol: &Volume) -> f64 {
        self.step.unwrap_or(0.5 * vol.min_spacing())
    }

    pub fn ref_step(&self, vol: &Volume) -> f64 {
        self.ref_step.unwrap_or(0.5 * vol.min_spacing())
    }

    /// Upper bound on segmentation passes per ray implied by `epsilon`.
    pub fn max_passes(&self) -> u32 {
        (GAMMA_MAX / self.epsilon).log2().ceil() as u32 + 1
    }
}

/// Opacity of a sample covering `exponent` reference steps.
#[inline]
pub fn adjust_alpha(alpha: f64, exponent: f64) -> f64 {
    if exponent == 1.0 {
        alpha
    } else {
        1.0 - (1.0 - alpha).powf(exponent)
    }
}

/// Homogeneity test: true when the sample differs from the supersegment enough
/// that a new supersegment must start.
///
/// `seg_premult` is the supersegment's premultiplied color expressed per sample
/// step (see [`SegmentAccum::per_step_premult`]); the sample's color is
/// premultiplied by its step-adjusted opacity. The distance is L2 over rgb.
pub fn terminate_check(seg_premult: [f64; 3], sample: [f32; 4], exponent: f64, gamma: f64) -> bool {
    let a = adjust_alpha(sample[3] as f64, exponent);
    let mut d2 = 0.0;
    for c in 0..3 {
        let d = seg_premult[c] - sample[c] as f64 * a;
        d2 += d * d;
    }
    d2.sqrt() >= gamma
}

/// Front-to-back accumulation of one supersegment.
#[derive(Debug, Clone, Copy, Default)]
pub struct SegmentAccum {
    pub color: [f64; 3],
    pub alpha: f64,
    /// Total reference steps covered.
    pub exponent: f64,
    pub first: usize,
    pub last: usize,
}

impl SegmentAccum {
    fn start(i: usize) -> Self {
        Self { first: i, last: i, ..Self::default() }
    }

    #[inline]
    pub fn add(&mut self, sample: [f32; 4], exponent: f64, i: usize) {
        let a = adjust_alpha(sample[3] as f64, exponent);
        let t = 1.0 - self.alpha;
        for c in 0..3 {
            self.color[c] += t * sample[c] as f64 * a;
        }
        self.alpha += t * a;
        self.exponent += exponent;
        self.last = i;
    }

    /// Premultiplied color of one `exponent`-long piece of a homogeneous
    /// medium that composites to this supersegment.
    pub fn per_step_premult(&self, exponent: f64) -> [f64; 3] {
        if self.alpha <= 0.0 || self.exponent <= 0.0 {
            return [0.0; 3];
        }
        let a = 1.0 - (1.0 - self.alpha.min(1.0)).powf(exponent / self.exponent);
        let k = a / self.alpha;
        [self.color[0] * k, self.color[1] * k, self.color[2] * k]
    }
}

/// Classified samples along one clipped ray.
#[derive(Debug, Clone)]
pub struct RaySamples {
    pub ray: Ray,
    pub t0: f64,
    pub dt: f64,
    /// Reference steps per sample.
    pub exponent: f64,
    /// Non-premultiplied rgba at interval midpoints, truncated at early termination.
    pub samples: Vec<[f32; 4]>,
}

impl RaySamples {
    pub fn empty(ray: Ray) -> Self {
        Self { ray, t0: 0.0, dt: 0.0, exponent: 1.0, samples: Vec::new() }
    }

    /// Ray parameter at the start of sample interval `i`.
    #[inline]
    pub fn t_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Number of maximal runs of non-transparent samples.
    pub fn runs(&self) -> usize {
        let mut runs = 0;
        let mut inside = false;
        for s in &self.samples {
            let opaque = s[3] > 0.0;
            if opaque && !inside {
                runs += 1;
            }
            inside = opaque;
        }
        runs
    }
}

/// Marches `[t0, t1]` in `ceil((t1 - t0) / step)` equal intervals, sampling
/// at interval midpoints, and stops once the composite opacity reaches `alpha_early`.
///
/// The DVR reference uses the same marching.
pub fn march(
    vol: &Volume,
    tf: &TransferFunction,
    ray: &Ray,
    t0: f64,
    t1: f64,
    step: f64,
    ref_step: f64,
    alpha_early: f64,
    mut visit: impl FnMut(usize, [f32; 4], f64) -> bool,
) -> (f64, f64) {
    let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
    let dt = (t1 - t0) / n as f64;
    let e = dt / ref_step;
    let aabb = vol.aabb();
    let mut transmittance = 1.0;
    for i in 0..n {
        let p = ray.at(t0 + (i as f64 + 0.5) * dt);
        let s = vol.sample_classified(tf, vol.world_to_unit(&aabb, &p));
        if !visit(i, s, e) {
            break;
        }
        transmittance *= 1.0 - adjust_alpha(s[3] as f64, e);
        if 1.0 - transmittance >= alpha_early {
            break;
        }
    }
    (dt, e)
}

/// Samples a ray against the volume; rays missing the volume yield no samples.
pub fn sample_ray(vol: &Volume, tf: &TransferFunction, ray: &Ray, params: &GenParams) -> RaySamples {
    let Some((t0, t1)) = clip_ray(ray, &vol.aabb()) else {
        return RaySamples::empty(*ray);
    };
    if t1 <= t0 {
        return RaySamples::empty(*ray);
    }
    let mut samples = Vec::with_capacity(((t1 - t0) / params.step(vol)).ceil() as usize + 1);
    let (dt, exponent) = march(
        vol,
        tf,
        ray,
        t0,
        t1,
        params.step(vol),
        params.ref_step(vol),
        params.alpha_early,
        |_, s, _| {
            samples.push(s);
            true
        },
    );
    RaySamples { ray: *ray, t0, dt, exponent, samples }
}

/// Outcome of one segmentation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ListResult {
    pub segments: Vec<Supersegment>,
    /// Supersegments produced, or `n_sg + 1` when the pass aborted.
    pub count: usize,
    pub exceeded: bool,
}

/// One segmentation pass over pre-sampled data at threshold `gamma`.
pub fn segment_samples(rs: &RaySamples, proj: &Projector, gamma: f64, n_sg: usize, mode: BudgetMode) -> ListResult {
    let e = rs.exponent;
    let mut out: Vec<Supersegment> = Vec::with_capacity(n_sg.min(rs.samples.len()));
    let mut open: Option<SegmentAccum> = None;
    let mut min_front = -1.0f32;

    let ndc = |t: f64| proj.ndc_z(&rs.ray.at(t)).clamp(-1.0, 1.0) as f32;
    let close = |acc: SegmentAccum, out: &mut Vec<Supersegment>, min_front: &mut f32| {
        let mut front = ndc(rs.t_at(acc.first)).max(*min_front);
        let mut back = ndc(rs.t_at(acc.last + 1));
        if back <= front {
            back = next_up(front);
        }
        if back > 1.0 {
            // No room left in f32 depth; fold into the previous supersegment.
            if let Some(prev) = out.last_mut() {
                let t = 1.0 - prev.alpha as f64;
                for c in 0..3 {
                    prev.color[c] = (prev.color[c] as f64 + t * acc.color[c]) as f32;
                }
                prev.alpha = (prev.alpha as f64 + t * acc.alpha) as f32;
                prev.back = 1.0;
                clamp_premult(prev);
                return;
            }
            front = prev_down(1.0);
            back = 1.0;
        }
        let mut s = Supersegment {
            front,
            back,
            color: acc.color.map(|c| c as f32),
            alpha: acc.alpha.min(1.0) as f32,
        };
        clamp_premult(&mut s);
        *min_front = back;
        out.push(s);
    };

    for (i, &s) in rs.samples.iter().enumerate() {
        let capped = mode == BudgetMode::Cap && out.len() + 1 >= n_sg && open.is_some();
        if s[3] <= 0.0 {
            if !capped {
                if let Some(acc) = open.take() {
                    close(acc, &mut out, &mut min_front);
                }
            }
            continue;
        }
        match open.as_mut() {
            Some(acc) if capped || !terminate_check(acc.per_step_premult(e), s, e, gamma) => acc.add(s, e, i),
            _ => {
                if let Some(acc) = open.take() {
                    close(acc, &mut out, &mut min_front);
                }
                if out.len() >= n_sg {
                    // Only reachable in abort mode.
                    return ListResult { segments: out, count: n_sg + 1, exceeded: true };
                }
                let mut acc = SegmentAccum::start(i);
                acc.add(s, e, i);
                open = Some(acc);
            }
        }
    }
    if let Some(acc) = open.take() {
        close(acc, &mut out, &mut min_front);
    }
    let count = out.len();
    ListResult { segments: out, count, exceeded: false }
}

fn clamp_premult(s: &mut Supersegment) {
    s.alpha = s.alpha.clamp(0.0, 1.0);
    for c in &mut s.color {
        *c = c.clamp(0.0, s.alpha);
    }
}

fn next_up(x: f32) -> f32 {
    if x >= 0.0 {
        f32::from_bits(x.to_bits() + 1)
    } else if x == -0.0 || x == 0.0 {
        f32::from_bits(1)
    } else {
        f32::from_bits(x.to_bits() - 1)
    }
}

fn prev_down(x: f32) -> f32 {
    -next_up(-x)
}

/// Single pass at a fixed `gamma`, sampling the ray first.
pub fn generate_list(
    ray: &Ray,
    vol: &Volume,
    tf: &TransferFunction,
    proj: &Projector,
    gamma: f64,
    params: &GenParams,
    mode: BudgetMode,
) -> ListResult {
    let rs = sample_ray(vol, tf, ray, params);
    segment_samples(&rs, proj, gamma, params.n_sg as usize, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaResult {
    pub gamma: f64,
    pub segments: Vec<Supersegment>,
    /// Segmentation passes performed.
    pub passes: u32,
    /// True when no threshold fits the budget and the list was capped.
    pub capped: bool,
}

/// Bisection search for the per-ray threshold.
///
/// Accepts any count in `[n_sg - delta, n_sg]`. The first pass runs at
/// `gamma_init`; if it already fits under `n_sg` the ray is done. Otherwise the
/// bracket `[low, high]` starts at `[0, sqrt(3)]` and is halved until a count
/// is accepted or the bracket is narrower than `epsilon`, at which point the
/// result at `high` is used (it never exceeds the budget).
pub fn find_gamma_samples(rs: &RaySamples, proj: &Projector, params: &GenParams) -> GammaResult {
    let n_sg = params.n_sg as usize;
    let accept_lo = n_sg - params.delta() as usize;

    // More disjoint non-transparent runs than budget: no threshold can fit.
    if rs.runs() > n_sg {
        let r = segment_samples(rs, proj, GAMMA_MAX, n_sg, BudgetMode::Cap);
        return GammaResult { gamma: GAMMA_MAX, segments: r.segments, passes: 1, capped: true };
    }

    let mut low = 0.0;
    let mut high = GAMMA_MAX;
    let mut high_segments: Option<Vec<Supersegment>> = None;
    let mut gamma = params.gamma_init;
    let mut passes = 0;
    let mut first = true;
    loop {
        if !first && high - low < params.epsilon {
            let segments = match high_segments {
                Some(s) => s,
                None => {
                    passes += 1;
                    let r = segment_samples(rs, proj, high, n_sg, BudgetMode::Cap);
                    return GammaResult { gamma: high, segments: r.segments, passes, capped: true };
                }
            };
            return GammaResult { gamma: high, segments, passes, capped: false };
        }
        let r = segment_samples(rs, proj, gamma, n_sg, BudgetMode::Abort);
        passes += 1;
        if first {
            first = false;
            if !r.exceeded && r.count < n_sg {
                return GammaResult { gamma, segments: r.segments, passes, capped: false };
            }
        }
        if r.exceeded {
            low = gamma;
        } else if r.count < accept_lo {
            high = gamma;
            high_segments = Some(r.segments);
        } else {
            return GammaResult { gamma, segments: r.segments, passes, capped: false };
        }
        gamma = 0.5 * (low + high);
    }
}

/// Samples and runs the bisection for one ray.
pub fn find_gamma(ray: &Ray, vol: &Volume, tf: &TransferFunction, proj: &Projector, params: &GenParams) -> GammaResult {
    find_gamma_samples(&sample_ray(vol, tf, ray, params), proj, params)
}

#[derive(Debug, Clone, Default)]
pub struct GenStats {
    /// Segmentation passes per list, row-major like the lists.
    pub passes: Vec<u32>,
    pub gammas: Vec<f32>,
    pub capped_rays: usize,
    pub total_segments: usize,
    pub ms: f64,
}

impl GenStats {
    pub fn max_passes(&self) -> u32 {
        self.passes.iter().copied().max().unwrap_or(0)
    }

    pub fn mean_passes(&self) -> f64 {
        if self.passes.is_empty() {
            return 0.0;
        }
        self.passes.iter().map(|&p| p as f64).sum::<f64>() / self.passes.len() as f64
    }

    /// Number of rays per pass count, index = passes.
    pub fn pass_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.max_passes() as usize + 1];
        for &p in &self.passes {
            h[p as usize] += 1;
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct GenOutput {
    pub vdi: Vdi,
    pub grid: AccelGrid,
    pub stats: GenStats,
}

/// List index `cy * width + cx` of image pixel `(ix, iy)`; list rows run
/// bottom-up in NDC y while image rows run top-down.
#[inline]
pub fn pixel_list_index(ix: u32, iy: u32, width: u32, height: u32) -> usize {
    (height - 1 - iy) as usize * width as usize + ix as usize
}

/// One bisection per pixel of the camera viewport, then grid counting.
pub fn generate_vdi(vol: &Volume, tf: &TransferFunction, cam: &Camera, params: &GenParams) -> GenOutput {
    let start = Instant::now();
    let (w, h) = cam.viewport;
    let proj = cam.projector();
    let dims = params.grid_dims.unwrap_or_else(|| AccelGrid::default_dims(w, h));
    let builder = GridBuilder::new(AccelGrid::for_camera(cam, dims));

    // Rows of lists, bottom-up.
    let rows = crate::par::map_indexed(h as usize, |cy| {
        let cy = cy as u32;
        (0..w)
            .map(|cx| {
                let ray = proj.ray_through_ndc(
                    2.0 * (cx as f64 + 0.5) / w as f64 - 1.0,
                    2.0 * (cy as f64 + 0.5) / h as f64 - 1.0,
                );
                let r = find_gamma(&ray, vol, tf, &proj, params);
                for s in &r.segments {
                    builder.add(cx, cy, w, h, s.front, s.back);
                }
                r
            })
            .collect::<Vec<_>>()
    });

    let mut vdi = Vdi::empty(*cam, vol.aabb(), params.n_sg);
    let mut stats = GenStats::default();
    for (cy, row) in rows.into_iter().enumerate() {
        for (cx, r) in row.into_iter().enumerate() {
            let idx = vdi.list_index(cx as u32, cy as u32);
            assert!(r.segments.len() <= params.n_sg as usize, "list exceeds n_sg");
            vdi.set_list(idx, &r.segments);
            stats.passes.push(r.passes);
            stats.gammas.push(r.gamma as f32);
            stats.capped_rays += r.capped as usize;
            stats.total_segments += r.segments.len();
        }
    }
    stats.ms = start.elapsed().as_secs_f64() * 1e3;
    GenOutput { vdi, grid: builder.finish(), stats }
}
