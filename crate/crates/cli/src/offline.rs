//! Offline commands: synthetic data, generation, rendering and the benchmark harness.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use vdi::camera::{load_camera, load_camera_path};
use vdi::format::{read_vdi_file, write_vdi_file};
use vdi::generate::{generate_vdi, GenOutput, GenParams};
use vdi::synth::{default_tf, synth_volume};
use vdi::volume::{load_volume_json, save_volume};
use vdi::{psnr, render_dvr, render_preview, render_vdi, ssim, Camera, DvrParams, PiController, PreviewParams, RenderOptions};
use vdi::{TransferFunction, Volume};

use crate::{BenchArgs, DvrArgs, GenerateArgs, Invariant, OnOff, RenderArgs, SceneArgs, SynthArgs, Usage};

pub const DEFAULT_VIEWPORT: (u32, u32) = (512, 512);
pub const DEFAULT_DISTANCE: f64 = 2.2;
pub const DEFAULT_FOV_DEG: f64 = 40.0;
/// Grid counts sum over a whole cell of lists, so small factors already sample densely.
pub const DEFAULT_D_R: f64 = 0.05;

pub fn synth(a: SynthArgs) -> Result<()> {
    if a.dims < 2 {
        return Err(Usage("--dims must be at least 2".into()).into());
    }
    let preset = a.preset.into();
    let vol = synth_volume(preset, a.dims, a.seed);
    let meta = save_volume(&vol, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} and {}", a.out.display(), meta.display());
    if let Some(p) = &a.tf_out {
        write_json(p, &default_tf(preset).to_file())?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

struct Scene {
    vol: Volume,
    tf: TransferFunction,
    cam: Camera,
}

fn load_scene(a: &SceneArgs) -> Result<Scene> {
    let vol = load_volume_json(&a.volume).with_context(|| format!("loading {}", a.volume.display()))?;
    let tf = TransferFunction::from_json_file(&a.tf).with_context(|| format!("loading {}", a.tf.display()))?;
    let viewport = a.viewport.unwrap_or(DEFAULT_VIEWPORT);
    let mut cam = match &a.camera {
        Some(p) => load_camera(p, viewport).with_context(|| format!("loading {}", p.display()))?,
        None => Camera::framing(&vol.aabb(), DEFAULT_DISTANCE, DEFAULT_FOV_DEG.to_radians(), viewport),
    };
    if let Some(v) = a.viewport {
        cam = cam.with_viewport(v);
    }
    if let Some(s) = a.step {
        if !(s > 0.0) {
            return Err(Usage("--step must be positive".into()).into());
        }
    }
    Ok(Scene { vol, tf, cam })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn gen_params(n_sg: u32, delta: Option<u32>, epsilon: f64, step: Option<f64>) -> Result<GenParams> {
    if n_sg == 0 || n_sg > u16::MAX as u32 {
        return Err(Usage(format!("--n-sg must be in 1..={}", u16::MAX)).into());
    }
    if !(epsilon > 0.0) {
        return Err(Usage("--epsilon must be positive".into()).into());
    }
    Ok(GenParams { delta, epsilon, step, ..GenParams::with_n_sg(n_sg) })
}

fn check_generated(out: &GenOutput) -> Result<()> {
    out.vdi.validate().map_err(Invariant)?;
    Ok(())
}

#[derive(Serialize)]
struct PassRow {
    cx: u32,
    cy: u32,
    passes: u32,
    gamma: f32,
    count: u16,
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let s = load_scene(&a.scene)?;
    let params = gen_params(a.n_sg, a.delta, a.epsilon, a.scene.step)?;
    let out = generate_vdi(&s.vol, &s.tf, &s.cam, &params);
    check_generated(&out)?;
    write_vdi_file(&a.out, &out.vdi, &out.grid).with_context(|| format!("writing {}", a.out.display()))?;

    let st = &out.stats;
    let (w, h) = s.cam.viewport;
    println!("lists               {}x{} = {}", w, h, out.vdi.num_lists());
    println!("n_sg / delta        {} / {}", params.n_sg, params.delta());
    println!("supersegments       {} ({:.2} per list)", st.total_segments, st.total_segments as f64 / out.vdi.num_lists() as f64);
    println!("passes mean / max   {:.2} / {}", st.mean_passes(), st.max_passes());
    println!("capped rays         {}", st.capped_rays);
    println!("generation time     {:.1} ms", st.ms);
    let hist = st.pass_histogram();
    let nonzero: Vec<String> = hist.iter().enumerate().filter(|(_, &n)| n > 0).map(|(p, n)| format!("{p}:{n}")).collect();
    println!("pass histogram      {}", nonzero.join(" "));
    println!("wrote {}", a.out.display());

    if let Some(p) = &a.passes_csv {
        let mut wr = csv::Writer::from_path(p).with_context(|| format!("writing {}", p.display()))?;
        for cy in 0..h {
            for cx in 0..w {
                let i = out.vdi.list_index(cx, cy);
                wr.serialize(PassRow { cx, cy, passes: st.passes[i], gamma: st.gammas[i], count: out.vdi.counts[i] })?;
            }
        }
        wr.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RenderRow {
    frame: u32,
    mode: &'static str,
    width: u32,
    height: u32,
    d_i: Option<f64>,
    d_r: Option<f64>,
    ess: bool,
    frame_ms: f64,
    lists_visited: Option<u64>,
    supersegments_intersected: Option<u64>,
    search_reads: Option<u64>,
    cells_skipped: Option<u64>,
    samples: Option<u64>,
    lookups: Option<u64>,
    cells_crossed: Option<u64>,
}

fn check_factor(name: &str, v: Option<f64>, max: f64) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x <= max) => Err(Usage(format!("--{name} must be in (0, {max}]")).into()),
        _ => Ok(()),
    }
}

pub fn render(a: RenderArgs) -> Result<()> {
    check_factor("d-i", a.d_i, 1.0)?;
    check_factor("d-r", a.d_r, f64::MAX)?;
    check_factor("target-fps", a.target_fps, f64::MAX)?;
    if a.frames == 0 {
        return Err(Usage("--frames must be at least 1".into()).into());
    }
    let (vdi, grid) = read_vdi_file(&a.vdi).with_context(|| format!("reading {}", a.vdi.display()))?;
    let mut cam = match &a.camera {
        Some(p) => load_camera(p, (vdi.width, vdi.height)).with_context(|| format!("loading {}", p.display()))?,
        None => vdi.gen_camera.clone(),
    };
    if let Some(v) = a.viewport {
        cam = cam.with_viewport(v);
    }
    let opts = RenderOptions { use_ess: a.ess == OnOff::On, early_term_alpha: a.early_term, ..RenderOptions::default() };
    let preview = a.d_i.is_some() || a.d_r.is_some() || a.target_fps.is_some();
    let mut pi = match (a.target_fps, a.d_i) {
        (Some(_), None) => Some(PiController::default()),
        _ => None,
    };
    let d_r = a.d_r.unwrap_or(DEFAULT_D_R);

    let mut rows = Vec::new();
    let mut last = None;
    for frame in 0..a.frames {
        let (w, h) = cam.viewport;
        let row = if preview {
            let d_i = pi.as_ref().map(|c| c.d_i).or(a.d_i).unwrap_or(1.0);
            let params = PreviewParams { d_i, d_r, target_fps: a.target_fps.unwrap_or(30.0), display: cam.viewport };
            let start = Instant::now();
            let (img, _, st) = render_preview(&vdi, &grid, &cam, &params, &opts);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            if let (Some(c), Some(fps)) = (pi.as_mut(), a.target_fps) {
                c.update(ms, fps);
            }
            last = Some(img);
            RenderRow {
                frame,
                mode: "preview",
                width: w,
                height: h,
                d_i: Some(d_i),
                d_r: Some(d_r),
                ess: opts.use_ess,
                frame_ms: ms,
                lists_visited: None,
                supersegments_intersected: None,
                search_reads: None,
                cells_skipped: None,
                samples: Some(st.samples),
                lookups: Some(st.lookups),
                cells_crossed: Some(st.cells_crossed),
            }
        } else {
            let start = Instant::now();
            let (img, st) = render_vdi(&vdi, &grid, &cam, &opts);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            last = Some(img);
            RenderRow {
                frame,
                mode: "full",
                width: w,
                height: h,
                d_i: None,
                d_r: None,
                ess: opts.use_ess,
                frame_ms: ms,
                lists_visited: Some(st.lists_visited),
                supersegments_intersected: Some(st.supersegments_intersected),
                search_reads: Some(st.search_reads),
                cells_skipped: Some(st.cells_skipped),
                samples: None,
                lookups: None,
                cells_crossed: None,
            }
        };
        rows.push(row);
    }
    let img = last.expect("at least one frame");
    img.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let r = rows.last().unwrap();
    println!(
        "{} {}x{} in {:.2} ms (deviation {:.2} deg){}",
        r.mode,
        r.width,
        r.height,
        r.frame_ms,
        vdi.gen_camera.deviation_deg(&cam),
        r.d_i.map(|d| format!(", d_i {d:.3}")).unwrap_or_default()
    );
    if let Some(p) = &a.stats {
        let mut wr = csv::Writer::from_path(p).with_context(|| format!("writing {}", p.display()))?;
        for r in &rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
    }
    Ok(())
}

pub fn dvr(a: DvrArgs) -> Result<()> {
    let s = load_scene(&a.scene)?;
    let start = Instant::now();
    let img = render_dvr(&s.vol, &s.tf, &s.cam, &DvrParams { step: a.scene.step, ..DvrParams::default() });
    println!("dvr {}x{} in {:.1} ms", s.cam.viewport.0, s.cam.viewport.1, start.elapsed().as_secs_f64() * 1e3);
    img.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    frame: usize,
    angle_deg: f64,
    mode: &'static str,
    d_i: Option<f64>,
    d_r: Option<f64>,
    frame_ms: f64,
    dvr_ms: f64,
    ssim: f64,
    psnr: f64,
    lists_visited: Option<u64>,
    supersegments_intersected: Option<u64>,
    search_reads: Option<u64>,
    cells_skipped: Option<u64>,
    samples: Option<u64>,
}

/// Median wall time of `repeat` runs, and the result of the last one.
fn timed<T>(repeat: u32, mut f: impl FnMut() -> T) -> (f64, T) {
    let mut times = Vec::with_capacity(repeat as usize);
    let mut out = None;
    for _ in 0..repeat.max(1) {
        let start = Instant::now();
        out = Some(f());
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    (times[times.len() / 2], out.unwrap())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    for (name, v) in [("d-i", &a.d_i), ("d-r", &a.d_r)] {
        for &x in v.iter() {
            check_factor(name, Some(x), if name == "d-i" { 1.0 } else { f64::MAX })?;
        }
    }
    if a.d_i.is_empty() != a.d_r.is_empty() {
        return Err(Usage("--d-i and --d-r must be given together".into()).into());
    }
    let s = load_scene(&a.scene)?;
    let params = gen_params(a.n_sg, None, GenParams::default().epsilon, a.scene.step)?;
    let out = generate_vdi(&s.vol, &s.tf, &s.cam, &params);
    check_generated(&out)?;
    println!(
        "generated {}x{} VDI, n_sg {}: {} supersegments in {:.1} ms",
        s.cam.viewport.0, s.cam.viewport.1, params.n_sg, out.stats.total_segments, out.stats.ms
    );

    let frames: Vec<(f64, Camera)> = match &a.path {
        Some(p) => {
            let mut cams = load_camera_path(p, s.cam.viewport).with_context(|| format!("loading {}", p.display()))?;
            if let Some(v) = a.scene.viewport {
                cams = cams.into_iter().map(|c| c.with_viewport(v)).collect();
            }
            cams.into_iter().map(|c| (s.cam.deviation_deg(&c), c)).collect()
        }
        None => {
            let center = s.vol.aabb().center();
            a.angles
                .iter()
                .map(|&deg| (deg, s.cam.orbit(&center, &nalgebra::Vector3::y(), deg.to_radians())))
                .collect()
        }
    };
    if let Some(d) = &a.frames_dir {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }

    let opts = RenderOptions { use_ess: a.ess == OnOff::On, ..RenderOptions::default() };
    let dvr_params = DvrParams { step: a.scene.step, ..DvrParams::default() };
    let mut wr = csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    for (k, (angle, cam)) in frames.iter().enumerate() {
        let (dvr_ms, truth) = timed(a.repeat, || render_dvr(&s.vol, &s.tf, cam, &dvr_params));
        let (ms, (img, st)) = timed(a.repeat, || render_vdi(&out.vdi, &out.grid, cam, &opts));
        if let Some(d) = &a.frames_dir {
            img.save(d.join(format!("frame_{k:04}.png")))?;
        }
        let row = BenchRow {
            frame: k,
            angle_deg: *angle,
            mode: "full",
            d_i: None,
            d_r: None,
            frame_ms: ms,
            dvr_ms,
            ssim: ssim(&img, &truth)?,
            psnr: psnr(&img, &truth)?,
            lists_visited: Some(st.lists_visited),
            supersegments_intersected: Some(st.supersegments_intersected),
            search_reads: Some(st.search_reads),
            cells_skipped: Some(st.cells_skipped),
            samples: None,
        };
        println!(
            "{:>3} {:>6.1} deg  vdi {:>8.2} ms  dvr {:>8.2} ms  ssim {:.4}  psnr {:.2}  lists {}",
            k, angle, ms, dvr_ms, row.ssim, row.psnr, st.lists_visited
        );
        wr.serialize(row)?;
        for &d_i in &a.d_i {
            for &d_r in &a.d_r {
                let pp = PreviewParams { d_i, d_r, target_fps: 30.0, display: cam.viewport };
                let (ms, (img, _, st)) = timed(a.repeat, || render_preview(&out.vdi, &out.grid, cam, &pp, &opts));
                wr.serialize(BenchRow {
                    frame: k,
                    angle_deg: *angle,
                    mode: "preview",
                    d_i: Some(d_i),
                    d_r: Some(d_r),
                    frame_ms: ms,
                    dvr_ms,
                    ssim: ssim(&img, &truth)?,
                    psnr: psnr(&img, &truth)?,
                    lists_visited: None,
                    supersegments_intersected: None,
                    search_reads: None,
                    cells_skipped: None,
                    samples: Some(st.samples),
                })?;
            }
        }
    }
    wr.flush()?;
    println!("wrote {}", a.out.display());
    Ok(())
}
