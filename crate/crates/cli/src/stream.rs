//! `serve` and `client`.

use std::fs;
use std::net::TcpListener;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context, Result};
use nalgebra::{Point3, Vector3};
use serde::Serialize;
use vdi::camera::load_camera;
use vdi::generate::GenParams;
use vdi::volume::load_volume_json;
use vdi::{Aabb, Camera, TransferFunction};
use vdi_stream::proto::ControlMsg;
use vdi_stream::viewer::{Hud, ViewerBridge};
use vdi_stream::{Client, RenderLoop, VolumeSource};

use crate::offline::{DEFAULT_DISTANCE, DEFAULT_FOV_DEG};
use crate::{ClientArgs, ServeArgs, Usage};

pub fn serve(a: ServeArgs) -> Result<()> {
    let volume = Arc::new(load_volume_json(&a.volume).with_context(|| format!("loading {}", a.volume.display()))?);
    let tf = Arc::new(TransferFunction::from_json_file(&a.tf).with_context(|| format!("loading {}", a.tf.display()))?);
    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    // Tests and scripts read this line to find an ephemeral port.
    println!("listening on {}", listener.local_addr()?);
    let (n_sg, step) = (a.n_sg, a.step);
    vdi_stream::server::serve(listener, a.viewport, move |hs| {
        let n_sg = match hs {
            Some(ControlMsg::Handshake { n_sg, .. }) => *n_sg,
            _ => n_sg,
        };
        VolumeSource { volume: volume.clone(), tf: tf.clone(), params: GenParams { step, ..GenParams::with_n_sg(n_sg) } }
    })?;
    Ok(())
}

#[derive(Serialize)]
struct FrameRow {
    frame: u32,
    pose_seq: u64,
    gen_pose_seq: u64,
    mode: &'static str,
    swapped: bool,
    frame_ms: f64,
    d_i: f64,
    deviation_deg: f64,
    vdi_age_ms: f64,
}

fn base_camera(a: &ClientArgs) -> Result<Camera> {
    Ok(match &a.camera {
        Some(p) => load_camera(p, a.viewport).with_context(|| format!("loading {}", p.display()))?.with_viewport(a.viewport),
        None => {
            let unit = Aabb::new(Point3::new(-0.5, -0.5, -0.5), Point3::new(0.5, 0.5, 0.5));
            Camera::framing(&unit, DEFAULT_DISTANCE, DEFAULT_FOV_DEG.to_radians(), a.viewport)
        }
    })
}

pub fn client(a: ClientArgs) -> Result<()> {
    if !a.headless && a.viewer_port.is_none() {
        return Err(Usage("choose --headless or --viewer-port".into()).into());
    }
    if !(a.target_fps > 0.0 && a.d_r > 0.0) {
        return Err(Usage("--target-fps and --d-r must be positive".into()).into());
    }
    let base = base_camera(&a)?;
    let client = Client::connect(&a.connect, a.viewport, a.n_sg).with_context(|| format!("connecting to {}", a.connect))?;
    let result = if a.headless { headless(&a, &client, &base) } else { viewer(&a, &client, &base) };
    client.close()?;
    result
}

/// Orbits the base camera, waiting for the VDI of each pose before rendering it.
fn headless(a: &ClientArgs, client: &Client, base: &Camera) -> Result<()> {
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut rl = RenderLoop::new(client.buffer(), a.target_fps, a.d_r);
    let mut log = csv::Writer::from_path(a.out_dir.join("frames.csv"))?;
    let timeout = Duration::from_secs_f64(a.timeout);
    for k in 0..a.frames {
        let cam = base.orbit(&Point3::origin(), &Vector3::y(), (k as f64 * a.orbit_step).to_radians());
        let seq = client.send_pose(&cam)?;
        if !client.wait_for_swaps(k as u64 + 1, timeout) {
            return Err(anyhow!("no VDI for pose {seq} within {:.0} s", a.timeout));
        }
        let f = rl.frame(&cam).expect("a VDI has arrived");
        let path = a.out_dir.join(format!("frame_{k:04}.png"));
        f.image.save(&path).with_context(|| format!("writing {}", path.display()))?;
        log.serialize(FrameRow {
            frame: k,
            pose_seq: seq,
            gen_pose_seq: f.gen_pose_seq,
            mode: f.mode.as_str(),
            swapped: f.swapped,
            frame_ms: f.ms,
            d_i: f.d_i,
            deviation_deg: f.deviation_deg,
            vdi_age_ms: f.vdi_age_ms,
        })?;
        println!("frame {k}: pose {seq}, VDI of pose {}, {} in {:.1} ms", f.gen_pose_seq, f.mode.as_str(), f.ms);
    }
    log.flush()?;
    Ok(())
}

/// Forwards browser poses to the server and streams rendered frames back.
fn viewer(a: &ClientArgs, client: &Client, base: &Camera) -> Result<()> {
    let port = a.viewer_port.expect("checked by caller");
    let bridge = ViewerBridge::bind(("127.0.0.1", port)).with_context(|| format!("binding viewer port {port}"))?;
    println!("viewer at http://{}/", bridge.addr());
    let mut rl = RenderLoop::new(client.buffer(), a.target_fps, a.d_r);
    let mut cam = base.clone();
    client.send_pose(&cam)?;
    let mut sent = cam.clone();
    let budget = Duration::from_secs_f64(1.0 / a.target_fps);
    let start = Instant::now();
    let mut fps = 0.0;
    let mut dirty = true;
    let mut shown_swaps = 0;
    while a.duration.is_none_or(|d| start.elapsed().as_secs_f64() < d) {
        let tick = Instant::now();
        if let Some(p) = bridge.take_pose() {
            cam = p.to_camera(base);
            dirty = true;
        }
        if !cam.same_pose(&sent) {
            client.send_pose(&cam)?;
            sent = cam.clone();
        }
        // Redraw when the view moved or a new VDI arrived.
        let swaps = client.buffer().swaps();
        if dirty || swaps != shown_swaps {
            if let Some(f) = rl.frame(&cam) {
                fps = if fps == 0.0 { 1000.0 / f.ms.max(1e-3) } else { 0.9 * fps + 0.1 * 1000.0 / f.ms.max(1e-3) };
                bridge.push_frame(&f.image, f.mode);
                bridge.push_hud(&Hud {
                    fps,
                    mode: f.mode.as_str().to_string(),
                    vdi_age_ms: f.vdi_age_ms,
                    deviation_deg: f.deviation_deg,
                    new_vdi: f.swapped,
                });
                dirty = false;
                shown_swaps = swaps;
            }
        }
        if let Some(rest) = budget.checked_sub(tick.elapsed()) {
            std::thread::sleep(rest);
        }
    }
    Ok(())
}
