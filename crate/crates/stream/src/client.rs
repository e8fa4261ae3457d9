//! Rendering client.
//!
//! A receiver thread reads packets, decompresses and decodes them fully, and
//! only then publishes the result into a [`DoubleBuffer`]. The render loop
//! clones the current `Arc` once per frame, so it always works on one complete
//! VDI while the next one is being received.

use std::io::{self, Read};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use vdi::camera::Camera;
use vdi::control::{FrameMode, ModeSelector, PiController};
use vdi::format::decode_vdi;
use vdi::preview::{render_preview, PreviewParams};
use vdi::raycast::{render_vdi, RenderOptions};
use vdi::{AccelGrid, Image, Vdi};

use crate::proto::{read_frame, sha256, write_frame, ControlMsg, Frame, PoseMsg, ProtoError, VdiPacket};

#[derive(Debug)]
pub struct LoadedVdi {
    pub vdi: Vdi,
    pub grid: AccelGrid,
    pub packet_seq: u64,
    pub gen_pose_seq: u64,
    /// sha256 of the decompressed VDI file bytes.
    pub digest: [u8; 32],
    pub received_at: Instant,
}

/// Decompresses, hashes and decodes a packet.
pub fn load_packet(p: &VdiPacket) -> Result<LoadedVdi, ProtoError> {
    let bytes = p.decompress()?;
    let digest = sha256(&bytes);
    let (vdi, grid) = decode_vdi(&bytes)?;
    Ok(LoadedVdi { vdi, grid, packet_seq: p.seq, gen_pose_seq: p.gen_pose_seq, digest, received_at: Instant::now() })
}

/// Holds the VDI being rendered; the next one is built off to the side and
/// swapped in as a whole.
#[derive(Debug, Default)]
pub struct DoubleBuffer {
    current: Mutex<Option<Arc<LoadedVdi>>>,
    swaps: AtomicU64,
    dropped: AtomicU64,
}

impl DoubleBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, v: LoadedVdi) {
        *self.current.lock().unwrap() = Some(Arc::new(v));
        self.swaps.fetch_add(1, Ordering::SeqCst);
    }

    pub fn current(&self) -> Option<Arc<LoadedVdi>> {
        self.current.lock().unwrap().clone()
    }

    pub fn swaps(&self) -> u64 {
        self.swaps.load(Ordering::SeqCst)
    }

    /// Packets that failed to decode; the previous VDI stayed in place.
    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::SeqCst)
    }

    /// Decodes `p` and swaps it in, or counts it as dropped.
    pub fn receive(&self, p: &VdiPacket) -> Result<(), ProtoError> {
        match load_packet(p) {
            Ok(v) => {
                self.publish(v);
                Ok(())
            }
            Err(e) => {
                self.dropped.fetch_add(1, Ordering::SeqCst);
                Err(e)
            }
        }
    }
}

/// Reads frames from `r` until end of stream, feeding VDI packets into `buf`.
pub fn spawn_receiver<R: Read + Send + 'static>(mut r: R, buf: Arc<DoubleBuffer>) -> JoinHandle<Result<(), ProtoError>> {
    thread::Builder::new()
        .name("vdi-receive".into())
        .spawn(move || loop {
            match read_frame(&mut r)? {
                Some(Frame::Vdi(p)) => {
                    if let Err(e) = buf.receive(&p) {
                        log::warn!("dropping packet {}: {e}", p.seq);
                    }
                }
                Some(_) => {}
                None => return Ok(()),
            }
        })
        .expect("spawn receiver thread")
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Connection to a generation server.
pub struct Client {
    writer: Mutex<TcpStream>,
    buffer: Arc<DoubleBuffer>,
    seq: AtomicU64,
    receiver: Option<JoinHandle<Result<(), ProtoError>>>,
    pub viewport: (u32, u32),
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs, viewport: (u32, u32), n_sg: u32) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut writer = stream.try_clone()?;
        write_frame(&mut writer, &Frame::Control(ControlMsg::Handshake { viewport: [viewport.0, viewport.1], n_sg }))?;
        let buffer = Arc::new(DoubleBuffer::new());
        let receiver = spawn_receiver(stream, buffer.clone());
        Ok(Self { writer: Mutex::new(writer), buffer, seq: AtomicU64::new(0), receiver: Some(receiver), viewport })
    }

    /// Sends a pose and returns its sequence number.
    pub fn send_pose(&self, cam: &Camera) -> io::Result<u64> {
        let seq = self.seq.fetch_add(1, Ordering::SeqCst) + 1;
        write_frame(&mut *self.writer.lock().unwrap(), &Frame::Pose(PoseMsg::new(seq, now_ms(), cam)))?;
        Ok(seq)
    }

    pub fn notify_data_changed(&self) -> io::Result<()> {
        write_frame(&mut *self.writer.lock().unwrap(), &Frame::Control(ControlMsg::DataChanged))
    }

    pub fn last_seq(&self) -> u64 {
        self.seq.load(Ordering::SeqCst)
    }

    pub fn buffer(&self) -> Arc<DoubleBuffer> {
        self.buffer.clone()
    }

    /// Waits until at least `swaps` VDIs have arrived.
    pub fn wait_for_swaps(&self, swaps: u64, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.buffer.swaps() < swaps {
            if Instant::now() > deadline {
                return false;
            }
            thread::sleep(Duration::from_millis(2));
        }
        true
    }

    pub fn close(mut self) -> Result<(), ProtoError> {
        let _ = self.writer.lock().unwrap().shutdown(std::net::Shutdown::Both);
        match self.receiver.take() {
            Some(h) => h.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub image: Image,
    pub mode: FrameMode,
    pub packet_seq: u64,
    pub gen_pose_seq: u64,
    pub digest: [u8; 32],
    /// A new VDI was swapped in for this frame.
    pub swapped: bool,
    pub ms: f64,
    pub d_i: f64,
    /// Angle between the generation view and the rendered view.
    pub deviation_deg: f64,
    pub vdi_age_ms: f64,
}

/// Full-quality rendering, switching to preview while frames run slow and
/// back to full quality on every new VDI.
pub struct RenderLoop {
    pub buffer: Arc<DoubleBuffer>,
    pub mode: ModeSelector,
    pub pi: PiController,
    pub d_r: f64,
    pub target_fps: f64,
    pub opts: RenderOptions,
    seen_swaps: u64,
}

impl RenderLoop {
    pub fn new(buffer: Arc<DoubleBuffer>, target_fps: f64, d_r: f64) -> Self {
        Self {
            buffer,
            mode: ModeSelector::default(),
            pi: PiController::default(),
            d_r,
            target_fps,
            opts: RenderOptions::default(),
            seen_swaps: 0,
        }
    }

    /// Renders one frame, or `None` before the first VDI arrives.
    pub fn frame(&mut self, cam: &Camera) -> Option<RenderedFrame> {
        let cur = self.buffer.current()?;
        let swaps = self.buffer.swaps();
        let swapped = swaps != self.seen_swaps;
        if swapped {
            self.seen_swaps = swaps;
            self.mode.on_new_vdi();
        }
        let mode = self.mode.mode;
        let start = Instant::now();
        let image = match mode {
            FrameMode::Full => render_vdi(&cur.vdi, &cur.grid, cam, &self.opts).0,
            FrameMode::Preview => {
                let params = PreviewParams { d_i: self.pi.d_i, d_r: self.d_r, target_fps: self.target_fps, display: cam.viewport };
                render_preview(&cur.vdi, &cur.grid, cam, &params, &self.opts).0
            }
        };
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if mode == FrameMode::Preview {
            self.pi.update(ms, self.target_fps);
        }
        self.mode.on_frame(ms, self.target_fps);
        Some(RenderedFrame {
            image,
            mode,
            packet_seq: cur.packet_seq,
            gen_pose_seq: cur.gen_pose_seq,
            digest: cur.digest,
            swapped,
            ms,
            d_i: self.pi.d_i,
            deviation_deg: cur.vdi.gen_camera.deviation_deg(cam),
            vdi_age_ms: cur.received_at.elapsed().as_secs_f64() * 1e3,
        })
    }
}
