//! Generation server.
//!
//! Per connection, poses land in a latest-wins mailbox. A generation thread
//! takes the newest pose whenever it is idle, skips it if it matches the last
//! generated pose (unless the data changed), and hands the encoded VDI to a
//! compression/send thread through a single slot that drops the oldest value.
//! Generation of VDI k+1 thus overlaps compression and sending of VDI k.

use std::io;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use vdi::camera::Camera;
use vdi::format::encode_vdi;
use vdi::generate::{generate_vdi, GenParams};
use vdi::{TransferFunction, Volume};

use crate::mailbox::Latest;
use crate::proto::{read_frame, write_frame, ControlMsg, Frame, PoseMsg, ProtoError, VdiPacket};

/// Produces encoded VDI file bytes for a camera.
pub trait VdiSource: Send {
    fn generate(&mut self, cam: &Camera) -> Vec<u8>;
}

/// Turns VDI file bytes into a packet.
pub trait Compressor: Send {
    fn compress(&mut self, seq: u64, gen_pose_seq: u64, file_bytes: &[u8]) -> VdiPacket;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Lz4;

impl Compressor for Lz4 {
    fn compress(&mut self, seq: u64, gen_pose_seq: u64, file_bytes: &[u8]) -> VdiPacket {
        VdiPacket::compress(seq, gen_pose_seq, file_bytes)
    }
}

/// Generates from a shared volume.
pub struct VolumeSource {
    pub volume: Arc<Volume>,
    pub tf: Arc<TransferFunction>,
    pub params: GenParams,
}

impl VdiSource for VolumeSource {
    fn generate(&mut self, cam: &Camera) -> Vec<u8> {
        let out = generate_vdi(&self.volume, &self.tf, cam, &self.params);
        log::info!(
            "generated {}x{} VDI: {} supersegments, max passes {}, {:.1} ms",
            cam.viewport.0,
            cam.viewport.1,
            out.stats.total_segments,
            out.stats.max_passes(),
            out.stats.ms
        );
        encode_vdi(&out.vdi, &out.grid)
    }
}

struct Generated {
    pose_seq: u64,
    bytes: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct PipelineStats {
    pub poses_received: AtomicU64,
    pub generations: AtomicU64,
    pub skipped_identical: AtomicU64,
    pub dropped_handoffs: AtomicU64,
    pub packets_sent: AtomicU64,
    pub bytes_sent: AtomicU64,
    /// Pose sequence number used by each generation, in order.
    pub gen_pose_seqs: Mutex<Vec<u64>>,
    /// Time each packet finished sending.
    pub send_times: Mutex<Vec<Instant>>,
}

impl PipelineStats {
    pub fn generations(&self) -> u64 {
        self.generations.load(Ordering::SeqCst)
    }

    pub fn packets(&self) -> u64 {
        self.packets_sent.load(Ordering::SeqCst)
    }

    /// Gaps between consecutive packet sends, in milliseconds.
    pub fn send_intervals_ms(&self) -> Vec<f64> {
        let t = self.send_times.lock().unwrap();
        t.windows(2).map(|w| (w[1] - w[0]).as_secs_f64() * 1e3).collect()
    }
}

pub struct Pipeline {
    poses: Arc<Latest<PoseMsg>>,
    last_pose: Mutex<Option<PoseMsg>>,
    data_changed: Arc<AtomicBool>,
    stats: Arc<PipelineStats>,
    handles: Vec<JoinHandle<()>>,
}

impl Pipeline {
    /// Starts both stages. `sink` receives every packet in order; an error
    /// from it stops the send stage.
    pub fn spawn<S, C, K>(mut source: S, mut compressor: C, viewport: (u32, u32), mut sink: K) -> Self
    where
        S: VdiSource + 'static,
        C: Compressor + 'static,
        K: FnMut(&VdiPacket) -> io::Result<()> + Send + 'static,
    {
        let poses = Arc::new(Latest::<PoseMsg>::new());
        let handoff = Arc::new(Latest::<Generated>::new());
        let data_changed = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(PipelineStats::default());

        let gen = {
            let (poses, handoff, data_changed, stats) = (poses.clone(), handoff.clone(), data_changed.clone(), stats.clone());
            thread::Builder::new()
                .name("vdi-generate".into())
                .spawn(move || {
                    let mut last: Option<PoseMsg> = None;
                    while let Some(pose) = poses.take() {
                        let changed = data_changed.swap(false, Ordering::SeqCst);
                        if !changed && last.is_some_and(|l| l.same_pose(&pose)) {
                            stats.skipped_identical.fetch_add(1, Ordering::SeqCst);
                            continue;
                        }
                        stats.generations.fetch_add(1, Ordering::SeqCst);
                        stats.gen_pose_seqs.lock().unwrap().push(pose.seq);
                        let bytes = source.generate(&pose.to_camera(viewport));
                        if handoff.put(Generated { pose_seq: pose.seq, bytes }) {
                            stats.dropped_handoffs.fetch_add(1, Ordering::SeqCst);
                        }
                        last = Some(pose);
                    }
                    handoff.close();
                })
                .expect("spawn generation thread")
        };

        let send = {
            let (handoff, poses, stats) = (handoff.clone(), poses.clone(), stats.clone());
            thread::Builder::new()
                .name("vdi-send".into())
                .spawn(move || {
                    let mut seq = 0;
                    while let Some(g) = handoff.take() {
                        seq += 1;
                        let packet = compressor.compress(seq, g.pose_seq, &g.bytes);
                        if let Err(e) = sink(&packet) {
                            log::warn!("send failed: {e}");
                            poses.close();
                            break;
                        }
                        stats.packets_sent.fetch_add(1, Ordering::SeqCst);
                        stats.bytes_sent.fetch_add(packet.body.len() as u64, Ordering::SeqCst);
                        stats.send_times.lock().unwrap().push(Instant::now());
                    }
                })
                .expect("spawn send thread")
        };

        Self { poses, last_pose: Mutex::new(None), data_changed, stats, handles: vec![gen, send] }
    }

    pub fn submit_pose(&self, pose: PoseMsg) {
        self.stats.poses_received.fetch_add(1, Ordering::SeqCst);
        *self.last_pose.lock().unwrap() = Some(pose);
        self.poses.put(pose);
    }

    /// Forces the next generation even if the pose is unchanged.
    pub fn notify_data_changed(&self) {
        self.data_changed.store(true, Ordering::SeqCst);
        if let Some(p) = *self.last_pose.lock().unwrap() {
            self.poses.put_if_empty(p);
        }
    }

    pub fn stats(&self) -> Arc<PipelineStats> {
        self.stats.clone()
    }

    /// Stops accepting poses, lets in-flight work finish and joins both stages.
    pub fn shutdown(self) -> Arc<PipelineStats> {
        self.poses.close();
        for h in self.handles {
            let _ = h.join();
        }
        self.stats
    }
}

/// Serves one connection until the peer disconnects.
///
/// The first frame may be a handshake carrying the viewport and `n_sg`;
/// `make_source` builds the generator from it.
pub fn serve_connection<F, S>(stream: TcpStream, default_viewport: (u32, u32), make_source: &F) -> Result<Arc<PipelineStats>, ProtoError>
where
    F: Fn(Option<&ControlMsg>) -> S,
    S: VdiSource + 'static,
{
    let peer = stream.peer_addr().ok();
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    let mut pending_pose = None;
    let (viewport, source) = match read_frame(&mut reader)? {
        Some(Frame::Control(c @ ControlMsg::Handshake { viewport, .. })) => ((viewport[0], viewport[1]), make_source(Some(&c))),
        Some(Frame::Pose(p)) => {
            pending_pose = Some(p);
            (default_viewport, make_source(None))
        }
        Some(_) => (default_viewport, make_source(None)),
        None => return Ok(Arc::new(PipelineStats::default())),
    };
    log::info!("client {peer:?} connected, viewport {}x{}", viewport.0, viewport.1);
    let pipeline = Pipeline::spawn(source, Lz4, viewport, move |p| write_frame(&mut writer, &Frame::Vdi(p.clone())));
    if let Some(p) = pending_pose {
        pipeline.submit_pose(p);
    }
    let result = loop {
        match read_frame(&mut reader) {
            Ok(Some(Frame::Pose(p))) => pipeline.submit_pose(p),
            Ok(Some(Frame::Control(ControlMsg::DataChanged))) => pipeline.notify_data_changed(),
            Ok(Some(other)) => log::warn!("ignoring unexpected frame {:?}", std::mem::discriminant(&other)),
            Ok(None) => break Ok(()),
            Err(e) => break Err(e),
        }
    };
    let _ = reader.shutdown(std::net::Shutdown::Both);
    let stats = pipeline.shutdown();
    log::info!("client {peer:?} disconnected after {} generations", stats.generations());
    result.map(|_| stats)
}

/// Accept loop; each client gets its own pipeline thread. Dropped
/// connections are logged and the loop keeps accepting.
pub fn serve<F, S>(listener: TcpListener, default_viewport: (u32, u32), make_source: F) -> io::Result<()>
where
    F: Fn(Option<&ControlMsg>) -> S + Send + Sync + 'static,
    S: VdiSource + 'static,
{
    let make_source = Arc::new(make_source);
    for conn in listener.incoming() {
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let make_source = make_source.clone();
        thread::spawn(move || {
            if let Err(e) = serve_connection(stream, default_viewport, &*make_source) {
                log::warn!("connection ended with error: {e}");
            }
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::mpsc;
    use std::time::Duration;

    struct Sleepy(Duration);

    impl VdiSource for Sleepy {
        fn generate(&mut self, cam: &Camera) -> Vec<u8> {
            thread::sleep(self.0);
            cam.position.x.to_le_bytes().to_vec()
        }
    }

    fn pose(seq: u64, x: f64) -> PoseMsg {
        PoseMsg { seq, timestamp_ms: 0, camera: [x, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0, 0.7, 0.1, 10.0] }
    }

    #[test]
    fn identical_pose_is_not_regenerated() {
        let (tx, rx) = mpsc::channel();
        let p = Pipeline::spawn(Sleepy(Duration::from_millis(1)), Lz4, (4, 4), move |pk| {
            tx.send(pk.gen_pose_seq).unwrap();
            Ok(())
        });
        p.submit_pose(pose(1, 0.5));
        assert_eq!(rx.recv_timeout(Duration::from_secs(5)).unwrap(), 1);
        p.submit_pose(pose(2, 0.5));
        thread::sleep(Duration::from_millis(50));
        p.notify_data_changed();
        assert_eq!(rx.recv_timeout(Duration::from_secs(5)).unwrap(), 2);
        let st = p.shutdown();
        assert_eq!(st.generations(), 2);
        assert_eq!(st.skipped_identical.load(Ordering::SeqCst), 1);
    }
}
