//! Bridge between the rendering client and a browser viewer.
//!
//! `GET /` serves a small page; `GET /viewer` upgrades to a web socket.
//! Browser to client: JSON poses `{seq, position, orientation}`, coalesced so
//! only the newest is kept. Client to browser: binary frames
//! `u32 width | u32 height | u8 mode | PNG` (little-endian) and JSON HUD text.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use nalgebra::{Point3, Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};
use vdi::camera::Camera;
use vdi::control::FrameMode;
use vdi::Image;

use crate::mailbox::Latest;

pub const INDEX_HTML: &str = include_str!("index.html");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewerPose {
    pub seq: u64,
    pub position: [f64; 3],
    /// `[x, y, z, w]`, camera-to-world.
    pub orientation: [f64; 4],
}

impl ViewerPose {
    /// Applies the pose to `base`, keeping its projection and viewport.
    pub fn to_camera(&self, base: &Camera) -> Camera {
        let [x, y, z, w] = self.orientation;
        Camera {
            position: Point3::from(self.position),
            orientation: UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
            ..*base
        }
    }

    pub fn from_camera(seq: u64, cam: &Camera) -> Self {
        let q = cam.orientation.quaternion();
        Self { seq, position: [cam.position.x, cam.position.y, cam.position.z], orientation: [q.i, q.j, q.k, q.w] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hud {
    pub fps: f64,
    pub mode: String,
    pub vdi_age_ms: f64,
    pub deviation_deg: f64,
    #[serde(default)]
    pub new_vdi: bool,
}

pub fn mode_byte(m: FrameMode) -> u8 {
    match m {
        FrameMode::Full => 0,
        FrameMode::Preview => 1,
    }
}

pub fn encode_image_message(img: &Image, mode: FrameMode) -> Vec<u8> {
    let png = img.encode_png().expect("in-memory PNG encoding");
    let mut out = Vec::with_capacity(9 + png.len());
    out.extend_from_slice(&img.width.to_le_bytes());
    out.extend_from_slice(&img.height.to_le_bytes());
    out.push(mode_byte(mode));
    out.extend_from_slice(&png);
    out
}

/// Splits an image message into `(width, height, mode byte, png bytes)`.
pub fn decode_image_message(msg: &[u8]) -> Option<(u32, u32, u8, &[u8])> {
    if msg.len() < 9 {
        return None;
    }
    let w = u32::from_le_bytes(msg[0..4].try_into().ok()?);
    let h = u32::from_le_bytes(msg[4..8].try_into().ok()?);
    Some((w, h, msg[8], &msg[9..]))
}

enum Outbound {
    Hud(String),
}

/// Runs the HTTP / web-socket endpoint on its own thread.
pub struct ViewerBridge {
    addr: SocketAddr,
    poses: Arc<Latest<ViewerPose>>,
    frame: Arc<Latest<Vec<u8>>>,
    hud_tx: Mutex<Sender<Outbound>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl ViewerBridge {
    pub fn bind(addr: impl std::net::ToSocketAddrs) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let poses = Arc::new(Latest::new());
        let frame = Arc::new(Latest::new());
        let stop = Arc::new(AtomicBool::new(false));
        let (hud_tx, hud_rx) = mpsc::channel();
        let handle = {
            let (poses, frame, stop) = (poses.clone(), frame.clone(), stop.clone());
            thread::Builder::new()
                .name("viewer-bridge".into())
                .spawn(move || accept_loop(listener, poses, frame, hud_rx, stop))?
        };
        Ok(Self { addr, poses, frame, hud_tx: Mutex::new(hud_tx), stop, handle: Some(handle) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Newest pose received since the last call.
    pub fn take_pose(&self) -> Option<ViewerPose> {
        self.poses.try_take()
    }

    /// Queues a frame; an unsent older frame is dropped.
    pub fn push_frame(&self, img: &Image, mode: FrameMode) {
        self.frame.put(encode_image_message(img, mode));
    }

    /// HUD updates are never dropped.
    pub fn push_hud(&self, hud: &Hud) {
        let json = serde_json::to_string(hud).expect("HUD serializes");
        let _ = self.hud_tx.lock().unwrap().send(Outbound::Hud(json));
    }
}

impl Drop for ViewerBridge {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    poses: Arc<Latest<ViewerPose>>,
    frame: Arc<Latest<Vec<u8>>>,
    hud_rx: Receiver<Outbound>,
    stop: Arc<AtomicBool>,
) {
    // One viewer at a time; a new connection replaces the old one.
    let mut ws: Option<WebSocket<TcpStream>> = None;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => match handle_http(stream) {
                Ok(Some(sock)) => ws = Some(sock),
                Ok(None) => {}
                Err(e) => log::warn!("viewer connection failed: {e}"),
            },
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {}
            Err(e) => log::warn!("viewer accept failed: {e}"),
        }
        let Some(sock) = ws.as_mut() else {
            // Nobody listening: drain HUD updates so they do not pile up.
            while hud_rx.try_recv().is_ok() {}
            thread::sleep(Duration::from_millis(5));
            continue;
        };
        if pump(sock, &poses, &frame, &hud_rx).is_err() {
            log::info!("viewer disconnected");
            ws = None;
        }
    }
}

fn pump(
    sock: &mut WebSocket<TcpStream>,
    poses: &Latest<ViewerPose>,
    frame: &Latest<Vec<u8>>,
    hud_rx: &Receiver<Outbound>,
) -> Result<(), tungstenite::Error> {
    loop {
        match sock.read() {
            Ok(Message::Text(t)) => match serde_json::from_str::<ViewerPose>(t.as_str()) {
                Ok(p) => {
                    poses.put(p);
                }
                Err(e) => log::warn!("bad pose message: {e}"),
            },
            Ok(Message::Close(_)) => return Err(tungstenite::Error::ConnectionClosed),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => break,
            Err(e) => return Err(e),
        }
    }
    while let Ok(Outbound::Hud(json)) = hud_rx.try_recv() {
        sock.send(Message::text(json))?;
    }
    if let Some(bytes) = frame.try_take() {
        sock.send(Message::binary(bytes))?;
    }
    match sock.flush() {
        Err(tungstenite::Error::Io(e)) if e.kind() == io::ErrorKind::WouldBlock => Ok(()),
        r => r,
    }
}

/// Serves the page or upgrades to a web socket, depending on the request path.
fn handle_http(mut stream: TcpStream) -> io::Result<Option<WebSocket<TcpStream>>> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(2)))?;
    let mut head = [0u8; 512];
    let n = stream.peek(&mut head)?;
    let line = String::from_utf8_lossy(&head[..n]);
    let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    if path.starts_with("/viewer") {
        let mut sock = tungstenite::accept(stream).map_err(|e| io::Error::other(e.to_string()))?;
        sock.get_mut().set_read_timeout(Some(Duration::from_millis(5)))?;
        return Ok(Some(sock));
    }
    // Consume the request before answering.
    let mut buf = [0u8; 4096];
    let _ = stream.read(&mut buf);
    let (status, body, ctype) = if path == "/" || path.starts_with("/index") {
        ("200 OK", INDEX_HTML, "text/html; charset=utf-8")
    } else {
        ("404 Not Found", "not found", "text/plain")
    };
    write!(stream, "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len())?;
    Ok(None)
}
