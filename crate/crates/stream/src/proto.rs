//! Wire format.
//!
//! Every frame is `u32 payload length | u8 tag | payload`, little-endian.
//!
//! | tag | payload |
//! |-----|---------|
//! | 1   | pose: `u64 seq, u64 timestamp_ms, 10 x f64 camera block` |
//! | 2   | vdi: `u64 seq, u64 gen_pose_seq, u64 uncompressed_len, LZ4 block` |
//! | 3   | control: UTF-8 JSON |

use std::io::{self, Read, Write};

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use vdi::camera::Camera;
use vdi::format::{decode_vdi, encode_vdi, FormatError};
use vdi::{AccelGrid, Vdi};

pub const TAG_POSE: u8 = 1;
pub const TAG_VDI: u8 = 2;
pub const TAG_CONTROL: u8 = 3;
pub const FRAME_HEADER_LEN: usize = 5;
pub const POSE_LEN: usize = 8 + 8 + 10 * 8;
/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_LEN: u32 = 1 << 30;

#[derive(Debug, Error)]
pub enum ProtoError {
    #[error("truncated frame")]
    TruncatedFrame,
    #[error("unknown frame type {0}")]
    UnknownType(u8),
    #[error("frame of {0} bytes exceeds the limit")]
    Oversized(u32),
    #[error("decompression failed: {0}")]
    DecompressFailure(String),
    #[error("malformed control message: {0}")]
    Control(#[from] serde_json::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for ProtoError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ProtoError::TruncatedFrame
        } else {
            ProtoError::Io(e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMsg {
    pub seq: u64,
    pub timestamp_ms: u64,
    /// Camera block as produced by [`Camera::to_block`].
    pub camera: [f64; 10],
}

impl PoseMsg {
    pub fn new(seq: u64, timestamp_ms: u64, cam: &Camera) -> Self {
        Self { seq, timestamp_ms, camera: cam.to_block() }
    }

    pub fn to_camera(&self, viewport: (u32, u32)) -> Camera {
        Camera::from_block(&self.camera, viewport)
    }

    /// Bitwise comparison of the camera blocks.
    pub fn same_pose(&self, other: &PoseMsg) -> bool {
        self.camera.iter().zip(&other.camera).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VdiPacket {
    pub seq: u64,
    pub gen_pose_seq: u64,
    pub uncompressed_len: u64,
    pub body: Vec<u8>,
}

impl VdiPacket {
    /// Compresses VDI file bytes.
    pub fn compress(seq: u64, gen_pose_seq: u64, file_bytes: &[u8]) -> Self {
        Self {
            seq,
            gen_pose_seq,
            uncompressed_len: file_bytes.len() as u64,
            body: lz4_flex::block::compress(file_bytes),
        }
    }

    pub fn from_vdi(seq: u64, gen_pose_seq: u64, vdi: &Vdi, grid: &AccelGrid) -> Self {
        Self::compress(seq, gen_pose_seq, &encode_vdi(vdi, grid))
    }

    /// Recovers the VDI file bytes, checking the stored length.
    pub fn decompress(&self) -> Result<Vec<u8>, ProtoError> {
        let n = usize::try_from(self.uncompressed_len)
            .ok()
            .filter(|&n| n <= MAX_FRAME_LEN as usize * 4)
            .ok_or_else(|| ProtoError::DecompressFailure(format!("implausible length {}", self.uncompressed_len)))?;
        let out = lz4_flex::block::decompress(&self.body, n).map_err(|e| ProtoError::DecompressFailure(e.to_string()))?;
        if out.len() != n {
            return Err(ProtoError::DecompressFailure(format!("expected {n} bytes, got {}", out.len())));
        }
        Ok(out)
    }

    pub fn decode(&self) -> Result<(Vdi, AccelGrid), ProtoError> {
        Ok(decode_vdi(&self.decompress()?)?)
    }

    pub fn ratio(&self) -> f64 {
        self.uncompressed_len as f64 / self.body.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlMsg {
    Handshake { viewport: [u32; 2], n_sg: u32 },
    DataChanged,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Pose(PoseMsg),
    Vdi(VdiPacket),
    Control(ControlMsg),
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    let mut out = [0u8; 32];
    out.copy_from_slice(&Sha256::digest(bytes));
    out
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_pose(p: &PoseMsg) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + POSE_LEN);
    out.write_u32::<LE>(POSE_LEN as u32).unwrap();
    out.push(TAG_POSE);
    out.write_u64::<LE>(p.seq).unwrap();
    out.write_u64::<LE>(p.timestamp_ms).unwrap();
    for v in p.camera {
        out.write_f64::<LE>(v).unwrap();
    }
    out
}

pub fn encode_vdi_packet(p: &VdiPacket) -> Vec<u8> {
    let len = 24 + p.body.len();
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + len);
    out.write_u32::<LE>(len as u32).unwrap();
    out.push(TAG_VDI);
    out.write_u64::<LE>(p.seq).unwrap();
    out.write_u64::<LE>(p.gen_pose_seq).unwrap();
    out.write_u64::<LE>(p.uncompressed_len).unwrap();
    out.extend_from_slice(&p.body);
    out
}

pub fn encode_control(c: &ControlMsg) -> Vec<u8> {
    let json = serde_json::to_vec(c).expect("control messages serialize");
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + json.len());
    out.write_u32::<LE>(json.len() as u32).unwrap();
    out.push(TAG_CONTROL);
    out.extend_from_slice(&json);
    out
}

pub fn encode_frame(f: &Frame) -> Vec<u8> {
    match f {
        Frame::Pose(p) => encode_pose(p),
        Frame::Vdi(p) => encode_vdi_packet(p),
        Frame::Control(c) => encode_control(c),
    }
}

fn decode_payload(tag: u8, mut payload: &[u8]) -> Result<Frame, ProtoError> {
    match tag {
        TAG_POSE => {
            if payload.len() != POSE_LEN {
                return Err(ProtoError::TruncatedFrame);
            }
            let seq = payload.read_u64::<LE>()?;
            let timestamp_ms = payload.read_u64::<LE>()?;
            let mut camera = [0.0; 10];
            payload.read_f64_into::<LE>(&mut camera)?;
            Ok(Frame::Pose(PoseMsg { seq, timestamp_ms, camera }))
        }
        TAG_VDI => {
            let seq = payload.read_u64::<LE>()?;
            let gen_pose_seq = payload.read_u64::<LE>()?;
            let uncompressed_len = payload.read_u64::<LE>()?;
            Ok(Frame::Vdi(VdiPacket { seq, gen_pose_seq, uncompressed_len, body: payload.to_vec() }))
        }
        TAG_CONTROL => Ok(Frame::Control(serde_json::from_slice(payload)?)),
        t => Err(ProtoError::UnknownType(t)),
    }
}

/// Decodes one frame from the front of `bytes`, returning it and the bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, usize), ProtoError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(ProtoError::TruncatedFrame);
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap());
    if len > MAX_FRAME_LEN {
        return Err(ProtoError::Oversized(len));
    }
    let end = FRAME_HEADER_LEN + len as usize;
    if bytes.len() < end {
        return Err(ProtoError::TruncatedFrame);
    }
    Ok((decode_payload(bytes[4], &bytes[FRAME_HEADER_LEN..end])?, end))
}

pub fn write_frame<W: Write>(w: &mut W, f: &Frame) -> io::Result<()> {
    w.write_all(&encode_frame(f))?;
    w.flush()
}

/// Blocking read of one frame. `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, ProtoError> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    let mut got = 0;
    while got < FRAME_HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ProtoError::TruncatedFrame),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(header[..4].try_into().unwrap());
    if len > MAX_FRAME_LEN {
        return Err(ProtoError::Oversized(len));
    }
    if !matches!(header[4], TAG_POSE | TAG_VDI | TAG_CONTROL) {
        return Err(ProtoError::UnknownType(header[4]));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    decode_payload(header[4], &payload).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose() -> PoseMsg {
        PoseMsg { seq: 7, timestamp_ms: 123_456, camera: [0.1, -2.0, 3.5, 0.0, 0.0, 0.0, 1.0, 0.7, 0.1, 17.0] }
    }

    #[test]
    fn pose_round_trip() {
        let bytes = encode_pose(&pose());
        assert_eq!(bytes.len(), FRAME_HEADER_LEN + POSE_LEN);
        let (f, used) = decode_frame(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(f, Frame::Pose(pose()));
    }

    #[test]
    fn control_round_trip() {
        for c in [ControlMsg::Handshake { viewport: [64, 32], n_sg: 12 }, ControlMsg::DataChanged] {
            let (f, _) = decode_frame(&encode_control(&c)).unwrap();
            assert_eq!(f, Frame::Control(c));
        }
        let json = String::from_utf8(encode_control(&ControlMsg::Handshake { viewport: [1, 2], n_sg: 3 })[5..].to_vec()).unwrap();
        assert!(json.contains("\"viewport\":[1,2]"), "{json}");
    }

    #[test]
    fn truncation_and_unknown_tag() {
        let bytes = encode_pose(&pose());
        for cut in 0..bytes.len() {
            assert!(matches!(decode_frame(&bytes[..cut]), Err(ProtoError::TruncatedFrame)));
            assert!(matches!(read_frame(&mut &bytes[..cut]), Ok(None) | Err(ProtoError::TruncatedFrame)));
        }
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_frame(&bad), Err(ProtoError::UnknownType(9))));
        assert!(matches!(read_frame(&mut bad.as_slice()), Err(ProtoError::UnknownType(9))));
    }

    #[test]
    fn packet_decompress_checks_length() {
        let data: Vec<u8> = (0..5000u32).map(|i| (i % 7) as u8).collect();
        let mut p = VdiPacket::compress(1, 2, &data);
        assert_eq!(p.decompress().unwrap(), data);
        assert!(p.ratio() > 1.5);
        p.uncompressed_len += 1;
        assert!(matches!(p.decompress(), Err(ProtoError::DecompressFailure(_))));
        p.uncompressed_len -= 1;
        p.body.truncate(p.body.len() / 2);
        assert!(matches!(p.decompress(), Err(ProtoError::DecompressFailure(_))));
    }

    #[test]
    fn stream_of_frames() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &Frame::Pose(pose())).unwrap();
        write_frame(&mut buf, &Frame::Control(ControlMsg::DataChanged)).unwrap();
        let mut r = buf.as_slice();
        assert_eq!(read_frame(&mut r).unwrap(), Some(Frame::Pose(pose())));
        assert_eq!(read_frame(&mut r).unwrap(), Some(Frame::Control(ControlMsg::DataChanged)));
        assert_eq!(read_frame(&mut r).unwrap(), None);
    }

    #[test]
    fn sha_hex() {
        assert_eq!(hex(&sha256(b"abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
