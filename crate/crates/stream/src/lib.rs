//! Remote-visualization transport for VDIs: camera poses upstream, LZ4
//! compressed VDI files downstream, a pipelined latest-wins generation server,
//! a double-buffered rendering client and a web-socket bridge to a browser viewer.

pub mod client;
pub mod mailbox;
pub mod proto;
pub mod server;
pub mod viewer;

pub use client::{Client, DoubleBuffer, LoadedVdi, RenderLoop};
pub use mailbox::Latest;
pub use proto::{ControlMsg, Frame, PoseMsg, ProtoError, VdiPacket};
pub use server::{Pipeline, PipelineStats, VdiSource, VolumeSource};
pub use viewer::{Hud, ViewerBridge, ViewerPose};
