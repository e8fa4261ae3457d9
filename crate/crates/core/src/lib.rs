//! Volumetric Depth Images: generation from raw volumes, NDC-grid raycasting
//! from novel viewpoints, preview subsampling, and reference rendering/metrics.
//!
//! Heavy per-pixel loops run on rayon when the `parallel` feature is enabled
//! (the default) and sequentially otherwise; results are identical.

pub mod camera;
pub mod control;
pub mod dvr;
pub mod format;
pub mod generate;
pub mod image;
pub mod metrics;
pub mod par;
pub mod preview;
pub mod raycast;
pub mod synth;
pub mod vdi;
pub mod volume;

pub use camera::{clip_ray, Aabb, Camera, Projector, Ray};
pub use dvr::{render_dvr, DvrParams};
pub use format::{decode_vdi, encode_vdi, FormatError};
pub use generate::{generate_vdi, GenParams, GenStats};
pub use image::Image;
pub use metrics::{psnr, ssim};
pub use control::{Action, FrameMode, ModeSelector, PiController};
pub use preview::{render_preview, PreviewParams};
pub use raycast::{render_vdi, RenderOptions, RenderStats};
pub use vdi::{AccelGrid, Supersegment, SupersegmentList, Vdi};
pub use volume::{TransferFunction, Volume};
