//! Deterministic synthetic volumes used by tests, benches and the CLI.
//!
//! All presets are `u16` cubes spanning a unit box centered at the origin.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::volume::{TransferFunction, Volume, VoxelType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Concentric constant-valued shells, brightest at the center.
    Sphere,
    /// Slabs stacked along z with no empty gaps between them.
    Bands,
    /// Randomly placed solid cylinders.
    Engineoid,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sphere" => Ok(Preset::Sphere),
            "bands" => Ok(Preset::Bands),
            "engineoid" => Ok(Preset::Engineoid),
            _ => Err(format!("unknown preset {s:?} (sphere|bands|engineoid)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Sphere => "sphere",
            Preset::Bands => "bands",
            Preset::Engineoid => "engineoid",
        })
    }
}

pub const SPHERE_SHELLS: u32 = 16;
pub const SPHERE_RADIUS: f64 = 0.45;
pub const BANDS: u32 = 24;

/// Level of shell containing normalized radius `r / R`; 0 outside the sphere.
pub fn sphere_value(rel: f64) -> u16 {
    if rel > 1.0 {
        return 0;
    }
    let k = ((1.0 - rel) * SPHERE_SHELLS as f64).floor() as u32 + 1;
    let k = k.min(SPHERE_SHELLS);
    ((k as f64 / SPHERE_SHELLS as f64) * u16::MAX as f64).round() as u16
}

pub fn synth_volume(preset: Preset, n: usize, seed: u64) -> Volume {
    assert!(n >= 2);
    let sp = 1.0 / (n - 1) as f64;
    let pos = |i: usize| i as f64 * sp - 0.5;
    match preset {
        Preset::Sphere => Volume::from_fn([n; 3], [sp; 3], VoxelType::U16, |x, y, z| {
            let r = (pos(x).powi(2) + pos(y).powi(2) + pos(z).powi(2)).sqrt();
            sphere_value(r / SPHERE_RADIUS)
        }),
        Preset::Bands => Volume::from_fn([n; 3], [sp; 3], VoxelType::U16, |_, _, z| {
            let b = ((z as f64 / n as f64) * BANDS as f64).floor() as u32;
            // Alternate between low and high levels so neighboring bands differ strongly.
            let level = if b % 2 == 0 { 1 + b / 2 } else { BANDS - b / 2 };
            ((level as f64 / BANDS as f64) * u16::MAX as f64).round() as u16
        }),
        Preset::Engineoid => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cyl: Vec<([f64; 3], [f64; 3], f64, f64, u16)> = (0..12)
                .map(|_| {
                    let c = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
                    let mut a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0f64)];
                    let norm = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt().max(1e-9);
                    a = a.map(|v| v / norm);
                    let radius = rng.gen_range(0.04..0.12);
                    let half_len = rng.gen_range(0.1..0.35);
                    let value = rng.gen_range(0.2..1.0f64);
                    (c, a, radius, half_len, (value * u16::MAX as f64) as u16)
                })
                .collect();
            Volume::from_fn([n; 3], [sp; 3], VoxelType::U16, move |x, y, z| {
                let p = [pos(x), pos(y), pos(z)];
                let mut v = 0u16;
                for (c, a, radius, half_len, value) in &cyl {
                    let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                    let along = d[0] * a[0] + d[1] * a[1] + d[2] * a[2];
                    let perp2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] - along * along;
                    if along.abs() <= *half_len && perp2 <= radius * radius {
                        v = v.max(*value);
                    }
                }
                v
            })
        }
    }
    .expect("synthetic volume is valid")
}

/// Transfer function that gives each preset level a distinct, semi-transparent color.
pub fn default_tf(preset: Preset) -> TransferFunction {
    let points = match preset {
        Preset::Sphere | Preset::Engineoid => vec![
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [0.1, 0.1, 0.2, 0.8, 0.01],
            [0.35, 0.1, 0.8, 0.3, 0.02],
            [0.6, 0.9, 0.8, 0.1, 0.03],
            [0.85, 1.0, 0.4, 0.1, 0.05],
            [1.0, 1.0, 0.1, 0.3, 0.08],
        ],
        Preset::Bands => vec![
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [0.1, 0.2, 0.3, 0.9, 0.004],
            [0.4, 0.1, 0.9, 0.4, 0.008],
            [0.7, 0.9, 0.7, 0.1, 0.012],
            [1.0, 1.0, 0.2, 0.1, 0.02],
        ],
    };
    TransferFunction::new(points, 1024).expect("built-in transfer function is valid")
}
