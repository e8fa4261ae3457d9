//! Rayon pool against a single-thread pool for the per-pixel stages.
//!
//! Built with `--no-default-features` only the sequential loops exist, and
//! every group reports a single `sequential` entry.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{Point3, Vector3};
use vdi::generate::{generate_vdi, GenOutput, GenParams};
use vdi::synth::{default_tf, synth_volume, Preset};
use vdi::{render_dvr, render_preview, render_vdi, Camera, DvrParams, PreviewParams, RenderOptions, TransferFunction, Volume};

const VIEWPORT: (u32, u32) = (160, 160);

struct Scene {
    vol: Volume,
    tf: TransferFunction,
    cam: Camera,
    out: GenOutput,
}

fn scene() -> Scene {
    let vol = synth_volume(Preset::Sphere, 64, 0);
    let tf = default_tf(Preset::Sphere);
    let cam = Camera::framing(&vol.aabb(), 2.2, 0.7, VIEWPORT);
    let out = generate_vdi(&vol, &tf, &cam, &GenParams::with_n_sg(12));
    Scene { vol, tf, cam, out }
}

/// Execution modes to compare: a one-thread pool and the default pool.
#[cfg(feature = "parallel")]
fn modes() -> Vec<(&'static str, rayon::ThreadPool)> {
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    vec![("sequential", pool(1)), ("parallel", pool(0))]
}

#[cfg(feature = "parallel")]
fn run<R: Send>(mode: &rayon::ThreadPool, f: impl FnOnce() -> R + Send) -> R {
    mode.install(f)
}

#[cfg(not(feature = "parallel"))]
fn modes() -> Vec<(&'static str, ())> {
    vec![("sequential", ())]
}

#[cfg(not(feature = "parallel"))]
fn run<R>(_: &(), f: impl FnOnce() -> R) -> R {
    f()
}

fn bench_stages(c: &mut Criterion) {
    let s = scene();
    let view = s.cam.orbit(&Point3::origin(), &Vector3::y(), 15f64.to_radians());
    let opts = RenderOptions::default();

    let mut g = c.benchmark_group("render_vdi");
    g.sample_size(20);
    for (name, mode) in modes() {
        g.bench_function(BenchmarkId::new("ess", name), |b| {
            b.iter(|| run(&mode, || black_box(render_vdi(&s.out.vdi, &s.out.grid, &view, &opts))))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("generate");
    g.sample_size(10);
    let params = GenParams::with_n_sg(12);
    for (name, mode) in modes() {
        g.bench_function(name, |b| b.iter(|| run(&mode, || black_box(generate_vdi(&s.vol, &s.tf, &s.cam, &params)))));
    }
    g.finish();

    let mut g = c.benchmark_group("preview");
    g.sample_size(20);
    let pp = PreviewParams::new(0.5, 1.0, VIEWPORT);
    for (name, mode) in modes() {
        g.bench_function(BenchmarkId::new("d_i=0.5", name), |b| {
            b.iter(|| run(&mode, || black_box(render_preview(&s.out.vdi, &s.out.grid, &view, &pp, &opts))))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("dvr");
    g.sample_size(10);
    for (name, mode) in modes() {
        g.bench_function(name, |b| b.iter(|| run(&mode, || black_box(render_dvr(&s.vol, &s.tf, &view, &DvrParams::default())))));
    }
    g.finish();
}

criterion_group!(benches, bench_stages);
criterion_main!(benches);
