use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use vdi::format::{decode_vdi, encode_vdi};
use vdi::{psnr, Image};

fn vdi_cmd() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vdi"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    vdi_cmd().args(args).output().expect("spawn vdi")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic volume and transfer function in `dir`; returns (volume json, tf json).
fn synth(dir: &Path, preset: &str, dims: u32) -> (PathBuf, PathBuf) {
    let raw = dir.join(format!("{preset}.raw"));
    let tf = dir.join(format!("{preset}.tf.json"));
    ok(&["synth", "--preset", preset, "--dims", &dims.to_string(), "--out", s(&raw), "--tf-out", s(&tf)]);
    (raw.with_extension("json"), tf)
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column<'a>(header: &[String], rows: &'a [Vec<String>], name: &str) -> Vec<&'a str> {
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].as_str()).collect()
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run_once = |name: &str, seed: &str| {
        let raw = dir.path().join(name);
        ok(&["synth", "--preset", "engineoid", "--dims", "24", "--seed", seed, "--out", s(&raw)]);
        (std::fs::read(&raw).unwrap(), std::fs::read(raw.with_extension("json")).unwrap())
    };
    let a = run_once("a.raw", "7");
    let b = run_once("b.raw", "7");
    let c = run_once("c.raw", "8");
    assert_eq!(a.0, b.0);
    assert_eq!(a.0.len(), 24 * 24 * 24 * 2);
    assert_ne!(a.0, c.0);
    let meta: serde_json::Value = serde_json::from_slice(&a.1).unwrap();
    assert_eq!(meta["dims"], serde_json::json!([24, 24, 24]));
    assert_eq!(meta["voxel_type"], "u16");
}

#[test]
fn generation_is_reproducible_and_identity_render_matches_dvr() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (vol, tf) = synth(d, "sphere", 40);
    let gen = |out: &Path| {
        ok(&["generate", "--volume", s(&vol), "--tf", s(&tf), "--viewport", "48x48", "--n-sg", "16", "--out", s(out)])
    };
    let report = gen(&d.join("a.vdi"));
    gen(&d.join("b.vdi"));
    assert!(report.contains("passes mean / max"), "{report}");
    assert_eq!(std::fs::read(d.join("a.vdi")).unwrap(), std::fs::read(d.join("b.vdi")).unwrap());

    ok(&["render", "--vdi", s(&d.join("a.vdi")), "--out", s(&d.join("vdi.png"))]);
    ok(&["dvr", "--volume", s(&vol), "--tf", s(&tf), "--viewport", "48x48", "--out", s(&d.join("dvr.png"))]);
    let a = Image::read_png(d.join("vdi.png")).unwrap();
    let b = Image::read_png(d.join("dvr.png")).unwrap();
    let p = psnr(&a, &b).unwrap();
    assert!(p > 45.0, "PSNR {p}");

    // In float precision the identity view is essentially exact.
    let csv = d.join("id.csv");
    ok(&["bench", "--volume", s(&vol), "--tf", s(&tf), "--viewport", "48x48", "--n-sg", "16", "--angles", "0", "--out", s(&csv)]);
    let (h, rows) = read_csv(&csv);
    let p: f64 = column(&h, &rows, "psnr")[0].parse().unwrap();
    assert!(p > 100.0, "PSNR {p}");
}

#[test]
fn bench_sweep_visits_more_lists_as_the_view_turns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (vol, tf) = synth(d, "sphere", 40);
    let csv = d.join("bench.csv");
    let stdout = ok(&[
        "bench", "--volume", s(&vol), "--tf", s(&tf), "--viewport", "48x48", "--n-sg", "12", "--d-i", "0.5", "--d-r", "0.05",
        "--out", s(&csv),
    ]);
    assert!(stdout.contains("wrote"));
    let (h, rows) = read_csv(&csv);
    assert_eq!(
        h,
        [
            "frame", "angle_deg", "mode", "d_i", "d_r", "frame_ms", "dvr_ms", "ssim", "psnr", "lists_visited",
            "supersegments_intersected", "search_reads", "cells_skipped", "samples"
        ]
    );
    let full: Vec<Vec<String>> = rows.iter().filter(|r| r[2] == "full").cloned().collect();
    let angles: Vec<f64> = column(&h, &full, "angle_deg").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(angles, [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]);
    let lists: Vec<u64> = column(&h, &full, "lists_visited").iter().map(|v| v.parse().unwrap()).collect();
    assert!(lists.windows(2).all(|w| w[1] > w[0]), "{lists:?}");
    assert_eq!(rows.len(), 16);
    for r in rows.iter().filter(|r| r[2] == "preview") {
        assert_eq!((r[3].as_str(), r[4].as_str()), ("0.5", "0.05"));
        assert!(r[13].parse::<u64>().unwrap() > 0);
    }
}

#[test]
fn render_stats_follow_the_controller() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (vol, tf) = synth(d, "sphere", 32);
    let v = d.join("s.vdi");
    ok(&["generate", "--volume", s(&vol), "--tf", s(&tf), "--viewport", "40x32", "--n-sg", "8", "--out", s(&v)]);

    let stats = d.join("pi.csv");
    // An unreachable frame rate drives d_i down every frame.
    ok(&["render", "--vdi", s(&v), "--target-fps", "1000000", "--frames", "4", "--out", s(&d.join("p.png")), "--stats", s(&stats)]);
    let (h, rows) = read_csv(&stats);
    assert_eq!(rows.len(), 4);
    assert!(column(&h, &rows, "mode").iter().all(|m| *m == "preview"));
    let d_i: Vec<f64> = column(&h, &rows, "d_i").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(d_i[0], 1.0);
    assert!(d_i.windows(2).all(|w| w[1] <= w[0]) && d_i[3] < 1.0 && d_i[3] >= 0.1, "{d_i:?}");
    assert_eq!(Image::read_png(d.join("p.png")).unwrap().dims(), (40, 32));

    let fixed = d.join("fixed.csv");
    ok(&["render", "--vdi", s(&v), "--target-fps", "1000000", "--d-i", "0.5", "--frames", "3", "--out", s(&d.join("f.png")), "--stats", s(&fixed)]);
    let (h, rows) = read_csv(&fixed);
    assert!(column(&h, &rows, "d_i").iter().all(|v| *v == "0.5"));

    let full = d.join("full.csv");
    ok(&["render", "--vdi", s(&v), "--ess", "off", "--out", s(&d.join("n.png")), "--stats", s(&full)]);
    let (h, rows) = read_csv(&full);
    assert_eq!(column(&h, &rows, "mode"), ["full"]);
    assert_eq!(column(&h, &rows, "ess"), ["false"]);
    assert_eq!(column(&h, &rows, "cells_skipped"), ["0"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| run(args).status.code().unwrap();

    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["synth", "--preset", "cube", "--out", "x.raw"]), 2);
    assert_eq!(code(&["render", "--vdi", "x.vdi", "--viewport", "0x3", "--out", "x.png"]), 2);

    let (vol, tf) = synth(d, "sphere", 24);
    let v = d.join("s.vdi");
    ok(&["generate", "--volume", s(&vol), "--tf", s(&tf), "--viewport", "16x16", "--n-sg", "4", "--out", s(&v)]);
    let png = d.join("o.png");
    assert_eq!(code(&["render", "--vdi", s(&v), "--d-i", "2", "--out", s(&png)]), 2);
    assert_eq!(code(&["client", "--connect", "127.0.0.1:1"]), 2);

    assert_eq!(code(&["render", "--vdi", s(&d.join("missing.vdi")), "--out", s(&png)]), 3);
    assert_eq!(code(&["dvr", "--volume", s(&d.join("missing.json")), "--tf", s(&tf), "--out", s(&png)]), 3);
    let junk = d.join("junk.vdi");
    std::fs::write(&junk, b"NOPE and then some").unwrap();
    assert_eq!(code(&["render", "--vdi", s(&junk), "--out", s(&png)]), 3);
    let bytes = std::fs::read(&v).unwrap();
    let cut = d.join("cut.vdi");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&["render", "--vdi", s(&cut), "--out", s(&png)]), 3);

    // A list whose first supersegment is inverted decodes as an invariant violation.
    let (mut vdi, grid) = decode_vdi(&bytes).unwrap();
    let i = (0..vdi.num_lists()).find(|&i| vdi.counts[i] > 0).unwrap();
    let mut segs = vdi.list(i).to_vec();
    let s0 = &mut segs[0];
    std::mem::swap(&mut s0.front, &mut s0.back);
    vdi.set_list(i, &segs);
    let bad = d.join("bad.vdi");
    std::fs::write(&bad, encode_vdi(&vdi, &grid)).unwrap();
    assert_eq!(code(&["render", "--vdi", s(&bad), "--out", s(&png)]), 4);

    assert_eq!(code(&["render", "--vdi", s(&v), "--out", s(&png)]), 0);
}

#[test]
fn headless_client_against_server() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (vol, tf) = synth(d, "sphere", 24);
    let mut server = vdi_cmd()
        .args(["serve", "--listen", "127.0.0.1:0", "--volume", s(&vol), "--tf", s(&tf)])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected: {line}")).to_string();

    let frames = d.join("frames");
    let out = run(&[
        "client", "--connect", &addr, "--headless", "--frames", "3", "--orbit-step", "10", "--viewport", "32x24", "--n-sg", "6",
        "--out-dir", s(&frames), "--timeout", "60",
    ]);
    server.kill().unwrap();
    let _ = server.wait();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (h, rows) = read_csv(&frames.join("frames.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(column(&h, &rows, "pose_seq"), column(&h, &rows, "gen_pose_seq"));
    assert!(column(&h, &rows, "swapped").iter().all(|v| *v == "true"));
    assert!(column(&h, &rows, "mode").iter().all(|v| *v == "full"));
    for k in 0..3 {
        let img = Image::read_png(frames.join(format!("frame_{k:04}.png"))).unwrap();
        assert_eq!(img.dims(), (32, 24));
    }
}
