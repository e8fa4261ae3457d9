use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use tungstenite::Message;
use vdi::control::FrameMode;
use vdi::Image;
use vdi_stream::viewer::{decode_image_message, Hud, ViewerBridge, ViewerPose};

fn wait_for<T>(mut f: impl FnMut() -> Option<T>) -> T {
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        if let Some(v) = f() {
            return v;
        }
        assert!(Instant::now() < deadline, "timed out");
        std::thread::sleep(Duration::from_millis(5));
    }
}

#[test]
fn serves_index_page() {
    let bridge = ViewerBridge::bind("127.0.0.1:0").unwrap();
    let mut s = TcpStream::connect(bridge.addr()).unwrap();
    s.write_all(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n").unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"));
    assert!(resp.contains("/viewer"));
}

#[test]
fn poses_in_frames_and_hud_out() {
    let bridge = ViewerBridge::bind("127.0.0.1:0").unwrap();
    let (mut ws, _) = tungstenite::connect(format!("ws://{}/viewer", bridge.addr())).unwrap();

    for seq in 1..=3u64 {
        let p = ViewerPose { seq, position: [0.0, 0.0, 2.0 + seq as f64], orientation: [0.0, 0.0, 0.0, 1.0] };
        ws.send(Message::text(serde_json::to_string(&p).unwrap())).unwrap();
    }
    // Coalesced: only the newest is guaranteed to be seen.
    let last = wait_for(|| bridge.take_pose().filter(|p| p.seq == 3));
    assert_eq!(last.position[2], 5.0);

    let hud = Hud { fps: 30.0, mode: "preview".into(), vdi_age_ms: 12.0, deviation_deg: 4.0, new_vdi: true };
    bridge.push_hud(&hud);
    bridge.push_frame(&Image::new(4, 3, [1.0, 0.0, 0.0, 1.0]), FrameMode::Preview);

    let mut got_hud = None;
    let mut got_frame = None;
    while got_hud.is_none() || got_frame.is_none() {
        match ws.read().unwrap() {
            Message::Text(t) => got_hud = Some(serde_json::from_str::<Hud>(t.as_str()).unwrap()),
            Message::Binary(b) => {
                let (w, h, mode, png) = decode_image_message(&b).unwrap();
                got_frame = Some((w, h, mode, png.len()));
            }
            _ => {}
        }
    }
    assert_eq!(got_hud.unwrap(), hud);
    let (w, h, mode, n) = got_frame.unwrap();
    assert_eq!((w, h, mode), (4, 3, 1));
    assert!(n > 8);
}
