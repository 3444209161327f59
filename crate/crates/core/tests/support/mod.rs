//! Test helpers shared by the integration targets.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    pub fn content(text: &str) -> Self {
        Reply {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        Reply { status, body: json!({"error": "injected"}).to_string(), delay: Duration::ZERO }
    }

    pub fn after(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

type Handler = dyn Fn(&Value, usize) -> Reply + Send + Sync;

/// Minimal chat-completions server. Counts requests and tracks how many
/// are being handled at once.
pub struct StubServer {
    pub base_url: String,
    requests: Arc<AtomicUsize>,
    in_flight: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    addr: String,
}

impl StubServer {
    pub fn start(handler: impl Fn(&Value, usize) -> Reply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let handler: Arc<Handler> = Arc::new(handler);
        let requests = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        {
            let (requests, in_flight, peak, stop) = (requests.clone(), in_flight.clone(), peak.clone(), stop.clone());
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let (handler, requests, in_flight, peak) =
                        (handler.clone(), requests.clone(), in_flight.clone(), peak.clone());
                    thread::spawn(move || serve(stream, &*handler, &requests, &in_flight, &peak));
                }
            });
        }
        StubServer { base_url: format!("http://{addr}/v1"), requests, in_flight, peak, stop, addr }
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(&self.addr);
    }
}

fn serve(stream: TcpStream, handler: &Handler, requests: &AtomicUsize, in_flight: &AtomicUsize, peak: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let n = requests.fetch_add(1, Ordering::SeqCst);
    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    peak.fetch_max(now, Ordering::SeqCst);
    let value: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let reply = handler(&value, n);
    thread::sleep(reply.delay);
    in_flight.fetch_sub(1, Ordering::SeqCst);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    );
    let _ = stream.flush();
}

/// Text of the last user part in a chat-completions body.
pub fn user_text(body: &Value) -> String {
    body["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_array())
        .and_then(|parts| parts.iter().rev().find(|p| p["type"] == "text"))
        .and_then(|p| p["text"].as_str())
        .unwrap_or_default()
        .to_string()
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn cli(args: &[&str]) -> i32 {
    online_mmsi::cli::run(std::iter::once("online-mmsi").chain(args.iter().copied()))
}

pub fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

pub mod scenes {
    //! Fixed render inputs whose outputs are frozen under `tests/golden/`.

    use image::RgbImage;
    use online_mmsi::model::{BBox, FrameAnnotation, Keypoint, PersonAnnotation, PlayerId, NUM_KEYPOINTS};
    use online_mmsi::synthetic::SyntheticFrames;
    use online_mmsi::visual::{assign_colors, compose_grid, render_overlay, OverlayOptions};

    fn person(player: u32, x: f64, y: f64, w: f64, h: f64) -> PersonAnnotation {
        let keypoints = (0..NUM_KEYPOINTS)
            .map(|k| Keypoint {
                x: x + w * (0.2 + 0.6 * ((k * 7) % NUM_KEYPOINTS) as f64 / NUM_KEYPOINTS as f64),
                y: y + h * (0.05 + 0.9 * k as f64 / NUM_KEYPOINTS as f64),
                confidence: if k == 4 { 0.05 } else { 0.9 },
            })
            .collect();
        PersonAnnotation::new(PlayerId(player), BBox { x, y, width: w, height: h }, keypoints).unwrap()
    }

    pub fn annotated_frame() -> (RgbImage, FrameAnnotation) {
        let image = SyntheticFrames { size: (320, 180) }.raster("golden/frame");
        let persons = vec![
            person(0, 12.0, 30.0, 70.0, 120.0),
            person(1, 120.0, 25.0, 64.0, 130.0),
            person(2, 230.0, 40.0, 72.0, 118.0),
        ];
        (image, FrameAnnotation::new(0.0, "golden/frame", persons).unwrap())
    }

    pub fn overlay(opts: OverlayOptions) -> RgbImage {
        let (image, ann) = annotated_frame();
        render_overlay(&image, &ann, &assign_colors(3).unwrap(), &opts).unwrap()
    }

    pub fn grid() -> RgbImage {
        let frames: Vec<RgbImage> = (0..6)
            .map(|i| SyntheticFrames { size: (96, 54) }.raster(&format!("golden/cell{i}")))
            .collect();
        compose_grid(&frames).unwrap()
    }

    /// `(file name, image)` for every golden.
    pub fn all() -> Vec<(&'static str, RgbImage)> {
        vec![
            ("overlay_full.png", overlay(OverlayOptions::new(true, true, true))),
            ("overlay_rect.png", overlay(OverlayOptions::new(false, true, false))),
            ("overlay_text_point.png", overlay(OverlayOptions::new(true, false, true))),
            ("grid6.png", grid()),
        ]
    }

    pub fn png_bytes(img: &RgbImage) -> Vec<u8> {
        let mut out = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png).unwrap();
        out
    }
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}
