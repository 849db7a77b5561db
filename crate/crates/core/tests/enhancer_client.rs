//! HTTP client against an in-process mock of the enhancement service.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;
use sparse360::enhance::{
    decode_image, encode_image, enhance_view, EnhanceSettings, Enhancer, HttpEnhancer, RetryPolicy, Stage,
};
use sparse360::raster::{decode_png, Raster};
use sparse360::render::RenderOutput;
use sparse360::Error;

#[derive(Debug, Clone)]
struct Recorded {
    method: String,
    path: String,
    body: String,
}

/// What the mock answers for the n-th request.
type Script = Box<dyn Fn(usize, &Recorded) -> (u16, String) + Send + Sync>;

struct Mock {
    url: String,
    log: Arc<Mutex<Vec<Recorded>>>,
}

fn read_request(stream: &TcpStream) -> Option<Recorded> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut len = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    Some(Recorded { method, path, body: String::from_utf8(body).ok()? })
}

fn mock(script: Script) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&log);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let Some(req) = read_request(&stream) else { continue };
            let n = {
                let mut l = sink.lock().unwrap();
                l.push(req.clone());
                l.len() - 1
            };
            let (status, body) = script(n, &req);
            let head = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            );
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(body.as_bytes());
        }
    });
    Mock { url, log }
}

fn fast(url: &str) -> HttpEnhancer {
    HttpEnhancer::new(url).with_retry(RetryPolicy { attempts: 3, initial_backoff: Duration::from_millis(5) })
}

/// Echo backend: returns the request's image untouched.
fn echo(_: usize, req: &Recorded) -> (u16, String) {
    let v: Value = serde_json::from_str(&req.body).unwrap();
    (200, serde_json::json!({ "image": v["image"], "backend": "echo" }).to_string())
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// 4x3 gradient image with the left two columns masked.
fn golden_input() -> (Raster<f64>, Raster<f32>, Raster<f64>) {
    let mut img = Raster::new(4, 3, 3);
    let mut alpha = Raster::new(4, 3, 1);
    for y in 0..3 {
        for x in 0..4 {
            img.set(x, y, 0, x as f64 / 3.0);
            img.set(x, y, 1, y as f64 / 2.0);
            img.set(x, y, 2, 0.5);
            alpha.set(x, y, 0, if x < 2 { 0.3 } else { 0.95 });
        }
    }
    let mask = alpha.map(|a: f64| if a <= 0.8 { 1.0f32 } else { 0.0 });
    (img, mask, alpha)
}

fn golden(name: &str, actual: &str) {
    let path = fixture(name);
    if std::env::var_os("SPARSE360_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected.trim_end(), "wire body differs from {}", path.display());
}

fn keys(body: &str) -> Vec<String> {
    // serde_json keeps insertion order only with preserve_order, so scan the text
    let v: Value = serde_json::from_str(body).unwrap();
    let mut found: Vec<(usize, String)> = v
        .as_object()
        .unwrap()
        .keys()
        .map(|k| (body.find(&format!("\"{k}\":")).unwrap(), k.clone()))
        .collect();
    found.sort();
    found.into_iter().map(|(_, k)| k).collect()
}

#[test]
fn golden_request_bodies() {
    let (img, mask, _) = golden_input();
    let s = EnhanceSettings::default();
    let inpaint = s.inpaint_request(img.clone(), mask.clone(), 0, 4).to_json().unwrap();
    let clean = s.clean_request(img, 3, 4).to_json().unwrap();
    golden("inpaint_request.json", &inpaint);
    golden("clean_request.json", &clean);

    assert_eq!(keys(&inpaint), ["image", "mask", "prompt", "steps", "t_min", "t_max"]);
    assert_eq!(keys(&clean), ["image", "prompt", "image_guidance", "text_guidance", "steps", "t_min", "t_max"]);
    let v: Value = serde_json::from_str(&inpaint).unwrap();
    assert_eq!(v["prompt"], "A photo of [V]");
    assert_eq!((v["steps"].as_u64(), v["t_min"].as_f64(), v["t_max"].as_f64()), (Some(20), Some(0.98), Some(0.99)));
    let c: Value = serde_json::from_str(&clean).unwrap();
    assert_eq!((c["image_guidance"].as_f64(), c["text_guidance"].as_f64()), (Some(2.5), Some(7.0)));
    // last of four steps reaches the end of the t_min ramp
    assert!((c["t_min"].as_f64().unwrap() - 0.70).abs() < 1e-12);

    // mask travels as 8-bit grayscale with 255 = in-paint
    use base64::Engine;
    let png = base64::engine::general_purpose::STANDARD.decode(v["mask"].as_str().unwrap()).unwrap();
    let m = decode_png(&png).unwrap();
    assert_eq!(m.channels, 1);
    assert_eq!(m.data, mask.data);
}

#[test]
fn health_and_echo_round_trip() {
    let srv = mock(Box::new(|_, req: &Recorded| {
        if req.path == "/v1/health" {
            (200, r#"{"status":"ok","backend":"echo"}"#.into())
        } else {
            echo(0, req)
        }
    }));
    let client = fast(&srv.url);
    let h = client.health().unwrap();
    assert_eq!((h.status.as_str(), h.backend.as_str()), ("ok", "echo"));

    let (img, mask, _) = golden_input();
    let req = EnhanceSettings::default().inpaint_request(img.clone(), mask, 0, 4);
    let out = client.enhance(&req).unwrap();
    // byte-exact after 8-bit quantization
    assert_eq!(encode_image(&out).unwrap(), encode_image(&img).unwrap());
    let log = srv.log.lock().unwrap();
    assert_eq!(log[1].method, "POST");
    assert_eq!(log[1].path, Stage::Inpaint.path());
    assert_eq!(log[1].body, req.to_json().unwrap());
}

#[test]
fn enhance_view_issues_inpaint_then_clean() {
    let srv = mock(Box::new(echo));
    let (img, _, alpha) = golden_input();
    let render = RenderOutput { color: img.clone(), depth: Raster::new(4, 3, 1), alpha };
    let out = enhance_view(&fast(&srv.url), &render, &EnhanceSettings::default(), 1, 4).unwrap();
    assert_eq!((out.image.width, out.image.height), (4, 3));
    assert!((out.masked_fraction - 0.5).abs() < 1e-12);
    let paths: Vec<String> = srv.log.lock().unwrap().iter().map(|r| r.path.clone()).collect();
    assert_eq!(paths, ["/v1/inpaint", "/v1/clean"]);
}

#[test]
fn server_errors_are_retried() {
    let srv = mock(Box::new(|n, req: &Recorded| if n == 0 { (503, "{}".into()) } else { echo(n, req) }));
    let (img, _, _) = golden_input();
    let req = EnhanceSettings::default().clean_request(img, 0, 1);
    assert!(fast(&srv.url).enhance(&req).is_ok());
    assert_eq!(srv.log.lock().unwrap().len(), 2);
}

#[test]
fn persistent_failure_gives_unavailable() {
    let srv = mock(Box::new(|_, _: &Recorded| (500, "{}".into())));
    let (img, _, _) = golden_input();
    let req = EnhanceSettings::default().clean_request(img, 0, 1);
    let err = fast(&srv.url).enhance(&req).unwrap_err();
    assert!(matches!(err, Error::EnhancerUnavailable(_)), "{err}");
    assert_eq!(srv.log.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let srv = mock(Box::new(|_, _: &Recorded| (400, r#"{"error":"bad"}"#.into())));
    let (img, _, _) = golden_input();
    let req = EnhanceSettings::default().clean_request(img, 0, 1);
    let err = fast(&srv.url).enhance(&req).unwrap_err();
    assert!(matches!(err, Error::ProtocolViolation(_)), "{err}");
    assert_eq!(srv.log.lock().unwrap().len(), 1);
}

#[test]
fn resized_responses_are_rejected() {
    let srv = mock(Box::new(|_, _: &Recorded| {
        let small = encode_image(&Raster::new(2, 2, 3)).unwrap();
        (200, serde_json::json!({ "image": small, "backend": "shrink" }).to_string())
    }));
    let (img, _, _) = golden_input();
    let req = EnhanceSettings::default().clean_request(img, 0, 1);
    assert!(matches!(fast(&srv.url).enhance(&req), Err(Error::ProtocolViolation(_))));
}

#[test]
fn malformed_payload_is_a_protocol_violation() {
    let srv = mock(Box::new(|_, _: &Recorded| (200, r#"{"image":"***","backend":"x"}"#.into())));
    let (img, _, _) = golden_input();
    let req = EnhanceSettings::default().clean_request(img, 0, 1);
    assert!(matches!(fast(&srv.url).enhance(&req), Err(Error::ProtocolViolation(_))));
    assert!(decode_image("not base64!").is_err());
}

#[test]
fn unreachable_service_gives_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let (img, _, _) = golden_input();
    let req = EnhanceSettings::default().clean_request(img, 0, 1);
    let err = fast(&format!("http://127.0.0.1:{port}")).enhance(&req).unwrap_err();
    assert!(matches!(err, Error::EnhancerUnavailable(_)), "{err}");
}
