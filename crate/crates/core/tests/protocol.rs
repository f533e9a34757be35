use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use demoforge::gen::{
    decode_png_b64, generate_episode, GenError, GenRequest, Generator, HealthResponse, HttpGenerator, MockMode,
    MockService, WireError, WireRequest, WireResponse, MAX_RETRIES,
};
use demoforge::synth::{render_pair, write_synth, SceneScript};
use serde::de::DeserializeOwned;
use serde::Serialize;

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn round_trip<T: Serialize + DeserializeOwned>(name: &str) -> T {
    let text = fixture(name);
    let parsed: T = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&parsed).unwrap(), text, "{name}");
    parsed
}

#[test]
fn golden_messages_round_trip() {
    let req: WireRequest = round_trip("generate_request.json");
    let resp: WireResponse = round_trip("generate_response.json");
    let health: HealthResponse = round_trip("health_response.json");
    let _: WireError = round_trip("error_response.json");
    assert_eq!(req.request_id, resp.request_id);
    assert_eq!(health.status, "ok");
    assert_eq!(decode_png_b64(&req.image_png_b64).unwrap().dimensions(), (2, 2));
}

#[test]
fn unknown_fields_are_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(&fixture("generate_request.json")).unwrap();
    v["seed"] = 3.into();
    assert!(serde_json::from_value::<WireRequest>(v).is_err());
}

/// Serves `respond(method, path, body) -> (status, body)` on a local port
/// until the process exits. Returns the base URL and a request counter.
fn serve<F>(respond: F) -> (String, Arc<AtomicUsize>)
where
    F: Fn(&str, &str, &str) -> (u16, String) + Send + 'static,
{
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            counter.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let (status, out) = respond(&req.method().to_string(), req.url(), &body);
            let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
            let _ = req.respond(tiny_http::Response::from_string(out).with_status_code(status).with_header(header));
        }
    });
    (url, hits)
}

fn serve_mock(mode: MockMode) -> (String, Arc<AtomicUsize>) {
    let service = MockService::new(mode);
    serve(move |m, p, b| service.handle(m, p, b))
}

#[test]
fn echo_over_http_is_bit_exact() {
    let (url, _) = serve_mock(MockMode::Echo);
    let client = HttpGenerator::new(&url, 5_000);
    client.health().unwrap();
    let pair = render_pair(&SceneScript::random(4, 40).unwrap()).unwrap();
    let out = generate_episode(&pair.hand, pair.hand.obj_name(), &client, 3).unwrap();
    for (a, b) in out.frames().iter().zip(pair.hand.frames()) {
        assert_eq!(a.image(), b.image());
        assert_eq!(a.timestamp_ns, b.timestamp_ns);
    }
}

#[test]
fn composite_truth_service_returns_ideal_frames() {
    let script = SceneScript::random(8, 40).unwrap();
    let pair = render_pair(&script).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), &pair, &script).unwrap();
    let (url, _) = serve_mock(MockMode::CompositeTruth { truth_dir: dir.path().join("truth") });
    let out = generate_episode(&pair.hand, pair.hand.obj_name(), &HttpGenerator::new(&url, 5_000), 4).unwrap();
    for (a, b) in out.frames().iter().zip(&pair.truth.composites) {
        assert_eq!(a.image(), b);
    }
}

fn request() -> GenRequest {
    GenRequest {
        request_id: "ep:0".into(),
        prompt: "Turn the hand into a gripper. The gripper is holding a cup.".into(),
        image: image::RgbImage::new(4, 4),
    }
}

#[test]
fn unreachable_endpoint_gives_up_after_three_attempts() {
    // bind then release a port so nothing listens there
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = HttpGenerator::new(&format!("http://127.0.0.1:{port}"), 500);
    match client.generate(&request()) {
        Err(GenError::GenTimeout { attempts, .. }) => assert_eq!(attempts, MAX_RETRIES + 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn server_errors_are_retried_then_reported() {
    let (url, hits) = serve(|_, _, _| (503, r#"{"error":"busy"}"#.into()));
    let err = HttpGenerator::new(&url, 2_000).generate(&request()).unwrap_err();
    assert!(matches!(err, GenError::GenTimeout { attempts: 3, .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn transient_failure_recovers() {
    let service = MockService::new(MockMode::Echo);
    let calls = AtomicUsize::new(0);
    let (url, hits) = serve(move |m, p, b| {
        if calls.fetch_add(1, Ordering::SeqCst) == 0 {
            (500, r#"{"error":"warming up"}"#.into())
        } else {
            service.handle(m, p, b)
        }
    });
    let resp = HttpGenerator::new(&url, 2_000).generate(&request()).unwrap();
    assert_eq!(resp.image, request().image);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, hits) = serve(|_, _, _| (400, r#"{"error":"bad prompt"}"#.into()));
    let err = HttpGenerator::new(&url, 2_000).generate(&request()).unwrap_err();
    assert!(matches!(err, GenError::ProtocolError(_)), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn mismatched_request_id_is_a_protocol_error() {
    let service = MockService::new(MockMode::Echo);
    let (url, _) = serve(move |m, p, b| {
        let (s, body) = service.handle(m, p, b);
        (s, body.replace("\"ep:0\"", "\"ep:1\""))
    });
    let err = HttpGenerator::new(&url, 2_000).generate(&request()).unwrap_err();
    assert!(matches!(err, GenError::ProtocolError(_)), "{err}");
}

#[test]
fn mock_service_routes() {
    let s = MockService::new(MockMode::Echo);
    assert_eq!(s.handle("GET", "/v1/health", "").0, 200);
    assert_eq!(s.handle("GET", "/v1/generate", "").0, 405);
    assert_eq!(s.handle("POST", "/v2/generate", "{}").0, 404);
    assert_eq!(s.handle("POST", "/v1/generate", "not json").0, 400);
}
