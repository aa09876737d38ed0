use std::io::{Read, Write};
use std::net::TcpListener as StdListener;
use std::sync::Arc;
use std::time::Duration;

use promptlab_client::HttpBackend;
use promptlab_core::gateway::{
    Backend, EmbedRequest, Gateway, GatewayError, MaskFillRequest, MockBackend, ScoreRequest,
};

/// Starts the service on its own runtime thread and returns its base URL.
fn spawn_server(backend: MockBackend) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            promptlab_server::serve(listener, Arc::new(backend), std::future::pending()).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

/// One-shot raw HTTP responder.
fn spawn_raw(reply: &'static str, delay: Duration) -> String {
    let listener = StdListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut s = stream.unwrap();
            let mut buf = [0u8; 4096];
            let _ = s.read(&mut buf);
            std::thread::sleep(delay);
            let _ = s.write_all(reply.as_bytes());
        }
    });
    format!("http://{addr}")
}

#[test]
fn http_backend_matches_in_process_mock() {
    let url = spawn_server(MockBackend::new());
    let remote = HttpBackend::connect(&url).unwrap();
    let local = MockBackend::new();
    assert_eq!(remote.id(), local.id());

    let score = ScoreRequest { prompt: "Review: fine\nanswer:".into(), candidates: vec!["Good".into(), "Bad".into()] };
    assert_eq!(remote.score(&score).unwrap(), local.score(&score).unwrap());

    let mf = MaskFillRequest { text_with_mask: "It was [MASK].".into(), candidates: vec!["great".into(), "more recently".into()] };
    assert_eq!(remote.mask_fill(&mf).unwrap(), local.mask_fill(&mf).unwrap());

    let emb = EmbedRequest { texts: vec!["a".into(), "b c".into()] };
    assert_eq!(remote.embed(&emb).unwrap(), local.embed(&emb).unwrap());

    let gw = Gateway::new(Arc::new(remote));
    assert_eq!(gw.mask_fill_rank("It was [MASK].", "great").unwrap(), Gateway::new(Arc::new(local)).mask_fill_rank("It was [MASK].", "great").unwrap());
}

#[test]
fn server_errors_keep_their_kind() {
    let url = spawn_server(MockBackend::with_vocab(["good", "bad"]));
    let remote = HttpBackend::connect(&url).unwrap();
    let req = MaskFillRequest { text_with_mask: "It was [MASK].".into(), candidates: vec!["meh".into()] };
    assert!(matches!(remote.mask_fill(&req), Err(GatewayError::Vocabulary(_))));
    let empty = ScoreRequest { prompt: "p".into(), candidates: vec![] };
    assert!(matches!(remote.score(&empty), Err(GatewayError::Precondition(_))));
}

#[test]
fn malformed_reply_is_protocol_error() {
    let url = spawn_raw("HTTP/1.1 200 OK\r\nContent-Length: 5\r\nConnection: close\r\n\r\nhello", Duration::ZERO);
    let b = HttpBackend::with_id(&url, "x", Duration::from_secs(5)).unwrap();
    let req = ScoreRequest { prompt: "p".into(), candidates: vec!["a".into()] };
    assert!(matches!(b.score(&req), Err(GatewayError::Protocol(_))));
}

#[test]
fn timeout_is_retriable_transport_error() {
    let url = spawn_raw("", Duration::from_secs(3));
    let b = HttpBackend::with_id(&url, "x", Duration::from_millis(200)).unwrap();
    let err = b.score(&ScoreRequest { prompt: "p".into(), candidates: vec!["a".into()] }).unwrap_err();
    assert!(err.is_retriable(), "{err:?}");
}

#[test]
fn unreachable_server_is_transport_error() {
    let port = StdListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    assert!(matches!(HttpBackend::connect(&format!("http://127.0.0.1:{port}")), Err(GatewayError::Transport(_))));
    assert!(matches!(HttpBackend::connect("not a url"), Err(GatewayError::Precondition(_))));
}
