use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use inconsistency_core::oracle::{Fact, Oracle, OracleHandler, OracleSpec};
use inconsistency_core::protocol::{Mode, ModelHandler, ProtocolError, Query, Reply, Request};
use inconsistency_core::NliLabel;
use inconsistency_runtime::{bind_http, serve_lines, Endpoint, EndpointError, HttpTransport, LineTransport, ServeOptions};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};

fn spec() -> OracleSpec {
    let facts = (0..40)
        .map(|i| Fact {
            key: format!("k{i}"),
            x: format!("dog-{i}"),
            y: format!("animal-{i}"),
            label: NliLabel::Entailment,
        })
        .collect();
    OracleSpec { facts, seeds: vec![] }
}

fn handler(mode: Mode) -> Arc<dyn ModelHandler> {
    Arc::new(OracleHandler::new(Oracle::new(&spec()).unwrap(), mode))
}

/// Endpoint talking to `handler` through an in-memory pipe.
fn piped(handler: Arc<dyn ModelHandler>, options: ServeOptions, timeout: Duration) -> Endpoint {
    let (client, server) = tokio::io::duplex(1 << 16);
    let (server_read, server_write) = tokio::io::split(server);
    tokio::spawn(serve_lines(handler, server_read, server_write, options));
    let (client_read, client_write) = tokio::io::split(client);
    Endpoint::with_transport(Arc::new(LineTransport::new(client_read, client_write)), timeout, 64)
}

#[tokio::test]
async fn out_of_order_replies_reach_their_callers() {
    let ep = Arc::new(piped(handler(Mode::Forward), ServeOptions { reorder: true }, Duration::from_secs(10)));
    let calls = (0..40).map(|i| {
        let ep = Arc::clone(&ep);
        tokio::spawn(async move {
            let r = ep
                .forward(&format!("a dog-{i} is in the park"), &format!("an animal-{i} is in the park"))
                .await
                .unwrap();
            (i, r)
        })
    });
    for call in calls {
        let (i, r) = call.await.unwrap();
        assert_eq!(r.label, Some(NliLabel::Entailment));
        assert_eq!(r.explanation.text(), format!("dog-{i} is a type of animal-{i}"));
    }
}

#[tokio::test]
async fn reordering_server_really_reorders() {
    let (mut client, server) = tokio::io::duplex(1 << 16);
    let (r, w) = tokio::io::split(server);
    tokio::spawn(serve_lines(handler(Mode::Reverse), r, w, ServeOptions { reorder: true }));
    let mut input = String::new();
    for i in 0..30 {
        input.push_str(&format!(
            "{{\"id\":\"{i}\",\"op\":\"reverse\",\"context\":\"\",\"explanation\":\"dog-{i} is a type of animal-{i}\"}}\n"
        ));
    }
    client.write_all(input.as_bytes()).await.unwrap();
    let mut lines = BufReader::new(client).lines();
    let mut ids = Vec::new();
    for _ in 0..30 {
        let line = lines.next_line().await.unwrap().unwrap();
        let reply: Reply = serde_json::from_str(&line).unwrap();
        ids.push(reply.id.parse::<usize>().unwrap());
    }
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(sorted, (0..30).collect::<Vec<_>>());
    assert_ne!(ids, sorted, "replies came back in request order");
}

#[tokio::test]
async fn silent_endpoint_times_out_retryably() {
    let (client, _server) = tokio::io::duplex(1024);
    let (r, w) = tokio::io::split(client);
    let ep = Endpoint::with_transport(Arc::new(LineTransport::new(r, w)), Duration::from_millis(50), 1);
    let err = ep.forward("", "anything").await.unwrap_err();
    assert!(matches!(err, EndpointError::Timeout(_)), "{err:?}");
    assert!(err.is_retryable());
}

#[tokio::test]
async fn closed_stream_fails_pending_calls() {
    let (client, server) = tokio::io::duplex(1024);
    let (r, w) = tokio::io::split(client);
    let ep = Endpoint::with_transport(Arc::new(LineTransport::new(r, w)), Duration::from_secs(5), 1);
    drop(server);
    let err = ep.forward("", "anything").await.unwrap_err();
    assert!(matches!(err, EndpointError::Closed | EndpointError::Transport(_)), "{err:?}");
}

#[tokio::test]
async fn malformed_reply_keeps_raw_payload() {
    let (client, server) = tokio::io::duplex(1024);
    let (r, w) = tokio::io::split(client);
    let ep = Endpoint::with_transport(Arc::new(LineTransport::new(r, w)), Duration::from_secs(5), 1);
    tokio::spawn(async move {
        let (sr, mut sw) = tokio::io::split(server);
        let mut lines = BufReader::new(sr).lines();
        let _ = lines.next_line().await;
        sw.write_all(b"{\"id\":\"1\",\"label\":\"maybe\"}\n").await.unwrap();
        let _ = lines.next_line().await;
    });
    match ep.forward("", "x").await.unwrap_err() {
        EndpointError::Protocol(ProtocolError::Malformed { raw, .. }) => {
            assert_eq!(raw, "{\"id\":\"1\",\"label\":\"maybe\"}")
        }
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn model_errors_are_not_retryable() {
    let ep = piped(handler(Mode::Forward), ServeOptions::default(), Duration::from_secs(5));
    let err = ep.reverse("", "dog-1 is a type of animal-1").await.unwrap_err();
    assert!(matches!(err, EndpointError::Protocol(ProtocolError::Model(_))), "{err:?}");
    assert!(!err.is_retryable());
}

#[tokio::test]
async fn http_round_trip() {
    let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let (bound, server) = bind_http(handler(Mode::Reverse), addr).await.unwrap();
    tokio::spawn(server);
    let ep = Endpoint::with_transport(
        Arc::new(HttpTransport::new(format!("http://{bound}/"))),
        Duration::from_secs(5),
        4,
    );
    let r = ep.reverse("a dog-3 is in the park", "dog-3 is a type of animal-3").await.unwrap();
    assert_eq!(r.variable, "an animal-3 is in the park");

    let raw = reqwest::Client::new()
        .post(format!("http://{bound}/"))
        .body("not json")
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    let reply: Reply = serde_json::from_str(&raw).unwrap();
    assert_eq!(reply.id, "");
    assert!(reply.error.unwrap().starts_with("line 1:"));
}

#[tokio::test]
async fn unreachable_http_endpoint_is_a_transport_error() {
    // bind then drop to get a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let ep = Endpoint::with_transport(
        Arc::new(HttpTransport::new(format!("http://127.0.0.1:{port}/"))),
        Duration::from_secs(5),
        1,
    );
    let err = ep.forward("", "x").await.unwrap_err();
    assert!(matches!(err, EndpointError::Transport(_)), "{err:?}");
}

#[tokio::test]
async fn missing_program_is_a_startup_error() {
    let err = LineTransport::spawn("/nonexistent/model-binary", &[]).err().unwrap();
    assert!(matches!(err, EndpointError::Startup(_)));
}

#[tokio::test]
async fn mismatched_reply_id_is_rejected() {
    struct WrongId;
    impl ModelHandler for WrongId {
        fn handle(&self, _: &Request) -> Reply {
            Reply::forward("nope", None, "x")
        }
    }
    let ep = Endpoint::in_process(Arc::new(WrongId), 1);
    let err = ep
        .call(Query::Forward {
            context: String::new(),
            variable: "v".into(),
        })
        .await
        .unwrap_err();
    assert!(matches!(err, EndpointError::Protocol(ProtocolError::Malformed { .. })));
}
