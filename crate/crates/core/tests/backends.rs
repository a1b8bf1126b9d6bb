use std::path::PathBuf;

use firmrisk::backends::mock::{MockAction, MockServer};
use firmrisk::backends::{serialize_prompt, Backend, RemoteClient, RemoteConfig};
use firmrisk::descriptors::{example_router, ExposureLevel};
use firmrisk::experiments::{run_records, Pipeline, RunOptions};
use firmrisk::params::ParamsFile;

fn client(server: &MockServer, max_retries: u32) -> RemoteClient {
    let mut cfg = RemoteConfig::new(server.url(), "mock", "test-key");
    cfg.timeout_ms = 2000;
    cfg.max_retries = max_retries;
    RemoteClient::new(cfg).unwrap()
}

#[test]
fn remote_echoes_mock_reply() {
    let server = MockServer::start(|_| MockAction::reply(61.0, 0.3, 4)).unwrap();
    let out = client(&server, 0).evaluate(&example_router(), 1).unwrap();
    assert_eq!(out.risk, 61.0);
    assert_eq!(out.aux.uncertainty, 0.3);
    assert_eq!(out.aux.reasoning_depth, 4);
    assert!(out.aux.wall_latency_ms >= 0.0);
    assert_eq!(out.retries, 0);
}

#[test]
fn bearer_credential_is_sent() {
    let server = MockServer::start(|req| match req.authorization.as_deref() {
        Some("Bearer test-key") => MockAction::reply(10.0, 0.1, 1),
        _ => MockAction::Status(401),
    })
    .unwrap();
    assert_eq!(client(&server, 0).evaluate(&example_router(), 2).unwrap().risk, 10.0);
}

#[test]
fn two_drops_then_success_counts_two_retries() {
    let server = MockServer::start(|req| {
        if req.index < 2 {
            MockAction::Drop
        } else {
            MockAction::reply(61.0, 0.3, 4)
        }
    })
    .unwrap();
    let backend = Backend::Remote(client(&server, 3));
    let opts = RunOptions {
        levels: vec![ExposureLevel::Medium],
        workers: 1,
        ..RunOptions::default()
    };
    let recs = run_records(&Pipeline::new(ParamsFile::bundled()), &[example_router()], &backend, &opts).unwrap();
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    assert!(!r.backend_failure);
    assert_eq!(r.retries, 2);
    assert_eq!(r.r_cfg, 61.0);
    assert_eq!(server.hits(), 5);
}

#[test]
fn retries_exhausted_is_flagged() {
    let server = MockServer::start(|_| MockAction::Status(503)).unwrap();
    let err = client(&server, 2).evaluate(&example_router(), 3).unwrap_err();
    assert_eq!(err.layer, 3);
    assert_eq!(err.retries, 2);
    assert!(err.wall_latency_ms >= 0.0);
    assert_eq!(server.hits(), 3);
}

#[test]
fn unparseable_reply_is_reprompted_once() {
    let server = MockServer::start(|req| {
        if req.last_user_message().contains("could not be parsed") {
            MockAction::Content("sure: {\"risk\": 12, \"uncertainty\": 0.5, \"reasoning_depth\": 2}".into())
        } else {
            MockAction::Content("I think the risk is moderate.".into())
        }
    })
    .unwrap();
    let out = client(&server, 0).evaluate(&example_router(), 1).unwrap();
    assert_eq!(out.risk, 12.0);
    assert_eq!(server.hits(), 2);
}

fn golden(layer: u8) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/router_layer{layer}.txt"))
}

#[test]
fn router_prompts_match_golden_files() {
    let f = example_router();
    for layer in 1..=3 {
        let text = serialize_prompt(&f, layer);
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::write(golden(layer), &text).unwrap();
        }
        let want = std::fs::read_to_string(golden(layer)).unwrap();
        assert_eq!(text, want, "layer {layer}");
    }
}
