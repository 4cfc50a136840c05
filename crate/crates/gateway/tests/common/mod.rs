#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use floc_core::dtree::reference_tree;
use floc_core::plantsim::replay_table2;
use floc_core::{Config, TelemetryStore, WaterSample};
use floc_gateway::Gateway;
use serde_json::Value;
use tower::ServiceExt;

pub fn gateway() -> Gateway {
    Gateway::new(Arc::new(TelemetryStore::in_memory()), reference_tree(), Config::default())
}

pub fn frame(s: &WaterSample) -> String {
    serde_json::to_string(s).unwrap()
}

pub fn table2_frames() -> Vec<String> {
    replay_table2().iter().map(frame).collect()
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), 1 << 24).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: &str) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

/// Splits a raw SSE byte stream into `(event, data)` pairs, ignoring
/// comments and keep-alives.
pub fn parse_sse(text: &str) -> Vec<(String, String)> {
    text.split("\n\n")
        .filter_map(|block| {
            let mut event = None;
            let mut data = Vec::new();
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    event = Some(v.trim_start().to_string());
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push(v.strip_prefix(' ').unwrap_or(v).to_string());
                }
            }
            event.map(|e| (e, data.join("\n")))
        })
        .collect()
}
