//! The HTTP service on an ephemeral port, driven by a plain client.

use std::collections::BTreeMap;
use std::sync::Arc;

use mapguide::domain::bundled;
use mapguide::session::service::{serve, ServiceConfig, SystemClock};
use serde_json::{json, Value};

#[tokio::main]
async fn main() {
    let maps = BTreeMap::from([("fig1".to_string(), bundled::fig1())]);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(serve(listener, ServiceConfig::new(maps), Arc::new(SystemClock::new())));

    let client = reqwest::Client::new();
    let created: Value = client.post(format!("{base}/api/sessions")).json(&json!({"map": "fig1"})).send().await.unwrap().json().await.unwrap();
    let id = created["session"].as_str().unwrap();
    for m in created["messages"].as_array().unwrap() {
        println!("server: {m}");
    }
    let reply: Value = client
        .post(format!("{base}/api/sessions/{id}/events"))
        .json(&json!({"seq": 1, "type": "move-to", "landmark": "nowhere"}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    println!("after a bad move: {reply}");
    let log = client.get(format!("{base}/api/sessions/{id}/log")).send().await.unwrap().text().await.unwrap();
    println!("log has {} records", log.lines().count());
}
