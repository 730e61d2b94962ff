use std::net::TcpStream;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use rmb_core::collect::{run_session, ScriptedSource};
use rmb_core::datastore::{read_episode, validate, Dataset};
use rmb_core::env::make_env;
use rmb_core::gateway::{codes, serve, ClientMessage, ServerConfig, ServerHandle, PROTOCOL_VERSION};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn start(env_id: &str, tick_hz: f64) -> (ServerHandle, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServerConfig { tick_hz, ..ServerConfig::new(0, env_id, dir.path().to_path_buf()) };
    (serve(cfg).unwrap(), dir)
}

fn connect(server: &ServerHandle) -> Client {
    let (ws, _) = tungstenite::connect(format!("ws://127.0.0.1:{}", server.addr.port())).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    }
    ws
}

fn next_json(ws: &mut Client) -> Value {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return serde_json::from_str(t.as_str()).unwrap(),
            Message::Close(_) => return json!({"type": "closed"}),
            _ => {}
        }
    }
}

/// Skips scene frames until a message of another type arrives.
fn next_non_scene(ws: &mut Client) -> Value {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        assert!(Instant::now() < deadline, "no reply");
        let m = next_json(ws);
        if m["type"] != "scene" {
            return m;
        }
    }
}

fn next_scene(ws: &mut Client) -> Value {
    loop {
        let m = next_json(ws);
        if m["type"] == "scene" {
            return m;
        }
    }
}

fn send(ws: &mut Client, v: Value) {
    ws.send(Message::text(v.to_string())).unwrap();
}

#[test]
fn hello_comes_first() {
    let (server, _dir) = start("pick_place", 50.0);
    let mut ws = connect(&server);
    let hello = next_json(&mut ws);
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["protocol_version"], PROTOCOL_VERSION);
    assert_eq!(hello["env_spec"]["env_id"], "pick_place");
    let scene = next_scene(&mut ws);
    for key in ["t", "arms", "base", "objects", "rope", "goal", "recording", "success"] {
        assert!(scene.get(key).is_some(), "scene lacks {key}");
    }
    let arm = &scene["arms"][0];
    assert!(arm["joints"].is_array() && arm["ee"].as_array().unwrap().len() == 3 && arm["gripper"].is_number());
    drop(ws);
    server.shutdown();
}

#[test]
fn unknown_type_keeps_connection_open() {
    let (server, _dir) = start("push", 50.0);
    let mut ws = connect(&server);
    assert_eq!(next_json(&mut ws)["type"], "hello");
    send(&mut ws, json!({"type": "teleport", "x": 1}));
    let err = next_non_scene(&mut ws);
    assert_eq!((err["type"].as_str(), err["code"].as_str()), (Some("error"), Some(codes::UNKNOWN_TYPE)));
    send(&mut ws, json!({"type": "cmd", "dx": "left"}));
    assert_eq!(next_non_scene(&mut ws)["code"], codes::BAD_MESSAGE);
    send(&mut ws, json!({"type": "select_env", "env_id": "nowhere"}));
    assert_eq!(next_non_scene(&mut ws)["code"], codes::UNKNOWN_ENV);
    send(&mut ws, json!({"type": "record", "action": "stop"}));
    assert_eq!(next_non_scene(&mut ws)["code"], codes::NOT_RECORDING);
    // still served
    let t0 = next_scene(&mut ws)["t"].as_u64().unwrap();
    let t1 = next_scene(&mut ws)["t"].as_u64().unwrap();
    assert!(t1 > t0);
    server.shutdown();
}

#[test]
fn second_connection_is_busy() {
    let (server, _dir) = start("push", 50.0);
    let mut first = connect(&server);
    assert_eq!(next_json(&mut first)["type"], "hello");
    let mut second = connect(&server);
    let m = next_json(&mut second);
    assert_eq!((m["type"].as_str(), m["code"].as_str()), (Some("error"), Some(codes::BUSY)));
    assert_eq!(next_json(&mut second)["type"], "closed");
    // the first session is unaffected
    next_scene(&mut first);
    drop(first);
    // once it leaves, a new operator gets a fresh hello
    std::thread::sleep(Duration::from_millis(200));
    let mut third = connect(&server);
    assert_eq!(next_json(&mut third)["type"], "hello");
    server.shutdown();
}

fn schema(v: &Value) -> Vec<(String, String, Vec<u64>)> {
    v["channels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["name"].as_str().unwrap().to_string(),
                c["dtype"].to_string(),
                c["shape"].as_array().unwrap().iter().map(|d| d.as_u64().unwrap()).collect(),
            )
        })
        .collect()
}

#[test]
fn recorded_session_round_trip() {
    let (server, dir) = start("pick_place", 50.0);
    let mut ws = connect(&server);
    assert_eq!(next_json(&mut ws)["type"], "hello");
    send(&mut ws, json!({"type": "reset", "seed": 4}));
    next_scene(&mut ws);
    send(&mut ws, json!({"type": "record", "action": "start"}));
    send(&mut ws, json!({"type": "record", "action": "start"}));
    assert_eq!(next_non_scene(&mut ws)["code"], codes::ALREADY_RECORDING);
    let mut cmds = 0;
    while cmds < 12 {
        let scene = next_scene(&mut ws);
        if scene["recording"] != true {
            continue;
        }
        let cmd = ClientMessage::Cmd { dx: 0.01, dy: -0.005, grip: rmb_core::collect::Grip::Hold, arm: 0 };
        ws.send(Message::text(cmd.to_json())).unwrap();
        cmds += 1;
    }
    send(&mut ws, json!({"type": "record", "action": "stop"}));
    let rec = next_non_scene(&mut ws);
    assert_eq!(rec["type"], "recorded", "{rec}");
    assert!(rec["length"].as_u64().unwrap() >= 10);
    let path = rec["path"].as_str().unwrap().to_string();
    server.shutdown();

    let report = validate(&path);
    assert!(report.is_ok(), "{:?}", report.failures);
    assert_eq!(report.length as u64, rec["length"].as_u64().unwrap());
    let ep = read_episode(&path).unwrap();
    assert_eq!(ep.seed, 4);
    assert!(ep.actions.to_f64_vec().iter().any(|v| *v != 0.0));

    // same layout as a scripted recording of the same task
    let scripted = run_session(make_env("pick_place").unwrap(), &mut ScriptedSource::new(), 0).unwrap().0;
    let tmp = dir.path().join("scripted.rmbe");
    rmb_core::datastore::write_episode(&scripted, &tmp).unwrap();
    let header = |p: &std::path::Path| {
        let bytes = std::fs::read(p).unwrap();
        let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        serde_json::from_slice::<Value>(&bytes[10..10 + n]).unwrap()
    };
    let (web, ref_) = (header(path.as_ref()), header(&tmp));
    assert_eq!(schema(&web), schema(&ref_));
    assert_eq!(web["source"], "web");

    let ds = Dataset::open(dir.path().join("web").join("pick_place")).unwrap();
    assert_eq!(ds.len(), 1);
}

#[test]
fn slow_client_never_stalls_the_tick() {
    let (server, _dir) = start("rope_reach", 1000.0);
    let mut ws = connect(&server);
    assert_eq!(next_json(&mut ws)["type"], "hello");
    std::thread::sleep(Duration::from_secs(3));
    let dropped = server.dropped_frames();
    assert!(dropped > 0, "no frame was dropped while the client stalled");
    // the session is still live afterwards and replies are not lost
    send(&mut ws, json!({"type": "record", "action": "discard"}));
    assert_eq!(next_non_scene(&mut ws)["code"], codes::NOT_RECORDING);
    server.shutdown();
}
