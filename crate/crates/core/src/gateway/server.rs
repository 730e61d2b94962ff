use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use crate::collect::{LatestCell, SessionDriver, TeleopCommand};
use crate::datastore::{DatasetWriter, Source};
use crate::env::{make_env, Environment};

use super::wire::{codes, ClientMessage, RecordAction, SceneFrame, ServerMessage, PROTOCOL_VERSION};
use super::GatewayError;

/// Scene frames buffered per client before new ones are dropped.
pub const FRAME_QUEUE_CAP: usize = 4;
pub const SCENE_HZ: f64 = 20.0;
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub port: u16,
    pub env_id: String,
    /// Recorded episodes go to `<data_root>/web/<env_id>/`.
    pub data_root: PathBuf,
    pub tick_hz: f64,
    pub seed: u64,
}

impl ServerConfig {
    pub fn new(port: u16, env_id: &str, data_root: PathBuf) -> Self {
        Self { port, env_id: env_id.to_string(), data_root, tick_hz: SCENE_HZ, seed: 0 }
    }
}

/// Channels between the tick thread and the one active connection.
struct Link {
    id: u64,
    commands: Arc<LatestCell<TeleopCommand>>,
    control: Receiver<ClientMessage>,
    replies: Sender<ServerMessage>,
    frames: SyncSender<String>,
}

#[derive(Default)]
struct Shared {
    stop: AtomicBool,
    link: Mutex<Option<Link>>,
    next_id: AtomicU64,
    dropped_frames: AtomicU64,
}

/// A running server; dropping it does not stop it, call [`ServerHandle::shutdown`].
pub struct ServerHandle {
    pub addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    /// Scene frames dropped because a client was not reading.
    pub fn dropped_frames(&self) -> u64 {
        self.shared.dropped_frames.load(Ordering::Relaxed)
    }

    pub fn shutdown(mut self) {
        self.shared.stop.store(true, Ordering::Release);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Binds the port and starts the accept and tick threads.
pub fn serve(config: ServerConfig) -> Result<ServerHandle, GatewayError> {
    let env = make_env(&config.env_id).map_err(|e| GatewayError::Env(e.to_string()))?;
    let listener = TcpListener::bind(("0.0.0.0", config.port)).map_err(|e| GatewayError::Bind(config.port, e))?;
    let addr = listener.local_addr().map_err(|e| GatewayError::Bind(config.port, e))?;
    listener.set_nonblocking(true).map_err(|e| GatewayError::Bind(config.port, e))?;
    let shared = Arc::new(Shared::default());
    let accept = {
        let shared = shared.clone();
        std::thread::spawn(move || accept_loop(listener, shared))
    };
    let tick = {
        let shared = shared.clone();
        std::thread::spawn(move || Ticker::new(env, config).run(&shared))
    };
    Ok(ServerHandle { addr, shared, threads: vec![accept, tick] })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut workers: Vec<JoinHandle<()>> = Vec::new();
    while !shared.stop.load(Ordering::Acquire) {
        match listener.accept() {
            Ok((stream, _)) => {
                let shared = shared.clone();
                workers.push(std::thread::spawn(move || handle_connection(stream, shared)));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(_) => std::thread::sleep(POLL),
        }
        workers.retain(|w| !w.is_finished());
    }
    for w in workers {
        let _ = w.join();
    }
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> bool {
    ws.send(Message::text(msg.to_json())).is_ok()
}

fn handle_connection(stream: TcpStream, shared: Arc<Shared>) {
    let _ = stream.set_nonblocking(false);
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
    let commands = Arc::new(LatestCell::new());
    let (control_tx, control_rx) = mpsc::channel();
    let (reply_tx, reply_rx) = mpsc::channel();
    let (frame_tx, frame_rx) = mpsc::sync_channel(FRAME_QUEUE_CAP);
    {
        let mut link = shared.link.lock().unwrap_or_else(|e| e.into_inner());
        if link.is_some() {
            drop(link);
            send(&mut ws, &ServerMessage::error(codes::BUSY, "another teleoperation session is active"));
            let _ = ws.close(None);
            let _ = ws.flush();
            return;
        }
        *link = Some(Link { id, commands: commands.clone(), control: control_rx, replies: reply_tx.clone(), frames: frame_tx });
    }
    let _ = ws.get_ref().set_read_timeout(Some(POLL));
    session_loop(&mut ws, &shared, &commands, &control_tx, &reply_tx, &reply_rx, &frame_rx);
    let mut link = shared.link.lock().unwrap_or_else(|e| e.into_inner());
    if link.as_ref().is_some_and(|l| l.id == id) {
        *link = None;
    }
}

fn session_loop(
    ws: &mut WebSocket<TcpStream>,
    shared: &Shared,
    commands: &LatestCell<TeleopCommand>,
    control: &Sender<ClientMessage>,
    reply_tx: &Sender<ServerMessage>,
    replies: &Receiver<ServerMessage>,
    frames: &Receiver<String>,
) {
    loop {
        if shared.stop.load(Ordering::Acquire) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return;
        }
        // replies first so that hello precedes any scene frame
        loop {
            match replies.try_recv() {
                Ok(m) => {
                    if !send(ws, &m) {
                        return;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return,
            }
        }
        while let Ok(f) = frames.try_recv() {
            if ws.send(Message::text(f)).is_err() {
                return;
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => match ClientMessage::parse(text.as_str()) {
                Ok(msg) => match msg.command() {
                    Some(cmd) => commands.put(cmd),
                    None => {
                        if control.send(msg).is_err() {
                            return;
                        }
                    }
                },
                Err(reply) => {
                    let _ = reply_tx.send(reply);
                }
            },
            Ok(Message::Binary(_)) => {
                let _ = reply_tx.send(ServerMessage::error(codes::BAD_MESSAGE, "binary frames are not supported"));
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                return;
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                let _ = ws.flush();
            }
            Err(_) => return,
        }
    }
}

/// Owns the environment; the only thread that touches it.
struct Ticker {
    driver: SessionDriver,
    config: ServerConfig,
    writer: Option<DatasetWriter>,
    link_id: Option<u64>,
}

impl Ticker {
    fn new(env: Environment, config: ServerConfig) -> Self {
        let mut driver = SessionDriver::new(env);
        driver.reset(config.seed);
        Self { driver, config, writer: None, link_id: None }
    }

    fn run(mut self, shared: &Shared) {
        let period = Duration::from_secs_f64(1.0 / self.config.tick_hz);
        let mut next = Instant::now();
        while !shared.stop.load(Ordering::Acquire) {
            {
                let link = shared.link.lock().unwrap_or_else(|e| e.into_inner());
                match link.as_ref() {
                    Some(l) => self.tick(l, shared),
                    None => {
                        if self.link_id.take().is_some() {
                            self.driver.discard_recording();
                        }
                    }
                }
            }
            next += period;
            let now = Instant::now();
            if next > now {
                std::thread::sleep(next - now);
            } else {
                next = now;
            }
        }
    }

    fn hello(&self) -> ServerMessage {
        ServerMessage::Hello { protocol_version: PROTOCOL_VERSION, env_spec: self.driver.env.spec().clone() }
    }

    fn tick(&mut self, link: &Link, shared: &Shared) {
        if self.link_id != Some(link.id) {
            self.link_id = Some(link.id);
            self.driver.reset(self.config.seed);
            let _ = link.replies.send(self.hello());
        }
        while let Ok(msg) = link.control.try_recv() {
            if let Some(reply) = self.control(msg) {
                let _ = link.replies.send(reply);
            }
        }
        let cmd = link.commands.take();
        let _ = self.driver.tick(cmd.as_ref());
        let env = &self.driver.env;
        if let Some(state) = env.state() {
            let frame = SceneFrame::from_state(state, env.spec(), self.driver.is_recording(), env.is_success());
            if link.frames.try_send(ServerMessage::Scene(frame).to_json()).is_err() {
                shared.dropped_frames.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    fn control(&mut self, msg: ClientMessage) -> Option<ServerMessage> {
        match msg {
            ClientMessage::Reset { seed } => {
                self.driver.reset(seed);
                None
            }
            ClientMessage::Record { action: RecordAction::Start } => {
                if self.driver.is_recording() {
                    return Some(ServerMessage::error(codes::ALREADY_RECORDING, "recording already in progress"));
                }
                self.driver.start_recording(Source::Web);
                None
            }
            ClientMessage::Record { action: RecordAction::Discard } => {
                if !self.driver.is_recording() {
                    return Some(ServerMessage::error(codes::NOT_RECORDING, "nothing to discard"));
                }
                self.driver.discard_recording();
                None
            }
            ClientMessage::Record { action: RecordAction::Stop } => {
                if !self.driver.is_recording() {
                    return Some(ServerMessage::error(codes::NOT_RECORDING, "no recording in progress"));
                }
                let Some(ep) = self.driver.stop_recording() else {
                    return Some(ServerMessage::error(codes::EMPTY_RECORDING, "no step was recorded"));
                };
                Some(match self.save(&ep) {
                    Ok(path) => ServerMessage::Recorded { path, length: ep.len(), success: ep.success },
                    Err(e) => ServerMessage::error(codes::IO, e.to_string()),
                })
            }
            ClientMessage::SelectEnv { env_id } => match make_env(&env_id) {
                Ok(env) => {
                    self.driver = SessionDriver::new(env);
                    self.driver.reset(self.config.seed);
                    self.config.env_id = env_id;
                    self.writer = None;
                    Some(self.hello())
                }
                Err(e) => Some(ServerMessage::error(codes::UNKNOWN_ENV, e.to_string())),
            },
            ClientMessage::Cmd { .. } => None,
        }
    }

    fn save(&mut self, ep: &crate::datastore::Episode) -> Result<String, crate::datastore::DataError> {
        if self.writer.is_none() {
            let root = self.config.data_root.join("web").join(&self.config.env_id);
            self.writer = Some(DatasetWriter::append(root, self.driver.env.spec().clone())?);
        }
        let writer = self.writer.as_mut().expect("created above");
        let path = writer.add(ep)?;
        writer.flush(serde_json::json!({
            "command": "serve",
            "env": self.config.env_id,
            "port": self.config.port,
            "tick_hz": self.config.tick_hz,
            "seed": self.config.seed,
        }))?;
        Ok(path.display().to_string())
    }
}
