//! TCP listener, session registry and per-connection message pumps.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use cuewatch_core::detector::DetectorConfig;
use cuewatch_core::feature::{parse_stream, ChannelSchema, FeatureFrame, MissingDataPolicy};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, BufWriter};
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::{broadcast, mpsc};
use tokio::time::Instant;

use crate::clock::{ClockMode, SessionClock};
use crate::protocol::{ErrorCode, ErrorNotice, Kind, Message, SourceKind, ThresholdSet};
use crate::session::{Reply, Session, SessionInput};
use crate::ServiceError;

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    /// Every new session replays this recorded file.
    Replay(PathBuf),
    /// Clients push frames with `frame-ingest`.
    Live,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerConfig {
    pub detector: DetectorConfig,
    pub schema: ChannelSchema,
    pub policy: MissingDataPolicy,
    pub source: Source,
    pub clock: ClockMode,
    /// Frames queued per session before ingest is refused.
    pub ingest_capacity: usize,
    /// Messages buffered per subscriber before it is reported as lagging.
    pub fanout_capacity: usize,
}

impl ServerConfig {
    pub fn new(detector: DetectorConfig, schema: ChannelSchema, source: Source) -> Self {
        ServerConfig {
            detector,
            schema,
            policy: MissingDataPolicy::default(),
            source,
            clock: ClockMode::Realtime,
            ingest_capacity: 1024,
            fanout_capacity: 4096,
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.detector.validate()?;
        self.clock.validate()?;
        if self.ingest_capacity == 0 || self.fanout_capacity == 0 {
            return Err(ServiceError::Config("queue capacities must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Handle {
    inputs: mpsc::Sender<SessionInput>,
    events: broadcast::Sender<Message>,
}

struct Shared {
    cfg: ServerConfig,
    sessions: Mutex<HashMap<String, Handle>>,
}

impl Shared {
    /// Subscribes to a session, starting it if needed, and queues the
    /// client's hello. A new session answers it before any batch.
    async fn join(self: &Arc<Self>, id: &str, reply: Reply) -> Result<(Handle, broadcast::Receiver<Message>), ServiceError> {
        let existing = {
            let sessions = self.sessions.lock().expect("session registry poisoned");
            sessions.get(id).map(|h| (h.clone(), h.events.subscribe()))
        };
        if let Some((handle, rx)) = existing {
            handle
                .inputs
                .send(SessionInput::Hello { reply })
                .await
                .map_err(|_| ServiceError::Config(format!("session `{id}` has ended")))?;
            return Ok((handle, rx));
        }
        self.start(id, reply)
    }

    fn start(self: &Arc<Self>, id: &str, reply: Reply) -> Result<(Handle, broadcast::Receiver<Message>), ServiceError> {
        let mut sessions = self.sessions.lock().expect("session registry poisoned");
        if let Some(h) = sessions.get(id) {
            // Another client started it meanwhile.
            let handle = h.clone();
            let rx = handle.events.subscribe();
            handle
                .inputs
                .try_send(SessionInput::Hello { reply })
                .map_err(|_| ServiceError::Config(format!("session `{id}` is busy")))?;
            return Ok((handle, rx));
        }
        let (events, rx) = broadcast::channel(self.cfg.fanout_capacity);
        let (inputs, input_rx) = mpsc::channel(self.cfg.ingest_capacity);
        let source = match self.cfg.source {
            Source::Replay(_) => SourceKind::Replay,
            Source::Live => SourceKind::Live,
        };
        let session = Session::new(id.to_owned(), source, self.cfg.clone(), events.clone())?;
        let handle = Handle { inputs, events };
        handle
            .inputs
            .try_send(SessionInput::Hello { reply })
            .expect("a fresh queue has room");
        sessions.insert(id.to_owned(), handle.clone());
        tracing::info!(session = id, ?source, "session started");
        let shared = Arc::clone(self);
        let id = id.to_owned();
        tokio::spawn(async move {
            match shared.cfg.source.clone() {
                Source::Replay(path) => run_replay(session, path, shared.cfg.clock, input_rx).await,
                Source::Live => run_live(session, input_rx).await,
            }
            shared.sessions.lock().expect("session registry poisoned").remove(&id);
            tracing::info!(session = id, "session closed");
        });
        Ok((handle, rx))
    }
}

async fn load(path: PathBuf, schema: ChannelSchema, policy: MissingDataPolicy) -> Result<Vec<FeatureFrame>, String> {
    tokio::task::spawn_blocking(move || {
        let file = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        parse_stream(std::io::BufReader::new(file), schema, &policy).map_err(|e| format!("{}: {e}", path.display()))
    })
    .await
    .map_err(|e| e.to_string())?
}

async fn run_replay(mut session: Session, path: PathBuf, mode: ClockMode, mut inputs: mpsc::Receiver<SessionInput>) {
    while let Ok(input) = inputs.try_recv() {
        session.handle(input);
    }
    let cfg = session.config();
    let frames = match load(path, cfg.schema, cfg.policy).await {
        Ok(f) => f,
        Err(e) => return session.fail(ErrorCode::Source, e),
    };
    let start = frames.first().map_or(0.0, |f| f.timestamp);
    let clock = SessionClock::new(mode, Instant::now(), start).expect("clock mode validated with the config");
    let mut frames = frames.into_iter().peekable();
    while let Some(next) = frames.peek() {
        let deadline = clock.deadline(next.timestamp);
        tokio::select! {
            biased;
            Some(input) = inputs.recv() => session.handle(input),
            _ = wait(deadline) => {
                let frame = frames.next().expect("peeked");
                session.ingest(frame);
            }
        }
        if session.ended() {
            return;
        }
    }
    session.finish();
}

async fn wait(deadline: Option<Instant>) {
    match deadline {
        Some(d) => tokio::time::sleep_until(d).await,
        None => tokio::task::yield_now().await,
    }
}

async fn run_live(mut session: Session, mut inputs: mpsc::Receiver<SessionInput>) {
    while let Some(input) = inputs.recv().await {
        session.handle(input);
        if session.ended() {
            return;
        }
    }
    session.finish();
}

/// A bound server. Sessions are created on first `hello`.
pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub async fn bind<A: ToSocketAddrs>(addr: A, cfg: ServerConfig) -> Result<Server, ServiceError> {
        cfg.validate()?;
        let listener = TcpListener::bind(addr).await?;
        Ok(Server {
            listener,
            shared: Arc::new(Shared {
                cfg,
                sessions: Mutex::new(HashMap::new()),
            }),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServiceError> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until the listener fails.
    pub async fn run(self) -> Result<(), ServiceError> {
        loop {
            let (stream, peer) = self.listener.accept().await?;
            let shared = Arc::clone(&self.shared);
            tokio::spawn(async move {
                tracing::debug!(%peer, "client connected");
                if let Err(e) = serve_connection(stream, shared).await {
                    tracing::debug!(%peer, error = %e, "connection closed with error");
                }
            });
        }
    }
}

struct Joined {
    id: String,
    inputs: mpsc::Sender<SessionInput>,
    events: Option<broadcast::Receiver<Message>>,
}

async fn next_event(joined: &mut Option<Joined>) -> Result<Message, RecvError> {
    match joined.as_mut().and_then(|j| j.events.as_mut()) {
        Some(rx) => rx.recv().await,
        None => std::future::pending().await,
    }
}

fn error_message(session: &str, code: ErrorCode, message: String, in_reply_to: Option<u64>) -> Message {
    Message::new(
        Kind::Error,
        session,
        0,
        &ErrorNotice {
            code,
            message,
            in_reply_to,
        },
    )
}

async fn serve_connection(stream: TcpStream, shared: Arc<Shared>) -> std::io::Result<()> {
    let (read, write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    let mut out = BufWriter::new(write);
    let (reply, mut replies) = mpsc::unbounded_channel::<Message>();
    let mut joined: Option<Joined> = None;
    loop {
        let msg = tokio::select! {
            biased;
            Some(msg) = replies.recv() => msg,
            line = lines.next_line() => match line? {
                Some(text) => {
                    if !text.trim().is_empty() {
                        handle_line(&text, &shared, &mut joined, &reply).await;
                    }
                    continue;
                }
                None => return Ok(()),
            },
            event = next_event(&mut joined) => match event {
                Ok(msg) => msg,
                Err(RecvError::Lagged(n)) => {
                    let id = joined.as_ref().map_or("", |j| j.id.as_str());
                    error_message(id, ErrorCode::Lagged, format!("{n} messages were dropped for this client"), None)
                }
                Err(RecvError::Closed) => {
                    if let Some(j) = joined.as_mut() {
                        j.events = None;
                    }
                    continue;
                }
            },
        };
        out.write_all(msg.to_line().as_bytes()).await?;
        out.flush().await?;
    }
}

async fn handle_line(text: &str, shared: &Arc<Shared>, joined: &mut Option<Joined>, reply: &Reply) {
    let fail = |code, message: String, seq| {
        let session = joined.as_ref().map_or(String::new(), |j| j.id.clone());
        let _ = reply.send(error_message(&session, code, message, seq));
    };
    let msg: Message = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => return fail(ErrorCode::Malformed, format!("unreadable message: {e}"), None),
    };
    let seq = Some(msg.seq);
    if msg.kind == Kind::Hello {
        if let Some(j) = joined.as_ref() {
            if j.id != msg.session {
                return fail(ErrorCode::UnexpectedKind, format!("already joined session `{}`", j.id), seq);
            }
        }
        if msg.session.is_empty() {
            return fail(ErrorCode::Malformed, "hello needs a session id".into(), seq);
        }
        let (handle, events) = match shared.join(&msg.session, reply.clone()).await {
            Ok(v) => v,
            Err(e) => return fail(ErrorCode::SessionEnded, e.to_string(), seq),
        };
        *joined = Some(Joined {
            id: msg.session,
            inputs: handle.inputs,
            events: Some(events),
        });
        return;
    }
    let Some(j) = joined.as_ref() else {
        return fail(ErrorCode::NoSession, "send hello first".into(), seq);
    };
    if msg.session != j.id {
        return fail(ErrorCode::NoSession, format!("this connection belongs to session `{}`", j.id), seq);
    }
    let input = match msg.kind {
        Kind::FrameIngest => {
            let input = SessionInput::Frame {
                payload: msg.payload,
                seq: msg.seq,
                reply: reply.clone(),
            };
            return match j.inputs.try_send(input) {
                Ok(()) => (),
                Err(mpsc::error::TrySendError::Full(_)) => {
                    fail(ErrorCode::Backpressure, "ingest queue is full; frame dropped".into(), seq)
                }
                Err(mpsc::error::TrySendError::Closed(_)) => fail(ErrorCode::SessionEnded, "session has ended".into(), seq),
            };
        }
        Kind::ThresholdSet => match msg.payload_as::<ThresholdSet>() {
            Ok(set) => SessionInput::Threshold {
                set,
                seq: msg.seq,
                reply: reply.clone(),
            },
            Err(e) => return fail(ErrorCode::Malformed, format!("bad threshold-set payload: {e}"), seq),
        },
        Kind::End => SessionInput::End {
            seq: msg.seq,
            reply: reply.clone(),
        },
        other => {
            let name = serde_json::to_string(&other).unwrap_or_default();
            return fail(ErrorCode::UnexpectedKind, format!("clients may not send {name}"), seq);
        }
    };
    if j.inputs.send(input).await.is_err() {
        fail(ErrorCode::SessionEnded, "session has ended".into(), seq);
    }
}
