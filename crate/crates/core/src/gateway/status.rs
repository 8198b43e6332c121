//! Status stream and icon input over WebSocket.
//!
//! Server to console, one JSON object per text frame, tagged by `type`:
//! `hello` (objects and selection state on connect), `status` (one per
//! control tick), `ack` / `reject` (reply to an input) and `disconnect`
//! (sent before the server drops a subscriber that fell behind).
//! Console to server: `{"type": "select", "icon": "<name>"}`.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::mission::{MissionState, TickReport};

use super::selection::{Icon, SelectionState, Selector};
use super::wire::WireMessage;

/// Frames queued per subscriber before it is considered too slow.
pub const DEFAULT_SUBSCRIBER_CAPACITY: usize = 1024;

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusEvent {
    pub mission: Option<String>,
    pub state: MissionState,
    pub phase: usize,
    pub phase_name: String,
    pub tick: u64,
    pub clock: f64,
    /// Controlled-frame position error (m).
    pub error_norm: f64,
    pub orientation_error: f64,
    /// Ids of active set-based tasks.
    pub active: Vec<String>,
    pub fault: Option<String>,
}

impl StatusEvent {
    pub fn from_report(mission: &str, r: &TickReport) -> Self {
        StatusEvent {
            mission: Some(mission.to_string()),
            state: r.status.state,
            phase: r.status.phase,
            phase_name: r.phase_name.clone(),
            tick: r.tick,
            clock: r.clock,
            error_norm: r.position_error,
            orientation_error: r.orientation_error,
            active: r.active.clone(),
            fault: r.status.fault.clone(),
        }
    }

    pub fn idle(tick: u64, clock: f64) -> Self {
        StatusEvent {
            mission: None,
            state: MissionState::Idle,
            phase: 0,
            phase_name: String::new(),
            tick,
            clock,
            error_norm: 0.0,
            orientation_error: 0.0,
            active: Vec::new(),
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        objects: Vec<String>,
        selection: SelectionState,
    },
    Status(StatusEvent),
    Ack {
        icon: String,
        selection: SelectionState,
        /// Wire message emitted by the transition, without the newline.
        sent: Option<String>,
    },
    Reject {
        icon: String,
        reason: String,
        selection: SelectionState,
    },
    Disconnect {
        reason: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Select { icon: String },
}

type WireSink = Box<dyn Fn(&WireMessage) + Send + Sync>;

struct Subscriber {
    id: u64,
    tx: SyncSender<String>,
}

struct HubInner {
    subscribers: Mutex<Vec<Subscriber>>,
    next_id: AtomicU64,
    capacity: usize,
    selector: Mutex<Selector>,
    sink: WireSink,
    overflows: AtomicU64,
}

/// Broadcasts status events and runs the selection state machine for
/// console inputs. Cheap to clone.
#[derive(Clone)]
pub struct StatusHub {
    inner: Arc<HubInner>,
}

impl StatusHub {
    /// `sink` receives every wire message produced by console selections.
    pub fn new(selector: Selector, capacity: usize, sink: impl Fn(&WireMessage) + Send + Sync + 'static) -> Self {
        StatusHub {
            inner: Arc::new(HubInner {
                subscribers: Mutex::new(Vec::new()),
                next_id: AtomicU64::new(0),
                capacity: capacity.max(1),
                selector: Mutex::new(selector),
                sink: Box::new(sink),
                overflows: AtomicU64::new(0),
            }),
        }
    }

    pub fn subscribe(&self) -> (u64, Receiver<String>) {
        let (tx, rx) = sync_channel(self.inner.capacity);
        let id = self.inner.next_id.fetch_add(1, Ordering::SeqCst);
        self.inner.subscribers.lock().expect("hub lock").push(Subscriber { id, tx });
        (id, rx)
    }

    pub fn unsubscribe(&self, id: u64) {
        self.inner.subscribers.lock().expect("hub lock").retain(|s| s.id != id);
    }

    pub fn subscriber_count(&self) -> usize {
        self.inner.subscribers.lock().expect("hub lock").len()
    }

    /// Subscribers dropped for falling behind so far.
    pub fn overflows(&self) -> u64 {
        self.inner.overflows.load(Ordering::SeqCst)
    }

    /// Never blocks: a subscriber whose queue is full is dropped.
    pub fn publish(&self, event: &StatusEvent) {
        let mut subs = self.inner.subscribers.lock().expect("hub lock");
        if subs.is_empty() {
            return;
        }
        let text = ServerMessage::Status(event.clone()).to_json();
        subs.retain(|s| match s.tx.try_send(text.clone()) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                self.inner.overflows.fetch_add(1, Ordering::SeqCst);
                log::warn!("status subscriber {} fell behind; disconnecting", s.id);
                false
            }
            Err(TrySendError::Disconnected(_)) => false,
        });
    }

    pub fn selection(&self) -> SelectionState {
        self.inner.selector.lock().expect("hub lock").state().clone()
    }

    pub fn hello(&self) -> ServerMessage {
        let sel = self.inner.selector.lock().expect("hub lock");
        ServerMessage::Hello {
            objects: sel.objects().iter().cloned().collect(),
            selection: sel.state().clone(),
        }
    }

    /// Applies one console input and returns the reply.
    pub fn handle_input(&self, text: &str) -> ServerMessage {
        let msg: ClientMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => {
                return ServerMessage::Reject {
                    icon: String::new(),
                    reason: format!("unreadable input: {e}"),
                    selection: self.selection(),
                }
            }
        };
        let ClientMessage::Select { icon } = msg;
        let mut sel = self.inner.selector.lock().expect("hub lock");
        match sel.select(&Icon::parse(&icon)) {
            Ok(wire) => {
                if let Some(w) = &wire {
                    (self.inner.sink)(w);
                }
                ServerMessage::Ack {
                    icon,
                    selection: sel.state().clone(),
                    sent: wire.map(|w| w.to_string()),
                }
            }
            Err(e) => ServerMessage::Reject {
                icon,
                reason: e.to_string(),
                selection: sel.state().clone(),
            },
        }
    }

    /// Accepts WebSocket connections on `addr` in a background thread.
    pub fn serve(&self, addr: impl ToSocketAddrs) -> io::Result<StatusServer> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let hub = self.clone();
        let flag = shutdown.clone();
        let thread = std::thread::Builder::new().name("status-hub".into()).spawn(move || {
            let mut conns = Vec::new();
            while !flag.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        let hub = hub.clone();
                        let flag = flag.clone();
                        let spawned = std::thread::Builder::new()
                            .name(format!("status-{peer}"))
                            .spawn(move || {
                                if let Err(e) = hub.connection(stream, &flag) {
                                    log::debug!("status connection {peer} ended: {e}");
                                }
                            });
                        match spawned {
                            Ok(h) => conns.push(h),
                            Err(e) => log::warn!("cannot serve {peer}: {e}"),
                        }
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
                    Err(e) => log::warn!("status accept error: {e}"),
                }
            }
            for c in conns {
                let _ = c.join();
            }
        })?;
        Ok(StatusServer {
            local_addr,
            shutdown,
            thread: Some(thread),
        })
    }

    fn connection(&self, stream: TcpStream, shutdown: &AtomicBool) -> Result<(), tungstenite::Error> {
        stream.set_nonblocking(false)?;
        let mut ws = tungstenite::accept(stream).map_err(|e| match e {
            tungstenite::HandshakeError::Failure(e) => e,
            tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
        })?;
        ws.get_ref().set_read_timeout(Some(POLL))?;
        let (id, rx) = self.subscribe();
        let result = self.pump(&mut ws, &rx, shutdown);
        self.unsubscribe(id);
        let _ = ws.close(None);
        let _ = ws.flush();
        result
    }

    fn pump(&self, ws: &mut WebSocket<TcpStream>, rx: &Receiver<String>, shutdown: &AtomicBool) -> Result<(), tungstenite::Error> {
        ws.send(Message::text(self.hello().to_json()))?;
        while !shutdown.load(Ordering::SeqCst) {
            loop {
                match rx.try_recv() {
                    Ok(text) => ws.send(Message::text(text))?,
                    Err(std::sync::mpsc::TryRecvError::Empty) => break,
                    Err(std::sync::mpsc::TryRecvError::Disconnected) => {
                        let bye = ServerMessage::Disconnect {
                            reason: "subscriber overflow".into(),
                        };
                        ws.send(Message::text(bye.to_json()))?;
                        return Ok(());
                    }
                }
            }
            match ws.read() {
                Ok(Message::Text(t)) => ws.send(Message::text(self.handle_input(t.as_str()).to_json()))?,
                Ok(Message::Close(_)) => return Ok(()),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(e) => return Err(e),
            }
        }
        while let Ok(text) = rx.try_recv() {
            ws.send(Message::text(text))?;
        }
        let bye = ServerMessage::Disconnect {
            reason: "server shutting down".into(),
        };
        ws.send(Message::text(bye.to_json()))
    }
}

pub struct StatusServer {
    pub local_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl StatusServer {
    pub fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for StatusServer {
    fn drop(&mut self) {
        self.stop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::mpsc::channel;

    fn hub(capacity: usize) -> (StatusHub, Receiver<WireMessage>) {
        let (tx, rx) = channel();
        let tx = Mutex::new(tx);
        let selector = Selector::new(["water".to_string(), "coke".to_string()]).unwrap();
        let hub = StatusHub::new(selector, capacity, move |m| {
            tx.lock().unwrap().send(m.clone()).unwrap();
        });
        (hub, rx)
    }

    fn event(tick: u64) -> StatusEvent {
        StatusEvent::idle(tick, tick as f64 * 0.01)
    }

    #[test]
    fn slow_subscriber_is_dropped_not_waited_for() {
        let (hub, _) = hub(2);
        let (_, slow) = hub.subscribe();
        let (_, fast) = hub.subscribe();
        for t in 0..2 {
            hub.publish(&event(t));
            fast.recv().unwrap();
        }
        hub.publish(&event(2));
        assert_eq!(hub.subscriber_count(), 1);
        assert_eq!(hub.overflows(), 1);
        assert_eq!(slow.try_iter().count(), 2);
        assert!(fast.recv().unwrap().contains("\"tick\":2"));
    }

    #[test]
    fn inputs_are_acked_or_rejected() {
        let (hub, wire) = hub(8);
        let reply = hub.handle_input(r#"{"type":"select","icon":"drink"}"#).to_json();
        assert!(reply.contains("\"type\":\"reject\""), "{reply}");
        hub.handle_input(r#"{"type":"select","icon":"water"}"#);
        let reply = hub.handle_input(r#"{"type":"select","icon":"drink"}"#).to_json();
        assert!(reply.contains("\"sent\":\"1 CMD water drink none\""), "{reply}");
        assert!(reply.contains("\"layer\":\"control_layer\""), "{reply}");
        assert_eq!(wire.try_iter().map(|m| m.to_string()).collect::<Vec<_>>(), ["1 CMD water drink none"]);
        assert!(hub.handle_input("garbage").to_json().contains("reject"));
    }

    #[test]
    fn websocket_session() {
        let (hub, wire) = hub(64);
        let mut server = hub.serve("127.0.0.1:0").unwrap();
        let url = format!("ws://{}", server.local_addr);
        let (mut client, _) = tungstenite::connect(url).unwrap();
        let mut next = || loop {
            if let Message::Text(t) = client.read().unwrap() {
                return serde_json::from_str::<serde_json::Value>(t.as_str()).unwrap();
            }
        };
        let hello = next();
        assert_eq!(hello["type"], "hello");
        assert_eq!(hello["objects"], serde_json::json!(["coke", "water"]));
        while hub.subscriber_count() == 0 {
            std::thread::sleep(POLL);
        }
        hub.publish(&event(5));
        let status = next();
        assert_eq!((status["type"].as_str(), status["tick"].as_u64()), (Some("status"), Some(5)));
        drop(next);
        client
            .send(Message::text(r#"{"type":"select","icon":"emergency"}"#))
            .unwrap();
        let ack = loop {
            if let Message::Text(t) = client.read().unwrap() {
                break serde_json::from_str::<serde_json::Value>(t.as_str()).unwrap();
            }
        };
        assert_eq!(ack["type"], "ack");
        assert_eq!(ack["sent"], "1 STOP");
        assert_eq!(wire.recv_timeout(Duration::from_secs(5)).unwrap(), WireMessage::Stop);
        server.stop();
    }
}
