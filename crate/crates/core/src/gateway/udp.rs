//! Datagram endpoint feeding the controller inbox.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crate::mission::Directive;

use super::wire::{WireMessage, MAX_DATAGRAM};

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Default)]
pub struct GatewayStats {
    pub received: AtomicU64,
    pub accepted: AtomicU64,
    pub dropped: AtomicU64,
}

impl GatewayStats {
    pub fn received(&self) -> u64 {
        self.received.load(Ordering::SeqCst)
    }

    pub fn accepted(&self) -> u64 {
        self.accepted.load(Ordering::SeqCst)
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::SeqCst)
    }
}

/// Parses one datagram and forwards it; malformed input only bumps the
/// drop counter.
pub fn handle_datagram(bytes: &[u8], inbox: &Sender<Directive>, stats: &GatewayStats) -> Option<WireMessage> {
    stats.received.fetch_add(1, Ordering::SeqCst);
    match WireMessage::parse(bytes) {
        Ok(msg) => {
            stats.accepted.fetch_add(1, Ordering::SeqCst);
            log::debug!("datagram: {msg}");
            // A closed inbox means the controller is shutting down.
            let _ = inbox.send(msg.clone().into());
            Some(msg)
        }
        Err(e) => {
            stats.dropped.fetch_add(1, Ordering::SeqCst);
            log::warn!("dropped datagram ({} bytes): {e}", bytes.len());
            None
        }
    }
}

pub struct UdpReceiver {
    pub local_addr: SocketAddr,
    pub stats: Arc<GatewayStats>,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl UdpReceiver {
    /// Binds `addr` and forwards every valid datagram into `inbox` from a
    /// background thread.
    pub fn spawn(addr: impl ToSocketAddrs, inbox: Sender<Directive>) -> io::Result<Self> {
        let socket = UdpSocket::bind(addr)?;
        socket.set_read_timeout(Some(POLL))?;
        let local_addr = socket.local_addr()?;
        let stats = Arc::new(GatewayStats::default());
        let shutdown = Arc::new(AtomicBool::new(false));
        let thread = {
            let stats = stats.clone();
            let shutdown = shutdown.clone();
            std::thread::Builder::new().name("udp-gateway".into()).spawn(move || {
                // Oversized datagrams must be seen as oversized, not truncated
                // to something parseable.
                let mut buf = vec![0u8; MAX_DATAGRAM + 1];
                while !shutdown.load(Ordering::SeqCst) {
                    match socket.recv_from(&mut buf) {
                        Ok((n, _)) => {
                            handle_datagram(&buf[..n], &inbox, &stats);
                        }
                        Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                        Err(e) => {
                            // Some platforms report ICMP errors here; keep going.
                            log::warn!("udp receive error: {e}");
                        }
                    }
                }
            })?
        };
        Ok(UdpReceiver {
            local_addr,
            stats,
            shutdown,
            thread: Some(thread),
        })
    }

    pub fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for UdpReceiver {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Sends rendered messages to a controller endpoint.
pub struct UdpSender {
    socket: UdpSocket,
    target: SocketAddr,
}

impl UdpSender {
    pub fn new(target: SocketAddr) -> io::Result<Self> {
        let bind: SocketAddr = if target.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }.parse().expect("literal address");
        Ok(UdpSender {
            socket: UdpSocket::bind(bind)?,
            target,
        })
    }

    pub fn send(&self, msg: &WireMessage) -> io::Result<()> {
        msg.validate()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        self.socket.send_to(msg.render().as_bytes(), self.target).map(|_| ())
    }

    pub fn send_raw(&self, bytes: &[u8]) -> io::Result<()> {
        self.socket.send_to(bytes, self.target).map(|_| ())
    }
}
