//! Listen mode: the controller waits for operator commands on the datagram
//! endpoint and runs one mission at a time, publishing status as it goes.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gateway::{Selector, StatusEvent, StatusHub, UdpReceiver, UdpSender, DEFAULT_SUBSCRIBER_CAPACITY};
use crate::mission::{ChannelInbox, Directive, MissionSummary, TickReport};

use super::{run_command, write_artifacts, Setup};

const IDLE_POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, PartialEq)]
pub struct ListenOptions {
    pub host: String,
    /// Datagram port; 0 picks a free one.
    pub port: u16,
    /// WebSocket status port; `None` disables the status stream.
    pub status_port: Option<u16>,
    /// Simulated seconds per wall second; 0 runs as fast as possible.
    pub realtime: f64,
    /// Return after this many missions.
    pub max_missions: Option<usize>,
}

impl Default for ListenOptions {
    fn default() -> Self {
        ListenOptions {
            host: "127.0.0.1".into(),
            port: 0,
            status_port: None,
            realtime: 1.0,
            max_missions: None,
        }
    }
}

/// Where the controller can be reached once it is up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoints {
    pub udp: SocketAddr,
    pub status: Option<SocketAddr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServeReport {
    pub missions: Vec<MissionSummary>,
    pub datagrams: u64,
    pub dropped: u64,
}

fn io_err(what: &str, e: std::io::Error) -> Error {
    Error::Io {
        path: what.into(),
        message: e.to_string(),
    }
}

/// Runs until `shutdown` is set or `max_missions` missions have ended.
///
/// Console selections on the status channel are rendered to datagrams and
/// sent to the controller's own endpoint, so every command takes the same
/// wire path. The world carries over from one mission to the next.
pub fn serve(
    setup: Setup,
    opts: &ListenOptions,
    seed: u64,
    out: Option<&Path>,
    shutdown: Arc<AtomicBool>,
    ready: impl FnOnce(&Endpoints),
) -> Result<ServeReport> {
    let (tx, rx) = channel();
    let mut receiver = UdpReceiver::spawn((opts.host.as_str(), opts.port), tx).map_err(|e| io_err("udp endpoint", e))?;
    let loopback = match receiver.local_addr {
        SocketAddr::V4(a) if a.ip().is_unspecified() => SocketAddr::from(([127, 0, 0, 1], a.port())),
        a => a,
    };
    let sender = Mutex::new(UdpSender::new(loopback).map_err(|e| io_err("udp sender", e))?);
    let selector = Selector::new(setup.world.objects.keys().cloned())?;
    let hub = StatusHub::new(selector, DEFAULT_SUBSCRIBER_CAPACITY, move |m| {
        if let Err(e) = sender.lock().expect("sender lock").send(m) {
            log::warn!("cannot forward '{m}': {e}");
        }
    });
    let mut server = match opts.status_port {
        Some(p) => Some(hub.serve((opts.host.as_str(), p)).map_err(|e| io_err("status endpoint", e))?),
        None => None,
    };
    ready(&Endpoints {
        udp: receiver.local_addr,
        status: server.as_ref().map(|s| s.local_addr),
    });

    let mut setup = setup;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut missions = Vec::new();
    hub.publish(&StatusEvent::idle(setup.world.tick, setup.world.clock));
    while !shutdown.load(Ordering::SeqCst) && opts.max_missions.is_none_or(|m| missions.len() < m) {
        let command = match rx.recv_timeout(IDLE_POLL) {
            Ok(Directive::Start(c)) => c,
            Ok(Directive::Stop) => {
                log::info!("stop while idle: nothing to stop");
                continue;
            }
            Ok(Directive::Home) => {
                log::info!("home acknowledged");
                continue;
            }
            Ok(d) => {
                log::warn!("{d:?} ignored: no mission is running");
                continue;
            }
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => break,
        };
        log::info!("starting '{command}'");
        let started = Instant::now();
        let label = command.to_string();
        let mut publish = |r: &TickReport| {
            hub.publish(&StatusEvent::from_report(&label, r));
            if opts.realtime > 0.0 {
                let due = started + Duration::from_secs_f64(r.clock / opts.realtime);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
            }
        };
        let outcome = match run_command(&setup, &command, &mut rng, &mut ChannelInbox(&rx), Some(&mut publish)) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("rejected '{command}': {e}");
                continue;
            }
        };
        log::info!("'{command}' ended {}", outcome.status.state);
        if let Some(dir) = out {
            let dir = dir.join(format!("mission_{:03}", missions.len() + 1));
            if let Err(e) = write_artifacts(&dir, &outcome) {
                log::warn!("cannot write artifacts: {e}");
            }
        }
        setup.world = outcome.world.clone();
        // Objects left in hand stay attached; the next mission starts clean.
        setup.world.attachment = None;
        missions.push(outcome.summary);
        hub.publish(&StatusEvent::idle(setup.world.tick, setup.world.clock));
    }

    if let Some(s) = server.as_mut() {
        s.stop();
    }
    receiver.stop();
    Ok(ServeReport {
        missions,
        datagrams: receiver.stats.received(),
        dropped: receiver.stats.dropped(),
    })
}
