//! Drives a controller in listen mode with raw datagrams: a malformed one,
//! a command, a pause/resume pair and a stop.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use assistive_arm::gateway::{UdpSender, WireMessage};
use assistive_arm::harness::{serve, ListenOptions, Setup};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = ListenOptions {
        realtime: 10.0,
        max_missions: Some(1),
        ..ListenOptions::default()
    };
    let shutdown = Arc::new(AtomicBool::new(false));
    let (ready_tx, ready_rx) = mpsc::channel();
    let flag = shutdown.clone();
    let controller = std::thread::spawn(move || {
        serve(Setup::reference(), &opts, 7, None, flag, |ep| ready_tx.send(ep.udp).unwrap())
    });
    let addr = ready_rx.recv()?;
    println!("controller on udp://{addr}");

    let tx = UdpSender::new(addr)?;
    tx.send_raw(b"1 CMD wat")?;
    let script = [
        ("1 CMD water move right\n", 300),
        ("1 PAUSE\n", 300),
        ("1 RESUME\n", 300),
        ("1 STOP\n", 0),
        ("1 STOP\n", 0),
    ];
    for (text, wait) in script {
        let msg = WireMessage::parse(text.as_bytes())?;
        print!("send {}", msg.render());
        tx.send(&msg)?;
        std::thread::sleep(Duration::from_millis(wait));
    }

    std::thread::sleep(Duration::from_millis(200));
    shutdown.store(true, Ordering::SeqCst);
    let report = controller.join().expect("controller thread")?;
    for m in &report.missions {
        println!("{}: {} at t={:.2} s", m.command, m.state, m.sim_time);
    }
    println!("{} datagrams, {} dropped", report.datagrams, report.dropped);
    Ok(())
}
