//! A scripted console session over the WebSocket status channel against a
//! controller in listen mode: pick water, pick drink, watch a few status
//! events, then hit the emergency icon.

use std::sync::atomic::AtomicBool;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use assistive_arm::harness::{serve, ListenOptions, Setup};
use serde_json::{json, Value};
use tungstenite::Message;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = ListenOptions {
        status_port: Some(0),
        realtime: 4.0,
        max_missions: Some(1),
        ..ListenOptions::default()
    };
    let (ready_tx, ready_rx) = mpsc::channel();
    let controller = std::thread::spawn(move || {
        serve(Setup::reference(), &opts, 7, None, Arc::new(AtomicBool::new(false)), |ep| {
            ready_tx.send(*ep).unwrap();
        })
    });
    let endpoints = ready_rx.recv()?;
    let status = endpoints.status.expect("status channel enabled");
    let (mut ws, _) = tungstenite::connect(format!("ws://{status}"))?;

    let next = |ws: &mut tungstenite::WebSocket<_>| -> Result<Value, Box<dyn std::error::Error>> {
        loop {
            if let Message::Text(t) = ws.read()? {
                return Ok(serde_json::from_str(&t)?);
            }
        }
    };
    println!("<- {}", next(&mut ws)?);

    for icon in ["water", "drink"] {
        ws.send(Message::text(json!({"type": "select", "icon": icon}).to_string()))?;
        loop {
            let m = next(&mut ws)?;
            if m["type"] != "status" {
                println!("-> {icon}: {} layer={} sent={}", m["type"], m["selection"]["layer"], m["sent"]);
                break;
            }
        }
    }

    let mut seen = 0;
    loop {
        let m = next(&mut ws)?;
        if m["type"] == "status" && m["state"] == "running" {
            seen += 1;
            if seen % 25 == 0 {
                println!("<- t={:.2} phase={} err={:.4}", m["clock"].as_f64().unwrap_or(0.0), m["phase_name"], m["error_norm"]);
            }
            if seen == 150 {
                break;
            }
        }
    }

    ws.send(Message::text(json!({"type": "select", "icon": "emergency"}).to_string()))?;
    loop {
        let m = next(&mut ws)?;
        if m["type"] == "ack" {
            println!("-> emergency: sent={}", m["sent"]);
        }
        if m["type"] == "status" && m["state"] == "stopped_emergency" {
            println!("<- t={:.2} {}", m["clock"].as_f64().unwrap_or(0.0), m["state"]);
            break;
        }
    }
    std::thread::sleep(Duration::from_millis(50));
    let report = controller.join().expect("controller thread")?;
    println!(
        "controller: {} mission(s), {} datagrams, {} dropped",
        report.missions.len(),
        report.datagrams,
        report.dropped
    );
    Ok(())
}
