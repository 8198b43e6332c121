use std::collections::{BTreeSet, HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use assistive_arm::gateway::{
    select, Icon, Layer, SelectionState, Selector, ServerMessage, StatusHub, WireError, WireMessage, MAX_DATAGRAM,
};
use assistive_arm::mission::{Action, MissionCommand, SubAction};
use proptest::prelude::*;

fn object_id() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_-]{1,64}"
}

fn wire_message() -> impl Strategy<Value = WireMessage> {
    prop_oneof![
        (object_id(), prop_oneof![Just(SubAction::Left), Just(SubAction::Right)])
            .prop_map(|(o, s)| WireMessage::Cmd(MissionCommand::new(o, Action::Move, s))),
        object_id().prop_map(|o| WireMessage::Cmd(MissionCommand::new(o, Action::Drink, SubAction::None))),
        Just(WireMessage::Stop),
        Just(WireMessage::Pause),
        Just(WireMessage::Resume),
        Just(WireMessage::Home),
    ]
}

/// Independent rendering of the grammar.
fn expected_text(m: &WireMessage) -> String {
    match m {
        WireMessage::Cmd(c) => {
            let a = match c.action {
                Action::Move => "move",
                Action::Drink => "drink",
            };
            let s = match c.sub_action {
                SubAction::Left => "left",
                SubAction::Right => "right",
                SubAction::None => "none",
            };
            format!("1 CMD {} {a} {s}\n", c.object)
        }
        WireMessage::Stop => "1 STOP\n".into(),
        WireMessage::Pause => "1 PAUSE\n".into(),
        WireMessage::Resume => "1 RESUME\n".into(),
        WireMessage::Home => "1 HOME\n".into(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn wire_round_trip(m in wire_message()) {
        let text = m.render();
        prop_assert_eq!(&text, &expected_text(&m));
        prop_assert!(text.len() <= MAX_DATAGRAM);
        prop_assert_eq!(WireMessage::parse(text.as_bytes()).unwrap(), m.clone());
        // the trailing newline is optional
        prop_assert_eq!(WireMessage::parse(text.trim_end().as_bytes()).unwrap(), m);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..600)) {
        let _ = WireMessage::parse(&bytes);
    }

    #[test]
    fn mutated_messages_either_parse_to_valid_or_fail(m in wire_message(), at in any::<prop::sample::Index>(), b in any::<u8>()) {
        let mut bytes = m.render().into_bytes();
        let i = at.index(bytes.len());
        bytes[i] = b;
        if let Ok(parsed) = WireMessage::parse(&bytes) {
            prop_assert!(parsed.validate().is_ok());
            prop_assert_eq!(WireMessage::parse(parsed.render().as_bytes()).unwrap(), parsed);
        }
    }
}

#[test]
fn malformed_examples() {
    let cases: &[(&[u8], fn(&WireError) -> bool)] = &[
        (b"", |e| matches!(e, WireError::Empty)),
        (b"2 STOP", |e| matches!(e, WireError::Version(_))),
        (b"1 JUMP", |e| matches!(e, WireError::UnknownType(_))),
        (b"1 CMD wat", |e| matches!(e, WireError::Malformed { .. })),
        (b"1 CMD water move none", |e| matches!(e, WireError::Malformed { .. })),
        (b"1 CMD water drink left", |e| matches!(e, WireError::Malformed { .. })),
        (b"1 STOP now", |e| matches!(e, WireError::Malformed { .. })),
        (b"1  STOP", |e| matches!(e, WireError::Malformed { .. })),
        (b"1 STOP\n\n", |e| matches!(e, WireError::Malformed { .. } | WireError::NotAscii)),
        (b"1 CMD w\xc3\xa4ter move left", |e| matches!(e, WireError::NotAscii)),
    ];
    for (bytes, check) in cases {
        let err = WireMessage::parse(bytes).unwrap_err();
        assert!(check(&err), "{:?}: {err:?}", String::from_utf8_lossy(bytes));
    }
    let long = format!("1 CMD {} move left", "a".repeat(600));
    assert!(matches!(WireMessage::parse(long.as_bytes()), Err(WireError::TooLong(_))));
    let id65 = format!("1 CMD {} move left", "a".repeat(65));
    assert!(WireMessage::parse(id65.as_bytes()).is_err());
}

/// Expected successor layer and message of one transition, or `None` for a
/// rejection.
fn table(state: &SelectionState, icon: &str, objects: &BTreeSet<String>) -> Option<(Layer, Option<String>)> {
    use Layer::*;
    let obj = state.object.clone().unwrap_or_default();
    Some(match (state.layer, icon) {
        (l, "emergency") => (l, Some("1 STOP".into())),
        (ObjectSelection, o) if objects.contains(o) => (ActionSelection, None),
        (ObjectSelection | ActionSelection, "pause") => (state.layer, Some("1 PAUSE".into())),
        (ActionSelection, "drink") => (ControlLayer, Some(format!("1 CMD {obj} drink none"))),
        (ActionSelection, "move") => (SubactionSelection, None),
        (ActionSelection, "back") => (ObjectSelection, None),
        (SubactionSelection, s @ ("left" | "right")) => (ControlLayer, Some(format!("1 CMD {obj} move {s}"))),
        (ControlLayer, "play") => (ControlLayer, Some("1 RESUME".into())),
        (ControlLayer, "stop") => (ControlLayer, Some("1 STOP".into())),
        (ControlLayer, "home") => (ObjectSelection, Some("1 HOME".into())),
        (ControlLayer, "back1") => match state.action {
            Some(Action::Move) => (SubactionSelection, None),
            _ => (ActionSelection, None),
        },
        _ => return None,
    })
}

#[test]
fn selection_graph_exhaustive() {
    let objects: BTreeSet<String> = ["water", "coke", "juice"].iter().map(|s| s.to_string()).collect();
    let mut icons: Vec<String> = Icon::keywords().map(|i| i.name().to_string()).collect();
    icons.extend(objects.iter().cloned());
    icons.push("milk".into());
    icons.push(String::new());

    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([SelectionState::default()]);
    let mut transitions = 0;
    let mut rejections = 0;
    while let Some(state) = queue.pop_front() {
        if !seen.insert(state.clone()) {
            continue;
        }
        let offered: BTreeSet<String> = Selector::new(objects.iter().cloned())
            .unwrap()
            .icons(state.layer)
            .iter()
            .map(|i| i.name().to_string())
            .collect();
        assert!(offered.contains("emergency"));
        for name in &icons {
            let got = select(&state, &Icon::parse(name), &objects);
            match (table(&state, name, &objects), got) {
                (Some((layer, msg)), Ok((next, wire))) => {
                    transitions += 1;
                    assert_eq!(next.layer, layer, "{state:?} --{name}-->");
                    assert_eq!(wire.as_ref().map(|w| w.to_string()), msg, "{state:?} --{name}-->");
                    if let Some(w) = &wire {
                        assert_eq!(WireMessage::parse(w.render().as_bytes()).unwrap(), *w);
                    }
                    assert!(offered.contains(name), "{name} accepted but not offered on {:?}", state.layer);
                    if name == "emergency" {
                        assert_eq!(next, state);
                    }
                    queue.push_back(next);
                }
                (None, Err(r)) => {
                    rejections += 1;
                    assert_eq!(r.layer, state.layer);
                    assert!(!offered.contains(name), "{name} offered but rejected on {:?}", state.layer);
                }
                (want, got) => panic!("{state:?} --{name}-->: expected {want:?}, got {got:?}"),
            }
        }
    }
    // 1 object layer + 3 action + 3 subaction + 3 drink controls + 6 move controls
    assert_eq!(seen.len(), 16);
    assert!(transitions > 0 && rejections > 0);
}

#[test]
fn console_replay_object_drink_stop() {
    let sent = Arc::new(Mutex::new(Vec::new()));
    let log = sent.clone();
    let hub = StatusHub::new(
        Selector::new(["water".to_string(), "coke".to_string()]).unwrap(),
        8,
        move |m| log.lock().unwrap().push(m.to_string()),
    );
    let mut acks = 0;
    for icon in ["water", "drink", "left", "stop", "emergency"] {
        let reply = hub.handle_input(&format!(r#"{{"type":"select","icon":"{icon}"}}"#));
        match reply {
            ServerMessage::Ack { sent: s, .. } => {
                acks += 1;
                assert_eq!(s.is_some(), icon != "water");
            }
            ServerMessage::Reject { .. } => assert_eq!(icon, "left"),
            other => panic!("{other:?}"),
        }
    }
    assert_eq!(acks, 4);
    assert_eq!(*sent.lock().unwrap(), ["1 CMD water drink none", "1 STOP", "1 STOP"]);
    assert!(matches!(hub.handle_input("{\"type\":\"shout\"}"), ServerMessage::Reject { .. }));
    assert!(matches!(hub.handle_input("not json"), ServerMessage::Reject { .. }));
}

#[test]
fn keyword_objects_are_refused() {
    assert!(Selector::new(["stop".to_string()]).is_err());
    assert!(Selector::new(["bad id".to_string()]).is_err());
}
