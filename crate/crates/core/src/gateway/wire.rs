//! Datagram wire format toward the controller.
//!
//! One ASCII line per datagram: `<version> <type> [<payload>]\n`, fields
//! separated by single spaces. The version is the literal `1`; types are
//! `CMD`, `STOP`, `PAUSE`, `RESUME` and `HOME`. A `CMD` payload is
//! `<object_id> <action> <sub_action>`. The trailing newline is optional on
//! input and always written on output.

use std::fmt;

use crate::mission::{Action, Directive, MissionCommand, SubAction};

pub const WIRE_VERSION: &str = "1";
pub const MAX_DATAGRAM: usize = 512;
pub const MAX_OBJECT_ID: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum WireMessage {
    Cmd(MissionCommand),
    Stop,
    Pause,
    Resume,
    Home,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("datagram of {0} bytes exceeds {MAX_DATAGRAM}")]
    TooLong(usize),
    #[error("datagram is empty")]
    Empty,
    #[error("datagram is not printable ASCII")]
    NotAscii,
    #[error("unsupported version '{0}'")]
    Version(String),
    #[error("unknown message type '{0}'")]
    UnknownType(String),
    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },
}

fn malformed(what: &'static str, reason: impl Into<String>) -> WireError {
    WireError::Malformed {
        what,
        reason: reason.into(),
    }
}

/// Object ids are 1 to 64 characters of `[A-Za-z0-9_-]`.
pub fn validate_object_id(id: &str) -> Result<(), WireError> {
    let ok = !id.is_empty()
        && id.len() <= MAX_OBJECT_ID
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
    if ok {
        Ok(())
    } else {
        Err(malformed("object id", format!("'{id}'")))
    }
}

impl WireMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            WireMessage::Cmd(_) => "CMD",
            WireMessage::Stop => "STOP",
            WireMessage::Pause => "PAUSE",
            WireMessage::Resume => "RESUME",
            WireMessage::Home => "HOME",
        }
    }

    pub fn render(&self) -> String {
        match self {
            WireMessage::Cmd(c) => format!("{WIRE_VERSION} CMD {} {} {}\n", c.object, c.action, c.sub_action),
            other => format!("{WIRE_VERSION} {}\n", other.type_name()),
        }
    }

    /// Checks the message can be rendered within the grammar.
    pub fn validate(&self) -> Result<(), WireError> {
        if let WireMessage::Cmd(c) = self {
            validate_object_id(&c.object)?;
            c.validate().map_err(|e| malformed("command", e.to_string()))?;
        }
        Ok(())
    }

    pub fn parse(datagram: &[u8]) -> Result<WireMessage, WireError> {
        if datagram.len() > MAX_DATAGRAM {
            return Err(WireError::TooLong(datagram.len()));
        }
        let line = datagram.strip_suffix(b"\n").unwrap_or(datagram);
        if line.is_empty() {
            return Err(WireError::Empty);
        }
        if !line.iter().all(|b| (0x20..0x7f).contains(b)) {
            return Err(WireError::NotAscii);
        }
        let line = std::str::from_utf8(line).expect("printable ASCII is UTF-8");
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.iter().any(|f| f.is_empty()) {
            return Err(malformed("line", "fields must be separated by single spaces"));
        }
        if fields[0] != WIRE_VERSION {
            return Err(WireError::Version(fields[0].to_string()));
        }
        let Some(&kind) = fields.get(1) else {
            return Err(malformed("line", "missing message type"));
        };
        let payload = &fields[2..];
        let bare = |m: WireMessage| {
            if payload.is_empty() {
                Ok(m)
            } else {
                Err(malformed("line", format!("{kind} takes no payload")))
            }
        };
        match kind {
            "STOP" => bare(WireMessage::Stop),
            "PAUSE" => bare(WireMessage::Pause),
            "RESUME" => bare(WireMessage::Resume),
            "HOME" => bare(WireMessage::Home),
            "CMD" => {
                let [object, action, sub] = payload else {
                    return Err(malformed("CMD payload", "expected '<object_id> <action> <sub_action>'"));
                };
                validate_object_id(object)?;
                let action: Action = action.parse().map_err(|e: crate::Error| malformed("action", e.to_string()))?;
                let sub: SubAction = sub.parse().map_err(|e: crate::Error| malformed("sub-action", e.to_string()))?;
                let cmd = MissionCommand::new(*object, action, sub);
                cmd.validate().map_err(|e| malformed("CMD payload", e.to_string()))?;
                Ok(WireMessage::Cmd(cmd))
            }
            other => Err(WireError::UnknownType(other.to_string())),
        }
    }
}

impl fmt::Display for WireMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.render().trim_end())
    }
}

impl From<WireMessage> for Directive {
    fn from(m: WireMessage) -> Directive {
        match m {
            WireMessage::Cmd(c) => Directive::Start(c),
            WireMessage::Stop => Directive::Stop,
            WireMessage::Pause => Directive::Pause,
            WireMessage::Resume => Directive::Resume,
            WireMessage::Home => Directive::Home,
        }
    }
}
