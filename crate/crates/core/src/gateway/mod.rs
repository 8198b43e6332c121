//! Operator command path: icon selection, the datagram wire format toward
//! the controller, and the status stream back to the console.

pub mod selection;
pub mod status;
pub mod udp;
pub mod wire;

pub use selection::{select, Icon, Layer, Rejected, SelectionState, Selector};
pub use status::{ClientMessage, ServerMessage, StatusEvent, StatusHub, StatusServer, DEFAULT_SUBSCRIBER_CAPACITY};
pub use udp::{handle_datagram, GatewayStats, UdpReceiver, UdpSender};
pub use wire::{validate_object_id, WireError, WireMessage, MAX_DATAGRAM, MAX_OBJECT_ID, WIRE_VERSION};
