//! The layered icon-selection state machine of the operator interface.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mission::{Action, MissionCommand, SubAction};

use super::wire::{validate_object_id, WireMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    ObjectSelection,
    ActionSelection,
    SubactionSelection,
    ControlLayer,
}

impl Layer {
    pub const ALL: [Layer; 4] = [
        Layer::ObjectSelection,
        Layer::ActionSelection,
        Layer::SubactionSelection,
        Layer::ControlLayer,
    ];
}

/// A selectable icon. Object icons carry the object id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Icon {
    Object(String),
    Pause,
    Emergency,
    Drink,
    Move,
    Back,
    Left,
    Right,
    Play,
    Stop,
    Home,
    /// Back by one layer, from the control layer.
    BackOne,
}

const KEYWORDS: [(&str, Icon); 11] = [
    ("pause", Icon::Pause),
    ("emergency", Icon::Emergency),
    ("drink", Icon::Drink),
    ("move", Icon::Move),
    ("back", Icon::Back),
    ("left", Icon::Left),
    ("right", Icon::Right),
    ("play", Icon::Play),
    ("stop", Icon::Stop),
    ("home", Icon::Home),
    ("back1", Icon::BackOne),
];

impl Icon {
    /// Parses an icon name; anything that is not a keyword names an object.
    pub fn parse(name: &str) -> Icon {
        KEYWORDS
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, i)| i.clone())
            .unwrap_or_else(|| Icon::Object(name.to_string()))
    }

    pub fn name(&self) -> &str {
        match self {
            Icon::Object(id) => id,
            other => KEYWORDS.iter().find(|(_, i)| i == other).map(|(k, _)| *k).expect("keyword icon"),
        }
    }

    /// Every keyword icon, without objects.
    pub fn keywords() -> impl Iterator<Item = Icon> {
        KEYWORDS.iter().map(|(_, i)| i.clone())
    }
}

impl fmt::Display for Icon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SelectionState {
    pub layer: Layer,
    pub object: Option<String>,
    pub action: Option<Action>,
    pub sub_action: Option<SubAction>,
}

impl Default for SelectionState {
    fn default() -> Self {
        SelectionState {
            layer: Layer::ObjectSelection,
            object: None,
            action: None,
            sub_action: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("icon '{icon}' is not available on the {layer:?} layer")]
pub struct Rejected {
    pub layer: Layer,
    pub icon: String,
}

/// The state machine plus the set of objects that may be picked.
#[derive(Debug, Clone, PartialEq)]
pub struct Selector {
    objects: BTreeSet<String>,
    state: SelectionState,
}

impl Selector {
    pub fn new(objects: impl IntoIterator<Item = String>) -> Result<Self> {
        let objects: BTreeSet<String> = objects.into_iter().collect();
        for o in &objects {
            validate_object_id(o).map_err(|e| Error::invalid("selector", e.to_string()))?;
            if !matches!(Icon::parse(o), Icon::Object(_)) {
                return Err(Error::invalid("selector", format!("object id '{o}' collides with an icon name")));
            }
        }
        Ok(Selector {
            objects,
            state: SelectionState::default(),
        })
    }

    pub fn objects(&self) -> &BTreeSet<String> {
        &self.objects
    }

    pub fn state(&self) -> &SelectionState {
        &self.state
    }

    /// Icons offered on `layer`.
    pub fn icons(&self, layer: Layer) -> Vec<Icon> {
        let mut icons: Vec<Icon> = match layer {
            Layer::ObjectSelection => {
                let mut v: Vec<Icon> = self.objects.iter().cloned().map(Icon::Object).collect();
                v.push(Icon::Pause);
                v
            }
            Layer::ActionSelection => vec![Icon::Drink, Icon::Move, Icon::Back, Icon::Pause],
            Layer::SubactionSelection => vec![Icon::Left, Icon::Right],
            Layer::ControlLayer => vec![Icon::Play, Icon::Stop, Icon::Home, Icon::BackOne],
        };
        icons.push(Icon::Emergency);
        icons
    }

    /// Applies `icon`; on rejection the state is left unchanged.
    pub fn select(&mut self, icon: &Icon) -> std::result::Result<Option<WireMessage>, Rejected> {
        let (next, msg) = select(&self.state, icon, &self.objects)?;
        self.state = next;
        Ok(msg)
    }
}

/// One transition of the selection graph.
pub fn select(
    state: &SelectionState,
    icon: &Icon,
    objects: &BTreeSet<String>,
) -> std::result::Result<(SelectionState, Option<WireMessage>), Rejected> {
    let stay = |msg| Ok((state.clone(), Some(msg)));
    let to = |layer| SelectionState {
        layer,
        ..state.clone()
    };
    let reject = || {
        Err(Rejected {
            layer: state.layer,
            icon: icon.name().to_string(),
        })
    };
    let command = |action, sub_action| {
        let object = state.object.clone().expect("an object is picked before any action");
        WireMessage::Cmd(MissionCommand::new(object, action, sub_action))
    };
    match (state.layer, icon) {
        (_, Icon::Emergency) => stay(WireMessage::Stop),
        (Layer::ObjectSelection, Icon::Object(id)) if objects.contains(id) => Ok((
            SelectionState {
                layer: Layer::ActionSelection,
                object: Some(id.clone()),
                action: None,
                sub_action: None,
            },
            None,
        )),
        (Layer::ObjectSelection | Layer::ActionSelection, Icon::Pause) => stay(WireMessage::Pause),
        (Layer::ActionSelection, Icon::Drink) => {
            let next = SelectionState {
                action: Some(Action::Drink),
                sub_action: Some(SubAction::None),
                ..to(Layer::ControlLayer)
            };
            Ok((next, Some(command(Action::Drink, SubAction::None))))
        }
        (Layer::ActionSelection, Icon::Move) => Ok((
            SelectionState {
                action: Some(Action::Move),
                ..to(Layer::SubactionSelection)
            },
            None,
        )),
        (Layer::ActionSelection, Icon::Back) => Ok((SelectionState::default(), None)),
        (Layer::SubactionSelection, Icon::Left | Icon::Right) => {
            let sub = if *icon == Icon::Left { SubAction::Left } else { SubAction::Right };
            let next = SelectionState {
                sub_action: Some(sub),
                ..to(Layer::ControlLayer)
            };
            Ok((next, Some(command(Action::Move, sub))))
        }
        (Layer::ControlLayer, Icon::Play) => stay(WireMessage::Resume),
        (Layer::ControlLayer, Icon::Stop) => stay(WireMessage::Stop),
        (Layer::ControlLayer, Icon::Home) => Ok((SelectionState::default(), Some(WireMessage::Home))),
        (Layer::ControlLayer, Icon::BackOne) => {
            let next = match state.action {
                Some(Action::Move) => SelectionState {
                    sub_action: None,
                    ..to(Layer::SubactionSelection)
                },
                _ => SelectionState {
                    action: None,
                    sub_action: None,
                    ..to(Layer::ActionSelection)
                },
            };
            Ok((next, None))
        }
        _ => reject(),
    }
}
