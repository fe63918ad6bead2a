use std::fmt;

use serde::{Deserialize, Serialize};

use super::layout::{Cell, RoomId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    InRoom { room: RoomId, cell: Cell },
    OnSurface(ObjectId),
    InContainer(ObjectId),
    Held { agent: AgentId, hand: u8 },
}

impl Location {
    /// The object this location is directly attached to, if any.
    pub fn parent(&self) -> Option<ObjectId> {
        match *self {
            Location::OnSurface(p) | Location::InContainer(p) => Some(p),
            _ => None,
        }
    }
}

/// Physical role of an object; determines its capability flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    /// Portable, holds nothing.
    Item,
    /// Portable transport container, capacity three.
    Container,
    /// Fixed surface such as a table or bed.
    Surface,
    /// Fixed openable container such as a fridge or dishwasher.
    Receptacle,
}

/// Maximum number of non-container objects a portable container carries.
pub const CONTAINER_CAPACITY: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub class: String,
    pub location: Location,
    pub is_container: bool,
    pub is_surface: bool,
    pub is_openable: bool,
    pub portable: bool,
    pub open: bool,
}

impl ObjectInstance {
    pub fn new(id: ObjectId, class: impl Into<String>, kind: ObjectKind, location: Location) -> Self {
        let (is_container, is_surface, is_openable, portable) = match kind {
            ObjectKind::Item => (false, false, false, true),
            ObjectKind::Container => (true, false, false, true),
            ObjectKind::Surface => (false, true, false, false),
            ObjectKind::Receptacle => (true, false, true, false),
        };
        ObjectInstance {
            id,
            class: class.into(),
            location,
            is_container,
            is_surface,
            is_openable,
            portable,
            open: false,
        }
    }

    /// Whether objects inside are reachable and visible.
    pub fn is_accessible(&self) -> bool {
        !self.is_openable || self.open
    }

    /// `<class> (id)`
    pub fn label(&self) -> String {
        format!("<{}> ({})", self.class, self.id)
    }
}
