use serde::{Deserialize, Serialize};

use super::layout::RoomId;
use super::object::ObjectId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkTarget {
    Object(ObjectId),
    Room(RoomId),
}

/// High-level environment actions. A joint action is one of these per agent,
/// indexed by agent id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvAction {
    WalkTowards(WalkTarget),
    Grasp(ObjectId),
    Open(ObjectId),
    Close(ObjectId),
    PutOn { object: ObjectId, surface: ObjectId },
    PutIn { object: ObjectId, container: ObjectId },
    Drop { hand: u8 },
    NoOp,
}

impl EnvAction {
    pub fn verb(&self) -> &'static str {
        match self {
            EnvAction::WalkTowards(_) => "walk",
            EnvAction::Grasp(_) => "grasp",
            EnvAction::Open(_) => "open",
            EnvAction::Close(_) => "close",
            EnvAction::PutOn { .. } | EnvAction::PutIn { .. } => "put",
            EnvAction::Drop { .. } => "drop",
            EnvAction::NoOp => "wait",
        }
    }
}

/// Why an ill-situated action did nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    UnknownTarget,
    NotVisible,
    NotNear,
    NotPortable,
    AlreadyHeld,
    HandsFull,
    NotHeld,
    EmptyHand,
    NotOpenable,
    AlreadyOpen,
    AlreadyClosed,
    Closed,
    NotSurface,
    NotContainer,
    ContainerFull,
    Unreachable,
    OutOfTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub action: EnvAction,
    pub succeeded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailReason>,
    pub cost: u32,
}
