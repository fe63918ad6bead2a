use serde::{Deserialize, Serialize};

use super::Message;
use crate::world::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub sender: AgentId,
    pub tick: u32,
    pub recipients: Vec<AgentId>,
}

/// Broadcast channel. Messages sent during a macro-step wait here and are
/// handed out with the next observations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MessageBus {
    inboxes: Vec<Vec<Message>>,
}

impl MessageBus {
    pub fn new(n_agents: usize) -> Self {
        MessageBus { inboxes: vec![Vec::new(); n_agents] }
    }

    pub fn n_agents(&self) -> usize {
        self.inboxes.len()
    }

    /// Queue `message` for every agent except its sender.
    pub fn broadcast(&mut self, message: &Message) -> DeliveryReceipt {
        let mut recipients = Vec::new();
        for (i, inbox) in self.inboxes.iter_mut().enumerate() {
            if AgentId(i) != message.sender {
                inbox.push(message.clone());
                recipients.push(AgentId(i));
            }
        }
        DeliveryReceipt { sender: message.sender, tick: message.tick, recipients }
    }

    /// Take everything queued for `agent`, ordered by `(tick, sender)`.
    pub fn deliver(&mut self, agent: AgentId) -> Vec<Message> {
        let mut out = std::mem::take(&mut self.inboxes[agent.0]);
        out.sort_by_key(|m| (m.tick, m.sender));
        out
    }
}

/// Convenience form of [`MessageBus::broadcast`].
pub fn broadcast(message: &Message, bus: &mut MessageBus) -> DeliveryReceipt {
    bus.broadcast(message)
}
