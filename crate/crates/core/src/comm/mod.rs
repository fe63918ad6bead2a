//! Broadcast messaging, receiver-side reflection and the shared cooperation
//! knowledge list.

mod bus;
mod history;
mod knowledge;
mod message;
mod protocol;
mod trigger;

pub use bus::{broadcast, DeliveryReceipt, MessageBus};
pub use history::DialogueHistory;
pub use knowledge::{cap_words, parse_knowledge_reply, KnowledgeList, KnowledgeRecord, MAX_KNOWLEDGE_WORDS};
pub use message::{trim_to_limit, Message, MAX_MESSAGE_CHARS};
pub use protocol::{
    generate_message, message_bindings, reflect_and_update, reflector_bindings, CommError, GeneratedMessage,
    PrivilegedInfo, ReflectionOutcome, PRIVILEGED_ACTIONS,
};
pub use trigger::{should_communicate, CommConfig, CommTrigger};
