//! Dialogue acts: the atomic (intent, domain, slot, value) unit exchanged
//! between modules and with the user simulator.

use serde::{Deserialize, Serialize};
use std::fmt;

/// The general pseudo-domain for acts that are not tied to an ontology domain.
pub const GENERAL: &str = "general";
/// Placeholder slot for acts that carry no slot.
pub const NO_SLOT: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Inform,
    Request,
    Offer,
    Book,
    Nooffer,
    Reqmore,
    Bye,
    Greet,
}

impl Intent {
    /// Whether acts with this intent carry a value.
    pub fn carries_value(self) -> bool {
        matches!(self, Intent::Inform | Intent::Offer | Intent::Book)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Inform => "inform",
            Intent::Request => "request",
            Intent::Offer => "offer",
            Intent::Book => "book",
            Intent::Nooffer => "nooffer",
            Intent::Reqmore => "reqmore",
            Intent::Bye => "bye",
            Intent::Greet => "greet",
        }
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One dialogue act. `value` is empty for intents that do not carry a value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogueAct {
    pub intent: Intent,
    pub domain: String,
    pub slot: String,
    pub value: String,
}

impl DialogueAct {
    pub fn new(
        intent: Intent,
        domain: impl Into<String>,
        slot: impl Into<String>,
        value: impl Into<String>,
    ) -> Self {
        DialogueAct {
            intent,
            domain: domain.into(),
            slot: slot.into(),
            value: value.into(),
        }
    }

    pub fn valueless(intent: Intent, domain: impl Into<String>, slot: impl Into<String>) -> Self {
        Self::new(intent, domain, slot, "")
    }

    /// The (intent, domain, slot) triple that indexes vocabularies.
    pub fn label(&self) -> (Intent, &str, &str) {
        (self.intent, &self.domain, &self.slot)
    }
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.value.is_empty() {
            write!(f, "{}/{}/{}", self.intent, self.domain, self.slot)
        } else {
            write!(f, "{}/{}/{}/{}", self.intent, self.domain, self.slot, self.value)
        }
    }
}
