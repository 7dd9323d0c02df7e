use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::protocol::ProtocolSpec;

/// Largest wire payload an agent will send.
pub const MAX_DATAGRAM_BYTES: usize = 60_000;

/// A concrete message: a schema name plus parameter bindings, scoped to a
/// system (session) identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageInstance {
    pub protocol: String,
    pub message: String,
    pub system: String,
    #[serde(rename = "payload")]
    pub bindings: BTreeMap<String, String>,
}

impl MessageInstance {
    pub fn new(
        protocol: impl Into<String>,
        message: impl Into<String>,
        system: impl Into<String>,
        bindings: impl IntoIterator<Item = (impl Into<String>, impl Into<String>)>,
    ) -> Self {
        Self {
            protocol: protocol.into(),
            message: message.into(),
            system: system.into(),
            bindings: bindings
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }

    pub fn get(&self, parameter: &str) -> Option<&str> {
        self.bindings.get(parameter).map(String::as_str)
    }

    /// Wire encoding. Bindings are ordered, so equal instances encode to
    /// identical bytes.
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("string maps always serialize")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    /// Key tuple in protocol key order, if every key is bound.
    pub fn key_tuple(&self, keys: &[String]) -> Option<Vec<String>> {
        keys.iter()
            .map(|k| self.bindings.get(k).cloned())
            .collect()
    }

    pub fn enactment(&self, keys: &[String]) -> Option<EnactmentKey> {
        Some(EnactmentKey {
            system: self.system.clone(),
            keys: self.key_tuple(keys)?,
        })
    }

    pub fn identity(&self, keys: &[String]) -> Option<Identity> {
        Some(Identity {
            message: self.message.clone(),
            enactment: self.enactment(keys)?,
        })
    }
}

/// One enactment: a system identifier plus a key tuple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EnactmentKey {
    pub system: String,
    pub keys: Vec<String>,
}

/// Instance identity: message name within an enactment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Identity {
    pub message: String,
    pub enactment: EnactmentKey,
}

pub(crate) fn key_names(spec: &ProtocolSpec) -> Vec<String> {
    spec.keys().into_iter().map(str::to_string).collect()
}
