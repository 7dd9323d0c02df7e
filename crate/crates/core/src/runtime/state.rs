use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use super::instance::{key_names, EnactmentKey, Identity, MessageInstance};
use crate::protocol::ProtocolSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("instance of {0} does not bind every key")]
    Unkeyed(String),
    #[error("{0} already recorded with different bindings")]
    IdentityClash(String),
    #[error("integrity violation: {parameter} already bound to `{existing}`, not `{offered}`")]
    Integrity {
        parameter: String,
        existing: String,
        offered: String,
    },
}

/// The messages an agent has sent and received.
///
/// Instances are indexed by identity and by enactment; each enactment keeps
/// the merged bindings of all its instances, which hold at most one value
/// per parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalState {
    keys: Vec<String>,
    entries: BTreeMap<Identity, (MessageInstance, Direction)>,
    enactments: BTreeMap<EnactmentKey, BTreeMap<String, String>>,
}

impl LocalState {
    pub fn new(spec: &ProtocolSpec) -> Self {
        Self::with_keys(key_names(spec))
    }

    pub fn with_keys(keys: Vec<String>) -> Self {
        Self {
            keys,
            entries: BTreeMap::new(),
            enactments: BTreeMap::new(),
        }
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn identity(&self, instance: &MessageInstance) -> Option<Identity> {
        instance.identity(&self.keys)
    }

    pub fn get(&self, identity: &Identity) -> Option<(&MessageInstance, Direction)> {
        self.entries.get(identity).map(|(m, d)| (m, *d))
    }

    pub fn contains(&self, identity: &Identity) -> bool {
        self.entries.contains_key(identity)
    }

    /// Merged bindings of an enactment.
    pub fn bindings(&self, enactment: &EnactmentKey) -> Option<&BTreeMap<String, String>> {
        self.enactments.get(enactment)
    }

    pub fn enactments(&self) -> impl Iterator<Item = (&EnactmentKey, &BTreeMap<String, String>)> {
        self.enactments.iter()
    }

    /// All instances in identity order.
    pub fn instances(&self) -> impl Iterator<Item = (&MessageInstance, Direction)> {
        self.entries.values().map(|(m, d)| (m, *d))
    }

    pub fn sent(&self) -> impl Iterator<Item = &MessageInstance> {
        self.instances()
            .filter(|(_, d)| *d == Direction::Sent)
            .map(|(m, _)| m)
    }

    pub fn received(&self) -> impl Iterator<Item = &MessageInstance> {
        self.instances()
            .filter(|(_, d)| *d == Direction::Received)
            .map(|(m, _)| m)
    }

    /// Query by example: equality filters on message, system, direction and
    /// parameter values.
    pub fn messages<'a>(&'a self, query: &'a Query) -> impl Iterator<Item = &'a MessageInstance> + 'a {
        self.instances()
            .filter(move |(m, d)| query.matches(m, *d))
            .map(|(m, _)| m)
    }

    /// Checks that `instance` could be recorded: keys bound, and no parameter
    /// of its enactment bound to a different value. Returns `Ok(true)` if an
    /// identical instance is already present.
    pub fn admits(&self, instance: &MessageInstance) -> Result<bool, StateError> {
        let identity = self
            .identity(instance)
            .ok_or_else(|| StateError::Unkeyed(instance.message.clone()))?;
        if let Some((existing, _)) = self.entries.get(&identity) {
            return if existing.bindings == instance.bindings {
                Ok(true)
            } else {
                Err(StateError::IdentityClash(instance.message.clone()))
            };
        }
        if let Some(bound) = self.enactments.get(&identity.enactment) {
            for (parameter, offered) in &instance.bindings {
                if let Some(existing) = bound.get(parameter) {
                    if existing != offered {
                        return Err(StateError::Integrity {
                            parameter: parameter.clone(),
                            existing: existing.clone(),
                            offered: offered.clone(),
                        });
                    }
                }
            }
        }
        Ok(false)
    }

    /// Records an instance. Re-inserting an identical instance is a no-op
    /// and returns `Ok(false)`.
    pub fn insert(&mut self, instance: MessageInstance, direction: Direction) -> Result<bool, StateError> {
        if self.admits(&instance)? {
            return Ok(false);
        }
        let identity = self.identity(&instance).expect("admitted");
        self.enactments
            .entry(identity.enactment.clone())
            .or_default()
            .extend(instance.bindings.iter().map(|(k, v)| (k.clone(), v.clone())));
        self.entries.insert(identity, (instance, direction));
        Ok(true)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Query {
    message: Option<String>,
    system: Option<String>,
    direction: Option<Direction>,
    params: Vec<(String, String)>,
}

impl Query {
    pub fn message(name: impl Into<String>) -> Self {
        Self {
            message: Some(name.into()),
            ..Self::default()
        }
    }

    pub fn any() -> Self {
        Self::default()
    }

    pub fn system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }

    pub fn direction(mut self, direction: Direction) -> Self {
        self.direction = Some(direction);
        self
    }

    pub fn param(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.push((name.into(), value.into()));
        self
    }

    pub fn matches(&self, m: &MessageInstance, direction: Direction) -> bool {
        self.message.as_ref().is_none_or(|n| *n == m.message)
            && self.system.as_ref().is_none_or(|s| *s == m.system)
            && self.direction.is_none_or(|d| d == direction)
            && self
                .params
                .iter()
                .all(|(k, v)| m.bindings.get(k) == Some(v))
    }
}
