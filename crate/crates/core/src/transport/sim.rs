use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, TimeDelta, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{check_size, Endpoint, Transport, TransportError};
use crate::clock::{Clock, VirtualClock};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub loss_prob: f64,
    pub dup_prob: f64,
    pub max_delay: Duration,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field} must be within [0, 1], got {value}")]
pub struct SimConfigError {
    pub field: &'static str,
    pub value: f64,
}

impl SimConfig {
    pub fn new(loss_prob: f64, dup_prob: f64, max_delay: Duration, seed: u64) -> Result<Self, SimConfigError> {
        for (field, value) in [("loss_prob", loss_prob), ("dup_prob", dup_prob)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimConfigError { field, value });
            }
        }
        Ok(Self {
            loss_prob,
            dup_prob,
            max_delay,
            seed,
        })
    }

    /// No loss, no duplication, no delay.
    pub fn perfect(seed: u64) -> Self {
        Self::new(0.0, 0.0, Duration::ZERO, seed).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceOutcome {
    Dropped,
    Scheduled(DateTime<Utc>),
}

/// What became of one copy of one sent datagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub send: u64,
    pub copy: u8,
    pub from: Endpoint,
    pub to: Endpoint,
    pub outcome: TraceOutcome,
}

struct InFlight {
    to: Endpoint,
    from: Endpoint,
    payload: Vec<u8>,
}

struct Net {
    config: SimConfig,
    rng: ChaCha8Rng,
    clock: VirtualClock,
    nodes: BTreeSet<Endpoint>,
    closed: BTreeSet<Endpoint>,
    in_flight: BTreeMap<(DateTime<Utc>, u64), InFlight>,
    sends: u64,
    seq: u64,
    trace: Vec<TraceEntry>,
}

/// In-process lossy network on a virtual clock.
///
/// Each send is duplicated with `dup_prob`; each copy is then lost with
/// `loss_prob` or delayed uniformly in `[0, max_delay]` (millisecond
/// resolution). Copies due at the same instant arrive in send order. The
/// schedule depends only on the config and the sequence of sends.
#[derive(Clone)]
pub struct SimNetwork(Arc<Mutex<Net>>);

impl SimNetwork {
    pub fn new(config: SimConfig, clock: VirtualClock) -> Self {
        Self(Arc::new(Mutex::new(Net {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            clock,
            nodes: BTreeSet::new(),
            closed: BTreeSet::new(),
            in_flight: BTreeMap::new(),
            sends: 0,
            seq: 0,
            trace: Vec::new(),
        })))
    }

    pub fn bind(&self, node: impl Into<Endpoint>) -> SimTransport {
        let local = node.into();
        let mut net = self.0.lock().unwrap();
        net.closed.remove(&local);
        net.nodes.insert(local.clone());
        SimTransport {
            net: self.clone(),
            local,
        }
    }

    pub fn clock(&self) -> VirtualClock {
        self.0.lock().unwrap().clock.clone()
    }

    /// Earliest pending arrival, if any.
    pub fn next_delivery(&self) -> Option<DateTime<Utc>> {
        let net = self.0.lock().unwrap();
        net.in_flight
            .iter()
            .find(|(_, d)| !net.closed.contains(&d.to))
            .map(|((at, _), _)| *at)
    }

    pub fn in_flight(&self) -> usize {
        self.0.lock().unwrap().in_flight.len()
    }

    pub fn trace(&self) -> Vec<TraceEntry> {
        self.0.lock().unwrap().trace.clone()
    }

    pub fn close(&self, node: &Endpoint) {
        let mut net = self.0.lock().unwrap();
        net.nodes.remove(node);
        net.closed.insert(node.clone());
    }
}

pub struct SimTransport {
    net: SimNetwork,
    local: Endpoint,
}

impl SimTransport {
    pub fn network(&self) -> &SimNetwork {
        &self.net
    }
}

impl Transport for SimTransport {
    fn local(&self) -> &Endpoint {
        &self.local
    }

    fn send(&mut self, to: &Endpoint, payload: &[u8]) -> Result<(), TransportError> {
        check_size(payload)?;
        let mut guard = self.net.0.lock().unwrap();
        let net = &mut *guard;
        if !net.nodes.contains(&self.local) {
            return Err(TransportError::Unbound(self.local.clone()));
        }
        if !net.nodes.contains(to) && !net.closed.contains(to) {
            return Err(TransportError::Unroutable(to.clone()));
        }
        let send = net.sends;
        net.sends += 1;
        let copies = if net.rng.gen_bool(net.config.dup_prob) { 2 } else { 1 };
        let max_ms = net.config.max_delay.as_millis() as i64;
        let now = net.clock.now();
        for copy in 0..copies {
            let lost = net.rng.gen_bool(net.config.loss_prob);
            let delay = net.rng.gen_range(0..=max_ms);
            let outcome = if lost {
                TraceOutcome::Dropped
            } else {
                let at = now + TimeDelta::milliseconds(delay);
                net.in_flight.insert(
                    (at, net.seq),
                    InFlight {
                        to: to.clone(),
                        from: self.local.clone(),
                        payload: payload.to_vec(),
                    },
                );
                net.seq += 1;
                TraceOutcome::Scheduled(at)
            };
            net.trace.push(TraceEntry {
                send,
                copy,
                from: self.local.clone(),
                to: to.clone(),
                outcome,
            });
        }
        Ok(())
    }

    fn poll_receive(&mut self) -> Result<Option<(Vec<u8>, Endpoint)>, TransportError> {
        let mut net = self.net.0.lock().unwrap();
        if !net.nodes.contains(&self.local) {
            return Err(TransportError::Unbound(self.local.clone()));
        }
        let now = net.clock.now();
        let due = net
            .in_flight
            .iter()
            .take_while(|((at, _), _)| *at <= now)
            .find(|(_, d)| d.to == self.local)
            .map(|(k, _)| *k);
        Ok(due.map(|k| {
            let d = net.in_flight.remove(&k).unwrap();
            (d.payload, d.from)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(t: &mut SimTransport) -> Vec<Vec<u8>> {
        std::iter::from_fn(|| t.poll_receive().unwrap().map(|(p, _)| p)).collect()
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(SimConfig::new(1.5, 0.0, Duration::ZERO, 0).is_err());
        assert!(SimConfig::new(0.0, -0.1, Duration::ZERO, 0).is_err());
        assert!(SimConfig::new(f64::NAN, 0.0, Duration::ZERO, 0).is_err());
    }

    #[test]
    fn perfect_network_delivers_exactly_once() {
        let net = SimNetwork::new(SimConfig::perfect(1), VirtualClock::midday());
        let mut a = net.bind("a");
        let mut b = net.bind("b");
        for i in 0..10u8 {
            a.send(&"b".into(), &[i]).unwrap();
        }
        assert_eq!(drain(&mut b), (0..10u8).map(|i| vec![i]).collect::<Vec<_>>());
        assert!(drain(&mut a).is_empty());
    }

    #[test]
    fn total_loss_still_sends_ok() {
        let net = SimNetwork::new(SimConfig::new(1.0, 0.0, Duration::ZERO, 1).unwrap(), VirtualClock::midday());
        let mut a = net.bind("a");
        let mut b = net.bind("b");
        for _ in 0..20 {
            a.send(&"b".into(), b"x").unwrap();
        }
        assert!(drain(&mut b).is_empty());
        assert_eq!(net.in_flight(), 0);
    }

    #[test]
    fn delays_hold_datagrams_until_due() {
        let clock = VirtualClock::midday();
        let net = SimNetwork::new(SimConfig::new(0.0, 0.0, Duration::from_secs(10), 3).unwrap(), clock.clone());
        let mut a = net.bind("a");
        let mut b = net.bind("b");
        a.send(&"b".into(), b"x").unwrap();
        let due = net.next_delivery().unwrap();
        if due > clock.now() {
            assert!(b.poll_receive().unwrap().is_none());
        }
        clock.set(due);
        assert_eq!(drain(&mut b), vec![b"x".to_vec()]);
    }

    #[test]
    fn unknown_and_closed_endpoints() {
        let net = SimNetwork::new(SimConfig::perfect(0), VirtualClock::midday());
        let mut a = net.bind("a");
        assert!(matches!(a.send(&"zz".into(), b"x"), Err(TransportError::Unroutable(_))));
        net.close(&"a".into());
        assert!(matches!(a.poll_receive(), Err(TransportError::Unbound(_))));
    }
}
