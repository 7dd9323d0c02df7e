//! Discrete-event driver for several agents sharing one simulated network
//! and one virtual clock.

use chrono::{DateTime, Utc};

use crate::clock::{Clock, VirtualClock};
use crate::runtime::Agent;
use crate::transport::{Endpoint, SimConfig, SimNetwork, SimTransport};

pub struct Simulation {
    clock: VirtualClock,
    net: SimNetwork,
    agents: Vec<Agent<SimTransport>>,
    started: bool,
}

impl Simulation {
    pub fn new(config: SimConfig, clock: VirtualClock) -> Self {
        Self {
            net: SimNetwork::new(config, clock.clone()),
            clock,
            agents: Vec::new(),
            started: false,
        }
    }

    /// A transport bound to `node` on this network.
    pub fn bind(&self, node: impl Into<Endpoint>) -> SimTransport {
        self.net.bind(node)
    }

    pub fn add(&mut self, agent: Agent<SimTransport>) {
        self.agents.push(agent);
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.clock
    }

    pub fn network(&self) -> &SimNetwork {
        &self.net
    }

    pub fn agents(&self) -> &[Agent<SimTransport>] {
        &self.agents
    }

    pub fn agent(&self, role: &str) -> Option<&Agent<SimTransport>> {
        self.agents.iter().find(|a| a.role() == role)
    }

    pub fn agent_mut(&mut self, role: &str) -> Option<&mut Agent<SimTransport>> {
        self.agents.iter_mut().find(|a| a.role() == role)
    }

    /// Starts agents in insertion order (once), then alternates between
    /// delivering everything due and jumping the clock to the next delivery
    /// or schedule, until nothing is left before `deadline`.
    pub fn run_until(&mut self, deadline: DateTime<Utc>) {
        if !self.started {
            self.started = true;
            let now = self.clock.now();
            for a in &mut self.agents {
                a.start(now);
            }
        }
        loop {
            let now = self.clock.now();
            for a in &mut self.agents {
                a.tick(now);
            }
            while self.agents.iter_mut().map(|a| a.poll(now)).sum::<usize>() > 0 {}
            let next = self
                .agents
                .iter()
                .filter_map(|a| a.next_wakeup())
                .chain(self.net.next_delivery())
                .min();
            match next {
                Some(t) if t > now && t <= deadline => self.clock.set(t),
                _ => break,
            }
        }
    }
}
