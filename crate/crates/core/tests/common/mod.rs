//! Test-only oracles and generators. Nothing here calls into the verifier's
//! reduction; the enumeration oracle does not use the crate's enactment model.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use iop::enactment::{enumerate_all_paths, is_complete, Event, EventKind, Path};
use iop::protocol::{Adornment, MessageSchema, ParameterDecl, ProtocolSpec};
use rand::seq::SliceRandom;
use rand::Rng;

/// A random protocol that passes validation: ≤4 roles, ≤5 messages, ≤6
/// parameters, one key carried by every message.
pub fn random_protocol(rng: &mut impl Rng) -> ProtocolSpec {
    let n_roles = rng.gen_range(2..=4);
    let n_msgs = rng.gen_range(1..=5);
    let n_params = rng.gen_range(1..=6);
    let roles: Vec<String> = (0..n_roles).map(|i| format!("R{i}")).collect();
    let params: Vec<String> = (0..n_params).map(|i| format!("p{i}")).collect();
    let adornments = [Adornment::In, Adornment::Out, Adornment::Nil];

    let messages = (0..n_msgs)
        .map(|i| {
            let sender = rng.gen_range(0..n_roles);
            let mut receiver = rng.gen_range(0..n_roles - 1);
            if receiver >= sender {
                receiver += 1;
            }
            let mut parameters = Vec::new();
            for (j, p) in params.iter().enumerate() {
                if j == 0 || rng.gen_bool(0.5) {
                    let adornment = if j == 0 {
                        // Keys are mostly out or in; nil keys make little sense.
                        *[Adornment::In, Adornment::Out].choose(rng).unwrap()
                    } else {
                        *adornments.choose(rng).unwrap()
                    };
                    parameters.push(ParameterDecl::new(p.clone(), adornment, j == 0));
                }
            }
            MessageSchema {
                name: format!("M{i}"),
                sender: roles[sender].clone(),
                receiver: roles[receiver].clone(),
                parameters,
            }
        })
        .collect();

    ProtocolSpec {
        name: "Random".into(),
        roles,
        parameters: params
            .iter()
            .enumerate()
            .map(|(j, p)| ParameterDecl::new(p.clone(), Adornment::Out, j == 0))
            .collect(),
        messages,
    }
}

/// Verdicts from exhaustive enumeration: (safe, live).
pub fn exhaustive_verdicts(spec: &ProtocolSpec) -> (bool, bool) {
    let stats = enumerate_all_paths(spec).unwrap();
    let outs: HashMap<&str, BTreeSet<&str>> = spec
        .messages
        .iter()
        .map(|m| {
            (
                m.name.as_str(),
                m.with_adornment(Adornment::Out).map(|p| p.name.as_str()).collect(),
            )
        })
        .collect();
    // Double sources persist along a path, so maximal paths cover every prefix.
    let safe = stats.maximal_paths.iter().all(|path| {
        let mut seen = BTreeSet::new();
        path.events()
            .iter()
            .filter(|e| e.kind == EventKind::Emit)
            .all(|e| outs[e.message.as_str()].iter().all(|p| seen.insert(*p)))
    });
    let live = stats
        .maximal_paths
        .iter()
        .all(|path| is_complete(spec, path).unwrap());
    (safe, live)
}

/// Independent brute-force enumerator over the enablement rule, written
/// against plain strings and sets. Returns (total nonempty paths, longest,
/// maximal paths).
pub fn naive_enumerate(spec: &ProtocolSpec) -> (u64, usize, Vec<Path>) {
    fn observed(spec: &ProtocolSpec, path: &[Event], role: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        for e in path.iter().filter(|e| e.role == role) {
            let m = spec.message(&e.message).unwrap();
            for p in &m.parameters {
                if p.adornment != Adornment::Nil {
                    seen.insert(p.name.clone());
                }
            }
        }
        seen
    }

    fn enabled(spec: &ProtocolSpec, path: &[Event]) -> Vec<Event> {
        let mut out = Vec::new();
        for m in &spec.messages {
            let emit = Event::emit(&m.sender, &m.name);
            if path.contains(&emit) {
                continue;
            }
            let seen = observed(spec, path, &m.sender);
            let ok = m.parameters.iter().all(|p| match p.adornment {
                Adornment::In => seen.contains(&p.name),
                Adornment::Out | Adornment::Nil => !seen.contains(&p.name),
            });
            if ok {
                out.push(emit);
            }
        }
        for m in &spec.messages {
            let recv = Event::receive(&m.receiver, &m.name);
            if path.contains(&Event::emit(&m.sender, &m.name)) && !path.contains(&recv) {
                out.push(recv);
            }
        }
        out
    }

    fn go(spec: &ProtocolSpec, path: &mut Vec<Event>, acc: &mut (u64, usize, Vec<Path>)) {
        if !path.is_empty() {
            acc.0 += 1;
            acc.1 = acc.1.max(path.len());
        }
        let next = enabled(spec, path);
        if next.is_empty() {
            acc.2.push(Path::from(path.clone()));
        }
        for e in next {
            path.push(e);
            go(spec, path, acc);
            path.pop();
        }
    }

    let mut acc = (0, 0, Vec::new());
    go(spec, &mut Vec::new(), &mut acc);
    acc
}

/// Counts linear extensions of a strict partial order on `n` elements given
/// by `before` pairs (a, b) meaning a precedes b. Brute force over
/// permutations; fine for n ≤ 8.
pub fn count_linear_extensions(n: usize, before: &[(usize, usize)]) -> usize {
    fn go(placed: &mut Vec<usize>, n: usize, before: &[(usize, usize)], count: &mut usize) {
        if placed.len() == n {
            *count += 1;
            return;
        }
        for x in 0..n {
            if placed.contains(&x) {
                continue;
            }
            let ready = before
                .iter()
                .filter(|&&(_, b)| b == x)
                .all(|(a, _)| placed.contains(a));
            if ready {
                placed.push(x);
                go(placed, n, before, count);
                placed.pop();
            }
        }
    }
    let mut count = 0;
    go(&mut Vec::new(), n, before, &mut count);
    count
}

pub mod purchase {
    use std::collections::BTreeMap;
    use std::time::Duration;

    use iop::clock::{Clock, VirtualClock};
    use iop::demo::{install, parse_demo_script};
    use iop::fixtures;
    use iop::resilience::parse_policies;
    use iop::runtime::{Agent, Direction, LocalState};
    use iop::simulation::Simulation;
    use iop::transport::{Endpoint, SimConfig, Transport};

    pub struct Options {
        pub policies: bool,
        pub answer_reminders: Option<u32>,
        pub days: i64,
    }

    impl Default for Options {
        fn default() -> Self {
            Self { policies: true, answer_reminders: Some(5), days: 10 }
        }
    }

    pub fn peers() -> BTreeMap<String, Endpoint> {
        [("B", "buyer"), ("S", "seller")]
            .into_iter()
            .map(|(r, e)| (r.to_string(), Endpoint::from(e)))
            .collect()
    }

    pub fn agent<T: Transport>(role: &str, transport: T, peers: BTreeMap<String, Endpoint>, opts: &Options) -> Agent<T> {
        let spec = fixtures::flexible_purchase();
        let (script, policy) = match role {
            "B" => (fixtures::BUYER_SCRIPT, fixtures::BUYER_POLICY),
            _ => (fixtures::SELLER_SCRIPT, fixtures::SELLER_POLICY),
        };
        let rules = parse_demo_script(script, &spec, role).unwrap();
        let policies = parse_policies(policy, &spec).unwrap();
        let mut agent = Agent::new(spec, role, "s1", peers, transport).unwrap();
        install(&mut agent, &rules).unwrap();
        if opts.policies {
            for p in policies {
                agent.add_policy(p).unwrap();
            }
        }
        if let Some(cap) = opts.answer_reminders {
            agent.answer_reminders(cap);
        }
        agent
    }

    /// Runs the purchase scenario on a simulated network.
    pub fn simulate(loss: f64, dup: f64, seed: u64, opts: &Options) -> Simulation {
        let config = SimConfig::new(loss, dup, Duration::from_secs(5), seed).unwrap();
        let mut sim = Simulation::new(config, VirtualClock::midday());
        let buyer = agent("B", sim.bind("buyer"), peers(), opts);
        let seller = agent("S", sim.bind("seller"), peers(), opts);
        sim.add(buyer);
        sim.add(seller);
        let deadline = sim.clock().now() + chrono::TimeDelta::days(opts.days);
        sim.run_until(deadline);
        sim
    }

    /// Both sides hold Request, Shipment and Payment for every enactment.
    pub fn complete(buyer: &LocalState, seller: &LocalState) -> bool {
        let has = |s: &LocalState, m: &str, d: Direction| s.instances().any(|(i, dir)| i.message == m && dir == d);
        has(buyer, "Request", Direction::Sent)
            && has(buyer, "Shipment", Direction::Received)
            && has(buyer, "Payment", Direction::Sent)
            && has(seller, "Request", Direction::Received)
            && has(seller, "Shipment", Direction::Sent)
            && has(seller, "Payment", Direction::Received)
    }

    pub fn max_retransmissions(sim: &Simulation) -> u32 {
        sim.agents()
            .iter()
            .flat_map(|a| a.ledger().iter().map(|(_, e)| e.tries))
            .max()
            .unwrap_or(0)
    }
}

pub mod net {
    use std::sync::{Arc, Mutex};

    use iop::transport::{Endpoint, Transport, TransportError};

    pub type Sent = Arc<Mutex<Vec<(Endpoint, Vec<u8>)>>>;

    /// Records sends; delivers nothing. `fail` makes every send error out.
    #[derive(Clone)]
    pub struct Capture {
        pub local: Endpoint,
        pub sent: Sent,
        pub fail: bool,
    }

    impl Capture {
        pub fn new(local: &str) -> Self {
            Self { local: local.into(), sent: Arc::default(), fail: false }
        }

        pub fn sent(&self) -> Vec<(Endpoint, Vec<u8>)> {
            self.sent.lock().unwrap().clone()
        }
    }

    impl Transport for Capture {
        fn local(&self) -> &Endpoint {
            &self.local
        }

        fn send(&mut self, to: &Endpoint, payload: &[u8]) -> Result<(), TransportError> {
            if self.fail {
                return Err(TransportError::Unroutable(to.clone()));
            }
            self.sent.lock().unwrap().push((to.clone(), payload.to_vec()));
            Ok(())
        }

        fn poll_receive(&mut self) -> Result<Option<(Vec<u8>, Endpoint)>, TransportError> {
            Ok(None)
        }
    }
}

pub mod scenario {
    use chrono::{DateTime, Utc};
    use iop::enactment::{enabled_events, Event, Path};
    use iop::runtime::{enabled_forms, Agent, AgentEvent, LoggedEvent, Query};
    use iop::transport::Transport;
    use iop::ProtocolSpec;

    /// Payment and Shipment cross in flight. `pump` polls an agent
    /// until it holds the named message.
    pub fn crossing<T: Transport>(
        buyer: &mut Agent<T>,
        seller: &mut Agent<T>,
        now: DateTime<Utc>,
        mut pump: impl FnMut(&mut Agent<T>, &str),
    ) {
        buyer.start(now);
        seller.start(now);
        pump(seller, "Request"); // seller ships on receipt
        assert!(seller.state().messages(&Query::message("Shipment")).next().is_some());
        assert!(buyer.state().messages(&Query::message("Shipment")).next().is_none());
        let forms = enabled_forms(buyer.state(), "B", buyer.spec(), buyer.system()).unwrap();
        let pay = forms.messages("Payment").next().expect("payment enabled by own Request").bind([("paid", "10")]);
        buyer.commit_and_emit(&[pay], now).unwrap();
        pump(buyer, "Shipment");
        pump(seller, "Payment");
    }

    /// Schema-level events of one agent, in log order, first occurrence only.
    pub fn events(log: &[LoggedEvent], role: &str) -> Vec<Event> {
        let mut out: Vec<Event> = Vec::new();
        for e in log {
            let ev = match &e.event {
                AgentEvent::Emitted { instance, .. } => Event::emit(role, &instance.message),
                AgentEvent::Accepted { instance, .. } => Event::receive(role, &instance.message),
                _ => continue,
            };
            if !out.contains(&ev) {
                out.push(ev);
            }
        }
        out
    }

    /// Interleaves per-agent histories into one schema-level path, taking at
    /// each step the first agent whose next event is enabled. `None` if the
    /// histories admit no such interleaving.
    pub fn merge(spec: &ProtocolSpec, histories: &[Vec<Event>]) -> Option<Path> {
        let mut heads = vec![0; histories.len()];
        let mut path = Path::new();
        loop {
            if heads.iter().zip(histories).all(|(h, hist)| *h == hist.len()) {
                return Some(path);
            }
            let enabled = enabled_events(spec, &path).ok()?;
            let i = (0..histories.len())
                .find(|&i| heads[i] < histories[i].len() && enabled.contains(&histories[i][heads[i]]))?;
            let mut events = path.events().to_vec();
            events.push(histories[i][heads[i]].clone());
            path = Path::from(events);
            heads[i] += 1;
        }
    }
}
