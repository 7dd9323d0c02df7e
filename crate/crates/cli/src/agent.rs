use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use iop::clock::{Clock, SystemClock, VirtualClock};
use iop::config::AgentConfig;
use iop::demo::{install, parse_demo_script};
use iop::resilience::parse_policies;
use iop::runtime::{Agent, LoggedEvent};
use iop::simulation::Simulation;
use iop::transport::{SimConfig, Transport, UdpTransport};
use iop::ProtocolSpec;
use serde_json::{json, Value};

use crate::load_valid_protocol;

#[derive(Args)]
pub struct RunArgs {
    /// Protocol file; defaults to the config's `protocol`.
    #[arg(long)]
    protocol: Option<PathBuf>,
    /// Role to play; defaults to the config's `role`.
    #[arg(long)]
    role: Option<String>,
    #[arg(long)]
    config: PathBuf,
    /// Remind-until policy file.
    #[arg(long)]
    policies: Option<PathBuf>,
    /// Demo decision-maker script.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Re-send our own messages, up to N times each, when a peer sends a
    /// duplicate.
    #[arg(long, value_name = "N")]
    answer_reminders: Option<u32>,

    /// Use the seeded network simulator on a virtual clock instead of UDP.
    #[arg(long)]
    sim: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    loss: f64,
    #[arg(long, default_value_t = 0.0)]
    dup: f64,
    /// Upper bound on simulated delivery delay.
    #[arg(long, default_value_t = 5000)]
    max_delay_ms: u64,
    /// Virtual days to simulate.
    #[arg(long, default_value_t = 10)]
    days: i64,
    /// Another agent to run in the simulation: ROLE=SCRIPT[,POLICIES].
    #[arg(long = "peer", value_name = "ROLE=SCRIPT[,POLICIES]")]
    peers: Vec<String>,

    /// Stop a UDP agent after this many seconds (default: run until killed).
    #[arg(long, value_name = "SECS")]
    duration: Option<f64>,
}

struct Setup {
    role: String,
    script: Option<PathBuf>,
    policies: Option<PathBuf>,
}

pub fn run(args: RunArgs) -> Result<u8, String> {
    let config = AgentConfig::load(&args.config).map_err(|e| e.to_string())?;
    let protocol = args
        .protocol
        .clone()
        .or_else(|| config.protocol.clone())
        .ok_or("no protocol: pass --protocol or set `protocol` in the config")?;
    let spec = load_valid_protocol(&protocol)?;
    let role = args
        .role
        .clone()
        .or_else(|| config.role.clone())
        .ok_or("no role: pass --role or set `role` in the config")?;
    if !spec.has_role(&role) {
        return Err(format!("unknown role {role}"));
    }
    let me = Setup {
        role,
        script: args.script.clone(),
        policies: args.policies.clone(),
    };
    if args.sim {
        run_sim(&args, &spec, &config, me)
    } else {
        if !args.peers.is_empty() {
            return Err("--peer needs --sim".into());
        }
        run_udp(&args, &spec, &config, me)
    }
}

fn build<T: Transport>(
    spec: &ProtocolSpec,
    config: &AgentConfig,
    setup: &Setup,
    answer: Option<u32>,
    transport: T,
) -> Result<Agent<T>, String> {
    let read = |p: &PathBuf| std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()));
    let mut agent = Agent::new(spec.clone(), &setup.role, &config.system, config.peers(), transport)
        .map_err(|e| e.to_string())?;
    if let Some(path) = &setup.script {
        let rules = parse_demo_script(&read(path)?, spec, &setup.role).map_err(|e| format!("{}: {e}", path.display()))?;
        install(&mut agent, &rules).map_err(|e| e.to_string())?;
    }
    if let Some(path) = &setup.policies {
        for p in parse_policies(&read(path)?, spec).map_err(|e| format!("{}: {e}", path.display()))? {
            agent.add_policy(p).map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    if let Some(cap) = answer {
        agent.answer_reminders(cap);
    }
    Ok(agent)
}

fn event_line(role: &str, e: &LoggedEvent) -> Value {
    let mut v = serde_json::to_value(e).expect("events serialize");
    v.as_object_mut().unwrap().insert("role".into(), json!(role));
    v
}

fn final_line<T: Transport>(agent: &Agent<T>) -> Value {
    let instances: Vec<_> = agent
        .state()
        .instances()
        .map(|(m, d)| json!({"direction": d, "instance": m}))
        .collect();
    let retries = agent.ledger().iter().map(|(_, e)| e.tries).max().unwrap_or(0);
    json!({"event": "final", "role": agent.role(), "instances": instances, "max retransmissions": retries})
}

fn emit(out: &mut impl Write, v: &Value) -> Result<(), String> {
    writeln!(out, "{v}").and_then(|_| out.flush()).map_err(|e| e.to_string())
}

fn run_sim(args: &RunArgs, spec: &ProtocolSpec, config: &AgentConfig, me: Setup) -> Result<u8, String> {
    let sim_config = SimConfig::new(args.loss, args.dup, Duration::from_millis(args.max_delay_ms), args.seed)
        .map_err(|e| e.to_string())?;
    let mut setups = vec![me];
    for p in &args.peers {
        let (role, files) = p.split_once('=').ok_or_else(|| format!("--peer `{p}`: expected ROLE=SCRIPT[,POLICIES]"))?;
        let (script, policies) = match files.split_once(',') {
            Some((s, p)) => (s, Some(PathBuf::from(p))),
            None => (files, None),
        };
        if !spec.has_role(role) || setups.iter().any(|s| s.role == role) {
            return Err(format!("--peer `{p}`: unknown or repeated role {role}"));
        }
        setups.push(Setup {
            role: role.to_string(),
            script: Some(PathBuf::from(script)),
            policies,
        });
    }

    let mut sim = Simulation::new(sim_config, VirtualClock::midday());
    for setup in &setups {
        let node = config
            .address(&setup.role)
            .ok_or_else(|| format!("no address configured for role {}", setup.role))?;
        let agent = build(spec, config, setup, args.answer_reminders, sim.bind(node))?;
        sim.add(agent);
    }
    let deadline = sim.clock().now() + chrono::TimeDelta::days(args.days);
    sim.run_until(deadline);

    let mut lines: Vec<(chrono::DateTime<chrono::Utc>, usize, Value)> = Vec::new();
    for (i, a) in sim.agents().iter().enumerate() {
        for e in a.log() {
            lines.push((e.at, i, event_line(a.role(), e)));
        }
    }
    lines.sort_by_key(|(at, i, _)| (*at, *i));
    let mut out = std::io::stdout().lock();
    for (_, _, v) in &lines {
        emit(&mut out, v)?;
    }
    for a in sim.agents() {
        emit(&mut out, &final_line(a))?;
    }
    Ok(0)
}

fn run_udp(args: &RunArgs, spec: &ProtocolSpec, config: &AgentConfig, me: Setup) -> Result<u8, String> {
    let address = config
        .address(&me.role)
        .ok_or_else(|| format!("no address configured for role {}", me.role))?;
    // Validate everything before binding.
    let dry = build(spec, config, &me, args.answer_reminders, Unbound(address.into()))?;
    drop(dry);
    let transport = UdpTransport::bind(address).map_err(|e| format!("bind {address}: {e}"))?;
    let mut agent = build(spec, config, &me, args.answer_reminders, transport)?;

    let stop = Arc::new(AtomicBool::new(false));
    if let Some(secs) = args.duration {
        let stop = stop.clone();
        let d = Duration::from_secs_f64(secs.max(0.0));
        std::thread::spawn(move || {
            std::thread::sleep(d);
            stop.store(true, std::sync::atomic::Ordering::Relaxed);
        });
    }
    let mut out = std::io::stdout().lock();
    let role = me.role.clone();
    let mut failed = None;
    agent.run(&SystemClock, &stop, Duration::from_millis(5), |e| {
        if failed.is_none() {
            failed = emit(&mut out, &event_line(&role, e)).err();
        }
    });
    if let Some(e) = failed {
        return Err(e);
    }
    emit(&mut out, &final_line(&agent))?;
    Ok(0)
}

/// Placeholder transport used to validate a configuration before binding.
struct Unbound(iop::transport::Endpoint);

impl Transport for Unbound {
    fn local(&self) -> &iop::transport::Endpoint {
        &self.0
    }

    fn send(&mut self, to: &iop::transport::Endpoint, _: &[u8]) -> Result<(), iop::transport::TransportError> {
        Err(iop::transport::TransportError::Unroutable(to.clone()))
    }

    fn poll_receive(&mut self) -> Result<Option<(Vec<u8>, iop::transport::Endpoint)>, iop::transport::TransportError> {
        Ok(None)
    }
}
