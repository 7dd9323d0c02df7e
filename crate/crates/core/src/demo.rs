//! Declarative decision makers for demo agents, written in the list-of-maps
//! format:
//!
//! ```text
//! - on: schedule 00 17 * * *     // or `start`, or `receive <Message>`
//!   send: Payment
//!   require-received: Shipment   // optional, comma-separated
//!   bind: paid=10                // every out parameter of the message
//!   count: 1                     // fresh forms completed per trigger
//! ```
//!
//! A binding is `param=counter` (1, 2, ... skipping values already in use),
//! `param=copy:other` (the enactment's binding of `other`), or a literal;
//! quote a literal with `"` to keep it from being read as a generator.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::cron::Schedule;
use crate::listmap::{parse_listmap, Entry};
use crate::protocol::{Adornment, ProtocolSpec};
use crate::runtime::{
    Agent, AgentError, Attempt, DecisionError, DecisionFn, EnabledForms, Form, LocalState, Query, Trigger,
};
use crate::transport::Transport;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Generator {
    Literal(String),
    Counter,
    Copy(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoRule {
    pub trigger: Trigger,
    pub send: String,
    pub require_received: Vec<String>,
    pub bind: Vec<(String, Generator)>,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}: {message}", if *.entry == 0 { "script".to_string() } else { format!("entry {}", .entry) })]
pub struct DemoError {
    pub entry: usize,
    pub message: String,
}

pub fn parse_demo_script(text: &str, spec: &ProtocolSpec, role: &str) -> Result<Vec<DemoRule>, DemoError> {
    let entries = parse_listmap(text).map_err(|e| DemoError {
        entry: 0,
        message: e.to_string(),
    })?;
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| parse_rule(e, spec, role).map_err(|message| DemoError { entry: i + 1, message }))
        .collect()
}

fn parse_rule(e: &Entry, spec: &ProtocolSpec, role: &str) -> Result<DemoRule, String> {
    const FIELDS: [&str; 5] = ["on", "send", "require-received", "bind", "count"];
    if let Some(f) = e.fields.iter().find(|f| !FIELDS.contains(&f.key.as_str())) {
        return Err(format!("unknown field `{}`", f.key));
    }
    let on = e.get("on").ok_or("missing `on`")?;
    let trigger = match on.split_once(char::is_whitespace).map(|(a, b)| (a, b.trim())) {
        None if on == "start" => Trigger::OnStart,
        Some(("receive", m)) => {
            let schema = spec.message(m).ok_or_else(|| format!("unknown message {m}"))?;
            if schema.receiver != role {
                return Err(format!("{role} does not receive {m}"));
            }
            Trigger::OnReceive(m.to_string())
        }
        Some(("schedule", cron)) => Trigger::Cron(Schedule::parse(cron).map_err(|e| e.to_string())?),
        _ => return Err(format!("`on` must be `start`, `receive <Message>` or `schedule <cron>`, got `{on}`")),
    };

    let send = e.get("send").ok_or("missing `send`")?;
    let schema = spec.message(send).ok_or_else(|| format!("unknown message {send}"))?;
    if schema.sender != role {
        return Err(format!("{role} does not send {send}"));
    }

    let require_received = list(e.get("require-received"))
        .map(|m| match spec.message(m) {
            Some(s) if s.receiver == role => Ok(m.to_string()),
            Some(_) => Err(format!("{role} does not receive {m}")),
            None => Err(format!("unknown message {m}")),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut bind = Vec::new();
    for item in list(e.get("bind")) {
        let (p, g) = item.split_once('=').ok_or_else(|| format!("binding `{item}` lacks `=`"))?;
        let (p, g) = (p.trim(), g.trim());
        if schema.adornment_of(p) != Some(Adornment::Out) {
            return Err(format!("{p} is not an out parameter of {send}"));
        }
        let generator = if g == "counter" {
            Generator::Counter
        } else if let Some(src) = g.strip_prefix("copy:") {
            Generator::Copy(src.trim().to_string())
        } else {
            Generator::Literal(g.trim_matches('"').to_string())
        };
        if bind.iter().any(|(q, _)| q == p) {
            return Err(format!("{p} bound twice"));
        }
        bind.push((p.to_string(), generator));
    }
    let bound: BTreeSet<_> = bind.iter().map(|(p, _)| p.as_str()).collect();
    if let Some(p) = schema.with_adornment(Adornment::Out).find(|p| !bound.contains(p.name.as_str())) {
        return Err(format!("no binding for out parameter {}", p.name));
    }

    let count = match e.get("count") {
        None => 1,
        Some(c) => c.parse().map_err(|_| format!("`count` must be a non-negative integer, got `{c}`"))?,
    };
    Ok(DemoRule {
        trigger,
        send: send.to_string(),
        require_received,
        bind,
        count,
    })
}

fn list(value: Option<&str>) -> impl Iterator<Item = &str> {
    value
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

impl DemoRule {
    pub fn name(&self) -> String {
        let on = match &self.trigger {
            Trigger::OnStart => "start".to_string(),
            Trigger::OnReceive(m) => format!("receive {m}"),
            Trigger::Cron(s) => format!("schedule {s}"),
        };
        format!("send {} on {on}", self.send)
    }

    /// The rule as a decision maker. Counters live inside the closure.
    pub fn decision_maker(&self) -> DecisionFn {
        let rule = self.clone();
        let mut counters: BTreeMap<String, u64> = BTreeMap::new();
        Box::new(move |forms: &EnabledForms, state: &LocalState| {
            let mut attempts = Vec::new();
            for form in forms.messages(&rule.send) {
                if form.is_fresh() {
                    for _ in 0..rule.count {
                        attempts.push(rule.complete(form, state, &mut counters, &attempts)?);
                    }
                } else if rule.requirements_met(form, state) {
                    attempts.push(rule.complete(form, state, &mut counters, &attempts)?);
                }
            }
            Ok(attempts)
        })
    }

    fn requirements_met(&self, form: &Form, state: &LocalState) -> bool {
        let Some(enactment) = &form.enactment else { return true };
        self.require_received.iter().all(|m| {
            let mut q = Query::message(m.as_str())
                .system(form.system.as_str())
                .direction(crate::runtime::Direction::Received);
            for (k, v) in state.keys().iter().zip(&enactment.keys) {
                q = q.param(k.as_str(), v.as_str());
            }
            let found = state.messages(&q).next().is_some();
            found
        })
    }

    fn complete(
        &self,
        form: &Form,
        state: &LocalState,
        counters: &mut BTreeMap<String, u64>,
        pending: &[Attempt],
    ) -> Result<Attempt, DecisionError> {
        let mut bindings = Vec::new();
        for (p, g) in &self.bind {
            let value = match g {
                Generator::Literal(v) => v.clone(),
                Generator::Copy(src) => form
                    .enactment
                    .as_ref()
                    .and_then(|e| state.bindings(e))
                    .and_then(|b| b.get(src))
                    .cloned()
                    .ok_or_else(|| DecisionError(format!("nothing to copy into {p}: {src} unbound")))?,
                Generator::Counter => {
                    let in_use = |v: &str| {
                        state.enactments().any(|(_, b)| b.get(p).is_some_and(|x| x == v))
                            || pending.iter().any(|a| a.bindings.get(p).is_some_and(|x| x == v))
                    };
                    let next = counters.entry(p.clone()).or_insert(0);
                    loop {
                        *next += 1;
                        let v = next.to_string();
                        if !in_use(&v) {
                            break v;
                        }
                    }
                }
            };
            bindings.push((p.clone(), value));
        }
        Ok(form.bind(bindings))
    }
}

/// Registers every rule on `agent`.
pub fn install<T: Transport>(agent: &mut Agent<T>, rules: &[DemoRule]) -> Result<(), AgentError> {
    for rule in rules {
        agent.add_decision_maker(&rule.name(), rule.trigger.clone(), rule.decision_maker())?;
    }
    Ok(())
}
