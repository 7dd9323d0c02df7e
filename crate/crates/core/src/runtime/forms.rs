use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::instance::{EnactmentKey, MessageInstance, MAX_DATAGRAM_BYTES};
use super::state::LocalState;
use crate::protocol::{Adornment, ProtocolSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown role {0}")]
pub struct UnknownRole(pub String);

/// A partial message instance: legal to send once every unbound parameter
/// is given a value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Form {
    pub protocol: String,
    pub message: String,
    pub system: String,
    /// Keys and `in` parameters, filled from local state. Empty for fresh
    /// forms.
    pub bound: BTreeMap<String, String>,
    /// `out` parameters awaiting values.
    pub unbound: BTreeSet<String>,
    /// `nil` parameters, which must stay unbound in the enactment.
    pub nil: BTreeSet<String>,
    /// The enactment this form extends; `None` for fresh forms.
    pub enactment: Option<EnactmentKey>,
}

impl Form {
    pub fn is_fresh(&self) -> bool {
        self.enactment.is_none()
    }

    pub fn get(&self, parameter: &str) -> Option<&str> {
        self.bound.get(parameter).map(String::as_str)
    }

    /// Completes the form. Unknown or missing parameters are reported by
    /// [`check`], not here.
    pub fn bind<K: Into<String>, V: Into<String>>(&self, bindings: impl IntoIterator<Item = (K, V)>) -> Attempt {
        Attempt {
            form: self.clone(),
            bindings: bindings
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.message)?;
        let mut first = true;
        for (k, v) in &self.bound {
            write!(f, "{}{k}={v}", if first { "" } else { ", " })?;
            first = false;
        }
        for k in &self.unbound {
            write!(f, "{}{k}?", if first { "" } else { ", " })?;
            first = false;
        }
        write!(f, ")")
    }
}

/// A completed form, not yet checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attempt {
    pub form: Form,
    pub bindings: BTreeMap<String, String>,
}

impl Attempt {
    pub fn instance(&self) -> MessageInstance {
        let mut all = self.form.bound.clone();
        all.extend(self.bindings.iter().map(|(k, v)| (k.clone(), v.clone())));
        MessageInstance {
            protocol: self.form.protocol.clone(),
            message: self.form.message.clone(),
            system: self.form.system.clone(),
            bindings: all,
        }
    }
}

/// The forms offered to a decision maker, in message declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnabledForms(Vec<Form>);

impl EnabledForms {
    pub fn iter(&self) -> impl Iterator<Item = &Form> {
        self.0.iter()
    }

    pub fn messages<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Form> + 'a {
        self.0.iter().filter(move |f| f.message == name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl IntoIterator for EnabledForms {
    type Item = Form;
    type IntoIter = std::vec::IntoIter<Form>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

/// Forms `role` may complete in `system`, given its local state.
///
/// A message whose keys are all `out` (and which has no `in` parameters)
/// yields one fresh form. Otherwise there is one form per enactment in which
/// every `in` parameter is bound, no `out` or `nil` parameter is, and the
/// message has not been sent yet.
pub fn enabled_forms(
    state: &LocalState,
    role: &str,
    spec: &ProtocolSpec,
    system: &str,
) -> Result<EnabledForms, UnknownRole> {
    if !spec.has_role(role) {
        return Err(UnknownRole(role.to_string()));
    }
    let mut forms = Vec::new();
    for m in spec.sent_by(role) {
        let names = |a| m.with_adornment(a).map(|p| p.name.clone()).collect::<BTreeSet<_>>();
        let (ins, outs, nils) = (names(Adornment::In), names(Adornment::Out), names(Adornment::Nil));
        let keys: Vec<_> = m.parameters.iter().filter(|p| p.is_key).collect();

        if keys.iter().all(|k| k.adornment == Adornment::Out) && ins.is_empty() {
            forms.push(Form {
                protocol: spec.name.clone(),
                message: m.name.clone(),
                system: system.to_string(),
                bound: BTreeMap::new(),
                unbound: outs.clone(),
                nil: nils.clone(),
                enactment: None,
            });
        }
        for (enactment, bindings) in state.enactments() {
            if enactment.system != system {
                continue;
            }
            let ready = ins.iter().all(|p| bindings.contains_key(p))
                && !outs.iter().chain(&nils).any(|p| bindings.contains_key(p));
            if !ready {
                continue;
            }
            let bound: BTreeMap<_, _> = ins
                .iter()
                .chain(keys.iter().map(|k| &k.name))
                .filter_map(|p| Some((p.clone(), bindings.get(p)?.clone())))
                .collect();
            // Keys that are out in this message are bound already, hence
            // `ready` is false; every key here is in.
            forms.push(Form {
                protocol: spec.name.clone(),
                message: m.name.clone(),
                system: system.to_string(),
                bound,
                unbound: outs.clone(),
                nil: nils.clone(),
                enactment: Some(enactment.clone()),
            });
        }
    }
    Ok(EnabledForms(forms))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("stale form: {0}")]
    StaleForm(String),
    #[error("missing binding: {message}.{parameter}")]
    MissingBinding { message: String, parameter: String },
    #[error("empty binding: {message}.{parameter}")]
    EmptyBinding { message: String, parameter: String },
    #[error("unexpected binding: {message}.{parameter}")]
    UnexpectedBinding { message: String, parameter: String },
    #[error("out parameter already bound: {0}")]
    AlreadyBound(String),
    #[error("conflicting out binding: {0}")]
    ConflictingOutBinding(String),
    #[error("duplicate attempt: {0}")]
    DuplicateAttempt(String),
    #[error("oversize: {message} encodes to {bytes} bytes")]
    Oversize { message: String, bytes: usize },
}

/// Checks a batch of attempts against the current state. The batch is
/// accepted or rejected as a whole.
pub fn check(attempts: &[Attempt], state: &LocalState) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    // (enactment, parameter) -> value, over the batch
    let mut batch: BTreeMap<(EnactmentKey, String), String> = BTreeMap::new();
    let mut identities = BTreeSet::new();

    for a in attempts {
        let form = &a.form;
        let msg = || form.message.clone();
        for p in &form.unbound {
            match a.bindings.get(p) {
                None => violations.push(Violation::MissingBinding { message: msg(), parameter: p.clone() }),
                Some(v) if v.is_empty() => {
                    violations.push(Violation::EmptyBinding { message: msg(), parameter: p.clone() })
                }
                Some(_) => {}
            }
        }
        for p in a.bindings.keys().filter(|p| !form.unbound.contains(*p)) {
            violations.push(Violation::UnexpectedBinding { message: msg(), parameter: p.clone() });
        }

        let instance = a.instance();
        let bytes = instance.encode().len();
        if bytes > MAX_DATAGRAM_BYTES {
            violations.push(Violation::Oversize { message: msg(), bytes });
        }
        let Some(identity) = state.identity(&instance) else {
            continue; // a missing key is already reported
        };

        let current = state.bindings(&identity.enactment);
        match &form.enactment {
            Some(e) => {
                let still = e == &identity.enactment
                    && !state.contains(&identity)
                    && current.is_some_and(|b| {
                        form.bound.iter().all(|(k, v)| b.get(k) == Some(v))
                            && !form.unbound.iter().chain(&form.nil).any(|p| b.contains_key(p))
                    });
                if !still {
                    violations.push(Violation::StaleForm(form.to_string()));
                }
            }
            None => {
                if let Some(b) = current {
                    for p in form.unbound.iter().chain(&form.nil).filter(|p| b.contains_key(*p)) {
                        violations.push(Violation::AlreadyBound(p.clone()));
                    }
                }
            }
        }

        if !identities.insert(identity.clone()) {
            violations.push(Violation::DuplicateAttempt(form.message.clone()));
        }
        for p in &form.unbound {
            let Some(v) = a.bindings.get(p) else { continue };
            let slot = (identity.enactment.clone(), p.clone());
            if batch.insert(slot, v.clone()).is_some() {
                // Two sources for one out parameter, whatever the values.
                violations.push(Violation::ConflictingOutBinding(p.clone()));
            }
        }
    }
    // An in binding of one attempt may be the out binding of another only
    // if the values agree.
    for a in attempts {
        let instance = a.instance();
        let Some(e) = state.identity(&instance).map(|i| i.enactment) else { continue };
        for (k, v) in &a.form.bound {
            if batch.get(&(e.clone(), k.clone())).is_some_and(|w| w != v) {
                violations.push(Violation::ConflictingOutBinding(k.clone()));
            }
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        violations.dedup();
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::runtime::state::Direction;

    fn inst(message: &str, bindings: &[(&str, &str)]) -> MessageInstance {
        MessageInstance::new("Flexible Purchase", message, "s", bindings.iter().copied())
    }

    fn buyer_state() -> LocalState {
        let mut state = LocalState::new(&fixtures::flexible_purchase());
        state.insert(inst("Request", &[("ID", "1"), ("item", "fig")]), Direction::Sent).unwrap();
        state.insert(inst("Request", &[("ID", "2"), ("item", "jam")]), Direction::Sent).unwrap();
        state
            .insert(inst("Payment", &[("ID", "1"), ("item", "fig"), ("paid", "10")]), Direction::Sent)
            .unwrap();
        state
    }

    #[test]
    fn empty_buyer_state_offers_fresh_request_only() {
        let spec = fixtures::flexible_purchase();
        let forms = enabled_forms(&LocalState::new(&spec), "B", &spec, "s").unwrap();
        assert_eq!(forms.iter().map(|f| f.to_string()).collect::<Vec<_>>(), ["Request(ID?, item?)"]);
        assert!(matches!(enabled_forms(&LocalState::new(&spec), "Q", &spec, "s"), Err(UnknownRole(_))));
    }

    #[test]
    fn seller_gets_shipment_after_request() {
        let spec = fixtures::flexible_purchase();
        let mut state = LocalState::new(&spec);
        state.insert(inst("Request", &[("ID", "1"), ("item", "fig")]), Direction::Received).unwrap();
        let forms = enabled_forms(&state, "S", &spec, "s").unwrap();
        assert_eq!(forms.iter().map(|f| f.to_string()).collect::<Vec<_>>(), ["Shipment(ID=1, item=fig, status?)"]);
        // other systems see nothing
        assert!(enabled_forms(&state, "S", &spec, "t").unwrap().is_empty());
    }

    #[test]
    fn payment_alone_enables_shipment() {
        let spec = fixtures::flexible_purchase();
        let mut state = LocalState::new(&spec);
        state
            .insert(inst("Payment", &[("ID", "1"), ("item", "fig"), ("paid", "10")]), Direction::Received)
            .unwrap();
        let forms = enabled_forms(&state, "S", &spec, "s").unwrap();
        assert_eq!(forms.messages("Shipment").count(), 1);
    }

    #[test]
    fn check_accepts_payment_attempt() {
        let spec = fixtures::flexible_purchase();
        let state = buyer_state();
        let forms = enabled_forms(&state, "B", &spec, "s").unwrap();
        let p = forms.messages("Payment").next().unwrap();
        assert_eq!(check(&[p.bind([("paid", "10")])], &state), Ok(()));
    }

    #[test]
    fn check_rejects_double_paid() {
        let spec = fixtures::flexible_purchase();
        let state = buyer_state();
        let forms = enabled_forms(&state, "B", &spec, "s").unwrap();
        let p = forms.messages("Payment").next().unwrap();
        let errs = check(&[p.bind([("paid", "10")]), p.bind([("paid", "11")])], &state).unwrap_err();
        assert!(errs.iter().any(|v| v.to_string() == "conflicting out binding: paid"), "{errs:?}");
    }

    #[test]
    fn check_rejects_stale_forms() {
        let spec = fixtures::flexible_purchase();
        let mut state = buyer_state();
        let forms = enabled_forms(&state, "B", &spec, "s").unwrap();
        let p = forms.messages("Payment").next().unwrap();
        // Another decision sends Payment(2) between snapshot and check.
        state.insert(p.bind([("paid", "7")]).instance(), Direction::Sent).unwrap();
        let errs = check(&[p.bind([("paid", "10")])], &state).unwrap_err();
        assert!(matches!(errs[0], Violation::StaleForm(_)), "{errs:?}");
    }

    #[test]
    fn check_reports_missing_unexpected_empty_and_taken_keys() {
        let spec = fixtures::flexible_purchase();
        let state = buyer_state();
        let forms = enabled_forms(&state, "B", &spec, "s").unwrap();
        let req = forms.messages("Request").next().unwrap();
        let errs = check(&[req.bind([("ID", "3"), ("colour", "red")])], &state).unwrap_err();
        assert!(errs.contains(&Violation::MissingBinding { message: "Request".into(), parameter: "item".into() }));
        assert!(errs.contains(&Violation::UnexpectedBinding { message: "Request".into(), parameter: "colour".into() }));
        let errs = check(&[req.bind([("ID", "3"), ("item", "")])], &state).unwrap_err();
        assert!(matches!(errs[0], Violation::EmptyBinding { .. }));
        let errs = check(&[req.bind([("ID", "1"), ("item", "fig")])], &state).unwrap_err();
        assert!(errs.contains(&Violation::AlreadyBound("ID".into())));
        let big = "x".repeat(MAX_DATAGRAM_BYTES);
        let errs = check(&[req.bind([("ID", "9"), ("item", big.as_str())])], &state).unwrap_err();
        assert!(matches!(errs[0], Violation::Oversize { .. }));
    }

    #[test]
    fn two_fresh_requests_with_one_id_conflict() {
        let spec = fixtures::flexible_purchase();
        let state = LocalState::new(&spec);
        let forms = enabled_forms(&state, "B", &spec, "s").unwrap();
        let req = forms.messages("Request").next().unwrap();
        let ok = [req.bind([("ID", "1"), ("item", "fig")]), req.bind([("ID", "2"), ("item", "fig")])];
        assert_eq!(check(&ok, &state), Ok(()));
        let bad = [req.bind([("ID", "1"), ("item", "fig")]), req.bind([("ID", "1"), ("item", "jam")])];
        assert!(check(&bad, &state).is_err());
    }
}
