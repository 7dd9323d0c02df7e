//! One line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use chrono::Utc;
use iop::clock::VirtualClock;
use iop::enactment::{enabled_events, enumerate_all_paths, is_complete, is_maximal, Event, Path};
use iop::fixtures;
use iop::runtime::{enabled_forms, Direction, LocalState, MessageInstance, Query, Reception};
use iop::simulation::Simulation;
use iop::transport::{SimConfig, Transport, UdpTransport};
use iop::verify::{check_liveness, check_safety, LIVENESS_FAILURE, SAFETY_FAILURE};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{count_linear_extensions, exhaustive_verdicts, purchase, random_protocol, scenario};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn verdict_reproduction() -> Outcome {
    let spec = fixtures::flexible_purchase();
    let start = Instant::now();
    let live = check_liveness(&spec).map_err(|e| e.to_string())?;
    let safe = check_safety(&spec).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    for v in [&live, &safe] {
        ensure!(v.holds && v.checked == 7 && v.maximal_paths == 1, "{}", v.transcript());
    }
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("{} / {} in {elapsed:?}", live.transcript(), safe.transcript()))
}

fn counterexample_reproduction() -> Outcome {
    let spec = fixtures::buggy_purchase();
    let live = check_liveness(&spec).map_err(|e| e.to_string())?;
    ensure!(!live.holds && live.reason.as_deref() == Some(LIVENESS_FAILURE), "{}", live.transcript());
    let path = live.counterexample_path.clone().ok_or("no liveness path")?;
    enabled_events(&spec, &path).map_err(|e| format!("liveness path does not replay: {e}"))?;
    ensure!(is_maximal(&spec, &path).unwrap(), "{path} is not maximal");
    ensure!(!is_complete(&spec, &path).unwrap(), "{path} is complete");

    let safe = check_safety(&spec).map_err(|e| e.to_string())?;
    ensure!(!safe.holds && safe.reason.as_deref() == Some(SAFETY_FAILURE), "{}", safe.transcript());
    ensure!(safe.offending_parameter.as_deref() == Some("paid"), "{}", safe.transcript());
    let spath = safe.counterexample_path.clone().ok_or("no safety path")?;
    enabled_events(&spec, &spath).map_err(|e| format!("safety path does not replay: {e}"))?;
    ensure!(
        spath.contains(&Event::emit("B", "Payment")) && spath.contains(&Event::emit("S", "Shipment")),
        "{spath}"
    );
    Ok(format!("live path {path}; safe path {spath}, parameter paid"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut specs = vec![fixtures::flexible_purchase(), fixtures::buggy_purchase()];
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    specs.extend((0..200).map(|_| random_protocol(&mut rng)));
    let (mut unsafe_, mut dead) = (0, 0);
    for spec in &specs {
        let (safe, live) = exhaustive_verdicts(spec);
        let s = check_safety(spec).map_err(|e| e.to_string())?;
        let l = check_liveness(spec).map_err(|e| e.to_string())?;
        ensure!(s.holds == safe, "safety disagrees on\n{}", iop::format_protocol(spec));
        ensure!(l.holds == live, "liveness disagrees on\n{}", iop::format_protocol(spec));
        unsafe_ += usize::from(!safe);
        dead += usize::from(!live);
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!("{} protocols ({unsafe_} unsafe, {dead} not live) agree in {elapsed:?}", specs.len()))
}

fn enumeration_fidelity() -> Outcome {
    // bR, sR, bP, sP, sS, bS
    let order = [(0, 1), (0, 2), (2, 3), (1, 4), (4, 5)];
    let extensions = count_linear_extensions(6, &order);
    let stats = enumerate_all_paths(&fixtures::flexible_purchase()).map_err(|e| e.to_string())?;
    let expected = [
        "(B!Request, S?Request, S!Shipment, B?Shipment, B!Payment, S?Payment)",
        "(B!Request, B!Payment, S?Request, S?Payment, S!Shipment, B?Shipment)",
        "(B!Request, S?Request, B!Payment, S!Shipment, S?Payment, B?Shipment)",
    ];
    for e in expected {
        let p: Path = e.parse().unwrap();
        ensure!(stats.maximal_paths.contains(&p), "enactment {e} missing");
    }
    let got = (stats.maximal_paths.len(), stats.longest);
    ensure!(
        got == (10, 6) && stats.maximal_paths.len() == extensions,
        "maximal paths {}, longest {}, linear extensions {extensions}; expected 10 / 6 / 10 \
         (the enablement rule also lets S ship after S?Payment alone)",
        got.0,
        got.1
    );
    Ok(format!("{} maximal, longest {}, matches {extensions} linear extensions", got.0, got.1))
}

fn inst(message: &str, bindings: &[(&str, &str)]) -> MessageInstance {
    MessageInstance::new("Flexible Purchase", message, "s1", bindings.iter().copied())
}

fn buyer_forms() -> Outcome {
    let spec = fixtures::flexible_purchase();
    let mut state = LocalState::new(&spec);
    for m in [
        inst("Request", &[("ID", "1"), ("item", "fig")]),
        inst("Request", &[("ID", "2"), ("item", "jam")]),
        inst("Payment", &[("ID", "1"), ("item", "fig"), ("paid", "10")]),
    ] {
        state.insert(m, Direction::Sent).map_err(|e| e.to_string())?;
    }
    let forms = enabled_forms(&state, "B", &spec, "s1").map_err(|e| e.to_string())?;
    let shown: Vec<_> = forms.iter().map(ToString::to_string).collect();
    ensure!(shown == ["Request(ID?, item?)", "Payment(ID=2, item=jam, paid?)"], "{shown:?}");
    ensure!(forms.iter().next().unwrap().is_fresh(), "Request form is not fresh");
    Ok(shown.join(", "))
}

fn order_independence() -> Outcome {
    let base = [
        inst("Request", &[("ID", "1"), ("item", "fig")]).encode(),
        inst("Payment", &[("ID", "1"), ("item", "fig"), ("paid", "10")]).encode(),
        inst("Request", &[("ID", "2"), ("item", "jam")]).encode(),
    ];
    let opts = purchase::Options { policies: false, answer_reminders: None, days: 0 };
    let noon = VirtualClock::midday();
    let deliver = |order: &[Vec<u8>]| {
        let mut seller = purchase::agent("S", common::net::Capture::new("seller"), purchase::peers(), &opts);
        seller.start(iop::clock::Clock::now(&noon));
        let r: Vec<_> = order
            .iter()
            .map(|d| seller.on_datagram(d, "buyer".into(), iop::clock::Clock::now(&noon)))
            .collect();
        (seller.state().clone(), r)
    };
    let (reference, _) = deliver(&base);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut dups_seen = 0;
    for i in 0..1000 {
        let mut order = base.to_vec();
        for _ in 0..rng.gen_range(0..=3) {
            order.push(base.choose(&mut rng).unwrap().clone());
        }
        order.shuffle(&mut rng);
        let (state, receptions) = deliver(&order);
        ensure!(state == reference, "run {i}: final state differs");
        let dups = receptions.iter().filter(|r| matches!(r, Reception::DuplicateIgnored(_))).count();
        ensure!(dups == order.len() - base.len(), "run {i}: {dups} duplicates ignored of {}", order.len() - base.len());
        dups_seen += dups;
    }
    Ok(format!("1000 orders, {} instances each, {dups_seen} duplicates ignored", reference.len()))
}

fn end_to_end_over_loss() -> Outcome {
    let start = Instant::now();
    let runs = 100;
    let rate = |opts: &purchase::Options| {
        let mut ok = 0;
        let mut max_tries = 0;
        for seed in 0..runs {
            let sim = purchase::simulate(0.5, 0.1, seed, opts);
            if purchase::complete(sim.agent("B").unwrap().state(), sim.agent("S").unwrap().state()) {
                ok += 1;
            }
            max_tries = max_tries.max(purchase::max_retransmissions(&sim));
        }
        (ok, max_tries)
    };
    let (plain, _) = rate(&purchase::Options { answer_reminders: None, ..purchase::Options::default() });
    let (ok, max_tries) = rate(&purchase::Options::default());
    let elapsed = start.elapsed();
    let detail = format!(
        "{ok}/{runs} complete with reminder replies ({plain}/{runs} with policies alone), \
         max retransmissions per instance {max_tries}, {elapsed:?}"
    );
    ensure!(max_tries <= 5, "{detail}");
    ensure!(elapsed < Duration::from_secs(30), "{detail}");
    ensure!(ok * 100 >= 95 * runs, "{detail}; nothing acknowledges Payment, so it is re-sent only when a Shipment reminder gets through");
    Ok(detail)
}

fn concurrent_emission() -> Outcome {
    let opts = purchase::Options { policies: false, answer_reminders: None, days: 0 };
    let sim = Simulation::new(SimConfig::perfect(8), VirtualClock::midday());
    let mut buyer = purchase::agent("B", sim.bind("buyer"), purchase::peers(), &opts);
    let mut seller = purchase::agent("S", sim.bind("seller"), purchase::peers(), &opts);
    let now = iop::clock::Clock::now(sim.clock());
    scenario::crossing(&mut buyer, &mut seller, now, |a, _| {
        a.poll(now);
    });
    crossing_outcome(&buyer, &seller)
}

fn crossing_outcome<T: Transport>(buyer: &iop::runtime::Agent<T>, seller: &iop::runtime::Agent<T>) -> Outcome {
    let (b, s) = (scenario::events(buyer.log(), "B"), scenario::events(seller.log(), "S"));
    ensure!(
        Path::from(b.clone()).to_string() == "(B!Request, B!Payment, B?Shipment)"
            && Path::from(s.clone()).to_string() == "(S?Request, S!Shipment, S?Payment)",
        "histories {b:?} / {s:?}"
    );
    ensure!(buyer.state().len() == 3 && seller.state().len() == 3, "states hold {} and {}", buyer.state().len(), seller.state().len());
    for m in ["Request", "Shipment", "Payment"] {
        ensure!(buyer.state().messages(&Query::message(m)).count() == 1, "buyer lacks {m}");
        ensure!(seller.state().messages(&Query::message(m)).count() == 1, "seller lacks {m}");
    }
    let buyer_view: Vec<_> = buyer.state().instances().map(|(m, _)| m.clone()).collect();
    let seller_view: Vec<_> = seller.state().instances().map(|(m, _)| m.clone()).collect();
    ensure!(buyer_view == seller_view, "agents disagree on instance contents");
    Ok("Payment and Shipment crossed; both agents hold Request, Shipment, Payment".into())
}

fn udp_smoke() -> Outcome {
    let bind = || UdpTransport::bind("127.0.0.1:0").map_err(|e| e.to_string());
    let (bt, st) = (bind()?, bind()?);
    let peers: std::collections::BTreeMap<_, _> =
        [("B".to_string(), bt.local().clone()), ("S".to_string(), st.local().clone())].into();
    let opts = purchase::Options { policies: false, answer_reminders: None, days: 0 };
    let mut buyer = purchase::agent("B", bt, peers.clone(), &opts);
    let mut seller = purchase::agent("S", st, peers, &opts);
    let now = Utc::now();
    let mut timed_out = None;
    scenario::crossing(&mut buyer, &mut seller, now, |a, m| {
        let deadline = Instant::now() + Duration::from_secs(5);
        while a.state().messages(&Query::message(m)).next().is_none() {
            if Instant::now() > deadline {
                timed_out = Some(m.to_string());
                return;
            }
            a.poll(now);
            std::thread::sleep(Duration::from_millis(1));
        }
    });
    if let Some(m) = timed_out {
        return Err(format!("{m} never arrived over UDP"));
    }
    crossing_outcome(&buyer, &seller).map(|d| format!("{d} (UDP loopback)"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("verdict reproduction", verdict_reproduction),
        ("counterexample reproduction", counterexample_reproduction),
        ("oracle equivalence", oracle_equivalence),
        ("enumeration fidelity", enumeration_fidelity),
        ("enabled forms of the buyer state", buyer_forms),
        ("order independence and idempotence", order_independence),
        ("end-to-end over loss", end_to_end_over_loss),
        ("concurrent emission", concurrent_emission),
        ("UDP smoke test", udp_smoke),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
