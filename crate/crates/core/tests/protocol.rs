mod common;

use hybrid_ra::allocator::{centralized_allocate, ue_best_response};
use hybrid_ra::protocol::{
    run_centralized_protocol, run_distributed, run_eura_basic, run_eura_robust, DecaySpec, Message, RunStatus,
    SimConfig,
};
use hybrid_ra::scenario::table1;
use hybrid_ra::sweep::trace_csv;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn runs_are_deterministic() {
    let s = table1().to_scenario(Some(40.0)).unwrap();
    let cfg = SimConfig::default();
    assert_eq!(run_distributed(&s, &cfg).unwrap(), run_distributed(&s, &cfg).unwrap());
    assert_eq!(run_eura_basic(&s, &cfg).unwrap(), run_eura_basic(&s, &cfg).unwrap());
}

#[test]
fn price_is_bid_sum_over_budget() {
    for budget in [20.0, 200.0] {
        let s = table1().to_scenario(Some(budget)).unwrap();
        let out = run_eura_robust(&s, &SimConfig::default()).unwrap();
        for rec in &out.trace.records {
            let sum: f64 = rec.bids.iter().sum();
            assert!(rel(rec.price, sum / budget) < 1e-12, "n={}", rec.n);
            for (w, r) in rec.raw_bids.iter().zip(&rec.rates) {
                assert!(rel(*w, rec.price * r) < 1e-12);
            }
        }
    }
}

#[test]
fn rates_are_best_responses() {
    let s = table1().to_scenario(Some(60.0)).unwrap();
    let out = run_eura_basic(&s, &SimConfig::default()).unwrap();
    for rec in out.trace.records.iter().filter(|r| !r.raw_bids.is_empty()).take(20) {
        for (ue, r) in s.ues().iter().zip(&rec.rates) {
            assert_eq!(ue_best_response(ue, rec.price).unwrap().0, *r);
        }
    }
}

#[test]
fn robust_steps_respect_the_cap() {
    let s = table1().to_scenario(Some(20.0)).unwrap();
    let cfg = SimConfig::default();
    let out = run_eura_robust(&s, &cfg).unwrap();
    assert_eq!(out.status, RunStatus::Converged);
    let recs = &out.trace.records;
    for pair in recs.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        let cap = cur.step_cap.unwrap();
        assert!(rel(cap, 10.0 * (-(cur.n as f64) / 100.0).exp()) < 1e-12);
        for i in 0..cur.bids.len() {
            let raw_step = cur.raw_bids[i] - cur.bids[i];
            let want = cur.bids[i] + raw_step.clamp(-cap, cap);
            assert!((next.bids[i] - want).abs() <= 4.0 * f64::EPSILON * want.abs().max(1.0));
        }
    }
}

#[test]
fn converged_bids_settle_within_delta() {
    let s = table1().to_scenario(Some(200.0)).unwrap();
    let cfg = SimConfig::default();
    let out = run_eura_basic(&s, &cfg).unwrap();
    assert_eq!(out.status, RunStatus::Converged);
    let recs = &out.trace.records;
    let (prev, last) = (&recs[recs.len() - 2], &recs[recs.len() - 1]);
    for (a, b) in prev.bids.iter().zip(&last.bids) {
        assert!((a - b).abs() < cfg.delta);
    }
    let granted: f64 = out.ue_rates.unwrap().iter().sum();
    assert!(rel(granted, 200.0) < 1e-12);
}

#[test]
fn basic_run_ignores_decay_and_robust_requires_it() {
    let s = table1().to_scenario(Some(200.0)).unwrap();
    let none = SimConfig {
        decay: DecaySpec::None,
        ..SimConfig::default()
    };
    assert_eq!(
        run_eura_basic(&s, &none).unwrap(),
        run_eura_basic(&s, &SimConfig::default()).unwrap()
    );
    assert!(run_eura_robust(&s, &none).is_err());
}

#[test]
fn distributed_price_tracks_centralized() {
    let s = table1().to_scenario(Some(200.0)).unwrap();
    let (central, _) = centralized_allocate(&s).unwrap();
    let out = run_distributed(&s, &SimConfig::default()).unwrap();
    assert!(rel(out.eura.price, central.shadow_price) < 1e-3);
    for (p_i, ue) in out.internal_prices.unwrap().iter().zip(s.ues()) {
        assert!(rel(p_i * ue.beta(), out.eura.price) < 1e-2);
    }
}

#[test]
fn centralized_protocol_round() {
    let s = table1().to_scenario(Some(105.0)).unwrap();
    let (alloc, log) = run_centralized_protocol(&s).unwrap();
    let uploads = log.iter().filter(|m| matches!(m, Message::ParamsUpload { .. })).count();
    let grants: Vec<&Vec<f64>> = log
        .iter()
        .filter_map(|m| match m {
            Message::RateGrant { rates, .. } => Some(rates),
            _ => None,
        })
        .collect();
    assert_eq!((uploads, grants.len()), (6, 6));
    let (direct, _) = centralized_allocate(&s).unwrap();
    assert_eq!(alloc, direct);
    for (g, r) in grants.iter().zip(&direct.rates) {
        assert_eq!(*g, r);
    }
}

#[test]
fn short_trace_keeps_tail_only() {
    let s = table1().to_scenario(Some(20.0)).unwrap();
    let cfg = SimConfig {
        record_trace: false,
        ..SimConfig::default()
    };
    let short = run_eura_basic(&s, &cfg).unwrap();
    let full = run_eura_basic(&s, &SimConfig::default()).unwrap();
    assert_eq!(short.trace.records.len(), 2 * cfg.oscillation_window);
    assert_eq!(short.status, full.status);
    assert_eq!(short.trace.records[..], full.trace.records[full.trace.records.len() - 100..]);
}

#[test]
fn trace_csv_price_matches_bids() {
    let s = table1().to_scenario(Some(90.0)).unwrap();
    let out = run_eura_robust(&s, &SimConfig::default()).unwrap();
    let text = trace_csv(&out.trace);
    let mut rows = text.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect::<Vec<_>>()).peekable();
    while rows.peek().is_some() {
        let group: Vec<Vec<String>> = (0..6).map(|_| rows.next().unwrap()).collect();
        let p: f64 = group[0][1].parse().unwrap();
        let sum: f64 = group.iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
        assert!(rel(p, sum / 90.0) < 1e-12);
        assert!(group.iter().all(|r| r[0] == group[0][0]));
    }
}
