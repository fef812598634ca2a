//! Message-level simulation of the distributed and centralized protocols.
//!
//! In the distributed (two-stage) protocol the eNB and its UEs run a
//! synchronous bid / price loop:
//!
//! 1. at iteration `n` the eNB holds one bid `w_i(n)` per UE; if every bid
//!    moved by less than `delta` since `w_i(n-1)` it stops and grants
//!    `r_i = w_i(n) / p(n)`;
//! 2. otherwise it broadcasts `p(n) = sum_i w_i(n) / R`;
//! 3. each UE picks the rate `r_i(n)` maximising `beta_i ln V_i(r) - p(n) r`
//!    and answers with the bid `p(n) r_i(n)`, which becomes `w_i(n+1)`.
//!
//! The robust variant caps each bid step at a fluctuation decay `Δw(n)`.
//! Once the eNB has settled the UE rates each UE splits its rate among its
//! applications internally.
//!
//! In the centralized protocol UEs upload their utility parameters once and
//! the eNB answers each with per-application rate grants.

use std::collections::VecDeque;

use crate::allocator::{centralized_allocate, iura_allocate, ue_best_response, AppSpec, Allocation, Scenario, UeSpec};
use crate::error::{domain, Result};
use crate::utility::Utility;

/// A protocol message between the eNB and a UE.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// UE -> eNB: bid for iteration `iter`.
    Bid { ue: usize, w: f64, iter: usize },
    /// eNB -> all UEs: shadow price of iteration `iter`.
    Price { p: f64, iter: usize },
    /// eNB -> all UEs: bids settled at iteration `iter`.
    Stop { iter: usize, p: f64 },
    /// UE -> eNB: utility parameters of every application.
    ParamsUpload { ue: usize, apps: Vec<AppSpec>, beta: f64 },
    /// eNB -> UE: per-application rates.
    RateGrant { ue: usize, rates: Vec<f64> },
}

/// Bound on the bid step applied by the robust protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecaySpec {
    None,
    /// `Δw(n) = l1 * exp(-n / l2)`.
    Exponential { l1: f64, l2: f64 },
    /// `Δw(n) = l3 / n`.
    Rational { l3: f64 },
}

impl DecaySpec {
    /// Exponential decay with `l1 = 10`, `l2 = 100`. With the default
    /// `delta = 1e-4` the cap falls below `delta` after 1152 iterations.
    pub const DEFAULT_EXPONENTIAL: DecaySpec = DecaySpec::Exponential { l1: 10.0, l2: 100.0 };
    /// Rational decay with `l3 = 10`.
    pub const DEFAULT_RATIONAL: DecaySpec = DecaySpec::Rational { l3: 10.0 };

    /// Step cap at iteration `n >= 1`, or `None` when decay is off.
    pub fn step_cap(&self, n: usize) -> Option<f64> {
        match *self {
            DecaySpec::None => None,
            DecaySpec::Exponential { l1, l2 } => Some(l1 * (-(n as f64) / l2).exp()),
            DecaySpec::Rational { l3 } => Some(l3 / n as f64),
        }
    }

    pub fn is_active(&self) -> bool {
        !matches!(self, DecaySpec::None)
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            DecaySpec::None => Ok(()),
            DecaySpec::Exponential { l1, l2 } if ok(l1) && ok(l2) => Ok(()),
            DecaySpec::Rational { l3 } if ok(l3) => Ok(()),
            other => Err(domain(format!("decay constants must be positive: {other:?}"))),
        }
    }
}

/// Settings of a distributed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Bid-difference termination threshold.
    pub delta: f64,
    pub max_iters: usize,
    pub decay: DecaySpec,
    /// Bid `w_i(1)` every UE sends first.
    pub initial_bid: f64,
    /// Bid `w_i(0)` the eNB compares the first bids against.
    pub prior_bid: f64,
    /// Keep every iteration; otherwise only the last `2 * oscillation_window`.
    pub record_trace: bool,
    pub oscillation_window: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            delta: 1e-4,
            max_iters: 5000,
            decay: DecaySpec::DEFAULT_EXPONENTIAL,
            initial_bid: 1.0,
            prior_bid: 0.0,
            record_trace: true,
            oscillation_window: 50,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(domain(format!("delta must be positive, got {}", self.delta)));
        }
        if self.max_iters == 0 {
            return Err(domain("max_iters must be at least 1"));
        }
        if !(self.initial_bid.is_finite() && self.initial_bid > 0.0) {
            return Err(domain(format!("initial bid must be positive, got {}", self.initial_bid)));
        }
        if !self.prior_bid.is_finite() {
            return Err(domain("prior bid must be finite"));
        }
        if self.oscillation_window == 0 {
            return Err(domain("oscillation window must be at least 1"));
        }
        self.decay.validate()
    }
}

/// How a distributed run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    Oscillating,
    MaxItersExceeded,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::Oscillating => "oscillating",
            RunStatus::MaxItersExceeded => "max-iters",
        }
    }
}

/// One eNB iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub n: usize,
    /// Bids `w_i(n)` held by the eNB.
    pub bids: Vec<f64>,
    /// `p(n) = sum_i w_i(n) / R`.
    pub price: f64,
    /// UE rates: best responses to `p(n)`, or `w_i(n) / p(n)` on the final
    /// row of a converged run.
    pub rates: Vec<f64>,
    /// Unclamped answers `p(n) r_i(n)`; empty on the final converged row.
    pub raw_bids: Vec<f64>,
    /// `Δw(n)` when decay is active.
    pub step_cap: Option<f64>,
}

/// Observable history of a distributed run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterTrace {
    pub budget: f64,
    pub delta: f64,
    pub records: Vec<IterRecord>,
    pub status: RunStatus,
}

impl IterTrace {
    pub fn prices(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.price)
    }
}

/// Result of a bid / price run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    /// Granted UE rates `w_i / p`; present when converged.
    pub ue_rates: Option<Vec<f64>>,
    /// Last shadow price computed by the eNB.
    pub price: f64,
    /// Last bids held by the eNB.
    pub bids: Vec<f64>,
    pub trace: IterTrace,
    pub iterations: usize,
}

/// Two-stage result: the external run plus the internal split.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedOutcome {
    pub eura: RunOutcome,
    /// Per-application allocation priced at the eNB's final shadow price;
    /// `None` unless the external stage converged.
    pub allocation: Option<Allocation>,
    /// Internal price `p_I` of every UE.
    pub internal_prices: Option<Vec<f64>>,
}

/// Oscillation verdict over the tail of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub oscillating: bool,
    /// `max - min` of the price over the examined tail.
    pub amplitude: f64,
}

struct Enb {
    budget: f64,
    delta: f64,
    previous: Vec<f64>,
}

impl Enb {
    /// Collects this iteration's bids and answers with a price or a stop.
    fn on_bids(&mut self, n: usize, bids: &[Message]) -> (Vec<f64>, Message) {
        let current: Vec<f64> = bids
            .iter()
            .map(|m| match m {
                Message::Bid { w, .. } => *w,
                other => unreachable!("eNB expects bids, got {other:?}"),
            })
            .collect();
        let settled = current
            .iter()
            .zip(&self.previous)
            .all(|(w, prev)| (w - prev).abs() < self.delta);
        let p = current.iter().sum::<f64>() / self.budget;
        self.previous.clone_from(&current);
        let reply = if settled {
            Message::Stop { iter: n, p }
        } else {
            Message::Price { p, iter: n }
        };
        (current, reply)
    }
}

struct UeAgent<'a> {
    index: usize,
    spec: &'a UeSpec,
    bid: f64,
}

impl UeAgent<'_> {
    /// Answers `p(n)` with a bid for iteration `n + 1`. Returns the best
    /// response rate, the raw bid and the bid message actually sent.
    fn on_price(&mut self, p: f64, n: usize, cap: Option<f64>) -> Result<(f64, f64, Message)> {
        let (rate, _) = ue_best_response(self.spec, p)?;
        let raw = p * rate;
        let step = raw - self.bid;
        let sent = match cap {
            Some(cap) if step.abs() > cap => self.bid + cap.copysign(step),
            _ => raw,
        };
        self.bid = sent;
        Ok((
            rate,
            raw,
            Message::Bid {
                ue: self.index,
                w: sent,
                iter: n + 1,
            },
        ))
    }
}

fn run_eura(s: &Scenario, cfg: &SimConfig, decay: DecaySpec) -> Result<RunOutcome> {
    cfg.validate()?;
    let m = s.ues().len();
    let keep = 2 * cfg.oscillation_window;
    let mut records: VecDeque<IterRecord> = VecDeque::new();
    let push = |records: &mut VecDeque<IterRecord>, rec: IterRecord| {
        records.push_back(rec);
        if !cfg.record_trace && records.len() > keep {
            records.pop_front();
        }
    };

    let mut enb = Enb {
        budget: s.budget(),
        delta: cfg.delta,
        previous: vec![cfg.prior_bid; m],
    };
    let mut ues: Vec<UeAgent> = s
        .ues()
        .iter()
        .enumerate()
        .map(|(index, spec)| UeAgent {
            index,
            spec,
            bid: cfg.initial_bid,
        })
        .collect();
    let mut inbox: Vec<Message> = ues
        .iter()
        .map(|ue| Message::Bid {
            ue: ue.index,
            w: ue.bid,
            iter: 1,
        })
        .collect();

    let mut last_price = f64::NAN;
    let mut last_bids = vec![cfg.initial_bid; m];
    for n in 1..=cfg.max_iters {
        let (bids, reply) = enb.on_bids(n, &inbox);
        match reply {
            Message::Stop { p, .. } => {
                let rates: Vec<f64> = bids.iter().map(|w| w / p).collect();
                push(
                    &mut records,
                    IterRecord {
                        n,
                        bids: bids.clone(),
                        price: p,
                        rates: rates.clone(),
                        raw_bids: Vec::new(),
                        step_cap: None,
                    },
                );
                return Ok(RunOutcome {
                    status: RunStatus::Converged,
                    ue_rates: Some(rates),
                    price: p,
                    bids,
                    trace: IterTrace {
                        budget: s.budget(),
                        delta: cfg.delta,
                        records: records.into(),
                        status: RunStatus::Converged,
                    },
                    iterations: n,
                });
            }
            Message::Price { p, .. } => {
                let cap = decay.step_cap(n);
                let mut rates = Vec::with_capacity(m);
                let mut raw_bids = Vec::with_capacity(m);
                inbox.clear();
                for ue in ues.iter_mut() {
                    let (rate, raw, msg) = ue.on_price(p, n, cap)?;
                    rates.push(rate);
                    raw_bids.push(raw);
                    inbox.push(msg);
                }
                last_price = p;
                last_bids.clone_from(&bids);
                push(
                    &mut records,
                    IterRecord {
                        n,
                        bids,
                        price: p,
                        rates,
                        raw_bids,
                        step_cap: cap,
                    },
                );
            }
            _ => unreachable!(),
        }
    }

    let mut trace = IterTrace {
        budget: s.budget(),
        delta: cfg.delta,
        records: records.into(),
        status: RunStatus::MaxItersExceeded,
    };
    let status = match detect_oscillation(&trace, cfg.oscillation_window) {
        Ok(o) if o.oscillating => RunStatus::Oscillating,
        _ => RunStatus::MaxItersExceeded,
    };
    trace.status = status;
    Ok(RunOutcome {
        status,
        ue_rates: None,
        price: last_price,
        bids: last_bids,
        trace,
        iterations: cfg.max_iters,
    })
}

/// Bid / price loop without fluctuation decay; `cfg.decay` is ignored.
pub fn run_eura_basic(s: &Scenario, cfg: &SimConfig) -> Result<RunOutcome> {
    run_eura(s, cfg, DecaySpec::None)
}

/// Bid / price loop with bid steps capped by `cfg.decay`.
pub fn run_eura_robust(s: &Scenario, cfg: &SimConfig) -> Result<RunOutcome> {
    if !cfg.decay.is_active() {
        return Err(domain("robust run needs an exponential or rational decay"));
    }
    run_eura(s, cfg, cfg.decay)
}

/// Robust external stage followed by the internal split on every UE.
pub fn run_distributed(s: &Scenario, cfg: &SimConfig) -> Result<DistributedOutcome> {
    let eura = run_eura_robust(s, cfg)?;
    split_internally(s, eura)
}

/// Basic external stage followed by the internal split on every UE.
pub fn run_distributed_basic(s: &Scenario, cfg: &SimConfig) -> Result<DistributedOutcome> {
    let eura = run_eura_basic(s, cfg)?;
    split_internally(s, eura)
}

fn split_internally(s: &Scenario, eura: RunOutcome) -> Result<DistributedOutcome> {
    let Some(ue_rates) = eura.ue_rates.as_ref() else {
        return Ok(DistributedOutcome {
            eura,
            allocation: None,
            internal_prices: None,
        });
    };
    let mut rates = Vec::with_capacity(ue_rates.len());
    let mut prices = Vec::with_capacity(ue_rates.len());
    for (ue, &r) in s.ues().iter().zip(ue_rates) {
        let (split, p_internal) = iura_allocate(ue, r)?;
        rates.push(split);
        prices.push(p_internal);
    }
    let allocation = Allocation::from_rates(rates, eura.price);
    Ok(DistributedOutcome {
        eura,
        allocation: Some(allocation),
        internal_prices: Some(prices),
    })
}

/// One upload / grant round: UEs send their parameters, the eNB solves the
/// one-stage problem and grants per-application rates.
pub fn run_centralized_protocol(s: &Scenario) -> Result<(Allocation, Vec<Message>)> {
    let mut log: Vec<Message> = s
        .ues()
        .iter()
        .enumerate()
        .map(|(ue, spec)| Message::ParamsUpload {
            ue,
            apps: spec.apps().to_vec(),
            beta: spec.beta(),
        })
        .collect();

    let mut uploaded = Vec::with_capacity(log.len());
    for msg in &log {
        if let Message::ParamsUpload { apps, beta, .. } = msg {
            uploaded.push(UeSpec::new(apps.clone(), *beta)?);
        }
    }
    let (allocation, _) = centralized_allocate(&Scenario::new(uploaded, s.budget())?)?;

    log.extend(allocation.rates.iter().enumerate().map(|(ue, rates)| Message::RateGrant {
        ue,
        rates: rates.clone(),
    }));
    Ok((allocation, log))
}

/// Looks for a sustained price oscillation over the last `2 * window`
/// iterations: an amplitude above `10 * delta` together with at least
/// `window / 2` sign changes of the price step.
pub fn detect_oscillation(trace: &IterTrace, window: usize) -> Result<Oscillation> {
    let need = 2 * window;
    if window == 0 || trace.records.len() < need {
        return Err(domain(format!(
            "trace of {} iterations is shorter than twice the window {window}",
            trace.records.len()
        )));
    }
    let tail: Vec<f64> = trace.records[trace.records.len() - need..].iter().map(|r| r.price).collect();
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let amplitude = max - min;

    let steps: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    let alternations = steps.windows(2).filter(|s| s[0] * s[1] < 0.0).count();

    Ok(Oscillation {
        oscillating: amplitude > 10.0 * trace.delta && 2 * alternations >= window,
        amplitude,
    })
}

/// Price bound `a d / (1 - d) + a / 2` of the sigmoidal application with the
/// largest inflection rate (first one on ties). A converged run with an
/// abundant budget settles below it.
pub fn steady_state_price_bound(s: &Scenario) -> Result<f64> {
    let mut pick: Option<(f64, f64, f64)> = None;
    for app in s.ues().iter().flat_map(|ue| ue.apps()) {
        if let Utility::Sigmoidal(sig) = app.utility() {
            if pick.is_none_or(|(b, _, _)| sig.b() > b) {
                pick = Some((sig.b(), sig.a(), sig.d()));
            }
        }
    }
    let (_, a, d) = pick.ok_or_else(|| domain("scenario has no sigmoidal application"))?;
    Ok(a * d / (1.0 - d) + a / 2.0)
}
